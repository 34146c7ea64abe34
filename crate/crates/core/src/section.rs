//! Sections of the formal Weyl bundle over one chart.
//!
//! A section is a finite sum of terms `c(x) * hbar^h * u^m * y^alpha *
//! dx^S * theta^T` where `c(x)` lives in the chart's coefficient ring,
//! `y^alpha` is a monomial in the fibre variables, `dx^S` and `theta^T`
//! are ascending wedge blocks of odd generators, and `u` is the even
//! equivariant parameter. Exponents of `hbar` and `u` may be negative.
//!
//! Canonical term order puts the whole dx block before the whole theta
//! block, each internally ascending. Products pick up the Koszul sign of
//! sorting the concatenation back into that order. No zero coefficients
//! are ever stored, so equality of maps is equality of sections.
//!
//! Grading bookkeeping:
//! * weight of a term = 2 * (hbar exponent) + (total y degree);
//! * cohomological degree = |dx| - |theta| + 2 * (u exponent);
//! * parity = (|dx| + |theta|) mod 2.
//!
//! Every section carries a [`TruncationPolicy`]; binary operations insist
//! the two policies agree (callers move between stages explicitly with
//! [`Section::with_policy`]) and truncate their result, so closed
//! computations stay inside the stated caps.

use crate::coeff::{Coefficient, RingKind};
use crate::error::{Error, Result};
use crate::jet::{exps_degree, Exps};
use crate::rational::Rat;
use std::collections::BTreeMap;
use std::fmt;

/// Caps applied after every operation.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub struct TruncationPolicy {
    /// Maximum weight 2h + |y| kept.
    pub weight_max: i64,
    /// Maximum x-degree kept in jet coefficients (ignored for Fourier).
    pub x_degree_max: u32,
    /// Maximum hbar exponent kept.
    pub hbar_max: i64,
    /// Lowest u exponent kept.
    pub u_min: i64,
    /// Highest u exponent kept.
    pub u_max: i64,
}

impl TruncationPolicy {
    /// Standard policy: hbar capped at floor(weight_max / 2), generous
    /// symmetric u window.
    pub fn new(weight_max: i64, x_degree_max: u32) -> Self {
        TruncationPolicy {
            weight_max,
            x_degree_max,
            hbar_max: weight_max.div_euclid(2),
            u_min: -16,
            u_max: 16,
        }
    }

    pub fn with_hbar_max(mut self, hbar_max: i64) -> Self {
        self.hbar_max = hbar_max;
        self
    }

    pub fn with_u_range(mut self, u_min: i64, u_max: i64) -> Self {
        self.u_min = u_min;
        self.u_max = u_max;
        self
    }

    /// Headroom bump: raise the weight cap by `dw` and the hbar cap by `dh`
    /// (x-degree and u window unchanged).
    pub fn bumped(mut self, dw: i64, dh: i64) -> Self {
        self.weight_max += dw;
        self.hbar_max += dh;
        self
    }
}

/// Key of one term: everything except the x-dependent coefficient.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
pub struct TermKey {
    /// hbar exponent (may be negative).
    pub hbar: i64,
    /// u exponent (may be negative).
    pub u: i64,
    /// y exponents, length = `y_dim` of the owning section.
    pub y: Exps,
    /// Ascending dx wedge block as a bitmask (bit i-1 = dx^i present).
    pub dx: u64,
    /// Ascending theta wedge block as a bitmask.
    pub theta: u64,
}

impl TermKey {
    pub fn scalar(y_dim: usize) -> Self {
        TermKey {
            hbar: 0,
            u: 0,
            y: vec![0; y_dim],
            dx: 0,
            theta: 0,
        }
    }

    pub fn y_degree(&self) -> i64 {
        exps_degree(&self.y) as i64
    }

    pub fn dx_degree(&self) -> u32 {
        self.dx.count_ones()
    }

    pub fn theta_degree(&self) -> u32 {
        self.theta.count_ones()
    }

    /// 2h + |y|.
    pub fn weight(&self) -> i64 {
        2 * self.hbar + self.y_degree()
    }

    /// |dx| - |theta| + 2u.
    pub fn cohomological_degree(&self) -> i64 {
        self.dx_degree() as i64 - self.theta_degree() as i64 + 2 * self.u
    }

    /// (|dx| + |theta|) mod 2.
    pub fn parity(&self) -> u8 {
        ((self.dx_degree() + self.theta_degree()) % 2) as u8
    }
}

/// Sign of merging two ascending index blocks (bitmasks) into one ascending
/// block, with `a`'s generators written first. `None` when they overlap.
fn merge_sign(a: u64, b: u64) -> Option<i8> {
    if a & b != 0 {
        return None;
    }
    // Count inversions: pairs (i in a, j in b) with j < i.
    let mut inversions = 0u32;
    let mut bb = b;
    while bb != 0 {
        let j = bb.trailing_zeros();
        // Generators of `a` strictly above j must jump over b's generator j.
        let above = (a >> (j + 1)).count_ones();
        inversions += above;
        bb &= bb - 1;
    }
    Some(if inversions % 2 == 0 { 1 } else { -1 })
}

/// Sign of inserting single generator `i` (0-based bit) at the front of
/// ascending block `mask`, then resorting. `None` if already present.
fn insert_front_sign(i: u32, mask: u64) -> Option<i8> {
    merge_sign(1u64 << i, mask)
}

/// Position-based sign for removing generator `i` from ascending block
/// `mask` by contracting from the left: (-1)^(number of generators below i).
/// `None` if absent.
fn remove_sign(i: u32, mask: u64) -> Option<i8> {
    if mask & (1u64 << i) == 0 {
        return None;
    }
    let below = (mask & ((1u64 << i) - 1)).count_ones();
    Some(if below % 2 == 0 { 1 } else { -1 })
}

/// A truncated section of the Weyl bundle (tensors and equivariant forms
/// included) over one chart.
#[derive(Clone, PartialEq, Eq)]
pub struct Section {
    /// Number of base coordinates 2n; dx/theta indices run 1..=dim.
    pub(crate) dim: usize,
    /// Number of y variables. Equals `dim` except inside the graph
    /// contraction engine, which widens to one y block per vertex.
    pub(crate) y_dim: usize,
    pub(crate) ring: RingKind,
    pub(crate) policy: TruncationPolicy,
    pub(crate) terms: BTreeMap<TermKey, Coefficient>,
}

impl Section {
    pub fn zero(dim: usize, ring: RingKind, policy: TruncationPolicy) -> Self {
        Section {
            dim,
            y_dim: dim,
            ring,
            policy,
            terms: BTreeMap::new(),
        }
    }

    pub(crate) fn zero_widened(
        dim: usize,
        y_dim: usize,
        ring: RingKind,
        policy: TruncationPolicy,
    ) -> Self {
        Section {
            dim,
            y_dim,
            ring,
            policy,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(dim: usize, ring: RingKind, policy: TruncationPolicy, c: Coefficient) -> Self {
        let mut s = Section::zero(dim, ring, policy);
        s.insert(TermKey::scalar(dim), c);
        s
    }

    pub fn one(dim: usize, ring: RingKind, policy: TruncationPolicy) -> Self {
        Section::scalar(dim, ring, policy, Coefficient::one(ring, dim))
    }

    pub fn constant(dim: usize, ring: RingKind, policy: TruncationPolicy, r: Rat) -> Self {
        Section::scalar(dim, ring, policy, Coefficient::from_rat(ring, dim, r))
    }

    fn generator(dim: usize, ring: RingKind, policy: TruncationPolicy, key: TermKey) -> Self {
        let mut s = Section::zero(dim, ring, policy);
        s.insert(key, Coefficient::one(ring, dim));
        s
    }

    /// Fibre variable y^i, 1-based.
    pub fn y(dim: usize, ring: RingKind, policy: TruncationPolicy, i: usize) -> Result<Self> {
        check_index(i, dim)?;
        let mut key = TermKey::scalar(dim);
        key.y[i - 1] = 1;
        Ok(Section::generator(dim, ring, policy, key))
    }

    /// Base one-form dx^i, 1-based.
    pub fn dx(dim: usize, ring: RingKind, policy: TruncationPolicy, i: usize) -> Result<Self> {
        check_index(i, dim)?;
        let mut key = TermKey::scalar(dim);
        key.dx = 1u64 << (i - 1);
        Ok(Section::generator(dim, ring, policy, key))
    }

    /// Odd fibre generator theta^i, 1-based.
    pub fn theta(dim: usize, ring: RingKind, policy: TruncationPolicy, i: usize) -> Result<Self> {
        check_index(i, dim)?;
        let mut key = TermKey::scalar(dim);
        key.theta = 1u64 << (i - 1);
        Ok(Section::generator(dim, ring, policy, key))
    }

    /// hbar^k.
    pub fn hbar_pow(dim: usize, ring: RingKind, policy: TruncationPolicy, k: i64) -> Self {
        let mut key = TermKey::scalar(dim);
        key.hbar = k;
        Section::generator(dim, ring, policy, key)
    }

    /// u^k.
    pub fn u_pow(dim: usize, ring: RingKind, policy: TruncationPolicy, k: i64) -> Self {
        let mut key = TermKey::scalar(dim);
        key.u = k;
        Section::generator(dim, ring, policy, key)
    }

    /// Parse a section literal. Terms are separated by standalone `+` or
    /// `-` tokens; each term is a whitespace-separated product of atoms:
    /// a rational (`2`, `-1/3`), `hbar` or `hbar^k`, `u` or `u^k`,
    /// `yN` or `yN^e`, `dxN`, `thN`, an x-monomial (`x1`, `x2^3`), or a
    /// parenthesized coefficient over the section's ring (`(1 + x1)`,
    /// `(2 tau e(1,0))`). Accepts everything `Display` prints; truncation
    /// applies as for any other constructor.
    pub fn parse(
        dim: usize,
        ring: RingKind,
        policy: TruncationPolicy,
        text: &str,
    ) -> Result<Section> {
        let chars: Vec<char> = text.chars().collect();
        let mut tokens: Vec<(usize, String)> = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if chars[i].is_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            if chars[i] == '(' {
                let mut depth = 0usize;
                let mut j = i;
                loop {
                    if j == chars.len() {
                        return Err(Error::Parse {
                            pos: start,
                            msg: "unbalanced parenthesis".into(),
                        });
                    }
                    match chars[j] {
                        '(' => depth += 1,
                        ')' => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                    j += 1;
                }
                tokens.push((start, chars[i..=j].iter().collect()));
                i = j + 1;
            } else if (chars[i] == '+' || chars[i] == '-')
                && (i + 1 == chars.len() || chars[i + 1].is_whitespace())
            {
                tokens.push((start, chars[i].to_string()));
                i += 1;
            } else {
                let mut j = i;
                while j < chars.len() && !chars[j].is_whitespace() && chars[j] != '(' {
                    j += 1;
                }
                tokens.push((start, chars[i..j].iter().collect()));
                i = j;
            }
        }
        let mut total = Section::zero(dim, ring, policy);
        let mut sign = Rat::one();
        let mut term: Option<Section> = None;
        for (pos, tok) in tokens {
            if tok == "+" || tok == "-" {
                if let Some(t) = term.take() {
                    total = total.try_add(&t)?;
                    sign = Rat::one();
                }
                if tok == "-" {
                    sign = -sign;
                }
                continue;
            }
            let factor = Section::parse_atom(dim, ring, policy, pos, &tok)?;
            term = Some(match term {
                None => Section::constant(dim, ring, policy, sign.clone()).try_mul(&factor)?,
                Some(t) => t.try_mul(&factor)?,
            });
        }
        match term {
            Some(t) => total.try_add(&t),
            None if sign == Rat::one() => Ok(total),
            None => Err(Error::Parse {
                pos: text.len(),
                msg: "dangling sign".into(),
            }),
        }
    }

    fn parse_atom(
        dim: usize,
        ring: RingKind,
        policy: TruncationPolicy,
        pos: usize,
        tok: &str,
    ) -> Result<Section> {
        fn exponent(pos: usize, rest: &str) -> Result<i64> {
            if rest.is_empty() {
                return Ok(1);
            }
            rest.strip_prefix('^')
                .and_then(|e| e.parse().ok())
                .ok_or_else(|| Error::Parse {
                    pos,
                    msg: format!("malformed exponent `{rest}`"),
                })
        }
        fn index(pos: usize, rest: &str) -> Result<usize> {
            rest.parse().map_err(|_| Error::Parse {
                pos,
                msg: format!("malformed generator index `{rest}`"),
            })
        }
        if let Some(inner) = tok.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
            return Ok(Section::scalar(
                dim,
                ring,
                policy,
                Coefficient::parse(ring, dim, inner)?,
            ));
        }
        if let Some(rest) = tok.strip_prefix("hbar") {
            return Ok(Section::hbar_pow(dim, ring, policy, exponent(pos, rest)?));
        }
        if tok == "u" || tok.starts_with("u^") {
            return Ok(Section::u_pow(dim, ring, policy, exponent(pos, &tok[1..])?));
        }
        if let Some(rest) = tok.strip_prefix("dx") {
            return Section::dx(dim, ring, policy, index(pos, rest)?);
        }
        if let Some(rest) = tok.strip_prefix("th") {
            return Section::theta(dim, ring, policy, index(pos, rest)?);
        }
        if let Some(rest) = tok.strip_prefix('y') {
            let (base, e) = match rest.split_once('^') {
                Some((b, e)) => (b, format!("^{e}")),
                None => (rest, String::new()),
            };
            let i = index(pos, base)?;
            let e = exponent(pos, &e)?;
            if e < 0 {
                return Err(Error::Parse {
                    pos,
                    msg: "negative power of an even fibre generator".into(),
                });
            }
            let g = Section::y(dim, ring, policy, i)?;
            let mut out = Section::one(dim, ring, policy);
            for _ in 0..e {
                out = out.try_mul(&g)?;
            }
            return Ok(out);
        }
        if tok.starts_with('x') {
            return Ok(Section::scalar(
                dim,
                ring,
                policy,
                Coefficient::parse(ring, dim, tok)?,
            ));
        }
        match Rat::parse(tok) {
            Ok(r) => Ok(Section::constant(dim, ring, policy, r)),
            Err(_) => Err(Error::Parse {
                pos,
                msg: format!("unrecognized atom `{tok}`"),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn y_dim(&self) -> usize {
        self.y_dim
    }

    pub fn ring(&self) -> RingKind {
        self.ring
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TermKey, &Coefficient)> {
        self.terms.iter()
    }

    /// Insert with cancellation; drops keys the policy rejects.
    pub(crate) fn insert(&mut self, key: TermKey, c: Coefficient) {
        debug_assert_eq!(key.y.len(), self.y_dim);
        if c.is_zero() || !self.key_allowed(&key) {
            return;
        }
        let c = c.truncate_degree(self.policy.x_degree_max);
        if c.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get().add(&c).expect("ring mismatch within one section");
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    fn key_allowed(&self, key: &TermKey) -> bool {
        key.weight() <= self.policy.weight_max
            && key.hbar <= self.policy.hbar_max
            && key.u >= self.policy.u_min
            && key.u <= self.policy.u_max
    }

    /// Re-truncate under a different policy (tightening or, for headroom
    /// stages, loosening; loosening never invents terms).
    pub fn with_policy(&self, policy: TruncationPolicy) -> Section {
        let mut out = Section {
            dim: self.dim,
            y_dim: self.y_dim,
            ring: self.ring,
            policy,
            terms: BTreeMap::new(),
        };
        for (k, c) in &self.terms {
            out.insert(k.clone(), c.clone());
        }
        out
    }

    fn check_compatible(&self, rhs: &Section) -> Result<()> {
        if self.dim != rhs.dim || self.y_dim != rhs.y_dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: rhs.dim,
            });
        }
        if self.ring != rhs.ring {
            return Err(Error::MixedCoefficientRings(
                self.ring.name(),
                rhs.ring.name(),
            ));
        }
        if self.policy != rhs.policy {
            return Err(Error::PolicyMismatch(format!(
                "left {:?} vs right {:?}",
                self.policy, rhs.policy
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, rhs: &Section) -> Result<Section> {
        self.check_compatible(rhs)?;
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.insert(k.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, rhs: &Section) -> Result<Section> {
        self.try_add(&rhs.neg())
    }

    pub fn neg(&self) -> Section {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.neg();
        }
        out
    }

    pub fn scale(&self, r: &Rat) -> Section {
        if r.is_zero() {
            return Section {
                dim: self.dim,
                y_dim: self.y_dim,
                ring: self.ring,
                policy: self.policy,
                terms: BTreeMap::new(),
            };
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.scale(r);
        }
        out
    }

    /// Multiply every term's coefficient by `c(x)`.
    pub fn scale_coeff(&self, c: &Coefficient) -> Result<Section> {
        let mut out = Section {
            dim: self.dim,
            y_dim: self.y_dim,
            ring: self.ring,
            policy: self.policy,
            terms: BTreeMap::new(),
        };
        for (k, v) in &self.terms {
            out.insert(k.clone(), v.mul(c)?);
        }
        Ok(out)
    }

    /// Graded product with Koszul signs.
    pub fn try_mul(&self, rhs: &Section) -> Result<Section> {
        self.check_compatible(rhs)?;
        let mut out = Section {
            dim: self.dim,
            y_dim: self.y_dim,
            ring: self.ring,
            policy: self.policy,
            terms: BTreeMap::new(),
        };
        let wmax = self.policy.weight_max;
        let hmax = self.policy.hbar_max;
        for (ka, ca) in &self.terms {
            let wa = ka.weight();
            let ha = ka.hbar;
            for (kb, cb) in &rhs.terms {
                // Weight and hbar are additive: prune early.
                if wa + kb.weight() > wmax || ha + kb.hbar > hmax {
                    continue;
                }
                let (key, sign) = match mul_keys(ka, kb) {
                    Some(x) => x,
                    None => continue,
                };
                let mut c = ca.mul(cb)?;
                if sign < 0 {
                    c = c.neg();
                }
                out.insert(key, c);
            }
        }
        Ok(out)
    }

    /// d/dy^i (even derivation), 1-based into the widened y range.
    pub fn derive_y(&self, i: usize) -> Result<Section> {
        check_index(i, self.y_dim)?;
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            let e = k.y[i - 1];
            if e == 0 {
                continue;
            }
            let mut key = k.clone();
            key.y[i - 1] = e - 1;
            out.insert(key, c.scale(&Rat::from_int(e as i64)));
        }
        Ok(out)
    }

    /// d/dx^i applied to coefficients only (the base partial derivative).
    pub fn derive_x(&self, i: usize) -> Result<Section> {
        check_index(i, self.dim)?;
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            out.insert(k.clone(), c.derive(i)?);
        }
        Ok(out)
    }

    /// Multiply by y^i.
    pub fn mul_y(&self, i: usize) -> Result<Section> {
        check_index(i, self.y_dim)?;
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            let mut key = k.clone();
            key.y[i - 1] += 1;
            out.insert(key, c.clone());
        }
        Ok(out)
    }

    /// Left wedge by dx^i: dx^i ^ (term).
    pub fn wedge_dx(&self, i: usize) -> Result<Section> {
        check_index(i, self.dim)?;
        let bit = (i - 1) as u32;
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            if let Some(sign) = insert_front_sign(bit, k.dx) {
                let mut key = k.clone();
                key.dx |= 1u64 << bit;
                out.insert(key, signed(c, sign));
            }
        }
        Ok(out)
    }

    /// Left wedge by theta^i: theta^i ^ (term). Crossing the dx block costs
    /// (-1)^|dx|.
    pub fn wedge_theta(&self, i: usize) -> Result<Section> {
        check_index(i, self.dim)?;
        let bit = (i - 1) as u32;
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            if let Some(mut sign) = insert_front_sign(bit, k.theta) {
                if k.dx_degree() % 2 == 1 {
                    sign = -sign;
                }
                let mut key = k.clone();
                key.theta |= 1u64 << bit;
                out.insert(key, signed(c, sign));
            }
        }
        Ok(out)
    }

    /// Odd contraction removing theta^i (graded left derivation): crossing
    /// the dx block costs (-1)^|dx|, then (-1)^(position in theta block).
    pub fn iota_theta(&self, i: usize) -> Result<Section> {
        check_index(i, self.dim)?;
        let bit = (i - 1) as u32;
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            if let Some(mut sign) = remove_sign(bit, k.theta) {
                if k.dx_degree() % 2 == 1 {
                    sign = -sign;
                }
                let mut key = k.clone();
                key.theta &= !(1u64 << bit);
                out.insert(key, signed(c, sign));
            }
        }
        Ok(out)
    }

    /// Odd contraction removing dx^i (graded left derivation on the leading
    /// dx block): sign (-1)^(position in dx block).
    pub fn iota_dx(&self, i: usize) -> Result<Section> {
        check_index(i, self.dim)?;
        let bit = (i - 1) as u32;
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            if let Some(sign) = remove_sign(bit, k.dx) {
                let mut key = k.clone();
                key.dx &= !(1u64 << bit);
                out.insert(key, signed(c, sign));
            }
        }
        Ok(out)
    }

    pub fn mul_hbar(&self, k: i64) -> Section {
        self.shift(|key| key.hbar += k)
    }

    pub fn mul_u(&self, k: i64) -> Section {
        self.shift(|key| key.u += k)
    }

    /// Divide by hbar^k, failing loudly if that would push any term below
    /// the given floor (use floor = i64::MIN for Laurent contexts).
    pub fn div_hbar(&self, k: i64, floor: i64) -> Result<Section> {
        for key in self.terms.keys() {
            if key.hbar - k < floor {
                return Err(Error::HbarUnderflow {
                    have: key.hbar,
                    divide: k,
                });
            }
        }
        Ok(self.shift(|key| key.hbar -= k))
    }

    fn shift(&self, f: impl Fn(&mut TermKey)) -> Section {
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            let mut key = k.clone();
            f(&mut key);
            out.insert(key, c.clone());
        }
        out
    }

    /// Engine helper: re-index the y block into slot `slot` of a widened
    /// section holding `nslots` independent y blocks of `dim` variables.
    pub(crate) fn widen(&self, slot: usize, nslots: usize) -> Section {
        debug_assert_eq!(self.y_dim, self.dim, "widen expects an unwidened section");
        debug_assert!(slot < nslots);
        let mut out = Section::zero_widened(self.dim, self.dim * nslots, self.ring, self.policy);
        for (k, c) in &self.terms {
            let mut y = vec![0u16; self.dim * nslots];
            for (i, e) in k.y.iter().enumerate() {
                y[slot * self.dim + i] = *e;
            }
            out.insert(
                TermKey {
                    hbar: k.hbar,
                    u: k.u,
                    y,
                    dx: k.dx,
                    theta: k.theta,
                },
                c.clone(),
            );
        }
        out
    }

    /// Engine helper: identify all widened y blocks again (slot s variable
    /// i falls back onto variable i).
    pub(crate) fn collapse(&self) -> Section {
        debug_assert_eq!(self.y_dim % self.dim, 0);
        let mut out = Section::zero(self.dim, self.ring, self.policy);
        for (k, c) in &self.terms {
            let mut y = vec![0u16; self.dim];
            for (i, e) in k.y.iter().enumerate() {
                y[i % self.dim] += *e;
            }
            out.insert(
                TermKey {
                    hbar: k.hbar,
                    u: k.u,
                    y,
                    dx: k.dx,
                    theta: k.theta,
                },
                c.clone(),
            );
        }
        out
    }

    pub(crate) fn empty_like(&self) -> Section {
        Section {
            dim: self.dim,
            y_dim: self.y_dim,
            ring: self.ring,
            policy: self.policy,
            terms: BTreeMap::new(),
        }
    }

    /// Keep only terms whose key satisfies the predicate.
    pub fn filter(&self, pred: impl Fn(&TermKey) -> bool) -> Section {
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            if pred(k) {
                out.insert(k.clone(), c.clone());
            }
        }
        out
    }

    /// Component of homogeneous weight w.
    pub fn weight_component(&self, w: i64) -> Section {
        self.filter(|k| k.weight() == w)
    }

    /// Largest weight present, or None when zero.
    pub fn max_weight(&self) -> Option<i64> {
        self.terms.keys().map(|k| k.weight()).max()
    }

    /// Lowest hbar exponent present, or None when zero.
    pub fn min_hbar(&self) -> Option<i64> {
        self.terms.keys().map(|k| k.hbar).min()
    }

    /// (weight, cohomological degree) of a homogeneous section.
    pub fn grade(&self) -> Result<(i64, i64)> {
        let mut it = self.terms.keys();
        let first = match it.next() {
            None => return Ok((0, 0)),
            Some(k) => (k.weight(), k.cohomological_degree()),
        };
        for k in it {
            if (k.weight(), k.cohomological_degree()) != first {
                return Err(Error::NotHomogeneous {
                    first: format!("{:?}", first),
                    second: format!("{:?}", (k.weight(), k.cohomological_degree())),
                });
            }
        }
        Ok(first)
    }

    /// Keep only terms with no y, no dx, and no theta (hbar and u allowed).
    pub fn scalar_part(&self) -> Section {
        self.filter(|k| k.y_degree() == 0 && k.dx == 0 && k.theta == 0)
    }

    /// Sum over terms is empty or every term passes the predicate.
    pub fn all_terms(&self, pred: impl Fn(&TermKey) -> bool) -> bool {
        self.terms.keys().all(pred)
    }
}

fn signed(c: &Coefficient, sign: i8) -> Coefficient {
    if sign < 0 {
        c.neg()
    } else {
        c.clone()
    }
}

fn check_index(i: usize, dim: usize) -> Result<()> {
    if i == 0 || i > dim {
        Err(Error::IndexOutOfRange { index: i, dim })
    } else {
        Ok(())
    }
}

/// Combine two term keys; None when an odd generator repeats. The sign is
/// (-1)^(|theta_a| * |dx_b|) times the two in-block merge signs.
fn mul_keys(a: &TermKey, b: &TermKey) -> Option<(TermKey, i8)> {
    let s_dx = merge_sign(a.dx, b.dx)?;
    let s_th = merge_sign(a.theta, b.theta)?;
    let cross = (a.theta_degree() * b.dx_degree()) % 2;
    let mut sign = s_dx * s_th;
    if cross == 1 {
        sign = -sign;
    }
    let mut y = a.y.clone();
    for (ye, be) in y.iter_mut().zip(&b.y) {
        *ye += *be;
    }
    Some((
        TermKey {
            hbar: a.hbar + b.hbar,
            u: a.u + b.u,
            y,
            dx: a.dx | b.dx,
            theta: a.theta | b.theta,
        },
        sign,
    ))
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            if k.hbar != 0 {
                write!(f, " hbar^{}", k.hbar)?;
            }
            if k.u != 0 {
                write!(f, " u^{}", k.u)?;
            }
            for (i, e) in k.y.iter().enumerate() {
                if *e == 1 {
                    write!(f, " y{}", i + 1)?;
                } else if *e > 1 {
                    write!(f, " y{}^{}", i + 1, e)?;
                }
            }
            for i in 0..64 {
                if k.dx & (1u64 << i) != 0 {
                    write!(f, " dx{}", i + 1)?;
                }
            }
            for i in 0..64 {
                if k.theta & (1u64 << i) != 0 {
                    write!(f, " th{}", i + 1)?;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

macro_rules! section_binop {
    ($trait:ident, $method:ident, $call:ident) => {
        impl std::ops::$trait<&Section> for &Section {
            type Output = Section;
            fn $method(self, rhs: &Section) -> Section {
                self.$call(rhs).expect("incompatible sections")
            }
        }
        impl std::ops::$trait<Section> for Section {
            type Output = Section;
            fn $method(self, rhs: Section) -> Section {
                (&self).$call(&rhs).expect("incompatible sections")
            }
        }
    };
}

section_binop!(Add, add, try_add);
section_binop!(Sub, sub, try_sub);
section_binop!(Mul, mul, try_mul);

impl std::ops::Neg for &Section {
    type Output = Section;
    fn neg(self) -> Section {
        Section::neg(self)
    }
}
