//! Exact Fourier sums on the flat torus: the coefficient ring for global
//! (integrable) computations.
//!
//! A [`FourierElement`] is a finite sum over frequency vectors m in Z^(2n)
//! of `c_m(tau) e(m)`, where `e(m)` models exp(2 pi i m.x) and each `c_m`
//! is a [`TauPoly`]: a polynomial in the formal even unit `tau` (standing
//! for 2 pi i) with Gaussian-rational coefficients. Products add
//! frequencies, x-derivatives multiply by `tau m_j`, and the torus integral
//! extracts the zero-frequency coefficient. Everything is exact; `tau` is
//! never evaluated.
//!
//! Text grammar (round-trip safe):
//!   element := [sign] term (sign term)*
//!   term    := factor (ws factor)*
//!   factor  := rational | 'i' | 'tau' ['^' k] | 'e' '(' int (',' int)* ')'
//! e.g. `2 tau^2 e(1,0) - 1/3 i e(0,-1)`. Frequency vectors must have
//! exactly 2n entries; `e(0,...,0)` may be omitted.

use crate::error::{Error, Result};
use crate::jet::Parser;
use crate::rational::{GaussRat, Rat, TauPoly};
use std::collections::BTreeMap;
use std::fmt;

/// Finite exact Fourier sum over Z^nvars.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FourierElement {
    nvars: usize,
    terms: BTreeMap<Vec<i64>, TauPoly>,
}

impl FourierElement {
    pub fn zero(nvars: usize) -> Self {
        FourierElement {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: TauPoly) -> Self {
        let mut f = FourierElement::zero(nvars);
        if !c.is_zero() {
            f.terms.insert(vec![0; nvars], c);
        }
        f
    }

    pub fn one(nvars: usize) -> Self {
        FourierElement::constant(nvars, TauPoly::one())
    }

    pub fn from_rat(nvars: usize, r: Rat) -> Self {
        FourierElement::constant(nvars, TauPoly::from_rat(r))
    }

    /// The pure mode `e(m)`.
    pub fn mode(m: Vec<i64>) -> Self {
        let nvars = m.len();
        let mut f = FourierElement::zero(nvars);
        f.terms.insert(m, TauPoly::one());
        f
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, &TauPoly)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    fn insert(&mut self, m: Vec<i64>, c: TauPoly) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().add(&c);
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, rhs: &FourierElement) -> Result<FourierElement> {
        self.check_vars(rhs)?;
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.insert(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> FourierElement {
        FourierElement {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c.neg())).collect(),
        }
    }

    pub fn scale(&self, r: &Rat) -> FourierElement {
        if r.is_zero() {
            return FourierElement::zero(self.nvars);
        }
        FourierElement {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c.scale(r)))
                .collect(),
        }
    }

    pub fn mul(&self, rhs: &FourierElement) -> Result<FourierElement> {
        self.check_vars(rhs)?;
        let mut out = FourierElement::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                let m: Vec<i64> = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                out.insert(m, ca.mul(cb));
            }
        }
        Ok(out)
    }

    /// d/dx^j (1-based): multiplies each mode by `tau m_j`.
    pub fn derive(&self, j: usize) -> Result<FourierElement> {
        if j == 0 || j > self.nvars {
            return Err(Error::IndexOutOfRange {
                index: j,
                dim: self.nvars,
            });
        }
        let mut out = FourierElement::zero(self.nvars);
        for (m, c) in &self.terms {
            let mj = m[j - 1];
            if mj == 0 {
                continue;
            }
            let factor = TauPoly::monomial(1, GaussRat::from_rat(Rat::from_int(mj)));
            out.insert(m.clone(), c.mul(&factor));
        }
        Ok(out)
    }

    /// The coefficient of `e(0,...,0)`: exactly the integral over the unit
    /// torus (volume normalized to 1).
    pub fn zero_mode(&self) -> TauPoly {
        self.terms
            .get(&vec![0; self.nvars])
            .cloned()
            .unwrap_or_else(TauPoly::zero)
    }

    /// Constant part in the jet sense: same as the zero mode.
    pub fn constant_part(&self) -> TauPoly {
        self.zero_mode()
    }

    fn check_vars(&self, rhs: &FourierElement) -> Result<()> {
        if self.nvars != rhs.nvars {
            return Err(Error::DimensionMismatch {
                expected: self.nvars,
                got: rhs.nvars,
            });
        }
        Ok(())
    }

    pub fn parse(text: &str, nvars: usize) -> Result<Self> {
        let mut p = Parser::new(text);
        let mut out = FourierElement::zero(nvars);
        p.skip_ws();
        if p.done() {
            return Err(p.err("empty Fourier expression"));
        }
        loop {
            let mut sign = Rat::one();
            p.skip_ws();
            while let Some(s) = p.try_sign() {
                if s == '-' {
                    sign = -sign;
                }
                p.skip_ws();
            }
            let (coeff, m) = parse_fourier_term(&mut p, nvars)?;
            out.insert(m, coeff.scale(&sign));
            p.skip_ws();
            if p.done() {
                break;
            }
            if !p.peek_is_sign() {
                return Err(p.err("expected '+' or '-'"));
            }
        }
        Ok(out)
    }
}

fn parse_fourier_term(p: &mut Parser, nvars: usize) -> Result<(TauPoly, Vec<i64>)> {
    let mut coeff = TauPoly::one();
    let mut m = vec![0i64; nvars];
    let mut saw_factor = false;
    loop {
        p.skip_ws();
        match p.peek() {
            Some('t') => {
                for c in ['t', 'a', 'u'] {
                    p.expect(c)?;
                }
                let mut k = 1u32;
                if p.peek() == Some('^') {
                    p.bump();
                    k = p.parse_usize("tau exponent")? as u32;
                }
                coeff = coeff.mul(&TauPoly::monomial(k, GaussRat::one()));
                saw_factor = true;
            }
            Some('i') => {
                p.bump();
                coeff = coeff.mul(&TauPoly::from_gauss(GaussRat::i()));
                saw_factor = true;
            }
            Some('e') => {
                p.bump();
                p.expect('(')?;
                let mut freq = Vec::new();
                loop {
                    p.skip_ws();
                    freq.push(p.parse_i64("frequency")?);
                    p.skip_ws();
                    if p.peek() == Some(',') {
                        p.bump();
                    } else {
                        break;
                    }
                }
                p.expect(')')?;
                if freq.len() != nvars {
                    return Err(p.err(&format!(
                        "frequency vector has {} entries, chart needs {nvars}",
                        freq.len()
                    )));
                }
                for (slot, v) in m.iter_mut().zip(&freq) {
                    *slot += v;
                }
                saw_factor = true;
            }
            Some(c) if c.is_ascii_digit() => {
                coeff = coeff.scale(&p.parse_rational()?);
                saw_factor = true;
            }
            _ => break,
        }
    }
    if !saw_factor {
        return Err(p.err("expected a Fourier term"));
    }
    Ok((coeff, m))
}

impl fmt::Display for FourierElement {
    /// Canonical form, fully expanded so the grammar reads it back exactly:
    /// one printed term per (mode, tau power, real/imaginary part), modes in
    /// lexicographic frequency order, e.g. `1/2 e(1,0) - 2 i tau e(1,0)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        let mut emit = |f: &mut fmt::Formatter<'_>,
                        mag: &Rat,
                        neg: bool,
                        factors: &[String]|
         -> fmt::Result {
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if factors.is_empty() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{}", factors.join(" "))?;
            } else {
                write!(f, "{mag} {}", factors.join(" "))?;
            }
            Ok(())
        };
        for (m, c) in &self.terms {
            let is_zero_mode = m.iter().all(|&v| v == 0);
            let mode = format!(
                "e({})",
                m.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            );
            for (k, g) in c.iter() {
                for (part, unit) in [(&g.re, None), (&g.im, Some("i"))] {
                    if part.is_zero() {
                        continue;
                    }
                    let mut factors = Vec::new();
                    if let Some(u) = unit {
                        factors.push(u.to_string());
                    }
                    if *k > 0 {
                        factors.push(tau_pow_str(*k));
                    }
                    if !is_zero_mode {
                        factors.push(mode.clone());
                    }
                    emit(f, &part.abs(), part.is_negative(), &factors)?;
                }
            }
        }
        Ok(())
    }
}

fn tau_pow_str(k: u32) -> String {
    if k == 1 {
        "tau".to_string()
    } else {
        format!("tau^{k}")
    }
}

impl fmt::Debug for FourierElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_multiply_modes() {
        let a = FourierElement::parse("e(1,0)", 2).unwrap();
        let b = FourierElement::parse("e(0,-1)", 2).unwrap();
        let ab = a.mul(&b).unwrap();
        assert_eq!(ab, FourierElement::mode(vec![1, -1]));
        // e(m) e(-m) = 1
        let inv = FourierElement::parse("e(-1,0)", 2).unwrap();
        assert_eq!(a.mul(&inv).unwrap(), FourierElement::one(2));
    }

    #[test]
    fn derivative_brings_tau() {
        let a = FourierElement::parse("e(3,-2)", 2).unwrap();
        let d1 = a.derive(1).unwrap();
        assert_eq!(d1.to_string(), "3 tau e(3,-2)");
        let d2 = a.derive(2).unwrap();
        assert_eq!(d2.to_string(), "-2 tau e(3,-2)");
        assert!(FourierElement::one(2).derive(1).unwrap().is_zero());
    }

    #[test]
    fn zero_mode_is_torus_integral() {
        let a = FourierElement::parse("5/2 + e(1,0)", 2).unwrap();
        assert_eq!(a.zero_mode().as_rational().unwrap(), Rat::new(5, 2));
        assert!(FourierElement::mode(vec![2, 1]).zero_mode().is_zero());
    }

    #[test]
    fn parse_gaussian_and_tau() {
        let a = FourierElement::parse("1/2 i tau^2 e(0,1)", 2).unwrap();
        let c = a.iter().next().unwrap().1;
        assert_eq!(c.coeff_of(2), GaussRat::i().scale(&Rat::new(1, 2)));
        assert!(FourierElement::parse("e(1)", 2).is_err());
        assert!(FourierElement::parse("e(1,0", 2).is_err());
        assert!(FourierElement::parse("q", 2).is_err());
    }

    #[test]
    fn cancellation() {
        let a = FourierElement::parse("e(1,0) - e(1,0)", 2).unwrap();
        assert!(a.is_zero());
        assert_eq!(a.to_string(), "0");
    }

    #[test]
    fn display_roundtrip_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(23);
        for _ in 0..200 {
            let nvars = 2 * rng.gen_range(1..=2);
            let mut f = FourierElement::zero(nvars);
            for _ in 0..rng.gen_range(0..4) {
                let m: Vec<i64> = (0..nvars).map(|_| rng.gen_range(-2..=2)).collect();
                let tau_k = rng.gen_range(0..3u32);
                let g = GaussRat {
                    re: Rat::new(rng.gen_range(-5..=5), rng.gen_range(1..=3)),
                    im: Rat::from_int(rng.gen_range(-2..=2)),
                };
                f.insert(m, TauPoly::monomial(tau_k, g));
            }
            let s = f.to_string();
            let g = FourierElement::parse(&s, nvars).unwrap_or_else(|e| panic!("{s:?}: {e}"));
            assert_eq!(f, g, "round trip failed for {s:?}");
        }
    }
}
