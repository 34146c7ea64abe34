//! Truncated polynomial jets: the coefficient ring for local charts.
//!
//! A [`JetPoly`] is a polynomial in the base coordinates x^1..x^m with exact
//! rational coefficients, stored sparsely. Zero coefficients are never
//! stored. Degree truncation is applied by the section layer (see
//! `TruncationPolicy`); the ring itself is exact.
//!
//! Text grammar (round-trip safe):
//!   poly   := [sign] term (sign term)*
//!   term   := factor (ws factor)*
//!   factor := rational | 'x' index ['^' exponent]
//! e.g. `3/2 x1^2 x2 - x3`. Factors multiply; a bare sign means +-1.

use crate::error::{Error, Result};
use crate::rational::Rat;
use std::collections::BTreeMap;
use std::fmt;

/// Exponent vector for a fixed number of variables.
pub type Exps = Vec<u16>;

/// Total degree of an exponent vector.
pub fn exps_degree(e: &[u16]) -> u32 {
    e.iter().map(|&k| k as u32).sum()
}

/// Sparse multivariate polynomial over the rationals.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct JetPoly {
    nvars: usize,
    terms: BTreeMap<Exps, Rat>,
}

impl JetPoly {
    pub fn zero(nvars: usize) -> Self {
        JetPoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Rat) -> Self {
        let mut p = JetPoly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        JetPoly::constant(nvars, Rat::one())
    }

    /// The coordinate x^i (1-based).
    pub fn var(nvars: usize, i: usize) -> Result<Self> {
        if i == 0 || i > nvars {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: nvars,
            });
        }
        let mut e = vec![0u16; nvars];
        e[i - 1] = 1;
        let mut p = JetPoly::zero(nvars);
        p.terms.insert(e, Rat::one());
        Ok(p)
    }

    pub fn monomial(nvars: usize, exps: Exps, c: Rat) -> Self {
        assert_eq!(exps.len(), nvars);
        let mut p = JetPoly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(exps, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Exps, &Rat)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Largest total degree among stored monomials (0 for the zero poly).
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| exps_degree(e)).max().unwrap_or(0)
    }

    pub fn coeff_of(&self, exps: &[u16]) -> Rat {
        self.terms.get(exps).cloned().unwrap_or_else(Rat::zero)
    }

    /// Coefficient of the degree-zero monomial.
    pub fn constant_part(&self) -> Rat {
        self.coeff_of(&vec![0; self.nvars])
    }

    fn insert(&mut self, e: Exps, c: Rat) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = &*o.get() + &c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, rhs: &JetPoly) -> Result<JetPoly> {
        self.check_vars(rhs)?;
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.insert(e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> JetPoly {
        JetPoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect(),
        }
    }

    pub fn scale(&self, r: &Rat) -> JetPoly {
        if r.is_zero() {
            return JetPoly::zero(self.nvars);
        }
        JetPoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * r)).collect(),
        }
    }

    pub fn mul(&self, rhs: &JetPoly) -> Result<JetPoly> {
        self.check_vars(rhs)?;
        let mut out = JetPoly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Exps = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.insert(e, ca * cb);
            }
        }
        Ok(out)
    }

    /// Partial derivative with respect to x^i (1-based).
    pub fn derive(&self, i: usize) -> Result<JetPoly> {
        if i == 0 || i > self.nvars {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: self.nvars,
            });
        }
        let mut out = JetPoly::zero(self.nvars);
        for (e, c) in &self.terms {
            let k = e[i - 1];
            if k == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i - 1] = k - 1;
            out.insert(e2, c * &Rat::from_int(k as i64));
        }
        Ok(out)
    }

    /// Drops every monomial of total degree > `max_degree`.
    pub fn truncate_degree(&self, max_degree: u32) -> JetPoly {
        JetPoly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| exps_degree(e) <= max_degree)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect(),
        }
    }

    fn check_vars(&self, rhs: &JetPoly) -> Result<()> {
        if self.nvars != rhs.nvars {
            return Err(Error::DimensionMismatch {
                expected: self.nvars,
                got: rhs.nvars,
            });
        }
        Ok(())
    }

    /// Parses the grammar documented in the module header. `max_degree`
    /// (when given) rejects monomials above the cap instead of silently
    /// dropping them.
    pub fn parse(text: &str, nvars: usize, max_degree: Option<u32>) -> Result<Self> {
        let mut p = Parser::new(text);
        let mut out = JetPoly::zero(nvars);
        p.skip_ws();
        if p.done() {
            return Err(p.err("empty polynomial"));
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
            let (coeff, exps) = parse_jet_term(&mut p, nvars)?;
            let e_deg = exps_degree(&exps);
            if let Some(cap) = max_degree {
                if e_deg > cap {
                    return Err(Error::DegreeOverflow {
                        degree: e_deg,
                        max: cap,
                    });
                }
            }
            out.insert(exps, &coeff * &sign);
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

fn parse_jet_term(p: &mut Parser, nvars: usize) -> Result<(Rat, Exps)> {
    let mut coeff = Rat::one();
    let mut exps = vec![0u16; nvars];
    let mut saw_factor = false;
    loop {
        p.skip_ws();
        if p.peek() == Some('x') {
            p.bump();
            let idx = p.parse_usize("variable index")?;
            if idx == 0 || idx > nvars {
                return Err(p.err(&format!("variable x{idx} out of range 1..={nvars}")));
            }
            let mut exp = 1u16;
            if p.peek() == Some('^') {
                p.bump();
                exp = p.parse_usize("exponent")? as u16;
            }
            exps[idx - 1] = exps[idx - 1]
                .checked_add(exp)
                .ok_or_else(|| p.err("exponent overflow"))?;
            saw_factor = true;
        } else if p.peek().is_some_and(|c| c.is_ascii_digit()) {
            coeff = &coeff * &p.parse_rational()?;
            saw_factor = true;
        } else {
            break;
        }
    }
    if !saw_factor {
        return Err(p.err("expected a term"));
    }
    Ok((coeff, exps))
}

impl fmt::Display for JetPoly {
    /// Canonical form: terms ordered by descending total degree, then
    /// descending lexicographic exponents (so x1-heavy monomials print
    /// first); unit coefficients are suppressed. Zero prints as "0".
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut keys: Vec<&Exps> = self.terms.keys().collect();
        keys.sort_by_key(|e| std::cmp::Reverse((exps_degree(e), (*e).clone())));
        let mut first = true;
        for e in keys {
            let c = &self.terms[e];
            let neg = c.is_negative();
            let mag = c.abs();
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
            let vars = monomial_string(e);
            if vars.is_empty() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{vars}")?;
            } else {
                write!(f, "{mag} {vars}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for JetPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn monomial_string(e: &[u16]) -> String {
    let mut parts = Vec::new();
    for (i, &k) in e.iter().enumerate() {
        match k {
            0 => {}
            1 => parts.push(format!("x{}", i + 1)),
            _ => parts.push(format!("x{}^{}", i + 1, k)),
        }
    }
    parts.join(" ")
}

/// Minimal cursor-based scanner shared by the text parsers in this crate.
pub(crate) struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    pub fn new(text: &'a str) -> Self {
        Parser {
            text,
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    pub fn err(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: format!("{msg} (input {:?})", self.text),
        }
    }

    pub fn done(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    pub fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    pub fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += c.len_utf8();
        }
    }

    pub fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace() || c == '*') {
            self.bump();
        }
    }

    pub fn peek_is_sign(&self) -> bool {
        matches!(self.peek(), Some('+') | Some('-'))
    }

    pub fn try_sign(&mut self) -> Option<char> {
        match self.peek() {
            Some(c @ ('+' | '-')) => {
                self.bump();
                Some(c)
            }
            _ => None,
        }
    }

    pub fn parse_usize(&mut self, what: &str) -> Result<usize> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        if start == self.pos {
            return Err(self.err(&format!("expected {what}")));
        }
        self.text[start..self.pos]
            .parse()
            .map_err(|_| self.err(&format!("bad {what}")))
    }

    pub fn parse_i64(&mut self, what: &str) -> Result<i64> {
        let start = self.pos;
        if self.peek_is_sign() {
            self.bump();
        }
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        if start == self.pos {
            return Err(self.err(&format!("expected {what}")));
        }
        self.text[start..self.pos]
            .parse()
            .map_err(|_| self.err(&format!("bad {what}")))
    }

    /// Unsigned rational "p" or "p/q" (signs are handled by the term loop).
    pub fn parse_rational(&mut self) -> Result<Rat> {
        let num = self.parse_usize("numerator")? as i64;
        if self.peek() == Some('/') {
            self.bump();
            let den = self.parse_usize("denominator")? as i64;
            if den == 0 {
                return Err(self.err("zero denominator"));
            }
            Ok(Rat::new(num, den))
        } else {
            Ok(Rat::from_int(num))
        }
    }

    pub fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(&format!("expected {c:?}")))
        }
    }
}
