//! Exact scalars: arbitrary-precision rationals, Gaussian rationals, and
//! polynomials in the formal unit `tau`.
//!
//! [`Rat`] wraps `num_rational::BigRational`, which already maintains the
//! canonical form we rely on (reduced fraction, positive denominator).
//! [`GaussRat`] is a + b·i with rational a, b. [`TauPoly`] is a polynomial
//! in one formal even unit `tau` (bookkeeping a factor of 2·pi·i that is
//! never evaluated numerically) with Gaussian-rational coefficients.
//!
//! Invariant: zero is always represented structurally (empty `TauPoly`,
//! both parts zero in `GaussRat`), so `is_zero` is cheap and exact.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

macro_rules! fmt_debug_via_display {
    () => {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            fmt::Display::fmt(self, f)
        }
    };
}

/// Arbitrary-precision rational number in lowest terms, denominator > 0.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(BigRational);

impl Rat {
    pub fn zero() -> Self {
        Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Rat(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    /// Builds `num/den`; panics on zero denominator (programmer error).
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Rat(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_big(num: BigInt, den: BigInt) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        Rat(BigRational::new(num, den))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn abs(&self) -> Self {
        Rat(self.0.abs())
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        Rat(self.0.recip())
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Rat::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Exact conversion to f64 (numerator/denominator division); used only
    /// by the floating-point configuration-space routines.
    pub fn to_f64(&self) -> f64 {
        // Fall back to a digit-string route if the parts overflow f64.
        match (self.0.numer().to_f64(), self.0.denom().to_f64()) {
            (Some(n), Some(d)) if d != 0.0 && n.is_finite() && d.is_finite() => n / d,
            _ => {
                let s = self.0.to_string();
                let mut it = s.splitn(2, '/');
                let n: f64 = it.next().unwrap().parse().unwrap_or(f64::NAN);
                let d: f64 = it.next().map_or(1.0, |t| t.parse().unwrap_or(f64::NAN));
                n / d
            }
        }
    }

    /// Parses "p", "-p", or "p/q". Whitespace is not consumed here.
    pub fn parse(text: &str) -> Result<Self> {
        let err = |msg: &str| Error::Parse {
            pos: 0,
            msg: format!("{msg}: {text:?}"),
        };
        let mut parts = text.splitn(2, '/');
        let numer: BigInt = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| err("bad integer"))?;
        match parts.next() {
            None => Ok(Rat(BigRational::from_integer(numer))),
            Some(d) => {
                let denom: BigInt = d.parse().map_err(|_| err("bad denominator"))?;
                if denom.is_zero() {
                    return Err(err("zero denominator"));
                }
                Ok(Rat(BigRational::new(numer, denom)))
            }
        }
    }
}

impl fmt::Display for Rat {
    /// Canonical form "p" or "p/q" with q > 1.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! rat_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for &Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((&self.0).$method(&rhs.0))
            }
        }
        impl $trait for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat(self.0.$method(rhs.0))
            }
        }
    };
}
rat_binop!(Add, add);
rat_binop!(Sub, sub);
rat_binop!(Mul, mul);

impl Div for &Rat {
    type Output = Rat;
    fn div(self, rhs: &Rat) -> Rat {
        assert!(!rhs.is_zero(), "division by zero");
        Rat(&self.0 / &rhs.0)
    }
}

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-&self.0)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl AddAssign<&Rat> for Rat {
    fn add_assign(&mut self, rhs: &Rat) {
        self.0 += &rhs.0;
    }
}

/// Gaussian rational a + b·i.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GaussRat {
    pub re: Rat,
    pub im: Rat,
}

impl GaussRat {
    pub fn zero() -> Self {
        GaussRat {
            re: Rat::zero(),
            im: Rat::zero(),
        }
    }

    pub fn one() -> Self {
        GaussRat {
            re: Rat::one(),
            im: Rat::zero(),
        }
    }

    pub fn i() -> Self {
        GaussRat {
            re: Rat::zero(),
            im: Rat::one(),
        }
    }

    pub fn from_rat(r: Rat) -> Self {
        GaussRat {
            re: r,
            im: Rat::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn mul(&self, rhs: &GaussRat) -> GaussRat {
        GaussRat {
            re: &(&self.re * &rhs.re) - &(&self.im * &rhs.im),
            im: &(&self.re * &rhs.im) + &(&self.im * &rhs.re),
        }
    }

    pub fn add(&self, rhs: &GaussRat) -> GaussRat {
        GaussRat {
            re: &self.re + &rhs.re,
            im: &self.im + &rhs.im,
        }
    }

    pub fn neg(&self) -> GaussRat {
        GaussRat {
            re: -&self.re,
            im: -&self.im,
        }
    }

    pub fn scale(&self, r: &Rat) -> GaussRat {
        GaussRat {
            re: &self.re * r,
            im: &self.im * r,
        }
    }
}

impl fmt::Display for GaussRat {
    /// "a", "b i", or "a + b i" / "a - b i"; zero prints as "0".
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        if self.im.is_zero() {
            return write!(f, "{}", self.re);
        }
        let im_mag = self.im.abs();
        let sign = if self.im.is_negative() { "-" } else { "+" };
        let im_part = if im_mag.is_one() {
            "i".to_string()
        } else {
            format!("{im_mag} i")
        };
        if self.re.is_zero() {
            if self.im.is_negative() {
                write!(f, "-{im_part}")
            } else {
                write!(f, "{im_part}")
            }
        } else {
            write!(f, "{} {} {}", self.re, sign, im_part)
        }
    }
}

impl fmt::Debug for GaussRat {
    fmt_debug_via_display!();
}

/// Polynomial in the formal unit `tau` with Gaussian-rational coefficients.
/// `tau` stands for 2·pi·i and is never evaluated; derivatives of torus
/// Fourier modes produce one `tau` per x-derivative. Zero coefficients are
/// never stored.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct TauPoly {
    terms: BTreeMap<u32, GaussRat>,
}

impl TauPoly {
    pub fn zero() -> Self {
        TauPoly::default()
    }

    pub fn one() -> Self {
        TauPoly::from_gauss(GaussRat::one())
    }

    pub fn from_rat(r: Rat) -> Self {
        TauPoly::from_gauss(GaussRat::from_rat(r))
    }

    pub fn from_gauss(g: GaussRat) -> Self {
        let mut t = TauPoly::zero();
        if !g.is_zero() {
            t.terms.insert(0, g);
        }
        t
    }

    /// c · tau^k
    pub fn monomial(k: u32, c: GaussRat) -> Self {
        let mut t = TauPoly::zero();
        if !c.is_zero() {
            t.terms.insert(k, c);
        }
        t
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&u32, &GaussRat)> {
        self.terms.iter()
    }

    pub fn coeff_of(&self, k: u32) -> GaussRat {
        self.terms.get(&k).cloned().unwrap_or_else(GaussRat::zero)
    }

    pub fn add(&self, rhs: &TauPoly) -> TauPoly {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            let entry = out.terms.entry(*k).or_insert_with(GaussRat::zero);
            *entry = entry.add(c);
            if entry.is_zero() {
                out.terms.remove(k);
            }
        }
        out
    }

    pub fn neg(&self) -> TauPoly {
        TauPoly {
            terms: self.terms.iter().map(|(k, c)| (*k, c.neg())).collect(),
        }
    }

    pub fn mul(&self, rhs: &TauPoly) -> TauPoly {
        let mut out = TauPoly::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                let k = ka + kb;
                let c = ca.mul(cb);
                let entry = out.terms.entry(k).or_insert_with(GaussRat::zero);
                *entry = entry.add(&c);
                if entry.is_zero() {
                    out.terms.remove(&k);
                }
            }
        }
        out
    }

    pub fn scale(&self, r: &Rat) -> TauPoly {
        if r.is_zero() {
            return TauPoly::zero();
        }
        TauPoly {
            terms: self.terms.iter().map(|(k, c)| (*k, c.scale(r))).collect(),
        }
    }

    /// The plain rational value, if the polynomial is a real constant.
    pub fn as_rational(&self) -> Result<Rat> {
        if self.is_zero() {
            return Ok(Rat::zero());
        }
        if self.terms.len() == 1 {
            if let Some(c) = self.terms.get(&0) {
                if c.is_real() {
                    return Ok(c.re.clone());
                }
            }
        }
        Err(Error::NotRational(self.to_string()))
    }
}

impl fmt::Display for TauPoly {
    /// Canonical form: ascending tau powers, e.g. "1/2 + 3 tau^2".
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let needs_parens = !c.re.is_zero() && !c.im.is_zero();
            match (*k, needs_parens) {
                (0, _) => write!(f, "{c}")?,
                (_, true) => write!(f, "({c}) {}", tau_pow(*k))?,
                (_, false) => {
                    if c.re.is_one() && c.im.is_zero() {
                        write!(f, "{}", tau_pow(*k))?
                    } else {
                        write!(f, "{c} {}", tau_pow(*k))?
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for TauPoly {
    fmt_debug_via_display!();
}

fn tau_pow(k: u32) -> String {
    if k == 1 {
        "tau".to_string()
    } else {
        format!("tau^{k}")
    }
}

/// Exact Bernoulli numbers B_0, B_1, ... with B_1 = -1/2, via the
/// recurrence sum_{j<=m} C(m+1, j) B_j = 0.
pub fn bernoulli(n: usize) -> Rat {
    let mut b: Vec<Rat> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        if m == 0 {
            b.push(Rat::one());
            continue;
        }
        // B_m = -1/(m+1) * sum_{j=0}^{m-1} C(m+1, j) B_j
        let mut acc = Rat::zero();
        for (j, bj) in b.iter().enumerate() {
            acc += &(&binomial(m + 1, j) * bj);
        }
        let bm = -&(&acc / &Rat::from_int((m + 1) as i64));
        b.push(bm);
    }
    b[n].clone()
}

/// Exact binomial coefficient as a rational.
pub fn binomial(n: usize, k: usize) -> Rat {
    if k > n {
        return Rat::zero();
    }
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for j in 0..k.min(n - k) {
        num *= BigInt::from(n - j);
        den *= BigInt::from(j + 1);
    }
    Rat::from_big(num, den)
}

/// Exact factorial as a rational.
pub fn factorial(n: usize) -> Rat {
    let mut acc = BigInt::one();
    for j in 2..=n {
        acc *= BigInt::from(j);
    }
    Rat::from_big(acc, BigInt::one())
}
