//! Tagged coefficient ring: polynomial jets or torus Fourier sums.
//!
//! Every section stores its x-dependence through [`Coefficient`]. The two
//! variants never mix inside one computation; binary operations return
//! [`Error::MixedCoefficientRings`] when the tags disagree.

use crate::error::{Error, Result};
use crate::fourier::FourierElement;
use crate::jet::JetPoly;
use crate::rational::{Rat, TauPoly};
use std::fmt;

/// Which coefficient ring a chart works over.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RingKind {
    /// Polynomial jets around x = 0 (local charts; no invariant integral).
    Jet,
    /// Finite Fourier sums on the unit torus (global charts; exact integral).
    Fourier,
}

impl RingKind {
    pub fn name(self) -> &'static str {
        match self {
            RingKind::Jet => "jet",
            RingKind::Fourier => "fourier",
        }
    }
}

/// One x-dependent coefficient.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Coefficient {
    Jet(JetPoly),
    Fourier(FourierElement),
}

impl Coefficient {
    pub fn zero(ring: RingKind, nvars: usize) -> Self {
        match ring {
            RingKind::Jet => Coefficient::Jet(JetPoly::zero(nvars)),
            RingKind::Fourier => Coefficient::Fourier(FourierElement::zero(nvars)),
        }
    }

    pub fn one(ring: RingKind, nvars: usize) -> Self {
        match ring {
            RingKind::Jet => Coefficient::Jet(JetPoly::one(nvars)),
            RingKind::Fourier => Coefficient::Fourier(FourierElement::one(nvars)),
        }
    }

    pub fn from_rat(ring: RingKind, nvars: usize, r: Rat) -> Self {
        match ring {
            RingKind::Jet => Coefficient::Jet(JetPoly::constant(nvars, r)),
            RingKind::Fourier => Coefficient::Fourier(FourierElement::from_rat(nvars, r)),
        }
    }

    pub fn parse(ring: RingKind, nvars: usize, text: &str) -> Result<Self> {
        match ring {
            RingKind::Jet => Ok(Coefficient::Jet(JetPoly::parse(text, nvars, None)?)),
            RingKind::Fourier => Ok(Coefficient::Fourier(FourierElement::parse(text, nvars)?)),
        }
    }

    pub fn ring(&self) -> RingKind {
        match self {
            Coefficient::Jet(_) => RingKind::Jet,
            Coefficient::Fourier(_) => RingKind::Fourier,
        }
    }

    pub fn nvars(&self) -> usize {
        match self {
            Coefficient::Jet(p) => p.nvars(),
            Coefficient::Fourier(f) => f.nvars(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coefficient::Jet(p) => p.is_zero(),
            Coefficient::Fourier(f) => f.is_zero(),
        }
    }

    fn check(&self, rhs: &Coefficient) -> Result<()> {
        if self.ring() != rhs.ring() {
            return Err(Error::MixedCoefficientRings(
                self.ring().name(),
                rhs.ring().name(),
            ));
        }
        if self.nvars() != rhs.nvars() {
            return Err(Error::DimensionMismatch {
                expected: self.nvars(),
                got: rhs.nvars(),
            });
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Coefficient) -> Result<Coefficient> {
        self.check(rhs)?;
        Ok(match (self, rhs) {
            (Coefficient::Jet(a), Coefficient::Jet(b)) => Coefficient::Jet(a.add(b)?),
            (Coefficient::Fourier(a), Coefficient::Fourier(b)) => Coefficient::Fourier(a.add(b)?),
            _ => unreachable!(),
        })
    }

    pub fn mul(&self, rhs: &Coefficient) -> Result<Coefficient> {
        self.check(rhs)?;
        Ok(match (self, rhs) {
            (Coefficient::Jet(a), Coefficient::Jet(b)) => Coefficient::Jet(a.mul(b)?),
            (Coefficient::Fourier(a), Coefficient::Fourier(b)) => Coefficient::Fourier(a.mul(b)?),
            _ => unreachable!(),
        })
    }

    pub fn neg(&self) -> Coefficient {
        match self {
            Coefficient::Jet(p) => Coefficient::Jet(p.neg()),
            Coefficient::Fourier(f) => Coefficient::Fourier(f.neg()),
        }
    }

    pub fn scale(&self, r: &Rat) -> Coefficient {
        match self {
            Coefficient::Jet(p) => Coefficient::Jet(p.scale(r)),
            Coefficient::Fourier(f) => Coefficient::Fourier(f.scale(r)),
        }
    }

    /// d/dx^i, 1-based.
    pub fn derive(&self, i: usize) -> Result<Coefficient> {
        Ok(match self {
            Coefficient::Jet(p) => Coefficient::Jet(p.derive(i)?),
            Coefficient::Fourier(f) => Coefficient::Fourier(f.derive(i)?),
        })
    }

    /// x-degree for truncation purposes. Fourier modes are finite sums of
    /// bounded functions; the cap never applies to them.
    pub fn x_degree(&self) -> u32 {
        match self {
            Coefficient::Jet(p) => p.degree(),
            Coefficient::Fourier(_) => 0,
        }
    }

    pub fn truncate_degree(&self, max_degree: u32) -> Coefficient {
        match self {
            Coefficient::Jet(p) => Coefficient::Jet(p.truncate_degree(max_degree)),
            Coefficient::Fourier(f) => Coefficient::Fourier(f.clone()),
        }
    }

    /// Constant term: degree-zero monomial (jets) or zero mode (Fourier),
    /// as a tau-polynomial (jets never carry tau or i).
    pub fn constant_part(&self) -> TauPoly {
        match self {
            Coefficient::Jet(p) => TauPoly::from_rat(p.constant_part()),
            Coefficient::Fourier(f) => f.zero_mode(),
        }
    }

    /// The plain rational value of a constant coefficient, if it is one.
    pub fn as_rational(&self) -> Result<Rat> {
        match self {
            Coefficient::Jet(p) => {
                if p.num_terms() <= 1 {
                    Ok(p.constant_part())
                } else {
                    Err(Error::NotRational(p.to_string()))
                }
            }
            Coefficient::Fourier(f) => {
                if f.num_terms() <= 1 {
                    f.zero_mode().as_rational()
                } else {
                    Err(Error::NotRational(f.to_string()))
                }
            }
        }
    }

    pub fn pow(&self, e: u32) -> Result<Coefficient> {
        let mut acc = Coefficient::one(self.ring(), self.nvars());
        for _ in 0..e {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Jet(p) => write!(f, "{p}"),
            Coefficient::Fourier(e) => write!(f, "{e}"),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
