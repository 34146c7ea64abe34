//! Symplectic data on one chart: the matrix `omega_{ij}(x)`, its exact
//! pointwise inverse `omega^{ij}(x)`, and the geometric sections built
//! from them.
//!
//! Inversion strategy: split `omega = C + N` into the constant matrix `C`
//! (invertible over the rationals) plus the positive-x-degree remainder
//! `N`. Over the jet ring `N` is nilpotent modulo the x-degree cap, so
//! `omega^{-1} = sum_k (-C^{-1} N)^k C^{-1}` terminates and the product
//! `omega^{ik} omega_{kj} = delta^i_j` holds exactly modulo that cap.
//! Over the Fourier ring no such splitting terminates, so x-dependent
//! omega is rejected there: torus charts must use a constant form.

use crate::coeff::{Coefficient, RingKind};
use crate::error::{Error, Result};
use crate::rational::Rat;
use crate::section::{Section, TermKey, TruncationPolicy};

/// Exact Gauss-Jordan inverse of a rational matrix; None when singular.
fn invert_rat_matrix(m: &[Vec<Rat>]) -> Option<Vec<Vec<Rat>>> {
    let n = m.len();
    let mut a: Vec<Vec<Rat>> = m.to_vec();
    let mut inv: Vec<Vec<Rat>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Rat::one() } else { Rat::zero() })
                .collect()
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        inv.swap(col, piv);
        let pinv = a[col][col].clone().recip();
        for x in a[col].iter_mut().chain(inv[col].iter_mut()) {
            *x = &*x * &pinv;
        }
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for c in 0..n {
                let d = &a[col][c] * &f;
                a[r][c] = &a[r][c] - &d;
                let d = &inv[col][c] * &f;
                inv[r][c] = &inv[r][c] - &d;
            }
        }
    }
    Some(inv)
}

fn mat_mul_coeff(
    a: &[Vec<Coefficient>],
    b: &[Vec<Coefficient>],
    cap: u32,
) -> Result<Vec<Vec<Coefficient>>> {
    let n = a.len();
    let ring = a[0][0].ring();
    let nv = a[0][0].nvars();
    let mut out = vec![vec![Coefficient::zero(ring, nv); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Coefficient::zero(ring, nv);
            for k in 0..n {
                acc = acc.add(&a[i][k].mul(&b[k][j])?)?;
            }
            out[i][j] = acc.truncate_degree(cap);
        }
    }
    Ok(out)
}

/// The symplectic form on a chart, with its exact inverse.
#[derive(Clone, PartialEq)]
pub struct SymplecticData {
    dim: usize,
    ring: RingKind,
    x_degree_max: u32,
    lower: Vec<Vec<Coefficient>>,
    upper: Vec<Vec<Coefficient>>,
}

impl SymplecticData {
    /// Build from the matrix `omega_{ij}` (row i, column j, 0-based
    /// storage; the public accessors are 1-based). Checks shape, exact
    /// antisymmetry, invertibility of the constant part, and (Fourier)
    /// constancy. The inverse is exact modulo x-degree `x_degree_max`.
    pub fn new(
        dim: usize,
        ring: RingKind,
        lower: Vec<Vec<Coefficient>>,
        x_degree_max: u32,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if dim == 0 || dim % 2 != 0 {
            problems.push(format!("dimension must be a positive even number, got {dim}"));
        }
        if lower.len() != dim || lower.iter().any(|row| row.len() != dim) {
            problems.push(format!("omega matrix must be {dim} x {dim}"));
            return Err(Error::ChartInvalid(problems));
        }
        for (i, row) in lower.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if c.ring() != ring || c.nvars() != dim {
                    problems.push(format!(
                        "omega[{}][{}] is not in the chart coefficient ring",
                        i + 1,
                        j + 1
                    ));
                }
                if ring == RingKind::Fourier && !c.is_zero() && c.as_rational().is_err() {
                    problems.push(format!(
                        "omega[{}][{}] depends on x; torus charts need a constant form",
                        i + 1,
                        j + 1
                    ));
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::ChartInvalid(problems));
        }
        for i in 0..dim {
            for j in 0..dim {
                let sum = lower[i][j].add(&lower[j][i])?;
                if !sum.is_zero() {
                    problems.push(format!(
                        "omega is not antisymmetric at ({}, {})",
                        i + 1,
                        j + 1
                    ));
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::ChartInvalid(problems));
        }

        // Constant part C and its exact inverse.
        let const_part: Vec<Vec<Rat>> = lower
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| c.constant_part().as_rational())
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|_| {
                Error::ChartInvalid(vec![
                    "omega constant part carries tau or imaginary entries".into()
                ])
            })?;
        let c_inv = invert_rat_matrix(&const_part).ok_or_else(|| {
            Error::ChartInvalid(vec!["omega constant part is singular".into()])
        })?;

        let c_inv_coeff: Vec<Vec<Coefficient>> = c_inv
            .iter()
            .map(|row| {
                row.iter()
                    .map(|r| Coefficient::from_rat(ring, dim, r.clone()))
                    .collect()
            })
            .collect();

        // N = omega - C, then M = -(C^-1 N) and the terminating series
        // (I + M + M^2 + ...) C^-1.
        let mut m = vec![vec![Coefficient::zero(ring, dim); dim]; dim];
        let mut n_is_zero = true;
        for i in 0..dim {
            for j in 0..dim {
                let n_ij = lower[i][j]
                    .add(&Coefficient::from_rat(ring, dim, -const_part[i][j].clone()))?;
                if !n_ij.is_zero() {
                    n_is_zero = false;
                }
                m[i][j] = n_ij;
            }
        }
        let upper = if n_is_zero {
            c_inv_coeff
        } else {
            // m currently holds N; fold in -C^{-1}.
            let minus_cinv: Vec<Vec<Coefficient>> = c_inv_coeff
                .iter()
                .map(|row| row.iter().map(|c| c.neg()).collect())
                .collect();
            let m = mat_mul_coeff(&minus_cinv, &m, x_degree_max)?;
            let mut series = identity_coeff(dim, ring);
            let mut power = identity_coeff(dim, ring);
            for _ in 0..=x_degree_max {
                power = mat_mul_coeff(&power, &m, x_degree_max)?;
                if power
                    .iter()
                    .all(|row| row.iter().all(|c| c.is_zero()))
                {
                    break;
                }
                for i in 0..dim {
                    for j in 0..dim {
                        series[i][j] = series[i][j].add(&power[i][j])?;
                    }
                }
            }
            mat_mul_coeff(&series, &c_inv_coeff, x_degree_max)?
        };

        Ok(SymplecticData {
            dim,
            ring,
            x_degree_max,
            lower,
            upper,
        })
    }

    /// Standard constant form: omega_{2k-1, 2k} = 1.
    pub fn standard(dim: usize, ring: RingKind, x_degree_max: u32) -> Result<Self> {
        let mut lower = vec![vec![Coefficient::zero(ring, dim); dim]; dim];
        for k in 0..dim / 2 {
            lower[2 * k][2 * k + 1] = Coefficient::from_rat(ring, dim, Rat::one());
            lower[2 * k + 1][2 * k] = Coefficient::from_rat(ring, dim, -Rat::one());
        }
        SymplecticData::new(dim, ring, lower, x_degree_max)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ring(&self) -> RingKind {
        self.ring
    }

    pub fn x_degree_max(&self) -> u32 {
        self.x_degree_max
    }

    /// omega_{ij}, 1-based.
    pub fn lower(&self, i: usize, j: usize) -> &Coefficient {
        &self.lower[i - 1][j - 1]
    }

    /// omega^{ij}, 1-based: the (i, j) entry of the inverse matrix.
    pub fn upper(&self, i: usize, j: usize) -> &Coefficient {
        &self.upper[i - 1][j - 1]
    }

    /// d omega = 0: the cyclic sum of first derivatives vanishes for every
    /// index triple (automatic when dim = 2).
    pub fn is_closed(&self) -> Result<bool> {
        for i in 1..=self.dim {
            for j in (i + 1)..=self.dim {
                for k in (j + 1)..=self.dim {
                    let s = self
                        .lower(j, k)
                        .derive(i)?
                        .add(&self.lower(k, i).derive(j)?)?
                        .add(&self.lower(i, j).derive(k)?)?;
                    if !s.is_zero() {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// The 2-form omega = sum_{i<j} omega_{ij} dx^i dx^j.
    pub fn two_form(&self, policy: TruncationPolicy) -> Result<Section> {
        let mut s = Section::zero(self.dim, self.ring, policy);
        for i in 1..=self.dim {
            for j in (i + 1)..=self.dim {
                let mut key = TermKey::scalar(self.dim);
                key.dx = (1u64 << (i - 1)) | (1u64 << (j - 1));
                s.insert(key, self.lower(i, j).clone());
            }
        }
        Ok(s)
    }

    /// The weight-one connection seed omega_{ij} y^i dx^j.
    pub fn gamma0(&self, policy: TruncationPolicy) -> Result<Section> {
        let mut s = Section::zero(self.dim, self.ring, policy);
        for i in 1..=self.dim {
            for j in 1..=self.dim {
                let c = self.lower(i, j).clone();
                if c.is_zero() {
                    continue;
                }
                let mut key = TermKey::scalar(self.dim);
                key.y[i - 1] = 1;
                key.dx = 1u64 << (j - 1);
                s.insert(key, c);
            }
        }
        Ok(s)
    }
}

fn identity_coeff(dim: usize, ring: RingKind) -> Vec<Vec<Coefficient>> {
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    if i == j {
                        Coefficient::one(ring, dim)
                    } else {
                        Coefficient::zero(ring, dim)
                    }
                })
                .collect()
        })
        .collect()
}
