//! Configuration-space integrals on the circle: the sawtooth propagator,
//! exact amplitudes of propagator products over ordering cells, wheel
//! values as Bernoulli numbers, and floating-point heat-kernel numerics.
//!
//! Invariants:
//! - all amplitude arithmetic is exact rational; floats appear only in the
//!   numeric cross-checks (heat kernels, regularized propagators);
//! - the integrand lives on the open torus: the blown-up boundary strata
//!   are null sets for these bounded integrands, so cell integration over
//!   the k! orderings of the coordinates is the full integral;
//! - cells are integrated in parallel and reduced by exact addition, so
//!   the result is independent of scheduling.

use crate::error::{Error, Result};
use crate::rational::{bernoulli, factorial, Rat};
use itertools::Itertools;
use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest integer not exceeding the rational.
fn floor_rat(q: &Rat) -> Rat {
    Rat::from_big(q.numer().div_floor(q.denom()), 1.into())
}

/// Sawtooth propagator: the argument reduced mod 1 into (0,1), minus 1/2.
/// Undefined at integers (the diagonal of the two-point configuration
/// space), where only one-sided limits exist.
pub fn propagator(t: &Rat) -> Result<Rat> {
    let f = t - &floor_rat(t);
    if f.is_zero() {
        return Err(Error::PropagatorAtInteger);
    }
    Ok(&f - &Rat::new(1, 2))
}

/// Wheel value `2 zeta(k) / (2 pi i)^k = -B_k / k!` for even `k`, zero for
/// odd `k`.
pub fn wheel_zeta(k: usize) -> Rat {
    if k % 2 == 1 {
        return Rat::zero();
    }
    -(&bernoulli(k) * &factorial(k).recip())
}

/// A product of propagators over marked points on the circle: `k` points,
/// ordered edges `(a, b)` (1-based) each contributing `P(theta_a -
/// theta_b)`, and the subset of points carrying a circle form. The
/// integral is a top form only when every point carries one; otherwise the
/// amplitude is zero by degree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmplitudeSpec {
    pub k: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default)]
    pub dtheta_vertices: Option<Vec<usize>>,
}

impl AmplitudeSpec {
    /// All points marked; edges as given.
    pub fn new(k: usize, edges: Vec<(usize, usize)>) -> Self {
        AmplitudeSpec {
            k,
            edges,
            dtheta_vertices: None,
        }
    }

    /// The oriented `k`-wheel `(1,2), (2,3), ..., (k,1)`.
    pub fn wheel(k: usize) -> Self {
        AmplitudeSpec::new(k, (1..=k).map(|i| (i, i % k + 1)).collect())
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::VertexOutOfRange {
                index: 0,
                vertices: 0,
            });
        }
        for &(a, b) in &self.edges {
            if a == b {
                return Err(Error::TadpoleEdge(a));
            }
            for v in [a, b] {
                if v == 0 || v > self.k {
                    return Err(Error::VertexOutOfRange {
                        index: v,
                        vertices: self.k,
                    });
                }
            }
        }
        Ok(())
    }

    fn is_top_form(&self) -> bool {
        match &self.dtheta_vertices {
            None => true,
            Some(v) => {
                let mut s = v.clone();
                s.sort_unstable();
                s.dedup();
                s.len() == self.k && s.iter().all(|&x| x >= 1 && x <= self.k)
            }
        }
    }
}

/// Sparse polynomial over the cell coordinates with rational coefficients.
#[derive(Clone, Debug, Default)]
struct Poly {
    terms: BTreeMap<Vec<u32>, Rat>,
}

impl Poly {
    fn insert(&mut self, key: Vec<u32>, c: Rat) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let v = &*e.get() + &c;
                if v.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
        }
    }

    fn constant(k: usize, c: Rat) -> Poly {
        let mut p = Poly::default();
        p.insert(vec![0; k], c);
        p
    }

    /// `t_a - t_b + c`.
    fn edge_factor(k: usize, a: usize, b: usize, c: Rat) -> Poly {
        let mut p = Poly::constant(k, c);
        let mut ka = vec![0; k];
        ka[a] = 1;
        p.insert(ka, Rat::one());
        let mut kb = vec![0; k];
        kb[b] = 1;
        p.insert(kb, -Rat::one());
        p
    }

    fn mul(&self, rhs: &Poly) -> Poly {
        let mut out = Poly::default();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                let key: Vec<u32> = ka.iter().zip(kb).map(|(x, y)| x + y).collect();
                out.insert(key, ca * cb);
            }
        }
        out
    }

    /// Antiderivative in variable `i`.
    fn antider(&self, i: usize) -> Poly {
        let mut out = Poly::default();
        for (k, c) in &self.terms {
            let mut key = k.clone();
            key[i] += 1;
            let e = i64::from(key[i]);
            out.insert(key, c * &Rat::new(1, e));
        }
        out
    }

    /// Substitute `t_i := t_j`.
    fn subst_var(&self, i: usize, j: usize) -> Poly {
        let mut out = Poly::default();
        for (k, c) in &self.terms {
            let mut key = k.clone();
            key[j] += key[i];
            key[i] = 0;
            out.insert(key, c.clone());
        }
        out
    }

    /// Substitute `t_i := c`.
    fn subst_const(&self, i: usize, c: &Rat) -> Poly {
        let mut out = Poly::default();
        for (k, coeff) in &self.terms {
            let mut key = k.clone();
            let e = key[i];
            key[i] = 0;
            out.insert(key, coeff * &c.pow(e));
        }
        out
    }

    fn as_rational(&self) -> Rat {
        debug_assert!(self.terms.keys().all(|k| k.iter().all(|&e| e == 0)));
        self.terms.values().next().cloned().unwrap_or_else(Rat::zero)
    }
}

/// Integrand on one ordering cell: each edge is an affine polynomial with
/// offset -1/2 when the source sits above the target, +1/2 otherwise.
fn cell_poly(spec: &AmplitudeSpec, rank: &[usize]) -> Poly {
    let k = spec.k;
    let mut p = Poly::constant(k, Rat::one());
    for &(a1, b1) in &spec.edges {
        let (a, b) = (a1 - 1, b1 - 1);
        let offset = if rank[a] > rank[b] {
            Rat::new(-1, 2)
        } else {
            Rat::new(1, 2)
        };
        p = p.mul(&Poly::edge_factor(k, a, b, offset));
    }
    p
}

/// Integrate over one cell `0 < t_{order[0]} < ... < t_{order[k-1]} < 1`.
/// An optional pinned vertex is held at a constant instead of integrated;
/// coordinates above it then start from that constant.
fn integrate_cell(mut p: Poly, order: &[usize], pinned: Option<(usize, &Rat)>) -> Rat {
    let mut lower = Rat::zero();
    for (m, &v) in order.iter().enumerate() {
        if let Some((pv, s)) = pinned {
            if v == pv {
                p = p.subst_const(v, s);
                lower = s.clone();
                continue;
            }
        }
        let f = p.antider(v);
        let at_lower = f.subst_const(v, &lower);
        p = match order.get(m + 1) {
            Some(&next) => match pinned {
                Some((pv, s)) if next == pv => f.subst_const(v, s),
                _ => f.subst_var(v, next),
            },
            None => f.subst_const(v, &Rat::one()),
        };
        for (key, c) in at_lower.terms {
            p.insert(key, -c);
        }
    }
    p.as_rational()
}

fn amplitude_inner(spec: &AmplitudeSpec, pinned: Option<(usize, &Rat)>) -> Result<Rat> {
    spec.validate()?;
    if !spec.is_top_form() {
        return Ok(Rat::zero());
    }
    let k = spec.k;
    let cells: Vec<Vec<usize>> = (0..k).permutations(k).collect();
    let total = cells
        .into_par_iter()
        .map(|order| {
            let mut rank = vec![0usize; k];
            for (pos, &v) in order.iter().enumerate() {
                rank[v] = pos;
            }
            integrate_cell(cell_poly(spec, &rank), &order, pinned)
        })
        .reduce(Rat::zero, |a, b| &a + &b);
    Ok(total)
}

/// Exact integral over the `k`-torus of the product of edge propagators:
/// the `k!` ordering cells are integrated as polynomials over simplices
/// and summed. Empty edge lists integrate to 1 (the volume).
pub fn amplitude(spec: &AmplitudeSpec) -> Result<Rat> {
    amplitude_inner(spec, None)
}

/// Heat kernel on the unit circle, spectral form:
/// `sum_n exp(-4 pi^2 n^2 t) exp(2 pi i n theta)`.
pub fn heat_kernel_fourier(t: f64, theta: f64) -> f64 {
    let mut sum = 1.0;
    let mut n = 1.0f64;
    loop {
        let term = (-4.0 * std::f64::consts::PI.powi(2) * n * n * t).exp();
        if term < 1e-18 {
            break;
        }
        sum += 2.0 * term * (2.0 * std::f64::consts::PI * n * theta).cos();
        n += 1.0;
    }
    sum
}

/// Heat kernel on the unit circle, Gaussian image sum:
/// `(4 pi t)^{-1/2} sum_m exp(-(theta + m)^2 / (4t))`.
pub fn heat_kernel_images(t: f64, theta: f64) -> f64 {
    let th = theta - theta.floor();
    let mut sum = 0.0;
    let mut m = 0i64;
    loop {
        let a = (-(th + m as f64).powi(2) / (4.0 * t)).exp();
        let b = (-(th - 1.0 - m as f64).powi(2) / (4.0 * t)).exp();
        sum += a + b;
        if a < 1e-18 && b < 1e-18 {
            break;
        }
        m += 1;
    }
    sum / (4.0 * std::f64::consts::PI * t).sqrt()
}

/// Heat kernel `K_t(theta_1 - theta_2)` evaluated through both dual series;
/// errors if they disagree beyond 1e-9.
pub fn heat_kernel(t: f64, theta1: f64, theta2: f64) -> Result<f64> {
    let a = heat_kernel_fourier(t, theta1 - theta2);
    let b = heat_kernel_images(t, theta1 - theta2);
    if (a - b).abs() > 1e-9 {
        return Err(Error::NumericRange(format!(
            "heat kernel dual series disagree: {a} vs {b}"
        )));
    }
    Ok(b)
}

/// Scale-window regularization of the propagator:
/// `sum_{n >= 1} -(exp(-4 pi^2 n^2 eps) - exp(-4 pi^2 n^2 L)) sin(2 pi n
/// theta) / (pi n)`; converges to the sawtooth as `eps -> 0, L -> inf`.
pub fn effective_propagator(eps: f64, big_l: f64, theta1: f64, theta2: f64) -> Result<f64> {
    if !(eps > 0.0 && big_l > eps) {
        return Err(Error::NumericRange(format!(
            "need 0 < eps < L, got eps={eps}, L={big_l}"
        )));
    }
    let theta = theta1 - theta2;
    let mut sum = 0.0;
    let mut n = 1.0f64;
    loop {
        let low = (-4.0 * std::f64::consts::PI.powi(2) * n * n * eps).exp();
        let high = (-4.0 * std::f64::consts::PI.powi(2) * n * n * big_l).exp();
        if low < 1e-18 {
            break;
        }
        sum -= (low - high) * (2.0 * std::f64::consts::PI * n * theta).sin()
            / (std::f64::consts::PI * n);
        n += 1.0;
    }
    Ok(sum)
}

/// Symmetric partial sum of the sawtooth's Fourier series.
pub fn sawtooth_partial_sum(theta: f64, n: usize) -> f64 {
    let mut sum = 0.0;
    for m in 1..=n {
        let mf = m as f64;
        sum -= (2.0 * std::f64::consts::PI * mf * theta).sin() / (std::f64::consts::PI * mf);
    }
    sum
}
