//! Fibrewise Moyal product on Weyl sections, plus the Koszul-type
//! contraction operators and their homotopy.
//!
//! The product of two theta-free sections is
//!
//! ```text
//! a * b = sum_m (hbar/2)^m / m! . mult( E^m (a (x) b) )
//! ```
//!
//! where `E = omega^{ij}(x) d/dy^i (x) d/dy^j` hits the left factor with
//! `d/dy^i` and the right with `d/dy^j`. Implementation: widen the two
//! factors into disjoint y blocks, take the graded product once (this
//! settles all Koszul signs, since `E` is even), apply `E` repeatedly,
//! and collapse the blocks. Each application of `E` adds one to the hbar
//! exponent and removes two y's, so term weights are constant across
//! orders and the truncation policy commutes with the product.
//!
//! The same edge operator drives the graph contraction engine, which is
//! why it is exposed crate-internally with explicit slot indices.

use crate::error::{Error, Result};
use crate::rational::Rat;
use crate::section::Section;
use crate::symplectic::SymplecticData;
use std::collections::BTreeSet;

pub(crate) fn require_theta_free(a: &Section) -> Result<()> {
    if a.all_terms(|k| k.theta == 0) {
        Ok(())
    } else {
        Err(Error::UnexpectedGenerator("theta"))
    }
}

/// `sum_{ij} omega^{ij}(x) d/dy_(slot_a, i) d/dy_(slot_b, j)` on a widened
/// section (slots are 0-based, y indices inside a slot 1-based).
pub(crate) fn apply_edge(
    c: &Section,
    om: &SymplecticData,
    slot_a: usize,
    slot_b: usize,
) -> Result<Section> {
    let dim = om.dim();
    let mut out = c.empty_like();
    for i in 1..=dim {
        for j in 1..=dim {
            let w = om.upper(i, j);
            if w.is_zero() {
                continue;
            }
            let d = c
                .derive_y(slot_a * dim + i)?
                .derive_y(slot_b * dim + j)?;
            if d.is_zero() {
                continue;
            }
            out = out.try_add(&d.scale_coeff(w)?)?;
        }
    }
    Ok(out)
}

/// Moyal product of theta-free sections over one symplectic chart.
pub fn moyal(a: &Section, b: &Section, om: &SymplecticData) -> Result<Section> {
    require_theta_free(a)?;
    require_theta_free(b)?;
    if a.dim() != om.dim() {
        return Err(Error::DimensionMismatch {
            expected: om.dim(),
            got: a.dim(),
        });
    }
    let mut c = a.widen(0, 2).try_mul(&b.widen(1, 2))?;
    let mut result = c.collapse();
    let mut m: i64 = 0;
    let mut factor = Rat::one();
    while !c.is_zero() {
        m += 1;
        factor = &factor * &Rat::new(1, 2 * m);
        c = apply_edge(&c, om, 0, 1)?;
        if c.is_zero() {
            break;
        }
        result = result.try_add(&c.collapse().mul_hbar(m).scale(&factor))?;
    }
    Ok(result)
}

/// Graded commutator `[a, b] = a * b - (-1)^(|a||b|) b * a`, extended
/// bilinearly over parity components (parity = form parity in dx).
pub fn moyal_commutator(a: &Section, b: &Section, om: &SymplecticData) -> Result<Section> {
    let mut comm = moyal(a, b, om)?;
    for p in 0..2u8 {
        let bp = b.filter(|k| k.parity() == p);
        if bp.is_zero() {
            continue;
        }
        for q in 0..2u8 {
            let aq = a.filter(|k| k.parity() == q);
            if aq.is_zero() {
                continue;
            }
            let t = moyal(&bp, &aq, om)?;
            let signed = if p == 1 && q == 1 { t } else { t.neg() };
            comm = comm.try_add(&signed)?;
        }
    }
    Ok(comm)
}

/// First-order fibre bracket `sum omega^{ij} (d a/dy^i)(d b/dy^j)`.
pub fn poisson(a: &Section, b: &Section, om: &SymplecticData) -> Result<Section> {
    require_theta_free(a)?;
    require_theta_free(b)?;
    let c = a.widen(0, 2).try_mul(&b.widen(1, 2))?;
    Ok(apply_edge(&c, om, 0, 1)?.collapse())
}

/// The odd operator `delta = dx^k ^ d/dy^k`.
pub fn delta(a: &Section) -> Result<Section> {
    let mut out = a.empty_like();
    for k in 1..=a.dim() {
        out = out.try_add(&a.derive_y(k)?.wedge_dx(k)?)?;
    }
    Ok(out)
}

/// The odd operator `delta* = y^k iota_(dx^k)`.
pub fn delta_star(a: &Section) -> Result<Section> {
    let mut out = a.empty_like();
    for k in 1..=a.dim() {
        out = out.try_add(&a.iota_dx(k)?.mul_y(k)?)?;
    }
    Ok(out)
}

/// The normalized homotopy: on a term with y-degree p and dx-degree q it
/// is `delta*/(p+q)`, and zero when p = q = 0.
pub fn delta_inv(a: &Section) -> Result<Section> {
    let degrees: BTreeSet<i64> = a
        .iter()
        .map(|(k, _)| k.y_degree() + k.dx_degree() as i64)
        .collect();
    let mut out = a.empty_like();
    for s in degrees {
        if s == 0 {
            continue;
        }
        let part = a.filter(|k| k.y_degree() + k.dx_degree() as i64 == s);
        out = out.try_add(&delta_star(&part)?.scale(&Rat::new(1, s)))?;
    }
    Ok(out)
}

/// Projection onto y-degree 0, dx-degree 0 (the `tau_00` of the Hodge
/// identity `delta delta_inv + delta_inv delta + tau_00 = id`).
pub fn project_00(a: &Section) -> Section {
    a.filter(|k| k.y_degree() == 0 && k.dx == 0)
}
