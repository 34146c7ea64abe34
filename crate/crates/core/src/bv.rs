//! Odd-fibre calculus: the fibrewise de Rham differential, the odd
//! Laplacian and its bracket, contraction against the odd bivector,
//! Berezin integration over the odd fibre, nilpotent exponentials, the
//! master-equation residual, and integration over the base.
//!
//! Invariants:
//! - every operator preserves the dimension, ring, and policy of its input;
//! - `bv_delta` is the graded commutator `d_tm . iota_pi - iota_pi . d_tm`
//!   (`iota_pi` is even, `d_tm` odd) and squares to zero;
//! - `bv_bracket` is the exact failure of `bv_delta` to be a derivation,
//!   so expanding the master equation through it introduces no sign or
//!   normalization slack.

use crate::chart::Chart;
use crate::coeff::{Coefficient, RingKind};
use crate::error::{Error, Result};
use crate::fourier::FourierElement;
use crate::rational::{factorial, Rat};
use crate::section::{Section, TermKey};
use crate::symplectic::SymplecticData;

fn check_compatible(a: &Section, om: &SymplecticData) -> Result<()> {
    if a.dim() != om.dim() {
        return Err(Error::DimensionMismatch {
            expected: om.dim(),
            got: a.dim(),
        });
    }
    if a.ring() != om.ring() {
        return Err(Error::MixedCoefficientRings(a.ring().name(), om.ring().name()));
    }
    Ok(())
}

/// Fibrewise de Rham differential `sum_i theta^i ^ d/dy^i` (odd).
pub fn d_tm(a: &Section) -> Result<Section> {
    let mut out = a.empty_like();
    for i in 1..=a.dim() {
        let d = a.derive_y(i)?;
        if d.is_zero() {
            continue;
        }
        out = out.try_add(&d.wedge_theta(i)?)?;
    }
    Ok(out)
}

/// Chart connection transported to odd-fibre sections: acts as
/// `chart.nabla` dressed per term by `(-1)^(theta-degree)`, the Koszul
/// cost of carrying the connection one-form past the odd fibre block.
/// Agrees with `chart.nabla` on theta-free input; with this dressing the
/// master-equation differential anticommutes with the odd Laplacian, so
/// its square reduces to curvature terms that cancel.
pub fn bv_nabla(a: &Section, chart: &Chart) -> Result<Section> {
    let mut even = a.empty_like();
    let mut odd = a.empty_like();
    for (k, c) in a.iter() {
        if k.theta_degree() % 2 == 0 {
            even.insert(k.clone(), c.clone());
        } else {
            odd.insert(k.clone(), c.clone());
        }
    }
    chart.nabla(&even)?.try_sub(&chart.nabla(&odd)?)
}

/// Contraction against the odd bivector:
/// `(1/2) sum_{ij} omega^{ij}(x) iota_{theta^j} iota_{theta^i}` (even,
/// lowers theta-degree by two; the `i` contraction acts first — the
/// direction every odd contraction in this module shares, calibrated so
/// the transfer's two derivative routes agree).
pub fn iota_pi(a: &Section, om: &SymplecticData) -> Result<Section> {
    check_compatible(a, om)?;
    let mut out = a.empty_like();
    for i in 1..=a.dim() {
        for j in 1..=a.dim() {
            let w = om.upper(i, j);
            if w.is_zero() {
                continue;
            }
            let c = a.iota_theta(i)?.iota_theta(j)?;
            if c.is_zero() {
                continue;
            }
            out = out.try_add(&c.scale_coeff(w)?)?;
        }
    }
    Ok(out.scale(&Rat::new(1, 2)))
}

/// Odd Laplacian `sum_{ij} omega^{ij}(x) d/dy^j iota_{theta^i}`: the odd
/// slot pairs with the first kernel index, matching the contraction
/// direction of `iota_pi` and of the graph-edge kernel.
pub fn bv_delta(a: &Section, om: &SymplecticData) -> Result<Section> {
    check_compatible(a, om)?;
    let mut out = a.empty_like();
    for i in 1..=a.dim() {
        for j in 1..=a.dim() {
            let w = om.upper(i, j);
            if w.is_zero() {
                continue;
            }
            let c = a.iota_theta(i)?.derive_y(j)?;
            if c.is_zero() {
                continue;
            }
            out = out.try_add(&c.scale_coeff(w)?)?;
        }
    }
    Ok(out)
}

/// Odd bracket measuring the second-order part of the Laplacian:
/// `{a, b} = Delta(ab) - (Delta a) b - (-1)^{|a|} a (Delta b)`.
///
/// Inputs of mixed parity are handled by splitting `a` into homogeneous
/// parts; the bracket satisfies `{a,b} = (-1)^{|a||b|} {b,a}` and the
/// Leibniz rule `{a,bc} = {a,b}c + (-1)^{(|a|+1)|b|} b {a,c}`.
pub fn bv_bracket(a: &Section, b: &Section, om: &SymplecticData) -> Result<Section> {
    check_compatible(a, om)?;
    check_compatible(b, om)?;
    let mut out = bv_delta(&a.try_mul(b)?, om)?;
    out = out.try_sub(&bv_delta(a, om)?.try_mul(b)?)?;
    let db = bv_delta(b, om)?;
    for p in [0u8, 1u8] {
        let ap = a.filter(|k| k.parity() == p);
        if ap.is_zero() {
            continue;
        }
        let term = ap.try_mul(&db)?;
        out = if p == 0 {
            out.try_sub(&term)?
        } else {
            out.try_add(&term)?
        };
    }
    Ok(out)
}

/// Berezin integral over the odd fibre along the zero section of the even
/// fibre: restricts to y-degree zero, then contracts the top odd power,
/// `(1/n!) iota_pi^n`. The result carries no y and no theta; x-dependence
/// and dx-forms pass through.
pub fn berezin(a: &Section, om: &SymplecticData) -> Result<Section> {
    check_compatible(a, om)?;
    let n = a.dim() / 2;
    let mut cur = a.filter(|k| k.y_degree() == 0);
    for _ in 0..n {
        cur = iota_pi(&cur, om)?;
    }
    debug_assert!(cur.all_terms(|k| k.theta == 0));
    Ok(cur.scale(&factorial(n).recip()))
}

/// `exp(s)` summed term by term; stops when a power vanishes under the
/// policy and reports `NotNilpotent` if none does within `bound` factors.
pub fn exp_nilpotent(s: &Section, bound: usize) -> Result<Section> {
    let mut sum = Section::one(s.dim(), s.ring(), *s.policy());
    let mut term = sum.clone();
    for k in 1..=bound + 1 {
        term = term.try_mul(s)?.scale(&Rat::new(1, k as i64));
        if term.is_zero() {
            return Ok(sum);
        }
        if k > bound {
            return Err(Error::NotNilpotent);
        }
        sum = sum.try_add(&term)?;
    }
    Ok(sum)
}

/// Master-equation residual of an odd-fibre connection form:
/// `bv_nabla(g) + hbar Delta(g) + (1/2){g, g} + d_tm(curvature)`.
///
/// Computed with one extra unit of weight headroom (the Laplacian of a
/// product loses one unit of y-degree) and re-truncated to the policy of
/// `gamma`, so a zero result certifies the equation at every retained
/// order. The bracket against the weight-zero block of `g` lowers weight
/// by two, so certifying the residual at weight W needs `gamma` exact
/// through weight W + 2; callers with truncated input must widen first.
/// Zero exactly when `gamma` is a transferred flat connection.
pub fn qme_residual(gamma: &Section, chart: &Chart) -> Result<Section> {
    check_compatible(gamma, chart.omega())?;
    let public = *gamma.policy();
    let work = public.bumped(1, 0);
    let g = gamma.with_policy(work);
    let mut r = bv_nabla(&g, chart)?;
    r = r.try_add(&bv_delta(&g, chart.omega())?.mul_hbar(1))?;
    r = r.try_add(&bv_bracket(&g, &g, chart.omega())?.scale(&Rat::new(1, 2)))?;
    r = r.try_add(&d_tm(&chart.curvature_section(work)?)?)?;
    Ok(r.with_policy(public))
}

/// Integral over the base manifold: the zero Fourier mode of the top
/// dx-degree component, times the chart volume. Only defined over the
/// Fourier ring; terms of lower form degree integrate to zero, and any
/// surviving fibre generator is an error.
pub fn integrate(a: &Section, chart: &Chart) -> Result<Section> {
    check_compatible(a, chart.omega())?;
    if a.ring() != RingKind::Fourier {
        return Err(Error::FourierRingRequired);
    }
    if !a.all_terms(|k| k.y_degree() == 0 && k.theta == 0) {
        return Err(Error::UnexpectedGenerator("y or theta under an integral"));
    }
    let dim = a.dim();
    let top: u64 = (1u64 << dim) - 1;
    let mut out = a.empty_like();
    for (key, c) in a.iter() {
        if key.dx != top {
            continue;
        }
        let value = c.constant_part().scale(chart.volume());
        let mut k = TermKey::scalar(dim);
        k.hbar = key.hbar;
        k.u = key.u;
        out.insert(
            k,
            Coefficient::Fourier(FourierElement::constant(dim, value)),
        );
    }
    Ok(out)
}

/// Equivariant pushforward over base and fibres at once:
/// `integrate( u^n hbar^{-n} [exp((hbar/u) iota_pi)(a exp(gamma/hbar))]_{y=theta=0} )`.
///
/// The result is polynomial in `u`; its `u^0` part coincides with the
/// Berezin-route integral `integrate(berezin(a exp(gamma/hbar)))`, and the
/// positive powers record the lower contraction orders.
pub fn equivariant_integrate(a: &Section, gamma: &Section, chart: &Chart) -> Result<Section> {
    check_compatible(a, chart.omega())?;
    check_compatible(gamma, chart.omega())?;
    let n = a.dim() / 2;
    let e = exp_nilpotent(&gamma.div_hbar(1, i64::MIN)?, 2 * n + 1)?;
    let integrand = a.try_mul(&e)?;
    let mut acc = integrand.clone();
    let mut cur = integrand;
    for k in 1..=n {
        cur = iota_pi(&cur, chart.omega())?
            .mul_hbar(1)
            .mul_u(-1)
            .scale(&Rat::new(1, k as i64));
        if cur.is_zero() {
            break;
        }
        acc = acc.try_add(&cur)?;
    }
    let reduced = acc
        .filter(|k| k.y_degree() == 0 && k.theta == 0)
        .mul_u(n as i64)
        .div_hbar(n as i64, i64::MIN)?;
    integrate(&reduced, chart)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::section::TruncationPolicy;
    use crate::testing::{random_section, rng, SectionSpec};

    fn pol() -> TruncationPolicy {
        TruncationPolicy::new(8, 6).with_hbar_max(4)
    }

    fn standard(dim: usize) -> SymplecticData {
        SymplecticData::standard(dim, RingKind::Jet, 6).unwrap()
    }

    fn curved2() -> SymplecticData {
        let j = |t: &str| Coefficient::parse(RingKind::Jet, 2, t).unwrap();
        let lower = vec![vec![j("0"), j("1 + x1")], vec![j("-1 - x1"), j("0")]];
        SymplecticData::new(2, RingKind::Jet, lower, 6).unwrap()
    }

    fn spec(dim: usize) -> SectionSpec {
        SectionSpec {
            dim,
            policy: pol(),
            max_y: 2,
            with_dx: true,
            with_theta: true,
            with_hbar: false,
            x_deg: 1,
            terms: 4,
        }
    }

    #[test]
    fn d_tm_of_seed_is_odd_one_form() {
        let om = standard(2);
        let g0 = om.gamma0(pol()).unwrap();
        let d = d_tm(&g0).unwrap();
        assert_eq!(d.to_string(), "(1) dx1 th2 + (-1) dx2 th1");
        // Squares to zero on anything.
        let mut r = rng(11);
        for _ in 0..4 {
            let a = random_section(&mut r, &spec(4));
            assert!(d_tm(&d_tm(&a).unwrap()).unwrap().is_zero());
        }
    }

    #[test]
    fn laplacian_pairs_y_with_theta() {
        let om = standard(2);
        let a = Section::y(2, RingKind::Jet, pol(), 1)
            .unwrap()
            .wedge_theta(2)
            .unwrap();
        let expected = Section::scalar(2, RingKind::Jet, pol(), om.upper(2, 1).clone());
        assert_eq!(bv_delta(&a, &om).unwrap(), expected);
        assert_eq!(expected.to_string(), "(1)");
    }

    #[test]
    fn bivector_contraction_on_theta_pair() {
        let om = standard(2);
        let a = Section::theta(2, RingKind::Jet, pol(), 2)
            .unwrap()
            .wedge_theta(1)
            .unwrap();
        let expected = Section::scalar(2, RingKind::Jet, pol(), om.upper(1, 2).clone());
        assert_eq!(iota_pi(&a, &om).unwrap(), expected);
        assert_eq!(expected.to_string(), "(-1)");
    }

    #[test]
    fn laplacian_is_graded_commutator_and_squares_to_zero() {
        let mut r = rng(12);
        for om in [standard(2), curved2(), standard(4)] {
            for _ in 0..5 {
                let a = random_section(&mut r, &spec(om.dim()));
                let lhs = bv_delta(&a, &om).unwrap();
                let rhs = d_tm(&iota_pi(&a, &om).unwrap())
                    .unwrap()
                    .try_sub(&iota_pi(&d_tm(&a).unwrap(), &om).unwrap())
                    .unwrap();
                assert_eq!(lhs, rhs);
                assert!(bv_delta(&lhs, &om).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn bracket_symmetry_and_leibniz() {
        let mut r = rng(13);
        for om in [standard(2), curved2()] {
            for _ in 0..4 {
                let raw_a = random_section(&mut r, &spec(om.dim()));
                let raw_b = random_section(&mut r, &spec(om.dim()));
                let raw_c = random_section(&mut r, &spec(om.dim()));
                for (pa, pb) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
                    let a = raw_a.filter(|k| k.parity() == pa);
                    let b = raw_b.filter(|k| k.parity() == pb);
                    let c = raw_c.filter(|k| k.parity() == 0);
                    // {a,b} = (-1)^{|a||b|} {b,a}
                    let ab = bv_bracket(&a, &b, &om).unwrap();
                    let ba = bv_bracket(&b, &a, &om).unwrap();
                    let flipped = if pa * pb == 1 { ba.neg() } else { ba };
                    assert_eq!(ab, flipped);
                    // {a,bc} = {a,b}c + (-1)^{(|a|+1)|b|} b {a,c}
                    let lhs = bv_bracket(&a, &b.try_mul(&c).unwrap(), &om).unwrap();
                    let t1 = ab.try_mul(&c).unwrap();
                    let t2 = b.try_mul(&bv_bracket(&a, &c, &om).unwrap()).unwrap();
                    let signed_t2 = if (pa + 1) * pb % 2 == 1 { t2.neg() } else { t2 };
                    assert_eq!(lhs, t1.try_add(&signed_t2).unwrap());
                }
            }
        }
    }

    #[test]
    fn bracket_of_theta_free_sections_vanishes() {
        let mut r = rng(14);
        let om = standard(2);
        let mut sp = spec(2);
        sp.with_theta = false;
        let a = random_section(&mut r, &sp);
        let b = random_section(&mut r, &sp);
        assert!(bv_bracket(&a, &b, &om).unwrap().is_zero());
    }

    #[test]
    fn berezin_extracts_top_odd_power() {
        let om2 = standard(2);
        let pair = Section::theta(2, RingKind::Jet, pol(), 2)
            .unwrap()
            .wedge_theta(1)
            .unwrap();
        assert_eq!(berezin(&pair, &om2).unwrap().to_string(), "(-1)");
        // The even fibre is restricted to its zero section first.
        let shifted = pair
            .try_add(&pair.mul_y(1).unwrap())
            .unwrap()
            .try_add(&Section::y(2, RingKind::Jet, pol(), 2).unwrap())
            .unwrap();
        assert_eq!(berezin(&shifted, &om2).unwrap().to_string(), "(-1)");
        // x-dependence and dx-forms pass through.
        let weighted = pair
            .scale_coeff(&Coefficient::parse(RingKind::Jet, 2, "x1").unwrap())
            .unwrap()
            .wedge_dx(1)
            .unwrap();
        assert_eq!(berezin(&weighted, &om2).unwrap().to_string(), "(-x1) dx1");
        // Top power in dimension four, standard pairing.
        let om4 = standard(4);
        let mut top = Section::theta(4, RingKind::Jet, pol(), 4).unwrap();
        for i in [3, 2, 1] {
            top = top.wedge_theta(i).unwrap();
        }
        assert_eq!(berezin(&top, &om4).unwrap().to_string(), "(1)");
        // Anything below the top contracts to zero.
        let low = Section::theta(4, RingKind::Jet, pol(), 1).unwrap();
        assert!(berezin(&low, &om4).unwrap().is_zero());
    }

    #[test]
    fn exponentials_terminate_or_report() {
        let th = Section::theta(2, RingKind::Jet, pol(), 1)
            .unwrap()
            .wedge_dx(2)
            .unwrap();
        let e = exp_nilpotent(&th, 5).unwrap();
        assert_eq!(
            e,
            Section::one(2, RingKind::Jet, pol()).try_add(&th).unwrap()
        );
        let y = Section::y(2, RingKind::Jet, pol(), 1).unwrap();
        assert!(matches!(
            exp_nilpotent(&y, 3),
            Err(Error::NotNilpotent)
        ));
        // Under the weight cap the series does terminate with a big bound.
        assert!(exp_nilpotent(&y, 64).is_ok());
    }

    #[test]
    fn master_equation_holds_on_flat_torus() {
        let pol = TruncationPolicy::new(6, 0).with_hbar_max(3);
        let chart = Chart::flat(1, RingKind::Fourier, pol).unwrap();
        let gamma = d_tm(&chart.omega().gamma0(pol).unwrap()).unwrap();
        assert!(qme_residual(&gamma, &chart).unwrap().is_zero());
        // A perturbed connection form fails the equation.
        let junk = Section::y(2, RingKind::Fourier, pol, 1)
            .unwrap()
            .mul_y(2)
            .unwrap()
            .wedge_theta(1)
            .unwrap()
            .mul_hbar(1);
        let wrong = gamma.try_add(&junk).unwrap();
        assert!(!qme_residual(&wrong, &chart).unwrap().is_zero());
    }

    #[test]
    fn base_integral_takes_zero_mode_of_top_form() {
        let pol = TruncationPolicy::new(6, 0).with_hbar_max(3);
        let chart = Chart::flat(1, RingKind::Fourier, pol).unwrap();
        let c = Coefficient::parse(RingKind::Fourier, 2, "3 + e(1,0)").unwrap();
        let a = Section::scalar(2, RingKind::Fourier, pol, c)
            .wedge_dx(2)
            .unwrap()
            .wedge_dx(1)
            .unwrap();
        assert_eq!(integrate(&a, &chart).unwrap().to_string(), "(3)");
        // Lower form degree integrates to zero.
        let low = Section::one(2, RingKind::Fourier, pol).wedge_dx(1).unwrap();
        assert!(integrate(&low, &chart).unwrap().is_zero());
        // Fibre generators are rejected rather than dropped.
        let bad = a.mul_y(1).unwrap();
        assert!(matches!(
            integrate(&bad, &chart),
            Err(Error::UnexpectedGenerator(_))
        ));
        // The jet ring has no translation-invariant integral.
        let jet_chart = Chart::flat(1, RingKind::Jet, pol).unwrap();
        let jet = Section::one(2, RingKind::Jet, pol);
        assert!(matches!(
            integrate(&jet, &jet_chart),
            Err(Error::FourierRingRequired)
        ));
    }

    #[test]
    fn equivariant_route_agrees_with_berezin_route() {
        let pol = TruncationPolicy::new(6, 0).with_hbar_max(3);
        let chart = Chart::flat(1, RingKind::Fourier, pol).unwrap();
        let om = chart.omega();
        let gamma = d_tm(&om.gamma0(pol).unwrap()).unwrap();
        // Candidate observables: 1, a Fourier mode, a fibre-dependent form.
        let one = Section::one(2, RingKind::Fourier, pol);
        let mode = Section::scalar(
            2,
            RingKind::Fourier,
            pol,
            Coefficient::parse(RingKind::Fourier, 2, "2 + e(0,1)").unwrap(),
        );
        let fibre = one
            .try_add(
                &Section::y(2, RingKind::Fourier, pol, 1)
                    .unwrap()
                    .wedge_theta(2)
                    .unwrap(),
            )
            .unwrap();
        for a in [&one, &mode, &fibre] {
            let eq = equivariant_integrate(a, &gamma, &chart).unwrap();
            // Polynomial in u: no negative powers survive.
            assert!(eq.all_terms(|k| k.u >= 0));
            // The u^0 part is the Berezin-route integral.
            let e = exp_nilpotent(&gamma.div_hbar(1, i64::MIN).unwrap(), 3).unwrap();
            let ber = berezin(&a.try_mul(&e).unwrap(), om).unwrap();
            let direct = integrate(&ber, &chart).unwrap();
            assert_eq!(eq.filter(|k| k.u == 0), direct);
        }
        // Frozen value on the flat two-torus with unit observable.
        let eq = equivariant_integrate(&one, &gamma, &chart).unwrap();
        assert_eq!(eq.to_string(), "(1) hbar^-2");
    }
}
