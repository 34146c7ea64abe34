//! Transfer of flat Weyl-bundle data to the odd cotangent bundle and the
//! trace maps built on top of it: the bundle master solution assembled
//! from circle-configuration graph sums, the induced map on observables
//! with its cochain property, grading consistency of the flat connection
//! form, torus traces with their equivariant refinement, the
//! one-loop genus series, and index reports comparing the trace of 1
//! with its exponential-volume side.
//!
//! Invariants maintained here:
//! - every public result is truncated to the policy the structure was
//!   built with, and every reported term within that policy is exact:
//!   graph sums run at bumped internal policies chosen so that no
//!   contributing term is lost to truncation;
//! - graph sums range over the tadpole-free contraction census; the
//!   one-vertex graph contributes its label with unit circle amplitude;
//!   vertex counts are capped by theta-degree, since each interaction
//!   vertex carries exactly one theta and a rank-2n fibre supports at
//!   most 2n of them (plus one root observable);
//! - zero-amplitude graphs are skipped before any section algebra runs.

use std::cmp::max;

use rayon::prelude::*;

use crate::bv::{
    self, berezin, bv_bracket, bv_delta, bv_nabla, d_tm, equivariant_integrate, exp_nilpotent,
    integrate,
};
use crate::chart::Chart;
use crate::circle::{amplitude, wheel_zeta, AmplitudeSpec};
use crate::coeff::RingKind;
use crate::error::{Error, Result};
use crate::fedosov::{solve_fedosov, AbelianConnection};
use crate::graph::{enumerate_contraction_graphs, Graph};
use crate::moyal::{moyal_commutator, require_theta_free};
use crate::rational::{factorial, Rat};
use crate::section::{Section, TermKey, TruncationPolicy};
use crate::weights::{apply_propagator_edge, PropagatorMatrix};

/// The grading vector field `sum_i y^i d/dy^i + 2 hbar d/dhbar`. It acts
/// diagonally on monomials, scaling each term by its weight, so no field
/// data is needed.
pub struct EulerOperator;

impl EulerOperator {
    /// Lie derivative along the grading field: every term scaled by its
    /// weight.
    pub fn apply(a: &Section) -> Section {
        scale_terms(a, |k| Rat::from_int(k.weight()))
    }
}

fn scale_terms(a: &Section, f: impl Fn(&TermKey) -> Rat) -> Section {
    let mut out = a.empty_like();
    for (k, c) in a.iter() {
        out.insert(k.clone(), c.scale(&f(k)));
    }
    out
}

/// Residual of the grading-consistency identity for a flat connection
/// form. With `g = gamma / hbar` and `E` the grading field, a solution of
/// the lifting problem satisfies
/// `nabla E(g) + [g, E(g)]_star = E(omega_c / hbar)`
/// where `omega_c` is the chart's central form (which is y-free, so `E`
/// reduces to `2 hbar d/dhbar` on it). Returns the difference of the two
/// sides, exact at the connection's public policy; identically zero for
/// every `solve_fedosov` output, including charts with hbar corrections.
pub fn euler_rescale_residual(conn: &AbelianConnection) -> Result<Section> {
    let chart = conn.chart();
    // The Moyal pairing of the weight-one block of `g` against its high
    // tail feeds rows at weight W from tail weight W + 2, past the
    // solver's own exactness margin of one extra weight, so re-solve two
    // weights and one hbar order higher (solutions are unique, hence identical where both
    // are exact).
    let public = conn.public_policy();
    let wide = solve_fedosov(chart, public.bumped(2, 1))?;
    let g = wide.gamma().div_hbar(1, i64::MIN)?;
    let eg = EulerOperator::apply(&g);
    let lhs = chart
        .nabla(&eg)?
        .try_add(&moyal_commutator(&g, &eg, chart.omega())?)?;
    let central = chart
        .central_form(wide.internal_policy())?
        .div_hbar(1, i64::MIN)?;
    let rhs = EulerOperator::apply(&central);
    Ok(lhs.try_sub(&rhs)?.with_policy(public))
}

/// Internal policy for a `k`-vertex contraction: each of the `k - 1`
/// surplus edge applications lowers weight by two, so the weight cap is
/// bumped accordingly, and the hbar cap is lifted to the level the weight
/// cap already forces (partial products of labels with negative hbar
/// content may overshoot the final hbar degree before coming back).
fn graph_internal(out: TruncationPolicy, k: usize) -> TruncationPolicy {
    let km1 = k as i64 - 1;
    let w = out.weight_max + 2 * km1;
    out.bumped(2 * km1, 0).with_hbar_max(out.hbar_max.max(w))
}

/// Circle amplitude of a census graph under the engine's stored edge
/// orientation (endpoints converted to the 1-based amplitude convention).
fn circle_amplitude(g: &Graph) -> Result<Rat> {
    let edges = g.edges().iter().map(|&(a, b)| (a + 1, b + 1)).collect();
    amplitude(&AmplitudeSpec::new(g.vertices(), edges))
}

fn max_y_degree(s: &Section) -> usize {
    s.iter().map(|(k, _)| k.y_degree()).max().unwrap_or(0) as usize
}

/// Graph assembly of the bundle master solution from an interaction
/// label: the label itself (one vertex, unit amplitude) plus, for every
/// tadpole-free connected multigraph on up to `2n` vertices, its circle
/// amplitude times the propagator contraction of one label copy per
/// vertex, times `hbar` to the loop order, divided by the order of the
/// graph's automorphism group.
fn assemble_master_solution(
    chart: &Chart,
    label: &Section,
    out: TruncationPolicy,
) -> Result<Section> {
    let dim = chart.dim();
    let n = chart.n();
    let p = PropagatorMatrix::from_symplectic(chart.omega());
    let mut acc = label.with_policy(out);
    let y_max = max_y_degree(label);
    // Labels without fibre coordinates cannot host an edge, and every
    // vertex of a connected multi-vertex graph has degree at least one.
    if label.is_zero() || y_max == 0 {
        return Ok(acc);
    }
    let h_min = label.min_hbar().unwrap_or(0);
    for k in 2..=(2 * n) {
        let km1 = k as i64 - 1;
        let hbar_room = (out.hbar_max - (k as i64) * h_min + km1).max(0) as usize;
        let e_cap = (k * y_max / 2).min(hbar_room);
        if e_cap + 1 < k {
            continue;
        }
        let internal = graph_internal(out, k);
        let li = label.with_policy(internal);
        let mut base = li.widen(0, k);
        for s in 1..k {
            base = base.try_mul(&li.widen(s, k))?;
        }
        let graphs = enumerate_contraction_graphs(k, y_max, e_cap, false);
        let contributions = graphs
            .into_par_iter()
            .map(|g| -> Result<Section> {
                let amp = circle_amplitude(&g)?;
                if amp.is_zero() {
                    return Ok(Section::zero(dim, chart.ring(), out));
                }
                let mut prod = base.clone();
                for &(a, b) in g.edges() {
                    if prod.is_zero() {
                        break;
                    }
                    prod = apply_propagator_edge(&prod, &p, a, b)?;
                }
                let aut = Rat::from_int(g.automorphism_order() as i64);
                Ok(prod
                    .collapse()
                    .mul_hbar(g.loop_order())
                    .scale(&(&amp / &aut))
                    .with_policy(out))
            })
            .collect::<Result<Vec<_>>>()?;
        for c in contributions {
            acc = acc.try_add(&c)?;
        }
    }
    Ok(acc)
}

/// Cached transfer data for one chart at one public truncation policy.
///
/// Construction solves the lifting problem at a widened policy (enough
/// extra weight that every graph label stays exact), forms the
/// interaction label by applying the fibre de Rham differential to the
/// connection form, and assembles the bundle master solution. Accessors
/// report at the public policy; the residual operators do their
/// arithmetic two weight steps higher (the antibracket against the
/// weight-zero block of the master solution reaches that far down) so
/// the public terms they return are exact.
pub struct Transfer {
    conn: AbelianConnection,
    label: Section,
    public: TruncationPolicy,
    work: TruncationPolicy,
    gamma_inf: Section,
}

impl Transfer {
    pub fn new(chart: &Chart, public: TruncationPolicy) -> Result<Self> {
        let n = chart.n() as i64;
        let work = public.bumped(2, 0);
        // A k-vertex graph sum needs its labels exact k - 1 weight steps
        // above the output cap; the deepest sum roots an observable on up
        // to 2n interaction vertices.
        let wide = work.bumped(2 * n + 1, 0);
        let conn = solve_fedosov(chart, wide)?;
        let label = d_tm(&conn.gamma_public())?;
        let gamma_inf = assemble_master_solution(chart, &label, work)?;
        Ok(Transfer {
            conn,
            label,
            public,
            work,
            gamma_inf,
        })
    }

    pub fn chart(&self) -> &Chart {
        self.conn.chart()
    }

    /// The widened connection backing this transfer.
    pub fn connection(&self) -> &AbelianConnection {
        &self.conn
    }

    pub fn public_policy(&self) -> TruncationPolicy {
        self.public
    }

    /// The bundle master solution at the public policy.
    pub fn gamma_infinity(&self) -> Section {
        self.gamma_inf.with_policy(self.public)
    }

    /// Master-equation residual of the assembled solution
    /// (`bv_nabla g + hbar Delta g + (1/2){g, g} + d_tm(curvature)`),
    /// exact at the public policy; the working-policy solution carries
    /// the extra weight the antibracket reaches down for.
    pub fn qme_residual(&self) -> Result<Section> {
        let chart = self.conn.chart();
        Ok(bv::qme_residual(&self.gamma_inf, chart)?.with_policy(self.public))
    }

    /// Lift a symbol to its flat section. Delegates to the widened
    /// connection, so the result carries enough exact weight to be used
    /// as a graph-sum root.
    pub fn quantize(&self, f: &Section) -> Result<Section> {
        self.conn.quantize(f)
    }

    /// Star product of two symbols, reported at the widened policy of the
    /// backing connection.
    pub fn star(&self, f: &Section, g: &Section) -> Result<Section> {
        self.conn.star(f, g)
    }

    /// Push an observable through the graph expansion: the rooted sum
    /// with the observable at one vertex and interaction labels at the
    /// rest. Constants pass through unchanged (a root without fibre
    /// coordinates cannot host an edge), and on charts whose interaction
    /// label is y-free the map is the identity.
    pub fn local_to_global(&self, o: &Section) -> Result<Section> {
        require_theta_free(o)?;
        Ok(self.rooted_sum(o, self.work)?.with_policy(self.public))
    }

    /// Difference of the two routes a derivative can take through the
    /// transfer: differentiate flatly and then push forward, or push
    /// forward and then apply the odd-side differential
    /// `bv_nabla + hbar Delta + {gamma_inf, -}`. Exact at the public
    /// policy and identically zero; the two routes share no code beyond
    /// the rooted graph sum itself.
    pub fn cochain_residual(&self, o: &Section) -> Result<Section> {
        require_theta_free(o)?;
        let chart = self.conn.chart();
        let o_wide = o.with_policy(self.conn.internal_policy());
        let lhs = self.rooted_sum(&self.conn.flat_derivative(&o_wide)?, self.work)?;
        let oinf = self.rooted_sum(&o_wide, self.work)?;
        let om = chart.omega();
        let rhs = bv_nabla(&oinf, chart)?
            .try_add(&bv_delta(&oinf, om)?.mul_hbar(1))?
            .try_add(&bv_bracket(&self.gamma_inf, &oinf, om)?)?;
        Ok(lhs.try_sub(&rhs)?.with_policy(self.public))
    }

    /// Rooted graph sum: the observable occupies one vertex of each
    /// census graph (summed over positions, which absorbs the rooted
    /// symmetry factors against the unrooted automorphism count), with
    /// interaction labels everywhere else. Odd observable components
    /// pick up the measure-ordering sign `(-1)^(k-1)` on `k`-vertex
    /// graphs; interaction labels are even, so no other signs arise.
    fn rooted_sum(&self, o: &Section, out: TruncationPolicy) -> Result<Section> {
        let chart = self.conn.chart();
        let dim = chart.dim();
        let n = chart.n();
        let p = PropagatorMatrix::from_symplectic(chart.omega());
        let acc = o.with_policy(out);
        let y_label = max_y_degree(&self.label);
        if o.is_zero() || self.label.is_zero() || y_label == 0 {
            return Ok(acc);
        }
        let parts: Vec<(Section, bool)> = [
            (o.filter(|k| k.parity() == 0), false),
            (o.filter(|k| k.parity() == 1), true),
        ]
        .into_iter()
        .filter(|(s, _)| !s.is_zero() && max_y_degree(s) > 0)
        .collect();
        if parts.is_empty() {
            return Ok(acc);
        }
        let mut acc = acc;
        let y_root = parts.iter().map(|(s, _)| max_y_degree(s)).max().unwrap();
        let deg_cap = max(y_label, y_root);
        let h_label = self.label.min_hbar().unwrap_or(0);
        let h_root = o.min_hbar().unwrap_or(0);
        for k in 2..=(2 * n + 1) {
            let km1 = k as i64 - 1;
            let hbar_room = (out.hbar_max - km1 * h_label - h_root + km1).max(0) as usize;
            let e_cap = (((k - 1) * y_label + y_root) / 2).min(hbar_room);
            if e_cap + 1 < k {
                continue;
            }
            let internal = graph_internal(out, k);
            let li = self.label.with_policy(internal);
            let parts_k: Vec<(Section, bool)> = parts
                .iter()
                .map(|(s, odd)| (s.with_policy(internal), *odd))
                .collect();
            let graphs = enumerate_contraction_graphs(k, deg_cap, e_cap, false);
            let contributions = graphs
                .into_par_iter()
                .map(|g| -> Result<Section> {
                    let mut total = Section::zero(dim, chart.ring(), out);
                    let amp = circle_amplitude(&g)?;
                    if amp.is_zero() {
                        return Ok(total);
                    }
                    let aut = Rat::from_int(g.automorphism_order() as i64);
                    let scale = &amp / &aut;
                    for root in 0..k {
                        for (part, odd) in &parts_k {
                            let mut prod = if root == 0 {
                                part.widen(0, k)
                            } else {
                                li.widen(0, k)
                            };
                            for s in 1..k {
                                let f = if s == root { part } else { &li };
                                prod = prod.try_mul(&f.widen(s, k))?;
                            }
                            for &(a, b) in g.edges() {
                                if prod.is_zero() {
                                    break;
                                }
                                prod = apply_propagator_edge(&prod, &p, a, b)?;
                            }
                            let mut c = prod
                                .collapse()
                                .mul_hbar(g.loop_order())
                                .scale(&scale)
                                .with_policy(out);
                            if *odd && km1 % 2 == 1 {
                                c = c.neg();
                            }
                            total = total.try_add(&c)?;
                        }
                    }
                    Ok(total)
                })
                .collect::<Result<Vec<_>>>()?;
            for c in contributions {
                acc = acc.try_add(&c)?;
            }
        }
        Ok(acc)
    }
}

/// Assemble the bundle master solution for a given flat connection form.
/// The normalized lifting problem has a unique solution per chart and
/// policy, so the input is checked against a fresh solve; any mismatch
/// means the form is not flat and is reported with the offending term
/// count and lowest differing weight.
pub fn gamma_infinity(gamma: &Section, chart: &Chart) -> Result<Section> {
    let public = *gamma.policy();
    let solved = solve_fedosov(chart, public)?;
    let expect = solved.gamma_public();
    if *gamma != expect {
        let diff = gamma.try_sub(&expect)?;
        let weight = diff.iter().map(|(k, _)| k.weight()).min().unwrap_or(0);
        return Err(Error::NotFlat {
            terms: diff.num_terms(),
            weight,
        });
    }
    Ok(Transfer::new(chart, public)?.gamma_infinity())
}

/// A flat torus chart prepared for global traces: Fourier coefficient
/// ring (fibre and base integrals are read off Fourier mode zero), a
/// flat connection, and a transfer built with `4n` extra weight and `2n`
/// extra hbar headroom so that trace rows up to the public hbar cap stay
/// exact after multiplying by the exponential of the master solution
/// (each factor of which lowers weight by at most two and hbar by at
/// most one, at most `2n` times before the fibre volume saturates).
pub struct GlobalSetup {
    transfer: Transfer,
    public: TruncationPolicy,
}

impl GlobalSetup {
    pub fn new(chart: &Chart, public: TruncationPolicy) -> Result<Self> {
        if chart.ring() != RingKind::Fourier {
            return Err(Error::FourierRingRequired);
        }
        let mut problems = chart.validate();
        if !chart.is_flat_connection() {
            problems.push("global trace setup needs a flat connection".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::ChartInvalid(problems));
        }
        let n = chart.n() as i64;
        let transfer = Transfer::new(chart, public.bumped(4 * n, 2 * n))?;
        Ok(GlobalSetup { transfer, public })
    }

    pub fn transfer(&self) -> &Transfer {
        &self.transfer
    }

    pub fn chart(&self) -> &Chart {
        self.transfer.chart()
    }

    pub fn public_policy(&self) -> TruncationPolicy {
        self.public
    }

    /// Trace of a function symbol: lift it to a flat section, push it
    /// through the graph expansion, multiply by the exponential of the
    /// master solution, take the fibrewise odd integral and then the
    /// zero Fourier mode of the top form. Rows are exact
    /// `(hbar exponent, value)` pairs up to the public hbar cap, shifted
    /// by `hbar^n`; with the calibrated odd-contraction direction this
    /// makes `hbar^n * trace(1)` equal `+ integral of omega^n / n!`,
    /// the value the exponential side of the index comparison produces
    /// (flat torus calibration runs in dimensions 2 and 4). Errors with
    /// `NotRational` if a row fails to be a plain rational, which cannot
    /// happen for symbols built from finitely many Fourier modes.
    pub fn trace(&self, f: &Section) -> Result<Vec<(i64, Rat)>> {
        let o = self.transfer.quantize(f)?;
        let oinf = self.transfer.rooted_sum(&o, self.transfer.work)?;
        let v = self.odd_integral(&oinf)?;
        self.laurent_rows(&v)
    }

    /// Odd (Berezin-route) integral of a transferred observable against
    /// the exponential of the master solution.
    fn odd_integral(&self, oinf: &Section) -> Result<Section> {
        let chart = self.chart();
        let n = chart.n();
        let e = exp_nilpotent(&self.transfer.gamma_inf.div_hbar(1, i64::MIN)?, 2 * n + 1)?;
        let b = berezin(&oinf.try_mul(&e)?, chart.omega())?;
        integrate(&b, chart)
    }

    fn laurent_rows(&self, v: &Section) -> Result<Vec<(i64, Rat)>> {
        let n = self.chart().n() as i64;
        let sign = trace_sign(n);
        let mut rows = Vec::new();
        for (key, c) in v.iter() {
            if key.hbar + n > self.public.hbar_max {
                continue;
            }
            let val = c.constant_part().as_rational()?;
            if !val.is_zero() {
                rows.push((key.hbar + n, &val * &sign));
            }
        }
        Ok(rows)
    }

    /// Equivariant refinement of the trace: same transfer and
    /// normalization, but the fibre integral runs through the
    /// contraction-order expansion, reporting rows
    /// `(u exponent, hbar exponent, value)`. The `u^0` rows reproduce
    /// `trace` exactly; on a flat torus the other rows vanish, because
    /// lower contraction orders leave uncontracted thetas that the
    /// fibre-constant projection kills.
    pub fn equivariant_trace(&self, f: &Section) -> Result<Vec<(i64, i64, Rat)>> {
        let o = self.transfer.quantize(f)?;
        let oinf = self.transfer.rooted_sum(&o, self.transfer.work)?;
        let v = equivariant_integrate(&oinf, &self.transfer.gamma_inf, self.chart())?;
        let n = self.chart().n() as i64;
        let sign = trace_sign(n);
        let mut rows = Vec::new();
        for (key, c) in v.iter() {
            if key.hbar + n > self.public.hbar_max {
                continue;
            }
            let val = c.constant_part().as_rational()?;
            if !val.is_zero() {
                rows.push((key.u, key.hbar + n, &val * &sign));
            }
        }
        Ok(rows)
    }

    /// Compare the trace of 1 with the exponential-volume side it equals
    /// on a flat torus, where the curvature contribution to the genus
    /// series is trivial: rows of `integral of exp(-omega_c / hbar)`
    /// over the base, with `omega_c` the chart's central form (hbar
    /// corrections to the symplectic structure included).
    pub fn index_report(&self) -> Result<IndexReport> {
        let chart = self.chart();
        let one = Section::one(chart.dim(), chart.ring(), self.public);
        let trace_side = self.trace(&one)?;
        let n = chart.n();
        let c = chart.central_form(self.transfer.work)?;
        let e = exp_nilpotent(&c.neg().div_hbar(1, i64::MIN)?, 2 * n + 1)?;
        let v = integrate(&e, chart)?;
        let mut exponential_side = Vec::new();
        for (key, co) in v.iter() {
            if key.hbar > self.public.hbar_max {
                continue;
            }
            let val = co.constant_part().as_rational()?;
            if !val.is_zero() {
                exponential_side.push((key.hbar, val));
            }
        }
        let matches = trace_side == exponential_side;
        Ok(IndexReport {
            trace_side,
            exponential_side,
            matches,
        })
    }
}

/// Exact Laurent rows of the two sides of the index comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexReport {
    pub trace_side: Vec<(i64, Rat)>,
    pub exponential_side: Vec<(i64, Rat)>,
    pub matches: bool,
}

/// Exponential of the one-loop wheel series. The log has one term per
/// even character component: component `m` contributes
/// `wheel_zeta(m) * (m-1)!` (equivalently `-B_m / m` in Bernoulli terms)
/// at the `m/2`-th power of the inverse equivariant parameter; odd
/// components contribute nothing. Input `ch[i]` is the value of the
/// `(i+1)`-th component; output `out[j]` is the exact coefficient of the
/// `j`-th power, for `j = 0..=order`.
pub fn a_hat_series(ch: &[Rat], order: usize) -> Vec<Rat> {
    let mut log = vec![Rat::zero(); order + 1];
    for (i, c) in ch.iter().enumerate() {
        let m = i + 1;
        if m % 2 != 0 || c.is_zero() {
            continue;
        }
        let j = m / 2;
        if j <= order {
            let w = wheel_zeta(m) * factorial(m - 1);
            log[j] = &log[j] + &(&w * c);
        }
    }
    let mut out = vec![Rat::zero(); order + 1];
    out[0] = Rat::one();
    let mut term = out.clone();
    for p in 1..=order {
        let mut next = vec![Rat::zero(); order + 1];
        for a in 0..=order {
            if term[a].is_zero() {
                continue;
            }
            for b in 1..=(order - a) {
                if log[b].is_zero() {
                    continue;
                }
                next[a + b] = &next[a + b] + &(&term[a] * &log[b]);
            }
        }
        let inv_p = Rat::new(1, p as i64);
        for v in next.iter_mut() {
            *v = &*v * &inv_p;
        }
        if next.iter().all(|v| v.is_zero()) {
            break;
        }
        for a in 0..=order {
            out[a] = &out[a] + &next[a];
        }
        term = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::Coefficient;
    use crate::graph::Graph;
    use crate::testing;
    use crate::weights::{contract_graph, DecoratedGraph};

    fn pol(w: i64, j: u32, h: i64) -> TruncationPolicy {
        TruncationPolicy::new(w, j).with_hbar_max(h)
    }

    fn jc(dim: usize, t: &str) -> Coefficient {
        Coefficient::parse(RingKind::Jet, dim, t).unwrap()
    }

    fn fc(t: &str) -> Coefficient {
        Coefficient::parse(RingKind::Fourier, 2, t).unwrap()
    }

    /// Curved dim-2 chart: standard omega, Gamma_{111} = x2, which keeps
    /// nabla omega = 0. Optional constant correction `omega_1 = c omega`.
    fn curved2(policy: TruncationPolicy, correction: Option<&str>) -> Chart {
        let lower = vec![vec![jc(2, "0"), jc(2, "1")], vec![jc(2, "-1"), jc(2, "0")]];
        let corr = match correction {
            None => Vec::new(),
            Some(c) => {
                let neg = format!("-{}", c);
                vec![(
                    1,
                    vec![
                        vec![jc(2, "0"), jc(2, c)],
                        vec![jc(2, &neg), jc(2, "0")],
                    ],
                )]
            }
        };
        Chart::new(
            1,
            RingKind::Jet,
            lower,
            &[([1, 1, 1], jc(2, "x2"))],
            corr,
            policy,
            Rat::one(),
        )
        .unwrap()
    }

    /// Curved dim-2 chart whose two independent Christoffel entries give
    /// the interaction label components along every odd direction, so
    /// multi-vertex graph contributions survive contraction.
    fn curved2_full(policy: TruncationPolicy) -> Chart {
        let lower = vec![vec![jc(2, "0"), jc(2, "1")], vec![jc(2, "-1"), jc(2, "0")]];
        Chart::new(
            1,
            RingKind::Jet,
            lower,
            &[([1, 1, 1], jc(2, "x2")), ([2, 2, 2], jc(2, "x1"))],
            Vec::new(),
            policy,
            Rat::one(),
        )
        .unwrap()
    }

    fn torus(n: usize, policy: TruncationPolicy) -> Chart {
        Chart::flat(n, RingKind::Fourier, policy).unwrap()
    }

    /// Flat torus with a constant hbar correction `omega_1 = c omega`.
    fn torus_corrected(c: &str, policy: TruncationPolicy) -> Chart {
        let lower = vec![vec![fc("0"), fc("1")], vec![fc("-1"), fc("0")]];
        let neg = format!("-({})", c);
        let corr = vec![(
            1,
            vec![vec![fc("0"), fc(c)], vec![fc(&neg), fc("0")]],
        )];
        Chart::new(1, RingKind::Fourier, lower, &[], corr, policy, Rat::one()).unwrap()
    }

    #[test]
    fn flat_chart_master_solution_is_the_interaction_label() -> Result<()> {
        let public = pol(4, 4, 2);
        let chart = Chart::flat(1, RingKind::Jet, public)?;
        let t = Transfer::new(&chart, public)?;
        assert_eq!(
            t.gamma_infinity().to_string(),
            "(1) dx1 th2 + (-1) dx2 th1"
        );
        assert!(t.qme_residual()?.is_zero());
        Ok(())
    }

    #[test]
    fn curved_chart_master_solution_solves_the_master_equation() -> Result<()> {
        let public = pol(5, 10, 2);
        let chart = curved2_full(public);
        let t = Transfer::new(&chart, public)?;
        // The assembled solution has genuine multi-vertex content beyond
        // the one-vertex seed: the two-vertex doubled edge contributes at
        // hbar^1 with a full theta pair.
        let multi = t
            .gamma_infinity()
            .filter(|k| k.theta_degree() >= 2);
        assert!(!multi.is_zero());
        assert!(t.qme_residual()?.is_zero());
        // The degenerate single-entry chart is a control: its label's odd
        // blocks repeat a generator wherever the fibre pairing is fed, so
        // every multi-vertex contraction vanishes and the seed is already
        // the full solution there.
        let chart0 = curved2(public, None);
        let t0 = Transfer::new(&chart0, public)?;
        let seed0 = d_tm(&solve_fedosov(&chart0, public.bumped(1, 0))?.gamma_public())?;
        assert!(t0
            .gamma_infinity()
            .try_sub(&seed0.with_policy(public))?
            .is_zero());
        assert!(t0.qme_residual()?.is_zero());
        Ok(())
    }

    #[test]
    fn constants_and_fibreless_observables_pass_through() -> Result<()> {
        let public = pol(4, 8, 2);
        let chart = curved2(public, None);
        let t = Transfer::new(&chart, public)?;
        let one = Section::one(2, RingKind::Jet, public);
        assert_eq!(t.local_to_global(&one)?, one);
        // On a flat chart the interaction label is y-free, so the map is
        // the identity on anything.
        let flat = Chart::flat(1, RingKind::Jet, public)?;
        let tf = Transfer::new(&flat, public)?;
        let f = Section::parse(2, RingKind::Jet, public, "x1 + 3 x2 x2")?;
        assert_eq!(tf.local_to_global(&f)?, f);
        Ok(())
    }

    #[test]
    fn rejects_connection_forms_that_are_not_flat() -> Result<()> {
        let public = pol(3, 6, 1);
        let chart = curved2(public, None);
        let good = solve_fedosov(&chart, public)?.gamma_public();
        assert!(gamma_infinity(&good, &chart).is_ok());
        let bump = Section::parse(2, RingKind::Jet, public, "y1 y2 y2 dx1")?;
        let bad = good.try_add(&bump)?;
        match gamma_infinity(&bad, &chart) {
            Err(Error::NotFlat { terms, weight }) => {
                assert!(terms > 0);
                assert_eq!(weight, 3);
            }
            other => panic!("expected NotFlat, got {:?}", other.map(|s| s.to_string())),
        }
        Ok(())
    }

    #[test]
    fn derivative_routes_agree_on_flat_charts() -> Result<()> {
        let public = pol(4, 6, 2);
        let chart = Chart::flat(1, RingKind::Jet, public)?;
        let t = Transfer::new(&chart, public)?;
        let mut rng = testing::rng(11);
        for with_dx in [false, true] {
            for _ in 0..3 {
                let spec = testing::SectionSpec {
                    dim: 2,
                    policy: public,
                    max_y: 2,
                    with_dx,
                    with_theta: false,
                    with_hbar: true,
                    x_deg: 2,
                    terms: 4,
                };
                let o = testing::random_section(&mut rng, &spec);
                assert!(
                    t.cochain_residual(&o)?.is_zero(),
                    "cochain residual nonzero, with_dx={}",
                    with_dx
                );
            }
        }
        Ok(())
    }

    #[test]
    fn derivative_routes_agree_on_curved_charts() -> Result<()> {
        let public = pol(4, 8, 2);
        let chart = curved2(public, None);
        let t = Transfer::new(&chart, public)?;
        let mut rng = testing::rng(23);
        for with_dx in [false, true] {
            for _ in 0..2 {
                let spec = testing::SectionSpec {
                    dim: 2,
                    policy: public,
                    max_y: 2,
                    with_dx,
                    with_theta: false,
                    with_hbar: true,
                    x_deg: 2,
                    terms: 3,
                };
                let o = testing::random_section(&mut rng, &spec);
                assert!(
                    t.cochain_residual(&o)?.is_zero(),
                    "cochain residual nonzero, with_dx={}",
                    with_dx
                );
            }
        }
        Ok(())
    }

    #[test]
    fn grading_identity_holds_for_solved_connections() -> Result<()> {
        let flat = Chart::flat(1, RingKind::Jet, pol(4, 4, 2))?;
        let c = solve_fedosov(&flat, pol(4, 4, 2))?;
        assert!(euler_rescale_residual(&c)?.is_zero());

        let public = pol(6, 10, 3);
        let curved = curved2(public, None);
        let c = solve_fedosov(&curved, public)?;
        assert!(euler_rescale_residual(&c)?.is_zero());

        let corrected = curved2(public, Some("1/3"));
        let c = solve_fedosov(&corrected, public)?;
        assert!(euler_rescale_residual(&c)?.is_zero());
        Ok(())
    }

    #[test]
    fn genus_series_matches_its_generating_function() {
        // No components: the series is 1.
        assert_eq!(
            a_hat_series(&[], 3),
            vec![Rat::one(), Rat::zero(), Rat::zero(), Rat::zero()]
        );
        // Second component alone: log coefficient -1/12, squared term
        // 1/288 from the exponential.
        let ch2 = vec![Rat::zero(), Rat::one()];
        assert_eq!(
            a_hat_series(&ch2, 2),
            vec![Rat::one(), Rat::new(-1, 12), Rat::new(1, 288)]
        );
        // Odd components are ignored entirely.
        let noisy = vec![Rat::new(7, 2), Rat::one(), Rat::new(-4, 3)];
        assert_eq!(a_hat_series(&noisy, 2), a_hat_series(&ch2, 2));

        // Generating-function oracle: for a sum of formal line elements
        // with parameters x_j, the series equals the product over j of
        // (x_j/2) / sinh(x_j/2), expanded with x^2 carrying one power of
        // the grading variable, while the m-th input component is
        // sum_j x_j^m / m!.
        let roots = [Rat::one(), Rat::new(1, 2), Rat::new(-2, 3)];
        let order = 3;
        let mut ch = Vec::new();
        for m in 1..=(2 * order) {
            let mut s = Rat::zero();
            for x in &roots {
                s = &s + &x.pow(m as u32);
            }
            ch.push(&s / &factorial(m));
        }
        let mut expected = vec![Rat::zero(); order + 1];
        expected[0] = Rat::one();
        for x in &roots {
            // t / sinh t = 1 / sum_i t^{2i} / (2i+1)!, graded by
            // t^2 = (x^2 / 4) * (one power of the grading variable).
            let t2 = &(x * x) / &Rat::from_int(4);
            let mut den = vec![Rat::zero(); order + 1];
            for (i, d) in den.iter_mut().enumerate() {
                *d = &t2.pow(i as u32) / &factorial(2 * i + 1);
            }
            let mut inv = vec![Rat::zero(); order + 1];
            inv[0] = Rat::one();
            for i in 1..=order {
                let mut s = Rat::zero();
                for j in 1..=i {
                    s = &s + &(&den[j] * &inv[i - j]);
                }
                inv[i] = -&s;
            }
            let mut next = vec![Rat::zero(); order + 1];
            for a in 0..=order {
                for b in 0..=(order - a) {
                    next[a + b] = &next[a + b] + &(&expected[a] * &inv[b]);
                }
            }
            expected = next;
        }
        assert_eq!(a_hat_series(&ch, order), expected);
    }

    /// 2x2 rational matrix helpers for the cycle-contraction bridge.
    fn mat_mul(a: &[[Rat; 2]; 2], b: &[[Rat; 2]; 2]) -> [[Rat; 2]; 2] {
        let mut out = [
            [Rat::zero(), Rat::zero()],
            [Rat::zero(), Rat::zero()],
        ];
        for i in 0..2 {
            for j in 0..2 {
                for (k, row) in b.iter().enumerate() {
                    out[i][j] = &out[i][j] + &(&a[i][k] * &row[j]);
                }
            }
        }
        out
    }

    fn mat_trace_pow(m: &[[Rat; 2]; 2], k: usize) -> Rat {
        let mut acc = m.clone();
        for _ in 1..k {
            acc = mat_mul(&acc, m);
        }
        &acc[0][0] + &acc[1][1]
    }

    #[test]
    fn cycle_contractions_assemble_with_the_cyclic_symmetry_factor() -> Result<()> {
        // Engine contribution of the k-cycle with a quadratic label
        // sum_ij M_ij y^i y^j: circle amplitude over the automorphism
        // count times hbar times the contraction. The claim pinned here:
        // it equals wheel_zeta(k) * 2^{k-1} / k * tr((M Omega)^k), the
        // trace factor carrying 2 per vertex (two derivative slots on a
        // quadratic label) and the 1/k surviving from the 2k
        // automorphisms of the cycle against the reflection pair.
        let policy = pol(12, 2, 6);
        let chart = Chart::flat(1, RingKind::Jet, policy)?;
        let p = PropagatorMatrix::from_symplectic(chart.omega());
        // Upper-index matrix of the standard symplectic pairing.
        let omega_upper = [
            [Rat::zero(), Rat::from_int(-1)],
            [Rat::from_int(1), Rat::zero()],
        ];
        let cases: [[[i64; 2]; 2]; 2] = [[[1, 0], [0, 1]], [[1, 2], [2, 5]]];
        for m_entries in &cases {
            let label_text = format!(
                "{} y1 y1 + {} y1 y2 + {} y2 y2",
                m_entries[0][0],
                2 * m_entries[0][1],
                m_entries[1][1]
            );
            let label = Section::parse(2, RingKind::Jet, policy, &label_text)?;
            let m = [
                [
                    Rat::from_int(m_entries[0][0]),
                    Rat::from_int(m_entries[0][1]),
                ],
                [
                    Rat::from_int(m_entries[1][0]),
                    Rat::from_int(m_entries[1][1]),
                ],
            ];
            let momega = mat_mul(&m, &omega_upper);
            for k in [2usize, 3, 4] {
                let g = Graph::cycle(k)?;
                assert_eq!(g.automorphism_order(), 2 * k as u64);
                let amp = circle_amplitude(&g)?;
                if k % 2 == 1 {
                    assert!(amp.is_zero());
                    continue;
                }
                let dg = DecoratedGraph::new(g.clone(), vec![label.clone(); k])?;
                let engine = contract_graph(&dg, &p)?
                    .mul_hbar(g.loop_order())
                    .scale(&(&amp / &Rat::from_int(g.automorphism_order() as i64)));
                let factor = &(&wheel_zeta(k) * &Rat::new(1 << (k - 1), k as i64))
                    * &mat_trace_pow(&momega, k);
                let expected = Section::constant(2, RingKind::Jet, policy, factor).mul_hbar(1);
                assert_eq!(engine, expected, "cycle k={}", k);
            }
        }
        Ok(())
    }

    #[test]
    fn torus_trace_calibration_and_index_in_dim_two() -> Result<()> {
        let public = pol(2, 0, 1);
        let setup = GlobalSetup::new(&torus(1, public), public)?;
        let one = Section::one(2, RingKind::Fourier, public);
        assert_eq!(setup.trace(&one)?, vec![(-1, Rat::one())]);
        let report = setup.index_report()?;
        assert!(report.matches);
        assert_eq!(report.exponential_side, vec![(-1, Rat::one())]);
        Ok(())
    }

    #[test]
    fn torus_trace_calibration_and_index_in_dim_four() -> Result<()> {
        let public = pol(2, 0, 1);
        let setup = GlobalSetup::new(&torus(2, public), public)?;
        let one = Section::one(4, RingKind::Fourier, public);
        assert_eq!(setup.trace(&one)?, vec![(-2, Rat::one())]);
        let report = setup.index_report()?;
        assert!(report.matches);
        assert_eq!(report.exponential_side, vec![(-2, Rat::one())]);
        Ok(())
    }

    #[test]
    fn corrected_torus_index_matches_exactly() -> Result<()> {
        let public = pol(4, 0, 2);
        let chart = torus_corrected("1/3", public);
        let setup = GlobalSetup::new(&chart, public)?;
        let report = setup.index_report()?;
        assert!(report.matches);
        assert_eq!(
            report.exponential_side,
            vec![(-1, Rat::one()), (0, Rat::new(-1, 3))]
        );
        Ok(())
    }

    #[test]
    fn trace_vanishes_on_star_commutators() -> Result<()> {
        let public = pol(4, 0, 2);
        let setup = GlobalSetup::new(&torus(1, public), public)?;
        let modes = ["e(1,0)", "e(0,1)", "e(1,-1)", "e(-2,1)"];
        for a in &modes {
            for b in &modes {
                let f = Section::scalar(2, RingKind::Fourier, public, fc(a));
                let g = Section::scalar(2, RingKind::Fourier, public, fc(b));
                let fg = setup.transfer().star(&f, &g)?;
                let gf = setup.transfer().star(&g, &f)?;
                let diff = fg.try_sub(&gf)?;
                assert!(setup.trace(&diff)?.is_empty(), "commutator {} {}", a, b);
            }
        }
        Ok(())
    }

    #[test]
    fn trace_is_hbar_linear_and_equivariant_refinement_agrees() -> Result<()> {
        let public = pol(4, 0, 2);
        let setup = GlobalSetup::new(&torus(1, public), public)?;
        let f = Section::scalar(2, RingKind::Fourier, public, fc("2 + e(1,0) + e(-1,0)"));
        let rows = setup.trace(&f)?;
        assert_eq!(rows, vec![(-1, Rat::from_int(2))]);
        let shifted = setup.trace(&f.mul_hbar(1))?;
        assert_eq!(shifted, vec![(0, Rat::from_int(2))]);

        let eq_rows = setup.equivariant_trace(&f)?;
        // Degree-zero input: every row sits at u-degree zero and the
        // slice reproduces the plain trace.
        let u0: Vec<(i64, Rat)> = eq_rows
            .iter()
            .filter(|(u, _, _)| *u == 0)
            .map(|(_, h, v)| (*h, v.clone()))
            .collect();
        assert_eq!(u0, rows);
        assert!(eq_rows.iter().all(|(u, _, _)| *u == 0));
        Ok(())
    }

    #[test]
    fn bianchi_combination_fails_for_generic_tensors() -> Result<()> {
        // Negative control in dimension 4: a tensor symmetric in its
        // first pair and antisymmetric in its last pair generically
        // violates the cyclic-combination identity that every computed
        // curvature satisfies.
        let mut rng = testing::rng(5);
        let mut s: [[Rat; 4]; 4] = std::array::from_fn(|_| std::array::from_fn(|_| Rat::zero()));
        let mut a: [[Rat; 4]; 4] = std::array::from_fn(|_| std::array::from_fn(|_| Rat::zero()));
        for i in 0..4 {
            for j in i..4 {
                let v = testing::random_rat(&mut rng);
                s[i][j] = v.clone();
                s[j][i] = v;
                if j > i {
                    let w = testing::random_rat(&mut rng);
                    a[i][j] = w.clone();
                    a[j][i] = -&w;
                }
            }
        }
        let holds = crate::chart::first_bianchi_combination_holds(4, &|i, j, k, l| {
            Ok(Coefficient::Jet(crate::jet::JetPoly::constant(
                4,
                &s[i - 1][j - 1] * &a[k - 1][l - 1],
            )))
        })?;
        assert!(!holds);
        Ok(())
    }
}
