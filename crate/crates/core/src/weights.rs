//! Decorated-graph contraction weights and the renormalization-flow
//! engine. A decorated graph carries one Weyl-bundle section per vertex;
//! its weight multiplies the labels as graded sections in vertex order
//! (which settles every Koszul sign once), applies one second-order
//! contraction per edge through a propagator matrix, and identifies the
//! widened y blocks again.
//!
//! Conventions:
//! - Edge `(a, b)` contracts `sum_ij P^{ij} d/dy_(a,i) d/dy_(b,j)` in the
//!   stored orientation. Flipping an edge and transposing the matrix entry
//!   together is a no-op, so for the antisymmetric Poisson matrix the
//!   orientation must match whatever scalar the edge is paired with; the
//!   circle-amplitude builder [`DecoratedGraph::amplitude_spec`] uses the
//!   same stored orientation for exactly this reason. A self-loop through
//!   an antisymmetric matrix vanishes identically (a symmetric second
//!   derivative against an antisymmetric matrix); through a symmetric one
//!   it does not.
//! - `hrg_flow` sums `hbar^{b1(G)} / |Aut G|` times the graph weight over
//!   the connected census with every vertex labeled by the same
//!   interaction, seeded by the edgeless one-vertex graph. Genus labels
//!   stay zero because the interaction carries its own explicit hbar
//!   powers. The sum satisfies the exponential flow identity
//!   `exp(W(P,F)/hbar) = exp(hbar d_P) exp(F/hbar)` where
//!   `d_P = (1/2) sum_ij P^{ij} d/dy^i d/dy^j`, and composing flows for
//!   `P1` then `P2` equals the flow for `P1 + P2`.
//! - Headroom: with every interaction term of weight at least three, a
//!   contribution of a k-vertex graph has weight at least k + 2, which
//!   bounds the census; the intermediate product runs at the public weight
//!   cap plus `2(k-1)` because the edge contractions and the `hbar^{b1}`
//!   prefactor can lower a term's weight by that much before the final
//!   truncation.

use crate::chart::Chart;
use crate::circle::AmplitudeSpec;
use crate::coeff::{Coefficient, RingKind};
use crate::error::{Error, Result};
use crate::graph::{enumerate_contraction_graphs, Graph};
use crate::rational::Rat;
use crate::section::Section;
use crate::symplectic::SymplecticData;
use rayon::prelude::*;

/// A square matrix of x-dependent coefficients `P^{ij}`, the kernel of one
/// second-order contraction between two y blocks.
#[derive(Clone, Debug)]
pub struct PropagatorMatrix {
    dim: usize,
    ring: RingKind,
    entries: Vec<Vec<Coefficient>>,
}

impl PropagatorMatrix {
    /// Build from rows of coefficients; the matrix must be square and all
    /// entries must live over one ring.
    pub fn new(entries: Vec<Vec<Coefficient>>) -> Result<Self> {
        let dim = entries.len();
        if dim == 0 || entries.iter().any(|row| row.len() != dim) {
            let got = entries.iter().map(|r| r.len()).max().unwrap_or(0);
            return Err(Error::DimensionMismatch { expected: dim, got });
        }
        let ring = entries[0][0].ring();
        for row in &entries {
            for c in row {
                if c.ring() != ring {
                    return Err(Error::MixedCoefficientRings(ring.name(), c.ring().name()));
                }
            }
        }
        Ok(PropagatorMatrix { dim, ring, entries })
    }

    /// Rational constant matrix over the given ring.
    pub fn from_rational(ring: RingKind, rows: Vec<Vec<Rat>>) -> Result<Self> {
        let dim = rows.len();
        PropagatorMatrix::new(
            rows.into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|r| Coefficient::from_rat(ring, dim, r))
                        .collect()
                })
                .collect(),
        )
    }

    /// The edge kernel of a symplectic chart: the transpose `omega^{ji}`
    /// of its Poisson matrix. The contraction direction matches the odd
    /// Laplacian's (fixed once, by requiring the graph expansion to
    /// intertwine the flat derivative with the odd-side differential).
    pub fn from_symplectic(om: &SymplecticData) -> Self {
        let dim = om.dim();
        PropagatorMatrix {
            dim,
            ring: om.ring(),
            entries: (1..=dim)
                .map(|i| (1..=dim).map(|j| om.upper(j, i).clone()).collect())
                .collect(),
        }
    }

    pub fn zero(dim: usize, ring: RingKind) -> Self {
        PropagatorMatrix {
            dim,
            ring,
            entries: vec![vec![Coefficient::zero(ring, dim); dim]; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ring(&self) -> RingKind {
        self.ring
    }

    /// Entry `P^{ij}`, indices 1-based.
    pub fn entry(&self, i: usize, j: usize) -> &Coefficient {
        &self.entries[i - 1][j - 1]
    }

    /// Entrywise sum.
    pub fn add(&self, other: &PropagatorMatrix) -> Result<PropagatorMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut entries = Vec::with_capacity(self.dim);
        for (ra, rb) in self.entries.iter().zip(&other.entries) {
            let mut row = Vec::with_capacity(self.dim);
            for (a, b) in ra.iter().zip(rb) {
                row.push(a.add(b)?);
            }
            entries.push(row);
        }
        PropagatorMatrix::new(entries)
    }

    /// Entrywise rational multiple.
    pub fn scale(&self, r: &Rat) -> PropagatorMatrix {
        PropagatorMatrix {
            dim: self.dim,
            ring: self.ring,
            entries: self
                .entries
                .iter()
                .map(|row| row.iter().map(|c| c.scale(r)).collect())
                .collect(),
        }
    }

    /// First index pair (1-based) at which the matrix differs from its
    /// transpose, if any.
    fn asymmetry(&self) -> Option<(usize, usize)> {
        for i in 1..=self.dim {
            for j in i + 1..=self.dim {
                let diff = self.entry(i, j).add(&self.entry(j, i).neg());
                match diff {
                    Ok(d) if d.is_zero() => {}
                    _ => return Some((i, j)),
                }
            }
        }
        None
    }

    pub fn is_symmetric(&self) -> bool {
        self.asymmetry().is_none()
    }
}

/// `sum_ij P^{ij} d/dy_(slot_a, i) d/dy_(slot_b, j)` on a widened section
/// (slots 0-based, y indices inside a slot 1-based).
pub(crate) fn apply_propagator_edge(
    c: &Section,
    p: &PropagatorMatrix,
    slot_a: usize,
    slot_b: usize,
) -> Result<Section> {
    let dim = p.dim();
    let mut out = c.empty_like();
    for i in 1..=dim {
        for j in 1..=dim {
            let w = p.entry(i, j);
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

/// A graph whose vertices carry section labels, plus an optional subset of
/// vertices marked as carrying the circle one-form (`None` marks all of
/// them, the top-form case).
#[derive(Clone, Debug)]
pub struct DecoratedGraph {
    graph: Graph,
    labels: Vec<Section>,
    dtheta_vertices: Option<Vec<usize>>,
}

impl DecoratedGraph {
    /// One label per vertex; labels must agree on dimension, ring, and
    /// truncation policy.
    pub fn new(graph: Graph, labels: Vec<Section>) -> Result<Self> {
        if labels.len() != graph.vertices() {
            return Err(Error::DimensionMismatch {
                expected: graph.vertices(),
                got: labels.len(),
            });
        }
        let first = &labels[0];
        for l in &labels[1..] {
            if l.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    got: l.dim(),
                });
            }
            if l.ring() != first.ring() {
                return Err(Error::MixedCoefficientRings(
                    first.ring().name(),
                    l.ring().name(),
                ));
            }
            if l.policy() != first.policy() {
                return Err(Error::PolicyMismatch(
                    "all vertex labels must share one truncation policy".into(),
                ));
            }
        }
        Ok(DecoratedGraph {
            graph,
            labels,
            dtheta_vertices: None,
        })
    }

    /// Mark exactly the given vertices (0-based) as carrying the circle
    /// one-form.
    pub fn with_dtheta(mut self, vertices: Vec<usize>) -> Result<Self> {
        let n = self.graph.vertices();
        let mut marks = vertices;
        for &v in &marks {
            if v >= n {
                return Err(Error::VertexOutOfRange {
                    index: v,
                    vertices: n,
                });
            }
        }
        marks.sort_unstable();
        marks.dedup();
        self.dtheta_vertices = Some(marks);
        Ok(self)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn labels(&self) -> &[Section] {
        &self.labels
    }

    /// Marked vertices, 0-based; `None` means all of them.
    pub fn dtheta_vertices(&self) -> Option<&[usize]> {
        self.dtheta_vertices.as_deref()
    }

    /// The circle-integral specification for this graph: 1-based vertices,
    /// edges in the stored orientation (matching the contraction order, so
    /// that each edge's propagator sign and matrix orientation cancel in
    /// pairs), markers shifted to 1-based.
    pub fn amplitude_spec(&self) -> AmplitudeSpec {
        let mut spec = AmplitudeSpec::new(
            self.graph.vertices(),
            self.graph
                .edges()
                .iter()
                .map(|&(a, b)| (a + 1, b + 1))
                .collect(),
        );
        spec.dtheta_vertices = self
            .dtheta_vertices
            .as_ref()
            .map(|m| m.iter().map(|&v| v + 1).collect());
        spec
    }
}

/// Multiply the vertex labels as graded sections in vertex order, apply
/// one propagator contraction per edge in the stored orientation, and
/// identify the y blocks. Labels without enough y factors at an edge end
/// contract to zero.
pub fn contract_graph(dg: &DecoratedGraph, p: &PropagatorMatrix) -> Result<Section> {
    let labels = dg.labels();
    if labels[0].dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: labels[0].dim(),
        });
    }
    if labels[0].ring() != p.ring() {
        return Err(Error::MixedCoefficientRings(
            p.ring().name(),
            labels[0].ring().name(),
        ));
    }
    let k = dg.graph().vertices();
    let mut product = labels[0].widen(0, k);
    for (v, l) in labels.iter().enumerate().skip(1) {
        product = product.try_mul(&l.widen(v, k))?;
    }
    for &(a, b) in dg.graph().edges() {
        if product.is_zero() {
            break;
        }
        product = apply_propagator_edge(&product, p, a, b)?;
    }
    Ok(product.collapse())
}

/// Scalar-amplitude-weighted contraction against the chart's Poisson
/// matrix: `amplitude * contract_graph(dg, omega)`.
pub fn graph_weight(dg: &DecoratedGraph, amplitude: &Rat, chart: &Chart) -> Result<Section> {
    let p = PropagatorMatrix::from_symplectic(chart.omega());
    Ok(contract_graph(dg, &p)?.scale(amplitude))
}

/// The flowed interaction `W(P, F)`: the sum of
/// `hbar^{b1(G)} / |Aut G| * W_G` over connected graphs with every vertex
/// labeled `F`, seeded by the edgeless one-vertex graph (`W(0, F) = F`).
/// Requires a symmetric propagator and an even interaction with every
/// term of weight at least three. Graph weights are evaluated in parallel
/// and reduced in census order.
pub fn hrg_flow(p: &PropagatorMatrix, f: &Section) -> Result<Section> {
    if f.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: f.dim(),
        });
    }
    if f.ring() != p.ring() {
        return Err(Error::MixedCoefficientRings(p.ring().name(), f.ring().name()));
    }
    if let Some((i, j)) = p.asymmetry() {
        return Err(Error::AsymmetricPropagator(i, j));
    }
    let mut y_max: i64 = 0;
    for (key, _) in f.iter() {
        if key.parity() == 1 {
            return Err(Error::OddInteraction);
        }
        if key.weight() < 3 {
            return Err(Error::FlowDivergence(key.weight()));
        }
        y_max = y_max.max(key.y_degree());
    }
    let mut result = f.clone();
    if f.is_zero() {
        return Ok(result);
    }
    let public = *f.policy();
    // A k-vertex contribution has weight at least k + 2 (each vertex at
    // least three, each edge minus two, hbar^{b1} plus 2 b1, and a
    // connected graph has E >= V - 1).
    let max_vertices = (public.weight_max - 2).max(0) as usize;
    let y_max = y_max as usize;
    let h_min = f.min_hbar().unwrap_or(0);
    for v in 1..=max_vertices {
        // Each edge consumes two y slots, and a graph with first Betti
        // number b1 contributes at order hbar^{b1} on top of the labels'
        // own hbar content, so E <= hbar_max - v*h_min + v - 1.
        let hbar_room = (public.hbar_max - (v as i64) * h_min + (v as i64) - 1).max(0) as usize;
        let max_edges = (v * y_max / 2).min(hbar_room);
        if max_edges + 1 < v {
            continue;
        }
        let graphs = enumerate_contraction_graphs(v, y_max, max_edges, true);
        if graphs.is_empty() {
            continue;
        }
        // Bump the weight cap so edge contractions (each lowering weight by
        // two) stay exact, and lift the hbar cap to the level the weight cap
        // already forces: partial products of labels with negative hbar
        // content may overshoot the final hbar degree before coming back.
        let internal_weight = public.weight_max + 2 * (v as i64 - 1);
        let internal = public
            .bumped(2 * (v as i64 - 1), 0)
            .with_hbar_max(public.hbar_max.max(internal_weight));
        let fi = f.with_policy(internal);
        let mut base = fi.widen(0, v);
        for s in 1..v {
            base = base.try_mul(&fi.widen(s, v))?;
        }
        let contributions = graphs
            .into_par_iter()
            .map(|g| -> Result<Section> {
                let mut prod = base.clone();
                for &(a, b) in g.edges() {
                    if prod.is_zero() {
                        break;
                    }
                    prod = apply_propagator_edge(&prod, p, a, b)?;
                }
                Ok(prod
                    .collapse()
                    .mul_hbar(g.loop_order())
                    .scale(&Rat::new(1, g.automorphism_order() as i64))
                    .with_policy(public))
            })
            .collect::<Result<Vec<_>>>()?;
        for c in contributions {
            result = result.try_add(&c)?;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::section::TruncationPolicy;

    fn pol(w: i64, j: u32, h: i64) -> TruncationPolicy {
        TruncationPolicy::new(w, j).with_hbar_max(h)
    }

    fn jet(dim: usize, policy: TruncationPolicy, text: &str) -> Section {
        Section::parse(dim, RingKind::Jet, policy, text).unwrap()
    }

    /// `(1/2) sum_ij P^{ij} d_i d_j` on a single y block.
    fn dp_operator(p: &PropagatorMatrix, s: &Section) -> Result<Section> {
        let mut out = s.empty_like();
        for i in 1..=p.dim() {
            for j in 1..=p.dim() {
                let w = p.entry(i, j);
                if w.is_zero() {
                    continue;
                }
                let d = s.derive_y(i)?.derive_y(j)?;
                if d.is_zero() {
                    continue;
                }
                out = out.try_add(&d.scale_coeff(w)?)?;
            }
        }
        Ok(out.scale(&Rat::new(1, 2)))
    }

    /// `e^{hbar d_P} s`; terminates because `d_P` lowers y-degree by two.
    fn exp_hbar_dp(p: &PropagatorMatrix, s: &Section) -> Result<Section> {
        let mut sum = s.clone();
        let mut term = s.clone();
        let mut k = 0i64;
        loop {
            k += 1;
            term = dp_operator(p, &term)?.mul_hbar(1).scale(&Rat::new(1, k));
            if term.is_zero() {
                break;
            }
            sum = sum.try_add(&term)?;
        }
        Ok(sum)
    }

    /// `e^s` for a section whose every term has weight >= 1.
    fn series_exp(s: &Section) -> Result<Section> {
        assert!(s.iter().all(|(k, _)| k.weight() >= 1));
        let mut sum = Section::one(s.dim(), s.ring(), *s.policy());
        let mut term = sum.clone();
        let mut k = 0i64;
        loop {
            k += 1;
            term = term.try_mul(s)?.scale(&Rat::new(1, k));
            if term.is_zero() {
                break;
            }
            sum = sum.try_add(&term)?;
        }
        Ok(sum)
    }

    /// `log(1 + x)` for a section whose every term has weight >= 1.
    fn series_log1p(x: &Section) -> Result<Section> {
        assert!(x.iter().all(|(k, _)| k.weight() >= 1));
        let mut sum = x.clone();
        let mut pow = x.clone();
        let mut k = 1i64;
        loop {
            k += 1;
            pow = pow.try_mul(x)?;
            if pow.is_zero() {
                break;
            }
            let sign = if k % 2 == 0 { -1 } else { 1 };
            sum = sum.try_add(&pow.scale(&Rat::new(sign, k)))?;
        }
        Ok(sum)
    }

    /// Direct expansion of the flow identity:
    /// `hbar * log( e^{hbar d_P} e^{F/hbar} )`. Intermediates run with the
    /// hbar cap lifted to the weight cap (weight >= 2*hbar makes a tighter
    /// hbar cap redundant on the final answer but lossy on partial
    /// products), then re-truncate.
    fn flow_oracle(p: &PropagatorMatrix, f: &Section) -> Result<Section> {
        let public = *f.policy();
        let wide = public.with_hbar_max(public.hbar_max.max(public.weight_max));
        let fw = f.with_policy(wide);
        let e = series_exp(&fw.div_hbar(1, i64::MIN)?)?;
        let flowed = exp_hbar_dp(p, &e)?;
        let one = Section::one(f.dim(), f.ring(), wide);
        let x = flowed.try_sub(&one)?;
        Ok(series_log1p(&x)?.mul_hbar(1).with_policy(public))
    }

    #[test]
    fn single_vertex_weight_is_scaled_label() {
        let policy = pol(6, 4, 2);
        let label = jet(2, policy, "y1 y2 + x1 y1^3");
        let g = Graph::new(1, vec![]).unwrap();
        let dg = DecoratedGraph::new(g, vec![label.clone()]).unwrap();
        let chart = Chart::flat(1, RingKind::Jet, policy).unwrap();
        let w = graph_weight(&dg, &Rat::new(7, 1), &chart).unwrap();
        assert_eq!(w, label.scale(&Rat::new(7, 1)));
    }

    #[test]
    fn single_edge_contracts_by_hand() {
        let policy = pol(6, 4, 2);
        // Labels 2 y1 y2 and 3 y2; the edge eats one y from each side:
        // the kernel entry P^{12} = omega^{21} = 1 leaves 6 y2.
        let a = jet(2, policy, "2 y1 y2");
        let b = jet(2, policy, "3 y2");
        let g = Graph::new(2, vec![(0, 1)]).unwrap();
        let dg = DecoratedGraph::new(g, vec![a, b]).unwrap();
        let om = SymplecticData::standard(2, RingKind::Jet, 4).unwrap();
        let p = PropagatorMatrix::from_symplectic(&om);
        let w = contract_graph(&dg, &p).unwrap();
        assert_eq!(w.to_string(), "(6) y2");
    }

    #[test]
    fn contraction_settles_koszul_signs_through_theta() {
        let policy = pol(6, 4, 2);
        // (y1 th1)(y2 th2): the graded product orders the thetas, the edge
        // removes both y's, leaving omega^{21} th1 th2.
        let a = jet(2, policy, "y1 th1");
        let b = jet(2, policy, "y2 th2");
        let g = Graph::new(2, vec![(0, 1)]).unwrap();
        let dg = DecoratedGraph::new(g, vec![a.clone(), b.clone()]).unwrap();
        let om = SymplecticData::standard(2, RingKind::Jet, 4).unwrap();
        let p = PropagatorMatrix::from_symplectic(&om);
        assert_eq!(contract_graph(&dg, &p).unwrap().to_string(), "(1) th1 th2");

        // Swapping two odd labels flips the product order (one sign) and
        // transposes the kernel slot (another sign for the antisymmetric
        // kernel): the two cancel, so the weight is unchanged.
        let g2 = Graph::new(2, vec![(0, 1)]).unwrap();
        let dg2 = DecoratedGraph::new(g2, vec![b.clone(), a.clone()]).unwrap();
        assert_eq!(
            contract_graph(&dg2, &p).unwrap().to_string(),
            "(1) th1 th2"
        );

        // Against a symmetric kernel only the order sign remains, so the
        // swap genuinely flips.
        let sym = PropagatorMatrix::from_rational(
            RingKind::Jet,
            vec![
                vec![Rat::zero(), Rat::new(1, 1)],
                vec![Rat::new(1, 1), Rat::zero()],
            ],
        )
        .unwrap();
        let g3 = Graph::new(2, vec![(0, 1)]).unwrap();
        let dg3 = DecoratedGraph::new(g3, vec![a, b]).unwrap();
        assert_eq!(contract_graph(&dg3, &sym).unwrap().to_string(), "(1) th1 th2");
        let g4 = Graph::new(2, vec![(0, 1)]).unwrap();
        let dg4 = DecoratedGraph::new(g4, vec![dg3.labels()[1].clone(), dg3.labels()[0].clone()])
            .unwrap();
        assert_eq!(
            contract_graph(&dg4, &sym).unwrap().to_string(),
            "(-1) th1 th2"
        );
    }

    #[test]
    fn tadpole_vanishes_for_antisymmetric_but_not_symmetric_kernel() {
        let policy = pol(6, 4, 2);
        let label = jet(2, policy, "y1 y1 + y1 y2 + y2 y2 + y1^4");
        let g = Graph::new(1, vec![(0, 0)]).unwrap();
        let dg = DecoratedGraph::new(g, vec![label]).unwrap();
        let om = SymplecticData::standard(2, RingKind::Jet, 4).unwrap();
        assert!(contract_graph(&dg, &PropagatorMatrix::from_symplectic(&om))
            .unwrap()
            .is_zero());

        let sym = PropagatorMatrix::from_rational(
            RingKind::Jet,
            vec![
                vec![Rat::new(1, 1), Rat::zero()],
                vec![Rat::zero(), Rat::zero()],
            ],
        )
        .unwrap();
        let dg2 = DecoratedGraph::new(
            Graph::new(1, vec![(0, 0)]).unwrap(),
            vec![jet(2, pol(6, 4, 2), "y1 y1")],
        )
        .unwrap();
        assert_eq!(contract_graph(&dg2, &sym).unwrap().to_string(), "(2)");
    }

    #[test]
    fn missing_y_slots_contract_to_zero() {
        let policy = pol(6, 4, 2);
        let a = jet(2, policy, "y1");
        let b = jet(2, policy, "1");
        let g = Graph::new(2, vec![(0, 1)]).unwrap();
        let dg = DecoratedGraph::new(g, vec![a, b]).unwrap();
        let om = SymplecticData::standard(2, RingKind::Jet, 4).unwrap();
        let p = PropagatorMatrix::from_symplectic(&om);
        assert!(contract_graph(&dg, &p).unwrap().is_zero());
    }

    #[test]
    fn amplitude_spec_follows_stored_orientation() {
        let policy = pol(6, 4, 2);
        let label = jet(2, policy, "y1 y2");
        let g = Graph::cycle(2).unwrap();
        let dg = DecoratedGraph::new(g, vec![label.clone(), label]).unwrap();
        let spec = dg.amplitude_spec();
        assert_eq!(spec.k, 2);
        assert_eq!(spec.edges, vec![(1, 2), (1, 2)]);
        assert!(spec.dtheta_vertices.is_none());
        // Both edges in the same orientation integrate P^2, the negative
        // of the oriented 2-wheel; the matching contraction picks up the
        // compensating sign, so the orientation convention is consistent.
        assert_eq!(crate::circle::amplitude(&spec).unwrap(), Rat::new(1, 12));

        let marked = DecoratedGraph::new(
            Graph::cycle(2).unwrap(),
            vec![
                jet(2, pol(6, 4, 2), "y1"),
                jet(2, pol(6, 4, 2), "y2"),
            ],
        )
        .unwrap()
        .with_dtheta(vec![1])
        .unwrap();
        assert_eq!(marked.amplitude_spec().dtheta_vertices, Some(vec![2]));
        // One marker on two points is not a top form.
        assert_eq!(
            crate::circle::amplitude(&marked.amplitude_spec()).unwrap(),
            Rat::zero()
        );
    }

    #[test]
    fn flow_at_zero_propagator_is_identity() {
        let policy = pol(6, 4, 3);
        let f = jet(2, policy, "2 y1^3 + hbar y2 + x1 y1^2 y2");
        let p = PropagatorMatrix::zero(2, RingKind::Jet);
        assert_eq!(hrg_flow(&p, &f).unwrap(), f);
    }

    #[test]
    fn flow_rejects_bad_inputs() {
        let policy = pol(7, 4, 3);
        let f = jet(2, policy, "y1^3");
        let asym = PropagatorMatrix::from_symplectic(
            &SymplecticData::standard(2, RingKind::Jet, 4).unwrap(),
        );
        assert!(matches!(
            hrg_flow(&asym, &f),
            Err(Error::AsymmetricPropagator(1, 2))
        ));

        let p = PropagatorMatrix::zero(2, RingKind::Jet);
        let light = jet(2, policy, "y1 y2");
        assert!(matches!(hrg_flow(&p, &light), Err(Error::FlowDivergence(2))));
        let odd = jet(2, policy, "y1^3 th1");
        assert!(matches!(hrg_flow(&p, &odd), Err(Error::OddInteraction)));
    }

    #[test]
    fn flow_matches_exponential_expansion() {
        let policy = pol(6, 3, 3);
        let f = jet(2, policy, "y1^3 + 2 y1 y1 y2 + hbar x1 y2^3 + y1^3 th1 th2");
        let p = PropagatorMatrix::new(vec![
            vec![
                Coefficient::parse(RingKind::Jet, 2, "1").unwrap(),
                Coefficient::parse(RingKind::Jet, 2, "x1").unwrap(),
            ],
            vec![
                Coefficient::parse(RingKind::Jet, 2, "x1").unwrap(),
                Coefficient::parse(RingKind::Jet, 2, "2").unwrap(),
            ],
        ])
        .unwrap();
        let engine = hrg_flow(&p, &f).unwrap();
        let oracle = flow_oracle(&p, &f).unwrap();
        assert_eq!(engine, oracle);
        assert_ne!(engine, f);
    }

    #[test]
    fn flow_composition_is_additive_in_the_propagator() {
        let policy = pol(6, 2, 2);
        let f = jet(2, policy, "y1^3 + y2^3 + y1 y1 y2");
        let p1 = PropagatorMatrix::from_rational(
            RingKind::Jet,
            vec![
                vec![Rat::new(1, 1), Rat::new(1, 2)],
                vec![Rat::new(1, 2), Rat::zero()],
            ],
        )
        .unwrap();
        let p2 = PropagatorMatrix::from_rational(
            RingKind::Jet,
            vec![
                vec![Rat::zero(), Rat::new(1, 3)],
                vec![Rat::new(1, 3), Rat::new(2, 1)],
            ],
        )
        .unwrap();
        let joint = hrg_flow(&p1.add(&p2).unwrap(), &f).unwrap();
        let staged = hrg_flow(&p2, &hrg_flow(&p1, &f).unwrap()).unwrap();
        assert_eq!(joint, staged);
    }

    #[test]
    fn census_pruning_discards_only_zero_weights() -> Result<()> {
        let policy = pol(5, 2, 2);
        let f = jet(2, policy, "y1^3");
        let p = PropagatorMatrix::from_rational(
            RingKind::Jet,
            vec![
                vec![Rat::new(1, 1), Rat::zero()],
                vec![Rat::zero(), Rat::new(1, 1)],
            ],
        )
        .unwrap();
        let pruned = hrg_flow(&p, &f).unwrap();
        // Re-run the sum with a strictly wider census than the engine's
        // caps (vertices <= 3, degree <= 3, edges <= 4 here): more
        // vertices, looser degree and edge budgets, tadpoles kept. The
        // extra graphs must all weigh zero.
        let public = *f.policy();
        let mut unpruned = f.clone();
        for v in 1..=(public.weight_max as usize) {
            let internal_weight = public.weight_max + 2 * (v as i64 - 1);
            let internal = public
                .bumped(2 * (v as i64 - 1), 0)
                .with_hbar_max(public.hbar_max.max(internal_weight));
            let fi = f.with_policy(internal);
            let mut base = fi.widen(0, v);
            for s in 1..v {
                base = base.try_mul(&fi.widen(s, v))?;
            }
            for g in enumerate_contraction_graphs(v, 8, 5, true) {
                let mut prod = base.clone();
                for &(a, b) in g.edges() {
                    if prod.is_zero() {
                        break;
                    }
                    prod = apply_propagator_edge(&prod, &p, a, b)?;
                }
                let c = prod
                    .collapse()
                    .mul_hbar(g.loop_order())
                    .scale(&Rat::new(1, g.automorphism_order() as i64))
                    .with_policy(public);
                unpruned = unpruned.try_add(&c)?;
            }
        }
        assert_eq!(pruned, unpruned);
        Ok(())
    }
}
