//! Chart descriptions: symplectic form, symmetric connection, higher
//! hbar-corrections of the central form, truncation caps, and the
//! coefficient ring — loadable from JSON.
//!
//! Conventions fixed here and relied on everywhere else:
//! * Christoffel symbols are stored fully lowered, `Gamma_{ijk}`, and are
//!   totally symmetric; raising uses the first slot,
//!   `Gamma^l_{jk} = omega^{li} Gamma_{ijk}`.
//! * The covariant derivative on sections is
//!   `nabla = dx^k ^ (d/dx^k - Gamma^m_{ki} y^i d/dy^m - Gamma^m_{ki}
//!   theta^i d/dtheta^m)`, i.e. y and theta rotate with the same
//!   coefficients.
//! * Curvature: `R^m_{jkl} = d_k Gamma^m_{lj} - d_l Gamma^m_{kj} +
//!   Gamma^m_{kp} Gamma^p_{lj} - Gamma^m_{lp} Gamma^p_{kj}` and
//!   `R_{ijkl} = omega_{im} R^m_{jkl}`; the fibre curvature section is
//!   `(1/4) R_{ijkl} y^i y^j dx^k dx^l`. With these signs
//!   `nabla^2 a = (1/hbar) [R, a]` holds exactly (tested).
//!
//! JSON shape (all coefficients as strings in the ring's grammar):
//!
//! ```json
//! {
//!   "n": 1,
//!   "ring": "jet",
//!   "omega": [["0", "1"], ["-1", "0"]],
//!   "gamma_lower": {"111": "x2"},
//!   "omega_k": {"1": [["0", "1"], ["-1", "0"]]},
//!   "truncation": {"weight_max": 6, "x_degree_max": 6},
//!   "volume": "1"
//! }
//! ```
//!
//! `gamma_lower` keys are index words ("121") or comma lists ("1,2,1");
//! each entry assigns the common value of all permutations of its indices,
//! and conflicting assignments are rejected.

use crate::coeff::{Coefficient, RingKind};
use crate::error::{Error, Result};
use crate::rational::Rat;
use crate::section::{Section, TermKey, TruncationPolicy};
use crate::symplectic::SymplecticData;
use std::collections::BTreeMap;

#[derive(serde::Deserialize)]
struct TruncationJson {
    weight_max: i64,
    x_degree_max: u32,
    #[serde(default)]
    hbar_max: Option<i64>,
    #[serde(default)]
    u_min: Option<i64>,
    #[serde(default)]
    u_max: Option<i64>,
}

#[derive(serde::Deserialize)]
struct ChartJson {
    n: usize,
    #[serde(default)]
    ring: Option<String>,
    omega: Vec<Vec<String>>,
    #[serde(default)]
    gamma_lower: BTreeMap<String, String>,
    #[serde(default)]
    omega_k: BTreeMap<String, Vec<Vec<String>>>,
    truncation: TruncationJson,
    #[serde(default)]
    volume: Option<String>,
}

/// A fully validated chart.
#[derive(Clone)]
pub struct Chart {
    n: usize,
    dim: usize,
    ring: RingKind,
    omega: SymplecticData,
    /// Dense, fully symmetric Gamma_{ijk}; index (i*dim + j)*dim + k, 0-based.
    gamma_lower: Vec<Coefficient>,
    /// Gamma^m_{jk} = omega^{mi} Gamma_{ijk}; same layout with m first.
    gamma_upper: Vec<Coefficient>,
    /// Corrections (k, matrix of omega_k entries), k >= 1, each antisymmetric.
    corrections: Vec<(i64, Vec<Vec<Coefficient>>)>,
    policy: TruncationPolicy,
    volume: Rat,
}

fn parse_index_word(word: &str, dim: usize) -> Result<Vec<usize>> {
    let parts: Vec<&str> = if word.contains(',') {
        word.split(',').collect()
    } else {
        word.split("").filter(|s| !s.is_empty()).collect()
    };
    let mut out = Vec::with_capacity(parts.len());
    for p in parts {
        let i: usize = p.trim().parse().map_err(|_| Error::Parse {
            pos: 0,
            msg: format!("bad index word {word:?}"),
        })?;
        if i == 0 || i > dim {
            return Err(Error::IndexOutOfRange { index: i, dim });
        }
        out.push(i);
    }
    Ok(out)
}

impl Chart {
    /// Build a chart from parts. `gamma_entries` assigns the totally
    /// symmetric value of each index triple (conflicts are errors).
    pub fn new(
        n: usize,
        ring: RingKind,
        omega_lower: Vec<Vec<Coefficient>>,
        gamma_entries: &[([usize; 3], Coefficient)],
        corrections: Vec<(i64, Vec<Vec<Coefficient>>)>,
        policy: TruncationPolicy,
        volume: Rat,
    ) -> Result<Self> {
        let dim = 2 * n;
        if n == 0 {
            return Err(Error::ChartInvalid(vec!["n must be at least 1".into()]));
        }
        if dim > 32 {
            return Err(Error::ChartInvalid(vec![format!(
                "dimension {dim} exceeds the supported maximum of 32"
            )]));
        }
        let omega = SymplecticData::new(dim, ring, omega_lower, policy.x_degree_max)?;

        // Symmetrize the connection, rejecting conflicts.
        let mut gamma_lower = vec![Coefficient::zero(ring, dim); dim * dim * dim];
        let mut assigned = vec![false; dim * dim * dim];
        let idx = |i: usize, j: usize, k: usize| ((i - 1) * dim + (j - 1)) * dim + (k - 1);
        for ([i, j, k], c) in gamma_entries {
            if c.ring() != ring || c.nvars() != dim {
                return Err(Error::ChartInvalid(vec![format!(
                    "gamma entry ({i},{j},{k}) not in the chart coefficient ring"
                )]));
            }
            for perm in permutations3(*i, *j, *k) {
                let t = idx(perm[0], perm[1], perm[2]);
                if assigned[t] && gamma_lower[t] != *c {
                    return Err(Error::ChartInvalid(vec![format!(
                        "conflicting values for gamma at a permutation of ({i},{j},{k})"
                    )]));
                }
                assigned[t] = true;
                gamma_lower[t] = c.clone();
            }
        }

        // Raise the first index: Gamma^m_{jk} = omega^{mi} Gamma_{ijk}.
        let mut gamma_upper = vec![Coefficient::zero(ring, dim); dim * dim * dim];
        for m in 1..=dim {
            for j in 1..=dim {
                for k in 1..=dim {
                    let mut acc = Coefficient::zero(ring, dim);
                    for i in 1..=dim {
                        let g = &gamma_lower[idx(i, j, k)];
                        if g.is_zero() {
                            continue;
                        }
                        acc = acc.add(&omega.upper(m, i).mul(g)?)?;
                    }
                    gamma_upper[idx(m, j, k)] = acc.truncate_degree(policy.x_degree_max);
                }
            }
        }

        // Corrections: shape and antisymmetry are hard errors.
        for (k, mat) in &corrections {
            if *k < 1 {
                return Err(Error::ChartInvalid(vec![format!(
                    "omega_k key must be a positive integer, got {k}"
                )]));
            }
            if mat.len() != dim || mat.iter().any(|r| r.len() != dim) {
                return Err(Error::ChartInvalid(vec![format!(
                    "omega_{k} matrix must be {dim} x {dim}"
                )]));
            }
            for i in 0..dim {
                for j in 0..dim {
                    if mat[i][j].ring() != ring || mat[i][j].nvars() != dim {
                        return Err(Error::ChartInvalid(vec![format!(
                            "omega_{k}[{}][{}] not in the chart coefficient ring",
                            i + 1,
                            j + 1
                        )]));
                    }
                    if !mat[i][j].add(&mat[j][i])?.is_zero() {
                        return Err(Error::ChartInvalid(vec![format!(
                            "omega_{k} is not antisymmetric at ({}, {})",
                            i + 1,
                            j + 1
                        )]));
                    }
                }
            }
        }

        Ok(Chart {
            n,
            dim,
            ring,
            omega,
            gamma_lower,
            gamma_upper,
            corrections,
            policy,
            volume,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ChartJson = serde_json::from_str(text).map_err(|e| Error::Parse {
            pos: e.column(),
            msg: format!("chart JSON: {e}"),
        })?;
        let dim = 2 * raw.n;
        let ring = match raw.ring.as_deref() {
            None | Some("jet") => RingKind::Jet,
            Some("fourier") => RingKind::Fourier,
            Some(other) => {
                return Err(Error::ChartInvalid(vec![format!(
                    "unknown ring {other:?} (expected \"jet\" or \"fourier\")"
                )]))
            }
        };
        let policy = {
            let t = &raw.truncation;
            let mut p = TruncationPolicy::new(t.weight_max, t.x_degree_max);
            if let Some(h) = t.hbar_max {
                p = p.with_hbar_max(h);
            }
            if let (Some(a), Some(b)) = (t.u_min, t.u_max) {
                p = p.with_u_range(a, b);
            }
            p
        };
        let parse_matrix = |rows: &Vec<Vec<String>>| -> Result<Vec<Vec<Coefficient>>> {
            rows.iter()
                .map(|row| {
                    row.iter()
                        .map(|s| Coefficient::parse(ring, dim, s))
                        .collect()
                })
                .collect()
        };
        let omega_lower = parse_matrix(&raw.omega)?;
        let mut gamma_entries = Vec::new();
        for (word, value) in &raw.gamma_lower {
            let ids = parse_index_word(word, dim)?;
            if ids.len() != 3 {
                return Err(Error::ChartInvalid(vec![format!(
                    "gamma_lower key {word:?} must have exactly three indices"
                )]));
            }
            gamma_entries.push((
                [ids[0], ids[1], ids[2]],
                Coefficient::parse(ring, dim, value)?,
            ));
        }
        let mut corrections = Vec::new();
        for (kstr, mat) in &raw.omega_k {
            let k: i64 = kstr.trim().parse().map_err(|_| Error::Parse {
                pos: 0,
                msg: format!("omega_k key {kstr:?} is not an integer"),
            })?;
            corrections.push((k, parse_matrix(mat)?));
        }
        let volume = match &raw.volume {
            None => Rat::one(),
            Some(v) => Rat::parse(v)?,
        };
        Chart::new(
            raw.n,
            ring,
            omega_lower,
            &gamma_entries,
            corrections,
            policy,
            volume,
        )
    }

    /// Flat chart with the standard constant form and zero connection.
    pub fn flat(n: usize, ring: RingKind, policy: TruncationPolicy) -> Result<Self> {
        let dim = 2 * n;
        let mut lower = vec![vec![Coefficient::zero(ring, dim); dim]; dim];
        for k in 0..n {
            lower[2 * k][2 * k + 1] = Coefficient::from_rat(ring, dim, Rat::one());
            lower[2 * k + 1][2 * k] = Coefficient::from_rat(ring, dim, -Rat::one());
        }
        Chart::new(n, ring, lower, &[], Vec::new(), policy, Rat::one())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ring(&self) -> RingKind {
        self.ring
    }

    pub fn omega(&self) -> &SymplecticData {
        &self.omega
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    pub fn volume(&self) -> &Rat {
        &self.volume
    }

    pub fn corrections(&self) -> &[(i64, Vec<Vec<Coefficient>>)] {
        &self.corrections
    }

    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        ((i - 1) * self.dim + (j - 1)) * self.dim + (k - 1)
    }

    /// Gamma_{ijk}, 1-based, totally symmetric.
    pub fn gamma_lower(&self, i: usize, j: usize, k: usize) -> &Coefficient {
        &self.gamma_lower[self.idx(i, j, k)]
    }

    /// Gamma^m_{jk}, 1-based.
    pub fn gamma_upper(&self, m: usize, j: usize, k: usize) -> &Coefficient {
        &self.gamma_upper[self.idx(m, j, k)]
    }

    pub fn is_flat_connection(&self) -> bool {
        self.gamma_lower.iter().all(|c| c.is_zero())
    }

    /// Non-fatal consistency problems: closedness of omega and of each
    /// correction, and covariant constancy of omega.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        match self.omega.is_closed() {
            Ok(true) => {}
            Ok(false) => problems.push("omega is not closed (d omega != 0)".into()),
            Err(e) => problems.push(format!("closedness check failed: {e}")),
        }
        for (k, mat) in &self.corrections {
            match self.correction_closed(mat) {
                Ok(true) => {}
                Ok(false) => problems.push(format!("omega_{k} is not closed")),
                Err(e) => problems.push(format!("omega_{k} closedness check failed: {e}")),
            }
        }
        match self.nabla_omega_zero() {
            Ok(true) => {}
            Ok(false) => problems.push("omega is not covariantly constant (nabla omega != 0)".into()),
            Err(e) => problems.push(format!("nabla omega check failed: {e}")),
        }
        problems
    }

    fn correction_closed(&self, mat: &[Vec<Coefficient>]) -> Result<bool> {
        for i in 1..=self.dim {
            for j in (i + 1)..=self.dim {
                for k in (j + 1)..=self.dim {
                    let s = mat[j - 1][k - 1]
                        .derive(i)?
                        .add(&mat[k - 1][i - 1].derive(j)?)?
                        .add(&mat[i - 1][j - 1].derive(k)?)?;
                    if !s.is_zero() {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// nabla_k omega_{ij} = d_k omega_{ij} - Gamma^m_{ki} omega_{mj}
    ///                      - Gamma^m_{kj} omega_{im} = 0 for all (k,i,j)?
    fn nabla_omega_zero(&self) -> Result<bool> {
        for k in 1..=self.dim {
            for i in 1..=self.dim {
                for j in 1..=self.dim {
                    let mut s = self.omega.lower(i, j).derive(k)?;
                    for m in 1..=self.dim {
                        let t1 = self.gamma_upper(m, k, i).mul(self.omega.lower(m, j))?;
                        let t2 = self.gamma_upper(m, k, j).mul(self.omega.lower(i, m))?;
                        s = s.add(&t1.neg())?.add(&t2.neg())?;
                    }
                    if !s.truncate_degree(self.policy.x_degree_max.saturating_sub(1)).is_zero() {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// R^m_{jkl}, 1-based.
    pub fn riemann_upper(&self, m: usize, j: usize, k: usize, l: usize) -> Result<Coefficient> {
        let mut r = self
            .gamma_upper(m, l, j)
            .derive(k)?
            .add(&self.gamma_upper(m, k, j).derive(l)?.neg())?;
        for p in 1..=self.dim {
            let a = self.gamma_upper(m, k, p).mul(self.gamma_upper(p, l, j))?;
            let b = self.gamma_upper(m, l, p).mul(self.gamma_upper(p, k, j))?;
            r = r.add(&a)?.add(&b.neg())?;
        }
        Ok(r.truncate_degree(self.policy.x_degree_max))
    }

    /// R_{ijkl} = omega_{im} R^m_{jkl}, 1-based.
    pub fn riemann_lower(&self, i: usize, j: usize, k: usize, l: usize) -> Result<Coefficient> {
        let mut r = Coefficient::zero(self.ring, self.dim);
        for m in 1..=self.dim {
            let rm = self.riemann_upper(m, j, k, l)?;
            if rm.is_zero() {
                continue;
            }
            r = r.add(&self.omega.lower(i, m).mul(&rm)?)?;
        }
        Ok(r.truncate_degree(self.policy.x_degree_max))
    }

    /// The fibre curvature section (1/4) R_{ijkl} y^i y^j dx^k dx^l.
    pub fn curvature_section(&self, policy: TruncationPolicy) -> Result<Section> {
        let mut s = Section::zero(self.dim, self.ring, policy);
        let quarter = Rat::new(1, 4);
        for i in 1..=self.dim {
            for j in 1..=self.dim {
                for k in 1..=self.dim {
                    for l in (k + 1)..=self.dim {
                        // R_{ijkl} antisymmetric in (k,l): fold the l<k half
                        // into the k<l terms (factor 2 cancels half of 1/4).
                        let c = self.riemann_lower(i, j, k, l)?;
                        if c.is_zero() {
                            continue;
                        }
                        let mut key = TermKey::scalar(self.dim);
                        key.y[i - 1] += 1;
                        key.y[j - 1] += 1;
                        key.dx = (1u64 << (k - 1)) | (1u64 << (l - 1));
                        s.insert(key, c.scale(&(&quarter * &Rat::from_int(2))));
                    }
                }
            }
        }
        Ok(s)
    }

    /// The central form -omega + sum_k hbar^k omega_k as a 2-form section.
    pub fn central_form(&self, policy: TruncationPolicy) -> Result<Section> {
        let mut s = self.omega.two_form(policy)?.neg();
        for (k, mat) in &self.corrections {
            for i in 1..=self.dim {
                for j in (i + 1)..=self.dim {
                    let c = &mat[i - 1][j - 1];
                    if c.is_zero() {
                        continue;
                    }
                    let mut key = TermKey::scalar(self.dim);
                    key.hbar = *k;
                    key.dx = (1u64 << (i - 1)) | (1u64 << (j - 1));
                    s.insert(key, c.clone());
                }
            }
        }
        Ok(s)
    }

    /// Covariant exterior derivative on sections (y and theta rotate).
    pub fn nabla(&self, a: &Section) -> Result<Section> {
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: a.dim(),
            });
        }
        let mut out = a.empty_like();
        for k in 1..=self.dim {
            let mut part = a.derive_x(k)?;
            if !self.is_flat_connection() {
                for m in 1..=self.dim {
                    for i in 1..=self.dim {
                        let g = self.gamma_upper(m, k, i);
                        if g.is_zero() {
                            continue;
                        }
                        let rot_y = a.derive_y(m)?.mul_y(i)?;
                        let rot_t = a.iota_theta(m)?.wedge_theta(i)?;
                        let rot = rot_y.try_add(&rot_t)?;
                        part = part.try_add(&rot.scale_coeff(g)?.neg())?;
                    }
                }
            }
            out = out.try_add(&part.wedge_dx(k)?)?;
        }
        Ok(out)
    }
}

fn permutations3(i: usize, j: usize, k: usize) -> [[usize; 3]; 6] {
    [
        [i, j, k],
        [i, k, j],
        [j, i, k],
        [j, k, i],
        [k, i, j],
        [k, j, i],
    ]
}

/// Check `4 R_{ijkl} = 3 (R_{(ijk)l} - R_{(ijl)k})` for an arbitrary
/// 4-tensor of coefficients (1-based closure). The symmetrizer averages
/// over the 6 permutations of its three indices.
pub fn first_bianchi_combination_holds(
    dim: usize,
    tensor: &dyn Fn(usize, usize, usize, usize) -> Result<Coefficient>,
) -> Result<bool> {
    let sym = |i: usize, j: usize, k: usize, l: usize| -> Result<Coefficient> {
        let mut acc = tensor(i, j, k, l)?.scale(&Rat::zero());
        for p in permutations3(i, j, k) {
            acc = acc.add(&tensor(p[0], p[1], p[2], l)?)?;
        }
        Ok(acc.scale(&Rat::new(1, 6)))
    };
    for i in 1..=dim {
        for j in 1..=dim {
            for k in 1..=dim {
                for l in 1..=dim {
                    let lhs = tensor(i, j, k, l)?.scale(&Rat::from_int(4));
                    let rhs = sym(i, j, k, l)?
                        .add(&sym(i, j, l, k)?.neg())?
                        .scale(&Rat::from_int(3));
                    if lhs != rhs {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

/// The curvature tensor of a chart satisfies the combination above.
pub fn bianchi_identity_check(chart: &Chart) -> Result<bool> {
    first_bianchi_combination_holds(chart.dim(), &|i, j, k, l| chart.riemann_lower(i, j, k, l))
}
