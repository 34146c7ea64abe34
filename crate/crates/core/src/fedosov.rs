//! Order-by-order solution of the flatness equation on the Weyl bundle,
//! and the induced star product on symbols.
//!
//! The connection one-form is `gamma = omega_{ij} y^i dx^j + r` where the
//! tail `r` is the unique odd one-form with weight >= 3 and
//! `delta_inv r = 0` satisfying
//!
//! ```text
//! nabla gamma + (1/(2 hbar)) [gamma, gamma] + R = -omega + sum_k hbar^k omega_k.
//! ```
//!
//! Because `(1/hbar) [omega_{ij} y^i dx^j, a] = -delta a` and the seed
//! term squares to `-omega`, the tail is the fixed point of
//!
//! ```text
//! r = delta_inv( nabla gamma0 + R - sum_k hbar^k omega_k
//!                + nabla r + (1/hbar) r * r ),
//! ```
//!
//! which converges in at most `weight_max` passes since the weight-w
//! component of the right side only involves components of `r` below w.
//!
//! Truncation headroom: the solve runs under the chart policy bumped by
//! two units of weight and one of hbar, and the connection keeps that
//! bumped policy. The quadratic term `(1/hbar) a * b` carries two more
//! units of weight (and one more hbar) in its intermediate product than
//! in its value, so the bump makes the tail exact through one weight
//! past the public cap and the residual exact through the cap itself;
//! a zero residual therefore certifies flatness at every publicly
//! retained order instead of losing the boundary to truncation.

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::moyal::{delta, delta_inv, moyal, moyal_commutator, require_theta_free};
use crate::section::{Section, TruncationPolicy};

/// A flat fibrewise connection, solved once per chart/policy pair.
#[derive(Clone)]
pub struct AbelianConnection {
    chart: Chart,
    public: TruncationPolicy,
    internal: TruncationPolicy,
    /// gamma0 + r at the internal (bumped) policy.
    gamma: Section,
    /// The weight >= 3 tail alone, internal policy.
    tail: Section,
    /// -omega + corrections, internal policy.
    central: Section,
}

/// Solve for the flat connection under the given public truncation policy.
pub fn solve_fedosov(chart: &Chart, public: TruncationPolicy) -> Result<AbelianConnection> {
    let internal = public.bumped(2, 1);
    let gamma0 = chart.omega().gamma0(internal)?;
    let curvature = chart.curvature_section(internal)?;
    let central = chart.central_form(internal)?;
    // sum_k hbar^k omega_k = central + omega.
    let corrections = central.try_add(&chart.omega().two_form(internal)?)?;
    let source = chart
        .nabla(&gamma0)?
        .try_add(&curvature)?
        .try_sub(&corrections)?;

    let mut tail = Section::zero(chart.dim(), chart.ring(), internal);
    let max_passes = (internal.weight_max.max(1) as usize) + 2;
    let mut converged = false;
    for _ in 0..max_passes {
        let quad = moyal(&tail, &tail, chart.omega())?.div_hbar(1, i64::MIN)?;
        let next = delta_inv(&source.try_add(&chart.nabla(&tail)?)?.try_add(&quad)?)?;
        if next == tail {
            converged = true;
            break;
        }
        tail = next;
    }
    if !converged {
        return Err(Error::NonConvergence(max_passes));
    }
    let gamma = gamma0.try_add(&tail)?;
    Ok(AbelianConnection {
        chart: chart.clone(),
        public,
        internal,
        gamma,
        tail,
        central,
    })
}

impl AbelianConnection {
    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn public_policy(&self) -> TruncationPolicy {
        self.public
    }

    pub fn internal_policy(&self) -> TruncationPolicy {
        self.internal
    }

    /// The full connection one-form at the internal (bumped) policy.
    pub fn gamma(&self) -> &Section {
        &self.gamma
    }

    /// The weight >= 3 tail at the internal policy.
    pub fn tail(&self) -> &Section {
        &self.tail
    }

    /// The connection one-form re-truncated to the public policy.
    pub fn gamma_public(&self) -> Section {
        self.gamma.with_policy(self.public)
    }

    /// nabla gamma + (1/hbar) gamma * gamma + R - central form, evaluated
    /// at the internal policy and re-truncated to the public one. Zero
    /// certifies flatness through every publicly retained order.
    pub fn flatness_residual(&self) -> Result<Section> {
        let quad = moyal(&self.gamma, &self.gamma, self.chart.omega())?.div_hbar(1, i64::MIN)?;
        let res = self
            .chart
            .nabla(&self.gamma)?
            .try_add(&quad)?
            .try_add(&self.chart.curvature_section(self.internal)?)?
            .try_sub(&self.central)?;
        Ok(res.with_policy(self.public))
    }

    /// The flat covariant derivative `D a = nabla a - delta a +
    /// (1/hbar) [tail, a]` (theta-free sections).
    pub fn flat_derivative(&self, a: &Section) -> Result<Section> {
        require_theta_free(a)?;
        let bracket =
            moyal_commutator(&self.tail, a, self.chart.omega())?.div_hbar(1, i64::MIN)?;
        self.chart
            .nabla(a)?
            .try_sub(&delta(a)?)?
            .try_add(&bracket)
    }

    /// Lift a symbol (no y, dx, theta) to the flat section with that
    /// symbol: the fixed point of `a = f + delta_inv(nabla a +
    /// (1/hbar) [tail, a])`. Returned at the internal policy.
    pub fn quantize(&self, f: &Section) -> Result<Section> {
        require_theta_free(f)?;
        if !f.all_terms(|k| k.y_degree() == 0 && k.dx == 0) {
            return Err(Error::UnexpectedGenerator("y or dx in a symbol"));
        }
        let f = f.with_policy(self.internal);
        let mut a = f.clone();
        let max_passes = (self.internal.weight_max.max(1) as usize) + 2;
        for _ in 0..max_passes {
            let bracket =
                moyal_commutator(&self.tail, &a, self.chart.omega())?.div_hbar(1, i64::MIN)?;
            let next = f.try_add(&delta_inv(&self.chart.nabla(&a)?.try_add(&bracket)?)?)?;
            if next == a {
                return Ok(a);
            }
            a = next;
        }
        Err(Error::NonConvergence(max_passes))
    }

    /// Project a flat section back to its symbol (y-degree 0, no dx).
    pub fn symbol(&self, a: &Section) -> Section {
        a.filter(|k| k.y_degree() == 0 && k.dx == 0)
    }

    /// Star product of two symbols, re-truncated to the public policy.
    pub fn star(&self, f: &Section, g: &Section) -> Result<Section> {
        let qa = self.quantize(f)?;
        let qb = self.quantize(g)?;
        let prod = moyal(&qa, &qb, self.chart.omega())?;
        Ok(self.symbol(&prod).with_policy(self.public))
    }
}
