//! Exact-arithmetic computer algebra for deformation quantization on
//! symplectic charts: flat fibrewise connections on the formal Weyl
//! bundle, the associated star products, their odd (Batalin-Vilkovisky)
//! counterparts obtained by homotopy transfer along circle configuration
//! integrals, and the resulting trace maps with their semi-classical
//! expansions.
//!
//! All algebra is exact over the rationals (extended by a formal `2*pi*i`
//! generator where torus integrals require it); floating point appears
//! only in the numerical propagator/heat-kernel utilities, which are
//! cross-checked against the exact values.

pub mod bv;
pub mod chart;
pub mod circle;
pub mod coeff;
pub mod error;
pub mod fedosov;
pub mod fourier;
pub mod graph;
pub mod jet;
pub mod moyal;
pub mod rational;
pub mod section;
pub mod symplectic;
pub mod transfer;
pub mod weights;


pub use bv::{
    berezin, bv_bracket, bv_delta, d_tm, equivariant_integrate, exp_nilpotent, integrate, iota_pi,
    qme_residual,
};
pub use chart::Chart;
pub use circle::{
    amplitude, effective_propagator, heat_kernel, heat_kernel_fourier, heat_kernel_images,
    propagator, sawtooth_partial_sum, wheel_zeta, AmplitudeSpec,
};
pub use coeff::{Coefficient, RingKind};
pub use fedosov::{solve_fedosov, AbelianConnection};
pub use error::{Error, Result};
pub use fourier::FourierElement;
pub use graph::{enumerate_contraction_graphs, enumerate_graphs, Graph};
pub use weights::{contract_graph, graph_weight, hrg_flow, DecoratedGraph, PropagatorMatrix};
pub use jet::JetPoly;
pub use rational::{GaussRat, Rat, TauPoly};
pub use section::{Section, TermKey, TruncationPolicy};
pub use symplectic::SymplecticData;
pub use transfer::{
    a_hat_series, euler_rescale_residual, gamma_infinity, EulerOperator, GlobalSetup, IndexReport,
    Transfer,
};
