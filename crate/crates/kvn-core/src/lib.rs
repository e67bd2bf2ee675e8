//! Spectral numerics for classical mechanics in Hilbert-space form.
//!
//! Classical states are complex amplitudes on a phase-space grid whose
//! squared modulus is the Liouville probability density. Observables act two
//! ways: as multiplication operators, and through their flow generators
//! `-i {., f}` built from Poisson brackets. The crate provides the grids and
//! state algebra, the operator constructions and their commutation checks,
//! matrix-free eigensolvers for the resulting (often non-normal) spectral
//! problems, Schmidt-based separability analysis across canonical pairs,
//! canonical coordinate charts (analytic and quadrature-built action-angle
//! maps, torus automorphisms) with grid-to-grid state transport, and the
//! shifted-operator construction that embeds a quantum harmonic oscillator
//! inside the classical formalism.

pub mod error;
pub mod grid;
mod deriv;
pub mod field;
mod linalg;
pub mod operator;
pub mod system;
pub mod propagate;
pub mod eigen;
pub mod separability;
pub mod chart;

pub use chart::{
    ho_action_angle_chart, ho_action_angle_chart_with_floor, koopman_matrix, lyapunov_estimate,
    numeric_action_angle_chart, product_chart, resample, smoothed_koopman, torus_linear_chart,
    volume_defect, ActionAngleTable, ActionLevel, CanonicalChart, KoopmanOperator, Resampled,
    SymplecticMap,
};
pub use eigen::{
    adjointness_residual, dense_oracle, hausdorff_distance, joint_eigenstate, krylov_eigensolve,
    EigenPair, FilterPolicy, JointEigenstate, JointOptions, SpectralOrdering, Spectrum,
    SpectrumOptions,
};
pub use error::{KvnError, Result};
pub use field::{ScalarField, ShellState, StateFunction};
pub use grid::{AxisSpec, PhaseSpaceGrid};
pub use operator::{algebra_check, poisson_bracket, AlgebraReport, LinearOp, PhaseOperator};
pub use propagate::{propagate, PropagatorOptions};
pub use separability::{
    csco_commutation_audit, full_product_test, involution_check, schmidt_decompose, Bipartition,
    CscoReport, InvolutionReport, ProductReport, SchmidtMethod, SchmidtSpectrum,
};
pub use system::{HamiltonianSystem, Potential};
