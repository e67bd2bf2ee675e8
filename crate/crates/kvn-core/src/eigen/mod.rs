//! Matrix-free spectral solvers for phase-space operators.
//!
//! The entry point is [`krylov_eigensolve`]: restarted Krylov iteration with
//! a stochastic self-adjointness precheck that routes either to a
//! thick-restart Lanczos solver with full reorthogonalization (plus an
//! optional Chebyshev bandpass filter for interior targets), or — when the
//! caller explicitly accepts it — to a restarted Arnoldi solver for general
//! operators.  [`dense_oracle`] materializes small operators column by column
//! and diagonalizes them densely; it exists so the iterative paths have an
//! exact reference to be measured against.  [`joint_eigenstate`] searches for
//! simultaneous near-eigenstates of a flow generator and the multiplication
//! operator of its Hamiltonian.
//!
//! Every returned pair is certified: the stored residual comes from a fresh
//! operator application to the final, normalized eigenfunction.

mod arnoldi;
mod dense;
mod joint;
mod lanczos;

pub use dense::dense_oracle;
pub use joint::{joint_eigenstate, JointEigenstate, JointOptions};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KvnError, Result};
use crate::field::StateFunction;
use std::sync::Arc;

use crate::grid::PhaseSpaceGrid;
use crate::operator::LinearOp;

/// One certified eigenpair.
///
/// `residual` is `‖op ψ − value·ψ‖ / ‖ψ‖`, recomputed from a fresh operator
/// application at certification time; `state` is normalized in the grid's
/// quadrature norm.
#[derive(Clone)]
pub struct EigenPair {
    pub value: C64,
    pub state: StateFunction,
    pub residual: f64,
}

/// How returned eigenvalues are ranked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralOrdering {
    /// Ascending distance from the shift (the default).
    ClosestToShift,
    /// Descending modulus — the natural target for composition operators.
    LargestMagnitude,
}

/// Interior-target filtering policy for the self-adjoint path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterPolicy {
    /// Filter when the shift is interior to the estimated spectral range and
    /// the dimension is too large for a full-dimension sweep.
    Auto,
    /// Never filter.
    Off,
    /// Always filter with the given polynomial degree.
    Chebyshev { degree: usize },
}

/// Controls for [`krylov_eigensolve`].
#[derive(Clone, Debug)]
pub struct SpectrumOptions {
    /// Number of eigenpairs requested (each certified below `tolerance`).
    pub how_many: usize,
    /// Spectral target; pairs are ranked by `|λ − shift|` under
    /// [`SpectralOrdering::ClosestToShift`].
    pub shift: C64,
    /// Residual bound a pair must beat to count as converged.
    pub tolerance: f64,
    /// Restart-cycle budget before giving up with partial results.
    pub max_restarts: usize,
    /// Krylov subspace dimension; `None` picks one from `how_many`, the grid
    /// size, and the basis-memory budget.
    pub subspace: Option<usize>,
    pub ordering: SpectralOrdering,
    /// Accept a non-self-adjoint operator and use the Arnoldi path.  Without
    /// this flag a failed adjointness precheck is an error.
    pub accept_general: bool,
    /// Seed for start vectors and precheck probe states.
    pub seed: u64,
    /// Number of probe states in the self-adjointness precheck.
    pub adjoint_probes: usize,
    /// Adjointness residual the precheck must beat.
    pub adjoint_tolerance: f64,
    /// Grids with at most this many points get a single full-dimension
    /// Krylov sweep, which resolves interior clusters exactly.
    pub exact_below: usize,
    /// Memory budget for the Krylov basis, in bytes.
    pub max_basis_bytes: usize,
    pub filter: FilterPolicy,
}

impl SpectrumOptions {
    pub fn new(how_many: usize) -> Self {
        SpectrumOptions {
            how_many,
            shift: C64::new(0.0, 0.0),
            tolerance: 1e-9,
            max_restarts: 300,
            subspace: None,
            ordering: SpectralOrdering::ClosestToShift,
            accept_general: false,
            seed: 0x517c_ab1e,
            adjoint_probes: 5,
            adjoint_tolerance: 1e-6,
            exact_below: 1536,
            max_basis_bytes: 1_000_000_000,
            filter: FilterPolicy::Auto,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.how_many == 0 {
            return Err(KvnError::InvalidParameter(
                "eigensolve: how_many must be positive".into(),
            ));
        }
        if self.how_many > dim {
            return Err(KvnError::InvalidParameter(format!(
                "eigensolve: {} pairs requested from a {dim}-point grid",
                self.how_many
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(KvnError::InvalidParameter(format!(
                "eigensolve: tolerance must be positive and finite, got {}",
                self.tolerance
            )));
        }
        if self.max_restarts == 0 {
            return Err(KvnError::InvalidParameter(
                "eigensolve: max_restarts must be positive".into(),
            ));
        }
        if let Some(m) = self.subspace {
            if m < 2 {
                return Err(KvnError::InvalidParameter(
                    "eigensolve: subspace dimension must be at least 2".into(),
                ));
            }
        }
        if !self.shift.is_finite() {
            return Err(KvnError::InvalidParameter("eigensolve: shift must be finite".into()));
        }
        Ok(())
    }

    pub(crate) fn rank_key(&self, value: C64) -> f64 {
        match self.ordering {
            SpectralOrdering::ClosestToShift => (value - self.shift).norm(),
            SpectralOrdering::LargestMagnitude => -value.norm(),
        }
    }
}

/// Result of an iterative eigensolve.
pub struct Spectrum {
    /// Certified pairs in the requested ordering, at most `how_many`.
    pub pairs: Vec<EigenPair>,
    /// False when the restart budget ran out first; the pairs present are
    /// still certified.
    pub converged: bool,
    /// Restart cycles consumed.
    pub restarts: usize,
    /// Operator applications consumed.
    pub matvecs: usize,
    /// True when the Arnoldi path ran (caller accepted a general operator).
    pub used_general_path: bool,
}

impl Spectrum {
    pub fn values(&self) -> Vec<C64> {
        self.pairs.iter().map(|p| p.value).collect()
    }
}

pub(crate) struct RawPair {
    pub value: C64,
    pub vector: Vec<C64>,
    pub residual: f64,
}

pub(crate) struct RawOutcome {
    pub pairs: Vec<RawPair>,
    pub converged: bool,
    pub restarts: usize,
    pub matvecs: usize,
}

/// Iterative eigensolve for an operator acting on states over `grid`.
///
/// Unless `accept_general` is set, the operator must pass a stochastic
/// self-adjointness precheck (`adjoint_probes` seeded localized states,
/// worst pairing asymmetry below `adjoint_tolerance`); it is then driven by
/// thick-restart Lanczos with full reorthogonalization and locking, with a
/// full-dimension sweep on small grids and Chebyshev-filtered restarts for
/// interior shifts on large ones.  With the flag set, a restarted Arnoldi
/// iteration handles general spectra.
///
/// Non-convergence within the restart budget is not an error: the certified
/// pairs found so far come back with `converged == false`.
pub fn krylov_eigensolve(
    op: &dyn LinearOp,
    grid: &Arc<PhaseSpaceGrid>,
    opts: &SpectrumOptions,
) -> Result<Spectrum> {
    if op.dim() != grid.len() {
        return Err(KvnError::GridMismatch(format!(
            "eigensolve: operator dimension {} does not match the {}-point grid",
            op.dim(),
            grid.len()
        )));
    }
    if op.weights().len() != grid.len() {
        return Err(KvnError::GridMismatch(
            "eigensolve: operator quadrature weights do not match the grid".into(),
        ));
    }
    opts.validate(grid.len())?;

    let (outcome, general) = if opts.accept_general {
        (arnoldi::solve(op, grid, opts)?, true)
    } else {
        let res = adjointness_residual(op, grid, opts.adjoint_probes.max(1), opts.seed);
        if res > opts.adjoint_tolerance {
            return Err(KvnError::NotSelfAdjoint {
                residual: res,
                tolerance: opts.adjoint_tolerance,
            });
        }
        (lanczos::solve(op, grid, opts)?, false)
    };

    let mut pairs = Vec::with_capacity(outcome.pairs.len());
    for raw in outcome.pairs {
        pairs.push(EigenPair {
            value: raw.value,
            state: StateFunction::from_values(grid, raw.vector)?,
            residual: raw.residual,
        });
    }
    Ok(Spectrum {
        pairs,
        converged: outcome.converged,
        restarts: outcome.restarts,
        matvecs: outcome.matvecs,
        used_general_path: general,
    })
}

/// Worst pairing asymmetry `|⟨Aψᵢ, ψⱼ⟩ − ⟨ψᵢ, Aψⱼ⟩|` over seeded localized
/// probe states, normalized by the largest image norm.
pub fn adjointness_residual(
    op: &dyn LinearOp,
    grid: &Arc<PhaseSpaceGrid>,
    probes: usize,
    seed: u64,
) -> f64 {
    let w = op.weights();
    let mut states: Vec<Vec<C64>> = Vec::with_capacity(probes);
    for i in 0..probes {
        let mut v = StateFunction::random_localized(grid, seed.wrapping_add(i as u64))
            .values()
            .to_vec();
        let norm = wnorm(w, &v);
        if norm > 0.0 {
            scale_c(&mut v, C64::new(1.0 / norm, 0.0));
        }
        states.push(v);
    }
    let mut images = Vec::with_capacity(probes);
    let mut scale: f64 = 0.0;
    for s in &states {
        let mut out = vec![C64::new(0.0, 0.0); s.len()];
        op.matvec(s, &mut out);
        scale = scale.max(wnorm(w, &out));
        images.push(out);
    }
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for i in 0..probes {
        for j in i..probes {
            let lhs = wdot(w, &images[i], &states[j]);
            let rhs = wdot(w, &states[i], &images[j]);
            worst = worst.max((lhs - rhs).norm());
        }
    }
    worst / scale
}

/// Symmetric Hausdorff distance between two finite eigenvalue sets.
pub fn hausdorff_distance(a: &[C64], b: &[C64]) -> f64 {
    fn directed(from: &[C64], to: &[C64]) -> f64 {
        let mut worst: f64 = 0.0;
        for x in from {
            let mut best = f64::INFINITY;
            for y in to {
                best = best.min((x - y).norm());
            }
            worst = worst.max(best);
        }
        worst
    }
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    directed(a, b).max(directed(b, a))
}

// ---- shared kernels -------------------------------------------------------

/// Weighted inner product, conjugate-linear in `a`.  Four-lane blocked
/// summation: deterministic and fast; the state-algebra layer keeps the
/// compensated version for quadrature-grade accuracy.
pub(crate) fn wdot(w: &[f64], a: &[C64], b: &[C64]) -> C64 {
    let mut acc = [C64::new(0.0, 0.0); 4];
    let n = w.len();
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i].conj() * b[i] * w[i];
        acc[1] += a[i + 1].conj() * b[i + 1] * w[i + 1];
        acc[2] += a[i + 2].conj() * b[i + 2] * w[i + 2];
        acc[3] += a[i + 3].conj() * b[i + 3] * w[i + 3];
    }
    for i in chunks * 4..n {
        acc[0] += a[i].conj() * b[i] * w[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

pub(crate) fn wnorm_sq(w: &[f64], a: &[C64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let n = w.len();
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i].norm_sqr() * w[i];
        acc[1] += a[i + 1].norm_sqr() * w[i + 1];
        acc[2] += a[i + 2].norm_sqr() * w[i + 2];
        acc[3] += a[i + 3].norm_sqr() * w[i + 3];
    }
    for i in chunks * 4..n {
        acc[0] += a[i].norm_sqr() * w[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

pub(crate) fn wnorm(w: &[f64], a: &[C64]) -> f64 {
    wnorm_sq(w, a).sqrt()
}

pub(crate) fn axpy_c(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn scale_c(v: &mut [C64], s: C64) {
    for vi in v.iter_mut() {
        *vi *= s;
    }
}

/// Contiguous column store for a Krylov basis.
pub(crate) struct FlatBasis {
    n: usize,
    data: Vec<C64>,
    len: usize,
}

impl FlatBasis {
    pub fn new(n: usize, capacity: usize) -> Self {
        FlatBasis {
            n,
            data: vec![C64::new(0.0, 0.0); n * capacity],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn col(&self, j: usize) -> &[C64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn push(&mut self, v: &[C64]) {
        let j = self.len;
        self.data[j * self.n..(j + 1) * self.n].copy_from_slice(v);
        self.len += 1;
    }

    pub fn clear(&mut self) {
        self.len = 0;
    }

    /// Linear combinations `out_t = Σ_j coeff_cols[t][j]·col(j)` computed in
    /// one streaming pass over the basis memory.
    pub fn combine_block(&self, coeff_cols: &[&[C64]]) -> Vec<Vec<C64>> {
        let mut outs: Vec<Vec<C64>> = coeff_cols
            .iter()
            .map(|_| vec![C64::new(0.0, 0.0); self.n])
            .collect();
        for j in 0..self.len {
            let col = self.col(j);
            for (t, coeffs) in coeff_cols.iter().enumerate() {
                let c = coeffs[j];
                if c != C64::new(0.0, 0.0) {
                    axpy_c(&mut outs[t], c, col);
                }
            }
        }
        outs
    }

    pub fn combine(&self, coeffs: &[C64]) -> Vec<C64> {
        self.combine_block(&[coeffs]).pop().unwrap()
    }
}

/// Classical Gram-Schmidt with a conditional second pass.  Orthogonalizes
/// `v` against the locked vectors (coefficients discarded) and the basis
/// (coefficients accumulated into `coeffs`), returning the weighted norm of
/// the remainder.  The second pass triggers on significant cancellation, or
/// always when `always_second_pass` is set.
pub(crate) fn orthogonalize_cgs2(
    w: &[f64],
    locked: &[Vec<C64>],
    basis: &FlatBasis,
    v: &mut [C64],
    coeffs: &mut [C64],
    always_second_pass: bool,
) -> f64 {
    let norm_before = wnorm(w, v);
    let pass = |v: &mut [C64], coeffs: &mut [C64]| {
        let mut lc = Vec::with_capacity(locked.len());
        for l in locked {
            lc.push(wdot(w, l, v));
        }
        let mut bc = Vec::with_capacity(basis.len());
        for j in 0..basis.len() {
            bc.push(wdot(w, basis.col(j), v));
        }
        for (l, c) in locked.iter().zip(&lc) {
            axpy_c(v, -c, l);
        }
        for j in 0..basis.len() {
            axpy_c(v, -bc[j], basis.col(j));
        }
        for (cj, bj) in coeffs.iter_mut().zip(&bc) {
            *cj += bj;
        }
    };
    pass(v, coeffs);
    let norm_mid = wnorm(w, v);
    if always_second_pass || norm_mid < 0.707 * norm_before {
        pass(v, coeffs);
        wnorm(w, v)
    } else {
        norm_mid
    }
}

/// Fresh random direction orthogonal to the locked set and the basis; None
/// when they already span everything reachable.
pub(crate) fn padded_direction(
    w: &[f64],
    locked: &[Vec<C64>],
    basis: &FlatBasis,
    seed: u64,
) -> Option<Vec<C64>> {
    for attempt in 0..64u64 {
        let mut v = white_noise(w.len(), seed.wrapping_add(attempt * 0x9e37));
        let mut discard = vec![C64::new(0.0, 0.0); basis.len()];
        let norm = orthogonalize_cgs2(w, locked, basis, &mut v, &mut discard, true);
        if norm > 1e-8 {
            scale_c(&mut v, C64::new(1.0 / norm, 0.0));
            return Some(v);
        }
    }
    None
}

/// Full-rank white noise: every grid point gets an independent complex
/// component, so repeated draws can complete any basis.  Krylov padding and
/// start vectors need this full support; the windowed random states used for
/// adjointness probes deliberately lack it.
fn white_noise(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Seeded, weighted-unit start vector orthogonal to the locked set.
pub(crate) fn seeded_unit(w: &[f64], locked: &[Vec<C64>], seed: u64) -> Vec<C64> {
    let empty = FlatBasis::new(w.len(), 0);
    for attempt in 0..64 {
        let mut v = white_noise(w.len(), seed.wrapping_add(attempt * 0x9e37));
        let mut discard: Vec<C64> = Vec::new();
        let norm = orthogonalize_cgs2(w, locked, &empty, &mut v, &mut discard, true);
        if norm > 1e-8 {
            scale_c(&mut v, C64::new(1.0 / norm, 0.0));
            return v;
        }
    }
    // Locked set spans nearly everything reachable; fall back to a basis
    // delta orthogonalized the same way.
    let mut v = vec![C64::new(0.0, 0.0); w.len()];
    v[(seed as usize) % w.len()] = C64::new(1.0, 0.0);
    let mut discard: Vec<C64> = Vec::new();
    let norm = orthogonalize_cgs2(w, locked, &empty, &mut v, &mut discard, true);
    if norm > 0.0 {
        scale_c(&mut v, C64::new(1.0 / norm, 0.0));
    }
    v
}
