//! Simultaneous near-eigenstates of a flow generator and its Hamiltonian.
//!
//! A flow generator commutes with multiplication by its own Hamiltonian, so
//! they share spectral subspaces — but the multiplication operator's spectrum
//! on a grid is absolutely continuous, and a normalizable state can only pin
//! the energy down to the width of the shell it lives on.  The search grows a
//! small Krylov pool from a mollified energy shell under both operators,
//! diagonalizes the flow-residual Gram matrix on the pool, and projects the
//! seed onto the near-invariant directions.  Projecting (rather than
//! minimizing an energy functional) keeps the returned state on the seed's
//! energy shell instead of squeezing it into the narrowest shell the pool can
//! express.  The two residuals are reported separately: the flow residual is
//! limited by grid resolution, the energy residual stays pinned near the
//! shell width however fine the grid gets.

use num_complex::Complex64 as C64;

use super::{orthogonalize_cgs2, scale_c, wdot, wnorm, EigenPair, FlatBasis};
use crate::error::{KvnError, Result};
use crate::field::{ScalarField, StateFunction};
use crate::operator::{LinearOp, PhaseOperator};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Controls for [`joint_eigenstate`].
#[derive(Clone)]
pub struct JointOptions {
    /// Mollified-shell width of the seed; also scales the energy-residual
    /// acceptance gate, since no state on the shell can beat it.
    pub width: f64,
    /// Flow-residual scale: acceptance requires the flow residual below
    /// `10 × tolerance`.
    pub tolerance: f64,
    /// Krylov pool dimension grown under both operators.
    pub subspace: usize,
    pub seed: u64,
    /// Winding of the phase factor `e^{i·winding·angle}` painted on the
    /// seed, when an angle field is supplied.
    pub winding: i64,
    /// Angle field for the seed's phase factor.
    pub angle: Option<ScalarField>,
}

impl JointOptions {
    pub fn new(width: f64) -> Self {
        JointOptions {
            width,
            tolerance: 1e-6,
            subspace: 32,
            seed: 0x1015_7a7e,
            winding: 0,
            angle: None,
        }
    }
}

/// A certified joint near-eigenstate.
pub struct JointEigenstate {
    /// Flow-generator eigenpair; its residual is the flow residual.
    pub pair: EigenPair,
    /// Energy expectation of the returned state.
    pub energy: f64,
    pub lambda_residual: f64,
    pub energy_residual: f64,
    /// Dimension the Krylov pool actually reached.
    pub subspace_dim: usize,
}

/// Search for a state with `L ψ ≈ λ ψ` and `Ĥ ψ ≈ E ψ` simultaneously,
/// where `flow` generates the dynamics of the Hamiltonian sampled in
/// `h_field`.  Fails with the best residuals found when the targets are
/// incompatible — asking for a flow eigenvalue the energy shell does not
/// carry leaves the flow residual stuck at order one.
pub fn joint_eigenstate(
    flow: &PhaseOperator,
    h_field: &ScalarField,
    lambda: f64,
    energy: f64,
    opts: &JointOptions,
) -> Result<JointEigenstate> {
    let grid = flow.grid().clone();
    if !grid.same_geometry(h_field.grid()) {
        return Err(KvnError::GridMismatch(
            "joint eigenstate: Hamiltonian field lives on a different grid than the flow".into(),
        ));
    }
    if !(opts.width.is_finite() && opts.width > 0.0) {
        return Err(KvnError::InvalidParameter(
            "joint eigenstate: shell width must be positive".into(),
        ));
    }
    if opts.subspace < 2 {
        return Err(KvnError::InvalidParameter(
            "joint eigenstate: subspace must be at least 2".into(),
        ));
    }
    if let Some(angle) = &opts.angle {
        if !grid.same_geometry(angle.grid()) {
            return Err(KvnError::GridMismatch(
                "joint eigenstate: angle field lives on a different grid than the flow".into(),
            ));
        }
    }
    let n = grid.len();
    let w = flow.weights();
    let ham = PhaseOperator::multiply(h_field)?;

    // Seed: mollified shell at the requested energy, painted with the
    // requested winding when an angle field is available.
    let shell = StateFunction::mollified_delta_shell(h_field, energy, opts.width)?;
    let mut seed = shell.state.values().to_vec();
    if let Some(angle) = &opts.angle {
        for (s, a) in seed.iter_mut().zip(angle.values()) {
            *s *= C64::from_polar(1.0, opts.winding as f64 * a);
        }
    }
    let norm = wnorm(w, &seed);
    if norm <= 0.0 {
        return Err(KvnError::ZeroState { norm });
    }
    scale_c(&mut seed, C64::new(1.0 / norm, 0.0));

    // Grow the pool breadth-first under both operators.
    let k_max = opts.subspace.min(n);
    let mut basis = FlatBasis::new(n, k_max);
    basis.push(&seed);
    let mut frontier = vec![seed];
    while basis.len() < k_max && !frontier.is_empty() {
        let mut next = Vec::new();
        'outer: for v in &frontier {
            for op in [flow as &dyn LinearOp, &ham as &dyn LinearOp] {
                if basis.len() >= k_max {
                    break 'outer;
                }
                let mut img = vec![ZERO; n];
                op.matvec(v, &mut img);
                let mut discard = vec![ZERO; basis.len()];
                let norm = orthogonalize_cgs2(w, &[], &basis, &mut img, &mut discard, true);
                if norm > 1e-10 {
                    scale_c(&mut img, C64::new(1.0 / norm, 0.0));
                    basis.push(&img);
                    next.push(img);
                }
            }
        }
        frontier = next;
    }
    let k = basis.len();

    // Flow-residual Gram on the pool: G[i][j] = ⟨(L−λ)v_i, (L−λ)v_j⟩.
    let lam = C64::new(lambda, 0.0);
    let en = C64::new(energy, 0.0);
    let mut p_imgs: Vec<Vec<C64>> = Vec::with_capacity(k);
    for j in 0..k {
        let v = basis.col(j);
        let mut p = vec![ZERO; n];
        flow.matvec(v, &mut p);
        for (pi, vi) in p.iter_mut().zip(v) {
            *pi -= lam * vi;
        }
        p_imgs.push(p);
    }
    let mut g = vec![ZERO; k * k];
    for i in 0..k {
        for j in i..k {
            let d = wdot(w, &p_imgs[i], &p_imgs[j]);
            g[i * k + j] = if i == j { C64::new(d.re, 0.0) } else { d };
            g[j * k + i] = g[i * k + j].conj();
        }
    }
    let (gvals, gvecs) = crate::linalg::hermitian_eigen(k, &g)?;

    // Keep every direction whose squared flow residual is below the
    // acceptance gate or within a factor four of the best one, then project
    // the seed onto that near-invariant subspace.  The seed is the pool's
    // first basis vector, so its pool coordinates are e_0 and the overlap
    // with eigenvector u is conj(u[0]).
    let gate = 10.0 * opts.tolerance;
    let keep_below = (4.0 * gvals[0].max(0.0)).max(gate * gate);
    let mut coeff = vec![ZERO; k];
    for (i, &gv) in gvals.iter().enumerate() {
        if gv.max(0.0) <= keep_below {
            let u = &gvecs[i * k..(i + 1) * k];
            let a = u[0].conj();
            for (c, ur) in coeff.iter_mut().zip(u) {
                *c += a * ur;
            }
        }
    }
    let cnorm = coeff.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if cnorm < 1e-8 {
        // The seed carries no weight on the near-invariant directions; fall
        // back to the single best one so the failure report is meaningful.
        coeff.copy_from_slice(&gvecs[0..k]);
    } else {
        let inv = C64::new(1.0 / cnorm, 0.0);
        for c in coeff.iter_mut() {
            *c *= inv;
        }
    }
    let mut psi = basis.combine(&coeff);
    let norm = wnorm(w, &psi);
    if norm <= 0.0 {
        return Err(KvnError::ZeroState { norm });
    }
    scale_c(&mut psi, C64::new(1.0 / norm, 0.0));

    // Fresh residuals for the returned state.
    let mut flow_img = vec![ZERO; n];
    flow.matvec(&psi, &mut flow_img);
    let mut diff = flow_img;
    for (d, x) in diff.iter_mut().zip(&psi) {
        *d -= lam * x;
    }
    let lambda_residual = wnorm(w, &diff);
    let mut ham_img = vec![ZERO; n];
    ham.matvec(&psi, &mut ham_img);
    let e_actual = wdot(w, &psi, &ham_img).re;
    let mut ediff = ham_img;
    for (d, x) in ediff.iter_mut().zip(&psi) {
        *d -= en * x;
    }
    let energy_residual = wnorm(w, &ediff);

    if lambda_residual > 10.0 * opts.tolerance
        || energy_residual > (10.0 * opts.tolerance).max(3.0 * opts.width)
    {
        return Err(KvnError::NoJointEigenstate { lambda_residual, energy_residual });
    }

    let state = StateFunction::from_values(&grid, psi)?;
    Ok(JointEigenstate {
        pair: EigenPair {
            value: lam,
            state,
            residual: lambda_residual,
        },
        energy: e_actual,
        lambda_residual,
        energy_residual,
        subspace_dim: k,
    })
}
