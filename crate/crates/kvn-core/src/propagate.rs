//! Time evolution `psi(t) = exp(-i G t) psi(0)` by restarted Krylov
//! approximation of the matrix exponential.
//!
//! Each substep projects the generator onto an orthonormal Krylov basis
//! (Arnoldi with twice-applied classical Gram-Schmidt under the quadrature
//! inner product), exponentiates the small projected matrix densely, and
//! recombines. The generator is never materialized. For a self-adjoint
//! generator the projected matrix is numerically Hermitian, so evolution
//! preserves the norm to rounding.

use crate::error::{KvnError, Result};
use crate::field::{weighted_inner, weighted_norm_sq, StateFunction};
use crate::operator::LinearOp;
use num_complex::Complex64 as C64;

#[derive(Debug, Clone, Copy)]
pub struct PropagatorOptions {
    /// Krylov basis size per substep.
    pub krylov_dim: usize,
    /// Number of equal substeps the interval is split into.
    pub substeps: usize,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        PropagatorOptions {
            krylov_dim: 48,
            substeps: 16,
        }
    }
}

/// Evolve a state by `exp(-i G t)` for a matrix-free generator `G`.
pub fn propagate(
    generator: &(impl LinearOp + ?Sized),
    psi: &StateFunction,
    t: f64,
    opts: &PropagatorOptions,
) -> Result<StateFunction> {
    if !t.is_finite() {
        return Err(KvnError::InvalidParameter(format!(
            "evolution time must be finite, got {t}"
        )));
    }
    if opts.krylov_dim < 2 || opts.substeps == 0 {
        return Err(KvnError::InvalidParameter(format!(
            "need krylov_dim >= 2 and substeps >= 1, got {} and {}",
            opts.krylov_dim, opts.substeps
        )));
    }
    if generator.dim() != psi.len() {
        return Err(KvnError::GridMismatch(format!(
            "generator dimension {} does not match state length {}",
            generator.dim(),
            psi.len()
        )));
    }
    psi.check_finite("propagation input state")?;

    let mut v = psi.values().to_vec();
    let tau = t / opts.substeps as f64;
    for _ in 0..opts.substeps {
        krylov_exp_step(generator, &mut v, tau, opts.krylov_dim)?;
    }
    StateFunction::from_values(psi.grid(), v)
}

fn krylov_exp_step(
    generator: &(impl LinearOp + ?Sized),
    v: &mut [C64],
    tau: f64,
    m: usize,
) -> Result<()> {
    let w = generator.weights();
    let n = v.len();
    let beta = weighted_norm_sq(w, v).sqrt();
    if beta < 1e-300 {
        return Ok(());
    }

    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
    basis.push(v.iter().map(|z| z / beta).collect());
    // Projected matrix, row-major (m+1) x m.
    let mut h = vec![C64::new(0.0, 0.0); (m + 1) * m];
    let mut m_eff = m;

    let mut work = vec![C64::new(0.0, 0.0); n];
    for j in 0..m {
        generator.matvec(&basis[j], &mut work);
        // Classical Gram-Schmidt, applied twice.
        for _pass in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let coeff = weighted_inner(w, b, &work);
                h[i * m + j] += coeff;
                for k in 0..n {
                    work[k] -= coeff * b[k];
                }
            }
        }
        let beta_next = weighted_norm_sq(w, &work).sqrt();
        h[(j + 1) * m + j] = C64::new(beta_next, 0.0);
        if beta_next < 1e-13 * beta.max(1.0) {
            m_eff = j + 1;
            break;
        }
        basis.push(work.iter().map(|z| z / beta_next).collect());
    }

    // exp(-i tau H_m) e1 through dense scaling-and-squaring.
    let mut small = vec![C64::new(0.0, 0.0); m_eff * m_eff];
    for r in 0..m_eff {
        for c in 0..m_eff {
            small[r * m_eff + c] = h[r * m + c] * C64::new(0.0, -tau);
        }
    }
    let e = small_matrix_exp(&small, m_eff);

    for z in v.iter_mut() {
        *z = C64::new(0.0, 0.0);
    }
    for (k, b) in basis.iter().take(m_eff).enumerate() {
        let coeff = e[k * m_eff] * beta; // first column of exp
        for i in 0..n {
            v[i] += coeff * b[i];
        }
    }
    Ok(())
}

/// Dense `exp(a)` for a small row-major `m x m` complex matrix, by scaling
/// and squaring with a Taylor inner series.
pub(crate) fn small_matrix_exp(a: &[C64], m: usize) -> Vec<C64> {
    let norm1 = (0..m)
        .map(|c| (0..m).map(|r| a[r * m + c].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s = if norm1 > 0.25 {
        (norm1 / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(s as i32);
    let b: Vec<C64> = a.iter().map(|z| z * scale).collect();

    let mut result = identity(m);
    let mut term = identity(m);
    for k in 1..=40 {
        term = matmul(&term, &b, m);
        let inv_k = 1.0 / k as f64;
        for z in term.iter_mut() {
            *z *= inv_k;
        }
        for i in 0..result.len() {
            result[i] += term[i];
        }
        let tnorm: f64 = term.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if tnorm < 1e-22 {
            break;
        }
    }
    for _ in 0..s {
        result = matmul(&result, &result, m);
    }
    result
}

fn identity(m: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m * m];
    for i in 0..m {
        out[i * m + i] = C64::new(1.0, 0.0);
    }
    out
}

fn matmul(a: &[C64], b: &[C64], m: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m * m];
    for r in 0..m {
        for k in 0..m {
            let av = a[r * m + k];
            if av.norm_sqr() == 0.0 {
                continue;
            }
            for c in 0..m {
                out[r * m + c] += av * b[k * m + c];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseSpaceGrid;
    use crate::system::HamiltonianSystem;

    #[test]
    fn small_exp_matches_closed_form_rotation() {
        // exp(-i t X) for X = [[0,1],[1,0]] is [[cos t, -i sin t], [-i sin t, cos t]].
        let t = 0.7;
        let a = vec![
            C64::new(0.0, 0.0),
            C64::new(0.0, -t),
            C64::new(0.0, -t),
            C64::new(0.0, 0.0),
        ];
        let e = small_matrix_exp(&a, 2);
        assert!((e[0] - C64::new(t.cos(), 0.0)).norm() < 1e-14);
        assert!((e[1] - C64::new(0.0, -t.sin())).norm() < 1e-14);
        assert!((e[2] - C64::new(0.0, -t.sin())).norm() < 1e-14);
        assert!((e[3] - C64::new(t.cos(), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn oscillator_transport_matches_characteristics() {
        // The evolved amplitude is the initial amplitude dragged along the
        // backward classical flow, which for the unit oscillator is a rigid
        // rotation of the (q, p) plane.
        let g = PhaseSpaceGrid::periodic_box(&[7.0, 7.0], &[80, 80]).unwrap();
        let sys = HamiltonianSystem::harmonic_oscillator(1.0, 1.0).unwrap();
        let liouville = sys.liouvillian(&g).unwrap();
        let init = |q: f64, p: f64| C64::new((-((q - 2.0) * (q - 2.0) + p * p)).exp(), 0.0);
        let mut psi = StateFunction::from_fn(&g, |x| init(x[0], x[1]));
        psi.normalize().unwrap();
        let norm0 = psi.norm();

        let t = std::f64::consts::PI / 3.0;
        let opts = PropagatorOptions {
            krylov_dim: 48,
            substeps: 24,
        };
        let evolved = propagate(&liouville, &psi, t, &opts).unwrap();

        let mut exact = StateFunction::from_fn(&g, |x| {
            init(x[0] * t.cos() - x[1] * t.sin(), x[1] * t.cos() + x[0] * t.sin())
        });
        exact.normalize().unwrap();

        let mut diff = evolved.clone();
        diff.add_scaled_mut(C64::new(-1.0, 0.0), &exact).unwrap();
        let err = diff.norm();
        assert!(err < 1e-8, "transport error {err:.3e}");

        let drift = (evolved.norm() - norm0).abs();
        assert!(drift < 1e-10, "norm drift {drift:.3e}");
    }

    #[test]
    fn evolution_leaves_energy_shells_invariant() {
        let g = PhaseSpaceGrid::periodic_box(&[6.0, 6.0], &[128, 128]).unwrap();
        let sys = HamiltonianSystem::harmonic_oscillator(1.0, 1.0).unwrap();
        let h = sys.hamiltonian_field(&g).unwrap();
        let shell = StateFunction::mollified_delta_shell(&h, 1.5, 0.5).unwrap();
        let liouville = sys.liouvillian(&g).unwrap();
        let evolved = propagate(&liouville, &shell.state, 2.0, &PropagatorOptions::default()).unwrap();
        let mut diff = evolved.clone();
        diff.add_scaled_mut(C64::new(-1.0, 0.0), &shell.state).unwrap();
        assert!(diff.norm() < 1e-7, "shell moved by {:.3e}", diff.norm());
    }
}
