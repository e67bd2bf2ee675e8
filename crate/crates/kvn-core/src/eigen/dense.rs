//! Dense reference diagonalization for small operators.
//!
//! The oracle materializes the operator one column at a time through its
//! matvec, so it exercises exactly the same code path the iterative solvers
//! see, then hands the matrix to a dense eigensolver.  It answers the
//! question "what should the Krylov spectra look like" on grids small enough
//! to afford O(n³); it is a test fixture, not a production path.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::{wdot, wnorm, EigenPair, Spectrum};
use crate::error::{KvnError, Result};
use crate::field::StateFunction;
use crate::grid::PhaseSpaceGrid;
use crate::linalg;
use crate::operator::LinearOp;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Dense eigendecomposition of an operator with at most `cap` grid points
/// (default 4096).  Detects weighted self-adjointness numerically and uses
/// the symmetric factorization when it holds; certifies every returned pair
/// with a fresh operator application; sorts by `(|λ|, Re λ, Im λ)`.
pub fn dense_oracle(
    op: &dyn LinearOp,
    grid: &Arc<PhaseSpaceGrid>,
    cap: Option<usize>,
) -> Result<Spectrum> {
    let n = grid.len();
    if op.dim() != n {
        return Err(KvnError::GridMismatch(format!(
            "dense oracle: operator dimension {} does not match the {n}-point grid",
            op.dim()
        )));
    }
    let cap = cap.unwrap_or(4096);
    if n > cap {
        return Err(KvnError::DenseTooLarge { points: n, cap });
    }
    let w = op.weights();

    // Materialize columns: a[i*n + j] = (A e_j)[i].
    let mut a = vec![ZERO; n * n];
    let mut e = vec![ZERO; n];
    let mut col = vec![ZERO; n];
    let mut matvecs = 0usize;
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        op.matvec(&e, &mut col);
        matvecs += 1;
        e[j] = ZERO;
        for i in 0..n {
            a[i * n + j] = col[i];
        }
    }

    // Weighted self-adjointness: ⟨x, Ay⟩_w = ⟨Ax, y⟩_w  ⇔  W A = A† W.
    let mut scale: f64 = 0.0;
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let lhs = a[i * n + j] * w[i];
            scale = scale.max(lhs.norm());
            asym = asym.max((lhs - a[j * n + i].conj() * w[j]).norm());
        }
    }
    let hermitian = scale > 0.0 && asym <= 1e-12 * scale;

    let mut raw: Vec<(C64, Vec<C64>)> = Vec::with_capacity(n);
    if hermitian || scale == 0.0 {
        // Symmetrize in the weighted geometry: S = W^{1/2} A W^{-1/2}.
        let sqw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        let mut s = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = a[i * n + j] * (sqw[i] / sqw[j]);
            }
        }
        for i in 0..n {
            s[i * n + i] = C64::new(s[i * n + i].re, 0.0);
            for j in i + 1..n {
                let avg = (s[i * n + j] + s[j * n + i].conj()) * 0.5;
                s[i * n + j] = avg;
                s[j * n + i] = avg.conj();
            }
        }
        let (vals, vecs) = linalg::hermitian_eigen(n, &s)?;
        for k in 0..n {
            let mut x: Vec<C64> = (0..n).map(|i| vecs[k * n + i] / sqw[i]).collect();
            let norm = wnorm(w, &x);
            if norm > 0.0 {
                let inv = 1.0 / norm;
                for xi in &mut x {
                    *xi *= inv;
                }
            }
            raw.push((C64::new(vals[k], 0.0), x));
        }
    } else {
        let (vals, vecs) = linalg::general_eigen(n, &a)?;
        for k in 0..n {
            let mut x: Vec<C64> = vecs[k * n..(k + 1) * n].to_vec();
            let norm = wnorm(w, &x);
            if norm > 0.0 {
                let inv = 1.0 / norm;
                for xi in &mut x {
                    *xi *= inv;
                }
            }
            raw.push((vals[k], x));
        }
    }

    let mut scratch = vec![ZERO; n];
    let mut pairs = Vec::with_capacity(n);
    for (value, x) in raw {
        op.matvec(&x, &mut scratch);
        matvecs += 1;
        // The Rayleigh quotient beats the factorization's value estimate
        // once roundoff enters; keep the certified combination.
        let lambda = if hermitian || scale == 0.0 {
            C64::new(wdot(w, &x, &scratch).re, 0.0)
        } else {
            value
        };
        let mut diff = scratch.clone();
        for (d, xi) in diff.iter_mut().zip(&x) {
            *d -= lambda * xi;
        }
        let residual = wnorm(w, &diff);
        pairs.push(EigenPair {
            value: lambda,
            state: StateFunction::from_values(grid, x)?,
            residual,
        });
    }
    pairs.sort_by(|p, q| {
        p.value
            .norm()
            .total_cmp(&q.value.norm())
            .then(p.value.re.total_cmp(&q.value.re))
            .then(p.value.im.total_cmp(&q.value.im))
    });
    Ok(Spectrum {
        pairs,
        converged: true,
        restarts: 0,
        matvecs,
        used_general_path: !(hermitian || scale == 0.0),
    })
}
