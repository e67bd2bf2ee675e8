//! Restarted Arnoldi iteration for operators the caller has accepted as
//! non-self-adjoint (composition operators, dissipative regularizations).
//!
//! Deflation works through an orthonormal partial Schur set: every expansion
//! vector is orthogonalized against the locked Schur vectors, which
//! block-triangularizes the operator so the iteration only ever sees the
//! unresolved part of the spectrum.  Eigenpairs are reconstructed at the end
//! by diagonalizing the operator's projection onto the locked subspace, and
//! each is certified with a fresh operator application.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::{
    orthogonalize_cgs2, scale_c, seeded_unit, wdot, wnorm, FlatBasis, RawOutcome, RawPair,
    SpectrumOptions,
};
use crate::error::{KvnError, Result};
use crate::grid::PhaseSpaceGrid;
use crate::linalg;
use crate::operator::LinearOp;

const ZERO: C64 = C64::new(0.0, 0.0);

struct Candidate {
    theta: C64,
    est: f64,
    col: usize,
    col_norm: f64,
}

pub(crate) fn solve(
    op: &dyn LinearOp,
    grid: &Arc<PhaseSpaceGrid>,
    opts: &SpectrumOptions,
) -> Result<RawOutcome> {
    let n = grid.len();
    let w = op.weights();
    let mem_cap = (opts.max_basis_bytes / (16 * n)).max(2);
    let auto = (2 * opts.how_many + 16).max(48).min(n).min(mem_cap);
    let m = opts.subspace.unwrap_or(auto).min(n).min(mem_cap).max(2);
    if m < (opts.how_many + 2).min(n) {
        return Err(KvnError::InvalidParameter(format!(
            "eigensolve: basis budget of {} bytes allows only {m} vectors on a \
             {n}-point grid; raise max_basis_bytes",
            opts.max_basis_bytes
        )));
    }

    let mut matvecs = 0usize;
    let mut apply = |x: &[C64]| -> Vec<C64> {
        let mut out = vec![ZERO; n];
        op.matvec(x, &mut out);
        matvecs += 1;
        out
    };

    // Schur residuals compound when eigenvectors are reassembled from the
    // locked subspace, so individual locks clear a stricter gate.
    let lock_cap = (opts.how_many + 16).min(n);
    let schur_gate = opts.tolerance * 0.25 / ((lock_cap + 1) as f64).sqrt();

    let mut schur: Vec<Vec<C64>> = Vec::new(); // orthonormal locked vectors
    let mut images: Vec<Vec<C64>> = Vec::new(); // their fresh operator images
    let mut basis = FlatBasis::new(n, m);
    let mut h = vec![ZERO; m * m];
    let mut restarts = 0usize;
    let mut stagnant = 0usize;
    let mut converged = false;

    let v0 = seeded_unit(w, &[], opts.seed);
    basis.push(&v0);

    loop {
        // Expansion: always two orthogonalization passes; general spectra
        // punish any lost orthogonality much harder than symmetric ones.
        let start = basis.len();
        let mut beta_last = 0.0;
        let mut remainder: Option<Vec<C64>> = None;
        let mut scale: f64 = 0.0;
        // Column j is filled from the image of column j, the newest basis
        // vector; the loop starts at the last column already present.
        for j in start - 1..m {
            let mut wv = apply(basis.col(j));
            let mut coeffs = vec![ZERO; j + 1];
            let beta = orthogonalize_cgs2(w, &schur, &basis, &mut wv, &mut coeffs, true);
            let mut col_mag = beta * beta;
            for (i, c) in coeffs.iter().enumerate() {
                h[i * m + j] = *c;
                col_mag += c.norm_sqr();
            }
            scale = scale.max(col_mag.sqrt());
            let breakdown = !(beta > 1e-12 * scale.max(1e-300));
            if j + 1 == m {
                if !breakdown {
                    scale_c(&mut wv, C64::new(1.0 / beta, 0.0));
                    beta_last = beta;
                    remainder = Some(wv);
                }
                break;
            }
            if breakdown {
                match super::padded_direction(w, &schur, &basis, opts.seed.wrapping_add(j as u64))
                {
                    Some(v) => basis.push(&v),
                    None => break,
                }
            } else {
                h[(j + 1) * m + j] = C64::new(beta, 0.0);
                scale_c(&mut wv, C64::new(1.0 / beta, 0.0));
                basis.push(&wv);
            }
        }
        let m_eff = basis.len();
        if m_eff == 0 {
            break;
        }
        let mut hsub = vec![ZERO; m_eff * m_eff];
        for i in 0..m_eff {
            for j in 0..m_eff {
                hsub[i * m_eff + j] = h[i * m + j];
            }
        }
        let (theta, y) = linalg::general_eigen(m_eff, &hsub)?;

        let mut cands: Vec<Candidate> = (0..m_eff)
            .map(|k| {
                let col = &y[k * m_eff..(k + 1) * m_eff];
                let col_norm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                let safe = col_norm.max(1e-300);
                Candidate {
                    theta: theta[k],
                    est: beta_last * col[m_eff - 1].norm() / safe,
                    col: k,
                    col_norm: safe,
                }
            })
            .collect();
        cands.sort_by(|a, b| opts.rank_key(a.theta).total_cmp(&opts.rank_key(b.theta)));

        let budget = lock_cap.saturating_sub(schur.len()) + 8;
        let selected: Vec<usize> = cands
            .iter()
            .enumerate()
            .filter(|(_, c)| c.est < 50.0 * opts.tolerance)
            .take(budget)
            .map(|(i, _)| i)
            .collect();
        let coeff_cols: Vec<Vec<C64>> = selected
            .iter()
            .map(|&i| {
                let c = &cands[i];
                y[c.col * m_eff..(c.col + 1) * m_eff]
                    .iter()
                    .map(|v| v / c.col_norm)
                    .collect()
            })
            .collect();
        let col_refs: Vec<&[C64]> = coeff_cols.iter().map(|c| c.as_slice()).collect();
        let mut assembled = basis.combine_block(&col_refs);

        let mut new_locks = 0usize;
        for slot in assembled.iter_mut() {
            if schur.len() >= lock_cap {
                break;
            }
            // Duplicate test against the locked set before orthogonalizing.
            let worst = schur
                .iter()
                .map(|q| wdot(w, q, slot).norm())
                .fold(0.0f64, f64::max);
            if worst > 0.98 {
                continue;
            }
            let empty = FlatBasis::new(n, 0);
            let mut discard: Vec<C64> = Vec::new();
            let rem = orthogonalize_cgs2(w, &schur, &empty, slot, &mut discard, true);
            if rem < 0.2 {
                continue;
            }
            scale_c(slot, C64::new(1.0 / rem, 0.0));
            let image = apply(slot);
            // Schur residual: image minus its projection onto locked + self.
            let mut res_vec = image.clone();
            for q in &schur {
                let c = wdot(w, q, &res_vec);
                for (r, qi) in res_vec.iter_mut().zip(q) {
                    *r -= c * qi;
                }
            }
            let diag = wdot(w, slot, &res_vec);
            for (r, si) in res_vec.iter_mut().zip(slot.iter()) {
                *r -= diag * si;
            }
            if wnorm(w, &res_vec) < schur_gate {
                schur.push(std::mem::take(slot));
                images.push(image);
                new_locks += 1;
            }
        }

        let done = if schur.len() >= opts.how_many {
            let worst_kept = kth_key(opts, &schur, &images, w)?;
            !cands.iter().any(|c| {
                c.est > opts.tolerance && opts.rank_key(c.theta) - c.est < worst_kept
            })
        } else {
            false
        };
        if done {
            converged = true;
            break;
        }
        if m_eff == n && new_locks == 0 {
            break;
        }

        restarts += 1;
        if restarts >= opts.max_restarts {
            break;
        }
        stagnant = if new_locks == 0 { stagnant + 1 } else { 0 };

        // Restart from a seeded mix of the not-yet-locked Ritz vectors;
        // stagnation swaps in a fresh random direction instead.  The cutoff
        // is the lock gate, not the user tolerance: a candidate below the
        // tolerance but above the gate still needs refining, and dropping it
        // here would discard it every restart without ever locking it.
        let wanted: Vec<&Candidate> = cands
            .iter()
            .filter(|c| c.est > schur_gate)
            .take(opts.how_many + 4)
            .collect();
        let mix: Vec<Vec<C64>> = if wanted.is_empty() || stagnant >= 3 {
            Vec::new()
        } else {
            let mut rng_phase = opts.seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(restarts as u64);
            let mixed: Vec<C64> = {
                let mut coeffs = vec![ZERO; m_eff];
                for c in &wanted {
                    rng_phase = rng_phase
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    let ang = (rng_phase >> 11) as f64 / (1u64 << 53) as f64
                        * std::f64::consts::TAU;
                    let weight = C64::from_polar(1.0, ang);
                    for (dst, src) in coeffs
                        .iter_mut()
                        .zip(&y[c.col * m_eff..(c.col + 1) * m_eff])
                    {
                        *dst += weight * src / c.col_norm;
                    }
                }
                coeffs
            };
            vec![basis.combine(&mixed)]
        };
        basis.clear();
        h.iter_mut().for_each(|e| *e = ZERO);
        let seeded = match mix.into_iter().next() {
            Some(mut v) => {
                let mut discard: Vec<C64> = Vec::new();
                let norm = orthogonalize_cgs2(w, &schur, &basis, &mut v, &mut discard, true);
                if norm > 1e-8 {
                    scale_c(&mut v, C64::new(1.0 / norm, 0.0));
                    Some(v)
                } else {
                    None
                }
            }
            None => None,
        };
        match seeded {
            Some(v) => basis.push(&v),
            None => {
                let seed = opts
                    .seed
                    .wrapping_add(0xf00d)
                    .wrapping_add(restarts as u64 * 0x777);
                match super::padded_direction(w, &schur, &basis, seed) {
                    Some(v) => basis.push(&v),
                    None => break,
                }
            }
        }
        let _ = remainder; // general restarts rebuild from Ritz mixes
    }

    // Reconstruct eigenpairs from the locked Schur subspace and certify.
    let k = schur.len();
    let mut pairs: Vec<RawPair> = Vec::new();
    if k > 0 {
        let mut s = vec![ZERO; k * k];
        for i in 0..k {
            for j in 0..k {
                s[i * k + j] = wdot(w, &schur[i], &images[j]);
            }
        }
        let (svals, svecs) = linalg::general_eigen(k, &s)?;
        for t in 0..k {
            let coeffs = &svecs[t * k..(t + 1) * k];
            let mut x = vec![ZERO; n];
            for (j, c) in coeffs.iter().enumerate() {
                if *c != ZERO {
                    super::axpy_c(&mut x, *c, &schur[j]);
                }
            }
            let norm = wnorm(w, &x);
            if norm <= 0.0 {
                continue;
            }
            scale_c(&mut x, C64::new(1.0 / norm, 0.0));
            let image = apply(&x);
            let lambda = wdot(w, &x, &image);
            let mut diff = image;
            for (d, xi) in diff.iter_mut().zip(&x) {
                *d -= lambda * xi;
            }
            let residual = wnorm(w, &diff);
            if residual < opts.tolerance {
                pairs.push(RawPair { value: lambda, vector: x, residual });
            }
            let _ = svals[t];
        }
    }
    pairs.sort_by(|a, b| {
        opts.rank_key(a.value)
            .total_cmp(&opts.rank_key(b.value))
            .then(a.value.re.total_cmp(&b.value.re))
            .then(a.value.im.total_cmp(&b.value.im))
    });
    // Near-duplicate directions can slip through when the Schur projection
    // is ill-conditioned; keep the best representative of each.
    let mut kept: Vec<RawPair> = Vec::new();
    for p in pairs {
        let dup = kept
            .iter()
            .any(|q| wdot(w, &q.vector, &p.vector).norm() > 0.98);
        if !dup {
            kept.push(p);
        }
        if kept.len() == opts.how_many {
            break;
        }
    }
    converged = converged && kept.len() >= opts.how_many;
    Ok(RawOutcome { pairs: kept, converged, restarts, matvecs })
}

/// Rank key of the `how_many`-th best locked value, from Rayleigh quotients
/// of the Schur vectors (cheap: images are stored).
fn kth_key(
    opts: &SpectrumOptions,
    schur: &[Vec<C64>],
    images: &[Vec<C64>],
    w: &[f64],
) -> Result<f64> {
    let mut keys: Vec<f64> = schur
        .iter()
        .zip(images)
        .map(|(q, aq)| opts.rank_key(wdot(w, q, aq)))
        .collect();
    keys.sort_by(f64::total_cmp);
    Ok(keys[opts.how_many - 1])
}
