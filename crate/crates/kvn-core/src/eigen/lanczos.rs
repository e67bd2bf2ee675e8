//! Thick-restart Lanczos with full reorthogonalization for self-adjoint
//! operators in the grid's weighted inner product.
//!
//! Grids at or below `exact_below` points get a full-dimension sweep:
//! breakdowns are padded with fresh random directions until the basis spans
//! the whole space, so the projected matrix is unitarily similar to the
//! operator and interior clusters come out exactly.  Larger problems run
//! restarted cycles that keep the best unconverged Ritz vectors, deflate
//! against locked pairs, and — for interior shifts — apply a Chebyshev
//! bandpass filter built from pilot spectral bounds so that eigenvalues near
//! the shift dominate the iteration.
//!
//! Locking is certification-driven: a candidate joins the locked set only
//! after a fresh operator application to its assembled, normalized vector
//! beats the requested tolerance.  Values are Rayleigh quotients from that
//! same application, never projected-matrix estimates.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::{
    axpy_c, orthogonalize_cgs2, padded_direction, scale_c, seeded_unit, wdot, wnorm, FilterPolicy,
    FlatBasis, RawOutcome, RawPair, SpectrumOptions,
};
use crate::error::{KvnError, Result};
use crate::grid::PhaseSpaceGrid;
use crate::linalg;
use crate::operator::LinearOp;

const ZERO: C64 = C64::new(0.0, 0.0);

struct ChebFilter {
    coeffs: Vec<f64>,
    center: f64,
    half: f64,
}

impl ChebFilter {
    /// Chebyshev expansion of a Gaussian bump centered on the shift, in the
    /// coordinate that maps the spectral interval to [-1, 1].
    fn new(degree: usize, lo: f64, hi: f64, shift: f64, sigma: f64) -> Self {
        let center = 0.5 * (hi + lo);
        let half = 0.5 * (hi - lo);
        let x0 = (shift - center) / half;
        let n = 2 * degree + 33;
        let mut coeffs = vec![0.0; degree + 1];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut sum = 0.0;
            for j in 0..n {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                let x = theta.cos();
                let g = (-0.5 * ((x - x0) / sigma).powi(2)).exp();
                sum += g * (k as f64 * theta).cos();
            }
            let norm = if k == 0 { 1.0 } else { 2.0 };
            *ck = norm * sum / n as f64;
        }
        ChebFilter { coeffs, center, half }
    }
}

struct Driver<'a> {
    op: &'a dyn LinearOp,
    w: &'a [f64],
    filter: Option<ChebFilter>,
    matvecs: usize,
}

impl<'a> Driver<'a> {
    fn apply_raw(&mut self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; x.len()];
        self.op.matvec(x, &mut out);
        self.matvecs += 1;
        out
    }

    /// `(A x − center·x)/half` — the operator in filter coordinates.
    fn apply_mapped(&mut self, x: &[C64], center: f64, half: f64) -> Vec<C64> {
        let mut out = self.apply_raw(x);
        let inv = 1.0 / half;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (*o - xi * center) * inv;
        }
        out
    }

    /// The iteration operator: the raw operator, or its Chebyshev bump
    /// filter when one is active.
    fn apply_b(&mut self, x: &[C64]) -> Vec<C64> {
        let Some(f) = self.filter.as_ref() else {
            return self.apply_raw(x);
        };
        let (center, half) = (f.center, f.half);
        let coeffs = f.coeffs.clone();
        let mut t0 = x.to_vec();
        let mut acc: Vec<C64> = t0.iter().map(|v| v * coeffs[0]).collect();
        if coeffs.len() == 1 {
            return acc;
        }
        let mut t1 = self.apply_mapped(x, center, half);
        for (a, t) in acc.iter_mut().zip(&t1) {
            *a += t * coeffs[1];
        }
        for ck in coeffs.iter().skip(2) {
            let mut t2 = self.apply_mapped(&t1, center, half);
            for ((t, a), prev) in t2.iter_mut().zip(acc.iter_mut()).zip(&t0) {
                *t = *t * 2.0 - prev;
                *a += *t * ck;
            }
            t0 = std::mem::replace(&mut t1, t2);
        }
        acc
    }

    /// Rayleigh value and fresh residual of a unit vector.
    fn certify(&mut self, x: &[C64]) -> (f64, f64) {
        let image = self.apply_raw(x);
        let lambda = wdot(self.w, x, &image).re;
        let mut diff = image;
        for (d, xi) in diff.iter_mut().zip(x) {
            *d -= xi * lambda;
        }
        (lambda, wnorm(self.w, &diff))
    }
}

/// Expand the basis up to `m` columns, filling the projected matrix `h`
/// (row-major m×m; upper triangle plus subdiagonals).  Returns the final
/// remainder norm and, when it survived, the unit remainder vector.
fn expand(
    driver: &mut Driver,
    locked: &[Vec<C64>],
    basis: &mut FlatBasis,
    h: &mut [C64],
    m: usize,
    seed: u64,
) -> (f64, Option<Vec<C64>>) {
    let w = driver.w;
    let start = basis.len();
    let mut scale: f64 = 0.0;
    let mut last_beta = 0.0;
    let mut remainder = None;
    // Column j is filled from the image of column j, the newest basis vector;
    // the loop starts at the last column already present.
    for j in start - 1..m {
        let mut wv = driver.apply_b(basis.col(j));
        let mut coeffs = vec![ZERO; j + 1];
        let beta = orthogonalize_cgs2(w, locked, basis, &mut wv, &mut coeffs, false);
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
                last_beta = beta;
                remainder = Some(wv);
            }
            break;
        }
        if breakdown {
            match padded_direction(w, locked, basis, seed.wrapping_add(j as u64)) {
                Some(v) => basis.push(&v),
                None => break, // locked + basis span everything reachable
            }
        } else {
            h[(j + 1) * m + j] = C64::new(beta, 0.0);
            scale_c(&mut wv, C64::new(1.0 / beta, 0.0));
            basis.push(&wv);
        }
    }
    (last_beta, remainder)
}

/// Hermitian eigendecomposition of the leading `m_eff` block of `h`.  The
/// column-fill expansion populates the upper triangle and the subdiagonal;
/// entries whose mirror was never written are taken as-is rather than
/// averaged against a structural zero.
fn projected_eigen(h: &[C64], m: usize, m_eff: usize) -> Result<(Vec<f64>, Vec<C64>)> {
    let mut sym = vec![ZERO; m_eff * m_eff];
    for i in 0..m_eff {
        sym[i * m_eff + i] = C64::new(h[i * m + i].re, 0.0);
        for j in i + 1..m_eff {
            let upper = h[i * m + j];
            let lower = h[j * m + i];
            let val = if lower == ZERO {
                upper
            } else if upper == ZERO {
                lower.conj()
            } else {
                (upper + lower.conj()) * 0.5
            };
            sym[i * m_eff + j] = val;
            sym[j * m_eff + i] = val.conj();
        }
    }
    linalg::hermitian_eigen(m_eff, &sym)
}

struct Candidate {
    theta: f64,
    est: f64,
    col: usize,
}

pub(crate) fn solve(
    op: &dyn LinearOp,
    grid: &Arc<PhaseSpaceGrid>,
    opts: &SpectrumOptions,
) -> Result<RawOutcome> {
    let n = grid.len();
    let w = op.weights();
    let exact = n <= opts.exact_below;

    let mem_cap = (opts.max_basis_bytes / (16 * n)).max(2);
    let m = if exact {
        n
    } else {
        let auto = (2 * opts.how_many + 16).max(48).min(n).min(mem_cap);
        let m = opts.subspace.unwrap_or(auto).min(n).min(mem_cap);
        if m < (opts.how_many + 2).min(n) {
            return Err(KvnError::InvalidParameter(format!(
                "eigensolve: basis budget of {} bytes allows only {m} vectors on a \
                 {n}-point grid; raise max_basis_bytes",
                opts.max_basis_bytes
            )));
        }
        m.max(2)
    };

    let mut driver = Driver { op, w, filter: None, matvecs: 0 };

    // Pilot sweep for spectral bounds: decides whether the shift is interior
    // (wanting a filter) and supplies the filter's mapping interval.
    let mut bounds: Option<(f64, f64)> = None;
    let want_filter = match opts.filter {
        FilterPolicy::Off => false,
        FilterPolicy::Chebyshev { .. } => !exact,
        FilterPolicy::Auto => {
            if exact {
                false
            } else {
                let b = pilot_bounds(&mut driver, grid, opts.seed)?;
                bounds = Some(b);
                let range = b.1 - b.0;
                let s = opts.shift.re;
                range > 0.0
                    && opts.shift.im.abs() <= 1e-9 * range.max(1.0)
                    && s > b.0 + 0.02 * range
                    && s < b.1 - 0.02 * range
            }
        }
    };
    let degree = match opts.filter {
        FilterPolicy::Chebyshev { degree } => degree.max(2),
        _ => 100,
    };
    if want_filter {
        let (lo, hi) = match bounds {
            Some(b) => b,
            None => {
                let b = pilot_bounds(&mut driver, grid, opts.seed)?;
                bounds = Some(b);
                b
            }
        };
        driver.filter = Some(ChebFilter::new(degree, lo, hi, opts.shift.re, 3.0 / degree as f64));
    }
    let used_filter = want_filter;

    let mut basis = FlatBasis::new(n, m);
    let mut h = vec![ZERO; m * m];
    let mut locked_vecs: Vec<Vec<C64>> = Vec::new();
    let mut locked_meta: Vec<(f64, f64)> = Vec::new(); // (value, residual)
    let lock_cap = (opts.how_many + 16).min(n);
    let mut restarts = 0usize;
    let mut converged = false;
    let mut stagnant = 0usize;
    let mut widenings = 0usize;
    let mut sigma_boost = 1.0f64;
    let empty = FlatBasis::new(n, 0);

    let v0 = seeded_unit(w, &[], opts.seed);
    basis.push(&v0);

    loop {
        let (beta_last, remainder) = expand(
            &mut driver,
            &locked_vecs,
            &mut basis,
            &mut h,
            m,
            opts.seed.wrapping_add(0x5eed).wrapping_add(restarts as u64),
        );
        let m_eff = basis.len();
        if m_eff == 0 {
            break;
        }
        let (theta, y) = projected_eigen(&h, m, m_eff)?;
        let theta_scale = theta.iter().fold(0.0f64, |a, t| a.max(t.abs()));

        // Rank candidate columns: filtered runs chase the largest filter
        // response, plain runs chase the requested ordering directly.
        let mut cands: Vec<Candidate> = (0..m_eff)
            .map(|k| Candidate {
                theta: theta[k],
                est: beta_last * y[k * m_eff + (m_eff - 1)].norm(),
                col: k,
            })
            .collect();
        if driver.filter.is_some() {
            cands.sort_by(|a, b| b.theta.abs().total_cmp(&a.theta.abs()));
        } else {
            cands.sort_by(|a, b| {
                opts.rank_key(C64::new(a.theta, 0.0))
                    .total_cmp(&opts.rank_key(C64::new(b.theta, 0.0)))
            });
        }

        // Screen candidates worth certifying and assemble them in one
        // streaming pass over the basis.
        let filter_floor = 1e-8 * theta_scale.max(1e-300);
        let lock_margin = 1e-6 * theta_scale.max(1e-300);
        let budget = lock_cap.saturating_sub(locked_vecs.len()) + 8;
        let selected: Vec<usize> = cands
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                if driver.filter.is_some() {
                    c.theta.abs() > filter_floor && c.est < 1e-6 * theta_scale.max(1e-300)
                } else {
                    c.est < 50.0 * opts.tolerance
                }
            })
            .take(budget)
            .map(|(i, _)| i)
            .collect();
        let coeff_cols: Vec<&[C64]> = selected
            .iter()
            .map(|&i| {
                let c = cands[i].col;
                &y[c * m_eff..(c + 1) * m_eff]
            })
            .collect();
        let mut assembled = basis.combine_block(&coeff_cols);

        // Lock candidates whose fresh residual beats the tolerance; keep the
        // failures for a joint rotation, which separates members of a
        // degenerate cluster (or a shared filter plateau) that arrived mixed.
        let mut new_locks = 0usize;
        let mut pending: Vec<Vec<C64>> = Vec::new();
        for slot in assembled.iter_mut() {
            if locked_vecs.len() >= lock_cap {
                break;
            }
            let mut discard: Vec<C64> = Vec::new();
            let rem = orthogonalize_cgs2(w, &locked_vecs, &empty, slot, &mut discard, true);
            if rem < 0.5 {
                continue; // duplicate of an already locked direction
            }
            scale_c(slot, C64::new(1.0 / rem, 0.0));
            let (lambda, residual) = driver.certify(slot);
            if residual < opts.tolerance {
                if dominated(lambda, &locked_meta, opts, lock_margin) {
                    continue;
                }
                locked_vecs.push(std::mem::take(slot));
                locked_meta.push((lambda, residual));
                new_locks += 1;
            } else {
                pending.push(std::mem::take(slot));
            }
        }
        if pending.len() >= 2 {
            new_locks += lock_rotated(
                &mut driver,
                &mut pending,
                &mut locked_vecs,
                &mut locked_meta,
                lock_cap,
                opts,
                lock_margin,
            )?;
        }

        // Termination: enough certified pairs and no unconverged Ritz value
        // that could still rank ahead of the kept ones.
        let done = if locked_vecs.len() >= opts.how_many {
            if m_eff == n || locked_vecs.len() >= lock_cap {
                // A full sweep has seen everything.  The roster only ever
                // holds non-dominated values, so a full roster means further
                // copies of a degenerate flood cannot change the answer.
                true
            } else if driver.filter.is_some() {
                !cands.iter().any(|c| {
                    c.theta.abs() > 1e-6 * theta_scale.max(1e-300) && c.est > filter_floor
                })
            } else {
                let mut keys: Vec<f64> = locked_meta
                    .iter()
                    .map(|&(v, _)| opts.rank_key(C64::new(v, 0.0)))
                    .collect();
                keys.sort_by(f64::total_cmp);
                let worst_kept = keys[opts.how_many - 1];
                !cands.iter().any(|c| {
                    c.est > opts.tolerance
                        && opts.rank_key(C64::new(c.theta, 0.0)) - c.est < worst_kept
                })
            }
        } else {
            false
        };
        if done {
            converged = true;
            break;
        }
        if m_eff == n && new_locks == 0 {
            break; // full sweep found everything it ever will
        }

        restarts += 1;
        if restarts >= opts.max_restarts {
            break;
        }
        stagnant = if new_locks == 0 { stagnant + 1 } else { 0 };

        // A filter too narrow to reach how_many distinct pairs gets widened;
        // after repeated widenings fall back to the unfiltered iteration.
        // Widening waits out lock-less cycles where candidates simply have
        // not converged yet — it fires only once the screen keeps coming up
        // empty with nothing left in the bump.
        if driver.filter.is_some()
            && new_locks == 0
            && selected.is_empty()
            && stagnant >= 2
            && locked_vecs.len() < opts.how_many
        {
            widenings += 1;
            if widenings > 3 {
                driver.filter = None;
            } else if let Some((lo, hi)) = bounds {
                sigma_boost *= 2.0;
                let sigma = sigma_boost * 3.0 / degree as f64;
                driver.filter = Some(ChebFilter::new(degree, lo, hi, opts.shift.re, sigma));
            }
        }

        // Thick restart: carry the best unconverged Ritz vectors forward and
        // continue from the saved remainder direction.
        let keep = (opts.how_many + 8)
            .min(m_eff.saturating_sub(4))
            .min(m / 2)
            .max(1);
        let kept: Vec<&Candidate> = cands
            .iter()
            .filter(|c| c.est > opts.tolerance)
            .take(keep)
            .collect();
        let kept_cols: Vec<&[C64]> = kept
            .iter()
            .map(|c| &y[c.col * m_eff..(c.col + 1) * m_eff])
            .collect();
        let mut kept_vecs = basis.combine_block(&kept_cols);
        basis.clear();
        h.iter_mut().for_each(|e| *e = ZERO);
        let mut diag = 0usize;
        for (slot, cand) in kept_vecs.iter_mut().zip(&kept) {
            let mut discard = vec![ZERO; basis.len()];
            let norm = orthogonalize_cgs2(w, &locked_vecs, &basis, slot, &mut discard, false);
            if norm > 1e-8 {
                scale_c(slot, C64::new(1.0 / norm, 0.0));
                basis.push(slot);
                h[diag * m + diag] = C64::new(cand.theta, 0.0);
                diag += 1;
            }
        }
        let next = match remainder {
            Some(mut r) if stagnant < 3 => {
                let mut discard = vec![ZERO; basis.len()];
                let norm = orthogonalize_cgs2(w, &locked_vecs, &basis, &mut r, &mut discard, true);
                if norm > 1e-8 {
                    scale_c(&mut r, C64::new(1.0 / norm, 0.0));
                    Some(r)
                } else {
                    None
                }
            }
            _ => None,
        };
        match next {
            Some(r) => basis.push(&r),
            None => {
                let seed = opts
                    .seed
                    .wrapping_add(0xa11ce)
                    .wrapping_add(restarts as u64 * 0x1000);
                match padded_direction(w, &locked_vecs, &basis, seed) {
                    Some(v) => basis.push(&v),
                    None => break,
                }
            }
        }
    }

    // Filtered runs can leave members of a shared filter plateau mixed even
    // after certification; a final Rayleigh-Ritz rotation with respect to
    // the raw operator separates them, then every pair is re-certified.
    if used_filter {
        refine_locked(&mut driver, &mut locked_vecs, &mut locked_meta)?;
    }

    let mut order: Vec<usize> = (0..locked_vecs.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = opts.rank_key(C64::new(locked_meta[a].0, 0.0));
        let kb = opts.rank_key(C64::new(locked_meta[b].0, 0.0));
        ka.total_cmp(&kb)
            .then(locked_meta[a].0.total_cmp(&locked_meta[b].0))
    });
    order.truncate(opts.how_many);
    converged = converged && order.len() >= opts.how_many;
    let mut pairs = Vec::with_capacity(order.len());
    for idx in order {
        pairs.push(RawPair {
            value: C64::new(locked_meta[idx].0, 0.0),
            vector: std::mem::take(&mut locked_vecs[idx]),
            residual: locked_meta[idx].1,
        });
    }
    Ok(RawOutcome { pairs, converged, restarts, matvecs: driver.matvecs })
}

/// Short unrestarted sweep giving padded bounds on the spectrum.
fn pilot_bounds(
    driver: &mut Driver,
    grid: &Arc<PhaseSpaceGrid>,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = grid.len();
    let m0 = 24.min(n);
    let mut basis = FlatBasis::new(n, m0);
    let mut h = vec![ZERO; m0 * m0];
    let v0 = seeded_unit(driver.w, &[], seed.wrapping_add(0xb0d5));
    basis.push(&v0);
    let (beta_last, _) = expand(driver, &[], &mut basis, &mut h, m0, seed);
    let m_eff = basis.len();
    let (theta, y) = projected_eigen(&h, m0, m_eff)?;
    let lo = theta.first().copied().unwrap_or(0.0);
    let hi = theta.last().copied().unwrap_or(0.0);
    let est_lo = beta_last * y[m_eff - 1].norm();
    let est_hi = beta_last * y[(m_eff - 1) * m_eff + (m_eff - 1)].norm();
    let range = (hi - lo).max(1e-12 * hi.abs().max(lo.abs()).max(1e-300));
    let pad = 0.1 * range + 5.0 * est_lo.max(est_hi);
    Ok((lo - pad, hi + pad))
}

/// Jointly rotate candidate vectors that failed individual certification and
/// lock any rotated vector that now certifies.  The pool spans a sum of
/// eigenspaces; diagonalizing the operator's projection onto it recovers the
/// individual members.
/// A certified value already out-ranked by `how_many` locked values can never
/// enter the answer; locking it would spend a roster slot that a degenerate
/// cluster at the wanted end may still need.
fn dominated(lambda: f64, locked: &[(f64, f64)], opts: &SpectrumOptions, margin: f64) -> bool {
    let key = opts.rank_key(C64::new(lambda, 0.0));
    locked
        .iter()
        .filter(|&&(v, _)| opts.rank_key(C64::new(v, 0.0)) < key - margin)
        .count()
        >= opts.how_many
}

fn lock_rotated(
    driver: &mut Driver,
    pool: &mut Vec<Vec<C64>>,
    locked_vecs: &mut Vec<Vec<C64>>,
    locked_meta: &mut Vec<(f64, f64)>,
    lock_cap: usize,
    opts: &SpectrumOptions,
    margin: f64,
) -> Result<usize> {
    let w = driver.w;
    let n = pool[0].len();
    // Orthonormalize the pool among itself first.
    let mut ortho = FlatBasis::new(n, pool.len());
    for v in pool.iter_mut() {
        let mut discard = vec![ZERO; ortho.len()];
        let norm = orthogonalize_cgs2(w, &[], &ortho, v, &mut discard, true);
        if norm > 1e-8 {
            scale_c(v, C64::new(1.0 / norm, 0.0));
            ortho.push(v);
        }
    }
    let k = ortho.len();
    if k < 2 {
        return Ok(0);
    }
    let images: Vec<Vec<C64>> = (0..k).map(|j| driver.apply_raw(ortho.col(j))).collect();
    let mut g = vec![ZERO; k * k];
    for i in 0..k {
        for j in 0..k {
            g[i * k + j] = wdot(w, ortho.col(i), &images[j]);
        }
    }
    for i in 0..k {
        g[i * k + i] = C64::new(g[i * k + i].re, 0.0);
        for j in i + 1..k {
            let avg = (g[i * k + j] + g[j * k + i].conj()) * 0.5;
            g[i * k + j] = avg;
            g[j * k + i] = avg.conj();
        }
    }
    let (_, y) = linalg::hermitian_eigen(k, &g)?;
    let empty = FlatBasis::new(n, 0);
    let mut locks = 0usize;
    for t in 0..k {
        if locked_vecs.len() >= lock_cap {
            break;
        }
        let mut v = ortho.combine(&y[t * k..(t + 1) * k]);
        let mut discard: Vec<C64> = Vec::new();
        let rem = orthogonalize_cgs2(w, locked_vecs, &empty, &mut v, &mut discard, true);
        if rem < 0.5 {
            continue;
        }
        scale_c(&mut v, C64::new(1.0 / rem, 0.0));
        let (lambda, residual) = driver.certify(&v);
        if residual < opts.tolerance && !dominated(lambda, locked_meta, opts, margin) {
            locked_vecs.push(v);
            locked_meta.push((lambda, residual));
            locks += 1;
        }
    }
    Ok(locks)
}

/// Joint Rayleigh-Ritz rotation of the locked set with fresh certification.
fn refine_locked(
    driver: &mut Driver,
    locked_vecs: &mut [Vec<C64>],
    locked_meta: &mut [(f64, f64)],
) -> Result<()> {
    let w = driver.w;
    let k = locked_vecs.len();
    if k < 2 {
        return Ok(());
    }
    let images: Vec<Vec<C64>> = locked_vecs.iter().map(|v| driver.apply_raw(v)).collect();
    let mut g = vec![ZERO; k * k];
    for i in 0..k {
        for j in 0..k {
            g[i * k + j] = wdot(w, &locked_vecs[i], &images[j]);
        }
    }
    for i in 0..k {
        g[i * k + i] = C64::new(g[i * k + i].re, 0.0);
        for j in i + 1..k {
            let avg = (g[i * k + j] + g[j * k + i].conj()) * 0.5;
            g[i * k + j] = avg;
            g[j * k + i] = avg.conj();
        }
    }
    let (_, y) = linalg::hermitian_eigen(k, &g)?;
    let n = locked_vecs[0].len();
    let mut rotated: Vec<Vec<C64>> = Vec::with_capacity(k);
    for t in 0..k {
        let mut v = vec![ZERO; n];
        for j in 0..k {
            let c = y[t * k + j];
            if c != ZERO {
                axpy_c(&mut v, c, &locked_vecs[j]);
            }
        }
        let norm = wnorm(w, &v);
        if norm > 0.0 {
            scale_c(&mut v, C64::new(1.0 / norm, 0.0));
        }
        rotated.push(v);
    }
    for ((vec_slot, meta), v) in locked_vecs.iter_mut().zip(locked_meta.iter_mut()).zip(rotated) {
        let (lambda, residual) = driver.certify(&v);
        *vec_slot = v;
        *meta = (lambda, residual);
    }
    Ok(())
}
