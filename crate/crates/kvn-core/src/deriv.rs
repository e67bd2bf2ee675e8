//! Partial-derivative engines along single grid axes.
//!
//! Periodic axes differentiate spectrally (FFT, wavenumber multiply, inverse
//! FFT, with the Nyquist mode of even-length axes zeroed). Truncated axes use
//! fourth-order centered differences with one-sided fourth-order stencils at
//! the first and last two points.
//!
//! A separate "local" rule applies the finite-difference stencils on every
//! axis, never wrapping across a periodic seam. It exists for differentiating
//! observable generators (q, p, H, ...) that are smooth functions of the
//! coordinates but not periodic on a compactified box; the spectral rule would
//! smear their seam discontinuity over the whole axis, while the local rule is
//! exact for polynomial generators and keeps any seam error confined to the
//! outermost stencil rows.

use crate::grid::PhaseSpaceGrid;
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn fft_pair(n: usize) -> Arc<FftPair> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FftPair>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(FftPair {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// Lane-wise diagonal Fourier multiplier along one (periodic) axis.
///
/// For every 1-D lane the values are transformed, mode `m` is scaled by
/// `symbol(base, m)` where `base` is the lane's base flat index, and the lane
/// is transformed back. Modes use the signed convention of the derivative
/// engine except at the Nyquist index of even-length axes, which is passed as
/// `-n/2`; a unimodular symbol therefore keeps the operation exactly
/// norm-preserving. The inverse-FFT scale is folded in.
pub(crate) fn fourier_multiply(
    grid: &PhaseSpaceGrid,
    values: &mut [C64],
    axis: usize,
    symbol: impl Fn(usize, isize) -> C64,
) {
    let n = grid.axis(axis).points;
    let stride = grid.stride(axis);
    let pair = fft_pair(n);
    let scale = 1.0 / n as f64;
    let modes: Vec<isize> = (0..n)
        .map(|j| {
            if 2 * j < n {
                j as isize
            } else {
                j as isize - n as isize
            }
        })
        .collect();
    let mut lane = vec![C64::new(0.0, 0.0); n];
    for_each_lane(values.len(), n, stride, |base| {
        for j in 0..n {
            lane[j] = values[base + j * stride];
        }
        pair.forward.process(&mut lane);
        for j in 0..n {
            lane[j] *= symbol(base, modes[j]) * scale;
        }
        pair.inverse.process(&mut lane);
        for j in 0..n {
            values[base + j * stride] = lane[j];
        }
    });
}

/// Visit every 1-D lane along `axis`, calling `f` with the lane's base flat
/// index; lane element `j` lives at `base + j * stride`.
pub(crate) fn for_each_lane(len: usize, points: usize, stride: usize, mut f: impl FnMut(usize)) {
    let lanes = len / points;
    let block = stride * points;
    for outer in 0..lanes {
        let base = (outer / stride) * block + (outer % stride);
        f(base);
    }
}

/// First derivative along one axis, spectral or FD-4 according to the axis
/// periodicity. No finiteness checks; callers validate.
pub(crate) fn derivative_c64(grid: &PhaseSpaceGrid, values: &[C64], axis: usize) -> Vec<C64> {
    if grid.axis(axis).periodic {
        spectral_derivative(grid, values, axis)
    } else {
        fd4_derivative(grid, values, axis)
    }
}

/// First derivative along one axis with the local FD-4 rule (one-sided at
/// the array ends, never wrapping).
pub(crate) fn derivative_f64_local(grid: &PhaseSpaceGrid, values: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.axis(axis).points;
    let stride = grid.stride(axis);
    let h = grid.spacing(axis);
    let mut out = vec![0.0; values.len()];
    let mut lane = vec![0.0; n];
    let mut dlane = vec![0.0; n];
    for_each_lane(values.len(), n, stride, |base| {
        for j in 0..n {
            lane[j] = values[base + j * stride];
        }
        fd4_lane(&lane, h, &mut dlane);
        for j in 0..n {
            out[base + j * stride] = dlane[j];
        }
    });
    out
}

fn spectral_derivative(grid: &PhaseSpaceGrid, values: &[C64], axis: usize) -> Vec<C64> {
    let ax = grid.axis(axis);
    let n = ax.points;
    let stride = grid.stride(axis);
    let length = ax.max - ax.min;
    let pair = fft_pair(n);

    // i * k multipliers in FFT ordering, Nyquist zeroed, inverse-scale folded in.
    let scale = 1.0 / n as f64;
    let base_k = std::f64::consts::TAU / length;
    let symbol: Vec<C64> = (0..n)
        .map(|j| {
            let m = if 2 * j < n {
                j as isize
            } else if 2 * j == n {
                0
            } else {
                j as isize - n as isize
            };
            C64::new(0.0, base_k * m as f64 * scale)
        })
        .collect();

    let mut out = vec![C64::new(0.0, 0.0); values.len()];
    let mut lane = vec![C64::new(0.0, 0.0); n];
    for_each_lane(values.len(), n, stride, |base| {
        for j in 0..n {
            lane[j] = values[base + j * stride];
        }
        pair.forward.process(&mut lane);
        for j in 0..n {
            lane[j] *= symbol[j];
        }
        pair.inverse.process(&mut lane);
        for j in 0..n {
            out[base + j * stride] = lane[j];
        }
    });
    out
}

fn fd4_derivative(grid: &PhaseSpaceGrid, values: &[C64], axis: usize) -> Vec<C64> {
    let n = grid.axis(axis).points;
    let stride = grid.stride(axis);
    let h = grid.spacing(axis);
    let mut out = vec![C64::new(0.0, 0.0); values.len()];
    let mut lane = vec![C64::new(0.0, 0.0); n];
    let mut dlane = vec![C64::new(0.0, 0.0); n];
    for_each_lane(values.len(), n, stride, |base| {
        for j in 0..n {
            lane[j] = values[base + j * stride];
        }
        fd4_lane_c64(&lane, h, &mut dlane);
        for j in 0..n {
            out[base + j * stride] = dlane[j];
        }
    });
    out
}

macro_rules! fd4_lane_impl {
    ($name:ident, $t:ty) => {
        fn $name(lane: &[$t], h: f64, out: &mut [$t]) {
            let n = lane.len();
            debug_assert!(n >= 5);
            let c = 1.0 / (12.0 * h);
            out[0] = (lane[0] * -25.0 + lane[1] * 48.0 + lane[2] * -36.0 + lane[3] * 16.0
                + lane[4] * -3.0)
                * c;
            out[1] = (lane[0] * -3.0 + lane[1] * -10.0 + lane[2] * 18.0 + lane[3] * -6.0
                + lane[4])
                * c;
            for j in 2..n - 2 {
                out[j] = (lane[j - 2] - lane[j + 2] + (lane[j + 1] - lane[j - 1]) * 8.0) * c;
            }
            out[n - 2] = (lane[n - 1] * 3.0 + lane[n - 2] * 10.0 + lane[n - 3] * -18.0
                + lane[n - 4] * 6.0
                - lane[n - 5])
                * c;
            out[n - 1] = (lane[n - 1] * 25.0 + lane[n - 2] * -48.0 + lane[n - 3] * 36.0
                + lane[n - 4] * -16.0
                + lane[n - 5] * 3.0)
                * c;
        }
    };
}

fd4_lane_impl!(fd4_lane, f64);
fd4_lane_impl!(fd4_lane_c64, C64);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisSpec;

    fn box_grid_1pair(n: usize, periodic: bool) -> std::sync::Arc<PhaseSpaceGrid> {
        PhaseSpaceGrid::new(vec![
            AxisSpec::new("q", -3.0, 3.0, n, periodic),
            AxisSpec::new("p", -3.0, 3.0, n, periodic),
        ])
        .unwrap()
    }

    #[test]
    fn fd4_exact_on_quartic() {
        // 5-point fourth-order stencils differentiate degree-4 polynomials
        // exactly, including the one-sided rows.
        let g = box_grid_1pair(32, false);
        let mut vals = vec![0.0; g.len()];
        let mut pt = [0.0; 2];
        for i in 0..g.len() {
            g.point(i, &mut pt);
            vals[i] = pt[0].powi(4) - 2.0 * pt[0].powi(2);
        }
        let d = derivative_f64_local(&g, &vals, 0);
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            g.point(i, &mut pt);
            let exact = 4.0 * pt[0].powi(3) - 4.0 * pt[0];
            worst = worst.max((d[i] - exact).abs());
        }
        assert!(worst < 1e-10, "worst {worst:.3e}");
    }

    #[test]
    fn spectral_exact_on_trig() {
        let g = PhaseSpaceGrid::torus_2d(32).unwrap();
        let mut vals = vec![C64::new(0.0, 0.0); g.len()];
        let mut pt = [0.0; 2];
        for i in 0..g.len() {
            g.point(i, &mut pt);
            vals[i] = C64::new((3.0 * pt[1]).sin(), (2.0 * pt[0]).cos());
        }
        let d = derivative_c64(&g, &vals, 1);
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            g.point(i, &mut pt);
            let exact = 3.0 * (3.0 * pt[1]).cos();
            worst = worst.max((d[i].re - exact).abs().max(d[i].im.abs() - 0.0));
        }
        assert!(worst < 1e-11, "worst {worst:.3e}");
    }

    #[test]
    fn spectral_derivative_of_real_field_is_real() {
        let g = PhaseSpaceGrid::torus_2d(24).unwrap();
        let mut vals = vec![C64::new(0.0, 0.0); g.len()];
        let mut pt = [0.0; 2];
        for i in 0..g.len() {
            g.point(i, &mut pt);
            vals[i] = C64::new((pt[0].sin() + 0.3 * (2.0 * pt[1]).cos()).exp(), 0.0);
        }
        let d = derivative_c64(&g, &vals, 0);
        let imag = d.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
        assert!(imag < 1e-12, "imag residue {imag:.3e}");
    }

    #[test]
    fn local_rule_never_wraps() {
        // On a periodic axis carrying a sawtooth coordinate, the local rule
        // must report slope 1 everywhere rather than smearing the seam.
        let g = PhaseSpaceGrid::torus_2d(16).unwrap();
        let mut vals = vec![0.0; g.len()];
        let mut pt = [0.0; 2];
        for i in 0..g.len() {
            g.point(i, &mut pt);
            vals[i] = pt[0];
        }
        let d = derivative_f64_local(&g, &vals, 0);
        let worst = d.iter().map(|v| (v - 1.0).abs()).fold(0.0f64, f64::max);
        assert!(worst < 1e-11, "worst {worst:.3e}");
    }
}
