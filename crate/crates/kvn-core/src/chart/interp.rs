//! Scattered evaluation of gridded samples at off-grid points.
//!
//! Periodic axes evaluate the trigonometric interpolant underlying the
//! spectral derivative (global cardinal weights), truncated axes a four-point
//! cubic window, exact for cubic polynomials. A coordinate landing on a node
//! collapses that axis to the node itself, so lattice-preserving maps
//! resample as pure index permutations at full precision and linear cost.

use crate::grid::PhaseSpaceGrid;
use num_complex::Complex64 as C64;
use std::f64::consts::TAU;

/// Relative snap distance below which a coordinate counts as on-node.
const NODE_SNAP: f64 = 1e-9;

pub(crate) enum AxisKernel {
    /// Coordinate coincides with grid node `i`.
    Node(usize),
    /// Cubic window over nodes `base .. base + 4`.
    Window { base: usize, w: [f64; 4] },
    /// Trigonometric cardinal weights over every node of a periodic axis.
    Dense(Vec<f64>),
}

/// Interpolation weights along one axis at coordinate `x`.
///
/// Truncated axes need at least four points and clamp `x` to the axis range;
/// the caller decides whether out-of-range coordinates mean zero instead.
pub(crate) fn axis_kernel(grid: &PhaseSpaceGrid, axis: usize, x: f64) -> AxisKernel {
    let ax = grid.axis(axis);
    let n = ax.points;
    let h = grid.spacing(axis);

    if ax.periodic {
        let span = ax.max - ax.min;
        let pos = (x - ax.min).rem_euclid(span) / h;
        let near = pos.round();
        if (pos - near).abs() < NODE_SNAP {
            return AxisKernel::Node(near as usize % n);
        }
        // Cardinal of the n-point trigonometric interpolant; the two closed
        // forms are 2pi-periodic in theta, so no branch reduction is needed.
        let nf = n as f64;
        let w = (0..n)
            .map(|j| {
                let theta = TAU * (pos - j as f64) / nf;
                if n % 2 == 0 {
                    (nf * theta / 2.0).sin() / (nf * (theta / 2.0).tan())
                } else {
                    (nf * theta / 2.0).sin() / (nf * (theta / 2.0).sin())
                }
            })
            .collect();
        return AxisKernel::Dense(w);
    }

    let pos = ((x - ax.min) / h).clamp(0.0, (n - 1) as f64);
    let near = pos.round();
    if (pos - near).abs() < NODE_SNAP {
        return AxisKernel::Node(near as usize);
    }
    let cell = (pos.floor() as usize).min(n - 2);
    let base = cell.saturating_sub(1).min(n - 4);
    let s = pos - base as f64;
    AxisKernel::Window {
        base,
        w: [
            -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
            s * (s - 2.0) * (s - 3.0) / 2.0,
            -s * (s - 1.0) * (s - 3.0) / 2.0,
            s * (s - 1.0) * (s - 2.0) / 6.0,
        ],
    }
}

/// Value of the interpolant through `values` at an arbitrary `point`.
pub(crate) fn eval_scattered(grid: &PhaseSpaceGrid, values: &[C64], point: &[f64]) -> C64 {
    let kernels: Vec<AxisKernel> = (0..grid.num_axes())
        .map(|a| axis_kernel(grid, a, point[a]))
        .collect();
    accumulate(grid, values, &kernels, 0, 0, 1.0)
}

fn accumulate(
    grid: &PhaseSpaceGrid,
    values: &[C64],
    kernels: &[AxisKernel],
    axis: usize,
    offset: usize,
    weight: f64,
) -> C64 {
    if axis == kernels.len() {
        return values[offset] * weight;
    }
    let stride = grid.stride(axis);
    match &kernels[axis] {
        AxisKernel::Node(i) => {
            accumulate(grid, values, kernels, axis + 1, offset + i * stride, weight)
        }
        AxisKernel::Window { base, w } => {
            let mut acc = C64::new(0.0, 0.0);
            for (k, &wk) in w.iter().enumerate() {
                acc += accumulate(
                    grid,
                    values,
                    kernels,
                    axis + 1,
                    offset + (base + k) * stride,
                    weight * wk,
                );
            }
            acc
        }
        AxisKernel::Dense(w) => {
            let mut acc = C64::new(0.0, 0.0);
            for (j, &wj) in w.iter().enumerate() {
                if wj != 0.0 {
                    acc += accumulate(
                        grid,
                        values,
                        kernels,
                        axis + 1,
                        offset + j * stride,
                        weight * wj,
                    );
                }
            }
            acc
        }
    }
}
