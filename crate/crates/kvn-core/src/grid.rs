//! Tensor-product phase-space grids.
//!
//! A grid is an even number of axes, each either periodic (sampled on
//! `[min, max)` with uniform spacing `(max - min) / points`) or truncated
//! (sampled on `[min, max]` inclusive with spacing `(max - min) / (points - 1)`).
//! Axes come in canonical pairs: axis `2i` is a configuration-like coordinate
//! (q or an angle) and axis `2i + 1` its conjugate momentum (p or an action).
//! All Poisson-bracket sign conventions in this crate follow that pairing.
//!
//! Values are stored row-major over the axis order, so the last axis is the
//! fastest-varying index.

use crate::error::{KvnError, Result};
use std::sync::{Arc, OnceLock};

/// One axis of a phase-space grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpec {
    pub label: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub periodic: bool,
}

impl AxisSpec {
    pub fn new(label: impl Into<String>, min: f64, max: f64, points: usize, periodic: bool) -> Self {
        AxisSpec {
            label: label.into(),
            min,
            max,
            points,
            periodic,
        }
    }
}

/// Uniform tensor-product grid over an even number of paired axes.
#[derive(Debug, Clone)]
pub struct PhaseSpaceGrid {
    axes: Vec<AxisSpec>,
    strides: Vec<usize>,
    spacings: Vec<f64>,
    /// Per-axis coordinate arrays.
    coords: Vec<Vec<f64>>,
    /// Per-axis quadrature weights (rectangle rule on periodic axes,
    /// trapezoid on truncated axes).
    axis_weights: Vec<Vec<f64>>,
    len: usize,
    point_weights: OnceLock<Vec<f64>>,
}

impl PartialEq for PhaseSpaceGrid {
    fn eq(&self, other: &Self) -> bool {
        self.axes == other.axes
    }
}

impl PhaseSpaceGrid {
    pub fn new(axes: Vec<AxisSpec>) -> Result<Arc<Self>> {
        if axes.is_empty() || axes.len() % 2 != 0 {
            return Err(KvnError::AxisConfig(format!(
                "need an even, positive number of axes (canonical pairs), got {}",
                axes.len()
            )));
        }
        for (a, ax) in axes.iter().enumerate() {
            if !(ax.min.is_finite() && ax.max.is_finite()) || ax.min >= ax.max {
                return Err(KvnError::AxisConfig(format!(
                    "axis {a} ({}): range [{}, {}] is not a finite non-empty interval",
                    ax.label, ax.min, ax.max
                )));
            }
            let min_points = if ax.periodic { 4 } else { 5 };
            if ax.points < min_points {
                return Err(KvnError::AxisConfig(format!(
                    "axis {a} ({}): {} points is below the minimum {min_points} for a {} axis",
                    ax.label,
                    ax.points,
                    if ax.periodic { "periodic" } else { "truncated" }
                )));
            }
            if ax.label.is_empty() {
                return Err(KvnError::AxisConfig(format!("axis {a} has an empty label")));
            }
        }

        let mut len: usize = 1;
        for ax in &axes {
            len = len.checked_mul(ax.points).ok_or_else(|| {
                KvnError::AxisConfig("grid point count overflows usize".to_string())
            })?;
        }

        let mut strides = vec![1usize; axes.len()];
        for a in (0..axes.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].points;
        }

        let spacings: Vec<f64> = axes
            .iter()
            .map(|ax| {
                if ax.periodic {
                    (ax.max - ax.min) / ax.points as f64
                } else {
                    (ax.max - ax.min) / (ax.points - 1) as f64
                }
            })
            .collect();

        let coords: Vec<Vec<f64>> = axes
            .iter()
            .zip(&spacings)
            .map(|(ax, &h)| (0..ax.points).map(|j| ax.min + h * j as f64).collect())
            .collect();

        let axis_weights: Vec<Vec<f64>> = axes
            .iter()
            .zip(&spacings)
            .map(|(ax, &h)| {
                if ax.periodic {
                    vec![h; ax.points]
                } else {
                    let mut w = vec![h; ax.points];
                    w[0] = 0.5 * h;
                    w[ax.points - 1] = 0.5 * h;
                    w
                }
            })
            .collect();

        Ok(Arc::new(PhaseSpaceGrid {
            axes,
            strides,
            spacings,
            coords,
            axis_weights,
            len,
            point_weights: OnceLock::new(),
        }))
    }

    /// `(q_i, p_i)` box grid: every axis truncated, labels `q1, p1, q2, p2, ...`.
    pub fn cartesian_box(half_widths: &[f64], points: &[usize]) -> Result<Arc<Self>> {
        Self::box_grid(half_widths, points, false)
    }

    /// Same box geometry but with every axis treated as periodic. Appropriate
    /// whenever the states of interest vanish near the box edge, where it buys
    /// spectral-accuracy derivatives.
    pub fn periodic_box(half_widths: &[f64], points: &[usize]) -> Result<Arc<Self>> {
        Self::box_grid(half_widths, points, true)
    }

    fn box_grid(half_widths: &[f64], points: &[usize], periodic: bool) -> Result<Arc<Self>> {
        if half_widths.len() != points.len() || half_widths.len() % 2 != 0 {
            return Err(KvnError::AxisConfig(
                "box grid needs matching, even-length half_widths and points".into(),
            ));
        }
        let axes = half_widths
            .iter()
            .zip(points)
            .enumerate()
            .map(|(a, (&w, &n))| {
                let pair = a / 2 + 1;
                let label = if a % 2 == 0 {
                    format!("q{pair}")
                } else {
                    format!("p{pair}")
                };
                AxisSpec::new(label, -w, w, n, periodic)
            })
            .collect();
        Self::new(axes)
    }

    /// Action-angle grid for `n_dof` degrees of freedom with axis order
    /// `(phi1, I1, phi2, I2, ...)`: angles periodic on `[0, 2pi)`, actions
    /// truncated on the given ranges.
    pub fn action_angle(
        angle_points: &[usize],
        action_ranges: &[(f64, f64)],
        action_points: &[usize],
    ) -> Result<Arc<Self>> {
        let n_dof = angle_points.len();
        if action_ranges.len() != n_dof || action_points.len() != n_dof {
            return Err(KvnError::AxisConfig(
                "action_angle needs one angle point count, action range, and action point count per degree of freedom"
                    .into(),
            ));
        }
        let mut axes = Vec::with_capacity(2 * n_dof);
        for i in 0..n_dof {
            axes.push(AxisSpec::new(
                format!("phi{}", i + 1),
                0.0,
                std::f64::consts::TAU,
                angle_points[i],
                true,
            ));
            let (lo, hi) = action_ranges[i];
            axes.push(AxisSpec::new(
                format!("I{}", i + 1),
                lo,
                hi,
                action_points[i],
                false,
            ));
        }
        Self::new(axes)
    }

    /// Fully periodic `[0, 2pi)^2` torus with `n` points per axis, labels `q, p`.
    pub fn torus_2d(n: usize) -> Result<Arc<Self>> {
        Self::new(vec![
            AxisSpec::new("q", 0.0, std::f64::consts::TAU, n, true),
            AxisSpec::new("p", 0.0, std::f64::consts::TAU, n, true),
        ])
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    /// Number of canonical pairs (degrees of freedom).
    pub fn dof(&self) -> usize {
        self.axes.len() / 2
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis(&self, a: usize) -> &AxisSpec {
        &self.axes[a]
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn spacing(&self, a: usize) -> f64 {
        self.spacings[a]
    }

    pub fn stride(&self, a: usize) -> usize {
        self.strides[a]
    }

    pub fn coords(&self, a: usize) -> &[f64] {
        &self.coords[a]
    }

    pub fn axis_weights(&self, a: usize) -> &[f64] {
        &self.axis_weights[a]
    }

    /// Conjugate partner of an axis under the `(2i, 2i+1)` pairing.
    pub fn paired_axis(&self, a: usize) -> usize {
        if a % 2 == 0 {
            a + 1
        } else {
            a - 1
        }
    }

    /// True for configuration-like slots (q or angle axes).
    pub fn is_configuration_axis(&self, a: usize) -> bool {
        a % 2 == 0
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.axes.len());
        multi
            .iter()
            .zip(&self.strides)
            .map(|(&j, &s)| j * s)
            .sum()
    }

    pub fn multi_index(&self, flat: usize, out: &mut [usize]) {
        let mut rem = flat;
        for a in 0..self.axes.len() {
            out[a] = rem / self.strides[a];
            rem %= self.strides[a];
        }
    }

    /// Coordinates of a flat index.
    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for a in 0..self.axes.len() {
            let j = rem / self.strides[a];
            rem %= self.strides[a];
            out[a] = self.coords[a][j];
        }
    }

    /// Product quadrature weight of a flat index.
    pub fn weight(&self, flat: usize) -> f64 {
        let mut rem = flat;
        let mut w = 1.0;
        for a in 0..self.axes.len() {
            let j = rem / self.strides[a];
            rem %= self.strides[a];
            w *= self.axis_weights[a][j];
        }
        w
    }

    /// Full per-point quadrature weight vector, built once on first use.
    pub fn point_weights(&self) -> &[f64] {
        self.point_weights
            .get_or_init(|| (0..self.len).map(|i| self.weight(i)).collect())
    }

    /// Total quadrature volume of the box.
    pub fn volume(&self) -> f64 {
        self.axes
            .iter()
            .zip(&self.spacings)
            .map(|(ax, &h)| {
                if ax.periodic {
                    ax.max - ax.min
                } else {
                    h * (ax.points - 1) as f64
                }
            })
            .product()
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_axis_count() {
        let axes = vec![AxisSpec::new("q", -1.0, 1.0, 8, false)];
        assert!(PhaseSpaceGrid::new(axes).is_err());
    }

    #[test]
    fn rejects_bad_range_and_too_few_points() {
        let axes = vec![
            AxisSpec::new("q", 1.0, -1.0, 8, false),
            AxisSpec::new("p", -1.0, 1.0, 8, false),
        ];
        assert!(PhaseSpaceGrid::new(axes).is_err());
        let axes = vec![
            AxisSpec::new("q", -1.0, 1.0, 3, false),
            AxisSpec::new("p", -1.0, 1.0, 8, false),
        ];
        assert!(PhaseSpaceGrid::new(axes).is_err());
    }

    #[test]
    fn spacing_conventions() {
        let g = PhaseSpaceGrid::new(vec![
            AxisSpec::new("q", 0.0, 1.0, 10, true),
            AxisSpec::new("p", 0.0, 1.0, 11, false),
        ])
        .unwrap();
        assert!((g.spacing(0) - 0.1).abs() < 1e-15);
        assert!((g.spacing(1) - 0.1).abs() < 1e-15);
        // periodic axis excludes the right endpoint
        assert!((g.coords(0)[9] - 0.9).abs() < 1e-15);
        // truncated axis includes it
        assert!((g.coords(1)[10] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn row_major_strides_and_roundtrip() {
        let g = PhaseSpaceGrid::new(vec![
            AxisSpec::new("q", -1.0, 1.0, 6, false),
            AxisSpec::new("p", -1.0, 1.0, 8, false),
        ])
        .unwrap();
        assert_eq!(g.stride(0), 8);
        assert_eq!(g.stride(1), 1);
        let flat = g.flat_index(&[3, 5]);
        assert_eq!(flat, 3 * 8 + 5);
        let mut multi = [0usize; 2];
        g.multi_index(flat, &mut multi);
        assert_eq!(multi, [3, 5]);
    }

    #[test]
    fn quadrature_volume_matches_box() {
        let g = PhaseSpaceGrid::cartesian_box(&[2.0, 3.0], &[16, 21]).unwrap();
        let total: f64 = (0..g.len()).map(|i| g.weight(i)).sum();
        assert!((total - 24.0).abs() < 1e-12, "total {total}");
        assert!((g.volume() - 24.0).abs() < 1e-12);

        let gp = PhaseSpaceGrid::torus_2d(16).unwrap();
        let total: f64 = (0..gp.len()).map(|i| gp.weight(i)).sum();
        let tau = std::f64::consts::TAU;
        assert!((total - tau * tau).abs() < 1e-10);
    }

    #[test]
    fn pairing_convention() {
        let g = PhaseSpaceGrid::action_angle(&[8], &[(0.1, 2.0)], &[8]).unwrap();
        assert_eq!(g.axis(0).label, "phi1");
        assert_eq!(g.axis(1).label, "I1");
        assert!(g.is_configuration_axis(0));
        assert_eq!(g.paired_axis(0), 1);
        assert_eq!(g.paired_axis(1), 0);
        assert!(g.axis(0).periodic);
        assert!(!g.axis(1).periodic);
    }
}
