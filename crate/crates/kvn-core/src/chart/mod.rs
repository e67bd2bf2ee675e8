//! Canonical coordinate charts and state resampling between grids.
//!
//! A chart is a pair of mutually inverse point maps between a source
//! coordinate box and the box of a target grid, together with sampled
//! self-diagnostics: the worst round-trip error and the worst deviation of
//! the forward Jacobian determinant from one. States transport as scalars
//! (canonical charts have unit Jacobian, so no density factor appears);
//! [`resample`] evaluates the source interpolant at the preimage of every
//! target node and reports how much mass the move lost.
//!
//! Charts for several degrees of freedom are only ever built as products of
//! one-dimensional charts acting on `(q_i, p_i)` pairs; nothing here attempts
//! a genuinely coupled multi-dimensional transform.

mod action;
mod interp;
mod maps;

pub use action::{numeric_action_angle_chart, ActionAngleTable, ActionLevel};
pub use maps::{
    koopman_matrix, lyapunov_estimate, smoothed_koopman, volume_defect, KoopmanOperator,
    SymplecticMap,
};

use crate::error::{KvnError, Result};
use crate::field::StateFunction;
use crate::grid::PhaseSpaceGrid;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::sync::{Arc, OnceLock};

type PointMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type PointGuard = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Points sampled for the round-trip and Jacobian diagnostics.
const DIAG_SAMPLES: usize = 1000;
/// Seed for the diagnostic sample cloud.
const DIAG_SEED: u64 = 0x0c4a_2717;
/// Fraction of the state's mass allowed to fall outside the target grid
/// before a resample is refused.
const ESCAPE_TOLERANCE: f64 = 1e-6;

/// Invertible map from a source coordinate box onto the box of a target grid.
pub struct CanonicalChart {
    name: String,
    forward: PointMap,
    inverse: PointMap,
    /// Box in source coordinates on which the chart is defined.
    domain: Vec<(f64, f64)>,
    /// Source coordinates that wrap modulo their domain span.
    source_wrap: Vec<bool>,
    target_grid: Arc<PhaseSpaceGrid>,
    /// Optional restriction of the diagnostic sample cloud, for charts whose
    /// maps degenerate somewhere inside the domain box (coordinate centers,
    /// table edges). Escape accounting does not use it.
    sample_guard: Option<PointGuard>,
    roundtrip: OnceLock<f64>,
    jacobian: OnceLock<f64>,
}

impl CanonicalChart {
    /// Builds a chart from a forward/inverse closure pair.
    ///
    /// `domain` is the source box; its length must match the target grid's
    /// axis count. No consistency between the two maps is assumed here — run
    /// [`roundtrip_defect`](Self::roundtrip_defect) and
    /// [`jacobian_defect`](Self::jacobian_defect) to measure it.
    pub fn new(
        name: impl Into<String>,
        forward: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        inverse: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        domain: Vec<(f64, f64)>,
        target_grid: &Arc<PhaseSpaceGrid>,
    ) -> Result<Self> {
        if domain.len() != target_grid.num_axes() {
            return Err(KvnError::ChartDomain(format!(
                "domain box has {} coordinates but the target grid has {} axes",
                domain.len(),
                target_grid.num_axes()
            )));
        }
        for (a, &(lo, hi)) in domain.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(KvnError::ChartDomain(format!(
                    "domain coordinate {a} has empty or non-finite range [{lo}, {hi}]"
                )));
            }
        }
        Ok(CanonicalChart {
            name: name.into(),
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            source_wrap: vec![false; domain.len()],
            domain,
            target_grid: target_grid.clone(),
            sample_guard: None,
            roundtrip: OnceLock::new(),
            jacobian: OnceLock::new(),
        })
    }

    /// Marks source coordinates as periodic over their domain span, so
    /// round-trip errors are measured modulo that span.
    pub fn with_wrapped_source(mut self, wrap: Vec<bool>) -> Result<Self> {
        if wrap.len() != self.domain.len() {
            return Err(KvnError::ChartDomain(
                "wrap flags must match the domain dimension".into(),
            ));
        }
        self.source_wrap = wrap;
        Ok(self)
    }

    /// Restricts the diagnostic sample cloud to points satisfying `guard`.
    pub fn with_sample_guard(
        mut self,
        guard: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.sample_guard = Some(Arc::new(guard));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn target_grid(&self) -> &Arc<PhaseSpaceGrid> {
        &self.target_grid
    }

    pub fn domain_box(&self) -> &[(f64, f64)] {
        &self.domain
    }

    /// Applies the forward map, source box to target coordinates.
    pub fn forward_point(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.len()];
        (self.forward)(z, &mut out);
        out
    }

    /// Applies the inverse map, target coordinates to the source box.
    pub fn inverse_point(&self, zz: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.len()];
        (self.inverse)(zz, &mut out);
        out
    }

    /// The same chart read backwards: target grid becomes the source box and
    /// `source_grid` the new target.
    pub fn inverted_onto(&self, source_grid: &Arc<PhaseSpaceGrid>) -> Result<CanonicalChart> {
        if source_grid.num_axes() != self.domain.len() {
            return Err(KvnError::ChartDomain(format!(
                "inverted chart needs a {}-axis target grid, got {}",
                self.domain.len(),
                source_grid.num_axes()
            )));
        }
        let domain = (0..self.target_grid.num_axes())
            .map(|a| {
                let ax = self.target_grid.axis(a);
                (ax.min, ax.max)
            })
            .collect();
        let wrap = (0..self.target_grid.num_axes())
            .map(|a| self.target_grid.axis(a).periodic)
            .collect();
        Ok(CanonicalChart {
            name: format!("{}^-1", self.name),
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
            domain,
            source_wrap: wrap,
            target_grid: source_grid.clone(),
            sample_guard: None,
            roundtrip: OnceLock::new(),
            jacobian: OnceLock::new(),
        })
    }

    /// Worst `|inverse(forward(z)) - z|` over the diagnostic sample cloud,
    /// measured per coordinate with periodic wrapping where declared.
    pub fn roundtrip_defect(&self) -> f64 {
        *self.roundtrip.get_or_init(|| {
            let dim = self.domain.len();
            let mut worst = 0.0f64;
            let mut fwd = vec![0.0; dim];
            let mut back = vec![0.0; dim];
            for z in self.sample_cloud() {
                (self.forward)(&z, &mut fwd);
                (self.inverse)(&fwd, &mut back);
                for a in 0..dim {
                    let mut d = back[a] - z[a];
                    if self.source_wrap[a] {
                        let span = self.domain[a].1 - self.domain[a].0;
                        d = d.rem_euclid(span);
                        d = d.min(span - d);
                    }
                    worst = worst.max(d.abs());
                }
            }
            worst
        })
    }

    /// Worst `|det J - 1|` of the forward map over the diagnostic sample
    /// cloud. `J` comes from Richardson-extrapolated central differences
    /// (fourth order), and differences of target coordinates on periodic
    /// target axes are wrapped, so charts into angles are not penalized at
    /// the seam.
    pub fn jacobian_defect(&self) -> f64 {
        *self.jacobian.get_or_init(|| {
            let dim = self.domain.len();
            let mut worst = 0.0f64;
            let mut jac = vec![vec![0.0; dim]; dim];
            for z in self.sample_cloud() {
                for s in 0..dim {
                    let eps = 1e-4 * (self.domain[s].1 - self.domain[s].0);
                    let wide = self.forward_difference(&z, s, eps);
                    let tight = self.forward_difference(&z, s, eps / 2.0);
                    for t in 0..dim {
                        jac[t][s] = (4.0 * tight[t] - wide[t]) / 3.0;
                    }
                }
                worst = worst.max((det(&mut jac) - 1.0).abs());
            }
            worst
        })
    }

    /// Central-difference column `dF/dz_s` with periodic target wrapping.
    fn forward_difference(&self, z: &[f64], s: usize, eps: f64) -> Vec<f64> {
        let dim = self.domain.len();
        let mut plus = vec![0.0; dim];
        let mut minus = vec![0.0; dim];
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[s] += eps;
        zm[s] -= eps;
        (self.forward)(&zp, &mut plus);
        (self.forward)(&zm, &mut minus);
        (0..dim)
            .map(|t| {
                let mut d = plus[t] - minus[t];
                let ax = self.target_grid.axis(t);
                if ax.periodic {
                    let span = ax.max - ax.min;
                    d = d.rem_euclid(span);
                    if d > span / 2.0 {
                        d -= span;
                    }
                }
                d / (2.0 * eps)
            })
            .collect()
    }

    /// Deterministic interior sample cloud honoring the sample guard.
    fn sample_cloud(&self) -> Vec<Vec<f64>> {
        let dim = self.domain.len();
        let mut rng = ChaCha8Rng::seed_from_u64(DIAG_SEED);
        let mut cloud = Vec::with_capacity(DIAG_SAMPLES);
        let mut attempts = 0usize;
        while cloud.len() < DIAG_SAMPLES && attempts < 200 * DIAG_SAMPLES {
            attempts += 1;
            let z: Vec<f64> = (0..dim)
                .map(|a| {
                    let (lo, hi) = self.domain[a];
                    let pad = 0.05 * (hi - lo);
                    rng.gen_range(lo + pad..hi - pad)
                })
                .collect();
            if self.sample_guard.as_ref().map_or(true, |g| g(&z)) {
                cloud.push(z);
            }
        }
        cloud
    }
}

/// Determinant by partial-pivot elimination; `m` is scratch.
fn det(m: &mut [Vec<f64>]) -> f64 {
    let n = m.len();
    let mut sign = 1.0;
    let mut out = 1.0;
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        if m[pivot][c] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            m.swap(pivot, c);
            sign = -sign;
        }
        out *= m[c][c];
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                let sub = f * m[c][k];
                m[r][k] -= sub;
            }
        }
    }
    sign * out
}

/// Analytic harmonic-oscillator action-angle chart with the default origin
/// cutoff. See [`ho_action_angle_chart_with_floor`].
pub fn ho_action_angle_chart(
    mass: f64,
    omega: f64,
    target: &Arc<PhaseSpaceGrid>,
) -> Result<CanonicalChart> {
    ho_action_angle_chart_with_floor(mass, omega, 1e-12, target)
}

/// Analytic action-angle chart of the harmonic oscillator.
///
/// Forward: `I = (p^2/m + m w^2 q^2) / (2 w)`, `phi = atan2(m w q, p)`, so a
/// point on the positive `p` axis carries angle zero and the angle grows
/// along the flow. Inverse: `q = sqrt(2 I / (m w)) sin phi`,
/// `p = sqrt(2 m w I) cos phi`. Below `floor` the angle is ill-conditioned;
/// forward returns angle zero there and the diagnostics avoid the region.
pub fn ho_action_angle_chart_with_floor(
    mass: f64,
    omega: f64,
    floor: f64,
    target: &Arc<PhaseSpaceGrid>,
) -> Result<CanonicalChart> {
    if !(mass.is_finite() && mass > 0.0 && omega.is_finite() && omega > 0.0) {
        return Err(KvnError::InvalidParameter(format!(
            "oscillator chart needs positive finite mass and frequency, got m={mass}, w={omega}"
        )));
    }
    if !(floor.is_finite() && floor >= 0.0) {
        return Err(KvnError::InvalidParameter(format!(
            "action floor must be finite and nonnegative, got {floor}"
        )));
    }
    check_angle_action_target(target)?;
    let i_max = target.axis(1).max;

    let mw = mass * omega;
    let forward = move |z: &[f64], out: &mut [f64]| {
        let (q, p) = (z[0], z[1]);
        let action = (p * p / mass + mw * omega * q * q) / (2.0 * omega);
        out[0] = if action < floor {
            0.0
        } else {
            (mw * q).atan2(p).rem_euclid(TAU)
        };
        out[1] = action;
    };
    let inverse = move |zz: &[f64], out: &mut [f64]| {
        let (phi, action) = (zz[0], zz[1].max(0.0));
        let amp = (2.0 * action / mw).sqrt();
        out[0] = amp * phi.sin();
        out[1] = mw * amp * phi.cos();
    };
    let q_max = (2.0 * i_max / mw).sqrt();
    let p_max = (2.0 * mw * i_max).sqrt();
    let chart = CanonicalChart::new(
        format!("ho_action_angle(m={mass}, w={omega})"),
        forward,
        inverse,
        vec![(-q_max, q_max), (-p_max, p_max)],
        target,
    )?;
    // Keep diagnostic samples away from the angle's branch point and inside
    // the action range the chart actually covers.
    Ok(chart.with_sample_guard(move |z| {
        let action = (z[1] * z[1] / mass + mw * omega * z[0] * z[0]) / (2.0 * omega);
        action >= 1e-2 * i_max && action <= i_max
    }))
}

fn check_angle_action_target(target: &Arc<PhaseSpaceGrid>) -> Result<()> {
    if target.num_axes() != 2 {
        return Err(KvnError::ChartDomain(format!(
            "angle-action chart target must have 2 axes, got {}",
            target.num_axes()
        )));
    }
    let angle = target.axis(0);
    if !angle.periodic || (angle.max - angle.min - TAU).abs() > 1e-9 {
        return Err(KvnError::ChartDomain(
            "target axis 0 must be a full-turn periodic angle".into(),
        ));
    }
    let action = target.axis(1);
    if action.periodic || action.min < 0.0 {
        return Err(KvnError::ChartDomain(
            "target axis 1 must be a truncated nonnegative action range".into(),
        ));
    }
    Ok(())
}

/// Linear area-preserving chart of the 2-torus given by an integer matrix
/// `[[a, b], [c, d]]` with `a d - b c = 1`, acting as
/// `(q, p) -> (a q + b p, c q + d p)` modulo the full turn.
///
/// Grid nodes map exactly onto grid nodes, so resampling through such a
/// chart permutes values without interpolation error.
pub fn torus_linear_chart(
    coeffs: [i64; 4],
    grid: &Arc<PhaseSpaceGrid>,
) -> Result<CanonicalChart> {
    let [a, b, c, d] = coeffs;
    if a * d - b * c != 1 {
        return Err(KvnError::InvalidParameter(format!(
            "torus chart matrix [[{a}, {b}], [{c}, {d}]] must have determinant one"
        )));
    }
    if grid.num_axes() != 2 || !grid.axis(0).periodic || !grid.axis(1).periodic {
        return Err(KvnError::ChartDomain(
            "torus chart needs a fully periodic two-axis grid".into(),
        ));
    }
    for axis in 0..2 {
        let ax = grid.axis(axis);
        if (ax.max - ax.min - TAU).abs() > 1e-9 {
            return Err(KvnError::ChartDomain(
                "torus chart axes must span a full turn".into(),
            ));
        }
    }
    let (fa, fb, fc, fd) = (a as f64, b as f64, c as f64, d as f64);
    let forward = move |z: &[f64], out: &mut [f64]| {
        out[0] = (fa * z[0] + fb * z[1]).rem_euclid(TAU);
        out[1] = (fc * z[0] + fd * z[1]).rem_euclid(TAU);
    };
    let inverse = move |zz: &[f64], out: &mut [f64]| {
        out[0] = (fd * zz[0] - fb * zz[1]).rem_euclid(TAU);
        out[1] = (-fc * zz[0] + fa * zz[1]).rem_euclid(TAU);
    };
    CanonicalChart::new(
        format!("torus_linear[{a},{b};{c},{d}]"),
        forward,
        inverse,
        vec![(0.0, TAU), (0.0, TAU)],
        grid,
    )?
    .with_wrapped_source(vec![true, true])
}

/// Product of one-degree-of-freedom charts, acting independently on the
/// `(q_i, p_i)` coordinate pairs. The target grid concatenates the factors'
/// target axes with freshly numbered labels.
pub fn product_chart(parts: Vec<CanonicalChart>) -> Result<CanonicalChart> {
    if parts.is_empty() {
        return Err(KvnError::InvalidParameter(
            "product chart needs at least one factor".into(),
        ));
    }
    let mut axes = Vec::new();
    let mut domain = Vec::new();
    let mut wrap = Vec::new();
    let mut names = Vec::new();
    for (k, part) in parts.iter().enumerate() {
        if part.domain.len() != 2 {
            return Err(KvnError::ChartDomain(format!(
                "product factor {k} must be a one-degree-of-freedom chart"
            )));
        }
        for a in 0..2 {
            let ax = part.target_grid.axis(a);
            axes.push(crate::grid::AxisSpec::new(
                format!("{}{}", ax.label.trim_end_matches(char::is_numeric), k + 1),
                ax.min,
                ax.max,
                ax.points,
                ax.periodic,
            ));
        }
        domain.extend_from_slice(&part.domain);
        wrap.extend_from_slice(&part.source_wrap);
        names.push(part.name.clone());
    }
    let target = PhaseSpaceGrid::new(axes)?;
    let fwds: Vec<PointMap> = parts.iter().map(|p| p.forward.clone()).collect();
    let invs: Vec<PointMap> = parts.iter().map(|p| p.inverse.clone()).collect();
    let guards: Vec<Option<PointGuard>> =
        parts.iter().map(|p| p.sample_guard.clone()).collect();
    let forward = move |z: &[f64], out: &mut [f64]| {
        for (k, f) in fwds.iter().enumerate() {
            f(&z[2 * k..2 * k + 2], &mut out[2 * k..2 * k + 2]);
        }
    };
    let inverse = move |zz: &[f64], out: &mut [f64]| {
        for (k, f) in invs.iter().enumerate() {
            f(&zz[2 * k..2 * k + 2], &mut out[2 * k..2 * k + 2]);
        }
    };
    let chart = CanonicalChart::new(
        format!("product({})", names.join(", ")),
        forward,
        inverse,
        domain,
        &target,
    )?
    .with_wrapped_source(wrap)?;
    Ok(if guards.iter().any(|g| g.is_some()) {
        chart.with_sample_guard(move |z| {
            guards
                .iter()
                .enumerate()
                .all(|(k, g)| g.as_ref().map_or(true, |g| g(&z[2 * k..2 * k + 2])))
        })
    } else {
        chart
    })
}

/// A state moved through a chart onto the chart's target grid.
pub struct Resampled {
    pub state: StateFunction,
    /// Fraction of the source mass whose forward image missed the target
    /// grid (always below the rejection threshold when this is returned).
    pub escaped_fraction: f64,
    /// Relative change of total mass across the move, interpolation error
    /// included: `after / before - 1`.
    pub mass_drift: f64,
}

/// Evaluates `psi` at the preimage of every target node of `chart`.
///
/// States transport as scalars. If more than a small fraction of the mass
/// of `psi` sits at source points whose forward image falls outside the
/// target grid (or outside the chart's domain box), the move is refused with
/// the escaping fraction, since the result would silently truncate the state.
pub fn resample(psi: &StateFunction, chart: &CanonicalChart) -> Result<Resampled> {
    let grid = psi.grid();
    let dim = grid.num_axes();
    if dim != chart.domain.len() {
        return Err(KvnError::GridMismatch(format!(
            "state lives on a {dim}-axis grid but the chart maps {} coordinates",
            chart.domain.len()
        )));
    }
    for a in 0..dim {
        if !grid.axis(a).periodic && grid.axis(a).points < 4 {
            return Err(KvnError::ChartDomain(format!(
                "source axis {a} has fewer than four points; cubic interpolation needs four"
            )));
        }
    }
    let total = psi.norm_squared();
    if total <= 1e-300 {
        return Err(KvnError::ZeroState { norm: 0.0 });
    }

    // Escape accounting over the source nodes.
    let target = &chart.target_grid;
    let mut z = vec![0.0; dim];
    let mut image = vec![0.0; dim];
    let mut escaped = 0.0;
    let values = psi.values();
    for (k, &v) in values.iter().enumerate() {
        let m2 = v.norm_sqr() * grid.weight(k);
        if m2 == 0.0 {
            continue;
        }
        grid.point(k, &mut z);
        let inside_domain = (0..dim).all(|a| {
            chart.source_wrap[a] || (z[a] >= chart.domain[a].0 && z[a] <= chart.domain[a].1)
        });
        if !inside_domain {
            escaped += m2;
            continue;
        }
        (chart.forward)(&z, &mut image);
        let inside_target = (0..dim).all(|a| {
            let ax = target.axis(a);
            ax.periodic || {
                let margin = 0.5 * target.spacing(a);
                image[a] >= ax.min - margin && image[a] <= ax.max + margin
            }
        });
        if !inside_target {
            escaped += m2;
        }
    }
    let escaped_fraction = escaped / total;
    if escaped_fraction > ESCAPE_TOLERANCE {
        return Err(KvnError::SupportEscape {
            escaped_mass: escaped_fraction,
        });
    }

    // Scalar transport: evaluate the source interpolant at each preimage.
    let mut out = vec![C64::new(0.0, 0.0); target.len()];
    let mut zz = vec![0.0; dim];
    for (j, slot) in out.iter_mut().enumerate() {
        target.point(j, &mut zz);
        (chart.inverse)(&zz, &mut z);
        let inside = (0..dim).all(|a| {
            let ax = grid.axis(a);
            ax.periodic || {
                let tol = 1e-9 * (ax.max - ax.min);
                z[a] >= ax.min - tol && z[a] <= ax.max + tol
            }
        });
        if inside {
            *slot = interp::eval_scattered(grid, values, &z);
        }
    }
    let state = StateFunction::from_values(target, out)?;
    let after = state.norm_squared();
    Ok(Resampled {
        state,
        escaped_fraction,
        mass_drift: after / total - 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillator_chart_satisfies_both_diagnostics() {
        let target =
            PhaseSpaceGrid::action_angle(&[32], &[(1e-3, 2.0)], &[17]).unwrap();
        let chart = ho_action_angle_chart(1.0, 1.0, &target).unwrap();
        assert!(chart.roundtrip_defect() < 1e-12);
        assert!(chart.jacobian_defect() < 1e-8);
    }

    #[test]
    fn torus_chart_rejects_non_unimodular_matrices() {
        let g = PhaseSpaceGrid::torus_2d(8).unwrap();
        assert!(torus_linear_chart([1, 1, 1, 0], &g).is_err());
        assert!(torus_linear_chart([2, 0, 0, 1], &g).is_err());
        assert!(torus_linear_chart([1, 2, 1, 3], &g).is_ok());
    }

    #[test]
    fn determinant_matches_hand_values() {
        let mut m = vec![vec![2.0, 1.0], vec![7.0, 4.0]];
        assert!((det(&mut m) - 1.0).abs() < 1e-14);
        let mut m3 = vec![
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 3.0],
        ];
        assert!((det(&mut m3) + 3.0).abs() < 1e-14);
    }
}
