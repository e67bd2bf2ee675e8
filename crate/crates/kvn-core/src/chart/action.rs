//! Action-angle charts built numerically from a 1-DOF Hamiltonian.
//!
//! For a separable system `H = p^2/2m + V(q)` with a single well, the action
//! at energy `E` is the loop integral `(1/2pi) closed-integral p dq`, here
//! computed over the substitution `q = mid + hw sin(theta)` that removes the
//! turning-point square-root singularity, so composite Simpson quadrature
//! converges at its full fourth order with small constants. Angles follow the
//! flow:
//! `phi = omega(E) t`, with `t` the time of flight from the positive-`p`
//! crossing of `q = 0` and `omega = dH/dI` from high-order finite differences
//! of the tabulated `I(E)`.
//!
//! The table is built once per chart on a uniform energy ladder; between
//! levels, actions and frequencies interpolate cubically. Energy windows that
//! approach a recorded separatrix (or whose upper end the potential never
//! climbs above, so no turning point exists) are refused.

use super::CanonicalChart;
use crate::error::{KvnError, Result};
use crate::grid::PhaseSpaceGrid;
use crate::system::HamiltonianSystem;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;
use std::sync::Arc;

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Energy clearance kept from any recorded separatrix.
const SEPARATRIX_MARGIN: f64 = 0.05;
/// Simpson intervals for the time-of-flight integrals.
const TIME_PANELS: usize = 512;
/// Simpson intervals for the action integral.
const ACTION_PANELS: usize = 1024;

/// One tabulated energy level of a numeric action-angle chart.
#[derive(Debug, Clone)]
pub struct ActionLevel {
    pub energy: f64,
    pub action: f64,
    pub frequency: f64,
    pub period: f64,
    /// Turning points `(q_-, q_+)` of the level's orbit.
    pub turning: (f64, f64),
    /// Eight `(q, p)` samples along the contour at equally spaced angles.
    pub contour: Vec<(f64, f64)>,
}

/// The level table backing a numeric action-angle chart.
#[derive(Debug, Clone)]
pub struct ActionAngleTable {
    pub levels: Vec<ActionLevel>,
}

impl ActionAngleTable {
    /// Writes the table as CSV: one row per level, contour samples flattened
    /// into trailing `q_k, p_k` columns.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "level,energy,action,frequency,period")?;
        let samples = self.levels.first().map_or(0, |l| l.contour.len());
        for k in 0..samples {
            write!(out, ",q{k},p{k}")?;
        }
        writeln!(out)?;
        for (i, level) in self.levels.iter().enumerate() {
            write!(
                out,
                "{i},{:.15e},{:.15e},{:.15e},{:.15e}",
                level.energy, level.action, level.frequency, level.period
            )?;
            for &(q, p) in &level.contour {
                write!(out, ",{q:.15e},{p:.15e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Cubic spline on a uniform knot ladder with not-a-knot ends, so the
/// interpolant is C^2 everywhere and fourth-order accurate up to the edges —
/// finite differences of chart maps never see a derivative jump at a knot.
struct Spline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m2: Vec<f64>,
}

impl Spline {
    fn build(x0: f64, h: f64, y: Vec<f64>) -> Spline {
        let n = y.len();
        let mut a = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        // Third-derivative continuity across the first and last interior knot
        // (not-a-knot), natural-tridiagonal rows elsewhere.
        a[0][0] = 1.0;
        a[0][1] = -2.0;
        a[0][2] = 1.0;
        a[n - 1][n - 3] = 1.0;
        a[n - 1][n - 2] = -2.0;
        a[n - 1][n - 1] = 1.0;
        for i in 1..n - 1 {
            a[i][i - 1] = 1.0;
            a[i][i] = 4.0;
            a[i][i + 1] = 1.0;
            rhs[i] = 6.0 * (y[i - 1] - 2.0 * y[i] + y[i + 1]) / (h * h);
        }
        let m2 = solve_dense(&mut a, &mut rhs);
        Spline { x0, h, y, m2 }
    }

    /// Spline value; outside the ladder the edge cubic continues analytically.
    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let pos = (x - self.x0) / self.h;
        let cell = (pos.floor().max(0.0) as usize).min(n - 2);
        let u = pos - cell as f64;
        let (mi, mj) = (self.m2[cell], self.m2[cell + 1]);
        let (yi, yj) = (self.y[cell], self.y[cell + 1]);
        let v = 1.0 - u;
        v * yi + u * yj
            + self.h * self.h / 6.0 * ((v * v * v - v) * mi + (u * u * u - u) * mj)
    }

    fn deriv(&self, x: f64) -> f64 {
        let n = self.y.len();
        let pos = (x - self.x0) / self.h;
        let cell = (pos.floor().max(0.0) as usize).min(n - 2);
        let u = pos - cell as f64;
        let (mi, mj) = (self.m2[cell], self.m2[cell + 1]);
        let v = 1.0 - u;
        (self.y[cell + 1] - self.y[cell]) / self.h
            + self.h / 6.0 * ((1.0 - 3.0 * v * v) * mi + (3.0 * u * u - 1.0) * mj)
    }
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
fn solve_dense(a: &mut [Vec<f64>], rhs: &mut [f64]) -> Vec<f64> {
    let n = rhs.len();
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(pivot, c);
        rhs.swap(pivot, c);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f == 0.0 {
                continue;
            }
            for k in c..n {
                let sub = f * a[c][k];
                a[r][k] -= sub;
            }
            rhs[r] -= f * rhs[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for k in r + 1..n {
            acc -= a[r][k] * x[k];
        }
        x[r] = acc / a[r][r];
    }
    x
}

/// Everything the chart closures need for pointwise evaluation.
struct Tables {
    mass: f64,
    v: Curve,
    dv: Curve,
    e_lo: f64,
    e_hi: f64,
    energies: Vec<f64>,
    actions: Vec<f64>,
    omegas: Vec<f64>,
    action_spline: Option<Spline>,
    /// Bracket interval containing every turning point up to `v_cap`.
    scan: (f64, f64),
    v_min: f64,
    /// Highest energy the turning-point finder is guaranteed to bracket.
    v_cap: f64,
}

impl Tables {
    /// Turning points `(q_-, q_+)` of the orbit at energy `e` by bisection
    /// on each flank of the well.
    fn turning(&self, e: f64) -> (f64, f64) {
        let v = &self.v;
        let bisect = |mut lo: f64, mut hi: f64| {
            // Invariant: V - e changes sign across [lo, hi].
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if ((v)(mid) - e > 0.0) == ((v)(lo) - e > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        (bisect(0.0, self.scan.0), bisect(0.0, self.scan.1))
    }

    /// Action integral at energy `e` with turning points `(qm, qp)`.
    fn action_quadrature(&self, e: f64, qm: f64, qp: f64) -> f64 {
        let mid = 0.5 * (qm + qp);
        let hw = 0.5 * (qp - qm);
        let m = self.mass;
        let v = &self.v;
        let f = |th: f64| {
            let q = mid + hw * th.sin();
            (2.0 * m * (e - (v)(q)).max(0.0)).sqrt() * th.cos() * hw
        };
        simpson(&f, -FRAC_PI_2, FRAC_PI_2, ACTION_PANELS) / PI
    }

    /// Time of flight along the orbit at energy `e`, integrated between the
    /// substitution angles `th_a` and `th_b` (signed).
    ///
    /// The integrand `m hw / sqrt(2 m W)` uses `W = (e - V)/cos^2(theta)`,
    /// which stays finite through the turning points; at the exact endpoints
    /// the 0/0 form is replaced by its limit `|V'(q_t)| hw / 2`.
    fn tau(&self, e: f64, qm: f64, qp: f64, th_a: f64, th_b: f64) -> f64 {
        let mid = 0.5 * (qm + qp);
        let hw = 0.5 * (qp - qm);
        let m = self.mass;
        let v = &self.v;
        let dv = &self.dv;
        let f = |th: f64| {
            let c = th.cos();
            let w = if c.abs() < 1e-8 {
                let q_t = if th > 0.0 { qp } else { qm };
                ((dv)(q_t)).abs() * hw / 2.0
            } else {
                let q = mid + hw * th.sin();
                ((e - (v)(q)) / (c * c)).max(1e-300)
            };
            m * hw / (2.0 * m * w).sqrt()
        };
        simpson(&f, th_a, th_b, TIME_PANELS)
    }

    fn action_of(&self, e: f64) -> f64 {
        self.action_spline.as_ref().expect("table sealed").eval(e)
    }

    /// Chart-internal frequency: the exact derivative of the interpolated
    /// action, so `omega * dI/dE = 1` holds identically and the chart's
    /// Jacobian stays unimodular to rounding. The level table reports the
    /// higher-order stencil values instead.
    fn omega_of(&self, e: f64) -> f64 {
        1.0 / self.action_spline.as_ref().expect("table sealed").deriv(e)
    }

    /// Inverts the tabulated `I(E)` by bisection over the table range.
    fn energy_of_action(&self, action: f64) -> f64 {
        let a = action.clamp(self.actions[0], *self.actions.last().unwrap());
        let (mut lo, mut hi) = (self.e_lo, self.e_hi);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.action_of(mid) < a {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Linear continuation of `I(E)` beyond the region the turning-point
    /// finder covers, used only so out-of-range points land visibly outside
    /// the target action window.
    fn linear_extension(&self, e: f64) -> f64 {
        if e > self.e_hi {
            let last = self.actions.len() - 1;
            self.actions[last] + (e - self.e_hi) / self.omegas[last]
        } else {
            self.actions[0] + (e - self.e_lo) / self.omegas[0]
        }
    }

    /// The `(q, p)` point at angle `phi` on the orbit of energy `e`.
    fn orbit_point(&self, e: f64, phi: f64) -> (f64, f64) {
        let (qm, qp) = self.turning(e);
        let mid = 0.5 * (qm + qp);
        let hw = 0.5 * (qp - qm);
        let th0 = ((0.0 - mid) / hw).clamp(-1.0, 1.0).asin();
        let t_plus = self.tau(e, qm, qp, th0, FRAC_PI_2);
        let t_minus = self.tau(e, qm, qp, th0, -FRAC_PI_2);
        let t_period = 2.0 * (t_plus - t_minus);
        let omega = self.omega_of(e);
        let mut time = phi.rem_euclid(TAU) / omega;
        // The table frequency and the quadrature period agree to the table's
        // accuracy, not exactly; fold the mismatch back into one period.
        while time >= t_period {
            time -= t_period;
        }
        let (sign, target) = if time <= t_plus {
            (1.0, time)
        } else if time <= 2.0 * t_plus - t_minus {
            (-1.0, 2.0 * t_plus - time)
        } else {
            (1.0, time - t_period)
        };
        let (mut lo, mut hi) = (-FRAC_PI_2, FRAC_PI_2);
        for _ in 0..60 {
            let th = 0.5 * (lo + hi);
            if self.tau(e, qm, qp, th0, th) < target {
                lo = th;
            } else {
                hi = th;
            }
        }
        let th = 0.5 * (lo + hi);
        let q = mid + hw * th.sin();
        let p = sign * (2.0 * self.mass * (e - (self.v)(q)).max(0.0)).sqrt();
        (q, p)
    }
}

/// Signed composite Simpson rule with `n` (even) panels.
fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Builds an action-angle chart for a separable 1-DOF system by tabulating
/// `n_levels` orbits across `e_range` and interpolating between them.
///
/// Returns the chart together with its level table. The energy window must
/// stay clear of recorded separatrices by a fixed margin, every orbit in it
/// must cross `q = 0` (the angle origin), and the resulting `I(E)` must be
/// strictly increasing.
pub fn numeric_action_angle_chart(
    system: &HamiltonianSystem,
    e_range: (f64, f64),
    n_levels: usize,
) -> Result<(CanonicalChart, ActionAngleTable)> {
    let (e_lo, e_hi) = e_range;
    if system.dof() != 1 {
        return Err(KvnError::InvalidParameter(format!(
            "numeric action-angle charts cover one degree of freedom, system has {}",
            system.dof()
        )));
    }
    let pot = system.potential().ok_or_else(|| {
        KvnError::InvalidParameter(
            "numeric action-angle chart needs a separable kinetic-plus-potential system".into(),
        )
    })?;
    if !(e_lo.is_finite() && e_hi.is_finite() && e_lo < e_hi) {
        return Err(KvnError::InvalidParameter(format!(
            "empty or non-finite energy range [{e_lo}, {e_hi}]"
        )));
    }
    // Actions carry quadrature error around 1e-14; a ladder much finer than
    // that differentiates noise, so refuse windows it cannot resolve.
    if e_hi - e_lo < 1e-9 * (1.0 + e_hi.abs()) {
        return Err(KvnError::InvalidParameter(format!(
            "energy window [{e_lo}, {e_hi}] is too narrow to resolve a frequency ladder"
        )));
    }
    if n_levels < 5 {
        return Err(KvnError::InvalidParameter(
            "the level table needs at least five energies".into(),
        ));
    }
    for &s in system.separatrices() {
        if e_lo - SEPARATRIX_MARGIN < s && s < e_hi + SEPARATRIX_MARGIN {
            return Err(KvnError::SeparatrixCrossing { energy: s });
        }
    }

    let mass = system.mass();
    let v = pot.v.clone();
    let dv = pot.dv.clone();

    // Locate the well bottom by expanding scans around the origin.
    let mut half = 1.0;
    let q_min = loop {
        let samples = 801;
        let (mut best_q, mut best_v) = (0.0, f64::INFINITY);
        for i in 0..samples {
            let q = -half + 2.0 * half * i as f64 / (samples - 1) as f64;
            let vq = (v)(q);
            if vq < best_v {
                best_v = vq;
                best_q = q;
            }
        }
        if best_q.abs() < 0.95 * half || half > 1e4 {
            break best_q;
        }
        half *= 4.0;
    };
    let v_min = (v)(q_min);
    if e_lo <= v_min + 1e-12 * (1.0 + v_min.abs()) {
        return Err(KvnError::InvalidParameter(format!(
            "energy window starts at {e_lo} but the well bottom is {v_min}"
        )));
    }
    // The angle origin sits at the positive-p crossing of q = 0, so every
    // tabulated orbit must reach q = 0; equivalently V(0) < E throughout.
    if (v)(0.0) >= e_lo {
        return Err(KvnError::ChartDomain(format!(
            "the orbit at energy {e_lo} does not cross q = 0, where the angle origin sits"
        )));
    }

    // Expand outward until the potential climbs past the window (with some
    // headroom); if it never does, the window runs into unbounded motion and
    // there is no turning point to find.
    let v_cap = e_hi + 0.25 * (e_hi - e_lo);
    let mut reach = 0.05 * (1.0 + q_min.abs());
    let (mut lo_edge, mut hi_edge) = (None, None);
    for _ in 0..60 {
        if hi_edge.is_none() && (v)(q_min + reach) >= v_cap {
            hi_edge = Some(q_min + reach);
        }
        if lo_edge.is_none() && (v)(q_min - reach) >= v_cap {
            lo_edge = Some(q_min - reach);
        }
        if lo_edge.is_some() && hi_edge.is_some() {
            break;
        }
        reach *= 1.5;
    }
    let (Some(lo_edge), Some(hi_edge)) = (lo_edge, hi_edge) else {
        return Err(KvnError::SeparatrixCrossing { energy: e_hi });
    };

    let de = (e_hi - e_lo) / (n_levels - 1) as f64;
    let mut tables = Tables {
        mass,
        v,
        dv,
        e_lo,
        e_hi,
        energies: Vec::with_capacity(n_levels),
        actions: Vec::with_capacity(n_levels),
        omegas: Vec::new(),
        action_spline: None,
        scan: (lo_edge, hi_edge),
        v_min,
        v_cap,
    };

    for k in 0..n_levels {
        let e = e_lo + k as f64 * de;
        let (qm, qp) = tables.turning(e);
        let action = tables.action_quadrature(e, qm, qp);
        tables.energies.push(e);
        tables.actions.push(action);
    }
    for k in 1..n_levels {
        if tables.actions[k] <= tables.actions[k - 1] {
            return Err(KvnError::NonMonotoneAction(format!(
                "I({:.6}) = {:.6e} does not exceed I({:.6}) = {:.6e}",
                tables.energies[k],
                tables.actions[k],
                tables.energies[k - 1],
                tables.actions[k - 1]
            )));
        }
    }
    tables.omegas = frequencies(&tables.actions, de)?;
    tables.action_spline = Some(Spline::build(e_lo, de, tables.actions.clone()));

    // Level table with contour samples, before the closures take ownership.
    let mut levels = Vec::with_capacity(n_levels);
    for k in 0..n_levels {
        let e = tables.energies[k];
        let contour = (0..8)
            .map(|j| tables.orbit_point(e, j as f64 * TAU / 8.0))
            .collect();
        levels.push(ActionLevel {
            energy: e,
            action: tables.actions[k],
            frequency: tables.omegas[k],
            period: TAU / tables.omegas[k],
            turning: tables.turning(e),
            contour,
        });
    }
    let table = ActionAngleTable { levels };

    let (q_lo, q_hi) = tables.turning(e_hi);
    let p_max = (2.0 * mass * (e_hi - v_min)).sqrt();
    let i_lo = tables.actions[0];
    let i_hi = *tables.actions.last().unwrap();
    let target =
        PhaseSpaceGrid::action_angle(&[64], &[(i_lo, i_hi)], &[n_levels.max(9)])?;

    let t = Arc::new(tables);
    let tf = t.clone();
    let forward = move |z: &[f64], out: &mut [f64]| {
        let (q, p) = (z[0], z[1]);
        let e = p * p / (2.0 * tf.mass) + (tf.v)(q);
        if e >= tf.v_cap || e <= tf.v_min + 1e-14 * (1.0 + tf.v_min.abs()) {
            out[0] = 0.0;
            out[1] = tf.linear_extension(e);
            return;
        }
        let (qm, qp) = tf.turning(e);
        let mid = 0.5 * (qm + qp);
        let hw = 0.5 * (qp - qm);
        let th0 = ((0.0 - mid) / hw).clamp(-1.0, 1.0).asin();
        let thq = ((q - mid) / hw).clamp(-1.0, 1.0).asin();
        let along = tf.tau(e, qm, qp, th0, thq);
        let time = if p >= 0.0 {
            along
        } else {
            2.0 * tf.tau(e, qm, qp, th0, FRAC_PI_2) - along
        };
        out[0] = (tf.omega_of(e) * time).rem_euclid(TAU);
        out[1] = tf.action_of(e);
    };
    let ti = t.clone();
    let inverse = move |zz: &[f64], out: &mut [f64]| {
        let e = ti.energy_of_action(zz[1]);
        let (q, p) = ti.orbit_point(e, zz[0]);
        out[0] = q;
        out[1] = p;
    };

    let guard = t.clone();
    let pad = 0.02 * (e_hi - e_lo);
    let chart = CanonicalChart::new(
        format!("action_angle({})", system.label()),
        forward,
        inverse,
        vec![(q_lo, q_hi), (-p_max, p_max)],
        &target,
    )?
    .with_sample_guard(move |z| {
        let kinetic = z[1] * z[1] / (2.0 * guard.mass);
        let e = kinetic + (guard.v)(z[0]);
        // Keep finite-difference probes away from the turning circle, where
        // the angle map is a cancellation of two steep factors.
        e > guard.e_lo + pad && e < guard.e_hi - pad && kinetic > 0.02 * (e - guard.v_min)
    });
    Ok((chart, table))
}

/// `dE/dI` on a uniform energy ladder: fourth-order finite differences of
/// the action table, inverted.
fn frequencies(actions: &[f64], de: f64) -> Result<Vec<f64>> {
    let n = actions.len();
    let a = |k: usize| actions[k];
    (0..n)
        .map(|k| {
            let slope = if k >= 2 && k + 2 < n {
                (a(k - 2) - 8.0 * a(k - 1) + 8.0 * a(k + 1) - a(k + 2)) / (12.0 * de)
            } else if k == 0 {
                (-25.0 * a(0) + 48.0 * a(1) - 36.0 * a(2) + 16.0 * a(3) - 3.0 * a(4))
                    / (12.0 * de)
            } else if k == 1 {
                (-3.0 * a(0) - 10.0 * a(1) + 18.0 * a(2) - 6.0 * a(3) + a(4)) / (12.0 * de)
            } else if k == n - 2 {
                (3.0 * a(n - 1) + 10.0 * a(n - 2) - 18.0 * a(n - 3) + 6.0 * a(n - 4)
                    - a(n - 5))
                    / (12.0 * de)
            } else {
                (25.0 * a(n - 1) - 48.0 * a(n - 2) + 36.0 * a(n - 3) - 16.0 * a(n - 4)
                    + 3.0 * a(n - 5))
                    / (12.0 * de)
            };
            if slope <= 0.0 {
                return Err(KvnError::NonMonotoneAction(format!(
                    "dI/dE = {slope:.3e} at level {k} is not positive"
                )));
            }
            Ok(1.0 / slope)
        })
        .collect()
}
