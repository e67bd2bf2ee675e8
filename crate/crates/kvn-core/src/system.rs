//! Named Hamiltonian systems: energy functions with analytic gradients.
//!
//! A system bundles `H(x)` with its exact gradient so evolution generators
//! can be built without finite-difference noise, plus (for separable 1-DOF
//! systems) the potential and its slope, which the action-angle chart
//! machinery integrates over. Known separatrix energies are recorded so
//! chart construction can refuse energy windows that cross one.

use crate::error::{KvnError, Result};
use crate::field::ScalarField;
use crate::grid::PhaseSpaceGrid;
use crate::operator::PhaseOperator;
use std::sync::Arc;

type DynFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type DynGrad = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type Dyn1D = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One-dimensional potential and its derivative.
#[derive(Clone)]
pub struct Potential {
    pub v: Dyn1D,
    pub dv: Dyn1D,
}

#[derive(Clone)]
pub struct HamiltonianSystem {
    label: String,
    dof: usize,
    mass: f64,
    h: DynFn,
    grad: DynGrad,
    potential: Option<Potential>,
    separatrices: Vec<f64>,
}

impl HamiltonianSystem {
    /// `H = p^2 / 2m + m w^2 q^2 / 2`.
    pub fn harmonic_oscillator(mass: f64, omega: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0 && omega.is_finite() && omega > 0.0) {
            return Err(KvnError::InvalidParameter(format!(
                "harmonic oscillator needs positive finite mass and frequency, got m={mass}, w={omega}"
            )));
        }
        let k = mass * omega * omega;
        Ok(HamiltonianSystem {
            label: "harmonic_oscillator".into(),
            dof: 1,
            mass,
            h: Arc::new(move |x| 0.5 * x[1] * x[1] / mass + 0.5 * k * x[0] * x[0]),
            grad: Arc::new(move |x, out| {
                out[0] = k * x[0];
                out[1] = x[1] / mass;
            }),
            potential: Some(Potential {
                v: Arc::new(move |q| 0.5 * k * q * q),
                dv: Arc::new(move |q| k * q),
            }),
            separatrices: Vec::new(),
        })
    }

    /// `H = p^2 / 2 - cos q` (unit mass and length); the libration/rotation
    /// separatrix sits at `E = 1`.
    pub fn pendulum() -> Self {
        HamiltonianSystem {
            label: "pendulum".into(),
            dof: 1,
            mass: 1.0,
            h: Arc::new(|x| 0.5 * x[1] * x[1] - x[0].cos()),
            grad: Arc::new(|x, out| {
                out[0] = x[0].sin();
                out[1] = x[1];
            }),
            potential: Some(Potential {
                v: Arc::new(|q| -q.cos()),
                dv: Arc::new(|q| q.sin()),
            }),
            separatrices: vec![1.0],
        }
    }

    /// `H = sum_i w_i I_i` on action-angle axes `(phi_i, I_i)`.
    pub fn linear_actions(omegas: &[f64]) -> Result<Self> {
        if omegas.is_empty() || omegas.iter().any(|w| !w.is_finite()) {
            return Err(KvnError::InvalidParameter(
                "linear_actions needs a non-empty list of finite frequencies".into(),
            ));
        }
        let ws = omegas.to_vec();
        let ws2 = ws.clone();
        Ok(HamiltonianSystem {
            label: "linear_actions".into(),
            dof: ws.len(),
            mass: 1.0,
            h: Arc::new(move |x| ws.iter().enumerate().map(|(i, w)| w * x[2 * i + 1]).sum()),
            grad: Arc::new(move |x, out| {
                out[..x.len()].fill(0.0);
                for (i, w) in ws2.iter().enumerate() {
                    out[2 * i + 1] = *w;
                }
            }),
            potential: None,
            separatrices: Vec::new(),
        })
    }

    pub fn custom(
        label: impl Into<String>,
        dof: usize,
        mass: f64,
        h: DynFn,
        grad: DynGrad,
        potential: Option<Potential>,
        separatrices: Vec<f64>,
    ) -> Result<Self> {
        if dof == 0 || !(mass.is_finite() && mass > 0.0) {
            return Err(KvnError::InvalidParameter(
                "custom system needs dof >= 1 and positive finite mass".into(),
            ));
        }
        Ok(HamiltonianSystem {
            label: label.into(),
            dof,
            mass,
            h,
            grad,
            potential,
            separatrices,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn potential(&self) -> Option<&Potential> {
        self.potential.as_ref()
    }

    pub fn separatrices(&self) -> &[f64] {
        &self.separatrices
    }

    pub fn energy_at(&self, x: &[f64]) -> f64 {
        (self.h)(x)
    }

    pub fn gradient_at(&self, x: &[f64], out: &mut [f64]) {
        (self.grad)(x, out)
    }

    fn check_grid(&self, grid: &Arc<PhaseSpaceGrid>) -> Result<()> {
        if grid.dof() != self.dof {
            return Err(KvnError::GridMismatch(format!(
                "system {} has {} degrees of freedom but the grid has {}",
                self.label,
                self.dof,
                grid.dof()
            )));
        }
        Ok(())
    }

    /// `H` sampled on a grid.
    pub fn hamiltonian_field(&self, grid: &Arc<PhaseSpaceGrid>) -> Result<ScalarField> {
        self.check_grid(grid)?;
        Ok(ScalarField::from_fn(grid, |x| (self.h)(x)))
    }

    /// Evolution generator `-i {., H}` with analytic multiplier gradients.
    pub fn liouvillian(&self, grid: &Arc<PhaseSpaceGrid>) -> Result<PhaseOperator> {
        self.check_grid(grid)?;
        let n = grid.num_axes();
        let mut buf = vec![0.0; n];
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); n];
        let mut pt = vec![0.0; n];
        for i in 0..grid.len() {
            grid.point(i, &mut pt);
            (self.grad)(&pt, &mut buf);
            for a in 0..n {
                columns[a].push(buf[a]);
            }
        }
        let grads = columns
            .into_iter()
            .map(|c| ScalarField::from_values(grid, c))
            .collect::<Result<Vec<_>>>()?;
        PhaseOperator::flow_generator_with_gradients(grid, grads)
    }

    /// Multiplication by `H`.
    pub fn energy_multiplier(&self, grid: &Arc<PhaseSpaceGrid>) -> Result<PhaseOperator> {
        PhaseOperator::multiply(&self.hamiltonian_field(grid)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::StateFunction;
    use crate::grid::PhaseSpaceGrid;

    #[test]
    fn analytic_and_sampled_gradient_routes_agree_on_polynomials() {
        let g = PhaseSpaceGrid::periodic_box(&[5.0, 5.0], &[64, 64]).unwrap();
        let sys = HamiltonianSystem::harmonic_oscillator(1.0, 1.0).unwrap();
        let h = sys.hamiltonian_field(&g).unwrap();
        let analytic = sys.liouvillian(&g).unwrap();
        let sampled = PhaseOperator::flow_generator(&h).unwrap();
        let psi = StateFunction::random_localized(&g, 17);
        let a = analytic.apply(&psi).unwrap();
        let b = sampled.apply(&psi).unwrap();
        let diff: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-11, "diff {diff:.3e}");
    }

    #[test]
    fn pendulum_energies_and_separatrix() {
        let sys = HamiltonianSystem::pendulum();
        assert!((sys.energy_at(&[0.0, 0.0]) + 1.0).abs() < 1e-15);
        assert!((sys.energy_at(&[std::f64::consts::PI, 0.0]) - 1.0).abs() < 1e-12);
        assert_eq!(sys.separatrices(), &[1.0]);
        let v = sys.potential().unwrap();
        assert!(((v.dv)(0.3) - 0.3f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_parameters_and_wrong_dof_grid() {
        assert!(HamiltonianSystem::harmonic_oscillator(-1.0, 1.0).is_err());
        assert!(HamiltonianSystem::harmonic_oscillator(1.0, 0.0).is_err());
        let sys = HamiltonianSystem::linear_actions(&[1.0, 0.5]).unwrap();
        let g = PhaseSpaceGrid::torus_2d(16).unwrap();
        assert!(sys.hamiltonian_field(&g).is_err());
    }
}
