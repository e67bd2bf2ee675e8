//! Operators on phase-space states.
//!
//! Every classical observable `f` acts on states two ways: as pointwise
//! multiplication `M_f`, and through its flow generator
//! `G_f psi = -i {psi, f}` built from the Poisson bracket over canonical
//! axis pairs. These satisfy an exact operator algebra:
//!
//! * product rule: `G_{fg} = M_f G_g + M_g G_f`
//! * mixed commutators: `[G_f, M_g] = [M_f, G_g] = i M_{{f,g}}`
//! * bracket generator: `G_{{f,g}} = -i [G_f, G_g]`
//! * multipliers commute: `[M_f, M_g] = 0`
//!
//! [`algebra_check`] verifies all four stochastically on seeded localized
//! states. The flow generator of a Hamiltonian is the evolution generator:
//! states evolve by `exp(-i G_H t)`, which transports amplitudes along the
//! classical flow and preserves the Born density rule.
//!
//! Multiplier gradient fields are cached at construction with the local
//! (never-wrapping) derivative rule; state derivatives inside `apply` use the
//! grid's native rule. See the `deriv` module docs for why the two rules
//! differ.

use crate::deriv;
use crate::error::{KvnError, Result};
use crate::field::{weighted_norm_sq, ScalarField, StateFunction};
use crate::grid::PhaseSpaceGrid;
use num_complex::Complex64 as C64;
use std::sync::Arc;

/// Matrix-free linear operator on flat complex vectors, with the quadrature
/// weights that define the inner product it should be measured against.
pub trait LinearOp: Send + Sync {
    fn dim(&self) -> usize;
    fn matvec(&self, input: &[C64], out: &mut [C64]);
    fn weights(&self) -> &[f64];
}

/// Poisson bracket `{f, g}` over the canonical `(2i, 2i+1)` axis pairs,
/// using local-rule gradients of both fields (exact for polynomials).
pub fn poisson_bracket(f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    let grid = f.grid();
    if !grid.same_geometry(g.grid()) {
        return Err(KvnError::GridMismatch(
            "poisson_bracket operands live on different grids".into(),
        ));
    }
    let mut out = vec![0.0; grid.len()];
    for pair in 0..grid.dof() {
        let (qa, pa) = (2 * pair, 2 * pair + 1);
        let fq = f.derivative_local(qa)?;
        let fp = f.derivative_local(pa)?;
        let gq = g.derivative_local(qa)?;
        let gp = g.derivative_local(pa)?;
        for i in 0..out.len() {
            out[i] += fq.values()[i] * gp.values()[i] - fp.values()[i] * gq.values()[i];
        }
    }
    ScalarField::from_values(grid, out)
}

#[derive(Clone)]
enum OpKind {
    Identity,
    /// Pointwise multiplication by a real field.
    Multiply(Arc<ScalarField>),
    /// `scale * d/dx_axis` under the grid's native rule.
    Derivative { axis: usize, scale: C64 },
    /// `-i {., f}` with cached multiplier gradients, one per axis.
    FlowGenerator {
        grads: Arc<Vec<ScalarField>>,
        /// Axes whose paired gradient is not identically zero (the only ones
        /// whose state derivative is ever needed).
        active_axes: Arc<Vec<usize>>,
    },
    Sum(Arc<Vec<(C64, PhaseOperator)>>),
    Product(Arc<PhaseOperator>, Arc<PhaseOperator>),
}

/// A linear operator on states over one grid, composable by sums, products,
/// and commutators.
#[derive(Clone)]
pub struct PhaseOperator {
    grid: Arc<PhaseSpaceGrid>,
    kind: OpKind,
}

impl PhaseOperator {
    pub fn identity(grid: &Arc<PhaseSpaceGrid>) -> Self {
        PhaseOperator {
            grid: grid.clone(),
            kind: OpKind::Identity,
        }
    }

    /// Multiplication by a real observable field.
    pub fn multiply(f: &ScalarField) -> Result<Self> {
        for (i, v) in f.values().iter().enumerate() {
            if !v.is_finite() {
                return Err(KvnError::NonFinite {
                    index: i,
                    context: "multiplier field".into(),
                });
            }
        }
        Ok(PhaseOperator {
            grid: f.grid().clone(),
            kind: OpKind::Multiply(Arc::new(f.clone())),
        })
    }

    /// `scale * d/dx_axis` under the grid's native derivative rule.
    pub fn derivative(grid: &Arc<PhaseSpaceGrid>, axis: usize, scale: C64) -> Result<Self> {
        if axis >= grid.num_axes() {
            return Err(KvnError::InvalidParameter(format!(
                "axis {axis} out of range for a {}-axis grid",
                grid.num_axes()
            )));
        }
        Ok(PhaseOperator {
            grid: grid.clone(),
            kind: OpKind::Derivative { axis, scale },
        })
    }

    /// Flow generator `-i {., f}`, differentiating the sampled field with the
    /// local rule to get its multiplier gradients.
    pub fn flow_generator(f: &ScalarField) -> Result<Self> {
        let grads = (0..f.grid().num_axes())
            .map(|a| f.derivative_local(a))
            .collect::<Result<Vec<_>>>()?;
        Self::flow_generator_with_gradients(f.grid(), grads)
    }

    /// Flow generator from externally supplied gradient fields (e.g. analytic
    /// derivatives of a known Hamiltonian), one per axis.
    pub fn flow_generator_with_gradients(
        grid: &Arc<PhaseSpaceGrid>,
        grads: Vec<ScalarField>,
    ) -> Result<Self> {
        if grads.len() != grid.num_axes() {
            return Err(KvnError::InvalidParameter(format!(
                "need one gradient field per axis ({}), got {}",
                grid.num_axes(),
                grads.len()
            )));
        }
        for (a, gfield) in grads.iter().enumerate() {
            if !grid.same_geometry(gfield.grid()) {
                return Err(KvnError::GridMismatch(format!(
                    "gradient field for axis {a} lives on a different grid"
                )));
            }
            for (i, v) in gfield.values().iter().enumerate() {
                if !v.is_finite() {
                    return Err(KvnError::NonFinite {
                        index: i,
                        context: format!("gradient field for axis {a}"),
                    });
                }
            }
        }
        // The derivative along an axis is needed only when the *paired*
        // gradient has support.
        let active_axes = (0..grid.num_axes())
            .filter(|&a| {
                let paired = grid.paired_axis(a);
                grads[paired].values().iter().any(|&v| v != 0.0)
            })
            .collect();
        Ok(PhaseOperator {
            grid: grid.clone(),
            kind: OpKind::FlowGenerator {
                grads: Arc::new(grads),
                active_axes: Arc::new(active_axes),
            },
        })
    }

    pub fn sum(terms: Vec<(C64, PhaseOperator)>) -> Result<Self> {
        let grid = match terms.first() {
            Some((_, op)) => op.grid.clone(),
            None => {
                return Err(KvnError::InvalidParameter(
                    "operator sum needs at least one term".into(),
                ))
            }
        };
        for (_, op) in &terms {
            if !grid.same_geometry(&op.grid) {
                return Err(KvnError::GridMismatch(
                    "operator sum terms live on different grids".into(),
                ));
            }
        }
        Ok(PhaseOperator {
            grid,
            kind: OpKind::Sum(Arc::new(terms)),
        })
    }

    /// `self` applied after `rhs`.
    pub fn then_after(&self, rhs: &PhaseOperator) -> Result<Self> {
        if !self.grid.same_geometry(&rhs.grid) {
            return Err(KvnError::GridMismatch(
                "operator product factors live on different grids".into(),
            ));
        }
        Ok(PhaseOperator {
            grid: self.grid.clone(),
            kind: OpKind::Product(Arc::new(self.clone()), Arc::new(rhs.clone())),
        })
    }

    pub fn commutator(&self, other: &PhaseOperator) -> Result<Self> {
        let ab = self.then_after(other)?;
        let ba = other.then_after(self)?;
        Self::sum(vec![(C64::new(1.0, 0.0), ab), (C64::new(-1.0, 0.0), ba)])
    }

    pub fn scaled(&self, c: C64) -> Self {
        PhaseOperator {
            grid: self.grid.clone(),
            kind: OpKind::Sum(Arc::new(vec![(c, self.clone())])),
        }
    }

    pub fn add(&self, other: &PhaseOperator) -> Result<Self> {
        Self::sum(vec![
            (C64::new(1.0, 0.0), self.clone()),
            (C64::new(1.0, 0.0), other.clone()),
        ])
    }

    pub fn grid(&self) -> &Arc<PhaseSpaceGrid> {
        &self.grid
    }

    /// Apply with input validation.
    pub fn apply(&self, psi: &StateFunction) -> Result<StateFunction> {
        if !self.grid.same_geometry(psi.grid()) {
            return Err(KvnError::GridMismatch(
                "state lives on a different grid than the operator".into(),
            ));
        }
        psi.check_finite("operator input state")?;
        let mut out = vec![C64::new(0.0, 0.0); self.grid.len()];
        self.apply_raw(psi.values(), &mut out);
        StateFunction::from_values(&self.grid, out)
    }

    fn apply_raw(&self, input: &[C64], out: &mut [C64]) {
        match &self.kind {
            OpKind::Identity => out.copy_from_slice(input),
            OpKind::Multiply(f) => {
                for i in 0..input.len() {
                    out[i] = input[i] * f.values()[i];
                }
            }
            OpKind::Derivative { axis, scale } => {
                let d = deriv::derivative_c64(&self.grid, input, *axis);
                for i in 0..input.len() {
                    out[i] = d[i] * scale;
                }
            }
            OpKind::FlowGenerator { grads, active_axes } => {
                out.fill(C64::new(0.0, 0.0));
                for &a in active_axes.iter() {
                    let d = deriv::derivative_c64(&self.grid, input, a);
                    let paired = self.grid.paired_axis(a);
                    let multiplier = grads[paired].values();
                    // {psi, f} picks up +df/dp on q-axes and -df/dq on p-axes;
                    // the overall generator carries a factor -i.
                    let sign = if self.grid.is_configuration_axis(a) {
                        1.0
                    } else {
                        -1.0
                    };
                    for i in 0..out.len() {
                        let coeff = sign * multiplier[i];
                        // -i * coeff * d
                        out[i] += C64::new(coeff * d[i].im, -coeff * d[i].re);
                    }
                }
            }
            OpKind::Sum(terms) => {
                out.fill(C64::new(0.0, 0.0));
                let mut scratch = vec![C64::new(0.0, 0.0); input.len()];
                for (c, op) in terms.iter() {
                    op.apply_raw(input, &mut scratch);
                    for i in 0..out.len() {
                        out[i] += c * scratch[i];
                    }
                }
            }
            OpKind::Product(a, b) => {
                let mut scratch = vec![C64::new(0.0, 0.0); input.len()];
                b.apply_raw(input, &mut scratch);
                a.apply_raw(&scratch, out);
            }
        }
    }

    /// `<psi| A psi> / <psi|psi>`.
    pub fn expectation(&self, psi: &StateFunction) -> Result<C64> {
        let norm_sq = psi.norm_squared();
        if !(norm_sq.is_finite() && norm_sq > 1e-300) {
            return Err(KvnError::ZeroState {
                norm: norm_sq.sqrt(),
            });
        }
        let applied = self.apply(psi)?;
        Ok(psi.inner_product(&applied)? / norm_sq)
    }

    /// Worst relative asymmetry `|<A psi_i | psi_j> - <psi_i | A psi_j>|`
    /// over a seeded set of localized probe states, scaled by the largest
    /// image norm. Cheap screen before trusting a symmetric eigensolver.
    pub fn self_adjointness_residual(&self, n_probes: usize, seed: u64) -> Result<f64> {
        let probes: Vec<StateFunction> = (0..n_probes.max(2))
            .map(|k| StateFunction::random_localized(&self.grid, seed.wrapping_add(k as u64)))
            .collect();
        let images: Vec<StateFunction> = probes
            .iter()
            .map(|p| self.apply(p))
            .collect::<Result<Vec<_>>>()?;
        let scale = images
            .iter()
            .map(|im| im.norm())
            .fold(1e-300_f64, f64::max);
        let mut worst = 0.0f64;
        for i in 0..probes.len() {
            for j in i..probes.len() {
                let lhs = images[i].inner_product(&probes[j])?;
                let rhs = probes[i].inner_product(&images[j])?;
                worst = worst.max((lhs - rhs).norm() / scale);
            }
        }
        Ok(worst)
    }
}

impl LinearOp for PhaseOperator {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn matvec(&self, input: &[C64], out: &mut [C64]) {
        self.apply_raw(input, out);
    }

    fn weights(&self) -> &[f64] {
        self.grid.point_weights()
    }
}

/// Relative deviation between two operator images of the same state.
fn relative_deviation(w: &[f64], lhs: &[C64], rhs: &[C64]) -> f64 {
    let mut diff = vec![C64::new(0.0, 0.0); lhs.len()];
    for i in 0..lhs.len() {
        diff[i] = lhs[i] - rhs[i];
    }
    let d = weighted_norm_sq(w, &diff).sqrt();
    let scale = weighted_norm_sq(w, lhs)
        .max(weighted_norm_sq(w, rhs))
        .sqrt()
        .max(1e-300);
    d / scale
}

/// Residuals of the multiplication/flow-generator operator algebra, each the
/// worst relative deviation seen over the probe states.
#[derive(Debug, Clone, Copy)]
pub struct AlgebraReport {
    /// `G_{fg}` vs `M_f G_g + M_g G_f`.
    pub product_rule: f64,
    /// `[G_f, M_g]` vs `i M_{{f,g}}`.
    pub commutator_flow_multiplier: f64,
    /// `[M_f, G_g]` vs `i M_{{f,g}}`.
    pub commutator_multiplier_flow: f64,
    /// `G_{{f,g}}` vs `-i [G_f, G_g]`.
    pub bracket_generator: f64,
    /// `[M_f, M_g]` vs zero, relative to `|M_f M_g psi|`.
    pub multiplier_commutativity: f64,
}

impl AlgebraReport {
    pub fn worst(&self) -> f64 {
        self.product_rule
            .max(self.commutator_flow_multiplier)
            .max(self.commutator_multiplier_flow)
            .max(self.bracket_generator)
            .max(self.multiplier_commutativity)
    }
}

/// Stochastically verify the operator algebra for a pair of observables on
/// their grid, using seeded localized probe states.
pub fn algebra_check(
    f: &ScalarField,
    g: &ScalarField,
    n_states: usize,
    seed: u64,
) -> Result<AlgebraReport> {
    let grid = f.grid();
    if !grid.same_geometry(g.grid()) {
        return Err(KvnError::GridMismatch(
            "algebra_check observables live on different grids".into(),
        ));
    }
    let w = grid.point_weights();

    let mf = PhaseOperator::multiply(f)?;
    let mg = PhaseOperator::multiply(g)?;
    let gf = PhaseOperator::flow_generator(f)?;
    let gg = PhaseOperator::flow_generator(g)?;

    let fg_field = ScalarField::from_values(
        grid,
        f.values()
            .iter()
            .zip(g.values())
            .map(|(&a, &b)| a * b)
            .collect(),
    )?;
    let bracket = poisson_bracket(f, g)?;

    let g_of_product = PhaseOperator::flow_generator(&fg_field)?;
    let product_rhs = PhaseOperator::sum(vec![
        (C64::new(1.0, 0.0), mf.then_after(&gg)?),
        (C64::new(1.0, 0.0), mg.then_after(&gf)?),
    ])?;

    let comm_gf_mg = gf.commutator(&mg)?;
    let comm_mf_gg = mf.commutator(&gg)?;
    let i_m_bracket = PhaseOperator::multiply(&bracket)?.scaled(C64::new(0.0, 1.0));

    let g_of_bracket = PhaseOperator::flow_generator(&bracket)?;
    let neg_i_comm = gf.commutator(&gg)?.scaled(C64::new(0.0, -1.0));

    let mf_mg = mf.then_after(&mg)?;
    let comm_mf_mg = mf.commutator(&mg)?;

    let mut report = AlgebraReport {
        product_rule: 0.0,
        commutator_flow_multiplier: 0.0,
        commutator_multiplier_flow: 0.0,
        bracket_generator: 0.0,
        multiplier_commutativity: 0.0,
    };

    for k in 0..n_states {
        let psi = StateFunction::random_localized(grid, seed.wrapping_add(k as u64));

        let lhs = g_of_product.apply(&psi)?;
        let rhs = product_rhs.apply(&psi)?;
        report.product_rule = report
            .product_rule
            .max(relative_deviation(w, lhs.values(), rhs.values()));

        let target = i_m_bracket.apply(&psi)?;
        let lhs = comm_gf_mg.apply(&psi)?;
        report.commutator_flow_multiplier = report
            .commutator_flow_multiplier
            .max(relative_deviation(w, lhs.values(), target.values()));
        let lhs = comm_mf_gg.apply(&psi)?;
        report.commutator_multiplier_flow = report
            .commutator_multiplier_flow
            .max(relative_deviation(w, lhs.values(), target.values()));

        let lhs = g_of_bracket.apply(&psi)?;
        let rhs = neg_i_comm.apply(&psi)?;
        report.bracket_generator = report
            .bracket_generator
            .max(relative_deviation(w, lhs.values(), rhs.values()));

        let comm = comm_mf_mg.apply(&psi)?;
        let scale = weighted_norm_sq(w, mf_mg.apply(&psi)?.values())
            .sqrt()
            .max(1e-300);
        report.multiplier_commutativity = report
            .multiplier_commutativity
            .max(weighted_norm_sq(w, comm.values()).sqrt() / scale);
    }
    Ok(report)
}
