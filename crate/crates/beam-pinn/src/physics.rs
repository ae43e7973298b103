//! Beam problem definition, exact-solution oracle, PDE residual, the loss
//! terms, and the adaptive sigmoid weighting.
//!
//! The governing equation is `w_tt + c^2 w_xxxx = 0` on `[0,T] x [0,L]` with
//! clamped ends and modal initial conditions, so the exact solution is a
//! modal superposition and serves as the validation oracle.

use crate::ad::{Jet, Tape};
use crate::model::{sin_pi, DerivativeRequest, HybridModel, ModelError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Clamp floor applied before `log10` in the adaptive weight law.
pub const WEIGHT_CLAMP_FLOOR: f64 = 1e-30;
/// Default denominator of the weight scale rule `1 + N / scale_const`.
pub const DEFAULT_SCALE_CONST: f64 = 130.0;

/// Points processed per tape-reuse shard; fixed so parallel reductions are
/// independent of thread count.
const SHARD: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum PhysicsError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("model/problem mismatch: {0}")]
    Mismatch(String),
    #[error("empty point set for active loss term `{0}`")]
    EmptyPointSet(&'static str),
    #[error("non-finite loss (divergence)")]
    NonFiniteLoss,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    #[serde(rename = "E")]
    pub youngs_modulus: f64,
    #[serde(rename = "I")]
    pub second_moment: f64,
    pub rho: f64,
    #[serde(rename = "A")]
    pub cross_section: f64,
}

/// The Euler-Bernoulli problem: geometry, wave speed, and modal initial
/// conditions `w0(x) = sum alpha_m sin(m pi x / L)`,
/// `v0(x) = sum beta_m sin(m pi x / L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamProblem {
    #[serde(rename = "L")]
    pub beam_length: f64,
    #[serde(rename = "T")]
    pub time_horizon: f64,
    #[serde(rename = "c")]
    pub wave_speed: f64,
    pub ic_disp: Vec<f64>,
    pub ic_vel: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<Material>,
}

impl Default for BeamProblem {
    /// Single dominant mode on `[0,1] x [0,10]`.
    fn default() -> Self {
        BeamProblem {
            beam_length: 10.0,
            time_horizon: 1.0,
            wave_speed: 1.0,
            ic_disp: vec![1.0],
            ic_vel: vec![],
            material: None,
        }
    }
}

impl BeamProblem {
    /// Two-mode preset for harder tests: alpha_1 = 1, alpha_3 = 0.3.
    pub fn two_mode() -> Self {
        BeamProblem { ic_disp: vec![1.0, 0.0, 0.3], ..BeamProblem::default() }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if self.beam_length <= 0.0 || self.time_horizon <= 0.0 || self.wave_speed <= 0.0 {
            return Err(PhysicsError::InvalidProblem(format!(
                "L, T, c must be positive (L={}, T={}, c={})",
                self.beam_length, self.time_horizon, self.wave_speed
            )));
        }
        if self.ic_disp.iter().all(|&a| a == 0.0) && self.ic_vel.iter().all(|&b| b == 0.0) {
            return Err(PhysicsError::InvalidProblem(
                "at least one modal initial-condition coefficient must be nonzero".into(),
            ));
        }
        if let Some(m) = &self.material {
            let c2 = self.wave_speed * self.wave_speed;
            let derived = m.youngs_modulus * m.second_moment / (m.rho * m.cross_section);
            if (c2 - derived).abs() > 1e-12 * c2 {
                return Err(PhysicsError::InvalidProblem(format!(
                    "material parameters give c^2 = {derived}, expected {c2}"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<BeamProblem, PhysicsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PhysicsError::InvalidProblem(format!("{}: {e}", path.display())))?;
        let p: BeamProblem = serde_json::from_str(&text)
            .map_err(|e| PhysicsError::InvalidProblem(format!("{}: {e}", path.display())))?;
        p.validate()?;
        Ok(p)
    }

    fn wave_number(&self, m: usize) -> f64 {
        m as f64 * std::f64::consts::PI / self.beam_length
    }

    fn angular_frequency(&self, m: usize) -> f64 {
        let k = self.wave_number(m);
        k * k * self.wave_speed
    }

    /// Closed-form modal superposition solution.
    pub fn exact_solution(&self, t: f64, x: f64) -> f64 {
        let u = x / self.beam_length;
        let mut w = 0.0;
        for (i, &alpha) in self.ic_disp.iter().enumerate() {
            if alpha != 0.0 {
                let omega = self.angular_frequency(i + 1);
                w += alpha * (omega * t).cos() * sin_pi((i + 1) as f64 * u);
            }
        }
        for (i, &beta) in self.ic_vel.iter().enumerate() {
            if beta != 0.0 {
                let omega = self.angular_frequency(i + 1);
                w += beta / omega * (omega * t).sin() * sin_pi((i + 1) as f64 * u);
            }
        }
        w
    }

    /// Initial displacement `w0(x)`.
    pub fn initial_displacement(&self, x: f64) -> f64 {
        let u = x / self.beam_length;
        self.ic_disp
            .iter()
            .enumerate()
            .map(|(i, &a)| a * sin_pi((i + 1) as f64 * u))
            .sum()
    }

    /// Initial velocity `v0(x)`.
    pub fn initial_velocity(&self, x: f64) -> f64 {
        let u = x / self.beam_length;
        self.ic_vel
            .iter()
            .enumerate()
            .map(|(i, &b)| b * sin_pi((i + 1) as f64 * u))
            .sum()
    }
}

/// Optional regularization term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    None,
    /// Mean of squared MLP weight-matrix entries.
    WeightDecay,
}

/// The loss terms, their adaptive weights, and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_pde: f64,
    pub l_ic: f64,
    pub l_ic_t: f64,
    pub l_bc: f64,
    pub l_reg: f64,
    pub w_pde: f64,
    pub w_ic: f64,
    pub w_ic_t: f64,
    pub w_bc: f64,
    pub lambda_reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Recomputes the weighted total from the stored fields.
    pub fn recompute_total(&self) -> f64 {
        self.w_pde * self.l_pde
            + self.w_ic * self.l_ic
            + self.w_ic_t * self.l_ic_t
            + self.w_bc * self.l_bc
            + self.lambda_reg * self.l_reg
    }

    pub fn is_finite(&self) -> bool {
        [self.l_pde, self.l_ic, self.l_ic_t, self.l_bc, self.l_reg, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Borrowed views of the point sets a loss evaluation runs over.
#[derive(Clone, Copy, Debug)]
pub struct LossPoints<'a> {
    pub pde: &'a [(f64, f64)],
    pub ic: &'a [f64],
    pub bc: &'a [f64],
}

fn check_compatible(model: &HybridModel, problem: &BeamProblem) -> Result<(), PhysicsError> {
    let cfg = model.config();
    if cfg.wave_speed != problem.wave_speed {
        return Err(PhysicsError::Mismatch(format!(
            "wave speed: model c = {}, problem c = {}",
            cfg.wave_speed, problem.wave_speed
        )));
    }
    if cfg.beam_length != problem.beam_length {
        return Err(PhysicsError::Mismatch(format!(
            "beam length: model L = {}, problem L = {}",
            cfg.beam_length, problem.beam_length
        )));
    }
    Ok(())
}

/// PDE residual `w_tt + c^2 w_xxxx` at one point.
pub fn pde_residual(
    model: &HybridModel,
    problem: &BeamProblem,
    t: f64,
    x: f64,
) -> Result<f64, PhysicsError> {
    check_compatible(model, problem)?;
    let b = model.eval_jets(t, x, DerivativeRequest::residual())?;
    Ok(b.w_tt + problem.wave_speed * problem.wave_speed * b.w_xxxx)
}

/// Unweighted loss terms over the given point sets. Weights and total are
/// left zero; apply [`adaptive_weights`] to fill them.
pub fn loss_components(
    model: &HybridModel,
    problem: &BeamProblem,
    points: LossPoints<'_>,
    reg: RegKind,
) -> Result<LossBreakdown, PhysicsError> {
    check_compatible(model, problem)?;
    if points.pde.is_empty() {
        return Err(PhysicsError::EmptyPointSet("pde"));
    }
    if points.ic.is_empty() {
        return Err(PhysicsError::EmptyPointSet("ic"));
    }
    if points.bc.is_empty() {
        return Err(PhysicsError::EmptyPointSet("bc"));
    }
    let c2 = problem.wave_speed * problem.wave_speed;

    let sum_r2: f64 = points
        .pde
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut acc = 0.0;
            for &(t, x) in chunk {
                let b = model.eval_jets(t, x, DerivativeRequest::residual()).unwrap();
                let r = b.w_tt + c2 * b.w_xxxx;
                acc += r * r;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();

    let mut sum_ic = 0.0;
    let mut sum_ic_t = 0.0;
    for &x in points.ic {
        let b = model.eval_jets(0.0, x, DerivativeRequest::initial())?;
        let e = b.w - problem.initial_displacement(x);
        let et = b.w_t - problem.initial_velocity(x);
        sum_ic += e * e;
        sum_ic_t += et * et;
    }

    let mut sum_bc = 0.0;
    for &t in points.bc {
        let w0 = model.eval(t, 0.0);
        let wl = model.eval(t, problem.beam_length);
        sum_bc += w0 * w0 + wl * wl;
    }

    let mut lb = LossBreakdown {
        l_pde: sum_r2 / points.pde.len() as f64,
        l_ic: sum_ic / points.ic.len() as f64,
        l_ic_t: sum_ic_t / points.ic.len() as f64,
        l_bc: sum_bc / points.bc.len() as f64,
        ..LossBreakdown::default()
    };
    if reg == RegKind::WeightDecay {
        lb.l_reg = weight_penalty(model).0;
    }
    if !lb.is_finite() {
        return Err(PhysicsError::NonFiniteLoss);
    }
    Ok(lb)
}

/// Mean of squared MLP weight-matrix entries, plus the entry count.
fn weight_penalty(model: &HybridModel) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for range in model.weight_matrix_ranges() {
        for i in range {
            let w = model.params()[i];
            sum += w * w;
            count += 1;
        }
    }
    (sum / count as f64, count)
}

/// The sigmoid weight law: `w = scale / (1 + exp(-log10(max(l, floor))))`
/// with `scale = 1 + N / scale_const`. Weights are constants for gradient
/// purposes.
pub fn adaptive_weight(loss: f64, n_harmonics: usize, scale_const: f64) -> f64 {
    let scale = 1.0 + n_harmonics as f64 / scale_const;
    let l = loss.max(WEIGHT_CLAMP_FLOOR);
    scale / (1.0 + (-l.log10()).exp())
}

/// Fills the weights of `losses` from the weight law and recomputes the total.
pub fn adaptive_weights(
    mut losses: LossBreakdown,
    n_harmonics: usize,
    scale_const: f64,
    lambda_reg: f64,
) -> LossBreakdown {
    losses.w_pde = adaptive_weight(losses.l_pde, n_harmonics, scale_const);
    losses.w_ic = adaptive_weight(losses.l_ic, n_harmonics, scale_const);
    losses.w_ic_t = adaptive_weight(losses.l_ic_t, n_harmonics, scale_const);
    losses.w_bc = adaptive_weight(losses.l_bc, n_harmonics, scale_const);
    losses.lambda_reg = lambda_reg;
    losses.total = losses.recompute_total();
    losses
}

/// Fixed weights for the four physics terms, in `pde, ic, ic_t, bc` order.
pub type FixedWeights = [f64; 4];

struct Partial {
    sum_r2: f64,
    grad_pde: Vec<f64>,
}

/// The weighted total loss and its exact parameter gradient.
///
/// Per collocation point one order-2 t-tape and one order-4 x-tape are
/// recorded; per initial point one order-1 t-tape serves both initial terms.
/// Boundary terms are exactly zero by construction (the architecture pins
/// `w(t,0) = w(t,L) = 0`), so their gradient contribution vanishes and no
/// boundary tapes are recorded. Shards are reduced in fixed order, so the
/// result is independent of thread count.
///
/// When `fixed_weights` is `None` the weights come from the current losses;
/// either way they are held constant in the gradient.
pub fn total_loss(
    model: &HybridModel,
    problem: &BeamProblem,
    points: LossPoints<'_>,
    scale_const: f64,
    lambda_reg: f64,
    fixed_weights: Option<FixedWeights>,
) -> Result<(LossBreakdown, Vec<f64>), PhysicsError> {
    check_compatible(model, problem)?;
    if points.pde.is_empty() {
        return Err(PhysicsError::EmptyPointSet("pde"));
    }
    if points.ic.is_empty() {
        return Err(PhysicsError::EmptyPointSet("ic"));
    }
    if points.bc.is_empty() {
        return Err(PhysicsError::EmptyPointSet("bc"));
    }

    let n_params = model.config().n_params();
    let c2 = problem.wave_speed * problem.wave_speed;
    let n_pde = points.pde.len() as f64;
    let n_ic = points.ic.len() as f64;

    // PDE term, sharded. Each shard reuses its tape allocation.
    let partials: Vec<Partial> = points
        .pde
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut tape = Tape::new(n_params);
            let mut part = Partial { sum_r2: 0.0, grad_pde: vec![0.0; n_params] };
            for &(t, x) in chunk {
                tape.clear();
                let wt = model
                    .eval_on_tape(&mut tape, Jet::seed(t, 2).unwrap(), Jet::constant(x, 2).unwrap())
                    .unwrap();
                let w_tt = tape.jet(wt).derivative(2).unwrap();
                let t_len = tape.len();
                // the x-tape shares the same arena; node ids stay valid
                let wx = model
                    .eval_on_tape(&mut tape, Jet::constant(t, 4).unwrap(), Jet::seed(x, 4).unwrap())
                    .unwrap();
                debug_assert!(t_len < tape.len());
                let w_xxxx = tape.jet(wx).derivative(4).unwrap();
                let r = w_tt + c2 * w_xxxx;
                part.sum_r2 += r * r;
                let s = 2.0 * r / n_pde;
                tape.backward_into(
                    &[(wt, 2, s * 2.0), (wx, 4, s * c2 * 24.0)],
                    &mut part.grad_pde,
                )
                .unwrap();
            }
            part
        })
        .collect();

    let mut sum_r2 = 0.0;
    let mut grad_pde = vec![0.0; n_params];
    for p in &partials {
        sum_r2 += p.sum_r2;
        for (g, v) in grad_pde.iter_mut().zip(&p.grad_pde) {
            *g += v;
        }
    }

    // Initial terms: one order-1 t-tape per point, two reverse passes.
    let mut sum_ic = 0.0;
    let mut sum_ic_t = 0.0;
    let mut grad_ic = vec![0.0; n_params];
    let mut grad_ic_t = vec![0.0; n_params];
    {
        let mut tape = Tape::new(n_params);
        for &x in points.ic {
            tape.clear();
            let w = model
                .eval_on_tape(&mut tape, Jet::seed(0.0, 1).unwrap(), Jet::constant(x, 1).unwrap())
                .unwrap();
            let e = tape.jet(w).value() - problem.initial_displacement(x);
            let et = tape.jet(w).derivative(1).unwrap() - problem.initial_velocity(x);
            sum_ic += e * e;
            sum_ic_t += et * et;
            tape.backward_into(&[(w, 0, 2.0 * e / n_ic)], &mut grad_ic).unwrap();
            tape.backward_into(&[(w, 1, 2.0 * et / n_ic)], &mut grad_ic_t).unwrap();
        }
    }

    // Boundary watchdog: exact zeros, zero gradient.
    let mut sum_bc = 0.0;
    for &t in points.bc {
        let w0 = model.eval(t, 0.0);
        let wl = model.eval(t, problem.beam_length);
        sum_bc += w0 * w0 + wl * wl;
    }

    let mut lb = LossBreakdown {
        l_pde: sum_r2 / n_pde,
        l_ic: sum_ic / n_ic,
        l_ic_t: sum_ic_t / n_ic,
        l_bc: sum_bc / points.bc.len() as f64,
        ..LossBreakdown::default()
    };

    let mut grad_reg = Vec::new();
    if lambda_reg != 0.0 {
        let (l_reg, count) = weight_penalty(model);
        lb.l_reg = l_reg;
        grad_reg = vec![0.0; n_params];
        for range in model.weight_matrix_ranges() {
            for i in range {
                grad_reg[i] = 2.0 * model.params()[i] / count as f64;
            }
        }
    }

    let n = model.config().n_harmonics;
    match fixed_weights {
        Some([w_pde, w_ic, w_ic_t, w_bc]) => {
            lb.w_pde = w_pde;
            lb.w_ic = w_ic;
            lb.w_ic_t = w_ic_t;
            lb.w_bc = w_bc;
            lb.lambda_reg = lambda_reg;
            lb.total = lb.recompute_total();
        }
        None => lb = adaptive_weights(lb, n, scale_const, lambda_reg),
    }

    let mut grad = vec![0.0; n_params];
    for i in 0..n_params {
        grad[i] = lb.w_pde * grad_pde[i] + lb.w_ic * grad_ic[i] + lb.w_ic_t * grad_ic_t[i];
        if lambda_reg != 0.0 {
            grad[i] += lambda_reg * grad_reg[i];
        }
    }

    if !lb.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(PhysicsError::NonFiniteLoss);
    }
    Ok((lb, grad))
}
