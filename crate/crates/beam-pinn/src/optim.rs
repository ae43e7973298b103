//! Two-phase training: Adam with gradient clipping and a reduce-on-plateau
//! schedule, then L-BFGS with a strong Wolfe line search for the precision
//! push. Both phases track the best parameter vector seen by training loss.

use crate::model::HybridModel;
use crate::physics::{
    adaptive_weights, loss_components, total_loss, BeamProblem, FixedWeights, LossBreakdown,
    LossPoints, PhysicsError, RegKind, DEFAULT_SCALE_CONST,
};
use crate::sampling::PointSets;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum OptimError {
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("training diverged at {phase} step {step}")]
    Diverged { phase: &'static str, step: usize },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Scales `grad` in place so its Euclidean norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> Result<f64, OptimError> {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(OptimError::NonFiniteGradient);
    }
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    Ok(norm)
}

/// Adam moment state. `step` counts completed updates; bias correction uses
/// `step + 1` inside `update`.
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
}

impl AdamState {
    pub fn new(n: usize) -> AdamState {
        AdamState { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    /// One Adam update of `params` in place with the given learning rate.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<(), OptimError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(OptimError::DimensionMismatch(params.len(), self.m.len()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }
}

/// Reduce-on-plateau learning-rate schedule with relative improvement
/// threshold.
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub threshold: f64,
    lr: f64,
    best: f64,
    stall: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64, threshold: f64) -> Self {
        PlateauScheduler { factor, patience, min_lr, threshold, lr, best: f64::INFINITY, stall: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one loss observation; returns the (possibly reduced) rate.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best * (1.0 - self.threshold) || self.best.is_infinite() && loss.is_finite() {
            self.best = loss;
            self.stall = 0;
        } else {
            self.stall += 1;
            if self.stall > self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.stall = 0;
            }
        }
        self.lr
    }
}

/// Outcome of one L-BFGS iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LbfgsOutcome {
    /// Step accepted; fields are the new loss and gradient norm.
    Step { loss: f64, grad_norm: f64 },
    /// Gradient norm fell below tolerance.
    Converged { loss: f64, grad_norm: f64 },
    /// Line search could not satisfy the Wolfe conditions.
    LineSearchFailed,
}

/// Limited-memory BFGS with a strong Wolfe cubic-interpolation line search.
pub struct LbfgsState {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_trials: usize,
    pub grad_tol: f64,
    s_list: Vec<Vec<f64>>,
    y_list: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizer of the cubic fit through two points with values and slopes,
/// safeguarded to stay strictly inside the bracket (falls back to bisection).
fn cubic_minimizer(a_lo: f64, f_lo: f64, s_lo: f64, a_hi: f64, f_hi: f64, s_hi: f64) -> f64 {
    let lo = a_lo.min(a_hi);
    let hi = a_lo.max(a_hi);
    let width = hi - lo;
    let mid = 0.5 * (a_lo + a_hi);
    if width <= 0.0 || !f_lo.is_finite() || !f_hi.is_finite() {
        return mid;
    }
    let d1 = s_lo + s_hi - 3.0 * (f_lo - f_hi) / (a_lo - a_hi);
    let disc = d1 * d1 - s_lo * s_hi;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (a_hi - a_lo).signum() * disc.sqrt();
    let denom = s_hi - s_lo + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let aj = a_hi - (a_hi - a_lo) * (s_hi + d2 - d1) / denom;
    // keep a safe margin from the bracket ends
    let margin = 0.05 * width;
    if !aj.is_finite() || aj < lo + margin || aj > hi - margin {
        mid
    } else {
        aj
    }
}

impl LbfgsState {
    pub fn new(memory: usize) -> LbfgsState {
        LbfgsState {
            memory,
            c1: 1e-4,
            c2: 0.9,
            max_line_trials: 25,
            grad_tol: 1e-9,
            s_list: Vec::new(),
            y_list: Vec::new(),
        }
    }

    /// Drops the curvature history (used after a line-search failure).
    pub fn reset(&mut self) {
        self.s_list.clear();
        self.y_list.clear();
    }

    /// Two-loop recursion: `-H g` with the standard `s'y / y'y` initial
    /// scaling.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let k = self.s_list.len();
        let mut alpha = vec![0.0; k];
        let mut rho = vec![0.0; k];
        for i in (0..k).rev() {
            rho[i] = 1.0 / dot(&self.y_list[i], &self.s_list[i]);
            alpha[i] = rho[i] * dot(&self.s_list[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y_list[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let s = &self.s_list[k - 1];
            let y = &self.y_list[k - 1];
            let gamma = dot(s, y) / dot(y, y);
            for qj in q.iter_mut() {
                *qj *= gamma;
            }
        }
        for i in 0..k {
            let beta = rho[i] * dot(&self.y_list[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s_list[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        for qj in q.iter_mut() {
            *qj = -*qj;
        }
        q
    }

    fn push_pair(&mut self, s: Vec<f64>, y: Vec<f64>) {
        // curvature condition guards positive definiteness
        if dot(&s, &y) > 0.0 {
            self.s_list.push(s);
            self.y_list.push(y);
            if self.s_list.len() > self.memory {
                self.s_list.remove(0);
                self.y_list.remove(0);
            }
        }
    }
}

/// One outer L-BFGS iteration on `params` with objective `f` returning
/// `(loss, gradient)`. `f0`/`g0` are the current loss and gradient so each
/// iteration costs line-search evaluations only.
pub fn lbfgs_step<F>(
    state: &mut LbfgsState,
    f: &mut F,
    params: &mut [f64],
    f0: f64,
    g0: &[f64],
) -> Result<(LbfgsOutcome, f64, Vec<f64>), OptimError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), OptimError>,
{
    let gnorm0 = dot(g0, g0).sqrt();
    if gnorm0 <= state.grad_tol {
        return Ok((LbfgsOutcome::Converged { loss: f0, grad_norm: gnorm0 }, f0, g0.to_vec()));
    }

    let mut d = state.direction(g0);
    let mut slope = dot(&d, g0);
    if slope >= 0.0 {
        // not a descent direction: drop history, fall back to steepest descent
        state.reset();
        d = g0.iter().map(|g| -g).collect();
        slope = dot(&d, g0);
    }

    // strong Wolfe line search: bracketing phase, then zoom with
    // safeguarded cubic interpolation
    let x0 = params.to_vec();
    let eval = |f: &mut F,
                x0: &[f64],
                d: &[f64],
                a: f64,
                params: &mut [f64]|
     -> Result<(f64, Vec<f64>, f64), OptimError> {
        for ((p, x), di) in params.iter_mut().zip(x0).zip(d) {
            *p = x + a * di;
        }
        let (fa, ga) = f(params)?;
        let sa = dot(&ga, d);
        Ok((fa, ga, sa))
    };

    let mut trials = 0usize;
    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut s_prev = slope;
    let mut alpha = 1.0;
    // bracket endpoints as (alpha, f, slope); lo always satisfies Armijo
    let mut bracket: Option<((f64, f64, f64), (f64, f64, f64))> = None;
    let mut accepted: Option<(f64, Vec<f64>)> = None;

    while trials < state.max_line_trials {
        let (fa, ga, sa) = eval(f, &x0, &d, alpha, params)?;
        trials += 1;
        if !fa.is_finite() || fa > f0 + state.c1 * alpha * slope || (trials > 1 && fa >= f_prev) {
            bracket = Some(((a_prev, f_prev, s_prev), (alpha, fa, sa)));
            break;
        }
        if sa.abs() <= -state.c2 * slope {
            // Wolfe holds; if the slope is still large, one secant step
            // toward the line minimum usually lands much closer (exact for
            // quadratics) at the cost of a single extra evaluation
            if sa.abs() > 0.1 * slope.abs() && trials < state.max_line_trials && sa != s_prev {
                let a2 = alpha - sa * (alpha - a_prev) / (sa - s_prev);
                if a2.is_finite() && a2 > 0.0 {
                    let (f2, g2, s2) = eval(f, &x0, &d, a2, params)?;
                    trials += 1;
                    if f2.is_finite()
                        && f2 <= fa
                        && f2 <= f0 + state.c1 * a2 * slope
                        && s2.abs() <= -state.c2 * slope
                    {
                        accepted = Some((f2, g2));
                        break;
                    }
                    // fall back to the already-accepted point
                    for ((p, x), di) in params.iter_mut().zip(&x0).zip(&d) {
                        *p = x + alpha * di;
                    }
                }
            }
            accepted = Some((fa, ga));
            break;
        }
        if sa >= 0.0 {
            bracket = Some(((alpha, fa, sa), (a_prev, f_prev, s_prev)));
            break;
        }
        a_prev = alpha;
        f_prev = fa;
        s_prev = sa;
        alpha *= 2.0;
    }

    if accepted.is_none() {
        if let Some(((mut a_lo, mut f_lo, mut s_lo), (mut a_hi, mut f_hi, mut s_hi))) = bracket {
            while trials < state.max_line_trials {
                let aj = cubic_minimizer(a_lo, f_lo, s_lo, a_hi, f_hi, s_hi);
                let (fa, ga, sa) = eval(f, &x0, &d, aj, params)?;
                trials += 1;
                if !fa.is_finite() || fa > f0 + state.c1 * aj * slope || fa >= f_lo {
                    a_hi = aj;
                    f_hi = fa;
                    s_hi = sa;
                } else {
                    if sa.abs() <= -state.c2 * slope {
                        accepted = Some((fa, ga));
                        break;
                    }
                    if sa * (a_hi - a_lo) >= 0.0 {
                        a_hi = a_lo;
                        f_hi = f_lo;
                        s_hi = s_lo;
                    }
                    a_lo = aj;
                    f_lo = fa;
                    s_lo = sa;
                }
                if (a_hi - a_lo).abs() <= 1e-16 * a_lo.abs().max(1.0) {
                    break;
                }
            }
        }
    }

    match accepted {
        Some((fa, ga)) => {
            // curvature pair from this iteration's objective, so scale
            // changes between outer iterations cannot corrupt the history
            let s: Vec<f64> = params.iter().zip(&x0).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = ga.iter().zip(g0).map(|(a, b)| a - b).collect();
            state.push_pair(s, y);
            let gnorm = dot(&ga, &ga).sqrt();
            if gnorm <= state.grad_tol {
                Ok((LbfgsOutcome::Converged { loss: fa, grad_norm: gnorm }, fa, ga))
            } else {
                Ok((LbfgsOutcome::Step { loss: fa, grad_norm: gnorm }, fa, ga))
            }
        }
        None => {
            // restore the starting point before reporting failure
            params.copy_from_slice(&x0);
            state.reset();
            Ok((LbfgsOutcome::LineSearchFailed, f0, g0.to_vec()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub threshold: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { factor: 0.5, patience: 100, min_lr: 1e-5, threshold: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase1Config {
    pub max_epochs: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Epochs without relative improvement before early stop.
    pub plateau_patience: usize,
    /// Minibatch size for the interior set; `None` runs full batch.
    pub batch_size: Option<usize>,
    pub scheduler: SchedulerConfig,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Phase1Config {
            max_epochs: 2000,
            lr: 0.01,
            clip_norm: 1.0,
            plateau_patience: 200,
            batch_size: None,
            scheduler: SchedulerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase2Config {
    pub enabled: bool,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Phase2Config { enabled: true, max_iters: 5000, grad_tol: 1e-9, memory: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub phase1: Phase1Config,
    pub phase2: Phase2Config,
    /// Coefficient of the optional weight penalty; 0 disables it.
    pub lambda_reg: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { phase1: Phase1Config::default(), phase2: Phase2Config::default(), lambda_reg: 0.0, seed: 42 }
    }
}

/// One history row per optimizer step, plus one phase-transition marker row.
#[derive(Clone, Debug, Serialize)]
pub struct HistoryRecord {
    pub phase: &'static str,
    pub step: usize,
    pub lr: f64,
    pub losses: LossBreakdown,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

pub struct TrainReport {
    pub model: HybridModel,
    pub history: Vec<HistoryRecord>,
    pub best_loss: f64,
    pub phase1_epochs: usize,
    pub phase2_iters: usize,
    pub diverged: bool,
}

/// Writes the history as CSV.
pub fn write_history_csv<W: Write>(history: &[HistoryRecord], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "phase,step,lr,l_pde,l_ic,l_ic_t,l_bc,w_pde,w_ic,w_ic_t,w_bc,total,grad_norm,wall_ms"
    )?;
    for r in history {
        let l = &r.losses;
        writeln!(
            out,
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.3}",
            r.phase,
            r.step,
            r.lr,
            l.l_pde,
            l.l_ic,
            l.l_ic_t,
            l.l_bc,
            l.w_pde,
            l.w_ic,
            l.w_ic_t,
            l.w_bc,
            l.total,
            r.grad_norm,
            r.wall_ms
        )?;
    }
    Ok(())
}

fn reg_kind(lambda_reg: f64) -> RegKind {
    if lambda_reg != 0.0 {
        RegKind::WeightDecay
    } else {
        RegKind::None
    }
}

/// Current weighted total loss over the full point sets, weights from the
/// adaptive law.
fn full_loss(
    model: &HybridModel,
    problem: &BeamProblem,
    points: &PointSets,
    lambda_reg: f64,
) -> Result<LossBreakdown, PhysicsError> {
    let lb = loss_components(
        model,
        problem,
        LossPoints { pde: &points.pde, ic: &points.ic, bc: &points.bc },
        reg_kind(lambda_reg),
    )?;
    Ok(adaptive_weights(lb, model.config().n_harmonics, DEFAULT_SCALE_CONST, lambda_reg))
}

/// Runs the two training phases and returns the best model found.
///
/// Phase 1 is Adam over shuffled interior minibatches (initial and boundary
/// sets always ride along in full); the plateau scheduler and early stop
/// watch the full-set loss. Phase 2 is L-BFGS on the full sets with the
/// adaptive weights recomputed once per outer iteration and frozen through
/// its line search, so the searched objective is smooth.
pub fn train(
    mut model: HybridModel,
    problem: &BeamProblem,
    points: &PointSets,
    config: &TrainConfig,
) -> Result<TrainReport, OptimError> {
    problem.validate()?;
    let started = Instant::now();
    let n = model.config().n_params();
    let mut history = Vec::new();
    let mut best_params = model.params().to_vec();
    let mut best_loss = full_loss(&model, problem, points, config.lambda_reg)?.total;
    let mut diverged = false;

    // phase 1: Adam
    let p1 = &config.phase1;
    let mut adam = AdamState::new(n);
    let mut sched = PlateauScheduler::new(
        p1.lr,
        p1.scheduler.factor,
        p1.scheduler.patience,
        p1.scheduler.min_lr,
        p1.scheduler.threshold,
    );
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed ^ 0xA5A5_5A5A_0F0F_F0F0);
    let mut stall = 0usize;
    let mut phase1_epochs = 0usize;
    let mut early_best = best_loss;

    'epochs: for epoch in 0..p1.max_epochs {
        let batch = p1.batch_size.unwrap_or(points.pde.len()).max(1).min(points.pde.len());
        let mut order: Vec<usize> = (0..points.pde.len()).collect();
        if batch < points.pde.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let pde: Vec<(f64, f64)> = chunk.iter().map(|&i| points.pde[i]).collect();
            let pts = LossPoints { pde: &pde, ic: &points.ic, bc: &points.bc };
            let step = match total_loss(&model, problem, pts, DEFAULT_SCALE_CONST, config.lambda_reg, None) {
                Ok(v) => v,
                Err(PhysicsError::NonFiniteLoss) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e.into()),
            };
            let (lb, mut grad) = step;
            let _ = lb;
            let norm = match clip_global_norm(&mut grad, p1.clip_norm) {
                Ok(v) => v,
                Err(OptimError::NonFiniteGradient) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let _ = norm;
            adam.update(model.params_mut(), &grad, sched.lr())?;
        }

        phase1_epochs = epoch + 1;
        let lb = match full_loss(&model, problem, points, config.lambda_reg) {
            Ok(v) => v,
            Err(PhysicsError::NonFiniteLoss) => {
                diverged = true;
                break 'epochs;
            }
            Err(e) => return Err(e.into()),
        };
        let lr_now = sched.lr();
        sched.observe(lb.total);
        history.push(HistoryRecord {
            phase: "adam",
            step: epoch,
            lr: lr_now,
            losses: lb,
            grad_norm: f64::NAN,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if lb.total < best_loss {
            best_loss = lb.total;
            best_params.copy_from_slice(model.params());
        }
        // early stop on the same relative-improvement rule as the scheduler
        if lb.total < early_best * (1.0 - p1.scheduler.threshold) {
            early_best = lb.total;
            stall = 0;
        } else {
            stall += 1;
            if stall > p1.plateau_patience {
                break;
            }
        }
    }

    // resume phase 2 from the best phase-1 parameters
    model.set_params(&best_params);

    history.push(HistoryRecord {
        phase: "transition",
        step: phase1_epochs,
        lr: 0.0,
        losses: full_loss(&model, problem, points, config.lambda_reg)?,
        grad_norm: f64::NAN,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    });

    let mut phase2_iters = 0usize;
    if config.phase2.enabled && !diverged {
        let p2 = &config.phase2;
        let mut lbfgs = LbfgsState::new(p2.memory);
        lbfgs.grad_tol = p2.grad_tol;
        let full_pts = LossPoints { pde: &points.pde, ic: &points.ic, bc: &points.bc };

        'iters: for iter in 0..p2.max_iters {
            // recompute the adaptive weights once, then freeze them for this
            // iteration's objective
            let current = match full_loss(&model, problem, points, config.lambda_reg) {
                Ok(v) => v,
                Err(PhysicsError::NonFiniteLoss) => {
                    diverged = true;
                    break 'iters;
                }
                Err(e) => return Err(e.into()),
            };
            let weights: FixedWeights = [current.w_pde, current.w_ic, current.w_ic_t, current.w_bc];
            let mut objective = |p: &[f64]| -> Result<(f64, Vec<f64>), OptimError> {
                let m = HybridModel::from_params(model.config().clone(), p.to_vec())
                    .expect("parameter length fixed");
                let (lb, g) = total_loss(
                    &m,
                    problem,
                    full_pts,
                    DEFAULT_SCALE_CONST,
                    config.lambda_reg,
                    Some(weights),
                )?;
                Ok((lb.total, g))
            };

            let params = model.params().to_vec();
            let mut p = params;
            let (f0, g0) = objective(&p)?;
            let (outcome, f_new, _g_new) = match lbfgs_step(&mut lbfgs, &mut objective, &mut p, f0, &g0) {
                Ok(v) => v,
                Err(OptimError::Physics(PhysicsError::NonFiniteLoss)) => {
                    diverged = true;
                    break 'iters;
                }
                Err(e) => return Err(e),
            };
            model.set_params(&p);
            phase2_iters = iter + 1;

            let grad_norm = match outcome {
                LbfgsOutcome::Step { grad_norm, .. } | LbfgsOutcome::Converged { grad_norm, .. } => grad_norm,
                LbfgsOutcome::LineSearchFailed => dot(&g0, &g0).sqrt(),
            };
            let lb_now = match full_loss(&model, problem, points, config.lambda_reg) {
                Ok(v) => v,
                Err(PhysicsError::NonFiniteLoss) => {
                    diverged = true;
                    break 'iters;
                }
                Err(e) => return Err(e.into()),
            };
            history.push(HistoryRecord {
                phase: "lbfgs",
                step: iter,
                lr: 0.0,
                losses: lb_now,
                grad_norm,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            if lb_now.total < best_loss {
                best_loss = lb_now.total;
                best_params.copy_from_slice(model.params());
            }
            match outcome {
                LbfgsOutcome::Converged { .. } | LbfgsOutcome::LineSearchFailed => break,
                LbfgsOutcome::Step { .. } => {}
            }
            let _ = f_new;
        }
    }

    model.set_params(&best_params);
    Ok(TrainReport { model, history, best_loss, phase1_epochs, phase2_iters, diverged })
}
