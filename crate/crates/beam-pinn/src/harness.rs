//! Evaluation harness: error metrics on the validation grid, the harmonic
//! sweep with published reference values, the memory-based batch size
//! estimate, and a finite-difference gradient audit.

use crate::model::HybridModel;
use crate::optim::{train, OptimError, TrainConfig, TrainReport};
use crate::physics::{total_loss, BeamProblem, LossPoints, PhysicsError};
use crate::sampling::{build_point_sets, validation_grid, PointCounts, SamplingError};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;

/// Published relative L2 errors by harmonic count, used as the comparison
/// column of the sweep report.
pub const PAPER_L2_REF: [(usize, f64); 10] = [
    (5, 5.12e-7),
    (10, 1.94e-7),
    (15, 4.02e-1),
    (20, 4.80e-1),
    (25, 4.82e-1),
    (30, 4.92e-1),
    (35, 4.89e-1),
    (40, 4.75e-1),
    (45, 2.00e-1),
    (50, 4.90e-1),
];

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("exact solution is identically zero on the grid; relative error undefined")]
    ZeroReferenceField,
    #[error("finite-difference step {0} outside [1e-8, 1e-4]")]
    BadFdStep(f64),
    #[error("empty sweep: no harmonic counts given")]
    EmptySweep,
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Error metrics of a model against the exact solution on a uniform grid.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub nt: usize,
    pub nx: usize,
    /// `sqrt(sum e^2 * dt * dx)`, a quadrature of the squared error field.
    pub l2_abs: f64,
    /// `sqrt(sum e^2) / sqrt(sum w_exact^2)`.
    pub l2_rel: f64,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub median_abs: f64,
    /// SHA-256 of the predicted field bytes, row-major f64 little-endian.
    pub pred_fingerprint: String,
    /// Same digest for the exact field.
    pub exact_fingerprint: String,
}

fn fingerprint(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

/// Evaluates model-vs-exact error metrics on the `nt x nx` endpoint-inclusive
/// grid.
pub fn evaluate_metrics(
    model: &HybridModel,
    problem: &BeamProblem,
    nt: usize,
    nx: usize,
) -> Result<MetricsReport, HarnessError> {
    let grid = validation_grid(nt, nx, problem.time_horizon, problem.beam_length)?;
    let pred: Vec<f64> = grid.iter().map(|&(t, x)| model.eval(t, x)).collect();
    let exact: Vec<f64> = grid.iter().map(|&(t, x)| problem.exact_solution(t, x)).collect();

    let norm_exact_sq: f64 = exact.iter().map(|w| w * w).sum();
    if norm_exact_sq == 0.0 {
        return Err(HarnessError::ZeroReferenceField);
    }

    let mut abs_errs: Vec<f64> = pred.iter().zip(&exact).map(|(p, e)| (p - e).abs()).collect();
    let err_sq: f64 = abs_errs.iter().map(|e| e * e).sum();
    let dt = problem.time_horizon / (nt - 1) as f64;
    let dx = problem.beam_length / (nx - 1) as f64;

    let max_abs = abs_errs.iter().cloned().fold(0.0, f64::max);
    let mean_abs = abs_errs.iter().sum::<f64>() / abs_errs.len() as f64;
    abs_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = abs_errs.len();
    let median_abs = if n % 2 == 1 {
        abs_errs[n / 2]
    } else {
        0.5 * (abs_errs[n / 2 - 1] + abs_errs[n / 2])
    };

    Ok(MetricsReport {
        nt,
        nx,
        l2_abs: (err_sq * dt * dx).sqrt(),
        l2_rel: err_sq.sqrt() / norm_exact_sq.sqrt(),
        max_abs,
        mean_abs,
        median_abs,
        pred_fingerprint: fingerprint(&pred),
        exact_fingerprint: fingerprint(&exact),
    })
}

/// One sweep row: training outcome and grid metrics for a harmonic count.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub harmonics: usize,
    pub l2_rel: f64,
    pub l2_abs: f64,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub median_abs: f64,
    pub final_total_loss: f64,
    pub phase1_epochs: usize,
    pub phase2_iters: usize,
    pub wall_s: f64,
    pub seed: u64,
    /// Published reference for this count, if tabulated.
    pub paper_l2_ref: Option<f64>,
    pub diverged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub grid: (usize, usize),
    pub master_seed: u64,
}

/// Per-run seed for a sweep cell; depends on the master seed and the
/// harmonic count only.
pub fn sweep_seed(master_seed: u64, harmonics: usize) -> u64 {
    master_seed
        .wrapping_mul(0x100_0000_01B3)
        .wrapping_add(harmonics as u64)
}

/// Trains one model per harmonic count and collects grid metrics. A diverged
/// run is recorded in its row (NaN metrics) rather than aborting the sweep.
#[allow(clippy::too_many_arguments)]
pub fn harmonic_sweep(
    harmonic_counts: &[usize],
    base_model_config: &crate::model::ModelConfig,
    problem: &BeamProblem,
    counts: PointCounts,
    train_config: &TrainConfig,
    grid: (usize, usize),
    master_seed: u64,
    mut per_row: impl FnMut(&SweepRow, &TrainReport),
) -> Result<SweepReport, HarnessError> {
    if harmonic_counts.is_empty() {
        return Err(HarnessError::EmptySweep);
    }
    problem.validate()?;
    let mut rows = Vec::new();
    for &n in harmonic_counts {
        let seed = sweep_seed(master_seed, n);
        let started = std::time::Instant::now();
        let cfg = crate::model::ModelConfig { n_harmonics: n, ..base_model_config.clone() };
        let model = HybridModel::init(cfg, seed).map_err(PhysicsError::from)?;
        let points =
            build_point_sets(counts, problem.time_horizon, problem.beam_length, seed)?;
        let tc = TrainConfig { seed, ..train_config.clone() };
        let report = train(model, problem, &points, &tc)?;
        let wall_s = started.elapsed().as_secs_f64();
        let paper_ref = PAPER_L2_REF.iter().find(|(h, _)| *h == n).map(|&(_, v)| v);
        let row = if report.diverged {
            SweepRow {
                harmonics: n,
                l2_rel: f64::NAN,
                l2_abs: f64::NAN,
                max_abs: f64::NAN,
                mean_abs: f64::NAN,
                median_abs: f64::NAN,
                final_total_loss: f64::NAN,
                phase1_epochs: report.phase1_epochs,
                phase2_iters: report.phase2_iters,
                wall_s,
                seed,
                paper_l2_ref: paper_ref,
                diverged: true,
            }
        } else {
            let m = evaluate_metrics(&report.model, problem, grid.0, grid.1)?;
            SweepRow {
                harmonics: n,
                l2_rel: m.l2_rel,
                l2_abs: m.l2_abs,
                max_abs: m.max_abs,
                mean_abs: m.mean_abs,
                median_abs: m.median_abs,
                final_total_loss: report.best_loss,
                phase1_epochs: report.phase1_epochs,
                phase2_iters: report.phase2_iters,
                wall_s,
                seed,
                paper_l2_ref: paper_ref,
                diverged: false,
            }
        };
        per_row(&row, &report);
        rows.push(row);
    }
    Ok(SweepReport { rows, grid, master_seed })
}

/// Writes the sweep as CSV: one row per harmonic count, floats at full
/// precision, `wall_s` last-but-two so byte comparisons can exclude it.
pub fn write_sweep_csv<W: Write>(report: &SweepReport, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "harmonics,l2_rel,l2_abs,max_abs,mean_abs,median_abs,final_total_loss,phase1_epochs,phase2_iters,wall_s,seed,paper_l2_ref"
    )?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{:.3},{},{}",
            r.harmonics,
            r.l2_rel,
            r.l2_abs,
            r.max_abs,
            r.mean_abs,
            r.median_abs,
            r.final_total_loss,
            r.phase1_epochs,
            r.phase2_iters,
            r.wall_s,
            r.seed,
            r.paper_l2_ref.map_or_else(|| "".into(), |v| format!("{v:e}")),
        )?;
    }
    Ok(())
}

/// Memory-driven full-batch size: `floor(0.95 * mem_bytes / (16 * n_params))`.
/// The denominator is four f64 work buffers per parameter per point.
pub fn batch_size_estimate(mem_bytes: u64, n_params: usize) -> usize {
    ((0.95 * mem_bytes as f64) / (16.0 * n_params as f64)).floor() as usize
}

/// Worst relative gradient error over all parameters, analytic vs central
/// finite differences of the fixed-weight total loss.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub n_params: usize,
}

/// Central-difference audit of the analytic gradient. `eps` must lie in
/// `[1e-8, 1e-4]`. Relative error uses a floored denominator so near-zero
/// components do not blow up the ratio.
pub fn grad_check(
    model: &HybridModel,
    problem: &BeamProblem,
    points: LossPoints<'_>,
    eps: f64,
) -> Result<GradCheckReport, HarnessError> {
    if !(1e-8..=1e-4).contains(&eps) {
        return Err(HarnessError::BadFdStep(eps));
    }
    let scale_const = crate::physics::DEFAULT_SCALE_CONST;
    let (lb, grad) = total_loss(model, problem, points, scale_const, 0.0, None)?;
    let weights = [lb.w_pde, lb.w_ic, lb.w_ic_t, lb.w_bc];

    let n = model.config().n_params();
    let mut max_rel = 0.0;
    let mut worst = 0;
    let mut m = model.clone();
    for i in 0..n {
        let orig = m.params()[i];
        m.params_mut()[i] = orig + eps;
        let (lp, _) = total_loss(&m, problem, points, scale_const, 0.0, Some(weights))?;
        m.params_mut()[i] = orig - eps;
        let (lm, _) = total_loss(&m, problem, points, scale_const, 0.0, Some(weights))?;
        m.params_mut()[i] = orig;
        let fd = (lp.total - lm.total) / (2.0 * eps);
        let denom = grad[i].abs().max(fd.abs()).max(1e-5);
        let rel = (grad[i] - fd).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
    }
    Ok(GradCheckReport { eps, max_rel_error: max_rel, worst_index: worst, n_params: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FourierInit, ModelConfig};
    use approx::assert_relative_eq;

    fn exact_model(problem: &BeamProblem) -> HybridModel {
        let cfg = ModelConfig {
            n_harmonics: problem.ic_disp.len().max(1),
            layer_dims: vec![2, 4, 1],
            beam_length: problem.beam_length,
            wave_speed: problem.wave_speed,
            fourier_init: FourierInit::InverseNPlusOne,
        };
        let mut m = HybridModel::init(cfg, 0).unwrap();
        for p in m.params_mut() {
            *p = 0.0;
        }
        for (i, &a) in problem.ic_disp.iter().enumerate() {
            m.set_a(i + 1, a);
        }
        m
    }

    #[test]
    fn exact_model_scores_zero() {
        let p = BeamProblem::default();
        let m = exact_model(&p);
        let r = evaluate_metrics(&m, &p, 50, 50).unwrap();
        assert!(r.l2_rel < 1e-14, "l2_rel = {}", r.l2_rel);
        assert!(r.l2_abs < 1e-14);
        assert!(r.max_abs < 1e-13);
        assert_eq!(r.pred_fingerprint.len(), 64);
    }

    #[test]
    fn metrics_match_brute_force_for_constant_offset() {
        // model = exact + delta * sin(pi x / L) via the a_1 coefficient is
        // messy; instead compare two independent computations of the metric
        // definitions on a perturbed model.
        let p = BeamProblem::default();
        let mut m = exact_model(&p);
        m.set_a(1, 1.1); // 0.1 * mode-1 error field
        let (nt, nx) = (21, 31);
        let r = evaluate_metrics(&m, &p, nt, nx).unwrap();

        let grid = validation_grid(nt, nx, p.time_horizon, p.beam_length).unwrap();
        let errs: Vec<f64> =
            grid.iter().map(|&(t, x)| (m.eval(t, x) - p.exact_solution(t, x)).abs()).collect();
        let err_sq: f64 = errs.iter().map(|e| e * e).sum();
        let ref_sq: f64 =
            grid.iter().map(|&(t, x)| p.exact_solution(t, x).powi(2)).sum();
        let dt = p.time_horizon / (nt - 1) as f64;
        let dx = p.beam_length / (nx - 1) as f64;
        assert_relative_eq!(r.l2_abs, (err_sq * dt * dx).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(r.l2_rel, err_sq.sqrt() / ref_sq.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(
            r.mean_abs,
            errs.iter().sum::<f64>() / errs.len() as f64,
            max_relative = 1e-12
        );
        assert_relative_eq!(r.max_abs, errs.iter().cloned().fold(0.0, f64::max));
        // ordering: median <= mean is not guaranteed in general, but
        // max >= mean >= 0 always holds
        assert!(r.max_abs >= r.mean_abs);
        assert!(r.median_abs <= r.max_abs);
    }

    #[test]
    fn zero_reference_field_rejected() {
        let mut p = BeamProblem::default();
        let m = exact_model(&p);
        // bypass validate(): zero field only via direct construction
        p.ic_disp = vec![0.0];
        assert!(matches!(
            evaluate_metrics(&m, &p, 10, 10),
            Err(HarnessError::ZeroReferenceField)
        ));
    }

    #[test]
    fn batch_size_examples() {
        assert_eq!(batch_size_estimate(24_000_000_000, 27_925), 51_029);
        // boundary: smallest memory that still fits one point
        let need = (16.0_f64 * 27_925.0 / 0.95).ceil() as u64;
        assert_eq!(batch_size_estimate(need, 27_925), 1);
        assert_eq!(batch_size_estimate(need - 1, 27_925), 0);
    }

    #[test]
    fn grad_check_on_healthy_model() {
        use rand::{Rng, SeedableRng};
        let p = BeamProblem::default();
        let mut m = HybridModel::init(
            ModelConfig { n_harmonics: 2, layer_dims: vec![2, 5, 1], ..ModelConfig::default() },
            21,
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for v in m.params_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        m.set_lambda(0.3);
        let points = build_point_sets(
            crate::sampling::PointCounts { n_pde: 30, n_ic: 15, n_bc: 5 },
            p.time_horizon,
            p.beam_length,
            3,
        )
        .unwrap();
        let r = grad_check(
            &m,
            &p,
            LossPoints { pde: &points.pde, ic: &points.ic, bc: &points.bc },
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-5, "max rel error {}", r.max_rel_error);
        assert!(matches!(
            grad_check(
                &m,
                &p,
                LossPoints { pde: &points.pde, ic: &points.ic, bc: &points.bc },
                1e-3
            ),
            Err(HarnessError::BadFdStep(_))
        ));
    }

    #[test]
    fn sweep_rows_and_csv() {
        use crate::optim::{Phase1Config, Phase2Config};
        let p = BeamProblem::default();
        let base = ModelConfig { layer_dims: vec![2, 4, 1], ..ModelConfig::default() };
        let tc = TrainConfig {
            phase1: Phase1Config { max_epochs: 2, ..Phase1Config::default() },
            phase2: Phase2Config { max_iters: 2, ..Phase2Config::default() },
            ..TrainConfig::default()
        };
        let counts = PointCounts { n_pde: 30, n_ic: 10, n_bc: 5 };
        let report =
            harmonic_sweep(&[1, 10], &base, &p, counts, &tc, (11, 11), 7, |_, _| {}).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].harmonics, 1);
        assert_eq!(report.rows[0].paper_l2_ref, None);
        assert_eq!(report.rows[1].paper_l2_ref, Some(1.94e-7));
        assert_ne!(report.rows[0].seed, report.rows[1].seed);

        let mut buf = Vec::new();
        write_sweep_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("harmonics,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn empty_sweep_rejected() {
        let p = BeamProblem::default();
        let base = ModelConfig::default();
        let tc = TrainConfig::default();
        assert!(matches!(
            harmonic_sweep(&[], &base, &p, PointCounts::default(), &tc, (10, 10), 0, |_, _| {}),
            Err(HarnessError::EmptySweep)
        ));
    }

    #[test]
    fn reference_table_contents() {
        assert_eq!(PAPER_L2_REF.len(), 10);
        assert_eq!(PAPER_L2_REF[0], (5, 5.12e-7));
        assert_eq!(PAPER_L2_REF[1], (10, 1.94e-7));
        assert_eq!(PAPER_L2_REF[9], (50, 4.90e-1));
        // counts ascend by 5
        for w in PAPER_L2_REF.windows(2) {
            assert_eq!(w[1].0 - w[0].0, 5);
        }
    }
}
