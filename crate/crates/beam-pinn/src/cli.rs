//! Command-line front end: `train`, `sweep`, `eval`, and `check`.
//!
//! Every run dumps its fully resolved configuration to `out/config.json`
//! before doing any work, so results are reproducible from the artifacts
//! alone.

use crate::harness::{
    batch_size_estimate, evaluate_metrics, grad_check, harmonic_sweep, write_sweep_csv,
};
use crate::model::{HybridModel, ModelConfig};
use crate::optim::{train, write_history_csv, TrainConfig};
use crate::physics::{BeamProblem, LossPoints};
use crate::sampling::{build_point_sets, validation_grid, PointCounts};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "beam-pinn", version, about = "Hybrid Fourier-neural solver for the clamped Euler-Bernoulli beam")]
pub struct Cli {
    /// Worker threads for the loss evaluation; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct CommonArgs {
    /// Problem description JSON; omits for the built-in single-mode beam.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train one model and write checkpoint, history, and metrics.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of Fourier harmonics.
        #[arg(long, default_value_t = 10)]
        harmonics: usize,
        /// Training configuration JSON; omit for defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Interior minibatch size for the first phase; omit for full batch.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Validation grid as NTxNX.
        #[arg(long, default_value = "100x100")]
        grid: String,
        /// Interior, initial, boundary point counts as P,I,B.
        #[arg(long, default_value = "5000,200,100")]
        points: String,
    },
    /// Train across a list of harmonic counts and tabulate errors.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated harmonic counts.
        #[arg(long, default_value = "5,10,15,20,25,30,35,40,45,50")]
        harmonics_list: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "100x100")]
        grid: String,
        #[arg(long, default_value = "5000,200,100")]
        points: String,
    },
    /// Evaluate a saved checkpoint against the exact solution.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "100x100")]
        grid: String,
    },
    /// Run the self-audit: jet, gradient, residual, and stratification
    /// checks plus replay determinism and boundary exactness.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        /// Finite-difference step for the gradient audit.
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once('x').context("grid must be NTxNX, e.g. 100x100")?;
    let nt: usize = a.trim().parse().context("bad grid height")?;
    let nx: usize = b.trim().parse().context("bad grid width")?;
    if nt < 2 || nx < 2 {
        bail!("grid must be at least 2x2, got {nt}x{nx}");
    }
    Ok((nt, nx))
}

fn parse_points(s: &str) -> Result<PointCounts> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        bail!("points must be P,I,B, e.g. 5000,200,100");
    }
    let n_pde = parts[0].trim().parse().context("bad interior count")?;
    let n_ic = parts[1].trim().parse().context("bad initial count")?;
    let n_bc = parts[2].trim().parse().context("bad boundary count")?;
    if n_pde == 0 || n_ic == 0 || n_bc == 0 {
        bail!("all point counts must be positive");
    }
    Ok(PointCounts { n_pde, n_ic, n_bc })
}

fn load_problem(path: &Option<PathBuf>) -> Result<BeamProblem> {
    match path {
        Some(p) => Ok(BeamProblem::load(p)?),
        None => {
            let p = BeamProblem::default();
            p.validate()?;
            Ok(p)
        }
    }
}

fn load_train_config(path: &Option<PathBuf>, seed: u64) -> Result<TrainConfig> {
    let mut tc: TrainConfig = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| p.display().to_string())?;
            serde_json::from_str(&text).with_context(|| p.display().to_string())?
        }
        None => TrainConfig::default(),
    };
    tc.seed = seed;
    Ok(tc)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json).with_context(|| path.display().to_string())?;
    Ok(())
}

/// The fully resolved run description dumped before any work starts.
#[derive(Serialize)]
struct ResolvedConfig<'a> {
    command: &'a str,
    problem: &'a BeamProblem,
    model: Option<&'a ModelConfig>,
    train: Option<&'a TrainConfig>,
    points: Option<&'a PointCounts>,
    grid: Option<(usize, usize)>,
    seed: u64,
    harmonics_list: Option<&'a [usize]>,
    eps: Option<f64>,
    jobs: Option<usize>,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().ok();
    }
    match cli.command {
        Command::Train { common, harmonics, config, batch_size, grid, points } => {
            cmd_train(common, harmonics, config, batch_size, &grid, &points, cli.jobs)
        }
        Command::Sweep { common, harmonics_list, config, grid, points } => {
            cmd_sweep(common, &harmonics_list, config, &grid, &points, cli.jobs)
        }
        Command::Eval { common, checkpoint, grid } => cmd_eval(common, &checkpoint, &grid),
        Command::Check { common, eps } => cmd_check(common, eps),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    common: CommonArgs,
    harmonics: usize,
    config: Option<PathBuf>,
    batch_size: Option<usize>,
    grid: &str,
    points: &str,
    jobs: Option<usize>,
) -> Result<()> {
    let problem = load_problem(&common.problem)?;
    let grid = parse_grid(grid)?;
    let counts = parse_points(points)?;
    let mut tc = load_train_config(&config, common.seed)?;
    if batch_size.is_some() {
        tc.phase1.batch_size = batch_size;
    }
    let model_config = ModelConfig {
        n_harmonics: harmonics,
        beam_length: problem.beam_length,
        wave_speed: problem.wave_speed,
        ..ModelConfig::default()
    };
    model_config.validate().map_err(crate::physics::PhysicsError::from)?;

    fs::create_dir_all(&common.out)?;
    write_json(
        &common.out.join("config.json"),
        &ResolvedConfig {
            command: "train",
            problem: &problem,
            model: Some(&model_config),
            train: Some(&tc),
            points: Some(&counts),
            grid: Some(grid),
            seed: common.seed,
            harmonics_list: None,
            eps: None,
            jobs,
        },
    )?;

    let model = HybridModel::init(model_config, common.seed)
        .map_err(crate::physics::PhysicsError::from)?;
    let sets = build_point_sets(counts, problem.time_horizon, problem.beam_length, common.seed)?;
    let report = train(model, &problem, &sets, &tc)?;

    let mut hist = Vec::new();
    write_history_csv(&report.history, &mut hist)?;
    fs::write(common.out.join("history.csv"), hist)?;
    report.model.save(&common.out.join("checkpoint.json"), common.seed)
        .map_err(crate::physics::PhysicsError::from)?;

    if report.diverged {
        bail!("training diverged; history written to {}", common.out.display());
    }

    let metrics = evaluate_metrics(&report.model, &problem, grid.0, grid.1)?;
    write_json(&common.out.join("metrics.json"), &metrics)?;
    println!(
        "trained N={harmonics}: total={:.3e} l2_rel={:.3e} (phase1 {} epochs, phase2 {} iters)",
        report.best_loss, metrics.l2_rel, report.phase1_epochs, report.phase2_iters
    );
    Ok(())
}

fn cmd_sweep(
    common: CommonArgs,
    harmonics_list: &str,
    config: Option<PathBuf>,
    grid: &str,
    points: &str,
    jobs: Option<usize>,
) -> Result<()> {
    let problem = load_problem(&common.problem)?;
    let grid = parse_grid(grid)?;
    let counts = parse_points(points)?;
    let tc = load_train_config(&config, common.seed)?;
    let list: Vec<usize> = harmonics_list
        .split(',')
        .map(|s| s.trim().parse::<usize>().context("bad harmonic count"))
        .collect::<Result<_>>()?;
    if list.is_empty() || list.contains(&0) {
        bail!("harmonic counts must be positive");
    }
    let base = ModelConfig {
        beam_length: problem.beam_length,
        wave_speed: problem.wave_speed,
        ..ModelConfig::default()
    };

    fs::create_dir_all(&common.out)?;
    write_json(
        &common.out.join("config.json"),
        &ResolvedConfig {
            command: "sweep",
            problem: &problem,
            model: Some(&base),
            train: Some(&tc),
            points: Some(&counts),
            grid: Some(grid),
            seed: common.seed,
            harmonics_list: Some(&list),
            eps: None,
            jobs,
        },
    )?;

    let out = common.out.clone();
    let report = harmonic_sweep(
        &list,
        &base,
        &problem,
        counts,
        &tc,
        grid,
        common.seed,
        |row, train_report| {
            let path = out.join(format!("checkpoint_n{}.json", row.harmonics));
            if let Err(e) = train_report.model.save(&path, row.seed) {
                eprintln!("warning: could not save {}: {e}", path.display());
            }
            println!(
                "N={:>3}: l2_rel={:.3e} loss={:.3e} wall={:.1}s{}",
                row.harmonics,
                row.l2_rel,
                row.final_total_loss,
                row.wall_s,
                if row.diverged { " DIVERGED" } else { "" }
            );
        },
    )?;

    let mut csv = Vec::new();
    write_sweep_csv(&report, &mut csv)?;
    fs::write(common.out.join("sweep.csv"), csv)?;
    write_json(&common.out.join("sweep.json"), &report)?;
    Ok(())
}

fn cmd_eval(common: CommonArgs, checkpoint: &Path, grid: &str) -> Result<()> {
    let problem = load_problem(&common.problem)?;
    let grid = parse_grid(grid)?;
    let model = HybridModel::load(checkpoint).map_err(crate::physics::PhysicsError::from)?;
    let cfg = model.config();
    if cfg.beam_length != problem.beam_length || cfg.wave_speed != problem.wave_speed {
        bail!(
            "checkpoint geometry (L={}, c={}) does not match the problem (L={}, c={})",
            cfg.beam_length,
            cfg.wave_speed,
            problem.beam_length,
            problem.wave_speed
        );
    }

    fs::create_dir_all(&common.out)?;
    write_json(
        &common.out.join("config.json"),
        &ResolvedConfig {
            command: "eval",
            problem: &problem,
            model: Some(cfg),
            train: None,
            points: None,
            grid: Some(grid),
            seed: common.seed,
            harmonics_list: None,
            eps: None,
            jobs: None,
        },
    )?;

    let metrics = evaluate_metrics(&model, &problem, grid.0, grid.1)?;
    write_json(&common.out.join("metrics.json"), &metrics)?;

    let mut csv = String::from("t,x,w_pred,w_exact,abs_err\n");
    for (t, x) in validation_grid(grid.0, grid.1, problem.time_horizon, problem.beam_length)? {
        let pred = model.eval(t, x);
        let exact = problem.exact_solution(t, x);
        csv.push_str(&format!(
            "{t:.17e},{x:.17e},{pred:.17e},{exact:.17e},{:.17e}\n",
            (pred - exact).abs()
        ));
    }
    fs::write(common.out.join("errors.csv"), csv)?;
    println!("l2_rel={:.6e} l2_abs={:.6e} max_abs={:.6e}", metrics.l2_rel, metrics.l2_abs, metrics.max_abs);
    Ok(())
}

/// Worst relative error of jet derivatives (orders 1, 2, 4) against central
/// finite differences over a fixed battery of smooth expressions. The
/// `post` hook lets tests inject a corrupted evaluator.
pub fn jet_audit_max_error(post: impl Fn(crate::ad::Jet) -> crate::ad::Jet) -> f64 {
    use crate::ad::Jet;
    type Scalar = fn(f64) -> f64;
    type JetFn = fn(Jet) -> Jet;
    let cases: [(Scalar, JetFn); 4] = [
        (|x| x.tanh(), |j| j.tanh()),
        (|x| x.sin(), |j| j.sin()),
        (|x| (2.0 * x).cos(), |j| j.scale(2.0).cos()),
        (
            |x| x * (x * x).sin() + (0.5 * x).tanh(),
            |j| {
                let x2 = j.mul(&j).unwrap();
                j.mul(&x2.sin()).unwrap().add(&j.scale(0.5).tanh()).unwrap()
            },
        ),
    ];
    let mut worst: f64 = 0.0;
    for (f, jf) in cases {
        for &x0 in &[-0.9, -0.3, 0.2, 0.7, 1.3] {
            let jet = post(jf(Jet::seed(x0, 4).unwrap()));
            for (m, h) in [(1usize, 1e-4), (2, 1e-3), (4, 0.015)] {
                // central stencils: 2-point, 3-point, Richardson-refined 5-point
                let fd = match m {
                    1 => (f(x0 + h) - f(x0 - h)) / (2.0 * h),
                    2 => (f(x0 + h) - 2.0 * f(x0) + f(x0 - h)) / (h * h),
                    _ => {
                        let d4 = |h: f64| {
                            (f(x0 - 2.0 * h) - 4.0 * f(x0 - h) + 6.0 * f(x0) - 4.0 * f(x0 + h)
                                + f(x0 + 2.0 * h))
                                / h.powi(4)
                        };
                        // two Richardson levels cancel the h^2 and h^4 error terms
                        let r1 = |h: f64| (4.0 * d4(h) - d4(2.0 * h)) / 3.0;
                        (16.0 * r1(h) - r1(2.0 * h)) / 15.0
                    }
                };
                let got = jet.derivative(m).unwrap();
                worst = worst.max((got - fd).abs() / fd.abs().max(1.0));
            }
        }
    }
    worst
}

/// Pure-Fourier model reproducing the problem's exact modal solution.
fn exact_fourier_model(problem: &BeamProblem) -> Result<HybridModel> {
    let n = problem.ic_disp.len().max(problem.ic_vel.len()).max(1);
    let cfg = ModelConfig {
        n_harmonics: n,
        layer_dims: vec![2, 4, 1],
        beam_length: problem.beam_length,
        wave_speed: problem.wave_speed,
        ..ModelConfig::default()
    };
    let mut m = HybridModel::init(cfg.clone(), 0).map_err(crate::physics::PhysicsError::from)?;
    for p in m.params_mut() {
        *p = 0.0;
    }
    for (i, &a) in problem.ic_disp.iter().enumerate() {
        m.set_a(i + 1, a);
    }
    for (i, &b) in problem.ic_vel.iter().enumerate() {
        if b != 0.0 {
            m.set_b(i + 1, b / cfg.angular_frequency(i + 1));
        }
    }
    Ok(m)
}

fn cmd_check(common: CommonArgs, eps: f64) -> Result<()> {
    use crate::ad::{Jet, Tape};
    use rand::{Rng, SeedableRng};

    let problem = load_problem(&common.problem)?;
    fs::create_dir_all(&common.out)?;
    write_json(
        &common.out.join("config.json"),
        &ResolvedConfig {
            command: "check",
            problem: &problem,
            model: None,
            train: None,
            points: None,
            grid: None,
            seed: common.seed,
            harmonics_list: None,
            eps: Some(eps),
            jobs: None,
        },
    )?;

    // audit model: small but non-degenerate parameters so gradients are O(1)
    let cfg = ModelConfig {
        n_harmonics: 3,
        layer_dims: vec![2, 8, 8, 1],
        beam_length: problem.beam_length,
        wave_speed: problem.wave_speed,
        ..ModelConfig::default()
    };
    let mut model =
        HybridModel::init(cfg, common.seed).map_err(crate::physics::PhysicsError::from)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(common.seed ^ 0x5EED);
    for v in model.params_mut() {
        *v = rng.gen_range(-0.5..0.5);
    }
    model.set_lambda(0.3);
    let points = build_point_sets(
        PointCounts { n_pde: 40, n_ic: 20, n_bc: 10 },
        problem.time_horizon,
        problem.beam_length,
        common.seed,
    )?;

    let mut all_pass = true;
    let mut verdict = |name: &str, pass: bool, detail: String| {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        all_pass &= pass;
    };

    // jet audit: fourth-order derivatives of smooth scalar functions vs
    // central finite differences
    let jet_err = jet_audit_max_error(|j| j);
    verdict("jet", jet_err < 1e-5, format!("max rel error {jet_err:.3e} vs finite differences"));

    // residual audit: a Fourier model encoding the exact modal solution must
    // annihilate the operator
    let exact = exact_fourier_model(&problem)?;
    let mut worst_r: f64 = 0.0;
    for i in 0..1000 {
        let t = problem.time_horizon * (i as f64 + 0.5) / 1000.0;
        let x = problem.beam_length * ((i * 7 + 3) % 1000) as f64 / 1000.0;
        worst_r = worst_r.max(crate::physics::pde_residual(&exact, &problem, t, x)?.abs());
    }
    verdict("residual", worst_r < 1e-10, format!("max |w_tt + c^2 w_xxxx| = {worst_r:.3e} on exact modes"));

    // sampling audit: one point per stratum per dimension
    let mut stratified = true;
    for n in [1usize, 8, 32] {
        for s in 0..20u64 {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            let pts = crate::sampling::lhs_sample_1d(n, 0.0, 1.0, &mut r)?;
            let mut hit = vec![false; n];
            for p in pts {
                let k = ((p * n as f64).floor() as usize).min(n - 1);
                stratified &= !hit[k];
                hit[k] = true;
            }
            stratified &= hit.iter().all(|&h| h);
        }
    }
    verdict("lhs", stratified, "one sample per stratum, n in {1, 8, 32}, 20 seeds".into());

    let gc = grad_check(
        &model,
        &problem,
        LossPoints { pde: &points.pde, ic: &points.ic, bc: &points.bc },
        eps,
    )?;
    verdict(
        "gradient",
        gc.max_rel_error < 1e-4,
        format!("max rel error {:.3e} (eps {:.1e}, {} params)", gc.max_rel_error, gc.eps, gc.n_params),
    );

    // replay audit: re-deriving every tape node must be bit-identical
    let mut tape = Tape::new(model.config().n_params());
    let (t, x) = (0.4 * problem.time_horizon, 0.6 * problem.beam_length);
    let w = model
        .eval_on_tape(&mut tape, Jet::seed(t, 2)?, Jet::constant(x, 2)?)
        .map_err(crate::physics::PhysicsError::from)?;
    let before = *tape.jet(w);
    let g_before = tape.backward(&[(w, 2, 1.0)])?;
    tape.replay();
    let after = *tape.jet(w);
    let g_after = tape.backward(&[(w, 2, 1.0)])?;
    let bits_equal = before
        .coeffs()
        .iter()
        .zip(after.coeffs())
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && g_before.iter().zip(&g_after).all(|(a, b)| a.to_bits() == b.to_bits());
    verdict("replay", bits_equal, format!("{} tape nodes re-derived", tape.len()));

    // boundary audit: the ansatz must vanish exactly at both ends
    let mut boundary_exact = true;
    for i in 0..20 {
        let t = problem.time_horizon * i as f64 / 19.0;
        boundary_exact &= model.eval(t, 0.0) == 0.0 && model.eval(t, problem.beam_length) == 0.0;
    }
    verdict("boundary", boundary_exact, "w(t,0) and w(t,L) exactly zero".into());

    let est = batch_size_estimate(24_000_000_000, 27_925);
    verdict("batch-estimate", est == 51_029, format!("24 GB / 27925 params -> {est}"));

    if !all_pass {
        bail!("self-audit failed");
    }
    Ok(())
}
