//! Latin hypercube collocation sampling and the uniform validation grid.
//!
//! All draws go through a seeded ChaCha8 stream; the interior, initial, and
//! boundary sets use decorrelated sub-seeds derived from the master seed, so
//! changing one count never perturbs the other sets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum SamplingError {
    #[error("sample count must be positive")]
    ZeroCount,
    #[error("empty or inverted range [{0}, {1}]")]
    BadRange(f64, f64),
    #[error("grid needs at least 2 nodes per axis, got {0}x{1}")]
    GridTooSmall(usize, usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// How many points each set gets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointCounts {
    pub n_pde: usize,
    pub n_ic: usize,
    pub n_bc: usize,
}

impl Default for PointCounts {
    fn default() -> Self {
        PointCounts { n_pde: 5000, n_ic: 200, n_bc: 100 }
    }
}

/// The collocation sets one training run uses.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSets {
    /// Interior `(t, x)` points for the residual term.
    pub pde: Vec<(f64, f64)>,
    /// `x` locations for the two initial terms (evaluated at `t = 0`).
    pub ic: Vec<f64>,
    /// `t` locations for the boundary watchdog (evaluated at `x = 0` and `x = L`).
    pub bc: Vec<f64>,
    pub seed: u64,
    pub counts: PointCounts,
}

fn check_range(lo: f64, hi: f64) -> Result<(), SamplingError> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(SamplingError::BadRange(lo, hi));
    }
    Ok(())
}

/// 1-D Latin hypercube draw: one point per stratum, strata shuffled.
/// `value_i = lo + (perm_i + u_i) / n * (hi - lo)` with `u_i ~ U[0,1)`.
pub fn lhs_sample_1d(
    n: usize,
    lo: f64,
    hi: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, SamplingError> {
    if n == 0 {
        return Err(SamplingError::ZeroCount);
    }
    check_range(lo, hi)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    Ok(perm
        .into_iter()
        .map(|p| lo + (p as f64 + rng.gen::<f64>()) / n as f64 * (hi - lo))
        .collect())
}

/// 2-D Latin hypercube draw over `[t_lo, t_hi] x [x_lo, x_hi]`: each axis is
/// stratified independently with its own shuffled permutation.
pub fn lhs_sample_2d(
    n: usize,
    t_range: (f64, f64),
    x_range: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64)>, SamplingError> {
    let ts = lhs_sample_1d(n, t_range.0, t_range.1, rng)?;
    let xs = lhs_sample_1d(n, x_range.0, x_range.1, rng)?;
    Ok(ts.into_iter().zip(xs).collect())
}

/// Sub-seed derivation: a fixed odd multiplier keeps the three streams
/// decorrelated while staying reproducible from one master seed.
fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Builds the interior, initial, and boundary collocation sets for the domain
/// `[0, time_horizon] x [0, beam_length]`.
pub fn build_point_sets(
    counts: PointCounts,
    time_horizon: f64,
    beam_length: f64,
    seed: u64,
) -> Result<PointSets, SamplingError> {
    let mut rng_pde = ChaCha8Rng::seed_from_u64(sub_seed(seed, 1));
    let mut rng_ic = ChaCha8Rng::seed_from_u64(sub_seed(seed, 2));
    let mut rng_bc = ChaCha8Rng::seed_from_u64(sub_seed(seed, 3));
    Ok(PointSets {
        pde: lhs_sample_2d(counts.n_pde, (0.0, time_horizon), (0.0, beam_length), &mut rng_pde)?,
        ic: lhs_sample_1d(counts.n_ic, 0.0, beam_length, &mut rng_ic)?,
        bc: lhs_sample_1d(counts.n_bc, 0.0, time_horizon, &mut rng_bc)?,
        seed,
        counts,
    })
}

impl PointSets {
    /// Dumps all points as `kind,t,x` CSV rows (initial rows carry `t = 0`,
    /// boundary rows one line per end).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SamplingError> {
        writeln!(out, "kind,t,x")?;
        for &(t, x) in &self.pde {
            writeln!(out, "pde,{t:.17e},{x:.17e}")?;
        }
        for &x in &self.ic {
            writeln!(out, "ic,{:.17e},{x:.17e}", 0.0)?;
        }
        for &t in &self.bc {
            writeln!(out, "bc,{t:.17e},{:.17e}", 0.0)?;
        }
        Ok(())
    }
}

/// Uniform `nt x nx` evaluation grid, t-outer and x-inner, endpoints included:
/// `t_i = T i / (nt - 1)`, `x_j = L j / (nx - 1)`.
pub fn validation_grid(
    nt: usize,
    nx: usize,
    time_horizon: f64,
    beam_length: f64,
) -> Result<Vec<(f64, f64)>, SamplingError> {
    if nt < 2 || nx < 2 {
        return Err(SamplingError::GridTooSmall(nt, nx));
    }
    check_range(0.0, time_horizon)?;
    check_range(0.0, beam_length)?;
    let mut grid = Vec::with_capacity(nt * nx);
    for i in 0..nt {
        let t = time_horizon * i as f64 / (nt - 1) as f64;
        for j in 0..nx {
            let x = beam_length * j as f64 / (nx - 1) as f64;
            grid.push((t, x));
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lhs_is_stratified() {
        // exactly one point per stratum, for every count and many seeds
        for n in [1usize, 2, 3, 7, 16, 64] {
            for seed in 0..100u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pts = lhs_sample_1d(n, 2.0, 5.0, &mut rng).unwrap();
                let mut hit = vec![false; n];
                for p in &pts {
                    assert!((2.0..5.0).contains(p));
                    let s = (((p - 2.0) / 3.0) * n as f64).floor() as usize;
                    let s = s.min(n - 1);
                    assert!(!hit[s], "stratum {s} hit twice (n = {n}, seed = {seed})");
                    hit[s] = true;
                }
                assert!(hit.iter().all(|&h| h));
            }
        }
    }

    #[test]
    fn lhs_2d_stratified_per_axis() {
        let n = 32;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = lhs_sample_2d(n, (0.0, 1.0), (0.0, 10.0), &mut rng).unwrap();
            let mut hit_t = vec![false; n];
            let mut hit_x = vec![false; n];
            for &(t, x) in &pts {
                let st = ((t * n as f64).floor() as usize).min(n - 1);
                let sx = ((x / 10.0 * n as f64).floor() as usize).min(n - 1);
                assert!(!hit_t[st] && !hit_x[sx]);
                hit_t[st] = true;
                hit_x[sx] = true;
            }
        }
    }

    #[test]
    fn lhs_rejects_degenerate_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(lhs_sample_1d(0, 0.0, 1.0, &mut rng), Err(SamplingError::ZeroCount)));
        assert!(matches!(
            lhs_sample_1d(4, 1.0, 1.0, &mut rng),
            Err(SamplingError::BadRange(1.0, 1.0))
        ));
        assert!(lhs_sample_1d(4, 2.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn point_sets_deterministic_and_decoupled() {
        let counts = PointCounts { n_pde: 50, n_ic: 20, n_bc: 10 };
        let a = build_point_sets(counts, 1.0, 10.0, 42).unwrap();
        let b = build_point_sets(counts, 1.0, 10.0, 42).unwrap();
        assert_eq!(a, b);
        let c = build_point_sets(counts, 1.0, 10.0, 43).unwrap();
        assert_ne!(a.pde, c.pde);
        // changing one count leaves the other sets untouched
        let d = build_point_sets(PointCounts { n_pde: 80, ..counts }, 1.0, 10.0, 42).unwrap();
        assert_eq!(a.ic, d.ic);
        assert_eq!(a.bc, d.bc);
    }

    #[test]
    fn grid_layout_and_spacing() {
        let g = validation_grid(5, 4, 1.0, 10.0).unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], (0.0, 0.0));
        assert_eq!(*g.last().unwrap(), (1.0, 10.0));
        // t-outer ordering: first nx entries share t = 0
        for j in 0..4 {
            assert_eq!(g[j].0, 0.0);
        }
        // uniform spacing to tight tolerance
        for i in 1..5 {
            let dt = g[i * 4].0 - g[(i - 1) * 4].0;
            assert!((dt - 0.25).abs() <= 1e-12);
        }
        for j in 1..4 {
            let dx = g[j].1 - g[j - 1].1;
            assert!((dx - 10.0 / 3.0).abs() <= 1e-12 * 10.0);
        }
        assert!(validation_grid(1, 4, 1.0, 10.0).is_err());
    }

    #[test]
    fn csv_dump_has_header_and_counts() {
        let counts = PointCounts { n_pde: 3, n_ic: 2, n_bc: 1 };
        let sets = build_point_sets(counts, 1.0, 10.0, 7).unwrap();
        let mut buf = Vec::new();
        sets.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kind,t,x");
        assert_eq!(lines.len(), 1 + 3 + 2 + 1);
        assert!(lines[1].starts_with("pde,"));
        assert!(lines[4].starts_with("ic,0"));
        assert!(lines[6].starts_with("bc,"));
    }

    proptest::proptest! {
        #[test]
        fn lhs_points_stay_in_range(n in 1usize..40, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = lhs_sample_1d(n, -1.5, 2.5, &mut rng).unwrap();
            for p in pts {
                proptest::prop_assert!((-1.5..2.5).contains(&p));
            }
        }
    }
}
