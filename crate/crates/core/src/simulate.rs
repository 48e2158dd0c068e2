//! Monte Carlo check of the feedback scheme on simulated fading paths.
//!
//! The transmitter learns `v = u` at the first instant of every period and
//! applies `rho_t(v)` at offset `t` of that period. The sample mean of
//! `log2(1 + u rho)` is the ergodic rate the scheme achieves; no codewords are
//! drawn because the information density reduces to exactly this mean.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fading::{conditional_cdf, FadingParams, FadingProcess};
use crate::gauss_capacity::{CapacityResult, CapacitySolver, PowerPolicy, DEFAULT_TABLE_KNOTS};
use crate::special_math::{gauss_laguerre, gauss_legendre};

/// Target number of batches for batch-means error bars.
pub const BATCHES: usize = 1000;

/// Smallest path accepted by [`validate_fading`].
pub const MIN_VALIDATION_SAMPLES: usize = 100_000;

/// Bins per axis of the strata test; edges are the `Exp(1)` quantiles.
pub const STRATA_BINS: usize = 5;

const CELL_MASS_ORDER: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub empirical_rate_bits: f64,
    /// Batch-means standard error; infinite when fewer than two batches fit.
    pub std_error: f64,
    pub n_samples: usize,
    pub achieved_power: f64,
    pub ks_statistic: Option<f64>,
    pub strata: Option<StrataReport>,
}

/// Joint histogram of lagged pairs `(v, u) = (u_i, u_{i+lag})` against the
/// cell masses of `e^{-v} Phi(u, v, alpha^lag)`. Cells are row-major in `v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrataReport {
    pub lag: usize,
    pub sigma: f64,
    pub edges: Vec<f64>,
    pub pairs: usize,
    pub expected: Vec<f64>,
    pub observed: Vec<f64>,
    /// Batch-means standard error of each observed frequency, floored at the
    /// independent-multinomial value.
    pub batch_std_error: Vec<f64>,
    /// `sum (O - E)^2 / E` over counts, as if pairs were independent.
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    /// Largest `|O - E|` in independent-multinomial standard deviations.
    pub max_multinomial_z: f64,
    /// Largest `|O - E|` in batch-means standard errors.
    pub max_batch_z: f64,
}

impl StrataReport {
    pub fn within_bands(&self, z: f64) -> bool {
        self.max_batch_z < z
    }
}

/// Contiguous batch layout over `units` items; batch `k` is
/// `[k units / b, (k+1) units / b)`.
fn batch_bounds(units: usize) -> Vec<usize> {
    let b = BATCHES.min(units);
    (0..=b).map(|k| k * units / b).collect()
}

/// Overall mean and batch-means standard error of per-batch sums.
fn batch_mean_se(sums: &[f64], counts: &[usize]) -> (f64, f64) {
    let total: usize = counts.iter().sum();
    let mean = sums.iter().sum::<f64>() / total as f64;
    let b = sums.len();
    if b < 2 {
        return (mean, f64::INFINITY);
    }
    let var = sums
        .iter()
        .zip(counts)
        .map(|(&s, &c)| (s / c as f64 - mean).powi(2))
        .sum::<f64>()
        / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

/// Runs the scheme for `n` channel uses (`n` a positive multiple of `T`).
/// Off-node feedback values use [`PowerPolicy::power_at`], the same lookup
/// the power audit integrates.
pub fn empirical_rate(policy: &PowerPolicy, params: &FadingParams, n: usize, seed: u64) -> Result<SimReport> {
    let period = policy.period();
    if n == 0 || !n.is_multiple_of(period) {
        return Err(usage(format!("samples: {n} is not a positive multiple of the period {period}")));
    }
    let bounds = batch_bounds(n / period);
    let mut gains = FadingProcess::new(params.alpha(), seed).map(|h| h.norm_sqr());
    let mut rate_sums = Vec::with_capacity(bounds.len() - 1);
    let mut counts = Vec::with_capacity(bounds.len() - 1);
    let mut power_sum = 0.0;
    for w in bounds.windows(2) {
        let mut rate = 0.0;
        for _ in w[0]..w[1] {
            let mut v = 0.0;
            for t in 1..=period {
                let u = gains.next().expect("fading process is unbounded");
                if t == 1 {
                    v = u;
                }
                let rho = policy.power_at(t, v);
                rate += (u * rho).ln_1p();
                power_sum += rho;
            }
        }
        rate_sums.push(rate * std::f64::consts::LOG2_E);
        counts.push((w[1] - w[0]) * period);
    }
    let (mean, se) = batch_mean_se(&rate_sums, &counts);
    Ok(SimReport {
        empirical_rate_bits: mean,
        std_error: se,
        n_samples: n,
        achieved_power: power_sum / n as f64,
        ks_statistic: None,
        strata: None,
    })
}

/// One [`empirical_rate`] run per seed, in parallel, reported in seed order.
pub fn empirical_rate_replicated(
    policy: &PowerPolicy,
    params: &FadingParams,
    n: usize,
    seeds: &[u64],
) -> Result<Vec<SimReport>> {
    seeds.par_iter().map(|&s| empirical_rate(policy, params, n, s)).collect()
}

/// Solves for the optimal policy, densifies its lookup table and simulates it.
pub fn simulate_capacity(
    solver: &CapacitySolver,
    params: &FadingParams,
    period: usize,
    n: usize,
    seed: u64,
) -> Result<(CapacityResult, SimReport)> {
    let mut result = solver.capacity(params, period)?;
    solver.refine_table(&mut result.policy, DEFAULT_TABLE_KNOTS)?;
    let report = empirical_rate(&result.policy, params, n, seed)?;
    Ok((result, report))
}

fn exponential_quantile(p: f64) -> f64 {
    -(-p).ln_1p()
}

/// Kolmogorov–Smirnov distance between the sample and `1 - e^{-u}`.
pub fn ks_exponential(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let cdf = -(-u).exp_m1();
            (cdf - i as f64 / n).max((i + 1) as f64 / n - cdf)
        })
        .fold(0.0, f64::max)
}

/// Masses of the cells `[e_j, e_{j+1}) x [e_k, e_{k+1})` under
/// `e^{-v} Phi(u, v, sigma)`, row-major in `v`. The last edge is infinite.
pub fn strata_cell_masses(edges: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let bins = edges.len() - 1;
    let legendre = gauss_legendre::<f64>(CELL_MASS_ORDER)?;
    let laguerre = gauss_laguerre::<f64>(CELL_MASS_ORDER)?;
    let mut masses = vec![0.0; bins * bins];
    for j in 0..bins {
        let (a, b) = (edges[j], edges[j + 1]);
        // (v, weight including e^{-v}) over the v-bin
        let points: Vec<(f64, f64)> = if b.is_finite() {
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            legendre
                .iter()
                .map(|(z, w)| {
                    let v = mid + half * z;
                    (v, half * w * (-v).exp())
                })
                .collect()
        } else {
            laguerre.iter().map(|(x, w)| (a + x, w * (-a).exp())).collect()
        };
        for (v, w) in points {
            let cdf: Vec<f64> = edges
                .iter()
                .map(|&e| if e.is_finite() { conditional_cdf(e, v, sigma) } else { 1.0 })
                .collect();
            for k in 0..bins {
                masses[j * bins + k] += w * (cdf[k + 1] - cdf[k]).max(0.0);
            }
        }
    }
    Ok(masses)
}

fn strata_report(path: &[f64], lag: usize, sigma: f64) -> Result<StrataReport> {
    let bins = STRATA_BINS;
    let edges: Vec<f64> = (0..=bins).map(|k| exponential_quantile(k as f64 / bins as f64)).collect();
    let expected = strata_cell_masses(&edges, sigma)?;
    let cell_of = |x: f64| edges[1..bins].partition_point(|&e| e <= x);

    let pairs = path.len() - lag;
    let bounds = batch_bounds(pairs);
    let cells = bins * bins;
    let mut batch_counts = vec![vec![0usize; cells]; bounds.len() - 1];
    for (b, w) in bounds.windows(2).enumerate() {
        for i in w[0]..w[1] {
            batch_counts[b][cell_of(path[i]) * bins + cell_of(path[i + lag])] += 1;
        }
    }
    let sizes: Vec<usize> = bounds.windows(2).map(|w| w[1] - w[0]).collect();

    let mut observed = Vec::with_capacity(cells);
    let mut batch_std_error = Vec::with_capacity(cells);
    let (mut chi_square, mut max_multinomial_z, mut max_batch_z) = (0.0, 0.0f64, 0.0f64);
    for c in 0..cells {
        let sums: Vec<f64> = batch_counts.iter().map(|row| row[c] as f64).collect();
        let (freq, batch_se) = batch_mean_se(&sums, &sizes);
        let p = expected[c];
        let n = pairs as f64;
        let multinomial_sd = (p * (1.0 - p) / n).sqrt();
        // Rare cells can be empty in every batch; positive correlation only
        // widens the error, so the independent value is a floor.
        let se = batch_se.max(multinomial_sd);
        chi_square += (freq - p).powi(2) * n / p;
        max_multinomial_z = max_multinomial_z.max((freq - p).abs() / multinomial_sd);
        max_batch_z = max_batch_z.max((freq - p).abs() / se);
        observed.push(freq);
        batch_std_error.push(se);
    }
    Ok(StrataReport {
        lag,
        sigma,
        edges,
        pairs,
        expected,
        observed,
        batch_std_error,
        chi_square,
        degrees_of_freedom: cells - 1,
        max_multinomial_z,
        max_batch_z,
    })
}

/// Distribution check of a simulated path: marginal KS against `Exp(1)` and
/// the lag-`lag` strata test against `Phi(u, v, alpha^lag)`. The rate fields
/// describe constant power `P`, whose ergodic rate is the no-CSIT capacity.
pub fn validate_fading(params: &FadingParams, lag: usize, n: usize, seed: u64) -> Result<SimReport> {
    if lag == 0 {
        return Err(usage("lag: must be at least 1"));
    }
    if n < MIN_VALIDATION_SAMPLES {
        return Err(usage(format!("samples: {n} is below the minimum {MIN_VALIDATION_SAMPLES}")));
    }
    let path: Vec<f64> = FadingProcess::new(params.alpha(), seed).take(n).map(|h| h.norm_sqr()).collect();
    let power = params.power();
    let bounds = batch_bounds(n);
    let sums: Vec<f64> = bounds
        .windows(2)
        .map(|w| path[w[0]..w[1]].iter().map(|&u| (power * u).ln_1p()).sum::<f64>() * std::f64::consts::LOG2_E)
        .collect();
    let sizes: Vec<usize> = bounds.windows(2).map(|w| w[1] - w[0]).collect();
    let (mean, se) = batch_mean_se(&sums, &sizes);
    let strata = strata_report(&path, lag, params.lag_correlation(lag))?;
    Ok(SimReport {
        empirical_rate_bits: mean,
        std_error: se,
        n_samples: n,
        achieved_power: power,
        ks_statistic: Some(ks_exponential(&path)),
        strata: Some(strata),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_layout_covers_everything() {
        let b = batch_bounds(2500);
        assert_eq!(b.len(), BATCHES + 1);
        assert_eq!((b[0], b[BATCHES]), (0, 2500));
        assert!(b.windows(2).all(|w| w[1] - w[0] >= 2));
        assert_eq!(batch_bounds(3), vec![0, 1, 2, 3]);
    }

    #[test]
    fn batch_se_of_constant_is_zero() {
        let (m, se) = batch_mean_se(&[4.0, 4.0, 6.0], &[2, 2, 3]);
        assert_eq!((m, se), (2.0, 0.0));
        assert!(batch_mean_se(&[1.0], &[1]).1.is_infinite());
    }

    #[test]
    fn rejects_bad_lengths() {
        let p = FadingParams::new(0.5, 1.0).unwrap();
        let policy = PowerPolicy::constant(3, 1.0).unwrap();
        assert!(matches!(empirical_rate(&policy, &p, 0, 1), Err(Error::Usage(_))));
        assert!(matches!(empirical_rate(&policy, &p, 10, 1), Err(Error::Usage(_))));
        assert!(validate_fading(&p, 0, 200_000, 1).is_err());
        assert!(validate_fading(&p, 1, 1000, 1).is_err());
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| exponential_quantile((i as f64 + 0.5) / n as f64)).collect();
        assert!((ks_exponential(&s) - 0.5 / n as f64).abs() < 1e-12);
    }
}
