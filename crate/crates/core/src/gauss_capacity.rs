//! Capacity and optimal power control of the time-correlated Rayleigh fading
//! AWGN channel with periodic feedback.
//!
//! With feedback every `T` uses, subchannel `t` (1-based) knows the gain
//! `t - 1` uses old, so `U | V = v ~ Phi(., v, alpha^(t-1))`. The capacity is
//! `max (1/T) sum_t E[ln(1 + U rho_t(V))]` subject to
//! `(1/T) sum_t E[rho_t(V)] = P`. For a multiplier `lambda` each cell solves
//! the concave problem `max_rho E[ln(1 + U rho) | v] - lambda rho`, whose
//! optimum is zero when `E[U | v] <= lambda` and otherwise the root of
//! `E[U / (1 + rho U) | v] = lambda`. An outer search adjusts `lambda` to meet
//! the power budget.
//!
//! The conditional mean is increasing in `v`, so every subchannel is inactive
//! below a threshold `v*_t` and active above it. The `v` integral is taken
//! with Gauss–Laguerre nodes shifted to start at `v*_t`, which keeps the kink
//! of the policy at the threshold out of the integrand.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fading::{
    conditional_mean, lag_correlation, ConditionalLaw, ConditionalPoints, ConditionalQuadrature, FadingParams,
};
use crate::special_math::{exp_integral_e1_scaled, gauss_laguerre, gauss_legendre, QuadratureRule};

/// Smallest accepted quadrature order.
pub const MIN_QUAD_NODES: usize = 8;

/// Largest accepted quadrature order.
pub const MAX_QUAD_NODES: usize = 512;

/// Default number of interpolation knots per subchannel of a dense policy table.
pub const DEFAULT_TABLE_KNOTS: usize = 256;

/// Dense policy tables extend this far above the activation threshold.
const TABLE_SPAN: f64 = 40.0;

const PANEL_ORDER: usize = 16;
const GRADING_RATIO: f64 = 0.25;

/// Numerical settings of the capacity solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Gauss–Laguerre order for the fed-back state, and bulk node count of
    /// the conditional-expectation rule.
    pub quad_nodes: usize,
    /// Relative residual of the average-power constraint.
    pub tol: f64,
    /// Absolute residual of the per-cell stationarity condition.
    pub inner_tol: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            quad_nodes: 96,
            tol: 1e-8,
            inner_tol: 1e-10,
            max_outer_iterations: 200,
            max_inner_iterations: 200,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_QUAD_NODES..=MAX_QUAD_NODES).contains(&self.quad_nodes) {
            return Err(Error::Config(format!(
                "quad_nodes must lie in [{MIN_QUAD_NODES}, {MAX_QUAD_NODES}], got {}",
                self.quad_nodes
            )));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.inner_tol.is_nan() || self.inner_tol <= 0.0 {
            return Err(Error::Config(format!("inner_tol must be positive, got {}", self.inner_tol)));
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::Config("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Power allocation of one subchannel as a function of the fed-back gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SubchannelPolicy {
    /// Correlation between the fed-back gain and the gain of this subchannel.
    pub sigma: f64,
    /// `rho` vanishes for `v < threshold`.
    pub threshold: f64,
    /// Quadrature nodes for `V` on `[threshold, inf)` and their weights under
    /// the stationary law.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Power at each node.
    pub rho: Vec<f64>,
    table_v: Vec<f64>,
    table_rho: Vec<f64>,
}

impl SubchannelPolicy {
    fn new(sigma: f64, threshold: f64, nodes: Vec<f64>, weights: Vec<f64>, rho: Vec<f64>) -> Self {
        let mut table_v = Vec::with_capacity(nodes.len() + 1);
        let mut table_rho = Vec::with_capacity(nodes.len() + 1);
        if threshold > 0.0 {
            table_v.push(threshold);
            table_rho.push(0.0);
        }
        table_v.extend_from_slice(&nodes);
        table_rho.extend_from_slice(&rho);
        Self {
            sigma,
            threshold,
            nodes,
            weights,
            rho,
            table_v,
            table_rho,
        }
    }

    /// Power for fed-back gain `v`: zero below the threshold, piecewise-linear
    /// between table knots, flat beyond the last knot.
    pub fn power_at(&self, v: f64) -> f64 {
        if v < self.threshold || self.table_v.is_empty() {
            return 0.0;
        }
        let k = self.table_v.partition_point(|&x| x <= v);
        if k == 0 {
            return self.table_rho[0];
        }
        if k == self.table_v.len() {
            return self.table_rho[k - 1];
        }
        let (v0, v1) = (self.table_v[k - 1], self.table_v[k]);
        let (r0, r1) = (self.table_rho[k - 1], self.table_rho[k]);
        (r0 + (r1 - r0) * (v - v0) / (v1 - v0)).max(0.0)
    }

    /// `E[rho(V)]` under the stationary law.
    pub fn average_power(&self) -> f64 {
        self.weights.iter().zip(&self.rho).map(|(w, r)| w * r).sum()
    }

    pub fn table_len(&self) -> usize {
        self.table_v.len()
    }
}

/// Power policy `rho_t(v)` for all subchannels of one feedback period.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerPolicy {
    lambda: Option<f64>,
    subchannels: Vec<SubchannelPolicy>,
}

impl PowerPolicy {
    /// The same power in every use, whatever the feedback.
    pub fn constant(period: usize, power: f64) -> Result<Self> {
        if period == 0 {
            return Err(Error::Domain("period T must be at least 1".into()));
        }
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::Domain(format!("power must be finite and non-negative, got {power}")));
        }
        // One node carries the full stationary mass; exact for constant rho.
        let sub = SubchannelPolicy::new(0.0, 0.0, vec![1.0], vec![1.0], vec![power]);
        Ok(Self {
            lambda: None,
            subchannels: vec![sub; period],
        })
    }

    pub fn zero(period: usize) -> Result<Self> {
        Self::constant(period, 0.0)
    }

    pub fn period(&self) -> usize {
        self.subchannels.len()
    }

    /// Multiplier of the power constraint; `None` for hand-built policies.
    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn subchannels(&self) -> &[SubchannelPolicy] {
        &self.subchannels
    }

    /// Subchannel `t`, 1-based.
    pub fn subchannel(&self, t: usize) -> &SubchannelPolicy {
        &self.subchannels[t - 1]
    }

    /// Power applied in subchannel `t` (1-based) when `v` was fed back.
    pub fn power_at(&self, t: usize, v: f64) -> f64 {
        self.subchannels[t - 1].power_at(v)
    }

    /// Copy with the node values replaced by `f(t, i, rho)` (`t` 1-based,
    /// `i` the node index); interpolation tables are rebuilt from the nodes.
    pub fn map_rho<G: FnMut(usize, usize, f64) -> f64>(&self, mut f: G) -> Self {
        let subchannels = self
            .subchannels
            .iter()
            .enumerate()
            .map(|(t, sub)| {
                let rho = sub.rho.iter().enumerate().map(|(i, &r)| f(t + 1, i, r).max(0.0)).collect();
                SubchannelPolicy::new(sub.sigma, sub.threshold, sub.nodes.clone(), sub.weights.clone(), rho)
            })
            .collect();
        Self {
            lambda: self.lambda,
            subchannels,
        }
    }

    /// `(1/T) sum_t E[rho_t(V)]` by quadrature.
    pub fn average_power(&self) -> f64 {
        self.subchannels.iter().map(SubchannelPolicy::average_power).sum::<f64>() / self.period() as f64
    }
}

/// Diagnostics of a capacity solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveDiagnostics {
    pub outer_iterations: usize,
    pub achieved_power: f64,
    /// `|achieved_power / P - 1|`.
    pub power_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub capacity_bits: f64,
    /// Rate of each subchannel in bits.
    pub per_subchannel: Vec<f64>,
    pub policy: PowerPolicy,
    pub diagnostics: SolveDiagnostics,
}

/// Stationarity certificate of a solved policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest `|E[U / (1 + rho U) | v] - lambda|` over active nodes.
    pub max_active_residual: f64,
    /// Largest `E[U | v] - lambda` over nodes where the policy is zero,
    /// including stationary-grid nodes below each threshold. Non-positive
    /// when the inactive cells are certified.
    pub max_inactive_excess: f64,
    pub active_cells: usize,
    pub inactive_cells: usize,
}

impl KktReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_active_residual < tol && self.max_inactive_excess <= tol
    }
}

/// Solver with its quadrature rules built once.
#[derive(Debug, Clone)]
pub struct CapacitySolver {
    config: SolverConfig,
    v_rule: QuadratureRule<f64>,
    panel: QuadratureRule<f64>,
    conditional: ConditionalQuadrature,
}

impl CapacitySolver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            v_rule: gauss_laguerre::<f64>(config.quad_nodes)?,
            panel: gauss_legendre::<f64>(PANEL_ORDER)?,
            conditional: ConditionalQuadrature::new(config.quad_nodes)?,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Optimal power for one cell: zero when `E[U | v] <= lambda`, else the
    /// root of `E[U / (1 + rho U) | v] = lambda`.
    pub fn inner_power(&self, v: f64, sigma: f64, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("multiplier must be positive, got {lambda}")));
        }
        let law = ConditionalLaw::new(sigma)?;
        if law.is_point_mass() {
            return Ok(water_level(v, lambda));
        }
        let points = self.conditional.points(law, v);
        self.solve_cell(&points, conditional_mean(v, sigma), lambda)
    }

    /// Safeguarded Newton on `g(rho) = E[U / (1 + rho U)] - lambda`, which is
    /// convex and decreasing. Jensen gives `g(1/lambda - 1/mean) <= 0`.
    fn solve_cell(&self, points: &ConditionalPoints, mean: f64, lambda: f64) -> Result<f64> {
        if mean <= lambda {
            return Ok(0.0);
        }
        let residual = |rho: f64| {
            let (mut s1, mut s2) = (0.0, 0.0);
            for (&u, &w) in points.values.iter().zip(&points.weights) {
                let r = u / (1.0 + rho * u);
                s1 += w * r;
                s2 += w * r * r;
            }
            (s1 - lambda, s2)
        };
        let mut lo = 0.0;
        let mut hi = 1.0 / lambda - 1.0 / mean;
        let mut x = hi;
        let mut last = (f64::NAN, f64::NAN);
        for _ in 0..self.config.max_inner_iterations {
            let (g, slope) = residual(x);
            last = (lo, hi);
            if g.abs() < self.config.inner_tol {
                return Ok(x);
            }
            if g > 0.0 {
                lo = x;
                if x >= hi {
                    hi = 2.0 * x.max(f64::MIN_POSITIVE);
                }
            } else {
                hi = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(0.5 * (lo + hi));
            }
            let step = x + g / slope;
            x = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        }
        Err(Error::Convergence {
            iterations: self.config.max_inner_iterations,
            detail: format!("cell power bracket [{:.6e}, {:.6e}] at lambda={lambda:e}", last.0, last.1),
        })
    }

    /// Nodes and stationary weights for `V` on `[start, inf)`.
    fn shifted_nodes(&self, start: f64) -> (Vec<f64>, Vec<f64>) {
        let scale = (-start).exp();
        let nodes = self.v_rule.nodes().iter().map(|y| start + y).collect();
        let weights = self.v_rule.weights().iter().map(|w| w * scale).collect();
        (nodes, weights)
    }

    /// As [`Self::shifted_nodes`], with Gauss–Legendre panels on
    /// `[start, start + 1]` shrinking geometrically towards `start`. Resolves
    /// integrands singular at `v = 0` when `start` is small.
    fn graded_nodes(&self, start: f64) -> (Vec<f64>, Vec<f64>) {
        let levels = ((4.0 / start).ln() / GRADING_RATIO.recip().ln()).ceil().clamp(1.0, 40.0) as i32;
        let mut edges = vec![start];
        edges.extend((0..levels).rev().map(|k| start + GRADING_RATIO.powi(k)));
        let (mut nodes, mut weights) = (Vec::new(), Vec::new());
        for pair in edges.windows(2) {
            let (mid, len) = (0.5 * (pair[0] + pair[1]), 0.5 * (pair[1] - pair[0]));
            for (x, w) in self.panel.iter() {
                let v = mid + len * x;
                nodes.push(v);
                weights.push(len * w * (-v).exp());
            }
        }
        let (tail_nodes, tail_weights) = self.shifted_nodes(start + 1.0);
        nodes.extend(tail_nodes);
        weights.extend(tail_weights);
        (nodes, weights)
    }

    /// Policy of one subchannel at multiplier `lambda`.
    fn subchannel_policy(&self, sigma: f64, lambda: f64) -> Result<SubchannelPolicy> {
        let shift = if sigma == 0.0 {
            0.0
        } else {
            activation_threshold(sigma, lambda).max(0.0)
        };
        // With the current gain known, rho = 1/lambda - 1/v and the rate
        // ln(v / lambda) are singular only lambda below the threshold.
        let (nodes, weights) = if sigma == 1.0 {
            self.graded_nodes(shift)
        } else {
            self.shifted_nodes(shift)
        };

        let rho = if sigma == 1.0 {
            nodes.iter().map(|&v| water_level(v, lambda)).collect()
        } else if sigma == 0.0 {
            let law = ConditionalLaw::new(0.0)?;
            let level = self.solve_cell(&self.conditional.points(law, 0.0), 1.0, lambda)?;
            vec![level; nodes.len()]
        } else {
            let law = ConditionalLaw::new(sigma)?;
            nodes
                .iter()
                .map(|&v| self.solve_cell(&self.conditional.points(law, v), conditional_mean(v, sigma), lambda))
                .collect::<Result<Vec<_>>>()?
        };
        let threshold = if sigma == 0.0 && rho[0] == 0.0 { f64::INFINITY } else { shift };
        Ok(SubchannelPolicy::new(sigma, threshold, nodes, weights, rho))
    }

    fn policy_at(&self, sigmas: &[f64], lambda: f64) -> Result<PowerPolicy> {
        let subchannels = sigmas
            .par_iter()
            .map(|&s| self.subchannel_policy(s, lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(PowerPolicy {
            lambda: Some(lambda),
            subchannels,
        })
    }

    /// Optimal policy for period `period`, with the multiplier search started
    /// from the full-feedback water level.
    pub fn solve_policy(&self, params: &FadingParams, period: usize) -> Result<(PowerPolicy, SolveDiagnostics)> {
        self.solve_policy_from(params, period, None)
    }

    /// As [`CapacitySolver::solve_policy`], starting the multiplier search at
    /// `lambda_guess` when given.
    pub fn solve_policy_from(
        &self,
        params: &FadingParams,
        period: usize,
        lambda_guess: Option<f64>,
    ) -> Result<(PowerPolicy, SolveDiagnostics)> {
        if period == 0 {
            return Err(Error::Domain("period T must be at least 1".into()));
        }
        let target = params.power();
        let sigmas: Vec<f64> = (0..period).map(|lag| lag_correlation(params.alpha(), lag)).collect();
        let tol = self.config.tol;
        let counter = std::cell::Cell::new(0usize);
        // f(x) = ln(power(e^x) / P), decreasing in x = ln(lambda).
        let eval = |x: f64| -> Result<(f64, PowerPolicy)> {
            counter.set(counter.get() + 1);
            let policy = self.policy_at(&sigmas, x.exp())?;
            let power = policy.average_power();
            if power.is_nan() || power <= 0.0 {
                return Ok((f64::NEG_INFINITY, policy));
            }
            Ok(((power / target).ln(), policy))
        };
        let accept = |f: f64| f.is_finite() && f.exp_m1().abs() <= tol;

        let guess = match lambda_guess {
            Some(l) if l > 0.0 && l.is_finite() => l,
            _ => water_filling_cutoff(target)?,
        };
        let mut a = guess.ln();
        let (mut fa, pa) = eval(a)?;
        if accept(fa) {
            return Ok(finish(pa, counter.get(), target));
        }
        // Expand geometrically until the root is bracketed.
        let step = if lambda_guess.is_some() { 0.05 } else { 0.5 };
        let dir = if fa > 0.0 { 1.0 } else { -1.0 };
        let mut width = step;
        let (mut b, mut fb);
        loop {
            b = a + dir * width;
            let (f, p) = eval(b)?;
            fb = f;
            if accept(fb) {
                return Ok(finish(p, counter.get(), target));
            }
            if (fb > 0.0) != (fa > 0.0) {
                break;
            }
            a = b;
            fa = fb;
            width *= 2.0;
            if counter.get() >= self.config.max_outer_iterations || width > 200.0 {
                return Err(Error::Numerical(format!(
                    "could not bracket the power multiplier; last lambda {:e}",
                    b.exp()
                )));
            }
        }

        // Illinois on the bracket [a, b]; f(a) and f(b) have opposite signs.
        let mut side = 0i8;
        while counter.get() < self.config.max_outer_iterations {
            let c = if fa.is_finite() && fb.is_finite() {
                (a * fb - b * fa) / (fb - fa)
            } else {
                0.5 * (a + b)
            };
            let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
            let (fc, pc) = eval(c)?;
            if accept(fc) || (b - a).abs() <= 1e-15 * c.abs().max(1.0) {
                return Ok(finish(pc, counter.get(), target));
            }
            if (fc > 0.0) == (fb > 0.0) {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
        }
        Err(Error::Convergence {
            iterations: counter.get(),
            detail: format!(
                "power multiplier bracket [{:.12e}, {:.12e}] did not meet relative tolerance {tol:e}",
                a.exp().min(b.exp()),
                a.exp().max(b.exp())
            ),
        })
    }

    /// Rate of each subchannel of `policy`, in bits.
    pub fn subchannel_rates(&self, policy: &PowerPolicy) -> Result<Vec<f64>> {
        policy
            .subchannels
            .par_iter()
            .map(|sub| self.subchannel_rate(sub))
            .collect()
    }

    fn subchannel_rate(&self, sub: &SubchannelPolicy) -> Result<f64> {
        let law = ConditionalLaw::new(sub.sigma)?;
        let mut nats = 0.0;
        for ((&v, &w), &rho) in sub.nodes.iter().zip(&sub.weights).zip(&sub.rho) {
            if rho > 0.0 {
                nats += w * self.conditional.expect(law, v, |u| (rho * u).ln_1p());
            }
        }
        Ok(nats * std::f64::consts::LOG2_E)
    }

    /// Objective `(1/T) sum_t E[log2(1 + U rho_t(V))]` of any policy.
    pub fn evaluate(&self, policy: &PowerPolicy) -> Result<f64> {
        let rates = self.subchannel_rates(policy)?;
        Ok(rates.iter().sum::<f64>() / rates.len() as f64)
    }

    pub fn capacity(&self, params: &FadingParams, period: usize) -> Result<CapacityResult> {
        self.capacity_from(params, period, None)
    }

    pub fn capacity_from(
        &self,
        params: &FadingParams,
        period: usize,
        lambda_guess: Option<f64>,
    ) -> Result<CapacityResult> {
        let (policy, diagnostics) = self.solve_policy_from(params, period, lambda_guess)?;
        let per_subchannel = self.subchannel_rates(&policy)?;
        let capacity_bits = per_subchannel.iter().sum::<f64>() / period as f64;
        Ok(CapacityResult {
            capacity_bits,
            per_subchannel,
            policy,
            diagnostics,
        })
    }

    /// Stationarity certificate of a solved policy.
    pub fn kkt_certificate(&self, policy: &PowerPolicy) -> Result<KktReport> {
        let lambda = policy
            .lambda
            .ok_or_else(|| Error::Domain("policy carries no multiplier".into()))?;
        let mut report = KktReport {
            max_active_residual: 0.0,
            max_inactive_excess: f64::NEG_INFINITY,
            active_cells: 0,
            inactive_cells: 0,
        };
        for sub in &policy.subchannels {
            let law = ConditionalLaw::new(sub.sigma)?;
            let mut inactive = |v: f64| {
                report.inactive_cells += 1;
                report.max_inactive_excess = report.max_inactive_excess.max(conditional_mean(v, sub.sigma) - lambda);
            };
            for (&v, &rho) in sub.nodes.iter().zip(&sub.rho) {
                if rho > 0.0 {
                    let stationarity = if law.is_point_mass() {
                        v / (1.0 + rho * v)
                    } else {
                        self.conditional.expect(law, v, |u| u / (1.0 + rho * u))
                    };
                    report.active_cells += 1;
                    report.max_active_residual = report.max_active_residual.max((stationarity - lambda).abs());
                } else {
                    inactive(v);
                }
            }
            for &v in self.v_rule.nodes().iter().filter(|&&v| v < sub.threshold) {
                inactive(v);
            }
        }
        Ok(report)
    }

    /// Replaces the interpolation tables of `policy` by `knots` points per
    /// subchannel, spaced quadratically from the threshold so they cluster
    /// where the policy bends most.
    pub fn refine_table(&self, policy: &mut PowerPolicy, knots: usize) -> Result<()> {
        let lambda = policy
            .lambda
            .ok_or_else(|| Error::Domain("policy carries no multiplier".into()))?;
        if knots < 2 {
            return Err(Error::Config("a policy table needs at least two knots".into()));
        }
        let tables = policy
            .subchannels
            .par_iter()
            .map(|sub| -> Result<(Vec<f64>, Vec<f64>)> {
                if sub.sigma == 0.0 || !sub.threshold.is_finite() {
                    return Ok((sub.table_v.clone(), sub.table_rho.clone()));
                }
                let start = sub.threshold;
                let v: Vec<f64> = (0..knots)
                    .map(|k| {
                        let r = k as f64 / (knots - 1) as f64;
                        start + TABLE_SPAN * r * r
                    })
                    .collect();
                let rho = v
                    .iter()
                    .map(|&x| self.inner_power(x, sub.sigma, lambda))
                    .collect::<Result<Vec<_>>>()?;
                Ok((v, rho))
            })
            .collect::<Result<Vec<_>>>()?;
        for (sub, (v, rho)) in policy.subchannels.iter_mut().zip(tables) {
            sub.table_v = v;
            sub.table_rho = rho;
        }
        Ok(())
    }
}

fn finish(policy: PowerPolicy, evaluations: usize, target: f64) -> (PowerPolicy, SolveDiagnostics) {
    let achieved_power = policy.average_power();
    let diagnostics = SolveDiagnostics {
        outer_iterations: evaluations,
        achieved_power,
        power_residual: (achieved_power / target - 1.0).abs(),
    };
    (policy, diagnostics)
}

/// `max(0, 1/lambda - 1/v)`: water-filling against a known gain.
fn water_level(v: f64, lambda: f64) -> f64 {
    if v <= lambda {
        0.0
    } else {
        1.0 / lambda - 1.0 / v
    }
}

/// Fed-back gain at which `E[U | v] = lambda`; non-positive when every cell
/// is active. Infinite when `sigma = 0` (no dependence on `v`).
fn activation_threshold(sigma: f64, lambda: f64) -> f64 {
    if sigma == 0.0 {
        return if lambda < 1.0 { 0.0 } else { f64::INFINITY };
    }
    let s2 = sigma * sigma;
    (lambda - (1.0 - s2)) / s2
}

/// Optimal power for one cell with the default quadrature.
pub fn inner_power(v: f64, sigma: f64, lambda: f64, tol: f64) -> Result<f64> {
    let config = SolverConfig {
        inner_tol: tol,
        ..SolverConfig::default()
    };
    CapacitySolver::new(config)?.inner_power(v, sigma, lambda)
}

/// Optimal policy with default quadrature and relative power tolerance `tol`.
pub fn solve_policy(params: &FadingParams, period: usize, tol: f64) -> Result<PowerPolicy> {
    Ok(CapacitySolver::new(SolverConfig::with_tol(tol))?
        .solve_policy(params, period)?
        .0)
}

/// Capacity with feedback every `period` uses, default quadrature and
/// relative power tolerance `tol`.
pub fn capacity_gaussian(params: &FadingParams, period: usize, tol: f64) -> Result<CapacityResult> {
    CapacitySolver::new(SolverConfig::with_tol(tol))?.capacity(params, period)
}

/// Capacity without transmitter side information:
/// `E[log2(1 + U P)] = log2(e) e^{1/P} E1(1/P)`.
pub fn capacity_no_csit(power: f64) -> Result<f64> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::Domain(format!("power must be positive and finite, got {power}")));
    }
    Ok(std::f64::consts::LOG2_E * exp_integral_e1_scaled(1.0 / power)?)
}

/// Cutoff `u0` of water-filling over `Exp(1)` gains: the root of
/// `e^{-u}/u - E1(u) = P`.
pub fn water_filling_cutoff(power: f64) -> Result<f64> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::Domain(format!("power must be positive and finite, got {power}")));
    }
    // ln(e^{-u}/u - E1(u)) = -u + ln(1/u - e^u E1(u)), decreasing in u.
    let excess = |u: f64| -> Result<f64> {
        let gap = 1.0 / u - exp_integral_e1_scaled(u)?;
        Ok(-u + gap.max(f64::MIN_POSITIVE).ln() - power.ln())
    };
    let (mut lo, mut hi) = (1.0, 1.0);
    while excess(lo)? < 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::Numerical("water-filling cutoff below representable range".into()));
        }
    }
    while excess(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Numerical("water-filling cutoff above 1e6".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Capacity with the gain known at the transmitter in every use:
/// `log2(e) E1(u0)` with `u0` the water-filling cutoff.
pub fn capacity_full_csit(power: f64) -> Result<f64> {
    let u0 = water_filling_cutoff(power)?;
    Ok(std::f64::consts::LOG2_E * exp_integral_e1_scaled(u0)? * (-u0).exp())
}
