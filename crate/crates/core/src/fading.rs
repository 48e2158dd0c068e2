//! Time-correlated Rayleigh fading.
//!
//! The power gain `u_n = |h_n|^2` follows the first-order Gauss–Markov
//! recursion `h_n = alpha h_{n-1} + sqrt(1 - alpha^2) w_n` with unit-variance
//! circularly symmetric complex Gaussian innovations. Its marginal law is
//! `Exp(1)` and, given `u_m = v`, the gain `k` steps later has the bivariate
//! Rayleigh density `Phi(u, v, alpha^k)`.
//!
//! Conditional expectations under `Phi` are taken in the amplitude
//! `sqrt(u)`, where the law is a Rice bump of fixed width around
//! `sigma sqrt(v)`; see [`ConditionalQuadrature`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::special_math::{bessel_i0_scaled, gauss_legendre, QuadratureRule};

/// Lag correlations below this value are treated as exactly zero.
pub const SIGMA_SNAP: f64 = 1e-12;

/// Default number of bulk nodes of [`ConditionalQuadrature`].
pub const DEFAULT_CONDITIONAL_NODES: usize = 96;

const PANEL_ORDER: usize = 16;
const GRADED_PANELS: usize = 10;
const GRADING_RATIO: f64 = 0.2;
const WINDOW_HALF_WIDTH: f64 = 7.5;

/// Correlation coefficient and average transmit power of the fading channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingParams {
    alpha: f64,
    power: f64,
}

impl FadingParams {
    /// `alpha` in `[0, 1]` (the endpoints are the independent and static
    /// limits), `power` a positive linear SNR.
    pub fn new(alpha: f64, power: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!(
                "correlation coefficient must lie in [0, 1], got {alpha}"
            )));
        }
        if !(power.is_finite() && power > 0.0) {
            return Err(Error::Domain(format!(
                "average power must be positive and finite, got {power}"
            )));
        }
        Ok(Self { alpha, power })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    /// Correlation `alpha^lag` between gains `lag` steps apart.
    pub fn lag_correlation(&self, lag: usize) -> f64 {
        lag_correlation(self.alpha, lag)
    }
}

/// `alpha^lag`, evaluated in log space and snapped to zero below [`SIGMA_SNAP`].
pub fn lag_correlation(alpha: f64, lag: usize) -> f64 {
    if lag == 0 || alpha == 1.0 {
        return 1.0;
    }
    if alpha == 0.0 {
        return 0.0;
    }
    let sigma = (lag as f64 * alpha.ln()).exp();
    if sigma < SIGMA_SNAP {
        0.0
    } else {
        sigma
    }
}

/// Law of the gain given the gain observed some lag earlier, parametrized by
/// the effective correlation `sigma`.
///
/// `sigma = 1` is the point mass at the observed value (the feedback is the
/// current state); `sigma = 0` is the stationary law, independent of the
/// observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalLaw {
    sigma: f64,
}

impl ConditionalLaw {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&sigma) {
            return Err(Error::Domain(format!(
                "effective correlation must lie in [0, 1], got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    /// Law seen by subchannel `t` (1-based): feedback is `t - 1` uses old.
    pub fn for_subchannel(alpha: f64, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::Domain("subchannel index is 1-based".into()));
        }
        Self::new(lag_correlation(alpha, t - 1))
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_point_mass(&self) -> bool {
        self.sigma == 1.0
    }

    pub fn is_independent(&self) -> bool {
        self.sigma == 0.0
    }

    pub fn mean(&self, v: f64) -> f64 {
        conditional_mean(v, self.sigma)
    }

    pub fn density(&self, u: f64, v: f64) -> Result<f64> {
        phi_density(u, v, self.sigma)
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        conditional_cdf(u, v, self.sigma)
    }
}

/// Stationary density of the gain: `e^{-u}` on `u >= 0`.
pub fn stationary_density(u: f64) -> f64 {
    if u >= 0.0 {
        (-u).exp()
    } else {
        0.0
    }
}

/// Bivariate-Rayleigh transition density `Phi(u, v, sigma)` for `0 <= sigma < 1`.
///
/// The exponent is folded into the scaled Bessel function:
/// `Phi = a exp(-a (sqrt(u) - sigma sqrt(v))^2) e^{-z} I0(z)` with
/// `a = 1/(1 - sigma^2)` and `z = 2 sigma sqrt(u v) a`.
pub fn phi_density(u: f64, v: f64, sigma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::Domain(format!(
            "transition density requires 0 <= sigma < 1, got {sigma} (sigma = 1 is a point mass)"
        )));
    }
    if u < 0.0 || v < 0.0 {
        return Ok(0.0);
    }
    let a = 1.0 / (1.0 - sigma * sigma);
    let gap = u.sqrt() - sigma * v.sqrt();
    let z = 2.0 * sigma * (u * v).sqrt() * a;
    Ok(a * (-a * gap * gap).exp() * bessel_i0_scaled(z)?)
}

/// First moment of `Phi(., v, sigma)`: `1 - sigma^2 + sigma^2 v`.
pub fn conditional_mean(v: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    1.0 - s2 + s2 * v
}

/// `P(U <= u | V = v)` under `Phi(., v, sigma)`.
///
/// `U / (1 - sigma^2)` is a noncentral chi-square variate (scaled by 1/2) with
/// Poisson(`mu2`) mixing, `mu2 = sigma^2 v / (1 - sigma^2)`, so the CDF is
/// `sum_j Pois(j; mu2) P(j + 1, u / (1 - sigma^2))` with `P` the regularized
/// lower incomplete gamma function.
pub fn conditional_cdf(u: f64, v: f64, sigma: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if sigma >= 1.0 {
        return if v <= u { 1.0 } else { 0.0 };
    }
    let s2 = sigma * sigma;
    let y = u / (1.0 - s2);
    let mu2 = s2 * v.max(0.0) / (1.0 - s2);
    if mu2 == 0.0 {
        return -(-y).exp_m1();
    }

    let (ln_y, ln_mu2) = (y.ln(), mu2.ln());
    let last = (mu2 + 12.0 * mu2.sqrt() + 40.0).ceil() as usize;
    // upper_tail = Q(j + 1, y) = e^{-y} sum_{m <= j} y^m / m!
    let mut ln_gamma_term = -y;
    let mut upper_tail = ln_gamma_term.exp();
    let mut ln_pois = -mu2;
    let mut tail_mass = ln_pois.exp() * upper_tail;
    for j in 1..=last {
        let ln_j = (j as f64).ln();
        ln_gamma_term += ln_y - ln_j;
        upper_tail += ln_gamma_term.exp();
        ln_pois += ln_mu2 - ln_j;
        tail_mass += ln_pois.exp() * upper_tail.min(1.0);
    }
    (1.0 - tail_mass).clamp(0.0, 1.0)
}

/// Nodes and weights approximating `E[g(U) | V = v]` for one `(law, v)` pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionalPoints {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ConditionalPoints {
    pub fn expect<G: FnMut(f64) -> f64>(&self, mut g: G) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w * g(u))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Composite Gauss–Legendre rule for conditional expectations under
/// [`ConditionalLaw`], taken in the amplitude `w = sqrt(u)`.
///
/// Given `V = v`, `W = sqrt(U)` has the Rice density
/// `2 w Phi(w^2, v, sigma)`, a bump of width `sqrt(1 - sigma^2)` centred near
/// `c = sigma sqrt(v)`. Uniform panels cover `c +- 7.5 sqrt(1 - sigma^2)`
/// (outside it the density is below `e^{-56}` of its peak). When that window
/// reaches the origin, the first panel is split geometrically towards zero so
/// that integrands such as `ln(1 + rho u)`, whose singularity at
/// `u = -1/rho` approaches the origin as `rho` grows, stay resolved.
#[derive(Debug, Clone)]
pub struct ConditionalQuadrature {
    panel: QuadratureRule<f64>,
    core_panels: usize,
}

impl ConditionalQuadrature {
    /// `nodes` Gauss–Legendre points (rounded up to whole panels) cover the
    /// bulk of the law; the graded panels near the origin come on top.
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::Config("conditional quadrature needs at least one node".into()));
        }
        Ok(Self {
            panel: gauss_legendre::<f64>(PANEL_ORDER)?,
            core_panels: nodes.div_ceil(PANEL_ORDER),
        })
    }

    /// Upper bound on the number of points per conditional law.
    pub fn max_points(&self) -> usize {
        (self.core_panels + GRADED_PANELS + 1) * PANEL_ORDER
    }

    /// Quadrature points for `U` given `V = v`.
    pub fn points(&self, law: ConditionalLaw, v: f64) -> ConditionalPoints {
        let sigma = law.sigma();
        if law.is_point_mass() {
            return ConditionalPoints {
                values: vec![v],
                weights: vec![1.0],
            };
        }
        let spread = 1.0 - sigma * sigma;
        let a = 1.0 / spread;
        let centre = sigma * v.max(0.0).sqrt();
        let half = WINDOW_HALF_WIDTH * spread.sqrt();
        let (lo, hi) = ((centre - half).max(0.0), centre + half);

        let mut edges = Vec::with_capacity(self.core_panels + GRADED_PANELS + 2);
        if lo > 0.0 {
            edges.push(lo);
        } else {
            let first = hi / (self.core_panels + 1) as f64;
            edges.push(0.0);
            edges.extend((0..=GRADED_PANELS).rev().map(|k| first * GRADING_RATIO.powi(k as i32)));
        }
        let start = *edges.last().expect("at least one edge");
        let step = (hi - start) / self.core_panels as f64;
        edges.extend((1..=self.core_panels).map(|k| start + step * k as f64));

        let mut values = Vec::with_capacity(self.max_points());
        let mut weights = Vec::with_capacity(self.max_points());
        for pair in edges.windows(2) {
            let (mid, len) = (0.5 * (pair[0] + pair[1]), 0.5 * (pair[1] - pair[0]));
            for (x, wt) in self.panel.iter() {
                let w = mid + len * x;
                let gap = w - centre;
                let bessel = bessel_i0_scaled(2.0 * a * centre * w).expect("finite non-negative argument");
                let density = 2.0 * w * a * (-a * gap * gap).exp() * bessel;
                if density > 0.0 {
                    values.push(w * w);
                    weights.push(len * wt * density);
                }
            }
        }
        ConditionalPoints { values, weights }
    }

    pub fn expect<G: FnMut(f64) -> f64>(&self, law: ConditionalLaw, v: f64, g: G) -> f64 {
        self.points(law, v).expect(g)
    }
}

impl Default for ConditionalQuadrature {
    fn default() -> Self {
        Self::new(DEFAULT_CONDITIONAL_NODES).expect("default conditional quadrature order is valid")
    }
}

/// Seedable generator of the complex Gauss–Markov fading gains.
///
/// Uniforms come from ChaCha8 (a counter-based stream cipher generator),
/// keyed by the 64-bit seed via `seed_from_u64`; independent sub-streams of
/// one seed are selected with [`FadingProcess::with_stream`]. Each innovation
/// consumes two uniforms through the Box–Muller map
/// `w = sqrt(-ln(1 - u1)) e^{2 pi i u2}`, so `|w|^2 ~ Exp(1)`.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    alpha: f64,
    innovation: f64,
    state: Option<Complex64>,
    rng: ChaCha8Rng,
}

impl FadingProcess {
    pub fn new(alpha: f64, seed: u64) -> Self {
        Self::with_stream(alpha, seed, 0)
    }

    pub fn with_stream(alpha: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            alpha,
            innovation: (1.0 - alpha * alpha).max(0.0).sqrt(),
            state: None,
            rng,
        }
    }

    fn complex_gaussian(&mut self) -> Complex64 {
        let u1: f64 = self.rng.random();
        let u2: f64 = self.rng.random();
        let radius = (-(1.0 - u1).ln()).sqrt();
        Complex64::from_polar(radius, 2.0 * PI * u2)
    }
}

impl Iterator for FadingProcess {
    type Item = Complex64;

    fn next(&mut self) -> Option<Complex64> {
        let w = self.complex_gaussian();
        let h = match self.state {
            None => w,
            Some(prev) => prev * self.alpha + w * self.innovation,
        };
        self.state = Some(h);
        Some(h)
    }
}

/// `n` consecutive complex gains starting from the stationary law.
pub fn sample_gains(params: &FadingParams, n: usize, seed: u64) -> Vec<Complex64> {
    FadingProcess::new(params.alpha(), seed).take(n).collect()
}

/// `n` consecutive power gains `u_i = |h_i|^2`; identical inputs give
/// identical output.
pub fn sample_path(params: &FadingParams, n: usize, seed: u64) -> Vec<f64> {
    FadingProcess::new(params.alpha(), seed)
        .take(n)
        .map(|h| h.norm_sqr())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn params_validation() {
        assert!(FadingParams::new(0.0, 1.0).is_ok());
        assert!(FadingParams::new(1.0, 1.0).is_ok());
        assert!(FadingParams::new(-0.1, 1.0).is_err());
        assert!(FadingParams::new(1.1, 1.0).is_err());
        assert!(FadingParams::new(0.5, 0.0).is_err());
        assert!(FadingParams::new(0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn stationary_density_values() {
        assert_eq!(stationary_density(0.0), 1.0);
        assert_relative_eq!(stationary_density(1.0), (-1.0f64).exp());
        assert_eq!(stationary_density(-0.5), 0.0);
    }

    #[test]
    fn lag_correlation_snaps_and_limits() {
        assert_eq!(lag_correlation(0.8, 0), 1.0);
        assert_relative_eq!(lag_correlation(0.9, 3), 0.729, max_relative = 1e-14);
        assert_eq!(lag_correlation(0.5, 200), 0.0);
        assert_eq!(lag_correlation(1.0, 50), 1.0);
        assert_eq!(lag_correlation(0.0, 1), 0.0);
        let law = ConditionalLaw::for_subchannel(0.97, 1).unwrap();
        assert!(law.is_point_mass());
    }

    #[test]
    fn phi_domain() {
        assert!(phi_density(1.0, 1.0, 1.0).is_err());
        assert!(phi_density(1.0, 1.0, -0.1).is_err());
        assert_eq!(phi_density(-1.0, 1.0, 0.5).unwrap(), 0.0);
        assert_eq!(phi_density(1.0, -1.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn phi_independence_limit() {
        for &u in &[0.0, 0.3, 2.0, 9.0] {
            assert_relative_eq!(phi_density(u, 4.2, 0.0).unwrap(), (-u).exp(), max_relative = 1e-15);
        }
    }

    #[test]
    fn conditional_mean_limits() {
        assert_eq!(conditional_mean(3.0, 0.0), 1.0);
        assert_eq!(conditional_mean(3.0, 1.0), 3.0);
        assert_relative_eq!(conditional_mean(2.0, 0.5), 1.25);
    }

    #[test]
    fn cdf_limits() {
        assert_eq!(conditional_cdf(0.0, 1.0, 0.5), 0.0);
        assert_eq!(conditional_cdf(2.0, 1.0, 1.0), 1.0);
        assert_eq!(conditional_cdf(0.5, 1.0, 1.0), 0.0);
        assert_relative_eq!(conditional_cdf(1.3, 7.0, 0.0), 1.0 - (-1.3f64).exp(), max_relative = 1e-14);
        assert!(conditional_cdf(1e3, 2.0, 0.9) > 1.0 - 1e-14);
    }

    #[test]
    fn quadrature_point_mass_and_independence() {
        let q = ConditionalQuadrature::default();
        let pts = q.points(ConditionalLaw::new(1.0).unwrap(), 2.5);
        assert_eq!(pts.values, vec![2.5]);
        let indep = q.points(ConditionalLaw::new(0.0).unwrap(), 2.5);
        assert!(indep.len() <= q.max_points());
        assert_relative_eq!(indep.expect(|_| 1.0), 1.0, max_relative = 1e-13);
        assert_relative_eq!(indep.expect(|u| u), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn process_is_reproducible_and_stream_dependent() {
        let a: Vec<_> = FadingProcess::new(0.9, 7).take(100).collect();
        let b: Vec<_> = FadingProcess::new(0.9, 7).take(100).collect();
        let c: Vec<_> = FadingProcess::with_stream(0.9, 7, 1).take(100).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
