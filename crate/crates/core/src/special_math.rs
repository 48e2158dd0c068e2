//! Special functions and Gaussian quadrature rules.
//!
//! Everything here is generic over [`Real`], so the same code serves `f64`
//! (used by every solver in the crate) and `f32`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Argument at which [`bessel_i0_scaled`] switches from the power series to
/// the large-argument expansion.
pub const BESSEL_SERIES_LIMIT: f64 = 15.0;

/// Largest supported Gauss–Laguerre order.
pub const MAX_LAGUERRE_ORDER: usize = 512;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponentially scaled modified Bessel function of the first kind, order
/// zero: `e^{-x} I0(x)` for `x >= 0`.
pub fn bessel_i0_scaled<F: Real>(x: F) -> Result<F> {
    if !x.is_finite() || x < F::zero() {
        return Err(Error::Domain(format!(
            "bessel_i0_scaled requires finite x >= 0, got {x:?}"
        )));
    }
    if x < F::lit(BESSEL_SERIES_LIMIT) {
        Ok(i0_scaled_series(x))
    } else {
        Ok(i0_scaled_asymptotic(x))
    }
}

/// sum_k (x^2/4)^k / (k!)^2, scaled by e^{-x}. All terms are positive.
pub(crate) fn i0_scaled_series<F: Real>(x: F) -> F {
    let q = x * x / F::lit(4.0);
    let eps = F::epsilon();
    let mut term = F::one();
    let mut sum = F::one();
    let mut k = F::one();
    while term > eps * sum {
        term *= q / (k * k);
        sum += term;
        k += F::one();
    }
    sum * (-x).exp()
}

/// e^{-x} I0(x) ~ (2 pi x)^{-1/2} sum_k [(2k-1)!!]^2 / (k! (8x)^k), truncated at
/// the smallest term.
pub(crate) fn i0_scaled_asymptotic<F: Real>(x: F) -> F {
    let eps = F::epsilon();
    let mut term = F::one();
    let mut sum = F::one();
    for k in 1..200usize {
        let odd = F::count(2 * k - 1);
        let next = term * odd * odd / (F::lit(8.0) * F::count(k) * x);
        if next >= term {
            break;
        }
        term = next;
        sum += term;
        if term <= eps * sum {
            break;
        }
    }
    sum / (F::lit(2.0) * F::PI() * x).sqrt()
}

/// Exponential integral `E1(x) = int_x^inf e^{-u}/u du` for `x > 0`.
pub fn exp_integral_e1<F: Real>(x: F) -> Result<F> {
    check_e1_arg(x)?;
    if x <= F::one() {
        Ok(e1_series(x))
    } else {
        Ok(e1_scaled_fraction(x) * (-x).exp())
    }
}

/// `e^x E1(x)`, finite for all `x > 0` even where `E1` underflows.
pub fn exp_integral_e1_scaled<F: Real>(x: F) -> Result<F> {
    check_e1_arg(x)?;
    if x <= F::one() {
        Ok(e1_series(x) * x.exp())
    } else {
        Ok(e1_scaled_fraction(x))
    }
}

fn check_e1_arg<F: Real>(x: F) -> Result<()> {
    if x.is_nan() || x <= F::zero() {
        return Err(Error::Domain(format!(
            "exp_integral_e1 requires x > 0, got {x:?}"
        )));
    }
    Ok(())
}

/// E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!), used for x <= 1.
fn e1_series<F: Real>(x: F) -> F {
    let eps = F::epsilon();
    let mut term = F::one();
    let mut sum = F::zero();
    for k in 1..200usize {
        let kf = F::count(k);
        term *= -x / kf;
        let contrib = term / kf;
        sum += contrib;
        if contrib.abs() <= eps * sum.abs() {
            break;
        }
    }
    -F::lit(EULER_GAMMA) - x.ln() - sum
}

/// Modified Lentz evaluation of the continued fraction for e^x E1(x), x > 1.
fn e1_scaled_fraction<F: Real>(x: F) -> F {
    let tiny = F::min_positive_value() / F::epsilon();
    let eps = F::epsilon();
    let mut b = x + F::one();
    let mut c = F::one() / tiny;
    let mut d = F::one() / b;
    let mut h = d;
    for i in 1..10_000usize {
        let an = -F::count(i * i);
        b += F::lit(2.0);
        d = F::one() / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - F::one()).abs() <= eps {
            break;
        }
    }
    h
}

/// Nodes (strictly increasing) and weights of an interpolatory quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<F> {
    nodes: Vec<F>,
    weights: Vec<F>,
}

impl<F: Real> QuadratureRule<F> {
    pub fn nodes(&self) -> &[F] {
        &self.nodes
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (F, F)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Approximates the integral of `f` against the rule's weight function.
    pub fn integrate<G: FnMut(F) -> F>(&self, mut f: G) -> F {
        self.iter().fold(F::zero(), |acc, (x, w)| acc + w * f(x))
    }

    /// Drops trailing nodes whose weight is below `cutoff`.
    pub fn truncated(&self, cutoff: F) -> Self {
        let keep = self
            .weights
            .iter()
            .rposition(|&w| w >= cutoff)
            .map_or(0, |i| i + 1);
        Self {
            nodes: self.nodes[..keep].to_vec(),
            weights: self.weights[..keep].to_vec(),
        }
    }
}

/// Gauss–Laguerre rule of order `n` (`1 <= n <= 512`) for the weight
/// `e^{-x}` on `[0, inf)`. Nodes are positive; for orders above roughly 180
/// in `f64` the weights attached to the largest nodes underflow to zero.
///
/// Roots of `L_n` are found by Newton's method on the three-term recurrence,
/// seeded with the usual asymptotic initial guesses. Already located roots are
/// deflated out of the Newton step, which keeps the iteration from landing on
/// a root twice when a guess is poor. The recurrence is rescaled on the fly so
/// that orders up to 512 do not overflow.
pub fn gauss_laguerre<F: Real>(n: usize) -> Result<QuadratureRule<F>> {
    if n == 0 || n > MAX_LAGUERRE_ORDER {
        return Err(Error::Config(format!(
            "Gauss-Laguerre order must lie in 1..={MAX_LAGUERRE_ORDER}, got {n}"
        )));
    }
    let nf = F::count(n);
    let tol = F::epsilon() * F::lit(64.0);
    let stall = F::epsilon().sqrt() * F::lit(1e-2);
    let mut roots: Vec<F> = Vec::with_capacity(n);
    let mut z = F::zero();

    for i in 0..n {
        z = match i {
            0 => F::lit(3.0) / (F::one() + F::lit(2.4) * nf),
            1 => z + F::lit(15.0) / (F::one() + F::lit(2.5) * nf),
            _ => {
                // Extrapolate from the two largest roots located so far.
                let ai = F::count(i - 1);
                let step = (F::one() + F::lit(2.55) * ai) / (F::lit(1.9) * ai);
                let (last, before) = (roots[i - 1], roots[i - 2]);
                last + step * (last - before)
            }
        };
        let mut converged = false;
        let mut prev_moved = F::infinity();
        for _ in 0..1000 {
            let (ln, lnm1, _) = laguerre_pair(n, z);
            if ln == F::zero() {
                converged = true;
                break;
            }
            let mut log_deriv = nf * (F::one() - lnm1 / ln) / z;
            for &r in &roots {
                log_deriv -= F::one() / (z - r);
            }
            let dz = F::one() / log_deriv;
            let mut next = z - dz;
            if next <= F::zero() {
                next = z / F::lit(2.0);
            }
            let moved = (next - z).abs();
            z = next;
            // Stop at the tolerance, or once the step stalls at the rounding
            // floor of the recurrence (grows with n for the smallest roots).
            if moved <= tol * z || (moved <= stall * z && moved >= prev_moved) {
                converged = true;
                break;
            }
            prev_moved = moved;
        }
        if !converged {
            return Err(Error::Numerical(format!(
                "Gauss-Laguerre root {i} of order {n} did not converge"
            )));
        }
        let at = roots.partition_point(|&r| r < z);
        roots.insert(at, z);
    }

    for pair in roots.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Numerical(format!(
                "Gauss-Laguerre order {n} produced coincident roots near {:?}",
                pair[0]
            )));
        }
    }

    let two = F::lit(2.0);
    let mut weights = Vec::with_capacity(n);
    for x in roots.iter_mut() {
        // Plain Newton polish without deflation.
        for _ in 0..2 {
            let (ln, lnm1, _) = laguerre_pair(n, *x);
            if ln == F::zero() {
                break;
            }
            let dz = *x / (nf * (F::one() - lnm1 / ln));
            if dz.abs() > tol * *x {
                break;
            }
            *x -= dz;
        }
        // w = 1 / (x L_n'(x)^2), keeping the L_n term of the derivative so the
        // weight is insensitive to residual node error.
        let (ln, lnm1, log_scale) = laguerre_pair(n, *x);
        let deriv = nf * (ln - lnm1) / *x;
        let log_w = -x.ln() - two * (deriv.abs().ln() + log_scale);
        weights.push(log_w.exp());
    }

    Ok(QuadratureRule {
        nodes: roots,
        weights,
    })
}

/// Gauss–Legendre rule of order `n` (`1 <= n <= 512`) on `[-1, 1]`.
pub fn gauss_legendre<F: Real>(n: usize) -> Result<QuadratureRule<F>> {
    if n == 0 || n > MAX_LAGUERRE_ORDER {
        return Err(Error::Config(format!(
            "Gauss-Legendre order must lie in 1..={MAX_LAGUERRE_ORDER}, got {n}"
        )));
    }
    let nf = F::count(n);
    let two = F::lit(2.0);
    let tol = F::epsilon() * F::lit(4.0);
    let mut nodes = vec![F::zero(); n];
    let mut weights = vec![F::zero(); n];
    for i in 0..n.div_ceil(2) {
        // Largest-first guess; roots are symmetric about zero.
        let mut z = (F::PI() * (F::count(i) + F::lit(0.75)) / (nf + F::lit(0.5))).cos();
        let mut deriv = F::one();
        for _ in 0..100 {
            let (p, pm1) = legendre_pair(n, z);
            deriv = nf * (z * p - pm1) / (z * z - F::one());
            let dz = p / deriv;
            z -= dz;
            if dz.abs() <= tol {
                let (p, pm1) = legendre_pair(n, z);
                deriv = nf * (z * p - pm1) / (z * z - F::one());
                break;
            }
        }
        let w = two / ((F::one() - z * z) * deriv * deriv);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = F::zero();
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Returns `(P_n(x), P_{n-1}(x))`.
fn legendre_pair<F: Real>(n: usize, x: F) -> (F, F) {
    let mut prev = F::one();
    let mut cur = x;
    for j in 1..n {
        let jf = F::count(j);
        let next = ((F::lit(2.0) * jf + F::one()) * x * cur - jf * prev) / (jf + F::one());
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Returns `(L_n(x), L_{n-1}(x))` divided by a common factor `e^{s}`, along with `s`.
fn laguerre_pair<F: Real>(n: usize, x: F) -> (F, F, F) {
    let limit = F::max_value().sqrt();
    let mut log_scale = F::zero();
    let mut prev = F::one();
    let mut cur = F::one() - x;
    if n == 1 {
        return (cur, prev, log_scale);
    }
    for j in 1..n {
        let jf = F::count(j);
        let next = ((F::lit(2.0) * jf + F::one() - x) * cur - jf * prev) / (jf + F::one());
        prev = cur;
        cur = next;
        let mag = cur.abs();
        if mag > limit {
            prev /= mag;
            cur /= mag;
            log_scale += mag.ln();
        }
    }
    (cur, prev, log_scale)
}
