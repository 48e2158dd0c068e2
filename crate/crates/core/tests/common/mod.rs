//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here calls into the library's numerical routines; every value is
//! recomputed from first principles (power series, adaptive integration,
//! brute-force search) so the tests check the implementation against an
//! unrelated code path.

#![allow(dead_code)]

/// Adaptive Simpson quadrature on `[a, b]` with absolute tolerance `eps`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1)
    }

    // Pre-split so narrow peaks are never skipped by the first coarse estimate.
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = if k + 1 == pieces { b } else { lo + h };
            let (flo, fhi) = (f(lo), f(hi));
            let (m, fm, whole) = simpson(f, lo, flo, hi, fhi);
            recurse(f, lo, flo, hi, fhi, m, fm, whole, eps / pieces as f64, 40)
        })
        .sum()
}

/// e^{-x} I0(x) from the defining power series, summed until terms vanish.
pub fn bessel_i0_scaled_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-18 * sum || k < 20.0 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum * (-x).exp()
}

/// Leading terms of the large-argument expansion of e^{-x} I0(x).
pub fn bessel_i0_scaled_asymptotic(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..12 {
        let odd = (2 * k - 1) as f64;
        term *= odd * odd / (8.0 * k as f64 * x);
        sum += term;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// E1(x) = int_0^1 exp(-x/t)/t dt, which has a smooth, bounded integrand.
pub fn e1_by_integration(x: f64) -> f64 {
    let f = |t: f64| if t <= 0.0 { 0.0 } else { (-x / t).exp() / t };
    adaptive_simpson(&f, 0.0, 1.0, 1e-14)
}

/// E1(x) from the modified-Lentz continued fraction, valid for x >~ 1.
pub fn e1_continued_fraction(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

/// Bisection root of a monotone function on a bracket.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Water-filling cutoff for unit-mean exponential fading, independent of the
/// library: solves e^{-u}/u - E1(u) = power with integrated E1.
pub fn rayleigh_cutoff(power: f64) -> f64 {
    bisect(
        |u| (-u).exp() / u - e1_by_integration(u) - power,
        1e-6,
        50.0,
    )
}

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

/// Mutual information in bits of a DMC with row-stochastic `w[x][y]` under
/// input law `q`.
pub fn mutual_information(w: &[Vec<f64>], q: &[f64]) -> f64 {
    let ny = w[0].len();
    let py: Vec<f64> = (0..ny)
        .map(|y| q.iter().zip(w).map(|(qx, row)| qx * row[y]).sum())
        .collect();
    let mut mi = 0.0;
    for (qx, row) in q.iter().zip(w) {
        for (y, &wy) in row.iter().enumerate() {
            if *qx > 0.0 && wy > 0.0 {
                mi += qx * wy * (wy / py[y]).log2();
            }
        }
    }
    mi
}

/// Brute-force maximum of sum_u weights[u] * I(q; W_u) over binary input laws
/// on a uniform mesh of the given step.
pub fn brute_force_binary(channels: &[Vec<Vec<f64>>], weights: &[f64], step: f64) -> (f64, f64) {
    let steps = (1.0 / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..=steps {
        let p = k as f64 / steps as f64;
        let q = [p, 1.0 - p];
        let val: f64 = channels
            .iter()
            .zip(weights)
            .map(|(w, &wt)| wt * mutual_information(w, &q))
            .sum();
        if val > best.0 {
            best = (val, p);
        }
    }
    best
}

pub fn bsc(p: f64) -> Vec<Vec<f64>> {
    vec![vec![1.0 - p, p], vec![p, 1.0 - p]]
}

/// Direct evaluation of the bivariate-Rayleigh transition density using the
/// series Bessel oracle (no exponent folding).
pub fn phi_direct(u: f64, v: f64, sigma: f64) -> f64 {
    let a = 1.0 / (1.0 - sigma * sigma);
    let z = 2.0 * sigma * (u * v).sqrt() * a;
    a * (-(u + sigma * sigma * v) * a + z).exp() * bessel_i0_scaled_series(z)
}

/// Upper integration limit that captures essentially all mass of the
/// conditional law of U given v.
pub fn phi_upper_limit(v: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let mean = 1.0 - s2 + s2 * v;
    let sd = ((1.0 - s2).powi(2) + 2.0 * s2 * v * (1.0 - s2)).sqrt();
    mean + 45.0 * sd + 5.0
}
