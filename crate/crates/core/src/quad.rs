//! Quadrature building blocks shared by the kernel evaluators.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("tolerance {requested:e} not reached; achieved {achieved:e} with {nodes} nodes")]
    ToleranceNotReached {
        requested: f64,
        achieved: f64,
        nodes: usize,
    },
    #[error("invalid integration interval [{0}, {1}]")]
    BadInterval(f64, f64),
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    pub est_error: f64,
    pub nodes: usize,
}

/// Tanh-sinh (double-exponential) quadrature on a finite interval.
///
/// Node levels are refined by halving the step in the transformed variable
/// until two successive levels agree to `tol` relative, so endpoint
/// boundary layers and mild oscillation are both handled by node density.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, tol: f64, max_level: u32) -> Result<QuadResult, QuadError>
where
    F: Fn(f64) -> Complex64,
{
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(QuadError::BadInterval(a, b));
    }
    let scale = 0.5 * (b - a);
    const S_MAX: f64 = 4.2;
    let pi_half = core::f64::consts::FRAC_PI_2;

    // Transformed node and weight at parameter s. The node is formed as an
    // offset from the nearer endpoint, which keeps endpoint spacing
    // resolvable far below machine epsilon relative to the interval.
    let node = |s: f64| -> (f64, f64) {
        let u = pi_half * s.sinh();
        let offset = 2.0 * scale / ((2.0 * u.abs()).exp() + 1.0);
        let x = if u >= 0.0 { b - offset } else { a + offset };
        let w = scale * pi_half * s.cosh() / (u.cosh() * u.cosh());
        (x, w)
    };

    let mut h = 1.0f64;
    let (x0, w0) = node(0.0);
    let mut sum = f(x0) * w0;
    let mut j = 1;
    while (j as f64) * h <= S_MAX {
        let s = j as f64 * h;
        let (xp, wp) = node(s);
        let (xm, wm) = node(-s);
        sum += f(xp) * wp + f(xm) * wm;
        j += 1;
    }
    let mut value = sum * h;
    let mut nodes = 2 * j - 1;
    let mut est = f64::INFINITY;

    for _level in 0..max_level {
        h *= 0.5;
        // Add the new midpoints only.
        let mut add = Complex64::new(0.0, 0.0);
        let mut k = 1;
        while (k as f64) * h <= S_MAX {
            let s = k as f64 * h;
            let (xp, wp) = node(s);
            let (xm, wm) = node(-s);
            add += f(xp) * wp + f(xm) * wm;
            nodes += 2;
            k += 2;
        }
        let refined = sum * h + add * h;
        sum += add;
        est = (refined - value).norm();
        value = refined;
        if est <= tol * value.norm().max(f64::MIN_POSITIVE) {
            return Ok(QuadResult {
                value,
                est_error: est,
                nodes,
            });
        }
    }
    Err(QuadError::ToleranceNotReached {
        requested: tol,
        achieved: est / value.norm().max(f64::MIN_POSITIVE),
        nodes,
    })
}

// 16-point Gauss-Legendre nodes and weights on [-1, 1] (positive half;
// the rule is symmetric).
const GL16_X: [f64; 8] = [
    0.0950125098376374,
    0.2816035507792589,
    0.4580167776572274,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL16_W: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.0622535239386479,
    0.0271524594117541,
];

/// Composite 16-point Gauss-Legendre over `panels` equal subintervals.
pub fn gauss_legendre_panels<F>(f: F, a: f64, b: f64, panels: usize) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let width = (b - a) / panels as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        for i in 0..8 {
            total += (f(mid + half * GL16_X[i]) + f(mid - half * GL16_X[i])) * (GL16_W[i] * half);
        }
    }
    total
}

/// Composite Simpson rule over uniformly spaced samples (odd count).
pub fn simpson_samples(samples: &[f64], h: f64) -> f64 {
    assert!(
        samples.len() >= 3 && samples.len() % 2 == 1,
        "Simpson needs an odd number (>= 3) of samples"
    );
    let n = samples.len() - 1;
    let mut acc = samples[0] + samples[n];
    for (i, &s) in samples.iter().enumerate().skip(1).take(n - 1) {
        acc += if i % 2 == 1 { 4.0 * s } else { 2.0 * s };
    }
    acc * h / 3.0
}

/// Bessel function of the first kind for integer or half-integer order,
/// nonnegative real argument.
///
/// Half-integer orders use the closed spherical forms; integer orders use
/// the cosine integral representation, which is exact for integers.
pub fn bessel_j(mu2: i64, x: f64) -> f64 {
    // mu2 = 2*mu, so even values are integer orders.
    debug_assert!(mu2 >= -1, "orders below -1/2 are not needed here");
    if x == 0.0 {
        return if mu2 == 0 { 1.0 } else { 0.0 };
    }
    if mu2 % 2 != 0 {
        let pref = (2.0 / (core::f64::consts::PI * x)).sqrt();
        return match mu2 {
            -1 => pref * x.cos(),
            1 => pref * x.sin(),
            3 => pref * (x.sin() / x - x.cos()),
            5 => pref * ((3.0 / (x * x) - 1.0) * x.sin() - 3.0 * x.cos() / x),
            _ => {
                // ascending recurrence J_{m+1} = (2m/x) J_m - J_{m-1}
                let mut jm = pref * x.cos(); // order -1/2
                let mut j = pref * x.sin(); // order 1/2
                let mut m = 0.5f64;
                let target = mu2 as f64 / 2.0;
                while m < target {
                    let next = (2.0 * m / x) * j - jm;
                    jm = j;
                    j = next;
                    m += 1.0;
                }
                j
            }
        };
    }
    let mu = (mu2 / 2) as f64;
    let panels = ((x / 3.0).ceil() as usize).max(8);
    let integrand = |theta: f64| Complex64::new((mu * theta - x * theta.sin()).cos(), 0.0);
    gauss_legendre_panels(integrand, 0.0, core::f64::consts::PI, panels).re
        / core::f64::consts::PI
}
