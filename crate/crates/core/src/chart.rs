//! Coordinate-chart metrics and geodesic machinery.
//!
//! A chart is an axis-aligned box with a caller-supplied metric g_jk(x).
//! Geodesics are integrated with a classical fourth-order scheme; the
//! differential of the exponential map is propagated alongside through the
//! variational equations, which yields both the shooting Newton step and
//! the polar volume Jacobian J(r, θ) without any curvature-tensor
//! machinery.

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("metric not positive definite at probe point {0:?}")]
    NotPositiveDefinite(Vec<f64>),
    #[error("tangent vector has |theta|_g = {0}, expected 1")]
    BadUnitTangent(f64),
    #[error("geodesic exited the chart domain near {0:?}")]
    DomainExit(Vec<f64>),
    #[error("unit-speed energy drifted by {0:e} along the geodesic")]
    EnergyDrift(f64),
    #[error("shooting Newton did not converge: residual {residual:e} after {iters} steps")]
    ShootingDiverged { residual: f64, iters: u32 },
    #[error("dimension mismatch: chart is {chart}-dimensional, input has {input}")]
    Dimension { chart: usize, input: usize },
}

type MetricFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type DMetricFn = Arc<dyn Fn(&[f64], usize) -> Vec<f64> + Send + Sync>;
type DistFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A metric chart on an axis-aligned box.
#[derive(Clone)]
pub struct MetricChart {
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    g: MetricFn,
    dg: Option<DMetricFn>,
    exact_distance: Option<DistFn>,
    label: String,
}

impl std::fmt::Debug for MetricChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricChart")
            .field("n", &self.n)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("label", &self.label)
            .finish()
    }
}

// ---- small dense linear algebra -------------------------------------------

fn lu_decompose(a: &mut [f64], n: usize, piv: &mut [usize]) -> Option<f64> {
    let mut det = 1.0;
    for (i, p) in piv.iter_mut().enumerate() {
        *p = i;
    }
    for col in 0..n {
        let mut best = col;
        let mut best_val = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best_val {
                best = row;
                best_val = v;
            }
        }
        if best_val == 0.0 {
            return None;
        }
        if best != col {
            for k in 0..n {
                a.swap(col * n + k, best * n + k);
            }
            piv.swap(col, best);
            det = -det;
        }
        det *= a[col * n + col];
        let inv_piv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] * inv_piv;
            a[row * n + col] = f;
            for k in col + 1..n {
                a[row * n + k] -= f * a[col * n + k];
            }
        }
    }
    Some(det)
}

/// Determinant of a small row-major matrix.
pub fn det_small(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut piv = vec![0usize; n];
    lu_decompose(&mut m, n, &mut piv).unwrap_or(0.0)
}

/// Solves A x = b for a small row-major matrix; `None` when singular.
pub fn solve_small(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut piv = vec![0usize; n];
    lu_decompose(&mut m, n, &mut piv)?;
    let mut x = vec![0.0; n];
    for i in 0..n {
        x[i] = b[piv[i]];
        for k in 0..i {
            x[i] -= m[i * n + k] * x[k];
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= m[i * n + k] * x[k];
        }
        x[i] /= m[i * n + i];
    }
    Some(x)
}

/// Inverse of a small row-major matrix.
pub fn inv_small(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut out = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = solve_small(a, &e, n)?;
        for i in 0..n {
            out[i * n + j] = col[i];
        }
    }
    Some(out)
}

fn spd_check(a: &[f64], n: usize) -> bool {
    // Cholesky succeeds iff symmetric positive definite.
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

fn poly_eval(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

fn poly_deriv_eval(coeffs: &[f64], s: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, c)| acc * s + k as f64 * c)
}

impl MetricChart {
    /// General chart from metric callables; `dg` falls back to central
    /// differences with step 1e−5 when absent.
    pub fn from_fns(
        n: usize,
        lo: Vec<f64>,
        hi: Vec<f64>,
        g: MetricFn,
        dg: Option<DMetricFn>,
        exact_distance: Option<DistFn>,
        label: &str,
    ) -> Result<Self, ChartError> {
        assert_eq!(lo.len(), n);
        assert_eq!(hi.len(), n);
        let chart = Self {
            n,
            lo,
            hi,
            g,
            dg,
            exact_distance,
            label: label.to_string(),
        };
        chart.probe_positive_definite()?;
        Ok(chart)
    }

    /// Euclidean metric on [−half_width, half_width]^n.
    pub fn flat(n: usize, half_width: f64) -> Self {
        let g: MetricFn = Arc::new(move |_x: &[f64]| {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                m[i * n + i] = 1.0;
            }
            m
        });
        let dg: DMetricFn = Arc::new(move |_x: &[f64], _a: usize| vec![0.0; n * n]);
        let dist: DistFn = Arc::new(|x: &[f64], y: &[f64]| {
            x.iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        });
        Self::from_fns(
            n,
            vec![-half_width; n],
            vec![half_width; n],
            g,
            Some(dg),
            Some(dist),
            "flat",
        )
        .expect("flat metric is positive definite")
    }

    /// Round unit sphere in stereographic coordinates,
    /// g = 4 (1 + |x|²)^{−2} I; curvature +1.
    pub fn sphere_stereographic(n: usize, half_width: f64) -> Self {
        let mut chart = Self::conformal_rational(n, vec![4.0], vec![1.0, 2.0, 1.0], half_width)
            .expect("round metric is positive definite");
        let dist: DistFn = Arc::new(|x: &[f64], y: &[f64]| {
            let sx = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
            let sy = 1.0 + y.iter().map(|v| v * v).sum::<f64>();
            let dxy = x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            2.0 * (dxy / (sx * sy).sqrt()).clamp(-1.0, 1.0).asin()
        });
        chart.exact_distance = Some(dist);
        chart.label = "sphere".into();
        chart
    }

    /// Conformal metric g = φ(|x|²) I with φ = P/Q a rational function
    /// given by polynomial coefficients (low degree first).
    pub fn conformal_rational(
        n: usize,
        num: Vec<f64>,
        den: Vec<f64>,
        half_width: f64,
    ) -> Result<Self, ChartError> {
        let (num_g, den_g) = (num.clone(), den.clone());
        let g: MetricFn = Arc::new(move |x: &[f64]| {
            let s: f64 = x.iter().map(|v| v * v).sum();
            let phi = poly_eval(&num_g, s) / poly_eval(&den_g, s);
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                m[i * n + i] = phi;
            }
            m
        });
        let dg: DMetricFn = Arc::new(move |x: &[f64], axis: usize| {
            let s: f64 = x.iter().map(|v| v * v).sum();
            let p = poly_eval(&num, s);
            let q = poly_eval(&den, s);
            let dphi_ds = (poly_deriv_eval(&num, s) * q - p * poly_deriv_eval(&den, s)) / (q * q);
            let v = dphi_ds * 2.0 * x[axis];
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                m[i * n + i] = v;
            }
            m
        });
        Self::from_fns(
            n,
            vec![-half_width; n],
            vec![half_width; n],
            g,
            Some(dg),
            None,
            "conformal",
        )
    }

    fn probe_positive_definite(&self) -> Result<(), ChartError> {
        let probes_per_axis = 4usize;
        let total = probes_per_axis.pow(self.n as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut x = vec![0.0; self.n];
            for a in 0..self.n {
                let i = rem % probes_per_axis;
                rem /= probes_per_axis;
                let t = (i as f64 + 0.5) / probes_per_axis as f64;
                x[a] = self.lo[a] + t * (self.hi[a] - self.lo[a]);
            }
            if !spd_check(&(self.g)(&x), self.n) {
                return Err(ChartError::NotPositiveDefinite(x));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    pub fn has_exact_distance(&self) -> bool {
        self.exact_distance.is_some()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn g_at(&self, x: &[f64]) -> Vec<f64> {
        (self.g)(x)
    }

    pub fn sqrt_det_g(&self, x: &[f64]) -> f64 {
        det_small(&(self.g)(x), self.n).sqrt()
    }

    pub fn dg_at(&self, x: &[f64], axis: usize) -> Vec<f64> {
        if let Some(dg) = &self.dg {
            return dg(x, axis);
        }
        let h = 1e-5;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[axis] += h;
        xm[axis] -= h;
        let gp = (self.g)(&xp);
        let gm = (self.g)(&xm);
        gp.iter().zip(gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }

    /// |v|_g at x.
    pub fn norm_g(&self, x: &[f64], v: &[f64]) -> f64 {
        let g = (self.g)(x);
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += g[i * self.n + j] * v[i] * v[j];
            }
        }
        s.sqrt()
    }

    /// Christoffel symbols Γ^i_{jk}, layout i n² + j n + k.
    pub fn christoffel(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let g = (self.g)(x);
        let ginv = inv_small(&g, n).expect("metric invertible on the chart");
        let dg: Vec<Vec<f64>> = (0..n).map(|a| self.dg_at(x, a)).collect();
        let mut gamma = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += ginv[i * n + l]
                            * (dg[j][l * n + k] + dg[k][j * n + l] - dg[l][j * n + k]);
                    }
                    gamma[i * n * n + j * n + k] = 0.5 * s;
                }
            }
        }
        gamma
    }

    /// Geodesic acceleration −Γ(x)(v, v).
    fn acceleration(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let gamma = self.christoffel(x);
        let mut a = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += gamma[i * n * n + j * n + k] * v[j] * v[k];
                }
            }
            a[i] = -s;
        }
        a
    }
}

/// Detailed output of a geodesic integration.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    /// Sampled points, including both endpoints.
    pub points: Vec<Vec<f64>>,
    /// Velocities at the sampled points.
    pub velocities: Vec<Vec<f64>>,
    /// Maximum drift of |γ̇|_g relative to its initial value.
    pub speed_drift: f64,
}

impl GeodesicPath {
    pub fn endpoint(&self) -> &[f64] {
        self.points.last().expect("path has at least the start point")
    }
}

pub(crate) fn rk4_geodesic(
    chart: &MetricChart,
    y: &[f64],
    v0: &[f64],
    total_time: f64,
    steps: usize,
    keep_every: usize,
) -> Result<GeodesicPath, ChartError> {
    let n = chart.dim();
    let h = total_time / steps as f64;
    let mut x = y.to_vec();
    let mut v = v0.to_vec();
    let speed0 = chart.norm_g(&x, &v);
    let mut drift: f64 = 0.0;
    let mut points = vec![x.clone()];
    let mut velocities = vec![v.clone()];

    let axpy = |x: &[f64], s: f64, d: &[f64]| -> Vec<f64> {
        x.iter().zip(d).map(|(a, b)| a + s * b).collect()
    };
    for step in 0..steps {
        let a1 = chart.acceleration(&x, &v);
        let x2 = axpy(&x, h / 2.0, &v);
        let v2 = axpy(&v, h / 2.0, &a1);
        let a2 = chart.acceleration(&x2, &v2);
        let x3 = axpy(&x, h / 2.0, &v2);
        let v3 = axpy(&v, h / 2.0, &a2);
        let a3 = chart.acceleration(&x3, &v3);
        let x4 = axpy(&x, h, &v3);
        let v4 = axpy(&v, h, &a3);
        let a4 = chart.acceleration(&x4, &v4);
        for i in 0..n {
            x[i] += h / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
            v[i] += h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
        }
        if !chart.contains(&x) {
            return Err(ChartError::DomainExit(x));
        }
        if speed0 > 0.0 {
            drift = drift.max((chart.norm_g(&x, &v) - speed0).abs() / speed0);
        }
        if (step + 1) % keep_every == 0 || step + 1 == steps {
            points.push(x.clone());
            velocities.push(v.clone());
        }
    }
    Ok(GeodesicPath {
        points,
        velocities,
        speed_drift: drift,
    })
}

/// exp_y(r θ) for a unit tangent θ, fourth-order integration with step
/// at most r/64; the unit-speed energy must hold to 1e−8.
pub fn exp_map(
    chart: &MetricChart,
    y: &[f64],
    theta: &[f64],
    r: f64,
) -> Result<Vec<f64>, ChartError> {
    Ok(exp_map_path(chart, y, theta, r, 1)?.endpoint().to_vec())
}

/// Same as [`exp_map`] but returns the sampled path.
pub fn exp_map_path(
    chart: &MetricChart,
    y: &[f64],
    theta: &[f64],
    r: f64,
    keep_samples: usize,
) -> Result<GeodesicPath, ChartError> {
    if y.len() != chart.dim() || theta.len() != chart.dim() {
        return Err(ChartError::Dimension {
            chart: chart.dim(),
            input: y.len().max(theta.len()),
        });
    }
    let sn = chart.norm_g(y, theta);
    if (sn - 1.0).abs() > 1e-10 {
        return Err(ChartError::BadUnitTangent(sn));
    }
    // round the step count up to a multiple of the samples kept, so the
    // samples are exactly equally spaced in arclength
    let keep = keep_samples.max(1);
    let steps = 64.max((r / 0.004).ceil() as usize).div_ceil(keep) * keep;
    let keep_every = steps / keep;
    let path = rk4_geodesic(chart, y, theta, r, steps, keep_every)?;
    if path.speed_drift > 1e-8 {
        return Err(ChartError::EnergyDrift(path.speed_drift));
    }
    Ok(path)
}

/// Time-one exponential with initial velocity w (not necessarily unit),
/// together with the n×n Jacobian ∂ exp_y(w) / ∂ w propagated through the
/// variational equations.
pub fn exp_with_jacobian(
    chart: &MetricChart,
    y: &[f64],
    w: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ChartError> {
    exp_with_jacobian_step(chart, y, w, 0.004)
}

/// [`exp_with_jacobian`] with an explicit integrator step; coarse steps
/// trade fourth-order accuracy for speed in bulk transport work.
pub fn exp_with_jacobian_step(
    chart: &MetricChart,
    y: &[f64],
    w: &[f64],
    step: f64,
) -> Result<(Vec<f64>, Vec<f64>), ChartError> {
    let n = chart.dim();
    let speed = chart.norm_g(y, w);
    let steps = 32.max((speed / step).ceil() as usize).min(8192);
    let h = 1.0 / steps as f64;

    let mut x = y.to_vec();
    let mut v = w.to_vec();
    // xi: n columns of dx/dw, eta: n columns of dv/dw (identity at t = 0)
    let mut xi = vec![0.0; n * n];
    let mut eta = vec![0.0; n * n];
    for i in 0..n {
        eta[i * n + i] = 1.0;
    }

    // derivative of the full variational state
    let deriv = |x: &[f64], v: &[f64], xi: &[f64], eta: &[f64]| {
        let ax = chart.acceleration(x, v);
        let gamma = chart.christoffel(x);
        let dxi = eta.to_vec();
        let mut deta = vec![0.0; n * n];
        for col in 0..n {
            let xi_c: Vec<f64> = (0..n).map(|i| xi[i * n + col]).collect();
            let eta_c: Vec<f64> = (0..n).map(|i| eta[i * n + col]).collect();
            // directional derivative of the acceleration in x
            let xi_scale = xi_c.iter().map(|t| t * t).sum::<f64>().sqrt();
            let da_dx: Vec<f64> = if xi_scale == 0.0 {
                vec![0.0; n]
            } else {
                let eps = 1e-6 / xi_scale.max(1e-12);
                let xp: Vec<f64> = x.iter().zip(&xi_c).map(|(a, b)| a + eps * b).collect();
                let xm: Vec<f64> = x.iter().zip(&xi_c).map(|(a, b)| a - eps * b).collect();
                let ap = chart.acceleration(&xp, v);
                let am = chart.acceleration(&xm, v);
                ap.iter().zip(am).map(|(p, m)| (p - m) / (2.0 * eps)).collect()
            };
            for i in 0..n {
                let mut cross = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        cross += gamma[i * n * n + j * n + k] * v[j] * eta_c[k];
                    }
                }
                deta[i * n + col] = da_dx[i] - 2.0 * cross;
            }
        }
        (v.to_vec(), ax, dxi, deta)
    };

    let lincomb = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + s * y).collect()
    };
    for _ in 0..steps {
        let (k1x, k1v, k1xi, k1eta) = deriv(&x, &v, &xi, &eta);
        let (k2x, k2v, k2xi, k2eta) = deriv(
            &lincomb(&x, h / 2.0, &k1x),
            &lincomb(&v, h / 2.0, &k1v),
            &lincomb(&xi, h / 2.0, &k1xi),
            &lincomb(&eta, h / 2.0, &k1eta),
        );
        let (k3x, k3v, k3xi, k3eta) = deriv(
            &lincomb(&x, h / 2.0, &k2x),
            &lincomb(&v, h / 2.0, &k2v),
            &lincomb(&xi, h / 2.0, &k2xi),
            &lincomb(&eta, h / 2.0, &k2eta),
        );
        let (k4x, k4v, k4xi, k4eta) = deriv(
            &lincomb(&x, h, &k3x),
            &lincomb(&v, h, &k3v),
            &lincomb(&xi, h, &k3xi),
            &lincomb(&eta, h, &k3eta),
        );
        for i in 0..n {
            x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            v[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        for i in 0..n * n {
            xi[i] += h / 6.0 * (k1xi[i] + 2.0 * k2xi[i] + 2.0 * k3xi[i] + k4xi[i]);
            eta[i] += h / 6.0 * (k1eta[i] + 2.0 * k2eta[i] + 2.0 * k3eta[i] + k4eta[i]);
        }
        if !chart.contains(&x) {
            return Err(ChartError::DomainExit(x));
        }
    }
    Ok((x, xi))
}

/// Result of solving exp_y(w) = x by shooting.
#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub distance: f64,
    /// Initial velocity w with exp_y(w) = x.
    pub initial_velocity: Vec<f64>,
    /// Velocity of the geodesic at x (unit speed).
    pub final_velocity: Vec<f64>,
    /// Polar volume Jacobian J(r, θ) at x, normalized to J(0) = 1.
    pub jacobian: f64,
    pub newton_iters: u32,
}

/// Solves exp_y(w) = x by Newton iteration on the initial velocity,
/// seeded with the Euclidean direction, to relative position tolerance
/// `tol`.
pub fn shoot_geodesic(
    chart: &MetricChart,
    x: &[f64],
    y: &[f64],
    tol: f64,
) -> Result<ShootingResult, ChartError> {
    shoot_geodesic_with_step(chart, x, y, tol, 0.004)
}

/// [`shoot_geodesic`] with an explicit integrator step.
pub fn shoot_geodesic_with_step(
    chart: &MetricChart,
    x: &[f64],
    y: &[f64],
    tol: f64,
    step: f64,
) -> Result<ShootingResult, ChartError> {
    let n = chart.dim();
    let mut w: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let sep = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if sep < 1e-13 {
        return Ok(ShootingResult {
            distance: 0.0,
            initial_velocity: vec![0.0; n],
            final_velocity: vec![0.0; n],
            jacobian: 1.0,
            newton_iters: 0,
        });
    }
    let scale = 1.0 + sep;
    let mut best_residual = f64::INFINITY;
    for it in 1..=50 {
        let (end, jac) = exp_with_jacobian_step(chart, y, &w, step)?;
        let resid: Vec<f64> = x.iter().zip(&end).map(|(a, b)| a - b).collect();
        let rn = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn <= tol * scale {
            let distance = chart.norm_g(y, &w);
            let theta: Vec<f64> = w.iter().map(|v| v / distance).collect();
            let steps = 32.max((distance / step).ceil() as usize);
            let path = rk4_geodesic(chart, y, &theta, distance, steps, usize::MAX)?;
            let final_velocity = path
                .velocities
                .last()
                .expect("integration keeps the endpoint")
                .clone();
            let jacobian =
                chart.sqrt_det_g(&end) / chart.sqrt_det_g(y) * det_small(&jac, n).abs();
            return Ok(ShootingResult {
                distance,
                initial_velocity: w,
                final_velocity,
                jacobian,
                newton_iters: it,
            });
        }
        best_residual = best_residual.min(rn);
        match solve_small(&jac, &resid, n) {
            Some(delta) => {
                for i in 0..n {
                    w[i] += delta[i];
                }
            }
            None => {
                return Err(ChartError::ShootingDiverged {
                    residual: rn,
                    iters: it,
                })
            }
        }
    }
    Err(ChartError::ShootingDiverged {
        residual: best_residual,
        iters: 50,
    })
}

/// Geodesic distance by the shooting method.
pub fn geodesic_distance(chart: &MetricChart, x: &[f64], y: &[f64]) -> Result<f64, ChartError> {
    Ok(shoot_geodesic(chart, x, y, 1e-11)?.distance)
}

/// Distance through the chart's closed form when it has one, otherwise by
/// shooting. Kernel assembly uses this fast path.
pub fn distance_fast(chart: &MetricChart, x: &[f64], y: &[f64]) -> Result<f64, ChartError> {
    if let Some(d) = &chart.exact_distance {
        return Ok(d(x, y));
    }
    geodesic_distance(chart, x, y)
}

/// Polar volume Jacobian J(r, θ) with J(0, θ) = 1, computed from the
/// variational equations along the geodesic.
pub fn volume_jacobian(
    chart: &MetricChart,
    y: &[f64],
    theta: &[f64],
    r: f64,
) -> Result<f64, ChartError> {
    let sn = chart.norm_g(y, theta);
    if (sn - 1.0).abs() > 1e-10 {
        return Err(ChartError::BadUnitTangent(sn));
    }
    let w: Vec<f64> = theta.iter().map(|t| t * r).collect();
    let (end, jac) = exp_with_jacobian(chart, y, &w)?;
    Ok(chart.sqrt_det_g(&end) / chart.sqrt_det_g(y) * det_small(&jac, chart.dim()).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_exponential_is_translation() {
        let chart = MetricChart::flat(3, 4.0);
        let y = [0.3, -0.2, 0.1];
        let theta = [0.6, 0.8, 0.0];
        let x = exp_map(&chart, &y, &theta, 1.5).unwrap();
        assert_relative_eq!(x[0], y[0] + 1.5 * theta[0], epsilon = 1e-12);
        assert_relative_eq!(x[1], y[1] + 1.5 * theta[1], epsilon = 1e-12);
        assert_relative_eq!(x[2], y[2] + 1.5 * theta[2], epsilon = 1e-12);
    }

    #[test]
    fn sphere_exponential_matches_great_circle() {
        let chart = MetricChart::sphere_stereographic(2, 30.0);
        let y = [0.0, 0.0];
        // |theta|_g = 1 at the origin means Euclidean length 1/2
        let theta = [0.5, 0.0];
        for r in [0.5, 1.0, 2.0, 2.8] {
            let x = exp_map(&chart, &y, &theta, r).unwrap();
            let d = distance_fast(&chart, &x, &y).unwrap();
            assert_relative_eq!(d, r, max_relative = 1e-6);
            // image of a radius-r arc from the pole sits at tan(r/2)
            assert_relative_eq!(x[0], (r / 2.0).tan(), max_relative = 1e-6);
        }
    }

    #[test]
    fn unit_speed_is_conserved() {
        let chart = MetricChart::sphere_stereographic(2, 30.0);
        let y = [0.4, -0.3];
        let g = chart.g_at(&y);
        let raw = [1.0, 2.0];
        let nrm =
            (g[0] * raw[0] * raw[0] + 2.0 * g[1] * raw[0] * raw[1] + g[3] * raw[1] * raw[1]).sqrt();
        let theta = [raw[0] / nrm, raw[1] / nrm];
        let path = exp_map_path(&chart, &y, &theta, 2.0, 10).unwrap();
        assert!(path.speed_drift <= 1e-8, "drift {}", path.speed_drift);
        for (p, v) in path.points.iter().zip(&path.velocities) {
            assert_relative_eq!(chart.norm_g(p, v), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn flat_distance_and_symmetry() {
        let chart = MetricChart::flat(3, 4.0);
        let x = [1.0, 0.5, -0.75];
        let y = [-0.25, 0.0, 0.5];
        let expected: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(
            geodesic_distance(&chart, &x, &y).unwrap(),
            expected,
            max_relative = 1e-10
        );
    }

    #[test]
    fn sphere_shooting_agrees_with_closed_form() {
        let chart = MetricChart::sphere_stereographic(2, 30.0);
        let pairs = [
            ([0.3, 0.1], [-0.2, 0.4]),
            ([0.9, -0.5], [0.1, 0.2]),
            ([1.2, 0.0], [0.0, -0.8]),
        ];
        for (x, y) in pairs {
            let shot = geodesic_distance(&chart, &x, &y).unwrap();
            let exact = distance_fast(&chart, &x, &y).unwrap();
            assert_relative_eq!(shot, exact, max_relative = 1e-8);
            let rev = geodesic_distance(&chart, &y, &x).unwrap();
            assert_relative_eq!(shot, rev, max_relative = 1e-8);
        }
    }

    #[test]
    fn distance_squared_hessian_is_twice_metric() {
        let chart = MetricChart::sphere_stereographic(2, 30.0);
        let y = [0.3, -0.2];
        let h = 1e-3;
        let d2 = |x: &[f64]| {
            let d = geodesic_distance(&chart, x, &y).unwrap();
            d * d
        };
        let g = chart.g_at(&y);
        let mut hess = [0.0f64; 4];
        for i in 0..2 {
            for j in 0..2 {
                let mut xpp = y.to_vec();
                let mut xpm = y.to_vec();
                let mut xmp = y.to_vec();
                let mut xmm = y.to_vec();
                xpp[i] += h;
                xpp[j] += h;
                xpm[i] += h;
                xpm[j] -= h;
                xmp[i] -= h;
                xmp[j] += h;
                xmm[i] -= h;
                xmm[j] -= h;
                hess[i * 2 + j] = (d2(&xpp) - d2(&xpm) - d2(&xmp) + d2(&xmm)) / (4.0 * h * h);
            }
        }
        for i in 0..4 {
            assert_relative_eq!(hess[i], 2.0 * g[i], epsilon = 2e-4, max_relative = 1e-4);
        }
    }

    #[test]
    fn volume_jacobian_flat_and_sphere() {
        let flat = MetricChart::flat(2, 4.0);
        assert_relative_eq!(
            volume_jacobian(&flat, &[0.1, 0.2], &[1.0, 0.0], 1.3).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        let sphere = MetricChart::sphere_stereographic(2, 30.0);
        for r in [0.4, 1.0, 2.0] {
            let j = volume_jacobian(&sphere, &[0.0, 0.0], &[0.0, 0.5], r).unwrap();
            assert_relative_eq!(j, r.sin() / r, max_relative = 1e-6);
            assert!(j > 0.0);
        }
    }

    #[test]
    fn shooting_jacobian_matches_volume_jacobian() {
        let sphere = MetricChart::sphere_stereographic(2, 30.0);
        let x = [0.7, 0.3];
        let y = [-0.1, 0.15];
        let shot = shoot_geodesic(&sphere, &x, &y, 1e-11).unwrap();
        let theta: Vec<f64> = shot
            .initial_velocity
            .iter()
            .map(|v| v / shot.distance)
            .collect();
        let j = volume_jacobian(&sphere, &y, &theta, shot.distance).unwrap();
        assert_relative_eq!(shot.jacobian, j, max_relative = 1e-8);
    }

    #[test]
    fn domain_exit_detected() {
        let chart = MetricChart::flat(2, 1.0);
        let res = exp_map(&chart, &[0.5, 0.0], &[1.0, 0.0], 1.0);
        assert!(matches!(res, Err(ChartError::DomainExit(_))));
    }

    #[test]
    fn rejects_non_unit_tangent() {
        let chart = MetricChart::flat(2, 1.0);
        assert!(matches!(
            exp_map(&chart, &[0.0, 0.0], &[2.0, 0.0], 0.5),
            Err(ChartError::BadUnitTangent(_))
        ));
    }
}
