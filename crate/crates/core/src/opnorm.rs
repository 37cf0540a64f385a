//! Lower-bound estimation of L^p → L^q operator norms.
//!
//! The estimator iterates the dual-norm fixed-point map
//! u ← J_{p'}(T* J_q(T u)) with normalization, where J_r is the r-norm
//! duality map. Every iterate exhibits a witness pair, so the reported
//! value is a certified lower bound of the discrete operator norm; upper
//! bounds are never claimed.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpnormError {
    #[error("exponents (p, q) = ({0}, {1}) must satisfy 1 < p <= 2 <= q < inf")]
    BadExponents(f64, f64),
    #[error("non-finite intermediate encountered during iteration")]
    NonFinite,
    #[error("all seeds produced degenerate (zero) fields")]
    AllSeedsDegenerate,
}

/// Matrix-free linear operator between weighted sequence spaces.
///
/// `weight_*` are the quadrature weights of the discrete L^p norms; the
/// adjoint must be taken with respect to the same weighted pairings.
/// `measure_*` are the norm functionals used for *reporting* witness
/// ratios, which may be finer than the iteration norms.
pub trait LinearOp: Sync {
    fn len_in(&self) -> usize;
    fn len_out(&self) -> usize;
    fn weight_in(&self) -> f64 {
        1.0
    }
    fn weight_out(&self) -> f64 {
        1.0
    }
    fn apply(&self, input: &[Complex64], out: &mut [Complex64]);
    fn apply_adjoint(&self, input: &[Complex64], out: &mut [Complex64]);
    fn measure_in(&self, u: &[Complex64], p: f64) -> f64 {
        weighted_lp(u, p, self.weight_in())
    }
    fn measure_out(&self, u: &[Complex64], q: f64) -> f64 {
        weighted_lp(u, q, self.weight_out())
    }
}

/// Weighted discrete norm (w Σ |u_i|^p)^{1/p}; p = ∞ ignores the weight.
/// The max modulus is factored out so large dynamic ranges cannot
/// overflow the powering.
pub fn weighted_lp(u: &[Complex64], p: f64, w: f64) -> f64 {
    let m = u.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if p.is_infinite() || m == 0.0 {
        return m;
    }
    if p == 2.0 {
        return m * (w * u.iter().map(|v| (v.norm() / m).powi(2)).sum::<f64>()).sqrt();
    }
    m * (w * u.iter().map(|v| (v.norm() / m).powf(p)).sum::<f64>()).powf(1.0 / p)
}

/// Duality map J_r(v)_i = |v_i|^{r-1} v_i/|v_i| up to positive scale.
///
/// The output is prescaled by the max modulus so large exponents cannot
/// overflow; callers renormalize afterwards.
fn duality_map(v: &[Complex64], r: f64, out: &mut Vec<Complex64>) {
    out.clear();
    let m = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if m == 0.0 {
        out.resize(v.len(), Complex64::default());
        return;
    }
    out.extend(v.iter().map(|x| {
        let a = x.norm();
        if a == 0.0 {
            Complex64::default()
        } else {
            (x / a) * (a / m).powf(r - 1.0)
        }
    }));
}

/// Estimate of an operator norm lower bound with convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub lower_bound: f64,
    pub iterations: u32,
    /// Relative change of the witness ratio at the last step.
    pub residual: f64,
    pub seed_count: u32,
}

fn check_exponents(p: f64, q: f64) -> Result<(), OpnormError> {
    if p > 1.0 && p <= 2.0 && q >= 2.0 && q.is_finite() {
        Ok(())
    } else {
        Err(OpnormError::BadExponents(p, q))
    }
}

/// One fixed-point run from a given start; returns the best witness
/// ratio, the iterations used, and the final relative change.
fn power_iter_from(
    op: &dyn LinearOp,
    p: f64,
    q: f64,
    start: &[Complex64],
    max_iters: u32,
) -> Result<Option<(f64, u32, f64)>, OpnormError> {
    let p_dual = p / (p - 1.0);
    let w_in = op.weight_in();
    let n0 = weighted_lp(start, p, w_in);
    if n0 == 0.0 || !n0.is_finite() {
        return Ok(None); // degenerate start
    }
    let mut u: Vec<Complex64> = start.iter().map(|v| v / n0).collect();
    let mut tu = vec![Complex64::default(); op.len_out()];
    let mut dual = Vec::with_capacity(op.len_out());
    let mut back = vec![Complex64::default(); op.len_in()];
    let mut next = Vec::with_capacity(op.len_in());

    let mut prev_ratio = 0.0f64;
    let mut streak = 0u32;
    let mut best = 0.0f64;
    let mut iters = 0u32;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        op.apply(&u, &mut tu);
        let num = op.measure_out(&tu, q);
        let den = op.measure_in(&u, p);
        if !num.is_finite() || !den.is_finite() {
            return Err(OpnormError::NonFinite);
        }
        let ratio = if den > 0.0 { num / den } else { 0.0 };
        best = best.max(ratio);
        iters = it;
        residual = (ratio - prev_ratio).abs() / ratio.abs().max(f64::MIN_POSITIVE);
        if residual < 1e-6 {
            streak += 1;
            if streak >= 3 {
                break;
            }
        } else {
            streak = 0;
        }
        prev_ratio = ratio;

        duality_map(&tu, q, &mut dual);
        op.apply_adjoint(&dual, &mut back);
        duality_map(&back, p_dual, &mut next);
        let norm = weighted_lp(&next, p, w_in);
        if norm == 0.0 || !norm.is_finite() {
            break; // collapsed iterate; keep the witnesses found so far
        }
        for (uu, nn) in u.iter_mut().zip(&next) {
            *uu = nn / norm;
        }
    }
    Ok(Some((best, iters, residual)))
}

/// Nonlinear power iteration for ‖T‖_{L^p → L^q}; the best witness ratio
/// over all seeds is returned, so the estimate never decreases when seeds
/// are added.
pub fn opnorm_power_iter(
    op: &dyn LinearOp,
    p: f64,
    q: f64,
    seeds: u32,
    max_iters: u32,
    seed_base: u64,
) -> Result<NormEstimate, OpnormError> {
    opnorm_power_iter_seeded(op, p, q, &[], seeds, max_iters, seed_base)
}

/// Power iteration over caller-supplied starting fields plus
/// `random_seeds` white-noise starts. Extra candidates can only raise the
/// certified lower bound.
pub fn opnorm_power_iter_seeded(
    op: &dyn LinearOp,
    p: f64,
    q: f64,
    starts: &[Vec<Complex64>],
    random_seeds: u32,
    max_iters: u32,
    seed_base: u64,
) -> Result<NormEstimate, OpnormError> {
    check_exponents(p, q)?;
    let mut best = 0.0f64;
    let mut best_iters = 0u32;
    let mut best_residual = f64::INFINITY;
    let mut live_seeds = 0u32;

    let mut consider = |outcome: Option<(f64, u32, f64)>| {
        if let Some((value, iters, residual)) = outcome {
            live_seeds += 1;
            if value > best {
                best = value;
                best_iters = iters;
                best_residual = residual;
            }
        }
    };
    for start in starts {
        assert_eq!(start.len(), op.len_in());
        consider(power_iter_from(op, p, q, start, max_iters)?);
    }
    for s in 0..random_seeds {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed_base ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let normal = StandardNormal;
        let u: Vec<Complex64> = (0..op.len_in())
            .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect();
        consider(power_iter_from(op, p, q, &u, max_iters)?);
    }
    if live_seeds == 0 {
        return Err(OpnormError::AllSeedsDegenerate);
    }
    Ok(NormEstimate {
        lower_bound: best,
        iterations: best_iters,
        residual: best_residual,
        seed_count: live_seeds,
    })
}

/// Relative gap between the estimate for T: L^p → L^q and its adjoint
/// T*: L^{q'} → L^{p'}; both should agree for an honest adjoint pair.
pub fn duality_check(
    op: &dyn LinearOp,
    p: f64,
    q: f64,
    seeds: u32,
    max_iters: u32,
    seed_base: u64,
) -> Result<f64, OpnormError> {
    let forward = opnorm_power_iter(op, p, q, seeds, max_iters, seed_base)?;
    let adj = AdjointOp { inner: op };
    let q_dual = q / (q - 1.0);
    let p_dual = p / (p - 1.0);
    let backward = opnorm_power_iter(&adj, q_dual, p_dual, seeds, max_iters, seed_base)?;
    Ok((forward.lower_bound - backward.lower_bound).abs() / forward.lower_bound)
}

/// View of the adjoint of an operator, with the roles of the two sides
/// swapped.
pub struct AdjointOp<'a> {
    inner: &'a dyn LinearOp,
}

impl<'a> LinearOp for AdjointOp<'a> {
    fn len_in(&self) -> usize {
        self.inner.len_out()
    }
    fn len_out(&self) -> usize {
        self.inner.len_in()
    }
    fn weight_in(&self) -> f64 {
        self.inner.weight_out()
    }
    fn weight_out(&self) -> f64 {
        self.inner.weight_in()
    }
    fn apply(&self, input: &[Complex64], out: &mut [Complex64]) {
        self.inner.apply_adjoint(input, out);
    }
    fn apply_adjoint(&self, input: &[Complex64], out: &mut [Complex64]) {
        self.inner.apply(input, out);
    }
}

/// Dense complex matrix in row-major order, for small exact experiments.
#[derive(Debug, Clone)]
pub struct DenseOp {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl DenseOp {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex64::default(); n * n];
        for i in 0..n {
            data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        Self::new(n, n, data)
    }

    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let data = (0..rows * cols)
            .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect();
        Self::new(rows, cols, data)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::new(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * c).collect(),
        )
    }
}

impl LinearOp for DenseOp {
    fn len_in(&self) -> usize {
        self.cols
    }
    fn len_out(&self) -> usize {
        self.rows
    }
    fn apply(&self, input: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *o = row.iter().zip(input).map(|(a, x)| a * x).sum();
        }
    }
    fn apply_adjoint(&self, input: &[Complex64], out: &mut [Complex64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (0..self.rows)
                .map(|i| self.data[i * self.cols + j].conj() * input[i])
                .sum();
        }
    }
}

/// Exhaustive small-matrix oracle: maximizes ‖Av‖_q over ‖v‖_p = 1 by
/// multi-start projected gradient ascent (64 starts), with the classical
/// closed forms at the p = 1 and q = ∞ endpoints. Deterministic in `seed`.
///
/// This is an independent check of the power iteration and shares none of
/// its fixed-point machinery.
pub fn dense_opnorm_oracle(a: &DenseOp, p: f64, q: f64, seed: u64) -> f64 {
    assert!(a.rows <= 32 && a.cols <= 32, "oracle is for small matrices");
    assert!((1.0..=2.0).contains(&p) && q >= 2.0);
    if p == 1.0 && q.is_infinite() {
        return a.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
    }
    if p == 1.0 {
        // best column in the q-norm
        return (0..a.cols)
            .map(|j| {
                let col: Vec<Complex64> =
                    (0..a.rows).map(|i| a.data[i * a.cols + j]).collect();
                weighted_lp(&col, q, 1.0)
            })
            .fold(0.0, f64::max);
    }
    if q.is_infinite() {
        // best row in the p'-norm
        let pd = p / (p - 1.0);
        return (0..a.rows)
            .map(|i| weighted_lp(&a.data[i * a.cols..(i + 1) * a.cols], pd, 1.0))
            .fold(0.0, f64::max);
    }

    let pd = p / (p - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let objective = |v: &[Complex64], av: &mut [Complex64]| -> f64 {
        a.apply(v, av);
        weighted_lp(av, q, 1.0)
    };
    let mut best = 0.0f64;
    let mut av = vec![Complex64::default(); a.rows];
    let mut grad = vec![Complex64::default(); a.cols];
    let mut dualv = Vec::new();
    let mut dir = Vec::new();
    for _start in 0..64 {
        let mut v: Vec<Complex64> = (0..a.cols)
            .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect();
        let n = weighted_lp(&v, p, 1.0);
        if n == 0.0 {
            continue;
        }
        for x in &mut v {
            *x /= n;
        }
        let mut f = objective(&v, &mut av);
        for _it in 0..300 {
            duality_map(&av, q, &mut dualv);
            a.apply_adjoint(&dualv, &mut grad);
            duality_map(&grad, pd, &mut dir);
            let dn = weighted_lp(&dir, p, 1.0);
            if dn == 0.0 {
                break;
            }
            let mut improved = false;
            let mut eta = 1.0f64;
            for _ in 0..6 {
                let trial: Vec<Complex64> = v
                    .iter()
                    .zip(&dir)
                    .map(|(x, d)| x * (1.0 - eta) + (d / dn) * eta)
                    .collect();
                let tn = weighted_lp(&trial, p, 1.0);
                if tn > 0.0 {
                    let cand: Vec<Complex64> = trial.iter().map(|x| x / tn).collect();
                    let fc = objective(&cand, &mut av);
                    if fc > f + 1e-15 {
                        v = cand;
                        f = fc;
                        improved = true;
                        break;
                    }
                }
                eta *= 0.5;
            }
            if !improved {
                // restore av for the converged point
                objective(&v, &mut av);
                break;
            }
        }
        best = best.max(f);
    }
    best
}
