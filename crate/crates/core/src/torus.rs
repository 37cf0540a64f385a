//! Exact spectral calculus on flat tori T^n = (R/2πZ)^n.
//!
//! Fields are sampled on a periodic lattice and transformed with unitary
//! FFTs; Fourier multipliers act diagonally on integer frequencies
//! k ∈ [−N/2, N/2)^n with eigenvalues λ_k = |k|². The ambiguous Nyquist
//! rows are zeroed whenever a multiplier is applied.

use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use thiserror::Error;

use crate::opnorm::LinearOp;

#[derive(Debug, Error)]
pub enum TorusError {
    #[error("grid shape {0:?} invalid: axes must be even and >= 8")]
    BadShape(Vec<usize>),
    #[error("field has {found} values, grid wants {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite field entry at flat index {0}")]
    NonFinite(usize),
    #[error("operation expects a {expected:?}-space field")]
    SpaceMismatch { expected: Space },
    #[error("z = {z} is {dist:e} away from the negated lattice spectrum")]
    NearSingular { z: Complex64, dist: f64 },
}

/// Periodic lattice on T^n, spacing 2π/N_a per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusGrid {
    shape: Vec<usize>,
}

impl TorusGrid {
    /// Uniform grid: `samples` points per axis in dimension `n`.
    pub fn new(n: usize, samples: usize) -> Result<Self, TorusError> {
        Self::anisotropic(vec![samples; n])
    }

    /// Per-axis sample counts; every axis must be even with at least
    /// 8 points (mixed-radix transforms are fine).
    pub fn anisotropic(shape: Vec<usize>) -> Result<Self, TorusError> {
        if shape.is_empty() || shape.iter().any(|&s| s < 8 || s % 2 != 0) {
            return Err(TorusError::BadShape(shape));
        }
        Ok(Self { shape })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * core::f64::consts::PI / self.shape[axis] as f64
    }

    /// Quadrature weight of one cell, Π_a (2π / N_a).
    pub fn cell_volume(&self) -> f64 {
        self.shape
            .iter()
            .map(|&s| 2.0 * core::f64::consts::PI / s as f64)
            .product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.shape.len()];
        for a in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.shape[a + 1];
        }
        strides
    }

    /// Physical coordinates of a flat index.
    pub fn coords(&self, mut flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for a in (0..self.dim()).rev() {
            let i = flat % self.shape[a];
            flat /= self.shape[a];
            x[a] = i as f64 * self.spacing(a);
        }
        x
    }
}

/// Signed frequency of a DFT index: i for i < N/2, i − N otherwise.
pub fn freq_of_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Walks the lattice in flat order, passing the signed frequency vector
/// and whether any axis sits on its Nyquist row.
pub fn for_each_freq<F: FnMut(usize, &[i64], bool)>(shape: &[usize], mut f: F) {
    let dim = shape.len();
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; dim];
    let mut freq = vec![0i64; dim];
    let mut nyq_flags = vec![false; dim];
    for a in 0..dim {
        freq[a] = freq_of_index(0, shape[a]);
        nyq_flags[a] = false;
    }
    let mut nyq_count = 0usize;
    for flat in 0..total {
        f(flat, &freq, nyq_count > 0);
        // odometer increment over the last axis
        let mut a = dim;
        while a > 0 {
            a -= 1;
            idx[a] += 1;
            if idx[a] == shape[a] {
                idx[a] = 0;
            }
            let was_nyq = nyq_flags[a];
            freq[a] = freq_of_index(idx[a], shape[a]);
            nyq_flags[a] = idx[a] == shape[a] / 2;
            match (was_nyq, nyq_flags[a]) {
                (false, true) => nyq_count += 1,
                (true, false) => nyq_count -= 1,
                _ => {}
            }
            if idx[a] != 0 {
                break;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Physical,
    Frequency,
}

/// A complex scalar field sampled on a torus lattice, in physical or
/// frequency space.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: TorusGrid,
    values: Vec<Complex64>,
    space: Space,
}

static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();

fn fft_axis(values: &mut [Complex64], shape: &[usize], axis: usize, forward: bool) {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let plan = {
        let mut planner = PLANNER
            .get_or_init(|| Mutex::new(FftPlanner::new()))
            .lock()
            .unwrap();
        if forward {
            planner.plan_fft_forward(len)
        } else {
            planner.plan_fft_inverse(len)
        }
    };
    let mut lane = vec![Complex64::default(); len];
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for j in 0..len {
                lane[j] = values[base + j * inner];
            }
            plan.process_with_scratch(&mut lane, &mut scratch);
            for j in 0..len {
                values[base + j * inner] = lane[j];
            }
        }
    }
}

impl GridField {
    pub fn zeros(grid: TorusGrid) -> Self {
        let len = grid.len();
        Self {
            grid,
            values: vec![Complex64::default(); len],
            space: Space::Physical,
        }
    }

    pub fn from_values(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self, TorusError> {
        if values.len() != grid.len() {
            return Err(TorusError::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(TorusError::NonFinite(bad));
        }
        Ok(Self {
            grid,
            values,
            space: Space::Physical,
        })
    }

    /// Samples a function of the physical coordinates.
    pub fn from_fn<F: FnMut(&[f64]) -> Complex64>(grid: TorusGrid, mut f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self {
            grid,
            values,
            space: Space::Physical,
        }
    }

    /// Complex white noise, deterministic in the seed.
    pub fn random_normal(grid: TorusGrid, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let values = (0..grid.len())
            .map(|_| {
                Complex64::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                )
            })
            .collect();
        Self {
            grid,
            values,
            space: Space::Physical,
        }
    }

    /// Random field with Gaussian spectral decay exp(−|k|²/(2σ²)).
    pub fn random_smooth(grid: TorusGrid, seed: u64, sigma: f64) -> Self {
        let noise = Self::random_normal(grid.clone(), seed).fourier_forward();
        let mut spec = noise;
        for_each_freq(&grid.shape, |flat, freq, nyquist| {
            if nyquist {
                spec.values[flat] = Complex64::default();
            } else {
                let k2: i64 = freq.iter().map(|k| k * k).sum();
                spec.values[flat] *= (-(k2 as f64) / (2.0 * sigma * sigma)).exp();
            }
        });
        spec.fourier_inverse()
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Unitary forward transform; Parseval holds in the plain l² sense.
    pub fn fourier_forward(&self) -> GridField {
        let mut values = self.values.clone();
        for axis in 0..self.grid.dim() {
            fft_axis(&mut values, &self.grid.shape, axis, true);
        }
        let scale = 1.0 / (self.grid.len() as f64).sqrt();
        for v in &mut values {
            *v *= scale;
        }
        GridField {
            grid: self.grid.clone(),
            values,
            space: Space::Frequency,
        }
    }

    /// Unitary inverse transform.
    pub fn fourier_inverse(&self) -> GridField {
        let mut values = self.values.clone();
        for axis in 0..self.grid.dim() {
            fft_axis(&mut values, &self.grid.shape, axis, false);
        }
        let scale = 1.0 / (self.grid.len() as f64).sqrt();
        for v in &mut values {
            *v *= scale;
        }
        GridField {
            grid: self.grid.clone(),
            values,
            space: Space::Physical,
        }
    }

    /// Applies a symbol to a frequency-space field in place, zeroing the
    /// Nyquist rows.
    pub fn multiply_symbol<F: Fn(&[i64]) -> Complex64>(&mut self, sym: F) -> Result<(), TorusError> {
        if self.space != Space::Frequency {
            return Err(TorusError::SpaceMismatch {
                expected: Space::Frequency,
            });
        }
        for_each_freq(&self.grid.shape.clone(), |flat, freq, nyquist| {
            self.values[flat] = if nyquist {
                Complex64::default()
            } else {
                self.values[flat] * sym(freq)
            };
        });
        Ok(())
    }

    /// Round-trip multiplier application on a physical-space field.
    pub fn apply_multiplier<F: Fn(&[i64]) -> Complex64>(
        &self,
        sym: F,
    ) -> Result<GridField, TorusError> {
        if self.space != Space::Physical {
            return Err(TorusError::SpaceMismatch {
                expected: Space::Physical,
            });
        }
        let mut spec = self.fourier_forward();
        spec.multiply_symbol(sym)?;
        Ok(spec.fourier_inverse())
    }

    pub fn scale(&self, c: Complex64) -> GridField {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= c;
        }
        out
    }

    pub fn add(&self, other: &GridField) -> GridField {
        debug_assert_eq!(self.grid, other.grid);
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v += *w;
        }
        out
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        debug_assert_eq!(self.grid, other.grid);
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v -= *w;
        }
        out
    }

    /// h^n-weighted inner product ⟨u, v⟩ = h^n Σ u v̄.
    pub fn inner(&self, other: &GridField) -> Complex64 {
        debug_assert_eq!(self.grid, other.grid);
        let dot: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| u * v.conj())
            .sum();
        dot * self.grid.cell_volume()
    }
}

/// Riemann-sum L^p norm, (h^n Σ |u_i|^p)^{1/p}; p = ∞ gives max |u_i|.
///
/// The largest modulus is factored out before powering, so norms of
/// fields with huge dynamic range (exponential weights) do not overflow.
pub fn lp_norm(u: &GridField, p: f64) -> f64 {
    debug_assert!(p >= 1.0);
    let vals = u.values();
    let m = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if p.is_infinite() || m == 0.0 {
        return m;
    }
    let w = u.grid().cell_volume();
    if p == 2.0 {
        let s: f64 = vals.iter().map(|v| (v.norm() / m).powi(2)).sum();
        return m * (w * s).sqrt();
    }
    let s: f64 = vals.iter().map(|v| (v.norm() / m).powf(p)).sum();
    m * (w * s).powf(1.0 / p)
}

/// L^p norm measured on a zero-pad refined lattice (trigonometric
/// interpolation by `factor` per axis). Controls the quadrature error of
/// high-p norms of oscillatory fields.
pub fn lp_norm_oversampled(u: &GridField, p: f64, factor: usize) -> f64 {
    debug_assert!(factor >= 1);
    if factor == 1 {
        return lp_norm(u, p);
    }
    lp_norm(&oversample(u, factor), p)
}

/// Trigonometric interpolation onto a `factor`-times finer lattice.
pub fn oversample(u: &GridField, factor: usize) -> GridField {
    let spec = u.fourier_forward();
    let coarse = u.grid().shape().to_vec();
    let fine: Vec<usize> = coarse.iter().map(|&s| s * factor).collect();
    let fine_grid = TorusGrid::anisotropic(fine.clone()).expect("scaled shape stays valid");
    let mut out = GridField::zeros(fine_grid);
    out.space = Space::Frequency;
    let fine_strides = out.grid.strides();
    let amp = (out.grid.len() as f64 / u.grid().len() as f64).sqrt();
    for_each_freq(&coarse, |flat, freq, _| {
        let mut fine_flat = 0usize;
        for (a, &k) in freq.iter().enumerate() {
            let i = if k >= 0 {
                k as usize
            } else {
                (fine[a] as i64 + k) as usize
            };
            fine_flat += i * fine_strides[a];
        }
        out.values[fine_flat] = spec.values[flat] * amp;
    });
    out.fourier_inverse()
}

/// Applies the Helmholtz multiplier |k|² + z.
pub fn helmholtz_apply(u: &GridField, z: Complex64) -> Result<GridField, TorusError> {
    u.apply_multiplier(|k| {
        let k2: i64 = k.iter().map(|c| c * c).sum();
        Complex64::new(k2 as f64, 0.0) + z
    })
}

/// Distance from −z to the represented lattice spectrum, with the
/// attaining frequency.
pub fn min_symbol_distance(grid: &TorusGrid, z: Complex64) -> (f64, Vec<i64>) {
    let mut best = f64::INFINITY;
    let mut witness = vec![0i64; grid.dim()];
    for_each_freq(grid.shape(), |_, freq, nyquist| {
        if nyquist {
            return;
        }
        let k2: i64 = freq.iter().map(|c| c * c).sum();
        let d = (Complex64::new(k2 as f64, 0.0) + z).norm();
        if d < best {
            best = d;
            witness = freq.to_vec();
        }
    });
    (best, witness)
}

/// Applies the resolvent multiplier 1/(|k|² + z); fails when z sits within
/// 1e−12 of the negated lattice spectrum.
pub fn resolvent_apply(f: &GridField, z: Complex64) -> Result<GridField, TorusError> {
    let (dist, _) = min_symbol_distance(f.grid(), z);
    if dist <= 1e-12 {
        return Err(TorusError::NearSingular { z, dist });
    }
    f.apply_multiplier(|k| {
        let k2: i64 = k.iter().map(|c| c * c).sum();
        (Complex64::new(k2 as f64, 0.0) + z).finv()
    })
}

/// Projects onto the spectral cluster m ≤ √λ_k < m + 1 (λ_k = |k|²).
pub fn cluster_project(u: &GridField, m: u32) -> Result<GridField, TorusError> {
    let lo = (m as i64) * (m as i64);
    let hi = (m as i64 + 1) * (m as i64 + 1);
    u.apply_multiplier(|k| {
        let k2: i64 = k.iter().map(|c| c * c).sum();
        if k2 >= lo && k2 < hi {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        }
    })
}

/// Rank-one (per lattice frequency) projection onto e^{i j x₁} ψ_k where
/// axis 0 carries the distinguished Euclidean factor and `k_rest` indexes
/// the transverse frequencies.
pub fn pi_jk_project(u: &GridField, j: i64, k_rest: &[i64]) -> Result<GridField, TorusError> {
    assert_eq!(k_rest.len() + 1, u.grid().dim());
    u.apply_multiplier(|k| {
        if k[0] == j && k[1..] == *k_rest {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        }
    })
}

/// Warm-start witness fields for resolvent norm estimation: a periodic
/// Gaussian bump at the concentration scale |z|^{−1/2} (clamped to the
/// grid), and the same bump riding the lattice mode nearest to −z. Both
/// are legitimate witnesses; they matter when the optimal concentration
/// scale approaches the grid spacing.
pub fn resolvent_witness_starts(grid: &TorusGrid, z: Complex64) -> Vec<Vec<Complex64>> {
    let h_max = (0..grid.dim())
        .map(|a| grid.spacing(a))
        .fold(0.0f64, f64::max);
    let sigma = (0.8 * z.norm().powf(-0.5)).max(1.1 * h_max);
    let (_, witness_k) = min_symbol_distance(grid, z);
    let center = core::f64::consts::PI;
    let bump = GridField::from_fn(grid.clone(), |x| {
        let mut s = 0.0;
        for xa in x {
            let mut d = (xa - center).abs();
            d = d.min(2.0 * core::f64::consts::PI - d);
            s += d * d;
        }
        Complex64::new((-s / (2.0 * sigma * sigma)).exp(), 0.0)
    });
    let modulated = GridField::from_fn(grid.clone(), |x| {
        let phase: f64 = x
            .iter()
            .zip(&witness_k)
            .map(|(xa, ka)| xa * *ka as f64)
            .sum();
        Complex64::from_polar(1.0, phase)
    });
    let riding: Vec<Complex64> = bump
        .values()
        .iter()
        .zip(modulated.values())
        .map(|(b, m)| b * m)
        .collect();
    vec![bump.into_values(), riding]
}

/// A Fourier multiplier as a matrix-free operator with h^n-weighted norms.
pub struct TorusMultiplierOp {
    grid: TorusGrid,
    table: Vec<Complex64>,
    /// Oversampling factor used when measuring norms of witnesses.
    pub measure_factor: usize,
}

impl TorusMultiplierOp {
    pub fn new<F: Fn(&[i64]) -> Complex64>(grid: TorusGrid, sym: F) -> Self {
        let mut table = vec![Complex64::default(); grid.len()];
        for_each_freq(grid.shape(), |flat, freq, nyquist| {
            table[flat] = if nyquist { Complex64::default() } else { sym(freq) };
        });
        Self {
            grid,
            table,
            measure_factor: 1,
        }
    }

    pub fn resolvent(grid: TorusGrid, z: Complex64) -> Result<Self, TorusError> {
        let (dist, _) = min_symbol_distance(&grid, z);
        if dist <= 1e-12 {
            return Err(TorusError::NearSingular { z, dist });
        }
        Ok(Self::new(grid, |k| {
            let k2: i64 = k.iter().map(|c| c * c).sum();
            (Complex64::new(k2 as f64, 0.0) + z).finv()
        }))
    }

    pub fn cluster(grid: TorusGrid, m: u32) -> Self {
        let lo = (m as i64) * (m as i64);
        let hi = (m as i64 + 1) * (m as i64 + 1);
        Self::new(grid, |k| {
            let k2: i64 = k.iter().map(|c| c * c).sum();
            if k2 >= lo && k2 < hi {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn run(&self, input: &[Complex64], out: &mut [Complex64], conj: bool) {
        let field = GridField {
            grid: self.grid.clone(),
            values: input.to_vec(),
            space: Space::Physical,
        };
        let mut spec = field.fourier_forward();
        for (v, t) in spec.values.iter_mut().zip(&self.table) {
            *v *= if conj { t.conj() } else { *t };
        }
        let back = spec.fourier_inverse();
        out.copy_from_slice(&back.values);
    }
}

impl LinearOp for TorusMultiplierOp {
    fn len_in(&self) -> usize {
        self.grid.len()
    }

    fn len_out(&self) -> usize {
        self.grid.len()
    }

    fn weight_in(&self) -> f64 {
        self.grid.cell_volume()
    }

    fn weight_out(&self) -> f64 {
        self.grid.cell_volume()
    }

    fn apply(&self, input: &[Complex64], out: &mut [Complex64]) {
        self.run(input, out, false);
    }

    fn apply_adjoint(&self, input: &[Complex64], out: &mut [Complex64]) {
        self.run(input, out, true);
    }

    fn measure_in(&self, u: &[Complex64], p: f64) -> f64 {
        let field = GridField {
            grid: self.grid.clone(),
            values: u.to_vec(),
            space: Space::Physical,
        };
        lp_norm_oversampled(&field, p, self.measure_factor)
    }

    fn measure_out(&self, u: &[Complex64], q: f64) -> f64 {
        self.measure_in(u, q)
    }
}
