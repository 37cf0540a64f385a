//! Spectral-parameter regions and admissible-exponent geometry.
//!
//! The region Ξ_δ = {z ∉ ℝ₋ : Re √z ≥ δ} is the exterior of a parabola;
//! membership can equivalently be tested through
//! (Im z)² ≥ 4δ²(δ² − Re z). Both predicates are provided and must agree.
//!
//! Exponent pairs (p, q) with 1 ≤ p ≤ 2 ≤ q are classified against the
//! polygons on which the parametrix and remainder bounds hold, with exact
//! rational arithmetic available so that vertex and boundary cases are
//! decided without rounding.

use num_complex::Complex64;
use num_rational::Rational64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("z = {0} lies on the closed negative real axis")]
    NegativeRealAxis(Complex64),
    #[error("delta = {0} must lie in (0, 1)")]
    InvalidDelta(f64),
    #[error("d = {0} outside [0, 1]")]
    GapOutOfRange(f64),
    #[error("dimension n = {0} must be >= 3")]
    BadDimension(i64),
    #[error("exponents (p, q) = ({0}, {1}) must satisfy 1 <= p <= 2 <= q")]
    BadExponents(f64, f64),
}

/// True when z lies on the closed negative real axis (branch cut).
pub fn on_negative_real_axis(z: Complex64) -> bool {
    z.im == 0.0 && z.re <= 0.0
}

/// Re √z through the half-angle formula √((Re z + |z|)/2).
///
/// Valid for every z off the branch cut; returns a nonnegative number.
/// The cancellation-prone side (Re z < 0) is evaluated through the
/// conjugate expression |Im z| / (2 √((|z| − Re z)/2)).
pub fn re_sqrt(z: Complex64) -> f64 {
    let r = z.norm();
    if z.re >= 0.0 {
        ((r + z.re) / 2.0).sqrt()
    } else {
        let im_part = ((r - z.re) / 2.0).sqrt();
        if im_part == 0.0 {
            0.0
        } else {
            z.im.abs() / (2.0 * im_part)
        }
    }
}

/// Principal branch of the complex square root.
///
/// The real part equals √((Re z + |z|)/2) and the argument of the result
/// lies in (−π/2, π/2). The closed negative real axis is rejected.
pub fn sqrt_principal(z: Complex64) -> Result<Complex64, RegionError> {
    if on_negative_real_axis(z) {
        return Err(RegionError::NegativeRealAxis(z));
    }
    let r = z.norm();
    // One square root is computed on the additive side; the other follows
    // from re * im = Im z / 2, which avoids cancellation.
    if z.re >= 0.0 {
        let re = ((r + z.re) / 2.0).sqrt();
        Ok(Complex64::new(re, z.im / (2.0 * re)))
    } else {
        let im = ((r - z.re) / 2.0).sqrt();
        let im = if z.im < 0.0 { -im } else { im };
        Ok(Complex64::new(z.im / (2.0 * im), im))
    }
}

fn check_delta(delta: f64) -> Result<(), RegionError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(RegionError::InvalidDelta(delta))
    }
}

/// Membership in Ξ_δ = {z ∉ ℝ₋ : Re √z ≥ δ}.
///
/// Points on the closed negative real axis are rejected as a domain error,
/// not reported as `false`.
pub fn in_xi_delta(z: Complex64, delta: f64) -> Result<bool, RegionError> {
    check_delta(delta)?;
    if on_negative_real_axis(z) {
        return Err(RegionError::NegativeRealAxis(z));
    }
    Ok(re_sqrt(z) >= delta)
}

/// Parabola form of the Ξ_δ predicate: (Im z)² ≥ 4δ²(δ² − Re z).
pub fn in_xi_delta_parabola(z: Complex64, delta: f64) -> Result<bool, RegionError> {
    check_delta(delta)?;
    if on_negative_real_axis(z) {
        return Err(RegionError::NegativeRealAxis(z));
    }
    let d2 = delta * delta;
    Ok(z.im * z.im >= 4.0 * d2 * (d2 - z.re))
}

/// Membership in the larger region Ξ̃_δ: |Im z| ≥ δ when Re z < 0 and
/// |z| > δ when Re z ≥ 0.
///
/// Provided for exploration only; no estimate is asserted on it.
pub fn in_xi_tilde(z: Complex64, delta: f64) -> Result<bool, RegionError> {
    check_delta(delta)?;
    if on_negative_real_axis(z) {
        return Err(RegionError::NegativeRealAxis(z));
    }
    Ok(if z.re < 0.0 {
        z.im.abs() >= delta
    } else {
        z.norm() > delta
    })
}

/// A spectral parameter z together with the region scale δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParameter {
    z: Complex64,
    delta: f64,
}

impl SpectralParameter {
    pub fn new(z: Complex64, delta: f64) -> Result<Self, RegionError> {
        check_delta(delta)?;
        if on_negative_real_axis(z) {
            return Err(RegionError::NegativeRealAxis(z));
        }
        Ok(Self { z, delta })
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sqrt(&self) -> Complex64 {
        sqrt_principal(self.z).expect("constructor excluded the branch cut")
    }

    pub fn in_xi_delta(&self) -> bool {
        in_xi_delta(self.z, self.delta).expect("constructor validated inputs")
    }

    pub fn in_xi_tilde(&self) -> bool {
        in_xi_tilde(self.z, self.delta).expect("constructor validated inputs")
    }
}

/// Decay order σ(d) of the parametrix as a function of d = 1/p − 1/q:
/// σ = −(n−1)d/4 + 1/2 for d ≤ 2/(n+1) and σ = −nd/2 + 1 beyond.
pub fn sigma_decay(d: f64, n: i64) -> Result<f64, RegionError> {
    if n < 3 {
        return Err(RegionError::BadDimension(n));
    }
    if !(0.0..=1.0).contains(&d) {
        return Err(RegionError::GapOutOfRange(d));
    }
    let nf = n as f64;
    Ok(if d <= 2.0 / (nf + 1.0) {
        -(nf - 1.0) / 4.0 * d + 0.5
    } else {
        -nf / 2.0 * d + 1.0
    })
}

/// Exact-rational σ(d); the two branches agree at d = 2/(n+1).
pub fn sigma_decay_exact(d: Rational64, n: i64) -> Result<Rational64, RegionError> {
    if n < 3 {
        return Err(RegionError::BadDimension(n));
    }
    let zero = Rational64::new(0, 1);
    let one = Rational64::new(1, 1);
    if d < zero || d > one {
        return Err(RegionError::GapOutOfRange(0.0));
    }
    let split = Rational64::new(2, n + 1);
    Ok(if d <= split {
        -Rational64::new(n - 1, 4) * d + Rational64::new(1, 2)
    } else {
        -Rational64::new(n, 2) * d + one
    })
}

/// A Lebesgue exponent pair with 1 ≤ p ≤ 2 ≤ q (q = ∞ allowed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentPair {
    pub p: f64,
    pub q: f64,
}

impl ExponentPair {
    pub fn new(p: f64, q: f64) -> Result<Self, RegionError> {
        if (1.0..=2.0).contains(&p) && q >= 2.0 {
            Ok(Self { p, q })
        } else {
            Err(RegionError::BadExponents(p, q))
        }
    }

    /// Dual exponent p' = p/(p−1); ∞ when p = 1.
    pub fn p_prime(&self) -> f64 {
        if self.p == 1.0 {
            f64::INFINITY
        } else {
            self.p / (self.p - 1.0)
        }
    }

    /// The gap d = 1/p − 1/q (1/∞ = 0).
    pub fn gap(&self) -> f64 {
        1.0 / self.p - if self.q.is_infinite() { 0.0 } else { 1.0 / self.q }
    }

    /// Scaling order s with 1/p − 1/q + 2s/n = 2/n.
    pub fn scaling_order(&self, n: i64) -> f64 {
        1.0 - n as f64 * self.gap() / 2.0
    }

    /// The dual pair (q', p').
    pub fn dual(&self) -> Self {
        let qp = if self.q.is_infinite() {
            1.0
        } else {
            self.q / (self.q - 1.0)
        };
        Self {
            p: qp,
            q: self.p_prime(),
        }
    }
}

/// The dual resolvent exponents (2n/(n+2), 2n/(n−2)).
pub fn theorem11_exponents(n: i64) -> Result<ExponentPair, RegionError> {
    let (p, q) = theorem11_exponents_exact(n)?;
    Ok(ExponentPair {
        p: rational_to_f64(p),
        q: rational_to_f64(q),
    })
}

/// Exact-rational form of the resolvent exponent pair.
pub fn theorem11_exponents_exact(n: i64) -> Result<(Rational64, Rational64), RegionError> {
    if n < 3 {
        return Err(RegionError::BadDimension(n));
    }
    Ok((Rational64::new(2 * n, n + 2), Rational64::new(2 * n, n - 2)))
}

pub fn rational_to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Outcome of classifying an exponent pair against the bound regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLabel {
    /// Uniform boundedness region: the trapezium CC'D'D.
    Theorem41Trapezium,
    /// |z|-decaying boundedness region: the pentagon DEGE'D'.
    Theorem42Pentagon,
    /// Additional bounds, upper trapezium (small 1/q).
    Lemma43Upper,
    /// Additional bounds, lower trapezium (large 1/q).
    Lemma43Lower,
    Outside,
}

/// Minimal arithmetic needed by the region predicates; implemented for
/// `f64` (approximate inputs) and `Rational64` (exact inputs).
pub trait RegionScalar:
    Copy
    + PartialOrd
    + core::ops::Add<Output = Self>
    + core::ops::Sub<Output = Self>
    + core::ops::Mul<Output = Self>
    + core::ops::Div<Output = Self>
{
    fn ratio(num: i64, den: i64) -> Self;
}

impl RegionScalar for f64 {
    fn ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
}

impl RegionScalar for Rational64 {
    fn ratio(num: i64, den: i64) -> Self {
        Rational64::new(num, den)
    }
}

/// Classification on inverse coordinates (1/p, 1/q).
///
/// Strict vs non-strict boundary handling follows the inequality systems of
/// the corresponding statements verbatim. Overlaps (the pentagon and the
/// upper trapezium share a boundary segment) resolve in the order
/// trapezium, pentagon, upper, lower.
fn classify_inverse<T: RegionScalar>(ip: T, iq: T, n: i64) -> RegionLabel {
    let half = T::ratio(1, 2);
    let inv2n = T::ratio(1, 2 * n);
    let d = ip - iq;
    let ipp = T::ratio(1, 1) - ip; // 1/p'

    // min(1/p - 1/2, 1/2 - 1/q) > 1/2n and 2/(n+1) < d <= 2/n
    if ip - half > inv2n && half - iq > inv2n && d > T::ratio(2, n + 1) && d <= T::ratio(2, n) {
        return RegionLabel::Theorem41Trapezium;
    }
    let lower_line = T::ratio(n - 1, n + 1) * ipp;
    let upper_line = T::ratio(n + 1, n - 1) * ipp;
    if d < T::ratio(2, n + 1) && lower_line <= iq && iq <= upper_line {
        return RegionLabel::Theorem42Pentagon;
    }
    if d <= T::ratio(2, n) {
        if iq <= lower_line && ip < half + inv2n {
            return RegionLabel::Lemma43Upper;
        }
        if iq >= upper_line && iq > half - inv2n {
            return RegionLabel::Lemma43Lower;
        }
    }
    RegionLabel::Outside
}

/// Recognizes floats that are (within 1e−12) small-denominator rationals,
/// via continued fractions.
fn snap_to_rational(x: f64, max_den: i64) -> Option<Rational64> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (1i64, x.floor() as i64);
    let (mut k0, mut k1) = (0i64, 1i64);
    let mut frac = x - x.floor();
    for _ in 0..32 {
        if k1 > max_den {
            return None;
        }
        let cand = h1 as f64 / k1 as f64;
        if (cand - x).abs() <= 1e-12 * x.abs().max(1.0) {
            return Some(Rational64::new(h1, k1));
        }
        if frac.abs() < 1e-15 {
            return None;
        }
        let val = 1.0 / frac;
        let q = val.floor();
        frac = val - q;
        let qi = q as i64;
        (h0, h1) = (h1, qi.checked_mul(h1)?.checked_add(h0)?);
        (k0, k1) = (k1, qi.checked_mul(k1)?.checked_add(k0)?);
    }
    None
}

/// Classify an exponent pair given as floats.
///
/// Inputs recognizably rational (denominator up to 64) are classified with
/// exact arithmetic so that boundary cases are decided without rounding;
/// everything else takes the floating-point path.
pub fn classify_pair(p: f64, q: f64, n: i64) -> Result<RegionLabel, RegionError> {
    if n < 3 {
        return Err(RegionError::BadDimension(n));
    }
    if !(1.0..=2.0).contains(&p) || q < 2.0 {
        return Err(RegionError::BadExponents(p, q));
    }
    let snapped = if q.is_infinite() {
        snap_to_rational(p, 64).map(|rp| (rp, Rational64::new(0, 1)))
    } else {
        match (snap_to_rational(p, 64), snap_to_rational(q, 64)) {
            (Some(rp), Some(rq)) => Some((rp, Rational64::new(1, 1) / rq)),
            _ => None,
        }
    };
    if let Some((rp, riq)) = snapped {
        return Ok(classify_inverse(Rational64::new(1, 1) / rp, riq, n));
    }
    let iq = if q.is_infinite() { 0.0 } else { 1.0 / q };
    Ok(classify_inverse(1.0 / p, iq, n))
}

/// Classify a point (1/p, 1/q) of the exponent square with exact
/// arithmetic; 1/q = 0 expresses q = ∞.
pub fn classify_point_exact(
    inv_p: Rational64,
    inv_q: Rational64,
    n: i64,
) -> Result<RegionLabel, RegionError> {
    if n < 3 {
        return Err(RegionError::BadDimension(n));
    }
    let half = Rational64::new(1, 2);
    let one = Rational64::new(1, 1);
    if inv_p < half || inv_p > one || inv_q < Rational64::new(0, 1) || inv_q > half {
        return Err(RegionError::BadExponents(
            rational_to_f64(inv_p),
            rational_to_f64(inv_q),
        ));
    }
    Ok(classify_inverse(inv_p, inv_q, n))
}

/// Classify an exponent pair with exact rational arithmetic.
pub fn classify_pair_exact(
    p: Rational64,
    q: Rational64,
    n: i64,
) -> Result<RegionLabel, RegionError> {
    if n < 3 {
        return Err(RegionError::BadDimension(n));
    }
    let one = Rational64::new(1, 1);
    let two = Rational64::new(2, 1);
    if p < one || p > two || q < two {
        return Err(RegionError::BadExponents(
            rational_to_f64(p),
            rational_to_f64(q),
        ));
    }
    Ok(classify_inverse(one / p, one / q, n))
}

/// Named vertices of the exponent polygons in the (1/p, 1/q) plane,
/// as exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionVertexTable {
    pub n: i64,
    pub a: (Rational64, Rational64),
    pub b: (Rational64, Rational64),
    pub b_prime: (Rational64, Rational64),
    pub c: (Rational64, Rational64),
    pub c_prime: (Rational64, Rational64),
    pub d: (Rational64, Rational64),
    pub d_prime: (Rational64, Rational64),
    /// Endpoint p = 2 of the segment (DE]; derived from the constraint
    /// line q = (n+1)p'/(n−1), not quoted coordinates.
    pub e: (Rational64, Rational64),
    /// Dual of E.
    pub e_prime: (Rational64, Rational64),
    pub f: (Rational64, Rational64),
    /// Endpoint p = 2 of (FG]; derived from the duality line q = p'.
    pub g: (Rational64, Rational64),
}

impl RegionVertexTable {
    pub fn new(n: i64) -> Result<Self, RegionError> {
        if n < 3 {
            return Err(RegionError::BadDimension(n));
        }
        let r = Rational64::new;
        let half = r(1, 2);
        let table = Self {
            n,
            a: (r(1, 1), r(0, 1)),
            b: (half + r(1, 2 * n), r(0, 1)),
            b_prime: (r(1, 1), half - r(1, 2 * n)),
            c: (half + r(1, 2 * n), half - r(3, 2 * n)),
            c_prime: (half + r(3, 2 * n), half - r(1, 2 * n)),
            d: (half + r(1, 2 * n), r((n - 1) * (n - 1), 2 * n * (n + 1))),
            d_prime: (r(n * n + 4 * n - 1, 2 * n * (n + 1)), half - r(1, 2 * n)),
            e: (half, r(n - 1, 2 * (n + 1))),
            e_prime: (r(n + 3, 2 * (n + 1)), half),
            f: (half + r(1, n + 1), half - r(1, n + 1)),
            g: (half, half),
        };
        let unit = |(x, y): (Rational64, Rational64)| {
            x >= r(0, 1) && x <= r(1, 1) && y >= r(0, 1) && y <= r(1, 1)
        };
        for v in [
            table.a,
            table.b,
            table.b_prime,
            table.c,
            table.c_prime,
            table.d,
            table.d_prime,
            table.e,
            table.e_prime,
            table.f,
            table.g,
        ] {
            debug_assert!(unit(v), "vertex {v:?} escapes the unit square");
        }
        Ok(table)
    }

    /// F is the midpoint of the segment [D, D'] (both on the line
    /// d = 2/(n+1)); exact in rational arithmetic.
    pub fn f_is_midpoint_of_dd_prime(&self) -> bool {
        let two = Rational64::new(2, 1);
        self.f.0 * two == self.d.0 + self.d_prime.0 && self.f.1 * two == self.d.1 + self.d_prime.1
    }
}
