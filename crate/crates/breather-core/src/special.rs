//! Bessel functions J₀, J₁, Y₀, Y₁, I₀, I₁, K₀, K₁ with derivatives and
//! exponentially scaled variants.
//!
//! Everything here is f64-in/f64-out, but the power-series branches accumulate
//! in double-double arithmetic so that the alternating series for J and Y do
//! not lose accuracy to cancellation before the asymptotic branch takes over.
//! Branch layout:
//!
//! - J, Y: power series (A&S 9.1.10/9.1.11) for x ≤ 12, Hankel expansion
//!   (DLMF 10.17) above.
//! - I: power series for x ≤ 15, DLMF 10.40.1 expansion above.
//! - K: log series (A&S 9.6.11/9.6.13) for x ≤ 2, the integral
//!   e^x K_ν(x) = ∫₀^∞ exp(−2x sinh²(t/2)) cosh(νt) dt on (2, 13.5],
//!   DLMF 10.40.2 expansion above. The integral branch avoids the
//!   catastrophic cancellation the log series suffers for mid-size x.
//!
//! Scaled variants remove e^{±x}: `i*_scaled` returns e^{−x}I, `k*_scaled`
//! returns e^{x}K. Derivatives of scaled kinds carry the same scaling factor,
//! i.e. the returned value is e^{∓x}·C′(x), so value/derivative ratios are
//! scaling-free.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BesselFamily {
    J,
    Y,
    I,
    K,
}

/// Selector for one member of the implemented Bessel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BesselKind {
    pub family: BesselFamily,
    /// 0 or 1.
    pub order: u8,
    /// e^{−x} scaling for I, e^{x} scaling for K. Invalid for J, Y.
    pub scaled: bool,
}

impl BesselKind {
    pub fn new(family: BesselFamily, order: u8) -> Self {
        assert!(order <= 1, "only orders 0 and 1 are implemented");
        Self { family, order, scaled: false }
    }

    pub fn scaled(family: BesselFamily, order: u8) -> Self {
        assert!(order <= 1, "only orders 0 and 1 are implemented");
        Self { family, order, scaled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialFnError {
    #[error("{family:?}{order} undefined at x = {x} (requires {requirement})")]
    DomainError {
        family: BesselFamily,
        order: u8,
        x: f64,
        requirement: &'static str,
    },
    #[error("scaling is only defined for I and K, not {family:?}")]
    InvalidScaling { family: BesselFamily },
}

/// Evaluate the selected Bessel function.
pub fn eval_bessel(b: BesselKind, x: f64) -> Result<f64, SpecialFnError> {
    check_domain(b, x)?;
    Ok(match (b.family, b.order, b.scaled) {
        (BesselFamily::J, 0, _) => j0(x),
        (BesselFamily::J, 1, _) => j1(x),
        (BesselFamily::Y, 0, _) => y0(x),
        (BesselFamily::Y, 1, _) => y1(x),
        (BesselFamily::I, 0, false) => i0(x),
        (BesselFamily::I, 1, false) => i1(x),
        (BesselFamily::I, 0, true) => i0_scaled(x),
        (BesselFamily::I, 1, true) => i1_scaled(x),
        (BesselFamily::K, 0, false) => k0(x),
        (BesselFamily::K, 1, false) => k1(x),
        (BesselFamily::K, 0, true) => k0_scaled(x),
        (BesselFamily::K, 1, true) => k1_scaled(x),
        _ => unreachable!("order restricted to 0|1 by BesselKind"),
    })
}

/// Evaluate the derivative of the selected Bessel function.
///
/// Uses C₀′ = ∓C₁ and C₁′ = C₀ − C₁/x (K₁′ = −K₀ − K₁/x). For scaled kinds
/// the result carries the same e^{∓x} factor as the value, not the derivative
/// of the scaled function.
pub fn eval_bessel_derivative(b: BesselKind, x: f64) -> Result<f64, SpecialFnError> {
    check_domain(b, x)?;
    Ok(match (b.family, b.order, b.scaled) {
        (BesselFamily::J, 0, _) => -j1(x),
        (BesselFamily::J, 1, _) => j1_prime(x),
        (BesselFamily::Y, 0, _) => -y1(x),
        (BesselFamily::Y, 1, _) => y0(x) - y1(x) / x,
        (BesselFamily::I, 0, false) => i1(x),
        (BesselFamily::I, 1, false) => i1_prime(x),
        (BesselFamily::I, 0, true) => i1_scaled(x),
        (BesselFamily::I, 1, true) => {
            if x == 0.0 {
                0.5
            } else {
                i0_scaled(x) - i1_scaled(x) / x
            }
        }
        (BesselFamily::K, 0, false) => -k1(x),
        (BesselFamily::K, 1, false) => -k0(x) - k1(x) / x,
        (BesselFamily::K, 0, true) => -k1_scaled(x),
        (BesselFamily::K, 1, true) => -k0_scaled(x) - k1_scaled(x) / x,
        _ => unreachable!("order restricted to 0|1 by BesselKind"),
    })
}

fn check_domain(b: BesselKind, x: f64) -> Result<(), SpecialFnError> {
    if b.scaled && matches!(b.family, BesselFamily::J | BesselFamily::Y) {
        return Err(SpecialFnError::InvalidScaling { family: b.family });
    }
    let (ok, requirement) = match b.family {
        BesselFamily::J | BesselFamily::I => (x >= 0.0 && x.is_finite(), "x >= 0"),
        BesselFamily::Y | BesselFamily::K => (x > 0.0 && x.is_finite(), "x > 0"),
    };
    if ok {
        Ok(())
    } else {
        Err(SpecialFnError::DomainError { family: b.family, order: b.order, x, requirement })
    }
}

// ---------------------------------------------------------------------------
// double-double accumulation
// ---------------------------------------------------------------------------

/// Unevaluated sum hi + lo with |lo| ≤ ulp(hi)/2; gives ~31 significant digits.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        quick_two_sum(s, e)
    }

    fn mul(self, other: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + self.hi * other.lo + self.lo * other.hi;
        quick_two_sum(p, e)
    }

    fn mul_f64(self, c: f64) -> Dd {
        let (p, e) = two_prod(self.hi, c);
        let e = e + self.lo * c;
        quick_two_sum(p, e)
    }

    fn div_f64(self, c: f64) -> Dd {
        let q1 = self.hi / c;
        let (p, e) = two_prod(q1, c);
        let r = (self.hi - p) - e + self.lo;
        let q2 = r / c;
        quick_two_sum(q1, q2)
    }

    fn abs_hi(self) -> f64 {
        self.hi.abs()
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

// ---------------------------------------------------------------------------
// J and Y
// ---------------------------------------------------------------------------

const JY_SERIES_CUTOFF: f64 = 12.0;

pub fn j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= JY_SERIES_CUTOFF {
        j_series(0, ax)
    } else {
        jy_asymptotic(0, ax).0
    }
}

pub fn j1(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= JY_SERIES_CUTOFF {
        j_series(1, ax)
    } else {
        jy_asymptotic(1, ax).0
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

pub fn y0(x: f64) -> f64 {
    if x <= JY_SERIES_CUTOFF {
        y_series(0, x)
    } else {
        jy_asymptotic(0, x).1
    }
}

pub fn y1(x: f64) -> f64 {
    if x <= JY_SERIES_CUTOFF {
        y_series(1, x)
    } else {
        jy_asymptotic(1, x).1
    }
}

pub fn j1_prime(x: f64) -> f64 {
    if x == 0.0 {
        0.5
    } else {
        j0(x) - j1(x) / x
    }
}

pub fn y1_prime(x: f64) -> f64 {
    y0(x) - y1(x) / x
}

/// J_ν(x) = (x/2)^ν Σ_m (−1)^m (x²/4)^m / (m! (m+ν)!), ν ∈ {0, 1}.
fn j_series(order: u8, x: f64) -> f64 {
    let z = Dd::from(x * 0.5).mul(Dd::from(x * 0.5));
    let mut term = if order == 0 { Dd::from(1.0) } else { Dd::from(x * 0.5) };
    let mut sum = term;
    let nu = order as f64;
    for m in 1..200 {
        let m = m as f64;
        term = term.mul(z).div_f64(-m * (m + nu));
        sum = sum.add(term);
        if term.abs_hi() < 1e-34 * sum.abs_hi().max(1e-300) {
            break;
        }
    }
    sum.to_f64()
}

/// Y₀/Y₁ power series, A&S 9.1.11 specialized to ν ∈ {0, 1}:
///
///   Y₀ = (2/π)[(ln(x/2)+γ) J₀ + Σ_{m≥1} (−1)^{m+1} H_m (x²/4)^m/(m!)²]
///   Y₁ = (2/π)[(ln(x/2)+γ) J₁ − 1/x
///        − (x/4) Σ_{m≥0} (−1)^m (H_m + H_{m+1}) (x²/4)^m/(m!(m+1)!)]
///
/// where H_m is the m-th harmonic number. The alternating sums run in
/// double-double; ln(x/2) only multiplies the O(1)-sized J value, so f64
/// precision suffices for the log factor.
fn y_series(order: u8, x: f64) -> f64 {
    let z = Dd::from(x * 0.5).mul(Dd::from(x * 0.5));
    let log_factor = (x * 0.5).ln() + EULER_GAMMA;
    let two_over_pi = 2.0 / std::f64::consts::PI;
    if order == 0 {
        let mut sum = Dd::ZERO;
        let mut term = Dd::from(1.0);
        let mut harmonic = Dd::ZERO;
        for m in 1..200 {
            let mf = m as f64;
            term = term.mul(z).div_f64(-mf * mf);
            harmonic = harmonic.add(Dd::from(1.0).div_f64(mf));
            let contrib = term.mul(harmonic).mul_f64(-1.0);
            sum = sum.add(contrib);
            if term.abs_hi() * harmonic.abs_hi() < 1e-34 * sum.abs_hi().max(1e-300) {
                break;
            }
        }
        let j_dd = j_series_dd(0, x);
        two_over_pi * j_dd.mul_f64(log_factor).add(sum).to_f64()
    } else {
        let mut sum = Dd::ZERO;
        let mut term = Dd::from(1.0);
        let mut h_m = Dd::ZERO;
        let mut h_m1 = Dd::from(1.0);
        for m in 0..200 {
            let contrib = term.mul(h_m.add(h_m1));
            sum = sum.add(contrib);
            if contrib.abs_hi() < 1e-34 * sum.abs_hi().max(1e-300) && m > 2 {
                break;
            }
            let mf = (m + 1) as f64;
            term = term.mul(z).div_f64(-mf * (mf + 1.0));
            h_m = h_m.add(Dd::from(1.0).div_f64(mf));
            h_m1 = h_m1.add(Dd::from(1.0).div_f64(mf + 1.0));
        }
        let j_dd = j_series_dd(1, x);
        let total = j_dd
            .mul_f64(log_factor)
            .add(Dd::from(-1.0).div_f64(x))
            .add(sum.mul_f64(-x / 4.0));
        two_over_pi * total.to_f64()
    }
}

fn j_series_dd(order: u8, x: f64) -> Dd {
    let z = Dd::from(x * 0.5).mul(Dd::from(x * 0.5));
    let mut term = if order == 0 { Dd::from(1.0) } else { Dd::from(x * 0.5) };
    let mut sum = term;
    let nu = order as f64;
    for m in 1..200 {
        let m = m as f64;
        term = term.mul(z).div_f64(-m * (m + nu));
        sum = sum.add(term);
        if term.abs_hi() < 1e-34 * sum.abs_hi().max(1e-300) {
            break;
        }
    }
    sum
}

/// Hankel expansion (DLMF 10.17.3/10.17.4): with ω = x − νπ/2 − π/4,
///
///   J_ν ≈ √(2/(πx)) (P cos ω − Q sin ω),
///   Y_ν ≈ √(2/(πx)) (P sin ω + Q cos ω),
///
/// P/Q built from a_k(ν) = ∏_{j≤k} (4ν² − (2j−1)²)/(k! 8^k), truncated at the
/// smallest term. Only used for x > 12 where truncation error < 4·10⁻¹¹.
fn jy_asymptotic(order: u8, x: f64) -> (f64, f64) {
    let four_nu2 = 4.0 * (order as f64) * (order as f64);
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a_k = 1.0_f64; // a_k / x^k, updated in place
    let mut prev = f64::INFINITY;
    for k in 0..40u32 {
        let term = a_k;
        if term.abs() > prev {
            break; // asymptotic tail started growing: stop at smallest term
        }
        prev = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        let odd = (2 * k + 1) as f64;
        a_k *= (four_nu2 - odd * odd) / (8.0 * (k as f64 + 1.0) * x);
        if term.abs() < 1e-18 {
            break;
        }
    }
    let omega = x - (order as f64) * std::f64::consts::FRAC_PI_2 - std::f64::consts::FRAC_PI_4;
    let amp = (2.0 / (std::f64::consts::PI * x)).sqrt();
    let (s, c) = omega.sin_cos();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}

// ---------------------------------------------------------------------------
// I
// ---------------------------------------------------------------------------

const I_SERIES_CUTOFF: f64 = 15.0;

pub fn i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= I_SERIES_CUTOFF {
        i_series(0, ax)
    } else {
        i_asymptotic_scaled(0, ax) * ax.exp()
    }
}

pub fn i1(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= I_SERIES_CUTOFF {
        i_series(1, ax)
    } else {
        i_asymptotic_scaled(1, ax) * ax.exp()
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

pub fn i0_scaled(x: f64) -> f64 {
    if x <= I_SERIES_CUTOFF {
        i_series(0, x) * (-x).exp()
    } else {
        i_asymptotic_scaled(0, x)
    }
}

pub fn i1_scaled(x: f64) -> f64 {
    if x <= I_SERIES_CUTOFF {
        i_series(1, x) * (-x).exp()
    } else {
        i_asymptotic_scaled(1, x)
    }
}

pub fn i1_prime(x: f64) -> f64 {
    if x == 0.0 {
        0.5
    } else {
        i0(x) - i1(x) / x
    }
}

/// Ratio I₁′(x)/I₁(x), overflow-safe for large arguments.
pub fn i1_log_derivative(x: f64) -> f64 {
    assert!(x > 0.0, "ratio undefined at x = 0");
    i0_scaled(x) / i1_scaled(x) - 1.0 / x
}

/// I_ν(x) = (x/2)^ν Σ_m (x²/4)^m / (m!(m+ν)!), all terms positive.
fn i_series(order: u8, x: f64) -> f64 {
    let z = Dd::from(x * 0.5).mul(Dd::from(x * 0.5));
    let mut term = if order == 0 { Dd::from(1.0) } else { Dd::from(x * 0.5) };
    let mut sum = term;
    let nu = order as f64;
    for m in 1..200 {
        let m = m as f64;
        term = term.mul(z).div_f64(m * (m + nu));
        sum = sum.add(term);
        if term.abs_hi() < 1e-34 * sum.abs_hi().max(1e-300) {
            break;
        }
    }
    sum.to_f64()
}

/// e^{−x} I_ν(x) ≈ Σ_k (−1)^k a_k(ν)/x^k / √(2πx)  (DLMF 10.40.1).
fn i_asymptotic_scaled(order: u8, x: f64) -> f64 {
    let four_nu2 = 4.0 * (order as f64) * (order as f64);
    let mut sum = 0.0;
    let mut a_k = 1.0_f64;
    let mut prev = f64::INFINITY;
    for k in 0..40u32 {
        if a_k.abs() > prev {
            break;
        }
        prev = a_k.abs();
        sum += a_k;
        let odd = (2 * k + 1) as f64;
        a_k *= -(four_nu2 - odd * odd) / (8.0 * (k as f64 + 1.0) * x);
        if a_k.abs() < 1e-18 * sum.abs() {
            sum += a_k;
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

// ---------------------------------------------------------------------------
// K
// ---------------------------------------------------------------------------

const K_SERIES_CUTOFF: f64 = 2.0;
const K_INTEGRAL_CUTOFF: f64 = 13.5;

pub fn k0(x: f64) -> f64 {
    k0_scaled(x) * (-x).exp()
}

pub fn k1(x: f64) -> f64 {
    k1_scaled(x) * (-x).exp()
}

pub fn k0_scaled(x: f64) -> f64 {
    if x <= K_SERIES_CUTOFF {
        k_log_series(0, x) * x.exp()
    } else if x <= K_INTEGRAL_CUTOFF {
        k_integral_scaled(0, x)
    } else {
        k_asymptotic_scaled(0, x)
    }
}

pub fn k1_scaled(x: f64) -> f64 {
    if x <= K_SERIES_CUTOFF {
        k_log_series(1, x) * x.exp()
    } else if x <= K_INTEGRAL_CUTOFF {
        k_integral_scaled(1, x)
    } else {
        k_asymptotic_scaled(1, x)
    }
}

/// Ratio K₁′(x)/K₁(x), overflow-safe for large arguments.
pub fn k1_log_derivative(x: f64) -> f64 {
    -k0_scaled(x) / k1_scaled(x) - 1.0 / x
}

/// A&S 9.6.13/9.6.11 specialized to ν ∈ {0, 1}:
///
///   K₀ = −(ln(x/2)+γ) I₀ + Σ_{m≥1} H_m (x²/4)^m/(m!)²
///   K₁ = 1/x + ln(x/2) I₁ − (x/4)[1 + Σ_{m≥1}(H_m + H_{m+1})(x²/4)^m/(m!(m+1)!)]
///
/// The m=0 term of the K₁ sum is ψ(1)+ψ(2) = 1 − 2γ; the γ portion is folded
/// into the log factor below. Only used for x ≤ 2 where the I·log vs. sum
/// cancellation costs at most one digit.
fn k_log_series(order: u8, x: f64) -> f64 {
    let z = x * x * 0.25;
    if order == 0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        let mut harmonic = 0.0;
        for m in 1..60 {
            let mf = m as f64;
            term *= z / (mf * mf);
            harmonic += 1.0 / mf;
            sum += term * harmonic;
            if term * harmonic < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        -((x * 0.5).ln() + EULER_GAMMA) * i0(x) + sum
    } else {
        // Σ_{m≥0} (ψ(m+1)+ψ(m+2)) z^m/(m!(m+1)!) with ψ(m+1) = −γ + H_m:
        // split off the −2γ·I₁-like part so the remaining sum has H-terms only.
        let mut sum = 0.0;
        let mut term = 1.0;
        let mut h_m = 0.0;
        let mut h_m1 = 1.0;
        for m in 0..60 {
            let contrib = term * (h_m + h_m1);
            sum += contrib;
            let mf = (m + 1) as f64;
            term *= z / (mf * (mf + 1.0));
            h_m += 1.0 / mf;
            h_m1 += 1.0 / (mf + 1.0);
            if term * (h_m + h_m1) < 1e-18 * sum.abs().max(1e-300) && m > 2 {
                break;
            }
        }
        1.0 / x + ((x * 0.5).ln() + EULER_GAMMA) * i1(x) - (x / 4.0) * sum
    }
}

/// e^{x} K_ν(x) = ∫₀^∞ exp(−2x sinh²(t/2)) cosh(νt) dt, trapezoid rule.
///
/// The integrand is even and analytic on |Im t| < π/2, so the composite
/// trapezoid rule converges geometrically in 1/h; h = 1/16 leaves the
/// quadrature error far below f64 rounding for all x ≥ 2. The t-range is
/// cut when 2x sinh²(t/2) > 745 (integrand underflows).
fn k_integral_scaled(order: u8, x: f64) -> f64 {
    let h = 0.0625_f64;
    let nu = order as f64;
    let mut sum = 0.5; // t = 0 contributes cosh(0)·exp(0) with trapezoid weight 1/2
    let mut t = h;
    loop {
        let s = (0.5 * t).sinh();
        let expo = 2.0 * x * s * s;
        if expo > 745.0 {
            break;
        }
        sum += (-expo).exp() * (nu * t).cosh();
        t += h;
    }
    sum * h
}

/// e^{x} K_ν(x) ≈ √(π/(2x)) Σ_k a_k(ν)/x^k  (DLMF 10.40.2), x > 13.5.
fn k_asymptotic_scaled(order: u8, x: f64) -> f64 {
    let four_nu2 = 4.0 * (order as f64) * (order as f64);
    let mut sum = 0.0;
    let mut a_k = 1.0_f64;
    let mut prev = f64::INFINITY;
    for k in 0..40u32 {
        if a_k.abs() > prev {
            break;
        }
        prev = a_k.abs();
        sum += a_k;
        let odd = (2 * k + 1) as f64;
        a_k *= (four_nu2 - odd * odd) / (8.0 * (k as f64 + 1.0) * x);
        if a_k.abs() < 1e-18 * sum.abs() {
            sum += a_k;
            break;
        }
    }
    sum * (std::f64::consts::FRAC_PI_2 / x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j1_at_zero_is_zero() {
        assert_eq!(j1(0.0), 0.0);
        assert_eq!(eval_bessel(BesselKind::new(BesselFamily::J, 1), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn j1_derivative_at_zero_is_half() {
        let d = eval_bessel_derivative(BesselKind::new(BesselFamily::J, 1), 0.0).unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn i1_prime_via_recurrence() {
        // I₁′(1) = I₀(1) − I₁(1); both factors from the positive power series.
        let d = i1_prime(1.0);
        let expected = 1.266_065_877_752_008_3 - 0.565_159_103_992_485;
        assert!((d - expected).abs() < 1e-12, "I₁′(1) = {d}");
    }

    #[test]
    fn k1_prime_negative_everywhere_sampled() {
        for &x in &[0.5, 5.0, 50.0] {
            let d = eval_bessel_derivative(BesselKind::new(BesselFamily::K, 1), x).unwrap();
            assert!(d < 0.0, "K₁′({x}) = {d} must be negative");
        }
    }

    #[test]
    fn scaled_consistency_moderate_argument() {
        for &x in &[0.7, 3.0, 9.0, 14.0, 30.0] {
            let rel = (i1_scaled(x) * x.exp() - i1(x)).abs() / i1(x).abs();
            assert!(rel < 1e-12, "scaled I mismatch at {x}: {rel}");
            let rel = (k0_scaled(x) * (-x).exp() - k0(x)).abs() / k0(x).abs();
            assert!(rel < 1e-12, "scaled K mismatch at {x}: {rel}");
        }
    }

    #[test]
    fn scaled_variants_finite_for_huge_argument() {
        for &x in &[1.0e3, 1.0e4] {
            assert!(i0_scaled(x).is_finite() && i0_scaled(x) > 0.0);
            assert!(i1_scaled(x).is_finite() && i1_scaled(x) > 0.0);
            assert!(k0_scaled(x).is_finite() && k0_scaled(x) > 0.0);
            assert!(k1_scaled(x).is_finite() && k1_scaled(x) > 0.0);
        }
    }

    #[test]
    fn scaling_rejected_for_j_y() {
        let err = eval_bessel(BesselKind::scaled(BesselFamily::J, 0), 1.0).unwrap_err();
        assert!(matches!(err, SpecialFnError::InvalidScaling { .. }));
    }

    #[test]
    fn domain_errors() {
        assert!(eval_bessel(BesselKind::new(BesselFamily::Y, 0), 0.0).is_err());
        assert!(eval_bessel(BesselKind::new(BesselFamily::K, 1), -1.0).is_err());
        assert!(eval_bessel(BesselKind::new(BesselFamily::J, 0), f64::NAN).is_err());
    }

    #[test]
    fn branch_seams_are_continuous() {
        // Both branch implementations, evaluated at the cutoff itself, must
        // agree to the truncation floor of the asymptotic side. (Straddling
        // the cutoff with two nearby arguments would mostly measure the
        // function's own slope.)
        let x = JY_SERIES_CUTOFF;
        for nu in [0u8, 1u8] {
            let (j_a, y_a) = jy_asymptotic(nu, x);
            let j_s = j_series(nu, x);
            let y_s = y_series(nu, x);
            let j_rel = (j_a - j_s).abs() / j_s.abs();
            let y_rel = (y_a - y_s).abs() / y_s.abs();
            assert!(j_rel < 1e-10, "J{nu} seam at {x}: rel {j_rel}");
            assert!(y_rel < 1e-10, "Y{nu} seam at {x}: rel {y_rel}");
        }
        let x = I_SERIES_CUTOFF;
        for nu in [0u8, 1u8] {
            let series = i_series(nu, x) * (-x).exp();
            let asym = i_asymptotic_scaled(nu, x);
            let rel = (series - asym).abs() / series.abs();
            assert!(rel < 1e-12, "I{nu} seam at {x}: rel {rel}");
        }
        let x = K_SERIES_CUTOFF;
        for nu in [0u8, 1u8] {
            let series = k_log_series(nu, x) * x.exp();
            let integral = k_integral_scaled(nu, x);
            let rel = (series - integral).abs() / series.abs();
            assert!(rel < 1e-12, "K{nu} seam at {x}: rel {rel}");
        }
        let x = K_INTEGRAL_CUTOFF;
        for nu in [0u8, 1u8] {
            let integral = k_integral_scaled(nu, x);
            let asym = k_asymptotic_scaled(nu, x);
            let rel = (integral - asym).abs() / integral.abs();
            assert!(rel < 1e-11, "K{nu} seam at {x}: rel {rel}");
        }
    }
}
