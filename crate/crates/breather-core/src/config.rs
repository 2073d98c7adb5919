//! Problem configuration: geometry, refractive-index profile, nonlinearity,
//! and discretization sizes, plus the admissibility arithmetic that decides
//! whether a (potential, speed, period) combination supports the traveling
//! ansatz at all.
//!
//! The admissibility conditions are number-theoretic (a ratio of square roots
//! must reduce to a fraction of odd integers, a period must match an exact
//! multiple), so the checks run in exact rational arithmetic whenever the
//! inputs permit. JSON inputs may write rationals as strings ("45/16"),
//! integers, or floats; floats are lifted to rationals by continued-fraction
//! reconstruction with a denominator cap.

use num::integer::gcd;
use num::rational::Ratio;
use num::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::kernel::KernelSpec;

/// Relative tolerance used when a comparison must fall back to floats
/// (irrational square roots, float-supplied periods).
const FLOAT_MATCH_TOL: f64 = 1e-12;

/// Largest denominator accepted when reconstructing a rational from an f64.
const MAX_RECONSTRUCTED_DEN: i128 = 1_000_000;

// ---------------------------------------------------------------------------
// Exact rational scalar
// ---------------------------------------------------------------------------

/// Exact rational scalar used for all admissibility arithmetic.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Rational(pub Ratio<i128>);

impl Rational {
    pub fn new(numer: i128, denom: i128) -> Self {
        assert!(denom != 0, "rational with zero denominator");
        Rational(Ratio::new(numer, denom))
    }

    pub fn from_int(n: i128) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn zero() -> Self {
        Rational(Ratio::zero())
    }

    pub fn one() -> Self {
        Rational(Ratio::one())
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().expect("rational out of f64 range")
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn recip(&self) -> Self {
        Rational(self.0.recip())
    }

    /// Exact square root when both numerator and denominator of the reduced
    /// form are perfect squares; None otherwise (including negatives).
    pub fn sqrt_exact(&self) -> Option<Rational> {
        if self.0.is_negative() {
            return None;
        }
        let sp = exact_isqrt(*self.0.numer())?;
        let sq = exact_isqrt(*self.0.denom())?;
        Some(Rational(Ratio::new(sp, sq)))
    }

    /// f64 square root, exact when `sqrt_exact` succeeds.
    pub fn sqrt_f64(&self) -> f64 {
        match self.sqrt_exact() {
            Some(r) => r.to_f64(),
            None => self.to_f64().sqrt(),
        }
    }

    /// Continued-fraction reconstruction of a rational from a float.
    /// Succeeds when some convergent with denominator <= 10^6 lands within
    /// relative 10^-12 of the input.
    pub fn from_f64(x: f64) -> Option<Rational> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Rational::zero());
        }
        let neg = x < 0.0;
        let target = x.abs();
        // Convergents h_k/k_k of the continued fraction of `target`.
        let (mut h0, mut k0, mut h1, mut k1): (i128, i128, i128, i128) = (1, 0, 0, 1);
        let mut frac = target;
        for _ in 0..64 {
            let a = frac.floor();
            if a > MAX_RECONSTRUCTED_DEN as f64 * 2.0 {
                return None;
            }
            let ai = a as i128;
            let h2 = ai * h0 + h1;
            let k2 = ai * k0 + k1;
            if k2 > MAX_RECONSTRUCTED_DEN {
                return None;
            }
            let approx = h2 as f64 / k2 as f64;
            if (approx - target).abs() <= FLOAT_MATCH_TOL * target {
                let v = Ratio::new(h2, k2);
                return Some(Rational(if neg { -v } else { v }));
            }
            h1 = h0;
            k1 = k0;
            h0 = h2;
            k0 = k2;
            let rem = frac - a;
            if rem <= 0.0 {
                return None;
            }
            frac = 1.0 / rem;
        }
        None
    }
}

/// Integer square root that certifies exactness.
fn exact_isqrt(n: i128) -> Option<i128> {
    if n < 0 {
        return None;
    }
    let s = (n as u128).isqrt() as i128;
    if s * s == n {
        Some(s)
    } else {
        None
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom() == &1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

macro_rules! rational_binop {
    ($tr:ident, $m:ident) => {
        impl std::ops::$tr for Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                Rational(std::ops::$tr::$m(self.0, rhs.0))
            }
        }
    };
}
rational_binop!(Add, add);
rational_binop!(Sub, sub);
rational_binop!(Mul, mul);
rational_binop!(Div, div);

impl std::ops::Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

struct RationalVisitor;

impl Visitor<'_> for RationalVisitor {
    type Value = Rational;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a rational as \"p/q\", an integer, or a float")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
        let v = v.trim();
        if let Some((p, q)) = v.split_once('/') {
            let p: i128 = p.trim().parse().map_err(E::custom)?;
            let q: i128 = q.trim().parse().map_err(E::custom)?;
            if q == 0 {
                return Err(E::custom("zero denominator"));
            }
            Ok(Rational::new(p, q))
        } else if let Ok(p) = v.parse::<i128>() {
            Ok(Rational::from_int(p))
        } else {
            let x: f64 = v.parse().map_err(E::custom)?;
            Rational::from_f64(x)
                .ok_or_else(|| E::custom(format!("no rational within 1e-12 of {x} (den <= 1e6)")))
        }
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
        Ok(Rational::from_int(v as i128))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
        Ok(Rational::from_int(v as i128))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational, E> {
        if v == v.trunc() && v.abs() < 9.0e15 {
            return Ok(Rational::from_int(v as i128));
        }
        Rational::from_f64(v)
            .ok_or_else(|| E::custom(format!("no rational within 1e-12 of {v} (den <= 1e6)")))
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        d.deserialize_any(RationalVisitor)
    }
}

// ---------------------------------------------------------------------------
// Configuration types
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Cylindrical,
    Slab,
}

/// Cladding profile outside the core: either a two-material periodic cell of
/// pitch P (volume fraction theta of the a-material), or a single step of
/// width rho followed by the b-material.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Cladding {
    PeriodicStep {
        a: Rational,
        b: Rational,
        theta: Rational,
        #[serde(rename = "P")]
        period: Rational,
    },
    PureStep {
        a: Rational,
        b: Rational,
        rho: Rational,
        /// Optional phase-counting pair; searched when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PotentialSpec {
    /// Susceptibility value on the core [0, R).
    pub d: Rational,
    pub cladding: Cladding,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Nonlinearity {
    Instantaneous,
    Averaged { kernel: KernelSpec },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Discretization {
    /// Fourier cutoff: profile modes are the odd k with k <= K.
    #[serde(rename = "K")]
    pub k_max: usize,
    /// Number of radial/transverse elements on [0, R].
    #[serde(rename = "N")]
    pub n_elems: usize,
    /// Time samples per period; defaults to 8(K+1).
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m_samples: Option<usize>,
}

impl Discretization {
    pub fn time_samples(&self) -> usize {
        self.m_samples.unwrap_or(8 * (self.k_max + 1))
    }

    /// Stored odd mode indices 1, 3, ..., <= K.
    pub fn odd_modes(&self) -> Vec<usize> {
        (1..=self.k_max).step_by(2).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProblemSpec {
    pub geometry: Geometry,
    pub potential: PotentialSpec,
    pub nonlinearity: Nonlinearity,
    /// Propagation speed, in units of the speed of light.
    pub c: Rational,
    /// Time period of the profile.
    #[serde(rename = "T")]
    pub t_period: Rational,
    /// Core radius (cylindrical) or half-width (slab).
    #[serde(rename = "R")]
    pub r_core: Rational,
    /// Nonlinear strength in the core.
    pub gamma: Rational,
    pub discretization: Discretization,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("field {field} out of range: requires {requirement}, got {got}")]
    Range {
        field: &'static str,
        requirement: &'static str,
        got: String,
    },
    #[error("sign condition violated: {inequality} fails ({detail})")]
    SignViolation {
        inequality: &'static str,
        detail: String,
    },
    #[error("cell ratio sqrt(alpha) theta / (sqrt(beta) (1-theta)) = {ratio} is not a ratio of odd integers: {reason}")]
    NotOddRational { ratio: String, reason: String },
    #[error("period mismatch: config T = {configured}, admissible T = {required}")]
    PeriodMismatch { configured: f64, required: f64 },
    #[error("phase offset xi = {xi} outside (0, {bound})")]
    XiOutOfRange { xi: f64, bound: f64 },
    #[error("(m, n) = ({m}, {n}) not coprime")]
    NotCoprime { m: u64, n: u64 },
    #[error("no coprime (m, n) with m, n <= {cap} satisfies the phase and period conditions")]
    NoAdmissiblePair { cap: u64 },
    #[error("operation requires {expected} cladding")]
    WrongCladding { expected: &'static str },
}

impl ProblemSpec {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let spec: ProblemSpec = serde_json::from_str(s)?;
        spec.validate_ranges()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    /// Structural range checks; the sign chain between d, c, a, b lives in
    /// `derive_coefficients`.
    pub fn validate_ranges(&self) -> Result<(), ConfigError> {
        let range = |ok: bool, field: &'static str, requirement: &'static str, got: String| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Range {
                    field,
                    requirement,
                    got,
                })
            }
        };
        range(
            self.c.is_positive() && self.c < Rational::one(),
            "c",
            "0 < c < 1",
            self.c.to_string(),
        )?;
        range(
            self.t_period.is_positive(),
            "T",
            "T > 0",
            self.t_period.to_string(),
        )?;
        range(
            self.r_core.is_positive(),
            "R",
            "R > 0",
            self.r_core.to_string(),
        )?;
        range(
            self.gamma.is_positive(),
            "gamma",
            "gamma > 0",
            self.gamma.to_string(),
        )?;
        let disc = &self.discretization;
        range(
            disc.k_max >= 1,
            "K",
            "K >= 1",
            disc.k_max.to_string(),
        )?;
        range(
            disc.n_elems >= 2,
            "N",
            "N >= 2",
            disc.n_elems.to_string(),
        )?;
        range(
            disc.time_samples() > 4 * disc.k_max,
            "M",
            "M > 4K",
            disc.time_samples().to_string(),
        )?;
        match &self.potential.cladding {
            Cladding::PeriodicStep { theta, period, .. } => {
                range(
                    theta.is_positive() && *theta < Rational::one(),
                    "theta",
                    "0 < theta < 1",
                    theta.to_string(),
                )?;
                range(
                    period.is_positive(),
                    "P",
                    "P > 0",
                    period.to_string(),
                )?;
            }
            Cladding::PureStep { rho, .. } => {
                range(rho.is_positive(), "rho", "rho > 0", rho.to_string())?;
            }
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.t_period.to_f64()
    }
}

// ---------------------------------------------------------------------------
// Derived coefficients
// ---------------------------------------------------------------------------

/// Constants derived from the profile: with e := c^-2 - 1,
///
///   alpha = a - e,   delta = e - d,
///   beta  = b - e  (periodic cladding, oscillatory in both materials)
///   beta  = e - b  (pure step, evanescent beyond the interface layer)
///
/// all strictly positive for an admissible profile. V on the core equals
/// delta, and lambda = omega sqrt(delta) sets the evanescent rate that the
/// boundary coefficients must beat.
#[derive(Clone, Debug)]
pub struct DerivedCoefficients {
    pub alpha: Rational,
    pub beta: Rational,
    pub delta: Rational,
    /// c^-2 - 1, the oscillation/evanescence threshold.
    pub threshold: Rational,
    pub v_core: Rational,
    pub gamma_core: f64,
    pub omega: f64,
    pub lambda: f64,
}

/// The linear part of the coefficient map, exposed for exact recomputation
/// in tests: scaling (a, b, d, e) by s scales every output by s.
pub fn affine_constants(
    a: Rational,
    b: Rational,
    d: Rational,
    e: Rational,
    step_cladding: bool,
) -> (Rational, Rational, Rational) {
    let alpha = a - e;
    let beta = if step_cladding { e - b } else { b - e };
    let delta = e - d;
    (alpha, beta, delta)
}

pub fn derive_coefficients(spec: &ProblemSpec) -> Result<DerivedCoefficients, ConfigError> {
    let d = spec.potential.d;
    let e = spec.c.recip() * spec.c.recip() - Rational::one();
    let fail = |inequality: &'static str, detail: String| {
        Err(ConfigError::SignViolation { inequality, detail })
    };

    let (a, b, is_step) = match &spec.potential.cladding {
        Cladding::PeriodicStep { a, b, .. } => (*a, *b, false),
        Cladding::PureStep { a, b, .. } => (*a, *b, true),
    };

    if is_step {
        // 0 < min{b,d} <= max{b,d} < c^-2 - 1 < a
        if !b.is_positive() {
            return fail("0 < min{b,d}", format!("b = {b}"));
        }
        if !d.is_positive() {
            return fail("0 < min{b,d}", format!("d = {d}"));
        }
        if b >= e {
            return fail("max{b,d} < c⁻²−1", format!("b = {b}, c⁻²−1 = {e}"));
        }
        if d >= e {
            return fail("max{b,d} < c⁻²−1", format!("d = {d}, c⁻²−1 = {e}"));
        }
        if a <= e {
            return fail("c⁻²−1 < a", format!("a = {a}, c⁻²−1 = {e}"));
        }
    } else {
        // 0 < d < c^-2 - 1 < min{a, b, (a+d)/2}
        if !d.is_positive() || d >= e {
            return fail("0 < d < c⁻²−1", format!("d = {d}, c⁻²−1 = {e}"));
        }
        if a <= e {
            return fail("c⁻²−1 < a", format!("a = {a}, c⁻²−1 = {e}"));
        }
        if b <= e {
            return fail("c⁻²−1 < b", format!("b = {b}, c⁻²−1 = {e}"));
        }
        let half = (a + d) / Rational::from_int(2);
        if half <= e {
            return fail("c⁻²−1 < (a+d)/2", format!("(a+d)/2 = {half}, c⁻²−1 = {e}"));
        }
    }

    let (alpha, beta, delta) = affine_constants(a, b, d, e, is_step);
    // Needed for the evanescent-rate comparison to be satisfiable at all.
    if delta >= alpha {
        return fail("δ < α", format!("δ = {delta}, α = {alpha}"));
    }

    let omega = spec.omega();
    Ok(DerivedCoefficients {
        alpha,
        beta,
        delta,
        threshold: e,
        v_core: delta,
        gamma_core: spec.gamma.to_f64(),
        omega,
        lambda: omega * delta.to_f64().sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Periodic-cladding admissibility
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct PeriodicValidation {
    pub m: u64,
    pub n: u64,
    pub t_required: f64,
    /// Exact value when sqrt(alpha) is rational.
    pub t_required_exact: Option<Rational>,
}

/// Admissibility of a periodic cladding: sqrt(alpha) theta / (sqrt(beta)
/// (1-theta)) must equal m/n with m, n odd, and the configured period must
/// equal 4 sqrt(alpha) theta P / m.
pub fn validate_periodic(spec: &ProblemSpec) -> Result<PeriodicValidation, ConfigError> {
    let coeffs = derive_coefficients(spec)?;
    let (theta, period) = match &spec.potential.cladding {
        Cladding::PeriodicStep { theta, period, .. } => (*theta, *period),
        Cladding::PureStep { .. } => {
            return Err(ConfigError::WrongCladding {
                expected: "periodic_step",
            })
        }
    };

    // ratio^2 = alpha theta^2 / (beta (1-theta)^2) is rational; the ratio is
    // rational iff ratio^2 is a perfect square of a reduced fraction.
    let one_minus = Rational::one() - theta;
    let ratio_sq = coeffs.alpha * theta * theta / (coeffs.beta * one_minus * one_minus);
    let ratio = match ratio_sq.sqrt_exact() {
        Some(r) => r,
        None => {
            return Err(ConfigError::NotOddRational {
                ratio: format!("sqrt({ratio_sq})"),
                reason: "square of the ratio is not a perfect rational square".into(),
            })
        }
    };
    let (m, n) = (ratio.numer(), ratio.denom());
    if m % 2 == 0 {
        return Err(ConfigError::NotOddRational {
            ratio: ratio.to_string(),
            reason: format!("{m} even"),
        });
    }
    if n % 2 == 0 {
        return Err(ConfigError::NotOddRational {
            ratio: ratio.to_string(),
            reason: format!("{n} even"),
        });
    }

    // T_required = 4 sqrt(alpha) theta P / m.
    let factor = Rational::from_int(4) * theta * period / Rational::from_int(m);
    let (t_required, t_required_exact) = match coeffs.alpha.sqrt_exact() {
        Some(sa) => {
            let exact = sa * factor;
            (exact.to_f64(), Some(exact))
        }
        None => (coeffs.alpha.to_f64().sqrt() * factor.to_f64(), None),
    };
    let matches = match &t_required_exact {
        Some(exact) => spec.t_period == *exact,
        None => (spec.t_period.to_f64() - t_required).abs() <= FLOAT_MATCH_TOL * t_required,
    };
    if !matches {
        return Err(ConfigError::PeriodMismatch {
            configured: spec.t_period.to_f64(),
            required: t_required,
        });
    }

    Ok(PeriodicValidation {
        m: m as u64,
        n: n as u64,
        t_required,
        t_required_exact,
    })
}

// ---------------------------------------------------------------------------
// Step-cladding admissibility
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct StepValidation {
    pub m: u64,
    pub n: u64,
    /// Upward distance from arctan sqrt(alpha/beta) to the phase lattice
    /// m pi/(2n) + (pi/n) Z.
    pub xi: f64,
    /// Strict upper bound arctan sqrt(alpha/delta).
    pub xi_bound: f64,
    pub t_required: f64,
    pub t_required_exact: Option<Rational>,
    /// Every coprime pair <= the search cap that satisfies both conditions
    /// (when the pair was searched rather than supplied).
    pub all_matches: Vec<(u64, u64)>,
}

const MN_SEARCH_CAP: u64 = 64;

/// Upward distance from p to the lattice { base + step j : j in Z }:
/// the smallest lattice element >= p, minus p.
fn dist_up_to_lattice(p: f64, base: f64, step: f64) -> f64 {
    let j = ((p - base) / step).ceil();
    let mut elem = base + j * step;
    if elem < p {
        elem += step;
    }
    // Roundoff in ceil() can overshoot by one full step when p sits on a
    // lattice point; pull back while the previous element still clears p.
    while elem - step >= p {
        elem -= step;
    }
    elem - p
}

/// Admissibility of a pure-step cladding for a given or searched coprime
/// (m, n): the phase offset xi must land strictly inside (0, arctan
/// sqrt(alpha/delta)) and the configured period must equal 4 sqrt(alpha)
/// rho n / m.
pub fn validate_step(spec: &ProblemSpec) -> Result<StepValidation, ConfigError> {
    let coeffs = derive_coefficients(spec)?;
    let (rho, m_opt, n_opt) = match &spec.potential.cladding {
        Cladding::PureStep { rho, m, n, .. } => (*rho, *m, *n),
        Cladding::PeriodicStep { .. } => {
            return Err(ConfigError::WrongCladding {
                expected: "pure_step",
            })
        }
    };

    let phase = (coeffs.alpha.to_f64() / coeffs.beta.to_f64()).sqrt().atan();
    let xi_bound = (coeffs.alpha.to_f64() / coeffs.delta.to_f64()).sqrt().atan();

    let check_pair = |m: u64, n: u64| -> Result<(f64, f64, Option<Rational>), ConfigError> {
        let base = m as f64 * std::f64::consts::PI / (2.0 * n as f64);
        let step = std::f64::consts::PI / n as f64;
        let xi = dist_up_to_lattice(phase, base, step);
        if xi <= 0.0 || xi >= xi_bound {
            return Err(ConfigError::XiOutOfRange { xi, bound: xi_bound });
        }
        let factor = Rational::from_int(4) * rho * Rational::new(n as i128, m as i128);
        let (t_required, t_exact) = match coeffs.alpha.sqrt_exact() {
            Some(sa) => {
                let exact = sa * factor;
                (exact.to_f64(), Some(exact))
            }
            None => (coeffs.alpha.to_f64().sqrt() * factor.to_f64(), None),
        };
        let matches = match &t_exact {
            Some(exact) => spec.t_period == *exact,
            None => (spec.t_period.to_f64() - t_required).abs() <= FLOAT_MATCH_TOL * t_required,
        };
        if !matches {
            return Err(ConfigError::PeriodMismatch {
                configured: spec.t_period.to_f64(),
                required: t_required,
            });
        }
        Ok((xi, t_required, t_exact))
    };

    match (m_opt, n_opt) {
        (Some(m), Some(n)) => {
            if m == 0 || n == 0 || gcd(m, n) != 1 {
                return Err(ConfigError::NotCoprime { m, n });
            }
            let (xi, t_required, t_required_exact) = check_pair(m, n)?;
            Ok(StepValidation {
                m,
                n,
                xi,
                xi_bound,
                t_required,
                t_required_exact,
                all_matches: vec![(m, n)],
            })
        }
        _ => {
            let mut matches = Vec::new();
            let mut first: Option<StepValidation> = None;
            for m in 1..=MN_SEARCH_CAP {
                for n in 1..=MN_SEARCH_CAP {
                    if gcd(m, n) != 1 {
                        continue;
                    }
                    if let Ok((xi, t_required, t_required_exact)) = check_pair(m, n) {
                        matches.push((m, n));
                        if first.is_none() {
                            first = Some(StepValidation {
                                m,
                                n,
                                xi,
                                xi_bound,
                                t_required,
                                t_required_exact,
                                all_matches: Vec::new(),
                            });
                        }
                    }
                }
            }
            match first {
                Some(mut v) => {
                    v.all_matches = matches;
                    Ok(v)
                }
                None => Err(ConfigError::NoAdmissiblePair { cap: MN_SEARCH_CAP }),
            }
        }
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rat(p: i128, q: i128) -> Rational {
        Rational::new(p, q)
    }

    fn fig1_spec() -> ProblemSpec {
        ProblemSpec {
            geometry: Geometry::Cylindrical,
            potential: PotentialSpec {
                d: rat(3, 4),
                cladding: Cladding::PeriodicStep {
                    a: rat(45, 16),
                    b: rat(35, 18),
                    theta: rat(2, 5),
                    period: rat(2, 1),
                },
            },
            nonlinearity: Nonlinearity::Instantaneous,
            c: rat(2, 3),
            t_period: rat(4, 1),
            r_core: rat(2, 1),
            gamma: rat(1, 1),
            discretization: Discretization {
                k_max: 16,
                n_elems: 64,
                m_samples: None,
            },
        }
    }

    fn fig2_spec() -> ProblemSpec {
        ProblemSpec {
            geometry: Geometry::Slab,
            potential: PotentialSpec {
                d: rat(23, 20),
                cladding: Cladding::PureStep {
                    a: rat(9, 4),
                    b: rat(1, 4),
                    rho: rat(1, 1),
                    m: Some(1),
                    n: Some(1),
                },
            },
            nonlinearity: Nonlinearity::Instantaneous,
            c: rat(2, 3),
            t_period: rat(4, 1),
            r_core: rat(2, 1),
            gamma: rat(1, 1),
            discretization: Discretization {
                k_max: 16,
                n_elems: 64,
                m_samples: None,
            },
        }
    }

    #[test]
    fn first_example_constants_are_exact() {
        let c = derive_coefficients(&fig1_spec()).unwrap();
        assert_eq!(c.threshold, rat(5, 4));
        assert_eq!(c.alpha, rat(25, 16));
        assert_eq!(c.beta, rat(25, 36));
        assert_eq!(c.delta, rat(1, 2));
        assert_eq!(c.v_core, rat(1, 2));
        let omega = std::f64::consts::PI / 2.0;
        assert!((c.omega - omega).abs() < 1e-15);
        assert!((c.lambda - omega * 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn second_example_constants_are_exact() {
        let c = derive_coefficients(&fig2_spec()).unwrap();
        assert_eq!(c.alpha, rat(1, 1));
        assert_eq!(c.beta, rat(1, 1));
        assert_eq!(c.delta, rat(1, 10));
    }

    #[test]
    fn core_value_at_threshold_is_rejected() {
        let mut spec = fig1_spec();
        spec.potential.d = rat(5, 4);
        match derive_coefficients(&spec) {
            Err(ConfigError::SignViolation { inequality, .. }) => {
                assert_eq!(inequality, "0 < d < c⁻²−1")
            }
            other => panic!("expected SignViolation, got {other:?}"),
        }
    }

    #[test]
    fn oversized_core_value_names_the_chain() {
        let mut spec = fig1_spec();
        spec.potential.d = rat(2, 1);
        match derive_coefficients(&spec) {
            Err(ConfigError::SignViolation { inequality, .. }) => {
                assert_eq!(inequality, "0 < d < c⁻²−1")
            }
            other => panic!("expected SignViolation, got {other:?}"),
        }
    }

    #[test]
    fn periodic_validation_accepts_the_first_example() {
        let v = validate_periodic(&fig1_spec()).unwrap();
        assert_eq!((v.m, v.n), (1, 1));
        assert_eq!(v.t_required_exact, Some(rat(4, 1)));
        assert_eq!(v.t_required, 4.0);
    }

    #[test]
    fn periodic_validation_rejects_even_ratio() {
        let mut spec = fig1_spec();
        if let Cladding::PeriodicStep { theta, .. } = &mut spec.potential.cladding {
            *theta = rat(1, 3);
        }
        // ratio = (5/4 * 1/3) / (5/6 * 2/3) = 3/4, denominator even.
        match validate_periodic(&spec) {
            Err(ConfigError::NotOddRational { ratio, reason }) => {
                assert_eq!(ratio, "3/4");
                assert!(reason.contains('4'), "reason should name the even 4: {reason}");
            }
            other => panic!("expected NotOddRational, got {other:?}"),
        }
    }

    #[test]
    fn symmetric_cell_gives_unit_ratio() {
        // alpha = beta = 25/16, theta = 1/2: T_required = 2 sqrt(alpha) P = 5.
        let mut spec = fig1_spec();
        if let Cladding::PeriodicStep { b, theta, .. } = &mut spec.potential.cladding {
            *b = rat(45, 16);
            *theta = rat(1, 2);
        }
        spec.t_period = rat(5, 1);
        let v = validate_periodic(&spec).unwrap();
        assert_eq!((v.m, v.n), (1, 1));
        assert_eq!(v.t_required_exact, Some(rat(5, 1)));
    }

    #[test]
    fn periodic_validation_rejects_wrong_period() {
        let mut spec = fig1_spec();
        spec.t_period = rat(3, 1);
        match validate_periodic(&spec) {
            Err(ConfigError::PeriodMismatch { required, .. }) => assert_eq!(required, 4.0),
            other => panic!("expected PeriodMismatch, got {other:?}"),
        }
    }

    #[test]
    fn step_validation_accepts_the_second_example() {
        let v = validate_step(&fig2_spec()).unwrap();
        assert_eq!((v.m, v.n), (1, 1));
        assert!((v.xi - std::f64::consts::FRAC_PI_4).abs() <= 1e-15);
        assert!((v.xi_bound - 10f64.sqrt().atan()).abs() <= 1e-15);
        assert_eq!(v.t_required_exact, Some(rat(4, 1)));
    }

    #[test]
    fn step_validation_searches_when_pair_absent() {
        let mut spec = fig2_spec();
        if let Cladding::PureStep { m, n, .. } = &mut spec.potential.cladding {
            *m = None;
            *n = None;
        }
        let v = validate_step(&spec).unwrap();
        assert_eq!((v.m, v.n), (1, 1));
        assert!(v.all_matches.contains(&(1, 1)));
    }

    #[test]
    fn step_validation_rejects_large_phase_offset() {
        // alpha = 1/4, beta = 1, delta = 1/8: phase = arctan(1/2), the (1,1)
        // lattice point above is pi/2, so xi ~ 1.107 exceeds the bound
        // arctan sqrt(2) ~ 0.955.
        let mut spec = fig2_spec();
        spec.potential.d = rat(9, 8);
        if let Cladding::PureStep { a, b, .. } = &mut spec.potential.cladding {
            *a = rat(3, 2);
            *b = rat(1, 4);
        }
        spec.t_period = rat(2, 1);
        match validate_step(&spec) {
            Err(ConfigError::XiOutOfRange { xi, bound }) => {
                assert!(xi > bound, "xi {xi} should exceed bound {bound}");
            }
            other => panic!("expected XiOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn step_validation_rejects_non_coprime_pair() {
        let mut spec = fig2_spec();
        if let Cladding::PureStep { m, n, .. } = &mut spec.potential.cladding {
            *m = Some(2);
            *n = Some(2);
        }
        assert!(matches!(
            validate_step(&spec),
            Err(ConfigError::NotCoprime { m: 2, n: 2 })
        ));
    }

    #[test]
    fn evanescent_rate_must_stay_below_oscillation_rate() {
        // Step case with delta >= alpha: a = 3/2 (alpha = 1/4), d = 1/2
        // (delta = 3/4).
        let mut spec = fig2_spec();
        spec.potential.d = rat(1, 2);
        if let Cladding::PureStep { a, .. } = &mut spec.potential.cladding {
            *a = rat(3, 2);
        }
        match derive_coefficients(&spec) {
            Err(ConfigError::SignViolation { inequality, .. }) => {
                assert_eq!(inequality, "δ < α")
            }
            other => panic!("expected SignViolation, got {other:?}"),
        }
    }

    #[test]
    fn float_reconstruction_recovers_small_fractions() {
        assert_eq!(Rational::from_f64(0.4), Some(rat(2, 5)));
        assert_eq!(Rational::from_f64(1.0 / 3.0), Some(rat(1, 3)));
        assert_eq!(Rational::from_f64(-2.8125), Some(rat(-45, 16)));
        assert_eq!(Rational::from_f64(0.0), Some(Rational::zero()));
    }

    #[test]
    fn sqrt_exact_detects_perfect_squares() {
        assert_eq!(rat(25, 16).sqrt_exact(), Some(rat(5, 4)));
        assert_eq!(rat(9, 16).sqrt_exact(), Some(rat(3, 4)));
        assert_eq!(rat(7, 4).sqrt_exact(), None);
        assert_eq!(rat(-1, 4).sqrt_exact(), None);
    }

    #[test]
    fn json_round_trip_preserves_the_spec() {
        let spec = fig1_spec();
        let s = spec.to_json_string();
        let back = ProblemSpec::from_json_str(&s).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn json_accepts_fraction_strings_and_numbers() {
        let s = r#"{
            "geometry": "slab",
            "c": "2/3",
            "T": 4,
            "R": 2.25,
            "gamma": 1,
            "potential": {
                "d": "23/20",
                "cladding": { "type": "pure_step", "a": "9/4", "b": 0.25, "rho": 1, "m": 1, "n": 1 }
            },
            "nonlinearity": { "type": "instantaneous" },
            "discretization": { "K": 16, "N": 64 }
        }"#;
        let spec = ProblemSpec::from_json_str(s).unwrap();
        assert_eq!(spec.r_core, rat(9, 4));
        assert_eq!(spec.discretization.time_samples(), 136);
        let v = validate_step(&spec).unwrap();
        assert_eq!((v.m, v.n), (1, 1));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(
            ProblemSpec::from_json_str("{ not json"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn odd_mode_list_respects_the_cutoff() {
        let disc = Discretization {
            k_max: 16,
            n_elems: 8,
            m_samples: None,
        };
        assert_eq!(disc.odd_modes(), vec![1, 3, 5, 7, 9, 11, 13, 15]);
    }

    proptest! {
        /// Scaling (a, b, d, e) by a positive rational scales alpha, beta,
        /// delta by the same factor, in exact arithmetic.
        #[test]
        fn coefficient_map_is_linear_under_scaling(
            an in 1i128..40, ad in 1i128..40,
            bn in 1i128..40, bd in 1i128..40,
            dn in 1i128..40, dd in 1i128..40,
            en in 1i128..40, ed in 1i128..40,
            sn in 1i128..20, sd in 1i128..20,
            step in proptest::bool::ANY,
        ) {
            let (a, b, d, e) = (rat(an, ad), rat(bn, bd), rat(dn, dd), rat(en, ed));
            let s = rat(sn, sd);
            let (alpha, beta, delta) = affine_constants(a, b, d, e, step);
            let (alpha_s, beta_s, delta_s) =
                affine_constants(s * a, s * b, s * d, s * e, step);
            prop_assert_eq!(alpha_s, s * alpha);
            prop_assert_eq!(beta_s, s * beta);
            prop_assert_eq!(delta_s, s * delta);
        }
    }
}
