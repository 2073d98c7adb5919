//! Field reconstruction and post-solve diagnostics.
//!
//! A converged profile lives on the core mesh only. This module extends it
//! to the full transverse domain by gluing each Fourier mode to its decaying
//! cladding solution, samples the resulting space-time field on a grid, and
//! runs the diagnostics that qualify a run as a genuine traveling breather:
//!
//! * [`extend_profile`] builds a [`BreatherField`]: mode profiles on a grid
//!   reaching `r_max`, real field samples `w`, `w_t` over a configurable
//!   number of time periods, and the pointwise energy density.
//! * [`el_residual`] reports the discrete weak residual per mode, which for
//!   the minimizer must sit at the optimizer tolerance.
//! * [`f_monotonicity`] checks that the time-averaged intensity
//!   `f(r) = T/2 · mean_t w_t²` increases toward the core boundary.
//! * [`classify_spectrum`] splits runs into monochromatic and polychromatic
//!   by the per-mode share of the mass-weighted energy.
//! * [`segment_energy`] integrates the electromagnetic energy density over
//!   a moving unit window in the co-traveling coordinate and reports its
//!   spread over window offsets, with a tail estimate that flags an `r_max`
//!   chosen too small.
//! * [`sweep_d`] lowers the core susceptibility until the nontrivial
//!   minimizer disappears, locates the bifurcation point by bisection, and
//!   fits the growth exponent of the profile norm.
//!
//! Grid synthesis parallelizes over sample radii; diagnostics only read the
//! immutable field data.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Geometry, ProblemSpec, Rational};
use crate::energy::{
    eval_energy, eval_gradient, minimize, EnergyContext, EnergyError, MinimizeOptions,
    NonlinearityEval, SeedChoice,
};
use crate::fundsol::{
    witness_threshold, CladdingProblem, ExteriorSolution, FundSolError, FundamentalSolutionEntry,
};
use crate::grid::{DiscreteProfile, TimeGrid};

/// Smallest cladding-solution derivative trace we are willing to divide by
/// when extending an excluded mode.
pub const MIN_EXTENSION_DERIV: f64 = 1e-10;

/// A mode counts as monochromatic-dominant when it carries at least
/// `1 - MONO_TOL` of the mass-weighted energy.
pub const MONO_TOL: f64 = 1e-6;

/// Energies above this (negative) level are treated as the zero minimizer
/// when locating the bifurcation point.
pub const EXISTENCE_TOL: f64 = -1e-10;

/// Tail shares above this level flag the truncation radius as too small.
pub const TRUNCATION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error(
        "mode {k} is excluded and extends through its derivative trace, but \
         the cladding solution derivative {deriv:e} at the interface is too \
         small to divide by"
    )]
    ExclusionDerivativeUnstable { k: usize, deriv: f64 },
    #[error("profile does not match the problem it is extended under: {what}")]
    ProfileMismatch { what: String },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    FundSol(#[from] FundSolError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Sampling choices for [`extend_profile`].
#[derive(Clone, Copy, Debug)]
pub struct FieldOptions {
    /// Outer truncation radius; the geometry-dependent default when absent.
    /// Periodic claddings must stay within the stored segment range
    /// (16 periods beyond the core radially, 8 for the slab).
    pub r_max: Option<f64>,
    /// Number of time periods covered by the sampled field.
    pub time_periods: usize,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            r_max: None,
            time_periods: 2,
        }
    }
}

/// A profile extended to the cladding and sampled in space and time.
///
/// Two-dimensional arrays are radius-major: `w[i][j]` is the field at
/// `radii[i]`, `times[j]`. The leading `n_interior` radii are the core mesh
/// nodes; the remainder subdivides the cladding up to the truncation radius
/// with breakpoints on every material interface.
#[derive(Clone, Debug)]
pub struct BreatherField {
    pub geometry: Geometry,
    pub r_core: f64,
    /// Propagation speed of the traveling window.
    pub c: f64,
    pub radii: Vec<f64>,
    pub n_interior: usize,
    pub t_period: f64,
    pub samples_per_period: usize,
    pub times: Vec<f64>,
    /// Stored Fourier modes, ascending odd integers.
    pub modes: Vec<usize>,
    /// Extension coefficient per mode: profile trace over cladding trace.
    pub alpha: Vec<Complex64>,
    /// Complex mode profile at every radius, mode-major.
    pub mode_values: Vec<Vec<Complex64>>,
    pub mode_derivs: Vec<Vec<Complex64>>,
    /// Real field samples, radius-major.
    pub w: Vec<Vec<f64>>,
    pub w_t: Vec<Vec<f64>>,
    /// Raw squared time derivative, the exported intensity proxy.
    pub intensity: Vec<Vec<f64>>,
    /// Pointwise electromagnetic energy density, radius-major.
    pub energy_density: Vec<Vec<f64>>,
    /// Linear susceptibility offset at each radius.
    pub v_offset: Vec<f64>,
    /// Quartic coupling at each radius: gamma on the core, zero outside.
    pub coupling: Vec<f64>,
}

/// Extension coefficient for one mode. Ordinary modes match the value trace;
/// excluded modes have a vanishing cladding trace and match the derivative
/// instead, which the piecewise-linear space only carries to first order.
fn extension_coefficient(
    entry: &FundamentalSolutionEntry,
    trace: Complex64,
    slope: Complex64,
) -> Result<Complex64, ReconstructError> {
    if entry.excluded {
        if entry.deriv_at_r.abs() < MIN_EXTENSION_DERIV {
            return Err(ReconstructError::ExclusionDerivativeUnstable {
                k: entry.k as usize,
                deriv: entry.deriv_at_r,
            });
        }
        Ok(slope / entry.deriv_at_r)
    } else {
        // The interface normalization keeps |phi(R)| away from zero for
        // every mode outside the exclusion set.
        Ok(trace / entry.value_at_r)
    }
}

/// Sample abscissae: the interior mesh nodes, then each cladding material
/// slice subdivided at roughly the mesh width. Every material interface is
/// a sample point; interface samples take the outer material's data.
fn build_radii(u: &DiscreteProfile, problem: &CladdingProblem, r_max: f64) -> (Vec<f64>, usize) {
    let mut radii: Vec<f64> = (0..u.node_count()).map(|j| u.node_x(j)).collect();
    let n_interior = radii.len();
    let h = u.mesh_h();
    let mut breakpoints = vec![problem.r_core];
    breakpoints.extend(problem.material_interfaces(r_max));
    breakpoints.push(r_max);
    for pair in breakpoints.windows(2) {
        let (s0, s1) = (pair[0], pair[1]);
        if s1 - s0 < 1e-12 {
            continue;
        }
        let parts = ((s1 - s0) / h).ceil().max(1.0) as usize;
        for i in 1..=parts {
            radii.push(s0 + (s1 - s0) * i as f64 / parts as f64);
        }
    }
    (radii, n_interior)
}

/// 2 Re Σ_k g_k e^{iωk t_j} on one period of the sample grid.
fn synthesize_row(modes: &[usize], coeffs: &[Complex64], grid: &TimeGrid) -> Vec<f64> {
    let m = grid.samples();
    (0..m)
        .map(|j| {
            let mut acc = 0.0;
            for (mi, &k) in modes.iter().enumerate() {
                acc += 2.0 * (coeffs[mi] * grid.phase(k as i64, j)).re;
            }
            acc
        })
        .collect()
}

/// Pointwise N(w_t)·w_t on one period: w_t⁴ for the instantaneous law,
/// (κ ⋆ w_t²)·w_t² for the averaged one, with the convolution synthesized
/// from spectral products exactly as the energy evaluation does.
fn quartic_density_row(nl: &NonlinearityEval, grid: &TimeGrid, v: &[f64], band: usize) -> Vec<f64> {
    match nl {
        NonlinearityEval::Instantaneous => v.iter().map(|&x| x * x * x * x).collect(),
        NonlinearityEval::Averaged { khat } => {
            let m = v.len();
            let sq: Vec<f64> = v.iter().map(|&x| x * x).collect();
            let band = band.min(khat.len() - 1);
            let shat: Vec<Complex64> = (0..=band)
                .map(|k| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (l, &s) in sq.iter().enumerate() {
                        acc += s * grid.phase(-(k as i64), l);
                    }
                    acc / m as f64
                })
                .collect();
            (0..m)
                .map(|l| {
                    let mut conv = khat[0].re * shat[0].re;
                    for k in 1..=band {
                        conv += 2.0 * (khat[k] * shat[k] * grid.phase(k as i64, l)).re;
                    }
                    conv * sq[l]
                })
                .collect()
        }
    }
}

/// Extends a profile by its cladding solutions and samples the traveling
/// field on a space-time grid.
///
/// The mode profiles are glued so that ordinary modes match their value at
/// the core boundary and excluded modes match the last-element slope (the
/// value trace is pinned to zero there). Radial derivatives on the interior
/// use central differences; the boundary node carries the exterior one-sided
/// derivative, which for ordinary modes equals the natural flux ratio.
pub fn extend_profile(
    u: &DiscreteProfile,
    spec: &ProblemSpec,
    opts: &FieldOptions,
) -> Result<BreatherField, ReconstructError> {
    let expected_modes = spec.discretization.odd_modes();
    if u.modes != expected_modes {
        return Err(ReconstructError::ProfileMismatch {
            what: format!(
                "profile stores modes {:?}, discretization asks for {:?}",
                u.modes, expected_modes
            ),
        });
    }
    if u.n_elems != spec.discretization.n_elems {
        return Err(ReconstructError::ProfileMismatch {
            what: format!(
                "profile has {} elements, discretization asks for {}",
                u.n_elems, spec.discretization.n_elems
            ),
        });
    }
    if u.geometry != spec.geometry || (u.r_core - spec.r_core.to_f64()).abs() > 1e-12 {
        return Err(ReconstructError::ProfileMismatch {
            what: "geometry or core radius differs".to_string(),
        });
    }

    let problem = CladdingProblem::from_spec(spec)?;
    let solutions: Vec<(FundamentalSolutionEntry, ExteriorSolution)> = u
        .modes
        .par_iter()
        .map(|&k| problem.solve_mode(k as u64))
        .collect::<Result<_, _>>()?;
    let entries: Vec<FundamentalSolutionEntry> = solutions.iter().map(|(e, _)| *e).collect();
    let ctx = EnergyContext::new(spec, &entries)?;

    let r_max = opts.r_max.unwrap_or_else(|| problem.default_r_max());
    let (radii, n_interior) = build_radii(u, &problem, r_max);
    let nc = u.node_count();
    let h = u.mesh_h();

    let mut alpha = Vec::with_capacity(u.modes.len());
    for (mi, (entry, _)) in solutions.iter().enumerate() {
        let trace = u.coeff(mi, nc - 1);
        let slope = (u.coeff(mi, nc - 1) - u.coeff(mi, nc - 2)) / h;
        alpha.push(extension_coefficient(entry, trace, slope)?);
    }

    // Mode profiles and radial derivatives at every sample radius.
    let mut mode_values = vec![vec![Complex64::new(0.0, 0.0); radii.len()]; u.modes.len()];
    let mut mode_derivs = vec![vec![Complex64::new(0.0, 0.0); radii.len()]; u.modes.len()];
    for (mi, (_, ext)) in solutions.iter().enumerate() {
        let (vals, ders): (Vec<Complex64>, Vec<Complex64>) = radii
            .par_iter()
            .enumerate()
            .map(|(i, &r)| {
                if i < n_interior {
                    let v = u.coeff(mi, i);
                    let d = if i == 0 {
                        (u.coeff(mi, 1) - u.coeff(mi, 0)) / h
                    } else if i == nc - 1 {
                        let (_, dphi) = ext.eval_pair(r);
                        alpha[mi] * dphi
                    } else {
                        (u.coeff(mi, i + 1) - u.coeff(mi, i - 1)) / (2.0 * h)
                    };
                    (v, d)
                } else {
                    let (phi, dphi) = ext.eval_pair(r);
                    (alpha[mi] * phi, alpha[mi] * dphi)
                }
            })
            .unzip();
        mode_values[mi] = vals;
        mode_derivs[mi] = ders;
    }

    let grid = &ctx.grid;
    let m = grid.samples();
    let periods = opts.time_periods.max(1);
    let dt = grid.t_period() / m as f64;
    let times: Vec<f64> = (0..periods * m).map(|j| j as f64 * dt).collect();
    let omega = grid.omega();
    let c = spec.c.to_f64();
    let gamma = spec.gamma.to_f64();
    let radial = spec.geometry == Geometry::Cylindrical;
    let band = u.modes.last().map_or(0, |&k| 2 * k);

    let v_offset: Vec<f64> = radii.iter().map(|&r| problem.potential_offset_at(r)).collect();
    let coupling: Vec<f64> = radii
        .iter()
        .map(|&r| if r < problem.r_core { gamma } else { 0.0 })
        .collect();

    struct Row {
        w: Vec<f64>,
        w_t: Vec<f64>,
        intensity: Vec<f64>,
        density: Vec<f64>,
    }
    let rows: Vec<Row> = (0..radii.len())
        .into_par_iter()
        .map(|i| {
            let coeffs: Vec<Complex64> = (0..u.modes.len()).map(|mi| mode_values[mi][i]).collect();
            let dcoeffs: Vec<Complex64> = (0..u.modes.len())
                .map(|mi| {
                    mode_values[mi][i] * Complex64::new(0.0, omega * u.modes[mi] as f64)
                })
                .collect();
            let rcoeffs: Vec<Complex64> = (0..u.modes.len()).map(|mi| mode_derivs[mi][i]).collect();
            let w_p = synthesize_row(&u.modes, &coeffs, grid);
            let wt_p = synthesize_row(&u.modes, &dcoeffs, grid);
            let wr_p = synthesize_row(&u.modes, &rcoeffs, grid);
            let nl_p = quartic_density_row(&ctx.nonlinearity, grid, &wt_p, band);
            let r = radii[i];
            let lin = 2.0 / (c * c) - v_offset[i];
            let dens_p: Vec<f64> = (0..m)
                .map(|j| {
                    let s = if !radial {
                        wr_p[j]
                    } else if r == 0.0 {
                        2.0 * wr_p[j]
                    } else {
                        w_p[j] / r + wr_p[j]
                    };
                    lin * wt_p[j] * wt_p[j] - coupling[i] * nl_p[j] + s * s
                })
                .collect();
            let tile = |row: &[f64]| -> Vec<f64> {
                let mut out = Vec::with_capacity(periods * m);
                for _ in 0..periods {
                    out.extend_from_slice(row);
                }
                out
            };
            let intensity = wt_p.iter().map(|&x| x * x).collect::<Vec<_>>();
            Row {
                w: tile(&w_p),
                w_t: tile(&wt_p),
                intensity: tile(&intensity),
                density: tile(&dens_p),
            }
        })
        .collect();

    let mut w = Vec::with_capacity(radii.len());
    let mut w_t = Vec::with_capacity(radii.len());
    let mut intensity = Vec::with_capacity(radii.len());
    let mut energy_density = Vec::with_capacity(radii.len());
    for row in rows {
        w.push(row.w);
        w_t.push(row.w_t);
        intensity.push(row.intensity);
        energy_density.push(row.density);
    }

    Ok(BreatherField {
        geometry: spec.geometry,
        r_core: problem.r_core,
        c,
        radii,
        n_interior,
        t_period: grid.t_period(),
        samples_per_period: m,
        times,
        modes: u.modes.clone(),
        alpha,
        mode_values,
        mode_derivs,
        w,
        w_t,
        intensity,
        energy_density,
        v_offset,
        coupling,
    })
}

/// Per-mode discrete weak residual: the largest energy-gradient component
/// over the mode's free nodes, relative to the coefficient two-norm.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ModeResidual {
    pub k: usize,
    pub residual: f64,
}

/// Weak residual of the discrete Euler-Lagrange equations, reported per
/// mode. Excluded modes skip their boundary-trace slot, which carries the
/// Dirichlet constraint rather than a free equation.
pub fn el_residual(
    p: &DiscreteProfile,
    ctx: &EnergyContext,
) -> Result<Vec<ModeResidual>, ReconstructError> {
    let grad = eval_gradient(p, ctx)?;
    let dofs = p.flatten_free();
    let norm = dofs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = if norm > 0.0 { norm } else { 1.0 };
    let j0 = p.first_free_node();
    let free = p.node_count() - j0;
    let mut out = Vec::with_capacity(p.modes.len());
    for (mi, &k) in p.modes.iter().enumerate() {
        let excluded = ctx
            .boundary
            .get((k - 1) / 2)
            .map(|b| b.excluded)
            .unwrap_or(false);
        let last = if excluded { free - 1 } else { free };
        let mut worst = 0.0_f64;
        for j in 0..last {
            let re = grad[2 * (mi * free + j)];
            let im = grad[2 * (mi * free + j) + 1];
            worst = worst.max(re.hypot(im));
        }
        out.push(ModeResidual {
            k,
            residual: worst / scale,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    /// Time-averaged intensity f(r) = T/2 · mean_t w_t² at the interior
    /// sample radii.
    pub f: Vec<f64>,
    pub monotone: bool,
    /// Largest forward decrease of f, zero when monotone.
    pub max_violation: f64,
}

/// Checks that the averaged intensity increases from the axis to the core
/// boundary. The tolerance is relative to the peak value, so the zero field
/// passes trivially.
pub fn f_monotonicity(field: &BreatherField) -> MonotonicityReport {
    let m = field.samples_per_period;
    let f: Vec<f64> = field.w_t[..field.n_interior]
        .iter()
        .map(|row| {
            let mean = row[..m].iter().map(|&x| x * x).sum::<f64>() / m as f64;
            0.5 * field.t_period * mean
        })
        .collect();
    let peak = f.iter().cloned().fold(0.0_f64, f64::max);
    let mut max_violation = 0.0_f64;
    for pair in f.windows(2) {
        max_violation = max_violation.max(pair[0] - pair[1]);
    }
    MonotonicityReport {
        monotone: max_violation <= 1e-8 * peak.max(f64::MIN_POSITIVE),
        f,
        max_violation,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SpectrumClass {
    /// A single mode carries essentially all of the mass-weighted energy.
    Monochromatic(usize),
    Polychromatic,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub class: SpectrumClass,
    /// Mass-weighted energy share per stored mode.
    pub fractions: Vec<(usize, f64)>,
    /// For averaged kernels: whether κ̂ vanishes at twice the dominant mode,
    /// the compatibility condition for an exactly monochromatic profile.
    pub kappa_double_zero: Option<bool>,
}

/// Classifies the mode content of a profile by per-mode energy shares.
/// The zero profile has no dominant mode and reports as polychromatic.
pub fn classify_spectrum(
    p: &DiscreteProfile,
    ctx: &EnergyContext,
) -> Result<SpectrumReport, ReconstructError> {
    let report = eval_energy(p, ctx)?;
    let total: f64 = report.per_mode_energy.iter().sum();
    let fractions: Vec<(usize, f64)> = p
        .modes
        .iter()
        .zip(&report.per_mode_energy)
        .map(|(&k, &e)| (k, if total > 0.0 { e / total } else { 0.0 }))
        .collect();
    let dominant = fractions
        .iter()
        .cloned()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|&(_, p)| p >= 1.0 - MONO_TOL);
    let class = match dominant {
        Some((k, _)) => SpectrumClass::Monochromatic(k),
        None => SpectrumClass::Polychromatic,
    };
    let kappa_double_zero = match (&ctx.nonlinearity, &class) {
        (NonlinearityEval::Averaged { khat }, SpectrumClass::Monochromatic(k)) => Some(
            khat.get(2 * k)
                .map(|v| v.norm() <= 1e-12 * khat[0].norm().max(f64::MIN_POSITIVE))
                .unwrap_or(true),
        ),
        (NonlinearityEval::Averaged { khat }, SpectrumClass::Polychromatic) => {
            // Report compatibility at the largest-share mode anyway; the
            // classification itself does not depend on it.
            let k = fractions
                .iter()
                .cloned()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
                .unwrap_or(1);
            Some(
                khat.get(2 * k)
                    .map(|v| v.norm() <= 1e-12 * khat[0].norm().max(f64::MIN_POSITIVE))
                    .unwrap_or(true),
            )
        }
        (NonlinearityEval::Instantaneous, _) => None,
    };
    Ok(SpectrumReport {
        class,
        fractions,
        kappa_double_zero,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SegmentReport {
    /// Window offsets sampled.
    pub t0: Vec<f64>,
    /// Energy in the unit segment starting at each offset.
    pub energy: Vec<f64>,
    pub max: f64,
    pub min: f64,
    /// The same spatial integral accumulated over one full time period.
    pub full_period_total: f64,
    /// Estimated share of the spatially truncated tail beyond `r_max`.
    pub tail_fraction: f64,
    /// True when the tail estimate exceeds the truncation tolerance.
    pub truncated: bool,
}

/// Periodic piecewise-linear integrand over one period of samples, with an
/// antiderivative that is exact for the interpolant. Offsets are reduced
/// modulo the period before interpolation, so full-period window shifts
/// reproduce identical floating-point values.
struct PeriodicIntegrand {
    d: Vec<f64>,
    prefix: Vec<f64>,
}

impl PeriodicIntegrand {
    fn new(d: Vec<f64>) -> Self {
        let m = d.len();
        let mut prefix = Vec::with_capacity(m + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for i in 0..m {
            acc += 0.5 * (d[i] + d[(i + 1) % m]);
            prefix.push(acc);
        }
        PeriodicIntegrand { d, prefix }
    }

    /// Integral of the interpolant from sample index 0 to `s` (in index
    /// units, any nonnegative real).
    fn antiderivative(&self, s: f64) -> f64 {
        let m = self.d.len();
        let period = m as f64;
        let full = (s / period).floor();
        let mut frac_idx = s - full * period;
        if frac_idx >= period {
            frac_idx = 0.0;
        }
        let i = (frac_idx.floor() as usize).min(m - 1);
        let t = frac_idx - i as f64;
        let a = self.d[i];
        let b = self.d[(i + 1) % m];
        full * self.prefix[m] + self.prefix[i] + t * (a + 0.5 * t * (b - a))
    }

    fn window(&self, s0: f64, len: f64) -> f64 {
        self.antiderivative(s0 + len) - self.antiderivative(s0)
    }
}

/// Trapezoid weights over the (piecewise-uniform) radius grid, including
/// the geometric measure: r dr radially, dx for the slab.
fn radial_weights(field: &BreatherField) -> Vec<f64> {
    let radial = field.geometry == Geometry::Cylindrical;
    let n = field.radii.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let half = 0.5 * (field.radii[i + 1] - field.radii[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    if radial {
        for (wi, &r) in w.iter_mut().zip(&field.radii) {
            *wi *= r;
        }
    }
    w
}

/// Energy in unit traveling segments with window offsets `t0`.
///
/// The segment occupies a window of length 1/c in the co-traveling time
/// coordinate; its energy integrates the pointwise density over the window
/// and the transverse domain, normalized by 2πc (cylindrical) or c (slab).
/// Offsets enter modulo the time period.
pub fn segment_energy_at(field: &BreatherField, t0s: &[f64]) -> SegmentReport {
    let m = field.samples_per_period;
    let dt = field.t_period / m as f64;
    let weights = radial_weights(field);
    // Spatially reduced density per time sample on one period.
    let reduced: Vec<f64> = (0..m)
        .map(|j| {
            field
                .energy_density
                .iter()
                .zip(&weights)
                .map(|(row, &wi)| wi * row[j])
                .sum()
        })
        .collect();
    let integrand = PeriodicIntegrand::new(reduced);
    let norm = match field.geometry {
        Geometry::Cylindrical => 2.0 * std::f64::consts::PI * field.c,
        Geometry::Slab => field.c,
    };
    let window_len = 1.0 / (field.c * dt);
    let energy: Vec<f64> = t0s
        .iter()
        .map(|&t0| {
            let s0 = (t0 % field.t_period) / dt;
            norm * dt * integrand.window(s0, window_len)
        })
        .collect();
    let full_period_total = norm * dt * integrand.prefix[m];
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = energy.iter().cloned().fold(f64::INFINITY, f64::min);
    let (max, min) = if energy.is_empty() { (0.0, 0.0) } else { (max, min) };

    // Tail estimate: compare the outermost two equal-width radius windows of
    // the time-averaged density and extrapolate the geometric decay.
    let r_max = *field.radii.last().expect("field has sample radii");
    let width = ((r_max - field.r_core) / 4.0).max(f64::MIN_POSITIVE);
    let t_avg: Vec<f64> = field
        .energy_density
        .iter()
        .map(|row| row[..m].iter().sum::<f64>() / m as f64)
        .collect();
    let band_integral = |lo: f64, hi: f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..field.radii.len() - 1 {
            let (r0, r1) = (field.radii[i], field.radii[i + 1]);
            if r1 <= lo || r0 >= hi {
                continue;
            }
            let radial = field.geometry == Geometry::Cylindrical;
            let g0 = if radial { r0 * t_avg[i] } else { t_avg[i] };
            let g1 = if radial { r1 * t_avg[i + 1] } else { t_avg[i + 1] };
            acc += 0.5 * (g0 + g1) * (r1 - r0);
        }
        acc
    };
    let i1 = band_integral(r_max - 2.0 * width, r_max - width).abs();
    let i2 = band_integral(r_max - width, r_max).abs();
    let total_avg = band_integral(0.0, r_max).abs();
    let tail = if i2 == 0.0 {
        0.0
    } else if i1 > i2 {
        let q = i2 / i1;
        i2 * q / (1.0 - q)
    } else {
        // No decay visible in the outermost windows; flag conservatively.
        f64::INFINITY
    };
    let tail_fraction = if tail == 0.0 {
        0.0
    } else {
        tail / (total_avg + tail)
    };
    SegmentReport {
        t0: t0s.to_vec(),
        energy,
        max,
        min,
        full_period_total,
        tail_fraction,
        truncated: tail_fraction > TRUNCATION_TOL,
    }
}

/// Segment energies over `n` uniform window offsets spanning one period.
pub fn segment_energy(field: &BreatherField, n: usize) -> SegmentReport {
    let t0s: Vec<f64> = (0..n)
        .map(|j| field.t_period * j as f64 / n.max(1) as f64)
        .collect();
    segment_energy_at(field, &t0s)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepRow {
    pub d: f64,
    pub e_star: f64,
    pub u_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    /// Probe results at the requested susceptibilities, descending in d.
    pub rows: Vec<SweepRow>,
    /// Bisection probes taken while refining the bifurcation point.
    pub refinement: Vec<SweepRow>,
    /// Estimated bifurcation point, when the probes bracket one.
    pub d_star: Option<f64>,
    /// Fitted growth exponent of ‖u*‖ in (d − d_star).
    pub exponent: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    /// Bisection steps refining the bifurcation bracket.
    pub refine_steps: usize,
    pub minimize: MinimizeOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            refine_steps: 12,
            minimize: MinimizeOptions::default(),
        }
    }
}

/// One minimization at core susceptibility `d`, seeded from the best
/// witness mode when one exists and randomly otherwise.
fn sweep_probe(
    base: &ProblemSpec,
    table: &[FundamentalSolutionEntry],
    d: Rational,
    opts: &SweepOptions,
) -> Result<SweepRow, ReconstructError> {
    let mut spec = base.clone();
    spec.potential.d = d;
    let ctx = EnergyContext::new(&spec, table)?;
    let witness = table.iter().find(|e| {
        !e.excluded && e.q_k > witness_threshold(spec.geometry, ctx.lambda, e.k, ctx.r_core)
    });
    let mut opts_d = opts.minimize.clone();
    opts_d.seed = match witness {
        Some(e) => SeedChoice::Ansatz {
            k0: e.k as usize,
            eps: None,
        },
        None => SeedChoice::Random { seed: 11 },
    };
    let template = DiscreteProfile::zeros(
        spec.geometry,
        spec.r_core.to_f64(),
        spec.discretization.n_elems,
        spec.discretization.k_max,
    );
    let (u, report, _) = minimize(&template, &ctx, &opts_d)?;
    let dofs = u.flatten_free();
    Ok(SweepRow {
        d: d.to_f64(),
        e_star: report.e_total,
        u_norm: dofs.iter().map(|x| x * x).sum::<f64>().sqrt(),
    })
}

/// Lowers the core susceptibility over `d_values`, locates the bifurcation
/// point below which only the zero minimizer remains, and fits the growth
/// exponent of the profile norm above it.
///
/// The cladding solutions do not depend on the core susceptibility, so one
/// table serves every probe. The bifurcation point is the smallest probed d
/// whose minimizer is nontrivial; when a trivial probe sits below it, the
/// bracket is refined by bisection on full minimizations.
pub fn sweep_d(
    spec: &ProblemSpec,
    d_values: &[Rational],
    opts: &SweepOptions,
) -> Result<SweepReport, ReconstructError> {
    let problem = CladdingProblem::from_spec(spec)?;
    let table = problem.table(spec.discretization.k_max)?;

    let mut ds: Vec<Rational> = d_values.to_vec();
    ds.sort_by(|a, b| b.to_f64().total_cmp(&a.to_f64()));
    let mut rows = Vec::with_capacity(ds.len());
    for &d in &ds {
        rows.push(sweep_probe(spec, &table, d, opts)?);
    }

    let exists = |row: &SweepRow| row.e_star < EXISTENCE_TOL;
    // Probes are descending in d; existence holds above the bifurcation
    // point, so scan for the last existing probe and the first trivial one.
    let mut lowest_existing: Option<usize> = None;
    let mut first_trivial_below: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        if exists(row) {
            lowest_existing = Some(i);
            first_trivial_below = None;
        } else if lowest_existing.is_some() && first_trivial_below.is_none() {
            first_trivial_below = Some(i);
        }
    }

    let mut refinement = Vec::new();
    let d_star = match (lowest_existing, first_trivial_below) {
        (None, _) => None,
        (Some(ei), None) => Some(rows[ei].d),
        (Some(ei), Some(ti)) => {
            let mut hi = ds[ei];
            let mut lo = ds[ti];
            for _ in 0..opts.refine_steps {
                let mid = Rational((lo.0 + hi.0) / num::rational::Ratio::from_integer(2));
                let row = sweep_probe(spec, &table, mid, opts)?;
                let nontrivial = exists(&row);
                refinement.push(row);
                if nontrivial {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(0.5 * (lo.to_f64() + hi.to_f64()))
        }
    };

    let exponent = d_star.and_then(|ds_val| {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| exists(r) && r.d - ds_val > 1e-9 && r.u_norm > 0.0)
            .map(|r| ((r.d - ds_val).ln(), r.u_norm.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (sxx, sxy): (f64, f64) = pts
            .iter()
            .fold((0.0, 0.0), |a, p| (a.0 + p.0 * p.0, a.1 + p.0 * p.1));
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-30 {
            return None;
        }
        Some((n * sxy - sx * sy) / denom)
    });

    Ok(SweepReport {
        rows,
        refinement,
        d_star,
        exponent,
    })
}

/// Everything the verification pass reports about one converged run.
#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsReport {
    pub el_residual_per_mode: Vec<ModeResidual>,
    pub energy_value: f64,
    pub energy_negative: bool,
    pub f_monotone: bool,
    pub f_max_violation: f64,
    pub spectrum: SpectrumReport,
    pub segment: SegmentReport,
}

/// Runs the full diagnostic battery on a converged profile and its field.
pub fn run_diagnostics(
    p: &DiscreteProfile,
    ctx: &EnergyContext,
    field: &BreatherField,
    n_t0: usize,
) -> Result<DiagnosticsReport, ReconstructError> {
    let residuals = el_residual(p, ctx)?;
    let report = eval_energy(p, ctx)?;
    let mono = f_monotonicity(field);
    let spectrum = classify_spectrum(p, ctx)?;
    let segment = segment_energy(field, n_t0);
    Ok(DiagnosticsReport {
        el_residual_per_mode: residuals,
        energy_value: report.e_total,
        energy_negative: report.e_total < 0.0,
        f_monotone: mono.monotone,
        f_max_violation: mono.max_violation,
        spectrum,
        segment,
    })
}

/// Space-time grid export. Rows are radius-major; the first column is `r`
/// for cylindrical geometry and `x` for the slab.
pub fn write_field_csv<W: Write>(mut out: W, field: &BreatherField) -> io::Result<()> {
    let coord = match field.geometry {
        Geometry::Cylindrical => "r",
        Geometry::Slab => "x",
    };
    writeln!(out, "{coord},t,w,w_t,intensity")?;
    for (i, &r) in field.radii.iter().enumerate() {
        for (j, &t) in field.times.iter().enumerate() {
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                r, t, field.w[i][j], field.w_t[i][j], field.intensity[i][j]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Cladding, Discretization, Nonlinearity, PotentialSpec};
    use crate::energy::seed_ansatz;
    use crate::kernel::{KernelForm, KernelSpec};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn rat(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    fn lattice_spec(geometry: Geometry, k_max: usize, n_elems: usize) -> ProblemSpec {
        ProblemSpec {
            geometry,
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
                k_max,
                n_elems,
                m_samples: None,
            },
        }
    }

    fn context_for(spec: &ProblemSpec) -> EnergyContext {
        let prob = CladdingProblem::from_spec(spec).expect("admissible spec");
        let table = prob
            .table(spec.discretization.k_max)
            .expect("fundamental solutions");
        EnergyContext::new(spec, &table).expect("context assembles")
    }

    fn converged_run(spec: &ProblemSpec) -> (DiscreteProfile, EnergyContext) {
        let ctx = context_for(spec);
        let template = DiscreteProfile::zeros(
            spec.geometry,
            spec.r_core.to_f64(),
            spec.discretization.n_elems,
            spec.discretization.k_max,
        );
        let opts = MinimizeOptions {
            seed: SeedChoice::Ansatz { k0: 1, eps: None },
            restarts: 1,
            ..MinimizeOptions::default()
        };
        let (u, report, _) = minimize(&template, &ctx, &opts).expect("minimization succeeds");
        assert!(
            report.e_total < 0.0,
            "expected a nontrivial minimizer, got E = {}",
            report.e_total
        );
        (u, ctx)
    }

    fn random_profile(spec: &ProblemSpec, scale: f64, seed: u64) -> DiscreteProfile {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = DiscreteProfile::zeros(
            spec.geometry,
            spec.r_core.to_f64(),
            spec.discretization.n_elems,
            spec.discretization.k_max,
        );
        for mi in 0..p.modes.len() {
            for j in p.first_free_node()..p.node_count() {
                let v = Complex64::new(
                    rng.gen_range(-1.0..1.0) * scale,
                    rng.gen_range(-1.0..1.0) * scale,
                );
                p.set_coeff(mi, j, v);
            }
        }
        p
    }

    fn fake_entry(value: f64, deriv: f64, excluded: bool) -> FundamentalSolutionEntry {
        FundamentalSolutionEntry {
            k: 3,
            value_at_r: value,
            deriv_at_r: deriv,
            q_k: if value != 0.0 { deriv / value } else { 0.0 },
            tail_norm: 1.0,
            excluded,
        }
    }

    #[test]
    fn extension_coefficient_covers_both_gluing_branches() {
        let ordinary = fake_entry(0.5, -0.2, false);
        let a = extension_coefficient(
            &ordinary,
            Complex64::new(1.0, 2.0),
            Complex64::new(9.0, 9.0),
        )
        .expect("ordinary branch divides by the value trace");
        assert!(
            (a - Complex64::new(2.0, 4.0)).norm() < 1e-15,
            "value-trace gluing gave {a}"
        );

        let excluded = fake_entry(0.0, -0.25, true);
        let a = extension_coefficient(
            &excluded,
            Complex64::new(9.0, 9.0),
            Complex64::new(0.5, -0.25),
        )
        .expect("excluded branch divides by the derivative trace");
        assert!(
            (a - Complex64::new(-2.0, 1.0)).norm() < 1e-15,
            "derivative-trace gluing gave {a}"
        );

        let degenerate = fake_entry(0.0, 1e-12, true);
        let err = extension_coefficient(
            &degenerate,
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        )
        .expect_err("a vanishing derivative trace cannot be divided by");
        assert!(
            matches!(
                err,
                ReconstructError::ExclusionDerivativeUnstable { k: 3, .. }
            ),
            "unexpected error {err:?}"
        );
    }

    #[test]
    fn zero_profile_extends_to_the_zero_field() {
        let spec = lattice_spec(Geometry::Cylindrical, 4, 12);
        let u = DiscreteProfile::zeros(Geometry::Cylindrical, 2.0, 12, 4);
        let field = extend_profile(&u, &spec, &FieldOptions::default()).expect("extension");
        assert_eq!(field.n_interior, 13, "interior nodes are the mesh nodes");
        assert_eq!(
            field.times.len(),
            2 * field.samples_per_period,
            "default export covers two periods"
        );
        let flat_zero = field
            .w
            .iter()
            .chain(&field.w_t)
            .chain(&field.energy_density)
            .all(|row| row.iter().all(|&x| x == 0.0));
        assert!(flat_zero, "zero profile must extend to the zero field");

        let ctx = context_for(&spec);
        let res = el_residual(&u, &ctx).expect("residuals");
        assert!(
            res.iter().all(|r| r.residual == 0.0),
            "zero profile has zero weak residual"
        );
        let mono = f_monotonicity(&field);
        assert!(mono.monotone, "the zero field is trivially monotone");
        assert_eq!(mono.max_violation, 0.0);
        let seg = segment_energy(&field, 8);
        assert!(
            seg.energy.iter().all(|&e| e == 0.0) && seg.full_period_total == 0.0,
            "zero field carries no segment energy"
        );
        assert!(!seg.truncated, "zero tail must not flag truncation");
        let spectrum = classify_spectrum(&u, &ctx).expect("classification");
        assert_eq!(
            spectrum.class,
            SpectrumClass::Polychromatic,
            "no dominant mode in the zero profile"
        );
    }

    #[test]
    fn sample_radii_cover_the_material_breakpoints() {
        let spec = lattice_spec(Geometry::Cylindrical, 4, 12);
        let u = random_profile(&spec, 1e-2, 7);
        let field = extend_profile(&u, &spec, &FieldOptions::default()).expect("extension");
        assert_eq!(field.radii[0], 0.0);
        assert!(
            (field.radii[field.n_interior - 1] - 2.0).abs() < 1e-15,
            "last interior node sits on the core boundary"
        );
        let r_last = *field.radii.last().unwrap();
        assert!(
            (r_last - 10.0).abs() < 1e-12,
            "default truncation is four periods out, got {r_last}"
        );
        for w in field.radii.windows(2) {
            assert!(w[1] > w[0], "radii must increase strictly");
        }
        let prob = CladdingProblem::from_spec(&spec).unwrap();
        for b in prob.material_interfaces(10.0) {
            assert!(
                field.radii.iter().any(|&r| (r - b).abs() < 1e-12),
                "material interface {b} missing from the sample radii"
            );
        }
    }

    #[test]
    fn exterior_gluing_matches_traces_and_natural_flux() {
        let spec = lattice_spec(Geometry::Cylindrical, 4, 16);
        let u = random_profile(&spec, 0.1, 42);
        let field = extend_profile(&u, &spec, &FieldOptions::default()).expect("extension");
        let prob = CladdingProblem::from_spec(&spec).unwrap();
        let table = prob.table(4).unwrap();
        let nb = field.n_interior - 1;
        for (mi, entry) in table.iter().enumerate() {
            assert!(!entry.excluded, "lattice example has empty exclusion set");
            let trace = u.coeff(mi, u.node_count() - 1);
            let glued = field.alpha[mi] * entry.value_at_r;
            assert!(
                (glued - trace).norm() <= 1e-12 * trace.norm().max(1.0),
                "mode {}: exterior value {glued} vs trace {trace}",
                entry.k
            );
            // Natural boundary flux: the exterior one-sided derivative
            // equals q_k times the value trace.
            let flux = field.mode_derivs[mi][nb];
            let expected = trace * entry.q_k;
            assert!(
                (flux - expected).norm() <= 1e-8 * expected.norm().max(1.0),
                "mode {}: flux {flux} vs q_k * trace {expected}",
                entry.k
            );
        }
    }

    #[test]
    fn exterior_field_decays_across_cladding_periods() {
        let spec = lattice_spec(Geometry::Cylindrical, 4, 12);
        let ctx = context_for(&spec);
        let template = DiscreteProfile::zeros(Geometry::Cylindrical, 2.0, 12, 4);
        let u = seed_ansatz(&template, &ctx, 1, Some(0.3), true).expect("witness seed");
        let field = extend_profile(&u, &spec, &FieldOptions::default()).expect("extension");
        let m = field.samples_per_period;
        let rms = |i: usize| -> f64 {
            (field.w[i][..m].iter().map(|&x| x * x).sum::<f64>() / m as f64).sqrt()
        };
        let at = |target: f64| -> usize {
            field
                .radii
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
                .map(|(i, _)| i)
                .unwrap()
        };
        let ratio = rms(at(8.0)) / rms(at(2.0));
        // Three lattice periods at per-period decay sqrt(beta/alpha) = 2/3,
        // with a generous constant for the in-cell shape and the cylindrical
        // spreading factor.
        assert!(
            ratio < 4.0 * (2.0_f64 / 3.0).powi(3),
            "field grew across the cladding: ratio {ratio}"
        );
        assert!(
            ratio > 1e-4,
            "decay ratio {ratio} implausibly small for three periods"
        );
    }

    #[test]
    fn weak_residual_sits_at_tolerance_for_minimizers_and_scales_with_noise() {
        let spec = lattice_spec(Geometry::Cylindrical, 4, 12);
        let (u, ctx) = converged_run(&spec);
        let res = el_residual(&u, &ctx).expect("residuals");
        assert_eq!(res.len(), 2, "modes 1 and 3 at K = 4");
        for r in &res {
            assert!(
                r.residual < 1e-6,
                "converged mode {} residual {} above tolerance",
                r.k,
                r.residual
            );
        }

        let perturbed = |amp: f64| -> f64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
            let mut dofs = u.flatten_free();
            for x in dofs.iter_mut() {
                *x += amp * rng.gen_range(-1.0..1.0);
            }
            let mut q = u.clone();
            q.unflatten_free(&dofs);
            el_residual(&q, &ctx)
                .expect("residuals")
                .iter()
                .map(|r| r.residual)
                .fold(0.0, f64::max)
        };
        let r3 = perturbed(1e-3);
        let r4 = perturbed(1e-4);
        let ratio = r3 / r4;
        assert!(
            (3.0..30.0).contains(&ratio),
            "residual should scale linearly with noise: r(1e-3)/r(1e-4) = {ratio}"
        );
    }

    #[test]
    fn monotonicity_flags_a_decreasing_synthetic_intensity() {
        let m = 8;
        let radii = vec![0.0, 0.5, 1.0, 1.5, 2.0];
        let w_t: Vec<Vec<f64>> = radii
            .iter()
            .map(|&r| vec![2.0 - r; m])
            .collect();
        let zeros = vec![vec![0.0; m]; radii.len()];
        let field = BreatherField {
            geometry: Geometry::Slab,
            r_core: 2.0,
            c: 2.0 / 3.0,
            radii: radii.clone(),
            n_interior: radii.len(),
            t_period: 4.0,
            samples_per_period: m,
            times: (0..m).map(|j| 0.5 * j as f64).collect(),
            modes: vec![1],
            alpha: vec![Complex64::new(1.0, 0.0)],
            mode_values: vec![vec![Complex64::new(1.0, 0.0); radii.len()]],
            mode_derivs: vec![vec![Complex64::new(0.0, 0.0); radii.len()]],
            w: zeros.clone(),
            w_t,
            intensity: zeros.clone(),
            energy_density: zeros,
            v_offset: vec![0.5; radii.len()],
            coupling: vec![1.0; radii.len()],
        };
        let report = f_monotonicity(&field);
        assert!(
            !report.monotone,
            "strictly decreasing intensity must fail the check"
        );
        assert!(
            report.max_violation > 0.0,
            "violation magnitude should be positive, got {}",
            report.max_violation
        );
        assert_eq!(report.f.len(), radii.len());
    }

    #[test]
    fn averaged_constant_kernel_run_is_monochromatic_and_monotone() {
        let mut spec = lattice_spec(Geometry::Slab, 8, 24);
        spec.nonlinearity = Nonlinearity::Averaged {
            kernel: KernelSpec {
                form: KernelForm::ConstantOne,
                alpha_holder: 1.0,
            },
        };
        let (u, ctx) = converged_run(&spec);
        let spectrum = classify_spectrum(&u, &ctx).expect("classification");
        assert_eq!(
            spectrum.class,
            SpectrumClass::Monochromatic(1),
            "constant-kernel slab run should concentrate on the first mode; \
             fractions {:?}",
            spectrum.fractions
        );
        assert_eq!(
            spectrum.kappa_double_zero,
            Some(true),
            "the constant kernel has no second harmonic"
        );
        let field = extend_profile(&u, &spec, &FieldOptions::default()).expect("extension");
        let mono = f_monotonicity(&field);
        assert!(
            mono.monotone,
            "averaged-kernel intensity must increase toward the boundary; \
             max violation {}",
            mono.max_violation
        );

        let diag = run_diagnostics(&u, &ctx, &field, 16).expect("diagnostics");
        assert!(diag.energy_negative, "converged run has negative energy");
        assert!(
            serde_json::to_string(&diag).expect("serializes").contains("el_residual_per_mode"),
            "diagnostics report must serialize its residual block"
        );
    }

    #[test]
    fn instantaneous_run_spreads_energy_over_several_modes() {
        let spec = lattice_spec(Geometry::Cylindrical, 8, 16);
        let (u, ctx) = converged_run(&spec);
        let spectrum = classify_spectrum(&u, &ctx).expect("classification");
        assert_eq!(
            spectrum.class,
            SpectrumClass::Polychromatic,
            "instantaneous law forbids single-mode profiles; fractions {:?}",
            spectrum.fractions
        );
        let busy = spectrum
            .fractions
            .iter()
            .filter(|&&(_, p)| p > MONO_TOL)
            .count();
        assert!(
            busy >= 3,
            "expected at least three active modes, fractions {:?}",
            spectrum.fractions
        );
        assert_eq!(spectrum.kappa_double_zero, None);
    }

    #[test]
    fn segment_energy_is_invariant_under_full_period_shifts() {
        let spec = lattice_spec(Geometry::Cylindrical, 4, 12);
        let (u, _) = converged_run(&spec);
        let field = extend_profile(&u, &spec, &FieldOptions::default()).expect("extension");
        let base = segment_energy_at(&field, &[0.5]);
        let shifted = segment_energy_at(&field, &[4.5]);
        assert_eq!(
            base.energy[0].to_bits(),
            shifted.energy[0].to_bits(),
            "window offsets one period apart must agree bit for bit"
        );
        assert!(
            base.energy[0] > 0.0,
            "nontrivial field carries positive segment energy"
        );
        let swept = segment_energy(&field, 16);
        assert!(swept.max >= swept.min && swept.min > 0.0);
        // The lattice cladding only contracts by 2/3 per period, so four
        // periods leave a percent-level density tail; the warning must
        // fire and the estimate must stay in that range.
        assert!(
            swept.truncated,
            "slow Floquet tails should trigger the truncation warning"
        );
        assert!(
            (1e-4..0.2).contains(&swept.tail_fraction),
            "tail share {} outside the expected percent range",
            swept.tail_fraction
        );
    }

    #[test]
    fn truncation_warning_clears_for_exponential_step_tails() {
        let spec = ProblemSpec {
            geometry: Geometry::Slab,
            potential: PotentialSpec {
                d: rat(23, 20),
                cladding: Cladding::PureStep {
                    a: rat(9, 4),
                    b: rat(1, 4),
                    rho: rat(1, 1),
                    m: None,
                    n: None,
                },
            },
            nonlinearity: Nonlinearity::Instantaneous,
            c: rat(2, 3),
            t_period: rat(4, 1),
            r_core: rat(2, 1),
            gamma: rat(1, 1),
            discretization: Discretization {
                k_max: 4,
                n_elems: 12,
                m_samples: None,
            },
        };
        let (u, _) = converged_run(&spec);
        let field = extend_profile(&u, &spec, &FieldOptions::default()).expect("extension");
        let report = segment_energy(&field, 8);
        assert!(
            !report.truncated,
            "the step tail decays exponentially and the default radius \
             reaches e^-16 in density; got tail share {}",
            report.tail_fraction
        );
        assert!(report.full_period_total > 0.0);
    }

    #[test]
    fn segment_window_mean_reproduces_the_full_period_total() {
        let spec = lattice_spec(Geometry::Cylindrical, 4, 12);
        let (u, _) = converged_run(&spec);
        let field = extend_profile(&u, &spec, &FieldOptions::default()).expect("extension");
        let m = field.samples_per_period;
        let dt = field.t_period / m as f64;
        let t0s: Vec<f64> = (0..m).map(|j| j as f64 * dt).collect();
        let report = segment_energy_at(&field, &t0s);
        let mean = report.energy.iter().sum::<f64>() / m as f64;
        // The window length 1/c spans an integer number of samples here
        // (1.5 over dt = 0.1), so averaging the window over all sample
        // offsets recovers the full-period integral scaled by the window
        // share of the period.
        let expected = report.full_period_total * (1.0 / field.c) / field.t_period;
        assert!(
            (mean - expected).abs() <= 1e-10 * expected.abs(),
            "window mean {mean} vs scaled total {expected}"
        );
    }

    #[test]
    fn sweep_locates_the_bifurcation_and_fits_a_quartic_root_exponent() {
        let spec = lattice_spec(Geometry::Cylindrical, 4, 12);
        let ds: Vec<Rational> = [
            (3, 4),
            (5, 8),
            (1, 2),
            (3, 8),
            (3, 10),
            (1, 4),
            (3, 16),
            (1, 8),
            (1, 16),
            (1, 50),
        ]
        .iter()
        .map(|&(n, d)| rat(n, d))
        .collect();
        let opts = SweepOptions {
            refine_steps: 8,
            minimize: MinimizeOptions {
                restarts: 1,
                ..MinimizeOptions::default()
            },
        };
        let report = sweep_d(&spec, &ds, &opts).expect("sweep");
        assert_eq!(report.rows.len(), ds.len());
        assert!(
            report.rows[0].e_star < -1e-6,
            "the example susceptibility must be deep in the existence range, \
             got E* = {}",
            report.rows[0].e_star
        );
        let last = report.rows.last().unwrap();
        assert!(
            last.e_star >= EXISTENCE_TOL,
            "far below the bifurcation only the zero minimizer remains, \
             got E* = {} at d = {}",
            last.e_star,
            last.d
        );
        let d_star = report.d_star.expect("probes bracket the bifurcation");
        assert!(
            (0.0..0.45).contains(&d_star),
            "bifurcation point {d_star} outside the plausible range"
        );
        let exponent = report.exponent.expect("enough rows for the fit");
        assert!(
            (0.05..0.8).contains(&exponent),
            "growth exponent {exponent} not consistent with a quartic root"
        );
    }

    #[test]
    fn field_csv_has_the_grid_shape_and_header() {
        let spec = lattice_spec(Geometry::Cylindrical, 4, 12);
        let u = random_profile(&spec, 1e-2, 3);
        let field = extend_profile(
            &u,
            &spec,
            &FieldOptions {
                r_max: Some(3.0),
                time_periods: 1,
            },
        )
        .expect("extension");
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &field).expect("csv writes");
        let text = String::from_utf8(buf).expect("utf8");
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("r,t,w,w_t,intensity"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(
            rows.len(),
            field.radii.len() * field.times.len(),
            "one row per grid point"
        );
        let first: Vec<f64> = rows[0]
            .split(',')
            .map(|s| s.parse().expect("floats"))
            .collect();
        assert_eq!(first.len(), 5);
        assert_eq!(first[0], 0.0, "first row sits on the axis");

        let slab = lattice_spec(Geometry::Slab, 4, 12);
        let us = random_profile(&slab, 1e-2, 3);
        let fs = extend_profile(
            &us,
            &slab,
            &FieldOptions {
                r_max: Some(3.0),
                time_periods: 1,
            },
        )
        .expect("extension");
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &fs).expect("csv writes");
        assert!(
            String::from_utf8(buf).unwrap().starts_with("x,t,"),
            "slab export labels the transverse coordinate x"
        );
    }

    #[test]
    fn profile_mismatch_is_rejected_before_extension() {
        let spec = lattice_spec(Geometry::Cylindrical, 4, 12);
        let wrong_elems = DiscreteProfile::zeros(Geometry::Cylindrical, 2.0, 10, 4);
        let err = extend_profile(&wrong_elems, &spec, &FieldOptions::default())
            .expect_err("element count mismatch must be rejected");
        assert!(matches!(err, ReconstructError::ProfileMismatch { .. }));
        let wrong_modes = DiscreteProfile::zeros(Geometry::Cylindrical, 2.0, 12, 6);
        let err = extend_profile(&wrong_modes, &spec, &FieldOptions::default())
            .expect_err("mode set mismatch must be rejected");
        assert!(matches!(err, ReconstructError::ProfileMismatch { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn segment_energy_shift_invariance_holds_for_random_profiles(
            seed in 0u64..1000,
            eighths in 0usize..32,
            periods in 1usize..4,
        ) {
            let spec = lattice_spec(Geometry::Cylindrical, 2, 6);
            let u = random_profile(&spec, 0.05, seed);
            let field = extend_profile(&u, &spec, &FieldOptions::default())
                .expect("extension");
            let t0 = field.t_period * eighths as f64 / 8.0;
            let shift = field.t_period * periods as f64;
            let a = segment_energy_at(&field, &[t0]);
            let b = segment_energy_at(&field, &[t0 + shift]);
            prop_assert_eq!(
                a.energy[0].to_bits(),
                b.energy[0].to_bits(),
                "shift by {} periods moved the window energy",
                periods
            );
        }
    }
}
