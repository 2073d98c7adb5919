//! The profile energy, its discrete gradient, and the descent solver.
//!
//! For a profile u(x, t) = Σ f_k(x)e^{iωkt} over odd modes (negative
//! indices implied by conjugation) the energy splits as E = E_I − E_B:
//!
//! - the quadratic interior part ∫ (½u_x² + ½(u/x)² + ½δ·u_t²) dμ dt with
//!   dμ = r dr in cylindrical geometry (dropping the 1/x² term and using
//!   dx in slab geometry) and the time measure normalized to unit mass;
//! - the quartic interior part E_N = ¼γ ∫ N(u_t)u_t dμ dt, with
//!   N(v) = v³ (instantaneous) or N(v) = (κ∗v²)v (time-averaged);
//! - the boundary part E_B = w_R Σ_{k>0} q_k |f_k(R)|² with w_R = R
//!   (cylindrical) or 1 (slab), q_k the boundary ratios of the decaying
//!   cladding solutions. Excluded modes carry a Dirichlet constraint
//!   f_k(R) = 0 instead of a boundary term.
//!
//! Per-mode quadratic terms are assembled from the exact element matrices
//! of [`crate::grid`]; the quartic density is sampled on the time grid per
//! node column and integrated in x against the piecewise-linear nodal
//! interpolant. The averaged nonlinearity is evaluated spectrally (the
//! square of a K-bandlimited u_t is 2K-bandlimited and the grid carries
//! M > 4K samples, so the convolution is exact); the O(M²) direct
//! convolution in [`crate::kernel`] serves as the cross-check.
//!
//! [`minimize`] runs a limited-memory quasi-Newton descent with
//! backtracking line search, optional restriction to the modes k ∈ k₀·ℤ_odd
//! (time-antiperiodic subspaces), and randomized restarts.

use std::collections::VecDeque;
use std::io;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{derive_coefficients, ConfigError, Geometry, Nonlinearity, ProblemSpec};
use crate::fundsol::{witness_threshold, FundamentalSolutionEntry};
use crate::grid::{element_matrix, DiscreteProfile, GridError, QuadKind, TimeGrid};
use crate::kernel::{kernel_fourier, periodize, KernelError};
use crate::special::i1;

/// Sufficient-decrease constant of the backtracking line search.
const ARMIJO_C1: f64 = 1e-4;
/// Curvature constant of the approximate-Wolfe acceptance.
const WOLFE_SIGMA: f64 = 0.9;
/// Relative rounding-noise scale of an energy evaluation; below this the
/// line search trusts directional derivatives instead of f-differences.
const F_NOISE_REL: f64 = 4e-15;
const BACKTRACK_FACTOR: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const LBFGS_MEMORY: usize = 10;
/// The energy is coercive; falling below this value signals an
/// inconsistent model (for example a negative coupling).
const DIVERGENCE_FLOOR: f64 = -1e12;
/// Absolute tolerance on the Dirichlet trace of excluded modes.
const EXCLUDED_TRACE_TOL: f64 = 1e-12;
/// Search window of the seed amplitude line search.
const SEED_EPS_RANGE: (f64, f64) = (1e-4, 10.0);

#[derive(Debug, thiserror::Error)]
pub enum EnergyError {
    #[error(
        "mode k = {k} carries a Dirichlet constraint at R but |f_k(R)| = {trace:.3e} \
         exceeds 1e-12"
    )]
    ExcludedViolation { k: usize, trace: f64 },
    #[error(
        "energy reached {energy:.3e}, below the coercivity floor -1e12; \
         the model setup is inconsistent"
    )]
    Diverged { energy: f64 },
    #[error("mode k0 = {k0} is not a usable boundary-ratio witness for seeding")]
    NoWitness { k0: usize },
    #[error("boundary data covers modes up to k = {have}, profile needs k = {need}")]
    TableTooShort { need: usize, have: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Boundary data of one odd mode as consumed by the energy: the ratio
/// q_k = φ_k′(R)/φ_k(R) or, for excluded modes, the Dirichlet flag.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundaryTerm {
    pub k: usize,
    pub q: f64,
    pub excluded: bool,
}

#[derive(Clone, Debug)]
pub enum NonlinearityEval {
    Instantaneous,
    /// Spectral multipliers κ̂_k of the periodized kernel, k = 0..=M/2.
    Averaged { khat: Vec<Complex64> },
}

/// Everything the energy needs besides the profile itself. The boundary
/// vector is indexed by stored mode (k = 2i + 1).
pub struct EnergyContext {
    pub geometry: Geometry,
    pub r_core: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Core comparison rate ω√δ; used for witness checks when seeding.
    pub lambda: f64,
    pub grid: TimeGrid,
    pub boundary: Vec<BoundaryTerm>,
    pub nonlinearity: NonlinearityEval,
}

impl EnergyContext {
    pub fn new(
        spec: &ProblemSpec,
        table: &[FundamentalSolutionEntry],
    ) -> Result<Self, EnergyError> {
        let coeffs = derive_coefficients(spec)?;
        let t_period = spec.t_period.to_f64();
        let m = spec.discretization.time_samples();
        let grid = TimeGrid::new(t_period, m, spec.discretization.k_max)?;
        let boundary = table
            .iter()
            .map(|e| BoundaryTerm {
                k: e.k as usize,
                q: e.q_k,
                excluded: e.excluded,
            })
            .collect();
        let nonlinearity = match &spec.nonlinearity {
            Nonlinearity::Instantaneous => NonlinearityEval::Instantaneous,
            Nonlinearity::Averaged { kernel } => {
                let samples = periodize(kernel, t_period, m)?;
                let khat = (0..=m / 2)
                    .map(|k| kernel_fourier(&samples, k as i64))
                    .collect::<Result<Vec<_>, _>>()?;
                NonlinearityEval::Averaged { khat }
            }
        };
        Ok(EnergyContext {
            geometry: spec.geometry,
            r_core: spec.r_core.to_f64(),
            gamma: spec.gamma.to_f64(),
            delta: coeffs.delta.to_f64(),
            lambda: coeffs.lambda,
            grid,
            boundary,
            nonlinearity,
        })
    }

    /// Assembles a context from raw parts; the caller is responsible for
    /// the consistency of the boundary data with the grid and geometry.
    pub fn from_parts(
        geometry: Geometry,
        r_core: f64,
        gamma: f64,
        delta: f64,
        grid: TimeGrid,
        boundary: Vec<BoundaryTerm>,
        nonlinearity: NonlinearityEval,
    ) -> Self {
        let lambda = grid.omega() * delta.sqrt();
        EnergyContext {
            geometry,
            r_core,
            gamma,
            delta,
            lambda,
            grid,
            boundary,
            nonlinearity,
        }
    }

    fn boundary_for(&self, k: usize) -> Result<&BoundaryTerm, EnergyError> {
        let idx = (k - 1) / 2;
        match self.boundary.get(idx) {
            Some(b) if b.k == k => Ok(b),
            _ => Err(EnergyError::TableTooShort {
                need: k,
                have: self.boundary.last().map_or(0, |b| b.k),
            }),
        }
    }

    /// Weight of the boundary quadratic form: the interface measure factor.
    pub fn boundary_weight(&self) -> f64 {
        match self.geometry {
            Geometry::Cylindrical => self.r_core,
            Geometry::Slab => 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub e_total: f64,
    pub e_i_quadratic: f64,
    pub e_n: f64,
    pub e_b: f64,
    /// L2 norm of the discrete gradient over the free degrees of freedom
    /// (over the active ones after a subspace-restricted minimization).
    pub grad_norm: f64,
    /// Spectral weight 2ω²k² ∫|f_k|² dμ per stored mode.
    pub per_mode_energy: Vec<f64>,
}

pub fn eval_energy(p: &DiscreteProfile, ctx: &EnergyContext) -> Result<EnergyReport, EnergyError> {
    eval_full(p, ctx).map(|(rep, _)| rep)
}

/// Gradient with respect to (Re f_k(x_j), Im f_k(x_j)) over the free nodes,
/// in the layout of [`DiscreteProfile::flatten_free`]. Conjugate modes are
/// folded in, so each component carries the Hermitian factor 2.
pub fn eval_gradient(p: &DiscreteProfile, ctx: &EnergyContext) -> Result<Vec<f64>, EnergyError> {
    eval_full(p, ctx).map(|(_, g)| g)
}

fn eval_full(
    p: &DiscreteProfile,
    ctx: &EnergyContext,
) -> Result<(EnergyReport, Vec<f64>), EnergyError> {
    assert!(
        p.geometry == ctx.geometry && (p.r_core - ctx.r_core).abs() < 1e-12 * ctx.r_core,
        "profile geometry/mesh does not match the energy context"
    );
    let nc = p.node_count();
    let j0 = p.first_free_node();
    let last = nc - 1;
    let free = nc - j0;
    let omega = ctx.grid.omega();
    let radial = ctx.geometry == Geometry::Cylindrical;

    for (mi, &k) in p.modes.iter().enumerate() {
        let b = ctx.boundary_for(k)?;
        if b.excluded {
            let trace = p.coeff(mi, last).norm();
            if trace > EXCLUDED_TRACE_TOL {
                return Err(EnergyError::ExcludedViolation { k, trace });
            }
        }
    }

    // Quadratic part, boundary part, and spectral weights, one mode at a
    // time. Gradient blocks are kept per mode so the parallel reduction is
    // order-independent.
    struct ModeOut {
        quad: f64,
        mass2: f64,
        e_b: f64,
        grad: Vec<f64>,
    }
    let w_b = ctx.boundary_weight();
    let mode_out: Vec<ModeOut> = p
        .modes
        .par_iter()
        .enumerate()
        .map(|(mi, &k)| {
            let coeffs = p.mode_coeffs(mi);
            let kw2 = (omega * k as f64).powi(2);
            let mut quad = 0.0;
            let mut mass = 0.0;
            let mut grad = vec![0.0; 2 * free];
            let (stiff_kind, mass_kind) = if radial {
                (QuadKind::StiffnessR, QuadKind::MassR)
            } else {
                (QuadKind::Stiffness1, QuadKind::Mass1)
            };
            for e in 0..p.n_elems {
                let xl = p.node_x(e);
                let xr = p.node_x(e + 1);
                let s = element_matrix(stiff_kind, xl, xr).expect("mesh elements are valid");
                let m = element_matrix(mass_kind, xl, xr).expect("mesh elements are valid");
                let mut a = [[0.0; 2]; 2];
                for (ai, row) in a.iter_mut().enumerate() {
                    for (aj, v) in row.iter_mut().enumerate() {
                        *v = s[ai][aj] + ctx.delta * kw2 * m[ai][aj];
                    }
                }
                if radial {
                    let inv = element_matrix(QuadKind::InverseR, xl, xr)
                        .expect("mesh elements are valid");
                    if e == 0 {
                        // First radial element: f_k(0) = 0, only the right
                        // hat couples to the 1/r weight.
                        a[1][1] += inv[1][1];
                    } else {
                        for (ai, row) in a.iter_mut().enumerate() {
                            for (aj, v) in row.iter_mut().enumerate() {
                                *v += inv[ai][aj];
                            }
                        }
                    }
                }
                let c0 = coeffs[e];
                let c1 = coeffs[e + 1];
                quad += a[0][0] * c0.norm_sqr()
                    + 2.0 * a[0][1] * (c0.conj() * c1).re
                    + a[1][1] * c1.norm_sqr();
                mass += m[0][0] * c0.norm_sqr()
                    + 2.0 * m[0][1] * (c0.conj() * c1).re
                    + m[1][1] * c1.norm_sqr();
                let g0 = (a[0][0] * c0 + a[0][1] * c1) * 2.0;
                let g1 = (a[1][0] * c0 + a[1][1] * c1) * 2.0;
                if e >= j0 {
                    grad[2 * (e - j0)] += g0.re;
                    grad[2 * (e - j0) + 1] += g0.im;
                }
                grad[2 * (e + 1 - j0)] += g1.re;
                grad[2 * (e + 1 - j0) + 1] += g1.im;
            }
            let b = ctx.boundary_for(k).expect("coverage checked above");
            let mut e_b = 0.0;
            if !b.excluded {
                let c = coeffs[last];
                e_b = w_b * b.q * c.norm_sqr();
                let g = c * (2.0 * w_b * b.q);
                grad[2 * (last - j0)] -= g.re;
                grad[2 * (last - j0) + 1] -= g.im;
            }
            ModeOut {
                quad,
                mass2: 2.0 * kw2 * mass,
                e_b,
                grad,
            }
        })
        .collect();

    // Quartic part per node column: density ρ_j and the sampled chain-rule
    // factor g with ĝ evaluated at the stored modes.
    struct NodeOut {
        rho: f64,
        ghat: Vec<Complex64>,
    }
    let band = p.modes.last().map_or(0, |&k| 2 * k).min(ctx.grid.samples() / 2);
    let node_out: Vec<NodeOut> = (0..nc)
        .into_par_iter()
        .map(|j| {
            let v = p.synthesize_time_derivative(j, &ctx.grid);
            let (rho, g) = quartic_density_grad(ctx, &v, band);
            let ghat = p
                .modes
                .iter()
                .map(|&k| analyze_one(&g, &ctx.grid, k))
                .collect();
            NodeOut { rho, ghat }
        })
        .collect();

    let weights = node_weights(p, radial);
    let mut grad = vec![0.0; p.dof_count()];
    let mut e_quad = 0.0;
    let mut e_b = 0.0;
    let mut per_mode_energy = Vec::with_capacity(p.modes.len());
    for (mi, out) in mode_out.iter().enumerate() {
        e_quad += out.quad;
        e_b += out.e_b;
        per_mode_energy.push(out.mass2);
        grad[2 * mi * free..2 * (mi + 1) * free].copy_from_slice(&out.grad);
    }
    let quart = 0.25 * ctx.gamma;
    let mut e_n = 0.0;
    for (j, out) in node_out.iter().enumerate() {
        e_n += quart * weights[j] * out.rho;
        if j < j0 {
            continue;
        }
        for (mi, &k) in p.modes.iter().enumerate() {
            let gh = out.ghat[mi];
            let scale = quart * weights[j] * 2.0 * omega * k as f64;
            grad[2 * (mi * free + j - j0)] += scale * gh.im;
            grad[2 * (mi * free + j - j0) + 1] -= scale * gh.re;
        }
    }

    let e_total = e_quad + e_n - e_b;
    let grad_norm = l2_norm(&grad);
    Ok((
        EnergyReport {
            e_total,
            e_i_quadratic: e_quad,
            e_n,
            e_b,
            grad_norm,
            per_mode_energy,
        },
        grad,
    ))
}

/// Time-mean of N(v)v on the sample grid together with the sampled
/// derivative g_l = M·∂(mean)/∂v_l. For the averaged nonlinearity the
/// convolution is synthesized from spectral products up to `band` (the
/// bandwidth of v², twice the largest mode); the derivative uses the
/// symmetrized multipliers Re κ̂_k.
fn quartic_density_grad(ctx: &EnergyContext, v: &[f64], band: usize) -> (f64, Vec<f64>) {
    let m = v.len() as f64;
    match &ctx.nonlinearity {
        NonlinearityEval::Instantaneous => {
            let mut rho = 0.0;
            let g = v
                .iter()
                .map(|&x| {
                    let x2 = x * x;
                    rho += x2 * x2;
                    4.0 * x2 * x
                })
                .collect();
            (rho / m, g)
        }
        NonlinearityEval::Averaged { khat } => {
            let w: Vec<f64> = v.iter().map(|&x| x * x).collect();
            let band = band.min(khat.len() - 1);
            let what: Vec<Complex64> = (0..=band)
                .map(|k| analyze_one(&w, &ctx.grid, k))
                .collect();
            let mut rho = 0.0;
            let mut g = vec![0.0; w.len()];
            for (l, gl) in g.iter_mut().enumerate() {
                let mut conv = khat[0].re * what[0].re;
                let mut sym = khat[0].re * what[0].re;
                for k in 1..=band {
                    let ph = ctx.grid.phase(k as i64, l);
                    let prod = what[k] * ph;
                    conv += 2.0 * (khat[k] * prod).re;
                    sym += 2.0 * khat[k].re * prod.re;
                }
                rho += conv * w[l];
                // d/dv of sum_{l,i} kappa_{l-i} w_i w_l picks up both index
                // slots, symmetrizing the multipliers to 2 Re khat.
                *gl = 4.0 * v[l] * sym;
            }
            (rho / m, g)
        }
    }
}

/// Single discrete Fourier coefficient v̂_k = (1/M) Σ_l v_l e^{−iωk t_l}.
fn analyze_one(samples: &[f64], grid: &TimeGrid, k: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (l, &v) in samples.iter().enumerate() {
        acc += v * grid.phase(-(k as i64), l);
    }
    acc / samples.len() as f64
}

/// ∫ φ_j dμ per node: the x-integral weights of the piecewise-linear
/// interpolant of a nodal density.
fn node_weights(p: &DiscreteProfile, radial: bool) -> Vec<f64> {
    let nc = p.node_count();
    let mut w = vec![0.0; nc];
    for e in 0..p.n_elems {
        let xl = p.node_x(e);
        let xr = p.node_x(e + 1);
        let h = xr - xl;
        if radial {
            w[e] += h * (2.0 * xl + xr) / 6.0;
            w[e + 1] += h * (xl + 2.0 * xr) / 6.0;
        } else {
            w[e] += 0.5 * h;
            w[e + 1] += 0.5 * h;
        }
    }
    w
}

/// Eigendecomposition of a symmetric tridiagonal matrix by the implicit QL
/// method with Wilkinson shifts (Golub and Van Loan, Algorithm 8.3.3).
/// `off[i]` couples rows i and i+1. Returns eigenvalues and the orthonormal
/// eigenbasis, stored row-major with eigenvector j in column j.
fn tridiag_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    assert!(off.len() + 1 == n, "subdiagonal length must be n - 1");
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 50, "QL sweep failed to deflate row {l} of {n}");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0;
            let mut underflowed = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflowed = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in 0..n {
                    f = z[row * n + i + 1];
                    z[row * n + i + 1] = s * z[row * n + i] + c * f;
                    z[row * n + i] = c * z[row * n + i] - s * f;
                }
            }
            if underflowed {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    (d, z)
}

/// Exact spectral factorization of the per-mode quadratic Hessian blocks
/// (interior form minus the boundary term), used as the quasi-Newton H0.
/// The per-mode curvatures span many decades (boundary ratios of high
/// modes cancel the interior form to e^(-2 lambda k R)), which no scalar
/// or diagonal scaling can represent.
struct SpectralPrecond {
    /// Per stored mode: eigenvalues and orthonormal eigenbasis over the
    /// free nodes.
    modes: Vec<(Vec<f64>, Vec<f64>)>,
    free: usize,
    /// Largest curvature magnitude over all blocks.
    lam_max: f64,
}

impl SpectralPrecond {
    fn build(p: &DiscreteProfile, ctx: &EnergyContext) -> Result<Self, EnergyError> {
        let nc = p.node_count();
        let j0 = p.first_free_node();
        let free = nc - j0;
        let omega = ctx.grid.omega();
        let radial = ctx.geometry == Geometry::Cylindrical;
        let (stiff_kind, mass_kind) = if radial {
            (QuadKind::StiffnessR, QuadKind::MassR)
        } else {
            (QuadKind::Stiffness1, QuadKind::Mass1)
        };
        let w_b = ctx.boundary_weight();
        let mut modes = Vec::with_capacity(p.modes.len());
        let mut lam_max = 0.0f64;
        for &k in &p.modes {
            let kw2 = (omega * k as f64).powi(2);
            let mut diag = vec![0.0; free];
            let mut off = vec![0.0; free - 1];
            for e in 0..p.n_elems {
                let xl = p.node_x(e);
                let xr = p.node_x(e + 1);
                let s = element_matrix(stiff_kind, xl, xr).expect("mesh elements are valid");
                let m = element_matrix(mass_kind, xl, xr).expect("mesh elements are valid");
                let mut a = [[0.0; 2]; 2];
                for (ai, row) in a.iter_mut().enumerate() {
                    for (aj, v) in row.iter_mut().enumerate() {
                        *v = s[ai][aj] + ctx.delta * kw2 * m[ai][aj];
                    }
                }
                if radial {
                    let inv = element_matrix(QuadKind::InverseR, xl, xr)
                        .expect("mesh elements are valid");
                    if e == 0 {
                        a[1][1] += inv[1][1];
                    } else {
                        for (ai, row) in a.iter_mut().enumerate() {
                            for (aj, v) in row.iter_mut().enumerate() {
                                *v += inv[ai][aj];
                            }
                        }
                    }
                }
                if e >= j0 {
                    diag[e - j0] += 2.0 * a[0][0];
                    off[e - j0] += 2.0 * a[0][1];
                }
                diag[e + 1 - j0] += 2.0 * a[1][1];
            }
            let b = ctx.boundary_for(k)?;
            if !b.excluded {
                diag[free - 1] -= 2.0 * w_b * b.q;
            }
            let (vals, vecs) = tridiag_eigen(&diag, &off);
            for v in &vals {
                lam_max = lam_max.max(v.abs());
            }
            modes.push((vals, vecs));
        }
        Ok(SpectralPrecond {
            modes,
            free,
            lam_max,
        })
    }

    /// H0 q with H0 = V diag(1/max(|lambda|, mu)) V^T per mode block,
    /// applied to the real and imaginary strands separately.
    fn apply(&self, q: &[f64], mu: f64) -> Vec<f64> {
        let n = self.free;
        let mut out = vec![0.0; q.len()];
        let mut comp = vec![0.0; n];
        let mut w = vec![0.0; n];
        for (mi, (vals, vecs)) in self.modes.iter().enumerate() {
            for part in 0..2 {
                for i in 0..n {
                    comp[i] = q[2 * (mi * n + i) + part];
                }
                for (j, wj) in w.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += vecs[i * n + j] * comp[i];
                    }
                    *wj = acc / vals[j].abs().max(mu);
                }
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, wj) in w.iter().enumerate() {
                        acc += vecs[i * n + j] * wj;
                    }
                    out[2 * (mi * n + i) + part] = acc;
                }
            }
        }
        out
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// --- seeding -------------------------------------------------------------

/// Single-mode profile εf(x)(e_{k₀} + e_{−k₀}) with f the decaying-rate
/// comparison shape: I₁(λk₀x) in cylindrical geometry, cosh(λk₀x) in slab
/// geometry. With `eps = None` the amplitude is picked by a golden-section
/// search of the energy along the ray. Errors on excluded k₀ always, and on
/// non-witness k₀ when `strict` is set.
pub fn seed_ansatz(
    template: &DiscreteProfile,
    ctx: &EnergyContext,
    k0: usize,
    eps: Option<f64>,
    strict: bool,
) -> Result<DiscreteProfile, EnergyError> {
    let mi = template
        .modes
        .iter()
        .position(|&k| k == k0)
        .unwrap_or_else(|| panic!("seed mode k0 = {k0} is not stored (odd, <= K required)"));
    let b = ctx.boundary_for(k0)?;
    let threshold = witness_threshold(ctx.geometry, ctx.lambda, k0 as u64, ctx.r_core);
    if b.excluded || (strict && b.q <= threshold) {
        return Err(EnergyError::NoWitness { k0 });
    }
    let lk = ctx.lambda * k0 as f64;
    let mut p = DiscreteProfile::zeros(
        template.geometry,
        template.r_core,
        template.n_elems,
        *template.modes.last().expect("profile stores at least one mode"),
    );
    for j in p.first_free_node()..p.node_count() {
        let x = p.node_x(j);
        let shape = match ctx.geometry {
            Geometry::Cylindrical => i1(lk * x),
            Geometry::Slab => (lk * x).cosh(),
        };
        p.set_coeff(mi, j, Complex64::new(shape, 0.0));
    }
    let eps = match eps {
        Some(e) => e,
        None => golden_section_eps(&p, ctx)?,
    };
    scale_profile(&mut p, eps);
    Ok(p)
}

fn scale_profile(p: &mut DiscreteProfile, s: f64) {
    for mi in 0..p.modes.len() {
        for j in p.first_free_node()..p.node_count() {
            let c = p.coeff(mi, j);
            p.set_coeff(mi, j, c * s);
        }
    }
}

fn golden_section_eps(base: &DiscreteProfile, ctx: &EnergyContext) -> Result<f64, EnergyError> {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let phi = |eps: f64| -> Result<f64, EnergyError> {
        let mut q = base.clone();
        scale_profile(&mut q, eps);
        Ok(eval_energy(&q, ctx)?.e_total)
    };
    let (mut a, mut b) = SEED_EPS_RANGE;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = phi(c)?;
    let mut fd = phi(d)?;
    for _ in 0..64 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = phi(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = phi(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

// --- minimization ----------------------------------------------------------

#[derive(Clone, Debug)]
pub enum SeedChoice {
    /// Single-witness-mode start with optional fixed amplitude.
    Ansatz { k0: usize, eps: Option<f64> },
    /// Small random coefficients from a seeded generator.
    Random { seed: u64 },
    /// Use the profile passed to `minimize` as-is.
    Provided,
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Relative gradient tolerance: stop at ‖g‖ ≤ grad_tol·max(1, |E|).
    pub grad_tol: f64,
    pub seed: SeedChoice,
    /// Restrict the active modes to odd multiples of this odd k₀.
    pub subspace_k0: Option<usize>,
    pub restarts: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iters: 4000,
            grad_tol: 1e-8,
            seed: SeedChoice::Provided,
            subspace_k0: None,
            restarts: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizeTrace {
    /// Per-iteration log of the best restart.
    pub records: Vec<IterRecord>,
    /// Final energy of every restart, in run order.
    pub restart_energies: Vec<f64>,
}

pub fn write_trace_csv<W: io::Write>(mut w: W, trace: &MinimizeTrace) -> io::Result<()> {
    writeln!(w, "iter,E,grad_norm,step_size")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{:.17e},{:.17e},{:.17e}",
            r.iter, r.energy, r.grad_norm, r.step
        )?;
    }
    Ok(())
}

/// Per-dof activity mask: inactive entries are pinned to zero. A dof is
/// inactive if its mode lies outside the requested subspace or if it is the
/// interface trace of an excluded mode.
fn active_mask(
    p: &DiscreteProfile,
    ctx: &EnergyContext,
    subspace_k0: Option<usize>,
) -> Result<Vec<bool>, EnergyError> {
    if let Some(k0) = subspace_k0 {
        assert!(k0 % 2 == 1, "subspace base mode must be odd, got {k0}");
    }
    let nc = p.node_count();
    let j0 = p.first_free_node();
    let mut mask = Vec::with_capacity(p.dof_count());
    for &k in &p.modes {
        let in_subspace = subspace_k0.is_none_or(|k0| k % k0 == 0 && (k / k0) % 2 == 1);
        let excluded = ctx.boundary_for(k)?.excluded;
        for j in j0..nc {
            let active = in_subspace && !(excluded && j == nc - 1);
            mask.push(active);
            mask.push(active);
        }
    }
    Ok(mask)
}

fn apply_mask(v: &mut [f64], mask: &[bool]) {
    for (x, &keep) in v.iter_mut().zip(mask) {
        if !keep {
            *x = 0.0;
        }
    }
}

fn random_profile(template: &DiscreteProfile, mask: &[bool], seed: u64, amp: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dofs: Vec<f64> = (0..template.dof_count())
        .map(|_| rng.gen_range(-amp..amp))
        .collect();
    apply_mask(&mut dofs, mask);
    dofs
}

/// Limited-memory quasi-Newton minimization of the energy. Returns the best
/// profile over all restarts, its report (grad_norm taken over the active
/// dofs), and the iteration trace of the winning run.
pub fn minimize(
    p0: &DiscreteProfile,
    ctx: &EnergyContext,
    opts: &MinimizeOptions,
) -> Result<(DiscreteProfile, EnergyReport, MinimizeTrace), EnergyError> {
    assert!(opts.grad_tol > 0.0, "gradient tolerance must be positive");
    let mask = active_mask(p0, ctx, opts.subspace_k0)?;
    let restarts = opts.restarts.max(1);
    let base_seed = match opts.seed {
        SeedChoice::Random { seed } => seed,
        _ => 0x42_72_65_61,
    };
    let mut best: Option<(DiscreteProfile, EnergyReport, Vec<IterRecord>)> = None;
    let mut restart_energies = Vec::with_capacity(restarts);
    for restart in 0..restarts {
        let start_dofs = if restart == 0 {
            match &opts.seed {
                SeedChoice::Provided => {
                    let mut d = p0.flatten_free();
                    apply_mask(&mut d, &mask);
                    d
                }
                SeedChoice::Ansatz { k0, eps } => {
                    let seeded = seed_ansatz(p0, ctx, *k0, *eps, false)?;
                    let mut d = seeded.flatten_free();
                    apply_mask(&mut d, &mask);
                    d
                }
                SeedChoice::Random { seed } => random_profile(p0, &mask, *seed, 1e-2),
            }
        } else {
            random_profile(
                p0,
                &mask,
                base_seed.wrapping_add(restart as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                1e-2,
            )
        };
        let (profile, report, records) = lbfgs_run(p0, ctx, &mask, start_dofs, opts)?;
        restart_energies.push(report.e_total);
        let better = match &best {
            None => true,
            Some((_, b, _)) => report.e_total < b.e_total,
        };
        if better {
            best = Some((profile, report, records));
        }
    }
    let (profile, report, records) = best.expect("at least one restart ran");
    Ok((
        profile,
        report,
        MinimizeTrace {
            records,
            restart_energies,
        },
    ))
}

fn lbfgs_run(
    template: &DiscreteProfile,
    ctx: &EnergyContext,
    mask: &[bool],
    start: Vec<f64>,
    opts: &MinimizeOptions,
) -> Result<(DiscreteProfile, EnergyReport, Vec<IterRecord>), EnergyError> {
    let mut p = template.clone();
    let eval = |x: &[f64], p: &mut DiscreteProfile| -> Result<(f64, Vec<f64>, EnergyReport), EnergyError> {
        p.unflatten_free(x);
        let (rep, mut g) = eval_full(p, ctx)?;
        apply_mask(&mut g, mask);
        if rep.e_total < DIVERGENCE_FLOOR {
            return Err(EnergyError::Diverged { energy: rep.e_total });
        }
        Ok((rep.e_total, g, rep))
    };

    let pre = SpectralPrecond::build(template, ctx)?;
    let mu_floor = 1e-12 * pre.lam_max;
    let mut x = start;
    let (mut f, mut g, mut rep) = eval(&x, &mut p)?;
    let mut records = vec![IterRecord {
        iter: 0,
        energy: f,
        grad_norm: l2_norm(&g),
        step: 0.0,
    }];
    let mut s_list: VecDeque<Vec<f64>> = VecDeque::with_capacity(LBFGS_MEMORY);
    let mut y_list: VecDeque<Vec<f64>> = VecDeque::with_capacity(LBFGS_MEMORY);

    let mut null_steps = 0usize;
    for iter in 1..=opts.max_iters {
        let gnorm = l2_norm(&g);
        if gnorm <= opts.grad_tol * f.abs().max(1.0) {
            break;
        }
        let x_scale = 1.0 + l2_norm(&x);
        // Curvature floor for the near-null directions of the quadratic
        // form, proportional to the gradient norm so that every floored
        // component of the preconditioned step stays bounded by one.
        let mu = gnorm.clamp(mu_floor, pre.lam_max);
        let mut d = two_loop_direction(&g, &s_list, &y_list, &pre, mu);
        apply_mask(&mut d, mask);
        let mut gd = dot(&g, &d);
        let mut fallback = s_list.is_empty();
        if gd >= 0.0 || l2_norm(&d) <= 1e-13 * x_scale {
            // Stale curvature pairs; restart from the preconditioned
            // steepest-descent direction.
            s_list.clear();
            y_list.clear();
            d = two_loop_direction(&g, &s_list, &y_list, &pre, mu);
            apply_mask(&mut d, mask);
            gd = dot(&g, &d);
            fallback = true;
            if gd >= 0.0 {
                break;
            }
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        let eps_f = F_NOISE_REL * (1.0 + f.abs());
        for _ in 0..MAX_BACKTRACKS {
            let x_new: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            let (f_new, g_new, rep_new) = eval(&x_new, &mut p)?;
            let armijo = f_new <= f + ARMIJO_C1 * alpha * gd;
            // Once the demanded decrease is at rounding scale the Armijo
            // test is uninformative; use the two-sided slope test instead.
            let gd_new = dot(&g_new, &d);
            let approx_wolfe = (ARMIJO_C1 * alpha * gd).abs() <= eps_f
                && f_new <= f + eps_f
                && gd_new >= WOLFE_SIGMA * gd
                && gd_new <= (2.0 * ARMIJO_C1 - 1.0) * gd;
            if armijo || approx_wolfe {
                accepted = Some((x_new, f_new, g_new, rep_new));
                break;
            }
            alpha *= BACKTRACK_FACTOR;
        }
        let Some((x_new, f_new, g_new, rep_new)) = accepted else {
            // No acceptable point along a descent direction: at the
            // resolution of the arithmetic already.
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let snorm = l2_norm(&s);
        if snorm <= 1e-12 * x_scale {
            if fallback {
                // Even a fresh descent step cannot move the iterate: the
                // energy is flat to rounding in every offered direction.
                break;
            }
            null_steps += 1;
            if null_steps >= 2 {
                s_list.clear();
                y_list.clear();
                null_steps = 0;
            }
        } else {
            null_steps = 0;
            // Learn curvature from resolvable steps alone; sub-resolution
            // displacements only produce rounding noise in y.
            let sy = dot(&s, &y);
            if sy > 1e-10 * snorm * l2_norm(&y) {
                if s_list.len() == LBFGS_MEMORY {
                    s_list.pop_front();
                    y_list.pop_front();
                }
                s_list.push_back(s);
                y_list.push_back(y);
            }
        }
        x = x_new;
        f = f_new;
        g = g_new;
        rep = rep_new;
        records.push(IterRecord {
            iter,
            energy: f,
            grad_norm: l2_norm(&g),
            step: alpha,
        });
    }
    rep.grad_norm = l2_norm(&g);
    p.unflatten_free(&x);
    Ok((p, rep, records))
}

fn two_loop_direction(
    g: &[f64],
    s_list: &VecDeque<Vec<f64>>,
    y_list: &VecDeque<Vec<f64>>,
    pre: &SpectralPrecond,
    mu: f64,
) -> Vec<f64> {
    let mut q = g.to_vec();
    let n = s_list.len();
    let mut alphas = vec![0.0; n];
    for i in (0..n).rev() {
        let rho = 1.0 / dot(&s_list[i], &y_list[i]);
        let a = rho * dot(&s_list[i], &q);
        alphas[i] = a;
        for (qj, yj) in q.iter_mut().zip(&y_list[i]) {
            *qj -= a * yj;
        }
    }
    let mut q = pre.apply(&q, mu);
    for i in 0..n {
        let rho = 1.0 / dot(&s_list[i], &y_list[i]);
        let b = rho * dot(&y_list[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_list[i]) {
            *qj += (alphas[i] - b) * sj;
        }
    }
    for qj in q.iter_mut() {
        *qj = -*qj;
    }
    q
}
