//! Discrete ansatz space and quadrature: odd temporal Fourier modes tensored
//! with piecewise-linear elements on an equidistant mesh over [0, R], plus
//! the M-point time grid that carries all nonlinear evaluations.
//!
//! Storage is Hermitian-implicit: only modes k = 1, 3, ..., <= K are kept and
//! f_{-k} = conj(f_k) is applied during synthesis, so every synthesized
//! signal is real by construction. In radial geometry the node at r = 0 is
//! pinned to zero: with the 1/r² weight in the energy, a piecewise-linear
//! function with f(0) ≠ 0 has a divergent first-element integral. The slab
//! solves on [0, R] under even extension, leaving the node at 0 free.
//!
//! Phase factors e^{iωk t_j} = e^{2πi·kj/M} come from one table of M-th
//! roots of unity indexed by kj mod M, so no trigonometric error accumulates
//! across modes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::Geometry;

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("time grid needs M > 4K: M = {m}, K = {k_max}")]
    TooFewSamples { m: usize, k_max: usize },
    #[error("time grid needs even M, got {m}")]
    OddSampleCount { m: usize },
    #[error("degenerate element: [{left}, {right}]")]
    DegenerateElement { left: f64, right: f64 },
}

// ---------------------------------------------------------------------------
// Time grid
// ---------------------------------------------------------------------------

pub struct TimeGrid {
    m: usize,
    t_period: f64,
    omega: f64,
    /// cos/sin of 2π l / M for l in 0..M.
    table: Vec<(f64, f64)>,
}

impl TimeGrid {
    pub fn new(t_period: f64, m: usize, k_max: usize) -> Result<Self, GridError> {
        if m <= 4 * k_max {
            return Err(GridError::TooFewSamples { m, k_max });
        }
        if !m.is_multiple_of(2) {
            return Err(GridError::OddSampleCount { m });
        }
        let table = (0..m)
            .map(|l| {
                let phase = 2.0 * std::f64::consts::PI * l as f64 / m as f64;
                (phase.cos(), phase.sin())
            })
            .collect();
        Ok(TimeGrid {
            m,
            t_period,
            omega: 2.0 * std::f64::consts::PI / t_period,
            table,
        })
    }

    pub fn samples(&self) -> usize {
        self.m
    }

    pub fn t_period(&self) -> f64 {
        self.t_period
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.t_period / self.m as f64
    }

    /// e^{iωk t_j} for any signed k (reduced mod M exactly).
    pub fn phase(&self, k: i64, j: usize) -> Complex64 {
        let l = (k.rem_euclid(self.m as i64) as usize * (j % self.m)) % self.m;
        let (c, s) = self.table[l];
        Complex64::new(c, s)
    }
}

// ---------------------------------------------------------------------------
// Discrete profile
// ---------------------------------------------------------------------------

/// Coefficient representation of the ansatz: f_k(x_j) for odd k <= K on the
/// equidistant nodes x_j = j R/N. Mode-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteProfile {
    pub geometry: Geometry,
    pub r_core: f64,
    pub n_elems: usize,
    /// Odd mode indices, ascending.
    pub modes: Vec<usize>,
    coeffs: Vec<Complex64>,
}

impl DiscreteProfile {
    pub fn zeros(geometry: Geometry, r_core: f64, n_elems: usize, k_max: usize) -> Self {
        assert!(n_elems >= 2, "mesh needs at least two elements");
        assert!(r_core > 0.0, "core radius must be positive");
        let modes: Vec<usize> = (1..=k_max).step_by(2).collect();
        let coeffs = vec![Complex64::new(0.0, 0.0); modes.len() * (n_elems + 1)];
        DiscreteProfile {
            geometry,
            r_core,
            n_elems,
            modes,
            coeffs,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n_elems + 1
    }

    pub fn mesh_h(&self) -> f64 {
        self.r_core / self.n_elems as f64
    }

    pub fn node_x(&self, j: usize) -> f64 {
        j as f64 * self.mesh_h()
    }

    /// First node carrying a degree of freedom: 1 in radial geometry (node 0
    /// is pinned), 0 in slab geometry.
    pub fn first_free_node(&self) -> usize {
        match self.geometry {
            Geometry::Cylindrical => 1,
            Geometry::Slab => 0,
        }
    }

    pub fn coeff(&self, mode_idx: usize, node: usize) -> Complex64 {
        self.coeffs[mode_idx * self.node_count() + node]
    }

    pub fn set_coeff(&mut self, mode_idx: usize, node: usize, v: Complex64) {
        if node == 0 && self.geometry == Geometry::Cylindrical {
            assert!(
                v.norm() == 0.0,
                "radial profiles pin f_k(0) = 0, attempted {v}"
            );
        }
        let nc = self.node_count();
        self.coeffs[mode_idx * nc + node] = v;
    }

    /// Column of coefficients for one mode.
    pub fn mode_coeffs(&self, mode_idx: usize) -> &[Complex64] {
        let nc = self.node_count();
        &self.coeffs[mode_idx * nc..(mode_idx + 1) * nc]
    }

    /// Real degrees of freedom: (re, im) per free node per mode.
    pub fn dof_count(&self) -> usize {
        2 * self.modes.len() * (self.node_count() - self.first_free_node())
    }

    pub fn flatten_free(&self) -> Vec<f64> {
        let j0 = self.first_free_node();
        let mut out = Vec::with_capacity(self.dof_count());
        for mi in 0..self.modes.len() {
            for j in j0..self.node_count() {
                let c = self.coeff(mi, j);
                out.push(c.re);
                out.push(c.im);
            }
        }
        out
    }

    pub fn unflatten_free(&mut self, dofs: &[f64]) {
        assert_eq!(dofs.len(), self.dof_count(), "dof vector length mismatch");
        let j0 = self.first_free_node();
        let nc = self.node_count();
        let mut it = dofs.iter();
        for mi in 0..self.modes.len() {
            for j in j0..nc {
                let re = *it.next().unwrap();
                let im = *it.next().unwrap();
                self.coeffs[mi * nc + j] = Complex64::new(re, im);
            }
        }
    }

    /// Samples of u(x_j, ·) over one period; real by construction.
    pub fn synthesize(&self, node: usize, grid: &TimeGrid) -> Vec<f64> {
        self.synthesize_weighted(node, grid, |_k| Complex64::new(1.0, 0.0))
    }

    /// Samples of u_t(x_j, ·): the k-th mode carries the factor iωk.
    pub fn synthesize_time_derivative(&self, node: usize, grid: &TimeGrid) -> Vec<f64> {
        let omega = grid.omega();
        self.synthesize_weighted(node, grid, |k| Complex64::new(0.0, omega * k as f64))
    }

    fn synthesize_weighted<F>(&self, node: usize, grid: &TimeGrid, weight: F) -> Vec<f64>
    where
        F: Fn(usize) -> Complex64,
    {
        let m = grid.samples();
        let mut out = vec![0.0; m];
        for (mi, &k) in self.modes.iter().enumerate() {
            let g = self.coeff(mi, node) * weight(k);
            if g.norm_sqr() == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                let ph = grid.phase(k as i64, j);
                // g e^{iωkt} + conj(g) e^{−iωkt} = 2 Re(g e^{iωkt})
                *o += 2.0 * (g.re * ph.re - g.im * ph.im);
            }
        }
        out
    }
}

/// Discrete Fourier coefficients v̂_k = (1/M) Σ_j v(t_j) e^{−iωk t_j} for
/// k = 0..=M/2; for real input the negative coefficients are conjugates.
pub fn analyze(samples: &[f64], grid: &TimeGrid) -> Vec<Complex64> {
    let m = grid.samples();
    assert_eq!(samples.len(), m, "sample count must match the grid");
    (0..=m / 2)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &v) in samples.iter().enumerate() {
                acc += v * grid.phase(-(k as i64), j);
            }
            acc / m as f64
        })
        .collect()
}

/// Zeroes every mode with k > k_prime. Idempotent and nonexpansive in any
/// coefficient norm.
pub fn project_sk(p: &DiscreteProfile, k_prime: usize) -> DiscreteProfile {
    assert!(k_prime % 2 == 1, "projection cutoff must be odd");
    let mut out = p.clone();
    let nc = p.node_count();
    for (mi, &k) in p.modes.iter().enumerate() {
        if k > k_prime {
            for j in 0..nc {
                out.coeffs[mi * nc + j] = Complex64::new(0.0, 0.0);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Element quadrature
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadKind {
    /// ∫ u² r dr
    MassR,
    /// ∫ u′² r dr
    StiffnessR,
    /// ∫ u²/r dr
    InverseR,
    /// ∫ u² dx
    Mass1,
    /// ∫ u′² dx
    Stiffness1,
}

/// Symmetric 2×2 element matrix E with value = (cL, cR) E (cL, cR)ᵀ, basis
/// (φL, φR) the linear hats of element [xl, xr]. All entries are exact:
/// 3-point Gauss covers the cubic r-weighted integrands, and InverseR has a
/// logarithmic closed form. On the first radial element (xl = 0) the
/// InverseR integrand is only finite against functions vanishing at 0, so
/// the φL entries are unusable there; they are set to NaN and the caller
/// must pair the element with cL = 0.
pub fn element_matrix(kind: QuadKind, xl: f64, xr: f64) -> Result<[[f64; 2]; 2], GridError> {
    let h = xr - xl;
    if h.is_nan() || h <= 0.0 || xl < 0.0 {
        return Err(GridError::DegenerateElement {
            left: xl,
            right: xr,
        });
    }
    let m = match kind {
        QuadKind::Mass1 => [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]],
        QuadKind::Stiffness1 => [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]],
        QuadKind::StiffnessR => {
            // φ′ = ∓1/h, weight r: ∫ r dr = (xr² − xl²)/2.
            let w = (xr * xr - xl * xl) / (2.0 * h * h);
            [[w, -w], [-w, w]]
        }
        QuadKind::MassR => gauss3_pairs(xl, xr, |x| x),
        QuadKind::InverseR => {
            if xl == 0.0 {
                // ∫₀ʰ (x/h)² / x dx = h/2 for the right hat; the left hat
                // pairs only with zero boundary data.
                [[f64::NAN, f64::NAN], [f64::NAN, h / 2.0]]
            } else {
                inverse_r_closed_form(xl, xr)
            }
        }
    };
    Ok(m)
}

/// Quadrature of one element against given real local coefficients.
pub fn element_quadrature(
    kind: QuadKind,
    xl: f64,
    xr: f64,
    c_left: f64,
    c_right: f64,
) -> Result<f64, GridError> {
    let e = element_matrix(kind, xl, xr)?;
    if kind == QuadKind::InverseR && xl == 0.0 {
        assert!(
            c_left == 0.0,
            "1/r quadrature on the first element requires u(0) = 0"
        );
        return Ok(e[1][1] * c_right * c_right);
    }
    Ok(c_left * (e[0][0] * c_left + e[0][1] * c_right)
        + c_right * (e[1][0] * c_left + e[1][1] * c_right))
}

/// ∫ φ_a φ_b w(x) dx by 3-point Gauss, exact through degree-5 integrands.
fn gauss3_pairs(xl: f64, xr: f64, w: impl Fn(f64) -> f64) -> [[f64; 2]; 2] {
    const GP: f64 = 0.7745966692414834; // sqrt(3/5)
    const W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let h = xr - xl;
    let mid = 0.5 * (xl + xr);
    let half = 0.5 * h;
    let mut m = [[0.0; 2]; 2];
    for (i, &xi) in [-GP, 0.0, GP].iter().enumerate() {
        let x = mid + half * xi;
        let pl = (xr - x) / h;
        let pr = (x - xl) / h;
        let wt = W[i] * half * w(x);
        m[0][0] += wt * pl * pl;
        m[0][1] += wt * pl * pr;
        m[1][1] += wt * pr * pr;
    }
    m[1][0] = m[0][1];
    m
}

/// ∫ₓₗ^ₓᵣ φ_a φ_b / x dx with φL = (xr−x)/h, φR = (x−xl)/h:
/// expanding each product as (quadratic)/x gives polynomial + (const)/x
/// terms, integrated exactly with ln(xr/xl).
fn inverse_r_closed_form(xl: f64, xr: f64) -> [[f64; 2]; 2] {
    let h = xr - xl;
    let lg = (xr / xl).ln();
    // For u = a + b x: ∫ u²/x = a² ln(xr/xl) + 2ab h + b² (xr²−xl²)/2.
    // φL: a = xr/h, b = −1/h. φR: a = −xl/h, b = 1/h.
    let quad = |a: f64, b: f64, a2: f64, b2: f64| {
        a * a2 * lg + (a * b2 + a2 * b) * h + b * b2 * (xr * xr - xl * xl) / 2.0
    };
    let (al, bl) = (xr / h, -1.0 / h);
    let (ar, br) = (-xl / h, 1.0 / h);
    let ll = quad(al, bl, al, bl);
    let lr = quad(al, bl, ar, br);
    let rr = quad(ar, br, ar, br);
    [[ll, lr], [lr, rr]]
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ProfileJson {
    geometry: Geometry,
    r_core: f64,
    n_elems: usize,
    modes: Vec<usize>,
    /// coeffs[mode][node] = [re, im]
    coeffs: Vec<Vec<[f64; 2]>>,
}

impl DiscreteProfile {
    pub fn to_json(&self) -> String {
        let nc = self.node_count();
        let coeffs = (0..self.modes.len())
            .map(|mi| {
                (0..nc)
                    .map(|j| {
                        let c = self.coeff(mi, j);
                        [c.re, c.im]
                    })
                    .collect()
            })
            .collect();
        serde_json::to_string_pretty(&ProfileJson {
            geometry: self.geometry,
            r_core: self.r_core,
            n_elems: self.n_elems,
            modes: self.modes.clone(),
            coeffs,
        })
        .expect("profile serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let pj: ProfileJson = serde_json::from_str(s)?;
        let mut p = DiscreteProfile {
            geometry: pj.geometry,
            r_core: pj.r_core,
            n_elems: pj.n_elems,
            modes: pj.modes,
            coeffs: Vec::new(),
        };
        let nc = p.node_count();
        p.coeffs = vec![Complex64::new(0.0, 0.0); p.modes.len() * nc];
        for (mi, row) in pj.coeffs.iter().enumerate() {
            for (j, &[re, im]) in row.iter().enumerate() {
                p.coeffs[mi * nc + j] = Complex64::new(re, im);
            }
        }
        Ok(p)
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_profile(geometry: Geometry, k_max: usize, n: usize, seed: u64) -> DiscreteProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = DiscreteProfile::zeros(geometry, 2.0, n, k_max);
        for mi in 0..p.modes.len() {
            for j in p.first_free_node()..p.node_count() {
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                p.set_coeff(mi, j, c);
            }
        }
        p
    }

    #[test]
    fn grid_rejects_bad_sample_counts() {
        assert!(matches!(
            TimeGrid::new(4.0, 64, 16),
            Err(GridError::TooFewSamples { .. })
        ));
        assert!(matches!(
            TimeGrid::new(4.0, 135, 16),
            Err(GridError::OddSampleCount { .. })
        ));
        assert!(TimeGrid::new(4.0, 136, 16).is_ok());
    }

    #[test]
    fn unit_first_mode_derivative_is_minus_two_omega_sine() {
        let grid = TimeGrid::new(4.0, 48, 5).unwrap();
        let mut p = DiscreteProfile::zeros(Geometry::Cylindrical, 2.0, 4, 5);
        p.set_coeff(0, 2, Complex64::new(1.0, 0.0));
        let ut = p.synthesize_time_derivative(2, &grid);
        let omega = grid.omega();
        for (j, &v) in ut.iter().enumerate() {
            let want = -2.0 * omega * (omega * grid.time(j)).sin();
            assert!(
                (v - want).abs() <= 1e-13,
                "sample {j}: got {v}, want {want}"
            );
        }
        // Other nodes hold no data.
        assert!(p
            .synthesize_time_derivative(1, &grid)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn derivative_satisfies_parseval() {
        let grid = TimeGrid::new(4.0, 96, 7).unwrap();
        let p = random_profile(Geometry::Cylindrical, 7, 6, 11);
        let omega = grid.omega();
        for node in 1..p.node_count() {
            let ut = p.synthesize_time_derivative(node, &grid);
            let lhs = ut.iter().map(|v| v * v).sum::<f64>() / grid.samples() as f64;
            let rhs: f64 = p
                .modes
                .iter()
                .enumerate()
                .map(|(mi, &k)| {
                    2.0 * omega * omega * (k * k) as f64 * p.coeff(mi, node).norm_sqr()
                })
                .sum();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * rhs.max(1.0),
                "Parseval at node {node}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn analyze_inverts_synthesis_on_bandlimited_input() {
        let grid = TimeGrid::new(4.0, 96, 7).unwrap();
        let p = random_profile(Geometry::Slab, 7, 6, 3);
        let node = 2;
        let u = p.synthesize(node, &grid);
        let coeffs = analyze(&u, &grid);
        for (mi, &k) in p.modes.iter().enumerate() {
            let diff = (coeffs[k] - p.coeff(mi, node)).norm();
            assert!(diff <= 1e-12, "mode {k} mismatch {diff}");
        }
        for k in (0..=grid.samples() / 2).filter(|k| k % 2 == 0 || *k > 7) {
            assert!(
                coeffs[k].norm() <= 1e-12,
                "mode {k} should be empty, got {}",
                coeffs[k]
            );
        }
    }

    #[test]
    fn analyze_cosine_gives_half() {
        let grid = TimeGrid::new(4.0, 32, 3).unwrap();
        let omega = grid.omega();
        let samples: Vec<f64> = (0..32).map(|j| (omega * grid.time(j)).cos()).collect();
        let coeffs = analyze(&samples, &grid);
        assert!((coeffs[1] - Complex64::new(0.5, 0.0)).norm() <= 1e-13);
        assert!(coeffs[0].norm() <= 1e-13);
        assert!(coeffs[2].norm() <= 1e-13);
    }

    #[test]
    fn aliasing_folds_high_modes() {
        // Mode M/2 + 1 is indistinguishable from mode M/2 − 1 on the grid;
        // callers keep K below M/4 so the fold never reaches stored modes.
        let grid = TimeGrid::new(4.0, 16, 1).unwrap();
        let omega = grid.omega();
        let samples: Vec<f64> = (0..16)
            .map(|j| (9.0 * omega * grid.time(j)).cos())
            .collect();
        let coeffs = analyze(&samples, &grid);
        assert!((coeffs[7] - Complex64::new(0.5, 0.0)).norm() <= 1e-13);
    }

    #[test]
    fn projection_is_identity_at_full_cutoff_and_truncates_below() {
        let p = random_profile(Geometry::Cylindrical, 7, 5, 21);
        let same = project_sk(&p, 7);
        assert_eq!(same, p);
        let only1 = project_sk(&p, 1);
        for (mi, &k) in p.modes.iter().enumerate() {
            for j in 0..p.node_count() {
                let c = only1.coeff(mi, j);
                if k == 1 {
                    assert_eq!(c, p.coeff(mi, j));
                } else {
                    assert_eq!(c.norm(), 0.0);
                }
            }
        }
        // Idempotent.
        assert_eq!(project_sk(&only1, 1), only1);
    }

    #[test]
    fn projection_never_expands_the_norm() {
        for seed in 0..100 {
            let p = random_profile(Geometry::Slab, 9, 4, seed);
            let norm = |q: &DiscreteProfile| -> f64 {
                (0..q.modes.len())
                    .flat_map(|mi| (0..q.node_count()).map(move |j| (mi, j)))
                    .map(|(mi, j)| q.coeff(mi, j).norm_sqr())
                    .sum()
            };
            let cut = project_sk(&p, 3);
            assert!(norm(&cut) <= norm(&p) + 1e-15);
        }
    }

    #[test]
    fn hat_mass_on_first_element() {
        let h = 0.35;
        let v = element_quadrature(QuadKind::MassR, 0.0, h, 0.0, 1.0).unwrap();
        assert!(
            (v - h * h / 4.0).abs() <= 1e-15,
            "∫ (x/h)² x dx = h²/4: got {v}"
        );
    }

    #[test]
    fn inverse_r_of_unit_on_doubling_element_is_ln2() {
        let h = 0.425;
        let v = element_quadrature(QuadKind::InverseR, h, 2.0 * h, 1.0, 1.0).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() <= 1e-14, "got {v}");
    }

    #[test]
    fn first_element_inverse_r_requires_zero_boundary() {
        let v = element_quadrature(QuadKind::InverseR, 0.0, 0.5, 0.0, 2.0).unwrap();
        // ∫₀ʰ (2x/h)²/x dx = 2h with h = 1/2.
        assert!((v - 1.0).abs() <= 1e-15, "got {v}");
    }

    #[test]
    fn quadrature_matches_midpoint_oracle() {
        let (xl, xr) = (0.3, 0.7);
        let (cl, cr) = (0.4, -1.1);
        let panels = 1_000_000;
        let h = (xr - xl) / panels as f64;
        let u = |x: f64| (cl * (xr - x) + cr * (x - xl)) / (xr - xl);
        let du = (cr - cl) / (xr - xl);
        let mut mass_r = 0.0;
        let mut stiff_r = 0.0;
        let mut inv_r = 0.0;
        for i in 0..panels {
            let x = xl + (i as f64 + 0.5) * h;
            mass_r += u(x) * u(x) * x * h;
            stiff_r += du * du * x * h;
            inv_r += u(x) * u(x) / x * h;
        }
        let cases = [
            (QuadKind::MassR, mass_r),
            (QuadKind::StiffnessR, stiff_r),
            (QuadKind::InverseR, inv_r),
        ];
        for (kind, oracle) in cases {
            let v = element_quadrature(kind, xl, xr, cl, cr).unwrap();
            assert!(
                (v - oracle).abs() <= 1e-10 * oracle.abs().max(1.0),
                "{kind:?}: exact {v} vs midpoint {oracle}"
            );
        }
    }

    #[test]
    fn slab_matrices_are_the_classical_ones() {
        let h = 0.25;
        let m = element_matrix(QuadKind::Mass1, 1.0, 1.0 + h).unwrap();
        assert!((m[0][0] - h / 3.0).abs() < 1e-16);
        assert!((m[0][1] - h / 6.0).abs() < 1e-16);
        let s = element_matrix(QuadKind::Stiffness1, 1.0, 1.0 + h).unwrap();
        assert!((s[0][0] - 4.0).abs() < 1e-12);
        assert!((s[0][1] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_elements_are_rejected() {
        assert!(matches!(
            element_matrix(QuadKind::Mass1, 1.0, 1.0),
            Err(GridError::DegenerateElement { .. })
        ));
        assert!(matches!(
            element_quadrature(QuadKind::MassR, 0.5, 0.2, 1.0, 1.0),
            Err(GridError::DegenerateElement { .. })
        ));
    }

    #[test]
    fn quartic_trapezoid_matches_convolution_of_coefficients() {
        // (1/M) Σ u_t⁴ must equal the exact fourfold coefficient sum: the
        // integrand has modes ≤ 4K < M, so the trapezoid rule is exact.
        let k_max = 5;
        let grid = TimeGrid::new(4.0, 48, k_max).unwrap();
        let p = random_profile(Geometry::Cylindrical, k_max, 4, 5);
        let node = 3;
        let ut = p.synthesize_time_derivative(node, &grid);
        let lhs = ut.iter().map(|v| v.powi(4)).sum::<f64>() / grid.samples() as f64;

        // Signed coefficient list of u_t: g_k = iωk f_k, g_{−k} = conj(g_k).
        let omega = grid.omega();
        let mut g: Vec<(i64, Complex64)> = Vec::new();
        for (mi, &k) in p.modes.iter().enumerate() {
            let gk = Complex64::new(0.0, omega * k as f64) * p.coeff(mi, node);
            g.push((k as i64, gk));
            g.push((-(k as i64), gk.conj()));
        }
        let mut rhs = Complex64::new(0.0, 0.0);
        for &(k1, g1) in &g {
            for &(k2, g2) in &g {
                for &(k3, g3) in &g {
                    for &(k4, g4) in &g {
                        if k1 + k2 + k3 + k4 == 0 {
                            rhs += g1 * g2 * g3 * g4;
                        }
                    }
                }
            }
        }
        assert!(rhs.im.abs() <= 1e-12 * rhs.re.abs());
        assert!(
            (lhs - rhs.re).abs() <= 1e-12 * rhs.re.abs().max(1.0),
            "trapezoid {lhs} vs convolution {}",
            rhs.re
        );
    }

    #[test]
    fn profile_json_round_trip() {
        let p = random_profile(Geometry::Cylindrical, 5, 4, 77);
        let s = p.to_json();
        let back = DiscreteProfile::from_json(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn dof_round_trip_and_boundary_pinning() {
        let mut p = random_profile(Geometry::Cylindrical, 5, 4, 13);
        let dofs = p.flatten_free();
        assert_eq!(dofs.len(), p.dof_count());
        let mut q = DiscreteProfile::zeros(Geometry::Cylindrical, 2.0, 4, 5);
        q.unflatten_free(&dofs);
        assert_eq!(q, p);
        // Radial dof vector never touches node 0.
        assert_eq!(p.coeff(0, 0).norm(), 0.0);
        p.unflatten_free(&vec![0.5; p.dof_count()]);
        assert_eq!(p.coeff(1, 0).norm(), 0.0);
    }
}
