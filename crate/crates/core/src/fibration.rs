//! Invariants of the T²-symmetric special Lagrangian torus fibration
//! f(φ₁, φ₂, u, t₁, t₂) = (t₁, t₂, Im u): the period matrix, the metric on
//! the fibre and on the moduli space, the fibre volume, the variational
//! harmonic coframe, and the semi-flat volume function
//!
//! ```text
//!   Φ = det(∫₀^κ W⁻¹ dx) / ∫₀^κ det W⁻¹ dx .
//! ```
//!
//! All quadrature is the trapezoidal rule on the periodic x-grid, which is
//! spectrally accurate for smooth periodic integrands. The fibre angles
//! φ₁, φ₂ have period 2π; the L² Gram oracle divides by the (2π)² angular
//! volume so it matches the McLean matrix G = ∫ g⁻¹ dx written without the
//! angular factor, and the fibre volume is reported both per unit angular
//! volume (= κ) and raw.

use serde::Serialize;
use thiserror::Error;

use crate::ansatz::{self, AnsatzError, AnsatzState, IDX_PHI, IDX_X, MODEL_DIM};
use crate::linalg::{det2, det3, inv2, inv3};

#[derive(Debug, Error)]
pub enum FibrationError {
    #[error("fibration invariants require the 2-torus model (state has m = {0})")]
    RequiresTwoTorus(usize),
    #[error("singular W⁻¹ at x-node {node}")]
    Singular { node: usize },
    #[error("singular period matrix")]
    SingularPeriods,
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
}

fn require_m2(state: &AnsatzState) -> Result<(), FibrationError> {
    if state.m != 2 {
        return Err(FibrationError::RequiresTwoTorus(state.m));
    }
    Ok(())
}

/// Nodes of the x-circle at the y row nearest the requested coordinate.
fn fiber_nodes(state: &AnsatzState, y: f64) -> (usize, Vec<usize>) {
    let iy = state.grid.nearest_y_index(y);
    let nodes = (0..state.grid.nx).map(|ix| state.grid.idx(ix, iy)).collect();
    (iy, nodes)
}

/// Period matrix of the fibration in the harmonic coframe Ξ against the
/// cycle basis {x=φ₂=0}, {x=φ₁=0}, {φ₁=φ₂=0}: identity 2×2 block on top,
/// bottom row (∫2Im α₁ dx, ∫2Im α₂ dx, ∫det W⁻¹ dx).
pub fn period_matrix(state: &AnsatzState, y: f64) -> Result<[[f64; 3]; 3], FibrationError> {
    require_m2(state)?;
    let (_, nodes) = fiber_nodes(state, y);
    let dx = state.grid.dx();
    let mut p = [[0.0; 3]; 3];
    p[0][0] = 1.0;
    p[1][1] = 1.0;
    for &node in &nodes {
        p[2][0] += 2.0 * state.alpha[0][node].im * dx;
        p[2][1] += 2.0 * state.alpha[1][node].im * dx;
        p[2][2] += state.det_winv_at(node) * dx;
    }
    Ok(p)
}

/// Period 1-forms λ_j = P_{j1} dt₁ + P_{j2} dt₂ + P_{j3} dy on the base;
/// rows of the period matrix, generating the lattice Λ ⊂ T*B.
pub fn period_one_forms(state: &AnsatzState, y: f64) -> Result<[[f64; 3]; 3], FibrationError> {
    period_matrix(state, y)
}

/// Fibre metric in the frame (η₁, η₂, ζ): block diagonal with W on the
/// torus directions and det W on ζ, sampled along the x-circle.
#[derive(Debug, Clone, Serialize)]
pub struct FiberMetricBlocks {
    pub w11: Vec<f64>,
    pub w12: Vec<f64>,
    pub w22: Vec<f64>,
    pub det_w: Vec<f64>,
}

pub fn fiber_metric(state: &AnsatzState, y: f64) -> Result<FiberMetricBlocks, FibrationError> {
    require_m2(state)?;
    let (_, nodes) = fiber_nodes(state, y);
    let mut out = FiberMetricBlocks {
        w11: Vec::with_capacity(nodes.len()),
        w12: Vec::with_capacity(nodes.len()),
        w22: Vec::with_capacity(nodes.len()),
        det_w: Vec::with_capacity(nodes.len()),
    };
    for &node in &nodes {
        let [a, b, c] = state.winv_at(node);
        let w = inv2(&[[a, b], [b, c]]).ok_or(FibrationError::Singular { node })?;
        out.w11.push(w[0][0]);
        out.w12.push(w[0][1]);
        out.w22.push(w[1][1]);
        out.det_w.push(1.0 / (a * c - b * b));
    }
    Ok(out)
}

/// McLean metric G = ∫₀^κ g⁻¹ dx: blockwise quadrature of W⁻¹ and
/// det W⁻¹ along the fibre.
pub fn mclean_metric(state: &AnsatzState, y: f64) -> Result<[[f64; 3]; 3], FibrationError> {
    require_m2(state)?;
    let (_, nodes) = fiber_nodes(state, y);
    let dx = state.grid.dx();
    let mut g = [[0.0; 3]; 3];
    for &node in &nodes {
        let [a, b, c] = state.winv_at(node);
        g[0][0] += a * dx;
        g[0][1] += b * dx;
        g[1][1] += c * dx;
        g[2][2] += (a * c - b * b) * dx;
    }
    g[1][0] = g[0][1];
    Ok(g)
}

/// Semi-flat volume Φ = det(∫ W⁻¹ dx) / ∫ det W⁻¹ dx.
pub fn semiflat_volume(state: &AnsatzState, y: f64) -> Result<f64, FibrationError> {
    require_m2(state)?;
    let g = mclean_metric(state, y)?;
    let num = det2(&[[g[0][0], g[0][1]], [g[1][0], g[1][1]]]);
    let den = g[2][2];
    if den == 0.0 {
        return Err(FibrationError::SingularPeriods);
    }
    Ok(num / den)
}

/// Fibre volume: the special Lagrangian calibration integrates Ω over the
/// fibre frame (η₁, η₂, ∂/∂x). `per_unit_angle` divides out the (2π)²
/// angular volume and equals κ for any valid state; `raw` keeps it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FiberVolume {
    pub per_unit_angle: f64,
    pub raw: f64,
    /// sup of the imaginary part of the calibration along the fibre —
    /// a diagnostic for Im Ω|_F = 0.
    pub imaginary_sup: f64,
}

pub fn fiber_volume(state: &AnsatzState, y: f64) -> Result<FiberVolume, FibrationError> {
    require_m2(state)?;
    let (_, nodes) = fiber_nodes(state, y);
    let mut integrand = Vec::with_capacity(nodes.len());
    let mut imag_sup = 0.0f64;
    for &node in &nodes {
        let (big_omega, _) = ansatz::assemble_point_forms(state, node)?;
        let mut eta1 = vec![0.0; MODEL_DIM];
        eta1[IDX_PHI[0] - 1] = 1.0;
        let mut eta2 = vec![0.0; MODEL_DIM];
        eta2[IDX_PHI[1] - 1] = 1.0;
        let mut ddx = vec![0.0; MODEL_DIM];
        ddx[IDX_X - 1] = 1.0;
        let value = big_omega.eval(&[&eta1, &eta2, &ddx]).map_err(AnsatzError::from)?;
        imag_sup = imag_sup.max(value.im.abs());
        integrand.push(value.re);
    }
    let per_unit_angle = state.grid.integrate_x(&integrand);
    let angular = (2.0 * std::f64::consts::PI).powi(2);
    Ok(FiberVolume { per_unit_angle, raw: per_unit_angle * angular, imaginary_sup: imag_sup })
}

/// The variational harmonic coframe along the fibre:
/// Ξ_k = −(2 Im α_k dx + dφ_k) for k = 1, 2 and Ξ₃ = −det W⁻¹ dx,
/// stored as coefficients over (dx, dφ₁, dφ₂) per x-node.
#[derive(Debug, Clone, Serialize)]
pub struct HarmonicFrame {
    /// dx coefficient of Ξ_k per x-node.
    pub xi_dx: [Vec<f64>; 3],
    /// constant dφ coefficients of Ξ_k.
    pub xi_dphi: [[f64; 2]; 3],
}

pub fn harmonic_frame(state: &AnsatzState, y: f64) -> Result<HarmonicFrame, FibrationError> {
    require_m2(state)?;
    let (_, nodes) = fiber_nodes(state, y);
    let mut xi_dx = [Vec::new(), Vec::new(), Vec::new()];
    for &node in &nodes {
        xi_dx[0].push(-2.0 * state.alpha[0][node].im);
        xi_dx[1].push(-2.0 * state.alpha[1][node].im);
        xi_dx[2].push(-state.det_winv_at(node));
    }
    Ok(HarmonicFrame { xi_dx, xi_dphi: [[-1.0, 0.0], [0.0, -1.0], [0.0, 0.0]] })
}

/// Coordinate metric of the fibre 3-torus (x, φ₁, φ₂) at one x-node:
/// the lowered-index entries are w_{jk} on the angles, 2 Im α_k w_{kj}
/// crossing, and det W⁻¹ + 4 Im α_j Im α_k w_{jk} for |∂/∂x|².
fn coordinate_metric(state: &AnsatzState, node: usize) -> Result<[[f64; 3]; 3], FibrationError> {
    let [a, b, c] = state.winv_at(node);
    let w = inv2(&[[a, b], [b, c]]).ok_or(FibrationError::Singular { node })?;
    let im = [state.alpha[0][node].im, state.alpha[1][node].im];
    let mut g = [[0.0; 3]; 3];
    let det_winv = a * c - b * b;
    g[0][0] = det_winv
        + 4.0
            * (im[0] * (w[0][0] * im[0] + w[0][1] * im[1])
                + im[1] * (w[1][0] * im[0] + w[1][1] * im[1]));
    for j in 0..2 {
        let cross = 2.0 * (im[0] * w[0][j] + im[1] * w[1][j]);
        g[0][1 + j] = cross;
        g[1 + j][0] = cross;
        for k in 0..2 {
            g[1 + j][1 + k] = w[j][k];
        }
    }
    Ok(g)
}

/// Numerical coclosedness of the harmonic coframe: d⋆Ξ_k reduces to the
/// x-derivative of √det(g)·(g⁻¹Ξ_k)_x, computed spectrally around the
/// fibre circle. Closedness is structural (the coefficients depend on x
/// only and pair with dx or constant dφ).
#[derive(Debug, Clone, Serialize)]
pub struct CoclosedReport {
    pub residuals: [f64; 3],
    pub ok: bool,
}

pub fn coclosed_check(
    state: &AnsatzState,
    y: f64,
    frame: &HarmonicFrame,
    tol: f64,
) -> Result<CoclosedReport, FibrationError> {
    require_m2(state)?;
    let (_, nodes) = fiber_nodes(state, y);
    let nx = nodes.len();
    let mut sharp_x = [vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]];
    for (pos, &node) in nodes.iter().enumerate() {
        let g = coordinate_metric(state, node)?;
        let ginv = inv3(&g).ok_or(FibrationError::Singular { node })?;
        let sqrt_det = det3(&g).sqrt();
        for k in 0..3 {
            let xi = [frame.xi_dx[k][pos], frame.xi_dphi[k][0], frame.xi_dphi[k][1]];
            let mut vx = 0.0;
            for (col, &comp) in xi.iter().enumerate() {
                vx += ginv[0][col] * comp;
            }
            sharp_x[k][pos] = sqrt_det * vx;
        }
    }
    // spectral d/dx around the circle
    let ops = circle_ops(state);
    let mut residuals = [0.0; 3];
    for k in 0..3 {
        let d = ops.ddx_row(&sharp_x[k]);
        residuals[k] = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
    }
    let ok = residuals.iter().all(|&r| r <= tol);
    Ok(CoclosedReport { residuals, ok })
}

fn circle_ops(state: &AnsatzState) -> CircleOps {
    CircleOps::new(state.grid.nx, state.grid.kappa)
}

/// One-row spectral differentiation helper for fibre circles.
pub struct CircleOps {
    nx: usize,
    kappa: f64,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl CircleOps {
    pub fn new(nx: usize, kappa: f64) -> Self {
        let mut planner = rustfft::FftPlanner::new();
        Self {
            nx,
            kappa,
            fwd: planner.plan_fft_forward(nx),
            inv: planner.plan_fft_inverse(nx),
        }
    }

    pub fn ddx_row(&self, row: &[f64]) -> Vec<f64> {
        use num_complex::Complex64;
        let mut buf: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        let n = self.nx as i64;
        for (m, v) in buf.iter_mut().enumerate() {
            let mode = {
                let m = m as i64;
                if 2 * m < n {
                    m
                } else if 2 * m == n {
                    0
                } else {
                    m - n
                }
            };
            let k = 2.0 * std::f64::consts::PI * mode as f64 / self.kappa;
            *v *= Complex64::new(0.0, k);
        }
        self.inv.process(&mut buf);
        buf.iter().map(|v| v.re / self.nx as f64).collect()
    }
}

/// Full per-base-point geometry dump for the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct FibrationGeometry {
    pub base_point: (f64, f64, f64),
    pub period_matrix: [[f64; 3]; 3],
    pub fiber_metric: FiberMetricBlocks,
    pub mclean_metric: [[f64; 3]; 3],
    pub phi: f64,
    pub fiber_volume: FiberVolume,
    /// |Φ − det((P⁻¹)ᵀ G P⁻¹)|: the dual-path agreement gap.
    pub phi_dual_path_gap: f64,
    /// sup entry gap between G and the brute-force L² Gram matrix.
    pub mclean_gram_gap: f64,
}

pub fn geometry(state: &AnsatzState, y: f64) -> Result<FibrationGeometry, FibrationError> {
    require_m2(state)?;
    let iy = state.grid.nearest_y_index(y);
    let p = period_matrix(state, y)?;
    let g = mclean_metric(state, y)?;
    let phi = semiflat_volume(state, y)?;
    let vol = fiber_volume(state, y)?;
    let phi_oracle = oracle::semiflat_from_periods(&p, &g)?;
    let gram = oracle::mclean_gram(state, y)?;
    let mut gram_gap = 0.0f64;
    for r in 0..3 {
        for c in 0..3 {
            gram_gap = gram_gap.max((g[r][c] - gram[r][c]).abs());
        }
    }
    Ok(FibrationGeometry {
        base_point: (state.t[0], state.t[1], state.grid.y(iy)),
        period_matrix: p,
        fiber_metric: fiber_metric(state, y)?,
        mclean_metric: g,
        phi,
        fiber_volume: vol,
        phi_dual_path_gap: (phi - phi_oracle).abs(),
        mclean_gram_gap: gram_gap,
    })
}

/// Independent brute-force reference computations. These deliberately take
/// the long way around (assembled forms, coordinate metrics, explicit
/// L² pairings) so they can sit on the other side of every dual-route
/// check.
pub mod oracle {
    use super::*;
    use crate::linalg::solve;
    use crate::AltForm;

    /// McLean matrix as the L² Gram matrix of the harmonic coframe,
    /// computed through the coordinate metric of the fibre torus and
    /// normalised by the (2π)² angular volume.
    pub fn mclean_gram(state: &AnsatzState, y: f64) -> Result<[[f64; 3]; 3], FibrationError> {
        require_m2(state)?;
        let (_, nodes) = fiber_nodes(state, y);
        let frame = harmonic_frame(state, y)?;
        let dx = state.grid.dx();
        let mut g_out = [[0.0; 3]; 3];
        for (pos, &node) in nodes.iter().enumerate() {
            let g = coordinate_metric(state, node)?;
            let ginv = inv3(&g).ok_or(FibrationError::Singular { node })?;
            let sqrt_det = det3(&g).sqrt();
            let xi = |k: usize| -> [f64; 3] {
                [frame.xi_dx[k][pos], frame.xi_dphi[k][0], frame.xi_dphi[k][1]]
            };
            for j in 0..3 {
                for k in 0..3 {
                    let (xj, xk) = (xi(j), xi(k));
                    let mut inner = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            inner += xj[a] * ginv[a][b] * xk[b];
                        }
                    }
                    g_out[j][k] += inner * sqrt_det * dx;
                }
            }
        }
        Ok(g_out)
    }

    /// Definitional route to the semi-flat volume: renormalise the coframe
    /// to identity periods, Ξ′ = Ξ·P⁻¹, G′ = (P⁻¹)ᵀ G P⁻¹, Φ = det G′.
    pub fn semiflat_from_periods(
        p: &[[f64; 3]; 3],
        g: &[[f64; 3]; 3],
    ) -> Result<f64, FibrationError> {
        let pinv = inv3(p).ok_or(FibrationError::SingularPeriods)?;
        let mut gp = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                for k in 0..3 {
                    gp[r][c] += g[r][k] * pinv[k][c];
                }
            }
        }
        let mut gprime = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                for k in 0..3 {
                    gprime[r][c] += pinv[k][r] * gp[k][c];
                }
            }
        }
        Ok(det3(&gprime))
    }

    /// Fibre metric recomputed from the assembled forms: g̃_ab = ω(E_a, J E_b)
    /// in the frame (η₁, η₂, ∂/∂x) with J recovered from the type-(1,0)
    /// declaration, then frame-changed to (η₁, η₂, ζ) with
    /// ζ = det W (∂/∂x − 2 Im α_k η_k).
    #[derive(Debug, Clone)]
    pub struct FiberMetricOracle {
        /// per x-node 3×3 matrix in the frame (η₁, η₂, ∂/∂x)
        pub g_tilde: Vec<[[f64; 3]; 3]>,
        /// per x-node 3×3 matrix in the frame (η₁, η₂, ζ)
        pub g_framed: Vec<[[f64; 3]; 3]>,
    }

    pub fn fiber_metric_from_forms(
        state: &AnsatzState,
        y: f64,
    ) -> Result<FiberMetricOracle, FibrationError> {
        require_m2(state)?;
        let (_, nodes) = fiber_nodes(state, y);
        let mut g_tilde = Vec::with_capacity(nodes.len());
        let mut g_framed = Vec::with_capacity(nodes.len());
        for &node in &nodes {
            let j = ansatz::implied_complex_structure(state, node)?;
            let (_, omega) = ansatz::assemble_point_forms(state, node)?;
            let frame: [Vec<f64>; 3] = {
                let mut eta1 = vec![0.0; MODEL_DIM];
                eta1[IDX_PHI[0] - 1] = 1.0;
                let mut eta2 = vec![0.0; MODEL_DIM];
                eta2[IDX_PHI[1] - 1] = 1.0;
                let mut ddx = vec![0.0; MODEL_DIM];
                ddx[IDX_X - 1] = 1.0;
                [eta1, eta2, ddx]
            };
            let apply_j = |v: &[f64]| -> Vec<f64> {
                (0..MODEL_DIM)
                    .map(|r| (0..MODEL_DIM).map(|c| j[r * MODEL_DIM + c] * v[c]).sum())
                    .collect()
            };
            let mut gt = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    let jb = apply_j(&frame[b]);
                    gt[a][b] = omega
                        .eval(&[&frame[a], &jb])
                        .map_err(AnsatzError::from)?
                        .re;
                }
            }
            // change of frame: ζ = det W (∂x − 2 Im α_k η_k)
            let [a, b, c] = state.winv_at(node);
            let det_w = 1.0 / (a * c - b * b);
            let im = [state.alpha[0][node].im, state.alpha[1][node].im];
            let s = [
                [1.0, 0.0, -2.0 * det_w * im[0]],
                [0.0, 1.0, -2.0 * det_w * im[1]],
                [0.0, 0.0, det_w],
            ];
            let mut gf = [[0.0; 3]; 3];
            for r in 0..3 {
                for q in 0..3 {
                    let mut v = 0.0;
                    for aa in 0..3 {
                        for bb in 0..3 {
                            v += s[aa][r] * gt[aa][bb] * s[bb][q];
                        }
                    }
                    gf[r][q] = v;
                }
            }
            g_tilde.push(gt);
            g_framed.push(gf);
        }
        Ok(FiberMetricOracle { g_tilde, g_framed })
    }

    /// Fibre volume from externally supplied holomorphic forms along the
    /// fibre (used by the corrupted-normalisation negative control).
    pub fn fiber_volume_from_forms(
        forms: &[AltForm],
        kappa: f64,
    ) -> Result<f64, FibrationError> {
        let nx = forms.len();
        let mut integrand = Vec::with_capacity(nx);
        for form in forms {
            let mut eta1 = vec![0.0; MODEL_DIM];
            eta1[IDX_PHI[0] - 1] = 1.0;
            let mut eta2 = vec![0.0; MODEL_DIM];
            eta2[IDX_PHI[1] - 1] = 1.0;
            let mut ddx = vec![0.0; MODEL_DIM];
            ddx[IDX_X - 1] = 1.0;
            integrand.push(
                form.eval(&[&eta1, &eta2, &ddx]).map_err(AnsatzError::from)?.re,
            );
        }
        Ok(integrand.iter().sum::<f64>() * kappa / nx as f64)
    }

    /// Recovers J at a node and returns it; exposed so tests can corrupt
    /// it for negative controls.
    pub fn implied_structure(state: &AnsatzState, node: usize) -> Result<Vec<f64>, FibrationError> {
        Ok(ansatz::implied_complex_structure(state, node)?)
    }

    /// Solves the 3×3 system g·x = ξ; kept for parity with the coclosed
    /// computation when the inverse is ill-conditioned.
    pub fn metric_solve(g: &[[f64; 3]; 3], xi: &[f64; 3]) -> Option<[f64; 3]> {
        let flat: Vec<f64> = g.iter().flatten().copied().collect();
        let sol = solve(&flat, xi, 3, 1)?;
        Some([sol[0], sol[1], sol[2]])
    }
}
