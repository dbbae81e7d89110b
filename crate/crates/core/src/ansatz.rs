//! Data model and verifier for the structure-preserving torus-action
//! ansatz: discretised (W⁻¹, α, ρ) fields on a periodic base grid, the
//! pointwise assembly of the pair (Ω, ω) in the 6-dimensional model with
//! coordinates (x, y, t₁, t₂, φ₁, φ₂), and the residuals of the structure
//! equations.
//!
//! Assembly conventions (fixed here, used by every consumer):
//!
//! * u = x + iy, so du = dx + i dy; ∂/∂u = ½(∂x − i∂y), ∂̄ = ½(∂x + i∂y).
//! * θ_j = α_j du − ᾱ_j dū + i dφ_j  (imaginary valued; the dφ component
//!   carries the i exactly as printed).
//! * ω_r = (i/2) ρ du ∧ dū with ρ the reduced Kähler density, so that
//!   ω = π*ω_r − i θ_j ∧ dt_j is real; the flat state gives
//!   ω = dx∧dy + dφ₁∧dt₁ + dφ₂∧dt₂.
//! * Ω = −(w^{1k}dt_k − θ₁) ∧ (w^{2k}dt_k − θ₂) ∧ du with Ω_r = du.
//! * Iterated contraction ι_{η₁}ι_{η₂}Ω applies η₂ first; with that order
//!   the reduction of the flat Ω is −du.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{
    self, BaseGrid, ComplexField, GridError, ScalarField, SpectralOps,
};
use crate::linalg::{det2, inv2, solve, sym_eigenvalues};
use crate::{AltForm, C64};

/// Ambient dimension of the pointwise model.
pub const MODEL_DIM: usize = 6;
/// 1-based coordinate indices: (x, y, t₁, t₂, φ₁, φ₂).
pub const IDX_X: usize = 1;
pub const IDX_Y: usize = 2;
pub const IDX_T: [usize; 2] = [3, 4];
pub const IDX_PHI: [usize; 2] = [5, 6];

/// Coordinate labels for the debug pretty-printer.
pub const MODEL_LABELS: [&str; 6] = ["dx", "dy", "dt1", "dt2", "dph1", "dph2"];

#[derive(Debug, Error)]
pub enum AnsatzError {
    #[error("torus rank must be 1 or 2 (got {0})")]
    BadTorusRank(usize),
    #[error("field `{field}` has {got} nodes, grid has {expected}")]
    FieldLength { field: &'static str, expected: usize, got: usize },
    #[error("field `{field}` is not finite at node {node}")]
    NonFinite { field: &'static str, node: usize },
    #[error("W⁻¹ is not positive definite at node {node} (det {det}, trace {trace})")]
    NotPositiveDefinite { node: usize, det: f64, trace: f64 },
    #[error("reduced density ρ must be positive (node {node}: {value})")]
    NonPositiveDensity { node: usize, value: f64 },
    #[error("operation requires the 2-torus model (state has m = {0})")]
    RequiresTwoTorus(usize),
    #[error("node index {node} out of range ({count} nodes)")]
    NodeOutOfRange { node: usize, count: usize },
    #[error("grid mismatch between states")]
    GridMismatch,
    #[error("singular W⁻¹ at node {node}")]
    Singular { node: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Forms(#[from] crate::forms::FormsError),
}

/// Discretised ansatz data at a fixed parameter point t = (t₁, …, t_m):
/// the entries w^{ij} of W⁻¹ (stored once per unordered pair, so symmetry
/// is structural), the connection coefficients α_j, and the reduced
/// Kähler density ρ.
#[derive(Debug, Clone)]
pub struct AnsatzState {
    pub grid: BaseGrid,
    pub m: usize,
    /// `[w11]` for m = 1, `[w11, w12, w22]` for m = 2.
    pub winv: Vec<ScalarField>,
    pub alpha: Vec<ComplexField>,
    pub rho: ScalarField,
    pub t: Vec<f64>,
}

impl AnsatzState {
    pub fn new(
        grid: BaseGrid,
        m: usize,
        winv: Vec<ScalarField>,
        alpha: Vec<ComplexField>,
        rho: ScalarField,
        t: Vec<f64>,
    ) -> Result<Self, AnsatzError> {
        grid.validate()?;
        if m != 1 && m != 2 {
            return Err(AnsatzError::BadTorusRank(m));
        }
        let state = Self { grid, m, winv, alpha, rho, t };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), AnsatzError> {
        let n = self.grid.node_count();
        let expected_w = if self.m == 1 { 1 } else { 3 };
        if self.winv.len() != expected_w {
            return Err(AnsatzError::FieldLength {
                field: "winv",
                expected: expected_w,
                got: self.winv.len(),
            });
        }
        if self.alpha.len() != self.m {
            return Err(AnsatzError::FieldLength {
                field: "alpha",
                expected: self.m,
                got: self.alpha.len(),
            });
        }
        for (name, field) in self.winv_names() {
            if field.len() != n {
                return Err(AnsatzError::FieldLength { field: name, expected: n, got: field.len() });
            }
            if let Some(node) = field.iter().position(|v| !v.is_finite()) {
                return Err(AnsatzError::NonFinite { field: name, node });
            }
        }
        for (i, a) in self.alpha.iter().enumerate() {
            if a.len() != n {
                return Err(AnsatzError::FieldLength { field: "alpha", expected: n, got: a.len() });
            }
            if let Some(node) = a.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
                let _ = i;
                return Err(AnsatzError::NonFinite { field: "alpha", node });
            }
        }
        if self.rho.len() != n {
            return Err(AnsatzError::FieldLength { field: "rho", expected: n, got: self.rho.len() });
        }
        for node in 0..n {
            if !self.rho[node].is_finite() {
                return Err(AnsatzError::NonFinite { field: "rho", node });
            }
            self.spd_at(node)?;
            if self.rho[node] <= 0.0 {
                return Err(AnsatzError::NonPositiveDensity { node, value: self.rho[node] });
            }
        }
        Ok(())
    }

    fn winv_names(&self) -> Vec<(&'static str, &ScalarField)> {
        if self.m == 1 {
            vec![("w11", &self.winv[0])]
        } else {
            vec![("w11", &self.winv[0]), ("w12", &self.winv[1]), ("w22", &self.winv[2])]
        }
    }

    /// Positive definiteness of W⁻¹ at one node (det > 0, trace > 0).
    pub fn spd_at(&self, node: usize) -> Result<(), AnsatzError> {
        if self.m == 1 {
            let w = self.winv[0][node];
            if w <= 0.0 {
                return Err(AnsatzError::NotPositiveDefinite { node, det: w, trace: w });
            }
            return Ok(());
        }
        let [a, b, c] = self.winv_at(node);
        let det = a * c - b * b;
        let trace = a + c;
        if det <= 0.0 || trace <= 0.0 {
            return Err(AnsatzError::NotPositiveDefinite { node, det, trace });
        }
        Ok(())
    }

    /// (w11, w12, w22) at a node; m = 1 reports (w11, 0, 0).
    pub fn winv_at(&self, node: usize) -> [f64; 3] {
        if self.m == 1 {
            [self.winv[0][node], 0.0, 0.0]
        } else {
            [self.winv[0][node], self.winv[1][node], self.winv[2][node]]
        }
    }

    pub fn det_winv_at(&self, node: usize) -> f64 {
        if self.m == 1 {
            self.winv[0][node]
        } else {
            let [a, b, c] = self.winv_at(node);
            a * c - b * b
        }
    }

    /// Max |det W⁻¹ − ρ| over all nodes.
    pub fn constraint_residual(&self) -> f64 {
        (0..self.grid.node_count())
            .map(|n| (self.det_winv_at(n) - self.rho[n]).abs())
            .fold(0.0, f64::max)
    }

    /// Sup distance between two states over all shared fields.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self.winv.iter().zip(&other.winv) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        for (a, b) in self.alpha.iter().zip(&other.alpha) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).norm());
            }
        }
        for (x, y) in self.rho.iter().zip(&other.rho) {
            worst = worst.max((x - y).abs());
        }
        worst
    }
}

fn c(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

/// du = dx + i dy as a 1-form on the model space.
pub fn du_form() -> AltForm {
    let mut comps = vec![c(0.0, 0.0); MODEL_DIM];
    comps[IDX_X - 1] = c(1.0, 0.0);
    comps[IDX_Y - 1] = c(0.0, 1.0);
    AltForm::one_form(MODEL_DIM, &comps).expect("static")
}

/// θ_j = α_j du − ᾱ_j dū + i dφ_j at given α_j (j is 0-based here).
pub fn theta_form(j: usize, alpha_j: C64) -> AltForm {
    let mut comps = vec![c(0.0, 0.0); MODEL_DIM];
    comps[IDX_X - 1] = c(0.0, 2.0 * alpha_j.im);
    comps[IDX_Y - 1] = c(0.0, 2.0 * alpha_j.re);
    comps[IDX_PHI[j] - 1] = c(0.0, 1.0);
    AltForm::one_form(MODEL_DIM, &comps).expect("static")
}

/// The (1,0) coframe row w^{jk} dt_k − θ_j (j 0-based).
fn holomorphic_row(j: usize, w_row: [f64; 2], alpha_j: C64) -> AltForm {
    let mut comps = vec![c(0.0, 0.0); MODEL_DIM];
    comps[IDX_X - 1] = c(0.0, -2.0 * alpha_j.im);
    comps[IDX_Y - 1] = c(0.0, -2.0 * alpha_j.re);
    comps[IDX_T[0] - 1] = c(w_row[0], 0.0);
    comps[IDX_T[1] - 1] = c(w_row[1], 0.0);
    comps[IDX_PHI[j] - 1] = c(0.0, -1.0);
    AltForm::one_form(MODEL_DIM, &comps).expect("static")
}

/// Assembles (Ω, ω) at one grid node of a 2-torus state.
pub fn assemble_point_forms(
    state: &AnsatzState,
    node: usize,
) -> Result<(AltForm, AltForm), AnsatzError> {
    if state.m != 2 {
        return Err(AnsatzError::RequiresTwoTorus(state.m));
    }
    let count = state.grid.node_count();
    if node >= count {
        return Err(AnsatzError::NodeOutOfRange { node, count });
    }
    state.spd_at(node)?;
    let [w11, w12, w22] = state.winv_at(node);
    let a1 = state.alpha[0][node];
    let a2 = state.alpha[1][node];
    let rho = state.rho[node];

    let du = du_form();
    let dubar = du.conj();
    let omega_r = du.wedge(&dubar)?.scale(c(0.0, 0.5 * rho));

    let dt1 = AltForm::basis_covector(MODEL_DIM, IDX_T[0])?;
    let dt2 = AltForm::basis_covector(MODEL_DIM, IDX_T[1])?;
    let th1 = theta_form(0, a1);
    let th2 = theta_form(1, a2);
    let minus_i = c(0.0, -1.0);
    let omega = omega_r
        .add(&th1.wedge(&dt1)?.scale(minus_i))?
        .add(&th2.wedge(&dt2)?.scale(minus_i))?;

    let f1 = holomorphic_row(0, [w11, w12], a1);
    let f2 = holomorphic_row(1, [w12, w22], a2);
    let big_omega = f1.wedge(&f2)?.wedge(&du)?.scale(c(-1.0, 0.0));

    Ok((big_omega, omega))
}

/// Residuals of the two algebraic wedge identities at a node: the volume
/// pairing Ω ∧ Ω̄ = (−2)² det W⁻¹ dt₁∧dt₂∧θ₁∧θ₂∧(du∧dū), and
/// θ_j ∧ dt_j = −(w_{jl}/2)(w^{lk}dt_k − θ_l) ∧ (w^{jm}dt_m + θ_j).
/// Residuals are sup-norms normalised by max(1, sup |lhs|, sup |rhs|).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WedgeIdentityCheck {
    pub residual_volume_pairing: f64,
    pub residual_theta_dt: f64,
    pub ok: bool,
}

pub fn check_wedge_identities(
    state: &AnsatzState,
    node: usize,
    tol: f64,
) -> Result<WedgeIdentityCheck, AnsatzError> {
    let (big_omega, _) = assemble_point_forms(state, node)?;
    check_wedge_identities_against(&big_omega, state, node, tol)
}

/// Cross-checks an externally supplied Ω against the field data at the
/// node. Both identities are algebraic in (W, θ), so a mismatch between
/// the form and the fields (a corrupted w¹², a rescaled Ω) shows up here.
pub fn check_wedge_identities_against(
    big_omega: &AltForm,
    state: &AnsatzState,
    node: usize,
    tol: f64,
) -> Result<WedgeIdentityCheck, AnsatzError> {
    if state.m != 2 {
        return Err(AnsatzError::RequiresTwoTorus(state.m));
    }
    let [w11, w12, w22] = state.winv_at(node);
    let det = det2(&[[w11, w12], [w12, w22]]);
    let a1 = state.alpha[0][node];
    let a2 = state.alpha[1][node];

    let du = du_form();
    let dubar = du.conj();
    let dt1 = AltForm::basis_covector(MODEL_DIM, IDX_T[0])?;
    let dt2 = AltForm::basis_covector(MODEL_DIM, IDX_T[1])?;
    let th = [theta_form(0, a1), theta_form(1, a2)];

    let lhs1 = big_omega.wedge(&big_omega.conj())?;
    let rhs1 = dt1
        .wedge(&dt2)?
        .wedge(&th[0])?
        .wedge(&th[1])?
        .wedge(&du.wedge(&dubar)?)?
        .scale(c(4.0 * det, 0.0));
    let scale1 = 1.0f64.max(lhs1.max_abs()).max(rhs1.max_abs());
    let residual1 = lhs1.sub(&rhs1)?.max_abs() / scale1;

    // W = (W⁻¹)⁻¹ supplies the lowered-index entries w_{jl}.
    let w_lower = inv2(&[[w11, w12], [w12, w22]])
        .ok_or(AnsatzError::Singular { node })?;
    let winv = [[w11, w12], [w12, w22]];
    let f = |l: usize| holomorphic_row(l, winv[l], state.alpha[l][node]);
    let g = |j: usize| -> Result<AltForm, AnsatzError> {
        let mut comps = vec![c(0.0, 0.0); MODEL_DIM];
        let aj = state.alpha[j][node];
        comps[IDX_X - 1] = c(0.0, 2.0 * aj.im);
        comps[IDX_Y - 1] = c(0.0, 2.0 * aj.re);
        comps[IDX_T[0] - 1] = c(winv[j][0], 0.0);
        comps[IDX_T[1] - 1] = c(winv[j][1], 0.0);
        comps[IDX_PHI[j] - 1] = c(0.0, 1.0);
        Ok(AltForm::one_form(MODEL_DIM, &comps)?)
    };
    let lhs2 = th[0].wedge(&dt1)?.add(&th[1].wedge(&dt2)?)?;
    let mut rhs2 = AltForm::zero(MODEL_DIM, 2);
    for j in 0..2 {
        for l in 0..2 {
            let term = f(l).wedge(&g(j)?)?.scale(c(-0.5 * w_lower[j][l], 0.0));
            rhs2 = rhs2.add(&term)?;
        }
    }
    let scale2 = 1.0f64.max(lhs2.max_abs()).max(rhs2.max_abs());
    let residual2 = lhs2.sub(&rhs2)?.max_abs() / scale2;

    Ok(WedgeIdentityCheck {
        residual_volume_pairing: residual1,
        residual_theta_dt: residual2,
        ok: residual1 <= tol && residual2 <= tol,
    })
}

/// Solves for the almost complex structure J on the model tangent space
/// implied by declaring the coframe rows (w^{jk}dt_k − θ_j, du) of type
/// (1,0): C·J = i·C for the 3×6 complex coframe matrix C.
pub fn implied_complex_structure(state: &AnsatzState, node: usize) -> Result<Vec<f64>, AnsatzError> {
    if state.m != 2 {
        return Err(AnsatzError::RequiresTwoTorus(state.m));
    }
    let [w11, w12, w22] = state.winv_at(node);
    let rows = [
        holomorphic_row(0, [w11, w12], state.alpha[0][node]),
        holomorphic_row(1, [w12, w22], state.alpha[1][node]),
        du_form(),
    ];
    let mut coframe = vec![c(0.0, 0.0); 3 * MODEL_DIM];
    for (r, row) in rows.iter().enumerate() {
        for j in 1..=MODEL_DIM {
            let mut blade = [0usize; 1];
            blade[0] = j;
            coframe[r * MODEL_DIM + j - 1] = row.coeff(&blade);
        }
    }
    // Real 6×6 system [Re C; Im C]·J = [−Im C; Re C].
    let n = MODEL_DIM;
    let mut m = vec![0.0; n * n];
    let mut rhs = vec![0.0; n * n];
    for r in 0..3 {
        for col in 0..n {
            let z = coframe[r * n + col];
            m[r * n + col] = z.re;
            m[(r + 3) * n + col] = z.im;
        }
    }
    for r in 0..3 {
        for col in 0..n {
            let z = coframe[r * n + col];
            rhs[r * n + col] = -z.im;
            rhs[(r + 3) * n + col] = z.re;
        }
    }
    solve(&m, &rhs, n, n).ok_or(AnsatzError::Singular { node })
}

/// Round-trip reduction check at a node: recover J from the type-(1,0)
/// declaration, recompute ω(η_j, Jη_k) against the stored W, verify
/// dμ_i(ξ_j) = δ_ij for ξ_j = w^{jk} Jη_k, and compare the iterated
/// contraction ι_{η₁}ι_{η₂}Ω with −du (sign fixed by the contraction-order
/// convention).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RoundtripCheck {
    pub j_squared_defect: f64,
    pub metric_gap: f64,
    pub moment_gap: f64,
    pub reduction_gap: f64,
    pub ok: bool,
}

pub fn reduce_roundtrip(
    state: &AnsatzState,
    node: usize,
    tol: f64,
) -> Result<RoundtripCheck, AnsatzError> {
    let j = implied_complex_structure(state, node)?;
    roundtrip_with_structure(state, node, &j, tol)
}

/// Same as [`reduce_roundtrip`] but with an explicitly supplied candidate
/// complex structure (row-major 6×6); used as the negative control.
pub fn roundtrip_with_structure(
    state: &AnsatzState,
    node: usize,
    j: &[f64],
    tol: f64,
) -> Result<RoundtripCheck, AnsatzError> {
    let n = MODEL_DIM;
    let (big_omega, omega) = assemble_point_forms(state, node)?;

    let mut j_sq_defect = 0.0f64;
    for r in 0..n {
        for col in 0..n {
            let mut v = 0.0;
            for k in 0..n {
                v += j[r * n + k] * j[k * n + col];
            }
            let expect = if r == col { -1.0 } else { 0.0 };
            j_sq_defect = j_sq_defect.max((v - expect).abs());
        }
    }

    let eta = |jdx: usize| -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[IDX_PHI[jdx] - 1] = 1.0;
        v
    };
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..n).map(|r| (0..n).map(|col| j[r * n + col] * v[col]).sum()).collect()
    };

    let [w11, w12, w22] = state.winv_at(node);
    let w_lower = inv2(&[[w11, w12], [w12, w22]]).ok_or(AnsatzError::Singular { node })?;
    let mut metric_gap = 0.0f64;
    for a in 0..2 {
        for b in 0..2 {
            let recomputed = omega.eval(&[&eta(a), &apply(&eta(b))])?;
            metric_gap = metric_gap.max((recomputed.re - w_lower[a][b]).abs());
            metric_gap = metric_gap.max(recomputed.im.abs());
        }
    }

    let winv = [[w11, w12], [w12, w22]];
    let mut moment_gap = 0.0f64;
    for jdx in 0..2 {
        // ξ_j = w^{jk} J η_k
        let mut xi = vec![0.0; n];
        for k in 0..2 {
            let jk = apply(&eta(k));
            for (slot, v) in xi.iter_mut().zip(&jk) {
                *slot += winv[jdx][k] * v;
            }
        }
        for i in 0..2 {
            let expect = if i == jdx { 1.0 } else { 0.0 };
            moment_gap = moment_gap.max((xi[IDX_T[i] - 1] - expect).abs());
        }
    }

    // ι_{η₁}ι_{η₂}Ω: η₂ first, η₁ last.
    let reduced = big_omega.contract(&eta(1))?.contract(&eta(0))?;
    let reduction_gap = reduced.add(&du_form())?.max_abs();

    let ok = j_sq_defect <= tol && metric_gap <= tol && moment_gap <= tol && reduction_gap <= tol;
    Ok(RoundtripCheck {
        j_squared_defect: j_sq_defect,
        metric_gap,
        moment_gap,
        reduction_gap,
        ok,
    })
}

/// Symmetric 6×6 metric g(v, w) = ω(v, Jw) at a node; eigenvalues returned
/// ascending so positivity is `eig[0] > 0`.
pub fn implied_metric_eigenvalues(state: &AnsatzState, node: usize) -> Result<Vec<f64>, AnsatzError> {
    let j = implied_complex_structure(state, node)?;
    let (_, omega) = assemble_point_forms(state, node)?;
    let n = MODEL_DIM;
    let mut g = vec![0.0; n * n];
    for a in 0..n {
        let mut ea = vec![0.0; n];
        ea[a] = 1.0;
        for b in 0..n {
            let mut eb = vec![0.0; n];
            eb[b] = 1.0;
            let jb: Vec<f64> =
                (0..n).map(|r| (0..n).map(|col| j[r * n + col] * eb[col]).sum()).collect();
            g[a * n + b] = omega.eval(&[&ea, &jb])?.re;
        }
    }
    // symmetrise before the eigenvalue pass to shed rounding skew
    for a in 0..n {
        for b in a + 1..n {
            let s = 0.5 * (g[a * n + b] + g[b * n + a]);
            g[a * n + b] = s;
            g[b * n + a] = s;
        }
    }
    Ok(sym_eigenvalues(&g, n))
}

/// Time derivatives of the state fields in each evolved direction,
/// supplied by finite differences of neighbour states or analytically.
#[derive(Debug, Clone)]
pub struct TimeDerivs {
    /// dwinv[j][entry]: ∂w-entry/∂t_{j+1}, entries ordered as in the state.
    pub dwinv: Vec<Vec<ScalarField>>,
    /// dalpha[j][i]: ∂α_{i+1}/∂t_{j+1}.
    pub dalpha: Vec<Vec<ComplexField>>,
    /// drho[j]: ∂ρ/∂t_{j+1}.
    pub drho: Vec<ScalarField>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LabeledResidual {
    pub equation: String,
    pub sup: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HitchinReport {
    /// (ii) every sampled node passes the decomposability test
    pub decomposable_ok: bool,
    /// (iii) min over sampled nodes of |Ω ∧ Ω̄| (coefficient magnitude)
    pub min_volume_pairing: f64,
    /// (iv) sup |Ω ∧ ω|
    pub wedge_sup: f64,
    /// (v) sup |ω³/3! − (−1)³(i/2)³ Ω∧Ω̄|, relative to the volume scale
    pub normalization_sup: f64,
    /// identity Ω∧Ω̄ = (−2)² detW⁻¹ dt∧θ∧(Ω_r∧Ω̄_r)
    pub identity_volume_sup: f64,
    /// identity θ_j∧dt_j = −(w_{jl}/2)(…)∧(…)
    pub identity_theta_dt_sup: f64,
    pub nodes_checked: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub m: usize,
    pub equations: Vec<LabeledResidual>,
    pub hitchin: Option<HitchinReport>,
    pub max_equation_residual: f64,
}

fn norms_real(field: &[f64], label: &str) -> LabeledResidual {
    LabeledResidual {
        equation: label.to_string(),
        sup: grid::sup_norm_real(field),
        l2: grid::l2_norm_real(field),
    }
}

/// How many nodes the pointwise Hitchin checks visit.
#[derive(Debug, Clone, Copy)]
pub enum HitchinMode {
    Off,
    /// Deterministic stride subsample of at most this many nodes.
    Sample(usize),
    Full,
}

/// Computes the residuals of the structure equations for one state.
///
/// With `derivs` absent only the determinant constraint and the pointwise
/// checks are reported. Spatial derivatives are spectral in x and 4th
/// order finite differences in y.
pub fn verify_structure(
    state: &AnsatzState,
    derivs: Option<&TimeDerivs>,
    hitchin: HitchinMode,
) -> Result<ResidualReport, AnsatzError> {
    let ops = SpectralOps::new(&state.grid);
    verify_structure_with(state, derivs, hitchin, &ops)
}

pub fn verify_structure_with(
    state: &AnsatzState,
    derivs: Option<&TimeDerivs>,
    hitchin: HitchinMode,
    ops: &SpectralOps,
) -> Result<ResidualReport, AnsatzError> {
    let fields = residual_magnitude_fields(state, derivs, ops)?;
    let equations: Vec<LabeledResidual> =
        fields.iter().map(|(label, f)| norms_real(f, label)).collect();

    let hitchin_report = match (state.m, hitchin) {
        (2, HitchinMode::Off) | (1, _) => None,
        (2, mode) => Some(hitchin_pointwise(state, mode)?),
        _ => None,
    };

    let max_equation_residual =
        equations.iter().map(|e| e.sup).fold(0.0, f64::max);
    Ok(ResidualReport { m: state.m, equations, hitchin: hitchin_report, max_equation_residual })
}

/// Per-node residual magnitudes of every structure equation, labelled.
/// Shared by the report norms and the per-node CSV dumps.
pub fn residual_magnitude_fields(
    state: &AnsatzState,
    derivs: Option<&TimeDerivs>,
    ops: &SpectralOps,
) -> Result<Vec<(String, ScalarField)>, AnsatzError> {
    let g = &state.grid;
    let n = g.node_count();
    let mut fields: Vec<(String, ScalarField)> = Vec::new();

    // det W⁻¹ = f_{ω_r}: the reduced volume constraint.
    let det_res: Vec<f64> =
        (0..n).map(|i| (state.det_winv_at(i) - state.rho[i]).abs()).collect();
    fields.push(("det(W^-1) - rho".to_string(), det_res));

    if let Some(d) = derivs {
        for j in 0..state.m {
            // ∂ρ/∂t_j + 2(∂_x Re α_j − ∂_y Im α_j) = 0  (reduced Kähler flow)
            let re_a: Vec<f64> = state.alpha[j].iter().map(|z| z.re).collect();
            let im_a: Vec<f64> = state.alpha[j].iter().map(|z| z.im).collect();
            let dxa = ops.ddx_real(g, &re_a);
            let dyb = grid::ddy_real(g, &im_a);
            let res: Vec<f64> = (0..n)
                .map(|i| (d.drho[j][i] + 2.0 * (dxa[i] - dyb[i])).abs())
                .collect();
            fields.push((format!("d(rho)/dt{} - i*d(theta{})", j + 1, j + 1), res));
        }
        for j in 0..state.m {
            for i in 0..state.m {
                // [∂θ_i/∂t_j]_{(0,1)} = −∂̄ w^{ij}  ⇔  ∂α_i/∂t_j = ∂_u w^{ij}
                let wij = self_entry(state, i, j);
                let du_w = grid::d_du(ops, g, &grid::real_to_complex(wij));
                let res: Vec<f64> =
                    (0..n).map(|k| (d.dalpha[j][i][k] - du_w[k]).norm()).collect();
                fields.push((
                    format!("d(alpha{})/dt{} - du(w{}{})", i + 1, j + 1, i + 1, j + 1),
                    res,
                ));
            }
        }
        if state.m == 2 {
            // ∂w^{ij}/∂t_k − ∂w^{ik}/∂t_j = 0 for the independent combos
            let combos: [(usize, usize, usize, &str); 2] = [
                (0, 0, 1, "d(w11)/dt2 - d(w12)/dt1"),
                (1, 0, 1, "d(w12)/dt2 - d(w22)/dt1"),
            ];
            for (entry_hi, tj, tk, label) in combos {
                // entry_hi selects (w11, w12); the paired entry is the
                // symmetry partner one step up: w12 resp. w22.
                let res: Vec<f64> = (0..n)
                    .map(|i| (d.dwinv[tk][entry_hi][i] - d.dwinv[tj][entry_hi + 1][i]).abs())
                    .collect();
                fields.push((label.to_string(), res));
            }
        }
    }
    Ok(fields)
}

fn self_entry<'a>(state: &'a AnsatzState, i: usize, j: usize) -> &'a ScalarField {
    if state.m == 1 {
        &state.winv[0]
    } else {
        // symmetric storage: (0,0)→w11, (0,1)/(1,0)→w12, (1,1)→w22
        match (i, j) {
            (0, 0) => &state.winv[0],
            (1, 1) => &state.winv[2],
            _ => &state.winv[1],
        }
    }
}

fn hitchin_pointwise(state: &AnsatzState, mode: HitchinMode) -> Result<HitchinReport, AnsatzError> {
    let n = state.grid.node_count();
    let nodes: Vec<usize> = match mode {
        HitchinMode::Off => Vec::new(),
        HitchinMode::Full => (0..n).collect(),
        HitchinMode::Sample(max) => {
            let stride = (n / max.max(1)).max(1);
            (0..n).step_by(stride).collect()
        }
    };
    let mut decomposable_ok = true;
    let mut min_volume = f64::INFINITY;
    let mut wedge_sup = 0.0f64;
    let mut normalization_sup = 0.0f64;
    let mut id_vol = 0.0f64;
    let mut id_theta = 0.0f64;
    for &node in &nodes {
        let (big_omega, omega) = assemble_point_forms(state, node)?;
        if !big_omega.decomposable_check(1e-10)? {
            decomposable_ok = false;
        }
        let pairing = big_omega.wedge(&big_omega.conj())?;
        min_volume = min_volume.min(pairing.max_abs());
        wedge_sup = wedge_sup.max(big_omega.wedge(&omega)?.max_abs());
        // ω³/3! − (−1)^{n(n−1)/2} (i/2)³ Ω∧Ω̄ with n = 3: the factor is i/8.
        let omega_cubed = omega.wedge(&omega)?.wedge(&omega)?.scale(c(1.0 / 6.0, 0.0));
        let rhs = pairing.scale(c(0.0, 0.125));
        let scale = 1.0f64.max(omega_cubed.max_abs());
        normalization_sup =
            normalization_sup.max(omega_cubed.sub(&rhs)?.max_abs() / scale);
        let ids = check_wedge_identities(state, node, f64::INFINITY)?;
        id_vol = id_vol.max(ids.residual_volume_pairing);
        id_theta = id_theta.max(ids.residual_theta_dt);
    }
    if nodes.is_empty() {
        min_volume = 0.0;
    }
    Ok(HitchinReport {
        decomposable_ok,
        min_volume_pairing: min_volume,
        wedge_sup,
        normalization_sup,
        identity_volume_sup: id_vol,
        identity_theta_dt_sup: id_theta,
        nodes_checked: nodes.len(),
    })
}

/// Per-node blade coefficients of an assembled form over the whole grid.
/// Used for the numerical exterior-derivative (closure) residuals.
#[derive(Debug, Clone)]
pub struct FormField {
    pub degree: usize,
    pub coeffs: BTreeMap<u32, ComplexField>,
}

impl FormField {
    pub fn scale_add(&mut self, other: &FormField, weight: f64) {
        for (mask, field) in &other.coeffs {
            let entry = self
                .coeffs
                .entry(*mask)
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); field.len()]);
            for (dst, src) in entry.iter_mut().zip(field) {
                *dst += weight * src;
            }
        }
    }

    pub fn zero_like(&self) -> FormField {
        FormField { degree: self.degree, coeffs: BTreeMap::new() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.coeffs.values().map(|f| grid::sup_norm_complex(f)).fold(0.0, f64::max)
    }
}

/// Assembles Ω and ω as form fields over the grid.
pub fn form_fields(state: &AnsatzState) -> Result<(FormField, FormField), AnsatzError> {
    let n = state.grid.node_count();
    let mut big = FormField { degree: 3, coeffs: BTreeMap::new() };
    let mut om = FormField { degree: 2, coeffs: BTreeMap::new() };
    for node in 0..n {
        let (b, o) = assemble_point_forms(state, node)?;
        for (mask, coeff) in b.terms() {
            big.coeffs
                .entry(mask)
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); n])[node] = coeff;
        }
        for (mask, coeff) in o.terms() {
            om.coeffs
                .entry(mask)
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); n])[node] = coeff;
        }
    }
    Ok((big, om))
}

/// Numerical exterior derivative of a form field: spatial derivatives are
/// spectral in x and finite differences in y; the caller supplies the
/// already-differenced coefficients along each t direction (fields do not
/// depend on the fibre angles).
pub fn exterior_derivative(
    field: &FormField,
    t_derivs: &[&FormField],
    grid_ref: &BaseGrid,
    ops: &SpectralOps,
) -> FormField {
    let mut out = FormField { degree: field.degree + 1, coeffs: BTreeMap::new() };
    let mut add_term = |direction: usize, mask: u32, deriv: &ComplexField| {
        let bit = 1u32 << (direction - 1);
        if mask & bit != 0 {
            return;
        }
        // sign of dx^direction ∧ (blade): one transposition per blade index
        // below `direction`.
        let below = (mask & (bit - 1)).count_ones();
        let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
        let target = mask | bit;
        let entry = out
            .coeffs
            .entry(target)
            .or_insert_with(|| vec![Complex64::new(0.0, 0.0); deriv.len()]);
        for (dst, src) in entry.iter_mut().zip(deriv) {
            *dst += sign * src;
        }
    };
    for (&mask, coeff) in &field.coeffs {
        let dx = ops.ddx_complex(grid_ref, coeff);
        add_term(IDX_X, mask, &dx);
        let dy = grid::ddy_complex(grid_ref, coeff);
        add_term(IDX_Y, mask, &dy);
    }
    for (j, tf) in t_derivs.iter().enumerate() {
        for (&mask, coeff) in &tf.coeffs {
            add_term(IDX_T[j], mask, coeff);
        }
    }
    out
}

/// Debug pretty-printer for model-space forms: e.g. `1·dx^dy + 1·dph1^dt1`.
pub fn pretty_model_form(form: &AltForm) -> String {
    form.pretty(&MODEL_LABELS)
}

/// Makes a constant-coefficient state (every field uniform over the grid).
pub fn constant_state(
    grid: BaseGrid,
    m: usize,
    winv: &[f64],
    alpha: &[C64],
    t: Vec<f64>,
) -> Result<AnsatzState, AnsatzError> {
    let n = grid.node_count();
    let winv_fields: Vec<ScalarField> = winv.iter().map(|&v| vec![v; n]).collect();
    let alpha_fields: Vec<ComplexField> = alpha.iter().map(|&v| vec![v; n]).collect();
    let rho = if m == 1 {
        vec![winv[0]; n]
    } else {
        vec![winv[0] * winv[2] - winv[1] * winv[1]; n]
    };
    AnsatzState::new(grid, m, winv_fields, alpha_fields, rho, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_band_limited_state, SplitMix64};

    fn test_grid() -> BaseGrid {
        BaseGrid::new(1.0, 16, 0.0, 1.0, 4).unwrap()
    }

    fn flat_state() -> AnsatzState {
        constant_state(
            test_grid(),
            2,
            &[1.0, 0.0, 1.0],
            &[c(0.0, 0.0), c(0.0, 0.0)],
            vec![0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn flat_assembly_matches_hand_expansion() {
        let state = flat_state();
        let (big_omega, omega) = assemble_point_forms(&state, 0).unwrap();
        // ω = dx∧dy + dφ₁∧dt₁ + dφ₂∧dt₂
        let expected = AltForm::from_blades(
            6,
            2,
            &[
                (&[IDX_X, IDX_Y], c(1.0, 0.0)),
                (&[IDX_T[0], IDX_PHI[0]], c(-1.0, 0.0)),
                (&[IDX_T[1], IDX_PHI[1]], c(-1.0, 0.0)),
            ],
        )
        .unwrap();
        assert!(
            omega.approx_eq(&expected, 1e-15),
            "got {}",
            pretty_model_form(&omega)
        );
        // Ω = −(dt₁ − i dφ₁)∧(dt₂ − i dφ₂)∧(dx + i dy): the dt₁∧dt₂∧dx
        // term sorts to +dx∧dt₁∧dt₂ and keeps the −1.
        assert_eq!(big_omega.degree(), 3);
        assert_eq!(big_omega.coeff(&[IDX_X, IDX_T[0], IDX_T[1]]), c(-1.0, 0.0));
        // ω real-valued
        for (_, coeff) in omega.terms() {
            assert!(coeff.im.abs() < 1e-15);
        }
    }

    #[test]
    fn flat_forms_satisfy_condition_iv() {
        let state = flat_state();
        let (big_omega, omega) = assemble_point_forms(&state, 0).unwrap();
        assert!(big_omega.wedge(&omega).unwrap().max_abs() <= 1e-14);
    }

    #[test]
    fn random_states_satisfy_normalization() {
        let mut rng = SplitMix64::new(42);
        for trial in 0..20 {
            let state = random_band_limited_state(&test_grid(), 2, &mut rng, 0.3);
            for node in [0usize, 7, 33] {
                let (big_omega, omega) = assemble_point_forms(&state, node).unwrap();
                let lhs = omega
                    .wedge(&omega)
                    .unwrap()
                    .wedge(&omega)
                    .unwrap()
                    .scale(c(1.0 / 6.0, 0.0));
                // (−1)³ (i/2)³ = i/8
                let rhs = big_omega
                    .wedge(&big_omega.conj())
                    .unwrap()
                    .scale(c(0.0, 0.125));
                let scale = 1.0f64.max(lhs.max_abs());
                let gap = lhs.sub(&rhs).unwrap().max_abs() / scale;
                assert!(gap <= 1e-11, "trial {trial} node {node}: gap {gap}");
            }
        }
    }

    #[test]
    fn wedge_identities_flat_and_diagonal() {
        let flat = flat_state();
        let check = check_wedge_identities(&flat, 0, 1e-13).unwrap();
        assert!(check.ok, "flat residuals {check:?}");

        let diag = constant_state(
            test_grid(),
            2,
            &[2.0, 0.0, 5.0],
            &[c(0.0, 0.3), c(0.0, 0.0)],
            vec![0.0, 0.0],
        )
        .unwrap();
        let check = check_wedge_identities(&diag, 5, 1e-12).unwrap();
        assert!(check.ok, "diagonal residuals {check:?}");
    }

    #[test]
    fn wedge_identities_hold_on_random_point_samples() {
        // 1000 random SPD/α point samples, both identities within 1e-11.
        let g = BaseGrid::new(1.0, 8, 0.0, 1.0, 4).unwrap();
        let mut rng = SplitMix64::new(1_000);
        for trial in 0..1000 {
            let l11 = 0.4 + rng.uniform();
            let l21 = rng.symmetric();
            let l22 = 0.4 + rng.uniform();
            let winv = [l11 * l11, l11 * l21, l21 * l21 + l22 * l22];
            let alpha =
                [c(rng.symmetric(), rng.symmetric()), c(rng.symmetric(), rng.symmetric())];
            let state =
                constant_state(g.clone(), 2, &winv, &alpha, vec![0.0, 0.0]).unwrap();
            let check = check_wedge_identities(&state, 0, 1e-11).unwrap();
            assert!(check.ok, "trial {trial}: {check:?}");
        }
    }

    #[test]
    fn wedge_identities_negative_control() {
        let pristine = constant_state(
            test_grid(),
            2,
            &[2.0, 0.4, 5.0],
            &[c(0.1, 0.3), c(-0.2, 0.1)],
            vec![0.0, 0.0],
        )
        .unwrap();
        let (big_omega, _) = assemble_point_forms(&pristine, 3).unwrap();
        // deliberately corrupt w12: the assembled Ω no longer matches the
        // field data the identity is evaluated against
        let mut corrupted = pristine.clone();
        for v in corrupted.winv[1].iter_mut() {
            *v += 0.25;
        }
        for (r, w11) in corrupted.winv[0].clone().iter().enumerate() {
            // keep ρ = det W⁻¹ so the state itself stays admissible
            corrupted.rho[r] =
                w11 * corrupted.winv[2][r] - corrupted.winv[1][r] * corrupted.winv[1][r];
        }
        let check =
            check_wedge_identities_against(&big_omega, &corrupted, 3, 1e-10).unwrap();
        assert!(!check.ok, "corrupted w12 should fail the cross-check: {check:?}");
    }

    #[test]
    fn roundtrip_flat_and_random() {
        let flat = flat_state();
        let check = reduce_roundtrip(&flat, 0, 1e-13).unwrap();
        assert!(check.ok, "flat roundtrip {check:?}");

        let mut rng = SplitMix64::new(9);
        for _ in 0..10 {
            let state = random_band_limited_state(&test_grid(), 2, &mut rng, 0.4);
            let check = reduce_roundtrip(&state, 11, 1e-11).unwrap();
            assert!(check.ok, "random roundtrip {check:?}");
        }
    }

    #[test]
    fn roundtrip_rejects_corrupted_structure() {
        let state = flat_state();
        let mut j = implied_complex_structure(&state, 0).unwrap();
        j[2] += 0.05;
        let check = roundtrip_with_structure(&state, 0, &j, 1e-10).unwrap();
        assert!(!check.ok);
    }

    #[test]
    fn reduction_of_flat_big_omega_is_minus_du() {
        let state = flat_state();
        let (big_omega, _) = assemble_point_forms(&state, 0).unwrap();
        let mut eta1 = vec![0.0; 6];
        eta1[IDX_PHI[0] - 1] = 1.0;
        let mut eta2 = vec![0.0; 6];
        eta2[IDX_PHI[1] - 1] = 1.0;
        // leftmost-named last: contract by η₂ first
        let reduced = big_omega.contract(&eta2).unwrap().contract(&eta1).unwrap();
        let expected = du_form().scale(c(-1.0, 0.0));
        assert!(reduced.approx_eq(&expected, 1e-14), "got {}", pretty_model_form(&reduced));
    }

    #[test]
    fn verify_constant_state_has_zero_residuals() {
        let state = flat_state();
        let n = state.grid.node_count();
        let zero_r = vec![0.0; n];
        let zero_c = vec![c(0.0, 0.0); n];
        let derivs = TimeDerivs {
            dwinv: vec![vec![zero_r.clone(); 3]; 2],
            dalpha: vec![vec![zero_c.clone(); 2]; 2],
            drho: vec![zero_r; 2],
        };
        let report = verify_structure(&state, Some(&derivs), HitchinMode::Sample(8)).unwrap();
        assert!(report.max_equation_residual <= 1e-12, "{report:?}");
        let h = report.hitchin.unwrap();
        assert!(h.decomposable_ok);
        assert!(h.wedge_sup <= 1e-12);
        assert!(h.normalization_sup <= 1e-12);
        assert!(h.min_volume_pairing > 0.0);
    }

    #[test]
    fn verify_flags_inconsistent_fields() {
        // fields with no relation between α and ρ flow: claim zero time
        // derivatives while α has nonzero curl
        let g = test_grid();
        let n = g.node_count();
        let mut alpha1 = vec![c(0.0, 0.0); n];
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let x = g.x(ix);
                alpha1[g.idx(ix, iy)] =
                    c((2.0 * std::f64::consts::PI * x / g.kappa).sin(), 0.0);
            }
        }
        let state = AnsatzState::new(
            g.clone(),
            2,
            vec![vec![1.0; n], vec![0.0; n], vec![1.0; n]],
            vec![alpha1, vec![c(0.0, 0.0); n]],
            vec![1.0; n],
            vec![0.0, 0.0],
        )
        .unwrap();
        let zero_r = vec![0.0; n];
        let zero_c = vec![c(0.0, 0.0); n];
        let derivs = TimeDerivs {
            dwinv: vec![vec![zero_r.clone(); 3]; 2],
            dalpha: vec![vec![zero_c.clone(); 2]; 2],
            drho: vec![zero_r; 2],
        };
        let report = verify_structure(&state, Some(&derivs), HitchinMode::Off).unwrap();
        assert!(
            report.max_equation_residual > 1e-3,
            "inconsistent fields must leave a residual: {report:?}"
        );
    }

    #[test]
    fn implied_metric_positive_for_spd_states() {
        let mut rng = SplitMix64::new(31);
        for _ in 0..10 {
            let state = random_band_limited_state(&test_grid(), 2, &mut rng, 0.35);
            let eig = implied_metric_eigenvalues(&state, 21).unwrap();
            assert!(eig[0] > 1e-10, "metric eigenvalues {eig:?}");
        }
    }

    #[test]
    fn hitchin_suite_on_random_states() {
        // every node of each sampled state
        let mut rng = SplitMix64::new(77);
        for _ in 0..10 {
            let state = random_band_limited_state(&test_grid(), 2, &mut rng, 0.3);
            let report = verify_structure(&state, None, HitchinMode::Full).unwrap();
            let h = report.hitchin.unwrap();
            assert!(h.decomposable_ok);
            assert!(h.min_volume_pairing > 1e-6);
            assert!(h.wedge_sup <= 1e-10);
            assert!(h.normalization_sup <= 1e-10);
            assert!(h.identity_volume_sup <= 1e-10);
            assert!(h.identity_theta_dt_sup <= 1e-10);
        }
    }

    #[test]
    fn state_validation_rejects_indefinite_w() {
        let g = test_grid();
        let n = g.node_count();
        let bad = AnsatzState::new(
            g,
            2,
            vec![vec![1.0; n], vec![2.0; n], vec![1.0; n]], // det = 1−4 < 0
            vec![vec![c(0.0, 0.0); n]; 2],
            vec![1.0; n],
            vec![0.0, 0.0],
        );
        assert!(matches!(bad, Err(AnsatzError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn exterior_derivative_of_constant_field_vanishes() {
        let state = flat_state();
        let (big, om) = form_fields(&state).unwrap();
        let ops = SpectralOps::new(&state.grid);
        let zero_big = big.zero_like();
        let zero_om = om.zero_like();
        let d_big = exterior_derivative(&big, &[&zero_big, &zero_big], &state.grid, &ops);
        let d_om = exterior_derivative(&om, &[&zero_om, &zero_om], &state.grid, &ops);
        assert!(d_big.sup_norm() <= 1e-12);
        assert!(d_om.sup_norm() <= 1e-12);
    }

    #[test]
    fn exterior_derivative_matches_manufactured_solution() {
        // ω = f·dx∧dt₁ + g·dφ₁∧dφ₂ with f = sin(2πx)(1+y²), g = cos(2πx)y,
        // plus prescribed t-derivative fields h_j for the dx∧dt₁ slot:
        //   dω = −∂_y f dx∧dy∧dt₁ + ∂_x g dx∧dφ₁∧dφ₂ + ∂_y g dy∧dφ₁∧dφ₂
        //        + h₂ dx∧dt₁∧dt₂
        let g = BaseGrid::new(1.0, 32, 0.0, 1.0, 5).unwrap();
        let ops = SpectralOps::new(&g);
        let n = g.node_count();
        let tau = 2.0 * std::f64::consts::PI;
        let mask_xt1 = |i: usize, j: usize| (1u32 << (i - 1)) | (1u32 << (j - 1));
        let mut field = FormField { degree: 2, coeffs: BTreeMap::new() };
        let mut f_vals = vec![c(0.0, 0.0); n];
        let mut g_vals = vec![c(0.0, 0.0); n];
        let mut h2 = vec![c(0.0, 0.0); n];
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let (x, y) = (g.x(ix), g.y(iy));
                f_vals[g.idx(ix, iy)] = c((tau * x).sin() * (1.0 + y * y), 0.0);
                g_vals[g.idx(ix, iy)] = c((tau * x).cos() * y, 0.0);
                h2[g.idx(ix, iy)] = c(y - 0.5 * x, 0.25);
            }
        }
        field.coeffs.insert(mask_xt1(IDX_X, IDX_T[0]), f_vals);
        field.coeffs.insert(mask_xt1(IDX_PHI[0], IDX_PHI[1]), g_vals);
        let mut dt1_field = field.zero_like();
        let mut dt2_field = field.zero_like();
        dt2_field.coeffs.insert(mask_xt1(IDX_X, IDX_T[0]), h2.clone());
        dt1_field.coeffs.insert(mask_xt1(IDX_PHI[0], IDX_PHI[1]), vec![c(0.0, 0.0); n]);
        let d = exterior_derivative(&field, &[&dt1_field, &dt2_field], &g, &ops);
        let mut worst = 0.0f64;
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let (x, y) = (g.x(ix), g.y(iy));
                let k = g.idx(ix, iy);
                let dyf = 2.0 * y * (tau * x).sin();
                let dxg = -tau * (tau * x).sin() * y;
                let dyg = (tau * x).cos();
                let got = |blade: &[usize]| -> C64 {
                    let mask = blade.iter().fold(0u32, |m, &i| m | 1 << (i - 1));
                    d.coeffs
                        .get(&mask)
                        .map(|f| f[k])
                        .unwrap_or_else(|| c(0.0, 0.0))
                };
                // dy∧(f dx∧dt₁): dy into slot 2 → −∂_y f on dx∧dy∧dt₁
                worst = worst
                    .max((got(&[IDX_X, IDX_Y, IDX_T[0]]) - c(-dyf, 0.0)).norm());
                worst = worst
                    .max((got(&[IDX_X, IDX_PHI[0], IDX_PHI[1]]) - c(dxg, 0.0)).norm());
                worst = worst
                    .max((got(&[IDX_Y, IDX_PHI[0], IDX_PHI[1]]) - c(dyg, 0.0)).norm());
                // dt₂∧(h₂ dx∧dt₁): two transpositions sort it → +h₂
                worst = worst
                    .max((got(&[IDX_X, IDX_T[0], IDX_T[1]]) - h2[k]).norm());
            }
        }
        assert!(worst <= 1e-10, "manufactured dω gap {worst}");
    }
}
