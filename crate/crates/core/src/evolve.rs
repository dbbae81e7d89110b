//! Staged integration of the torus-bundle evolution system for m ∈ {1, 2}.
//!
//! Stage l sweeps t_l holding the earlier moment-map coordinates fixed.
//! Per stage the closed subsystem is
//!
//! ```text
//!   ∂α_i/∂t_l   = ∂_u w^{il}                       (the (0,1) equation plus
//!                                                   the imaginary-θ gauge)
//!   ∂ρ/∂t_l     = −2(∂_x Re α_l − ∂_y Im α_l)      (reduced Kähler flow)
//!   ∂w^{ij}/∂t_l = ∂w^{il}/∂t_j                    (cross-symmetry, stage 2)
//!   det W⁻¹     = ρ                                (pins w^{ll})
//! ```
//!
//! At stage 1 the entries w^{12}, w^{22} are free choices (default: frozen
//! at their initial fields) and w^{11} is pinned by the determinant
//! constraint. At stage 2 nothing is free: w^{11} and w^{12} evolve by the
//! cross-symmetry equations, whose ∂/∂t₁ right-hand sides are finite
//! differences along the stage-1 sweep, and w^{22} is pinned. Stage 2
//! therefore advances the whole t₁-line of states simultaneously.
//!
//! The time stepper is classical RK4. Right-hand sides are projected onto
//! the 2/3-rule band limit in x, so the semi-discrete system is the
//! Galerkin truncation and trajectories stay band-limited exactly. The
//! underlying Cauchy problem is only analytically well posed; the
//! integrator requires band-limited initial data, keeps t ranges small,
//! and reports positivity loss or residual growth instead of hiding it.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ansatz::{
    self, AnsatzError, AnsatzState, FormField, HitchinMode, HitchinReport, LabeledResidual,
    ResidualReport, TimeDerivs,
};
use crate::grid::{self, BaseGrid, ComplexField, ScalarField, SpectralOps};

/// Tolerance for the band-limit and initial-constraint admission checks.
pub const INITIAL_DATA_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("initial data is not band-limited: field `{field}` has Fourier content {excess:.3e} above the nx/3 cutoff")]
    BandLimit { field: &'static str, excess: f64 },
    #[error("initial data violates det W⁻¹ = ρ (residual {residual:.3e})")]
    InitialConstraint { residual: f64 },
    #[error("positive definiteness lost at t = {t:?}, node {node} (det {det:.3e}, trace {trace:.3e})")]
    PositivityLoss { t: Vec<f64>, node: usize, det: f64, trace: f64 },
    #[error("fields stopped being finite at t = {t:?}")]
    BlowUp { t: Vec<f64> },
    #[error("residual ceiling exceeded: {value:.3e} > {ceiling:.3e} at t = ({t1}, {t2}), equation `{equation}`")]
    ResidualCeiling { t1: f64, t2: f64, value: f64, ceiling: f64, equation: String },
    #[error(transparent)]
    State(#[from] AnsatzError),
}

/// Tabulated or analytic override for a free entry of W⁻¹, evaluated at
/// (x, y, t).
pub type FreeField = Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>;

/// Configuration of a staged evolution run.
#[derive(Clone)]
pub struct EvolutionConfig {
    pub m: usize,
    /// Sweep extent per stage (length m).
    pub t_max: Vec<f64>,
    pub dt: f64,
    /// Post-hoc verification ceiling on the structure-equation residuals.
    pub residual_ceiling: Option<f64>,
    /// Free choice for w^{12} during stage 1 (m = 2); default: frozen.
    pub free_w12: Option<FreeField>,
    /// Free choice for w^{22} during stage 1 (m = 2); default: frozen.
    pub free_w22: Option<FreeField>,
    /// Keep every k-th step of the swept coordinate in the emitted
    /// trajectory (integration always runs at dt). The step counts must be
    /// divisible by the stride.
    pub store_every: usize,
    /// Spacing of the stage-2 t₁-line in units of dt (m = 2). The line is
    /// the spatial discretisation of the cross-sweep direction, so it is a
    /// resolution knob independent of the RK4 step: the underlying Cauchy
    /// problem amplifies unresolved t₁ frequencies at a rate ~1/spacing,
    /// which is why the line must not be refined together with dt.
    pub t1_line_every: usize,
}

impl std::fmt::Debug for EvolutionConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EvolutionConfig")
            .field("m", &self.m)
            .field("t_max", &self.t_max)
            .field("dt", &self.dt)
            .field("residual_ceiling", &self.residual_ceiling)
            .field("free_w12", &self.free_w12.is_some())
            .field("free_w22", &self.free_w22.is_some())
            .field("store_every", &self.store_every)
            .field("t1_line_every", &self.t1_line_every)
            .finish()
    }
}

impl EvolutionConfig {
    pub fn new(m: usize, t_max: Vec<f64>, dt: f64) -> Result<Self, EvolveError> {
        let cfg = Self {
            m,
            t_max,
            dt,
            residual_ceiling: None,
            free_w12: None,
            free_w22: None,
            store_every: 1,
            t1_line_every: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        if self.m != 1 && self.m != 2 {
            return Err(EvolveError::Config(format!(
                "torus rank m must be 1 or 2 (got {}); higher rank is rejected at parse time",
                self.m
            )));
        }
        if !(self.dt > 0.0) {
            return Err(EvolveError::Config(format!("dt must be > 0 (got {})", self.dt)));
        }
        if self.t_max.len() != self.m {
            return Err(EvolveError::Config(format!(
                "t_max must list one extent per stage ({} expected, got {})",
                self.m,
                self.t_max.len()
            )));
        }
        for (l, &tm) in self.t_max.iter().enumerate() {
            if tm < self.dt {
                return Err(EvolveError::Config(format!(
                    "t{}_max = {tm} is smaller than dt = {}",
                    l + 1,
                    self.dt
                )));
            }
            let steps = tm / self.dt;
            if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                return Err(EvolveError::Config(format!(
                    "t{}_max = {tm} must be an integer multiple of dt = {}",
                    l + 1,
                    self.dt
                )));
            }
        }
        if self.store_every == 0 {
            return Err(EvolveError::Config("store_every must be ≥ 1".into()));
        }
        if self.t1_line_every == 0 {
            return Err(EvolveError::Config("t1_line_every must be ≥ 1".into()));
        }
        if self.m == 2 {
            if self.steps(0) % self.t1_line_every != 0 {
                return Err(EvolveError::Config(format!(
                    "stage 1 step count {} is not divisible by t1_line_every = {}",
                    self.steps(0),
                    self.t1_line_every
                )));
            }
            let n1 = self.steps(0) / self.t1_line_every + 1;
            if n1 < 5 {
                return Err(EvolveError::Config(format!(
                    "stage 2 differences along t1 need at least 5 line points (got {n1}); \
                     decrease dt or t1_line_every, or increase t1_max"
                )));
            }
            if self.steps(1) % self.store_every != 0 {
                return Err(EvolveError::Config(format!(
                    "stage 2 step count {} is not divisible by store_every = {}",
                    self.steps(1),
                    self.store_every
                )));
            }
        } else if self.steps(0) % self.store_every != 0 {
            return Err(EvolveError::Config(format!(
                "stage 1 step count {} is not divisible by store_every = {}",
                self.steps(0),
                self.store_every
            )));
        }
        Ok(())
    }

    fn steps(&self, stage: usize) -> usize {
        (self.t_max[stage] / self.dt).round() as usize
    }
}

/// States on the rectangular (t₁, t₂) grid swept by the staged scheme.
/// Row it₂ = 0 is the stage-1 sweep; rows above it are stage 2. For m = 1
/// there is a single row.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub m: usize,
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    states: Vec<AnsatzState>,
}

impl Trajectory {
    /// Builds a trajectory from pre-computed states laid out row-major
    /// over the (t₁, t₂) grid.
    pub fn from_states(m: usize, t1: Vec<f64>, t2: Vec<f64>, states: Vec<AnsatzState>) -> Self {
        assert_eq!(states.len(), t1.len() * t2.len(), "trajectory shape mismatch");
        Self { m, t1, t2, states }
    }

    pub fn n1(&self) -> usize {
        self.t1.len()
    }

    pub fn n2(&self) -> usize {
        self.t2.len()
    }

    pub fn state(&self, it1: usize, it2: usize) -> &AnsatzState {
        &self.states[it2 * self.t1.len() + it1]
    }

    pub fn state_mut(&mut self, it1: usize, it2: usize) -> &mut AnsatzState {
        let n1 = self.t1.len();
        &mut self.states[it2 * n1 + it1]
    }

    /// Stage marker: 1 on the initial sweep row, 2 above it.
    pub fn stage(&self, _it1: usize, it2: usize) -> usize {
        if it2 == 0 {
            1
        } else {
            2
        }
    }

    pub fn iter_indexed(&self) -> impl Iterator<Item = (usize, usize, &AnsatzState)> {
        let n1 = self.t1.len();
        self.states.iter().enumerate().map(move |(k, s)| (k % n1, k / n1, s))
    }

    /// Sup distance to a finer reference trajectory over the shared
    /// (t₁, t₂) points (reference grids must contain this one's).
    pub fn sup_distance_to_reference(&self, reference: &Trajectory) -> Option<f64> {
        let find = |values: &[f64], v: f64| -> Option<usize> {
            values.iter().position(|&w| (w - v).abs() <= 1e-9 * (1.0 + v.abs()))
        };
        let mut worst = 0.0f64;
        for (it1, it2, state) in self.iter_indexed() {
            let r1 = find(&reference.t1, self.t1[it1])?;
            let r2 = find(&reference.t2, self.t2[it2])?;
            worst = worst.max(state.sup_distance(reference.state(r1, r2)));
        }
        Some(worst)
    }
}

/// Instantaneous stage-1 time derivative of a state: ∂α_i/∂t₁ and ∂ρ/∂t₁.
/// (The evolved w-entries are algebraic at stage 1: the free entries are
/// held to their configured extension and w^{11} is pinned.)
#[derive(Debug, Clone)]
pub struct Stage1Rhs {
    pub dalpha: Vec<ComplexField>,
    pub drho: ScalarField,
}

struct Stage1Ctx<'a> {
    grid: &'a BaseGrid,
    ops: &'a SpectralOps,
    m: usize,
    w12_frozen: ScalarField,
    w22_frozen: ScalarField,
    free_w12: Option<FreeField>,
    free_w22: Option<FreeField>,
    t_base: Vec<f64>,
}

impl Stage1Ctx<'_> {
    fn free_field(&self, which: usize, t1: f64) -> ScalarField {
        let (free, frozen) = if which == 0 {
            (&self.free_w12, &self.w12_frozen)
        } else {
            (&self.free_w22, &self.w22_frozen)
        };
        match free {
            None => frozen.clone(),
            Some(f) => {
                let mut t = self.t_base.clone();
                t[0] = t1;
                let g = self.grid;
                let mut out = vec![0.0; g.node_count()];
                for iy in 0..g.ny {
                    for ix in 0..g.nx {
                        out[g.idx(ix, iy)] = f(g.x(ix), g.y(iy), &t);
                    }
                }
                out
            }
        }
    }
}

const STAGE1_FIELDS_M1: usize = 3; // Re α₁, Im α₁, ρ
const STAGE1_FIELDS_M2: usize = 5; // Re α₁, Im α₁, Re α₂, Im α₂, ρ

fn stage1_pack(state: &AnsatzState) -> Vec<f64> {
    let n = state.grid.node_count();
    let blocks = if state.m == 1 { STAGE1_FIELDS_M1 } else { STAGE1_FIELDS_M2 };
    let mut y = vec![0.0; blocks * n];
    for i in 0..state.m {
        for k in 0..n {
            y[(2 * i) * n + k] = state.alpha[i][k].re;
            y[(2 * i + 1) * n + k] = state.alpha[i][k].im;
        }
    }
    y[(blocks - 1) * n..].copy_from_slice(&state.rho);
    y
}

fn stage1_rhs_packed(ctx: &Stage1Ctx, y: &[f64], t1: f64) -> Vec<f64> {
    let g = ctx.grid;
    let n = g.node_count();
    let blocks = if ctx.m == 1 { STAGE1_FIELDS_M1 } else { STAGE1_FIELDS_M2 };
    let rho = &y[(blocks - 1) * n..blocks * n];

    // pinned entry: w^{11} = (ρ + (w^{12})²)/w^{22} (m = 2) or ρ (m = 1)
    let (w11, w12): (ScalarField, Option<ScalarField>) = if ctx.m == 2 {
        let w12 = ctx.free_field(0, t1);
        let w22 = ctx.free_field(1, t1);
        let w11 = (0..n).map(|k| (rho[k] + w12[k] * w12[k]) / w22[k]).collect();
        (w11, Some(w12))
    } else {
        (rho.to_vec(), None)
    };

    let mut out = vec![0.0; blocks * n];
    // ∂α₁/∂t₁ = ∂_u w^{11}
    let mut da1 = grid::d_du(ctx.ops, g, &grid::real_to_complex(&w11));
    ctx.ops.dealias_complex(g, &mut da1);
    for k in 0..n {
        out[k] = da1[k].re;
        out[n + k] = da1[k].im;
    }
    if ctx.m == 2 {
        // ∂α₂/∂t₁ = ∂_u w^{21}
        let mut da2 = grid::d_du(ctx.ops, g, &grid::real_to_complex(w12.as_ref().unwrap()));
        ctx.ops.dealias_complex(g, &mut da2);
        for k in 0..n {
            out[2 * n + k] = da2[k].re;
            out[3 * n + k] = da2[k].im;
        }
    }
    // ∂ρ/∂t₁ = −2(∂_x Re α₁ − ∂_y Im α₁)
    let re_a1 = &y[0..n];
    let im_a1 = &y[n..2 * n];
    let dxa = ctx.ops.ddx_real(g, re_a1);
    let dyb = grid::ddy_real(g, im_a1);
    let mut drho: ScalarField = (0..n).map(|k| -2.0 * (dxa[k] - dyb[k])).collect();
    ctx.ops.dealias_real(g, &mut drho);
    out[(blocks - 1) * n..].copy_from_slice(&drho);
    out
}

/// Stage-1 right-hand side for a single state: used directly by tests and
/// the stationarity checks. For stage 2 the right-hand side needs the
/// whole t₁-line and lives inside [`evolve`].
pub fn stage1_rhs(state: &AnsatzState, config: &EvolutionConfig) -> Result<Stage1Rhs, EvolveError> {
    config.validate()?;
    if state.m != config.m {
        return Err(EvolveError::Config(format!(
            "state has m = {}, config has m = {}",
            state.m, config.m
        )));
    }
    let ops = SpectralOps::new(&state.grid);
    let ctx = Stage1Ctx {
        grid: &state.grid,
        ops: &ops,
        m: state.m,
        w12_frozen: if state.m == 2 { state.winv[1].clone() } else { Vec::new() },
        w22_frozen: if state.m == 2 { state.winv[2].clone() } else { Vec::new() },
        free_w12: config.free_w12.clone(),
        free_w22: config.free_w22.clone(),
        t_base: state.t.clone(),
    };
    let y = stage1_pack(state);
    let n = state.grid.node_count();
    let out = stage1_rhs_packed(&ctx, &y, state.t[0]);
    let blocks = if state.m == 1 { STAGE1_FIELDS_M1 } else { STAGE1_FIELDS_M2 };
    let mut dalpha = Vec::with_capacity(state.m);
    for i in 0..state.m {
        let f: ComplexField = (0..n)
            .map(|k| Complex64::new(out[(2 * i) * n + k], out[(2 * i + 1) * n + k]))
            .collect();
        dalpha.push(f);
    }
    Ok(Stage1Rhs { dalpha, drho: out[(blocks - 1) * n..].to_vec() })
}

fn rk4_step(y: &mut Vec<f64>, t: f64, dt: f64, rhs: &mut impl FnMut(&[f64], f64) -> Vec<f64>) {
    let k1 = rhs(y, t);
    let mut y2 = y.clone();
    axpy(&mut y2, 0.5 * dt, &k1);
    let k2 = rhs(&y2, t + 0.5 * dt);
    let mut y3 = y.clone();
    axpy(&mut y3, 0.5 * dt, &k2);
    let k3 = rhs(&y3, t + 0.5 * dt);
    let mut y4 = y.clone();
    axpy(&mut y4, dt, &k3);
    let k4 = rhs(&y4, t + dt);
    for i in 0..y.len() {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// 4th-order finite-difference weights for d/dt at position `idx` of an
/// `n`-point uniform grid with spacing `h`. Falls back to lower order when
/// fewer than five points exist.
pub fn fd_weights(n: usize, idx: usize, h: f64) -> Vec<(usize, f64)> {
    if n >= 5 {
        if idx >= 2 && idx + 2 < n {
            return vec![
                (idx - 2, 1.0 / (12.0 * h)),
                (idx - 1, -8.0 / (12.0 * h)),
                (idx + 1, 8.0 / (12.0 * h)),
                (idx + 2, -1.0 / (12.0 * h)),
            ];
        }
        if idx == 0 {
            return vec![
                (0, -25.0 / (12.0 * h)),
                (1, 48.0 / (12.0 * h)),
                (2, -36.0 / (12.0 * h)),
                (3, 16.0 / (12.0 * h)),
                (4, -3.0 / (12.0 * h)),
            ];
        }
        if idx == 1 {
            return vec![
                (0, -3.0 / (12.0 * h)),
                (1, -10.0 / (12.0 * h)),
                (2, 18.0 / (12.0 * h)),
                (3, -6.0 / (12.0 * h)),
                (4, 1.0 / (12.0 * h)),
            ];
        }
        if idx == n - 2 {
            return vec![
                (n - 1, 3.0 / (12.0 * h)),
                (n - 2, 10.0 / (12.0 * h)),
                (n - 3, -18.0 / (12.0 * h)),
                (n - 4, 6.0 / (12.0 * h)),
                (n - 5, -1.0 / (12.0 * h)),
            ];
        }
        return vec![
            (n - 1, 25.0 / (12.0 * h)),
            (n - 2, -48.0 / (12.0 * h)),
            (n - 3, 36.0 / (12.0 * h)),
            (n - 4, -16.0 / (12.0 * h)),
            (n - 5, 3.0 / (12.0 * h)),
        ];
    }
    // degraded stencils for very short sweeps
    if n >= 3 {
        if idx == 0 {
            return vec![(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)];
        }
        if idx == n - 1 {
            return vec![(n - 1, 1.5 / h), (n - 2, -2.0 / h), (n - 3, 0.5 / h)];
        }
        return vec![(idx - 1, -0.5 / h), (idx + 1, 0.5 / h)];
    }
    vec![(0, -1.0 / h), (1, 1.0 / h)]
}

const STAGE2_FIELDS: usize = 7; // w11, w12, Re α₁, Im α₁, Re α₂, Im α₂, ρ

struct Stage2Layout {
    n: usize,
    n1: usize,
}

impl Stage2Layout {
    fn block<'a>(&self, y: &'a [f64], col: usize, field: usize) -> &'a [f64] {
        let base = col * STAGE2_FIELDS * self.n + field * self.n;
        &y[base..base + self.n]
    }

    fn block_mut<'a>(&self, y: &'a mut [f64], col: usize, field: usize) -> &'a mut [f64] {
        let base = col * STAGE2_FIELDS * self.n + field * self.n;
        &mut y[base..base + self.n]
    }
}

fn stage2_w22(y: &[f64], layout: &Stage2Layout, col: usize) -> ScalarField {
    let w11 = layout.block(y, col, 0);
    let w12 = layout.block(y, col, 1);
    let rho = layout.block(y, col, 6);
    (0..layout.n).map(|k| (rho[k] + w12[k] * w12[k]) / w11[k]).collect()
}

fn stage2_rhs_packed(
    layout: &Stage2Layout,
    grid_ref: &BaseGrid,
    ops: &SpectralOps,
    y: &[f64],
    dt1: f64,
) -> Vec<f64> {
    let n = layout.n;
    let n1 = layout.n1;
    let w22: Vec<ScalarField> = (0..n1).map(|c| stage2_w22(y, layout, c)).collect();

    let mut out = vec![0.0; y.len()];
    let chunks: Vec<(usize, &mut [f64])> = {
        let mut cols: Vec<(usize, &mut [f64])> = Vec::with_capacity(n1);
        let mut rest = &mut out[..];
        for c in 0..n1 {
            let (head, tail) = rest.split_at_mut(STAGE2_FIELDS * n);
            cols.push((c, head));
            rest = tail;
        }
        cols
    };

    chunks.into_par_iter().for_each(|(col, out_col)| {
        // cross-derivatives along the already-swept t₁ direction
        let weights = fd_weights(n1, col, dt1);
        let mut dw12_dt1 = vec![0.0; n];
        let mut dw22_dt1 = vec![0.0; n];
        for &(c, w) in &weights {
            let w12c = layout.block(y, c, 1);
            for k in 0..n {
                dw12_dt1[k] += w * w12c[k];
                dw22_dt1[k] += w * w22[c][k];
            }
        }
        // ∂w^{11}/∂t₂ = ∂w^{12}/∂t₁ and ∂w^{12}/∂t₂ = ∂w^{22}/∂t₁
        out_col[0..n].copy_from_slice(&dw12_dt1);
        out_col[n..2 * n].copy_from_slice(&dw22_dt1);

        // ∂α_i/∂t₂ = ∂_u w^{i2}
        let w12 = layout.block(y, col, 1);
        let mut da1 = grid::d_du(ops, grid_ref, &grid::real_to_complex(w12));
        ops.dealias_complex(grid_ref, &mut da1);
        let mut da2 = grid::d_du(ops, grid_ref, &grid::real_to_complex(&w22[col]));
        ops.dealias_complex(grid_ref, &mut da2);
        for k in 0..n {
            out_col[2 * n + k] = da1[k].re;
            out_col[3 * n + k] = da1[k].im;
            out_col[4 * n + k] = da2[k].re;
            out_col[5 * n + k] = da2[k].im;
        }

        // ∂ρ/∂t₂ = −2(∂_x Re α₂ − ∂_y Im α₂)
        let re_a2 = layout.block(y, col, 4);
        let im_a2 = layout.block(y, col, 5);
        let dxa = ops.ddx_real(grid_ref, re_a2);
        let dyb = grid::ddy_real(grid_ref, im_a2);
        let mut drho: ScalarField = (0..n).map(|k| -2.0 * (dxa[k] - dyb[k])).collect();
        ops.dealias_real(grid_ref, &mut drho);
        out_col[6 * n..7 * n].copy_from_slice(&drho);
    });
    out
}

fn check_fields_admissible(
    state: &AnsatzState,
    ops: &SpectralOps,
) -> Result<(), EvolveError> {
    let g = &state.grid;
    for (name, field) in [("w11", &state.winv[0])].into_iter().chain(
        if state.m == 2 {
            vec![("w12", &state.winv[1]), ("w22", &state.winv[2])]
        } else {
            vec![]
        },
    ) {
        let excess = ops.band_limit_excess(g, field);
        if excess > INITIAL_DATA_TOL {
            return Err(EvolveError::BandLimit { field: name, excess });
        }
    }
    for a in &state.alpha {
        let re: Vec<f64> = a.iter().map(|z| z.re).collect();
        let im: Vec<f64> = a.iter().map(|z| z.im).collect();
        for part in [&re, &im] {
            let excess = ops.band_limit_excess(g, part);
            if excess > INITIAL_DATA_TOL {
                return Err(EvolveError::BandLimit { field: "alpha", excess });
            }
        }
    }
    let residual = state.constraint_residual();
    if residual > INITIAL_DATA_TOL {
        return Err(EvolveError::InitialConstraint { residual });
    }
    Ok(())
}

fn positivity_check(
    m: usize,
    w11: &[f64],
    w12: Option<&[f64]>,
    w22: Option<&[f64]>,
    rho: &[f64],
    t: &[f64],
) -> Result<(), EvolveError> {
    for k in 0..w11.len() {
        let finite = w11[k].is_finite()
            && rho[k].is_finite()
            && w12.map_or(true, |f| f[k].is_finite())
            && w22.map_or(true, |f| f[k].is_finite());
        if !finite {
            return Err(EvolveError::BlowUp { t: t.to_vec() });
        }
        if m == 1 {
            if w11[k] <= 0.0 {
                return Err(EvolveError::PositivityLoss {
                    t: t.to_vec(),
                    node: k,
                    det: w11[k],
                    trace: w11[k],
                });
            }
        } else {
            let a = w11[k];
            let b = w12.unwrap()[k];
            let c = w22.unwrap()[k];
            let det = a * c - b * b;
            let trace = a + c;
            if det <= 0.0 || trace <= 0.0 {
                return Err(EvolveError::PositivityLoss { t: t.to_vec(), node: k, det, trace });
            }
        }
    }
    Ok(())
}

/// Integrates the staged system from band-limited initial data.
pub fn evolve(initial: &AnsatzState, config: &EvolutionConfig) -> Result<Trajectory, EvolveError> {
    config.validate()?;
    initial.validate()?;
    if initial.m != config.m {
        return Err(EvolveError::Config(format!(
            "initial state has m = {}, config has m = {}",
            initial.m, config.m
        )));
    }
    let g = initial.grid.clone();
    let ops = SpectralOps::new(&g);
    check_fields_admissible(initial, &ops)?;

    let n = g.node_count();
    let m = config.m;
    let dt = config.dt;
    let stride = config.store_every;
    // for m = 2 the trajectory's t₁ axis is the stage-2 line grid
    let line_stride = if m == 2 { config.t1_line_every } else { stride };
    let n1_steps = config.steps(0);
    let t1_full: Vec<f64> = (0..=n1_steps).map(|k| initial.t[0] + k as f64 * dt).collect();
    let t1_stored: Vec<f64> = t1_full.iter().copied().step_by(line_stride).collect();

    // ---- stage 1: sweep t₁ at fixed later coordinates ----
    let ctx = Stage1Ctx {
        grid: &g,
        ops: &ops,
        m,
        w12_frozen: if m == 2 { initial.winv[1].clone() } else { Vec::new() },
        w22_frozen: if m == 2 { initial.winv[2].clone() } else { Vec::new() },
        free_w12: config.free_w12.clone(),
        free_w22: config.free_w22.clone(),
        t_base: initial.t.clone(),
    };
    let blocks = if m == 1 { STAGE1_FIELDS_M1 } else { STAGE1_FIELDS_M2 };
    let mut y = stage1_pack(initial);
    let mut stage1_line: Vec<AnsatzState> = vec![initial.clone()];
    for step in 0..n1_steps {
        let t_now = t1_full[step];
        let mut rhs = |yy: &[f64], tt: f64| stage1_rhs_packed(&ctx, yy, tt);
        rk4_step(&mut y, t_now, dt, &mut rhs);
        let t_next = t1_full[step + 1];
        let rho = y[(blocks - 1) * n..blocks * n].to_vec();
        let (winv, w12v, w22v) = if m == 2 {
            let w12 = ctx.free_field(0, t_next);
            let w22 = ctx.free_field(1, t_next);
            let w11: ScalarField =
                (0..n).map(|k| (rho[k] + w12[k] * w12[k]) / w22[k]).collect();
            (vec![w11, w12.clone(), w22.clone()], Some(w12), Some(w22))
        } else {
            (vec![rho.clone()], None, None)
        };
        let mut t_vec = initial.t.clone();
        t_vec[0] = t_next;
        positivity_check(
            m,
            &winv[0],
            w12v.as_deref(),
            w22v.as_deref(),
            &rho,
            &t_vec,
        )?;
        if (step + 1) % line_stride != 0 {
            continue;
        }
        let mut alpha = Vec::with_capacity(m);
        for i in 0..m {
            alpha.push(
                (0..n)
                    .map(|k| Complex64::new(y[(2 * i) * n + k], y[(2 * i + 1) * n + k]))
                    .collect::<ComplexField>(),
            );
        }
        let state = AnsatzState { grid: g.clone(), m, winv, alpha, rho, t: t_vec };
        stage1_line.push(state);
    }

    let trajectory = if m == 1 {
        Trajectory {
            m,
            t1: t1_stored,
            t2: vec![initial.t.get(1).copied().unwrap_or(0.0)],
            states: stage1_line,
        }
    } else {
        // ---- stage 2: advance the whole t₁-line in t₂ ----
        let n1_line = t1_stored.len();
        let h_t1 = dt * line_stride as f64;
        let n2 = config.steps(1) + 1;
        let t2: Vec<f64> = (0..n2).map(|k| initial.t[1] + k as f64 * dt).collect();
        let t2_stored: Vec<f64> = t2.iter().copied().step_by(stride).collect();
        let layout = Stage2Layout { n, n1: n1_line };
        let mut big = vec![0.0; n1_line * STAGE2_FIELDS * n];
        for (c, s) in stage1_line.iter().enumerate() {
            layout.block_mut(&mut big, c, 0).copy_from_slice(&s.winv[0]);
            layout.block_mut(&mut big, c, 1).copy_from_slice(&s.winv[1]);
            for k in 0..n {
                layout.block_mut(&mut big, c, 2)[k] = s.alpha[0][k].re;
                layout.block_mut(&mut big, c, 3)[k] = s.alpha[0][k].im;
                layout.block_mut(&mut big, c, 4)[k] = s.alpha[1][k].re;
                layout.block_mut(&mut big, c, 5)[k] = s.alpha[1][k].im;
            }
            layout.block_mut(&mut big, c, 6).copy_from_slice(&s.rho);
        }

        let mut states = stage1_line;
        states.reserve(n1_line * (t2_stored.len() - 1));
        for step in 0..n2 - 1 {
            let t_now = t2[step];
            let mut rhs =
                |yy: &[f64], _tt: f64| stage2_rhs_packed(&layout, &g, &ops, yy, h_t1);
            rk4_step(&mut big, t_now, dt, &mut rhs);
            let t_next = t2[step + 1];
            // cheap per-step admissibility pass over every column
            for c in 0..n1_line {
                let w11 = layout.block(&big, c, 0);
                let w12 = layout.block(&big, c, 1);
                let rho = layout.block(&big, c, 6);
                let w22 = stage2_w22(&big, &layout, c);
                positivity_check(2, w11, Some(w12), Some(&w22), rho, &[t1_stored[c], t_next])?;
            }
            if (step + 1) % stride != 0 {
                continue;
            }
            for c in 0..n1_line {
                let w11 = layout.block(&big, c, 0).to_vec();
                let w12 = layout.block(&big, c, 1).to_vec();
                let rho = layout.block(&big, c, 6).to_vec();
                let w22 = stage2_w22(&big, &layout, c);
                let alpha1: ComplexField = (0..n)
                    .map(|k| {
                        Complex64::new(
                            layout.block(&big, c, 2)[k],
                            layout.block(&big, c, 3)[k],
                        )
                    })
                    .collect();
                let alpha2: ComplexField = (0..n)
                    .map(|k| {
                        Complex64::new(
                            layout.block(&big, c, 4)[k],
                            layout.block(&big, c, 5)[k],
                        )
                    })
                    .collect();
                states.push(AnsatzState {
                    grid: g.clone(),
                    m: 2,
                    winv: vec![w11, w12, w22],
                    alpha: vec![alpha1, alpha2],
                    rho,
                    t: vec![t1_stored[c], t_next],
                });
            }
        }
        Trajectory { m, t1: t1_stored, t2: t2_stored, states }
    };

    if let Some(ceiling) = config.residual_ceiling {
        let verification = verify_trajectory(&trajectory, &VerifyOptions::equations_only())?;
        if verification.max_equation_residual > ceiling {
            let (t1w, t2w) = verification.worst_point;
            return Err(EvolveError::ResidualCeiling {
                t1: t1w,
                t2: t2w,
                value: verification.max_equation_residual,
                ceiling,
                equation: verification.worst_equation,
            });
        }
    }
    Ok(trajectory)
}

/// Options for trajectory verification.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Pointwise Hitchin checks per sampled trajectory point.
    pub hitchin: HitchinMode,
    /// How many trajectory points get pointwise + closure treatment.
    pub sample_points: usize,
    /// Compute numerical dω / dΩ at the sampled points.
    pub closure: bool,
}

impl VerifyOptions {
    pub fn full() -> Self {
        Self { hitchin: HitchinMode::Sample(24), sample_points: 9, closure: true }
    }

    pub fn equations_only() -> Self {
        Self { hitchin: HitchinMode::Off, sample_points: 0, closure: false }
    }
}

/// Aggregated residuals of a whole trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryVerification {
    pub equations: Vec<LabeledResidual>,
    pub max_equation_residual: f64,
    pub worst_equation: String,
    pub worst_point: (f64, f64),
    pub hitchin: Option<HitchinReport>,
    /// Sup of |dω| and |dΩ| coefficients at the sampled points.
    pub closure_omega_sup: Option<f64>,
    pub closure_big_omega_sup: Option<f64>,
    pub points_checked: usize,
}

/// Spacing of a trajectory axis (1.0 for a degenerate single-point axis).
fn axis_spacing(values: &[f64]) -> f64 {
    if values.len() > 1 {
        values[1] - values[0]
    } else {
        1.0
    }
}

/// Finite-difference time derivatives of the state fields at a trajectory
/// grid point (4th-order stencils along each stored t axis).
pub fn time_derivs_at(traj: &Trajectory, it1: usize, it2: usize) -> TimeDerivs {
    let m = traj.m;
    let n = traj.state(0, 0).grid.node_count();
    let entries = if m == 1 { 1 } else { 3 };
    let mut dwinv = vec![vec![vec![0.0; n]; entries]; m];
    let mut dalpha = vec![vec![vec![Complex64::new(0.0, 0.0); n]; m]; m];
    let mut drho = vec![vec![0.0; n]; m];
    for axis in 0..m {
        let (count, idx, h) = if axis == 0 {
            (traj.n1(), it1, axis_spacing(&traj.t1))
        } else {
            (traj.n2(), it2, axis_spacing(&traj.t2))
        };
        let weights = fd_weights(count, idx, h);
        for &(pos, w) in &weights {
            let s = if axis == 0 { traj.state(pos, it2) } else { traj.state(it1, pos) };
            for e in 0..entries {
                for k in 0..n {
                    dwinv[axis][e][k] += w * s.winv[e][k];
                }
            }
            for i in 0..m {
                for k in 0..n {
                    dalpha[axis][i][k] += w * s.alpha[i][k];
                }
            }
            for k in 0..n {
                drho[axis][k] += w * s.rho[k];
            }
        }
    }
    TimeDerivs { dwinv, dalpha, drho }
}

/// Deterministic subsample of trajectory grid points: corners, edge
/// midpoints and centre first.
fn sample_points(n1: usize, n2: usize, want: usize) -> Vec<(usize, usize)> {
    let mut pts = Vec::new();
    let xs = [0, n1 / 2, n1 - 1];
    let ys = [0, n2 / 2, n2 - 1];
    for &b in &ys {
        for &a in &xs {
            if !pts.contains(&(a, b)) {
                pts.push((a, b));
            }
        }
    }
    pts.truncate(want.max(1));
    pts
}

pub fn verify_trajectory(
    traj: &Trajectory,
    opts: &VerifyOptions,
) -> Result<TrajectoryVerification, EvolveError> {
    let g = &traj.state(0, 0).grid;
    let ops = SpectralOps::new(g);
    let mut agg: Vec<LabeledResidual> = Vec::new();
    let mut worst = 0.0f64;
    let mut worst_eq = String::new();
    let mut worst_point = (traj.t1[0], traj.t2[0]);
    let mut points = 0usize;
    for (it1, it2, state) in traj.iter_indexed() {
        let derivs = time_derivs_at(traj, it1, it2);
        let report: ResidualReport =
            ansatz::verify_structure_with(state, Some(&derivs), HitchinMode::Off, &ops)?;
        points += 1;
        for r in &report.equations {
            match agg.iter_mut().find(|a| a.equation == r.equation) {
                Some(slot) => {
                    slot.sup = slot.sup.max(r.sup);
                    slot.l2 = slot.l2.max(r.l2);
                }
                None => agg.push(r.clone()),
            }
            if r.sup > worst {
                worst = r.sup;
                worst_eq = r.equation.clone();
                worst_point = (traj.t1[it1], traj.t2[it2]);
            }
        }
    }

    let mut hitchin_agg: Option<HitchinReport> = None;
    let mut closure_omega: Option<f64> = None;
    let mut closure_big: Option<f64> = None;
    if opts.sample_points > 0 && traj.m == 2 {
        let pts = sample_points(traj.n1(), traj.n2(), opts.sample_points);
        for &(it1, it2) in &pts {
            let state = traj.state(it1, it2);
            let report = ansatz::verify_structure_with(state, None, opts.hitchin, &ops)?;
            if let Some(h) = report.hitchin {
                hitchin_agg = Some(match hitchin_agg.take() {
                    None => h,
                    Some(prev) => HitchinReport {
                        decomposable_ok: prev.decomposable_ok && h.decomposable_ok,
                        min_volume_pairing: prev.min_volume_pairing.min(h.min_volume_pairing),
                        wedge_sup: prev.wedge_sup.max(h.wedge_sup),
                        normalization_sup: prev.normalization_sup.max(h.normalization_sup),
                        identity_volume_sup: prev
                            .identity_volume_sup
                            .max(h.identity_volume_sup),
                        identity_theta_dt_sup: prev
                            .identity_theta_dt_sup
                            .max(h.identity_theta_dt_sup),
                        nodes_checked: prev.nodes_checked + h.nodes_checked,
                    },
                });
            }
            if opts.closure {
                let (d_om, d_big) = closure_at(traj, it1, it2, &ops)?;
                closure_omega = Some(closure_omega.unwrap_or(0.0).max(d_om));
                closure_big = Some(closure_big.unwrap_or(0.0).max(d_big));
            }
        }
    }

    Ok(TrajectoryVerification {
        equations: agg,
        max_equation_residual: worst,
        worst_equation: worst_eq,
        worst_point,
        hitchin: hitchin_agg,
        closure_omega_sup: closure_omega,
        closure_big_omega_sup: closure_big,
        points_checked: points,
    })
}

/// Numerical exterior-derivative residuals ‖dω‖, ‖dΩ‖ at one trajectory
/// point: spatial terms from the assembled coefficient fields, t-terms
/// from finite differences of the neighbouring states' assembled fields.
fn closure_at(
    traj: &Trajectory,
    it1: usize,
    it2: usize,
    ops: &SpectralOps,
) -> Result<(f64, f64), EvolveError> {
    let g = &traj.state(0, 0).grid;
    let (center_big, center_om) = ansatz::form_fields(traj.state(it1, it2))?;
    let mut d_om_t: Vec<FormField> = Vec::new();
    let mut d_big_t: Vec<FormField> = Vec::new();
    for axis in 0..2 {
        let (count, idx, h) = if axis == 0 {
            (traj.n1(), it1, axis_spacing(&traj.t1))
        } else {
            (traj.n2(), it2, axis_spacing(&traj.t2))
        };
        let weights = fd_weights(count, idx, h);
        let mut acc_om = center_om.zero_like();
        let mut acc_big = center_big.zero_like();
        for &(pos, w) in &weights {
            let state =
                if axis == 0 { traj.state(pos, it2) } else { traj.state(it1, pos) };
            let (big, om) = ansatz::form_fields(state)?;
            acc_om.scale_add(&om, w);
            acc_big.scale_add(&big, w);
        }
        d_om_t.push(acc_om);
        d_big_t.push(acc_big);
    }
    let d_om = ansatz::exterior_derivative(
        &center_om,
        &[&d_om_t[0], &d_om_t[1]],
        g,
        ops,
    );
    let d_big = ansatz::exterior_derivative(
        &center_big,
        &[&d_big_t[0], &d_big_t[1]],
        g,
        ops,
    );
    Ok((d_om.sup_norm(), d_big.sup_norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::constant_state;
    use crate::grid::BaseGrid;
    use crate::C64;

    fn c(re: f64, im: f64) -> C64 {
        Complex64::new(re, im)
    }

    fn small_grid() -> BaseGrid {
        BaseGrid::new(1.0, 16, 0.0, 1.0, 4).unwrap()
    }

    fn sinusoidal_m1(grid: &BaseGrid, eps: f64) -> AnsatzState {
        let n = grid.node_count();
        let mut w11 = vec![0.0; n];
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let x = grid.x(ix);
                w11[grid.idx(ix, iy)] =
                    1.0 + eps * (2.0 * std::f64::consts::PI * x / grid.kappa).sin();
            }
        }
        AnsatzState::new(
            grid.clone(),
            1,
            vec![w11.clone()],
            vec![vec![c(0.0, 0.0); n]],
            w11,
            vec![0.0],
        )
        .unwrap()
    }

    #[test]
    fn flat_data_is_stationary() {
        let state = constant_state(small_grid(), 2, &[1.0, 0.0, 1.0], &[c(0.0, 0.0); 2], vec![0.0, 0.0])
            .unwrap();
        let config = EvolutionConfig::new(2, vec![0.05, 0.05], 0.01).unwrap();
        let rhs = stage1_rhs(&state, &config).unwrap();
        assert!(grid::sup_norm_complex(&rhs.dalpha[0]) <= 1e-14);
        assert!(grid::sup_norm_complex(&rhs.dalpha[1]) <= 1e-14);
        assert!(grid::sup_norm_real(&rhs.drho) <= 1e-14);

        let traj = evolve(&state, &config).unwrap();
        for (_, _, s) in traj.iter_indexed() {
            assert!(state.sup_distance(s) <= 1e-13);
        }
        let verification = verify_trajectory(&traj, &VerifyOptions::full()).unwrap();
        assert!(verification.max_equation_residual <= 1e-12, "{verification:?}");
        assert!(verification.closure_omega_sup.unwrap() <= 1e-12);
        assert!(verification.closure_big_omega_sup.unwrap() <= 1e-12);
    }

    #[test]
    fn stage1_rhs_matches_hand_derivative_m1() {
        // w¹¹ = 1 + ε sin(2πx/κ) ⇒ ∂α₁/∂t = ∂_u w¹¹ = ½ε(2π/κ)cos(2πx/κ)
        let g = small_grid();
        let eps = 0.2;
        let state = sinusoidal_m1(&g, eps);
        let config = EvolutionConfig::new(1, vec![0.05], 0.01).unwrap();
        let rhs = stage1_rhs(&state, &config).unwrap();
        let k = 2.0 * std::f64::consts::PI / g.kappa;
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let expect = 0.5 * eps * k * (k * g.x(ix)).cos();
                let got = rhs.dalpha[0][g.idx(ix, iy)];
                assert!((got.re - expect).abs() < 1e-11, "ix={ix}: {} vs {expect}", got.re);
                assert!(got.im.abs() < 1e-11);
            }
        }
        // ρ is initially stationary because α = 0
        assert!(grid::sup_norm_real(&rhs.drho) <= 1e-14);
    }

    #[test]
    fn m1_evolution_preserves_constraint_and_symmetry() {
        let g = small_grid();
        let state = sinusoidal_m1(&g, 0.2);
        let mut config = EvolutionConfig::new(1, vec![0.05], 0.005).unwrap();
        config.residual_ceiling = Some(1e-4);
        let traj = evolve(&state, &config).unwrap();
        for (_, _, s) in traj.iter_indexed() {
            assert!(s.constraint_residual() <= 1e-13);
        }
        let verification = verify_trajectory(&traj, &VerifyOptions::equations_only()).unwrap();
        assert!(verification.max_equation_residual <= 1e-6, "{verification:?}");
    }

    #[test]
    fn constraint_propagation_along_trajectory() {
        // ∂ρ/∂t₁ + 2(∂_x Re α₁ − ∂_y Im α₁) → 0 at scheme order: this is
        // the reduced-Kähler equation measured post hoc by differencing ρ.
        let g = small_grid();
        let state = sinusoidal_m1(&g, 0.2);
        let config = EvolutionConfig::new(1, vec![0.05], 0.0025).unwrap();
        let traj = evolve(&state, &config).unwrap();
        let ops = SpectralOps::new(&g);
        let n = g.node_count();
        let mid = traj.n1() / 2;
        let derivs = time_derivs_at(&traj, mid, 0);
        let s = traj.state(mid, 0);
        let re: Vec<f64> = s.alpha[0].iter().map(|z| z.re).collect();
        let im: Vec<f64> = s.alpha[0].iter().map(|z| z.im).collect();
        let dxa = ops.ddx_real(&g, &re);
        let dyb = grid::ddy_real(&g, &im);
        let mut worst = 0.0f64;
        for k in 0..n {
            worst = worst.max((derivs.drho[0][k] + 2.0 * (dxa[k] - dyb[k])).abs());
        }
        assert!(worst <= 1e-8, "constraint propagation residual {worst}");
    }

    #[test]
    fn m1_convergence_is_fourth_order() {
        let g = small_grid();
        let state = sinusoidal_m1(&g, 0.2);
        let reference = {
            let config = EvolutionConfig::new(1, vec![0.04], 0.0005).unwrap();
            evolve(&state, &config).unwrap()
        };
        let mut errs = Vec::new();
        for dt in [0.008, 0.004, 0.002] {
            let config = EvolutionConfig::new(1, vec![0.04], dt).unwrap();
            let traj = evolve(&state, &config).unwrap();
            errs.push(traj.sup_distance_to_reference(&reference).unwrap());
        }
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order >= 3.5, "measured order {order}, errors {errs:?}");
    }

    #[test]
    fn positivity_loss_is_reported() {
        let g = small_grid();
        let n = g.node_count();
        // strong transverse α gradient drives ρ negative quickly
        let mut alpha1 = vec![c(0.0, 0.0); n];
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let x = g.x(ix);
                alpha1[g.idx(ix, iy)] =
                    c(8.0 * (2.0 * std::f64::consts::PI * x / g.kappa).cos(), 0.0);
            }
        }
        let state = AnsatzState::new(
            g.clone(),
            1,
            vec![vec![1.0; n]],
            vec![alpha1],
            vec![1.0; n],
            vec![0.0],
        )
        .unwrap();
        let config = EvolutionConfig::new(1, vec![0.2], 0.005).unwrap();
        match evolve(&state, &config) {
            Err(EvolveError::PositivityLoss { .. }) => {}
            other => panic!("expected positivity loss, got {other:?}"),
        }
    }

    #[test]
    fn band_limit_violation_is_rejected() {
        let g = small_grid();
        let n = g.node_count();
        let mut w11 = vec![0.0; n];
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let x = g.x(ix);
                // mode 7 of a 16-point grid sits above the 16/3 cutoff
                w11[g.idx(ix, iy)] =
                    2.0 + 0.1 * (2.0 * std::f64::consts::PI * 7.0 * x / g.kappa).sin();
            }
        }
        let state =
            AnsatzState::new(g, 1, vec![w11.clone()], vec![vec![c(0.0, 0.0); n]], w11, vec![0.0])
                .unwrap();
        let config = EvolutionConfig::new(1, vec![0.05], 0.01).unwrap();
        match evolve(&state, &config) {
            Err(EvolveError::BandLimit { .. }) => {}
            other => panic!("expected band-limit rejection, got {other:?}"),
        }
    }

    #[test]
    fn verification_catches_corrupted_trajectory() {
        let g = small_grid();
        let state = sinusoidal_m1(&g, 0.2);
        let config = EvolutionConfig::new(1, vec![0.05], 0.005).unwrap();
        let traj = evolve(&state, &config).unwrap();
        let clean = verify_trajectory(&traj, &VerifyOptions::equations_only())
            .unwrap()
            .max_equation_residual;
        let mut corrupted = traj.clone();
        let mid = corrupted.n1() / 2;
        {
            let s = corrupted.state_mut(mid, 0);
            for v in s.rho.iter_mut() {
                *v += 1e-3;
            }
            for v in s.winv[0].iter_mut() {
                *v += 1e-3;
            }
        }
        let dirty = verify_trajectory(&corrupted, &VerifyOptions::equations_only())
            .unwrap()
            .max_equation_residual;
        assert!(dirty > 100.0 * clean.max(1e-8), "clean {clean}, corrupted {dirty}");
    }

    #[test]
    fn residual_ceiling_is_enforced() {
        let g = small_grid();
        let state = sinusoidal_m1(&g, 0.2);
        let mut config = EvolutionConfig::new(1, vec![0.05], 0.005).unwrap();
        config.residual_ceiling = Some(1e-14);
        match evolve(&state, &config) {
            Err(EvolveError::ResidualCeiling { value, ceiling, .. }) => {
                assert!(value > ceiling);
            }
            other => panic!("expected residual ceiling rejection, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(EvolutionConfig::new(3, vec![0.1; 3], 0.01).is_err());
        assert!(EvolutionConfig::new(1, vec![0.005], 0.01).is_err());
        assert!(EvolutionConfig::new(2, vec![0.1], 0.01).is_err());
        // non-multiple t_max
        assert!(EvolutionConfig::new(1, vec![0.095], 0.01).is_err());
        // m=2 with too few stage-1 points for the cross-stencil
        assert!(EvolutionConfig::new(2, vec![0.02, 0.1], 0.01).is_err());
    }

    #[test]
    fn m2_sinusoidal_short_run_verifies() {
        let g = small_grid();
        let n = g.node_count();
        let mut w11 = vec![0.0; n];
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let x = g.x(ix);
                w11[g.idx(ix, iy)] =
                    1.0 + 0.2 * (2.0 * std::f64::consts::PI * x / g.kappa).sin();
            }
        }
        let state = AnsatzState::new(
            g.clone(),
            2,
            vec![w11.clone(), vec![0.0; n], vec![1.0; n]],
            vec![vec![c(0.0, 0.0); n]; 2],
            w11,
            vec![0.0, 0.0],
        )
        .unwrap();
        let mut config = EvolutionConfig::new(2, vec![0.05, 0.05], 0.005).unwrap();
        config.residual_ceiling = Some(1e-5);
        let traj = evolve(&state, &config).unwrap();
        assert_eq!(traj.n1(), 11);
        assert_eq!(traj.n2(), 11);
        // stage-1 equations continue to hold on stage-2 states (all j
        // residuals aggregated over the full grid)
        let verification = verify_trajectory(&traj, &VerifyOptions::full()).unwrap();
        assert!(verification.max_equation_residual <= 1e-6, "{verification:?}");
        let h = verification.hitchin.unwrap();
        assert!(h.decomposable_ok);
        assert!(h.normalization_sup <= 1e-10);
        // determinant pinning is exact up to rounding
        for (_, _, s) in traj.iter_indexed() {
            assert!(s.constraint_residual() <= 1e-13);
        }
    }
}
