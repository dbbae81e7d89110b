//! Deterministic random sampling used by tests, property suites and the
//! randomized acceptance corpora.
//!
//! A small splitmix generator keeps the corpora reproducible across
//! platforms without pulling in an RNG dependency.

use num_complex::Complex64;

use crate::ansatz::AnsatzState;
use crate::grid::BaseGrid;

/// SplitMix64 pseudo-random generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [-1, 1).
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }
}

/// A random band-limited real field on the grid: a short Fourier series in
/// x (modes ≤ nx/3 with geometrically decaying amplitudes) times a low
/// order polynomial in the normalised y coordinate.
pub fn band_limited_field(grid: &BaseGrid, rng: &mut SplitMix64, amplitude: f64) -> Vec<f64> {
    let n_modes = (grid.nx / 8).clamp(2, 6);
    let mut coef = Vec::with_capacity(n_modes);
    for m in 1..=n_modes {
        let decay = 0.5f64.powi(m as i32 - 1);
        coef.push((rng.symmetric() * decay, rng.symmetric() * decay));
    }
    let poly = [rng.symmetric(), 0.5 * rng.symmetric(), 0.25 * rng.symmetric()];
    let mut field = vec![0.0; grid.node_count()];
    for iy in 0..grid.ny {
        let yh = grid.y_normalized(iy);
        let py = 1.0 + 0.3 * (poly[0] + poly[1] * yh + poly[2] * yh * yh);
        for ix in 0..grid.nx {
            let x = grid.x(ix);
            let mut v = 0.0;
            for (m, (a, b)) in coef.iter().enumerate() {
                let phase = 2.0 * std::f64::consts::PI * (m as f64 + 1.0) * x / grid.kappa;
                v += a * phase.cos() + b * phase.sin();
            }
            field[grid.idx(ix, iy)] = amplitude * v * py;
        }
    }
    field
}

/// Random ansatz state with W⁻¹ built as L·Lᵀ from band-limited Cholesky
/// factors (symmetric positive definite by construction) and band-limited
/// complex connection coefficients.
pub fn random_band_limited_state(
    grid: &BaseGrid,
    m: usize,
    rng: &mut SplitMix64,
    amplitude: f64,
) -> AnsatzState {
    assert!(m == 1 || m == 2, "torus rank must be 1 or 2");
    let n = grid.node_count();
    let f11 = band_limited_field(grid, rng, amplitude);
    let (w11, w12, w22) = if m == 2 {
        let f21 = band_limited_field(grid, rng, amplitude);
        let f22 = band_limited_field(grid, rng, amplitude);
        let mut w11 = vec![0.0; n];
        let mut w12 = vec![0.0; n];
        let mut w22 = vec![0.0; n];
        for i in 0..n {
            let l11 = f11[i].exp();
            let l21 = f21[i];
            let l22 = f22[i].exp();
            w11[i] = l11 * l11;
            w12[i] = l11 * l21;
            w22[i] = l21 * l21 + l22 * l22;
        }
        (w11, w12, w22)
    } else {
        let w11 = f11.iter().map(|v| v.exp() * v.exp()).collect();
        (w11, Vec::new(), Vec::new())
    };

    let mut alpha = Vec::with_capacity(m);
    for _ in 0..m {
        let re = band_limited_field(grid, rng, amplitude);
        let im = band_limited_field(grid, rng, amplitude);
        alpha.push(
            re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect::<Vec<_>>(),
        );
    }

    let rho = if m == 2 {
        (0..n).map(|i| w11[i] * w22[i] - w12[i] * w12[i]).collect()
    } else {
        w11.clone()
    };

    let winv = if m == 2 { vec![w11, w12, w22] } else { vec![w11] };
    AnsatzState::new(grid.clone(), m, winv, alpha, rho, vec![0.0; m])
        .expect("generated state satisfies invariants")
}
