//! Linear-algebra core of the Cartan-test computations behind the
//! isometric embedding theorem: for the flag of standardly embedded
//! subspaces R^k ⊂ R^{2n}, the subspaces
//!
//! ```text
//!   h_k = { x ∈ M_{2n}(R) | (x·Ω₀)|_{R^k} = (x·ω₀)|_{R^k} = 0 }
//! ```
//!
//! their codimensions c_k = 4n² − dim h_k, the polar-space dimensions in
//! the coframe quotient, and the extension ranks r = dim H − k − 1.
//!
//! The ambient algebra is the full matrix algebra M_{2n}(R) (dimension
//! 4n²): at n = 3 this gives dim h_k = 36, 36, 35, 31, 22, 14 over the
//! flag, the flag sum Σ c_k = 42 closes exactly at the character target
//! 2n·q, and su(n) sits inside every h_k. Since the kernel only enters
//! through its dimension, the computation is a single rank of the linear
//! map x ↦ (restrict(x·ω₀, k), restrict(x·Ω₀, k)) assembled column by
//! column over the matrix basis.

use num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::forms::{AltFormOf, FormsError, LinearMapOf};
use crate::linalg::DenseMatrix;
use crate::scalar::Real;

/// Pivot threshold for the rank computations. Matrix entries are exact
/// small integers and half-integers in floating representation, so the
/// threshold is uncritical.
pub const RANK_PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CartanError {
    #[error("complex dimension n must be ≥ 2 (got {0})")]
    DimensionTooSmall(usize),
    #[error("flag level k must satisfy 0 ≤ k ≤ {max} (got {got})")]
    FlagLevelOutOfRange { got: usize, max: usize },
    #[error(transparent)]
    Forms(#[from] FormsError),
}

/// The standard SU(n) structure on R^{2n} in the regular presentation:
/// coordinates ordered (x₁..x_n, y₁..y_n), J acting as multiplication by
/// i, ω₀ = Σ dx_k ∧ dy_k and Ω₀ = ⋀ (dx_j + i dy_j).
#[derive(Debug, Clone)]
pub struct SuStructureOf<S: Real> {
    pub n: usize,
    pub j: LinearMapOf<S>,
    pub omega0: AltFormOf<S>,
    pub big_omega0: AltFormOf<S>,
}

pub type SuStructure = SuStructureOf<f64>;

impl<S: Real> SuStructureOf<S> {
    /// Builds (J, ω₀, Ω₀) with dz_j = dx_j + i dy_j.
    pub fn build(n: usize) -> Result<Self, CartanError> {
        if n < 2 {
            return Err(CartanError::DimensionTooSmall(n));
        }
        let d = 2 * n;
        let j = LinearMapOf::from_fn(d, |r, c| {
            if r < n && c == r + n {
                -S::one()
            } else if r >= n && c == r - n {
                S::one()
            } else {
                S::zero()
            }
        })?;

        let one = Complex::new(S::one(), S::zero());
        let i_unit = Complex::new(S::zero(), S::one());
        let mut omega0 = AltFormOf::zero(d, 2);
        for k in 1..=n {
            let blade = [k, n + k];
            omega0 = omega0.add(&AltFormOf::from_blades(d, 2, &[(&blade, one)])?)?;
        }
        let mut big_omega0 = AltFormOf::scalar(d, one);
        for k in 1..=n {
            let dz = AltFormOf::basis_covector(d, k)?
                .add(&AltFormOf::basis_covector(d, n + k)?.scale(i_unit))?;
            big_omega0 = big_omega0.wedge(&dz)?;
        }
        Ok(Self { n, j, omega0, big_omega0 })
    }

    pub fn ambient_dim(&self) -> usize {
        2 * self.n
    }

    /// dim SU(n) = n² − 1.
    pub fn su_dim(&self) -> usize {
        self.n * self.n - 1
    }

    /// Checks J² = −1, Ω₀ ∧ ω₀ = 0, decomposability of Ω₀ and the volume
    /// normalisation ω₀ⁿ/n! = (−1)^{n(n−1)/2}(i/2)ⁿ Ω₀ ∧ Ω̄₀.
    pub fn check_invariants(&self, tol: S) -> Result<(), String> {
        let d = self.ambient_dim();
        let j2 = self.j.matmul(&self.j).map_err(|e| e.to_string())?;
        let minus_id = LinearMapOf::identity(d).scale(-S::one());
        if j2.max_abs_diff(&minus_id) > tol {
            return Err("J² ≠ −Identity".into());
        }
        let wedge = self.big_omega0.wedge(&self.omega0).map_err(|e| e.to_string())?;
        if wedge.max_abs() > tol {
            return Err(format!("Ω₀ ∧ ω₀ ≠ 0 (sup {})", wedge.max_abs()));
        }
        if !self.big_omega0.decomposable_check(tol).map_err(|e| e.to_string())? {
            return Err("Ω₀ fails the decomposability test".into());
        }
        let mut omega_pow = AltFormOf::scalar(d, Complex::new(S::one(), S::zero()));
        let mut factorial = S::one();
        for k in 1..=self.n {
            omega_pow = omega_pow.wedge(&self.omega0).map_err(|e| e.to_string())?;
            factorial = factorial * S::from_usize(k).unwrap();
        }
        let lhs = omega_pow.scale(Complex::new(S::one() / factorial, S::zero()));
        let sign = if (self.n * (self.n - 1) / 2) % 2 == 0 { S::one() } else { -S::one() };
        let half_i = Complex::new(S::zero(), S::from_f64(0.5).unwrap());
        let mut factor = Complex::new(sign, S::zero());
        for _ in 0..self.n {
            factor = factor * half_i;
        }
        let rhs = self
            .big_omega0
            .wedge(&self.big_omega0.conj())
            .map_err(|e| e.to_string())?
            .scale(factor);
        let gap = lhs.sub(&rhs).map_err(|e| e.to_string())?.max_abs();
        if gap > tol {
            return Err(format!("volume normalisation violated (sup {gap})"));
        }
        Ok(())
    }
}

/// Per flag level k: the dimension of h_k inside M_{2n}(R), its codimension
/// c_k, the polar-space dimension in the coframe quotient S, and the
/// extension rank. `extension_rank` may be −1, meaning no extension exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PolarReport {
    pub k: usize,
    pub dim_hk: usize,
    pub c_k: usize,
    pub dim_h_in_s: usize,
    pub extension_rank: i64,
}

/// Assembles the restriction map M_{2n}(R) → (restricted forms) for flag
/// level k and reports rank and derived dimensions.
pub fn polar_subspace(structure: &SuStructure, k: usize) -> Result<PolarReport, CartanError> {
    let d = structure.ambient_dim();
    if k > d - 1 {
        return Err(CartanError::FlagLevelOutOfRange { got: k, max: d - 1 });
    }
    let cols = d * d;
    // Rows: real & imaginary coefficient of every blade of the two
    // restricted forms; one column per matrix basis element E_{rc}.
    let omega_blades = blade_list(d, 2, k);
    let big_blades = blade_list(d, structure.n, k);
    let rows = omega_blades.len() + 2 * big_blades.len();
    let mut matrix = DenseMatrix::<f64>::zeros(rows.max(1), cols);
    for r in 0..d {
        for c in 0..d {
            let col = r * d + c;
            let mut basis = LinearMapOf::zero(d);
            basis.set(r, c, 1.0);
            let acted_omega = structure.omega0.lie_action(&basis)?.restrict(k);
            let acted_big = structure.big_omega0.lie_action(&basis)?.restrict(k);
            for (row, blade) in omega_blades.iter().enumerate() {
                matrix.set(row, col, acted_omega.coeff(blade).re);
            }
            for (i, blade) in big_blades.iter().enumerate() {
                let v = acted_big.coeff(blade);
                matrix.set(omega_blades.len() + 2 * i, col, v.re);
                matrix.set(omega_blades.len() + 2 * i + 1, col, v.im);
            }
        }
    }
    let c_k = matrix.rank(RANK_PIVOT_TOL);
    let dim_hk = cols - c_k;
    let dim_h_in_s = dim_hk + d - structure.su_dim();
    let extension_rank = dim_h_in_s as i64 - k as i64 - 1;
    Ok(PolarReport { k, dim_hk, c_k, dim_h_in_s, extension_rank })
}

fn blade_list(d: usize, degree: usize, max_index: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(degree);
    fn rec(d: usize, degree: usize, max_index: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == degree {
            out.push(cur.clone());
            return;
        }
        for i in start..=max_index.min(d) {
            cur.push(i);
            rec(d, degree, max_index, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(d, degree, max_index, 1, &mut cur, &mut out);
    out
}

/// The Cartan sum Σ c_k over the full flag, together with the character
/// target 2n·q, q = dim SO(2n) − dim SU(n). Both numbers are reported and
/// compared; the tool never forces agreement. (At n = 3 the flag is
/// regular and the sum closes at 42.)
#[derive(Debug, Clone, Serialize)]
pub struct CartanSummary {
    pub n: usize,
    pub c: Vec<usize>,
    pub total: usize,
    pub target: usize,
    pub equal: bool,
}

pub fn cartan_sum(structure: &SuStructure) -> Result<CartanSummary, CartanError> {
    let n = structure.n;
    let mut c = Vec::with_capacity(2 * n);
    for k in 0..2 * n {
        c.push(polar_subspace(structure, k)?.c_k);
    }
    let total = c.iter().sum();
    let q = n * (2 * n - 1) - (n * n - 1);
    let target = 2 * n * q;
    Ok(CartanSummary { n, c, total, target, equal: total == target })
}

/// Full JSON-ready report for the CLI: every flag level plus the sum.
#[derive(Debug, Clone, Serialize)]
pub struct CartanReport {
    pub n: usize,
    pub reports: Vec<PolarReport>,
    pub cartan_sum: usize,
    pub target: usize,
    pub equal: bool,
}

pub fn cartan_report(n: usize) -> Result<CartanReport, CartanError> {
    let structure = SuStructure::build(n)?;
    let mut reports = Vec::new();
    for k in 0..2 * n {
        reports.push(polar_subspace(&structure, k)?);
    }
    let summary = cartan_sum(&structure)?;
    Ok(CartanReport {
        n,
        reports,
        cartan_sum: summary.total,
        target: summary.target,
        equal: summary.equal,
    })
}

/// Real basis of su(n) in the regular presentation: block matrices
/// [[A, −B], [B, A]] with A antisymmetric and B symmetric traceless.
pub fn su_basis(n: usize) -> Vec<LinearMapOf<f64>> {
    let d = 2 * n;
    let mut basis = Vec::new();
    let block = |a: &dyn Fn(usize, usize) -> f64, b: &dyn Fn(usize, usize) -> f64| {
        LinearMapOf::from_fn(d, |r, c| {
            if r < n && c < n {
                a(r, c)
            } else if r < n {
                -b(r, c - n)
            } else if c < n {
                b(r - n, c)
            } else {
                a(r - n, c - n)
            }
        })
        .expect("finite entries")
    };
    // antisymmetric A: E_{pq} − E_{qp}
    for p in 0..n {
        for q in p + 1..n {
            basis.push(block(
                &|r, c| {
                    if r == p && c == q {
                        1.0
                    } else if r == q && c == p {
                        -1.0
                    } else {
                        0.0
                    }
                },
                &|_, _| 0.0,
            ));
        }
    }
    // symmetric traceless B: off-diagonal E_{pq} + E_{qp}
    for p in 0..n {
        for q in p + 1..n {
            basis.push(block(
                &|_, _| 0.0,
                &|r, c| {
                    if (r == p && c == q) || (r == q && c == p) {
                        1.0
                    } else {
                        0.0
                    }
                },
            ));
        }
    }
    // symmetric traceless B: diag(e_p − e_{p+1})
    for p in 0..n - 1 {
        basis.push(block(
            &|_, _| 0.0,
            &|r, c| {
                if r != c {
                    0.0
                } else if r == p {
                    1.0
                } else if r == p + 1 {
                    -1.0
                } else {
                    0.0
                }
            },
        ));
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;
    use num_complex::Complex64;

    #[test]
    fn rejects_n_below_two() {
        assert_eq!(SuStructure::build(1).unwrap_err(), CartanError::DimensionTooSmall(1));
    }

    #[test]
    fn kaehler_form_n2_expansion() {
        let s = SuStructure::build(2).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let expected = AltFormOf::from_blades(4, 2, &[(&[1, 3], one), (&[2, 4], one)]).unwrap();
        assert!(s.omega0.approx_eq(&expected, 0.0));
    }

    #[test]
    fn holomorphic_form_n3_blades() {
        // Brute-force expansion of dz₁∧dz₂∧dz₃: 8 real-coordinate blades
        // with coefficients in {±1, ±i}.
        let s = SuStructure::build(3).unwrap();
        let terms: Vec<(u32, Complex64)> = s.big_omega0.terms().collect();
        assert_eq!(terms.len(), 8);
        for (_, c) in &terms {
            let is_unit_real = c.im == 0.0 && c.re.abs() == 1.0;
            let is_unit_imag = c.re == 0.0 && c.im.abs() == 1.0;
            assert!(is_unit_real || is_unit_imag, "coefficient {c}");
        }
        assert_eq!(s.big_omega0.coeff(&[1, 2, 3]), Complex64::new(1.0, 0.0));
        // dx1 ^ dx2 ^ dy3 carries the coefficient i
        assert_eq!(s.big_omega0.coeff(&[1, 2, 6]), Complex64::new(0.0, 1.0));
    }

    #[test]
    fn structure_invariants_hold() {
        for n in 2..=4 {
            let s = SuStructure::build(n).unwrap();
            s.check_invariants(1e-13).unwrap();
        }
    }

    #[test]
    fn flag_dimension_counts_n3() {
        let s = SuStructure::build(3).unwrap();
        let r3 = polar_subspace(&s, 3).unwrap();
        assert_eq!(
            r3,
            PolarReport { k: 3, dim_hk: 31, c_k: 5, dim_h_in_s: 29, extension_rank: 25 }
        );
        // Level 4: the restriction system has 14 independent equations
        // (11 carry a variable unique to them; the remaining three form a
        // 3×3 block of determinant 2), so dim h₄ = 22. This is the value
        // that closes the Cartan sum at the character target 42 below; the
        // source text's "24" is inconsistent with its own C(F) = 42.
        let r4 = polar_subspace(&s, 4).unwrap();
        assert_eq!(
            r4,
            PolarReport { k: 4, dim_hk: 22, c_k: 14, dim_h_in_s: 20, extension_rank: 15 }
        );
        let r5 = polar_subspace(&s, 5).unwrap();
        assert_eq!(
            r5,
            PolarReport { k: 5, dim_hk: 14, c_k: 22, dim_h_in_s: 12, extension_rank: 6 }
        );
        let r0 = polar_subspace(&s, 0).unwrap();
        assert_eq!(r0.c_k, 0);
    }

    #[test]
    fn codimensions_match_gram_oracle_every_level() {
        // Second route to every rank: eigenvalue count of the Gram matrix
        // of the restriction map. c = (0, 0, 1, 5, 14, 22) at n = 3.
        let s = SuStructure::build(3).unwrap();
        let expected = [0usize, 0, 1, 5, 14, 22];
        for k in 0..6 {
            let direct = polar_subspace(&s, k).unwrap().c_k;
            assert_eq!(direct, gram_rank(&s, k), "row-reduction vs Gram rank at k={k}");
            assert_eq!(direct, expected[k], "c_{k}");
        }
    }

    /// Independent rank oracle: eigenvalue count of the Gram matrix of the
    /// restriction map's rows.
    fn gram_rank(s: &SuStructure, k: usize) -> usize {
        let d = s.ambient_dim();
        let cols = d * d;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let omega_blades = blade_list(d, 2, k);
        let big_blades = blade_list(d, s.n, k);
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for r in 0..d {
            for c in 0..d {
                let mut basis = LinearMapOf::zero(d);
                basis.set(r, c, 1.0);
                let aw = s.omega0.lie_action(&basis).unwrap().restrict(k);
                let ab = s.big_omega0.lie_action(&basis).unwrap().restrict(k);
                let mut col = Vec::new();
                for blade in &omega_blades {
                    col.push(aw.coeff(blade).re);
                }
                for blade in &big_blades {
                    let v = ab.coeff(blade);
                    col.push(v.re);
                    col.push(v.im);
                }
                columns.push(col);
            }
        }
        let nrows = columns[0].len();
        for i in 0..nrows {
            rows.push(columns.iter().map(|c| c[i]).collect());
        }
        // Gram matrix over the column space (cols × cols)
        let mut gram = vec![0.0; cols * cols];
        for a in 0..cols {
            for b in 0..cols {
                let mut v = 0.0;
                for r in 0..nrows {
                    v += rows[r][a] * rows[r][b];
                }
                gram[a * cols + b] = v;
            }
        }
        sym_eigenvalues(&gram, cols).iter().filter(|&&e| e > 1e-9).count()
    }

    #[test]
    fn cartan_sum_n3_closes_at_target_42() {
        let s = SuStructure::build(3).unwrap();
        let summary = cartan_sum(&s).unwrap();
        assert_eq!(summary.target, 42);
        // c = (0, 0, 1, 5, 14, 22): the flag is regular, Σ c_k = 2nq.
        assert_eq!(summary.total, 42);
        assert!(summary.equal);
        assert_eq!(summary.total, summary.c.iter().sum::<usize>());
    }

    #[test]
    fn codimension_monotone_in_flag_level() {
        for n in 2..=4 {
            let s = SuStructure::build(n).unwrap();
            let mut prev = 0usize;
            for k in 0..2 * n {
                let c = polar_subspace(&s, k).unwrap().c_k;
                assert!(c >= prev, "n={n}, k={k}: c dropped from {prev} to {c}");
                prev = c;
            }
        }
    }

    #[test]
    fn su_algebra_sits_inside_every_hk() {
        for n in 2..=4 {
            let s = SuStructure::build(n).unwrap();
            let basis = su_basis(n);
            assert_eq!(basis.len(), n * n - 1);
            for x in &basis {
                let aw = s.omega0.lie_action(x).unwrap();
                let ab = s.big_omega0.lie_action(x).unwrap();
                assert!(aw.max_abs() <= 1e-10, "su({n}) does not annihilate ω₀");
                assert!(ab.max_abs() <= 1e-10, "su({n}) does not annihilate Ω₀");
            }
            let top = polar_subspace(&s, 2 * n - 1).unwrap();
            assert!(top.dim_hk >= s.su_dim());
        }
    }

    #[test]
    fn rank_invariant_under_rescaling() {
        let s = SuStructure::build(3).unwrap();
        let mut scaled = s.clone();
        scaled.omega0 = scaled.omega0.scale(Complex64::new(2.5, 0.0));
        scaled.big_omega0 = scaled.big_omega0.scale(Complex64::new(1.0, 2.0));
        for k in 0..6 {
            let a = polar_subspace(&s, k).unwrap();
            let b = polar_subspace(&scaled, k).unwrap();
            assert_eq!(a.c_k, b.c_k, "k={k}");
        }
    }

    #[test]
    fn flag_level_out_of_range_errors() {
        let s = SuStructure::build(2).unwrap();
        assert!(matches!(
            polar_subspace(&s, 4),
            Err(CartanError::FlagLevelOutOfRange { got: 4, max: 3 })
        ));
    }
}
