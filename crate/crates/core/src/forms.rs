//! Exact exterior algebra of complex-valued alternating multilinear forms
//! on R^d.
//!
//! A [`AltFormOf`] is stored as a sparse map from basis blades to complex
//! coefficients. Blades are strictly increasing tuples of 1-based
//! coordinate indices, packed into a `u32` bitmask (bit `i-1` set means
//! index `i` participates). All operations are pure; forms are immutable
//! values and safe to share across threads.
//!
//! Conventions fixed here and relied on downstream:
//!
//! * `lie_action` uses the infinitesimal-pullback sign,
//!   `(x·a)(v₁,…,v_k) = Σᵢ a(v₁,…,x vᵢ,…,v_k)`.
//! * Iterated contraction by a blade applies the *rightmost* named basis
//!   vector first (`contract_blade(&[1,2])` contracts by e₂, then e₁).

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex;
use num_traits::Zero;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormsError {
    #[error("ambient dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cannot contract a degree-0 form")]
    ZeroDegreeContraction,
    #[error("blade index {index} out of range 1..={dim}")]
    BladeIndex { index: usize, dim: usize },
    #[error("blade {0:?} is not strictly increasing")]
    BladeNotSorted(Vec<usize>),
    #[error("blade has {got} indices, expected degree {expected}")]
    BladeLength { expected: usize, got: usize },
    #[error("vector has {got} components, expected {expected}")]
    VectorLength { expected: usize, got: usize },
    #[error("degree {degree} out of range for dimension {dim}")]
    BadDegree { degree: usize, dim: usize },
    #[error("matrix entry ({row},{col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },
}

/// Packs a strictly increasing 1-based index tuple into a bitmask.
fn pack_blade(dim: usize, indices: &[usize]) -> Result<u32, FormsError> {
    let mut mask = 0u32;
    let mut prev = 0usize;
    for &i in indices {
        if i < 1 || i > dim {
            return Err(FormsError::BladeIndex { index: i, dim });
        }
        if i <= prev {
            return Err(FormsError::BladeNotSorted(indices.to_vec()));
        }
        prev = i;
        mask |= 1 << (i - 1);
    }
    Ok(mask)
}

/// Unpacks a bitmask into the strictly increasing 1-based index tuple.
pub fn unpack_blade(mask: u32) -> Vec<usize> {
    (0..32).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).collect()
}

/// Sign (−1)^t of merging sorted blade `b` after sorted blade `a`:
/// each index of `b` moves left past the larger indices of `a`.
fn merge_sign(a: u32, b: u32) -> i32 {
    let mut transpositions = 0u32;
    let mut bb = b;
    while bb != 0 {
        let bit = bb.trailing_zeros();
        // indices of `a` strictly above `bit`
        transpositions += (a >> (bit + 1)).count_ones();
        bb &= bb - 1;
    }
    if transpositions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Degree-k complex-valued alternating form on R^d, exact coefficient map
/// over sorted index blades. Absent blade = zero coefficient; exact zeros
/// are pruned on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AltFormOf<S: Real> {
    dim: usize,
    degree: usize,
    coeffs: BTreeMap<u32, Complex<S>>,
}

impl<S: Real> AltFormOf<S> {
    /// The zero form of the given degree. `degree` may exceed `dim` (such a
    /// form is necessarily zero); constructors with explicit blades reject
    /// that case.
    pub fn zero(dim: usize, degree: usize) -> Self {
        Self { dim, degree, coeffs: BTreeMap::new() }
    }

    /// Degree-0 form with the given value on the empty blade.
    pub fn scalar(dim: usize, value: Complex<S>) -> Self {
        let mut coeffs = BTreeMap::new();
        if !value.is_zero() {
            coeffs.insert(0u32, value);
        }
        Self { dim, degree: 0, coeffs }
    }

    /// The basis covector dx_i (1-based).
    pub fn basis_covector(dim: usize, index: usize) -> Result<Self, FormsError> {
        let mask = pack_blade(dim, &[index])?;
        let mut coeffs = BTreeMap::new();
        coeffs.insert(mask, Complex::new(S::one(), S::zero()));
        Ok(Self { dim, degree: 1, coeffs })
    }

    /// One-form Σ components[i]·dx_{i+1}.
    pub fn one_form(dim: usize, components: &[Complex<S>]) -> Result<Self, FormsError> {
        if components.len() != dim {
            return Err(FormsError::VectorLength { expected: dim, got: components.len() });
        }
        let mut coeffs = BTreeMap::new();
        for (i, &c) in components.iter().enumerate() {
            if !c.is_zero() {
                coeffs.insert(1 << i, c);
            }
        }
        Ok(Self { dim, degree: 1, coeffs })
    }

    /// Builds a form from (blade, coefficient) pairs; blades are 1-based
    /// strictly increasing tuples of length `degree`.
    pub fn from_blades(
        dim: usize,
        degree: usize,
        entries: &[(&[usize], Complex<S>)],
    ) -> Result<Self, FormsError> {
        if degree > dim {
            return Err(FormsError::BadDegree { degree, dim });
        }
        let mut coeffs = BTreeMap::new();
        for (indices, c) in entries {
            if indices.len() != degree {
                return Err(FormsError::BladeLength { expected: degree, got: indices.len() });
            }
            let mask = pack_blade(dim, indices)?;
            if !c.is_zero() {
                let slot = coeffs.entry(mask).or_insert_with(Complex::zero);
                *slot = *slot + *c;
                if slot.is_zero() {
                    coeffs.remove(&mask);
                }
            }
        }
        Ok(Self { dim, degree, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficient of a blade (1-based indices), zero when absent.
    pub fn coeff(&self, indices: &[usize]) -> Complex<S> {
        match pack_blade(self.dim, indices) {
            Ok(mask) => self.coeffs.get(&mask).copied().unwrap_or_else(Complex::zero),
            Err(_) => Complex::zero(),
        }
    }

    /// Iterator over (packed blade, coefficient).
    pub fn terms(&self) -> impl Iterator<Item = (u32, Complex<S>)> + '_ {
        self.coeffs.iter().map(|(&m, &c)| (m, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest coefficient magnitude (sup norm over blades).
    pub fn max_abs(&self) -> S {
        self.coeffs
            .values()
            .map(|c| c.norm())
            .fold(S::zero(), |acc, v| if v > acc { v } else { acc })
    }

    /// Coefficient-wise equality within an absolute tolerance.
    /// Zero forms compare equal regardless of nominal degree.
    pub fn approx_eq(&self, other: &Self, tol: S) -> bool {
        if self.dim != other.dim {
            return false;
        }
        if self.degree != other.degree && !(self.is_zero() && other.is_zero()) {
            return false;
        }
        self.sub(other).map(|d| d.max_abs() <= tol).unwrap_or(false)
    }

    fn check_dim(&self, other: &Self) -> Result<(), FormsError> {
        if self.dim != other.dim {
            return Err(FormsError::DimensionMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }

    fn insert_term(coeffs: &mut BTreeMap<u32, Complex<S>>, mask: u32, c: Complex<S>) {
        if c.is_zero() {
            return;
        }
        let slot = coeffs.entry(mask).or_insert_with(Complex::zero);
        *slot = *slot + c;
        if slot.is_zero() {
            coeffs.remove(&mask);
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, FormsError> {
        self.check_dim(other)?;
        let mut coeffs = self.coeffs.clone();
        for (&m, &c) in &other.coeffs {
            Self::insert_term(&mut coeffs, m, c);
        }
        let degree = if self.is_zero() { other.degree } else { self.degree };
        Ok(Self { dim: self.dim, degree, coeffs })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FormsError> {
        self.add(&other.scale(Complex::new(-S::one(), S::zero())))
    }

    pub fn scale(&self, factor: Complex<S>) -> Self {
        let mut coeffs = BTreeMap::new();
        for (&m, &c) in &self.coeffs {
            let v = c * factor;
            if !v.is_zero() {
                coeffs.insert(m, v);
            }
        }
        Self { dim: self.dim, degree: self.degree, coeffs }
    }

    /// Complex conjugate form (blade coefficients conjugated).
    pub fn conj(&self) -> Self {
        let coeffs = self.coeffs.iter().map(|(&m, c)| (m, c.conj())).collect();
        Self { dim: self.dim, degree: self.degree, coeffs }
    }

    /// Exterior product. The result has degree `self.degree + other.degree`
    /// and is the zero form when that exceeds the ambient dimension.
    pub fn wedge(&self, other: &Self) -> Result<Self, FormsError> {
        self.check_dim(other)?;
        let degree = self.degree + other.degree;
        let mut coeffs = BTreeMap::new();
        for (&ma, &ca) in &self.coeffs {
            for (&mb, &cb) in &other.coeffs {
                if ma & mb != 0 {
                    continue;
                }
                let sign = merge_sign(ma, mb);
                let c = if sign > 0 { ca * cb } else { -(ca * cb) };
                Self::insert_term(&mut coeffs, ma | mb, c);
            }
        }
        Ok(Self { dim: self.dim, degree, coeffs })
    }

    /// Interior product ι_v with a real vector.
    pub fn contract(&self, v: &[S]) -> Result<Self, FormsError> {
        if self.degree == 0 {
            return Err(FormsError::ZeroDegreeContraction);
        }
        if v.len() != self.dim {
            return Err(FormsError::VectorLength { expected: self.dim, got: v.len() });
        }
        let mut coeffs = BTreeMap::new();
        for (&mask, &c) in &self.coeffs {
            let mut pos = 0u32;
            let mut rest = mask;
            while rest != 0 {
                let bit = rest.trailing_zeros();
                let comp = v[bit as usize];
                if comp != S::zero() {
                    let sign = if pos % 2 == 0 { S::one() } else { -S::one() };
                    let factor = Complex::new(sign * comp, S::zero());
                    Self::insert_term(&mut coeffs, mask & !(1 << bit), c * factor);
                }
                pos += 1;
                rest &= rest - 1;
            }
        }
        Ok(Self { dim: self.dim, degree: self.degree - 1, coeffs })
    }

    /// Iterated contraction by the basis vectors of a blade, rightmost
    /// index applied first: `contract_blade(&[i, j])` is ι_{e_i} ι_{e_j}.
    pub fn contract_blade(&self, indices: &[usize]) -> Result<Self, FormsError> {
        let mut out = self.clone();
        for &i in indices.iter().rev() {
            if i < 1 || i > self.dim {
                return Err(FormsError::BladeIndex { index: i, dim: self.dim });
            }
            let mut v = vec![S::zero(); self.dim];
            v[i - 1] = S::one();
            out = out.contract(&v)?;
        }
        Ok(out)
    }

    /// Infinitesimal action `(x·a)(v₁,…,v_k) = Σᵢ a(v₁,…,x vᵢ,…,v_k)`.
    pub fn lie_action(&self, x: &LinearMapOf<S>) -> Result<Self, FormsError> {
        if x.dim() != self.dim {
            return Err(FormsError::DimensionMismatch { left: x.dim(), right: self.dim });
        }
        // On covectors the action is dx^j ↦ Σ_m x[j][m] dx^m; replace each
        // blade factor in turn and re-sort.
        let mut coeffs = BTreeMap::new();
        for (&mask, &c) in &self.coeffs {
            let indices = unpack_blade(mask);
            for &j in &indices {
                let without = mask & !(1 << (j - 1));
                for m in 1..=self.dim {
                    let entry = x.get(j - 1, m - 1);
                    if entry == S::zero() {
                        continue;
                    }
                    if without & (1 << (m - 1)) != 0 {
                        continue;
                    }
                    // Move the substituted index m from j's slot to its
                    // sorted position: one transposition per surviving index
                    // strictly between them.
                    let (lo, hi) = if m < j { (m, j) } else { (j, m) };
                    let mask_between = if hi - lo >= 2 {
                        (((1u32 << (hi - lo - 1)) - 1) << lo) & without
                    } else {
                        0
                    };
                    let sign =
                        if mask_between.count_ones() % 2 == 0 { S::one() } else { -S::one() };
                    let factor = Complex::new(sign * entry, S::zero());
                    Self::insert_term(&mut coeffs, without | (1 << (m - 1)), c * factor);
                }
            }
        }
        Ok(Self { dim: self.dim, degree: self.degree, coeffs })
    }

    /// Restriction to the standardly embedded R^k: drops every blade
    /// containing an index above `k`. Idempotent; `restrict(d)` is the
    /// identity.
    pub fn restrict(&self, k: usize) -> Self {
        let keep: u32 = if k >= 32 { u32::MAX } else { (1u32 << k) - 1 };
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(&m, _)| m & !keep == 0)
            .map(|(&m, &c)| (m, c))
            .collect();
        Self { dim: self.dim, degree: self.degree, coeffs }
    }

    /// Pullback `(A*a)(v₁,…,v_k) = a(Av₁,…,Av_k)`.
    pub fn pullback(&self, a: &LinearMapOf<S>) -> Result<Self, FormsError> {
        if a.dim() != self.dim {
            return Err(FormsError::DimensionMismatch { left: a.dim(), right: self.dim });
        }
        // A* dx^j = Σ_m A[j][m] dx^m; pull back blade-by-blade as a wedge of
        // the transformed covectors.
        let mut out = Self::zero(self.dim, self.degree);
        for (&mask, &c) in &self.coeffs {
            let mut acc = Self::scalar(self.dim, Complex::new(S::one(), S::zero()));
            for j in unpack_blade(mask) {
                let row: Vec<Complex<S>> =
                    (0..self.dim).map(|m| Complex::new(a.get(j - 1, m), S::zero())).collect();
                let row_form = Self::one_form(self.dim, &row)?;
                acc = acc.wedge(&row_form)?;
            }
            out = out.add(&acc.scale(c))?;
        }
        out.degree = self.degree;
        Ok(out)
    }

    /// Evaluates the form on `degree` real vectors.
    pub fn eval(&self, vectors: &[&[S]]) -> Result<Complex<S>, FormsError> {
        if vectors.len() != self.degree {
            return Err(FormsError::BladeLength { expected: self.degree, got: vectors.len() });
        }
        for v in vectors {
            if v.len() != self.dim {
                return Err(FormsError::VectorLength { expected: self.dim, got: v.len() });
            }
        }
        let k = self.degree;
        let mut total = Complex::zero();
        let mut sub = vec![S::zero(); k * k];
        for (&mask, &c) in &self.coeffs {
            let rows = unpack_blade(mask);
            for (r, &i) in rows.iter().enumerate() {
                for (col, v) in vectors.iter().enumerate() {
                    sub[r * k + col] = v[i - 1];
                }
            }
            let det = det_small(&mut sub, k);
            total = total + c * Complex::new(det, S::zero());
        }
        Ok(total)
    }

    /// Plücker decomposability test: `a` is a wedge of 1-forms iff
    /// `(ι_ξ a) ∧ a = 0` for every basis (k−1)-blade ξ. Residuals are
    /// compared against `tol` scaled by the squared sup norm of `a`.
    pub fn decomposable_check(&self, tol: S) -> Result<bool, FormsError> {
        if self.degree == 0 {
            return Err(FormsError::ZeroDegreeContraction);
        }
        let scale = self.max_abs() * self.max_abs();
        let bound = tol * if scale > S::zero() { scale } else { S::one() };
        let k = self.degree;
        let mut ok = true;
        for_each_subset(self.dim, k - 1, &mut |subset| {
            if !ok {
                return;
            }
            let contracted = self.contract_blade(subset).expect("valid blade");
            let wedge = contracted.wedge(self).expect("same dim");
            if wedge.max_abs() > bound {
                ok = false;
            }
        });
        Ok(ok)
    }

    /// Renders the form with custom coordinate labels, e.g. `dx1^dy3`.
    pub fn pretty(&self, labels: &[&str]) -> String {
        if self.coeffs.is_empty() {
            return "0".to_string();
        }
        let mut parts = Vec::new();
        for (&mask, &c) in &self.coeffs {
            let blade: Vec<&str> =
                unpack_blade(mask).into_iter().map(|i| labels[i - 1]).collect();
            let coeff = format_complex(c);
            if blade.is_empty() {
                parts.push(coeff);
            } else {
                parts.push(format!("{}·{}", coeff, blade.join("^")));
            }
        }
        parts.join(" + ")
    }
}

fn format_complex<S: Real>(c: Complex<S>) -> String {
    if c.im.is_zero() {
        format!("{}", c.re)
    } else if c.re.is_zero() {
        format!("{}i", c.im)
    } else {
        format!("({}+{}i)", c.re, c.im)
    }
}

impl<S: Real> fmt::Display for AltFormOf<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = (1..=self.dim).map(|i| format!("dx{i}")).collect();
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        write!(f, "{}", self.pretty(&refs))
    }
}

/// Determinant of a k×k matrix stored row-major in `m` (destroyed).
fn det_small<S: Real>(m: &mut [S], k: usize) -> S {
    if k == 0 {
        return S::one();
    }
    let mut det = S::one();
    for col in 0..k {
        let mut pivot = col;
        let mut best = m[col * k + col].abs();
        for r in col + 1..k {
            let v = m[r * k + col].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best == S::zero() {
            return S::zero();
        }
        if pivot != col {
            for c in 0..k {
                m.swap(col * k + c, pivot * k + c);
            }
            det = -det;
        }
        let p = m[col * k + col];
        det = det * p;
        for r in col + 1..k {
            let f = m[r * k + col] / p;
            if f != S::zero() {
                for c in col..k {
                    let sub = f * m[col * k + c];
                    m[r * k + c] = m[r * k + c] - sub;
                }
            }
        }
    }
    det
}

/// Calls `f` on every strictly increasing `size`-subset of 1..=dim.
fn for_each_subset(dim: usize, size: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(dim: usize, size: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == size {
            f(cur);
            return;
        }
        for i in start..=dim {
            cur.push(i);
            rec(dim, size, i + 1, cur, f);
            cur.pop();
        }
    }
    let mut cur = Vec::with_capacity(size);
    rec(dim, size, 1, &mut cur, f);
}

/// Real d×d matrix acting on column vectors of R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMapOf<S: Real> {
    dim: usize,
    entries: Vec<S>, // row-major
}

impl<S: Real> LinearMapOf<S> {
    pub fn zero(dim: usize) -> Self {
        Self { dim, entries: vec![S::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zero(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = S::one();
        }
        m
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> S) -> Result<Self, FormsError> {
        let mut entries = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                let v = f(r, c);
                if !v.is_finite() {
                    return Err(FormsError::NonFiniteEntry { row: r, col: c });
                }
                entries.push(v);
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        self.entries[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: S) {
        self.entries[row * self.dim + col] = v;
    }

    pub fn scale(&self, f: S) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&e| e * f).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self, FormsError> {
        if self.dim != other.dim {
            return Err(FormsError::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let entries =
            self.entries.iter().zip(&other.entries).map(|(&a, &b)| a + b).collect();
        Ok(Self { dim: self.dim, entries })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, FormsError> {
        if self.dim != other.dim {
            return Err(FormsError::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let d = self.dim;
        let mut out = Self::zero(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a == S::zero() {
                    continue;
                }
                for j in 0..d {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product (column action).
    pub fn apply(&self, v: &[S]) -> Result<Vec<S>, FormsError> {
        if v.len() != self.dim {
            return Err(FormsError::VectorLength { expected: self.dim, got: v.len() });
        }
        Ok((0..self.dim)
            .map(|i| {
                let mut acc = S::zero();
                for j in 0..self.dim {
                    acc = acc + self.get(i, j) * v[j];
                }
                acc
            })
            .collect())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), |acc, v| if v > acc { v } else { acc })
    }
}
