//! Kernel operators on a discretised space with a quadrature measure.
//!
//! Matrices hold plain kernel values `M(x_i, x_j)`; the measure `d_i`
//! (for a momentum grid `d_i = w_i k_i²`) enters only when operators are
//! composed, applied or traced:
//!
//! ```text
//! (AB)(i, j) = Σ_m A(i, m) d_m B(m, j)      ⟨u|v⟩ = Σ_i conj(u_i) d_i v_i
//! ```
//!
//! The identity kernel is therefore `diag(1 / d_i)`. Internally several
//! algorithms switch to the "scaled" matrix `S = D^½ M D^½`, for which
//! composition is the ordinary matrix product and unitarity is ordinary
//! unitarity.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative Hermiticity tolerance applied to declared-Hermitian operators.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// A discretised Hilbert space: a list of positive measure weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    label: String,
    measure: Vec<f64>,
}

impl Space {
    pub fn new(label: impl Into<String>, measure: Vec<f64>) -> Result<Arc<Space>> {
        if measure.is_empty() {
            return Err(Error::Domain("empty space".into()));
        }
        if let Some(bad) = measure.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::Domain(format!("non-positive measure weight {bad}")));
        }
        Ok(Arc::new(Space { label: label.into(), measure }))
    }

    pub fn dim(&self) -> usize {
        self.measure.len()
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn same(a: &Arc<Space>, b: &Arc<Space>) -> bool {
        Arc::ptr_eq(a, b) || **a == **b
    }

    fn sqrt_measure(&self) -> Vec<f64> {
        self.measure.iter().map(|d| d.sqrt()).collect()
    }
}

fn check_space(a: &Arc<Space>, b: &Arc<Space>) -> Result<()> {
    if Space::same(a, b) {
        Ok(())
    } else {
        Err(Error::Domain(format!("space mismatch: {} (dim {}) vs {} (dim {})", a.label, a.dim(), b.label, b.dim())))
    }
}

/// A vector on a [`Space`] (form factors, densities `χ`, states).
#[derive(Clone)]
pub struct StateVector {
    space: Arc<Space>,
    values: DVector<C64>,
}

/// Form factors are plain state vectors sampled on the grid.
pub type FormFactor = StateVector;

impl StateVector {
    pub fn new(space: &Arc<Space>, values: DVector<C64>) -> Result<Self> {
        if values.len() != space.dim() {
            return Err(Error::Domain(format!(
                "vector length {} does not match space dimension {}",
                values.len(),
                space.dim()
            )));
        }
        Ok(StateVector { space: Arc::clone(space), values })
    }

    pub fn from_fn(space: &Arc<Space>, f: impl Fn(usize) -> C64) -> Self {
        let values = DVector::from_fn(space.dim(), |i, _| f(i));
        StateVector { space: Arc::clone(space), values }
    }

    pub fn zeros(space: &Arc<Space>) -> Self {
        Self::from_fn(space, |_| C64::new(0.0, 0.0))
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn values(&self) -> &DVector<C64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weighted inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_space(&self.space, &other.space)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked(&self, other: &StateVector) -> C64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .zip(self.space.measure.iter())
            .map(|((u, v), d)| u.conj() * v * *d)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.inner_unchecked(self).re
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, c: C64) -> StateVector {
        StateVector { space: Arc::clone(&self.space), values: &self.values * c }
    }

    pub fn add(&self, other: &StateVector) -> Result<StateVector> {
        check_space(&self.space, &other.space)?;
        Ok(StateVector { space: Arc::clone(&self.space), values: &self.values + &other.values })
    }

    /// `self + c · other`.
    pub fn axpy(&self, c: C64, other: &StateVector) -> Result<StateVector> {
        check_space(&self.space, &other.space)?;
        Ok(StateVector { space: Arc::clone(&self.space), values: &self.values + &other.values * c })
    }

    pub fn to_scaled(&self) -> DVector<C64> {
        let s = self.space.sqrt_measure();
        DVector::from_fn(self.len(), |i, _| self.values[i] * s[i])
    }

    pub fn from_scaled(space: &Arc<Space>, v: &DVector<C64>) -> Self {
        let s = space.sqrt_measure();
        Self::from_fn(space, |i| v[i] / s[i])
    }
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateVector").field("space", &self.space.label).field("dim", &self.len()).finish()
    }
}

/// A kernel operator on a [`Space`].
#[derive(Clone)]
pub struct OperatorMatrix {
    space: Arc<Space>,
    entries: DMatrix<C64>,
    hermitian: bool,
}

impl fmt::Debug for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorMatrix")
            .field("space", &self.space.label)
            .field("dim", &self.dim())
            .field("hermitian", &self.hermitian)
            .finish()
    }
}

impl OperatorMatrix {
    /// Wraps kernel values. A `hermitian` declaration is verified.
    pub fn new(space: &Arc<Space>, entries: DMatrix<C64>, hermitian: bool) -> Result<Self> {
        let n = space.dim();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::Domain(format!(
                "matrix {}x{} does not match space dimension {n}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let op = OperatorMatrix { space: Arc::clone(space), entries, hermitian: false };
        if hermitian {
            op.declare_hermitian()
        } else {
            Ok(op)
        }
    }

    /// Verifies `max|M − M†| ≤ 1e-12 · max|M|` and sets the flag.
    pub fn declare_hermitian(mut self) -> Result<Self> {
        let resid = self.hermiticity_residual();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        if resid > HERMITIAN_TOL * scale {
            return Err(Error::Domain(format!(
                "operator declared Hermitian has residual {resid:.3e} (scale {scale:.3e})"
            )));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn from_fn(space: &Arc<Space>, hermitian: bool, f: impl Fn(usize, usize) -> C64) -> Result<Self> {
        let n = space.dim();
        Self::new(space, DMatrix::from_fn(n, n, f), hermitian)
    }

    pub fn zeros(space: &Arc<Space>) -> Self {
        let n = space.dim();
        OperatorMatrix { space: Arc::clone(space), entries: DMatrix::zeros(n, n), hermitian: true }
    }

    /// The identity kernel `diag(1/d_i)`.
    pub fn identity(space: &Arc<Space>) -> Self {
        Self::multiplication(space, &vec![1.0; space.dim()])
    }

    /// Multiplication operator `(Oψ)_i = values_i ψ_i`, e.g. kinetic energy.
    pub fn multiplication(space: &Arc<Space>, values: &[f64]) -> Self {
        let n = space.dim();
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            entries[(i, i)] = C64::new(values[i] / space.measure[i], 0.0);
        }
        OperatorMatrix { space: Arc::clone(space), entries, hermitian: true }
    }

    /// Dyad `|u⟩ c ⟨v|`.
    pub fn dyad(u: &StateVector, c: C64, v: &StateVector) -> Result<Self> {
        check_space(&u.space, &v.space)?;
        let entries = &u.values * v.values.adjoint() * c;
        Ok(OperatorMatrix { space: Arc::clone(&u.space), entries, hermitian: false })
    }

    pub fn from_scaled(space: &Arc<Space>, scaled: &DMatrix<C64>, hermitian: bool) -> Result<Self> {
        let s = space.sqrt_measure();
        let n = space.dim();
        let entries = DMatrix::from_fn(n, n, |i, j| scaled[(i, j)] / (s[i] * s[j]));
        Self::new(space, entries, hermitian)
    }

    /// `D^½ M D^½`, the matrix of the operator in an orthonormal basis.
    pub fn to_scaled(&self) -> DMatrix<C64> {
        let s = self.space.sqrt_measure();
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.entries[(i, j)] * (s[i] * s[j]))
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[(i, j)]
    }

    /// `A B` with the measure on the contracted index.
    pub fn compose(&self, other: &OperatorMatrix) -> Result<Self> {
        check_space(&self.space, &other.space)?;
        let mut left = self.entries.clone();
        for (j, d) in self.space.measure.iter().enumerate() {
            left.column_mut(j).scale_mut(*d);
        }
        Ok(OperatorMatrix { space: Arc::clone(&self.space), entries: left * &other.entries, hermitian: false })
    }

    /// Conjugation `X† self X`; Hermitian whenever `self` is.
    pub fn sandwich(&self, x: &OperatorMatrix) -> Result<Self> {
        let mut out = x.adjoint().compose(&self.compose(x)?)?;
        out.hermitian = self.hermitian;
        Ok(out)
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<Self> {
        check_space(&self.space, &other.space)?;
        Ok(OperatorMatrix {
            space: Arc::clone(&self.space),
            entries: &self.entries + &other.entries,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn sub(&self, other: &OperatorMatrix) -> Result<Self> {
        check_space(&self.space, &other.space)?;
        Ok(OperatorMatrix {
            space: Arc::clone(&self.space),
            entries: &self.entries - &other.entries,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn scale(&self, c: C64) -> Self {
        OperatorMatrix {
            space: Arc::clone(&self.space),
            entries: &self.entries * c,
            hermitian: self.hermitian && c.im == 0.0,
        }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        OperatorMatrix { space: Arc::clone(&self.space), entries: self.entries.adjoint(), hermitian: self.hermitian }
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        check_space(&self.space, &v.space)?;
        let weighted = DVector::from_fn(v.len(), |i, _| v.values[i] * self.space.measure[i]);
        Ok(StateVector { space: Arc::clone(&self.space), values: &self.entries * weighted })
    }

    /// `⟨u|self|v⟩`.
    pub fn matrix_element(&self, u: &StateVector, v: &StateVector) -> Result<C64> {
        u.inner(&self.apply(v)?)
    }

    /// Measure-weighted Frobenius norm.
    pub fn norm(&self) -> f64 {
        let d = &self.space.measure;
        let mut acc = 0.0;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                acc += self.entries[(i, j)].norm_sqr() * d[i] * d[j];
            }
        }
        acc.sqrt()
    }

    /// Weighted trace `Σ_i M(i,i) d_i`.
    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.entries[(i, i)] * self.space.measure[i]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim();
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                r = r.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        r
    }

    /// `‖A†A − I‖` in the weighted norm.
    pub fn unitarity_residual(&self) -> f64 {
        let s = self.to_scaled();
        let n = self.dim();
        let g = s.adjoint() * &s - DMatrix::<C64>::identity(n, n);
        g.norm()
    }

    /// Real spectrum of a Hermitian operator, ascending.
    pub fn eigenvalues_hermitian(&self) -> Result<Vec<f64>> {
        if !self.hermitian {
            let resid = self.hermiticity_residual();
            if resid > HERMITIAN_TOL * self.max_abs().max(f64::MIN_POSITIVE) {
                return Err(Error::Domain(format!("spectrum requested for non-Hermitian operator ({resid:.3e})")));
            }
        }
        let mut s = self.to_scaled();
        let n = self.dim();
        for i in 0..n {
            for j in 0..i {
                let avg = (s[(i, j)] + s[(j, i)].conj()) * 0.5;
                s[(i, j)] = avg;
                s[(j, i)] = avg.conj();
            }
            s[(i, i)] = C64::new(s[(i, i)].re, 0.0);
        }
        let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    /// Singular values of the operator (in the orthonormal-basis sense), descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.to_scaled().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Largest elementwise difference, relative to the larger operand scale.
    pub fn max_rel_diff(&self, other: &OperatorMatrix) -> f64 {
        let scale = self.max_abs().max(other.max_abs()).max(f64::MIN_POSITIVE);
        let diff = (&self.entries - &other.entries).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        diff / scale
    }

    /// Relative difference in the weighted norm.
    pub fn rel_norm_diff(&self, other: &OperatorMatrix) -> Result<f64> {
        let d = self.sub(other)?.norm();
        Ok(d / self.norm().max(other.norm()).max(f64::MIN_POSITIVE))
    }

    /// Writes `(x_i, x_j, Re, Im)` rows.
    pub fn write_csv<W: std::io::Write>(&self, coords: &[f64], out: &mut W) -> Result<()> {
        if coords.len() != self.dim() {
            return Err(Error::Domain("coordinate list does not match operator dimension".into()));
        }
        writeln!(out, "k_i,k_j,re,im")?;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let z = self.entries[(i, j)];
                writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e}", coords[i], coords[j], z.re, z.im)?;
            }
        }
        Ok(())
    }
}

/// Inverse of an invertible operator (kernel sense: `A A⁻¹ = I`).
pub fn inverse(op: &OperatorMatrix) -> Result<OperatorMatrix> {
    let s = op.to_scaled();
    let inv = s.try_inverse().ok_or_else(|| Error::Domain("singular operator".into()))?;
    OperatorMatrix::from_scaled(op.space(), &inv, false)
}
