//! Positive functionals of transformed interactions and their
//! minimisation over generator parameters.
//!
//! For `A = 1 + f|g⟩⟨g|` the transformed potential is `V′ = V + V_r` with
//! `V_r = f*|g⟩⟨g|H + f H|g⟩⟨g| + |f|²⟨g|H|g⟩ |g⟩⟨g|`. The subtracted
//! functional `F(λ) = ⟨χ|V′†V′ − V†V|χ⟩` is then a rational function of λ,
//!
//! ```text
//! F = c₁f + c₁*f* + c₂|f|² + c₃f²f* + c₃*f*²f + c₄|f|⁴,
//! ```
//!
//! after using `f + f* = −⟨g|g⟩|f|²` (unitarity of the rank-one block).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cayley::rank_one_coefficient;
use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::operator::{OperatorMatrix, StateVector, C64};
use crate::potential::FormFactorSpec;

/// Weight kernels `ρ = |χ⟩⟨χ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// `χ(k) = tanh(α + k²/k₀²)`.
    TanhProduct { alpha: f64, k0: f64 },
    /// `χ` given by an analytic form factor.
    SeparableChi { form_factor: FormFactorSpec },
}

impl DensitySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DensitySpec::TanhProduct { alpha, k0 } => {
                if !(alpha.is_finite() && alpha >= 0.0 && k0.is_finite() && k0 > 0.0) {
                    return Err(Error::Config(format!("density needs α ≥ 0 and k₀ > 0, got α={alpha}, k₀={k0}")));
                }
                Ok(())
            }
            DensitySpec::SeparableChi { form_factor } => form_factor.validate(),
        }
    }

    pub fn chi_at(&self, k: f64) -> C64 {
        match *self {
            DensitySpec::TanhProduct { alpha, k0 } => C64::new((alpha + k * k / (k0 * k0)).tanh(), 0.0),
            DensitySpec::SeparableChi { form_factor } => form_factor.eval(k),
        }
    }

    pub fn chi(&self, grid: &MomentumGrid) -> Result<StateVector> {
        self.validate()?;
        let k = grid.nodes();
        Ok(StateVector::from_fn(grid.space(), |i| self.chi_at(k[i])))
    }
}

/// `ρ(k,k′) = χ(k)χ(k′)`.
pub fn density(spec: &DensitySpec, grid: &MomentumGrid) -> Result<OperatorMatrix> {
    let chi = spec.chi(grid)?;
    OperatorMatrix::dyad(&chi, C64::new(1.0, 0.0), &chi)?.declare_hermitian()
}

/// Accepts an arbitrary kernel as a density after checking it is positive
/// semidefinite (smallest eigenvalue ≥ −1e-12·‖ρ‖).
pub fn custom_density(rho: OperatorMatrix) -> Result<OperatorMatrix> {
    let rho = if rho.is_hermitian() { rho } else { rho.declare_hermitian()? };
    let ev = rho.eigenvalues_hermitian()?;
    let scale = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if ev.first().copied().unwrap_or(0.0) < -1e-12 * scale {
        return Err(Error::Config("density kernel is not positive semidefinite".into()));
    }
    Ok(rho)
}

/// `Tr(ρ V†V)`.
pub fn functional_direct(v: &OperatorMatrix, rho: &OperatorMatrix) -> Result<f64> {
    Ok(rho.compose(&v.adjoint().compose(v)?)?.trace().re)
}

/// The λ-dependent part `V_r(λ)` of the transformed potential, dense.
pub fn potential_shift(h: &OperatorMatrix, g: &StateVector, lambda: f64) -> Result<OperatorMatrix> {
    let f = rank_one_coefficient(lambda, g.norm_sqr());
    let hg = h.apply(g)?;
    let hgg = g.inner(&hg)?.re;
    OperatorMatrix::dyad(g, f.conj(), &hg)?.add(&OperatorMatrix::dyad(&hg, f, g)?)?.add(&OperatorMatrix::dyad(
        g,
        C64::new(f.norm_sqr() * hgg, 0.0),
        g,
    )?)
}

/// `F(λ) = ⟨χ|V′†V′ − V†V|χ⟩ = 2Re⟨Vχ|V_rχ⟩ + ‖V_rχ‖²`, evaluated from the
/// dense shift. Exactly zero at λ = 0.
pub fn subtracted_functional(
    v: &OperatorMatrix,
    h: &OperatorMatrix,
    g: &StateVector,
    chi: &StateVector,
    lambda: f64,
) -> Result<f64> {
    let vr = potential_shift(h, g, lambda)?;
    let vrx = vr.apply(chi)?;
    let vx = v.apply(chi)?;
    Ok(2.0 * vx.inner(&vrx)?.re + vrx.norm_sqr())
}

/// Coefficients of the rational form, computed once from eight scalar
/// integrals. `c₂` and `c₄` are real by construction and stored as such;
/// the conjugate partners of `c₁` and `c₃` enter as `z + z*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalForm {
    pub c1: C64,
    pub c2: f64,
    pub c3: C64,
    pub c4: f64,
    pub norm_sqr: f64,
    /// Relative mismatch between `c₁*` assembled from the conjugate
    /// integrals and the conjugate of `c₁`, together with `|Im c₂|/|c₂|`.
    pub conjugation_residual: f64,
}

impl RationalForm {
    pub fn new(v: &OperatorMatrix, h: &OperatorMatrix, g: &StateVector, chi: &StateVector) -> Result<Self> {
        let vchi = v.apply(chi)?;
        let hg = h.apply(g)?;
        let hchi = h.apply(chi)?;
        let p = vchi.inner(g)?; // ⟨χ|V†|g⟩
        let p_bar = g.inner(&vchi)?; // ⟨g|V|χ⟩
        let a = g.inner(&hchi)?; // ⟨g|H|χ⟩
        let a_bar = chi.inner(&hg)?; // ⟨χ|H|g⟩
        let s = vchi.inner(&hg)?; // ⟨χ|V†H|g⟩
        let s_bar = hg.inner(&vchi)?; // ⟨g|HV|χ⟩
        let b = g.inner(chi)?; // ⟨g|χ⟩
        let b_bar = chi.inner(g)?;
        let n = g.norm_sqr();
        let hh = g.inner(&hg)?.re; // ⟨g|H|g⟩
        let m2 = hg.norm_sqr(); // ⟨g|H²|g⟩
        let c1 = p_bar * a_bar + s * b;
        let c1_conj = p * a + s_bar * b_bar;
        let c2 = (p * b + p_bar * b_bar) * hh + a * a_bar * n - (a_bar * b + a * b_bar) * hh + b * b_bar * m2;
        let bb = (b * b_bar).re;
        let rel = |d: f64, s: f64| if s > 0.0 { d / s } else { d };
        let conjugation_residual = rel((c1_conj - c1.conj()).norm(), c1.norm()).max(rel(c2.im.abs(), c2.norm()));
        Ok(RationalForm {
            c1,
            c2: c2.re,
            c3: C64::new(bb * hh * hh, 0.0),
            c4: n * hh * hh * bb,
            norm_sqr: n,
            conjugation_residual,
        })
    }

    /// `c₁f + c₁*f* + c₂|f|² + c₃f²f* + c₃*f*²f + c₄|f|⁴`.
    pub fn eval(&self, lambda: f64) -> f64 {
        let f = rank_one_coefficient(lambda, self.norm_sqr);
        let m = f.norm_sqr();
        let t1 = self.c1 * f;
        let t3 = self.c3 * f * f * f.conj();
        (t1 + t1.conj()).re + self.c2 * m + (t3 + t3.conj()).re + self.c4 * m * m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpec {
    pub lower: f64,
    pub upper: f64,
    pub starts: usize,
    pub tolerance: f64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec { lower: -10.0, upper: 10.0, starts: 8, tolerance: 1e-8 }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::Config(format!("invalid search bracket [{}, {}]", self.lower, self.upper)));
        }
        if self.starts == 0 || self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config("search needs at least one start and a positive tolerance".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub lambda: f64,
    pub value: f64,
    /// Central finite-difference `dF/dλ` at the returned point.
    pub derivative: f64,
    pub value_at_zero: f64,
    pub derivative_at_zero: f64,
    pub stationary: bool,
    pub evaluations: usize,
    pub warnings: Vec<String>,
    /// Every `(λ, F)` evaluated, sorted by λ.
    pub trace: Vec<(f64, f64)>,
}

impl Minimum {
    /// Rows `lambda,F`.
    pub fn write_trace_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "lambda,F")?;
        for (l, f) in &self.trace {
            writeln!(out, "{l:.12e},{f:.12e}")?;
        }
        Ok(())
    }
}

struct Counted<F: FnMut(f64) -> f64> {
    f: F,
    trace: Vec<(f64, f64)>,
}

impl<F: FnMut(f64) -> f64> Counted<F> {
    fn call(&mut self, x: f64) -> f64 {
        let y = (self.f)(x);
        self.trace.push((x, y));
        y
    }

    fn derivative(&mut self, x: f64) -> f64 {
        let h = 1e-5 * x.abs().max(1.0);
        (self.call(x + h) - self.call(x - h)) / (2.0 * h)
    }
}

/// Brent's method (golden section with parabolic steps) on `[a, b]`.
fn brent<F: FnMut(f64) -> f64>(obj: &mut Counted<F>, a: f64, b: f64, xtol: f64) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (a, b);
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = obj.call(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let xm = 0.5 * (a + b);
        let tol1 = xtol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = obj.call(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Root of the finite-difference derivative near `x`, by bisection on a
/// sign-changing bracket. Returns `x` unchanged if no bracket is found.
fn polish<F: FnMut(f64) -> f64>(obj: &mut Counted<F>, x: f64, lo: f64, hi: f64) -> f64 {
    let mut step = 1e-6 * x.abs().max(1.0);
    let dx = obj.derivative(x);
    if dx == 0.0 {
        return x;
    }
    let mut bracket = None;
    for _ in 0..40 {
        let (a, b) = ((x - step).max(lo), (x + step).min(hi));
        let (da, db) = (obj.derivative(a), obj.derivative(b));
        if da <= 0.0 && db >= 0.0 {
            bracket = Some((a, b));
            break;
        }
        step *= 2.0;
        if a == lo && b == hi {
            break;
        }
    }
    let Some((mut a, mut b)) = bracket else { return x };
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if obj.derivative(m) > 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

/// Local minimiser over `[lower, upper]` by multi-start Brent, polished to
/// a zero of the finite-difference derivative. Never returns a point with
/// `F(λ_c) > F(0)`; a flat objective yields `λ_c = 0` with a warning.
pub fn minimize(f: impl FnMut(f64) -> f64, spec: &SearchSpec) -> Result<Minimum> {
    spec.validate()?;
    let mut obj = Counted { f, trace: Vec::new() };
    let f0 = obj.call(0.0);
    let d0 = obj.derivative(0.0);
    let width = (spec.upper - spec.lower) / spec.starts as f64;
    let mut best = (0.0, f0);
    for s in 0..spec.starts {
        let a = spec.lower + width * s as f64;
        let (x, fx) = brent(&mut obj, a, a + width, 1e-10);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    let mut warnings = Vec::new();
    let (lo_f, hi_f) =
        obj.trace.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (_, y)| (l.min(*y), h.max(*y)));
    if hi_f - lo_f <= 1e-14 * f0.abs().max(1.0) {
        warnings.push("objective is flat over the search bracket; returning λ = 0".into());
        best = (0.0, f0);
    } else {
        let x = polish(&mut obj, best.0, spec.lower, spec.upper);
        let fx = obj.call(x);
        if fx <= best.1 {
            best = (x, fx);
        }
    }
    let derivative = obj.derivative(best.0);
    let stationary = derivative.abs() <= spec.tolerance * best.1.abs().max(1.0);
    if !stationary {
        let edge = (best.0 - spec.lower).abs() < 1e-6 * width || (spec.upper - best.0).abs() < 1e-6 * width;
        warnings.push(if edge {
            format!("minimum lies on the search boundary at λ = {}", best.0)
        } else {
            format!("|dF/dλ| = {derivative:.3e} above tolerance at λ = {}", best.0)
        });
    }
    let evaluations = obj.trace.len();
    let mut trace = obj.trace;
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Minimum {
        lambda: best.0,
        value: best.1,
        derivative,
        value_at_zero: f0,
        derivative_at_zero: d0,
        stationary,
        evaluations,
        warnings,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMinimum {
    pub parameters: Vec<f64>,
    pub value: f64,
    pub sweeps: usize,
    pub warnings: Vec<String>,
}

/// Coordinate descent: repeated one-dimensional [`minimize`] along each
/// parameter, searching `spec`'s bracket shifted to the current value.
pub fn minimize_coordinates(
    mut f: impl FnMut(&[f64]) -> f64,
    start: &[f64],
    spec: &SearchSpec,
    max_sweeps: usize,
) -> Result<CoordinateMinimum> {
    spec.validate()?;
    let mut x = start.to_vec();
    let mut value = f(&x);
    let mut warnings = Vec::new();
    let mut sweeps = 0;
    for _ in 0..max_sweeps {
        sweeps += 1;
        let before = value;
        for i in 0..x.len() {
            let base = x.clone();
            let m = minimize(
                |t| {
                    let mut y = base.clone();
                    y[i] = base[i] + t;
                    f(&y)
                },
                spec,
            )?;
            if m.value < value {
                x[i] = base[i] + m.lambda;
                value = m.value;
            }
            warnings.extend(m.warnings.into_iter().map(|w| format!("parameter {i}: {w}")));
        }
        if before - value <= spec.tolerance * value.abs().max(1.0) {
            break;
        }
    }
    Ok(CoordinateMinimum { parameters: x, value, sweeps, warnings })
}
