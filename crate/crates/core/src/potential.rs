//! Partial-wave momentum-space interactions.
//!
//! Conventions: `ħ = 1`, states normalised so that `∫ k² dk |k⟩⟨k| = 1` in a
//! fixed partial wave `ℓ`. A local potential with Fourier transform `Ṽ(q)`
//! projects to
//!
//! ```text
//! V_ℓ(k, k') = (1 / 4π²) ∫₋₁¹ P_ℓ(x) Ṽ(|k − k'|) dx.
//! ```
//!
//! A Yukawa term of strength `λ_Y` and mass `m` is parameterised directly by
//! its projection `V_ℓ = (λ_Y / 4π) ∫ P_ℓ(x) / (q² + m²) dx`, which is the
//! coordinate-space potential `(λ_Y / 4) e^{−m r} / r`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gauss_legendre, legendre_p, MomentumGrid};
use crate::operator::{OperatorMatrix, C64};

/// Analytic form factor `g(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FormFactorSpec {
    /// `scale · exp(−k²/width²)`
    Gaussian {
        width: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale / (k² + beta²)`
    Yamaguchi {
        beta: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale · exp(−(1 − i·chirp) k²/width²)`, a Gaussian with a
    /// momentum-dependent phase.
    ChirpedGaussian {
        width: f64,
        chirp: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl FormFactorSpec {
    pub fn gaussian(width: f64) -> Self {
        FormFactorSpec::Gaussian { width, scale: 1.0 }
    }

    pub fn yamaguchi(beta: f64) -> Self {
        FormFactorSpec::Yamaguchi { beta, scale: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let (p, s) = match *self {
            FormFactorSpec::Gaussian { width, scale } => (width, scale),
            FormFactorSpec::Yamaguchi { beta, scale } => (beta, scale),
            FormFactorSpec::ChirpedGaussian { width, chirp, scale } => {
                (width, if chirp.is_finite() { scale } else { chirp })
            }
        };
        if !(p.is_finite() && p > 0.0 && s.is_finite()) {
            return Err(Error::Config(format!("invalid form factor parameters {self:?}")));
        }
        Ok(())
    }

    pub fn eval(&self, k: f64) -> C64 {
        match *self {
            FormFactorSpec::Gaussian { width, scale } => C64::new(scale * (-(k * k) / (width * width)).exp(), 0.0),
            FormFactorSpec::Yamaguchi { beta, scale } => C64::new(scale / (k * k + beta * beta), 0.0),
            FormFactorSpec::ChirpedGaussian { width, chirp, scale } => {
                let x = k * k / (width * width);
                C64::from_polar(scale * (-x).exp(), chirp * x)
            }
        }
    }

    /// Same shape with `scale` chosen so that `⟨g|g⟩ = 1` on `grid`.
    pub fn normalized_on(self, grid: &MomentumGrid) -> Result<Self> {
        self.validate()?;
        let norm = grid.integrate(|k| self.eval(k).norm_sqr()).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::DegenerateGenerator("form factor vanishes on the grid".into()));
        }
        let rescale = |s: f64| s / norm;
        Ok(match self {
            FormFactorSpec::Gaussian { width, scale } => FormFactorSpec::Gaussian { width, scale: rescale(scale) },
            FormFactorSpec::Yamaguchi { beta, scale } => FormFactorSpec::Yamaguchi { beta, scale: rescale(scale) },
            FormFactorSpec::ChirpedGaussian { width, chirp, scale } => {
                FormFactorSpec::ChirpedGaussian { width, chirp, scale: rescale(scale) }
            }
        })
    }

    pub fn is_real(&self) -> bool {
        !matches!(self, FormFactorSpec::ChirpedGaussian { chirp, .. } if *chirp != 0.0)
    }

    pub fn profile(self) -> Profile {
        Profile::new(move |k| self.eval(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YukawaTerm {
    pub strength: f64,
    pub mass: f64,
}

/// Model two-body potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `strength · |η⟩⟨η|`
    Separable { strength: f64, form_factor: FormFactorSpec },
    /// Sum of Yukawa terms (Malfliet–Tjon form).
    YukawaSum { terms: Vec<YukawaTerm> },
    /// `V(r) = strength · exp(−r²/range²)`, projected numerically.
    GaussianWell { strength: f64, range: f64 },
}

impl PotentialSpec {
    /// Malfliet–Tjon III (triplet) in units where `ħ²/2μ = 1 fm²`, i.e. use
    /// reduced mass `0.5` with momenta in fm⁻¹ and energies in fm⁻².
    pub fn malfliet_tjon_iii() -> Self {
        const HBAR2_OVER_M: f64 = 41.47;
        PotentialSpec::YukawaSum {
            terms: vec![
                YukawaTerm { strength: 4.0 * 1438.720 / HBAR2_OVER_M, mass: 3.11 },
                YukawaTerm { strength: -4.0 * 626.885 / HBAR2_OVER_M, mass: 1.55 },
            ],
        }
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let spec: PotentialSpec =
            serde_json::from_value(value.clone()).map_err(|e| Error::Config(format!("potential: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Separable { strength, form_factor } => {
                if !strength.is_finite() {
                    return Err(Error::Config("separable strength not finite".into()));
                }
                form_factor.validate()?;
                if !form_factor.is_real() {
                    return Err(Error::Config("separable potentials need a real form factor".into()));
                }
                Ok(())
            }
            PotentialSpec::YukawaSum { terms } => {
                for t in terms {
                    if !(t.strength.is_finite() && t.mass.is_finite() && t.mass > 0.0) {
                        return Err(Error::Config(format!("invalid Yukawa term {t:?}")));
                    }
                }
                Ok(())
            }
            PotentialSpec::GaussianWell { strength, range } => {
                if !(strength.is_finite() && range.is_finite() && *range > 0.0) {
                    return Err(Error::Config("invalid Gaussian well".into()));
                }
                Ok(())
            }
        }
    }

    /// Partial-wave kernel `V_ℓ(k, k')`.
    pub fn eval(&self, l: usize, k: f64, kp: f64) -> f64 {
        match self {
            PotentialSpec::Separable { strength, form_factor } => {
                strength * form_factor.eval(k).re * form_factor.eval(kp).re
            }
            PotentialSpec::YukawaSum { terms } => {
                terms.iter().map(|t| t.strength / (4.0 * PI) * yukawa_angular_integral(l, k, kp, t.mass)).sum()
            }
            PotentialSpec::GaussianWell { strength, range } => {
                let b2 = range * range;
                let pref = strength * range * b2 / (4.0 * PI.sqrt());
                let (x, w) = gauss_nodes_96();
                let mut acc = 0.0;
                for (xi, wi) in x.iter().zip(w) {
                    let q2 = k * k + kp * kp - 2.0 * k * kp * xi;
                    acc += wi * legendre_p(l, *xi) * (-q2 * b2 / 4.0).exp();
                }
                pref * acc
            }
        }
    }
}

fn gauss_nodes_96() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(96))
}

/// `∫₋₁¹ P_ℓ(x) / (k² + k'² − 2kk'x + m²) dx = Q_ℓ(z) / (k k')`,
/// `z = (k² + k'² + m²) / (2kk')`.
pub fn yukawa_angular_integral(l: usize, k: f64, kp: f64, m: f64) -> f64 {
    let kk = k * kp;
    if l == 0 {
        let num = (k + kp).powi(2) + m * m;
        let den = (k - kp).powi(2) + m * m;
        return 0.5 * (num / den).ln() / kk;
    }
    let z = (k * k + kp * kp + m * m) / (2.0 * kk);
    legendre_q(l, z) / kk
}

/// Legendre function of the second kind `Q_ℓ(z)` for `z > 1`.
pub fn legendre_q(l: usize, z: f64) -> f64 {
    if z < 1.5 {
        let q0 = 0.5 * ((z + 1.0) / (z - 1.0)).ln();
        if l == 0 {
            return q0;
        }
        let (mut qm, mut q) = (q0, z * q0 - 1.0);
        for n in 1..l {
            let nf = n as f64;
            let next = ((2.0 * nf + 1.0) * z * q - nf * qm) / (nf + 1.0);
            qm = q;
            q = next;
        }
        q
    } else {
        // upward recurrence loses digits for large z; integrate instead
        let (x, w) = gauss_nodes_96();
        0.5 * x.iter().zip(w).map(|(xi, wi)| wi * legendre_p(l, *xi) / (z - xi)).sum::<f64>()
    }
}

/// A momentum-space function evaluable anywhere, used for separable terms.
#[derive(Clone)]
pub struct Profile(Arc<dyn Fn(f64) -> C64 + Send + Sync>);

impl Profile {
    pub fn new(f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        Profile(Arc::new(f))
    }

    pub fn eval(&self, k: f64) -> C64 {
        (self.0)(k)
    }
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Profile(..)")
    }
}

/// Separable contribution `|left⟩ coeff ⟨right|`.
#[derive(Debug, Clone)]
pub struct SeparableTerm {
    pub coeff: C64,
    pub left: Profile,
    pub right: Profile,
}

/// A partial-wave interaction that can be evaluated off the grid: an
/// optional model potential plus separable corrections. Off-grid values are
/// needed for the on-shell row of the Lippmann–Schwinger equation.
#[derive(Debug, Clone)]
pub struct Interaction {
    partial_wave: usize,
    local: Option<PotentialSpec>,
    terms: Vec<SeparableTerm>,
}

impl Interaction {
    pub fn zero(partial_wave: usize) -> Self {
        Interaction { partial_wave, local: None, terms: Vec::new() }
    }

    pub fn from_spec(spec: PotentialSpec, partial_wave: usize) -> Result<Self> {
        spec.validate()?;
        Ok(Interaction { partial_wave, local: Some(spec), terms: Vec::new() })
    }

    pub fn partial_wave(&self) -> usize {
        self.partial_wave
    }

    pub fn spec(&self) -> Option<&PotentialSpec> {
        self.local.as_ref()
    }

    pub fn terms(&self) -> &[SeparableTerm] {
        &self.terms
    }

    pub fn with_terms(&self, extra: impl IntoIterator<Item = SeparableTerm>) -> Self {
        let mut out = self.clone();
        out.terms.extend(extra);
        out
    }

    /// Multiplies the whole interaction by a real factor.
    pub fn scaled(&self, factor: f64) -> Self {
        let local = self.local.as_ref().map(|spec| match spec {
            PotentialSpec::Separable { strength, form_factor } => {
                PotentialSpec::Separable { strength: strength * factor, form_factor: *form_factor }
            }
            PotentialSpec::YukawaSum { terms } => PotentialSpec::YukawaSum {
                terms: terms.iter().map(|t| YukawaTerm { strength: t.strength * factor, mass: t.mass }).collect(),
            },
            PotentialSpec::GaussianWell { strength, range } => {
                PotentialSpec::GaussianWell { strength: strength * factor, range: *range }
            }
        });
        let terms = self
            .terms
            .iter()
            .map(|t| SeparableTerm { coeff: t.coeff * factor, left: t.left.clone(), right: t.right.clone() })
            .collect();
        Interaction { partial_wave: self.partial_wave, local, terms }
    }

    pub fn eval(&self, k: f64, kp: f64) -> C64 {
        let mut v = C64::new(self.local.as_ref().map_or(0.0, |s| s.eval(self.partial_wave, k, kp)), 0.0);
        for t in &self.terms {
            v += t.left.eval(k) * t.coeff * t.right.eval(kp).conj();
        }
        v
    }

    /// Kernel matrix on the grid, declared Hermitian.
    pub fn matrix(&self, grid: &MomentumGrid) -> Result<OperatorMatrix> {
        if grid.partial_wave() != self.partial_wave {
            return Err(Error::Domain(format!(
                "interaction in partial wave {} used on a grid for {}",
                self.partial_wave,
                grid.partial_wave()
            )));
        }
        let k = grid.nodes();
        OperatorMatrix::from_fn(grid.space(), true, |i, j| self.eval(k[i], k[j]))
    }
}

/// Grid matrix of a model potential.
pub fn potential_matrix(spec: &PotentialSpec, grid: &MomentumGrid) -> Result<OperatorMatrix> {
    Interaction::from_spec(spec.clone(), grid.partial_wave())?.matrix(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on [-1, 1], independent of the Gauss rules above.
    fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 2.0 / n as f64;
        let mut s = f(-1.0) + f(1.0);
        for i in 1..n {
            let x = -1.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn zero_separable_is_zero() {
        let grid = MomentumGrid::new(12, 1.0, 0).unwrap();
        let spec = PotentialSpec::Separable { strength: 0.0, form_factor: FormFactorSpec::gaussian(1.0) };
        assert_eq!(potential_matrix(&spec, &grid).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn yukawa_matches_numeric_projection() {
        let (lam, m) = (-3.0, 0.9);
        let spec = PotentialSpec::YukawaSum { terms: vec![YukawaTerm { strength: lam, mass: m }] };
        for (k, kp) in [(0.3, 1.7), (2.0, 2.05)] {
            let closed = spec.eval(0, k, kp);
            let numeric = lam / (4.0 * PI) * simpson(|x| 1.0 / (k * k + kp * kp - 2.0 * k * kp * x + m * m), 20000);
            assert!((closed - numeric).abs() < 1e-10 * numeric.abs().max(1.0), "{closed} vs {numeric}");
            let formula =
                lam / (4.0 * PI) / (2.0 * k * kp) * (((k + kp).powi(2) + m * m) / ((k - kp).powi(2) + m * m)).ln();
            assert!((closed - formula).abs() < 1e-13);
        }
    }

    #[test]
    fn higher_partial_waves_match_numeric_projection() {
        for l in [1usize, 2, 3] {
            for (k, kp, m) in [(0.4, 0.5, 0.3), (3.0, 0.2, 1.0)] {
                let closed = yukawa_angular_integral(l, k, kp, m);
                let numeric = simpson(|x| legendre_p(l, x) / (k * k + kp * kp - 2.0 * k * kp * x + m * m), 40000);
                assert!((closed - numeric).abs() < 1e-9 * numeric.abs().max(1e-3), "l={l} {closed} {numeric}");
            }
        }
    }

    #[test]
    fn gaussian_well_s_wave_closed_form() {
        let (v0, b) = (-2.0, 1.3);
        let spec = PotentialSpec::GaussianWell { strength: v0, range: b };
        for (k, kp) in [(0.5, 0.7), (2.0, 3.0)] {
            let a = k * kp * b * b / 2.0;
            let exact =
                v0 * b.powi(3) / (4.0 * PI.sqrt()) * (-(k * k + kp * kp) * b * b / 4.0).exp() * 2.0 * a.sinh() / a;
            assert!((spec.eval(0, k, kp) - exact).abs() < 1e-12 * exact.abs().max(1e-300));
        }
    }

    #[test]
    fn all_kinds_hermitian() {
        let grid = MomentumGrid::new(24, 1.0, 0).unwrap();
        for spec in [
            PotentialSpec::Separable { strength: -1.0, form_factor: FormFactorSpec::yamaguchi(1.2) },
            PotentialSpec::malfliet_tjon_iii(),
            PotentialSpec::GaussianWell { strength: -3.0, range: 1.0 },
        ] {
            let v = potential_matrix(&spec, &grid).unwrap();
            assert!(v.is_hermitian());
            assert!(v.hermiticity_residual() <= 1e-12 * v.max_abs());
        }
    }

    #[test]
    fn unknown_kind_is_config_error() {
        let v = serde_json::json!({"kind": "square_well", "depth": 1.0});
        assert!(matches!(PotentialSpec::from_json(&v), Err(Error::Config(_))));
        let v = serde_json::json!({"kind": "gaussian_well", "strength": 1.0, "range": 1.0, "extra": 2});
        assert!(matches!(PotentialSpec::from_json(&v), Err(Error::Config(_))));
    }
}
