//! Two-body observables: phase shifts from the momentum-space
//! Lippmann–Schwinger equation and bound states from the discretised
//! Hamiltonian, plus the comparison that certifies two Hamiltonians as
//! scattering equivalent.
//!
//! Units: ħ = 1, `E = k²/2μ`, states normalised by `∫k²dk |k⟩⟨k| = 1`, so
//! the on-shell T-matrix relates to the phase shift by
//! `S = 1 − 2πiμk₀ T(k₀,k₀) = e^{2iδ}`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::operator::{OperatorMatrix, C64};
use crate::potential::Interaction;

pub const DEFAULT_PHASE_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_BINDING_TOLERANCE: f64 = 1e-8;

/// `H = k²/2μ + V` in one partial wave.
#[derive(Debug, Clone)]
pub struct TwoBodySystem {
    mu: f64,
    grid: MomentumGrid,
    interaction: Interaction,
    potential: OperatorMatrix,
}

impl TwoBodySystem {
    pub fn new(mu: f64, grid: MomentumGrid, interaction: Interaction) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Domain(format!("reduced mass must be positive, got {mu}")));
        }
        let potential = interaction.matrix(&grid)?;
        Ok(TwoBodySystem { mu, grid, interaction, potential })
    }

    pub fn reduced_mass(&self) -> f64 {
        self.mu
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn interaction(&self) -> &Interaction {
        &self.interaction
    }

    pub fn potential(&self) -> &OperatorMatrix {
        &self.potential
    }

    /// Same grid and mass, different interaction.
    pub fn with_interaction(&self, interaction: Interaction) -> Result<Self> {
        TwoBodySystem::new(self.mu, self.grid.clone(), interaction)
    }

    pub fn kinetic_values(&self) -> Vec<f64> {
        self.grid.nodes().iter().map(|k| k * k / (2.0 * self.mu)).collect()
    }

    pub fn kinetic(&self) -> OperatorMatrix {
        OperatorMatrix::multiplication(self.grid.space(), &self.kinetic_values())
    }

    pub fn hamiltonian(&self) -> Result<OperatorMatrix> {
        self.kinetic().add(&self.potential)?.declare_hermitian()
    }

    /// Negative eigenvalues of the discretised `H`, ascending.
    pub fn bound_states(&self) -> Result<Vec<f64>> {
        Ok(self.hamiltonian()?.eigenvalues_hermitian()?.into_iter().filter(|e| *e < 0.0).collect())
    }

    /// On-shell `T(k₀,k₀)` at `E = k₀²/2μ` by principal-value subtraction on
    /// the grid with `k₀` appended as an extra node.
    pub fn on_shell_t(&self, energy: f64) -> Result<C64> {
        if !(energy.is_finite() && energy > 0.0) {
            return Err(Error::Extrapolation(format!("energy {energy} is not positive")));
        }
        let k0 = (2.0 * self.mu * energy).sqrt();
        let nodes = self.grid.nodes();
        let k_max = *nodes.last().expect("non-empty grid");
        if k0 > 0.5 * k_max {
            return Err(Error::Extrapolation(format!(
                "on-shell momentum {k0:.4} exceeds half the largest grid node {k_max:.4}"
            )));
        }
        let n = nodes.len();
        let w = self.grid.weights();
        let mut prop = vec![C64::new(0.0, 0.0); n + 1];
        let mut sub = 0.0;
        for j in 0..n {
            let den = k0 * k0 - nodes[j] * nodes[j];
            if den.abs() < 1e-12 * k0 * k0 {
                return Err(Error::Domain(format!("on-shell momentum {k0} coincides with a grid node")));
            }
            prop[j] = C64::new(2.0 * self.mu * w[j] * nodes[j] * nodes[j] / den, 0.0);
            sub += w[j] / den;
        }
        prop[n] = C64::new(-2.0 * self.mu * k0 * k0 * sub, -PI * self.mu * k0);

        let mut v = DMatrix::<C64>::zeros(n + 1, n + 1);
        v.view_mut((0, 0), (n, n)).copy_from(self.potential.entries());
        for j in 0..n {
            v[(j, n)] = self.interaction.eval(nodes[j], k0);
            v[(n, j)] = self.interaction.eval(k0, nodes[j]);
        }
        v[(n, n)] = self.interaction.eval(k0, k0);

        let mut m = DMatrix::<C64>::identity(n + 1, n + 1);
        for a in 0..=n {
            for b in 0..=n {
                m[(a, b)] -= v[(a, b)] * prop[b];
            }
        }
        let rhs = DVector::from_fn(n + 1, |a, _| v[(a, n)]);
        let t = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Domain(format!("Lippmann–Schwinger matrix singular at E = {energy}")))?;
        Ok(t[n])
    }

    /// `δ = arg(S)/2 ∈ (−π/2, π/2]` at one energy.
    pub fn raw_phase_shift(&self, energy: f64) -> Result<f64> {
        let k0 = (2.0 * self.mu * energy).sqrt();
        let t = self.on_shell_t(energy)?;
        let s = C64::new(1.0, 0.0) - C64::new(0.0, 2.0 * PI * self.mu * k0) * t;
        let mut d = 0.5 * s.arg();
        if d <= -0.5 * PI {
            d += PI;
        }
        Ok(d)
    }

    /// Phase shifts at the given energies, with the branch fixed by
    /// continuity from the lowest energy, which is taken on the principal
    /// branch.
    pub fn phase_shifts(&self, energies: &[f64]) -> Result<PhaseShifts> {
        let raw: Vec<f64> = energies.iter().map(|e| self.raw_phase_shift(*e)).collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..energies.len()).collect();
        order.sort_by(|a, b| energies[*a].total_cmp(&energies[*b]));
        let mut unwrapped = raw.clone();
        let mut prev: Option<f64> = None;
        for &i in &order {
            if let Some(p) = prev {
                unwrapped[i] = nearest_branch(raw[i], p);
            }
            prev = Some(unwrapped[i]);
        }
        Ok(PhaseShifts { energies: energies.to_vec(), raw, delta: unwrapped })
    }

    /// Phase shifts normalised so that `δ → 0` at high energy, unwound
    /// downward by continuity on a fine ladder. With this normalisation
    /// `δ(0⁺) ≈ n_b π` in the s-wave (Levinson's theorem).
    pub fn levinson_phase_shifts(&self, energies: &[f64], ladder_points: usize) -> Result<PhaseShifts> {
        let k_max = *self.grid.nodes().last().expect("non-empty grid");
        let e_top = (0.45 * k_max).powi(2) / (2.0 * self.mu);
        let e_low = energies.iter().copied().fold(f64::INFINITY, f64::min).min(e_top);
        let mut ladder: Vec<f64> = log_space(e_low, e_top, ladder_points.max(2));
        ladder.extend_from_slice(energies);
        ladder.sort_by(|a, b| b.total_cmp(a));
        ladder.dedup();
        let mut current = 0.0;
        let mut first = true;
        let mut map = Vec::with_capacity(ladder.len());
        for e in &ladder {
            let raw = self.raw_phase_shift(*e)?;
            current = if first { raw } else { nearest_branch(raw, current) };
            first = false;
            map.push((*e, raw, current));
        }
        let lookup = |e: f64| map.iter().find(|(x, _, _)| *x == e).copied().expect("energy on ladder");
        let (raw, delta) = energies.iter().map(|e| (lookup(*e).1, lookup(*e).2)).unzip();
        Ok(PhaseShifts { energies: energies.to_vec(), raw, delta })
    }
}

/// The representative of `raw + nπ` closest to `reference`.
pub fn nearest_branch(raw: f64, reference: f64) -> f64 {
    raw + PI * ((reference - raw) / PI).round()
}

/// `δ − δ′` reduced to `(−π/2, π/2]`, the distance between two phase shifts
/// as observables (`S = e^{2iδ}` fixes δ only modulo π).
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = a - b;
    (d - PI * (d / PI).round()).abs()
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Twenty energies with `k₀²` log-spaced over `[0.01, 10]` in the grid's
/// momentum-squared units, `E = k₀²/2μ`.
pub fn default_energies(mu: f64) -> Vec<f64> {
    log_space(0.01, 10.0, 20).into_iter().map(|k2| k2 / (2.0 * mu)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseShifts {
    pub energies: Vec<f64>,
    /// Principal values `arg(S)/2 ∈ (−π/2, π/2]`.
    pub raw: Vec<f64>,
    /// Continuous branch.
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub phase: f64,
    pub binding: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { phase: DEFAULT_PHASE_TOLERANCE, binding: DEFAULT_BINDING_TOLERANCE }
    }
}

/// Observables of one Hamiltonian, as written to and read back from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observables {
    pub energies: Vec<f64>,
    pub phase_shifts: Vec<f64>,
    /// Principal-branch `atan2` values before unwrapping.
    #[serde(default)]
    pub raw_phase_shifts: Vec<f64>,
    pub bound_states: Vec<f64>,
}

impl Observables {
    pub fn of(sys: &TwoBodySystem, energies: &[f64]) -> Result<Self> {
        let phases = sys.phase_shifts(energies)?;
        Ok(Observables {
            energies: energies.to_vec(),
            phase_shifts: phases.delta,
            raw_phase_shifts: phases.raw,
            bound_states: sys.bound_states()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub energies: Vec<f64>,
    pub phase_before: Vec<f64>,
    pub phase_after: Vec<f64>,
    pub bound_before: Vec<f64>,
    pub bound_after: Vec<f64>,
    pub max_phase_deviation: f64,
    /// Infinite (serialised as `null`) when the bound-state counts differ.
    pub max_binding_deviation: f64,
    pub verdict: bool,
    pub tolerances: Tolerances,
}

impl EquivalenceReport {
    pub fn compare(before: &Observables, after: &Observables, tolerances: Tolerances) -> Result<Self> {
        if before.energies.len() != after.energies.len()
            || before.energies.iter().zip(&after.energies).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
        {
            return Err(Error::Domain("observables sampled at different energies".into()));
        }
        if before.phase_shifts.len() != before.energies.len() || after.phase_shifts.len() != after.energies.len() {
            return Err(Error::Domain("phase-shift and energy lists differ in length".into()));
        }
        let max_phase = before
            .phase_shifts
            .iter()
            .zip(&after.phase_shifts)
            .map(|(a, b)| phase_distance(*a, *b))
            .fold(0.0, f64::max);
        let max_bind = if before.bound_states.len() != after.bound_states.len() {
            f64::INFINITY
        } else {
            before
                .bound_states
                .iter()
                .zip(&after.bound_states)
                .map(|(a, b)| (a - b).abs() / a.abs())
                .fold(0.0, f64::max)
        };
        let verdict = max_phase <= tolerances.phase && max_bind <= tolerances.binding;
        Ok(EquivalenceReport {
            energies: before.energies.clone(),
            phase_before: before.phase_shifts.clone(),
            phase_after: after.phase_shifts.clone(),
            bound_before: before.bound_states.clone(),
            bound_after: after.bound_states.clone(),
            max_phase_deviation: max_phase,
            max_binding_deviation: max_bind,
            verdict,
            tolerances,
        })
    }

    /// Rows `E,delta_before,delta_after`.
    pub fn write_phase_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "E,delta_before,delta_after")?;
        for ((e, a), b) in self.energies.iter().zip(&self.phase_before).zip(&self.phase_after) {
            writeln!(out, "{e:.12e},{a:.12e},{b:.12e}")?;
        }
        Ok(())
    }
}

/// Compares two systems on a shared grid and reduced mass.
pub fn certify_equivalence(
    sys: &TwoBodySystem,
    other: &TwoBodySystem,
    energies: &[f64],
    tolerances: Tolerances,
) -> Result<EquivalenceReport> {
    if sys.mu != other.mu || sys.grid.nodes() != other.grid.nodes() {
        return Err(Error::Domain("systems must share grid and reduced mass".into()));
    }
    EquivalenceReport::compare(&Observables::of(sys, energies)?, &Observables::of(other, energies)?, tolerances)
}
