//! Desk-scale three-body space: a tensor grid of two Jacobi momenta.
//!
//! States are indexed `i·n_q + j` for pair momentum `p_i` and spectator
//! momentum `q_j`, with measure `d^p_i d^q_j`. A pair operator acts on the
//! pair momentum and as the identity on the spectator. The three pairings
//! are related by a fixed orthogonal recoupling `P` with `P³ = 1`: the
//! `(12)` pairing uses the grid directly, `(23)` and `(31)` are reached by
//! `P` and `P²`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cayley::{GeneratorComponent, GeneratorSpec};
use crate::cluster::ClusterOperator;
use crate::error::{Error, Result};
use crate::grid::MomentumGrid;
use crate::operator::{OperatorMatrix, Space, StateVector, C64};
use crate::partition::Partition;

/// Largest allowed points per Jacobi momentum.
pub const MAX_JACOBI_POINTS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pair {
    #[serde(rename = "(12)(3)")]
    P12,
    #[serde(rename = "(23)(1)")]
    P23,
    #[serde(rename = "(31)(2)")]
    P31,
}

impl Pair {
    pub const ALL: [Pair; 3] = [Pair::P12, Pair::P23, Pair::P31];

    pub fn partition(self) -> Partition {
        let blocks: [Vec<usize>; 2] = match self {
            Pair::P12 => [vec![1, 2], vec![3]],
            Pair::P23 => [vec![2, 3], vec![1]],
            Pair::P31 => [vec![3, 1], vec![2]],
        };
        Partition::from_blocks(3, &blocks).expect("valid three-particle partition")
    }

    pub fn from_partition(a: &Partition) -> Result<Pair> {
        Pair::ALL
            .into_iter()
            .find(|p| &p.partition() == a)
            .ok_or_else(|| Error::Domain(format!("{a} is not a two-cluster partition of three particles")))
    }

    fn power(self) -> usize {
        match self {
            Pair::P12 => 0,
            Pair::P23 => 1,
            Pair::P31 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeBodyGridSpec {
    pub n_p: usize,
    pub n_q: usize,
    pub map_scale_p: f64,
    pub map_scale_q: f64,
    #[serde(default = "default_mass")]
    pub mu_p: f64,
    #[serde(default = "default_mass_q")]
    pub mu_q: f64,
}

fn default_mass() -> f64 {
    0.5
}

fn default_mass_q() -> f64 {
    2.0 / 3.0
}

#[derive(Debug, Clone)]
pub struct ThreeBodySpace {
    p: MomentumGrid,
    q: MomentumGrid,
    mu_p: f64,
    mu_q: f64,
    space: Arc<Space>,
    /// Orthogonal recoupling in the scaled (orthonormal) representation.
    recoupling: DMatrix<f64>,
}

impl ThreeBodySpace {
    pub fn new(spec: &ThreeBodyGridSpec, seed: u64) -> Result<Self> {
        for n in [spec.n_p, spec.n_q] {
            if n > MAX_JACOBI_POINTS {
                return Err(Error::Capacity(format!("{n} Jacobi points exceeds {MAX_JACOBI_POINTS}")));
            }
        }
        if !(spec.mu_p > 0.0 && spec.mu_q > 0.0) {
            return Err(Error::Domain("reduced masses must be positive".into()));
        }
        let p = MomentumGrid::new(spec.n_p, spec.map_scale_p, 0)?;
        let q = MomentumGrid::new(spec.n_q, spec.map_scale_q, 0)?;
        let measure: Vec<f64> =
            p.space().measure().iter().flat_map(|dp| q.space().measure().iter().map(move |dq| dp * dq)).collect();
        let space = Space::new(format!("jacobi[{}x{}]", spec.n_p, spec.n_q), measure)?;
        let recoupling = cyclic_recoupling(space.dim(), seed);
        Ok(ThreeBodySpace { p, q, mu_p: spec.mu_p, mu_q: spec.mu_q, space, recoupling })
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn pair_grid(&self) -> &MomentumGrid {
        &self.p
    }

    pub fn spectator_grid(&self) -> &MomentumGrid {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// `T = p²/2μ_p + q²/2μ_q`.
    pub fn kinetic(&self) -> OperatorMatrix {
        let values: Vec<f64> = self
            .p
            .nodes()
            .iter()
            .flat_map(|p| self.q.nodes().iter().map(move |q| (p, q)))
            .map(|(p, q)| p * p / (2.0 * self.mu_p) + q * q / (2.0 * self.mu_q))
            .collect();
        OperatorMatrix::multiplication(&self.space, &values)
    }

    fn transform(&self, pair: Pair) -> DMatrix<f64> {
        let n = self.dim();
        let mut w = DMatrix::<f64>::identity(n, n);
        for _ in 0..pair.power() {
            w = &self.recoupling * w;
        }
        w
    }

    /// Pair operator on the three-body space: `O ⊗ 1` on the spectator,
    /// then recoupled to the requested pairing.
    pub fn embed_pair_operator(&self, op: &OperatorMatrix, pair: Pair) -> Result<OperatorMatrix> {
        if !Space::same(op.space(), self.p.space()) {
            return Err(Error::Embedding(format!(
                "operator on {} cannot be embedded over pair grid {}",
                op.space().label(),
                self.p.space().label()
            )));
        }
        let s = op.to_scaled();
        let nq = self.q.len();
        let n = self.dim();
        let mut big = DMatrix::<C64>::zeros(n, n);
        for i in 0..self.p.len() {
            for k in 0..self.p.len() {
                let v = s[(i, k)];
                if v != C64::new(0.0, 0.0) {
                    for j in 0..nq {
                        big[(i * nq + j, k * nq + j)] = v;
                    }
                }
            }
        }
        let w = self.transform(pair).map(|x| C64::new(x, 0.0));
        let big = &w * big * w.transpose();
        let out = OperatorMatrix::from_scaled(&self.space, &big, false)?;
        if op.is_hermitian() {
            // recoupling is orthogonal, so only rounding separates the halves
            let e = out.entries().clone();
            return OperatorMatrix::new(&self.space, (&e + e.adjoint()) * C64::new(0.5, 0.0), true);
        }
        Ok(out)
    }

    /// The vectors `g ⊗ e_j` (one per spectator node, `e_j` a normalised
    /// spectator delta) recoupled to `pair`.
    pub fn embed_pair_vectors(&self, g: &StateVector, pair: Pair) -> Result<Vec<StateVector>> {
        if !Space::same(g.space(), self.p.space()) {
            return Err(Error::Embedding("form factor is not on the pair grid".into()));
        }
        let gs = g.to_scaled();
        let nq = self.q.len();
        let n = self.dim();
        let w = self.transform(pair).map(|x| C64::new(x, 0.0));
        (0..nq)
            .map(|j| {
                let mut v = nalgebra::DVector::<C64>::zeros(n);
                for i in 0..self.p.len() {
                    v[i * nq + j] = gs[i];
                }
                Ok(StateVector::from_scaled(&self.space, &(&w * v)))
            })
            .collect()
    }

    /// `[Γ]_pair = λ |g⟩⟨g| ⊗ 1` in canonical form.
    pub fn pair_generator(&self, lambda: f64, g: &StateVector, pair: Pair) -> Result<GeneratorComponent> {
        let vectors = self.embed_pair_vectors(g, pair)?;
        let strengths = vec![lambda; vectors.len()];
        GeneratorComponent::new(strengths, vectors)
    }

    /// Product state `u(p) v(q)` in the `(12)` coupling.
    pub fn product_vector(&self, u: impl Fn(f64) -> f64, v: impl Fn(f64) -> f64) -> StateVector {
        let nq = self.q.len();
        let p = self.p.nodes().to_vec();
        let q = self.q.nodes().to_vec();
        StateVector::from_fn(&self.space, |idx| C64::new(u(p[idx / nq]) * v(q[idx % nq]), 0.0))
    }

    /// Generator with the same pair form factor in all three pairings and an
    /// optional connected rank-one part `λ₁₂₃|χ⟩⟨χ|`.
    pub fn generator(
        &self,
        pair_lambdas: [f64; 3],
        pair_form_factor: &StateVector,
        connected: Option<(f64, &StateVector)>,
    ) -> Result<GeneratorSpec> {
        let mut spec = GeneratorSpec::new(3, &self.space);
        for (pair, lambda) in Pair::ALL.into_iter().zip(pair_lambdas) {
            if lambda != 0.0 {
                spec.insert(pair.partition(), self.pair_generator(lambda, pair_form_factor, pair)?)?;
            }
        }
        if let Some((lambda, chi)) = connected {
            spec.insert(Partition::top(3)?, GeneratorComponent::new(vec![lambda], vec![chi.clone()])?)?;
        }
        Ok(spec)
    }
}

/// Orthogonal `P = Q R Qᵀ` where `R` is block-diagonal with 2π/3 rotations,
/// so `P³ = 1` and `P` mixes all coordinates. `Q` is a seeded random
/// orthogonal matrix.
fn cyclic_recoupling(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = m.qr().q();
    let (s, c) = (2.0 * std::f64::consts::PI / 3.0).sin_cos();
    let mut r = DMatrix::<f64>::identity(n, n);
    for b in 0..n / 2 {
        let i = 2 * b;
        r[(i, i)] = c;
        r[(i, i + 1)] = -s;
        r[(i + 1, i)] = s;
        r[(i + 1, i + 1)] = c;
    }
    &q * r * q.transpose()
}

/// `H = T + Σ V_pair + V₁₂₃` with pair potentials embedded from the pair grid.
#[derive(Debug, Clone)]
pub struct ThreeBodyHamiltonian {
    pub kinetic: OperatorMatrix,
    pub pairs: [OperatorMatrix; 3],
    pub three_body: OperatorMatrix,
}

impl ThreeBodyHamiltonian {
    pub fn new(
        space: &ThreeBodySpace,
        pair_potential: &OperatorMatrix,
        three_body: Option<OperatorMatrix>,
    ) -> Result<Self> {
        let pairs = [
            space.embed_pair_operator(pair_potential, Pair::P12)?,
            space.embed_pair_operator(pair_potential, Pair::P23)?,
            space.embed_pair_operator(pair_potential, Pair::P31)?,
        ];
        let three_body = match three_body {
            Some(v) => {
                if !Space::same(v.space(), space.space()) {
                    return Err(Error::Embedding("three-body potential on a different space".into()));
                }
                v
            }
            None => OperatorMatrix::zeros(space.space()),
        };
        Ok(ThreeBodyHamiltonian { kinetic: space.kinetic(), pairs, three_body })
    }

    pub fn pair(&self, pair: Pair) -> &OperatorMatrix {
        &self.pairs[pair.power()]
    }

    /// Components `[H]_0 = T`, `[H]_pair = V_pair`, `[H]_1 = V₁₂₃`.
    pub fn cluster_operator(&self) -> Result<ClusterOperator> {
        let mut out = ClusterOperator::zeros(3, self.kinetic.space())?;
        out.set(Partition::bottom(3)?, self.kinetic.clone())?;
        for pair in Pair::ALL {
            out.set(pair.partition(), self.pair(pair).clone())?;
        }
        out.set(Partition::top(3)?, self.three_body.clone())?;
        Ok(out)
    }

    pub fn total(&self) -> Result<OperatorMatrix> {
        let mut h = self.kinetic.add(&self.three_body)?;
        for v in &self.pairs {
            h = h.add(v)?;
        }
        Ok(h)
    }
}
