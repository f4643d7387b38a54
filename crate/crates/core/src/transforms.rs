//! Applying scattering equivalences: conjugation `O′ = A†OA`, transformed
//! two-body interactions, and the cluster decomposition of a transformed
//! three-body Hamiltonian.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cayley::{cayley_rank_one, restricted_equivalences, GeneratorSpec, UNITARITY_TOL};
use crate::cluster::{mobius_components, ClusterOperator};
use crate::error::{Error, Result};
use crate::operator::{OperatorMatrix, StateVector, C64};
use crate::partition::Partition;
use crate::potential::{FormFactorSpec, Profile, SeparableTerm};
use crate::scattering::TwoBodySystem;
use crate::three_body::{Pair, ThreeBodyHamiltonian};

/// `A† O A`, refused unless `A` is unitary to [`UNITARITY_TOL`].
pub fn conjugate(o: &OperatorMatrix, a: &OperatorMatrix) -> Result<OperatorMatrix> {
    let resid = a.unitarity_residual();
    if resid > UNITARITY_TOL {
        return Err(Error::NotUnitary { residual: resid, tolerance: UNITARITY_TOL });
    }
    let out = o.sandwich(a)?;
    if o.is_hermitian() {
        return out.declare_hermitian();
    }
    Ok(out)
}

/// `O′ − O` for `A = 1 + f|g⟩⟨g|`, assembled from the three separable terms
/// `f*|g⟩⟨g|O + f O|g⟩⟨g| + |f|²|g⟩⟨g|O|g⟩⟨g|`.
pub fn rank_one_conjugation_terms(o: &OperatorMatrix, f: C64, g: &StateVector) -> Result<OperatorMatrix> {
    let og = o.apply(g)?;
    let go = o.adjoint().apply(g)?;
    let t1 = OperatorMatrix::dyad(g, f.conj(), &go)?;
    let t2 = OperatorMatrix::dyad(&og, f, g)?;
    let t3 = OperatorMatrix::dyad(g, f.norm_sqr() * g.inner(&og)?, g)?;
    t1.add(&t2)?.add(&t3)
}

/// Result of transforming a two-body system by `A = 1 + f|g⟩⟨g|`.
#[derive(Debug, Clone)]
pub struct TransformedTwoBody {
    pub system: TwoBodySystem,
    pub lambda: f64,
    pub f: C64,
    pub form_factor: StateVector,
    pub equivalence: OperatorMatrix,
}

/// `V′ = V + |g⟩f*⟨g|H + H|g⟩f⟨g| + |g⟩|f|²⟨g|H|g⟩⟨g|` as an interaction
/// that can still be evaluated off the grid. `H|g⟩` off the grid uses the
/// Nyström extension `(Hg)(k) = k²/2μ g(k) + Σ_j V(k,k_j) d_j g(k_j)`.
pub fn transformed_two_body(
    sys: &TwoBodySystem,
    lambda: f64,
    form_factor: FormFactorSpec,
) -> Result<TransformedTwoBody> {
    form_factor.validate()?;
    let grid = sys.grid();
    let nodes = grid.nodes().to_vec();
    let g = StateVector::from_fn(grid.space(), |i| form_factor.eval(nodes[i]));
    let rank_one = cayley_rank_one(lambda, &g)?;
    let f = rank_one.f;
    let h = sys.hamiltonian()?;
    let hgg = g.inner(&h.apply(&g)?)?.re;

    let base = sys.interaction().clone();
    let mu = sys.reduced_mass();
    let weighted: Vec<C64> = nodes.iter().zip(grid.space().measure()).map(|(k, d)| d * form_factor.eval(*k)).collect();
    let hg_nodes = nodes.clone();
    let hg = Profile::new(move |k| {
        let mut acc = form_factor.eval(k) * (k * k / (2.0 * mu));
        for (kj, wg) in hg_nodes.iter().zip(&weighted) {
            acc += base.eval(k, *kj) * *wg;
        }
        acc
    });
    let gp = form_factor.profile();
    let terms = [
        SeparableTerm { coeff: f.conj(), left: gp.clone(), right: hg.clone() },
        SeparableTerm { coeff: f, left: hg, right: gp.clone() },
        SeparableTerm { coeff: C64::new(f.norm_sqr() * hgg, 0.0), left: gp.clone(), right: gp },
    ];
    let interaction = sys.interaction().with_terms(terms);
    let system = sys.with_interaction(interaction)?;
    Ok(TransformedTwoBody { system, lambda, f, form_factor: g, equivalence: rank_one.operator() })
}

/// Cluster decomposition of `H′ = A†HA` for three particles.
#[derive(Debug, Clone)]
pub struct TransformedHamiltonian {
    pub original: OperatorMatrix,
    pub equivalence: OperatorMatrix,
    pub transformed: OperatorMatrix,
    /// `[H′]_a` for every partition: `T` on the bottom, `V′` on the pairs,
    /// `V′₁₂₃` on the top.
    pub components: ClusterOperator,
}

impl TransformedHamiltonian {
    pub fn kinetic(&self) -> Result<&OperatorMatrix> {
        self.components.component(&Partition::bottom(3)?)
    }

    pub fn pair_potential(&self, pair: Pair) -> Result<&OperatorMatrix> {
        self.components.component(&pair.partition())
    }

    pub fn three_body_potential(&self) -> Result<&OperatorMatrix> {
        self.components.component(&Partition::top(3)?)
    }

    /// `‖T + ΣV′ + V′₁₂₃ − A†HA‖ / ‖A†HA‖`.
    pub fn decomposition_residual(&self) -> Result<f64> {
        self.components.total()?.rel_norm_diff(&self.transformed)
    }
}

/// `[H′]_a = Σ_b μ(a,b) A_b† H_b A_b` (Möbius route).
pub fn transform_three_body(ham: &ThreeBodyHamiltonian, spec: &GeneratorSpec) -> Result<TransformedHamiltonian> {
    if spec.n_particles() != 3 {
        return Err(Error::Domain("three-body transform needs a three-particle generator".into()));
    }
    let h = ham.cluster_operator()?;
    let family = restricted_equivalences(spec)?;
    let mut transformed_family = std::collections::BTreeMap::new();
    for (a, aa) in &family {
        transformed_family.insert(a.clone(), conjugate(&h.restrict(a)?, aa)?);
    }
    let top = Partition::top(3)?;
    let components = mobius_components(3, spec.space(), &transformed_family)?;
    Ok(TransformedHamiltonian {
        original: h.total()?,
        equivalence: family[&top].clone(),
        transformed: transformed_family[&top].clone(),
        components,
    })
}

/// `V′_{(ij)(k)} = (1 + [A]_{(ij)(k)})†(T + V_{(ij)(k)})(1 + [A]_{(ij)(k)}) − T`.
pub fn transformed_pair_potential(
    ham: &ThreeBodyHamiltonian,
    a_components: &ClusterOperator,
    pair: Pair,
) -> Result<OperatorMatrix> {
    let id = OperatorMatrix::identity(ham.kinetic.space());
    let ap = id.add(a_components.component(&pair.partition())?)?;
    let hp = ham.kinetic.add(ham.pair(pair))?;
    hp.sandwich(&ap)?.sub(&ham.kinetic)
}

/// The transformed three-body interaction expanded in the components of
/// `A`. Writing `B = A†` and `b_x = [A]_x†`, every term of `B H B†` whose
/// factors do not all belong to one pair cluster is kept:
///
/// ```text
/// b₁₂₃ H B† + Σ_pairs b_p [ (T + V_p)(Σ_{x≠p} b_x†) + (Σ_{q≠p} V_q + V₁₂₃) B† ]
///   + T b₁₂₃† + Σ_pairs V_p (Σ_{x≠p} b_x†) + V₁₂₃ B†
/// ```
///
/// where `x` ranges over the other pairs and `(123)`.
pub fn induced_three_body(ham: &ThreeBodyHamiltonian, a_components: &ClusterOperator) -> Result<OperatorMatrix> {
    let space = Arc::clone(ham.kinetic.space());
    if !crate::operator::Space::same(&space, a_components.space()) {
        return Err(Error::Embedding("Hamiltonian and equivalence live on different spaces".into()));
    }
    let top = Partition::top(3)?;
    let bottom = Partition::bottom(3)?;
    // b_x = [A]_x†, B = A† = Σ b_x
    let b = |p: &Partition| -> Result<OperatorMatrix> { Ok(a_components.component(p)?.adjoint()) };
    let b_total = a_components.total()?.adjoint();
    let bd_total = b_total.adjoint();
    let h = ham.total()?;
    let b123 = b(&top)?;
    let b123d = b123.adjoint();
    let id = OperatorMatrix::identity(&space);
    if b(&bottom)?.rel_norm_diff(&id)? > 1e-12 {
        return Err(Error::Domain("the bottom component of an equivalence must be the identity".into()));
    }

    let mut acc = b123.compose(&h)?.compose(&bd_total)?;
    for p in Pair::ALL {
        let others: Vec<Pair> = Pair::ALL.into_iter().filter(|q| *q != p).collect();
        let mut outer_d = b123d.clone();
        let mut outer_v = ham.three_body.clone();
        for q in &others {
            outer_d = outer_d.add(&b(&q.partition())?.adjoint())?;
            outer_v = outer_v.add(ham.pair(*q))?;
        }
        let bp = b(&p.partition())?;
        let hp = ham.kinetic.add(ham.pair(p))?;
        let inner = hp.compose(&outer_d)?.add(&outer_v.compose(&bd_total)?)?;
        acc = acc.add(&bp.compose(&inner)?)?;
        acc = acc.add(&ham.pair(p).compose(&outer_d)?)?;
    }
    acc = acc.add(&ham.kinetic.compose(&b123d)?)?;
    acc = acc.add(&ham.three_body.compose(&bd_total)?)?;
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceCheck {
    pub connected_strengths: Vec<f64>,
    /// Largest relative change of any `V′_{(ij)(k)}` across the sweep.
    pub max_two_body_drift: f64,
    /// `‖V′₁₂₃‖` at each sweep point.
    pub three_body_norms: Vec<f64>,
    /// Largest relative change of `V′₁₂₃` between any two sweep points.
    pub three_body_variation: f64,
    pub independent: bool,
}

/// Drift threshold for calling two-body components independent of `[Γ]₁₂₃`.
pub const INDEPENDENCE_TOL: f64 = 1e-12;

/// Sweeps the multiplier of the connected generator component and records
/// how the transformed pair and three-body interactions respond.
pub fn two_body_independence_check(
    ham: &ThreeBodyHamiltonian,
    spec: &GeneratorSpec,
    sweep: &[f64],
) -> Result<IndependenceCheck> {
    let top = Partition::top(3)?;
    let mut pairs: Vec<[OperatorMatrix; 3]> = Vec::new();
    let mut three: Vec<OperatorMatrix> = Vec::new();
    for s in sweep {
        let t = transform_three_body(ham, &spec.with_scaled_component(&top, *s))?;
        pairs.push([
            t.pair_potential(Pair::P12)?.clone(),
            t.pair_potential(Pair::P23)?.clone(),
            t.pair_potential(Pair::P31)?.clone(),
        ]);
        three.push(t.three_body_potential()?.clone());
    }
    let mut drift: f64 = 0.0;
    for run in pairs.iter().skip(1) {
        for k in 0..3 {
            let scale = pairs[0][k].norm().max(f64::MIN_POSITIVE);
            drift = drift.max(run[k].sub(&pairs[0][k])?.norm() / scale);
        }
    }
    let norms: Vec<f64> = three.iter().map(|v| v.norm()).collect();
    let mut variation: f64 = 0.0;
    for i in 0..three.len() {
        for j in i + 1..three.len() {
            let scale = norms[i].max(norms[j]).max(f64::MIN_POSITIVE);
            variation = variation.max(three[i].sub(&three[j])?.norm() / scale);
        }
    }
    Ok(IndependenceCheck {
        connected_strengths: sweep.to_vec(),
        max_two_body_drift: drift,
        three_body_norms: norms,
        three_body_variation: variation,
        independent: drift <= INDEPENDENCE_TOL,
    })
}
