//! Unitary scattering equivalences as Cayley transforms of finite-rank
//! Hermitian generators.
//!
//! Sign convention throughout: `A = (1 − iΓ)(1 + iΓ)⁻¹`, `R = (1 + iΓ)⁻¹`,
//! so that `A = 2R − 1`. For a rank-one generator `Γ = λ|g⟩⟨g|` this gives
//! `A = 1 + f|g⟩⟨g|` with `f(λ) = −2iλ / (1 + iλ⟨g|g⟩)`.
//!
//! The N-body resolvent is obtained from
//!
//! ```text
//! R = Σ_{a≠1} 𝒞_a R_a − i Σ_{a≠1} 𝒞_a R_a Γ^a R,      Γ^a = Γ − Γ_a,
//! ```
//!
//! whose kernel is finite rank whenever every `[Γ]_a` is; the equation is
//! then a small linear system. Subsystem resolvents `R_a` are found
//! algebraically (Woodbury).

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::cluster::{mobius_components, ClusterOperator};
use crate::error::{Error, Result};
use crate::operator::{OperatorMatrix, Space, StateVector, C64, HERMITIAN_TOL};
use crate::partition::{cluster_coefficient, LatticeTable, Partition};

/// Unitarity tolerance for constructed equivalences.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Projected systems with a condition estimate above this produce a warning.
pub const CONDITION_WARNING: f64 = 1e8;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Dense Cayley transform `(I − iΓ)(I + iΓ)⁻¹` of a Hermitian operator.
pub fn cayley_dense(gamma: &OperatorMatrix) -> Result<OperatorMatrix> {
    let gamma = if gamma.is_hermitian() { gamma.clone() } else { gamma.clone().declare_hermitian()? };
    let s = gamma.to_scaled();
    let n = s.nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let plus = &id + &s * I;
    let minus = &id - &s * I;
    let lu = plus.lu();
    let x = lu.solve(&minus).ok_or_else(|| Error::Domain("I + iΓ numerically singular".into()))?;
    // (I + iΓ)⁻¹(I − iΓ) equals (I − iΓ)(I + iΓ)⁻¹: the factors commute
    let a = OperatorMatrix::from_scaled(gamma.space(), &x, false)?;
    let resid = a.unitarity_residual();
    if resid > UNITARITY_TOL {
        return Err(Error::NotUnitary { residual: resid, tolerance: UNITARITY_TOL });
    }
    Ok(a)
}

/// Dense resolvent `(I + iΓ)⁻¹`, used as an oracle.
pub fn resolvent_dense(gamma: &OperatorMatrix) -> Result<OperatorMatrix> {
    let s = gamma.to_scaled();
    let n = s.nrows();
    let plus = DMatrix::<C64>::identity(n, n) + s * I;
    let inv = plus.try_inverse().ok_or_else(|| Error::Domain("I + iΓ numerically singular".into()))?;
    OperatorMatrix::from_scaled(gamma.space(), &inv, false)
}

/// `f(λ) = −2iλ / (1 + iλ n)` with `n = ⟨g|g⟩`.
pub fn rank_one_coefficient(lambda: f64, norm_sqr: f64) -> C64 {
    -2.0 * I * lambda / (ONE + I * lambda * norm_sqr)
}

/// `A = I + f |g⟩⟨g|` for `Γ = λ|g⟩⟨g|`.
#[derive(Debug, Clone)]
pub struct RankOneCayley {
    pub lambda: f64,
    pub f: C64,
    pub form_factor: StateVector,
    pub norm_sqr: f64,
}

impl RankOneCayley {
    pub fn operator(&self) -> OperatorMatrix {
        let id = OperatorMatrix::identity(self.form_factor.space());
        let dyad = OperatorMatrix::dyad(&self.form_factor, self.f, &self.form_factor).expect("same space");
        id.add(&dyad).expect("same space")
    }

    /// `|1 + f⟨g|g⟩|`, which is one for a unitary rank-one block.
    pub fn block_modulus(&self) -> f64 {
        (ONE + self.f * self.norm_sqr).norm()
    }
}

pub fn cayley_rank_one(lambda: f64, g: &StateVector) -> Result<RankOneCayley> {
    let norm_sqr = g.norm_sqr();
    if !(norm_sqr > 0.0 && norm_sqr.is_finite()) {
        return Err(Error::DegenerateGenerator(format!(
            "form factor has norm² {norm_sqr}; the transformation is the identity"
        )));
    }
    Ok(RankOneCayley { lambda, f: rank_one_coefficient(lambda, norm_sqr), form_factor: g.clone(), norm_sqr })
}

/// One cluster component `[Γ]_a = Σ_n λ_n |ξ_n⟩⟨ξ_n|` in canonical form:
/// the `ξ_n` are orthonormal and the `λ_n` real.
#[derive(Debug, Clone)]
pub struct GeneratorComponent {
    strengths: Vec<f64>,
    vectors: Vec<StateVector>,
}

impl GeneratorComponent {
    /// Accepts any real strengths and form factors and rewrites the operator
    /// `Σ λ_n |g_n⟩⟨g_n|` in canonical orthonormal form (Gram–Schmidt on the
    /// span, then diagonalisation of the small projected matrix). Vectors
    /// whose Gram–Schmidt residual vanishes are dropped.
    pub fn new(strengths: Vec<f64>, form_factors: Vec<StateVector>) -> Result<Self> {
        if strengths.len() != form_factors.len() {
            return Err(Error::Config(format!(
                "{} strengths for {} form factors",
                strengths.len(),
                form_factors.len()
            )));
        }
        if let Some(bad) = strengths.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("non-finite strength {bad}")));
        }
        let Some(first) = form_factors.first() else {
            return Ok(GeneratorComponent { strengths: vec![], vectors: vec![] });
        };
        let space = Arc::clone(first.space());
        let scale = form_factors.iter().map(|g| g.norm()).fold(0.0, f64::max);
        let mut basis: Vec<StateVector> = Vec::new();
        for g in &form_factors {
            let mut v = g.clone();
            for _ in 0..2 {
                for q in &basis {
                    let c = q.inner(&v)?;
                    v = v.axpy(-c, q)?;
                }
            }
            let nv = v.norm();
            if nv > 1e-12 * scale {
                basis.push(v.scale(C64::new(1.0 / nv, 0.0)));
            }
        }
        let r = basis.len();
        if r == 0 {
            return Ok(GeneratorComponent { strengths: vec![], vectors: vec![] });
        }
        let mut m = DMatrix::<C64>::zeros(r, r);
        for (lam, g) in strengths.iter().zip(&form_factors) {
            let c: Vec<C64> = basis.iter().map(|q| q.inner(g)).collect::<Result<_>>()?;
            for i in 0..r {
                for j in 0..r {
                    m[(i, j)] += c[i] * c[j].conj() * *lam;
                }
            }
        }
        let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let eig = m.symmetric_eigen();
        let mut strengths_out = Vec::with_capacity(r);
        let mut vectors = Vec::with_capacity(r);
        for n in 0..r {
            let mut v = StateVector::zeros(&space);
            for (j, q) in basis.iter().enumerate() {
                v = v.axpy(eig.eigenvectors[(j, n)], q)?;
            }
            strengths_out.push(eig.eigenvalues[n]);
            vectors.push(v);
        }
        Ok(GeneratorComponent { strengths: strengths_out, vectors })
    }

    /// Already orthonormal vectors; verified to 1e-10.
    pub fn from_orthonormal(strengths: Vec<f64>, vectors: Vec<StateVector>) -> Result<Self> {
        for (i, u) in vectors.iter().enumerate() {
            for (j, v) in vectors.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (u.inner(v)? - expect).norm() > 1e-10 {
                    return Err(Error::Domain("vectors are not orthonormal".into()));
                }
            }
        }
        if strengths.len() != vectors.len() {
            return Err(Error::Config("strength/vector count mismatch".into()));
        }
        Ok(GeneratorComponent { strengths, vectors })
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn vectors(&self) -> &[StateVector] {
        &self.vectors
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        GeneratorComponent {
            strengths: self.strengths.iter().map(|s| s * factor).collect(),
            vectors: self.vectors.clone(),
        }
    }

    pub fn dense(&self, space: &Arc<Space>) -> Result<OperatorMatrix> {
        let mut acc = OperatorMatrix::zeros(space);
        for (lam, v) in self.strengths.iter().zip(&self.vectors) {
            acc = acc.add(&OperatorMatrix::dyad(v, C64::new(*lam, 0.0), v)?)?;
        }
        let n = acc.entries().clone();
        OperatorMatrix::new(space, (&n + n.adjoint()) * C64::new(0.5, 0.0), true)
    }
}

/// A cluster-expanded Hermitian generator `Γ = Σ_a [Γ]_a`.
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    n_particles: usize,
    space: Arc<Space>,
    components: BTreeMap<Partition, GeneratorComponent>,
}

impl GeneratorSpec {
    pub fn new(n_particles: usize, space: &Arc<Space>) -> Self {
        GeneratorSpec { n_particles, space: Arc::clone(space), components: BTreeMap::new() }
    }

    pub fn with_component(mut self, a: Partition, component: GeneratorComponent) -> Result<Self> {
        self.insert(a, component)?;
        Ok(self)
    }

    pub fn insert(&mut self, a: Partition, component: GeneratorComponent) -> Result<()> {
        if a.n_particles() != self.n_particles {
            return Err(Error::Domain(format!("{a} is not a partition of {} particles", self.n_particles)));
        }
        if a.is_bottom() && component.rank() > 0 && self.n_particles > 1 {
            return Err(Error::Domain("one-body generator components are not supported".into()));
        }
        for v in component.vectors() {
            if !Space::same(v.space(), &self.space) {
                return Err(Error::Domain(format!("component {a} lives on a different space")));
            }
        }
        self.components.insert(a, component);
        Ok(())
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn components(&self) -> &BTreeMap<Partition, GeneratorComponent> {
        &self.components
    }

    pub fn component(&self, a: &Partition) -> Option<&GeneratorComponent> {
        self.components.get(a)
    }

    /// Keeps only components `[Γ]_b` with `b ⊆ a`, i.e. the generator of `Γ_a`.
    pub fn restricted_to(&self, a: &Partition) -> Result<Self> {
        let mut out = GeneratorSpec::new(self.n_particles, &self.space);
        for (b, c) in &self.components {
            if b.refines(a)? {
                out.components.insert(b.clone(), c.clone());
            }
        }
        Ok(out)
    }

    /// Algebraic clustering: `Γ(s) = Γ_a + s Γ^a`.
    pub fn switched(&self, a: &Partition, s: f64) -> Result<Self> {
        let mut out = self.clone();
        for (b, c) in out.components.iter_mut() {
            if !b.refines(a)? {
                *c = c.scaled(s);
            }
        }
        Ok(out)
    }

    /// Replaces or scales one component.
    pub fn with_scaled_component(&self, a: &Partition, factor: f64) -> Self {
        let mut out = self.clone();
        if let Some(c) = out.components.get_mut(a) {
            *c = c.scaled(factor);
        }
        out
    }

    /// All `(λ, ξ)` pairs of components `b ⊆ a`.
    fn dyads_within(&self, a: &Partition) -> Result<Vec<(f64, StateVector)>> {
        let mut out = Vec::new();
        for (b, c) in &self.components {
            if b.refines(a)? {
                out.extend(c.strengths.iter().copied().zip(c.vectors.iter().cloned()));
            }
        }
        Ok(out)
    }

    pub fn component_dense(&self, a: &Partition) -> Result<OperatorMatrix> {
        match self.components.get(a) {
            Some(c) => c.dense(&self.space),
            None => Ok(OperatorMatrix::zeros(&self.space)),
        }
    }

    /// Dense `Γ_a = Σ_{b ⊆ a} [Γ]_b`.
    pub fn restricted_dense(&self, a: &Partition) -> Result<OperatorMatrix> {
        let mut acc = OperatorMatrix::zeros(&self.space);
        for (b, c) in &self.components {
            if b.refines(a)? {
                acc = acc.add(&c.dense(&self.space)?)?;
            }
        }
        Ok(acc)
    }

    pub fn total_dense(&self) -> Result<OperatorMatrix> {
        self.restricted_dense(&Partition::top(self.n_particles)?)
    }

    /// Generator components as a [`ClusterOperator`].
    pub fn cluster_operator(&self) -> Result<ClusterOperator> {
        let mut out = ClusterOperator::zeros(self.n_particles, &self.space)?;
        for (a, c) in &self.components {
            out.set(a.clone(), c.dense(&self.space)?)?;
        }
        Ok(out)
    }
}

/// `c·I + Σ_{mn} |left_m⟩ coeff_{mn} ⟨right_n|`.
#[derive(Debug, Clone)]
pub struct FiniteRank {
    space: Arc<Space>,
    identity: C64,
    left: Vec<StateVector>,
    coeff: DMatrix<C64>,
    right: Vec<StateVector>,
}

impl FiniteRank {
    pub fn identity(space: &Arc<Space>) -> Self {
        FiniteRank { space: Arc::clone(space), identity: ONE, left: vec![], coeff: DMatrix::zeros(0, 0), right: vec![] }
    }

    pub fn rank_bound(&self) -> usize {
        self.left.len()
    }

    pub fn identity_coefficient(&self) -> C64 {
        self.identity
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        let proj: Vec<C64> = self.right.iter().map(|r| r.inner(v)).collect::<Result<_>>()?;
        let mut out = v.scale(self.identity);
        for (m, l) in self.left.iter().enumerate() {
            let c: C64 = (0..self.right.len()).map(|n| self.coeff[(m, n)] * proj[n]).sum();
            out = out.axpy(c, l)?;
        }
        Ok(out)
    }

    pub fn apply_adjoint(&self, v: &StateVector) -> Result<StateVector> {
        let proj: Vec<C64> = self.left.iter().map(|l| l.inner(v)).collect::<Result<_>>()?;
        let mut out = v.scale(self.identity.conj());
        for (n, r) in self.right.iter().enumerate() {
            let c: C64 = (0..self.left.len()).map(|m| self.coeff[(m, n)].conj() * proj[m]).sum();
            out = out.axpy(c, r)?;
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Result<OperatorMatrix> {
        let mut acc = OperatorMatrix::identity(&self.space).scale(self.identity);
        if self.left.is_empty() {
            return Ok(acc);
        }
        let n = self.space.dim();
        let l = DMatrix::from_fn(n, self.left.len(), |i, m| self.left[m].values()[i]);
        let r = DMatrix::from_fn(n, self.right.len(), |i, m| self.right[m].values()[i]);
        let low = &l * &self.coeff * r.adjoint();
        acc = acc.add(&OperatorMatrix::new(&self.space, low, false)?)?;
        Ok(acc)
    }
}

/// `(I + iΓ_sub)⁻¹` for a finite-rank Hermitian `Γ_sub = Σ λ_k |u_k⟩⟨u_k|`.
pub fn subsystem_resolvent(space: &Arc<Space>, dyads: &[(f64, StateVector)]) -> Result<FiniteRank> {
    let r = dyads.len();
    if r == 0 {
        return Ok(FiniteRank::identity(space));
    }
    let gram = DMatrix::from_fn(r, r, |i, j| dyads[i].1.inner_unchecked(&dyads[j].1));
    let m = DMatrix::from_fn(r, r, |i, j| if i == j { I * dyads[i].0 } else { C64::new(0.0, 0.0) });
    let system = DMatrix::<C64>::identity(r, r) + &m * &gram;
    let inv = system
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned { message: "subsystem resolvent".into(), condition: f64::INFINITY })?;
    let vecs: Vec<StateVector> = dyads.iter().map(|d| d.1.clone()).collect();
    Ok(FiniteRank { space: Arc::clone(space), identity: ONE, left: vecs.clone(), coeff: -(inv * m), right: vecs })
}

/// `R_a` for the generator restricted to partition `a`.
pub fn resolvent_of_partition(spec: &GeneratorSpec, a: &Partition) -> Result<FiniteRank> {
    subsystem_resolvent(&spec.space, &spec.dyads_within(a)?)
}

/// Solution of the N-body resolvent equation in finite-rank form.
#[derive(Debug, Clone)]
pub struct FiniteRankResolvent {
    /// Driving term `D = Σ_{a≠1} 𝒞_a R_a`.
    pub driving: FiniteRank,
    /// Kernel `K = Σ_m |p_m⟩⟨q_m|`.
    pub kernel_left: Vec<StateVector>,
    pub kernel_right: Vec<StateVector>,
    /// `(I − G)⁻¹` with `G_{mm'} = ⟨q_m|p_{m'}⟩`.
    pub solution: DMatrix<C64>,
    /// Singular-value condition estimate of `I − G`.
    pub condition: f64,
    pub warnings: Vec<String>,
    resolvent: FiniteRank,
}

impl FiniteRankResolvent {
    /// Dimension of the projected linear system.
    pub fn system_dim(&self) -> usize {
        self.kernel_left.len()
    }

    /// `R = D + Σ_{m m'} |p_m⟩ [(I−G)⁻¹]_{mm'} ⟨q_{m'}| D`.
    pub fn as_finite_rank(&self) -> &FiniteRank {
        &self.resolvent
    }

    pub fn to_dense(&self) -> Result<OperatorMatrix> {
        self.resolvent.to_dense()
    }
}

/// Solves the resolvent equation for `R = (1 + iΓ)⁻¹`.
pub fn solve_resolvent(spec: &GeneratorSpec) -> Result<FiniteRankResolvent> {
    let n = spec.n_particles;
    let space = Arc::clone(&spec.space);
    let table = LatticeTable::shared(n)?;
    let parts: Vec<&Partition> = table.partitions().iter().filter(|a| !a.is_top()).collect();

    if n == 1 {
        // no proper partitions: R = (1 + i[Γ]_1)⁻¹ directly
        let r = resolvent_of_partition(spec, &Partition::top(1)?)?;
        return Ok(FiniteRankResolvent {
            driving: r.clone(),
            kernel_left: vec![],
            kernel_right: vec![],
            solution: DMatrix::zeros(0, 0),
            condition: 1.0,
            warnings: vec![],
            resolvent: r,
        });
    }

    // subsystem resolvents and the driving term D = I + Σ 𝒞_a (R_a − I)
    let mut sub: Vec<(&Partition, i64, FiniteRank)> = Vec::new();
    let mut d_left = Vec::new();
    let mut d_right = Vec::new();
    let mut d_blocks: Vec<DMatrix<C64>> = Vec::new();
    for &a in &parts {
        let ca = cluster_coefficient(a);
        let ra = resolvent_of_partition(spec, a)?;
        if ra.rank_bound() > 0 {
            d_left.extend(ra.left.iter().cloned());
            d_right.extend(ra.right.iter().cloned());
            d_blocks.push(&ra.coeff * C64::new(ca as f64, 0.0));
        }
        sub.push((a, ca, ra));
    }
    let driving = FiniteRank {
        space: Arc::clone(&space),
        identity: ONE,
        left: d_left,
        coeff: block_diagonal(&d_blocks),
        right: d_right,
    };

    // kernel dyads K = Σ_m |p_m⟩⟨q_m|
    let mut p = Vec::new();
    let mut q = Vec::new();
    for (b, comp) in &spec.components {
        let mut kappa = 1i64;
        for &a in &parts {
            if a.coarsens(b)? {
                kappa -= cluster_coefficient(a);
            }
        }
        if kappa != 0 {
            for (lam, xi) in comp.strengths.iter().zip(&comp.vectors) {
                p.push(xi.scale(-I * (kappa as f64) * *lam));
                q.push(xi.clone());
            }
        }
    }
    for (a, ca, ra) in &sub {
        if ra.rank_bound() == 0 {
            continue;
        }
        for (b, comp) in &spec.components {
            if b.refines(a)? {
                continue;
            }
            for (lam, xi) in comp.strengths.iter().zip(&comp.vectors) {
                // (R_a − I) ξ
                let shifted = ra.apply(xi)?.axpy(-ONE, xi)?;
                p.push(shifted.scale(-I * (*ca as f64) * *lam));
                q.push(xi.clone());
            }
        }
    }

    let m = p.len();
    let mut system = DMatrix::<C64>::identity(m, m);
    for i in 0..m {
        for j in 0..m {
            system[(i, j)] -= q[i].inner_unchecked(&p[j]);
        }
    }
    let mut warnings = Vec::new();
    let condition = if m == 0 {
        1.0
    } else {
        let sv = system.clone().singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    };
    if !condition.is_finite() {
        return Err(Error::IllConditioned { message: "projected resolvent system is singular".into(), condition });
    }
    if condition > CONDITION_WARNING {
        warnings.push(format!("projected resolvent system condition estimate {condition:.3e}"));
    }
    let solution = system
        .try_inverse()
        .ok_or(Error::IllConditioned { message: "projected resolvent system is singular".into(), condition })?;

    // R = D + P W Q† D with D = I + L C R†
    let qd: DMatrix<C64> = DMatrix::from_fn(m, driving.left.len(), |i, j| q[i].inner_unchecked(&driving.left[j]));
    let kd = driving.left.len();
    let mut coeff = DMatrix::<C64>::zeros(kd + m, kd + m);
    coeff.view_mut((0, 0), (kd, kd)).copy_from(&driving.coeff);
    coeff.view_mut((kd, kd), (m, m)).copy_from(&solution);
    if kd > 0 && m > 0 {
        let cross = &solution * &qd * &driving.coeff;
        coeff.view_mut((kd, 0), (m, kd)).copy_from(&cross);
    }
    let mut left = driving.left.clone();
    left.extend(p.iter().cloned());
    let mut right = driving.right.clone();
    right.extend(q.iter().cloned());
    let resolvent = FiniteRank { space: Arc::clone(&space), identity: ONE, left, coeff, right };

    Ok(FiniteRankResolvent { driving, kernel_left: p, kernel_right: q, solution, condition, warnings, resolvent })
}

fn block_diagonal(blocks: &[DMatrix<C64>]) -> DMatrix<C64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// `A = (1 − iΓ) R`.
pub fn assemble_a(spec: &GeneratorSpec, resolvent: &FiniteRankResolvent) -> Result<OperatorMatrix> {
    let r = resolvent.to_dense()?;
    let gamma = spec.total_dense()?;
    r.sub(&gamma.compose(&r)?.scale(I))
}

/// The equivalence `A` built through the finite-rank resolvent.
pub fn equivalence(spec: &GeneratorSpec) -> Result<OperatorMatrix> {
    let a = assemble_a(spec, &solve_resolvent(spec)?)?;
    let resid = a.unitarity_residual();
    if resid > UNITARITY_TOL {
        return Err(Error::NotUnitary { residual: resid, tolerance: UNITARITY_TOL });
    }
    Ok(a)
}

/// Restrictions `A_a = (1 − iΓ_a)(1 + iΓ_a)⁻¹ = 2R_a − 1` for every
/// partition; the top one goes through [`solve_resolvent`].
pub fn restricted_equivalences(spec: &GeneratorSpec) -> Result<BTreeMap<Partition, OperatorMatrix>> {
    let table = LatticeTable::shared(spec.n_particles)?;
    let id = OperatorMatrix::identity(&spec.space);
    let mut family = BTreeMap::new();
    for a in table.partitions() {
        let aa = if a.is_top() {
            equivalence(spec)?
        } else {
            resolvent_of_partition(spec, a)?.to_dense()?.scale_re(2.0).sub(&id)?
        };
        family.insert(a.clone(), aa);
    }
    Ok(family)
}

/// Cluster components `[A]_a` by Möbius inversion of the restrictions.
pub fn cluster_components_of_a(spec: &GeneratorSpec) -> Result<ClusterOperator> {
    mobius_components(spec.n_particles, &spec.space, &restricted_equivalences(spec)?)
}

/// Three-body components from the closed forms:
/// `[A]_0 = I`, `[A]_{(ij)(k)} = −2i[Γ]_{(ij)(k)} R_{(ij)(k)}` and
/// `[A]_{(123)} = −2i Σ_{a≠1} 𝒞_a R_a Γ^a R = 2(R − D)`.
pub fn three_body_components(spec: &GeneratorSpec) -> Result<ClusterOperator> {
    if spec.n_particles != 3 {
        return Err(Error::Domain("closed-form components need three particles".into()));
    }
    let table = LatticeTable::shared(3)?;
    let solved = solve_resolvent(spec)?;
    let mut out = ClusterOperator::zeros(3, &spec.space)?;
    for a in table.partitions() {
        let comp = match a.n_clusters() {
            3 => OperatorMatrix::identity(&spec.space),
            2 => {
                let ra = resolvent_of_partition(spec, a)?.to_dense()?;
                spec.component_dense(a)?.compose(&ra)?.scale(-2.0 * I)
            }
            _ => {
                let r = solved.to_dense()?;
                let d = solved.driving.to_dense()?;
                r.sub(&d)?.scale_re(2.0)
            }
        };
        out.set(a.clone(), comp)?;
    }
    Ok(out)
}

/// `max|Γ − Γ†|` relative check used when generators are assembled densely.
pub fn is_hermitian_generator(gamma: &OperatorMatrix) -> bool {
    gamma.hermiticity_residual() <= HERMITIAN_TOL * gamma.max_abs().max(f64::MIN_POSITIVE)
}
