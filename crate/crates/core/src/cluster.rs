//! Partition-labelled operator families and their Möbius inversion.
//!
//! A [`ClusterOperator`] stores the components `[A]_a`. The restriction
//! `A_a = Σ_{b ⊆ a} [A]_b` keeps only the parts that survive separating the
//! clusters of `a`; Möbius inversion recovers components from restrictions.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operator::{OperatorMatrix, Space};
use crate::partition::{cluster_coefficient, LatticeTable, Partition};

#[derive(Debug, Clone)]
pub struct ClusterOperator {
    n_particles: usize,
    space: Arc<Space>,
    components: BTreeMap<Partition, OperatorMatrix>,
}

impl ClusterOperator {
    /// All components zero.
    pub fn zeros(n_particles: usize, space: &Arc<Space>) -> Result<Self> {
        let table = LatticeTable::shared(n_particles)?;
        let components = table.partitions().iter().map(|p| (p.clone(), OperatorMatrix::zeros(space))).collect();
        Ok(ClusterOperator { n_particles, space: Arc::clone(space), components })
    }

    /// Builds from an explicit map. Keys must be partitions of `n_particles`
    /// on a common space; absent keys surface later as
    /// [`Error::IncompleteExpansion`].
    pub fn from_components(
        n_particles: usize,
        space: &Arc<Space>,
        components: BTreeMap<Partition, OperatorMatrix>,
    ) -> Result<Self> {
        for (p, op) in &components {
            if p.n_particles() != n_particles {
                return Err(Error::Domain(format!("{p} is not a partition of {n_particles} particles")));
            }
            if !Space::same(op.space(), space) {
                return Err(Error::Domain(format!("component {p} lives on a different space")));
            }
        }
        Ok(ClusterOperator { n_particles, space: Arc::clone(space), components })
    }

    pub fn set(&mut self, a: Partition, op: OperatorMatrix) -> Result<()> {
        if a.n_particles() != self.n_particles {
            return Err(Error::Domain(format!("{a} is not a partition of {} particles", self.n_particles)));
        }
        if !Space::same(op.space(), &self.space) {
            return Err(Error::Domain(format!("component {a} lives on a different space")));
        }
        self.components.insert(a, op);
        Ok(())
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn component(&self, a: &Partition) -> Result<&OperatorMatrix> {
        self.components.get(a).ok_or_else(|| Error::IncompleteExpansion(a.to_string()))
    }

    pub fn components(&self) -> &BTreeMap<Partition, OperatorMatrix> {
        &self.components
    }

    /// `A_a = Σ_{b ⊆ a} [A]_b`.
    pub fn restrict(&self, a: &Partition) -> Result<OperatorMatrix> {
        let table = LatticeTable::shared(self.n_particles)?;
        let mut acc = OperatorMatrix::zeros(&self.space);
        for b in table.partitions() {
            if b.refines(a)? {
                acc = acc.add(self.component(b)?)?;
            }
        }
        Ok(acc)
    }

    /// The whole operator `A = A_1 = Σ_a [A]_a`.
    pub fn total(&self) -> Result<OperatorMatrix> {
        self.restrict(&Partition::top(self.n_particles)?)
    }

    /// Every restriction `A_a`, keyed by partition.
    pub fn restricted_family(&self) -> Result<BTreeMap<Partition, OperatorMatrix>> {
        let table = LatticeTable::shared(self.n_particles)?;
        table.partitions().iter().map(|a| Ok((a.clone(), self.restrict(a)?))).collect()
    }

    /// `[A]_1 = A − Σ_{a≠1} 𝒞_a A_a`.
    pub fn connected_part(&self) -> Result<OperatorMatrix> {
        connected_part_of_family(self.n_particles, &self.restricted_family()?)
    }
}

/// `[A]_1 = A_1 − Σ_{a≠1} 𝒞_a A_a` from a family of restrictions.
pub fn connected_part_of_family(
    n_particles: usize,
    family: &BTreeMap<Partition, OperatorMatrix>,
) -> Result<OperatorMatrix> {
    let table = LatticeTable::shared(n_particles)?;
    let top = &table.partitions()[table.top_index()];
    let get = |a: &Partition| family.get(a).ok_or_else(|| Error::IncompleteExpansion(a.to_string()));
    let mut acc = get(top)?.clone();
    for a in table.partitions().iter().filter(|a| !a.is_top()) {
        let c = cluster_coefficient(a) as f64;
        acc = acc.sub(&get(a)?.scale_re(c))?;
    }
    Ok(acc)
}

/// Components `[A]_a = Σ_{b ⊆ a} μ(a,b) A_b` from a family of restrictions.
pub fn mobius_components(
    n_particles: usize,
    space: &Arc<Space>,
    family: &BTreeMap<Partition, OperatorMatrix>,
) -> Result<ClusterOperator> {
    let table = LatticeTable::shared(n_particles)?;
    let parts = table.partitions();
    let mut components = BTreeMap::new();
    for (i, a) in parts.iter().enumerate() {
        let mut acc = OperatorMatrix::zeros(space);
        for (j, b) in parts.iter().enumerate() {
            let mu = table.mobius_idx(i, j);
            if mu != 0 {
                let ab = family.get(b).ok_or_else(|| Error::IncompleteExpansion(b.to_string()))?;
                acc = acc.add(&ab.scale_re(mu as f64))?;
            }
        }
        components.insert(a.clone(), acc);
    }
    ClusterOperator::from_components(n_particles, space, components)
}
