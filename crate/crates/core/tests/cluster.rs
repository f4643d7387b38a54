use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scattering_equivalence::cluster::{connected_part_of_family, mobius_components, ClusterOperator};
use scattering_equivalence::operator::{OperatorMatrix, Space, C64};
use scattering_equivalence::partition::{cluster_coefficient, enumerate_partitions, mobius, Partition};
use scattering_equivalence::Error;

fn space(n: usize) -> Arc<Space> {
    Space::new("test", (0..n).map(|i| 0.5 + 0.1 * i as f64).collect()).unwrap()
}

fn seeded_operator(space: &Arc<Space>, seed: u64) -> OperatorMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.dim();
    let vals: Vec<C64> = (0..n * n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    OperatorMatrix::from_fn(space, false, |i, j| vals[i * n + j]).unwrap()
}

fn random_cluster(n: usize, sp: &Arc<Space>, seed: u64) -> ClusterOperator {
    let mut comps = BTreeMap::new();
    for (k, p) in enumerate_partitions(n).unwrap().into_iter().enumerate() {
        comps.insert(p, seeded_operator(sp, seed * 1000 + k as u64));
    }
    ClusterOperator::from_components(n, sp, comps).unwrap()
}

#[test]
fn identity_in_bottom_component_has_no_connected_part() {
    let sp = space(4);
    let mut c = ClusterOperator::zeros(3, &sp).unwrap();
    c.set(Partition::bottom(3).unwrap(), OperatorMatrix::identity(&sp)).unwrap();
    for p in enumerate_partitions(3).unwrap() {
        assert!(c.restrict(&p).unwrap().max_rel_diff(&OperatorMatrix::identity(&sp)) == 0.0);
    }
    assert_eq!(c.connected_part().unwrap().max_abs(), 0.0);
}

#[test]
fn missing_component_is_reported() {
    let sp = space(3);
    let mut comps = BTreeMap::new();
    comps.insert(Partition::bottom(3).unwrap(), OperatorMatrix::identity(&sp));
    let c = ClusterOperator::from_components(3, &sp, comps).unwrap();
    assert!(matches!(c.restrict(&Partition::top(3).unwrap()), Err(Error::IncompleteExpansion(_))));
}

#[test]
fn connected_part_equals_top_mobius_component() {
    let sp = space(3);
    for n in [2, 3, 4] {
        let c = random_cluster(n, &sp, n as u64);
        let family = c.restricted_family().unwrap();
        let conn = connected_part_of_family(n, &family).unwrap();
        let top = Partition::top(n).unwrap();
        let mut via_mu = OperatorMatrix::zeros(&sp);
        for b in enumerate_partitions(n).unwrap() {
            via_mu = via_mu.add(&family[&b].scale_re(mobius(&top, &b).unwrap() as f64)).unwrap();
        }
        assert!(conn.sub(&via_mu).unwrap().max_abs() <= 1e-13 * via_mu.max_abs());
        assert!(conn.sub(c.component(&top).unwrap()).unwrap().max_abs() <= 1e-13 * conn.max_abs().max(1.0));
    }
}

#[test]
fn mobius_round_trip_recovers_components() {
    let sp = space(3);
    for n in [3, 4] {
        let c = random_cluster(n, &sp, 17 + n as u64);
        let back = mobius_components(n, &sp, &c.restricted_family().unwrap()).unwrap();
        for (p, op) in c.components() {
            let diff = back.component(p).unwrap().sub(op).unwrap().max_abs();
            assert!(diff <= 1e-13 * c.total().unwrap().max_abs(), "{p}: {diff:e}");
        }
    }
}

#[test]
fn restriction_of_restriction_is_meet() {
    let sp = space(2);
    let n = 4;
    let c = random_cluster(n, &sp, 5);
    let parts = enumerate_partitions(n).unwrap();
    for a in &parts {
        // components of A_a are the [A]_b for b ⊆ a and zero otherwise
        let mut restricted = ClusterOperator::zeros(n, &sp).unwrap();
        for b in &parts {
            if b.refines(a).unwrap() {
                restricted.set(b.clone(), c.component(b).unwrap().clone()).unwrap();
            }
        }
        for b in &parts {
            let lhs = restricted.restrict(b).unwrap();
            let rhs = c.restrict(&a.meet(b).unwrap()).unwrap();
            assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-13 * rhs.max_abs().max(1.0), "{a} {b}");
        }
    }
}

#[test]
fn products_restrict_blockwise_on_commuting_families() {
    // components supported on disjoint diagonal blocks multiply blockwise,
    // so (AB)_a = A_a B_a when every restriction is block diagonal too
    let sp = space(6);
    let n = 3;
    let parts = enumerate_partitions(n).unwrap();
    let diag = |seed: u64| {
        let v: Vec<f64> = (0..6).map(|i| 1.0 + ((seed * 7 + i) % 5) as f64 * 0.3).collect();
        OperatorMatrix::multiplication(&sp, &v)
    };
    let mut a_comp = BTreeMap::new();
    let mut b_comp = BTreeMap::new();
    for (k, p) in parts.iter().enumerate() {
        a_comp.insert(p.clone(), diag(k as u64));
        b_comp.insert(p.clone(), diag(10 + k as u64));
    }
    let a = ClusterOperator::from_components(n, &sp, a_comp).unwrap();
    let b = ClusterOperator::from_components(n, &sp, b_comp).unwrap();
    let mut ab_family = BTreeMap::new();
    for p in &parts {
        ab_family.insert(p.clone(), a.restrict(p).unwrap().compose(&b.restrict(p).unwrap()).unwrap());
    }
    let ab = mobius_components(n, &sp, &ab_family).unwrap();
    for p in &parts {
        let lhs = ab.restrict(p).unwrap();
        assert!(lhs.sub(&ab_family[p]).unwrap().max_abs() <= 1e-12 * lhs.max_abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_holds_for_random_seeds(seed in 0u64..10_000, n in 2usize..=4) {
        let sp = space(2);
        let c = random_cluster(n, &sp, seed);
        let back = mobius_components(n, &sp, &c.restricted_family().unwrap()).unwrap();
        let scale = c.total().unwrap().max_abs();
        for (p, op) in c.components() {
            prop_assert!(back.component(p).unwrap().sub(op).unwrap().max_abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn coefficient_weighted_identity_sums_to_identity(n in 2usize..=6) {
        let s: i64 = enumerate_partitions(n).unwrap().iter().filter(|a| !a.is_top()).map(cluster_coefficient).sum();
        prop_assert_eq!(s, 1);
    }

    #[test]
    fn composition_is_associative(s1 in 0u64..500, s2 in 0u64..500, s3 in 0u64..500) {
        let sp = space(7);
        let (a, b, c) = (seeded_operator(&sp, s1), seeded_operator(&sp, s2), seeded_operator(&sp, s3));
        let l = a.compose(&b).unwrap().compose(&c).unwrap();
        let r = a.compose(&b.compose(&c).unwrap()).unwrap();
        prop_assert!(l.rel_norm_diff(&r).unwrap() <= 1e-12);
    }
}
