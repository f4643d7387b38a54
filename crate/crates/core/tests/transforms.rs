use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scattering_equivalence::cayley::{cayley_rank_one, three_body_components, GeneratorSpec};
use scattering_equivalence::grid::MomentumGrid;
use scattering_equivalence::operator::{OperatorMatrix, Space, StateVector, C64};
use scattering_equivalence::potential::{FormFactorSpec, Interaction, PotentialSpec};
use scattering_equivalence::scattering::TwoBodySystem;
use scattering_equivalence::three_body::{Pair, ThreeBodyGridSpec, ThreeBodyHamiltonian, ThreeBodySpace};
use scattering_equivalence::transforms::*;
use scattering_equivalence::Error;

fn random_hermitian(space: &Arc<Space>, rng: &mut ChaCha8Rng, scale: f64) -> OperatorMatrix {
    let n = space.dim();
    let m = DMatrix::<C64>::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let h = (&m + m.adjoint()) * C64::new(0.5 * scale, 0.0);
    OperatorMatrix::from_scaled(space, &h, false).unwrap().declare_hermitian().unwrap()
}

fn spectra_rel_diff(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    let (ea, eb) = (a.eigenvalues_hermitian().unwrap(), b.eigenvalues_hermitian().unwrap());
    let scale = ea.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    ea.iter().zip(&eb).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn two_body() -> TwoBodySystem {
    let grid = MomentumGrid::new(32, 1.0, 0).unwrap();
    TwoBodySystem::new(0.5, grid, Interaction::from_spec(PotentialSpec::malfliet_tjon_iii(), 0).unwrap()).unwrap()
}

fn vector_on(grid: &MomentumGrid, ff: FormFactorSpec) -> StateVector {
    let nodes = grid.nodes().to_vec();
    StateVector::from_fn(grid.space(), |i| ff.eval(nodes[i]))
}

struct ThreeBodySetup {
    space: ThreeBodySpace,
    ham: ThreeBodyHamiltonian,
    g: StateVector,
    chi: StateVector,
}

fn three_body_setup(seed: u64, with_v123: bool) -> ThreeBodySetup {
    let spec = ThreeBodyGridSpec { n_p: 6, n_q: 5, map_scale_p: 1.0, map_scale_q: 1.0, mu_p: 0.5, mu_q: 2.0 / 3.0 };
    let space = ThreeBodySpace::new(&spec, seed).unwrap();
    let vp = Interaction::from_spec(PotentialSpec::GaussianWell { strength: -3.0, range: 1.2 }, 0)
        .unwrap()
        .matrix(space.pair_grid())
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let v123 = with_v123.then(|| random_hermitian(space.space(), &mut rng, 0.2));
    let ham = ThreeBodyHamiltonian::new(&space, &vp, v123).unwrap();
    let width = rng.gen_range(0.6..1.5);
    let g = vector_on(space.pair_grid(), FormFactorSpec::gaussian(width));
    let g = g.scale(C64::new(1.0 / g.norm(), 0.0));
    let chi = space.product_vector(|p| (-p * p).exp(), |q| 1.0 / (1.0 + q * q));
    let chi = chi.scale(C64::new(1.0 / chi.norm(), 0.0));
    ThreeBodySetup { space, ham, g, chi }
}

fn generator(s: &ThreeBodySetup, lambdas: [f64; 3], connected: Option<f64>) -> GeneratorSpec {
    s.space.generator(lambdas, &s.g, connected.map(|l| (l, &s.chi))).unwrap()
}

#[test]
fn conjugation_by_identity_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sp = Space::new("s", (0..9).map(|i| 0.3 + 0.1 * i as f64).collect()).unwrap();
    let o = random_hermitian(&sp, &mut rng, 1.0);
    let out = conjugate(&o, &OperatorMatrix::identity(&sp)).unwrap();
    assert!(out.max_rel_diff(&o) <= 1e-15);
}

#[test]
fn non_unitary_conjugation_is_refused() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sp = Space::new("s", vec![1.0; 4]).unwrap();
    let o = random_hermitian(&sp, &mut rng, 1.0);
    let not_unitary = OperatorMatrix::identity(&sp).scale_re(1.1);
    assert!(matches!(conjugate(&o, &not_unitary), Err(Error::NotUnitary { .. })));
}

#[test]
fn rank_one_conjugation_matches_separable_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = MomentumGrid::new(20, 1.0, 0).unwrap();
    let o = random_hermitian(grid.space(), &mut rng, 1.0);
    let g = vector_on(&grid, FormFactorSpec::gaussian(1.1));
    for lambda in [-3.0, -0.4, 0.7, 5.0] {
        let r = cayley_rank_one(lambda, &g).unwrap();
        let direct = conjugate(&o, &r.operator()).unwrap().sub(&o).unwrap();
        let terms = rank_one_conjugation_terms(&o, r.f, &g).unwrap();
        assert!(direct.rel_norm_diff(&terms).unwrap() <= 1e-12, "λ = {lambda}");
    }
}

#[test]
fn conjugation_preserves_trace_spectrum_and_hermiticity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = MomentumGrid::new(24, 1.0, 0).unwrap();
    let o = random_hermitian(grid.space(), &mut rng, 1.0);
    let g = vector_on(&grid, FormFactorSpec::yamaguchi(0.9));
    let a = cayley_rank_one(1.7, &g).unwrap().operator();
    let out = conjugate(&o, &a).unwrap();
    assert!((out.trace() - o.trace()).norm() <= 1e-10 * o.trace().norm().max(1.0));
    assert!(spectra_rel_diff(&o, &out) <= 1e-9);
    assert!(out.is_hermitian());
}

#[test]
fn transformed_two_body_is_exact_conjugation() {
    let sys = two_body();
    let h = sys.hamiltonian().unwrap();
    for lambda in [0.0, -1.5, 0.8, 4.0] {
        let t = transformed_two_body(&sys, lambda, FormFactorSpec::gaussian(1.3)).unwrap();
        let vp = t.system.potential();
        assert!(vp.hermiticity_residual() <= 1e-12 * vp.max_abs());
        let conj = conjugate(&h, &t.equivalence).unwrap();
        let hp = t.system.hamiltonian().unwrap();
        assert!(hp.rel_norm_diff(&conj).unwrap() <= 1e-11, "λ = {lambda}");
        assert!(spectra_rel_diff(&h, &hp) <= 1e-9);
        let shift = vp.sub(sys.potential()).unwrap();
        if lambda == 0.0 {
            assert_eq!(shift.max_abs(), 0.0);
        } else {
            let sv = shift.singular_values();
            assert!(sv[2] <= 1e-10 * shift.norm(), "third singular value {:e}", sv[2]);
        }
    }
}

#[test]
fn decomposition_reassembles_conjugated_hamiltonian() {
    for seed in 0..3 {
        let s = three_body_setup(seed, seed % 2 == 1);
        let spec = generator(&s, [0.7, -1.1, 0.4], Some(0.9));
        let t = transform_three_body(&s.ham, &spec).unwrap();
        assert!(t.decomposition_residual().unwrap() <= 1e-11);
        assert!(t.kinetic().unwrap().max_rel_diff(&s.ham.kinetic) <= 1e-12);
        assert!(spectra_rel_diff(&t.original, &t.transformed) <= 1e-9);
    }
}

#[test]
fn pair_components_match_single_cluster_conjugation() {
    let s = three_body_setup(5, false);
    let spec = generator(&s, [0.5, 1.3, -0.8], Some(1.0));
    let t = transform_three_body(&s.ham, &spec).unwrap();
    let a = three_body_components(&spec).unwrap();
    for pair in Pair::ALL {
        let direct = transformed_pair_potential(&s.ham, &a, pair).unwrap();
        assert!(direct.rel_norm_diff(t.pair_potential(pair).unwrap()).unwrap() <= 1e-10, "{pair:?}");
    }
}

#[test]
fn expanded_three_body_interaction_matches_mobius_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 10..15 {
        let s = three_body_setup(seed, true);
        let lambdas = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let spec = generator(&s, lambdas, Some(rng.gen_range(-2.0..2.0)));
        let t = transform_three_body(&s.ham, &spec).unwrap();
        let expanded = induced_three_body(&s.ham, &three_body_components(&spec).unwrap()).unwrap();
        let d = expanded.rel_norm_diff(t.three_body_potential().unwrap()).unwrap();
        assert!(d <= 1e-9, "seed {seed}: {d:e}");
    }
}

#[test]
fn no_generators_and_no_three_body_force_gives_none() {
    let s = three_body_setup(6, false);
    let spec = GeneratorSpec::new(3, s.space.space());
    let t = transform_three_body(&s.ham, &spec).unwrap();
    assert!(t.three_body_potential().unwrap().max_abs() <= 1e-12 * s.ham.total().unwrap().max_abs());
    let expanded = induced_three_body(&s.ham, &three_body_components(&spec).unwrap()).unwrap();
    assert!(expanded.max_abs() <= 1e-12 * s.ham.total().unwrap().max_abs());
}

#[test]
fn pair_only_input_acquires_three_body_force() {
    let s = three_body_setup(7, false);
    let spec = generator(&s, [0.8, 0.8, 0.8], None);
    let t = transform_three_body(&s.ham, &spec).unwrap();
    let scale = s.ham.total().unwrap().norm();
    assert!(t.three_body_potential().unwrap().norm() > 1e-6 * scale);
}

#[test]
fn pair_interactions_ignore_connected_generator() {
    let s = three_body_setup(8, false);
    let spec = generator(&s, [0.6, -0.9, 1.2], Some(1.0));
    let check = two_body_independence_check(&s.ham, &spec, &[0.0, 0.5, 1.0, 2.0]).unwrap();
    assert!(check.independent, "drift {:e}", check.max_two_body_drift);
    assert!(check.three_body_variation > 1e-6);

    let empty = GeneratorSpec::new(3, s.space.space());
    let trivial = two_body_independence_check(&s.ham, &empty, &[0.0, 1.0]).unwrap();
    assert!(trivial.independent);
    assert_eq!(trivial.three_body_variation, 0.0);
}

#[test]
fn connected_second_transform_changes_only_three_body_part() {
    let s = three_body_setup(9, true);
    let first = transform_three_body(&s.ham, &generator(&s, [0.4, 0.9, -0.7], None)).unwrap();
    let once = ThreeBodyHamiltonian {
        kinetic: first.kinetic().unwrap().clone(),
        pairs: Pair::ALL.map(|p| first.pair_potential(p).unwrap().clone()),
        three_body: first.three_body_potential().unwrap().clone(),
    };
    let second = transform_three_body(&once, &generator(&s, [0.0; 3], Some(1.5))).unwrap();
    for p in Pair::ALL {
        assert!(second.pair_potential(p).unwrap().rel_norm_diff(once.pair(p)).unwrap() <= 1e-12);
    }
    assert!(second.three_body_potential().unwrap().rel_norm_diff(&once.three_body).unwrap() > 1e-6);
    assert!(spectra_rel_diff(&s.ham.total().unwrap(), &second.transformed) <= 1e-9);
}

#[test]
fn expansion_on_foreign_space_is_refused() {
    let s = three_body_setup(3, false);
    let spec = ThreeBodyGridSpec { n_p: 6, n_q: 4, map_scale_p: 1.0, map_scale_q: 1.0, mu_p: 0.5, mu_q: 2.0 / 3.0 };
    let other = ThreeBodySpace::new(&spec, 3).unwrap();
    let g = vector_on(other.pair_grid(), FormFactorSpec::gaussian(1.0));
    let foreign = three_body_components(&other.generator([0.5; 3], &g, None).unwrap()).unwrap();
    assert!(matches!(induced_three_body(&s.ham, &foreign), Err(Error::Embedding(_))));
}
