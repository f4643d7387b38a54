use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scattering_equivalence::grid::MomentumGrid;
use scattering_equivalence::operator::{OperatorMatrix, StateVector, C64};
use scattering_equivalence::potential::{FormFactorSpec, Interaction, PotentialSpec};
use scattering_equivalence::scattering::TwoBodySystem;
use scattering_equivalence::variational::*;
use scattering_equivalence::Error;

const MU: f64 = 0.5;

struct Setup {
    grid: MomentumGrid,
    v: OperatorMatrix,
    h: OperatorMatrix,
    g: StateVector,
    chi: StateVector,
}

fn setup(spec: PotentialSpec, n: usize, ff: FormFactorSpec, density: DensitySpec) -> Setup {
    let grid = MomentumGrid::new(n, 1.0, 0).unwrap();
    let sys = TwoBodySystem::new(MU, grid.clone(), Interaction::from_spec(spec, 0).unwrap()).unwrap();
    let ff = ff.normalized_on(&grid).unwrap();
    let nodes = grid.nodes().to_vec();
    let g = StateVector::from_fn(grid.space(), |i| ff.eval(nodes[i]));
    let chi = density.chi(&grid).unwrap();
    Setup { v: sys.potential().clone(), h: sys.hamiltonian().unwrap(), grid, g, chi }
}

fn separable_setup() -> Setup {
    let v = PotentialSpec::Separable { strength: -6.0, form_factor: FormFactorSpec::yamaguchi(1.0) };
    let ff = FormFactorSpec::ChirpedGaussian { width: 1.0, chirp: 2.0, scale: 1.0 };
    setup(v, 32, ff, DensitySpec::TanhProduct { alpha: 0.1, k0: 0.5 })
}

fn local_setup() -> Setup {
    let ff = FormFactorSpec::ChirpedGaussian { width: 1.0, chirp: 2.0, scale: 1.0 };
    setup(PotentialSpec::malfliet_tjon_iii(), 32, ff, DensitySpec::TanhProduct { alpha: 0.1, k0: 1.55 })
}

// Tr(ρX) = Σ_i d_i Σ_j ρ(i,j) d_j X(j,i) with X = V†V assembled by hand
fn naive_trace(v: &OperatorMatrix, rho: &OperatorMatrix) -> f64 {
    let d = v.space().measure();
    let n = d.len();
    let (ve, re) = (v.entries(), rho.entries());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let mut x = C64::new(0.0, 0.0);
            for l in 0..n {
                x += ve[(l, j)].conj() * d[l] * ve[(l, i)];
            }
            acc += d[i] * re[(i, j)] * d[j] * x;
        }
    }
    acc.re
}

#[test]
fn tanh_density_shape() {
    let alpha = 0.3;
    let spec = DensitySpec::TanhProduct { alpha, k0: 1.2 };
    assert!((spec.chi_at(0.0).re.powi(2) - alpha.tanh().powi(2)).abs() < 1e-15);
    assert!((spec.chi_at(1e3).re - 1.0).abs() < 1e-15);
    let grid = MomentumGrid::new(24, 1.0, 0).unwrap();
    let rho = density(&spec, &grid).unwrap();
    let e = rho.entries();
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            assert!(e[(i, j)].re > 0.0 && e[(i, j)].re <= 1.0 && e[(i, j)].im == 0.0);
            if j + 1 < grid.len() {
                assert!(e[(i, j + 1)].re >= e[(i, j)].re);
            }
        }
    }
    assert!(custom_density(rho).is_ok());
}

#[test]
fn invalid_density_parameters_are_rejected() {
    let grid = MomentumGrid::new(8, 1.0, 0).unwrap();
    assert!(matches!(DensitySpec::TanhProduct { alpha: 0.1, k0: 0.0 }.chi(&grid), Err(Error::Config(_))));
    assert!(matches!(DensitySpec::TanhProduct { alpha: -1.0, k0: 1.0 }.chi(&grid), Err(Error::Config(_))));
    let indefinite = OperatorMatrix::multiplication(grid.space(), &[1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    assert!(matches!(custom_density(indefinite), Err(Error::Config(_))));
}

#[test]
fn direct_functional_matches_hand_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let grid = MomentumGrid::new(12, 1.0, 0).unwrap();
    let n = grid.len();
    let vals = DMatrix::<C64>::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let v = OperatorMatrix::new(grid.space(), vals, false).unwrap();
    let rho = density(&DensitySpec::TanhProduct { alpha: 0.2, k0: 0.8 }, &grid).unwrap();
    let direct = functional_direct(&v, &rho).unwrap();
    let naive = naive_trace(&v, &rho);
    assert!((direct - naive).abs() <= 1e-12 * naive.abs());
    assert!(direct >= 0.0);

    assert_eq!(functional_direct(&OperatorMatrix::zeros(grid.space()), &rho).unwrap(), 0.0);

    let diag: Vec<f64> = grid.nodes().iter().map(|k| 1.0 / (1.0 + k)).collect();
    let dv = OperatorMatrix::multiplication(grid.space(), &diag);
    let id = OperatorMatrix::identity(grid.space());
    let expect: f64 =
        grid.space().measure().iter().enumerate().map(|(i, d)| d * d * dv.entries()[(i, i)].norm_sqr()).sum();
    assert!((functional_direct(&dv, &id).unwrap() - expect).abs() <= 1e-12 * expect);
}

#[test]
fn subtracted_functional_vanishes_at_zero() {
    for s in [separable_setup(), local_setup()] {
        assert_eq!(subtracted_functional(&s.v, &s.h, &s.g, &s.chi, 0.0).unwrap(), 0.0);
        assert_eq!(RationalForm::new(&s.v, &s.h, &s.g, &s.chi).unwrap().eval(0.0), 0.0);
    }
}

#[test]
fn subtracted_functional_is_difference_of_direct_values() {
    let s = separable_setup();
    let rho = OperatorMatrix::dyad(&s.chi, C64::new(1.0, 0.0), &s.chi).unwrap();
    let base = functional_direct(&s.v, &rho).unwrap();
    for lambda in [-4.0, -0.5, 0.3, 2.5] {
        let vp = s.v.add(&potential_shift(&s.h, &s.g, lambda).unwrap()).unwrap();
        let diff = functional_direct(&vp, &rho).unwrap() - base;
        let f = subtracted_functional(&s.v, &s.h, &s.g, &s.chi, lambda).unwrap();
        assert!((f - diff).abs() <= 1e-12 * base.max(diff.abs()), "λ = {lambda}: {f} vs {diff}");
    }
}

#[test]
fn rational_form_matches_direct_and_is_real() {
    for s in [separable_setup(), local_setup()] {
        let rf = RationalForm::new(&s.v, &s.h, &s.g, &s.chi).unwrap();
        for i in 0..50 {
            let lambda = -5.0 + 10.0 * i as f64 / 49.0;
            let direct = subtracted_functional(&s.v, &s.h, &s.g, &s.chi, lambda).unwrap();
            let z = rf.eval(lambda);
            if direct.abs() > 1e-14 {
                assert!((z - direct).abs() <= 1e-10 * direct.abs(), "λ = {lambda}");
            }
        }
        assert!(rf.conjugation_residual <= 1e-12, "{rf:?}");
    }
}

#[test]
fn rational_form_clears_to_a_polynomial() {
    // (1 + λ²n²)⁴ F(λ) has degree ≤ 8: a degree-8 interpolant through nine
    // Chebyshev nodes must reproduce it elsewhere
    let s = local_setup();
    let rf = RationalForm::new(&s.v, &s.h, &s.g, &s.chi).unwrap();
    let n = rf.norm_sqr;
    let p = |x: f64| (1.0 + x * x * n * n).powi(4) * rf.eval(x);
    let nodes: Vec<f64> = (0..9).map(|j| 3.0 * ((2 * j + 1) as f64 * std::f64::consts::PI / 18.0).cos()).collect();
    let values: Vec<f64> = nodes.iter().map(|x| p(*x)).collect();
    let scale = values.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let lagrange = |x: f64| -> f64 {
        let mut acc = 0.0;
        for (i, xi) in nodes.iter().enumerate() {
            let mut l = 1.0;
            for (j, xj) in nodes.iter().enumerate() {
                if i != j {
                    l *= (x - xj) / (xi - xj);
                }
            }
            acc += values[i] * l;
        }
        acc
    };
    for x in [-2.7, -1.3, -0.2, 0.9, 2.2] {
        assert!((lagrange(x) - p(x)).abs() <= 1e-9 * scale, "λ = {x}");
    }
}

#[test]
fn orthogonal_form_factor_gives_zero_functional() {
    let s = local_setup();
    let zero = StateVector::zeros(s.grid.space());
    let rf = RationalForm::new(&s.v, &s.h, &zero, &s.chi).unwrap();
    for lambda in [-2.0, 0.5, 3.0] {
        assert_eq!(rf.eval(lambda), 0.0);
    }
}

#[test]
fn quadratic_minimum() {
    let m = minimize(|x| (x - 2.0) * (x - 2.0), &SearchSpec::default()).unwrap();
    assert!((m.lambda - 2.0).abs() <= 1e-8);
    assert!(m.stationary && m.warnings.is_empty());
    assert!(m.value <= m.value_at_zero);
}

#[test]
fn symmetric_objective_keeps_zero() {
    let m = minimize(|x| x * x * (1.0 + 0.1 * x * x), &SearchSpec::default()).unwrap();
    assert!(m.lambda.abs() <= 1e-8);
    assert!(m.stationary);
}

#[test]
fn flat_objective_warns_and_returns_zero() {
    let m = minimize(|_| 3.0, &SearchSpec::default()).unwrap();
    assert_eq!(m.lambda, 0.0);
    assert!(m.warnings.iter().any(|w| w.contains("flat")));
}

#[test]
fn boundary_minimum_is_flagged() {
    let m = minimize(|x| -x, &SearchSpec::default()).unwrap();
    assert!(!m.stationary);
    assert!(m.warnings.iter().any(|w| w.contains("boundary")));
    assert!(m.value < m.value_at_zero);
}

#[test]
fn invalid_search_bracket_is_rejected() {
    let spec = SearchSpec { lower: 1.0, upper: -1.0, ..SearchSpec::default() };
    assert!(matches!(minimize(|x| x * x, &spec), Err(Error::Config(_))));
}

#[test]
fn trace_csv_is_sorted_by_lambda() {
    let m = minimize(|x| (x - 1.0).powi(2), &SearchSpec::default()).unwrap();
    let mut buf = Vec::new();
    m.write_trace_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,F"));
    let xs: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(xs.len(), m.evaluations);
    assert!(xs.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn coordinate_descent_finds_separable_minimum() {
    let f = |p: &[f64]| (p[0] - 1.0).powi(2) + 2.0 * (p[1] + 2.0).powi(2) + 0.3 * (p[0] - 1.0) * (p[1] + 2.0);
    let m = minimize_coordinates(f, &[0.0, 0.0], &SearchSpec::default(), 50).unwrap();
    assert!((m.parameters[0] - 1.0).abs() < 1e-5 && (m.parameters[1] + 2.0).abs() < 1e-5, "{:?}", m.parameters);
}

#[test]
fn softening_lowers_high_momentum_weight_for_separable_potential() {
    let s = separable_setup();
    let rf = RationalForm::new(&s.v, &s.h, &s.g, &s.chi).unwrap();
    let m = minimize(|l| rf.eval(l), &SearchSpec::default()).unwrap();
    assert!(m.derivative_at_zero.abs() > 1e-6);
    assert!(m.value < 0.0);
    let rho = OperatorMatrix::dyad(&s.chi, C64::new(1.0, 0.0), &s.chi).unwrap();
    let vp = s.v.add(&potential_shift(&s.h, &s.g, m.lambda).unwrap()).unwrap();
    assert!(functional_direct(&vp, &rho).unwrap() < functional_direct(&s.v, &rho).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn minimum_never_exceeds_value_at_zero(a in -8.0f64..8.0, b in 0.1f64..5.0, c in -3.0f64..3.0) {
        let m = minimize(|x| b * (x - a).powi(2) + c * (3.0 * x).sin(), &SearchSpec::default()).unwrap();
        prop_assert!(m.value <= m.value_at_zero);
    }
}
