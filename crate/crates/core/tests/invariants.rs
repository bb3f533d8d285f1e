mod common;

use common::*;
use heatlab_core::asymptotics::ProductFamily;
use heatlab_core::coefficients::CoefficientField;
use heatlab_core::fit::{extrapolate_limit, FitMethod};
use heatlab_core::grid::build_grid;
use heatlab_core::linalg::{BandedLu, CsrMatrix};
use heatlab_core::operator::{adjoint, discretize, h_transform, OperatorFamily, ScalarField};
use heatlab_core::semigroup::{
    dirichlet_heat_kernel, kernel_series, semigroup_identity_check, survival_mass, CrankNicolsonScheme,
    TimeLadder,
};
use heatlab_core::spectral::principal_eigenpair;
use nalgebra::DVector;
use proptest::prelude::*;

const STEP: f64 = 0.005;

/// The five model operators at property-test size.
fn models() -> Vec<(&'static str, Box<dyn OperatorFamily>)> {
    vec![
        ("laplacian_1d", Box::new(laplacian_1d(8.0, 0.1, &[2.0, 4.0, 8.0]))),
        ("laplacian_2d", Box::new(laplacian_2d(4.0, 0.25, &[1.0, 2.0, 4.0]))),
        ("ou_1d", Box::new(ou_1d(6.0, 0.1, &[2.0, 4.0, 6.0]))),
        ("drifted_bm_1d", Box::new(drifted_bm_1d(1.0, 8.0, 0.1, &[2.0, 4.0, 8.0]))),
        (
            "ou_1d x ou_1d",
            Box::new(ProductFamily::new(ou_1d(4.0, 0.25, &[1.0, 2.0, 4.0]), ou_1d(4.0, 0.25, &[1.0, 2.0, 4.0])).unwrap()),
        ),
    ]
}

/// A node of the innermost level picked by `seed`.
fn inner_node(family: &dyn OperatorFamily, seed: usize) -> Vec<f64> {
    let op = family.operator(0).unwrap();
    op.coordinates(seed % op.len())
}

fn times_up_to(t: f64) -> TimeLadder {
    let n = (t / STEP).round() as usize;
    let samples: Vec<f64> = (1..=4).map(|k| STEP * (k * n / 4).max(1) as f64).collect();
    TimeLadder::new(STEP, &samples).unwrap()
}

fn t_strategy() -> impl Strategy<Value = f64> {
    (4usize..=200).prop_map(|k| k as f64 * STEP)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn kernels_are_positive_and_increase_with_the_level(seed in 0usize..10_000, t in t_strategy()) {
        for (name, m) in models() {
            let y0 = inner_node(m.as_ref(), seed);
            let times = times_up_to(t);
            let mut prev: Option<(heatlab_core::operator::DiscreteOperator, Vec<Vec<f64>>)> = None;
            for level in 0..m.levels() {
                let op = m.operator(level).unwrap();
                let slice = dirichlet_heat_kernel(&op, &y0, &times).unwrap();
                prop_assert!(slice.min_value() >= -1e-10, "{name}: {}", slice.min_value());
                let fields: Vec<Vec<f64>> = slice.values.iter().map(|f| f.values.clone()).collect();
                if let Some((p, pf)) = &prev {
                    let emb = p.embedding_into(&op).unwrap();
                    for (small, big) in pf.iter().zip(&fields) {
                        for (i, &w) in emb.iter().enumerate() {
                            prop_assert!(small[i] <= big[w] + 1e-8, "{name}: level {level}");
                        }
                    }
                }
                prev = Some((op, fields));
            }
        }
    }

    #[test]
    fn survival_mass_is_sub_markov(seed in 0usize..10_000, t in t_strategy()) {
        for (name, m) in models() {
            let x0 = inner_node(m.as_ref(), seed);
            let top = m.operator(m.top()).unwrap();
            let mass = survival_mass(&top, &x0, &times_up_to(t)).unwrap();
            prop_assert!(mass.values.iter().all(|v| *v <= 1.0 + 1e-6), "{name}: {:?}", mass.values);
            prop_assert!(mass.values.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{name}");
        }
    }

    #[test]
    fn transposed_evolution_swaps_arguments(sx in 0usize..10_000, sy in 0usize..10_000, t in t_strategy()) {
        for (name, m) in models() {
            let (x, y) = (inner_node(m.as_ref(), sx), inner_node(m.as_ref(), sy));
            let op = m.operator(1).unwrap();
            let times = TimeLadder::new(STEP, &[t]).unwrap();
            let k = kernel_series(&op, &y, std::slice::from_ref(&x), &times).unwrap().values[0][0];
            let kt = kernel_series(&adjoint(&op), &x, std::slice::from_ref(&y), &times).unwrap().values[0][0];
            prop_assert!((k - kt).abs() <= 1e-8, "{name}: {k} vs {kt}");
        }
    }

    #[test]
    fn semigroup_identity_holds(seed in 0usize..10_000, t in t_strategy(), s in t_strategy()) {
        for (name, m) in models() {
            let y0 = inner_node(m.as_ref(), seed);
            let op = m.operator(1).unwrap();
            let cn = CrankNicolsonScheme { step: STEP };
            let defect = semigroup_identity_check(&cn, &op, &y0, STEP, t, s).unwrap();
            prop_assert!(defect <= 1e-3, "{name}: {defect}");
        }
    }

    #[test]
    fn linear_solves_match_dense(n in 3usize..40, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            let mut off = 0.0;
            for j in i.saturating_sub(2)..(i + 3).min(n) {
                if j != i {
                    let v = -rng.random::<f64>();
                    off += v.abs();
                    t.push((i, j, v));
                }
            }
            t.push((i, i, off + 0.1 + rng.random::<f64>()));
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        prop_assert!(a.is_z_matrix());
        let lu = BandedLu::factor(&a).unwrap();
        prop_assert!(lu.min_pivot() > 0.0);
        let rhs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let x = lu.solve(&rhs);
        let exact = dense(&a).lu().solve(&DVector::from_column_slice(&rhs)).unwrap();
        for (u, v) in x.iter().zip(exact.iter()) {
            prop_assert!((u - v).abs() <= 1e-10 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn power_laws_extrapolate_to_their_limit(l in -1.0f64..1.0, c in 0.1f64..2.0, p in 0.3f64..2.0) {
        let times: Vec<f64> = (0..6).map(|k| 2f64.powi(k)).collect();
        let values: Vec<f64> = times.iter().map(|t| l + c * t.powf(-p)).collect();
        let fit = extrapolate_limit(&times, &values);
        prop_assert_eq!(fit.method, FitMethod::PowerLaw);
        prop_assert!((fit.limit - l).abs() <= 1e-6, "{fit:?}");
        prop_assert!((fit.exponent.unwrap() - p).abs() <= 1e-4);
    }

    #[test]
    fn h_transform_is_a_similarity(a in 0.3f64..2.0, drift in -1.0f64..1.0, k in 0.0f64..1.0) {
        let (g, e) = build_grid(1, 1.2, 0.2, &[1.2]).unwrap();
        let coeffs = CoefficientField::from_fn(&g, |x| ([a + 0.2 * x[0] * x[0], 0.0, 1.0], [drift * x[0], 0.0], 0.0)).unwrap();
        let op = discretize(&coeffs, &e, 0).unwrap();
        let h = ScalarField::from_fn(&op, |x| (k * x[0]).exp() + 0.5);
        let t = h_transform(&op, &h).unwrap();
        prop_assert!((dense_principal_eigenvalue(t.matrix()) - dense_principal_eigenvalue(op.matrix())).abs() <= 1e-8);
        let back = h_transform(&t, &ScalarField { domain: h.domain, values: h.values.iter().map(|v| 1.0 / v).collect() }).unwrap();
        for i in 0..op.len() {
            for (j, v) in op.matrix().row(i) {
                prop_assert!((back.matrix().get(i, j) - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }
}

#[test]
fn ground_state_transforms_have_null_row_sums() {
    for (name, m) in models() {
        let top = m.operator(m.top()).unwrap();
        let pair = principal_eigenpair(&top).unwrap();
        let t = h_transform(&top, &pair.vector).unwrap();
        let worst = t.matrix().row_sums().iter().map(|r| (r - pair.lambda).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{name}: {worst}");
    }
}

#[test]
fn transpose_is_an_involution() {
    for (name, m) in models() {
        let op = m.operator(1).unwrap();
        assert_eq!(adjoint(&adjoint(&op)).matrix(), op.matrix(), "{name}");
        assert_eq!(op.matrix().transpose().transpose(), *op.matrix());
    }
}

#[test]
fn unit_h_transform_is_exact() {
    for (name, m) in models() {
        let op = m.operator(0).unwrap();
        let t = h_transform(&op, &ScalarField::constant(&op, 1.0)).unwrap();
        assert_eq!(t.matrix(), op.matrix(), "{name}");
    }
}

#[test]
fn quadratics_are_differentiated_exactly() {
    let m = laplacian_1d(4.0, 0.1, &[4.0]);
    let op = m.operator(0).unwrap();
    let u: Vec<f64> = (0..op.len()).map(|i| op.coordinates(i)[0].powi(2)).collect();
    let au = op.matrix().matvec(&u);
    for (i, v) in au.iter().enumerate().skip(1).take(op.len() - 2) {
        assert!((v + 2.0).abs() <= 1e-9, "node {i}: {v}");
    }
}

#[test]
fn tabulated_coefficients_reproduce_built_ins() {
    let (g, e) = build_grid(2, 1.0, 0.25, &[1.0]).unwrap();
    let builtin = CoefficientField::linear_drift(&g, 1.0).unwrap();
    let mut csv = String::from("x,y,a11,a12,a22,b1,b2,c\n");
    for k in 0..g.node_count() {
        let x = g.node_coordinates(k);
        csv.push_str(&format!("{},{},1,0,1,{},{},0\n", x[0], x[1], x[0], x[1]));
    }
    let tab = CoefficientField::from_csv_reader(&g, csv.as_bytes()).unwrap();
    assert_eq!(
        discretize(&tab, &e, 0).unwrap().matrix(),
        discretize(&builtin, &e, 0).unwrap().matrix()
    );
    let bad = csv.replacen(",1,0,1,", ",1,2,1,", 1);
    assert!(CoefficientField::from_csv_reader(&g, bad.as_bytes()).is_err());
}
