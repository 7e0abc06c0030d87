//! Randomized invariants of the datum objectives, the solvers and the
//! operator-scaling reduction.

use blgeo::datum::catalog::{hoelder, loomis_whitney, young_triple};
use blgeo::linalg::min_eigenvalue;
use blgeo::opscale::DEFAULT_DIM_CAP;
use blgeo::verify::{random_feasible_datum, random_spd};
use blgeo::{
    build_scaling_operator, capacity, extract_maximizer, f_objective, geodesic, geometric_mean,
    log_bl_objective, log_det, solve_fixed_point, solve_geodesic_ascent, BlDatum, GaussianTuple,
    SolverConfig, SpdMatrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A random feasible datum plus two SPD points in its ambient dimension.
fn datum_and_points() -> impl Strategy<Value = (BlDatum, SpdMatrix, SpdMatrix)> {
    (2usize..=4, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_feasible_datum(&mut rng, n);
        let x = random_spd(&mut rng, n, 1e3);
        let y = random_spd(&mut rng, n, 1e3);
        (d, x, y)
    })
}

fn slack_scale(values: &[f64]) -> f64 {
    1.0 + values.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn f_is_scale_invariant((d, x, _) in datum_and_points(), lambda in 1e-3f64..1e3) {
        let f = f_objective(&d, &x).unwrap();
        let fl = f_objective(&d, &x.scale(lambda).unwrap()).unwrap();
        prop_assert!((f - fl).abs() <= 1e-9 * slack_scale(&[f]));
    }

    #[test]
    fn f_is_midpoint_concave((d, x, y) in datum_and_points()) {
        let fx = f_objective(&d, &x).unwrap();
        let fy = f_objective(&d, &y).unwrap();
        let fm = f_objective(&d, &geometric_mean(&x, &y).unwrap()).unwrap();
        prop_assert!(fm >= 0.5 * (fx + fy) - 1e-9 * slack_scale(&[fx, fy]));
    }

    #[test]
    fn value_identity_links_both_objectives((d, x, _) in datum_and_points()) {
        // F(X) = 2 log BL(A) + [log det X + log det(sum p_j B_j^T A_j B_j)]
        // with A_j = (B_j X B_j^T)^{-1}.
        let a = extract_maximizer(&d, &x).unwrap();
        let agg = SpdMatrix::new(d.aggregate(&a).unwrap()).unwrap();
        let f = f_objective(&d, &x).unwrap();
        let rhs = 2.0 * log_bl_objective(&d, &a).unwrap() + log_det(&x).unwrap() + log_det(&agg).unwrap();
        prop_assert!((f - rhs).abs() <= 1e-9 * slack_scale(&[f, rhs]));
    }

    #[test]
    fn lieb_objective_is_jointly_log_concave(
        (d, _, _) in datum_and_points(),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = GaussianTuple::new((0..d.m()).map(|j| random_spd(&mut rng, d.codim(j), 1e3)).collect());
        let q = GaussianTuple::new((0..d.m()).map(|j| random_spd(&mut rng, d.codim(j), 1e3)).collect());
        let g = GaussianTuple::new(
            p.blocks.iter().zip(&q.blocks).map(|(a, b)| geometric_mean(a, b).unwrap()).collect(),
        );
        let lp = log_bl_objective(&d, &p).unwrap();
        let lq = log_bl_objective(&d, &q).unwrap();
        let lg = log_bl_objective(&d, &g).unwrap();
        prop_assert!(lg >= 0.5 * (lp + lq) - 1e-9 * slack_scale(&[lp, lq]));
    }

    #[test]
    fn f_along_geodesic_is_concave((d, x, y) in datum_and_points(), t in 0.05f64..0.95) {
        let fx = f_objective(&d, &x).unwrap();
        let fy = f_objective(&d, &y).unwrap();
        let ft = f_objective(&d, &geodesic(&x, &y, t).unwrap()).unwrap();
        prop_assert!(ft >= (1.0 - t) * fx + t * fy - 1e-9 * slack_scale(&[fx, fy]));
    }

    #[test]
    fn scaling_operator_image_of_identity_is_exact(n in 2usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_feasible_datum(&mut rng, n);
        let k = build_scaling_operator(&d, DEFAULT_DIM_CAP).unwrap();
        let image = k.apply(&DMatrix::identity(k.input_dim, k.input_dim)).unwrap();
        let mut expected = DMatrix::zeros(n, n);
        for (j, &c_j) in d.numerators().iter().enumerate() {
            expected += d.map(j).transpose() * d.map(j) * c_j as f64;
        }
        prop_assert!(image == expected, "T(I) differs from sum c_j B_j^T B_j");
        prop_assert_eq!(k.kraus.len() as u64, d.numerators().iter().sum::<u64>());
        prop_assert_eq!(k.input_dim, n * d.denominator() as usize);
    }

    #[test]
    fn scaling_operator_is_positive((d, _, _) in datum_and_points(), seed in any::<u64>()) {
        let k = build_scaling_operator(&d, DEFAULT_DIM_CAP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_spd(&mut rng, k.input_dim, 1e3);
        let tx = k.apply(x.as_matrix()).unwrap();
        prop_assert!(min_eigenvalue(&tx) > 0.0);
    }
}

fn simple_data() -> Vec<(&'static str, BlDatum)> {
    vec![
        ("hoelder", hoelder()),
        ("loomis-whitney", loomis_whitney()),
        ("young", young_triple()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solvers_agree_from_any_start(which in 0usize..3, seed in any::<u64>()) {
        let (name, d) = simple_data().swap_remove(which);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random_spd(&mut rng, d.n(), 1e2);
        let cfg = SolverConfig::default().with_x0(x0);
        let fp = solve_fixed_point(&d, &cfg).unwrap();
        let ga = solve_geodesic_ascent(&d, &cfg).unwrap();
        prop_assert!((fp.log_bl - ga.log_bl).abs() <= 1e-7, "{name}: {} vs {}", fp.log_bl, ga.log_bl);
        for r in [&fp, &ga] {
            prop_assert!(r.residual <= cfg.tol);
            prop_assert!((log_det(&r.optimizer_x).unwrap()).abs() <= 1e-9);
            let f = f_objective(&d, &r.optimizer_x).unwrap();
            prop_assert!((f - 2.0 * r.log_bl).abs() <= 1e-9);
        }
    }

    #[test]
    fn traces_are_monotone(which in 0usize..3, seed in any::<u64>()) {
        let (name, d) = simple_data().swap_remove(which);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SolverConfig::default().with_x0(random_spd(&mut rng, d.n(), 1e3));
        for r in [solve_fixed_point(&d, &cfg).unwrap(), solve_geodesic_ascent(&d, &cfg).unwrap()] {
            for w in r.trace.windows(2) {
                prop_assert!(w[1].f_value >= w[0].f_value - 1e-12, "{name} {:?}: {:?}", r.method, w);
            }
        }
    }

    #[test]
    fn doubling_the_start_does_not_move_the_optimizer(seed in any::<u64>()) {
        let d = young_triple();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random_spd(&mut rng, 2, 1e2);
        let a = solve_geodesic_ascent(&d, &SolverConfig::default().with_x0(x0.clone())).unwrap();
        let b = solve_geodesic_ascent(&d, &SolverConfig::default().with_x0(x0.scale(2.0).unwrap())).unwrap();
        prop_assert!((a.optimizer_x.as_matrix() - b.optimizer_x.as_matrix()).norm() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn three_methods_agree_on_random_data(n in 2usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_feasible_datum(&mut rng, n);
        let cfg = SolverConfig::default();
        let fp = solve_fixed_point(&d, &cfg).unwrap();
        let ga = solve_geodesic_ascent(&d, &cfg).unwrap();
        prop_assert!((fp.log_bl - ga.log_bl).abs() <= 1e-7, "{} vs {}", fp.log_bl, ga.log_bl);
        let k = build_scaling_operator(&d, 64).unwrap();
        let cap = capacity(&k, &SolverConfig::capacity_default()).unwrap();
        prop_assert!(cap.ds_residual <= 1e-8);
        let gap = (cap.log_cap + 2.0 * ga.log_bl).abs();
        prop_assert!(gap <= 1e-4 * (1.0 + ga.log_bl.abs()), "log_cap {} vs log_bl {}", cap.log_cap, ga.log_bl);
    }
}
