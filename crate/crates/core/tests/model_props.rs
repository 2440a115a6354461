use proptest::prelude::*;
use resonance_lab::collocation::{build_transfer_matrix, freq_index};
use resonance_lab::map_model::*;
use resonance_lab::numerics::C64;
use resonance_lab::periodic_orbits::{periodic_points, NewtonOptions};

fn rel_gap(a: &Mat2, b: &Mat2) -> f64 {
    (a - b).norm() / a.norm().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn cocycle_identity(x0 in 0.0f64..1.0, x1 in 0.0f64..1.0, m in 1usize..=6, k in 1usize..=6, eps in 0.0f64..0.05) {
        let sys = builtin_perturbed_cat(eps, 0).unwrap();
        let x = [x0, x1];
        let whole = sys.jacobian_cocycle(x, m + k).unwrap();
        let parts = sys.jacobian_cocycle(sys.iterate(x, m), k).unwrap() * sys.jacobian_cocycle(x, m).unwrap();
        prop_assert!(rel_gap(&whole, &parts) <= 1e-9);
    }

    #[test]
    fn lambda_is_submultiplicative(
        x0 in 0.0f64..1.0, x1 in 0.0f64..1.0, m in 1usize..=4, k in 1usize..=4,
        p in 0.0f64..2.0, q in -2.0f64..0.0, eps in 0.0f64..0.03,
    ) {
        let sys = builtin_perturbed_cat(eps, 0).unwrap();
        let sp = SplittingField::default();
        let x = [x0, x1];
        let whole = lambda_pqm(&sys, &sp, x, p, q, m + k).unwrap();
        let a = lambda_pqm(&sys, &sp, x, p, q, m).unwrap();
        let b = lambda_pqm(&sys, &sp, sys.iterate(x, m), p, q, k).unwrap();
        prop_assert!(whole <= a * b * (1.0 + 1e-9), "{whole} > {a}·{b}");
    }

    #[test]
    fn linear_exponents_do_not_depend_on_x(x0 in 0.0f64..1.0, x1 in 0.0f64..1.0, m in 1usize..=5) {
        let sys = builtin_cat_map();
        let sp = SplittingField::default();
        let (l, n) = hyperbolicity_exponents(&sys, &sp, [x0, x1], m).unwrap();
        let (l0, n0) = hyperbolicity_exponents(&sys, &sp, [0.0, 0.0], m).unwrap();
        prop_assert!((l - l0).abs() <= 1e-10 * l0.max(1.0) && (n - n0).abs() <= 1e-10 * n0.max(1.0));
    }

    #[test]
    fn floor_dominates_weight(x0 in 0.0f64..1.0, x1 in 0.0f64..1.0, c in proptest::array::uniform3(-1.0f64..1.0), n in 1u32..10_000) {
        let g = Weight::CosSum(c);
        let x = [x0, x1];
        prop_assert!(weight_floor(&g, n).eval(x) >= g.eval(x).abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn periodic_sets_are_closed_with_linear_counts(eps in 0.0f64..0.02, m in 1usize..=4) {
        let sys = builtin_perturbed_cat(eps, 0).unwrap();
        let set = periodic_points(&sys, m, &NewtonOptions::default()).unwrap();
        let a = CAT;
        let am = (0..m).fold(Mat2::identity(), |acc, _| {
            Mat2::new(a[0][0] as f64, a[0][1] as f64, a[1][0] as f64, a[1][1] as f64) * acc
        });
        let count = (am - Mat2::identity()).determinant().abs().round() as usize;
        prop_assert_eq!(set.points.len(), count);
        for p in &set.points {
            let y = sys.forward(p.x);
            prop_assert!(set.points.iter().any(|q| torus_dist(q.x, y) <= 1e-9));
        }
    }

    #[test]
    fn constant_is_fixed_and_scaling_is_entrywise(eps in 0.0f64..0.03, n in 2usize..6, c in 0.1f64..2.0) {
        let sys = builtin_perturbed_cat(eps, 0).unwrap();
        let tm = build_transfer_matrix(&sys, n, 4).unwrap();
        let k0 = freq_index(n, [0, 0]).unwrap();
        for (r, v) in tm.column(k0) {
            let want = if r == k0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            prop_assert!((v - want).norm() <= 1e-12);
        }
        let scaled = build_transfer_matrix(&sys.clone().with_weight(Weight::Constant(c)), n, 4).unwrap();
        for col in 0..tm.dim() {
            for (r, v) in tm.column(col) {
                let w = scaled.column(col).find(|e| e.0 == r).map(|e| e.1).unwrap_or_default();
                // entries under the drop threshold may vanish on one side only
                prop_assert!((w - c * v).norm() <= 1e-14 * c.max(1.0) + 1e-12 * v.norm());
            }
        }
    }
}
