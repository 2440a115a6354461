use nalgebra::DMatrix;
use proptest::prelude::*;
use resonance_lab::aniso::*;
use resonance_lab::map_model::{Polarization, Sign};
use resonance_lab::numerics::C64;

fn theta() -> Polarization {
    Polarization::standard().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_sums_to_one(r in 0.0f64..256.0, a in 0.0f64..std::f64::consts::TAU) {
        let th = theta();
        let xi = [r * a.cos(), r * a.sin()];
        let s: f64 = DyadicIndex::all(8).into_iter().map(|l| dyadic_partition_eval(&th, l, xi)).sum();
        prop_assert!((s - 1.0).abs() <= 1e-12, "sum {s} at {xi:?}");
    }

    #[test]
    fn tilde_is_one_on_support(r in 0.0f64..256.0, a in 0.0f64..std::f64::consts::TAU, n in 0u32..8, plus in any::<bool>()) {
        let th = theta();
        let xi = [r * a.cos(), r * a.sin()];
        let l = DyadicIndex::new(n, if plus { Sign::Plus } else { Sign::Minus });
        if dyadic_partition_eval(&th, l, xi) > 0.0 {
            prop_assert!((dyadic_partition_tilde(&th, l, xi) - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn masks_are_complementary(hp in -8i32..8, hm in -8i32..8) {
        let h = HExponents { h_plus: hp, h_minus: hm, sup_plus: 1.0, inf_minus: 1.0 };
        let b = LinkMask::linked(6, &h);
        let c = b.complement();
        for (rb, rc) in b.linked.iter().zip(&c.linked) {
            for (x, y) in rb.iter().zip(rc) {
                prop_assert!(x ^ y);
            }
        }
        prop_assert_eq!(b.count() + c.count(), b.labels.len() * b.labels.len());
    }

    #[test]
    fn triangular_mask_products_have_empty_diagonal(hs in proptest::collection::vec((-6i32..0, 1i32..6), 1..5)) {
        let masks: Vec<LinkMask> = hs
            .iter()
            .map(|&(hp, hm)| LinkMask::linked(7, &HExponents { h_plus: hp, h_minus: hm, sup_plus: 1.0, inf_minus: 1.0 }))
            .collect();
        prop_assert!(masks.iter().all(|m| m.strictly_lowers_key()));
        let rep = triangularity_product_check(&masks);
        prop_assert!(rep.pass && rep.diagonal_hits.is_empty());
    }

    #[test]
    fn kneading_identity_random(seed in 0u64..10_000, k in 4usize..16, zr in 0.01f64..0.3, za in 0.0f64..std::f64::consts::TAU) {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(k, k, |_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)) / k as f64);
        let mask: Vec<bool> = (0..k * k).map(|_| r.gen_bool(0.5)).collect();
        let mb = DMatrix::from_fn(k, k, |i, j| if mask[i * k + j] { m[(i, j)] } else { C64::new(0.0, 0.0) });
        let mc = &m - &mb;
        let rep = kneading_check(&mb, &mc, &[C64::from_polar(zr, za)]).unwrap();
        prop_assert!(rep.pass && rep.max_rel_err <= 1e-8, "{}", rep.max_rel_err);
    }
}

type Bump = ((f64, f64), (f64, f64), f64);

fn gaussian_sum(grid: BoxGrid, terms: Vec<([f64; 2], [f64; 2], f64)>) -> GridFn {
    GridFn::sample_real(grid, move |x| {
        terms
            .iter()
            .map(|(c, w, a)| a * (-((x[0] - c[0]) / w[0]).powi(2) - ((x[1] - c[1]) / w[1]).powi(2)).exp())
            .sum()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn young_inequality_holds(
        a in proptest::collection::vec(((-0.5f64..0.5, -0.5f64..0.5), (0.05f64..0.3, 0.05f64..0.3), -1.0f64..1.0), 1..3),
        u in proptest::collection::vec(((-0.8f64..0.8, -0.8f64..0.8), (0.1f64..0.4, 0.1f64..0.4), 0.2f64..1.0), 1..3),
    ) {
        let grid = BoxGrid::new(4.0, 64);
        let unpack = |v: Vec<Bump>| v.into_iter().map(|(c, w, s)| ([c.0, c.1], [w.0, w.1], s)).collect();
        let ga = gaussian_sum(grid, unpack(a));
        let gu = gaussian_sum(grid, unpack(u));
        let rep = young_check(&ga, &gu, &theta(), &LineSamples::default());
        prop_assert!(rep.pass, "{rep:?}");
    }
}
