use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use rand::Rng;

use super::*;
use crate::map_model::{builtin_cat_map, builtin_chart_model, Bump, Weight};
use crate::numerics::{rng, C64};

fn theta() -> Polarization {
    Polarization::standard().unwrap()
}

fn chart(eps: f64) -> (crate::map_model::MapSystem, Polarization, Polarization) {
    builtin_chart_model(eps).unwrap()
}

fn plus(n: u32) -> DyadicIndex {
    DyadicIndex::new(n, Sign::Plus)
}

fn minus(n: u32) -> DyadicIndex {
    DyadicIndex::new(n, Sign::Minus)
}

fn gauss(w: f64) -> impl Fn([f64; 2]) -> f64 + Sync + Send {
    move |x| (-(x[0] * x[0] + x[1] * x[1]) / (w * w)).exp()
}

#[test]
fn mollifier_values() {
    assert_eq!(mollifier_chi(0.5), 1.0);
    assert_eq!(mollifier_chi(1.0), 1.0);
    assert!((mollifier_chi(1.5) - 0.5).abs() < 1e-15);
    assert_eq!(mollifier_chi(2.0), 0.0);
    assert_eq!(mollifier_chi(3.0), 0.0);
    assert!((chi_n(3, 12.0) - 0.5).abs() < 1e-15);
    // monotone on the transition
    let v: Vec<f64> = (0..=100).map(|k| mollifier_chi(1.0 + k as f64 / 100.0)).collect();
    assert!(v.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn partition_at_origin() {
    let th = theta();
    assert_eq!(dyadic_partition_eval(&th, plus(0), [0.0, 0.0]), 0.5);
    assert_eq!(dyadic_partition_eval(&th, minus(0), [0.0, 0.0]), 0.5);
    for n in 1..6 {
        assert_eq!(dyadic_partition_eval(&th, plus(n), [0.0, 0.0]), 0.0);
        assert_eq!(dyadic_partition_eval(&th, minus(n), [0.0, 0.0]), 0.0);
    }
}

#[test]
fn partition_of_unity() {
    let d = partition_defect(&theta(), 8, 257);
    assert!(d <= 1e-12, "defect {d}");
}

#[test]
fn tilde_is_one_on_support() {
    let th = theta();
    let mut r = rng(11);
    let mut hits = 0;
    for _ in 0..20000 {
        let rad = 2f64.powf(r.gen_range(-1.0..7.0));
        let a = r.gen_range(0.0..2.0 * PI);
        let xi = [rad * a.cos(), rad * a.sin()];
        for label in DyadicIndex::all(6) {
            if dyadic_partition_eval(&th, label, xi) > 0.0 {
                hits += 1;
                let t = dyadic_partition_tilde(&th, label, xi);
                assert!((t - 1.0).abs() <= 1e-12, "{label:?} at {xi:?}: {t}");
            }
        }
    }
    assert!(hits > 20000);
}

#[test]
fn dyadic_scaling() {
    let th = theta();
    let mut r = rng(3);
    for n in [3u32, 5] {
        for _ in 0..500 {
            let xi = [r.gen_range(-4.0..4.0), r.gen_range(-4.0..4.0)];
            let s = 2f64.powi(n as i32 - 1);
            for sigma in [Sign::Plus, Sign::Minus] {
                let a = dyadic_partition_eval(&th, DyadicIndex::new(n, sigma), [s * xi[0], s * xi[1]]);
                let b = dyadic_partition_eval(&th, DyadicIndex::new(1, sigma), xi);
                assert!((a - b).abs() <= 1e-14);
            }
        }
    }
}

#[test]
fn plane_wave_projection() {
    let th = theta();
    let grid = BoxGrid::new(4.0, 128);
    let step = grid.freq_step();
    for k in [[3i64, 1], [-7, 4], [10, -2], [1, 12], [0, 0], [-20, -9]] {
        let xi = [k[0] as f64 * step, k[1] as f64 * step];
        let u = GridFn::sample(grid, |x| C64::from_polar(1.0, xi[0] * x[0] + xi[1] * x[1]));
        let mut total = GridFn::zeros(grid);
        for label in DyadicIndex::all(7) {
            let b = band_project_periodic(&u, &th, label);
            let expect = u.scaled(C64::new(dyadic_partition_eval(&th, label, xi), 0.0));
            assert!(b.samples.max_diff(&expect) <= 1e-10, "{label:?} {k:?}");
            total = total.add(&b.samples);
        }
        assert!(total.max_diff(&u) <= 1e-10);
    }
}

#[test]
fn bands_sum_to_input() {
    let th = theta();
    let grid = BoxGrid::new(4.0, 128);
    let u = GridFn::sample_real(grid, |x| gauss(0.5)(x) * (1.0 + x[0] - 0.3 * x[1] * x[1]));
    let sp = Spectral::new(grid.n);
    let mut total = GridFn::zeros(grid);
    for label in DyadicIndex::all(7) {
        let b = band_project(&u, &th, label).unwrap();
        assert!(b.outside_mass(&sp) <= 1e-20);
        total = total.add(&b.samples);
    }
    assert!(total.max_diff(&u) <= 1e-12 * u.max_abs());
}

#[test]
fn band_projection_needs_margin() {
    let grid = BoxGrid::new(4.0, 64);
    let u = GridFn::sample_real(grid, gauss(3.0));
    assert!(matches!(band_project(&u, &theta(), plus(2)), Err(AnisoError::SupportMarginViolated { .. })));
}

#[test]
fn mixed_norm_of_gaussian() {
    let grid = BoxGrid::new(4.0, 256);
    let u = GridFn::sample_real(grid, gauss(1.0));
    let lines = LineSamples::default();
    for th in [theta(), Polarization::rotated(PI / 2.0).unwrap()] {
        let v = mixed_norm_l1f(&u, &th, &lines);
        assert!((v - PI.sqrt()).abs() <= 1e-6, "{v}");
    }
    // an anisotropic Gaussian along horizontal lines
    let th = Polarization::rotated(PI / 2.0).unwrap();
    let w = GridFn::sample_real(grid, |x| (-(x[0] / 0.7).powi(2) - (x[1] / 0.3).powi(2)).exp());
    let v = mixed_norm_l1f(&w, &th, &LineSamples { n_dir: 1, n_off: 129 });
    assert!((v - 0.7 * PI.sqrt()).abs() <= 1e-6, "{v}");
}

#[test]
fn mixed_norm_zero_and_homogeneous() {
    let th = theta();
    let grid = BoxGrid::new(4.0, 128);
    let lines = LineSamples::default();
    assert_eq!(mixed_norm_l1f(&GridFn::zeros(grid), &th, &lines), 0.0);
    let u = GridFn::sample_real(grid, |x| gauss(0.4)([x[0] - 0.3, x[1] + 0.2]) - 0.5 * gauss(0.2)(x));
    let a = mixed_norm_l1f(&u, &th, &lines);
    let b = mixed_norm_l1f(&u.scaled(C64::new(0.0, -3.0)), &th, &lines);
    assert!((b - 3.0 * a).abs() <= 1e-12 * b);
}

#[test]
fn young_examples() {
    let th = theta();
    let grid = BoxGrid::new(4.0, 128);
    let lines = LineSamples::default();
    let u = GridFn::sample_real(grid, |x| (-(x[0] / 0.6).powi(2) - (x[1] / 0.2).powi(2)).exp());
    let a = GridFn::sample_real(grid, |x| gauss(0.3)([x[0] - 0.2, x[1]]));
    let rep = young_check(&a, &u, &th, &lines);
    assert!(rep.pass, "{rep:?}");
    assert!(rep.lhs > 0.0);

    // a normalized near-delta kernel leaves a wide u almost unchanged
    let fine = BoxGrid::new(4.0, 256);
    let wide = GridFn::sample_real(fine, |x| (-(x[0] / 1.0).powi(2) - (x[1] / 0.8).powi(2)).exp());
    let d = GridFn::sample_real(fine, gauss(1.5 * fine.h()));
    let d = d.scaled(C64::new(1.0 / d.l1(), 0.0));
    let rep = young_check(&d, &wide, &th, &lines);
    assert!(rep.pass);
    assert!((rep.lhs - rep.rhs).abs() <= 1e-2 * rep.rhs, "{rep:?}");

    // width 0.01 is below the grid step: a discrete delta of mass 1
    let d = GridFn::sample_real(grid, gauss(0.01));
    let d = d.scaled(C64::new(1.0 / d.l1(), 0.0));
    let rep = young_check(&d, &u, &th, &lines);
    assert!(rep.pass && rep.lhs / rep.rhs >= 0.95, "{rep:?}");

    let rep = young_check(&GridFn::zeros(grid), &u, &th, &lines);
    assert!(rep.pass && rep.lhs == 0.0 && rep.rhs == 0.0);
}

#[test]
fn convolution_of_gaussians() {
    // e^{−|x|²/a²} * e^{−|x|²/b²} = π a²b²/(a²+b²) · e^{−|x|²/(a²+b²)}
    let grid = BoxGrid::new(4.0, 128);
    let (a, b) = (0.3f64, 0.4f64);
    let c = convolve(&GridFn::sample_real(grid, gauss(a)), &GridFn::sample_real(grid, gauss(b)));
    let s = a * a + b * b;
    let expect = GridFn::sample_real(grid, |x| PI * a * a * b * b / s * gauss(s.sqrt())(x));
    assert!(c.max_diff(&expect) <= 1e-12);
}

#[test]
fn random_young_trials_pass() {
    let s = young_trials(&theta(), 12, 5);
    assert_eq!(s.passed, s.trials, "{s:?}");
    assert!(s.worst_ratio <= 1.0 + 1e-6);
}

#[test]
fn h_exponents_linear_chart() {
    let (sys, th, tho) = chart(0.0);
    let h = h_exponents(&sys, &th, &tho, 720).unwrap();
    let t = (50f64.to_radians().tan() / 4.0).atan();
    let sup = (t.cos().powi(2) / 4.0 + 4.0 * t.sin().powi(2)).sqrt();
    let a = 40f64.to_radians();
    let inf = (a.cos().powi(2) / 4.0 + 4.0 * a.sin().powi(2)).sqrt();
    assert!((h.sup_plus - sup).abs() <= 1e-6, "{} vs {sup}", h.sup_plus);
    assert!((h.inf_minus - inf).abs() <= 1e-6, "{} vs {inf}", h.inf_minus);
    assert_eq!((h.h_plus, h.h_minus), (5, -6));
    assert!(!h.is_triangular());
}

#[test]
fn h_exponents_shift_with_iterates() {
    let (sys, th, tho) = chart(0.0);
    for m in 1..=12usize {
        let h = h_exponents(&sys.chart_iterate(m).unwrap(), &th, &tho, 720).unwrap();
        assert_eq!((h.h_plus, h.h_minus), (6 - m as i32, m as i32 - 7), "m = {m}");
        assert_eq!(h.is_triangular(), m >= 8);
    }
}

#[test]
fn h_exponents_perturbed_iterate() {
    let (sys, th, tho) = chart(0.02);
    let h = h_exponents(&sys.chart_iterate(10).unwrap(), &th, &tho, 720).unwrap();
    assert!(h.is_triangular(), "{h:?}");
}

#[test]
fn hook_examples() {
    let (hp, hm) = (-4, 3);
    assert!(hook(plus(5), plus(1), hp, hm));
    assert!(!hook(plus(5), plus(2), hp, hm));
    assert!(hook(minus(2), minus(5), hp, hm));
    assert!(!hook(minus(2), minus(4), hp, hm));
    assert!(hook(plus(0), minus(3), hp, hm));
    assert!(hook(plus(4), minus(0), hp, hm));
    assert!(!hook(plus(3), minus(2), hp, hm));
    for l in 0..10 {
        for n in 0..10 {
            assert!(!hook(minus(l), plus(n), 100, -100));
        }
    }
}

#[test]
fn hook_literal_cases() {
    assert!(hook(plus(10), plus(6), -4, 5));
    assert!(!hook(minus(3), minus(7), -4, 5));
    assert!(hook(plus(2), minus(6), -4, 5));
}

#[test]
fn hook_matches_brute_force() {
    // independent restatement of the three linkage cases
    let brute = |l: i32, t: i8, n: i32, s: i8, hp: i32, hm: i32| -> bool {
        if t > 0 && s > 0 {
            return n <= l + hp;
        }
        if t < 0 && s < 0 {
            return l + hm <= n;
        }
        if t > 0 && s < 0 {
            return n >= hm || l >= -hp;
        }
        false
    };
    for hp in -8..=8 {
        for hm in -8..=8 {
            let h = HExponents { h_plus: hp, h_minus: hm, sup_plus: 1.0, inf_minus: 1.0 };
            let mask = LinkMask::linked(6, &h);
            for i in DyadicIndex::all(6) {
                for o in DyadicIndex::all(6) {
                    let b = brute(i.n as i32, i.sigma.value() as i8, o.n as i32, o.sigma.value() as i8, hp, hm);
                    assert_eq!(mask.get(i, o), b, "{i:?} -> {o:?} at ({hp}, {hm})");
                }
            }
        }
    }
}

#[test]
fn huge_h_plus_leaves_only_minus_to_plus_unlinked() {
    let h = HExponents { h_plus: 100, h_minus: -100, sup_plus: 1.0, inf_minus: 1.0 };
    let mc = LinkMask::linked(6, &h).complement();
    for i in DyadicIndex::all(6) {
        for o in DyadicIndex::all(6) {
            assert_eq!(mc.get(i, o), i.sigma == Sign::Minus && o.sigma == Sign::Plus);
        }
    }
}

#[test]
fn hook_table_lowers_key() {
    for hp in -6..=6 {
        for hm in -6..=6 {
            let h = HExponents { h_plus: hp, h_minus: hm, sup_plus: 1.0, inf_minus: 1.0 };
            let mask = LinkMask::linked(8, &h);
            if h.is_triangular() {
                assert!(mask.strictly_lowers_key(), "({hp}, {hm})");
                assert!(mask.diagonal().is_empty());
            } else {
                // some diagonal block is linked
                assert!(!mask.diagonal().is_empty(), "({hp}, {hm})");
            }
        }
    }
}

#[test]
fn mask_products() {
    let (sys, th, tho) = chart(0.0);
    let masks: Vec<LinkMask> = [10usize, 12, 10]
        .iter()
        .map(|&m| LinkMask::linked(8, &h_exponents(&sys.chart_iterate(m).unwrap(), &th, &tho, 720).unwrap()))
        .collect();
    let rep = triangularity_product_check(&masks);
    assert!(rep.pass && rep.factors == 3);

    let base = LinkMask::linked(8, &h_exponents(&sys, &th, &tho, 720).unwrap());
    let rep = triangularity_product_check(&[base.clone(), base.clone(), base]);
    assert!(!rep.pass && !rep.diagonal_hits.is_empty());

    let all = LinkMask::from_fn(4, |_, _| true);
    assert_eq!(all.count(), 100);
    assert_eq!(all.compose(&all), all);
    assert_eq!(all.complement().count(), 0);
}

fn block_op(n_max: u32, n: usize) -> BlockOperator {
    let (sys, th, tho) = chart(0.0);
    assemble_blocks(&sys, &th, &tho, n_max, BoxGrid::new(4.0, n)).unwrap()
}

#[test]
fn blocks_reject_bad_input() {
    let (sys, th, tho) = chart(0.0);
    assert!(matches!(
        assemble_blocks(&sys, &th, &tho, 5, BoxGrid::new(4.0, 128)),
        Err(AnisoError::GridTooCoarse { .. })
    ));
    assert!(matches!(
        assemble_blocks(&sys, &th, &tho, 10, BoxGrid::new(4.0, 4096)),
        Err(AnisoError::InvalidParameter(_))
    ));
    assert!(assemble_blocks(&builtin_cat_map(), &th, &tho, 3, BoxGrid::new(4.0, 128)).is_err());
}

#[test]
fn blocks_linear_and_columns_sum() {
    let b = block_op(4, 256);
    let g = b.grid;
    let u = GridFn::sample_real(g, |x| gauss(0.5)([x[0] - 0.2, x[1]]));
    let v = GridFn::sample_real(g, |x| x[1] * gauss(0.3)(x));
    let (a, c) = (C64::new(2.0, -1.0), C64::new(-0.5, 0.25));
    let w = u.scaled(a).add(&v.scaled(c));
    for (i, o) in [(plus(2), plus(3)), (minus(1), minus(4)), (plus(3), minus(0))] {
        let lhs = b.apply(i, o, &w).unwrap();
        let rhs = b.apply(i, o, &u).unwrap().scaled(a).add(&b.apply(i, o, &v).unwrap().scaled(c));
        assert!(lhs.max_diff(&rhs) <= 1e-12);
    }
    for input in [plus(1), minus(3)] {
        let mut total = GridFn::zeros(g);
        for (_, piece) in b.apply_column(input, &u).unwrap() {
            total = total.add(&piece);
        }
        let expect = b.column_total(input, &u).unwrap();
        assert!(total.max_diff(&expect) <= 1e-12);
    }
}

#[test]
fn blocks_vanish_for_zero_weight() {
    let (sys, th, tho) = chart(0.0);
    let sys = sys.with_weight(Weight::Bump(Bump { height: 0.0, ..crate::map_model::CHART_G }));
    let b = assemble_blocks(&sys, &th, &tho, 3, BoxGrid::new(4.0, 128)).unwrap();
    let u = GridFn::sample_real(b.grid, gauss(0.5));
    assert_eq!(b.apply(plus(2), minus(2), &u).unwrap().max_abs(), 0.0);
    let lat = Lattice::sample(&th, 3, 2, 4.0, 1);
    assert!(b.lattice_matrix(&lat).unwrap().iter().all(|z| z.norm() == 0.0));
}

#[test]
fn lattice_symbol_matches_direct_sum() {
    // L̂(η, ξ) for the linear chart equals Ĝ(η − DT^tr ξ) with DT = diag(1/2, 2)
    let (sys, _, _) = chart(0.0);
    let q = Quadrature::new(&sys, 40.0).unwrap();
    let fine = Quadrature::new(&sys, 400.0).unwrap();
    for (eta, xi) in [([1.0, 2.0], [2.0, 1.0]), ([5.0, -3.0], [0.0, 4.0])] {
        let a = q.symbol(eta, xi);
        let b = fine.symbol(eta, xi);
        let shifted = fine.symbol([eta[0] - 0.5 * xi[0], eta[1] - 2.0 * xi[1]], [0.0, 0.0]);
        assert!((a - b).norm() <= 1e-12);
        assert!((b - shifted).norm() <= 1e-12);
    }
}

#[test]
fn lattice_sampling() {
    let th = theta();
    let lat = Lattice::sample(&th, 5, 3, 4.0, 9);
    assert_eq!(lat.len(), 12 * 3);
    for s in &lat.sites {
        assert!(dyadic_partition_eval(&th, s.label, s.xi) >= 0.25);
    }
    assert_eq!(lat, Lattice::sample(&th, 5, 3, 4.0, 9));
}

#[test]
fn trace_vanishes_for_zero_weight() {
    let (sys, th, _) = chart(0.0);
    let sys = sys.with_weight(Weight::Bump(Bump { height: 0.0, ..crate::map_model::CHART_G }));
    let data = TraceData::new(&sys, BoxGrid::new(4.0, 256)).unwrap();
    assert!(data.block_traces(&th, 5).unwrap().iter().all(|r| r.value == 0.0));
    assert_eq!(fixed_point_sum(&sys).unwrap(), 0.0);
}

#[test]
fn trace_converges_to_fixed_point_sum() {
    let (sys, th, _) = chart(0.0);
    let data = TraceData::new(&sys, TRACE_GRID).unwrap();
    let rows = data.block_traces(&th, 8).unwrap();
    let sums = partial_trace_sums(&rows, 8);
    let target = fixed_point_sum(&sys).unwrap();
    assert!((target - 2.0).abs() <= 1e-12);
    assert!((sums[8] - target).abs() <= 1e-3, "{sums:?}");
    assert!((sums[8] - data.chi_trace(8).unwrap()).abs() <= 1e-8);
    // the partial sums telescope: each is the χ_k trace
    for k in [2u32, 5] {
        assert!((sums[k as usize] - data.chi_trace(k).unwrap()).abs() <= 1e-8);
    }
}

#[test]
fn trace_without_fixed_point() {
    let (sys, th, _) = chart(0.0);
    let sys = sys.with_weight(Weight::Bump(Bump { center: [1.2, 0.0], radius: 0.8, height: 1.0 }));
    assert_eq!(fixed_point_sum(&sys).unwrap(), 0.0);
    let data = TraceData::new(&sys, TRACE_GRID).unwrap();
    let sums = partial_trace_sums(&data.block_traces(&th, 8).unwrap(), 8);
    assert!(sums[8].abs() <= 1e-3, "{sums:?}");
}

#[test]
fn trace_needs_resolution() {
    let (sys, th, _) = chart(0.0);
    let data = TraceData::new(&sys, BoxGrid::new(4.0, 64)).unwrap();
    assert!(matches!(data.block_traces(&th, 6), Err(AnisoError::GridTooCoarse { .. })));
}

fn random_matrix(k: usize, scale: f64, seed: u64) -> DMatrix<C64> {
    let mut r = rng(seed);
    DMatrix::from_fn(k, k, |_, _| C64::new(r.gen_range(-scale..scale), r.gen_range(-scale..scale)))
}

#[test]
fn kneading_at_zero() {
    let mb = random_matrix(6, 1.0, 1);
    let mc = random_matrix(6, 1.0, 2);
    let rep = kneading_check(&mb, &mc, &[C64::new(0.0, 0.0)]).unwrap();
    assert_eq!(rep.rows[0].lhs, [1.0, 0.0]);
    assert_eq!(rep.rows[0].rhs, [1.0, 0.0]);
}

#[test]
fn kneading_nilpotent_linked_part() {
    let k = 30;
    let mb = random_matrix(k, 1.0, 3);
    let mb = DMatrix::from_fn(k, k, |r, c| if r > c { mb[(r, c)] } else { C64::new(0.0, 0.0) });
    let mc = random_matrix(k, 0.5, 4);
    let zs: Vec<C64> = (0..8).map(|j| C64::from_polar(0.1, PI * j as f64 / 4.0)).collect();
    let rep = kneading_check(&mb, &mc, &zs).unwrap();
    for row in &rep.rows {
        assert!((row.det_b[0] - 1.0).abs() <= 1e-12 && row.det_b[1].abs() <= 1e-12);
    }
    assert!(rep.pass && rep.max_rel_err <= 1e-10, "{}", rep.max_rel_err);
}

#[test]
fn kneading_random_dense() {
    let mb = random_matrix(40, 0.2, 5);
    let mc = random_matrix(40, 0.2, 6);
    let zs: Vec<C64> = (0..8).map(|j| C64::from_polar(0.1, 0.3 + PI * j as f64 / 4.0)).collect();
    let rep = kneading_check(&mb, &mc, &zs).unwrap();
    assert!(rep.pass, "{}", rep.max_rel_err);
}

#[test]
fn kneading_singular_resolvent() {
    let mb = DMatrix::<C64>::identity(5, 5).map(|v| v * 10.0);
    let mc = random_matrix(5, 1.0, 7);
    let r = kneading_check(&mb, &mc, &[C64::new(0.1, 0.0)]);
    assert!(matches!(r, Err(AnisoError::SingularResolvent { .. })));
}

#[test]
fn kneading_on_lattice_matrix() {
    let (sys, th, tho) = chart(0.0);
    let lat = Lattice::sample(&th, 4, 2, 4.0, 3);
    let m = lattice_matrix(&sys, &th, &tho, &lat).unwrap();
    let h = h_exponents(&sys, &th, &tho, 720).unwrap();
    let split = LinkSplit::new(&m, &lat, &LinkMask::linked(4, &h));
    assert_eq!(split.defect(&m), 0.0);
    let zs: Vec<C64> = (0..8).map(|j| C64::from_polar(0.1, PI * (j as f64 + 0.25) / 4.0)).collect();
    assert!(kneading_check(&split.mb, &split.mc, &zs).unwrap().pass);

    // with an iterate's pattern M_b is strictly triangular in σ·n
    let hi = h_exponents(&sys.chart_iterate(10).unwrap(), &th, &tho, 720).unwrap();
    let split = LinkSplit::new(&m, &lat, &LinkMask::linked(4, &hi));
    let rep = kneading_check(&split.mb, &split.mc, &zs).unwrap();
    for row in &rep.rows {
        assert!((row.det_b[0] - 1.0).abs() <= 1e-12 && row.det_b[1].abs() <= 1e-12);
    }
    assert!(rep.pass);
}

#[test]
fn approx_proxy_examples() {
    let k = 12;
    let labels = vec![plus(0); k];
    let u: Vec<f64> = (0..k).map(|i| 1.0 + i as f64).collect();
    let rank1 = DMatrix::from_fn(k, k, |r, c| C64::new(u[r] * u[c], 0.0));
    let rep = approx_number_proxy(&rank1, &labels, 1.0, -1.0, (1, k));
    let norm2: f64 = u.iter().map(|v| v * v).sum();
    assert!((rep.singular[0] - norm2).abs() <= 1e-10 * norm2);
    assert!(rep.singular[1..].iter().all(|s| *s <= 1e-12 * norm2));

    let diag = DMatrix::from_fn(k, k, |r, c| if r == c { C64::new(0.5f64.powi(r as i32), 0.0) } else { C64::new(0.0, 0.0) });
    let rep = approx_number_proxy(&diag, &labels, 1.0, -1.0, (1, k));
    assert!((rep.rate + 2f64.ln()).abs() <= 1e-9, "{}", rep.rate);

    // the weights conjugate: a diagonal is unchanged whatever the labels
    let mixed: Vec<DyadicIndex> = (0..k).map(|i| if i % 2 == 0 { plus(i as u32) } else { minus(i as u32) }).collect();
    let rep2 = approx_number_proxy(&diag, &mixed, 1.0, -1.0, (1, k));
    assert!(rep.singular.iter().zip(&rep2.singular).all(|(a, b)| (a - b).abs() <= 1e-14));
}

#[test]
fn kernel_fit_rejects_linked_pairs() {
    let b = block_op(3, 128);
    let r = kernel_decay_fit(&b, &[(plus(2), plus(2))], 2);
    assert!(matches!(r, Err(AnisoError::LinkedPair { .. })));
}

#[test]
fn kernel_fit_zero_weight() {
    let (sys, th, tho) = chart(0.0);
    let sys = sys.with_weight(Weight::Bump(Bump { height: 0.0, ..crate::map_model::CHART_G }));
    let b = assemble_blocks(&sys, &th, &tho, 3, BoxGrid::new(4.0, 128)).unwrap();
    let fit = kernel_decay_fit(&b, &[(minus(1), plus(1)), (minus(3), plus(3))], 3).unwrap();
    assert!(fit.points.iter().all(|p| p.max_entry == 0.0));
    assert_eq!(fit.levels_used, 0);
}

#[test]
fn kernel_blocks_decay() {
    let (sys, th, tho) = chart(0.0);
    // the fit only needs the lattice quadrature, so the large grid is never allocated
    let b = assemble_blocks(&sys, &th, &tho, 9, BoxGrid::new(4.0, 8192)).unwrap();
    let pairs: Vec<(DyadicIndex, DyadicIndex)> = (0..=9).map(|n| (minus(n), plus(n))).collect();
    let fit = kernel_decay_fit(&b, &pairs, 4).unwrap();
    assert!(fit.levels_used >= 6, "{:?}", fit.envelope);
    assert!(fit.slope <= -3.0, "slope {} over {:?}", fit.slope, fit.envelope);
}

#[test]
fn wraparound_is_measured() {
    let th = theta();
    let coarse = wraparound_survey(&th, BoxGrid::new(4.0, 256), 4).unwrap();
    let wide = wraparound_survey(&th, BoxGrid::new(8.0, 512), 4).unwrap();
    assert_eq!(coarse.bands.len(), 10);
    // a larger box pushes the strip further from the centred data
    assert!(wide.max < coarse.max);
    assert_eq!(wide.within_tolerance, wide.max <= 1e-8);
}

#[test]
fn dump_roundtrip() {
    let th = theta();
    let lat = Lattice::sample(&th, 3, 2, 4.0, 4);
    let m = random_matrix(lat.len(), 1.0, 8);
    let path = std::env::temp_dir().join(format!("reslab-dump-{}.bin", std::process::id()));
    write_dense_dump(&path, &lat, &m).unwrap();
    let (lat2, m2) = read_dense_dump(&path, 4.0).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(lat, lat2);
    assert_eq!(m, m2);
}

#[test]
fn dump_rejects_garbage() {
    let path = std::env::temp_dir().join(format!("reslab-bad-{}.bin", std::process::id()));
    std::fs::write(&path, b"NOPE\x01\x00").unwrap();
    assert!(read_dense_dump(&path, 4.0).is_err());
    std::fs::remove_file(&path).ok();
}

#[test]
fn interpolation_error_is_small_at_low_frequency() {
    let b = block_op(3, 256);
    let e = b.interpolation_error([1.0, SQRT_2]).unwrap();
    assert!(e <= 1e-4, "{e}");
}
