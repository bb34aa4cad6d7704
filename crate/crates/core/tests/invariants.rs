use bdris::analysis::{group_gain_per_element, scaling_laws};
use bdris::channel::{sample_channels_with, ChannelDims, ChannelSet, FadingSpec};
use bdris::estimate::group_patterns;
use bdris::impair::Codebook;
use bdris::linalg::{polar_unitary, real_least_squares, unitarity_residual};
use bdris::netcore::{convert, predicates, NetworkKind, NetworkMatrix};
use bdris::optimize::{gain_bound, project_sym_unitary, siso_gain, tree_admittance_align_retry, unitary_align, SisoSolver};
use bdris::random::{random_complex, random_imag_symmetric, random_passive_symmetric, random_symmetric_unitary, rng};
use bdris::topology::{build_topology, closed_form_complexity, Family, TopologyParams};
use bdris::CMatrix64;
use nalgebra::DVector;
use proptest::prelude::*;

fn siso(seed: u64, m: usize) -> ChannelSet<f64> {
    let spec = FadingSpec { direct_link: false, ..FadingSpec::rayleigh(0) };
    sample_channels_with(&mut rng(seed), &spec, ChannelDims::siso(m)).unwrap()
}

fn rel(a: &CMatrix64, b: &CMatrix64) -> f64 {
    (a - b).norm() / b.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conversions_round_trip(seed in any::<u64>(), m in 1usize..8) {
        let z = NetworkMatrix::impedance(random_passive_symmetric::<f64, _>(&mut rng(seed), m, 40.0), 50.0).unwrap();
        let s = convert(&z, NetworkKind::Scattering).unwrap();
        let y = convert(&s, NetworkKind::Admittance).unwrap();
        let back = convert(&y, NetworkKind::Impedance).unwrap();
        prop_assert!(rel(back.values(), z.values()) < 1e-10);
        prop_assert_eq!(predicates(&s, 1e-9).passive, Some(true));
    }

    #[test]
    fn reactive_networks_scatter_unitarily(seed in any::<u64>(), m in 1usize..8, scale in 1.0f64..500.0) {
        let z = NetworkMatrix::impedance(random_imag_symmetric::<f64, _>(&mut rng(seed), m, scale), 50.0).unwrap();
        let s = convert(&z, NetworkKind::Scattering).unwrap();
        prop_assert!(unitarity_residual(s.values()) < 1e-9);
    }

    #[test]
    fn lossless_solvers_never_exceed_bound(seed in any::<u64>(), m in 2usize..24) {
        let ch = siso(seed, m);
        let bound = gain_bound(&ch.h_ri, &ch.h_it);
        let u = unitary_align(&ch.h_ri, &ch.h_it).unwrap();
        prop_assert!((u.objective - bound).abs() <= 1e-9 * bound);
        prop_assert!((siso_gain(&ch.h_ri, &u.theta, &ch.h_it) - u.objective).abs() <= 1e-9 * bound);
        let t = tree_admittance_align_retry(&ch.h_ri, &ch.h_it, 0.02, 8).unwrap();
        prop_assert!((t.objective - bound).abs() <= 1e-8 * bound);
        prop_assert!(unitarity_residual(&t.theta) < 1e-9);
    }

    #[test]
    fn coarser_groups_never_win(seed in any::<u64>(), k in 1usize..4) {
        let m = 12;
        let ch = siso(seed, m);
        let mut last = SisoSolver::Dris.solve(&ch.h_ri, &ch.h_it, 0.02).unwrap().objective;
        for g in [2usize, 6, 12].into_iter().take(k) {
            let v = SisoSolver::Group { group_size: g }.solve(&ch.h_ri, &ch.h_it, 0.02).unwrap().objective;
            prop_assert!(v >= last * (1.0 - 1e-12));
            last = v;
        }
        prop_assert!(last <= gain_bound(&ch.h_ri, &ch.h_it) * (1.0 + 1e-12));
    }

    #[test]
    fn built_topologies_match_closed_forms(m in 2usize..40, p in 1usize..40, f in 0usize..9) {
        let family = Family::ALL[f];
        let params = TopologyParams { group_size: Some(p), band_width: Some(p), stem_width: Some(p), ..Default::default() };
        match (build_topology(family, m, params.clone()), closed_form_complexity(family, m, &params)) {
            (Ok(t), Ok(c)) => prop_assert_eq!(t.complexity(), c),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a.map(|t| t.complexity()), b),
        }
    }

    #[test]
    fn pattern_trace_equals_group_size(gexp in 0u32..3, mult in 1usize..3) {
        let g = 1usize << gexp;
        let m = g * mult;
        let tr = group_patterns::<f64>(m, g).unwrap().gram_trace_inverse().unwrap();
        prop_assert!((tr - g as f64).abs() < 1e-9);
    }

    #[test]
    fn symmetric_unitaries_are_projection_fixed_points(seed in any::<u64>(), m in 1usize..10) {
        let theta = random_symmetric_unitary::<f64, _>(&mut rng(seed), m);
        let p = project_sym_unitary(&theta).unwrap();
        prop_assert!(rel(&p.theta, &theta) < 1e-10);
    }

    #[test]
    fn polar_factor_of_rank_deficient_input_is_unitary(seed in any::<u64>(), m in 2usize..16, rank in 1usize..3) {
        let mut r = rng(seed);
        let v: CMatrix64 = random_complex(&mut r, m, rank.min(m));
        let a = &v * v.transpose();
        let (u, _) = polar_unitary(&a);
        prop_assert!(unitarity_residual(&u) < 1e-9);
        let p = u.adjoint() * &a;
        prop_assert!((&p - p.adjoint()).norm() < 1e-8 * a.norm());
    }

    #[test]
    fn least_squares_is_exact_on_consistent_wide_systems(seed in any::<u64>(), rows in 1usize..12, extra in 0usize..20) {
        let mut r = rng(seed);
        let cols = rows + extra;
        let a = random_complex::<f64, _>(&mut r, rows, cols).map(|z| z.re);
        let x0 = DVector::from_iterator(cols, random_complex::<f64, _>(&mut r, cols, 1).iter().map(|z| z.re));
        let b = &a * &x0;
        let x = real_least_squares(&a, &b);
        prop_assert!((&a * &x - &b).norm() <= 1e-10 * b.norm().max(1e-300));
        prop_assert!(x.norm() <= x0.norm() * (1.0 + 1e-10));
    }

    #[test]
    fn quantization_picks_nearest_signed_level(x in -5.0f64..5.0) {
        let cb = Codebook::new(2, vec![0.1, 0.4, 1.0, 2.5]).unwrap();
        let q = cb.quantize(x);
        let cands = cb.candidates();
        prop_assert!(cands.contains(&q));
        let best = cands.iter().map(|c| (c - x).abs()).fold(f64::INFINITY, f64::min);
        prop_assert!((q - x).abs() <= best + 1e-15);
    }
}

#[test]
fn closed_form_ratio_increases_toward_limit() {
    let limit = 16.0 / (std::f64::consts::PI * std::f64::consts::PI);
    let mut last = 1.0;
    for m in 1..=512 {
        let r = scaling_laws(m).ratio;
        assert!(r >= last && r < limit);
        last = r;
    }
    assert!((scaling_laws(1 << 20).ratio - limit).abs() < 1e-5);
}

#[test]
fn group_gain_interpolates_between_architectures() {
    let m = 64;
    let d = scaling_laws(m);
    assert!((group_gain_per_element(m, 1).unwrap() * m as f64 - d.dris).abs() < 1e-9 * d.dris);
    assert!((group_gain_per_element(m, m).unwrap() * m as f64 - d.bdris).abs() < 1e-9 * d.bdris);
    let sizes = [1, 2, 4, 8, 16, 32, 64];
    for w in sizes.windows(2) {
        assert!(group_gain_per_element(m, w[1]).unwrap() > group_gain_per_element(m, w[0]).unwrap());
    }
}
