use apkinetic::collision::{precompute_kernel, q_boltzmann, CALIBRATED_B0};
use apkinetic::tableaux::{builtin_pair, parse_pair, parse_rational, PairFile, BUILTIN_SCHEMES};
use apkinetic::velocity::{entropy, l1_distance, maxwellian, moments, GridFunction, Moments, VelocityGrid2D};
use proptest::prelude::*;

fn field(n: usize, values: Vec<f64>) -> GridFunction {
    GridFunction::from_values(VelocityGrid2D::standard(n).unwrap(), values).unwrap()
}

fn check_roundtrip(n: usize, rho: f64, w: [f64; 2], t: f64) -> Result<(), TestCaseError> {
    let grid = VelocityGrid2D::standard(n).unwrap();
    let m = maxwellian(&Moments::new(rho, w, t), &grid).unwrap();
    let back = moments(&m).unwrap().conserved().as_array();
    let want = Moments::new(rho, w, t).conserved().as_array();
    for (a, b) in back.iter().zip(&want) {
        prop_assert!((a - b).abs() <= 1e-8, "{:?} vs {:?}", back, want);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn l1_is_a_metric(
        a in prop::collection::vec(-1.0f64..1.0, 64),
        b in prop::collection::vec(-1.0f64..1.0, 64),
        c in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let (a, b, c) = (field(8, a), field(8, b), field(8, c));
        let ab = l1_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, l1_distance(&b, &a).unwrap());
        prop_assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= l1_distance(&a, &c).unwrap() + l1_distance(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn maxwellian_moments_roundtrip_fine_grid(
        rho in 0.1f64..2.0, speed in 0.0f64..1.0, angle in 0.0f64..6.3, t in 0.2f64..1.5,
    ) {
        check_roundtrip(64, rho, [speed * angle.cos(), speed * angle.sin()], t)?;
    }

    #[test]
    fn maxwellian_moments_roundtrip_desk_grid(
        rho in 0.1f64..2.0, speed in 0.0f64..1.0, angle in 0.0f64..6.3, t in 0.5f64..1.5,
    ) {
        check_roundtrip(32, rho, [speed * angle.cos(), speed * angle.sin()], t)?;
    }

    #[test]
    fn maxwellian_minimises_entropy(
        t in 0.6f64..1.5, wx in -0.5f64..0.5, amp in 0.0f64..0.5, kx in 1usize..4, phase in 0.0f64..6.0,
    ) {
        let grid = VelocityGrid2D::standard(32).unwrap();
        let base = maxwellian(&Moments::new(1.0, [wx, 0.0], t), &grid).unwrap();
        let f = GridFunction::from_fn(grid, |v| {
            let m = (-((v[0] - wx).powi(2) + v[1] * v[1]) / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t);
            m * (1.0 + amp * (kx as f64 * v[0] + phase).sin() * (v[1]).cos())
        });
        let m = maxwellian(&moments(&f).unwrap(), &grid).unwrap();
        prop_assert!(entropy(&m).unwrap() <= entropy(&f).unwrap() + 1e-8);
        prop_assert!(entropy(&m).unwrap() <= entropy(&base).unwrap() + 1e-8 || amp > 0.0);
    }

    #[test]
    fn rational_entries_parse(p in -1000i64..1000, q in 1i64..1000) {
        let r = parse_rational(&format!("{p}/{q}")).unwrap();
        prop_assert_eq!(*r.numer() as f64 / *r.denom() as f64, p as f64 / q as f64);
    }
}

#[test]
fn collision_mass_vanishes_for_rough_data() {
    let grid = VelocityGrid2D::standard(16).unwrap();
    let table = precompute_kernel(&grid, CALIBRATED_B0).unwrap();
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(16));
    runner
        .run(&prop::collection::vec(0.0f64..1.0, 256), |v| {
            let q = q_boltzmann(&field(16, v.clone()), &table).unwrap();
            let scale = v.iter().sum::<f64>().powi(2);
            prop_assert!(q.mass().abs() <= 1e-12 * scale.max(1.0), "{:e}", q.mass());
            Ok(())
        })
        .unwrap();
}

#[test]
fn builtin_pairs_survive_file_roundtrip() {
    for name in BUILTIN_SCHEMES {
        let pair = builtin_pair(name).unwrap();
        let text = serde_json::to_string(&PairFile::from_pair(&pair)).unwrap();
        let back = parse_pair(&text).unwrap();
        assert_eq!(back.name(), pair.name());
        assert_eq!(back.explicit().matrix().max_abs_diff(pair.explicit().matrix()), 0.0);
        assert_eq!(back.implicit().matrix().max_abs_diff(pair.implicit().matrix()), 0.0);
        assert_eq!(back.implicit().weights(), pair.implicit().weights());
    }
}

#[test]
fn hot_shifted_maxwellian_loses_tail_energy_at_the_box_edge() {
    // v_max = 3π cuts a 6σ tail for T = 2, |w| = 1; the loss exceeds 1e-8 in E.
    let grid = VelocityGrid2D::standard(64).unwrap();
    let want = Moments::new(1.0, [1.0, 0.0], 2.0);
    let back = moments(&maxwellian(&want, &grid).unwrap()).unwrap();
    let gap = want.energy - back.energy;
    assert!(gap > 1e-8 && gap < 1e-6, "{gap:e}");
}
