use mixq::conv::{candidates, select_plan, LayerSpec, Variant};
use mixq::cost::{
    calibrate, predict_counts, predict_layer_counts, read_calibration_csv, report, score, write_calibration_csv,
    CalibrationRow, CostParams,
};
use mixq::packing::PackingPlan;
use mixq::search::{compute_loss, LayerBits};
use mixq::simd::SimdShape;
use mixq::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

fn synthetic_rows(rng: &mut impl Rng, alpha: f64, beta: f64, n: usize, noise: f64) -> Vec<CalibrationRow> {
    let gauss = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let (s, m, b) = (rng.gen_range(10.0..1000.0), rng.gen_range(10.0..500.0), rng.gen_range(10.0..2000.0));
            let clean: f64 = s + alpha * m + beta * b;
            CalibrationRow { c_sisd: s, c_simd: m, c_bit: b, cost: clean * (1.0 + noise * gauss.sample(rng)) }
        })
        .collect()
}

#[test]
fn noiseless_fit_recovers_parameters() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(1);
    let rows = synthetic_rows(&mut rng, 2.0, 0.5, 20, 0.0);
    let c = calibrate(&rows).unwrap();
    assert!(((c.params.alpha - 2.0) / 2.0).abs() < 1e-9);
    assert!(((c.params.beta - 0.5) / 0.5).abs() < 1e-9);
    assert!(c.params.calibrated);
}

#[test]
fn calibration_csv_from_disk() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(2);
    let rows = synthetic_rows(&mut rng, 3.0, 1.25, 10, 0.0);
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write_calibration_csv(&mut f, &rows).unwrap();
    let back = read_calibration_csv(std::fs::File::open(f.path()).unwrap()).unwrap();
    assert_eq!(back, rows);
    let bundled = read_calibration_csv(&include_bytes!("../data/calibration_synthetic.csv")[..]).unwrap();
    let c = calibrate(&bundled).unwrap();
    assert!((c.params.alpha - 2.5).abs() < 1e-9 && (c.params.beta - 0.75).abs() < 1e-9);
}

#[test]
fn degenerate_calibration() {
    let one = [CalibrationRow { c_sisd: 1.0, c_simd: 1.0, c_bit: 1.0, cost: 4.0 }];
    assert!(matches!(calibrate(&one), Err(Error::DegenerateSystem(_))));
}

#[test]
fn selected_plan_is_a_true_argmin() {
    let params = CostParams::default();
    let shapes = SimdShape::all();
    for s in 2..=8 {
        for k in 2..=8 {
            for (klen, n) in [(1, 16), (3, 64), (5, 100)] {
                let best = select_plan(s, k, klen, n, &params, None).unwrap();
                for c in candidates(s, k, klen, n, &params, &shapes).unwrap() {
                    let recomputed = report(&predict_counts(&c.plan, n, klen, c.variant).unwrap(), &params).total;
                    assert_eq!(recomputed, c.cost);
                    assert!(best.cost <= recomputed);
                }
            }
        }
    }
}

#[test]
fn sub_byte_plans_pack_more_than_eight_bit() {
    let params = CostParams::default();
    let two = select_plan(2, 2, 3, 64, &params, None).unwrap();
    let eight = select_plan(8, 8, 3, 64, &params, None).unwrap();
    assert!(two.plan.macs_per_simd_multiply() > eight.plan.macs_per_simd_multiply());
}

#[test]
fn reordered_saves_exactly_the_segmentation_difference() {
    let shape = SimdShape::new(128, 32).unwrap();
    let plan = mixq::packing::derive_plan_for_kernel(2, 2, shape, 4, 3).unwrap();
    let n = plan.seq_per_lane() * 16 * 3;
    let naive = predict_counts(&plan, n, 3, Variant::Naive).unwrap();
    let reord = predict_counts(&plan, n, 3, Variant::Reordered).unwrap();
    // Reordering adds one shift per carried register and otherwise only
    // removes extraction work.
    let carries = reord.simd_addsub;
    assert_eq!(naive.bit_ops - reord.bit_ops, (naive.segmentation - reord.segmentation) - carries);
}

fn net_layer(name: &str) -> LayerSpec {
    LayerSpec { name: name.into(), height: 10, width: 12, in_channels: 3, out_channels: 4, kernel_size: 3 }
}

#[test]
fn compute_loss_examples() {
    let params = CostParams::default();
    let r32: Vec<SimdShape> = SimdShape::all().into_iter().filter(|s| s.register_bits() == 32).collect();
    let l = net_layer("a");
    let cfg8 = [LayerBits { name: "a".into(), w_bits: 8, a_bits: 8 }];
    let degenerate = PackingPlan::new(8, 8, 1, 1, 16, SimdShape::new(32, 16).unwrap(), 1).unwrap();
    let want = report(&predict_layer_counts(&degenerate, &l, Variant::Naive).unwrap(), &params).total;
    let got = compute_loss(&cfg8, std::slice::from_ref(&l), &params, Some(&r32)).unwrap();
    assert_eq!(got, want);

    let net = vec![net_layer("a"), net_layer("b")];
    let bits = |b| net.iter().map(|l| LayerBits { name: l.name.clone(), w_bits: b, a_bits: b }).collect::<Vec<_>>();
    assert!(
        compute_loss(&bits(2), &net, &params, None).unwrap() <= compute_loss(&bits(8), &net, &params, None).unwrap()
    );
    assert_eq!(compute_loss(&[], &[], &params, None).unwrap(), 0.0);

    let err = compute_loss(&cfg8, &[l], &params, Some(&[SimdShape::new(32, 8).unwrap()])).unwrap_err();
    match err {
        Error::LayerInfeasible { layer, source } => {
            assert_eq!(layer, "a");
            assert!(matches!(*source, Error::NoFeasiblePlan { .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #[test]
    fn score_is_linear_and_increasing(
        s in 0u64..1_000_000, m in 0u64..1_000_000, b in 0u64..1_000_000,
        alpha in 0.01f64..100.0, beta in 0.01f64..100.0,
    ) {
        let p = CostParams::new(alpha, beta).unwrap();
        let base = score(s, m, b, &p);
        prop_assert!(score(s + 1, m, b, &p) > base);
        prop_assert!(score(s, m + 1, b, &p) > base);
        prop_assert!(score(s, m, b + 1, &p) > base);
        let doubled = score(2 * s, 2 * m, 2 * b, &p);
        prop_assert!((doubled - 2.0 * base).abs() <= 1e-9 * doubled.max(1.0));
    }

    #[test]
    fn calibration_recovers_generating_parameters(alpha in 0.1f64..20.0, beta in 0.1f64..20.0, seed in any::<u64>()) {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let rows = synthetic_rows(&mut rng, alpha, beta, 8, 0.0);
        let c = calibrate(&rows).unwrap();
        prop_assert!(((c.params.alpha - alpha) / alpha).abs() < 1e-9);
        prop_assert!(((c.params.beta - beta) / beta).abs() < 1e-9);
    }
}
