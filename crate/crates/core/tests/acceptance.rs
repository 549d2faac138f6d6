//! Acceptance gate. Each test prints one `PASS`/`FAIL` line for its
//! criterion before asserting it.

mod common;

use std::time::Instant;

use common::{direct_conv, plan_for, tensor};
use mixq::bench::packing_density;
use mixq::conv::{slbc, ConvProblem, Variant};
use mixq::cost::{calibrate, predict_counts, report, CalibrationRow, CostParams};
use mixq::packing::{enumerate_plans, PackingPlan, QuantizedTensor};
use mixq::rng::SplitMix64;
use mixq::search::{search_candidates, Candidate, Constraints, SearchOptions, Strategy};
use mixq::simd::{Emulator, InstrCounts, SimdShape, Validation};
use mixq::Error;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {id} ({name}): {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn run(
    plan: PackingPlan,
    s: &QuantizedTensor,
    k: &QuantizedTensor,
    variant: Variant,
    v: Validation,
) -> (mixq::Result<Vec<u64>>, InstrCounts) {
    let mut emu = Emulator::with_validation(v);
    let out = ConvProblem::new(s.clone(), k.clone(), plan).and_then(|p| slbc(&p, variant, &mut emu)).map(|r| r.outputs);
    (out, emu.read_counters())
}

/// First plan for `variant`, scanning shapes from a random start.
fn any_plan(rng: &mut SplitMix64, s: u32, k: u32, variant: Variant, klen: usize) -> PackingPlan {
    let shapes = SimdShape::all();
    let start = rng.below(shapes.len() as u64) as usize;
    (0..shapes.len())
        .find_map(|i| plan_for(s, k, shapes[(start + i) % shapes.len()], variant, klen))
        .expect("the widest shape always fits")
}

#[test]
fn c1_oracle_exactness() {
    let t0 = Instant::now();
    let pairs: Vec<(u32, u32)> = (2..=8).flat_map(|s| (2..=8).map(move |k| (s, k))).collect();
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).min(pairs.len());
    let mismatches: usize = std::thread::scope(|sc| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let pairs = &pairs;
                sc.spawn(move || {
                    let mut bad = 0;
                    for &(s, k) in pairs.iter().skip(t).step_by(threads) {
                        let mut rng = SplitMix64::new(1000 * s as u64 + k as u64);
                        for _ in 0..1000 {
                            let klen = rng.range(1, 7) as usize;
                            let n = rng.range(klen as u64, 128) as usize;
                            let seq = tensor(&mut rng, n, s);
                            let ker = tensor(&mut rng, klen, k);
                            let want = direct_conv(seq.values(), ker.values());
                            for variant in Variant::ALL {
                                let plan = any_plan(&mut rng, s, k, variant, klen);
                                let (got, _) = run(plan, &seq, &ker, variant, Validation::Trust);
                                if got.as_deref() != Ok(&want[..]) {
                                    bad += 1;
                                }
                            }
                        }
                    }
                    bad
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).sum()
    });
    let secs = t0.elapsed().as_secs_f64();
    let ok = mismatches == 0 && secs < 60.0;
    verdict(
        1,
        "oracle exactness",
        ok,
        &format!("49 pairs x 1000 problems x 2 kernels, {mismatches} mismatches, {secs:.1}s"),
    );
    assert!(ok);
}

/// Plan with exactly `ns` elements per lane on a shape of `lanes` lanes that
/// holds at least `klen` kernel taps, run with accumulation for reordering.
fn plan_with(ns: usize, lanes: usize, klen: usize) -> Option<PackingPlan> {
    for s in 2..=8 {
        for k in 2..=8 {
            for sh in SimdShape::all().into_iter().filter(|sh| sh.lane_count() == lanes) {
                let found = enumerate_plans(s, k, sh, lanes, klen)
                    .unwrap()
                    .into_iter()
                    .find(|p| p.seq_per_lane() == ns && p.ker_per_lane() >= klen);
                if found.is_some() {
                    return found;
                }
            }
        }
    }
    None
}

#[test]
fn c2_segmentation_ratio() {
    let mut rng = SplitMix64::new(2);
    let mut ok = true;
    let mut detail = Vec::new();
    for (ns, lanes) in [(2, 2), (2, 4), (4, 2)] {
        for klen in [2, 3] {
            let Some(plan) = plan_with(ns, lanes, klen) else {
                ok = false;
                detail.push(format!("no plan for N_s={ns} N_l={lanes}"));
                continue;
            };
            let n = ns * lanes * lanes * 4;
            let seq = tensor(&mut rng, n, plan.seq_bits());
            let ker = tensor(&mut rng, klen, plan.ker_bits());
            let (_, naive) = run(plan, &seq, &ker, Variant::Naive, Validation::Trust);
            let (_, reord) = run(plan, &seq, &ker, Variant::Reordered, Validation::Trust);
            let exact = reord.segmentation * (ns * lanes) as u64 == naive.segmentation;
            ok &= exact;
            detail.push(format!(
                "N_s={ns} N_l={lanes} K={klen}: {}/{} = {:.4} vs {:.4}",
                reord.segmentation,
                naive.segmentation,
                reord.segmentation as f64 / naive.segmentation as f64,
                1.0 / (ns * lanes) as f64
            ));
        }
    }
    verdict(2, "segmentation ratio 1/(N_s*N_l)", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn c3_model_emulator_agreement() {
    let mut rng = SplitMix64::new(3);
    let shapes: Vec<SimdShape> = SimdShape::all().into_iter().filter(|s| s.lane_count() >= 2).collect();
    let mut sampled = 0;
    let mut bad = Vec::new();
    while sampled < 100 {
        let (s, k) = (rng.range(2, 8) as u32, rng.range(2, 8) as u32);
        let sh = shapes[rng.below(shapes.len() as u64) as usize];
        let klen = rng.range(1, 7) as usize;
        let Some(plan) = plan_for(s, k, sh, Variant::Reordered, klen) else { continue };
        let group = plan.seq_per_lane() * sh.lane_count() * sh.lane_count();
        let n = group * (rng.range(1, 3) as usize).max(klen.div_ceil(group));
        let seq = tensor(&mut rng, n, s);
        let ker = tensor(&mut rng, klen, k);
        for variant in Variant::ALL {
            let (out, measured) = run(plan, &seq, &ker, variant, Validation::Trust);
            out.unwrap();
            let predicted = predict_counts(&plan, n, klen, variant).unwrap();
            if predicted != measured {
                bad.push(format!("{s}x{k} {sh} n={n} K={klen} {}", variant.name()));
            }
        }
        sampled += 1;
    }
    let ok = bad.is_empty();
    verdict(
        3,
        "model-emulator agreement",
        ok,
        &format!("100 group-aligned configs x 2 kernels, {} mismatches {bad:?}", bad.len()),
    );
    assert!(ok);
}

#[test]
fn c4_packing_density() {
    let mut best = (0.0f64, 0, 0, 0);
    let mut worst = (f64::INFINITY, 0, 0, 0);
    for r in [32, 64, 128] {
        for s in 2..=8 {
            for k in 2..=8 {
                let (packed, cmix) = packing_density(s, k, r).unwrap();
                let ratio = packed as f64 / cmix as f64;
                if s < 8 && k < 8 && ratio > best.0 {
                    best = (ratio, s, k, r);
                }
                if ratio < worst.0 {
                    worst = (ratio, s, k, r);
                }
            }
        }
    }
    let ok = best.0 >= 1.5 && worst.0 >= 1.0;
    verdict(
        4,
        "packing density vs one-element-per-lane",
        ok,
        &format!(
            "best {:.2}x at {}x{} R={}, worst {:.2}x at {}x{} R={}",
            best.0, best.1, best.2, best.3, worst.0, worst.1, worst.2, worst.3
        ),
    );
    assert!(ok);
}

#[test]
fn c5_reordering_benefit() {
    let params = CostParams::default();
    let mut configs = 0;
    let mut worse = Vec::new();
    let mut best: (f64, String) = (0.0, String::new());
    for s in 2..=8 {
        for k in 2..=8 {
            for sh in SimdShape::all() {
                let lanes = sh.lane_count();
                for klen in 1..=7 {
                    for plan in enumerate_plans(s, k, sh, lanes, klen).unwrap() {
                        let group = plan.seq_per_lane() * lanes * lanes;
                        for n in [1, 7, 64, 128, 256, group, 3 * group + 1] {
                            let cost = |v| report(&predict_counts(&plan, n, klen, v).unwrap(), &params).total;
                            let (naive, reord) = (cost(Variant::Naive), cost(Variant::Reordered));
                            configs += 1;
                            if reord > naive {
                                worse.push(format!("{s}x{k} {sh} n={n} K={klen}"));
                            }
                            let gain = 1.0 - reord / naive;
                            if s < 8 && k < 8 && gain > best.0 {
                                best = (gain, format!("{s}x{k} {sh} N_s={} n={n} K={klen}", plan.seq_per_lane()));
                            }
                        }
                    }
                }
            }
        }
    }
    // The best case, measured on the emulator rather than predicted.
    let mut rng = SplitMix64::new(5);
    let (s, k): (u32, u32) = (2, 2);
    let sh = SimdShape::new(128, 32).unwrap();
    let plan = plan_for(s, k, sh, Variant::Reordered, 3).unwrap();
    let n = plan.seq_per_lane() * 16 * 4;
    let seq = tensor(&mut rng, n, s);
    let ker = tensor(&mut rng, 3, k);
    let measured = |v| report(&run(plan, &seq, &ker, v, Validation::Trust).1, &params).total;
    let emu_gain = 1.0 - measured(Variant::Reordered) / measured(Variant::Naive);

    let ok = worse.is_empty() && best.0 >= 0.05 && emu_gain >= 0.05;
    verdict(
        5,
        "reordering benefit",
        ok,
        &format!(
            "{configs} configs, {} worse; best sub-byte saving {:.1}% at {}; emulated 2x2 on 128x32 {:.1}%",
            worse.len(),
            100.0 * best.0,
            best.1,
            100.0 * emu_gain
        ),
    );
    assert!(ok, "{worse:?}");
}

fn synthetic_rows(rng: &mut impl Rng, alpha: f64, beta: f64, noise: f64) -> Vec<CalibrationRow> {
    let gauss = Normal::new(0.0, 1.0).unwrap();
    (0..40)
        .map(|_| {
            let (s, m, b): (f64, f64, f64) =
                (rng.gen_range(10.0..1000.0), rng.gen_range(10.0..500.0), rng.gen_range(10.0..2000.0));
            let clean = s + alpha * m + beta * b;
            CalibrationRow { c_sisd: s, c_simd: m, c_bit: b, cost: clean * (1.0 + noise * gauss.sample(rng)) }
        })
        .collect()
}

#[test]
fn c6_calibration() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(6);
    let rel = |got: f64, want: f64| ((got - want) / want).abs();
    let mut noiseless_ok = true;
    let mut worst_noiseless = 0.0f64;
    for _ in 0..20 {
        let (alpha, beta) = (rng.gen_range(0.5..10.0), rng.gen_range(0.1..5.0));
        let fit = calibrate(&synthetic_rows(&mut rng, alpha, beta, 0.0)).unwrap().params;
        let err = rel(fit.alpha, alpha).max(rel(fit.beta, beta));
        worst_noiseless = worst_noiseless.max(err);
        noiseless_ok &= err <= 1e-9;
    }
    let (alpha, beta) = (4.0, 1.0);
    let within = (0..100)
        .filter(|_| {
            let fit = calibrate(&synthetic_rows(&mut rng, alpha, beta, 0.01)).unwrap().params;
            rel(fit.alpha, alpha) <= 0.05 && rel(fit.beta, beta) <= 0.05
        })
        .count();
    let ok = noiseless_ok && within >= 95;
    verdict(
        6,
        "calibration",
        ok,
        &format!("noiseless worst relative error {worst_noiseless:.2e}; 1% noise {within}/100 within 5%"),
    );
    assert!(ok);
}

fn random_candidates(rng: &mut SplitMix64, layers: usize) -> Vec<Vec<Candidate>> {
    (0..layers)
        .map(|_| {
            let per = rng.range(1, 4) as usize;
            let mut pairs: Vec<(u32, u32)> = Vec::new();
            while pairs.len() < per {
                let p = (rng.range(2, 8) as u32, rng.range(2, 8) as u32);
                if !pairs.contains(&p) {
                    pairs.push(p);
                }
            }
            pairs.sort();
            pairs
                .into_iter()
                .map(|(w, a)| Candidate {
                    w_bits: w,
                    a_bits: a,
                    acc: rng.below(1000) as f64 / 1000.0 / (w + a) as f64,
                    comp: (rng.below(4000) + 200 * (w * a) as u64) as f64,
                    flash_bytes: 16 * w as u64 + rng.below(16),
                    act_bytes: 20 * a as u64 + rng.below(16),
                })
                .collect()
        })
        .collect()
}

#[test]
fn c7_search_optimality() {
    let mut rng = SplitMix64::new(7);
    let mut failures = Vec::new();
    let mut infeasible = 0;
    for case in 0..20 {
        let layers = rng.range(1, 6) as usize;
        let cands = random_candidates(&mut rng, layers);
        let names: Vec<String> = (0..layers).map(|i| format!("layer{i}")).collect();
        let min_flash: u64 = cands.iter().map(|c| c.iter().map(|x| x.flash_bytes).min().unwrap()).sum();
        let min_peak = cands.iter().map(|c| c.iter().map(|x| x.act_bytes).min().unwrap()).max().unwrap();
        let constraints = match case % 3 {
            0 => Constraints::default(),
            1 => Constraints { flash_bytes: Some(min_flash + rng.below(8 * layers as u64 + 1)), peak_bytes: None },
            _ => Constraints { flash_bytes: Some(min_flash + 40), peak_bytes: Some(min_peak + rng.below(60)) },
        };
        let opts = |strategy| SearchOptions {
            lambda: [0.0, 1e-5, 1e-4][case % 3],
            constraints,
            strategy,
            ..SearchOptions::default()
        };
        let ex = search_candidates(&names, &cands, &opts(Strategy::Exhaustive));
        let runs: Vec<String> = (0..3)
            .map(|_| {
                format!(
                    "{:?}",
                    search_candidates(&names, &cands, &opts(Strategy::Beam))
                        .map(|c| serde_json::to_string(&c).unwrap())
                )
            })
            .collect();
        let beam = search_candidates(&names, &cands, &opts(Strategy::Beam));
        let (ex, beam) = match (ex, beam) {
            (Ok(ex), Ok(beam)) => (ex, beam),
            (Err(Error::Infeasible), Err(Error::Infeasible)) => {
                infeasible += 1;
                continue;
            }
            (ex, beam) => {
                failures.push(format!("case {case}: exhaustive {:?} vs beam {:?}", ex.err(), beam.err()));
                continue;
            }
        };
        if beam.layers != ex.layers || beam.objective != ex.objective {
            failures.push(format!("case {case}: beam differs from exhaustive"));
        }
        for cfg in [&ex, &beam] {
            if constraints.flash_bytes.is_some_and(|f| cfg.flash_bytes > f)
                || constraints.peak_bytes.is_some_and(|p| cfg.peak_bytes > p)
            {
                failures.push(format!("case {case}: constraint violated"));
            }
        }
        if runs.iter().any(|r| r != &runs[0]) {
            failures.push(format!("case {case}: repeated runs differ"));
        }
    }
    let ok = failures.is_empty();
    verdict(
        7,
        "search optimality",
        ok,
        &format!("20 instances ({infeasible} infeasible under both), {} failures {failures:?}", failures.len()),
    );
    assert!(ok);
}

fn max_tensor(len: usize, bits: u32) -> QuantizedTensor {
    QuantizedTensor::new(vec![(1 << bits) - 1; len], bits).unwrap()
}

#[test]
fn c8_guard_bit_soundness() {
    let mut rng = SplitMix64::new(8);
    let mut overflows = 0;
    let mut wrong = 0;
    for i in 0..10_000 {
        let (s, k) = (rng.range(2, 8) as u32, rng.range(2, 8) as u32);
        let variant = Variant::ALL[i % 2];
        let klen = rng.range(1, 7) as usize;
        let n = rng.range(klen as u64, 128) as usize;
        let plan = any_plan(&mut rng, s, k, variant, klen);
        let (seq, ker) = if i % 4 < 2 {
            (max_tensor(n, s), max_tensor(klen, k))
        } else {
            // Maximum values with sparse zeros.
            let pick = |rng: &mut SplitMix64, len, bits: u32| {
                let v = (0..len).map(|_| if rng.below(8) == 0 { 0 } else { (1 << bits) - 1 }).collect();
                QuantizedTensor::new(v, bits).unwrap()
            };
            (pick(&mut rng, n, s), pick(&mut rng, klen, k))
        };
        match run(plan, &seq, &ker, variant, Validation::Shadow).0 {
            Err(Error::FieldOverflow { .. }) => overflows += 1,
            Ok(out) if out == direct_conv(seq.values(), ker.values()) => {}
            _ => wrong += 1,
        }
    }

    // One slot bit short: whenever min(N_s, N_k) is a power of two the
    // all-maximum field exceeds the shrunk slot.
    let mut constructed = 0;
    let mut detected = 0;
    let mut uncovered = Vec::new();
    for s in 2..=8 {
        for k in 2..=8 {
            let mut any = false;
            for sh in SimdShape::all() {
                for plan in enumerate_plans(s, k, sh, 1, 8).unwrap() {
                    let m = plan.seq_per_lane().min(plan.ker_per_lane());
                    if !m.is_power_of_two() {
                        continue;
                    }
                    any = true;
                    constructed += 1;
                    let short = plan.with_slot_bits_unchecked(plan.slot_bits() - 1);
                    let seq = max_tensor((plan.seq_per_lane() * sh.lane_count() * 2).max(plan.ker_per_lane()), s);
                    let ker = max_tensor(plan.ker_per_lane(), k);
                    let (exact, _) = run(plan, &seq, &ker, Variant::Naive, Validation::Shadow);
                    let (probe, _) = run(short, &seq, &ker, Variant::Naive, Validation::ShadowAllowIllegal);
                    if exact.is_ok() && matches!(probe, Err(Error::FieldOverflow { .. })) {
                        detected += 1;
                    }
                }
            }
            if !any {
                uncovered.push((s, k));
            }
        }
    }
    let ok = overflows == 0 && wrong == 0 && constructed > 0 && detected == constructed;
    verdict(
        8,
        "guard-bit soundness",
        ok,
        &format!(
            "10000 max-magnitude runs at exact G: {overflows} overflows, {wrong} wrong; at G-1: {detected}/{constructed} counterexamples detected, pairs without one {uncovered:?}"
        ),
    );
    assert!(ok);
}
