use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use mixq::bench::{run_bench, write_bench_csv, BenchConfig};
use mixq::conv::{reference_conv, select_plan_for, slbc, ConvProblem, PlanChoice, Variant};
use mixq::cost::{calibrate as fit, predict_counts, read_calibration_csv, report, CostParams};
use mixq::packing::{derive_plan_for_kernel, PackingPlan, QuantizedTensor};
use mixq::rng::{random_values, SplitMix64};
use mixq::search::{search as run_search, Constraints, Network, SearchOptions, SensitivityTable};
use mixq::simd::{Emulator, InstrCounts, Validation};
use mixq::Error;

use super::report::{table, ConfigDigest, RunReport, Status};
use super::{BenchArgs, CalibrateArgs, ConvArgs, Outcome, PlanArgs, SearchArgs};

fn read(path: &Path) -> Result<Vec<u8>, Error> {
    fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn params_line(p: &CostParams) -> String {
    let tag = if p.calibrated { "calibrated" } else { "UNCALIBRATED defaults" };
    format!("cost params    alpha={} beta={} ({tag})", p.alpha, p.beta)
}

fn warn_uncalibrated(p: &CostParams) {
    if !p.calibrated {
        log::warn!("scoring with uncalibrated default weights alpha={} beta={}", p.alpha, p.beta);
    }
}

fn plan_lines(plan: &PackingPlan, variant: Variant) -> Vec<String> {
    vec![
        format!("shape          {}", plan.shape()),
        format!("variant        {variant}"),
        format!(
            "packing        N_s={} N_k={} G={} lanes={} accum_rounds={}",
            plan.seq_per_lane(),
            plan.ker_per_lane(),
            plan.slot_bits(),
            plan.lane_count(),
            plan.accum_rounds()
        ),
    ]
}

fn counts_lines(c: &InstrCounts) -> Vec<String> {
    let rows = [
        ("sisd_arith", c.sisd_arith),
        ("simd_mul", c.simd_mul),
        ("simd_addsub", c.simd_addsub),
        ("bit_ops", c.bit_ops),
        ("  segmentation", c.segmentation),
        ("loads_stores", c.loads_stores),
    ]
    .map(|(n, v)| vec![n.to_string(), v.to_string()]);
    table(&["counter", "count"], &rows)
}

#[derive(Deserialize)]
struct ConvInput {
    sequence: Vec<u32>,
    kernel: Vec<u32>,
}

/// Plan for a fixed shape: the whole kernel in one lane when possible, with
/// the accumulation headroom `variant` needs.
fn plan_on_shape(a: &ConvArgs, shape: mixq::simd::SimdShape, kernel_len: usize) -> Result<PackingPlan, Error> {
    let lanes = shape.lane_count();
    if a.variant == Variant::Reordered {
        if let Ok(p) = derive_plan_for_kernel(a.seq_bits, a.ker_bits, shape, lanes, kernel_len) {
            return Ok(p);
        }
    }
    let p = derive_plan_for_kernel(a.seq_bits, a.ker_bits, shape, 1, kernel_len)?;
    if a.variant.accum_rounds(lanes, p.ker_per_lane(), kernel_len) > 1 {
        return Err(Error::InfeasiblePlan(format!(
            "{}x{} bits on {shape}: no room for {lanes} accumulation rounds",
            a.seq_bits, a.ker_bits
        )));
    }
    Ok(p)
}

pub fn conv(a: &ConvArgs, argv: Vec<String>) -> Result<Outcome, Error> {
    let params = a.cost.params()?;
    let mut digest = ConfigDigest::new(&json!({
        "command": "conv",
        "seq_bits": a.seq_bits, "ker_bits": a.ker_bits,
        "len": a.len, "kernel_len": a.kernel_len,
        "variant": a.variant, "shape": a.shape.map(|s| s.to_string()),
        "validate": a.validate, "slot_bits": a.slot_bits, "seed": a.seed, "params": params,
        "input": a.input.is_some(),
    }));
    let (seq, ker) = match &a.input {
        Some(path) => {
            let bytes = read(path)?;
            digest = digest.file(&bytes);
            let inp: ConvInput = serde_json::from_slice(&bytes)?;
            (QuantizedTensor::new(inp.sequence, a.seq_bits)?, QuantizedTensor::new(inp.kernel, a.ker_bits)?)
        }
        None => {
            let mut rng = SplitMix64::new(a.seed);
            let s = random_values(&mut rng, a.len, a.seq_bits);
            let k = random_values(&mut rng, a.kernel_len, a.ker_bits);
            (QuantizedTensor::new(s, a.seq_bits)?, QuantizedTensor::new(k, a.ker_bits)?)
        }
    };
    let plan = match a.shape {
        Some(shape) => plan_on_shape(a, shape, ker.len())?,
        None => {
            warn_uncalibrated(&params);
            select_plan_for(a.seq_bits, a.ker_bits, ker.len(), seq.len(), &params, None, Some(a.variant))?.plan
        }
    };
    let (plan, validation) = match a.slot_bits {
        Some(g) => (plan.with_slot_bits_unchecked(g), Validation::ShadowAllowIllegal),
        None if a.validate => (plan, Validation::Shadow),
        None => (plan, Validation::Trust),
    };
    for v in plan.violations() {
        log::warn!("illegal plan: {v}");
    }
    log::info!("plan {plan:?}");
    let problem = ConvProblem::new(seq, ker, plan)?;
    let mut emu = Emulator::with_validation(validation);
    let result = slbc(&problem, a.variant, &mut emu)?;
    let expected = reference_conv(problem.sequence(), problem.kernel())?;
    let pass = result.outputs == expected;
    let mismatches = result.outputs.iter().zip(&expected).filter(|(x, y)| x != y).count();
    let cost = report(&result.counts, &params);

    let mut lines = plan_lines(&plan, a.variant);
    lines.push(format!("sequence       {} x {} bits", problem.sequence().len(), a.seq_bits));
    lines.push(format!("kernel         {} x {} bits", problem.kernel().len(), a.ker_bits));
    lines.push(format!("outputs        {:?}", result.outputs));
    lines.extend(counts_lines(&result.counts));
    lines.push(format!("weighted cost  {:.3}", cost.total));
    lines.push(params_line(&params));
    lines.push(if pass {
        "PASS  outputs equal the exact convolution".to_string()
    } else {
        format!("FAIL  {mismatches} outputs differ from the exact convolution")
    });

    let results = json!({
        "plan": plan,
        "variant": a.variant,
        "outputs": result.outputs,
        "reference_match": pass,
        "mismatches": mismatches,
        "counts": result.counts,
        "cost": cost,
        "cost_params": params,
    });
    let status = if pass { Status::Pass } else { Status::Fail };
    Ok(Outcome { report: RunReport::new(argv, digest.finish(), status, results, lines), verified: pass })
}

pub fn bench(a: &BenchArgs, argv: Vec<String>) -> Result<Outcome, Error> {
    let params = a.cost.params()?;
    warn_uncalibrated(&params);
    let cfg = BenchConfig {
        s_bits: a.s_bits.clone(),
        k_bits: a.k_bits.clone(),
        variants: a.variants.clone(),
        register_bits: a.register_bits,
        seq_len: a.len,
        kernel_len: a.kernel_len,
        params,
    };
    let digest = ConfigDigest::new(&json!({ "command": "bench", "config": cfg })).finish();
    let rows = run_bench(&cfg)?;
    if let Some(path) = &a.out {
        let f = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        write_bench_csv(f, &rows)?;
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                format!("{}x{}", r.s_bits, r.k_bits),
                r.variant.to_string(),
                r.shape.to_string(),
                format!("{}/{}", r.plan.seq_per_lane(), r.plan.ker_per_lane()),
                format!("{:.2}", r.macs_per_mul),
                r.simd_mul.to_string(),
                r.bit_ops.to_string(),
                r.sisd.to_string(),
                format!("{:.1}", r.score),
                format!("{:.2}", r.speedup_scalar),
                format!("{:.2}", r.speedup_lane),
                format!("{:.2}", r.speedup_cmix),
            ]
        })
        .collect();
    let mut lines = vec![
        format!("workload       seq {} x kernel {} on {}-bit registers", a.len, a.kernel_len, a.register_bits),
        params_line(&params),
    ];
    lines.extend(table(
        &[
            "s x k",
            "variant",
            "shape",
            "Ns/Nk",
            "macs/mul",
            "simd_mul",
            "bit_ops",
            "sisd",
            "score",
            "vs scalar",
            "vs lane",
            "vs cmix",
        ],
        &cells,
    ));
    let results = json!({ "config": cfg, "rows": rows });
    Ok(Outcome { report: RunReport::new(argv, digest, Status::Ok, results, lines), verified: true })
}

pub fn calibrate(a: &CalibrateArgs, argv: Vec<String>) -> Result<Outcome, Error> {
    let bytes = read(&a.csv)?;
    let digest = ConfigDigest::new(&json!({ "command": "calibrate" })).file(&bytes).finish();
    let rows = read_calibration_csv(bytes.as_slice())?;
    let cal = fit(&rows)?;
    let lines = vec![
        format!("rows           {}", cal.rows),
        format!("alpha          {}", cal.params.alpha),
        format!("beta           {}", cal.params.beta),
        format!("residual ss    {:e}", cal.rss),
        format!("residual rms   {:e}", cal.rms),
    ];
    let results = serde_json::to_value(cal)?;
    Ok(Outcome { report: RunReport::new(argv, digest, Status::Ok, results, lines), verified: true })
}

#[derive(Serialize)]
struct SearchConfigEcho<'a> {
    command: &'static str,
    options: &'a SearchOptions,
}

pub fn search(a: &SearchArgs, argv: Vec<String>) -> Result<Outcome, Error> {
    let params = a.cost.params()?;
    warn_uncalibrated(&params);
    let net_bytes = read(&a.net)?;
    let table_bytes = read(&a.table)?;
    let net: Network = serde_json::from_slice(&net_bytes)?;
    let sens: SensitivityTable = serde_json::from_slice(&table_bytes)?;
    let opts = SearchOptions {
        lambda: a.lambda,
        constraints: Constraints { flash_bytes: a.flash_bytes, peak_bytes: a.peak_bytes },
        beam_width: a.beam_width,
        strategy: a.strategy.into(),
        cost: params,
        shapes: None,
    };
    let digest = ConfigDigest::new(&SearchConfigEcho { command: "search", options: &opts })
        .file(&net_bytes)
        .file(&table_bytes)
        .finish();
    let cfg = run_search(&net, &sens, &opts)?;
    let rows: Vec<Vec<String>> =
        cfg.layers.iter().map(|l| vec![l.name.clone(), l.w_bits.to_string(), l.a_bits.to_string()]).collect();
    let mut lines = vec![format!("network        {} ({} layers)", net.name, net.layers.len())];
    lines.extend(table(&["layer", "w_bits", "a_bits"], &rows));
    lines.extend([
        format!("objective      {}", cfg.objective),
        format!("acc loss       {}", cfg.acc_loss),
        format!("compute loss   {}", cfg.comp_loss),
        format!("lambda         {}", cfg.lambda),
        format!("flash bytes    {}", cfg.flash_bytes),
        format!("peak bytes     {}", cfg.peak_bytes),
        format!("strategy       {:?}", cfg.strategy).to_lowercase(),
        params_line(&params),
    ]);
    let results = json!({ "config": cfg, "cost_params": params });
    Ok(Outcome { report: RunReport::new(argv, digest, Status::Ok, results, lines), verified: true })
}

pub fn plan(a: &PlanArgs, argv: Vec<String>) -> Result<Outcome, Error> {
    let params = a.cost.params()?;
    warn_uncalibrated(&params);
    let shapes = a.shape.map(|s| vec![s]);
    let digest = ConfigDigest::new(&json!({
        "command": "plan",
        "seq_bits": a.seq_bits, "ker_bits": a.ker_bits, "len": a.len, "kernel_len": a.kernel_len,
        "shape": a.shape.map(|s| s.to_string()), "variant": a.variant, "params": params,
    }))
    .finish();
    let choice: PlanChoice =
        select_plan_for(a.seq_bits, a.ker_bits, a.kernel_len, a.len, &params, shapes.as_deref(), a.variant)?;
    debug_assert_eq!(choice.counts, predict_counts(&choice.plan, a.len, a.kernel_len, choice.variant)?);
    let mut lines = plan_lines(&choice.plan, choice.variant);
    lines.push(format!("macs/multiply  {}", choice.plan.macs_per_simd_multiply()));
    lines.extend(counts_lines(&choice.counts));
    lines.push(format!("weighted cost  {:.3}", choice.cost));
    lines.push(params_line(&params));
    let results = json!({
        "plan": choice.plan,
        "variant": choice.variant,
        "counts": choice.counts,
        "cost": report(&choice.counts, &params),
        "cost_params": params,
    });
    Ok(Outcome { report: RunReport::new(argv, digest, Status::Ok, results, lines), verified: true })
}
