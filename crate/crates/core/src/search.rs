//! Hardware-aware mixed-precision bitwidth search.
//!
//! Each layer picks a `(w_bits, a_bits)` pair. The objective is
//! `acc_loss + lambda * comp_loss`: `acc_loss` sums an externally supplied
//! per-layer sensitivity table, `comp_loss` sums the cost-model score of
//! the cheapest packed kernel at that layer's bitwidths. Small instances
//! are searched exhaustively; larger ones with a Pareto-pruned beam.
//!
//! Ties on the objective go to the lower total bitwidth, then to the
//! lexicographically smaller per-layer assignment.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conv::{select_plan, LayerSpec};
use crate::cost::{predict_layer_counts, report, CostParams};
use crate::error::{Error, Result};
use crate::packing::{MAX_BITS, MIN_BITS};
use crate::simd::SimdShape;

pub const DEFAULT_LAMBDA: f64 = 1e-6;
pub const DEFAULT_BEAM_WIDTH: usize = 32;
/// Instances with at most this many layers, each with at most
/// [`EXHAUSTIVE_MAX_CANDIDATES`] candidates, are searched exhaustively.
pub const EXHAUSTIVE_MAX_LAYERS: usize = 6;
pub const EXHAUSTIVE_MAX_CANDIDATES: usize = 4;

/// Network description: an ordered list of convolution layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    #[serde(default)]
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub w_bits: u32,
    pub a_bits: u32,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSensitivity {
    pub name: String,
    pub entries: Vec<SensitivityEntry>,
}

/// Additive accuracy-loss proxy per `(layer, w_bits, a_bits)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub layers: Vec<LayerSensitivity>,
}

impl SensitivityTable {
    /// Checks ranges, duplicates, non-negativity and that the loss never
    /// grows when both bitwidths grow.
    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for layer in &self.layers {
            if !names.insert(layer.name.as_str()) {
                return Err(Error::InvalidTable(format!("layer `{}` listed twice", layer.name)));
            }
            let mut seen = std::collections::BTreeSet::new();
            for e in &layer.entries {
                if !(MIN_BITS..=MAX_BITS).contains(&e.w_bits) || !(MIN_BITS..=MAX_BITS).contains(&e.a_bits) {
                    return Err(Error::InvalidTable(format!(
                        "layer `{}`: bitwidths w{}/a{} outside {MIN_BITS}..={MAX_BITS}",
                        layer.name, e.w_bits, e.a_bits
                    )));
                }
                if !(e.delta >= 0.0 && e.delta.is_finite()) {
                    return Err(Error::InvalidTable(format!(
                        "layer `{}`: negative or non-finite delta at w{}/a{}",
                        layer.name, e.w_bits, e.a_bits
                    )));
                }
                if !seen.insert((e.w_bits, e.a_bits)) {
                    return Err(Error::InvalidTable(format!(
                        "layer `{}`: duplicate entry w{}/a{}",
                        layer.name, e.w_bits, e.a_bits
                    )));
                }
            }
            for a in &layer.entries {
                for b in &layer.entries {
                    if b.w_bits >= a.w_bits && b.a_bits >= a.a_bits && b.delta > a.delta {
                        return Err(Error::InvalidTable(format!(
                            "layer `{}`: loss grows from w{}/a{} to w{}/a{}",
                            layer.name, a.w_bits, a.a_bits, b.w_bits, b.a_bits
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSensitivity> {
        self.layers.iter().find(|l| l.name == name)
    }
}

/// Memory budgets; `None` leaves a budget unconstrained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub flash_bytes: Option<u64>,
    pub peak_bytes: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Exhaustive for small instances, beam otherwise.
    #[default]
    Auto,
    Exhaustive,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOptions {
    pub lambda: f64,
    pub constraints: Constraints,
    pub beam_width: usize,
    pub strategy: Strategy,
    pub cost: CostParams,
    /// Restrict plan selection to these shapes; all supported when `None`.
    pub shapes: Option<Vec<SimdShape>>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            constraints: Constraints::default(),
            beam_width: DEFAULT_BEAM_WIDTH,
            strategy: Strategy::Auto,
            cost: CostParams::default(),
            shapes: None,
        }
    }
}

/// One option for one layer, with everything the search needs precomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub w_bits: u32,
    pub a_bits: u32,
    pub acc: f64,
    pub comp: f64,
    pub flash_bytes: u64,
    pub act_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerBits {
    pub name: String,
    pub w_bits: u32,
    pub a_bits: u32,
}

/// A complete assignment with its objective breakdown.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantConfig {
    pub layers: Vec<LayerBits>,
    pub objective: f64,
    pub acc_loss: f64,
    pub comp_loss: f64,
    pub lambda: f64,
    pub flash_bytes: u64,
    pub peak_bytes: u64,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Footprint {
    pub flash_bytes: u64,
    pub peak_bytes: u64,
}

fn bytes(count: usize, bits: u32) -> u64 {
    (count as u64 * bits as u64).div_ceil(8)
}

fn layer_flash(layer: &LayerSpec, w_bits: u32) -> u64 {
    bytes(layer.weight_count(), w_bits)
}

fn layer_act(layer: &LayerSpec, a_bits: u32) -> u64 {
    bytes(layer.input_activations() + layer.output_activations(), a_bits)
}

/// Weight storage summed over layers; peak is the largest per-layer
/// input-plus-output activation buffer.
pub fn memory_footprint(cfg: &[LayerBits], net: &[LayerSpec]) -> Result<Footprint> {
    if cfg.len() != net.len() {
        return Err(Error::DimMismatch(format!("{} assignments for {} layers", cfg.len(), net.len())));
    }
    let mut fp = Footprint { flash_bytes: 0, peak_bytes: 0 };
    for (b, l) in cfg.iter().zip(net) {
        fp.flash_bytes += layer_flash(l, b.w_bits);
        fp.peak_bytes = fp.peak_bytes.max(layer_act(l, b.a_bits));
    }
    Ok(fp)
}

/// Cost-model score of one layer at `(w_bits, a_bits)` with the cheapest
/// packed kernel. Activations are the streamed sequence, weights the kernel.
pub fn layer_compute_cost(
    layer: &LayerSpec,
    w_bits: u32,
    a_bits: u32,
    cost: &CostParams,
    shapes: Option<&[SimdShape]>,
) -> Result<f64> {
    let named = |e: Error| Error::LayerInfeasible { layer: layer.name.clone(), source: Box::new(e) };
    layer.validate().map_err(named)?;
    let choice = select_plan(a_bits, w_bits, layer.kernel_size, layer.width, cost, shapes).map_err(named)?;
    let counts = predict_layer_counts(&choice.plan, layer, choice.variant).map_err(named)?;
    Ok(report(&counts, cost).total)
}

/// Sum of per-layer compute costs.
pub fn compute_loss(
    cfg: &[LayerBits],
    net: &[LayerSpec],
    cost: &CostParams,
    shapes: Option<&[SimdShape]>,
) -> Result<f64> {
    if cfg.len() != net.len() {
        return Err(Error::DimMismatch(format!("{} assignments for {} layers", cfg.len(), net.len())));
    }
    let mut total = 0.0;
    for (b, l) in cfg.iter().zip(net) {
        total += layer_compute_cost(l, b.w_bits, b.a_bits, cost, shapes)?;
    }
    Ok(total)
}

/// Builds the candidate lists for `net` from the table, in ascending
/// `(w_bits, a_bits)` order.
pub fn build_candidates(
    net: &[LayerSpec],
    table: &SensitivityTable,
    opts: &SearchOptions,
) -> Result<Vec<Vec<Candidate>>> {
    table.validate()?;
    let mut cache: BTreeMap<(usize, u32, u32), f64> = BTreeMap::new();
    let mut out = Vec::with_capacity(net.len());
    for (li, layer) in net.iter().enumerate() {
        let sens = table
            .layer(&layer.name)
            .filter(|s| !s.entries.is_empty())
            .ok_or_else(|| Error::IncompleteTable { layer: layer.name.clone(), w_bits: 0, a_bits: 0 })?;
        let mut entries = sens.entries.clone();
        entries.sort_by_key(|e| (e.w_bits, e.a_bits));
        let mut cands = Vec::with_capacity(entries.len());
        for e in entries {
            let comp = match cache.get(&(li, e.w_bits, e.a_bits)) {
                Some(&c) => c,
                None => {
                    let c = layer_compute_cost(layer, e.w_bits, e.a_bits, &opts.cost, opts.shapes.as_deref())?;
                    cache.insert((li, e.w_bits, e.a_bits), c);
                    c
                }
            };
            cands.push(Candidate {
                w_bits: e.w_bits,
                a_bits: e.a_bits,
                acc: e.delta,
                comp,
                flash_bytes: layer_flash(layer, e.w_bits),
                act_bytes: layer_act(layer, e.a_bits),
            });
        }
        out.push(cands);
    }
    Ok(out)
}

/// Searches `net` against `table`.
pub fn search(net: &Network, table: &SensitivityTable, opts: &SearchOptions) -> Result<QuantConfig> {
    let cands = build_candidates(&net.layers, table, opts)?;
    let names: Vec<String> = net.layers.iter().map(|l| l.name.clone()).collect();
    search_candidates(&names, &cands, opts)
}

/// Partial or complete assignment during search.
#[derive(Debug, Clone)]
struct State {
    picks: Vec<usize>,
    acc: f64,
    comp: f64,
    flash: u64,
    peak: u64,
    bits: u32,
}

impl State {
    fn empty() -> Self {
        Self { picks: Vec::new(), acc: 0.0, comp: 0.0, flash: 0, peak: 0, bits: 0 }
    }

    fn push(&self, idx: usize, c: &Candidate) -> Self {
        let mut picks = self.picks.clone();
        picks.push(idx);
        Self {
            picks,
            acc: self.acc + c.acc,
            comp: self.comp + c.comp,
            flash: self.flash + c.flash_bytes,
            peak: self.peak.max(c.act_bytes),
            bits: self.bits + c.w_bits + c.a_bits,
        }
    }

    fn objective(&self, lambda: f64) -> f64 {
        self.acc + lambda * self.comp
    }

    fn key_cmp(&self, o: &State, lambda: f64, cands: &[Vec<Candidate>]) -> Ordering {
        self.objective(lambda)
            .total_cmp(&o.objective(lambda))
            .then(self.bits.cmp(&o.bits))
            .then_with(|| lex_cmp(&self.picks, &o.picks, cands))
    }

    /// `self` is at least as good as `o` under every completion.
    fn dominates(&self, o: &State, cands: &[Vec<Candidate>]) -> bool {
        self.acc <= o.acc
            && self.comp <= o.comp
            && self.flash <= o.flash
            && self.peak <= o.peak
            && self.bits <= o.bits
            && lex_cmp(&self.picks, &o.picks, cands) == Ordering::Less
    }
}

fn lex_cmp(a: &[usize], b: &[usize], cands: &[Vec<Candidate>]) -> Ordering {
    for (layer, (&x, &y)) in a.iter().zip(b).enumerate() {
        let (cx, cy) = (&cands[layer][x], &cands[layer][y]);
        let ord = (cx.w_bits, cx.a_bits).cmp(&(cy.w_bits, cy.a_bits));
        if ord != Ordering::Equal {
            return ord;
        }
    }
    a.len().cmp(&b.len())
}

/// Search over explicit per-layer candidates. `names` labels the layers in
/// the returned config.
pub fn search_candidates(names: &[String], cands: &[Vec<Candidate>], opts: &SearchOptions) -> Result<QuantConfig> {
    if !(opts.lambda >= 0.0 && opts.lambda.is_finite()) {
        return Err(Error::BadInput(format!("lambda must be a non-negative number, got {}", opts.lambda)));
    }
    if names.len() != cands.len() {
        return Err(Error::DimMismatch("layer names and candidate lists differ in length".into()));
    }
    if let Some(i) = cands.iter().position(|c| c.is_empty()) {
        return Err(Error::IncompleteTable { layer: names[i].clone(), w_bits: 0, a_bits: 0 });
    }
    let small = cands.len() <= EXHAUSTIVE_MAX_LAYERS && cands.iter().all(|c| c.len() <= EXHAUSTIVE_MAX_CANDIDATES);
    let strategy = match opts.strategy {
        Strategy::Auto if small => Strategy::Exhaustive,
        Strategy::Auto => Strategy::Beam,
        s => s,
    };
    let best = match strategy {
        Strategy::Exhaustive => exhaustive(cands, opts),
        _ => beam(cands, opts),
    }
    .ok_or(Error::Infeasible)?;

    Ok(QuantConfig {
        layers: best
            .picks
            .iter()
            .enumerate()
            .map(|(i, &p)| LayerBits { name: names[i].clone(), w_bits: cands[i][p].w_bits, a_bits: cands[i][p].a_bits })
            .collect(),
        objective: best.objective(opts.lambda),
        acc_loss: best.acc,
        comp_loss: best.comp,
        lambda: opts.lambda,
        flash_bytes: best.flash,
        peak_bytes: best.peak,
        strategy,
    })
}

fn within(c: &Constraints, flash: u64, peak: u64) -> bool {
    c.flash_bytes.is_none_or(|f| flash <= f) && c.peak_bytes.is_none_or(|p| peak <= p)
}

fn exhaustive(cands: &[Vec<Candidate>], opts: &SearchOptions) -> Option<State> {
    let mut idx = vec![0usize; cands.len()];
    let mut best: Option<State> = None;
    loop {
        let mut s = State::empty();
        for (layer, &i) in idx.iter().enumerate() {
            s = s.push(i, &cands[layer][i]);
        }
        if within(&opts.constraints, s.flash, s.peak)
            && best.as_ref().is_none_or(|b| s.key_cmp(b, opts.lambda, cands) == Ordering::Less)
        {
            best = Some(s);
        }
        // Mixed-radix increment, last layer fastest.
        let mut pos = cands.len();
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < cands[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn beam(cands: &[Vec<Candidate>], opts: &SearchOptions) -> Option<State> {
    let width = opts.beam_width.max(1);
    // Cheapest possible remaining flash and activation buffer from layer i on.
    let n = cands.len();
    let mut min_flash_tail = vec![0u64; n + 1];
    let mut min_act_tail = vec![0u64; n + 1];
    for i in (0..n).rev() {
        min_flash_tail[i] = min_flash_tail[i + 1] + cands[i].iter().map(|c| c.flash_bytes).min().unwrap_or(0);
        min_act_tail[i] = min_act_tail[i + 1].max(cands[i].iter().map(|c| c.act_bytes).min().unwrap_or(0));
    }

    let mut states = vec![State::empty()];
    for (layer, options) in cands.iter().enumerate() {
        let mut next: Vec<State> = Vec::with_capacity(states.len() * options.len());
        for s in &states {
            for (i, c) in options.iter().enumerate() {
                let t = s.push(i, c);
                let flash_lb = t.flash + min_flash_tail[layer + 1];
                let peak_lb = t.peak.max(min_act_tail[layer + 1]);
                if within(&opts.constraints, flash_lb, peak_lb) {
                    next.push(t);
                }
            }
        }
        next.sort_by(|a, b| a.key_cmp(b, opts.lambda, cands));
        let mut kept: Vec<State> = Vec::with_capacity(width);
        for t in next {
            if kept.len() == width {
                break;
            }
            if !kept.iter().any(|k| k.dominates(&t, cands)) {
                kept.push(t);
            }
        }
        if kept.is_empty() {
            return None;
        }
        states = kept;
    }
    states.into_iter().find(|s| within(&opts.constraints, s.flash, s.peak))
}
