use crate::error::{Error, Result};
use crate::packing::PackingPlan;
use crate::simd::{low_mask, Emulator, SimdVec, Validation};

use super::{kernel_chunks, ConvProblem, ConvResult, Variant};

/// Runs the packed kernel selected by `variant`.
pub fn slbc(p: &ConvProblem, variant: Variant, emu: &mut Emulator) -> Result<ConvResult> {
    match variant {
        Variant::Naive => slbc_naive(p, emu),
        Variant::Reordered => slbc_reordered(p, emu),
    }
}

/// Packing, SIMD multiplication and field extraction, one register of
/// `N_s * N_l` sequence elements at a time.
pub fn slbc_naive(p: &ConvProblem, emu: &mut Emulator) -> Result<ConvResult> {
    run(p, Variant::Naive, emu)
}

/// Reordered packing with local accumulation across the `N_l` registers of
/// each `N_s * N_l^2` element group. Sequence tails shorter than a group go
/// through the naive path.
pub fn slbc_reordered(p: &ConvProblem, emu: &mut Emulator) -> Result<ConvResult> {
    run(p, Variant::Reordered, emu)
}

fn run(p: &ConvProblem, variant: Variant, emu: &mut Emulator) -> Result<ConvResult> {
    let plan = *p.plan();
    let lanes = plan.lane_count();
    if emu.validation() != Validation::ShadowAllowIllegal {
        plan.check()?;
        let needed = variant.accum_rounds(lanes, plan.ker_per_lane(), p.kernel().len());
        if plan.accum_rounds() < needed {
            return Err(Error::InfeasiblePlan(format!(
                "reordered packing on {lanes} lanes needs {needed} accumulation rounds, plan has {}",
                plan.accum_rounds()
            )));
        }
    }

    let before = emu.read_counters();
    let seq: Vec<u64> = p.sequence().values().iter().map(|&v| v as u64).collect();
    let ker: Vec<u64> = p.kernel().values().iter().map(|&v| v as u64).collect();
    let mut out = vec![0u64; p.output_len()];

    let g = plan.slot_bits();
    let mask = emu.vdup(plan.shape(), low_mask(g))?;

    for (tap0, taps) in kernel_chunks(ker.len(), plan.ker_per_lane()) {
        let chunk = &ker[tap0..tap0 + taps];
        let mut word = 0u64;
        for (i, &t) in chunk.iter().enumerate() {
            word = emu.pack_or(word, t, i as u32 * g);
        }
        let vk = emu.vdup(plan.shape(), word)?;
        let mut pass = Pass { emu: &mut *emu, plan, seq: &seq, ker: chunk, vk, mask, out: &mut out[tap0..] };

        let group = plan.seq_per_lane() * lanes * lanes;
        let mut done = 0;
        if variant == Variant::Reordered && reorder_applies(taps, lanes) {
            let groups = seq.len() / group;
            for gi in 0..groups {
                pass.reordered_group(gi * group)?;
            }
            done = groups * group;
        }
        pass.naive_range(done, seq.len())?;
    }

    Ok(ConvResult { outputs: out, counts: emu.read_counters() - before, plan_used: plan, variant })
}

/// Reordering only pays off when segments overlap (`K > 1`) and a register
/// has more than one lane to transpose across.
pub(crate) fn reorder_applies(taps: usize, lanes: usize) -> bool {
    taps >= 2 && lanes >= 2
}

struct Pass<'a> {
    emu: &'a mut Emulator,
    plan: PackingPlan,
    seq: &'a [u64],
    ker: &'a [u64],
    vk: SimdVec,
    mask: SimdVec,
    /// Output window starting at this chunk's tap offset.
    out: &'a mut [u64],
}

impl Pass<'_> {
    fn in_segmentation(&mut self, f: impl FnOnce(&mut Self) -> Result<()>) -> Result<()> {
        let prev = self.emu.set_segmentation(true);
        let r = f(self);
        self.emu.set_segmentation(prev);
        r
    }

    fn pack_segment(&mut self, start: usize, len: usize) -> u64 {
        let g = self.plan.slot_bits();
        let mut word = 0u64;
        for i in 0..len {
            word = self.emu.pack_or(word, self.seq[start + i], i as u32 * g);
        }
        word
    }

    /// Exact value of field `field` of the product of `seq[start..start+len]`
    /// with the kernel chunk.
    fn expected_field(&self, start: usize, len: usize, field: usize) -> u64 {
        let lo = field.saturating_sub(self.ker.len() - 1);
        let hi = field.min(len.saturating_sub(1));
        (lo..=hi).map(|i| self.seq[start + i] * self.ker[field - i]).sum()
    }

    fn accumulate(&mut self, position: usize, value: u64, expected: Option<u64>) -> Result<()> {
        if let Some(e) = expected {
            if e != value {
                return Err(Error::FieldOverflow { position, expected: e, extracted: value });
            }
        }
        self.out[position] = self.emu.sisd_add(self.out[position], value);
        Ok(())
    }

    /// Field `field` of every lane: shift (skipped at offset zero) and mask.
    fn isolate(&mut self, v: SimdVec, field: usize) -> Result<SimdVec> {
        let shifted = if field == 0 { v } else { self.emu.vshr(v, field as u32 * self.plan.slot_bits())? };
        self.emu.vand(shifted, self.mask)
    }

    /// Naive packing over `seq[start..end]`; the last register is
    /// zero-padded.
    fn naive_range(&mut self, start: usize, end: usize) -> Result<()> {
        let ns = self.plan.seq_per_lane();
        let lanes = self.plan.lane_count();
        let taps = self.ker.len();
        let shadow = self.emu.validation().shadow();
        let mut base = start;
        while base < end {
            let fill: Vec<usize> = (0..lanes).map(|l| end.saturating_sub(base + l * ns).min(ns)).collect();
            let words: Vec<u64> = (0..lanes).map(|l| self.pack_segment(base + l * ns, fill[l])).collect();
            let va = self.emu.vld(self.plan.shape(), &words)?;
            let vp = self.emu.vmul(va, self.vk)?;

            let rounds = fill[0] + taps - 1;
            self.in_segmentation(|this| {
                for j in 0..rounds {
                    let vr = this.isolate(vp, j)?;
                    for (l, &f) in fill.iter().enumerate() {
                        if f == 0 || j >= f + taps - 1 {
                            continue;
                        }
                        let x = this.emu.vget(vr, l)?;
                        let seg = base + l * ns;
                        let exp = shadow.then(|| this.expected_field(seg, f, j));
                        this.accumulate(seg + j, x, exp)?;
                    }
                }
                Ok(())
            })?;
            base += ns * lanes;
        }
        Ok(())
    }

    /// One group of `N_s * N_l^2` elements starting at `base`: register `j`,
    /// lane `l` holds segment `l * N_l + j` of the group.
    fn reordered_group(&mut self, base: usize) -> Result<()> {
        let ns = self.plan.seq_per_lane();
        let lanes = self.plan.lane_count();
        let taps = self.ker.len();
        let block = ns * lanes;
        let shadow = self.emu.validation().shadow();

        let mut local: Option<SimdVec> = None;
        for j in 0..lanes {
            let words: Vec<u64> = (0..lanes).map(|l| self.pack_segment(base + l * block + j * ns, ns)).collect();
            let va = self.emu.vld(self.plan.shape(), &words)?;
            let vp = self.emu.vmul(va, self.vk)?;
            let acc = match local {
                None => vp,
                Some(prev) => {
                    let carried = self.emu.vshr(prev, ns as u32 * self.plan.slot_bits())?;
                    self.emu.vadd(carried, vp)?
                }
            };
            local = Some(acc);

            self.in_segmentation(|this| {
                for f in 0..ns {
                    let vr = this.isolate(acc, f)?;
                    for l in 0..lanes {
                        let x = this.emu.vget(vr, l)?;
                        let exp = shadow.then(|| this.expected_field(base + l * block, block, j * ns + f));
                        this.accumulate(base + l * block + j * ns + f, x, exp)?;
                    }
                }
                Ok(())
            })?;
        }

        let acc = local.expect("at least one lane");
        self.in_segmentation(|this| {
            for f in 0..taps - 1 {
                let vr = this.isolate(acc, ns + f)?;
                for l in 0..lanes {
                    let x = this.emu.vget(vr, l)?;
                    let exp = shadow.then(|| this.expected_field(base + l * block, block, block + f));
                    this.accumulate(base + (l + 1) * block + f, x, exp)?;
                }
            }
            Ok(())
        })
    }
}
