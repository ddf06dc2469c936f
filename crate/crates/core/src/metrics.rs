//! Attack scoring: correct connection rate, netlist recovery, output
//! Hamming distance and the F2F distance histogram.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::f2f::F2FPlan;
use crate::netlist::{simulate, Netlist, NetlistError, PatternBlock};

pub const DEFAULT_HD_PATTERNS: usize = 100_000;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("guess has {guess} entries, truth has {truth}")]
    LengthMismatch { guess: usize, truth: usize },
    #[error("output `{0}` missing from the recovered netlist")]
    MissingOutput(String),
    #[error("input `{0}` missing from the recovered netlist")]
    MissingInput(String),
    #[error("need at least one histogram bin")]
    NoBins,
}

/// Fraction of driver ports paired with their true sink port. A design
/// without vertical connections scores 1.
pub fn ccr(guess: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    if guess.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            guess: guess.len(),
            truth: truth.len(),
        });
    }
    if truth.is_empty() {
        return Ok(1.0);
    }
    let hit = guess.iter().zip(truth).filter(|(g, t)| g == t).count();
    Ok(hit as f64 / truth.len() as f64)
}

/// Fraction of gates of `original` whose recovered counterpart (same name)
/// reads exactly the same fanin nets; pin order is ignored for symmetric
/// cells.
pub fn pnr(original: &Netlist, recovered: &Netlist) -> f64 {
    if original.num_gates() == 0 {
        return 1.0;
    }
    let fanin_names = |n: &Netlist, g| -> Vec<String> {
        let gate = n.gate(g);
        let mut v: Vec<String> = gate.fanins.iter().map(|f| n.net(*f).name.clone()).collect();
        if gate.cell.kind.is_symmetric() {
            v.sort();
        }
        v
    };
    let ok = original
        .gate_ids()
        .filter(|&g| match recovered.gate_id(original.gate_name(g)) {
            Some(h) => recovered.gate(h).cell == original.gate(g).cell && fanin_names(original, g) == fanin_names(recovered, h),
            None => false,
        })
        .count();
    ok as f64 / original.num_gates() as f64
}

/// Mean fraction of frame outputs that differ between the two netlists over
/// `patterns` uniformly random input patterns. Chunks are seeded by index,
/// so the value does not depend on the thread count.
pub fn hd(original: &Netlist, recovered: &Netlist, patterns: usize, seed: u64) -> Result<f64, MetricsError> {
    let in_a = original.frame_input_names();
    let in_b: HashMap<String, usize> = recovered
        .frame_input_names()
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    let b_in: Vec<usize> = in_a
        .iter()
        .map(|s| in_b.get(s).copied().ok_or_else(|| MetricsError::MissingInput(s.clone())))
        .collect::<Result<_, _>>()?;
    let out_a: Vec<String> = original.frame_outputs().into_iter().map(|(s, _)| s).collect();
    let out_b: HashMap<String, usize> = recovered
        .frame_outputs()
        .into_iter()
        .enumerate()
        .map(|(i, (s, _))| (s, i))
        .collect();
    let b_out: Vec<usize> = out_a
        .iter()
        .map(|s| out_b.get(s).copied().ok_or_else(|| MetricsError::MissingOutput(s.clone())))
        .collect::<Result<_, _>>()?;
    if patterns == 0 || out_a.is_empty() {
        return Ok(0.0);
    }
    const CHUNK: usize = 8192;
    let chunks = patterns.div_ceil(CHUNK);
    let diff_bits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<u64, MetricsError> {
            let count = CHUNK.min(patterns - c * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let block = PatternBlock::random(in_a.len(), count, &mut rng);
            let mut lanes = vec![Vec::new(); block.num_lanes()];
            for (i, &j) in b_in.iter().enumerate() {
                lanes[j] = block.lane(i).to_vec();
            }
            let oa = simulate(original, &block)?;
            let ob = simulate(recovered, &PatternBlock::new(count, lanes))?;
            let mut bits = 0u64;
            for (k, &j) in b_out.iter().enumerate() {
                for w in 0..block.words() {
                    bits += ((oa.lane(k)[w] ^ ob.lane(j)[w]) & block.word_mask(w)).count_ones() as u64;
                }
            }
            Ok(bits)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(diff_bits as f64 / (patterns as f64 * out_a.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
    pub mean: f64,
}

impl Histogram {
    /// Equal-width bins over `[0, 1]`; the last bin is closed.
    pub fn unit(values: &[f64], bins: usize) -> Result<Histogram, MetricsError> {
        if bins == 0 {
            return Err(MetricsError::NoBins);
        }
        let mut counts = vec![0usize; bins];
        for &v in values {
            let k = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        Ok(Histogram {
            bins: counts
                .into_iter()
                .enumerate()
                .map(|(k, count)| HistogramBin {
                    bin_lo: k as f64 / bins as f64,
                    bin_hi: (k + 1) as f64 / bins as f64,
                    count,
                })
                .collect(),
            mean,
        })
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for b in &self.bins {
            s.push_str(&format!("{},{},{}\n", b.bin_lo, b.bin_hi, b.count));
        }
        s
    }
}

/// Histogram of true-port to randomized-port distances, normalized by the
/// grid diagonal.
pub fn f2f_distance_distribution(plan: &F2FPlan, bins: usize) -> Result<Histogram, MetricsError> {
    Histogram::unit(&plan.normalized_distances(), bins)
}

/// Scores for one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub ccr: f64,
    pub pnr: f64,
    pub hd: f64,
    pub hd_patterns: usize,
    pub ports: usize,
    pub acyclic: bool,
}

pub fn score(
    original: &Netlist,
    recovered: &Netlist,
    guess: &[usize],
    truth: &[usize],
    hd_patterns: usize,
    seed: u64,
) -> Result<ScoreReport, MetricsError> {
    Ok(ScoreReport {
        ccr: ccr(guess, truth)?,
        pnr: pnr(original, recovered),
        hd: hd(original, recovered, hd_patterns, seed)?,
        hd_patterns,
        ports: truth.len(),
        acyclic: recovered.is_acyclic(),
    })
}
