use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{simulate, Netlist, NetlistError, PatternBlock};
use crate::sat::{CircuitEncoder, Lit, SolveResult, Solver};

/// Largest frame-input count accepted by [`EquivMode::Exhaustive`].
pub const EXHAUSTIVE_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivMode {
    /// Full truth-table enumeration; sound and complete.
    Exhaustive,
    /// Seeded random patterns; can only refute.
    Random { patterns: usize, seed: u64 },
    /// Miter solved by the internal SAT engine; `None` budget = unlimited.
    Sat { conflict_budget: Option<u64> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    /// Frame-input assignment, in `a`'s frame-input order.
    pub inputs: Vec<(String, bool)>,
    /// First frame output that differs.
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Equivalent,
    Counterexample(Counterexample),
    Unknown,
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent)
    }
}

/// For each frame input / output of `a`, the position of the same name in `b`.
struct Alignment {
    inputs: Vec<String>,
    b_input_pos: Vec<usize>,
    outputs: Vec<String>,
    b_output_pos: Vec<usize>,
}

fn align(a: &Netlist, b: &Netlist) -> Result<Alignment, NetlistError> {
    fn positions(left: &[String], right: &[String], what: &str) -> Result<Vec<usize>, NetlistError> {
        if left.len() != right.len() {
            return Err(NetlistError::InterfaceMismatch(format!(
                "{} {what}s vs {}",
                left.len(),
                right.len()
            )));
        }
        let index: std::collections::HashMap<&str, usize> =
            right.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        left.iter()
            .map(|name| {
                index
                    .get(name.as_str())
                    .copied()
                    .ok_or_else(|| NetlistError::InterfaceMismatch(format!("{what} `{name}` missing")))
            })
            .collect()
    }
    let inputs = a.frame_input_names();
    let outputs: Vec<String> = a.frame_outputs().into_iter().map(|(n, _)| n).collect();
    let b_outputs: Vec<String> = b.frame_outputs().into_iter().map(|(n, _)| n).collect();
    Ok(Alignment {
        b_input_pos: positions(&inputs, &b.frame_input_names(), "input")?,
        b_output_pos: positions(&outputs, &b_outputs, "output")?,
        inputs,
        outputs,
    })
}

/// Compares one pattern block; returns the first differing (pattern, output).
fn compare_block(a: &Netlist, b: &Netlist, al: &Alignment, block: &PatternBlock) -> Result<Option<(usize, usize)>, NetlistError> {
    let mut b_lanes = vec![Vec::new(); block.num_lanes()];
    for (i, &j) in al.b_input_pos.iter().enumerate() {
        b_lanes[j] = block.lane(i).to_vec();
    }
    let b_block = PatternBlock::new(block.count(), b_lanes);
    let oa = simulate(a, block)?;
    let ob = simulate(b, &b_block)?;
    let mut best: Option<(usize, usize)> = None;
    for w in 0..block.words() {
        for (k, &j) in al.b_output_pos.iter().enumerate() {
            let diff = (oa.lane(k)[w] ^ ob.lane(j)[w]) & block.word_mask(w);
            if diff != 0 {
                let p = w * 64 + diff.trailing_zeros() as usize;
                if best.is_none_or(|(bp, _)| p < bp) {
                    best = Some((p, k));
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    Ok(best)
}

fn cex_from_block(al: &Alignment, block: &PatternBlock, p: usize, k: usize) -> Counterexample {
    Counterexample {
        inputs: al
            .inputs
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), block.get(i, p)))
            .collect(),
        output: al.outputs[k].clone(),
    }
}

/// Checks functional equivalence of the combinational frames of `a` and `b`,
/// matching inputs and outputs by name.
pub fn check_equivalence(a: &Netlist, b: &Netlist, mode: EquivMode) -> Result<Verdict, NetlistError> {
    let al = align(a, b)?;
    let ni = al.inputs.len();
    match mode {
        EquivMode::Exhaustive => {
            if ni > EXHAUSTIVE_LIMIT {
                return Err(NetlistError::TooManyInputs {
                    max: EXHAUSTIVE_LIMIT,
                    got: ni,
                });
            }
            let total = 1usize << ni;
            const CHUNK: usize = 1 << 14;
            let mut start = 0;
            while start < total {
                let count = CHUNK.min(total - start);
                let block = PatternBlock::exhaustive_range(ni, start, count);
                if let Some((p, k)) = compare_block(a, b, &al, &block)? {
                    return Ok(Verdict::Counterexample(cex_from_block(&al, &block, p, k)));
                }
                start += count;
            }
            Ok(Verdict::Equivalent)
        }
        EquivMode::Random { patterns, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            const CHUNK: usize = 1 << 13;
            let mut done = 0;
            while done < patterns {
                let count = CHUNK.min(patterns - done);
                let block = PatternBlock::random(ni, count, &mut rng);
                if let Some((p, k)) = compare_block(a, b, &al, &block)? {
                    return Ok(Verdict::Counterexample(cex_from_block(&al, &block, p, k)));
                }
                done += count;
            }
            Ok(Verdict::Unknown)
        }
        EquivMode::Sat { conflict_budget } => {
            let mut s = Solver::new();
            let mut enc = CircuitEncoder::new();
            let ins: Vec<Lit> = (0..ni).map(|_| Lit::pos(s.new_var())).collect();
            let mut b_ins = vec![ins[0]; ni];
            for (i, &j) in al.b_input_pos.iter().enumerate() {
                b_ins[j] = ins[i];
            }
            let la = enc.encode(&mut s, a, &ins);
            let lb = enc.encode(&mut s, b, if ni == 0 { &[] } else { &b_ins });
            let fa = a.frame_outputs();
            let fb = b.frame_outputs();
            let diffs: Vec<Lit> = al
                .b_output_pos
                .iter()
                .enumerate()
                .map(|(k, &j)| enc.xor(&mut s, la[fa[k].1.index()], lb[fb[j].1.index()]))
                .collect();
            let miter = enc.or(&mut s, &diffs);
            match s.solve_limited(&[miter], conflict_budget) {
                SolveResult::Unsat => Ok(Verdict::Equivalent),
                SolveResult::Unknown => Ok(Verdict::Unknown),
                SolveResult::Sat => {
                    let values: Vec<bool> = ins.iter().map(|&l| s.lit_model_value(l)).collect();
                    let k = diffs
                        .iter()
                        .position(|&d| s.lit_model_value(d))
                        .expect("miter output is set");
                    let block = PatternBlock::from_patterns(&[values], ni);
                    Ok(Verdict::Counterexample(cex_from_block(&al, &block, 0, k)))
                }
            }
        }
    }
}
