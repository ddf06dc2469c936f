use rand::Rng;

use super::{Netlist, NetlistError};

/// Packed simulation patterns: one lane per signal, 64 patterns per word.
/// Bits past `count` in the last word are kept at zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternBlock {
    count: usize,
    lanes: Vec<Vec<u64>>,
}

#[inline]
fn words_for(count: usize) -> usize {
    count.div_ceil(64)
}

fn tail_mask(count: usize) -> u64 {
    match count % 64 {
        0 => !0,
        r => (1u64 << r) - 1,
    }
}

impl PatternBlock {
    pub fn new(count: usize, mut lanes: Vec<Vec<u64>>) -> Self {
        let words = words_for(count);
        for lane in &mut lanes {
            lane.resize(words, 0);
            if let Some(last) = lane.last_mut() {
                *last &= tail_mask(count);
            }
        }
        PatternBlock { count, lanes }
    }

    pub fn zeros(lanes: usize, count: usize) -> Self {
        PatternBlock::new(count, vec![vec![0; words_for(count)]; lanes])
    }

    pub fn random<R: Rng + ?Sized>(lanes: usize, count: usize, rng: &mut R) -> Self {
        let words = words_for(count);
        let lanes = (0..lanes)
            .map(|_| (0..words).map(|_| rng.gen::<u64>()).collect())
            .collect();
        PatternBlock::new(count, lanes)
    }

    /// All 2^inputs assignments; pattern `p` sets lane `i` to bit `i` of `p`.
    pub fn exhaustive(inputs: usize) -> Self {
        Self::exhaustive_range(inputs, 0, 1usize << inputs)
    }

    /// Assignments `start..start+count` of the exhaustive enumeration;
    /// `start` must be a multiple of 64.
    pub fn exhaustive_range(inputs: usize, start: usize, count: usize) -> Self {
        debug_assert_eq!(start % 64, 0);
        const LOW: [u64; 6] = [
            0xAAAA_AAAA_AAAA_AAAA,
            0xCCCC_CCCC_CCCC_CCCC,
            0xF0F0_F0F0_F0F0_F0F0,
            0xFF00_FF00_FF00_FF00,
            0xFFFF_0000_FFFF_0000,
            0xFFFF_FFFF_0000_0000,
        ];
        let words = words_for(count);
        let lanes = (0..inputs)
            .map(|i| {
                (0..words)
                    .map(|w| {
                        if i < 6 {
                            LOW[i]
                        } else {
                            let word_index = start / 64 + w;
                            if (word_index >> (i - 6)) & 1 == 1 {
                                !0
                            } else {
                                0
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        PatternBlock::new(count, lanes)
    }

    /// One row per pattern, one column per lane.
    pub fn from_patterns(patterns: &[Vec<bool>], lanes: usize) -> Self {
        let count = patterns.len();
        let mut data = vec![vec![0u64; words_for(count)]; lanes];
        for (p, row) in patterns.iter().enumerate() {
            for (l, &bit) in row.iter().enumerate().take(lanes) {
                if bit {
                    data[l][p / 64] |= 1 << (p % 64);
                }
            }
        }
        PatternBlock::new(count, data)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn num_lanes(&self) -> usize {
        self.lanes.len()
    }

    pub fn words(&self) -> usize {
        words_for(self.count)
    }

    pub fn lane(&self, i: usize) -> &[u64] {
        &self.lanes[i]
    }

    pub fn lanes(&self) -> &[Vec<u64>] {
        &self.lanes
    }

    pub fn get(&self, lane: usize, pattern: usize) -> bool {
        (self.lanes[lane][pattern / 64] >> (pattern % 64)) & 1 == 1
    }

    pub fn pattern(&self, p: usize) -> Vec<bool> {
        (0..self.lanes.len()).map(|l| self.get(l, p)).collect()
    }

    /// Mask with a one for every valid pattern bit of word `w`.
    pub fn word_mask(&self, w: usize) -> u64 {
        if w + 1 == self.words() {
            tail_mask(self.count)
        } else {
            !0
        }
    }
}

/// Simulates every net; returns a block with one lane per net, indexed by
/// [`super::NetId`]. Input lanes follow [`Netlist::frame_inputs`].
pub fn simulate_nets(n: &Netlist, inputs: &PatternBlock) -> Result<PatternBlock, NetlistError> {
    let frame = n.frame_inputs();
    if inputs.num_lanes() != frame.len() {
        return Err(NetlistError::LaneMismatch {
            expected: frame.len(),
            got: inputs.num_lanes(),
        });
    }
    let words = inputs.words();
    let mut vals = vec![0u64; n.num_nets() * words];
    for (lane, net) in frame.iter().enumerate() {
        vals[net.index() * words..(net.index() + 1) * words].copy_from_slice(inputs.lane(lane));
    }
    eval_flat(n, &mut vals, words);
    let lanes = if words == 0 {
        vec![Vec::new(); n.num_nets()]
    } else {
        vals.chunks(words).map(|c| c.to_vec()).collect()
    };
    Ok(PatternBlock::new(inputs.count(), lanes))
}

/// Evaluates combinational gates over a net-major value buffer in place.
pub(crate) fn eval_flat(n: &Netlist, vals: &mut [u64], words: usize) {
    for &g in n.eval_order() {
        let gate = n.gate(g);
        let out = gate.output.index() * words;
        for w in 0..words {
            let v = gate
                .cell
                .kind
                .eval_word(gate.fanins.iter().map(|f| vals[f.index() * words + w]));
            vals[out + w] = v;
        }
    }
}

/// Simulates the combinational frame; output lanes follow
/// [`Netlist::frame_outputs`].
pub fn simulate(n: &Netlist, inputs: &PatternBlock) -> Result<PatternBlock, NetlistError> {
    let all = simulate_nets(n, inputs)?;
    let lanes = n
        .frame_outputs()
        .into_iter()
        .map(|(_, net)| all.lane(net.index()).to_vec())
        .collect();
    Ok(PatternBlock::new(inputs.count(), lanes))
}
