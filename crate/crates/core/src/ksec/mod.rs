//! Trojan-insertion resistance: vulnerability scoring, structure templates,
//! instance mining, rewriting, wire lifting and k-security levels.

mod level;
mod mine;
mod rewrite;
mod template;

pub use level::{
    boundary_nets, candidate_counts_exact, candidate_counts_upper, lift_wires, security_level, type_count_bound,
    ExposedGraph, GateCandidates, KMode, KSecurityReport, LevelParams, LiftParams, TemplateTierCount, TierLevel,
    DEFAULT_SEARCH_BUDGET, EXACT_GUARD,
};
pub use mine::{check_match, coverage, enumerate_matches, mine_excluding, mine_structures, Instance, StructureInstances};
pub use rewrite::{rewrite_iterate, IterationCensus, RewriteOutcome};
pub use template::{
    default_templates, parse_templates, PinSource, StructureTemplate, TemplateNode, DEFAULT_TEMPLATES,
    MAX_TEMPLATE_NODES,
};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{simulate_nets, GateId, Netlist, NetlistBuilder, NetlistError, PatternBlock};
use crate::partition::{PartitionError, Tier, TierAssignment};

pub const DEFAULT_FRACTION: f64 = 0.10;
pub const DEFAULT_VULN_PATTERNS: usize = 4096;

#[derive(Debug, Error)]
pub enum KsecError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("template file line {line}: {msg}")]
    Template { line: usize, msg: String },
    #[error("no gates selected")]
    NoSelection,
    #[error("exact mode refuses {gates} gates (limit {limit}); use refine mode")]
    TooLarge { gates: usize, limit: usize },
    #[error("embedding search budget exhausted")]
    SearchBudget,
    #[error("rewrite iteration {iteration} changed the design's function")]
    EquivalenceViolation { iteration: usize },
    #[error("instances disturbed: {0}")]
    BrokenInstances(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVulnerability {
    pub gate: String,
    /// Probability that the output is 1.
    pub p1: f64,
    /// Fraction of patterns on which flipping the output flips some frame
    /// output.
    pub observability: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityReport {
    pub gates: Vec<GateVulnerability>,
    /// Most vulnerable first.
    pub selected: Vec<GateId>,
    pub fraction: f64,
    pub patterns: usize,
    pub seed: u64,
}

/// Rarity of a signal with `P(1) = p1`: 0 when balanced, 1 when constant.
pub fn rarity(p1: f64) -> f64 {
    1.0 - 2.0 * p1.min(1.0 - p1)
}

/// Scores each gate by rarity × unobservability on one seeded pattern set
/// and selects the top `round(fraction · gates)` (ties: lower gate id).
pub fn vulnerability_score(n: &Netlist, patterns: usize, fraction: f64, seed: u64) -> Result<VulnerabilityReport, KsecError> {
    let frame = n.frame_inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = PatternBlock::random(frame.len(), patterns.max(1), &mut rng);
    let base = simulate_nets(n, &block)?;
    let words = block.words();
    let count = block.count() as f64;
    let masks: Vec<u64> = (0..words).map(|w| block.word_mask(w)).collect();
    let flat: Vec<u64> = base.lanes().iter().flatten().copied().collect();
    let outs: Vec<usize> = n.frame_outputs().iter().map(|(_, x)| x.index()).collect();
    let order = n.eval_order();
    let gates: Vec<GateVulnerability> = n
        .gate_ids()
        .collect::<Vec<_>>()
        .par_iter()
        .map_init(
            || (flat.clone(), vec![false; n.num_nets()]),
            |(vals, dirty), &g| {
                let out = n.gate(g).output.index();
                let ones: u64 = base.lane(out).iter().map(|x| x.count_ones() as u64).sum();
                let p1 = ones as f64 / count;
                let mut touched = vec![out];
                dirty[out] = true;
                for w in 0..words {
                    vals[out * words + w] ^= masks[w];
                }
                for &h in order {
                    let gate = n.gate(h);
                    if h == g || !gate.fanins.iter().any(|f| dirty[f.index()]) {
                        continue;
                    }
                    let o = gate.output.index();
                    let mut changed = false;
                    for w in 0..words {
                        let v = gate.cell.kind.eval_word(gate.fanins.iter().map(|f| vals[f.index() * words + w])) & masks[w];
                        changed |= v != vals[o * words + w];
                        vals[o * words + w] = v;
                    }
                    if changed && !dirty[o] {
                        dirty[o] = true;
                        touched.push(o);
                    }
                }
                let mut seen = 0u64;
                for w in 0..words {
                    let mut d = 0u64;
                    for &o in &outs {
                        d |= vals[o * words + w] ^ flat[o * words + w];
                    }
                    seen += (d & masks[w]).count_ones() as u64;
                }
                for t in touched {
                    dirty[t] = false;
                    vals[t * words..(t + 1) * words].copy_from_slice(&flat[t * words..(t + 1) * words]);
                }
                let observability = seen as f64 / count;
                GateVulnerability {
                    gate: n.gate_name(g).to_string(),
                    p1,
                    observability,
                    score: rarity(p1) * (1.0 - observability),
                }
            },
        )
        .collect();
    let take = (fraction * n.num_gates() as f64).round() as usize;
    let mut ranked: Vec<GateId> = n.gate_ids().collect();
    ranked.sort_by(|a, b| gates[b.index()].score.total_cmp(&gates[a.index()].score).then(a.cmp(b)));
    ranked.truncate(take.min(n.num_gates()));
    Ok(VulnerabilityReport {
        gates,
        selected: ranked,
        fraction,
        patterns: block.count(),
        seed,
    })
}

/// Per-tier instance counts for the templates that occur at all, and
/// k₃d = (fewest bottom instances) + (fewest top instances).
pub fn tier_level(instances: &StructureInstances, assignment: &TierAssignment) -> TierLevel {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut split = 0;
    for inst in &instances.instances {
        let e = counts.entry(inst.template.clone()).or_insert((0, 0));
        let tiers: Vec<Tier> = inst.nodes.iter().map(|g| assignment.tier(*g)).collect();
        if tiers.iter().all(|t| *t == Tier::Bottom) {
            e.0 += 1;
        } else if tiers.iter().all(|t| *t == Tier::Top) {
            e.1 += 1;
        } else {
            split += 1;
        }
    }
    let counts: Vec<TemplateTierCount> = counts
        .into_iter()
        .map(|(template, (bottom, top))| TemplateTierCount { template, bottom, top })
        .collect();
    let k_3d = counts.iter().map(|c| c.bottom).min().unwrap_or(0) + counts.iter().map(|c| c.top).min().unwrap_or(0);
    TierLevel { counts, split, k_3d }
}

/// Monte Carlo adversary: picks a random selected gate, then a uniform
/// member of its candidate set; a hit is picking the true gate.
pub fn ht_success_probability(report: &KSecurityReport, trials: usize, seed: u64) -> f64 {
    let counts = report.candidate_counts();
    if counts.is_empty() || trials == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..trials)
        .filter(|_| {
            let k = counts[rng.gen_range(0..counts.len())].max(1);
            rng.gen_range(0..k) == 0
        })
        .count();
    hits as f64 / trials as f64
}

/// `copies` disjoint copies of `template`, each with its own inputs and its
/// outputs as primary outputs. Gate `c<i>_<node>` is node `node` of copy `i`.
pub fn replicate_template(template: &StructureTemplate, copies: usize) -> Netlist {
    let mut b = NetlistBuilder::new(format!("sym_{}_{copies}", template.id));
    for i in 0..copies {
        for x in &template.boundary {
            b.add_input(&format!("c{i}_{x}"));
        }
        for node in &template.nodes {
            let fanins: Vec<String> = node
                .pins
                .iter()
                .map(|p| match p {
                    PinSource::Node(j) => format!("c{i}_{}", template.nodes[*j].name),
                    PinSource::Boundary(x) => format!("c{i}_{}", template.boundary[*x]),
                })
                .collect();
            let refs: Vec<&str> = fanins.iter().map(String::as_str).collect();
            b.add_gate(&format!("c{i}_{}", node.name), node.cell, &refs);
        }
        for &o in &template.outputs {
            b.add_output(&format!("c{i}_{}", template.nodes[o].name));
        }
    }
    b.build().expect("templates are acyclic")
}
