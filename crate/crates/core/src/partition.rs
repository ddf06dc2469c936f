//! Two-tier partitioning strategies and cut-set computation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{sta_unit_delay, GateId, NetId, Netlist, NetlistError, Timing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    Bottom,
    Top,
}

impl Tier {
    pub fn other(self) -> Tier {
        match self {
            Tier::Bottom => Tier::Top,
            Tier::Top => Tier::Bottom,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn from_bit(b: bool) -> Tier {
        if b {
            Tier::Top
        } else {
            Tier::Bottom
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Bottom => "bottom",
            Tier::Top => "top",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    MaxCut,
    TimingAware,
    Hierarchical,
    HtAware,
}

impl Strategy {
    pub fn tag(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::MaxCut => "max_cut",
            Strategy::TimingAware => "timing_aware",
            Strategy::Hierarchical => "hierarchical",
            Strategy::HtAware => "ht_aware",
        }
    }

    pub fn from_tag(s: &str) -> Option<Strategy> {
        [
            Strategy::Random,
            Strategy::MaxCut,
            Strategy::TimingAware,
            Strategy::Hierarchical,
            Strategy::HtAware,
        ]
        .into_iter()
        .find(|st| st.tag() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierAssignment {
    pub tiers: Vec<Tier>,
    pub strategy: Strategy,
    pub seed: u64,
    /// Final slack threshold (timing-aware strategies).
    pub threshold: Option<u32>,
    /// Fallbacks and demoted constraints, in the order they occurred.
    pub notes: Vec<String>,
}

impl TierAssignment {
    fn new(tiers: Vec<Tier>, strategy: Strategy, seed: u64) -> Self {
        TierAssignment {
            tiers,
            strategy,
            seed,
            threshold: None,
            notes: Vec::new(),
        }
    }

    pub fn tier(&self, g: GateId) -> Tier {
        self.tiers[g.index()]
    }

    pub fn count(&self, t: Tier) -> usize {
        self.tiers.iter().filter(|&&x| x == t).count()
    }

    pub fn gates_on(&self, t: Tier) -> impl Iterator<Item = GateId> + '_ {
        self.tiers
            .iter()
            .enumerate()
            .filter(move |(_, &x)| x == t)
            .map(|(i, _)| GateId(i as u32))
    }

    /// `gate_id,tier` lines with a header.
    pub fn to_csv(&self, n: &Netlist) -> String {
        let mut s = String::from("gate_id,tier\n");
        for g in n.gate_ids() {
            s.push_str(&format!("{},{}\n", n.gate_name(g), self.tier(g)));
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("hierarchical partitioning needs `/`-separated gate names; netlist is flat")]
    FlatNetlist,
    #[error("move fraction {0} outside [0, 1]")]
    BadFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CutSet {
    pub nets: Vec<NetId>,
}

impl CutSet {
    pub fn size(&self) -> usize {
        self.nets.len()
    }
}

/// Nets whose driver tier differs from at least one sink tier. Nets driven
/// by primary inputs are never cut.
pub fn cut_set(n: &Netlist, a: &TierAssignment) -> CutSet {
    let nets = (0..n.num_nets() as u32)
        .map(NetId)
        .filter(|&net| match n.net(net).driver {
            Some(d) => n.fanouts(net).iter().any(|s| a.tier(s.gate) != a.tier(d)),
            None => false,
        })
        .collect();
    CutSet { nets }
}

pub fn partition_random(n: &Netlist, move_fraction: f64, seed: u64) -> Result<TierAssignment, PartitionError> {
    if !(0.0..=1.0).contains(&move_fraction) {
        return Err(PartitionError::BadFraction(move_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<usize> = (0..n.num_gates()).collect();
    ids.shuffle(&mut rng);
    let k = (move_fraction * n.num_gates() as f64).round() as usize;
    let mut tiers = vec![Tier::Bottom; n.num_gates()];
    for &i in &ids[..k] {
        tiers[i] = Tier::Top;
    }
    Ok(TierAssignment::new(tiers, Strategy::Random, seed))
}

fn comb_fanin_drivers<'a>(n: &'a Netlist, g: GateId) -> impl Iterator<Item = GateId> + 'a {
    n.gate(g)
        .fanins
        .iter()
        .filter_map(|&f| n.net(f).driver)
        .filter(|&d| !n.gate(d).cell.is_sequential())
}

fn is_endpoint(n: &Netlist, g: GateId) -> bool {
    let out = n.gate(g).output;
    n.is_output(out)
        || n.fanouts(out).is_empty()
        || n.fanouts(out).iter().any(|s| n.gate(s.gate).cell.is_sequential())
}

/// Longest path ending at `end`, listed from its start point: each step goes
/// to the fanin driver with the largest arrival (lowest id on ties).
fn trace_back(n: &Netlist, t: &Timing, end: GateId) -> Vec<GateId> {
    let mut path = vec![end];
    let mut g = end;
    if n.gate(g).cell.is_sequential() {
        return path;
    }
    while let Some(d) = comb_fanin_drivers(n, g).max_by_key(|d| (t.arrival[d.index()], std::cmp::Reverse(d.0))) {
        path.push(d);
        g = d;
    }
    path.reverse();
    path
}

/// Timing paths ordered by decreasing length (endpoint id breaks ties).
fn timing_paths(n: &Netlist, t: &Timing) -> Vec<Vec<GateId>> {
    let mut ends: Vec<GateId> = n
        .gate_ids()
        .filter(|&g| !n.gate(g).cell.is_sequential() && is_endpoint(n, g))
        .collect();
    ends.sort_by_key(|g| (std::cmp::Reverse(t.arrival[g.index()]), g.0));
    ends.into_iter().map(|e| trace_back(n, t, e)).collect()
}

pub fn partition_max_cut(n: &Netlist, seed: u64) -> Result<TierAssignment, PartitionError> {
    let t = sta_unit_delay(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tiers: Vec<Option<Tier>> = vec![None; n.num_gates()];
    for path in timing_paths(n, &t) {
        let mut prev: Option<Tier> = None;
        let phase = Tier::from_bit(rng.gen());
        for g in path {
            let tier = match tiers[g.index()] {
                Some(x) => x,
                None => {
                    let x = prev.map_or(phase, Tier::other);
                    tiers[g.index()] = Some(x);
                    x
                }
            };
            prev = Some(tier);
        }
    }
    // Gates not on any traced path (and DFFs) go opposite to their latest
    // arriving driver.
    let order: Vec<GateId> = n.dffs().chain(n.eval_order().iter().copied()).collect();
    for g in order {
        if tiers[g.index()].is_some() {
            continue;
        }
        let drv = n
            .gate(g)
            .fanins
            .iter()
            .filter_map(|&f| n.net(f).driver)
            .max_by_key(|d| (t.arrival[d.index()], std::cmp::Reverse(d.0)));
        tiers[g.index()] = Some(match drv.and_then(|d| tiers[d.index()]) {
            Some(x) => x.other(),
            None => Tier::from_bit(rng.gen()),
        });
    }
    let tiers = tiers.into_iter().map(|x| x.unwrap()).collect();
    Ok(TierAssignment::new(tiers, Strategy::MaxCut, seed))
}

/// Default balance tolerance, as a fraction of the gate count.
pub const DEFAULT_BALANCE: f64 = 0.02;

fn balanced(top: usize, total: usize, eps: f64) -> bool {
    let diff = (2 * top).abs_diff(total);
    diff as f64 <= (eps * total as f64).max((total % 2) as f64)
}

/// Gates with slack below the threshold stay on the bottom tier; the rest
/// move up. The threshold is searched over the distinct slack values for
/// the best balance; if no threshold balances within `eps`, the boundary
/// slack class is filled greedily by cut increase (ties in seeded order)
/// and the fallback is recorded.
pub fn partition_timing_aware(
    n: &Netlist,
    slack_threshold: Option<u32>,
    eps: f64,
    seed: u64,
) -> Result<TierAssignment, PartitionError> {
    let t = sta_unit_delay(n)?;
    let total = n.num_gates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top_at = |th: u32| t.slack.iter().filter(|&&s| s >= th).count();
    let mut tiers = vec![Tier::Bottom; total];
    let mut notes = Vec::new();

    let chosen = match slack_threshold {
        Some(th) if balanced(top_at(th), total, eps) => Some(th),
        _ => {
            let distinct: BTreeSet<u32> = t.slack.iter().copied().collect();
            distinct
                .iter()
                .copied()
                .filter(|&th| balanced(top_at(th), total, eps))
                .min_by_key(|&th| ((2 * top_at(th)).abs_diff(total), std::cmp::Reverse(th)))
        }
    };
    let threshold = match chosen {
        Some(th) => {
            for (i, &s) in t.slack.iter().enumerate() {
                if s >= th {
                    tiers[i] = Tier::Top;
                }
            }
            th
        }
        None => {
            // Largest threshold whose strictly-above class still fits in the
            // target; split the boundary class at random.
            let target = total / 2;
            let distinct: BTreeSet<u32> = t.slack.iter().copied().collect();
            let th = distinct
                .iter()
                .copied()
                .find(|&th| t.slack.iter().filter(|&&s| s > th).count() <= target)
                .unwrap_or(0);
            let mut boundary = Vec::new();
            let mut top = 0;
            for (i, &s) in t.slack.iter().enumerate() {
                if s > th {
                    tiers[i] = Tier::Top;
                    top += 1;
                } else if s == th {
                    boundary.push(i);
                }
            }
            boundary.shuffle(&mut rng);
            fill_min_cut(n, &mut tiers, &boundary, target.saturating_sub(top));
            notes.push(format!(
                "no slack threshold balances within {eps}; split {} gates of slack {th} by cut",
                boundary.len()
            ));
            th
        }
    };
    let mut a = TierAssignment::new(tiers, Strategy::TimingAware, seed);
    a.threshold = Some(threshold);
    a.notes = notes;
    Ok(a)
}

fn net_cut(n: &Netlist, tiers: &[Tier], net: NetId) -> bool {
    match n.net(net).driver {
        Some(d) => n.fanouts(net).iter().any(|s| tiers[s.gate.index()] != tiers[d.index()]),
        None => false,
    }
}

/// Moves `take` of the `pool` gates to the top tier one at a time, each
/// time the one adding the fewest cut nets; ties go to the earlier gate in
/// `pool`.
fn fill_min_cut(n: &Netlist, tiers: &mut [Tier], pool: &[usize], take: usize) {
    let nets_of = |g: usize| -> Vec<NetId> {
        let gate = n.gate(GateId(g as u32));
        let mut v: Vec<NetId> = gate.fanins.clone();
        v.push(gate.output);
        v.sort();
        v.dedup();
        v
    };
    let mut left: Vec<usize> = pool.to_vec();
    for _ in 0..take.min(pool.len()) {
        let (pos, _) = left
            .iter()
            .enumerate()
            .map(|(pos, &g)| {
                let nets = nets_of(g);
                let before = nets.iter().filter(|&&x| net_cut(n, tiers, x)).count() as i64;
                tiers[g] = Tier::Top;
                let after = nets.iter().filter(|&&x| net_cut(n, tiers, x)).count() as i64;
                tiers[g] = Tier::Bottom;
                (pos, after - before)
            })
            .min_by_key(|&(pos, d)| (d, pos))
            .expect("pool not exhausted");
        tiers[left.remove(pos)] = Tier::Top;
    }
}

/// Module of each gate: the first `/`-separated component of its name.
/// Gates without a `/` belong to the top-level module `""`.
pub fn module_map(n: &Netlist) -> Vec<String> {
    n.gate_ids()
        .map(|g| {
            let name = n.gate_name(g);
            name.split_once('/').map(|(m, _)| m.to_string()).unwrap_or_default()
        })
        .collect()
}

/// Modules are kept whole. Up to 16 modules the inter-module max-cut is
/// found exhaustively (ties broken by gate balance); larger designs use a
/// greedy pass over module pairs by decreasing connectivity.
pub fn partition_hierarchical(n: &Netlist, eps: f64, seed: u64) -> Result<TierAssignment, PartitionError> {
    if n.gate_ids().all(|g| !n.gate_name(g).contains('/')) {
        return Err(PartitionError::FlatNetlist);
    }
    let map = module_map(n);
    let names: Vec<String> = map.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let module_of: Vec<usize> = map.iter().map(|m| index[m.as_str()]).collect();
    if names.len() == 1 {
        let mut a = partition_timing_aware(n, None, eps, seed)?;
        a.strategy = Strategy::Hierarchical;
        a.notes.insert(0, "single module: fell back to timing-aware partitioning".into());
        return Ok(a);
    }
    let m = names.len();
    let mut size = vec![0usize; m];
    for &k in &module_of {
        size[k] += 1;
    }
    // Each net counts once per (driver module, sink module) pair.
    let mut w = vec![vec![0u64; m]; m];
    for net in 0..n.num_nets() as u32 {
        let Some(d) = n.net(NetId(net)).driver else { continue };
        let dm = module_of[d.index()];
        let sinks: BTreeSet<usize> = n
            .fanouts(NetId(net))
            .iter()
            .map(|s| module_of[s.gate.index()])
            .filter(|&sm| sm != dm)
            .collect();
        for sm in sinks {
            w[dm][sm] += 1;
            w[sm][dm] += 1;
        }
    }
    let side = module_bipartition(&w, &size);
    let tiers = module_of.iter().map(|&k| Tier::from_bit(side[k])).collect();
    Ok(TierAssignment::new(tiers, Strategy::Hierarchical, seed))
}

/// Side (`true` = top) per module maximizing cut weight.
pub fn module_bipartition(w: &[Vec<u64>], size: &[usize]) -> Vec<bool> {
    let m = w.len();
    let total: usize = size.iter().sum();
    let eval = |side: &[bool]| -> (u64, usize) {
        let mut cut = 0;
        for i in 0..m {
            for j in i + 1..m {
                if side[i] != side[j] {
                    cut += w[i][j];
                }
            }
        }
        let top: usize = (0..m).filter(|&i| side[i]).map(|i| size[i]).sum();
        (cut, (2 * top).abs_diff(total))
    };
    if m <= 16 {
        // Module 0 fixed at bottom removes mirror duplicates.
        let mut best: Option<(u64, usize, u32)> = None;
        for mask in 0..1u32 << (m - 1) {
            let side: Vec<bool> = (0..m).map(|i| i > 0 && (mask >> (i - 1)) & 1 == 1).collect();
            let (cut, imb) = eval(&side);
            let better = match best {
                None => true,
                Some((bc, bi, _)) => cut > bc || (cut == bc && imb < bi),
            };
            if better {
                best = Some((cut, imb, mask));
            }
        }
        let mask = best.unwrap().2;
        return (0..m).map(|i| i > 0 && (mask >> (i - 1)) & 1 == 1).collect();
    }
    let mut pairs: Vec<(u64, usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| (w[i][j], i, j))
        .filter(|p| p.0 > 0)
        .collect();
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut side: Vec<Option<bool>> = vec![None; m];
    let mut load = [0usize; 2];
    let put = |k: usize, s: bool, side: &mut Vec<Option<bool>>, load: &mut [usize; 2]| {
        side[k] = Some(s);
        load[s as usize] += size[k];
    };
    for (_, i, j) in pairs {
        match (side[i], side[j]) {
            (None, None) => {
                let s = load[1] > load[0];
                put(i, !s, &mut side, &mut load);
                put(j, s, &mut side, &mut load);
            }
            (Some(si), None) => put(j, !si, &mut side, &mut load),
            (None, Some(sj)) => put(i, !sj, &mut side, &mut load),
            _ => {}
        }
    }
    let mut rest: Vec<usize> = (0..m).filter(|&k| side[k].is_none()).collect();
    rest.sort_by_key(|&k| std::cmp::Reverse(size[k]));
    for k in rest {
        let s = load[1] < load[0];
        put(k, s, &mut side, &mut load);
    }
    side.into_iter().map(|s| s.unwrap()).collect()
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

/// Structure instances stay whole on one tier; critical paths that avoid
/// every instance are kept within one tier; everything else is random.
/// A critical path touching an instance is demoted (allowed to cross).
pub fn partition_ht_aware(n: &Netlist, instances: &[Vec<GateId>], seed: u64) -> Result<TierAssignment, PartitionError> {
    let t = sta_unit_delay(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n.num_gates();
    let mut in_instance = vec![false; total];
    let mut parent: Vec<usize> = (0..total).collect();
    for inst in instances {
        for g in inst {
            in_instance[g.index()] = true;
        }
        for w in inst.windows(2) {
            union(&mut parent, w[0].index(), w[1].index());
        }
    }
    let mut constrained = in_instance.clone();
    let mut notes = Vec::new();
    let mut demoted = 0;
    for path in timing_paths(n, &t)
        .into_iter()
        .filter(|p| p.last().is_some_and(|e| t.arrival[e.index()] == t.critical_path_length))
    {
        if path.iter().any(|g| in_instance[g.index()]) {
            demoted += 1;
            continue;
        }
        for g in &path {
            constrained[g.index()] = true;
        }
        for w in path.windows(2) {
            union(&mut parent, w[0].index(), w[1].index());
        }
    }
    if demoted > 0 {
        notes.push(format!("{demoted} critical paths cross structure instances and may span tiers"));
    }
    let mut group_tier: BTreeMap<usize, Tier> = BTreeMap::new();
    let mut tiers = Vec::with_capacity(total);
    for g in 0..total {
        let tier = if constrained[g] {
            let r = find(&mut parent, g);
            *group_tier.entry(r).or_insert_with(|| Tier::from_bit(rng.gen()))
        } else {
            Tier::from_bit(rng.gen())
        };
        tiers.push(tier);
    }
    let mut a = TierAssignment::new(tiers, Strategy::HtAware, seed);
    a.notes = notes;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_bench;

    fn chain4() -> Netlist {
        parse_bench("INPUT(a)\nOUTPUT(g4)\ng1 = NOT(a)\ng2 = NOT(g1)\ng3 = NOT(g2)\ng4 = NOT(g3)").unwrap()
    }

    #[test]
    fn random_fraction_is_exact() {
        let n = chain4();
        let a = partition_random(&n, 0.0, 1).unwrap();
        assert_eq!(a.count(Tier::Top), 0);
        assert_eq!(cut_set(&n, &a).size(), 0);
        let a = partition_random(&n, 0.5, 1).unwrap();
        assert_eq!(a.count(Tier::Top), 2);
    }

    #[test]
    fn max_cut_alternates_a_chain() {
        let n = chain4();
        for seed in 0..8 {
            let a = partition_max_cut(&n, seed).unwrap();
            assert_eq!(cut_set(&n, &a).size(), 3);
        }
    }

    #[test]
    fn single_gate_max_cut_has_no_interior_cut() {
        let n = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)").unwrap();
        assert_eq!(cut_set(&n, &partition_max_cut(&n, 3).unwrap()).size(), 0);
    }

    #[test]
    fn timing_aware_moves_slack_first() {
        let n = parse_bench(
            "INPUT(a)\nOUTPUT(g4)\nOUTPUT(b)\ng1 = NOT(a)\ng2 = NOT(g1)\ng3 = NOT(g2)\ng4 = NOT(g3)\nb = NOT(g2)",
        )
        .unwrap();
        let a = partition_timing_aware(&n, None, DEFAULT_BALANCE, 5).unwrap();
        assert_eq!(a.tier(n.gate_id("b").unwrap()), Tier::Top);
        assert_eq!(a.count(Tier::Top), 2);
        assert!(!a.notes.is_empty());
    }

    #[test]
    fn balanced_tree_takes_fallback() {
        let n = parse_bench(
            "INPUT(a)\nINPUT(b)\nINPUT(c)\nINPUT(d)\nOUTPUT(y)\nl = AND(a,b)\nr = AND(c,d)\ny = OR(l,r)",
        )
        .unwrap();
        let a = partition_timing_aware(&n, None, DEFAULT_BALANCE, 1).unwrap();
        assert!(balanced(a.count(Tier::Top), 3, DEFAULT_BALANCE));
        assert_eq!(a.notes.len(), 1);
    }

    #[test]
    fn cut_counts_one_per_net() {
        let n = parse_bench(
            "INPUT(a)\nOUTPUT(x)\nOUTPUT(y)\nOUTPUT(z)\nd = NOT(a)\nx = NOT(d)\ny = NOT(d)\nz = NOT(d)",
        )
        .unwrap();
        let mut tiers = vec![Tier::Top; 4];
        tiers[n.gate_id("d").unwrap().index()] = Tier::Bottom;
        let a = TierAssignment::new(tiers, Strategy::Random, 0);
        assert_eq!(cut_set(&n, &a).nets, vec![n.net_id("d").unwrap()]);
    }

    #[test]
    fn flat_netlist_rejects_hierarchical() {
        assert!(matches!(
            partition_hierarchical(&chain4(), DEFAULT_BALANCE, 0),
            Err(PartitionError::FlatNetlist)
        ));
    }
}
