//! Exposed graphs, candidate sets and wire lifting.
//!
//! A candidate for netlist gate `g` is an exposed gate `u` such that some
//! type-respecting bijection of exposed gates onto netlist gates maps every
//! exposed edge onto a netlist edge (same sink pin unless the sink cell is
//! symmetric) and sends `u` to `g`. Only gate-to-gate edges count; pads are
//! not part of the graph.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mine::StructureInstances;
use super::KsecError;
use crate::netlist::{CellType, GateId, NetId, Netlist};

/// Largest design accepted by exact mode unless overridden.
pub const EXACT_GUARD: usize = 2000;
/// Backtracking nodes allowed per embedding search.
pub const DEFAULT_SEARCH_BUDGET: u64 = 2_000_000;

const ANY_PIN: u8 = u8::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMode {
    Exact,
    Refine,
}

/// The netlist minus its lifted nets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposedGraph {
    /// Sorted.
    pub lifted: Vec<NetId>,
    pub boundary_lifted: usize,
    /// Extra nets chosen by the greedy step, in pick order.
    pub greedy: Vec<NetId>,
    pub k_estimate: Option<usize>,
    pub target_reached: Option<bool>,
}

impl ExposedGraph {
    pub fn with_lifted(nets: impl IntoIterator<Item = NetId>) -> Self {
        let mut lifted: Vec<NetId> = nets.into_iter().collect();
        lifted.sort();
        lifted.dedup();
        ExposedGraph {
            lifted,
            ..Default::default()
        }
    }

    /// Every net lifted.
    pub fn all_lifted(n: &Netlist) -> Self {
        Self::with_lifted((0..n.num_nets() as u32).map(NetId))
    }

    pub fn is_lifted(&self, net: NetId) -> bool {
        self.lifted.binary_search(&net).is_ok()
    }

    pub fn mask(&self, n: &Netlist) -> Vec<bool> {
        let mut m = vec![false; n.num_nets()];
        for l in &self.lifted {
            if l.index() < m.len() {
                m[l.index()] = true;
            }
        }
        m
    }

    /// Exposed gate-to-gate edges as (driver, sink, pin).
    pub fn exposed_edges(&self, n: &Netlist) -> Vec<(GateId, GateId, u8)> {
        let mask = self.mask(n);
        let mut v = Vec::new();
        for h in n.gate_ids() {
            for (p, f) in n.gate(h).fanins.iter().enumerate() {
                if let Some(d) = n.net(*f).driver {
                    if !mask[f.index()] {
                        v.push((d, h, p as u8));
                    }
                }
            }
        }
        v
    }
}

/// Per-gate adjacency with multiplicities: (neighbour, pin key, count).
#[derive(Debug, Clone)]
struct Adj {
    out: Vec<Vec<(u32, u8, u32)>>,
    inn: Vec<Vec<(u32, u8, u32)>>,
}

impl Adj {
    fn build(n: &Netlist, lifted: Option<&[bool]>) -> Adj {
        let mut m: BTreeMap<(u32, u32, u8), u32> = BTreeMap::new();
        for h in n.gate_ids() {
            let gate = n.gate(h);
            let sym = gate.cell.kind.is_symmetric();
            for (p, f) in gate.fanins.iter().enumerate() {
                if lifted.is_some_and(|l| l[f.index()]) {
                    continue;
                }
                if let Some(d) = n.net(*f).driver {
                    let key = if sym { ANY_PIN } else { p as u8 };
                    *m.entry((d.0, h.0, key)).or_insert(0) += 1;
                }
            }
        }
        let k = n.num_gates();
        let mut adj = Adj {
            out: vec![Vec::new(); k],
            inn: vec![Vec::new(); k],
        };
        for ((d, h, key), c) in m {
            adj.out[d as usize].push((h, key, c));
            adj.inn[h as usize].push((d, key, c));
        }
        adj
    }

    fn mult_map(&self) -> HashMap<(u32, u32, u8), u32> {
        let mut m = HashMap::new();
        for (d, list) in self.out.iter().enumerate() {
            for &(h, key, c) in list {
                m.insert((d as u32, h, key), c);
            }
        }
        m
    }

    fn isolated(&self, u: usize) -> bool {
        self.out[u].is_empty() && self.inn[u].is_empty()
    }

    /// Neighbour profile: (direction, pin key, neighbour cell) → count.
    fn profile(&self, u: usize, cells: &[CellType]) -> Vec<((u8, u8, CellType), u32)> {
        let mut m: BTreeMap<(u8, u8, CellType), u32> = BTreeMap::new();
        for &(h, key, c) in &self.out[u] {
            *m.entry((0, key, cells[h as usize])).or_insert(0) += c;
        }
        for &(d, key, c) in &self.inn[u] {
            *m.entry((1, key, cells[d as usize])).or_insert(0) += c;
        }
        m.into_iter().collect()
    }
}

fn dominated(small: &[((u8, u8, CellType), u32)], big: &[((u8, u8, CellType), u32)]) -> bool {
    let mut j = 0;
    for (k, c) in small {
        while j < big.len() && big[j].0 < *k {
            j += 1;
        }
        if j == big.len() || big[j].0 != *k || big[j].1 < *c {
            return false;
        }
    }
    true
}

/// One bitset row of candidate images per exposed gate.
#[derive(Debug, Clone)]
struct Domains {
    words: usize,
    bits: Vec<u64>,
}

impl Domains {
    fn has(&self, u: usize, g: usize) -> bool {
        self.bits[u * self.words + g / 64] >> (g % 64) & 1 == 1
    }

    fn clear(&mut self, u: usize, g: usize) {
        self.bits[u * self.words + g / 64] &= !(1u64 << (g % 64));
    }

    fn row(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        let w = self.words;
        self.bits[u * w..(u + 1) * w]
            .iter()
            .enumerate()
            .flat_map(|(i, &word)| {
                let mut x = word;
                std::iter::from_fn(move || {
                    if x == 0 {
                        return None;
                    }
                    let b = x.trailing_zeros() as usize;
                    x &= x - 1;
                    Some(i * 64 + b)
                })
            })
    }

    fn size(&self, u: usize) -> usize {
        let w = self.words;
        self.bits[u * w..(u + 1) * w].iter().map(|x| x.count_ones() as usize).sum()
    }
}

/// Candidate analysis of one exposed graph.
struct Analysis {
    cells: Vec<CellType>,
    x: Adj,
    nmult: HashMap<(u32, u32, u8), u32>,
    xmult: HashMap<(u32, u32, u8), u32>,
    dom: Domains,
}

impl Analysis {
    fn new(n: &Netlist, lifted: &[bool]) -> Analysis {
        let k = n.num_gates();
        let cells: Vec<CellType> = n.gate_ids().map(|g| n.gate(g).cell).collect();
        let full = Adj::build(n, None);
        let x = Adj::build(n, Some(lifted));
        let words = k.div_ceil(64).max(1);
        let mut dom = Domains {
            words,
            bits: vec![0; k * words],
        };
        let nprof: Vec<_> = (0..k).map(|g| full.profile(g, &cells)).collect();
        let mut by_cell: BTreeMap<CellType, Vec<usize>> = BTreeMap::new();
        for (g, c) in cells.iter().enumerate() {
            by_cell.entry(*c).or_default().push(g);
        }
        let rows: Vec<Vec<u64>> = (0..k)
            .into_par_iter()
            .map(|u| {
                let xp = x.profile(u, &cells);
                let mut row = vec![0u64; words];
                for &g in &by_cell[&cells[u]] {
                    if dominated(&xp, &nprof[g]) {
                        row[g / 64] |= 1 << (g % 64);
                    }
                }
                row
            })
            .collect();
        for (u, row) in rows.into_iter().enumerate() {
            dom.bits[u * words..(u + 1) * words].copy_from_slice(&row);
        }
        let mut a = Analysis {
            cells,
            nmult: full.mult_map(),
            xmult: x.mult_map(),
            x,
            dom,
        };
        a.propagate(&full);
        a
    }

    fn supported(&self, full: &Adj, u: usize, g: usize) -> bool {
        let ok_out = self.x.out[u].iter().all(|&(w, key, c)| {
            full.out[g]
                .iter()
                .any(|&(h, k2, c2)| k2 == key && c2 >= c && self.dom.has(w as usize, h as usize))
        });
        ok_out
            && self.x.inn[u].iter().all(|&(w, key, c)| {
                full.inn[g]
                    .iter()
                    .any(|&(h, k2, c2)| k2 == key && c2 >= c && self.dom.has(w as usize, h as usize))
            })
    }

    /// Arc consistency over exposed edges plus singleton exclusion.
    fn propagate(&mut self, full: &Adj) {
        let k = self.cells.len();
        let mut queue: VecDeque<usize> = (0..k).collect();
        let mut queued = vec![true; k];
        let mut pinned = vec![false; k];
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            let dead: Vec<usize> = self.dom.row(u).filter(|&g| !self.supported(full, u, g)).collect();
            let mut touched: Vec<usize> = Vec::new();
            if !dead.is_empty() {
                for g in dead {
                    self.dom.clear(u, g);
                }
                touched.extend(self.x.out[u].iter().map(|e| e.0 as usize));
                touched.extend(self.x.inn[u].iter().map(|e| e.0 as usize));
            }
            if !pinned[u] && self.dom.size(u) == 1 {
                pinned[u] = true;
                let g = self.dom.row(u).next().expect("non-empty");
                for v in 0..k {
                    if v != u && self.cells[v] == self.cells[u] && self.dom.has(v, g) {
                        self.dom.clear(v, g);
                        touched.push(v);
                    }
                }
            }
            for v in touched {
                if !queued[v] {
                    queued[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }

    /// Refinement bound on every gate's candidate count.
    fn upper_counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.cells.len()];
        for u in 0..self.cells.len() {
            for g in self.dom.row(u) {
                c[g] += 1;
            }
        }
        c
    }

    fn candidates_of(&self, g: usize) -> Vec<usize> {
        (0..self.cells.len()).filter(|&u| self.dom.has(u, g)).collect()
    }

    /// Search order: `u`, then BFS over its exposed component, then the
    /// other non-isolated components. Isolated gates are completed freely.
    fn order_from(&self, u: usize) -> Vec<usize> {
        let k = self.cells.len();
        let mut seen = vec![false; k];
        let mut order = Vec::new();
        let bfs = |s: usize, seen: &mut Vec<bool>, order: &mut Vec<usize>| {
            let mut q = VecDeque::from([s]);
            seen[s] = true;
            while let Some(x) = q.pop_front() {
                order.push(x);
                for &(w, _, _) in self.x.out[x].iter().chain(&self.x.inn[x]) {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        q.push_back(w as usize);
                    }
                }
            }
        };
        bfs(u, &mut seen, &mut order);
        for s in 0..k {
            if !seen[s] && !self.x.isolated(s) {
                bfs(s, &mut seen, &mut order);
            }
        }
        order
    }

    /// Finds an embedding with `u ↦ g`; `Err` when the budget runs out.
    fn embed(&self, u: usize, g: usize, budget: u64) -> Result<Option<Vec<(usize, usize)>>, ()> {
        let order = self.order_from(u);
        let k = self.cells.len();
        let mut pos = vec![usize::MAX; k];
        for (i, &x) in order.iter().enumerate() {
            pos[x] = i;
        }
        // constraints toward earlier variables: (earlier var, x is driver, key, count)
        let back: Vec<Vec<(usize, bool, u8, u32)>> = order
            .iter()
            .map(|&x| {
                let mut v = Vec::new();
                for &(w, key, c) in &self.x.out[x] {
                    if pos[w as usize] <= pos[x] {
                        v.push((w as usize, true, key, c));
                    }
                }
                for &(w, key, c) in &self.x.inn[x] {
                    if pos[w as usize] < pos[x] {
                        v.push((w as usize, false, key, c));
                    }
                }
                v
            })
            .collect();
        let mut img = vec![usize::MAX; k];
        let mut used = vec![false; k];
        let mut nodes = 0u64;
        let found = self.search(&order, &back, 0, Some(g), &mut img, &mut used, &mut nodes, budget)?;
        Ok(found.then(|| order.iter().map(|&x| (x, img[x])).collect()))
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        order: &[usize],
        back: &[Vec<(usize, bool, u8, u32)>],
        depth: usize,
        forced: Option<usize>,
        img: &mut [usize],
        used: &mut [bool],
        nodes: &mut u64,
        budget: u64,
    ) -> Result<bool, ()> {
        if depth == order.len() {
            return Ok(true);
        }
        *nodes += 1;
        if *nodes > budget {
            return Err(());
        }
        let x = order[depth];
        let cands: Vec<usize> = match forced {
            Some(g) => vec![g],
            None => {
                let mut v = Vec::new();
                if self.dom.has(x, x) && !used[x] {
                    v.push(x);
                }
                v.extend(self.dom.row(x).filter(|&h| h != x && !used[h]));
                v
            }
        };
        for h in cands {
            if used[h] || !self.dom.has(x, h) {
                continue;
            }
            img[x] = h;
            let ok = back[depth].iter().all(|&(w, x_drives, key, c)| {
                let (a, b) = if x_drives { (h, img[w]) } else { (img[w], h) };
                self.nmult.get(&(a as u32, b as u32, key)).copied().unwrap_or(0) >= c
            });
            if ok {
                used[h] = true;
                if self.search(order, back, depth + 1, None, img, used, nodes, budget)? {
                    return Ok(true);
                }
                used[h] = false;
            }
            img[x] = usize::MAX;
        }
        Ok(false)
    }

    /// True when the partial map `pairs` permutes its own domain and keeps
    /// every exposed edge exposed, so that extending it by the identity
    /// gives an automorphism of the exposed graph.
    fn is_automorphism(&self, pairs: &[(usize, usize)]) -> bool {
        let img: HashMap<usize, usize> = pairs.iter().copied().collect();
        if pairs.iter().any(|(_, g)| !img.contains_key(g)) {
            return false;
        }
        pairs.iter().all(|&(x, gx)| {
            self.x.out[x].iter().all(|&(w, key, c)| {
                img.get(&(w as usize))
                    .is_some_and(|&gw| self.xmult.get(&(gx as u32, gw as u32, key)).copied().unwrap_or(0) >= c)
            })
        })
    }

    /// Exact candidate counts for `targets`; `None` if any search ran out of
    /// budget. Automorphisms met along the way merge orbits, and members of
    /// a target's orbit need no search.
    fn exact_counts(&self, targets: &[usize], budget: u64) -> Option<Vec<usize>> {
        let known: Mutex<HashSet<(usize, usize)>> = Mutex::new(HashSet::new());
        let orbits: Mutex<Orbits> = Mutex::new(Orbits::new(self.cells.len()));
        targets
            .par_iter()
            .map(|&g| {
                let mut count = 0;
                for u in self.candidates_of(g) {
                    if u == g
                        || orbits.lock().expect("no poisoning").same(u, g)
                        || known.lock().expect("no poisoning").contains(&(u, g))
                    {
                        count += 1;
                        continue;
                    }
                    if self.x.isolated(u) && self.x.isolated(g) {
                        count += 1;
                        orbits.lock().expect("no poisoning").union(u, g);
                        continue;
                    }
                    match self.embed(u, g, budget) {
                        Ok(Some(pairs)) => {
                            count += 1;
                            if self.is_automorphism(&pairs) {
                                let mut o = orbits.lock().expect("no poisoning");
                                for &(x, y) in &pairs {
                                    o.union(x, y);
                                }
                            }
                            known.lock().expect("no poisoning").extend(pairs);
                        }
                        Ok(None) => {}
                        Err(()) => return None,
                    }
                }
                Some(count)
            })
            .collect()
    }
}

struct Orbits(Vec<usize>);

impl Orbits {
    fn new(k: usize) -> Self {
        Orbits((0..k).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Candidate count of every gate (refinement bound) under `exposed`.
pub fn candidate_counts_upper(n: &Netlist, exposed: &ExposedGraph) -> Vec<usize> {
    Analysis::new(n, &exposed.mask(n)).upper_counts()
}

/// Exact candidate count of every gate; `None` if a search hit its budget.
pub fn candidate_counts_exact(n: &Netlist, exposed: &ExposedGraph, budget: u64) -> Option<Vec<usize>> {
    let a = Analysis::new(n, &exposed.mask(n));
    let all: Vec<usize> = (0..n.num_gates()).collect();
    a.exact_counts(&all, budget)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCandidates {
    pub gate: String,
    pub upper: usize,
    pub exact: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateTierCount {
    pub template: String,
    pub bottom: usize,
    pub top: usize,
}

/// Instance census per tier and the resulting tier-level k.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierLevel {
    pub counts: Vec<TemplateTierCount>,
    /// Instances whose gates landed on both tiers.
    pub split: usize,
    pub k_3d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSecurityReport {
    pub design: String,
    pub method: KMode,
    pub lifted: usize,
    pub selected: Vec<GateCandidates>,
    pub k_exact: Option<usize>,
    pub k_upper: usize,
    pub coverage: Option<f64>,
    pub census: Option<TierLevel>,
    pub notes: Vec<String>,
}

impl KSecurityReport {
    /// Exact level when known, else the bound.
    pub fn k(&self) -> usize {
        self.k_exact.unwrap_or(self.k_upper)
    }

    /// Best-known candidate count per selected gate.
    pub fn candidate_counts(&self) -> Vec<usize> {
        self.selected.iter().map(|s| s.exact.unwrap_or(s.upper)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelParams {
    pub mode: KMode,
    pub guard: usize,
    pub budget: u64,
}

impl Default for LevelParams {
    fn default() -> Self {
        LevelParams {
            mode: KMode::Exact,
            guard: EXACT_GUARD,
            budget: DEFAULT_SEARCH_BUDGET,
        }
    }
}

/// Candidate counts of the selected gates and k = their minimum.
pub fn security_level(
    n: &Netlist,
    exposed: &ExposedGraph,
    selected: &[GateId],
    params: &LevelParams,
) -> Result<KSecurityReport, KsecError> {
    if selected.is_empty() {
        return Err(KsecError::NoSelection);
    }
    if params.mode == KMode::Exact && n.num_gates() > params.guard {
        return Err(KsecError::TooLarge {
            gates: n.num_gates(),
            limit: params.guard,
        });
    }
    let a = Analysis::new(n, &exposed.mask(n));
    let upper = a.upper_counts();
    let targets: Vec<usize> = selected.iter().map(|g| g.index()).collect();
    let mut notes = Vec::new();
    let exact = match params.mode {
        KMode::Refine => None,
        KMode::Exact => {
            let r = a.exact_counts(&targets, params.budget);
            if r.is_none() {
                notes.push(format!("embedding search exceeded {} nodes; exact level unavailable", params.budget));
            }
            r
        }
    };
    let selected_rows: Vec<GateCandidates> = targets
        .iter()
        .enumerate()
        .map(|(i, &g)| GateCandidates {
            gate: n.gate_name(GateId(g as u32)).to_string(),
            upper: upper[g],
            exact: exact.as_ref().map(|e| e[i]),
        })
        .collect();
    let k_upper = selected_rows.iter().map(|s| s.upper).min().expect("non-empty");
    let k_exact = exact.as_ref().map(|e| *e.iter().min().expect("non-empty"));
    Ok(KSecurityReport {
        design: n.name().to_string(),
        method: if k_exact.is_some() { KMode::Exact } else { KMode::Refine },
        lifted: exposed.lifted.len(),
        selected: selected_rows,
        k_exact,
        k_upper,
        coverage: None,
        census: None,
        notes,
    })
}

/// Smallest per-type gate count: the level reached when every wire is lifted.
pub fn type_count_bound(n: &Netlist) -> Option<(CellType, usize)> {
    let mut m: BTreeMap<CellType, usize> = BTreeMap::new();
    for g in n.gate_ids() {
        *m.entry(n.gate(g).cell).or_insert(0) += 1;
    }
    m.into_iter().min_by_key(|(c, k)| (*k, *c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiftParams {
    /// Extra nets the greedy step may lift.
    pub budget: usize,
    pub target_k: Option<usize>,
    pub level: LevelParams,
}

impl Default for LiftParams {
    fn default() -> Self {
        LiftParams {
            budget: 0,
            target_k: None,
            level: LevelParams {
                mode: KMode::Refine,
                ..Default::default()
            },
        }
    }
}

/// Nets entering or leaving any instance.
pub fn boundary_nets(n: &Netlist, instances: &StructureInstances) -> Vec<NetId> {
    let mut nets: Vec<NetId> = Vec::new();
    for inst in &instances.instances {
        nets.extend(inst.boundary.iter().copied());
        let mine: HashSet<GateId> = inst.nodes.iter().copied().collect();
        for g in &inst.nodes {
            let out = n.gate(*g).output;
            if n.is_output(out) || n.fanouts(out).iter().any(|s| !mine.contains(&s.gate)) {
                nets.push(out);
            }
        }
    }
    nets.sort();
    nets.dedup();
    nets
}

/// (min count, summed count) over `selected` with `mask` lifted.
fn objective(n: &Netlist, mask: &[bool], selected: &[usize], level: &LevelParams) -> Result<(usize, usize), KsecError> {
    let a = Analysis::new(n, mask);
    let counts = match level.mode {
        KMode::Refine => {
            let u = a.upper_counts();
            selected.iter().map(|&g| u[g]).collect()
        }
        KMode::Exact => a.exact_counts(selected, level.budget).ok_or(KsecError::SearchBudget)?,
    };
    Ok((counts.iter().copied().min().unwrap_or(0), counts.iter().sum()))
}

/// Lifts every instance boundary net, then greedily lifts the net that most
/// raises the minimum candidate count over `selected` (ties: larger summed
/// count, then lower net id) until `target_k` or the budget is reached.
pub fn lift_wires(
    n: &Netlist,
    instances: &StructureInstances,
    selected: &[GateId],
    params: &LiftParams,
) -> Result<ExposedGraph, KsecError> {
    if params.level.mode == KMode::Exact && n.num_gates() > params.level.guard {
        return Err(KsecError::TooLarge {
            gates: n.num_gates(),
            limit: params.level.guard,
        });
    }
    let boundary = boundary_nets(n, instances);
    let mut mask = vec![false; n.num_nets()];
    for b in &boundary {
        mask[b.index()] = true;
    }
    let sel: Vec<usize> = selected.iter().map(|g| g.index()).collect();
    let mut greedy = Vec::new();
    let mut current = if sel.is_empty() {
        None
    } else {
        Some(objective(n, &mask, &sel, &params.level)?)
    };
    let reached = |c: Option<(usize, usize)>| match (params.target_k, c) {
        (Some(t), Some((k, _))) => k >= t,
        _ => false,
    };
    while greedy.len() < params.budget && !sel.is_empty() && !reached(current) {
        let cands: Vec<NetId> = (0..n.num_nets() as u32)
            .map(NetId)
            .filter(|&f| {
                !mask[f.index()]
                    && n.net(f).driver.is_some()
                    && !n.fanouts(f).is_empty()
            })
            .collect();
        if cands.is_empty() {
            break;
        }
        let scored: Vec<((usize, usize), NetId)> = cands
            .par_iter()
            .map(|&f| {
                let mut m = mask.clone();
                m[f.index()] = true;
                objective(n, &m, &sel, &params.level).map(|o| (o, f))
            })
            .collect::<Result<_, _>>()?;
        let (best, net) = scored
            .into_iter()
            .max_by(|(a, fa), (b, fb)| a.cmp(b).then(fb.cmp(fa)))
            .expect("non-empty");
        mask[net.index()] = true;
        greedy.push(net);
        current = Some(best);
    }
    let mut eg = ExposedGraph::with_lifted(boundary.iter().copied().chain(greedy.iter().copied()));
    eg.boundary_lifted = boundary.len();
    eg.greedy = greedy;
    eg.k_estimate = current.map(|c| c.0);
    eg.target_reached = params.target_k.map(|_| reached(current));
    Ok(eg)
}
