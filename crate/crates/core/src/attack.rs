//! Attacks on an exposed F2F layout: proximity matching of ports, a uniform
//! random baseline and the oracle-guided SAT attack on switchboxes.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use pathfinding::prelude::{kuhn_munkres, Matrix};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::f2f::{Direction, ExposureView, F2FError, ViewSignal};
use crate::netlist::{
    simulate, CellKind, CellType, Netlist, NetlistBuilder, NetlistError,
    PatternBlock,
};
use crate::sat::{CircuitEncoder, Lit, SolveResult, Solver};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    F2F(#[from] F2FError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("the view carries no switchbox membership")]
    NoMembership,
    #[error("switchbox {0} does not exist")]
    UnknownBox(usize),
    #[error("signal name `{0}` collides with a key-model helper")]
    NameClash(String),
    #[error("the keyed model is combinationally cyclic")]
    CyclicModel,
    #[error("oracle interface does not match the view: {0}")]
    Interface(String),
}

/// Ports listed here may only pair with each other (externally known IP).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortConfinement {
    pub drivers: Vec<usize>,
    pub sinks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityParams {
    /// Recorded in the result; the attack itself breaks ties by index.
    pub seed: u64,
    /// Above this many ports in one group of a direction, greedy matching
    /// replaces the optimal assignment.
    pub greedy_above: usize,
    pub orientation: bool,
    pub loop_pruning: bool,
    pub confine: Vec<PortConfinement>,
    /// Candidates kept per driver port in the table (0 keeps all).
    pub candidates: usize,
}

impl Default for ProximityParams {
    fn default() -> Self {
        ProximityParams {
            seed: 0,
            greedy_above: 2500,
            orientation: true,
            loop_pruning: true,
            confine: Vec::new(),
            candidates: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    Hungarian,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sink: usize,
    pub distance: f64,
    /// Would close a combinational loop given the rest of the mapping.
    pub loop_excluded: bool,
    /// Ruled out by switchbox membership or IP confinement.
    pub ip_confined: bool,
}

/// Ranked sink candidates per driver port, nearest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTable {
    pub entries: Vec<Vec<Candidate>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heuristics {
    pub one_sink_per_driver: bool,
    pub proximity: bool,
    pub orientation: bool,
    pub loop_pruning: bool,
    pub switchbox_groups: bool,
    pub ip_confinement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredMapping {
    /// Sink port per driver port.
    pub guess: Vec<usize>,
    /// Per pair: relative margin of the chosen sink over the nearest
    /// alternative, in [0, 1].
    pub confidence: Vec<f64>,
    pub seed: u64,
    pub heuristics: Heuristics,
    pub matching: Vec<(Direction, Matching)>,
    /// Pairs moved off their assignment to avoid a loop.
    pub repaired: usize,
    /// Driver ports whose loop could not be avoided.
    pub relaxed: Vec<usize>,
    pub wall_time_ms: f64,
}

impl RecoveredMapping {
    pub fn acyclic(&self) -> bool {
        self.relaxed.is_empty()
    }
}

/// Per-port group labels: (switchbox, confinement set), `usize::MAX` for
/// none. Ports pair only within equal labels.
fn groups(view: &ExposureView, confine: &[PortConfinement]) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut dg = vec![(usize::MAX, usize::MAX); view.driver_ports.len()];
    let mut sg = vec![(usize::MAX, usize::MAX); view.sink_ports.len()];
    if let Some(boxes) = &view.switchboxes {
        for (b, m) in boxes.iter().enumerate() {
            for &i in &m.drivers {
                dg[i].0 = b;
            }
            for &j in &m.sinks {
                sg[j].0 = b;
            }
        }
    }
    for (c, set) in confine.iter().enumerate() {
        for &i in &set.drivers {
            if let Some(g) = dg.get_mut(i) {
                g.1 = c;
            }
        }
        for &j in &set.sinks {
            if let Some(g) = sg.get_mut(j) {
                g.1 = c;
            }
        }
    }
    (dg, sg)
}

/// Combinational connectivity of a view under a (partial) mapping.
struct LoopGraph {
    comb: Vec<bool>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    driver_gate: Vec<usize>,
    /// Driver port of each gate, if it drives one.
    port_of_gate: Vec<Option<usize>>,
    sink_gates: Vec<Vec<usize>>,
    /// Driver port feeding each sink gate through a port, per pin.
    port_fanins: Vec<Vec<usize>>,
    mark: Vec<u32>,
    stamp: u32,
}

impl LoopGraph {
    fn new(view: &ExposureView) -> LoopGraph {
        let index: HashMap<&str, usize> = view.gates.iter().enumerate().map(|(k, g)| (g.name.as_str(), k)).collect();
        let comb: Vec<bool> = view.gates.iter().map(|g| !g.cell.is_sequential()).collect();
        let mut succ = vec![Vec::new(); view.gates.len()];
        let mut pred = vec![Vec::new(); view.gates.len()];
        let mut port_fanins = vec![Vec::new(); view.gates.len()];
        for (k, g) in view.gates.iter().enumerate() {
            for f in &g.fanins {
                match f {
                    ViewSignal::Net(src) => {
                        if let Some(&u) = index.get(src.as_str()) {
                            if comb[u] && comb[k] {
                                succ[u].push(k);
                                pred[k].push(u);
                            }
                        }
                    }
                    ViewSignal::Port(j) if comb[k] => port_fanins[k].push(*j),
                    _ => {}
                }
            }
        }
        let driver_gate: Vec<usize> = view.driver_ports.iter().map(|p| index[p.driver.as_str()]).collect();
        let mut port_of_gate = vec![None; view.gates.len()];
        for (i, &d) in driver_gate.iter().enumerate() {
            port_of_gate[d] = Some(i);
        }
        let sink_gates = view
            .sink_ports
            .iter()
            .map(|p| p.sinks.iter().map(|(g, _)| index[g.as_str()]).filter(|&k| comb[k]).collect())
            .collect();
        LoopGraph {
            mark: vec![0; view.gates.len()],
            stamp: 0,
            comb,
            succ,
            pred,
            driver_gate,
            port_of_gate,
            sink_gates,
            port_fanins,
        }
    }

    /// Would driver port `i` feeding sink port `j` close a loop, given the
    /// committed pairs `guess[k]` for `committed[k]`?
    fn closes(&mut self, i: usize, j: usize, guess: &[usize], committed: &[bool]) -> bool {
        let d = self.driver_gate[i];
        if !self.comb[d] {
            return false;
        }
        self.stamp += 1;
        let mut stack: Vec<usize> = Vec::new();
        for &k in &self.sink_gates[j] {
            if self.mark[k] != self.stamp {
                self.mark[k] = self.stamp;
                stack.push(k);
            }
        }
        while let Some(u) = stack.pop() {
            if u == d {
                return true;
            }
            let via = match self.port_of_gate[u] {
                Some(p) if committed[p] => self.sink_gates[guess[p]].as_slice(),
                _ => &[],
            };
            for &v in self.succ[u].iter().chain(via) {
                if self.mark[v] != self.stamp {
                    self.mark[v] = self.stamp;
                    stack.push(v);
                }
            }
        }
        false
    }

    /// Committed driver ports (other than `i`) whose pairs lie on a loop
    /// through `i`'s own pair.
    fn loop_ports(&mut self, i: usize, guess: &[usize], committed: &[bool]) -> Vec<usize> {
        let d = self.driver_gate[i];
        let n = self.comb.len();
        let mut parent: Vec<Option<(usize, Option<usize>)>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut stack = Vec::new();
        for &k in &self.sink_gates[guess[i]] {
            if !seen[k] {
                seen[k] = true;
                stack.push(k);
            }
        }
        while let Some(u) = stack.pop() {
            if u == d {
                let mut ports = Vec::new();
                let mut v = u;
                while let Some((w, via)) = parent[v] {
                    ports.extend(via);
                    v = w;
                }
                return ports;
            }
            let mut next: Vec<(usize, Option<usize>)> = self.succ[u].iter().map(|&v| (v, None)).collect();
            if let Some(p) = self.port_of_gate[u] {
                if committed[p] && p != i {
                    next.extend(self.sink_gates[guess[p]].iter().map(|&v| (v, Some(p))));
                }
            }
            for (v, via) in next {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some((u, via));
                    stack.push(v);
                }
            }
        }
        Vec::new()
    }

    /// Gates that reach driver port `i`'s gate under the full mapping,
    /// ignoring `i`'s own pair.
    fn backward_cone(&mut self, i: usize, sink_source: &[usize]) -> Vec<bool> {
        let d = self.driver_gate[i];
        let mut seen = vec![false; self.comb.len()];
        if !self.comb[d] {
            return seen;
        }
        seen[d] = true;
        let mut stack = vec![d];
        while let Some(u) = stack.pop() {
            let via = self.port_fanins[u].iter().map(|&j| sink_source[j]).filter(|&p| p != i);
            let preds: Vec<usize> = self.pred[u]
                .iter()
                .copied()
                .chain(via.map(|p| self.driver_gate[p]).filter(|&g| self.comb[g]))
                .collect();
            for v in preds {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

struct Repair<'a> {
    graph: &'a mut LoopGraph,
    guess: &'a mut Vec<usize>,
    holder: Vec<usize>,
    committed: Vec<bool>,
    ranked: &'a [Vec<usize>],
    dg: &'a [(usize, usize)],
    sg: &'a [(usize, usize)],
}

impl Repair<'_> {
    fn closes(&mut self, i: usize, j: usize) -> bool {
        self.graph.closes(i, j, self.guess, &self.committed)
    }

    /// Commits pairs cheapest first; returns (pairs moved, ports left on a
    /// loop).
    fn run(&mut self, costs: &Costs) -> (usize, Vec<usize>) {
        for (i, &j) in self.guess.iter().enumerate() {
            self.holder[j] = i;
        }
        let mut order: Vec<usize> = (0..self.guess.len()).collect();
        order.sort_by(|&x, &y| {
            costs.dist[x][self.guess[x]]
                .total_cmp(&costs.dist[y][self.guess[y]])
                .then(x.cmp(&y))
        });
        let mut moved = 0;
        let mut relaxed = Vec::new();
        for &i in &order {
            if !self.closes(i, self.guess[i]) {
                self.committed[i] = true;
                continue;
            }
            if self.try_move(i) {
                moved += 1;
                continue;
            }
            // `i` has no loop-free alternative: move another pair on the loop.
            self.committed[i] = true;
            let on_loop = self.graph.loop_ports(i, self.guess, &self.committed);
            let mut fixed = false;
            for p in on_loop {
                self.committed[p] = false;
                if self.try_move(p) {
                    moved += 1;
                    fixed = true;
                    break;
                }
                self.committed[p] = true;
            }
            if !fixed {
                relaxed.push(i);
            }
        }
        relaxed.sort_unstable();
        (moved, relaxed)
    }

    /// Swaps uncommitted driver port `i` onto its best-ranked sink port that
    /// keeps both affected pairs loop-free; commits `i` on success.
    fn try_move(&mut self, i: usize) -> bool {
        let j = self.guess[i];
        let ranked = self.ranked;
        for &j2 in &ranked[i] {
            if j2 == j || self.dg[i] != self.sg[j2] {
                continue;
            }
            let i2 = self.holder[j2];
            if i2 == i {
                continue;
            }
            let was = self.committed[i2];
            self.committed[i2] = false;
            if !self.closes(i, j2) {
                self.guess[i] = j2;
                self.guess[i2] = j;
                self.committed[i] = true;
                if !was || !self.closes(i2, j) {
                    self.committed[i2] = was;
                    self.holder[j2] = i;
                    self.holder[j] = i2;
                    return true;
                }
                self.committed[i] = false;
                self.guess[i] = j;
                self.guess[i2] = j2;
            }
            self.committed[i2] = was;
        }
        false
    }
}

struct Costs {
    dist: Vec<Vec<f64>>,
    diag: f64,
}

const FORBIDDEN: f64 = 1e3;
const ORIENTATION_WEIGHT: f64 = 1e-3;

/// Matches driver ports to sink ports of the same direction (and group) by
/// minimum total Euclidean port distance, with an orientation tie-breaker
/// favouring sinks ahead of the driver's wire. Pairs that close a
/// combinational loop are then repaired by swapping the driver onto its
/// next-ranked candidate.
pub fn proximity_attack(view: &ExposureView, params: &ProximityParams) -> Result<(RecoveredMapping, CandidateTable), AttackError> {
    let start = Instant::now();
    let nd = view.driver_ports.len();
    let (dg, sg) = groups(view, &params.confine);
    let diag = view.spec.diagonal();
    let gate_site: HashMap<&str, crate::layout::Site> = view.gates.iter().map(|g| (g.name.as_str(), g.site)).collect();

    // Costs are indexed by global port indices; cross-direction entries stay
    // unused.
    let mut dist = vec![Vec::new(); nd];
    for (i, dp) in view.driver_ports.iter().enumerate() {
        let from = gate_site[dp.driver.as_str()];
        let heading = (
            (dp.port.site.x - from.x) as f64,
            (dp.port.site.y - from.y) as f64,
        );
        let hn = (heading.0 * heading.0 + heading.1 * heading.1).sqrt();
        dist[i] = view
            .sink_ports
            .iter()
            .enumerate()
            .map(|(j, sp)| {
                let mut c = dp.port.site.euclid(sp.port.site);
                if params.orientation && hn > 0.0 && c > 0.0 {
                    let v = ((sp.port.site.x - dp.port.site.x) as f64, (sp.port.site.y - dp.port.site.y) as f64);
                    let cos = (v.0 * heading.0 + v.1 * heading.1) / (hn * c);
                    c += ORIENTATION_WEIGHT * (1.0 - cos) / 2.0;
                }
                if dg[i] != sg[j] {
                    c += FORBIDDEN * diag;
                }
                c
            })
            .collect();
    }
    let costs = Costs { dist, diag };
    let cost = |i: usize, j: usize| costs.dist[i][j];

    let mut guess = vec![usize::MAX; nd];
    let mut matching = Vec::new();
    for dir in [Direction::BottomToTop, Direction::TopToBottom] {
        let ds = view.driver_ports_of(dir);
        let ss = view.sink_ports_of(dir);
        if ds.is_empty() {
            continue;
        }
        let (assign, how) = if ds.len() > params.greedy_above {
            (greedy_assign(&costs, &ds, &ss), Matching::Greedy)
        } else {
            (hungarian(&costs, &ds, &ss), Matching::Hungarian)
        };
        for (a, b) in assign.into_iter().enumerate() {
            guess[ds[a]] = ss[b];
        }
        matching.push((dir, how));
    }

    let mut graph = LoopGraph::new(view);
    // Ranked same-direction candidates per driver port.
    let ranked: Vec<Vec<usize>> = (0..nd)
        .map(|i| {
            let mut v = view.sink_ports_of(view.driver_ports[i].port.direction);
            v.sort_by(|&x, &y| cost(i, x).total_cmp(&cost(i, y)).then(x.cmp(&y)));
            v
        })
        .collect();
    let (repaired, relaxed) = if params.loop_pruning {
        let mut r = Repair {
            graph: &mut graph,
            holder: vec![0; view.sink_ports.len()],
            committed: vec![false; nd],
            guess: &mut guess,
            ranked: &ranked,
            dg: &dg,
            sg: &sg,
        };
        r.run(&costs)
    } else {
        (0, Vec::new())
    };

    let confidence = (0..nd)
        .map(|i| {
            let chosen = cost(i, guess[i]);
            let alt = ranked[i]
                .iter()
                .filter(|&&j| j != guess[i] && dg[i] == sg[j])
                .map(|&j| cost(i, j))
                .next();
            match alt {
                None => 1.0,
                Some(a) if a + chosen > 0.0 => ((a - chosen) / (a + chosen)).clamp(0.0, 1.0),
                Some(_) => 0.0,
            }
        })
        .collect();

    let mut source = vec![0; view.sink_ports.len()];
    for (i, &j) in guess.iter().enumerate() {
        source[j] = i;
    }
    let entries = (0..nd)
        .map(|i| {
            let cone = graph.backward_cone(i, &source);
            let keep = if params.candidates == 0 { usize::MAX } else { params.candidates };
            ranked[i]
                .iter()
                .take(keep)
                .map(|&j| Candidate {
                    sink: j,
                    distance: view.driver_ports[i].port.site.euclid(view.sink_ports[j].port.site),
                    loop_excluded: graph.sink_gates[j].iter().any(|&g| cone[g]),
                    ip_confined: dg[i] != sg[j],
                })
                .collect()
        })
        .collect();

    Ok((
        RecoveredMapping {
            guess,
            confidence,
            seed: params.seed,
            heuristics: Heuristics {
                one_sink_per_driver: true,
                proximity: true,
                orientation: params.orientation,
                loop_pruning: params.loop_pruning,
                switchbox_groups: view.switchboxes.is_some(),
                ip_confinement: !params.confine.is_empty(),
            },
            matching,
            repaired,
            relaxed,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        },
        CandidateTable { entries },
    ))
}

const SCALE: f64 = 1e4;

fn hungarian(c: &Costs, ds: &[usize], ss: &[usize]) -> Vec<usize> {
    let n = ds.len();
    let cap = 2.0 * FORBIDDEN * c.diag;
    let w: Vec<i64> = ds
        .iter()
        .flat_map(|&i| ss.iter().map(move |&j| -(c.dist[i][j].min(cap) * SCALE).round() as i64))
        .collect();
    let weights = Matrix::from_vec(n, n, w).expect("square matrix");
    kuhn_munkres(&weights).1
}

fn greedy_assign(c: &Costs, ds: &[usize], ss: &[usize]) -> Vec<usize> {
    let n = ds.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (a, &i) in ds.iter().enumerate() {
        for (b, &j) in ss.iter().enumerate() {
            pairs.push((c.dist[i][j], a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut out = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, a, b) in pairs {
        if out[a] == usize::MAX && !taken[b] {
            out[a] = b;
            taken[b] = true;
        }
    }
    out
}

/// A uniformly random direction-respecting bijection (within switchboxes
/// when membership is visible).
pub fn random_guess_baseline(view: &ExposureView, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dg, sg) = groups(view, &[]);
    let mut guess = vec![usize::MAX; view.driver_ports.len()];
    for dir in [Direction::BottomToTop, Direction::TopToBottom] {
        let mut by_group: std::collections::BTreeMap<(usize, usize), (Vec<usize>, Vec<usize>)> = Default::default();
        for i in view.driver_ports_of(dir) {
            by_group.entry(dg[i]).or_default().0.push(i);
        }
        for j in view.sink_ports_of(dir) {
            by_group.entry(sg[j]).or_default().1.push(j);
        }
        for (_, (ds, mut ss)) in by_group {
            ss.shuffle(&mut rng);
            for (i, j) in ds.into_iter().zip(ss) {
                guess[i] = j;
            }
        }
    }
    guess
}

/// Black-box access to a working chip: frame inputs in, frame outputs out.
pub trait Oracle {
    fn input_names(&self) -> Vec<String>;
    fn output_names(&self) -> Vec<String>;
    fn query(&mut self, inputs: &[bool]) -> Vec<bool>;
}

/// Oracle backed by simulation of the original netlist.
pub struct NetlistOracle {
    netlist: Netlist,
    pub queries: usize,
}

impl NetlistOracle {
    pub fn new(netlist: Netlist) -> Self {
        NetlistOracle { netlist, queries: 0 }
    }
}

impl Oracle for NetlistOracle {
    fn input_names(&self) -> Vec<String> {
        self.netlist.frame_input_names()
    }

    fn output_names(&self) -> Vec<String> {
        self.netlist.frame_outputs().into_iter().map(|(s, _)| s).collect()
    }

    fn query(&mut self, inputs: &[bool]) -> Vec<bool> {
        self.queries += 1;
        let block = PatternBlock::from_patterns(&[inputs.to_vec()], inputs.len());
        simulate(&self.netlist, &block).expect("oracle simulation").pattern(0)
    }
}

/// One switchbox sink port driven through a key-controlled 4:1 selector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySlot {
    pub switchbox: usize,
    pub sink_port: usize,
    /// Driver port selected by key value `v` (`None` when ruled out because
    /// it would close a loop).
    pub candidates: [Option<usize>; 4],
    pub key_bits: [String; 2],
}

/// The attacker's keyed netlist: attacked switchboxes become selectors,
/// every other port pair comes from a fixed guess.
#[derive(Debug, Clone)]
pub struct LockedModel {
    pub netlist: Netlist,
    pub key_inputs: Vec<String>,
    pub slots: Vec<KeySlot>,
}

const KEY_PREFIX: &str = "keyin$";
const MUX_PREFIX: &str = "keymux$";
const INV: CellType = CellType { kind: CellKind::Inv, arity: 1 };
const BUF: CellType = CellType { kind: CellKind::Buf, arity: 1 };
const AND3: CellType = CellType { kind: CellKind::And, arity: 3 };

pub fn locked_model(view: &ExposureView, boxes: &[usize], fixed: &[usize]) -> Result<LockedModel, AttackError> {
    let members = view.switchboxes.as_ref().ok_or(AttackError::NoMembership)?;
    view.validate_guess(fixed)?;
    let mut fixed_src = vec![0; view.sink_ports.len()];
    for (i, &j) in fixed.iter().enumerate() {
        fixed_src[j] = i;
    }
    for &b in boxes {
        if b >= members.len() {
            return Err(AttackError::UnknownBox(b));
        }
    }
    let mut keyed: HashMap<usize, usize> = HashMap::new(); // sink port -> box
    for &b in boxes {
        for &j in &members[b].sinks {
            keyed.insert(j, b);
        }
    }
    let gate_index: HashMap<&str, usize> = view.gates.iter().enumerate().map(|(k, g)| (g.name.as_str(), k)).collect();
    // Fanout over the known part of the design.
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); view.gates.len()];
    for (k, g) in view.gates.iter().enumerate() {
        if g.cell.is_sequential() {
            continue;
        }
        for f in &g.fanins {
            let src = match f {
                ViewSignal::Net(s) => gate_index.get(s.as_str()).copied(),
                ViewSignal::Port(j) if !keyed.contains_key(j) => {
                    Some(gate_index[view.driver_ports[fixed_src[*j]].driver.as_str()])
                }
                _ => None,
            };
            if let Some(s) = src {
                succ[s].push(k);
            }
        }
    }
    let reach = |from: &[usize]| -> HashSet<usize> {
        let mut seen: HashSet<usize> = from.iter().copied().collect();
        let mut stack: Vec<usize> = from.to_vec();
        while let Some(g) = stack.pop() {
            for &h in &succ[g] {
                if !view.gates[h].cell.is_sequential() && seen.insert(h) {
                    stack.push(h);
                }
            }
        }
        seen
    };

    let mut slots = Vec::new();
    for &b in boxes {
        for &j in &members[b].sinks {
            let sinks: Vec<usize> = view.sink_ports[j]
                .sinks
                .iter()
                .filter(|(g, _)| !view.gates[gate_index[g.as_str()]].cell.is_sequential())
                .map(|(g, _)| gate_index[g.as_str()])
                .collect();
            let cone = reach(&sinks);
            let mut candidates = [None; 4];
            for (v, &i) in members[b].drivers.iter().enumerate() {
                let d = gate_index[view.driver_ports[i].driver.as_str()];
                if !cone.contains(&d) {
                    candidates[v] = Some(i);
                }
            }
            let s = slots.len();
            slots.push(KeySlot {
                switchbox: b,
                sink_port: j,
                candidates,
                key_bits: [format!("{KEY_PREFIX}{s}_0"), format!("{KEY_PREFIX}{s}_1")],
            });
        }
    }

    let mut builder = NetlistBuilder::new(format!("{}_keyed", view.design));
    for name in view.primary_inputs.iter().chain(view.gates.iter().map(|g| &g.name)) {
        if name.starts_with(KEY_PREFIX) || name.starts_with(MUX_PREFIX) {
            return Err(AttackError::NameClash(name.clone()));
        }
    }
    for i in &view.primary_inputs {
        builder.add_input(i);
    }
    let mut key_inputs = Vec::new();
    for slot in &slots {
        for k in &slot.key_bits {
            builder.add_input(k);
            key_inputs.push(k.clone());
        }
    }
    for o in &view.primary_outputs {
        builder.add_output(o);
    }
    let mut mux_of: HashMap<usize, String> = HashMap::new();
    for (s, slot) in slots.iter().enumerate() {
        let [k0, k1] = &slot.key_bits;
        let n0 = format!("{MUX_PREFIX}{s}_n0");
        let n1 = format!("{MUX_PREFIX}{s}_n1");
        builder.add_gate(&n0, INV, &[k0]);
        builder.add_gate(&n1, INV, &[k1]);
        let mut terms = Vec::new();
        for (v, c) in slot.candidates.iter().enumerate() {
            let Some(i) = c else { continue };
            let b0 = if v & 1 == 1 { k0.as_str() } else { n0.as_str() };
            let b1 = if v & 2 == 2 { k1.as_str() } else { n1.as_str() };
            let t = format!("{MUX_PREFIX}{s}_t{v}");
            builder.add_gate(&t, AND3, &[&view.driver_ports[*i].driver, b1, b0]);
            terms.push(t);
        }
        let out = format!("{MUX_PREFIX}{s}");
        let refs: Vec<&str> = terms.iter().map(|t| t.as_str()).collect();
        let cell = match refs.len() {
            0 | 1 => BUF,
            k => CellType::new(CellKind::Or, k).expect("at most four terms"),
        };
        if refs.is_empty() {
            // Every candidate closes a loop; the slot reads its key bit.
            builder.add_gate(&out, cell, &[k0]);
        } else {
            builder.add_gate(&out, cell, &refs);
        }
        mux_of.insert(slot.sink_port, out);
    }
    for g in &view.gates {
        let fanins: Vec<&str> = g
            .fanins
            .iter()
            .map(|f| match f {
                ViewSignal::Input(s) | ViewSignal::Net(s) => s.as_str(),
                ViewSignal::Port(j) => match mux_of.get(j) {
                    Some(m) => m.as_str(),
                    None => view.driver_ports[fixed_src[*j]].driver.as_str(),
                },
            })
            .collect();
        builder.add_gate(&g.name, g.cell, &fanins);
    }
    let netlist = builder.build_allow_cycles()?;
    if !netlist.is_acyclic() {
        return Err(AttackError::CyclicModel);
    }
    Ok(LockedModel {
        netlist,
        key_inputs,
        slots,
    })
}

impl LockedModel {
    /// Full mapping for a key: `fixed` with the attacked slots overwritten.
    pub fn decode(&self, key: &[bool], fixed: &[usize]) -> Vec<usize> {
        let mut guess = fixed.to_vec();
        for (s, slot) in self.slots.iter().enumerate() {
            let v = key[2 * s] as usize | (key[2 * s + 1] as usize) << 1;
            if let Some(i) = slot.candidates[v] {
                guess[i] = slot.sink_port;
            }
        }
        guess
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatAttackLimits {
    pub wall_time: Duration,
    pub conflicts_per_call: Option<u64>,
}

impl Default for SatAttackLimits {
    fn default() -> Self {
        SatAttackLimits {
            wall_time: Duration::from_secs(60),
            conflicts_per_call: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SatStatus {
    Solved,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatAttackOutcome {
    pub status: SatStatus,
    pub boxes: Vec<usize>,
    pub key: Vec<bool>,
    pub mapping: Vec<usize>,
    /// Distinguishing input patterns used.
    pub iterations: usize,
    pub conflicts: u64,
    pub wall_time_ms: f64,
}

fn pin(s: &mut Solver, l: Lit, v: bool) {
    s.add_clause(&[if v { l } else { !l }]);
}

/// Oracle-guided key recovery on the selectors of `boxes`. Key patterns that
/// are not permutations, or select a ruled-out driver, are excluded up
/// front.
pub fn sat_attack(
    view: &ExposureView,
    boxes: &[usize],
    fixed: &[usize],
    oracle: &mut dyn Oracle,
    limits: &SatAttackLimits,
) -> Result<SatAttackOutcome, AttackError> {
    let start = Instant::now();
    let model = locked_model(view, boxes, fixed)?;
    let n = &model.netlist;
    let frame = n.frame_input_names();
    let o_in = oracle.input_names();
    let o_out = oracle.output_names();
    let in_pos: HashMap<&str, usize> = o_in.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let key_pos: HashMap<&str, usize> = model.key_inputs.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    if frame.len() != o_in.len() + model.key_inputs.len() {
        return Err(AttackError::Interface(format!(
            "{} model inputs vs {} oracle inputs",
            frame.len() - model.key_inputs.len(),
            o_in.len()
        )));
    }
    let outs = n.frame_outputs();
    let out_net: HashMap<&str, usize> = outs.iter().map(|(s, id)| (s.as_str(), id.index())).collect();
    let out_idx: Vec<usize> = o_out
        .iter()
        .map(|s| out_net.get(s.as_str()).copied().ok_or_else(|| AttackError::Interface(format!("output `{s}`"))))
        .collect::<Result<_, _>>()?;

    let mut s = Solver::new();
    let mut enc = CircuitEncoder::new();
    let x: Vec<Lit> = (0..o_in.len()).map(|_| Lit::pos(s.new_var())).collect();
    let keys: [Vec<Lit>; 2] = std::array::from_fn(|_| (0..model.key_inputs.len()).map(|_| Lit::pos(s.new_var())).collect());
    let wire = |xs: &[Lit], k: &[Lit]| -> Result<Vec<Lit>, AttackError> {
        frame
            .iter()
            .map(|name| {
                if let Some(&p) = in_pos.get(name.as_str()) {
                    Ok(xs[p])
                } else if let Some(&p) = key_pos.get(name.as_str()) {
                    Ok(k[p])
                } else {
                    Err(AttackError::Interface(format!("input `{name}`")))
                }
            })
            .collect()
    };
    for k in &keys {
        key_constraints(&mut s, &model, k);
    }
    let c1 = enc.encode(&mut s, n, &wire(&x, &keys[0])?);
    let c2 = enc.encode(&mut s, n, &wire(&x, &keys[1])?);
    let diffs: Vec<Lit> = out_idx.iter().map(|&o| enc.xor(&mut s, c1[o], c2[o])).collect();
    let miter = enc.or(&mut s, &diffs);

    let mut iterations = 0;
    let status = loop {
        if start.elapsed() > limits.wall_time {
            break SatStatus::Timeout;
        }
        match s.solve_limited(&[miter], limits.conflicts_per_call) {
            SolveResult::Unsat => break SatStatus::Solved,
            SolveResult::Unknown => break SatStatus::Timeout,
            SolveResult::Sat => {
                let dip: Vec<bool> = x.iter().map(|&l| s.lit_model_value(l)).collect();
                let y = oracle.query(&dip);
                let consts: Vec<Lit> = dip.iter().map(|&b| enc.constant(&mut s, b)).collect();
                for k in &keys {
                    let c = enc.encode(&mut s, n, &wire(&consts, k)?);
                    for (&o, &v) in out_idx.iter().zip(&y) {
                        pin(&mut s, c[o], v);
                    }
                }
                iterations += 1;
            }
        }
    };
    let key: Vec<bool> = if status == SatStatus::Solved && s.solve() == SolveResult::Sat {
        keys[0].iter().map(|&l| s.lit_model_value(l)).collect()
    } else {
        vec![false; model.key_inputs.len()]
    };
    Ok(SatAttackOutcome {
        status,
        boxes: boxes.to_vec(),
        mapping: model.decode(&key, fixed),
        key,
        iterations,
        conflicts: s.conflicts,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn key_constraints(s: &mut Solver, model: &LockedModel, k: &[Lit]) {
    // Literals asserting "slot s selects v" as a pair.
    let sel = |slot: usize, v: usize| -> [Lit; 2] {
        let b0 = k[2 * slot];
        let b1 = k[2 * slot + 1];
        [if v & 1 == 1 { b0 } else { !b0 }, if v & 2 == 2 { b1 } else { !b1 }]
    };
    for (a, slot) in model.slots.iter().enumerate() {
        for v in 0..4 {
            if slot.candidates[v].is_none() {
                let [p, q] = sel(a, v);
                s.add_clause(&[!p, !q]);
            }
        }
        for (b, other) in model.slots.iter().enumerate().skip(a + 1) {
            if other.switchbox != slot.switchbox {
                continue;
            }
            for v in 0..4 {
                let [p, q] = sel(a, v);
                let [r, t] = sel(b, v);
                s.add_clause(&[!p, !q, !r, !t]);
            }
        }
    }
}
