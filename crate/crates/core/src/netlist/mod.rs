//! Gate-level netlists: representation, BENCH I/O, bit-parallel simulation,
//! unit-delay timing and equivalence checking.

mod bench;
mod equiv;
mod sim;
mod sta;
pub mod techmap;

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{parse_bench, parse_bench_named, to_bench};
pub use equiv::{check_equivalence, Counterexample, EquivMode, Verdict};
pub use sim::{simulate, simulate_nets, PatternBlock};
pub use sta::{sta_unit_delay, Timing};

/// Largest fanin count accepted for AND/NAND/OR/NOR cells.
pub const MAX_ARITY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GateId(pub u32);

impl NetId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl GateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("undefined signal `{name}`{}", fmt_line(*.line))]
    UndefinedSignal { name: String, line: Option<usize> },
    #[error("duplicate definition of `{name}`{}", fmt_line(*.line))]
    DuplicateDefinition { name: String, line: Option<usize> },
    #[error("{kind} gate `{name}` has {got} inputs{}", fmt_line(*.line))]
    ArityMismatch {
        name: String,
        kind: String,
        got: usize,
        line: Option<usize>,
    },
    #[error("unknown cell type `{0}`")]
    UnknownCell(String),
    #[error("combinational cycle through {} gates", .0.len())]
    Cycle(Vec<GateId>),
    #[error("pattern block has {got} lanes, expected {expected}")]
    LaneMismatch { expected: usize, got: usize },
    #[error("interface mismatch: {0}")]
    InterfaceMismatch(String),
    #[error("exhaustive check limited to {max} inputs, design has {got}")]
    TooManyInputs { max: usize, got: usize },
}

fn fmt_line(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellKind {
    Inv,
    Buf,
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Dff,
}

impl CellKind {
    pub const ALL: [CellKind; 9] = [
        CellKind::Inv,
        CellKind::Buf,
        CellKind::And,
        CellKind::Nand,
        CellKind::Or,
        CellKind::Nor,
        CellKind::Xor,
        CellKind::Xnor,
        CellKind::Dff,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            CellKind::Inv => "NOT",
            CellKind::Buf => "BUFF",
            CellKind::And => "AND",
            CellKind::Nand => "NAND",
            CellKind::Or => "OR",
            CellKind::Nor => "NOR",
            CellKind::Xor => "XOR",
            CellKind::Xnor => "XNOR",
            CellKind::Dff => "DFF",
        }
    }

    /// Accepts BENCH keywords case-insensitively, including the NOT/INV and
    /// BUF/BUFF aliases.
    pub fn from_keyword(word: &str) -> Option<CellKind> {
        Some(match word.to_ascii_uppercase().as_str() {
            "NOT" | "INV" => CellKind::Inv,
            "BUF" | "BUFF" => CellKind::Buf,
            "AND" => CellKind::And,
            "NAND" => CellKind::Nand,
            "OR" => CellKind::Or,
            "NOR" => CellKind::Nor,
            "XOR" => CellKind::Xor,
            "XNOR" => CellKind::Xnor,
            "DFF" => CellKind::Dff,
            _ => return None,
        })
    }

    fn arity_range(self) -> (usize, usize) {
        match self {
            CellKind::Inv | CellKind::Buf | CellKind::Dff => (1, 1),
            CellKind::Xor | CellKind::Xnor => (2, 2),
            _ => (2, MAX_ARITY),
        }
    }

    /// Whether permuting the inputs leaves the function unchanged.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, CellKind::Dff)
    }

    #[inline]
    pub fn eval_word(self, inputs: impl Iterator<Item = u64>) -> u64 {
        match self {
            CellKind::Inv => !inputs.fold(0, |_, x| x),
            CellKind::Buf | CellKind::Dff => inputs.fold(0, |_, x| x),
            CellKind::And => inputs.fold(!0, |a, x| a & x),
            CellKind::Nand => !inputs.fold(!0, |a, x| a & x),
            CellKind::Or => inputs.fold(0, |a, x| a | x),
            CellKind::Nor => !inputs.fold(0, |a, x| a | x),
            CellKind::Xor => inputs.fold(0, |a, x| a ^ x),
            CellKind::Xnor => !inputs.fold(0, |a, x| a ^ x),
        }
    }

    pub fn eval_bool(self, inputs: &[bool]) -> bool {
        let w = self.eval_word(inputs.iter().map(|&b| if b { !0 } else { 0 }));
        w & 1 == 1
    }
}

/// A library cell: a Boolean function kind and its input count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellType {
    pub kind: CellKind,
    pub arity: u8,
}

impl CellType {
    pub const INV: CellType = CellType { kind: CellKind::Inv, arity: 1 };
    pub const BUF: CellType = CellType { kind: CellKind::Buf, arity: 1 };
    pub const DFF: CellType = CellType { kind: CellKind::Dff, arity: 1 };
    pub const NAND2: CellType = CellType { kind: CellKind::Nand, arity: 2 };
    pub const NOR2: CellType = CellType { kind: CellKind::Nor, arity: 2 };
    pub const AND2: CellType = CellType { kind: CellKind::And, arity: 2 };
    pub const OR2: CellType = CellType { kind: CellKind::Or, arity: 2 };
    pub const XOR2: CellType = CellType { kind: CellKind::Xor, arity: 2 };
    pub const XNOR2: CellType = CellType { kind: CellKind::Xnor, arity: 2 };

    pub fn new(kind: CellKind, arity: usize) -> Option<CellType> {
        let (lo, hi) = kind.arity_range();
        (lo..=hi).contains(&arity).then_some(CellType {
            kind,
            arity: arity as u8,
        })
    }

    /// Library-style name such as `NAND2`, `INV` or `DFF`.
    pub fn lib_name(&self) -> String {
        match self.kind {
            CellKind::Inv => "INV".into(),
            CellKind::Buf => "BUF".into(),
            CellKind::Dff => "DFF".into(),
            k => format!("{}{}", k.keyword(), self.arity),
        }
    }

    /// Parses library-style names (`NAND3`, `INV`, `XOR2`, ...).
    pub fn from_lib_name(name: &str) -> Option<CellType> {
        let upper = name.to_ascii_uppercase();
        let split = upper
            .find(|c: char| c.is_ascii_digit())
            .unwrap_or(upper.len());
        let (word, digits) = upper.split_at(split);
        let kind = CellKind::from_keyword(word)?;
        let arity = if digits.is_empty() {
            kind.arity_range().0
        } else {
            digits.parse().ok()?
        };
        CellType::new(kind, arity)
    }

    pub fn is_sequential(&self) -> bool {
        self.kind == CellKind::Dff
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.lib_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Net {
    pub name: String,
    /// `None` for primary inputs.
    pub driver: Option<GateId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub cell: CellType,
    pub fanins: Vec<NetId>,
    pub output: NetId,
}

/// Where a net is consumed: gate and input pin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Sink {
    pub gate: GateId,
    pub pin: u8,
}

/// An immutable gate-level netlist. Each gate drives exactly one net, and the
/// gate shares its name with that net.
#[derive(Debug, Clone)]
pub struct Netlist {
    name: String,
    nets: Vec<Net>,
    gates: Vec<Gate>,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    net_index: HashMap<String, NetId>,
    fanouts: Vec<Vec<Sink>>,
    eval_order: Vec<GateId>,
    acyclic: bool,
}

impl Netlist {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate(&self, id: GateId) -> &Gate {
        &self.gates[id.index()]
    }

    pub fn net(&self, id: NetId) -> &Net {
        &self.nets[id.index()]
    }

    pub fn gate_name(&self, id: GateId) -> &str {
        &self.nets[self.gates[id.index()].output.index()].name
    }

    pub fn primary_inputs(&self) -> &[NetId] {
        &self.inputs
    }

    pub fn primary_outputs(&self) -> &[NetId] {
        &self.outputs
    }

    pub fn net_id(&self, name: &str) -> Option<NetId> {
        self.net_index.get(name).copied()
    }

    pub fn gate_id(&self, name: &str) -> Option<GateId> {
        self.net_id(name).and_then(|n| self.nets[n.index()].driver)
    }

    pub fn fanouts(&self, net: NetId) -> &[Sink] {
        &self.fanouts[net.index()]
    }

    pub fn gate_ids(&self) -> impl Iterator<Item = GateId> + '_ {
        (0..self.gates.len() as u32).map(GateId)
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    pub fn num_nets(&self) -> usize {
        self.nets.len()
    }

    pub fn is_output(&self, net: NetId) -> bool {
        self.outputs.contains(&net)
    }

    pub fn is_acyclic(&self) -> bool {
        self.acyclic
    }

    /// Driver gate of a gate's fanin pin, unless the pin is fed by a primary input.
    pub fn fanin_driver(&self, gate: GateId, pin: usize) -> Option<GateId> {
        self.nets[self.gates[gate.index()].fanins[pin].index()].driver
    }

    /// Combinational gates in evaluation order. For acyclic netlists this is
    /// a topological order; for cyclic ones, feedback edges read the
    /// previous (initially zero) value.
    pub fn eval_order(&self) -> &[GateId] {
        &self.eval_order
    }

    pub fn dffs(&self) -> impl Iterator<Item = GateId> + '_ {
        self.gate_ids()
            .filter(|&g| self.gates[g.index()].cell.is_sequential())
    }

    /// Inputs of the combinational frame: primary inputs, then DFF outputs.
    pub fn frame_inputs(&self) -> Vec<NetId> {
        let mut v = self.inputs.clone();
        v.extend(self.dffs().map(|g| self.gates[g.index()].output));
        v
    }

    pub fn frame_input_names(&self) -> Vec<String> {
        self.frame_inputs()
            .into_iter()
            .map(|n| self.nets[n.index()].name.clone())
            .collect()
    }

    /// Outputs of the combinational frame: primary outputs, then DFF data
    /// inputs (labelled `<dff>.D`).
    pub fn frame_outputs(&self) -> Vec<(String, NetId)> {
        let mut v: Vec<(String, NetId)> = self
            .outputs
            .iter()
            .map(|&n| (self.nets[n.index()].name.clone(), n))
            .collect();
        for g in self.dffs() {
            let gate = &self.gates[g.index()];
            v.push((format!("{}.D", self.gate_name(g)), gate.fanins[0]));
        }
        v
    }

    /// Gate-type census keyed by library name.
    pub fn cell_census(&self) -> std::collections::BTreeMap<String, usize> {
        let mut m = std::collections::BTreeMap::new();
        for g in &self.gates {
            *m.entry(g.cell.lib_name()).or_insert(0) += 1;
        }
        m
    }

    /// Rebuilds a builder holding this netlist's definitions.
    pub fn to_builder(&self) -> NetlistBuilder {
        let mut b = NetlistBuilder::new(self.name.clone());
        for &i in &self.inputs {
            b.add_input(&self.nets[i.index()].name);
        }
        for &o in &self.outputs {
            b.add_output(&self.nets[o.index()].name);
        }
        for g in &self.gates {
            let fanins: Vec<&str> = g
                .fanins
                .iter()
                .map(|f| self.nets[f.index()].name.as_str())
                .collect();
            b.add_gate(&self.nets[g.output.index()].name, g.cell, &fanins);
        }
        b
    }
}

/// Result of [`acyclicity_check`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Acyclicity {
    Ok(Vec<GateId>),
    Cycle(Vec<GateId>),
}

/// Returns a topological order of the combinational gates, or a shortest
/// combinational cycle. DFFs break loops.
pub fn acyclicity_check(n: &Netlist) -> Acyclicity {
    match topo_order(&n.gates, &n.nets, &n.fanouts) {
        Ok(order) => Acyclicity::Ok(order),
        Err(_) => Acyclicity::Cycle(shortest_cycle(n)),
    }
}

fn topo_order(gates: &[Gate], nets: &[Net], fanouts: &[Vec<Sink>]) -> Result<Vec<GateId>, ()> {
    let mut indeg = vec![0usize; gates.len()];
    for (i, g) in gates.iter().enumerate() {
        if g.cell.is_sequential() {
            continue;
        }
        indeg[i] = g
            .fanins
            .iter()
            .filter(|f| matches!(nets[f.index()].driver, Some(d) if !gates[d.index()].cell.is_sequential()))
            .count();
    }
    let mut queue: VecDeque<GateId> = (0..gates.len())
        .filter(|&i| !gates[i].cell.is_sequential() && indeg[i] == 0)
        .map(|i| GateId(i as u32))
        .collect();
    let mut order = Vec::with_capacity(gates.len());
    while let Some(g) = queue.pop_front() {
        order.push(g);
        for s in &fanouts[gates[g.index()].output.index()] {
            if gates[s.gate.index()].cell.is_sequential() {
                continue;
            }
            indeg[s.gate.index()] -= 1;
            if indeg[s.gate.index()] == 0 {
                queue.push_back(s.gate);
            }
        }
    }
    let comb = gates.iter().filter(|g| !g.cell.is_sequential()).count();
    if order.len() == comb {
        Ok(order)
    } else {
        Err(())
    }
}

/// Evaluation order tolerant of cycles: depth-first post-order over fanins,
/// ignoring back edges.
fn cyclic_eval_order(gates: &[Gate], nets: &[Net]) -> Vec<GateId> {
    let mut state = vec![0u8; gates.len()];
    let mut order = Vec::with_capacity(gates.len());
    for root in 0..gates.len() {
        if state[root] != 0 || gates[root].cell.is_sequential() {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        state[root] = 1;
        while let Some(&mut (g, ref mut pin)) = stack.last_mut() {
            if *pin < gates[g].fanins.len() {
                let f = gates[g].fanins[*pin];
                *pin += 1;
                if let Some(d) = nets[f.index()].driver {
                    let d = d.index();
                    if state[d] == 0 && !gates[d].cell.is_sequential() {
                        state[d] = 1;
                        stack.push((d, 0));
                    }
                }
            } else {
                state[g] = 2;
                order.push(GateId(g as u32));
                stack.pop();
            }
        }
    }
    order
}

fn shortest_cycle(n: &Netlist) -> Vec<GateId> {
    let succ = |g: GateId| -> Vec<GateId> {
        n.fanouts[n.gates[g.index()].output.index()]
            .iter()
            .map(|s| s.gate)
            .filter(|s| !n.gates[s.index()].cell.is_sequential())
            .collect()
    };
    let mut best: Option<Vec<GateId>> = None;
    for start in n.gate_ids() {
        if n.gates[start.index()].cell.is_sequential() {
            continue;
        }
        // BFS from start back to itself.
        let mut parent: HashMap<GateId, GateId> = HashMap::new();
        let mut queue = VecDeque::from([start]);
        let mut found = None;
        'bfs: while let Some(g) = queue.pop_front() {
            for s in succ(g) {
                if s == start {
                    found = Some(g);
                    break 'bfs;
                }
                if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(s) {
                    e.insert(g);
                    queue.push_back(s);
                }
            }
        }
        if let Some(mut last) = found {
            let mut cycle = vec![last];
            while last != start {
                last = parent[&last];
                cycle.push(last);
            }
            cycle.reverse();
            if best.as_ref().is_none_or(|b| cycle.len() < b.len()) {
                best = Some(cycle);
            }
        }
    }
    best.unwrap_or_default()
}

/// Collects netlist definitions by signal name; forward references are
/// allowed and resolved in [`NetlistBuilder::build`].
#[derive(Debug, Clone)]
pub struct NetlistBuilder {
    name: String,
    inputs: Vec<(String, Option<usize>)>,
    outputs: Vec<(String, Option<usize>)>,
    gates: Vec<PendingGate>,
}

#[derive(Debug, Clone)]
struct PendingGate {
    name: String,
    cell: CellType,
    fanins: Vec<String>,
    line: Option<usize>,
}

impl NetlistBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        NetlistBuilder {
            name: name.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            gates: Vec::new(),
        }
    }

    pub fn add_input(&mut self, name: &str) -> &mut Self {
        self.inputs.push((name.to_string(), None));
        self
    }

    pub fn add_output(&mut self, name: &str) -> &mut Self {
        self.outputs.push((name.to_string(), None));
        self
    }

    pub fn add_gate(&mut self, name: &str, cell: CellType, fanins: &[&str]) -> &mut Self {
        self.gates.push(PendingGate {
            name: name.to_string(),
            cell,
            fanins: fanins.iter().map(|s| s.to_string()).collect(),
            line: None,
        });
        self
    }

    pub(crate) fn add_input_at(&mut self, name: &str, line: usize) {
        self.inputs.push((name.to_string(), Some(line)));
    }

    pub(crate) fn add_output_at(&mut self, name: &str, line: usize) {
        self.outputs.push((name.to_string(), Some(line)));
    }

    pub(crate) fn add_gate_at(&mut self, name: &str, cell: CellType, fanins: Vec<String>, line: usize) {
        self.gates.push(PendingGate {
            name: name.to_string(),
            cell,
            fanins,
            line: Some(line),
        });
    }

    pub fn has_signal(&self, name: &str) -> bool {
        self.inputs.iter().any(|(n, _)| n == name) || self.gates.iter().any(|g| g.name == name)
    }

    /// Builds and checks the netlist, rejecting combinational cycles.
    pub fn build(self) -> Result<Netlist, NetlistError> {
        let n = self.build_allow_cycles()?;
        if !n.acyclic {
            return match acyclicity_check(&n) {
                Acyclicity::Cycle(c) => Err(NetlistError::Cycle(c)),
                Acyclicity::Ok(_) => unreachable!(),
            };
        }
        Ok(n)
    }

    /// Builds the netlist without rejecting combinational cycles (used for
    /// attacker reassemblies, which may close loops).
    pub fn build_allow_cycles(self) -> Result<Netlist, NetlistError> {
        let mut nets: Vec<Net> = Vec::with_capacity(self.inputs.len() + self.gates.len());
        let mut net_index: HashMap<String, NetId> = HashMap::new();
        let mut define = |name: &str, driver: Option<GateId>, line: Option<usize>, nets: &mut Vec<Net>| {
            if net_index.contains_key(name) {
                return Err(NetlistError::DuplicateDefinition {
                    name: name.to_string(),
                    line,
                });
            }
            let id = NetId(nets.len() as u32);
            nets.push(Net {
                name: name.to_string(),
                driver,
            });
            net_index.insert(name.to_string(), id);
            Ok(id)
        };
        let mut inputs = Vec::with_capacity(self.inputs.len());
        for (name, line) in &self.inputs {
            inputs.push(define(name, None, *line, &mut nets)?);
        }
        let mut outs_of_gates = Vec::with_capacity(self.gates.len());
        for (i, g) in self.gates.iter().enumerate() {
            if g.fanins.len() != g.cell.arity as usize {
                return Err(NetlistError::ArityMismatch {
                    name: g.name.clone(),
                    kind: g.cell.kind.keyword().to_string(),
                    got: g.fanins.len(),
                    line: g.line,
                });
            }
            outs_of_gates.push(define(&g.name, Some(GateId(i as u32)), g.line, &mut nets)?);
        }
        let mut gates = Vec::with_capacity(self.gates.len());
        for (g, out) in self.gates.iter().zip(outs_of_gates) {
            let fanins = g
                .fanins
                .iter()
                .map(|f| {
                    net_index
                        .get(f)
                        .copied()
                        .ok_or_else(|| NetlistError::UndefinedSignal {
                            name: f.clone(),
                            line: g.line,
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            gates.push(Gate {
                cell: g.cell,
                fanins,
                output: out,
            });
        }
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for (name, line) in &self.outputs {
            let id = net_index
                .get(name)
                .copied()
                .ok_or_else(|| NetlistError::UndefinedSignal {
                    name: name.clone(),
                    line: *line,
                })?;
            if outputs.contains(&id) {
                return Err(NetlistError::DuplicateDefinition {
                    name: name.clone(),
                    line: *line,
                });
            }
            outputs.push(id);
        }
        let mut fanouts = vec![Vec::new(); nets.len()];
        for (i, g) in gates.iter().enumerate() {
            for (pin, f) in g.fanins.iter().enumerate() {
                fanouts[f.index()].push(Sink {
                    gate: GateId(i as u32),
                    pin: pin as u8,
                });
            }
        }
        let (eval_order, acyclic) = match topo_order(&gates, &nets, &fanouts) {
            Ok(o) => (o, true),
            Err(()) => (cyclic_eval_order(&gates, &nets), false),
        };
        Ok(Netlist {
            name: self.name,
            nets,
            gates,
            inputs,
            outputs,
            net_index,
            fanouts,
            eval_order,
            acyclic,
        })
    }
}
