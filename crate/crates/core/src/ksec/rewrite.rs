//! Iterative function-preserving rewriting around preserved instances.
//!
//! Each iteration looks at the uncovered vulnerable gates and the two
//! levels of logic feeding them, and applies at most one rule per target
//! against the netlist as it stood when the iteration began:
//!
//! * `INV(NOR2(x, y))` becomes `NAND2(!x, !y)`
//! * `NOR2(x, y)` becomes `INV(NAND2(!x, !y))`
//! * `AND2(x, y)` becomes `INV(NAND2(x, y))`, `OR2(x, y)` becomes `NAND2(!x, !y)`
//!
//! `!x` reuses the input of an inverter driving `x`, turns an AND2/OR2
//! driver of `x` into NAND2/NOR2, or reuses an inverter reading `x`, before
//! adding one. Rewrites whose footprints overlap one applied earlier in the
//! same iteration wait for the next one. Gates of existing instances are
//! never modified, and a rewrite that would disturb an instance is dropped.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::mine::{coverage, mine_excluding, Instance, StructureInstances};
use super::template::StructureTemplate;
use super::KsecError;
use crate::netlist::{check_equivalence, CellKind, CellType, EquivMode, GateId, Netlist, NetlistBuilder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationCensus {
    pub iteration: usize,
    pub counts: BTreeMap<String, usize>,
    pub instances: usize,
    pub coverage: f64,
    pub vulnerable_covered: usize,
    pub rewrites: usize,
    pub gates: usize,
}

#[derive(Debug, Clone)]
pub struct RewriteOutcome {
    pub netlist: Netlist,
    pub instances: StructureInstances,
    /// Entry 0 is the census before any rewriting.
    pub census: Vec<IterationCensus>,
    /// Original vulnerable gates, by id in the rewritten netlist.
    pub vulnerable: Vec<GateId>,
}

#[derive(Debug, Clone)]
struct NamedInstance {
    template: String,
    nodes: Vec<String>,
    boundary: Vec<String>,
}

#[derive(Debug, Clone)]
struct Defs {
    name: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    gates: Vec<Option<(String, CellType, Vec<String>)>>,
    index: HashMap<String, usize>,
}

impl Defs {
    fn from_netlist(n: &Netlist) -> Defs {
        let gates: Vec<Option<(String, CellType, Vec<String>)>> = n
            .gate_ids()
            .map(|g| {
                let gate = n.gate(g);
                Some((
                    n.gate_name(g).to_string(),
                    gate.cell,
                    gate.fanins.iter().map(|f| n.net(*f).name.clone()).collect(),
                ))
            })
            .collect();
        let index = gates
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_ref().expect("fresh").0.clone(), i))
            .collect();
        Defs {
            name: n.name().to_string(),
            inputs: n.primary_inputs().iter().map(|i| n.net(*i).name.clone()).collect(),
            outputs: n.primary_outputs().iter().map(|o| n.net(*o).name.clone()).collect(),
            gates,
            index,
        }
    }

    fn build(&self) -> Result<Netlist, KsecError> {
        let mut b = NetlistBuilder::new(self.name.clone());
        for i in &self.inputs {
            b.add_input(i);
        }
        for o in &self.outputs {
            b.add_output(o);
        }
        for (name, cell, fanins) in self.gates.iter().flatten() {
            let refs: Vec<&str> = fanins.iter().map(String::as_str).collect();
            b.add_gate(name, *cell, &refs);
        }
        Ok(b.build()?)
    }

    fn set(&mut self, name: &str, cell: CellType, fanins: Vec<String>) {
        match self.index.get(name) {
            Some(&i) => self.gates[i] = Some((name.to_string(), cell, fanins)),
            None => {
                self.index.insert(name.to_string(), self.gates.len());
                self.gates.push(Some((name.to_string(), cell, fanins)));
            }
        }
    }

    /// Removes gates from `start` that no longer drive anything, following
    /// their fanins. Returns the removed names.
    fn sweep(&mut self, start: &[String]) -> Vec<String> {
        let mut readers: HashMap<&str, usize> = HashMap::new();
        for (_, _, f) in self.gates.iter().flatten() {
            for x in f {
                *readers.entry(x.as_str()).or_insert(0) += 1;
            }
        }
        let mut readers: HashMap<String, usize> = readers.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let pos: HashSet<String> = self.outputs.iter().cloned().collect();
        let mut stack: Vec<String> = start.to_vec();
        let mut removed = Vec::new();
        while let Some(g) = stack.pop() {
            let Some(&i) = self.index.get(&g) else { continue };
            if self.gates[i].is_none() || pos.contains(&g) || readers.get(&g).copied().unwrap_or(0) > 0 {
                continue;
            }
            let (_, _, fanins) = self.gates[i].take().expect("present");
            for f in fanins {
                if let Some(c) = readers.get_mut(&f) {
                    *c -= 1;
                }
                stack.push(f);
            }
            removed.push(g);
        }
        removed
    }
}

struct Proposal {
    target: String,
    cell: CellType,
    fanins: Vec<String>,
    new_gates: Vec<(String, CellType, Vec<String>)>,
    /// Gates whose outputs the rewrite reads or may orphan.
    reads: Vec<String>,
}

struct Rewriter<'a> {
    n: &'a Netlist,
    covered: &'a HashSet<String>,
    taken: HashSet<String>,
    counter: &'a mut usize,
}

impl Rewriter<'_> {
    fn fresh(&mut self, base: &str) -> String {
        loop {
            *self.counter += 1;
            let name = format!("{base}$rw{}", self.counter);
            if !self.taken.contains(&name) {
                self.taken.insert(name.clone());
                return name;
            }
        }
    }

    fn driver_gate(&self, net: &str) -> Option<GateId> {
        self.n.net_id(net).and_then(|x| self.n.net(x).driver)
    }

    /// Complement of `net` plus any gate that must be created for it.
    fn complement(
        &mut self,
        net: &str,
        new_gates: &mut Vec<(String, CellType, Vec<String>)>,
        reads: &mut Vec<String>,
    ) -> String {
        let n = self.n;
        if let Some(d) = self.driver_gate(net) {
            if n.gate(d).cell == CellType::INV {
                let src = n.net(n.gate(d).fanins[0]).name.clone();
                reads.push(n.gate_name(d).to_string());
                if let Some(dd) = self.driver_gate(&src) {
                    reads.push(n.gate_name(dd).to_string());
                }
                return src;
            }
        }
        if let Some(d) = self.driver_gate(net) {
            let cell = n.gate(d).cell;
            let flip = match cell.kind {
                CellKind::And if cell.arity == 2 => Some(CellType::NAND2),
                CellKind::Or if cell.arity == 2 => Some(CellType::NOR2),
                _ => None,
            };
            if let (Some(c), false) = (flip, self.covered.contains(n.gate_name(d))) {
                let fanins: Vec<String> = n.gate(d).fanins.iter().map(|f| n.net(*f).name.clone()).collect();
                reads.push(n.gate_name(d).to_string());
                reads.extend(n.gate(d).fanins.iter().filter_map(|f| n.net(*f).driver).map(|x| n.gate_name(x).to_string()));
                let name = self.fresh(net);
                new_gates.push((name.clone(), c, fanins));
                return name;
            }
        }
        if let Some(id) = n.net_id(net) {
            let existing = n
                .fanouts(id)
                .iter()
                .map(|s| s.gate)
                .find(|&g| n.gate(g).cell == CellType::INV && !self.covered.contains(n.gate_name(g)));
            if let Some(g) = existing {
                reads.push(n.gate_name(g).to_string());
                return n.gate_name(g).to_string();
            }
        }
        if let Some((name, _, _)) = new_gates.iter().find(|(_, c, f)| *c == CellType::INV && f[0] == net) {
            return name.clone();
        }
        if let Some(d) = self.driver_gate(net) {
            reads.push(n.gate_name(d).to_string());
        }
        let name = self.fresh(net);
        new_gates.push((name.clone(), CellType::INV, vec![net.to_string()]));
        name
    }

    fn propose(&mut self, t: GateId) -> Option<Proposal> {
        let n = self.n;
        let gate = n.gate(t);
        let tname = n.gate_name(t).to_string();
        let fanin_names: Vec<String> = gate.fanins.iter().map(|f| n.net(*f).name.clone()).collect();
        let mut reads: Vec<String> = gate.fanins.iter().filter_map(|f| n.net(*f).driver).map(|d| n.gate_name(d).to_string()).collect();
        let mut new_gates = Vec::new();
        let (cell, fanins) = match (gate.cell.kind, gate.cell.arity) {
            (CellKind::Inv, _) => {
                let h = n.net(gate.fanins[0]).driver?;
                if n.gate(h).cell != CellType::NOR2 || self.covered.contains(n.gate_name(h)) {
                    return None;
                }
                let xs: Vec<String> = n.gate(h).fanins.iter().map(|f| n.net(*f).name.clone()).collect();
                reads.extend(n.gate(h).fanins.iter().filter_map(|f| n.net(*f).driver).map(|d| n.gate_name(d).to_string()));
                let a = self.complement(&xs[0], &mut new_gates, &mut reads);
                let b = self.complement(&xs[1], &mut new_gates, &mut reads);
                (CellType::NAND2, vec![a, b])
            }
            (CellKind::Nor, 2) => {
                let a = self.complement(&fanin_names[0], &mut new_gates, &mut reads);
                let b = self.complement(&fanin_names[1], &mut new_gates, &mut reads);
                let inner = self.fresh(&tname);
                new_gates.push((inner.clone(), CellType::NAND2, vec![a, b]));
                (CellType::INV, vec![inner])
            }
            (CellKind::And, 2) => {
                let inner = self.fresh(&tname);
                new_gates.push((inner.clone(), CellType::NAND2, fanin_names.clone()));
                (CellType::INV, vec![inner])
            }
            (CellKind::Or, 2) => {
                let a = self.complement(&fanin_names[0], &mut new_gates, &mut reads);
                let b = self.complement(&fanin_names[1], &mut new_gates, &mut reads);
                (CellType::NAND2, vec![a, b])
            }
            _ => return None,
        };
        Some(Proposal {
            target: tname,
            cell,
            fanins,
            new_gates,
            reads,
        })
    }
}

fn to_named(n: &Netlist, inst: &Instance) -> NamedInstance {
    NamedInstance {
        template: inst.template.clone(),
        nodes: inst.nodes.iter().map(|g| n.gate_name(*g).to_string()).collect(),
        boundary: inst.boundary.iter().map(|b| n.net(*b).name.clone()).collect(),
    }
}

fn resolve(n: &Netlist, named: &[NamedInstance]) -> Option<StructureInstances> {
    let mut out = Vec::with_capacity(named.len());
    for ni in named {
        out.push(Instance {
            template: ni.template.clone(),
            nodes: ni.nodes.iter().map(|s| n.gate_id(s)).collect::<Option<_>>()?,
            boundary: ni.boundary.iter().map(|s| n.net_id(s)).collect::<Option<_>>()?,
        });
    }
    Some(StructureInstances { instances: out })
}

fn census_of(
    n: &Netlist,
    templates: &[StructureTemplate],
    si: &StructureInstances,
    vulnerable: &[String],
    iteration: usize,
    rewrites: usize,
) -> IterationCensus {
    let covered = si.covered(n.num_gates());
    IterationCensus {
        iteration,
        counts: si.census(templates),
        instances: si.len(),
        coverage: coverage(n, si),
        vulnerable_covered: vulnerable
            .iter()
            .filter(|v| n.gate_id(v).is_some_and(|g| covered[g.index()]))
            .count(),
        rewrites,
        gates: n.num_gates(),
    }
}

/// Mines `n`, then runs `iterations` rewriting rounds, re-mining the
/// uncovered logic after each and checking equivalence with `n`.
pub fn rewrite_iterate(
    n: &Netlist,
    templates: &[StructureTemplate],
    vulnerable: &[GateId],
    iterations: usize,
) -> Result<RewriteOutcome, KsecError> {
    let vuln_names: Vec<String> = vulnerable.iter().map(|g| n.gate_name(*g).to_string()).collect();
    let first = super::mine::mine_structures(n, templates);
    let mut named: Vec<NamedInstance> = first.instances.iter().map(|i| to_named(n, i)).collect();
    let mut cur = n.clone();
    let mut census = vec![census_of(n, templates, &first, &vuln_names, 0, 0)];
    let mut counter = 0usize;
    for it in 1..=iterations {
        let si = resolve(&cur, &named).ok_or_else(|| KsecError::BrokenInstances("instance gate vanished".into()))?;
        let covered_mask = si.covered(cur.num_gates());
        let covered: HashSet<String> = cur
            .gate_ids()
            .filter(|g| covered_mask[g.index()])
            .map(|g| cur.gate_name(g).to_string())
            .collect();
        let mut targets: Vec<GateId> = Vec::new();
        let mut seen: HashSet<GateId> = HashSet::new();
        let mut roots: Vec<GateId> = vuln_names
            .iter()
            .filter_map(|v| cur.gate_id(v))
            .filter(|g| !covered_mask[g.index()])
            .collect();
        roots.sort();
        for v in roots {
            let mut level = vec![v];
            for _ in 0..3 {
                let mut next = Vec::new();
                for g in level {
                    if !covered_mask[g.index()] && seen.insert(g) {
                        targets.push(g);
                        next.extend(cur.gate(g).fanins.iter().filter_map(|f| cur.net(*f).driver));
                    }
                }
                level = next;
            }
        }
        let mut defs = Defs::from_netlist(&cur);
        let taken: HashSet<String> = cur.nets().iter().map(|x| x.name.clone()).collect();
        let mut rw = Rewriter {
            n: &cur,
            covered: &covered,
            taken,
            counter: &mut counter,
        };
        let mut modified: HashSet<String> = HashSet::new();
        let mut footprint: HashSet<String> = HashSet::new();
        let mut applied = 0usize;
        for t in targets {
            let Some(p) = rw.propose(t) else { continue };
            let reads: HashSet<String> = p.reads.iter().cloned().collect();
            if modified.contains(&p.target)
                || reads.iter().any(|r| modified.contains(r))
                || footprint.contains(&p.target)
            {
                continue;
            }
            let before = defs.clone();
            for (name, cell, f) in &p.new_gates {
                defs.set(name, *cell, f.clone());
            }
            defs.set(&p.target, p.cell, p.fanins.clone());
            let removed = defs.sweep(&p.reads);
            if removed.iter().any(|r| covered.contains(r) || footprint.contains(r)) {
                defs = before;
                continue;
            }
            let ok = defs
                .build()
                .ok()
                .and_then(|m| resolve(&m, &named).map(|s| s.verify(&m, templates).is_ok()))
                .unwrap_or(false);
            if !ok {
                defs = before;
                continue;
            }
            modified.insert(p.target.clone());
            modified.extend(removed.iter().cloned());
            modified.extend(p.new_gates.iter().map(|g| g.0.clone()));
            footprint.extend(reads);
            footprint.insert(p.target);
            applied += 1;
        }
        let next = defs.build()?;
        let verdict = check_equivalence(n, &next, EquivMode::Sat { conflict_budget: None })?;
        if !verdict.is_equivalent() {
            return Err(KsecError::EquivalenceViolation { iteration: it });
        }
        let si = resolve(&next, &named).ok_or_else(|| KsecError::BrokenInstances("instance gate vanished".into()))?;
        si.verify(&next, templates).map_err(KsecError::BrokenInstances)?;
        let fresh = mine_excluding(&next, templates, &si.covered(next.num_gates()));
        named.extend(fresh.iter().map(|i| to_named(&next, i)));
        let all = resolve(&next, &named).expect("just mined");
        census.push(census_of(&next, templates, &all, &vuln_names, it, applied));
        cur = next;
    }
    let instances = resolve(&cur, &named).expect("verified each iteration");
    let vulnerable = vuln_names.iter().filter_map(|v| cur.gate_id(v)).collect();
    Ok(RewriteOutcome {
        netlist: cur,
        instances,
        census,
        vulnerable,
    })
}
