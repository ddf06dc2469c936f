//! Template instance mining.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::template::{PinSource, StructureTemplate};
use crate::netlist::{GateId, NetId, Netlist};

/// One matched template occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub template: String,
    /// Gate per template node, in template node order.
    pub nodes: Vec<GateId>,
    /// Net per template boundary input.
    pub boundary: Vec<NetId>,
}

impl Instance {
    pub fn gates(&self) -> Vec<GateId> {
        let mut g = self.nodes.clone();
        g.sort();
        g
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureInstances {
    pub instances: Vec<Instance>,
}

impl StructureInstances {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Instance count per template id; every template in `templates` appears.
    pub fn census(&self, templates: &[StructureTemplate]) -> BTreeMap<String, usize> {
        let mut m = super::template::zero_census(templates);
        for i in &self.instances {
            *m.entry(i.template.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn covered(&self, num_gates: usize) -> Vec<bool> {
        let mut c = vec![false; num_gates];
        for i in &self.instances {
            for g in &i.nodes {
                c[g.index()] = true;
            }
        }
        c
    }

    pub fn gate_sets(&self) -> Vec<Vec<GateId>> {
        self.instances.iter().map(Instance::gates).collect()
    }

    /// Checks every instance against its template and pairwise disjointness.
    pub fn verify(&self, n: &Netlist, templates: &[StructureTemplate]) -> Result<(), String> {
        let mut seen = HashSet::new();
        for inst in &self.instances {
            let t = templates
                .iter()
                .find(|t| t.id == inst.template)
                .ok_or_else(|| format!("unknown template `{}`", inst.template))?;
            if inst.nodes.iter().any(|g| g.index() >= n.num_gates()) {
                return Err(format!("instance of `{}` refers to a missing gate", t.id));
            }
            match check_match(n, t, &inst.nodes) {
                Some(b) if b == inst.boundary => {}
                _ => {
                    return Err(format!(
                        "instance of `{}` at {} no longer matches",
                        t.id,
                        n.gate_name(inst.nodes[0])
                    ))
                }
            }
            for g in &inst.nodes {
                if !seen.insert(*g) {
                    return Err(format!("gate {} is in two instances", n.gate_name(*g)));
                }
            }
        }
        Ok(())
    }
}

/// Checks that `m` (gate per template node) realizes `t` as a custom cell:
/// same cells, template edges present, boundary pins fed from outside the
/// instance with one distinct net per boundary name, and non-output nodes
/// feeding nothing but their template successors. Returns the boundary
/// nets.
pub fn check_match(n: &Netlist, t: &StructureTemplate, m: &[GateId]) -> Option<Vec<NetId>> {
    if m.len() != t.nodes.len() {
        return None;
    }
    let inside: HashSet<GateId> = m.iter().copied().collect();
    if inside.len() != m.len() {
        return None;
    }
    for (i, node) in t.nodes.iter().enumerate() {
        let g = m[i];
        if n.gate(g).cell != node.cell {
            return None;
        }
        if !t.is_output(i) {
            let out = n.gate(g).output;
            if n.is_output(out) || n.fanouts(out).len() != t.internal_fanout(i) {
                return None;
            }
        }
    }
    let mut bind: Vec<Option<NetId>> = vec![None; t.boundary.len()];
    if bind_pins(n, t, m, &inside, 0, &mut bind) {
        let nets: Vec<NetId> = bind.into_iter().map(|b| b.expect("all bound")).collect();
        let distinct: HashSet<&NetId> = nets.iter().collect();
        (distinct.len() == nets.len()).then_some(nets)
    } else {
        None
    }
}

fn bind_pins(
    n: &Netlist,
    t: &StructureTemplate,
    m: &[GateId],
    inside: &HashSet<GateId>,
    node: usize,
    bind: &mut Vec<Option<NetId>>,
) -> bool {
    if node == t.nodes.len() {
        return true;
    }
    let gate = n.gate(m[node]);
    let pins = &t.nodes[node].pins;
    let k = pins.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let symmetric = gate.cell.kind.is_symmetric();
    loop {
        let saved = bind.clone();
        let mut ok = true;
        for (p, src) in pins.iter().enumerate() {
            let net = gate.fanins[perm[p]];
            match src {
                PinSource::Node(j) => {
                    if n.gate(m[*j]).output != net {
                        ok = false;
                        break;
                    }
                }
                PinSource::Boundary(b) => {
                    if n.net(net).driver.is_some_and(|d| inside.contains(&d)) {
                        ok = false;
                        break;
                    }
                    match bind[*b] {
                        Some(x) if x != net => {
                            ok = false;
                            break;
                        }
                        _ => bind[*b] = Some(net),
                    }
                }
            }
        }
        if ok && bind_pins(n, t, m, inside, node + 1, bind) {
            return true;
        }
        *bind = saved;
        if !symmetric || !next_permutation(&mut perm) {
            return false;
        }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// All matches of `t` avoiding `blocked` gates, as node mappings, sorted by
/// their gate sets and deduplicated.
pub fn enumerate_matches(n: &Netlist, t: &StructureTemplate, blocked: &[bool]) -> Vec<Vec<GateId>> {
    let k = t.nodes.len();
    // BFS order over undirected template adjacency from the first output
    let root = t.outputs[0];
    let mut order = vec![root];
    let mut placed = vec![false; k];
    placed[root] = true;
    let mut anchor: Vec<Option<(usize, bool)>> = vec![None; k];
    let mut head = 0;
    while head < order.len() {
        let s = order[head];
        head += 1;
        for (tn, node) in t.nodes.iter().enumerate() {
            if !placed[tn] && node.pins.contains(&PinSource::Node(s)) {
                placed[tn] = true;
                anchor[tn] = Some((s, true));
                order.push(tn);
            }
        }
        for p in &t.nodes[s].pins {
            if let PinSource::Node(j) = *p {
                if !placed[j] {
                    placed[j] = true;
                    anchor[j] = Some((s, false));
                    order.push(j);
                }
            }
        }
    }
    let roots: Vec<GateId> = n
        .gate_ids()
        .filter(|g| !blocked[g.index()] && n.gate(*g).cell == t.nodes[root].cell)
        .collect();
    let mut found: Vec<(Vec<GateId>, Vec<GateId>)> = roots
        .par_iter()
        .flat_map_iter(|&r| {
            let mut m: Vec<Option<GateId>> = vec![None; k];
            m[root] = Some(r);
            let mut out = Vec::new();
            extend(n, t, blocked, &order, &anchor, 1, &mut m, &mut out);
            out
        })
        .map(|m| {
            let mut s = m.clone();
            s.sort();
            (s, m)
        })
        .collect();
    found.sort();
    found.dedup_by(|a, b| a.0 == b.0);
    found.into_iter().map(|(_, m)| m).collect()
}

#[allow(clippy::too_many_arguments)]
fn extend(
    n: &Netlist,
    t: &StructureTemplate,
    blocked: &[bool],
    order: &[usize],
    anchor: &[Option<(usize, bool)>],
    depth: usize,
    m: &mut Vec<Option<GateId>>,
    out: &mut Vec<Vec<GateId>>,
) {
    if depth == order.len() {
        let full: Vec<GateId> = m.iter().map(|g| g.expect("assigned")).collect();
        if check_match(n, t, &full).is_some() {
            out.push(full);
        }
        return;
    }
    let tn = order[depth];
    let (s, downstream) = anchor[tn].expect("connected template");
    let sg = m[s].expect("anchor assigned first");
    let cands: Vec<GateId> = if downstream {
        let mut v: Vec<GateId> = n.fanouts(n.gate(sg).output).iter().map(|k| k.gate).collect();
        v.sort();
        v.dedup();
        v
    } else {
        let mut v: Vec<GateId> = n.gate(sg).fanins.iter().filter_map(|f| n.net(*f).driver).collect();
        v.sort();
        v.dedup();
        v
    };
    for c in cands {
        if blocked[c.index()] || n.gate(c).cell != t.nodes[tn].cell || m.contains(&Some(c)) {
            continue;
        }
        m[tn] = Some(c);
        extend(n, t, blocked, order, anchor, depth + 1, m, out);
        m[tn] = None;
    }
}

/// Greedy non-overlapping matching, template by template in the given
/// order; within a template, matches with the lowest gate ids win.
pub fn mine_structures(n: &Netlist, templates: &[StructureTemplate]) -> StructureInstances {
    let blocked = vec![false; n.num_gates()];
    StructureInstances {
        instances: mine_excluding(n, templates, &blocked),
    }
}

/// Like [`mine_structures`] but never uses a gate marked in `blocked`.
pub fn mine_excluding(n: &Netlist, templates: &[StructureTemplate], blocked: &[bool]) -> Vec<Instance> {
    let mut taken = blocked.to_vec();
    let mut out = Vec::new();
    for t in templates {
        for m in enumerate_matches(n, t, blocked) {
            if m.iter().any(|g| taken[g.index()]) {
                continue;
            }
            for g in &m {
                taken[g.index()] = true;
            }
            let boundary = check_match(n, t, &m).expect("enumerated matches are valid");
            out.push(Instance {
                template: t.id.clone(),
                nodes: m,
                boundary,
            });
        }
    }
    out
}

/// Covered gates over all gates; 0 for an empty netlist.
pub fn coverage(n: &Netlist, instances: &StructureInstances) -> f64 {
    if n.num_gates() == 0 {
        return 0.0;
    }
    let c = instances.covered(n.num_gates()).iter().filter(|x| **x).count();
    c as f64 / n.num_gates() as f64
}
