//! Mapping onto the three-cell library {NAND2, NOR2, INV}.
//!
//! Rule set (root cell keeps the original gate name, helpers are named
//! `<gate>_m<i>`):
//!
//! | cell  | realization |
//! |-------|-------------|
//! | AND2  | INV(NAND2(a,b)) |
//! | AND3  | NOR2(NAND2(a,b), INV(c)) |
//! | AND4  | NOR2(NAND2(a,b), NAND2(c,d)) |
//! | NAND3 | NAND2(INV(NAND2(a,b)), c) |
//! | NAND4 | INV(NOR2(NAND2(a,b), NAND2(c,d))) |
//! | OR2   | INV(NOR2(a,b)) |
//! | OR3   | NAND2(NOR2(a,b), INV(c)) |
//! | OR4   | NAND2(NOR2(a,b), NOR2(c,d)) |
//! | NOR3  | NOR2(INV(NOR2(a,b)), c) |
//! | NOR4  | INV(NAND2(NOR2(a,b), NOR2(c,d))) |
//! | XOR2  | four NAND2 |
//! | XNOR2 | four NOR2 |
//!
//! Buffers are aliased away and INV-INV pairs collapsed, except where the
//! net is a primary output. Inverters of the same net are shared. DFFs are
//! kept as they are.

use std::collections::{HashMap, HashSet};

use super::{CellKind, CellType, Netlist, NetlistBuilder, NetlistError};

enum Expr {
    Leaf(String),
    Inv(Box<Expr>),
    Nand(Box<Expr>, Box<Expr>),
    Nor(Box<Expr>, Box<Expr>),
}

fn leaf(s: &str) -> Box<Expr> {
    Box::new(Expr::Leaf(s.to_string()))
}
fn inv(e: Box<Expr>) -> Box<Expr> {
    Box::new(Expr::Inv(e))
}
fn nand(a: Box<Expr>, b: Box<Expr>) -> Box<Expr> {
    Box::new(Expr::Nand(a, b))
}
fn nor(a: Box<Expr>, b: Box<Expr>) -> Box<Expr> {
    Box::new(Expr::Nor(a, b))
}

struct Def {
    name: String,
    cell: CellType,
    fanins: Vec<String>,
}

struct Mapper {
    defs: Vec<Def>,
    taken: HashSet<String>,
    inv_of: HashMap<String, String>,
}

impl Mapper {
    fn fresh(&mut self, base: &str, counter: &mut usize) -> String {
        loop {
            let name = format!("{base}_m{counter}");
            *counter += 1;
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }

    fn push(&mut self, name: String, cell: CellType, fanins: Vec<String>) -> String {
        if cell == CellType::INV {
            self.inv_of.entry(fanins[0].clone()).or_insert_with(|| name.clone());
        }
        self.defs.push(Def {
            name: name.clone(),
            cell,
            fanins,
        });
        name
    }

    /// Emits `e`; the root takes `root` if given, else a fresh helper name.
    fn emit(&mut self, e: &Expr, base: &str, counter: &mut usize, root: Option<&str>) -> String {
        let (cell, kids): (CellType, Vec<&Expr>) = match e {
            Expr::Leaf(s) => return s.clone(),
            Expr::Inv(a) => (CellType::INV, vec![a]),
            Expr::Nand(a, b) => (CellType::NAND2, vec![a, b]),
            Expr::Nor(a, b) => (CellType::NOR2, vec![a, b]),
        };
        let fanins: Vec<String> = kids
            .into_iter()
            .map(|k| self.emit(k, base, counter, None))
            .collect();
        if root.is_none() && cell == CellType::INV {
            if let Some(existing) = self.inv_of.get(&fanins[0]) {
                return existing.clone();
            }
        }
        let name = match root {
            Some(r) => r.to_string(),
            None => self.fresh(base, counter),
        };
        self.push(name, cell, fanins)
    }
}

fn rule(cell: CellType, x: &[&str]) -> Box<Expr> {
    use CellKind::*;
    match (cell.kind, cell.arity) {
        (Inv, _) => inv(leaf(x[0])),
        (And, 2) => inv(nand(leaf(x[0]), leaf(x[1]))),
        (And, 3) => nor(nand(leaf(x[0]), leaf(x[1])), inv(leaf(x[2]))),
        (And, 4) => nor(nand(leaf(x[0]), leaf(x[1])), nand(leaf(x[2]), leaf(x[3]))),
        (Nand, 2) => nand(leaf(x[0]), leaf(x[1])),
        (Nand, 3) => nand(inv(nand(leaf(x[0]), leaf(x[1]))), leaf(x[2])),
        (Nand, 4) => inv(nor(nand(leaf(x[0]), leaf(x[1])), nand(leaf(x[2]), leaf(x[3])))),
        (Or, 2) => inv(nor(leaf(x[0]), leaf(x[1]))),
        (Or, 3) => nand(nor(leaf(x[0]), leaf(x[1])), inv(leaf(x[2]))),
        (Or, 4) => nand(nor(leaf(x[0]), leaf(x[1])), nor(leaf(x[2]), leaf(x[3]))),
        (Nor, 2) => nor(leaf(x[0]), leaf(x[1])),
        (Nor, 3) => nor(inv(nor(leaf(x[0]), leaf(x[1]))), leaf(x[2])),
        (Nor, 4) => inv(nand(nor(leaf(x[0]), leaf(x[1])), nor(leaf(x[2]), leaf(x[3])))),
        _ => unreachable!("no direct rule for {cell}"),
    }
}

/// Maps `n` onto NAND2/NOR2/INV (plus DFF), preserving every primary
/// input, primary output and DFF name.
pub fn map_lib3(n: &Netlist) -> Result<Netlist, NetlistError> {
    let mut m = Mapper {
        defs: Vec::new(),
        taken: n.nets().iter().map(|x| x.name.clone()).collect(),
        inv_of: HashMap::new(),
    };
    let is_po: HashSet<&str> = n
        .primary_outputs()
        .iter()
        .map(|o| n.net(*o).name.as_str())
        .collect();
    let mut alias: HashMap<String, String> = HashMap::new();
    for g in n.gate_ids() {
        let gate = n.gate(g);
        let name = n.gate_name(g);
        let ins: Vec<&str> = gate.fanins.iter().map(|f| n.net(*f).name.as_str()).collect();
        let mut counter = 0;
        match gate.cell.kind {
            CellKind::Dff => {
                m.push(name.to_string(), gate.cell, vec![ins[0].to_string()]);
            }
            CellKind::Buf if !is_po.contains(name) => {
                alias.insert(name.to_string(), ins[0].to_string());
            }
            CellKind::Buf => {
                let e = inv(inv(leaf(ins[0])));
                m.emit(&e, name, &mut counter, Some(name));
            }
            CellKind::Xor | CellKind::Xnor => {
                let t = if gate.cell.kind == CellKind::Xor {
                    nand(leaf(ins[0]), leaf(ins[1]))
                } else {
                    nor(leaf(ins[0]), leaf(ins[1]))
                };
                let t = m.emit(&t, name, &mut counter, None);
                let e = if gate.cell.kind == CellKind::Xor {
                    nand(nand(leaf(ins[0]), leaf(&t)), nand(leaf(ins[1]), leaf(&t)))
                } else {
                    nor(nor(leaf(ins[0]), leaf(&t)), nor(leaf(ins[1]), leaf(&t)))
                };
                m.emit(&e, name, &mut counter, Some(name));
            }
            _ => {
                let e = rule(gate.cell, &ins);
                m.emit(&e, name, &mut counter, Some(name));
            }
        }
    }
    // Collapse INV(INV(x)) onto x unless the outer net is a primary output.
    let inv_input: HashMap<&str, &str> = m
        .defs
        .iter()
        .filter(|d| d.cell == CellType::INV)
        .map(|d| (d.name.as_str(), d.fanins[0].as_str()))
        .collect();
    let mut inv_alias: Vec<(String, String)> = Vec::new();
    for d in m.defs.iter().filter(|d| d.cell == CellType::INV) {
        if is_po.contains(d.name.as_str()) {
            continue;
        }
        if let Some(&inner_in) = inv_input.get(d.fanins[0].as_str()) {
            inv_alias.push((d.name.clone(), inner_in.to_string()));
        }
    }
    alias.extend(inv_alias);
    let resolve = |s: &str| -> String {
        let mut s = s.to_string();
        let mut hops = 0;
        while let Some(t) = alias.get(&s) {
            s = t.clone();
            hops += 1;
            if hops > alias.len() {
                break;
            }
        }
        s
    };
    let mut defs: Vec<Def> = m
        .defs
        .into_iter()
        .filter(|d| !alias.contains_key(&d.name))
        .map(|d| Def {
            fanins: d.fanins.iter().map(|f| resolve(f)).collect(),
            ..d
        })
        .collect();
    // Sweep combinational gates left without fanout, but only those created
    // or orphaned by mapping: they are not primary outputs.
    loop {
        let used: HashSet<&str> = defs
            .iter()
            .flat_map(|d| d.fanins.iter().map(|s| s.as_str()))
            .collect();
        let dead: HashSet<String> = defs
            .iter()
            .filter(|d| {
                !d.cell.is_sequential()
                    && !used.contains(d.name.as_str())
                    && !is_po.contains(d.name.as_str())
                    && n.gate_id(&d.name).is_none_or(|g| {
                        // Originally dangling gates stay.
                        !n.fanouts(n.gate(g).output).is_empty()
                    })
            })
            .map(|d| d.name.clone())
            .collect();
        if dead.is_empty() {
            break;
        }
        defs.retain(|d| !dead.contains(&d.name));
    }
    let mut b = NetlistBuilder::new(n.name());
    for &i in n.primary_inputs() {
        b.add_input(&n.net(i).name);
    }
    for &o in n.primary_outputs() {
        b.add_output(&n.net(o).name);
    }
    for d in &defs {
        let f: Vec<&str> = d.fanins.iter().map(|s| s.as_str()).collect();
        b.add_gate(&d.name, d.cell, &f);
    }
    if n.is_acyclic() {
        b.build()
    } else {
        b.build_allow_cycles()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{check_equivalence, parse_bench, EquivMode};

    fn only_lib3(n: &Netlist) -> bool {
        n.gates()
            .iter()
            .all(|g| matches!(g.cell, CellType::INV | CellType::NAND2 | CellType::NOR2 | CellType::DFF))
    }

    #[test]
    fn every_rule_preserves_function() {
        use CellKind::*;
        for kind in [And, Nand, Or, Nor, Xor, Xnor, Inv, Buf] {
            let (lo, hi) = kind.arity_range();
            for arity in lo..=hi {
                let names = ["a", "b", "c", "d"];
                let mut text: String = names[..arity].iter().map(|x| format!("INPUT({x})\n")).collect();
                text += &format!("OUTPUT(y)\ny = {}({})", kind.keyword(), names[..arity].join(","));
                let n = parse_bench(&text).unwrap();
                let m = map_lib3(&n).unwrap();
                assert!(only_lib3(&m), "{kind:?}{arity}");
                assert!(
                    check_equivalence(&n, &m, EquivMode::Exhaustive).unwrap().is_equivalent(),
                    "{kind:?}{arity}"
                );
            }
        }
    }

    #[test]
    fn double_inversion_collapses() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nt = AND(a,b)\nu = NOT(t)\ny = NAND(u,a)").unwrap();
        let m = map_lib3(&n).unwrap();
        assert_eq!(m.cell_census().get("NAND2"), Some(&2));
        assert_eq!(m.cell_census().get("INV"), None);
        assert!(check_equivalence(&n, &m, EquivMode::Exhaustive).unwrap().is_equivalent());
    }

    #[test]
    fn output_inverters_survive() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nt = AND(a,b)\ny = NOT(t)").unwrap();
        let m = map_lib3(&n).unwrap();
        assert_eq!(m.cell_census().get("INV"), Some(&2));
        assert!(check_equivalence(&n, &m, EquivMode::Exhaustive).unwrap().is_equivalent());
    }

    #[test]
    fn buffers_are_aliased() {
        let n = parse_bench("INPUT(a)\nOUTPUT(y)\nt = BUF(a)\ny = NOT(t)").unwrap();
        let m = map_lib3(&n).unwrap();
        assert_eq!(m.num_gates(), 1);
        assert_eq!(m.net(m.gate(m.gate_id("y").unwrap()).fanins[0]).name, "a");
    }
}
