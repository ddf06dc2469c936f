use std::collections::HashMap;

use super::{Lit, Solver};
use crate::netlist::{CellKind, Netlist};

#[derive(Clone, PartialEq, Eq, Hash)]
enum Node {
    And(Vec<Lit>),
    Xor(Lit, Lit),
}

/// Tseitin encoder with structural hashing. Inverting cells cost no
/// variables: NAND/NOR/INV are expressed by literal negation over AND nodes.
#[derive(Default)]
pub struct CircuitEncoder {
    strash: HashMap<Node, Lit>,
    truth: Option<Lit>,
}

impl CircuitEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(&mut self, s: &mut Solver, value: bool) -> Lit {
        let t = *self.truth.get_or_insert_with(|| {
            let l = Lit::pos(s.new_var());
            s.add_clause(&[l]);
            l
        });
        if value {
            t
        } else {
            !t
        }
    }

    pub fn and(&mut self, s: &mut Solver, ins: &[Lit]) -> Lit {
        let mut v: Vec<Lit> = ins.to_vec();
        v.sort_unstable();
        v.dedup();
        if v.windows(2).any(|w| w[0] == !w[1]) {
            return self.constant(s, false);
        }
        if let Some(t) = self.truth {
            if v.contains(&!t) {
                return !t;
            }
            v.retain(|&l| l != t);
        }
        match v.len() {
            0 => return self.constant(s, true),
            1 => return v[0],
            _ => {}
        }
        let key = Node::And(v);
        if let Some(&l) = self.strash.get(&key) {
            return l;
        }
        let Node::And(v) = &key else { unreachable!() };
        let out = Lit::pos(s.new_var());
        let mut big = Vec::with_capacity(v.len() + 1);
        for &i in v {
            s.add_clause(&[!out, i]);
            big.push(!i);
        }
        big.push(out);
        s.add_clause(&big);
        self.strash.insert(key, out);
        out
    }

    pub fn or(&mut self, s: &mut Solver, ins: &[Lit]) -> Lit {
        let neg: Vec<Lit> = ins.iter().map(|&l| !l).collect();
        !self.and(s, &neg)
    }

    pub fn xor(&mut self, s: &mut Solver, a: Lit, b: Lit) -> Lit {
        // Pull polarity out so that XOR(a,b), XOR(!a,b), ... share a node.
        let flip = a.is_positive() != b.is_positive();
        let (a, b) = (
            if a.is_positive() { a } else { !a },
            if b.is_positive() { b } else { !b },
        );
        let base = if a == b {
            self.constant(s, false)
        } else if self.truth.is_some_and(|t| t == a || t == b) {
            let other = if self.truth == Some(a) { b } else { a };
            !other
        } else {
            let key = if a < b { Node::Xor(a, b) } else { Node::Xor(b, a) };
            match self.strash.get(&key) {
                Some(&l) => l,
                None => {
                    let out = Lit::pos(s.new_var());
                    s.add_clause(&[!out, a, b]);
                    s.add_clause(&[!out, !a, !b]);
                    s.add_clause(&[out, !a, b]);
                    s.add_clause(&[out, a, !b]);
                    self.strash.insert(key, out);
                    out
                }
            }
        };
        if flip {
            !base
        } else {
            base
        }
    }

    pub fn cell(&mut self, s: &mut Solver, kind: CellKind, ins: &[Lit]) -> Lit {
        match kind {
            CellKind::Inv => !ins[0],
            CellKind::Buf | CellKind::Dff => ins[0],
            CellKind::And => self.and(s, ins),
            CellKind::Nand => !self.and(s, ins),
            CellKind::Or => self.or(s, ins),
            CellKind::Nor => !self.or(s, ins),
            CellKind::Xor | CellKind::Xnor => {
                let mut acc = ins[0];
                for &l in &ins[1..] {
                    acc = self.xor(s, acc, l);
                }
                if kind == CellKind::Xnor {
                    !acc
                } else {
                    acc
                }
            }
        }
    }

    /// Encodes the combinational frame of `n` given literals for its frame
    /// inputs; returns one literal per net. Feedback edges of cyclic
    /// netlists read constant 0, matching the simulator.
    pub fn encode(&mut self, s: &mut Solver, n: &Netlist, frame_inputs: &[Lit]) -> Vec<Lit> {
        assert_eq!(frame_inputs.len(), n.frame_inputs().len());
        let zero = self.constant(s, false);
        let mut lits = vec![zero; n.num_nets()];
        for (net, &l) in n.frame_inputs().iter().zip(frame_inputs) {
            lits[net.index()] = l;
        }
        let mut ins = Vec::with_capacity(4);
        for &g in n.eval_order() {
            let gate = n.gate(g);
            ins.clear();
            ins.extend(gate.fanins.iter().map(|f| lits[f.index()]));
            lits[gate.output.index()] = self.cell(s, gate.cell.kind, &ins);
        }
        lits
    }
}
