//! Seeded synthetic netlists for experiments and tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netlist::{CellKind, CellType, Netlist, NetlistBuilder};

/// Random combinational DAG: `gates` cells drawn from `library`, fanins
/// chosen among earlier signals with a bias toward recent ones. Every
/// signal without fanout becomes a primary output.
pub fn random_dag(inputs: usize, gates: usize, library: &[CellType], seed: u64) -> Netlist {
    assert!(inputs > 0 && !library.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NetlistBuilder::new(format!("rand_{inputs}_{gates}_{seed}"));
    let mut signals: Vec<String> = (0..inputs).map(|i| format!("i{i}")).collect();
    for s in &signals {
        b.add_input(s);
    }
    let mut used = vec![false; inputs + gates];
    for g in 0..gates {
        let cell = *library.choose(&mut rng).unwrap();
        let mut fanins = Vec::with_capacity(cell.arity as usize);
        for _ in 0..cell.arity {
            let n = signals.len();
            let window = n.min(8);
            let idx = if rng.gen_bool(0.7) {
                n - 1 - rng.gen_range(0..window)
            } else {
                rng.gen_range(0..n)
            };
            used[idx] = true;
            fanins.push(signals[idx].clone());
        }
        let name = format!("g{g}");
        let refs: Vec<&str> = fanins.iter().map(|s| s.as_str()).collect();
        b.add_gate(&name, cell, &refs);
        signals.push(name);
    }
    let mut any = false;
    for (i, s) in signals.iter().enumerate().skip(inputs) {
        if !used[i] {
            b.add_output(s);
            any = true;
        }
    }
    if !any {
        b.add_output(signals.last().unwrap());
    }
    b.build().expect("generator produces valid DAGs")
}

/// Default mixed library used by generators.
pub fn mixed_library() -> Vec<CellType> {
    let mut v = vec![CellType::INV, CellType::XOR2, CellType::XNOR2];
    for kind in [CellKind::And, CellKind::Nand, CellKind::Or, CellKind::Nor] {
        for a in 2..=3 {
            v.push(CellType::new(kind, a).unwrap());
        }
    }
    v
}

pub fn lib3() -> Vec<CellType> {
    vec![CellType::NAND2, CellType::NOR2, CellType::INV]
}

/// NOR-heavy NAND2/NOR2/INV DAG whose NOR logic rewrites toward the
/// NAND-based templates.
pub fn rewrite_friendly(seed: u64) -> Netlist {
    random_dag(16, 300, &[CellType::NOR2, CellType::NOR2, CellType::INV, CellType::NAND2], seed)
}
