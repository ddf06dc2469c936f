use std::collections::HashMap;

use f2fsec::corpus;
use f2fsec::netlist::techmap::map_lib3;
use f2fsec::netlist::{
    check_equivalence, parse_bench, simulate, sta_unit_delay, to_bench, CellType, EquivMode, Netlist,
    PatternBlock, Verdict,
};
use f2fsec::synthetic::{lib3, mixed_library, random_dag};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Scalar reference interpreter: recursive evaluation by name, no ordering.
fn naive_eval(n: &Netlist, pattern: &[bool]) -> Vec<bool> {
    fn value(n: &Netlist, net: f2fsec::netlist::NetId, memo: &mut HashMap<u32, bool>) -> bool {
        if let Some(&v) = memo.get(&net.0) {
            return v;
        }
        let g = n.net(net).driver.expect("frame input preloaded");
        let gate = n.gate(g);
        let ins: Vec<bool> = gate.fanins.iter().map(|&f| value(n, f, memo)).collect();
        let v = gate.cell.kind.eval_bool(&ins);
        memo.insert(net.0, v);
        v
    }
    let mut memo = HashMap::new();
    for (net, &v) in n.frame_inputs().iter().zip(pattern) {
        memo.insert(net.0, v);
    }
    n.frame_outputs()
        .into_iter()
        .map(|(_, o)| value(n, o, &mut memo))
        .collect()
}

#[test]
fn c432_interface() {
    let n = corpus::load("c432").unwrap();
    assert_eq!(n.primary_inputs().len(), 36);
    assert_eq!(n.primary_outputs().len(), 7);
}

#[test]
fn c432_bit_parallel_matches_scalar_interpreter() {
    let n = corpus::load("c432").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(432);
    let block = PatternBlock::random(n.frame_inputs().len(), 1000, &mut rng);
    let out = simulate(&n, &block).unwrap();
    for p in 0..1000 {
        let expect = naive_eval(&n, &block.pattern(p));
        assert_eq!(out.pattern(p), expect, "pattern {p}");
    }
}

#[test]
fn corpus_round_trips_through_bench() {
    for name in corpus::iscas85_names() {
        let n = corpus::load(name).unwrap();
        let again = parse_bench(&to_bench(&n)).unwrap();
        assert_eq!(again.num_gates(), n.num_gates(), "{name}");
        for g in n.gate_ids() {
            let h = again.gate_id(n.gate_name(g)).unwrap();
            let fa: Vec<&str> = n.gate(g).fanins.iter().map(|f| n.net(*f).name.as_str()).collect();
            let fb: Vec<&str> = again.gate(h).fanins.iter().map(|f| again.net(*f).name.as_str()).collect();
            assert_eq!(fa, fb);
            assert_eq!(n.gate(g).cell, again.gate(h).cell);
        }
        assert_eq!(n.frame_input_names(), again.frame_input_names());
    }
}

#[test]
fn corpus_timing_invariants() {
    for name in corpus::iscas85_names() {
        let n = corpus::load(name).unwrap();
        let t = sta_unit_delay(&n).unwrap();
        assert_eq!(t.slack.iter().min(), Some(&0), "{name}");
        // A zero-slack gate with arrival 1 starts a chain of zero-slack gates
        // that reaches an endpoint.
        let mut g = n
            .gate_ids()
            .find(|&g| t.slack_of(g) == 0 && t.arrival[g.index()] == 1)
            .unwrap();
        loop {
            let next = n
                .fanouts(n.gate(g).output)
                .iter()
                .map(|s| s.gate)
                .find(|&s| t.slack_of(s) == 0 && t.arrival[s.index()] == t.arrival[g.index()] + 1);
            match next {
                Some(s) => g = s,
                None => break,
            }
        }
        assert_eq!(t.arrival[g.index()], t.critical_path_length, "{name}");
        assert!(n.is_output(n.gate(g).output), "{name}");
    }
}

#[test]
fn lib3_mapping_of_corpus_is_equivalent() {
    for name in ["c17", "c432", "c499", "c880"] {
        let n = corpus::load(name).unwrap();
        let m = map_lib3(&n).unwrap();
        assert!(m
            .gates()
            .iter()
            .all(|g| matches!(g.cell, CellType::NAND2 | CellType::NOR2 | CellType::INV)));
        let v = check_equivalence(&n, &m, EquivMode::Sat { conflict_budget: None }).unwrap();
        assert_eq!(v, Verdict::Equivalent, "{name}");
    }
}

#[test]
fn sat_equivalence_refutes_a_single_gate_change() {
    let n = corpus::load("c880").unwrap();
    let text = to_bench(&n);
    let victim = n.gate_ids().find(|&g| n.gate(g).cell == CellType::NAND2).unwrap();
    let name = n.gate_name(victim).to_string();
    let changed = text.replace(&format!("{name} = NAND("), &format!("{name} = AND("));
    let m = parse_bench(&changed).unwrap();
    match check_equivalence(&n, &m, EquivMode::Sat { conflict_budget: None }).unwrap() {
        Verdict::Counterexample(c) => {
            // Replay the counterexample by simulation.
            let pat: Vec<bool> = c.inputs.iter().map(|(_, v)| *v).collect();
            let block = PatternBlock::from_patterns(&[pat], c.inputs.len());
            let oa = simulate(&n, &block).unwrap();
            let ob = simulate(&m, &block).unwrap();
            assert_ne!(oa.pattern(0), ob.pattern(0));
        }
        v => panic!("{v:?}"),
    }
}

/// Same netlist with gate `idx` swapped to a different cell of equal arity.
fn perturb(n: &Netlist, idx: usize) -> Netlist {
    use f2fsec::netlist::{CellKind, NetlistBuilder};
    let mut b = NetlistBuilder::new("perturbed");
    for &i in n.primary_inputs() {
        b.add_input(&n.net(i).name);
    }
    for &o in n.primary_outputs() {
        b.add_output(&n.net(o).name);
    }
    for g in n.gate_ids() {
        let gate = n.gate(g);
        let mut cell = gate.cell;
        if g.index() == idx {
            cell.kind = match cell.kind {
                CellKind::Inv => CellKind::Buf,
                CellKind::And => CellKind::Or,
                CellKind::Nand => CellKind::Nor,
                CellKind::Or => CellKind::Xor,
                CellKind::Nor => CellKind::Xnor,
                CellKind::Xor => CellKind::Nand,
                CellKind::Xnor => CellKind::And,
                k => k,
            };
            if CellType::new(cell.kind, cell.arity as usize).is_none() {
                cell = gate.cell;
            }
        }
        let f: Vec<&str> = gate.fanins.iter().map(|f| n.net(*f).name.as_str()).collect();
        b.add_gate(n.gate_name(g), cell, &f);
    }
    b.build().unwrap()
}

fn truth_table(n: &Netlist) -> Vec<Vec<bool>> {
    let k = n.frame_inputs().len();
    (0..1usize << k)
        .map(|p| {
            let pat: Vec<bool> = (0..k).map(|i| (p >> i) & 1 == 1).collect();
            naive_eval(n, &pat)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exhaustive_equivalence_agrees_with_truth_tables(
        inputs in 1usize..=10,
        gates in 1usize..25,
        seed_a in any::<u64>(),
        use_lib3 in any::<bool>(),
    ) {
        let lib = if use_lib3 { lib3() } else { mixed_library() };
        let a = random_dag(inputs, gates, &lib, seed_a);
        let m = map_lib3(&a).unwrap();
        prop_assert!(check_equivalence(&a, &m, EquivMode::Exhaustive).unwrap().is_equivalent());
        let b = perturb(&a, seed_a as usize % a.num_gates());
        let same = truth_table(&a) == truth_table(&b);
        let v = check_equivalence(&a, &b, EquivMode::Exhaustive).unwrap();
        prop_assert_eq!(v.is_equivalent(), same);
        let s = check_equivalence(&a, &b, EquivMode::Sat { conflict_budget: None }).unwrap();
        prop_assert_eq!(s.is_equivalent(), same);
    }

    #[test]
    fn bit_parallel_simulation_matches_interpreter(
        inputs in 1usize..=12,
        gates in 1usize..60,
        seed in any::<u64>(),
        count in 1usize..200,
    ) {
        let n = random_dag(inputs, gates, &mixed_library(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = PatternBlock::random(inputs, count, &mut rng);
        let out = simulate(&n, &block).unwrap();
        for p in 0..count {
            prop_assert_eq!(out.pattern(p), naive_eval(&n, &block.pattern(p)));
        }
    }
}
