use std::collections::{BTreeMap, HashMap, HashSet};

use f2fsec::ksec::*;
use f2fsec::netlist::techmap::map_lib3;
use f2fsec::netlist::{check_equivalence, CellType, EquivMode, GateId, NetId, Netlist, NetlistBuilder};
use f2fsec::partition::{partition_ht_aware, Strategy, Tier, TierAssignment};
use f2fsec::synthetic::{lib3, random_dag, rewrite_friendly};
use itertools::Itertools;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn template(id: &str) -> StructureTemplate {
    default_templates().into_iter().find(|t| t.id == id).unwrap()
}

// ---------- brute-force bijection oracle ----------

type Edges = HashMap<(usize, usize, u8), usize>;

fn edges(n: &Netlist, lifted: &HashSet<NetId>) -> Edges {
    let mut m = Edges::new();
    for h in n.gate_ids() {
        let g = n.gate(h);
        for (p, f) in g.fanins.iter().enumerate() {
            if lifted.contains(f) {
                continue;
            }
            if let Some(d) = n.net(*f).driver {
                let key = if g.cell.kind.is_symmetric() { 255 } else { p as u8 };
                *m.entry((d.index(), h.index(), key)).or_default() += 1;
            }
        }
    }
    m
}

/// Candidate count of every gate by enumerating all type-respecting
/// bijections.
fn oracle_counts(n: &Netlist, lifted: &HashSet<NetId>) -> Vec<usize> {
    let full = edges(n, &HashSet::new());
    let exp = edges(n, lifted);
    let mut groups: BTreeMap<CellType, Vec<usize>> = BTreeMap::new();
    for g in n.gate_ids() {
        groups.entry(n.gate(g).cell).or_default().push(g.index());
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let k = n.num_gates();
    let mut cand: Vec<HashSet<usize>> = vec![HashSet::new(); k];
    let mut phi = vec![0usize; k];
    fn rec(i: usize, groups: &[Vec<usize>], phi: &mut Vec<usize>, full: &Edges, exp: &Edges, cand: &mut Vec<HashSet<usize>>) {
        if i == groups.len() {
            if exp
                .iter()
                .all(|(&(a, b, key), &c)| full.get(&(phi[a], phi[b], key)).copied().unwrap_or(0) >= c)
            {
                for (u, &g) in phi.iter().enumerate() {
                    cand[g].insert(u);
                }
            }
            return;
        }
        for perm in groups[i].iter().permutations(groups[i].len()) {
            for (u, g) in groups[i].iter().zip(perm) {
                phi[*u] = *g;
            }
            rec(i + 1, groups, phi, full, exp, cand);
        }
    }
    rec(0, &groups, &mut phi, &full, &exp, &mut cand);
    cand.iter().map(|c| c.len()).collect()
}

/// Random lib-3 netlist of `k` gates with at most ⌈k/3⌉ gates per type.
fn small_graph(k: usize, seed: u64) -> (Netlist, HashSet<NetId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lib = lib3();
    let mut cells: Vec<CellType> = (0..k).map(|i| lib[i % 3]).collect();
    cells.shuffle(&mut rng);
    let mut b = NetlistBuilder::new("small");
    let mut sigs: Vec<String> = (0..3).map(|i| format!("i{i}")).collect();
    for s in &sigs {
        b.add_input(s);
    }
    for (i, c) in cells.iter().enumerate() {
        let fanins: Vec<String> = (0..c.arity).map(|_| sigs[rng.gen_range(0..sigs.len())].clone()).collect();
        let refs: Vec<&str> = fanins.iter().map(String::as_str).collect();
        let name = format!("g{i}");
        b.add_gate(&name, *c, &refs);
        sigs.push(name);
    }
    b.add_output(sigs.last().unwrap());
    let n = b.build().unwrap();
    let lifted = (0..n.num_nets() as u32).map(NetId).filter(|_| rng.gen_bool(0.4)).collect();
    (n, lifted)
}

#[test]
fn exact_level_matches_bijection_oracle() {
    for trial in 0..100u64 {
        let k = 4 + (trial as usize % 9);
        let (n, lifted) = small_graph(k, trial);
        let exposed = ExposedGraph::with_lifted(lifted.iter().copied());
        let want = oracle_counts(&n, &lifted);
        let got = candidate_counts_exact(&n, &exposed, DEFAULT_SEARCH_BUDGET).unwrap();
        assert_eq!(got, want, "trial {trial}");
        let upper = candidate_counts_upper(&n, &exposed);
        assert!(upper.iter().zip(&got).all(|(u, e)| u >= e), "trial {trial}");
        let all: Vec<GateId> = n.gate_ids().collect();
        let r = security_level(&n, &exposed, &all, &LevelParams::default()).unwrap();
        assert_eq!(r.k_exact, want.iter().copied().min());
    }
}

#[test]
fn fully_lifted_design_is_bounded_by_type_counts() {
    let mut b = NetlistBuilder::new("six");
    b.add_input("a").add_input("b");
    b.add_gate("n0", CellType::NAND2, &["a", "b"]);
    b.add_gate("n1", CellType::NAND2, &["n0", "b"]);
    b.add_gate("n2", CellType::NAND2, &["n1", "a"]);
    b.add_gate("n3", CellType::NAND2, &["n2", "n1"]);
    b.add_gate("v0", CellType::INV, &["n3"]);
    b.add_gate("v1", CellType::INV, &["v0"]);
    b.add_output("v1");
    let n = b.build().unwrap();
    let r = security_level(
        &n,
        &ExposedGraph::all_lifted(&n),
        &[n.gate_id("n2").unwrap()],
        &LevelParams::default(),
    )
    .unwrap();
    assert_eq!(r.k_exact, Some(4));
    assert_eq!(r.k_upper, 4);
    assert_eq!(type_count_bound(&n), Some((CellType::INV, 2)));
}

#[test]
fn chain_of_two_distinct_gates_is_one_secure() {
    let mut b = NetlistBuilder::new("chain");
    b.add_input("a").add_input("b");
    b.add_gate("x", CellType::NAND2, &["a", "b"]);
    b.add_gate("y", CellType::INV, &["x"]);
    b.add_output("y");
    let n = b.build().unwrap();
    let all: Vec<GateId> = n.gate_ids().collect();
    let r = security_level(&n, &ExposedGraph::default(), &all, &LevelParams::default()).unwrap();
    assert_eq!(r.candidate_counts(), vec![1, 1]);
    assert_eq!(r.k(), 1);
}

#[test]
fn exact_mode_refuses_large_designs() {
    let n = random_dag(8, 50, &lib3(), 1);
    let params = LevelParams {
        guard: 10,
        ..Default::default()
    };
    let sel = [GateId(0)];
    assert!(matches!(
        security_level(&n, &ExposedGraph::default(), &sel, &params),
        Err(KsecError::TooLarge { .. })
    ));
    let refine = LevelParams {
        mode: KMode::Refine,
        ..params
    };
    assert!(security_level(&n, &ExposedGraph::default(), &sel, &refine).is_ok());
}

#[test]
fn gate_type_bound_on_mapped_c432_is_self_consistent() {
    let n = map_lib3(&f2fsec::corpus::load("c432").unwrap()).unwrap();
    let census = n.cell_census();
    let (cell, k) = type_count_bound(&n).unwrap();
    assert_eq!(k, *census.values().min().unwrap());
    assert_eq!(census[&cell.lib_name()], k);
    let everything: Vec<GateId> = n.gate_ids().collect();
    let r = security_level(
        &n,
        &ExposedGraph::all_lifted(&n),
        &everything,
        &LevelParams {
            mode: KMode::Refine,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(r.k_upper, k);
    println!("c432 lib-3 census {census:?}; bound {k} ({cell}); reference value 30 (INV)");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lifting_a_wire_never_shrinks_candidate_sets(seed in 0u64..10_000, k in 4usize..12, extra in 0usize..64) {
        let (n, lifted) = small_graph(k, seed);
        let before = ExposedGraph::with_lifted(lifted.iter().copied());
        let net = NetId((extra % n.num_nets()) as u32);
        let after = ExposedGraph::with_lifted(lifted.iter().copied().chain([net]));
        let a = candidate_counts_exact(&n, &before, DEFAULT_SEARCH_BUDGET).unwrap();
        let b = candidate_counts_exact(&n, &after, DEFAULT_SEARCH_BUDGET).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| y >= x));
        let ua = candidate_counts_upper(&n, &before);
        let ub = candidate_counts_upper(&n, &after);
        prop_assert!(ua.iter().zip(&ub).all(|(x, y)| y >= x));
    }

    #[test]
    fn refinement_bounds_exact_counts(seed in 0u64..10_000) {
        let n = random_dag(4, 30, &lib3(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lifted: Vec<NetId> = (0..n.num_nets() as u32).map(NetId).filter(|_| rng.gen_bool(0.5)).collect();
        let e = ExposedGraph::with_lifted(lifted);
        let exact = candidate_counts_exact(&n, &e, DEFAULT_SEARCH_BUDGET).unwrap();
        let upper = candidate_counts_upper(&n, &e);
        prop_assert!(exact.iter().zip(&upper).all(|(x, u)| x <= u && *x >= 1));
    }
}

// ---------- lifting ----------

fn min_k(n: &Netlist, lifted: &HashSet<NetId>) -> usize {
    *oracle_counts(n, lifted).iter().min().unwrap()
}

#[test]
fn greedy_lifting_matches_best_subset_on_ten_gates() {
    let (n, _) = small_graph(10, 7);
    let sel: Vec<GateId> = n.gate_ids().collect();
    let params = LiftParams {
        budget: 3,
        target_k: None,
        level: LevelParams::default(),
    };
    let eg = lift_wires(&n, &StructureInstances::default(), &sel, &params).unwrap();
    assert_eq!(eg.greedy.len(), 3);
    let greedy_k = min_k(&n, &eg.lifted.iter().copied().collect());
    assert_eq!(eg.k_estimate, Some(greedy_k));
    let wires: Vec<NetId> = (0..n.num_nets() as u32)
        .map(NetId)
        .filter(|&f| n.net(f).driver.is_some() && !n.fanouts(f).is_empty())
        .collect();
    let best = wires
        .iter()
        .combinations(3)
        .map(|c| min_k(&n, &c.into_iter().copied().collect()))
        .max()
        .unwrap();
    assert_eq!(greedy_k, best);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn greedy_lifting_never_beats_the_optimum(seed in 0u64..1000) {
        let (n, _) = small_graph(8, seed);
        let sel: Vec<GateId> = n.gate_ids().collect();
        let params = LiftParams { budget: 2, target_k: None, level: LevelParams::default() };
        let eg = lift_wires(&n, &StructureInstances::default(), &sel, &params).unwrap();
        let wires: Vec<NetId> = (0..n.num_nets() as u32)
            .map(NetId)
            .filter(|&f| n.net(f).driver.is_some() && !n.fanouts(f).is_empty())
            .collect();
        let best = wires.iter().combinations(2.min(wires.len()))
            .map(|c| min_k(&n, &c.into_iter().copied().collect()))
            .max()
            .unwrap();
        prop_assert!(eg.k_estimate.unwrap() <= best);
    }
}

#[test]
fn lifting_stops_at_target() {
    let n = replicate_template(&template("f"), 3);
    let sel: Vec<GateId> = n.gate_ids().collect();
    let params = LiftParams {
        budget: 50,
        target_k: Some(2),
        level: LevelParams::default(),
    };
    let eg = lift_wires(&n, &StructureInstances::default(), &sel, &params).unwrap();
    assert_eq!(eg.target_reached, Some(true));
    assert!(eg.k_estimate.unwrap() >= 2);
    assert!(eg.greedy.len() < 50);
}

#[test]
fn four_isolated_instances_give_four_candidates() {
    let n = replicate_template(&template("a"), 4);
    let inst = mine_structures(&n, &default_templates());
    assert_eq!(inst.census(&default_templates())["a"], 4);
    let sel: Vec<GateId> = n.gate_ids().collect();
    let eg = lift_wires(&n, &inst, &sel, &LiftParams::default()).unwrap();
    assert!(eg.boundary_lifted > 0);
    let r = security_level(&n, &eg, &sel, &LevelParams::default()).unwrap();
    assert!(r.candidate_counts().iter().all(|&c| c >= 4));
    assert_eq!(r.k(), 4);
}

// ---------- adversary ----------

#[test]
fn hit_rate_is_one_over_k() {
    for (copies, lo, hi) in [(4usize, 0.235, 0.265), (400, 0.0015, 0.0035)] {
        let n = replicate_template(&template("f"), copies);
        let inst = mine_structures(&n, &default_templates());
        let sel: Vec<GateId> = n.gate_ids().filter(|g| g.index() % 3 == 0).collect();
        let eg = lift_wires(&n, &inst, &sel, &LiftParams::default()).unwrap();
        let r = security_level(&n, &eg, &sel, &LevelParams::default()).unwrap();
        assert_eq!(r.k_exact, Some(copies));
        let p = ht_success_probability(&r, 10_000, 11);
        println!("k={copies}: hit rate {p}");
        assert!((lo..=hi).contains(&p), "{p}");
    }
    let (n, _) = small_graph(6, 1);
    let r = security_level(&n, &ExposedGraph::default(), &[GateId(0)], &LevelParams::default()).unwrap();
    if r.k() == 1 {
        assert_eq!(ht_success_probability(&r, 1000, 1), 1.0);
    }
}

// ---------- vulnerability ----------

#[test]
fn vulnerability_of_wide_and_matches_signal_probability() {
    let mut b = NetlistBuilder::new("and8");
    for i in 0..8 {
        b.add_input(&format!("i{i}"));
    }
    b.add_gate("l", CellType::new(f2fsec::netlist::CellKind::And, 4).unwrap(), &["i0", "i1", "i2", "i3"]);
    b.add_gate("r", CellType::new(f2fsec::netlist::CellKind::And, 4).unwrap(), &["i4", "i5", "i6", "i7"]);
    b.add_gate("y", CellType::AND2, &["l", "r"]);
    b.add_gate("buf", CellType::BUF, &["i0"]);
    b.add_output("y").add_output("buf");
    let n = b.build().unwrap();
    let patterns = 1 << 16;
    let v = vulnerability_score(&n, patterns, 0.25, 5).unwrap();
    let y = &v.gates[n.gate_id("y").unwrap().index()];
    let p = 1.0 / 256.0;
    let se = (p * (1.0 - p) / patterns as f64).sqrt();
    assert!((y.p1 - p).abs() < 5.0 * se, "{}", y.p1);
    assert!(rarity(y.p1) > 0.98);
    // a primary output is always observable
    assert_eq!(y.observability, 1.0);
    let buf = &v.gates[n.gate_id("buf").unwrap().index()];
    assert!(rarity(buf.p1) < 0.05);
    assert!(buf.score < 0.05);
    assert_eq!(v.selected.len(), 1);
}

#[test]
fn selection_size_is_rounded_fraction() {
    let n = random_dag(10, 100, &lib3(), 4);
    let v = vulnerability_score(&n, 2048, DEFAULT_FRACTION, 1).unwrap();
    assert_eq!(v.selected.len(), 10);
    let s: Vec<f64> = v.selected.iter().map(|g| v.gates[g.index()].score).collect();
    assert!(s.windows(2).all(|w| w[0] >= w[1]));
    let best = v.gates.iter().map(|g| g.score).fold(0.0, f64::max);
    assert_eq!(s[0], best);
    assert!(v.gates.iter().all(|g| (0.0..=1.0).contains(&g.score)));
}

#[test]
fn observability_matches_flip_resimulation() {
    let n = random_dag(6, 40, &lib3(), 9);
    let v = vulnerability_score(&n, 512, 0.1, 2).unwrap();
    // oracle: rebuild the netlist with the gate's output inverted
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let block = f2fsec::netlist::PatternBlock::random(n.frame_inputs().len(), 512, &mut rng);
    let base = f2fsec::netlist::simulate(&n, &block).unwrap();
    for g in n.gate_ids().step_by(7) {
        let name = n.gate_name(g).to_string();
        let mut text = f2fsec::netlist::to_bench(&n).replace(&format!("\n{name} = "), &format!("\n{name}__pre = "));
        text.push_str(&format!("\n{name} = NOT({name}__pre)\n"));
        let flipped = f2fsec::netlist::parse_bench(&text).unwrap();
        let out = f2fsec::netlist::simulate(&flipped, &block).unwrap();
        let mut seen = 0;
        for p in 0..512 {
            if (0..base.num_lanes()).any(|o| base.get(o, p) != out.get(o, p)) {
                seen += 1;
            }
        }
        assert_eq!(v.gates[g.index()].observability, seen as f64 / 512.0, "{name}");
    }
}

// ---------- templates and mining ----------

#[test]
fn template_file_round_trips() {
    let t = default_templates();
    assert_eq!(t.len(), 7);
    assert!(t.iter().all(|x| (3..=6).contains(&x.len())));
    let text: String = t.iter().map(|x| x.to_text()).collect();
    assert_eq!(parse_templates(&text).unwrap(), t);
}

#[test]
fn malformed_templates_report_lines() {
    let bad = [
        ("TEMPLATE z\nn1 NAND2 in:a\nEND\n", 2),
        ("TEMPLATE z\nn1 NAND2 in:a,b\nn2 INV in:c\nEND\n", 1),
        ("n1 INV\n", 1),
        ("TEMPLATE z\nn1 FOO\nEND\n", 2),
        ("TEMPLATE z\nn1 INV in:a\nn1 -> n2.pin0\nEND\n", 3),
        ("TEMPLATE z\nn1 INV in:a\n", 1),
    ];
    for (text, line) in bad {
        match parse_templates(text) {
            Err(KsecError::Template { line: l, .. }) => assert_eq!(l, line, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn disjoint_copies_are_all_found() {
    let n = replicate_template(&template("a"), 3);
    let inst = mine_structures(&n, &[template("a")]);
    assert_eq!(inst.len(), 3);
    inst.verify(&n, &[template("a")]).unwrap();
    assert_eq!(coverage(&n, &inst), 1.0);
    assert_eq!(coverage(&n, &StructureInstances::default()), 0.0);
}

#[test]
fn overlapping_matches_keep_one() {
    // two chains sharing the middle inverter's driver
    let mut b = NetlistBuilder::new("overlap");
    for x in ["a", "b", "c", "d"] {
        b.add_input(x);
    }
    b.add_gate("n1", CellType::NAND2, &["a", "b"]);
    b.add_gate("v", CellType::INV, &["n1"]);
    b.add_gate("y1", CellType::NAND2, &["v", "c"]);
    b.add_gate("y2", CellType::NAND2, &["v", "d"]);
    b.add_output("y1").add_output("y2");
    let n = b.build().unwrap();
    let f = StructureTemplate {
        outputs: vec![2],
        ..template("f")
    };
    // with v fanning out twice, `f` needs v to be an output node
    let mut loose = f.clone();
    loose.outputs = vec![1, 2];
    assert_eq!(enumerate_matches(&n, &loose, &[false; 4]).len(), 2);
    let inst = mine_structures(&n, &[loose.clone()]);
    assert_eq!(inst.len(), 1);
    assert_eq!(inst.instances[0].nodes, vec![GateId(0), GateId(1), GateId(2)]);
    assert_eq!(mine_structures(&n, &[f]).len(), 0);
}

/// Independent enumeration: every injective, cell-respecting node→gate map,
/// checked against the custom-cell conditions.
fn oracle_matches(n: &Netlist, t: &StructureTemplate) -> Vec<Vec<GateId>> {
    let k = t.nodes.len();
    let mut out = Vec::new();
    let mut m: Vec<GateId> = Vec::new();
    fn ok_so_far(n: &Netlist, t: &StructureTemplate, m: &[GateId]) -> bool {
        let i = m.len() - 1;
        if n.gate(m[i]).cell != t.nodes[i].cell || m[..i].contains(&m[i]) {
            return false;
        }
        for j in 0..m.len() {
            for (a, b) in [(i, j), (j, i)] {
                let need = t.nodes[b].pins.iter().filter(|p| **p == PinSource::Node(a)).count();
                let have = n.gate(m[b]).fanins.iter().filter(|f| **f == n.gate(m[a]).output).count();
                if need != have {
                    return false;
                }
            }
        }
        true
    }
    fn full_ok(n: &Netlist, t: &StructureTemplate, m: &[GateId]) -> bool {
        let outs: HashSet<NetId> = m.iter().map(|g| n.gate(*g).output).collect();
        for (i, node) in t.nodes.iter().enumerate() {
            let net = n.gate(m[i]).output;
            if !t.outputs.contains(&i) {
                let internal = t.nodes.iter().flat_map(|x| &x.pins).filter(|p| **p == PinSource::Node(i)).count();
                if n.is_output(net) || n.fanouts(net).len() != internal {
                    return false;
                }
            }
            let _ = node;
        }
        // boundary binding over all pin orders of symmetric cells
        let per_node: Vec<Vec<Vec<NetId>>> = t
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let fan = &n.gate(m[i]).fanins;
                if node.cell.kind.is_symmetric() {
                    fan.iter().copied().permutations(fan.len()).collect()
                } else {
                    vec![fan.clone()]
                }
            })
            .collect();
        per_node.iter().multi_cartesian_product().any(|choice| {
            let mut bind: HashMap<usize, NetId> = HashMap::new();
            for (i, node) in t.nodes.iter().enumerate() {
                for (p, src) in node.pins.iter().enumerate() {
                    let net = choice[i][p];
                    match src {
                        PinSource::Node(j) => {
                            if net != n.gate(m[*j]).output {
                                return false;
                            }
                        }
                        PinSource::Boundary(b) => {
                            if outs.contains(&net) || *bind.entry(*b).or_insert(net) != net {
                                return false;
                            }
                        }
                    }
                }
            }
            bind.values().collect::<HashSet<_>>().len() == bind.len()
        })
    }
    fn rec(n: &Netlist, t: &StructureTemplate, k: usize, m: &mut Vec<GateId>, out: &mut Vec<Vec<GateId>>) {
        if m.len() == k {
            if full_ok(n, t, m) {
                out.push(m.clone());
            }
            return;
        }
        for g in n.gate_ids() {
            m.push(g);
            if ok_so_far(n, t, m) {
                rec(n, t, k, m, out);
            }
            m.pop();
        }
    }
    rec(n, t, k, &mut m, &mut out);
    out
}

fn oracle_greedy(n: &Netlist, templates: &[StructureTemplate]) -> Vec<(String, Vec<GateId>)> {
    let mut taken: HashSet<GateId> = HashSet::new();
    let mut out = Vec::new();
    for t in templates {
        let mut sets: Vec<Vec<GateId>> = oracle_matches(n, t)
            .into_iter()
            .map(|mut m| {
                m.sort();
                m
            })
            .collect();
        sets.sort();
        sets.dedup();
        for s in sets {
            if s.iter().all(|g| !taken.contains(g)) {
                taken.extend(s.iter().copied());
                out.push((t.id.clone(), s));
            }
        }
    }
    out
}

#[test]
fn mining_matches_exhaustive_enumeration() {
    let templates = default_templates();
    for seed in 0..3 {
        let n = random_dag(12, 200, &lib3(), seed);
        let got: Vec<(String, Vec<GateId>)> = mine_structures(&n, &templates)
            .instances
            .iter()
            .map(|i| (i.template.clone(), i.gates()))
            .collect();
        let want = oracle_greedy(&n, &templates);
        assert_eq!(got, want, "seed {seed}");
        assert!(!want.is_empty());
    }
}

// ---------- rewriting ----------

/// An OR of two ANDs feeding some NAND/NOR/INV logic; twelve gates.
fn and_or_cone() -> (Netlist, GateId) {
    let mut b = NetlistBuilder::new("andor");
    for x in ["a", "b", "c", "d", "e"] {
        b.add_input(x);
    }
    b.add_gate("n1", CellType::AND2, &["a", "b"]);
    b.add_gate("n2", CellType::AND2, &["c", "d"]);
    b.add_gate("y", CellType::OR2, &["n1", "n2"]);
    b.add_gate("z1", CellType::NOR2, &["y", "e"]);
    b.add_gate("z2", CellType::NAND2, &["z1", "a"]);
    b.add_gate("z3", CellType::INV, &["z2"]);
    b.add_gate("w1", CellType::NAND2, &["e", "c"]);
    b.add_gate("w2", CellType::NOR2, &["w1", "z3"]);
    b.add_gate("w3", CellType::INV, &["w2"]);
    b.add_gate("k1", CellType::NOR2, &["b", "d"]);
    b.add_gate("k2", CellType::NAND2, &["k1", "w3"]);
    b.add_gate("out", CellType::INV, &["k2"]);
    b.add_output("out").add_output("z3");
    let n = b.build().unwrap();
    let y = n.gate_id("y").unwrap();
    (n, y)
}

#[test]
fn zero_iterations_is_identity() {
    let (n, y) = and_or_cone();
    let r = rewrite_iterate(&n, &default_templates(), &[y], 0).unwrap();
    assert_eq!(f2fsec::netlist::to_bench(&r.netlist), f2fsec::netlist::to_bench(&n));
    assert_eq!(r.census.len(), 1);
}

#[test]
fn and_or_cone_becomes_nand_nand() {
    let (n, y) = and_or_cone();
    assert_eq!(n.num_gates(), 12);
    let templates = default_templates();
    let before = mine_structures(&n, &templates).census(&templates)["a"];
    let r = rewrite_iterate(&n, &templates, &[y], 1).unwrap();
    assert_eq!(r.census[0].counts["a"], before);
    assert!(r.census[1].counts["a"] > before);
    let y2 = r.netlist.gate_id("y").unwrap();
    assert_eq!(r.netlist.gate(y2).cell, CellType::NAND2);
    assert!(r.instances.instances.iter().any(|i| i.template == "a" && i.nodes.contains(&y2)));
    assert!(check_equivalence(&n, &r.netlist, EquivMode::Exhaustive).unwrap().is_equivalent());
}

#[test]
fn rewriting_grows_the_census_monotonically() {
    let templates = default_templates();
    let n = rewrite_friendly(0);
    let v = vulnerability_score(&n, 4096, DEFAULT_FRACTION, 0).unwrap();
    let r = rewrite_iterate(&n, &templates, &v.selected, 5).unwrap();
    for w in r.census.windows(2) {
        for (id, c) in &w[0].counts {
            assert!(w[1].counts[id] >= *c, "{id} shrank at iteration {}", w[1].iteration);
        }
    }
    assert!(r.census[5].coverage > r.census[1].coverage);
    r.instances.verify(&r.netlist, &templates).unwrap();
    assert!(check_equivalence(&n, &r.netlist, EquivMode::Sat { conflict_budget: None })
        .unwrap()
        .is_equivalent());
    let eq = check_equivalence(&n, &r.netlist, EquivMode::Random { patterns: 10_000, seed: 3 }).unwrap();
    assert!(!matches!(eq, f2fsec::netlist::Verdict::Counterexample(_)));
}

#[test]
fn preserved_instances_survive_partitioning() {
    let templates = default_templates();
    let n = rewrite_friendly(1);
    let v = vulnerability_score(&n, 2048, DEFAULT_FRACTION, 1).unwrap();
    let r = rewrite_iterate(&n, &templates, &v.selected, 2).unwrap();
    let a = partition_ht_aware(&r.netlist, &r.instances.gate_sets(), 4).unwrap();
    let level = tier_level(&r.instances, &a);
    assert_eq!(level.split, 0);
    // hand count
    let mut want: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for i in &r.instances.instances {
        let e = want.entry(i.template.clone()).or_default();
        match a.tier(i.nodes[0]) {
            Tier::Bottom => e.0 += 1,
            Tier::Top => e.1 += 1,
        }
    }
    let got: BTreeMap<String, (usize, usize)> =
        level.counts.iter().map(|c| (c.template.clone(), (c.bottom, c.top))).collect();
    assert_eq!(got, want);
    let k = want.values().map(|x| x.0).min().unwrap() + want.values().map(|x| x.1).min().unwrap();
    assert_eq!(level.k_3d, k);
}

fn assignment(tiers: Vec<Tier>) -> TierAssignment {
    TierAssignment {
        tiers,
        strategy: Strategy::HtAware,
        seed: 0,
        threshold: None,
        notes: Vec::new(),
    }
}

#[test]
fn tier_level_sums_scarcest_templates() {
    // 16 bottom / 14 top copies of the scarcest template, more of the other
    let mut instances = Vec::new();
    let mut tiers = Vec::new();
    let mut next = 0u32;
    for (id, bottom, top) in [("a", 16, 14), ("c", 20, 30)] {
        for k in 0..bottom + top {
            instances.push(Instance {
                template: id.into(),
                nodes: vec![GateId(next)],
                boundary: Vec::new(),
            });
            next += 1;
            tiers.push(if k < bottom { Tier::Bottom } else { Tier::Top });
        }
    }
    let si = StructureInstances { instances };
    assert_eq!(tier_level(&si, &assignment(tiers.clone())).k_3d, 30);
    let one = tier_level(&si, &assignment(vec![Tier::Bottom; tiers.len()]));
    assert_eq!(one.k_3d, 30);
    assert_eq!(one.counts[0].top, 0);
}
