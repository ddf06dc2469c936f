use f2fsec::corpus;
use f2fsec::netlist::{sta_unit_delay, CellType, GateId, NetlistBuilder};
use f2fsec::partition::{
    cut_set, module_bipartition, partition_hierarchical, partition_ht_aware, partition_max_cut,
    partition_random, partition_timing_aware, Tier, DEFAULT_BALANCE,
};

fn mean_cut(name: &str, f: impl Fn(u64) -> usize) -> f64 {
    let _ = name;
    (0..10).map(|s| f(s) as f64).sum::<f64>() / 10.0
}

#[test]
fn timing_aware_cuts_less_than_random_on_iscas85() {
    for name in corpus::iscas85_names() {
        let n = corpus::load(name).unwrap();
        let r = mean_cut(name, |s| cut_set(&n, &partition_random(&n, 0.5, s).unwrap()).size());
        let t = mean_cut(name, |s| {
            cut_set(&n, &partition_timing_aware(&n, None, DEFAULT_BALANCE, s).unwrap()).size()
        });
        println!("{name}: random {r:.1}, timing-aware {t:.1}");
        assert!(t < r, "{name}: timing-aware {t} vs random {r}");
    }
}

#[test]
fn strategies_are_total_and_deterministic() {
    let n = corpus::load("c880").unwrap();
    for seed in [1, 2] {
        let runs = [
            partition_random(&n, 0.5, seed).unwrap(),
            partition_max_cut(&n, seed).unwrap(),
            partition_timing_aware(&n, None, DEFAULT_BALANCE, seed).unwrap(),
        ];
        let again = [
            partition_random(&n, 0.5, seed).unwrap(),
            partition_max_cut(&n, seed).unwrap(),
            partition_timing_aware(&n, None, DEFAULT_BALANCE, seed).unwrap(),
        ];
        for (a, b) in runs.iter().zip(&again) {
            assert_eq!(a, b);
            assert_eq!(a.tiers.len(), n.num_gates());
        }
    }
}

#[test]
fn timing_aware_respects_final_threshold() {
    for name in ["c432", "c1908"] {
        let n = corpus::load(name).unwrap();
        let t = sta_unit_delay(&n).unwrap();
        let a = partition_timing_aware(&n, None, DEFAULT_BALANCE, 3).unwrap();
        let th = a.threshold.unwrap();
        for g in n.gate_ids() {
            if t.slack_of(g) < th {
                assert_eq!(a.tier(g), Tier::Bottom);
            }
        }
        let diff = (2 * a.count(Tier::Top)).abs_diff(n.num_gates()) as f64;
        assert!(diff <= (DEFAULT_BALANCE * n.num_gates() as f64).max(1.0), "{name}");
    }
}

#[test]
fn max_cut_cuts_more_than_random() {
    let n = corpus::load("c432").unwrap();
    let r = mean_cut("c432", |s| cut_set(&n, &partition_random(&n, 0.5, s).unwrap()).size());
    let m = mean_cut("c432", |s| cut_set(&n, &partition_max_cut(&n, s).unwrap()).size());
    assert!(m > r, "max-cut {m} vs random {r}");
}

/// Four modules of two gates each; inter-module nets per the matrix.
fn four_modules(w: [[u32; 4]; 4]) -> f2fsec::netlist::Netlist {
    let mut b = NetlistBuilder::new("hier");
    b.add_input("x");
    let mods = ["A", "B", "C", "D"];
    for m in mods {
        b.add_gate(&format!("{m}/src"), CellType::INV, &["x"]);
    }
    let mut k = 0;
    for i in 0..4 {
        for j in 0..4 {
            for _ in 0..w[i][j] {
                let name = format!("{}/sink{k}", mods[j]);
                let src = format!("{}/src", mods[i]);
                b.add_gate(&name, CellType::INV, &[&src]);
                b.add_output(&name);
                k += 1;
            }
        }
    }
    b.build().unwrap()
}

#[test]
fn two_modules_land_on_opposite_tiers() {
    let mut w = [[0; 4]; 4];
    w[0][1] = 10;
    let n = four_modules(w);
    let a = partition_hierarchical(&n, DEFAULT_BALANCE, 0).unwrap();
    let ta = a.tier(n.gate_id("A/src").unwrap());
    let tb = a.tier(n.gate_id("B/src").unwrap());
    assert_ne!(ta, tb);
    assert!(cut_set(&n, &a).size() >= 1);
    // Every module stays whole.
    for g in n.gate_ids() {
        let m = n.gate_name(g).split('/').next().unwrap();
        assert_eq!(a.tier(g), a.tier(n.gate_id(&format!("{m}/src")).unwrap()));
    }
}

#[test]
fn module_bipartition_matches_brute_force() {
    let w: Vec<Vec<u64>> = vec![vec![0, 5, 1, 7], vec![5, 0, 6, 2], vec![1, 6, 0, 3], vec![7, 2, 3, 0]];
    let side = module_bipartition(&w, &[1, 1, 1, 1]);
    let cut = |s: &[bool]| -> u64 {
        let mut c = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                if s[i] != s[j] {
                    c += w[i][j];
                }
            }
        }
        c
    };
    let best = (0..8u32)
        .map(|m| {
            let s: Vec<bool> = (0..4).map(|i| i > 0 && (m >> (i - 1)) & 1 == 1).collect();
            cut(&s)
        })
        .max()
        .unwrap();
    assert_eq!(cut(&side), best);
}

#[test]
fn single_module_falls_back_with_tag() {
    let mut b = NetlistBuilder::new("one");
    b.add_input("x").add_output("M/y");
    b.add_gate("M/t", CellType::INV, &["x"]);
    b.add_gate("M/y", CellType::INV, &["M/t"]);
    let n = b.build().unwrap();
    let a = partition_hierarchical(&n, DEFAULT_BALANCE, 0).unwrap();
    assert!(a.notes[0].contains("single module"));
}

#[test]
fn ht_aware_keeps_instances_whole_and_varies_with_seed() {
    let n = corpus::load("c880").unwrap();
    // Pairs of directly connected gates serve as stand-in instances.
    let mut used = vec![false; n.num_gates()];
    let mut instances: Vec<Vec<GateId>> = Vec::new();
    for g in n.gate_ids() {
        if used[g.index()] {
            continue;
        }
        if let Some(s) = n.fanouts(n.gate(g).output).iter().find(|s| !used[s.gate.index()] && s.gate != g) {
            used[g.index()] = true;
            used[s.gate.index()] = true;
            instances.push(vec![g, s.gate]);
        }
        if instances.len() == 40 {
            break;
        }
    }
    let mut bottom_counts = std::collections::BTreeSet::new();
    for seed in 0..100 {
        let a = partition_ht_aware(&n, &instances, seed).unwrap();
        for inst in &instances {
            assert!(inst.iter().all(|g| a.tier(*g) == a.tier(inst[0])));
        }
        bottom_counts.insert(instances.iter().filter(|i| a.tier(i[0]) == Tier::Bottom).count());
    }
    assert!(bottom_counts.len() > 5);
}
