//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use f2fsec::attack::{proximity_attack, random_guess_baseline, ProximityParams};
use f2fsec::f2f::{search_space, Direction, FormulaTag, Randomization};
use f2fsec::ksec::{
    candidate_counts_exact, default_templates, ht_success_probability, lift_wires, mine_structures,
    replicate_template, security_level, type_count_bound, ExposedGraph, LevelParams, LiftParams,
    DEFAULT_SEARCH_BUDGET,
};
use f2fsec::metrics::hd;
use f2fsec::netlist::techmap::map_lib3;
use f2fsec::netlist::{check_equivalence, parse_bench, CellType, EquivMode, NetId, Netlist, NetlistBuilder, Verdict};
use f2fsec::partition::{cut_set, partition_random, partition_timing_aware, DEFAULT_BALANCE};
use f2fsec::{corpus, synthetic};
use f2fsec_cli::config::{stage_seed, AttackKind, ConfigText, RunConfig};
use f2fsec_cli::flow::{self, Defended, RunDir};
use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let t = start.elapsed();
    check(t <= limit, format!("{detail}; {:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

fn base_config(seed: u64) -> RunConfig {
    RunConfig::parse(&format!("seed={seed}")).unwrap()
}

fn run_dir(d: &Defended) -> RunDir {
    RunDir {
        config: ConfigText::default(),
        report: d.report.clone(),
        netlist: d.netlist.clone(),
        secret: d.plan.secret(),
        fab: d.fab.clone(),
        end_user: d.end_user.clone(),
    }
}

// 1 ------------------------------------------------------------------

/// Direction-respecting bijections between `d_bot + d_top` drivers and as
/// many sinks, by enumerating every permutation.
fn brute_completions(d_bot: usize, d_top: usize) -> usize {
    let dirs: Vec<bool> = (0..d_bot).map(|_| false).chain((0..d_top).map(|_| true)).collect();
    let d = dirs.len();
    (0..d).permutations(d).filter(|p| p.iter().enumerate().all(|(i, &j)| dirs[i] == dirs[j])).count()
}

fn search_space_formula() -> Outcome {
    let start = Instant::now();
    for b in 0..=4 {
        for t in 0..=4 {
            let want = brute_completions(b, t);
            let got = search_space(b, t, FormulaTag::Plain).map_err(|e| e.to_string())?.count;
            if got != want.into() {
                return Err(format!("({b},{t}): formula {got}, enumeration {want}"));
            }
        }
    }
    let c = search_space(3, 2, FormulaTag::Plain).unwrap().count;
    if c != 12u32.into() {
        return Err(format!("(3,2) = {c}"));
    }
    within(Duration::from_secs(1), start, "25 port-count pairs match enumeration, (3,2) = 12".into())
}

// 2 ------------------------------------------------------------------

fn symmetric_probability() -> Outcome {
    let start = Instant::now();
    let t = default_templates().into_iter().find(|t| t.id == "f").unwrap();
    let mut parts = Vec::new();
    for (copies, target, tol) in [(4usize, 0.25, 0.015), (400, 0.0025, 0.001)] {
        let n = replicate_template(&t, copies);
        let inst = mine_structures(&n, &default_templates());
        if inst.len() != copies {
            return Err(format!("{copies}-fold: mined {} instances", inst.len()));
        }
        let all: Vec<_> = n.gate_ids().collect();
        let eg = lift_wires(&n, &inst, &all, &LiftParams::default()).map_err(|e| e.to_string())?;
        let r = security_level(&n, &eg, &all, &LevelParams::default()).map_err(|e| e.to_string())?;
        if r.k_exact != Some(copies) {
            return Err(format!("{copies}-fold: k_exact {:?}", r.k_exact));
        }
        let p = ht_success_probability(&r, 10_000, stage_seed(copies as u64, "ht_trials"));
        if (p - target).abs() > tol {
            return Err(format!("{copies}-fold: hit rate {p} outside {target} ± {tol}"));
        }
        parts.push(format!("k={copies}: {p}"));
    }
    within(Duration::from_secs(30), start, parts.join(", "))
}

// 3 ------------------------------------------------------------------

type Edges = HashMap<(usize, usize, u8), usize>;

fn edge_multiset(n: &Netlist, lifted: &HashSet<NetId>) -> Edges {
    let mut m = Edges::new();
    for h in n.gate_ids() {
        let g = n.gate(h);
        for (p, f) in g.fanins.iter().enumerate() {
            if lifted.contains(f) {
                continue;
            }
            if let Some(d) = n.net(*f).driver {
                let key = if g.cell.kind.is_symmetric() { u8::MAX } else { p as u8 };
                *m.entry((d.index(), h.index(), key)).or_default() += 1;
            }
        }
    }
    m
}

/// For each netlist gate, the exposed gates some type-respecting bijection
/// maps onto it while keeping every exposed edge.
fn bijection_oracle(n: &Netlist, lifted: &HashSet<NetId>) -> Vec<usize> {
    let full = edge_multiset(n, &HashSet::new());
    let exposed = edge_multiset(n, lifted);
    let mut classes: BTreeMap<CellType, Vec<usize>> = BTreeMap::new();
    for g in n.gate_ids() {
        classes.entry(n.gate(g).cell).or_default().push(g.index());
    }
    let per_class: Vec<Vec<Vec<usize>>> = classes
        .values()
        .map(|c| c.iter().copied().permutations(c.len()).collect())
        .collect();
    let keys: Vec<&Vec<usize>> = classes.values().collect();
    let mut seen: Vec<HashSet<usize>> = vec![HashSet::new(); n.num_gates()];
    let mut phi = vec![0usize; n.num_gates()];
    for choice in per_class.iter().map(|v| v.iter()).multi_cartesian_product() {
        for (class, image) in keys.iter().zip(&choice) {
            for (u, g) in class.iter().zip(image.iter()) {
                phi[*u] = *g;
            }
        }
        if exposed.iter().all(|(&(a, b, k), &c)| full.get(&(phi[a], phi[b], k)).copied().unwrap_or(0) >= c) {
            for (u, &g) in phi.iter().enumerate() {
                seen[g].insert(u);
            }
        }
    }
    seen.iter().map(HashSet::len).collect()
}

/// Random 3-cell netlist of `k` gates, no type used more than 4 times,
/// with a random subset of nets lifted.
fn random_exposed(k: usize, seed: u64) -> (Netlist, HashSet<NetId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lib = synthetic::lib3();
    let mut cells: Vec<CellType> = (0..k).map(|i| lib[i % 3]).collect();
    cells.shuffle(&mut rng);
    let mut b = NetlistBuilder::new("exposed");
    let inputs = rng.gen_range(1..=4);
    let mut sigs: Vec<String> = (0..inputs).map(|i| format!("x{i}")).collect();
    for s in &sigs {
        b.add_input(s);
    }
    for (i, c) in cells.iter().enumerate() {
        let lo = sigs.len().saturating_sub(5);
        let fanins: Vec<String> = (0..c.arity).map(|_| sigs[rng.gen_range(lo..sigs.len())].clone()).collect();
        let refs: Vec<&str> = fanins.iter().map(String::as_str).collect();
        b.add_gate(&format!("u{i}"), *c, &refs);
        sigs.push(format!("u{i}"));
    }
    b.add_output(sigs.last().unwrap());
    let n = b.build().unwrap();
    let p = rng.gen_range(0.1..0.7);
    let lifted = (0..n.num_nets() as u32).map(NetId).filter(|_| rng.gen_bool(p)).collect();
    (n, lifted)
}

fn exact_matches_oracle() -> Outcome {
    let start = Instant::now();
    let mut agree = 0;
    for trial in 0..100u64 {
        let k = 3 + (trial as usize % 10);
        let (n, lifted) = random_exposed(k, 1000 + trial);
        let want = bijection_oracle(&n, &lifted);
        let exposed = ExposedGraph::with_lifted(lifted.iter().copied());
        let got = candidate_counts_exact(&n, &exposed, DEFAULT_SEARCH_BUDGET);
        let all: Vec<_> = n.gate_ids().collect();
        let level = security_level(&n, &exposed, &all, &LevelParams::default()).map_err(|e| e.to_string())?;
        if got.as_ref() == Some(&want) && level.k_exact == want.iter().copied().min() {
            agree += 1;
        }
    }
    let r = within(Duration::from_secs(120), start, format!("{agree}/100 agree"))?;
    check(agree == 100, r)
}

// 4 ------------------------------------------------------------------

fn type_bound_c432() -> Outcome {
    let n = map_lib3(&corpus::load("c432").unwrap()).map_err(|e| e.to_string())?;
    let census = n.cell_census();
    let (cell, k) = type_count_bound(&n).ok_or("empty design")?;
    let min = *census.values().min().unwrap();
    let detail = format!("lib-3 census {census:?}, bound {k} ({}); reference 30 (INV)", cell.lib_name());
    if k == 30 {
        Ok(format!("{detail}; exact"))
    } else {
        check(k == min && census[&cell.lib_name()] == k, format!("{detail}; self-consistent"))
    }
}

// 5 ------------------------------------------------------------------

fn defense_soundness() -> Outcome {
    let mut checked = 0;
    for name in corpus::iscas85_names() {
        let n = corpus::load(name).unwrap();
        for seed in 0..10u64 {
            let mut cfg = base_config(seed);
            cfg.switchbox = seed % 2 == 1;
            let d = flow::defend(&cfg, name, n.clone()).map_err(|e| format!("{name} seed {seed}: {e}"))?;
            let rebuilt = d.fab.reassemble(&d.plan.secret_mapping()).map_err(|e| e.to_string())?;
            let mode = if n.frame_inputs().len() <= 20 {
                EquivMode::Exhaustive
            } else {
                EquivMode::Random { patterns: 100_000, seed }
            };
            match check_equivalence(&n, &rebuilt, mode).map_err(|e| e.to_string())? {
                Verdict::Counterexample(c) => return Err(format!("{name} seed {seed}: mismatch at {}", c.output)),
                _ => checked += 1,
            }
        }
    }
    Ok(format!("{checked} defended designs rebuild the original"))
}

// 6 ------------------------------------------------------------------

/// Exact two-sided p-value of `hits` under a sum of independent binomials.
fn poisson_binomial_p(groups: &[(usize, f64)], hits: usize) -> f64 {
    let mut pmf = vec![1.0f64];
    for &(n, p) in groups {
        for _ in 0..n {
            let mut next = vec![0.0; pmf.len() + 1];
            for (k, &v) in pmf.iter().enumerate() {
                next[k] += v * (1.0 - p);
                next[k + 1] += v * p;
            }
            pmf = next;
        }
    }
    let obs = pmf.get(hits).copied().unwrap_or(0.0);
    pmf.iter().filter(|&&v| v <= obs * (1.0 + 1e-9)).sum()
}

fn attack_calibration() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["c432", "c880", "c1355"] {
        let n = corpus::load(name).unwrap();
        let (mut hits, mut groups) = (0, Vec::new());
        let (mut prox2, mut base2) = (0.0, 0.0);
        for seed in 0..30u64 {
            let cfg = base_config(seed);
            let d = flow::defend(&cfg, name, n.clone()).map_err(|e| e.to_string())?;
            let truth = d.plan.secret_mapping();
            let (r, _) = proximity_attack(&d.fab, &ProximityParams::default()).map_err(|e| e.to_string())?;
            hits += r.guess.iter().zip(&truth).filter(|(g, t)| g == t).count();
            for dir in [Direction::BottomToTop, Direction::TopToBottom] {
                let k = d.plan.count(dir);
                if k > 0 {
                    groups.push((k, 1.0 / k as f64));
                }
            }
            let cfg2 = RunConfig { randomization: Randomization::Radius(2), ..cfg };
            let d2 = flow::defend(&cfg2, name, n.clone()).map_err(|e| e.to_string())?;
            let truth2 = d2.plan.secret_mapping();
            let (r2, _) = proximity_attack(&d2.fab, &ProximityParams::default()).map_err(|e| e.to_string())?;
            let base = random_guess_baseline(&d2.fab, stage_seed(seed, "attack"));
            let rate = |g: &[usize]| g.iter().zip(&truth2).filter(|(a, b)| a == b).count() as f64 / truth2.len().max(1) as f64;
            prox2 += rate(&r2.guess);
            base2 += rate(&base);
        }
        let expected: f64 = groups.iter().map(|(k, p)| *k as f64 * p).sum();
        let p = poisson_binomial_p(&groups, hits);
        let lift = prox2 / base2.max(1e-12);
        ok &= p >= 0.01 && lift >= 2.0;
        parts.push(format!("{name}: {hits} hits vs {expected:.1} expected (p {p:.3}), radius-2 lift {lift:.1}x"));
    }
    let r = within(Duration::from_secs(300), start, parts.join("; "));
    match r {
        Ok(s) if ok => Ok(s),
        Ok(s) | Err(s) => Err(s),
    }
}

// 7 ------------------------------------------------------------------

/// Spearman rank correlation with average ranks for ties.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (m(&rx), m(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn sat_attack_scaling() -> Outcome {
    let n = corpus::load("c432").unwrap();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut slowest: f64 = 0.0;
    for seed in 0..10u64 {
        let mut cfg = base_config(seed);
        cfg.switchbox = true;
        cfg.attack = AttackKind::Sat;
        cfg.hd_patterns = 1000;
        let d = flow::defend(&cfg, "c432", n.clone()).map_err(|e| e.to_string())?;
        let run = run_dir(&d);
        for s in 1..=6usize {
            let out = flow::attack(&RunConfig { sat_boxes: s, ..cfg.clone() }, &run).map_err(|e| format!("seed {seed} s {s}: {e}"))?;
            let rec = &out.record;
            if s <= 3 {
                if rec.status != "solved" || rec.verified != Some(true) || out.wall_time_ms > 60_000.0 {
                    return Err(format!("seed {seed} s {s}: {} in {:.0} ms", rec.status, out.wall_time_ms));
                }
                slowest = slowest.max(out.wall_time_ms);
            }
            xs.push(rec.boxes.len() as f64);
            ys.push(rec.iterations.unwrap_or(0) as f64);
        }
    }
    let rho = spearman(&xs, &ys);
    let mean = |s: f64| {
        let v: Vec<f64> = xs.iter().zip(&ys).filter(|(x, _)| **x == s).map(|(_, y)| *y).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let shape = (1..=6).map(|s| format!("{:.1}", mean(s as f64))).join("/");
    check(
        rho > 0.0,
        format!("1-3 boxes solved and verified, slowest {slowest:.0} ms; mean DIPs by s {shape}; Spearman rho {rho:.3}"),
    )
}

// 8 ------------------------------------------------------------------

fn partition_relation() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in corpus::iscas85_names() {
        let n = corpus::load(name).unwrap();
        let mean = |f: &dyn Fn(u64) -> usize| (0..10u64).map(|s| f(stage_seed(s, "partition")) as f64).sum::<f64>() / 10.0;
        let t = mean(&|s| cut_set(&n, &partition_timing_aware(&n, None, DEFAULT_BALANCE, s).unwrap()).size());
        let r = mean(&|s| cut_set(&n, &partition_random(&n, 0.5, s).unwrap()).size());
        ok &= t < r;
        parts.push(format!("{name} {t:.1}<{r:.1}"));
    }
    check(ok, parts.join(", "))
}

// 9 ------------------------------------------------------------------

fn synthesis_monotonicity() -> Outcome {
    let original = synthetic::rewrite_friendly(0);
    let mut cfg = base_config(0);
    cfg.ksec_techmap = false;
    cfg.ksec_iterations = 5;
    let k = flow::ksec(&cfg, "rewrite_friendly", original.clone()).map_err(|e| e.to_string())?;
    let s = k.report.ksec.as_ref().unwrap();
    for w in s.census[1..].windows(2) {
        for (t, c) in &w[1].counts {
            if *c < w[0].counts[t] {
                return Err(format!("template {t} fell from {} to {c} at iteration {}", w[0].counts[t], w[1].iteration));
            }
        }
    }
    let (c1, c5) = (s.census[1].coverage, s.census[5].coverage);
    let eq = check_equivalence(&original, &k.netlist, EquivMode::Sat { conflict_budget: None }).map_err(|e| e.to_string())?;
    check(
        c5 > c1 && eq.is_equivalent(),
        format!("coverage {:.3} -> {:.3} (iterations 1 -> 5), counts nondecreasing, final design equivalent", c1, c5),
    )
}

// 10 -----------------------------------------------------------------

fn hd_sanity() -> Outcome {
    let c432 = corpus::load("c432").unwrap();
    let same = hd(&c432, &c432, 100_000, 1).map_err(|e| e.to_string())?;
    let a = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nt = AND(a, b)\ny = XOR(t, c)").unwrap();
    let b = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nt = AND(a, b)\ny = XNOR(t, c)").unwrap();
    let inverted = hd(&a, &b, 100_000, 1).map_err(|e| e.to_string())?;
    let mut total = 0.0;
    for seed in 0..10u64 {
        let mut cfg = base_config(seed);
        cfg.attack = AttackKind::Random;
        let d = flow::defend(&cfg, "c432", c432.clone()).map_err(|e| e.to_string())?;
        let out = flow::attack(&cfg, &run_dir(&d)).map_err(|e| e.to_string())?;
        total += out.record.hd.unwrap();
    }
    let mean = total / 10.0;
    check(
        same == 0.0 && inverted == 1.0 && (0.30..=0.50).contains(&mean),
        format!("hd(a,a) {same}, inverted output {inverted}, c432 random reassembly mean {mean:.3}"),
    )
}

// 11 -----------------------------------------------------------------

fn collect_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != flow::TIMINGS_FILE {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let root = tmp.path().join(run);
        let dir = root.join("c432").display().to_string();
        let agg = root.join("agg").display().to_string();
        let steps: Vec<Vec<&str>> = vec![
            vec!["f2fsec", "defend", "--set", "seed=9", "--set", "f2f.switchbox=true", "--out", &dir, "c432"],
            vec!["f2fsec", "attack", "--kind", "proximity", &dir],
            vec!["f2fsec", "attack", "--kind", "random", &dir],
            vec!["f2fsec", "attack", "--kind", "sat", "--set", "attack.sat_boxes=2", &dir],
            vec!["f2fsec", "ksec", "--set", "seed=9", "--out", &dir, "c432"],
            vec!["f2fsec", "report", "--out", &agg, &dir],
        ];
        for s in steps {
            let code = f2fsec_cli::run(s.clone());
            if code != 0 {
                return Err(format!("`{}` exited {code}", s.join(" ")));
            }
        }
        trees.push(collect_files(&root));
    }
    let differing: Vec<&String> = trees[0].keys().filter(|k| trees[1].get(*k) != trees[0].get(*k)).collect();
    check(
        differing.is_empty() && trees[0].len() == trees[1].len(),
        format!("{} files compared, {} differ {:?}", trees[0].len(), differing.len(), differing),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("search-space formula", search_space_formula),
        ("k-security probability", symmetric_probability),
        ("exact level vs bijection oracle", exact_matches_oracle),
        ("gate-type bound on c432", type_bound_c432),
        ("defense soundness", defense_soundness),
        ("attack calibration", attack_calibration),
        ("SAT attack", sat_attack_scaling),
        ("partitioning relation", partition_relation),
        ("synthesis monotonicity", synthesis_monotonicity),
        ("HD sanity", hd_sanity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
