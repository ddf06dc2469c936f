//! The three pipelines: defend, attack and ksec.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use f2fsec::attack::{
    locked_model, proximity_attack, random_guess_baseline, sat_attack, AttackError, NetlistOracle, ProximityParams,
    SatAttackLimits, SatStatus,
};
use f2fsec::f2f::{
    default_legalize_radius, expose, group_switchboxes, plan_ports, randomize_ports, search_space, Adversary,
    ExposureView, F2FPlan, FormulaTag, SecretPlan,
};
use f2fsec::ksec::{
    coverage, default_templates, ht_success_probability, lift_wires, parse_templates, rewrite_iterate, security_level,
    tier_level, type_count_bound, vulnerability_score, KMode, KsecError, LevelParams, LiftParams, StructureTemplate,
    EXACT_GUARD,
};
use f2fsec::layout::{hpwl, place, GridSpec};
use f2fsec::metrics::{ccr, f2f_distance_distribution, score};
use f2fsec::netlist::techmap::map_lib3;
use f2fsec::netlist::{check_equivalence, parse_bench_named, to_bench, EquivMode, Netlist, Verdict};
use f2fsec::partition::{
    cut_set, partition_hierarchical, partition_ht_aware, partition_max_cut, partition_random, partition_timing_aware,
    Strategy, Tier, TierAssignment,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{randomization_tag, stage_seed, AttackKind, ConfigText, ModeChoice, RunConfig};
use crate::error::{CliError, Result, Stage, StageExt};
use crate::report::{
    to_json, write, AttackRecord, DefendSummary, DesignStats, DistanceStats, KsecSummary, RunReport, SCHEMA_VERSION,
};

pub const CONFIG_FILE: &str = "config.txt";
pub const TIMINGS_FILE: &str = "timings.json";
pub const PUBLIC_DIR: &str = "public";
pub const SECRET_DIR: &str = "secret";

/// Wall-clock time per stage in milliseconds. Kept out of the report so
/// that reports are reproducible byte for byte.
pub type Timings = BTreeMap<String, f64>;

fn timed<T>(t: &mut Timings, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    t.insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
    out
}

fn design_stats(n: &Netlist) -> DesignStats {
    DesignStats {
        gates: n.num_gates(),
        inputs: n.primary_inputs().len(),
        outputs: n.primary_outputs().len(),
        dffs: n.dffs().count(),
    }
}

fn new_report(cfg: &RunConfig, label: &str, strategy: &str, n: &Netlist) -> RunReport {
    RunReport {
        schema_version: SCHEMA_VERSION,
        benchmark: label.to_string(),
        strategy: strategy.to_string(),
        seed: cfg.seed,
        design: design_stats(n),
        config: cfg.echo(),
        seeds: BTreeMap::new(),
        defend: None,
        attacks: BTreeMap::new(),
        ksec: None,
    }
}

fn seed_of(report: &mut RunReport, stage: &str) -> u64 {
    let s = stage_seed(report.seed, stage);
    report.seeds.insert(stage.to_string(), s);
    s
}

fn log10_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).log10()).sum()
}

/// Everything `defend` produces.
#[derive(Debug, Clone)]
pub struct Defended {
    pub netlist: Netlist,
    pub assignment: TierAssignment,
    pub plan: F2FPlan,
    pub fab: ExposureView,
    pub end_user: ExposureView,
    pub report: RunReport,
    pub timings: Timings,
}

/// Equivalence of `recovered` to `original`: exhaustive up to 20 frame
/// inputs, else `patterns` random patterns.
pub fn soundness_check(original: &Netlist, recovered: &Netlist, patterns: usize, seed: u64) -> Result<String> {
    let exhaustive = original.frame_inputs().len() <= 20;
    let mode = if exhaustive {
        EquivMode::Exhaustive
    } else {
        EquivMode::Random { patterns, seed }
    };
    match check_equivalence(original, recovered, mode).stage(Stage::Verify)? {
        Verdict::Counterexample(c) => Err(CliError::internal(
            Stage::Verify,
            format!("secret reassembly differs from the input at output {}", c.output),
        )),
        Verdict::Equivalent => Ok("equivalent (exhaustive)".into()),
        Verdict::Unknown => Ok(format!("no mismatch in {patterns} random patterns")),
    }
}

/// Partition, place, plan ports, randomize, optionally group switchboxes,
/// and re-check that the secret mapping rebuilds the input.
pub fn defend(cfg: &RunConfig, label: &str, n: Netlist) -> Result<Defended> {
    let mut t = Timings::new();
    let mut report = new_report(cfg, label, cfg.strategy.tag(), &n);
    let seed = seed_of(&mut report, "partition");
    let assignment = timed(&mut t, "partition", || match cfg.strategy {
        Strategy::Random => partition_random(&n, cfg.move_fraction, seed),
        Strategy::MaxCut => partition_max_cut(&n, seed),
        Strategy::TimingAware => partition_timing_aware(&n, cfg.slack_threshold, cfg.balance_eps, seed),
        Strategy::Hierarchical => partition_hierarchical(&n, cfg.balance_eps, seed),
        Strategy::HtAware => {
            let inst = f2fsec::ksec::mine_structures(&n, &default_templates());
            partition_ht_aware(&n, &inst.gate_sets(), seed)
        }
    })
    .stage(Stage::Partition)?;

    let spec = GridSpec::for_gates(n.num_gates(), cfg.grid_utilization, cfg.grid_track_pitch);
    let seed = seed_of(&mut report, "place");
    let placement = timed(&mut t, "place", || place(&n, &assignment, spec, seed)).stage(Stage::Place)?;

    let radius = cfg.legalize_radius.unwrap_or_else(|| default_legalize_radius(&spec));
    let rseed = seed_of(&mut report, "randomize");
    let bseed = seed_of(&mut report, "switchbox");
    let plan = timed(&mut t, "plan", || -> Result<F2FPlan> {
        let p = plan_ports(&n, &assignment, &placement, radius).stage(Stage::Plan)?;
        let p = randomize_ports(p, cfg.randomization, rseed).stage(Stage::Plan)?;
        Ok(if cfg.switchbox { group_switchboxes(p, bseed) } else { p })
    })?;

    let fab = expose(&n, &plan, Adversary::Fab);
    let end_user = expose(&n, &plan, Adversary::EndUser);
    let vseed = seed_of(&mut report, "verify");
    let soundness = timed(&mut t, "verify", || -> Result<String> {
        let rebuilt = fab.reassemble(&plan.secret_mapping()).stage(Stage::Verify)?;
        soundness_check(&n, &rebuilt, cfg.verify_patterns, vseed)
    })?;

    let dist = plan.normalized_distances();
    let hist = f2f_distance_distribution(&plan, cfg.histogram_bins).stage(Stage::Score)?;
    let distance = if dist.is_empty() {
        DistanceStats { mean: 0.0, median: 0.0, min: 0.0, max: 0.0, histogram: hist.bins }
    } else {
        let s = crate::report::MetricSummary::of(&dist);
        DistanceStats { mean: s.mean, median: s.median, min: s.min, max: s.max, histogram: hist.bins }
    };
    let (d_bot, d_top) = (plan.d_bot(), plan.d_top());
    let sb_log10 = (cfg.switchbox && search_space(d_bot, d_top, FormulaTag::Switchbox).is_ok())
        .then(|| 24f64.log10() + log10_factorial(d_bot / 4) + log10_factorial(d_top / 4));
    report.defend = Some(DefendSummary {
        cut_size: cut_set(&n, &assignment).size(),
        d_bot,
        d_top,
        tier_gates: [assignment.count(Tier::Bottom), assignment.count(Tier::Top)],
        hpwl: hpwl(&n, &placement),
        randomization: randomization_tag(cfg.randomization),
        switchboxes: plan.switchboxes.len(),
        unboxed: plan.unboxed(),
        search_space_log10: log10_factorial(d_bot) + log10_factorial(d_top),
        switchbox_search_space_log10: sb_log10,
        distance,
        soundness,
        partition_notes: assignment.notes.clone(),
    });
    Ok(Defended { netlist: n, assignment, plan, fab, end_user, report, timings: t })
}

/// Writes the artifacts of a defended design. Views and the public plan
/// go under `public/`; the secret mapping, full plan and original netlist
/// under `secret/`.
pub fn write_defended(dir: &Path, cfg: &RunConfig, d: &Defended) -> Result<()> {
    let public = dir.join(PUBLIC_DIR);
    let secret = dir.join(SECRET_DIR);
    write(&dir.join(CONFIG_FILE), &cfg.to_text())?;
    d.report.save(dir)?;
    write(&dir.join(TIMINGS_FILE), &to_json(&d.timings))?;
    write(&public.join("view_fab.json"), &to_json(&d.fab))?;
    write(&public.join("view_end_user.json"), &to_json(&d.end_user))?;
    write(&public.join("plan_public.json"), &to_json(&d.plan.public()))?;
    write(&public.join("assignment.csv"), &d.assignment.to_csv(&d.netlist))?;
    write(&public.join("placement.csv"), &d.plan.placement.to_csv(&d.netlist))?;
    let hist = f2f_distance_distribution(&d.plan, cfg.histogram_bins).stage(Stage::Score)?;
    write(&public.join("distances.csv"), &hist.to_csv())?;
    write(&secret.join("plan.json"), &to_json(&d.plan.secret()))?;
    write(&secret.join("f2f_plan.json"), &to_json(&d.plan))?;
    write(&secret.join("design.bench"), &to_bench(&d.netlist))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, stage: Stage) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(stage, format!("{}: {e}", path.display())))
}

/// A defended run directory, read back.
pub struct RunDir {
    pub config: ConfigText,
    pub report: RunReport,
    pub netlist: Netlist,
    pub secret: SecretPlan,
    pub fab: ExposureView,
    pub end_user: ExposureView,
}

impl RunDir {
    pub fn load(dir: &Path) -> Result<RunDir> {
        let config = ConfigText::load(&dir.join(CONFIG_FILE))
            .map_err(|e| CliError::data(Stage::Load, format!("{}: {}", dir.display(), e.message)))?;
        let report = RunReport::load(dir)?;
        let bench = dir.join(SECRET_DIR).join("design.bench");
        let text = std::fs::read_to_string(&bench).map_err(|e| CliError::data(Stage::Load, format!("{}: {e}", bench.display())))?;
        let netlist = parse_bench_named(&text, &report.benchmark).stage(Stage::Load)?;
        Ok(RunDir {
            config,
            report,
            netlist,
            secret: read_json(&dir.join(SECRET_DIR).join("plan.json"), Stage::Load)?,
            fab: read_json(&dir.join(PUBLIC_DIR).join("view_fab.json"), Stage::Load)?,
            end_user: read_json(&dir.join(PUBLIC_DIR).join("view_end_user.json"), Stage::Load)?,
        })
    }
}

fn empty_record(kind: AttackKind, adversary: Adversary, seed: u64, ports: usize, hd_patterns: usize) -> AttackRecord {
    AttackRecord {
        attack: kind.tag().to_string(),
        adversary: match adversary {
            Adversary::Fab => "fab".into(),
            Adversary::EndUser => "end_user".into(),
        },
        status: "done".into(),
        seed,
        ports,
        ccr: None,
        pnr: None,
        hd: None,
        hd_patterns,
        acyclic: None,
        repaired: None,
        relaxed: None,
        boxes: Vec::new(),
        box_ccr: None,
        iterations: None,
        conflicts: None,
        verified: None,
        notes: Vec::new(),
    }
}

/// Result of one attack: the record added to the report and the guessed
/// mapping (driver port → sink port), if any.
pub struct AttackRun {
    pub record: AttackRecord,
    pub guess: Option<Vec<usize>>,
    pub wall_time_ms: f64,
}

/// Runs the configured attack against a defended design and scores it
/// against the secret mapping. A SAT timeout is a result, not an error.
pub fn attack(cfg: &RunConfig, run: &RunDir) -> Result<AttackRun> {
    let start = Instant::now();
    let aseed = stage_seed(cfg.seed, "attack");
    let hseed = stage_seed(cfg.seed, "hd");
    let truth = &run.secret.rdl_mapping;
    let n = &run.netlist;
    let scored = |view: &ExposureView, guess: &[usize], rec: &mut AttackRecord| -> Result<()> {
        let recovered = view.reassemble(guess).stage(Stage::Score)?;
        let s = score(n, &recovered, guess, truth, cfg.hd_patterns, hseed).stage(Stage::Score)?;
        rec.ccr = Some(s.ccr);
        rec.pnr = Some(s.pnr);
        rec.hd = Some(s.hd);
        rec.acyclic = Some(s.acyclic);
        Ok(())
    };
    let ports = truth.len();
    match cfg.attack {
        AttackKind::Proximity | AttackKind::Random => {
            let view = &run.fab;
            let mut rec = empty_record(cfg.attack, Adversary::Fab, aseed, ports, cfg.hd_patterns);
            let guess = if cfg.attack == AttackKind::Proximity {
                let params = ProximityParams {
                    seed: aseed,
                    orientation: cfg.orientation,
                    loop_pruning: cfg.loop_pruning,
                    ..ProximityParams::default()
                };
                let (r, _) = proximity_attack(view, &params).stage(Stage::Attack)?;
                rec.repaired = Some(r.repaired);
                rec.relaxed = Some(r.relaxed.len());
                r.guess
            } else {
                random_guess_baseline(view, aseed)
            };
            scored(view, &guess, &mut rec)?;
            Ok(AttackRun { record: rec, guess: Some(guess), wall_time_ms: start.elapsed().as_secs_f64() * 1e3 })
        }
        AttackKind::Sat => {
            let view = &run.end_user;
            let mut rec = empty_record(cfg.attack, Adversary::EndUser, aseed, ports, cfg.hd_patterns);
            let members = view.switchboxes.as_deref().unwrap_or_default();
            if members.is_empty() {
                return Err(CliError::data(Stage::Attack, "the plan has no switchboxes (defend with f2f.switchbox=true)"));
            }
            let boxes = pick_boxes(view, truth, cfg.sat_boxes, aseed, &mut rec.notes)?;
            let limits = SatAttackLimits {
                wall_time: Duration::from_millis(cfg.time_limit_ms),
                conflicts_per_call: cfg.conflicts,
            };
            let mut oracle = NetlistOracle::new(n.clone());
            let out = sat_attack(view, &boxes, truth, &mut oracle, &limits).stage(Stage::Attack)?;
            rec.boxes = boxes.clone();
            rec.iterations = Some(out.iterations);
            rec.conflicts = Some(out.conflicts);
            match out.status {
                SatStatus::Timeout => rec.status = "timeout".into(),
                SatStatus::Solved => {
                    rec.status = "solved".into();
                    let drivers: Vec<usize> = boxes.iter().flat_map(|&b| members[b].drivers).collect();
                    let g: Vec<usize> = drivers.iter().map(|&i| out.mapping[i]).collect();
                    let t: Vec<usize> = drivers.iter().map(|&i| truth[i]).collect();
                    rec.box_ccr = Some(ccr(&g, &t).stage(Stage::Score)?);
                    let recovered = view.reassemble(&out.mapping).stage(Stage::Score)?;
                    let verdict = if n.frame_inputs().len() <= 20 {
                        check_equivalence(n, &recovered, EquivMode::Exhaustive)
                    } else {
                        check_equivalence(n, &recovered, EquivMode::Sat { conflict_budget: None })
                    }
                    .stage(Stage::Score)?;
                    if !verdict.is_equivalent() {
                        return Err(CliError::internal(Stage::Attack, "SAT attack returned a key that is not equivalent"));
                    }
                    rec.verified = Some(true);
                    scored(view, &out.mapping, &mut rec)?;
                }
            }
            let guess = (out.status == SatStatus::Solved).then_some(out.mapping);
            Ok(AttackRun { record: rec, guess, wall_time_ms: start.elapsed().as_secs_f64() * 1e3 })
        }
    }
}

/// Up to `want` switchboxes in a seeded order, skipping any whose keyed
/// model would be cyclic.
fn pick_boxes(view: &ExposureView, fixed: &[usize], want: usize, seed: u64, notes: &mut Vec<String>) -> Result<Vec<usize>> {
    let count = view.switchboxes.as_ref().map_or(0, |b| b.len());
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = Vec::new();
    for b in order {
        if chosen.len() == want {
            break;
        }
        chosen.push(b);
        match locked_model(view, &chosen, fixed) {
            Ok(_) => {}
            Err(AttackError::CyclicModel) => {
                chosen.pop();
                notes.push(format!("switchbox {b} skipped: keyed model would be cyclic"));
            }
            Err(e) => return Err(CliError::data(Stage::Attack, e)),
        }
    }
    if chosen.len() < want {
        notes.push(format!("only {} of {want} switchboxes usable", chosen.len()));
    }
    Ok(chosen)
}

/// Runs an attack on a run directory and records it in the report.
pub fn attack_dir(dir: &Path, overrides: &ConfigText) -> Result<AttackRun> {
    let run = RunDir::load(dir)?;
    let mut text = run.config.clone();
    text.merge(overrides);
    let cfg = RunConfig::from_text(&text)?;
    let out = attack(&cfg, &run)?;
    let mut report = run.report;
    report.attacks.insert(out.record.attack.clone(), out.record.clone());
    report.seeds.insert("attack".into(), stage_seed(cfg.seed, "attack"));
    report.seeds.insert("hd".into(), stage_seed(cfg.seed, "hd"));
    report.save(dir)?;
    if let Some(g) = &out.guess {
        write(&dir.join("attack").join(format!("{}_guess.json", out.record.attack)), &to_json(g))?;
    }
    let mut timings: Timings = read_json(&dir.join(TIMINGS_FILE), Stage::Load).unwrap_or_default();
    timings.insert(format!("attack.{}", out.record.attack), out.wall_time_ms);
    write(&dir.join(TIMINGS_FILE), &to_json(&timings))?;
    Ok(out)
}

pub fn load_templates(cfg: &RunConfig) -> Result<Vec<StructureTemplate>> {
    match &cfg.ksec_templates {
        None => Ok(default_templates()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::data(Stage::Ksec, format!("{}: {e}", p.display())))?;
            parse_templates(&text).map_err(|e| CliError::data(Stage::Ksec, format!("{}: {e}", p.display())))
        }
    }
}

fn ksec_err(e: KsecError) -> CliError {
    match e {
        KsecError::EquivalenceViolation { .. } | KsecError::BrokenInstances(_) => CliError::internal(Stage::Ksec, e),
        e => CliError::data(Stage::Ksec, e),
    }
}

pub struct KsecRun {
    pub report: RunReport,
    pub netlist: Netlist,
    pub timings: Timings,
}

/// Vulnerability analysis, mining, rewriting, wire lifting, security
/// level, HT-aware partitioning and the Monte Carlo adversary.
pub fn ksec(cfg: &RunConfig, label: &str, n: Netlist) -> Result<KsecRun> {
    let mut t = Timings::new();
    let mut report = new_report(cfg, label, Strategy::HtAware.tag(), &n);
    let n0 = if cfg.ksec_techmap { map_lib3(&n).stage(Stage::Ksec)? } else { n };
    let templates = load_templates(cfg)?;
    let vseed = seed_of(&mut report, "vulnerability");
    let vuln = timed(&mut t, "vulnerability", || vulnerability_score(&n0, cfg.ksec_patterns, cfg.ksec_fraction, vseed))
        .map_err(ksec_err)?;
    let out = timed(&mut t, "rewrite", || rewrite_iterate(&n0, &templates, &vuln.selected, cfg.ksec_iterations))
        .map_err(ksec_err)?;
    let n1 = out.netlist;
    let selected = out.vulnerable;
    if selected.is_empty() {
        return Err(CliError::data(Stage::Ksec, "no gate selected as vulnerable (raise ksec.fraction)"));
    }
    let mode = match cfg.ksec_mode {
        ModeChoice::Fixed(m) => m,
        ModeChoice::Auto if n1.num_gates() <= EXACT_GUARD => KMode::Exact,
        ModeChoice::Auto => KMode::Refine,
    };
    let level = LevelParams { mode, ..LevelParams::default() };
    let lift = LiftParams { budget: cfg.ksec_lift_budget, target_k: cfg.ksec_target_k, level };
    let mut notes = Vec::new();
    let exposed = timed(&mut t, "lift", || match lift_wires(&n1, &out.instances, &selected, &lift) {
        Err(KsecError::SearchBudget) => {
            notes.push("exact search budget exhausted while lifting; greedy objective used refine counts".to_string());
            let level = LevelParams { mode: KMode::Refine, ..level };
            lift_wires(&n1, &out.instances, &selected, &LiftParams { level, ..lift })
        }
        r => r,
    })
    .map_err(ksec_err)?;
    let mut sec = timed(&mut t, "level", || security_level(&n1, &exposed, &selected, &level)).map_err(ksec_err)?;
    sec.notes.extend(notes);
    let pseed = seed_of(&mut report, "ht_partition");
    let assignment = timed(&mut t, "ht_partition", || partition_ht_aware(&n1, &out.instances.gate_sets(), pseed))
        .stage(Stage::Partition)?;
    let tier = tier_level(&out.instances, &assignment);
    let cov = coverage(&n1, &out.instances);
    sec.coverage = Some(cov);
    sec.census = Some(tier.clone());
    let tseed = seed_of(&mut report, "ht_trials");
    let p = ht_success_probability(&sec, cfg.ksec_trials, tseed);
    report.ksec = Some(KsecSummary {
        techmapped: cfg.ksec_techmap,
        gates: n1.num_gates(),
        templates: templates.iter().map(|t| t.id.clone()).collect(),
        fraction: cfg.ksec_fraction,
        patterns: vuln.patterns,
        vulnerable: selected.len(),
        census: out.census,
        coverage: cov,
        instances: out.instances.len(),
        lifted: exposed.lifted.len(),
        boundary_lifted: exposed.boundary_lifted,
        greedy_lifted: exposed.greedy.len(),
        target_reached: exposed.target_reached,
        type_bound: type_count_bound(&n1).map(|(c, k)| (c.lib_name(), k)),
        k: sec.k(),
        level: sec,
        tier,
        ht_success: p,
        trials: cfg.ksec_trials,
    });
    Ok(KsecRun { report, netlist: n1, timings: t })
}

/// Writes a ksec run: merged into an existing report of the same design
/// and seed, or a fresh one.
pub fn write_ksec(dir: &Path, cfg: &RunConfig, k: &KsecRun) -> Result<()> {
    let report = match RunReport::load(dir) {
        Ok(mut old) if old.benchmark == k.report.benchmark && old.seed == k.report.seed => {
            old.ksec = k.report.ksec.clone();
            for (s, v) in &k.report.seeds {
                old.seeds.insert(s.clone(), *v);
            }
            old
        }
        Ok(old) => {
            return Err(CliError::data(
                Stage::Report,
                format!("{} already holds a run of {} (seed {})", dir.display(), old.benchmark, old.seed),
            ))
        }
        Err(_) => {
            write(&dir.join(CONFIG_FILE), &cfg.to_text())?;
            k.report.clone()
        }
    };
    report.save(dir)?;
    write(&dir.join("ksec").join("design.bench"), &to_bench(&k.netlist))?;
    let mut timings: Timings = read_json(&dir.join(TIMINGS_FILE), Stage::Load).unwrap_or_default();
    for (s, v) in &k.timings {
        timings.insert(format!("ksec.{s}"), *v);
    }
    write(&dir.join(TIMINGS_FILE), &to_json(&timings))
}
