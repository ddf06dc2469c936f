//! Run reports and their aggregation into CSV/JSON tables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use f2fsec::ksec::{IterationCensus, KSecurityReport, TierLevel};
use f2fsec::metrics::HistogramBin;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result, Stage};

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignStats {
    pub gates: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub dffs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefendSummary {
    pub cut_size: usize,
    pub d_bot: usize,
    pub d_top: usize,
    pub tier_gates: [usize; 2],
    pub hpwl: u64,
    pub randomization: String,
    pub switchboxes: usize,
    pub unboxed: usize,
    /// log10 of the plain search space d_bot!·d_top!.
    pub search_space_log10: f64,
    /// log10 of the switchbox search space, when the port counts allow it.
    pub switchbox_search_space_log10: Option<f64>,
    pub distance: DistanceStats,
    /// Outcome of re-checking the secret reassembly against the input.
    pub soundness: String,
    pub partition_notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub attack: String,
    pub adversary: String,
    /// `done` for the heuristic attacks, `solved` or `timeout` for SAT.
    pub status: String,
    pub seed: u64,
    pub ports: usize,
    pub ccr: Option<f64>,
    pub pnr: Option<f64>,
    pub hd: Option<f64>,
    pub hd_patterns: usize,
    pub acyclic: Option<bool>,
    pub repaired: Option<usize>,
    pub relaxed: Option<usize>,
    pub boxes: Vec<usize>,
    /// CCR over the ports of the attacked switchboxes only.
    pub box_ccr: Option<f64>,
    pub iterations: Option<usize>,
    pub conflicts: Option<u64>,
    pub verified: Option<bool>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsecSummary {
    pub techmapped: bool,
    pub gates: usize,
    pub templates: Vec<String>,
    pub fraction: f64,
    pub patterns: usize,
    pub vulnerable: usize,
    /// Entry 0 is the census before rewriting.
    pub census: Vec<IterationCensus>,
    pub coverage: f64,
    pub instances: usize,
    pub lifted: usize,
    pub boundary_lifted: usize,
    pub greedy_lifted: usize,
    pub target_reached: Option<bool>,
    /// Smallest cell-type population, an upper bound on any k.
    pub type_bound: Option<(String, usize)>,
    pub level: KSecurityReport,
    pub k: usize,
    pub tier: TierLevel,
    pub ht_success: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub benchmark: String,
    pub strategy: String,
    pub seed: u64,
    pub design: DesignStats,
    pub config: BTreeMap<String, String>,
    /// Seed used by each stage, derived from `seed`.
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defend: Option<DefendSummary>,
    #[serde(default)]
    pub attacks: BTreeMap<String, AttackRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ksec: Option<KsecSummary>,
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

impl RunReport {
    pub fn load(dir: &Path) -> Result<RunReport> {
        let path = dir.join(REPORT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::data(Stage::Report, format!("{}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::data(Stage::Report, format!("{}: {e}", path.display())))?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(SCHEMA_VERSION as u64) {
            return Err(CliError::data(
                Stage::Report,
                format!(
                    "{}: schema mismatch (found {}, expected {SCHEMA_VERSION})",
                    path.display(),
                    version.map_or("none".to_string(), |v| v.to_string())
                ),
            ));
        }
        serde_json::from_value(value).map_err(|e| CliError::data(Stage::Report, format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write(&dir.join(REPORT_FILE), &to_json(self))
    }

    /// Flat numeric view used for aggregation.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        if let Some(d) = &self.defend {
            m.insert("cut_size".into(), d.cut_size as f64);
            m.insert("d_bot".into(), d.d_bot as f64);
            m.insert("d_top".into(), d.d_top as f64);
            m.insert("hpwl".into(), d.hpwl as f64);
            m.insert("search_space_log10".into(), d.search_space_log10);
            m.insert("distance_mean".into(), d.distance.mean);
            m.insert("distance_median".into(), d.distance.median);
        }
        for (name, a) in &self.attacks {
            let mut put = |k: &str, v: Option<f64>| {
                if let Some(v) = v {
                    m.insert(format!("{name}.{k}"), v);
                }
            };
            put("ccr", a.ccr);
            put("pnr", a.pnr);
            put("hd", a.hd);
            put("box_ccr", a.box_ccr);
            put("iterations", a.iterations.map(|x| x as f64));
            if a.attack == "sat" {
                put("timeout", Some((a.status == "timeout") as u8 as f64));
            }
        }
        if let Some(k) = &self.ksec {
            m.insert("ksec.coverage".into(), k.coverage);
            if let Some(first) = k.census.get(1) {
                m.insert("ksec.coverage_iter1".into(), first.coverage);
            }
            m.insert("ksec.instances".into(), k.instances as f64);
            m.insert("ksec.k".into(), k.k as f64);
            m.insert("ksec.k_3d".into(), k.tier.k_3d as f64);
            m.insert("ksec.ht_success".into(), k.ht_success);
        }
        m
    }
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::data(Stage::Io, format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::data(Stage::Io, format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> MetricSummary {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        MetricSummary {
            count: n,
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub benchmark: String,
    pub strategy: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MetricSummary>,
}

/// Tables built from a set of run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// One row per (benchmark, strategy, seed).
    pub runs_csv: String,
    /// One row per (benchmark, strategy, metric) with mean/median/min/max.
    pub summary_csv: String,
    pub summary_json: String,
    /// F2F distance histograms, one row per bin per run.
    pub distances_csv: String,
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

pub fn aggregate(reports: &[RunReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(CliError::usage(Stage::Report, "need at least one run"));
    }
    let mut keyed: BTreeMap<(String, String, u64), &RunReport> = BTreeMap::new();
    for r in reports {
        if r.schema_version != SCHEMA_VERSION {
            return Err(CliError::data(Stage::Report, format!("schema mismatch: version {}", r.schema_version)));
        }
        let key = (r.benchmark.clone(), r.strategy.clone(), r.seed);
        if keyed.insert(key.clone(), r).is_some() {
            return Err(CliError::data(
                Stage::Report,
                format!("two runs share benchmark {}, strategy {}, seed {}", key.0, key.1, key.2),
            ));
        }
    }
    let metrics: BTreeMap<_, _> = keyed.iter().map(|(k, r)| (k.clone(), r.metrics())).collect();
    let names: BTreeSet<String> = metrics.values().flat_map(|m| m.keys().cloned()).collect();

    let mut runs = vec![["benchmark", "strategy", "seed"].iter().map(|s| s.to_string()).chain(names.iter().cloned()).collect()];
    for ((b, s, seed), m) in &metrics {
        let mut row = vec![b.clone(), s.clone(), seed.to_string()];
        row.extend(names.iter().map(|k| m.get(k).map(|v| v.to_string()).unwrap_or_default()));
        runs.push(row);
    }

    let mut groups: BTreeMap<(String, String), Vec<(u64, &BTreeMap<String, f64>)>> = BTreeMap::new();
    for ((b, s, seed), m) in &metrics {
        groups.entry((b.clone(), s.clone())).or_default().push((*seed, m));
    }
    let summaries: Vec<GroupSummary> = groups
        .into_iter()
        .map(|((benchmark, strategy), runs)| {
            let metrics = names
                .iter()
                .filter_map(|k| {
                    let v: Vec<f64> = runs.iter().filter_map(|(_, m)| m.get(k).copied()).collect();
                    (!v.is_empty()).then(|| (k.clone(), MetricSummary::of(&v)))
                })
                .collect();
            GroupSummary {
                benchmark,
                strategy,
                seeds: runs.iter().map(|(s, _)| *s).collect(),
                metrics,
            }
        })
        .collect();
    let mut summary = vec![["benchmark", "strategy", "metric", "count", "mean", "median", "min", "max"]
        .iter()
        .map(|s| s.to_string())
        .collect()];
    for g in &summaries {
        for (k, s) in &g.metrics {
            summary.push(vec![
                g.benchmark.clone(),
                g.strategy.clone(),
                k.clone(),
                s.count.to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.min.to_string(),
                s.max.to_string(),
            ]);
        }
    }

    let mut dist = vec![["benchmark", "strategy", "seed", "bin_lo", "bin_hi", "count"]
        .iter()
        .map(|s| s.to_string())
        .collect()];
    for ((b, s, seed), r) in &keyed {
        if let Some(d) = &r.defend {
            for bin in &d.distance.histogram {
                dist.push(vec![
                    b.clone(),
                    s.clone(),
                    seed.to_string(),
                    bin.bin_lo.to_string(),
                    bin.bin_hi.to_string(),
                    bin.count.to_string(),
                ]);
            }
        }
    }

    Ok(Aggregate {
        runs_csv: csv_string(runs),
        summary_csv: csv_string(summary),
        summary_json: to_json(&summaries),
        distances_csv: csv_string(dist),
    })
}
