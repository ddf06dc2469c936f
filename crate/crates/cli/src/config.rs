//! Flat `key=value` run configuration with dotted sections.
//!
//! ```text
//! # comment
//! seed=7
//! partition.strategy=timing_aware
//! f2f.randomization=radius:2
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use f2fsec::f2f::Randomization;
use f2fsec::ksec::KMode;
use f2fsec::partition::Strategy;

use crate::error::{CliError, Result, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Proximity,
    Random,
    Sat,
}

impl AttackKind {
    pub fn tag(self) -> &'static str {
        match self {
            AttackKind::Proximity => "proximity",
            AttackKind::Random => "random",
            AttackKind::Sat => "sat",
        }
    }

    pub fn from_tag(s: &str) -> Option<AttackKind> {
        [AttackKind::Proximity, AttackKind::Random, AttackKind::Sat]
            .into_iter()
            .find(|k| k.tag() == s)
    }
}

/// `auto` picks exact below the size guard, refine above.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    Auto,
    Fixed(KMode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub grid_utilization: f64,
    pub grid_track_pitch: u32,
    pub legalize_radius: Option<u32>,
    pub strategy: Strategy,
    pub move_fraction: f64,
    pub balance_eps: f64,
    pub slack_threshold: Option<u32>,
    pub randomization: Randomization,
    pub switchbox: bool,
    pub verify_patterns: usize,
    pub attack: AttackKind,
    pub sat_boxes: usize,
    pub time_limit_ms: u64,
    pub conflicts: Option<u64>,
    pub orientation: bool,
    pub loop_pruning: bool,
    pub hd_patterns: usize,
    pub histogram_bins: usize,
    pub ksec_fraction: f64,
    pub ksec_patterns: usize,
    pub ksec_iterations: usize,
    pub ksec_target_k: Option<usize>,
    pub ksec_lift_budget: usize,
    pub ksec_mode: ModeChoice,
    pub ksec_templates: Option<PathBuf>,
    pub ksec_techmap: bool,
    pub ksec_trials: usize,
}

const KEYS: &[(&str, &str)] = &[
    ("seed", ""),
    ("grid.utilization", "0.5"),
    ("grid.track_pitch", "1"),
    ("grid.legalize_radius", "auto"),
    ("partition.strategy", "timing_aware"),
    ("partition.move_fraction", "0.5"),
    ("partition.eps", "0.02"),
    ("partition.slack_threshold", "auto"),
    ("f2f.randomization", "full"),
    ("f2f.switchbox", "false"),
    ("verify.patterns", "100000"),
    ("attack.kind", "proximity"),
    ("attack.sat_boxes", "1"),
    ("attack.time_limit_ms", "60000"),
    ("attack.conflicts", "unlimited"),
    ("attack.orientation", "true"),
    ("attack.loop_pruning", "true"),
    ("metrics.hd_patterns", "100000"),
    ("metrics.histogram_bins", "10"),
    ("ksec.fraction", "0.1"),
    ("ksec.patterns", "4096"),
    ("ksec.iterations", "5"),
    ("ksec.target_k", "none"),
    ("ksec.lift_budget", "0"),
    ("ksec.mode", "auto"),
    ("ksec.templates", "default"),
    ("ksec.techmap", "true"),
    ("ksec.trials", "10000"),
];

/// Raw key/value pairs, later entries overriding earlier ones.
#[derive(Debug, Clone, Default)]
pub struct ConfigText {
    values: BTreeMap<String, String>,
}

impl ConfigText {
    pub fn parse(text: &str) -> Result<ConfigText> {
        let mut c = ConfigText::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            c.set(line).map_err(|e| CliError::usage(Stage::Config, format!("line {}: {}", i + 1, e.message)))?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<ConfigText> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(Stage::Config, format!("{}: {e}", path.display())))?;
        ConfigText::parse(&text)
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::usage(Stage::Config, format!("expected key=value, got `{assignment}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(key, _)| *key == k) {
            return Err(CliError::usage(Stage::Config, format!("unknown key `{k}`")));
        }
        self.values.insert(k.to_string(), v.to_string());
        Ok(())
    }

    /// Entries of `other` override those of `self`.
    pub fn merge(&mut self, other: &ConfigText) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

fn bad(key: &str, v: &str, want: &str) -> CliError {
    CliError::usage(Stage::Config, format!("`{key}={v}`: expected {want}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, "a number"))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(bad(key, v, "true or false")),
    }
}

fn optional<T: std::str::FromStr>(key: &str, v: &str, none: &str) -> Result<Option<T>> {
    if v == none {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn unit_interval(key: &str, v: &str) -> Result<f64> {
    let x: f64 = num(key, v)?;
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(bad(key, v, "a value in [0, 1]"))
    }
}

pub fn parse_randomization(v: &str) -> Option<Randomization> {
    match v {
        "none" => Some(Randomization::None),
        "full" => Some(Randomization::Full),
        _ => v.strip_prefix("radius:").and_then(|r| r.parse().ok()).map(Randomization::Radius),
    }
}

pub fn randomization_tag(r: Randomization) -> String {
    match r {
        Randomization::None => "none".into(),
        Randomization::Full => "full".into(),
        Randomization::Radius(k) => format!("radius:{k}"),
    }
}

impl RunConfig {
    /// Validates `text`; every key not given takes its default. `seed` has
    /// no default.
    pub fn from_text(text: &ConfigText) -> Result<RunConfig> {
        let get = |k: &str| -> &str {
            text.get(k)
                .unwrap_or_else(|| KEYS.iter().find(|(key, _)| *key == k).map(|(_, d)| *d).expect("known key"))
        };
        let seed = text
            .get("seed")
            .ok_or_else(|| CliError::usage(Stage::Config, "`seed` is mandatory"))
            .and_then(|v| num("seed", v))?;
        let pitch: u32 = num("grid.track_pitch", get("grid.track_pitch"))?;
        let util: f64 = num("grid.utilization", get("grid.utilization"))?;
        if pitch == 0 {
            return Err(bad("grid.track_pitch", "0", "a positive integer"));
        }
        if !(util > 0.0 && util <= 1.0) {
            return Err(bad("grid.utilization", get("grid.utilization"), "a value in (0, 1]"));
        }
        let strategy = Strategy::from_tag(get("partition.strategy"))
            .ok_or_else(|| bad("partition.strategy", get("partition.strategy"), "random, max_cut, timing_aware, hierarchical or ht_aware"))?;
        let randomization = parse_randomization(get("f2f.randomization"))
            .ok_or_else(|| bad("f2f.randomization", get("f2f.randomization"), "none, full or radius:<n>"))?;
        let attack = AttackKind::from_tag(get("attack.kind"))
            .ok_or_else(|| bad("attack.kind", get("attack.kind"), "proximity, random or sat"))?;
        let ksec_mode = match get("ksec.mode") {
            "auto" => ModeChoice::Auto,
            "exact" => ModeChoice::Fixed(KMode::Exact),
            "refine" => ModeChoice::Fixed(KMode::Refine),
            v => return Err(bad("ksec.mode", v, "auto, exact or refine")),
        };
        let ksec_templates = match get("ksec.templates") {
            "default" => None,
            p => {
                let path = PathBuf::from(p);
                if !path.is_file() {
                    return Err(CliError::usage(Stage::Config, format!("template file {p} does not exist")));
                }
                Some(path)
            }
        };
        Ok(RunConfig {
            seed,
            grid_utilization: util,
            grid_track_pitch: pitch,
            legalize_radius: optional("grid.legalize_radius", get("grid.legalize_radius"), "auto")?,
            strategy,
            move_fraction: unit_interval("partition.move_fraction", get("partition.move_fraction"))?,
            balance_eps: unit_interval("partition.eps", get("partition.eps"))?,
            slack_threshold: optional("partition.slack_threshold", get("partition.slack_threshold"), "auto")?,
            randomization,
            switchbox: flag("f2f.switchbox", get("f2f.switchbox"))?,
            verify_patterns: num("verify.patterns", get("verify.patterns"))?,
            attack,
            sat_boxes: num("attack.sat_boxes", get("attack.sat_boxes"))?,
            time_limit_ms: num("attack.time_limit_ms", get("attack.time_limit_ms"))?,
            conflicts: optional("attack.conflicts", get("attack.conflicts"), "unlimited")?,
            orientation: flag("attack.orientation", get("attack.orientation"))?,
            loop_pruning: flag("attack.loop_pruning", get("attack.loop_pruning"))?,
            hd_patterns: num("metrics.hd_patterns", get("metrics.hd_patterns"))?,
            histogram_bins: num("metrics.histogram_bins", get("metrics.histogram_bins"))?,
            ksec_fraction: unit_interval("ksec.fraction", get("ksec.fraction"))?,
            ksec_patterns: num("ksec.patterns", get("ksec.patterns"))?,
            ksec_iterations: num("ksec.iterations", get("ksec.iterations"))?,
            ksec_target_k: optional("ksec.target_k", get("ksec.target_k"), "none")?,
            ksec_lift_budget: num("ksec.lift_budget", get("ksec.lift_budget"))?,
            ksec_mode,
            ksec_templates,
            ksec_techmap: flag("ksec.techmap", get("ksec.techmap"))?,
            ksec_trials: num("ksec.trials", get("ksec.trials"))?,
        })
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_text(&ConfigText::parse(text)?)
    }

    /// Every key with its effective value, in canonical form.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let opt = |v: Option<String>, none: &str| v.unwrap_or_else(|| none.to_string());
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("grid.utilization", self.grid_utilization.to_string()),
            ("grid.track_pitch", self.grid_track_pitch.to_string()),
            ("grid.legalize_radius", opt(self.legalize_radius.map(|r| r.to_string()), "auto")),
            ("partition.strategy", self.strategy.tag().to_string()),
            ("partition.move_fraction", self.move_fraction.to_string()),
            ("partition.eps", self.balance_eps.to_string()),
            ("partition.slack_threshold", opt(self.slack_threshold.map(|r| r.to_string()), "auto")),
            ("f2f.randomization", randomization_tag(self.randomization)),
            ("f2f.switchbox", self.switchbox.to_string()),
            ("verify.patterns", self.verify_patterns.to_string()),
            ("attack.kind", self.attack.tag().to_string()),
            ("attack.sat_boxes", self.sat_boxes.to_string()),
            ("attack.time_limit_ms", self.time_limit_ms.to_string()),
            ("attack.conflicts", opt(self.conflicts.map(|c| c.to_string()), "unlimited")),
            ("attack.orientation", self.orientation.to_string()),
            ("attack.loop_pruning", self.loop_pruning.to_string()),
            ("metrics.hd_patterns", self.hd_patterns.to_string()),
            ("metrics.histogram_bins", self.histogram_bins.to_string()),
            ("ksec.fraction", self.ksec_fraction.to_string()),
            ("ksec.patterns", self.ksec_patterns.to_string()),
            ("ksec.iterations", self.ksec_iterations.to_string()),
            ("ksec.target_k", opt(self.ksec_target_k.map(|k| k.to_string()), "none")),
            ("ksec.lift_budget", self.ksec_lift_budget.to_string()),
            (
                "ksec.mode",
                match self.ksec_mode {
                    ModeChoice::Auto => "auto".into(),
                    ModeChoice::Fixed(KMode::Exact) => "exact".into(),
                    ModeChoice::Fixed(KMode::Refine) => "refine".into(),
                },
            ),
            (
                "ksec.templates",
                opt(self.ksec_templates.as_ref().map(|p| p.display().to_string()), "default"),
            ),
            ("ksec.techmap", self.ksec_techmap.to_string()),
            ("ksec.trials", self.ksec_trials.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// The echo as config text; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        self.echo().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn with_seed(&self, seed: u64) -> RunConfig {
        RunConfig { seed, ..self.clone() }
    }
}

/// Seed of one pipeline stage: a fixed mix of the run seed and the stage
/// name, so stages draw independent streams.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
