//! Benchmark lookup: file path, bundled name, corpus directory or generator.

use std::path::{Path, PathBuf};

use f2fsec::ksec::{default_templates, replicate_template};
use f2fsec::netlist::{parse_bench_named, Netlist};
use f2fsec::{corpus, synthetic};

use crate::error::{CliError, Result, Stage};

/// Directory searched for `<name>.bench` when a name is neither a file nor
/// bundled.
pub const CORPUS_ENV: &str = "F2FSEC_CORPUS";

/// Resolves a benchmark argument to (label, netlist). Accepted forms, in
/// lookup order:
///
/// - `gen:rewrite_friendly:<seed>`, `gen:sym:<template>:<copies>`,
///   `gen:random:<inputs>:<gates>:<seed>` (3-cell library)
/// - a path to a BENCH file
/// - a bundled ISCAS-85 name such as `c432`
/// - `$F2FSEC_CORPUS/<name>.bench`
pub fn resolve(spec: &str) -> Result<(String, Netlist)> {
    if let Some(g) = spec.strip_prefix("gen:") {
        return generate(g).map(|n| (spec.replace(':', "_"), n));
    }
    let path = Path::new(spec);
    if path.is_file() {
        return from_file(path);
    }
    if corpus::bench_text(spec).is_some() {
        return corpus::load(spec).map(|n| (spec.to_string(), n)).map_err(|e| CliError::data(Stage::Load, e));
    }
    if let Some(root) = std::env::var_os(CORPUS_ENV) {
        let p = PathBuf::from(root).join(format!("{spec}.bench"));
        if p.is_file() {
            return from_file(&p);
        }
    }
    Err(CliError::data(Stage::Load, format!("no benchmark `{spec}` (not a file, not bundled, not under ${CORPUS_ENV})")))
}

fn from_file(path: &Path) -> Result<(String, Netlist)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(Stage::Load, format!("{}: {e}", path.display())))?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "design".into());
    let n = parse_bench_named(&text, &label).map_err(|e| CliError::data(Stage::Load, format!("{}: {e}", path.display())))?;
    Ok((label, n))
}

fn generate(g: &str) -> Result<Netlist> {
    let parts: Vec<&str> = g.split(':').collect();
    let int = |s: &str| -> Result<u64> {
        s.parse().map_err(|_| CliError::data(Stage::Load, format!("generator `{g}`: `{s}` is not a number")))
    };
    match parts.as_slice() {
        ["rewrite_friendly", seed] => Ok(synthetic::rewrite_friendly(int(seed)?)),
        ["sym", id, copies] => {
            let t = default_templates()
                .into_iter()
                .find(|t| t.id == *id)
                .ok_or_else(|| CliError::data(Stage::Load, format!("no default template `{id}`")))?;
            Ok(replicate_template(&t, int(copies)? as usize))
        }
        ["random", inputs, gates, seed] => Ok(synthetic::random_dag(
            int(inputs)? as usize,
            int(gates)? as usize,
            &synthetic::lib3(),
            int(seed)?,
        )),
        _ => Err(CliError::data(Stage::Load, format!("unknown generator `{g}`"))),
    }
}
