//! Bundled benchmark netlists.

use crate::netlist::{parse_bench_named, Netlist, NetlistError};

macro_rules! iscas {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../../corpus/iscas85/", $name, ".bench")))),*]
    };
}

const ISCAS85: &[(&str, &str)] = iscas!["c17", "c432", "c499", "c880", "c1355", "c1908", "c3540"];

/// Names of the bundled ISCAS-85 benchmarks, smallest first.
pub fn iscas85_names() -> impl Iterator<Item = &'static str> {
    ISCAS85.iter().map(|(n, _)| *n)
}

pub fn bench_text(name: &str) -> Option<&'static str> {
    ISCAS85.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Parses a bundled benchmark. Panics only if `name` is unknown.
pub fn load(name: &str) -> Result<Netlist, NetlistError> {
    let text = bench_text(name).unwrap_or_else(|| panic!("no bundled benchmark named {name}"));
    parse_bench_named(text, name)
}
