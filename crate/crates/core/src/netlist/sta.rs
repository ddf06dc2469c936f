use serde::Serialize;

use super::{acyclicity_check, Acyclicity, GateId, Netlist, NetlistError};

/// Unit-delay timing: every combinational gate costs one, wires are free.
/// DFFs are timing start points with zero delay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Timing {
    pub arrival: Vec<u32>,
    pub required: Vec<u32>,
    pub slack: Vec<u32>,
    pub critical_path_length: u32,
}

impl Timing {
    pub fn slack_of(&self, g: GateId) -> u32 {
        self.slack[g.index()]
    }

    /// Length of the longest path through `g`.
    pub fn longest_through(&self, g: GateId) -> u32 {
        self.critical_path_length - self.slack[g.index()]
    }
}

pub fn sta_unit_delay(n: &Netlist) -> Result<Timing, NetlistError> {
    let order = match acyclicity_check(n) {
        Acyclicity::Ok(o) => o,
        Acyclicity::Cycle(c) => return Err(NetlistError::Cycle(c)),
    };
    let comb_driver = |net: super::NetId| {
        n.net(net)
            .driver
            .filter(|d| !n.gate(*d).cell.is_sequential())
    };
    let mut arrival = vec![0u32; n.num_gates()];
    for &g in &order {
        let a = n
            .gate(g)
            .fanins
            .iter()
            .filter_map(|&f| comb_driver(f))
            .map(|d| arrival[d.index()])
            .max()
            .unwrap_or(0);
        arrival[g.index()] = a + 1;
    }
    // tail(g): longest gate count strictly after g to an endpoint.
    let mut tail = vec![0u32; n.num_gates()];
    let tail_of_sinks = |g: GateId, tail: &[u32]| {
        n.fanouts(n.gate(g).output)
            .iter()
            .filter(|s| !n.gate(s.gate).cell.is_sequential())
            .map(|s| tail[s.gate.index()] + 1)
            .max()
            .unwrap_or(0)
    };
    for &g in order.iter().rev() {
        tail[g.index()] = tail_of_sinks(g, &tail);
    }
    for g in n.dffs() {
        tail[g.index()] = tail_of_sinks(g, &tail);
    }
    let critical = n
        .gate_ids()
        .map(|g| arrival[g.index()] + tail[g.index()])
        .max()
        .unwrap_or(0);
    let required: Vec<u32> = tail.iter().map(|t| critical - t).collect();
    let slack = required
        .iter()
        .zip(&arrival)
        .map(|(r, a)| r - a)
        .collect();
    Ok(Timing {
        arrival,
        required,
        slack,
        critical_path_length: critical,
    })
}
