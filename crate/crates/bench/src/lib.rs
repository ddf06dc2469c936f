//! Shared fixtures for the benchmarks.

use f2fsec::f2f::{default_legalize_radius, group_switchboxes, plan_ports, randomize_ports, F2FPlan, Randomization};
use f2fsec::layout::{place, GridSpec, Placement};
use f2fsec::netlist::Netlist;
use f2fsec::partition::{partition_timing_aware, TierAssignment, DEFAULT_BALANCE};

/// A defended design, built with default settings.
pub struct Fixture {
    pub netlist: Netlist,
    pub assignment: TierAssignment,
    pub placement: Placement,
    pub plan: F2FPlan,
}

impl Fixture {
    pub fn new(name: &str, seed: u64, switchbox: bool) -> Fixture {
        let netlist = f2fsec::corpus::load(name).expect("bundled design");
        let assignment = partition_timing_aware(&netlist, None, DEFAULT_BALANCE, seed).unwrap();
        let spec = GridSpec::for_gates(netlist.num_gates(), 0.5, 1);
        let placement = place(&netlist, &assignment, spec, seed).unwrap();
        let plan = plan_ports(&netlist, &assignment, &placement, default_legalize_radius(&spec)).unwrap();
        let mut plan = randomize_ports(plan, Randomization::Full, seed).unwrap();
        if switchbox {
            plan = group_switchboxes(plan, seed);
        }
        Fixture { netlist, assignment, placement, plan }
    }
}
