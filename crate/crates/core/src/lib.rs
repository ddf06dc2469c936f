//! Security-driven face-to-face 3D split manufacturing at netlist level.

pub mod netlist;
pub mod sat;
pub mod corpus;
pub mod synthetic;
pub mod layout;
pub mod partition;
pub mod f2f;
pub mod attack;
pub mod metrics;
pub mod ksec;
