//! F2F port planning, port randomization, obfuscated switchboxes, attacker
//! exposure views and reassembly of guessed inter-tier mappings.

use std::collections::{BTreeMap, HashSet};

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{nearest_track_site, GridSpec, LayoutError, Placement, Site};
use crate::netlist::{CellType, GateId, NetId, Netlist, NetlistBuilder, NetlistError, Sink};
use crate::partition::{cut_set, Tier, TierAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    BottomToTop,
    TopToBottom,
}

impl Direction {
    pub fn from_driver(t: Tier) -> Direction {
        match t {
            Tier::Bottom => Direction::BottomToTop,
            Tier::Top => Direction::TopToBottom,
        }
    }

    pub fn driver_tier(self) -> Tier {
        match self {
            Direction::BottomToTop => Tier::Bottom,
            Direction::TopToBottom => Tier::Top,
        }
    }

    pub fn sink_tier(self) -> Tier {
        self.driver_tier().other()
    }
}

#[derive(Debug, Error)]
pub enum F2FError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("no free track site left for net `{net}` within the randomization range")]
    SiteExhausted { net: String },
    #[error("switchbox counting needs port counts divisible by 4, got {d_bot} and {d_top}")]
    Divisibility { d_bot: usize, d_top: usize },
    #[error("invalid mapping guess: {0}")]
    BadGuess(String),
}

/// One cut net and its vertical connection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutNet {
    pub net: NetId,
    pub direction: Direction,
    pub driver: GateId,
    /// Sinks on the opposite tier (fed through the F2F via).
    pub far_sinks: Vec<Sink>,
    /// Port next to the driver, on the driver tier.
    pub true_port: Site,
    /// Legalized opposite-tier port before randomization.
    pub preliminary_port: Site,
    /// Opposite-tier port after randomization and switchbox permutation.
    pub randomized_port: Site,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "radius")]
pub enum Randomization {
    None,
    Full,
    Radius(u32),
}

/// Four same-direction nets meeting in a crossbar. Driver port `i` (nets in
/// true-port site order) reaches sink port `internal_perm[i]` (sink ports
/// in site order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchBox {
    pub direction: Direction,
    pub nets: [usize; 4],
    pub internal_perm: [u8; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F2FPlan {
    pub placement: Placement,
    pub nets: Vec<CutNet>,
    pub switchboxes: Vec<SwitchBox>,
    pub randomization: Randomization,
    pub randomization_seed: Option<u64>,
    pub grouping_seed: Option<u64>,
}

/// Default legalization radius in sites.
pub fn default_legalize_radius(spec: &GridSpec) -> u32 {
    2 * spec.width.max(spec.height)
}

/// Places the true port of every cut net at the on-track site nearest to
/// the centroid of all gates on the net; the opposite-tier port starts at
/// the same site. Sites are reserved on both tiers.
pub fn plan_ports(n: &Netlist, a: &TierAssignment, p: &Placement, radius: u32) -> Result<F2FPlan, F2FError> {
    let cuts = cut_set(n, a);
    let mut occupied: HashSet<Site> = HashSet::new();
    let mut nets = Vec::with_capacity(cuts.size());
    for net in cuts.nets {
        let driver = n.net(net).driver.expect("cut nets have drivers");
        let dt = a.tier(driver);
        let mut xs = p.site(driver).x as f64;
        let mut ys = p.site(driver).y as f64;
        let mut k = 1.0;
        for s in n.fanouts(net) {
            xs += p.site(s.gate).x as f64;
            ys += p.site(s.gate).y as f64;
            k += 1.0;
        }
        let site = nearest_track_site((xs / k, ys / k), &p.spec, &occupied, radius)?;
        occupied.insert(site);
        nets.push(CutNet {
            net,
            direction: Direction::from_driver(dt),
            driver,
            far_sinks: n
                .fanouts(net)
                .iter()
                .copied()
                .filter(|s| a.tier(s.gate) != dt)
                .collect(),
            true_port: site,
            preliminary_port: site,
            randomized_port: site,
        });
    }
    Ok(F2FPlan {
        placement: p.clone(),
        nets,
        switchboxes: Vec::new(),
        randomization: Randomization::None,
        randomization_seed: None,
        grouping_seed: None,
    })
}

fn tier_occupancy(plan: &F2FPlan) -> [HashSet<Site>; 2] {
    let mut occ = [HashSet::new(), HashSet::new()];
    for c in &plan.nets {
        occ[c.direction.driver_tier().index()].insert(c.true_port);
        occ[c.direction.sink_tier().index()].insert(c.randomized_port);
    }
    occ
}

/// Moves every opposite-tier port to a uniformly drawn free on-track site:
/// anywhere on the grid (`Full`) or within Chebyshev radius `r` of its
/// preliminary site (`Radius(r)`). Nets are processed in plan order.
pub fn randomize_ports(mut plan: F2FPlan, mode: Randomization, seed: u64) -> Result<F2FPlan, F2FError> {
    let spec = plan.placement.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occ = tier_occupancy(&plan);
    let pitch = spec.track_pitch.max(1) as i32;
    for c in &mut plan.nets {
        let t = c.direction.sink_tier().index();
        occ[t].remove(&c.randomized_port);
        let (x_lo, x_hi, y_lo, y_hi) = match mode {
            Randomization::None => {
                occ[t].insert(c.randomized_port);
                continue;
            }
            Randomization::Full => (0, spec.width as i32 - 1, 0, spec.height as i32 - 1),
            Randomization::Radius(r) => {
                let r = r as i32;
                let p = c.preliminary_port;
                (
                    (p.x - r).max(0),
                    (p.x + r).min(spec.width as i32 - 1),
                    (p.y - r).max(0),
                    (p.y + r).min(spec.height as i32 - 1),
                )
            }
        };
        let mut candidates = Vec::new();
        let mut x = (x_lo + pitch - 1) / pitch * pitch;
        while x <= x_hi {
            for y in y_lo..=y_hi {
                let s = Site::new(x, y);
                if !occ[t].contains(&s) {
                    candidates.push(s);
                }
            }
            x += pitch;
        }
        let Some(&site) = candidates.choose(&mut rng) else {
            return Err(F2FError::SiteExhausted {
                net: format!("{}", c.net.0),
            });
        };
        c.randomized_port = site;
        occ[t].insert(site);
    }
    plan.randomization = mode;
    plan.randomization_seed = Some(seed);
    Ok(plan)
}

/// Groups same-direction nets into switchboxes of four by true-port
/// proximity: a randomly chosen seed net takes its three nearest ungrouped
/// neighbours. Each box draws a uniform permutation that reassigns the
/// box's sink ports among its nets. Leftover nets (count mod 4) stay
/// outside any box.
pub fn group_switchboxes(mut plan: F2FPlan, seed: u64) -> F2FPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boxes = Vec::new();
    for dir in [Direction::BottomToTop, Direction::TopToBottom] {
        let mut pool: Vec<usize> = (0..plan.nets.len())
            .filter(|&i| plan.nets[i].direction == dir)
            .collect();
        while pool.len() >= 4 {
            let pick = rng.gen_range(0..pool.len());
            let centre = plan.nets[pool[pick]].true_port;
            pool.sort_by(|&a, &b| {
                let da = plan.nets[a].true_port.euclid(centre);
                let db = plan.nets[b].true_port.euclid(centre);
                da.total_cmp(&db).then(a.cmp(&b))
            });
            let mut members: Vec<usize> = pool.drain(..4).collect();
            members.sort_by_key(|&i| (plan.nets[i].true_port, i));
            let mut perm = [0u8, 1, 2, 3];
            perm.shuffle(&mut rng);
            let mut sinks: Vec<Site> = members.iter().map(|&i| plan.nets[i].randomized_port).collect();
            sinks.sort();
            for (slot, &i) in members.iter().enumerate() {
                plan.nets[i].randomized_port = sinks[perm[slot] as usize];
            }
            boxes.push(SwitchBox {
                direction: dir,
                nets: [members[0], members[1], members[2], members[3]],
                internal_perm: perm,
            });
        }
    }
    plan.switchboxes = boxes;
    plan.grouping_seed = Some(seed);
    plan
}

impl F2FPlan {
    pub fn spec(&self) -> GridSpec {
        self.placement.spec
    }

    pub fn count(&self, d: Direction) -> usize {
        self.nets.iter().filter(|c| c.direction == d).count()
    }

    /// Ports driven from the bottom tier.
    pub fn d_bot(&self) -> usize {
        self.count(Direction::BottomToTop)
    }

    pub fn d_top(&self) -> usize {
        self.count(Direction::TopToBottom)
    }

    /// Nets not inside any switchbox.
    pub fn unboxed(&self) -> usize {
        self.nets.len() - 4 * self.switchboxes.len()
    }

    /// Cut-net indices in public driver-port order: by direction, then site.
    pub fn driver_order(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.nets.len()).collect();
        v.sort_by_key(|&i| (self.nets[i].direction, self.nets[i].true_port));
        v
    }

    /// Cut-net indices in public sink-port order: by direction, then site.
    pub fn sink_order(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.nets.len()).collect();
        v.sort_by_key(|&i| (self.nets[i].direction, self.nets[i].randomized_port));
        v
    }

    /// The secret RDL bijection: driver port index → sink port index.
    pub fn secret_mapping(&self) -> Vec<usize> {
        let sink_pos = inverse(&self.sink_order());
        self.driver_order().iter().map(|&k| sink_pos[k]).collect()
    }

    /// Euclidean distance between the two ends of every vertical connection,
    /// divided by the grid diagonal.
    pub fn normalized_distances(&self) -> Vec<f64> {
        let diag = self.spec().diagonal();
        self.nets
            .iter()
            .map(|c| c.true_port.euclid(c.randomized_port) / diag)
            .collect()
    }

    pub fn public(&self) -> PublicPlan {
        let d_order = self.driver_order();
        let s_order = self.sink_order();
        let d_pos = inverse(&d_order);
        let s_pos = inverse(&s_order);
        PublicPlan {
            spec: self.spec(),
            driver_ports: d_order
                .iter()
                .map(|&k| PortSite {
                    site: self.nets[k].true_port,
                    tier: self.nets[k].direction.driver_tier(),
                    direction: self.nets[k].direction,
                })
                .collect(),
            sink_ports: s_order
                .iter()
                .map(|&k| PortSite {
                    site: self.nets[k].randomized_port,
                    tier: self.nets[k].direction.sink_tier(),
                    direction: self.nets[k].direction,
                })
                .collect(),
            switchboxes: self
                .switchboxes
                .iter()
                .map(|b| {
                    let mut drivers = b.nets.map(|k| d_pos[k]);
                    let mut sinks = b.nets.map(|k| s_pos[k]);
                    drivers.sort();
                    sinks.sort();
                    BoxMembership {
                        direction: b.direction,
                        drivers,
                        sinks,
                    }
                })
                .collect(),
            unboxed: self.unboxed(),
        }
    }

    pub fn secret(&self) -> SecretPlan {
        SecretPlan {
            rdl_mapping: self.secret_mapping(),
            internal_perms: self.switchboxes.iter().map(|b| b.internal_perm).collect(),
        }
    }
}

fn inverse(order: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; order.len()];
    for (i, &k) in order.iter().enumerate() {
        pos[k] = i;
    }
    pos
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortSite {
    pub site: Site,
    pub tier: Tier,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxMembership {
    pub direction: Direction,
    /// Driver port indices, ascending.
    pub drivers: [usize; 4],
    /// Sink port indices, ascending.
    pub sinks: [usize; 4],
}

/// What may be published about a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicPlan {
    pub spec: GridSpec,
    pub driver_ports: Vec<PortSite>,
    pub sink_ports: Vec<PortSite>,
    pub switchboxes: Vec<BoxMembership>,
    pub unboxed: usize,
}

/// The trusted RDL contents. Keep out of any file handed to an adversary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretPlan {
    pub rdl_mapping: Vec<usize>,
    pub internal_perms: Vec<[u8; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaTag {
    Plain,
    Switchbox,
    SwitchboxPerBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchSpace {
    #[serde(serialize_with = "big_as_string")]
    pub count: BigUint,
    pub formula: FormulaTag,
}

fn big_as_string<S: serde::Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn factorial(n: usize) -> BigUint {
    (1..=n as u64).fold(BigUint::from(1u32), |acc, k| acc * k)
}

/// Number of candidate netlists for an attacker: `d_bot!·d_top!` without
/// switchboxes; `4!·((d_bot/4)!·(d_top/4)!)` with them, or
/// `(4!)^s·(d_bot/4)!·(d_top/4)!` when `per_box` counts one permutation per
/// box (`s` boxes).
pub fn search_space(d_bot: usize, d_top: usize, formula: FormulaTag) -> Result<SearchSpace, F2FError> {
    let count = match formula {
        FormulaTag::Plain => factorial(d_bot) * factorial(d_top),
        FormulaTag::Switchbox | FormulaTag::SwitchboxPerBox => {
            if d_bot % 4 != 0 || d_top % 4 != 0 {
                return Err(F2FError::Divisibility { d_bot, d_top });
            }
            let s = (d_bot + d_top) / 4;
            let perms = if formula == FormulaTag::Switchbox {
                BigUint::from(24u32)
            } else {
                BigUint::from(24u32).pow(s as u32)
            };
            perms * factorial(d_bot / 4) * factorial(d_top / 4)
        }
    };
    Ok(SearchSpace { count, formula })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adversary {
    Fab,
    EndUser,
}

/// A gate input as the adversary sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSignal {
    Input(String),
    /// Intra-tier net, named after its driver.
    Net(String),
    /// Sink port index.
    Port(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewGate {
    pub name: String,
    pub cell: CellType,
    pub tier: Tier,
    pub site: Site,
    pub fanins: Vec<ViewSignal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverPortView {
    pub port: PortSite,
    pub driver: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkPortView {
    pub port: PortSite,
    /// (gate, pin) pairs fed by this port.
    pub sinks: Vec<(String, u8)>,
}

/// Everything one adversary can read off the two tier layouts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureView {
    pub adversary: Adversary,
    pub design: String,
    pub spec: GridSpec,
    pub primary_inputs: Vec<String>,
    pub primary_outputs: Vec<String>,
    pub gates: Vec<ViewGate>,
    pub driver_ports: Vec<DriverPortView>,
    pub sink_ports: Vec<SinkPortView>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub switchboxes: Option<Vec<BoxMembership>>,
}

pub fn expose(n: &Netlist, plan: &F2FPlan, adversary: Adversary) -> ExposureView {
    let public = plan.public();
    let s_order = plan.sink_order();
    let s_pos = inverse(&s_order);
    // (gate, pin) -> sink port index
    let mut via: BTreeMap<(u32, u8), usize> = BTreeMap::new();
    for (k, c) in plan.nets.iter().enumerate() {
        for s in &c.far_sinks {
            via.insert((s.gate.0, s.pin), s_pos[k]);
        }
    }
    let gates = n
        .gate_ids()
        .map(|g| {
            let gate = n.gate(g);
            let fanins = gate
                .fanins
                .iter()
                .enumerate()
                .map(|(pin, &f)| match via.get(&(g.0, pin as u8)) {
                    Some(&p) => ViewSignal::Port(p),
                    None => match n.net(f).driver {
                        Some(_) => ViewSignal::Net(n.net(f).name.clone()),
                        None => ViewSignal::Input(n.net(f).name.clone()),
                    },
                })
                .collect();
            ViewGate {
                name: n.gate_name(g).to_string(),
                cell: gate.cell,
                tier: plan.placement.tier(g),
                site: plan.placement.site(g),
                fanins,
            }
        })
        .collect();
    let driver_ports = plan
        .driver_order()
        .iter()
        .zip(&public.driver_ports)
        .map(|(&k, port)| DriverPortView {
            port: *port,
            driver: n.gate_name(plan.nets[k].driver).to_string(),
        })
        .collect();
    let sink_ports = s_order
        .iter()
        .zip(&public.sink_ports)
        .map(|(&k, port)| SinkPortView {
            port: *port,
            sinks: plan.nets[k]
                .far_sinks
                .iter()
                .map(|s| (n.gate_name(s.gate).to_string(), s.pin))
                .collect(),
        })
        .collect();
    ExposureView {
        adversary,
        design: n.name().to_string(),
        spec: plan.spec(),
        primary_inputs: n.primary_inputs().iter().map(|i| n.net(*i).name.clone()).collect(),
        primary_outputs: n.primary_outputs().iter().map(|o| n.net(*o).name.clone()).collect(),
        gates,
        driver_ports,
        sink_ports,
        switchboxes: (adversary == Adversary::EndUser).then_some(public.switchboxes),
    }
}

impl ExposureView {
    /// Checks that `guess` is a direction-respecting bijection from driver
    /// ports to sink ports.
    pub fn validate_guess(&self, guess: &[usize]) -> Result<(), F2FError> {
        if guess.len() != self.driver_ports.len() {
            return Err(F2FError::BadGuess(format!(
                "{} entries for {} driver ports",
                guess.len(),
                self.driver_ports.len()
            )));
        }
        let mut seen = vec![false; self.sink_ports.len()];
        for (i, &j) in guess.iter().enumerate() {
            let Some(sink) = self.sink_ports.get(j) else {
                return Err(F2FError::BadGuess(format!("sink port {j} does not exist")));
            };
            if std::mem::replace(&mut seen[j], true) {
                return Err(F2FError::BadGuess(format!("sink port {j} used twice")));
            }
            if sink.port.direction != self.driver_ports[i].port.direction {
                return Err(F2FError::BadGuess(format!("driver port {i} and sink port {j} differ in direction")));
            }
        }
        Ok(())
    }

    /// Rebuilds a netlist from the view with sink port `guess[i]` fed by
    /// driver port `i`. Combinational loops are allowed.
    pub fn reassemble(&self, guess: &[usize]) -> Result<Netlist, F2FError> {
        self.validate_guess(guess)?;
        let mut source = vec![""; self.sink_ports.len()];
        for (i, &j) in guess.iter().enumerate() {
            source[j] = self.driver_ports[i].driver.as_str();
        }
        let mut b = NetlistBuilder::new(self.design.clone());
        for i in &self.primary_inputs {
            b.add_input(i);
        }
        for o in &self.primary_outputs {
            b.add_output(o);
        }
        for g in &self.gates {
            let fanins: Vec<&str> = g
                .fanins
                .iter()
                .map(|f| match f {
                    ViewSignal::Input(s) | ViewSignal::Net(s) => s.as_str(),
                    ViewSignal::Port(p) => source[*p],
                })
                .collect();
            b.add_gate(&g.name, g.cell, &fanins);
        }
        Ok(b.build_allow_cycles()?)
    }

    /// Driver-port indices grouped by direction.
    pub fn driver_ports_of(&self, d: Direction) -> Vec<usize> {
        (0..self.driver_ports.len())
            .filter(|&i| self.driver_ports[i].port.direction == d)
            .collect()
    }

    pub fn sink_ports_of(&self, d: Direction) -> Vec<usize> {
        (0..self.sink_ports.len())
            .filter(|&i| self.sink_ports[i].port.direction == d)
            .collect()
    }
}

/// Materializes the design for a guessed mapping (indices as in
/// [`F2FPlan::public`]).
pub fn reassemble(n: &Netlist, plan: &F2FPlan, guess: &[usize]) -> Result<Netlist, F2FError> {
    expose(n, plan, Adversary::Fab).reassemble(guess)
}
