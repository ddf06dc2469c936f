//! Abstract two-tier geometry: grid placement by simulated annealing and
//! on-track site legalization for F2F ports.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{GateId, NetId, Netlist};
use crate::partition::{Tier, TierAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: u32,
    pub height: u32,
    /// Port tracks run vertically at every `track_pitch`-th column.
    pub track_pitch: u32,
}

impl GridSpec {
    /// Square grid holding `gates` cells at the given utilization.
    pub fn for_gates(gates: usize, utilization: f64, track_pitch: u32) -> GridSpec {
        let side = ((gates.max(1) as f64 / utilization).sqrt().ceil() as u32).max(1);
        GridSpec {
            width: side,
            height: side,
            track_pitch,
        }
    }

    pub fn sites(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, s: Site) -> bool {
        s.x >= 0 && s.y >= 0 && (s.x as u32) < self.width && (s.y as u32) < self.height
    }

    pub fn on_track(&self, s: Site) -> bool {
        s.x % self.track_pitch as i32 == 0
    }

    /// Number of on-track sites.
    pub fn track_sites(&self) -> usize {
        self.width.div_ceil(self.track_pitch) as usize * self.height as usize
    }

    pub fn diagonal(&self) -> f64 {
        let w = self.width.saturating_sub(1) as f64;
        let h = self.height.saturating_sub(1) as f64;
        (w * w + h * h).sqrt().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub fn new(x: i32, y: i32) -> Site {
        Site { x, y }
    }

    pub fn chebyshev(self, o: Site) -> u32 {
        (self.x - o.x).unsigned_abs().max((self.y - o.y).unsigned_abs())
    }

    pub fn euclid(self, o: Site) -> f64 {
        let dx = (self.x - o.x) as f64;
        let dy = (self.y - o.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("grid has {sites} sites but tier {tier} needs {gates}")]
    GridTooSmall { tier: Tier, gates: usize, sites: usize },
    #[error("no free on-track site within radius {radius} of ({x:.2}, {y:.2})")]
    NoFreeSite { x: f64, y: f64, radius: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub spec: GridSpec,
    /// Per gate: tier and site.
    pub cells: Vec<(Tier, Site)>,
}

impl Placement {
    pub fn site(&self, g: GateId) -> Site {
        self.cells[g.index()].1
    }

    pub fn tier(&self, g: GateId) -> Tier {
        self.cells[g.index()].0
    }

    /// `gate_id,tier,x,y` lines with a header.
    pub fn to_csv(&self, n: &Netlist) -> String {
        let mut s = String::from("gate_id,tier,x,y\n");
        for g in n.gate_ids() {
            let (t, site) = self.cells[g.index()];
            s.push_str(&format!("{},{},{},{}\n", n.gate_name(g), t, site.x, site.y));
        }
        s
    }
}

/// Half-perimeter of the bounding box of `pts` (0 for fewer than two).
pub fn hpwl_points(pts: &[Site]) -> u64 {
    let Some(first) = pts.first() else { return 0 };
    let (mut x0, mut x1, mut y0, mut y1) = (first.x, first.x, first.y, first.y);
    for p in pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    (x1 - x0) as u64 + (y1 - y0) as u64
}

/// Gates attached to a net: its driver (if a gate) and all sinks.
fn net_gates(n: &Netlist, net: NetId) -> impl Iterator<Item = GateId> + '_ {
    n.net(net)
        .driver
        .into_iter()
        .chain(n.fanouts(net).iter().map(|s| s.gate))
}

/// Total wirelength with each net measured separately on every tier it
/// touches. Primary I/O pads carry no position and are ignored.
pub fn hpwl(n: &Netlist, p: &Placement) -> u64 {
    (0..n.num_nets() as u32).map(|i| net_hpwl(n, p, NetId(i))).sum()
}

fn net_hpwl(n: &Netlist, p: &Placement, net: NetId) -> u64 {
    let mut per_tier: [Vec<Site>; 2] = [Vec::new(), Vec::new()];
    for g in net_gates(n, net) {
        let (t, s) = p.cells[g.index()];
        per_tier[t.index()].push(s);
    }
    hpwl_points(&per_tier[0]) + hpwl_points(&per_tier[1])
}

/// Annealing effort knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealParams {
    pub moves_per_gate: usize,
    pub cooling: f64,
    pub stages: usize,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams {
            moves_per_gate: 300,
            cooling: 0.92,
            stages: 60,
        }
    }
}

pub fn place(n: &Netlist, a: &TierAssignment, spec: GridSpec, seed: u64) -> Result<Placement, LayoutError> {
    place_with(n, a, spec, seed, AnnealParams::default())
}

/// Simulated-annealing placement, each tier independently on the full grid.
pub fn place_with(
    n: &Netlist,
    a: &TierAssignment,
    spec: GridSpec,
    seed: u64,
    params: AnnealParams,
) -> Result<Placement, LayoutError> {
    let mut cells = vec![(Tier::Bottom, Site::new(0, 0)); n.num_gates()];
    for (ti, tier) in [Tier::Bottom, Tier::Top].into_iter().enumerate() {
        let gates: Vec<GateId> = a.gates_on(tier).collect();
        if gates.len() > spec.sites() {
            return Err(LayoutError::GridTooSmall {
                tier,
                gates: gates.len(),
                sites: spec.sites(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x51ed_270b_7a3c_9e15u64.wrapping_mul(ti as u64 + 1)));
        let sites = anneal_tier(n, a, tier, &gates, spec, &mut rng, params);
        for (g, s) in gates.iter().zip(sites) {
            cells[g.index()] = (tier, s);
        }
    }
    Ok(Placement { spec, cells })
}

struct TierState {
    spec: GridSpec,
    /// Site per local gate index.
    pos: Vec<Site>,
    /// Local gate index at each site, or usize::MAX.
    grid: Vec<usize>,
    /// Nets of each local gate restricted to this tier.
    nets_of: Vec<Vec<u32>>,
    /// Local indices of the gates of each net on this tier.
    members: Vec<Vec<usize>>,
}

impl TierState {
    fn cell(&self, s: Site) -> usize {
        s.y as usize * self.spec.width as usize + s.x as usize
    }

    fn net_cost(&self, k: u32) -> u64 {
        let pts: Vec<Site> = self.members[k as usize].iter().map(|&l| self.pos[l]).collect();
        hpwl_points(&pts)
    }

    fn affected(&self, a: usize, b: Option<usize>) -> Vec<u32> {
        let mut v = self.nets_of[a].clone();
        if let Some(b) = b {
            v.extend(&self.nets_of[b]);
            v.sort_unstable();
            v.dedup();
        }
        v
    }

    fn cost_of(&self, nets: &[u32]) -> u64 {
        nets.iter().map(|&k| self.net_cost(k)).sum()
    }

    fn apply(&mut self, a: usize, to: Site) -> Option<usize> {
        let from = self.pos[a];
        let (fc, tc) = (self.cell(from), self.cell(to));
        let other = self.grid[tc];
        self.grid[tc] = a;
        self.pos[a] = to;
        if other != usize::MAX {
            self.grid[fc] = other;
            self.pos[other] = from;
            Some(other)
        } else {
            self.grid[fc] = usize::MAX;
            None
        }
    }

    fn total(&self) -> u64 {
        (0..self.members.len() as u32).map(|k| self.net_cost(k)).sum()
    }
}

fn anneal_tier(
    n: &Netlist,
    a: &TierAssignment,
    tier: Tier,
    gates: &[GateId],
    spec: GridSpec,
    rng: &mut ChaCha8Rng,
    params: AnnealParams,
) -> Vec<Site> {
    if gates.is_empty() {
        return Vec::new();
    }
    let mut local = vec![usize::MAX; n.num_gates()];
    for (i, g) in gates.iter().enumerate() {
        local[g.index()] = i;
    }
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut nets_of: Vec<Vec<u32>> = vec![Vec::new(); gates.len()];
    for net in 0..n.num_nets() as u32 {
        let mut m: Vec<usize> = net_gates(n, NetId(net))
            .filter(|g| a.tier(*g) == tier)
            .map(|g| local[g.index()])
            .collect();
        m.sort_unstable();
        m.dedup();
        if m.len() >= 2 {
            let k = members.len() as u32;
            for &l in &m {
                nets_of[l].push(k);
            }
            members.push(m);
        }
    }
    let mut all: Vec<Site> = (0..spec.height as i32)
        .flat_map(|y| (0..spec.width as i32).map(move |x| Site::new(x, y)))
        .collect();
    all.shuffle(rng);
    let mut st = TierState {
        spec,
        pos: all[..gates.len()].to_vec(),
        grid: vec![usize::MAX; spec.sites()],
        nets_of,
        members,
    };
    for l in 0..gates.len() {
        let c = st.cell(st.pos[l]);
        st.grid[c] = l;
    }
    if st.members.is_empty() {
        return st.pos;
    }

    let random_move = |st: &TierState, rng: &mut ChaCha8Rng, window: i32| -> (usize, Site) {
        let g = rng.gen_range(0..st.pos.len());
        let p = st.pos[g];
        loop {
            let x = (p.x + rng.gen_range(-window..=window)).clamp(0, spec.width as i32 - 1);
            let y = (p.y + rng.gen_range(-window..=window)).clamp(0, spec.height as i32 - 1);
            let s = Site::new(x, y);
            if s != p || spec.sites() == 1 {
                return (g, s);
            }
        }
    };
    let max_window = spec.width.max(spec.height) as i32;
    if spec.sites() == 1 {
        return st.pos;
    }
    // Initial temperature from the mean uphill delta of random moves.
    let mut uphill = 0.0;
    let mut count = 0;
    for _ in 0..(gates.len() * 4).min(2000) {
        let (g, s) = random_move(&st, rng, max_window);
        let other = st.grid[st.cell(s)];
        let other = (other != usize::MAX).then_some(other);
        let nets = st.affected(g, other);
        let before = st.cost_of(&nets);
        let back = st.pos[g];
        st.apply(g, s);
        let after = st.cost_of(&nets);
        st.apply(g, back);
        if after > before {
            uphill += (after - before) as f64;
            count += 1;
        }
    }
    let mut temp = if count > 0 { uphill / count as f64 } else { 1.0 };
    let total_moves = params.moves_per_gate * gates.len();
    let per_stage = (total_moves / params.stages.max(1)).max(1);
    let mut window = max_window;
    let mut best = st.total();
    let mut best_pos = st.pos.clone();
    let mut current = best;
    for _ in 0..params.stages {
        let mut accepted = 0usize;
        for _ in 0..per_stage {
            let (g, s) = random_move(&st, rng, window.max(1));
            let other = st.grid[st.cell(s)];
            let other = (other != usize::MAX).then_some(other);
            let nets = st.affected(g, other);
            let before = st.cost_of(&nets);
            let back = st.pos[g];
            st.apply(g, s);
            let after = st.cost_of(&nets);
            let delta = after as f64 - before as f64;
            if delta <= 0.0 || rng.gen::<f64>() < (-delta / temp.max(1e-9)).exp() {
                accepted += 1;
                current = current + after - before;
                if current < best {
                    best = current;
                    best_pos.clone_from(&st.pos);
                }
            } else {
                st.apply(g, back);
            }
        }
        temp *= params.cooling;
        // Shrink the move window as acceptance drops.
        let rate = accepted as f64 / per_stage as f64;
        window = ((window as f64) * (1.0 - 0.44 + rate)).round().clamp(1.0, max_window as f64) as i32;
    }
    best_pos
}

/// Closest unoccupied on-track site to `pt` by Euclidean distance, ties by
/// `(x, y)` ascending. The search box grows one track pitch at a time up to
/// `radius`; sites further than `radius` are never returned.
pub fn nearest_track_site(
    pt: (f64, f64),
    spec: &GridSpec,
    occupied: &HashSet<Site>,
    radius: u32,
) -> Result<Site, LayoutError> {
    let pitch = spec.track_pitch.max(1) as i32;
    let d2 = |s: Site| {
        let dx = s.x as f64 - pt.0;
        let dy = s.y as f64 - pt.1;
        dx * dx + dy * dy
    };
    let better = |a: Site, b: Site| -> bool {
        let (da, db) = (d2(a), d2(b));
        if (da - db).abs() > 1e-9 {
            da < db
        } else {
            (a.x, a.y) < (b.x, b.y)
        }
    };
    let cx = pt.0.round() as i32;
    let cy = pt.1.round() as i32;
    let limit = radius as i32;
    let mut r = 0;
    loop {
        let r_eff = r.min(limit);
        let mut best: Option<Site> = None;
        let x_lo = (cx - r_eff - pitch).max(0);
        let x_hi = (cx + r_eff + pitch).min(spec.width as i32 - 1);
        let y_lo = (cy - r_eff - 1).max(0);
        let y_hi = (cy + r_eff + 1).min(spec.height as i32 - 1);
        let first_track = (x_lo + pitch - 1) / pitch * pitch;
        let mut x = first_track;
        while x <= x_hi {
            for y in y_lo..=y_hi {
                let s = Site::new(x, y);
                if occupied.contains(&s) || d2(s).sqrt() > radius as f64 + 1e-9 {
                    continue;
                }
                if best.is_none_or(|b| better(s, b)) {
                    best = Some(s);
                }
            }
            x += pitch;
        }
        // Everything outside the box lies further than `r_eff` from `pt`.
        if let Some(b) = best {
            if d2(b).sqrt() <= r_eff as f64 + 1e-9 || r_eff >= limit {
                return Ok(b);
            }
        }
        if r_eff >= limit {
            return Err(LayoutError::NoFreeSite {
                x: pt.0,
                y: pt.1,
                radius,
            });
        }
        r += pitch;
    }
}
