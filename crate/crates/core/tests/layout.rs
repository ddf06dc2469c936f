use std::collections::HashSet;

use f2fsec::layout::{hpwl, nearest_track_site, place, place_with, AnnealParams, GridSpec, Site};
use f2fsec::netlist::{parse_bench, Netlist};
use f2fsec::partition::partition_random;
use proptest::prelude::*;

fn spec(w: u32, h: u32, pitch: u32) -> GridSpec {
    GridSpec {
        width: w,
        height: h,
        track_pitch: pitch,
    }
}

fn unplaced() -> AnnealParams {
    AnnealParams {
        stages: 0,
        ..AnnealParams::default()
    }
}

fn pair() -> Netlist {
    parse_bench("INPUT(a)\nOUTPUT(y)\nd = NOT(a)\ny = NOT(d)").unwrap()
}

fn clique5() -> Netlist {
    parse_bench(
        "INPUT(a)\nOUTPUT(z)\ng0 = NOT(a)\ng1 = NOT(g0)\ng2 = AND(g0, g1)\n\
         g3 = AND(g0, g1, g2)\ng4 = AND(g0, g1, g2, g3)\nz = OR(g4, g3)",
    )
    .unwrap()
}

#[test]
fn annealing_pulls_connected_gates_together() {
    let n = pair();
    let a = partition_random(&n, 0.0, 0).unwrap();
    let s = spec(10, 10, 1);
    let (d, y) = (n.gate_id("d").unwrap(), n.gate_id("y").unwrap());
    let mut ok = 0;
    for seed in 0..100 {
        let before = place_with(&n, &a, s, seed, unplaced()).unwrap();
        let after = place(&n, &a, s, seed).unwrap();
        if after.site(d).chebyshev(after.site(y)) <= before.site(d).chebyshev(before.site(y)) {
            ok += 1;
        }
    }
    assert!(ok >= 95, "{ok}/100");
}

#[test]
fn clique_hpwl_not_worse_than_random() {
    let n = clique5();
    let a = partition_random(&n, 0.0, 0).unwrap();
    let s = spec(12, 12, 1);
    for seed in 0..20 {
        let before = place_with(&n, &a, s, seed, unplaced()).unwrap();
        let after = place(&n, &a, s, seed).unwrap();
        assert!(hpwl(&n, &after) <= hpwl(&n, &before), "seed {seed}");
    }
}

#[test]
fn placement_is_injective_and_deterministic() {
    let n = f2fsec::corpus::load("c432").unwrap();
    let a = partition_random(&n, 0.5, 3).unwrap();
    let s = GridSpec::for_gates(n.num_gates() / 2 + 20, 0.7, 4);
    let p = place(&n, &a, s, 11).unwrap();
    let q = place(&n, &a, s, 11).unwrap();
    assert_eq!(p, q);
    let mut seen = HashSet::new();
    for g in n.gate_ids() {
        assert!(s.contains(p.site(g)));
        assert_eq!(p.tier(g), a.tier(g));
        assert!(seen.insert((p.tier(g), p.site(g))), "two gates share a site");
    }
}

fn brute_nearest(pt: (f64, f64), s: &GridSpec, occ: &HashSet<Site>, radius: u32) -> Option<Site> {
    let mut best: Option<(f64, Site)> = None;
    for x in 0..s.width as i32 {
        for y in 0..s.height as i32 {
            let site = Site::new(x, y);
            if !s.on_track(site) || occ.contains(&site) {
                continue;
            }
            let d = ((x as f64 - pt.0).powi(2) + (y as f64 - pt.1).powi(2)).sqrt();
            if d > radius as f64 + 1e-9 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bd, bs)) => d < bd - 1e-9 || ((d - bd).abs() <= 1e-9 && site < bs),
            };
            if better {
                best = Some((d, site));
            }
        }
    }
    best.map(|b| b.1)
}

proptest! {
    #[test]
    fn nearest_track_site_matches_exhaustive_search(
        w in 1u32..14, h in 1u32..14, pitch in 1u32..5,
        px in 0.0f64..14.0, py in 0.0f64..14.0,
        radius in 0u32..20,
        occ in proptest::collection::vec((0i32..14, 0i32..14), 0..40),
    ) {
        let s = spec(w, h, pitch);
        let occ: HashSet<Site> = occ.into_iter().map(|(x, y)| Site::new(x, y)).collect();
        let got = nearest_track_site((px, py), &s, &occ, radius).ok();
        prop_assert_eq!(got, brute_nearest((px, py), &s, &occ, radius));
    }
}
