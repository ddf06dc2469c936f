use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use f2fsec::attack::{proximity_attack, sat_attack, NetlistOracle, ProximityParams, SatAttackLimits};
use f2fsec::f2f::{expose, Adversary};
use f2fsec::layout::{place, GridSpec};
use f2fsec::netlist::{simulate, PatternBlock};
use f2fsec::partition::{partition_timing_aware, DEFAULT_BALANCE};
use f2fsec_bench::Fixture;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simulation(c: &mut Criterion) {
    let n = f2fsec::corpus::load("c3540").unwrap();
    let block = PatternBlock::random(n.frame_inputs().len(), 4096, &mut ChaCha8Rng::seed_from_u64(0));
    c.bench_function("simulate/c3540/4096", |b| b.iter(|| simulate(&n, black_box(&block)).unwrap()));
}

fn partitioning(c: &mut Criterion) {
    let mut g = c.benchmark_group("partition_timing_aware");
    for name in ["c432", "c1908", "c3540"] {
        let n = f2fsec::corpus::load(name).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(name), &n, |b, n| {
            b.iter(|| partition_timing_aware(n, None, DEFAULT_BALANCE, 1).unwrap())
        });
    }
    g.finish();
}

fn placement(c: &mut Criterion) {
    let f = Fixture::new("c880", 1, false);
    let spec = GridSpec::for_gates(f.netlist.num_gates(), 0.5, 1);
    c.bench_function("place/c880", |b| b.iter(|| place(&f.netlist, &f.assignment, spec, 1).unwrap()));
}

fn proximity(c: &mut Criterion) {
    let mut g = c.benchmark_group("proximity_attack");
    for name in ["c432", "c880", "c1355"] {
        let f = Fixture::new(name, 1, false);
        let view = expose(&f.netlist, &f.plan, Adversary::Fab);
        g.bench_function(name, |b| b.iter(|| proximity_attack(&view, &ProximityParams::default()).unwrap()));
    }
    g.finish();
}

fn sat(c: &mut Criterion) {
    let f = Fixture::new("c432", 1, true);
    let view = expose(&f.netlist, &f.plan, Adversary::EndUser);
    let truth = f.plan.secret_mapping();
    let mut g = c.benchmark_group("sat_attack/c432");
    g.sample_size(10);
    g.bench_function("one_box", |b| {
        b.iter(|| {
            let mut oracle = NetlistOracle::new(f.netlist.clone());
            sat_attack(&view, &[0], &truth, &mut oracle, &SatAttackLimits::default())
        })
    });
    g.finish();
}

criterion_group!(benches, simulation, partitioning, placement, proximity, sat);
criterion_main!(benches);
