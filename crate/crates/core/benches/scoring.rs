use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use bas::active::{BasConfig, Heuristic};
use bas::bench::{Benchmark, BenchmarkName};
use bas::cluster::ClusterConfig;
use bas::design::{lhs, treed_me_candidates, Generator};
use bas::experiment::{experiment_runner, Combo, RunSpec};
use bas::par::Exec;
use bas::posterior::{run_chain, ChainConfig, ChainSettings, ModelClass, PosteriorSampleSet};
use bas::rng::substream;
use bas::tree::Tree;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn fitted() -> PosteriorSampleSet {
    let bench = Benchmark::new(BenchmarkName::Exp2d);
    let mut rng = substream(1, "bench", 0);
    let x = lhs(40, &bench.bounds, &mut rng);
    let z = x.iter().map(|p| bench.evaluate(p, &mut rng).unwrap()[0]).collect();
    let cfg = ChainConfig::new(ModelClass::Btgp, ChainSettings::new(100, 600, 5).unwrap());
    run_chain(x, z, bench.bounds.clone(), cfg, &mut rng).unwrap()
}

fn candidate_scoring(c: &mut Criterion) {
    let mut set = fitted();
    let mut rng = substream(2, "bench", 0);
    let cands = lhs(100, set.bounds(), &mut rng);
    let mut g = c.benchmark_group("candidate_scoring");
    for (name, exec) in MODES {
        set.set_exec(exec);
        g.bench_function(BenchmarkId::new("alc", name), |b| b.iter(|| black_box(set.alc_stat(&cands, &cands).unwrap())));
        g.bench_function(BenchmarkId::new("alm", name), |b| b.iter(|| black_box(set.alm_stat(&cands, 3).unwrap())));
    }
    g.finish();
}

fn per_leaf_search(c: &mut Criterion) {
    let tree: Tree<()> =
        Tree::from_text("0 -1 0 0\n1 0 1 0\n2 1 leaf\n3 1 leaf\n4 0 1 2\n5 4 leaf\n6 4 leaf\n").unwrap();
    let bounds = Benchmark::new(BenchmarkName::Exp2d).bounds;
    let mut g = c.benchmark_group("treed_me_candidates");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| black_box(treed_me_candidates(&tree, &bounds, 40, &[], 7, exec).unwrap()))
        });
    }
    g.finish();
}

fn repeats(c: &mut Criterion) {
    let settings = ChainSettings::new(20, 80, 2).unwrap();
    let base = RunSpec {
        bench: Benchmark::new(BenchmarkName::Sin1d),
        bas: BasConfig {
            chain: ChainConfig::new(ModelClass::Btgp, settings),
            generator: Generator::Tme,
            heuristic: Heuristic::Alc,
            n_candidates: 10,
            seed: 5,
            common_streams: false,
        },
        cluster: ClusterConfig::default(),
        n_initial: 10,
        initial: Generator::Me,
        budget: 16,
        trial_rmse: false,
        final_settings: settings,
    };
    let combos = [Combo { class: ModelClass::Btgp, generator: Generator::Tme, heuristic: Heuristic::Alc }];
    let mut g = c.benchmark_group("experiment_repeats");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| black_box(experiment_runner(&base, &combos, 4, exec).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, candidate_scoring, per_leaf_search, repeats);
criterion_main!(benches);
