use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use textmirror::{run_trials, AgentKind, AgentSpec, ExperimentConfig, Parallelism, StrategyConfig, StrategyKind};

fn config(trials: u32, parallelism: Parallelism) -> ExperimentConfig {
    ExperimentConfig {
        trials_per_condition: trials,
        conditions: textmirror::Condition::CLASSIFIABLE.to_vec(),
        subject: AgentSpec::new(AgentKind::MarkovBot, 1).with_param("corpus", "a"),
        strategy: StrategyConfig::new(StrategyKind::SequentialLikelihood),
        other_pool: vec![AgentSpec::new(AgentKind::MarkovBot, 2).with_param("corpus", "b")],
        budget: 30,
        master_seed: 2024,
        output_dir: std::env::temp_dir(),
        parallelism,
        channel: Default::default(),
        rebind_gate: Default::default(),
    }
}

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("markov_experiment");
    group.sample_size(10);
    for trials in [8u32, 32] {
        for (name, mode) in [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Auto)] {
            let cfg = config(trials, mode);
            group.bench_with_input(BenchmarkId::new(name, trials), &cfg, |b, cfg| {
                b.iter(|| run_trials(cfg).expect("trials run"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);
