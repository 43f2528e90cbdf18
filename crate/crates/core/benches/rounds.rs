use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use dqkd::channel::{ChannelConfig, EveStrategy};
use dqkd::protocol::{run_session_with, Execution, Mode, SessionConfig};

fn config(mode: Mode, rounds: u64, eve: EveStrategy) -> SessionConfig {
    SessionConfig {
        mode,
        rounds,
        seed: 7,
        channel: ChannelConfig {
            eve,
            pauli_p: 0.02,
            ..ChannelConfig::default()
        },
        ..SessionConfig::default()
    }
}

fn sessions(c: &mut Criterion) {
    let mut group = c.benchmark_group("session");
    group.sample_size(10);
    for (name, mode, eve) in [
        ("ent", Mode::Ent, EveStrategy::None),
        ("pm", Mode::Pm, EveStrategy::None),
        ("ent-ir-both", Mode::Ent, EveStrategy::InterceptResendBoth),
    ] {
        let cfg = config(mode, 20_000, eve);
        group.throughput(Throughput::Elements(cfg.rounds));
        for exec in [Execution::Sequential, Execution::Parallel] {
            group.bench_with_input(
                BenchmarkId::new(name, format!("{exec:?}")),
                &exec,
                |b, &exec| b.iter(|| run_session_with(&cfg, exec).unwrap()),
            );
        }
    }
    group.finish();
}

criterion_group!(benches, sessions);
criterion_main!(benches);
