use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use routesim::metrics::kendall_tau;
use routesim::{game_a, game_b, run_trial, ActionProfile, AgentSpec, TrialConfig};

fn regrets(c: &mut Criterion) {
    let b = game_b();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let profiles: Vec<ActionProfile> = (0..256)
        .map(|_| ActionProfile::new((0..18).map(|_| rng.gen_range(0..3)).collect()))
        .collect();
    c.bench_function("regrets/game_b/256_profiles", |bench| {
        bench.iter(|| {
            profiles
                .iter()
                .map(|p| b.regrets(p).unwrap().iter().sum::<i64>())
                .sum::<i64>()
        })
    });
}

fn trials(c: &mut Criterion) {
    for (name, network, spec) in [
        ("trial/mwu/game_a", game_a(), AgentSpec::mwu()),
        ("trial/exp3/game_b", game_b(), AgentSpec::exp3()),
        ("trial/best_response/game_b", game_b(), AgentSpec::BestResponse),
    ] {
        let config = TrialConfig::new(&network, spec, 0);
        c.bench_function(name, |bench| {
            bench.iter_batched(
                || config.clone(),
                |cfg| run_trial(&cfg, None).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
}

fn kendall(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [40usize, 4096] {
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0..10) as f64).collect();
        c.bench_function(&format!("kendall_tau/{n}"), |bench| {
            bench.iter(|| kendall_tau(&xs, &ys).unwrap())
        });
    }
}

criterion_group!(benches, regrets, trials, kendall);
criterion_main!(benches);
