use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use termlab::agents::{EpisodeRunner, SacAgent, SacConfig, StoredTransition};
use termlab::envs::{Environment, PendulumBalance};
use termlab::nn::{Activation, Init, Mlp};
use termlab::{td_target, Handler, TdConfig, TerminationKind, ValueTriple};

fn td_targets(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let triples: Vec<ValueTriple> = (0..1024)
        .map(|_| ValueTriple {
            v: rng.random_range(-50.0..50.0),
            v_next: rng.random_range(-50.0..50.0),
            reward: rng.random_range(-5.0..5.0),
        })
        .collect();
    let mut group = c.benchmark_group("td_target_1024");
    for h in Handler::ALL {
        let cfg = TdConfig::new(h);
        group.bench_function(h.as_str(), |b| {
            b.iter(|| {
                let mut acc = 0.0;
                for t in &triples {
                    acc += td_target(TerminationKind::Failure, black_box(t), &cfg).unwrap();
                }
                acc
            })
        });
    }
    group.finish();
}

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Mlp::new(&[4, 64, 64, 1], Activation::Relu, Init::CRITIC, &mut rng);
    let x = Array2::from_shape_fn((256, 4), |_| rng.random_range(-1.0..1.0));
    let g = Array2::ones((256, 1));
    c.bench_function("mlp_forward_256x[4,64,64,1]", |b| b.iter(|| net.forward_batch(black_box(x.view())).unwrap()));
    c.bench_function("mlp_backward_256x[4,64,64,1]", |b| {
        b.iter(|| net.backward(black_box(x.view()), g.view()).unwrap())
    });
}

fn sac_update(c: &mut Criterion) {
    let env = PendulumBalance::default();
    let mut cfg = SacConfig::new(TdConfig::new(Handler::Underest));
    cfg.hidden = vec![32, 32];
    cfg.batch_size = 64;
    cfg.warmup_steps = 0;
    let mut agent = SacAgent::new(env.spec(), cfg, 3);
    let mut runner = EpisodeRunner::new(PendulumBalance::default(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..2000 {
        let sample = agent.policy.sample(runner.state(), &mut rng).unwrap();
        let (transition, _) = runner.step(&sample.action).unwrap();
        agent.push(StoredTransition {
            transition,
            raw_action: sample.raw,
        });
    }
    c.bench_function("sac_update_batch64_[32,32]", |b| {
        b.iter_batched(|| agent.clone(), |mut a| a.update().unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, td_targets, mlp, sac_update);
criterion_main!(benches);
