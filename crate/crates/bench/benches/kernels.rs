use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use strokesig_bench::{characters, random_path, random_tensor};
use strokesig_core::rng::{Domain, Stream};
use strokesig_core::sigfeat::{featurize, path_signature, FeatureMode, FeatureParams};
use strokesig_core::tensornet::layers::conv_forward;
use strokesig_core::tensornet::{
    ssmp_forward, ssmp_plan, Mode, Network, NetworkSpec, Noise, NoiseKey, PoolPlan, SsmpStrategy,
};

fn signature(c: &mut Criterion) {
    let mut g = c.benchmark_group("signature");
    let p2 = random_path::<2>(9);
    let p3 = random_path::<3>(9);
    for m in [2, 3, 4] {
        g.bench_with_input(BenchmarkId::new("d2_window9", m), &m, |b, &m| b.iter(|| path_signature(black_box(&p2), m)));
        g.bench_with_input(BenchmarkId::new("d3_window9", m), &m, |b, &m| b.iter(|| path_signature(black_box(&p3), m)));
    }
    let long = random_path::<3>(200);
    g.bench_function("d3_len200_m4", |b| b.iter(|| path_signature(black_box(&long), 4)));
    g.finish();
}

fn featurization(c: &mut Criterion) {
    let mut g = c.benchmark_group("featurize");
    let chars = characters(20);
    for mode in [FeatureMode::Bitmap, FeatureMode::Sig2d, FeatureMode::Sig3d] {
        let params = FeatureParams { mode, ..FeatureParams::default() };
        g.bench_function(BenchmarkId::new("grid64", mode.to_string()), |b| {
            b.iter(|| {
                for ch in &chars {
                    black_box(featurize(ch, &params).unwrap());
                }
            })
        });
    }
    g.finish();
}

fn convolution(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv");
    for (cin, cout, n, k) in [(8, 16, 32, 3), (32, 64, 16, 2), (121, 64, 64, 3)] {
        let x = random_tensor(&[cin, n, n]);
        let w = random_tensor(&[cout, cin, k, k]);
        let bias = random_tensor(&[cout]);
        let id = format!("{cin}x{n}x{n}_to_{cout}_k{k}");
        g.bench_function(id, |b| b.iter(|| conv_forward(black_box(&x), &w, &bias).unwrap()));
    }
    g.finish();
}

fn pooling(c: &mut Criterion) {
    let mut g = c.benchmark_group("ssmp");
    let mut rng = Stream::new(1, Domain::Test, &[]);
    for n in [16, 64, 128] {
        g.bench_with_input(BenchmarkId::new("plan", n), &n, |b, &n| {
            b.iter(|| ssmp_plan(n, 1.5, SsmpStrategy::Ssmp1, 0, &mut rng).unwrap())
        });
    }
    let x = random_tensor(&[32, 48, 48]);
    let plan = PoolPlan {
        rows: ssmp_plan(48, 1.5, SsmpStrategy::Ssmp1, 0, &mut rng).unwrap(),
        cols: ssmp_plan(48, 1.5, SsmpStrategy::Ssmp1, 0, &mut rng).unwrap(),
    };
    g.bench_function("forward_32x48x48", |b| b.iter(|| ssmp_forward(black_box(&x), &plan).unwrap()));
    g.finish();
}

fn network(c: &mut Criterion) {
    let mut g = c.benchmark_group("network");
    g.sample_size(20);
    let spec = NetworkSpec::parse("small", 7, 20, 20).unwrap();
    let net: Network<f32> = Network::new(spec, 1).unwrap();
    let x = random_tensor(&[7, 20, 20]);
    let key = NoiseKey { seed: 1, epoch: 0, step: 0, sample: 0, replica: 0 };
    let mut grads = net.zero_grads();
    g.bench_function("small_sig2d_grid20_forward", |b| {
        b.iter(|| net.forward(black_box(&x), Mode::Eval, Noise::Keyed(key)).unwrap())
    });
    g.bench_function("small_sig2d_grid20_train_step", |b| {
        b.iter(|| net.loss_and_grad(black_box(&x), 3, Mode::Train, Noise::Keyed(key), &mut grads).unwrap())
    });
    g.finish();
}

criterion_group!(benches, signature, featurization, convolution, pooling, network);
criterion_main!(benches);
