use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wavelet_ae::architecture::{build_model, init_parameters, ModelSpec, Variant};
use wavelet_ae::dataset::{
    build_experiment_dataset, synthetic_noise_bank, synthetic_records, DatasetConfig, MITDB_FS,
};
use wavelet_ae::nnlayers::{ForwardCtx, Tensor3};
use wavelet_ae::par::{with_mode, ExecMode};
use wavelet_ae::training::mse_loss;

const MODES: [(&str, ExecMode); 2] = [
    ("parallel", ExecMode::Parallel),
    ("sequential", ExecMode::Sequential),
];

fn train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_step_b8");
    group.sample_size(10);
    for variant in [Variant::Fcn, Variant::Backward(1)] {
        let spec = ModelSpec::new(variant, 1);
        let mut net = build_model(&spec).unwrap();
        init_parameters(&mut net, 1);
        let windows: Vec<Vec<f64>> = (0..8)
            .map(|b| {
                (0..1024)
                    .map(|i| ((i + 37 * b) as f64 * 0.03).sin() * 0.5 + 0.5)
                    .collect()
            })
            .collect();
        let x = Tensor3::from_windows(&windows).unwrap();
        for (name, mode) in MODES {
            group.bench_with_input(
                BenchmarkId::new(name, variant.label()),
                &mode,
                |bench, &mode| {
                    bench.iter(|| {
                        with_mode(mode, || {
                            net.zero_grad();
                            let y = net.forward(&x, &ForwardCtx::train(3)).unwrap();
                            let (_, g) = mse_loss(&y, &x).unwrap();
                            net.backward(&g).unwrap()
                        })
                    })
                },
            );
        }
    }
    group.finish();
}

fn inference(c: &mut Criterion) {
    let mut group = c.benchmark_group("infer_b32");
    group.sample_size(10);
    let net = build_model(&ModelSpec::new(Variant::Backward(1), 2)).unwrap();
    let windows: Vec<Vec<f64>> = (0..32)
        .map(|b| {
            (0..1024)
                .map(|i| ((i * (b + 1)) as f64 * 0.01).cos())
                .collect()
        })
        .collect();
    for (name, mode) in MODES {
        group.bench_function(name, |bench| {
            bench.iter(|| with_mode(mode, || net.denoise_windows(&windows, 8).unwrap()))
        });
    }
    group.finish();
}

fn dataset(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_dataset");
    group.sample_size(10);
    let records = synthetic_records(4, 120.0, MITDB_FS, 5);
    let bank = synthetic_noise_bank(43200, MITDB_FS, 6);
    let cfg = DatasetConfig {
        train_per_record: 8,
        val_per_record: 2,
        test_per_record: Some(2),
        ..DatasetConfig::default()
    };
    for (name, mode) in MODES {
        group.bench_function(name, |bench| {
            bench.iter(|| {
                with_mode(mode, || {
                    build_experiment_dataset(&cfg, &records, &bank, 1).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, train_step, inference, dataset);
criterion_main!(benches);
