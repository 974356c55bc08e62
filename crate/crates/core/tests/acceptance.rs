//! Acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report is printed even
//! when every check passes. Criterion 10 needs the real databases and runs only
//! when `WAE_REPRODUCTION_CONFIG` names a config file with `source = files`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use wavelet_ae::architecture::{
    build_model, init_parameters, shape_trace, ModelSpec, RowKind, Variant,
};
use wavelet_ae::config::ExperimentConfig;
use wavelet_ae::dataset::wfdb::{pack_212, read_wfdb_adc, sign_extend_12, unpack_212};
use wavelet_ae::dataset::{
    build_experiment_dataset, mix_noise, preprocess_reference, snr_db, synthetic_ecg,
    synthetic_noise_bank, synthetic_records, write_wfdb_record, DatasetConfig, NoiseKind,
    NormalizationParams, Pair, PairSet, Role, SignalRecord, WfdbChannel, EVAL_SNRS_DB, MITDB_FS,
    TRAIN_SNRS_DB,
};
use wavelet_ae::evaluation::{rmse, Metric};
use wavelet_ae::nnlayers::{
    gradient_check, BatchNorm, BatchNormState, BranchInput, Conv1d, ConvParams, Dropout, DwtLayer,
    Elu, IdwtLayer, Layer, ParamSlot, Tensor3, TransposeConv1d, WaveletLayerParams,
};
use wavelet_ae::par::{with_mode, ExecMode};
use wavelet_ae::training::{
    adam_step, run_ablation, run_seed, train, AblationConfig, AdamState, TrainConfig, TrainHistory,
};
use wavelet_ae::wavelet::{make_db6_filters, wavedec, waverec};

enum Outcome {
    Pass(String),
    Fail(String),
    Flag(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn c1_perfect_reconstruction() -> Outcome {
    let bank = make_db6_filters();
    let started = Instant::now();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..1024).map(|_| r.gen_range(-1.0..1.0)).collect();
        for levels in 1..=5 {
            let y = waverec(&wavedec(&x, levels, &bank, MITDB_FS).unwrap(), &bank).unwrap();
            let err = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    let t = started.elapsed();
    check(
        worst < 1e-8 && t < Duration::from_secs(5),
        format!(
            "max |x - rec| = {worst:.2e} over 500 cases in {:.2} s",
            secs(t)
        ),
    )
}

fn c2_db6_validity() -> Outcome {
    let bank = make_db6_filters();
    if let Err(e) = bank.validate(1e-9) {
        return Outcome::Fail(e.to_string());
    }
    // double-shift orthonormality, computed here rather than trusted
    let h = &bank.dec_lo;
    let g = &bank.dec_hi;
    let mut worst: f64 = 0.0;
    for shift in (0..h.len()).step_by(2) {
        let hh: f64 = (0..h.len() - shift).map(|n| h[n] * h[n + shift]).sum();
        let gg: f64 = (0..g.len() - shift).map(|n| g[n] * g[n + shift]).sum();
        let target = if shift == 0 { 1.0 } else { 0.0 };
        let hg: f64 = (0..h.len() - shift).map(|n| h[n] * g[n + shift]).sum();
        let gh: f64 = (0..h.len() - shift).map(|n| g[n] * h[n + shift]).sum();
        worst = worst
            .max((hh - target).abs())
            .max((gg - target).abs())
            .max(hg.abs())
            .max(gh.abs());
    }
    check(
        worst < 1e-9 && h.len() == 12,
        format!("12 taps, sums/QMF ok, worst shift-orthonormality residual {worst:.2e}"),
    )
}

fn random_tensor(b: usize, l: usize, c: usize, r: &mut ChaCha8Rng) -> Tensor3 {
    Tensor3::new(
        b,
        l,
        c,
        (0..b * l * c).map(|_| r.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn randomize(p: &mut ConvParams, r: &mut ChaCha8Rng) {
    p.weights
        .iter_mut()
        .for_each(|w| *w = r.gen_range(-1.0..1.0));
    p.bias.iter_mut().for_each(|w| *w = r.gen_range(-1.0..1.0));
}

fn c3_gradients() -> Outcome {
    let started = Instant::now();
    let kinds = [
        "conv",
        "tconv",
        "batchnorm",
        "elu",
        "dropout",
        "dwt",
        "idwt",
    ];
    let mut worst = vec![0.0f64; kinds.len()];
    for seed in 0..10u64 {
        let mut r = rng(100 + seed);
        for (i, kind) in kinds.iter().enumerate() {
            let (mut layer, x) = match *kind {
                "conv" => {
                    let mut p = ConvParams::zeros(4, 2, 2, 3).unwrap();
                    randomize(&mut p, &mut r);
                    (Layer::Conv(Conv1d::new(p)), random_tensor(2, 8, 2, &mut r))
                }
                "tconv" => {
                    let mut p = ConvParams::zeros(4, 2, 3, 2).unwrap();
                    randomize(&mut p, &mut r);
                    (
                        Layer::TransposeConv(TransposeConv1d::new(p)),
                        random_tensor(2, 4, 3, &mut r),
                    )
                }
                "batchnorm" => {
                    let mut s = BatchNormState::new(3);
                    s.gamma = (0..3).map(|_| r.gen_range(0.5..1.5)).collect();
                    s.beta = (0..3).map(|_| r.gen_range(-0.5..0.5)).collect();
                    (
                        Layer::BatchNorm(BatchNorm::new(s)),
                        random_tensor(2, 8, 3, &mut r),
                    )
                }
                "elu" => {
                    // keep samples off the kink at zero
                    let x = random_tensor(2, 8, 2, &mut r).map(|v| v + 0.2 * v.signum());
                    (Layer::Elu(Elu::default()), x)
                }
                "dropout" => (
                    Layer::Dropout(Dropout::new(0.3).unwrap()),
                    random_tensor(2, 8, 2, &mut r),
                ),
                "dwt" => {
                    let mut p = WaveletLayerParams::for_dwt(2, 4, 8, make_db6_filters()).unwrap();
                    randomize(&mut p.hp, &mut r);
                    randomize(&mut p.lp, &mut r);
                    (
                        Layer::Dwt(DwtLayer::new(p)),
                        random_tensor(1, 16, 2, &mut r),
                    )
                }
                _ => {
                    let input = if seed % 2 == 0 {
                        BranchInput::Split
                    } else {
                        BranchInput::Shared
                    };
                    let mut p =
                        WaveletLayerParams::for_idwt(2, 3, 8, input, make_db6_filters()).unwrap();
                    randomize(&mut p.hp, &mut r);
                    randomize(&mut p.lp, &mut r);
                    (
                        Layer::Idwt(IdwtLayer::new(p, input)),
                        random_tensor(1, 8, 2, &mut r),
                    )
                }
            };
            let err = gradient_check(&mut layer, &x, 1e-4, 1000 + seed).unwrap();
            worst[i] = worst[i].max(err);
        }
    }
    let t = started.elapsed();
    let max = worst.iter().copied().fold(0.0, f64::max);
    let detail = kinds
        .iter()
        .zip(&worst)
        .map(|(k, e)| format!("{k} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        max < 1e-4 && t < Duration::from_secs(60),
        format!("{detail}; {:.1} s", secs(t)),
    )
}

fn c4_shapes() -> Outcome {
    // the Output column of the architecture table
    let expected = [
        (1024, 1),
        (512, 40),
        (256, 20),
        (128, 20),
        (64, 20),
        (32, 40),
        (32, 1),
        (32, 1),
        (64, 40),
        (128, 20),
        (256, 20),
        (512, 20),
        (1024, 40),
        (1024, 1),
    ];
    let fcn = shape_trace(&ModelSpec::new(Variant::Fcn, 0)).unwrap();
    let got: Vec<(usize, usize)> = fcn.iter().map(|r| (r.length, r.channels)).collect();
    if got != expected {
        return Outcome::Fail(format!("FCN trace {got:?}"));
    }
    let b3 = shape_trace(&ModelSpec::new(Variant::Backward(3), 0)).unwrap();
    let kinds: Vec<Option<RowKind>> = b3.iter().map(|r| r.kind).collect();
    let enc_ok = kinds[1..=2].iter().all(|k| *k == Some(RowKind::Conv))
        && kinds[3..=5].iter().all(|k| *k == Some(RowKind::Dwt));
    let dec_ok = kinds[8..=10].iter().all(|k| *k == Some(RowKind::Idwt))
        && kinds[11..=12]
            .iter()
            .all(|k| *k == Some(RowKind::TransposeConv));
    let same_shapes = b3
        .iter()
        .map(|r| (r.length, r.channels))
        .eq(expected.iter().copied());
    check(
        enc_ok && dec_ok && same_shapes,
        format!("FCN 13 rows match; B3 wavelet rows {:?}", wavelet_rows(&b3)),
    )
}

fn wavelet_rows(trace: &[wavelet_ae::architecture::ShapeRow]) -> Vec<usize> {
    trace
        .iter()
        .filter(|r| matches!(r.kind, Some(RowKind::Dwt | RowKind::Idwt)))
        .map(|r| r.index)
        .collect()
}

/// Textbook-independent Adam: the step size folds in both bias corrections.
struct ReferenceAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    beta1_t: f64,
    beta2_t: f64,
}

impl ReferenceAdam {
    fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        self.beta1_t *= b1;
        self.beta2_t *= b2;
        let c2 = (1.0 - self.beta2_t).sqrt();
        let step = lr * c2 / (1.0 - self.beta1_t);
        for j in 0..p.len() {
            self.m[j] += (1.0 - b1) * (g[j] - self.m[j]);
            self.v[j] += (1.0 - b2) * (g[j] * g[j] - self.v[j]);
            p[j] -= step * self.m[j] / (self.v[j].sqrt() + eps * c2);
        }
    }
}

fn c5_adam() -> Outcome {
    let mut r = rng(5);
    let sizes = [7usize, 3, 12];
    let target: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&n| (0..n).map(|_| r.gen_range(-2.0..2.0)).collect())
        .collect();
    let curvature: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&n| (0..n).map(|_| r.gen_range(0.1..3.0)).collect())
        .collect();
    let mut ours: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&n| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut theirs = ours.clone();
    let mut refs: Vec<ReferenceAdam> = sizes
        .iter()
        .map(|&n| ReferenceAdam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            beta1_t: 1.0,
            beta2_t: 1.0,
        })
        .collect();
    let grad = |p: &[Vec<f64>], a: usize| -> Vec<f64> {
        p[a].iter()
            .zip(&target[a])
            .zip(&curvature[a])
            .map(|((x, t), c)| c * (x - t) + 0.3 * (3.0 * x).sin())
            .collect()
    };
    let lr = 1e-2;
    let mut state = AdamState::new(lr);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g_ours: Vec<Vec<f64>> = (0..sizes.len()).map(|a| grad(&ours, a)).collect();
        let mut slots: Vec<ParamSlot> = ours
            .iter_mut()
            .zip(&g_ours)
            .map(|(value, grad)| ParamSlot { value, grad })
            .collect();
        adam_step(&mut slots, &mut state).unwrap();
        for a in 0..sizes.len() {
            let g = grad(&theirs, a);
            refs[a].step(&mut theirs[a], &g, lr);
        }
        for (x, y) in ours.iter().flatten().zip(theirs.iter().flatten()) {
            worst = worst.max((x - y).abs());
        }
    }
    check(
        worst <= 1e-12,
        format!("100 steps, 22 parameters, max deviation {worst:.2e}"),
    )
}

fn c6_mixing() -> Outcome {
    let bank = synthetic_noise_bank(20_000, MITDB_FS, 6);
    let ecg = synthetic_ecg(20_000, MITDB_FS, 6);
    let mut r = rng(6);
    let snrs: Vec<f64> = TRAIN_SNRS_DB
        .iter()
        .chain(EVAL_SNRS_DB.iter())
        .copied()
        .collect();
    let mut worst: f64 = 0.0;
    for &target in &snrs {
        for _ in 0..1000 {
            let s = r.gen_range(0..ecg.len() - 1024);
            let kind = NoiseKind::ALL[r.gen_range(0..3)];
            let ns = r.gen_range(0..20_000 - 1024);
            let clean = &ecg[s..s + 1024];
            let noisy = mix_noise(clean, &bank.get(kind)[ns..ns + 1024], target).unwrap();
            let residual: Vec<f64> = noisy.iter().zip(clean).map(|(a, b)| a - b).collect();
            worst = worst.max((snr_db(clean, &residual) - target).abs());
        }
    }
    check(
        worst < 1e-9 && snrs.len() == 12,
        format!("12 SNRs x 1000 pairs, max |achieved - target| = {worst:.2e} dB"),
    )
}

fn c7_wfdb() -> Outcome {
    // 0x800 and 0x7ff share one triple: low byte, packed nibbles, low byte
    let packed = pack_212(&[-2048, 2047]).unwrap();
    let nibbles_ok = packed == [0x00, 0x78, 0xff];
    let bounds = [2047, -2047, -2048, 0, -1, 1, 2047];
    let roundtrip_ok = unpack_212(&pack_212(&bounds).unwrap(), bounds.len()) == bounds;
    let sign_ok = sign_extend_12(0x800) == -2048
        && sign_extend_12(0x7ff) == 2047
        && sign_extend_12(0x801) == -2047;

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let mut r = rng(7);
    let mut adc0: Vec<i32> = (0..2999).map(|_| r.gen_range(-2048..=2047)).collect();
    adc0[..3].copy_from_slice(&[2047, -2047, -2048]);
    let adc1: Vec<i32> = (0..2999).map(|i| ((i * 37) % 4096) as i32 - 2048).collect();
    let channels = vec![
        WfdbChannel {
            adc: adc0,
            gain: 200.0,
            baseline: 1024,
            units: "mV".into(),
            description: "MLII".into(),
        },
        WfdbChannel {
            adc: adc1,
            gain: 200.0,
            baseline: 0,
            units: "mV".into(),
            description: "V5".into(),
        },
    ];
    let hea = write_wfdb_record(&a, "900", 360.0, &channels).unwrap();
    let (header, adc) = read_wfdb_adc(&hea, None).unwrap();
    let values_ok = adc.len() == 2 && adc[0] == channels[0].adc && adc[1] == channels[1].adc;
    let rewritten: Vec<WfdbChannel> = header
        .signals
        .iter()
        .zip(adc)
        .map(|(s, adc)| WfdbChannel {
            adc,
            gain: s.gain,
            baseline: s.baseline,
            units: s.units.clone(),
            description: s.description.clone(),
        })
        .collect();
    write_wfdb_record(&b, "900", header.sampling_rate_hz, &rewritten).unwrap();
    let bytes_ok = ["900.hea", "900.dat"]
        .iter()
        .all(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap());
    check(
        nibbles_ok && roundtrip_ok && sign_ok && values_ok && bytes_ok,
        format!(
            "nibbles {nibbles_ok}, boundary round trip {roundtrip_ok}, sign extension {sign_ok}, \
             values {values_ok}, byte-exact rewrite {bytes_ok}"
        ),
    )
}

/// 200 windows of band-limited pseudo-ECG mixed at 0 dB with an equal-power
/// blend of white and sub-hertz noise, split 140/30/30 in time order.
fn toy_dataset(seed: u64) -> (PairSet, PairSet, PairSet) {
    const N: usize = 200;
    let raw = SignalRecord::new("toy", synthetic_ecg(N * 1024, MITDB_FS, seed), MITDB_FS).unwrap();
    let filtered = preprocess_reference(&raw).samples;
    let windows: Vec<Vec<f64>> = filtered.chunks_exact(1024).map(|w| w.to_vec()).collect();
    let norm = NormalizationParams::fit(&windows).unwrap();
    let mut r = rng(seed ^ 0x70);
    let mut sets = [
        PairSet::new(Role::Train, 1024),
        PairSet::new(Role::Validation, 1024),
        PairSet::new(Role::Test, 1024),
    ];
    for (i, w) in windows.iter().enumerate() {
        let clean = norm.normalize(w);
        let white: Vec<f64> = (0..1024).map(|_| StandardNormal.sample(&mut r)).collect();
        let (f, phase) = (
            r.gen_range(0.1..0.5),
            r.gen_range(0.0..std::f64::consts::TAU),
        );
        let slow: Vec<f64> = (0..1024)
            .map(|t| {
                std::f64::consts::SQRT_2
                    * (std::f64::consts::TAU * f * t as f64 / MITDB_FS + phase).sin()
            })
            .collect();
        let noise: Vec<f64> = white.iter().zip(&slow).map(|(a, b)| a + b).collect();
        let noisy = mix_noise(&clean, &noise, 0.0).unwrap();
        let set = match i {
            0..=139 => 0,
            140..=169 => 1,
            _ => 2,
        };
        sets[set].pairs.push(Pair {
            record: "toy".into(),
            start: i * 1024,
            noise: NoiseKind::Em,
            noise_start: 0,
            snr_db: 0.0,
            clean,
            noisy,
        });
    }
    let [train, val, test] = sets;
    (train, val, test)
}

struct ToyRun {
    history: TrainHistory,
    noisy_rmse: f64,
    denoised_rmse: f64,
    elapsed: Duration,
}

fn toy_run(seed: u64) -> ToyRun {
    let started = Instant::now();
    with_mode(ExecMode::Sequential, || {
        let (train_set, val_set, test_set) = toy_dataset(seed);
        let mut net = build_model(&ModelSpec::new(Variant::Backward(1), seed)).unwrap();
        init_parameters(&mut net, seed);
        let cfg = TrainConfig {
            batch_size: 16,
            epochs: 30,
            learning_rate: 2e-3,
            seed,
            record_time: false,
        };
        let (best, history) = train(net, &train_set, &val_set, &cfg).unwrap();
        let noisy: Vec<&[f64]> = test_set.pairs.iter().map(|p| p.noisy.as_slice()).collect();
        let denoised = best.denoise_windows(&noisy, 16).unwrap();
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        let noisy_rmse = mean(
            test_set
                .pairs
                .iter()
                .map(|p| rmse(&p.clean, &p.noisy).unwrap())
                .collect(),
        );
        let denoised_rmse = mean(
            test_set
                .pairs
                .iter()
                .zip(&denoised)
                .map(|(p, d)| rmse(&p.clean, d).unwrap())
                .collect(),
        );
        ToyRun {
            history,
            noisy_rmse,
            denoised_rmse,
            elapsed: started.elapsed(),
        }
    })
}

fn c8_descent(run: &ToyRun) -> Outcome {
    let first = run.history.epochs[0].val_loss;
    let last = run.history.epochs.last().unwrap().val_loss;
    check(
        last < 0.5 * first && run.denoised_rmse < run.noisy_rmse && run.elapsed < Duration::from_secs(600),
        format!(
            "val MSE {first:.4} -> {last:.4} (ratio {:.3}); test RMSE noisy {:.4}, denoised {:.4}; {:.0} s",
            last / first,
            run.noisy_rmse,
            run.denoised_rmse,
            secs(run.elapsed)
        ),
    )
}

fn c9_ordering() -> Outcome {
    let started = Instant::now();
    let records = synthetic_records(10, 150.0, MITDB_FS, 9);
    let bank = synthetic_noise_bank(150 * 360, MITDB_FS, 9);
    let dataset = DatasetConfig {
        train_per_record: 6,
        val_per_record: 2,
        test_per_record: Some(2),
        exclude_train: Vec::new(),
        eval_snrs: vec![-10.0],
        ..DatasetConfig::default()
    };
    let cfg = AblationConfig {
        variants: vec![Variant::Fcn, Variant::Backward(1)],
        repetitions: 3,
        train: TrainConfig {
            batch_size: 16,
            epochs: 20,
            learning_rate: 2e-3,
            seed: 9,
            record_time: false,
        },
        eval_snrs: vec![-10.0],
        model: ModelSpec::new(Variant::Fcn, 0),
    };
    let report = with_mode(ExecMode::Sequential, || {
        run_ablation(
            &cfg,
            |rep| build_experiment_dataset(&dataset, &records, &bank, run_seed(9, rep)),
            |_| {},
        )
    });
    let report = match report {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let mean = |v: Variant| report.row(v).unwrap().cells[0].get(Metric::Rmse).mean;
    let (fcn, b1) = (mean(Variant::Fcn), mean(Variant::Backward(1)));
    let detail = format!(
        "RMSE at -10 dB over 3 seeds: B1 {b1:.4}, FCN {fcn:.4} (published 0.1811 vs 0.2104); {:.0} s",
        secs(started.elapsed())
    );
    if b1 <= fcn {
        Outcome::Pass(detail)
    } else {
        Outcome::Flag(format!("ordering inverted at reduced scale: {detail}"))
    }
}

fn c10_full_reproduction() -> Outcome {
    let Some(path) = std::env::var_os("WAE_REPRODUCTION_CONFIG").map(PathBuf::from) else {
        return Outcome::Skip("set WAE_REPRODUCTION_CONFIG to a files-backed config to run".into());
    };
    let result = (|| -> wavelet_ae::Result<Outcome> {
        let cfg = ExperimentConfig::load(&path)?;
        let (records, bank) = cfg.load_inputs()?;
        let dataset = cfg.dataset_config();
        let ablation = AblationConfig {
            variants: vec![Variant::Fcn, Variant::Backward(1)],
            repetitions: cfg.repetitions,
            train: TrainConfig {
                batch_size: cfg.batch_size,
                epochs: cfg.epochs,
                learning_rate: cfg.learning_rate,
                seed: cfg.seed,
                record_time: true,
            },
            eval_snrs: dataset.eval_snrs.clone(),
            model: cfg.model_spec(Variant::Fcn, cfg.seed),
        };
        let report = run_ablation(
            &ablation,
            |rep| build_experiment_dataset(&dataset, &records, &bank, run_seed(cfg.seed, rep)),
            |_| {},
        )?;
        let col = report
            .snrs
            .iter()
            .position(|&s| s == -10.0)
            .ok_or_else(|| wavelet_ae::Error::Config("eval_snrs must include -10".into()))?;
        let cell = |v: Variant, m: Metric| report.row(v).unwrap().cells[col].get(m).mean;
        let got = [
            cell(Variant::Fcn, Metric::Rmse),
            cell(Variant::Backward(1), Metric::Rmse),
            cell(Variant::Fcn, Metric::SnrImprovement),
            cell(Variant::Backward(1), Metric::SnrImprovement),
        ];
        let ok = (got[0] - 0.2104).abs() <= 0.02
            && (got[1] - 0.1811).abs() <= 0.02
            && (got[2] - 18.51).abs() <= 0.5
            && (got[3] - 19.82).abs() <= 0.5;
        Ok(check(
            ok,
            format!(
                "-10 dB: RMSE FCN {:.4} / B1 {:.4}, SNR improvement FCN {:.2} / B1 {:.2} dB",
                got[0], got[1], got[2], got[3]
            ),
        ))
    })();
    result.unwrap_or_else(|e| Outcome::Fail(e.to_string()))
}

fn c11_determinism(a: &ToyRun, b: &ToyRun) -> Outcome {
    let (x, y) = (a.history.to_csv(), b.history.to_csv());
    check(
        x == y,
        format!(
            "two seeded toy runs, history CSVs {} bytes, identical: {}",
            x.len(),
            x == y
        ),
    )
}

fn main() -> ExitCode {
    // `cargo test -- --list` and friends: nothing to enumerate
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failures = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let (tag, detail) = match o {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failures += 1;
                ("FAIL", d)
            }
            Outcome::Flag(d) => ("FLAG", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {n:>2} {tag} {name}: {detail}");
    };
    report(1, "perfect reconstruction", c1_perfect_reconstruction());
    report(2, "db6 filter bank", c2_db6_validity());
    report(3, "layer gradients", c3_gradients());
    report(4, "shape conformance", c4_shapes());
    report(5, "Adam trajectory", c5_adam());
    report(6, "SNR mixing", c6_mixing());
    report(7, "WFDB format 212", c7_wfdb());
    let first = toy_run(8);
    report(8, "toy denoising descent", c8_descent(&first));
    report(9, "variant ordering (soft)", c9_ordering());
    report(10, "full reproduction", c10_full_reproduction());
    let second = toy_run(8);
    report(11, "determinism", c11_determinism(&first, &second));
    if failures == 0 {
        println!("acceptance: all gated criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
