use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use wavelet_ae::architecture::{build_model, init_parameters, Network, Variant};
use wavelet_ae::config::{DataSource, ExperimentConfig};
use wavelet_ae::dataset::{
    build_experiment_dataset, read_manifest, read_signal_file, write_manifest, write_signal_file,
    Manifest, NormalizationParams, Role, SignalFormat, MITDB_FS,
};
use wavelet_ae::evaluation::{decomposition_report, evaluate_model, MetricsReport};
use wavelet_ae::training::{
    run_ablation, run_seed, train_observed, AblationConfig, AblationEvent, EpochRecord,
    TrainConfig, TrainHistory,
};

use crate::Run;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn manifest_path(run: &Run, flag: &Option<PathBuf>) -> Result<PathBuf> {
    let path = flag
        .clone()
        .or_else(|| run.config.manifest.clone())
        .context("no manifest given (use --manifest or the 'manifest' config key)")?;
    ensure!(path.is_file(), "manifest not found: {}", path.display());
    Ok(path)
}

fn epoch_line(label: &str, e: &EpochRecord) -> String {
    format!(
        "{label} epoch {:>4}  train {:.6}  val {:.6}",
        e.epoch + 1,
        e.train_loss,
        e.val_loss
    )
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Directory holding the ECG records
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Comma-separated record names
    #[arg(long)]
    records: Option<String>,
    /// Directory holding the bw/em/ma noise records (default: --data-dir)
    #[arg(long)]
    noise_dir: Option<PathBuf>,
    /// Generate this many synthetic records instead of reading files
    #[arg(long)]
    synthetic: Option<usize>,
}

pub fn prepare(run: &Run, a: PrepareArgs) -> Result<()> {
    let mut cfg = run.config.clone();
    if let Some(d) = a.data_dir {
        cfg.data_dir = Some(d);
        cfg.source = DataSource::Files;
    }
    if let Some(r) = &a.records {
        cfg.set("records", r)?;
    }
    if let Some(d) = a.noise_dir {
        cfg.noise_dir = Some(d);
    }
    if let Some(n) = a.synthetic {
        cfg.source = DataSource::Synthetic;
        cfg.synthetic_records = n;
    }
    cfg.validate()?;
    let (records, bank) = cfg.load_inputs()?;
    run.log(format!("loaded {} records", records.len()));
    let ds = cfg.dataset_config();
    let data = build_experiment_dataset(&ds, &records, &bank, cfg.seed)?;
    create_dir(&run.dir)?;
    let path = write_manifest(&run.dir, cfg.seed, &ds, &data)?;
    write(&run.dir.join("config.txt"), cfg.to_kv())?;
    run.log(format!(
        "train {} / validation {} / test {} pairs",
        data.train.len(),
        data.validation.len(),
        data.test.len()
    ));
    println!("{}", path.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Manifest written by `prepare`
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// fcn, forward, backward or all
    #[arg(long)]
    variant: Option<String>,
    /// Number of wavelet stages for forward/backward
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

fn train_config(cfg: &ExperimentConfig, deterministic: bool) -> TrainConfig {
    TrainConfig {
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        record_time: !deterministic,
    }
}

pub fn train(run: &Run, a: TrainArgs) -> Result<()> {
    let mut cfg = run.config.clone();
    if let Some(v) = &a.variant {
        cfg.set("variant", v)?;
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    let path = manifest_path(run, &a.manifest)?;
    let variant = cfg.model_variant()?;
    cfg.validate()?;
    let (m, data) = read_manifest(&path)?;
    let mut spec = cfg.model_spec(variant, cfg.seed);
    spec.input_length = m.dataset.window;
    let mut net = build_model(&spec)?;
    init_parameters(&mut net, cfg.seed);
    let tc = train_config(&cfg, run.deterministic);
    run.log(format!(
        "training {} ({} parameters) on {} pairs for {} epochs",
        variant.label(),
        net.parameter_count(),
        data.train.len(),
        tc.epochs
    ));
    create_dir(&run.dir)?;
    let label = variant.label();
    let (best, history) = train_observed(net, &data.train, &data.validation, &tc, |e| {
        run.log(epoch_line(&label, e))
    })?;
    best.save(&run.dir.join("checkpoint.wae"))?;
    write(&run.dir.join("history.csv"), history.to_csv())?;
    write(&run.dir.join("model.txt"), best.describe_kv())?;
    write(&run.dir.join("config.txt"), cfg.to_kv())?;
    run.log(format!(
        "best epoch {} (validation loss {:.6})",
        history.best_epoch + 1,
        history.best_val_loss()
    ));
    println!("{}", run.dir.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Signal file (.csv, .f32 or .hea)
    #[arg(long)]
    input: PathBuf,
    /// Output file; the format follows its extension (default: input format)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write windows.csv with every window's input and output
    #[arg(long)]
    windows_csv: bool,
    /// Feed samples as they are instead of min-max scaling the whole input
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, default_value_t = 32)]
    batch: usize,
}

/// Splits `x` into `width`-sample windows. A trailing partial window is
/// completed by mirroring the samples before the end (`x[n-2], x[n-3], ...`).
pub fn tile(x: &[f64], width: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut out: Vec<Vec<f64>> = x.chunks_exact(width).map(<[f64]>::to_vec).collect();
    let rest = n % width;
    if rest > 0 {
        let mut w = x[n - rest..].to_vec();
        w.extend((0..width - rest).map(|i| x[n - 2 - i]));
        out.push(w);
    }
    out
}

pub fn denoise(run: &Run, a: DenoiseArgs) -> Result<()> {
    let net = Network::load(&a.checkpoint)
        .with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let width = net.spec.input_length;
    let mut channels = read_signal_file(&a.input)?;
    let record = channels.swap_remove(0);
    let x = &record.samples;
    ensure!(
        x.len() >= width,
        "{}: {} samples, need at least {width}",
        a.input.display(),
        x.len()
    );
    let norm = if a.no_normalize {
        NormalizationParams { min: 0.0, max: 1.0 }
    } else {
        NormalizationParams::fit(std::slice::from_ref(x))?
    };
    let windows = tile(&norm.normalize(x), width);
    let outputs = net.denoise_windows(&windows, a.batch)?;
    let mut y: Vec<f64> = outputs.iter().flatten().copied().collect();
    y.truncate(x.len());
    let y = norm.denormalize(&y);

    create_dir(&run.dir)?;
    let out = match a.output {
        Some(p) => p,
        None => {
            let stem = a
                .input
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("signal");
            let ext = a
                .input
                .extension()
                .and_then(|s| s.to_str())
                .unwrap_or("csv");
            run.dir.join(format!("{stem}_denoised.{ext}"))
        }
    };
    let template =
        (SignalFormat::from_path(&a.input)? == SignalFormat::Wfdb).then_some(a.input.as_path());
    write_signal_file(&out, &y, record.sampling_rate_hz, template)?;
    if a.windows_csv {
        let mut s = String::from("window,index,input,output\n");
        for (w, (inp, outp)) in windows.iter().zip(&outputs).enumerate() {
            for (i, (u, v)) in inp.iter().zip(outp).enumerate() {
                let _ = writeln!(s, "{w},{i},{u},{v}");
            }
        }
        write(&run.dir.join("windows.csv"), s)?;
    }
    run.log(format!(
        "denoised {} samples in {} windows",
        x.len(),
        windows.len()
    ));
    println!("{}", out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Checkpoints to evaluate, one report row each
    #[arg(long, required = true, num_args = 1..)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    batch: usize,
}

pub fn evaluate(run: &Run, a: EvaluateArgs) -> Result<()> {
    let path = manifest_path(run, &a.manifest)?;
    let m = Manifest::load(&path)?;
    let test = m.load_pairs(&path, Role::Test)?;
    let mut report = MetricsReport::new(&m.dataset.eval_snrs);
    for (i, ck) in a.checkpoint.iter().enumerate() {
        let net = Network::load(ck).with_context(|| format!("loading {}", ck.display()))?;
        ensure!(
            net.spec.input_length == m.dataset.window,
            "{}: model input length {} differs from the manifest window {}",
            ck.display(),
            net.spec.input_length,
            m.dataset.window
        );
        run.log(format!(
            "evaluating {} ({})",
            ck.display(),
            net.spec.variant.label()
        ));
        let metrics = evaluate_model(&net, &test, &m.dataset.eval_snrs, a.batch)?;
        report.add_row(i + 1, net.spec.variant, &[metrics])?;
    }
    create_dir(&run.dir)?;
    write(&run.dir.join("report.csv"), report.to_csv())?;
    write(&run.dir.join("report.txt"), report.to_table())?;
    println!("{}", run.dir.display());
    Ok(())
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Clean,
    Noisy,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    /// Signal file to take the window from
    #[arg(long, conflicts_with = "manifest")]
    input: Option<PathBuf>,
    /// Take a prepared test window instead
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Test pair index (with --manifest)
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Which side of the pair (with --manifest)
    #[arg(long, value_enum, default_value_t = Which::Clean)]
    which: Which,
    /// First sample (with --input)
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long, default_value_t = 1024)]
    length: usize,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Also write bands.svg
    #[arg(long)]
    svg: bool,
}

pub fn decompose(run: &Run, a: DecomposeArgs) -> Result<()> {
    let (signal, fs) = match (&a.input, &a.manifest) {
        (Some(p), _) => {
            let r = read_signal_file(p)?.swap_remove(0);
            let end = a.start + a.length;
            ensure!(
                end <= r.samples.len(),
                "{}: window {}..{end} exceeds {} samples",
                p.display(),
                a.start,
                r.samples.len()
            );
            (r.samples[a.start..end].to_vec(), r.sampling_rate_hz)
        }
        (None, Some(_)) => {
            let path = manifest_path(run, &a.manifest)?;
            let m = Manifest::load(&path)?;
            let test = m.load_pairs(&path, Role::Test)?;
            let pair = test.pairs.get(a.index).with_context(|| {
                format!("test pair {} out of range ({} pairs)", a.index, test.len())
            })?;
            let w = match a.which {
                Which::Clean => pair.clean.clone(),
                Which::Noisy => pair.noisy.clone(),
            };
            (w, MITDB_FS)
        }
        (None, None) => bail!("decompose needs --input or --manifest"),
    };
    let report = decomposition_report(&signal, a.levels, fs)?;
    let files = report.write(&run.dir, a.svg)?;
    for b in &report.bands {
        run.log(format!(
            "{}: {:.2}-{:.2} Hz, {} coefficients",
            b.name,
            b.low_hz,
            b.high_hz,
            b.coefficients.len()
        ));
    }
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct DescribeArgs {
    /// fcn, forward, backward or all
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Describe a saved model instead
    #[arg(long, conflicts_with_all = ["variant", "k"])]
    checkpoint: Option<PathBuf>,
}

pub fn describe(run: &Run, a: DescribeArgs) -> Result<()> {
    let net = match &a.checkpoint {
        Some(p) => Network::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let family = a
                .variant
                .clone()
                .unwrap_or_else(|| run.config.variant.clone());
            let k = a.k.unwrap_or(run.config.k);
            let v = Variant::parse(&family, k)?;
            build_model(&run.config.model_spec(v, run.config.seed))?
        }
    };
    create_dir(&run.dir)?;
    write(&run.dir.join("describe.txt"), net.describe())?;
    write(&run.dir.join("trace.txt"), net.describe_kv())?;
    print!("{}", net.describe());
    Ok(())
}

#[derive(Args, Debug)]
pub struct AblationArgs {
    /// Reuse one prepared dataset for every repetition instead of preparing
    /// a fresh one per repetition from the config
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated variant labels (FCN, F1..F4, B1..B4, ALL)
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

pub fn ablation(run: &Run, a: AblationArgs) -> Result<()> {
    let mut cfg = run.config.clone();
    if let Some(v) = &a.variants {
        cfg.set("variants", v)?;
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let fixed = match &a.manifest {
        Some(_) => Some(read_manifest(&manifest_path(run, &a.manifest)?)?),
        None => None,
    };
    let inputs = match fixed {
        Some(_) => None,
        None => Some(cfg.load_inputs()?),
    };
    let ds = cfg.dataset_config();
    let window = fixed.as_ref().map_or(ds.window, |(m, _)| m.dataset.window);
    let eval_snrs = fixed.as_ref().map_or_else(
        || ds.eval_snrs.clone(),
        |(m, _)| m.dataset.eval_snrs.clone(),
    );
    let mut model = cfg.model_spec(Variant::Fcn, cfg.seed);
    model.input_length = window;
    let ab = AblationConfig {
        variants: cfg.variants.clone(),
        repetitions: cfg.repetitions,
        train: train_config(&cfg, run.deterministic),
        eval_snrs,
        model,
    };
    create_dir(&run.dir)?;
    let hist_dir = run.dir.join("histories");
    create_dir(&hist_dir)?;
    let mut histories: BTreeMap<(usize, String), Vec<EpochRecord>> = BTreeMap::new();
    let report = run_ablation(
        &ab,
        |rep| {
            if let Some((_, d)) = &fixed {
                return Ok(d.clone());
            }
            let (records, bank) = inputs.as_ref().expect("inputs loaded when no manifest");
            run.log(format!("repetition {}: preparing data", rep + 1));
            build_experiment_dataset(&ds, records, bank, run_seed(cfg.seed, rep))
        },
        |ev| match ev {
            AblationEvent::RunStarted {
                variant,
                repetition,
            } => run.log(format!(
                "repetition {} variant {}",
                repetition + 1,
                variant.label()
            )),
            AblationEvent::Epoch {
                variant,
                repetition,
                record,
            } => {
                run.log(epoch_line(&variant.label(), record));
                histories
                    .entry((repetition, variant.label()))
                    .or_default()
                    .push(*record);
            }
            AblationEvent::RunFinished {
                variant, metrics, ..
            } => {
                if let Some(m) = metrics.first() {
                    run.log(format!(
                        "{} at {} dB: RMSE {:.4}",
                        variant.label(),
                        m.snr_db,
                        m.rmse
                    ));
                }
            }
        },
    )?;
    for ((rep, label), epochs) in histories {
        let best_epoch = epochs
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, e)| {
                if e.val_loss < b.1 {
                    (i, e.val_loss)
                } else {
                    b
                }
            })
            .0;
        let h = TrainHistory { epochs, best_epoch };
        write(
            &hist_dir.join(format!("{label}-r{}.csv", rep + 1)),
            h.to_csv(),
        )?;
    }
    write(&run.dir.join("report.csv"), report.to_csv())?;
    write(&run.dir.join("report.txt"), report.to_table())?;
    write(&run.dir.join("config.txt"), cfg.to_kv())?;
    println!("{}", run.dir.display());
    Ok(())
}
