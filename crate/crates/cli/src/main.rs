use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use vowelprobe::convenc::{
    extract_activations, read_trace, trace_max_abs_diff, EncoderArch, WeightStore,
};
use vowelprobe::corpus::{load_corpus, SegmentCounts, VowelClass};
use vowelprobe::experiment::{
    emit_report, load_report, load_weights, run_experiment, run_mi, split_ids, train_sets,
    write_json, ExperimentConfig, ExperimentReport, TrainSettings,
};
use vowelprobe::features::{
    build_feature_sets, load_features, save_features, FeatureConfig, FeatureSetId,
};
use vowelprobe::prepared::{load_segments, save_segments, MANIFEST_FILE};
use vowelprobe::signal::decode_audio;
use vowelprobe::synth::{write_synthetic_corpus, AudioFormat, SynthCorpusConfig};
use vowelprobe::{Error, Result, Scalar};

/// Front/back vowel probing of MFCCs, formants and convolutional encoder layers.
#[derive(Parser, Debug)]
#[command(name = "vowelprobe", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. `-s folds=3`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Default)]
struct WeightArgs {
    /// Encoder weight container (.w2cv).
    #[arg(long, conflicts_with = "random_weights")]
    weights: Option<PathBuf>,
    /// Use seeded random encoder weights instead of a container.
    #[arg(long, value_name = "SEED")]
    random_weights: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corpus -> features -> grid search -> evaluation -> MI -> reports.
    Run {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Select and pad vowel segments, writing a segment manifest.
    Prepare {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Build every feature set from prepared segments.
    Features {
        /// Directory written by `prepare`, or its manifest file.
        #[arg(long)]
        segments: PathBuf,
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Grid search, refit and held-out evaluation on cached features.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Mutual information between MFCCs and every encoder layer.
    Mi {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Render tables and charts from a summary.json.
    Report {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write a synthetic corpus with the same layout as the real one.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        speakers: usize,
        #[arg(long, default_value_t = 6)]
        utterances: usize,
        #[arg(long, default_value_t = 10)]
        vowels: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Write NIST SPHERE audio instead of WAV.
        #[arg(long)]
        sphere: bool,
    },
    /// Write a seeded random weight container for the configured architecture.
    RandomWeights {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the encoder on one waveform against an exported activation trace.
    VerifyTrace {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn apply_weights(cfg: &mut ExperimentConfig, w: &WeightArgs) -> Result<()> {
    if let Some(p) = &w.weights {
        cfg.set("weights", &p.to_string_lossy())?;
    }
    if let Some(seed) = w.random_weights {
        cfg.set("weights_seed", &seed.to_string())?;
    }
    Ok(())
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn print_results(r: &ExperimentReport) {
    println!(
        "{:<16} {:>5} {:>10} {:>10}  best",
        "feature set", "dim", "cv", "test"
    );
    for s in &r.results {
        println!(
            "{:<16} {:>5} {:>10.4} {:>10.4}  {}",
            s.name, s.dim, s.cv_accuracy, s.test_accuracy, s.best
        );
    }
    if let Some(mi) = &r.mi {
        for l in &mi.per_layer {
            println!("MI layer {}: {:.4} nats", l.layer, l.mi_nats);
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    match &cli.cmd {
        Command::Run {
            corpus,
            weights,
            out,
        } => {
            if let Some(c) = corpus {
                cfg.corpus = Some(c.clone());
            }
            apply_weights(&mut cfg, weights)?;
            let report = run_experiment(&cfg, Some(out))?;
            let files = emit_report(&report, out)?;
            print_results(&report);
            info!("wrote {} report files to {}", files.len(), out.display());
        }
        Command::Prepare { corpus, out } => {
            let root = corpus
                .clone()
                .or(cfg.corpus.clone())
                .ok_or_else(|| Error::Config("no corpus directory given".into()))?;
            cfg.validate()?;
            let segs = load_corpus::<f32>(&root, cfg.partition, &cfg.rules)?;
            let counts = save_segments(&segs, out)?;
            println!("{} front, {} back segments", counts.front, counts.back);
        }
        Command::Features {
            segments,
            weights,
            out,
        } => {
            apply_weights(&mut cfg, weights)?;
            let source = cfg.weights.clone().ok_or_else(|| {
                Error::Config("no weights given (--weights or --random-weights)".into())
            })?;
            let manifest = if segments.is_dir() {
                segments.join(MANIFEST_FILE)
            } else {
                segments.clone()
            };
            let segs = load_segments::<Scalar>(&manifest)?;
            let store = load_weights(&source, &cfg.encoder_arch()?)?;
            let fcfg = FeatureConfig {
                pooling: cfg.pooling,
                ..FeatureConfig::default()
            };
            let bundle = build_feature_sets(&segs, &store, &fcfg)?;
            let m = save_features(&bundle, &source.describe(), out)?;
            for e in &m.sets {
                println!(
                    "{:<12} {:>6} rows {:>4} dims",
                    e.set.as_str(),
                    e.rows,
                    e.dim
                );
            }
        }
        Command::Train { features, out } => {
            cfg.validate()?;
            let (manifest, bundle) = load_features::<Scalar>(features, None)?;
            let reference = bundle
                .reference()
                .ok_or_else(|| Error::malformed(features, "no feature sets"))?;
            let split = split_ids(reference, cfg.test_fraction, cfg.seed)?;
            let settings = TrainSettings::from_config(&cfg);
            let results = train_sets(&bundle, &cfg.sets, &split, &settings)?;
            let mut segments = SegmentCounts::default();
            for c in &reference.classes {
                match c {
                    VowelClass::Front => segments.front += 1,
                    VowelClass::Back => segments.back += 1,
                }
            }
            let report = ExperimentReport {
                config: cfg.clone(),
                weights: manifest.weights.clone(),
                segments,
                split: split.summary,
                formant_failures: manifest.formant_failures.len(),
                grid_cells_total: results.iter().map(|r| r.cells_evaluated).sum(),
                fold_fits: results
                    .iter()
                    .map(|r| r.cells_evaluated * settings.folds)
                    .sum(),
                refits: results.len(),
                results,
                mi: None,
            };
            mkdir(out)?;
            emit_report(&report, out)?;
            print_results(&report);
        }
        Command::Mi { features, out } => {
            let mc = cfg.mi.clone().unwrap_or_default();
            let mut only: Vec<FeatureSetId> = (0..7).filter_map(FeatureSetId::layer).collect();
            only.push(FeatureSetId::Mfcc);
            let (_, bundle) = load_features::<Scalar>(features, Some(&only))?;
            let mi = run_mi(&bundle, &mc)?;
            mkdir(out)?;
            write_json(&out.join("mi.json"), &mi)?;
            for l in &mi.per_layer {
                println!(
                    "layer {}: {:.4} nats ({} pairs, {} samples)",
                    l.layer, l.mi_nats, l.pairs, l.samples
                );
            }
        }
        Command::Report { summary, out } => {
            let report = load_report(summary)?;
            mkdir(out)?;
            let mut stdout = std::io::stdout().lock();
            for f in emit_report(&report, out)? {
                let _ = writeln!(stdout, "{}", f.display());
            }
        }
        Command::Synth {
            out,
            speakers,
            utterances,
            vowels,
            seed,
            sphere,
        } => {
            let layout = SynthCorpusConfig {
                speakers: *speakers,
                utterances_per_speaker: *utterances,
                vowels_per_utterance: *vowels,
                seed: *seed,
                format: if *sphere {
                    AudioFormat::Sphere
                } else {
                    AudioFormat::Wav
                },
                ..SynthCorpusConfig::default()
            };
            let s = write_synthetic_corpus(out, &layout)?;
            println!(
                "{} utterances: {} front, {} back selectable segments, {} outside the window",
                s.utterances, s.front, s.back, s.out_of_window
            );
        }
        Command::RandomWeights { out, seed } => {
            let store = WeightStore::<f32>::random(&cfg.encoder_arch()?, *seed);
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                mkdir(dir)?;
            }
            fs::write(out, store.to_container()).map_err(|e| Error::io(out, e))?;
        }
        Command::VerifyTrace {
            weights,
            wav,
            trace,
            tol,
        } => {
            let arch: EncoderArch = cfg.encoder_arch()?;
            let read = |p: &Path| fs::read(p).map_err(|e| Error::io(p, e));
            let store = WeightStore::<f32>::load(&read(weights)?, &arch)?;
            let audio = decode_audio::<f32>(&read(wav)?)?;
            let acts = extract_activations(&store, &audio.samples)?;
            let reference = read_trace(&read(trace)?)?;
            let diff = trace_max_abs_diff(&acts, &reference)?;
            println!("max abs difference: {diff:.3e}");
            if diff > *tol {
                return Err(Error::malformed(
                    trace,
                    format!("difference {diff:.3e} exceeds {tol:e}"),
                ));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
