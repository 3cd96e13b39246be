use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamspeech::beamformer::BeamformerKind;
use beamspeech::config::RunConfig;
use beamspeech::corpus::{self, Split};
use beamspeech::eval::{self, Hypothesis};
use beamspeech::model::Model;
use beamspeech::recognizer::vocab::Vocabulary;
use beamspeech::signal::{self, istft, write_spectrogram_csv, write_spectrogram_pgm, SampleFormat, Waveform};
use beamspeech::train::{self, Example};
use beamspeech::{Error, ParameterStore, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "beamspeech", version, about = "Multichannel end-to-end speech recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Random seed; takes precedence over the config file and BEAMSPEECH_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a multichannel corpus.
    Corpus {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a corpus.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// noisy, filter_net or mask_mvdr.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Pin the MVDR reference to this 0-based channel.
        #[arg(long)]
        mask_ref_fixed: Option<usize>,
    },
    /// Enhance a multichannel recording and dump spectrograms.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a corpus split into a hypothesis file.
    Recognize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "eval")]
        split: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Character error rates of hypothesis files against a split.
    Score {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "eval")]
        split: String,
        /// `NAME=PATH` or `PATH` (named after the file stem); repeatable.
        #[arg(long = "hyps", required = true)]
        hyps: Vec<String>,
        /// Also print per-utterance scores.
        #[arg(long)]
        details: bool,
    },
    /// Teacher-forced accuracy for channel orders and subsets.
    Channels {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "dev")]
        split: String,
        /// 1-based channel list such as `2_1`; repeatable.
        #[arg(long = "spec", required = true)]
        specs: Vec<String>,
    },
    /// Describe a checkpoint and, given audio, its beamformer's decisions.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_model(checkpoint: &Path) -> Result<(Model, ParameterStore)> {
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    let cfg = RunConfig::load(&dir.join(train::CONFIG_FILE))?;
    let vocab = Vocabulary::load(&dir.join(train::VOCAB_FILE))?;
    let model = Model::new(cfg, vocab)?;
    let store = ParameterStore::load(checkpoint)?;
    Ok((model, store))
}

fn load_examples(model: &Model, data: &Path, split: &str) -> Result<Vec<Example>> {
    let vocab = Vocabulary::load(&data.join(corpus::VOCAB_FILE))?;
    if vocab != model.vocab {
        return Err(Error::Format("corpus vocabulary differs from the model's".into()));
    }
    train::prepare(model, &corpus::load_split(data, Split::parse(split)?)?)
}

fn cmd_corpus(args: &ConfigArgs, out: &Path) -> Result<()> {
    let mut cfg = load_config(args)?;
    if args.seed.is_some() || std::env::var(beamspeech::config::SEED_ENV).is_ok() {
        cfg.corpus.seed = cfg.seed;
    }
    corpus::build_corpus(&cfg.corpus, out)?;
    for split in Split::ALL {
        println!("{}\t{}", split.name(), cfg.corpus.size(split));
    }
    Ok(())
}

fn cmd_train(args: &ConfigArgs, data: &Path, out: &Path, variant: Option<&str>, epochs: Option<usize>, fixed: Option<usize>) -> Result<()> {
    let mut cfg = load_config(args)?;
    cfg.corpus = corpus::load_corpus_config(data)?;
    if let Some(v) = variant {
        cfg.variant = BeamformerKind::parse(v)?;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if fixed.is_some() {
        cfg.mask_ref_fixed = fixed;
    }
    let vocab = Vocabulary::load(&data.join(corpus::VOCAB_FILE))?;
    let model = Model::new(cfg, vocab)?;
    let train_set = train::prepare(&model, &corpus::load_split(data, Split::Train)?)?;
    let dev_set = train::prepare(&model, &corpus::load_split(data, Split::Dev)?)?;
    let mut store = model.init_params(&mut ChaCha8Rng::seed_from_u64(model.config.seed))?;
    let norm = model.fit_normalizer(train_set.iter().map(|e| &e.stft))?;
    model.set_normalizer(&mut store, &norm)?;
    let report = train::train(&model, &mut store, &train_set, &dev_set, out, |m| {
        eprintln!(
            "epoch {:>2}  train {}  dev {:.4}  acc {:.4}  eps {:.1e}",
            m.epoch,
            m.train_loss.map_or("-".into(), |v| format!("{v:.4}")),
            m.dev_loss,
            m.dev_accuracy,
            m.eps
        );
    })?;
    println!("{}", report.last_checkpoint.display());
    Ok(())
}

fn cmd_enhance(checkpoint: &Path, input: &Path, out: &Path) -> Result<()> {
    let (model, store) = load_model(checkpoint)?;
    let audio = signal::read_audio(input)?;
    let x = model.analyze(&audio)?;
    let enhanced = model.enhance(&store, &x)?;
    fs::create_dir_all(out)?;
    for c in 0..x.channels() {
        let ch = x.channel(c);
        write_spectrogram_pgm(&out.join(format!("input_ch{c}.pgm")), &ch)?;
        write_spectrogram_csv(&out.join(format!("input_ch{c}.csv")), &ch)?;
    }
    write_spectrogram_pgm(&out.join("enhanced.pgm"), &enhanced)?;
    write_spectrogram_csv(&out.join("enhanced.csv"), &enhanced)?;
    let mut samples = istft(&enhanced, &model.stft)?;
    samples.resize(audio.len(), 0.0);
    let wav = Waveform::mono(audio.sample_rate, samples)?;
    signal::write_wav(&out.join("enhanced.wav"), &wav, SampleFormat::Float32)?;
    println!("{}", out.join("enhanced.wav").display());
    Ok(())
}

fn cmd_recognize(checkpoint: &Path, data: &Path, split: &str, out: Option<&Path>) -> Result<()> {
    let (model, store) = load_model(checkpoint)?;
    let examples = load_examples(&model, data, split)?;
    let hyps = eval::recognize_all(&model, &store, &examples)?;
    let text = eval::render_hypotheses(&hyps);
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_score(data: &Path, split: &str, files: &[String], details: bool) -> Result<()> {
    let entries = corpus::parse_manifest(&fs::read_to_string(corpus::manifest_path(data, Split::parse(split)?))?)?;
    let refs: Vec<(String, String)> = entries.into_iter().map(|e| (e.id, e.transcript)).collect();
    let mut rows = Vec::new();
    for spec in files {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().map_or(spec.clone(), |s| s.to_string_lossy().into_owned());
                (stem, p)
            }
        };
        let hyps: Vec<Hypothesis> = eval::parse_hypotheses(&fs::read_to_string(&path)?)?;
        let report = eval::score(&hyps, &refs)?;
        if details {
            println!("# {name}");
            print!("{}", report.render_details());
        }
        rows.push((name, split.to_string(), report.cer()));
    }
    print!("{}", eval::render_cer_table(&rows));
    Ok(())
}

fn cmd_channels(checkpoint: &Path, data: &Path, split: &str, specs: &[String]) -> Result<()> {
    let (model, store) = load_model(checkpoint)?;
    let orders = specs.iter().map(|s| eval::parse_channel_spec(s)).collect::<Result<Vec<_>>>()?;
    if model.kind() != BeamformerKind::MaskMvdr {
        return Err(Error::Unsupported(format!(
            "channel configurations need a mask_mvdr model, this one is {}",
            model.kind().name()
        )));
    }
    let examples = load_examples(&model, data, split)?;
    println!("channels\taccuracy");
    for (spec, order) in specs.iter().zip(&orders) {
        let acc = eval::channel_accuracy(&model, &store, &examples, order)?;
        println!("{spec}\t{acc:.4}");
    }
    Ok(())
}

fn cmd_inspect(checkpoint: &Path, input: Option<&Path>) -> Result<()> {
    let (model, store) = load_model(checkpoint)?;
    let cfg = &model.config;
    println!("variant\t{}", cfg.variant.name());
    println!("profile\t{}", cfg.profile.name());
    println!("stft\t{} Hz, frame {}, shift {}, fft {}, F={}", cfg.sample_rate, cfg.frame_len, cfg.frame_shift, cfg.fft_size, model.stft.num_bins());
    println!("vocabulary\t{} tokens", model.vocab.len());
    println!("parameters\t{} tensors, {} scalars", store.len(), store.num_scalars());
    for name in store.names() {
        let t = store.get(name).expect("listed name");
        println!("  {name}\t{:?}", t.shape());
    }
    if let Some(path) = input {
        let audio = signal::read_audio(path)?;
        let x = model.analyze(&audio)?;
        let mut g = beamspeech::Graph::with_params(&store);
        let xv = g.complex_leaf(&x.coeffs);
        let enh = beamspeech::beamformer::enhance(&mut g, &model.beamformer, xv)?;
        println!("input\t{} channels, {} frames", x.channels(), x.frames());
        if let Some(m) = enh.mvdr {
            let u = g.value(m.reference).data().to_vec();
            let fmt: Vec<String> = u.iter().map(|v| format!("{v:.4}")).collect();
            println!("reference\t{}", fmt.join(" "));
            let mean = |v| g.value(v).data().iter().sum::<f64>() / g.value(v).len() as f64;
            println!("mean speech mask\t{:.4}", mean(m.speech_mask));
            println!("mean noise mask\t{:.4}", mean(m.noise_mask));
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::NonFinite(_) | Error::Singular { .. } | Error::DegenerateTrace { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Corpus { cfg, out } => cmd_corpus(cfg, out),
        Command::Train {
            cfg,
            data,
            out,
            variant,
            epochs,
            mask_ref_fixed,
        } => cmd_train(cfg, data, out, variant.as_deref(), *epochs, *mask_ref_fixed),
        Command::Enhance { checkpoint, input, out } => cmd_enhance(checkpoint, input, out),
        Command::Recognize { checkpoint, data, split, out } => cmd_recognize(checkpoint, data, split, out.as_deref()),
        Command::Score { data, split, hyps, details } => cmd_score(data, split, hyps, *details),
        Command::Channels { checkpoint, data, split, specs } => cmd_channels(checkpoint, data, split, specs),
        Command::Inspect { checkpoint, input } => cmd_inspect(checkpoint, input.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
