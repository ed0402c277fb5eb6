use clap::{Parser, Subcommand, ValueEnum};
use headmotion::conditioning::{synth_dataset, synth_speech, EmotionLabel, EyeState};
use headmotion::diffusion::{load_checkpoint, save_checkpoint, train, untrained_model, DenoiserConfig, MotionModel, TrainConfig};
use headmotion::motion::{default_template, pack_motion, probe_dim, ControlSpec, MotionFrame};
use headmotion::service::{
    generate_from_audio, load_config, motion_records, read_identity, read_wav, write_motion_file, Engine, Server,
    ServerConfig,
};
use headmotion::streaming::features::SAMPLE_RATE;
use headmotion::streaming::{
    run_pipeline, BenchSummary, HoldGenerator, ModelGenerator, MotionGenerator, Pacing, PipelineConfig, SessionInputs,
    SimulatedLatency, SourceConfig,
};
use headmotion::{Error, Result};
use log::info;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "headmotion", version, about = "Streaming audio-to-motion generation for talking heads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Online,
    Offline,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorKind {
    Model,
    Hold,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the synthetic corpus and write a checkpoint directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `epochs` from the config.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Generate a motion JSONL file from a 16 kHz WAV file.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        /// Canonical keypoints `{"points": [[x, y, z] x 21]}`; the template when omitted.
        #[arg(long)]
        identity: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        emotion: usize,
        #[arg(long, value_enum, default_value_t = Mode::Offline)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve sessions over TCP.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, env = "HEADMOTION_BIND")]
        bind: Option<String>,
        /// Per-step stage latencies `a,b,c` in ms, or `table3`.
        #[arg(long)]
        simulate_latency: Option<String>,
        /// Server TOML config; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        max_sessions: Option<usize>,
    },
    /// Stream synthetic speech through the pipeline and report RTF and FFD.
    Bench {
        /// Checkpoint to run; an untrained default-size model when omitted.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Per-step stage latencies `a,b,c` in ms, or `table3`.
        #[arg(long)]
        simulate: Option<String>,
        #[arg(long, default_value_t = 8.0)]
        seconds: f64,
        #[arg(long, value_enum, default_value_t = GeneratorKind::Model)]
        generator: GeneratorKind,
        #[arg(long, value_enum, default_value_t = Mode::Online)]
        mode: Mode,
        /// Feed audio as fast as the pipeline takes it instead of in real time.
        #[arg(long)]
        fast: bool,
        /// Timing-log JSONL output.
        #[arg(long, default_value = "timing.jsonl")]
        log: PathBuf,
        /// Also write the summary as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Offset one deformation dimension by ±eps and report which keypoints move.
    ProbeDim {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long)]
        identity: Option<PathBuf>,
        /// Full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HEADMOTION_LOG", "info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, out, epochs } => cmd_train(config.as_deref(), &out, epochs),
        Command::Generate { ckpt, audio, identity, steps, seed, emotion, mode, out } => {
            let model = Arc::new(open_checkpoint(&ckpt)?);
            let pcm = read_wav(&audio)?;
            let mut inputs = session_inputs(identity.as_deref())?;
            inputs.emotion = EmotionLabel::new(emotion)?;
            let cfg = PipelineConfig { steps, seed, ..pipeline_config(mode) };
            let run = generate_from_audio(model, &pcm, inputs, cfg)?;
            let records = motion_records(&run);
            write_motion_file(&out, &records)?;
            info!("wrote {} frames to {}", records.len(), out.display());
            Ok(())
        }
        Command::Serve { ckpt, bind, simulate_latency, config, max_sessions } => {
            let mut cfg: ServerConfig = match config {
                Some(p) => load_config(&p, &["simulate_latency"])?,
                None => ServerConfig::default(),
            };
            if let Some(b) = bind {
                cfg.bind = b;
            }
            if simulate_latency.is_some() {
                cfg.simulate_latency = simulate_latency;
            }
            if let Some(n) = max_sessions {
                cfg.max_sessions = n;
            }
            let server = Server::bind(Engine::new(open_checkpoint(&ckpt)?, cfg)?)?;
            info!("listening on {}", server.local_addr()?);
            server.run()
        }
        Command::Bench { ckpt, simulate, seconds, generator, mode, fast, log, summary } => {
            cmd_bench(ckpt.as_deref(), simulate.as_deref(), seconds, generator, mode, fast, &log, summary.as_deref())
        }
        Command::ProbeDim { dim, eps, identity, out } => {
            let c = match identity {
                Some(p) => read_identity(&p)?,
                None => default_template(),
            };
            let report = probe_dim(&c, &MotionFrame::default(), dim, eps)?;
            println!("dim {dim} -> keypoint {} ({}) axis {}", report.keypoint, report.keypoint_name, ["x", "y", "z"][report.axis]);
            for s in &report.snapshots {
                let [x, y] = s.projected[report.keypoint];
                println!("offset {:+.4}  keypoint {} at ({x:+.5}, {y:+.5})", s.offset, report.keypoint);
            }
            for d in &report.moved {
                println!("offset {:+.4} moved keypoint {} axis {} by {:+.6}", d.offset, d.keypoint, d.axis, d.delta);
            }
            println!("isolated: {}", report.isolated(1e-9));
            if let Some(p) = out {
                std::fs::write(&p, serde_json::to_vec_pretty(&report)?)?;
            }
            Ok(())
        }
    }
}

fn open_checkpoint(dir: &Path) -> Result<MotionModel> {
    if !dir.exists() {
        return Err(Error::Checkpoint(format!("checkpoint {} does not exist", dir.display())));
    }
    load_checkpoint(dir)
}

fn pipeline_config(mode: Mode) -> PipelineConfig {
    match mode {
        Mode::Online => PipelineConfig::online(),
        Mode::Offline => PipelineConfig::offline(),
    }
}

fn session_inputs(identity: Option<&Path>) -> Result<SessionInputs> {
    Ok(SessionInputs {
        c_ref: identity.map(read_identity).transpose()?.unwrap_or_else(default_template),
        m_ref: pack_motion(&MotionFrame::default())?,
        emotion: EmotionLabel::new(0)?,
        eyes: EyeState::default(),
        control: ControlSpec::default(),
    })
}

fn cmd_train(config: Option<&Path>, out: &Path, epochs: Option<usize>) -> Result<()> {
    let mut cfg: TrainConfig = match config {
        Some(p) => load_config(p, &[])?,
        None => TrainConfig::default(),
    };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let clips = synth_dataset(cfg.seed, cfg.n_clips, cfg.clip_len)?;
    info!("training on {} synthetic clips for {} epochs", clips.len(), cfg.epochs);
    let outcome = train(&clips, &cfg, |m| {
        info!("epoch {:>3}  train {:.4}  val {:.4}  {:.1}s", m.epoch, m.train_loss, m.val_grouped_mse, m.seconds)
    })?;
    save_checkpoint(&outcome.model, out)?;
    let mut log = BufWriter::new(File::create(out.join("metrics.jsonl"))?);
    for m in &outcome.log {
        serde_json::to_writer(&mut log, m)?;
        log.write_all(b"\n")?;
    }
    log.flush()?;
    let ratio = outcome.last().val_grouped_mse / outcome.baseline().val_grouped_mse;
    println!("held-out grouped mse {:.4} ({:.3} of untrained)", outcome.last().val_grouped_mse, ratio);
    println!("checkpoint written to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    ckpt: Option<&Path>,
    simulate: Option<&str>,
    seconds: f64,
    kind: GeneratorKind,
    mode: Mode,
    fast: bool,
    log: &Path,
    summary: Option<&Path>,
) -> Result<()> {
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(Error::Config(format!("seconds must be positive, got {seconds}")));
    }
    let generator: Box<dyn MotionGenerator> = match kind {
        GeneratorKind::Hold => Box::new(HoldGenerator::default()),
        GeneratorKind::Model => {
            let model = match ckpt {
                Some(p) => open_checkpoint(p)?,
                None => untrained_model(DenoiserConfig::default(), 1)?,
            };
            Box::new(ModelGenerator::new(Arc::new(model)))
        }
    };
    let cfg = PipelineConfig { latency: simulate.map(SimulatedLatency::parse).transpose()?, ..pipeline_config(mode) };
    let pacing = if fast { Pacing::AsFastAsPossible } else { Pacing::Realtime };
    let audio = synth_speech(11, (seconds * SAMPLE_RATE as f64) as usize);
    let run = run_pipeline(&audio, SourceConfig { pacing, ..SourceConfig::default() }, generator, session_inputs(None)?, cfg, vec![])?;
    run.timings.write_jsonl(BufWriter::new(File::create(log)?))?;
    let s = BenchSummary::from_timings(&run.timings)?;
    print!("{}", s.table());
    println!("timing log written to {}", log.display());
    if let Some(p) = summary {
        std::fs::write(p, serde_json::to_vec_pretty(&s)?)?;
    }
    Ok(())
}
