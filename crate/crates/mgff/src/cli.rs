//! Argument parsing and subcommand dispatch for the `mgff` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mgff_core::complexity::{count_flops, count_params, ComplexityReport};
use mgff_core::scoring::{format_score_dump, parse_score_dump, parse_trials, ScoreReport};
use mgff_core::train::TrainConfig;
use mgff_core::{Ablation, MgffTdnn, ModelConfig};

use crate::error::{Context, Error, Result};
use crate::fbank::FbankExtractor;
use crate::pipeline::{embed_file, score_trials, write_embedding};
use crate::report::{complexity_json, complexity_table, score_summary};
use crate::synth::{render_utterance, speaker_signatures, utterance_seed, SyntheticConfig};
use crate::toy::{self, ToyConfig};
use crate::wav::write_wav;
use crate::weights::{load_model, save_checkpoint, save_model, OptimizerState};

#[derive(Debug, Parser)]
#[command(
    name = "mgff",
    version,
    about = "Speaker embeddings with a multi-granularity TDNN"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the embedding of one WAV file as little-endian f32 values
    Embed {
        /// 16 kHz mono 16-bit PCM input
        wav: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trial list by cosine similarity and write the score dump
    ScoreTrials {
        /// Lines of "<0|1> <enroll.wav> <test.wav>"
        trials: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory the trial paths are relative to [default: the trial file's directory]
        #[arg(long)]
        root: Option<PathBuf>,
        /// Worker threads for embedding extraction [default: available cores]
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print EER and minDCF (p_target = 0.01) of a score dump
    Eval { scores: PathBuf },
    /// Print the per-layer parameter count
    CountParams {
        #[command(flatten)]
        arch: ArchArgs,
        /// Also write the report as JSON
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Print per-layer parameters, MACs and auxiliary FLOPs
    CountFlops {
        /// Input length in frames
        #[arg(long)]
        frames: usize,
        #[command(flatten)]
        arch: ArchArgs,
        /// Also write the report as JSON
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Train on a synthetic corpus and write a checkpoint
    TrainToy {
        #[arg(long, default_value_t = 10)]
        speakers: usize,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Utterances generated per speaker
        #[arg(long, default_value_t = 20)]
        utterances: usize,
        /// Utterances per speaker held out for the cosine check
        #[arg(long, default_value_t = 4)]
        held_out: usize,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[arg(long, default_value_t = 298)]
        crop_frames: usize,
        /// Warmup steps [default: a thirtieth of --steps]
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        config: Preset,
        /// Checkpoint path; optimizer state goes to <FILE>.opt
        #[arg(long, value_name = "FILE", default_value = "toy.mgff")]
        out: PathBuf,
        /// Write the "step lr loss" log here instead of stdout
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
    },
    /// Write a freshly initialised model
    InitModel {
        #[command(flatten)]
        arch: ArchArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render synthetic speakers to WAV files plus a trial list
    Synth {
        #[arg(long, default_value_t = 4)]
        speakers: usize,
        #[arg(long, default_value_t = 3)]
        utterances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seconds per utterance
        #[arg(long, default_value_t = 3.0)]
        duration: f64,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Full,
    Desk,
    Micro,
}

impl Preset {
    pub fn config(self) -> ModelConfig {
        match self {
            Preset::Full => ModelConfig::full(),
            Preset::Desk => ModelConfig::desk_scale(),
            Preset::Micro => ModelConfig::micro(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblationArg {
    Dsm,
    Plp,
    Tdnn,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Dsm => Ablation::Dsm,
            AblationArg::Plp => Ablation::Plp,
            AblationArg::Tdnn => Ablation::Tdnn,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ArchArgs {
    /// Network size
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub config: Preset,
    /// Remove one component
    #[arg(long, value_enum)]
    pub ablation: Option<AblationArg>,
}

impl ArchArgs {
    pub fn model_config(&self) -> ModelConfig {
        let cfg = self.config.config();
        match self.ablation {
            Some(a) => cfg.with_ablation(a.into()),
            None => cfg,
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).in_file(path)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).in_file(path)
}

fn emit_report(out: &mut dyn Write, report: &ComplexityReport, json: Option<&Path>) -> Result<()> {
    out.write_all(complexity_table(report).as_bytes())?;
    if let Some(path) = json {
        write_file(path, complexity_json(report).as_bytes())?;
    }
    Ok(())
}

/// Executes one parsed command, writing its normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Embed {
            wav,
            model,
            out: dest,
        } => {
            let model = load_model(&model)?;
            let e = embed_file(&model, &FbankExtractor::new(), &wav)?;
            let mut bytes = Vec::with_capacity(4 * e.dim());
            write_embedding(&mut bytes, &e)?;
            write_file(&dest, &bytes)?;
            writeln!(
                out,
                "wrote {}-dimensional embedding to {}",
                e.dim(),
                dest.display()
            )?;
        }
        Command::ScoreTrials {
            trials,
            model,
            out: dest,
            root,
            threads,
        } => {
            let list = parse_trials(&read_text(&trials)?).in_file(&trials)?;
            let model = load_model(&model)?;
            let root =
                root.unwrap_or_else(|| trials.parent().map(Path::to_path_buf).unwrap_or_default());
            let threads = threads
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let scored = score_trials(&model, &list, &root, threads)?;
            write_file(&dest, format_score_dump(&scored).as_bytes())?;
            writeln!(
                out,
                "scored {} trials into {}",
                scored.len(),
                dest.display()
            )?;
        }
        Command::Eval { scores } => {
            let dump = parse_score_dump(&read_text(&scores)?).in_file(&scores)?;
            let report = ScoreReport::from_trials(&dump).in_file(&scores)?;
            out.write_all(score_summary(&report).as_bytes())?;
        }
        Command::CountParams { arch, json } => {
            emit_report(out, &count_params(&arch.model_config())?, json.as_deref())?;
        }
        Command::CountFlops { frames, arch, json } => {
            emit_report(
                out,
                &count_flops(&arch.model_config(), frames)?,
                json.as_deref(),
            )?;
        }
        Command::TrainToy {
            speakers,
            steps,
            seed,
            utterances,
            held_out,
            batch_size,
            crop_frames,
            warmup,
            config,
            out: dest,
            log,
        } => {
            if held_out >= utterances {
                return Err(Error::Invalid(
                    "--held-out must be below --utterances".into(),
                ));
            }
            let mut cfg = ToyConfig::desk(seed);
            cfg.model = config.config();
            cfg.held_out = held_out;
            cfg.data.num_speakers = speakers;
            cfg.data.utterances_per_speaker = utterances;
            cfg.train = TrainConfig {
                total_steps: steps,
                warmup_steps: warmup.unwrap_or(steps / 30),
                batch_size,
                crop_frames,
                seed,
                ..TrainConfig::default()
            };
            let mut log_file = log
                .as_ref()
                .map(|p| fs::File::create(p).in_file(p))
                .transpose()?;
            let mut io_err = None;
            let outcome = toy::run(&cfg, |r| {
                let line = format!("{} {:.6} {:.6}\n", r.step, r.lr, r.loss);
                let res = match log_file.as_mut() {
                    Some(f) => f.write_all(line.as_bytes()),
                    None => out.write_all(line.as_bytes()),
                };
                if let Err(e) = res {
                    io_err.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_err {
                return Err(e.into());
            }
            let state = OptimizerState {
                step: steps as u64,
                sgd: outcome.sgd,
            };
            save_checkpoint(&dest, &outcome.model, &state)?;
            let window = (steps / 10).max(1);
            let (first, last) = outcome
                .log
                .initial_and_final(window)
                .unwrap_or((f64::NAN, f64::NAN));
            eprintln!("loss (mean of {window} steps): initial {first:.6} final {last:.6}");
            eprintln!(
                "held-out cosine: intra {:.6} inter {:.6} gap {:.6}",
                outcome.intra,
                outcome.inter,
                outcome.intra - outcome.inter
            );
            eprintln!("checkpoint written to {}", dest.display());
        }
        Command::InitModel {
            arch,
            seed,
            out: dest,
        } => {
            let model = MgffTdnn::new(arch.model_config(), seed)?;
            save_model(&dest, &model)?;
            writeln!(
                out,
                "wrote model with {} parameters to {}",
                model.num_params(),
                dest.display()
            )?;
        }
        Command::Synth {
            speakers,
            utterances,
            seed,
            duration,
            out_dir,
        } => {
            if speakers < 2 || utterances < 2 {
                return Err(Error::Invalid(
                    "need at least two speakers with two utterances each".into(),
                ));
            }
            let cfg = SyntheticConfig {
                num_speakers: speakers,
                utterances_per_speaker: utterances,
                duration_secs: duration,
                seed,
            };
            fs::create_dir_all(&out_dir).in_file(&out_dir)?;
            let name = |s: usize, u: usize| format!("spk{s:02}_utt{u:02}.wav");
            for (s, voice) in speaker_signatures(&cfg).iter().enumerate() {
                for u in 0..utterances {
                    let audio = render_utterance(voice, duration, utterance_seed(seed, s, u))?;
                    write_wav(out_dir.join(name(s, u)), &audio)?;
                }
            }
            // Utterance 0 of every speaker enrolls; the rest are tests.
            let mut trials = String::new();
            for e in 0..speakers {
                for s in 0..speakers {
                    for u in 1..utterances {
                        trials.push_str(&format!(
                            "{} {} {}\n",
                            u8::from(e == s),
                            name(e, 0),
                            name(s, u)
                        ));
                    }
                }
            }
            write_file(&out_dir.join("trials.txt"), trials.as_bytes())?;
            writeln!(
                out,
                "wrote {} utterances and {} trials to {}",
                speakers * utterances,
                speakers * speakers * (utterances - 1),
                out_dir.display()
            )?;
        }
    }
    Ok(())
}
