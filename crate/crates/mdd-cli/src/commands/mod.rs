//! Subcommand definitions and argument surfaces. Flags override config
//! keys; config files are JSON and resolve through `$MDD_CONFIG_DIR`.

pub mod decode;
pub mod eval;
pub mod gen;
pub mod report;
pub mod sweep;
pub mod train;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdd_core::trainer::Stage;

#[derive(Parser)]
#[command(
    name = "mdd",
    version,
    about = "Phone-level mispronunciation detection and diagnosis toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (manifest, feature files, statistics).
    Gen(gen::GenArgs),
    /// Train one stage, producing a checkpoint and a per-epoch log.
    Train(train::TrainArgs),
    /// Decode a corpus into per-utterance M-best hypothesis lists.
    Decode(decode::DecodeArgs),
    /// Score hypotheses against an annotated corpus.
    Eval(eval::EvalArgs),
    /// Grid-sweep the expected-F1 stage over (M, beta) cells.
    Sweep(sweep::SweepArgs),
    /// Render SVG charts from sweep / per-phone CSV output.
    Report(report::ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    PretrainL1,
    FinetuneL2,
    Mfc,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::PretrainL1 => Stage::PretrainL1,
            StageArg::FinetuneL2 => Stage::FinetuneL2,
            StageArg::Mfc => Stage::Mfc,
        }
    }
}

/// Flag shared by every command that reads phone sequences.
#[derive(Args)]
pub struct PhonesArg {
    /// Phone inventory file (one symbol per line); defaults to the
    /// built-in 39-phone CMU set plus sil.
    #[arg(long)]
    pub phones: Option<PathBuf>,
}
