//! `mdd sweep`: (M, beta) grid over the expected-F1 stage from a shared
//! fine-tuned checkpoint.

use std::path::PathBuf;

use clap::Args;
use mdd_core::checkpoint::load_checkpoint;
use mdd_core::corpus::load_manifest;
use mdd_core::sweep::{run_sweep, sweep_csv, SweepSpec};

use super::PhonesArg;
use crate::util::{load_config, load_inventory, write_file, CliResult};

#[derive(Args)]
pub struct SweepArgs {
    /// Sweep spec (JSON): m_values, beta_values, seeds, base config.
    #[arg(long)]
    pub spec: PathBuf,
    /// Training corpus manifest.
    #[arg(long)]
    pub train: PathBuf,
    /// Dev corpus manifest (cell metrics are computed here).
    #[arg(long)]
    pub dev: PathBuf,
    /// Shared fine-tuned checkpoint every cell starts from.
    #[arg(long)]
    pub init: PathBuf,
    /// Output directory for sweep.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub phones: PhonesArg,
}

pub fn run(args: SweepArgs) -> CliResult {
    let inventory = load_inventory(args.phones.phones.as_deref())?;
    let spec: SweepSpec = load_config(&args.spec)?;
    let ckpt = load_checkpoint(&args.init, &inventory)?;
    let train = load_manifest(&args.train, &inventory)?;
    let dev = load_manifest(&args.dev, &inventory)?;
    let cells = run_sweep(&spec, &ckpt.model_config, &ckpt.params, &train, &dev)?;
    std::fs::create_dir_all(&args.out)?;
    write_file(&args.out.join("sweep.csv"), &sweep_csv(&cells))?;
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    println!(
        "sweep finished: {} cells ({} failed) -> {}",
        cells.len(),
        failed,
        args.out.join("sweep.csv").display()
    );
    Ok(())
}
