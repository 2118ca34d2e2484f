//! `mdd gen`: synthetic corpus generation.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use mdd_core::corpus::{generate_with_stats, save_corpus, split, GenConfig, GenStats};

use super::PhonesArg;
use crate::util::{load_config, load_inventory, write_file, CliError, CliResult};

#[derive(Args)]
pub struct GenArgs {
    /// Generation config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub phones: PhonesArg,
    /// Store features inline in the manifest instead of CSV files.
    #[arg(long)]
    pub inline: bool,
    /// Optional train,dev,test fractions; writes three sub-corpora.
    #[arg(long, value_name = "T,D,E")]
    pub split: Option<String>,
    /// Shuffle seed for --split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config utterance count.
    #[arg(long)]
    pub num_utterances: Option<usize>,
}

fn stats_csv(stats: &GenStats) -> String {
    let mut out = String::new();
    out.push_str("# format: mdd-corpus-stats v1\n");
    out.push_str("phone,canonical_count,reference_count,substituted_into_count\n");
    for (phone, (canon, reference, into)) in &stats.phone_table {
        let _ = writeln!(out, "{phone},{canon},{reference},{into}");
    }
    out
}

fn summary_csv(stats: &GenStats) -> String {
    let mut out = String::new();
    out.push_str("# format: mdd-corpus-summary v1\n");
    out.push_str("utterances,canonical_phones,substitutions,deletions,insertions,frames\n");
    let _ = writeln!(
        out,
        "{},{},{},{},{},{}",
        stats.utterances,
        stats.canonical_phones,
        stats.substitutions,
        stats.deletions,
        stats.insertions,
        stats.frames
    );
    out
}

fn parse_fractions(s: &str) -> CliResult<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::usage("--split needs three comma-separated fractions"));
    }
    let mut vals = [0.0; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad split fraction {p:?}")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

pub fn run(args: GenArgs) -> CliResult {
    let inventory = load_inventory(args.phones.phones.as_deref())?;
    let mut config: GenConfig = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.num_utterances {
        config.num_utterances = n;
    }
    let (utterances, stats) = generate_with_stats(&config, &inventory)?;

    match &args.split {
        None => {
            save_corpus(&args.out, &utterances, &inventory, args.inline)?;
        }
        Some(spec) => {
            let fractions = parse_fractions(spec)?;
            let (train, dev, test) = split(utterances, fractions, args.split_seed)?;
            for (name, subset) in [("train", &train), ("dev", &dev), ("test", &test)] {
                if !subset.is_empty() {
                    save_corpus(&args.out.join(name), subset, &inventory, args.inline)?;
                }
            }
        }
    }
    write_file(&args.out.join("stats.csv"), &stats_csv(&stats))?;
    write_file(&args.out.join("summary.csv"), &summary_csv(&stats))?;
    println!(
        "generated {} utterances ({} substitutions, {} deletions, {} insertions) into {}",
        stats.utterances,
        stats.substitutions,
        stats.deletions,
        stats.insertions,
        args.out.display()
    );
    Ok(())
}
