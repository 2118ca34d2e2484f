//! `mdd decode`: per-utterance M-best hypothesis lists with attention,
//! CTC, and joint scores.

use std::path::PathBuf;

use clap::Args;
use mdd_core::checkpoint::load_checkpoint;
use mdd_core::corpus::load_manifest;
use mdd_core::nbest::{decode_corpus, SearchConfig};

use super::PhonesArg;
use crate::hyp_io::write_hypotheses;
use crate::util::{load_inventory, CliResult};

#[derive(Args)]
pub struct DecodeArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus manifest to decode.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Hypotheses per utterance.
    #[arg(long, default_value_t = 8)]
    pub m_best: usize,
    /// Beam width; defaults to max(16, 2 * m_best).
    #[arg(long)]
    pub beam_width: Option<usize>,
    /// CTC weight in the joint score.
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    /// Hypothesis length cap; defaults to the per-utterance encoder
    /// length.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Per-phone score bonus applied to the output ORDER only (stored
    /// scores are untouched). Off by default.
    #[arg(long, default_value_t = 0.0)]
    pub length_bonus: f64,
    /// Output hypotheses file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub phones: PhonesArg,
}

pub fn run(args: DecodeArgs) -> CliResult {
    let inventory = load_inventory(args.phones.phones.as_deref())?;
    let ckpt = load_checkpoint(&args.checkpoint, &inventory)?;
    let corpus = load_manifest(&args.corpus, &inventory)?;
    let search = SearchConfig {
        beam_width: args.beam_width.unwrap_or(16.max(2 * args.m_best)),
        m_best: args.m_best,
        max_len: args.max_len.unwrap_or(usize::MAX),
        alpha: args.alpha,
    };
    let lists = decode_corpus(&ckpt.params, &ckpt.model_config, &corpus, &search)?;
    let mut entries: Vec<_> = corpus
        .iter()
        .zip(lists)
        .map(|(u, l)| (u.id.clone(), l))
        .collect();
    if args.length_bonus != 0.0 {
        for (_, list) in &mut entries {
            let bonus = args.length_bonus;
            let mut hyps = list.hypotheses().to_vec();
            hyps.sort_by(|a, b| {
                let sa = a.joint_score + bonus * a.phones.len() as f64;
                let sb = b.joint_score + bonus * b.phones.len() as f64;
                sb.total_cmp(&sa)
                    .then_with(|| a.phones.ids().cmp(b.phones.ids()))
            });
            *list = mdd_core::nbest::HypothesisList::from_reordered(hyps, list.m());
        }
    }
    write_hypotheses(&args.out, &entries, &inventory)?;
    println!(
        "decoded {} utterances (m_best {}) into {}",
        entries.len(),
        args.m_best,
        args.out.display()
    );
    Ok(())
}
