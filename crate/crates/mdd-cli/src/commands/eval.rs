//! `mdd eval`: scores top-1 hypotheses against an annotated corpus,
//! emitting the corpus summary, per-utterance counts, and the per-phone
//! table.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use mdd_core::corpus::load_manifest;
use mdd_core::metrics::{
    corpus_metrics, mdd_counts, per_phone_csv, per_phone_report, per_utterance_csv, summary_csv,
};

use super::PhonesArg;
use crate::hyp_io::{read_hypotheses, top1_sequence};
use crate::util::{load_inventory, write_file, CliError, CliResult};

#[derive(Args)]
pub struct EvalArgs {
    /// Hypotheses file from `mdd decode`.
    #[arg(long)]
    pub hypotheses: PathBuf,
    /// Annotated corpus manifest (references required).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for summary.csv, per_utterance.csv,
    /// per_phone.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub phones: PhonesArg,
}

pub fn run(args: EvalArgs) -> CliResult {
    let inventory = load_inventory(args.phones.phones.as_deref())?;
    let corpus = load_manifest(&args.corpus, &inventory)?;
    let records = read_hypotheses(&args.hypotheses)?;
    let by_id: BTreeMap<&str, &crate::hyp_io::UtteranceHyps> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut rows = Vec::with_capacity(corpus.len());
    let mut triples = Vec::with_capacity(corpus.len());
    let mut hyp_seqs = Vec::with_capacity(corpus.len());
    for utt in &corpus {
        let record = by_id.get(utt.id.as_str()).ok_or_else(|| {
            CliError::data(format!("no hypotheses for utterance {:?}", utt.id))
        })?;
        hyp_seqs.push((utt, top1_sequence(record, &inventory)?));
    }
    for (utt, hyp) in &hyp_seqs {
        let reference = utt
            .reference
            .as_ref()
            .ok_or_else(|| CliError::data(format!("utterance {:?} has no reference", utt.id)))?;
        rows.push((utt.id.clone(), mdd_counts(&utt.canonical, reference, hyp)));
        triples.push((&utt.canonical, reference, hyp));
    }
    if rows.is_empty() {
        return Err(CliError::data("corpus is empty"));
    }

    let counts: Vec<_> = rows.iter().map(|(_, c)| *c).collect();
    let mut report = corpus_metrics(&counts)?;
    report.per_phone = per_phone_report(&triples);

    std::fs::create_dir_all(&args.out)?;
    write_file(&args.out.join("summary.csv"), &summary_csv(&report))?;
    write_file(&args.out.join("per_utterance.csv"), &per_utterance_csv(&rows))?;
    write_file(
        &args.out.join("per_phone.csv"),
        &per_phone_csv(&report.per_phone, &inventory),
    )?;

    let pct = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{:.2}%", x * 100.0));
    println!(
        "evaluated {} utterances: RE {} PR {} F1 {} DAR {} PER {}",
        rows.len(),
        pct(report.recall),
        pct(report.precision),
        pct(report.f1),
        pct(report.dar),
        pct(report.per),
    );
    Ok(())
}
