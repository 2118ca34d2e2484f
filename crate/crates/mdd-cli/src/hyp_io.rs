//! Hypothesis-list JSONL files produced by `decode` and consumed by
//! `eval`: a version record, then one record per utterance.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use mdd_core::inventory::{PhoneInventory, Role};
use mdd_core::nbest::HypothesisList;

use crate::util::{CliError, CliResult};

const FORMAT: &str = "mdd-hypotheses";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
pub struct HypRecord {
    pub phones: Vec<String>,
    pub att_log_prob: f64,
    pub ctc_log_prob: f64,
    pub joint_score: f64,
}

#[derive(Serialize, Deserialize)]
pub struct UtteranceHyps {
    pub id: String,
    pub hypotheses: Vec<HypRecord>,
}

pub fn write_hypotheses(
    path: &Path,
    entries: &[(String, HypothesisList)],
    inventory: &PhoneInventory,
) -> CliResult {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = Header {
        format: FORMAT.to_string(),
        version: VERSION,
    };
    writeln!(file, "{}", serde_json::to_string(&header).map_err(|e| CliError::runtime(e.to_string()))?)?;
    for (id, list) in entries {
        let record = UtteranceHyps {
            id: id.clone(),
            hypotheses: list
                .hypotheses()
                .iter()
                .map(|h| {
                    Ok(HypRecord {
                        phones: inventory.decode(&h.phones)?,
                        att_log_prob: h.att_log_prob,
                        ctc_log_prob: h.ctc_log_prob,
                        joint_score: h.joint_score,
                    })
                })
                .collect::<Result<Vec<_>, mdd_core::Error>>()?,
        };
        writeln!(file, "{}", serde_json::to_string(&record).map_err(|e| CliError::runtime(e.to_string()))?)?;
    }
    Ok(())
}

pub fn read_hypotheses(path: &Path) -> CliResult<Vec<UtteranceHyps>> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open hypotheses {path:?}: {e}")))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| CliError::data("empty hypotheses file"))?
        .map_err(CliError::from)?;
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| CliError::data(format!("bad hypotheses header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(CliError::data(format!(
            "unsupported hypotheses format {}/{}",
            header.format, header.version
        )));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(CliError::from)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: UtteranceHyps = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("hypotheses line {}: {e}", n + 2)))?;
        out.push(record);
    }
    Ok(out)
}

/// Encodes a record's top-1 hypothesis back to phone ids.
pub fn top1_sequence(
    record: &UtteranceHyps,
    inventory: &PhoneInventory,
) -> CliResult<mdd_core::PhoneSequence> {
    let top = record
        .hypotheses
        .first()
        .ok_or_else(|| CliError::data(format!("utterance {} has no hypotheses", record.id)))?;
    inventory
        .encode(&top.phones, Role::Hypothesis)
        .map_err(|e| CliError::data(format!("utterance {}: {e}", record.id)))
}
