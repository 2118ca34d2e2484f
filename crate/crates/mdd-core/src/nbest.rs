//! M-best hypothesis generation: attention-driven beam search with exact
//! CTC rescoring of completed hypotheses, plus an exhaustive enumeration
//! oracle for testing.
//!
//! Expansion ranks candidate beams by attention score alone; CTC enters
//! through exact rescoring once a hypothesis completes on eos, so the
//! stored joint score is exactly the alpha-combination of its parts.

use crate::ctc::ctc_log_prob;
use crate::error::{Error, Result};
use crate::inventory::{PhoneId, PhoneSequence, Role, Utterance};
use crate::model::{decoder_step, DecoderState, EncoderOutput, ModelConfig, ModelParams};
use crate::parallel::par_map;

/// One scored hypothesis. `joint_score` is always
/// `alpha * ctc_log_prob + (1 - alpha) * att_log_prob`, recomputable from
/// the stored parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub phones: PhoneSequence,
    pub att_log_prob: f64,
    pub ctc_log_prob: f64,
    pub joint_score: f64,
}

impl Hypothesis {
    fn new(ids: Vec<PhoneId>, att: f64, ctc: f64, alpha: f64) -> Self {
        Self {
            phones: PhoneSequence::from_ids_unchecked(ids, Role::Hypothesis),
            att_log_prob: att,
            ctc_log_prob: ctc,
            joint_score: alpha * ctc + (1.0 - alpha) * att,
        }
    }
}

/// Up to M hypotheses, sorted by joint score descending with lexicographic
/// tie-breaking, no duplicate phone sequences.
#[derive(Debug, Clone)]
pub struct HypothesisList {
    hyps: Vec<Hypothesis>,
    m: usize,
}

impl HypothesisList {
    /// Sorts, enforces uniqueness, and truncates to `m`.
    pub fn from_candidates(mut hyps: Vec<Hypothesis>, m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::Config("M must be >= 1".to_string()));
        }
        hyps.sort_by(|a, b| {
            b.joint_score
                .total_cmp(&a.joint_score)
                .then_with(|| a.phones.ids().cmp(b.phones.ids()))
        });
        let mut seen = std::collections::BTreeSet::new();
        hyps.retain(|h| seen.insert(h.phones.ids().to_vec()));
        hyps.truncate(m);
        Ok(Self { hyps, m })
    }

    /// Wraps an explicitly ordered list without re-sorting; used by
    /// decode-only reporting paths that rerank for display.
    pub fn from_reordered(hyps: Vec<Hypothesis>, m: usize) -> Self {
        Self { hyps, m }
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hyps
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.hyps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyps.is_empty()
    }

    pub fn top(&self) -> Option<&Hypothesis> {
        self.hyps.first()
    }
}

/// Beam-search settings. `alpha` is the CTC weight in the joint score.
#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    pub beam_width: usize,
    pub m_best: usize,
    pub max_len: usize,
    pub alpha: f64,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_best < 1 {
            return Err(Error::Config("M must be >= 1".to_string()));
        }
        if self.beam_width < self.m_best {
            return Err(Error::Config(format!(
                "beam width {} must be >= M {}",
                self.beam_width, self.m_best
            )));
        }
        if self.max_len < 1 {
            return Err(Error::Config("max_len must be >= 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0, 1]".to_string()));
        }
        Ok(())
    }
}

struct Beam {
    prefix: Vec<PhoneId>,
    att: f64,
    state: DecoderState,
    prev: Option<PhoneId>,
}

/// Attention-driven beam search. Hypotheses complete on eos (forced at
/// `max_len`), are rescored with exact CTC, and the top M by joint score
/// are returned (fewer if the search exhausts first). Deterministic.
pub fn beam_search(
    params: &ModelParams,
    config: &ModelConfig,
    enc: &EncoderOutput,
    search: &SearchConfig,
) -> Result<HypothesisList> {
    search.validate()?;
    let num_phones = params.num_phones();
    let eos = num_phones;
    let mut active = vec![Beam {
        prefix: Vec::new(),
        att: 0.0,
        state: DecoderState::initial(config),
        prev: None,
    }];
    let mut completed: Vec<(Vec<PhoneId>, f64)> = Vec::new();
    while !active.is_empty() {
        let mut expansions: Vec<Beam> = Vec::new();
        for beam in &active {
            let step = decoder_step(params, config, enc, &beam.state, beam.prev)?;
            completed.push((beam.prefix.clone(), beam.att + step.log_probs[eos]));
            if beam.prefix.len() < search.max_len {
                for k in 0..num_phones {
                    let mut prefix = beam.prefix.clone();
                    prefix.push(k);
                    expansions.push(Beam {
                        prefix,
                        att: beam.att + step.log_probs[k],
                        state: step.state.clone(),
                        prev: Some(k),
                    });
                }
            }
        }
        expansions.sort_by(|a, b| {
            b.att
                .total_cmp(&a.att)
                .then_with(|| a.prefix.cmp(&b.prefix))
        });
        expansions.truncate(search.beam_width);
        active = expansions;
    }
    let candidates = completed
        .into_iter()
        .map(|(ids, att)| {
            let ctc = ctc_log_prob(&enc.ctc_log_probs, &ids)?;
            Ok(Hypothesis::new(ids, att, ctc, search.alpha))
        })
        .collect::<Result<Vec<_>>>()?;
    HypothesisList::from_candidates(candidates, search.m_best)
}

/// Enumeration oracle: scores every sequence of length <= `max_len` with
/// the exact joint score and returns the top M. Bounded at 10^5 sequences.
pub fn exhaustive_nbest(
    params: &ModelParams,
    config: &ModelConfig,
    enc: &EncoderOutput,
    m: usize,
    max_len: usize,
    alpha: f64,
) -> Result<HypothesisList> {
    let v = params.num_phones() as f64;
    if v.powi(max_len as i32) > 1e5 {
        return Err(Error::TooLarge(format!(
            "{}^{max_len} sequences exceed the 10^5 oracle bound",
            params.num_phones()
        )));
    }
    let mut candidates = Vec::new();
    let mut stack: Vec<Vec<PhoneId>> = vec![Vec::new()];
    while let Some(ids) = stack.pop() {
        if ids.len() < max_len {
            for k in (0..params.num_phones()).rev() {
                let mut next = ids.clone();
                next.push(k);
                stack.push(next);
            }
        }
        let att = crate::model::att_score(params, config, enc, &ids)?;
        let ctc = ctc_log_prob(&enc.ctc_log_probs, &ids)?;
        candidates.push(Hypothesis::new(ids, att, ctc, alpha));
    }
    HypothesisList::from_candidates(candidates, m)
}

/// Encode one utterance and run beam search over it.
pub fn decode_utterance(
    params: &ModelParams,
    config: &ModelConfig,
    utterance: &Utterance,
    search: &SearchConfig,
) -> Result<HypothesisList> {
    let enc = crate::model::encode(params, config, &utterance.features)?;
    beam_search(params, config, &enc, search)
}

/// Decode a corpus, parallel across utterances, output in input order.
/// `max_len` in `search` is clamped per utterance to the encoder length.
pub fn decode_corpus(
    params: &ModelParams,
    config: &ModelConfig,
    utterances: &[Utterance],
    search: &SearchConfig,
) -> Result<Vec<HypothesisList>> {
    par_map(utterances, |utt| {
        let enc = crate::model::encode(params, config, &utt.features)?;
        let per_utt = SearchConfig {
            max_len: search.max_len.min(enc.len().max(1)),
            ..*search
        };
        beam_search(params, config, &enc, &per_utt)
    })
    .into_iter()
    .collect()
}
