//! Exact CTC: collapse mapping, forward-backward log-likelihood, its
//! gradient via state occupancies, and a brute-force enumeration oracle.
//!
//! All lattice math stays in the log domain. Frame rows are
//! log-probabilities over `phones + blank` with blank at the last index.
//! Targets the lattice cannot reach score [`UNREACHABLE`] instead of
//! erroring, so batch rescoring can rank them last.

use crate::diff::num::{log_add, logsumexp_slice};
use crate::diff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::inventory::{PhoneId, PhoneSequence, Role};

/// Finite stand-in for log 0; keeps downstream arithmetic NaN-free.
pub const UNREACHABLE: f64 = -1e30;

/// One frame-level alignment over `phones + blank`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtcAlignment {
    labels: Vec<usize>,
    blank: usize,
}

impl CtcAlignment {
    /// `blank` is the blank symbol index; every label must be `<= blank`.
    pub fn new(labels: Vec<usize>, blank: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l > blank) {
            return Err(Error::Contract(format!(
                "alignment label {bad} exceeds blank index {blank}"
            )));
        }
        Ok(Self { labels, blank })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The CTC collapse: merge repeats, then drop blanks.
    pub fn collapse(&self) -> PhoneSequence {
        PhoneSequence::from_ids_unchecked(
            collapse_labels(&self.labels, self.blank),
            Role::Hypothesis,
        )
    }
}

/// Collapse on raw labels: remove repeated symbols, then blanks.
pub fn collapse_labels(labels: &[usize], blank: usize) -> Vec<PhoneId> {
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for &l in labels {
        if prev != Some(l) && l != blank {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

/// Minimum frame count that can realize `y`: its length plus one forced
/// blank per adjacent repeat.
pub fn min_frames(y: &[PhoneId]) -> usize {
    let repeats = y.windows(2).filter(|w| w[0] == w[1]).count();
    y.len() + repeats
}

fn validate_target(log_probs: &[Vec<f64>], y: &[PhoneId]) -> Result<usize> {
    let width = log_probs
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Contract("ctc needs at least one frame".to_string()))?;
    if log_probs.iter().any(|r| r.len() != width) {
        return Err(Error::Shape {
            op: "ctc",
            detail: "ragged log-prob rows".to_string(),
        });
    }
    let blank = width - 1;
    if let Some(&bad) = y.iter().find(|&&p| p >= blank) {
        return Err(Error::Contract(format!(
            "target contains blank or out-of-range id {bad} (blank = {blank})"
        )));
    }
    Ok(blank)
}

/// Forward/backward lattice over the blank-extended target.
pub struct CtcLattice {
    /// Extended labels: blanks interleaved, length 2L+1.
    pub ext: Vec<usize>,
    /// log alpha[t][s]: paths ending in state s after emitting frame t.
    pub log_alpha: Vec<Vec<f64>>,
    /// log beta[t][s]: completion probability using frames after t.
    pub log_beta: Vec<Vec<f64>>,
    /// Total log P(y | X); `UNREACHABLE` if no alignment exists.
    pub log_prob: f64,
}

impl CtcLattice {
    pub fn build(log_probs: &[Vec<f64>], y: &[PhoneId]) -> Result<Self> {
        let blank = validate_target(log_probs, y)?;
        let t_len = log_probs.len();
        let s_len = 2 * y.len() + 1;
        let ext: Vec<usize> = (0..s_len)
            .map(|s| if s % 2 == 0 { blank } else { y[(s - 1) / 2] })
            .collect();

        let neg = f64::NEG_INFINITY;
        let mut alpha = vec![vec![neg; s_len]; t_len];
        alpha[0][0] = log_probs[0][ext[0]];
        if s_len > 1 {
            alpha[0][1] = log_probs[0][ext[1]];
        }
        for t in 1..t_len {
            for s in 0..s_len {
                let mut acc = alpha[t - 1][s];
                if s >= 1 {
                    acc = log_add(acc, alpha[t - 1][s - 1]);
                }
                if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                    acc = log_add(acc, alpha[t - 1][s - 2]);
                }
                alpha[t][s] = if acc == neg {
                    neg
                } else {
                    acc + log_probs[t][ext[s]]
                };
            }
        }
        let mut total = alpha[t_len - 1][s_len - 1];
        if s_len >= 2 {
            total = log_add(total, alpha[t_len - 1][s_len - 2]);
        }

        let mut beta = vec![vec![neg; s_len]; t_len];
        beta[t_len - 1][s_len - 1] = 0.0;
        if s_len >= 2 {
            beta[t_len - 1][s_len - 2] = 0.0;
        }
        for t in (0..t_len - 1).rev() {
            for s in 0..s_len {
                let mut acc = beta[t + 1][s] + log_probs[t + 1][ext[s]];
                if s + 1 < s_len {
                    acc = log_add(acc, beta[t + 1][s + 1] + log_probs[t + 1][ext[s + 1]]);
                }
                if s + 2 < s_len && ext[s + 2] != blank && ext[s + 2] != ext[s] {
                    acc = log_add(acc, beta[t + 1][s + 2] + log_probs[t + 1][ext[s + 2]]);
                }
                beta[t][s] = acc;
            }
        }

        Ok(Self {
            ext,
            log_alpha: alpha,
            log_beta: beta,
            log_prob: if total == neg { UNREACHABLE } else { total },
        })
    }

    pub fn reachable(&self) -> bool {
        self.log_prob != UNREACHABLE
    }

    /// Total log-likelihood recomputed at frame cut `t`; equals
    /// [`log_prob`](Self::log_prob) at every t when reachable.
    pub fn log_prob_at_cut(&self, t: usize) -> f64 {
        let terms: Vec<f64> = self.log_alpha[t]
            .iter()
            .zip(&self.log_beta[t])
            .map(|(a, b)| a + b)
            .collect();
        logsumexp_slice(&terms)
    }

    /// Per-frame symbol occupancy: g[t][k] = P(alignment emits k at t | y).
    /// Rows sum to 1. This is also d log P / d log_probs[t][k].
    pub fn occupancy(&self, width: usize) -> Vec<Vec<f64>> {
        let t_len = self.log_alpha.len();
        let mut g = vec![vec![0.0; width]; t_len];
        for t in 0..t_len {
            for (s, &sym) in self.ext.iter().enumerate() {
                let w = self.log_alpha[t][s] + self.log_beta[t][s] - self.log_prob;
                if w.is_finite() {
                    g[t][sym] += w.exp();
                }
            }
        }
        g
    }
}

/// log P(y | X) summed over all alignments that collapse to `y` (Viterbi-free,
/// exact). Returns [`UNREACHABLE`] when no alignment exists.
pub fn ctc_log_prob(log_probs: &[Vec<f64>], y: &[PhoneId]) -> Result<f64> {
    Ok(CtcLattice::build(log_probs, y)?.log_prob)
}

/// Gradient of `ctc_log_prob` with respect to the *logits* that produced
/// `log_probs` via a per-frame log-softmax: occupancy minus probability.
/// Rows sum to zero.
pub fn ctc_grad(log_probs: &[Vec<f64>], y: &[PhoneId]) -> Result<Vec<Vec<f64>>> {
    let lattice = CtcLattice::build(log_probs, y)?;
    if !lattice.reachable() {
        return Err(Error::Contract(
            "ctc_grad on an unreachable target".to_string(),
        ));
    }
    let width = log_probs[0].len();
    let occ = lattice.occupancy(width);
    Ok(occ
        .iter()
        .zip(log_probs)
        .map(|(grow, lrow)| {
            grow.iter()
                .zip(lrow)
                .map(|(g, lp)| g - lp.exp())
                .collect()
        })
        .collect())
}

/// Differentiable CTC score on a tape. `rows` are the per-frame
/// log-probability vars (each `[width]`). Unreachable targets become a
/// constant sentinel node with no gradient path.
pub fn ctc_log_prob_var(tape: &Tape, rows: &[Var], y: &[PhoneId]) -> Result<Var> {
    let values: Vec<Vec<f64>> = rows.iter().map(|&r| tape.value(r).data().to_vec()).collect();
    let lattice = CtcLattice::build(&values, y)?;
    if !lattice.reachable() {
        return Ok(tape.constant(Tensor::scalar(UNREACHABLE)));
    }
    let width = values[0].len();
    let occ = lattice.occupancy(width);
    Ok(tape.custom(
        rows,
        Tensor::scalar(lattice.log_prob),
        move |g, sink| {
            let gi = g.item();
            for (t, grow) in occ.iter().enumerate() {
                sink(t, Tensor::vector(grow.iter().map(|o| gi * o).collect()));
            }
        },
    ))
}

/// Enumeration oracle: sums path probabilities over every alignment whose
/// collapse equals `y`. Instances are capped at 10^6 alignments.
pub fn ctc_brute_force(log_probs: &[Vec<f64>], y: &[PhoneId]) -> Result<f64> {
    let blank = validate_target(log_probs, y)?;
    let width = blank + 1;
    let t_len = log_probs.len();
    let count = (width as f64).powi(t_len as i32);
    if count > 1e6 {
        return Err(Error::TooLarge(format!(
            "{width}^{t_len} alignments exceed the 10^6 oracle bound"
        )));
    }
    let mut labels = vec![0usize; t_len];
    let mut total = f64::NEG_INFINITY;
    loop {
        if collapse_labels(&labels, blank) == y {
            let path: f64 = labels
                .iter()
                .enumerate()
                .map(|(t, &l)| log_probs[t][l])
                .sum();
            total = log_add(total, path);
        }
        // odometer increment over width^t_len label tuples
        let mut pos = 0;
        loop {
            if pos == t_len {
                return Ok(if total == f64::NEG_INFINITY {
                    UNREACHABLE
                } else {
                    total
                });
            }
            labels[pos] += 1;
            if labels[pos] < width {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}

/// Every collapse-distinct output reachable within `t_len` frames over a
/// `num_phones`-symbol vocabulary (for small-instance normalization checks).
pub fn enumerate_collapsed_outputs(num_phones: usize, t_len: usize) -> Vec<Vec<PhoneId>> {
    let width = num_phones + 1;
    let blank = num_phones;
    let mut seen = std::collections::BTreeSet::new();
    let mut labels = vec![0usize; t_len];
    loop {
        seen.insert(collapse_labels(&labels, blank));
        let mut pos = 0;
        loop {
            if pos == t_len {
                return seen.into_iter().collect();
            }
            labels[pos] += 1;
            if labels[pos] < width {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}
