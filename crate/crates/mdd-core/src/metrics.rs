//! Detection and diagnosis metrics: phone alignment, the four-condition
//! confusion counts anchored on canonical positions, recall / precision /
//! F1, diagnostic accuracy (DAR), phone error rate, the per-utterance F1
//! used by the expected-F1 loss, and per-phone breakdowns.
//!
//! Scoring is canonical-anchored: every canonical position receives exactly
//! one label from the alignment; insertions are tracked per inter-canonical
//! gap and enter only the detection counts C_D / C_H / C_DH and PER.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::inventory::{PhoneId, PhoneInventory, PhoneSequence};

/// One step of an edit-distance alignment between sequences A and B.
/// Indices are positions in the respective sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignStep {
    Match { a: usize, b: usize },
    Substitute { a: usize, b: usize },
    Delete { a: usize },
    Insert { b: usize },
}

/// Minimal-cost edit trace. Steps consume both sequences monotonically,
/// each position exactly once; cost equals the Levenshtein distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentTrace {
    pub steps: Vec<AlignStep>,
}

impl AlignmentTrace {
    /// Substitutions + deletions + insertions.
    pub fn cost(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| !matches!(s, AlignStep::Match { .. }))
            .count()
    }

    pub fn substitutions(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, AlignStep::Substitute { .. }))
            .count()
    }

    pub fn deletions(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, AlignStep::Delete { .. }))
            .count()
    }

    pub fn insertions(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, AlignStep::Insert { .. }))
            .count()
    }

    /// Checks monotone, exactly-once consumption of both sequences.
    pub fn consumes(&self, a_len: usize, b_len: usize) -> bool {
        let (mut ia, mut ib) = (0usize, 0usize);
        for step in &self.steps {
            match *step {
                AlignStep::Match { a, b } | AlignStep::Substitute { a, b } => {
                    if a != ia || b != ib {
                        return false;
                    }
                    ia += 1;
                    ib += 1;
                }
                AlignStep::Delete { a } => {
                    if a != ia {
                        return false;
                    }
                    ia += 1;
                }
                AlignStep::Insert { b } => {
                    if b != ib {
                        return false;
                    }
                    ib += 1;
                }
            }
        }
        ia == a_len && ib == b_len
    }
}

/// Minimal-cost alignment under unit costs with deterministic tie-breaking:
/// match > substitute > delete > insert at every backtrace decision.
pub fn align(a: &PhoneSequence, b: &PhoneSequence) -> AlignmentTrace {
    align_ids(a.ids(), b.ids())
}

pub fn align_ids(a: &[PhoneId], b: &[PhoneId]) -> AlignmentTrace {
    let (n, m) = (a.len(), b.len());
    let mut dist = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dist.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dist[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = dist[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let del = dist[i - 1][j] + 1;
            let ins = dist[i][j - 1] + 1;
            dist[i][j] = diag.min(del).min(ins);
        }
    }
    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dist[i][j];
        if i > 0 && j > 0 && a[i - 1] == b[j - 1] && dist[i - 1][j - 1] == here {
            steps.push(AlignStep::Match { a: i - 1, b: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && a[i - 1] != b[j - 1] && dist[i - 1][j - 1] + 1 == here {
            steps.push(AlignStep::Substitute { a: i - 1, b: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && dist[i - 1][j] + 1 == here {
            steps.push(AlignStep::Delete { a: i - 1 });
            i -= 1;
        } else {
            steps.push(AlignStep::Insert { b: j - 1 });
            j -= 1;
        }
    }
    steps.reverse();
    AlignmentTrace { steps }
}

/// Verdict for one canonical position after aligning against another
/// sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionLabel {
    Correct,
    Substituted(PhoneId),
    Deleted,
}

/// Canonical-anchored view of an alignment: one label per canonical
/// position plus insertion counts per inter-canonical gap (gap g sits
/// before canonical position g; there are len+1 gaps).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchoredLabels {
    pub labels: Vec<PositionLabel>,
    pub insertions_per_gap: Vec<usize>,
}

impl AnchoredLabels {
    pub fn insertions(&self) -> usize {
        self.insertions_per_gap.iter().sum()
    }

    pub fn mispronounced(&self, i: usize) -> bool {
        !matches!(self.labels[i], PositionLabel::Correct)
    }
}

/// Labels every canonical position as correct / substituted / deleted and
/// counts insertions per gap, from the deterministic alignment.
pub fn canonical_anchored_labels(
    canonical: &PhoneSequence,
    other: &PhoneSequence,
) -> AnchoredLabels {
    let trace = align(canonical, other);
    let mut labels = vec![PositionLabel::Correct; canonical.len()];
    let mut insertions_per_gap = vec![0usize; canonical.len() + 1];
    let mut consumed = 0usize;
    for step in &trace.steps {
        match *step {
            AlignStep::Match { a, .. } => {
                labels[a] = PositionLabel::Correct;
                consumed = a + 1;
            }
            AlignStep::Substitute { a, b } => {
                labels[a] = PositionLabel::Substituted(other.ids()[b]);
                consumed = a + 1;
            }
            AlignStep::Delete { a } => {
                labels[a] = PositionLabel::Deleted;
                consumed = a + 1;
            }
            AlignStep::Insert { .. } => {
                insertions_per_gap[consumed] += 1;
            }
        }
    }
    AnchoredLabels {
        labels,
        insertions_per_gap,
    }
}

/// Confusion and detection counts for one utterance (or a corpus sum).
///
/// Positives are correct pronunciations, negatives mispronunciations, per
/// the four-condition confusion matrix. `cd`/`id` split the true negatives
/// by whether the hypothesis diagnosis matches the annotation exactly.
/// `c_d`/`c_h`/`c_dh` are the detection counts behind the per-utterance F1
/// (insertions included, paired per gap). The `ref_hyp_*` fields carry the
/// reference-vs-hypothesis edit counts that define PER.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MddCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub cd: u64,
    pub id: u64,
    pub c_d: u64,
    pub c_h: u64,
    pub c_dh: u64,
    pub insertions_detected: u64,
    pub insertions_annotated: u64,
    pub ref_hyp_subs: u64,
    pub ref_hyp_dels: u64,
    pub ref_hyp_ins: u64,
    pub reference_len: u64,
}

impl MddCounts {
    pub fn add(&mut self, o: &MddCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
        self.cd += o.cd;
        self.id += o.id;
        self.c_d += o.c_d;
        self.c_h += o.c_h;
        self.c_dh += o.c_dh;
        self.insertions_detected += o.insertions_detected;
        self.insertions_annotated += o.insertions_annotated;
        self.ref_hyp_subs += o.ref_hyp_subs;
        self.ref_hyp_dels += o.ref_hyp_dels;
        self.ref_hyp_ins += o.ref_hyp_ins;
        self.reference_len += o.reference_len;
    }

    pub fn sum<'a>(items: impl IntoIterator<Item = &'a MddCounts>) -> MddCounts {
        let mut total = MddCounts::default();
        for c in items {
            total.add(c);
        }
        total
    }
}

/// The four-condition counts plus detection counts for one utterance.
pub fn mdd_counts(
    canonical: &PhoneSequence,
    reference: &PhoneSequence,
    hypothesis: &PhoneSequence,
) -> MddCounts {
    let ref_anch = canonical_anchored_labels(canonical, reference);
    let hyp_anch = canonical_anchored_labels(canonical, hypothesis);
    let mut c = MddCounts::default();
    for i in 0..canonical.len() {
        let actual_mp = ref_anch.mispronounced(i);
        let predicted_mp = hyp_anch.mispronounced(i);
        match (predicted_mp, actual_mp) {
            (false, false) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (true, true) => {
                c.tn += 1;
                if ref_anch.labels[i] == hyp_anch.labels[i] {
                    c.cd += 1;
                } else {
                    c.id += 1;
                }
            }
        }
    }
    let ref_mp = (0..canonical.len()).filter(|&i| ref_anch.mispronounced(i)).count() as u64;
    let hyp_mp = (0..canonical.len()).filter(|&i| hyp_anch.mispronounced(i)).count() as u64;
    c.insertions_annotated = ref_anch.insertions() as u64;
    c.insertions_detected = hyp_anch.insertions() as u64;
    c.c_h = ref_mp + c.insertions_annotated;
    c.c_d = hyp_mp + c.insertions_detected;
    let gap_matched: usize = ref_anch
        .insertions_per_gap
        .iter()
        .zip(&hyp_anch.insertions_per_gap)
        .map(|(&r, &h)| r.min(h))
        .sum();
    c.c_dh = c.tn + gap_matched as u64;

    let per_trace = align(reference, hypothesis);
    c.ref_hyp_subs = per_trace.substitutions() as u64;
    c.ref_hyp_dels = per_trace.deletions() as u64;
    c.ref_hyp_ins = per_trace.insertions() as u64;
    c.reference_len = reference.len() as u64;
    c
}

/// Per-utterance F1 = 2 * C_DH / (C_D + C_H); 1.0 when both sides found
/// nothing to flag (perfect agreement on a clean utterance).
pub fn utterance_f1(counts: &MddCounts) -> f64 {
    let denom = counts.c_d + counts.c_h;
    if denom == 0 {
        1.0
    } else {
        2.0 * counts.c_dh as f64 / denom as f64
    }
}

/// Detection metrics restricted to one canonical phone.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhoneDetection {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

/// Corpus-level metric report. Undefined ratios (zero denominators) are
/// `None`, never a silent 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub dar: Option<f64>,
    pub per: Option<f64>,
    pub totals: MddCounts,
    pub per_phone: BTreeMap<PhoneId, PhoneDetection>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

fn harmonic(re: Option<f64>, pr: Option<f64>) -> Option<f64> {
    match (re, pr) {
        (Some(r), Some(p)) if r + p > 0.0 => Some(2.0 * r * p / (r + p)),
        _ => None,
    }
}

/// Sums per-utterance counts and derives RE, PR, F1, DAR, and PER.
pub fn corpus_metrics(counts: &[MddCounts]) -> Result<MetricReport> {
    if counts.is_empty() {
        return Err(Error::Contract(
            "corpus_metrics needs at least one utterance".to_string(),
        ));
    }
    let totals = MddCounts::sum(counts);
    let recall = ratio(totals.tn, totals.fp + totals.tn);
    let precision = ratio(totals.tn, totals.fn_ + totals.tn);
    let report = MetricReport {
        recall,
        precision,
        f1: harmonic(recall, precision),
        dar: ratio(totals.cd, totals.cd + totals.id),
        per: ratio(
            totals.ref_hyp_subs + totals.ref_hyp_dels + totals.ref_hyp_ins,
            totals.reference_len,
        ),
        totals,
        per_phone: BTreeMap::new(),
    };
    Ok(report)
}

/// Per-phone detection breakdown over canonical positions holding each
/// phone. Insertions are excluded; phones never occurring are omitted.
pub fn per_phone_report(
    triples: &[(&PhoneSequence, &PhoneSequence, &PhoneSequence)],
) -> BTreeMap<PhoneId, PhoneDetection> {
    let mut map: BTreeMap<PhoneId, PhoneDetection> = BTreeMap::new();
    for (canonical, reference, hypothesis) in triples {
        let ref_anch = canonical_anchored_labels(canonical, reference);
        let hyp_anch = canonical_anchored_labels(canonical, hypothesis);
        for (i, &phone) in canonical.ids().iter().enumerate() {
            let entry = map.entry(phone).or_default();
            match (hyp_anch.mispronounced(i), ref_anch.mispronounced(i)) {
                (false, false) => entry.tp += 1,
                (false, true) => entry.fp += 1,
                (true, false) => entry.fn_ += 1,
                (true, true) => entry.tn += 1,
            }
        }
    }
    for det in map.values_mut() {
        det.recall = ratio(det.tn, det.fp + det.tn);
        det.precision = ratio(det.tn, det.fn_ + det.tn);
        det.f1 = harmonic(det.recall, det.precision);
    }
    map
}

/// Per-phone F1 only (None-valued phones are dropped).
pub fn per_phone_f1(
    triples: &[(&PhoneSequence, &PhoneSequence, &PhoneSequence)],
) -> BTreeMap<PhoneId, f64> {
    per_phone_report(triples)
        .into_iter()
        .filter_map(|(p, det)| det.f1.map(|f| (p, f)))
        .collect()
}

/// Full corpus report: scalar metrics plus the per-phone table.
pub fn corpus_report(
    triples: &[(&PhoneSequence, &PhoneSequence, &PhoneSequence)],
) -> Result<MetricReport> {
    let counts: Vec<MddCounts> = triples
        .iter()
        .map(|(c, r, h)| mdd_counts(c, r, h))
        .collect();
    let mut report = corpus_metrics(&counts)?;
    report.per_phone = per_phone_report(triples);
    Ok(report)
}

// ---- CSV emission ----

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "NA".to_string(),
    }
}

/// Corpus summary CSV. Columns follow the reporting order RE, PR, F1, DAR,
/// then PER.
pub fn summary_csv(report: &MetricReport) -> String {
    let mut out = String::new();
    out.push_str("# format: mdd-summary v1\n");
    out.push_str("# insertion pairing for c_dh: per-gap minimum (tool convention)\n");
    out.push_str("re,pr,f1,dar,per\n");
    let _ = writeln!(
        out,
        "{},{},{},{},{}",
        fmt_opt(report.recall),
        fmt_opt(report.precision),
        fmt_opt(report.f1),
        fmt_opt(report.dar),
        fmt_opt(report.per),
    );
    out
}

/// Per-utterance counts CSV, one row per utterance in input order.
pub fn per_utterance_csv(rows: &[(String, MddCounts)]) -> String {
    let mut out = String::new();
    out.push_str("# format: mdd-per-utterance v1\n");
    out.push_str(
        "utterance,tp,fp,fn,tn,cd,id,c_d,c_h,c_dh,ins_detected,ins_annotated,subs,dels,ins,ref_len,utt_f1\n",
    );
    for (id, c) in rows {
        let _ = writeln!(
            out,
            "{id},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6}",
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            c.cd,
            c.id,
            c.c_d,
            c.c_h,
            c.c_dh,
            c.insertions_detected,
            c.insertions_annotated,
            c.ref_hyp_subs,
            c.ref_hyp_dels,
            c.ref_hyp_ins,
            c.reference_len,
            utterance_f1(c),
        );
    }
    out
}

/// Per-phone detection CSV, rows ordered by inventory index.
pub fn per_phone_csv(
    per_phone: &BTreeMap<PhoneId, PhoneDetection>,
    inventory: &PhoneInventory,
) -> String {
    let mut out = String::new();
    out.push_str("# format: mdd-per-phone v1\n");
    out.push_str("phone,tp,fp,fn,tn,re,pr,f1\n");
    for (&phone, det) in per_phone {
        let symbol = inventory.symbol(phone).unwrap_or("?");
        let _ = writeln!(
            out,
            "{symbol},{},{},{},{},{},{},{}",
            det.tp,
            det.fp,
            det.fn_,
            det.tn,
            fmt_opt(det.recall),
            fmt_opt(det.precision),
            fmt_opt(det.f1),
        );
    }
    out
}
