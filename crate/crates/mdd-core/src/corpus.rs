//! Synthetic corpus generation and manifest ingestion.
//!
//! Utterances are synthesized from per-phone prototype vectors (fixed by
//! the seed) with additive noise: the canonical sequence is drawn first,
//! the reference (spoken) sequence derives from it by seeded substitution
//! / deletion / insertion, and frames are emitted for the reference. Every
//! utterance uses an rng derived from (seed, index), so generation is
//! reproducible at any worker count.
//!
//! External formats: a JSON-lines manifest (version record first, then one
//! record per utterance) and per-utterance feature CSVs, one frame per row.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inventory::{FeatureMatrix, PhoneId, PhoneInventory, PhoneSequence, Role, Utterance};
use crate::parallel::par_map_indices;

/// Generation settings. Ranges are inclusive. `p_sub`/`p_del` apply per
/// canonical position (mutually exclusive); `p_ins` applies per
/// inter-canonical gap (len + 1 gaps).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub num_utterances: usize,
    pub phones_per_utterance: (usize, usize),
    pub feature_dim: usize,
    pub frames_per_phone: (usize, usize),
    /// Std-dev of the per-frame Gaussian perturbation.
    pub emission_noise: f64,
    pub p_sub: f64,
    pub p_del: f64,
    pub p_ins: f64,
    /// phone symbol -> preferred substitute; the preferred phone is chosen
    /// with probability 1/2, otherwise uniformly among the rest.
    #[serde(default)]
    pub confusion_bias: BTreeMap<String, String>,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_prefix() -> String {
    "u".to_string()
}

impl GenConfig {
    pub fn validate(&self, inventory: &PhoneInventory) -> Result<()> {
        for (name, p) in [("p_sub", self.p_sub), ("p_del", self.p_del), ("p_ins", self.p_ins)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.p_sub + self.p_del > 1.0 {
            return Err(Error::Config("p_sub + p_del must be <= 1".to_string()));
        }
        let (plo, phi) = self.phones_per_utterance;
        let (flo, fhi) = self.frames_per_phone;
        if plo < 1 || phi < plo || flo < 1 || fhi < flo {
            return Err(Error::Config(
                "phones_per_utterance and frames_per_phone must be non-degenerate ranges"
                    .to_string(),
            ));
        }
        if self.feature_dim < 1 || self.num_utterances < 1 {
            return Err(Error::Config(
                "feature_dim and num_utterances must be >= 1".to_string(),
            ));
        }
        if self.emission_noise < 0.0 {
            return Err(Error::Config("emission_noise must be >= 0".to_string()));
        }
        for (from, to) in &self.confusion_bias {
            for sym in [from, to] {
                if inventory.id(sym).is_none() {
                    return Err(Error::UnknownPhone(sym.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Exact injected-error counts and phone histograms from one generation
/// run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GenStats {
    pub utterances: usize,
    pub canonical_phones: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub frames: usize,
    /// phone symbol -> (canonical occurrences, reference occurrences,
    /// times other phones were produced as this phone).
    pub phone_table: BTreeMap<String, (usize, usize, usize)>,
}

fn splitmix(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-utterance rng, stable across worker counts.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix(base, index)
}

struct Pools {
    /// Prompt-side phones: everything except unk and sil.
    canonical: Vec<PhoneId>,
    /// Spoken-side phones: everything except unk.
    spoken: Vec<PhoneId>,
    bias: BTreeMap<PhoneId, PhoneId>,
}

fn pools(config: &GenConfig, inventory: &PhoneInventory) -> Pools {
    let unk = inventory.unk_id();
    let sil = inventory.id("sil");
    let canonical = (0..inventory.num_phones())
        .filter(|&p| p != unk && Some(p) != sil)
        .collect();
    let spoken = (0..inventory.num_phones()).filter(|&p| p != unk).collect();
    let bias = config
        .confusion_bias
        .iter()
        .map(|(from, to)| (inventory.id(from).unwrap(), inventory.id(to).unwrap()))
        .collect();
    Pools {
        canonical,
        spoken,
        bias,
    }
}

/// Per-phone prototype vectors (standard normal coordinates), fixed by the
/// corpus seed alone.
fn prototypes(config: &GenConfig, num_phones: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(config.seed, u64::MAX));
    (0..num_phones)
        .map(|_| {
            (0..config.feature_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

enum Edit {
    Keep,
    Substitute(PhoneId),
    Delete,
}

fn one_utterance(
    config: &GenConfig,
    pools: &Pools,
    protos: &[Vec<f64>],
    index: usize,
) -> (Utterance, usize, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, index as u64));
    let (plo, phi) = config.phones_per_utterance;
    let len = rng.gen_range(plo..=phi);
    let canonical: Vec<PhoneId> = (0..len)
        .map(|_| pools.canonical[rng.gen_range(0..pools.canonical.len())])
        .collect();

    let substitute_for = |rng: &mut ChaCha8Rng, orig: PhoneId| -> PhoneId {
        if let Some(&preferred) = pools.bias.get(&orig) {
            if preferred != orig && rng.gen_bool(0.5) {
                return preferred;
            }
        }
        loop {
            let cand = pools.spoken[rng.gen_range(0..pools.spoken.len())];
            if cand != orig {
                return cand;
            }
        }
    };

    let mut reference: Vec<PhoneId> = Vec::with_capacity(len + 2);
    let (mut subs, mut dels, mut ins) = (0usize, 0usize, 0usize);
    for g in 0..=len {
        if config.p_ins > 0.0 && rng.gen::<f64>() < config.p_ins {
            reference.push(pools.spoken[rng.gen_range(0..pools.spoken.len())]);
            ins += 1;
        }
        if g < len {
            let u = rng.gen::<f64>();
            let edit = if u < config.p_sub {
                Edit::Substitute(substitute_for(&mut rng, canonical[g]))
            } else if u < config.p_sub + config.p_del {
                Edit::Delete
            } else {
                Edit::Keep
            };
            match edit {
                Edit::Keep => reference.push(canonical[g]),
                Edit::Substitute(p) => {
                    reference.push(p);
                    subs += 1;
                }
                Edit::Delete => dels += 1,
            }
        }
    }

    let (flo, fhi) = config.frames_per_phone;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for &p in &reference {
        let nf = rng.gen_range(flo..=fhi);
        for _ in 0..nf {
            rows.push(
                protos[p]
                    .iter()
                    .map(|&c| c + config.emission_noise * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
        }
    }
    if rows.is_empty() {
        // every phone deleted: emit one noise-only frame so T >= 1
        rows.push(
            (0..config.feature_dim)
                .map(|_| config.emission_noise * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
    }

    let utt = Utterance::new(
        format!("{}{index:05}", config.id_prefix),
        FeatureMatrix::from_rows(&rows).expect("rectangular rows"),
        PhoneSequence::from_ids_unchecked(canonical, Role::Canonical),
        Some(PhoneSequence::from_ids_unchecked(reference, Role::Reference)),
    )
    .expect("at least one frame");
    (utt, subs, dels, ins)
}

/// Generates the corpus together with exact injection statistics.
pub fn generate_with_stats(
    config: &GenConfig,
    inventory: &PhoneInventory,
) -> Result<(Vec<Utterance>, GenStats)> {
    config.validate(inventory)?;
    let pools = pools(config, inventory);
    let protos = prototypes(config, inventory.num_phones());
    let results = par_map_indices(config.num_utterances, |i| {
        one_utterance(config, &pools, &protos, i)
    });

    let mut stats = GenStats {
        utterances: config.num_utterances,
        ..GenStats::default()
    };
    let mut utterances = Vec::with_capacity(config.num_utterances);
    for (utt, subs, dels, ins) in results {
        stats.substitutions += subs;
        stats.deletions += dels;
        stats.insertions += ins;
        stats.canonical_phones += utt.canonical.len();
        stats.frames += utt.features.frames();
        for &p in utt.canonical.ids() {
            let sym = inventory.symbol(p).unwrap().to_string();
            stats.phone_table.entry(sym).or_default().0 += 1;
        }
        let reference = utt.reference.as_ref().unwrap();
        let anchored = crate::metrics::canonical_anchored_labels(&utt.canonical, reference);
        for &p in reference.ids() {
            let sym = inventory.symbol(p).unwrap().to_string();
            stats.phone_table.entry(sym).or_default().1 += 1;
        }
        for label in &anchored.labels {
            if let crate::metrics::PositionLabel::Substituted(p) = label {
                let sym = inventory.symbol(*p).unwrap().to_string();
                stats.phone_table.entry(sym).or_default().2 += 1;
            }
        }
        utterances.push(utt);
    }
    Ok((utterances, stats))
}

/// Generates a synthetic corpus; deterministic for a given config.
pub fn generate(config: &GenConfig, inventory: &PhoneInventory) -> Result<Vec<Utterance>> {
    generate_with_stats(config, inventory).map(|(u, _)| u)
}

/// Deterministic disjoint train/dev/test partition by seeded shuffle.
pub fn split(
    utterances: Vec<Utterance>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<Utterance>, Vec<Utterance>, Vec<Utterance>)> {
    if utterances.is_empty() {
        return Err(Error::Contract("cannot split an empty corpus".to_string()));
    }
    let (ft, fd, fe) = fractions;
    if ft < 0.0 || fd < 0.0 || fe < 0.0 || (ft + fd + fe - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be nonnegative and sum to 1, got ({ft}, {fd}, {fe})"
        )));
    }
    let n = utterances.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (ft * n as f64).floor() as usize;
    let n_dev = (fd * n as f64).floor() as usize;
    let mut slots: Vec<Option<Utterance>> = utterances.into_iter().map(Some).collect();
    let take = |slots: &mut Vec<Option<Utterance>>, idxs: &[usize]| -> Vec<Utterance> {
        idxs.iter().map(|&i| slots[i].take().unwrap()).collect()
    };
    let train = take(&mut slots, &order[..n_train]);
    let dev = take(&mut slots, &order[n_train..n_train + n_dev]);
    let test = take(&mut slots, &order[n_train + n_dev..]);
    Ok((train, dev, test))
}

// ---- manifest and feature-file I/O ----

const MANIFEST_FORMAT: &str = "mdd-manifest";
const MANIFEST_VERSION: u32 = 1;
pub const FEATURE_CSV_HEADER: &str = "# format: mdd-features v1";

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FeatureSource {
    Path(String),
    Inline { inline: Vec<Vec<f64>> },
}

#[derive(Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    features: FeatureSource,
    canonical: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<Vec<String>>,
}

/// Writes one utterance's features as CSV, one frame per row.
pub fn write_feature_csv(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut out = String::new();
    out.push_str(FEATURE_CSV_HEADER);
    out.push('\n');
    let header: Vec<String> = (0..features.dim()).map(|i| format!("f{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in features.rows() {
        // shortest round-trip-exact decimal per cell
        let cells: Vec<String> = row
            .iter()
            .map(|v| serde_json::Number::from_f64(*v).expect("finite").to_string())
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a feature CSV written by [`write_feature_csv`].
pub fn read_feature_csv(path: &Path) -> Result<FeatureMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            saw_header = true; // column-name row
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad feature value {c:?} in {path:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    FeatureMatrix::from_rows(&rows)
}

/// Writes `manifest.jsonl` (and per-utterance feature CSVs under
/// `features/` unless `inline` is set) into `dir`.
pub fn save_corpus(
    dir: &Path,
    utterances: &[Utterance],
    inventory: &PhoneInventory,
    inline: bool,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let feature_dir = dir.join("features");
    if !inline {
        std::fs::create_dir_all(&feature_dir)?;
    }
    let manifest_path = dir.join("manifest.jsonl");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&manifest_path)?);
    let header = ManifestHeader {
        format: MANIFEST_FORMAT.to_string(),
        version: MANIFEST_VERSION,
    };
    writeln!(file, "{}", serde_json::to_string(&header)?)?;
    for utt in utterances {
        let features = if inline {
            FeatureSource::Inline {
                inline: utt.features.rows().map(<[f64]>::to_vec).collect(),
            }
        } else {
            let rel = format!("features/{}.csv", utt.id);
            write_feature_csv(&dir.join(&rel), &utt.features)?;
            FeatureSource::Path(rel)
        };
        let record = ManifestRecord {
            id: utt.id.clone(),
            features,
            canonical: inventory.decode(&utt.canonical)?,
            reference: utt
                .reference
                .as_ref()
                .map(|r| inventory.decode(r))
                .transpose()?,
        };
        writeln!(file, "{}", serde_json::to_string(&record)?)?;
    }
    Ok(manifest_path)
}

/// Loads a manifest; relative feature paths resolve against the manifest's
/// directory. Errors name the offending record.
pub fn load_manifest(path: &Path, inventory: &PhoneInventory) -> Result<Vec<Utterance>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Format(format!("cannot open manifest {path:?}: {e}")))?;
    let reader = std::io::BufReader::new(file);
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut utterances = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("empty manifest".to_string()))??;
    let header: ManifestHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Format(format!("bad manifest header: {e}")))?;
    if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest format {}/{} (expected {MANIFEST_FORMAT}/{MANIFEST_VERSION})",
            header.format, header.version
        )));
    }
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("manifest line {}: {e}", lineno + 2)))?;
        let id = record.id.clone();
        if !seen_ids.insert(id.clone()) {
            return Err(Error::Format(format!("duplicate utterance id {id:?}")));
        }
        let ctx = id.clone();
        let with_record = move |e: Error| Error::Format(format!("record {ctx:?}: {e}"));
        let features = match record.features {
            FeatureSource::Path(rel) => {
                let p = base.join(rel);
                read_feature_csv(&p).map_err(|e| with_record(e))?
            }
            FeatureSource::Inline { inline } => {
                FeatureMatrix::from_rows(&inline).map_err(|e| with_record(e))?
            }
        };
        let canonical = inventory
            .encode(&record.canonical, Role::Canonical)
            .map_err(|e| with_record(e))?;
        let reference = record
            .reference
            .map(|r| inventory.encode(&r, Role::Reference))
            .transpose()
            .map_err(|e| with_record(e))?;
        utterances.push(Utterance::new(id, features, canonical, reference).map_err(|e| with_record(e))?);
    }
    Ok(utterances)
}
