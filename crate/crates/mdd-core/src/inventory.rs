//! Phone inventory and the sequence types shared by every other module.
//!
//! The inventory is a closed, ordered phone vocabulary loaded from a
//! plain-text file (one symbol per line, `#` comments ignored). The loader
//! appends `unk` after the file symbols; `blank` (CTC) and `eos` (attention
//! decoder) are head-only symbols that never appear inside a
//! [`PhoneSequence`]. Both heads have `num_phones() + 1` outputs with the
//! extra symbol at the last index.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Index of a phone within a [`PhoneInventory`].
pub type PhoneId = usize;

/// Symbol appended to every inventory for non-categorical errors.
pub const UNK_SYMBOL: &str = "unk";
/// Names that may not appear in an inventory file.
pub const RESERVED_SYMBOLS: [&str; 3] = ["unk", "blank", "eos"];

/// Default phone set shipped with the tool: 39 CMU phones plus `sil`.
pub const DEFAULT_PHONES: &str = include_str!("../assets/phones.txt");

/// Closed phone vocabulary. Immutable after construction; safe to share
/// across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInventory {
    symbols: Vec<String>,
    index: HashMap<String, PhoneId>,
}

impl PhoneInventory {
    /// Builds an inventory from base symbols, appending `unk`.
    pub fn from_symbols<S: AsRef<str>>(base: &[S]) -> Result<Self> {
        let mut symbols = Vec::with_capacity(base.len() + 1);
        let mut index = HashMap::with_capacity(base.len() + 1);
        for sym in base {
            let sym = sym.as_ref();
            if RESERVED_SYMBOLS.contains(&sym) {
                return Err(Error::Format(format!(
                    "reserved symbol {sym:?} may not appear in an inventory file"
                )));
            }
            if index.insert(sym.to_string(), symbols.len()).is_some() {
                return Err(Error::Format(format!("duplicate symbol {sym:?}")));
            }
            symbols.push(sym.to_string());
        }
        index.insert(UNK_SYMBOL.to_string(), symbols.len());
        symbols.push(UNK_SYMBOL.to_string());
        Ok(Self { symbols, index })
    }

    /// Parses inventory text: one symbol per line, `#` comments and blank
    /// lines ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let base: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self::from_symbols(&base)
    }

    /// Loads an inventory file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    /// The shipped default set (39 CMU phones + sil + unk).
    pub fn default_set() -> Self {
        Self::from_text(DEFAULT_PHONES).expect("embedded default inventory is valid")
    }

    /// Number of real phones (base symbols + unk). Valid [`PhoneId`]s are
    /// `0..num_phones()`.
    pub fn num_phones(&self) -> usize {
        self.symbols.len()
    }

    /// Output size of either model head (phones + blank, or phones + eos).
    pub fn head_size(&self) -> usize {
        self.symbols.len() + 1
    }

    /// Index of the CTC blank symbol: the last index of the CTC head.
    pub fn blank_id(&self) -> usize {
        self.symbols.len()
    }

    /// Index of eos in the attention head: the last index of that head.
    pub fn eos_id(&self) -> usize {
        self.symbols.len()
    }

    pub fn unk_id(&self) -> PhoneId {
        self.index[UNK_SYMBOL]
    }

    pub fn symbol(&self, id: PhoneId) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<PhoneId> {
        self.index.get(symbol).copied()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Hex SHA-256 over the symbol list; identifies the inventory in
    /// checkpoints.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for s in &self.symbols {
            hasher.update(s.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Encodes symbols to a [`PhoneSequence`], preserving order.
    pub fn encode<S: AsRef<str>>(&self, symbols: &[S], role: Role) -> Result<PhoneSequence> {
        let ids = symbols
            .iter()
            .map(|s| {
                self.id(s.as_ref())
                    .ok_or_else(|| Error::UnknownPhone(s.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PhoneSequence { ids, role })
    }

    /// Decodes a sequence back to symbols. Inverse of [`encode`](Self::encode).
    pub fn decode(&self, seq: &PhoneSequence) -> Result<Vec<String>> {
        seq.ids
            .iter()
            .map(|&id| {
                self.symbol(id)
                    .map(str::to_string)
                    .ok_or_else(|| Error::Contract(format!("phone id {id} out of range")))
            })
            .collect()
    }
}

/// What a phone sequence represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// The text prompt the speaker should have said.
    Canonical,
    /// What human assessors annotated as actually spoken.
    Reference,
    /// What the model believes was spoken.
    Hypothesis,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Canonical => write!(f, "canonical"),
            Role::Reference => write!(f, "reference"),
            Role::Hypothesis => write!(f, "hypothesis"),
        }
    }
}

/// Ordered phones over a fixed inventory. Never contains blank or eos.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneSequence {
    ids: Vec<PhoneId>,
    role: Role,
}

impl PhoneSequence {
    /// Constructs a sequence, validating every id against the inventory.
    pub fn new(ids: Vec<PhoneId>, role: Role, inventory: &PhoneInventory) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&id| id >= inventory.num_phones()) {
            return Err(Error::Contract(format!(
                "phone id {bad} is outside the inventory (size {})",
                inventory.num_phones()
            )));
        }
        Ok(Self { ids, role })
    }

    /// Constructs without inventory validation. Callers guarantee the ids
    /// are in range and exclude blank/eos.
    pub fn from_ids_unchecked(ids: Vec<PhoneId>, role: Role) -> Self {
        Self { ids, role }
    }

    pub fn ids(&self) -> &[PhoneId] {
        &self.ids
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Same ids under a different role.
    pub fn with_role(&self, role: Role) -> Self {
        Self {
            ids: self.ids.clone(),
            role,
        }
    }
}

/// T x d acoustic feature frames for one utterance, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    frames: usize,
    dim: usize,
}

impl FeatureMatrix {
    pub fn new(frames: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * dim {
            return Err(Error::Shape {
                op: "FeatureMatrix::new",
                detail: format!(
                    "{} values cannot fill {frames} frames of dim {dim}",
                    data.len()
                ),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "non-finite feature value {bad}"
            )));
        }
        Ok(Self { data, frames, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let frames = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape {
                op: "FeatureMatrix::from_rows",
                detail: "ragged rows".to_string(),
            });
        }
        Self::new(frames, dim, rows.concat())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// One utterance: features plus its canonical prompt and, when annotated,
/// the reference (spoken) sequence.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub features: FeatureMatrix,
    pub canonical: PhoneSequence,
    /// Absent for unannotated decode-only input.
    pub reference: Option<PhoneSequence>,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        features: FeatureMatrix,
        canonical: PhoneSequence,
        reference: Option<PhoneSequence>,
    ) -> Result<Self> {
        if features.frames() == 0 {
            return Err(Error::Contract(
                "utterance must have at least one feature frame".to_string(),
            ));
        }
        Ok(Self {
            id: id.into(),
            features,
            canonical,
            reference,
        })
    }

    /// The annotated reference, or a contract error for decode-only input.
    pub fn reference(&self) -> Result<&PhoneSequence> {
        self.reference
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("utterance {} has no reference", self.id)))
    }
}
