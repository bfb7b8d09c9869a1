//! Hint sets: complete assignments of the six planner booleans, and the
//! catalog of hint sets every query is planned under.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("hint set {id} duplicates hint set {first}")]
    DuplicateHintSet { id: usize, first: usize },
    #[error("hint set {id} enables no {missing} method")]
    InvalidHintSet { id: usize, missing: &'static str },
    #[error("catalog entry 0 must enable every knob")]
    MissingDefault,
    #[error("catalog entry at position {position} has id {id}; ids must be 0..n-1 in order")]
    NonContiguousIds { position: usize, id: usize },
    #[error("malformed catalog document: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Knob {
    HashJoin,
    MergeJoin,
    NestLoop,
    IndexScan,
    SeqScan,
    IndexOnlyScan,
}

impl Knob {
    /// Statement order.
    pub const ALL: [Knob; 6] =
        [Knob::HashJoin, Knob::MergeJoin, Knob::NestLoop, Knob::IndexScan, Knob::SeqScan, Knob::IndexOnlyScan];
    pub const JOINS: [Knob; 3] = [Knob::HashJoin, Knob::MergeJoin, Knob::NestLoop];
    pub const SCANS: [Knob; 3] = [Knob::IndexScan, Knob::SeqScan, Knob::IndexOnlyScan];

    pub fn name(self) -> &'static str {
        match self {
            Knob::HashJoin => "enable_hashjoin",
            Knob::MergeJoin => "enable_mergejoin",
            Knob::NestLoop => "enable_nestloop",
            Knob::IndexScan => "enable_indexscan",
            Knob::SeqScan => "enable_seqscan",
            Knob::IndexOnlyScan => "enable_indexonlyscan",
        }
    }
}

/// A single (knob, value) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HintFlag {
    pub knob: Knob,
    pub value: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HintFlags {
    pub enable_hashjoin: bool,
    pub enable_mergejoin: bool,
    pub enable_nestloop: bool,
    pub enable_indexscan: bool,
    pub enable_seqscan: bool,
    pub enable_indexonlyscan: bool,
}

impl HintFlags {
    pub const ALL_ON: HintFlags = HintFlags {
        enable_hashjoin: true,
        enable_mergejoin: true,
        enable_nestloop: true,
        enable_indexscan: true,
        enable_seqscan: true,
        enable_indexonlyscan: true,
    };

    pub fn get(&self, knob: Knob) -> bool {
        match knob {
            Knob::HashJoin => self.enable_hashjoin,
            Knob::MergeJoin => self.enable_mergejoin,
            Knob::NestLoop => self.enable_nestloop,
            Knob::IndexScan => self.enable_indexscan,
            Knob::SeqScan => self.enable_seqscan,
            Knob::IndexOnlyScan => self.enable_indexonlyscan,
        }
    }

    pub fn set(&mut self, knob: Knob, value: bool) {
        let slot = match knob {
            Knob::HashJoin => &mut self.enable_hashjoin,
            Knob::MergeJoin => &mut self.enable_mergejoin,
            Knob::NestLoop => &mut self.enable_nestloop,
            Knob::IndexScan => &mut self.enable_indexscan,
            Knob::SeqScan => &mut self.enable_seqscan,
            Knob::IndexOnlyScan => &mut self.enable_indexonlyscan,
        };
        *slot = value;
    }

    pub fn from_bits(bits: [bool; 6]) -> Self {
        let mut f = HintFlags::ALL_ON;
        for (k, b) in Knob::ALL.into_iter().zip(bits) {
            f.set(k, b);
        }
        f
    }

    pub fn bits(&self) -> [bool; 6] {
        Knob::ALL.map(|k| self.get(k))
    }

    pub fn flags(&self) -> [HintFlag; 6] {
        Knob::ALL.map(|knob| HintFlag { knob, value: self.get(knob) })
    }

    pub fn is_valid(&self) -> bool {
        Knob::JOINS.iter().any(|&k| self.get(k)) && Knob::SCANS.iter().any(|&k| self.get(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HintSet {
    pub id: usize,
    pub flags: HintFlags,
}

impl HintSet {
    pub fn is_default(&self) -> bool {
        self.flags == HintFlags::ALL_ON
    }

    /// `SET <knob> = on|off`, one per knob in [`Knob::ALL`] order.
    pub fn to_set_statements(&self) -> Vec<String> {
        self.flags
            .flags()
            .iter()
            .map(|f| format!("SET {} = {}", f.knob.name(), if f.value { "on" } else { "off" }))
            .collect()
    }

    /// Short label such as `hash+merge/seq`.
    pub fn label(&self) -> String {
        let pick = |knobs: &[Knob]| {
            knobs
                .iter()
                .filter(|&&k| self.flags.get(k))
                .map(|k| k.name().trim_start_matches("enable_"))
                .collect::<Vec<_>>()
                .join("+")
        };
        format!("{}/{}", pick(&Knob::JOINS), pick(&Knob::SCANS))
    }
}

/// Ordered, validated list of hint sets; entry 0 is the all-on default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    entries: Vec<HintSet>,
}

impl Catalog {
    /// Validates a list of flag assignments; ids are assigned by position.
    pub fn from_flags(flags: Vec<HintFlags>) -> Result<Self, CatalogError> {
        let entries = flags.into_iter().enumerate().map(|(id, flags)| HintSet { id, flags }).collect();
        Self::from_entries(entries)
    }

    fn from_entries(entries: Vec<HintSet>) -> Result<Self, CatalogError> {
        match entries.first() {
            Some(h) if h.is_default() => {}
            _ => return Err(CatalogError::MissingDefault),
        }
        let mut seen = std::collections::HashMap::new();
        for (position, h) in entries.iter().enumerate() {
            if h.id != position {
                return Err(CatalogError::NonContiguousIds { position, id: h.id });
            }
            if !Knob::JOINS.iter().any(|&k| h.flags.get(k)) {
                return Err(CatalogError::InvalidHintSet { id: h.id, missing: "join" });
            }
            if !Knob::SCANS.iter().any(|&k| h.flags.get(k)) {
                return Err(CatalogError::InvalidHintSet { id: h.id, missing: "scan" });
            }
            if let Some(&first) = seen.get(&h.flags) {
                return Err(CatalogError::DuplicateHintSet { id: h.id, first });
            }
            seen.insert(h.flags, h.id);
        }
        Ok(Catalog { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&HintSet> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> &[HintSet] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &HintSet> {
        self.entries.iter()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("catalog serializes")
    }

    /// Hex digest of the ordered flag assignments.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            let bits: String = e.flags.bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
            h.update(format!("{}:{};", e.id, bits).as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Every valid assignment: non-empty join subset × non-empty scan subset,
/// 7 × 7 = 49 entries. The all-on set comes first; the rest follow in
/// lexicographic order of their knob values (`off` < `on`, statement order).
pub fn default_catalog() -> Catalog {
    let mut rest: Vec<[bool; 6]> = (0u8..64)
        .map(|m| std::array::from_fn(|i| m & (1 << (5 - i)) != 0))
        .filter(|bits: &[bool; 6]| HintFlags::from_bits(*bits).is_valid())
        .filter(|bits| bits.iter().any(|b| !b))
        .collect();
    rest.sort();
    let flags = std::iter::once(HintFlags::ALL_ON).chain(rest.into_iter().map(HintFlags::from_bits)).collect();
    Catalog::from_flags(flags).expect("enumerated catalog is valid")
}

/// Parses a JSON list of `{"id": int, "flags": {knob: bool, ...}}` objects.
pub fn parse_catalog(text: &str) -> Result<Catalog, CatalogError> {
    let entries: Vec<HintSet> = serde_json::from_str(text).map_err(|e| CatalogError::Malformed(e.to_string()))?;
    // Duplicate detection runs before default/id checks so that the most
    // specific complaint is reported.
    let mut seen = HashSet::new();
    for h in &entries {
        if !seen.insert(h.flags) {
            let first = entries.iter().find(|o| o.flags == h.flags).map_or(0, |o| o.id);
            return Err(CatalogError::DuplicateHintSet { id: h.id, first });
        }
    }
    Catalog::from_entries(entries)
}
