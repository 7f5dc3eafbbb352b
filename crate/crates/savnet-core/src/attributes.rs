//! Sound attribute vectors and the class dictionary.
//!
//! Fifteen binary attributes describe every event class: three pitch bands,
//! three length classes, four materials, and five situation flags. A class
//! is classified zero-shot purely through this vector, so the dictionary is
//! the single source of truth for both training targets and inference
//! candidates.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Number of attributes K.
pub const NUM_ATTRIBUTES: usize = 15;

/// Canonical attribute order. Checkpoints, CSVs, and score vectors all index
/// attributes in this order.
pub const ATTRIBUTE_NAMES: [&str; NUM_ATTRIBUTES] = [
    "high-pitched",
    "middle-pitched",
    "low-pitched",
    "long",
    "middle",
    "short",
    "wood",
    "metal",
    "plastic",
    "ceramic",
    "repeating",
    "noise-like",
    "falling",
    "collision",
    "many",
];

#[derive(Debug, thiserror::Error)]
pub enum DictError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dictionary parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("invalid attribute vector: {0}")]
    Sav(String),
    #[error("dictionary error: {0}")]
    Invalid(String),
}

/// A binary sound attribute vector in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sav {
    bits: [u8; NUM_ATTRIBUTES],
}

impl Sav {
    pub fn new(bits: [u8; NUM_ATTRIBUTES]) -> Result<Self, DictError> {
        if let Some(k) = bits.iter().position(|&b| b > 1) {
            return Err(DictError::Sav(format!(
                "attribute `{}` has non-binary value {}",
                ATTRIBUTE_NAMES[k], bits[k]
            )));
        }
        Ok(Self { bits })
    }

    pub fn from_slice(bits: &[u8]) -> Result<Self, DictError> {
        let arr: [u8; NUM_ATTRIBUTES] = bits.try_into().map_err(|_| {
            DictError::Sav(format!(
                "expected {NUM_ATTRIBUTES} bits, got {}",
                bits.len()
            ))
        })?;
        Self::new(arr)
    }

    pub fn bits(&self) -> &[u8; NUM_ATTRIBUTES] {
        &self.bits
    }

    pub fn bit(&self, k: usize) -> u8 {
        self.bits[k]
    }

    /// phi(y): the vector as floats in {0,1}.
    pub fn to_f64(&self) -> [f64; NUM_ATTRIBUTES] {
        let mut out = [0.0; NUM_ATTRIBUTES];
        for (o, &b) in out.iter_mut().zip(&self.bits) {
            *o = b as f64;
        }
        out
    }

    /// phi'(y) = 2 phi(y) - 1: the vector rescaled into {-1,+1}.
    pub fn scaled(&self) -> [f64; NUM_ATTRIBUTES] {
        let mut out = [0.0; NUM_ATTRIBUTES];
        for (o, &b) in out.iter_mut().zip(&self.bits) {
            *o = 2.0 * b as f64 - 1.0;
        }
        out
    }

    /// Inverse of [`Sav::scaled`]; rejects anything outside {-1,+1}.
    pub fn from_scaled(values: &[f64]) -> Result<Self, DictError> {
        let mut bits = [0u8; NUM_ATTRIBUTES];
        if values.len() != NUM_ATTRIBUTES {
            return Err(DictError::Sav(format!(
                "expected {NUM_ATTRIBUTES} values, got {}",
                values.len()
            )));
        }
        for (b, &v) in bits.iter_mut().zip(values) {
            *b = if v == 1.0 {
                1
            } else if v == -1.0 {
                0
            } else {
                return Err(DictError::Sav(format!(
                    "scaled value {v} is not in {{-1,+1}}"
                )));
            };
        }
        Ok(Self { bits })
    }
}

impl fmt::Display for Sav {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Seen,
    Unseen,
}

impl Split {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "seen" => Some(Split::Seen),
            "unseen" => Some(Split::Unseen),
            _ => None,
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        }
    }
}

/// Which candidate set a classification task draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Unseen classes only.
    Zs,
    /// Union of seen and unseen classes.
    Gzs,
    /// Seen-class test samples, still classified against the union.
    Seen,
}

impl Task {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zs" => Some(Task::Zs),
            "gzs" => Some(Task::Gzs),
            "seen" => Some(Task::Seen),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Zs => "zs",
            Task::Gzs => "gzs",
            Task::Seen => "seen",
        }
    }
}

/// Class label to SAV map with a seen/unseen tag per class. Iteration is
/// label-lexicographic everywhere, which keeps every downstream artifact
/// deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassDictionary {
    entries: BTreeMap<String, (Sav, Split)>,
}

impl ClassDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: &str, sav: Sav, split: Split) -> Result<(), DictError> {
        if label.is_empty() || label.contains(',') || label.contains('\n') || label.contains('#') {
            return Err(DictError::Invalid(format!("bad class label `{label}`")));
        }
        if self.entries.contains_key(label) {
            return Err(DictError::Invalid(format!(
                "duplicate class label `{label}`"
            )));
        }
        self.entries.insert(label.to_string(), (sav, split));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<(Sav, Split)> {
        self.entries.get(label).copied()
    }

    pub fn sav(&self, label: &str) -> Option<Sav> {
        self.entries.get(label).map(|(s, _)| *s)
    }

    /// Labels of one split, lexicographically ordered.
    pub fn labels(&self, split: Split) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, (_, sp))| *sp == split)
            .map(|(l, _)| l.as_str())
            .collect()
    }

    /// Ordered candidate list for a classification task. Zs draws from the
    /// unseen classes; Gzs and Seen from the union.
    pub fn candidates(&self, task: Task) -> Result<Vec<(String, Sav)>, DictError> {
        let picked: Vec<(String, Sav)> = self
            .entries
            .iter()
            .filter(|(_, (_, sp))| task != Task::Zs || *sp == Split::Unseen)
            .map(|(l, (s, _))| (l.clone(), *s))
            .collect();
        if picked.is_empty() {
            return Err(DictError::Invalid(format!(
                "no candidate classes for task {}",
                task.as_str()
            )));
        }
        Ok(picked)
    }

    /// Groups of two or more classes sharing one SAV. Such classes are
    /// legal but mutually indistinguishable, so callers warn about them.
    pub fn duplicate_sav_groups(&self) -> Vec<Vec<String>> {
        let mut by_sav: BTreeMap<Sav, Vec<String>> = BTreeMap::new();
        for (label, (sav, _)) in &self.entries {
            by_sav.entry(*sav).or_default().push(label.clone());
        }
        by_sav.into_values().filter(|g| g.len() > 1).collect()
    }

    pub fn from_csv_str(text: &str) -> Result<Self, DictError> {
        let mut dict = Self::new();
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if !saw_header {
                let mut want = vec!["label", "split"];
                want.extend_from_slice(&ATTRIBUTE_NAMES);
                if cells != want {
                    return Err(DictError::Parse {
                        line: line_no,
                        detail: format!("bad header; expected `{}`", want.join(",")),
                    });
                }
                saw_header = true;
                continue;
            }
            if cells.len() != 2 + NUM_ATTRIBUTES {
                return Err(DictError::Parse {
                    line: line_no,
                    detail: format!(
                        "expected {} columns, got {}",
                        2 + NUM_ATTRIBUTES,
                        cells.len()
                    ),
                });
            }
            let label = cells[0];
            let split = Split::parse(cells[1]).ok_or_else(|| DictError::Parse {
                line: line_no,
                detail: format!("unknown split tag `{}`", cells[1]),
            })?;
            let mut bits = [0u8; NUM_ATTRIBUTES];
            for (k, cell) in cells[2..].iter().enumerate() {
                bits[k] = match *cell {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(DictError::Parse {
                            line: line_no,
                            detail: format!(
                                "attribute `{}` must be 0 or 1, got `{other}`",
                                ATTRIBUTE_NAMES[k]
                            ),
                        })
                    }
                };
            }
            let sav = Sav::new(bits).map_err(|e| DictError::Parse {
                line: line_no,
                detail: e.to_string(),
            })?;
            dict.insert(label, sav, split)
                .map_err(|e| DictError::Parse {
                    line: line_no,
                    detail: e.to_string(),
                })?;
        }
        if !saw_header {
            return Err(DictError::Parse {
                line: 1,
                detail: "empty dictionary file".into(),
            });
        }
        Ok(dict)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("label,split");
        for name in ATTRIBUTE_NAMES {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (label, (sav, split)) in &self.entries {
            out.push_str(label);
            out.push(',');
            out.push_str(split.as_str());
            for b in sav.bits() {
                out.push(',');
                out.push(char::from(b'0' + b));
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, DictError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), DictError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}
