use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoliticalClass {
    Conservative,
    Liberal,
    Nonpolitical,
}

impl PoliticalClass {
    pub const ALL: [PoliticalClass; 3] = [
        PoliticalClass::Conservative,
        PoliticalClass::Liberal,
        PoliticalClass::Nonpolitical,
    ];

    /// Class index used by the classifier heads.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<PoliticalClass> {
        PoliticalClass::ALL.get(i).copied()
    }

    pub fn is_political(self) -> bool {
        self != PoliticalClass::Nonpolitical
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PoliticalClass::Conservative => "conservative",
            PoliticalClass::Liberal => "liberal",
            PoliticalClass::Nonpolitical => "nonpolitical",
        }
    }
}

impl fmt::Display for PoliticalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoliticalClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "conservative" | "red" => Ok(PoliticalClass::Conservative),
            "liberal" | "blue" => Ok(PoliticalClass::Liberal),
            "nonpolitical" | "non-political" | "non_political" => Ok(PoliticalClass::Nonpolitical),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

/// Where a label came from. Ordered by precedence: seed > human > model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Model,
    Human,
    Seed,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Model => "model",
            Provenance::Human => "human",
            Provenance::Seed => "seed",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "model" => Ok(Provenance::Model),
            "human" => Ok(Provenance::Human),
            "seed" => Ok(Provenance::Seed),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoliticalLabel {
    /// External product key (ASIN).
    pub product: String,
    pub class: PoliticalClass,
    pub probability: f64,
    pub provenance: Provenance,
    pub iteration: u32,
}

impl PoliticalLabel {
    pub fn seed(product: &str, class: PoliticalClass) -> Self {
        PoliticalLabel {
            product: product.to_string(),
            class,
            probability: 1.0,
            provenance: Provenance::Seed,
            iteration: 0,
        }
    }

    pub fn human(product: &str, class: PoliticalClass, iteration: u32) -> Self {
        PoliticalLabel {
            product: product.to_string(),
            class,
            probability: 1.0,
            provenance: Provenance::Human,
            iteration,
        }
    }

    pub fn model(product: &str, class: PoliticalClass, probability: f64, iteration: u32) -> Self {
        PoliticalLabel {
            product: product.to_string(),
            class,
            probability: probability.clamp(0.0, 1.0),
            provenance: Provenance::Model,
            iteration,
        }
    }
}

/// Result of offering a label to a [`LabelStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMerge {
    Inserted,
    Replaced,
    /// Same class already present with equal or higher precedence.
    Unchanged,
    /// A higher-precedence label with a different class blocks the offer.
    Rejected(Provenance),
}

/// At most one active label per product, keyed by product key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStore {
    labels: BTreeMap<String, PoliticalLabel>,
}

impl LabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, product: &str) -> Option<&PoliticalLabel> {
        self.labels.get(product)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PoliticalLabel> {
        self.labels.values()
    }

    pub fn class_of(&self, product: &str) -> Option<PoliticalClass> {
        self.labels.get(product).map(|l| l.class)
    }

    /// Offers a label, honoring seed > human > model precedence. Equal
    /// precedence replaces (a later human verdict or a newer model label).
    pub fn offer(&mut self, label: PoliticalLabel) -> LabelMerge {
        match self.labels.get(&label.product) {
            None => {
                self.labels.insert(label.product.clone(), label);
                LabelMerge::Inserted
            }
            Some(existing) if existing.provenance > label.provenance => {
                if existing.class == label.class {
                    LabelMerge::Unchanged
                } else {
                    LabelMerge::Rejected(existing.provenance)
                }
            }
            Some(existing) if existing == &label => LabelMerge::Unchanged,
            Some(_) => {
                self.labels.insert(label.product.clone(), label);
                LabelMerge::Replaced
            }
        }
    }

    pub fn remove_model_labels(&mut self) {
        self.labels.retain(|_, l| l.provenance != Provenance::Model);
    }

    pub fn class_counts(&self) -> BTreeMap<PoliticalClass, usize> {
        let mut counts = BTreeMap::new();
        for l in self.labels.values() {
            *counts.entry(l.class).or_insert(0) += 1;
        }
        counts
    }

    /// Writes `asin,class,probability,provenance,iteration`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["asin", "class", "probability", "provenance", "iteration"])?;
        for l in self.labels.values() {
            out.write_record([
                l.product.as_str(),
                l.class.as_str(),
                &format!("{}", l.probability),
                l.provenance.as_str(),
                &l.iteration.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<LabelStore, String> {
        let mut store = LabelStore::new();
        let mut rdr = csv::Reader::from_reader(r);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let field = |i: usize| rec.get(i).ok_or(format!("row {}: missing column {i}", line + 2));
            let label = PoliticalLabel {
                product: field(0)?.to_string(),
                class: field(1)?.parse()?,
                probability: field(2)?.parse().map_err(|e| format!("row {}: {e}", line + 2))?,
                provenance: field(3)?.parse()?,
                iteration: field(4)?.parse().map_err(|e| format!("row {}: {e}", line + 2))?,
            };
            store.offer(label);
        }
        Ok(store)
    }
}
