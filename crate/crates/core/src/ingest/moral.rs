use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;

/// Multi-label moral probabilities for one review. Components are
/// independent and need not sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoralVector(pub [f64; MoralVector::LEN]);

impl MoralVector {
    pub const LEN: usize = 11;
    pub const LABELS: [&'static str; MoralVector::LEN] = [
        "care",
        "harm",
        "fairness",
        "cheating",
        "loyalty",
        "betrayal",
        "authority",
        "subversion",
        "purity",
        "degradation",
        "non_moral",
    ];
    pub const NON_MORAL: usize = 10;

    pub fn get(&self, label: &str) -> Option<f64> {
        MoralVector::LABELS.iter().position(|l| *l == label).map(|i| self.0[i])
    }
}

fn canonical_label(header: &str) -> Option<usize> {
    let h: String = header
        .trim()
        .to_ascii_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphabetic())
        .collect();
    let h = if h == "nonmoral" { "non_moral".to_string() } else { h };
    MoralVector::LABELS.iter().position(|l| *l == h)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MoralReport {
    pub rows: usize,
    pub accepted: usize,
    pub skipped: BTreeMap<String, usize>,
    /// Per label: reviews with a strictly positive probability.
    pub presence: BTreeMap<String, usize>,
    /// Per label: summed probability.
    pub mass: BTreeMap<String, f64>,
    /// Filled in when the scores are attached to a graph.
    pub unmatched: usize,
}

#[derive(Debug, Clone, Default)]
pub struct MoralScores {
    pub vectors: BTreeMap<(String, String), MoralVector>,
    pub report: MoralReport,
}

impl MoralScores {
    pub fn get(&self, reviewer: &str, asin: &str) -> Option<&MoralVector> {
        self.vectors.get(&(reviewer.to_string(), asin.to_string()))
    }
}

/// Reads `reviewerID,asin` plus the eleven label columns, located by header
/// name so column order does not matter.
pub fn read_moral_scores<R: Read>(r: R) -> Result<MoralScores, String> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let reviewer_col = find("reviewerID").ok_or("missing reviewerID column")?;
    let asin_col = find("asin").ok_or("missing asin column")?;
    let mut cols = [usize::MAX; MoralVector::LEN];
    for (i, h) in headers.iter().enumerate() {
        if let Some(label) = canonical_label(h) {
            cols[label] = i;
        }
    }
    if let Some(missing) = cols.iter().position(|&c| c == usize::MAX) {
        return Err(format!("missing column {}", MoralVector::LABELS[missing]));
    }

    let mut scores = MoralScores::default();
    let mut presence = [0usize; MoralVector::LEN];
    let mut mass = [0f64; MoralVector::LEN];
    let skip = |report: &mut MoralReport, reason: &str| {
        *report.skipped.entry(reason.to_string()).or_insert(0) += 1;
    };
    for rec in rdr.records() {
        scores.report.rows += 1;
        let Ok(rec) = rec else {
            skip(&mut scores.report, "malformed");
            continue;
        };
        let reviewer = rec.get(reviewer_col).unwrap_or("").trim();
        let asin = rec.get(asin_col).unwrap_or("").trim();
        if reviewer.is_empty() || asin.is_empty() {
            skip(&mut scores.report, "missing_key");
            continue;
        }
        let mut v = [0.0; MoralVector::LEN];
        let mut bad = None;
        for (label, &col) in cols.iter().enumerate() {
            match rec.get(col).unwrap_or("").trim().parse::<f64>() {
                Ok(x) if (0.0..=1.0).contains(&x) => v[label] = x,
                Ok(_) => bad = bad.or(Some("range")),
                Err(_) => bad = bad.or(Some("parse")),
            }
        }
        if let Some(reason) = bad {
            skip(&mut scores.report, reason);
            continue;
        }
        for i in 0..MoralVector::LEN {
            if v[i] > 0.0 {
                presence[i] += 1;
            }
            mass[i] += v[i];
        }
        scores.report.accepted += 1;
        scores
            .vectors
            .insert((reviewer.to_string(), asin.to_string()), MoralVector(v));
    }
    for (i, label) in MoralVector::LABELS.iter().enumerate() {
        scores.report.presence.insert(label.to_string(), presence[i]);
        scores.report.mass.insert(label.to_string(), mass[i]);
    }
    Ok(scores)
}

pub fn load_moral_scores(path: &Path) -> Result<MoralScores, IngestError> {
    let f = File::open(path).map_err(|source| IngestError::Read {
        path: path.display().to_string(),
        source,
    })?;
    read_moral_scores(f).map_err(|message| IngestError::Format {
        path: path.display().to_string(),
        message,
    })
}

/// Attaches vectors to matching reviews edges; returns the graph and the
/// number of score rows that matched no review.
pub fn attach_moral_scores(
    g: &crate::hetgraph::HeteroGraph,
    scores: &MoralScores,
) -> (crate::hetgraph::HeteroGraph, usize) {
    use crate::hetgraph::NodeKind;
    let mut lookup: HashMap<(&str, &str), (u32, u32)> = HashMap::new();
    for ((a, p), _) in g.reviews() {
        lookup.insert((g.key(*a), g.key(*p)), (*a, *p));
    }
    let mut b = g.thaw();
    let mut unmatched = 0;
    for ((reviewer, asin), v) in &scores.vectors {
        match lookup.get(&(reviewer.as_str(), asin.as_str())) {
            Some(&(a, p)) => {
                debug_assert_eq!(g.kind(a), NodeKind::Author);
                if let Some(r) = b.review_attrs_mut(a, p) {
                    r.moral = Some(*v);
                }
            }
            None => unmatched += 1,
        }
    }
    (b.freeze(), unmatched)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "reviewerID,asin,non-moral,care,harm,fairness,cheating,loyalty,betrayal,authority,subversion,purity,degradation\n";

    #[test]
    fn non_moral_only_row() {
        let csv = format!("{HEADER}A,B,0.99,0,0,0,0,0,0,0,0,0,0\n");
        let s = read_moral_scores(csv.as_bytes()).unwrap();
        let v = s.get("A", "B").unwrap();
        assert_eq!(v.0[MoralVector::NON_MORAL], 0.99);
        assert_eq!(s.report.presence["non_moral"], 1);
        assert_eq!(s.report.presence["care"], 0);
    }

    #[test]
    fn out_of_range_row_skipped() {
        let csv = format!("{HEADER}A,B,0,1.3,0,0,0,0,0,0,0,0,0\nA,C,0,x,0,0,0,0,0,0,0,0,0\n");
        let s = read_moral_scores(csv.as_bytes()).unwrap();
        assert!(s.vectors.is_empty());
        assert_eq!(s.report.skipped["range"], 1);
        assert_eq!(s.report.skipped["parse"], 1);
    }

    #[test]
    fn aggregates_match_hand_sums() {
        let csv = format!(
            "{HEADER}\
             A,B,0.5,0.2,0,0,0,0,0,0,0,0,0.1\n\
             A,C,0.0,0.3,0.4,0,0,0,0,0,0,0,0\n\
             D,B,1.0,0,0,0,0,0,0,0,0,0,0.25\n"
        );
        let s = read_moral_scores(csv.as_bytes()).unwrap();
        let r = &s.report;
        assert_eq!(r.accepted, 3);
        assert_eq!(r.presence["non_moral"], 2);
        assert_eq!(r.presence["care"], 2);
        assert_eq!(r.presence["harm"], 1);
        assert_eq!(r.presence["degradation"], 2);
        assert!((r.mass["non_moral"] - 1.5).abs() < 1e-12);
        assert!((r.mass["care"] - 0.5).abs() < 1e-12);
        assert!((r.mass["degradation"] - 0.35).abs() < 1e-12);
    }

    #[test]
    fn missing_column_is_an_error() {
        assert!(read_moral_scores("reviewerID,asin,care\n".as_bytes()).is_err());
    }
}
