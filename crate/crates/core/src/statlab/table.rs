use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::beta::Design;
use super::transform::{standardize, yeo_johnson, Moments};
use super::StatError;
use crate::hetgraph::{HeteroGraph, NodeKind};
use crate::ingest::MoralVector;
use crate::par::{self, Execution};
use crate::polmetrics::{
    alignment, author_politics, count_segment, relevance, EdgeScope, GlobalPoliticalTotals, PoliticalColors,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub kind: ColumnKind,
    pub transform: String,
    pub lambda: Option<f64>,
}

/// Review-level rows keyed by (reviewer, product) with a response in (0, 1).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub reviewers: Vec<String>,
    pub products: Vec<String>,
    pub manifest: Vec<ColumnInfo>,
    pub columns: Vec<Vec<f64>>,
    pub response: Vec<f64>,
    /// Transform diagnostics per prepared column.
    pub diagnostics: BTreeMap<String, Moments>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FeatureReport {
    pub rows: usize,
    pub reviewers_kept: usize,
    pub reviewers_dropped: usize,
    pub rows_without_moral: usize,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.manifest.iter().map(|c| c.name.as_str())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.manifest
            .iter()
            .position(|c| c.name == name)
            .map(|i| self.columns[i].as_slice())
    }

    fn push(&mut self, name: &str, kind: ColumnKind, values: Vec<f64>) {
        self.manifest.push(ColumnInfo {
            name: name.to_string(),
            kind,
            transform: "none".into(),
            lambda: None,
        });
        self.columns.push(values);
    }

    /// Removes columns with a single distinct value; returns their names.
    pub fn drop_constant(&mut self) -> Vec<String> {
        let mut dropped = Vec::new();
        let mut i = 0;
        while i < self.columns.len() {
            let c = &self.columns[i];
            if c.iter().all(|&v| v == c[0]) {
                dropped.push(self.manifest.remove(i).name);
                self.columns.remove(i);
            } else {
                i += 1;
            }
        }
        dropped
    }

    /// Yeo-Johnson then standardization for every continuous column.
    pub fn prepare(&self, exec: Execution) -> Result<FeatureTable, StatError> {
        let idx: Vec<usize> = (0..self.columns.len()).collect();
        let results = par::map_slice(
            exec,
            &idx,
            |&i| -> Result<(Vec<f64>, ColumnInfo, Option<Moments>), StatError> {
                let info = &self.manifest[i];
                if info.kind != ColumnKind::Continuous {
                    return Ok((self.columns[i].clone(), info.clone(), None));
                }
                let (t, lambda) = yeo_johnson(&self.columns[i], None)?;
                let (z, m) = standardize(&info.name, &t)?;
                let info = ColumnInfo {
                    transform: "yeo_johnson+standardize".into(),
                    lambda: Some(lambda),
                    ..info.clone()
                };
                Ok((z, info, Some(m)))
            },
        );
        let mut out = FeatureTable {
            reviewers: self.reviewers.clone(),
            products: self.products.clone(),
            response: self.response.clone(),
            ..Default::default()
        };
        for r in results {
            let (col, info, m) = r?;
            if let Some(m) = m {
                out.diagnostics.insert(info.name.clone(), m);
            }
            out.manifest.push(info);
            out.columns.push(col);
        }
        Ok(out)
    }

    /// Manifest as `#`-prefixed lines, then a header and one row per review.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), StatError> {
        for c in &self.manifest {
            let kind = match c.kind {
                ColumnKind::Continuous => "continuous",
                ColumnKind::Indicator => "indicator",
            };
            let lambda = c.lambda.map_or(String::new(), |l| l.to_string());
            writeln!(w, "# column,{},{},{},{}", c.name, kind, c.transform, lambda)?;
        }
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["reviewer", "asin"];
        header.extend(self.names());
        header.push("response");
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.reviewers[i].clone(), self.products[i].clone()];
            rec.extend(self.columns.iter().map(|c| c[i].to_string()));
            rec.push(self.response[i].to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<FeatureTable, StatError> {
        let mut reader = BufReader::new(r);
        let mut manifest = Vec::new();
        let mut line = String::new();
        let mut body = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            if let Some(rest) = line.strip_prefix("# column,") {
                let f: Vec<&str> = rest.trim_end().split(',').collect();
                if f.len() != 4 {
                    return Err(StatError::Format(format!("bad manifest line {line:?}")));
                }
                manifest.push(ColumnInfo {
                    name: f[0].to_string(),
                    kind: if f[1] == "indicator" {
                        ColumnKind::Indicator
                    } else {
                        ColumnKind::Continuous
                    },
                    transform: f[2].to_string(),
                    lambda: if f[3].is_empty() { None } else { f[3].parse().ok() },
                });
            } else {
                body.push_str(&line);
                reader.read_to_string(&mut body)?;
                break;
            }
        }
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let header = rdr.headers()?.clone();
        let p = header.len().saturating_sub(3);
        if p != manifest.len() {
            return Err(StatError::Format("manifest does not match header".into()));
        }
        let mut t = FeatureTable {
            manifest,
            columns: vec![Vec::new(); p],
            ..Default::default()
        };
        for rec in rdr.records() {
            let rec = rec?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| StatError::Format(format!("bad number {s:?}")))
            };
            t.reviewers.push(rec[0].to_string());
            t.products.push(rec[1].to_string());
            for j in 0..p {
                t.columns[j].push(num(&rec[j + 2])?);
            }
            t.response.push(num(&rec[p + 2])?);
        }
        Ok(t)
    }
}

pub const MORAL_COLUMNS: usize = 10;

/// One row per review of a scored product by a reviewer with at least
/// `min_reviews` reviews. `lifestyle` maps product keys to the response.
pub fn build_feature_table(
    g: &HeteroGraph,
    colors: &PoliticalColors,
    lifestyle: &HashMap<String, f64>,
    totals: &GlobalPoliticalTotals,
    min_reviews: usize,
) -> Result<(FeatureTable, FeatureReport), StatError> {
    let scope = EdgeScope::all();
    let mut report = FeatureReport::default();
    let mut kept_authors = BTreeSet::new();
    for a in g.nodes_of_kind(NodeKind::Author) {
        if g.degree(a, crate::EdgeKind::Reviews) >= min_reviews {
            kept_authors.insert(a);
        } else {
            report.reviewers_dropped += 1;
        }
    }
    report.reviewers_kept = kept_authors.len();

    let mut product_cache: HashMap<u32, (f64, f64)> = HashMap::new();
    let mut author_cache: HashMap<u32, (f64, f64)> = HashMap::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 6 + MORAL_COLUMNS];
    let mut cats: Vec<String> = Vec::new();
    let mut t = FeatureTable::default();
    let err = |e: crate::polmetrics::PolError| StatError::Format(e.to_string());

    for (&(a, p), r) in g.reviews() {
        if !kept_authors.contains(&a) {
            continue;
        }
        let Some(&y) = lifestyle.get(g.key(p)) else { continue };
        let (pa, pr) = match product_cache.get(&p) {
            Some(v) => *v,
            None => {
                let c = count_segment(g, colors, &scope, &[p]);
                let v = (alignment(&c, totals).map_err(err)?, relevance(&c, totals).map_err(err)?);
                product_cache.insert(p, v);
                v
            }
        };
        let (aa, ar) = match author_cache.get(&a) {
            Some(v) => *v,
            None => {
                let ap = author_politics(a, g, colors, totals).map_err(err)?;
                let v = (ap.alignment, ap.relevance);
                author_cache.insert(a, v);
                v
            }
        };
        let helpful = if r.helpful_total > 0 {
            r.helpful_up as f64 / r.helpful_total as f64
        } else {
            0.0
        };
        let row = [pa, pr, aa, ar, helpful, r.rating as f64];
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
        let moral = r.moral.unwrap_or_else(|| {
            report.rows_without_moral += 1;
            MoralVector([0.0; MoralVector::LEN])
        });
        for k in 0..MORAL_COLUMNS {
            cols[6 + k].push(moral.0[k]);
        }
        cats.push(
            g.node(p)
                .attrs
                .main_category
                .clone()
                .unwrap_or_else(|| crate::ingest::OTHER.to_string()),
        );
        t.reviewers.push(g.key(a).to_string());
        t.products.push(g.key(p).to_string());
        t.response.push(y);
    }

    let names = [
        "product_alignment",
        "product_relevance",
        "author_alignment",
        "author_relevance",
        "helpfulness",
        "rating",
    ];
    let mut cols = cols.into_iter();
    for name in names {
        t.push(name, ColumnKind::Continuous, cols.next().unwrap());
    }
    for label in &MoralVector::LABELS[..MORAL_COLUMNS] {
        t.push(&format!("moral_{label}"), ColumnKind::Continuous, cols.next().unwrap());
    }
    let levels: BTreeSet<&str> = cats.iter().map(String::as_str).collect();
    for level in levels.iter().skip(1) {
        let ind = cats.iter().map(|c| if c == level { 1.0 } else { 0.0 }).collect();
        t.push(&format!("main_{level}"), ColumnKind::Indicator, ind);
    }
    report.rows = t.len();
    Ok((t, report))
}

/// Model terms: main effects and two-way interactions (`a:b`). An
/// intercept is always included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formula {
    pub terms: Vec<Vec<String>>,
}

impl Formula {
    /// Parses `a + b + a:b`; `.` expands to every table column.
    pub fn parse(spec: &str, table: &FeatureTable) -> Result<Formula, StatError> {
        let mut terms = Vec::new();
        for raw in spec.split('+').map(str::trim).filter(|s| !s.is_empty()) {
            if raw == "." {
                terms.extend(table.names().map(|n| vec![n.to_string()]));
                continue;
            }
            let parts: Vec<String> = raw.split(':').map(|s| s.trim().to_string()).collect();
            if parts.iter().any(String::is_empty) {
                return Err(StatError::Formula(format!("bad term {raw:?}")));
            }
            terms.push(parts);
        }
        if terms.is_empty() {
            return Err(StatError::Formula("empty formula".into()));
        }
        let mut seen = BTreeSet::new();
        terms.retain(|t| seen.insert(t.join(":")));
        Ok(Formula { terms })
    }

    /// Every column plus the product alignment by relevance interaction.
    pub fn default_for(table: &FeatureTable) -> Formula {
        Formula::parse(". + product_alignment:product_relevance", table).expect("non-empty")
    }

    pub fn design(&self, table: &FeatureTable) -> Result<Design, StatError> {
        let n = table.len();
        let mut names = vec!["(Intercept)".to_string()];
        let mut cols = vec![vec![1.0; n]];
        for term in &self.terms {
            let mut col = vec![1.0; n];
            for name in term {
                let c = table
                    .column(name)
                    .ok_or_else(|| StatError::UnknownColumn(name.clone()))?;
                col.iter_mut().zip(c).for_each(|(a, b)| *a *= b);
            }
            names.push(term.join(":"));
            cols.push(col);
        }
        Ok(Design::from_columns(names, &cols))
    }
}
