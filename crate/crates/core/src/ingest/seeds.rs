use std::collections::HashMap;
use std::io::Read;

use serde::Serialize;

use super::{partial_ratio, ProductMeta};
use crate::hetgraph::PoliticalClass;
use crate::par::{self, Execution};

/// Hand-verified political title. Only conservative or liberal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedLabel {
    pub title: String,
    pub class: PoliticalClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedMatch {
    pub asin: String,
    pub class: PoliticalClass,
    pub score: u8,
    pub needs_review: bool,
    pub seed_title: String,
    pub product_title: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SeedMatchReport {
    pub matches: Vec<SeedMatch>,
    pub unmatched: Vec<SeedLabel>,
    /// Seeds whose best product was already claimed by an earlier seed.
    pub duplicates: usize,
    /// Duplicates whose class disagreed with the claiming seed.
    pub class_conflicts: usize,
}

/// Reads a `title,class` CSV. Rows with a non-binary class are rejected.
pub fn read_seeds_csv<R: Read>(r: R) -> Result<Vec<SeedLabel>, String> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let title = rec.get(0).unwrap_or("").trim().to_string();
        let class: PoliticalClass = rec.get(1).unwrap_or("").parse()?;
        if !class.is_political() {
            return Err(format!("seed row {}: class must be conservative or liberal", i + 2));
        }
        if !title.is_empty() {
            out.push(SeedLabel { title, class });
        }
    }
    Ok(out)
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Matches each seed to its best-scoring product title.
///
/// Titles are compared case-insensitively with whitespace collapsed. Ties
/// prefer an exact title match, then the shorter title, then the smaller
/// ASIN. Anything other than an exact title match is flagged for review.
pub fn match_seeds(seeds: &[SeedLabel], products: &[ProductMeta], threshold: u8, exec: Execution) -> SeedMatchReport {
    let titles: Vec<(usize, String, usize)> = products
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.title.trim().is_empty())
        .map(|(i, p)| {
            let t = normalize(&p.title);
            let len = t.chars().count();
            (i, t, len)
        })
        .collect();

    let best: Vec<Option<(usize, u8, bool)>> = par::map_slice(exec, seeds, |seed| {
        let s = normalize(&seed.title);
        let mut best: Option<(usize, u8, bool, usize)> = None;
        for (i, t, len) in &titles {
            let score = partial_ratio(&s, t);
            let exact = *t == s;
            let better = match best {
                None => true,
                Some((bi, bs, bx, blen)) => (score, exact, std::cmp::Reverse(*len))
                    .cmp(&(bs, bx, std::cmp::Reverse(blen)))
                    .then_with(|| products[bi].asin.cmp(&products[*i].asin))
                    .is_gt(),
            };
            if better {
                best = Some((*i, score, exact, *len));
            }
        }
        best.filter(|b| b.1 >= threshold).map(|(i, s, x, _)| (i, s, x))
    });

    let mut report = SeedMatchReport::default();
    let mut claimed: HashMap<&str, usize> = HashMap::new();
    for (seed, hit) in seeds.iter().zip(best) {
        let Some((i, score, exact)) = hit else {
            report.unmatched.push(seed.clone());
            continue;
        };
        let asin = products[i].asin.as_str();
        if let Some(&m) = claimed.get(asin) {
            report.duplicates += 1;
            if report.matches[m].class != seed.class {
                report.class_conflicts += 1;
            }
            continue;
        }
        claimed.insert(asin, report.matches.len());
        report.matches.push(SeedMatch {
            asin: asin.to_string(),
            class: seed.class,
            score,
            needs_review: !exact,
            seed_title: seed.title.clone(),
            product_title: products[i].title.clone(),
        });
    }
    report
}
