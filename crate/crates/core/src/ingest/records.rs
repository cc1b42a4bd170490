use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::IngestError;
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReviewRecord {
    pub reviewer_id: String,
    pub asin: String,
    pub helpful: (u32, u32),
    pub overall: u8,
    pub review_text: String,
    pub summary: String,
    pub unix_time: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RelatedKind {
    AlsoBought,
    AlsoViewed,
    BoughtTogether,
    BuyAfterViewing,
}

impl RelatedKind {
    pub const ALL: [RelatedKind; 4] = [
        RelatedKind::AlsoBought,
        RelatedKind::AlsoViewed,
        RelatedKind::BoughtTogether,
        RelatedKind::BuyAfterViewing,
    ];

    pub fn field(self) -> &'static str {
        match self {
            RelatedKind::AlsoBought => "also_bought",
            RelatedKind::AlsoViewed => "also_viewed",
            RelatedKind::BoughtTogether => "bought_together",
            RelatedKind::BuyAfterViewing => "buy_after_viewing",
        }
    }

    pub fn edge_kind(self) -> crate::hetgraph::EdgeKind {
        use crate::hetgraph::EdgeKind;
        match self {
            RelatedKind::AlsoBought => EdgeKind::AlsoBought,
            RelatedKind::AlsoViewed => EdgeKind::AlsoViewed,
            RelatedKind::BoughtTogether => EdgeKind::BoughtTogether,
            RelatedKind::BuyAfterViewing => EdgeKind::BoughtAfterViewing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ProductMeta {
    pub asin: String,
    pub title: String,
    pub price: Option<f64>,
    pub brand: Option<String>,
    pub sales_rank: BTreeMap<String, u64>,
    pub categories: Vec<Vec<String>>,
    pub related: BTreeMap<RelatedKind, Vec<String>>,
}

impl ProductMeta {
    /// All co-purchase neighbors across the four relations, deduplicated,
    /// in relation order then list order.
    pub fn co_purchases(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.related
            .values()
            .flatten()
            .filter(|a| seen.insert(a.as_str()))
            .map(String::as_str)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SkipReason {
    MalformedJson,
    MissingKey,
    EmptyKey,
    InvalidHelpful,
    InvalidRating,
    InvalidField,
}

impl SkipReason {
    pub fn code(self) -> &'static str {
        match self {
            SkipReason::MalformedJson => "malformed_json",
            SkipReason::MissingKey => "missing_key",
            SkipReason::EmptyKey => "empty_key",
            SkipReason::InvalidHelpful => "invalid_helpful",
            SkipReason::InvalidRating => "invalid_rating",
            SkipReason::InvalidField => "invalid_field",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParseReport {
    pub review_lines: usize,
    pub reviews_parsed: usize,
    pub reviews_deduped: usize,
    pub meta_lines: usize,
    pub products_parsed: usize,
    pub products_deduped: usize,
    pub self_references_dropped: usize,
    /// Skip counts keyed by `reviews:<code>` / `meta:<code>`.
    pub skipped: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub reviews: Vec<ReviewRecord>,
    pub products: Vec<ProductMeta>,
    pub report: ParseReport,
}

fn str_field(obj: &serde_json::Map<String, Value>, key: &str) -> Result<String, SkipReason> {
    match obj.get(key) {
        None | Some(Value::Null) => Err(SkipReason::MissingKey),
        Some(Value::String(s)) if s.trim().is_empty() => Err(SkipReason::EmptyKey),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(SkipReason::InvalidField),
    }
}

fn opt_text(obj: &serde_json::Map<String, Value>, key: &str) -> String {
    obj.get(key).and_then(Value::as_str).unwrap_or("").to_string()
}

fn parse_review(line: &str) -> Result<ReviewRecord, SkipReason> {
    let v: Value = serde_json::from_str(line).map_err(|_| SkipReason::MalformedJson)?;
    let obj = v.as_object().ok_or(SkipReason::MalformedJson)?;
    let reviewer_id = str_field(obj, "reviewerID")?;
    let asin = str_field(obj, "asin")?;
    let helpful = match obj.get("helpful") {
        None | Some(Value::Null) => (0, 0),
        Some(Value::Array(a)) if a.len() == 2 => {
            let up = a[0].as_u64().ok_or(SkipReason::InvalidHelpful)?;
            let total = a[1].as_u64().ok_or(SkipReason::InvalidHelpful)?;
            if up > total || total > u32::MAX as u64 {
                return Err(SkipReason::InvalidHelpful);
            }
            (up as u32, total as u32)
        }
        Some(_) => return Err(SkipReason::InvalidHelpful),
    };
    let overall = obj
        .get("overall")
        .and_then(Value::as_f64)
        .ok_or(SkipReason::InvalidRating)?;
    if !(1.0..=5.0).contains(&overall) || overall.fract() != 0.0 {
        return Err(SkipReason::InvalidRating);
    }
    let unix_time = obj
        .get("unixReviewTime")
        .ok_or(SkipReason::MissingKey)?
        .as_i64()
        .ok_or(SkipReason::InvalidField)?;
    Ok(ReviewRecord {
        reviewer_id,
        asin,
        helpful,
        overall: overall as u8,
        review_text: opt_text(obj, "reviewText"),
        summary: opt_text(obj, "summary"),
        unix_time,
    })
}

fn parse_meta(line: &str) -> Result<(ProductMeta, usize), SkipReason> {
    let v: Value = serde_json::from_str(line).map_err(|_| SkipReason::MalformedJson)?;
    let obj = v.as_object().ok_or(SkipReason::MalformedJson)?;
    let asin = str_field(obj, "asin")?;
    let price = match obj.get("price") {
        None | Some(Value::Null) => None,
        Some(p) => match p.as_f64() {
            Some(x) if x >= 0.0 && x.is_finite() => Some(x),
            _ => return Err(SkipReason::InvalidField),
        },
    };
    let brand = obj
        .get("brand")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from);
    let mut sales_rank = BTreeMap::new();
    if let Some(Value::Object(m)) = obj.get("salesRank") {
        for (k, r) in m {
            if let Some(r) = r.as_u64() {
                sales_rank.insert(k.clone(), r);
            }
        }
    }
    let mut categories = Vec::new();
    if let Some(Value::Array(paths)) = obj.get("categories") {
        for path in paths {
            let path: Vec<String> = path
                .as_array()
                .ok_or(SkipReason::InvalidField)?
                .iter()
                .filter_map(|c| c.as_str().map(String::from))
                .collect();
            if !path.is_empty() {
                categories.push(path);
            }
        }
    }
    let mut related = BTreeMap::new();
    let mut self_refs = 0;
    if let Some(Value::Object(m)) = obj.get("related") {
        for kind in RelatedKind::ALL {
            if let Some(Value::Array(list)) = m.get(kind.field()) {
                let mut out: Vec<String> = Vec::with_capacity(list.len());
                for a in list.iter().filter_map(Value::as_str) {
                    if a == asin {
                        self_refs += 1;
                    } else if !out.iter().any(|x| x == a) {
                        out.push(a.to_string());
                    }
                }
                if !out.is_empty() {
                    related.insert(kind, out);
                }
            }
        }
    }
    Ok((
        ProductMeta {
            asin,
            title: opt_text(obj, "title"),
            price,
            brand,
            sales_rank,
            categories,
            related,
        },
        self_refs,
    ))
}

fn non_blank_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.trim().is_empty()).collect()
}

/// Parses review lines. Malformed lines are skipped and counted; repeated
/// `(reviewer, asin)` pairs keep the record with the latest time (later line
/// on ties) at the position of the first occurrence.
pub fn parse_review_lines(text: &str, exec: Execution, report: &mut ParseReport) -> Vec<ReviewRecord> {
    let lines = non_blank_lines(text);
    report.review_lines += lines.len();
    let parsed = par::map_slice(exec, &lines, |l| parse_review(l));
    let mut out: Vec<ReviewRecord> = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for r in parsed {
        match r {
            Err(reason) => *report.skipped.entry(format!("reviews:{}", reason.code())).or_insert(0) += 1,
            Ok(rec) => {
                report.reviews_parsed += 1;
                let key = (rec.reviewer_id.clone(), rec.asin.clone());
                match seen.get(&key) {
                    Some(&i) => {
                        report.reviews_deduped += 1;
                        if rec.unix_time >= out[i].unix_time {
                            out[i] = rec;
                        }
                    }
                    None => {
                        seen.insert(key, out.len());
                        out.push(rec);
                    }
                }
            }
        }
    }
    out
}

/// Parses metadata lines; the first record for an ASIN wins.
pub fn parse_metadata_lines(text: &str, exec: Execution, report: &mut ParseReport) -> Vec<ProductMeta> {
    let lines = non_blank_lines(text);
    report.meta_lines += lines.len();
    let parsed = par::map_slice(exec, &lines, |l| parse_meta(l));
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for r in parsed {
        match r {
            Err(reason) => *report.skipped.entry(format!("meta:{}", reason.code())).or_insert(0) += 1,
            Ok((meta, self_refs)) => {
                report.products_parsed += 1;
                report.self_references_dropped += self_refs;
                if seen.insert(meta.asin.clone()) {
                    out.push(meta);
                } else {
                    report.products_deduped += 1;
                }
            }
        }
    }
    out
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Read {
        path: path.display().to_string(),
        source,
    })
}

/// Reads both JSONL files. Only an unreadable file is fatal.
pub fn parse_corpus(reviews_path: &Path, meta_path: &Path, exec: Execution) -> Result<Corpus, IngestError> {
    let reviews_text = read(reviews_path)?;
    let meta_text = read(meta_path)?;
    let mut report = ParseReport::default();
    let reviews = parse_review_lines(&reviews_text, exec, &mut report);
    let products = parse_metadata_lines(&meta_text, exec, &mut report);
    Ok(Corpus {
        reviews,
        products,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn review_passthrough() {
        let mut rep = ParseReport::default();
        let text = r#"{"reviewerID":"A1","asin":"B1","helpful":[3,5],"reviewText":"good","overall":4.0,"summary":"ok","unixReviewTime":10}"#;
        let out = parse_review_lines(text, Execution::Sequential, &mut rep);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].helpful, (3, 5));
        assert_eq!(out[0].overall, 4);
        assert_eq!(out[0].review_text, "good");
    }

    #[test]
    fn latest_review_wins() {
        let mut rep = ParseReport::default();
        let text = concat!(
            r#"{"reviewerID":"A1","asin":"B1","overall":2.0,"unixReviewTime":20}"#,
            "\n",
            r#"{"reviewerID":"A1","asin":"B1","overall":5.0,"unixReviewTime":10}"#,
            "\n",
        );
        let out = parse_review_lines(text, Execution::Parallel, &mut rep);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].unix_time, 20);
        assert_eq!(out[0].overall, 2);
        assert_eq!(rep.reviews_deduped, 1);
    }

    #[test]
    fn skip_reasons() {
        let mut rep = ParseReport::default();
        let text = [
            r#"{"reviewerID":"A1","overall":4.0,"unixReviewTime":1}"#,
            r#"not json"#,
            r#"{"reviewerID":"A1","asin":"B","helpful":[6,5],"overall":4.0,"unixReviewTime":1}"#,
            r#"{"reviewerID":"A1","asin":"B","overall":4.5,"unixReviewTime":1}"#,
            r#"{"reviewerID":" ","asin":"B","overall":4.0,"unixReviewTime":1}"#,
        ]
        .join("\n");
        let out = parse_review_lines(&text, Execution::Sequential, &mut rep);
        assert!(out.is_empty());
        for code in [
            "missing_key",
            "malformed_json",
            "invalid_helpful",
            "invalid_rating",
            "empty_key",
        ] {
            assert_eq!(rep.skipped[&format!("reviews:{code}")], 1, "{code}");
        }
    }

    #[test]
    fn metadata_fields_and_self_references() {
        let mut rep = ParseReport::default();
        let text = r#"{"asin":"B1","title":"T","price":3.5,"brand":"Acme","salesRank":{"Books":12},"categories":[["Books","Politics"]],"related":{"also_bought":["B2","B1","B2"],"bought_together":["B3"]}}"#;
        let out = parse_metadata_lines(text, Execution::Sequential, &mut rep);
        let m = &out[0];
        assert_eq!(m.price, Some(3.5));
        assert_eq!(m.sales_rank["Books"], 12);
        assert_eq!(m.related[&RelatedKind::AlsoBought], vec!["B2".to_string()]);
        assert_eq!(m.co_purchases(), vec!["B2", "B3"]);
        assert_eq!(rep.self_references_dropped, 1);
    }

    #[test]
    fn unreadable_file_is_fatal() {
        let err = parse_corpus(
            Path::new("/nonexistent/r.jsonl"),
            Path::new("/nonexistent/m.jsonl"),
            Execution::Sequential,
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::Read { .. }));
    }
}
