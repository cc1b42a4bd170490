//! Corpus ingestion: review and metadata parsing, fuzzy seed matching, text
//! cleaning, moral-score loading and category regrouping.

mod categories;
mod fuzzy;
mod moral;
mod records;
mod seeds;
mod text;

use thiserror::Error;

pub use categories::{CategoryMap, Regrouped, OTHER};
pub use fuzzy::{levenshtein, partial_ratio};
pub use moral::{attach_moral_scores, load_moral_scores, read_moral_scores, MoralReport, MoralScores, MoralVector};
pub use records::{
    parse_corpus, parse_metadata_lines, parse_review_lines, Corpus, ParseReport, ProductMeta, RelatedKind,
    ReviewRecord, SkipReason,
};
pub use seeds::{match_seeds, read_seeds_csv, SeedLabel, SeedMatch, SeedMatchReport};
pub use text::{clean_text, TextCleaner};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}
