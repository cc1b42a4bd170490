use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

struct Patterns {
    url: Regex,
    retweet: Regex,
    mention: Regex,
    hashtag: Regex,
    entity: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        url: Regex::new(r"(?i)\b(?:https?://|www\.)\S*").unwrap(),
        retweet: Regex::new(r"\bRT\b:?").unwrap(),
        mention: Regex::new(r"@\w+").unwrap(),
        hashtag: Regex::new(r"#(\w+)").unwrap(),
        entity: Regex::new(r"&(?:[A-Za-z]+|#[0-9]+|#[xX][0-9A-Fa-f]+);").unwrap(),
    })
}

/// Emoji and pictograph blocks, plus joiners and variation selectors.
fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2300..=0x23FF
        | 0x2600..=0x27BF
        | 0x2B00..=0x2BFF
        | 0x200D
        | 0x20E3
        | 0xFE00..=0xFE0F
        | 0xE0020..=0xE007F)
}

/// Keeps letters only; everything else already stripped becomes absent.
fn letters_only(word: &str) -> String {
    word.chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphabetic())
        .collect()
}

/// Ordered review/tweet text normalization.
#[derive(Debug, Clone)]
pub struct TextCleaner {
    pub stopwords: HashSet<String>,
    /// When false, `#tag` is removed together with its body.
    pub keep_hashtag_body: bool,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl TextCleaner {
    /// Bundled English stopwords, reviews thresholds (30..=512 tokens).
    pub fn reviews() -> Self {
        Self::with_limits(30, 512)
    }

    /// Bundled English stopwords, tweet thresholds (5..=512 tokens).
    pub fn tweets() -> Self {
        Self::with_limits(5, 512)
    }

    pub fn with_limits(min_tokens: usize, max_tokens: usize) -> Self {
        TextCleaner {
            stopwords: Self::parse_stopwords(BUNDLED_STOPWORDS),
            keep_hashtag_body: true,
            min_tokens,
            max_tokens: max_tokens.max(min_tokens),
        }
    }

    /// Parses a one-word-per-line list. Words are normalized the same way as
    /// text tokens, so "don't" also removes "dont".
    pub fn parse_stopwords(list: &str) -> HashSet<String> {
        list.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(letters_only)
            .filter(|w| !w.is_empty())
            .collect()
    }

    /// Tokens after the cleaning rules, or `None` when fewer than
    /// `min_tokens` remain.
    pub fn clean(&self, raw: &str) -> Option<Vec<String>> {
        let p = patterns();
        let text = p.url.replace_all(raw, " ");
        let text = p.retweet.replace_all(&text, " ");
        let text = p.mention.replace_all(&text, " ");
        let text = if self.keep_hashtag_body {
            p.hashtag.replace_all(&text, "$1")
        } else {
            p.hashtag.replace_all(&text, " ")
        };
        let text: String = text.chars().filter(|&c| !is_emoji(c)).collect();
        let text = p.entity.replace_all(&text, " ");
        let text = text.replace("\\n", " ").replace("\\r", " ");

        let tokens: Vec<String> = text
            .split_whitespace()
            .map(letters_only)
            .filter(|w| !w.is_empty() && !self.stopwords.contains(w))
            .take(self.max_tokens)
            .collect();
        (tokens.len() >= self.min_tokens && !tokens.is_empty()).then_some(tokens)
    }
}

/// [`TextCleaner`] with the bundled stopwords and the given limits.
pub fn clean_text(raw: &str, min_tokens: usize, max_tokens: usize) -> Option<Vec<String>> {
    TextCleaner::with_limits(min_tokens, max_tokens).clean(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_rules() {
        let mut c = TextCleaner::with_limits(0, 512);
        c.stopwords = ["check".to_string()].into_iter().collect();
        let raw = "RT @u Check https://x.co #maga!! 100%";
        assert_eq!(c.clean(raw), Some(vec!["maga".to_string()]));
        c.min_tokens = 30;
        assert_eq!(c.clean(raw), None);
    }

    #[test]
    fn hashtag_body_switch() {
        let mut c = TextCleaner::with_limits(0, 10);
        c.keep_hashtag_body = false;
        assert_eq!(c.clean("great #deal today"), Some(vec!["great".into(), "today".into()]));
    }

    #[test]
    fn emoji_entities_newlines() {
        let c = TextCleaner::with_limits(1, 10);
        assert_eq!(
            c.clean("Loved it \u{1F600}\u{FE0F} &amp; more\\nlater"),
            Some(vec!["loved".into(), "later".into()])
        );
    }

    #[test]
    fn truncates_to_max_tokens() {
        let raw = vec!["word"; 600].join(" ");
        assert_eq!(TextCleaner::reviews().clean(&raw).unwrap().len(), 512);
    }

    #[test]
    fn empty_is_absent() {
        assert_eq!(clean_text("", 0, 512), None);
        assert_eq!(clean_text("   ", 0, 512), None);
    }

    #[test]
    fn bundled_list_loaded() {
        let c = TextCleaner::reviews();
        assert!(c.stopwords.contains("the"));
        assert!(c.stopwords.contains("dont"));
    }
}
