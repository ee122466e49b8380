use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

/// Lucene's default English stop set.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it",
    "no", "not", "of", "on", "or", "such", "that", "the", "their", "then", "there", "these",
    "they", "this", "to", "was", "will", "with",
];

/// Optional token filters. Both are off by default and are stored in the
/// index so queries are always tokenized the same way as documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerOptions {
    #[serde(default)]
    pub remove_stopwords: bool,
    #[serde(default)]
    pub stem: bool,
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

pub fn tokenize_with(text: &str, opts: TokenizerOptions) -> Vec<String> {
    let mut tokens = tokenize(text);
    if opts.remove_stopwords {
        tokens.retain(|t| !STOPWORDS.contains(&t.as_str()));
    }
    if opts.stem {
        let stemmer = Stemmer::create(Algorithm::English);
        for t in tokens.iter_mut() {
            let stemmed = stemmer.stem(t);
            if stemmed != t.as_str() {
                *t = stemmed.into_owned();
            }
        }
    }
    tokens
}
