//! FAQ retrieval by keyword overlap, and short-answer extraction from pages.
//!
//! The overlap score of a query keyword set `L` against a candidate token
//! list `a` is
//!
//! ```text
//! score = |L ∩ set(a)| / |L|  +  |set(a) ∩ L| / |a|
//! ```
//!
//! The first addend is keyword recall. The second divides by the token count
//! of `a` including repeats, so it penalizes long or repetitive candidates.
//! Both addends are taken as 0 when their denominator is 0.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::MnbModel;
use crate::error::{load_file, parse_json, read_file, Error, Result};
use crate::text::{contains_phrase, tokenize, StopWords, Token};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_FALLBACK_TEXT: &str =
    "Sorry, I don't know the answer to that yet. Please ask the admissions office.";
pub const DEFAULT_QUANTITY_MARKERS: [&str; 3] = ["how many", "how much", "skolko"];

/// A user request reduced to its keyword set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub raw: String,
    pub lemmas: BTreeSet<Token>,
}

impl Query {
    pub fn new(raw: &str, stopwords: &StopWords) -> Self {
        Query {
            raw: raw.to_owned(),
            lemmas: stopwords.filter(tokenize(raw)).into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FaqRecord {
    id: String,
    question: String,
    answer: String,
    category: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaqEntry {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub category: String,
    answer_tokens: Vec<Token>,
}

impl FaqEntry {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        answer: impl Into<String>,
        category: impl Into<String>,
    ) -> Result<Self> {
        let (id, question, answer, category) =
            (id.into(), question.into(), answer.into(), category.into());
        if question.trim().is_empty() || answer.trim().is_empty() {
            return Err(Error::Validation(format!(
                "faq entry {id:?} needs a non-empty question and answer"
            )));
        }
        let answer_tokens = tokenize(&format!("{question} {answer}"));
        Ok(FaqEntry {
            id,
            question,
            answer,
            category,
            answer_tokens,
        })
    }

    /// Tokens of question and answer together.
    pub fn answer_tokens(&self) -> &[Token] {
        &self.answer_tokens
    }
}

/// Loads a JSON array of `{id, question, answer, category}`.
pub fn parse_kb(text: &str) -> Result<Vec<FaqEntry>> {
    let records: Vec<FaqRecord> = parse_json("knowledge base", text)?;
    let mut ids = BTreeSet::new();
    records
        .into_iter()
        .map(|r| {
            if !ids.insert(r.id.clone()) {
                return Err(Error::Validation(format!("duplicate faq id {:?}", r.id)));
            }
            FaqEntry::new(r.id, r.question, r.answer, r.category)
        })
        .collect()
}

pub fn load_kb(path: &Path) -> Result<Vec<FaqEntry>> {
    load_file(path, parse_kb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapScore {
    pub score: f64,
    pub recall_term: f64,
    pub precision_term: f64,
}

pub fn overlap_score(lemmas: &BTreeSet<Token>, candidate: &[Token]) -> OverlapScore {
    let distinct: BTreeSet<&Token> = candidate.iter().collect();
    let shared = distinct.iter().filter(|t| lemmas.contains(**t)).count() as f64;
    let recall_term = if lemmas.is_empty() {
        0.0
    } else {
        shared / lemmas.len() as f64
    };
    let precision_term = if candidate.is_empty() {
        0.0
    } else {
        shared / candidate.len() as f64
    };
    OverlapScore {
        score: recall_term + precision_term,
        recall_term,
        precision_term,
    }
}

/// All entries by score descending, ties broken by ascending id.
pub fn rank_faq<'a>(query: &Query, entries: &'a [FaqEntry]) -> Vec<(&'a FaqEntry, OverlapScore)> {
    let mut ranked: Vec<_> = entries
        .iter()
        .map(|e| (e, overlap_score(&query.lemmas, e.answer_tokens())))
        .collect();
    ranked.sort_by(|(ea, sa), (eb, sb)| {
        sb.score
            .partial_cmp(&sa.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| ea.id.cmp(&eb.id))
    });
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerResult {
    pub entry_id: Option<String>,
    pub answer_text: String,
    /// Category of the returned entry; absent on fallback.
    pub category: Option<String>,
    pub score: f64,
    pub recall_term: f64,
    pub precision_term: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct AnswerConfig {
    pub threshold: f64,
    pub category_filter: bool,
    pub fallback_text: String,
    pub stopwords: StopWords,
}

impl Default for AnswerConfig {
    fn default() -> Self {
        AnswerConfig {
            threshold: DEFAULT_THRESHOLD,
            category_filter: false,
            fallback_text: DEFAULT_FALLBACK_TEXT.to_owned(),
            stopwords: StopWords::none(),
        }
    }
}

/// Best FAQ answer for `query_text`, or a fallback when the best score stays
/// below the threshold. With `category_filter` and a model, candidates are
/// restricted to the predicted category unless it has no entries.
pub fn answer(
    query_text: &str,
    kb: &[FaqEntry],
    model: Option<&MnbModel>,
    config: &AnswerConfig,
) -> Result<AnswerResult> {
    if config.threshold.is_nan() || config.threshold < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold must be non-negative, got {}",
            config.threshold
        )));
    }
    let query = Query::new(query_text, &config.stopwords);

    let filtered: Vec<FaqEntry>;
    let mut candidates = kb;
    if let (true, Some(model)) = (config.category_filter, model) {
        let label = model.predict(query_text).label;
        filtered = kb.iter().filter(|e| e.category == label).cloned().collect();
        if !filtered.is_empty() {
            candidates = &filtered;
        }
    }

    let ranked = rank_faq(&query, candidates);
    let fallback = |best: Option<OverlapScore>| {
        let s = best.unwrap_or(OverlapScore {
            score: 0.0,
            recall_term: 0.0,
            precision_term: 0.0,
        });
        AnswerResult {
            entry_id: None,
            answer_text: config.fallback_text.clone(),
            category: None,
            score: s.score,
            recall_term: s.recall_term,
            precision_term: s.precision_term,
            fallback: true,
        }
    };
    Ok(match ranked.first() {
        Some((entry, s)) if s.score >= config.threshold => AnswerResult {
            entry_id: Some(entry.id.clone()),
            answer_text: entry.answer.clone(),
            category: Some(entry.category.clone()),
            score: s.score,
            recall_term: s.recall_term,
            precision_term: s.precision_term,
            fallback: false,
        },
        Some((_, s)) => fallback(Some(*s)),
        None => fallback(None),
    })
}

/// Splits after runs of `.`, `!` or `?` that are followed by whitespace or the
/// end of input. Terminators are dropped and pieces trimmed.
pub fn split_sentences(document: &str) -> Vec<String> {
    let chars: Vec<char> = document.chars().collect();
    let is_term = |c: char| matches!(c, '.' | '!' | '?');
    let mut out = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        if is_term(chars[i]) {
            let mut j = i;
            while j < chars.len() && is_term(chars[j]) {
                j += 1;
            }
            if j == chars.len() || chars[j].is_whitespace() {
                push_trimmed(&mut out, &current);
                current.clear();
            } else {
                current.extend(&chars[i..j]);
            }
            i = j;
        } else {
            current.push(chars[i]);
            i += 1;
        }
    }
    push_trimmed(&mut out, &current);
    out
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let t = piece.trim();
    if !t.is_empty() {
        out.push(t.to_owned());
    }
}

/// Minimal tag remover: drops `<script>`/`<style>` elements with their
/// contents, replaces every other tag with a space, decodes the five basic
/// entities and collapses whitespace.
pub fn strip_markup(page: &str) -> String {
    let lower = page.to_ascii_lowercase();
    let mut text = String::with_capacity(page.len());
    let mut i = 0;
    while i < page.len() {
        let rest = &page[i..];
        if !rest.starts_with('<') {
            let next = rest.find('<').map_or(page.len(), |p| i + p);
            text.push_str(&page[i..next]);
            i = next;
            continue;
        }
        let Some(close) = rest.find('>') else {
            // unterminated tag: drop the remainder
            break;
        };
        let tag_end = i + close + 1;
        let name: String = lower[i + 1..tag_end - 1]
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric())
            .collect();
        text.push(' ');
        i = tag_end;
        if name == "script" || name == "style" {
            let closing = format!("</{name}");
            i = match lower[i..].find(&closing) {
                Some(p) => {
                    let after = i + p;
                    lower[after..]
                        .find('>')
                        .map_or(page.len(), |q| after + q + 1)
                }
                None => page.len(),
            };
        }
    }
    let decoded = text
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&");
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShortAnswer {
    pub sentence: String,
    pub extracted: Option<String>,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct ShortAnswerConfig {
    /// Phrases that mark a question as asking for a quantity.
    pub quantity_markers: Vec<String>,
    pub stopwords: StopWords,
}

impl Default for ShortAnswerConfig {
    fn default() -> Self {
        ShortAnswerConfig {
            quantity_markers: DEFAULT_QUANTITY_MARKERS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            stopwords: StopWords::none(),
        }
    }
}

impl ShortAnswerConfig {
    pub fn is_quantitative(&self, question: &str) -> bool {
        let q = tokenize(question);
        self.quantity_markers
            .iter()
            .any(|m| contains_phrase(&q, &tokenize(m)))
    }
}

pub fn extract_short_answer(
    question: &str,
    document: &str,
    config: &ShortAnswerConfig,
) -> Result<ShortAnswer> {
    let sentences = split_sentences(&strip_markup(document));
    let query = Query::new(question, &config.stopwords);
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in sentences.iter().enumerate() {
        let score = overlap_score(&query.lemmas, &tokenize(s)).score;
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    let (idx, score) =
        best.ok_or_else(|| Error::NoAnswer("document contains no sentences".into()))?;
    let sentence = sentences
        .into_iter()
        .nth(idx)
        .expect("index from enumeration");
    let extracted = if config.is_quantitative(question) {
        tokenize(&sentence)
            .into_iter()
            .find(Token::is_numeric)
            .map(|t| t.as_str().to_owned())
    } else {
        None
    };
    Ok(ShortAnswer {
        sentence,
        extracted,
        score,
    })
}

/// A graded short-answer fixture: a question, the page to search and the
/// expected answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortAnswerCase {
    pub question: String,
    /// Page path, relative to the suite file.
    pub page: String,
    pub answer: String,
}

/// Loads a suite file (JSON array of cases) together with each page's text.
pub fn load_short_answer_suite(path: &Path) -> Result<Vec<(ShortAnswerCase, String)>> {
    let cases: Vec<ShortAnswerCase> = load_file(path, |t| parse_json("short-answer suite", t))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    cases
        .into_iter()
        .map(|c| {
            let page = read_file(&dir.join(&c.page))?;
            Ok((c, page))
        })
        .collect()
}

/// An extraction passes when the extracted value equals the expected answer,
/// or, when nothing was extracted, the chosen sentence contains it.
pub fn grade_short_answer(expected: &str, got: &ShortAnswer) -> bool {
    let want = tokenize(expected);
    if want.is_empty() {
        return false;
    }
    match &got.extracted {
        Some(x) => tokenize(x) == want,
        None => contains_phrase(&tokenize(&got.sentence), &want),
    }
}
