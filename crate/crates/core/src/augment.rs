//! Corpus growth by lexicon term substitution, and frequent n-gram mining.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::classify::{DocumentRecord, LabeledCorpus};
use crate::error::{load_file, parse_json, Error, Result};
use crate::text::{join_tokens, tokenize, Token};

/// Interchangeable terms per category. Each group has at least two distinct
/// members; member order is the substitution order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryLexicon {
    groups: BTreeMap<String, Vec<Vec<Token>>>,
}

impl CategoryLexicon {
    pub fn new(raw: BTreeMap<String, Vec<Vec<String>>>) -> Result<Self> {
        let mut groups = BTreeMap::new();
        for (category, raw_groups) in raw {
            let mut parsed = Vec::with_capacity(raw_groups.len());
            for g in raw_groups {
                let mut members: Vec<Token> = Vec::with_capacity(g.len());
                for term in g {
                    let tok = Token::new(term.clone()).ok_or_else(|| {
                        Error::Validation(format!(
                            "lexicon term {term:?} in {category:?} is not a single normalized token"
                        ))
                    })?;
                    if !members.contains(&tok) {
                        members.push(tok);
                    }
                }
                if members.len() < 2 {
                    return Err(Error::Validation(format!(
                        "term group in {category:?} needs at least two distinct members"
                    )));
                }
                parsed.push(members);
            }
            groups.insert(category, parsed);
        }
        Ok(CategoryLexicon { groups })
    }

    /// `{category: [[term, ...], ...]}`
    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(parse_json("lexicon", text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_file(path, Self::from_json)
    }

    pub fn groups(&self, category: &str) -> Option<&[Vec<Token>]> {
        self.groups.get(category).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Single-substitution variants of `record`, in generation order: token
/// position, then group, then member. Ids are `{parent}-v{k}` with k from 1.
pub fn expand_sentence(
    record: &DocumentRecord,
    lexicon: &CategoryLexicon,
    cap: usize,
) -> Vec<DocumentRecord> {
    let Some(groups) = lexicon.groups(&record.label) else {
        return Vec::new();
    };
    let tokens = tokenize(&record.text);
    let original = join_tokens(&tokens);
    let mut seen: HashSet<String> = HashSet::new();
    let mut texts = Vec::new();
    'outer: for (pos, tok) in tokens.iter().enumerate() {
        for group in groups.iter().filter(|g| g.contains(tok)) {
            for alt in group.iter().filter(|m| *m != tok) {
                if texts.len() >= cap {
                    break 'outer;
                }
                let mut variant = tokens.clone();
                variant[pos] = alt.clone();
                let text = join_tokens(&variant);
                if text != original && seen.insert(text.clone()) {
                    texts.push(text);
                }
            }
        }
    }
    texts
        .into_iter()
        .enumerate()
        .map(|(k, text)| DocumentRecord {
            id: format!("{}-v{}", record.id, k + 1),
            text,
            label: record.label.clone(),
        })
        .collect()
}

/// Originals first, then generated variants taken round-robin across the
/// originals until `target_size` is reached or every original is exhausted.
pub fn augment_corpus(
    corpus: &LabeledCorpus,
    lexicon: &CategoryLexicon,
    target_size: usize,
    cap_per_sentence: usize,
) -> Result<LabeledCorpus> {
    if target_size < corpus.len() {
        return Err(Error::InvalidArgument(format!(
            "target size {target_size} is smaller than the corpus ({} records)",
            corpus.len()
        )));
    }
    let mut out: Vec<DocumentRecord> = corpus.records().to_vec();
    let mut pending: Vec<std::vec::IntoIter<DocumentRecord>> = corpus
        .records()
        .iter()
        .map(|r| expand_sentence(r, lexicon, cap_per_sentence).into_iter())
        .collect();
    let mut progressed = true;
    while out.len() < target_size && progressed {
        progressed = false;
        for queue in pending.iter_mut() {
            if out.len() >= target_size {
                break;
            }
            if let Some(variant) = queue.next() {
                out.push(variant);
                progressed = true;
            }
        }
    }
    LabeledCorpus::new(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NgramCount {
    pub ngram: Vec<Token>,
    pub count: usize,
}

/// N-grams sorted by count descending, then lexicographically ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct NgramTable {
    entries: Vec<NgramCount>,
}

impl NgramTable {
    pub fn entries(&self) -> &[NgramCount] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV with header `ngram,count`; tokens are space-joined.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["ngram", "count"])?;
        for e in &self.entries {
            w.write_record([join_tokens(&e.ngram), e.count.to_string()])?;
        }
        w.flush()
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }
}

/// Counts contiguous n-grams within each document (never across documents)
/// and keeps the `top_k` most frequent.
pub fn mine_frequent_ngrams<D: AsRef<[Token]>>(
    docs: &[D],
    n: usize,
    top_k: usize,
) -> Result<NgramTable> {
    if n == 0 || top_k == 0 {
        return Err(Error::InvalidArgument(
            "n and top_k must be at least 1".into(),
        ));
    }
    let mut counts: HashMap<&[Token], usize> = HashMap::new();
    for doc in docs {
        for w in doc.as_ref().windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<NgramCount> = counts
        .into_iter()
        .map(|(g, count)| NgramCount {
            ngram: g.to_vec(),
            count,
        })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.ngram.cmp(&b.ngram)));
    entries.truncate(top_k);
    Ok(NgramTable { entries })
}
