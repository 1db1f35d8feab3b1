//! Multinomial naive Bayes over bag-of-words features.
//!
//! Training uses Laplace (additive) smoothing:
//!
//! ```text
//! log_prior(c)        = ln(docs_in(c) / docs_total)
//! likelihood(t | c)   = (count(t, c) + alpha) / (tokens_in(c) + alpha * |V|)
//! score(c | text)     = log_prior(c) + sum_t count(t, text) * ln likelihood(t | c)
//! ```
//!
//! Scores are accumulated in log space and normalized with a shifted softmax.
//! Out-of-vocabulary query tokens are ignored, so a fully OOV query gets the
//! class priors back as its posterior.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{load_file, parse_json, Error, Result};
use crate::text::{build_vocabulary, tokenize, vectorize, StopWords, Token, Vocabulary};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Tolerance for the normalization checks applied to loaded models.
const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub text: String,
    pub label: String,
}

impl DocumentRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        DocumentRecord {
            id: id.into(),
            text: text.into(),
            label: label.into(),
        }
    }
}

/// A non-empty set of labeled records with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    records: Vec<DocumentRecord>,
    categories: BTreeSet<String>,
}

impl LabeledCorpus {
    pub fn new(records: Vec<DocumentRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidArgument("corpus is empty".into()));
        }
        let mut ids = HashSet::with_capacity(records.len());
        let mut categories = BTreeSet::new();
        for r in &records {
            if r.label.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "record {:?} has an empty label",
                    r.id
                )));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate record id {:?}", r.id)));
            }
            categories.insert(r.label.clone());
        }
        Ok(LabeledCorpus {
            records,
            categories,
        })
    }

    /// Parses a JSON array of `{id, text, label}` objects.
    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<DocumentRecord> = parse_json("corpus", text)?;
        Self::new(records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_file(path, Self::from_json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("records always serialize")
    }

    pub fn records(&self) -> &[DocumentRecord] {
        &self.records
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<DocumentRecord> {
        self.records
    }

    /// Per-category shuffled split; every category keeps at least one
    /// training record. Relative record order is preserved in both halves.
    pub fn split_stratified(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test fraction must lie in (0, 1), got {test_fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut is_test = vec![false; self.records.len()];
        for cat in &self.categories {
            let mut idx: Vec<usize> = (0..self.records.len())
                .filter(|&i| &self.records[i].label == cat)
                .collect();
            idx.shuffle(&mut rng);
            let n_test = ((idx.len() as f64) * test_fraction).round() as usize;
            let n_test = n_test.min(idx.len().saturating_sub(1));
            for &i in &idx[..n_test] {
                is_test[i] = true;
            }
        }
        let (test, train): (Vec<_>, Vec<_>) = self
            .records
            .iter()
            .cloned()
            .zip(is_test)
            .partition(|(_, t)| *t);
        let train = Self::new(train.into_iter().map(|(r, _)| r).collect())?;
        let test = Self::new(test.into_iter().map(|(r, _)| r).collect())?;
        Ok((train, test))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub label: String,
    pub log_prior: f64,
    /// Parallel to the vocabulary order.
    pub log_likelihoods: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnbModel {
    vocabulary: Vocabulary,
    alpha: f64,
    classes: Vec<ClassModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: String,
    pub posteriors: BTreeMap<String, f64>,
}

pub fn train_mnb(corpus: &LabeledCorpus, alpha: f64, min_count: usize) -> Result<MnbModel> {
    train_mnb_with_stopwords(corpus, alpha, min_count, &StopWords::none())
}

/// Stop-words are dropped before counting, so they never enter the
/// vocabulary and are ignored at prediction time without extra state.
pub fn train_mnb_with_stopwords(
    corpus: &LabeledCorpus,
    alpha: f64,
    min_count: usize,
    stopwords: &StopWords,
) -> Result<MnbModel> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot train on an empty corpus".into(),
        ));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "smoothing alpha must be positive and finite, got {alpha}"
        )));
    }
    let docs: Vec<Vec<Token>> = corpus
        .records()
        .iter()
        .map(|r| stopwords.filter(tokenize(&r.text)))
        .collect();
    let vocabulary = build_vocabulary(&docs, min_count);
    if vocabulary.is_empty() {
        return Err(Error::InvalidArgument("corpus vocabulary is empty".into()));
    }

    let v = vocabulary.len();
    let total_docs = corpus.len() as f64;
    let mut classes = Vec::with_capacity(corpus.categories().len());
    for label in corpus.categories() {
        let mut counts = vec![0u64; v];
        let mut n_docs = 0usize;
        for (rec, toks) in corpus.records().iter().zip(&docs) {
            if &rec.label != label {
                continue;
            }
            n_docs += 1;
            for (i, c) in vectorize(toks, &vocabulary).iter() {
                counts[i] += u64::from(c);
            }
        }
        let class_tokens: u64 = counts.iter().sum();
        let log_denom = (class_tokens as f64 + alpha * v as f64).ln();
        let log_likelihoods = counts
            .iter()
            .map(|&c| (c as f64 + alpha).ln() - log_denom)
            .collect();
        classes.push(ClassModel {
            label: label.clone(),
            log_prior: (n_docs as f64 / total_docs).ln(),
            log_likelihoods,
        });
    }
    Ok(MnbModel {
        vocabulary,
        alpha,
        classes,
    })
}

impl MnbModel {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Classes in lexicographic label order.
    pub fn classes(&self) -> &[ClassModel] {
        &self.classes
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.label.as_str())
    }

    pub fn class(&self, label: &str) -> Option<&ClassModel> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// Unnormalized log joint score per class, in class order.
    pub fn log_scores(&self, text: &str) -> Vec<f64> {
        let bow = vectorize(&tokenize(text), &self.vocabulary);
        self.classes
            .iter()
            .map(|c| {
                bow.iter().fold(c.log_prior, |acc, (i, n)| {
                    acc + f64::from(n) * c.log_likelihoods[i]
                })
            })
            .collect()
    }

    pub fn predict(&self, text: &str) -> Prediction {
        let scores = self.log_scores(text);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = weights.iter().sum();

        // strict comparison keeps the lexicographically first label on ties
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        let posteriors = self
            .classes
            .iter()
            .zip(weights)
            .map(|(c, w)| (c.label.clone(), w / z))
            .collect();
        Prediction {
            label: self.classes[best].label.clone(),
            posteriors,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model always serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_file(path, |t| load_model(t.as_bytes()))
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Validation(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.vocabulary.is_empty() {
            return Err(Error::Validation("vocabulary is empty".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Validation("model has no classes".into()));
        }
        for pair in self.classes.windows(2) {
            if pair[0].label >= pair[1].label {
                return Err(Error::Validation(format!(
                    "classes must be sorted by unique label ({:?} before {:?})",
                    pair[0].label, pair[1].label
                )));
            }
        }
        let mut prior_mass = 0.0;
        for c in &self.classes {
            if c.label.is_empty() {
                return Err(Error::Validation("empty class label".into()));
            }
            if c.log_likelihoods.len() != self.vocabulary.len() {
                return Err(Error::Validation(format!(
                    "class {:?} has {} likelihoods for {} vocabulary terms",
                    c.label,
                    c.log_likelihoods.len(),
                    self.vocabulary.len()
                )));
            }
            if !c.log_prior.is_finite() || c.log_likelihoods.iter().any(|l| !l.is_finite()) {
                return Err(Error::Validation(format!(
                    "class {:?} has non-finite parameters",
                    c.label
                )));
            }
            let mass: f64 = c.log_likelihoods.iter().map(|l| l.exp()).sum();
            if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::Validation(format!(
                    "likelihoods of class {:?} sum to {mass}",
                    c.label
                )));
            }
            prior_mass += c.log_prior.exp();
        }
        if (prior_mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Validation(format!(
                "class priors sum to {prior_mass}"
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    alpha: f64,
    vocabulary: Vec<Token>,
    classes: Vec<ClassModel>,
}

impl From<&MnbModel> for ModelFile {
    fn from(m: &MnbModel) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            alpha: m.alpha,
            vocabulary: m.vocabulary.terms().to_vec(),
            classes: m.classes.clone(),
        }
    }
}

pub fn save_model(model: &MnbModel) -> Vec<u8> {
    model.to_json().into_bytes()
}

pub fn load_model(bytes: &[u8]) -> Result<MnbModel> {
    let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| Error::json("model", &e))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "unsupported model format_version {}",
            file.format_version
        )));
    }
    let model = MnbModel {
        vocabulary: Vocabulary::from_terms(file.vocabulary)?,
        alpha: file.alpha,
        classes: file.classes,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Labels indexing both axes of `confusion`.
    pub labels: Vec<String>,
    /// `confusion[actual][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Macro-F1 averages over classes that occur in the held-out labels or in the
/// predictions; classes absent from both carry no signal.
pub fn evaluate(model: &MnbModel, held_out: &LabeledCorpus) -> Result<EvalReport> {
    let labels: Vec<String> = model.labels().map(str::to_owned).collect();
    let position = |l: &str| labels.iter().position(|x| x == l);
    let k = labels.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for rec in held_out.records() {
        let actual = position(&rec.label).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "held-out label {:?} is not a model class",
                rec.label
            ))
        })?;
        let predicted = position(&model.predict(&rec.text).label).expect("model label");
        confusion[actual][predicted] += 1;
    }

    let total = held_out.len();
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let mut per_class = Vec::with_capacity(k);
    let mut f1_sum = 0.0;
    let mut active = 0usize;
    for (i, label) in labels.iter().enumerate() {
        let tp = confusion[i][i] as f64;
        let support: usize = confusion[i].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[i]).sum();
        let precision = ratio(tp, predicted as f64);
        let recall = ratio(tp, support as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        if support > 0 || predicted > 0 {
            f1_sum += f1;
            active += 1;
        }
        per_class.push(ClassMetrics {
            label: label.clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    Ok(EvalReport {
        accuracy: correct as f64 / total as f64,
        macro_f1: ratio(f1_sum, active as f64),
        per_class,
        labels,
        confusion,
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
