//! Caption scoring: gender outcomes per image, corpus outcome tables with
//! cosine divergence, and quality metrics (BLEU-4, plain CIDEr).
//!
//! CIDEr here is the plain TF-IDF cosine variant, not CIDEr-D: scores are
//! hand-checkable but not comparable to CIDEr-D tables.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{classify_caption, tokenize, CaptionGender, GenderLabel, GenderLexicon};

/// One model output. An evaluation run accepts at most one per image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedCaption {
    pub image_id: u64,
    pub caption: String,
}

/// Load the de-facto results format: `[{"image_id": int, "caption": str}]`.
pub fn load_results(path: &Path) -> Result<Vec<GeneratedCaption>> {
    let results: Vec<GeneratedCaption> = crate::coco::read_json(path)?;
    let mut seen = std::collections::HashSet::new();
    for r in &results {
        if !seen.insert(r.image_id) {
            return Err(Error::InvalidInput(format!(
                "{}: multiple captions for image {}",
                path.display(),
                r.image_id
            )));
        }
    }
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Correct,
    Wrong,
    Neutral,
}

/// Gender outcome of one generated caption against the image's gold label.
/// Captions mentioning both genders count as Wrong rather than Neutral so
/// they cannot hide errors.
pub fn outcome(caption: &str, gold: GenderLabel, lexicon: &GenderLexicon) -> Result<Outcome> {
    let predicted = classify_caption(caption, lexicon);
    let gold_gender = match gold {
        GenderLabel::Women => CaptionGender::Female,
        GenderLabel::Men => CaptionGender::Male,
        GenderLabel::Discard => return Err(Error::DiscardedGold),
    };
    Ok(match predicted {
        CaptionGender::None => Outcome::Neutral,
        CaptionGender::Both => Outcome::Wrong,
        p if p == gold_gender => Outcome::Correct,
        _ => Outcome::Wrong,
    })
}

/// Per-gender outcome rates in percent.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct GenderStats {
    pub count: usize,
    pub correct: f64,
    pub wrong: f64,
    pub neutral: f64,
}

impl GenderStats {
    fn rates(&self) -> [f64; 3] {
        [self.correct, self.wrong, self.neutral]
    }
}

/// Outcome rates for both genders plus derived fairness numbers. When one
/// gender has no outcomes the table is partial and the derived numbers are
/// absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub women: GenderStats,
    pub men: GenderStats,
    pub partial: bool,
    /// Mean of the two per-gender wrong rates (headline number).
    pub gender_error: Option<f64>,
    /// Wrong outcomes over all outcomes, both genders pooled.
    pub gender_error_pooled: Option<f64>,
    pub divergence: Option<f64>,
}

/// Cosine distance between two outcome-rate vectors. Uniform rescaling of
/// either side cancels, so percent and fractional rates give the same value.
pub fn divergence(w: [f64; 3], m: [f64; 3]) -> Result<f64> {
    let dot: f64 = w.iter().zip(&m).map(|(a, b)| a * b).sum();
    let nw = w.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nm = m.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nw == 0.0 || nm == 0.0 {
        return Err(Error::ZeroOutcomeVector);
    }
    Ok(1.0 - dot / (nw * nm))
}

pub fn aggregate(outcomes: &[(GenderLabel, Outcome)]) -> OutcomeTable {
    let mut counts: BTreeMap<GenderLabel, [usize; 3]> = BTreeMap::new();
    for &(gold, out) in outcomes {
        debug_assert!(gold != GenderLabel::Discard);
        let cell = counts.entry(gold).or_insert([0; 3]);
        match out {
            Outcome::Correct => cell[0] += 1,
            Outcome::Wrong => cell[1] += 1,
            Outcome::Neutral => cell[2] += 1,
        }
    }
    let stats = |label: GenderLabel| -> GenderStats {
        let c = counts.get(&label).copied().unwrap_or([0; 3]);
        let n = c[0] + c[1] + c[2];
        if n == 0 {
            return GenderStats::default();
        }
        GenderStats {
            count: n,
            correct: 100.0 * c[0] as f64 / n as f64,
            wrong: 100.0 * c[1] as f64 / n as f64,
            neutral: 100.0 * c[2] as f64 / n as f64,
        }
    };
    let women = stats(GenderLabel::Women);
    let men = stats(GenderLabel::Men);
    let partial = women.count == 0 || men.count == 0;
    let (gender_error, gender_error_pooled, div) = if partial {
        (None, None, None)
    } else {
        let wc = counts[&GenderLabel::Women];
        let mc = counts[&GenderLabel::Men];
        let pooled =
            100.0 * (wc[1] + mc[1]) as f64 / (women.count + men.count) as f64;
        (
            Some((women.wrong + men.wrong) / 2.0),
            Some(pooled),
            Some(divergence(women.rates(), men.rates()).expect("nonzero rates")),
        )
    };
    OutcomeTable {
        women,
        men,
        partial,
        gender_error,
        gender_error_pooled,
        divergence: div,
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.join(" ")).or_insert(0) += 1;
        }
    }
    counts
}

const SMOOTH_EPS: f64 = 1e-9;

struct BleuTally {
    clipped: [u64; 4],
    totals: [u64; 4],
    candidate_len: usize,
    reference_len: usize,
}

fn bleu_tally<S: AsRef<str>>(candidate: &str, references: &[S]) -> Result<BleuTally> {
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references
        .iter()
        .map(|r| tokenize(r.as_ref()))
        .filter(|t| !t.is_empty())
        .collect();
    if refs.is_empty() {
        return Err(Error::EmptyInput(
            "bleu4 needs at least one non-empty reference".into(),
        ));
    }
    // Effective reference length: closest to the candidate, ties to shorter.
    let reference_len = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(cand.len()), len))
        .unwrap();
    let mut tally = BleuTally {
        clipped: [0; 4],
        totals: [0; 4],
        candidate_len: cand.len(),
        reference_len,
    };
    for n in 1..=4 {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<String, u64> = HashMap::new();
        for r in &refs {
            for (gram, count) in ngram_counts(r, n) {
                let entry = max_ref.entry(gram).or_insert(0);
                *entry = (*entry).max(count);
            }
        }
        for (gram, count) in &cand_counts {
            let clip = max_ref.get(gram).copied().unwrap_or(0);
            tally.clipped[n - 1] += (*count).min(clip);
        }
        tally.totals[n - 1] = cand_counts.values().sum();
    }
    Ok(tally)
}

fn bleu_from_tally(t: &BleuTally) -> f64 {
    if t.candidate_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        let p = if t.totals[n] == 0 {
            SMOOTH_EPS
        } else {
            let raw = t.clipped[n] as f64 / t.totals[n] as f64;
            if raw == 0.0 {
                SMOOTH_EPS
            } else {
                raw
            }
        };
        log_sum += p.ln();
    }
    let bp = if t.candidate_len >= t.reference_len {
        1.0
    } else {
        (1.0 - t.reference_len as f64 / t.candidate_len as f64).exp()
    };
    bp * (log_sum / 4.0).exp()
}

/// Sentence BLEU-4: clipped modified n-gram precisions with uniform weights
/// and brevity penalty; zero precisions smoothed with 1e-9. An empty
/// candidate scores 0.
pub fn bleu4<S: AsRef<str>>(candidate: &str, references: &[S]) -> Result<f64> {
    Ok(bleu_from_tally(&bleu_tally(candidate, references)?))
}

/// Corpus BLEU-4: n-gram and length statistics pooled over all pairs before
/// taking precisions and the brevity penalty.
pub fn bleu4_corpus<S: AsRef<str>>(pairs: &[(String, Vec<S>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("bleu4 corpus is empty".into()));
    }
    let mut total = BleuTally {
        clipped: [0; 4],
        totals: [0; 4],
        candidate_len: 0,
        reference_len: 0,
    };
    for (cand, refs) in pairs {
        let t = bleu_tally(cand, refs)?;
        for n in 0..4 {
            total.clipped[n] += t.clipped[n];
            total.totals[n] += t.totals[n];
        }
        total.candidate_len += t.candidate_len;
        total.reference_len += t.reference_len;
    }
    Ok(bleu_from_tally(&total))
}

/// Image-level document frequencies for CIDEr. A document is one image's
/// reference set; an n-gram counts once per image that mentions it.
#[derive(Debug, Clone, Default)]
pub struct CorpusStats {
    n_docs: usize,
    df: [HashMap<String, u64>; 4],
}

impl CorpusStats {
    pub fn from_corpus<S: AsRef<str>>(reference_sets: &[Vec<S>]) -> Self {
        let mut stats = CorpusStats {
            n_docs: reference_sets.len(),
            df: Default::default(),
        };
        for refs in reference_sets {
            for n in 1..=4 {
                let mut present: HashMap<String, u64> = HashMap::new();
                for r in refs {
                    for gram in ngram_counts(&tokenize(r.as_ref()), n).into_keys() {
                        present.insert(gram, 1);
                    }
                }
                for gram in present.into_keys() {
                    *stats.df[n - 1].entry(gram).or_insert(0) += 1;
                }
            }
        }
        stats
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// ln(N / df) with unseen n-grams treated as df = 1. A single-document
    /// corpus would make every idf zero and the score vacuously 0, so that
    /// degenerate case falls back to idf = 1 (pure TF cosine).
    fn idf(&self, n: usize, gram: &str) -> f64 {
        if self.n_docs == 1 {
            return 1.0;
        }
        let df = self.df[n - 1].get(gram).copied().unwrap_or(0).max(1);
        (self.n_docs as f64).ln() - (df as f64).ln()
    }
}

fn tfidf_vector(stats: &CorpusStats, tokens: &[String], n: usize) -> HashMap<String, f64> {
    ngram_counts(tokens, n)
        .into_iter()
        .map(|(gram, tf)| {
            let idf = stats.idf(n, &gram);
            (gram, tf as f64 * idf)
        })
        .collect()
}

fn cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(gram, &va)| b.get(gram).map(|&vb| va * vb))
        .sum();
    let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Plain CIDEr: mean TF-IDF cosine against each reference, averaged over
/// n = 1..4, scaled by 10.
pub fn cider<S: AsRef<str>>(
    candidate: &str,
    references: &[S],
    stats: &CorpusStats,
) -> Result<f64> {
    if stats.n_docs == 0 {
        return Err(Error::Config(
            "cider requires corpus document frequencies (empty corpus stats)".into(),
        ));
    }
    if references.is_empty() {
        return Err(Error::EmptyInput("cider needs at least one reference".into()));
    }
    let cand_tokens = tokenize(candidate);
    let mut total = 0.0;
    for n in 1..=4 {
        let cand_vec = tfidf_vector(stats, &cand_tokens, n);
        let mut per_ref = 0.0;
        for r in references {
            let ref_vec = tfidf_vector(stats, &tokenize(r.as_ref()), n);
            per_ref += cosine(&cand_vec, &ref_vec);
        }
        total += per_ref / references.len() as f64;
    }
    Ok(10.0 * total / 4.0)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QualityScores {
    pub bleu4: f64,
    pub cider: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptionEvalReport {
    /// Images scored for gender outcome (gold label Women or Men).
    pub outcome_images: usize,
    /// Generated captions skipped for outcomes (discarded or unlabeled gold).
    pub outcome_skipped: usize,
    /// Images scored for quality (reference captions available).
    pub quality_images: usize,
    pub outcomes: OutcomeTable,
    pub quality: Option<QualityScores>,
}

/// Score a full result set: outcome table over gender-labeled images and
/// corpus-level quality over images with references.
pub fn evaluate_captions(
    generated: &[GeneratedCaption],
    gold_labels: &BTreeMap<u64, GenderLabel>,
    references: &BTreeMap<u64, Vec<String>>,
    lexicon: &GenderLexicon,
) -> Result<CaptionEvalReport> {
    let mut seen = std::collections::HashSet::new();
    for g in generated {
        if !seen.insert(g.image_id) {
            return Err(Error::InvalidInput(format!(
                "multiple captions for image {}",
                g.image_id
            )));
        }
    }

    let mut outcomes = Vec::new();
    let mut skipped = 0usize;
    for g in generated {
        match gold_labels.get(&g.image_id).copied() {
            Some(gold @ (GenderLabel::Women | GenderLabel::Men)) => {
                outcomes.push((gold, outcome(&g.caption, gold, lexicon)?));
            }
            _ => skipped += 1,
        }
    }

    let quality_pairs: Vec<(&GeneratedCaption, &Vec<String>)> = generated
        .iter()
        .filter_map(|g| references.get(&g.image_id).map(|refs| (g, refs)))
        .filter(|(_, refs)| !refs.is_empty())
        .collect();
    let quality = if quality_pairs.is_empty() {
        None
    } else {
        let stats =
            CorpusStats::from_corpus(&quality_pairs.iter().map(|(_, r)| (*r).clone()).collect::<Vec<_>>());
        let bleu_pairs: Vec<(String, Vec<String>)> = quality_pairs
            .iter()
            .map(|(g, refs)| (g.caption.clone(), (*refs).clone()))
            .collect();
        let bleu = bleu4_corpus(&bleu_pairs)?;
        let mut cider_sum = 0.0;
        for (g, refs) in &quality_pairs {
            cider_sum += cider(&g.caption, refs, &stats)?;
        }
        Some(QualityScores {
            bleu4: bleu,
            cider: cider_sum / quality_pairs.len() as f64,
        })
    };

    Ok(CaptionEvalReport {
        outcome_images: outcomes.len(),
        outcome_skipped: skipped,
        quality_images: quality_pairs.len(),
        outcomes: aggregate(&outcomes),
        quality,
    })
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x:.digits$}"))
}

/// Plain-text rendering of an evaluation report.
pub fn render_eval_text(report: &CaptionEvalReport) -> String {
    let t = &report.outcomes;
    let mut out = String::new();
    out.push_str("outcome rates (%)\n");
    out.push_str(&format!(
        "{:<8}{:>7}{:>9}{:>8}{:>9}\n",
        "gender", "count", "correct", "wrong", "neutral"
    ));
    for (name, s) in [("women", &t.women), ("men", &t.men)] {
        out.push_str(&format!(
            "{:<8}{:>7}{:>9.1}{:>8.1}{:>9.1}\n",
            name, s.count, s.correct, s.wrong, s.neutral
        ));
    }
    if t.partial {
        out.push_str("note: one gender has no outcomes; derived numbers omitted\n");
    }
    out.push_str(&format!(
        "gender error: {} (per-gender mean), {} (pooled)\n",
        fmt_opt(t.gender_error, 1),
        fmt_opt(t.gender_error_pooled, 1)
    ));
    out.push_str(&format!("divergence: {}\n", fmt_opt(t.divergence, 4)));
    if let Some(q) = &report.quality {
        out.push_str(&format!(
            "bleu4: {:.4}\ncider: {:.4} (plain, not comparable to CIDEr-D)\n",
            q.bleu4, q.cider
        ));
    }
    out.push_str(&format!(
        "images: {} outcome-scored, {} skipped, {} quality-scored\n",
        report.outcome_images, report.outcome_skipped, report.quality_images
    ));
    out
}
