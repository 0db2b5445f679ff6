//! Gender-context co-occurrence counting and per-category bias ratios.
//!
//! An image contributes at most one count per (category, gender) cell:
//! co-occurrence is presence-based, so duplicate instances of a category in
//! the same image do not inflate its cell.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::coco::{CaptionDataset, Category, InstanceDataset};
use crate::error::{Error, Result};
use crate::lexicon::{label_image, GenderLabel, GenderLexicon};

/// One labeled image together with the object categories present in it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageContext {
    pub image_id: u64,
    pub label: GenderLabel,
    pub categories: BTreeSet<u64>,
}

/// Label every captioned image and join it with its instance categories.
/// Images absent from the instance file get person count 0 (hence Discard)
/// and an empty category set.
pub fn label_dataset(
    captions: &CaptionDataset,
    instances: &InstanceDataset,
    lexicon: &GenderLexicon,
) -> Result<Vec<ImageContext>> {
    let mut out = Vec::with_capacity(captions.len());
    for (image, caps) in captions.grouped() {
        let texts: Vec<&str> = caps.iter().map(|c| c.caption.as_str()).collect();
        if texts.is_empty() {
            return Err(Error::InvalidInput(format!(
                "image {} has no captions",
                image.id
            )));
        }
        let label = label_image(&texts, instances.person_count(image.id), lexicon)?;
        out.push(ImageContext {
            image_id: image.id,
            label,
            categories: instances.categories_present(image.id),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderCounts {
    pub women: u64,
    pub men: u64,
}

/// Per-category image counts split by gender label, plus corpus totals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurrenceTable {
    cells: BTreeMap<u64, GenderCounts>,
    pub women_images: u64,
    pub men_images: u64,
}

impl CooccurrenceTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Discard-labeled images contribute nothing.
    pub fn add_image(&mut self, label: GenderLabel, categories: &BTreeSet<u64>) {
        match label {
            GenderLabel::Women => self.women_images += 1,
            GenderLabel::Men => self.men_images += 1,
            GenderLabel::Discard => return,
        }
        for &cat in categories {
            let cell = self.cells.entry(cat).or_default();
            match label {
                GenderLabel::Women => cell.women += 1,
                GenderLabel::Men => cell.men += 1,
                GenderLabel::Discard => unreachable!(),
            }
        }
    }

    /// Counting is associative and commutative, so shard tables can be
    /// folded together in any order.
    pub fn merge(&mut self, other: &CooccurrenceTable) {
        self.women_images += other.women_images;
        self.men_images += other.men_images;
        for (&cat, counts) in &other.cells {
            let cell = self.cells.entry(cat).or_default();
            cell.women += counts.women;
            cell.men += counts.men;
        }
    }

    pub fn cells(&self) -> &BTreeMap<u64, GenderCounts> {
        &self.cells
    }

    pub fn counts(&self, category_id: u64) -> GenderCounts {
        self.cells.get(&category_id).copied().unwrap_or_default()
    }
}

pub fn cooccurrence(contexts: &[ImageContext]) -> CooccurrenceTable {
    let mut table = CooccurrenceTable::new();
    for ctx in contexts {
        table.add_image(ctx.label, &ctx.categories);
    }
    table
}

/// Fraction of a category's images that are men-labeled. `None` below the
/// support threshold (and always for zero support): such cells are excluded
/// from aggregates.
pub fn bias_ratio(count_women: u64, count_men: u64, min_support: u64) -> Option<f64> {
    let total = count_women + count_men;
    if total == 0 || total < min_support {
        return None;
    }
    Some(count_men as f64 / total as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryBias {
    pub category_id: u64,
    pub name: String,
    pub count_women: u64,
    pub count_men: u64,
    /// `None` when support is below the report's threshold.
    pub bias_ratio: Option<f64>,
}

/// Corpus-level bias summary. The headline aggregates cover categories
/// meeting `min_support`; the `_all` pair covers every category with at
/// least one labeled image, since which view a corpus-level average should
/// use is a judgment call left to the reader.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasReport {
    pub min_support: u64,
    pub total_categories: usize,
    pub supported_categories: usize,
    pub women_images: u64,
    pub men_images: u64,
    /// Men images per woman image; `None` when no women images exist.
    pub men_per_woman: Option<f64>,
    pub average_bias_ratio: Option<f64>,
    pub pct_male_skewed: Option<f64>,
    pub average_bias_ratio_all: Option<f64>,
    pub pct_male_skewed_all: Option<f64>,
    /// Sorted by bias ratio descending, undefined cells last, ties by id.
    pub categories: Vec<CategoryBias>,
}

fn aggregate(ratios: &[f64]) -> (Option<f64>, Option<f64>) {
    if ratios.is_empty() {
        return (None, None);
    }
    let avg = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let skewed = ratios.iter().filter(|&&r| r > 0.5).count() as f64 / ratios.len() as f64;
    (Some(avg), Some(skewed))
}

pub fn build_report(
    table: &CooccurrenceTable,
    categories: &[Category],
    min_support: u64,
) -> Result<BiasReport> {
    if table.cells().is_empty() {
        return Err(Error::EmptyInput(
            "co-occurrence table has no categories with labeled images".into(),
        ));
    }
    let mut rows: Vec<CategoryBias> = categories
        .iter()
        .map(|cat| {
            let c = table.counts(cat.id);
            CategoryBias {
                category_id: cat.id,
                name: cat.name.clone(),
                count_women: c.women,
                count_men: c.men,
                bias_ratio: bias_ratio(c.women, c.men, min_support),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let ka = a.bias_ratio.unwrap_or(f64::NEG_INFINITY);
        let kb = b.bias_ratio.unwrap_or(f64::NEG_INFINITY);
        kb.partial_cmp(&ka)
            .unwrap()
            .then(a.category_id.cmp(&b.category_id))
    });

    let supported: Vec<f64> = rows.iter().filter_map(|r| r.bias_ratio).collect();
    let all: Vec<f64> = rows
        .iter()
        .filter_map(|r| bias_ratio(r.count_women, r.count_men, 1))
        .collect();
    let (average_bias_ratio, pct_male_skewed) = aggregate(&supported);
    let (average_bias_ratio_all, pct_male_skewed_all) = aggregate(&all);

    Ok(BiasReport {
        min_support,
        total_categories: categories.len(),
        supported_categories: supported.len(),
        women_images: table.women_images,
        men_images: table.men_images,
        men_per_woman: (table.women_images > 0)
            .then(|| table.men_images as f64 / table.women_images as f64),
        average_bias_ratio,
        pct_male_skewed,
        average_bias_ratio_all,
        pct_male_skewed_all,
        categories: rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x:.4}"))
}

/// Aligned plain-text rendering of a report, rows in stored order.
pub fn render_text(report: &BiasReport) -> String {
    let name_w = report
        .categories
        .iter()
        .map(|c| c.name.len())
        .max()
        .unwrap_or(8)
        .max("category".len());
    let mut out = String::new();
    out.push_str(&format!(
        "images: {} women, {} men (men/woman {})\n",
        report.women_images,
        report.men_images,
        fmt_opt(report.men_per_woman)
    ));
    out.push_str(&format!(
        "average bias ratio: {} over {} supported categories (min support {}), {} over all {} categories with images\n",
        fmt_opt(report.average_bias_ratio),
        report.supported_categories,
        report.min_support,
        fmt_opt(report.average_bias_ratio_all),
        report.total_categories,
    ));
    out.push_str(&format!(
        "male-skewed: {} supported, {} all\n\n",
        fmt_opt(report.pct_male_skewed),
        fmt_opt(report.pct_male_skewed_all)
    ));
    out.push_str(&format!(
        "{:<name_w$}  {:>6}  {:>6}  {:>6}\n",
        "category", "women", "men", "ratio"
    ));
    for row in &report.categories {
        out.push_str(&format!(
            "{:<name_w$}  {:>6}  {:>6}  {:>6}\n",
            row.name,
            row.count_women,
            row.count_men,
            row.bias_ratio
                .map_or_else(|| "--".to_string(), |r| format!("{r:.3}"))
        ));
    }
    out
}
