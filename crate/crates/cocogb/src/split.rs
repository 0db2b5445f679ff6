//! Balanced and anti-stereotypical split construction.
//!
//! Two builders: a greedy gender-balanced secret test selection, and a
//! train/val/test split whose test set collects minority-gender images of
//! the most skewed categories so test-time gender-context pairs oppose the
//! training distribution.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{build_report, cooccurrence, BiasReport, ImageContext};
use crate::coco::Category;
use crate::error::{Error, Result};
use crate::lexicon::GenderLabel;

/// One greedy choice: which image was added at a step and how much the
/// balance objective moved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub image_id: u64,
    pub objective_delta: f64,
}

/// A named partition of image ids. Persisted JSON carries only the id lists
/// and seed; the construction log is in-memory diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub seed: u64,
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
    #[serde(skip)]
    pub construction_log: Vec<LogEntry>,
}

impl SplitSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split spec serializes")
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        crate::coco::read_json(path)
    }
}

fn term(women: u64, men: u64) -> f64 {
    let total = women + men;
    if total == 0 {
        0.0
    } else {
        (men as f64 / total as f64 - 0.5).abs()
    }
}

/// L1 deviation of per-category gender ratios from 0.5 over the current
/// selection. Categories with no selected images contribute nothing.
#[derive(Debug, Clone, Default)]
pub struct BalanceObjective {
    counts: HashMap<u64, (u64, u64)>,
    deviation: f64,
}

impl BalanceObjective {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn deviation(&self) -> f64 {
        self.deviation
    }

    /// Change in deviation if an image with this label and category set were
    /// added. Does not mutate.
    pub fn delta(&self, label: GenderLabel, categories: &BTreeSet<u64>) -> f64 {
        debug_assert!(label != GenderLabel::Discard);
        let mut delta = 0.0;
        for cat in categories {
            let (w, m) = self.counts.get(cat).copied().unwrap_or((0, 0));
            let (nw, nm) = match label {
                GenderLabel::Women => (w + 1, m),
                _ => (w, m + 1),
            };
            delta += term(nw, nm) - term(w, m);
        }
        delta
    }

    pub fn include(&mut self, label: GenderLabel, categories: &BTreeSet<u64>) {
        self.deviation += self.delta(label, categories);
        for cat in categories {
            let cell = self.counts.entry(*cat).or_insert((0, 0));
            match label {
                GenderLabel::Women => cell.0 += 1,
                _ => cell.1 += 1,
            }
        }
    }
}

/// Greedily select `per_gender` images of each gender from the pool,
/// minimizing the balance objective. Genders alternate (even steps pick
/// women) so the quota holds exactly; within a step the candidate with the
/// lowest post-inclusion deviation wins, ties going to the smallest id.
/// Discard-labeled pool images are ignored.
pub fn build_v1_secret(pool: &[ImageContext], per_gender: usize) -> Result<SplitSpec> {
    let mut women: Vec<&ImageContext> = pool
        .iter()
        .filter(|c| c.label == GenderLabel::Women)
        .collect();
    let mut men: Vec<&ImageContext> = pool
        .iter()
        .filter(|c| c.label == GenderLabel::Men)
        .collect();
    if women.len() < per_gender {
        return Err(Error::PoolCapacity {
            gender: "women",
            available: women.len(),
            needed: per_gender,
        });
    }
    if men.len() < per_gender {
        return Err(Error::PoolCapacity {
            gender: "men",
            available: men.len(),
            needed: per_gender,
        });
    }

    let mut objective = BalanceObjective::new();
    let mut chosen = Vec::with_capacity(per_gender * 2);
    let mut construction_log = Vec::with_capacity(per_gender * 2);
    for step in 0..per_gender * 2 {
        let candidates = if step % 2 == 0 { &mut women } else { &mut men };
        // The argmin under (delta, id) is unique because ids are, so the
        // parallel reduction order cannot change the result.
        let (delta, _, idx) = candidates
            .par_iter()
            .enumerate()
            .map(|(i, c)| (objective.delta(c.label, &c.categories), c.image_id, i))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
            .expect("capacity checked above");
        let picked = candidates.swap_remove(idx);
        construction_log.push(LogEntry {
            step,
            image_id: picked.image_id,
            objective_delta: delta,
        });
        objective.include(picked.label, &picked.categories);
        chosen.push(picked.image_id);
    }
    chosen.sort_unstable();
    Ok(SplitSpec {
        name: "v1-secret".into(),
        seed: 0,
        train: Vec::new(),
        val: Vec::new(),
        test: chosen,
        construction_log,
    })
}

/// Build the anti-stereotypical train/val/test split.
///
/// Categories are ranked by how far their corpus gender ratio sits from 0.5;
/// walking that ranking, minority-gender images move into test until its
/// quota fills. A move is skipped when it would leave any of the image's
/// categories with fewer than `min_train_per_category` images outside
/// test+val; the same guard applies to the seeded uniform val draw, so the
/// final train set keeps every category at or above the floor. Remaining
/// quota is filled by ascending id. Discard-labeled images participate
/// (they carry context objects) but never count toward gender ratios.
pub fn build_v2(
    contexts: &[ImageContext],
    val_quota: usize,
    test_quota: usize,
    min_train_per_category: usize,
    seed: u64,
) -> Result<SplitSpec> {
    if contexts.len() < val_quota + test_quota {
        return Err(Error::PoolCapacity {
            gender: "total",
            available: contexts.len(),
            needed: val_quota + test_quota,
        });
    }
    let mut by_id: BTreeMap<u64, &ImageContext> = BTreeMap::new();
    for ctx in contexts {
        if by_id.insert(ctx.image_id, ctx).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate image id {} in dataset",
                ctx.image_id
            )));
        }
    }

    // Corpus-wide gender counts per category (labeled images only) and the
    // count of images of any label still available to train, per category.
    let mut gender_counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    let mut avail: BTreeMap<u64, u64> = BTreeMap::new();
    let mut members: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for ctx in by_id.values() {
        for &cat in &ctx.categories {
            *avail.entry(cat).or_insert(0) += 1;
            members.entry(cat).or_default().push(ctx.image_id);
            match ctx.label {
                GenderLabel::Women => gender_counts.entry(cat).or_insert((0, 0)).0 += 1,
                GenderLabel::Men => gender_counts.entry(cat).or_insert((0, 0)).1 += 1,
                GenderLabel::Discard => {}
            }
        }
    }

    let mut order: Vec<(u64, f64)> = gender_counts
        .iter()
        .map(|(&cat, &(w, m))| (cat, term(w, m)))
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut test: BTreeSet<u64> = BTreeSet::new();
    let mut construction_log = Vec::new();
    let mut blocking: Option<u64> = None;
    // Running labeled counts for the would-be train side, used only to log
    // how much each move skews the remainder.
    let mut train_counts = gender_counts.clone();

    let passes_floor = |ctx: &ImageContext, avail: &BTreeMap<u64, u64>| -> std::result::Result<(), u64> {
        for &cat in &ctx.categories {
            if avail[&cat] <= min_train_per_category as u64 {
                return Err(cat);
            }
        }
        Ok(())
    };
    let take = |ctx: &ImageContext,
                    test: &mut BTreeSet<u64>,
                    avail: &mut BTreeMap<u64, u64>,
                    train_counts: &mut BTreeMap<u64, (u64, u64)>,
                    log: &mut Vec<LogEntry>| {
        let mut delta = 0.0;
        for &cat in &ctx.categories {
            *avail.get_mut(&cat).unwrap() -= 1;
            if ctx.label != GenderLabel::Discard {
                let cell = train_counts.get_mut(&cat).unwrap();
                let before = term(cell.0, cell.1);
                match ctx.label {
                    GenderLabel::Women => cell.0 -= 1,
                    _ => cell.1 -= 1,
                }
                delta += term(cell.0, cell.1) - before;
            }
        }
        log.push(LogEntry {
            step: log.len(),
            image_id: ctx.image_id,
            objective_delta: delta,
        });
        test.insert(ctx.image_id);
    };

    'walk: for &(cat, deviation) in &order {
        if deviation == 0.0 {
            continue; // balanced category, no minority gender exists
        }
        let (w, m) = gender_counts[&cat];
        let minority = if m > w {
            GenderLabel::Women
        } else {
            GenderLabel::Men
        };
        for &id in &members[&cat] {
            if test.len() == test_quota {
                break 'walk;
            }
            let ctx = by_id[&id];
            if ctx.label != minority || test.contains(&id) {
                continue;
            }
            match passes_floor(ctx, &avail) {
                Ok(()) => take(ctx, &mut test, &mut avail, &mut train_counts, &mut construction_log),
                Err(cat) => blocking = Some(cat),
            }
        }
    }

    // Quota shortfall: top up by ascending id under the same floor.
    if test.len() < test_quota {
        for ctx in by_id.values() {
            if test.len() == test_quota {
                break;
            }
            if test.contains(&ctx.image_id) {
                continue;
            }
            match passes_floor(ctx, &avail) {
                Ok(()) => take(ctx, &mut test, &mut avail, &mut train_counts, &mut construction_log),
                Err(cat) => blocking = Some(cat),
            }
        }
    }
    if test.len() < test_quota {
        return Err(Error::SplitConstraint {
            category: blocking.expect("shortfall implies a blocked category"),
            min_train: min_train_per_category,
        });
    }

    // Seeded uniform val draw from the remainder, same floor guard.
    let mut remainder: Vec<u64> = by_id.keys().copied().filter(|id| !test.contains(id)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    remainder.shuffle(&mut rng);
    let mut val: BTreeSet<u64> = BTreeSet::new();
    for id in &remainder {
        if val.len() == val_quota {
            break;
        }
        let ctx = by_id[id];
        match passes_floor(ctx, &avail) {
            Ok(()) => {
                for &cat in &ctx.categories {
                    *avail.get_mut(&cat).unwrap() -= 1;
                }
                val.insert(*id);
            }
            Err(cat) => blocking = Some(cat),
        }
    }
    if val.len() < val_quota {
        return Err(Error::SplitConstraint {
            category: blocking.expect("shortfall implies a blocked category"),
            min_train: min_train_per_category,
        });
    }

    let train: Vec<u64> = by_id
        .keys()
        .copied()
        .filter(|id| !test.contains(id) && !val.contains(id))
        .collect();
    Ok(SplitSpec {
        name: "v2".into(),
        seed,
        train,
        val: val.into_iter().collect(),
        test: test.into_iter().collect(),
        construction_log,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionStats {
    pub images: usize,
    pub women: u64,
    pub men: u64,
    pub discard: u64,
    pub bias: Option<BiasReport>,
}

/// Expected sizes to check a split against; `None` skips that check.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuotaExpectation {
    pub val: Option<usize>,
    pub test: Option<usize>,
    pub test_per_gender: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub checks: Vec<SplitCheck>,
    pub partitions: BTreeMap<String, PartitionStats>,
    /// |test ratio - train ratio| per category, where both sides have
    /// labeled images of the category.
    pub ratio_gaps: BTreeMap<u64, f64>,
}

/// Recompute partition statistics and validate structural invariants:
/// pairwise disjointness, id validity, and any expected quotas.
pub fn verify_split(
    spec: &SplitSpec,
    contexts: &[ImageContext],
    categories: &[Category],
    quotas: &QuotaExpectation,
    min_support: u64,
) -> VerifyReport {
    let by_id: HashMap<u64, &ImageContext> =
        contexts.iter().map(|c| (c.image_id, c)).collect();
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(SplitCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    };

    let parts: [(&str, &[u64]); 3] = [
        ("train", &spec.train),
        ("val", &spec.val),
        ("test", &spec.test),
    ];
    for (i, (name_a, ids_a)) in parts.iter().enumerate() {
        for (name_b, ids_b) in parts.iter().skip(i + 1) {
            let set_a: BTreeSet<u64> = ids_a.iter().copied().collect();
            let overlap: Vec<u64> = ids_b.iter().copied().filter(|id| set_a.contains(id)).collect();
            push(
                &format!("disjoint({name_a},{name_b})"),
                overlap.is_empty(),
                if overlap.is_empty() {
                    "no overlap".into()
                } else {
                    format!("{} shared ids (first {:?})", overlap.len(), &overlap[..overlap.len().min(5)])
                },
            );
        }
    }

    let unknown: Vec<u64> = parts
        .iter()
        .flat_map(|(_, ids)| ids.iter())
        .copied()
        .filter(|id| !by_id.contains_key(id))
        .collect();
    push(
        "ids-exist",
        unknown.is_empty(),
        if unknown.is_empty() {
            "all ids present in source dataset".into()
        } else {
            format!("{} unknown ids (first {:?})", unknown.len(), &unknown[..unknown.len().min(5)])
        },
    );

    if let Some(expected) = quotas.val {
        push(
            "val-quota",
            spec.val.len() == expected,
            format!("have {}, want {}", spec.val.len(), expected),
        );
    }
    if let Some(expected) = quotas.test {
        push(
            "test-quota",
            spec.test.len() == expected,
            format!("have {}, want {}", spec.test.len(), expected),
        );
    }

    let mut partitions = BTreeMap::new();
    let mut tables = BTreeMap::new();
    for (name, ids) in parts {
        let mut stats = PartitionStats {
            images: ids.len(),
            women: 0,
            men: 0,
            discard: 0,
            bias: None,
        };
        let members: Vec<ImageContext> = ids
            .iter()
            .filter_map(|id| by_id.get(id).copied().cloned())
            .collect();
        for ctx in &members {
            match ctx.label {
                GenderLabel::Women => stats.women += 1,
                GenderLabel::Men => stats.men += 1,
                GenderLabel::Discard => stats.discard += 1,
            }
        }
        let table = cooccurrence(&members);
        stats.bias = build_report(&table, categories, min_support).ok();
        tables.insert(name.to_string(), table);
        partitions.insert(name.to_string(), stats);
    }

    if let Some(expected) = quotas.test_per_gender {
        let test = &partitions["test"];
        let ok = test.women == expected as u64 && test.men == expected as u64;
        push(
            "test-per-gender",
            ok,
            format!("women {}, men {}, want {} each", test.women, test.men, expected),
        );
    }

    let mut ratio_gaps = BTreeMap::new();
    let (train_t, test_t) = (&tables["train"], &tables["test"]);
    for (&cat, &counts) in train_t.cells() {
        let train_ratio = crate::bias::bias_ratio(counts.women, counts.men, 1);
        let test_counts = test_t.counts(cat);
        let test_ratio = crate::bias::bias_ratio(test_counts.women, test_counts.men, 1);
        if let (Some(a), Some(b)) = (train_ratio, test_ratio) {
            ratio_gaps.insert(cat, (a - b).abs());
        }
    }

    VerifyReport {
        pass: checks.iter().all(|c| c.passed),
        checks,
        partitions,
        ratio_gaps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(image_id: u64, label: GenderLabel, cats: &[u64]) -> ImageContext {
        ImageContext {
            image_id,
            label,
            categories: cats.iter().copied().collect(),
        }
    }

    fn cats(n: u64) -> Vec<Category> {
        (1..=n)
            .map(|id| Category {
                id,
                name: format!("cat{id}"),
            })
            .collect()
    }

    /// 8 women + 8 men, all sharing one category: the objective is flat
    /// within each step, so ties resolve to the smallest ids.
    #[test]
    fn v1_flat_objective_uses_id_tiebreak() {
        let mut pool = Vec::new();
        for id in 0..8u64 {
            pool.push(ctx(100 + id, GenderLabel::Women, &[1]));
            pool.push(ctx(200 + id, GenderLabel::Men, &[1]));
        }
        let spec = build_v1_secret(&pool, 3).unwrap();
        assert_eq!(spec.test, vec![100, 101, 102, 200, 201, 202]);
        assert_eq!(spec.construction_log.len(), 6);
        assert_eq!(spec.construction_log[0].image_id, 100);
        assert_eq!(spec.construction_log[1].image_id, 200);
    }

    #[test]
    fn v1_capacity_error_names_shortfall() {
        let pool = vec![
            ctx(1, GenderLabel::Women, &[1]),
            ctx(2, GenderLabel::Men, &[1]),
            ctx(3, GenderLabel::Men, &[1]),
        ];
        match build_v1_secret(&pool, 2) {
            Err(Error::PoolCapacity {
                gender,
                available,
                needed,
            }) => {
                assert_eq!(gender, "women");
                assert_eq!((available, needed), (1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn v1_ignores_discard_images() {
        let mut pool = Vec::new();
        for id in 0..4u64 {
            pool.push(ctx(10 + id, GenderLabel::Women, &[1]));
            pool.push(ctx(20 + id, GenderLabel::Men, &[1]));
            pool.push(ctx(30 + id, GenderLabel::Discard, &[1]));
        }
        let spec = build_v1_secret(&pool, 4).unwrap();
        assert!(spec.test.iter().all(|id| *id < 30));
    }

    /// Every logged step must be locally optimal: replaying the prefix and
    /// re-evaluating all remaining same-gender candidates never finds a
    /// strictly better delta.
    #[test]
    fn v1_greedy_steps_are_locally_optimal() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pool = Vec::new();
        for id in 0..40u64 {
            let label = if id % 2 == 0 {
                GenderLabel::Women
            } else {
                GenderLabel::Men
            };
            let n_cats = rng.gen_range(1..4usize);
            let cats: Vec<u64> = (0..n_cats).map(|_| rng.gen_range(1..7u64)).collect();
            pool.push(ctx(id, label, &cats));
        }
        let spec = build_v1_secret(&pool, 8).unwrap();

        let by_id: HashMap<u64, &ImageContext> =
            pool.iter().map(|c| (c.image_id, c)).collect();
        let mut objective = BalanceObjective::new();
        let mut used: BTreeSet<u64> = BTreeSet::new();
        for entry in &spec.construction_log {
            let gender = if entry.step % 2 == 0 {
                GenderLabel::Women
            } else {
                GenderLabel::Men
            };
            let best_alternative = pool
                .iter()
                .filter(|c| c.label == gender && !used.contains(&c.image_id))
                .map(|c| objective.delta(c.label, &c.categories))
                .fold(f64::INFINITY, f64::min);
            assert!(
                entry.objective_delta <= best_alternative + 1e-12,
                "step {} picked delta {} but {} was available",
                entry.step,
                entry.objective_delta,
                best_alternative
            );
            let picked = by_id[&entry.image_id];
            objective.include(picked.label, &picked.categories);
            used.insert(entry.image_id);
        }
    }

    /// cat1 skews male, cat2 skews female, cat3 balanced. Minority images
    /// land in test and per-category ratios flip across 0.5.
    fn v2_fixture() -> Vec<ImageContext> {
        let mut pool = Vec::new();
        for id in 1..=10u64 {
            pool.push(ctx(id, GenderLabel::Men, &[1]));
        }
        pool.push(ctx(11, GenderLabel::Women, &[1]));
        pool.push(ctx(12, GenderLabel::Women, &[1]));
        for id in 13..=22u64 {
            pool.push(ctx(id, GenderLabel::Women, &[2]));
        }
        pool.push(ctx(23, GenderLabel::Men, &[2]));
        pool.push(ctx(24, GenderLabel::Men, &[2]));
        for id in 25..=30u64 {
            let label = if id % 2 == 0 {
                GenderLabel::Women
            } else {
                GenderLabel::Men
            };
            pool.push(ctx(id, label, &[3]));
        }
        pool
    }

    #[test]
    fn v2_moves_minority_images_and_flips_ratios() {
        let pool = v2_fixture();
        let spec = build_v2(&pool, 2, 4, 0, 9).unwrap();
        assert_eq!(spec.test, vec![11, 12, 23, 24]);
        assert_eq!(spec.val.len(), 2);
        assert_eq!(spec.train.len(), pool.len() - 6);

        let report = verify_split(&spec, &pool, &cats(3), &QuotaExpectation::default(), 1);
        assert!(report.pass);
        // Train kept only men for cat1 and only women for cat2; test holds
        // the opposite gender, so both gaps are the full unit interval.
        assert_eq!(report.ratio_gaps[&1], 1.0);
        assert_eq!(report.ratio_gaps[&2], 1.0);
    }

    #[test]
    fn v2_exact_quotas_and_determinism() {
        let pool = v2_fixture();
        let a = build_v2(&pool, 3, 5, 0, 42).unwrap();
        let b = build_v2(&pool, 3, 5, 0, 42).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.val.len(), 3);
        assert_eq!(a.test.len(), 5);
        let c = build_v2(&pool, 3, 5, 0, 43).unwrap();
        assert_eq!(c.test, a.test); // test walk is seed-independent
        assert_ne!(c.val, a.val);
    }

    #[test]
    fn v2_single_category_all_men_falls_back() {
        let pool: Vec<ImageContext> = (1..=12u64)
            .map(|id| ctx(id, GenderLabel::Men, &[1]))
            .collect();
        let spec = build_v2(&pool, 0, 3, 0, 1).unwrap();
        // No minority exists, so the quota fills by ascending id.
        assert_eq!(spec.test, vec![1, 2, 3]);
    }

    #[test]
    fn v2_min_train_floor_blocks_and_errors() {
        let pool = v2_fixture();
        // Floor below capacity: moves happen but stop at the floor.
        let spec = build_v2(&pool, 0, 2, 11, 5).unwrap();
        assert_eq!(spec.test, vec![11, 23]);

        // Floor above what any category can spare: quota unsatisfiable.
        match build_v2(&pool, 2, 4, 11, 5) {
            Err(Error::SplitConstraint { min_train, .. }) => assert_eq!(min_train, 11),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn v2_floor_holds_in_final_train() {
        let pool = v2_fixture();
        let min_train = 5;
        let spec = build_v2(&pool, 4, 6, min_train, 3).unwrap();
        let by_id: HashMap<u64, &ImageContext> =
            pool.iter().map(|c| (c.image_id, c)).collect();
        let mut per_cat: BTreeMap<u64, usize> = BTreeMap::new();
        for id in &spec.train {
            for &cat in &by_id[id].categories {
                *per_cat.entry(cat).or_insert(0) += 1;
            }
        }
        for (&cat, &n) in &per_cat {
            assert!(n >= min_train, "category {cat} fell to {n} train images");
        }
        assert_eq!(per_cat.len(), 3, "no category may vanish from train");
    }

    #[test]
    fn v2_insufficient_pool_is_capacity_error() {
        let pool = v2_fixture();
        assert!(matches!(
            build_v2(&pool, 20, 20, 0, 1),
            Err(Error::PoolCapacity { gender: "total", .. })
        ));
    }

    #[test]
    fn verify_flags_overlap_and_unknown_ids() {
        let pool = v2_fixture();
        let spec = SplitSpec {
            name: "broken".into(),
            seed: 0,
            train: vec![1, 2, 3],
            val: vec![3],
            test: vec![4, 999],
            construction_log: Vec::new(),
        };
        let report = verify_split(&spec, &pool, &cats(3), &QuotaExpectation::default(), 1);
        assert!(!report.pass);
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        assert!(failed.contains(&"disjoint(train,val)"));
        assert!(failed.contains(&"ids-exist"));
    }

    #[test]
    fn verify_reports_per_gender_counts() {
        let mut pool = Vec::new();
        for id in 0..6u64 {
            pool.push(ctx(id, GenderLabel::Women, &[1]));
            pool.push(ctx(100 + id, GenderLabel::Men, &[1]));
        }
        let spec = build_v1_secret(&pool, 5).unwrap();
        let quotas = QuotaExpectation {
            test_per_gender: Some(5),
            ..Default::default()
        };
        let report = verify_split(&spec, &pool, &cats(1), &quotas, 1);
        assert!(report.pass);
        assert_eq!(report.partitions["test"].women, 5);
        assert_eq!(report.partitions["test"].men, 5);
    }

    #[test]
    fn split_spec_json_omits_log() {
        let spec = SplitSpec {
            name: "x".into(),
            seed: 4,
            train: vec![1],
            val: vec![2],
            test: vec![3],
            construction_log: vec![LogEntry {
                step: 0,
                image_id: 3,
                objective_delta: 0.0,
            }],
        };
        let json = spec.to_json();
        assert!(!json.contains("construction_log"));
        let back: SplitSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.test, vec![3]);
        assert!(back.construction_log.is_empty());
    }
}
