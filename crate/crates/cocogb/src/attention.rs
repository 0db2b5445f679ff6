//! Attention-map localization scoring: Pointing Game and Attention Sum
//! against person segmentation masks.
//!
//! Attention grids arrive at whatever resolution a model used; the mask
//! resolution is authoritative, so grids are bilinearly upsampled (mass
//! preserved) before scoring.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coco::InstanceDataset;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lexicon::GenderLabel;
use crate::mask::{person_mask, SegMask};

/// One gender-word attention map emitted by a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub image_id: u64,
    pub token: String,
    pub grid: Grid,
}

/// Load JSON-lines attention records:
/// `{"image_id": int, "token": str, "grid": [[float,...],...]}` per line.
pub fn load_attention_records(path: &Path) -> Result<Vec<AttentionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    let mut offset = 0usize;
    for (idx, chunk) in text.split_inclusive('\n').enumerate() {
        let line = chunk.trim_end_matches(['\n', '\r']);
        if !line.trim().is_empty() {
            let rec: AttentionRecord = serde_json::from_str(line).map_err(|e| Error::JsonParse {
                path: path.to_path_buf(),
                offset: offset + e.column().saturating_sub(1),
                line: idx + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            if !rec.grid.all_nonnegative() {
                return Err(Error::InvalidInput(format!(
                    "{}: attention grid for image {} has negative values",
                    path.display(),
                    rec.image_id
                )));
            }
            if rec.grid.max() <= 0.0 {
                return Err(Error::ZeroAttention);
            }
            records.push(rec);
        }
        offset += chunk.len();
    }
    if records.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{}: no attention records",
            path.display()
        )));
    }
    Ok(records)
}

/// Bilinear resize with corner-aligned sampling; the result is rescaled so
/// its total equals the input's total (interpolation must not create or
/// destroy attention mass). A single-row/column source or target degenerates
/// to sampling the source midline.
pub fn upsample_bilinear(grid: &Grid, target_w: usize, target_h: usize) -> Result<Grid> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidInput(
            "upsample target must be at least 1x1".into(),
        ));
    }
    let (sh, sw) = (grid.rows(), grid.cols());
    let src_pos = |dst: usize, dst_len: usize, src_len: usize| -> f64 {
        if dst_len == 1 {
            (src_len as f64 - 1.0) / 2.0
        } else {
            dst as f64 * (src_len as f64 - 1.0) / (dst_len as f64 - 1.0)
        }
    };
    let mut data = Vec::with_capacity(target_w * target_h);
    for y in 0..target_h {
        let fy = src_pos(y, target_h, sh);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for x in 0..target_w {
            let fx = src_pos(x, target_w, sw);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            data.push(
                grid.get(y0, x0) * (1.0 - wy) * (1.0 - wx)
                    + grid.get(y0, x1) * (1.0 - wy) * wx
                    + grid.get(y1, x0) * wy * (1.0 - wx)
                    + grid.get(y1, x1) * wy * wx,
            );
        }
    }
    let out = Grid::new(target_h, target_w, data)?;
    let (src_sum, out_sum) = (grid.sum(), out.sum());
    if out_sum > 0.0 {
        Ok(out.scaled(src_sum / out_sum))
    } else if src_sum > 0.0 {
        // Every sample landed on zero cells (possible when downsampling a
        // sparse grid); spread the mass uniformly rather than lose it.
        Grid::filled(
            target_h,
            target_w,
            src_sum / (target_w * target_h) as f64,
        )
    } else {
        Ok(out)
    }
}

fn argmax_in_mask(up: &Grid, mask: &SegMask) -> bool {
    if mask.is_empty_mask() {
        return false;
    }
    let (row, col) = up.argmax();
    mask.get(col as u32, row as u32) == 1
}

fn masked_fraction(up: &Grid, mask: &SegMask) -> Result<f64> {
    let normalized = up.sum_normalized()?;
    let mut inside = 0.0;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) == 1 {
                inside += normalized.get(y as usize, x as usize);
            }
        }
    }
    Ok(inside)
}

/// True iff the highest-attention pixel (ties to the smallest row-major
/// index) lies inside the mask. An all-zero mask is a miss by definition.
pub fn pointing_game(grid: &Grid, mask: &SegMask) -> Result<bool> {
    let up = upsample_bilinear(grid, mask.width() as usize, mask.height() as usize)?;
    Ok(argmax_in_mask(&up, mask))
}

/// Fraction of total attention mass falling inside the mask, computed on
/// the sum-normalized upsampled grid. Errors on zero-mass attention.
pub fn attention_sum(grid: &Grid, mask: &SegMask) -> Result<f64> {
    let up = upsample_bilinear(grid, mask.width() as usize, mask.height() as usize)?;
    masked_fraction(&up, mask)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttentionScore {
    pub pointing_hit: bool,
    pub attention_sum: f64,
}

/// Both scores from a single upsampling pass.
pub fn score_record(grid: &Grid, mask: &SegMask) -> Result<AttentionScore> {
    let up = upsample_bilinear(grid, mask.width() as usize, mask.height() as usize)?;
    Ok(AttentionScore {
        pointing_hit: argmax_in_mask(&up, mask),
        attention_sum: masked_fraction(&up, mask)?,
    })
}

/// Per-gender localization accuracy, in percent.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AttentionStats {
    pub count: usize,
    pub pointing: f64,
    pub attention_sum: f64,
}

/// Pointing and attention-sum accuracy per gender plus the two-gender
/// average; partial when a gender has no records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionTable {
    pub women: AttentionStats,
    pub men: AttentionStats,
    pub partial: bool,
    pub pointing_average: Option<f64>,
    pub attention_sum_average: Option<f64>,
}

pub fn aggregate_attention(scores: &[(GenderLabel, AttentionScore)]) -> AttentionTable {
    let stats = |gender: GenderLabel| -> AttentionStats {
        let mut hits = 0usize;
        let mut sum = 0.0;
        let mut count = 0usize;
        for &(g, s) in scores {
            if g == gender {
                count += 1;
                hits += s.pointing_hit as usize;
                sum += s.attention_sum;
            }
        }
        if count == 0 {
            return AttentionStats::default();
        }
        AttentionStats {
            count,
            pointing: 100.0 * hits as f64 / count as f64,
            attention_sum: 100.0 * sum / count as f64,
        }
    };
    let women = stats(GenderLabel::Women);
    let men = stats(GenderLabel::Men);
    let partial = women.count == 0 || men.count == 0;
    AttentionTable {
        women,
        men,
        partial,
        pointing_average: (!partial).then(|| (women.pointing + men.pointing) / 2.0),
        attention_sum_average: (!partial).then(|| (women.attention_sum + men.attention_sum) / 2.0),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionEvalReport {
    pub scored: usize,
    /// Records without a Women/Men gold label or without an image record.
    pub skipped: usize,
    pub table: AttentionTable,
}

/// Score every record against its image's person mask and aggregate by the
/// image's gold gender label.
pub fn evaluate_attention(
    records: &[AttentionRecord],
    labels: &BTreeMap<u64, GenderLabel>,
    instances: &InstanceDataset,
) -> Result<AttentionEvalReport> {
    let images: HashMap<u64, &crate::coco::ImageRecord> =
        instances.images.iter().map(|img| (img.id, img)).collect();
    let scored: Vec<Option<(GenderLabel, AttentionScore)>> = records
        .par_iter()
        .map(|rec| -> Result<Option<(GenderLabel, AttentionScore)>> {
            let label = match labels.get(&rec.image_id).copied() {
                Some(l @ (GenderLabel::Women | GenderLabel::Men)) => l,
                _ => return Ok(None),
            };
            let Some(img) = images.get(&rec.image_id) else {
                return Ok(None);
            };
            let mask = person_mask(img, instances.person_instances(rec.image_id))?;
            Ok(Some((label, score_record(&rec.grid, &mask)?)))
        })
        .collect::<Result<_>>()?;
    let skipped = scored.iter().filter(|s| s.is_none()).count();
    let scores: Vec<(GenderLabel, AttentionScore)> = scored.into_iter().flatten().collect();
    Ok(AttentionEvalReport {
        scored: scores.len(),
        skipped,
        table: aggregate_attention(&scores),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x:.1}"))
}

/// Plain-text rendering of an attention report.
pub fn render_attention_text(report: &AttentionEvalReport) -> String {
    let t = &report.table;
    let mut out = String::new();
    out.push_str("attention correctness (%)\n");
    out.push_str(&format!(
        "{:<9}{:>7}{:>10}{:>15}\n",
        "gender", "count", "pointing", "attention-sum"
    ));
    for (name, s) in [("women", &t.women), ("men", &t.men)] {
        out.push_str(&format!(
            "{:<9}{:>7}{:>10.1}{:>15.1}\n",
            name, s.count, s.pointing, s.attention_sum
        ));
    }
    out.push_str(&format!(
        "{:<9}{:>7}{:>10}{:>15}\n",
        "average",
        "",
        fmt_opt(t.pointing_average),
        fmt_opt(t.attention_sum_average)
    ));
    out.push_str(&format!(
        "records: {} scored, {} skipped\n",
        report.scored, report.skipped
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(rows: usize, cols: usize, data: &[f64]) -> Grid {
        Grid::new(rows, cols, data.to_vec()).unwrap()
    }

    fn mask_from_bits(w: u32, h: u32, bits: &[u8]) -> SegMask {
        SegMask::from_bits(w, h, bits.to_vec()).unwrap()
    }

    #[test]
    fn upsample_constant_stays_constant() {
        let g = Grid::filled(2, 2, 1.0).unwrap();
        let up = upsample_bilinear(&g, 4, 4).unwrap();
        let first = up.get(0, 0);
        for r in 0..4 {
            for c in 0..4 {
                assert!((up.get(r, c) - first).abs() < 1e-12);
            }
        }
        assert!((up.sum() - g.sum()).abs() < 1e-12);
    }

    #[test]
    fn upsample_1x1_fills_constant() {
        let g = grid(1, 1, &[3.0]);
        let up = upsample_bilinear(&g, 3, 2).unwrap();
        assert_eq!((up.rows(), up.cols()), (2, 3));
        for r in 0..2 {
            for c in 0..3 {
                assert!((up.get(r, c) - 0.5).abs() < 1e-12);
            }
        }
    }

    // 2x2 corner spike upsampled to 4x4: corner-aligned samples sit at
    // i/3 in source coordinates, so the interpolant is the outer product
    // (1 - i/3)(1 - j/3), total 4, then mass-rescaled back to 1.
    #[test]
    fn upsample_matches_hand_computed_weights() {
        let g = grid(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let up = upsample_bilinear(&g, 4, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = (1.0 - i as f64 / 3.0) * (1.0 - j as f64 / 3.0) / 4.0;
                assert!(
                    (up.get(i, j) - expected).abs() < 1e-12,
                    "({i},{j}): {} vs {expected}",
                    up.get(i, j)
                );
            }
        }
        assert!((up.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upsample_rejects_zero_target() {
        let g = Grid::filled(2, 2, 1.0).unwrap();
        assert!(upsample_bilinear(&g, 0, 4).is_err());
    }

    #[test]
    fn pointing_spike_inside_and_outside() {
        // 2x2 image, left column masked.
        let mask = mask_from_bits(2, 2, &[1, 0, 1, 0]);
        let spike_left = grid(2, 2, &[9.0, 0.1, 0.1, 0.1]);
        let spike_right = grid(2, 2, &[0.1, 9.0, 0.1, 0.1]);
        assert!(pointing_game(&spike_left, &mask).unwrap());
        assert!(!pointing_game(&spike_right, &mask).unwrap());
    }

    #[test]
    fn pointing_empty_mask_is_miss() {
        let mask = mask_from_bits(2, 2, &[0, 0, 0, 0]);
        let g = Grid::filled(2, 2, 1.0).unwrap();
        assert!(!pointing_game(&g, &mask).unwrap());
    }

    #[test]
    fn pointing_tie_takes_smallest_row_major_index() {
        // Equal maxima at (0,1) and (1,0); row-major order prefers (0,1).
        let g = grid(2, 2, &[0.0, 5.0, 5.0, 0.0]);
        let hit_col1 = mask_from_bits(2, 2, &[0, 1, 0, 0]);
        let hit_row1 = mask_from_bits(2, 2, &[0, 0, 1, 0]);
        assert!(pointing_game(&g, &hit_col1).unwrap());
        assert!(!pointing_game(&g, &hit_row1).unwrap());
    }

    #[test]
    fn pointing_invariant_under_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let data: Vec<f64> = (0..36).map(|_| rng.gen_range(0.0..1.0)).collect();
            let bits: Vec<u8> = (0..36).map(|_| rng.gen_range(0..2) as u8).collect();
            let g = grid(6, 6, &data);
            let mask = mask_from_bits(6, 6, &bits);
            let base = pointing_game(&g, &mask).unwrap();
            let scaled = pointing_game(&g.scaled(37.5), &mask).unwrap();
            assert_eq!(base, scaled);
        }
    }

    #[test]
    fn pointing_matches_exhaustive_argmax_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let data: Vec<f64> = (0..48).map(|_| rng.gen_range(0.0..1.0)).collect();
            let bits: Vec<u8> = (0..48).map(|_| rng.gen_range(0..2) as u8).collect();
            let g = grid(6, 8, &data);
            let mask = mask_from_bits(8, 6, &bits);
            // Independent scan: strict maximum, first occurrence wins.
            let mut best = f64::NEG_INFINITY;
            let mut best_idx = 0usize;
            for (i, &v) in data.iter().enumerate() {
                if v > best {
                    best = v;
                    best_idx = i;
                }
            }
            let oracle = bits[best_idx] == 1;
            assert_eq!(pointing_game(&g, &mask).unwrap(), oracle);
        }
    }

    #[test]
    fn attention_sum_uniform_half_mask_is_half() {
        let g = Grid::filled(4, 4, 0.25).unwrap();
        let mut bits = vec![0u8; 16];
        for b in bits.iter_mut().take(8) {
            *b = 1;
        }
        let mask = mask_from_bits(4, 4, &bits);
        let s = attention_sum(&g, &mask).unwrap();
        assert!((s - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn attention_sum_full_and_empty_masks() {
        let g = grid(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let full = mask_from_bits(3, 2, &[1; 6]);
        let empty = mask_from_bits(3, 2, &[0; 6]);
        assert!((attention_sum(&g, &full).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(attention_sum(&g, &empty).unwrap(), 0.0);
    }

    #[test]
    fn attention_sum_matches_direct_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let data: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..2.0)).collect();
            let bits: Vec<u8> = (0..30).map(|_| rng.gen_range(0..2) as u8).collect();
            let g = grid(5, 6, &data);
            let mask = mask_from_bits(6, 5, &bits);
            let total: f64 = data.iter().sum();
            let inside: f64 = data
                .iter()
                .zip(&bits)
                .filter(|(_, &b)| b == 1)
                .map(|(v, _)| v)
                .sum();
            let oracle = inside / total;
            assert!((attention_sum(&g, &mask).unwrap() - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn attention_sum_monotone_in_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let data: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..1.0)).collect();
            let small: Vec<u8> = (0..25).map(|_| (rng.gen_range(0..4) == 0) as u8).collect();
            let big: Vec<u8> = small
                .iter()
                .map(|&b| b | (rng.gen_range(0..3) == 0) as u8)
                .collect();
            let g = grid(5, 5, &data);
            let a = attention_sum(&g, &mask_from_bits(5, 5, &small)).unwrap();
            let b = attention_sum(&g, &mask_from_bits(5, 5, &big)).unwrap();
            assert!(b >= a - 1e-12);
        }
    }

    #[test]
    fn aggregate_matches_hand_means() {
        use GenderLabel::*;
        let scores = vec![
            (Women, AttentionScore { pointing_hit: true, attention_sum: 0.4 }),
            (Women, AttentionScore { pointing_hit: false, attention_sum: 0.6 }),
            (Men, AttentionScore { pointing_hit: true, attention_sum: 1.0 }),
            (Men, AttentionScore { pointing_hit: true, attention_sum: 0.5 }),
        ];
        let table = aggregate_attention(&scores);
        assert!((table.women.pointing - 50.0).abs() < 1e-9);
        assert!((table.women.attention_sum - 50.0).abs() < 1e-9);
        assert!((table.men.pointing - 100.0).abs() < 1e-9);
        assert!((table.men.attention_sum - 75.0).abs() < 1e-9);
        assert!((table.pointing_average.unwrap() - 75.0).abs() < 1e-9);
        assert!((table.attention_sum_average.unwrap() - 62.5).abs() < 1e-9);
        assert!(!table.partial);
    }

    #[test]
    fn aggregate_all_hits_scores_hundred() {
        let scores = vec![
            (GenderLabel::Women, AttentionScore { pointing_hit: true, attention_sum: 1.0 }),
            (GenderLabel::Men, AttentionScore { pointing_hit: true, attention_sum: 1.0 }),
        ];
        let table = aggregate_attention(&scores);
        assert_eq!(table.pointing_average, Some(100.0));
    }

    #[test]
    fn aggregate_partial_without_men() {
        let scores = vec![(
            GenderLabel::Women,
            AttentionScore { pointing_hit: true, attention_sum: 0.5 },
        )];
        let table = aggregate_attention(&scores);
        assert!(table.partial);
        assert!(table.pointing_average.is_none());
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"image_id": 1, "token": "woman", "grid": [[0.2, 0.8]]}}"#).unwrap();
        writeln!(f).unwrap();
        writeln!(f, r#"{{"image_id": 2, "token": "man", "grid": [[1.0], [3.0]]}}"#).unwrap();
        let records = load_attention_records(f.path()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].grid.rows(), 2);

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, r#"{{"image_id": 1, "token": "woman", "grid": [[0.2]]}}"#).unwrap();
        writeln!(bad, r#"{{"image_id": 2 BROKEN"#).unwrap();
        match load_attention_records(bad.path()) {
            Err(Error::JsonParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }

        let mut zero = tempfile::NamedTempFile::new().unwrap();
        writeln!(zero, r#"{{"image_id": 1, "token": "woman", "grid": [[0.0, 0.0]]}}"#).unwrap();
        assert!(matches!(
            load_attention_records(zero.path()),
            Err(Error::ZeroAttention)
        ));

        let mut neg = tempfile::NamedTempFile::new().unwrap();
        writeln!(neg, r#"{{"image_id": 1, "token": "woman", "grid": [[-0.5, 1.0]]}}"#).unwrap();
        assert!(matches!(
            load_attention_records(neg.path()),
            Err(Error::InvalidInput(_))
        ));
    }
}
