//! Binary segmentation masks: RLE decode/encode, polygon rasterization, and
//! person-mask assembly.
//!
//! RLE follows the COCO convention: run lengths alternate background and
//! foreground, starting with background, over the mask flattened in
//! column-major order. Masks themselves are stored row-major.

use crate::coco::{ImageRecord, InstanceAnnotation, SegGeometry};
use crate::error::{Error, Result};

/// Row-major binary mask. Values are 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: u32,
    height: u32,
    bits: Vec<u8>,
}

impl SegMask {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![0; width as usize * height as usize],
        }
    }

    /// Build from row-major bits; any nonzero byte counts as foreground.
    pub fn from_bits(width: u32, height: u32, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} bits, expected {}x{} = {}",
                bits.len(),
                width,
                height,
                width as usize * height as usize
            )));
        }
        Ok(Self {
            width,
            height,
            bits: bits.into_iter().map(|b| u8::from(b != 0)).collect(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.bits[y as usize * self.width as usize + x as usize] = u8::from(value != 0);
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// In-place union with another mask of the same dimensions.
    pub fn union_with(&mut self, other: &SegMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ShapeMismatch(format!(
                "mask union of {}x{} with {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    /// Area-majority downsample to `out_width` x `out_height`.
    ///
    /// Each output cell covers a rectangle of the source; the cell is set when
    /// at least half of its covered area is foreground.
    pub fn downsample_majority(&self, out_width: u32, out_height: u32) -> SegMask {
        let mut out = SegMask::zeros(out_width, out_height);
        let sx = self.width as f64 / out_width as f64;
        let sy = self.height as f64 / out_height as f64;
        for oy in 0..out_height {
            let y_lo = oy as f64 * sy;
            let y_hi = (oy + 1) as f64 * sy;
            for ox in 0..out_width {
                let x_lo = ox as f64 * sx;
                let x_hi = (ox + 1) as f64 * sx;
                let mut fg = 0.0;
                for py in y_lo.floor() as u32..(y_hi.ceil() as u32).min(self.height) {
                    let oy_len = (y_hi.min((py + 1) as f64) - y_lo.max(py as f64)).max(0.0);
                    if oy_len == 0.0 {
                        continue;
                    }
                    for px in x_lo.floor() as u32..(x_hi.ceil() as u32).min(self.width) {
                        if self.get(px, py) == 0 {
                            continue;
                        }
                        let ox_len = (x_hi.min((px + 1) as f64) - x_lo.max(px as f64)).max(0.0);
                        fg += ox_len * oy_len;
                    }
                }
                if fg >= 0.5 * sx * sy {
                    out.set(ox, oy, 1);
                }
            }
        }
        out
    }
}

/// Decode column-major RLE counts into a row-major mask.
///
/// Counts alternate background/foreground starting with background and must
/// sum to `width * height`.
pub fn decode_rle(counts: &[u32], width: u32, height: u32) -> Result<SegMask> {
    let n = width as usize * height as usize;
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    if total != n {
        return Err(Error::RleSizeMismatch {
            expected: n,
            got: total,
        });
    }
    let mut mask = SegMask::zeros(width, height);
    let mut pos = 0usize;
    let mut value = 0u8;
    for &run in counts {
        if value == 1 {
            for i in pos..pos + run as usize {
                // column-major flat index -> (x, y)
                let x = (i / height as usize) as u32;
                let y = (i % height as usize) as u32;
                mask.set(x, y, 1);
            }
        }
        pos += run as usize;
        value ^= 1;
    }
    Ok(mask)
}

/// Encode a mask into column-major RLE counts (inverse of [`decode_rle`]).
///
/// The result always starts with the background run, which is 0 when the
/// first column-major pixel is foreground.
pub fn encode_rle(mask: &SegMask) -> Vec<u32> {
    let n = mask.width as usize * mask.height as usize;
    let mut counts = Vec::new();
    let mut current = 0u8;
    let mut run = 0u32;
    for i in 0..n {
        let x = (i / mask.height as usize) as u32;
        let y = (i % mask.height as usize) as u32;
        let v = mask.get(x, y);
        if v == current {
            run += 1;
        } else {
            counts.push(run);
            current = v;
            run = 1;
        }
    }
    counts.push(run);
    counts
}

/// Rasterize a union of polygons with the even-odd rule at pixel centers.
///
/// Vertices marginally outside the image are clamped to its rectangle. Each
/// polygon is a flat `[x0, y0, x1, y1, ...]` list with at least 3 points.
pub fn rasterize_polygon(polygons: &[Vec<f64>], width: u32, height: u32) -> Result<SegMask> {
    let mut mask = SegMask::zeros(width, height);
    for poly in polygons {
        if poly.len() < 6 || poly.len() % 2 != 0 {
            return Err(Error::DegeneratePolygon {
                points: poly.len() / 2,
            });
        }
        let verts: Vec<(f64, f64)> = poly
            .chunks(2)
            .map(|p| (p[0].clamp(0.0, width as f64), p[1].clamp(0.0, height as f64)))
            .collect();
        fill_even_odd(&verts, &mut mask);
    }
    Ok(mask)
}

/// Scanline fill at pixel-center sample points.
fn fill_even_odd(verts: &[(f64, f64)], mask: &mut SegMask) {
    let n = verts.len();
    let mut crossings: Vec<f64> = Vec::new();
    for y in 0..mask.height {
        let yc = y as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (x1, y1) = verts[i];
            let (x2, y2) = verts[(i + 1) % n];
            // half-open rule so shared vertices count once
            if (y1 <= yc) != (y2 <= yc) {
                crossings.push(x1 + (yc - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in crossings.chunks(2) {
            if pair.len() < 2 {
                break;
            }
            // centers x+0.5 in [pair[0], pair[1])
            let start = (pair[0] - 0.5).ceil().max(0.0) as u32;
            let end = ((pair[1] - 0.5).ceil().max(0.0) as u32).min(mask.width);
            for x in start..end {
                mask.set(x, y, 1);
            }
        }
    }
}

/// Union of the given instances' masks at the image's resolution.
///
/// Callers pass the person-category instances of one image; no instances
/// yields the all-zero mask.
pub fn person_mask<'a, I>(image: &ImageRecord, instances: I) -> Result<SegMask>
where
    I: IntoIterator<Item = &'a InstanceAnnotation>,
{
    let mut acc = SegMask::zeros(image.width, image.height);
    for inst in instances {
        let m = instance_mask(inst, image.width, image.height)?;
        acc.union_with(&m)?;
    }
    Ok(acc)
}

/// Decode one instance's segmentation at the stated image resolution.
pub fn instance_mask(inst: &InstanceAnnotation, width: u32, height: u32) -> Result<SegMask> {
    match &inst.segmentation {
        SegGeometry::Polygons(polys) => rasterize_polygon(polys, width, height),
        SegGeometry::Rle { size, counts } => {
            // COCO stores size as [height, width]
            if size[0] != height || size[1] != width {
                return Err(Error::ShapeMismatch(format!(
                    "RLE size [{}, {}] does not match image {}x{}",
                    size[0], size[1], width, height
                )));
            }
            decode_rle(counts, width, height)
        }
        SegGeometry::CompressedRle { .. } => Err(Error::UnsupportedSegmentation(
            "compressed string RLE counts (annotation files store crowd RLE uncompressed)".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_rle_column_major() {
        // counts [1,3] on 2x2: column-major bits 0,1,1,1
        // row-major rows: [0,1], [1,1]
        let m = decode_rle(&[1, 3], 2, 2).unwrap();
        assert_eq!(m.bits(), &[0, 1, 1, 1]);
        assert_eq!(m.get(0, 0), 0);
        assert_eq!(m.get(0, 1), 1);
        assert_eq!(m.get(1, 0), 1);
        assert_eq!(m.get(1, 1), 1);
    }

    #[test]
    fn decode_rle_all_background() {
        let m = decode_rle(&[4], 2, 2).unwrap();
        assert!(m.is_empty_mask());
    }

    #[test]
    fn decode_rle_size_mismatch() {
        let err = decode_rle(&[1, 2], 2, 2).unwrap_err();
        assert!(matches!(
            err,
            Error::RleSizeMismatch {
                expected: 4,
                got: 3
            }
        ));
    }

    #[test]
    fn decode_area_equals_foreground_runs() {
        let counts = [3u32, 2, 4, 5, 6];
        let m = decode_rle(&counts, 4, 5).unwrap();
        assert_eq!(m.count_ones(), 2 + 5);
    }

    #[test]
    fn left_half_square_covers_eight_pixels() {
        let poly = vec![0.0, 0.0, 2.0, 0.0, 2.0, 4.0, 0.0, 4.0];
        let m = rasterize_polygon(&[poly], 4, 4).unwrap();
        assert_eq!(m.count_ones(), 8);
        for y in 0..4 {
            assert_eq!(m.get(0, y), 1);
            assert_eq!(m.get(1, y), 1);
            assert_eq!(m.get(2, y), 0);
        }
    }

    #[test]
    fn empty_polygon_list_is_all_zero() {
        let m = rasterize_polygon(&[], 4, 4).unwrap();
        assert!(m.is_empty_mask());
    }

    #[test]
    fn two_point_polygon_rejected() {
        let err = rasterize_polygon(&[vec![0.0, 0.0, 1.0, 1.0]], 4, 4).unwrap_err();
        assert!(matches!(err, Error::DegeneratePolygon { points: 2 }));
    }

    #[test]
    fn out_of_bounds_vertices_clamp() {
        // rectangle poking past every edge fills the whole image
        let poly = vec![-5.0, -5.0, 9.0, -5.0, 9.0, 9.0, -5.0, 9.0];
        let m = rasterize_polygon(&[poly], 4, 4).unwrap();
        assert_eq!(m.count_ones(), 16);
    }

    #[test]
    fn majority_downsample_halves() {
        // left half set, 4x4 -> 2x2 keeps left column set
        let poly = vec![0.0, 0.0, 2.0, 0.0, 2.0, 4.0, 0.0, 4.0];
        let m = rasterize_polygon(&[poly], 4, 4).unwrap();
        let d = m.downsample_majority(2, 2);
        assert_eq!(d.bits(), &[1, 0, 1, 0]);
    }

    fn rng_mask(seed: u64, w: u32, h: u32) -> SegMask {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let bits = (0..w as usize * h as usize)
            .map(|_| rng.gen_range(0..=1u8))
            .collect();
        SegMask::from_bits(w, h, bits).unwrap()
    }

    #[test]
    fn union_is_monotone() {
        let a = rng_mask(11, 7, 5);
        let b = rng_mask(12, 7, 5);
        let mut u = a.clone();
        u.union_with(&b).unwrap();
        for (i, &bit) in a.bits().iter().enumerate() {
            assert!(u.bits()[i] >= bit);
        }
        for (i, &bit) in b.bits().iter().enumerate() {
            assert!(u.bits()[i] >= bit);
        }
    }

    proptest! {
        #[test]
        fn rle_round_trip_from_mask(seed in 0u64..500, w in 1u32..12, h in 1u32..12) {
            let mask = rng_mask(seed, w, h);
            let counts = encode_rle(&mask);
            let back = decode_rle(&counts, w, h).unwrap();
            prop_assert_eq!(mask, back);
        }

        #[test]
        fn rle_round_trip_from_counts(runs in proptest::collection::vec(1u32..6, 1..8), lead_zero in any::<bool>()) {
            // canonical counts: optional zero-length leading background run,
            // every later run nonzero
            let mut counts: Vec<u32> = Vec::new();
            if lead_zero {
                counts.push(0);
            }
            counts.extend(&runs);
            let total: u32 = counts.iter().sum();
            let mask = decode_rle(&counts, 1, total).unwrap();
            prop_assert_eq!(encode_rle(&mask), counts);
        }
    }
}
