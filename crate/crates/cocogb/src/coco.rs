//! Loaders for COCO-format caption and instance annotation JSON.
//!
//! Accepts the 2014/2017 layout: a top-level `images` array plus an
//! `annotations` array (captions or instances) and, for instance files, a
//! `categories` array. Loading validates referential integrity so downstream
//! modules can index by id without re-checking.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    #[serde(default)]
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptionAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub caption: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    #[serde(default)]
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    #[serde(default)]
    pub segmentation: SegGeometry,
    #[serde(default, deserialize_with = "bool_or_int")]
    pub iscrowd: bool,
}

/// COCO segmentation geometry: polygons for ordinary instances, uncompressed
/// RLE for crowds. Compressed string RLE is parsed but rejected at decode
/// time (it appears only in detection result files).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SegGeometry {
    Polygons(Vec<Vec<f64>>),
    Rle { size: [u32; 2], counts: Vec<u32> },
    CompressedRle { size: [u32; 2], counts: String },
}

impl Default for SegGeometry {
    fn default() -> Self {
        SegGeometry::Polygons(Vec::new())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

fn bool_or_int<'de, D>(deserializer: D) -> std::result::Result<bool, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Bool(bool),
        Int(u8),
    }
    Ok(match Flag::deserialize(deserializer)? {
        Flag::Bool(b) => b,
        Flag::Int(i) => i != 0,
    })
}

#[derive(Debug, Deserialize)]
struct RawCaptionFile {
    #[serde(default)]
    images: Vec<ImageRecord>,
    #[serde(default)]
    annotations: Vec<CaptionAnnotation>,
}

#[derive(Debug, Deserialize)]
struct RawInstanceFile {
    #[serde(default)]
    images: Vec<ImageRecord>,
    #[serde(default)]
    annotations: Vec<InstanceAnnotation>,
    #[serde(default)]
    categories: Vec<Category>,
}

/// Caption annotations grouped by image, in file order.
#[derive(Debug, Clone)]
pub struct CaptionDataset {
    pub images: Vec<ImageRecord>,
    captions: HashMap<u64, Vec<CaptionAnnotation>>,
}

impl CaptionDataset {
    pub fn captions_for(&self, image_id: u64) -> &[CaptionAnnotation] {
        self.captions.get(&image_id).map_or(&[], Vec::as_slice)
    }

    pub fn grouped(&self) -> impl Iterator<Item = (&ImageRecord, &[CaptionAnnotation])> {
        self.images
            .iter()
            .map(move |img| (img, self.captions_for(img.id)))
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Instance annotations grouped by image, plus the category table.
#[derive(Debug, Clone)]
pub struct InstanceDataset {
    pub images: Vec<ImageRecord>,
    pub categories: Vec<Category>,
    instances: HashMap<u64, Vec<InstanceAnnotation>>,
}

impl InstanceDataset {
    pub fn instances_for(&self, image_id: u64) -> &[InstanceAnnotation] {
        self.instances.get(&image_id).map_or(&[], Vec::as_slice)
    }

    pub fn category_id(&self, name: &str) -> Option<u64> {
        self.categories.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn person_category_id(&self) -> Option<u64> {
        self.category_id("person")
    }

    /// Instances of the person category for one image (crowds included).
    pub fn person_instances(&self, image_id: u64) -> Vec<&InstanceAnnotation> {
        let Some(person) = self.person_category_id() else {
            return Vec::new();
        };
        self.instances_for(image_id)
            .iter()
            .filter(|i| i.category_id == person)
            .collect()
    }

    pub fn person_count(&self, image_id: u64) -> usize {
        self.person_instances(image_id).len()
    }

    /// Distinct category ids present in the image.
    pub fn categories_present(&self, image_id: u64) -> BTreeSet<u64> {
        self.instances_for(image_id)
            .iter()
            .map(|i| i.category_id)
            .collect()
    }
}

/// Load a COCO caption-annotation file and group captions by image.
pub fn load_captions(path: &Path) -> Result<CaptionDataset> {
    let raw: RawCaptionFile = read_json(path)?;
    if raw.images.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{}: no images in annotation file",
            path.display()
        )));
    }
    validate_images(path, &raw.images)?;
    for ann in &raw.annotations {
        if ann.caption.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "{}: caption annotation {} is empty",
                path.display(),
                ann.id
            )));
        }
    }
    let known: HashSet<u64> = raw.images.iter().map(|i| i.id).collect();
    let dangling = dangling_ids(raw.annotations.iter().map(|a| a.image_id), &known);
    if !dangling.is_empty() {
        return Err(Error::ReferentialIntegrity {
            path: path.to_path_buf(),
            kind: "caption",
            offenders: dangling,
        });
    }
    let mut captions: HashMap<u64, Vec<CaptionAnnotation>> = HashMap::new();
    for ann in raw.annotations {
        captions.entry(ann.image_id).or_default().push(ann);
    }
    Ok(CaptionDataset {
        images: raw.images,
        captions,
    })
}

/// Load a COCO instance-annotation file and group instances by image.
pub fn load_instances(path: &Path) -> Result<InstanceDataset> {
    let raw: RawInstanceFile = read_json(path)?;
    if raw.images.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{}: no images in annotation file",
            path.display()
        )));
    }
    validate_images(path, &raw.images)?;

    let mut cat_ids = HashSet::new();
    let mut cat_names = HashSet::new();
    for cat in &raw.categories {
        if !cat_ids.insert(cat.id) || !cat_names.insert(cat.name.as_str()) {
            return Err(Error::InvalidInput(format!(
                "{}: duplicate category id or name ({}: {})",
                path.display(),
                cat.id,
                cat.name
            )));
        }
    }

    let known: HashSet<u64> = raw.images.iter().map(|i| i.id).collect();
    let dangling = dangling_ids(raw.annotations.iter().map(|a| a.image_id), &known);
    if !dangling.is_empty() {
        return Err(Error::ReferentialIntegrity {
            path: path.to_path_buf(),
            kind: "instance",
            offenders: dangling,
        });
    }
    let dangling_cats = dangling_ids(raw.annotations.iter().map(|a| a.category_id), &cat_ids);
    if !dangling_cats.is_empty() {
        return Err(Error::ReferentialIntegrity {
            path: path.to_path_buf(),
            kind: "instance-category",
            offenders: dangling_cats,
        });
    }

    let mut instances: HashMap<u64, Vec<InstanceAnnotation>> = HashMap::new();
    for ann in raw.annotations {
        instances.entry(ann.image_id).or_default().push(ann);
    }
    Ok(InstanceDataset {
        images: raw.images,
        categories: raw.categories,
        instances,
    })
}

fn validate_images(path: &Path, images: &[ImageRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for img in images {
        if img.width == 0 || img.height == 0 {
            return Err(Error::InvalidInput(format!(
                "{}: image {} has non-positive dimensions {}x{}",
                path.display(),
                img.id,
                img.width,
                img.height
            )));
        }
        if !seen.insert(img.id) {
            return Err(Error::InvalidInput(format!(
                "{}: duplicate image id {}",
                path.display(),
                img.id
            )));
        }
    }
    Ok(())
}

fn dangling_ids(refs: impl Iterator<Item = u64>, known: &HashSet<u64>) -> Vec<u64> {
    let mut missing: Vec<u64> = refs.filter(|id| !known.contains(id)).collect();
    missing.sort_unstable();
    missing.dedup();
    missing
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| json_error(path, &text, &e))
}

pub(crate) fn json_error(path: &Path, text: &str, err: &serde_json::Error) -> Error {
    let (line, column) = (err.line(), err.column());
    let offset = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + column.saturating_sub(1);
    Error::JsonParse {
        path: path.to_path_buf(),
        offset,
        line,
        column,
        message: err.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn fixture_captions() -> String {
        let mut annotations = Vec::new();
        for (i, image_id) in [(0, 7u64), (1, 9u64)] {
            for k in 0..5 {
                annotations.push(serde_json::json!({
                    "id": i * 5 + k,
                    "image_id": image_id,
                    "caption": format!("caption {k} for image {image_id}")
                }));
            }
        }
        serde_json::json!({
            "images": [
                {"id": 7, "file_name": "a.jpg", "width": 640, "height": 480},
                {"id": 9, "file_name": "b.jpg", "width": 320, "height": 240}
            ],
            "annotations": annotations
        })
        .to_string()
    }

    #[test]
    fn captions_grouped_by_image() {
        let f = write_temp(&fixture_captions());
        let ds = load_captions(f.path()).unwrap();
        assert_eq!(ds.len(), 2);
        for (_, caps) in ds.grouped() {
            assert_eq!(caps.len(), 5);
        }
    }

    #[test]
    fn dangling_image_id_reported() {
        let text = serde_json::json!({
            "images": [{"id": 1, "file_name": "a.jpg", "width": 10, "height": 10}],
            "annotations": [{"id": 1, "image_id": 999, "caption": "a dog"}]
        })
        .to_string();
        let f = write_temp(&text);
        let err = load_captions(f.path()).unwrap_err();
        match err {
            Error::ReferentialIntegrity { offenders, .. } => assert_eq!(offenders, vec![999]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_offset() {
        let f = write_temp("{\"images\": [\n  {\"id\": }\n]}");
        let err = load_captions(f.path()).unwrap_err();
        match err {
            Error::JsonParse { line, offset, .. } => {
                assert_eq!(line, 2);
                assert!(offset > 12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_caption_rejected() {
        let text = serde_json::json!({
            "images": [{"id": 1, "file_name": "a.jpg", "width": 10, "height": 10}],
            "annotations": [{"id": 4, "image_id": 1, "caption": "   "}]
        })
        .to_string();
        let f = write_temp(&text);
        assert!(matches!(
            load_captions(f.path()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn instance_file_round_trip() {
        let text = serde_json::json!({
            "images": [{"id": 3, "file_name": "c.jpg", "width": 4, "height": 4}],
            "annotations": [
                {"id": 1, "image_id": 3, "category_id": 1,
                 "segmentation": [[0.0, 0.0, 2.0, 0.0, 2.0, 4.0, 0.0, 4.0]], "iscrowd": 0},
                {"id": 2, "image_id": 3, "category_id": 1,
                 "segmentation": {"size": [4, 4], "counts": [1, 3, 12]}, "iscrowd": 1}
            ],
            "categories": [{"id": 1, "name": "person"}]
        })
        .to_string();
        let f = write_temp(&text);
        let ds = load_instances(f.path()).unwrap();
        assert_eq!(ds.person_count(3), 2);
        assert_eq!(ds.categories_present(3).len(), 1);
        let insts = ds.instances_for(3);
        assert!(matches!(insts[0].segmentation, SegGeometry::Polygons(_)));
        assert!(matches!(insts[1].segmentation, SegGeometry::Rle { .. }));
        assert!(insts[1].iscrowd);
    }

    #[test]
    fn unknown_category_reported() {
        let text = serde_json::json!({
            "images": [{"id": 3, "file_name": "c.jpg", "width": 4, "height": 4}],
            "annotations": [
                {"id": 1, "image_id": 3, "category_id": 88, "segmentation": [], "iscrowd": 0}
            ],
            "categories": [{"id": 1, "name": "person"}]
        })
        .to_string();
        let f = write_temp(&text);
        let err = load_instances(f.path()).unwrap_err();
        match err {
            Error::ReferentialIntegrity {
                kind, offenders, ..
            } => {
                assert_eq!(kind, "instance-category");
                assert_eq!(offenders, vec![88]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
