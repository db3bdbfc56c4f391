use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use geoseg::image::{save_image, save_mask, save_scribbles};
use serde::Serialize;

use crate::synthetic::SyntheticSample;
use crate::{HarnessError, Result};

pub const IMAGES_DIR: &str = "images";
pub const SCRIBBLES_DIR: &str = "scribbles";
pub const GT_DIR: &str = "gt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub annotation_path: PathBuf,
    pub gt_path: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetIndex {
    pub root: PathBuf,
    /// Sorted by id.
    pub entries: Vec<DatasetEntry>,
    /// Stems found in some but not all subdirectories, and similar issues
    /// that did not prevent indexing.
    pub warnings: Vec<String>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn list_stems(dir: &Path, warnings: &mut Vec<String>) -> Result<BTreeMap<String, PathBuf>> {
    let unreadable = |source| HarnessError::UnreadableDirectory {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(dir).map_err(unreadable)? {
        let path = entry.map_err(unreadable)?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    let mut stems = BTreeMap::new();
    for path in files {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            warnings.push(format!("skipping non-UTF-8 file name {}", path.display()));
            continue;
        };
        if stem.starts_with('.') {
            continue;
        }
        if let Some(prev) = stems.get(stem) {
            let prev: &PathBuf = prev;
            warnings.push(format!(
                "{}: duplicate stem, using {} and ignoring {}",
                stem,
                prev.display(),
                path.display()
            ));
            continue;
        }
        stems.insert(stem.to_string(), path);
    }
    Ok(stems)
}

/// Indexes `root/{images,scribbles,gt}` by file stem. Stems missing from any
/// of the three directories are skipped with a warning.
pub fn index_dataset(root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    let mut warnings = Vec::new();
    let images = list_stems(&root.join(IMAGES_DIR), &mut warnings)?;
    let scribbles = list_stems(&root.join(SCRIBBLES_DIR), &mut warnings)?;
    let gt = list_stems(&root.join(GT_DIR), &mut warnings)?;

    let mut all: Vec<&String> = images.keys().chain(scribbles.keys()).chain(gt.keys()).collect();
    all.sort();
    all.dedup();

    let mut entries = Vec::new();
    for id in all {
        match (images.get(id), scribbles.get(id), gt.get(id)) {
            (Some(i), Some(s), Some(g)) => entries.push(DatasetEntry {
                id: id.clone(),
                image_path: i.clone(),
                annotation_path: s.clone(),
                gt_path: g.clone(),
            }),
            (i, s, g) => {
                let missing: Vec<&str> = [(i, IMAGES_DIR), (s, SCRIBBLES_DIR), (g, GT_DIR)]
                    .iter()
                    .filter(|(p, _)| p.is_none())
                    .map(|(_, d)| *d)
                    .collect();
                warnings.push(format!("{id}: missing in {}, skipped", missing.join(", ")));
            }
        }
    }
    if entries.is_empty() {
        return Err(HarnessError::EmptyDataset(root.to_path_buf()));
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        entries,
        warnings,
    })
}

/// Writes samples in the layout read by [`index_dataset`], as PNG files.
pub fn write_dataset(samples: &[SyntheticSample], root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    for dir in [IMAGES_DIR, SCRIBBLES_DIR, GT_DIR] {
        fs::create_dir_all(root.join(dir))?;
    }
    for s in samples {
        let file = format!("{}.png", s.id);
        save_image(&s.image, root.join(IMAGES_DIR).join(&file))?;
        save_scribbles(&s.scribbles, root.join(SCRIBBLES_DIR).join(&file))?;
        save_mask(&s.ground_truth, root.join(GT_DIR).join(&file))?;
    }
    index_dataset(root)
}
