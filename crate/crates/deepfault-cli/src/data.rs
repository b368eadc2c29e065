//! Dataset directory resolution and split loading.

use anyhow::{bail, Context, Result};
use deepfault::{idx, LabeledInput};
use std::path::{Path, PathBuf};

pub const DATA_DIR_ENV: &str = "DEEPFAULT_DATA_DIR";

/// Resolves the dataset directory from the flag or the environment.
pub fn resolve_data_dir(flag: Option<&Path>) -> Result<PathBuf> {
    if let Some(dir) = flag {
        return Ok(dir.to_path_buf());
    }
    if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
        return Ok(PathBuf::from(dir));
    }
    bail!("no dataset directory: pass --data-dir or set {DATA_DIR_ENV}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn file_stems(self) -> (&'static str, &'static str) {
        match self {
            Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Finds `stem` or `stem.gz` under `dir`.
pub fn find_data_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    bail!("missing dataset file {stem}[.gz] in {}", dir.display())
}

/// Loads one split as labeled inputs, plus the file paths that were read.
pub fn load_split(dir: &Path, split: Split) -> Result<(Vec<LabeledInput>, Vec<PathBuf>)> {
    let (image_stem, label_stem) = split.file_stems();
    let image_path = find_data_file(dir, image_stem)?;
    let label_path = find_data_file(dir, label_stem)?;
    let images = idx::load_idx_images(&image_path)
        .with_context(|| format!("loading {}", image_path.display()))?;
    let labels = idx::load_idx_labels(&label_path)
        .with_context(|| format!("loading {}", label_path.display()))?;
    if images.len() != labels.len() {
        bail!(
            "image/label count mismatch: {} images vs {} labels",
            images.len(),
            labels.len()
        );
    }
    let data = images
        .into_iter()
        .zip(labels)
        .map(|(features, label)| LabeledInput::new(features, label))
        .collect();
    Ok((data, vec![image_path, label_path]))
}
