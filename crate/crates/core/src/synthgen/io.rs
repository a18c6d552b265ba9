//! On-disk layout: `{train,test}/{naevus,melanoma}/<id>.png` plus
//! `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, DatasetManifest, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::imagemetrics::{read_png, write_png};

pub const MANIFEST_FILE: &str = "manifest.json";

fn split_dir(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

fn image_path(root: &Path, split: Split, img_label: &str, id: &str) -> PathBuf {
    root.join(split_dir(split)).join(img_label).join(format!("{id}.png"))
}

pub fn write_dataset(dataset: &Dataset, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    for split in [Split::Train, Split::Test] {
        for label in super::Label::ALL {
            let dir = root.join(split_dir(split)).join(label.name());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
    }
    for (split, images) in [(Split::Train, &dataset.train), (Split::Test, &dataset.test)] {
        for img in images {
            write_png(&img.image, image_path(root, split, img.label.name(), &img.id))?;
        }
    }
    let path = root.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&dataset.manifest())?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let path = root.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
    let mut dataset = Dataset {
        config: manifest.config,
        train: Vec::new(),
        test: Vec::new(),
    };
    for r in manifest.records {
        let image = read_png(image_path(root, r.split, r.label.name(), &r.id))?;
        let img = LabeledImage {
            id: r.id,
            image,
            label: r.label,
            artifact: r.artifact,
            source_id: r.source_id,
            transform: r.transform,
        };
        match r.split {
            Split::Train => dataset.train.push(img),
            Split::Test => dataset.test.push(img),
        }
    }
    Ok(dataset)
}
