use std::fs;
use std::path::{Path, PathBuf};

use super::{
    parse_yolo_label_file, serialize_yolo_label, ClassRegistry, Dataset, DatasetError, ImageRecord,
};
use crate::format::{decode_utf8, ParseError};

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn parse_err(path: &Path, source: ParseError) -> DatasetError {
    DatasetError::Parse {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_class_list(path: &Path) -> Result<ClassRegistry, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ClassRegistry::parse(&text)
}

/// `*.txt` files in `dir` as `(stem, path)`, sorted by stem.
pub(crate) fn list_txt_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, DatasetError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.push((stem.to_owned(), path.clone()));
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every `*.txt` label file in `dir`, ordered by image id.
pub fn read_label_dir(
    dir: &Path,
    registry: &ClassRegistry,
) -> Result<Vec<ImageRecord>, DatasetError> {
    list_txt_files(dir)?
        .into_iter()
        .map(|(stem, path)| {
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            decode_utf8(&bytes)
                .and_then(|text| parse_yolo_label_file(&stem, text, registry))
                .map_err(|e| parse_err(&path, e))
        })
        .collect()
}

pub fn load_dataset(classes: &Path, labels_dir: &Path) -> Result<Dataset, DatasetError> {
    let registry = read_class_list(classes)?;
    let images = read_label_dir(labels_dir, &registry)?;
    Dataset::new(registry, images)
}

/// Writes one `<image_id>.txt` per record.
pub fn write_label_dir(dir: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for record in dataset.images() {
        let path = dir.join(format!("{}.txt", record.image_id));
        fs::write(&path, serialize_yolo_label(record)).map_err(io_err(&path))?;
    }
    Ok(())
}
