//! Dataset directory: `manifest.jsonl`, `images.bin`, `vocab.txt`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::caption::Vocabulary;
use super::spec::{ShapeSpec, NUM_ATTRIBUTES};
use super::{Dataset, ShapesExample};
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};

pub const MANIFEST: &str = "manifest.jsonl";
pub const IMAGES: &str = "images.bin";
pub const VOCAB: &str = "vocab.txt";

#[derive(Serialize, Deserialize)]
struct Record {
    id: usize,
    resolution: usize,
    /// Byte offset of the image block in `images.bin`.
    offset: usize,
    tokens: Vec<usize>,
    words: Vec<String>,
    attributes: [u8; NUM_ATTRIBUTES],
    label: usize,
    spec: ShapeSpec,
    shortcut: bool,
    corrupted: bool,
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let block = ds.image_len() * 4;
    let mut images = Vec::with_capacity(block * ds.len());
    let mut manifest = String::new();
    for (i, e) in ds.examples.iter().enumerate() {
        if e.image.len() != ds.image_len() {
            return Err(Error::contract(format!("example {} has {} pixels values, expected {}", e.id, e.image.len(), ds.image_len())));
        }
        images.extend(e.image.iter().flat_map(|v| v.to_le_bytes()));
        let rec = Record {
            id: e.id,
            resolution: ds.resolution,
            offset: i * block,
            tokens: e.tokens.clone(),
            words: e.words.clone(),
            attributes: e.attributes,
            label: e.label,
            spec: e.spec,
            shortcut: e.shortcut,
            corrupted: e.corrupted,
        };
        manifest.push_str(&serde_json::to_string(&rec)?);
        manifest.push('\n');
    }
    let mut vocab = ds.vocab.tokens().join("\n");
    vocab.push('\n');
    write_atomic(&dir.join(VOCAB), vocab.as_bytes())?;
    write_atomic(&dir.join(IMAGES), &images)?;
    write_atomic(&dir.join(MANIFEST), manifest.as_bytes())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let vocab_text = read_to_string(&dir.join(VOCAB))?;
    let vocab = Vocabulary::from_tokens(vocab_text.lines().map(String::from).collect())?;
    let images_path = dir.join(IMAGES);
    let images = fs::read(&images_path).map_err(|e| Error::io(&images_path, e))?;
    let manifest = read_to_string(&dir.join(MANIFEST))?;

    let mut records = Vec::new();
    for (line_no, line) in manifest.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            file: MANIFEST.into(),
            record: line_no,
            detail: e.to_string(),
        })?;
        records.push(rec);
    }
    let Some(resolution) = records.first().map(|r| r.resolution) else {
        return Err(Error::Integrity(format!("{MANIFEST} holds no records")));
    };
    let block = resolution * resolution * 3 * 4;
    let mut examples = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        if rec.resolution != resolution {
            return Err(Error::Integrity(format!("record {i}: resolution {} differs from {resolution}", rec.resolution)));
        }
        if rec.offset != i * block {
            return Err(Error::Integrity(format!("record {i}: image offset {} expected {}", rec.offset, i * block)));
        }
        let Some(bytes) = images.get(rec.offset..rec.offset + block) else {
            return Err(Error::Integrity(format!("record {i} (id {}): image block missing from {IMAGES}", rec.id)));
        };
        if let Some(bad) = rec.tokens.iter().find(|&&t| t >= vocab.len()) {
            return Err(Error::Integrity(format!("record {i}: token id {bad} outside vocabulary of {}", vocab.len())));
        }
        let image = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        examples.push(ShapesExample {
            id: rec.id,
            spec: rec.spec,
            image,
            words: rec.words,
            tokens: rec.tokens,
            attributes: rec.attributes,
            label: rec.label,
            shortcut: rec.shortcut,
            corrupted: rec.corrupted,
        });
    }
    if images.len() != examples.len() * block {
        return Err(Error::Integrity(format!(
            "{IMAGES} holds {} bytes but {MANIFEST} lists {} records of {block} bytes",
            images.len(),
            examples.len()
        )));
    }
    Ok(Dataset { resolution, vocab, examples })
}
