//! Synthetic Shapes dataset: generation, caption transforms, splits and
//! on-disk storage.

mod caption;
mod font;
mod raster;
mod spec;
mod storage;

pub use caption::{generate_caption, paraphrase, parse_semantics, Vocabulary, MAX_CAPTION_TOKENS, PAD_ID, PAD_TOKEN};
pub use font::{glyph_bit, DIGITS, GLYPH_H, GLYPH_OFFSET, GLYPH_SCALE, GLYPH_W, SHORTCUT_BOX};
pub use raster::{inject_shortcut, rasterize};
pub use spec::{Color, Shape, ShapeSpec, Size, NUM_ATTRIBUTES, NUM_CLASSES};
pub use storage::{load_dataset, save_dataset};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, streams};

pub const MIN_RESOLUTION: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapesExample {
    pub id: usize,
    pub spec: ShapeSpec,
    /// H×W×3, row-major, values in [0, 1].
    pub image: Vec<f32>,
    pub words: Vec<String>,
    pub tokens: Vec<usize>,
    pub attributes: [u8; NUM_ATTRIBUTES],
    pub label: usize,
    pub shortcut: bool,
    /// Caption was swapped for another example's.
    pub corrupted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub resolution: usize,
    pub vocab: Vocabulary,
    pub examples: Vec<ShapesExample>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    /// Stamp the class digit in the top-left corner.
    pub shortcut: bool,
    /// Fraction of captions replaced by another example's.
    pub noisy_frac: f64,
    /// Append a paraphrase to every caption.
    pub redundant: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// N×K attribute matrix as floats.
    pub fn attribute_matrix(&self) -> Vec<Vec<f64>> {
        self.examples.iter().map(|e| e.attributes.iter().map(|&a| a as f64).collect()).collect()
    }

    pub fn image_len(&self) -> usize {
        self.resolution * self.resolution * 3
    }

    pub fn mean_caption_len(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        self.examples.iter().map(|e| e.tokens.len()).sum::<usize>() as f64 / self.len() as f64
    }

    pub fn max_caption_len(&self) -> usize {
        self.examples.iter().map(|e| e.tokens.len()).max().unwrap_or(0)
    }

    /// Number of distinct real tokens actually used by the captions.
    pub fn used_vocabulary(&self) -> usize {
        let mut seen = vec![false; self.vocab.len()];
        for e in &self.examples {
            for &t in &e.tokens {
                seen[t] = true;
            }
        }
        seen.iter().skip(1).filter(|&&s| s).count()
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            resolution: self.resolution,
            vocab: self.vocab.clone(),
            examples: idx.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }
}

fn sample_spec(label: usize, resolution: usize, rng: &mut impl Rng) -> Result<ShapeSpec> {
    let size = Size::ALL[rng.gen_range(0..3)];
    let r = size.radius_fraction() * resolution as f64;
    let lo = r.ceil() as usize;
    let hi = (resolution as f64 - r).floor() as usize;
    let row = rng.gen_range(lo..=hi);
    let col = rng.gen_range(lo..=hi);
    let spec = ShapeSpec::from_label(label, size, row, col)?;
    spec.check_fits(resolution)?;
    Ok(spec)
}

/// Generates `n` examples with labels assigned round-robin over the nine
/// (shape, colour) classes. Example `i` draws from its own stream, so the
/// output depends only on `(n, seed, resolution, opts)`.
pub fn generate_dataset(n: usize, seed: u64, resolution: usize, opts: &GenOptions) -> Result<Dataset> {
    if n < NUM_CLASSES {
        return Err(Error::contract(format!("need at least {NUM_CLASSES} examples, got {n}")));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::contract(format!("resolution must be at least {MIN_RESOLUTION}, got {resolution}")));
    }
    let vocab = Vocabulary::shapes();
    let mut examples = Vec::with_capacity(n);
    for id in 0..n {
        let mut rng = stream(seed, streams::DATA_BASE + id as u64);
        let label = id % NUM_CLASSES;
        let spec = sample_spec(label, resolution, &mut rng)?;
        let mut image = rasterize(&spec, resolution)?;
        if opts.shortcut {
            inject_shortcut(&mut image, resolution, label)?;
        }
        let words = generate_caption(&spec, resolution, &mut rng);
        let tokens = vocab.encode(&words)?;
        examples.push(ShapesExample {
            id,
            spec,
            image,
            words,
            tokens,
            attributes: spec.attributes(),
            label,
            shortcut: opts.shortcut,
            corrupted: false,
        });
    }
    let mut ds = Dataset { resolution, vocab, examples };
    if opts.redundant {
        ds = add_redundancy(&ds, &mut stream(seed, streams::REDUNDANT))?;
    }
    if opts.noisy_frac > 0.0 {
        ds = corrupt_captions(&ds, opts.noisy_frac, &mut stream(seed, streams::CORRUPT))?;
    }
    Ok(ds)
}

/// Copy of `ds` with the class-digit shortcut drawn into every image.
pub fn with_shortcut(ds: &Dataset) -> Result<Dataset> {
    let mut out = ds.clone();
    for e in out.examples.iter_mut().filter(|e| !e.shortcut) {
        inject_shortcut(&mut e.image, ds.resolution, e.label)?;
        e.shortcut = true;
    }
    Ok(out)
}

/// Replaces the captions of `⌊frac·n⌋` distinct examples with the caption
/// of a uniformly chosen example of a different class, so every replaced
/// caption is wrong about shape or colour.
pub fn corrupt_captions(ds: &Dataset, frac: f64, rng: &mut impl Rng) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::contract(format!("corruption fraction {frac} outside [0, 1]")));
    }
    let n = ds.len();
    let count = (frac * n as f64).floor() as usize;
    let mut out = ds.clone();
    if count == 0 {
        return Ok(out);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for &i in &order[..count] {
        let donors: Vec<usize> = (0..n).filter(|&j| ds.examples[j].label != ds.examples[i].label).collect();
        if donors.is_empty() {
            return Err(Error::contract("caption corruption needs at least two classes"));
        }
        let j = donors[rng.gen_range(0..donors.len())];
        out.examples[i].words = ds.examples[j].words.clone();
        out.examples[i].tokens = ds.examples[j].tokens.clone();
        out.examples[i].corrupted = true;
    }
    Ok(out)
}

/// Appends to every caption a paraphrase of the same spec.
pub fn add_redundancy(ds: &Dataset, rng: &mut impl Rng) -> Result<Dataset> {
    let mut out = ds.clone();
    for e in &mut out.examples {
        let extra = paraphrase(&e.spec, ds.resolution, &e.words, rng);
        e.tokens.extend(ds.vocab.encode(&extra)?);
        e.words.extend(extra);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.75, val: 0.15, test: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Deterministic shuffled split. Train and validation sizes are rounded;
/// the test split takes the remainder.
pub fn split(ds: &Dataset, ratios: SplitRatios, seed: u64) -> Result<Splits> {
    let SplitRatios { train, val, test } = ratios;
    if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r)) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!("split ratios {train}/{val}/{test} must be in [0,1] and sum to 1")));
    }
    let n = ds.len();
    let n_train = (train * n as f64).round() as usize;
    let n_val = ((val * n as f64).round() as usize).min(n - n_train);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, streams::SPLIT));
    Ok(Splits {
        train: ds.subset(&idx[..n_train]),
        val: ds.subset(&idx[n_train..n_train + n_val]),
        test: ds.subset(&idx[n_train + n_val..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> Dataset {
        generate_dataset(n, 42, 32, &GenOptions::default()).unwrap()
    }

    #[test]
    fn paper_sized_corpus() {
        let ds = generate_dataset(2700, 42, 64, &GenOptions::default()).unwrap();
        assert_eq!(ds.len(), 2700);
        let mut counts = [0usize; NUM_CLASSES];
        for e in &ds.examples {
            counts[e.label] += 1;
            assert_eq!(e.attributes.len(), NUM_ATTRIBUTES);
            assert_eq!(e.attributes[..3].iter().sum::<u8>(), 1);
            assert_eq!(e.attributes[3..].iter().sum::<u8>(), 1);
            assert_eq!(e.label, e.spec.label());
            assert!(e.tokens.len() <= MAX_CAPTION_TOKENS);
            assert_eq!(parse_semantics(&e.words), (Some(e.spec.shape), Some(e.spec.color)));
        }
        assert!(counts.iter().all(|&c| c == 300));
        let mean = ds.mean_caption_len();
        assert!((10.2..=12.0).contains(&mean), "{mean}");
        assert!(ds.used_vocabulary() <= 53);
    }

    #[test]
    fn balanced_when_not_divisible() {
        let ds = small(31);
        let mut counts = [0usize; NUM_CLASSES];
        ds.examples.iter().for_each(|e| counts[e.label] += 1);
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn deterministic() {
        let opts = GenOptions { shortcut: true, noisy_frac: 0.2, redundant: true };
        let a = generate_dataset(40, 7, 32, &opts).unwrap();
        let b = generate_dataset(40, 7, 32, &opts).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(40, 8, 32, &opts).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(generate_dataset(8, 0, 64, &GenOptions::default()), Err(Error::Contract(_))));
        assert!(matches!(generate_dataset(9, 0, 16, &GenOptions::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn shortcut_overlay_matches_generation() {
        let clean = generate_dataset(18, 4, 32, &GenOptions::default()).unwrap();
        let marked = generate_dataset(18, 4, 32, &GenOptions { shortcut: true, ..Default::default() }).unwrap();
        let overlaid = with_shortcut(&clean).unwrap();
        for (a, b) in overlaid.examples.iter().zip(&marked.examples) {
            assert_eq!(a.image, b.image);
            assert!(a.shortcut);
        }
        assert_eq!(with_shortcut(&overlaid).unwrap().examples[0].image, overlaid.examples[0].image);
    }

    #[test]
    fn corruption_counts() {
        let ds = generate_dataset(2700, 1, 32, &GenOptions::default()).unwrap();
        let mut rng = stream(1, streams::CORRUPT);
        assert_eq!(corrupt_captions(&ds, 0.0, &mut rng).unwrap(), ds);
        let noisy = corrupt_captions(&ds, 0.1, &mut rng).unwrap();
        let changed = noisy.examples.iter().zip(&ds.examples).filter(|(a, b)| a.tokens != b.tokens).count();
        assert_eq!(changed, 270);
        assert_eq!(noisy.examples.iter().filter(|e| e.corrupted).count(), 270);
        for (a, b) in noisy.examples.iter().zip(&ds.examples) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.label, b.label);
        }
        let all = corrupt_captions(&small(30), 1.0, &mut rng).unwrap();
        assert!(all.examples.iter().all(|e| e.corrupted));
        assert!(corrupt_captions(&ds, 1.5, &mut rng).is_err());
    }

    #[test]
    fn redundancy_doubles_captions() {
        let ds = small(45);
        let red = add_redundancy(&ds, &mut stream(0, streams::REDUNDANT)).unwrap();
        let ratio = red.mean_caption_len() / ds.mean_caption_len();
        assert!((1.8..=2.2).contains(&ratio), "{ratio}");
        for (a, b) in red.examples.iter().zip(&ds.examples) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.attributes, b.attributes);
            assert_eq!(&a.tokens[..b.tokens.len()], &b.tokens[..]);
            let tail = &a.words[b.words.len()..];
            assert_eq!(parse_semantics(tail), (Some(b.spec.shape), Some(b.spec.color)));
        }
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = generate_dataset(2700, 42, 32, &GenOptions::default()).unwrap();
        let s = split(&ds, SplitRatios::default(), 42).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (2025, 405, 270));
        let mut ids: Vec<usize> =
            s.train.examples.iter().chain(&s.val.examples).chain(&s.test.examples).map(|e| e.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..2700).collect::<Vec<_>>());
        assert_eq!(split(&ds, SplitRatios::default(), 42).unwrap(), s);
        let bad = SplitRatios { train: 0.7, val: 0.2, test: 0.2 };
        assert!(matches!(split(&ds, bad, 0), Err(Error::Contract(_))));
    }
}
