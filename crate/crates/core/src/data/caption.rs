//! Hand-written caption grammar and the fixed vocabulary it spans.
//!
//! `<det> <noun> <verb> a <size> <color> <shape phrase> <prep> the <position>`
//!
//! Shape phrases are one or two tokens. Positions are "center", a corner
//! ("top left") or an edge with a trailing "part"/"area" ("top part"), so
//! captions are 10 to 12 tokens long.

use std::collections::HashMap;

use rand::Rng;

use super::spec::{Color, Shape, ShapeSpec, Size};
use crate::error::{Error, Result};

const DETERMINERS: [&str; 2] = ["the", "this"];
const NOUNS: [&str; 2] = ["image", "picture"];
const VERBS: [&str; 2] = ["shows", "contains"];
const PREPOSITIONS: [&str; 2] = ["in", "at"];

fn size_words(s: Size) -> [&'static str; 2] {
    match s {
        Size::Small => ["small", "tiny"],
        Size::Medium => ["medium", "moderate"],
        Size::Large => ["large", "big"],
    }
}

fn color_words(c: Color) -> [&'static str; 2] {
    match c {
        Color::Red => ["red", "crimson"],
        Color::Green => ["green", "emerald"],
        Color::Blue => ["blue", "azure"],
    }
}

fn shape_phrases(s: Shape) -> [&'static [&'static str]; 3] {
    match s {
        Shape::Square => [&["square"], &["quadratic", "figure"], &["quadratic", "shape"]],
        Shape::Triangle => [&["triangle"], &["triangular", "figure"], &["three", "angles"]],
        Shape::Circle => [&["circle"], &["circular", "figure"], &["round", "shape"]],
    }
}

const REGION_WORDS: [&str; 2] = ["part", "area"];

/// Coarse position words from the 3×3 grid cell holding the centre.
fn position_phrase(spec: &ShapeSpec, resolution: usize, region: usize) -> Vec<&'static str> {
    let third = |v: usize| (3 * v / resolution).min(2);
    let vertical = ["top", "", "bottom"][third(spec.row)];
    let horizontal = ["left", "", "right"][third(spec.col)];
    match (vertical, horizontal) {
        ("", "") => vec!["center"],
        ("", h) => vec![h, REGION_WORDS[region]],
        (v, "") => vec![v, REGION_WORDS[region]],
        (v, h) => vec![v, h],
    }
}

pub const PAD_TOKEN: &str = "<pad>";
pub const PAD_ID: usize = 0;
pub const MAX_CAPTION_TOKENS: usize = 12;

/// Token ↔ id map. Id 0 is padding; real tokens follow densely. Dummy
/// tokens used by the text encoder take ids `len()..len()+q`, never
/// colliding with real tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::contract(format!("duplicate vocabulary token `{t}`")));
            }
        }
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN) {
            return Err(Error::contract(format!("vocabulary must start with {PAD_TOKEN}")));
        }
        Ok(Self { tokens, index })
    }

    /// Every token the grammar can emit, in a fixed order.
    pub fn shapes() -> Self {
        let mut words: Vec<&str> = vec![PAD_TOKEN];
        let mut push = |w: &'static str| {
            if !words.contains(&w) {
                words.push(w);
            }
        };
        DETERMINERS.iter().chain(&NOUNS).chain(&VERBS).for_each(|w| push(w));
        push("a");
        Size::ALL.iter().flat_map(|s| size_words(*s)).for_each(&mut push);
        Color::ALL.iter().flat_map(|c| color_words(*c)).for_each(&mut push);
        for s in Shape::ALL {
            shape_phrases(s).iter().flat_map(|p| p.iter()).for_each(|w| push(w));
        }
        PREPOSITIONS.iter().for_each(|w| push(w));
        ["top", "bottom", "left", "right", "center"].into_iter().chain(REGION_WORDS).for_each(&mut push);
        Self::from_tokens(words.into_iter().map(String::from).collect()).expect("grammar words are unique")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of real (non-padding) tokens.
    pub fn real_len(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn dummy_id(&self, query: usize) -> usize {
        self.tokens.len() + query
    }

    pub fn encode(&self, words: &[String]) -> Result<Vec<usize>> {
        words
            .iter()
            .map(|w| self.id(w).ok_or_else(|| Error::contract(format!("token `{w}` not in vocabulary"))))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).unwrap_or("<unk>").to_string()).collect()
    }
}

/// Synonym picks for every slot of one caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Choice {
    det: usize,
    noun: usize,
    verb: usize,
    size: usize,
    color: usize,
    shape: usize,
    prep: usize,
    region: usize,
}

impl Choice {
    fn sample(rng: &mut impl Rng) -> Self {
        Self {
            det: rng.gen_range(0..2),
            noun: rng.gen_range(0..2),
            verb: rng.gen_range(0..2),
            size: rng.gen_range(0..2),
            color: rng.gen_range(0..2),
            shape: rng.gen_range(0..3),
            prep: rng.gen_range(0..2),
            region: rng.gen_range(0..2),
        }
    }
}

fn render(spec: &ShapeSpec, resolution: usize, c: Choice) -> Vec<String> {
    let mut words: Vec<&str> = vec![DETERMINERS[c.det], NOUNS[c.noun], VERBS[c.verb], "a"];
    words.push(size_words(spec.size)[c.size]);
    words.push(color_words(spec.color)[c.color]);
    words.extend_from_slice(shape_phrases(spec.shape)[c.shape]);
    words.push(PREPOSITIONS[c.prep]);
    words.push("the");
    words.extend(position_phrase(spec, resolution, c.region));
    words.into_iter().map(String::from).collect()
}

/// Samples a faithful caption for `spec`.
pub fn generate_caption(spec: &ShapeSpec, resolution: usize, rng: &mut impl Rng) -> Vec<String> {
    render(spec, resolution, Choice::sample(rng))
}

/// A second caption for `spec` that avoids the synonyms already used in
/// `existing` wherever the grammar offers an alternative.
pub fn paraphrase(spec: &ShapeSpec, resolution: usize, existing: &[String], rng: &mut impl Rng) -> Vec<String> {
    let used = |w: &str| existing.iter().any(|e| e == w);
    let mut pick = |options: &[&str]| -> usize {
        let fresh: Vec<usize> = (0..options.len()).filter(|&i| !used(options[i])).collect();
        if fresh.is_empty() {
            rng.gen_range(0..options.len())
        } else {
            fresh[rng.gen_range(0..fresh.len())]
        }
    };
    let det = pick(&DETERMINERS);
    let noun = pick(&NOUNS);
    let verb = pick(&VERBS);
    let size = pick(&size_words(spec.size));
    let color = pick(&color_words(spec.color));
    let prep = pick(&PREPOSITIONS);
    let region = pick(&REGION_WORDS);
    let phrases = shape_phrases(spec.shape);
    let fresh: Vec<usize> = (0..phrases.len()).filter(|&i| !phrases[i].iter().all(|w| used(w))).collect();
    let shape = if fresh.is_empty() {
        rng.gen_range(0..phrases.len())
    } else {
        fresh[rng.gen_range(0..fresh.len())]
    };
    render(spec, resolution, Choice { det, noun, verb, size, color, shape, prep, region })
}

/// Shape and colour named by a caption, if it names exactly one of each.
pub fn parse_semantics(words: &[String]) -> (Option<Shape>, Option<Color>) {
    let has = |w: &str| words.iter().any(|t| t == w);
    let shapes: Vec<Shape> = Shape::ALL
        .into_iter()
        .filter(|s| {
            shape_phrases(*s)
                .iter()
                .any(|p| p.iter().all(|w| has(w)) && p.iter().any(|w| !matches!(*w, "figure" | "shape")))
        })
        .collect();
    let colors: Vec<Color> = Color::ALL.into_iter().filter(|c| color_words(*c).iter().any(|w| has(w))).collect();
    (only(&shapes), only(&colors))
}

fn only<T: Copy>(v: &[T]) -> Option<T> {
    match v {
        [x] => Some(*x),
        _ => None,
    }
}
