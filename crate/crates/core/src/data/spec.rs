use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Triangle,
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Size {
    Small,
    Medium,
    Large,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Square, Shape::Triangle, Shape::Circle];
    pub fn index(self) -> usize {
        self as usize
    }
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Red, Color::Green, Color::Blue];
    pub fn index(self) -> usize {
        self as usize
    }
    pub fn rgb(self) -> [f32; 3] {
        match self {
            Color::Red => [1.0, 0.0, 0.0],
            Color::Green => [0.0, 1.0, 0.0],
            Color::Blue => [0.0, 0.0, 1.0],
        }
    }
}

impl Size {
    pub const ALL: [Size; 3] = [Size::Small, Size::Medium, Size::Large];
    pub fn index(self) -> usize {
        self as usize
    }
    /// Half-extent as a fraction of the canvas side.
    pub fn radius_fraction(self) -> f64 {
        match self {
            Size::Small => 0.10,
            Size::Medium => 0.17,
            Size::Large => 0.25,
        }
    }
}

pub const NUM_CLASSES: usize = 9;
pub const NUM_ATTRIBUTES: usize = 6;

/// One primitive on the canvas. `row`/`col` locate the centre in pixel
/// units (pixel `(i, j)` covers `[i, i+1) × [j, j+1)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub shape: Shape,
    pub color: Color,
    pub size: Size,
    pub row: usize,
    pub col: usize,
}

impl ShapeSpec {
    pub fn radius(&self, resolution: usize) -> f64 {
        self.size.radius_fraction() * resolution as f64
    }

    pub fn fits(&self, resolution: usize) -> bool {
        let r = self.radius(resolution);
        let res = resolution as f64;
        let (y, x) = (self.row as f64, self.col as f64);
        y - r >= 0.0 && y + r <= res && x - r >= 0.0 && x + r <= res
    }

    pub fn check_fits(&self, resolution: usize) -> Result<()> {
        if self.fits(resolution) {
            Ok(())
        } else {
            Err(Error::contract(format!("{self:?} does not fit a {resolution}×{resolution} canvas")))
        }
    }

    pub fn label(&self) -> usize {
        self.shape.index() * 3 + self.color.index()
    }

    /// One-hot shape followed by one-hot colour.
    pub fn attributes(&self) -> [u8; NUM_ATTRIBUTES] {
        let mut a = [0u8; NUM_ATTRIBUTES];
        a[self.shape.index()] = 1;
        a[3 + self.color.index()] = 1;
        a
    }

    pub fn from_label(label: usize, size: Size, row: usize, col: usize) -> Result<Self> {
        if label >= NUM_CLASSES {
            return Err(Error::contract(format!("label {label} outside 0..{NUM_CLASSES}")));
        }
        Ok(Self {
            shape: Shape::ALL[label / 3],
            color: Color::ALL[label % 3],
            size,
            row,
            col,
        })
    }
}
