use super::font::{glyph_bit, GLYPH_H, GLYPH_OFFSET, GLYPH_SCALE, GLYPH_W};
use super::spec::{Shape, ShapeSpec, NUM_CLASSES};
use crate::error::{Error, Result};

/// Renders `spec` as an `H×W×3` image: a flat-coloured primitive on white,
/// without anti-aliasing. Squares and triangles span `2r × 2r`; the triangle
/// points up with its base on the bottom edge of that box.
pub fn rasterize(spec: &ShapeSpec, resolution: usize) -> Result<Vec<f32>> {
    spec.check_fits(resolution)?;
    let r = spec.radius(resolution);
    let (cy, cx) = (spec.row as f64, spec.col as f64);
    let rgb = spec.color.rgb();
    let mut img = vec![1.0f32; resolution * resolution * 3];
    for i in 0..resolution {
        let dy = i as f64 + 0.5 - cy;
        if dy.abs() > r {
            continue;
        }
        for j in 0..resolution {
            let dx = j as f64 + 0.5 - cx;
            let inside = match spec.shape {
                Shape::Circle => dx * dx + dy * dy <= r * r,
                Shape::Square => dx.abs() <= r,
                Shape::Triangle => dx.abs() <= (dy + r) / 2.0,
            };
            if inside {
                img[(i * resolution + j) * 3..(i * resolution + j) * 3 + 3].copy_from_slice(&rgb);
            }
        }
    }
    Ok(img)
}

/// Stamps the class digit in black at the top-left corner (glyph scaled ×2,
/// offset two pixels from each edge).
pub fn inject_shortcut(image: &mut [f32], resolution: usize, label: usize) -> Result<()> {
    if label >= NUM_CLASSES {
        return Err(Error::contract(format!("shortcut label {label} outside 0..{NUM_CLASSES}")));
    }
    if image.len() != resolution * resolution * 3 {
        return Err(Error::dim("inject_shortcut", format!("{} values for resolution {resolution}", image.len())));
    }
    for gr in 0..GLYPH_H {
        for gc in 0..GLYPH_W {
            if !glyph_bit(label, gr, gc) {
                continue;
            }
            for dy in 0..GLYPH_SCALE {
                for dx in 0..GLYPH_SCALE {
                    let (y, x) = (GLYPH_OFFSET + gr * GLYPH_SCALE + dy, GLYPH_OFFSET + gc * GLYPH_SCALE + dx);
                    image[(y * resolution + x) * 3..(y * resolution + x) * 3 + 3].fill(0.0);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::font::SHORTCUT_BOX;
    use super::super::spec::{Color, Size};
    use super::*;

    fn px(img: &[f32], res: usize, y: usize, x: usize) -> [f32; 3] {
        let o = (y * res + x) * 3;
        [img[o], img[o + 1], img[o + 2]]
    }

    fn spec(shape: Shape, color: Color, size: Size, row: usize, col: usize) -> ShapeSpec {
        ShapeSpec { shape, color, size, row, col }
    }

    #[test]
    fn centred_circle_and_white_corner() {
        let img = rasterize(&spec(Shape::Circle, Color::Red, Size::Large, 32, 32), 64).unwrap();
        assert_eq!(px(&img, 64, 32, 32), [1.0, 0.0, 0.0]);
        assert_eq!(px(&img, 64, 0, 0), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_area_matches_side_squared() {
        let s = spec(Shape::Square, Color::Blue, Size::Medium, 30, 34);
        let img = rasterize(&s, 64).unwrap();
        let count = img.chunks(3).filter(|p| p == &[0.0, 0.0, 1.0]).count() as f64;
        let side = 2.0 * s.radius(64);
        assert!((count - side * side).abs() <= 4.0 * side, "{count} vs {}", side * side);
    }

    #[test]
    fn triangle_is_half_its_box() {
        let s = spec(Shape::Triangle, Color::Green, Size::Large, 32, 32);
        let img = rasterize(&s, 64).unwrap();
        let count = img.chunks(3).filter(|p| p == &[0.0, 1.0, 0.0]).count() as f64;
        let side = 2.0 * s.radius(64);
        assert!((count - side * side / 2.0).abs() <= 2.0 * side);
        // apex narrow, base wide
        assert_eq!(px(&img, 64, 17, 20), [1.0, 1.0, 1.0]);
        assert_eq!(px(&img, 64, 47, 20), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn out_of_canvas_rejected() {
        assert!(rasterize(&spec(Shape::Circle, Color::Red, Size::Large, 5, 32), 64).is_err());
        assert!(rasterize(&spec(Shape::Circle, Color::Red, Size::Large, 32, 60), 64).is_err());
    }

    #[test]
    fn shortcut_glyph_is_local_and_injective() {
        let (bh, bw) = SHORTCUT_BOX;
        assert_eq!((bh, bw), (16, 12));
        let blank = vec![1.0f32; 64 * 64 * 3];
        let mut stamps = Vec::new();
        for label in 0..9 {
            let mut img = blank.clone();
            inject_shortcut(&mut img, 64, label).unwrap();
            for y in 0..64 {
                for x in 0..64 {
                    let inside = y < bh && x < bw;
                    if !inside {
                        assert_eq!(px(&img, 64, y, x), [1.0, 1.0, 1.0]);
                    }
                }
            }
            // glyph pixels match the font
            for gr in 0..GLYPH_H {
                for gc in 0..GLYPH_W {
                    let p = px(&img, 64, GLYPH_OFFSET + 2 * gr, GLYPH_OFFSET + 2 * gc);
                    let black = p == [0.0, 0.0, 0.0];
                    assert_eq!(black, glyph_bit(label, gr, gc));
                }
            }
            stamps.push(img);
        }
        for a in 0..9 {
            for b in a + 1..9 {
                assert_ne!(stamps[a], stamps[b]);
            }
        }
        assert!(inject_shortcut(&mut blank.clone(), 64, 9).is_err());
    }
}
