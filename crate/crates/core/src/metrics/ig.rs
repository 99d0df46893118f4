use serde::{Deserialize, Serialize};

use crate::autograd::{no_grad, Tensor};
use crate::error::{Error, Result};

const IG_BATCH: usize = 64;

/// Per-pixel attributions in the image's own H×W×3 layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub resolution: usize,
    pub values: Vec<f64>,
    pub steps: usize,
    pub target: usize,
    pub baseline: String,
    /// `score(x) − score(baseline)`.
    pub score_delta: f64,
    /// `|Σ IG − score_delta| / |score_delta|` (0 when both vanish).
    pub completeness_error: f64,
}

impl AttributionMap {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Absolute attribution summed over channels, row-major H×W.
    pub fn magnitude(&self) -> Vec<f64> {
        self.values.chunks(3).map(|c| c.iter().map(|v| v.abs()).sum()).collect()
    }

    /// Plain-text graymap (PGM P2) of [`AttributionMap::magnitude`],
    /// scaled so the largest value is 255.
    pub fn to_pgm(&self) -> String {
        let mag = self.magnitude();
        let max = mag.iter().cloned().fold(0.0, f64::max);
        let mut s = format!("P2\n{r} {r}\n255\n", r = self.resolution);
        for row in mag.chunks(self.resolution) {
            let line: Vec<String> =
                row.iter().map(|v| if max > 0.0 { ((v / max) * 255.0).round() as u8 } else { 0 }.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

/// All-white canvas, the Shapes background.
pub fn white_baseline(resolution: usize) -> Vec<f32> {
    vec![1.0; resolution * resolution * 3]
}

fn hwc_to_chw(img: &[f64], res: usize) -> Vec<f64> {
    let plane = res * res;
    let mut out = vec![0.0; 3 * plane];
    for p in 0..plane {
        for c in 0..3 {
            out[c * plane + p] = img[p * 3 + c];
        }
    }
    out
}

/// Integrated gradients along the straight path from `baseline` to
/// `image` with a right Riemann sum:
/// `IGᵢ = (xᵢ − x′ᵢ) · (1/m) Σ_{t=1..m} ∂s/∂xᵢ (x′ + t/m · (x − x′))`.
///
/// `scores` maps a `[B, 3, H, W]` batch to `[B, C]` class scores.
pub fn integrated_gradients<F>(
    scores: F,
    image: &[f32],
    baseline: &[f32],
    resolution: usize,
    steps: usize,
    target: usize,
) -> Result<AttributionMap>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let n = resolution * resolution * 3;
    if image.len() != n || baseline.len() != n {
        return Err(Error::contract(format!("image and baseline must have {n} values")));
    }
    if steps == 0 {
        return Err(Error::contract("integrated gradients needs at least one step"));
    }
    let x: Vec<f64> = image.iter().map(|&v| v as f64).collect();
    let x0: Vec<f64> = baseline.iter().map(|&v| v as f64).collect();
    let diff: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
    let mut grad_sum = vec![0.0; n];

    let alphas: Vec<f64> = (1..=steps).map(|t| t as f64 / steps as f64).collect();
    for chunk in alphas.chunks(IG_BATCH) {
        let mut batch = Vec::with_capacity(chunk.len() * n);
        for &a in chunk {
            let point: Vec<f64> = x0.iter().zip(&diff).map(|(b, d)| b + a * d).collect();
            batch.extend(hwc_to_chw(&point, resolution));
        }
        let input = Tensor::param(batch, &[chunk.len(), 3, resolution, resolution])?;
        let out = scores(&input)?;
        let classes = out.shape().get(1).copied().unwrap_or(0);
        if out.ndim() != 2 || target >= classes {
            return Err(Error::contract(format!("target {target} invalid for scores {:?}", out.shape())));
        }
        let mut pick = vec![0.0; out.numel()];
        (0..chunk.len()).for_each(|b| pick[b * classes + target] = 1.0);
        out.mul(&Tensor::new(pick, out.shape())?)?.sum().backward()?;
        let g = input.grad().unwrap_or_else(|| vec![0.0; input.numel()]);
        let plane = resolution * resolution;
        for b in 0..chunk.len() {
            let gb = &g[b * n..(b + 1) * n];
            for p in 0..plane {
                for c in 0..3 {
                    grad_sum[p * 3 + c] += gb[c * plane + p];
                }
            }
        }
    }
    let values: Vec<f64> = diff.iter().zip(&grad_sum).map(|(d, g)| d * g / steps as f64).collect();

    let ends = no_grad(|| -> Result<Vec<f64>> {
        let both = [hwc_to_chw(&x, resolution), hwc_to_chw(&x0, resolution)].concat();
        let s = scores(&Tensor::new(both, &[2, 3, resolution, resolution])?)?;
        let c = s.shape()[1];
        let d = s.to_vec();
        Ok(vec![d[target], d[c + target]])
    })?;
    let score_delta = ends[0] - ends[1];
    let total: f64 = values.iter().sum();
    let completeness_error = if score_delta.abs() > 0.0 {
        (total - score_delta).abs() / score_delta.abs()
    } else {
        total.abs()
    };
    Ok(AttributionMap {
        resolution,
        values,
        steps,
        target,
        baseline: "white".into(),
        score_delta,
        completeness_error,
    })
}

/// Fraction of total absolute attribution inside a `(height, width)` box
/// anchored at the top-left corner, summed over channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortcutShare {
    pub share: f64,
    /// Set when the map carried no attribution at all (share reported as 0).
    pub zero_total: bool,
}

pub fn shortcut_attribution_share(map: &[f64], resolution: usize, corner_box: (usize, usize)) -> Result<ShortcutShare> {
    let (bh, bw) = corner_box;
    if map.len() != resolution * resolution * 3 {
        return Err(Error::contract(format!("map has {} values for a {resolution}px image", map.len())));
    }
    if bh > resolution || bw > resolution {
        return Err(Error::contract(format!("box {corner_box:?} exceeds {resolution}px image")));
    }
    let total: f64 = map.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return Ok(ShortcutShare { share: 0.0, zero_total: true });
    }
    let inside: f64 = (0..bh)
        .flat_map(|r| (0..bw).map(move |c| (r, c)))
        .map(|(r, c)| map[(r * resolution + c) * 3..(r * resolution + c) * 3 + 3].iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    Ok(ShortcutShare { share: inside / total, zero_total: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn linear_scores(w: Vec<f64>) -> impl Fn(&Tensor) -> Result<Tensor> {
        move |x: &Tensor| {
            let b = x.shape()[0];
            let n = x.numel() / b;
            let wt = Tensor::new(w.clone(), &[n, 1])?;
            x.reshape(&[b, n])?.matmul(&wt)
        }
    }

    #[test]
    fn linear_model_is_exact() {
        let res = 4;
        let n = res * res * 3;
        let mut rng = stream(2, 0);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let img: Vec<f32> = (0..n).map(|_| rng.gen::<f32>()).collect();
        let zero = vec![0.0f32; n];
        let wc = hwc_to_chw(&w, res);
        for steps in [1, 7, 64] {
            let m = integrated_gradients(linear_scores(wc.clone()), &img, &zero, res, steps, 0).unwrap();
            for (i, v) in m.values.iter().enumerate() {
                assert!((v - w[i] * img[i] as f64).abs() < 1e-12);
            }
            assert!(m.completeness_error < 1e-10);
        }
    }

    #[test]
    fn baseline_image_gives_zero_map() {
        let res = 3;
        let img = white_baseline(res);
        let w = vec![1.0; 27];
        let m = integrated_gradients(linear_scores(w), &img, &img, res, 5, 0).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn share_examples() {
        let res = 64;
        let uniform = vec![1.0; res * res * 3];
        let s = shortcut_attribution_share(&uniform, res, (16, 12)).unwrap();
        assert!((s.share - 192.0 / 4096.0).abs() < 1e-15);
        let mut inside = vec![0.0; res * res * 3];
        inside[0] = 5.0;
        inside[(3 * res + 4) * 3 + 2] = -2.0;
        assert_eq!(shortcut_attribution_share(&inside, res, (16, 12)).unwrap().share, 1.0);
        let scaled: Vec<f64> = uniform.iter().enumerate().map(|(i, v)| v * (i % 7) as f64 * 3.5).collect();
        let base: Vec<f64> = uniform.iter().enumerate().map(|(i, v)| v * (i % 7) as f64).collect();
        let (a, b) = (
            shortcut_attribution_share(&scaled, res, (16, 12)).unwrap().share,
            shortcut_attribution_share(&base, res, (16, 12)).unwrap().share,
        );
        assert!((a - b).abs() < 1e-14);
        let z = shortcut_attribution_share(&vec![0.0; res * res * 3], res, (16, 12)).unwrap();
        assert!(z.zero_total && z.share == 0.0);
        assert!(shortcut_attribution_share(&uniform, res, (65, 1)).is_err());
    }
}
