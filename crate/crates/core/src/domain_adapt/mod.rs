//! Target-domain style simulation and the pluggable inverse adapter.
//!
//! The style family applies a per-image-constant photometric transform plus
//! blur, vignette, and seeded noise. The adapter fits the inverse
//! photometric map by matching pooled intensity quantiles of two UNPAIRED
//! corpora and recovers lost sharpness with an unsharp mask whose strength
//! comes from the ratio of mean gradient magnitudes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facegen::Image;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    pub gain: f64,
    pub bias: f64,
    pub gamma: f64,
    pub blur_radius: f64,
    pub noise_amp: f64,
    pub vignette: f64,
}

impl StyleParams {
    pub fn identity() -> StyleParams {
        StyleParams {
            gain: 1.0,
            bias: 0.0,
            gamma: 1.0,
            blur_radius: 0.0,
            noise_amp: 0.0,
            vignette: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self == &StyleParams::identity()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::InvalidConfig(
                "style gain and gamma must be positive".into(),
            ));
        }
        if self.blur_radius < 0.0 || self.noise_amp < 0.0 {
            return Err(Error::InvalidConfig(
                "style blur and noise must be nonnegative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.vignette) {
            return Err(Error::InvalidConfig("vignette must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Named style presets referenced from the config file.
pub fn style_presets() -> BTreeMap<String, StyleParams> {
    let mut presets = BTreeMap::new();
    presets.insert("identity".to_string(), StyleParams::identity());
    presets.insert(
        "photo-like".to_string(),
        StyleParams {
            gain: 0.85,
            bias: 0.10,
            gamma: 1.35,
            blur_radius: 0.8,
            noise_amp: 0.02,
            vignette: 0.15,
        },
    );
    presets.insert(
        "sketch-like".to_string(),
        StyleParams {
            gain: 0.95,
            bias: 0.02,
            gamma: 2.2,
            blur_radius: 1.2,
            noise_amp: 0.015,
            vignette: 0.0,
        },
    );
    presets
}

fn gaussian_blur(image: &Image, sigma: f64) -> Image {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for k in -radius..=radius {
        kernel.push((-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }
    let (w, h) = (image.width() as isize, image.height() as isize);
    let mut horizontal = Image::new(image.width(), image.height(), 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let sx = (x + i as isize - radius).clamp(0, w - 1);
                acc += k * image.get(sx as usize, y as usize);
            }
            horizontal.set(x as usize, y as usize, acc);
        }
    }
    let mut out = Image::new(image.width(), image.height(), 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let sy = (y + i as isize - radius).clamp(0, h - 1);
                acc += k * horizontal.get(x as usize, sy as usize);
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    out
}

/// Photometric map, then blur, vignette, and seeded noise; identity
/// parameters leave the image bit-exactly unchanged.
pub fn apply_style(image: &Image, style: &StyleParams, seed: u64) -> Image {
    let mut out = image.clone();
    if style.gain != 1.0 || style.bias != 0.0 || style.gamma != 1.0 {
        for v in out.as_mut_slice() {
            let powed = if style.gamma == 1.0 { *v } else { v.max(0.0).powf(style.gamma) };
            *v = (style.gain * powed + style.bias).clamp(0.0, 1.0);
        }
    }
    if style.blur_radius > 0.0 {
        out = gaussian_blur(&out, style.blur_radius);
    }
    if style.vignette > 0.0 {
        let cx = (out.width() as f64 - 1.0) / 2.0;
        let cy = (out.height() as f64 - 1.0) / 2.0;
        let max_r2 = cx * cx + cy * cy;
        for y in 0..out.height() {
            for x in 0..out.width() {
                let r2 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / max_r2;
                let v = out.get(x, y) * (1.0 - style.vignette * r2);
                out.set(x, y, v);
            }
        }
    }
    if style.noise_amp > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in out.as_mut_slice() {
            *v += style.noise_amp * rng.random_range(-1.0..=1.0);
        }
    }
    out.clip01();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub mean: f64,
    pub variance: f64,
    /// Pooled intensity quantiles at 5%, 50%, and 95%.
    pub quantiles: [f64; 3],
    pub mean_gradient_magnitude: f64,
    pub image_count: usize,
}

pub const QUANTILE_LEVELS: [f64; 3] = [0.05, 0.50, 0.95];

/// Pooled-pixel statistics over a corpus. Per-image terms are reduced in
/// corpus order so the result does not depend on scheduling.
pub fn corpus_stats(images: &[Image]) -> CorpusStats {
    let per_image: Vec<(f64, f64, f64, usize)> = images
        .par_iter()
        .map(|img| {
            let sum: f64 = img.as_slice().iter().sum();
            let sum_sq: f64 = img.as_slice().iter().map(|v| v * v).sum();
            (sum, sum_sq, gradient_magnitude(img), img.as_slice().len())
        })
        .collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut grad = 0.0;
    let mut count = 0usize;
    for (s, s2, g, n) in per_image {
        sum += s;
        sum_sq += s2;
        grad += g;
        count += n;
    }
    let mean = sum / count as f64;
    let variance = (sum_sq / count as f64 - mean * mean).max(0.0);

    let mut pooled: Vec<f64> = Vec::with_capacity(count);
    for img in images {
        pooled.extend_from_slice(img.as_slice());
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite intensities"));
    let quantile = |q: f64| -> f64 {
        let pos = q * (pooled.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        pooled[lo] * (1.0 - frac) + pooled[hi] * frac
    };
    CorpusStats {
        mean,
        variance,
        quantiles: [
            quantile(QUANTILE_LEVELS[0]),
            quantile(QUANTILE_LEVELS[1]),
            quantile(QUANTILE_LEVELS[2]),
        ],
        mean_gradient_magnitude: grad / images.len() as f64,
        image_count: images.len(),
    }
}

/// Mean forward-difference gradient magnitude of one image.
fn gradient_magnitude(img: &Image) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for y in 0..img.height() - 1 {
        for x in 0..img.width() - 1 {
            let gx = img.get(x + 1, y) - img.get(x, y);
            let gy = img.get(x, y + 1) - img.get(x, y);
            acc += (gx * gx + gy * gy).sqrt();
            n += 1;
        }
    }
    acc / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterParams {
    pub gain: f64,
    pub bias: f64,
    pub gamma: f64,
    pub sharpen: f64,
    pub styled_stats: CorpusStats,
    pub synthetic_stats: CorpusStats,
}

impl AdapterParams {
    pub fn identity() -> AdapterParams {
        let empty = CorpusStats {
            mean: 0.0,
            variance: 0.0,
            quantiles: [0.0; 3],
            mean_gradient_magnitude: 0.0,
            image_count: 0,
        };
        AdapterParams {
            gain: 1.0,
            bias: 0.0,
            gamma: 1.0,
            sharpen: 0.0,
            styled_stats: empty.clone(),
            synthetic_stats: empty,
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<AdapterParams> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

const MIN_CORPUS: usize = 20;
const SHARPEN_CAP: f64 = 4.0;

/// Fit the inverse photometric map gain * v^gamma + bias so the styled
/// corpus's 5/50/95% quantiles land on the synthetic corpus's, then set the
/// sharpening strength from the gradient-magnitude ratio. No image pairing
/// is used anywhere.
pub fn fit_adapter(styled: &[Image], synthetic: &[Image]) -> Result<AdapterParams> {
    if styled.len() < MIN_CORPUS || synthetic.len() < MIN_CORPUS {
        return Err(Error::InvalidConfig(format!(
            "adapter fitting needs >= {MIN_CORPUS} images per corpus (got {} styled, {} synthetic)",
            styled.len(),
            synthetic.len()
        )));
    }
    let styled_stats = corpus_stats(styled);
    let synthetic_stats = corpus_stats(synthetic);
    let [s_lo, s_mid, s_hi] = styled_stats.quantiles;
    let [t_lo, t_mid, t_hi] = synthetic_stats.quantiles;
    if s_hi - s_lo < 1e-6 || s_mid - s_lo < 1e-9 {
        return Err(Error::DegenerateCorpus(
            "styled corpus intensity spread is too small to fit".into(),
        ));
    }
    if t_hi - t_lo < 1e-6 {
        return Err(Error::DegenerateCorpus(
            "synthetic corpus intensity spread is too small to fit".into(),
        ));
    }

    // gain * s^gamma + bias = t at the three quantile pairs. Eliminating
    // gain and bias leaves one equation in gamma:
    //   (t_hi - t_lo) / (t_mid - t_lo) = (s_hi^g - s_lo^g) / (s_mid^g - s_lo^g)
    let target_ratio = (t_hi - t_lo) / (t_mid - t_lo);
    let ratio = |g: f64| -> f64 {
        let lo = s_lo.max(0.0).powf(g);
        (s_hi.powf(g) - lo) / (s_mid.powf(g) - lo).max(1e-12)
    };
    let steps = 400;
    let grid_gamma = |k: usize| 0.05 * (400.0_f64).powf(k as f64 / steps as f64);
    let mut best_err = f64::INFINITY;
    for k in 0..=steps {
        // Log-spaced scan over [0.05, 20].
        best_err = best_err.min((ratio(grid_gamma(k)) - target_ratio).abs());
    }
    // Among near-optimal candidates prefer the gamma closest to 1; when the
    // ratio equation is satisfied everywhere (coinciding quantiles) this
    // keeps the map affine instead of picking an arbitrary exponent.
    let mut best_g = 1.0;
    let mut best_dist = f64::INFINITY;
    for k in 0..=steps {
        let g = grid_gamma(k);
        if (ratio(g) - target_ratio).abs() <= best_err + 1e-9 {
            let dist = g.ln().abs();
            if dist < best_dist {
                best_dist = dist;
                best_g = g;
            }
        }
    }
    // Bisection refinement around the best grid cell when a bracket exists.
    let mut lo_g = best_g / (400.0_f64).powf(1.0 / steps as f64);
    let mut hi_g = best_g * (400.0_f64).powf(1.0 / steps as f64);
    if (ratio(lo_g) - target_ratio).signum() != (ratio(hi_g) - target_ratio).signum() {
        for _ in 0..80 {
            let mid = 0.5 * (lo_g + hi_g);
            if (ratio(mid) - target_ratio).signum() == (ratio(lo_g) - target_ratio).signum() {
                lo_g = mid;
            } else {
                hi_g = mid;
            }
        }
        best_g = 0.5 * (lo_g + hi_g);
    }
    let gamma = best_g;
    let gain = (t_hi - t_lo) / (s_hi.powf(gamma) - s_lo.max(0.0).powf(gamma));
    let bias = t_lo - gain * s_lo.max(0.0).powf(gamma);

    // Sharpening from the gradient ratio after the photometric map.
    let photo = AdapterParams {
        gain,
        bias,
        gamma,
        sharpen: 0.0,
        styled_stats: styled_stats.clone(),
        synthetic_stats: synthetic_stats.clone(),
    };
    let adapted_grad: f64 = styled
        .par_iter()
        .map(|img| gradient_magnitude(&adapt(img, &photo)))
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        / styled.len() as f64;
    let sharpen = if adapted_grad > 1e-9 {
        (synthetic_stats.mean_gradient_magnitude / adapted_grad - 1.0).clamp(0.0, SHARPEN_CAP)
    } else {
        0.0
    };

    Ok(AdapterParams {
        gain,
        bias,
        gamma,
        sharpen,
        styled_stats,
        synthetic_stats,
    })
}

/// Inverse photometric map plus unsharp masking; pure, clipped to [0, 1].
/// The identity adapter leaves images bit-exactly unchanged.
pub fn adapt(image: &Image, adapter: &AdapterParams) -> Image {
    let mut out = image.clone();
    if adapter.gain != 1.0 || adapter.bias != 0.0 || adapter.gamma != 1.0 {
        for v in out.as_mut_slice() {
            let powed = if adapter.gamma == 1.0 {
                *v
            } else {
                v.max(0.0).powf(adapter.gamma)
            };
            *v = (adapter.gain * powed + adapter.bias).clamp(0.0, 1.0);
        }
    }
    if adapter.sharpen > 0.0 {
        let blurred = gaussian_blur(&out, 1.0);
        for (v, b) in out.as_mut_slice().iter_mut().zip(blurred.as_slice()) {
            *v += adapter.sharpen * (*v - b);
        }
        out.clip01();
    }
    out
}

/// Mean absolute difference between two corpora's fitted quantiles.
pub fn quantile_distance(a: &CorpusStats, b: &CorpusStats) -> f64 {
    a.quantiles
        .iter()
        .zip(&b.quantiles)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.quantiles.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::sample_recipe;
    use crate::facegen::{default_schema, render, ViewParams};

    fn render_corpus(seed: u64, n: usize) -> Vec<Image> {
        let schema = default_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let recipe = sample_recipe(&mut rng, &schema);
                render(&recipe, &ViewParams::default(), &schema).unwrap().image
            })
            .collect()
    }

    #[test]
    fn identity_style_and_adapter_are_bit_exact() {
        let img = render_corpus(1, 1).pop().unwrap();
        let styled = apply_style(&img, &StyleParams::identity(), 42);
        assert_eq!(styled, img);
        let adapted = adapt(&img, &AdapterParams::identity());
        assert_eq!(adapted, img);
    }

    #[test]
    fn gain_doubles_midtones_before_clip() {
        let img = Image::new(8, 8, 0.4);
        let style = StyleParams { gain: 2.0, ..StyleParams::identity() };
        let out = apply_style(&img, &style, 0);
        for v in out.as_slice() {
            assert!((v - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let img = render_corpus(2, 1).pop().unwrap();
        let style = StyleParams { noise_amp: 0.05, ..StyleParams::identity() };
        let a = apply_style(&img, &style, 7);
        let b = apply_style(&img, &style, 7);
        let c = apply_style(&img, &style, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn matched_corpora_fit_near_identity() {
        let corpus = render_corpus(3, 24);
        let adapter = fit_adapter(&corpus, &corpus).unwrap();
        assert!((adapter.gain - 1.0).abs() < 1e-3, "gain {}", adapter.gain);
        assert!(adapter.bias.abs() < 1e-3, "bias {}", adapter.bias);
    }

    #[test]
    fn known_gain_style_is_inverted() {
        let synthetic = render_corpus(4, 24);
        let style = StyleParams { gain: 0.5, ..StyleParams::identity() };
        let styled: Vec<Image> = render_corpus(5, 24)
            .iter()
            .map(|img| apply_style(img, &style, 0))
            .collect();
        let adapter = fit_adapter(&styled, &synthetic).unwrap();
        assert!(
            (adapter.gain - 2.0).abs() / 2.0 < 0.05,
            "fitted gain {} not within 5% of 2.0",
            adapter.gain
        );
    }

    #[test]
    fn adapted_quantiles_match_synthetic_within_tolerance() {
        let synthetic = render_corpus(6, 30);
        let style = StyleParams {
            gain: 0.8,
            bias: 0.1,
            gamma: 1.4,
            blur_radius: 0.5,
            noise_amp: 0.01,
            vignette: 0.1,
        };
        let styled: Vec<Image> = render_corpus(7, 30)
            .iter()
            .enumerate()
            .map(|(i, img)| apply_style(img, &style, i as u64))
            .collect();
        let adapter = fit_adapter(&styled, &synthetic).unwrap();
        let adapted: Vec<Image> = styled.iter().map(|img| adapt(img, &adapter)).collect();
        let adapted_stats = corpus_stats(&adapted);
        for (a, s) in adapted_stats
            .quantiles
            .iter()
            .zip(&adapter.synthetic_stats.quantiles)
        {
            assert!(
                (a - s).abs() < 0.02,
                "quantile {a:.4} vs synthetic {s:.4} off by more than 0.02"
            );
        }
        // Distribution pull: strictly closer after adaptation.
        let before = quantile_distance(&adapter.styled_stats, &adapter.synthetic_stats);
        let after = quantile_distance(&adapted_stats, &adapter.synthetic_stats);
        assert!(after < before, "quantile distance {before} -> {after}");
    }

    #[test]
    fn noise_free_style_roundtrip_is_close() {
        let synthetic = render_corpus(8, 24);
        let style = StyleParams {
            gain: 0.9,
            bias: 0.05,
            gamma: 1.3,
            blur_radius: 0.0,
            noise_amp: 0.0,
            vignette: 0.0,
        };
        let originals = render_corpus(9, 24);
        let styled: Vec<Image> = originals
            .iter()
            .map(|img| apply_style(img, &style, 0))
            .collect();
        let adapter = fit_adapter(&styled, &synthetic).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for (orig, sty) in originals.iter().zip(&styled) {
            let back = adapt(sty, &adapter);
            for (a, b) in back.as_slice().iter().zip(orig.as_slice()) {
                total += (a - b).abs();
                count += 1;
            }
        }
        let mae = total / count as f64;
        assert!(mae < 0.05, "round-trip mean absolute error {mae}");
    }

    #[test]
    fn degenerate_corpus_is_rejected() {
        let flat: Vec<Image> = (0..24).map(|_| Image::new(16, 16, 0.5)).collect();
        let synthetic = render_corpus(10, 24);
        assert!(matches!(
            fit_adapter(&flat, &synthetic),
            Err(Error::DegenerateCorpus(_))
        ));
        assert!(fit_adapter(&synthetic[..5], &synthetic).is_err());
    }
}
