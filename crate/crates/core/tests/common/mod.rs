//! Reference implementations and scene builders shared by the integration
//! tests and the acceptance runner. The oracles are deliberately naive.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smearcount::pipeline::isolated_red_templates;
use smearcount::spectral::Complex64;
use smearcount::{BinaryMask, GrayImage, PipelineConfig, SynthSpec, SynthTruth};

/// Raster-order flood fill under 8-adjacency; labels 1..K by first pixel.
pub fn flood_fill_labels(mask: &BinaryMask) -> Vec<u32> {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if mask.data()[j] && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    labels
}

/// Exhaustive Otsu in exact integer arithmetic.
///
/// Between-class variance at `t` is proportional to
/// `(n0 * S - N * s0)^2 / (n0 * n1)`; candidates are compared by
/// cross-multiplication. Needs `N * 255 * N` to stay well inside `u128`.
pub fn brute_force_otsu(hist: &[u64; 256]) -> u8 {
    let total: u128 = hist.iter().map(|&n| n as u128).sum();
    let sum: u128 = hist.iter().enumerate().map(|(k, &n)| k as u128 * n as u128).sum();
    let occupied: Vec<usize> = (0..256).filter(|&k| hist[k] > 0).collect();
    if occupied.len() == 1 {
        return occupied[0] as u8;
    }
    let mut best: Option<(usize, u128, u128)> = None;
    for t in 0..256 {
        let n0: u128 = hist[..=t].iter().map(|&n| n as u128).sum();
        let s0: u128 = hist[..=t].iter().enumerate().map(|(k, &n)| k as u128 * n as u128).sum();
        let n1 = total - n0;
        let (num, den) = if n0 == 0 || n1 == 0 {
            (0, 1)
        } else {
            let diff = (n0 * sum).abs_diff(total * s0);
            (diff * diff, n0 * n1)
        };
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t, num, den));
        }
    }
    best.unwrap().0 as u8
}

/// Direct O(N^2) DFT, DC moved to `(h/2, w/2)`.
pub fn naive_dft(img: &GrayImage) -> Vec<Complex64> {
    let (w, h) = (img.width(), img.height());
    let mut out = vec![Complex64::new(0.0, 0.0); w * h];
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let phase = -2.0 * PI * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    acc += Complex64::from_polar(img.get(r, c), phase);
                }
            }
            out[((u + h / 2) % h) * w + (v + w / 2) % w] = acc;
        }
    }
    out
}

/// Sliding-window zero-mean NCC over the valid overlap, template anchored at
/// `(th / 2, tw / 2)`. Flat windows score 0.
pub fn naive_ncc(img: &GrayImage, patch: &GrayImage) -> Vec<f64> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (tw, th) = (patch.width() as isize, patch.height() as isize);
    let mut out = Vec::with_capacity((w * h) as usize);
    for r in 0..h {
        for c in 0..w {
            let mut pairs = Vec::new();
            for i in 0..th {
                for j in 0..tw {
                    let (y, x) = (r - th / 2 + i, c - tw / 2 + j);
                    if (0..h).contains(&y) && (0..w).contains(&x) {
                        pairs.push((img.get(y as usize, x as usize), patch.get(i as usize, j as usize)));
                    }
                }
            }
            let n = pairs.len() as f64;
            let mi = pairs.iter().map(|p| p.0).sum::<f64>() / n;
            let mt = pairs.iter().map(|p| p.1).sum::<f64>() / n;
            let cov: f64 = pairs.iter().map(|p| (p.0 - mi) * (p.1 - mt)).sum();
            let vi: f64 = pairs.iter().map(|p| (p.0 - mi).powi(2)).sum();
            let vt: f64 = pairs.iter().map(|p| (p.1 - mt).powi(2)).sum();
            out.push(if vi <= 1e-10 * n || vt <= 1e-10 * n {
                0.0
            } else {
                cov / (vi * vt).sqrt()
            });
        }
    }
    out
}

/// Rasterized circle outline: pixels within half a pixel of the radius.
pub fn circle_outline(w: usize, h: usize, center: (f64, f64), radius: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |r, c| {
        ((r as f64 - center.0).hypot(c as f64 - center.1) - radius).abs() <= 0.5
    })
}

/// Amplitude of the column sinusoid at `freq` in `img`, by least squares
/// against sin/cos after removing the mean.
pub fn sinusoid_amplitude(img: &GrayImage, freq: f64) -> f64 {
    let mean = img.data().iter().sum::<f64>() / img.len() as f64;
    let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in 0..img.height() {
        for c in 0..img.width() {
            let (s, co) = (2.0 * PI * freq * c as f64).sin_cos();
            let y = img.get(r, c) - mean;
            ss += s * s;
            cc += co * co;
            sc += s * co;
            ys += y * s;
            yc += y * co;
        }
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    a.hypot(b)
}

pub fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.gen())
}

pub const TEMPLATE_IDS: [&str; 5] = ["1", "28", "36", "45", "46"];
pub const TEMPLATE_WEIGHTS: [f64; 5] = [1.0, 1.0, 1.2, 1.0, 1.2];
pub const TEMPLATE_HALF: usize = 18;

/// Scene `index` of a seeded benchmark suite: 512x512, 1-3 white cells of
/// radius 60, 40-60 red cells, a 0.1 sinusoid at 0.45 and contrast 0.5.
pub fn suite_spec(index: u64, n_smudges: usize) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + index);
    SynthSpec {
        width: 512,
        height: 512,
        n_white: rng.gen_range(1..=3),
        white_radius: 60.0,
        n_red: rng.gen_range(40..=60),
        red_radius: 14.0,
        overlap_allowed: false,
        noise_amplitude: 0.1,
        noise_frequency: 0.45,
        contrast_scale: 0.5,
        rng_seed: 1000 + index,
        n_smudges,
    }
}

/// Default config plus five isolated red cells as templates.
pub fn suite_config(spec: &SynthSpec, truth: &SynthTruth) -> PipelineConfig {
    let mut templates = isolated_red_templates(spec, truth, TEMPLATE_HALF, TEMPLATE_IDS.len());
    assert_eq!(
        templates.len(),
        TEMPLATE_IDS.len(),
        "scene has too few isolated red cells"
    );
    for ((t, id), weight) in templates.iter_mut().zip(TEMPLATE_IDS).zip(TEMPLATE_WEIGHTS) {
        t.id = id.to_string();
        t.weight = weight;
    }
    PipelineConfig {
        templates,
        ..PipelineConfig::default()
    }
}

/// The scene as it would arrive from disk: quantized to 8 bits.
pub fn quantized(img: &GrayImage) -> GrayImage {
    smearcount::netpbm::load_pgm(&smearcount::netpbm::save_pgm(img)).expect("own PGM output parses")
}
