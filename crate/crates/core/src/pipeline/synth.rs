//! Synthetic blood-smear generator with known ground truth.
//!
//! Scenes are built on a 0.75 background: red cells are 0.55 discs with a soft
//! two-pixel rim, white cells a 0.65 cytoplasm disc around a dark (0.15)
//! nucleus made of one to three lobes. Optional dark smudges imitate
//! thresholding artifacts that have no cell around them. Contrast is then
//! compressed around mid-gray and a column sinusoid is added.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GrayImage, PointRC, Rect};
use crate::template::TemplateSpec;

pub const BACKGROUND: f64 = 0.75;
pub const RED_CELL: f64 = 0.55;
pub const CYTOPLASM: f64 = 0.65;
pub const NUCLEUS: f64 = 0.15;

const MAX_ATTEMPTS: usize = 20_000;
/// Minimum empty space between neighbouring objects.
const GAP_PX: f64 = 4.0;
/// Upper bound on a smudge's semi-major axis.
const SMUDGE_EXTENT: f64 = 14.0;

/// Scene description. Missing JSON keys take the [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub n_red: usize,
    pub red_radius: f64,
    pub n_white: usize,
    pub white_radius: f64,
    pub overlap_allowed: bool,
    pub noise_amplitude: f64,
    pub noise_frequency: f64,
    pub contrast_scale: f64,
    pub rng_seed: u64,
    /// Dark non-cell blobs.
    pub n_smudges: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            n_red: 46,
            red_radius: 14.0,
            n_white: 2,
            white_radius: 60.0,
            overlap_allowed: false,
            noise_amplitude: 0.1,
            noise_frequency: 0.45,
            contrast_scale: 0.5,
            rng_seed: 1,
            n_smudges: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth spec: {m}")));
        if self.width == 0 || self.height == 0 {
            return bad("empty canvas");
        }
        if !(self.red_radius > 0.0 && self.white_radius > 0.0) {
            return bad("radii must be positive");
        }
        if !(self.contrast_scale > 0.0 && self.contrast_scale <= 1.0) {
            return bad("contrast_scale must be in (0, 1]");
        }
        if !(self.noise_frequency >= 0.0 && self.noise_frequency <= 0.5) {
            return bad("noise_frequency must be in [0, 0.5]");
        }
        let fits = |r: f64| 2.0 * r + 2.0 < self.width.min(self.height) as f64;
        if (self.n_red > 0 && !fits(self.red_radius)) || (self.n_white > 0 && !fits(self.white_radius)) {
            return bad("cells do not fit inside the canvas");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub white_count: usize,
    pub red_count: usize,
    pub white_centers: Vec<PointRC>,
    pub red_centers: Vec<PointRC>,
    pub smudge_centers: Vec<PointRC>,
}

struct Lobe {
    center: PointRC,
    radius: f64,
}

struct Smudge {
    center: PointRC,
    semi_major: f64,
    semi_minor: f64,
    angle: f64,
}

impl Smudge {
    fn inside(&self, row: f64, col: f64) -> bool {
        let (dr, dc) = (row - self.center.row, col - self.center.col);
        let (s, c) = self.angle.sin_cos();
        let u = dc * c + dr * s;
        let v = -dc * s + dr * c;
        (u / self.semi_major).powi(2) + (v / self.semi_minor).powi(2) <= 1.0
    }
}

struct Obstacle {
    center: PointRC,
    radius: f64,
}

fn place(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    radius: f64,
    clearance: impl Fn(&Obstacle) -> f64,
    obstacles: &[Obstacle],
) -> Option<PointRC> {
    let (lo_r, hi_r) = (radius + 1.0, spec.height as f64 - radius - 2.0);
    let (lo_c, hi_c) = (radius + 1.0, spec.width as f64 - radius - 2.0);
    if lo_r >= hi_r || lo_c >= hi_c {
        return None;
    }
    (0..MAX_ATTEMPTS).find_map(|_| {
        let p = PointRC::new(rng.gen_range(lo_r..hi_r), rng.gen_range(lo_c..hi_c));
        obstacles
            .iter()
            .all(|o| p.distance(&o.center) >= clearance(o))
            .then_some(p)
    })
}

/// Renders a seeded synthetic smear and its ground truth.
pub fn synth_smear(spec: &SynthSpec) -> Result<(GrayImage, SynthTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut obstacles: Vec<Obstacle> = Vec::new();
    let infeasible = |placed: usize, requested: usize| Error::InfeasiblePacking { requested, placed };
    let wr = spec.white_radius;
    let rr = spec.red_radius;

    let mut whites = Vec::new();
    for i in 0..spec.n_white {
        let p = place(&mut rng, spec, wr, |o| o.radius + wr + GAP_PX, &obstacles)
            .ok_or_else(|| infeasible(i, spec.n_white))?;
        obstacles.push(Obstacle { center: p, radius: wr });
        let n_lobes = rng.gen_range(1..=3);
        let lobes: Vec<Lobe> = (0..n_lobes)
            .map(|_| {
                let a = rng.gen_range(0.0..2.0 * PI);
                let d = if n_lobes == 1 {
                    0.0
                } else {
                    rng.gen_range(0.15..0.3) * wr
                };
                Lobe {
                    center: PointRC::new(p.row + d * a.sin(), p.col + d * a.cos()),
                    radius: rng.gen_range(0.2..0.3) * wr,
                }
            })
            .collect();
        whites.push((p, lobes));
    }

    // Smudges stay far enough from white cells and from each other that they
    // never join a nucleus group.
    let mut smudges = Vec::new();
    for i in 0..spec.n_smudges {
        let extent = SMUDGE_EXTENT;
        let p = place(
            &mut rng,
            spec,
            extent,
            |o| if o.radius == extent { 90.0 } else { o.radius + 45.0 },
            &obstacles,
        )
        .ok_or_else(|| infeasible(i, spec.n_smudges))?;
        obstacles.push(Obstacle {
            center: p,
            radius: extent,
        });
        smudges.push(Smudge {
            center: p,
            semi_major: rng.gen_range(9.0..14.0),
            semi_minor: rng.gen_range(3.0..5.0),
            angle: rng.gen_range(0.0..PI),
        });
    }

    let mut reds = Vec::new();
    for i in 0..spec.n_red {
        let overlap = spec.overlap_allowed;
        let p = place(
            &mut rng,
            spec,
            rr,
            |o| {
                if overlap && o.radius == rr {
                    0.0
                } else {
                    o.radius + rr + GAP_PX
                }
            },
            &obstacles,
        )
        .ok_or_else(|| infeasible(i, spec.n_red))?;
        obstacles.push(Obstacle { center: p, radius: rr });
        reds.push(p);
    }

    let (w, h) = (spec.width, spec.height);
    let mut canvas = vec![BACKGROUND; w * h];
    let paint_disc = |center: PointRC, radius: f64, rim: f64, value: f64, canvas: &mut Vec<f64>| {
        let reach = radius + rim;
        let r0 = (center.row - reach).floor().max(0.0) as usize;
        let r1 = ((center.row + reach).ceil() as usize).min(h - 1);
        let c0 = (center.col - reach).floor().max(0.0) as usize;
        let c1 = ((center.col + reach).ceil() as usize).min(w - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                let d = (r as f64 - center.row).hypot(c as f64 - center.col);
                // coverage ramps from 1 at radius - rim to 0 at radius + rim
                let cover = if rim > 0.0 {
                    ((radius + rim - d) / (2.0 * rim)).clamp(0.0, 1.0)
                } else if d <= radius {
                    1.0
                } else {
                    0.0
                };
                if cover > 0.0 {
                    let px = &mut canvas[r * w + c];
                    *px = *px * (1.0 - cover) + value * cover;
                }
            }
        }
    };
    for &p in &reds {
        paint_disc(p, rr, 1.0, RED_CELL, &mut canvas);
    }
    for (p, lobes) in &whites {
        paint_disc(*p, wr, 0.5, CYTOPLASM, &mut canvas);
        for lobe in lobes {
            paint_disc(lobe.center, lobe.radius, 0.5, NUCLEUS, &mut canvas);
        }
    }
    for s in &smudges {
        for r in 0..h {
            for c in 0..w {
                if s.inside(r as f64, c as f64) {
                    canvas[r * w + c] = NUCLEUS;
                }
            }
        }
    }

    let img = GrayImage::from_fn(w, h, |r, c| {
        let v = 0.5
            + (canvas[r * w + c] - 0.5) * spec.contrast_scale
            + spec.noise_amplitude * (2.0 * PI * spec.noise_frequency * c as f64).sin();
        v.clamp(0.0, 1.0)
    });
    let truth = SynthTruth {
        white_count: whites.len(),
        red_count: reds.len(),
        white_centers: whites.iter().map(|(p, _)| *p).collect(),
        red_centers: reds,
        smudge_centers: smudges.iter().map(|s| s.center).collect(),
    };
    Ok((img, truth))
}

/// Square templates of half-size `half` around the first `count` red cells
/// whose template window holds no other object. Ids are the truth indices;
/// weights are 1.
pub fn isolated_red_templates(spec: &SynthSpec, truth: &SynthTruth, half: usize, count: usize) -> Vec<TemplateSpec> {
    let reach = half as f64 * std::f64::consts::SQRT_2;
    let clear = |p: &PointRC, others: &[PointRC], radius: f64| {
        others.iter().all(|q| q == p || p.distance(q) >= reach + radius + 2.0)
    };
    truth
        .red_centers
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            clear(p, &truth.red_centers, spec.red_radius)
                && clear(p, &truth.white_centers, spec.white_radius)
                && clear(p, &truth.smudge_centers, SMUDGE_EXTENT)
        })
        .filter_map(|(i, p)| {
            let rect = Rect::centered(
                p.row.round() as usize,
                p.col.round() as usize,
                half,
                spec.width,
                spec.height,
            )?;
            Some(TemplateSpec {
                id: i.to_string(),
                rect,
                weight: 1.0,
            })
        })
        .take(count)
        .collect()
}
