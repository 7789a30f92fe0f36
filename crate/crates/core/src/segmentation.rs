//! Nucleus extraction and grouping.
//!
//! Dark pixels are thresholded with Otsu's method, labeled under
//! 8-connectivity and reduced to bounding-box midpoints. Midpoints closer than
//! the merge distance belong to the same nucleus; each nucleus gets a
//! rectangular window for the circle search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{quantize, BinaryMask, GrayImage, PointRC, Rect};
use crate::union_find::UnionFind;

/// Between-class variance of the split `bins <= t` / `bins > t`.
fn between_class_variance(n0: u64, s0: u64, total: u64, sum: u64) -> f64 {
    let n1 = total - n0;
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let w0 = n0 as f64 / total as f64;
    let w1 = n1 as f64 / total as f64;
    let mu0 = s0 as f64 / n0 as f64;
    let mu1 = (sum - s0) as f64 / n1 as f64;
    w0 * w1 * (mu0 - mu1) * (mu0 - mu1)
}

/// Otsu's threshold: the level `t` maximizing between-class variance with
/// class 0 = bins `<= t`. Ties go to the smallest `t`; a histogram with one
/// occupied bin returns that bin.
pub fn otsu_level(hist: &[u64; 256]) -> Result<u8> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let occupied: Vec<usize> = (0..256).filter(|&k| hist[k] > 0).collect();
    if occupied.len() == 1 {
        return Ok(occupied[0] as u8);
    }
    let sum: u64 = hist.iter().enumerate().map(|(k, &n)| k as u64 * n).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best = (0u8, f64::NEG_INFINITY);
    for (t, &n) in hist.iter().enumerate() {
        n0 += n;
        s0 += t as u64 * n;
        let v = between_class_variance(n0, s0, total, sum);
        if v > best.1 {
            best = (t as u8, v);
        }
    }
    Ok(best.0)
}

/// Threshold for the darkest intensity class.
///
/// Otsu is re-applied to the dark side of the previous split until the dark
/// class holds at most `max_dark_fraction` of all pixels, or it cannot be
/// split further. The last split must leave at least `min_gap` levels between
/// the two class means, otherwise the dark class is just the low tail of a
/// single lump and `None` is returned. `None` also when fewer than two levels
/// are occupied.
pub fn dark_class_level(hist: &[u64; 256], max_dark_fraction: f64, min_gap: f64) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    if hist.iter().filter(|&&n| n > 0).count() < 2 {
        return None;
    }
    let mut restricted = *hist;
    loop {
        let t = otsu_level(&restricted).ok()?;
        let dark: u64 = hist[..=t as usize].iter().sum();
        let before = restricted;
        for n in restricted[t as usize + 1..].iter_mut() {
            *n = 0;
        }
        if dark as f64 <= max_dark_fraction * total as f64 || restricted == before {
            return (class_mean_gap(&before, t) >= min_gap).then_some(t);
        }
    }
}

/// Distance between the means of bins `<= t` and bins `> t`; 0 when either
/// side is empty.
fn class_mean_gap(hist: &[u64; 256], t: u8) -> f64 {
    let t = t as usize;
    let moments = |bins: &[u64], offset: usize| {
        bins.iter()
            .enumerate()
            .fold((0u64, 0u64), |(n, s), (k, &c)| (n + c, s + (k + offset) as u64 * c))
    };
    let (n0, s0) = moments(&hist[..=t], 0);
    let (n1, s1) = moments(&hist[t + 1..], t + 1);
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    s1 as f64 / n1 as f64 - s0 as f64 / n0 as f64
}

/// Foreground where the quantized level is at most `level`.
pub fn binarize_dark(img: &GrayImage, level: u8) -> BinaryMask {
    BinaryMask::new(
        img.width(),
        img.height(),
        img.data().iter().map(|&v| quantize(v) <= level).collect(),
    )
    .expect("same dimensions as source")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    /// Row-major labels, 0 = background.
    pub data: Vec<u32>,
}

impl LabelMap {
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.data[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: u32,
    pub pixel_count: usize,
    pub bbox: Rect,
    /// Center of the bounding box.
    pub midpoint: PointRC,
}

fn bbox_midpoint(b: &Rect) -> PointRC {
    PointRC::new(
        (b.row_min + b.row_max) as f64 / 2.0,
        (b.col_min + b.col_max) as f64 / 2.0,
    )
}

/// Raw 8-connected components in raster order of first pixel.
///
/// Returns per-pixel component index + 1 (0 = background) and the number of
/// components.
pub(crate) fn components_8(width: usize, height: usize, fg: impl Fn(usize) -> bool) -> (Vec<u32>, usize) {
    let mut provisional = vec![0usize; width * height];
    let mut uf = UnionFind::new(1);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if !fg(i) {
                continue;
            }
            // Already-visited neighbours: W, NW, N, NE.
            let mut label = 0usize;
            let merge = |j: usize, label: &mut usize, uf: &mut UnionFind| {
                let l = provisional[j];
                if l != 0 {
                    if *label == 0 {
                        *label = l;
                    } else {
                        uf.union(*label, l);
                    }
                }
            };
            if c > 0 {
                merge(i - 1, &mut label, &mut uf);
            }
            if r > 0 {
                if c > 0 {
                    merge(i - width - 1, &mut label, &mut uf);
                }
                merge(i - width, &mut label, &mut uf);
                if c + 1 < width {
                    merge(i - width + 1, &mut label, &mut uf);
                }
            }
            if label == 0 {
                label = uf.push();
            }
            provisional[i] = label;
        }
    }
    let mut remap = vec![0u32; uf.len()];
    let mut next = 0u32;
    let mut out = vec![0u32; width * height];
    for (i, &l) in provisional.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let root = uf.find(l);
        if remap[root] == 0 {
            next += 1;
            remap[root] = next;
        }
        out[i] = remap[root];
    }
    (out, next as usize)
}

/// 8-connected labeling with margin exclusion.
///
/// Components whose bounding box lies entirely within `margin_px` of one image
/// border are dropped. Surviving labels are renumbered `1..=K` in raster order
/// of their first pixel.
pub fn label_8conn(mask: &BinaryMask, margin_px: usize) -> (LabelMap, Vec<Region>) {
    let (w, h) = (mask.width(), mask.height());
    let (raw, n) = components_8(w, h, |i| mask.data()[i]);

    let mut stats: Vec<Option<(usize, Rect)>> = vec![None; n];
    for (i, &l) in raw.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (r, c) = (i / w, i % w);
        let entry = &mut stats[l as usize - 1];
        match entry {
            None => *entry = Some((1, Rect::new(r, r, c, c))),
            Some((count, b)) => {
                *count += 1;
                b.row_min = b.row_min.min(r);
                b.row_max = b.row_max.max(r);
                b.col_min = b.col_min.min(c);
                b.col_max = b.col_max.max(c);
            }
        }
    }

    let in_margin = |b: &Rect| {
        b.row_max < margin_px || b.col_max < margin_px || b.row_min + margin_px >= h || b.col_min + margin_px >= w
    };

    let mut relabel = vec![0u32; n + 1];
    let mut regions = Vec::new();
    for (idx, s) in stats.iter().enumerate() {
        let (count, bbox) = s.expect("every component has a pixel");
        if margin_px > 0 && in_margin(&bbox) {
            continue;
        }
        let label = regions.len() as u32 + 1;
        relabel[idx + 1] = label;
        regions.push(Region {
            label,
            pixel_count: count,
            bbox,
            midpoint: bbox_midpoint(&bbox),
        });
    }
    let data = raw.iter().map(|&l| relabel[l as usize]).collect();
    (
        LabelMap {
            width: w,
            height: h,
            data,
        },
        regions,
    )
}

/// Regions that belong to one nucleus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NucleusGroup {
    pub group_id: u32,
    pub member_labels: Vec<u32>,
    pub midpoints: Vec<PointRC>,
    /// Window for the circle search; the bare midpoint extent until
    /// [`search_window`] pads it.
    pub search_window: Rect,
}

fn midpoint_extent(points: &[PointRC]) -> (f64, f64, f64, f64) {
    points.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(r0, r1, c0, c1), p| (r0.min(p.row), r1.max(p.row), c0.min(p.col), c1.max(p.col)),
    )
}

/// Groups regions whose midpoints are within `merge_dist` (Euclidean),
/// transitively. Groups are numbered by their smallest member label.
pub fn merge_nuclei(regions: &[Region], merge_dist: f64) -> Vec<NucleusGroup> {
    let n = regions.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if regions[i].midpoint.distance(&regions[j].midpoint) <= merge_dist {
                uf.union(i, j);
            }
        }
    }
    let mut by_root: Vec<Option<usize>> = vec![None; n];
    let mut groups: Vec<NucleusGroup> = Vec::new();
    for (i, region) in regions.iter().enumerate() {
        let root = uf.find(i);
        let g = match by_root[root] {
            Some(g) => g,
            None => {
                groups.push(NucleusGroup {
                    group_id: groups.len() as u32 + 1,
                    member_labels: Vec::new(),
                    midpoints: Vec::new(),
                    search_window: Rect::new(0, 0, 0, 0),
                });
                by_root[root] = Some(groups.len() - 1);
                groups.len() - 1
            }
        };
        groups[g].member_labels.push(region.label);
        groups[g].midpoints.push(region.midpoint);
    }
    for g in &mut groups {
        let (r0, r1, c0, c1) = midpoint_extent(&g.midpoints);
        g.search_window = Rect::new(
            r0.floor() as usize,
            r1.ceil() as usize,
            c0.floor() as usize,
            c1.ceil() as usize,
        );
    }
    groups
}

/// Midpoint extent of the group expanded by `pad` on every side and clipped to `bounds`.
pub fn search_window(group: &NucleusGroup, pad: usize, bounds: Rect) -> Rect {
    assert!(!group.midpoints.is_empty(), "nucleus group without midpoints");
    let (r0, r1, c0, c1) = midpoint_extent(&group.midpoints);
    let pad = pad as f64;
    let clip = |v: f64, lo: usize, hi: usize| (v.max(lo as f64).min(hi as f64)) as usize;
    Rect::new(
        clip((r0 - pad).floor(), bounds.row_min, bounds.row_max),
        clip((r1 + pad).ceil(), bounds.row_min, bounds.row_max),
        clip((c0 - pad).floor(), bounds.col_min, bounds.col_max),
        clip((c1 + pad).ceil(), bounds.col_min, bounds.col_max),
    )
}
