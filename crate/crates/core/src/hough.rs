//! White-cell localization with a fixed-radius circle Hough transform, plus
//! the geometric steps that depend on located cells: cytoplasm assignment and
//! removal of white cells before red-cell matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GrayImage, PointRC, Rect};
use crate::segmentation::NucleusGroup;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoughParams {
    #[serde(rename = "radius_px")]
    pub radius: usize,
    /// Acceptance floor as a fraction of `round(2 * pi * radius)`. Arcs of
    /// neighbouring red cells give chance circles up to about a quarter of
    /// the circumference in crowded smears.
    pub min_vote_fraction: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            radius: 60,
            min_vote_fraction: 0.4,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::InvalidConfig("hough radius must be >= 1".into()));
        }
        if !(self.min_vote_fraction > 0.0 && self.min_vote_fraction <= 1.0) {
            return Err(Error::InvalidConfig("hough min_vote_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn min_votes(&self) -> u32 {
        let circumference = (2.0 * std::f64::consts::PI * self.radius as f64).round();
        (self.min_vote_fraction * circumference).ceil() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteCell {
    pub center: PointRC,
    pub radius: f64,
    pub votes: u32,
    pub group_id: u32,
}

impl WhiteCell {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (row as f64 - self.center.row).hypot(col as f64 - self.center.col) <= self.radius
    }
}

/// Offsets whose length lies in `[radius - 1, radius + 1]`.
fn annulus_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize + 1;
    let (lo, hi) = ((radius as f64 - 1.0).max(0.0), radius as f64 + 1.0);
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            let d = (dr as f64).hypot(dc as f64);
            if d >= lo && d <= hi {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Euclidean distance from a pixel to the nearest point of a rectangle.
fn distance_to_rect(row: usize, col: usize, rect: &Rect) -> f64 {
    let dr = rect.row_min.saturating_sub(row).max(row.saturating_sub(rect.row_max));
    let dc = rect.col_min.saturating_sub(col).max(col.saturating_sub(rect.col_max));
    (dr as f64).hypot(dc as f64)
}

/// Vote accumulator over the centers inside `window`, row-major.
pub fn hough_accumulator(edges: &BinaryMask, window: Rect, radius: usize) -> Vec<u32> {
    let (ww, wh) = (window.width(), window.height());
    let mut acc = vec![0u32; ww * wh];
    let offsets = annulus_offsets(radius);
    let reach = radius + 1;
    let rows = window.row_min.saturating_sub(reach)..=(window.row_max + reach).min(edges.height() - 1);
    let cols = window.col_min.saturating_sub(reach)..=(window.col_max + reach).min(edges.width() - 1);
    for r in rows {
        for c in cols.clone() {
            if !edges.get(r, c) || distance_to_rect(r, c, &window) > reach as f64 {
                continue;
            }
            for &(dr, dc) in &offsets {
                let (cr, cc) = (r as isize + dr, c as isize + dc);
                if cr < window.row_min as isize
                    || cr > window.row_max as isize
                    || cc < window.col_min as isize
                    || cc > window.col_max as isize
                {
                    continue;
                }
                let i = (cr as usize - window.row_min) * ww + (cc as usize - window.col_min);
                acc[i] += 1;
            }
        }
    }
    acc
}

/// Best circle center inside `window`, or `None` when the vote peak is below
/// the acceptance floor. Ties go to the first center in raster order.
pub fn hough_circle_center(edges: &BinaryMask, window: Rect, p: &HoughParams) -> Option<(PointRC, u32)> {
    let acc = hough_accumulator(edges, window, p.radius);
    let (best, votes) = acc
        .iter()
        .enumerate()
        .fold((0usize, 0u32), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    if votes == 0 || votes < p.min_votes() {
        return None;
    }
    let ww = window.width();
    Some((
        PointRC::new((window.row_min + best / ww) as f64, (window.col_min + best % ww) as f64),
        votes,
    ))
}

/// Runs the circle search in every group's window. Groups without a circle
/// are fake regions and come back as rejected ids.
pub fn detect_white_cells(groups: &[NucleusGroup], edges: &BinaryMask, p: &HoughParams) -> (Vec<WhiteCell>, Vec<u32>) {
    let search = |g: &NucleusGroup| hough_circle_center(edges, g.search_window, p);

    #[cfg(feature = "parallel")]
    let found: Vec<Option<(PointRC, u32)>> = {
        use rayon::prelude::*;
        groups.par_iter().map(search).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let found: Vec<Option<(PointRC, u32)>> = groups.iter().map(search).collect();

    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (g, hit) in groups.iter().zip(found) {
        match hit {
            Some((center, votes)) => accepted.push(WhiteCell {
                center,
                radius: p.radius as f64,
                votes,
                group_id: g.group_id,
            }),
            None => rejected.push(g.group_id),
        }
    }
    (accepted, rejected)
}

/// Union of the cell discs.
pub fn disc_mask(cells: &[WhiteCell], width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::empty(width, height);
    for cell in cells {
        let r0 = (cell.center.row - cell.radius).floor().max(0.0) as usize;
        let r1 = ((cell.center.row + cell.radius).ceil() as usize).min(height - 1);
        let c0 = (cell.center.col - cell.radius).floor().max(0.0) as usize;
        let c1 = ((cell.center.col + cell.radius).ceil() as usize).min(width - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                if cell.contains(r, c) {
                    mask.set(r, c, true);
                }
            }
        }
    }
    mask
}

/// Pixels inside some cell disc that are not nucleus.
pub fn cytoplasm_mask(cells: &[WhiteCell], nucleus_mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (nucleus_mask.width(), nucleus_mask.height());
    let discs = disc_mask(cells, w, h);
    BinaryMask::from_fn(w, h, |r, c| discs.get(r, c) && !nucleus_mask.get(r, c))
}

/// Replaces every masked pixel by the (lower) median of the unmasked pixels.
pub fn fill_masked(img: &GrayImage, mask: &BinaryMask) -> Result<GrayImage> {
    let mut outside: Vec<f64> = img
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &inside)| !inside)
        .map(|(&v, _)| v)
        .collect();
    if outside.is_empty() {
        return Err(Error::DegenerateFill);
    }
    let mid = (outside.len() - 1) / 2;
    let (_, &mut fill, _) = outside.select_nth_unstable_by(mid, f64::total_cmp);
    let mut out = img.clone();
    for (v, &inside) in out.data_mut().iter_mut().zip(mask.data()) {
        if inside {
            *v = fill;
        }
    }
    Ok(out)
}

/// Replaces every pixel inside a cell disc by the (lower) median of the
/// pixels outside all discs.
pub fn remove_white_cells(img: &GrayImage, cells: &[WhiteCell]) -> Result<GrayImage> {
    if cells.is_empty() {
        return Ok(img.clone());
    }
    fill_masked(img, &disc_mask(cells, img.width(), img.height()))
}
