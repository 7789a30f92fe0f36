use serde::{Deserialize, Serialize};

use crate::hough::{disc_mask, WhiteCell};
use crate::raster::{BinaryMask, PointRC, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PixelClass {
    Background,
    RedCell,
    Cytoplasm,
    Nucleus,
}

impl PixelClass {
    pub const ALL: [PixelClass; 4] = [
        PixelClass::Background,
        PixelClass::RedCell,
        PixelClass::Cytoplasm,
        PixelClass::Nucleus,
    ];

    pub fn color(self) -> [u8; 3] {
        match self {
            PixelClass::Background => [0, 0, 255],
            PixelClass::RedCell => [255, 0, 0],
            PixelClass::Cytoplasm => [255, 255, 0],
            PixelClass::Nucleus => [0, 255, 255],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassOverlay {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<PixelClass>,
}

impl ClassOverlay {
    pub fn background(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            classes: vec![PixelClass::Background; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> PixelClass {
        self.classes[row * self.width + col]
    }

    /// Pixel count per class, in `PixelClass::ALL` order.
    pub fn class_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for c in &self.classes {
            counts[*c as usize] += 1;
        }
        counts
    }
}

/// Precedence: nucleus > cytoplasm > red cell > background. Nucleus pixels
/// only count inside accepted white-cell discs.
pub fn classify_pixels(
    white_cells: &[WhiteCell],
    nucleus_mask: &BinaryMask,
    red_centers: &[PointRC],
    red_radius: f64,
) -> ClassOverlay {
    let (w, h) = (nucleus_mask.width(), nucleus_mask.height());
    let discs = disc_mask(white_cells, w, h);
    let mut overlay = ClassOverlay::background(w, h);

    for p in red_centers {
        let r0 = (p.row - red_radius).floor().max(0.0) as usize;
        let c0 = (p.col - red_radius).floor().max(0.0) as usize;
        let r1 = ((p.row + red_radius).ceil().max(0.0) as usize).min(h - 1);
        let c1 = ((p.col + red_radius).ceil().max(0.0) as usize).min(w - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                if (r as f64 - p.row).hypot(c as f64 - p.col) <= red_radius {
                    overlay.classes[r * w + c] = PixelClass::RedCell;
                }
            }
        }
    }
    for (i, class) in overlay.classes.iter_mut().enumerate() {
        if discs.data()[i] {
            *class = if nucleus_mask.data()[i] {
                PixelClass::Nucleus
            } else {
                PixelClass::Cytoplasm
            };
        }
    }
    overlay
}

pub fn render_overlay(overlay: &ClassOverlay) -> RgbImage {
    let data = overlay.classes.iter().flat_map(|c| c.color()).collect();
    RgbImage::new(overlay.width, overlay.height, data).expect("overlay dimensions are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn cell(row: f64, col: f64, radius: f64) -> WhiteCell {
        WhiteCell {
            center: PointRC::new(row, col),
            radius,
            votes: 1,
            group_id: 1,
        }
    }

    #[test]
    fn no_detections_is_all_background() {
        let o = classify_pixels(&[], &BinaryMask::empty(8, 6), &[], 3.0);
        assert_eq!(o.class_counts(), [48, 0, 0, 0]);
        let img = render_overlay(&o);
        assert!(img.pixels().all(|p| p == [0, 0, 255]));
    }

    #[test]
    fn single_nucleus_pixel_renders_cyan() {
        let mut o = ClassOverlay::background(4, 4);
        o.classes[5] = PixelClass::Nucleus;
        let img = render_overlay(&o);
        assert_eq!(img.pixels().filter(|&p| p == [0, 255, 255]).count(), 1);
        assert_eq!(img.get(1, 1), [0, 255, 255]);
    }

    #[test]
    fn nucleus_and_cytoplasm_partition_the_disc() {
        let cells = [cell(20.0, 20.0, 12.0)];
        let nucleus = BinaryMask::from_fn(40, 40, |_, c| c < 20);
        let o = classify_pixels(&cells, &nucleus, &[], 5.0);
        let discs = disc_mask(&cells, 40, 40);
        for r in 0..40 {
            for c in 0..40 {
                let class = o.get(r, c);
                if discs.get(r, c) {
                    let expected = if c < 20 {
                        PixelClass::Nucleus
                    } else {
                        PixelClass::Cytoplasm
                    };
                    assert_eq!(class, expected);
                } else {
                    // nucleus pixels outside accepted discs are not nucleus
                    assert_eq!(class, PixelClass::Background);
                }
            }
        }
    }

    #[test]
    fn white_cells_take_precedence_over_red() {
        let cells = [cell(20.0, 20.0, 10.0)];
        let o = classify_pixels(&cells, &BinaryMask::empty(40, 40), &[PointRC::new(20.0, 28.0)], 6.0);
        assert_eq!(o.get(20, 28), PixelClass::Cytoplasm);
        assert_eq!(o.get(20, 33), PixelClass::RedCell);
    }

    #[test]
    fn color_histogram_matches_class_histogram() {
        let cells = [cell(15.0, 15.0, 8.0)];
        let nucleus = BinaryMask::from_fn(50, 30, |r, c| (r + c) % 3 == 0);
        let o = classify_pixels(
            &cells,
            &nucleus,
            &[PointRC::new(10.0, 40.0), PointRC::new(25.0, 35.0)],
            4.5,
        );
        let img = render_overlay(&o);
        let mut by_color: HashMap<[u8; 3], usize> = HashMap::new();
        for p in img.pixels() {
            *by_color.entry(p).or_default() += 1;
        }
        let counts = o.class_counts();
        for class in PixelClass::ALL {
            assert_eq!(
                by_color.get(&class.color()).copied().unwrap_or(0),
                counts[class as usize]
            );
        }
        assert_eq!(counts.iter().sum::<usize>(), 50 * 30);
    }
}
