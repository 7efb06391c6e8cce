//! Built-in 28x28 binary digit glyphs.
//!
//! Two fixed stroke paths, rasterized once with a thick-pen sweep, give a
//! network-free stand-in for handwritten "2" and "3" digits: distinct
//! shapes with the same ink budget, centered so that +/-2 px jitter stays
//! inside the frame.

use std::sync::OnceLock;

pub const GLYPH_H: usize = 28;
pub const GLYPH_W: usize = 28;

/// Pen radius of the rasterized strokes, in pixels.
const PEN: f64 = 1.45;

/// Polyline control points (x, y) for the digit "2": upper arc, diagonal
/// descent, base bar.
const TWO: &[(f64, f64)] = &[
    (7.0, 9.5),
    (9.0, 5.5),
    (14.0, 4.0),
    (19.0, 5.5),
    (21.0, 9.5),
    (19.5, 13.0),
    (13.0, 17.0),
    (7.0, 22.5),
    (21.0, 22.5),
];

/// Polyline control points for the digit "3": two right-facing bowls
/// meeting at the waist.
const THREE: &[(f64, f64)] = &[
    (8.0, 6.5),
    (13.0, 4.0),
    (18.5, 5.5),
    (20.0, 9.0),
    (17.5, 12.5),
    (13.5, 13.5),
    (18.0, 14.5),
    (20.5, 18.0),
    (18.5, 22.0),
    (12.5, 24.0),
    (7.5, 21.5),
];

fn rasterize(path: &[(f64, f64)]) -> Vec<f64> {
    let mut img = vec![0.0; GLYPH_H * GLYPH_W];
    for seg in path.windows(2) {
        let (x0, y0) = seg[0];
        let (x1, y1) = seg[1];
        let steps = ((x1 - x0).hypot(y1 - y0).ceil() as usize * 4).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let cx = x0 + t * (x1 - x0);
            let cy = y0 + t * (y1 - y0);
            let r = PEN.ceil() as isize;
            for dy in -r..=r {
                for dx in -r..=r {
                    let px = cx.round() as isize + dx;
                    let py = cy.round() as isize + dy;
                    if px < 0 || py < 0 || px >= GLYPH_W as isize || py >= GLYPH_H as isize {
                        continue;
                    }
                    let dist = (px as f64 - cx).hypot(py as f64 - cy);
                    if dist <= PEN {
                        img[py as usize * GLYPH_W + px as usize] = 1.0;
                    }
                }
            }
        }
    }
    img
}

/// The glyph for class index 0 ("2") or 1 ("3"), as a 28x28 row-major
/// binary image.
pub fn glyph(class_index: usize) -> &'static [f64] {
    static CACHE: OnceLock<[Vec<f64>; 2]> = OnceLock::new();
    let pair = CACHE.get_or_init(|| [rasterize(TWO), rasterize(THREE)]);
    &pair[class_index]
}

fn control_points(class_index: usize) -> &'static [(f64, f64)] {
    if class_index == 0 {
        TWO
    } else {
        THREE
    }
}

/// A freshly rasterized glyph whose stroke path is rotated by
/// `rotation_rad` and scaled by `scale` about the frame center before the
/// pen sweep. Stroke width stays constant, mimicking handwriting whose
/// letter shape varies while the pen does not. `glyph_warped(c, 0.0, 1.0)`
/// reproduces `glyph(c)` exactly.
pub fn glyph_warped(class_index: usize, rotation_rad: f64, scale: f64) -> Vec<f64> {
    let (cx, cy) = (GLYPH_W as f64 / 2.0, GLYPH_H as f64 / 2.0);
    let (sin, cos) = rotation_rad.sin_cos();
    let warped: Vec<(f64, f64)> = control_points(class_index)
        .iter()
        .map(|&(x, y)| {
            let dx = (x - cx) * scale;
            let dy = (y - cy) * scale;
            (cx + cos * dx - sin * dy, cy + sin * dx + cos * dy)
        })
        .collect();
    rasterize(&warped)
}
