//! The shortcut-feature dataset: two digit classes, Gaussian pixel noise,
//! and colored squares painted onto one class only. Four evaluation
//! variants share identical base images and differ solely in which squares
//! are painted, so any performance gap between them isolates the model's
//! reliance on the squares.

use super::glyphs::{glyph, GLYPH_H, GLYPH_W};
use super::idx::{load_idx_images, load_idx_labels};
use super::{DataError, Dataset, Result};
use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;
use std::path::PathBuf;

const CHANNELS: usize = 3;
const RED: [f64; 3] = [1.0, 0.0, 0.0];
const BLUE: [f64; 3] = [0.0, 0.0, 1.0];
const JITTER: i64 = 2;

/// Where base digit images come from.
#[derive(Debug, Clone)]
pub enum Source {
    /// Built-in glyph templates with per-sample translation jitter; needs
    /// no external files.
    SyntheticDigits,
    /// Standard big-endian IDX image/label files.
    MnistIdx {
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone)]
pub struct ShortcutDatasetConfig {
    pub source: Source,
    /// Digit labels for class 0 and class 1; squares go on class 1.
    pub classes: (u8, u8),
    pub image_hw: (usize, usize),
    /// Additive Gaussian noise applied before painting.
    pub noise_sigma: f64,
    pub square_size: usize,
    /// Painted intensity: the squares are written as `contrast * pure
    /// color`. Painting happens after the noise draw, so whatever the
    /// contrast, square pixels are exact constants — the only noise-free
    /// features in the image. Low contrast makes them low-variance as
    /// well: predictive, clean, but small in scale.
    pub square_contrast: f64,
    /// Top-left (row, col) corners.
    pub red_square_pos: (usize, usize),
    pub blue_square_pos: (usize, usize),
    /// Synthetic digits only: maximum per-sample rotation of the stroke
    /// path, in degrees (drawn uniformly from the symmetric interval).
    /// Together with `scale_jitter` this gives the digit a continuous
    /// family of shapes, so classifying it requires learned shape
    /// features rather than template matching — the stand-in for
    /// handwriting variability.
    pub max_rotation_deg: f64,
    /// Synthetic digits only: per-sample stroke-path scale is drawn from
    /// `[1 - scale_jitter, 1 + scale_jitter]`.
    pub scale_jitter: f64,
    pub train_per_class: usize,
    pub eval_per_class: usize,
    pub seed: u64,
}

impl ShortcutDatasetConfig {
    /// The default synthetic configuration: digits 2 vs 3, 28x28, noise
    /// 0.1, 4-px squares in opposite corners with a 2-px margin.
    pub fn synthetic(seed: u64, train_per_class: usize, eval_per_class: usize) -> Self {
        Self {
            source: Source::SyntheticDigits,
            classes: (2, 3),
            image_hw: (28, 28),
            noise_sigma: 0.1,
            square_size: 4,
            square_contrast: 1.0,
            red_square_pos: (2, 2),
            blue_square_pos: (22, 22),
            max_rotation_deg: 0.0,
            scale_jitter: 0.0,
            train_per_class,
            eval_per_class,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let (h, w) = self.image_hw;
        let s = self.square_size;
        if s == 0 {
            return Err(DataError::Config("square_size must be >= 1".into()));
        }
        for (name, (r, c)) in [
            ("red", self.red_square_pos),
            ("blue", self.blue_square_pos),
        ] {
            if r + s > h || c + s > w {
                return Err(DataError::Config(format!(
                    "{name} square at ({r},{c}) size {s} exceeds {h}x{w} image"
                )));
            }
        }
        let (r1, c1) = self.red_square_pos;
        let (r2, c2) = self.blue_square_pos;
        let overlap = r1 < r2 + s && r2 < r1 + s && c1 < c2 + s && c2 < c1 + s;
        if overlap {
            return Err(DataError::Config(
                "red and blue squares overlap".into(),
            ));
        }
        if self.classes.0 == self.classes.1 {
            return Err(DataError::Config("classes must differ".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(DataError::Config("noise_sigma must be >= 0".into()));
        }
        if !(self.square_contrast > 0.0 && self.square_contrast <= 1.0) {
            return Err(DataError::Config(format!(
                "square_contrast must be in (0, 1], got {}",
                self.square_contrast
            )));
        }
        if self.train_per_class == 0 || self.eval_per_class == 0 {
            return Err(DataError::Config("per-class counts must be >= 1".into()));
        }
        if !(0.0..90.0).contains(&self.max_rotation_deg) {
            return Err(DataError::Config(format!(
                "max_rotation_deg must be in [0, 90), got {}",
                self.max_rotation_deg
            )));
        }
        if !(0.0..0.5).contains(&self.scale_jitter) {
            return Err(DataError::Config(format!(
                "scale_jitter must be in [0, 0.5), got {}",
                self.scale_jitter
            )));
        }
        if matches!(self.source, Source::SyntheticDigits)
            && self.image_hw != (GLYPH_H, GLYPH_W)
        {
            return Err(DataError::Config(format!(
                "synthetic glyphs are {GLYPH_H}x{GLYPH_W}; got {h}x{w}"
            )));
        }
        Ok(())
    }
}

/// Which squares an evaluation split paints on class-1 samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitName {
    Both,
    RedOnly,
    BlueOnly,
    None,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Both => "Both",
            SplitName::RedOnly => "RedOnly",
            SplitName::BlueOnly => "BlueOnly",
            SplitName::None => "None",
        })
    }
}

/// The training split plus the four evaluation variants.
#[derive(Debug, Clone)]
pub struct ShortcutData {
    pub train: Dataset,
    pub both: Dataset,
    pub red_only: Dataset,
    pub blue_only: Dataset,
    pub none: Dataset,
}

impl ShortcutData {
    pub fn eval_split(&self, name: SplitName) -> &Dataset {
        match name {
            SplitName::Both => &self.both,
            SplitName::RedOnly => &self.red_only,
            SplitName::BlueOnly => &self.blue_only,
            SplitName::None => &self.none,
        }
    }

    pub fn eval_splits(&self) -> [(SplitName, &Dataset); 4] {
        [
            (SplitName::Both, &self.both),
            (SplitName::RedOnly, &self.red_only),
            (SplitName::BlueOnly, &self.blue_only),
            (SplitName::None, &self.none),
        ]
    }
}

/// Unclamped 3-channel base images (digit + noise), interleaved classes
/// `0,1,0,1,...`.
struct Base {
    images: Vec<f64>,
    labels: Vec<usize>,
    h: usize,
    w: usize,
}

fn synthetic_base(cfg: &ShortcutDatasetConfig, per_class: usize, tag: &str) -> Base {
    let (h, w) = cfg.image_hw;
    let count = 2 * per_class;
    let mut jitter = stream_rng(cfg.seed, &format!("shortcut/{tag}/jitter"));
    let mut noise = stream_rng(cfg.seed, &format!("shortcut/{tag}/noise"));
    let mut images = Vec::with_capacity(count * CHANNELS * h * w);
    let mut labels = Vec::with_capacity(count);
    let rigid = cfg.max_rotation_deg == 0.0 && cfg.scale_jitter == 0.0;
    for i in 0..count {
        let class = i % 2;
        labels.push(class);
        let dy = jitter.random_range(-JITTER..=JITTER);
        let dx = jitter.random_range(-JITTER..=JITTER);
        let rot_unit: f64 = jitter.random_range(-1.0..=1.0);
        let scale_unit: f64 = jitter.random_range(-1.0..=1.0);
        let warped;
        let template: &[f64] = if rigid {
            glyph(class)
        } else {
            warped = glyph_warped(
                class,
                (rot_unit * cfg.max_rotation_deg).to_radians(),
                1.0 + scale_unit * cfg.scale_jitter,
            );
            &warped
        };
        let mut gray = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let sy = y as i64 - dy;
                let sx = x as i64 - dx;
                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                    gray[y * w + x] = template[sy as usize * w + sx as usize];
                }
            }
        }
        for _ in 0..CHANNELS {
            for &g in &gray {
                let z: f64 = StandardNormal.sample(&mut noise);
                images.push(g + cfg.noise_sigma * z);
            }
        }
    }
    Base {
        images,
        labels,
        h,
        w,
    }
}

fn idx_base(
    cfg: &ShortcutDatasetConfig,
    images_path: &PathBuf,
    labels_path: &PathBuf,
) -> Result<(Base, Base)> {
    let (pixels, n, h, w) = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if labels.len() != n {
        return Err(DataError::Manifest(format!(
            "IDX pair mismatch: {n} images vs {} labels",
            labels.len()
        )));
    }
    if (h, w) != cfg.image_hw {
        return Err(DataError::Config(format!(
            "IDX images are {h}x{w}, config wants {}x{}",
            cfg.image_hw.0, cfg.image_hw.1
        )));
    }
    // Per-class index pools in file order: train first, then eval.
    let mut pools: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &lab) in labels.iter().enumerate() {
        if lab == cfg.classes.0 {
            pools[0].push(i);
        } else if lab == cfg.classes.1 {
            pools[1].push(i);
        }
    }
    let need = cfg.train_per_class + cfg.eval_per_class;
    for (k, pool) in pools.iter().enumerate() {
        if pool.len() < need {
            return Err(DataError::NotEnoughSamples {
                class: if k == 0 { cfg.classes.0 } else { cfg.classes.1 },
                have: pool.len(),
                need,
            });
        }
    }
    let build = |range_start: usize, per_class: usize, tag: &str| -> Base {
        let mut noise = stream_rng(cfg.seed, &format!("shortcut/{tag}/noise"));
        let count = 2 * per_class;
        let mut images = Vec::with_capacity(count * CHANNELS * h * w);
        let mut out_labels = Vec::with_capacity(count);
        for i in 0..count {
            let class = i % 2;
            out_labels.push(class);
            let src = pools[class][range_start + i / 2];
            let gray = &pixels[src * h * w..(src + 1) * h * w];
            for _ in 0..CHANNELS {
                for &g in gray {
                    let z: f64 = StandardNormal.sample(&mut noise);
                    images.push(g + cfg.noise_sigma * z);
                }
            }
        }
        Base {
            images,
            labels: out_labels,
            h,
            w,
        }
    };
    let train = build(0, cfg.train_per_class, "train");
    let eval = build(cfg.train_per_class, cfg.eval_per_class, "eval");
    Ok((train, eval))
}

fn paint_square(
    images: &mut [f64],
    labels: &[usize],
    h: usize,
    w: usize,
    pos: (usize, usize),
    size: usize,
    color: [f64; 3],
) {
    let sample = CHANNELS * h * w;
    for (i, &lab) in labels.iter().enumerate() {
        if lab != 1 {
            continue;
        }
        let img = &mut images[i * sample..(i + 1) * sample];
        for ch in 0..CHANNELS {
            for r in pos.0..pos.0 + size {
                for c in pos.1..pos.1 + size {
                    img[ch * h * w + r * w + c] = color[ch];
                }
            }
        }
    }
}

fn finish_split(base: &Base, cfg: &ShortcutDatasetConfig, red: bool, blue: bool) -> Dataset {
    let mut images = base.images.clone();
    let c = cfg.square_contrast;
    let scaled = |color: [f64; 3]| [color[0] * c, color[1] * c, color[2] * c];
    if red {
        paint_square(
            &mut images,
            &base.labels,
            base.h,
            base.w,
            cfg.red_square_pos,
            cfg.square_size,
            scaled(RED),
        );
    }
    if blue {
        paint_square(
            &mut images,
            &base.labels,
            base.h,
            base.w,
            cfg.blue_square_pos,
            cfg.square_size,
            scaled(BLUE),
        );
    }
    for v in &mut images {
        *v = v.clamp(0.0, 1.0);
    }
    Dataset {
        n: base.labels.len(),
        c: CHANNELS,
        h: base.h,
        w: base.w,
        images,
        labels: base.labels.clone(),
    }
}

/// Generate the training split (painted like `Both`) and the four
/// evaluation splits, all from `cfg.seed`.
pub fn generate_shortcut_dataset(cfg: &ShortcutDatasetConfig) -> Result<ShortcutData> {
    cfg.validate()?;
    let (train_base, eval_base) = match &cfg.source {
        Source::SyntheticDigits => (
            synthetic_base(cfg, cfg.train_per_class, "train"),
            synthetic_base(cfg, cfg.eval_per_class, "eval"),
        ),
        Source::MnistIdx { images, labels } => idx_base(cfg, images, labels)?,
    };
    Ok(ShortcutData {
        train: finish_split(&train_base, cfg, true, true),
        both: finish_split(&eval_base, cfg, true, true),
        red_only: finish_split(&eval_base, cfg, true, false),
        blue_only: finish_split(&eval_base, cfg, false, true),
        none: finish_split(&eval_base, cfg, false, false),
    })
}
