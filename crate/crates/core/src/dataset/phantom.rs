//! Ellipse-based two-grade tumor phantoms.
//!
//! Anatomy: an irregular edema ellipse containing a core ellipse. High-grade
//! cases draw an enhancing rim (label 4) around a necrotic interior (label 1);
//! low-grade cases fill the core with non-enhancing tissue (label 1) and only
//! rarely carry a small enhancing focus.
//!
//! Intensities follow per-grade tissue profiles over four channels that play
//! the roles of T1, T1c, T2 and FLAIR. `intensity_overlap` pulls the low-grade
//! profiles toward the high-grade profile of a *different* tissue (low-grade
//! core toward high-grade edema, low-grade edema toward high-grade necrosis),
//! so the same intensities mean different labels depending on grade.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Grade, LabelMap, Subject, Volume};
use crate::error::{Error, Result};
use crate::seeds;

/// Channels carried by the tissue profiles.
const PROFILE_CHANNELS: usize = 4;

// T1, T1c, T2, FLAIR
const BACKGROUND: [f32; 4] = [0.45, 0.40, 0.30, 0.30];
const HGG_NECROSIS: [f32; 4] = [0.25, 0.25, 0.85, 0.55];
const HGG_EDEMA: [f32; 4] = [0.40, 0.40, 0.65, 0.80];
const HGG_ENHANCING: [f32; 4] = [0.45, 0.90, 0.55, 0.60];
const LGG_CORE: [f32; 4] = [0.20, 0.22, 0.70, 0.90];
const LGG_EDEMA: [f32; 4] = [0.38, 0.36, 0.48, 0.60];
const LGG_ENHANCING: [f32; 4] = [0.45, 0.75, 0.55, 0.70];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub image_size: usize,
    pub n_channels: usize,
    pub edema_radius_range: [f64; 2],
    pub core_radius_range: [f64; 2],
    pub hgg_enhancement_probability: f64,
    pub lgg_enhancement_probability: f64,
    pub noise_std: f64,
    pub intensity_overlap: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            image_size: 64,
            n_channels: 4,
            edema_radius_range: [10.0, 18.0],
            core_radius_range: [4.0, 8.5],
            hgg_enhancement_probability: 0.9,
            lgg_enhancement_probability: 0.1,
            noise_std: 0.06,
            intensity_overlap: 0.5,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.image_size < 8 {
            return bad(format!("image_size must be at least 8, got {}", self.image_size));
        }
        if !(1..=PROFILE_CHANNELS).contains(&self.n_channels) {
            return bad(format!("n_channels must be in 1..={PROFILE_CHANNELS}, got {}", self.n_channels));
        }
        let [elo, ehi] = self.edema_radius_range;
        let [clo, chi] = self.core_radius_range;
        if !(clo > 0.0 && clo <= chi && chi < elo && elo <= ehi) || !ehi.is_finite() {
            return bad(format!(
                "core_radius_range {:?} must lie strictly inside edema_radius_range {:?} \
                 (0 < core_lo <= core_hi < edema_lo <= edema_hi)",
                self.core_radius_range, self.edema_radius_range
            ));
        }
        for (name, p) in [
            ("hgg_enhancement_probability", self.hgg_enhancement_probability),
            ("lgg_enhancement_probability", self.lgg_enhancement_probability),
            ("intensity_overlap", self.intensity_overlap),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.hgg_enhancement_probability <= self.lgg_enhancement_probability {
            return bad(format!(
                "hgg_enhancement_probability ({}) must exceed lgg_enhancement_probability ({})",
                self.hgg_enhancement_probability, self.lgg_enhancement_probability
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be finite and >= 0, got {}", self.noise_std));
        }
        Ok(())
    }

    /// Copy with radii rescaled for a different image size.
    pub fn resized(&self, image_size: usize) -> PhantomConfig {
        let f = image_size as f64 / self.image_size as f64;
        let scale = |r: [f64; 2]| [r[0] * f, r[1] * f];
        PhantomConfig {
            image_size,
            edema_radius_range: scale(self.edema_radius_range),
            core_radius_range: scale(self.core_radius_range),
            ..self.clone()
        }
    }

    fn profile(&self, grade: Grade, label: u8) -> [f32; 4] {
        let o = self.intensity_overlap as f32;
        let blend = |own: [f32; 4], other: [f32; 4]| {
            let mut out = [0.0; 4];
            for c in 0..4 {
                out[c] = (1.0 - o) * own[c] + o * other[c];
            }
            out
        };
        match (grade, label) {
            (_, 0) => BACKGROUND,
            (Grade::Hgg, 1) => HGG_NECROSIS,
            (Grade::Hgg, 2) => HGG_EDEMA,
            (Grade::Hgg, _) => HGG_ENHANCING,
            (Grade::Lgg, 1) => blend(LGG_CORE, HGG_EDEMA),
            (Grade::Lgg, 2) => blend(LGG_EDEMA, HGG_NECROSIS),
            (Grade::Lgg, _) => blend(LGG_ENHANCING, HGG_ENHANCING),
        }
    }
}

/// Irregular ellipse: radial coordinate is below 1 inside the shape.
struct Blob {
    cx: f64,
    cy: f64,
    ra: f64,
    rb: f64,
    cos: f64,
    sin: f64,
    wobble: f64,
    phase: f64,
}

impl Blob {
    fn sample(rng: &mut ChaCha8Rng, cx: f64, cy: f64, range: [f64; 2]) -> Blob {
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        Blob {
            cx,
            cy,
            ra: sample_range(rng, range),
            rb: sample_range(rng, range),
            cos: angle.cos(),
            sin: angle.sin(),
            wobble: rng.random_range(0.0..0.12),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn radial(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * self.cos + dy * self.sin) / self.ra;
        let v = (-dx * self.sin + dy * self.cos) / self.rb;
        let phi = v.atan2(u);
        (u * u + v * v).sqrt() / (1.0 + self.wobble * (3.0 * phi + self.phase).sin())
    }
}

fn sample_range(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn subject_rng(config: &PhantomConfig, grade: Grade, subject_seed: u64) -> ChaCha8Rng {
    seeds::rng(config.seed, &["phantom", grade.as_str(), &subject_seed.to_string()])
}

fn subject_id(grade: Grade, index: usize) -> String {
    format!("{}_{index:04}", grade.as_str())
}

/// Draws one phantom subject. Deterministic in `(config.seed, grade, subject_seed)`.
pub fn generate_phantom(config: &PhantomConfig, grade: Grade, subject_seed: u64) -> Result<Subject> {
    config.validate()?;
    phantom_with_id(config, grade, subject_seed, format!("{}_s{subject_seed}", grade.as_str()))
}

fn phantom_with_id(config: &PhantomConfig, grade: Grade, subject_seed: u64, id: String) -> Result<Subject> {
    let mut rng = subject_rng(config, grade, subject_seed);
    let size = config.image_size;
    let s = size as f64;

    let cx = rng.random_range(0.38 * s..0.62 * s);
    let cy = rng.random_range(0.38 * s..0.62 * s);
    let edema = Blob::sample(&mut rng, cx, cy, config.edema_radius_range);
    // Keep the core center well inside the edema.
    let slack = 0.5 * (config.edema_radius_range[0] - config.core_radius_range[1]);
    let offset_angle = rng.random_range(0.0..std::f64::consts::TAU);
    let offset = rng.random_range(0.0..=slack.max(0.0));
    let core = Blob::sample(
        &mut rng,
        cx + offset * offset_angle.cos(),
        cy + offset * offset_angle.sin(),
        config.core_radius_range,
    );

    let enhancing = match grade {
        Grade::Hgg => rng.random_bool(config.hgg_enhancement_probability),
        Grade::Lgg => rng.random_bool(config.lgg_enhancement_probability),
    };
    let rim = rng.random_range(0.3..0.55);
    let focus_radius = rng.random_range(1.5..3.0);

    let mut labels = vec![0u8; size * size];
    for row in 0..size {
        for col in 0..size {
            let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
            if edema.radial(x, y) > 1.0 {
                continue;
            }
            let rc = core.radial(x, y);
            labels[row * size + col] = if rc > 1.0 {
                2
            } else if !enhancing {
                1
            } else {
                match grade {
                    Grade::Hgg if rc >= 1.0 - rim => 4,
                    Grade::Lgg if (x - core.cx).hypot(y - core.cy) <= focus_radius => 4,
                    _ => 1,
                }
            };
        }
    }

    let gain: f32 = rng.random_range(0.9..1.1);
    let texture_phase: [f64; 2] =
        [rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU)];
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let plane = size * size;
    let mut data = vec![0.0f32; config.n_channels * plane];
    for c in 0..config.n_channels {
        for row in 0..size {
            for col in 0..size {
                let i = row * size + col;
                let base = config.profile(grade, labels[i])[c];
                let texture = 0.03
                    * ((col as f64 / s * 5.0 + texture_phase[0]).sin()
                        * (row as f64 / s * 4.0 + texture_phase[1]).cos()) as f32;
                data[c * plane + i] = gain * base + texture + noise.sample(&mut rng) as f32;
            }
        }
    }

    Subject::new(id, grade, Volume::new(config.n_channels, size, size, data)?, LabelMap::new(size, size, labels)?)
}

/// Generates `n_hgg` high-grade followed by `n_lgg` low-grade subjects with
/// ids `HGG_0000.., LGG_0000..`. The order depends only on subject index.
pub fn generate_cohort(config: &PhantomConfig, n_hgg: usize, n_lgg: usize) -> Result<Vec<Subject>> {
    config.validate()?;
    if n_hgg == 0 || n_lgg == 0 {
        return Err(Error::Config(format!(
            "cohort needs at least one subject per grade, got n_hgg={n_hgg}, n_lgg={n_lgg}"
        )));
    }
    let jobs: Vec<(Grade, usize)> =
        (0..n_hgg).map(|i| (Grade::Hgg, i)).chain((0..n_lgg).map(|i| (Grade::Lgg, i))).collect();
    jobs.into_par_iter().map(|(grade, i)| phantom_with_id(config, grade, i as u64, subject_id(grade, i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::{region_mask, RegionKind};

    #[test]
    fn deterministic_per_seed() {
        let cfg = PhantomConfig::default();
        let a = generate_phantom(&cfg, Grade::Hgg, 7).unwrap();
        let b = generate_phantom(&cfg, Grade::Hgg, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_phantom(&cfg, Grade::Hgg, 8).unwrap();
        assert_ne!(a.volume, c.volume);
    }

    #[test]
    fn regions_are_nested() {
        let cfg = PhantomConfig::default();
        for grade in Grade::ALL {
            for seed in 0..40 {
                let s = generate_phantom(&cfg, grade, seed).unwrap();
                let ce = region_mask(&s.labels, RegionKind::Ce);
                let core = region_mask(&s.labels, RegionKind::Core);
                let whole = region_mask(&s.labels, RegionKind::Whole);
                for i in 0..ce.len() {
                    assert!(!ce[i] || core[i]);
                    assert!(!core[i] || whole[i]);
                }
                assert!(core.iter().any(|&b| b), "core must be nonempty");
            }
        }
    }

    #[test]
    fn config_validation() {
        let cfg = PhantomConfig { core_radius_range: [4.0, 12.0], ..PhantomConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = PhantomConfig { lgg_enhancement_probability: 0.95, ..PhantomConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = PhantomConfig { intensity_overlap: 1.5, ..PhantomConfig::default() };
        assert!(generate_phantom(&cfg, Grade::Lgg, 0).is_err());
    }

    #[test]
    fn cohort_counts_and_ids() {
        let cfg = PhantomConfig::default().resized(16);
        let cohort = generate_cohort(&cfg, 1, 1).unwrap();
        assert_eq!(cohort.len(), 2);
        assert_ne!(cohort[0].id, cohort[1].id);
        assert!(generate_cohort(&cfg, 0, 3).is_err());
    }

    #[test]
    fn resized_scales_radii() {
        let cfg = PhantomConfig::default().resized(32);
        assert_eq!(cfg.image_size, 32);
        assert_eq!(cfg.edema_radius_range, [5.0, 9.0]);
        cfg.validate().unwrap();
    }
}
