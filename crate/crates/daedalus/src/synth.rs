//! Deterministic synthetic particle corpora with ground-truth classes.
//!
//! Each class has its own morphology (size, aspect ratio, convexity,
//! boundary roughness) and its own hue. Shape and size attributes are
//! derived from one sampled outline, so they are mutually consistent:
//! `Area = Convexity · Convex Hull Area`, `Circularity = 4π·Area/Perimeter²`
//! and so on. Ground truth is returned next to the dataset, never inside it.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use anyhow::Context;

use image::{Rgba, RgbaImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use daedalus_core::{AttributeSchema, Dataset, ParticleRecord, Provenance, Value};

use crate::images::{ImageEntry, ImageStore, Thumbnail};
use crate::manifest::write_dataset;
use crate::schema::{
    lot_names, reference_schema, supplier_names, LOT_NUMBER, PRODUCTION_DATE, SUPPLIER,
};

/// Ground-truth file of a synthetic corpus, `id,class` rows.
pub const TRUTH_FILE: &str = "truth.csv";

/// Creation time stamped on synthetic datasets (2023-01-01T00:00:00Z), so
/// that output files depend on the configuration only.
pub const SYNTH_EPOCH_MS: i64 = 1_672_531_200_000;

/// Image background of rendered particles.
pub const BACKGROUND: [u8; 3] = [236, 236, 236];
/// Per-channel amplitude of the background noise.
pub const BACKGROUND_NOISE: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub particles: usize,
    pub classes: usize,
    pub lots: usize,
    pub suppliers: usize,
    /// Smallest and largest image edge in pixels.
    pub image_size: (u32, u32),
    pub seed: u64,
    /// Lots with a fixed particle count, as `(lot number starting at 1, count)`.
    #[serde(default)]
    pub pinned_lots: Vec<(usize, usize)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            particles: 3000,
            classes: 3,
            lots: 70,
            suppliers: 8,
            image_size: (10, 1000),
            seed: 7,
            pinned_lots: Vec::new(),
        }
    }
}

impl SynthConfig {
    /// Corpus at the scale of the reference production study: 37,857
    /// particles from 70 lots and 8 suppliers, with Lot 027 holding 669.
    pub fn reference() -> Self {
        SynthConfig {
            particles: 37_857,
            pinned_lots: vec![(27, 669)],
            seed: 1,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError(m));
        if self.particles == 0 {
            return bad("particle count must be positive".into());
        }
        if self.classes < 2 || self.classes > self.particles {
            return bad(format!("class count must lie in 2..={}", self.particles));
        }
        if self.lots == 0 || self.suppliers == 0 {
            return bad("lot and supplier counts must be positive".into());
        }
        let (min, max) = self.image_size;
        if min < 10 || max > 1000 || min > max {
            return bad(format!(
                "image size range must satisfy 10 <= min <= max <= 1000, got {min}..{max}"
            ));
        }
        let mut pinned = 0;
        let mut seen = std::collections::BTreeSet::new();
        for &(lot, count) in &self.pinned_lots {
            if lot == 0 || lot > self.lots || !seen.insert(lot) {
                return bad(format!("pinned lot {lot} is out of range or repeated"));
            }
            pinned += count;
        }
        if pinned > self.particles {
            return bad("pinned lot counts exceed the particle count".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid synthetic configuration: {0}")]
pub struct SynthError(pub String);

/// Morphology of one class. Lengths in µm.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Profile {
    name: &'static str,
    hue: f64,
    /// Mean and standard deviation of ln(max Feret diameter).
    log_length: (f64, f64),
    /// Mean and standard deviation of ln(aspect ratio − 1).
    log_excess_aspect: (f64, f64),
    /// Mean and standard deviation of the area-to-hull ratio.
    convexity: (f64, f64),
    /// Mean boundary roughness (relative perimeter excess).
    roughness: f64,
}

const PROFILES: [Profile; 6] = [
    Profile {
        name: "blue",
        hue: 215.0,
        log_length: (4.3, 0.60),
        log_excess_aspect: (0.9, 0.60),
        convexity: (0.90, 0.070),
        roughness: 0.04,
    },
    Profile {
        name: "yellow",
        hue: 52.0,
        log_length: (3.8, 0.60),
        log_excess_aspect: (-1.5, 0.80),
        convexity: (0.95, 0.040),
        roughness: 0.03,
    },
    Profile {
        name: "red",
        hue: 2.0,
        log_length: (4.1, 0.60),
        log_excess_aspect: (-0.4, 0.70),
        convexity: (0.76, 0.100),
        roughness: 0.14,
    },
    Profile {
        name: "green",
        hue: 125.0,
        log_length: (4.7, 0.60),
        log_excess_aspect: (0.2, 0.60),
        convexity: (0.84, 0.080),
        roughness: 0.08,
    },
    Profile {
        name: "purple",
        hue: 275.0,
        log_length: (3.5, 0.60),
        log_excess_aspect: (-0.8, 0.70),
        convexity: (0.68, 0.100),
        roughness: 0.20,
    },
    Profile {
        name: "orange",
        hue: 28.0,
        log_length: (4.5, 0.60),
        log_excess_aspect: (1.4, 0.60),
        convexity: (0.80, 0.080),
        roughness: 0.10,
    },
];

/// Class `c` reuses the archetypes cyclically with a shifted size and hue.
fn profile(c: usize) -> (String, Profile) {
    let base = PROFILES[c % PROFILES.len()];
    let cycle = c / PROFILES.len();
    if cycle == 0 {
        return (base.name.to_string(), base);
    }
    let p = Profile {
        hue: (base.hue + 137.5 * cycle as f64).rem_euclid(360.0),
        log_length: (base.log_length.0 + 0.45 * cycle as f64, base.log_length.1),
        ..base
    };
    (format!("{}-{}", base.name, cycle + 1), p)
}

/// Everything needed to render one particle image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sprite {
    pub width: u32,
    pub height: u32,
    /// Semi-axes in pixels.
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
    pub hue: f64,
    /// Amplitudes and phases of the boundary harmonics 2..=4.
    pub harmonics: [(f64, f64); 3],
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    /// Class name per particle, dataset order.
    pub truth: Vec<String>,
    pub class_names: Vec<String>,
    pub sprites: Vec<Sprite>,
}

impl SyntheticCorpus {
    pub fn render(&self, row: usize) -> RgbaImage {
        render_sprite(&self.sprites[row]).0
    }

    /// `id,class` lines in dataset order, with a header.
    pub fn truth_csv(&self) -> String {
        let mut out = String::from("id,class\n");
        for (p, c) in self.dataset.particles.iter().zip(&self.truth) {
            out.push_str(&p.id);
            out.push(',');
            out.push_str(c);
            out.push('\n');
        }
        out
    }
}

fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    // Ramanujan's second approximation
    let h = ((a - b) / (a + b)).powi(2);
    PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
}

fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

fn lot_counts(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut counts = vec![0usize; config.lots];
    let pinned: BTreeMap<usize, usize> = config
        .pinned_lots
        .iter()
        .map(|&(l, c)| (l - 1, c))
        .collect();
    let free: Vec<usize> = (0..config.lots)
        .filter(|l| !pinned.contains_key(l))
        .collect();
    let remaining = config.particles - pinned.values().sum::<usize>();
    for (&l, &c) in &pinned {
        counts[l] = c;
    }
    if free.is_empty() {
        return counts;
    }
    let gamma = Gamma::new(8.0, 1.0).expect("valid gamma");
    let weights: Vec<f64> = free.iter().map(|_| gamma.sample(rng)).collect();
    // every free lot gets at least one particle when possible
    let floor = if remaining >= free.len() { 1 } else { 0 };
    let spread = largest_remainder(remaining - floor * free.len(), &weights);
    for (&l, c) in free.iter().zip(spread) {
        counts[l] = c + floor;
    }
    counts
}

fn schema_for(config: &SynthConfig) -> AttributeSchema {
    let reference = reference_schema();
    let descriptors = reference
        .descriptors()
        .iter()
        .cloned()
        .map(|mut d| {
            if d.name == LOT_NUMBER {
                d.categories = Some(lot_names(config.lots));
            } else if d.name == SUPPLIER {
                d.categories = Some(supplier_names(config.suppliers));
            }
            d
        })
        .collect();
    AttributeSchema::new(descriptors, reference.elongation()).expect("reference schema stays valid")
}

/// Generates a corpus. A pure function of `config`.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let schema = schema_for(config);
    let months = schema
        .require(PRODUCTION_DATE)
        .expect("reference schema")
        .category_order()
        .to_vec();
    let lots = lot_names(config.lots);
    let suppliers = supplier_names(config.suppliers);
    let (class_names, profiles): (Vec<String>, Vec<Profile>) =
        (0..config.classes).map(profile).unzip();

    let mut lot_of: Vec<usize> = lot_counts(config, &mut rng)
        .iter()
        .enumerate()
        .flat_map(|(l, &c)| std::iter::repeat_n(l, c))
        .collect();
    lot_of.shuffle(&mut rng);
    let class_weights = vec![1.0; config.classes];
    let mut class_of: Vec<usize> = largest_remainder(config.particles, &class_weights)
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    class_of.shuffle(&mut rng);

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (min_px, max_px) = (config.image_size.0 as f64, config.image_size.1 as f64);
    let width = config.particles.to_string().len().max(5);
    let mut particles = Vec::with_capacity(config.particles);
    let mut sprites = Vec::with_capacity(config.particles);
    for i in 0..config.particles {
        let (c, lot) = (class_of[i], lot_of[i]);
        let p = &profiles[c];
        let z = |rng: &mut ChaCha8Rng| normal.sample(rng);

        let length = (p.log_length.0 + p.log_length.1 * z(&mut rng)).exp();
        let aspect = 1.0 + (p.log_excess_aspect.0 + p.log_excess_aspect.1 * z(&mut rng)).exp();
        let convexity = (p.convexity.0 + p.convexity.1 * z(&mut rng)).clamp(0.4, 1.0);
        let roughness = (p.roughness * (1.0 + 0.3 * z(&mut rng))).max(0.0);
        let breadth = length / aspect;
        let hull_area = PI / 4.0 * length * breadth;
        let area = convexity * hull_area;
        let perimeter = ellipse_perimeter(length / 2.0, breadth / 2.0)
            * (1.0 + roughness + 0.5 * (1.0 - convexity));
        let circularity = (4.0 * PI * area / (perimeter * perimeter)).min(1.0);
        let ecd = (4.0 * area / PI).sqrt();

        // supplier mix drifts with the class
        let supplier_weights: Vec<f64> = (0..config.suppliers)
            .map(|s| {
                1.0 + 0.5
                    * (2.0
                        * PI
                        * (s as f64 / config.suppliers as f64 + c as f64 / config.classes as f64))
                        .cos()
            })
            .collect();
        let total: f64 = supplier_weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let supplier = supplier_weights.iter().position(|w| {
            u -= w;
            u < 0.0
        });
        let supplier = supplier.unwrap_or(config.suppliers - 1);
        let month = lot * months.len() / config.lots;

        let id = format!("P{:0width$}", i + 1);
        let mut values = BTreeMap::new();
        values.insert(LOT_NUMBER.to_string(), Value::Category(lots[lot].clone()));
        values.insert(
            PRODUCTION_DATE.to_string(),
            Value::Category(months[month].clone()),
        );
        values.insert(
            SUPPLIER.to_string(),
            Value::Category(suppliers[supplier].clone()),
        );
        let numeric = [
            ("Elongation", 1.0 - breadth / length),
            ("Circularity", circularity),
            ("Convexity", convexity),
            ("Area", area),
            ("Perimeter", perimeter),
            ("Max Feret Diameter", length),
            ("Min Feret Diameter", breadth),
            ("Equivalent Circular Diameter", ecd),
            ("Convex Hull Area", hull_area),
        ];
        for (name, v) in numeric {
            values.insert(name.to_string(), Value::Number(round_sig(v)));
        }
        debug_assert!(schema
            .descriptors()
            .iter()
            .all(|d| values.contains_key(&d.name)));

        // one image pixel per µm, clamped to the configured range
        let angle = rng.random::<f64>() * PI;
        let margin = 1.2;
        let (a, b) = (length / 2.0, breadth / 2.0);
        let bbox_w =
            2.0 * ((a * angle.cos()).powi(2) + (b * angle.sin()).powi(2)).sqrt() * margin + 2.0;
        let bbox_h =
            2.0 * ((a * angle.sin()).powi(2) + (b * angle.cos()).powi(2)).sqrt() * margin + 2.0;
        let scale = (max_px / bbox_w.max(bbox_h)).min(1.0);
        let w = (bbox_w * scale).round().clamp(min_px, max_px) as u32;
        let h = (bbox_h * scale).round().clamp(min_px, max_px) as u32;
        let fit = ((w as f64 - 2.0) / (bbox_w * scale))
            .min((h as f64 - 2.0) / (bbox_h * scale))
            .min(1.0);
        let wobble = 0.6 * (1.0 - convexity) + roughness * 0.5;
        let harmonics =
            [0, 1, 2].map(|_| (wobble * rng.random::<f64>(), 2.0 * PI * rng.random::<f64>()));
        sprites.push(Sprite {
            width: w,
            height: h,
            semi_major: a * scale * fit,
            semi_minor: b * scale * fit,
            angle,
            hue: (p.hue + 6.0 * z(&mut rng)).rem_euclid(360.0),
            harmonics,
            noise_seed: rng.random(),
        });
        particles.push(ParticleRecord {
            id: id.clone(),
            image: format!("images/{id}.png"),
            values,
        });
    }
    let truth = class_of.iter().map(|&c| class_names[c].clone()).collect();
    Ok(SyntheticCorpus {
        dataset: Dataset {
            schema,
            particles,
            provenance: Provenance::Synthetic,
            created_at: SYNTH_EPOCH_MS,
        },
        truth,
        class_names,
        sprites,
    })
}

/// Writes the dataset, `truth.csv` and, when `images` is set, every
/// rendered image plus its thumbnails into `dir`.
pub fn write_corpus(
    corpus: &SyntheticCorpus,
    dir: &Path,
    thumb_edge: u32,
    images: bool,
) -> anyhow::Result<()> {
    write_dataset(&corpus.dataset, dir)?;
    fs::write(dir.join(TRUTH_FILE), corpus.truth_csv())
        .with_context(|| format!("writing {}", dir.display()))?;
    if !images {
        return Ok(());
    }
    fs::create_dir_all(dir.join("images"))?;
    let entries: Vec<ImageEntry> = corpus
        .dataset
        .particles
        .par_iter()
        .zip(corpus.sprites.par_iter())
        .map(|(p, sprite)| {
            let img = render_sprite(sprite).0;
            let original = dir.join(&p.image);
            img.save(&original)
                .with_context(|| format!("writing {}", original.display()))?;
            Ok(ImageEntry {
                id: p.id.clone(),
                original,
                thumbnail: Thumbnail::from_image(&img, thumb_edge),
            })
        })
        .collect::<anyhow::Result<_>>()?;
    ImageStore::from_entries(thumb_edge, entries).save(dir)?;
    Ok(())
}

/// Rounds to 9 significant digits, like a measurement export would.
fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let digits = 9 - 1 - v.abs().log10().floor() as i32;
    let f = 10f64.powi(digits);
    (v * f).round() / f
}

fn hsl_to_rgb(h: f64, s: f64, l: f64) -> [u8; 3] {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    [r, g, b].map(|v| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

fn pixel_noise(seed: u64, x: u32, y: u32) -> u64 {
    // splitmix64 of the pixel position
    let mut z = seed ^ ((x as u64) << 32 | y as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders a sprite on the noisy background. Returns the image and the
/// particle mask (`true` inside the outline), row-major.
pub fn render_sprite(s: &Sprite) -> (RgbaImage, Vec<bool>) {
    let (cx, cy) = (s.width as f64 / 2.0, s.height as f64 / 2.0);
    let (sin, cos) = s.angle.sin_cos();
    let body = hsl_to_rgb(s.hue, 0.75, 0.45);
    let mut img = RgbaImage::new(s.width, s.height);
    let mut mask = vec![false; (s.width * s.height) as usize];
    let span = 2 * BACKGROUND_NOISE as u64 + 1;
    for y in 0..s.height {
        for x in 0..s.width {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
            let theta = v.atan2(u);
            let (a, b) = (s.semi_major.max(0.5), s.semi_minor.max(0.5));
            let radius = a * b / ((b * theta.cos()).powi(2) + (a * theta.sin()).powi(2)).sqrt();
            let bump: f64 = s
                .harmonics
                .iter()
                .enumerate()
                .map(|(k, &(amp, ph))| amp * ((k as f64 + 2.0) * theta + ph).cos())
                .sum();
            let r = radius * (1.0 + bump / 3.0).max(0.3);
            let d = (u * u + v * v).sqrt();
            let noise = pixel_noise(s.noise_seed, x, y);
            let pixel = if d <= r {
                mask[(y * s.width + x) as usize] = true;
                let shade = 1.0 - 0.35 * (d / r).powi(2);
                body.map(|ch| (ch as f64 * shade).round() as u8)
            } else {
                let mut ch = BACKGROUND;
                for (i, c) in ch.iter_mut().enumerate() {
                    let offset = (noise >> (8 * i)) % span;
                    *c = (*c as u64 + offset - BACKGROUND_NOISE as u64) as u8;
                }
                ch
            };
            img.put_pixel(x, y, Rgba([pixel[0], pixel[1], pixel[2], 255]));
        }
    }
    (img, mask)
}
