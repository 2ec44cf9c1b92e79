//! Thumbnails and their transparent variants.
//!
//! Thumbnails are computed once at ingest and stored as
//! `thumbs/<row>.png` (original colors) and `thumbs/<row>.t.png`
//! (background keyed out to alpha 0). Keying estimates the background
//! from the image border, which assumes a near-uniform background.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Cursor};
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{ImageFormat, Rgba, RgbaImage};
use rayon::prelude::*;

use daedalus_core::Dataset;

pub const DEFAULT_THUMB_EDGE: u32 = 64;
/// Largest per-channel distance from the background color that is keyed out.
pub const KEY_TOLERANCE: u8 = 12;
pub const THUMB_DIR: &str = "thumbs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThumbMode {
    #[default]
    Original,
    Transparent,
}

/// Size of a thumbnail with longest edge at most `edge`, aspect preserved,
/// never upscaled.
pub fn thumbnail_size(width: u32, height: u32, edge: u32) -> (u32, u32) {
    let longest = width.max(height);
    if longest <= edge {
        return (width, height);
    }
    let scale = edge as f64 / longest as f64;
    let fit = |v: u32| ((v as f64 * scale).round() as u32).clamp(1, edge);
    (fit(width), fit(height))
}

pub fn make_thumbnail(img: &RgbaImage, edge: u32) -> RgbaImage {
    let (w, h) = thumbnail_size(img.width(), img.height(), edge);
    if (w, h) == img.dimensions() {
        return img.clone();
    }
    imageops::resize(img, w, h, FilterType::Triangle)
}

/// Per-channel median of the border pixels.
pub fn background_color(img: &RgbaImage) -> [u8; 3] {
    let (w, h) = img.dimensions();
    let mut border = Vec::with_capacity(2 * (w + h) as usize);
    for x in 0..w {
        border.push(img.get_pixel(x, 0).0);
        border.push(img.get_pixel(x, h - 1).0);
    }
    for y in 1..h.saturating_sub(1) {
        border.push(img.get_pixel(0, y).0);
        border.push(img.get_pixel(w - 1, y).0);
    }
    [0, 1, 2].map(|c| {
        let mut v: Vec<u8> = border.iter().map(|p| p[c]).collect();
        v.sort_unstable();
        v[v.len() / 2]
    })
}

/// Sets alpha to 0 for pixels within `tolerance` of the background color
/// on every channel.
pub fn key_background(img: &RgbaImage, tolerance: u8) -> RgbaImage {
    let bg = background_color(img);
    let mut out = img.clone();
    for p in out.pixels_mut() {
        if p.0[..3]
            .iter()
            .zip(bg)
            .all(|(&c, b)| c.abs_diff(b) <= tolerance)
        {
            p.0[3] = 0;
        }
    }
    out
}

pub fn encode_png(img: &RgbaImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory");
    out.into_inner()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thumbnail {
    pub png: Vec<u8>,
    pub transparent: Vec<u8>,
    pub width: u32,
    pub height: u32,
    pub placeholder: bool,
}

impl Thumbnail {
    pub fn from_image(img: &RgbaImage, edge: u32) -> Self {
        let thumb = make_thumbnail(img, edge);
        let keyed = make_thumbnail(&key_background(img, KEY_TOLERANCE), edge);
        Thumbnail {
            png: encode_png(&thumb),
            transparent: encode_png(&keyed),
            width: thumb.width(),
            height: thumb.height(),
            placeholder: false,
        }
    }

    /// Gray square with a dark cross, for images that could not be read.
    pub fn placeholder(edge: u32) -> Self {
        let img = RgbaImage::from_fn(edge, edge, |x, y| {
            if x == y || x + y + 1 == edge {
                Rgba([90, 90, 90, 255])
            } else {
                Rgba([200, 200, 200, 255])
            }
        });
        Thumbnail {
            placeholder: true,
            ..Thumbnail::from_image(&img, edge)
        }
    }

    pub fn bytes(&self, mode: ThumbMode) -> &[u8] {
        match mode {
            ThumbMode::Original => &self.png,
            ThumbMode::Transparent => &self.transparent,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImageEntry {
    pub id: String,
    pub original: PathBuf,
    pub thumbnail: Thumbnail,
}

/// Thumbnails of every particle of a dataset, in dataset order.
#[derive(Debug, Clone)]
pub struct ImageStore {
    pub edge: u32,
    entries: Vec<ImageEntry>,
    index: HashMap<String, usize>,
}

impl ImageStore {
    pub fn from_entries(edge: u32, entries: Vec<ImageEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), i))
            .collect();
        ImageStore {
            edge,
            entries,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ImageEntry> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[ImageEntry] {
        &self.entries
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| e.thumbnail.placeholder)
            .map(|e| e.id.as_str())
    }

    /// Writes `thumbs/<row>.png` and `thumbs/<row>.t.png` under `root`.
    pub fn save(&self, root: &Path) -> io::Result<()> {
        let dir = root.join(THUMB_DIR);
        fs::create_dir_all(&dir)?;
        self.entries
            .par_iter()
            .enumerate()
            .try_for_each(|(row, e)| {
                fs::write(thumb_path(root, row, ThumbMode::Original), &e.thumbnail.png)?;
                fs::write(
                    thumb_path(root, row, ThumbMode::Transparent),
                    &e.thumbnail.transparent,
                )
            })
    }
}

pub fn thumb_path(root: &Path, row: usize, mode: ThumbMode) -> PathBuf {
    let name = match mode {
        ThumbMode::Original => format!("{row}.png"),
        ThumbMode::Transparent => format!("{row}.t.png"),
    };
    root.join(THUMB_DIR).join(name)
}

/// Builds thumbnails for every particle from images under `root` (paths in
/// the dataset are relative to it). Missing or unreadable files get a
/// placeholder and one warning each; only an unreadable `root` is an error.
pub fn load_images(
    dataset: &Dataset,
    root: &Path,
    edge: u32,
) -> io::Result<(ImageStore, Vec<String>)> {
    fs::read_dir(root)?;
    let results: Vec<(ImageEntry, Option<String>)> = dataset
        .particles
        .par_iter()
        .map(|p| {
            let original = root.join(&p.image);
            let (thumbnail, warning) = match image::open(&original) {
                Ok(img) => (Thumbnail::from_image(&img.to_rgba8(), edge), None),
                Err(e) => (
                    Thumbnail::placeholder(edge),
                    Some(format!("{}: {}: {e}", p.id, original.display())),
                ),
            };
            (
                ImageEntry {
                    id: p.id.clone(),
                    original,
                    thumbnail,
                },
                warning,
            )
        })
        .collect();
    let mut warnings = Vec::new();
    let entries = results
        .into_iter()
        .map(|(e, w)| {
            warnings.extend(w);
            e
        })
        .collect();
    Ok((ImageStore::from_entries(edge, entries), warnings))
}
