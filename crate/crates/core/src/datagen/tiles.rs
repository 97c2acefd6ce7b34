//! Labeled glyph tiles: procedural stroke digits or a user-supplied directory.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LABELS, Color};
use crate::error::{Error, Result};

/// Grayscale `M×M` glyphs grouped by label `0..5`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileBank {
    cell_m: usize,
    tiles: Vec<Vec<Vec<u8>>>,
}

// Control polylines per digit in unit coordinates (x right, y down).
fn strokes(label: usize) -> Vec<Vec<(f64, f64)>> {
    match label {
        0 => {
            let ring = (0..=16)
                .map(|i| {
                    let th = i as f64 * std::f64::consts::TAU / 16.0;
                    (0.5 + 0.26 * th.cos(), 0.5 + 0.36 * th.sin())
                })
                .collect();
            vec![ring]
        }
        1 => vec![vec![(0.36, 0.3), (0.52, 0.14), (0.52, 0.86)]],
        2 => vec![vec![
            (0.26, 0.3),
            (0.38, 0.16),
            (0.58, 0.14),
            (0.72, 0.26),
            (0.7, 0.42),
            (0.26, 0.84),
            (0.78, 0.84),
        ]],
        3 => vec![vec![
            (0.26, 0.18),
            (0.72, 0.18),
            (0.46, 0.46),
            (0.72, 0.6),
            (0.66, 0.82),
            (0.26, 0.84),
        ]],
        4 => vec![vec![(0.62, 0.86), (0.62, 0.14), (0.22, 0.62), (0.8, 0.62)]],
        _ => unreachable!("labels are 0..5"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (cx * cx + cy * cy).sqrt()
}

/// One jittered binary glyph.
fn draw_glyph(label: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let scale = rng.random_range(0.88..1.12);
    let shift = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
    let half_width = (m as f64 / 10.0).max(0.6) * rng.random_range(0.85..1.15);
    let polylines: Vec<Vec<(f64, f64)>> = strokes(label)
        .into_iter()
        .map(|line| {
            line.into_iter()
                .map(|(x, y)| {
                    let jx = rng.random_range(-0.06..0.06);
                    let jy = rng.random_range(-0.06..0.06);
                    let px = 0.5 + (x - 0.5) * scale + shift.0 + jx;
                    let py = 0.5 + (y - 0.5) * scale + shift.1 + jy;
                    (px * m as f64, py * m as f64)
                })
                .collect()
        })
        .collect();
    let mut out = vec![0u8; m * m];
    for y in 0..m {
        for x in 0..m {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let hit = polylines
                .iter()
                .any(|line| line.windows(2).any(|w| segment_distance(p, w[0], w[1]) <= half_width));
            if hit {
                out[y * m + x] = 255;
            }
        }
    }
    out
}

impl TileBank {
    /// `per_label` distinct jittered glyphs per label, a pure function of `seed`.
    pub fn procedural(cell_m: usize, per_label: usize, seed: u64) -> Result<Self> {
        if cell_m == 0 {
            return Err(Error::Config("cell_m must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tiles = Vec::with_capacity(LABELS);
        for label in 0..LABELS {
            let mut group: Vec<Vec<u8>> = Vec::with_capacity(per_label);
            let mut attempts = 0;
            while group.len() < per_label {
                attempts += 1;
                if attempts > 64 * per_label.max(1) {
                    return Err(Error::Config(format!(
                        "could not draw {per_label} distinct glyphs for label {label} at M={cell_m}"
                    )));
                }
                let g = draw_glyph(label, cell_m, &mut rng);
                if g.iter().any(|&v| v != 0) && !group.contains(&g) {
                    group.push(g);
                }
            }
            tiles.push(group);
        }
        let bank = TileBank { cell_m, tiles };
        bank.validate()?;
        Ok(bank)
    }

    /// Load `<dir>/<label>/*.png` for labels `0..5`, in file-name order,
    /// converted to grayscale and resized to `M×M` where needed.
    pub fn from_dir(dir: impl AsRef<Path>, cell_m: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let mut tiles = Vec::with_capacity(LABELS);
        for label in 0..LABELS {
            let sub = dir.join(label.to_string());
            let mut paths: Vec<_> = std::fs::read_dir(&sub)
                .map_err(|e| Error::io(&sub, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("png")))
                .collect();
            paths.sort();
            let mut group = Vec::with_capacity(paths.len());
            for path in paths {
                let img = image::open(&path)
                    .map_err(|source| Error::Image {
                        path: path.clone(),
                        source,
                    })?
                    .into_luma8();
                let img = if img.width() as usize == cell_m && img.height() as usize == cell_m {
                    img
                } else {
                    image::imageops::resize(&img, cell_m as u32, cell_m as u32, image::imageops::FilterType::Triangle)
                };
                group.push(img.into_raw());
            }
            tiles.push(group);
        }
        let bank = TileBank { cell_m, tiles };
        bank.validate()?;
        Ok(bank)
    }

    /// Every label needs at least two distinct tiles for same-label noise.
    pub fn validate(&self) -> Result<()> {
        for (label, group) in self.tiles.iter().enumerate() {
            let distinct = group.iter().enumerate().filter(|(i, g)| !group[..*i].contains(g)).count();
            if distinct < 2 {
                return Err(Error::Config(format!(
                    "label {label} has {distinct} distinct tile(s); at least 2 are required"
                )));
            }
        }
        Ok(())
    }

    pub fn cell_m(&self) -> usize {
        self.cell_m
    }

    pub fn len(&self, label: usize) -> usize {
        self.tiles.get(label).map_or(0, Vec::len)
    }

    pub fn tile(&self, label: usize, idx: usize) -> Result<&[u8]> {
        self.tiles
            .get(label)
            .and_then(|g| g.get(idx))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Resolution(format!("tile bank has no tile {idx} for label {label}")))
    }

    /// RGB bytes of a tile tinted with `color`: `channel = round(c · v / 255)`.
    pub fn recolor(&self, label: usize, idx: usize, color: Color) -> Result<Vec<u8>> {
        let rgb = color.rgb();
        let tile = self.tile(label, idx)?;
        let mut out = Vec::with_capacity(tile.len() * 3);
        for &v in tile {
            for c in rgb {
                out.push(((c as u32 * v as u32 + 127) / 255) as u8);
            }
        }
        Ok(out)
    }
}
