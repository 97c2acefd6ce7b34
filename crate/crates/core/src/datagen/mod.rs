//! Synthetic corpus generator: correlated loop programs over labeled, colored
//! glyph tiles, rendered with optional per-iteration tile noise.
//!
//! Each pair carries a latent property (label, color). The first property is
//! uniform; later ones follow a Markov transition matrix, and sketch
//! parameters are drawn from per-property rounded normals.

mod tiles;

use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use tiles::TileBank;

use crate::error::{Error, Result};
use crate::extrapolation::{mask_to_text, PartialImage};
use crate::grid::{GridImage, Rgb};
use crate::program::{Component, Pair, Program, Sketch};

pub const LABELS: usize = 5;
pub const PROPERTIES: usize = LABELS * 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
    Orange,
    Green,
    Yellow,
}

impl Color {
    pub const ALL: [Color; 5] = [Color::Red, Color::Blue, Color::Orange, Color::Green, Color::Yellow];

    pub fn rgb(self) -> Rgb {
        match self {
            Color::Red => [230, 40, 40],
            Color::Blue => [40, 80, 230],
            Color::Orange => [245, 150, 30],
            Color::Green => [40, 190, 70],
            Color::Yellow => [240, 220, 40],
        }
    }
}

/// Digit label and color of a pair's component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentProperty {
    pub label: usize,
    pub color: Color,
}

impl LatentProperty {
    /// Index in `0..25`: `label · 5 + color`.
    pub fn index(self) -> usize {
        self.label * 5 + Color::ALL.iter().position(|&c| c == self.color).expect("listed")
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < PROPERTIES, "property index {i} out of range");
        LatentProperty {
            label: i / 5,
            color: Color::ALL[i % 5],
        }
    }

    pub fn all() -> impl Iterator<Item = LatentProperty> {
        (0..PROPERTIES).map(LatentProperty::from_index)
    }
}

/// Normal parameters for `(n, a, b, n2, a2, b2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchStats {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl Default for SketchStats {
    fn default() -> Self {
        SketchStats {
            mean: [3.0, 2.0, 1.0, 3.0, 2.0, 1.0],
            std: [1.0; 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileSource {
    Procedural,
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub grid_n: usize,
    pub cell_m: usize,
    pub k: usize,
    /// Row-stochastic, indexed by [`LatentProperty::index`].
    pub transition: Vec<Vec<f64>>,
    pub sketch_stats: Vec<SketchStats>,
    /// Resample a different same-label tile for every loop iteration.
    pub noise: bool,
    pub seed: u64,
    pub tile_source: TileSource,
    /// Glyphs per label when `tile_source` is procedural.
    pub tiles_per_label: usize,
    pub background: Rgb,
    /// Raise every sampled loop count to the largest that fits the grid.
    pub axis_maximal: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            grid_n: 9,
            cell_m: 16,
            k: 12,
            transition: default_transition(),
            sketch_stats: vec![SketchStats::default(); PROPERTIES],
            noise: true,
            seed: 0,
            tile_source: TileSource::Procedural,
            tiles_per_label: 8,
            background: [40, 40, 40],
            axis_maximal: false,
        }
    }
}

/// 0.6 self-transition, 0.4 split over successors `p+1`, `p+6`, `p+12` (mod 25).
pub fn default_transition() -> Vec<Vec<f64>> {
    (0..PROPERTIES)
        .map(|p| {
            let mut row = vec![0.0; PROPERTIES];
            row[p] = 0.6;
            for step in [1, 6, 12] {
                row[(p + step) % PROPERTIES] += 0.4 / 3.0;
            }
            row
        })
        .collect()
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n == 0 || self.cell_m == 0 || self.k == 0 {
            return Err(Error::Config("grid_n, cell_m and k must be at least 1".into()));
        }
        if self.transition.len() != PROPERTIES || self.transition.iter().any(|r| r.len() != PROPERTIES) {
            return Err(Error::Config(format!("transition must be {PROPERTIES}x{PROPERTIES}")));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(Error::Config(format!("transition row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("transition row {i} sums to {sum}, not 1")));
            }
        }
        if self.sketch_stats.len() != PROPERTIES {
            return Err(Error::Config(format!("sketch_stats needs {PROPERTIES} entries")));
        }
        for (i, s) in self.sketch_stats.iter().enumerate() {
            if s.mean.iter().any(|m| !m.is_finite()) || s.std.iter().any(|&d| !d.is_finite() || d < 0.0) {
                return Err(Error::Config(format!(
                    "sketch_stats[{i}]: means must be finite and stds finite and nonnegative"
                )));
            }
        }
        if self.tile_source == TileSource::Procedural && self.tiles_per_label < 2 {
            return Err(Error::Config("tiles_per_label must be at least 2".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Whether the sketch statistics and transitions are the built-in placeholders.
    pub fn uses_placeholder_stats(&self) -> bool {
        self.transition == default_transition() && self.sketch_stats == vec![SketchStats::default(); PROPERTIES]
    }

    pub fn tile_bank(&self) -> Result<TileBank> {
        match &self.tile_source {
            TileSource::Procedural => TileBank::procedural(self.cell_m, self.tiles_per_label, derive_seed(self.seed, u64::MAX)),
            TileSource::Directory(dir) => TileBank::from_dir(dir, self.cell_m),
        }
    }
}

/// Per-instance seed: a SplitMix64 finalizer over the spec seed and index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A pair's latent property and the tile its component was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairAnnotation {
    pub property: LatentProperty,
    pub tile: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledProgram {
    /// Components are raw recolored tiles.
    pub program: Program,
    pub annotations: Vec<PairAnnotation>,
}

fn rounded_normal<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> i64 {
    let z: f64 = rng.sample(StandardNormal);
    (mean + std * z).round() as i64
}

fn repair_axis(n: i64, a: i64, b: i64, grid_n: usize, maximal: bool) -> (usize, usize, usize) {
    let g = grid_n as i64;
    let a = a.clamp(1, g);
    let b = b.clamp(0, g - 1);
    let mut n = n.clamp(1, g);
    let mut b = b;
    if a * n + b > g {
        n = ((g - b) / a).max(1);
    }
    if a * n + b > g {
        b = g - a;
    }
    if maximal {
        n = (g - b) / a;
    }
    (n as usize, a as usize, b as usize)
}

fn sample_sketch<R: Rng + ?Sized>(stats: &SketchStats, grid_n: usize, maximal: bool, rng: &mut R) -> Sketch {
    let v: Vec<i64> = (0..6).map(|i| rounded_normal(stats.mean[i], stats.std[i], rng)).collect();
    let (n, a, b) = repair_axis(v[0], v[1], v[2], grid_n, maximal);
    let (n2, a2, b2) = repair_axis(v[3], v[4], v[5], grid_n, maximal);
    Sketch::new(n, a, b, n2, a2, b2)
}

pub fn sample_program<R: Rng + ?Sized>(spec: &GeneratorSpec, bank: &TileBank, rng: &mut R) -> Result<SampledProgram> {
    spec.validate()?;
    if bank.cell_m() != spec.cell_m {
        return Err(Error::Config(format!(
            "tile bank is for M={}, spec has M={}",
            bank.cell_m(),
            spec.cell_m
        )));
    }
    let mut pairs = Vec::with_capacity(spec.k);
    let mut annotations = Vec::with_capacity(spec.k);
    let mut prop = rng.random_range(0..PROPERTIES);
    for h in 0..spec.k {
        if h > 0 {
            let row = WeightedIndex::new(&spec.transition[prop]).expect("validated row");
            prop = row.sample(rng);
        }
        let property = LatentProperty::from_index(prop);
        let sketch = sample_sketch(&spec.sketch_stats[prop], spec.grid_n, spec.axis_maximal, rng);
        let count = bank.len(property.label);
        if count == 0 {
            return Err(Error::Resolution(format!("tile bank has no tiles for label {}", property.label)));
        }
        let tile = rng.random_range(0..count);
        let raw = bank.recolor(property.label, tile, property.color)?;
        pairs.push(Pair::new(sketch, Component::Raw(raw)));
        annotations.push(PairAnnotation { property, tile });
    }
    Ok(SampledProgram {
        program: Program::new(spec.grid_n, spec.cell_m, pairs)?,
        annotations,
    })
}

/// Execute over the spec background; with noise on, every loop iteration
/// blits a different tile of the pair's label, recolored identically.
pub fn render_noisy<R: Rng + ?Sized>(
    sampled: &SampledProgram,
    spec: &GeneratorSpec,
    bank: &TileBank,
    rng: &mut R,
) -> Result<GridImage> {
    let p = &sampled.program;
    let mut img = GridImage::filled(p.grid_n(), p.cell_m(), spec.background)?;
    for (pair, ann) in p.pairs().iter().zip(&sampled.annotations) {
        let label = ann.property.label;
        let count = bank.len(label);
        if spec.noise && count < 2 {
            return Err(Error::Resolution(format!("noise needs two tiles for label {label}, bank has {count}")));
        }
        let fixed = match &pair.component {
            Component::Raw(raw) if !spec.noise => Some(raw.clone()),
            _ => None,
        };
        for cell in pair.sketch.cover() {
            let block = match &fixed {
                Some(raw) => raw.clone(),
                None => {
                    let r = rng.random_range(0..count - 1);
                    let idx = if r >= ann.tile { r + 1 } else { r };
                    bank.recolor(label, idx, ann.property.color)?
                }
            };
            img.write_cell(cell, &block)?;
        }
    }
    Ok(img)
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub index: u64,
    pub seed: u64,
    pub sampled: SampledProgram,
    pub full: GridImage,
    pub partial: PartialImage,
}

/// Instance `index` of the corpus defined by `spec`.
pub fn generate_instance(spec: &GeneratorSpec, bank: &TileBank, index: u64, occlusion: f64) -> Result<Instance> {
    instance_from_seed(spec, bank, index, derive_seed(spec.seed, index), occlusion)
}

pub fn instance_from_seed(
    spec: &GeneratorSpec,
    bank: &TileBank,
    index: u64,
    seed: u64,
    occlusion: f64,
) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled = sample_program(spec, bank, &mut rng)?;
    let full = render_noisy(&sampled, spec, bank, &mut rng)?;
    let partial = PartialImage::occlude_bottom(&full, occlusion)?;
    Ok(Instance {
        index,
        seed,
        sampled,
        full,
        partial,
    })
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: u64,
    pub seed: u64,
    pub spec_hash: String,
    pub occlusion: f64,
    pub full: String,
    pub partial: String,
    pub mask: String,
    pub prog: String,
    pub properties: Vec<PairAnnotation>,
    pub placeholder_stats: bool,
}

pub const MANIFEST: &str = "manifest.jsonl";
pub const SPEC_FILE: &str = "spec.json";

impl ManifestEntry {
    fn new(spec: &GeneratorSpec, inst: &Instance, occlusion: f64) -> Self {
        let stem = format!("{:04}", inst.index);
        ManifestEntry {
            index: inst.index,
            seed: inst.seed,
            spec_hash: spec.hash(),
            occlusion,
            full: format!("{stem}_full.png"),
            partial: format!("{stem}_partial.png"),
            mask: format!("{stem}.mask"),
            prog: format!("{stem}.prog"),
            properties: inst.sampled.annotations.clone(),
            placeholder_stats: spec.uses_placeholder_stats(),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_instance(dir: &Path, entry: &ManifestEntry, inst: &Instance) -> Result<()> {
    write_file(&dir.join(&entry.full), &inst.full.to_png_bytes()?)?;
    write_file(&dir.join(&entry.partial), &inst.partial.image().to_png_bytes()?)?;
    write_file(&dir.join(&entry.mask), mask_to_text(inst.partial.known()).as_bytes())?;
    write_file(&dir.join(&entry.prog), inst.sampled.program.to_text().as_bytes())
}

/// Write `count` instances plus `manifest.jsonl` and `spec.json` into `dir`.
/// Instances are generated in parallel; output does not depend on thread count.
pub fn generate_corpus(spec: &GeneratorSpec, count: usize, occlusion: f64, dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    if count == 0 {
        return Err(Error::InvalidInput("count must be at least 1".into()));
    }
    spec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bank = spec.tile_bank()?;
    let entries = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let inst = generate_instance(spec, &bank, i, occlusion)?;
            let entry = ManifestEntry::new(spec, &inst, occlusion);
            write_instance(dir, &entry, &inst)?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut manifest = String::new();
    for e in &entries {
        manifest.push_str(&serde_json::to_string(e).expect("entry serializes"));
        manifest.push('\n');
    }
    write_file(&dir.join(MANIFEST), manifest.as_bytes())?;
    let spec_json = serde_json::to_string_pretty(spec).expect("spec serializes");
    write_file(&dir.join(SPEC_FILE), format!("{spec_json}\n").as_bytes())?;
    Ok(entries)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = dir.as_ref().join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(i + 1, "manifest", e.to_string())))
        .collect()
}

pub fn read_spec(dir: impl AsRef<Path>) -> Result<GeneratorSpec> {
    let path = dir.as_ref().join(SPEC_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Rewrite every instance of an existing corpus from its manifest seeds into `out`.
pub fn regenerate_corpus(corpus: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<()> {
    let spec = read_spec(&corpus)?;
    let entries = read_manifest(&corpus)?;
    let out = out.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let bank = spec.tile_bank()?;
    let hash = spec.hash();
    entries.par_iter().try_for_each(|e| {
        if e.spec_hash != hash {
            return Err(Error::Corpus {
                instance: e.index.to_string(),
                message: "manifest spec hash does not match spec.json".into(),
            });
        }
        let inst = instance_from_seed(&spec, &bank, e.index, e.seed, e.occlusion)?;
        write_instance(out, e, &inst)
    })
}
