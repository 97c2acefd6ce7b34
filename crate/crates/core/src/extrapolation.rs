//! Completion front half: synthesize a program from the known part of an
//! image, extend it over the whole grid, and render it onto the partial image.
//!
//! Extension is rule-based: every loop keeps its stride, offset and component
//! and runs as many iterations as still fit in the grid. An axis observed for
//! a single iteration carries no evidence of its stride (every `(a, b)` with
//! the same `a + b` covers the same cells), so by default it is not extended.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{all_cells, CellIndex, CellMask, GridImage, Rgb};
use crate::program::{Pair, Program, Sketch, StructureRendering};
use crate::synthesis::{ScoredProgram, SynthesisConfig, SynthesisProblem};

/// Fill color of unknown cells.
pub const SENTINEL: Rgb = [255, 0, 255];

const MASK_MAGIC: &str = "gridsynth-mask v1";

/// An image of which only the cells in `known` are observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialImage {
    image: GridImage,
    known: CellMask,
}

impl PartialImage {
    /// Unknown cells are overwritten with [`SENTINEL`].
    pub fn new(mut image: GridImage, known: CellMask) -> Result<Self> {
        if known.grid_n() != image.grid_n() {
            return Err(Error::Shape(format!(
                "mask is {0}x{0} but the image grid is {1}x{1}",
                known.grid_n(),
                image.grid_n()
            )));
        }
        if known.is_empty() {
            return Err(Error::InvalidInput("partial image has no known cells".into()));
        }
        for c in known.complement().cells() {
            image.fill_cell(c, SENTINEL)?;
        }
        Ok(PartialImage { image, known })
    }

    /// Hide the bottom `fraction` of grid rows (rounded down, at least one row stays known).
    pub fn occlude_bottom(full: &GridImage, fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidInput(format!("occlusion must be in [0, 1), got {fraction}")));
        }
        let n = full.grid_n();
        let hidden = (((fraction * n as f64) + 1e-9).floor() as usize).min(n - 1);
        let known = CellMask::from_cells(n, all_cells(n).filter(|c| c.t <= n - hidden))?;
        PartialImage::new(full.clone(), known)
    }

    pub fn image(&self) -> &GridImage {
        &self.image
    }

    pub fn known(&self) -> &CellMask {
        &self.known
    }

    pub fn load(png: impl AsRef<Path>, mask: impl AsRef<Path>, grid_n: usize, cell_m: usize) -> Result<Self> {
        let mask_path = mask.as_ref();
        let text = std::fs::read_to_string(mask_path).map_err(|e| Error::io(mask_path, e))?;
        let known = parse_mask(&text)?;
        if known.grid_n() != grid_n {
            return Err(Error::Shape(format!(
                "mask {} is for N={}, expected N={grid_n}",
                mask_path.display(),
                known.grid_n()
            )));
        }
        let image = GridImage::load_png(png, grid_n, cell_m)?;
        PartialImage::new(image, known)
    }

    pub fn save(&self, png: impl AsRef<Path>, mask: impl AsRef<Path>) -> Result<()> {
        self.image.save_png(png)?;
        let mask = mask.as_ref();
        std::fs::write(mask, mask_to_text(&self.known)).map_err(|e| Error::io(mask, e))
    }
}

/// `gridsynth-mask v1 N=<n>` followed by `n` lines of `0`/`1`.
pub fn mask_to_text(mask: &CellMask) -> String {
    let n = mask.grid_n();
    let mut out = format!("{MASK_MAGIC} N={n}\n");
    for t in 1..=n {
        for u in 1..=n {
            out.push(if mask.get(CellIndex::new(t, u)) { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

pub fn parse_mask(text: &str) -> Result<CellMask> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = body.split('\n');
    let header = lines.next().unwrap_or_default();
    let n_text = header
        .strip_prefix(MASK_MAGIC)
        .and_then(|rest| rest.strip_prefix(" N="))
        .ok_or_else(|| Error::parse(1, "header", format!("expected `{MASK_MAGIC} N=<int>`")))?;
    let n: usize = n_text
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::parse(1, "N", format!("expected a positive integer, got `{n_text}`")))?;
    let mut mask = CellMask::empty(n);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if rows == n {
            return Err(Error::parse(line_no, "row", format!("more than {n} rows")));
        }
        if line.len() != n {
            return Err(Error::parse(line_no, "row", format!("expected {n} characters, got {}", line.len())));
        }
        for (j, ch) in line.chars().enumerate() {
            let bit = match ch {
                '0' => false,
                '1' => true,
                other => return Err(Error::parse(line_no, "row", format!("unexpected character `{other}`"))),
            };
            mask.set(CellIndex::new(rows + 1, j + 1), bit);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(rows + 2, "row", format!("expected {n} rows, got {rows}")));
    }
    Ok(mask)
}

/// Greedy synthesis restricted to the known cells: `Ĉ` holds known cells only,
/// tensor entries touching unknown cells are left out of the objective, and
/// every sketch must cover known cells only.
pub fn synthesize_partial(p: &PartialImage, cfg: &SynthesisConfig) -> Result<ScoredProgram> {
    SynthesisProblem::from_image(&p.image, cfg, Some(&p.known))?.greedy(cfg)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtrapolateOptions {
    /// Also extend loops toward smaller indices by lowering the offset.
    pub extend_backward: bool,
    /// Also extend axes that ran for a single iteration, using whatever
    /// stride the sketch happens to carry.
    pub extend_single: bool,
}

/// Extend each loop independently to as many iterations as fit in a
/// `grid_n × grid_n` grid.
pub fn extrapolate(p: &Program, grid_n: usize) -> Result<Program> {
    extrapolate_with(p, grid_n, ExtrapolateOptions::default())
}

pub fn extrapolate_with(p: &Program, grid_n: usize, opts: ExtrapolateOptions) -> Result<Program> {
    if grid_n < p.grid_n() {
        return Err(Error::InvalidInput(format!(
            "cannot extrapolate a {0}x{0} program onto a smaller {grid_n}x{grid_n} grid",
            p.grid_n()
        )));
    }
    let pairs = p
        .pairs()
        .iter()
        .map(|pair| {
            let s = pair.sketch;
            let (n, b) = extend_axis(s.n, s.a, s.b, grid_n, opts);
            let (n2, b2) = extend_axis(s.n2, s.a2, s.b2, grid_n, opts);
            Pair::new(Sketch::new(n, s.a, b, n2, s.a2, b2), pair.component.clone())
        })
        .collect();
    Program::new(grid_n, p.cell_m(), pairs)
}

fn extend_axis(n: usize, a: usize, b: usize, grid_n: usize, opts: ExtrapolateOptions) -> (usize, usize) {
    if n == 1 && !opts.extend_single {
        return (n, b);
    }
    let b = if opts.extend_backward { b % a } else { b };
    ((grid_n - b) / a, b)
}

/// Every intermediate product of the completion pipeline.
#[derive(Debug, Clone)]
pub struct Completion {
    /// Program synthesized from the known cells.
    pub partial_program: ScoredProgram,
    /// The extrapolated program.
    pub program: Program,
    /// Program rendered onto the partial image.
    pub structure: StructureRendering,
    /// Final image with every cell filled.
    pub image: GridImage,
}

pub fn complete(p: &PartialImage, cfg: &SynthesisConfig, opts: ExtrapolateOptions) -> Result<Completion> {
    let n = p.image.grid_n();
    let partial_program = synthesize_partial(p, cfg)?;
    let program = extrapolate_with(&partial_program.program, n, opts)?;
    let structure = program.execute_onto(&p.image, &p.known, None)?;

    let filled = p.known.union(&structure.covered);
    let sources: Vec<CellIndex> = filled.cells().collect();
    let mut image = structure.image.clone();
    for cell in filled.complement().cells() {
        // `cells()` is row-major, so `min_by_key` keeps the smallest cell on ties
        let nearest = *sources
            .iter()
            .min_by_key(|s| s.manhattan(cell))
            .expect("a partial image always has a known cell");
        let block = structure.image.subimage(nearest)?;
        image.write_cell(cell, block.pixels())?;
    }
    Ok(Completion {
        partial_program,
        program,
        structure,
        image,
    })
}

/// Synthesize, extrapolate, render onto the partial image, then fill any
/// remaining cell from its nearest filled neighbour.
pub fn complete_baseline(p: &PartialImage, cfg: &SynthesisConfig) -> Result<GridImage> {
    Ok(complete(p, cfg, ExtrapolateOptions::default())?.image)
}
