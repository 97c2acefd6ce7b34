//! The loop DSL.
//!
//! A [`Sketch`] is the doubly nested loop
//!
//! ```text
//! for (i, j) in [1..=n] × [1..=n2]:
//!     draw(a·i + b, a2·j + b2, ??)
//! ```
//!
//! and a [`Program`] is an ordered list of sketches whose holes are filled with
//! [`Component`]s.

mod text;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::tensor::{row_mask_of, words_per_row};
use crate::grid::{CellIndex, CellMask, GridImage, Rgb, SimilarityTensor};

/// Loop parameters `(n, a, b)` for rows and `(n2, a2, b2)` for columns.
///
/// The derived ordering is lexicographic on `(n, a, b, n2, a2, b2)`, which is
/// the enumeration and tie-break order used by synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sketch {
    pub n: usize,
    pub a: usize,
    pub b: usize,
    pub n2: usize,
    pub a2: usize,
    pub b2: usize,
}

impl Sketch {
    pub const fn new(n: usize, a: usize, b: usize, n2: usize, a2: usize, b2: usize) -> Self {
        Sketch { n, a, b, n2, a2, b2 }
    }

    /// Loop bounds against an `N×N` grid: counts and strides ≥ 1, `a·n + b ≤ N`, `a2·n2 + b2 ≤ N`.
    pub fn validate(&self, grid_n: usize) -> Result<()> {
        if self.n == 0 || self.n2 == 0 || self.a == 0 || self.a2 == 0 {
            return Err(Error::InvalidInput(format!(
                "sketch {self:?}: loop counts and strides must be at least 1"
            )));
        }
        if !axis_fits(self.n, self.a, self.b, grid_n) || !axis_fits(self.n2, self.a2, self.b2, grid_n) {
            return Err(Error::InvalidInput(format!(
                "sketch {self:?} does not fit a grid of size {grid_n}"
            )));
        }
        Ok(())
    }

    pub fn is_valid(&self, grid_n: usize) -> bool {
        self.validate(grid_n).is_ok()
    }

    /// Number of cells written, `n · n2`.
    pub fn cover_len(&self) -> usize {
        self.n * self.n2
    }

    /// Cells written by the loop, in iteration (row-major) order.
    pub fn cover(&self) -> Vec<CellIndex> {
        let mut cells = Vec::with_capacity(self.cover_len());
        for i in 1..=self.n {
            for j in 1..=self.n2 {
                cells.push(CellIndex::new(self.a * i + self.b, self.a2 * j + self.b2));
            }
        }
        cells
    }

    pub(crate) fn cover_linear(&self, grid_n: usize) -> Vec<usize> {
        self.cover().into_iter().map(|c| c.linear(grid_n)).collect()
    }

    pub fn cover_mask(&self, grid_n: usize) -> Result<CellMask> {
        self.validate(grid_n)?;
        CellMask::from_cells(grid_n, self.cover())
    }

    /// `B^(s)`: entry `(p, q)` is set iff both cells are in the cover.
    pub fn tensor(&self, grid_n: usize) -> Result<SimilarityTensor> {
        self.validate(grid_n)?;
        let cover = self.cover_linear(grid_n);
        let row = row_mask_of(grid_n, &cover);
        let mut t = SimilarityTensor::zeros(grid_n);
        t.or_square(&cover, &row);
        Ok(t)
    }
}

fn axis_fits(n: usize, a: usize, b: usize, grid_n: usize) -> bool {
    a.checked_mul(n)
        .and_then(|an| an.checked_add(b))
        .is_some_and(|end| end <= grid_n)
}

/// Perceptual data filling a sketch's hole.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    /// A cell of the source image the program was synthesized from.
    Cell(CellIndex),
    /// Embedded `M×M` RGB8 pixels, row-major.
    Raw(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub sketch: Sketch,
    pub component: Component,
}

impl Pair {
    pub fn new(sketch: Sketch, component: Component) -> Self {
        Pair { sketch, component }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    grid_n: usize,
    cell_m: usize,
    pairs: Vec<Pair>,
}

impl Program {
    pub fn empty(grid_n: usize, cell_m: usize) -> Self {
        Program {
            grid_n,
            cell_m,
            pairs: Vec::new(),
        }
    }

    pub fn new(grid_n: usize, cell_m: usize, pairs: Vec<Pair>) -> Result<Self> {
        if grid_n == 0 || cell_m == 0 {
            return Err(Error::InvalidInput(format!(
                "grid parameters must be positive (N={grid_n}, M={cell_m})"
            )));
        }
        let mut p = Program::empty(grid_n, cell_m);
        for pair in pairs {
            p.push(pair)?;
        }
        Ok(p)
    }

    pub fn push(&mut self, pair: Pair) -> Result<()> {
        pair.sketch.validate(self.grid_n)?;
        match &pair.component {
            Component::Cell(c) => {
                c.check(self.grid_n)?;
            }
            Component::Raw(px) => {
                let want = self.cell_m * self.cell_m * 3;
                if px.len() != want {
                    return Err(Error::Shape(format!(
                        "embedded component has {} bytes, expected {want} for M={}",
                        px.len(),
                        self.cell_m
                    )));
                }
            }
        }
        self.pairs.push(pair);
        Ok(())
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn cell_m(&self) -> usize {
        self.cell_m
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sketches(&self) -> impl Iterator<Item = &Sketch> {
        self.pairs.iter().map(|p| &p.sketch)
    }

    /// Union of all sketch covers.
    pub fn covered_cells(&self) -> CellMask {
        let mut mask = CellMask::empty(self.grid_n);
        for s in self.sketches() {
            for c in s.cover() {
                mask.set(c, true);
            }
        }
        mask
    }

    /// `B^(P)`: elementwise OR of the sketch tensors.
    pub fn tensor(&self) -> SimilarityTensor {
        let mut t = SimilarityTensor::zeros(self.grid_n);
        debug_assert_eq!(t.words(), words_per_row(self.grid_n));
        for s in self.sketches() {
            let cover = s.cover_linear(self.grid_n);
            let row = row_mask_of(self.grid_n, &cover);
            t.or_square(&cover, &row);
        }
        t
    }

    /// Render every pair in list order over `background`.
    ///
    /// Loop iterations run row-major and later writes win, so overlapping
    /// covers show the last pair's component. `source` resolves
    /// [`Component::Cell`] references.
    pub fn execute(&self, background: Background<'_>, source: Option<&GridImage>) -> Result<StructureRendering> {
        let image = match background {
            Background::Image(img) => {
                self.check_image(img, "background")?;
                img.clone()
            }
            Background::Flat(color) => GridImage::filled(self.grid_n, self.cell_m, color)?,
        };
        self.render(image, source, None)
    }

    /// Render onto a partial image, never touching cells marked known.
    ///
    /// Cell references resolve against `source`, or the partial image itself when
    /// `source` is `None`.
    pub fn execute_onto(
        &self,
        partial: &GridImage,
        known: &CellMask,
        source: Option<&GridImage>,
    ) -> Result<StructureRendering> {
        self.check_image(partial, "partial image")?;
        if known.grid_n() != self.grid_n {
            return Err(Error::Shape(format!(
                "known mask is {0}x{0}, program grid is {1}x{1}",
                known.grid_n(),
                self.grid_n
            )));
        }
        self.render(partial.clone(), Some(source.unwrap_or(partial)), Some(known))
    }

    fn render(
        &self,
        mut image: GridImage,
        source: Option<&GridImage>,
        known: Option<&CellMask>,
    ) -> Result<StructureRendering> {
        if let Some(src) = source {
            self.check_image(src, "source image")?;
        }
        let mut covered = CellMask::empty(self.grid_n);
        for pair in &self.pairs {
            let block = self.resolve(&pair.component, source)?;
            for cell in pair.sketch.cover() {
                if known.is_some_and(|k| k.get(cell)) {
                    continue;
                }
                image.write_cell(cell, &block)?;
                covered.set(cell, true);
            }
        }
        Ok(StructureRendering { image, covered })
    }

    /// Pixels of a component.
    pub fn resolve(&self, component: &Component, source: Option<&GridImage>) -> Result<Vec<u8>> {
        match component {
            Component::Raw(px) => Ok(px.clone()),
            Component::Cell(c) => {
                let src = source.ok_or_else(|| {
                    Error::Resolution(format!("component refers to cell {c} but no source image was given"))
                })?;
                Ok(src
                    .subimage(*c)
                    .map_err(|e| Error::Resolution(e.to_string()))?
                    .into_pixels())
            }
        }
    }

    fn check_image(&self, img: &GridImage, what: &str) -> Result<()> {
        if img.grid_n() != self.grid_n || img.cell_m() != self.cell_m {
            return Err(Error::Shape(format!(
                "{what} has N={}, M={}; program has N={}, M={}",
                img.grid_n(),
                img.cell_m(),
                self.grid_n,
                self.cell_m
            )));
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn with_pairs(&self, pairs: Vec<Pair>) -> Program {
        Program {
            grid_n: self.grid_n,
            cell_m: self.cell_m,
            pairs,
        }
    }

    pub(crate) fn from_parts_unchecked(grid_n: usize, cell_m: usize, pairs: Vec<Pair>) -> Program {
        Program { grid_n, cell_m, pairs }
    }
}

/// What execution starts from.
#[derive(Debug, Clone, Copy)]
pub enum Background<'a> {
    Image(&'a GridImage),
    Flat(Rgb),
}

/// Output of executing a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureRendering {
    pub image: GridImage,
    /// Cells written during execution.
    pub covered: CellMask,
}
