//! Grid-partitioned RGB images.
//!
//! An image of side `N·M` pixels is viewed as an `N×N` grid of `M×M` cells.
//! Cell coordinates in the public interface are 1-based `(t, u)` = (row, column).

mod distance;
pub(crate) mod tensor;

use std::fmt;
use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use distance::{build_similarity_tensor, build_similarity_tensor_with, distance, DistanceConfig, SubImageMetric};
pub use tensor::SimilarityTensor;

/// An 8-bit RGB triple.
pub type Rgb = [u8; 3];

/// 1-based grid coordinate: `t` is the row, `u` the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub t: usize,
    pub u: usize,
}

impl CellIndex {
    pub const fn new(t: usize, u: usize) -> Self {
        CellIndex { t, u }
    }

    pub fn check(self, n: usize) -> Result<Self> {
        if self.t == 0 || self.u == 0 || self.t > n || self.u > n {
            return Err(Error::CellOutOfBounds {
                t: self.t,
                u: self.u,
                n,
            });
        }
        Ok(self)
    }

    /// 0-based row-major position in an `n×n` grid. The cell must be in range.
    #[inline]
    pub fn linear(self, n: usize) -> usize {
        (self.t - 1) * n + (self.u - 1)
    }

    #[inline]
    pub fn from_linear(idx: usize, n: usize) -> Self {
        CellIndex {
            t: idx / n + 1,
            u: idx % n + 1,
        }
    }

    pub fn manhattan(self, other: CellIndex) -> usize {
        self.t.abs_diff(other.t) + self.u.abs_diff(other.u)
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.t, self.u)
    }
}

/// Iterate every cell of an `n×n` grid in row-major order.
pub fn all_cells(n: usize) -> impl Iterator<Item = CellIndex> {
    (0..n * n).map(move |i| CellIndex::from_linear(i, n))
}

/// An `M×M` RGB block, usually cut out of a [`GridImage`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubImage {
    size: usize,
    pixels: Vec<u8>,
    origin: Option<CellIndex>,
}

impl SubImage {
    pub fn new(size: usize, pixels: Vec<u8>) -> Result<Self> {
        if size == 0 || pixels.len() != size * size * 3 {
            return Err(Error::Shape(format!(
                "sub-image of side {size} needs {} bytes, got {}",
                size * size * 3,
                pixels.len()
            )));
        }
        Ok(SubImage {
            size,
            pixels,
            origin: None,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn origin(&self) -> Option<CellIndex> {
        self.origin
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

/// RGB8 raster of side `grid_n · cell_m`, partitioned into `grid_n²` cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridImage {
    grid_n: usize,
    cell_m: usize,
    pixels: Vec<u8>,
}

impl GridImage {
    pub fn new(grid_n: usize, cell_m: usize, pixels: Vec<u8>) -> Result<Self> {
        check_grid_params(grid_n, cell_m)?;
        let side = grid_n * cell_m;
        if pixels.len() != side * side * 3 {
            return Err(Error::Shape(format!(
                "a {side}x{side} RGB raster needs {} bytes, got {}",
                side * side * 3,
                pixels.len()
            )));
        }
        Ok(GridImage {
            grid_n,
            cell_m,
            pixels,
        })
    }

    pub fn filled(grid_n: usize, cell_m: usize, color: Rgb) -> Result<Self> {
        check_grid_params(grid_n, cell_m)?;
        let side = grid_n * cell_m;
        let pixels = color.iter().copied().cycle().take(side * side * 3).collect();
        Ok(GridImage {
            grid_n,
            cell_m,
            pixels,
        })
    }

    /// Build an image by supplying the `M×M×3` bytes of each cell.
    pub fn from_cells<F>(grid_n: usize, cell_m: usize, mut cell: F) -> Result<Self>
    where
        F: FnMut(CellIndex) -> Vec<u8>,
    {
        let mut img = GridImage::filled(grid_n, cell_m, [0, 0, 0])?;
        for c in all_cells(grid_n) {
            let block = cell(c);
            img.write_cell(c, &block)?;
        }
        Ok(img)
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn cell_m(&self) -> usize {
        self.cell_m
    }

    /// Raster side length in pixels.
    pub fn side(&self) -> usize {
        self.grid_n * self.cell_m
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.side() + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// The `M×M` block at rows `[(t−1)M, tM)` and columns `[(u−1)M, uM)`.
    pub fn subimage(&self, cell: CellIndex) -> Result<SubImage> {
        cell.check(self.grid_n)?;
        let m = self.cell_m;
        let mut pixels = Vec::with_capacity(m * m * 3);
        for row in 0..m {
            let start = self.offset(cell, row);
            pixels.extend_from_slice(&self.pixels[start..start + m * 3]);
        }
        Ok(SubImage {
            size: m,
            pixels,
            origin: Some(cell),
        })
    }

    /// Overwrite one cell with `M×M×3` bytes.
    pub fn write_cell(&mut self, cell: CellIndex, block: &[u8]) -> Result<()> {
        cell.check(self.grid_n)?;
        let m = self.cell_m;
        if block.len() != m * m * 3 {
            return Err(Error::Shape(format!(
                "cell block needs {} bytes, got {}",
                m * m * 3,
                block.len()
            )));
        }
        for row in 0..m {
            let start = self.offset(cell, row);
            self.pixels[start..start + m * 3].copy_from_slice(&block[row * m * 3..(row + 1) * m * 3]);
        }
        Ok(())
    }

    pub fn fill_cell(&mut self, cell: CellIndex, color: Rgb) -> Result<()> {
        let m = self.cell_m;
        let block: Vec<u8> = color.iter().copied().cycle().take(m * m * 3).collect();
        self.write_cell(cell, &block)
    }

    /// True when every pixel of the cell equals `color`.
    pub fn cell_is_flat(&self, cell: CellIndex, color: Rgb) -> bool {
        let m = self.cell_m;
        (0..m).all(|row| {
            let start = self.offset(cell, row);
            self.pixels[start..start + m * 3].chunks_exact(3).all(|p| p == color)
        })
    }

    #[inline]
    fn offset(&self, cell: CellIndex, row: usize) -> usize {
        let m = self.cell_m;
        let y = (cell.t - 1) * m + row;
        let x = (cell.u - 1) * m;
        (y * self.side() + x) * 3
    }

    /// Decode a PNG, discarding alpha, and check it is exactly `N·M` square.
    pub fn from_png_bytes(bytes: &[u8], grid_n: usize, cell_m: usize) -> Result<Self> {
        let decoded = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png)
            .decode()
            .map_err(|source| Error::Image {
                path: "<memory>".into(),
                source,
            })?;
        Self::from_rgb(decoded.to_rgb8(), grid_n, cell_m)
    }

    pub fn load_png(path: impl AsRef<Path>, grid_n: usize, cell_m: usize) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let decoded = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png)
            .decode()
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?;
        Self::from_rgb(decoded.to_rgb8(), grid_n, cell_m)
    }

    fn from_rgb(rgb: RgbImage, grid_n: usize, cell_m: usize) -> Result<Self> {
        check_grid_params(grid_n, cell_m)?;
        let side = grid_n * cell_m;
        let (w, h) = rgb.dimensions();
        if w as usize != side || h as usize != side {
            return Err(Error::Shape(format!(
                "expected a {side}x{side} image for N={grid_n}, M={cell_m}; got {w}x{h}"
            )));
        }
        GridImage::new(grid_n, cell_m, rgb.into_raw())
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let side = self.side() as u32;
        let img = RgbImage::from_raw(side, side, self.pixels.clone())
            .expect("raster length checked at construction");
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: "<memory>".into(),
                source,
            })?;
        Ok(out)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_png_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

fn check_grid_params(grid_n: usize, cell_m: usize) -> Result<()> {
    if grid_n == 0 || cell_m == 0 {
        return Err(Error::InvalidInput(format!(
            "grid parameters must be positive (N={grid_n}, M={cell_m})"
        )));
    }
    Ok(())
}

/// Boolean `N×N` mask over grid cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellMask {
    n: usize,
    bits: Vec<bool>,
}

impl CellMask {
    pub fn empty(n: usize) -> Self {
        CellMask {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn full(n: usize) -> Self {
        CellMask {
            n,
            bits: vec![true; n * n],
        }
    }

    pub fn from_cells(n: usize, cells: impl IntoIterator<Item = CellIndex>) -> Result<Self> {
        let mut mask = CellMask::empty(n);
        for c in cells {
            mask.set(c.check(n)?, true);
        }
        Ok(mask)
    }

    pub fn grid_n(&self) -> usize {
        self.n
    }

    /// Panics if `cell` is outside the grid.
    pub fn get(&self, cell: CellIndex) -> bool {
        self.bits[cell.linear(self.n)]
    }

    pub fn set(&mut self, cell: CellIndex, value: bool) {
        let i = cell.linear(self.n);
        self.bits[i] = value;
    }

    pub fn get_linear(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| CellIndex::from_linear(i, self.n))
    }

    pub fn union(&self, other: &CellMask) -> CellMask {
        assert_eq!(self.n, other.n, "mask sizes differ");
        CellMask {
            n: self.n,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn intersection(&self, other: &CellMask) -> CellMask {
        assert_eq!(self.n, other.n, "mask sizes differ");
        CellMask {
            n: self.n,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn complement(&self) -> CellMask {
        CellMask {
            n: self.n,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &CellMask) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }
}
