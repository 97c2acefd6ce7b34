use std::fmt;

use super::{CellIndex, CellMask};
use crate::error::{Error, Result};

/// Boolean `N×N×N×N` tensor over pairs of grid cells.
///
/// Stored as one packed row of `N²` bits per cell, so entry `(p, q)` lives in
/// row `p` at bit `q` (both 0-based row-major cell positions). Row-wise storage
/// lets marginal gains over a cover be computed with one masked popcount per
/// covered cell.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SimilarityTensor {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl SimilarityTensor {
    pub fn zeros(n: usize) -> Self {
        let words = words_per_row(n);
        SimilarityTensor {
            n,
            words,
            bits: vec![0; n * n * words],
        }
    }

    pub fn ones(n: usize) -> Self {
        let mut t = SimilarityTensor::zeros(n);
        let full = row_mask_all(n);
        for p in 0..n * n {
            t.row_mut(p).copy_from_slice(&full);
        }
        t
    }

    pub fn grid_n(&self) -> usize {
        self.n
    }

    /// Words per packed row (`⌈N²/64⌉`).
    pub fn words(&self) -> usize {
        self.words
    }

    /// Entry at 1-based cells. Panics if either cell is outside the grid.
    pub fn get(&self, a: CellIndex, b: CellIndex) -> bool {
        self.get_linear(a.linear(self.n), b.linear(self.n))
    }

    pub fn set(&mut self, a: CellIndex, b: CellIndex, value: bool) {
        self.set_linear(a.linear(self.n), b.linear(self.n), value);
    }

    #[inline]
    pub fn get_linear(&self, p: usize, q: usize) -> bool {
        self.bits[p * self.words + q / 64] >> (q % 64) & 1 == 1
    }

    #[inline]
    pub fn set_linear(&mut self, p: usize, q: usize, value: bool) {
        let w = &mut self.bits[p * self.words + q / 64];
        if value {
            *w |= 1 << (q % 64);
        } else {
            *w &= !(1 << (q % 64));
        }
    }

    #[inline]
    pub fn row(&self, p: usize) -> &[u64] {
        &self.bits[p * self.words..(p + 1) * self.words]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, p: usize) -> &mut [u64] {
        &mut self.bits[p * self.words..(p + 1) * self.words]
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Number of entries, `N⁴`.
    pub fn len(&self) -> u64 {
        (self.n as u64).pow(4)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn or_assign(&mut self, other: &SimilarityTensor) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    pub(crate) fn check_same(&self, other: &SimilarityTensor) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Shape(format!(
                "tensor grid sizes differ: {} vs {}",
                self.n, other.n
            )));
        }
        Ok(())
    }

    /// Set every entry `(p, q)` with `p, q` both in the cover described by `cover_row`.
    pub(crate) fn or_square(&mut self, cover: &[usize], cover_row: &[u64]) {
        for &p in cover {
            for (a, b) in self.row_mut(p).iter_mut().zip(cover_row) {
                *a |= b;
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let cells = self.n * self.n;
        (0..cells).all(|p| (p + 1..cells).all(|q| self.get_linear(p, q) == self.get_linear(q, p)))
    }

    pub fn is_reflexive(&self) -> bool {
        (0..self.n * self.n).all(|p| self.get_linear(p, p))
    }

    /// All set entries as `(p, q)` pairs of 1-based cells, in row-major order.
    pub fn ones_iter(&self) -> impl Iterator<Item = (CellIndex, CellIndex)> + '_ {
        let cells = self.n * self.n;
        (0..cells).flat_map(move |p| {
            (0..cells)
                .filter(move |&q| self.get_linear(p, q))
                .map(move |q| (CellIndex::from_linear(p, self.n), CellIndex::from_linear(q, self.n)))
        })
    }
}

impl fmt::Debug for SimilarityTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimilarityTensor")
            .field("n", &self.n)
            .field("ones", &self.count_ones())
            .finish()
    }
}

pub(crate) fn words_per_row(n: usize) -> usize {
    (n * n).div_ceil(64).max(1)
}

/// Packed row with every valid cell bit set.
pub(crate) fn row_mask_all(n: usize) -> Vec<u64> {
    let cells = n * n;
    let mut row = vec![0u64; words_per_row(n)];
    for q in 0..cells {
        row[q / 64] |= 1 << (q % 64);
    }
    row
}

/// Packed row with the given 0-based cells set.
pub(crate) fn row_mask_of(n: usize, cells: &[usize]) -> Vec<u64> {
    let mut row = vec![0u64; words_per_row(n)];
    for &q in cells {
        row[q / 64] |= 1 << (q % 64);
    }
    row
}

pub(crate) fn row_mask_from_cell_mask(mask: &CellMask) -> Vec<u64> {
    let n = mask.grid_n();
    let cells: Vec<usize> = (0..n * n).filter(|&i| mask.get_linear(i)).collect();
    row_mask_of(n, &cells)
}
