//! Program synthesis from a similarity tensor.
//!
//! The objective of a program `P` against an image tensor `B^(x)` is
//!
//! ```text
//! ℓ(P; x) = ‖B^(x) ∧ B^(P)‖₁ + λ · ‖¬B^(x) ∧ ¬B^(P)‖₁
//! ```
//!
//! Both terms are kept as exact popcounts ([`ObjectiveCounts`]) and combined
//! with `λ` only when a real value is needed.
//!
//! Entries may be restricted to a set of *active* cells: pairs touching an
//! inactive cell (unknown in a partial image, or background when
//! [`SynthesisConfig::ignore_color`] is set) are dropped from both terms, and
//! candidate sketches must cover active cells only.

mod greedy;
mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::tensor::{row_mask_from_cell_mask, row_mask_of};
use crate::grid::{all_cells, build_similarity_tensor, CellIndex, CellMask, DistanceConfig, GridImage, Rgb, SimilarityTensor};
use crate::program::{Program, Sketch};

pub use greedy::{greedy_synthesize, greedy_synthesize_naive, StepRecord};
pub use oracle::{oracle_candidate_count, oracle_synthesize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Maximum number of (sketch, component) pairs.
    pub k: usize,
    /// Similarity threshold on the sub-image distance.
    pub eps: f64,
    /// Weight on agreement over zero entries.
    pub lambda: f64,
    pub distance: DistanceConfig,
    /// Smallest `n · n2` considered during enumeration.
    pub min_cover: usize,
    /// Stop once no candidate has a positive marginal gain.
    pub early_stop: bool,
    /// Cells that are entirely this color carry no structure and are left out.
    pub ignore_color: Option<Rgb>,
    /// Largest number of programs the exhaustive oracle will evaluate.
    pub oracle_budget: u128,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            k: 12,
            eps: 0.15,
            lambda: 0.01,
            distance: DistanceConfig::default(),
            min_cover: 1,
            early_stop: true,
            ignore_color: None,
            oracle_budget: 20_000_000,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !self.eps.is_finite() || self.eps < 0.0 {
            return Err(Error::Config(format!("eps must be finite and nonnegative, got {}", self.eps)));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if self.min_cover == 0 {
            return Err(Error::Config("min_cover must be at least 1".into()));
        }
        self.distance.validate()
    }
}

/// Exact popcounts behind the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ObjectiveCounts {
    /// Entries where both tensors are 1.
    pub true_pos: u64,
    /// Entries where both tensors are 0.
    pub true_neg: u64,
}

impl ObjectiveCounts {
    pub fn value(&self, lambda: f64) -> f64 {
        self.true_pos as f64 + lambda * self.true_neg as f64
    }
}

/// Result of a synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredProgram {
    #[serde(skip)]
    pub program: Program,
    pub objective: f64,
    pub counts: ObjectiveCounts,
    pub per_step_gains: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

/// `ℓ(P; x)` over all `N⁴` entries.
pub fn objective(p: &Program, bx: &SimilarityTensor, lambda: f64) -> Result<f64> {
    Ok(objective_counts(p, bx, None)?.value(lambda))
}

/// Objective popcounts, optionally restricted to pairs of active cells.
pub fn objective_counts(p: &Program, bx: &SimilarityTensor, active: Option<&CellMask>) -> Result<ObjectiveCounts> {
    if p.grid_n() != bx.grid_n() {
        return Err(Error::Shape(format!(
            "program grid is {0}x{0}, tensor grid is {1}x{1}",
            p.grid_n(),
            bx.grid_n()
        )));
    }
    let active = match active {
        Some(mask) if mask.grid_n() != bx.grid_n() => {
            return Err(Error::Shape("active mask size differs from tensor".into()));
        }
        Some(mask) => mask.clone(),
        None => CellMask::full(bx.grid_n()),
    };
    Ok(tensor_counts(&p.tensor(), bx, &active))
}

/// `ℓ` for an explicit program tensor `B^(P)` over all entries.
pub fn tensor_objective(bp: &SimilarityTensor, bx: &SimilarityTensor, lambda: f64) -> Result<f64> {
    bp.check_same(bx)?;
    Ok(tensor_counts(bp, bx, &CellMask::full(bx.grid_n())).value(lambda))
}

/// Popcounts of agreement between two tensors over active × active entries.
pub(crate) fn tensor_counts(bp: &SimilarityTensor, bx: &SimilarityTensor, active: &CellMask) -> ObjectiveCounts {
    let row_mask = row_mask_from_cell_mask(active);
    let mut counts = ObjectiveCounts::default();
    for cell in active.cells() {
        let p = cell.linear(bx.grid_n());
        for ((&x, &b), &m) in bx.row(p).iter().zip(bp.row(p)).zip(&row_mask) {
            counts.true_pos += (x & b & m).count_ones() as u64;
            counts.true_neg += (!x & !b & m).count_ones() as u64;
        }
    }
    counts
}

/// Every valid sketch for an `n×n` grid with `n·n2 ≥ min_cover`, in
/// lexicographic `(n, a, b, n2, a2, b2)` order.
pub fn enumerate_sketches(n: usize, min_cover: usize) -> Vec<Sketch> {
    let axis = axis_options(n);
    let mut out = Vec::new();
    for &(rn, ra, rb) in &axis {
        for &(cn, ca, cb) in &axis {
            if rn * cn >= min_cover {
                out.push(Sketch::new(rn, ra, rb, cn, ca, cb));
            }
        }
    }
    out
}

/// `(count, stride, offset)` with `stride·count + offset ≤ n`, lexicographic.
fn axis_options(n: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for count in 1..=n {
        for stride in 1..=n / count {
            for offset in 0..=n - stride * count {
                out.push((count, stride, offset));
            }
        }
    }
    out
}

/// A candidate sketch with its cover precomputed.
#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub sketch: Sketch,
    /// 0-based cover cells.
    pub cover: Vec<usize>,
    /// Packed cover row.
    pub row: Vec<u64>,
}

/// Everything synthesis needs: `B^(x)`, the active cells, the candidate
/// sketches `S` and the component cells `Ĉ`.
#[derive(Debug, Clone)]
pub struct SynthesisProblem {
    pub(crate) tensor: SimilarityTensor,
    pub(crate) active: CellMask,
    pub(crate) active_row: Vec<u64>,
    pub(crate) candidates: Vec<Candidate>,
    pub(crate) components: Vec<CellIndex>,
    pub(crate) cell_m: usize,
}

impl SynthesisProblem {
    /// Build `B^(x)` for `img`. `known`, when given, limits evidence to those cells.
    pub fn from_image(img: &GridImage, cfg: &SynthesisConfig, known: Option<&CellMask>) -> Result<Self> {
        cfg.validate()?;
        let n = img.grid_n();
        let tensor = build_similarity_tensor(img, cfg.eps, &cfg.distance)?;
        let mut active = match known {
            Some(mask) => {
                if mask.grid_n() != n {
                    return Err(Error::Shape(format!(
                        "known mask is {0}x{0}, image grid is {n}x{n}",
                        mask.grid_n()
                    )));
                }
                mask.clone()
            }
            None => CellMask::full(n),
        };
        if let Some(color) = cfg.ignore_color {
            for c in all_cells(n) {
                if img.cell_is_flat(c, color) {
                    active.set(c, false);
                }
            }
        }
        Ok(Self::new(tensor, active, img.cell_m(), cfg.min_cover))
    }

    /// Problem over an arbitrary tensor; `active` restricts the evidence.
    pub fn new(tensor: SimilarityTensor, active: CellMask, cell_m: usize, min_cover: usize) -> Self {
        let n = tensor.grid_n();
        assert_eq!(active.grid_n(), n, "active mask size differs from tensor");
        let candidates = enumerate_sketches(n, min_cover)
            .into_iter()
            .filter_map(|sketch| {
                let cover = sketch.cover_linear(n);
                cover.iter().all(|&c| active.get_linear(c)).then(|| Candidate {
                    row: row_mask_of(n, &cover),
                    sketch,
                    cover,
                })
            })
            .collect();
        SynthesisProblem {
            active_row: row_mask_from_cell_mask(&active),
            components: active.cells().collect(),
            tensor,
            active,
            candidates,
            cell_m,
        }
    }

    pub fn tensor(&self) -> &SimilarityTensor {
        &self.tensor
    }

    pub fn active(&self) -> &CellMask {
        &self.active
    }

    pub fn grid_n(&self) -> usize {
        self.tensor.grid_n()
    }

    pub fn sketches(&self) -> impl Iterator<Item = &Sketch> {
        self.candidates.iter().map(|c| &c.sketch)
    }

    pub fn components(&self) -> &[CellIndex] {
        &self.components
    }

    pub fn counts(&self, p: &Program) -> Result<ObjectiveCounts> {
        objective_counts(p, &self.tensor, Some(&self.active))
    }

    /// The objective does not look at pixels, so every component scores the
    /// same for a given sketch. Pick the component in `Ĉ` similar to the most
    /// cells of the cover, smallest cell on ties.
    pub(crate) fn choose_component(&self, cover_row: &[u64]) -> CellIndex {
        let n = self.grid_n();
        let mut best: Option<(u32, CellIndex)> = None;
        for &c in &self.components {
            let agree: u32 = self
                .tensor
                .row(c.linear(n))
                .iter()
                .zip(cover_row)
                .map(|(x, m)| (x & m).count_ones())
                .sum();
            if best.is_none_or(|(b, _)| agree > b) {
                best = Some((agree, c));
            }
        }
        best.map(|(_, c)| c).expect("a candidate sketch implies at least one active cell")
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::program::{Component, Pair};
    use proptest::prelude::*;

    /// Entrywise ℓ(P; x) straight from the definition.
    pub(crate) fn brute_objective(p: &Program, bx: &SimilarityTensor, lambda: f64) -> f64 {
        let n = bx.grid_n();
        let covers: Vec<Vec<CellIndex>> = p.sketches().map(|s| s.cover()).collect();
        let (mut tp, mut tn) = (0u64, 0u64);
        for a in all_cells(n) {
            for b in all_cells(n) {
                let in_p = covers.iter().any(|c| c.contains(&a) && c.contains(&b));
                let in_x = bx.get(a, b);
                tp += (in_x && in_p) as u64;
                tn += (!in_x && !in_p) as u64;
            }
        }
        tp as f64 + lambda * tn as f64
    }

    fn prog(n: usize, sketches: &[Sketch]) -> Program {
        Program::new(
            n,
            1,
            sketches.iter().map(|s| Pair::new(*s, Component::Cell(CellIndex::new(1, 1)))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_program_scores_lambda_times_zeros() {
        let mut bx = SimilarityTensor::zeros(3);
        for p in 0..9 {
            bx.set_linear(p, p, true);
        }
        let got = objective(&Program::empty(3, 1), &bx, 0.5).unwrap();
        assert_eq!(got, 0.5 * (81.0 - 9.0));
    }

    #[test]
    fn perfect_cover_of_all_ones() {
        for n in 1..=5 {
            let p = prog(n, &[Sketch::new(n, 1, 0, n, 1, 0)]);
            let got = objective(&p, &SimilarityTensor::ones(n), 0.3).unwrap();
            assert_eq!(got, (n as f64).powi(4));
        }
    }

    #[test]
    fn three_by_three_example_against_entrywise_loop() {
        // B^(x): the diagonal plus the symmetric pair (1,1)~(3,3), 11 ones.
        let n = 3;
        let (c11, c33) = (CellIndex::new(1, 1), CellIndex::new(3, 3));
        let mut bx = SimilarityTensor::zeros(n);
        for p in 0..9 {
            bx.set_linear(p, p, true);
        }
        bx.set(c11, c33, true);
        bx.set(c33, c11, true);
        assert_eq!(bx.count_ones(), 11);

        // {(1,1),(3,3)} is not a product set, so no single sketch covers
        // exactly those two cells; score the pair-cover tensor directly.
        let mut bp = SimilarityTensor::zeros(n);
        for a in [c11, c33] {
            for b in [c11, c33] {
                bp.set(a, b, true);
            }
        }
        let got = tensor_objective(&bp, &bx, 0.5).unwrap();
        let (mut tp, mut tn) = (0u64, 0u64);
        for a in all_cells(n) {
            for b in all_cells(n) {
                tp += (bx.get(a, b) && bp.get(a, b)) as u64;
                tn += (!bx.get(a, b) && !bp.get(a, b)) as u64;
            }
        }
        assert_eq!((tp, tn), (4, 70));
        assert_eq!(got, 4.0 + 0.5 * (81.0 - 11.0));

        // Two single-cell sketches only reach the diagonal entries.
        let p = prog(n, &[Sketch::new(1, 1, 0, 1, 1, 0), Sketch::new(1, 3, 0, 1, 3, 0)]);
        assert_eq!(objective(&p, &bx, 0.5).unwrap(), 2.0 + 0.5 * 70.0);
        assert_eq!(objective(&p, &bx, 0.5).unwrap(), brute_objective(&p, &bx, 0.5));
    }

    #[test]
    fn size_mismatch_is_a_shape_error() {
        let p = Program::empty(3, 1);
        assert!(matches!(objective(&p, &SimilarityTensor::zeros(4), 0.0), Err(Error::Shape(_))));
    }

    /// Independent counter for valid sketches: six nested loops.
    fn count_sketches_brute(n: usize, min_cover: usize) -> usize {
        let mut count = 0;
        for rn in 1..=n {
            for ra in 1..=n {
                for rb in 0..=n {
                    for cn in 1..=n {
                        for ca in 1..=n {
                            for cb in 0..=n {
                                if ra * rn + rb <= n && ca * cn + cb <= n && rn * cn >= min_cover {
                                    count += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(enumerate_sketches(1, 1), vec![Sketch::new(1, 1, 0, 1, 1, 0)]);
        assert_eq!(axis_options(2), vec![(1, 1, 0), (1, 1, 1), (1, 2, 0), (2, 1, 0)]);
        assert_eq!(enumerate_sketches(2, 1).len(), 16);
        for n in 1..=9 {
            for min_cover in [1, 2, 5] {
                let got = enumerate_sketches(n, min_cover);
                assert_eq!(got.len(), count_sketches_brute(n, min_cover), "n={n}");
                assert!(got.windows(2).all(|w| w[0] < w[1]), "not strictly lexicographic");
                assert!(got.iter().all(|s| s.is_valid(n)));
            }
        }
        // frozen from the brute counter
        assert_eq!(enumerate_sketches(9, 1).len(), 10_000);
    }

    #[test]
    fn config_validation() {
        assert!(SynthesisConfig::default().validate().is_ok());
        for bad in [
            SynthesisConfig { k: 0, ..Default::default() },
            SynthesisConfig { lambda: -1.0, ..Default::default() },
            SynthesisConfig { eps: f64::INFINITY, ..Default::default() },
            SynthesisConfig { min_cover: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    pub(crate) fn symmetric_tensor_strategy(n: usize) -> impl Strategy<Value = SimilarityTensor> {
        let cells = n * n;
        proptest::collection::vec(any::<bool>(), cells * cells).prop_map(move |bits| {
            let mut t = SimilarityTensor::zeros(n);
            for p in 0..cells {
                t.set_linear(p, p, true);
                for q in p + 1..cells {
                    let v = bits[p * cells + q];
                    t.set_linear(p, q, v);
                    t.set_linear(q, p, v);
                }
            }
            t
        })
    }

    proptest! {
        #[test]
        fn popcount_objective_matches_brute_force(
            (bx, sketches) in (1usize..=4).prop_flat_map(|n| (
                symmetric_tensor_strategy(n),
                proptest::collection::vec(crate::program::tests::sketch_strategy(n), 0..4),
            )),
            lambda in prop_oneof![Just(0.0), Just(0.01), Just(0.5), 0.0f64..3.0],
        ) {
            let p = prog(bx.grid_n(), &sketches);
            prop_assert_eq!(objective(&p, &bx, lambda).unwrap(), brute_objective(&p, &bx, lambda));
        }
    }
}
