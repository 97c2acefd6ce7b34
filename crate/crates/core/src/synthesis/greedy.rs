//! Greedy maximisation of the objective over `S × Ĉ`.

use rayon::prelude::*;
use serde::Serialize;

use super::{tensor_counts, ObjectiveCounts, ScoredProgram, SynthesisConfig, SynthesisProblem};
use crate::error::Result;
use crate::grid::{CellIndex, GridImage, SimilarityTensor};
use crate::program::{Component, Pair, Program, Sketch};

/// One greedy iteration, as written to progress logs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub sketch: Sketch,
    pub component: CellIndex,
    pub gain: f64,
    pub objective: f64,
}

/// Marginal effect of adding one sketch: newly covered entries of `B^(x)`
/// that are 1 (`true_pos`) and that are 0 (`lost_neg`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Gain {
    true_pos: u64,
    lost_neg: u64,
}

impl Gain {
    fn value(&self, lambda: f64) -> f64 {
        self.true_pos as f64 - lambda * self.lost_neg as f64
    }
}

/// Best of two scored candidates: higher score, then lower index.
fn better(a: Option<(f64, usize, Gain)>, b: Option<(f64, usize, Gain)>) -> Option<(f64, usize, Gain)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => {
            if x.0 > y.0 || (x.0 == y.0 && x.1 < y.1) {
                Some(x)
            } else {
                Some(y)
            }
        }
    }
}

pub fn greedy_synthesize(img: &GridImage, cfg: &SynthesisConfig) -> Result<ScoredProgram> {
    SynthesisProblem::from_image(img, cfg, None)?.greedy(cfg)
}

/// Same search as [`greedy_synthesize`], but every candidate is scored by
/// recomputing the objective over the whole tensor. Kept as a reference and
/// for timing comparisons.
pub fn greedy_synthesize_naive(img: &GridImage, cfg: &SynthesisConfig) -> Result<ScoredProgram> {
    SynthesisProblem::from_image(img, cfg, None)?.greedy_naive(cfg)
}

impl SynthesisProblem {
    /// Objective counts of the empty program.
    fn empty_counts(&self) -> ObjectiveCounts {
        tensor_counts(&SimilarityTensor::zeros(self.grid_n()), &self.tensor, &self.active)
    }

    /// Gain of OR-ing the cover square of `candidate` into `current`; touches
    /// only the cover rows.
    fn incremental_gain(&self, current: &SimilarityTensor, cover: &[usize], cover_row: &[u64]) -> Gain {
        let mut gain = Gain {
            true_pos: 0,
            lost_neg: 0,
        };
        for &p in cover {
            let (x_row, p_row) = (self.tensor.row(p), current.row(p));
            for w in 0..cover_row.len() {
                let fresh = cover_row[w] & !p_row[w] & self.active_row[w];
                gain.true_pos += (fresh & x_row[w]).count_ones() as u64;
                gain.lost_neg += (fresh & !x_row[w]).count_ones() as u64;
            }
        }
        gain
    }

    /// Greedy synthesis with O(|cover|) popcounts per candidate.
    pub fn greedy(&self, cfg: &SynthesisConfig) -> Result<ScoredProgram> {
        self.run_greedy(cfg, |state, _, cand| self.incremental_gain(state, &cand.cover, &cand.row))
    }

    /// Greedy synthesis that rescores every candidate from scratch.
    pub fn greedy_naive(&self, cfg: &SynthesisConfig) -> Result<ScoredProgram> {
        self.run_greedy(cfg, |state, counts, cand| {
            let mut next = state.clone();
            next.or_square(&cand.cover, &cand.row);
            let after = tensor_counts(&next, &self.tensor, &self.active);
            Gain {
                true_pos: after.true_pos - counts.true_pos,
                lost_neg: counts.true_neg - after.true_neg,
            }
        })
    }

    fn run_greedy<F>(&self, cfg: &SynthesisConfig, score: F) -> Result<ScoredProgram>
    where
        F: Fn(&SimilarityTensor, &ObjectiveCounts, &super::Candidate) -> Gain + Sync,
    {
        cfg.validate()?;
        let n = self.grid_n();
        let mut state = SimilarityTensor::zeros(n);
        let mut counts = self.empty_counts();
        let mut pairs = Vec::new();
        let mut steps = Vec::new();
        let mut gains = Vec::new();

        for iteration in 1..=cfg.k {
            let best = self
                .candidates
                .par_iter()
                .enumerate()
                .map(|(i, cand)| {
                    let g = score(&state, &counts, cand);
                    Some((g.value(cfg.lambda), i, g))
                })
                .reduce(|| None, better);
            let Some((value, idx, gain)) = best else {
                break;
            };
            if cfg.early_stop && value <= 0.0 {
                break;
            }
            let cand = &self.candidates[idx];
            state.or_square(&cand.cover, &cand.row);
            counts.true_pos += gain.true_pos;
            counts.true_neg -= gain.lost_neg;
            let component = self.choose_component(&cand.row);
            pairs.push(Pair::new(cand.sketch, Component::Cell(component)));
            gains.push(value);
            steps.push(StepRecord {
                iteration,
                sketch: cand.sketch,
                component,
                gain: value,
                objective: counts.value(cfg.lambda),
            });
        }

        let program = Program::new(n, self.cell_m, pairs)?;
        let recomputed = self.counts(&program)?;
        debug_assert_eq!(recomputed, counts, "incremental objective drifted");
        Ok(ScoredProgram {
            objective: recomputed.value(cfg.lambda),
            counts: recomputed,
            per_step_gains: gains,
            steps,
            program,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{all_cells, CellMask};
    use crate::synthesis::tests::{brute_objective, symmetric_tensor_strategy};
    use proptest::prelude::*;

    #[test]
    fn uniform_image_is_one_full_cover() {
        let img = GridImage::filled(5, 2, [30, 60, 90]).unwrap();
        let cfg = SynthesisConfig {
            k: 1,
            lambda: 0.0,
            ..Default::default()
        };
        let r = greedy_synthesize(&img, &cfg).unwrap();
        assert_eq!(r.program.len(), 1);
        assert_eq!(r.program.pairs()[0].sketch, Sketch::new(5, 1, 0, 5, 1, 0));
        assert_eq!(r.objective, 625.0);
        assert_eq!(r.program.pairs()[0].component, Component::Cell(CellIndex::new(1, 1)));
    }

    #[test]
    fn distinct_cells_with_min_cover_two_gain_only_diagonals() {
        let img = GridImage::from_cells(3, 2, |c| vec![(c.linear(3) * 28) as u8; 12]).unwrap();
        let cfg = SynthesisConfig {
            eps: 0.0,
            lambda: 0.0,
            min_cover: 2,
            k: 3,
            ..Default::default()
        };
        let r = greedy_synthesize(&img, &cfg).unwrap();
        // B^(x) is the identity, so a sketch only ever gains the diagonal
        // entries of cells it newly covers; with λ = 0 that is still positive.
        assert!(!r.program.is_empty());
        assert!(r.per_step_gains.iter().all(|&g| g > 0.0));
        assert_eq!(r.objective, r.program.covered_cells().count() as f64);
        let oracle = crate::synthesis::oracle_synthesize(&img, &cfg).unwrap();
        assert!(oracle.objective >= r.objective);
        // the full 3×3 lattice reaches all nine diagonal entries
        assert_eq!(oracle.objective, 9.0);
    }

    #[test]
    fn distinct_cells_with_lambda_penalty_stop_early() {
        // With a penalty, any multi-cell sketch covers more zeros than ones.
        let img = GridImage::from_cells(3, 2, |c| vec![(c.linear(3) * 28) as u8; 12]).unwrap();
        let cfg = SynthesisConfig {
            eps: 0.0,
            lambda: 1.0,
            min_cover: 2,
            ..Default::default()
        };
        let r = greedy_synthesize(&img, &cfg).unwrap();
        assert!(r.program.is_empty());
        assert_eq!(r.objective, 72.0);
    }

    #[test]
    fn without_early_stop_runs_exactly_k_steps() {
        let img = GridImage::filled(3, 1, [0, 0, 0]).unwrap();
        let cfg = SynthesisConfig {
            k: 4,
            early_stop: false,
            ..Default::default()
        };
        let r = greedy_synthesize(&img, &cfg).unwrap();
        assert_eq!(r.program.len(), 4);
        assert_eq!(&r.per_step_gains[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn naive_and_incremental_agree() {
        let img = GridImage::from_cells(6, 2, |c| {
            let v = if (c.t + c.u) % 3 == 0 { 200 } else if c.t % 2 == 0 { 90 } else { 10 };
            vec![v; 12]
        })
        .unwrap();
        for lambda in [0.0, 0.01, 0.5] {
            let cfg = SynthesisConfig {
                lambda,
                k: 5,
                ..Default::default()
            };
            let a = greedy_synthesize(&img, &cfg).unwrap();
            let b = greedy_synthesize_naive(&img, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let img = GridImage::from_cells(7, 2, |c| vec![((c.t * c.u) % 4 * 60) as u8; 12]).unwrap();
        let cfg = SynthesisConfig::default();
        let par = greedy_synthesize(&img, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq = pool.install(|| greedy_synthesize(&img, &cfg).unwrap());
        assert_eq!(par, seq);
        assert_eq!(par.program.to_text(), seq.program.to_text());
    }

    #[test]
    fn component_is_the_most_similar_cell() {
        // Left column black, everything else white. A sketch over the left
        // column should carry a black component.
        let img = GridImage::from_cells(4, 1, |c| vec![if c.u == 1 { 0 } else { 255 }; 3]).unwrap();
        let cfg = SynthesisConfig {
            lambda: 1.0,
            ..Default::default()
        };
        let r = greedy_synthesize(&img, &cfg).unwrap();
        let rendered = r
            .program
            .execute(crate::program::Background::Flat([7, 7, 7]), Some(&img))
            .unwrap();
        assert_eq!(rendered.image, img);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn incremental_objective_equals_brute_force(
            bx in (1usize..=4).prop_flat_map(symmetric_tensor_strategy),
            lambda in prop_oneof![Just(0.0), Just(0.01), Just(0.5), Just(2.0)],
            k in 1usize..=4,
        ) {
            let n = bx.grid_n();
            let problem = SynthesisProblem::new(bx.clone(), CellMask::full(n), 1, 1);
            let cfg = SynthesisConfig { k, lambda, ..Default::default() };
            let r = problem.greedy(&cfg).unwrap();
            prop_assert!(r.program.len() <= k);
            prop_assert_eq!(r.objective, brute_objective(&r.program, &bx, lambda));
            // every step's reported cumulative objective matches a prefix recomputation
            for (h, step) in r.steps.iter().enumerate() {
                let prefix = r.program.with_pairs(r.program.pairs()[..=h].to_vec());
                prop_assert_eq!(step.objective, brute_objective(&prefix, &bx, lambda));
            }
            if lambda == 0.0 {
                prop_assert!(r.per_step_gains.iter().all(|&g| g > 0.0));
            }
        }

        #[test]
        fn restricted_problem_never_covers_inactive_cells(
            bx in symmetric_tensor_strategy(4),
            active_bits in proptest::collection::vec(any::<bool>(), 16),
        ) {
            let mut active = CellMask::empty(4);
            for (c, on) in all_cells(4).zip(&active_bits) {
                active.set(c, *on);
            }
            let problem = SynthesisProblem::new(bx, active.clone(), 1, 1);
            let r = problem.greedy(&SynthesisConfig { lambda: 0.1, ..Default::default() }).unwrap();
            prop_assert!(r.program.covered_cells().is_subset_of(&active));
            for pair in r.program.pairs() {
                if let Component::Cell(c) = pair.component {
                    prop_assert!(active.get(c));
                }
            }
        }
    }
}
