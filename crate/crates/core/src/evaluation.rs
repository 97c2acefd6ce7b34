//! Structure-level metrics: cover precision/recall against a ground-truth
//! program, objective scores, and pixel agreement on selected cells, plus a
//! corpus-level runner with mean/median aggregates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{read_manifest, read_spec, MANIFEST, SPEC_FILE};
use crate::error::{Error, Result};
use crate::extrapolation::{complete, parse_mask, ExtrapolateOptions, PartialImage};
use crate::grid::{CellMask, GridImage};
use crate::program::{Background, Program};
use crate::synthesis::{SynthesisConfig, SynthesisProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision and recall of `pred`'s covered cells against `truth`'s.
/// An empty side scores 0 rather than being undefined.
pub fn compare_covers(pred: &Program, truth: &Program) -> Result<CoverScores> {
    if pred.grid_n() != truth.grid_n() {
        return Err(Error::Shape(format!(
            "programs are for N={} and N={}",
            pred.grid_n(),
            truth.grid_n()
        )));
    }
    Ok(compare_cell_sets(&pred.covered_cells(), &truth.covered_cells()))
}

pub fn compare_cell_sets(pred: &CellMask, truth: &CellMask) -> CoverScores {
    let hit = pred.intersection(truth).count() as f64;
    let ratio = |den: usize| if den == 0 { 0.0 } else { hit / den as f64 };
    let (precision, recall) = (ratio(pred.count()), ratio(truth.count()));
    CoverScores {
        precision,
        recall,
        f1: f1(precision, recall),
    }
}

/// Fraction of pixels inside `cells` whose channels all differ by at most
/// `tol`. An empty cell set scores 1.
pub fn covered_pixel_accuracy(pred: &GridImage, truth: &GridImage, cells: &CellMask, tol: u8) -> Result<f64> {
    if pred.grid_n() != truth.grid_n() || pred.cell_m() != truth.cell_m() || cells.grid_n() != pred.grid_n() {
        return Err(Error::Shape(format!(
            "cannot compare N={},M={} with N={},M={} over a {}x{} cell set",
            pred.grid_n(),
            pred.cell_m(),
            truth.grid_n(),
            truth.cell_m(),
            cells.grid_n(),
            cells.grid_n()
        )));
    }
    let (mut good, mut total) = (0usize, 0usize);
    for c in cells.cells() {
        let a = pred.subimage(c)?;
        let b = truth.subimage(c)?;
        for (pa, pb) in a.pixels().chunks(3).zip(b.pixels().chunks(3)) {
            total += 1;
            if pa.iter().zip(pb).all(|(x, y)| x.abs_diff(*y) <= tol) {
                good += 1;
            }
        }
    }
    Ok(if total == 0 { 1.0 } else { good as f64 / total as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Synthesize from the full image.
    Synth,
    /// Run the completion pipeline on the partial image.
    Complete,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synth" => Ok(EvalMode::Synth),
            "complete" => Ok(EvalMode::Complete),
            other => Err(Error::Config(format!("unknown mode `{other}`; expected synth or complete"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub tol: u8,
    /// Grid size for directories without `spec.json`.
    pub grid_n: Option<usize>,
    pub cell_m: Option<usize>,
    /// Treat the generator background as structureless when the synthesis
    /// config does not name an ignore color itself.
    pub ignore_background: bool,
    /// Record wall-clock time per instance; off gives byte-stable reports.
    pub timing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: EvalMode::Synth,
            tol: 0,
            grid_n: None,
            cell_m: None,
            ignore_background: true,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub instance: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cover_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cover_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cover_f1: Option<f64>,
    pub objective_pred: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_true: Option<f64>,
    pub covered_pixel_accuracy: f64,
    pub runtime_ms: u64,
}

impl StructureReport {
    fn metrics(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("cover_precision", self.cover_precision),
            ("cover_recall", self.cover_recall),
            ("cover_f1", self.cover_f1),
            ("objective_pred", Some(self.objective_pred)),
            ("objective_true", self.objective_true),
            ("covered_pixel_accuracy", Some(self.covered_pixel_accuracy)),
            ("runtime_ms", Some(self.runtime_ms as f64)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

impl Aggregate {
    /// Values are sorted first so the result does not depend on input order.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Aggregate {
            count: n,
            mean: v.iter().sum::<f64>() / n as f64,
            median,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub mode: EvalMode,
    pub tol: u8,
    pub config: SynthesisConfig,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub instances: Vec<StructureReport>,
}

pub fn aggregate(reports: &[StructureReport]) -> BTreeMap<String, Aggregate> {
    let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (name, value) in r.metrics() {
            if let Some(v) = value {
                columns.entry(name).or_default().push(v);
            }
        }
    }
    columns
        .into_iter()
        .filter_map(|(k, v)| Aggregate::of(&v).map(|a| (k.to_string(), a)))
        .collect()
}

struct Item {
    name: String,
    image: PathBuf,
    mask: Option<PathBuf>,
    truth: Option<PathBuf>,
}

fn corpus_error(instance: &str, message: impl std::fmt::Display) -> Error {
    Error::Corpus {
        instance: instance.to_string(),
        message: message.to_string(),
    }
}

fn list_items(dir: &Path) -> Result<Vec<Item>> {
    if dir.join(MANIFEST).is_file() {
        return Ok(read_manifest(dir)?
            .into_iter()
            .map(|e| Item {
                name: format!("{:04}", e.index),
                image: dir.join(&e.full),
                mask: Some(dir.join(&e.mask)),
                truth: Some(dir.join(&e.prog)),
            })
            .collect());
    }
    // `<stem>.png` with an optional `<stem>.mask` and `<stem>.prog`
    let mut pngs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    pngs.sort();
    if pngs.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no manifest and no PNG images", dir.display())));
    }
    Ok(pngs
        .into_iter()
        .map(|png| {
            let mask = png.with_extension("mask");
            let truth = png.with_extension("prog");
            Item {
                name: png.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                mask: mask.is_file().then_some(mask),
                truth: truth.is_file().then_some(truth),
                image: png,
            }
        })
        .collect())
}

fn evaluate_item(item: &Item, n: usize, m: usize, cfg: &SynthesisConfig, opts: &EvalOptions) -> Result<StructureReport> {
    let name = item.name.as_str();
    let wrap = |e: Error| match e {
        Error::Corpus { .. } => e,
        other => corpus_error(name, other),
    };
    let start = Instant::now();
    let full = GridImage::load_png(&item.image, n, m).map_err(wrap)?;
    let truth = match &item.truth {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| wrap(Error::io(path, e)))?;
            let p = Program::parse(&text).map_err(wrap)?;
            if p.grid_n() != n || p.cell_m() != m {
                return Err(corpus_error(name, format!("ground truth is for N={},M={}", p.grid_n(), p.cell_m())));
            }
            Some(p)
        }
        None => None,
    };

    let (pred, problem, accuracy) = match opts.mode {
        EvalMode::Synth => {
            let problem = SynthesisProblem::from_image(&full, cfg, None).map_err(wrap)?;
            let pred = problem.greedy(cfg).map_err(wrap)?.program;
            let rendered = pred.execute(Background::Image(&full), Some(&full)).map_err(wrap)?;
            let acc = covered_pixel_accuracy(&rendered.image, &full, &rendered.covered, opts.tol).map_err(wrap)?;
            (pred, problem, acc)
        }
        EvalMode::Complete => {
            let mask_path = item.mask.as_ref().ok_or_else(|| corpus_error(name, "no mask file"))?;
            let text = std::fs::read_to_string(mask_path).map_err(|e| wrap(Error::io(mask_path, e)))?;
            let known = parse_mask(&text).map_err(wrap)?;
            let partial = PartialImage::new(full.clone(), known).map_err(wrap)?;
            let problem = SynthesisProblem::from_image(partial.image(), cfg, Some(partial.known())).map_err(wrap)?;
            let done = complete(&partial, cfg, ExtrapolateOptions::default()).map_err(wrap)?;
            let cells = done.structure.covered.intersection(&partial.known().complement());
            let acc = covered_pixel_accuracy(&done.image, &full, &cells, opts.tol).map_err(wrap)?;
            (done.program, problem, acc)
        }
    };

    let objective_pred = problem.counts(&pred).map_err(wrap)?.value(cfg.lambda);
    let objective_true = match &truth {
        Some(t) => Some(problem.counts(t).map_err(wrap)?.value(cfg.lambda)),
        None => None,
    };
    let scores = truth.as_ref().map(|t| compare_covers(&pred, t)).transpose().map_err(wrap)?;
    Ok(StructureReport {
        instance: item.name.clone(),
        cover_precision: scores.map(|s| s.precision),
        cover_recall: scores.map(|s| s.recall),
        cover_f1: scores.map(|s| s.f1),
        objective_pred,
        objective_true,
        covered_pixel_accuracy: accuracy,
        runtime_ms: if opts.timing { start.elapsed().as_millis() as u64 } else { 0 },
    })
}

/// Evaluate a generated corpus (manifest + `spec.json`) or a directory of
/// `<stem>.png` images with optional `<stem>.mask` / `<stem>.prog` sidecars.
pub fn evaluate_corpus(dir: impl AsRef<Path>, cfg: &SynthesisConfig, opts: &EvalOptions) -> Result<CorpusReport> {
    let dir = dir.as_ref();
    let mut cfg = cfg.clone();
    let (n, m) = if dir.join(SPEC_FILE).is_file() {
        let spec = read_spec(dir)?;
        if opts.ignore_background && cfg.ignore_color.is_none() {
            cfg.ignore_color = Some(spec.background);
        }
        (opts.grid_n.unwrap_or(spec.grid_n), opts.cell_m.unwrap_or(spec.cell_m))
    } else {
        match (opts.grid_n, opts.cell_m) {
            (Some(n), Some(m)) => (n, m),
            _ => {
                return Err(Error::Config(format!(
                    "{} has no {SPEC_FILE}; grid size N and cell size M must be given",
                    dir.display()
                )))
            }
        }
    };
    cfg.validate()?;
    let items = list_items(dir)?;
    let instances = items
        .par_iter()
        .map(|item| evaluate_item(item, n, m, &cfg, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusReport {
        mode: opts.mode,
        tol: opts.tol,
        aggregate: aggregate(&instances),
        config: cfg,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_corpus, GeneratorSpec};
    use crate::grid::{all_cells, CellIndex};
    use crate::program::{Component, Pair, Sketch};
    use proptest::prelude::*;

    fn prog(n: usize, sketches: &[Sketch]) -> Program {
        let pairs = sketches
            .iter()
            .map(|&s| Pair::new(s, Component::Cell(CellIndex::new(1, 1))))
            .collect();
        Program::new(n, 1, pairs).unwrap()
    }

    #[test]
    fn identical_programs_score_one() {
        let p = prog(5, &[Sketch::new(2, 2, 0, 3, 1, 1)]);
        let s = compare_covers(&p, &p).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let truth = prog(5, &[Sketch::new(1, 1, 0, 1, 1, 0)]);
        let s = compare_covers(&Program::empty(5, 1), &truth).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert!(compare_covers(&truth, &prog(4, &[])).is_err());
    }

    #[test]
    fn six_of_eight_plus_two_spurious() {
        // truth: rows 1-2, cols 1-4 (8 cells); pred: rows 1-2, cols 2-5 (8 cells, 6 shared)
        let truth = prog(6, &[Sketch::new(2, 1, 0, 4, 1, 0)]);
        let pred = prog(6, &[Sketch::new(2, 1, 0, 4, 1, 1)]);
        let s = compare_covers(&pred, &truth).unwrap();
        assert_eq!((s.precision, s.recall), (0.75, 0.75));
        assert!((s.f1 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn pixel_accuracy_examples() {
        let img = GridImage::from_cells(3, 2, |c| vec![(c.linear(3) * 20 + 10) as u8; 12]).unwrap();
        let all = CellMask::full(3);
        assert_eq!(covered_pixel_accuracy(&img, &img, &all, 0).unwrap(), 1.0);
        let inverted = GridImage::new(3, 2, img.pixels().iter().map(|v| 255 - v).collect()).unwrap();
        assert_eq!(covered_pixel_accuracy(&inverted, &img, &all, 0).unwrap(), 0.0);
        assert_eq!(covered_pixel_accuracy(&inverted, &img, &CellMask::empty(3), 0).unwrap(), 1.0);

        let mut off = img.clone();
        off.fill_cell(CellIndex::new(1, 1), [13, 10, 10]).unwrap();
        assert_eq!(covered_pixel_accuracy(&off, &img, &all, 3).unwrap(), 1.0);
        assert!((covered_pixel_accuracy(&off, &img, &all, 2).unwrap() - 8.0 / 9.0).abs() < 1e-12);
        assert!(covered_pixel_accuracy(&img, &GridImage::filled(3, 1, [0; 3]).unwrap(), &all, 0).is_err());
    }

    #[test]
    fn aggregate_median_and_mean() {
        let a = Aggregate::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!((a.count, a.mean, a.median), (4, 4.0, 2.5));
        assert_eq!(Aggregate::of(&[5.0, 1.0, 3.0]).unwrap().median, 3.0);
        assert!(Aggregate::of(&[]).is_none());
    }

    fn spec() -> GeneratorSpec {
        GeneratorSpec {
            grid_n: 6,
            cell_m: 8,
            k: 3,
            noise: false,
            tiles_per_label: 2,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn corpus_report_is_consistent() {
        let dir = tempfile::tempdir().unwrap();
        generate_corpus(&spec(), 4, 1.0 / 3.0, dir.path()).unwrap();
        let cfg = SynthesisConfig {
            eps: 0.01,
            lambda: 36.0,
            k: 12,
            ..Default::default()
        };
        for mode in [EvalMode::Synth, EvalMode::Complete] {
            let opts = EvalOptions {
                mode,
                timing: false,
                ..Default::default()
            };
            let r = evaluate_corpus(dir.path(), &cfg, &opts).unwrap();
            assert_eq!(r.instances.len(), 4);
            assert_eq!(r.config.ignore_color, Some(spec().background));
            assert_eq!(r.aggregate, aggregate(&r.instances));
            for i in &r.instances {
                for v in [i.cover_precision, i.cover_recall, i.cover_f1, Some(i.covered_pixel_accuracy)] {
                    let v = v.unwrap();
                    assert!((0.0..=1.0).contains(&v));
                }
            }
            assert_eq!(evaluate_corpus(dir.path(), &cfg, &opts).unwrap(), r);
        }
    }

    #[test]
    fn plain_image_directory_omits_cover_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let img = GridImage::from_cells(4, 2, |c| vec![if c.u % 2 == 0 { 200 } else { 30 }; 12]).unwrap();
        img.save_png(dir.path().join("a.png")).unwrap();
        std::fs::write(dir.path().join("a.mask"), "gridsynth-mask v1 N=4\n1111\n1111\n1111\n0000\n").unwrap();
        let cfg = SynthesisConfig::default();
        let opts = EvalOptions {
            mode: EvalMode::Complete,
            grid_n: Some(4),
            cell_m: Some(2),
            ..Default::default()
        };
        let r = evaluate_corpus(dir.path(), &cfg, &opts).unwrap();
        assert_eq!(r.instances[0].cover_f1, None);
        assert_eq!(r.instances[0].objective_true, None);
        assert!(!r.aggregate.contains_key("cover_f1"));
        let json = serde_json::to_string(&r.instances[0]).unwrap();
        assert!(!json.contains("cover_f1"));

        let no_size = EvalOptions { grid_n: None, ..opts.clone() };
        assert!(matches!(evaluate_corpus(dir.path(), &cfg, &no_size), Err(Error::Config(_))));
    }

    #[test]
    fn malformed_instance_is_named() {
        let dir = tempfile::tempdir().unwrap();
        generate_corpus(&spec(), 2, 0.0, dir.path()).unwrap();
        std::fs::write(dir.path().join("0001.prog"), "garbage\n").unwrap();
        let err = evaluate_corpus(dir.path(), &SynthesisConfig::default(), &EvalOptions::default()).unwrap_err();
        match err {
            Error::Corpus { instance, .. } => assert_eq!(instance, "0001"),
            other => panic!("unexpected {other}"),
        }
    }

    fn mask_strategy(n: usize) -> impl Strategy<Value = CellMask> {
        proptest::collection::vec(any::<bool>(), n * n)
            .prop_map(move |bits| CellMask::from_cells(n, all_cells(n).filter(|c| bits[c.linear(n)])).unwrap())
    }

    proptest! {
        #[test]
        fn swapping_exchanges_precision_and_recall(a in mask_strategy(5), b in mask_strategy(5)) {
            let ab = compare_cell_sets(&a, &b);
            let ba = compare_cell_sets(&b, &a);
            prop_assert_eq!(ab.precision, ba.recall);
            prop_assert_eq!(ab.recall, ba.precision);
            prop_assert_eq!(ab.f1, ba.f1);
            for v in [ab.precision, ab.recall, ab.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
