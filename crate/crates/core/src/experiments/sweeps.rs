use super::stats::paired_smaller;
use super::table::{GapRow, ResultRow, ResultTable, SweepValue, DESK_SCALE_CAVEAT};
use super::{run_parallel, Data, ExperimentConfig, Sweep, Variant};
use crate::error::{NgnnError, Result};
use crate::graph::PerturbMode;
use crate::model::{ModelConfig, NgnnPosition};
use crate::train::{mean_std, RunResult};

/// One table row before training: a model at a sweep coordinate.
struct Cell {
    value: SweepValue,
    variant: String,
    model: ModelConfig,
    perturb: Option<PerturbMode>,
}

struct CellRuns {
    runs: Vec<RunResult>,
    edges_added: Option<usize>,
}

/// Trains every cell once per seed. Each (cell, seed) pair is an
/// independent job; perturbations use the run seed.
fn run_cells(cfg: &ExperimentConfig, data: &Data, cells: &[Cell], threads: usize) -> Result<Vec<CellRuns>> {
    let seeds = cfg.seeds();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let raw_dim = data.feature_dim();
    let raw_edges = data.num_undirected_edges();
    let out = run_parallel(threads, &jobs, |&(c, seed)| {
        let cell = &cells[c];
        let train = cfg.train.clone().with_seed(seed);
        match cell.perturb {
            None => Ok((data.train(&cell.model, &train)?, None)),
            Some(mode) => {
                let noisy = data.perturb(mode, seed)?;
                let mut model = cell.model.clone();
                if model.in_dim == raw_dim {
                    model.in_dim = noisy.feature_dim();
                }
                let added = matches!(mode, PerturbMode::EdgeAdd { .. })
                    .then(|| noisy.num_undirected_edges() - raw_edges);
                Ok((noisy.train(&model, &train)?, added))
            }
        }
    })?;
    let mut it = out.into_iter();
    Ok(cells
        .iter()
        .map(|_| {
            let (runs, added): (Vec<_>, Vec<_>) = it.by_ref().take(seeds.len()).unzip();
            CellRuns {
                runs,
                edges_added: added[0],
            }
        })
        .collect())
}

fn row(cell: &Cell, r: &CellRuns) -> ResultRow {
    let metrics: Vec<f64> = r.runs.iter().map(|x| x.test_metric).collect();
    let (mean, std) = mean_std(&metrics);
    let epoch: Vec<f64> = r.runs.iter().map(RunResult::mean_epoch_seconds).collect();
    ResultRow {
        sweep_value: cell.value.clone(),
        mean,
        std,
        params: r.runs[0].param_count,
        epoch_s: mean_std(&epoch).0,
        variant: cell.variant.clone(),
        hidden: cell.model.hidden_dim,
        edges_added: r.edges_added,
        drop: None,
        seeds: r.runs.iter().map(|x| x.seed).collect(),
        metrics,
    }
}

fn table(cfg: &ExperimentConfig, command: &str, results: &[CellRuns], rows: Vec<ResultRow>, gaps: Vec<GapRow>) -> ResultTable {
    ResultTable {
        command: command.into(),
        metric: results.first().map(|r| r.runs[0].metric.clone()).unwrap_or_default(),
        caveat: DESK_SCALE_CAVEAT.into(),
        dataset: cfg.dataset.display().to_string(),
        runs: cfg.runs,
        base_seed: cfg.seed,
        rows,
        gaps,
    }
}

/// Runs the comparison variants over a list of noise levels and records
/// each variant's degradation relative to its first level, plus the
/// per-seed degradation gap of every variant against `baseline`.
fn perturbation_sweep(
    cfg: &ExperimentConfig,
    data: &Data,
    threads: usize,
    command: &str,
    levels: &[f64],
    mode: impl Fn(f64) -> PerturbMode,
) -> Result<ResultTable> {
    let mut variants = Vec::new();
    for &v in &cfg.variants {
        if !variants.iter().any(|(w, _)| *w == v) {
            variants.push((v, v.apply(&cfg.model)?));
        }
    }
    let mut cells = Vec::new();
    for &level in levels {
        for (v, model) in &variants {
            let m = mode(level);
            // Zero additive noise is the identity; concatenating zeros is not.
            let identity = level == 0.0 && !matches!(m, PerturbMode::FeatureConcat { .. });
            cells.push(Cell {
                value: SweepValue::Number(level),
                variant: v.name().into(),
                model: model.clone(),
                perturb: (!identity).then_some(m),
            });
        }
    }
    let results = run_cells(cfg, data, &cells, threads)?;
    let nv = variants.len();
    let metrics = |i: usize| -> Vec<f64> { results[i].runs.iter().map(|r| r.test_metric).collect() };
    let per_seed_drop = |level: usize, v: usize| -> Vec<f64> {
        metrics(v).iter().zip(metrics(level * nv + v)).map(|(a, b)| a - b).collect()
    };

    let mut rows: Vec<ResultRow> = cells.iter().zip(&results).map(|(c, r)| row(c, r)).collect();
    for i in 0..rows.len() {
        rows[i].drop = Some(rows[i % nv].mean - rows[i].mean);
    }
    let mut gaps = Vec::new();
    if let Some(b) = variants.iter().position(|(v, _)| *v == Variant::Baseline) {
        for level in 1..levels.len() {
            let base = per_seed_drop(level, b);
            for v in (0..nv).filter(|&v| v != b) {
                let cand = per_seed_drop(level, v);
                let (vd, bd) = (mean_std(&cand).0, mean_std(&base).0);
                gaps.push(GapRow {
                    sweep_value: SweepValue::Number(levels[level]),
                    variant: variants[v].0.name().into(),
                    baseline: Variant::Baseline.name().into(),
                    variant_drop: vd,
                    baseline_drop: bd,
                    gap: vd - bd,
                    test: paired_smaller(&cand, &base),
                });
            }
        }
    }
    Ok(table(cfg, command, &results, rows, gaps))
}

/// Feature-noise sweep (`feature_add` or `feature_concat` axis).
pub fn noise_sweep(cfg: &ExperimentConfig, data: &Data, threads: usize) -> Result<ResultTable> {
    cfg.validate()?;
    match &cfg.sweep {
        Some(Sweep::FeatureAdd { sigmas }) => {
            perturbation_sweep(cfg, data, threads, "noise-sweep", sigmas, |sigma| PerturbMode::FeatureAdd { sigma })
        }
        Some(Sweep::FeatureConcat { sigmas }) => perturbation_sweep(cfg, data, threads, "noise-sweep", sigmas, |sigma| {
            PerturbMode::FeatureConcat { sigma }
        }),
        _ => Err(wrong_axis("noise-sweep", "feature_add or feature_concat", cfg)),
    }
}

/// Random-edge sweep (`edge_noise` axis); `edges_added` records the
/// injected edge count.
pub fn edge_noise_sweep(cfg: &ExperimentConfig, data: &Data, threads: usize) -> Result<ResultTable> {
    cfg.validate()?;
    match &cfg.sweep {
        Some(Sweep::EdgeNoise { ratios }) => {
            perturbation_sweep(cfg, data, threads, "edge-noise-sweep", ratios, |ratio| PerturbMode::EdgeAdd { ratio })
        }
        _ => Err(wrong_axis("edge-noise-sweep", "edge_noise", cfg)),
    }
}

/// NGNN depth `k` crossed with hidden width. Blocks of `k` relu layers go
/// where the configured model puts them (hidden layers by default).
pub fn depth_sweep(cfg: &ExperimentConfig, data: &Data, threads: usize) -> Result<ResultTable> {
    cfg.validate()?;
    let Some(Sweep::NgnnDepth { depths, hidden }) = &cfg.sweep else {
        return Err(wrong_axis("depth-sweep", "ngnn_depth", cfg));
    };
    let widths = if hidden.is_empty() { vec![cfg.model.hidden_dim] } else { hidden.clone() };
    let position = match cfg.model.ngnn_position {
        NgnnPosition::None => NgnnPosition::Hidden,
        p => p,
    };
    let mut cells = Vec::new();
    for &h in &widths {
        for &k in depths {
            let base = ModelConfig {
                hidden_dim: h,
                ..cfg.model.clone()
            };
            let (model, variant) = if k == 0 {
                (base.with_ngnn(NgnnPosition::None, ""), "baseline".to_string())
            } else {
                (base.with_ngnn(position, &format!("{k}-relu")), format!("ngnn{k}"))
            };
            model.ngnn_activations()?;
            cells.push(Cell {
                value: SweepValue::Number(k as f64),
                variant,
                model,
                perturb: None,
            });
        }
    }
    let results = run_cells(cfg, data, &cells, threads)?;
    let rows = cells.iter().zip(&results).map(|(c, r)| row(c, r)).collect();
    Ok(table(cfg, "depth-sweep", &results, rows, Vec::new()))
}

/// One row per attachment policy, all sharing the configured NGNN spec
/// and seeds.
pub fn position_sweep(cfg: &ExperimentConfig, data: &Data, threads: usize) -> Result<ResultTable> {
    cfg.validate()?;
    let Some(Sweep::Position { positions }) = &cfg.sweep else {
        return Err(wrong_axis("position-sweep", "position", cfg));
    };
    if cfg.model.ngnn_spec.trim().is_empty() {
        return Err(NgnnError::Config("position sweep needs model.ngnn_spec".into()));
    }
    let positions = if positions.is_empty() { NgnnPosition::ALL.to_vec() } else { positions.clone() };
    let mut cells = Vec::new();
    for p in positions {
        let model = cfg.model.clone().with_ngnn(p, &cfg.model.ngnn_spec);
        model.ngnn_activations()?;
        cells.push(Cell {
            value: SweepValue::Text(p.name().into()),
            variant: p.name().into(),
            model,
            perturb: None,
        });
    }
    let results = run_cells(cfg, data, &cells, threads)?;
    let rows = cells.iter().zip(&results).map(|(c, r)| row(c, r)).collect();
    Ok(table(cfg, "position-sweep", &results, rows, Vec::new()))
}

fn wrong_axis(command: &str, want: &str, cfg: &ExperimentConfig) -> NgnnError {
    let got = cfg.sweep.as_ref().map_or("none", Sweep::axis);
    NgnnError::Config(format!("{command} needs sweep axis {want}, config has {got}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{generate_sbm, SbmSpec};
    use crate::model::Arch;
    use crate::train::TrainConfig;
    use std::path::PathBuf;

    fn data() -> Data {
        let mut s = SbmSpec::new(120, 2, 6, 0.08, 0.01);
        s.separation = 1.5;
        Data::Node(generate_sbm(&s).unwrap())
    }

    fn cfg(sweep: Sweep) -> ExperimentConfig {
        ExperimentConfig {
            dataset: PathBuf::from("mem"),
            task: Default::default(),
            model: ModelConfig::new(Arch::Sage, 0, 8, 0),
            train: TrainConfig::full_graph(4),
            runs: 3,
            seed: 5,
            sweep: Some(sweep),
            variants: Variant::ALL.to_vec(),
        }
    }

    #[test]
    fn zero_noise_rows_match_plain_runs() {
        let d = data();
        let c = cfg(Sweep::FeatureAdd { sigmas: vec![0.0, 2.0] });
        let t = noise_sweep(&c, &d, 2).unwrap();
        assert_eq!(t.rows.len(), 10);
        assert_eq!(t.metric, "accuracy");
        let plain: Vec<f64> = c
            .seeds()
            .iter()
            .map(|&s| d.train(&c.model, &c.train.clone().with_seed(s)).unwrap().test_metric)
            .collect();
        let base = t.row("baseline", &SweepValue::Number(0.0)).unwrap();
        assert_eq!(base.metrics, plain);
        assert_eq!(base.seeds, vec![5, 6, 7]);
        assert_eq!(base.drop, Some(0.0));
        // Four non-baseline variants at one non-zero level.
        assert_eq!(t.gaps.len(), 4);
        let g = &t.gaps[3];
        let noisy = t.row("ngnn2", &SweepValue::Number(2.0)).unwrap();
        let clean = t.row("ngnn2", &SweepValue::Number(0.0)).unwrap();
        assert!((g.variant_drop - (clean.mean - noisy.mean)).abs() < 1e-12);
        assert_eq!(g.test.wins + g.test.losses + g.test.ties, 3);
    }

    #[test]
    fn concat_doubles_input_width() {
        let d = data();
        let mut c = cfg(Sweep::FeatureConcat { sigmas: vec![0.0, 1.0] });
        c.variants = vec![Variant::Baseline];
        c.runs = 1;
        let t = noise_sweep(&c, &d, 1).unwrap();
        // SAGE: 2*in*out + out per layer, in 12 -> 8 -> 8 -> 2.
        let expected = (2 * 12 * 8 + 8) + (2 * 8 * 8 + 8) + (2 * 8 * 2 + 2);
        assert!(t.rows.iter().all(|r| r.params == expected));
    }

    #[test]
    fn edge_noise_counts_added_edges() {
        let d = data();
        let mut c = cfg(Sweep::EdgeNoise { ratios: vec![0.0, 0.5] });
        c.variants = vec![Variant::Baseline, Variant::Ngnn2];
        let t = edge_noise_sweep(&c, &d, 1).unwrap();
        let e = d.num_undirected_edges();
        assert_eq!(t.rows[0].edges_added, None);
        assert_eq!(t.rows[2].edges_added, Some((0.5 * e as f64).round() as usize));
        assert_eq!(t.gaps.len(), 1);
    }

    #[test]
    fn depth_and_position_rows() {
        let d = data();
        let c = cfg(Sweep::NgnnDepth {
            depths: vec![0, 1, 2],
            hidden: vec![4, 8],
        });
        let t = depth_sweep(&c, &d, 2).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.rows[4].variant, "ngnn1");
        assert_eq!(t.rows[4].hidden, 8);
        // One extra 8x8 layer per hidden GNN layer.
        assert_eq!(t.rows[4].params - t.rows[3].params, 8 * 8 + 8);

        let mut c = cfg(Sweep::Position { positions: vec![] });
        assert!(position_sweep(&c, &d, 1).is_err());
        c.model.ngnn_spec = "1-relu".into();
        let t = position_sweep(&c, &d, 1).unwrap();
        let names: Vec<String> = t.rows.iter().map(|r| r.sweep_value.to_string()).collect();
        assert_eq!(names, ["none", "input", "hidden", "output", "all"]);
        assert!(t.rows.iter().all(|r| r.seeds == t.rows[0].seeds));
        assert!(noise_sweep(&c, &d, 1).unwrap_err().is_config_error());
    }
}
