//! Experiment drivers behind the CLI verbs. Each returns structured results
//! and writes its tables under the output directory.

use std::path::{Path, PathBuf};

use serde::Serialize;

use rrn_core::data::{make_windows, synthetic_graph_recipe, SeriesDataset, Window, WindowedSplits};
use rrn_core::forecasting::{
    evaluate, model_label, parameter_gradcheck, train, Backbone, BackboneSpec, EvalReport, Forecaster,
    LossSpace, TrainReport,
};
use rrn_core::graph::{certify_graph, GraphCertificate};
use rrn_core::numerics::finite_difference_check;
use rrn_core::numerics::rng;
use rrn_core::transform::RoundtripRow;
use rrn_core::{
    block_lipschitz_bound, center_norm, center_norm_lipschitz, generate_synthetic, roundtrip_report,
    transform_forward, Activation, BlockConfig, InversionConfig, Matrix, ResidualBlock, RrnTransform,
    SpatialGraph, Tensor3,
};

use crate::checkpoint::{load_json, save_json, ForecasterCheckpoint};
use crate::config::{ExperimentConfig, WeightMode};
use crate::csv_io::{load_csv_dataset, write_distances_file, write_table, write_values_file};
use crate::error::{Result, RrnError};

/// Shortest round-trip decimal form; non-finite values print as `inf`/`NaN`.
pub fn fmt(v: f64) -> String {
    v.to_string()
}

/// Dataset for `seed`: the configured CSV pair, or the synthetic generator.
pub fn load_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<SeriesDataset> {
    let d = &cfg.data;
    match (&d.values_csv, &d.distances_csv) {
        (Some(v), Some(g)) => load_csv_dataset(v, g, d.bandwidth, d.threshold),
        _ => Ok(generate_synthetic(
            d.n_nodes,
            d.t_total,
            d.n_features,
            &d.shift.to_spec(d.n_nodes),
            d.graph_density,
            seed,
        )?),
    }
}

pub fn build_transform(cfg: &ExperimentConfig, graph: &SpatialGraph, n_features: usize, seed: u64) -> Result<RrnTransform> {
    Ok(RrnTransform::init(
        graph,
        n_features,
        cfg.model.blocks,
        &cfg.block_config(),
        cfg.inversion_config(),
        seed,
    )?)
}

pub fn build_forecaster(cfg: &ExperimentConfig, graph: &SpatialGraph, n_features: usize, seed: u64, with_rrn: bool) -> Result<Forecaster> {
    let transform = if with_rrn {
        Some(build_transform(cfg, graph, n_features, seed)?)
    } else {
        None
    };
    let backbone = Backbone::init(cfg.backbone_spec(), graph, seed)?;
    Ok(Forecaster::new(transform, backbone)?)
}

fn apply_weight_mode(t: &mut RrnTransform, mode: WeightMode, seed: u64) {
    let mut r = rng::seeded_stream(seed, 4);
    for b in t.blocks_mut() {
        match mode {
            WeightMode::Init => {}
            WeightMode::Saturated => b.saturate_weights(),
            WeightMode::RankOne => b.set_rank_one_weights(&mut r),
        }
    }
}

// ---- certify ----

#[derive(Debug, Clone)]
pub struct CertifyOutcome {
    pub graph: GraphCertificate,
    /// `(center-norm Lipschitz, block bound)` per block.
    pub blocks: Vec<(f64, f64)>,
    pub certified: bool,
}

pub fn certify(cfg: &ExperimentConfig, out: &Path) -> Result<CertifyOutcome> {
    let ds = load_dataset(cfg, cfg.seed)?;
    let graph = certify_graph(ds.graph())?;
    let t = build_transform(cfg, ds.graph(), ds.raw().n_features(), cfg.seed)?;
    let blocks: Vec<(f64, f64)> = t
        .blocks()
        .iter()
        .map(|b| (center_norm_lipschitz(&b.cn), block_lipschitz_bound(b)))
        .collect();
    let certified = t.is_certified() && (graph.spectral_norm - 1.0).abs() < 1e-6;
    let mut rows = vec![
        vec!["graph".into(), "spectral_norm".into(), fmt(graph.spectral_norm)],
        vec!["graph".into(), "symmetric".into(), graph.symmetric.to_string()],
        vec!["graph".into(), "connected_components".into(), graph.connected_components.to_string()],
    ];
    for (i, (cn, bound)) in blocks.iter().enumerate() {
        rows.push(vec![format!("block_{i}"), "center_norm_lipschitz".into(), fmt(*cn)]);
        rows.push(vec![format!("block_{i}"), "lipschitz_bound".into(), fmt(*bound)]);
        rows.push(vec![format!("block_{i}"), "certified".into(), (*bound < 1.0).to_string()]);
    }
    write_table(&out.join("certify.csv"), &["item", "quantity", "value"], &rows)?;
    Ok(CertifyOutcome {
        graph,
        blocks,
        certified,
    })
}

// ---- roundtrip ----

#[derive(Debug, Clone)]
pub struct RoundtripOutcome {
    pub rows: Vec<RoundtripRow>,
    pub bounds: Vec<f64>,
    pub certified: bool,
    /// Certified and within `max_error` at the last grid entry.
    pub passed: bool,
}

/// Round trip of a fresh stack on Gaussian input of `dims`, on a synthetic
/// graph with `dims.1` nodes.
pub fn roundtrip_probe(
    cfg: &ExperimentConfig,
    alpha: f64,
    contraction: f64,
    dims: [usize; 3],
    iterations: &[usize],
    mode: WeightMode,
    seed: u64,
) -> Result<(Vec<RoundtripRow>, Vec<f64>)> {
    let [t_len, n, d] = dims;
    let graph = synthetic_graph_recipe(n, cfg.data.graph_density, seed)?.build()?;
    let block_cfg = BlockConfig {
        alpha,
        contraction_target: contraction,
        ..cfg.block_config()
    };
    let mut t = RrnTransform::init(&graph, d, cfg.model.blocks, &block_cfg, cfg.inversion_config(), seed)?;
    apply_weight_mode(&mut t, mode, seed);
    let x = rng::gaussian_tensor(&mut rng::seeded_stream(seed, 3), (t_len, n, d));
    Ok((roundtrip_report(&x, &t, iterations)?, t.lipschitz_bounds()))
}

pub fn roundtrip(cfg: &ExperimentConfig, out: &Path) -> Result<RoundtripOutcome> {
    let rt = &cfg.roundtrip;
    let (rows, bounds) = roundtrip_probe(
        cfg,
        cfg.model.alpha,
        cfg.model.contraction,
        rt.input_dims,
        &rt.iterations,
        rt.weights,
        cfg.seed,
    )?;
    let certified = bounds.iter().all(|&b| b < 1.0);
    let last = rows.last().map_or(f64::INFINITY, |r| r.mean_abs_error);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.iterations.to_string(), fmt(r.mean_abs_error)])
        .collect();
    write_table(&out.join("roundtrip.csv"), &["iterations", "mean_abs_error"], &table)?;
    Ok(RoundtripOutcome {
        passed: certified && last <= rt.max_error,
        rows,
        bounds,
        certified,
    })
}

// ---- sensitivity ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Contraction,
    Alpha,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Contraction => "contraction",
            SweepAxis::Alpha => "alpha",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SensitivityCell {
    pub value: f64,
    pub roundtrip: Vec<RoundtripRow>,
    /// Test MAE per report step; `+∞` if training or evaluation failed.
    pub mae: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct SensitivityTable {
    pub axis: SweepAxis,
    pub cells: Vec<SensitivityCell>,
}

fn sensitivity_cell(cfg: &ExperimentConfig, ds: &SeriesDataset, windows: &WindowedSplits, alpha: f64, contraction: f64, value: f64) -> Result<SensitivityCell> {
    let s = &cfg.sensitivity;
    let (roundtrip, _) = roundtrip_probe(cfg, alpha, contraction, s.input_dims, &s.iterations, s.weights, cfg.seed)?;

    let mut cell_cfg = cfg.clone();
    cell_cfg.model.alpha = alpha;
    cell_cfg.model.contraction = contraction;
    cell_cfg.train.max_epochs = s.train_epochs;
    let steps = &cfg.data.report_steps;
    let trained = (|| -> rrn_core::Result<EvalReport> {
        let transform = RrnTransform::init(
            ds.graph(),
            ds.raw().n_features(),
            cell_cfg.model.blocks,
            &cell_cfg.block_config(),
            cell_cfg.inversion_config(),
            cfg.seed,
        )?;
        let backbone = Backbone::init(cell_cfg.backbone_spec(), ds.graph(), cfg.seed)?;
        let mut model = Forecaster::new(Some(transform), backbone)?;
        let mut tc = cell_cfg.train_config(cfg.seed);
        tc.require_certified = false;
        train(&mut model, windows, &tc)?;
        evaluate(&model, &windows.test, ds.scaler(), steps)
    })();
    let mae = match trained {
        Ok(rep) => rep.per_step.iter().map(|m| (m.step, if m.mae.is_finite() { m.mae } else { f64::INFINITY })).collect(),
        Err(_) => steps.iter().map(|&st| (st, f64::INFINITY)).collect(),
    };
    Ok(SensitivityCell { value, roundtrip, mae })
}

/// Sweeps one of `alpha` / `contraction` over the configured values, the
/// other held at its model setting.
pub fn sensitivity_sweep(cfg: &ExperimentConfig, axis: SweepAxis) -> Result<SensitivityTable> {
    let s = &cfg.sensitivity;
    let mut data_cfg = cfg.clone();
    data_cfg.data.t_total = s.t_total;
    let ds = load_dataset(&data_cfg, cfg.seed)?;
    let windows = make_windows(&ds, cfg.data.lookback, cfg.data.horizon)?;
    let cells = s
        .values
        .iter()
        .map(|&v| {
            let (a, c) = match axis {
                SweepAxis::Contraction => (cfg.model.alpha, v),
                SweepAxis::Alpha => (v, cfg.model.contraction),
            };
            sensitivity_cell(cfg, &ds, &windows, a, c, v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityTable { axis, cells })
}

/// Wide table: one column per swept value, rows `roundtrip_{iters}` and `mae_{step}`.
pub fn write_sensitivity(table: &SensitivityTable, path: &Path) -> Result<()> {
    let mut header = vec!["row".to_string()];
    header.extend(table.cells.iter().map(|c| format!("{}={}", table.axis.name(), fmt(c.value))));
    let Some(first) = table.cells.first() else {
        return write_table(path, &["row"], &[]);
    };
    let mut rows = Vec::new();
    for (k, r) in first.roundtrip.iter().enumerate() {
        let mut row = vec![format!("roundtrip_{}", r.iterations)];
        row.extend(table.cells.iter().map(|c| fmt(c.roundtrip[k].mean_abs_error)));
        rows.push(row);
    }
    for (k, (step, _)) in first.mae.iter().enumerate() {
        let mut row = vec![format!("mae_{step}")];
        row.extend(table.cells.iter().map(|c| fmt(c.mae[k].1)));
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(path, &header, &rows)
}

pub fn sensitivity(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SensitivityTable>> {
    let mut tables = Vec::new();
    for axis in [SweepAxis::Contraction, SweepAxis::Alpha] {
        let t = sensitivity_sweep(cfg, axis)?;
        write_sensitivity(&t, &out.join(format!("sensitivity_{}.csv", axis.name())))?;
        tables.push(t);
    }
    Ok(tables)
}

// ---- train-eval ----

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub model: String,
    pub seed: u64,
    pub report: Option<EvalReport>,
    pub train: Option<TrainReport>,
    pub error: Option<String>,
}

impl SeedResult {
    pub fn overall_mae(&self) -> f64 {
        self.report.as_ref().map_or(f64::INFINITY, |r| r.overall.mae)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainEvalSummary {
    pub results: Vec<SeedResult>,
}

impl TrainEvalSummary {
    /// Overall test MAE per seed, in seed order; failures are `+∞`.
    pub fn overall_mae(&self, model: &str) -> Vec<f64> {
        self.results
            .iter()
            .filter(|r| r.model == model)
            .map(SeedResult::overall_mae)
            .collect()
    }

    pub fn mean_overall_mae(&self, model: &str) -> f64 {
        let v = self.overall_mae(model);
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn curve_rows(rep: &TrainReport) -> Vec<Vec<String>> {
    rep.curve
        .iter()
        .map(|e| vec![e.epoch.to_string(), fmt(e.train_mae), fmt(e.val_mae)])
        .collect()
}

fn eval_rows(rep: &EvalReport) -> Vec<Vec<String>> {
    rep.per_step
        .iter()
        .map(|m| vec![m.step.to_string(), fmt(m.mae), fmt(m.rmse)])
        .chain(std::iter::once(vec!["all".into(), fmt(rep.overall.mae), fmt(rep.overall.rmse)]))
        .collect()
}

fn run_seed(cfg: &ExperimentConfig, ds: &SeriesDataset, windows: &WindowedSplits, seed: u64, with_rrn: bool, out: &Path) -> SeedResult {
    let mut model = match build_forecaster(cfg, ds.graph(), ds.raw().n_features(), seed, with_rrn) {
        Ok(m) => m,
        Err(e) => {
            return SeedResult {
                model: if with_rrn { "rrn" } else { "plain" }.into(),
                seed,
                report: None,
                train: None,
                error: Some(e.to_string()),
            }
        }
    };
    let label = model_label(&model);
    let stem = label.replace('+', "_");
    let run = (|| -> Result<(TrainReport, EvalReport)> {
        let tr = train(&mut model, windows, &cfg.train_config(seed))?;
        let ev = evaluate(&model, &windows.test, ds.scaler(), &cfg.data.report_steps)?;
        write_table(
            &out.join(format!("loss_curve_{stem}_seed{seed}.csv")),
            &["epoch", "train_mae", "val_mae"],
            &curve_rows(&tr),
        )?;
        write_table(
            &out.join(format!("eval_{stem}_seed{seed}.csv")),
            &["horizon", "mae", "rmse"],
            &eval_rows(&ev),
        )?;
        save_json(
            &out.join(format!("checkpoint_{stem}_seed{seed}.json")),
            &ForecasterCheckpoint::from_forecaster(&model),
        )?;
        Ok((tr, ev))
    })();
    match run {
        Ok((tr, ev)) => SeedResult {
            model: label,
            seed,
            report: Some(ev),
            train: Some(tr),
            error: None,
        },
        Err(e) => SeedResult {
            model: label,
            seed,
            report: None,
            train: None,
            error: Some(e.to_string()),
        },
    }
}

fn persistence_result(cfg: &ExperimentConfig, ds: &SeriesDataset, windows: &WindowedSplits, seed: u64) -> Result<SeedResult> {
    let backbone = Backbone::persistence(cfg.data.lookback, cfg.data.horizon, ds.graph())?;
    let model = Forecaster::new(None, backbone)?;
    let ev = evaluate(&model, &windows.test, ds.scaler(), &cfg.data.report_steps)?;
    Ok(SeedResult {
        model: "persistence".into(),
        seed,
        report: Some(ev),
        train: None,
        error: None,
    })
}

/// Trains and evaluates the RRN model for every seed, plus the plain
/// backbone and persistence when `train.ablate` is set.
pub fn train_eval(cfg: &ExperimentConfig, out: &Path) -> Result<TrainEvalSummary> {
    let mut summary = TrainEvalSummary::default();
    for &seed in &cfg.seeds {
        let ds = load_dataset(cfg, seed)?;
        let windows = make_windows(&ds, cfg.data.lookback, cfg.data.horizon)?;
        summary.results.push(run_seed(cfg, &ds, &windows, seed, true, out));
        if cfg.train.ablate {
            summary.results.push(run_seed(cfg, &ds, &windows, seed, false, out));
            summary.results.push(persistence_result(cfg, &ds, &windows, seed)?);
        }
    }
    for r in &summary.results {
        if let Some(e) = &r.error {
            eprintln!("{} seed {}: {e}", r.model, r.seed);
        }
    }
    write_train_eval(cfg, &summary, &out.join("train_eval.csv"))?;
    Ok(summary)
}

fn write_train_eval(cfg: &ExperimentConfig, s: &TrainEvalSummary, path: &Path) -> Result<()> {
    let mut models: Vec<&str> = Vec::new();
    for r in &s.results {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let steps: Vec<Option<usize>> = cfg.data.report_steps.iter().map(|&s| Some(s)).chain([None]).collect();
    let metric = |r: &SeedResult, step: Option<usize>| -> (f64, f64) {
        let Some(rep) = &r.report else {
            return (f64::INFINITY, f64::INFINITY);
        };
        let m = match step {
            Some(st) => rep.at(st).copied(),
            None => Some(rep.overall),
        };
        m.map_or((f64::INFINITY, f64::INFINITY), |m| (m.mae, m.rmse))
    };
    let label = |step: Option<usize>| step.map_or("all".to_string(), |s| s.to_string());
    let mut rows = Vec::new();
    for model in &models {
        let runs: Vec<&SeedResult> = s.results.iter().filter(|r| r.model == *model).collect();
        for r in &runs {
            for &st in &steps {
                let (mae, rmse) = metric(r, st);
                let status = r.error.as_deref().map_or("ok".to_string(), |e| format!("failed: {e}"));
                rows.push(vec![model.to_string(), r.seed.to_string(), label(st), fmt(mae), fmt(rmse), status]);
            }
        }
        for &st in &steps {
            let n = runs.len() as f64;
            let (mae, rmse) = runs.iter().fold((0.0, 0.0), |acc, r| {
                let (a, b) = metric(r, st);
                (acc.0 + a / n, acc.1 + b / n)
            });
            rows.push(vec![model.to_string(), "mean".into(), label(st), fmt(mae), fmt(rmse), "mean".into()]);
        }
    }
    write_table(path, &["model", "seed", "horizon", "mae", "rmse", "status"], &rows)
}

// ---- density ----

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub node: usize,
    pub space: &'static str,
    pub bin_left: f64,
    pub bin_right: f64,
    pub density: f64,
}

#[derive(Debug, Clone)]
pub struct DensityReport {
    pub rows: Vec<DensityRow>,
    /// Population std across nodes of each node's mean value.
    pub original_dispersion: f64,
    pub transformed_dispersion: f64,
    /// Per-node histogram mode (bin center) in each space.
    pub original_modes: Vec<f64>,
    pub transformed_modes: Vec<f64>,
    /// Per-node bin width (shared by both spaces).
    pub bin_widths: Vec<f64>,
}

fn pooled_by_node(xs: &[Tensor3]) -> Vec<Vec<f64>> {
    let n = xs.first().map_or(0, Tensor3::n_nodes);
    let d = xs.first().map_or(0, Tensor3::n_features);
    let mut by_node = vec![Vec::new(); n];
    for x in xs {
        for t in 0..x.len_time() {
            for (i, v) in x.frame(t).iter().enumerate() {
                by_node[i / d].push(*v);
            }
        }
    }
    by_node
}

pub fn dispersion_of_means(by_node: &[Vec<f64>]) -> f64 {
    let means: Vec<f64> = by_node.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    let mu = means.iter().sum::<f64>() / means.len() as f64;
    (means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / means.len() as f64).sqrt()
}

fn histogram(values: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    let scale = 1.0 / (values.len() as f64 * width);
    counts.iter().map(|c| c * scale).collect()
}

/// Per-node histograms of the windows' inputs before and after `t`. Both
/// spaces of a node share bin edges spanning their pooled range.
pub fn density_report(t: &RrnTransform, windows: &[Window], bins: usize) -> Result<DensityReport> {
    if windows.is_empty() || bins == 0 {
        return Err(RrnError::Config("density needs windows and at least one bin".into()));
    }
    let xs: Vec<Tensor3> = windows.iter().map(|w| w.x.clone()).collect();
    let zs = xs
        .iter()
        .map(|x| transform_forward(x, t))
        .collect::<rrn_core::Result<Vec<_>>>()?;
    let orig = pooled_by_node(&xs);
    let trans = pooled_by_node(&zs);
    let mut rows = Vec::new();
    let (mut om, mut tm, mut widths) = (Vec::new(), Vec::new(), Vec::new());
    for node in 0..orig.len() {
        let all = orig[node].iter().chain(&trans[node]);
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let mut hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1.0;
        }
        let width = (hi - lo) / bins as f64;
        widths.push(width);
        for (space, values, modes) in [("original", &orig[node], &mut om), ("transformed", &trans[node], &mut tm)] {
            let h = histogram(values, lo, width, bins);
            let top = h
                .iter()
                .enumerate()
                .fold(0, |best, (k, &v)| if v > h[best] { k } else { best });
            modes.push(lo + (top as f64 + 0.5) * width);
            for (k, density) in h.into_iter().enumerate() {
                rows.push(DensityRow {
                    node,
                    space,
                    bin_left: lo + k as f64 * width,
                    bin_right: lo + (k + 1) as f64 * width,
                    density,
                });
            }
        }
    }
    Ok(DensityReport {
        rows,
        original_dispersion: dispersion_of_means(&orig),
        transformed_dispersion: dispersion_of_means(&trans),
        original_modes: om,
        transformed_modes: tm,
        bin_widths: widths,
    })
}

fn spread(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn write_density(rep: &DensityReport, out: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| vec![r.node.to_string(), r.space.into(), fmt(r.bin_left), fmt(r.bin_right), fmt(r.density)])
        .collect();
    write_table(&out.join("density.csv"), &["node", "space", "bin_left", "bin_right", "density"], &rows)?;
    let summary = vec![
        vec!["original".into(), fmt(rep.original_dispersion), fmt(spread(&rep.original_modes))],
        vec!["transformed".into(), fmt(rep.transformed_dispersion), fmt(spread(&rep.transformed_modes))],
    ];
    write_table(&out.join("density_summary.csv"), &["space", "mean_dispersion", "mode_range"], &summary)
}

/// Test-window histograms for a checkpointed or freshly trained RRN model.
pub fn density(cfg: &ExperimentConfig, out: &Path) -> Result<DensityReport> {
    let ds = load_dataset(cfg, cfg.seed)?;
    let windows = make_windows(&ds, cfg.data.lookback, cfg.data.horizon)?;
    let model = match &cfg.density.checkpoint {
        Some(p) => load_json::<ForecasterCheckpoint>(p)?.to_forecaster(ds.graph())?,
        None => {
            let mut m = build_forecaster(cfg, ds.graph(), ds.raw().n_features(), cfg.seed, true)?;
            let mut tc = cfg.train_config(cfg.seed);
            tc.max_epochs = cfg.density.train_epochs;
            train(&mut m, &windows, &tc)?;
            save_json(&out.join("density_model.json"), &ForecasterCheckpoint::from_forecaster(&m))?;
            m
        }
    };
    let t = model
        .transform
        .as_ref()
        .ok_or_else(|| RrnError::Config("density needs a model with an RRN transform".into()))?;
    let rep = density_report(t, &windows.test, cfg.density.bins)?;
    write_density(&rep, out)?;
    Ok(rep)
}

// ---- gradcheck ----

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub name: &'static str,
    pub max_relative_error: f64,
    pub passed: bool,
}

fn path_graph(n: usize) -> Result<SpatialGraph> {
    let a = Matrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
    Ok(SpatialGraph::from_adjacency(a)?)
}

fn toy_block(graph: &SpatialGraph, activation: Activation, r: &mut rng::SeededRng) -> Result<ResidualBlock> {
    let cfg = BlockConfig {
        alpha: 0.9,
        contraction_target: 0.9,
        activation,
        hidden: Some(3),
    };
    let mut b = ResidualBlock::init(graph, 2, &cfg, r)?;
    b.saturate_weights();
    b.cn.gamma = rng::uniform_matrix(r, 3, 2, 1.0);
    b.cn.beta = rng::gaussian_matrix(r, 3, 2).scaled(0.3);
    Ok(b)
}

/// Smallest |pre-activation| of `b` at `x`.
fn kink_margin(b: &ResidualBlock, x: &Tensor3) -> Result<f64> {
    let mixed = center_norm(x, &b.cn)?.graph_mix(b.graph().normalized())?;
    let pre = mixed.feature_matmul(b.weights.matrices()[0])?;
    Ok(pre.as_slice().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())))
}

/// Every gradient check on a 4×3×2 toy instance.
pub fn gradcheck_rows(cfg: &ExperimentConfig) -> Result<Vec<GradcheckRow>> {
    let gc = &cfg.gradcheck;
    let eps = gc.eps;
    let dims = (4, 3, 2);
    let g = path_graph(3)?;
    let mut r = rng::seeded(cfg.seed);
    let x = rng::gaussian_tensor(&mut r, dims);
    let mut out: Vec<(&'static str, f64)> = Vec::new();

    let gamma = rng::uniform_matrix(&mut r, 3, 2, 1.0);
    let beta = rng::gaussian_matrix(&mut r, 3, 2);
    out.push((
        "center_norm",
        finite_difference_check(
            |tape, v| {
                let gm = tape.matrix_leaf(gamma.clone());
                let bt = tape.matrix_leaf(beta.clone());
                let c = tape.center_norm(v, gm, bt, 0.9)?;
                tape.sum_squares(c)
            },
            &x,
            eps,
        )?,
    ));

    let w = rng::gaussian_matrix(&mut r, 2, 2);
    out.push((
        "linear",
        finite_difference_check(
            |tape, v| {
                let wv = tape.matrix_leaf(w.clone());
                let y = tape.feature_matmul(v, wv)?;
                tape.sum(y)
            },
            &x,
            eps,
        )?,
    ));

    let tanh_block = toy_block(&g, Activation::Tanh, &mut r)?;
    out.push((
        "tanh_block",
        finite_difference_check(
            |tape, v| {
                let vars = tanh_block.register(tape);
                let y = tanh_block.forward_on_tape(tape, v, &vars)?;
                tape.sum_squares(y)
            },
            &x,
            eps,
        )?,
    ));

    let unrolled = InversionConfig {
        max_iters: gc.unroll_iters,
        tol: f64::MIN_POSITIVE,
        unroll_for_gradient: true,
    };
    out.push((
        "unrolled_inverse",
        finite_difference_check(
            |tape, v| {
                let vars = tanh_block.register(tape);
                let y = tanh_block.inverse_on_tape(tape, v, &vars, &unrolled)?;
                tape.sum_squares(y)
            },
            &x,
            eps,
        )?,
    ));

    // relu is checked only where every pre-activation clears the kink by 100·eps
    let relu_block = toy_block(&g, Activation::Relu, &mut r)?;
    let mut xr = rng::gaussian_tensor(&mut r, dims);
    for _ in 0..10_000 {
        if kink_margin(&relu_block, &xr)? > 100.0 * eps {
            break;
        }
        xr = rng::gaussian_tensor(&mut r, dims);
    }
    out.push((
        "relu_block",
        finite_difference_check(
            |tape, v| {
                let vars = relu_block.register(tape);
                let y = relu_block.forward_on_tape(tape, v, &vars)?;
                tape.sum_squares(y)
            },
            &xr,
            eps,
        )?,
    ));

    for (name, spec) in [
        ("per_node_linear", BackboneSpec::per_node_linear(4, 2)),
        ("graph_mlp", BackboneSpec::graph_mlp(4, 2, 3)),
    ] {
        let b = Backbone::init(spec, &g, cfg.seed)?;
        out.push((
            name,
            finite_difference_check(
                |tape, v| {
                    let vars = b.register(tape);
                    let y = b.forward_on_tape(tape, v, &vars)?;
                    tape.sum_squares(y)
                },
                &x,
                eps,
            )?,
        ));
    }

    let blocks = vec![tanh_block.clone(), toy_block(&g, Activation::Tanh, &mut r)?];
    let transform = RrnTransform::from_blocks(&g, blocks, unrolled)?;
    let model = Forecaster::new(Some(transform), Backbone::init(BackboneSpec::per_node_linear(4, 2), &g, cfg.seed)?)?;
    let window = Window {
        start: 0,
        x: x.clone(),
        y: rng::gaussian_tensor(&mut r, (2, 3, 2)),
    };
    out.push(("end_to_end", parameter_gradcheck(&model, &window, LossSpace::Original, eps)?));

    Ok(out
        .into_iter()
        .map(|(name, e)| GradcheckRow {
            name,
            max_relative_error: e,
            passed: e < gc.tolerance,
        })
        .collect())
}

pub fn gradcheck(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<GradcheckRow>> {
    let rows = gradcheck_rows(cfg)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.name.into(),
                fmt(r.max_relative_error),
                fmt(cfg.gradcheck.tolerance),
                r.passed.to_string(),
            ]
        })
        .collect();
    write_table(
        &out.join("gradcheck.csv"),
        &["check", "max_relative_error", "tolerance", "passed"],
        &table,
    )?;
    Ok(rows)
}

// ---- generate ----

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorRecord {
    pub seed: u64,
    pub n_nodes: usize,
    pub t_total: usize,
    pub n_features: usize,
    pub graph_density: f64,
    /// Kernel parameters that rebuild the graph from `distances.csv`.
    pub bandwidth: f64,
    pub threshold: f64,
    pub shift: crate::config::ShiftConfig,
}

/// Writes `values.csv`, `distances.csv` and `generator.json`.
pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let d = &cfg.data;
    let ds = generate_synthetic(d.n_nodes, d.t_total, d.n_features, &d.shift.to_spec(d.n_nodes), d.graph_density, cfg.seed)?;
    let recipe = synthetic_graph_recipe(d.n_nodes, d.graph_density, cfg.seed)?;
    let paths = [out.join("values.csv"), out.join("distances.csv"), out.join("generator.json")];
    write_values_file(&paths[0], ds.raw())?;
    write_distances_file(&paths[1], &recipe.distances)?;
    save_json(
        &paths[2],
        &GeneratorRecord {
            seed: cfg.seed,
            n_nodes: d.n_nodes,
            t_total: d.t_total,
            n_features: d.n_features,
            graph_density: d.graph_density,
            bandwidth: recipe.bandwidth,
            threshold: recipe.threshold,
            shift: d.shift.clone(),
        },
    )?;
    Ok(paths.to_vec())
}
