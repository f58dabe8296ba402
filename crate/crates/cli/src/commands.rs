use std::path::Path;
use std::time::Instant;

use nrb_core::artifact::{load_basis, save_basis};
use nrb_core::exact::solve_ground_state;
use nrb_core::greedy::{greedy_select, Snapshot};
use nrb_core::online::{energy_heatmap, online_minimize, refine_minima};
use nrb_core::slater::{Slater, SlaterMixture};
use nrb_core::width::{
    analytic_tk_spectrum, discrete_kernel_spectrum, icdf_snapshot_grid, l2_snapshot_grid, pod_width_curve, WidthCurve,
};
use nrb_core::{NucleiConfig, ReducedBasis};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, Interval, TestSet};
use crate::error::CliError;
use crate::output::{float, header, Output};

fn ground_energy(cfg: &ExperimentConfig, r: f64) -> Result<f64, CliError> {
    let nuclei = cfg.nuclei(r)?;
    solve_ground_state(&nuclei)
        .map(|g| g.energy)
        .map_err(|e| CliError::Numerical(format!("exact solve at r = {r}: {e}")))
}

pub fn solve(cfg: &ExperimentConfig, out: &Output, points: Option<Vec<f64>>) -> Result<(), CliError> {
    let start = Instant::now();
    let points = points.unwrap_or_else(|| cfg.solve_points());
    let m = cfg.charges.len();
    let rows = points
        .par_iter()
        .map(|&r| {
            let gs = solve_ground_state(&cfg.nuclei(r)?)
                .map_err(|e| CliError::Numerical(format!("exact solve at r = {r}: {e}")))?;
            let mut row = vec![float(r), float(gs.zeta)];
            row.extend(gs.pi.iter().map(|&p| float(p)));
            row.push(float(gs.energy));
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut cols = header(&["r", "zeta"]);
    cols.extend((1..=m).map(|i| format!("pi_{i}")));
    cols.push("energy".into());
    out.csv("solve.csv", &cols, &rows)?;
    out.metadata("solve", start.elapsed(), json!({ "points": points.len() }))?;
    Ok(())
}

fn training_snapshots(cfg: &ExperimentConfig) -> Result<Vec<Snapshot>, CliError> {
    cfg.training
        .points()
        .par_iter()
        .map(|&r| {
            let gs = solve_ground_state(&cfg.nuclei(r)?)
                .map_err(|e| CliError::Numerical(format!("exact solve at r = {r}: {e}")))?;
            Ok(Snapshot { parameter: r, mixture: gs.mixture() })
        })
        .collect()
}

pub fn offline(cfg: &ExperimentConfig, out: &Output, basis_path: &Path) -> Result<(), CliError> {
    let start = Instant::now();
    let training = training_snapshots(cfg)?;
    let basis = greedy_select(&training, cfg.basis_size, cfg.charges.clone(), (cfg.training.lo, cfg.training.hi))?;
    save_basis(&basis, basis_path)?;
    let opt = |v: Option<f64>| v.map(float).unwrap_or_default();
    let rows: Vec<Vec<String>> = basis
        .history
        .iter()
        .map(|h| {
            vec![
                h.basis_size.to_string(),
                float(h.max_error),
                float(h.mean_error),
                float(h.max_error_squared),
                float(h.mean_error_squared),
                h.selected_index.map(|i| i.to_string()).unwrap_or_default(),
                opt(h.selected_parameter),
            ]
        })
        .collect();
    out.csv(
        "history.csv",
        &header(&[
            "basis_size",
            "max_error",
            "mean_error",
            "max_error_squared",
            "mean_error_squared",
            "selected_index",
            "selected_parameter",
        ]),
        &rows,
    )?;
    out.metadata(
        "offline",
        start.elapsed(),
        json!({ "training_points": training.len(), "basis": basis_path, "selected": basis.parameters() }),
    )?;
    Ok(())
}

fn load(path: &Path) -> Result<ReducedBasis, CliError> {
    if !path.exists() {
        return Err(CliError::config(format!(
            "basis file {} not found; run `offline` first or pass --basis",
            path.display()
        )));
    }
    Ok(load_basis(path)?)
}

#[derive(Serialize)]
struct QueryRecord {
    set: String,
    basis_size: usize,
    r: f64,
    lambda_star: Vec<f64>,
    energy_found: f64,
    energy_exact: f64,
    error: f64,
    starts_converged: usize,
    best_start: usize,
}

pub fn online(
    cfg: &ExperimentConfig,
    out: &Output,
    basis_path: &Path,
    points: Option<Vec<f64>>,
) -> Result<(), CliError> {
    let start = Instant::now();
    let basis = load(basis_path)?;
    let sets: Vec<(String, Vec<f64>)> = match points {
        Some(p) => vec![("custom".to_string(), p)],
        None => cfg.tests.iter().map(|t: &TestSet| (t.name.clone(), t.interval.points())).collect(),
    };
    let sizes: Vec<usize> = cfg.online_sizes().into_iter().filter(|&n| n <= basis.len()).collect();
    if sizes.is_empty() {
        return Err(CliError::config(format!("no online size fits the stored basis of {} elements", basis.len())));
    }
    let mut records = Vec::new();
    let mut timings = Vec::new();
    let mut decay = Vec::new();
    for &n in &sizes {
        let reduced = basis.truncated(n)?;
        for (name, pts) in &sets {
            let mut errors = Vec::with_capacity(pts.len());
            for &r in pts {
                let t = Instant::now();
                let query: NucleiConfig = cfg.nuclei(r)?;
                let res = online_minimize(&reduced, &query, &cfg.online)
                    .map_err(|e| CliError::Numerical(format!("online solve at r = {r}, N = {n}: {e}")))?;
                let exact = ground_energy(cfg, r)?;
                timings.push(json!({ "set": name, "basis_size": n, "r": r, "seconds": t.elapsed().as_secs_f64() }));
                errors.push((res.energy - exact).abs());
                records.push(QueryRecord {
                    set: name.clone(),
                    basis_size: n,
                    r,
                    lambda_star: res.lambda_star.as_slice().to_vec(),
                    energy_found: res.energy,
                    energy_exact: exact,
                    error: res.energy - exact,
                    starts_converged: res.starts_converged,
                    best_start: res.best_start,
                });
            }
            let max = errors.iter().copied().fold(0.0, f64::max);
            let mean = errors.iter().sum::<f64>() / errors.len() as f64;
            decay.push(vec![name.clone(), n.to_string(), float(max), float(mean)]);
        }
    }
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|q| {
            vec![
                q.set.clone(),
                q.basis_size.to_string(),
                float(q.r),
                float(q.energy_found),
                float(q.energy_exact),
                float(q.error),
            ]
        })
        .collect();
    out.csv("online.csv", &header(&["set", "basis_size", "r", "energy_found", "energy_exact", "error"]), &rows)?;
    out.csv("online_decay.csv", &header(&["set", "basis_size", "max_error", "mean_error"]), &decay)?;
    out.json("online_records.json", &records)?;
    out.metadata("online", start.elapsed(), json!({ "basis": basis_path, "queries": timings }))?;
    Ok(())
}

pub fn heatmap(cfg: &ExperimentConfig, out: &Output, basis_path: &Path, query: Option<f64>) -> Result<(), CliError> {
    let start = Instant::now();
    let basis = load(basis_path)?;
    if basis.len() != 2 {
        return Err(CliError::config(format!(
            "heatmap needs a basis of exactly 2 elements, {} holds {}; run `offline --size 2`",
            basis_path.display(),
            basis.len()
        )));
    }
    let h = &cfg.heatmap;
    let r = query.unwrap_or(h.query);
    let map = energy_heatmap(&basis, &cfg.nuclei(r)?, h.lambda1, h.lambda2, h.points)?;
    let mut rows = Vec::with_capacity(map.values.len());
    for (i, &a) in map.lambda1.iter().enumerate() {
        for (j, &b) in map.lambda2.iter().enumerate() {
            rows.push(vec![float(a), float(b), float(map.get(i, j))]);
        }
    }
    out.csv("heatmap.csv", &header(&["lambda1", "lambda2", "energy"]), &rows)?;
    let cells = map.local_minima();
    let grid_rows: Vec<Vec<String>> = cells
        .iter()
        .map(|&(i, j)| vec![i.to_string(), j.to_string(), float(map.lambda1[i]), float(map.lambda2[j]), float(map.get(i, j))])
        .collect();
    out.csv("heatmap_minima.csv", &header(&["i", "j", "lambda1", "lambda2", "energy"]), &grid_rows)?;
    let candidates: Vec<Vec<f64>> = cells.iter().map(|&(i, j)| vec![map.lambda1[i], map.lambda2[j]]).collect();
    let cell = (h.lambda1.1 - h.lambda1.0).abs().max((h.lambda2.1 - h.lambda2.0).abs()) / (h.points - 1) as f64;
    let minima = refine_minima(&basis, &cfg.nuclei(r)?, &candidates, &cfg.online, 2.0 * cell)?;
    let rows: Vec<Vec<String>> =
        minima.iter().map(|m| vec![float(m.lambda[0]), float(m.lambda[1]), float(m.energy)]).collect();
    out.csv("heatmap_descent_minima.csv", &header(&["lambda1", "lambda2", "energy"]), &rows)?;
    out.metadata(
        "heatmap",
        start.elapsed(),
        json!({ "query": r, "grid_minima": cells.len(), "descent_minima": minima.len() }),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CurveSummary {
    slope: Option<f64>,
    window: (f64, f64),
    fit_range: Option<(usize, usize)>,
    sample_size: usize,
    relative_delta_2: f64,
}

impl From<&WidthCurve> for CurveSummary {
    fn from(c: &WidthCurve) -> Self {
        CurveSummary {
            slope: c.slope,
            window: c.window,
            fit_range: c.fit_range,
            sample_size: c.sample_size,
            relative_delta_2: if c.delta.len() > 2 { c.relative(2) } else { 0.0 },
        }
    }
}

fn curve_rows(c: &WidthCurve) -> Vec<Vec<String>> {
    c.n.iter().zip(&c.delta).map(|(n, d)| vec![n.to_string(), float(*d)]).collect()
}

pub fn widths(cfg: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let start = Instant::now();
    let w = &cfg.widths;
    let single = Interval { lo: -w.half_width, hi: w.half_width, count: w.parameters }.points();
    let singles: Vec<SlaterMixture> = single
        .iter()
        .map(|&r| Slater::new(w.charge, r).map(SlaterMixture::single))
        .collect::<Result<_, _>>()?;
    let l2 = pod_width_curve(&l2_snapshot_grid(&single, &singles, w.spatial_step)?)?;
    let translated = pod_width_curve(&icdf_snapshot_grid(&single, &singles, w.quantiles)?)?;

    let dimer = Interval { lo: 0.0, hi: w.dimer_half_width, count: w.parameters }.points();
    let dimers: Vec<SlaterMixture> = dimer
        .par_iter()
        .map(|&r| {
            let c = NucleiConfig::symmetric_dimer(r, w.charge)?;
            Ok(solve_ground_state(&c)?.mixture())
        })
        .collect::<Result<_, nrb_core::Error>>()?;
    let dimer_l2 = pod_width_curve(&l2_snapshot_grid(&dimer, &dimers, w.spatial_step)?)?;
    let dimer_icdf = pod_width_curve(&icdf_snapshot_grid(&dimer, &dimers, w.quantiles)?)?;

    let cols = header(&["n", "delta_n"]);
    out.csv("widths_l2_single.csv", &cols, &curve_rows(&l2))?;
    out.csv("widths_icdf_single.csv", &cols, &curve_rows(&translated))?;
    out.csv("widths_l2_dimer.csv", &cols, &curve_rows(&dimer_l2))?;
    out.csv("widths_icdf_dimer.csv", &cols, &curve_rows(&dimer_icdf))?;

    let pairs = w.kernel_eigenvalues.div_ceil(2);
    let spectrum = analytic_tk_spectrum(w.half_width, w.charge, pairs)?;
    let numeric = discrete_kernel_spectrum(w.half_width, w.charge, w.kernel_points, w.kernel_eigenvalues)?;
    let closed = spectrum.eigenvalues();
    let kernel = spectrum.kernel_eigenvalues();
    let rows: Vec<Vec<String>> = numeric
        .iter()
        .enumerate()
        .map(|(i, &v)| vec![(i + 1).to_string(), float(v), float(closed[i]), float(kernel[i])])
        .collect();
    out.csv("kernel_spectrum.csv", &header(&["index", "discrete", "closed_form", "squared_laplace"]), &rows)?;

    out.json(
        "widths.json",
        &json!({
            "l2_single": CurveSummary::from(&l2),
            "icdf_single": CurveSummary::from(&translated),
            "l2_dimer": CurveSummary::from(&dimer_l2),
            "icdf_dimer": CurveSummary::from(&dimer_icdf),
        }),
    )?;
    out.metadata("widths", start.elapsed(), json!({}))?;
    Ok(())
}
