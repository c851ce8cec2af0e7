//! One driver per output table. Every driver is a pure function of the
//! configuration, so repeated runs emit identical bytes.

use crate::error::{Error, Result};
use crate::estimator::{objective_grid, refined_peaks, GridSpec};
use crate::geometry::cos_sub;
use crate::rng::{stream, Stream};
use crate::sounding::{random_codebook, SensingMatrix, Side};

use super::config::ExperimentConfig;
use super::csv::{Cell, Table};
use super::trial::{blocked_links_draw, run_direct_link_trial, run_misalignment_trial, run_trial, TrialRecord};
use super::{parallel_map, trial_seed};

pub const FIGURES: [&str; 7] = ["fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "contour"];

/// Runs one named figure and returns `(file stem, table)` pairs.
pub fn run_figure(name: &str, cfg: &ExperimentConfig) -> Result<Vec<(String, Table)>> {
    cfg.validate()?;
    let one = |t: Table| vec![(name.to_string(), t)];
    Ok(match name {
        "fig5" => one(fig5(cfg)?),
        "fig6" => one(fig6(cfg)?),
        "fig7" => one(fig7(cfg)?),
        "fig8" => one(fig8(cfg)?),
        "fig9" => one(fig9(cfg)?),
        "fig10" => one(fig10(cfg)?),
        "contour" => {
            let (grid, peaks) = contour(cfg)?;
            vec![("contour".to_string(), grid), ("contour_peaks".to_string(), peaks)]
        }
        other => return Err(Error::InvalidArgument(format!("unknown figure {other}"))),
    })
}

fn table(cfg: &ExperimentConfig, figure: &str, columns: &[&'static str]) -> Table {
    Table::new(figure, &cfg.hash(), cfg.run.seed, columns)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Angle MSE on the direct link against transmit power, with and without
/// scattering, next to the mean CRB.
pub fn fig5(cfg: &ExperimentConfig) -> Result<Table> {
    let trials = cfg.fig5.trials.unwrap_or(cfg.run.trials);
    let mut t = table(
        cfg,
        "fig5",
        &["training_length", "scenario", "tx_power_dbm", "mse_theta", "mse_phi", "crb_theta", "crb_phi", "trials"],
    );
    for &n in &cfg.fig5.training_lengths {
        for (label, nlos) in [("los", false), ("los_nlos", true)] {
            for &p in &cfg.fig5.tx_power_dbm {
                let recs = parallel_map(trials, cfg.run.workers, |i| {
                    run_direct_link_trial(cfg, trial_seed(cfg.run.seed, i), p, n, nlos)
                })?
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                t.push(vec![
                    n.into(),
                    label.into(),
                    p.into(),
                    mean(recs.iter().map(|r| r.theta_sq_error)).into(),
                    mean(recs.iter().map(|r| r.phi_sq_error)).into(),
                    mean(recs.iter().map(|r| r.crb_theta).filter(|v| v.is_finite())).into(),
                    mean(recs.iter().map(|r| r.crb_phi).filter(|v| v.is_finite())).into(),
                    trials.into(),
                ])?;
            }
        }
    }
    Ok(t)
}

/// Histogram of blocked links per user count.
pub fn fig6(cfg: &ExperimentConfig) -> Result<Table> {
    let mut t = table(cfg, "fig6", &["users", "blocked_links", "count", "probability"]);
    let links = cfg.scenario.irs_positions.len() + 1;
    for &users in &cfg.fig6.users {
        let sc = crate::channel::ScenarioConfig { users, ..cfg.scenario.clone() };
        let draws = cfg.fig6.draws;
        let counts = parallel_map(draws, cfg.run.workers, |i| blocked_links_draw(&sc, trial_seed(cfg.run.seed, i)))?
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut hist = vec![0usize; links + 1];
        for c in counts {
            hist[c] += 1;
        }
        for (k, &c) in hist.iter().enumerate() {
            t.push(vec![users.into(), k.into(), c.into(), (c as f64 / draws as f64).into()])?;
        }
    }
    Ok(t)
}

/// Misalignment rate of random beamforming against training length, plus
/// the exhaustive DFT sweep (`training_length` = N_B·N_M).
pub fn fig7(cfg: &ExperimentConfig) -> Result<Table> {
    let trials = cfg.fig7.trials.unwrap_or(cfg.run.trials);
    let lengths = &cfg.fig7.training_lengths;
    let mut t = table(
        cfg,
        "fig7",
        &["tx_power_dbm", "method", "training_length", "misalignment_rate", "std_error", "trials"],
    );
    let rate_row = |p: f64, method: &str, n: usize, misses: usize| -> Vec<Cell> {
        let r = misses as f64 / trials as f64;
        vec![
            p.into(),
            method.into(),
            n.into(),
            r.into(),
            (r * (1.0 - r) / trials as f64).sqrt().into(),
            trials.into(),
        ]
    };
    for &p in &cfg.fig7.tx_power_dbm {
        let recs = parallel_map(trials, cfg.run.workers, |i| {
            run_misalignment_trial(cfg, trial_seed(cfg.run.seed, i), p, lengths)
        })?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let sweep_len = cfg.scenario.bs_antennas * cfg.scenario.mt_antennas;
        t.push(rate_row(p, "exhaustive", sweep_len, recs.iter().filter(|r| r.exhaustive_miss).count()))?;
        for (j, &n) in lengths.iter().enumerate() {
            t.push(rate_row(p, "random", n, recs.iter().filter(|r| r.random_miss[j]).count()))?;
        }
    }
    Ok(t)
}

/// Full-pipeline trials for one sweep point, in trial order.
pub fn pipeline_trials(cfg: &ExperimentConfig, trials: usize, p: f64, n: usize) -> Result<Vec<TrialRecord>> {
    parallel_map(trials, cfg.run.workers, |i| run_trial(cfg, i, trial_seed(cfg.run.seed, i), p, n))?
        .into_iter()
        .collect()
}

/// Positioning error against transmit power.
pub fn fig8(cfg: &ExperimentConfig) -> Result<Table> {
    let trials = cfg.fig8.trials.unwrap_or(cfg.run.trials);
    let mut t = table(
        cfg,
        "fig8",
        &["training_length", "tx_power_dbm", "position_rmse", "median_error", "low_confidence_rate", "failure_rate", "trials"],
    );
    for &n in &cfg.fig8.training_lengths {
        for &p in &cfg.fig8.tx_power_dbm {
            let recs = pipeline_trials(cfg, trials, p, n)?;
            let errs: Vec<f64> = recs.iter().map(|r| r.position_error).collect();
            let low = recs.iter().filter(|r| r.fix.as_ref().is_some_and(|f| f.low_confidence)).count();
            let failed = recs.iter().filter(|r| r.fix.is_none()).count();
            t.push(vec![
                n.into(),
                p.into(),
                mean(errs.iter().map(|e| e * e)).sqrt().into(),
                median(errs).into(),
                (low as f64 / trials as f64).into(),
                (failed as f64 / trials as f64).into(),
                trials.into(),
            ])?;
        }
    }
    Ok(t)
}

/// Counts wrong blockage decisions of the three detectors.
pub fn blockage_errors(recs: &[TrialRecord]) -> (usize, usize, usize, usize) {
    let (mut aided, mut resid, mut power, mut links) = (0, 0, 0, 0);
    for r in recs {
        for (i, l) in r.links.iter().enumerate() {
            links += 1;
            let aided_decision = r.fix.as_ref().map_or(true, |f| f.links[i].unblocked);
            aided += usize::from(aided_decision != l.unblocked);
            resid += usize::from(r.kmeans_residual[i] != l.unblocked);
            power += usize::from(r.kmeans_power[i] != l.unblocked);
        }
    }
    (aided, resid, power, links)
}

/// Blockage detection error rate against transmit power.
pub fn fig9(cfg: &ExperimentConfig) -> Result<Table> {
    let trials = cfg.fig9.trials.unwrap_or(cfg.run.trials);
    let mut t = table(cfg, "fig9", &["training_length", "tx_power_dbm", "method", "error_rate", "links"]);
    for &n in &cfg.fig9.training_lengths {
        for &p in &cfg.fig9.tx_power_dbm {
            let recs = pipeline_trials(cfg, trials, p, n)?;
            let (a, r, w, links) = blockage_errors(&recs);
            for (method, e) in [("position_aided", a), ("kmeans_residual", r), ("kmeans_power", w)] {
                t.push(vec![n.into(), p.into(), method.into(), (e as f64 / links as f64).into(), links.into()])?;
            }
        }
    }
    Ok(t)
}

/// Squared angle errors of unblocked links: (raw AoA, refined AoA, raw
/// AoD, refined AoD). Trials without a fix are skipped.
pub fn refinement_errors(recs: &[TrialRecord]) -> Vec<[f64; 4]> {
    let mut out = Vec::new();
    for r in recs {
        let Some(fix) = &r.fix else { continue };
        for (l, rf) in r.links.iter().zip(&fix.links) {
            let Some(e) = l.estimate else { continue };
            if !l.unblocked {
                continue;
            }
            out.push([
                cos_sub(e.theta, l.theta).value().powi(2),
                cos_sub(rf.theta, l.theta).value().powi(2),
                cos_sub(e.phi, l.phi).value().powi(2),
                cos_sub(rf.phi, l.phi).value().powi(2),
            ]);
        }
    }
    out
}

/// Raw against position-refined angle MSE.
pub fn fig10(cfg: &ExperimentConfig) -> Result<Table> {
    let trials = cfg.fig10.trials.unwrap_or(cfg.run.trials);
    let mut t = table(
        cfg,
        "fig10",
        &["training_length", "tx_power_dbm", "mse_aoa_raw", "mse_aoa_refined", "mse_aod_raw", "mse_aod_refined", "links"],
    );
    for &n in &cfg.fig10.training_lengths {
        for &p in &cfg.fig10.tx_power_dbm {
            let errs = refinement_errors(&pipeline_trials(cfg, trials, p, n)?);
            let col = |k: usize| Cell::from(mean(errs.iter().map(|e| e[k])));
            t.push(vec![n.into(), p.into(), col(0), col(1), col(2), col(3), errs.len().into()])?;
        }
    }
    Ok(t)
}

/// Noiseless objective landscape for `δ = 1`, `θ = φ = 0`, on nested
/// codebooks. Returns the grid table (first codebook draw) and the peak
/// table (every draw).
pub fn contour(cfg: &ExperimentConfig) -> Result<(Table, Table)> {
    let c = &cfg.contour;
    let n_tx = cfg.scenario.bs_antennas;
    let n_rx = cfg.scenario.mt_antennas;
    let longest = c.training_lengths.iter().copied().max().unwrap_or(0);
    let mut grid_t = table(cfg, "contour", &["training_length", "theta", "phi", "g"]);
    let mut peak_t = table(
        cfg,
        "contour_peaks",
        &["codebook", "training_length", "peak1", "peak2", "gap", "peak1_theta", "peak1_phi"],
    );
    let search = GridSpec::for_arrays(n_tx, n_rx);
    let merge = 1.0 / search.z_theta.max(search.z_phi) as f64;

    let per_draw = parallel_map(c.codebooks, cfg.run.workers, |k| -> Result<Vec<(usize, [f64; 5])>> {
        let mut rng = stream(trial_seed(cfg.run.seed, k), Stream::Codebook);
        let f = random_codebook(Side::Transmit, n_tx, longest, &mut rng)?;
        let m = random_codebook(Side::Receive, n_rx, longest, &mut rng)?;
        let full = SensingMatrix::from_codebooks(&f, &m)?;
        let mut rows = Vec::new();
        for &n in &c.training_lengths {
            let d = full.truncated(n)?;
            let y = d.project(0.0, 0.0);
            let peaks = refined_peaks(&d, &y, &search, &cfg.estimator.fine, merge)?;
            let p1 = peaks[0];
            let p2 = peaks.get(1).map_or(0.0, |p| p.value);
            rows.push((n, [p1.value, p2, p1.value - p2, p1.theta.value(), p1.phi.value()]));
        }
        Ok(rows)
    })?;
    for (k, rows) in per_draw.into_iter().enumerate() {
        for (n, v) in rows? {
            let mut row: Vec<Cell> = vec![k.into(), n.into()];
            row.extend(v.iter().map(|&x| Cell::from(x)));
            peak_t.push(row)?;
        }
    }

    let mut rng = stream(trial_seed(cfg.run.seed, 0), Stream::Codebook);
    let f = random_codebook(Side::Transmit, n_tx, longest, &mut rng)?;
    let m = random_codebook(Side::Receive, n_rx, longest, &mut rng)?;
    let full = SensingMatrix::from_codebooks(&f, &m)?;
    let pts = GridSpec::points(c.grid);
    for &n in &c.training_lengths {
        let d = full.truncated(n)?;
        let g = objective_grid(&d, &d.project(0.0, 0.0), c.grid, c.grid)?;
        for (i, &th) in pts.iter().enumerate() {
            for (j, &ph) in pts.iter().enumerate() {
                grid_t.push(vec![n.into(), th.into(), ph.into(), g[i * c.grid + j].into()])?;
            }
        }
    }
    Ok((grid_t, peak_t))
}
