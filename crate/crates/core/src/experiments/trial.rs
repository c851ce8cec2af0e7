use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{best_true_pair, crb_numeric, exhaustive_sweep, kmeans_1d, quantize_to_codebook, DftCodebook};
use crate::channel::{
    assemble_channel, compute_blockage, realize_channel, sample_scenario, ChannelRealization,
    LinkState, Scenario, ScenarioConfig,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_path, PathEstimate};
use crate::geometry::{cos_sub, CosAngle, Vec3};
use crate::positioning::{locate, Deployment, PositionFix};
use crate::rng::{stream, Stream, TrialRng};
use crate::sounding::{
    random_codebook, sound_step1, sound_step2, synth_unified, BeamCodebook, SensingMatrix, Side, SoundingSession,
};

use super::config::ExperimentConfig;

/// Ground truth and outcome for one anchor link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub anchor_index: usize,
    pub unblocked: bool,
    pub theta: CosAngle,
    pub phi: CosAngle,
    pub gain: Complex64,
    pub measurement_power: f64,
    pub estimate: Option<PathEstimate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub tx_power_dbm: f64,
    pub training_length: usize,
    pub mt_position: Vec3,
    pub mt_direction: Vec3,
    pub blocked_links: usize,
    pub links: Vec<LinkRecord>,
    pub fix: Option<PositionFix>,
    pub fix_error: Option<String>,
    /// Distance between the fix (or the initial guess when no fix exists)
    /// and the true position.
    pub position_error: f64,
    /// Unblocked decisions of the K-means baselines, one per link.
    pub kmeans_residual: Vec<bool>,
    pub kmeans_power: Vec<bool>,
}

impl TrialRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

fn codebook_pair(
    tx_side: Side,
    n_tx: usize,
    n_rx: usize,
    len: usize,
    rng: &mut TrialRng,
) -> Result<(BeamCodebook, BeamCodebook)> {
    Ok((
        random_codebook(tx_side, n_tx, len, rng)?,
        random_codebook(Side::Receive, n_rx, len, rng)?,
    ))
}

/// Step 1 and every step 2 session of a realization.
///
/// With `leakage` off each session carries only its own path, i.e. the
/// direct and scattered paths are dropped from IRS sessions and the
/// scattered paths from the direct session.
pub fn sound_all(
    scenario: &Scenario,
    realization: &ChannelRealization,
    training_length: usize,
    leakage: bool,
    codebooks: &mut TrialRng,
    noise: &mut TrialRng,
) -> Result<Vec<SoundingSession>> {
    let nb = realization.n_bs;
    let nm = realization.n_mt;
    let p = scenario.tx_power;
    let sigma2 = scenario.noise_power;
    let mut out = Vec::with_capacity(realization.vlos.len() + 1);
    let (f, m) = codebook_pair(Side::Transmit, nb, nm, training_length, codebooks)?;
    if leakage {
        out.push(sound_step1(realization, p, &f, &m, sigma2, noise)?);
    } else {
        out.push(isolated(realization, 1, p.sqrt(), &f, &m, sigma2, noise)?);
    }
    for v in &realization.vlos {
        let (g, m) = codebook_pair(Side::Reflect, v.n_elements, nm, training_length, codebooks)?;
        if leakage {
            out.push(sound_step2(realization, v.anchor_index, p, &g, &m, sigma2, noise)?);
        } else {
            out.push(isolated(realization, v.anchor_index, (p * nb as f64).sqrt(), &g, &m, sigma2, noise)?);
        }
    }
    Ok(out)
}

fn isolated(
    realization: &ChannelRealization,
    eta: usize,
    gain_scale: f64,
    tx: &BeamCodebook,
    rx: &BeamCodebook,
    sigma2: f64,
    noise: &mut TrialRng,
) -> Result<SoundingSession> {
    let path = realization.link(eta).ok_or(Error::UnknownIrs(eta))?;
    let d = SensingMatrix::from_codebooks(tx, rx)?;
    let y = synth_unified(
        path.zeta,
        path.gain * gain_scale,
        path.theta.value(),
        path.phi.value(),
        &d,
        sigma2,
        noise,
    );
    SoundingSession::new(eta, d, y, gain_scale, sigma2)
}

fn measurement_power(y: &[Complex64]) -> f64 {
    y.iter().map(|v| v.norm_sqr()).sum()
}

fn kmeans_decisions(values: &[f64], high_is_unblocked: bool, rng: &mut TrialRng) -> Vec<bool> {
    match kmeans_1d(values, 2, rng) {
        Ok(km) if !km.degenerate => km
            .assignments
            .iter()
            .map(|&l| (l == 1) == high_is_unblocked)
            .collect(),
        _ => vec![true; values.len()],
    }
}

/// Stage I to III for every anchor: sample, sound, estimate, locate and
/// refine.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize, seed: u64, tx_power_dbm: f64, training_length: usize) -> Result<TrialRecord> {
    let scenario = sample_scenario(&cfg.scenario, &mut stream(seed, Stream::Scenario))?.with_tx_power_dbm(tx_power_dbm);
    let links = compute_blockage(&scenario);
    run_trial_on(cfg, &scenario, &links, trial, seed, tx_power_dbm, training_length)
}

pub fn run_trial_on(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    link_state: &LinkState,
    trial: usize,
    seed: u64,
    tx_power_dbm: f64,
    training_length: usize,
) -> Result<TrialRecord> {
    let realization = realize_channel(scenario, link_state, &mut stream(seed, Stream::Nlos))?;
    let sessions = sound_all(
        scenario,
        &realization,
        training_length,
        cfg.sounding.leakage,
        &mut stream(seed, Stream::Codebook),
        &mut stream(seed, Stream::Noise),
    )?;

    let mut records = Vec::with_capacity(sessions.len());
    for (i, s) in sessions.iter().enumerate() {
        let eta = i + 1;
        let truth = realization.link(eta).expect("one session per anchor");
        let grid = cfg.estimator.grid_for(s.sensing.n_tx(), s.sensing.n_rx());
        let (estimate, error) = match estimate_path(s, &grid, &cfg.estimator.fine) {
            Ok(e) => (Some(e), None),
            Err(e) => (None, Some(e.to_string())),
        };
        records.push(LinkRecord {
            anchor_index: eta,
            unblocked: truth.zeta,
            theta: truth.theta,
            phi: truth.phi,
            gain: truth.gain,
            measurement_power: measurement_power(&s.y),
            estimate,
            error,
        });
    }

    let deployment = Deployment::from_scenario(scenario);
    let (fix, fix_error) = match records.iter().map(|r| r.estimate).collect::<Option<Vec<_>>>() {
        None => (None, Some("path estimation failed on at least one link".to_string())),
        Some(est) => match locate(&deployment, &sessions, &est, &cfg.positioning) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        },
    };
    let estimate_pos = fix
        .as_ref()
        .map(|f| f.position)
        .unwrap_or_else(|| deployment.initial_guess(cfg.positioning.initial_altitude));

    let mut crng = stream(seed, Stream::Clustering);
    let residual: Vec<f64> = records
        .iter()
        .map(|r| r.estimate.map_or(1.0, |e| e.residual_ratio))
        .collect();
    let power: Vec<f64> = records.iter().map(|r| r.measurement_power).collect();
    let kmeans_residual = kmeans_decisions(&residual, false, &mut crng);
    let kmeans_power = kmeans_decisions(&power, true, &mut crng);

    Ok(TrialRecord {
        trial,
        seed,
        tx_power_dbm,
        training_length,
        mt_position: scenario.mt_position,
        mt_direction: scenario.mt_array.direction,
        blocked_links: link_state.blocked_count(),
        links: records,
        fix,
        fix_error,
        position_error: estimate_pos.distance(scenario.mt_position),
        kmeans_residual,
        kmeans_power,
    })
}

/// Direct-link estimation outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectLinkRecord {
    pub theta_sq_error: f64,
    pub phi_sq_error: f64,
    pub crb_theta: f64,
    pub crb_phi: f64,
}

fn direct_link_scenario(base: &ScenarioConfig, seed: u64, tx_power_dbm: f64) -> Result<Scenario> {
    let cfg = ScenarioConfig { users: 1, ..base.clone() };
    Ok(sample_scenario(&cfg, &mut stream(seed, Stream::Scenario))?.with_tx_power_dbm(tx_power_dbm))
}

/// BS-MT link only, never blocked; NLoS paths optional.
pub fn run_direct_link_trial(
    cfg: &ExperimentConfig,
    seed: u64,
    tx_power_dbm: f64,
    training_length: usize,
    with_nlos: bool,
) -> Result<DirectLinkRecord> {
    let scenario = direct_link_scenario(&cfg.scenario, seed, tx_power_dbm)?;
    let links = LinkState::all_clear(scenario.anchors.len());
    let mut r = realize_channel(&scenario, &links, &mut stream(seed, Stream::Nlos))?;
    if !with_nlos {
        r.nlos.clear();
    }
    let mut crng = stream(seed, Stream::Codebook);
    let (f, m) = codebook_pair(Side::Transmit, r.n_bs, r.n_mt, training_length, &mut crng)?;
    let s = sound_step1(&r, scenario.tx_power, &f, &m, scenario.noise_power, &mut stream(seed, Stream::Noise))?;
    let grid = cfg.estimator.grid_for(r.n_bs, r.n_mt);
    let e = estimate_path(&s, &grid, &cfg.estimator.fine)?;
    let (crb_theta, crb_phi) = crb_numeric(
        &s.sensing,
        r.los.gain * s.gain_scale,
        r.los.theta.value(),
        r.los.phi.value(),
        scenario.noise_power,
    )
    .unwrap_or((f64::NAN, f64::NAN));
    Ok(DirectLinkRecord {
        theta_sq_error: cos_sub(e.theta, r.los.theta).value().powi(2),
        phi_sq_error: cos_sub(e.phi, r.los.phi).value().powi(2),
        crb_theta,
        crb_phi,
    })
}

/// Beam-selection outcome against the strongest DFT pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentRecord {
    pub exhaustive_miss: bool,
    /// One entry per requested training length.
    pub random_miss: Vec<bool>,
}

/// Exhaustive DFT sweep and random beamforming with nested training
/// lengths on the same BS-MT channel.
pub fn run_misalignment_trial(
    cfg: &ExperimentConfig,
    seed: u64,
    tx_power_dbm: f64,
    training_lengths: &[usize],
) -> Result<MisalignmentRecord> {
    let scenario = direct_link_scenario(&cfg.scenario, seed, tx_power_dbm)?;
    let links = LinkState::all_clear(scenario.anchors.len());
    let r = realize_channel(&scenario, &links, &mut stream(seed, Stream::Nlos))?;
    let h: DMatrix<Complex64> = assemble_channel(&r, &vec![None; r.vlos.len()])? * Complex64::new(scenario.tx_power.sqrt(), 0.0);
    let tx = DftCodebook::new(r.n_bs)?;
    let rx = DftCodebook::new(r.n_mt)?;
    let best = best_true_pair(&h, &tx, &rx)?;
    let swept = exhaustive_sweep(&h, &tx, &rx, scenario.noise_power, &mut stream(seed, Stream::Baseline))?;

    let longest = training_lengths.iter().copied().max().unwrap_or(0);
    if longest == 0 {
        return Err(Error::InvalidArgument("no training lengths".into()));
    }
    let mut crng = stream(seed, Stream::Codebook);
    let (f, m) = codebook_pair(Side::Transmit, r.n_bs, r.n_mt, longest, &mut crng)?;
    let full = sound_step1(&r, scenario.tx_power, &f, &m, scenario.noise_power, &mut stream(seed, Stream::Noise))?;
    let mut random_miss = Vec::with_capacity(training_lengths.len());
    for &n in training_lengths {
        let s = full.truncated(n)?;
        let grid = cfg.estimator.grid_for(r.n_bs, r.n_mt);
        let e = estimate_path(&s, &grid, &cfg.estimator.fine)?;
        let pair = (quantize_to_codebook(e.phi, &tx), quantize_to_codebook(e.theta, &rx));
        random_miss.push(pair != best);
    }
    Ok(MisalignmentRecord {
        exhaustive_miss: swept != best,
        random_miss,
    })
}

/// Blocked-link count of one scenario draw.
pub fn blocked_links_draw(cfg: &ScenarioConfig, seed: u64) -> Result<usize> {
    let s = sample_scenario(cfg, &mut stream(seed, Stream::Scenario))?;
    Ok(compute_blockage(&s).blocked_count())
}
