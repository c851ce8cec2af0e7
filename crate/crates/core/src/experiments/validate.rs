//! Quick property suite behind the `validate` subcommand.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::analysis::{d_squared, pep_monte_carlo, pep_theoretical, q_function, PepForm, PepQuery};
use crate::channel::{sample_scenario, Anchor, AnchorKind, LinkState};
use crate::error::Result;
use crate::estimator::{estimate_delta, estimate_path, gradient_g, objective_g, GridSpec};
use crate::geometry::{cos_sub, ArrayGeometry, Vec3};
use crate::positioning::{aod_jacobian, aod_of_position};
use crate::rng::{complex_gaussian, stream, Stream, TrialRng};
use crate::sounding::{random_codebook, synth_unified, SensingMatrix, Side, SoundingSession};

use super::config::ExperimentConfig;
use super::figures::run_figure;
use super::trial::run_trial_on;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn sensing(rng: &mut TrialRng, n_tx: usize, n_rx: usize, rows: usize) -> Result<SensingMatrix> {
    let f = random_codebook(Side::Transmit, n_tx, rows, rng)?;
    let m = random_codebook(Side::Receive, n_rx, rows, rng)?;
    SensingMatrix::from_codebooks(&f, &m)
}

fn angle(rng: &mut TrialRng) -> f64 {
    rng.random_range(-1.0..1.0)
}

/// Noiseless recovery of random angle pairs on random codebooks.
pub fn uniqueness(seed: u64, codebooks: usize) -> Result<Check> {
    let mut rng = stream(seed, Stream::Analysis);
    let grid = GridSpec::for_arrays(16, 16);
    let fine = Default::default();
    let mut hits = 0;
    for _ in 0..codebooks {
        let d = sensing(&mut rng, 16, 16, 16)?;
        let (th, ph) = (angle(&mut rng), angle(&mut rng));
        let y = synth_unified(true, Complex64::new(1.0, 0.0), th, ph, &d, 0.0, &mut rng);
        let s = SoundingSession::new(1, d, y, 1.0, 0.0)?;
        let e = estimate_path(&s, &grid, &fine)?;
        if cos_sub(e.theta, th).value().abs() <= 1e-4 && cos_sub(e.phi, ph).value().abs() <= 1e-4 {
            hits += 1;
        }
    }
    let rate = hits as f64 / codebooks as f64;
    Ok(check("noiseless_uniqueness", rate >= 0.99, format!("recovered {hits}/{codebooks}")))
}

/// Analytic objective gradient and bearing Jacobian against central
/// differences.
pub fn gradients(seed: u64, instances: usize) -> Result<Check> {
    let mut rng = stream(seed, Stream::Analysis);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let d = sensing(&mut rng, 16, 16, 16)?;
        let y: Vec<Complex64> = (0..16).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let (th, ph) = (rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9));
        let (gt, gp) = gradient_g(th, ph, &d, &y)?;
        let ft = (objective_g(th + h, ph, &d, &y)? - objective_g(th - h, ph, &d, &y)?) / (2.0 * h);
        let fp = (objective_g(th, ph + h, &d, &y)? - objective_g(th, ph - h, &d, &y)?) / (2.0 * h);
        let scale = gt.abs().max(gp.abs()).max(1e-3);
        worst = worst.max((gt - ft).abs() / scale).max((gp - fp).abs() / scale);

        let dir = Vec3::new(angle(&mut rng), angle(&mut rng), angle(&mut rng)).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        let anchor = Anchor {
            kind: AnchorKind::Irs,
            index: 2,
            position: Vec3::new(angle(&mut rng), angle(&mut rng), angle(&mut rng)) * 5.0,
            array: ArrayGeometry::new(16, dir)?,
        };
        let p = Vec3::new(angle(&mut rng), angle(&mut rng), angle(&mut rng)) * 5.0 + Vec3::new(12.0, 0.0, 0.0);
        let j = aod_jacobian(p, &anchor)?;
        let mut fd = [0.0; 3];
        for (k, v) in fd.iter_mut().enumerate() {
            let mut e = [0.0; 3];
            e[k] = h;
            let dp = Vec3::new(e[0], e[1], e[2]);
            *v = (aod_of_position(p + dp, &anchor)?.value() - aod_of_position(p - dp, &anchor)?.value()) / (2.0 * h);
        }
        let jn = j.norm().max(1e-3);
        for (k, v) in fd.iter().enumerate() {
            worst = worst.max((j.component(k) - v).abs() / jn);
        }
    }
    Ok(check("gradients", worst <= 1e-5, format!("worst relative error {worst:.3e}")))
}

/// Appending a row never lowers the separation metric.
pub fn separation_monotone(seed: u64, tuples: usize) -> Result<Check> {
    let mut rng = stream(seed, Stream::Analysis);
    let mut worst = f64::INFINITY;
    for _ in 0..tuples {
        let rows = rng.random_range(1..24);
        let d = sensing(&mut rng, 8, 8, rows + 1)?;
        let short = d.truncated(rows)?;
        let a = [angle(&mut rng), angle(&mut rng), angle(&mut rng), angle(&mut rng)];
        let before = d_squared(&short, a[0], a[1], a[2], a[3])?;
        let after = d_squared(&d, a[0], a[1], a[2], a[3])?;
        worst = worst.min(after - before);
    }
    Ok(check("separation_monotone", worst >= -1e-12, format!("smallest increment {worst:.3e}")))
}

/// Closed-form gain against a least-squares solve of the normal
/// equations.
pub fn gain_oracle(seed: u64, instances: usize) -> Result<Check> {
    let mut rng = stream(seed, Stream::Analysis);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let d = sensing(&mut rng, 8, 8, 12)?;
        let y: Vec<Complex64> = (0..12).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let (th, ph) = (angle(&mut rng), angle(&mut rng));
        let s = DMatrix::from_column_slice(12, 1, &d.project(th, ph));
        let yv = DVector::from_vec(y.clone());
        let lhs = s.adjoint() * &s;
        let rhs = s.adjoint() * yv;
        let ls = rhs[0] / lhs[(0, 0)];
        let got = estimate_delta(th, ph, &d, &y)?;
        worst = worst.max((got - ls).norm() / ls.norm().max(1e-12));
    }
    Ok(check("gain_oracle", worst <= 1e-10, format!("worst relative error {worst:.3e}")))
}

fn q_inverse(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Pairwise error probability against simulation at target levels in
/// `[0.05, 0.5]`. Alternatives sit close to the true pair so that the
/// full-signal SNR stays high, where the quadratic noise terms vanish.
pub fn pep_consistency(seed: u64, trials: usize) -> Result<Check> {
    let mut rng = stream(seed, Stream::Analysis);
    let mut worst: f64 = 0.0;
    for &target in &[0.05, 0.1, 0.2, 0.3, 0.4] {
        let d = sensing(&mut rng, 16, 16, 16)?;
        let (th, ph) = (angle(&mut rng), angle(&mut rng));
        let (ta, pa) = (th + rng.random_range(-0.01..0.01), ph + rng.random_range(-0.01..0.01));
        let d2 = d_squared(&d, th, ph, ta, pa)?;
        let x = q_inverse(target);
        let q = PepQuery {
            delta: Complex64::new(1.0, 0.0),
            noise_variance: d2 / (2.0 * x * x),
            theta: th,
            phi: ph,
            theta_alt: ta,
            phi_alt: pa,
        };
        let theory = pep_theoretical(&d, &q, PepForm::Derived)?;
        let sim = pep_monte_carlo(&d, &q, trials, &mut rng)?;
        worst = worst.max((theory - sim).abs());
    }
    Ok(check("pep_consistency", worst <= 0.02, format!("worst gap {worst:.4}")))
}

/// Noiseless single-path trial with every link clear reproduces the true
/// position, angles and blockage state.
pub fn fixed_point(cfg: &ExperimentConfig, seed: u64) -> Result<Check> {
    let mut cfg = cfg.clone();
    cfg.scenario.users = 1;
    cfg.scenario.nlos_paths = 0;
    cfg.sounding.leakage = false;
    let mut s = sample_scenario(&cfg.scenario, &mut stream(seed, Stream::Scenario))?.with_tx_power_dbm(20.0);
    s.noise_power = 0.0;
    let links = LinkState::all_clear(s.anchors.len());
    let r = run_trial_on(&cfg, &s, &links, 0, seed, 20.0, cfg.sounding.training_length)?;
    let Some(fix) = &r.fix else {
        return Ok(check("fixed_point", false, format!("no fix: {:?}", r.fix_error)));
    };
    let angle_err = r
        .links
        .iter()
        .zip(&fix.links)
        .map(|(l, f)| cos_sub(f.theta, l.theta).value().abs().max(cos_sub(f.phi, l.phi).value().abs()))
        .fold(0.0, f64::max);
    let clear = fix.links.iter().all(|l| l.unblocked);
    Ok(check(
        "fixed_point",
        r.position_error <= 1e-4 && angle_err <= 1e-6 && clear,
        format!("position error {:.3e} m, angle error {angle_err:.3e}, all clear {clear}", r.position_error),
    ))
}

/// Same figure twice and on one against several workers.
pub fn determinism(cfg: &ExperimentConfig, figure: &str) -> Result<Check> {
    let render = |workers: usize| -> Result<Vec<String>> {
        let mut c = cfg.clone();
        c.run.workers = workers;
        Ok(run_figure(figure, &c)?.into_iter().map(|(_, t)| t.render()).collect())
    };
    let a = render(1)?;
    let b = render(1)?;
    let c = render(4)?;
    Ok(check("determinism", a == b && a == c, format!("{figure}: repeat {} workers {}", a == b, a == c)))
}

/// Reduced-size run of every property check.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let seed = cfg.run.seed;
    let mut small = cfg.clone();
    small.run.trials = 4;
    small.fig8.tx_power_dbm = vec![15.0];
    Ok(vec![
        uniqueness(seed, 100)?,
        gradients(seed, 100)?,
        separation_monotone(seed, 1000)?,
        gain_oracle(seed, 1000)?,
        pep_consistency(seed, 20_000)?,
        fixed_point(cfg, seed)?,
        determinism(&small, "fig8")?,
    ])
}
