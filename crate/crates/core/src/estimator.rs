//! Maximum-likelihood single-path estimation from a sounding session.
//!
//! With `s = D b(θ,φ)` the concentrated likelihood is
//! `g(θ,φ) = |s^H y|² / ‖s‖²`. A cyclic coarse grid seeds gradient ascent;
//! the gain follows in closed form.

use std::cmp::Ordering;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cos_add, cos_sub, steering_vector, CosAngle};
use crate::sounding::{SensingMatrix, SoundingSession};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub z_theta: usize,
    pub z_phi: usize,
    pub peaks: usize,
}

impl GridSpec {
    /// `Z = 4 max(n_tx, n_rx)` on both axes, five peaks.
    pub fn for_arrays(n_tx: usize, n_rx: usize) -> Self {
        let z = (4 * n_tx.max(n_rx)).max(4);
        Self { z_theta: z, z_phi: z, peaks: 5 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.z_theta < 4 || self.z_phi < 4 || self.peaks == 0 {
            return Err(Error::InvalidArgument(
                "grid needs Z ≥ 4 on both axes and at least one peak".into(),
            ));
        }
        Ok(())
    }

    /// Cell centers `-1 + (2ι - 1)/Z`, ι = 1..Z.
    pub fn points(z: usize) -> Vec<f64> {
        (1..=z).map(|i| -1.0 + (2 * i - 1) as f64 / z as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineSearchConfig {
    /// Initial ascent step on `g/‖y‖²`; `None` picks `6 / (π²(n² - 1))`,
    /// the inverse curvature of a matched `n`-element beam. Later steps use
    /// the Barzilai-Borwein rule.
    pub step: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub backtracking: bool,
}

impl Default for FineSearchConfig {
    fn default() -> Self {
        Self {
            step: None,
            tolerance: 1e-16,
            max_iterations: 50,
            backtracking: true,
        }
    }
}

impl FineSearchConfig {
    pub fn step_for(&self, n_tx: usize, n_rx: usize) -> f64 {
        self.step.unwrap_or_else(|| {
            let n = n_tx.max(n_rx).max(2) as f64;
            6.0 / (PI * PI * (n * n - 1.0))
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.step.is_some_and(|s| !(s > 0.0)) || !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "fine search step, tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

fn check_len(d: &SensingMatrix, y: &[Complex64]) -> Result<()> {
    if d.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "measurement vector",
            expected: d.rows(),
            got: y.len(),
        });
    }
    Ok(())
}

pub fn objective_g(theta: f64, phi: f64, d: &SensingMatrix, y: &[Complex64]) -> Result<f64> {
    check_len(d, y)?;
    let s = d.project(theta, phi);
    let q = energy(&s);
    if q <= 0.0 {
        return Err(Error::ZeroProjection);
    }
    Ok(inner(&s, y).norm_sqr() / q)
}

/// `(∂g/∂θ, ∂g/∂φ)` in closed form.
pub fn gradient_g(theta: f64, phi: f64, d: &SensingMatrix, y: &[Complex64]) -> Result<(f64, f64)> {
    check_len(d, y)?;
    let p = d.project_with_derivatives(theta, phi);
    let q = energy(&p.s);
    if q <= 0.0 {
        return Err(Error::ZeroProjection);
    }
    let c = inner(&p.s, y);
    let c2 = c.norm_sqr();
    let part = |ds: &[Complex64]| {
        let num = 2.0 * (c * inner(y, ds)).re / q;
        let den = c2 / (q * q) * 2.0 * inner(&p.s, ds).re;
        num - den
    };
    Ok((part(&p.ds_theta), part(&p.ds_phi)))
}

/// `g` over the whole grid, `θ`-major (`values[ι * Z_φ + κ]`).
pub fn objective_grid(d: &SensingMatrix, y: &[Complex64], z_theta: usize, z_phi: usize) -> Result<Vec<f64>> {
    check_len(d, y)?;
    let thetas = GridSpec::points(z_theta);
    let phis = GridSpec::points(z_phi);
    // per-slot factors on each axis
    let rx: Vec<Vec<Complex64>> = thetas
        .iter()
        .map(|&t| {
            let a = steering_vector(d.n_rx(), t);
            (0..d.rows()).map(|n| inner(d.rx_row(n), &a)).collect()
        })
        .collect();
    let tx: Vec<Vec<Complex64>> = phis
        .iter()
        .map(|&p| {
            let a = steering_vector(d.n_tx(), p);
            (0..d.rows()).map(|n| inner(&a, d.tx_row(n))).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(z_theta * z_phi);
    for r in &rx {
        for t in &tx {
            let mut c = Complex64::new(0.0, 0.0);
            let mut q = 0.0;
            for n in 0..y.len() {
                let s = t[n] * r[n];
                c += s.conj() * y[n];
                q += s.norm_sqr();
            }
            out.push(if q > 0.0 { c.norm_sqr() / q } else { 0.0 });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub theta: CosAngle,
    pub phi: CosAngle,
    pub value: f64,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.value
        .partial_cmp(&a.value)
        .unwrap_or(Ordering::Equal)
        .then(a.theta.value().total_cmp(&b.theta.value()))
        .then(a.phi.value().total_cmp(&b.phi.value()))
}

/// Strict 4-neighbour maxima of the cyclic grid, best first, at most
/// `grid.peaks`. Falls back to the global argmax when no strict maximum
/// exists.
pub fn coarse_search(d: &SensingMatrix, y: &[Complex64], grid: &GridSpec) -> Result<Vec<Candidate>> {
    grid.validate()?;
    let (zt, zp) = (grid.z_theta, grid.z_phi);
    let g = objective_grid(d, y, zt, zp)?;
    let thetas = GridSpec::points(zt);
    let phis = GridSpec::points(zp);
    let at = |i: usize, k: usize| g[i * zp + k];
    let cand = |i: usize, k: usize| Candidate {
        theta: CosAngle::wrap(thetas[i]),
        phi: CosAngle::wrap(phis[k]),
        value: at(i, k),
    };
    let mut peaks = Vec::new();
    for i in 0..zt {
        for k in 0..zp {
            let v = at(i, k);
            let neighbours = [
                at((i + 1) % zt, k),
                at((i + zt - 1) % zt, k),
                at(i, (k + 1) % zp),
                at(i, (k + zp - 1) % zp),
            ];
            if neighbours.iter().all(|&n| v > n) {
                peaks.push(cand(i, k));
            }
        }
    }
    if peaks.is_empty() {
        let best = (0..zt * zp)
            .map(|j| cand(j / zp, j % zp))
            .min_by(rank)
            .expect("grid is non-empty");
        return Ok(vec![best]);
    }
    peaks.sort_by(rank);
    peaks.truncate(grid.peaks);
    Ok(peaks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineResult {
    pub theta: CosAngle,
    pub phi: CosAngle,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient ascent with wrap-around updates. Stops once
/// `(Δθ)² + (Δφ)² ≤ tolerance`; never returns a point worse than `start`.
pub fn fine_search(
    start: (CosAngle, CosAngle),
    d: &SensingMatrix,
    y: &[Complex64],
    cfg: &FineSearchConfig,
) -> Result<FineResult> {
    cfg.validate()?;
    check_len(d, y)?;
    let norm = energy(y);
    if norm == 0.0 {
        return Ok(FineResult {
            theta: start.0,
            phi: start.1,
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let step0 = cfg.step_for(d.n_tx(), d.n_rx());
    let (mut theta, mut phi) = start;
    let mut value = objective_g(theta.value(), phi.value(), d, y)?;
    let mut step = step0;
    let mut prev: Option<(f64, f64, f64, f64)> = None;
    for it in 1..=cfg.max_iterations {
        let (gt, gp) = gradient_g(theta.value(), phi.value(), d, y)?;
        let (gt, gp) = (gt / norm, gp / norm);
        if let Some((st, sp, pt, pp)) = prev {
            // Barzilai-Borwein step from the last displacement
            let curv = -(st * (gt - pt) + sp * (gp - pp));
            if curv > 0.0 {
                step = (st * st + sp * sp) / curv;
            }
        }
        let mut accepted = None;
        for _ in 0..60 {
            let nt = cos_add(theta, step * gt);
            let np = cos_add(phi, step * gp);
            let nv = objective_g(nt.value(), np.value(), d, y)?;
            if !cfg.backtracking || nv >= value {
                accepted = Some((nt, np, nv));
                break;
            }
            step *= 0.5;
        }
        let Some((nt, np, nv)) = accepted else {
            // no ascent direction left at floating-point resolution
            return Ok(FineResult { theta, phi, value, iterations: it, converged: true });
        };
        let st = cos_sub(nt, theta).value();
        let sp = cos_sub(np, phi).value();
        theta = nt;
        phi = np;
        value = nv;
        if st * st + sp * sp <= cfg.tolerance {
            return Ok(FineResult { theta, phi, value, iterations: it, converged: true });
        }
        prev = Some((st, sp, gt, gp));
    }
    Ok(FineResult {
        theta,
        phi,
        value,
        iterations: cfg.max_iterations,
        converged: false,
    })
}

/// Fine-searches every coarse candidate and merges those that land within
/// `merge_radius` of a better one. Sorted best first.
pub fn refined_peaks(
    d: &SensingMatrix,
    y: &[Complex64],
    grid: &GridSpec,
    cfg: &FineSearchConfig,
    merge_radius: f64,
) -> Result<Vec<Candidate>> {
    let mut out: Vec<Candidate> = Vec::new();
    let mut refined = coarse_search(d, y, grid)?
        .into_iter()
        .map(|c| {
            fine_search((c.theta, c.phi), d, y, cfg).map(|r| Candidate {
                theta: r.theta,
                phi: r.phi,
                value: r.value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    refined.sort_by(rank);
    for c in refined {
        let dup = out.iter().any(|o| {
            cos_sub(o.theta, c.theta).value().abs() <= merge_radius
                && cos_sub(o.phi, c.phi).value().abs() <= merge_radius
        });
        if !dup {
            out.push(c);
        }
    }
    Ok(out)
}

/// Closed-form `δ̂ = s^H y / ‖s‖²`.
pub fn estimate_delta(theta: f64, phi: f64, d: &SensingMatrix, y: &[Complex64]) -> Result<Complex64> {
    check_len(d, y)?;
    let s = d.project(theta, phi);
    let q = energy(&s);
    if q <= 0.0 {
        return Err(Error::ZeroProjection);
    }
    Ok(inner(&s, y) / q)
}

/// `‖y - δ̂ s‖² / ‖y‖²`, clamped to `[0, 1]`.
pub fn residual_ratio(y: &[Complex64], delta: Complex64, theta: f64, phi: f64, d: &SensingMatrix) -> Result<f64> {
    check_len(d, y)?;
    let norm = energy(y);
    if norm == 0.0 {
        return Err(Error::ZeroMeasurement);
    }
    let s = d.project(theta, phi);
    let r: f64 = y.iter().zip(&s).map(|(y, s)| (y - delta * s).norm_sqr()).sum();
    Ok((r / norm).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    /// Physical path gain (session gain scale removed).
    pub delta: Complex64,
    pub theta: CosAngle,
    pub phi: CosAngle,
    pub residual_ratio: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn estimate_path(session: &SoundingSession, grid: &GridSpec, cfg: &FineSearchConfig) -> Result<PathEstimate> {
    let d = &session.sensing;
    let y = &session.y;
    let mut best: Option<FineResult> = None;
    for c in coarse_search(d, y, grid)? {
        let r = fine_search((c.theta, c.phi), d, y, cfg)?;
        let better = match &best {
            None => true,
            Some(b) => {
                let a = Candidate { theta: r.theta, phi: r.phi, value: r.value };
                let b = Candidate { theta: b.theta, phi: b.phi, value: b.value };
                rank(&a, &b) == Ordering::Less
            }
        };
        if better {
            best = Some(r);
        }
    }
    let best = best.expect("coarse search returns at least one candidate");
    let (t, p) = (best.theta.value(), best.phi.value());
    let raw = estimate_delta(t, p, d, y)?;
    Ok(PathEstimate {
        delta: raw / session.gain_scale,
        theta: best.theta,
        phi: best.phi,
        residual_ratio: residual_ratio(y, raw, t, p, d)?,
        objective: best.value,
        iterations: best.iterations,
        converged: best.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian, stream, Stream};
    use crate::sounding::{random_codebook, synth_unified, Side};
    use rand::Rng;

    fn sensing(seed: u64, n_tx: usize, n_rx: usize, rows: usize) -> SensingMatrix {
        let mut rng = stream(seed, Stream::Codebook);
        let f = random_codebook(Side::Transmit, n_tx, rows, &mut rng).unwrap();
        let m = random_codebook(Side::Receive, n_rx, rows, &mut rng).unwrap();
        SensingMatrix::from_codebooks(&f, &m).unwrap()
    }

    fn clean(d: &SensingMatrix, delta: Complex64, theta: f64, phi: f64) -> Vec<Complex64> {
        d.project(theta, phi).into_iter().map(|s| delta * s).collect()
    }

    #[test]
    fn objective_at_truth_and_orthogonal() {
        let d = sensing(1, 16, 16, 16);
        let delta = Complex64::new(0.7, -0.2);
        let y = clean(&d, delta, 0.3, -0.5);
        let s = d.project(0.3, -0.5);
        let g = objective_g(0.3, -0.5, &d, &y).unwrap();
        assert!((g - delta.norm_sqr() * energy(&s)).abs() < 1e-12 * g);

        // remove the component along s
        let c = inner(&s, &y) / energy(&s);
        let perp: Vec<Complex64> = y.iter().zip(&s).map(|(y, s)| y - c * s).collect();
        assert!(objective_g(0.3, -0.5, &d, &perp).unwrap() < 1e-20);
        assert!(objective_g(0.3, -0.5, &d, &y[..3]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = stream(2, Stream::Analysis);
        let h = 1e-6;
        for seed in 0..100 {
            let d = sensing(seed, 16, 16, 16);
            let y: Vec<Complex64> = (0..16).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let (t, p) = (rng.random_range(-0.99..0.99), rng.random_range(-0.99..0.99));
            let (gt, gp) = gradient_g(t, p, &d, &y).unwrap();
            let f = |a: f64, b: f64| objective_g(a, b, &d, &y).unwrap();
            let ft = (f(t + h, p) - f(t - h, p)) / (2.0 * h);
            let fp = (f(t, p + h) - f(t, p - h)) / (2.0 * h);
            let scale = gt.abs().max(gp.abs()).max(1e-3 * f(t, p));
            assert!((ft - gt).abs() <= 1e-5 * scale, "θ: {ft} vs {gt}");
            assert!((fp - gp).abs() <= 1e-5 * scale, "φ: {fp} vs {gp}");
        }
    }

    #[test]
    fn swapping_roles_swaps_gradient() {
        let mut rng = stream(3, Stream::Analysis);
        let d = sensing(3, 8, 16, 20);
        let sw = d.swapped();
        let y: Vec<Complex64> = (0..20).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let yc: Vec<Complex64> = y.iter().map(|v| v.conj()).collect();
        let (gt, gp) = gradient_g(0.2, -0.7, &d, &y).unwrap();
        let (st, sp) = gradient_g(-0.7, 0.2, &sw, &yc).unwrap();
        assert!((gt - sp).abs() < 1e-9 * gt.abs().max(1.0));
        assert!((gp - st).abs() < 1e-9 * gp.abs().max(1.0));
        let a = objective_g(0.2, -0.7, &d, &y).unwrap();
        let b = objective_g(-0.7, 0.2, &sw, &yc).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn coarse_top_candidate_near_truth() {
        let grid = GridSpec::for_arrays(16, 16);
        assert_eq!(grid.z_theta, 64);
        let mut rng = stream(4, Stream::Analysis);
        for seed in 0..20 {
            let d = sensing(seed + 100, 16, 16, 16);
            let (t, p) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let y = clean(&d, Complex64::new(1.0, 0.0), t, p);
            let c = coarse_search(&d, &y, &grid).unwrap();
            assert!(c.len() <= 5 && !c.is_empty());
            assert!(c.windows(2).all(|w| w[0].value >= w[1].value));
            // exhaustive evaluation on the same grid is the oracle
            let g = objective_grid(&d, &y, 64, 64).unwrap();
            let (j, _) = g.iter().enumerate().fold((0, f64::MIN), |b, (j, &v)| if v > b.1 { (j, v) } else { b });
            let pts = GridSpec::points(64);
            assert_eq!(c[0].theta.value(), pts[j / 64]);
            assert_eq!(c[0].phi.value(), pts[j % 64]);
            assert!(cos_sub(c[0].theta, t).value().abs() <= 2.0 / 64.0);
            assert!(cos_sub(c[0].phi, p).value().abs() <= 2.0 / 64.0);
        }
    }

    #[test]
    fn zero_measurement_falls_back_to_argmax() {
        let d = sensing(5, 16, 16, 16);
        let y = vec![Complex64::new(0.0, 0.0); 16];
        let c = coarse_search(&d, &y, &GridSpec::for_arrays(16, 16)).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].value, 0.0);
        assert_eq!(c[0].theta.value(), -1.0 + 1.0 / 64.0);
    }

    #[test]
    fn fine_search_from_truth_and_from_neighbour_cell() {
        let cfg = FineSearchConfig::default();
        let mut rng = stream(6, Stream::Analysis);
        for seed in 0..20 {
            let d = sensing(seed + 200, 16, 16, 16);
            let (t, p) = (rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9));
            let y = clean(&d, Complex64::new(0.5, 0.5), t, p);
            let r = fine_search((CosAngle::wrap(t), CosAngle::wrap(p)), &d, &y, &cfg).unwrap();
            assert!(r.iterations <= 2);
            assert!((r.theta.value() - t).abs() < 1e-9);

            let start = (CosAngle::wrap(t + 2.0 / 64.0), CosAngle::wrap(p - 2.0 / 64.0));
            let r = fine_search(start, &d, &y, &cfg).unwrap();
            assert!(cos_sub(r.theta, t).value().abs() < 1e-6, "θ {} vs {t}", r.theta);
            assert!(cos_sub(r.phi, p).value().abs() < 1e-6, "φ {} vs {p}", r.phi);
            let (gt, gp) = gradient_g(r.theta.value(), r.phi.value(), &d, &y).unwrap();
            let norm = energy(&y);
            // gradient over curvature: distance to the stationary point
            let lambda = cfg.step_for(16, 16);
            assert!(lambda * gt.abs() / norm < 1e-6 && lambda * gp.abs() / norm < 1e-6);
        }
    }

    #[test]
    fn fine_search_never_descends() {
        let mut rng = stream(7, Stream::Analysis);
        let cfg = FineSearchConfig::default();
        for seed in 0..30 {
            let d = sensing(seed, 16, 16, 16);
            let y: Vec<Complex64> = (0..16).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let start = (CosAngle::wrap(rng.random_range(-1.0..1.0)), CosAngle::wrap(rng.random_range(-1.0..1.0)));
            let g0 = objective_g(start.0.value(), start.1.value(), &d, &y).unwrap();
            let r = fine_search(start, &d, &y, &cfg).unwrap();
            assert!(r.value >= g0);
        }
    }

    #[test]
    fn delta_closed_form_matches_least_squares() {
        let d = sensing(8, 16, 16, 16);
        let mut rng = stream(8, Stream::Analysis);
        let delta = Complex64::new(-0.3, 1.1);
        let y = clean(&d, delta, 0.4, 0.1);
        assert!((estimate_delta(0.4, 0.1, &d, &y).unwrap() - delta).norm() < 1e-12);

        let y: Vec<Complex64> = (0..16).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let s = d.project(-0.2, 0.6);
        // normal equations of the 16×1 system
        let a = nalgebra::DMatrix::from_column_slice(16, 1, &s);
        let b = nalgebra::DVector::from_column_slice(&y);
        let ls = (a.adjoint() * &a).lu().solve(&(a.adjoint() * &b)).unwrap()[0];
        let est = estimate_delta(-0.2, 0.6, &d, &y).unwrap();
        assert!((ls - est).norm() < 1e-10);

        let cost = |x: Complex64| y.iter().zip(&s).map(|(y, s)| (y - x * s).norm_sqr()).sum::<f64>();
        let base = cost(est);
        for dir in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0)] {
            assert!(cost(est + dir * 1e-3 * est.norm()) > base);
        }
    }

    #[test]
    fn residual_ratio_bounds() {
        let d = sensing(9, 16, 16, 16);
        let y = clean(&d, Complex64::new(1.0, 0.0), 0.1, 0.2);
        let dl = estimate_delta(0.1, 0.2, &d, &y).unwrap();
        assert!(residual_ratio(&y, dl, 0.1, 0.2, &d).unwrap() < 1e-20);
        assert_eq!(residual_ratio(&y, Complex64::new(0.0, 0.0), 0.1, 0.2, &d).unwrap(), 1.0);
        assert!(matches!(
            residual_ratio(&vec![Complex64::new(0.0, 0.0); 16], dl, 0.1, 0.2, &d),
            Err(Error::ZeroMeasurement)
        ));
    }

    fn session(d: SensingMatrix, y: Vec<Complex64>, scale: f64) -> SoundingSession {
        SoundingSession::new(1, d, y, scale, 0.0).unwrap()
    }

    #[test]
    fn noiseless_recovery_and_scale_equivariance() {
        let grid = GridSpec::for_arrays(16, 16);
        let cfg = FineSearchConfig::default();
        let d = sensing(10, 16, 16, 16);
        let delta = Complex64::new(2e-5, -1e-5);
        let y = clean(&d, delta * 3.0, -0.61, 0.27);
        let e = estimate_path(&session(d.clone(), y.clone(), 3.0), &grid, &cfg).unwrap();
        assert!((e.theta.value() + 0.61).abs() < 1e-6);
        assert!((e.phi.value() - 0.27).abs() < 1e-6);
        assert!((e.delta - delta).norm() < 1e-6 * delta.norm());
        assert!(e.residual_ratio < 1e-8);

        let mut rng = stream(10, Stream::Noise);
        let noisy = synth_unified(true, delta, -0.61, 0.27, &d, 1e-12, &mut rng);
        let c = Complex64::new(-3.0, 7.0);
        let scaled: Vec<Complex64> = noisy.iter().map(|v| v * c).collect();
        let a = estimate_path(&session(d.clone(), noisy, 1.0), &grid, &cfg).unwrap();
        let b = estimate_path(&session(d, scaled, 1.0), &grid, &cfg).unwrap();
        assert!((a.theta.value() - b.theta.value()).abs() < 1e-9);
        assert!((a.phi.value() - b.phi.value()).abs() < 1e-9);
        assert!((a.delta * c - b.delta).norm() < 1e-6 * b.delta.norm());
        assert!((a.residual_ratio - b.residual_ratio).abs() < 1e-9);
    }

    #[test]
    fn table_setting_peak_gap_grows_with_training_length() {
        let grid = GridSpec { z_theta: 64, z_phi: 64, peaks: 5 };
        let full = sensing(11, 16, 16, 16);
        let mut gaps = Vec::new();
        for n in [4, 8, 12, 16] {
            let d = full.truncated(n).unwrap();
            let y = clean(&d, Complex64::new(1.0, 0.0), 0.0, 0.0);
            let peaks = refined_peaks(&d, &y, &grid, &FineSearchConfig::default(), 1e-3).unwrap();
            assert!(peaks[0].theta.value().abs() < 1e-6 && peaks[0].phi.value().abs() < 1e-6);
            gaps.push(peaks[0].value - peaks.get(1).map_or(0.0, |p| p.value));
        }
        assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
    }
}
