//! AoD-based MT localization and position-aided refinement.
//!
//! Each anchor's departure cosine constrains the MT to a cone. A
//! Gauss-Newton fit over the most reliable anchors gives the position;
//! arrival cosines then give the MT array direction, and both feed back
//! into refined angles, gains and blockage decisions for every link.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{Anchor, AnchorKind, Hall, Scenario};
use crate::error::{Error, Result};
use crate::estimator::{estimate_delta, PathEstimate};
use crate::geometry::{cos_add, cos_sub, cosine_of_direction, CosAngle, Vec3};
use crate::sounding::SoundingSession;

use std::f64::consts::PI;

/// Everything the MT knows about the infrastructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub anchors: Vec<Anchor>,
    pub hall: Hall,
    pub wavelength: f64,
    pub reflection_loss: f64,
}

impl Deployment {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            anchors: s.anchors.clone(),
            hall: s.hall,
            wavelength: s.wavelength,
            reflection_loss: s.reflection_loss,
        }
    }

    pub fn anchor(&self, eta: usize) -> Result<&Anchor> {
        eta.checked_sub(1)
            .and_then(|i| self.anchors.get(i))
            .ok_or(Error::UnknownIrs(eta))
    }

    fn bs(&self) -> &Anchor {
        &self.anchors[0]
    }

    /// Incidence cosine `θ_BR` at IRS `eta`; `None` for the base station.
    pub fn theta_br(&self, eta: usize) -> Result<Option<CosAngle>> {
        let a = self.anchor(eta)?;
        match a.kind {
            AnchorKind::BaseStation => Ok(None),
            AnchorKind::Irs => cosine_of_direction(a.position, self.bs().position, a.array.direction).map(Some),
        }
    }

    pub fn d_br(&self, eta: usize) -> Result<f64> {
        let a = self.anchor(eta)?;
        Ok(match a.kind {
            AnchorKind::BaseStation => 0.0,
            AnchorKind::Irs => a.position.distance(self.bs().position),
        })
    }

    /// Hall centroid at the given altitude.
    pub fn initial_guess(&self, altitude: f64) -> Vec3 {
        let c = (self.hall.min + self.hall.max) * 0.5;
        Vec3::new(c.x, c.y, altitude)
    }

    /// Physical departure cosine from the estimated (session-space) one.
    pub fn physical_aod(&self, eta: usize, session_phi: CosAngle) -> Result<CosAngle> {
        Ok(match self.theta_br(eta)? {
            None => session_phi,
            Some(t) => cos_add(session_phi, t),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionPolicy {
    /// Per-anchor cost threshold `ξ_th` (squared cosine units).
    pub cost_threshold: f64,
    pub pathloss_gap_db: f64,
    pub taylor_tolerance: f64,
    pub taylor_max_iterations: usize,
    pub initial_altitude: f64,
    pub direction_max_iterations: usize,
    /// Spacing of the coarse start-point grid over the hall, meters;
    /// 0 disables it.
    pub start_grid_spacing: f64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            cost_threshold: 0.005 * 0.005,
            pathloss_gap_db: 6.0,
            taylor_tolerance: 1e-6,
            taylor_max_iterations: 100,
            initial_altitude: 1.3,
            direction_max_iterations: 200,
            start_grid_spacing: 1.0,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.cost_threshold > 0.0) || !(self.pathloss_gap_db > 0.0) || !(self.taylor_tolerance > 0.0) {
            return Err(Error::InvalidArgument("selection thresholds must be positive".into()));
        }
        if !(self.start_grid_spacing >= 0.0) {
            return Err(Error::InvalidArgument("start grid spacing must be non-negative".into()));
        }
        if self.taylor_max_iterations == 0 || self.direction_max_iterations == 0 {
            return Err(Error::InvalidArgument("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

pub fn aod_of_position(p: Vec3, anchor: &Anchor) -> Result<CosAngle> {
    cosine_of_direction(p, anchor.position, anchor.array.direction)
}

/// `∂φ/∂p = (‖d‖ e - (dᵀe) d / ‖d‖) / ‖d‖²` with `d = p - p_η`.
pub fn aod_jacobian(p: Vec3, anchor: &Anchor) -> Result<Vec3> {
    let d = p - anchor.position;
    let r = d.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(Error::DegenerateGeometry("position coincides with anchor"));
    }
    let e = anchor.array.direction;
    Ok((e * r - d * (d.dot(e) / r)) * (1.0 / (r * r)))
}

fn bearing_cost(bearings: &[(Anchor, CosAngle)], p: Vec3) -> Result<f64> {
    bearings.iter().try_fold(0.0, |acc, (a, phi)| {
        Ok(acc + cos_sub(*phi, aod_of_position(p, a)?).value().powi(2))
    })
}

fn to_na(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

fn from_na(v: Vector3<f64>) -> Vec3 {
    Vec3::new(v.x, v.y, v.z)
}

fn rcond_sym(m: &Matrix3<f64>) -> f64 {
    let ev = SymmetricEigen::new(*m).eigenvalues;
    let max = ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min = ev.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// Lowest-cost point of a regular grid over the hall.
pub fn coarse_position(bearings: &[(Anchor, CosAngle)], hall: &Hall, spacing: f64) -> Result<Vec3> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument("grid spacing must be positive".into()));
    }
    let axis = |k: usize| -> Vec<f64> {
        let (lo, hi) = (hall.min.component(k), hall.max.component(k));
        let n = ((hi - lo) / spacing).ceil().max(1.0) as usize;
        (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
    };
    let (xs, ys, zs) = (axis(0), axis(1), axis(2));
    let mut best = (f64::INFINITY, hall.min);
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                let p = Vec3::new(x, y, z);
                // anchors sit on the hall boundary
                let Ok(c) = bearing_cost(bearings, p) else { continue };
                if c < best.0 {
                    best = (c, p);
                }
            }
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorFix {
    pub position: Vec3,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Gauss-Newton on `Σ (φ̂_η ⊖ φ_η(p))²`, kept inside `hall`.
pub fn taylor_position(
    bearings: &[(Anchor, CosAngle)],
    p0: Vec3,
    hall: &Hall,
    tolerance: f64,
    max_iterations: usize,
) -> Result<TaylorFix> {
    if bearings.len() < 3 {
        return Err(Error::InsufficientAnchors { available: bearings.len() });
    }
    let mut p = p0.clamp(hall.min, hall.max);
    let mut cost = bearing_cost(bearings, p)?;
    for it in 1..=max_iterations {
        let mut aat = Matrix3::zeros();
        let mut adphi = Vector3::zeros();
        for (a, phi) in bearings {
            let j = to_na(aod_jacobian(p, a)?);
            let r = cos_sub(*phi, aod_of_position(p, a)?).value();
            aat += j * j.transpose();
            adphi += j * r;
        }
        let rcond = rcond_sym(&aat);
        if !(rcond >= 1e-12) {
            return Err(Error::IllConditioned { rcond });
        }
        let dp = from_na(
            aat.cholesky()
                .ok_or(Error::IllConditioned { rcond })?
                .solve(&adphi),
        );
        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let cand = (p + dp * scale).clamp(hall.min, hall.max);
            let c = bearing_cost(bearings, cand)?;
            if c <= cost {
                next = Some((cand, c));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, c)) = next else {
            return Ok(TaylorFix { position: p, cost, iterations: it, converged: true });
        };
        let moved = cand.distance(p);
        p = cand;
        cost = c;
        if moved < tolerance {
            return Ok(TaylorFix { position: p, cost, iterations: it, converged: true });
        }
    }
    Ok(TaylorFix {
        position: p,
        cost,
        iterations: max_iterations,
        converged: false,
    })
}

/// Reliability-ranked bearing for one anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorObservation {
    pub anchor: Anchor,
    /// Physical departure cosine at the anchor.
    pub aod: CosAngle,
    pub residual_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliableFix {
    /// Anchor indices η in reliability order.
    pub reliable_set: Vec<usize>,
    pub fix: TaylorFix,
    pub low_confidence: bool,
}

/// Grows the anchor set in ascending-`ϖ` order and keeps the largest set
/// whose per-anchor cost stays below the threshold.
pub fn build_reliable_set(
    observations: &[AnchorObservation],
    hall: &Hall,
    policy: &SelectionPolicy,
    p0: Vec3,
) -> Result<ReliableFix> {
    policy.validate()?;
    if observations.len() < 3 {
        return Err(Error::InsufficientAnchors { available: observations.len() });
    }
    let mut order: Vec<&AnchorObservation> = observations.iter().collect();
    order.sort_by(|a, b| {
        a.residual_ratio
            .total_cmp(&b.residual_ratio)
            .then(a.anchor.index.cmp(&b.anchor.index))
    });

    let mut first: Option<(usize, TaylorFix)> = None;
    let mut accepted: Option<(usize, TaylorFix)> = None;
    let mut prev: Option<Vec3> = None;
    let mut last_err = None;
    for k in 3..=order.len() {
        let bearings: Vec<(Anchor, CosAngle)> = order[..k].iter().map(|o| (o.anchor, o.aod)).collect();
        let grid_start = if policy.start_grid_spacing > 0.0 {
            Some(coarse_position(&bearings, hall, policy.start_grid_spacing)?)
        } else {
            None
        };
        let mut best: Option<TaylorFix> = None;
        for start in std::iter::once(p0).chain(prev).chain(grid_start) {
            match taylor_position(&bearings, start, hall, policy.taylor_tolerance, policy.taylor_max_iterations) {
                Ok(f) if best.as_ref().is_none_or(|b| f.cost < b.cost) => best = Some(f),
                Ok(_) => {}
                Err(e) => last_err = Some(e),
            }
        }
        let Some(fix) = best else { continue };
        prev = Some(fix.position);
        if first.is_none() {
            first = Some((k, fix));
        }
        if fix.cost / k as f64 <= policy.cost_threshold {
            accepted = Some((k, fix));
        }
    }
    let ids = |k: usize| order[..k].iter().map(|o| o.anchor.index).collect();
    match (accepted, first) {
        (Some((k, fix)), _) => Ok(ReliableFix { reliable_set: ids(k), fix, low_confidence: false }),
        (None, Some((k, fix))) => Ok(ReliableFix { reliable_set: ids(k), fix, low_confidence: true }),
        (None, None) => Err(last_err.unwrap_or(Error::InsufficientAnchors { available: observations.len() })),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionEstimate {
    pub direction: Vec3,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn direction_cost(units: &[Vec3], theta: &[CosAngle], e: Vec3) -> f64 {
    units
        .iter()
        .zip(theta)
        .map(|(u, t)| cos_sub(u.dot(e), *t).value().powi(2))
        .sum()
}

fn direction_descent(
    p: Vec3,
    arrivals: &[(Anchor, CosAngle)],
    max_iterations: usize,
) -> Result<(DirectionEstimate, Vec<f64>)> {
    if arrivals.len() < 3 {
        return Err(Error::InsufficientAnchors { available: arrivals.len() });
    }
    let mut units = Vec::with_capacity(arrivals.len());
    for (a, _) in arrivals {
        units.push(
            (p - a.position)
                .normalized()
                .ok_or(Error::DegenerateGeometry("position coincides with anchor"))?,
        );
    }
    let theta: Vec<CosAngle> = arrivals.iter().map(|(_, t)| *t).collect();

    let mut ppt = Matrix3::zeros();
    let mut pt = Vector3::zeros();
    for (u, t) in units.iter().zip(&theta) {
        let u = to_na(*u);
        ppt += u * u.transpose();
        pt += u * t.value();
    }
    // unconstrained least squares, then onto the sphere
    let ls = ppt
        .pseudo_inverse(1e-12)
        .map(|inv| from_na(inv * pt))
        .ok()
        .and_then(|v| v.normalized());
    let mut e = ls.unwrap_or_else(|| units[0]);
    let lmax = SymmetricEigen::new(ppt).eigenvalues.max();
    let step0 = if lmax > 0.0 { 1.0 / lmax } else { 1.0 };

    let mut cost = direction_cost(&units, &theta, e);
    let mut trace = vec![cost];
    for it in 1..=max_iterations {
        let mut grad = Vec3::ZERO;
        for (u, t) in units.iter().zip(&theta) {
            grad = grad + *u * cos_sub(u.dot(e), *t).value();
        }
        let mut step = step0;
        let mut next = None;
        for _ in 0..40 {
            if let Some(cand) = (e - grad * step).normalized() {
                let c = direction_cost(&units, &theta, cand);
                if c <= cost {
                    next = Some((cand, c));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, c)) = next else {
            return Ok((DirectionEstimate { direction: e, cost, iterations: it, converged: true }, trace));
        };
        let moved = (cand - e).norm();
        e = cand;
        cost = c;
        trace.push(cost);
        if moved < 1e-12 {
            return Ok((DirectionEstimate { direction: e, cost, iterations: it, converged: true }, trace));
        }
    }
    Ok((
        DirectionEstimate { direction: e, cost, iterations: max_iterations, converged: false },
        trace,
    ))
}

/// Least-squares MT array direction from arrival cosines: unconstrained
/// solution normalized, then projected gradient descent on the sphere.
pub fn estimate_mt_direction(
    p: Vec3,
    arrivals: &[(Anchor, CosAngle)],
    max_iterations: usize,
) -> Result<DirectionEstimate> {
    direction_descent(p, arrivals, max_iterations).map(|(d, _)| d)
}

/// Position-derived `(θ*, φ*)` for one anchor. `φ*` is the physical
/// departure cosine; for IRS sessions use [`session_angles`].
pub fn refine_angles(p: Vec3, mt_direction: Vec3, anchor: &Anchor) -> Result<(CosAngle, CosAngle)> {
    Ok((
        cosine_of_direction(p, anchor.position, mt_direction)?,
        aod_of_position(p, anchor)?,
    ))
}

/// Refined `(θ*, φ*)` in session coordinates: IRS departure cosines are
/// shifted by `θ_BR`.
pub fn session_angles(deployment: &Deployment, eta: usize, p: Vec3, mt_direction: Vec3) -> Result<(CosAngle, CosAngle)> {
    let (theta, phi) = refine_angles(p, mt_direction, deployment.anchor(eta)?)?;
    let phi = match deployment.theta_br(eta)? {
        None => phi,
        Some(t) => cos_sub(phi, t),
    };
    Ok((theta, phi))
}

/// Closed-form gain at the refined angles, session scale removed.
pub fn refined_delta(theta: CosAngle, phi: CosAngle, session: &SoundingSession) -> Result<Complex64> {
    Ok(estimate_delta(theta.value(), phi.value(), &session.sensing, &session.y)? / session.gain_scale)
}

/// Expected received path amplitude `|δ_η(p̂)|` including transmit power
/// and, for IRS links, the `N_B` beam gain.
pub fn pathloss_from_position(
    p: Vec3,
    deployment: &Deployment,
    eta: usize,
    tx_power: f64,
    bs_antennas: usize,
) -> Result<f64> {
    let a = deployment.anchor(eta)?;
    let lambda = deployment.wavelength;
    let d = p.distance(a.position);
    if d == 0.0 && a.kind == AnchorKind::BaseStation {
        return Err(Error::DegenerateGeometry("position coincides with base station"));
    }
    Ok(match a.kind {
        AnchorKind::BaseStation => tx_power.sqrt() * lambda / (4.0 * PI * d),
        AnchorKind::Irs => {
            let total = deployment.d_br(eta)? + d;
            (deployment.reflection_loss * tx_power * bs_antennas as f64).sqrt() * lambda / (4.0 * PI * total)
        }
    })
}

/// `true` (unblocked) iff the measured and predicted path amplitudes differ
/// by at most `gap_db`.
pub fn decide_blockage(measured: f64, expected: f64, gap_db: f64) -> bool {
    if !(measured > 0.0) || !(expected > 0.0) {
        return false;
    }
    (20.0 * measured.log10() - 20.0 * expected.log10()).abs() <= gap_db
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRefinement {
    pub anchor_index: usize,
    pub theta: CosAngle,
    /// Session-space departure cosine.
    pub phi: CosAngle,
    /// Physical gain at the refined angles.
    pub delta: Complex64,
    /// `|δ*|` times the session gain scale.
    pub measured_amplitude: f64,
    pub expected_amplitude: f64,
    pub unblocked: bool,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionFix {
    pub position: Vec3,
    pub reliable_set: Vec<usize>,
    pub cost: f64,
    pub low_confidence: bool,
    pub mt_direction: Vec3,
    pub links: Vec<LinkRefinement>,
    pub taylor_iterations: usize,
    pub taylor_converged: bool,
    pub direction_converged: bool,
}

/// Full chain: reliable set, position, MT direction, per-link refinement
/// and blockage decisions. `sessions[i]` and `estimates[i]` belong to
/// anchor `η = i + 1`.
pub fn locate(
    deployment: &Deployment,
    sessions: &[SoundingSession],
    estimates: &[PathEstimate],
    policy: &SelectionPolicy,
) -> Result<PositionFix> {
    let n = deployment.anchors.len();
    if sessions.len() != n || estimates.len() != n {
        return Err(Error::DimensionMismatch {
            what: "per-anchor sessions/estimates",
            expected: n,
            got: sessions.len().min(estimates.len()),
        });
    }
    let observations = deployment
        .anchors
        .iter()
        .zip(estimates)
        .map(|(a, e)| {
            Ok(AnchorObservation {
                anchor: *a,
                aod: deployment.physical_aod(a.index, e.phi)?,
                residual_ratio: e.residual_ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let p0 = deployment.initial_guess(policy.initial_altitude);
    let rel = build_reliable_set(&observations, &deployment.hall, policy, p0)?;
    let p = rel.fix.position;

    let arrivals: Vec<(Anchor, CosAngle)> = rel
        .reliable_set
        .iter()
        .map(|&eta| (deployment.anchors[eta - 1], estimates[eta - 1].theta))
        .collect();
    let dir = estimate_mt_direction(p, &arrivals, policy.direction_max_iterations)?;

    // MT power and BS array size follow from the direct-link session
    let tx_power = sessions[0].gain_scale.powi(2);
    let n_b = deployment.anchors[0].array.size;
    let mut links = Vec::with_capacity(n);
    for (i, session) in sessions.iter().enumerate() {
        let eta = i + 1;
        let (theta, phi) = session_angles(deployment, eta, p, dir.direction)?;
        let delta = refined_delta(theta, phi, session)?;
        let measured = delta.norm() * session.gain_scale;
        let expected = pathloss_from_position(p, deployment, eta, tx_power, n_b)?;
        links.push(LinkRefinement {
            anchor_index: eta,
            theta,
            phi,
            delta,
            measured_amplitude: measured,
            expected_amplitude: expected,
            unblocked: decide_blockage(measured, expected, policy.pathloss_gap_db),
            reliable: rel.reliable_set.contains(&eta),
        });
    }
    Ok(PositionFix {
        position: p,
        reliable_set: rel.reliable_set,
        cost: rel.fix.cost,
        low_confidence: rel.low_confidence,
        mt_direction: dir.direction,
        links,
        taylor_iterations: rel.fix.iterations,
        taylor_converged: rel.fix.converged,
        direction_converged: dir.converged,
    })
}
