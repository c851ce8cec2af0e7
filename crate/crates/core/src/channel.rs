//! Scenario sampling, blockage evaluation and per-path channel synthesis.
//!
//! Anchor `η = 1` is the base station; anchors `η ≥ 2` are IRSs in
//! configuration order. Path gains never include transmit power; the
//! sounding layer applies `√P_Tx` (and the `√N_B` beam gain toward an IRS)
//! exactly once.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    cos_sub, cosine_of_direction, segment_intersects_box, steering_vector, ArrayGeometry, CosAngle,
    Cuboid, Vec3,
};
use crate::rng::complex_gaussian;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Scenario parameters; defaults reproduce the lecture-hall deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub hall_min: [f64; 3],
    pub hall_max: [f64; 3],
    pub bs_position: [f64; 3],
    pub bs_direction: [f64; 3],
    pub irs_positions: Vec<[f64; 3]>,
    pub irs_directions: Vec<[f64; 3]>,
    pub bs_antennas: usize,
    pub mt_antennas: usize,
    pub irs_elements: usize,
    pub frequency_ghz: f64,
    pub reflection_loss_db: f64,
    pub noise_dbm: f64,
    /// Users in the hall including the one holding the MT.
    pub users: usize,
    pub obstacle_size: [f64; 3],
    pub mt_altitude: [f64; 2],
    pub nlos_paths: usize,
    pub nlos_gap_db: f64,
    pub max_placement_attempts: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let h = 3.5;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            hall_min: [-10.0, -10.0, 0.0],
            hall_max: [10.0, 10.0, 5.0],
            bs_position: [0.0, 0.0, 5.0],
            bs_direction: [s, s, 0.0],
            irs_positions: vec![
                [5.0, -10.0, h],
                [5.0, 10.0, h],
                [0.0, -10.0, h],
                [0.0, 10.0, h],
                [-5.0, -10.0, h],
                [-5.0, 10.0, h],
                [-10.0, 5.0, h],
                [10.0, 5.0, h],
                [-10.0, 0.0, h],
                [10.0, 0.0, h],
                [-10.0, -5.0, h],
                [10.0, -5.0, h],
            ],
            irs_directions: vec![
                [0.0, 0.0, 1.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            bs_antennas: 16,
            mt_antennas: 16,
            irs_elements: 16,
            frequency_ghz: 28.0,
            reflection_loss_db: 13.0,
            noise_dbm: -84.0,
            users: 100,
            obstacle_size: [0.6, 0.4, 1.7],
            mt_altitude: [1.2, 1.4],
            nlos_paths: 4,
            nlos_gap_db: 20.0,
            max_placement_attempts: 10_000,
        }
    }
}

impl ScenarioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / (self.frequency_ghz * 1e9)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.irs_positions.len() != self.irs_directions.len() {
            return bad("irs_positions and irs_directions differ in length");
        }
        if (0..3).any(|k| self.hall_min[k] >= self.hall_max[k]) {
            return bad("hall_min must be below hall_max on every axis");
        }
        if self.bs_antennas == 0 || self.mt_antennas == 0 || self.irs_elements == 0 {
            return bad("array sizes must be positive");
        }
        if !(self.frequency_ghz > 0.0) {
            return bad("frequency must be positive");
        }
        if !(self.reflection_loss_db >= 0.0) {
            return bad("reflection loss must be non-negative dB");
        }
        if self.users == 0 {
            return bad("at least one user (the MT holder) is required");
        }
        if self.obstacle_size.iter().any(|&s| !(s > 0.0)) {
            return bad("obstacle size must be positive");
        }
        if !(self.mt_altitude[0] <= self.mt_altitude[1]) {
            return bad("mt_altitude must be [low, high]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnchorKind {
    BaseStation,
    Irs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub kind: AnchorKind,
    /// 1-based anchor index; 1 is the base station.
    pub index: usize,
    pub position: Vec3,
    pub array: ArrayGeometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hall {
    pub min: Vec3,
    pub max: Vec3,
}

impl Hall {
    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|k| p.component(k) >= self.min.component(k) && p.component(k) <= self.max.component(k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub hall: Hall,
    pub anchors: Vec<Anchor>,
    pub obstacles: Vec<Cuboid>,
    pub mt_position: Vec3,
    pub mt_array: ArrayGeometry,
    pub wavelength: f64,
    /// Linear power ratio ξ in (0, 1].
    pub reflection_loss: f64,
    pub tx_power: f64,
    pub noise_power: f64,
    pub nlos_count: usize,
    pub nlos_gap_db: f64,
}

impl Scenario {
    /// Builds a scenario with an explicit MT pose and obstacle set. Transmit
    /// power defaults to 0 dBm.
    pub fn from_parts(
        config: &ScenarioConfig,
        mt_position: Vec3,
        mt_direction: Vec3,
        obstacles: Vec<Cuboid>,
    ) -> Result<Self> {
        config.validate()?;
        let hall = Hall {
            min: config.hall_min.into(),
            max: config.hall_max.into(),
        };
        if !hall.contains(mt_position) {
            return Err(Error::InvalidArgument(format!(
                "MT position {mt_position} outside the hall"
            )));
        }
        let mut anchors = Vec::with_capacity(1 + config.irs_positions.len());
        anchors.push(Anchor {
            kind: AnchorKind::BaseStation,
            index: 1,
            position: config.bs_position.into(),
            array: ArrayGeometry::new(config.bs_antennas, config.bs_direction.into())?,
        });
        for (i, (p, d)) in config
            .irs_positions
            .iter()
            .zip(&config.irs_directions)
            .enumerate()
        {
            anchors.push(Anchor {
                kind: AnchorKind::Irs,
                index: i + 2,
                position: (*p).into(),
                array: ArrayGeometry::new(config.irs_elements, (*d).into())?,
            });
        }
        Ok(Self {
            hall,
            anchors,
            obstacles,
            mt_position,
            mt_array: ArrayGeometry::new(config.mt_antennas, mt_direction)?,
            wavelength: config.wavelength(),
            reflection_loss: db_to_linear(-config.reflection_loss_db),
            tx_power: dbm_to_watts(0.0),
            noise_power: dbm_to_watts(config.noise_dbm),
            nlos_count: config.nlos_paths,
            nlos_gap_db: config.nlos_gap_db,
        })
    }

    pub fn with_tx_power_dbm(mut self, dbm: f64) -> Self {
        self.tx_power = dbm_to_watts(dbm);
        self
    }

    pub fn base_station(&self) -> &Anchor {
        &self.anchors[0]
    }

    pub fn irs_count(&self) -> usize {
        self.anchors.len() - 1
    }

    pub fn hall_center(&self) -> Vec3 {
        (self.hall.min + self.hall.max) * 0.5
    }
}

fn uniform_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

/// Draws the MT pose and the other users' bodies.
///
/// The MT sits at its holder's footprint center; holders are upright
/// cuboids standing on the floor, placed by rejection sampling so that no
/// two footprints overlap. The MT's own holder is not an occluder.
pub fn sample_scenario<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Scenario> {
    config.validate()?;
    let [lo_x, lo_y, _] = config.hall_min;
    let [hi_x, hi_y, _] = config.hall_max;
    let size = Vec3::from(config.obstacle_size);
    let half = size * 0.5;
    let floor = config.hall_min[2];

    let mt_z = if config.mt_altitude[0] < config.mt_altitude[1] {
        rng.random_range(config.mt_altitude[0]..config.mt_altitude[1])
    } else {
        config.mt_altitude[0]
    };
    let mt = Vec3::new(rng.random_range(lo_x..hi_x), rng.random_range(lo_y..hi_y), mt_z);
    let mt_direction = uniform_direction(rng);

    let holder = Cuboid::new(Vec3::new(mt.x, mt.y, floor + half.z), half)?;
    let mut placed = vec![holder];
    let others = config.users - 1;
    for _ in 0..others {
        let mut ok = false;
        for _ in 0..config.max_placement_attempts {
            let c = Cuboid::new(
                Vec3::new(rng.random_range(lo_x..hi_x), rng.random_range(lo_y..hi_y), floor + half.z),
                half,
            )?;
            if placed.iter().all(|p| !p.footprint_overlaps(&c)) {
                placed.push(c);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::RejectionBudgetExhausted {
                placed: placed.len() - 1,
                requested: others,
            });
        }
    }
    placed.remove(0);
    Scenario::from_parts(config, mt, mt_direction, placed)
}

/// Blockage indicator per anchor link, `zeta[0]` being the direct link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkState {
    pub zeta: Vec<bool>,
}

impl LinkState {
    pub fn all_clear(links: usize) -> Self {
        Self {
            zeta: vec![true; links],
        }
    }

    pub fn blocked_count(&self) -> usize {
        self.zeta.iter().filter(|z| !**z).count()
    }
}

fn segment_clear(a: Vec3, b: Vec3, obstacles: &[Cuboid]) -> bool {
    obstacles.iter().all(|o| !segment_intersects_box(a, b, o))
}

pub fn compute_blockage(scenario: &Scenario) -> LinkState {
    let bs = scenario.base_station().position;
    let mt = scenario.mt_position;
    let obs = &scenario.obstacles;
    let zeta = scenario
        .anchors
        .iter()
        .map(|a| match a.kind {
            AnchorKind::BaseStation => segment_clear(bs, mt, obs),
            AnchorKind::Irs => segment_clear(bs, a.position, obs) && segment_clear(a.position, mt, obs),
        })
        .collect();
    LinkState { zeta }
}

/// Free-space direct-path gain `λ e^{-j2πd/λ} / (4πd)`.
pub fn los_gain(distance: f64, wavelength: f64) -> Result<Complex64> {
    if !(distance > 0.0) || !(wavelength > 0.0) {
        return Err(Error::InvalidArgument(
            "distance and wavelength must be positive".into(),
        ));
    }
    Ok(Complex64::from_polar(
        wavelength / (4.0 * PI * distance),
        -2.0 * PI * distance / wavelength,
    ))
}

/// Reflected-path gain over total length `d_br + d_rm` with power loss ξ.
pub fn vlos_gain(d_br: f64, d_rm: f64, reflection_loss: f64, wavelength: f64) -> Result<Complex64> {
    if !(d_br > 0.0) || d_rm < 0.0 || !(wavelength > 0.0) {
        return Err(Error::InvalidArgument("distances must be positive".into()));
    }
    if !(reflection_loss > 0.0 && reflection_loss <= 1.0) {
        return Err(Error::InvalidArgument("reflection loss must be in (0, 1]".into()));
    }
    Ok(los_gain(d_br + d_rm, wavelength)? * reflection_loss.sqrt())
}

/// Cascade gain `δ̄ · a_R^H(φ_RM ⊖ θ_BR) · g` of an IRS with reflection vector `g`.
pub fn effective_irs_gain(
    reflection: &[Complex64],
    n_elements: usize,
    phi_rm: CosAngle,
    theta_br: CosAngle,
    base_gain: Complex64,
) -> Result<Complex64> {
    if reflection.len() != n_elements {
        return Err(Error::DimensionMismatch {
            what: "reflection vector",
            expected: n_elements,
            got: reflection.len(),
        });
    }
    let a = steering_vector(n_elements, cos_sub(phi_rm, theta_br));
    let ip: Complex64 = a.iter().zip(reflection).map(|(x, g)| x.conj() * g).sum();
    Ok(base_gain * ip)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlosPath {
    pub gain: Complex64,
    pub theta: CosAngle,
    pub phi: CosAngle,
}

/// Scattered paths with `CN(0, |δ₁|² 10^{-gap/10})` gains and angles whose
/// physical value is uniform on `[0, 2π)`.
pub fn sample_nlos<R: Rng + ?Sized>(
    count: usize,
    los_magnitude: f64,
    gap_db: f64,
    rng: &mut R,
) -> Vec<NlosPath> {
    let variance = los_magnitude * los_magnitude * db_to_linear(-gap_db);
    (0..count)
        .map(|_| {
            let gain = complex_gaussian(rng, variance);
            let aoa = rng.random_range(0.0..2.0 * PI);
            let aod = rng.random_range(0.0..2.0 * PI);
            NlosPath {
                gain,
                theta: CosAngle::from_cosine(aoa.cos()),
                phi: CosAngle::from_cosine(aod.cos()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub zeta: bool,
    pub gain: Complex64,
    pub theta: CosAngle,
    pub phi: CosAngle,
}

/// One IRS cascade. `path.phi` is the equivalent departure cosine
/// `φ_RM ⊖ θ_BR`; `path.gain` is `δ̄` (reflection vector not applied).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlosLink {
    pub anchor_index: usize,
    pub path: PathParams,
    pub theta_br: CosAngle,
    pub phi_br: CosAngle,
    pub theta_rm: CosAngle,
    pub phi_rm: CosAngle,
    pub d_br: f64,
    pub d_rm: f64,
    pub n_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub n_bs: usize,
    pub n_mt: usize,
    pub los: PathParams,
    pub d_bm: f64,
    pub vlos: Vec<VlosLink>,
    pub nlos: Vec<NlosPath>,
}

impl ChannelRealization {
    /// Path parameters of anchor link `η` (1-based).
    pub fn link(&self, eta: usize) -> Option<PathParams> {
        match eta {
            0 => None,
            1 => Some(self.los),
            _ => self.vlos.get(eta - 2).map(|v| v.path),
        }
    }
}

/// Geometric path parameters for every anchor link plus sampled NLoS paths.
pub fn realize_channel<R: Rng + ?Sized>(
    scenario: &Scenario,
    links: &LinkState,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if links.zeta.len() != scenario.anchors.len() {
        return Err(Error::DimensionMismatch {
            what: "link state",
            expected: scenario.anchors.len(),
            got: links.zeta.len(),
        });
    }
    let bs = scenario.base_station();
    let mt = scenario.mt_position;
    let e_mt = scenario.mt_array.direction;
    let lambda = scenario.wavelength;

    let d_bm = mt.distance(bs.position);
    let los = PathParams {
        zeta: links.zeta[0],
        gain: los_gain(d_bm, lambda)?,
        theta: cosine_of_direction(mt, bs.position, e_mt)?,
        phi: cosine_of_direction(mt, bs.position, bs.array.direction)?,
    };

    let mut vlos = Vec::with_capacity(scenario.irs_count());
    for irs in &scenario.anchors[1..] {
        let theta_br = cosine_of_direction(irs.position, bs.position, irs.array.direction)?;
        let phi_br = cosine_of_direction(irs.position, bs.position, bs.array.direction)?;
        let theta_rm = cosine_of_direction(mt, irs.position, e_mt)?;
        let phi_rm = cosine_of_direction(mt, irs.position, irs.array.direction)?;
        let d_br = irs.position.distance(bs.position);
        let d_rm = mt.distance(irs.position);
        vlos.push(VlosLink {
            anchor_index: irs.index,
            path: PathParams {
                zeta: links.zeta[irs.index - 1],
                gain: vlos_gain(d_br, d_rm, scenario.reflection_loss, lambda)?,
                theta: theta_rm,
                phi: cos_sub(phi_rm, theta_br),
            },
            theta_br,
            phi_br,
            theta_rm,
            phi_rm,
            d_br,
            d_rm,
            n_elements: irs.array.size,
        });
    }

    let nlos = sample_nlos(scenario.nlos_count, los.gain.norm(), scenario.nlos_gap_db, rng);
    Ok(ChannelRealization {
        n_bs: bs.array.size,
        n_mt: scenario.mt_array.size,
        los,
        d_bm,
        vlos,
        nlos,
    })
}

fn rank_one(n_rx: usize, n_tx: usize, gain: Complex64, theta: f64, phi: f64) -> DMatrix<Complex64> {
    let ar = steering_vector(n_rx, theta);
    let at = steering_vector(n_tx, phi);
    DMatrix::from_fn(n_rx, n_tx, |i, j| gain * ar[i] * at[j].conj())
}

/// Dense `N_M × N_B` channel: LoS + NLoS + every activated IRS cascade.
///
/// `reflection[i]` is the reflection vector of the i-th IRS, `None` when
/// that IRS is deactivated.
pub fn assemble_channel(
    realization: &ChannelRealization,
    reflection: &[Option<&[Complex64]>],
) -> Result<DMatrix<Complex64>> {
    if reflection.len() != realization.vlos.len() {
        return Err(Error::DimensionMismatch {
            what: "reflection vector list",
            expected: realization.vlos.len(),
            got: reflection.len(),
        });
    }
    let (nm, nb) = (realization.n_mt, realization.n_bs);
    let mut h = DMatrix::zeros(nm, nb);
    let los = &realization.los;
    if los.zeta {
        h += rank_one(nm, nb, los.gain, los.theta.value(), los.phi.value());
    }
    for p in &realization.nlos {
        h += rank_one(nm, nb, p.gain, p.theta.value(), p.phi.value());
    }
    for (v, g) in realization.vlos.iter().zip(reflection) {
        let Some(g) = g else { continue };
        if !v.path.zeta {
            continue;
        }
        let eff = effective_irs_gain(g, v.n_elements, v.phi_rm, v.theta_br, v.path.gain)?;
        h += rank_one(nm, nb, eff, v.theta_rm.value(), v.phi_br.value());
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn fixed_scenario(obstacles: Vec<Cuboid>) -> Scenario {
        Scenario::from_parts(
            &ScenarioConfig::default(),
            Vec3::new(2.0, -3.0, 1.3),
            Vec3::new(0.3, 0.9, 0.1),
            obstacles,
        )
        .unwrap()
    }

    #[test]
    fn zero_users_means_no_obstacles_and_clear_links() {
        let cfg = ScenarioConfig {
            users: 1,
            ..Default::default()
        };
        let s = sample_scenario(&cfg, &mut stream(4, Stream::Scenario)).unwrap();
        assert!(s.obstacles.is_empty());
        assert_eq!(compute_blockage(&s), LinkState::all_clear(13));
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let a = sample_scenario(&cfg, &mut stream(77, Stream::Scenario)).unwrap();
        let b = sample_scenario(&cfg, &mut stream(77, Stream::Scenario)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.obstacles.len(), 99);
        for (i, o) in a.obstacles.iter().enumerate() {
            for p in &a.obstacles[i + 1..] {
                assert!(!o.footprint_overlaps(p));
            }
            assert!((o.center.z - 0.85).abs() < 1e-12);
        }
        assert!((1.2..1.4).contains(&a.mt_position.z));
    }

    #[test]
    fn overcrowded_hall_exhausts_budget() {
        let cfg = ScenarioConfig {
            users: 5000,
            max_placement_attempts: 50,
            ..Default::default()
        };
        let err = sample_scenario(&cfg, &mut stream(1, Stream::Scenario)).unwrap_err();
        assert!(matches!(err, Error::RejectionBudgetExhausted { .. }));
    }

    #[test]
    fn obstacle_on_direct_path_blocks_it() {
        let s = fixed_scenario(vec![]);
        let mid = (s.mt_position + s.base_station().position) * 0.5;
        let blocker = Cuboid::new(mid, Vec3::new(0.3, 0.2, 0.85)).unwrap();
        let blocked = compute_blockage(&fixed_scenario(vec![blocker]));
        assert!(!blocked.zeta[0]);
        assert_eq!(compute_blockage(&s), LinkState::all_clear(13));
    }

    #[test]
    fn blockage_is_monotone_in_obstacles() {
        let cfg = ScenarioConfig::default();
        for seed in 0..30 {
            let s = sample_scenario(&cfg, &mut stream(seed, Stream::Scenario)).unwrap();
            let full = compute_blockage(&s);
            let mut fewer = s.clone();
            fewer.obstacles.truncate(40);
            let partial = compute_blockage(&fewer);
            for (f, p) in full.zeta.iter().zip(&partial.zeta) {
                // removing obstacles never blocks a link
                assert!(!(*p == false && *f == true));
            }
        }
    }

    #[test]
    fn los_gain_examples() {
        let lambda = 0.010707;
        let g = los_gain(10.0, lambda).unwrap();
        assert!((g.norm() - lambda / (40.0 * PI)).abs() < 1e-15);
        assert!((g.norm() - 8.52e-5).abs() < 1e-7);
        assert!((los_gain(20.0, lambda).unwrap().norm() * 2.0 - g.norm()).abs() < 1e-18);
        let g2 = los_gain(10.0 + lambda, lambda).unwrap();
        let dphase = (g / g2).arg();
        assert!(dphase.abs() < 1e-6);
        assert!(los_gain(0.0, lambda).is_err());
    }

    #[test]
    fn vlos_gain_examples() {
        let lambda = 0.010707;
        let xi = 10f64.powf(-1.3);
        let g = vlos_gain(5.0, 5.0, xi, lambda).unwrap();
        let expected = 10f64.powf(-0.65) * lambda / (40.0 * PI);
        assert!((g.norm() - expected).abs() < 1e-15);
        let degenerate = vlos_gain(7.0, 0.0, 1.0, lambda).unwrap();
        assert!((degenerate - los_gain(7.0, lambda).unwrap()).norm() < 1e-18);
        let doubled = vlos_gain(10.0, 10.0, xi, lambda).unwrap();
        assert!((doubled.norm() * 2.0 - g.norm()).abs() < 1e-18);
        assert!(vlos_gain(-1.0, 2.0, xi, lambda).is_err());
        assert!(vlos_gain(1.0, 2.0, 0.0, lambda).is_err());
    }

    #[test]
    fn optimal_reflection_hits_cauchy_schwarz_bound() {
        let base = Complex64::new(3e-6, -1e-6);
        let (phi_rm, theta_br) = (CosAngle::wrap(0.31), CosAngle::wrap(-0.72));
        let n = 16;
        let g = steering_vector(n, cos_sub(phi_rm, theta_br));
        let eff = effective_irs_gain(&g, n, phi_rm, theta_br, base).unwrap();
        let bound = base.norm() * n as f64;
        assert!((eff.norm() - bound).abs() / bound < 1e-12);

        // orthogonal reflection (next DFT null)
        let null = steering_vector(n, cos_sub(phi_rm, theta_br).value() + 2.0 / n as f64);
        let eff = effective_irs_gain(&null, n, phi_rm, theta_br, base).unwrap();
        assert!(eff.norm() < 1e-12 * bound);

        let mut rng = stream(2, Stream::Analysis);
        for _ in 0..100 {
            let g: Vec<Complex64> = (0..n)
                .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
                .collect();
            let eff = effective_irs_gain(&g, n, phi_rm, theta_br, base).unwrap();
            assert!(eff.norm() <= bound * (1.0 + 1e-12));
        }
        assert!(effective_irs_gain(&g[..4], n, phi_rm, theta_br, base).is_err());
    }

    #[test]
    fn nlos_samples() {
        let mut rng = stream(8, Stream::Nlos);
        assert!(sample_nlos(0, 1.0, 20.0, &mut rng).is_empty());
        let paths = sample_nlos(100_000, 2.0, 20.0, &mut rng);
        let var = paths.iter().map(|p| p.gain.norm_sqr()).sum::<f64>() / paths.len() as f64;
        assert!((var - 0.04).abs() / 0.04 < 0.02, "var {var}");
        assert!(paths
            .iter()
            .all(|p| (-1.0..1.0).contains(&p.theta.value()) && (-1.0..1.0).contains(&p.phi.value())));
    }

    fn frob(h: &DMatrix<Complex64>) -> f64 {
        h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn assembled_channel_cases() {
        let s = fixed_scenario(vec![]);
        let mut rng = stream(3, Stream::Nlos);
        let mut r = realize_channel(&s, &LinkState::all_clear(13), &mut rng).unwrap();
        r.nlos.clear();
        let off = vec![None; 12];
        let h = assemble_channel(&r, &off).unwrap();
        let expected = rank_one(16, 16, r.los.gain, r.los.theta.value(), r.los.phi.value());
        assert!(frob(&(&h - &expected)) < 1e-20);
        assert!((frob(&h) - r.los.gain.norm() * 16.0).abs() < 1e-10 * frob(&h));
        let svd = h.clone().svd(false, false);
        assert!(svd.singular_values[1] < 1e-12 * svd.singular_values[0]);

        r.los.zeta = false;
        assert!(frob(&assemble_channel(&r, &off).unwrap()) == 0.0);

        let v = r.vlos[4];
        let g = steering_vector(v.n_elements, v.path.phi);
        let mut refl: Vec<Option<&[Complex64]>> = vec![None; 12];
        refl[4] = Some(&g);
        let h = assemble_channel(&r, &refl).unwrap();
        let expected = v.path.gain.norm() * 16.0 * (16.0f64 * 16.0).sqrt();
        assert!((frob(&h) - expected).abs() / expected < 1e-10);
        assert!(assemble_channel(&r, &refl[..3]).is_err());
    }

    #[test]
    fn path_terms_have_expected_frobenius_norm() {
        let mut rng = stream(12, Stream::Analysis);
        for _ in 0..50 {
            let gain = complex_gaussian(&mut rng, 1.0);
            let (nr, nt) = (rng.random_range(1..20), rng.random_range(1..20));
            let m = rank_one(nr, nt, gain, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let expected = gain.norm() * ((nr * nt) as f64).sqrt();
            assert!((frob(&m) - expected).abs() < 1e-10 * expected.max(1.0));
        }
    }

    #[test]
    fn irs_priors_match_geometry() {
        let s = fixed_scenario(vec![]);
        let r = realize_channel(&s, &LinkState::all_clear(13), &mut stream(1, Stream::Nlos)).unwrap();
        let bs = s.base_station();
        for (v, a) in r.vlos.iter().zip(&s.anchors[1..]) {
            let d = (a.position - bs.position).normalized().unwrap();
            assert!((v.theta_br.value() - d.dot(a.array.direction)).abs() < 1e-12);
            assert!((v.phi_br.value() - d.dot(bs.array.direction)).abs() < 1e-12);
            assert_eq!(v.path.phi, cos_sub(v.phi_rm, v.theta_br));
        }
    }
}
