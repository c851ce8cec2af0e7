//! Random-beamforming codebooks, sensing matrices and measurement synthesis.
//!
//! A measurement slot `n` pairs a transmit-side vector `t_n` (BS beam in
//! step 1, IRS reflection in step 2) with a receive combiner `m_n`. The
//! sensing matrix row is `t_n ⊗ m_n*`, so for a single path
//! `(D b(θ,φ))_n = (a_tx^H(φ) t_n)(m_n^H a_rx(θ))`. Projections use this
//! factored form; [`SensingMatrix::to_dense`] exists for oracles.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::geometry::steering_vector;
use crate::rng::complex_gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Transmit,
    Receive,
    Reflect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamCodebook {
    pub side: Side,
    pub vectors: Vec<Vec<Complex64>>,
}

impl BeamCodebook {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// First `n` vectors (nested codebooks).
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            side: self.side,
            vectors: self.vectors[..n.min(self.vectors.len())].to_vec(),
        }
    }
}

/// `len` vectors of `n` i.i.d. uniform phases; transmit and receive entries
/// have modulus `1/√n`, reflect entries are unit-modulus.
pub fn random_codebook<R: Rng + ?Sized>(side: Side, n: usize, len: usize, rng: &mut R) -> Result<BeamCodebook> {
    if n == 0 || len == 0 {
        return Err(Error::InvalidArgument("codebook dimensions must be positive".into()));
    }
    let amp = match side {
        Side::Reflect => 1.0,
        Side::Transmit | Side::Receive => 1.0 / (n as f64).sqrt(),
    };
    let vectors = (0..len)
        .map(|_| {
            (0..n)
                .map(|_| Complex64::from_polar(amp, rng.random_range(0.0..2.0 * PI)))
                .collect()
        })
        .collect();
    Ok(BeamCodebook { side, vectors })
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn ramp(v: &[Complex64]) -> Vec<Complex64> {
    v.iter()
        .enumerate()
        .map(|(k, x)| x * Complex64::new(0.0, PI * k as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingMatrix {
    tx: Vec<Vec<Complex64>>,
    rx: Vec<Vec<Complex64>>,
    n_tx: usize,
    n_rx: usize,
}

/// `s = D b(θ,φ)` together with its partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub s: Vec<Complex64>,
    pub ds_theta: Vec<Complex64>,
    pub ds_phi: Vec<Complex64>,
}

impl SensingMatrix {
    pub fn new(tx: Vec<Vec<Complex64>>, rx: Vec<Vec<Complex64>>) -> Result<Self> {
        if tx.is_empty() {
            return Err(Error::InvalidArgument("sensing matrix needs at least one row".into()));
        }
        if tx.len() != rx.len() {
            return Err(Error::DimensionMismatch {
                what: "receive combiners",
                expected: tx.len(),
                got: rx.len(),
            });
        }
        let n_tx = tx[0].len();
        let n_rx = rx[0].len();
        if n_tx == 0 || n_rx == 0 {
            return Err(Error::InvalidArgument("empty beam vector".into()));
        }
        if let Some(bad) = tx.iter().find(|v| v.len() != n_tx) {
            return Err(Error::DimensionMismatch { what: "transmit vector", expected: n_tx, got: bad.len() });
        }
        if let Some(bad) = rx.iter().find(|v| v.len() != n_rx) {
            return Err(Error::DimensionMismatch { what: "receive vector", expected: n_rx, got: bad.len() });
        }
        Ok(Self { tx, rx, n_tx, n_rx })
    }

    pub fn from_codebooks(tx: &BeamCodebook, rx: &BeamCodebook) -> Result<Self> {
        Self::new(tx.vectors.clone(), rx.vectors.clone())
    }

    pub fn rows(&self) -> usize {
        self.tx.len()
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn tx_row(&self, n: usize) -> &[Complex64] {
        &self.tx[n]
    }

    pub fn rx_row(&self, n: usize) -> &[Complex64] {
        &self.rx[n]
    }

    /// First `rows` slots.
    pub fn truncated(&self, rows: usize) -> Result<Self> {
        let rows = rows.min(self.rows());
        Self::new(self.tx[..rows].to_vec(), self.rx[..rows].to_vec())
    }

    /// Exchanges the transmit and receive roles.
    ///
    /// With `y' = conj(y)` the objective of the swapped problem at `(φ, θ)`
    /// equals the original at `(θ, φ)`.
    pub fn swapped(&self) -> Self {
        Self {
            tx: self.rx.clone(),
            rx: self.tx.clone(),
            n_tx: self.n_rx,
            n_rx: self.n_tx,
        }
    }

    /// Per-slot factors `(a_tx^H(φ) t_n, m_n^H a_rx(θ))`.
    pub fn factors(&self, theta: f64, phi: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let at = steering_vector(self.n_tx, phi);
        let ar = steering_vector(self.n_rx, theta);
        let t = self.tx.iter().map(|f| inner(&at, f)).collect();
        let r = self.rx.iter().map(|m| inner(m, &ar)).collect();
        (t, r)
    }

    pub fn project(&self, theta: f64, phi: f64) -> Vec<Complex64> {
        let (t, r) = self.factors(theta, phi);
        t.iter().zip(&r).map(|(a, b)| a * b).collect()
    }

    pub fn project_with_derivatives(&self, theta: f64, phi: f64) -> Projection {
        let at = steering_vector(self.n_tx, phi);
        let ar = steering_vector(self.n_rx, theta);
        let dat = ramp(&at);
        let dar = ramp(&ar);
        let mut s = Vec::with_capacity(self.rows());
        let mut ds_theta = Vec::with_capacity(self.rows());
        let mut ds_phi = Vec::with_capacity(self.rows());
        for (f, m) in self.tx.iter().zip(&self.rx) {
            let t = inner(&at, f);
            let r = inner(m, &ar);
            s.push(t * r);
            ds_theta.push(t * inner(m, &dar));
            ds_phi.push(inner(&dat, f) * r);
        }
        Projection { s, ds_theta, ds_phi }
    }

    /// Dense `N × (n_tx n_rx)` matrix with rows `t_n ⊗ m_n*`.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let w = self.n_tx * self.n_rx;
        DMatrix::from_fn(self.rows(), w, |n, c| {
            let (i, j) = (c / self.n_rx, c % self.n_rx);
            self.tx[n][i] * self.rx[n][j].conj()
        })
    }
}

/// `vec(a_rx(θ) a_tx^H(φ))` in column-major order.
pub fn kron_steering(theta: f64, phi: f64, n_rx: usize, n_tx: usize) -> Vec<Complex64> {
    let ar = steering_vector(n_rx, theta);
    let at = steering_vector(n_tx, phi);
    let mut b = Vec::with_capacity(n_rx * n_tx);
    for t in &at {
        for r in &ar {
            b.push(r * t.conj());
        }
    }
    b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundingSession {
    /// Anchor index η (1 = base station).
    pub link: usize,
    pub sensing: SensingMatrix,
    pub y: Vec<Complex64>,
    /// `√P_Tx` for the direct link, `√(P_Tx N_B)` for IRS links.
    pub gain_scale: f64,
    pub noise_variance: f64,
}

impl SoundingSession {
    pub fn new(link: usize, sensing: SensingMatrix, y: Vec<Complex64>, gain_scale: f64, noise_variance: f64) -> Result<Self> {
        if y.len() != sensing.rows() {
            return Err(Error::DimensionMismatch {
                what: "measurement vector",
                expected: sensing.rows(),
                got: y.len(),
            });
        }
        if !(gain_scale > 0.0) {
            return Err(Error::InvalidArgument("gain scale must be positive".into()));
        }
        Ok(Self { link, sensing, y, gain_scale, noise_variance })
    }

    /// Session restricted to its first `rows` slots.
    pub fn truncated(&self, rows: usize) -> Result<Self> {
        let sensing = self.sensing.truncated(rows)?;
        let y = self.y[..sensing.rows()].to_vec();
        Self::new(self.link, sensing, y, self.gain_scale, self.noise_variance)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# irsbt-session v1")?;
        writeln!(w, "link,gain_scale,noise_variance,n_tx,n_rx,rows")?;
        writeln!(
            w,
            "{},{:e},{:e},{},{},{}",
            self.link,
            self.gain_scale,
            self.noise_variance,
            self.sensing.n_tx(),
            self.sensing.n_rx(),
            self.sensing.rows()
        )?;
        for n in 0..self.sensing.rows() {
            let mut line = String::new();
            let mut push = |c: &Complex64| {
                if !line.is_empty() {
                    line.push(',');
                }
                let _ = write!(line, "{:e},{:e}", c.re, c.im);
            };
            push(&self.y[n]);
            self.sensing.tx_row(n).iter().for_each(&mut push);
            self.sensing.rx_row(n).iter().for_each(&mut push);
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let perr = |m: String| Error::Parse(m);
        let mut lines = r
            .lines()
            .filter(|l| l.as_ref().map(|s| !s.starts_with('#') && !s.trim().is_empty()).unwrap_or(true));
        let _header = lines.next().ok_or_else(|| perr("missing header".into()))??;
        let meta = lines.next().ok_or_else(|| perr("missing metadata".into()))??;
        let f: Vec<&str> = meta.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(perr(format!("metadata has {} fields, expected 6", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| perr(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| perr(format!("{s:?}: {e}")));
        let (link, gain_scale, noise_variance) = (int(f[0])?, num(f[1])?, num(f[2])?);
        let (n_tx, n_rx, rows) = (int(f[3])?, int(f[4])?, int(f[5])?);
        let mut y = Vec::with_capacity(rows);
        let mut tx = Vec::with_capacity(rows);
        let mut rx = Vec::with_capacity(rows);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| perr("truncated session".into()))??;
            let vals = line.split(',').map(|s| num(s.trim())).collect::<Result<Vec<f64>>>()?;
            if vals.len() != 2 * (1 + n_tx + n_rx) {
                return Err(perr(format!("row has {} values", vals.len())));
            }
            let c: Vec<Complex64> = vals.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
            y.push(c[0]);
            tx.push(c[1..1 + n_tx].to_vec());
            rx.push(c[1 + n_tx..].to_vec());
        }
        Self::new(link, SensingMatrix::new(tx, rx)?, y, gain_scale, noise_variance)
    }
}

/// Noisy samples of `ζ δ D b(θ,φ) + n` with white `CN(0, σ²)` noise.
pub fn synth_unified<R: Rng + ?Sized>(
    zeta: bool,
    delta: Complex64,
    theta: f64,
    phi: f64,
    sensing: &SensingMatrix,
    noise_variance: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let s = if zeta { sensing.project(theta, phi) } else { vec![Complex64::new(0.0, 0.0); sensing.rows()] };
    s.into_iter()
        .map(|v| delta * v + complex_gaussian(rng, noise_variance))
        .collect()
}

fn add_noise<R: Rng + ?Sized>(y: &mut [Complex64], noise_variance: f64, rng: &mut R) {
    if noise_variance > 0.0 {
        for v in y {
            *v += complex_gaussian(rng, noise_variance);
        }
    }
}

/// Direct-link sounding with every IRS switched off.
pub fn sound_step1<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    tx_power: f64,
    transmit: &BeamCodebook,
    receive: &BeamCodebook,
    noise_variance: f64,
    rng: &mut R,
) -> Result<SoundingSession> {
    check_dims(transmit, realization.n_bs, "transmit codebook")?;
    check_dims(receive, realization.n_mt, "receive codebook")?;
    let sensing = SensingMatrix::from_codebooks(transmit, receive)?;
    let scale = tx_power.sqrt();
    let mut y = vec![Complex64::new(0.0, 0.0); sensing.rows()];
    let mut add = |gain: Complex64, theta: f64, phi: f64| {
        for (v, s) in y.iter_mut().zip(sensing.project(theta, phi)) {
            *v += scale * gain * s;
        }
    };
    let los = &realization.los;
    if los.zeta {
        add(los.gain, los.theta.value(), los.phi.value());
    }
    for p in &realization.nlos {
        add(p.gain, p.theta.value(), p.phi.value());
    }
    add_noise(&mut y, noise_variance, rng);
    SoundingSession::new(1, sensing, y, scale, noise_variance)
}

/// Sounding of IRS link `eta ≥ 2` with the BS beam locked on that IRS and
/// every other IRS switched off. Direct and scattered paths leak through
/// the fixed BS beam and are included exactly.
pub fn sound_step2<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    eta: usize,
    tx_power: f64,
    reflect: &BeamCodebook,
    receive: &BeamCodebook,
    noise_variance: f64,
    rng: &mut R,
) -> Result<SoundingSession> {
    let link = eta
        .checked_sub(2)
        .and_then(|i| realization.vlos.get(i))
        .ok_or(Error::UnknownIrs(eta))?;
    check_dims(reflect, link.n_elements, "reflect codebook")?;
    check_dims(receive, realization.n_mt, "receive codebook")?;
    let sensing = SensingMatrix::from_codebooks(reflect, receive)?;
    let nb = realization.n_bs;
    let p_sqrt = tx_power.sqrt();

    // BS beam toward the IRS
    let f: Vec<Complex64> = steering_vector(nb, link.phi_br)
        .into_iter()
        .map(|x| x / (nb as f64).sqrt())
        .collect();
    let rx_gain = |theta: f64| -> Vec<Complex64> {
        let ar = steering_vector(realization.n_mt, theta);
        sensing.rx.iter().map(|m| inner(m, &ar)).collect()
    };
    let tx_gain = |phi: f64| inner(&steering_vector(nb, phi), &f);

    let mut y = vec![Complex64::new(0.0, 0.0); sensing.rows()];
    let mut leak = |gain: Complex64, theta: f64, phi: f64| {
        let t = tx_gain(phi);
        for (v, r) in y.iter_mut().zip(rx_gain(theta)) {
            *v += p_sqrt * gain * t * r;
        }
    };
    let los = &realization.los;
    if los.zeta {
        leak(los.gain, los.theta.value(), los.phi.value());
    }
    for p in &realization.nlos {
        leak(p.gain, p.theta.value(), p.phi.value());
    }
    if link.path.zeta {
        let t = tx_gain(link.phi_br.value());
        let s = sensing.project(link.path.theta.value(), link.path.phi.value());
        for (v, s) in y.iter_mut().zip(s) {
            *v += p_sqrt * link.path.gain * t * s;
        }
    }
    add_noise(&mut y, noise_variance, rng);
    SoundingSession::new(eta, sensing, y, (tx_power * nb as f64).sqrt(), noise_variance)
}

fn check_dims(cb: &BeamCodebook, n: usize, what: &'static str) -> Result<()> {
    match cb.vectors.iter().find(|v| v.len() != n) {
        Some(v) => Err(Error::DimensionMismatch { what, expected: n, got: v.len() }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{assemble_channel, realize_channel, LinkState, Scenario, ScenarioConfig};
    use crate::geometry::Vec3;
    use crate::rng::{stream, Stream};
    use nalgebra::DVector;

    fn codebooks(seed: u64, n_tx: usize, n_rx: usize, len: usize, reflect: bool) -> (BeamCodebook, BeamCodebook) {
        let mut rng = stream(seed, Stream::Codebook);
        let side = if reflect { Side::Reflect } else { Side::Transmit };
        (
            random_codebook(side, n_tx, len, &mut rng).unwrap(),
            random_codebook(Side::Receive, n_rx, len, &mut rng).unwrap(),
        )
    }

    fn realization(seed: u64) -> ChannelRealization {
        let s = Scenario::from_parts(
            &ScenarioConfig::default(),
            Vec3::new(-3.0, 4.0, 1.3),
            Vec3::new(0.2, -0.5, 0.8),
            vec![],
        )
        .unwrap();
        realize_channel(&s, &LinkState::all_clear(13), &mut stream(seed, Stream::Nlos)).unwrap()
    }

    #[test]
    fn codebook_amplitudes_and_determinism() {
        let (f, m) = codebooks(1, 16, 8, 20, false);
        assert!(f.vectors.iter().flatten().all(|x| (x.norm() - 0.25).abs() < 1e-12));
        assert!(m.vectors.iter().flatten().all(|x| (x.norm() - 8f64.sqrt().recip()).abs() < 1e-12));
        let (g, _) = codebooks(1, 16, 8, 20, true);
        assert!(g.vectors.iter().flatten().all(|x| (x.norm() - 1.0).abs() < 1e-12));
        assert_eq!(codebooks(1, 16, 8, 20, false), (f, m));
        assert!(random_codebook(Side::Transmit, 0, 3, &mut stream(0, Stream::Codebook)).is_err());
    }

    #[test]
    fn random_beam_gain_is_one_on_average() {
        let mut rng = stream(5, Stream::Codebook);
        let cb = random_codebook(Side::Transmit, 16, 10_000, &mut rng).unwrap();
        let a = steering_vector(16, 0.37);
        let mean = cb.vectors.iter().map(|f| inner(f, &a).norm_sqr()).sum::<f64>() / 1e4;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn kron_steering_examples() {
        let b = kron_steering(0.0, 0.0, 4, 3);
        assert!(b.iter().all(|x| (x - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let b = kron_steering(0.3, -0.8, 16, 8);
        assert!((b.iter().map(|x| x.norm_sqr()).sum::<f64>() - 128.0).abs() < 1e-9);

        let (f, m) = codebooks(2, 8, 16, 30, false);
        let d = SensingMatrix::from_codebooks(&f, &m).unwrap();
        let dense = d.to_dense();
        let mut rng = stream(3, Stream::Analysis);
        for _ in 0..20 {
            let (th, ph) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let b = DVector::from_vec(kron_steering(th, ph, 16, 8));
            let direct = &dense * b;
            let factored = d.project(th, ph);
            for (x, y) in direct.iter().zip(&factored) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn step1_rows_have_unit_norm() {
        let (f, m) = codebooks(4, 16, 16, 16, false);
        let dense = SensingMatrix::from_codebooks(&f, &m).unwrap().to_dense();
        for r in dense.row_iter() {
            assert!((r.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (f, m) = codebooks(6, 16, 16, 16, false);
        let d = SensingMatrix::from_codebooks(&f, &m).unwrap();
        let (th, ph, h) = (0.21, -0.44, 1e-6);
        let p = d.project_with_derivatives(th, ph);
        let up = d.project(th + h, ph);
        let dn = d.project(th - h, ph);
        for n in 0..16 {
            let fd = (up[n] - dn[n]) / (2.0 * h);
            assert!((fd - p.ds_theta[n]).norm() < 1e-6 * (1.0 + fd.norm()));
        }
        let up = d.project(th, ph + h);
        let dn = d.project(th, ph - h);
        for n in 0..16 {
            let fd = (up[n] - dn[n]) / (2.0 * h);
            assert!((fd - p.ds_phi[n]).norm() < 1e-6 * (1.0 + fd.norm()));
        }
    }

    fn oracle_step1(r: &ChannelRealization, p: f64, f: &BeamCodebook, m: &BeamCodebook) -> Vec<Complex64> {
        let h = assemble_channel(r, &vec![None; r.vlos.len()]).unwrap();
        f.vectors
            .iter()
            .zip(&m.vectors)
            .map(|(f, m)| {
                let hf = &h * DVector::from_vec(f.clone());
                p.sqrt() * inner(m, hf.as_slice())
            })
            .collect()
    }

    #[test]
    fn step1_matches_dense_channel() {
        let r = realization(7);
        let (f, m) = codebooks(7, 16, 16, 16, false);
        let s = sound_step1(&r, 0.01, &f, &m, 0.0, &mut stream(7, Stream::Noise)).unwrap();
        let oracle = oracle_step1(&r, 0.01, &f, &m);
        let scale = oracle.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for (a, b) in s.y.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-10 * scale);
        }
        assert!((s.gain_scale - 0.1).abs() < 1e-15);
    }

    #[test]
    fn step1_single_path_is_unified_model() {
        let mut r = realization(8);
        r.nlos.clear();
        let (f, m) = codebooks(8, 16, 16, 16, false);
        let s = sound_step1(&r, 2.0, &f, &m, 0.0, &mut stream(8, Stream::Noise)).unwrap();
        let expect = s.sensing.project(r.los.theta.value(), r.los.phi.value());
        for (a, b) in s.y.iter().zip(&expect) {
            assert!((a - 2f64.sqrt() * r.los.gain * b).norm() < 1e-12 * r.los.gain.norm());
        }
        r.los.zeta = false;
        let s = sound_step1(&r, 2.0, &f, &m, 0.0, &mut stream(8, Stream::Noise)).unwrap();
        assert!(s.y.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn step2_matches_dense_channel() {
        let r = realization(9);
        let eta = 5;
        let (g, m) = codebooks(9, 16, 16, 16, true);
        let s = sound_step2(&r, eta, 0.02, &g, &m, 0.0, &mut stream(9, Stream::Noise)).unwrap();
        let v = r.vlos[eta - 2];
        let f: Vec<Complex64> = steering_vector(16, v.phi_br).iter().map(|x| x / 4.0).collect();
        for n in 0..16 {
            let mut refl: Vec<Option<&[Complex64]>> = vec![None; 12];
            refl[eta - 2] = Some(&g.vectors[n]);
            let h = assemble_channel(&r, &refl).unwrap();
            let hf = &h * DVector::from_vec(f.clone());
            let oracle = 0.02f64.sqrt() * inner(&m.vectors[n], hf.as_slice());
            assert!((oracle - s.y[n]).norm() < 1e-10 * oracle.norm());
        }
        assert!((s.gain_scale - (0.02f64 * 16.0).sqrt()).abs() < 1e-15);
        assert!(matches!(
            sound_step2(&r, 1, 0.02, &g, &m, 0.0, &mut stream(9, Stream::Noise)),
            Err(Error::UnknownIrs(1))
        ));
        assert!(sound_step2(&r, 14, 0.02, &g, &m, 0.0, &mut stream(9, Stream::Noise)).is_err());
    }

    #[test]
    fn step2_isolated_cascade_is_unified_model() {
        let mut r = realization(10);
        r.nlos.clear();
        r.los.zeta = false;
        let (g, m) = codebooks(10, 16, 16, 16, true);
        let s = sound_step2(&r, 3, 1.0, &g, &m, 0.0, &mut stream(1, Stream::Noise)).unwrap();
        let v = r.vlos[1];
        let expect = s.sensing.project(v.path.theta.value(), v.path.phi.value());
        for (a, b) in s.y.iter().zip(&expect) {
            assert!((a - 4.0 * v.path.gain * b).norm() < 1e-12 * v.path.gain.norm() * 16.0);
        }
    }

    #[test]
    fn noise_is_white_with_given_variance() {
        let (f, m) = codebooks(11, 16, 16, 4, false);
        let d = SensingMatrix::from_codebooks(&f, &m).unwrap();
        let mut rng = stream(11, Stream::Noise);
        let draws = 100_000;
        let mut cov = [[Complex64::new(0.0, 0.0); 4]; 4];
        for _ in 0..draws {
            let y = synth_unified(false, Complex64::new(1.0, 0.0), 0.0, 0.0, &d, 3.0, &mut rng);
            for i in 0..4 {
                for j in 0..4 {
                    cov[i][j] += y[i] * y[j].conj();
                }
            }
        }
        // std of a sample covariance entry is σ²/√draws
        let tol = 3.0 * 3.0 / (draws as f64).sqrt() * 2f64.sqrt();
        for i in 0..4 {
            for j in 0..4 {
                let c = cov[i][j] / draws as f64;
                let target = if i == j { 3.0 } else { 0.0 };
                assert!((c - target).norm() < tol, "{i}{j} {c}");
            }
        }
    }

    #[test]
    fn synth_snr_matches_expectation() {
        let (f, m) = codebooks(12, 16, 16, 16, false);
        let d = SensingMatrix::from_codebooks(&f, &m).unwrap();
        let delta = Complex64::new(0.3, 0.4);
        let (th, ph) = (0.1, -0.2);
        let sig: f64 = d.project(th, ph).iter().map(|x| x.norm_sqr()).sum::<f64>() * delta.norm_sqr();
        let clean = synth_unified(true, delta, th, ph, &d, 0.0, &mut stream(0, Stream::Noise));
        assert!((clean.iter().map(|x| x.norm_sqr()).sum::<f64>() - sig).abs() < 1e-12 * sig);

        let sigma2 = sig / 16.0 / 4.0;
        let mut rng = stream(12, Stream::Noise);
        let mut noise_power = 0.0;
        for _ in 0..1000 {
            let y = synth_unified(true, delta, th, ph, &d, sigma2, &mut rng);
            noise_power += y.iter().zip(&clean).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        }
        let snr = sig / (noise_power / 1000.0);
        assert!((snr - 4.0).abs() / 4.0 < 0.05, "{snr}");
    }

    #[test]
    fn csv_round_trip() {
        let r = realization(13);
        let (f, m) = codebooks(13, 16, 16, 16, false);
        let s = sound_step1(&r, 0.5, &f, &m, 1e-9, &mut stream(13, Stream::Noise)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = SoundingSession::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert!(SoundingSession::read_csv("link\n1,2".as_bytes()).is_err());
    }

    #[test]
    fn swapped_matrix_conjugates_projection() {
        let (f, m) = codebooks(14, 8, 16, 10, false);
        let d = SensingMatrix::from_codebooks(&f, &m).unwrap();
        let sw = d.swapped();
        let a = d.project(0.3, -0.6);
        let b = sw.project(-0.6, 0.3);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.conj() - y).norm() < 1e-12);
        }
    }
}
