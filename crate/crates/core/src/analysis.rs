//! Separation metric, pairwise error probability, Cramér-Rao bound and
//! the baselines used for comparison (DFT sweeping, 1-D K-means).

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::geometry::{cos_sub, steering_vector, CosAngle};
use crate::rng::complex_gaussian;
use crate::sounding::SensingMatrix;

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// `‖s‖² - |t^H s|² / ‖t‖²` with `s = D b(θ,φ)`, `t = D b(θ̃,φ̃)`: the energy
/// of `s` orthogonal to `t`.
pub fn d_squared(d: &SensingMatrix, theta: f64, phi: f64, theta_alt: f64, phi_alt: f64) -> Result<f64> {
    let s = d.project(theta, phi);
    let t = d.project(theta_alt, phi_alt);
    let tt = energy(&t);
    if tt <= 0.0 {
        return Err(Error::ZeroProjection);
    }
    Ok(energy(&s) - inner(&t, &s).norm_sqr() / tt)
}

/// Variant dividing by `‖t‖` instead of `‖t‖²`; kept for inspection only.
pub fn d_squared_display(d: &SensingMatrix, theta: f64, phi: f64, theta_alt: f64, phi_alt: f64) -> Result<f64> {
    let s = d.project(theta, phi);
    let t = d.project(theta_alt, phi_alt);
    let tt = energy(&t);
    if tt <= 0.0 {
        return Err(Error::ZeroProjection);
    }
    Ok(energy(&s) - inner(&t, &s).norm_sqr() / tt.sqrt())
}

/// Gaussian tail `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PepForm {
    /// `Q(√(|δ|² d² / 2σ²))`: first-order noise term against the mean gap.
    #[default]
    Derived,
    /// `Q(|δ|² d² / 2σ²)`.
    Displayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PepQuery {
    pub delta: Complex64,
    pub noise_variance: f64,
    pub theta: f64,
    pub phi: f64,
    pub theta_alt: f64,
    pub phi_alt: f64,
}

/// Probability that `(θ̃, φ̃)` outscores the true pair under the
/// high-SNR approximation.
pub fn pep_theoretical(d: &SensingMatrix, q: &PepQuery, form: PepForm) -> Result<f64> {
    let d2 = d_squared(d, q.theta, q.phi, q.theta_alt, q.phi_alt)?.max(0.0);
    if d2 == 0.0 {
        return Ok(0.5);
    }
    if q.noise_variance <= 0.0 {
        return Ok(0.0);
    }
    let snr = q.delta.norm_sqr() * d2 / (2.0 * q.noise_variance);
    Ok(match form {
        PepForm::Derived => q_function(snr.sqrt()),
        PepForm::Displayed => q_function(snr),
    })
}

/// Empirical frequency of `g(θ̃,φ̃) > g(θ,φ)` under `y = δ D b(θ,φ) + n`.
pub fn pep_monte_carlo<R: Rng + ?Sized>(d: &SensingMatrix, q: &PepQuery, trials: usize, rng: &mut R) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let s = d.project(q.theta, q.phi);
    let t = d.project(q.theta_alt, q.phi_alt);
    let (ss, tt) = (energy(&s), energy(&t));
    if ss <= 0.0 || tt <= 0.0 {
        return Err(Error::ZeroProjection);
    }
    let mut errors = 0usize;
    let mut y = vec![Complex64::new(0.0, 0.0); s.len()];
    for _ in 0..trials {
        for (v, s) in y.iter_mut().zip(&s) {
            *v = q.delta * s + complex_gaussian(rng, q.noise_variance);
        }
        if inner(&s, &y).norm_sqr() / ss < inner(&t, &y).norm_sqr() / tt {
            errors += 1;
        }
    }
    Ok(errors as f64 / trials as f64)
}

/// Fisher information of `(Re δ, Im δ, θ, φ)` for `y = δ D b(θ,φ) + n`.
pub fn fisher_information(d: &SensingMatrix, delta: Complex64, theta: f64, phi: f64, noise_variance: f64) -> Result<Matrix4<f64>> {
    if !(noise_variance > 0.0) {
        return Err(Error::InvalidArgument("noise variance must be positive".into()));
    }
    let p = d.project_with_derivatives(theta, phi);
    let j = Complex64::new(0.0, 1.0);
    let cols: [Vec<Complex64>; 4] = [
        p.s.clone(),
        p.s.iter().map(|x| j * x).collect(),
        p.ds_theta.iter().map(|x| delta * x).collect(),
        p.ds_phi.iter().map(|x| delta * x).collect(),
    ];
    Ok(Matrix4::from_fn(|a, b| 2.0 / noise_variance * inner(&cols[a], &cols[b]).re))
}

/// `(CRB_θ, CRB_φ)`: trailing diagonal of the inverse Fisher matrix.
pub fn crb_numeric(d: &SensingMatrix, delta: Complex64, theta: f64, phi: f64, noise_variance: f64) -> Result<(f64, f64)> {
    let fim = fisher_information(d, delta, theta, phi, noise_variance)?;
    let sv = fim.singular_values();
    if sv.min() <= 1e-14 * sv.max() {
        return Err(Error::Unidentifiable);
    }
    let inv = fim.try_inverse().ok_or(Error::Unidentifiable)?;
    Ok((inv[(2, 2)], inv[(3, 3)]))
}

/// `n` beams steered to the cosine grid `-1 + (2k + 1)/n`, `k = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DftCodebook {
    pub n: usize,
}

impl DftCodebook {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("codebook needs at least one beam".into()));
        }
        Ok(Self { n })
    }

    pub fn angle(&self, k: usize) -> f64 {
        -1.0 + (2 * k + 1) as f64 / self.n as f64
    }

    pub fn beam(&self, k: usize) -> Vec<Complex64> {
        let s = 1.0 / (self.n as f64).sqrt();
        steering_vector(self.n, self.angle(k)).into_iter().map(|x| x * s).collect()
    }

    pub fn beams(&self) -> Vec<Vec<Complex64>> {
        (0..self.n).map(|k| self.beam(k)).collect()
    }
}

/// Nearest codeword under wrap-around distance; ties go to the lower index.
pub fn quantize_to_codebook(psi: CosAngle, codebook: &DftCodebook) -> usize {
    let mut best = (0, f64::INFINITY);
    for k in 0..codebook.n {
        let dist = cos_sub(psi, codebook.angle(k)).value().abs();
        if dist < best.1 - 1e-12 {
            best = (k, dist);
        }
    }
    best.0
}

fn pair_gains(h: &DMatrix<Complex64>, tx: &DftCodebook, rx: &DftCodebook) -> Result<Vec<Complex64>> {
    if h.nrows() != rx.n || h.ncols() != tx.n {
        return Err(Error::DimensionMismatch {
            what: "channel matrix",
            expected: rx.n * tx.n,
            got: h.nrows() * h.ncols(),
        });
    }
    let rx_beams = rx.beams();
    let mut out = Vec::with_capacity(tx.n * rx.n);
    for f in tx.beams() {
        let hf: Vec<Complex64> = (0..h.nrows())
            .map(|i| (0..h.ncols()).map(|j| h[(i, j)] * f[j]).sum())
            .collect();
        for m in &rx_beams {
            out.push(inner(m, &hf));
        }
    }
    Ok(out)
}

fn argmax_pair(power: impl Iterator<Item = f64>, n_rx: usize) -> (usize, usize) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in power.enumerate() {
        if p > best.1 {
            best = (i, p);
        }
    }
    (best.0 / n_rx, best.0 % n_rx)
}

/// Noiseless strongest `(tx, rx)` beam pair.
pub fn best_true_pair(h: &DMatrix<Complex64>, tx: &DftCodebook, rx: &DftCodebook) -> Result<(usize, usize)> {
    let g = pair_gains(h, tx, rx)?;
    Ok(argmax_pair(g.iter().map(|x| x.norm_sqr()), rx.n))
}

/// Measures every beam pair once (transmit-major order) with `CN(0, σ²)`
/// noise and returns the strongest observed pair.
pub fn exhaustive_sweep<R: Rng + ?Sized>(
    h: &DMatrix<Complex64>,
    tx: &DftCodebook,
    rx: &DftCodebook,
    noise_variance: f64,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let g = pair_gains(h, tx, rx)?;
    let noisy: Vec<f64> = g
        .iter()
        .map(|x| (x + complex_gaussian(rng, noise_variance)).norm_sqr())
        .collect();
    Ok(argmax_pair(noisy.into_iter(), rx.n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    /// Cluster labels; label 0 has the lowest centroid.
    pub assignments: Vec<usize>,
    pub centroids: Vec<f64>,
    pub objective: f64,
    /// Fewer distinct values than clusters.
    pub degenerate: bool,
}

fn assign(values: &[f64], centroids: &[f64]) -> (Vec<usize>, f64) {
    let mut obj = 0.0;
    let a = values
        .iter()
        .map(|v| {
            let (k, d) = centroids
                .iter()
                .enumerate()
                .map(|(k, c)| (k, (v - c).powi(2)))
                .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
            obj += d;
            k
        })
        .collect();
    (a, obj)
}

fn lloyd(values: &[f64], mut centroids: Vec<f64>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut trace = Vec::new();
    let (mut a, mut obj) = assign(values, &centroids);
    trace.push(obj);
    for _ in 0..100 {
        for (k, c) in centroids.iter_mut().enumerate() {
            let members: Vec<f64> = values.iter().zip(&a).filter(|(_, l)| **l == k).map(|(v, _)| *v).collect();
            if !members.is_empty() {
                *c = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        let (na, nobj) = assign(values, &centroids);
        trace.push(nobj);
        let done = na == a;
        a = na;
        obj = nobj;
        if done {
            break;
        }
    }
    let _ = obj;
    (a, centroids, trace)
}

/// Lloyd's algorithm on scalars, best of 8 random initializations.
pub fn kmeans_1d<R: Rng + ?Sized>(values: &[f64], k: usize, rng: &mut R) -> Result<KMeans> {
    if k == 0 || values.len() < k {
        return Err(Error::InvalidArgument("need at least k values and k ≥ 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("values must be finite".into()));
    }
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < k {
        return Ok(KMeans {
            assignments: vec![0; values.len()],
            centroids: vec![distinct[0]],
            objective: values.iter().map(|v| (v - distinct[0]).powi(2)).sum(),
            degenerate: true,
        });
    }
    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    for _ in 0..8 {
        let init: Vec<f64> = sample(rng, distinct.len(), k).iter().map(|i| distinct[i]).collect();
        let (a, c, trace) = lloyd(values, init);
        let obj = *trace.last().expect("trace is non-empty");
        if best.as_ref().is_none_or(|b| obj < b.2) {
            best = Some((a, c, obj));
        }
    }
    let (a, c, obj) = best.expect("at least one restart");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| c[x].total_cmp(&c[y]));
    let mut relabel = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    Ok(KMeans {
        assignments: a.iter().map(|&l| relabel[l]).collect(),
        centroids: order.iter().map(|&o| c[o]).collect(),
        objective: obj,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::sounding::{random_codebook, Side};
    use proptest::prelude::{prop_assert, proptest};

    fn sensing(seed: u64, rows: usize) -> SensingMatrix {
        let mut rng = stream(seed, Stream::Codebook);
        let f = random_codebook(Side::Transmit, 16, rows, &mut rng).unwrap();
        let m = random_codebook(Side::Receive, 16, rows, &mut rng).unwrap();
        SensingMatrix::from_codebooks(&f, &m).unwrap()
    }

    #[test]
    fn d_squared_examples() {
        let d = sensing(1, 16);
        assert!(d_squared(&d, 0.2, 0.3, 0.2, 0.3).unwrap().abs() < 1e-12);
        // single-row matrix: every pair of projections is parallel
        let one = d.truncated(1).unwrap();
        assert!(d_squared(&one, 0.2, 0.3, -0.5, 0.8).unwrap().abs() < 1e-12);

        // orthogonal pair: exact DFT nulls on a noiseless identity-like setup
        let tx = vec![steering_vector(16, 0.0).iter().map(|x| x / 4.0).collect::<Vec<_>>(); 2];
        let rx = vec![steering_vector(16, 0.0).iter().map(|x| x / 4.0).collect::<Vec<_>>(), steering_vector(16, 0.125).iter().map(|x| x / 4.0).collect()];
        let dd = SensingMatrix::new(tx, rx).unwrap();
        let s = dd.project(0.0, 0.0);
        let d2 = d_squared(&dd, 0.0, 0.0, 0.125, 0.0).unwrap();
        assert!((d2 - energy(&s)).abs() < 1e-9 * energy(&s));
    }

    #[test]
    fn appending_rows_never_shrinks_d_squared() {
        let mut rng = stream(2, Stream::Analysis);
        for seed in 0..200 {
            let d = sensing(seed, 12);
            let (a, b, c, e) = (
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let mut prev = d_squared(&d.truncated(1).unwrap(), a, b, c, e).unwrap();
            for n in 2..=12 {
                let cur = d_squared(&d.truncated(n).unwrap(), a, b, c, e).unwrap();
                assert!(cur - prev >= -1e-12);
                assert!(cur >= -1e-12);
                prev = cur;
            }
        }
    }

    #[test]
    fn pep_limits() {
        let d = sensing(3, 16);
        let mut q = PepQuery { delta: Complex64::new(1.0, 0.0), noise_variance: 1.0, theta: 0.1, phi: 0.2, theta_alt: 0.1, phi_alt: 0.2 };
        assert_eq!(pep_theoretical(&d, &q, PepForm::Derived).unwrap(), 0.5);
        q.theta_alt = 0.3;
        q.noise_variance = 0.0;
        assert_eq!(pep_theoretical(&d, &q, PepForm::Derived).unwrap(), 0.0);
        assert_eq!(pep_monte_carlo(&d, &q, 1000, &mut stream(0, Stream::Noise)).unwrap(), 0.0);
        q.noise_variance = 1.0;
        q.delta = Complex64::new(0.0, 0.0);
        let p = pep_monte_carlo(&d, &q, 20_000, &mut stream(1, Stream::Noise)).unwrap();
        assert!((p - 0.5).abs() < 0.05, "{p}");
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        assert!((q_function(1.6448536269514722) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn pep_decreases_with_gain_and_separation() {
        let d = sensing(4, 16);
        let base = PepQuery { delta: Complex64::new(0.1, 0.0), noise_variance: 1.0, theta: 0.0, phi: 0.0, theta_alt: 0.01, phi_alt: 0.0 };
        let mut last = 1.0;
        for g in [0.1, 0.2, 0.4, 0.8, 1.6] {
            let p = pep_theoretical(&d, &PepQuery { delta: Complex64::new(g, 0.0), ..base }, PepForm::Derived).unwrap();
            assert!(p <= last);
            last = p;
        }
        let near = pep_theoretical(&d, &base, PepForm::Derived).unwrap();
        let far = pep_theoretical(&d, &PepQuery { theta_alt: 0.03, ..base }, PepForm::Derived).unwrap();
        assert!(far < near);
    }

    #[test]
    fn crb_scaling_and_fim_oracle() {
        let d = sensing(5, 16);
        let delta = Complex64::new(0.3, -0.4);
        let (t1, p1) = crb_numeric(&d, delta, 0.2, -0.1, 1e-3).unwrap();
        let (t2, p2) = crb_numeric(&d, delta * 2.0, 0.2, -0.1, 1e-3).unwrap();
        assert!((t1 / t2 - 4.0).abs() < 1e-8);
        assert!((p1 / p2 - 4.0).abs() < 1e-8);

        // finite-difference Jacobian of the mean
        let h = 1e-6;
        let mu = |x: [f64; 4]| -> Vec<Complex64> {
            let dl = Complex64::new(x[0], x[1]);
            d.project(x[2], x[3]).into_iter().map(|s| dl * s).collect()
        };
        let x0 = [delta.re, delta.im, 0.2, -0.1];
        let jac: Vec<Vec<Complex64>> = (0..4)
            .map(|i| {
                let (mut up, mut dn) = (x0, x0);
                up[i] += h;
                dn[i] -= h;
                mu(up).iter().zip(mu(dn)).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        let fim = fisher_information(&d, delta, 0.2, -0.1, 1e-3).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let fd = 2.0 / 1e-3 * inner(&jac[a], &jac[b]).re;
                assert!((fd - fim[(a, b)]).abs() <= 1e-4 * fim[(a, b)].abs().max(fim.amax() * 1e-6));
            }
        }
        assert!(matches!(crb_numeric(&d, Complex64::new(0.0, 0.0), 0.2, -0.1, 1e-3), Err(Error::Unidentifiable)));
    }

    #[test]
    fn quantization() {
        let cb = DftCodebook::new(16).unwrap();
        for k in 0..16 {
            assert_eq!(quantize_to_codebook(CosAngle::wrap(cb.angle(k)), &cb), k);
        }
        assert_eq!(quantize_to_codebook(CosAngle::wrap(-1.0 + 2.0 / 16.0), &cb), 0);
        assert_eq!(quantize_to_codebook(CosAngle::wrap(0.0), &cb), 7);
        assert_eq!(quantize_to_codebook(CosAngle::wrap(-1.0), &cb), 0);
        let mut rng = stream(6, Stream::Analysis);
        for _ in 0..1000 {
            let psi = CosAngle::wrap(rng.random_range(-1.0..1.0));
            let k = quantize_to_codebook(psi, &cb);
            assert!(cos_sub(psi, cb.angle(k)).value().abs() <= 1.0 / 16.0 + 1e-12);
        }
    }

    fn rank_one(delta: Complex64, theta: f64, phi: f64, n: usize) -> DMatrix<Complex64> {
        let ar = steering_vector(n, theta);
        let at = steering_vector(n, phi);
        DMatrix::from_fn(n, n, |i, j| delta * ar[i] * at[j].conj())
    }

    #[test]
    fn beam_pair_selection() {
        let cb = DftCodebook::new(16).unwrap();
        let mut rng = stream(7, Stream::Analysis);
        for _ in 0..50 {
            let (t, p) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let h = rank_one(Complex64::new(0.0, 2.0), t, p, 16);
            let pair = best_true_pair(&h, &cb, &cb).unwrap();
            let expect = (
                quantize_to_codebook(CosAngle::wrap(p), &cb),
                quantize_to_codebook(CosAngle::wrap(t), &cb),
            );
            assert_eq!(pair, expect);
            assert_eq!(best_true_pair(&(h.clone() * Complex64::new(7.0, 0.0)), &cb, &cb).unwrap(), pair);
            assert_eq!(exhaustive_sweep(&h, &cb, &cb, 0.0, &mut rng).unwrap(), pair);
        }
    }

    #[test]
    fn kmeans_examples() {
        let mut rng = stream(8, Stream::Clustering);
        let km = kmeans_1d(&[0.0, 0.0, 10.0, 0.0, 10.0], 2, &mut rng).unwrap();
        assert_eq!(km.assignments, vec![0, 0, 1, 0, 1]);
        assert_eq!(km.centroids, vec![0.0, 10.0]);
        let flat = kmeans_1d(&[3.0; 5], 2, &mut rng).unwrap();
        assert!(flat.degenerate);
        let a = kmeans_1d(&[1.0, 2.0, 9.0, 8.5, 1.5], 2, &mut stream(9, Stream::Clustering)).unwrap();
        let b = kmeans_1d(&[1.0, 2.0, 9.0, 8.5, 1.5], 2, &mut stream(9, Stream::Clustering)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn lloyd_objective_non_increasing(values in proptest::collection::vec(-100.0f64..100.0, 3..40), c0 in -100.0f64..100.0, c1 in -100.0f64..100.0) {
            let (_, _, trace) = lloyd(&values, vec![c0, c1]);
            for w in trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }

        #[test]
        fn d_squared_non_negative(seed in 0u64..500, a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, e in -1.0f64..1.0) {
            let d = sensing(seed, 8);
            prop_assert!(d_squared(&d, a, b, c, e).unwrap() >= -1e-12);
            prop_assert!(d_squared(&d, a, b, a, b).unwrap().abs() < 1e-12);
        }
    }
}
