//! Finite-size verification of the asymptotic predictions.
//!
//! Samples the conditioned Hessian
//!
//! ```text
//! H = (1/n) z Lambda(y) z^T - [(1/m) sum_mu y_mu phi'(y_mu)] I_{n-1},
//! Lambda(y) = (I - v v^T) D(y) (I - v v^T),   v = phi'(y)/|phi'(y)|,
//! D(y)_mu = (n/m) phi''(y_mu),
//! ```
//!
//! compares its spectrum and log-determinant against the spectral module,
//! checks the hard rank-2 bound between the projected and unprojected
//! ensembles, and validates the exact finite-n counting formula on the
//! circle against brute-force enumeration.

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::spectral;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

/// One draw of the conditioned Hessian ensemble.
#[derive(Debug, Clone)]
pub struct HessianSample {
    pub n: usize,
    pub m: usize,
    pub y: Vec<f64>,
    /// Sorted eigenvalues of the (n-1) x (n-1) Hessian.
    pub eigenvalues: Vec<f64>,
    /// The subtracted (1/m) sum y phi'(y).
    pub shift: f64,
    pub seed: u64,
}

/// Outcome of one verification run; fields not produced by a given check are
/// NaN (serialised as null).
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub ks_distance: f64,
    pub logdet_empirical: f64,
    pub logdet_predicted: f64,
    pub cutoff_delta: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Draws (y, z) for the ensemble at a fixed seed; z is (n-1) x m.
pub fn draw_y_z(n: usize, m: usize, seed: u64) -> (Vec<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let z = DMatrix::from_fn(n - 1, m, |_, _| StandardNormal.sample(&mut rng));
    (y, z)
}

/// The projected diagonal Lambda(y) as an explicit m x m matrix.
pub fn lambda_matrix(y: &[f64], phi: &Activation, n: usize) -> Result<DMatrix<f64>> {
    let m = y.len();
    let grad: Vec<f64> = y.iter().map(|&v| phi.d1(v)).collect();
    let norm2: f64 = grad.iter().map(|g| g * g).sum();
    if norm2 <= 0.0 {
        return Err(Error::DegenerateMeasure("phi'(y) vanished identically"));
    }
    let norm = norm2.sqrt();
    let v: Vec<f64> = grad.iter().map(|g| g / norm).collect();
    let d: Vec<f64> = y.iter().map(|&t| n as f64 / m as f64 * phi.d2(t)).collect();
    let u: Vec<f64> = d.iter().zip(&v).map(|(d, v)| d * v).collect();
    let c: f64 = v.iter().zip(&u).map(|(v, u)| v * u).sum();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut val = -v[i] * u[j] - u[i] * v[j] + c * v[i] * v[j];
            if i == j {
                val += d[i];
            }
            out[(i, j)] = val;
        }
    }
    Ok(out)
}

/// (1/n) z Lambda(y) z^T without forming Lambda, via its diagonal plus
/// rank-2 structure.
fn z_lambda_zt(y: &[f64], z: &DMatrix<f64>, phi: &Activation, n: usize) -> Result<DMatrix<f64>> {
    let m = y.len();
    let grad: Vec<f64> = y.iter().map(|&v| phi.d1(v)).collect();
    let norm2: f64 = grad.iter().map(|g| g * g).sum();
    if norm2 <= 0.0 {
        return Err(Error::DegenerateMeasure("phi'(y) vanished identically"));
    }
    let norm = norm2.sqrt();
    let v = DVector::from_iterator(m, grad.iter().map(|g| g / norm));
    let d: Vec<f64> = y.iter().map(|&t| n as f64 / m as f64 * phi.d2(t)).collect();
    let u = DVector::from_iterator(m, d.iter().zip(v.iter()).map(|(d, v)| d * v));
    let c = v.dot(&u);

    let mut zs = z.clone();
    for (mu, &dm) in d.iter().enumerate() {
        zs.column_mut(mu).scale_mut(dm);
    }
    let mut a = &zs * z.transpose();
    let zv = z * &v;
    let zu = z * &u;
    let rows = a.nrows();
    for i in 0..rows {
        for j in 0..rows {
            a[(i, j)] += -zv[i] * zu[j] - zu[i] * zv[j] + c * zv[i] * zv[j];
        }
    }
    a.scale_mut(1.0 / n as f64);
    // symmetrise away roundoff before the eigensolver
    let at = a.transpose();
    Ok(0.5 * (a + at))
}

/// (1/n) z D(y) z^T, the unprojected companion of [`z_lambda_zt`].
fn z_d_zt(y: &[f64], z: &DMatrix<f64>, phi: &Activation, n: usize) -> DMatrix<f64> {
    let m = y.len();
    let d: Vec<f64> = y.iter().map(|&t| n as f64 / m as f64 * phi.d2(t)).collect();
    let mut zs = z.clone();
    for (mu, &dm) in d.iter().enumerate() {
        zs.column_mut(mu).scale_mut(dm);
    }
    let mut a = &zs * z.transpose();
    a.scale_mut(1.0 / n as f64);
    let at = a.transpose();
    0.5 * (a + at)
}

fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

/// Draws one Hessian sample and diagonalises it.
pub fn hessian_sample(n: usize, m: usize, phi: &Activation, seed: u64) -> Result<HessianSample> {
    if n < 2 || m < n {
        return Err(Error::Invalid("need m >= n >= 2".into()));
    }
    let (y, z) = draw_y_z(n, m, seed);
    let shift = y.iter().map(|&t| t * phi.d1(t)).sum::<f64>() / m as f64;
    let mut h = z_lambda_zt(&y, &z, phi, n)?;
    for i in 0..n - 1 {
        h[(i, i)] -= shift;
    }
    Ok(HessianSample {
        n,
        m,
        y,
        eigenvalues: sorted_eigenvalues(&h),
        shift,
        seed,
    })
}

/// Sup distance between the empirical spectral CDFs of the projected and
/// unprojected ensembles built from one common draw. Bounded by 2/(n-1)
/// because the two matrices differ by rank at most two.
pub fn rank2_check(n: usize, m: usize, phi: &Activation, seed: u64) -> Result<f64> {
    if n < 2 || m < n {
        return Err(Error::Invalid("need m >= n >= 2".into()));
    }
    let (y, z) = draw_y_z(n, m, seed);
    let a = sorted_eigenvalues(&z_lambda_zt(&y, &z, phi, n)?);
    let b = sorted_eigenvalues(&z_d_zt(&y, &z, phi, n));
    Ok(ks_two_sample(&a, &b))
}

/// Kolmogorov distance between two equally weighted sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

/// Kolmogorov distance between a sorted sample and a reference CDF.
pub fn ks_vs_cdf(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max((f - (i + 1) as f64 / n).abs());
    }
    sup
}

/// Cutoff log-determinant (1/n) sum ln(max(|lambda_i|, n^{-delta})), with the
/// number of eigenvalues the cutoff touched.
pub fn empirical_log_potential(sample: &HessianSample, delta: f64) -> Result<(f64, usize)> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::Invalid("delta must lie in (0,1)".into()));
    }
    let eps = (sample.n as f64).powf(-delta);
    let mut acc = 0.0;
    let mut cut = 0usize;
    for &lam in &sample.eigenvalues {
        let a = lam.abs();
        if a < eps {
            cut += 1;
            acc += eps.ln();
        } else {
            acc += a.ln();
        }
    }
    Ok((acc / sample.n as f64, cut))
}

/// Pools eigenvalues of (1/n) z Lambda z^T over seeds and compares the pooled
/// empirical CDF with the predicted spectral measure for the Gaussian weight
/// law at alpha = m/n.
pub fn esd_vs_prediction(
    n: usize,
    m: usize,
    phi: &Activation,
    seeds: &[u64],
) -> Result<VerificationReport> {
    if seeds.is_empty() {
        return Err(Error::Invalid("need at least one seed".into()));
    }
    let mut pooled: Vec<f64> = seeds
        .par_iter()
        .map(|&s| {
            let (y, z) = draw_y_z(n, m, s);
            z_lambda_zt(&y, &z, phi, n).map(|a| sorted_eigenvalues(&a))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let alpha = m as f64 / n as f64;
    let base = DiscreteMeasure::uniform_gaussian(2001, 8.0)?;
    let weight_law = base.pushforward(|x| phi.d2(x[0]))?;
    let lo = pooled.first().unwrap() - 0.1;
    let hi = pooled.last().unwrap() + 0.1;
    let t_grid: Vec<f64> = (0..1501)
        .map(|i| lo + (hi - lo) * i as f64 / 1500.0)
        .collect();
    let sol = spectral::density_curve(&weight_law, alpha, &t_grid, 1e-6)?;
    let ks = ks_vs_cdf(&pooled, |t| sol.cdf(t));
    Ok(VerificationReport {
        ks_distance: ks,
        logdet_empirical: f64::NAN,
        logdet_predicted: f64::NAN,
        cutoff_delta: f64::NAN,
        samples: pooled.len(),
        pass: ks <= 0.05,
    })
}

/// Desk-scale check of the log-determinant concentration: the cutoff
/// log-determinant of sampled Hessians against kappa evaluated per sample on
/// the empirical measure of y. Pass requires 5% relative agreement of the
/// seed means.
pub fn logdet_concentration(
    n: usize,
    m: usize,
    phi: &Activation,
    delta: f64,
    seeds: &[u64],
) -> Result<VerificationReport> {
    if seeds.is_empty() {
        return Err(Error::Invalid("need at least one seed".into()));
    }
    let alpha = m as f64 / n as f64;
    let pairs: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&s| -> Result<(f64, f64)> {
            let sample = hessian_sample(n, m, phi, s)?;
            let (emp, _) = empirical_log_potential(&sample, delta)?;
            let nu = DiscreteMeasure::empirical(&sample.y)?;
            let weight_law = nu.pushforward(|x| phi.d2(x[0]))?;
            let t = nu.t_phi(phi)?;
            let kappa = spectral::log_potential(&weight_law, alpha, t)?;
            Ok((emp, kappa.value))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_emp = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let mean_pred = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let rel = (mean_emp - mean_pred).abs() / mean_pred.abs();
    Ok(VerificationReport {
        ks_distance: f64::NAN,
        logdet_empirical: mean_emp,
        logdet_predicted: mean_pred,
        cutoff_delta: delta,
        samples: seeds.len(),
        pass: rel <= 0.05,
    })
}

/// Monte-Carlo estimate of the expected number of critical points at small n
/// from the exact finite-n counting formula: the sphere volume times the
/// gradient density at zero times the conditioned absolute determinant.
pub fn kac_rice_finite_n(
    n: usize,
    m: usize,
    phi: &Activation,
    b: Option<(f64, f64)>,
    mc_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(n == 2 || n == 3) {
        return Err(Error::Invalid(
            "the exact determinant route is wired for n = 2 or 3".into(),
        ));
    }
    if m < n {
        return Err(Error::Invalid("need m >= n".into()));
    }
    let nf = n as f64;
    let omega_n = 2.0 * std::f64::consts::PI.powf(nf / 2.0) / gamma(nf / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0f64;
    let mut sum2 = 0.0f64;
    let mut effective = 0usize;

    for _ in 0..mc_samples {
        let y: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let loss = y.iter().map(|&t| phi.eval(t)).sum::<f64>() / m as f64;
        let inside = b.map(|(lo, hi)| loss > lo && loss < hi).unwrap_or(true);
        if !inside {
            continue;
        }
        let grad2: f64 = y.iter().map(|&t| phi.d1(t) * phi.d1(t)).sum();
        if grad2 <= 0.0 {
            continue;
        }
        let pref = omega_n
            * (2.0 * std::f64::consts::PI * grad2 / (m as f64 * m as f64))
                .powf(-(nf - 1.0) / 2.0);
        let z = DMatrix::from_fn(n - 1, m, |_, _| StandardNormal.sample(&mut rng));
        let shift = y.iter().map(|&t| t * phi.d1(t)).sum::<f64>() / m as f64;
        let mut h = z_lambda_zt(&y, &z, phi, n)?;
        for i in 0..n - 1 {
            h[(i, i)] -= shift;
        }
        let det = match n {
            2 => h[(0, 0)],
            _ => h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)],
        };
        let x = pref * det.abs();
        sum += x;
        sum2 += x * x;
        effective += 1;
    }
    if effective == 0 {
        return Err(Error::DegenerateMeasure("no samples hit the loss window"));
    }
    // zero-gated samples still count toward the mean
    let nt = mc_samples as f64;
    let mean = sum / nt;
    let var = (sum2 / nt - mean * mean).max(0.0);
    Ok((mean, (var / nt).sqrt()))
}

/// Exact count of critical points of theta -> (1/m) sum phi(xi . x(theta))
/// on the circle by sign changes of the derivative, bisection-refined.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CircleCount {
    pub count: usize,
    /// True when some root had |second derivative| below 1e-8.
    pub degenerate: bool,
}

pub fn direct_count_circle(
    phi: &Activation,
    xi: &[[f64; 2]],
    b: Option<(f64, f64)>,
    resolution: usize,
) -> Result<CircleCount> {
    if resolution < 100_000 {
        return Err(Error::Invalid("resolution must be at least 1e5".into()));
    }
    if xi.is_empty() {
        return Err(Error::Invalid("need at least one data vector".into()));
    }
    let m = xi.len() as f64;
    let loss = |theta: f64| -> f64 {
        let (c, s) = (theta.cos(), theta.sin());
        xi.iter().map(|v| phi.eval(v[0] * c + v[1] * s)).sum::<f64>() / m
    };
    let dloss = |theta: f64| -> f64 {
        let (c, s) = (theta.cos(), theta.sin());
        xi.iter()
            .map(|v| {
                let y = v[0] * c + v[1] * s;
                let yp = -v[0] * s + v[1] * c;
                phi.d1(y) * yp
            })
            .sum::<f64>()
            / m
    };
    let d2loss = |theta: f64| -> f64 {
        let (c, s) = (theta.cos(), theta.sin());
        xi.iter()
            .map(|v| {
                let y = v[0] * c + v[1] * s;
                let yp = -v[0] * s + v[1] * c;
                phi.d2(y) * yp * yp - phi.d1(y) * y
            })
            .sum::<f64>()
            / m
    };

    let two_pi = 2.0 * std::f64::consts::PI;
    let h = two_pi / resolution as f64;
    let mut count = 0usize;
    let mut degenerate = false;
    let mut prev = dloss(0.0);
    for k in 1..=resolution {
        let theta = k as f64 * h;
        let cur = dloss(theta);
        if prev == 0.0 {
            // a root exactly on a node
            count_root(theta - h, &loss, &d2loss, b, &mut count, &mut degenerate);
        } else if prev * cur < 0.0 {
            let (mut lo, mut hi) = (theta - h, theta);
            let mut flo = prev;
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let fm = dloss(mid);
                if fm == 0.0 {
                    lo = mid;
                    break;
                }
                if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            count_root(
                0.5 * (lo + hi),
                &loss,
                &d2loss,
                b,
                &mut count,
                &mut degenerate,
            );
        }
        prev = cur;
    }
    Ok(CircleCount { count, degenerate })
}

fn count_root(
    theta: f64,
    loss: &impl Fn(f64) -> f64,
    d2loss: &impl Fn(f64) -> f64,
    b: Option<(f64, f64)>,
    count: &mut usize,
    degenerate: &mut bool,
) {
    if d2loss(theta).abs() < 1e-8 {
        *degenerate = true;
    }
    let inside = b
        .map(|(lo, hi)| {
            let v = loss(theta);
            v > lo && v < hi
        })
        .unwrap_or(true);
    if inside {
        *count += 1;
    }
}
