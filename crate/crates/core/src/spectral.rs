//! Spectral measure of the weighted Wishart family and its log-potential.
//!
//! For a weight law pi on R (the image of nu under phi'') and alpha > 1, the
//! limiting spectral measure of z D z^T / m has Stieltjes transform g(z)
//! solving, uniquely in the upper half-plane,
//!
//! ```text
//! g(z) = -[ z - alpha \int w / (alpha + w g(z)) pi(dw) ]^{-1}.
//! ```
//!
//! The holomorphic potential
//!
//! ```text
//! F(z,g) = -ln(-g) - z g + alpha \int ln(alpha + w g) pi(dw) - 1 - alpha ln alpha
//! ```
//!
//! is stationary in g exactly at g(z), and Re F(t + i eps, g(t + i eps))
//! converges to the logarithmic potential U(t) = \int ln|x - t| mu(dx) as
//! eps -> 0. Densities come from the usual inversion Im g / pi.

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use num_complex::Complex64;

const SOLVE_TOL: f64 = 1e-12;
const MAX_ITER: usize = 100_000;

/// Epsilon schedule used for the limit Re F(t + i eps) -> U(t).
pub const EPS_SCHEDULE: [f64; 3] = [1e-3, 1e-4, 1e-5];

/// One converged evaluation of the Stieltjes transform.
#[derive(Debug, Clone, Copy)]
pub struct StieltjesPoint {
    pub z: Complex64,
    pub g: Complex64,
    pub residual: f64,
    pub iterations: usize,
}

/// A log-potential value with the spread of the epsilon schedule.
#[derive(Debug, Clone, Copy)]
pub struct LogPotential {
    pub value: f64,
    pub error_estimate: f64,
}

/// Density and log-potential of the spectral measure along a real grid.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub weight_law: DiscreteMeasure,
    pub alpha: f64,
    pub t_grid: Vec<f64>,
    pub epsilon: f64,
    pub points: Vec<StieltjesPoint>,
    pub density: Vec<f64>,
    pub log_potential: Vec<f64>,
    pub log_potential_err: Vec<f64>,
    /// Indices of grid points whose solve or extrapolation failed (entries
    /// there carry NaN).
    pub failures: Vec<usize>,
    /// Mass of the atom at zero, estimated from eps * Im g(i eps).
    pub atom_at_zero: f64,
    /// Trapezoid mass of the density over the grid.
    pub bulk_mass: f64,
}

fn check_inputs(weight_law: &DiscreteMeasure, alpha: f64) -> Result<()> {
    if weight_law.dim() != 1 {
        return Err(Error::Dimension {
            want: 1,
            got: weight_law.dim(),
        });
    }
    if !(alpha > 1.0) {
        return Err(Error::AlphaRange(alpha));
    }
    Ok(())
}

#[inline]
fn j_integral(nodes: &[f64], weights: &[f64], alpha: f64, g: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (&w, &p) in nodes.iter().zip(weights) {
        acc += p * w / (alpha + w * g);
    }
    acc
}

#[inline]
fn j_derivative(nodes: &[f64], weights: &[f64], alpha: f64, g: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (&w, &p) in nodes.iter().zip(weights) {
        let d = alpha + w * g;
        acc -= p * w * w / (d * d);
    }
    acc
}

/// Solves the implicit equation at one z in the upper half-plane.
///
/// Damped fixed-point iteration (theta adapted downward on oscillation) with
/// a Newton polish once the residual is small. The returned point satisfies
/// `residual <= 1e-12` and `Im g > 0`.
pub fn solve_stieltjes(
    weight_law: &DiscreteMeasure,
    alpha: f64,
    z: Complex64,
) -> Result<StieltjesPoint> {
    solve_stieltjes_from(weight_law, alpha, z, None)
}

/// Same as [`solve_stieltjes`] with an optional warm-start value.
pub fn solve_stieltjes_from(
    weight_law: &DiscreteMeasure,
    alpha: f64,
    z: Complex64,
    init: Option<Complex64>,
) -> Result<StieltjesPoint> {
    check_inputs(weight_law, alpha)?;
    if !(z.im > 0.0) {
        return Err(Error::UpperHalfPlane);
    }
    let nodes = weight_law.nodes_1d()?;
    let weights = weight_law.weights();

    let mut g = match init {
        Some(g0) if g0.im > 0.0 => g0,
        _ => -Complex64::new(1.0, 0.0) / (z + Complex64::new(0.0, 1.0)),
    };
    let mut theta = 0.5f64;
    let mut prev_step = f64::INFINITY;
    let mut growing = 0usize;

    let fixed_point = |g: Complex64| -> Complex64 {
        -Complex64::new(1.0, 0.0) / (z - alpha * j_integral(nodes, weights, alpha, g))
    };

    let mut residual = f64::INFINITY;
    for it in 0..MAX_ITER {
        let fg = fixed_point(g);
        residual = (g - fg).norm();
        if !residual.is_finite() {
            // restart from the safe initial point with heavier damping
            g = -Complex64::new(1.0, 0.0) / (z + Complex64::new(0.0, 1.0));
            theta = (theta * 0.5).max(1e-3);
            continue;
        }
        if residual <= SOLVE_TOL {
            return Ok(StieltjesPoint {
                z,
                g,
                residual,
                iterations: it,
            });
        }

        if residual < 1e-2 * (1.0 + g.norm()) {
            // Newton step on R(g) = g + 1/(z - alpha J(g))
            let d = z - alpha * j_integral(nodes, weights, alpha, g);
            let rp = Complex64::new(1.0, 0.0)
                + alpha * j_derivative(nodes, weights, alpha, g) / (d * d);
            if rp.norm() > 1e-14 {
                let g_newton = g - (g - fg) / rp;
                if g_newton.im > 0.0 {
                    let r_newton = (g_newton - fixed_point(g_newton)).norm();
                    if r_newton < residual {
                        g = g_newton;
                        continue;
                    }
                }
            }
        }

        let g_next = (1.0 - theta) * g + theta * fg;
        let step = (g_next - g).norm();
        if step > prev_step {
            growing += 1;
            if growing >= 3 {
                theta = (theta * 0.7).max(0.01);
                growing = 0;
            }
        } else {
            growing = 0;
        }
        prev_step = step;
        if g_next.im <= 0.0 {
            // cannot happen for a pure damped step; guards the Newton path
            theta = (theta * 0.5).max(1e-3);
            continue;
        }
        g = g_next;
    }
    Err(Error::StieltjesNonConvergence {
        residual,
        iterations: MAX_ITER,
    })
}

/// The holomorphic potential F(z, g), principal branch throughout.
pub fn f_value(
    weight_law: &DiscreteMeasure,
    alpha: f64,
    z: Complex64,
    g: Complex64,
) -> Result<Complex64> {
    check_inputs(weight_law, alpha)?;
    if !(z.im > 0.0) || !(g.im > 0.0) {
        return Err(Error::UpperHalfPlane);
    }
    let nodes = weight_law.nodes_1d()?;
    let weights = weight_law.weights();
    let mut int = Complex64::new(0.0, 0.0);
    for (&w, &p) in nodes.iter().zip(weights) {
        let arg = alpha + w * g;
        if arg.im == 0.0 && arg.re <= 0.0 {
            return Err(Error::BranchCut);
        }
        int += p * arg.ln();
    }
    Ok(-(-g).ln() - z * g + alpha * int - 1.0 - alpha * alpha.ln())
}

/// U[mu](t) via the epsilon schedule with linear Richardson extrapolation.
///
/// The spread between the two successive extrapolations is the reported
/// error estimate; a spread above 1e-3 signals a singular point (an atom of
/// the measure at t).
pub fn log_potential(weight_law: &DiscreteMeasure, alpha: f64, t: f64) -> Result<LogPotential> {
    log_potential_from(weight_law, alpha, t, None)
}

/// [`log_potential`] with a warm start for the first (largest-eps) solve.
pub fn log_potential_from(
    weight_law: &DiscreteMeasure,
    alpha: f64,
    t: f64,
    init: Option<Complex64>,
) -> Result<LogPotential> {
    let mut re_f = [0.0f64; 3];
    let mut warm = init;
    for (k, &eps) in EPS_SCHEDULE.iter().enumerate() {
        let z = Complex64::new(t, eps);
        let point = solve_stieltjes_from(weight_law, alpha, z, warm)?;
        warm = Some(point.g);
        re_f[k] = f_value(weight_law, alpha, z, point.g)?.re;
    }
    let extrap = |e1: f64, f1: f64, e2: f64, f2: f64| (f2 * e1 - f1 * e2) / (e1 - e2);
    let u_a = extrap(EPS_SCHEDULE[0], re_f[0], EPS_SCHEDULE[1], re_f[1]);
    let u_b = extrap(EPS_SCHEDULE[1], re_f[1], EPS_SCHEDULE[2], re_f[2]);
    let spread = (u_a - u_b).abs();
    if spread > 1e-3 {
        return Err(Error::SingularPoint { t, spread });
    }
    Ok(LogPotential {
        value: u_b,
        error_estimate: spread,
    })
}

/// kappa_{alpha,phi}(nu, C): log-potential at C of the spectral measure whose
/// weight law is the image of nu under `weight_fn` (phi'' for the plain loss,
/// f_q for the planted one).
pub fn kappa(
    nu: &DiscreteMeasure,
    alpha: f64,
    c: f64,
    weight_fn: impl FnMut(&[f64]) -> f64,
) -> Result<LogPotential> {
    let weight_law = nu.pushforward(weight_fn)?;
    log_potential(&weight_law, alpha, c)
}

/// Mass of the atom at zero, from the limit of eps * Im g(i eps).
pub fn atom_at_zero(weight_law: &DiscreteMeasure, alpha: f64) -> Result<f64> {
    let mut warm = None;
    let mut est = [0.0f64; 2];
    for (k, eps) in [1e-5, 1e-6].into_iter().enumerate() {
        let p = solve_stieltjes_from(weight_law, alpha, Complex64::new(0.0, eps), warm)?;
        warm = Some(p.g);
        est[k] = eps * p.g.im;
    }
    // linear extrapolation in eps
    let mass = (est[1] * 1e-5 - est[0] * 1e-6) / (1e-5 - 1e-6);
    Ok(if mass < 1e-3 { 0.0 } else { mass.min(1.0) })
}

/// Sweeps the grid t + i eps with sequential warm starts and fills density
/// and log-potential arrays. Individual failures are recorded, not fatal.
pub fn density_curve(
    weight_law: &DiscreteMeasure,
    alpha: f64,
    t_grid: &[f64],
    epsilon: f64,
) -> Result<SpectralSolution> {
    check_inputs(weight_law, alpha)?;
    if t_grid.is_empty() {
        return Err(Error::Invalid("empty t grid".into()));
    }
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("t grid must be strictly increasing".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Invalid("epsilon must be positive".into()));
    }

    let mut points = Vec::with_capacity(t_grid.len());
    let mut density = Vec::with_capacity(t_grid.len());
    let mut log_pot = Vec::with_capacity(t_grid.len());
    let mut log_pot_err = Vec::with_capacity(t_grid.len());
    let mut failures = Vec::new();
    let mut warm: Option<Complex64> = None;

    for (i, &t) in t_grid.iter().enumerate() {
        let z = Complex64::new(t, epsilon);
        match solve_stieltjes_from(weight_law, alpha, z, warm) {
            Ok(p) => {
                warm = Some(p.g);
                density.push(p.g.im / std::f64::consts::PI);
                match log_potential_from(weight_law, alpha, t, Some(p.g)) {
                    Ok(u) => {
                        log_pot.push(u.value);
                        log_pot_err.push(u.error_estimate);
                    }
                    Err(_) => {
                        failures.push(i);
                        log_pot.push(f64::NAN);
                        log_pot_err.push(f64::NAN);
                    }
                }
                points.push(p);
            }
            Err(_) => {
                failures.push(i);
                density.push(f64::NAN);
                log_pot.push(f64::NAN);
                log_pot_err.push(f64::NAN);
                points.push(StieltjesPoint {
                    z,
                    g: Complex64::new(f64::NAN, f64::NAN),
                    residual: f64::NAN,
                    iterations: 0,
                });
            }
        }
    }

    let mut bulk_mass = 0.0;
    for i in 1..t_grid.len() {
        let (a, b) = (density[i - 1], density[i]);
        if a.is_finite() && b.is_finite() {
            bulk_mass += 0.5 * (a + b) * (t_grid[i] - t_grid[i - 1]);
        }
    }
    let atom = atom_at_zero(weight_law, alpha).unwrap_or(0.0);

    Ok(SpectralSolution {
        weight_law: weight_law.clone(),
        alpha,
        t_grid: t_grid.to_vec(),
        epsilon,
        points,
        density,
        log_potential: log_pot,
        log_potential_err: log_pot_err,
        failures,
        atom_at_zero: atom,
        bulk_mass,
    })
}

impl SpectralSolution {
    /// CSV rows `t,density,log_potential,residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,density,log_potential,residual\n");
        for i in 0..self.t_grid.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.t_grid[i], self.density[i], self.log_potential[i], self.points[i].residual
            ));
        }
        out
    }

    /// CDF of the spectral measure at `t`, combining the atom at zero with
    /// the trapezoid integral of the bulk density (normalised so the total
    /// mass is one).
    pub fn cdf(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut total = 0.0;
        for i in 1..self.t_grid.len() {
            let (a, b) = (self.density[i - 1], self.density[i]);
            if !(a.is_finite() && b.is_finite()) {
                continue;
            }
            let seg = 0.5 * (a + b) * (self.t_grid[i] - self.t_grid[i - 1]);
            total += seg;
            if self.t_grid[i] <= t {
                acc += seg;
            } else if self.t_grid[i - 1] < t {
                let frac = (t - self.t_grid[i - 1]) / (self.t_grid[i] - self.t_grid[i - 1]);
                acc += seg * frac;
            }
        }
        let bulk_scale = if total > 0.0 {
            (1.0 - self.atom_at_zero) / total
        } else {
            0.0
        };
        let mut cdf = acc * bulk_scale;
        if t >= 0.0 {
            cdf += self.atom_at_zero;
        }
        cdf.clamp(0.0, 1.0)
    }
}

/// Closed-form Marchenko-Pastur references for the constant weight law
/// (phi'' = scale), used as oracles by tests and the verification module.
pub mod marchenko_pastur {
    use num_complex::Complex64;

    /// Support edges of the spectral measure for weight `scale` and ratio
    /// n/m = 1/alpha.
    pub fn edges(alpha: f64, scale: f64) -> (f64, f64) {
        let r = (1.0 / alpha).sqrt();
        let lo = scale * (1.0 - r) * (1.0 - r);
        let hi = scale * (1.0 + r) * (1.0 + r);
        if scale >= 0.0 {
            (lo, hi)
        } else {
            (hi, lo)
        }
    }

    /// Density at x (ratio 1/alpha, weight scale > 0).
    pub fn density(alpha: f64, scale: f64, x: f64) -> f64 {
        let (lo, hi) = edges(alpha, scale);
        if x <= lo || x >= hi {
            return 0.0;
        }
        let lam = 1.0 / alpha;
        let u = x / scale;
        ((hi / scale - u) * (u - lo / scale)).sqrt() / (2.0 * std::f64::consts::PI * lam * u)
            / scale
    }

    /// Stieltjes transform in the upper half-plane: the root of
    /// `z g^2 + (alpha z - alpha + 1) g + alpha = 0` (unit scale) with
    /// positive imaginary part, rescaled for general `scale`.
    pub fn stieltjes(alpha: f64, scale: f64, z: Complex64) -> Complex64 {
        let zs = z / scale;
        let b = alpha * zs - alpha + 1.0;
        let disc = (b * b - 4.0 * zs * alpha).sqrt();
        let r1 = (-b + disc) / (2.0 * zs);
        let r2 = (-b - disc) / (2.0 * zs);
        let g = if r1.im > 0.0 { r1 } else { r2 };
        g / scale
    }

    /// Log-potential of the scaled MP law at t, by quadrature after the
    /// square-root substitution x = center + radius*sin(theta).
    pub fn log_potential(alpha: f64, scale: f64, t: f64, n_quad: usize) -> f64 {
        let (lo, hi) = edges(alpha, scale);
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let center = 0.5 * (lo + hi);
        let radius = 0.5 * (hi - lo);
        let mut acc = 0.0;
        // midpoint rule in theta; integrand vanishes at the endpoints
        let h = std::f64::consts::PI / n_quad as f64;
        for i in 0..n_quad {
            let theta = -std::f64::consts::FRAC_PI_2 + (i as f64 + 0.5) * h;
            let x = center + radius * theta.sin();
            let jac = radius * theta.cos();
            acc += density(alpha, scale, x) * (x - t).abs().ln() * jac * h;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use std::collections::HashMap;

    fn act(name: &str) -> Activation {
        Activation::builtin(name, &HashMap::new()).unwrap()
    }

    fn delta(c: f64) -> DiscreteMeasure {
        DiscreteMeasure::empirical(&[c]).unwrap()
    }

    fn tanh_weight_law(k: usize) -> DiscreteMeasure {
        let tanh = act("tanh");
        DiscreteMeasure::gauss_hermite(k)
            .unwrap()
            .pushforward(|x| tanh.d2(x[0]))
            .unwrap()
    }

    #[test]
    fn delta0_gives_minus_inverse_z() {
        let p = solve_stieltjes(&delta(0.0), 2.0, Complex64::new(0.0, 1.0)).unwrap();
        assert!((p.g - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        assert!(p.residual <= 1e-12);
    }

    #[test]
    fn matches_marchenko_pastur_oracle() {
        let alpha = 2.0;
        let law = delta(1.0);
        for z in [
            Complex64::new(1.5, 1e-6),
            Complex64::new(0.5, 1e-5),
            Complex64::new(3.5, 1e-6),
            Complex64::new(-0.7, 0.3),
            Complex64::new(0.0, 2.0),
        ] {
            let p = solve_stieltjes(&law, alpha, z).unwrap();
            let oracle = marchenko_pastur::stieltjes(alpha, 1.0, z);
            assert!(
                (p.g - oracle).norm() < 1e-8,
                "z={z}: {} vs {}",
                p.g,
                oracle
            );
        }
    }

    #[test]
    fn upper_half_plane_and_residual_for_tanh() {
        let law = tanh_weight_law(201);
        let p = solve_stieltjes(&law, 2.0, Complex64::new(0.0, 1.0)).unwrap();
        assert!(p.g.im > 0.0);
        assert!(p.residual <= 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            solve_stieltjes(&delta(1.0), 0.9, Complex64::new(0.0, 1.0)),
            Err(Error::AlphaRange(_))
        ));
        assert!(matches!(
            solve_stieltjes(&delta(1.0), 2.0, Complex64::new(0.0, -1.0)),
            Err(Error::UpperHalfPlane)
        ));
    }

    #[test]
    fn f_value_closed_form_at_atom_weight() {
        // weight law delta_0: F(i, i) = -ln(-i) + 1 - 1 + alpha ln alpha - alpha ln alpha
        // = i pi/2; the alpha ln alpha pieces cancel against the integral term.
        let f = f_value(&delta(0.0), 2.0, Complex64::new(0.0, 1.0), Complex64::new(0.0, 1.0))
            .unwrap();
        assert!((f - Complex64::new(0.0, std::f64::consts::FRAC_PI_2)).norm() < 1e-14);
        assert!(f.re.abs() < 1e-14);
    }

    #[test]
    fn f_is_stationary_at_the_solution() {
        let law = tanh_weight_law(201);
        let alpha = 2.0;
        let h = 1e-6;
        for t in [-0.4, 0.0, 0.3, 1.0] {
            let z = Complex64::new(t, 1e-4);
            let p = solve_stieltjes(&law, alpha, z).unwrap();
            let dre = (f_value(&law, alpha, z, p.g + h).unwrap()
                - f_value(&law, alpha, z, p.g - h).unwrap())
                / (2.0 * h);
            let dim = (f_value(&law, alpha, z, p.g + Complex64::new(0.0, h)).unwrap()
                - f_value(&law, alpha, z, p.g - Complex64::new(0.0, h)).unwrap())
                / (2.0 * h * Complex64::i());
            assert!(dre.norm() < 1e-8, "t={t}: dF/dg = {dre}");
            assert!(dim.norm() < 1e-8, "t={t}: dF/dg (imag dir) = {dim}");
        }
    }

    #[test]
    fn log_potential_of_point_mass() {
        let u = log_potential(&delta(0.0), 2.0, 2.0).unwrap();
        assert!((u.value - 2.0f64.ln()).abs() < 1e-6);
        assert!(matches!(
            log_potential(&delta(0.0), 2.0, 0.0),
            Err(Error::SingularPoint { .. })
        ));
    }

    #[test]
    fn log_potential_matches_direct_mp_integration() {
        let alpha = 2.0;
        let law = delta(1.0);
        for t in [-0.5, 3.5, 5.0] {
            let u = log_potential(&law, alpha, t).unwrap();
            let oracle = marchenko_pastur::log_potential(alpha, 1.0, t, 400_000);
            assert!(
                (u.value - oracle).abs() < 1e-4,
                "t={t}: {} vs {}",
                u.value,
                oracle
            );
        }
    }

    #[test]
    fn density_curve_against_mp_and_poisson_kernel() {
        let alpha = 2.0;
        let (lo, hi) = marchenko_pastur::edges(alpha, 1.0);

        // MP bulk interior at eps = 1e-6
        let margin = 0.05 * (hi - lo);
        let t_grid: Vec<f64> = (0..400)
            .map(|i| lo + margin + (hi - lo - 2.0 * margin) * i as f64 / 399.0)
            .collect();
        let sol = density_curve(&delta(1.0), alpha, &t_grid, 1e-6).unwrap();
        assert!(sol.failures.is_empty());
        let mut sup = 0.0f64;
        for (i, &t) in t_grid.iter().enumerate() {
            sup = sup.max((sol.density[i] - marchenko_pastur::density(alpha, 1.0, t)).abs());
        }
        assert!(sup <= 1e-3, "sup-norm {sup}");

        // point mass: Poisson kernel
        let eps = 1e-3;
        let t_grid: Vec<f64> = (0..201).map(|i| -1.0 + i as f64 / 100.0).collect();
        let sol = density_curve(&delta(0.0), alpha, &t_grid, eps).unwrap();
        for (i, &t) in t_grid.iter().enumerate() {
            let kernel = eps / (std::f64::consts::PI * (t * t + eps * eps));
            assert!((sol.density[i] - kernel).abs() < 1e-6 / (t * t + eps * eps));
        }
        assert!((sol.atom_at_zero - 1.0).abs() < 1e-3);
    }

    #[test]
    fn tanh_density_mass_in_window() {
        let law = tanh_weight_law(201);
        let t_grid: Vec<f64> = (0..1201).map(|i| -2.0 + 4.0 * i as f64 / 1200.0).collect();
        let sol = density_curve(&law, 2.0, &t_grid, 1e-6).unwrap();
        assert!(sol.failures.is_empty());
        assert!(
            sol.bulk_mass + sol.atom_at_zero >= 0.95 && sol.bulk_mass + sol.atom_at_zero <= 1.02,
            "mass {} atom {}",
            sol.bulk_mass,
            sol.atom_at_zero
        );
        for p in &sol.points {
            assert!(p.g.im > 0.0);
        }
    }

    #[test]
    fn tail_behaviour_at_large_imaginary_z() {
        let law = tanh_weight_law(201);
        let z = Complex64::new(0.0, 1e6);
        let p = solve_stieltjes(&law, 2.0, z).unwrap();
        assert!((z * p.g + 1.0).norm() <= 1e-6);
    }

    #[test]
    fn two_log_potential_routes_agree_outside_bulk() {
        // Re F route vs direct density integration plus atom correction.
        let law = tanh_weight_law(151);
        let alpha = 2.0;
        let t_grid: Vec<f64> = (0..2001).map(|i| -2.0 + 4.0 * i as f64 / 2000.0).collect();
        let sol = density_curve(&law, alpha, &t_grid, 1e-6).unwrap();
        for t in [1.9003f64, -1.9003, 3.0007] {
            let re_f_route = log_potential(&law, alpha, t).unwrap().value;
            let mut direct = 0.0;
            for i in 1..t_grid.len() {
                let f0 = sol.density[i - 1] * (t_grid[i - 1] - t).abs().ln();
                let f1 = sol.density[i] * (t_grid[i] - t).abs().ln();
                direct += 0.5 * (f0 + f1) * (t_grid[i] - t_grid[i - 1]);
            }
            direct += sol.atom_at_zero * t.abs().ln();
            // normalise the bulk to its own mass
            direct *= (1.0 - sol.atom_at_zero) / sol.bulk_mass;
            assert!(
                (re_f_route - direct).abs() < 1e-3,
                "t={t}: ReF {} vs direct {}",
                re_f_route,
                direct
            );
        }
    }

    #[test]
    fn warm_sweep_equals_cold_solves() {
        let law = tanh_weight_law(101);
        let t_grid: Vec<f64> = (0..101).map(|i| -1.5 + 3.0 * i as f64 / 100.0).collect();
        let sol = density_curve(&law, 2.0, &t_grid, 1e-5).unwrap();
        for i in [0usize, 17, 50, 83, 100] {
            let cold = solve_stieltjes(&law, 2.0, Complex64::new(t_grid[i], 1e-5)).unwrap();
            assert!(
                (cold.g - sol.points[i].g).norm() < 1e-10,
                "i={i}: {} vs {}",
                cold.g,
                sol.points[i].g
            );
        }
    }

    #[test]
    fn scaled_mp_oracle_for_half_square() {
        // phi'' = 1 for half_square: same as delta(1.0); also check a scale.
        let alpha = 3.0;
        let law = delta(0.5);
        let z = Complex64::new(0.8, 1e-5);
        let p = solve_stieltjes(&law, alpha, z).unwrap();
        let oracle = marchenko_pastur::stieltjes(alpha, 0.5, z);
        assert!((p.g - oracle).norm() < 1e-8);
    }
}
