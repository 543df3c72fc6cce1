//! Discrete probability measures on R and R^2.
//!
//! Everything downstream (spectral solves, Gibbs fixed points, replica
//! integrals) consumes measures in this weighted-node form: Gauss-Hermite
//! grids for the standard Gaussian, empirical atom clouds from samples, and
//! exponential tilts of the grid ("Gibbs" measures). Quadrature nodes and
//! weights come from the Golub-Welsch eigenproblem with a Newton polish on
//! the orthonormal Hermite recurrence.

use crate::activations::Activation;
use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub const GH_MIN: usize = 2;
pub const GH_MAX: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    Quadrature,
    Empirical,
    Gibbs,
}

/// A probability measure represented by weighted nodes.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    dim: usize,
    /// Flattened nodes, `len * dim` entries.
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: MeasureKind,
}

/// Normalisation and entropy bookkeeping of a Gibbs tilt.
#[derive(Debug, Clone, Copy)]
pub struct TiltReport {
    /// ln of the partition integral of e^{log_weight} against the base grid.
    pub log_partition: f64,
    /// Relative entropy H(tilted | base Gaussian) >= 0.
    pub entropy_rel_gauss: f64,
}

/// Orthonormal (probabilists') Hermite value and the previous one, for
/// Newton refinement of quadrature nodes.
fn hermite_orthonormal(k: usize, x: f64) -> (f64, f64) {
    let mut pm = 0.0f64; // p_{-1}
    let mut p = 1.0f64; // p_0
    for n in 0..k {
        let next = (x * p - (n as f64).sqrt() * pm) / ((n + 1) as f64).sqrt();
        pm = p;
        p = next;
    }
    (p, pm)
}

/// Nodes and weights of the k-point Gauss-Hermite rule for N(0,1).
fn gauss_hermite_rule(k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(GH_MIN..=GH_MAX).contains(&k) {
        return Err(Error::QuadratureOrder(k));
    }
    // Jacobi matrix of the probabilists' Hermite recurrence.
    let mut jac = DMatrix::<f64>::zeros(k, k);
    for i in 1..k {
        let b = (i as f64).sqrt();
        jac[(i - 1, i)] = b;
        jac[(i, i - 1)] = b;
    }
    let mut nodes: Vec<f64> = jac.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Newton polish on the orthonormal recurrence.
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, pm) = hermite_orthonormal(k, *x);
            let dp = (k as f64).sqrt() * pm;
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            *x -= step;
            if step.abs() < 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
    }

    // Enforce exact +/- symmetry of the node set.
    for i in 0..k / 2 {
        let s = 0.5 * (nodes[k - 1 - i] - nodes[i]);
        nodes[k - 1 - i] = s;
        nodes[i] = -s;
    }
    if k % 2 == 1 {
        nodes[k / 2] = 0.0;
    }

    // Christoffel weights: w_j = 1 / sum_i p_i(x_j)^2.
    let mut weights = vec![0.0f64; k];
    for (j, &x) in nodes.iter().enumerate() {
        let mut pm = 0.0f64;
        let mut p = 1.0f64;
        let mut sum = 1.0f64; // p_0^2
        for n in 0..k - 1 {
            let next = (x * p - (n as f64).sqrt() * pm) / ((n + 1) as f64).sqrt();
            pm = p;
            p = next;
            sum += p * p;
        }
        weights[j] = 1.0 / sum;
    }
    // Mirror weights exactly and renormalise.
    for i in 0..k / 2 {
        let w = 0.5 * (weights[i] + weights[k - 1 - i]);
        weights[i] = w;
        weights[k - 1 - i] = w;
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok((nodes, weights))
}

impl DiscreteMeasure {
    /// k-node Gauss-Hermite discretisation of the standard Gaussian on R.
    pub fn gauss_hermite(k: usize) -> Result<Self> {
        let (nodes, weights) = gauss_hermite_rule(k)?;
        Ok(DiscreteMeasure {
            dim: 1,
            nodes,
            weights,
            kind: MeasureKind::Quadrature,
        })
    }

    /// Uniform-node trapezoid discretisation of the standard Gaussian on
    /// [-halfwidth, halfwidth].
    ///
    /// For integrands that are smooth on the line but have complex
    /// singularities close to the real axis (such as ln|alpha + phi'' g| at
    /// large |g|), the trapezoid rule converges like exp(-2 pi d / h) and
    /// beats Gauss-Hermite by many digits at equal node counts. The solvers
    /// use this grid internally.
    pub fn uniform_gaussian(n: usize, halfwidth: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::QuadratureOrder(n));
        }
        if !(halfwidth > 1.0) {
            return Err(Error::Invalid("halfwidth must exceed 1".into()));
        }
        let n = if n % 2 == 0 { n + 1 } else { n };
        let h = 2.0 * halfwidth / (n - 1) as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let half = (n - 1) / 2;
        for i in 0..n {
            // symmetric construction around zero
            let x = (i as f64 - half as f64) * h;
            nodes.push(x);
            let trap = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            weights.push(trap * (-0.5 * x * x).exp());
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(DiscreteMeasure {
            dim: 1,
            nodes,
            weights,
            kind: MeasureKind::Quadrature,
        })
    }

    /// Tensor-product k x k Gauss-Hermite grid for the standard Gaussian on R^2.
    pub fn gauss_hermite_2d(k: usize) -> Result<Self> {
        let (n1, w1) = gauss_hermite_rule(k)?;
        let mut nodes = Vec::with_capacity(2 * k * k);
        let mut weights = Vec::with_capacity(k * k);
        for (i, &x) in n1.iter().enumerate() {
            for (j, &y) in n1.iter().enumerate() {
                nodes.push(x);
                nodes.push(y);
                weights.push(w1[i] * w1[j]);
            }
        }
        Ok(DiscreteMeasure {
            dim: 2,
            nodes,
            weights,
            kind: MeasureKind::Quadrature,
        })
    }

    /// Uniform empirical measure on 1D samples.
    pub fn empirical(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("empirical samples"));
        }
        let w = 1.0 / samples.len() as f64;
        Ok(DiscreteMeasure {
            dim: 1,
            nodes: samples.to_vec(),
            weights: vec![w; samples.len()],
            kind: MeasureKind::Empirical,
        })
    }

    /// Uniform empirical measure on 2D samples.
    pub fn empirical_2d(samples: &[[f64; 2]]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let mut nodes = Vec::with_capacity(2 * samples.len());
        for s in samples {
            if !s[0].is_finite() || !s[1].is_finite() {
                return Err(Error::NonFinite("empirical samples"));
            }
            nodes.push(s[0]);
            nodes.push(s[1]);
        }
        let w = 1.0 / samples.len() as f64;
        Ok(DiscreteMeasure {
            dim: 2,
            nodes,
            weights: vec![w; samples.len()],
            kind: MeasureKind::Empirical,
        })
    }

    /// Builds a measure from explicit nodes and weights (weights need not be
    /// normalised; they are rescaled to sum to one).
    pub fn from_weighted_nodes(dim: usize, nodes: Vec<f64>, mut weights: Vec<f64>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Dimension { want: 1, got: dim });
        }
        if weights.is_empty() || nodes.len() != dim * weights.len() {
            return Err(Error::Invalid(
                "node/weight lengths do not match the dimension".into(),
            ));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("nodes"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::DegenerateMeasure("weights must be nonnegative with positive sum"));
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(DiscreteMeasure {
            dim,
            nodes,
            weights,
            kind: MeasureKind::Empirical,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.dim..(j + 1) * self.dim]
    }

    /// The raw node array when the measure lives on R.
    pub fn nodes_1d(&self) -> Result<&[f64]> {
        if self.dim != 1 {
            return Err(Error::Dimension {
                want: 1,
                got: self.dim,
            });
        }
        Ok(&self.nodes)
    }

    /// Weighted sum of `f` over the nodes.
    pub fn expectation(&self, mut f: impl FnMut(&[f64]) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for j in 0..self.len() {
            let v = f(self.node(j));
            if !v.is_finite() {
                return Err(Error::NonFinite("integrand"));
            }
            acc += self.weights[j] * v;
        }
        Ok(acc)
    }

    /// t_phi = E[x phi'(x)] for a measure on R.
    pub fn t_phi(&self, phi: &Activation) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::Dimension {
                want: 1,
                got: self.dim,
            });
        }
        self.expectation(|x| x[0] * phi.d1(x[0]))
    }

    /// E_phi = ln E[phi'(x)^2] for a measure on R.
    pub fn e_phi(&self, phi: &Activation) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::Dimension {
                want: 1,
                got: self.dim,
            });
        }
        let m = self.expectation(|x| {
            let d = phi.d1(x[0]);
            d * d
        })?;
        if m <= 0.0 {
            return Err(Error::DegenerateMeasure("E[phi'^2] vanishes"));
        }
        Ok(m.ln())
    }

    /// Image measure under `h`; weights carry over unchanged.
    pub fn pushforward(&self, mut h: impl FnMut(&[f64]) -> f64) -> Result<DiscreteMeasure> {
        let mut nodes = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            let v = h(self.node(j));
            if !v.is_finite() {
                return Err(Error::NonFinite("pushforward map"));
            }
            nodes.push(v);
        }
        Ok(DiscreteMeasure {
            dim: 1,
            nodes,
            weights: self.weights.clone(),
            kind: self.kind,
        })
    }

    /// Exponential tilt of a Gaussian quadrature grid.
    ///
    /// Returns the measure with weights proportional to `w_j e^{F_j}` together
    /// with `ln Z = ln \int e^F dGauss` and `H(tilt | Gauss) = E_tilt[F] - ln Z`.
    /// The maximum of F over the grid is subtracted internally, so only
    /// differences of `log_weight` values need to be representable.
    pub fn gibbs_tilt(
        &self,
        mut log_weight: impl FnMut(&[f64]) -> f64,
    ) -> Result<(DiscreteMeasure, TiltReport)> {
        if self.kind != MeasureKind::Quadrature {
            return Err(Error::Invalid(
                "gibbs_tilt requires a Gaussian quadrature base grid".into(),
            ));
        }
        let mut logw = Vec::with_capacity(self.len());
        let mut shift = f64::NEG_INFINITY;
        for j in 0..self.len() {
            let v = log_weight(self.node(j));
            if !v.is_finite() {
                return Err(Error::NonFinite("log_weight"));
            }
            shift = shift.max(v);
            logw.push(v);
        }
        let mut weights = Vec::with_capacity(self.len());
        let mut z = 0.0f64;
        for j in 0..self.len() {
            let w = self.weights[j] * (logw[j] - shift).exp();
            z += w;
            weights.push(w);
        }
        if !(z > 0.0) {
            return Err(Error::DegenerateMeasure("tilt underflowed to zero mass"));
        }
        for w in weights.iter_mut() {
            *w /= z;
        }
        let log_partition = shift + z.ln();
        let mean_f: f64 = weights
            .iter()
            .zip(logw.iter())
            .map(|(w, f)| w * f)
            .sum::<f64>();
        let mut entropy = mean_f - log_partition;
        if entropy < 0.0 {
            debug_assert!(entropy > -1e-10, "entropy fell below roundoff: {entropy}");
            entropy = 0.0;
        }
        Ok((
            DiscreteMeasure {
                dim: self.dim,
                nodes: self.nodes.clone(),
                weights,
                kind: MeasureKind::Gibbs,
            },
            TiltReport {
                log_partition,
                entropy_rel_gauss: entropy,
            },
        ))
    }

    /// H(self | base) for two measures sharing the same node set.
    ///
    /// Every positive-weight node of `self` must carry positive base weight;
    /// nodes where `self` has zero weight contribute nothing.
    pub fn relative_entropy(&self, base: &DiscreteMeasure) -> Result<f64> {
        if self.dim != base.dim || self.len() != base.len() || self.nodes != base.nodes {
            return Err(Error::Invalid(
                "relative_entropy needs matching node sets".into(),
            ));
        }
        let mut h = 0.0;
        for (p, w) in self.weights.iter().zip(base.weights.iter()) {
            if *p > 0.0 {
                if *w <= 0.0 {
                    return Err(Error::DegenerateMeasure("absolute continuity fails"));
                }
                h += p * (p / w).ln();
            }
        }
        Ok(h.max(0.0))
    }

    /// Checks the representation invariants; used by tests and loaders.
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if self.nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("nodes"));
        }
        if self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::DegenerateMeasure("negative weight"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::DegenerateMeasure("weights do not sum to one"));
        }
        Ok(())
    }
}

/// Parses a 1- or 2-column numeric CSV (comma or whitespace separated,
/// optional header, `#` comments) into an empirical measure.
pub fn parse_csv(text: &str) -> Result<DiscreteMeasure> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace() || c == ';')
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|s| s.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                if vals.is_empty() {
                    continue;
                }
                match width {
                    None => width = Some(vals.len()),
                    Some(w) if w != vals.len() => {
                        return Err(Error::Csv(format!(
                            "line {}: expected {} columns, found {}",
                            lineno + 1,
                            w,
                            vals.len()
                        )))
                    }
                    _ => {}
                }
                rows.push(vals);
            }
            Err(_) => {
                if rows.is_empty() && width.is_none() {
                    // header line
                    continue;
                }
                return Err(Error::Csv(format!("line {}: unparseable number", lineno + 1)));
            }
        }
    }
    match width {
        Some(1) => DiscreteMeasure::empirical(&rows.iter().map(|r| r[0]).collect::<Vec<_>>()),
        Some(2) => DiscreteMeasure::empirical_2d(
            &rows.iter().map(|r| [r[0], r[1]]).collect::<Vec<_>>(),
        ),
        Some(w) => Err(Error::Csv(format!("unsupported column count {w}"))),
        None => Err(Error::EmptyMeasure),
    }
}

/// Reads an empirical measure from a CSV file on disk.
pub fn load_csv(path: &std::path::Path) -> Result<DiscreteMeasure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Csv(e.to_string()))?;
    parse_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::collections::HashMap;

    fn act(name: &str) -> Activation {
        Activation::builtin(name, &HashMap::new()).unwrap()
    }

    #[test]
    fn two_point_rule_is_plus_minus_one() {
        let nu = DiscreteMeasure::gauss_hermite(2).unwrap();
        let nodes = nu.nodes_1d().unwrap();
        assert!((nodes[0] + 1.0).abs() < 1e-14);
        assert!((nodes[1] - 1.0).abs() < 1e-14);
        assert!((nu.weights()[0] - 0.5).abs() < 1e-14);
        assert!((nu.weights()[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gaussian_moments() {
        for k in [2usize, 16, 64, 128, 257, 512] {
            let nu = DiscreteMeasure::gauss_hermite(k).unwrap();
            nu.validate().unwrap();
            assert!((nu.expectation(|_| 1.0).unwrap() - 1.0).abs() < 1e-12, "k={k}");
            assert!(nu.expectation(|x| x[0]).unwrap().abs() < 1e-12, "k={k}");
            assert!(
                (nu.expectation(|x| x[0] * x[0]).unwrap() - 1.0).abs() < 1e-12,
                "k={k}"
            );
            if k >= 4 {
                assert!(
                    (nu.expectation(|x| x[0].powi(4)).unwrap() - 3.0).abs() < 1e-10,
                    "k={k}"
                );
            }
            // odd moment vanishes by node symmetry
            assert!(nu.expectation(|x| x[0].powi(3)).unwrap().abs() < 1e-13, "k={k}");
        }
        assert!(DiscreteMeasure::gauss_hermite(1).is_err());
        assert!(DiscreteMeasure::gauss_hermite(513).is_err());
    }

    #[test]
    fn tensor_grid_moments() {
        let nu = DiscreteMeasure::gauss_hermite_2d(24).unwrap();
        nu.validate().unwrap();
        assert!((nu.expectation(|p| p[0] * p[0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((nu.expectation(|p| p[1] * p[1]).unwrap() - 1.0).abs() < 1e-12);
        assert!(nu.expectation(|p| p[0] * p[1]).unwrap().abs() < 1e-13);
    }

    #[test]
    fn empirical_basics() {
        let nu = DiscreteMeasure::empirical(&[0.0]).unwrap();
        assert_eq!(nu.len(), 1);
        assert_eq!(nu.weights()[0], 1.0);

        let nu = DiscreteMeasure::empirical(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(nu.nodes_1d().unwrap(), &[1.0, 1.0, 2.0]);
        for w in nu.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(DiscreteMeasure::empirical(&[]).is_err());

        let m = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nu = DiscreteMeasure::empirical(&samples).unwrap();
        let mean = nu.expectation(|x| x[0]).unwrap();
        assert!(mean.abs() < 3.0 / (m as f64).sqrt());
    }

    #[test]
    fn gibbs_tilt_identities() {
        let base = DiscreteMeasure::gauss_hermite(64).unwrap();

        let (nu, rep) = base.gibbs_tilt(|_| 0.0).unwrap();
        assert!(rep.log_partition.abs() < 1e-13);
        assert_eq!(rep.entropy_rel_gauss, 0.0);
        assert!((nu.expectation(|x| x[0] * x[0]).unwrap() - 1.0).abs() < 1e-12);

        let (_, rep) = base.gibbs_tilt(|_| 3.25).unwrap();
        assert!((rep.log_partition - 3.25).abs() < 1e-13);
        assert_eq!(rep.entropy_rel_gauss, 0.0);

        // mean-shift tilt: N(m,1), ln Z = m^2/2, H = m^2/2
        let m = 0.5;
        let (nu, rep) = base.gibbs_tilt(|x| m * x[0]).unwrap();
        assert!((rep.log_partition - m * m / 2.0).abs() < 1e-8);
        assert!((rep.entropy_rel_gauss - m * m / 2.0).abs() < 1e-8);
        assert!((nu.expectation(|x| x[0]).unwrap() - m).abs() < 1e-8);

        // ratio-of-integrals form against a direct two-integral evaluation
        let f = |x: f64| (0.3 * x).cos();
        let logw = |x: f64| 0.4 * x - 0.1 * x * x;
        let (nu, _) = base.gibbs_tilt(|x| logw(x[0])).unwrap();
        let lhs = nu.expectation(|x| f(x[0])).unwrap();
        let num = base.expectation(|x| f(x[0]) * logw(x[0]).exp()).unwrap();
        let den = base.expectation(|x| logw(x[0]).exp()).unwrap();
        assert!((lhs - num / den).abs() < 1e-12);
    }

    #[test]
    fn tilt_entropy_nonnegative_and_zero_only_for_constants() {
        let base = DiscreteMeasure::gauss_hermite(48).unwrap();
        for c in [-2.0, 0.0, 7.5] {
            let (_, rep) = base.gibbs_tilt(|_| c).unwrap();
            assert!(rep.entropy_rel_gauss <= 1e-10);
        }
        let (_, rep) = base.gibbs_tilt(|x| 0.2 * x[0]).unwrap();
        assert!(rep.entropy_rel_gauss > 1e-3);
    }

    #[test]
    fn functionals_on_closed_forms() {
        let nu = DiscreteMeasure::gauss_hermite(128).unwrap();
        let linear = act("linear");
        let half_square = act("half_square");
        assert!(nu.t_phi(&linear).unwrap().abs() < 1e-12);
        assert!((nu.t_phi(&half_square).unwrap() - 1.0).abs() < 1e-12);
        assert!(nu.e_phi(&linear).unwrap().abs() < 1e-15);
        assert!(nu.e_phi(&half_square).unwrap().abs() < 1e-12);
    }

    #[test]
    fn t_phi_e_phi_match_monte_carlo_for_tanh() {
        // Independent oracle: 1e7-draw Monte Carlo of the same Gaussian integrals.
        let n = 10_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let tanh = act("tanh");
        let (mut s_t, mut s_t2, mut s_e, mut s_e2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for _ in 0..n {
            let y: f64 = StandardNormal.sample(&mut rng);
            let a = y * tanh.d1(y);
            let b = tanh.d1(y) * tanh.d1(y);
            s_t += a;
            s_t2 += a * a;
            s_e += b;
            s_e2 += b * b;
        }
        let nf = n as f64;
        let mc_t = s_t / nf;
        let se_t = ((s_t2 / nf - mc_t * mc_t) / nf).sqrt();
        let mc_m = s_e / nf;
        let se_m = ((s_e2 / nf - mc_m * mc_m) / nf).sqrt();

        let nu = DiscreteMeasure::gauss_hermite(128).unwrap();
        let t = nu.t_phi(&tanh).unwrap();
        let e = nu.e_phi(&tanh).unwrap();
        assert!(
            (t - mc_t).abs() < 3.0 * se_t,
            "t_phi {t} vs MC {mc_t} +- {se_t}"
        );
        // delta method for ln of the mean
        assert!(
            (e - mc_m.ln()).abs() < 3.0 * se_m / mc_m,
            "e_phi {e} vs MC {} +- {}",
            mc_m.ln(),
            se_m / mc_m
        );
    }

    #[test]
    fn pushforward_closed_forms() {
        let nu = DiscreteMeasure::gauss_hermite(64).unwrap();
        let linear = act("linear");
        let half_square = act("half_square");

        let delta0 = nu.pushforward(|x| linear.d2(x[0])).unwrap();
        assert!(delta0.nodes_1d().unwrap().iter().all(|&v| v == 0.0));
        let delta1 = nu.pushforward(|x| half_square.d2(x[0])).unwrap();
        assert!(delta1.nodes_1d().unwrap().iter().all(|&v| v == 1.0));

        // q = 1 collapse of the two-dimensional weight function
        let tanh = act("tanh");
        let nu2 = DiscreteMeasure::gauss_hermite_2d(16).unwrap();
        let fq = nu2
            .pushforward(|p| {
                let (x, y) = (p[0], p[1]);
                let q: f64 = 1.0;
                let d = tanh.eval(q * x + (1.0 - q * q).sqrt() * y) - tanh.eval(x);
                tanh.d1(x) * tanh.d1(x) - tanh.d2(x) * d
            })
            .unwrap();
        let direct = nu2
            .pushforward(|p| tanh.d1(p[0]) * tanh.d1(p[0]))
            .unwrap();
        assert_eq!(fq.nodes_1d().unwrap(), direct.nodes_1d().unwrap());
    }

    #[test]
    fn csv_parsing() {
        let nu = parse_csv("x\n1.0\n2.0\n3.0\n").unwrap();
        assert_eq!(nu.dim(), 1);
        assert_eq!(nu.len(), 3);
        let nu = parse_csv("# comment\n0.5, 1.5\n-0.5, 2.5\n").unwrap();
        assert_eq!(nu.dim(), 2);
        assert_eq!(nu.node(1), &[-0.5, 2.5]);
        assert!(parse_csv("a,b,c\n1,2,3\n").is_err());
        assert!(parse_csv("").is_err());
        assert!(parse_csv("1.0\nfoo\n").is_err());
    }

    proptest! {
        #[test]
        fn pushforward_preserves_mass(samples in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let nu = DiscreteMeasure::empirical(&samples).unwrap();
            let pf = nu.pushforward(|x| x[0].tanh() * 3.0 - 1.0).unwrap();
            let total: f64 = pf.weights().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert_eq!(pf.len(), nu.len());
        }

        #[test]
        fn tilt_entropy_nonnegative(c0 in -2.0f64..2.0, c1 in -1.0f64..1.0, c2 in -0.4f64..0.4) {
            let base = DiscreteMeasure::gauss_hermite(32).unwrap();
            let (_, rep) = base.gibbs_tilt(|x| c0 + c1 * x[0] + c2 * x[0] * x[0]).unwrap();
            prop_assert!(rep.entropy_rel_gauss >= 0.0);
        }
    }
}
