//! Activation functions with analytic first and second derivatives.
//!
//! Every builtin carries closed-form `d1`/`d2` and, where it exists, the
//! supremum of |phi''| over the real line. The smoothed leaky ReLU is the
//! softplus blend `a*x + (1-a)*beta*ln(1+exp(x/beta))`.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Tanh,
    Atan,
    Sigmoid,
    SmoothedLeakyRelu { leak: f64, beta: f64 },
    Linear,
    HalfSquare,
    Square,
}

/// A scalar activation with analytic derivatives.
#[derive(Debug, Clone)]
pub struct Activation {
    name: String,
    kind: Kind,
    parameters: Vec<(String, f64)>,
    d2_bound: Option<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow for large |x|.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Activation {
    /// Builds one of the named activations.
    ///
    /// Recognised names: `tanh`, `atan`, `sigmoid`, `smoothed_leaky_relu`
    /// (requires `leak` in (0,1) and `beta` > 0), `linear`, `half_square`,
    /// `square`.
    pub fn builtin(name: &str, parameters: &HashMap<String, f64>) -> Result<Activation> {
        let check_no_params = || -> Result<()> {
            if parameters.is_empty() {
                Ok(())
            } else {
                Err(Error::BadActivationParameter(format!(
                    "`{name}` takes no parameters"
                )))
            }
        };
        let (kind, params, d2_bound) = match name {
            "tanh" => {
                check_no_params()?;
                // sup |tanh''| attained at tanh = 1/sqrt(3)
                (Kind::Tanh, vec![], Some(4.0 / (3.0 * 3.0f64.sqrt())))
            }
            "atan" => {
                check_no_params()?;
                (Kind::Atan, vec![], Some(3.0 * 3.0f64.sqrt() / 8.0))
            }
            "sigmoid" => {
                check_no_params()?;
                (Kind::Sigmoid, vec![], Some(1.0 / (6.0 * 3.0f64.sqrt())))
            }
            "smoothed_leaky_relu" => {
                let leak = *parameters.get("leak").ok_or_else(|| {
                    Error::BadActivationParameter("smoothed_leaky_relu needs `leak`".into())
                })?;
                let beta = *parameters.get("beta").ok_or_else(|| {
                    Error::BadActivationParameter("smoothed_leaky_relu needs `beta`".into())
                })?;
                if !(0.0 < leak && leak < 1.0) {
                    return Err(Error::BadActivationParameter(format!(
                        "leak must lie in (0,1), got {leak}"
                    )));
                }
                if !(beta > 0.0) {
                    return Err(Error::BadActivationParameter(format!(
                        "beta must be positive, got {beta}"
                    )));
                }
                if parameters.len() > 2 {
                    return Err(Error::BadActivationParameter(
                        "smoothed_leaky_relu takes only `leak` and `beta`".into(),
                    ));
                }
                (
                    Kind::SmoothedLeakyRelu { leak, beta },
                    vec![("leak".to_string(), leak), ("beta".to_string(), beta)],
                    Some((1.0 - leak) / (4.0 * beta)),
                )
            }
            "linear" => {
                check_no_params()?;
                (Kind::Linear, vec![], Some(0.0))
            }
            "half_square" => {
                check_no_params()?;
                (Kind::HalfSquare, vec![], Some(1.0))
            }
            "square" => {
                check_no_params()?;
                (Kind::Square, vec![], Some(2.0))
            }
            other => return Err(Error::UnknownActivation(other.to_string())),
        };
        Ok(Activation {
            name: name.to_string(),
            kind,
            parameters: params,
            d2_bound,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parameters(&self) -> &[(String, f64)] {
        &self.parameters
    }

    /// Supremum of |phi''| over the real line, when finite.
    pub fn d2_bound(&self) -> Option<f64> {
        self.d2_bound
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            Kind::Tanh => x.tanh(),
            Kind::Atan => x.atan(),
            Kind::Sigmoid => sigmoid(x),
            Kind::SmoothedLeakyRelu { leak, beta } => {
                leak * x + (1.0 - leak) * beta * softplus(x / beta)
            }
            Kind::Linear => x,
            Kind::HalfSquare => 0.5 * x * x,
            Kind::Square => x * x,
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match self.kind {
            Kind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Kind::Atan => 1.0 / (1.0 + x * x),
            Kind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Kind::SmoothedLeakyRelu { leak, beta } => leak + (1.0 - leak) * sigmoid(x / beta),
            Kind::Linear => 1.0,
            Kind::HalfSquare => x,
            Kind::Square => 2.0 * x,
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self.kind {
            Kind::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Kind::Atan => {
                let d = 1.0 + x * x;
                -2.0 * x / (d * d)
            }
            Kind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Kind::SmoothedLeakyRelu { leak, beta } => {
                let s = sigmoid(x / beta);
                (1.0 - leak) / beta * s * (1.0 - s)
            }
            Kind::Linear => 0.0,
            Kind::HalfSquare => 1.0,
            Kind::Square => 2.0,
        }
    }
}

/// Outcome of the gradient-density hypothesis check.
#[derive(Debug, Clone, Copy)]
pub struct WellBehavedReport {
    /// Kernel-density estimate of the law of phi'(y), y ~ N(0,1), at a = 0.
    pub density_estimate_at_zero: f64,
    /// True when the sampled law of phi'(y) looks atomic.
    pub flagged: bool,
}

/// Samples phi'(y) for Gaussian y and looks for atom-like spikes.
///
/// Two symptoms are flagged: mass above 0.01 inside a single bin of width
/// 1e-4 within [-0.1, 0.1], and exactly repeated values carrying more than
/// 1% of the sample anywhere on the line (a degenerate law such as
/// phi' = const). This is a warning, not an error.
pub fn well_behaved_diagnostic(
    phi: &Activation,
    samples: usize,
    seed: u64,
) -> Result<WellBehavedReport> {
    if samples < 10_000 {
        return Err(Error::Invalid(format!(
            "well_behaved_diagnostic needs at least 1e4 samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(samples);
    for _ in 0..samples {
        let y: f64 = StandardNormal.sample(&mut rng);
        values.push(phi.d1(y));
    }

    // Histogram of [-0.1, 0.1] in bins of width 1e-4.
    const BIN: f64 = 1e-4;
    let nbins = (0.2 / BIN).round() as usize;
    let mut hist = vec![0usize; nbins];
    for &a in &values {
        if (-0.1..0.1).contains(&a) {
            let idx = ((a + 0.1) / BIN) as usize;
            hist[idx.min(nbins - 1)] += 1;
        }
    }
    let spike_limit = (0.01 * samples as f64) as usize;
    let window_spike = hist.iter().any(|&c| c > spike_limit);

    // Exactly repeated values betray an atom regardless of its location.
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut max_run = 1usize;
    let mut run = 1usize;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
            max_run = max_run.max(run);
        } else {
            run = 1;
        }
    }
    let degenerate = max_run > spike_limit;

    // Gaussian KDE at a = 0 with Silverman bandwidth.
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let bw = (1.06 * var.sqrt() * n.powf(-0.2)).max(1e-6);
    let density_estimate_at_zero = values
        .iter()
        .map(|&a| {
            let u = a / bw;
            (-0.5 * u * u).exp()
        })
        .sum::<f64>()
        / (n * bw * (2.0 * std::f64::consts::PI).sqrt());

    Ok(WellBehavedReport {
        density_estimate_at_zero,
        flagged: window_spike || degenerate,
    })
}
