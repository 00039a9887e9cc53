//! Ground-truth cluster quantities.
//!
//! Linear and max-moving averages have a deterministic alpha-cluster
//! `Q_t = |phi_t| / ||phi||_alpha`, which gives closed forms for the
//! extremal index, `c(p)` and the cluster-size probabilities. The Kesten
//! recursion has a random cluster built from products of iid multipliers;
//! its statistics are computed by Monte Carlo over samples of that cluster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blocks::{lp_modulus, PExponent};
use crate::error::{Error, Result};
use crate::estimators::{ClusterFunctional, FunctionalKind};
use crate::exec::{map_indexed, Execution};
use crate::models::{GaussianShift, ModelSpec, ParetoTail};

/// Geometric filters are cut once `|phi|^t` drops below this.
pub const AR1_FILTER_CUTOFF: f64 = 1e-16;
/// Default truncation of the Kesten multiplicative walks.
pub const DEFAULT_HORIZON_EPS: f64 = 1e-8;
/// Hard cap on lags per side of a Kesten cluster sample.
pub const MAX_LAGS: usize = 10_000;

/// Closed-form cluster statistics of a deterministic filter.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClusterOracle {
    coeffs: Vec<f64>,
    alpha: f64,
    /// `|phi_t|^alpha / sum |phi|^alpha`, sorted descending.
    weights_desc: Vec<f64>,
}

impl LinearClusterOracle {
    pub fn new(coeffs: &[f64], alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::param("alpha", "must be > 0"));
        }
        let total: f64 = coeffs.iter().map(|c| c.abs().powf(alpha)).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::param("coeffs", "filter must be nonzero and finite"));
        }
        let mut weights_desc: Vec<f64> = coeffs.iter().map(|c| c.abs().powf(alpha) / total).collect();
        weights_desc.sort_by(|a, b| b.total_cmp(a));
        Ok(LinearClusterOracle {
            coeffs: coeffs.to_vec(),
            alpha,
            weights_desc,
        })
    }

    /// The AR(1) filter `(1, phi, phi^2, ...)`, truncated at [`AR1_FILTER_CUTOFF`].
    pub fn ar1(phi: f64, alpha: f64) -> Result<Self> {
        Self::new(&ar1_filter(phi)?, alpha)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `max |phi|^alpha / sum |phi|^alpha`.
    pub fn theta(&self) -> f64 {
        self.weights_desc[0]
    }

    /// `||phi||_p^alpha / ||phi||_alpha^alpha`.
    pub fn cp(&self, p: PExponent) -> f64 {
        let a = PExponent::Finite(self.alpha);
        (lp_modulus(&self.coeffs, p) / lp_modulus(&self.coeffs, a)).powf(self.alpha)
    }

    /// `pi_j = w_(j) - w_(j+1)`, with `w` zero beyond the filter length.
    pub fn pi(&self, j: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        let w = |i: usize| self.weights_desc.get(i - 1).copied().unwrap_or(0.0);
        w(j) - w(j + 1)
    }

    /// The deterministic cluster `Q_t = |phi_t| / ||phi||_alpha`.
    pub fn cluster(&self) -> Vec<f64> {
        let norm = lp_modulus(&self.coeffs, PExponent::Finite(self.alpha));
        self.coeffs.iter().map(|c| c.abs() / norm).collect()
    }

    /// Truth for a built-in functional (`f(Q)`, since `Q` is deterministic).
    pub fn statistic(&self, f: &ClusterFunctional) -> f64 {
        match f.kind {
            FunctionalKind::ExtremalIndex => self.theta(),
            FunctionalKind::SumIndex => self.cp(PExponent::Finite(1.0)),
            FunctionalKind::ClusterSize(j) => self.pi(j),
            FunctionalKind::ConstantOne => 1.0,
            FunctionalKind::Custom(_) => f.eval(&self.cluster()),
        }
    }
}

pub fn ar1_filter(phi: f64) -> Result<Vec<f64>> {
    if !(phi.abs() < 1.0) {
        return Err(Error::param("phi", format!("need |phi| < 1, got {phi}")));
    }
    let mut out = vec![1.0];
    let mut c: f64 = 1.0;
    loop {
        c *= phi;
        if c.abs() < AR1_FILTER_CUTOFF {
            break;
        }
        out.push(c);
    }
    Ok(out)
}

pub fn oracle_linear_theta(coeffs: &[f64], alpha: f64) -> Result<f64> {
    Ok(LinearClusterOracle::new(coeffs, alpha)?.theta())
}

pub fn oracle_linear_cp(coeffs: &[f64], alpha: f64, p: PExponent) -> Result<f64> {
    Ok(LinearClusterOracle::new(coeffs, alpha)?.cp(p))
}

pub fn oracle_linear_pi(coeffs: &[f64], alpha: f64, j: usize) -> Result<f64> {
    Ok(LinearClusterOracle::new(coeffs, alpha)?.pi(j))
}

/// The deterministic filter of a model, if it has one. IID models map to `(1)`.
pub fn linear_filter(model: &ModelSpec) -> Option<Vec<f64>> {
    match model {
        ModelSpec::IidPareto { .. } | ModelSpec::IidStudentAbs { .. } => Some(vec![1.0]),
        ModelSpec::LinearMa { coeffs, .. } | ModelSpec::MaxMa { coeffs, .. } => Some(coeffs.clone()),
        ModelSpec::Ar1 { phi, .. } => ar1_filter(*phi).ok(),
        ModelSpec::KestenSre { .. } => None,
    }
}

/// One draw of the alpha-cluster together with an independent Pareto scale.
#[derive(Debug, Clone, PartialEq)]
pub struct QSample {
    /// `Q_t` in time order; `sum Q_t^alpha = 1`.
    pub weights: Vec<f64>,
    /// Position of `t = 0` in `weights`.
    pub origin: usize,
    pub pareto_y: f64,
}

impl QSample {
    /// `Y Q`.
    pub fn scaled(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w * self.pareto_y).collect()
    }
}

/// Builds a cluster sample from iid multipliers: `Pi_0 = 1` and on each side
/// `Pi_{+-t} = A_1 ... A_t` from an independent walk. A side stops once its
/// running product falls below `horizon_eps` or after [`MAX_LAGS`] steps.
pub fn sample_q_from_multipliers<R, F>(
    mut draw_a: F,
    alpha: f64,
    horizon_eps: f64,
    rng: &mut R,
) -> Result<QSample>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> f64,
{
    if !(horizon_eps > 0.0) {
        return Err(Error::param("horizon_eps", "must be > 0"));
    }
    let mut walk = |rng: &mut R| {
        let mut side = Vec::new();
        let mut prod = 1.0;
        for _ in 0..MAX_LAGS {
            prod *= draw_a(rng);
            if prod < horizon_eps {
                break;
            }
            side.push(prod);
        }
        side
    };
    let forward = walk(rng);
    let backward = walk(rng);
    let origin = backward.len();
    let mut weights: Vec<f64> = backward.into_iter().rev().collect();
    weights.push(1.0);
    weights.extend(forward);
    let norm = lp_modulus(&weights, PExponent::Finite(alpha));
    for w in &mut weights {
        *w /= norm;
    }
    let pareto_y = ParetoTail::new(alpha)?.sample(rng);
    Ok(QSample {
        weights,
        origin,
        pareto_y,
    })
}

/// Cluster sample of the Kesten model with `log A ~ N(mu, sigma^2)`.
pub fn sample_kesten_q<R: Rng + ?Sized>(
    log_a: &GaussianShift,
    horizon_eps: f64,
    rng: &mut R,
) -> Result<QSample> {
    if !(log_a.mu < 0.0) {
        return Err(Error::NonContracting { mean_log: log_a.mu });
    }
    let (mu, sigma) = (log_a.mu, log_a.sigma);
    sample_q_from_multipliers(
        |r: &mut R| {
            let g: f64 = r.sample(StandardNormal);
            (mu + sigma * g).exp()
        },
        log_a.tail_index(),
        horizon_eps,
        rng,
    )
}

/// Monte Carlo estimate of a cluster statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub mc_stderr: f64,
    /// Sample variance of the functional, i.e. the limiting variance of
    /// `sqrt(k)` times the blocks estimator.
    pub variance: f64,
    pub reps: usize,
}

const ORACLE_CHUNK: usize = 1000;

/// `E[f(Y Q)]` for the Kesten model by Monte Carlo over `reps` cluster samples.
///
/// Samples are drawn in chunks of [`ORACLE_CHUNK`], each from its own ChaCha
/// stream, and the chunk sums are reduced in chunk order, so the result does
/// not depend on the thread count.
pub fn oracle_kesten_statistic(
    model: &ModelSpec,
    f: &ClusterFunctional,
    reps: usize,
    horizon_eps: f64,
    seed: u64,
    exec: Execution,
) -> Result<McEstimate> {
    let ModelSpec::KestenSre { log_a, .. } = model else {
        return Err(Error::param("model", "Kesten oracle needs a kesten_sre model"));
    };
    if reps < 100 {
        return Err(Error::param("reps", "Kesten oracle needs at least 100 samples"));
    }
    model.validate()?;
    let chunks = reps.div_ceil(ORACLE_CHUNK);
    let partial: Vec<Result<(f64, f64)>> = map_indexed(chunks, exec, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let len = ORACLE_CHUNK.min(reps - c * ORACLE_CHUNK);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..len {
            let q = sample_kesten_q(log_a, horizon_eps, &mut rng)?;
            let v = if f.is_scale_invariant() {
                f.eval(&q.weights)
            } else {
                f.eval(&q.scaled())
            };
            s1 += v;
            s2 += v * v;
        }
        Ok((s1, s2))
    });
    let (mut s1, mut s2) = (0.0, 0.0);
    for p in partial {
        let (a, b) = p?;
        s1 += a;
        s2 += b;
    }
    let n = reps as f64;
    let mean = s1 / n;
    let variance = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        mc_stderr: (variance / n).sqrt(),
        variance,
        reps,
    })
}

/// A truth value with a short description of where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    /// Limiting variance of `f(Y Q)`; zero for deterministic clusters.
    pub variance: f64,
    pub mc_stderr: Option<f64>,
    pub provenance: String,
}

/// Options for computing Monte Carlo truths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub reps: usize,
    pub horizon_eps: f64,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            reps: 10_000,
            horizon_eps: DEFAULT_HORIZON_EPS,
            seed: 0x5EED_0AC1E,
        }
    }
}

/// Truth of `f` under `model`: closed form for filters, Monte Carlo for Kesten.
pub fn model_truth(
    model: &ModelSpec,
    f: &ClusterFunctional,
    opts: &OracleOptions,
    exec: Execution,
) -> Result<OracleValue> {
    model.validate()?;
    if let Some(filter) = linear_filter(model) {
        let oracle = LinearClusterOracle::new(&filter, model.tail_index())?;
        let name = match model {
            ModelSpec::Ar1 { .. } => "ar1_filter",
            ModelSpec::IidPareto { .. } | ModelSpec::IidStudentAbs { .. } => "iid",
            _ => "linear_filter",
        };
        return Ok(OracleValue {
            value: oracle.statistic(f),
            variance: 0.0,
            mc_stderr: None,
            provenance: format!("oracle:{name}"),
        });
    }
    let est = oracle_kesten_statistic(model, f, opts.reps, opts.horizon_eps, opts.seed, exec)?;
    Ok(OracleValue {
        value: est.mean,
        variance: est.variance,
        mc_stderr: Some(est.mc_stderr),
        provenance: format!("oracle:kesten_mc(reps={},seed={})", opts.reps, opts.seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_theta_examples() {
        assert_eq!(oracle_linear_theta(&[1.0], 0.7).unwrap(), 1.0);
        assert_eq!(oracle_linear_theta(&[1.0, 0.5], 1.0).unwrap(), 1.0 / 1.5);
        let ar = LinearClusterOracle::ar1(0.5, 1.0).unwrap();
        assert!((ar.theta() - 0.5).abs() < 1e-15);
        assert!(oracle_linear_theta(&[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn linear_cp_examples() {
        let inf = PExponent::Infinity;
        for alpha in [0.5, 1.0, 1.7] {
            let c = oracle_linear_cp(&[1.0, -0.3, 0.8], alpha, PExponent::Finite(alpha)).unwrap();
            assert!((c - 1.0).abs() < 1e-15);
        }
        let c = oracle_linear_cp(&[1.0, 0.5], 2.0, PExponent::Finite(1.0)).unwrap();
        assert!((c - 1.8).abs() < 1e-15, "{c}");
        let c = oracle_linear_cp(&[1.0, 0.5], 1.0, inf).unwrap();
        assert_eq!(c, oracle_linear_theta(&[1.0, 0.5], 1.0).unwrap());
    }

    #[test]
    fn linear_pi_examples() {
        let o = LinearClusterOracle::new(&[1.0, 0.5], 1.0).unwrap();
        assert!((o.pi(1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((o.pi(2) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(o.pi(3), 0.0);
        let iid = LinearClusterOracle::new(&[1.0], 2.0).unwrap();
        assert_eq!((iid.pi(1), iid.pi(2)), (1.0, 0.0));
    }

    #[test]
    fn degenerate_multiplier_gives_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = sample_q_from_multipliers(|_: &mut ChaCha8Rng| 0.0, 1.0, 1e-8, &mut rng).unwrap();
        assert_eq!(q.weights, vec![1.0]);
        assert_eq!(q.origin, 0);
        assert!(q.pareto_y >= 1.0);
    }

    #[test]
    fn kesten_q_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let log_a = GaussianShift::default();
        for _ in 0..2000 {
            let q = sample_kesten_q(&log_a, DEFAULT_HORIZON_EPS, &mut rng).unwrap();
            let s: f64 = q.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
            assert!(q.weights.iter().all(|&w| (0.0..=1.0).contains(&w)));
        }
        let q = sample_kesten_q(&GaussianShift { mu: -0.3, sigma: 0.8 }, 1e-8, &mut rng).unwrap();
        let alpha = GaussianShift { mu: -0.3, sigma: 0.8 }.tail_index();
        let s: f64 = q.weights.iter().map(|w| w.powf(alpha)).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn non_contracting_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_kesten_q(&GaussianShift { mu: 0.2, sigma: 1.0 }, 1e-8, &mut rng);
        assert_eq!(err, Err(Error::NonContracting { mean_log: 0.2 }));
    }

    #[test]
    fn constant_functional_oracle_is_one() {
        let f = ClusterFunctional::new(FunctionalKind::ConstantOne, 1.0);
        let m = ModelSpec::kesten_reference();
        let est = oracle_kesten_statistic(&m, &f, 500, 1e-8, 3, Execution::Sequential).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.variance, 0.0);
    }

    #[test]
    fn model_truth_for_filters() {
        let f = ClusterFunctional::extremal_index(1.0);
        let opts = OracleOptions::default();
        let ar = ModelSpec::Ar1 { phi: 0.7, alpha: 1.0 };
        let v = model_truth(&ar, &f, &opts, Execution::Sequential).unwrap();
        assert!((v.value - 0.3).abs() < 1e-12);
        assert_eq!(v.provenance, "oracle:ar1_filter");
        let iid = ModelSpec::IidPareto { alpha: 1.0 };
        assert_eq!(model_truth(&iid, &f, &opts, Execution::Sequential).unwrap().value, 1.0);
    }
}
