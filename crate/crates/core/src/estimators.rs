//! Disjoint-blocks estimators of cluster statistics.
//!
//! The central routine is [`estimate_cluster_statistic`]: partition the
//! sample into `m` blocks of length `b`, keep the `k` blocks whose
//! p-modulus strictly exceeds the `(k + 1)`-th largest one, and average a
//! cluster functional over them.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blocks::{lp_modulus, order_stats, partition, PExponent};
use crate::error::{Error, Result};

type CustomMap = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user-supplied shift-invariant map. It is applied to `block / threshold`.
#[derive(Clone)]
pub struct CustomFunctional {
    pub name: String,
    map: CustomMap,
}

impl CustomFunctional {
    pub fn new(name: impl Into<String>, map: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CustomFunctional {
            name: name.into(),
            map: Arc::new(map),
        }
    }
}

impl fmt::Debug for CustomFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFunctional").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum FunctionalKind {
    /// `||x||_inf^a / ||x||_a^a`
    ExtremalIndex,
    /// `||x||_1^a / ||x||_a^a`
    SumIndex,
    /// `(|x|_(j)^a - |x|_(j+1)^a) / ||x||_a^a`, order statistics of `|x|`.
    ClusterSize(usize),
    ConstantOne,
    Custom(CustomFunctional),
}

/// A cluster functional together with the tail index it uses.
#[derive(Debug, Clone)]
pub struct ClusterFunctional {
    pub kind: FunctionalKind,
    pub alpha: f64,
}

impl ClusterFunctional {
    pub fn new(kind: FunctionalKind, alpha: f64) -> Self {
        ClusterFunctional { kind, alpha }
    }

    pub fn extremal_index(alpha: f64) -> Self {
        Self::new(FunctionalKind::ExtremalIndex, alpha)
    }

    pub fn sum_index(alpha: f64) -> Self {
        Self::new(FunctionalKind::SumIndex, alpha)
    }

    pub fn cluster_size(j: usize, alpha: f64) -> Self {
        Self::new(FunctionalKind::ClusterSize(j), alpha)
    }

    /// Built-in kinds are ratios of alpha-homogeneous moduli.
    pub fn is_scale_invariant(&self) -> bool {
        !matches!(self.kind, FunctionalKind::Custom(_))
    }

    pub fn label(&self) -> String {
        match &self.kind {
            FunctionalKind::ExtremalIndex => "extremal_index".into(),
            FunctionalKind::SumIndex => "sum_index".into(),
            FunctionalKind::ClusterSize(j) => format!("cluster_size_{j}"),
            FunctionalKind::ConstantOne => "constant_one".into(),
            FunctionalKind::Custom(c) => format!("custom:{}", c.name),
        }
    }

    /// Value of the functional on `x` as given. The zero vector maps to 0.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let a = self.alpha;
        let ratio_pow = |num: f64, den: f64| if den == 0.0 { 0.0 } else { (num / den).powf(a) };
        match &self.kind {
            FunctionalKind::ConstantOne => 1.0,
            FunctionalKind::Custom(c) => (c.map)(x),
            FunctionalKind::ExtremalIndex => {
                let den = lp_modulus(x, PExponent::Finite(a));
                ratio_pow(lp_modulus(x, PExponent::Infinity), den)
            }
            FunctionalKind::SumIndex => {
                let den = lp_modulus(x, PExponent::Finite(a));
                ratio_pow(lp_modulus(x, PExponent::Finite(1.0)), den)
            }
            FunctionalKind::ClusterSize(j) => {
                let den = lp_modulus(x, PExponent::Finite(a));
                if den == 0.0 || *j == 0 {
                    return 0.0;
                }
                let sorted = abs_desc(x);
                let at = |i: usize| sorted.get(i - 1).copied().unwrap_or(0.0);
                ratio_pow(at(*j), den) - ratio_pow(at(j + 1), den)
            }
        }
    }

    fn eval_on_block(&self, block: &[f64], threshold: f64) -> f64 {
        if self.is_scale_invariant() {
            self.eval(block)
        } else {
            let scaled: Vec<f64> = block.iter().map(|v| v / threshold).collect();
            self.eval(&scaled)
        }
    }
}

fn abs_desc(x: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Tuning of a blocks estimator. When `b` is `None` it is set to
/// `floor(sqrt(n / k))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub p: PExponent,
    pub alpha: f64,
    pub k: usize,
    pub b: Option<usize>,
}

/// Block length and count after resolving an [`EstimatorConfig`] for a sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolved {
    pub b: usize,
    pub m: usize,
}

/// `floor(sqrt(n / k))`.
pub fn default_block_len(n: usize, k: usize) -> usize {
    (n as f64 / k as f64).sqrt().floor() as usize
}

impl EstimatorConfig {
    /// The alpha-blocks configuration `p = alpha`.
    pub fn alpha_blocks(alpha: f64, k: usize) -> Self {
        EstimatorConfig {
            p: PExponent::Finite(alpha),
            alpha,
            k,
            b: None,
        }
    }

    pub fn with_block_len(mut self, b: usize) -> Self {
        self.b = Some(b);
        self
    }

    pub fn resolve(&self, n: usize) -> Result<Resolved> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::param("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if self.k == 0 {
            return Err(Error::param("k", "need at least one extremal block"));
        }
        let b = self.b.unwrap_or_else(|| default_block_len(n, self.k));
        if b == 0 {
            return Err(Error::param("b", "block length resolved to 0"));
        }
        if b > n {
            return Err(Error::BlockLongerThanSample { b, n });
        }
        let m = n / b;
        if self.k + 1 > m {
            return Err(Error::TooManyExtremalBlocks { k: self.k, m });
        }
        Ok(Resolved { b, m })
    }
}

/// One blocks estimate with the tuning that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimator: String,
    pub p: PExponent,
    pub alpha: f64,
    pub k: usize,
    pub b: usize,
    pub m: usize,
    pub estimate: f64,
    pub plug_in_variance: f64,
    /// The `(k + 1)`-th largest block p-modulus.
    pub threshold: f64,
    pub seed: Option<u64>,
}

impl EstimateResult {
    /// Plug-in standard error `sqrt(var / k)`.
    pub fn plug_in_se(&self) -> f64 {
        (self.plug_in_variance / self.k as f64).sqrt()
    }
}

struct Exceedances {
    b: usize,
    m: usize,
    threshold: f64,
    /// Indices of blocks with modulus strictly above the threshold, in block order.
    blocks: Vec<usize>,
}

fn extremal_blocks(series: &[f64], cfg: &EstimatorConfig) -> Result<Exceedances> {
    let Resolved { b, m } = cfg.resolve(series.len())?;
    let part = partition(series, b)?;
    let os = order_stats(&part, cfg.p);
    if os.sorted_desc[0].1 == 0.0 {
        return Err(Error::DegenerateSample);
    }
    let threshold = os.sorted_desc[cfg.k].1;
    let blocks = os
        .norms
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v > threshold)
        .map(|(t, _)| t)
        .collect();
    Ok(Exceedances {
        b,
        m,
        threshold,
        blocks,
    })
}

fn average_over(
    series: &[f64],
    ex: &Exceedances,
    f: &ClusterFunctional,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    if ex.threshold == 0.0 && !f.is_scale_invariant() {
        return Err(Error::DegenerateSample);
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for &t in &ex.blocks {
        let v = f.eval_on_block(&series[t * ex.b..(t + 1) * ex.b], ex.threshold);
        s1 += v;
        s2 += v * v;
    }
    let k = cfg.k as f64;
    let estimate = s1 / k;
    let plug_in_variance = (s2 / k - estimate * estimate).max(0.0);
    Ok(EstimateResult {
        estimator: f.label(),
        p: cfg.p,
        alpha: cfg.alpha,
        k: cfg.k,
        b: ex.b,
        m: ex.m,
        estimate,
        plug_in_variance,
        threshold: ex.threshold,
        seed: None,
    })
}

/// Random-threshold blocks estimator of `E[f(Y Q)]`.
///
/// `plug_in_variance` is the same estimator applied to `f^2` minus the
/// squared estimate, clamped at zero.
pub fn estimate_cluster_statistic(
    series: &[f64],
    f: &ClusterFunctional,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    let ex = extremal_blocks(series, cfg)?;
    average_over(series, &ex, f, cfg)
}

/// Result of the fixed-level estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicEstimate {
    pub estimate: f64,
    /// Number of blocks above the level; 0 means the estimate is a placeholder 0.
    pub exceedances: usize,
}

/// Blocks estimator at the fixed level `u * x_b`, normalized by the number
/// of blocks that exceed it.
pub fn estimate_deterministic_threshold(
    series: &[f64],
    f: &ClusterFunctional,
    p: PExponent,
    u: f64,
    x_b: f64,
    b: usize,
) -> Result<DeterministicEstimate> {
    if !(u > 0.0) {
        return Err(Error::param("u", "must be > 0"));
    }
    if !(x_b > 0.0) {
        return Err(Error::param("x_b", "must be > 0"));
    }
    let level = u * x_b;
    let part = partition(series, b)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for block in part.blocks() {
        if lp_modulus(block, p) > level {
            sum += f.eval_on_block(block, level);
            count += 1;
        }
    }
    Ok(if count == 0 {
        DeterministicEstimate {
            estimate: 0.0,
            exceedances: 0,
        }
    } else {
        DeterministicEstimate {
            estimate: sum / count as f64,
            exceedances: count,
        }
    })
}

fn with_alpha_p(cfg: &EstimatorConfig) -> EstimatorConfig {
    EstimatorConfig {
        p: PExponent::Finite(cfg.alpha),
        ..*cfg
    }
}

/// Extremal index from alpha-blocks, `p = alpha`.
pub fn extremal_index_alpha_blocks(series: &[f64], cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let cfg = with_alpha_p(cfg);
    estimate_cluster_statistic(series, &ClusterFunctional::extremal_index(cfg.alpha), &cfg)
}

/// Cluster index for sums `c(1)` from alpha-blocks. Meant for `alpha < 2`;
/// see [`sum_index_alpha_warning`].
pub fn sum_index_alpha_blocks(series: &[f64], cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let cfg = with_alpha_p(cfg);
    estimate_cluster_statistic(series, &ClusterFunctional::sum_index(cfg.alpha), &cfg)
}

pub fn sum_index_alpha_warning(alpha: f64) -> Option<String> {
    (alpha >= 2.0).then(|| {
        format!("sum-index estimator assumes alpha < 2 (got {alpha}); the estimate may be unreliable")
    })
}

/// `pi_j` for `j = 1..=j_max`, all on the same extremal blocks.
pub fn cluster_size_probs(
    series: &[f64],
    cfg: &EstimatorConfig,
    j_max: usize,
) -> Result<Vec<EstimateResult>> {
    if j_max == 0 {
        return Err(Error::param("j", "need j_max >= 1"));
    }
    let ex = extremal_blocks(series, cfg)?;
    if j_max > ex.b {
        return Err(Error::param("j", format!("j_max = {j_max} exceeds block length {}", ex.b)));
    }
    (1..=j_max)
        .map(|j| average_over(series, &ex, &ClusterFunctional::cluster_size(j, cfg.alpha), cfg))
        .collect()
}

/// `|X|_(k+1)` over the whole sample.
fn abs_order_stat(series: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k", "need k >= 1"));
    }
    if k + 1 > series.len() {
        return Err(Error::param("k", format!("need k + 1 <= n, got k = {k}, n = {}", series.len())));
    }
    let mut abs: Vec<f64> = series.iter().map(|v| v.abs()).collect();
    let (_, v, _) = abs.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    Ok(*v)
}

fn classic_blocks(series: &[f64], k: usize, b: usize, p: PExponent) -> Result<f64> {
    let threshold = abs_order_stat(series, k)?;
    let part = partition(series, b)?;
    let hits = part.blocks().filter(|blk| lp_modulus(blk, p) > threshold).count();
    Ok(hits as f64 / k as f64)
}

/// Extremal index from extremal lInf-blocks: the share of the `k` largest
/// observations' exceedance level reached by block maxima,
/// `(1/k) #{t : ||B_t||_inf > |X|_(k+1)}`.
pub fn extremal_index_classic_blocks(series: &[f64], k: usize, b: usize) -> Result<f64> {
    classic_blocks(series, k, b, PExponent::Infinity)
}

/// `(1/k) #{t : ||B_t||_1 > |X|_(k+1)}`.
pub fn sum_index_classic_blocks(series: &[f64], k: usize, b: usize) -> Result<f64> {
    classic_blocks(series, k, b, PExponent::Finite(1.0))
}

/// Optional second-order adjustment of the Hill estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HillCorrection {
    #[default]
    None,
    /// Least-squares fit `j * log(X_(j) / X_(j+1)) ~ gamma + beta * j / (k' + 1)`,
    /// keeping the intercept. Assumes a second-order parameter of -1.
    ExpRegression,
}

/// The largest absolute values of a sample, descending.
#[derive(Debug, Clone)]
pub struct UpperOrderStats {
    top: Vec<f64>,
    n: usize,
}

impl UpperOrderStats {
    /// Keeps the `count` largest `|X_t|`.
    pub fn new(series: &[f64], count: usize) -> Self {
        let mut abs: Vec<f64> = series.iter().map(|v| v.abs()).collect();
        let count = count.min(abs.len());
        if count > 0 && count < abs.len() {
            abs.select_nth_unstable_by(count - 1, |a, b| b.total_cmp(a));
            abs.truncate(count);
        }
        abs.sort_by(|a, b| b.total_cmp(a));
        UpperOrderStats {
            top: abs,
            n: series.len(),
        }
    }

    pub fn hill(&self, k_prime: usize, correction: HillCorrection) -> Result<f64> {
        if k_prime < 2 || k_prime >= self.n {
            return Err(Error::param(
                "k_prime",
                format!("need 2 <= k' < n, got k' = {k_prime}, n = {}", self.n),
            ));
        }
        if k_prime >= self.top.len() {
            return Err(Error::param("k_prime", "not enough upper order statistics retained"));
        }
        let base = self.top[k_prime];
        if !(base > 0.0) {
            return Err(Error::InsufficientTailData { k_prime });
        }
        let gamma = match correction {
            HillCorrection::None => {
                let s: f64 = self.top[..k_prime].iter().map(|&x| (x / base).ln()).sum();
                s / k_prime as f64
            }
            HillCorrection::ExpRegression => {
                let kf = k_prime as f64;
                let (mut su, mut sz, mut suu, mut suz) = (0.0, 0.0, 0.0, 0.0);
                for j in 1..=k_prime {
                    let z = j as f64 * (self.top[j - 1] / self.top[j]).ln();
                    let u = j as f64 / (kf + 1.0);
                    su += u;
                    sz += z;
                    suu += u * u;
                    suz += u * z;
                }
                let (mu, mz) = (su / kf, sz / kf);
                let slope = (suz / kf - mu * mz) / (suu / kf - mu * mu);
                mz - slope * mu
            }
        };
        if !(gamma > 0.0) {
            return Err(Error::InsufficientTailData { k_prime });
        }
        Ok(gamma.recip())
    }
}

/// Hill estimate of the tail index from the `k'` largest `|X_t|`.
pub fn hill_estimate(series: &[f64], k_prime: usize) -> Result<f64> {
    hill_estimate_with(series, k_prime, HillCorrection::None)
}

pub fn hill_estimate_with(series: &[f64], k_prime: usize, correction: HillCorrection) -> Result<f64> {
    UpperOrderStats::new(series, k_prime.saturating_add(1)).hill(k_prime, correction)
}

/// Plugs the Hill estimate at `k_prime` in as both `p` and `alpha`.
pub fn estimate_with_estimated_alpha(
    series: &[f64],
    kind: FunctionalKind,
    k: usize,
    k_prime: usize,
    correction: HillCorrection,
) -> Result<EstimateResult> {
    let alpha = hill_estimate_with(series, k_prime, correction)?;
    let cfg = EstimatorConfig::alpha_blocks(alpha, k);
    estimate_cluster_statistic(series, &ClusterFunctional::new(kind, alpha), &cfg)
}
