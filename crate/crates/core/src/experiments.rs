//! Monte Carlo harness: replicate loops, summaries, heatmaps over `(k, k')`
//! and the alpha-blocks vs. classic variance comparison.
//!
//! Replicate `r` always simulates from [`replicate_seed`]`(master_seed, r)`,
//! whatever the execution mode, and per-replicate results are reduced in
//! replicate order. Reports are therefore bit-identical across thread counts.

use serde::{Deserialize, Serialize};

use crate::blocks::PExponent;
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_cluster_statistic, extremal_index_alpha_blocks, extremal_index_classic_blocks,
    ClusterFunctional, EstimateResult, EstimatorConfig, FunctionalKind, HillCorrection,
    UpperOrderStats,
};
use crate::exec::{map_indexed, Execution};
use crate::models::{simulate, ModelSpec};
use crate::oracles::{model_truth, OracleOptions, OracleValue};

/// Seed of replicate `rep`: the `rep`-th output of a SplitMix64 stream
/// started at `master`.
pub fn replicate_seed(master: u64, rep: usize) -> u64 {
    let mut z = master.wrapping_add((rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Human-readable description of the seeding scheme, echoed into run configs.
pub const SEED_SCHEME: &str = "splitmix64(master_seed + (rep + 1) * 0x9E3779B97F4A7C15) -> ChaCha8Rng::seed_from_u64";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalChoice {
    ExtremalIndex,
    SumIndex,
    ClusterSize { j: usize },
}

impl FunctionalChoice {
    pub fn kind(self) -> FunctionalKind {
        match self {
            FunctionalChoice::ExtremalIndex => FunctionalKind::ExtremalIndex,
            FunctionalChoice::SumIndex => FunctionalKind::SumIndex,
            FunctionalChoice::ClusterSize { j } => FunctionalKind::ClusterSize(j),
        }
    }

    pub fn with_alpha(self, alpha: f64) -> ClusterFunctional {
        ClusterFunctional::new(self.kind(), alpha)
    }

    /// File-name friendly tag: `theta`, `c1`, `pi<j>`.
    pub fn tag(self) -> String {
        match self {
            FunctionalChoice::ExtremalIndex => "theta".into(),
            FunctionalChoice::SumIndex => "c1".into(),
            FunctionalChoice::ClusterSize { j } => format!("pi{j}"),
        }
    }
}

/// Which modulus the blocks are ranked by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PPolicy {
    /// `p` equals the tail index in use.
    Alpha,
    Fixed(PExponent),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaPolicy {
    /// The model's true tail index.
    Model,
    Known { alpha: f64 },
    Hill {
        k_prime: usize,
        #[serde(default)]
        correction: HillCorrection,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub functional: FunctionalChoice,
    pub p: PPolicy,
    pub alpha: AlphaPolicy,
    pub k: usize,
    pub b: Option<usize>,
}

impl EstimatorSpec {
    /// `p = alpha`, true alpha, `b = floor(sqrt(n / k))`.
    pub fn alpha_blocks(functional: FunctionalChoice, k: usize) -> Self {
        EstimatorSpec {
            functional,
            p: PPolicy::Alpha,
            alpha: AlphaPolicy::Model,
            k,
            b: None,
        }
    }

    /// Tail index used on `series`. Only [`AlphaPolicy::Model`] needs `model`.
    pub fn resolve_alpha(&self, series: &[f64], model: Option<&ModelSpec>) -> Result<f64> {
        match self.alpha {
            AlphaPolicy::Model => model
                .map(ModelSpec::tail_index)
                .ok_or_else(|| Error::param("alpha", "no model to take the tail index from")),
            AlphaPolicy::Known { alpha } => Ok(alpha),
            AlphaPolicy::Hill {
                k_prime,
                correction,
            } => UpperOrderStats::new(series, k_prime + 1).hill(k_prime, correction),
        }
    }

    /// Runs the estimator on one series.
    pub fn apply(&self, series: &[f64], model: &ModelSpec) -> Result<EstimateResult> {
        let alpha = self.resolve_alpha(series, Some(model))?;
        self.apply_with_alpha(series, alpha)
    }

    pub fn apply_with_alpha(&self, series: &[f64], alpha: f64) -> Result<EstimateResult> {
        let p = match self.p {
            PPolicy::Alpha => PExponent::finite(alpha)?,
            PPolicy::Fixed(p) => p,
        };
        let cfg = EstimatorConfig {
            p,
            alpha,
            k: self.k,
            b: self.b,
        };
        estimate_cluster_statistic(series, &self.functional.with_alpha(alpha), &cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub reps: usize,
    pub estimator: EstimatorSpec,
    pub master_seed: u64,
    /// Skip the truth computation when `None`.
    pub oracle: Option<OracleSettings>,
}

/// Serializable mirror of [`OracleOptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    pub reps: usize,
    pub horizon_eps: f64,
    pub seed: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        let o = OracleOptions::default();
        OracleSettings {
            reps: o.reps,
            horizon_eps: o.horizon_eps,
            seed: o.seed,
        }
    }
}

impl From<OracleSettings> for OracleOptions {
    fn from(s: OracleSettings) -> Self {
        OracleOptions {
            reps: s.reps,
            horizon_eps: s.horizon_eps,
            seed: s.seed,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.reps < 2 {
            return Err(Error::param("reps", "need at least 2 replicates"));
        }
        if self.n == 0 {
            return Err(Error::param("n", "sample length must be >= 1"));
        }
        EstimatorConfig {
            p: PExponent::Infinity,
            alpha: 1.0,
            k: self.estimator.k,
            b: self.estimator.b,
        }
        .resolve(self.n)?;
        if let AlphaPolicy::Hill { k_prime, .. } = self.estimator.alpha {
            if k_prime < 2 || k_prime >= self.n {
                return Err(Error::param("k_prime", format!("need 2 <= k' < n, got {k_prime}")));
            }
        }
        Ok(())
    }
}

/// Parameters of the two Gaussian curves drawn over a histogram of estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianOverlay {
    pub center_oracle: Option<f64>,
    pub center_empirical: f64,
    /// Mean over replicates of `sqrt(plug_in_variance / k)`.
    pub sd_plugin: f64,
    pub sd_empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    /// One entry per replicate, in replicate order; `seed` is always set.
    pub per_rep: Vec<EstimateResult>,
    pub mean: f64,
    /// Population standard deviation (divisor `reps`).
    pub sd: f64,
    /// Mean squared error against the oracle, when one was computed.
    pub mse: Option<f64>,
    pub oracle: Option<OracleValue>,
    pub gaussian_overlay: GaussianOverlay,
}

/// Mean, population SD and mean squared deviation from `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub mse: Option<f64>,
}

pub fn summarize(values: &[f64], target: Option<f64>) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mse = target.map(|t| values.iter().map(|v| (v - t).powi(2)).sum::<f64>() / n);
    Summary {
        mean,
        sd: var.sqrt(),
        mse,
    }
}

fn first_error<T>(results: Vec<Result<T>>, master_seed: u64) -> Result<Vec<T>> {
    results
        .into_iter()
        .enumerate()
        .map(|(rep, r)| {
            r.map_err(|e| Error::Replicate {
                rep,
                seed: replicate_seed(master_seed, rep),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Runs `cfg.reps` independent replicates of simulate-then-estimate.
pub fn run_mc(cfg: &McConfig, exec: Execution) -> Result<McReport> {
    cfg.validate()?;
    let raw = map_indexed(cfg.reps, exec, |rep| {
        let seed = replicate_seed(cfg.master_seed, rep);
        let series = simulate(&cfg.model, cfg.n, seed)?;
        let mut r = cfg.estimator.apply(&series.values, &cfg.model)?;
        r.seed = Some(seed);
        Ok(r)
    });
    let per_rep = first_error(raw, cfg.master_seed)?;

    let oracle = match cfg.oracle {
        Some(settings) => {
            let f = cfg.estimator.functional.with_alpha(cfg.model.tail_index());
            Some(model_truth(&cfg.model, &f, &settings.into(), exec)?)
        }
        None => None,
    };
    let estimates: Vec<f64> = per_rep.iter().map(|r| r.estimate).collect();
    let s = summarize(&estimates, oracle.as_ref().map(|o| o.value));
    let sd_plugin = per_rep.iter().map(EstimateResult::plug_in_se).sum::<f64>() / per_rep.len() as f64;
    Ok(McReport {
        config: cfg.clone(),
        mean: s.mean,
        sd: s.sd,
        mse: s.mse,
        gaussian_overlay: GaussianOverlay {
            center_oracle: oracle.as_ref().map(|o| o.value),
            center_empirical: s.mean,
            sd_plugin,
            sd_empirical: s.sd,
        },
        oracle,
        per_rep,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub reps: usize,
    pub k_grid: Vec<usize>,
    pub k_prime_grid: Vec<usize>,
    pub functional: FunctionalChoice,
    #[serde(default)]
    pub correction: HillCorrection,
    pub master_seed: u64,
    pub oracle: OracleSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub k: usize,
    pub k_prime: usize,
    pub mean: f64,
    pub sd: f64,
    pub mse: f64,
    /// Replicates that entered the cell; 0 when skipped.
    pub reps: usize,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub k_values: Vec<usize>,
    pub k_prime_values: Vec<usize>,
    /// Row-major: `cells[i * k_prime_values.len() + j]` is `(k_values[i], k_prime_values[j])`.
    pub cells: Vec<HeatmapCell>,
    pub oracle: OracleValue,
}

impl HeatmapGrid {
    pub fn cell(&self, k: usize, k_prime: usize) -> Option<&HeatmapCell> {
        self.cells.iter().find(|c| c.k == k && c.k_prime == k_prime)
    }

    /// The non-skipped cell with the smallest MSE.
    pub fn min_mse_cell(&self) -> Option<&HeatmapCell> {
        self.cells
            .iter()
            .filter(|c| c.skipped.is_none())
            .min_by(|a, b| a.mse.total_cmp(&b.mse))
    }
}

/// Estimator with Hill-estimated alpha over a `(k, k')` grid, using the same
/// simulated series for every cell of a replicate.
pub fn run_heatmap(cfg: &HeatmapConfig, exec: Execution) -> Result<HeatmapGrid> {
    cfg.model.validate()?;
    if cfg.k_grid.is_empty() || cfg.k_prime_grid.is_empty() {
        return Err(Error::param("grid", "k and k' grids must be nonempty"));
    }
    if cfg.reps < 2 {
        return Err(Error::param("reps", "need at least 2 replicates"));
    }
    let n = cfg.n;
    let k_ok: Vec<Option<String>> = cfg
        .k_grid
        .iter()
        .map(|&k| {
            EstimatorConfig::alpha_blocks(1.0, k)
                .resolve(n)
                .err()
                .map(|e| format!("k = {k}: {e}"))
        })
        .collect();
    let kp_ok: Vec<Option<String>> = cfg
        .k_prime_grid
        .iter()
        .map(|&kp| (kp < 2 || kp >= n).then(|| format!("k' = {kp}: need 2 <= k' < n = {n}")))
        .collect();
    let max_kp = cfg
        .k_prime_grid
        .iter()
        .zip(&kp_ok)
        .filter(|(_, bad)| bad.is_none())
        .map(|(&kp, _)| kp)
        .max()
        .unwrap_or(0);
    let (nk, nkp) = (cfg.k_grid.len(), cfg.k_prime_grid.len());

    // per replicate: row-major cell values, or the reason a cell failed
    let per_rep: Vec<Result<Vec<std::result::Result<f64, String>>>> =
        map_indexed(cfg.reps, exec, |rep| {
            let seed = replicate_seed(cfg.master_seed, rep);
            let series = simulate(&cfg.model, n, seed)?;
            let top = UpperOrderStats::new(&series.values, max_kp + 1);
            let mut cells = vec![Err(String::new()); nk * nkp];
            for (j, &kp) in cfg.k_prime_grid.iter().enumerate() {
                if kp_ok[j].is_some() {
                    continue;
                }
                let alpha = top.hill(kp, cfg.correction);
                for (i, &k) in cfg.k_grid.iter().enumerate() {
                    if k_ok[i].is_some() {
                        continue;
                    }
                    let spec = EstimatorSpec {
                        functional: cfg.functional,
                        p: PPolicy::Alpha,
                        alpha: AlphaPolicy::Model,
                        k,
                        b: None,
                    };
                    cells[i * nkp + j] = alpha
                        .clone()
                        .and_then(|a| spec.apply_with_alpha(&series.values, a))
                        .map(|r| r.estimate)
                        .map_err(|e| format!("replicate {rep} (seed {seed}): {e}"));
                }
            }
            Ok(cells)
        });
    let per_rep = first_error(per_rep, cfg.master_seed)?;

    let truth_f = cfg.functional.with_alpha(cfg.model.tail_index());
    let oracle = model_truth(&cfg.model, &truth_f, &cfg.oracle.into(), exec)?;
    let mut cells = Vec::with_capacity(nk * nkp);
    for (i, &k) in cfg.k_grid.iter().enumerate() {
        for (j, &kp) in cfg.k_prime_grid.iter().enumerate() {
            let skipped_cell = |reason: String| HeatmapCell {
                k,
                k_prime: kp,
                mean: f64::NAN,
                sd: f64::NAN,
                mse: f64::NAN,
                reps: 0,
                skipped: Some(reason),
            };
            if let Some(reason) = k_ok[i].clone().or_else(|| kp_ok[j].clone()) {
                cells.push(skipped_cell(reason));
                continue;
            }
            let values: std::result::Result<Vec<f64>, String> =
                per_rep.iter().map(|row| row[i * nkp + j].clone()).collect();
            match values {
                Ok(v) => {
                    let s = summarize(&v, Some(oracle.value));
                    cells.push(HeatmapCell {
                        k,
                        k_prime: kp,
                        mean: s.mean,
                        sd: s.sd,
                        mse: s.mse.unwrap_or(f64::NAN),
                        reps: v.len(),
                        skipped: None,
                    });
                }
                Err(reason) => cells.push(skipped_cell(reason)),
            }
        }
    }
    Ok(HeatmapGrid {
        k_values: cfg.k_grid.clone(),
        k_prime_values: cfg.k_prime_grid.clone(),
        cells,
        oracle,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComparison {
    pub k: usize,
    pub b: usize,
    pub reps: usize,
    pub mean_alpha_blocks: f64,
    pub mean_classic: f64,
    /// `k` times the population variance over replicates.
    pub var_alpha_blocks: f64,
    pub var_classic: f64,
    /// `var_alpha_blocks / var_classic`.
    pub ratio: f64,
}

/// Alpha-blocks vs. classic lInf-blocks extremal index on identical series.
pub fn run_variance_comparison(
    model: &ModelSpec,
    n: usize,
    reps: usize,
    k: usize,
    master_seed: u64,
    exec: Execution,
) -> Result<VarianceComparison> {
    model.validate()?;
    if let ModelSpec::KestenSre { .. } = model {
        return Err(Error::NotLinear(
            "variance comparison applies to linear and max-moving-average models".into(),
        ));
    }
    if reps < 2 {
        return Err(Error::param("reps", "need at least 2 replicates"));
    }
    let alpha = model.tail_index();
    let cfg = EstimatorConfig::alpha_blocks(alpha, k);
    let b = cfg.resolve(n)?.b;
    let raw = map_indexed(reps, exec, |rep| {
        let series = simulate(model, n, replicate_seed(master_seed, rep))?;
        let a = extremal_index_alpha_blocks(&series.values, &cfg)?.estimate;
        let c = extremal_index_classic_blocks(&series.values, k, b)?;
        Ok((a, c))
    });
    let pairs = first_error(raw, master_seed)?;
    let (a, c): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (sa, sc) = (summarize(&a, None), summarize(&c, None));
    let kf = k as f64;
    let var_alpha_blocks = kf * sa.sd * sa.sd;
    let var_classic = kf * sc.sd * sc.sd;
    Ok(VarianceComparison {
        k,
        b,
        reps,
        mean_alpha_blocks: sa.mean,
        mean_classic: sc.mean,
        var_alpha_blocks,
        var_classic,
        ratio: var_alpha_blocks / var_classic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|r| replicate_seed(42, r)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(replicate_seed(1, 0), replicate_seed(2, 0));
    }

    #[test]
    fn mse_decomposes() {
        let v = [0.1, 0.5, 0.33, 0.27, 0.9];
        let s = summarize(&v, Some(0.3));
        let lhs = s.mse.unwrap();
        let rhs = s.sd * s.sd + (s.mean - 0.3).powi(2);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn replicate_error_names_seed() {
        let cfg = McConfig {
            model: ModelSpec::Ar1 { phi: 0.5, alpha: 1.0 },
            n: 100,
            reps: 3,
            estimator: EstimatorSpec {
                alpha: AlphaPolicy::Known { alpha: -1.0 },
                ..EstimatorSpec::alpha_blocks(FunctionalChoice::ExtremalIndex, 2)
            },
            master_seed: 5,
            oracle: None,
        };
        match run_mc(&cfg, Execution::Sequential) {
            Err(Error::Replicate { rep: 0, seed, .. }) => assert_eq!(seed, replicate_seed(5, 0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn heatmap_skips_invalid_cells() {
        let cfg = HeatmapConfig {
            model: ModelSpec::Ar1 { phi: 0.5, alpha: 1.0 },
            n: 400,
            reps: 3,
            k_grid: vec![4, 400],
            k_prime_grid: vec![20, 400],
            functional: FunctionalChoice::ExtremalIndex,
            correction: HillCorrection::None,
            master_seed: 1,
            oracle: OracleSettings::default(),
        };
        let g = run_heatmap(&cfg, Execution::Sequential).unwrap();
        assert_eq!(g.cells.len(), 4);
        assert!(g.cell(4, 20).unwrap().skipped.is_none());
        assert!(g.cell(400, 20).unwrap().skipped.is_some());
        assert!(g.cell(4, 400).unwrap().skipped.is_some());
        assert_eq!(g.min_mse_cell().unwrap().k, 4);
    }

    #[test]
    fn variance_comparison_rejects_kesten() {
        let r = run_variance_comparison(&ModelSpec::kesten_reference(), 1000, 10, 4, 0, Execution::Sequential);
        assert!(matches!(r, Err(Error::NotLinear(_))));
    }
}
