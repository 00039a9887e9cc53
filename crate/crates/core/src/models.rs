//! Seeded simulation of the stationary heavy-tailed models.
//!
//! Every model is driven by a single [`ChaCha8Rng`] seeded from a 64-bit
//! value, so a trajectory is a pure function of `(model, n, seed)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Steps discarded before recording for the recursive models (AR(1), SRE).
pub const BURN_IN: usize = 2000;

/// Innovation law of a linear moving average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    /// Random sign times a Pareto(alpha) variable.
    ParetoSym,
    /// Absolute value of a Student-t with `alpha` degrees of freedom.
    #[default]
    StudentAbs,
}

/// `log A ~ Normal(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianShift {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for GaussianShift {
    fn default() -> Self {
        GaussianShift {
            mu: -0.5,
            sigma: 1.0,
        }
    }
}

impl GaussianShift {
    /// The unique `alpha > 0` with `E[A^alpha] = 1`, i.e. `-2 mu / sigma^2`.
    pub fn tail_index(&self) -> f64 {
        -2.0 * self.mu / (self.sigma * self.sigma)
    }
}

/// Additive term of the SRE. Only `Uniform(0, 1)` is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdditiveLaw {
    #[default]
    Uniform01,
}

/// A model class together with its parameters.
///
/// Serialized as a JSON object with a `kind` discriminator, e.g.
/// `{"kind": "ar1", "phi": 0.5, "alpha": 1.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    IidPareto {
        alpha: f64,
    },
    IidStudentAbs {
        alpha: f64,
    },
    LinearMa {
        coeffs: Vec<f64>,
        #[serde(default)]
        noise: Noise,
        alpha: f64,
    },
    /// `X_t = max_j coeffs[j] * Z_{t-j}` with nonnegative Pareto noise.
    MaxMa {
        coeffs: Vec<f64>,
        alpha: f64,
    },
    /// `X_t = phi X_{t-1} + Z_t` with `|Student-t(alpha)|` noise.
    Ar1 {
        phi: f64,
        alpha: f64,
    },
    /// Scalar Kesten recursion `X_t = A_t X_{t-1} + B_t`.
    KestenSre {
        #[serde(default)]
        log_a: GaussianShift,
        #[serde(default)]
        b: AdditiveLaw,
    },
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("must be finite and > 0, got {alpha}")))
    }
}

impl ModelSpec {
    /// The Kesten model of the reference experiment: `log A = N - 0.5`,
    /// `B ~ U(0, 1)`, tail index 1.
    pub fn kesten_reference() -> Self {
        ModelSpec::KestenSre {
            log_a: GaussianShift::default(),
            b: AdditiveLaw::Uniform01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::IidPareto { alpha } | ModelSpec::IidStudentAbs { alpha } => {
                check_alpha(*alpha)
            }
            ModelSpec::LinearMa { coeffs, alpha, .. } => {
                check_alpha(*alpha)?;
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::param("coeffs", "must be a nonempty finite filter"));
                }
                if coeffs.iter().all(|&c| c == 0.0) {
                    return Err(Error::param("coeffs", "filter is identically zero"));
                }
                Ok(())
            }
            ModelSpec::MaxMa { coeffs, alpha } => {
                check_alpha(*alpha)?;
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::param("coeffs", "must be a nonempty finite filter"));
                }
                if let Some(c) = coeffs.iter().find(|&&c| c < 0.0) {
                    return Err(Error::param(
                        "coeffs",
                        format!("max-moving average coefficients must be >= 0, got {c}"),
                    ));
                }
                if coeffs.iter().all(|&c| c == 0.0) {
                    return Err(Error::param("coeffs", "filter is identically zero"));
                }
                Ok(())
            }
            ModelSpec::Ar1 { phi, alpha } => {
                check_alpha(*alpha)?;
                if !(phi.abs() < 1.0) {
                    return Err(Error::param("phi", format!("need |phi| < 1, got {phi}")));
                }
                Ok(())
            }
            ModelSpec::KestenSre { log_a, .. } => {
                if !(log_a.sigma.is_finite() && log_a.sigma > 0.0) {
                    return Err(Error::param("log_a.sigma", "must be finite and > 0"));
                }
                if !(log_a.mu < 0.0) {
                    return Err(Error::NonContracting { mean_log: log_a.mu });
                }
                Ok(())
            }
        }
    }

    /// Tail index of the stationary marginal.
    pub fn tail_index(&self) -> f64 {
        match self {
            ModelSpec::IidPareto { alpha }
            | ModelSpec::IidStudentAbs { alpha }
            | ModelSpec::LinearMa { alpha, .. }
            | ModelSpec::MaxMa { alpha, .. }
            | ModelSpec::Ar1 { alpha, .. } => *alpha,
            ModelSpec::KestenSre { log_a, .. } => log_a.tail_index(),
        }
    }

    /// Short label used in file names and CSV metadata.
    pub fn label(&self) -> &'static str {
        match self {
            ModelSpec::IidPareto { .. } => "iid_pareto",
            ModelSpec::IidStudentAbs { .. } => "iid_student_abs",
            ModelSpec::LinearMa { .. } => "linear_ma",
            ModelSpec::MaxMa { .. } => "max_ma",
            ModelSpec::Ar1 { .. } => "ar1",
            ModelSpec::KestenSre { .. } => "kesten_sre",
        }
    }
}

/// A simulated trajectory with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub values: Vec<f64>,
    pub model: ModelSpec,
    pub seed: u64,
}

impl Series {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

impl AsRef<[f64]> for Series {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// `|T|` for `T ~ Student-t(alpha)`, drawn as `|Z| / sqrt(V / alpha)` with
/// `Z` standard normal and `V ~ chi^2(alpha)`.
#[derive(Debug, Clone, Copy)]
pub struct StudentAbs {
    dof: f64,
    chi: ChiSquared<f64>,
}

impl StudentAbs {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let chi = ChiSquared::new(alpha).map_err(|e| Error::param("alpha", e.to_string()))?;
        Ok(StudentAbs { dof: alpha, chi })
    }
}

impl Distribution<f64> for StudentAbs {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let v = self.chi.sample(rng);
        z.abs() / (v / self.dof).sqrt()
    }
}

/// Pareto(alpha) on `[1, inf)`: `P(X > x) = x^-alpha`, by inversion.
#[derive(Debug, Clone, Copy)]
pub struct ParetoTail {
    inv_alpha: f64,
}

impl ParetoTail {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(ParetoTail {
            inv_alpha: 1.0 / alpha,
        })
    }
}

impl Distribution<f64> for ParetoTail {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // 1 - U lies in (0, 1], so the power is finite.
        let u = 1.0 - rng.random::<f64>();
        u.powf(-self.inv_alpha)
    }
}

/// Symmetrized Pareto: a fair random sign times [`ParetoTail`].
#[derive(Debug, Clone, Copy)]
pub struct ParetoSym(ParetoTail);

impl ParetoSym {
    pub fn new(alpha: f64) -> Result<Self> {
        Ok(ParetoSym(ParetoTail::new(alpha)?))
    }
}

impl Distribution<f64> for ParetoSym {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = self.0.sample(rng);
        if rng.random::<bool>() {
            x
        } else {
            -x
        }
    }
}

/// One `|Student-t(alpha)|` draw.
pub fn student_abs_draw<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    Ok(StudentAbs::new(alpha)?.sample(rng))
}

/// The generator every simulation uses for a given seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Simulates `n` observations of `model` from `seed`.
pub fn simulate(model: &ModelSpec, n: usize, seed: u64) -> Result<Series> {
    let mut rng = rng_from_seed(seed);
    let values = simulate_with_rng(model, n, &mut rng)?;
    Ok(Series {
        values,
        model: model.clone(),
        seed,
    })
}

/// Same as [`simulate`] but draws from a caller-supplied generator.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    model: &ModelSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::param("n", "sample length must be >= 1"));
    }
    model.validate()?;
    let values = match model {
        ModelSpec::IidPareto { alpha } => {
            let d = ParetoTail::new(*alpha)?;
            d.sample_iter(rng).take(n).collect()
        }
        ModelSpec::IidStudentAbs { alpha } => {
            let d = StudentAbs::new(*alpha)?;
            d.sample_iter(rng).take(n).collect()
        }
        ModelSpec::LinearMa {
            coeffs,
            noise,
            alpha,
        } => {
            let z: Vec<f64> = match noise {
                Noise::ParetoSym => {
                    let d = ParetoSym::new(*alpha)?;
                    (0..n + coeffs.len() - 1).map(|_| d.sample(rng)).collect()
                }
                Noise::StudentAbs => {
                    let d = StudentAbs::new(*alpha)?;
                    (0..n + coeffs.len() - 1).map(|_| d.sample(rng)).collect()
                }
            };
            moving_average(&z, coeffs, |acc, v| acc + v, 0.0)
        }
        ModelSpec::MaxMa { coeffs, alpha } => {
            let d = ParetoTail::new(*alpha)?;
            let z: Vec<f64> = (0..n + coeffs.len() - 1).map(|_| d.sample(rng)).collect();
            moving_average(&z, coeffs, f64::max, 0.0)
        }
        ModelSpec::Ar1 { phi, alpha } => {
            let d = StudentAbs::new(*alpha)?;
            let mut x = 0.0;
            let mut out = Vec::with_capacity(n);
            for t in 0..BURN_IN + n {
                x = phi * x + d.sample(rng);
                if t >= BURN_IN {
                    out.push(x);
                }
            }
            out
        }
        ModelSpec::KestenSre { log_a, b } => {
            let AdditiveLaw::Uniform01 = b;
            let mut x = 0.0;
            let mut out = Vec::with_capacity(n);
            for t in 0..BURN_IN + n {
                let g: f64 = rng.sample(StandardNormal);
                let a = (log_a.mu + log_a.sigma * g).exp();
                // (0, 1] keeps every B strictly positive.
                let b = 1.0 - rng.random::<f64>();
                x = a * x + b;
                if t >= BURN_IN {
                    out.push(x);
                }
            }
            out
        }
    };
    Ok(values)
}

/// `out[t] = combine_j coeffs[j] * z[t + m0 - j]` over a noise vector that
/// carries `m0 = coeffs.len() - 1` pre-sample draws.
fn moving_average(
    z: &[f64],
    coeffs: &[f64],
    combine: impl Fn(f64, f64) -> f64,
    init: f64,
) -> Vec<f64> {
    let m0 = coeffs.len() - 1;
    (m0..z.len())
        .map(|t| {
            coeffs
                .iter()
                .enumerate()
                .fold(init, |acc, (j, &c)| combine(acc, c * z[t - j]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_filter_returns_raw_noise() {
        let model = ModelSpec::LinearMa {
            coeffs: vec![1.0],
            noise: Noise::StudentAbs,
            alpha: 1.0,
        };
        let s = simulate(&model, 5, 7).unwrap();
        let mut rng = rng_from_seed(7);
        let d = StudentAbs::new(1.0).unwrap();
        let raw: Vec<f64> = (0..5).map(|_| d.sample(&mut rng)).collect();
        assert_eq!(s.values, raw);
    }

    #[test]
    fn two_tap_filter_uses_presample_noise() {
        let model = ModelSpec::LinearMa {
            coeffs: vec![1.0, 0.5],
            noise: Noise::ParetoSym,
            alpha: 1.5,
        };
        let s = simulate(&model, 4, 11).unwrap();
        let mut rng = rng_from_seed(11);
        let d = ParetoSym::new(1.5).unwrap();
        let z: Vec<f64> = (0..5).map(|_| d.sample(&mut rng)).collect();
        for t in 0..4 {
            assert_eq!(s.values[t], 0.0 + z[t + 1] + 0.5 * z[t]);
        }
    }

    #[test]
    fn max_ma_is_windowed_max() {
        let model = ModelSpec::MaxMa {
            coeffs: vec![1.0, 0.3, 0.2],
            alpha: 2.0,
        };
        let s = simulate(&model, 50, 3).unwrap();
        let mut rng = rng_from_seed(3);
        let d = ParetoTail::new(2.0).unwrap();
        let z: Vec<f64> = (0..52).map(|_| d.sample(&mut rng)).collect();
        for t in 0..50 {
            let want = (z[t + 2]).max(0.3 * z[t + 1]).max(0.2 * z[t]);
            assert_eq!(s.values[t], want);
        }
    }

    #[test]
    fn ar1_is_deterministic() {
        let model = ModelSpec::Ar1 {
            phi: 0.5,
            alpha: 1.0,
        };
        let a = simulate(&model, 1000, 99).unwrap();
        let b = simulate(&model, 1000, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate(&model, 1000, 100).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn kesten_values_are_positive() {
        let s = simulate(&ModelSpec::kesten_reference(), 5000, 1).unwrap();
        assert!(s.values.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn kesten_reference_has_unit_tail_index() {
        assert_eq!(ModelSpec::kesten_reference().tail_index(), 1.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad = [
            ModelSpec::Ar1 {
                phi: 1.0,
                alpha: 1.0,
            },
            ModelSpec::Ar1 {
                phi: -1.2,
                alpha: 1.0,
            },
            ModelSpec::MaxMa {
                coeffs: vec![1.0, -0.1],
                alpha: 1.0,
            },
            ModelSpec::IidPareto { alpha: 0.0 },
            ModelSpec::KestenSre {
                log_a: GaussianShift { mu: 0.1, sigma: 1.0 },
                b: AdditiveLaw::Uniform01,
            },
        ];
        for m in &bad {
            assert!(simulate(m, 10, 0).is_err(), "{m:?}");
        }
        assert!(simulate(&ModelSpec::IidPareto { alpha: 1.0 }, 0, 0).is_err());
    }

    #[test]
    fn model_json_uses_kind_tag() {
        let m = ModelSpec::Ar1 {
            phi: 0.5,
            alpha: 1.0,
        };
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"kind":"ar1","phi":0.5,"alpha":1.0}"#);
        let k: ModelSpec = serde_json::from_str(r#"{"kind":"kesten_sre"}"#).unwrap();
        assert_eq!(k, ModelSpec::kesten_reference());
        let err = serde_json::from_str::<ModelSpec>(r#"{"kind":"ar1","phi":0.5,"alpha":1,"x":1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("unknown field `x`"), "{err}");
    }

    #[test]
    fn cauchy_median_is_one() {
        let d = StudentAbs::new(1.0).unwrap();
        let mut rng = rng_from_seed(2024);
        let mut v: Vec<f64> = (0..1_000_000).map(|_| d.sample(&mut rng)).collect();
        let mid = v.len() / 2;
        let (_, med, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
        // |Cauchy| median is tan(pi/4) = 1; the sample median has SD ~ 1.6e-3 here.
        assert!((*med - 1.0).abs() < 0.01, "median {med}");
    }

    #[test]
    fn cauchy_abs_tail_matches_two_over_pi() {
        // P(|C| > x) = 1 - (2/pi) atan(x), so x P(|C| > x) -> 2/pi.
        let d = StudentAbs::new(1.0).unwrap();
        let mut rng = rng_from_seed(77);
        let draws = 10_000_000usize;
        let xs = [10.0, 100.0];
        let mut hits = [0usize; 2];
        for _ in 0..draws {
            let v = d.sample(&mut rng);
            for (h, &x) in hits.iter_mut().zip(&xs) {
                if v > x {
                    *h += 1;
                }
            }
        }
        for (h, &x) in hits.iter().zip(&xs) {
            let p_hat = *h as f64 / draws as f64;
            let p = 1.0 - std::f64::consts::FRAC_2_PI * x.atan();
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((p_hat - p).abs() < 5.0 * se, "x={x}: {p_hat} vs {p}");
        }
        let scaled = 100.0 * hits[1] as f64 / draws as f64;
        assert!((scaled - std::f64::consts::FRAC_2_PI).abs() < 0.05, "{scaled}");
    }
}
