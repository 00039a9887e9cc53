//! Fully resolved runs. Every command is turned into a [`RunSpec`] before it
//! executes; the spec is echoed to the sidecar and `replay` executes it again.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use lpcluster::estimators::sum_index_alpha_warning;
use lpcluster::experiments::{
    run_heatmap, run_mc, run_variance_comparison, AlphaPolicy, EstimatorSpec, FunctionalChoice,
    HeatmapConfig, HeatmapGrid, McConfig, McReport, OracleSettings, PPolicy, SEED_SCHEME,
};
use lpcluster::models::{simulate, ModelSpec};
use lpcluster::oracles::model_truth;
use lpcluster::{EstimatorConfig, Execution, PExponent};

use crate::error::{CliError, Result};
use crate::output::{
    estimate_row, num, opt, sidecar_path, with_suffix, write_json, Table, ESTIMATE_HEADER,
    SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Where `estimate` gets its data from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeriesInput {
    Simulated { model: ModelSpec, n: usize, seed: u64 },
    File { path: PathBuf, model: Option<ModelSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RunSpec {
    Simulate {
        model: ModelSpec,
        n: usize,
        seed: u64,
    },
    Estimate {
        input: SeriesInput,
        estimators: Vec<EstimatorSpec>,
    },
    /// One Monte Carlo study per functional, all from the same seeds.
    Mc { runs: Vec<McConfig> },
    Heatmap { config: HeatmapConfig },
    Oracle {
        model: ModelSpec,
        functionals: Vec<FunctionalChoice>,
        settings: OracleSettings,
    },
    VarianceCompare {
        model: ModelSpec,
        n: usize,
        reps: usize,
        k: usize,
        master_seed: u64,
    },
}

/// Contents of `<out>.config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    pub lpcluster_version: String,
    pub run: RunSpec,
    pub format: Format,
    pub out: PathBuf,
    pub seed_scheme: String,
    /// Values the run computed from its inputs, such as block lengths.
    pub derived: serde_json::Value,
    pub files: Vec<PathBuf>,
}

pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub derived: serde_json::Value,
}

impl RunSpec {
    pub fn default_out(&self, format: Format) -> PathBuf {
        let stem = match self {
            RunSpec::Simulate { .. } => "series",
            RunSpec::Estimate { .. } => "estimate",
            RunSpec::Mc { .. } => return PathBuf::from("mc"),
            RunSpec::Heatmap { .. } => "heatmap",
            RunSpec::Oracle { .. } => "oracle",
            RunSpec::VarianceCompare { .. } => "variance",
        };
        PathBuf::from(format!("{stem}.{}", format.ext()))
    }

    /// Prints alpha warnings for sum-index estimators to stderr.
    pub fn warn(&self) {
        let mut alphas = Vec::new();
        let mut push = |f: FunctionalChoice, alpha: Option<f64>| {
            if f == FunctionalChoice::SumIndex {
                alphas.extend(alpha);
            }
        };
        let known = |e: &EstimatorSpec, m: Option<&ModelSpec>| match e.alpha {
            AlphaPolicy::Known { alpha } => Some(alpha),
            _ => m.map(ModelSpec::tail_index),
        };
        match self {
            RunSpec::Estimate { input, estimators } => {
                let m = match input {
                    SeriesInput::Simulated { model, .. } => Some(model),
                    SeriesInput::File { model, .. } => model.as_ref(),
                };
                estimators.iter().for_each(|e| push(e.functional, known(e, m)));
            }
            RunSpec::Mc { runs } => runs
                .iter()
                .for_each(|c| push(c.estimator.functional, known(&c.estimator, Some(&c.model)))),
            RunSpec::Heatmap { config } => push(config.functional, Some(config.model.tail_index())),
            RunSpec::Oracle {
                model, functionals, ..
            } => functionals.iter().for_each(|&f| push(f, Some(model.tail_index()))),
            _ => {}
        }
        alphas.dedup();
        for a in alphas {
            if let Some(w) = sum_index_alpha_warning(a) {
                eprintln!("warning: {w}");
            }
        }
    }

    pub fn execute(&self, out: &Path, format: Format, exec: Execution) -> Result<Outcome> {
        match self {
            RunSpec::Simulate { model, n, seed } => run_simulate(model, *n, *seed, out, format),
            RunSpec::Estimate { input, estimators } => run_estimate(input, estimators, out, format),
            RunSpec::Mc { runs } => run_mc_all(runs, out, format, exec),
            RunSpec::Heatmap { config } => run_grid(config, out, format, exec),
            RunSpec::Oracle {
                model,
                functionals,
                settings,
            } => run_oracle(model, functionals, settings, out, format, exec),
            RunSpec::VarianceCompare {
                model,
                n,
                reps,
                k,
                master_seed,
            } => {
                let v = run_variance_comparison(model, *n, *reps, *k, *master_seed, exec)?;
                match format {
                    Format::Json => write_json(out, &v)?,
                    Format::Csv => {
                        let mut t = Table::new(
                            "variance_comparison",
                            vec![
                                "k",
                                "b",
                                "reps",
                                "mean_alpha_blocks",
                                "mean_classic",
                                "var_alpha_blocks",
                                "var_classic",
                                "ratio",
                            ],
                        );
                        t.comments.push(format!("model: {}", model_json(model)));
                        t.rows.push(vec![
                            v.k.to_string(),
                            v.b.to_string(),
                            v.reps.to_string(),
                            num(v.mean_alpha_blocks),
                            num(v.mean_classic),
                            num(v.var_alpha_blocks),
                            num(v.var_classic),
                            num(v.ratio),
                        ]);
                        t.write(out)?;
                    }
                }
                Ok(Outcome {
                    summary: format!(
                        "variance-compare: k var alpha-blocks {:.5}, classic {:.5}, ratio {:.4} (b = {}, reps = {})",
                        v.var_alpha_blocks, v.var_classic, v.ratio, v.b, v.reps
                    ),
                    files: vec![out.to_path_buf()],
                    derived: json!({ "b": v.b, "block_len_rule": "floor(sqrt(n / k))" }),
                })
            }
        }
    }
}

/// Runs `spec`, writes its outputs and the sidecar, returns the summary line.
pub fn run_and_record(spec: &RunSpec, out: &Path, format: Format, exec: Execution) -> Result<String> {
    spec.warn();
    let outcome = spec.execute(out, format, exec)?;
    let sidecar = Sidecar {
        schema_version: SCHEMA_VERSION,
        lpcluster_version: env!("CARGO_PKG_VERSION").to_string(),
        run: spec.clone(),
        format,
        out: out.to_path_buf(),
        seed_scheme: SEED_SCHEME.to_string(),
        derived: outcome.derived,
        files: outcome.files,
    };
    let path = sidecar_path(out);
    write_json(&path, &sidecar)?;
    Ok(format!("{} [config: {}]", outcome.summary, path.display()))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))
}

fn model_json(m: &ModelSpec) -> String {
    serde_json::to_string(m).expect("model serializes")
}

fn run_simulate(model: &ModelSpec, n: usize, seed: u64, out: &Path, format: Format) -> Result<Outcome> {
    let s = simulate(model, n, seed)?;
    match format {
        Format::Json => write_json(out, &s)?,
        Format::Csv => {
            let mut t = Table::new("series", vec!["x"]);
            t.comments.push(format!("model: {}", model_json(model)));
            t.comments.push(format!("seed: {seed}"));
            t.comments.push(format!("n: {n}"));
            t.rows = s.values.iter().map(|&v| vec![num(v)]).collect();
            t.write(out)?;
        }
    }
    Ok(Outcome {
        summary: format!("simulate: {} values of {} (seed {seed}) -> {}", n, model.label(), out.display()),
        files: vec![out.to_path_buf()],
        derived: json!({ "burn_in": lpcluster::models::BURN_IN }),
    })
}

/// Reads the `x` column of a series CSV, skipping `#` lines.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| CliError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let headers = r
        .headers()
        .map_err(|source| CliError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == "x")
        .ok_or_else(|| CliError::config("series", format!("{}: no `x` column", path.display())))?;
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| CliError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let field = rec.get(col).unwrap_or("");
        let v: f64 = field.trim().parse().map_err(|_| {
            CliError::config("series", format!("{}: row {}: `{field}` is not a number", path.display(), line + 1))
        })?;
        values.push(v);
    }
    Ok(values)
}

fn run_estimate(input: &SeriesInput, estimators: &[EstimatorSpec], out: &Path, format: Format) -> Result<Outcome> {
    let (values, model, seed) = match input {
        SeriesInput::Simulated { model, n, seed } => (simulate(model, *n, *seed)?.values, Some(model), Some(*seed)),
        SeriesInput::File { path, model } => (read_series(path)?, model.as_ref(), None),
    };
    let mut rows = Vec::with_capacity(estimators.len());
    for spec in estimators {
        let alpha = spec.resolve_alpha(&values, model).map_err(|e| match e {
            lpcluster::Error::InvalidParameter { field: "alpha", .. } => {
                CliError::config("alpha", "a numeric alpha or `hill` is needed without --model")
            }
            e => e.into(),
        })?;
        let mut r = spec.apply_with_alpha(&values, alpha)?;
        r.seed = seed;
        rows.push(r);
    }
    match format {
        Format::Json => write_json(out, &rows)?,
        Format::Csv => {
            let mut t = Table::new("estimate", ESTIMATE_HEADER.to_vec());
            match input {
                SeriesInput::Simulated { model, n, seed } => {
                    t.comments.push(format!("model: {}", model_json(model)));
                    t.comments.push(format!("n: {n}, seed: {seed}"));
                }
                SeriesInput::File { path, .. } => t.comments.push(format!("series: {}", path.display())),
            }
            t.rows = rows.iter().map(estimate_row).collect();
            t.write(out)?;
        }
    }
    let first = &rows[0];
    let summary = if rows.len() == 1 {
        format!(
            "estimate: {} = {:.6} (plug-in se {:.6}; k = {}, b = {}, m = {}, alpha = {:.4}) -> {}",
            first.estimator,
            first.estimate,
            first.plug_in_se(),
            first.k,
            first.b,
            first.m,
            first.alpha,
            out.display()
        )
    } else {
        let parts: Vec<String> = rows.iter().map(|r| format!("{} = {:.6}", r.estimator, r.estimate)).collect();
        format!(
            "estimate: {} (k = {}, b = {}, m = {}) -> {}",
            parts.join(", "),
            first.k,
            first.b,
            first.m,
            out.display()
        )
    };
    Ok(Outcome {
        summary,
        files: vec![out.to_path_buf()],
        derived: json!({
            "n": values.len(),
            "b": first.b,
            "m": first.m,
            "alpha": rows.iter().map(|r| r.alpha).collect::<Vec<_>>(),
            "block_len_rule": "floor(sqrt(n / k)) unless b is given",
        }),
    })
}

fn resolved_b(cfg: &McConfig) -> Result<(usize, usize)> {
    let r = EstimatorConfig {
        p: PExponent::Infinity,
        alpha: 1.0,
        k: cfg.estimator.k,
        b: cfg.estimator.b,
    }
    .resolve(cfg.n)?;
    Ok((r.b, r.m))
}

fn mc_summary_json(r: &McReport) -> serde_json::Value {
    let o = r.oracle.as_ref();
    json!({
        "schema": crate::output::schema_id("mc_summary"),
        "functional": r.config.estimator.functional.tag(),
        "reps": r.per_rep.len(),
        "n": r.config.n,
        "k": r.config.estimator.k,
        "mean": r.mean,
        "sd": r.sd,
        "mse": r.mse,
        "oracle": o.map(|o| o.value),
        "oracle_variance": o.map(|o| o.variance),
        "oracle_mc_stderr": o.and_then(|o| o.mc_stderr),
        "oracle_provenance": o.map(|o| o.provenance.clone()),
        "overlay": r.gaussian_overlay,
    })
}

fn run_mc_all(runs: &[McConfig], out: &Path, format: Format, exec: Execution) -> Result<Outcome> {
    let mut files = Vec::new();
    let mut parts = Vec::new();
    let mut derived = Vec::new();
    for cfg in runs {
        let report = run_mc(cfg, exec)?;
        let tag = cfg.estimator.functional.tag();
        let (b, m) = resolved_b(cfg)?;
        derived.push(json!({ "functional": tag, "b": b, "m": m }));
        match format {
            Format::Json => {
                let path = with_suffix(out, &format!("_{tag}.json"));
                write_json(&path, &report)?;
                files.push(path);
            }
            Format::Csv => {
                let path = with_suffix(out, &format!("_{tag}.csv"));
                let mut t = Table::new(
                    "mc",
                    vec!["rep", "seed", "estimate", "plug_in_variance", "k", "b", "alpha_used"],
                );
                t.comments.push(format!("model: {}", model_json(&cfg.model)));
                t.comments.push(format!(
                    "functional: {tag}, n: {}, master_seed: {}",
                    cfg.n, cfg.master_seed
                ));
                t.rows = report
                    .per_rep
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        vec![
                            i.to_string(),
                            opt(e.seed),
                            num(e.estimate),
                            num(e.plug_in_variance),
                            e.k.to_string(),
                            e.b.to_string(),
                            num(e.alpha),
                        ]
                    })
                    .collect();
                t.write(&path)?;
                let summary = with_suffix(out, &format!("_{tag}.summary.json"));
                write_json(&summary, &mc_summary_json(&report))?;
                files.push(path);
                files.push(summary);
            }
        }
        parts.push(match report.oracle.as_ref() {
            Some(o) => format!("{tag} mean {:.4} sd {:.4} (oracle {:.4})", report.mean, report.sd, o.value),
            None => format!("{tag} mean {:.4} sd {:.4}", report.mean, report.sd),
        });
    }
    Ok(Outcome {
        summary: format!(
            "mc: {} reps of {}; {} -> {}",
            runs[0].reps,
            runs[0].model.label(),
            parts.join("; "),
            with_suffix(out, "_*").display()
        ),
        files,
        derived: json!({ "runs": derived, "block_len_rule": "floor(sqrt(n / k)) unless b is given" }),
    })
}

fn grid_json(g: &HeatmapGrid) -> serde_json::Value {
    let finite = |v: f64| v.is_finite().then_some(v);
    let cells: Vec<_> = g
        .cells
        .iter()
        .map(|c| {
            json!({
                "k": c.k, "k_prime": c.k_prime, "sd": finite(c.sd), "mse": finite(c.mse),
                "mean": finite(c.mean), "reps": c.reps, "skipped": c.skipped,
            })
        })
        .collect();
    json!({
        "k_values": g.k_values,
        "k_prime_values": g.k_prime_values,
        "cells": cells,
        "oracle": g.oracle,
    })
}

fn run_grid(cfg: &HeatmapConfig, out: &Path, format: Format, exec: Execution) -> Result<Outcome> {
    let g = run_heatmap(cfg, exec)?;
    match format {
        Format::Json => write_json(out, &grid_json(&g))?,
        Format::Csv => {
            let mut t = Table::new("heatmap", vec!["k", "k_prime", "sd", "mse", "mean", "reps"]);
            t.comments.push(format!("model: {}", model_json(&cfg.model)));
            t.comments.push(format!(
                "functional: {}, n: {}, master_seed: {}, oracle: {} ({})",
                cfg.functional.tag(),
                cfg.n,
                cfg.master_seed,
                num(g.oracle.value),
                g.oracle.provenance
            ));
            for c in &g.cells {
                if let Some(reason) = &c.skipped {
                    t.comments.push(format!("skipped k={} k_prime={}: {reason}", c.k, c.k_prime));
                }
            }
            t.rows = g
                .cells
                .iter()
                .map(|c| {
                    vec![
                        c.k.to_string(),
                        c.k_prime.to_string(),
                        num(c.sd),
                        num(c.mse),
                        num(c.mean),
                        c.reps.to_string(),
                    ]
                })
                .collect();
            t.write(out)?;
        }
    }
    let best = match g.min_mse_cell() {
        Some(c) => format!("min mse {:.3e} at k = {}, k' = {}", c.mse, c.k, c.k_prime),
        None => "every cell skipped".into(),
    };
    let skipped = g.cells.iter().filter(|c| c.skipped.is_some()).count();
    let blocks: Vec<_> = cfg
        .k_grid
        .iter()
        .map(|&k| {
            let r = EstimatorConfig::alpha_blocks(1.0, k).resolve(cfg.n).ok();
            json!({ "k": k, "b": r.map(|r| r.b), "m": r.map(|r| r.m) })
        })
        .collect();
    Ok(Outcome {
        summary: format!(
            "heatmap: {}x{} grid, {} reps, {skipped} skipped; {best} -> {}",
            g.k_values.len(),
            g.k_prime_values.len(),
            cfg.reps,
            out.display()
        ),
        files: vec![out.to_path_buf()],
        derived: json!({ "blocks": blocks, "oracle": g.oracle }),
    })
}

fn run_oracle(
    model: &ModelSpec,
    functionals: &[FunctionalChoice],
    settings: &OracleSettings,
    out: &Path,
    format: Format,
    exec: Execution,
) -> Result<Outcome> {
    let alpha = model.tail_index();
    let mut values = Vec::new();
    for &f in functionals {
        let cf = f.with_alpha(alpha);
        let v = model_truth(model, &cf, &(*settings).into(), exec)?;
        values.push((cf.label(), v));
    }
    match format {
        Format::Json => {
            let items: Vec<_> = values
                .iter()
                .map(|(name, v)| json!({ "estimator": format!("oracle:{name}"), "alpha": alpha, "oracle": v }))
                .collect();
            write_json(out, &items)?;
        }
        Format::Csv => {
            let mut t = Table::new("estimate", ESTIMATE_HEADER.to_vec());
            t.comments.push(format!("model: {}", model_json(model)));
            for (name, v) in &values {
                t.comments.push(format!(
                    "{name}: {} mc_stderr {}",
                    v.provenance,
                    v.mc_stderr.map(num).unwrap_or_else(|| "0".into())
                ));
                let mc = v.mc_stderr.is_some();
                t.rows.push(vec![
                    format!("oracle:{name}"),
                    num(alpha),
                    num(alpha),
                    String::new(),
                    String::new(),
                    String::new(),
                    num(v.value),
                    num(v.variance),
                    String::new(),
                    if mc { settings.seed.to_string() } else { String::new() },
                ]);
            }
            t.write(out)?;
        }
    }
    let parts: Vec<String> = values.iter().map(|(n, v)| format!("{n} = {:.6}", v.value)).collect();
    Ok(Outcome {
        summary: format!("oracle: {} ({}) -> {}", parts.join(", "), values[0].1.provenance, out.display()),
        files: vec![out.to_path_buf()],
        derived: json!({ "alpha": alpha }),
    })
}

/// Checks that an estimator configuration resolves for a series of length `n`.
pub fn check_estimator(spec: &EstimatorSpec, n: usize) -> Result<()> {
    EstimatorConfig {
        p: PExponent::Infinity,
        alpha: 1.0,
        k: spec.k,
        b: spec.b,
    }
    .resolve(n)?;
    if let PPolicy::Fixed(PExponent::Finite(p)) = spec.p {
        PExponent::finite(p)?;
    }
    Ok(())
}
