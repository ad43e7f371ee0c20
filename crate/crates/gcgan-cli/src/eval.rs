//! Scenario generation and statistical scoring against a reference record.
//!
//! Metrics: spatial correlation error, capacity factor, interval
//! variability (Laplace fit of output differences), and the Weibull fit of
//! the per-unit marginal. Degenerate metric inputs surface as per-metric
//! errors in the report rather than failing the whole evaluation.

use std::io::Write;
use std::path::Path;

use gcgan_core::matrix::Matrix;
use gcgan_core::model::Generator;
use gcgan_core::stats::{
    capacity_factor, correlation_error, estimate_correlation, fit_laplace, fit_weibull,
    from_symmetric, variability_series,
};
use gcgan_core::{sample_noise, NoiseDistribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Core(#[from] gcgan_core::CoreError),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_scenarios: usize,
    pub seed: u64,
    pub noise: NoiseDistribution,
    /// Variability horizons to score, in minutes.
    pub variability_minutes: Vec<f64>,
    pub histogram_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 50,
            seed: 1,
            noise: NoiseDistribution::Gaussian,
            variability_minutes: vec![15.0, 30.0, 60.0],
            histogram_bins: 40,
        }
    }
}

/// A metric value or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOutcome<T> {
    pub value: Option<T>,
    pub error: Option<String>,
}

impl<T> MetricOutcome<T> {
    fn from_result<E: std::fmt::Display>(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Self {
                value: Some(v),
                error: None,
            },
            Err(e) => Self {
                value: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceSummary {
    pub location: f64,
    pub scale: f64,
    pub variance: f64,
    pub peak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullSummary {
    pub scale: f64,
    pub shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityEntry {
    pub minutes: f64,
    /// Horizon in record steps; `minutes / interval_minutes`, rounded.
    pub step: usize,
    pub generated: MetricOutcome<LaplaceSummary>,
    pub reference: MetricOutcome<LaplaceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideWeibull {
    pub fit: MetricOutcome<WeibullSummary>,
    /// Fraction of exactly-zero samples dropped before fitting.
    pub zero_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub mae: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityFactorReport {
    pub generated: f64,
    pub reference: f64,
    pub abs_diff: f64,
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub n_scenarios: usize,
    pub horizon: usize,
    pub correlation: CorrelationReport,
    pub capacity_factor: CapacityFactorReport,
    pub variability: Vec<VariabilityEntry>,
    pub weibull_generated: SideWeibull,
    pub weibull_reference: SideWeibull,
}

/// Raw material behind the report, written as plot-ready CSVs.
pub struct EvalArtifacts {
    /// `(i, j, value, source)` long-format correlation entries.
    pub correlation_rows: Vec<(usize, usize, f64, &'static str)>,
    /// `(minutes, bin_left, bin_right, count, source)` histogram rows.
    pub variability_rows: Vec<(f64, f64, f64, u64, &'static str)>,
    /// `(farm, t, value, source)` per-unit series excerpts.
    pub series_rows: Vec<(String, usize, f64, &'static str)>,
    /// Per-unit scenarios, each `N x horizon`.
    pub scenarios: Vec<Matrix>,
}

/// Draw `n_scenarios` independent per-unit scenarios from the generator.
pub fn generate_scenarios(
    generator: &Generator,
    n_scenarios: usize,
    noise: NoiseDistribution,
    seed: u64,
) -> Result<Vec<Matrix>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_scenarios);
    for _ in 0..n_scenarios {
        let z = sample_noise(generator.n_farms, generator.noise_dim, noise, &mut rng);
        let symmetric = generator.forward(&z)?;
        out.push(from_symmetric(&symmetric)?);
    }
    Ok(out)
}

/// Concatenate scenarios along time into one `N x (n * horizon)` record.
fn pool_scenarios(scenarios: &[Matrix]) -> Result<Matrix, EvalError> {
    let n = scenarios[0].rows();
    let t = scenarios[0].cols();
    let mut pooled = Matrix::zeros(n, scenarios.len() * t);
    for (s, scen) in scenarios.iter().enumerate() {
        if scen.shape() != (n, t) {
            return Err(EvalError::Config("inconsistent scenario shapes".into()));
        }
        for i in 0..n {
            for j in 0..t {
                pooled.set(i, j + s * t, scen.get(i, j));
            }
        }
    }
    Ok(pooled)
}

fn laplace_summary(samples: &[f64]) -> MetricOutcome<LaplaceSummary> {
    MetricOutcome::from_result(fit_laplace(samples).map(|f| LaplaceSummary {
        location: f.location,
        scale: f.scale,
        variance: f.variance(),
        peak: f.peak(),
    }))
}

fn weibull_side(values: &Matrix) -> SideWeibull {
    let total = values.data().len();
    let positive: Vec<f64> = values.data().iter().copied().filter(|&v| v > 0.0).collect();
    let zero_fraction = (total - positive.len()) as f64 / total as f64;
    SideWeibull {
        fit: MetricOutcome::from_result(
            fit_weibull(&positive).map(|f| WeibullSummary {
                scale: f.scale,
                shape: f.shape,
            }),
        ),
        zero_fraction,
    }
}

/// Variability samples pooled per scenario; differences never straddle a
/// scenario boundary.
fn scenario_variability(scenarios: &[Matrix], step: usize) -> Result<Vec<f64>, String> {
    let mut all = Vec::new();
    for s in scenarios {
        all.extend(variability_series(s, step).map_err(|e| e.to_string())?);
    }
    Ok(all)
}

fn histogram_rows(
    minutes: f64,
    gen: &[f64],
    reference: &[f64],
    bins: usize,
    rows: &mut Vec<(f64, f64, f64, u64, &'static str)>,
) {
    let max_abs = gen
        .iter()
        .chain(reference)
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    if max_abs == 0.0 || bins == 0 {
        return;
    }
    let lo = -max_abs;
    let width = 2.0 * max_abs / bins as f64;
    for (samples, source) in [(gen, "generated"), (reference, "reference")] {
        let mut counts = vec![0u64; bins];
        for &v in samples {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        for (b, &c) in counts.iter().enumerate() {
            rows.push((minutes, lo + b as f64 * width, lo + (b + 1) as f64 * width, c, source));
        }
    }
}

pub fn evaluate(
    generator: &Generator,
    reference: &Dataset,
    config: &EvalConfig,
) -> Result<(EvalReport, EvalArtifacts), EvalError> {
    if config.n_scenarios == 0 {
        return Err(EvalError::Config("n_scenarios must be at least 1".into()));
    }
    if generator.n_farms != reference.n_farms() {
        return Err(EvalError::Config(format!(
            "generator has {} farms, reference {}",
            generator.n_farms,
            reference.n_farms()
        )));
    }
    let scenarios = generate_scenarios(generator, config.n_scenarios, config.noise, config.seed)?;
    let pooled = pool_scenarios(&scenarios)?;

    let c_ref = estimate_correlation(&reference.values)?;
    let c_gen = estimate_correlation(&pooled)?;
    let (mae, max) = correlation_error(&c_gen, &c_ref)?;

    let cf_gen = capacity_factor(&pooled)?;
    let cf_ref = capacity_factor(&reference.values)?;

    let mut variability = Vec::new();
    let mut variability_rows = Vec::new();
    for &minutes in &config.variability_minutes {
        let step = (minutes / reference.interval_minutes).round() as usize;
        let gen_samples = if step == 0 {
            Err(format!(
                "{minutes} min is below the record interval {}",
                reference.interval_minutes
            ))
        } else {
            scenario_variability(&scenarios, step)
        };
        let ref_samples = if step == 0 {
            Err("interval below record resolution".to_string())
        } else {
            variability_series(&reference.values, step).map_err(|e| e.to_string())
        };
        if let (Ok(g), Ok(r)) = (&gen_samples, &ref_samples) {
            histogram_rows(minutes, g, r, config.histogram_bins, &mut variability_rows);
        }
        let outcome = |s: Result<Vec<f64>, String>| match s {
            Ok(v) => laplace_summary(&v),
            Err(e) => MetricOutcome {
                value: None,
                error: Some(e),
            },
        };
        variability.push(VariabilityEntry {
            minutes,
            step,
            generated: outcome(gen_samples),
            reference: outcome(ref_samples),
        });
    }

    let report = EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        n_scenarios: config.n_scenarios,
        horizon: generator.horizon,
        correlation: CorrelationReport { mae, max },
        capacity_factor: CapacityFactorReport {
            generated: cf_gen,
            reference: cf_ref,
            abs_diff: (cf_gen - cf_ref).abs(),
        },
        variability,
        weibull_generated: weibull_side(&pooled),
        weibull_reference: weibull_side(&reference.values),
    };

    let mut correlation_rows = Vec::new();
    for (matrix, source) in [(&c_gen, "generated"), (&c_ref, "reference")] {
        for i in 0..matrix.n() {
            for j in 0..matrix.n() {
                correlation_rows.push((i, j, matrix.entries().get(i, j), source));
            }
        }
    }

    let mut series_rows = Vec::new();
    let excerpt = scenarios[0].cols().min(reference.t_total());
    for i in 0..reference.n_farms() {
        for t in 0..excerpt {
            series_rows.push((
                reference.farm_ids[i].clone(),
                t,
                scenarios[0].get(i, t),
                "generated",
            ));
            series_rows.push((
                reference.farm_ids[i].clone(),
                t,
                reference.values.get(i, t),
                "reference",
            ));
        }
    }

    Ok((
        report,
        EvalArtifacts {
            correlation_rows,
            variability_rows,
            series_rows,
            scenarios,
        },
    ))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, EvalError> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(
        |e| EvalError::Io {
            path: path.display().to_string(),
            source: e,
        },
    )?))
}

fn finish(path: &Path, r: std::io::Result<()>) -> Result<(), EvalError> {
    r.map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Write `report.json` plus the plot-ready CSV side files.
pub fn write_eval_outputs(
    dir: &Path,
    report: &EvalReport,
    artifacts: &EvalArtifacts,
) -> Result<(), EvalError> {
    let report_path = dir.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(report).unwrap()).map_err(|e| {
        EvalError::Io {
            path: report_path.display().to_string(),
            source: e,
        }
    })?;

    let p = dir.join("correlation.csv");
    let mut out = create(&p)?;
    finish(
        &p,
        (|| {
            writeln!(out, "i,j,value,source")?;
            for (i, j, v, s) in &artifacts.correlation_rows {
                writeln!(out, "{i},{j},{v},{s}")?;
            }
            out.flush()
        })(),
    )?;

    let p = dir.join("variability_histogram.csv");
    let mut out = create(&p)?;
    finish(
        &p,
        (|| {
            writeln!(out, "minutes,bin_left,bin_right,count,source")?;
            for (m, l, r, c, s) in &artifacts.variability_rows {
                writeln!(out, "{m},{l},{r},{c},{s}")?;
            }
            out.flush()
        })(),
    )?;

    let p = dir.join("sample_series.csv");
    let mut out = create(&p)?;
    finish(
        &p,
        (|| {
            writeln!(out, "farm,t,value,source")?;
            for (farm, t, v, s) in &artifacts.series_rows {
                writeln!(out, "{farm},{t},{v},{s}")?;
            }
            out.flush()
        })(),
    )
}
