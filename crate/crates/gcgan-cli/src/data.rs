//! Dataset loading, surrogate synthesis, and window sampling.
//!
//! On-disk layout mirrors market operator exports: `data.csv` holds MW
//! values with farms as columns, and a `meta.json` sidecar carries the
//! installed capacities and sample interval. In memory everything is
//! per-unit of capacity in `[0, 1]`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;
use gcgan_core::matrix::Matrix;
use gcgan_core::stats::{to_symmetric, CorrelationMatrix};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("metadata error: {0}")]
    Meta(String),
    #[error("non-numeric cell at row {row}, column {col}: {text:?}")]
    NonNumeric {
        row: usize,
        col: usize,
        text: String,
    },
    #[error("farm {farm} value {value} MW exceeds capacity {capacity} MW by more than 1%")]
    OverCapacity {
        farm: String,
        value: f64,
        capacity: f64,
    },
    #[error("negative output {value} MW for farm {farm}")]
    NegativeOutput { farm: String, value: f64 },
    #[error("dataset invalid: {0}")]
    Invalid(String),
    #[error("target correlation is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error(transparent)]
    Core(#[from] gcgan_core::CoreError),
}

/// Multi-farm per-unit wind power record.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub farm_ids: Vec<String>,
    /// Installed capacities in MW, aligned with `farm_ids`.
    pub capacities: Vec<f64>,
    pub interval_minutes: f64,
    /// `N x T_total`, rows are farms, entries in `[0, 1]`.
    pub values: Matrix,
}

impl Dataset {
    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.farm_ids.len();
        if n < 2 {
            return Err(DataError::Invalid("need at least 2 farms".into()));
        }
        if self.values.rows() != n || self.capacities.len() != n {
            return Err(DataError::Invalid("farm count mismatch".into()));
        }
        if self.values.cols() < 2 {
            return Err(DataError::Invalid("need at least 2 time steps".into()));
        }
        if self.interval_minutes <= 0.0 {
            return Err(DataError::Invalid("interval must be positive".into()));
        }
        if self.capacities.iter().any(|&c| !(c > 0.0)) {
            return Err(DataError::Invalid("capacities must be positive".into()));
        }
        if self.values.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DataError::Invalid("per-unit values outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn n_farms(&self) -> usize {
        self.farm_ids.len()
    }

    pub fn t_total(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    interval_minutes: f64,
    capacities: BTreeMap<String, f64>,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Load `data.csv` (+ `meta.json` sidecar) and convert MW to per-unit.
/// Values up to 1% above capacity are clamped to 1 with a warning; larger
/// excursions are errors.
pub fn load_csv(data_path: &Path, meta_path: &Path) -> Result<Dataset, DataError> {
    let meta_text = std::fs::read_to_string(meta_path).map_err(|e| io_err(meta_path, e))?;
    let meta: Meta =
        serde_json::from_str(&meta_text).map_err(|e| DataError::Meta(e.to_string()))?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(data_path)
        .map_err(DataError::Csv)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || headers.get(0) != Some("timestamp") {
        return Err(DataError::Meta(
            "expected header `timestamp,<farm>,...` with at least 2 farms".into(),
        ));
    }
    let farm_ids: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut capacities = Vec::with_capacity(farm_ids.len());
    for id in &farm_ids {
        let cap = meta
            .capacities
            .get(id)
            .ok_or_else(|| DataError::Meta(format!("no capacity for farm {id}")))?;
        capacities.push(*cap);
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); farm_ids.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        // The csv reader rejects ragged rows against the header width.
        for (col, cell) in record.iter().skip(1).enumerate() {
            let mw: f64 = cell.trim().parse().map_err(|_| DataError::NonNumeric {
                row: row_idx + 2,
                col: col + 2,
                text: cell.to_string(),
            })?;
            let cap = capacities[col];
            if mw < 0.0 {
                return Err(DataError::NegativeOutput {
                    farm: farm_ids[col].clone(),
                    value: mw,
                });
            }
            if mw > cap * 1.01 {
                return Err(DataError::OverCapacity {
                    farm: farm_ids[col].clone(),
                    value: mw,
                    capacity: cap,
                });
            }
            let mut pu = mw / cap;
            if pu > 1.0 {
                eprintln!(
                    "warning: clamping {} MW to capacity {} MW for farm {}",
                    mw, cap, farm_ids[col]
                );
                pu = 1.0;
            }
            columns[col].push(pu);
        }
    }
    let t_total = columns[0].len();
    let mut data = Vec::with_capacity(farm_ids.len() * t_total);
    for col in &columns {
        data.extend_from_slice(col);
    }
    let values = Matrix::new(farm_ids.len(), t_total, data)
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    let dataset = Dataset {
        farm_ids,
        capacities,
        interval_minutes: meta.interval_minutes,
        values,
    };
    dataset.validate()?;
    Ok(dataset)
}

const TIMESTAMP_EPOCH: &str = "2020-01-01T00:00:00";

fn timestamp(interval_minutes: f64, step: usize) -> String {
    let start = NaiveDateTime::parse_from_str(TIMESTAMP_EPOCH, "%Y-%m-%dT%H:%M:%S").unwrap();
    let t = start + chrono::Duration::seconds((interval_minutes * 60.0) as i64 * step as i64);
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

/// Write `data.csv` (MW) and `meta.json` for a dataset.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), DataError> {
    dataset.validate()?;
    let meta = Meta {
        interval_minutes: dataset.interval_minutes,
        capacities: dataset
            .farm_ids
            .iter()
            .cloned()
            .zip(dataset.capacities.iter().copied())
            .collect(),
    };
    let meta_path = dir.join("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).unwrap())
        .map_err(|e| io_err(&meta_path, e))?;
    write_values_csv(
        &dir.join("data.csv"),
        &dataset.farm_ids,
        dataset.interval_minutes,
        &Matrix::from_fn(dataset.n_farms(), dataset.t_total(), |i, j| {
            dataset.values.get(i, j) * dataset.capacities[i]
        }),
    )
}

/// Write a farms-as-columns CSV with synthetic timestamps. Values are
/// written with full round-trip precision.
pub fn write_values_csv(
    path: &Path,
    farm_ids: &[String],
    interval_minutes: f64,
    values: &Matrix,
) -> Result<(), DataError> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| io_err(path, e))?,
    );
    (|| -> std::io::Result<()> {
        write!(out, "timestamp")?;
        for id in farm_ids {
            write!(out, ",{id}")?;
        }
        writeln!(out)?;
        for t in 0..values.cols() {
            write!(out, "{}", timestamp(interval_minutes, t))?;
            for i in 0..values.rows() {
                write!(out, ",{}", values.get(i, t))?;
            }
            writeln!(out)?;
        }
        out.flush()
    })()
    .map_err(|e| io_err(path, e))
}

/// Surrogate dataset description: Gaussian-copula AR(1) streams pushed
/// through Weibull marginals, clamped to rated capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_farms: usize,
    pub t_total: usize,
    /// Row-major `n_farms x n_farms` target correlation.
    pub target_correlation: Vec<Vec<f64>>,
    pub ar_coefficient: f64,
    pub weibull_scale: f64,
    pub weibull_shape: f64,
    pub seed: u64,
    pub capacity_mw: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_farms: 4,
            t_total: 20_000,
            target_correlation: vec![
                vec![1.0, 0.9, 0.1, 0.1],
                vec![0.9, 1.0, 0.1, 0.1],
                vec![0.1, 0.1, 1.0, 0.1],
                vec![0.1, 0.1, 0.1, 1.0],
            ],
            ar_coefficient: 0.95,
            weibull_scale: 0.33,
            weibull_shape: 2.9,
            seed: 0,
            capacity_mw: 100.0,
        }
    }
}

/// Lower-triangular Cholesky factor; errors if the matrix is not PSD.
fn cholesky(c: &Matrix) -> Result<Matrix, DataError> {
    let n = c.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = c.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 1e-12 {
                    return Err(DataError::NotPositiveSemidefinite);
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Standard normal CDF via the complementary error function.
fn normal_cdf_upper(z: f64) -> f64 {
    // P(Z > z), computed directly to stay accurate in the upper tail.
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

pub fn synthesize(spec: &SynthSpec) -> Result<Dataset, DataError> {
    if spec.n_farms < 2 || spec.t_total < 2 {
        return Err(DataError::Invalid(
            "need at least 2 farms and 2 time steps".into(),
        ));
    }
    if !(0.0..1.0).contains(&spec.ar_coefficient) {
        return Err(DataError::Invalid("ar_coefficient must be in [0, 1)".into()));
    }
    let n = spec.n_farms;
    let flat: Vec<f64> = spec.target_correlation.iter().flatten().copied().collect();
    let target = Matrix::new(n, n, flat).map_err(|e| DataError::Invalid(e.to_string()))?;
    CorrelationMatrix::new(target.clone())?;
    let l = cholesky(&target)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let innovation_scale = (1.0 - spec.ar_coefficient * spec.ar_coefficient).sqrt();
    let mut state = vec![0.0f64; n];
    let mut values = Matrix::zeros(n, spec.t_total);
    for t in 0..spec.t_total {
        let eps = gcgan_core::sample_noise(n, 1, gcgan_core::NoiseDistribution::Gaussian, &mut rng);
        // Spatially correlated innovation with the stationary covariance.
        for i in 0..n {
            let mut corr = 0.0;
            for k in 0..=i {
                corr += l.get(i, k) * eps.get(k, 0);
            }
            state[i] = if t == 0 {
                corr
            } else {
                spec.ar_coefficient * state[i] + innovation_scale * corr
            };
        }
        for i in 0..n {
            // Gaussian copula: uniform tail, then inverse Weibull CDF.
            let q = normal_cdf_upper(state[i]).max(f64::MIN_POSITIVE);
            let draw = spec.weibull_scale * libm::pow(-libm::log(q), 1.0 / spec.weibull_shape);
            values.set(i, t, draw.clamp(0.0, 1.0));
        }
    }

    let dataset = Dataset {
        farm_ids: (1..=n).map(|i| format!("FARM{i}")).collect(),
        capacities: vec![spec.capacity_mw; n],
        interval_minutes: 5.0,
        values,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Uniformly random training windows in the symmetric `[-1, 1]` encoding.
pub fn sample_windows(
    dataset: &Dataset,
    t_window: usize,
    n_windows: usize,
    seed: u64,
) -> Result<Vec<Matrix>, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_windows_with_rng(dataset, t_window, n_windows, &mut rng)
}

pub fn sample_windows_with_rng(
    dataset: &Dataset,
    t_window: usize,
    n_windows: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Matrix>, DataError> {
    if t_window == 0 || t_window > dataset.t_total() {
        return Err(DataError::Invalid(format!(
            "window length {t_window} out of range for {} steps",
            dataset.t_total()
        )));
    }
    let max_start = dataset.t_total() - t_window;
    let mut windows = Vec::with_capacity(n_windows);
    for _ in 0..n_windows {
        let start = if max_start == 0 {
            0
        } else {
            rng.gen_range(0..=max_start)
        };
        let w = Matrix::from_fn(dataset.n_farms(), t_window, |i, j| {
            dataset.values.get(i, start + j)
        });
        windows.push(to_symmetric(&w)?);
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gcgan_core::stats::estimate_correlation;

    fn write_files(dir: &Path, csv: &str, meta: &str) -> (std::path::PathBuf, std::path::PathBuf) {
        let data = dir.join("data.csv");
        let metap = dir.join("meta.json");
        std::fs::write(&data, csv).unwrap();
        std::fs::write(&metap, meta).unwrap();
        (data, metap)
    }

    const META2: &str =
        r#"{ "interval_minutes": 5, "capacities": {"A": 100.0, "B": 50.0} }"#;

    #[test]
    fn load_full_output_and_zero_output() {
        let dir = tempfile::tempdir().unwrap();
        let (d, m) = write_files(
            dir.path(),
            "timestamp,A,B\n2020-01-01T00:00:00,100,50\n2020-01-01T00:05:00,100,50\n2020-01-01T00:10:00,100,50\n",
            META2,
        );
        let ds = load_csv(&d, &m).unwrap();
        assert_eq!(ds.values, Matrix::filled(2, 3, 1.0));

        let (d, m) = write_files(
            dir.path(),
            "timestamp,A,B\n2020-01-01T00:00:00,0,0\n2020-01-01T00:05:00,0,0\n",
            META2,
        );
        let ds = load_csv(&d, &m).unwrap();
        assert_eq!(ds.values, Matrix::zeros(2, 2));
    }

    #[test]
    fn load_half_capacity_row() {
        let dir = tempfile::tempdir().unwrap();
        let (d, m) = write_files(
            dir.path(),
            "timestamp,A,B\n2020-01-01T00:00:00,50,25\n2020-01-01T00:05:00,50,25\n",
            META2,
        );
        let ds = load_csv(&d, &m).unwrap();
        assert!(ds.values.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn load_rejects_bad_cells() {
        let dir = tempfile::tempdir().unwrap();
        let (d, m) = write_files(
            dir.path(),
            "timestamp,A,B\n2020-01-01T00:00:00,abc,25\n",
            META2,
        );
        assert!(matches!(load_csv(&d, &m), Err(DataError::NonNumeric { .. })));

        let (d, m) = write_files(
            dir.path(),
            "timestamp,A,B\n2020-01-01T00:00:00,150,25\n2020-01-01T00:05:00,10,25\n",
            META2,
        );
        assert!(matches!(load_csv(&d, &m), Err(DataError::OverCapacity { .. })));

        assert!(matches!(
            load_csv(&dir.path().join("missing.csv"), &m),
            Err(DataError::Csv(_))
        ));
    }

    #[test]
    fn clamps_one_percent_overshoot() {
        let dir = tempfile::tempdir().unwrap();
        let (d, m) = write_files(
            dir.path(),
            "timestamp,A,B\n2020-01-01T00:00:00,100.9,25\n2020-01-01T00:05:00,10,25\n",
            META2,
        );
        let ds = load_csv(&d, &m).unwrap();
        assert_eq!(ds.values.get(0, 0), 1.0);
    }

    fn four_farm_spec(seed: u64, t_total: usize) -> SynthSpec {
        SynthSpec {
            n_farms: 4,
            t_total,
            target_correlation: vec![
                vec![1.0, 0.9, 0.1, 0.1],
                vec![0.9, 1.0, 0.1, 0.1],
                vec![0.1, 0.1, 1.0, 0.1],
                vec![0.1, 0.1, 0.1, 1.0],
            ],
            ar_coefficient: 0.95,
            weibull_scale: 0.33,
            weibull_shape: 2.9,
            seed,
            capacity_mw: 100.0,
        }
    }

    #[test]
    fn synthesize_is_deterministic() {
        let spec = four_farm_spec(5, 500);
        assert_eq!(synthesize(&spec).unwrap(), synthesize(&spec).unwrap());
    }

    #[test]
    fn synthesize_identity_target_nearly_uncorrelated() {
        let mut spec = four_farm_spec(9, 60_000);
        spec.target_correlation = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ];
        let ds = synthesize(&spec).unwrap();
        let c = estimate_correlation(&ds.values).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(c.entries().get(i, j).abs() < 0.05, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn synthesize_preserves_correlation_ordering() {
        let ds = synthesize(&four_farm_spec(11, 60_000)).unwrap();
        let c = estimate_correlation(&ds.values).unwrap();
        // The strongly targeted pair must dominate every weakly targeted one.
        let strong = c.entries().get(0, 1);
        for &(i, j) in &[(0usize, 2usize), (0, 3), (1, 2), (1, 3), (2, 3)] {
            assert!(strong > c.entries().get(i, j) + 0.2);
        }
    }

    #[test]
    fn synthesize_rejects_non_psd_target() {
        let mut spec = four_farm_spec(1, 100);
        spec.target_correlation = vec![
            vec![1.0, 0.99, -0.99, 0.1],
            vec![0.99, 1.0, 0.9, 0.1],
            vec![-0.99, 0.9, 1.0, 0.1],
            vec![0.1, 0.1, 0.1, 1.0],
        ];
        assert!(matches!(
            synthesize(&spec),
            Err(DataError::NotPositiveSemidefinite)
        ));
    }

    #[test]
    fn window_sampling_contract() {
        let ds = synthesize(&four_farm_spec(3, 64)).unwrap();
        // Full-length window: only one choice.
        let w = sample_windows(&ds, 64, 3, 1).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[0], w[1]);
        assert!(w[0].data().iter().all(|v| (-1.0..=1.0).contains(v)));

        assert!(sample_windows(&ds, 0, 1, 1).is_err());
        assert!(sample_windows(&ds, 65, 1, 1).is_err());
        assert!(sample_windows(&ds, 16, 0, 1).unwrap().is_empty());

        let a = sample_windows(&ds, 16, 5, 42).unwrap();
        let b = sample_windows(&ds, 16, 5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dataset_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthesize(&four_farm_spec(21, 48)).unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let loaded = load_csv(&dir.path().join("data.csv"), &dir.path().join("meta.json")).unwrap();
        assert_eq!(loaded.farm_ids, ds.farm_ids);
        assert_eq!(loaded.capacities, ds.capacities);
        assert!(loaded.values.max_abs_diff(&ds.values) < 1e-12);
    }
}
