//! Wind-power statistics: correlation estimation, per-unit encodings,
//! interval variability, and Laplace/Weibull maximum-likelihood fits.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::matrix::Matrix;

/// Symmetric Pearson correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    entries: Matrix,
}

impl CorrelationMatrix {
    pub fn new(entries: Matrix) -> Result<Self, CoreError> {
        if entries.rows() != entries.cols() {
            return Err(CoreError::ShapeMismatch {
                op: "correlation",
                left: entries.shape(),
                right: (entries.rows(), entries.rows()),
            });
        }
        let n = entries.rows();
        for i in 0..n {
            if (entries.get(i, i) - 1.0).abs() > 1e-12 {
                return Err(CoreError::InvalidConfig(alloc::format!(
                    "diagonal entry ({i},{i}) is {}, expected 1",
                    entries.get(i, i)
                )));
            }
            for j in 0..n {
                let v = entries.get(i, j);
                if !(-1.0..=1.0).contains(&v) {
                    return Err(CoreError::OutOfRange {
                        value: v,
                        lo: -1.0,
                        hi: 1.0,
                    });
                }
                if (v - entries.get(j, i)).abs() > 1e-12 {
                    return Err(CoreError::InvalidConfig(alloc::format!(
                        "asymmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }
}

/// Pairwise Pearson correlation over the full record; rows are farms.
/// The result is symmetrized and the diagonal set to exactly 1.
pub fn estimate_correlation(values: &Matrix) -> Result<CorrelationMatrix, CoreError> {
    let n = values.rows();
    let t = values.cols();
    let mut means = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let row = values.row(i);
        let mean = row.iter().sum::<f64>() / t as f64;
        let ss: f64 = row.iter().map(|&x| (x - mean) * (x - mean)).sum();
        if ss <= 0.0 {
            return Err(CoreError::DegenerateSeries { index: i });
        }
        means.push(mean);
        norms.push(libm::sqrt(ss));
    }
    let mut c = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut dot = 0.0;
            for k in 0..t {
                dot += (values.get(i, k) - means[i]) * (values.get(j, k) - means[j]);
            }
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            c.set(i, j, r);
            c.set(j, i, r);
        }
    }
    CorrelationMatrix::new(c)
}

/// Map per-unit `[0,1]` values to the symmetric `[-1,1]` encoding.
pub fn to_symmetric(x: &Matrix) -> Result<Matrix, CoreError> {
    check_range(x, 0.0, 1.0)?;
    Ok(x.map(|e| 2.0 * e - 1.0))
}

/// Inverse of [`to_symmetric`].
pub fn from_symmetric(y: &Matrix) -> Result<Matrix, CoreError> {
    check_range(y, -1.0, 1.0)?;
    Ok(y.map(|e| (e + 1.0) / 2.0))
}

fn check_range(m: &Matrix, lo: f64, hi: f64) -> Result<(), CoreError> {
    for &v in m.data() {
        if !(lo..=hi).contains(&v) {
            return Err(CoreError::OutOfRange { value: v, lo, hi });
        }
    }
    Ok(())
}

/// Output differences over a fixed step, pooled over farms and valid times:
/// `x[i, t+step] - x[i, t]`.
pub fn variability_series(x: &Matrix, step: usize) -> Result<Vec<f64>, CoreError> {
    if step == 0 || step >= x.cols() {
        return Err(CoreError::InvalidConfig(alloc::format!(
            "variability step {step} out of range for {} columns",
            x.cols()
        )));
    }
    let mut out = Vec::with_capacity(x.rows() * (x.cols() - step));
    for i in 0..x.rows() {
        let row = x.row(i);
        for t in 0..(x.cols() - step) {
            out.push(row[t + step] - row[t]);
        }
    }
    Ok(out)
}

/// Laplace maximum-likelihood fit: location is the sample median, scale is
/// the mean absolute deviation from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceFit {
    pub location: f64,
    pub scale: f64,
}

impl LaplaceFit {
    /// Density height at the mode, `1 / (2b)`.
    pub fn peak(&self) -> f64 {
        1.0 / (2.0 * self.scale)
    }

    /// Distribution variance, `2 b^2`.
    pub fn variance(&self) -> f64 {
        2.0 * self.scale * self.scale
    }
}

pub fn fit_laplace(samples: &[f64]) -> Result<LaplaceFit, CoreError> {
    if samples.len() < 10 {
        return Err(CoreError::TooFewSamples {
            required: 10,
            got: samples.len(),
        });
    }
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(CoreError::DegenerateSample);
    }
    let n = sorted.len();
    let location = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let scale = sorted.iter().map(|&s| libm::fabs(s - location)).sum::<f64>() / n as f64;
    if scale <= 0.0 {
        return Err(CoreError::DegenerateSample);
    }
    Ok(LaplaceFit { location, scale })
}

/// Two-parameter Weibull maximum-likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub scale: f64,
    pub shape: f64,
    pub log_likelihood: f64,
}

const WEIBULL_MAX_ITER: usize = 200;
const WEIBULL_TOL: f64 = 1e-10;

/// Fit a Weibull distribution by MLE. All samples must be strictly positive;
/// callers drop zeros beforehand and report the zero fraction separately.
///
/// The shape `k` solves the profile equation
///
/// ```text
/// f(k) = 1/k + mean(ln s) - sum(s^k ln s) / sum(s^k) = 0
/// ```
///
/// via Newton steps safeguarded by bisection on a bracketing interval, and
/// the scale follows as `lambda = mean(s^k)^(1/k)`.
pub fn fit_weibull(samples: &[f64]) -> Result<WeibullFit, CoreError> {
    let n = samples.len();
    if n < 100 {
        return Err(CoreError::TooFewSamples {
            required: 100,
            got: n,
        });
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &s in samples {
        if !(s.is_finite() && s > 0.0) {
            return Err(CoreError::OutOfRange {
                value: s,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        min = min.min(s);
        max = max.max(s);
    }
    if min == max {
        return Err(CoreError::DegenerateSample);
    }

    let ln_s: Vec<f64> = samples.iter().map(|&s| libm::log(s)).collect();
    let mean_ln = ln_s.iter().sum::<f64>() / n as f64;

    // f(k) and f'(k) of the profile likelihood equation.
    let eval = |k: f64| -> (f64, f64) {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (&s, &l) in samples.iter().zip(&ln_s) {
            let p = libm::pow(s, k);
            s0 += p;
            s1 += p * l;
            s2 += p * l * l;
        }
        let f = 1.0 / k + mean_ln - s1 / s0;
        let df = -1.0 / (k * k) - (s2 * s0 - s1 * s1) / (s0 * s0);
        (f, df)
    };

    // f is strictly decreasing in k; bracket the root.
    let mut lo = 1e-3;
    let mut hi = 100.0;
    if eval(lo).0 <= 0.0 || eval(hi).0 >= 0.0 {
        return Err(CoreError::NoConvergence {
            iterations: 0,
        });
    }

    let mut k = 1.0;
    let mut converged = false;
    for _ in 0..WEIBULL_MAX_ITER {
        let (f, df) = eval(k);
        if f > 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let mut next = k - f / df;
        if !next.is_finite() || next <= lo || next >= hi {
            next = (lo + hi) / 2.0;
        }
        if libm::fabs(next - k) < WEIBULL_TOL {
            k = next;
            converged = true;
            break;
        }
        k = next;
    }
    if !converged {
        return Err(CoreError::NoConvergence {
            iterations: WEIBULL_MAX_ITER,
        });
    }

    let mean_pow = samples.iter().map(|&s| libm::pow(s, k)).sum::<f64>() / n as f64;
    let lambda = libm::pow(mean_pow, 1.0 / k);
    let nf = n as f64;
    let log_likelihood = nf * libm::log(k) - nf * k * libm::log(lambda)
        + (k - 1.0) * ln_s.iter().sum::<f64>()
        - samples
            .iter()
            .map(|&s| libm::pow(s / lambda, k))
            .sum::<f64>();
    Ok(WeibullFit {
        scale: lambda,
        shape: k,
        log_likelihood,
    })
}

/// Mean per-unit output; equals produced energy over capacity times hours
/// for per-unit data on any horizon.
pub fn capacity_factor(x: &Matrix) -> Result<f64, CoreError> {
    check_range(x, 0.0, 1.0)?;
    Ok(x.mean())
}

/// Mean and max absolute difference over off-diagonal entries.
pub fn correlation_error(
    c_gen: &CorrelationMatrix,
    c_ref: &CorrelationMatrix,
) -> Result<(f64, f64), CoreError> {
    if c_gen.n() != c_ref.n() {
        return Err(CoreError::ShapeMismatch {
            op: "correlation_error",
            left: c_gen.entries().shape(),
            right: c_ref.entries().shape(),
        });
    }
    let n = c_gen.n();
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = libm::fabs(c_gen.entries().get(i, j) - c_ref.entries().get(i, j));
            sum += d;
            max = max.max(d);
            count += 1;
        }
    }
    Ok((sum / count as f64, max))
}
