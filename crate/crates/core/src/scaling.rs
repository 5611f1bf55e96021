//! Empirical scaling-law fits.
//!
//! Two families are supported:
//!
//! * log-linear, `y = alpha * log_base(x) + beta` (base 10 or 2), solved in
//!   closed form by ordinary least squares on the transformed abscissa;
//! * inverse square root, `y = c1 * sqrt(1 + c2 / x) + c3`, solved by
//!   Gauss-Newton with Levenberg damping.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use thiserror::Error;

/// Iteration cap for the nonlinear fit.
pub const MAX_ITERATIONS: usize = 500;

const INITIAL_DAMPING: f64 = 1e-3;
const MAX_DAMPING: f64 = 1e20;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("cannot read {path}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("expected header `x,y`, got `{0}`")]
    Header(String),
    #[error("series needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("duplicate x value {0}")]
    DuplicateX(f64),
    #[error("x must be > 0, got {0}")]
    NonPositiveX(f64),
    #[error("non-finite value in series")]
    NonFinite,
    #[error("all x values coincide after transform")]
    DegenerateData,
    #[error("x = {0} outside the domain of the fitted law")]
    Domain(f64),
    #[error("unknown law form `{0}` (expected log10, log2 or invsqrt)")]
    UnknownForm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LawForm {
    #[serde(rename = "log10")]
    Log10Linear,
    #[serde(rename = "log2")]
    Log2Linear,
    #[serde(rename = "invsqrt")]
    InvSqrt,
}

impl LawForm {
    pub fn param_count(self) -> usize {
        match self {
            LawForm::Log10Linear | LawForm::Log2Linear => 2,
            LawForm::InvSqrt => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LawForm::Log10Linear => "log10",
            LawForm::Log2Linear => "log2",
            LawForm::InvSqrt => "invsqrt",
        }
    }

    /// Evaluates the law with raw parameters; `None` outside its domain.
    pub fn eval(self, params: &[f64], x: f64) -> Option<f64> {
        if x.is_nan() || x <= 0.0 {
            return None;
        }
        match self {
            LawForm::Log10Linear => Some(params[0] * x.log10() + params[1]),
            LawForm::Log2Linear => Some(params[0] * x.log2() + params[1]),
            LawForm::InvSqrt => {
                let inner = 1.0 + params[1] / x;
                (inner >= 0.0).then(|| params[0] * inner.sqrt() + params[2])
            }
        }
    }
}

impl FromStr for LawForm {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log10" => Ok(LawForm::Log10Linear),
            "log2" => Ok(LawForm::Log2Linear),
            "invsqrt" => Ok(LawForm::InvSqrt),
            other => Err(FitError::UnknownForm(other.to_string())),
        }
    }
}

impl fmt::Display for LawForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Points sorted by strictly increasing, strictly positive `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSeries {
    points: Vec<(f64, f64)>,
    pub x_label: String,
    pub y_label: String,
}

impl DataSeries {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, FitError> {
        if points.len() < 2 {
            return Err(FitError::TooFewPoints { needed: 2, got: points.len() });
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(FitError::NonFinite);
        }
        if let Some(&(x, _)) = points.iter().find(|(x, _)| *x <= 0.0) {
            return Err(FitError::NonPositiveX(x));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(FitError::DuplicateX(w[0].0));
        }
        Ok(Self {
            points,
            x_label: "x".into(),
            y_label: "y".into(),
        })
    }

    pub fn from_fn(xs: &[f64], f: impl Fn(f64) -> f64) -> Result<Self, FitError> {
        Self::new(xs.iter().map(|&x| (x, f(x))).collect())
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Parses a two-column CSV with header exactly `x,y`.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, FitError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| FitError::Csv(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
            return Err(FitError::Header(headers.iter().collect::<Vec<_>>().join(",")));
        }
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| FitError::Csv(e.to_string()))?;
            let parse = |i: usize| -> Result<f64, FitError> {
                rec[i]
                    .parse()
                    .map_err(|_| FitError::Csv(format!("cannot parse `{}` as a number", &rec[i])))
            };
            points.push((parse(0)?, parse(1)?));
        }
        Self::new(points)
    }
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<DataSeries, FitError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| FitError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    DataSeries::from_csv_reader(file)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub form: LawForm,
    /// `(alpha, beta)` for log forms, `(c1, c2, c3)` for the inverse root.
    pub params: Vec<f64>,
    pub r_squared: f64,
    pub n_points: usize,
    /// False when the nonlinear solver hit [`MAX_ITERATIONS`]; `params` are
    /// then the best found.
    pub converged: bool,
    #[serde(skip)]
    pub iterations: usize,
}

impl ScalingFit {
    pub fn predict(&self, x: f64) -> Result<f64, FitError> {
        self.form.eval(&self.params, x).ok_or(FitError::Domain(x))
    }

    /// Single-line JSON report with keys `form, params, r_squared,
    /// n_points, converged`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fit report serializes")
    }
}

pub fn fit(series: &DataSeries, form: LawForm) -> Result<ScalingFit, FitError> {
    let needed = form.param_count();
    if series.len() < needed {
        return Err(FitError::TooFewPoints { needed, got: series.len() });
    }
    match form {
        LawForm::Log10Linear => fit_log(series, form, f64::log10),
        LawForm::Log2Linear => fit_log(series, form, f64::log2),
        LawForm::InvSqrt => fit_inv_sqrt(series),
    }
}

fn fit_log(series: &DataSeries, form: LawForm, transform: fn(f64) -> f64) -> Result<ScalingFit, FitError> {
    let pts = series.points();
    let n = pts.len() as f64;
    let us: Vec<f64> = pts.iter().map(|&(x, _)| transform(x)).collect();
    let u_mean = us.iter().sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (u, &(_, y)) in us.iter().zip(pts) {
        sxx += (u - u_mean) * (u - u_mean);
        sxy += (u - u_mean) * (y - y_mean);
    }
    if sxx <= f64::EPSILON * us.iter().map(|u| u * u).sum::<f64>() {
        return Err(FitError::DegenerateData);
    }
    let alpha = sxy / sxx;
    let beta = y_mean - alpha * u_mean;
    let params = vec![alpha, beta];
    Ok(ScalingFit {
        form,
        r_squared: r_squared(pts, |x| form.eval(&params, x).expect("x > 0")),
        params,
        n_points: pts.len(),
        converged: true,
        iterations: 0,
    })
}

/// Coefficient of determination against the mean-only model. A constant
/// series scores 1 when reproduced exactly and 0 otherwise.
pub fn r_squared(points: &[(f64, f64)], model: impl Fn(f64) -> f64) -> f64 {
    let n = points.len() as f64;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_res: f64 = points.iter().map(|&(x, y)| (y - model(x)).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - y_mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

fn sum_sq(points: &[(f64, f64)], p: &Vector3<f64>) -> Option<f64> {
    let mut acc = 0.0;
    for &(x, y) in points {
        let inner = 1.0 + p[1] / x;
        if inner <= 0.0 {
            return None;
        }
        acc += (y - (p[0] * inner.sqrt() + p[2])).powi(2);
    }
    acc.is_finite().then_some(acc)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn fit_inv_sqrt(series: &DataSeries) -> Result<ScalingFit, FitError> {
    let pts = series.points();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y_min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);

    let c3 = y_min - 1.0;
    let mut p = Vector3::new(y_max - c3, median(&xs), c3);
    let mut cost = sum_sq(pts, &p).ok_or(FitError::DegenerateData)?;
    let mut lambda = INITIAL_DAMPING;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for &(x, y) in pts {
            let root = (1.0 + p[1] / x).sqrt();
            let residual = y - (p[0] * root + p[2]);
            let grad = Vector3::new(root, p[0] / (2.0 * x * root), 1.0);
            jtj += grad * grad.transpose();
            jtr += grad * residual;
        }

        let mut improved = false;
        while lambda <= MAX_DAMPING {
            let damped = jtj + Matrix3::identity() * lambda;
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = p + step;
            match sum_sq(pts, &candidate) {
                Some(c) if c < cost => {
                    let small_step = step.norm() <= 1e-14 * (p.norm() + 1e-14);
                    let small_gain = cost - c <= 1e-15 * cost;
                    p = candidate;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-15);
                    improved = true;
                    if small_step || small_gain {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        // No damped step reduces the cost: numerically at a minimum.
        if !improved {
            converged = true;
        }
        if converged {
            break;
        }
    }

    let params = vec![p[0], p[1], p[2]];
    Ok(ScalingFit {
        form: LawForm::InvSqrt,
        r_squared: r_squared(pts, |x| LawForm::InvSqrt.eval(&params, x).unwrap_or(f64::NAN)),
        params,
        n_points: pts.len(),
        converged,
        iterations,
    })
}
