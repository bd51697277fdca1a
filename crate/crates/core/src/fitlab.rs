//! Decay-law fitting and model selection.
//!
//! Each law is fitted by ordinary least squares on a straight line in
//! transformed coordinates and scored by MAPE on the original scale:
//!
//! | kind        | model                  | regression          |
//! |-------------|------------------------|---------------------|
//! | power       | `beta * tau^alpha`     | `ln c` on `ln tau`  |
//! | exponential | `amp * exp(-rate*tau)` | `ln c` on `tau`     |
//! | logarithmic | `icpt + slope * ln tau`| `c` on `ln tau`     |
//!
//! Power and exponential fits skip points with `c <= 0` (they have no
//! logarithm) and report how many were skipped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autocorr::{AutocorrCurve, CurvePoint};
use crate::error::{Error, Result};

/// Minimal number of points a fit needs.
pub const MIN_POINTS: usize = 3;

/// MAPE differences at or below this are ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Model families, in tie-break preference order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Power,
    Exponential,
    Logarithmic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Power, ModelKind::Exponential, ModelKind::Logarithmic];

    /// Whether the regression runs on `ln c`.
    pub fn log_space(self) -> bool {
        !matches!(self, ModelKind::Logarithmic)
    }

    pub fn symbol(self) -> char {
        match self {
            ModelKind::Power => 'P',
            ModelKind::Exponential => 'E',
            ModelKind::Logarithmic => 'L',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Power => "power",
            ModelKind::Exponential => "exponential",
            ModelKind::Logarithmic => "logarithmic",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" | "pow" => Ok(ModelKind::Power),
            "exponential" | "exp" => Ok(ModelKind::Exponential),
            "logarithmic" | "log" => Ok(ModelKind::Logarithmic),
            other => Err(Error::Param(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum DecayModel {
    Power { alpha: f64, beta: f64 },
    Exponential { rate: f64, amplitude: f64 },
    Logarithmic { intercept: f64, slope: f64 },
}

impl DecayModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            DecayModel::Power { .. } => ModelKind::Power,
            DecayModel::Exponential { .. } => ModelKind::Exponential,
            DecayModel::Logarithmic { .. } => ModelKind::Logarithmic,
        }
    }

    pub fn predict(&self, tau: f64) -> f64 {
        match *self {
            DecayModel::Power { alpha, beta } => beta * tau.powf(alpha),
            DecayModel::Exponential { rate, amplitude } => amplitude * (-rate * tau).exp(),
            DecayModel::Logarithmic { intercept, slope } => intercept + slope * tau.ln(),
        }
    }
}

/// Inclusive lag interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TauRange {
    pub start: usize,
    pub end: usize,
}

impl TauRange {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::Param(format!("range start {start} must be below end {end}")));
        }
        Ok(TauRange { start, end })
    }
}

impl fmt::Display for TauRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

impl FromStr for TauRange {
    type Err = Error;

    /// Parses `START:END`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Param(format!("range {s:?} is not START:END"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        TauRange::new(start, end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub model: DecayModel,
    pub mape: f64,
    pub tau_start: usize,
    pub tau_end: usize,
    pub n_points: usize,
    pub n_excluded: usize,
}

impl FitResult {
    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn range(&self) -> TauRange {
        TauRange {
            start: self.tau_start,
            end: self.tau_end,
        }
    }
}

/// Points of `range` a `kind` fit uses, and the number it had to skip.
fn included(curve: &AutocorrCurve, range: TauRange, kind: ModelKind) -> (Vec<CurvePoint>, usize) {
    let all = curve.in_range(range.start, range.end);
    if kind.log_space() {
        let kept: Vec<CurvePoint> = all.iter().copied().filter(|p| p.c > 0.0).collect();
        let excluded = all.len() - kept.len();
        (kept, excluded)
    } else {
        (all.to_vec(), 0)
    }
}

/// Least-squares line `y = intercept + slope * x`, from centered sums.
fn ols(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

fn mape_of(points: &[CurvePoint], model: &DecayModel) -> Result<f64> {
    let mut total = 0.0;
    for p in points {
        if p.c == 0.0 {
            return Err(Error::ZeroDenominator(p.tau));
        }
        total += (model.predict(p.tau as f64) - p.c).abs() / p.c.abs();
    }
    Ok(total / points.len() as f64)
}

/// Fits one decay law over `range`.
pub fn fit_decay(curve: &AutocorrCurve, range: TauRange, kind: ModelKind) -> Result<FitResult> {
    let range = TauRange::new(range.start, range.end)?;
    let (points, n_excluded) = included(curve, range, kind);
    if points.len() < MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "{kind} fit over {range} has {} usable points, needs {MIN_POINTS}",
            points.len()
        )));
    }
    let taus: Vec<f64> = points.iter().map(|p| p.tau as f64).collect();
    let ln_taus: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let values: Vec<f64> = points.iter().map(|p| p.c).collect();
    let ln_values: Vec<f64> = values.iter().map(|c| c.ln()).collect();

    let degenerate = || Error::InsufficientData(format!("{kind} fit over {range} has a single distinct lag"));
    let model = match kind {
        ModelKind::Power => {
            let (icpt, slope) = ols(&ln_taus, &ln_values).ok_or_else(degenerate)?;
            DecayModel::Power {
                alpha: slope,
                beta: icpt.exp(),
            }
        }
        ModelKind::Exponential => {
            let (icpt, slope) = ols(&taus, &ln_values).ok_or_else(degenerate)?;
            DecayModel::Exponential {
                rate: -slope,
                amplitude: icpt.exp(),
            }
        }
        ModelKind::Logarithmic => {
            let (icpt, slope) = ols(&ln_taus, &values).ok_or_else(degenerate)?;
            DecayModel::Logarithmic {
                intercept: icpt,
                slope,
            }
        }
    };
    let params_finite = match model {
        DecayModel::Power { alpha, beta } => alpha.is_finite() && beta.is_finite() && beta > 0.0,
        DecayModel::Exponential { rate, amplitude } => rate.is_finite() && amplitude.is_finite() && amplitude > 0.0,
        DecayModel::Logarithmic { intercept, slope } => intercept.is_finite() && slope.is_finite(),
    };
    if !params_finite {
        return Err(Error::InsufficientData(format!("{kind} fit over {range} produced non-finite parameters")));
    }
    let mape = mape_of(&points, &model)?;
    Ok(FitResult {
        model,
        mape,
        tau_start: range.start,
        tau_end: range.end,
        n_points: points.len(),
        n_excluded,
    })
}

/// MAPE of a fixed model over the points of `range` its kind would use.
pub fn mape(curve: &AutocorrCurve, model: &DecayModel, range: TauRange) -> Result<f64> {
    let (points, _) = included(curve, range, model.kind());
    if points.is_empty() {
        return Err(Error::InsufficientData(format!("no usable points in {range}")));
    }
    mape_of(&points, model)
}

/// Fits every requested kind and keeps the one with the lowest MAPE.
///
/// Kinds whose MAPE is within [`TIE_TOLERANCE`] of each other are ranked
/// power, then exponential, then logarithmic.
pub fn select_best(curve: &AutocorrCurve, range: TauRange, kinds: &[ModelKind]) -> Result<FitResult> {
    let mut ordered = kinds.to_vec();
    ordered.sort();
    ordered.dedup();
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for kind in ordered {
        match fit_decay(curve, range, kind) {
            Ok(fit) => {
                if best.is_none_or(|b| fit.mape < b.mape - TIE_TOLERANCE) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| match last_err {
        Some(e @ Error::InsufficientData(_)) => e,
        Some(e) => Error::InsufficientData(format!("no model could be fitted over {range}: {e}")),
        None => Error::InsufficientData("no model kinds requested".to_string()),
    })
}

/// Preferred kind among optional MAPEs, with the same tie rule as [`select_best`].
pub fn pick_best(mapes: &[(ModelKind, Option<f64>)]) -> Option<ModelKind> {
    let mut sorted: Vec<(ModelKind, f64)> = mapes.iter().filter_map(|&(k, m)| m.map(|m| (k, m))).collect();
    sorted.sort_by_key(|&(k, _)| k);
    let mut best: Option<(ModelKind, f64)> = None;
    for (kind, m) in sorted {
        if best.is_none_or(|(_, b)| m < b - TIE_TOLERANCE) {
            best = Some((kind, m));
        }
    }
    best.map(|(k, _)| k)
}
