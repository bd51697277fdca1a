//! Decade-range scans: fit every law on every lag interval spanning at least
//! a factor of ten, and map where each law wins.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autocorr::{AutocorrCurve, TauGrid};
use crate::error::{Error, Result};
use crate::fitlab::{fit_decay, pick_best, ModelKind, TauRange};

/// Index pairs `(i, j)`, `i < j`, with `grid[j] >= 10 * grid[i]`, sorted.
pub fn decade_ranges(grid: &TauGrid) -> Vec<(usize, usize)> {
    let taus = grid.taus();
    let mut out = Vec::new();
    for (i, &start) in taus.iter().enumerate() {
        // The grid is increasing, so qualifying ends form a suffix.
        let first = taus.partition_point(|&t| t < start.saturating_mul(10));
        out.extend((first.max(i + 1)..taus.len()).map(|j| (i, j)));
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RangeEntry {
    pub mape_power: Option<f64>,
    pub mape_exp: Option<f64>,
    pub mape_log: Option<f64>,
    pub best: Option<ModelKind>,
}

impl RangeEntry {
    pub fn mape(&self, kind: ModelKind) -> Option<f64> {
        match kind {
            ModelKind::Power => self.mape_power,
            ModelKind::Exponential => self.mape_exp,
            ModelKind::Logarithmic => self.mape_log,
        }
    }

    /// `MAPE_power - MAPE_other`; negative values favor the power law.
    pub fn power_advantage(&self, other: ModelKind) -> Option<f64> {
        Some(self.mape_power? - self.mape(other)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    pub source_id: String,
    pub embedding: String,
    pub window: Option<usize>,
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeScanResult {
    pub grid: TauGrid,
    pub entries: BTreeMap<(usize, usize), RangeEntry>,
    pub metadata: ScanMetadata,
}

/// Fits all three laws on each index range of `grid`.
///
/// Fit failures are recorded as absent MAPEs. The only error is a grid lag
/// that the curve does not cover, or an index outside the grid.
pub fn scan(curve: &AutocorrCurve, grid: &TauGrid, ranges: &[(usize, usize)]) -> Result<RangeScanResult> {
    if let Some(tau) = grid.taus().iter().find(|&&t| curve.value_at(t).is_none()) {
        return Err(Error::Param(format!("curve has no value at grid lag {tau}")));
    }
    if let Some(&(i, j)) = ranges.iter().find(|&&(i, j)| i >= j || j >= grid.len()) {
        return Err(Error::Param(format!("range ({i}, {j}) is not an ordered pair of grid indices")));
    }
    let taus = grid.taus();
    let entries = ranges
        .par_iter()
        .map(|&(i, j)| {
            let range = TauRange {
                start: taus[i],
                end: taus[j],
            };
            let fitted = |kind| fit_decay(curve, range, kind).ok().map(|f| f.mape);
            let mut entry = RangeEntry {
                mape_power: fitted(ModelKind::Power),
                mape_exp: fitted(ModelKind::Exponential),
                mape_log: fitted(ModelKind::Logarithmic),
                best: None,
            };
            entry.best = pick_best(&ModelKind::ALL.map(|k| (k, entry.mape(k))));
            ((i, j), entry)
        })
        .collect();
    Ok(RangeScanResult {
        grid: grid.clone(),
        entries,
        metadata: ScanMetadata::default(),
    })
}

impl RangeScanResult {
    pub fn with_metadata(mut self, metadata: ScanMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn range_of(&self, key: (usize, usize)) -> TauRange {
        TauRange {
            start: self.grid.taus()[key.0],
            end: self.grid.taus()[key.1],
        }
    }

    /// Share of entries with `tau_end >= min_end` whose winner is `kind`.
    pub fn share_won_by(&self, kind: ModelKind, min_end: usize) -> Option<f64> {
        let relevant: Vec<&RangeEntry> = self
            .entries
            .iter()
            .filter(|(key, _)| self.range_of(**key).end >= min_end)
            .map(|(_, e)| e)
            .collect();
        if relevant.is_empty() {
            return None;
        }
        let won = relevant.iter().filter(|e| e.best == Some(kind)).count();
        Some(won as f64 / relevant.len() as f64)
    }

    fn matrix_csv(&self, cell: impl Fn(&RangeEntry) -> String) -> String {
        let taus = self.grid.taus();
        let mut out = String::from("start\\end");
        for t in taus {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
        for (i, start) in taus.iter().enumerate() {
            let _ = write!(out, "{start}");
            for j in 0..taus.len() {
                out.push(',');
                if let Some(e) = self.entries.get(&(i, j)) {
                    out.push_str(&cell(e));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Start-by-end matrix of winners as `P`, `E`, `L`, or empty.
    pub fn best_map_csv(&self) -> String {
        self.matrix_csv(|e| e.best.map(|k| k.symbol().to_string()).unwrap_or_default())
    }

    /// Start-by-end matrix of `MAPE_power - MAPE_other`.
    pub fn difference_map_csv(&self, other: ModelKind) -> String {
        self.matrix_csv(|e| e.power_advantage(other).map(fmt_f64).unwrap_or_default())
    }

    /// One row per range with all MAPEs.
    pub fn entries_csv(&self) -> String {
        let mut out = String::from("tau_start,tau_end,mape_power,mape_exp,mape_log,best\n");
        for (key, e) in &self.entries {
            let r = self.range_of(*key);
            let opt = |m: Option<f64>| m.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.start,
                r.end,
                opt(e.mape_power),
                opt(e.mape_exp),
                opt(e.mape_log),
                e.best.map(|k| k.name()).unwrap_or_default()
            );
        }
        out
    }

    /// Heatmap of winners: power blue, exponential gray, logarithmic green.
    pub fn best_map_svg(&self) -> String {
        let taus = self.grid.taus();
        let n = taus.len();
        let cell = 12usize;
        let margin = 60usize;
        let side = margin + n * cell + 20;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            w = side + 120,
            h = side
        );
        for ((i, j), e) in &self.entries {
            let Some(kind) = e.best else { continue };
            let _ = writeln!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\"><title>{}:{} {}</title></rect>",
                margin + j * cell,
                margin + i * cell,
                kind_color(kind),
                taus[*i],
                taus[*j],
                kind
            );
        }
        for (k, tau) in taus.iter().enumerate() {
            if tau.to_string().starts_with('1') {
                let pos = margin + k * cell + cell / 2;
                let _ = writeln!(
                    svg,
                    "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"end\">{tau}</text>",
                    margin - 4,
                    pos + 3
                );
                let _ = writeln!(
                    svg,
                    "<text x=\"{pos}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{tau}</text>",
                    margin - 6
                );
            }
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">range end</text>",
            margin,
            margin - 24
        );
        let _ = writeln!(
            svg,
            "<text x=\"12\" y=\"{}\" font-size=\"11\" transform=\"rotate(-90 12 {})\">range start</text>",
            margin + 60,
            margin + 60
        );
        for (row, kind) in ModelKind::ALL.iter().enumerate() {
            let y = margin + row * 18;
            let x = side;
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" font-size=\"11\">{kind}</text>",
                kind_color(*kind),
                x + 16,
                y + 10
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn kind_color(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Power => "#1f5fbf",
        ModelKind::Exponential => "#8c8c8c",
        ModelKind::Logarithmic => "#2e9e44",
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
