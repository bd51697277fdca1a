//! Normalized autocorrelation of vector series.
//!
//! For a centered series `x_1..x_N` the curve value at lag `tau` is
//!
//! ```text
//! C(tau) = [ 1/(N-tau) * sum_{t=1}^{N-tau} <x_t, x_{t+tau}> ] / [ 1/N * sum_{t=1}^{N} <x_t, x_t> ]
//! ```
//!
//! Two evaluation paths are provided. [`Method::Direct`] sums inner products
//! lag by lag in a fixed order. [`Method::Fft`] gets every lag sum at once from
//! the zero-padded power spectrum, which is far cheaper when the series is long
//! and many lags are requested.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::embedding::VectorSeries;
use crate::error::{Error, Result};

/// Strictly increasing lags of the form `n * 10^k`, `n` in 1..=9.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TauGrid(Vec<usize>);

fn is_decade_multiple(mut tau: usize) -> bool {
    if tau == 0 {
        return false;
    }
    while tau.is_multiple_of(10) {
        tau /= 10;
    }
    tau <= 9
}

impl TauGrid {
    pub fn new(taus: Vec<usize>) -> Result<Self> {
        if let Some(bad) = taus.iter().find(|&&t| !is_decade_multiple(t)) {
            return Err(Error::Param(format!("lag {bad} is not of the form n*10^k")));
        }
        if taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Param("grid lags must be strictly increasing".to_string()));
        }
        Ok(TauGrid(taus))
    }

    pub fn taus(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// The sub-grid of lags strictly below `limit`.
    pub fn below(&self, limit: usize) -> TauGrid {
        TauGrid(self.0.iter().copied().filter(|&t| t < limit).collect())
    }
}

impl TryFrom<Vec<usize>> for TauGrid {
    type Error = Error;

    fn try_from(taus: Vec<usize>) -> Result<Self> {
        TauGrid::new(taus)
    }
}

impl From<TauGrid> for Vec<usize> {
    fn from(grid: TauGrid) -> Self {
        grid.0
    }
}

/// All lags `n * 10^k <= tau_max`, ascending.
pub fn tau_grid(tau_max: usize) -> Result<TauGrid> {
    if tau_max < 1 {
        return Err(Error::Param("tau_max must be at least 1".to_string()));
    }
    let mut taus = Vec::new();
    let mut scale: usize = 1;
    'outer: loop {
        for n in 1..=9usize {
            match n.checked_mul(scale) {
                Some(tau) if tau <= tau_max => taus.push(tau),
                _ => break 'outer,
            }
        }
        scale = match scale.checked_mul(10) {
            Some(s) => s,
            None => break,
        };
    }
    Ok(TauGrid(taus))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    #[default]
    Fft,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Method::Direct),
            "fft" => Ok(Method::Fft),
            other => Err(Error::Param(format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Direct => "direct",
            Method::Fft => "fft",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau: usize,
    pub c: f64,
}

/// Facts about how a curve was produced; absent when read back from CSV.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub series_length: Option<usize>,
    pub dim: Option<usize>,
    pub window: Option<usize>,
    /// Mean squared norm (or process variance) used as the denominator.
    pub normalization: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrCurve {
    points: Vec<CurvePoint>,
    meta: CurveMeta,
}

impl AutocorrCurve {
    /// Builds a curve from points in any order. Lags must be distinct and
    /// values finite.
    pub fn from_points(mut points: Vec<CurvePoint>, meta: CurveMeta) -> Result<Self> {
        points.sort_by_key(|p| p.tau);
        if points.windows(2).any(|w| w[0].tau == w[1].tau) {
            return Err(Error::Param("duplicate lag in curve".to_string()));
        }
        if let Some(p) = points.iter().find(|p| !p.c.is_finite()) {
            return Err(Error::Param(format!("non-finite value at lag {}", p.tau)));
        }
        if points.iter().any(|p| p.tau == 0 && p.c != 1.0) {
            return Err(Error::Param("curve value at lag 0 must be exactly 1".to_string()));
        }
        Ok(AutocorrCurve { points, meta })
    }

    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        Self::from_points(
            pairs.iter().map(|&(tau, c)| CurvePoint { tau, c }).collect(),
            CurveMeta::default(),
        )
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn meta(&self) -> &CurveMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn taus(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.iter().map(|p| p.tau)
    }

    pub fn value_at(&self, tau: usize) -> Option<f64> {
        self.points
            .binary_search_by_key(&tau, |p| p.tau)
            .ok()
            .map(|i| self.points[i].c)
    }

    /// Points with `start <= tau <= end`.
    pub fn in_range(&self, start: usize, end: usize) -> &[CurvePoint] {
        let lo = self.points.partition_point(|p| p.tau < start);
        let hi = self.points.partition_point(|p| p.tau <= end);
        &self.points[lo..hi.max(lo)]
    }

    /// CSV with header `tau,c`; values carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["tau", "c"])?;
        for p in &self.points {
            w.write_record([p.tau.to_string(), format!("{:.16e}", p.c)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is ASCII")
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "tau" || &headers[1] != "c" {
            return Err(Error::Parse(format!("expected header \"tau,c\", found {headers:?}")));
        }
        let mut points = Vec::new();
        for record in r.records() {
            let record = record?;
            let tau = record[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad lag {:?}", &record[0])))?;
            let c = record[1]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad value {:?}", &record[1])))?;
            points.push(CurvePoint { tau, c });
        }
        Self::from_points(points, CurveMeta::default())
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::from_io_at(e, path))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Autocorrelation on a lag grid. See [`autocorrelation_at`].
pub fn autocorrelation(vs: &VectorSeries, grid: &TauGrid, method: Method) -> Result<AutocorrCurve> {
    autocorrelation_at(vs, grid.taus(), method)
}

/// Autocorrelation at arbitrary distinct lags (lag 0 allowed).
pub fn autocorrelation_at(vs: &VectorSeries, lags: &[usize], method: Method) -> Result<AutocorrCurve> {
    if !vs.is_centered() {
        return Err(Error::State("autocorrelation requires a centered series".to_string()));
    }
    let n = vs.len();
    if let Some(&bad) = lags.iter().find(|&&tau| tau >= n) {
        return Err(Error::Param(format!("lag {bad} is not below the series length {n}")));
    }
    let energy = lag_sum(vs, 0);
    if energy == 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let variance = energy / n as f64;

    let sums: Vec<f64> = match method {
        Method::Direct => lags.par_iter().map(|&tau| lag_sum(vs, tau)).collect(),
        Method::Fft => {
            let all = fft_lag_sums(vs, lags.iter().copied().max().unwrap_or(0));
            lags.iter().map(|&tau| all[tau]).collect()
        }
    };
    let points = lags
        .iter()
        .zip(sums)
        .map(|(&tau, sum)| {
            let c = if tau == 0 {
                1.0
            } else {
                (sum / (n - tau) as f64) / variance
            };
            CurvePoint { tau, c }
        })
        .collect();
    AutocorrCurve::from_points(
        points,
        CurveMeta {
            series_length: Some(n),
            dim: Some(vs.dim()),
            window: Some(vs.window()),
            normalization: Some(variance),
        },
    )
}

/// `sum_t <x_t, x_{t+tau}>`, accumulated strictly left to right.
fn lag_sum(vs: &VectorSeries, tau: usize) -> f64 {
    let d = vs.dim();
    let data = vs.as_flat();
    let span = (vs.len() - tau) * d;
    let (head, tail) = (&data[..span], &data[tau * d..tau * d + span]);
    let mut total = 0.0;
    for (a, b) in head.chunks_exact(d).zip(tail.chunks_exact(d)) {
        let mut dot = 0.0;
        for k in 0..d {
            dot += a[k] * b[k];
        }
        total += dot;
    }
    total
}

/// Pairs of dimensions packed into one complex FFT per chunk.
const PAIRS_PER_CHUNK: usize = 16;

/// Lag sums for every lag in `0..=max_lag`, via the summed power spectrum.
///
/// Two real dimensions share one complex transform: for `z = x + i y` the real
/// part of the circular autocorrelation of `z` equals the sum of those of `x`
/// and `y`. Chunks of dimension pairs are reduced in a fixed order, so the
/// result does not depend on the thread count.
fn fft_lag_sums(vs: &VectorSeries, max_lag: usize) -> Vec<f64> {
    let n = vs.len();
    let d = vs.dim();
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);

    let pairs: Vec<(usize, Option<usize>)> = (0..d)
        .step_by(2)
        .map(|k| (k, (k + 1 < d).then_some(k + 1)))
        .collect();

    let partials: Vec<Vec<f64>> = pairs
        .par_chunks(PAIRS_PER_CHUNK)
        .map(|chunk| chunk_power(vs, chunk, &forward, size))
        .collect();

    let mut spectrum = vec![Complex::new(0.0, 0.0); size];
    for partial in &partials {
        for (s, p) in spectrum.iter_mut().zip(partial) {
            s.re += p;
        }
    }
    drop(partials);
    inverse.process(&mut spectrum);
    let scale = 1.0 / size as f64;
    spectrum[..=max_lag.min(n - 1)].iter().map(|z| z.re * scale).collect()
}

fn chunk_power(
    vs: &VectorSeries,
    chunk: &[(usize, Option<usize>)],
    forward: &Arc<dyn Fft<f64>>,
    size: usize,
) -> Vec<f64> {
    let mut power = vec![0.0; size];
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    let mut scratch = vec![Complex::new(0.0, 0.0); forward.get_inplace_scratch_len()];
    for &(re_dim, im_dim) in chunk {
        for (z, row) in buf.iter_mut().zip(vs.rows()) {
            *z = Complex::new(row[re_dim], im_dim.map_or(0.0, |k| row[k]));
        }
        buf[vs.len()..].iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        forward.process_with_scratch(&mut buf, &mut scratch);
        for (p, z) in power.iter_mut().zip(&buf) {
            *p += z.norm_sqr();
        }
    }
    power
}

/// Smallest nonzero lag with a strictly positive value.
pub fn first_positive_lag(curve: &AutocorrCurve) -> Result<usize> {
    if curve.is_empty() {
        return Err(Error::Param("curve is empty".to_string()));
    }
    curve
        .points()
        .iter()
        .find(|p| p.tau > 0 && p.c > 0.0)
        .map(|p| p.tau)
        .ok_or(Error::AllNonPositive)
}
