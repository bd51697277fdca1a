//! End-to-end analysis runs and the report bundle they leave on disk.
//!
//! A bundle is a directory holding the curve, the fits, the range scan and a
//! manifest with content hashes. Runs are staged next to the target and moved
//! into place only on success.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::autocorr::{autocorrelation, first_positive_lag, tau_grid, AutocorrCurve, Method, TauGrid};
use crate::corpus::{clean_document, fetch_document, filter_by_frequency, shuffle, tokenize, CleanRules, Document, TokenSeries};
use crate::embedding::{center, embed, load_pretrained_filtered, random_table, window_average, EmbeddingTable, OovPolicy, VectorSeries};
use crate::error::{Error, Result};
use crate::fitlab::{fit_decay, mape, pick_best, FitResult, ModelKind, TauRange};
use crate::rangescan::{decade_ranges, scan, ScanMetadata};
use crate::{sha256_file, sha256_hex};

pub const CURVE_FILE: &str = "curve.csv";
pub const FITS_FILE: &str = "fits.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SHUFFLED_CURVE_FILE: &str = "shuffled_curve.csv";
pub const SHUFFLED_FITS_FILE: &str = "shuffled_fits.json";
/// Tolerance for the MAPE recomputed from a bundle.
pub const CLOSED_LOOP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputSource {
    Path(PathBuf),
    Url(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingConfig {
    Pretrained { path: PathBuf },
    Random { dim: usize, seed: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CleanConfig {
    #[default]
    None,
    Gutenberg,
    File(PathBuf),
}

impl CleanConfig {
    pub fn rules(&self) -> Result<Option<CleanRules>> {
        Ok(match self {
            CleanConfig::None => None,
            CleanConfig::Gutenberg => Some(CleanRules::gutenberg()),
            CleanConfig::File(path) => Some(CleanRules::from_file(path)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_f_max")]
    pub f_max: f64,
    #[serde(default = "default_c_min")]
    pub c_min: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            f_max: default_f_max(),
            c_min: default_c_min(),
        }
    }
}

fn default_f_max() -> f64 {
    1e-2
}

fn default_c_min() -> usize {
    3
}

fn default_language() -> String {
    "en".to_string()
}

fn default_window() -> usize {
    1
}

fn default_tau_max() -> usize {
    40_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub input: InputSource,
    #[serde(default = "default_language")]
    pub language: String,
    pub embedding: EmbeddingConfig,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_tau_max")]
    pub tau_max: usize,
    #[serde(default)]
    pub oov: OovPolicy,
    #[serde(default)]
    pub filter: FilterConfig,
    /// Fit ranges; empty means from the first positive lag to the grid end.
    #[serde(default)]
    pub ranges: Vec<TauRange>,
    pub out: PathBuf,
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
    #[serde(default = "default_true")]
    pub center: bool,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub svg: bool,
    #[serde(default)]
    pub clean: CleanConfig,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Whether to run the decade-range scan.
    #[serde(default = "default_true")]
    pub scan: bool,
}

impl AnalysisConfig {
    pub fn new(input: InputSource, embedding: EmbeddingConfig, out: impl Into<PathBuf>) -> Self {
        AnalysisConfig {
            input,
            language: default_language(),
            embedding,
            window: default_window(),
            tau_max: default_tau_max(),
            oov: OovPolicy::default(),
            filter: FilterConfig::default(),
            ranges: Vec::new(),
            out: out.into(),
            shuffle_seed: None,
            center: true,
            method: Method::default(),
            svg: false,
            clean: CleanConfig::default(),
            cache_dir: None,
            scan: true,
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::from_io_at(e, path))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Param("window must be at least 1".into()));
        }
        if self.tau_max < 1 {
            return Err(Error::Param("tau_max must be at least 1".into()));
        }
        if let EmbeddingConfig::Random { dim: 0, .. } = self.embedding {
            return Err(Error::Param("embedding dimension must be at least 1".into()));
        }
        if !(self.filter.f_max > 0.0 && self.filter.f_max <= 1.0) || self.filter.c_min < 1 {
            return Err(Error::Param("filter needs f_max in (0, 1] and c_min >= 1".into()));
        }
        for r in &self.ranges {
            TauRange::new(r.start, r.end)?;
        }
        for path in self.referenced_paths() {
            if !path.exists() {
                return Err(Error::FileNotFound(path.to_path_buf()));
            }
        }
        Ok(())
    }

    fn referenced_paths(&self) -> Vec<&Path> {
        let mut paths = Vec::new();
        if let InputSource::Path(p) = &self.input {
            paths.push(p.as_path());
        }
        if let EmbeddingConfig::Pretrained { path } = &self.embedding {
            paths.push(path.as_path());
        }
        if let CleanConfig::File(p) = &self.clean {
            paths.push(p.as_path());
        }
        paths
    }

    fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| PathBuf::from(".corrdecay-cache"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    pub kind: ModelKind,
    pub error: String,
}

/// All fits attempted on one lag range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeFits {
    pub tau_start: usize,
    pub tau_end: usize,
    pub fits: Vec<FitResult>,
    pub best: Option<ModelKind>,
    pub failures: Vec<FitFailure>,
}

impl RangeFits {
    pub fn get(&self, kind: ModelKind) -> Option<&FitResult> {
        self.fits.iter().find(|f| f.kind() == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub source_id: String,
    pub series_length: Option<usize>,
    pub first_positive_lag: Option<usize>,
    pub ranges: Vec<RangeFits>,
}

impl FitReport {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::from_io_at(e, path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn range(&self, range: TauRange) -> Option<&RangeFits> {
        self.ranges.iter().find(|r| r.tau_start == range.start && r.tau_end == range.end)
    }
}

/// Fits every model kind on each range; failures are recorded per kind.
pub fn fit_ranges(curve: &AutocorrCurve, ranges: &[TauRange]) -> Vec<RangeFits> {
    ranges
        .iter()
        .map(|&range| {
            let mut fits = Vec::new();
            let mut failures = Vec::new();
            for kind in ModelKind::ALL {
                match fit_decay(curve, range, kind) {
                    Ok(fit) => fits.push(fit),
                    Err(e) => failures.push(FitFailure {
                        kind,
                        error: e.to_string(),
                    }),
                }
            }
            let mapes: Vec<(ModelKind, Option<f64>)> = ModelKind::ALL
                .iter()
                .map(|&k| (k, fits.iter().find(|f| f.kind() == k).map(|f| f.mape)))
                .collect();
            RangeFits {
                tau_start: range.start,
                tau_end: range.end,
                fits,
                best: pick_best(&mapes),
                failures,
            }
        })
        .collect()
}

/// Fits on `ranges`, or on `[first positive lag, last lag]` when empty.
pub fn fit_report(curve: &AutocorrCurve, source_id: &str, ranges: &[TauRange]) -> Result<FitReport> {
    let first = first_positive_lag(curve).ok();
    let ranges = if ranges.is_empty() {
        let start = first.ok_or(Error::AllNonPositive)?;
        let end = curve.points().last().map_or(0, |p| p.tau);
        vec![TauRange::new(start, end).map_err(|_| {
            Error::InsufficientData(format!("no lags above the first positive lag {start}"))
        })?]
    } else {
        ranges.to_vec()
    };
    Ok(FitReport {
        source_id: source_id.to_string(),
        series_length: curve.meta().series_length,
        first_positive_lag: first,
        ranges: fit_ranges(curve, &ranges),
    })
}

/// Token counts and sizes recorded in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub tokens: usize,
    pub tokens_filtered: usize,
    pub vocabulary: usize,
    pub oov_tokens: usize,
    pub series_length: usize,
    pub dim: usize,
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// The run configuration without its output directory.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub stats: RunStats,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::from_io_at(e, path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// What [`run_analysis`] produced.
#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub out: PathBuf,
    pub curve: AutocorrCurve,
    pub fits: FitReport,
    pub manifest: Manifest,
}

fn load_document(config: &AnalysisConfig) -> Result<Document> {
    let doc = match &config.input {
        InputSource::Path(p) => Document::from_file(p, &config.language)?,
        InputSource::Url(url) => fetch_document(url, &config.cache_dir())?.with_language(config.language.clone()),
    };
    match config.clean.rules()? {
        Some(rules) => clean_document(&doc, &rules),
        None => Ok(doc),
    }
}

fn load_table(config: &AnalysisConfig, ts: &TokenSeries) -> Result<EmbeddingTable> {
    match &config.embedding {
        EmbeddingConfig::Pretrained { path } => {
            let vocab: HashSet<&str> = ts.vocab().keys().map(String::as_str).collect();
            load_pretrained_filtered(path, |w| vocab.contains(w))
        }
        EmbeddingConfig::Random { dim, seed } => random_table(ts.vocab().keys().map(String::as_str), *dim, *seed),
    }
}

/// Embed, center (or trust the caller's centering) and window-average.
pub fn prepare_series(ts: &TokenSeries, table: &EmbeddingTable, oov: OovPolicy, centered: bool, window: usize) -> Result<VectorSeries> {
    let vs = embed(ts, table, oov)?;
    let vs = if centered { center(&vs)? } else { vs.assume_centered() };
    window_average(&vs, window)
}

fn series_grid(tau_max: usize, len: usize) -> Result<TauGrid> {
    let grid = tau_grid(tau_max)?.below(len);
    if grid.is_empty() {
        return Err(Error::InsufficientData(format!("series of length {len} has no lag on the grid")));
    }
    Ok(grid)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Output files accumulated in memory, written to the staging directory.
#[derive(Default)]
struct Bundle {
    files: BTreeMap<String, Vec<u8>>,
}

impl Bundle {
    fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.insert(name.to_string(), contents.into());
    }

    fn hashes(&self) -> BTreeMap<String, String> {
        self.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect()
    }
}

/// Runs the whole pipeline described by `config` and writes its bundle.
pub fn run_analysis(config: &AnalysisConfig) -> Result<AnalysisOutcome> {
    config.validate()?;
    let doc = load_document(config)?;
    let raw = tokenize(&doc);
    let ts = filter_by_frequency(&raw, config.filter.f_max, config.filter.c_min)?;
    info!("{}: {} tokens, {} after filtering", doc.id, raw.len(), ts.len());
    let table = load_table(config, &ts)?;
    let oov_tokens = ts.tokens().iter().filter(|t| !table.contains(t)).count();
    let vs = prepare_series(&ts, &table, config.oov, config.center, config.window)?;
    let grid = series_grid(config.tau_max, vs.len())?;
    info!("autocorrelation of {} x {} series on {} lags", vs.len(), vs.dim(), grid.len());
    let curve = autocorrelation(&vs, &grid, config.method)?;
    let fits = fit_report(&curve, &doc.id, &config.ranges)?;

    let mut bundle = Bundle::default();
    bundle.add(CURVE_FILE, curve.to_csv_string());
    bundle.add(FITS_FILE, to_json(&fits)?);
    if config.svg {
        bundle.add("curve.svg", curve_svg(&curve, &fits));
    }
    if config.scan {
        let ranges = decade_ranges(&grid);
        info!("scanning {} decade ranges", ranges.len());
        let result = scan(&curve, &grid, &ranges)?.with_metadata(ScanMetadata {
            source_id: doc.id.clone(),
            embedding: embedding_label(&config.embedding),
            window: Some(config.window),
            dim: Some(vs.dim()),
        });
        bundle.add("scan_best.csv", result.best_map_csv());
        bundle.add("scan_diff_exp.csv", result.difference_map_csv(ModelKind::Exponential));
        bundle.add("scan_diff_log.csv", result.difference_map_csv(ModelKind::Logarithmic));
        bundle.add("scan_entries.csv", result.entries_csv());
        if config.svg {
            bundle.add("scan_best.svg", result.best_map_svg());
        }
    }
    if let Some(seed) = config.shuffle_seed {
        let shuffled = shuffle(&ts, seed);
        let svs = prepare_series(&shuffled, &table, config.oov, config.center, config.window)?;
        let scurve = autocorrelation(&svs, &grid, config.method)?;
        let ranges: Vec<TauRange> = fits.ranges.iter().map(|r| TauRange { start: r.tau_start, end: r.tau_end }).collect();
        let sfits = FitReport {
            source_id: format!("{}#shuffled:{seed}", doc.id),
            series_length: scurve.meta().series_length,
            first_positive_lag: first_positive_lag(&scurve).ok(),
            ranges: fit_ranges(&scurve, &ranges),
        };
        bundle.add(SHUFFLED_CURVE_FILE, scurve.to_csv_string());
        bundle.add(SHUFFLED_FITS_FILE, to_json(&sfits)?);
    }

    let mut inputs = BTreeMap::new();
    inputs.insert("document".to_string(), sha256_hex(doc.text.as_bytes()));
    if let EmbeddingConfig::Pretrained { path } = &config.embedding {
        inputs.insert("embeddings".to_string(), sha256_file(path)?);
    }
    if let CleanConfig::File(path) = &config.clean {
        inputs.insert("clean_rules".to_string(), sha256_file(path)?);
    }
    let mut config_json = serde_json::to_value(config)?;
    if let Some(obj) = config_json.as_object_mut() {
        obj.remove("out");
    }
    let manifest = Manifest {
        tool: "corrdecay".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config_json,
        inputs,
        stats: RunStats {
            tokens: raw.len(),
            tokens_filtered: ts.len(),
            vocabulary: ts.vocab().len(),
            oov_tokens,
            series_length: vs.len(),
            dim: vs.dim(),
            grid_points: grid.len(),
        },
        outputs: bundle.hashes(),
    };
    bundle.add(MANIFEST_FILE, to_json(&manifest)?);
    commit_bundle(&config.out, &bundle)?;
    info!("wrote {}", config.out.display());
    Ok(AnalysisOutcome {
        out: config.out.clone(),
        curve,
        fits,
        manifest,
    })
}

fn embedding_label(e: &EmbeddingConfig) -> String {
    match e {
        EmbeddingConfig::Pretrained { path } => format!("pretrained:{}", path.display()),
        EmbeddingConfig::Random { dim, seed } => format!("random:d={dim},seed={seed}"),
    }
}

/// Writes `bundle` into a sibling staging directory, then swaps it in.
///
/// An existing target is replaced only if it is empty or an earlier bundle.
fn commit_bundle(out: &Path, bundle: &Bundle) -> Result<()> {
    if out.exists() {
        let is_bundle = out.join(MANIFEST_FILE).is_file();
        let is_empty = out.is_dir() && fs::read_dir(out)?.next().is_none();
        if !(is_bundle || is_empty) {
            return Err(Error::Param(format!(
                "output {} exists and is not a report bundle",
                out.display()
            )));
        }
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    let write = || -> Result<()> {
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging)?;
        for (file, contents) in &bundle.files {
            fs::write(staging.join(file), contents)?;
        }
        if out.exists() {
            fs::remove_dir_all(out)?;
        }
        fs::rename(&staging, out)?;
        Ok(())
    };
    write().inspect_err(|_| {
        let _ = fs::remove_dir_all(&staging);
    })
}

/// Result of re-checking a bundle against its manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BundleCheck {
    pub files_checked: usize,
    pub hash_mismatches: Vec<String>,
    pub missing: Vec<String>,
    pub fits_checked: usize,
    /// Curve or fit files that could not be re-read or re-scored.
    pub unreadable: Vec<String>,
    /// Largest `|stored - recomputed|` MAPE difference.
    pub max_mape_deviation: f64,
}

impl BundleCheck {
    pub fn ok(&self) -> bool {
        self.hash_mismatches.is_empty()
            && self.missing.is_empty()
            && self.unreadable.is_empty()
            && self.max_mape_deviation <= CLOSED_LOOP_TOLERANCE
    }
}

/// Recomputes every stored MAPE of `fits` from `curve`; returns the count and
/// the largest deviation.
pub fn closed_loop(curve: &AutocorrCurve, fits: &FitReport) -> Result<(usize, f64)> {
    let mut worst = 0.0f64;
    let mut n = 0;
    for r in &fits.ranges {
        for fit in &r.fits {
            let again = mape(curve, &fit.model, fit.range())?;
            worst = worst.max((again - fit.mape).abs());
            n += 1;
        }
    }
    Ok((n, worst))
}

/// Checks output hashes and the MAPE closed loop of a bundle directory.
pub fn verify_bundle(dir: impl AsRef<Path>) -> Result<BundleCheck> {
    let dir = dir.as_ref();
    let manifest = Manifest::from_file(dir.join(MANIFEST_FILE))?;
    let mut check = BundleCheck::default();
    for (name, hash) in &manifest.outputs {
        let path = dir.join(name);
        if !path.is_file() {
            check.missing.push(name.clone());
            continue;
        }
        check.files_checked += 1;
        if &sha256_file(&path)? != hash {
            check.hash_mismatches.push(name.clone());
        }
    }
    for (curve_file, fits_file) in [(CURVE_FILE, FITS_FILE), (SHUFFLED_CURVE_FILE, SHUFFLED_FITS_FILE)] {
        if !manifest.outputs.contains_key(curve_file) || check.missing.iter().any(|m| m == curve_file || m == fits_file) {
            continue;
        }
        let rescored = AutocorrCurve::read_csv_file(dir.join(curve_file))
            .and_then(|curve| closed_loop(&curve, &FitReport::from_file(dir.join(fits_file))?));
        match rescored {
            Ok((n, worst)) => {
                check.fits_checked += n;
                check.max_mape_deviation = check.max_mape_deviation.max(worst);
            }
            Err(e) => check.unreadable.push(format!("{curve_file}: {e}")),
        }
    }
    Ok(check)
}

/// Log-log plot of the positive curve values with the fitted power laws.
pub fn curve_svg(curve: &AutocorrCurve, fits: &FitReport) -> String {
    let (w, h, m) = (640.0, 420.0, 50.0);
    let pts: Vec<(f64, f64)> = curve
        .points()
        .iter()
        .filter(|p| p.tau > 0 && p.c > 0.0)
        .map(|p| ((p.tau as f64).log10(), p.c.log10()))
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (x0, x1) = bounds(pts.iter().map(|p| p.0));
    let (y0, y1) = bounds(pts.iter().map(|p| p.1));
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let _ = writeln!(
        svg,
        "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
        w - 2.0 * m,
        h - 2.0 * m
    );
    for (x, y) in &pts {
        let _ = writeln!(svg, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#222\"/>", sx(*x), sy(*y));
    }
    for r in &fits.ranges {
        if let Some(fit) = r.get(ModelKind::Power) {
            let a = (fit.tau_start as f64).log10();
            let b = (fit.tau_end as f64).log10();
            let ya = fit.model.predict(fit.tau_start as f64).log10();
            let yb = fit.model.predict(fit.tau_end as f64).log10();
            let _ = writeln!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#1f5fbf\" stroke-width=\"1.5\"/>",
                sx(a),
                sy(ya),
                sx(b),
                sy(yb)
            );
        }
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">log10 tau</text>",
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"15\" y=\"{}\" font-size=\"11\" transform=\"rotate(-90 15 {})\">log10 C</text>",
        h / 2.0,
        h / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
