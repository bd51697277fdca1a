use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corrdecay::autocorr::{tau_grid, AutocorrCurve};
use corrdecay::corpus::{cache_path, clean_document, fetch_document, shuffle, tokenize, CleanRules, Document};
use corrdecay::error::{Error, ErrorClass, Result};
use corrdecay::fitlab::TauRange;
use corrdecay::pipeline::{fit_report, run_analysis, verify_bundle, AnalysisConfig, CleanConfig, EmbeddingConfig, InputSource};
use corrdecay::rangescan::{decade_ranges, scan};
use corrdecay::synthsrc::{generate_markov, generate_pcfg, markov_autocorr_exact, MarkovSpec, PcfgTreeSpec};
use corrdecay::{Method, OovPolicy};
use log::info;

/// Measure and fit autocorrelation decay in long texts.
#[derive(Parser)]
#[command(name = "corrdecay", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download a document into the local cache.
    Fetch {
        #[arg(long)]
        url: String,
        #[arg(long, default_value = ".corrdecay-cache")]
        cache_dir: PathBuf,
        /// Also write the text here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Strip boilerplate from a text file.
    Clean {
        #[arg(long)]
        input: PathBuf,
        /// `gutenberg`, `none`, or a JSON rule file.
        #[arg(long, default_value = "gutenberg")]
        clean: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline and write a report bundle.
    Analyze(Box<AnalyzeArgs>),
    /// Fit all decay laws to a curve CSV.
    Fit {
        #[arg(long)]
        curve: PathBuf,
        /// Lag range START:END; repeatable. Defaults to the positive tail.
        #[arg(long = "range")]
        ranges: Vec<TauRange>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit every decade-spanning range of a curve CSV.
    Scan {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
    },
    /// Generate synthetic sequences.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Shuffle the tokens of a text, one token per output line.
    Shuffle {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a report bundle against its manifest.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Sample a Markov chain started from its stationary law.
    Markov {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the exact autocorrelation curve as CSV.
        #[arg(long)]
        exact_curve: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        tau_max: usize,
    },
    /// Sample the leaves of a symbol-mutation binary tree.
    Pcfg {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "url")]
    input: Option<PathBuf>,
    #[arg(long)]
    url: Option<String>,
    #[arg(long)]
    lang: Option<String>,
    /// Pretrained vectors in GloVe text format.
    #[arg(long, conflicts_with = "random_dim")]
    embeddings: Option<PathBuf>,
    /// Use random bag-of-words vectors of this dimension.
    #[arg(long)]
    random_dim: Option<usize>,
    /// Seed of the random vectors.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    tau_max: Option<usize>,
    #[arg(long)]
    oov: Option<OovPolicy>,
    #[arg(long)]
    fmax: Option<f64>,
    #[arg(long)]
    cmin: Option<usize>,
    #[arg(long = "range")]
    ranges: Vec<TauRange>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Skip mean removal and treat the vectors as already centered.
    #[arg(long)]
    no_center: bool,
    #[arg(long)]
    method: Option<Method>,
    /// `gutenberg`, `none`, or a JSON rule file.
    #[arg(long)]
    clean: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Skip the decade-range scan.
    #[arg(long)]
    no_scan: bool,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Param(msg.into())
}

fn clean_config(arg: &str) -> CleanConfig {
    match arg {
        "none" => CleanConfig::None,
        "gutenberg" => CleanConfig::Gutenberg,
        path => CleanConfig::File(PathBuf::from(path)),
    }
}

impl AnalyzeArgs {
    fn into_config(self) -> Result<AnalysisConfig> {
        let mut config = match &self.config {
            Some(path) => Some(AnalysisConfig::from_file(path)?),
            None => None,
        };
        let input = match (self.input, self.url) {
            (Some(p), _) => Some(InputSource::Path(p)),
            (None, Some(u)) => Some(InputSource::Url(u)),
            (None, None) => None,
        };
        let embedding = match (self.embeddings, self.random_dim) {
            (Some(path), _) => Some(EmbeddingConfig::Pretrained { path }),
            (None, Some(dim)) => Some(EmbeddingConfig::Random {
                dim,
                seed: self.seed.unwrap_or(0),
            }),
            (None, None) => None,
        };
        let mut config = match config.take() {
            Some(mut c) => {
                if let Some(i) = input {
                    c.input = i;
                }
                if let Some(e) = embedding {
                    c.embedding = e;
                }
                if let Some(o) = self.out {
                    c.out = o;
                }
                c
            }
            None => AnalysisConfig::new(
                input.ok_or_else(|| usage("one of --input, --url or --config is required"))?,
                embedding.ok_or_else(|| usage("one of --embeddings, --random-dim or --config is required"))?,
                self.out.ok_or_else(|| usage("--out is required without --config"))?,
            ),
        };
        if let (Some(seed), EmbeddingConfig::Random { seed: s, .. }) = (self.seed, &mut config.embedding) {
            *s = seed;
        }
        if let Some(v) = self.lang {
            config.language = v;
        }
        if let Some(v) = self.window {
            config.window = v;
        }
        if let Some(v) = self.tau_max {
            config.tau_max = v;
        }
        if let Some(v) = self.oov {
            config.oov = v;
        }
        if let Some(v) = self.fmax {
            config.filter.f_max = v;
        }
        if let Some(v) = self.cmin {
            config.filter.c_min = v;
        }
        if !self.ranges.is_empty() {
            config.ranges = self.ranges;
        }
        if let Some(v) = self.shuffle_seed {
            config.shuffle_seed = Some(v);
        }
        if let Some(v) = self.method {
            config.method = v;
        }
        if let Some(v) = self.clean {
            config.clean = clean_config(&v);
        }
        if let Some(v) = self.cache_dir {
            config.cache_dir = Some(v);
        }
        config.svg |= self.svg;
        config.center &= !self.no_center;
        config.scan &= !self.no_scan;
        Ok(config)
    }
}

fn write_output(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, contents)?;
        }
        None => std::io::stdout().write_all(contents.as_bytes())?,
    }
    Ok(())
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fetch { url, cache_dir, out } => {
            let doc = fetch_document(&url, &cache_dir)?;
            if let Some(path) = &out {
                write_output(Some(path), &doc.text)?;
            }
            print_json(&serde_json::json!({
                "id": doc.id,
                "cache_path": cache_path(&url, &cache_dir),
                "bytes": doc.text.len(),
                "retrieved_unix": doc.provenance.retrieved_unix,
            }))
        }
        Command::Clean { input, clean, out } => {
            let doc = Document::from_file(&input, "und")?;
            let rules = match clean_config(&clean) {
                CleanConfig::None => CleanRules::default(),
                CleanConfig::Gutenberg => CleanRules::gutenberg(),
                CleanConfig::File(p) => CleanRules::from_file(p)?,
            };
            write_output(out.as_deref(), &clean_document(&doc, &rules)?.text)
        }
        Command::Analyze(args) => {
            let outcome = run_analysis(&args.into_config()?)?;
            let best: Vec<_> = outcome
                .fits
                .ranges
                .iter()
                .map(|r| serde_json::json!({"tau_start": r.tau_start, "tau_end": r.tau_end, "best": r.best}))
                .collect();
            print_json(&serde_json::json!({"out": outcome.out, "ranges": best}))
        }
        Command::Fit { curve, ranges, out } => {
            let c = AutocorrCurve::read_csv_file(&curve)?;
            let report = fit_report(&c, &curve.display().to_string(), &ranges)?;
            write_output(out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&report)?))
        }
        Command::Scan { curve, out, svg } => {
            let c = AutocorrCurve::read_csv_file(&curve)?;
            let max = c.points().last().map_or(0, |p| p.tau);
            let grid = tau_grid(max.max(1))?;
            let grid = corrdecay::TauGrid::new(grid.taus().iter().copied().filter(|&t| c.value_at(t).is_some()).collect())?;
            let ranges = decade_ranges(&grid);
            info!("scanning {} ranges", ranges.len());
            let result = scan(&c, &grid, &ranges)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("scan_best.csv"), result.best_map_csv())?;
            fs::write(out.join("scan_diff_exp.csv"), result.difference_map_csv(corrdecay::ModelKind::Exponential))?;
            fs::write(out.join("scan_diff_log.csv"), result.difference_map_csv(corrdecay::ModelKind::Logarithmic))?;
            fs::write(out.join("scan_entries.csv"), result.entries_csv())?;
            if svg {
                fs::write(out.join("scan_best.svg"), result.best_map_svg())?;
            }
            Ok(())
        }
        Command::Synth(SynthCommand::Markov {
            spec,
            n,
            seed,
            out,
            exact_curve,
            tau_max,
        }) => {
            let spec = MarkovSpec::from_file(&spec)?;
            if let Some(path) = exact_curve {
                let grid = tau_grid(tau_max)?;
                let mut lags = vec![0];
                lags.extend_from_slice(grid.taus());
                write_output(Some(&path), &markov_autocorr_exact(&spec, &lags)?.to_csv_string())?;
            }
            write_output(out.as_deref(), &generate_markov(&spec, n, seed)?.to_lines())
        }
        Command::Synth(SynthCommand::Pcfg { spec, seed, out }) => {
            let spec = PcfgTreeSpec::from_file(&spec)?;
            write_output(out.as_deref(), &generate_pcfg(&spec, seed)?.to_lines())
        }
        Command::Shuffle { input, seed, out } => {
            let ts = tokenize(&Document::from_file(&input, "und")?);
            write_output(out.as_deref(), &shuffle(&ts, seed).to_lines())
        }
        Command::Report { dir } => {
            let check = verify_bundle(&dir)?;
            print_json(&serde_json::to_value(&check)?)?;
            if check.ok() {
                Ok(())
            } else {
                Err(Error::Parse(format!("bundle {} does not match its manifest", dir.display())))
            }
        }
    }
}

fn report_error(kind: &str, message: &str) {
    let body = serde_json::json!({"error": {"kind": kind, "message": message}});
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("UsageError", e.render().to_string().trim());
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            })
        }
    }
}
