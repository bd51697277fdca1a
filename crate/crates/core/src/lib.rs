//! Measure how word-embedding autocorrelations decay with distance in long
//! texts, fit power, exponential and logarithmic laws to the decay, and check
//! the fits against synthetic sources with known behavior.

pub mod autocorr;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod fitlab;
pub mod pipeline;
pub mod rangescan;
pub mod synthsrc;

pub use autocorr::{autocorrelation, first_positive_lag, tau_grid, AutocorrCurve, Method, TauGrid};
pub use corpus::{clean_document, fetch_document, filter_by_frequency, shuffle, tokenize, CleanRules, Document, TokenSeries};
pub use embedding::{center, embed, window_average, EmbeddingSource, EmbeddingTable, OovPolicy, VectorSeries};
pub use error::{Error, ErrorClass, Result};
pub use fitlab::{fit_decay, select_best, DecayModel, FitResult, ModelKind, TauRange};
pub use pipeline::{run_analysis, verify_bundle, AnalysisConfig, EmbeddingConfig, InputSource};
pub use rangescan::{decade_ranges, scan, RangeEntry, RangeScanResult};
pub use synthsrc::{generate_markov, generate_pcfg, markov_autocorr_exact, mutual_information, MarkovSpec, PcfgTreeSpec};

use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::from_io_at(e, path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
