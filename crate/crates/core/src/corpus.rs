//! Text acquisition, cleaning, tokenization and token-level transforms.
//!
//! A [`Document`] is raw UTF-8 text plus where it came from. [`clean_document`]
//! strips boilerplate with a rule set, [`tokenize`] turns text into a
//! [`TokenSeries`], and [`filter_by_frequency`] / [`shuffle`] derive new series
//! from an existing one.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock, Mutex};
use std::time::UNIX_EPOCH;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FetchFailure, Result};
use crate::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Source URL or file path.
    pub source: String,
    /// Seconds since the Unix epoch at which the bytes were retrieved, if known.
    pub retrieved_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    /// ISO-639-1 code, or "und" when undeclared.
    pub language: String,
    pub text: String,
    pub provenance: Provenance,
}

impl Document {
    pub fn new(id: impl Into<String>, language: impl Into<String>, text: impl Into<String>) -> Self {
        let id = id.into();
        Document {
            provenance: Provenance {
                source: id.clone(),
                retrieved_unix: None,
            },
            id,
            language: language.into(),
            text: text.into(),
        }
    }

    /// Reads a UTF-8 text file. The document id is the file stem.
    pub fn from_file(path: impl AsRef<Path>, language: &str) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::from_io_at(e, path))?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Encoding(path.display().to_string()))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(Document {
            id,
            language: language.to_string(),
            text,
            provenance: Provenance {
                source: path.display().to_string(),
                retrieved_unix: mtime_unix(path),
            },
        })
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = language.into();
        self
    }
}

fn mtime_unix(path: &Path) -> Option<u64> {
    let modified = fs::metadata(path).ok()?.modified().ok()?;
    modified.duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

/// Location of the cached copy of `url` inside `cache_dir`.
pub fn cache_path(url: &str, cache_dir: &Path) -> PathBuf {
    cache_dir.join(format!("{}.txt", sha256_hex(url.as_bytes())))
}

static FETCH_LOCKS: LazyLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

fn url_lock(url: &str) -> Arc<Mutex<()>> {
    let mut locks = FETCH_LOCKS.lock().unwrap_or_else(|e| e.into_inner());
    locks.entry(url.to_string()).or_default().clone()
}

/// Fetches `url` over HTTP(S), going through a content cache in `cache_dir`.
///
/// A cached copy is returned without touching the network. Fresh downloads are
/// validated as UTF-8 before they are persisted, so the cache never holds
/// undecodable payloads.
pub fn fetch_document(url: &str, cache_dir: &Path) -> Result<Document> {
    let parsed = url::Url::parse(url).map_err(|e| Error::Param(format!("bad url {url:?}: {e}")))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(Error::Param(format!("unsupported url scheme {:?}", parsed.scheme())));
    }
    let path = cache_path(url, cache_dir);

    let lock = url_lock(url);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

    if !path.exists() {
        let bytes = download(url)?;
        if std::str::from_utf8(&bytes).is_err() {
            return Err(Error::Encoding(url.to_string()));
        }
        fs::create_dir_all(cache_dir)?;
        let mut tmp = tempfile_in(cache_dir)?;
        tmp.1.write_all(&bytes)?;
        tmp.1.sync_all()?;
        drop(tmp.1);
        fs::rename(&tmp.0, &path)?;
    }

    let bytes = fs::read(&path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Encoding(url.to_string()))?;
    Ok(Document {
        id: url.to_string(),
        language: "und".to_string(),
        text,
        provenance: Provenance {
            source: url.to_string(),
            retrieved_unix: mtime_unix(&path),
        },
    })
}

fn tempfile_in(dir: &Path) -> Result<(PathBuf, fs::File)> {
    for attempt in 0u32.. {
        let candidate = dir.join(format!(".fetch-{}-{attempt}.part", std::process::id()));
        match fs::OpenOptions::new().write(true).create_new(true).open(&candidate) {
            Ok(file) => return Ok((candidate, file)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

fn download(url: &str) -> Result<Vec<u8>> {
    let fetch_err = |failure| Error::Fetch {
        url: url.to_string(),
        failure,
    };
    let mut response = match ureq::get(url).call() {
        Ok(r) => r,
        Err(ureq::Error::StatusCode(404)) => return Err(fetch_err(FetchFailure::NotFound)),
        Err(ureq::Error::StatusCode(code)) => return Err(fetch_err(FetchFailure::Status(code))),
        Err(e) => return Err(fetch_err(FetchFailure::Network(e.to_string()))),
    };
    let status = response.status().as_u16();
    if status != 200 {
        return Err(fetch_err(FetchFailure::Status(status)));
    }
    let mut bytes = Vec::new();
    response
        .body_mut()
        .as_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| fetch_err(FetchFailure::Network(e.to_string())))?;
    Ok(bytes)
}

/// Named switches that expand to built-in removal patterns.
pub const TOGGLES: [&str; 4] = [
    "strip_front_matter",
    "strip_notes",
    "strip_toc",
    "strip_illustration_links",
];

fn toggle_patterns(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "strip_front_matter" => &[
            r"(?is)\A.*?\*{3}\s*START OF (?:THE|THIS) PROJECT GUTENBERG E-?BOOK[^\n]*",
            r"(?is)\*{3}\s*END OF (?:THE|THIS) PROJECT GUTENBERG E-?BOOK.*\z",
            r"(?ims)^[ \t]*End of (?:the )?Project Gutenberg.*\z",
        ],
        "strip_notes" => &[
            r"(?is)\[(?:Footnote|Note|Translator['’]?s? note|Author['’]?s? note)[^\]]*\]",
            r"(?ims)^[ \t]*(?:Transcriber|Translator|Author)['’]?s? Notes?\b.*?(?:\n[ \t]*\n|\z)",
        ],
        "strip_toc" => &[
            r"(?ms)^[ \t]*(?:TABLE OF )?CONTENTS\.?[ \t]*\r?\n.*?(?:\n(?:[ \t]*\r?\n){2,}|\z)",
            r"(?ms)^[ \t]*INDEX\.?[ \t]*\r?\n.*\z",
        ],
        "strip_illustration_links" => &[
            r"(?i)\[Illustrations?\b[^\]]*\]",
            r"(?i)\{Illustrations?\b[^}]*\}",
            r"!\[[^\]]*\]\([^)]*\)",
        ],
        _ => return None,
    })
}

/// An ordered set of removal patterns plus named toggles.
///
/// JSON form: `{"patterns": [regex, ...], "toggles": {name: bool}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanRules {
    #[serde(default)]
    pub patterns: Vec<String>,
    #[serde(default)]
    pub toggles: BTreeMap<String, bool>,
}

impl CleanRules {
    /// The boilerplate profile for Project Gutenberg style plain-text editions.
    pub fn gutenberg() -> Self {
        CleanRules {
            patterns: Vec::new(),
            toggles: TOGGLES.iter().map(|t| (t.to_string(), true)).collect(),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let rules: CleanRules = serde_json::from_str(json)?;
        rules.compile()?;
        Ok(rules)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|e| Error::from_io_at(e, path))?;
        Self::from_json(&json)
    }

    fn compile(&self) -> Result<Vec<Regex>> {
        let mut compiled = Vec::new();
        for (name, enabled) in &self.toggles {
            let patterns = toggle_patterns(name).ok_or_else(|| Error::Rule {
                pattern: name.clone(),
                message: format!("unknown toggle (known: {})", TOGGLES.join(", ")),
            })?;
            if *enabled {
                for p in patterns {
                    compiled.push(Regex::new(p).expect("built-in pattern compiles"));
                }
            }
        }
        for p in &self.patterns {
            compiled.push(Regex::new(p).map_err(|e| Error::Rule {
                pattern: p.clone(),
                message: e.to_string(),
            })?);
        }
        Ok(compiled)
    }
}

/// Removes every span matched by `rules`.
///
/// Rules are applied in order and the pass is repeated until the text stops
/// changing, so removing one span can never leave a fresh match behind.
pub fn clean_document(doc: &Document, rules: &CleanRules) -> Result<Document> {
    let compiled = rules.compile()?;
    let mut text = doc.text.clone();
    loop {
        let before = text.len();
        for re in &compiled {
            if let std::borrow::Cow::Owned(replaced) = re.replace_all(&text, "") {
                text = replaced;
            }
        }
        if text.len() == before {
            break;
        }
    }
    Ok(Document {
        text,
        ..doc.clone()
    })
}

/// Ordered word tokens together with their occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeries {
    tokens: Vec<String>,
    vocab: BTreeMap<String, usize>,
    source_id: String,
}

impl TokenSeries {
    pub fn new(tokens: Vec<String>, source_id: impl Into<String>) -> Self {
        let mut vocab = BTreeMap::new();
        for t in &tokens {
            *vocab.entry(t.clone()).or_insert(0) += 1;
        }
        TokenSeries {
            tokens,
            vocab,
            source_id: source_id.into(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vocab(&self) -> &BTreeMap<String, usize> {
        &self.vocab
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn count(&self, word: &str) -> usize {
        self.vocab.get(word).copied().unwrap_or(0)
    }

    /// One token per line, each line terminated by `'\n'`.
    pub fn to_lines(&self) -> String {
        let mut out = String::with_capacity(self.tokens.iter().map(|t| t.len() + 1).sum());
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

/// Splits text into lowercased maximal runs of Unicode letters.
pub fn tokenize_text(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

pub fn tokenize(doc: &Document) -> TokenSeries {
    TokenSeries::new(tokenize_text(&doc.text), doc.id.clone())
}

/// Drops words with relative frequency above `f_max` or count below `c_min`.
pub fn filter_by_frequency(ts: &TokenSeries, f_max: f64, c_min: usize) -> Result<TokenSeries> {
    if !(f_max > 0.0 && f_max <= 1.0) {
        return Err(Error::Param(format!("f_max must lie in (0, 1], got {f_max}")));
    }
    if c_min < 1 {
        return Err(Error::Param("c_min must be at least 1".to_string()));
    }
    let total = ts.len() as f64;
    let keep = |word: &str| {
        let count = ts.count(word);
        count >= c_min && (count as f64) / total <= f_max
    };
    let tokens = ts.tokens.iter().filter(|t| keep(t)).cloned().collect();
    Ok(TokenSeries::new(tokens, ts.source_id.clone()))
}

/// Uniformly random permutation of the tokens, reproducible from `seed`.
pub fn shuffle(ts: &TokenSeries, seed: u64) -> TokenSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = ts.tokens.clone();
    tokens.shuffle(&mut rng);
    TokenSeries {
        tokens,
        vocab: ts.vocab.clone(),
        source_id: ts.source_id.clone(),
    }
}
