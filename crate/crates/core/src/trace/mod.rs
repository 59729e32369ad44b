//! Request traces: the replayable workload that drives every simulation.
//!
//! A trace is a list of requests ordered by arrival. Each request carries the
//! chain of salted block hashes covering its prompt (16 tokens per block) and
//! the number of tokens it decodes. Because every hash encodes its entire
//! prefix, two equal hashes always denote the same cached KV block.
//!
//! Traces are stored as JSON Lines, one request per line:
//!
//! ```text
//! {"id":"r0","arrival_ms":0,"blocks":["a1","b2"],"output_tokens":5}
//! ```
//!
//! An optional first line `{"trace":{"duration_ms":...,"labels":{...}}}`
//! carries the observation window and free-form labels.

mod analysis;
mod synth;

pub use analysis::{
    interarrival_stats, oracle_footprint, reuse_skew, workload_density, write_footprint_csv,
    write_lorenz_csv, histogram_of, FootprintSample, HistogramBin, IntervalStats, LorenzCurve,
};
pub(crate) use analysis::{block_accesses, nearest_rank};
pub use synth::{
    generate_trace, ArrivalProcess, GapDistribution, LengthRange, PrefixPool, SessionModel,
    SyntheticTraceSpec,
};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

/// Tokens covered by one KV block.
pub const TOKENS_PER_BLOCK: u64 = 16;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate request id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("trace file contains no requests")]
    Empty,
    #[error("invalid synthetic trace spec: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Invalid(String),
}

/// Opaque salted hash of one 16-token block. Equality is byte equality.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockHash(Arc<str>);

impl BlockHash {
    pub fn new(s: impl Into<Arc<str>>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for BlockHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for BlockHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BlockHash {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRequest {
    #[serde(rename = "id")]
    pub request_id: String,
    pub arrival_ms: u64,
    #[serde(rename = "blocks")]
    pub input_blocks: Vec<BlockHash>,
    pub output_tokens: u32,
}

impl TraceRequest {
    pub fn input_tokens(&self) -> u64 {
        TOKENS_PER_BLOCK * self.input_blocks.len() as u64
    }

    fn validate(&self) -> Result<(), String> {
        if self.input_blocks.is_empty() {
            return Err(format!("request {:?} has no input blocks", self.request_id));
        }
        if self.output_tokens == 0 {
            return Err(format!(
                "request {:?} must decode at least one token",
                self.request_id
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub requests: Vec<TraceRequest>,
    pub duration_ms: u64,
    pub metadata: BTreeMap<String, String>,
}

/// A trace read from disk plus the number of records that arrived out of order.
#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub trace: Trace,
    pub reordered: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequest {
    id: String,
    arrival_ms: u64,
    blocks: Vec<BlockHash>,
    output_tokens: u32,
    #[serde(default)]
    input_tokens: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    trace: Header,
}

#[derive(Serialize, Deserialize)]
struct Header {
    duration_ms: u64,
    #[serde(default)]
    labels: BTreeMap<String, String>,
}

impl Trace {
    /// Builds a trace, sorting by arrival (stable) and checking invariants.
    /// `duration_ms` is raised to the last arrival when shorter.
    pub fn new(
        mut requests: Vec<TraceRequest>,
        duration_ms: u64,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, TraceError> {
        let mut seen = HashSet::with_capacity(requests.len());
        for r in &requests {
            r.validate().map_err(TraceError::Invalid)?;
            if !seen.insert(r.request_id.as_str()) {
                return Err(TraceError::Invalid(format!(
                    "duplicate request id {:?}",
                    r.request_id
                )));
            }
        }
        requests.sort_by_key(|r| r.arrival_ms);
        let last = requests.last().map_or(0, |r| r.arrival_ms);
        Ok(Self {
            requests,
            duration_ms: duration_ms.max(last),
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn total_input_tokens(&self) -> u64 {
        self.requests.iter().map(TraceRequest::input_tokens).sum()
    }

    /// Requests whose arrival lies in `[end - window_ms, end]`, where `end`
    /// is the trace duration.
    pub fn recent_window(&self, window_ms: u64) -> Trace {
        let start = self.duration_ms.saturating_sub(window_ms);
        let requests: Vec<_> = self
            .requests
            .iter()
            .filter(|r| r.arrival_ms >= start)
            .cloned()
            .collect();
        Trace {
            requests,
            duration_ms: self.duration_ms,
            metadata: self.metadata.clone(),
        }
    }

    /// Writes the trace as JSON Lines with a leading header line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = HeaderLine {
            trace: Header {
                duration_ms: self.duration_ms,
                labels: self.metadata.clone(),
            },
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for r in &self.requests {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        let io_err = |source| TraceError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_jsonl(std::io::BufWriter::new(file)).map_err(io_err)
    }
}

/// Reads a JSON Lines trace from `path`.
pub fn parse_trace(path: &Path) -> Result<ParsedTrace, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_trace(BufReader::new(file)).map_err(|e| match e {
        TraceError::Io { source, .. } => TraceError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<ParsedTrace, TraceError> {
    let mut requests: Vec<TraceRequest> = Vec::new();
    let mut ids = HashSet::new();
    let mut header: Option<Header> = None;
    let mut reordered = 0;
    let mut max_arrival = 0;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| TraceError::Io {
            path: String::new(),
            source,
        })?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if requests.is_empty() && header.is_none() && text.starts_with("{\"trace\"") {
            let h: HeaderLine = serde_json::from_str(text).map_err(|e| TraceError::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
            header = Some(h.trace);
            continue;
        }
        let raw: RawRequest = serde_json::from_str(text).map_err(|e| TraceError::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if let Some(tokens) = raw.input_tokens {
            if tokens % TOKENS_PER_BLOCK != 0 {
                return Err(TraceError::Malformed {
                    line: lineno,
                    message: format!(
                        "input_tokens {tokens} is not a multiple of the {TOKENS_PER_BLOCK}-token block size"
                    ),
                });
            }
            if tokens != TOKENS_PER_BLOCK * raw.blocks.len() as u64 {
                return Err(TraceError::Malformed {
                    line: lineno,
                    message: format!(
                        "input_tokens {tokens} disagrees with {} blocks",
                        raw.blocks.len()
                    ),
                });
            }
        }
        let req = TraceRequest {
            request_id: raw.id,
            arrival_ms: raw.arrival_ms,
            input_blocks: raw.blocks,
            output_tokens: raw.output_tokens,
        };
        req.validate().map_err(|message| TraceError::Malformed {
            line: lineno,
            message,
        })?;
        if !ids.insert(req.request_id.clone()) {
            return Err(TraceError::DuplicateId {
                line: lineno,
                id: req.request_id,
            });
        }
        if req.arrival_ms < max_arrival {
            reordered += 1;
        }
        max_arrival = max_arrival.max(req.arrival_ms);
        requests.push(req);
    }

    if requests.is_empty() {
        return Err(TraceError::Empty);
    }
    if reordered > 0 {
        log::warn!("{reordered} trace records were out of arrival order and have been sorted");
    }
    let (duration, labels) = header.map_or((0, BTreeMap::new()), |h| (h.duration_ms, h.labels));
    let trace = Trace::new(requests, duration, labels)?;
    Ok(ParsedTrace { trace, reordered })
}
