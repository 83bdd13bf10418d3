//! Line-oriented stream files: a header describing the metric followed by
//! one insert (`+ <id> <payload...>`) or delete (`- <id>`) per line.
//!
//! Header forms:
//!   `H l2 dim=<d> rmin=<f> rmax=<f>`          (alias for lp p=2)
//!   `H l1 dim=<d> rmin=<f> rmax=<f>`          (alias for lp p=1)
//!   `H lp p=<f> dim=<d> rmin=<f> rmax=<f>`
//!   `H hamming dim=<d> rmin=<f> rmax=<f>`     (payload is a 0/1 string)
//!   `H jaccard universe=<u> rmin=<f> rmax=<f>` (payload is element ids)
//!   `H matrix file=<path> [rmin=<f> rmax=<f>]` (payload is a row index;
//!    missing bounds are derived from the off-diagonal entries)

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::StreamError;
use crate::metric::{
    DistanceMatrix, MetricConfig, MetricKind, PointId, PointPayload, PointStore,
};

#[derive(Debug, Clone, PartialEq)]
pub enum StreamOp {
    Insert { id: PointId, payload: PointPayload },
    Delete { id: PointId },
}

impl StreamOp {
    pub fn id(&self) -> PointId {
        match self {
            StreamOp::Insert { id, .. } | StreamOp::Delete { id } => *id,
        }
    }
}

#[derive(Debug, Clone)]
pub enum StreamHeader {
    Builtin(MetricConfig),
    Matrix { path: PathBuf, r_min: Option<f64>, r_max: Option<f64> },
}

#[derive(Debug)]
pub struct StreamFile {
    pub header: StreamHeader,
    pub ops: Vec<StreamOp>,
}

impl StreamFile {
    /// Builds the point store for this stream, loading the matrix if needed.
    /// Relative matrix paths are resolved against `base_dir`.
    pub fn build_store(&self, base_dir: &Path, strict: bool) -> Result<PointStore, StreamError> {
        match &self.header {
            StreamHeader::Builtin(cfg) => Ok(PointStore::new(cfg.clone())),
            StreamHeader::Matrix { path, r_min, r_max } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let text = std::fs::read_to_string(&full)?;
                let matrix = DistanceMatrix::parse(&text, strict)?;
                let (lo, hi) = matrix.off_diagonal_range().unwrap_or((1.0, 1.0));
                let r_min = r_min.unwrap_or(if lo > 0.0 { lo } else { 1.0 });
                let r_max = r_max.unwrap_or(if hi > 0.0 { hi } else { r_min });
                let cfg = MetricConfig::new(MetricKind::Matrix, 0, 0, r_min, r_max)?;
                Ok(PointStore::with_matrix(cfg, matrix))
            }
        }
    }
}

fn parse_kv(tok: &str) -> Option<(&str, &str)> {
    tok.split_once('=')
}

fn err(line: usize, msg: impl Into<String>) -> StreamError {
    StreamError::Parse { line, msg: msg.into() }
}

fn parse_header(line: usize, toks: &[&str]) -> Result<StreamHeader, StreamError> {
    if toks.is_empty() {
        return Err(err(line, "empty header"));
    }
    let mut kv: HashMap<&str, &str> = HashMap::new();
    for t in &toks[1..] {
        let (k, v) = parse_kv(t).ok_or_else(|| err(line, format!("expected key=value, got {t}")))?;
        kv.insert(k, v);
    }
    let f = |k: &str| -> Result<f64, StreamError> {
        kv.get(k)
            .ok_or_else(|| err(line, format!("missing {k}=")))?
            .parse()
            .map_err(|e| err(line, format!("bad {k}: {e}")))
    };
    let u = |k: &str| -> Result<u64, StreamError> {
        kv.get(k)
            .ok_or_else(|| err(line, format!("missing {k}=")))?
            .parse()
            .map_err(|e| err(line, format!("bad {k}: {e}")))
    };
    let builtin = |kind: MetricKind, dim: usize, universe: u64| -> Result<StreamHeader, StreamError> {
        let cfg = MetricConfig::new(kind, dim, universe, f("rmin")?, f("rmax")?)?;
        Ok(StreamHeader::Builtin(cfg))
    };
    match toks[0] {
        "l2" => builtin(MetricKind::Lp { p: 2.0 }, u("dim")? as usize, 0),
        "l1" => builtin(MetricKind::Lp { p: 1.0 }, u("dim")? as usize, 0),
        "lp" => builtin(MetricKind::Lp { p: f("p")? }, u("dim")? as usize, 0),
        "hamming" => builtin(MetricKind::Hamming, u("dim")? as usize, 0),
        "jaccard" => builtin(MetricKind::Jaccard, 0, u("universe")?),
        "matrix" => {
            let path = kv.get("file").ok_or_else(|| err(line, "missing file="))?;
            let opt = |k: &str| kv.get(k).map(|v| v.parse::<f64>()).transpose();
            Ok(StreamHeader::Matrix {
                path: PathBuf::from(path),
                r_min: opt("rmin").map_err(|e| err(line, format!("bad rmin: {e}")))?,
                r_max: opt("rmax").map_err(|e| err(line, format!("bad rmax: {e}")))?,
            })
        }
        other => Err(err(line, format!("unknown metric {other}"))),
    }
}

fn parse_payload(
    line: usize,
    header: &StreamHeader,
    toks: &[&str],
) -> Result<PointPayload, StreamError> {
    match header {
        StreamHeader::Matrix { .. } => {
            if toks.len() != 1 {
                return Err(err(line, "matrix payload is a single row index"));
            }
            let row = toks[0].parse().map_err(|e| err(line, format!("bad row index: {e}")))?;
            Ok(PointPayload::MatrixRow(row))
        }
        StreamHeader::Builtin(cfg) => match cfg.kind {
            MetricKind::Lp { .. } => {
                let v: Result<Vec<f64>, _> = toks.iter().map(|t| t.parse()).collect();
                Ok(PointPayload::Vector(v.map_err(|e| err(line, format!("bad coord: {e}")))?))
            }
            MetricKind::Hamming => {
                if toks.len() != 1 {
                    return Err(err(line, "hamming payload is a single 0/1 string"));
                }
                let bits: Result<Vec<bool>, StreamError> = toks[0]
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        _ => Err(err(line, format!("bad bit {c}"))),
                    })
                    .collect();
                Ok(PointPayload::Bits(bits?))
            }
            MetricKind::Jaccard => {
                let s: Result<BTreeSet<u64>, _> = toks.iter().map(|t| t.parse()).collect();
                Ok(PointPayload::Set(s.map_err(|e| err(line, format!("bad element: {e}")))?))
            }
            MetricKind::Matrix => Err(err(line, "matrix config under builtin header")),
        },
    }
}

pub fn parse_stream_text(text: &str) -> Result<StreamFile, StreamError> {
    let mut header: Option<StreamHeader> = None;
    let mut ops = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "H" => {
                if header.is_some() {
                    return Err(err(lineno, "duplicate header"));
                }
                header = Some(parse_header(lineno, &toks[1..])?);
            }
            "+" => {
                let h = header.as_ref().ok_or_else(|| err(lineno, "op before header"))?;
                if toks.len() < 2 {
                    return Err(err(lineno, "insert needs an id"));
                }
                let id = PointId(
                    toks[1].parse().map_err(|e| err(lineno, format!("bad id: {e}")))?,
                );
                let payload = parse_payload(lineno, h, &toks[2..])?;
                ops.push(StreamOp::Insert { id, payload });
            }
            "-" => {
                if header.is_none() {
                    return Err(err(lineno, "op before header"));
                }
                if toks.len() != 2 {
                    return Err(err(lineno, "delete takes exactly an id"));
                }
                let id = PointId(
                    toks[1].parse().map_err(|e| err(lineno, format!("bad id: {e}")))?,
                );
                ops.push(StreamOp::Delete { id });
            }
            other => return Err(err(lineno, format!("unknown op {other}"))),
        }
    }
    let header = header.ok_or_else(|| err(0, "missing header"))?;
    Ok(StreamFile { header, ops })
}

pub fn parse_stream(path: &Path) -> Result<StreamFile, StreamError> {
    parse_stream_text(&std::fs::read_to_string(path)?)
}

/// Well-formedness: no double insert, no dangling delete, no id reuse.
pub fn validate_ops(ops: &[StreamOp]) -> Result<(), StreamError> {
    let mut active: HashSet<PointId> = HashSet::new();
    let mut seen: HashSet<PointId> = HashSet::new();
    for op in ops {
        match op {
            StreamOp::Insert { id, .. } => {
                if active.contains(id) {
                    return Err(StreamError::DoubleInsert(*id));
                }
                if seen.contains(id) {
                    return Err(StreamError::IdReuse(*id));
                }
                active.insert(*id);
                seen.insert(*id);
            }
            StreamOp::Delete { id } => {
                if !active.remove(id) {
                    return Err(StreamError::DanglingDelete(*id));
                }
            }
        }
    }
    Ok(())
}

fn fmt_payload(payload: &PointPayload) -> String {
    match payload {
        PointPayload::Vector(v) => {
            v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
        }
        PointPayload::Bits(b) => b.iter().map(|&x| if x { '1' } else { '0' }).collect(),
        PointPayload::Set(s) => {
            s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        }
        PointPayload::MatrixRow(i) => i.to_string(),
    }
}

pub fn write_stream_text(header: &StreamHeader, ops: &[StreamOp]) -> String {
    let mut out = String::new();
    match header {
        StreamHeader::Builtin(cfg) => {
            let tail = format!("rmin={} rmax={}", cfg.r_min, cfg.r_max);
            match cfg.kind {
                MetricKind::Lp { p } if p == 2.0 => {
                    writeln!(out, "H l2 dim={} {tail}", cfg.dim).unwrap()
                }
                MetricKind::Lp { p } if p == 1.0 => {
                    writeln!(out, "H l1 dim={} {tail}", cfg.dim).unwrap()
                }
                MetricKind::Lp { p } => writeln!(out, "H lp p={p} dim={} {tail}", cfg.dim).unwrap(),
                MetricKind::Hamming => writeln!(out, "H hamming dim={} {tail}", cfg.dim).unwrap(),
                MetricKind::Jaccard => {
                    writeln!(out, "H jaccard universe={} {tail}", cfg.universe).unwrap()
                }
                MetricKind::Matrix => unreachable!("matrix config uses the Matrix header"),
            }
        }
        StreamHeader::Matrix { path, r_min, r_max } => {
            write!(out, "H matrix file={}", path.display()).unwrap();
            if let Some(r) = r_min {
                write!(out, " rmin={r}").unwrap();
            }
            if let Some(r) = r_max {
                write!(out, " rmax={r}").unwrap();
            }
            out.push('\n');
        }
    }
    for op in ops {
        match op {
            StreamOp::Insert { id, payload } => {
                writeln!(out, "+ {} {}", id, fmt_payload(payload)).unwrap()
            }
            StreamOp::Delete { id } => writeln!(out, "- {id}").unwrap(),
        }
    }
    out
}
