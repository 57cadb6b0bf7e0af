//! Flow-record ingestion and unit-time windowing.
//!
//! Input is plain CSV, one packet per line: `timestamp_us,src_ip,dst_ip,dst_port`
//! with integer microseconds, dotted-quad (or colon-hex IPv6) addresses, and a
//! decimal port. Files ending `.gz` are transparently decompressed.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::net::IpAddr;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ipd;

/// One packet's 4-tuple, the atom of ingestion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    /// Seconds since stream start, microsecond resolution.
    pub timestamp: f64,
    /// Source address, IPv6 already folded to 32 bits (see [`ipd::map_ipv6`]).
    pub src_ip: u32,
    pub dst_ip: u32,
    pub dst_port: u16,
}

/// All records of one unit-time slice plus its per-source access counts.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub index: usize,
    pub start: f64,
    pub records: Vec<PacketRecord>,
    pub access_counts: HashMap<u32, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Training,
    Detection,
}

#[derive(Debug, Clone, Copy)]
pub struct SamplingConfig {
    /// Window length in seconds. Must be positive.
    pub unit_time: f64,
    pub role: StreamRole,
}

impl SamplingConfig {
    pub fn new(unit_time: f64, role: StreamRole) -> Result<Self> {
        if !(unit_time > 0.0) {
            return Err(Error::Config(format!(
                "unit_time must be positive, got {unit_time}"
            )));
        }
        Ok(Self { unit_time, role })
    }
}

fn parse_addr(field: &str, line: usize, field_idx: usize) -> Result<u32> {
    match field.parse::<IpAddr>() {
        Ok(IpAddr::V4(v4)) => Ok(u32::from(v4)),
        Ok(IpAddr::V6(v6)) => Ok(ipd::map_ipv6(&v6.octets())),
        Err(_) => Err(Error::Parse {
            line,
            field: field_idx,
            message: format!("invalid IP address `{field}`"),
        }),
    }
}

/// Parse one CSV line into a record. `line_no` is 1-based and only used for
/// error reporting.
pub fn parse_flow_record(line: &str, line_no: usize) -> Result<PacketRecord> {
    let mut fields = line.trim_end().split(',');
    let mut next = |idx: usize| {
        fields.next().ok_or(Error::Parse {
            line: line_no,
            field: idx,
            message: "missing field".into(),
        })
    };

    let ts_field = next(1)?;
    let timestamp_us: u64 = ts_field.trim().parse().map_err(|_| Error::Parse {
        line: line_no,
        field: 1,
        message: format!("invalid microsecond timestamp `{ts_field}`"),
    })?;
    let src_ip = parse_addr(next(2)?.trim(), line_no, 2)?;
    let dst_ip = parse_addr(next(3)?.trim(), line_no, 3)?;
    let port_field = next(4)?;
    let dst_port: u16 = port_field.trim().parse().map_err(|_| Error::Parse {
        line: line_no,
        field: 4,
        message: format!("port `{port_field}` out of range"),
    })?;
    if let Some(_extra) = fields.next() {
        return Err(Error::Parse {
            line: line_no,
            field: 5,
            message: "unexpected trailing field".into(),
        });
    }

    Ok(PacketRecord {
        timestamp: timestamp_us as f64 / 1e6,
        src_ip,
        dst_ip,
        dst_port,
    })
}

/// Read a whole flow file. Blank lines are skipped; a `.gz` suffix selects
/// gzip decompression. Out-of-order timestamps are tolerated (records are
/// bucketed by value later) but logged once.
pub fn read_flow_file(path: &Path) -> Result<Vec<PacketRecord>> {
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(flate2::read::GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let reader = BufReader::new(reader);

    let mut records = Vec::new();
    let mut last_ts = 0.0f64;
    let mut warned = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_flow_record(&line, i + 1)?;
        if rec.timestamp < last_ts && !warned {
            log::warn!(
                "out-of-order timestamp at line {} ({} < {}); records are re-bucketed by value",
                i + 1,
                rec.timestamp,
                last_ts
            );
            warned = true;
        }
        last_ts = last_ts.max(rec.timestamp);
        records.push(rec);
    }
    Ok(records)
}

/// Partition records into unit-time windows. A record with timestamp t lands
/// in window `floor(t / unit_time)`. Empty windows between occupied ones are
/// emitted so the downstream series has no gaps.
pub fn window_stream(records: &[PacketRecord], cfg: &SamplingConfig) -> Vec<WindowSample> {
    let mut by_index: HashMap<usize, Vec<PacketRecord>> = HashMap::new();
    let mut max_index = 0usize;
    for &rec in records {
        let k = (rec.timestamp / cfg.unit_time).floor() as usize;
        max_index = max_index.max(k);
        by_index.entry(k).or_default().push(rec);
    }
    if records.is_empty() {
        return Vec::new();
    }

    (0..=max_index)
        .map(|k| {
            let mut recs = by_index.remove(&k).unwrap_or_default();
            recs.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
            let mut access_counts = HashMap::new();
            for r in &recs {
                *access_counts.entry(r.src_ip).or_insert(0u64) += 1;
            }
            WindowSample {
                index: k,
                start: k as f64 * cfg.unit_time,
                records: recs,
                access_counts,
            }
        })
        .collect()
}
