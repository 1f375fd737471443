//! EVB1 binary event files and the `t_us,x,y,p` CSV export.
//!
//! EVB1 layout, all little-endian:
//!
//! ```text
//! 0   4  magic "EVB1"
//! 4   2  width  (u16)
//! 6   2  height (u16)
//! 8   8  event count (u64)
//! 16  13 per event: t_us (u64), x (u16), y (u16), polarity (u8, 1 = ON, 0 = OFF)
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Event, EventStream, Polarity};
use crate::error::{Error, Result};

pub const EVB1_MAGIC: &[u8; 4] = b"EVB1";
const HEADER_LEN: usize = 16;
const RECORD_LEN: usize = 13;

pub fn encode_evb1(stream: &EventStream) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.events.len());
    buf.extend_from_slice(EVB1_MAGIC);
    buf.extend_from_slice(&stream.width.to_le_bytes());
    buf.extend_from_slice(&stream.height.to_le_bytes());
    buf.extend_from_slice(&(stream.events.len() as u64).to_le_bytes());
    for e in &stream.events {
        buf.extend_from_slice(&e.t_us.to_le_bytes());
        buf.extend_from_slice(&e.x.to_le_bytes());
        buf.extend_from_slice(&e.y.to_le_bytes());
        buf.push(u8::from(e.polarity == Polarity::On));
    }
    buf
}

pub fn write_evb1(path: &Path, stream: &EventStream) -> Result<()> {
    fs::write(path, encode_evb1(stream)).map_err(|e| Error::io(path, e))
}

/// Decodes an EVB1 buffer. The file carries no duration, so the stream's
/// duration is one microsecond past its last event.
pub fn decode_evb1(bytes: &[u8], path: &Path) -> Result<EventStream> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != EVB1_MAGIC {
        return Err(Error::format(path, "missing EVB1 header"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let width = u16_at(4);
    let height = u16_at(6);
    let count = u64_at(8) as usize;
    let expected = count
        .checked_mul(RECORD_LEN)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(path, "event count overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "{count} events need {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let mut events = Vec::with_capacity(count);
    for rec in bytes[HEADER_LEN..].chunks_exact(RECORD_LEN) {
        let polarity = match rec[12] {
            1 => Polarity::On,
            0 => Polarity::Off,
            p => return Err(Error::format(path, format!("bad polarity byte {p}"))),
        };
        events.push(Event {
            t_us: u64::from_le_bytes(rec[..8].try_into().expect("8 bytes")),
            x: u16::from_le_bytes([rec[8], rec[9]]),
            y: u16::from_le_bytes([rec[10], rec[11]]),
            polarity,
        });
    }
    let stream = EventStream {
        duration_us: events.last().map_or(0, |e| e.t_us + 1),
        events,
        width,
        height,
    };
    stream
        .validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(stream)
}

pub fn read_evb1(path: &Path) -> Result<EventStream> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    decode_evb1(&bytes, path)
}

pub fn write_csv(path: &Path, stream: &EventStream) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "t_us,x,y,p").map_err(io)?;
    for e in &stream.events {
        writeln!(
            out,
            "{},{},{},{}",
            e.t_us,
            e.x,
            e.y,
            u8::from(e.polarity == Polarity::On)
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads `t_us,x,y,p` rows; `p` may be `1`/`0` or `1`/`-1`. Without an explicit
/// geometry the sensor is sized to the largest coordinate seen.
pub fn read_csv(path: &Path, geometry: Option<(u16, u16)>) -> Result<EventStream> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                Error::MissingFile(path.to_path_buf())
            }
            _ => Error::format(path, e.to_string()),
        })?;
    let mut events = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        let field = |i: usize| -> Result<&str> {
            row.get(i)
                .ok_or_else(|| Error::format(path, format!("row {} has too few columns", line + 2)))
        };
        let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", line + 2));
        let t_us = field(0)?.parse::<u64>().map_err(|_| bad("t_us"))?;
        let x = field(1)?.parse::<u16>().map_err(|_| bad("x"))?;
        let y = field(2)?.parse::<u16>().map_err(|_| bad("y"))?;
        let polarity = match field(3)? {
            "1" | "+1" => Polarity::On,
            "0" | "-1" => Polarity::Off,
            _ => return Err(bad("polarity")),
        };
        events.push(Event {
            t_us,
            x,
            y,
            polarity,
        });
    }
    let (width, height) = geometry.unwrap_or_else(|| {
        let w = events.iter().map(|e| e.x + 1).max().unwrap_or(0);
        let h = events.iter().map(|e| e.y + 1).max().unwrap_or(0);
        (w, h)
    });
    let mut stream = EventStream {
        duration_us: events.iter().map(|e| e.t_us + 1).max().unwrap_or(0),
        events,
        width,
        height,
    };
    stream.sort();
    stream
        .validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(stream)
}

/// Reads either format, sniffing the EVB1 magic.
pub fn read_events(path: &Path, geometry: Option<(u16, u16)>) -> Result<EventStream> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    if bytes.starts_with(EVB1_MAGIC) {
        decode_evb1(&bytes, path)
    } else {
        read_csv(path, geometry)
    }
}
