//! CSV and binary event files.
//!
//! CSV: `# geometry,<width>,<height>` followed by `t_us,x,y,p` lines.
//! Binary: `EVS1`, u32 width, u32 height, u64 count, then `count` 16-byte
//! records `(u64 t, u16 x, u16 y, i8 p, 3 pad bytes)`, all little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Event, EventStream, Polarity, SensorGeometry};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EVS1";
const RECORD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Bin,
}

impl EventFormat {
    /// Guesses from the file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::Bin,
        }
    }
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EventFormat::Csv),
            "bin" => Ok(EventFormat::Bin),
            other => Err(Error::arg(format!("unknown event format `{other}`"))),
        }
    }
}

pub fn read_events(path: &Path, format: EventFormat) -> Result<EventStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        EventFormat::Csv => read_csv(reader, path),
        EventFormat::Bin => read_bin(reader, path),
    }
}

pub fn write_events(stream: &EventStream, path: &Path, format: EventFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        EventFormat::Csv => write_csv(stream, &mut w),
        EventFormat::Bin => write_bin(stream, &mut w),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_csv<W: Write>(stream: &EventStream, w: &mut W) -> std::io::Result<()> {
    let g = stream.geometry();
    writeln!(w, "# geometry,{},{}", g.width, g.height)?;
    for e in stream.events() {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.p.as_i8())?;
    }
    Ok(())
}

fn write_bin<W: Write>(stream: &EventStream, w: &mut W) -> std::io::Result<()> {
    let g = stream.geometry();
    w.write_all(MAGIC)?;
    w.write_all(&g.width.to_le_bytes())?;
    w.write_all(&g.height.to_le_bytes())?;
    w.write_all(&(stream.len() as u64).to_le_bytes())?;
    let mut rec = [0u8; RECORD_LEN];
    for e in stream.events() {
        rec[0..8].copy_from_slice(&e.t.to_le_bytes());
        rec[8..10].copy_from_slice(&e.x.to_le_bytes());
        rec[10..12].copy_from_slice(&e.y.to_le_bytes());
        rec[12] = e.p.as_i8() as u8;
        w.write_all(&rec)?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_header(line: &str) -> Result<SensorGeometry> {
    let rest = line
        .strip_prefix('#')
        .map(str::trim_start)
        .and_then(|l| l.strip_prefix("geometry,"))
        .ok_or_else(|| parse_err(1, "expected `# geometry,<width>,<height>` header"))?;
    let (w, h) = rest
        .split_once(',')
        .ok_or_else(|| parse_err(1, "geometry needs width and height"))?;
    let width = w.trim().parse().map_err(|_| parse_err(1, format!("bad width `{w}`")))?;
    let height = h.trim().parse().map_err(|_| parse_err(1, format!("bad height `{h}`")))?;
    SensorGeometry::new(width, height).map_err(|e| parse_err(1, e.to_string()))
}

fn parse_record(line: &str, lineno: usize) -> Result<Event> {
    let mut fields = line.split(',');
    let mut next = |name: &str| {
        fields
            .next()
            .map(str::trim)
            .ok_or_else(|| parse_err(lineno, format!("missing field `{name}`")))
    };
    let t = next("t")?;
    let x = next("x")?;
    let y = next("y")?;
    let p = next("p")?;
    if fields.next().is_some() {
        return Err(parse_err(lineno, "expected 4 fields"));
    }
    let t = t.parse().map_err(|_| parse_err(lineno, format!("bad timestamp `{t}`")))?;
    let x = x.parse().map_err(|_| parse_err(lineno, format!("bad x `{x}`")))?;
    let y = y.parse().map_err(|_| parse_err(lineno, format!("bad y `{y}`")))?;
    let p = p
        .parse::<i8>()
        .ok()
        .and_then(Polarity::from_i8)
        .ok_or_else(|| parse_err(lineno, format!("bad polarity `{p}`")))?;
    Ok(Event { t, x, y, p })
}

fn read_csv<R: BufRead>(reader: R, path: &Path) -> Result<EventStream> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, "missing geometry header")),
    };
    let geometry = parse_header(header.trim_end())?;
    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        events.push(parse_record(line, i + 2)?);
    }
    EventStream::new(geometry, events)
}

fn read_bin<R: Read>(mut reader: R, path: &Path) -> Result<EventStream> {
    let mut header = [0u8; 20];
    reader
        .read_exact(&mut header)
        .map_err(|_| parse_err(1, "truncated binary header"))?;
    if &header[0..4] != MAGIC {
        return Err(parse_err(1, "bad magic, expected EVS1"));
    }
    let width = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let count = u64::from_le_bytes(header[12..20].try_into().unwrap());
    let geometry = SensorGeometry::new(width, height).map_err(|e| parse_err(1, e.to_string()))?;

    let mut events = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut rec = [0u8; RECORD_LEN];
    for i in 0..count {
        let record = i as usize + 1;
        reader.read_exact(&mut rec).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                parse_err(record, format!("truncated: header declares {count} records"))
            }
            _ => Error::io(path, e),
        })?;
        let p = Polarity::from_i8(rec[12] as i8)
            .ok_or_else(|| parse_err(record, format!("bad polarity byte {}", rec[12] as i8)))?;
        events.push(Event {
            t: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            x: u16::from_le_bytes(rec[8..10].try_into().unwrap()),
            y: u16::from_le_bytes(rec[10..12].try_into().unwrap()),
            p,
        });
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(parse_err(count as usize + 1, "trailing bytes after last record"));
    }
    EventStream::new(geometry, events)
}
