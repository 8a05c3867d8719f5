//! Text and binary file formats.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use pwsignal_core::authsim::AccountRecord;
use pwsignal_core::{DpCountSketch, EquivalenceClassList, SignalMatrix, StrengthThresholds};

use crate::error::{format_err, io_at, Error, Result};

pub const SKETCH_MAGIC: [u8; 8] = *b"PWSKETCH";
pub const SKETCH_VERSION: u32 = 1;

fn parse_error(line: usize, reason: impl Into<String>) -> Error {
    pwsignal_core::Error::Parse { line, reason: reason.into() }.into()
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_at(path))
}

pub fn read_corpus(path: &Path) -> Result<EquivalenceClassList> {
    Ok(EquivalenceClassList::parse(&read_text(path)?)?)
}

/// One password per line; line terminators are stripped and nothing else.
pub fn read_passwords(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(io_at(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).split(b'\n') {
        let mut bytes = line.map_err(io_at(path))?;
        if bytes.last() == Some(&b'\r') {
            bytes.pop();
        }
        out.push(String::from_utf8_lossy(&bytes).into_owned());
    }
    Ok(out)
}

/// Plaintext password file grouped into equivalence classes.
pub fn load_plaintext(path: &Path) -> Result<EquivalenceClassList> {
    let passwords = read_passwords(path)?;
    Ok(EquivalenceClassList::from_passwords(passwords.iter().map(String::as_str))?)
}

pub fn thresholds_to_text(t: &StrengthThresholds) -> String {
    let mut out = format!("{}\n", t.levels());
    for (level, th) in t.thresholds().iter().enumerate() {
        if let Some(f) = th {
            out.push_str(&format!("{level} {f}\n"));
        }
    }
    out
}

pub fn parse_thresholds(text: &str) -> Result<StrengthThresholds> {
    let mut lines = content_lines(text);
    let (n, first) = lines.next().ok_or_else(|| parse_error(1, "missing level count"))?;
    let d: usize = first.parse().map_err(|_| parse_error(n, "level count must be an integer"))?;
    let mut thresholds = vec![None; d];
    for (n, line) in lines {
        let mut parts = line.split_whitespace();
        let (Some(level), Some(freq), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_error(n, "expected \"level frequency\""));
        };
        let level: usize = level.parse().map_err(|_| parse_error(n, "bad level"))?;
        let freq: f64 = freq.parse().map_err(|_| parse_error(n, "bad frequency"))?;
        if level >= d {
            return Err(parse_error(n, format!("level {level} out of range 0..{d}")));
        }
        if thresholds[level].replace(freq).is_some() {
            return Err(parse_error(n, format!("level {level} listed twice")));
        }
    }
    Ok(StrengthThresholds::from_thresholds(thresholds)?)
}

pub fn matrix_to_text(s: &SignalMatrix) -> String {
    let mut out = format!("{}\n", s.levels());
    for i in 0..s.levels() {
        let row: Vec<String> = s.row(i).iter().map(|p| p.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<SignalMatrix> {
    let mut lines = content_lines(text);
    let (n, first) = lines.next().ok_or_else(|| parse_error(1, "missing dimension"))?;
    let d: usize = first.parse().map_err(|_| parse_error(n, "dimension must be an integer"))?;
    let mut rows = Vec::with_capacity(d);
    for (n, line) in lines {
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| parse_error(n, format!("bad probability {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != d {
            return Err(parse_error(n, format!("expected {d} entries, found {}", row.len())));
        }
        rows.push(row);
    }
    if rows.len() != d {
        return Err(parse_error(0, format!("expected {d} rows, found {}", rows.len())));
    }
    Ok(SignalMatrix::from_rows(&rows)?)
}

pub fn read_matrix(path: &Path) -> Result<SignalMatrix> {
    parse_matrix(&read_text(path)?)
}

pub fn write_sketch<W: Write>(out: &mut W, sk: &DpCountSketch) -> io::Result<()> {
    out.write_all(&SKETCH_MAGIC)?;
    out.write_all(&SKETCH_VERSION.to_le_bytes())?;
    out.write_all(&(sk.width() as u64).to_le_bytes())?;
    out.write_all(&(sk.depth() as u64).to_le_bytes())?;
    out.write_all(&sk.laplace_scale().to_le_bytes())?;
    for s in sk.seeds() {
        out.write_all(&s.to_le_bytes())?;
    }
    for c in sk.table() {
        out.write_all(&c.to_le_bytes())?;
    }
    out.flush()
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| format_err("sketch", e.to_string()))?;
    Ok(buf)
}

pub fn read_sketch<R: Read>(input: &mut R) -> Result<DpCountSketch> {
    if read_array::<8, _>(input)? != SKETCH_MAGIC {
        return Err(format_err("sketch", "bad magic"));
    }
    let version = u32::from_le_bytes(read_array(input)?);
    if version != SKETCH_VERSION {
        return Err(format_err("sketch", format!("unsupported version {version}")));
    }
    let width = u64::from_le_bytes(read_array(input)?) as usize;
    let depth = u64::from_le_bytes(read_array(input)?) as usize;
    let scale = f64::from_le_bytes(read_array(input)?);
    let cells = width
        .checked_mul(depth)
        .filter(|&c| c <= 1 << 34)
        .ok_or_else(|| format_err("sketch", "implausible dimensions"))?;
    let seeds = (0..depth)
        .map(|_| read_array(input).map(u64::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Vec::with_capacity(cells);
    for _ in 0..cells {
        table.push(f64::from_le_bytes(read_array(input)?));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(|e| format_err("sketch", e.to_string()))? != 0 {
        return Err(format_err("sketch", "trailing bytes"));
    }
    Ok(DpCountSketch::from_parts(width, depth, scale, seeds, table)?)
}

pub fn save_sketch(path: &Path, sk: &DpCountSketch) -> Result<()> {
    let file = fs::File::create(path).map_err(io_at(path))?;
    write_sketch(&mut io::BufWriter::new(file), sk).map_err(io_at(path))
}

pub fn load_sketch(path: &Path) -> Result<DpCountSketch> {
    let file = fs::File::open(path).map_err(io_at(path))?;
    read_sketch(&mut BufReader::new(file))
}

/// `user \t salt-hex \t signal-or-dash \t hash-hex`.
pub fn record_to_line(r: &AccountRecord) -> String {
    let signal = r.signal.map_or_else(|| "-".to_string(), |s| s.to_string());
    format!("{}\t{}\t{}\t{}", r.user, hex::encode(&r.salt), signal, hex::encode(&r.hash))
}

pub fn parse_record(line: &str) -> Result<AccountRecord> {
    let fields: Vec<&str> = line.split('\t').collect();
    let [user, salt, signal, hash] = fields[..] else {
        return Err(format_err("record", format!("expected 4 fields, found {}", fields.len())));
    };
    if user.is_empty() {
        return Err(format_err("record", "empty user"));
    }
    let hex_field = |what: &str, v: &str| {
        hex::decode(v).map_err(|e| format_err("record", format!("{what}: {e}")))
    };
    let signal = match signal {
        "-" => None,
        s => Some(s.parse().map_err(|_| format_err("record", format!("bad signal {s:?}")))?),
    };
    Ok(AccountRecord {
        user: user.to_string(),
        salt: hex_field("salt", salt)?,
        signal,
        hash: hex_field("hash", hash)?,
    })
}
