//! File formats: TAC CSV, tabulated reference curves, and a little-endian
//! reader for the binary cache and library bodies.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! CSV written here reads back bit-exactly.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kinetics::{InputCurve, InputKind, Tac, TimeGrid, DEFAULT_SUB_STEP};

pub const TAC_HEADER: &str = "t_start,t_end,value";

pub fn write_tac_csv(tac: &Tac, mut w: impl Write) -> Result<()> {
    writeln!(w, "{TAC_HEADER}")?;
    let g = tac.grid();
    for ((s, e), v) in g
        .frame_starts()
        .iter()
        .zip(g.frame_ends())
        .zip(tac.values())
    {
        writeln!(w, "{s},{e},{v}")?;
    }
    Ok(())
}

pub fn save_tac(tac: &Tac, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_tac_csv(tac, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Parses a TAC CSV. Frame times must be increasing; `sub_step` defaults to
/// the smaller of 0.1 min and the shortest frame.
pub fn read_tac_csv(r: impl BufRead, sub_step: Option<f64>) -> Result<Tac> {
    let rows = read_rows(r, &["t_start", "t_end", "value"])?;
    if rows.is_empty() {
        return Err(Error::Format("TAC file has no frames".into()));
    }
    let starts: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ends: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let values: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    if let Some(i) =
        (1..rows.len()).find(|&i| !(starts[i] > starts[i - 1] && starts[i] >= ends[i - 1]))
    {
        return Err(Error::Format(format!(
            "frame times not monotone at frame {i}"
        )));
    }
    let min_len = starts
        .iter()
        .zip(&ends)
        .map(|(s, e)| e - s)
        .fold(f64::INFINITY, f64::min);
    let step = sub_step.unwrap_or(DEFAULT_SUB_STEP.min(min_len));
    let grid = TimeGrid::new(starts, ends, step).map_err(|e| Error::Format(e.to_string()))?;
    Tac::new(Arc::new(grid), values).map_err(|e| Error::Format(e.to_string()))
}

pub fn load_tac(path: &Path, sub_step: Option<f64>) -> Result<Tac> {
    read_tac_csv(BufReader::new(fs::File::open(path)?), sub_step)
}

/// Tabulated reference curve from a CSV with header `t,value`, or from a TAC
/// file (samples at frame midpoints).
pub fn read_reference_csv(r: impl BufRead) -> Result<InputCurve> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format("empty reference file".into()))?;
    let cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let body = lines.collect::<std::io::Result<Vec<String>>>()?.join("\n");
    let (times, values) = match cols
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["t", "value"] => {
            let rows = parse_rows(&body, 2, 2)?;
            (
                rows.iter().map(|r| r[0]).collect(),
                rows.iter().map(|r| r[1]).collect(),
            )
        }
        ["t_start", "t_end", "value"] => {
            let rows = parse_rows(&body, 3, 2)?;
            (
                rows.iter().map(|r| 0.5 * (r[0] + r[1])).collect(),
                rows.iter().map(|r| r[2]).collect(),
            )
        }
        _ => {
            return Err(Error::Format(format!(
                "reference header must be 't,value' or '{TAC_HEADER}', got '{header}'"
            )))
        }
    };
    InputCurve::tabulated(InputKind::Reference, times, values)
}

pub fn load_reference(path: &Path) -> Result<InputCurve> {
    read_reference_csv(BufReader::new(fs::File::open(path)?))
}

fn read_rows(r: impl BufRead, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format("empty file".into()))?;
    let got: Vec<&str> = first.split(',').map(str::trim).collect();
    if got != header {
        return Err(Error::Format(format!(
            "expected header '{}', got '{first}'",
            header.join(",")
        )));
    }
    let body = lines.collect::<std::io::Result<Vec<String>>>()?.join("\n");
    parse_rows(&body, header.len(), 2)
}

fn parse_rows(body: &str, width: usize, first_line: usize) -> Result<Vec<Vec<f64>>> {
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<f64> = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", i + first_line)))?;
            if f.len() != width {
                return Err(Error::Format(format!(
                    "line {}: expected {width} fields, got {}",
                    i + first_line,
                    f.len()
                )));
            }
            Ok(f)
        })
        .collect()
}

/// Sequential reader over a little-endian byte body.
pub(crate) struct LeReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> LeReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take8(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated binary body".into()))?;
        self.pos = end;
        Ok(chunk.try_into().expect("8-byte slice"))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take8()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take8()?))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    /// Errors if unread bytes remain.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tac_roundtrip_is_exact() {
        let g = Arc::new(TimeGrid::uniform(4, 1.0, 0.1).unwrap());
        let tac = Tac::new(g, vec![0.1 + 0.2, 1.0 / 3.0, 0.0, 1e-300]).unwrap();
        let mut buf = Vec::new();
        write_tac_csv(&tac, &mut buf).unwrap();
        let back = read_tac_csv(&buf[..], None).unwrap();
        assert_eq!(back, tac);
        assert_eq!(back.grid().sub_step(), 0.1);
    }

    #[test]
    fn non_monotone_times_rejected() {
        let csv = "t_start,t_end,value\n0,1,1\n2,3,1\n1,2,1\n";
        assert!(matches!(
            read_tac_csv(csv.as_bytes(), None),
            Err(Error::Format(_))
        ));
        assert!(read_tac_csv("t,value\n0,1\n".as_bytes(), None).is_err());
        assert!(read_tac_csv("t_start,t_end,value\n0,1,x\n".as_bytes(), None).is_err());
    }

    #[test]
    fn reference_file_interpolates() {
        let c = read_reference_csv("t,value\n0,0\n10,5\n".as_bytes()).unwrap();
        assert_eq!(c.sample(5.0), 2.5);
        let c = read_reference_csv("t_start,t_end,value\n0,2,1\n2,4,3\n".as_bytes()).unwrap();
        assert_eq!(c.sample(2.0), 2.0);
        assert!(read_reference_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn le_reader_bounds() {
        let bytes = 2.5f64.to_le_bytes();
        let mut r = LeReader::new(&bytes);
        assert_eq!(r.f64().unwrap(), 2.5);
        assert!(r.f64().is_err());
    }
}
