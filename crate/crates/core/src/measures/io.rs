//! CSV and binary serialization of point clouds.
//!
//! CSV: a header row `x1,…,xd` (plus `weight` for non-uniform clouds), then
//! one point per row. Binary: three little-endian `u64` (N, d, flags), then
//! the N×d coordinates row-major as little-endian `f64`, then N weights when
//! flag bit 0 is set.

use std::io::{Read, Write};

use super::EmpiricalMeasure;
use crate::error::{Error, Result};

const FLAG_WEIGHTS: u64 = 1;

pub fn write_measure_csv<W: Write>(mu: &EmpiricalMeasure, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=mu.dim()).map(|k| format!("x{k}")).collect();
    let weighted = !mu.is_uniform();
    if weighted {
        header.push("weight".into());
    }
    w.write_record(&header)?;
    for i in 0..mu.len() {
        let mut row: Vec<String> = mu.point(i).iter().map(|v| fmt_f64(*v)).collect();
        if weighted {
            row.push(fmt_f64(mu.weights()[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a cloud written by [`write_measure_csv`]. A column named `weight`
/// (case-insensitive) is taken as the weights; every other column is a
/// coordinate.
pub fn read_measure_csv<R: Read>(input: R) -> Result<EmpiricalMeasure> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers()?.clone();
    let weight_col = headers.iter().position(|h| h.eq_ignore_ascii_case("weight"));
    let dim = headers.len() - usize::from(weight_col.is_some());
    if dim == 0 {
        return Err(Error::Format("no coordinate columns".into()));
    }
    let mut pts = Vec::new();
    let mut weights = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (k, field) in rec.iter().enumerate() {
            let v: f64 =
                field.parse().map_err(|_| Error::Format(format!("row {}: `{field}` is not a number", line + 1)))?;
            if Some(k) == weight_col {
                weights.push(v);
            } else {
                pts.push(v);
            }
        }
    }
    if weight_col.is_some() {
        EmpiricalMeasure::with_weights(pts, dim, weights)
    } else {
        EmpiricalMeasure::new(pts, dim)
    }
}

pub fn write_measure_binary<W: Write>(mu: &EmpiricalMeasure, mut out: W) -> Result<()> {
    let weighted = !mu.is_uniform();
    let flags = if weighted { FLAG_WEIGHTS } else { 0 };
    for v in [mu.len() as u64, mu.dim() as u64, flags] {
        out.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * (mu.points().len() + if weighted { mu.len() } else { 0 }));
    for v in mu.points() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if weighted {
        for v in mu.weights() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_measure_binary<R: Read>(mut input: R) -> Result<EmpiricalMeasure> {
    let mut head = [0u8; 24];
    input.read_exact(&mut head).map_err(|_| Error::Format("truncated header".into()))?;
    let word = |k: usize| u64::from_le_bytes(head[8 * k..8 * k + 8].try_into().expect("8-byte slice"));
    let (n, d, flags) = (word(0), word(1), word(2));
    if flags & !FLAG_WEIGHTS != 0 {
        return Err(Error::Format(format!("unknown flags {flags:#x}")));
    }
    let coords = n.checked_mul(d).ok_or_else(|| Error::Format("N·d overflows".into()))? as usize;
    let total = coords + if flags & FLAG_WEIGHTS != 0 { n as usize } else { 0 };
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != 8 * total {
        return Err(Error::Format(format!("expected {} payload bytes, found {}", 8 * total, body.len())));
    }
    let vals: Vec<f64> =
        body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let pts = vals[..coords].to_vec();
    if flags & FLAG_WEIGHTS != 0 {
        EmpiricalMeasure::with_weights(pts, d as usize, vals[coords..].to_vec())
    } else {
        EmpiricalMeasure::new(pts, d as usize)
    }
}

/// Shortest decimal that round-trips (Rust's `Display` for `f64`).
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmpiricalMeasure {
        EmpiricalMeasure::new(vec![0.1, -2.5, 1e-300, 3.0, f64::MAX, -0.0], 2).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let mu = sample();
        let mut buf = Vec::new();
        write_measure_csv(&mu, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x1,x2\n"));
        assert_eq!(read_measure_csv(buf.as_slice()).unwrap(), mu);

        let w = EmpiricalMeasure::with_weights(vec![1.0, 2.0], 1, vec![0.25, 0.75]).unwrap();
        let mut buf = Vec::new();
        write_measure_csv(&w, &mut buf).unwrap();
        assert_eq!(read_measure_csv(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn binary_round_trip() {
        for mu in [sample(), EmpiricalMeasure::with_weights(vec![1.0, 2.0], 1, vec![0.25, 0.75]).unwrap()] {
            let mut buf = Vec::new();
            write_measure_binary(&mu, &mut buf).unwrap();
            assert_eq!(read_measure_binary(buf.as_slice()).unwrap(), mu);
        }
    }

    #[test]
    fn binary_rejects_truncation() {
        let mut buf = Vec::new();
        write_measure_binary(&sample(), &mut buf).unwrap();
        buf.pop();
        assert!(matches!(read_measure_binary(buf.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_measure_binary(&buf[..10]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(read_measure_csv("x1\nabc\n".as_bytes()).is_err());
    }
}
