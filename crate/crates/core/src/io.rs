//! On-disk formats: tensors, factor sets and solve traces.
//!
//! Tensor files start with a single ASCII header line
//!
//! ```text
//! CPGSU-TENSOR 1 <binary|text> <N> <n_1> … <n_N>
//! ```
//!
//! followed by the entries in first-index-fastest order, either as raw
//! little-endian `f64` (binary) or one decimal value per line (text). Text
//! values are written in shortest round-trip form, so both payloads
//! reproduce the tensor exactly.
//!
//! Factor files are text:
//!
//! ```text
//! CPGSU-FACTORS 1 <N> <R>
//! <n_1> … <n_N>
//! <n_1 rows of R values for A^(1)>
//! …
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{format_err, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::solver::SolveTrace;
use crate::tensor::{DenseTensor, FactorSet};

pub const TENSOR_MAGIC: &str = "CPGSU-TENSOR";
pub const FACTORS_MAGIC: &str = "CPGSU-FACTORS";
pub const FORMAT_VERSION: u32 = 1;

/// Column header of the trace table.
pub const TRACE_HEADER: &str = "k,F,RelErr,lambda,w_k,support_size,safeguard_used";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    Binary,
    Text,
}

impl Payload {
    fn tag(self) -> &'static str {
        match self {
            Payload::Binary => "binary",
            Payload::Text => "text",
        }
    }
}

pub fn write_tensor<T: Scalar, W: Write>(mut w: W, t: &DenseTensor<T>, payload: Payload) -> Result<()> {
    let dims: Vec<String> = t.shape().iter().map(ToString::to_string).collect();
    writeln!(w, "{TENSOR_MAGIC} {FORMAT_VERSION} {} {} {}", payload.tag(), t.order(), dims.join(" "))?;
    match payload {
        Payload::Binary => {
            for &x in t.data() {
                w.write_all(&x.as_f64().to_le_bytes())?;
            }
        }
        Payload::Text => {
            for &x in t.data() {
                writeln!(w, "{:e}", x.as_f64())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_header_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if !line.ends_with('\n') {
        return format_err("truncated header");
    }
    Ok(line.trim_end().to_string())
}

fn parse_usize(tok: Option<&str>, what: &str) -> Result<usize> {
    match tok.and_then(|s| s.parse().ok()) {
        Some(v) => Ok(v),
        None => format_err(format!("missing or invalid {what}")),
    }
}

fn check_magic(tok: Option<&str>, magic: &str, version: Option<&str>) -> Result<()> {
    if tok != Some(magic) {
        return format_err(format!("expected magic {magic}"));
    }
    match version.and_then(|v| v.parse::<u32>().ok()) {
        Some(FORMAT_VERSION) => Ok(()),
        _ => format_err(format!("unsupported {magic} version")),
    }
}

fn parse_value<T: Scalar>(tok: &str) -> Result<T> {
    match tok.parse::<f64>() {
        Ok(v) => Ok(T::lit(v)),
        Err(_) => format_err(format!("invalid number {tok:?}")),
    }
}

pub fn read_tensor<T: Scalar, R: Read>(r: R) -> Result<DenseTensor<T>> {
    let mut r = BufReader::new(r);
    let header = read_header_line(&mut r)?;
    let mut toks = header.split_ascii_whitespace();
    check_magic(toks.next(), TENSOR_MAGIC, toks.next())?;
    let payload = match toks.next() {
        Some("binary") => Payload::Binary,
        Some("text") => Payload::Text,
        other => return format_err(format!("unknown payload kind {other:?}")),
    };
    let order = parse_usize(toks.next(), "order")?;
    let shape = (0..order).map(|i| parse_usize(toks.next(), &format!("dimension {i}"))).collect::<Result<Vec<_>>>()?;
    if toks.next().is_some() {
        return format_err("trailing tokens in header");
    }
    let len = shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
    let Some(len) = len else {
        return format_err("tensor too large");
    };
    let data = match payload {
        Payload::Binary => {
            let mut bytes = Vec::new();
            r.read_to_end(&mut bytes)?;
            if bytes.len() != len * 8 {
                return format_err(format!("expected {} payload bytes, found {}", len * 8, bytes.len()));
            }
            bytes
                .chunks_exact(8)
                .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
                .collect()
        }
        Payload::Text => {
            let mut text = String::new();
            r.read_to_string(&mut text)?;
            let values = text.split_ascii_whitespace().map(parse_value).collect::<Result<Vec<T>>>()?;
            if values.len() != len {
                return format_err(format!("expected {len} values, found {}", values.len()));
            }
            values
        }
    };
    DenseTensor::new(shape, data)
}

pub fn write_factors<T: Scalar, W: Write>(mut w: W, fs: &FactorSet<T>) -> Result<()> {
    writeln!(w, "{FACTORS_MAGIC} {FORMAT_VERSION} {} {}", fs.order(), fs.rank())?;
    let dims: Vec<String> = fs.shape().iter().map(ToString::to_string).collect();
    writeln!(w, "{}", dims.join(" "))?;
    for f in fs.factors() {
        for i in 0..f.nrows() {
            let row: Vec<String> = (0..f.ncols()).map(|j| format!("{:e}", f[(i, j)].as_f64())).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_factors<T: Scalar, R: Read>(r: R) -> Result<FactorSet<T>> {
    let mut r = BufReader::new(r);
    let header = read_header_line(&mut r)?;
    let mut toks = header.split_ascii_whitespace();
    check_magic(toks.next(), FACTORS_MAGIC, toks.next())?;
    let order = parse_usize(toks.next(), "order")?;
    let rank = parse_usize(toks.next(), "rank")?;
    let dims_line = read_header_line(&mut r)?;
    let dims = dims_line.split_ascii_whitespace().map(|t| parse_usize(Some(t), "dimension")).collect::<Result<Vec<_>>>()?;
    if dims.len() != order {
        return format_err(format!("header declares {order} modes, found {} dimensions", dims.len()));
    }
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let values = text.split_ascii_whitespace().map(parse_value).collect::<Result<Vec<T>>>()?;
    let expected: usize = dims.iter().map(|n| n * rank).sum();
    if values.len() != expected {
        return format_err(format!("expected {expected} values, found {}", values.len()));
    }
    let mut offset = 0;
    let mut factors = Vec::with_capacity(order);
    for &n in &dims {
        let block = &values[offset..offset + n * rank];
        factors.push(Matrix::from_fn(n, rank, |i, j| block[i * rank + j]));
        offset += n * rank;
    }
    FactorSet::new(factors)
}

/// Writes the per-iteration trace as comma-separated text under [`TRACE_HEADER`].
pub fn write_trace<W: Write>(mut w: W, trace: &SolveTrace) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{},{}",
            r.k,
            r.objective,
            r.rel_err,
            r.lambda,
            r.weight,
            r.support_size,
            u8::from(r.safeguard_used)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_tensor<T: Scalar>(path: impl AsRef<Path>, t: &DenseTensor<T>, payload: Payload) -> Result<()> {
    write_tensor(BufWriter::new(File::create(path)?), t, payload)
}

pub fn load_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<DenseTensor<T>> {
    read_tensor(File::open(path)?)
}

pub fn save_factors<T: Scalar>(path: impl AsRef<Path>, fs: &FactorSet<T>) -> Result<()> {
    write_factors(BufWriter::new(File::create(path)?), fs)
}

pub fn load_factors<T: Scalar>(path: impl AsRef<Path>) -> Result<FactorSet<T>> {
    read_factors(File::open(path)?)
}

pub fn save_trace(path: impl AsRef<Path>, trace: &SolveTrace) -> Result<()> {
    write_trace(BufWriter::new(File::create(path)?), trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_fixture_parses() {
        let src = "CPGSU-TENSOR 1 text 3 1 2 2\n1\n2\n3.5\n-4e-3\n";
        let t: DenseTensor<f64> = read_tensor(src.as_bytes()).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[1.0, 2.0, 3.5, -4e-3]);
    }

    #[test]
    fn malformed_tensors_are_rejected() {
        for bad in [
            "",
            "CPGSU-TENSOR 1 text 3 1 2 2",
            "NOPE 1 text 3 1 1 1\n0\n",
            "CPGSU-TENSOR 2 text 3 1 1 1\n0\n",
            "CPGSU-TENSOR 1 csv 3 1 1 1\n0\n",
            "CPGSU-TENSOR 1 text 3 1 1 1\n0\n1\n",
            "CPGSU-TENSOR 1 text 3 1 1 1\nabc\n",
            "CPGSU-TENSOR 1 binary 3 1 1 1\n0123\n",
            "CPGSU-TENSOR 1 text 3 1 1\n0\n",
        ] {
            assert!(read_tensor::<f64, _>(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn factor_fixture_parses() {
        let src = "CPGSU-FACTORS 1 3 2\n1 2 1\n1 2\n3 4\n5 6\n7 8\n";
        let fs: FactorSet<f64> = read_factors(src.as_bytes()).unwrap();
        assert_eq!(fs.rank(), 2);
        assert_eq!(fs.factor(1)[(1, 0)], 5.0);
        assert_eq!(fs.factor(2).col(1), &[8.0]);
        assert!(read_factors::<f64, _>("CPGSU-FACTORS 1 3 2\n1 2 1\n1 2\n".as_bytes()).is_err());
    }
}
