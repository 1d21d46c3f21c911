//! Dictionary caching: a binary or CSV matrix dump next to a JSON sidecar.
//!
//! Binary layout (little endian): magic `NFCDICT\0`, `u32` version, `u64`
//! rows, `u64` cols, then `rows·cols` pairs of `f64` (re, im) in column-major
//! order. CSV layout: header `row,col,re,im`, one line per entry.

use std::fs;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Block, Dictionary, DictionaryKind, DictionaryMeta};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NFCDICT\0";
const VERSION: u32 = 1;

/// Contents of the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryHeader {
    pub kind: DictionaryKind,
    pub oversampling: Option<f64>,
    pub n_bs: usize,
    pub n_ue: usize,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub meta: DictionaryMeta,
}

impl DictionaryHeader {
    pub fn of(dict: &Dictionary) -> Self {
        Self {
            kind: dict.kind,
            oversampling: dict.oversampling,
            n_bs: dict.n_bs,
            n_ue: dict.n_ue,
            rows: dict.nrows(),
            cols: dict.ncols(),
            meta: dict.meta.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bs.checked_mul(self.n_ue) != Some(self.rows) {
            return Err(Error::Format(format!(
                "sidecar rows {} != n_bs {} x n_ue {}",
                self.rows, self.n_bs, self.n_ue
            )));
        }
        Ok(())
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar(dict: &Dictionary, path: &Path) -> Result<PathBuf> {
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&DictionaryHeader::of(dict)).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(side)
}

pub fn read_sidecar(path: &Path) -> Result<DictionaryHeader> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: DictionaryHeader = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
    header.validate()?;
    Ok(header)
}

fn format_err(e: impl std::fmt::Display) -> Error {
    Error::Format(e.to_string())
}

/// Encodes a matrix in the binary layout.
pub fn encode_binary(m: &DMatrix<Complex64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + 16 * m.len());
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).expect("vec write");
    out.write_u64::<LittleEndian>(m.nrows() as u64).expect("vec write");
    out.write_u64::<LittleEndian>(m.ncols() as u64).expect("vec write");
    for v in m.iter() {
        out.write_f64::<LittleEndian>(v.re).expect("vec write");
        out.write_f64::<LittleEndian>(v.im).expect("vec write");
    }
    out
}

/// Decodes the binary layout, rejecting truncated or oversized payloads.
pub fn parse_binary(bytes: &[u8]) -> Result<DMatrix<Complex64>> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic).map_err(format_err)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad dictionary magic".into()));
    }
    let version = cur.read_u32::<LittleEndian>().map_err(format_err)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dictionary version {version}")));
    }
    let rows = cur.read_u64::<LittleEndian>().map_err(format_err)?;
    let cols = cur.read_u64::<LittleEndian>().map_err(format_err)?;
    let remaining = (bytes.len() as u64).saturating_sub(cur.position());
    let needed = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(16))
        .ok_or_else(|| Error::Format("dictionary dimensions overflow".into()))?;
    if needed != remaining {
        return Err(Error::Format(format!(
            "payload has {remaining} bytes, {rows}x{cols} needs {needed}"
        )));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re = cur.read_f64::<LittleEndian>().map_err(format_err)?;
        let im = cur.read_f64::<LittleEndian>().map_err(format_err)?;
        data.push(Complex64::new(re, im));
    }
    Ok(DMatrix::from_vec(rows, cols, data))
}

/// Decodes the CSV layout for a `rows × cols` matrix. Every entry must
/// appear exactly once.
pub fn parse_csv(bytes: &[u8], rows: usize, cols: usize) -> Result<DMatrix<Complex64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = rdr.headers().map_err(format_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["row", "col", "re", "im"] {
        return Err(Error::Format(format!("unexpected CSV header {headers:?}")));
    }
    let total = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("dictionary dimensions overflow".into()))?;
    let mut entries = Vec::new();
    for rec in rdr.deserialize::<(usize, usize, f64, f64)>() {
        let (r, c, re, im) = rec.map_err(format_err)?;
        if r >= rows || c >= cols {
            return Err(Error::Format(format!("entry ({r}, {c}) outside {rows}x{cols}")));
        }
        entries.push((r, c, Complex64::new(re, im)));
        if entries.len() > total {
            return Err(Error::Format("more CSV entries than matrix cells".into()));
        }
    }
    if entries.len() != total {
        return Err(Error::Format(format!("{} CSV entries for {total} cells", entries.len())));
    }
    let mut seen = vec![false; total];
    let mut m = DMatrix::zeros(rows, cols);
    for (r, c, v) in entries {
        let idx = c * rows + r;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(Error::Format(format!("duplicate CSV entry ({r}, {c})")));
        }
        m[(r, c)] = v;
    }
    Ok(m)
}

fn from_dense(header: DictionaryHeader, m: DMatrix<Complex64>) -> Result<Dictionary> {
    header.validate()?;
    if m.nrows() != header.rows || m.ncols() != header.cols {
        return Err(Error::Format(format!(
            "matrix {}x{} disagrees with sidecar {}x{}",
            m.nrows(),
            m.ncols(),
            header.rows,
            header.cols
        )));
    }
    Dictionary::new(header.kind, header.n_bs, header.n_ue, vec![Block::Dense(m)], header.oversampling, header.meta)
}

/// Writes `path` (binary) and `path.json`.
pub fn export_binary(dict: &Dictionary, path: &Path) -> Result<()> {
    fs::write(path, encode_binary(&dict.to_dense())).map_err(|e| Error::io(path, e))?;
    write_sidecar(dict, path)?;
    Ok(())
}

pub fn import_binary(path: &Path) -> Result<Dictionary> {
    let header = read_sidecar(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_dense(header, parse_binary(&bytes)?)
}

/// Writes `path` (CSV) and `path.json`.
pub fn export_csv(dict: &Dictionary, path: &Path) -> Result<()> {
    let m = dict.to_dense();
    let mut w = csv::Writer::from_path(path).map_err(format_err)?;
    w.write_record(["row", "col", "re", "im"]).map_err(format_err)?;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            w.serialize((r, c, v.re, v.im)).map_err(format_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_sidecar(dict, path)?;
    Ok(())
}

pub fn import_csv(path: &Path) -> Result<Dictionary> {
    let header = read_sidecar(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let m = parse_csv(&bytes, header.rows, header.cols)?;
    from_dense(header, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::dictionary::dft_dictionary;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("nfce-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn binary_round_trip() {
        let c = SystemConfig::new(28e9, 8, 2);
        let d = dft_dictionary(&c, 2).unwrap();
        let p = tmp("dft.bin");
        export_binary(&d, &p).unwrap();
        let back = import_binary(&p).unwrap();
        assert_eq!(back.to_dense(), d.to_dense());
        assert_eq!(back.kind, DictionaryKind::Dft);
        assert_eq!(back.oversampling, Some(2.0));
    }

    #[test]
    fn csv_round_trip() {
        let c = SystemConfig::new(28e9, 4, 2);
        let d = dft_dictionary(&c, 1).unwrap();
        let p = tmp("dft.csv");
        export_csv(&d, &p).unwrap();
        let back = import_csv(&p).unwrap();
        assert_eq!(back.to_dense(), d.to_dense());
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(parse_binary(b"").is_err());
        assert!(parse_binary(b"NFCDICT\0\x01\0\0\0").is_err());
        let mut huge = MAGIC.to_vec();
        huge.extend_from_slice(&1u32.to_le_bytes());
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(parse_binary(&huge).is_err());
        let good = encode_binary(&DMatrix::from_element(2, 2, Complex64::new(1.0, -1.0)));
        assert!(parse_binary(&good[..good.len() - 1]).is_err());
        assert_eq!(parse_binary(&good).unwrap().nrows(), 2);

        assert!(parse_csv(b"row,col,re,im\n0,0,1,0\n", 1, 2).is_err());
        assert!(parse_csv(b"row,col,re,im\n0,0,1,0\n0,0,1,0\n", 1, 2).is_err());
        assert!(parse_csv(b"a,b\n", 1, 1).is_err());
        assert!(parse_csv(b"row,col,re,im\n0,5,1,0\n", 1, 1).is_err());
        assert!(parse_csv(b"row,col,re,im\n0,0,1,0\n0,1,2,0\n", 1, 2).is_ok());
    }
}
