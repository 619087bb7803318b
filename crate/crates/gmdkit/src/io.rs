//! File formats: Matrix Market for sparse operators, headered CSV and a raw
//! little-endian binary for dense matrices, and the factor-directory layout.
//!
//! CSV floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every f64 bit-exactly.

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::gmd::GmdFactors;
use crate::gpmf::GpmfResult;
use crate::quadop::QuadraticOperator;
use crate::sparse::SymmetricBuilder;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const BIN_MAGIC: &[u8; 4] = b"GMDK";
/// flag bit 0: matrix is centered
const FLAG_CENTERED: u32 = 1;

// ---------------------------------------------------------------------------
// Matrix Market (coordinate, real, symmetric or general)
// ---------------------------------------------------------------------------

/// Reads a square sparse operator in Matrix Market coordinate format.
/// Accepts `symmetric` and `general` headers; general input must actually be
/// symmetric (both triangles present and equal) or it is rejected.
pub fn read_matrix_market(path: &Path) -> Result<QuadraticOperator> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();

    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if line.starts_with("%%MatrixMarket") {
                    break line;
                }
                if !line.trim().is_empty() {
                    return Err(Error::Parse("missing MatrixMarket header".into()));
                }
            }
            None => return Err(Error::Parse("empty Matrix Market file".into())),
        }
    };
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_lowercase()).collect();
    if tokens.len() < 5 || tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(Error::Parse(format!("unsupported header: {header}")));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field type: {}", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => {
            return Err(Error::Parse(format!("unsupported symmetry: {other}")));
        }
    };

    let mut size_line = None;
    for line in lines.by_ref() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        size_line = Some(line);
        break;
    }
    let size_line = size_line.ok_or_else(|| Error::Parse("missing size line".into()))?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("bad size line: {e}")))?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(Error::Parse("size line needs rows cols nnz".into()));
    };
    if rows != cols {
        return Err(Error::Parse(format!(
            "quadratic operators are square, got {rows}x{cols}"
        )));
    }

    let mut builder = SymmetricBuilder::new(rows);
    let mut general_entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut count = 0usize;
    for line in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let (Some(i), Some(j)) = (it.next(), it.next()) else {
            return Err(Error::Parse(format!("bad entry line: {trimmed}")));
        };
        let v: f64 = it
            .next()
            .unwrap_or("1")
            .parse()
            .map_err(|e| Error::Parse(format!("bad value in '{trimmed}': {e}")))?;
        let i: usize = i
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("bad row index: {e}")))?;
        let j: usize = j
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("bad col index: {e}")))?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(Error::Parse(format!(
                "entry ({i}, {j}) out of bounds for dim {rows} (indices are 1-based)"
            )));
        }
        if symmetric {
            builder.add(i - 1, j - 1, v);
        } else {
            general_entries.push((i - 1, j - 1, v));
        }
        count += 1;
    }
    if count != nnz {
        return Err(Error::Parse(format!(
            "expected {nnz} entries, found {count}"
        )));
    }

    if !symmetric {
        // verify symmetry, then keep one triangle
        let mut map = std::collections::BTreeMap::new();
        for &(i, j, v) in &general_entries {
            map.insert((i, j), v);
        }
        for (&(i, j), &v) in &map {
            let mirror = map.get(&(j, i)).copied().unwrap_or(0.0);
            if (v - mirror).abs() > 1e-12 * v.abs().max(1.0) {
                return Err(Error::Parse(format!(
                    "general matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
        for (&(i, j), &v) in &map {
            if i <= j {
                builder.add(i, j, v);
            }
        }
    }

    Ok(QuadraticOperator::custom(builder.build(), None))
}

/// Writes the lower triangle in symmetric coordinate format.
pub fn write_matrix_market(path: &Path, op: &QuadraticOperator) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    let entries: Vec<(usize, usize, f64)> = op
        .matrix()
        .iter()
        .filter(|&(i, j, _)| i >= j)
        .collect();
    writeln!(w, "{} {} {}", op.dim(), op.dim(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Dense matrices: headered CSV and GMDK binary
// ---------------------------------------------------------------------------

/// Writes `rows,cols` on the first line and one comma-separated row per line.
pub fn write_csv_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{},{}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_csv_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV matrix file".into()))??;
    let dims: Vec<usize> = header
        .trim()
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("bad CSV header '{header}': {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse(format!(
            "CSV header must be 'rows,cols', got '{header}'"
        )));
    };
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimension("CSV matrix must be non-empty".into()));
    }
    let mut m = DMatrix::zeros(rows, cols);
    let mut row = 0usize;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if row >= rows {
            return Err(Error::Parse(format!("more than {rows} data rows")));
        }
        let mut col = 0usize;
        for tok in line.trim().split(',') {
            if col >= cols {
                return Err(Error::Parse(format!(
                    "row {row} has more than {cols} columns"
                )));
            }
            m[(row, col)] = tok
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad float '{tok}' at row {row}: {e}")))?;
            col += 1;
        }
        if col != cols {
            return Err(Error::Parse(format!(
                "row {row} has {col} columns, expected {cols}"
            )));
        }
        row += 1;
    }
    if row != rows {
        return Err(Error::Parse(format!("found {row} data rows, expected {rows}")));
    }
    Ok(m)
}

/// 16-byte header (magic "GMDK", u32 rows, u32 cols, u32 flags, little
/// endian) followed by rows*cols f64 values in column-major order.
pub fn write_bin_matrix(path: &Path, data: &DataMatrix) -> Result<()> {
    let m = data.as_matrix();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BIN_MAGIC)?;
    w.write_all(&(m.nrows() as u32).to_le_bytes())?;
    w.write_all(&(m.ncols() as u32).to_le_bytes())?;
    let flags = if data.centered() { FLAG_CENTERED } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_bin_matrix(path: &Path) -> Result<DataMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::Parse("binary matrix file shorter than its header".into()))?;
    if &header[0..4] != BIN_MAGIC {
        return Err(Error::Parse("bad magic in binary matrix file".into()));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let flags = u32::from_le_bytes(header[12..16].try_into().unwrap());
    let mut values = vec![0.0_f64; rows * cols];
    let mut buf = [0u8; 8];
    for v in values.iter_mut() {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Parse("binary matrix file truncated".into()))?;
        *v = f64::from_le_bytes(buf);
    }
    // column-major fill matches the on-disk order
    let m = DMatrix::from_vec(rows, cols, values);
    DataMatrix::from_parts(m, flags & FLAG_CENTERED != 0)
}

/// Loads a dense matrix by extension: `.csv` or the GMDK binary otherwise.
pub fn read_dense_auto(path: &Path) -> Result<DataMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(DataMatrix::new(read_csv_matrix(path)?)?),
        _ => read_bin_matrix(path),
    }
}

// ---------------------------------------------------------------------------
// Factor directory
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorsMeta {
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

/// Writes U.csv, V.csv, D.csv and meta.json into `dir`.
pub fn save_factors(dir: &Path, f: &GmdFactors, meta: &FactorsMeta) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv_matrix(&dir.join("U.csv"), &f.u)?;
    write_csv_matrix(&dir.join("V.csv"), &f.v)?;
    let d = DMatrix::from_column_slice(f.d.len(), 1, f.d.as_slice());
    write_csv_matrix(&dir.join("D.csv"), &d)?;
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Parse(format!("meta serialization: {e}")))?;
    std::fs::write(dir.join("meta.json"), json)?;
    Ok(())
}

pub fn load_factors(dir: &Path) -> Result<(GmdFactors, FactorsMeta)> {
    let u = read_csv_matrix(&dir.join("U.csv"))?;
    let v = read_csv_matrix(&dir.join("V.csv"))?;
    let d_mat = read_csv_matrix(&dir.join("D.csv"))?;
    if d_mat.ncols() != 1 {
        return Err(Error::Parse("D.csv must be a single column".into()));
    }
    let meta: FactorsMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)
        .map_err(|e| Error::Parse(format!("meta.json: {e}")))?;
    let d = DVector::from_column_slice(d_mat.column(0).as_slice());
    if u.ncols() != d.len() || v.ncols() != d.len() {
        return Err(Error::Parse(
            "factor files disagree on the number of components".into(),
        ));
    }
    Ok((
        GmdFactors {
            u,
            d,
            v,
            iterations: meta.iterations.clone(),
            converged: meta.converged.clone(),
        },
        meta,
    ))
}

/// Per-factor penalty summary persisted next to penalized factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltiesFile {
    pub kind_u: String,
    pub kind_v: String,
    pub lambda_u: Vec<f64>,
    pub lambda_v: Vec<f64>,
    pub nnz_u: Vec<usize>,
    pub nnz_v: Vec<usize>,
    pub omega_quad_u: Vec<Option<f64>>,
    pub omega_quad_v: Vec<Option<f64>>,
    pub zero_factor: Vec<bool>,
}

pub fn save_penalties(
    dir: &Path,
    result: &GpmfResult,
    kind_u: &str,
    kind_v: &str,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = PenaltiesFile {
        kind_u: kind_u.to_string(),
        kind_v: kind_v.to_string(),
        lambda_u: result.info.iter().map(|i| i.lambda_u).collect(),
        lambda_v: result.info.iter().map(|i| i.lambda_v).collect(),
        nnz_u: result.info.iter().map(|i| i.nnz_u).collect(),
        nnz_v: result.info.iter().map(|i| i.nnz_v).collect(),
        omega_quad_u: result.info.iter().map(|i| i.omega_quad_u).collect(),
        omega_quad_v: result.info.iter().map(|i| i.omega_quad_v).collect(),
        zero_factor: result.info.iter().map(|i| i.zero_factor).collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Parse(format!("penalties serialization: {e}")))?;
    std::fs::write(dir.join("penalties.json"), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadop::build_chain_laplacian;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use tempfile::tempdir;

    #[test]
    fn matrix_market_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("op.mtx");
        let op = build_chain_laplacian(6).unwrap();
        write_matrix_market(&path, &op).unwrap();
        let back = read_matrix_market(&path).unwrap();
        assert_eq!(back.dim(), 6);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(back.entry(i, j), op.entry(i, j));
            }
        }
    }

    #[test]
    fn matrix_market_general_header() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("gen.mtx");
        std::fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 4\n1 1 2.0\n1 2 -1.0\n2 1 -1.0\n2 2 2.0\n",
        )
        .unwrap();
        let op = read_matrix_market(&path).unwrap();
        assert_eq!(op.entry(0, 1), -1.0);
        assert_eq!(op.entry(1, 1), 2.0);

        // asymmetric general input is rejected
        let bad = dir.path().join("bad.mtx");
        std::fs::write(
            &bad,
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 1.0\n2 1 3.0\n",
        )
        .unwrap();
        assert!(read_matrix_market(&bad).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut rng = StdRng::seed_from_u64(51);
        let m = DMatrix::from_fn(7, 5, |_, _| rng.gen_range(-1.0..1.0) * 1e-7);
        write_csv_matrix(&path, &m).unwrap();
        let back = read_csv_matrix(&path).unwrap();
        assert_eq!(m.nrows(), back.nrows());
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn binary_round_trip_and_header() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.gmdk");
        let mut rng = StdRng::seed_from_u64(52);
        let m = DMatrix::from_fn(9, 4, |_, _| rng.gen::<f64>());
        let data = DataMatrix::new(m.clone()).unwrap().center();
        write_bin_matrix(&path, &data).unwrap();
        let back = read_bin_matrix(&path).unwrap();
        assert!(back.centered());
        for (a, b) in data.as_matrix().iter().zip(back.as_matrix().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_bin_matrix(&path).is_err());
    }

    #[test]
    fn csv_malformed_inputs() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "2,2\n1.0,2.0\n").unwrap();
        assert!(read_csv_matrix(&path).is_err(), "missing row");
        std::fs::write(&path, "2,2\n1.0,2.0,3.0\n4.0,5.0\n").unwrap();
        assert!(read_csv_matrix(&path).is_err(), "extra column");
        std::fs::write(&path, "x,2\n").unwrap();
        assert!(read_csv_matrix(&path).is_err(), "bad header");
    }

    #[test]
    fn factors_round_trip() {
        let dir = tempdir().unwrap();
        let mut rng = StdRng::seed_from_u64(53);
        let f = GmdFactors {
            u: DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-1.0..1.0)),
            d: DVector::from_vec(vec![3.5, 1.25]),
            v: DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)),
            iterations: vec![12, 40],
            converged: vec![true, true],
        };
        let meta = FactorsMeta {
            k: 2,
            tol: 1e-9,
            seed: 7,
            iterations: f.iterations.clone(),
            converged: f.converged.clone(),
        };
        save_factors(dir.path(), &f, &meta).unwrap();
        let (back, meta_back) = load_factors(dir.path()).unwrap();
        assert_eq!(meta_back.k, 2);
        for (a, b) in f.u.iter().zip(back.u.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in f.d.iter().zip(back.d.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
