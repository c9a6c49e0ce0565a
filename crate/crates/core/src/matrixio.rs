//! Feature matrices, paired datasets, and their on-disk formats.
//!
//! Two formats are supported. CSV has a header row whose first column is
//! `id`, followed by one numeric column per feature. The binary format is
//! the magic `HDPR1\0`, little-endian `u64` row and column counts, a
//! row-major little-endian `f64` payload, then a `u64` byte-length prefix
//! followed by newline-separated UTF-8 subject ids.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const BIN_MAGIC: &[u8; 6] = b"HDPR1\0";
const BIN_HEADER_LEN: u64 = 6 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Bin,
}

impl Format {
    /// Guess from the file extension; anything that is not `.csv` is binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Bin,
        }
    }
}

/// An `n × d` matrix of per-subject features (rows are subjects).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    subject_ids: Vec<String>,
    modality: String,
    /// Original column index of every retained column.
    columns: Vec<usize>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>, subject_ids: Vec<String>, modality: impl Into<String>) -> Result<Self> {
        let columns = (0..data.ncols()).collect();
        Self::with_columns(data, subject_ids, modality, columns)
    }

    pub fn with_columns(
        data: DMatrix<f64>,
        subject_ids: Vec<String>,
        modality: impl Into<String>,
        columns: Vec<usize>,
    ) -> Result<Self> {
        if subject_ids.len() != data.nrows() {
            return Err(Error::Dimension(format!(
                "{} subject ids for {} rows",
                subject_ids.len(),
                data.nrows()
            )));
        }
        if columns.len() != data.ncols() {
            return Err(Error::Dimension(format!(
                "column manifest has {} entries for {} columns",
                columns.len(),
                data.ncols()
            )));
        }
        check_finite(&data)?;
        check_unique(&subject_ids)?;
        Ok(FeatureMatrix {
            data,
            subject_ids,
            modality: modality.into(),
            columns,
        })
    }

    /// Build from a matrix with generated ids `s0, s1, ...`.
    pub fn anonymous(data: DMatrix<f64>, modality: impl Into<String>) -> Result<Self> {
        let ids = (0..data.nrows()).map(|i| format!("s{i}")).collect();
        Self::new(data, ids, modality)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn modality(&self) -> &str {
        &self.modality
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    /// Rows as contiguous vectors.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        row_major(&self.data)
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let data = self.data.select_rows(rows.iter());
        let ids = rows.iter().map(|&i| self.subject_ids[i].clone()).collect();
        FeatureMatrix {
            data,
            subject_ids: ids,
            modality: self.modality.clone(),
            columns: self.columns.clone(),
        }
    }

    /// Subset of columns by position; the manifest follows the selection.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let data = self.data.select_columns(cols.iter());
        FeatureMatrix {
            data,
            subject_ids: self.subject_ids.clone(),
            modality: self.modality.clone(),
            columns: cols.iter().map(|&c| self.columns[c]).collect(),
        }
    }

    /// Apply [`scale_to_unit_variance`] to every row independently.
    pub fn scale_rows_to_unit_variance(&self) -> Result<FeatureMatrix> {
        let mut out = self.data.clone();
        for (i, row) in self.rows().iter().enumerate() {
            let scaled = scale_to_unit_variance(row).map_err(|e| match e {
                Error::ZeroVariance(_) => Error::ZeroVariance(format!("row of subject {:?}", self.subject_ids[i])),
                other => other,
            })?;
            for (j, v) in scaled.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(FeatureMatrix {
            data: out,
            ..self.clone()
        })
    }

    pub fn load(path: &Path, format: Format) -> Result<FeatureMatrix> {
        match format {
            Format::Csv => read_csv(path),
            Format::Bin => read_bin(path),
        }
    }

    pub fn save(&self, path: &Path, format: Format) -> Result<()> {
        match format {
            Format::Csv => write_csv(path, self),
            Format::Bin => write_bin(path, &self.data, &self.subject_ids),
        }
    }
}

/// Convenience wrapper: load with the format inferred from the extension.
pub fn load_matrix(path: &Path, format: Format) -> Result<FeatureMatrix> {
    FeatureMatrix::load(path, format)
}

/// Two modalities over the same subjects, rows aligned by id.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub x: FeatureMatrix,
    pub y: FeatureMatrix,
}

impl PairedDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn select_rows(&self, rows: &[usize]) -> PairedDataset {
        PairedDataset {
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
        }
    }
}

/// Align `y` to the subject order of `x`.
pub fn pair(x: FeatureMatrix, y: FeatureMatrix) -> Result<PairedDataset> {
    let xs: HashSet<&str> = x.subject_ids.iter().map(String::as_str).collect();
    let ys: HashSet<&str> = y.subject_ids.iter().map(String::as_str).collect();
    if xs != ys {
        let diff: BTreeSet<String> = xs.symmetric_difference(&ys).map(|s| s.to_string()).collect();
        return Err(Error::IdMismatch(diff.into_iter().collect()));
    }
    if x.subject_ids == y.subject_ids {
        return Ok(PairedDataset { x, y });
    }
    let pos: HashMap<&str, usize> = y
        .subject_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let order: Vec<usize> = x.subject_ids.iter().map(|s| pos[s.as_str()]).collect();
    let y = y.select_rows(&order);
    Ok(PairedDataset { x, y })
}

/// Divide a vector by the population standard deviation of its entries.
pub fn scale_to_unit_variance(row: &[f64]) -> Result<Vec<f64>> {
    if row.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 entries to scale, got {}",
            row.len()
        )));
    }
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    if !(var > 0.0) || var.sqrt() <= f64::EPSILON * mean.abs() {
        return Err(Error::ZeroVariance("vector entries are constant".into()));
    }
    let sd = var.sqrt();
    Ok(row.iter().map(|v| v / sd).collect())
}

/// Column means and sample standard deviations, fitted on one set of rows
/// and applicable to others.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    /// Positions (in the fitted matrix) of the retained columns.
    pub retained: Vec<usize>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub input_cols: usize,
}

impl Standardizer {
    /// Fit on the rows of `data`. Columns with zero sample variance are
    /// dropped; an error is returned only when nothing survives.
    pub fn fit(data: &DMatrix<f64>) -> Result<Standardizer> {
        let n = data.nrows();
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 rows to standardize, got {n}")));
        }
        let mut retained = Vec::new();
        let mut means = Vec::new();
        let mut sds = Vec::new();
        for j in 0..data.ncols() {
            let col = data.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            if sd > 1e-12 * mean.abs().max(1e-300) && sd > 0.0 {
                retained.push(j);
                means.push(mean);
                sds.push(sd);
            }
        }
        if retained.is_empty() {
            return Err(Error::Degenerate("every column has zero variance".into()));
        }
        let dropped = data.ncols() - retained.len();
        if dropped > 0 {
            warn!("dropping {dropped} zero-variance column(s) before standardization");
        }
        Ok(Standardizer {
            retained,
            means,
            sds,
            input_cols: data.ncols(),
        })
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.ncols() != self.input_cols {
            return Err(Error::Dimension(format!(
                "standardizer fitted on {} columns, got {}",
                self.input_cols,
                data.ncols()
            )));
        }
        let n = data.nrows();
        let mut out = DMatrix::zeros(n, self.retained.len());
        for (k, &j) in self.retained.iter().enumerate() {
            let (m, s) = (self.means[k], self.sds[k]);
            for i in 0..n {
                out[(i, k)] = (data[(i, j)] - m) / s;
            }
        }
        Ok(out)
    }

    pub fn dropped(&self) -> Vec<usize> {
        let keep: HashSet<usize> = self.retained.iter().copied().collect();
        (0..self.input_cols).filter(|j| !keep.contains(j)).collect()
    }
}

/// Standardize every column to mean 0 and sample sd 1, dropping
/// zero-variance columns (the manifest records what remains).
pub fn standardize_columns(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    let st = Standardizer::fit(&m.data)?;
    let data = st.apply(&m.data)?;
    let columns = st.retained.iter().map(|&j| m.columns[j]).collect();
    Ok(FeatureMatrix {
        data,
        subject_ids: m.subject_ids.clone(),
        modality: m.modality.clone(),
        columns,
    })
}

pub fn row_major(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn check_finite(data: &DMatrix<f64>) -> Result<()> {
    for i in 0..data.nrows() {
        for j in 0..data.ncols() {
            if !data[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

fn read_csv(path: &Path) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    if headers.get(0).map(str::trim) != Some("id") {
        return Err(Error::Parse(format!("{}: first header column must be \"id\"", path.display())));
    }
    let d = headers.len() - 1;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if rec.len() != d + 1 {
            return Err(Error::Parse(format!(
                "{}: row {row} has {} fields, expected {}",
                path.display(),
                rec.len(),
                d + 1
            )));
        }
        ids.push(rec[0].to_string());
        for col in 0..d {
            let field = rec[col + 1].trim();
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("{}: row {row}, column {col}: {field:?}", path.display())))?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            values.push(v);
        }
    }
    let n = ids.len();
    let data = DMatrix::from_row_slice(n, d, &values);
    let modality = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    FeatureMatrix::new(data, ids, modality)
}

fn write_csv(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    let mut header = vec!["id".to_string()];
    header.extend(m.columns.iter().map(|c| format!("f{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..m.nrows() {
        let mut rec = vec![m.subject_ids[i].clone()];
        rec.extend(m.data.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write a matrix (with ids) in the binary format.
pub fn write_bin(path: &Path, data: &DMatrix<f64>, ids: &[String]) -> Result<()> {
    if ids.iter().any(|s| s.contains('\n')) {
        return Err(Error::InvalidParameter("subject ids may not contain newlines".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(BIN_MAGIC).map_err(io)?;
    w.write_all(&(data.nrows() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(data.ncols() as u64).to_le_bytes()).map_err(io)?;
    for i in 0..data.nrows() {
        for j in 0..data.ncols() {
            w.write_all(&data[(i, j)].to_le_bytes()).map_err(io)?;
        }
    }
    let block = ids.join("\n");
    w.write_all(&(block.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(block.as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

fn read_bin(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = BinReader::open(path)?;
    let data = reader.read_rows(0, reader.nrows())?;
    let ids = reader.read_ids()?;
    let modality = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    FeatureMatrix::new(data, ids, modality)
}

/// Random-access reader over the binary format, for row-chunked processing
/// of matrices too wide to hold in memory.
pub struct BinReader {
    path: std::path::PathBuf,
    inner: BufReader<File>,
    nrows: usize,
    ncols: usize,
}

impl BinReader {
    pub fn open(path: &Path) -> Result<BinReader> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut inner = BufReader::new(file);
        let mut magic = [0u8; 6];
        inner
            .read_exact(&mut magic)
            .map_err(|_| Error::Parse(format!("{}: truncated header", path.display())))?;
        if &magic != BIN_MAGIC {
            return Err(Error::Parse(format!("{}: bad magic bytes", path.display())));
        }
        let nrows = read_u64(&mut inner, path)? as usize;
        let ncols = read_u64(&mut inner, path)? as usize;
        Ok(BinReader {
            path: path.to_path_buf(),
            inner,
            nrows,
            ncols,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Read `count` rows starting at `start`, checking finiteness.
    pub fn read_rows(&mut self, start: usize, count: usize) -> Result<DMatrix<f64>> {
        if start + count > self.nrows {
            return Err(Error::Dimension(format!(
                "rows {start}..{} out of range for {} rows",
                start + count,
                self.nrows
            )));
        }
        let offset = BIN_HEADER_LEN + (start * self.ncols * 8) as u64;
        self.inner
            .seek(SeekFrom::Start(offset))
            .map_err(|e| Error::io(&self.path, e))?;
        let mut buf = vec![0u8; count * self.ncols * 8];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Parse(format!("{}: truncated payload", self.path.display())))?;
        let mut values = Vec::with_capacity(count * self.ncols);
        for (k, chunk) in buf.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: start + k / self.ncols,
                    col: k % self.ncols,
                });
            }
            values.push(v);
        }
        Ok(DMatrix::from_row_slice(count, self.ncols, &values))
    }

    pub fn read_ids(&mut self) -> Result<Vec<String>> {
        let offset = BIN_HEADER_LEN + (self.nrows * self.ncols * 8) as u64;
        self.inner
            .seek(SeekFrom::Start(offset))
            .map_err(|e| Error::io(&self.path, e))?;
        let len = read_u64(&mut self.inner, &self.path)? as usize;
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Parse(format!("{}: truncated id block", self.path.display())))?;
        let block =
            String::from_utf8(buf).map_err(|_| Error::Parse(format!("{}: id block is not UTF-8", self.path.display())))?;
        let ids: Vec<String> = if self.nrows == 0 {
            Vec::new()
        } else {
            block.split('\n').map(str::to_string).collect()
        };
        if ids.len() != self.nrows {
            return Err(Error::Parse(format!(
                "{}: {} ids for {} rows",
                self.path.display(),
                ids.len(),
                self.nrows
            )));
        }
        check_unique(&ids)?;
        Ok(ids)
    }
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Parse(format!("{}: truncated header", path.display())))?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn csv_parse_small() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "id,f1,f2\na,1,2\nb,3,4\nc,5,6.5\n").unwrap();
        let m = FeatureMatrix::load(&p, Format::Csv).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (3, 2));
        assert_eq!(m.subject_ids(), &ids(&["a", "b", "c"])[..]);
        assert_eq!(m.data()[(2, 1)], 6.5);
    }

    #[test]
    fn csv_nan_names_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "id,f1,f2\na,1,2\nb,NaN,4\n").unwrap();
        match FeatureMatrix::load(&p, Format::Csv) {
            Err(Error::NonFinite { row, col }) => assert_eq!((row, col), (1, 0)),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn csv_duplicate_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "id,f1\na,1\na,2\n").unwrap();
        assert!(matches!(FeatureMatrix::load(&p, Format::Csv), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn bin_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = DMatrix::from_fn(50, 20, |_, _| rng.random::<f64>() * 1e3 - 500.0);
        let m = FeatureMatrix::anonymous(data, "X").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        m.save(&p, Format::Bin).unwrap();
        let back = FeatureMatrix::load(&p, Format::Bin).unwrap();
        for (a, b) in m.data().iter().zip(back.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(m.subject_ids(), back.subject_ids());
    }

    #[test]
    fn bin_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        std::fs::write(&p, b"NOPE00000000000000000000").unwrap();
        assert!(matches!(FeatureMatrix::load(&p, Format::Bin), Err(Error::Parse(_))));
    }

    #[test]
    fn bin_chunked_rows_match() {
        let data = DMatrix::from_fn(7, 3, |i, j| (i * 3 + j) as f64);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let idv: Vec<String> = (0..7).map(|i| format!("id{i}")).collect();
        write_bin(&p, &data, &idv).unwrap();
        let mut r = BinReader::open(&p).unwrap();
        let chunk = r.read_rows(2, 3).unwrap();
        assert_eq!(chunk, data.rows(2, 3).into_owned());
        assert_eq!(r.read_ids().unwrap(), idv);
    }

    #[test]
    fn pair_reorders_y() {
        let x = FeatureMatrix::new(DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]), ids(&["a", "b", "c"]), "X").unwrap();
        let y = FeatureMatrix::new(DMatrix::from_row_slice(3, 1, &[30.0, 10.0, 20.0]), ids(&["c", "a", "b"]), "Y").unwrap();
        let p = pair(x, y).unwrap();
        assert_eq!(p.y.subject_ids(), &ids(&["a", "b", "c"])[..]);
        assert_eq!(p.y.data().as_slice(), &[10.0, 20.0, 30.0]);
    }

    #[test]
    fn pair_identity_unchanged() {
        let x = FeatureMatrix::new(DMatrix::from_row_slice(2, 1, &[1.0, 2.0]), ids(&["a", "b"]), "X").unwrap();
        let y = FeatureMatrix::new(DMatrix::from_row_slice(2, 1, &[5.0, 6.0]), ids(&["a", "b"]), "Y").unwrap();
        let p = pair(x, y.clone()).unwrap();
        assert_eq!(p.y, y);
    }

    #[test]
    fn pair_mismatch_lists_difference() {
        let x = FeatureMatrix::new(DMatrix::zeros(2, 1), ids(&["a", "b"]), "X").unwrap();
        let y = FeatureMatrix::new(DMatrix::zeros(2, 1), ids(&["a", "z"]), "Y").unwrap();
        match pair(x, y) {
            Err(Error::IdMismatch(d)) => assert_eq!(d, ids(&["b", "z"])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unit_variance_scaling() {
        let out = scale_to_unit_variance(&[0.0, 2.0, 4.0]).unwrap();
        let s = (8.0f64 / 3.0).sqrt();
        assert_eq!(out, vec![0.0, 2.0 / s, 4.0 / s]);
        assert!(matches!(scale_to_unit_variance(&[5.0, 5.0, 5.0]), Err(Error::ZeroVariance(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 10.0 + 3.0).collect();
        let out = scale_to_unit_variance(&v).unwrap();
        let mean = out.iter().sum::<f64>() / 1000.0;
        let var = out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 1000.0;
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_simple_column() {
        let m = FeatureMatrix::anonymous(DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]), "X").unwrap();
        let s = standardize_columns(&m).unwrap();
        assert_eq!(s.data().as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn standardize_drops_constant_columns() {
        let data = DMatrix::from_row_slice(3, 3, &[1.0, 7.0, 0.0, 2.0, 7.0, 1.0, 3.0, 7.0, 5.0]);
        let m = FeatureMatrix::anonymous(data, "X").unwrap();
        let s = standardize_columns(&m).unwrap();
        assert_eq!(s.columns(), &[0, 2]);
        let all_const = FeatureMatrix::anonymous(DMatrix::from_element(4, 2, 3.0), "X").unwrap();
        assert!(matches!(standardize_columns(&all_const), Err(Error::Degenerate(_))));
    }

    #[test]
    fn standardize_random_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = DMatrix::from_fn(100, 30, |_, j| rng.random::<f64>() * (j + 1) as f64 + j as f64);
        let s = standardize_columns(&FeatureMatrix::anonymous(data, "X").unwrap()).unwrap();
        for col in s.data().column_iter() {
            let mean = col.iter().sum::<f64>() / 100.0;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn standardize_idempotent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = DMatrix::from_fn(12, 5, |_, _| rng.random::<f64>() * 100.0 - 50.0);
            let once = standardize_columns(&FeatureMatrix::anonymous(data, "X").unwrap()).unwrap();
            let twice = standardize_columns(&once).unwrap();
            for (a, b) in once.data().iter().zip(twice.data().iter()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn scaling_is_scale_invariant(seed in any::<u64>(), c in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
            let cv: Vec<f64> = v.iter().map(|x| x * c).collect();
            let a = scale_to_unit_variance(&v).unwrap();
            let b = scale_to_unit_variance(&cv).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn pair_aligns_any_permutation(perm in Just((0..9usize).collect::<Vec<_>>()).prop_shuffle()) {
            let idv: Vec<String> = (0..9).map(|i| format!("s{i}")).collect();
            let x = FeatureMatrix::new(DMatrix::from_fn(9, 2, |i, j| (i * 2 + j) as f64), idv.clone(), "X").unwrap();
            let yids: Vec<String> = perm.iter().map(|&i| idv[i].clone()).collect();
            let y = FeatureMatrix::new(DMatrix::from_fn(9, 1, |i, _| perm[i] as f64), yids, "Y").unwrap();
            let p = pair(x, y).unwrap();
            prop_assert_eq!(p.x.subject_ids(), p.y.subject_ids());
            for i in 0..9 {
                prop_assert_eq!(p.y.data()[(i, 0)], i as f64);
            }
        }
    }
}
