//! Matrix and vector file formats.
//!
//! Text format: CSV, UTF-8, no header, one sample per row, fields separated
//! by commas. Vectors are a single column.
//!
//! Binary format: a 16-byte header — magic `RSMX` (4 bytes), rows as u32
//! little-endian, cols as u32 little-endian, 4 reserved zero bytes — followed
//! by rows*cols f64 values, little-endian, row-major.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

pub const MAGIC: &[u8; 4] = b"RSMX";

#[derive(Debug)]
pub enum IoError {
    Io(std::io::Error),
    Parse(String),
}

impl std::fmt::Display for IoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "{e}"),
            IoError::Parse(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e)
    }
}

fn parse_error(path: &Path, line: usize, msg: impl std::fmt::Display) -> IoError {
    IoError::Parse(format!("{}:{line}: {msg}", path.display()))
}

/// Reads a matrix from CSV or the RSMX binary format, sniffed by magic bytes.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>, IoError> {
    let mut file = File::open(path)?;
    let mut head = [0u8; 4];
    let n_read = file.read(&mut head)?;
    if n_read == 4 && &head == MAGIC {
        return read_matrix_binary(path);
    }
    read_matrix_csv(path)
}

fn read_matrix_csv(path: &Path) -> Result<Array2<f64>, IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = trimmed
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect();
        let row = row.map_err(|e| parse_error(path, i + 1, e))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_error(
                    path,
                    i + 1,
                    format!("expected {} fields, got {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IoError::Parse(format!("{}: empty file", path.display())));
    }
    let (n, p) = (rows.len(), rows[0].len());
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, p), flat)
        .map_err(|e| IoError::Parse(format!("{}: {e}", path.display())))
}

fn read_matrix_binary(path: &Path) -> Result<Array2<f64>, IoError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    reader.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(IoError::Parse(format!(
            "{}: bad magic bytes",
            path.display()
        )));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; rows * cols * 8];
    reader.read_exact(&mut buf)?;
    let data: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| IoError::Parse(format!("{}: {e}", path.display())))
}

pub fn read_vector(path: &Path) -> Result<Array1<f64>, IoError> {
    let m = read_matrix(path)?;
    let (n, p) = m.dim();
    if p == 1 {
        Ok(m.column(0).to_owned())
    } else if n == 1 {
        Ok(m.row(0).to_owned())
    } else {
        Err(IoError::Parse(format!(
            "{}: expected a vector, got a {n}x{p} matrix",
            path.display()
        )))
    }
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn write_vector_csv(path: &Path, v: &Array1<f64>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in v.iter() {
        writeln!(w, "{x:.17e}")?;
    }
    Ok(())
}

pub fn write_matrix_binary(path: &Path, m: &Array2<f64>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(m.nrows() as u32).to_le_bytes())?;
    w.write_all(&(m.ncols() as u32).to_le_bytes())?;
    w.write_all(&[0u8; 4])?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}
