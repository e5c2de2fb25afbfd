//! Values and distance CSV files, plus plain result tables.
//!
//! Values: one row per time step, columns `n{node}_f{feature}` node-major.
//! Distances: header `node_0,…,node_{N-1}` and `N` rows of `N` reals.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rrn_core::data::SeriesDataset;
use rrn_core::graph::build_gaussian_kernel_graph;
use rrn_core::{Matrix, Tensor3};

use crate::error::{io_err, Result, RrnError};

fn parse_cell(source: &str, row: usize, column: usize, cell: &str) -> Result<f64> {
    let fail = |message: String| RrnError::Parse {
        source_name: source.to_string(),
        row,
        column,
        message,
    };
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| fail(format!("not a number: {cell:?}")))?;
    if !v.is_finite() {
        return Err(fail(format!("non-finite value {cell:?}")));
    }
    Ok(v)
}

/// Parses a header of `n{node}_f{feature}` names; returns `(N, D)`.
fn parse_values_header(source: &str, header: &csv::StringRecord) -> Result<(usize, usize)> {
    let format = |message: String| RrnError::Format {
        source_name: source.to_string(),
        message,
    };
    let mut pairs = Vec::with_capacity(header.len());
    for (k, name) in header.iter().enumerate() {
        let pair = name
            .strip_prefix('n')
            .and_then(|rest| rest.split_once("_f"))
            .and_then(|(n, f)| Some((n.parse::<usize>().ok()?, f.parse::<usize>().ok()?)));
        match pair {
            Some(p) => pairs.push(p),
            None => return Err(format(format!("column {}: bad header name {name:?}", k + 1))),
        }
    }
    if pairs.is_empty() {
        return Err(format("empty header".into()));
    }
    let d = pairs.iter().map(|p| p.1).max().unwrap_or(0) + 1;
    if pairs.len() % d != 0 {
        return Err(format(format!("{} columns do not split into {d} features per node", pairs.len())));
    }
    for (k, &(n, f)) in pairs.iter().enumerate() {
        if (n, f) != (k / d, k % d) {
            return Err(format(format!(
                "column {}: expected n{}_f{}, found n{n}_f{f}",
                k + 1,
                k / d,
                k % d
            )));
        }
    }
    Ok((pairs.len() / d, d))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r)
}

fn record_error(source: &str, row: usize, e: csv::Error) -> RrnError {
    RrnError::Format {
        source_name: source.to_string(),
        message: format!("row {row}: {e}"),
    }
}

/// Reads a values table into `[T × N × D]`. `source` names the input in errors.
pub fn read_values<R: Read>(r: R, source: &str) -> Result<Tensor3> {
    let mut rdr = reader(r);
    let header = rdr.headers().map_err(|e| record_error(source, 0, e))?.clone();
    let (n, d) = parse_values_header(source, &header)?;
    let width = n * d;
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| record_error(source, row, e))?;
        if rec.len() != width {
            return Err(RrnError::Parse {
                source_name: source.to_string(),
                row,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} cells, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            data.push(parse_cell(source, row, c + 1, cell)?);
        }
        rows += 1;
    }
    Ok(Tensor3::new((rows, n, d), data)?)
}

pub fn write_values<W: Write>(w: W, x: &Tensor3) -> Result<()> {
    let (_, n, d) = x.dims();
    let mut wtr = csv::Writer::from_writer(w);
    let header: Vec<String> = (0..n)
        .flat_map(|i| (0..d).map(move |f| format!("n{i}_f{f}")))
        .collect();
    write_row(&mut wtr, &header)?;
    for t in 0..x.len_time() {
        let row: Vec<String> = x.frame(t).iter().map(|v| v.to_string()).collect();
        write_row(&mut wtr, &row)?;
    }
    flush(wtr)
}

/// Reads an `N × N` distance matrix with header `node_0,…`.
pub fn read_distances<R: Read>(r: R, source: &str) -> Result<Matrix> {
    let mut rdr = reader(r);
    let header = rdr.headers().map_err(|e| record_error(source, 0, e))?.clone();
    for (k, name) in header.iter().enumerate() {
        if name != format!("node_{k}") {
            return Err(RrnError::Format {
                source_name: source.to_string(),
                message: format!("column {}: expected node_{k}, found {name:?}", k + 1),
            });
        }
    }
    let n = header.len();
    let mut data = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| record_error(source, row, e))?;
        if rec.len() != n {
            return Err(RrnError::Parse {
                source_name: source.to_string(),
                row,
                column: rec.len().min(n) + 1,
                message: format!("expected {n} cells, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            data.push(parse_cell(source, row, c + 1, cell)?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(RrnError::Format {
            source_name: source.to_string(),
            message: format!("expected {n} data rows, found {rows}"),
        });
    }
    Ok(Matrix::new(n, n, data)?)
}

pub fn write_distances<W: Write>(w: W, d: &Matrix) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let header: Vec<String> = (0..d.cols()).map(|k| format!("node_{k}")).collect();
    write_row(&mut wtr, &header)?;
    for r in 0..d.rows() {
        let row: Vec<String> = d.row(r).iter().map(|v| v.to_string()).collect();
        write_row(&mut wtr, &row)?;
    }
    flush(wtr)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn read_values_file(path: &Path) -> Result<Tensor3> {
    read_values(open(path)?, &path.display().to_string())
}

pub fn write_values_file(path: &Path, x: &Tensor3) -> Result<()> {
    write_values(create(path)?, x)
}

pub fn read_distances_file(path: &Path) -> Result<Matrix> {
    read_distances(open(path)?, &path.display().to_string())
}

pub fn write_distances_file(path: &Path, d: &Matrix) -> Result<()> {
    write_distances(create(path)?, d)
}

/// Values + distances → dataset with a Gaussian-kernel graph and the default split.
pub fn load_csv_dataset(
    values_path: &Path,
    distances_path: &Path,
    bandwidth: f64,
    threshold: f64,
) -> Result<SeriesDataset> {
    let values = read_values_file(values_path)?;
    let distances = read_distances_file(distances_path)?;
    if values.n_nodes() != distances.rows() {
        return Err(RrnError::Format {
            source_name: distances_path.display().to_string(),
            message: format!(
                "{} nodes in the distance matrix but {} in {}",
                distances.rows(),
                values.n_nodes(),
                values_path.display()
            ),
        });
    }
    let graph = build_gaussian_kernel_graph(&distances, bandwidth, threshold)?;
    Ok(SeriesDataset::new(values, graph)?)
}

/// Writes a header plus rows of preformatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    write_row(&mut wtr, header)?;
    for r in rows {
        write_row(&mut wtr, r)?;
    }
    flush(wtr)
}

fn write_row<W: Write, S: AsRef<[u8]>>(wtr: &mut csv::Writer<W>, row: &[S]) -> Result<()> {
    wtr.write_record(row).map_err(csv_write_err)
}

fn flush<W: Write>(mut wtr: csv::Writer<W>) -> Result<()> {
    wtr.flush().map_err(|e| RrnError::Io {
        path: "<csv output>".into(),
        source: e,
    })
}

fn csv_write_err(e: csv::Error) -> RrnError {
    RrnError::Io {
        path: "<csv output>".into(),
        source: e.into(),
    }
}
