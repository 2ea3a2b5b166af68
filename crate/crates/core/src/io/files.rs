//! Plain-text file formats: dataset CSV, adjacency CSV and order files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::CausalOrder;
use crate::num::Matrix;
use crate::scm::{Dag, Dataset};

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => Error::Format(format!(
            "ragged row{}: expected {expected_len} fields, found {len}",
            pos.as_ref()
                .map(|p| format!(" at line {}", p.line()))
                .unwrap_or_default()
        )),
        _ => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("{other:?}")),
        },
    }
}

/// Reads a header of column names followed by rows of decimal floats.
pub fn parse_dataset_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Format("missing header row".into()));
    }
    let d = names.len();
    let mut data = Vec::new();
    let mut n = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: r + 1,
                column: c + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            data.push(v);
        }
        n += 1;
    }
    Dataset::new(Matrix::new(n, d, data)?, names)
}

pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_dataset_csv(&fs::read_to_string(path)?)
}

/// Floats use the shortest representation that parses back to the same value.
pub fn format_dataset_csv(ds: &Dataset) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(ds.column_names()).map_err(csv_error)?;
    for r in 0..ds.n() {
        writer
            .write_record(ds.values().row(r).iter().map(|v| v.to_string()))
            .map_err(csv_error)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_dataset_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_file(path, &format_dataset_csv(ds)?)
}

fn is_numeric(cell: &str) -> bool {
    cell.trim().parse::<f64>().is_ok()
}

/// Parses a `d×d` 0/1 adjacency matrix (`row i, col j = 1` means `i → j`).
///
/// An optional header row of variable names is accepted; when both the header
/// and `names` are present the matrix is reordered to follow `names`.
pub fn parse_graph_csv(text: &str, names: Option<&[String]>) -> Result<Dag> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut records: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        records.push(record.map_err(csv_error)?);
    }
    let header: Option<Vec<String>> = match records.first() {
        Some(first) if !first.iter().all(is_numeric) => {
            let h = first.iter().map(|s| s.trim().to_string()).collect();
            records.remove(0);
            Some(h)
        }
        _ => None,
    };
    let d = records.len();
    let mut rows = Vec::with_capacity(d);
    for (r, record) in records.iter().enumerate() {
        if record.len() != d {
            return Err(Error::Format(format!(
                "adjacency row {} has {} entries, expected {d}",
                r + 1,
                record.len()
            )));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Parse {
                    row: r + 1,
                    column: c + 1,
                    message: format!("adjacency entries must be 0 or 1, found {other:?}"),
                }),
            })
            .collect::<Result<Vec<bool>>>()?;
        rows.push(row);
    }
    let dag = Dag::from_adjacency(&rows)?;
    let Some(names) = names else { return Ok(dag) };
    if names.len() != d {
        return Err(Error::Dimension {
            what: "graph variables",
            expected: names.len(),
            got: d,
        });
    }
    match header {
        None => Ok(dag),
        Some(h) => {
            if h.len() != d {
                return Err(Error::Format(format!(
                    "graph header has {} names for {d} rows",
                    h.len()
                )));
            }
            let perm = names
                .iter()
                .map(|name| {
                    h.iter()
                        .position(|x| x == name)
                        .ok_or_else(|| Error::Validation(format!("column {name:?} missing from graph header")))
                })
                .collect::<Result<Vec<usize>>>()?;
            dag.permuted(&perm)
        }
    }
}

pub fn load_graph_csv(path: impl AsRef<Path>, names: Option<&[String]>) -> Result<Dag> {
    parse_graph_csv(&fs::read_to_string(path)?, names)
}

pub fn format_graph_csv(dag: &Dag) -> String {
    let mut out = String::new();
    for row in dag.to_rows() {
        let cells: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn save_graph_csv(dag: &Dag, path: impl AsRef<Path>) -> Result<()> {
    write_file(path, &format_graph_csv(dag))
}

/// Parses comma-separated one-based indices such as `2,3,1`.
pub fn parse_order(text: &str) -> Result<CausalOrder> {
    let idx = text
        .trim()
        .split(',')
        .enumerate()
        .map(|(c, s)| {
            s.trim().parse::<usize>().map_err(|_| Error::Parse {
                row: 1,
                column: c + 1,
                message: format!("not an index: {s:?}"),
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    CausalOrder::from_one_based(&idx)
}

pub fn load_order(path: impl AsRef<Path>) -> Result<CausalOrder> {
    parse_order(&fs::read_to_string(path)?)
}

pub fn save_order(order: &CausalOrder, path: impl AsRef<Path>) -> Result<()> {
    write_file(path, &format!("{order}\n"))
}

pub(crate) fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::RngStream;

    #[test]
    fn small_dataset_parses() {
        let ds = parse_dataset_csv("a,b\n1,2\n3.5,-4e-3\n").unwrap();
        assert_eq!((ds.n(), ds.d()), (2, 2));
        assert_eq!(ds.column_names(), ["a", "b"]);
        assert_eq!(ds.values().get(1, 1), -4e-3);
        assert!(!ds.is_standardized());
    }

    #[test]
    fn header_only_is_rejected() {
        assert!(parse_dataset_csv("a,b\n").is_err());
    }

    #[test]
    fn bad_cell_reports_position() {
        match parse_dataset_csv("a,b\n1,2\n3,x\n") {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_rows_are_format_errors() {
        assert!(matches!(parse_dataset_csv("a,b\n1,2\n3\n"), Err(Error::Format(_))));
    }

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let mut rng = RngStream::new(3);
        let m = Matrix::from_fn(50, 4, |_, _| {
            rng.normal() * 10f64.powi((rng.uniform() * 20.0) as i32 - 10)
        });
        let ds = Dataset::with_default_names(m).unwrap();
        let back = parse_dataset_csv(&format_dataset_csv(&ds).unwrap()).unwrap();
        for (a, b) in ds.values().data().iter().zip(back.values().data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(ds.column_names(), back.column_names());
    }

    #[test]
    fn graph_formats() {
        assert_eq!(parse_graph_csv("0,0\n0,0\n", None).unwrap(), Dag::empty(2));
        assert_eq!(parse_graph_csv("0,1,0\n0,0,1\n0,0,0\n", None).unwrap(), Dag::chain(3));
        assert!(matches!(parse_graph_csv("0,1\n1,0\n", None), Err(Error::Validation(_))));
        assert!(matches!(parse_graph_csv("0,2\n0,0\n", None), Err(Error::Parse { .. })));
        assert_eq!(
            parse_graph_csv(&format_graph_csv(&Dag::chain(4)), None).unwrap(),
            Dag::chain(4)
        );
    }

    #[test]
    fn graph_header_is_aligned_to_names() {
        let names: Vec<String> = ["c", "a", "b"].iter().map(|s| s.to_string()).collect();
        // a -> b -> c
        let dag = parse_graph_csv("a,b,c\n0,1,0\n0,0,1\n0,0,0\n", Some(&names)).unwrap();
        assert!(dag.has_edge(1, 2) && dag.has_edge(2, 0));
        assert_eq!(dag.edge_count(), 2);
        assert!(parse_graph_csv("0,1\n0,0\n", Some(&names)).is_err());
    }

    #[test]
    fn order_text_is_one_based() {
        let o = parse_order("2, 3,1\n").unwrap();
        assert_eq!(o.as_slice(), &[1, 2, 0]);
        assert_eq!(o.to_string(), "2,3,1");
        assert!(parse_order("0,1").is_err());
        assert!(parse_order("1,1").is_err());
        assert!(parse_order("1,a").is_err());
    }
}
