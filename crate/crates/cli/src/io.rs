use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clickstat::ClickSample;
use serde::Serialize;

use crate::error::CliError;

/// Version stamped into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// Rows of a headerless-or-headed CSV, with 1-based line numbers. A first
/// row whose first field is not a number is taken as the header.
fn records(path: &Path) -> Result<Vec<(u64, Vec<String>)>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<String> = rec.iter().map(str::to_owned).collect();
        if rows.is_empty() && i == 0 && fields[0].parse::<f64>().is_err() {
            continue;
        }
        rows.push((line, fields));
    }
    if rows.is_empty() {
        return Err(CliError::Validation(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, field: &str, what: &str) -> Result<T, CliError> {
    field
        .parse()
        .map_err(|_| CliError::Validation(format!("{}:{line}: cannot parse `{field}` as {what}", path.display())))
}

fn single_column<'a>(path: &Path, line: u64, fields: &'a [String]) -> Result<&'a str, CliError> {
    match fields {
        [only] => Ok(only),
        _ => Err(CliError::Validation(format!(
            "{}:{line}: expected one value per line, found {}",
            path.display(),
            fields.len()
        ))),
    }
}

/// One finite real per line.
pub fn read_values(path: &Path) -> Result<Vec<f64>, CliError> {
    records(path)?
        .iter()
        .map(|(line, fields)| {
            let x: f64 = parse_field(path, *line, single_column(path, *line, fields)?, "a number")?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(CliError::Validation(format!(
                    "{}:{line}: value {x} is not finite",
                    path.display()
                )))
            }
        })
        .collect()
}

fn check_k(path: &Path, line: u64, k: usize, n_pixels: usize) -> Result<(), CliError> {
    if k > n_pixels {
        return Err(CliError::Validation(format!(
            "{}:{line}: click number {k} exceeds N = {n_pixels}",
            path.display()
        )));
    }
    Ok(())
}

/// One click number per line.
pub fn read_clicks(path: &Path, n_pixels: usize) -> Result<ClickSample, CliError> {
    let mut counts = vec![0u64; n_pixels + 1];
    for (line, fields) in records(path)? {
        let k: usize = parse_field(path, line, single_column(path, line, &fields)?, "a click number")?;
        check_k(path, line, k, n_pixels)?;
        counts[k] += 1;
    }
    Ok(ClickSample::new(counts)?)
}

/// `k,count` rows; extra columns are ignored.
pub fn read_histogram(path: &Path, n_pixels: usize) -> Result<ClickSample, CliError> {
    let mut counts = vec![0u64; n_pixels + 1];
    for (line, fields) in records(path)? {
        if fields.len() < 2 {
            return Err(CliError::Validation(format!(
                "{}:{line}: expected `k,count`",
                path.display()
            )));
        }
        let k: usize = parse_field(path, line, &fields[0], "a click number")?;
        let c: u64 = parse_field(path, line, &fields[1], "a count")?;
        check_k(path, line, k, n_pixels)?;
        counts[k] += c;
    }
    Ok(ClickSample::new(counts)?)
}

pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.join(name))
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn header_is_optional() {
        assert_eq!(read_values(file_with("area\n1.5\n2\n").path()).unwrap(), vec![1.5, 2.0]);
        assert_eq!(read_values(file_with("1.5\n2\n").path()).unwrap(), vec![1.5, 2.0]);
    }

    #[test]
    fn bad_line_is_named() {
        let err = read_values(file_with("1\n2\nthree\n").path()).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(read_values(file_with("").path()).is_err());
        assert!(read_values(file_with("area\n").path()).is_err());
    }

    #[test]
    fn clicks_and_histograms() {
        let s = read_clicks(file_with("0\n2\n2\n").path(), 3).unwrap();
        assert_eq!(s.counts(), &[1, 0, 2, 0]);
        let h = read_histogram(file_with("k,count\n0,5\n3,1\n").path(), 3).unwrap();
        assert_eq!(h.counts(), &[5, 0, 0, 1]);
        assert!(read_clicks(file_with("4\n").path(), 3).is_err());
    }
}
