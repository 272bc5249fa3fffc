use std::path::Path;

use super::Sample;
use crate::{Error, Result};

/// Reads a dataset with header `x1,…,xd,y` and one sample per row.
pub fn read_dataset_csv(path: &Path) -> Result<Vec<Sample>> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .clone();
    let dx = header.len().saturating_sub(1);
    let expected: Vec<String> = (1..=dx)
        .map(|i| format!("x{i}"))
        .chain(["y".to_string()])
        .collect();
    if dx == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(csv_err(format!(
            "header must be x1..xd,y, got {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let values = record
            .iter()
            .map(|field| field.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| csv_err(format!("row {}: {e}", row + 1)))?;
        let (y, x) = values
            .split_last()
            .expect("header guarantees at least two columns");
        let sample = Sample::new(x.to_vec(), *y);
        if !sample.is_finite() {
            return Err(csv_err(format!("row {}: non-finite value", row + 1)));
        }
        samples.push(sample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_rows() {
        let f = write("x1,x2,y\n1,2,3\n-0.5, 0.25 ,1e-3\n");
        let data = read_dataset_csv(f.path()).unwrap();
        assert_eq!(
            data,
            vec![
                Sample::new(vec![1.0, 2.0], 3.0),
                Sample::new(vec![-0.5, 0.25], 1e-3)
            ]
        );
    }

    #[test]
    fn rejects_bad_header_and_values() {
        assert!(read_dataset_csv(write("a,b,y\n1,2,3\n").path()).is_err());
        assert!(read_dataset_csv(write("y\n1\n").path()).is_err());
        assert!(read_dataset_csv(write("x1,y\n1,abc\n").path()).is_err());
        assert!(read_dataset_csv(write("x1,y\n1,2,3\n").path()).is_err());
        assert!(read_dataset_csv(write("x1,y\n1,NaN\n").path()).is_err());
    }
}
