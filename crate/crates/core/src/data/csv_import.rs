use std::path::Path;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::ndcore::Matrix;

/// Reads a CSV with a header row. The column named `label` holds class
/// indices; every other column is a feature already scaled to [0, 1].
pub fn load_csv(path: &Path, split: Split) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, split).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_csv<R: std::io::Read>(reader: R, split: Split) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(e.to_string()))?
        .clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| Error::Data("no column named \"label\"".into()))?;
    let n_features = headers.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
        for (c, field) in rec.iter().enumerate() {
            let field = field.trim();
            if c == label_col {
                labels.push(field.parse::<usize>().map_err(|_| {
                    Error::Data(format!("row {}: bad label {field:?}", row + 1))
                })?);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!("row {}: bad value {field:?}", row + 1))
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Data(format!(
                        "row {}: feature {v} outside [0, 1]",
                        row + 1
                    )));
                }
                data.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Data("no samples".into()));
    }
    let n_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(Matrix::from_vec(labels.len(), n_features, data)?, labels, n_classes, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_label_anywhere() {
        let text = "a,label,b\n0.5,1,0.25\n0,0,1\n";
        let d = read_csv(text.as_bytes(), Split::Test).unwrap();
        assert_eq!(d.features.row(0), &[0.5, 0.25]);
        assert_eq!(d.labels, vec![1, 0]);
        assert_eq!(d.split, Split::Test);
    }

    #[test]
    fn missing_label_column() {
        assert!(read_csv("a,b\n0,1\n".as_bytes(), Split::Train).is_err());
        assert!(read_csv("a,label\n2,1\n".as_bytes(), Split::Train).is_err());
    }
}
