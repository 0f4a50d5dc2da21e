use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GroupedDataset, Provenance};
use crate::error::{Error, Result};

/// Column mapping for CSV ingestion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: String,
    pub group_column: String,
    /// Feature columns in order. `None` selects every other column, in file order.
    pub feature_columns: Option<Vec<String>>,
    /// Fixes K instead of inferring it as `max label + 1`.
    pub num_classes: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            group_column: "group".into(),
            feature_columns: None,
            num_classes: None,
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse {
            row: 0,
            message: format!("missing column `{name}`"),
        })
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<GroupedDataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let label_col = column(&headers, &schema.label_column)?;
    let group_col = column(&headers, &schema.group_column)?;
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(names) => names.iter().map(|n| column(&headers, n)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&c| c != label_col && c != group_col).collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Parse {
            row: 0,
            message: "no feature columns".into(),
        });
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        for &c in &feature_cols {
            let v: f64 = field(c).parse().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric feature `{}` in column `{}`", field(c), &headers[c]),
            })?;
            features.push(v);
        }
        let label: usize = field(label_col).parse().map_err(|_| Error::Parse {
            row,
            message: format!("invalid label `{}`", field(label_col)),
        })?;
        if let Some(k) = schema.num_classes {
            if label >= k {
                return Err(Error::Parse {
                    row,
                    message: format!("label {label} out of range for {k} classes"),
                });
            }
        }
        let group: u8 = match field(group_col) {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("group `{other}` outside {{0,1}}"),
                })
            }
        };
        labels.push(label);
        groups.push(group);
    }
    let num_classes = schema
        .num_classes
        .unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    GroupedDataset::new(
        feature_cols.len(),
        num_classes,
        features,
        labels,
        groups,
        Provenance::Csv,
        None,
    )
}

/// Writes `f0..f{d-1},label,group`. Floats use the shortest round-trip form.
pub fn save_csv(dataset: &GroupedDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::data(e.to_string()))?;
    let mut header: Vec<String> = (0..dataset.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    header.push("group".into());
    writer.write_record(&header).map_err(|e| Error::data(e.to_string()))?;
    for i in 0..dataset.len() {
        let mut record: Vec<String> = dataset.features(i).iter().map(|v| v.to_string()).collect();
        record.push(dataset.labels()[i].to_string());
        record.push(dataset.groups()[i].to_string());
        writer.write_record(&record).map_err(|e| Error::data(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
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
    fn four_row_file() {
        let f = write("f0,f1,label,group\n0.5,1,0,0\n-2,3.25,1,1\n0,0,1,0\n1e-3,7,0,1\n");
        let d = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.features(1), &[-2.0, 3.25]);
        assert_eq!(d.groups(), &[0, 1, 0, 1]);
    }

    #[test]
    fn group_out_of_range_names_row() {
        let f = write("f0,label,group\n1,0,0\n2,1,2\n");
        match load_csv(f.path(), &CsvSchema::default()) {
            Err(Error::Parse { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("group"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_feature_and_missing_column() {
        let f = write("f0,label,group\nabc,0,0\n");
        assert!(matches!(
            load_csv(f.path(), &CsvSchema::default()),
            Err(Error::Parse { row: 1, .. })
        ));
        let f = write("f0,label\n1,0\n");
        assert!(matches!(
            load_csv(f.path(), &CsvSchema::default()),
            Err(Error::Parse { row: 0, .. })
        ));
    }

    #[test]
    fn explicit_class_count_bounds_labels() {
        let f = write("x,y,g\n1,3,0\n");
        let schema = CsvSchema {
            label_column: "y".into(),
            group_column: "g".into(),
            feature_columns: Some(vec!["x".into()]),
            num_classes: Some(3),
        };
        assert!(matches!(load_csv(f.path(), &schema), Err(Error::Parse { row: 1, .. })));
    }
}
