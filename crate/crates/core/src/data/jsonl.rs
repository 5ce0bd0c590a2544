//! JSON-lines datasets: one `{"id", "features", "labels", "split"}` object
//! per line.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Instance, LabeledDataset, Split};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row<'a> {
    #[serde(borrow)]
    id: std::borrow::Cow<'a, str>,
    features: Vec<f64>,
    labels: Vec<String>,
    split: Split,
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(file, path)
}

pub fn parse_dataset<R: Read>(reader: R, path: &Path) -> Result<LabeledDataset> {
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row<'_> = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: n + 1,
            message: e.to_string(),
        })?;
        rows.push((
            Instance {
                id: row.id.into_owned(),
                features: row.features,
                labels: row.labels,
            },
            row.split,
        ));
    }
    LabeledDataset::new(rows)
}

pub fn write_dataset<W: Write>(dataset: &LabeledDataset, mut w: W) -> Result<()> {
    for (i, inst) in dataset.instances().iter().enumerate() {
        let row = Row {
            id: inst.id.as_str().into(),
            features: inst.features.clone(),
            labels: inst.labels.clone(),
            split: dataset.split_of(i),
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n").map_err(|e| Error::io("<dataset>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LabeledDataset> {
        parse_dataset(text.as_bytes(), Path::new("d.jsonl"))
    }

    #[test]
    fn single_line_needs_validation_data() {
        let err = parse(r#"{"id":"x","features":[1.0],"labels":["a"],"split":"train"}"#).unwrap_err();
        assert!(matches!(err, Error::ClassesWithoutData(_)));
    }

    #[test]
    fn single_unlabeled_line_is_dataset_of_one() {
        let d = parse(r#"{"id":"x","features":[1.0, 2.0],"labels":[],"split":"test"}"#).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.feature_dim(), 2);
    }

    #[test]
    fn two_labels_indexed_under_both() {
        let d = parse(concat!(
            r#"{"id":"x","features":[1.0],"labels":["a","b"],"split":"train"}"#,
            "\n\n",
            r#"{"id":"y","features":[2.0],"labels":["b","a"],"split":"val"}"#,
            "\n"
        ))
        .unwrap();
        assert_eq!(d.class_split("a", Split::Train).unwrap(), &[0]);
        assert_eq!(d.class_split("b", Split::Train).unwrap(), &[0]);
        assert_eq!(d.class_split("b", Split::Val).unwrap(), &[1]);
    }

    #[test]
    fn schema_violation_reports_line() {
        let text = concat!(
            r#"{"id":"x","features":[1.0],"labels":["a"],"split":"train"}"#,
            "\n",
            r#"{"id":"y","features":"oops","labels":["a"],"split":"val"}"#,
        );
        match parse(text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
        let bad_split = r#"{"id":"y","features":[1],"labels":[],"split":"dev"}"#;
        assert!(matches!(parse(bad_split), Err(Error::Parse { line: 1, .. })));
    }
}
