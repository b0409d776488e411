//! Conversion of prediction dumps (one CSV row per test item, arbitrary
//! column names) into the JSON ingest document.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{csv_error, FeatureValue, IngestClassifier, IngestDoc, IngestInstance, Provenance};

#[derive(Debug, Clone, Default)]
pub struct ConvertOptions {
    /// Column holding instance ids; rows are numbered `row-1`, `row-2`, ...
    /// when absent.
    pub id_column: Option<String>,
    pub label_column: String,
    /// `(classifier name, column)` pairs.
    pub scores: Vec<(String, String)>,
    /// `(negative, positive)`; inferred from exactly two distinct labels
    /// (sorted) when absent.
    pub classes: Option<[String; 2]>,
    /// Keep every other column as a feature.
    pub keep_features: bool,
    pub source: Option<String>,
}

/// Parse a `name=column` score mapping; a bare `column` names the
/// classifier after the column.
pub fn parse_score_mapping(arg: &str) -> (String, String) {
    match arg.split_once('=') {
        Some((name, col)) => (name.to_owned(), col.to_owned()),
        None => (arg.to_owned(), arg.to_owned()),
    }
}

pub fn convert_predictions(bytes: &[u8], opts: &ConvertOptions) -> Result<IngestDoc> {
    if opts.scores.is_empty() {
        return Err(Error::invalid("at least one score column is required"));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader.headers().map_err(|e| csv_error(&e, None))?.clone();
    let column = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            field: Some(name.to_owned()),
            message: format!("header has no `{name}` column"),
        })
    };
    let id_col = opts.id_column.as_deref().map(column).transpose()?;
    let label_col = column(&opts.label_column)?;
    let score_cols = opts
        .scores
        .iter()
        .map(|(name, col)| Ok((name.clone(), column(col)?, col.clone())))
        .collect::<Result<Vec<_>>>()?;
    let used: BTreeSet<usize> = score_cols.iter().map(|(_, c, _)| *c).chain(id_col).chain([label_col]).collect();
    let feature_cols: Vec<(usize, String)> = if opts.keep_features {
        header
            .iter()
            .enumerate()
            .filter(|(i, _)| !used.contains(i))
            .map(|(i, h)| (i, h.to_owned()))
            .collect()
    } else {
        Vec::new()
    };

    let mut instances = Vec::new();
    let mut scores: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); score_cols.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(&e, None))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("").trim();
        let id = match id_col {
            Some(c) => cell(c).to_owned(),
            None => format!("row-{}", row + 1),
        };
        for ((_, col, col_name), map) in score_cols.iter().zip(scores.iter_mut()) {
            let raw = cell(*col);
            if raw.is_empty() {
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                field: Some(col_name.clone()),
                message: format!("`{raw}` is not a number"),
            })?;
            map.insert(id.clone(), v);
        }
        instances.push(IngestInstance {
            id,
            label: cell(label_col).to_owned(),
            features: feature_cols
                .iter()
                .map(|(i, name)| (name.clone(), FeatureValue::parse_cell(cell(*i))))
                .collect(),
        });
    }

    let classes = match &opts.classes {
        Some(c) => c.clone(),
        None => {
            let distinct: BTreeSet<&str> = instances.iter().map(|i| i.label.as_str()).collect();
            match distinct.into_iter().collect::<Vec<_>>()[..] {
                [neg, pos] => [neg.to_owned(), pos.to_owned()],
                ref other => {
                    return Err(Error::Parse {
                        line: 1,
                        field: Some(opts.label_column.clone()),
                        message: format!(
                            "cannot infer the two classes from {} distinct label(s); pass classes explicitly",
                            other.len()
                        ),
                    })
                }
            }
        }
    };
    Ok(IngestDoc {
        classes,
        instances,
        classifiers: score_cols
            .into_iter()
            .zip(scores)
            .map(|((name, _, _), scores)| IngestClassifier {
                name,
                scores,
                normalization: None,
            })
            .collect(),
        provenance: Some(Provenance {
            format: "prediction-csv".into(),
            source: opts.source.clone(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dataset, LoadOptions};

    const DUMP: &str = "y_true,lr_proba,nb_proba,age\n1,0.9,0.99,30\n0,0.2,0.01,41\n0,0.6,0.7,\n";

    fn opts() -> ConvertOptions {
        ConvertOptions {
            label_column: "y_true".into(),
            scores: vec![parse_score_mapping("LR=lr_proba"), parse_score_mapping("nb_proba")],
            keep_features: true,
            ..Default::default()
        }
    }

    #[test]
    fn converts_and_loads() {
        let doc = convert_predictions(DUMP.as_bytes(), &opts()).unwrap();
        assert_eq!(doc.classes, ["0".to_string(), "1".to_string()]);
        assert_eq!(doc.instances[2].id, "row-3");
        assert_eq!(doc.classifiers[1].name, "nb_proba");
        assert_eq!(doc.instances[2].features["age"], None);
        let (d, report) = Dataset::from_ingest(doc, &LoadOptions::default()).unwrap();
        assert!(report.is_accepted());
        assert_eq!(d.classifier("LR").unwrap().scores(), [0.9, 0.2, 0.6]);
        assert_eq!(d.feature_names().collect::<Vec<_>>(), ["age"]);
    }

    #[test]
    fn reports_missing_columns_and_bad_numbers() {
        let mut o = opts();
        o.label_column = "target".into();
        assert_eq!(convert_predictions(DUMP.as_bytes(), &o).unwrap_err().code(), "PARSE_ERROR");
        let bad = "y,p\n1,abc\n0,0.1\n";
        let o = ConvertOptions {
            label_column: "y".into(),
            scores: vec![parse_score_mapping("p")],
            ..Default::default()
        };
        match convert_predictions(bad.as_bytes(), &o).unwrap_err() {
            Error::Parse { line, field, .. } => assert_eq!((line, field.as_deref()), (2, Some("p"))),
            e => panic!("{e:?}"),
        }
    }
}
