//! Predictions CSV: `image_path,predicted_label[,score_<class>...]`.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Tolerance on the sum of a score vector.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_path: String,
    pub predicted_label: String,
    /// One score per class of the owning set, in class order.
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    class_names: Vec<String>,
    predictions: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(class_names: Vec<String>, predictions: Vec<Prediction>) -> Result<Self> {
        for p in &predictions {
            if !class_names.contains(&p.predicted_label) {
                return Err(Error::UnknownLabel(p.predicted_label.clone()));
            }
            if let Some(s) = &p.scores {
                check_scores(s, class_names.len())?;
            }
        }
        Ok(PredictionSet {
            class_names,
            predictions,
        })
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn predictions(&self) -> &[Prediction] {
        &self.predictions
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    /// Parses a predictions CSV against the declared classes.
    ///
    /// Score columns, when present, must each name a declared class. Any
    /// malformed row or undeclared label is reported with its 1-based line
    /// number (the header is line 1).
    pub fn read_csv<R: Read>(reader: R, declared: &[String]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "image_path" || &headers[1] != "predicted_label" {
            return Err(Error::Line {
                line: 1,
                message: "header must start with image_path,predicted_label".into(),
            });
        }
        let mut score_classes = Vec::new();
        for h in headers.iter().skip(2) {
            let class = h.strip_prefix("score_").ok_or_else(|| Error::Line {
                line: 1,
                message: format!("unexpected column {h:?}"),
            })?;
            if !declared.iter().any(|c| c == class) {
                return Err(Error::Line {
                    line: 1,
                    message: format!("score column for undeclared class {class:?}"),
                });
            }
            score_classes.push(class.to_string());
        }
        if !score_classes.is_empty() && score_classes.len() != declared.len() {
            return Err(Error::Line {
                line: 1,
                message: format!(
                    "{} score columns for {} declared classes",
                    score_classes.len(),
                    declared.len()
                ),
            });
        }
        let order: Vec<usize> = declared
            .iter()
            .filter_map(|c| score_classes.iter().position(|s| s == c))
            .collect();

        let mut predictions = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let at = |message: String| Error::Line { line, message };
            let row = row.map_err(|e| at(e.to_string()))?;
            if row.len() != headers.len() {
                return Err(at(format!(
                    "expected {} fields, found {}",
                    headers.len(),
                    row.len()
                )));
            }
            let label = row[1].to_string();
            if !declared.contains(&label) {
                return Err(at(format!("label {label:?} is not a declared class")));
            }
            let scores = if score_classes.is_empty() {
                None
            } else {
                let raw: Vec<f64> = row
                    .iter()
                    .skip(2)
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| at(format!("bad score: {e}")))?;
                let scores: Vec<f64> = order.iter().map(|&j| raw[j]).collect();
                check_scores(&scores, declared.len()).map_err(|e| at(e.to_string()))?;
                Some(scores)
            };
            if row[0].is_empty() {
                return Err(at("empty image_path".into()));
            }
            predictions.push(Prediction {
                image_path: row[0].to_string(),
                predicted_label: label,
                scores,
            });
        }
        Self::new(declared.to_vec(), predictions)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let with_scores = self.predictions.iter().all(|p| p.scores.is_some()) && !self.is_empty();
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header = vec!["image_path".to_string(), "predicted_label".to_string()];
        if with_scores {
            header.extend(self.class_names.iter().map(|c| format!("score_{c}")));
        }
        wtr.write_record(&header)?;
        for p in &self.predictions {
            let mut row = vec![p.image_path.clone(), p.predicted_label.clone()];
            if with_scores {
                row.extend(p.scores.as_ref().unwrap().iter().map(|s| format!("{s:.6}")));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<predictions>", e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, declared: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), declared)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Paths that occur more than once.
    pub fn duplicate_paths(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut dups: Vec<String> = self
            .predictions
            .iter()
            .filter(|p| !seen.insert(p.image_path.as_str()))
            .map(|p| p.image_path.clone())
            .collect();
        dups.sort();
        dups.dedup();
        dups
    }
}

fn check_scores(scores: &[f64], classes: usize) -> Result<()> {
    if scores.len() != classes {
        return Err(Error::Evaluation(format!(
            "{} scores for {classes} classes",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Evaluation(
            "scores must be finite and non-negative".into(),
        ));
    }
    let sum: f64 = scores.iter().sum();
    if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
        return Err(Error::Evaluation(format!("scores sum to {sum}, not 1")));
    }
    Ok(())
}
