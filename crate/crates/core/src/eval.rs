//! Confusion matrices, one-vs-rest binary counts and the
//! accuracy / precision / recall / F1 report.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::classifier::PredictionSet;
use crate::dataset::DatasetManifest;
use crate::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = class_names.len();
        if k == 0 {
            return Err(Error::Evaluation(
                "confusion matrix needs at least one class".into(),
            ));
        }
        if counts.len() != k || counts.iter().any(|row| row.len() != k) {
            return Err(Error::Evaluation(format!(
                "confusion matrix must be {k}x{k}"
            )));
        }
        let unique: BTreeSet<&String> = class_names.iter().collect();
        if unique.len() != k {
            return Err(Error::Evaluation("duplicate class names".into()));
        }
        Ok(ConfusionMatrix {
            class_names,
            counts,
        })
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Diagonal over total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        diag as f64 / total as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.class_names.iter().cloned());
        wtr.write_record(&header)?;
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush()
            .map_err(|e| Error::io("<confusion matrix>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        let class_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut counts = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let row = row?;
            if row.len() != class_names.len() + 1 {
                return Err(Error::Line {
                    line,
                    message: format!("expected {} fields", class_names.len() + 1),
                });
            }
            if class_names.get(counts.len()).map(String::as_str) != Some(&row[0]) {
                return Err(Error::Line {
                    line,
                    message: format!("row label {:?} out of order", &row[0]),
                });
            }
            let values = row
                .iter()
                .skip(1)
                .map(|v| v.trim().parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Line {
                    line,
                    message: e.to_string(),
                })?;
            counts.push(values);
        }
        Self::new(class_names, counts)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Tallies predictions against ground truth, in the truth manifest's class
/// order. Every truth path needs exactly one prediction and vice versa.
pub fn confusion_matrix(truth: &DatasetManifest, preds: &PredictionSet) -> Result<ConfusionMatrix> {
    if truth.is_empty() && preds.is_empty() {
        return Err(Error::Evaluation("nothing to evaluate".into()));
    }
    let dups = preds.duplicate_paths();
    if !dups.is_empty() {
        return Err(Error::Evaluation(format!(
            "duplicate predictions: {}",
            dups.join(", ")
        )));
    }
    let predicted: HashMap<&str, &str> = preds
        .predictions()
        .iter()
        .map(|p| (p.image_path.as_str(), p.predicted_label.as_str()))
        .collect();
    let truth_paths: BTreeSet<&str> = truth
        .records()
        .iter()
        .map(|r| r.image_path.as_str())
        .collect();
    let mut missing: Vec<&str> = truth_paths
        .iter()
        .copied()
        .filter(|p| !predicted.contains_key(p))
        .collect();
    missing.dedup();
    let extra: BTreeSet<&str> = predicted
        .keys()
        .copied()
        .filter(|p| !truth_paths.contains(p))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::new();
        if !missing.is_empty() {
            let _ = write!(msg, "missing predictions: {}", missing.join(", "));
        }
        if !extra.is_empty() {
            if !msg.is_empty() {
                msg.push_str("; ");
            }
            let extra: Vec<&str> = extra.into_iter().collect();
            let _ = write!(msg, "predictions without truth: {}", extra.join(", "));
        }
        return Err(Error::Evaluation(msg));
    }

    let classes = truth.class_names().to_vec();
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for r in truth.records() {
        let i = truth
            .class_index(&r.label)
            .expect("manifest labels are declared");
        let label = predicted[r.image_path.as_str()];
        let j = truth
            .class_index(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        counts[i][j] += 1;
    }
    ConfusionMatrix::new(classes, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// One-vs-rest reduction with `positive` as the positive class.
pub fn binary_counts(cm: &ConfusionMatrix, positive: &str) -> Result<BinaryCounts> {
    let p = cm
        .class_names
        .iter()
        .position(|c| c == positive)
        .ok_or_else(|| Error::UnknownClass(positive.to_string()))?;
    let tp = cm.counts[p][p];
    let row: u64 = cm.counts[p].iter().sum();
    let col: u64 = cm.counts.iter().map(|r| r[p]).sum();
    let fn_ = row - tp;
    let fp = col - tp;
    Ok(BinaryCounts {
        tp,
        tn: cm.total() - tp - fn_ - fp,
        fp,
        fn_,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub class_name: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, precision, recall and F1. Undefined ratios are reported as 0.
pub fn metrics(counts: &BinaryCounts, class_name: impl Into<String>) -> Result<MetricsRow> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::Evaluation("metrics need at least one sample".into()));
    }
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricsRow {
        class_name: class_name.into(),
        accuracy: ratio(counts.tp + counts.tn, total),
        precision,
        recall,
        f1,
    })
}

/// One row per class, each class taken as positive in turn.
pub fn one_vs_rest_report(cm: &ConfusionMatrix) -> Result<Vec<MetricsRow>> {
    if cm.class_names.len() < 2 {
        return Err(Error::Evaluation(
            "one-vs-rest needs at least two classes".into(),
        ));
    }
    cm.class_names
        .iter()
        .map(|c| metrics(&binary_counts(cm, c)?, c.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportLayout {
    /// `class, accuracy, precision, recall, f1`.
    #[default]
    Standard,
    /// The column placement of the published binary results table:
    /// `class, accuracy, precision, f1_score, recall`, where the column
    /// headed precision carries recall and the column headed recall
    /// carries precision.
    PaperTable3,
}

/// Renders rows with four decimals.
pub fn render_report(
    rows: &[MetricsRow],
    format: ReportFormat,
    layout: ReportLayout,
) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Evaluation("no rows to report".into()));
    }
    let header: [&str; 5] = match layout {
        ReportLayout::Standard => ["class", "accuracy", "precision", "recall", "f1"],
        ReportLayout::PaperTable3 => ["class", "accuracy", "precision", "f1_score", "recall"],
    };
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            let values = match layout {
                ReportLayout::Standard => [r.accuracy, r.precision, r.recall, r.f1],
                ReportLayout::PaperTable3 => [r.accuracy, r.recall, r.f1, r.precision],
            };
            [
                r.class_name.clone(),
                format!("{:.4}", values[0]),
                format!("{:.4}", values[1]),
                format!("{:.4}", values[2]),
                format!("{:.4}", values[3]),
            ]
        })
        .collect();

    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            let mut wtr = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            wtr.write_record(header)?;
            for row in &cells {
                wtr.write_record(row)?;
            }
            let bytes = wtr
                .into_inner()
                .map_err(|e| Error::Evaluation(e.to_string()))?;
            out = String::from_utf8(bytes).expect("csv output is utf-8");
        }
        ReportFormat::Text => {
            let mut widths = header.map(str::len);
            for row in &cells {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |fields: &[&str]| {
                let mut s = format!("{:<w$}", fields[0], w = widths[0]);
                for (f, w) in fields[1..].iter().zip(&widths[1..]) {
                    let _ = write!(s, "  {f:>w$}");
                }
                s.trim_end().to_string() + "\n"
            };
            out.push_str(&line(&header));
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&line(&rule.iter().map(String::as_str).collect::<Vec<_>>()));
            for row in &cells {
                out.push_str(&line(&row.iter().map(String::as_str).collect::<Vec<_>>()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Prediction;
    use crate::dataset::ManifestRecord;
    use proptest::prelude::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn bc(tp: u64, tn: u64, fp: u64, fn_: u64) -> BinaryCounts {
        BinaryCounts { tp, tn, fp, fn_ }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn first_classification(wrong_normals: usize) -> (DatasetManifest, PredictionSet) {
        let mut records = Vec::new();
        let mut preds = Vec::new();
        for i in 0..150 {
            let path = format!("Pothole/{i:03}.png");
            records.push(ManifestRecord::new(&path, "Pothole"));
            preds.push(Prediction {
                image_path: path,
                predicted_label: "Pothole".into(),
                scores: None,
            });
        }
        for i in 0..150 {
            let path = format!("Normal/{i:03}.png");
            records.push(ManifestRecord::new(&path, "Normal"));
            let label = if i < wrong_normals {
                "Pothole"
            } else {
                "Normal"
            };
            preds.push(Prediction {
                image_path: path,
                predicted_label: label.into(),
                scores: None,
            });
        }
        let truth = DatasetManifest::new(records, names(&["Pothole", "Normal"])).unwrap();
        let preds = PredictionSet::new(names(&["Pothole", "Normal"]), preds).unwrap();
        (truth, preds)
    }

    #[test]
    fn confusion_examples() {
        let (truth, preds) = first_classification(0);
        let cm = confusion_matrix(&truth, &preds).unwrap();
        assert_eq!(cm.counts(), [vec![150, 0], vec![0, 150]]);

        let (truth, preds) = first_classification(6);
        let cm = confusion_matrix(&truth, &preds).unwrap();
        assert_eq!(cm.counts(), [vec![150, 0], vec![6, 144]]);
        assert!(close(cm.accuracy(), 0.98, 1e-12));

        let empty = DatasetManifest::empty();
        let none = PredictionSet::new(vec![], vec![]).unwrap();
        assert!(confusion_matrix(&empty, &none).is_err());
    }

    #[test]
    fn confusion_missing_and_extra() {
        let (truth, preds) = first_classification(0);
        let mut list = preds.predictions().to_vec();
        list.pop();
        list.push(Prediction {
            image_path: "stray.png".into(),
            predicted_label: "Normal".into(),
            scores: None,
        });
        let preds = PredictionSet::new(preds.class_names().to_vec(), list).unwrap();
        let err = confusion_matrix(&truth, &preds).unwrap_err().to_string();
        assert!(
            err.contains("Normal/149.png") && err.contains("stray.png"),
            "{err}"
        );
    }

    #[test]
    fn binary_count_examples() {
        let cm = ConfusionMatrix::new(
            names(&["Pothole", "Normal"]),
            vec![vec![150, 0], vec![6, 144]],
        )
        .unwrap();
        assert_eq!(binary_counts(&cm, "Pothole").unwrap(), bc(150, 144, 6, 0));

        let ident = ConfusionMatrix::new(
            names(&["A", "B", "C"]),
            vec![vec![50, 0, 0], vec![0, 50, 0], vec![0, 0, 50]],
        )
        .unwrap();
        for c in ["A", "B", "C"] {
            assert_eq!(binary_counts(&ident, c).unwrap(), bc(50, 100, 0, 0));
        }

        let resnet18 = ConfusionMatrix::new(
            names(&["Large", "Normal", "Small"]),
            vec![vec![50, 0, 0], vec![15, 35, 0], vec![25, 0, 25]],
        )
        .unwrap();
        assert_eq!(
            binary_counts(&resnet18, "Large").unwrap(),
            bc(50, 60, 40, 0)
        );
        assert!(matches!(
            binary_counts(&resnet18, "Medium"),
            Err(Error::UnknownClass(_))
        ));
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&bc(150, 144, 6, 0), "MobileNet").unwrap();
        assert!(close(m.accuracy, 0.98, 5e-5));
        assert!(close(m.precision, 0.9615, 5e-5));
        assert!(close(m.recall, 1.0, 0.0));
        assert!(close(m.f1, 0.9804, 5e-5));

        let m = metrics(&bc(150, 143, 7, 0), "ResNet50").unwrap();
        assert!(close(m.accuracy, 0.9767, 5e-5));
        assert!(close(m.precision, 0.9554, 5e-5));
        assert!(close(m.f1, 0.9772, 5e-5));

        let m = metrics(&bc(0, 10, 0, 0), "none").unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.accuracy, 1.0);

        let m = metrics(&bc(50, 60, 40, 0), "Large").unwrap();
        assert!(close(m.accuracy, 0.7333, 5e-5));
        assert!(close(m.precision, 0.5556, 5e-5));
        assert!(close(m.f1, 0.7143, 5e-5));

        assert!(metrics(&bc(0, 0, 0, 0), "x").is_err());
    }

    #[test]
    fn one_vs_rest_examples() {
        let cm = ConfusionMatrix::new(
            names(&["Large", "Normal", "Small"]),
            vec![vec![50, 0, 0], vec![0, 50, 0], vec![2, 0, 48]],
        )
        .unwrap();
        let rows = one_vs_rest_report(&cm).unwrap();
        let expect = [
            (0.9867, 0.9615, 1.0, 0.9804),
            (1.0, 1.0, 1.0, 1.0),
            (0.9867, 1.0, 0.96, 0.9796),
        ];
        for (r, e) in rows.iter().zip(expect) {
            assert!(close(r.accuracy, e.0, 5e-5), "{r:?}");
            assert!(close(r.precision, e.1, 5e-5), "{r:?}");
            assert!(close(r.recall, e.2, 5e-5), "{r:?}");
            assert!(close(r.f1, e.3, 5e-5), "{r:?}");
        }

        let single = ConfusionMatrix::new(names(&["A"]), vec![vec![3]]).unwrap();
        assert!(one_vs_rest_report(&single).is_err());
    }

    #[test]
    fn render_formats() {
        let row = metrics(&bc(150, 144, 6, 0), "MobileNet v2").unwrap();
        let csv = render_report(
            std::slice::from_ref(&row),
            ReportFormat::Csv,
            ReportLayout::Standard,
        )
        .unwrap();
        assert_eq!(
            csv,
            "class,accuracy,precision,recall,f1\nMobileNet v2,0.9800,0.9615,1.0000,0.9804\n"
        );
        let swapped = render_report(
            std::slice::from_ref(&row),
            ReportFormat::Csv,
            ReportLayout::PaperTable3,
        )
        .unwrap();
        assert_eq!(
            swapped,
            "class,accuracy,precision,f1_score,recall\nMobileNet v2,0.9800,1.0000,0.9804,0.9615\n"
        );
        let text = render_report(&[row], ReportFormat::Text, ReportLayout::Standard).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("class"));
        assert!(render_report(&[], ReportFormat::Csv, ReportLayout::Standard).is_err());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let cm = ConfusionMatrix::new(names(&["A", "B"]), vec![vec![3, 1], vec![0, 4]]).unwrap();
        let mut buf = Vec::new();
        cm.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "true\\predicted,A,B\nA,3,1\nB,0,4\n"
        );
        assert_eq!(ConfusionMatrix::read_csv(&buf[..]).unwrap(), cm);
        assert!(ConfusionMatrix::read_csv(&b"x,A,B\nB,1,2\nA,3,4\n"[..]).is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = ConfusionMatrix> {
        (2usize..5).prop_flat_map(|k| {
            proptest::collection::vec(proptest::collection::vec(0u64..20, k), k).prop_map(
                move |counts| {
                    let names = (0..k).map(|i| format!("c{i}")).collect();
                    ConfusionMatrix::new(names, counts).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn report_invariants(cm in arb_matrix()) {
            prop_assume!(cm.total() > 0);
            let rows = one_vs_rest_report(&cm).unwrap();
            let mut positives = 0;
            for (i, (row, name)) in rows.iter().zip(cm.class_names()).enumerate() {
                let c = binary_counts(&cm, name).unwrap();
                prop_assert_eq!(c.tp + c.fn_, cm.counts()[i].iter().sum::<u64>());
                prop_assert_eq!(c.total(), cm.total());
                positives += c.tp + c.fn_;
                for v in [row.accuracy, row.precision, row.recall, row.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                if row.precision + row.recall > 0.0 {
                    prop_assert!(row.f1 >= row.precision.min(row.recall) - 1e-12);
                    prop_assert!(row.f1 <= row.precision.max(row.recall) + 1e-12);
                } else {
                    prop_assert_eq!(row.f1, 0.0);
                }
            }
            prop_assert_eq!(positives, cm.total());
        }

        #[test]
        fn permutation_equivariance(cm in arb_matrix(), seed in any::<u64>()) {
            prop_assume!(cm.total() > 0);
            let k = cm.class_names().len();
            let mut perm: Vec<usize> = (0..k).collect();
            crate::rng::XorShift64Star::new(seed).shuffle(&mut perm);
            let names = perm.iter().map(|&i| cm.class_names()[i].clone()).collect();
            let counts = perm
                .iter()
                .map(|&i| perm.iter().map(|&j| cm.counts()[i][j]).collect())
                .collect();
            let permuted = ConfusionMatrix::new(names, counts).unwrap();
            let base = one_vs_rest_report(&cm).unwrap();
            let rows = one_vs_rest_report(&permuted).unwrap();
            for (r, &i) in rows.iter().zip(&perm) {
                prop_assert_eq!(r, &base[i]);
            }
            prop_assert_eq!(cm.accuracy(), permuted.accuracy());
        }
    }
}
