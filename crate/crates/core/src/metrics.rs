//! Confusion-matrix statistics and class-map export.

use std::fmt::Write as _;
use std::path::Path;

use crate::binio::{read_file, write_file};
pub use crate::data::{LAND, OCEAN};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsBundle {
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
    pub positive_class: usize,
    /// `None` when the denominator is empty.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub overall_accuracy: f64,
}

impl MetricsBundle {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// One `name value` line per metric; undefined values print as `n/a`.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (name, v) in self.named() {
            let _ = writeln!(out, "{name} {}", fmt_fraction(v));
        }
        out
    }

    /// Percentages with four significant digits, e.g. `precision 90.54%`.
    pub fn summary(&self) -> String {
        self.named()
            .iter()
            .map(|(name, v)| match v {
                Some(v) => format!("{name} {}%", sig4(100.0 * v)),
                None => format!("{name} n/a"),
            })
            .collect::<Vec<_>>()
            .join("  ")
    }

    fn named(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("overall_accuracy", Some(self.overall_accuracy)),
        ]
    }
}

fn fmt_fraction(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Formats with four significant digits (no exponent for the 0.1%–100% range).
pub fn sig4(v: f64) -> String {
    if v == 0.0 {
        return "0.000".into();
    }
    let digits = v.abs().log10().floor() as i32;
    let decimals = (3 - digits).max(0) as usize;
    format!("{v:.decimals$}")
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
    positive_class: usize,
) -> Result<MetricsBundle> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Shape("no predictions to score".into()));
    }
    if positive_class >= num_classes {
        return Err(Error::Shape(format!(
            "positive class {positive_class} with {num_classes} classes"
        )));
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in predictions.iter().zip(labels) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::Shape(format!(
                "class index ({t}, {p}) outside 0..{num_classes}"
            )));
        }
        confusion[t][p] += 1;
    }
    let total = predictions.len() as u64;
    let correct: u64 = (0..num_classes).map(|k| confusion[k][k]).sum();
    let tp = confusion[positive_class][positive_class];
    let predicted_pos: u64 = (0..num_classes).map(|t| confusion[t][positive_class]).sum();
    let actual_pos: u64 = confusion[positive_class].iter().sum();
    let precision = ratio(tp, predicted_pos);
    let recall = ratio(tp, actual_pos);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(MetricsBundle {
        confusion,
        positive_class,
        precision,
        recall,
        f1,
        overall_accuracy: correct as f64 / total as f64,
    })
}

fn gray_level(class: usize, num_classes: usize) -> u8 {
    if num_classes <= 1 {
        return 0;
    }
    (255.0 * class as f64 / (num_classes - 1) as f64).round() as u8
}

/// Encodes a `rows × cols` class grid as a binary PGM (P5), one pixel per patch.
pub fn class_map_pgm(
    predictions: &[usize],
    rows: usize,
    cols: usize,
    num_classes: usize,
) -> Result<Vec<u8>> {
    if predictions.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} predictions for a {rows}x{cols} patch grid",
            predictions.len()
        )));
    }
    if let Some(bad) = predictions.iter().find(|&&k| k >= num_classes) {
        return Err(Error::Shape(format!(
            "class {bad} outside 0..{num_classes}"
        )));
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(predictions.iter().map(|&k| gray_level(k, num_classes)));
    Ok(out)
}

pub fn export_class_map(
    predictions: &[usize],
    rows: usize,
    cols: usize,
    num_classes: usize,
    path: &Path,
) -> Result<()> {
    write_file(path, &class_map_pgm(predictions, rows, cols, num_classes)?)
}

/// A decoded 8-bit grayscale PGM.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Maps gray levels back to class indices.
    pub fn classes(&self, num_classes: usize) -> Result<Vec<usize>> {
        let levels: Vec<u8> = (0..num_classes)
            .map(|k| gray_level(k, num_classes))
            .collect();
        self.pixels
            .iter()
            .enumerate()
            .map(|(i, p)| {
                levels
                    .iter()
                    .position(|l| l == p)
                    .ok_or_else(|| Error::Format {
                        offset: i as u64,
                        msg: format!("gray level {p} is not a class level"),
                    })
            })
            .collect()
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format {
                offset: pos as u64,
                msg: "truncated PGM header".into(),
            });
        }
        fields.push((start, std::str::from_utf8(&bytes[start..pos]).unwrap_or("")));
    }
    if fields[0].1 != "P5" {
        return Err(Error::Format {
            offset: 0,
            msg: format!("expected P5, got {:?}", fields[0].1),
        });
    }
    let num = |i: usize| -> Result<usize> {
        fields[i].1.parse().map_err(|_| Error::Format {
            offset: fields[i].0 as u64,
            msg: format!("bad PGM header field {:?}", fields[i].1),
        })
    };
    let (cols, rows, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval != 255 {
        return Err(Error::Format {
            offset: fields[3].0 as u64,
            msg: format!("only 8-bit PGM supported, maxval {maxval}"),
        });
    }
    pos += 1;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != rows * cols {
        return Err(Error::Format {
            offset: (pos + body.len().min(rows * cols)) as u64,
            msg: format!("expected {} pixels, found {}", rows * cols, body.len()),
        });
    }
    Ok(GrayImage {
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    parse_pgm(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(tp: usize, fp: usize, fneg: usize, tn: usize) -> (Vec<usize>, Vec<usize>) {
        let mut p = Vec::new();
        let mut t = Vec::new();
        for (n, pred, truth) in [(tp, 1, 1), (fp, 1, 0), (fneg, 0, 1), (tn, 0, 0)] {
            p.extend(std::iter::repeat_n(pred, n));
            t.extend(std::iter::repeat_n(truth, n));
        }
        (p, t)
    }

    #[test]
    fn direct_formulas() {
        let (p, t) = build(9, 1, 1, 9);
        let m = compute_metrics(&p, &t, 2, LAND).unwrap();
        for v in [
            m.precision.unwrap(),
            m.recall.unwrap(),
            m.f1.unwrap(),
            m.overall_accuracy,
        ] {
            assert!((v - 0.9).abs() < 1e-12);
        }
        assert_eq!(m.total(), 20);
        assert_eq!(m.confusion, vec![vec![9, 1], vec![1, 9]]);
    }

    #[test]
    fn perfect_and_undefined() {
        let (p, t) = build(5, 0, 0, 7);
        let m = compute_metrics(&p, &t, 2, LAND).unwrap();
        assert_eq!(
            (m.precision, m.recall, m.f1, m.overall_accuracy),
            (Some(1.0), Some(1.0), Some(1.0), 1.0)
        );

        let (p, t) = build(0, 0, 4, 6);
        let m = compute_metrics(&p, &t, 2, LAND).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);
        assert!(m.report().contains("precision n/a\n"));
        assert!(m.summary().contains("precision n/a"));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            compute_metrics(&[0], &[0, 1], 2, 1),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            compute_metrics(&[], &[], 2, 1),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            compute_metrics(&[3], &[0], 2, 1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn report_format() {
        let (p, t) = build(9, 1, 1, 9);
        let m = compute_metrics(&p, &t, 2, LAND).unwrap();
        assert_eq!(
            m.report(),
            "precision 0.9000\nrecall 0.9000\nf1 0.9000\noverall_accuracy 0.9000\n"
        );
        assert_eq!(sig4(90.5412), "90.54");
        assert_eq!(sig4(100.0), "100.0");
        assert_eq!(sig4(5.0), "5.000");
        assert!(m.summary().starts_with("precision 90.00%"));
    }

    #[test]
    fn pgm_levels() {
        let img = class_map_pgm(&[0, 0, 0, 0], 2, 2, 2).unwrap();
        assert_eq!(&img[img.len() - 4..], &[0, 0, 0, 0]);
        let img = class_map_pgm(&[0, 1, 1, 0], 2, 2, 2).unwrap();
        assert_eq!(&img[img.len() - 4..], &[0, 255, 255, 0]);
        let img = class_map_pgm(&[1], 1, 1, 3).unwrap();
        assert_eq!(*img.last().unwrap(), 128);
        assert!(matches!(
            class_map_pgm(&[0; 3], 2, 2, 2),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn pgm_parse_round_trip() {
        let preds = vec![0, 1, 2, 1, 0, 2];
        let bytes = class_map_pgm(&preds, 2, 3, 3).unwrap();
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!((img.rows, img.cols), (2, 3));
        assert_eq!(img.classes(3).unwrap(), preds);
        assert!(parse_pgm(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_pgm(b"P2\n1 1\n255\n\x00").is_err());
    }
}
