use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::BinaryMask;

pub const DEFAULT_BETA_SQ: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn check_domain(g: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if !g.same_domain(b) {
        return Err(Error::DomainMismatch(g.width(), g.height(), b.width(), b.height()));
    }
    Ok(())
}

/// Pixel counts of `b` against ground truth `g`.
pub fn confusion(g: &BinaryMask, b: &BinaryMask) -> Result<Confusion> {
    check_domain(g, b)?;
    let mut c = Confusion::default();
    for (&gv, &bv) in g.as_slice().iter().zip(b.as_slice()) {
        match (gv, bv) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            _ => {}
        }
    }
    Ok(c)
}

/// Precision and recall, each 0 when its denominator is 0.
pub fn precision_recall(c: &Confusion) -> (f64, f64) {
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    (ratio(c.tp, c.fp), ratio(c.tp, c.fn_))
}

/// `(1 + b2) P R / (b2 P + R)`, 0 when the denominator is 0.
pub fn f_beta(precision: f64, recall: f64, beta_sq: f64) -> f64 {
    let den = beta_sq * precision + recall;
    if den == 0.0 {
        return 0.0;
    }
    (1.0 + beta_sq) * precision * recall / den
}

pub fn mae(g: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_domain(g, b)?;
    if g.is_empty() {
        return Err(Error::EmptyInput("empty masks".into()));
    }
    let diff = g.as_slice().iter().zip(b.as_slice()).filter(|(a, b)| a != b).count();
    Ok(diff as f64 / g.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub image_id: String,
    #[serde(flatten)]
    pub counts: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub mae: f64,
}

pub fn evaluate(image_id: &str, g: &BinaryMask, b: &BinaryMask, beta_sq: f64) -> Result<EvalResult> {
    let counts = confusion(g, b)?;
    let (precision, recall) = precision_recall(&counts);
    Ok(EvalResult {
        image_id: image_id.to_string(),
        counts,
        precision,
        recall,
        f_beta: f_beta(precision, recall, beta_sq),
        mae: mae(g, b)?,
    })
}

/// Mean and population standard deviation of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MetricSummary { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub beta_sq: f64,
    pub rows: Vec<EvalResult>,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f_beta: MetricSummary,
    pub mae: MetricSummary,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    image_id: &'a str,
    precision: f64,
    recall: f64,
    f_beta: f64,
    mae: f64,
}

impl EvalReport {
    fn from_rows(rows: Vec<EvalResult>, beta_sq: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("no (ground truth, prediction) pairs".into()));
        }
        let col = |f: fn(&EvalResult) -> f64| MetricSummary::of(rows.iter().map(f));
        Ok(EvalReport {
            beta_sq,
            precision: col(|r| r.precision),
            recall: col(|r| r.recall),
            f_beta: col(|r| r.f_beta),
            mae: col(|r| r.mae),
            rows,
        })
    }

    /// `image_id,precision,recall,f_beta,mae`, one line per image.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(CsvRow {
                image_id: &r.image_id,
                precision: r.precision,
                recall: r.recall,
                f_beta: r.f_beta,
                mae: r.mae,
            })
            .map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Scores every `(image id, ground truth, prediction)` triple.
pub fn evaluate_set(pairs: &[(&str, &BinaryMask, &BinaryMask)], beta_sq: f64) -> Result<EvalReport> {
    let rows = pairs
        .iter()
        .map(|(id, g, b)| evaluate(id, g, b, beta_sq))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_rows(rows, beta_sq)
}
