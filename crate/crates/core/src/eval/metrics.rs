use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flag set when the truth has zero variance and R² is undefined.
pub const FLAG_R2_UNDEFINED: &str = "r2_undefined";

pub const REPORT_HEADER: [&str; 13] = [
    "model",
    "dataset",
    "axis",
    "point",
    "mask_kind",
    "mask_ratio",
    "n",
    "r2",
    "literal_r2",
    "rmse",
    "mae",
    "bias",
    "flags",
];

/// Accuracy of a set of predictions against reference values, with labels
/// saying where the numbers came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub axis: String,
    pub point: String,
    pub mask_kind: String,
    pub mask_ratio: Option<f64>,
    pub n: usize,
    /// `1 - SSres / SStot`.
    pub r2: f64,
    /// `1 - SS(pred about its mean) / SStot`, the variance-ratio form.
    pub literal_r2: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Mean of `pred - truth`.
    pub bias: f64,
    pub flags: Vec<String>,
}

impl EvalReport {
    pub fn labelled(mut self, model: impl Into<String>, dataset: impl Into<String>) -> Self {
        self.model = model.into();
        self.dataset = dataset.into();
        self
    }

    pub fn at(mut self, axis: impl Into<String>, point: impl Into<String>) -> Self {
        self.axis = axis.into();
        self.point = point.into();
        self
    }

    pub fn masked(mut self, kind: impl Into<String>, ratio: f64) -> Self {
        self.mask_kind = kind.into();
        self.mask_ratio = Some(ratio);
        self
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

/// R², RMSE, MAE and bias of `pred` against `truth`.
pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} reference values",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("no samples to score".into()));
    }
    let n = pred.len() as f64;
    let mean_truth = truth.iter().sum::<f64>() / n;
    let mean_pred = pred.iter().sum::<f64>() / n;
    let (mut sse, mut sae, mut se, mut sst, mut ssp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(truth) {
        let e = p - t;
        sse += e * e;
        sae += e.abs();
        se += e;
        sst += (t - mean_truth) * (t - mean_truth);
        ssp += (p - mean_pred) * (p - mean_pred);
    }
    let mae = sae / n;
    // sqrt(mean e^2) >= mean |e| holds exactly; rounding may break it by an ulp
    let rmse = (sse / n).sqrt().max(mae);
    let mut flags = Vec::new();
    let (r2, literal_r2) = if sst > 0.0 {
        (1.0 - sse / sst, 1.0 - ssp / sst)
    } else {
        flags.push(FLAG_R2_UNDEFINED.to_string());
        (f64::NAN, f64::NAN)
    };
    Ok(EvalReport {
        model: String::new(),
        dataset: String::new(),
        axis: String::new(),
        point: String::new(),
        mask_kind: String::new(),
        mask_ratio: None,
        n: pred.len(),
        r2,
        literal_r2,
        rmse,
        mae,
        bias: se / n,
        flags,
    })
}

fn number(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

fn parse_number(field: &str, column: &str) -> Result<f64> {
    if field.is_empty() {
        return Ok(f64::NAN);
    }
    field
        .parse()
        .map_err(|_| Error::Schema(format!("column '{column}': '{field}' is not a number")))
}

/// Writes reports as CSV with [`REPORT_HEADER`]. NaN becomes an empty field
/// and flags are joined with `;`.
pub fn write_reports<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        write_row(&mut w, r)?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

/// Streams reports one row at a time; the header is written on creation.
pub struct ReportWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(REPORT_HEADER)?;
        inner.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(ReportWriter { inner })
    }

    pub fn write(&mut self, report: &EvalReport) -> Result<()> {
        write_row(&mut self.inner, report)?;
        self.inner.flush().map_err(|e| Error::io("<report>", e))
    }
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, r: &EvalReport) -> Result<()> {
    w.write_record([
        r.model.clone(),
        r.dataset.clone(),
        r.axis.clone(),
        r.point.clone(),
        r.mask_kind.clone(),
        r.mask_ratio.map_or(String::new(), number),
        r.n.to_string(),
        number(r.r2),
        number(r.literal_r2),
        number(r.rmse),
        number(r.mae),
        number(r.bias),
        r.flags.join(";"),
    ])?;
    Ok(())
}

pub fn read_reports<R: Read>(input: R) -> Result<Vec<EvalReport>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != REPORT_HEADER {
        return Err(Error::Schema(format!(
            "unexpected report header {header:?}"
        )));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        out.push(EvalReport {
            model: f(0).into(),
            dataset: f(1).into(),
            axis: f(2).into(),
            point: f(3).into(),
            mask_kind: f(4).into(),
            mask_ratio: Some(parse_number(f(5), "mask_ratio")?).filter(|v| !v.is_nan()),
            n: f(6)
                .parse()
                .map_err(|_| Error::Schema(format!("column 'n': '{}' is not a count", f(6))))?,
            r2: parse_number(f(7), "r2")?,
            literal_r2: parse_number(f(8), "literal_r2")?,
            rmse: parse_number(f(9), "rmse")?,
            mae: parse_number(f(10), "mae")?,
            bias: parse_number(f(11), "bias")?,
            flags: f(12)
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok(out)
}
