//! Result records and their CSV/JSON encodings.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const CSV_HEADER: [&str; 7] = ["scenario", "param", "value", "metric", "result", "trials", "seconds"];

/// One `(parameter point, metric)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub scenario: String,
    /// Name of the swept axis, optionally prefixed by fixed context
    /// (`n_bs=256;fc_hz`).
    pub param: String,
    pub value: f64,
    pub metric: String,
    pub result: f64,
    pub trials: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn record_order(a: &ResultRecord, b: &ResultRecord) -> Ordering {
    a.param
        .cmp(&b.param)
        .then(a.value.total_cmp(&b.value))
        .then(a.metric.cmp(&b.metric))
        .then(a.scenario.cmp(&b.scenario))
        .then(a.result.total_cmp(&b.result))
}

pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(record_order);
}

pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &sorted {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Output(e.to_string()))
}

pub fn write_json<W: Write>(records: &[ResultRecord], mut out: W) -> Result<()> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    serde_json::to_writer_pretty(&mut out, &sorted)?;
    out.write_all(b"\n").map_err(|e| HarnessError::Output(e.to_string()))
}

pub fn write_results<W: Write>(records: &[ResultRecord], out: W, format: Format) -> Result<()> {
    match format {
        Format::Csv => write_csv(records, out),
        Format::Json => write_json(records, out),
    }
}

/// Writes `records` to `path`, sorted by parameter, value and metric.
pub fn emit_results(records: &[ResultRecord], path: &Path, format: Format) -> Result<()> {
    let mut buf = Vec::new();
    write_results(records, &mut buf, format)?;
    std::fs::write(path, buf).map_err(|e| HarnessError::io(path, e))
}

pub fn parse_results_csv(bytes: &[u8]) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Input(format!(
            "expected header `{}`, got `{}`",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize().map(|r| r.map_err(HarnessError::from)).collect()
}

pub fn parse_results_json(bytes: &[u8]) -> Result<Vec<ResultRecord>> {
    Ok(serde_json::from_slice(bytes)?)
}

pub fn read_results(path: &Path, format: Format) -> Result<Vec<ResultRecord>> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    match format {
        Format::Csv => parse_results_csv(&bytes),
        Format::Json => parse_results_json(&bytes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(param: &str, value: f64, metric: &str) -> ResultRecord {
        ResultRecord {
            scenario: "ce-oversampling".into(),
            param: param.into(),
            value,
            metric: metric.into(),
            result: -12.25,
            trials: 3,
            seconds: 0.5,
        }
    }

    #[test]
    fn empty_is_header_only() {
        let mut out = Vec::new();
        write_csv(&[], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "scenario,param,value,metric,result,trials,seconds\n");
        assert!(parse_results_csv(b"scenario,param,value,metric,result,trials,seconds\n").unwrap().is_empty());
    }

    #[test]
    fn output_is_sorted() {
        let recs = vec![rec("beta", 2.0, "a"), rec("beta", 1.0, "b"), rec("beta", 1.0, "a")];
        let mut out = Vec::new();
        write_csv(&recs, &mut out).unwrap();
        let back = parse_results_csv(&out).unwrap();
        let keys: Vec<(f64, &str)> = back.iter().map(|r| (r.value, r.metric.as_str())).collect();
        assert_eq!(keys, vec![(1.0, "a"), (1.0, "b"), (2.0, "a")]);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(parse_results_csv(b"a,b\n1,2\n").is_err());
    }
}
