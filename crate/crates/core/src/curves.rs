//! Learning-curve files.
//!
//! Per-seed curves are CSV with header `step,metric,value,seed`, rows in
//! emission order (non-decreasing step). Aggregates are CSV with header
//! `step,metric,mean,stderr,n`, one row per metric and step, where `stderr`
//! is the sample standard deviation over seeds divided by `sqrt(n)`.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::trainer::{Metric, MetricsRecord};

pub const CURVE_HEADER: [&str; 4] = ["step", "metric", "value", "seed"];
pub const AGGREGATE_HEADER: [&str; 5] = ["step", "metric", "mean", "stderr", "n"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub step: u64,
    pub metric: Metric,
    pub value: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub step: u64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::format("curve file", format!("{other:?}")),
    }
}

/// Streams curve rows to `out`.
pub struct CurveWriter<W: Write> {
    inner: csv::Writer<W>,
    seed: u64,
}

impl<W: Write> CurveWriter<W> {
    pub fn new(out: W, seed: u64) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(CURVE_HEADER).map_err(csv_error)?;
        Ok(Self { inner, seed })
    }

    pub fn write(&mut self, r: &MetricsRecord) -> Result<()> {
        self.inner
            .write_record([
                r.step.to_string(),
                r.metric.as_str().to_string(),
                r.value.to_string(),
                self.seed.to_string(),
            ])
            .map_err(csv_error)
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str], what: &'static str) -> Result<()> {
    let header = reader.headers().map_err(csv_error)?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::format(what, format!("expected header {}", expected.join(","))));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, what: &'static str) -> Result<T> {
    record
        .get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(what, format!("bad field {i} on line {:?}", record.position().map(|p| p.line()))))
}

/// Parses a per-seed curve file.
pub fn parse_curve(text: &str) -> Result<Vec<CurveRow>> {
    const WHAT: &str = "curve file";
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    check_header(&mut reader, &CURVE_HEADER, WHAT)?;
    let mut rows: Vec<CurveRow> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        if record.len() != CURVE_HEADER.len() {
            return Err(Error::format(WHAT, "wrong number of fields"));
        }
        let metric = record
            .get(1)
            .and_then(Metric::parse)
            .ok_or_else(|| Error::format(WHAT, "unknown metric"))?;
        let row = CurveRow {
            step: field(&record, 0, WHAT)?,
            metric,
            value: field(&record, 2, WHAT)?,
            seed: field(&record, 3, WHAT)?,
        };
        if rows.last().is_some_and(|prev| prev.step > row.step) {
            return Err(Error::format(WHAT, "rows are not ordered by step"));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Mean and standard error per `(metric, step)` across runs, for the given
/// metrics. Rows are ordered by metric, then step.
pub fn aggregate(runs: &[Vec<CurveRow>], metrics: &[Metric]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Metric, u64), Vec<f64>> = BTreeMap::new();
    for run in runs {
        for row in run.iter().filter(|r| metrics.contains(&r.metric)) {
            groups.entry((row.metric, row.step)).or_default().push(row.value);
        }
    }
    groups
        .into_iter()
        .map(|((metric, step), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                step,
                metric: metric.as_str().to_string(),
                mean,
                stderr,
                n,
            }
        })
        .collect()
}

pub fn write_aggregate<W: Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.metric.clone(),
            r.mean.to_string(),
            r.stderr.to_string(),
            r.n.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_aggregate(text: &str) -> Result<Vec<AggregateRow>> {
    const WHAT: &str = "aggregate file";
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    check_header(&mut reader, &AGGREGATE_HEADER, WHAT)?;
    reader
        .records()
        .map(|record| {
            let record = record.map_err(csv_error)?;
            if record.len() != AGGREGATE_HEADER.len() {
                return Err(Error::format(WHAT, "wrong number of fields"));
            }
            Ok(AggregateRow {
                step: field(&record, 0, WHAT)?,
                metric: record[1].to_string(),
                mean: field(&record, 2, WHAT)?,
                stderr: field(&record, 3, WHAT)?,
                n: field(&record, 4, WHAT)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, metric: Metric, value: f64) -> MetricsRecord {
        MetricsRecord { step, metric, value }
    }

    #[test]
    fn curve_round_trip() {
        let mut w = CurveWriter::new(Vec::new(), 3).unwrap();
        w.write(&rec(10, Metric::TrainReturn, 12.5)).unwrap();
        w.write(&rec(2000, Metric::EvalReturn, 0.1 + 0.2)).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert!(text.starts_with("step,metric,value,seed\n10,train_return,12.5,3\n"));
        let rows = parse_curve(&text).unwrap();
        assert_eq!(rows[1].value, 0.1 + 0.2);
        assert_eq!(rows[1].seed, 3);
    }

    #[test]
    fn aggregate_mean_and_stderr() {
        let run = |seed, v: f64| {
            vec![CurveRow { step: 2000, metric: Metric::EvalReturn, value: v, seed }]
        };
        let rows = aggregate(&[run(0, 1.0), run(1, 3.0)], &[Metric::EvalReturn]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean, 2.0);
        assert!((rows[0].stderr - 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        write_aggregate(&mut buf, &rows).unwrap();
        assert_eq!(parse_aggregate(std::str::from_utf8(&buf).unwrap()).unwrap(), rows);
    }

    #[test]
    fn rejects_bad_curves() {
        assert!(parse_curve("").is_err());
        assert!(parse_curve("a,b,c,d\n").is_err());
        assert!(parse_curve("step,metric,value,seed\n1,bogus,1,0\n").is_err());
        assert!(parse_curve("step,metric,value,seed\n5,eval_return,1,0\n4,eval_return,1,0\n").is_err());
        assert!(parse_curve("step,metric,value,seed\n-1,eval_return,1,0\n").is_err());
        assert!(parse_curve("step,metric,value,seed\n1,eval_return,1\n").is_err());
    }
}
