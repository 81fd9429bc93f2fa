//! CSV rows with a deterministic order.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{CliError, CliResult};

pub const HEADER: &str = "scenario,command,index,p,metric,value";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub command: String,
    pub index: usize,
    pub p: Option<f64>,
    pub metric: String,
    pub value: f64,
}

impl ReportRow {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.scenario
            .cmp(&other.scenario)
            .then_with(|| self.command.cmp(&other.command))
            .then_with(|| self.index.cmp(&other.index))
            .then_with(|| self.metric.cmp(&other.metric))
            .then_with(|| {
                let a = self.p.unwrap_or(f64::NEG_INFINITY);
                let b = other.p.unwrap_or(f64::NEG_INFINITY);
                a.total_cmp(&b)
            })
    }

    pub fn to_csv_line(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let p = self.p.map(|p| p.to_string()).unwrap_or_default();
        w.write_record([
            self.scenario.as_str(),
            self.command.as_str(),
            &self.index.to_string(),
            &p,
            self.metric.as_str(),
            &self.value.to_string(),
        ])
        .expect("in-memory write");
        let bytes = w.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("utf-8 fields").trim_end().to_string()
    }
}

/// Rows collected for one scenario and command.
#[derive(Debug, Clone)]
pub struct Report {
    scenario: String,
    command: String,
    rows: Vec<ReportRow>,
    failures: Vec<(String, ReportRow)>,
}

impl Report {
    pub fn new(scenario: impl Into<String>, command: impl Into<String>) -> Self {
        Self {
            scenario: scenario.into(),
            command: command.into(),
            rows: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn push(&mut self, index: usize, p: Option<f64>, metric: impl Into<String>, value: f64) -> &ReportRow {
        self.rows.push(ReportRow {
            scenario: self.scenario.clone(),
            command: self.command.clone(),
            index,
            p,
            metric: metric.into(),
            value,
        });
        self.rows.last().expect("just pushed")
    }

    /// Pushes a row and records it as a failure when `ok` is false.
    pub fn check(&mut self, index: usize, metric: impl Into<String>, value: f64, ok: bool, message: impl Into<String>) {
        let row = self.push(index, None, metric, value).clone();
        if !ok {
            self.failures.push((message.into(), row));
        }
    }

    pub fn failures(&self) -> &[(String, ReportRow)] {
        &self.failures
    }

    /// Appends another report's rows and failures.
    pub fn merge(&mut self, other: Report) {
        self.rows.extend(other.rows);
        self.failures.extend(other.failures);
    }

    /// The first failure as an error, if any.
    pub fn verdict(&self) -> CliResult<()> {
        match self.failures.first() {
            None => Ok(()),
            Some((message, row)) => Err(CliError::Property {
                message: message.clone(),
                row: Some(row.clone()),
            }),
        }
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

}

/// Sorts rows and renders them with the header. Non-finite values are rejected.
pub fn render_csv(rows: &[ReportRow]) -> CliResult<String> {
    let mut sorted: Vec<&ReportRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.key_cmp(b));
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for r in sorted {
        if !r.value.is_finite() {
            return Err(CliError::Property {
                message: format!("non-finite value for metric `{}`", r.metric),
                row: Some(r.clone()),
            });
        }
        writeln!(out, "{}", r.to_csv_line()).expect("string write");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_sorted_and_blank_p() {
        let mut r = Report::new("s", "solve");
        r.push(1, Some(2.0), "b", 0.5);
        r.push(0, None, "a", 1.0);
        r.push(1, Some(1.5), "b", 0.25);
        let csv = render_csv(r.rows()).unwrap();
        assert_eq!(
            csv,
            "scenario,command,index,p,metric,value\ns,solve,0,,a,1\ns,solve,1,1.5,b,0.25\ns,solve,1,2,b,0.5\n"
        );
    }

    #[test]
    fn non_finite_rejected() {
        let mut r = Report::new("s", "solve");
        r.push(0, None, "a", f64::INFINITY);
        assert!(render_csv(r.rows()).is_err());
    }

    #[test]
    fn quoting_of_awkward_ids() {
        let mut r = Report::new("a,b", "solve");
        r.push(0, None, "m", 1.0);
        assert!(render_csv(r.rows()).unwrap().contains("\"a,b\",solve"));
    }
}
