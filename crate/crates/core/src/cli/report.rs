use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Vacuous,
    Error,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Vacuous => "VACUOUS",
            Status::Error => "ERROR",
        })
    }
}

/// One check. Non-finite numbers are stored as `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub name: String,
    pub status: Status,
    pub residual: Option<f64>,
    pub tolerance: Option<f64>,
    pub details: String,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Record {
    pub fn new(name: impl Into<String>, status: Status, residual: f64, tolerance: f64, details: impl Into<String>) -> Self {
        Record { name: name.into(), status, residual: finite(residual), tolerance: finite(tolerance), details: details.into() }
    }

    /// PASS iff `value <= tol`.
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64, details: impl Into<String>) -> Self {
        let status = if value <= tol { Status::Pass } else { Status::Fail };
        Record::new(name, status, value, tol, details)
    }

    /// PASS iff `value >= bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64, details: impl Into<String>) -> Self {
        let status = if value >= bound { Status::Pass } else { Status::Fail };
        Record::new(name, status, value, bound, details)
    }

    pub fn error(name: impl Into<String>, err: impl fmt::Display) -> Self {
        Record { name: name.into(), status: Status::Error, residual: None, tolerance: None, details: err.to_string() }
    }

    pub fn vacuous(name: impl Into<String>, details: impl Into<String>) -> Self {
        Record { name: name.into(), status: Status::Vacuous, residual: None, tolerance: None, details: details.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub instance: String,
    pub status: Status,
    pub records: Vec<Record>,
    /// Seconds.
    pub wall_time: f64,
}

impl Report {
    pub fn new(command: &str, instance: &str, records: Vec<Record>, wall_time: f64) -> Self {
        let status = overall(&records);
        Report { command: command.into(), instance: instance.into(), status, records, wall_time }
    }

    /// 0 on PASS, 1 on FAIL, 2 on ERROR.
    pub fn exit_code(&self) -> u8 {
        match self.status {
            Status::Pass | Status::Vacuous => 0,
            Status::Fail => 1,
            Status::Error => 2,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn record(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }
}

/// ERROR if any record errored, else FAIL if any failed, else PASS.
pub fn overall(records: &[Record]) -> Status {
    if records.iter().any(|r| r.status == Status::Error) {
        Status::Error
    } else if records.iter().any(|r| r.status == Status::Fail) {
        Status::Fail
    } else {
        Status::Pass
    }
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3e}"))
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}: {} ({:.2} s)", self.command, self.instance, self.status, self.wall_time)?;
        let width = self.records.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        writeln!(f, "  {:<7}  {:<width$}  {:>10}  {:>10}  details", "status", "name", "residual", "tol")?;
        for r in &self.records {
            writeln!(
                f,
                "  {:<7}  {:<width$}  {:>10}  {:>10}  {}",
                r.status.to_string(),
                r.name,
                num(r.residual),
                num(r.tolerance),
                r.details
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overall_precedence() {
        let p = Record::at_most("a", 1.0, 2.0, "");
        let f = Record::at_least("b", 1.0, 2.0, "");
        let e = Record::error("c", "boom");
        let v = Record::vacuous("d", "");
        assert_eq!(overall(&[p.clone(), v.clone()]), Status::Pass);
        assert_eq!(overall(&[p.clone(), f.clone()]), Status::Fail);
        assert_eq!(overall(&[f, e, p]), Status::Error);
        assert_eq!(Report::new("check", "x", vec![v], 0.0).exit_code(), 0);
    }

    #[test]
    fn non_finite_values_become_null() {
        let r = Record::at_most("nan", f64::NAN, 1.0, "");
        assert_eq!(r.status, Status::Fail);
        assert_eq!(r.residual, None);
        let rep = Report::new("trace", "x", vec![r], 0.5);
        assert!(rep.to_json().contains("\"residual\":null"));
        assert!(rep.to_string().contains("FAIL"));
    }

    fn record() -> impl Strategy<Value = Record> {
        (
            "[a-z@0-9]{1,8}",
            prop_oneof![Just(Status::Pass), Just(Status::Fail), Just(Status::Vacuous), Just(Status::Error)],
            proptest::option::of(any::<f64>().prop_filter("finite", |v| v.is_finite())),
            proptest::option::of(1e-300f64..1e300),
            ".{0,20}",
        )
            .prop_map(|(name, status, residual, tolerance, details)| Record { name, status, residual, tolerance, details })
    }

    proptest! {
        #[test]
        fn json_round_trip(records in proptest::collection::vec(record(), 0..6), t in 0.0f64..1e4) {
            let rep = Report::new("verify", "inst", records, t);
            let back = Report::from_json(&rep.to_json()).unwrap();
            prop_assert_eq!(back, rep);
        }
    }
}
