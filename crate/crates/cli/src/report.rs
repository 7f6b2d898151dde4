//! Line-delimited JSON reports with a fixed field order.

use serde_json::{Map, Value};

pub const SCHEMA: &str = "clonekit.report/1";

/// Process exit status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Refuted = 1,
    Undetermined = 2,
    InputError = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Success => "success",
            Status::Refuted => "refuted",
            Status::Undetermined => "undetermined",
            Status::InputError => "input-error",
        }
    }
}

/// One record: a `record` tag followed by fields in insertion order.
pub type Record = Map<String, Value>;

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub records: Vec<Record>,
}

impl Report {
    pub fn new(command: &str, seed: u64) -> Self {
        let mut header = Record::new();
        header.insert("record".into(), "header".into());
        header.insert("schema".into(), SCHEMA.into());
        header.insert("command".into(), command.into());
        header.insert("seed".into(), seed.into());
        Report { records: vec![header] }
    }

    pub fn push(&mut self, kind: &str, fields: Vec<(&str, Value)>) {
        let mut r = Record::new();
        r.insert("record".into(), kind.into());
        for (k, v) in fields {
            r.insert(k.into(), v);
        }
        self.records.push(r);
    }

    pub fn finish(&mut self, status: Status, summary: &str) {
        self.push(
            "verdict",
            vec![("status", status.name().into()), ("exit", status.code().into()), ("summary", summary.into())],
        );
    }

    pub fn status(&self) -> Option<i32> {
        let last = self.records.last()?;
        (last.get("record")? == "verdict").then(|| last.get("exit")?.as_i64().map(|c| c as i32))?
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records are plain JSON"));
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> Result<Report, serde_json::Error> {
        let records = text.lines().filter(|l| !l.is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(Report { records })
    }

    /// `kind key=value ...` per record.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let mut fields = r.iter();
            if let Some((_, kind)) = fields.next() {
                out.push_str(kind.as_str().unwrap_or("?"));
            }
            for (k, v) in fields {
                out.push(' ');
                out.push_str(k);
                out.push('=');
                match v {
                    Value::String(s) => out.push_str(s),
                    other => out.push_str(&other.to_string()),
                }
            }
            out.push('\n');
        }
        out
    }
}
