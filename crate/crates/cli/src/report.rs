use std::fmt::{self, Display};

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned `key  value` lines.
    Text,
    /// One `key<TAB>value` record per line.
    Machine,
}

/// Ordered key/value results of one command.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub lines: Vec<(String, String)>,
    /// False when a check failed; the witnesses are among the lines.
    pub passed: bool,
}

impl Report {
    pub fn new() -> Self {
        Report { lines: Vec::new(), passed: true }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Value) {
        self.lines.push((key.into(), value.render()));
    }

    pub fn check(&mut self, key: impl Into<String>, ok: bool) {
        self.passed &= ok;
        self.push(key, if ok { "pass" } else { "fail" });
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        let width = self.lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.lines {
            match format {
                Format::Text => out.push_str(&format!("{k:<width$}  {v}\n")),
                Format::Machine => out.push_str(&format!("{k}\t{v}\n")),
            }
        }
        out
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(Format::Text))
    }
}

/// Something a report line can hold. Floats use the shortest text that
/// reads back to the same number.
pub trait Value {
    fn render(&self) -> String;
}

impl Value for f64 {
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! display_value {
    ($($t:ty),*) => {
        $(impl Value for $t {
            fn render(&self) -> String {
                self.to_string()
            }
        })*
    };
}

display_value!(bool, usize, u128, &str, String);
