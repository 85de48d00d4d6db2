use std::fs;
use std::io::Write;

use serde::Serialize;

use crate::{Cli, CliError, Format};

/// One command result in every format it supports.
pub struct Rendered {
    pub json: serde_json::Value,
    pub text: String,
    pub dot: Option<String>,
}

impl Rendered {
    pub fn new(json: &impl Serialize, text: String) -> Self {
        Self {
            json: serde_json::to_value(json).expect("results serialise"),
            text,
            dot: None,
        }
    }

    pub fn with_dot(mut self, dot: String) -> Self {
        self.dot = Some(dot);
        self
    }
}

pub fn emit(cli: &Cli, r: &Rendered) -> Result<(), CliError> {
    let body = match cli.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&r.json).expect("values serialise");
            s.push('\n');
            s
        }
        Format::Text => r.text.clone(),
        Format::Dot => r
            .dot
            .clone()
            .ok_or_else(|| CliError::Usage("this command has no DOT output".into()))?,
    };
    write_to(cli.out.as_deref(), &body)
}

pub fn write_to(path: Option<&std::path::Path>, body: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| CliError::Usage(format!("cannot write output: {e}"))),
    }
}

/// Left-aligned columns separated by two spaces.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("{}\n", padded.join("  ").trim_end())
    };
    let mut out = line(headers.to_vec());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

/// Rounds to the 1e-9 grid so printed values carry no solver noise.
pub fn clean(x: f64) -> f64 {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn fmt_values(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{}", clean(*v))).collect();
    format!("[{}]", parts.join(", "))
}
