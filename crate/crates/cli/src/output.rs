use std::fs;
use std::io::Write;

use anyhow::Result;
use serde_json::Value;
use wdam::io::{manifest_path, sidecar_path, to_json_string, write_json, Manifest, Table};

use crate::args::{Format, Global};

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// What a subcommand produced, before formatting.
pub enum Output {
    Json(Value),
    Text(String),
    Table {
        table: Table,
        sidecars: Vec<(&'static str, Table)>,
        manifest: Option<Manifest>,
    },
}

impl Output {
    pub fn table(table: Table) -> Self {
        Output::Table {
            table,
            sidecars: Vec::new(),
            manifest: None,
        }
    }

    pub fn json<T: serde::Serialize>(v: &T) -> Result<Self> {
        Ok(Output::Json(serde_json::to_value(v)?))
    }
}

/// Cells that parse as numbers become JSON numbers.
fn table_json(t: &Table) -> Value {
    let rows = t
        .rows
        .iter()
        .map(|r| {
            let obj = t
                .header
                .iter()
                .zip(r)
                .map(|(h, c)| {
                    let v = if let Ok(i) = c.parse::<i64>() {
                        Value::from(i)
                    } else if let Some(n) = c.parse::<f64>().ok().and_then(serde_json::Number::from_f64) {
                        Value::Number(n)
                    } else {
                        Value::String(c.clone())
                    };
                    (h.clone(), v)
                })
                .collect::<serde_json::Map<_, _>>();
            Value::Object(obj)
        })
        .collect();
    Value::Array(rows)
}

fn write_main(global: &Global, body: &str) -> Result<()> {
    match &global.out {
        Some(p) => fs::write(p, body)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn emit(global: &Global, output: Output) -> Result<()> {
    match output {
        Output::Json(v) => {
            if global.format == Some(Format::Csv) {
                return Err(usage("this command only writes JSON"));
            }
            write_main(global, &to_json_string(&v)?)
        }
        Output::Text(s) => {
            if global.format.is_some() {
                return Err(usage("this command writes its own text format"));
            }
            write_main(global, &s)
        }
        Output::Table {
            table,
            sidecars,
            manifest,
        } => {
            let body = match global.format {
                Some(Format::Json) => to_json_string(&table_json(&table))?,
                _ => table.to_csv_string()?,
            };
            write_main(global, &body)?;
            match &global.out {
                Some(p) => {
                    for (name, t) in &sidecars {
                        t.save(&sidecar_path(p, name))?;
                    }
                    if let Some(m) = &manifest {
                        write_json(&manifest_path(p), m)?;
                    }
                }
                None if !sidecars.is_empty() => {
                    log::warn!("sidecar tables are only written next to an --out file");
                }
                None => {}
            }
            Ok(())
        }
    }
}
