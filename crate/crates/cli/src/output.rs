//! CSV reports and the run manifest. Every real number is written with 17
//! significant digits so a report round-trips to the same `f64`.

use std::fs::File;
use std::path::{Path, PathBuf};

use convdiag::circuit::ComposedCircuit;
use convdiag::homotopy::{BdfOrder, CellOutcome, ParameterSweep, RunReport, StepsizeSweep};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn joined<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

const FAIL: &str = "FAIL";

pub struct Manifest {
    fields: Map<String, Value>,
}

impl Manifest {
    pub fn new(command: &str, argv: &[String], exit_code: u8) -> Self {
        let mut fields = Map::new();
        fields.insert("command".into(), command.into());
        fields.insert("argv".into(), argv.into());
        fields.insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
        fields.insert("exit_code".into(), exit_code.into());
        Manifest { fields }
    }

    pub fn set<T: Serialize + ?Sized>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("manifest values serialize");
        self.fields.insert(key.into(), v);
    }
}

/// An output directory that remembers which files it wrote.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

type Writer = csv::Writer<File>;

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn fail(&self, name: &str) -> impl Fn(csv::Error) -> CliError {
        let path = self.dir.join(name);
        move |e| CliError::Output {
            path: path.clone(),
            source: e.into(),
        }
    }

    /// Opens `name`, writes `header` and hands the writer to `body`.
    fn csv<F>(&mut self, name: &str, header: &[String], body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Writer) -> csv::Result<()>,
    {
        let fail = self.fail(name);
        let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(&fail)?;
        w.write_record(header).map_err(&fail)?;
        body(&mut w).map_err(&fail)?;
        w.flush().map_err(|e| fail(e.into()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_run(
        &mut self,
        report: &RunReport,
        circuit: &ComposedCircuit,
    ) -> Result<(), CliError> {
        let mut header = vec!["t".to_string()];
        header.extend(report.unknown_labels.iter().cloned());
        header.extend(["iterations".into(), "status".into()]);
        self.csv("steps.csv", &header, |w| {
            for s in &report.steps {
                let mut row = vec![num(s.t)];
                row.extend(s.x.iter().map(|v| num(*v)));
                row.push(s.trace.steps().to_string());
                row.push(s.status.as_str().into());
                w.write_record(&row)?;
            }
            Ok(())
        })?;

        self.csv(
            "eigs.csv",
            &header_of(&["step", "t", "method", "re", "im"]),
            |w| {
                for s in &report.steps {
                    for (method, e) in s.eigen.iter().filter(|(_, e)| e.usable) {
                        for l in &e.eigenvalues {
                            w.write_record([
                                s.index.to_string(),
                                num(s.t),
                                method.as_str().into(),
                                num(l.re),
                                num(l.im),
                            ])?;
                        }
                    }
                }
                Ok(())
            },
        )?;

        // One row per step whose primary eigen report raised a flag.
        self.csv(
            "anomalies.csv",
            &header_of(&["step", "t", "flags", "leading_abs_lambda"]),
            |w| {
                for s in &report.steps {
                    let Some(primary) = s.primary_report() else {
                        continue;
                    };
                    let Some(a) = s.anomalies.get(&primary.method) else {
                        continue;
                    };
                    if !a.flags.any() {
                        continue;
                    }
                    let flags: Vec<&str> = a.flags.active().map(|f| f.as_str()).collect();
                    w.write_record([
                        s.index.to_string(),
                        num(s.t),
                        flags.join(";"),
                        num(a.leading_magnitude),
                    ])?;
                }
                Ok(())
            },
        )?;

        let header = header_of(&[
            "step",
            "outlier_index",
            "flagged_rows",
            "flagged_components",
            "no_dominant_peak",
        ]);
        let mut skipped = 0;
        self.csv("localization.csv", &header, |w| {
            for s in &report.steps {
                for l in &s.localization {
                    let Ok(r) = &l.result else {
                        skipped += 1;
                        continue;
                    };
                    w.write_record([
                        s.index.to_string(),
                        l.eigen_index.to_string(),
                        joined(&r.flagged_rows),
                        joined(&r.flagged_components),
                        r.no_dominant_peak.to_string(),
                    ])?;
                }
            }
            Ok(())
        })?;
        if skipped > 0 {
            eprintln!(
                "convdiag: {skipped} localizations failed and were left out of localization.csv"
            );
        }

        let time_of = |step: usize| {
            report
                .steps
                .get(step.wrapping_sub(1))
                .map_or(f64::NAN, |s| s.t)
        };
        self.csv(
            "crossings.csv",
            &header_of(&["step", "t", "method", "flag", "on"]),
            |w| {
                for (method, events) in &report.crossings {
                    for e in events {
                        w.write_record([
                            e.step_index.to_string(),
                            num(time_of(e.step_index)),
                            method.as_str().into(),
                            e.kind.as_str().into(),
                            e.on.to_string(),
                        ])?;
                    }
                }
                Ok(())
            },
        )?;

        let rows = circuit.component_row_map();
        self.csv("rows.csv", &header_of(&["row", "component"]), |w| {
            for (id, range) in &rows {
                for r in range.clone() {
                    w.write_record([r.to_string(), id.clone()])?;
                }
            }
            Ok(())
        })
    }

    pub fn write_gmin_sweep(
        &mut self,
        sweep: &ParameterSweep,
        order: BdfOrder,
    ) -> Result<(), CliError> {
        self.csv("grid.csv", &grid_header(), |w| {
            for c in &sweep.cells {
                let lead = if c.failed {
                    FAIL.into()
                } else {
                    c.leading.map(num).unwrap_or_default()
                };
                w.write_record([num(c.t), num(c.value), order.as_u8().to_string(), lead])?;
            }
            Ok(())
        })?;

        let header = header_of(&[
            "value",
            "flagged_steps",
            "flagged_duration",
            "terminated_early",
        ]);
        self.csv("gmin_summary.csv", &header, |w| {
            for s in &sweep.summaries {
                w.write_record([
                    num(s.value),
                    s.flagged.len().to_string(),
                    num(s.flagged_duration),
                    s.termination.clone().unwrap_or_default(),
                ])?;
            }
            Ok(())
        })?;

        let mut header = header_of(&["step", "t", "lambda_re", "lambda_im"]);
        for label in &sweep.unknown_labels {
            header.push(format!("{label}_re"));
            header.push(format!("{label}_im"));
        }
        for (k, s) in sweep.summaries.iter().enumerate() {
            self.csv(&format!("vectors_{k:03}.csv"), &header, |w| {
                for f in &s.flagged {
                    let mut row = vec![
                        f.step.to_string(),
                        num(f.t),
                        num(f.eigenvalue.re),
                        num(f.eigenvalue.im),
                    ];
                    for c in f.vector.iter() {
                        row.push(num(c.re));
                        row.push(num(c.im));
                    }
                    w.write_record(&row)?;
                }
                Ok(())
            })?;
        }
        Ok(())
    }

    pub fn write_stepsize_sweep(&mut self, sweep: &StepsizeSweep) -> Result<(), CliError> {
        self.csv("grid.csv", &grid_header(), |w| {
            for c in &sweep.cells {
                let lead = match c.outcome {
                    CellOutcome::Failed(_) => FAIL.into(),
                    CellOutcome::Converged { leading, .. } => leading.map(num).unwrap_or_default(),
                };
                w.write_record([num(c.t), num(c.dt), c.order.as_u8().to_string(), lead])?;
            }
            Ok(())
        })
    }

    pub fn write_spectrum(&mut self, name: &str, values: &[Complex64]) -> Result<(), CliError> {
        self.csv(name, &header_of(&["re", "im"]), |w| {
            for l in values {
                w.write_record([num(l.re), num(l.im)])?;
            }
            Ok(())
        })
    }

    /// Writes `manifest.json` with a digest of every file written so far.
    pub fn finish(self, mut manifest: Manifest) -> Result<(), CliError> {
        let mut digests = Map::new();
        for name in &self.written {
            let path = self.dir.join(name);
            let bytes = std::fs::read(&path).map_err(|source| CliError::Output { path, source })?;
            digests.insert(name.clone(), sha256_hex(&bytes).into());
        }
        manifest
            .fields
            .insert("outputs".into(), Value::Object(digests));
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&Value::Object(manifest.fields))
            .expect("manifest is JSON");
        std::fs::write(&path, text + "\n").map_err(|source| CliError::Output { path, source })
    }
}

fn header_of(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn grid_header() -> Vec<String> {
    header_of(&["t", "value", "order", "leading_abs_lambda"])
}
