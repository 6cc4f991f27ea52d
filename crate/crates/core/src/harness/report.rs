//! CSV and JSON output.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentReport, HarnessError, OutputFormat};

const CONFIG_PREFIX: &str = "# config: ";

/// One line of the rate table: a message (or `total`) at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scheme: String,
    pub field: String,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub snr_db: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub degenerate: usize,
    pub message: String,
    pub mean_rate_bits_per_slot: f64,
    pub dof_slope: Option<f64>,
    pub dof_total: Option<f64>,
}

impl ExperimentReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let c = &self.config;
        let mut rows = Vec::new();
        for p in &self.points {
            let row = |message: String, rate: f64, slope: Option<f64>| CsvRow {
                scheme: c.scheme.to_string(),
                field: c.field.to_string(),
                k: c.k,
                snr_db: p.snr_db,
                epsilon: c.epsilon,
                trials: p.trials,
                degenerate: p.degenerate,
                message,
                mean_rate_bits_per_slot: rate,
                dof_slope: slope,
                dof_total: self.dof.as_ref().map(|d| d.total),
            };
            for (m, &rate) in p.message_rates.iter().enumerate() {
                let slope = self.dof.as_ref().map(|d| d.per_message[m]);
                rows.push(row(m.to_string(), rate, slope));
            }
            rows.push(row(
                "total".into(),
                p.total_rate,
                self.dof.as_ref().map(|d| d.total),
            ));
        }
        rows
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn write_config_comment<W: Write>(config: &ExperimentConfig, w: &mut W) -> Result<(), HarnessError> {
    writeln!(w, "{CONFIG_PREFIX}{}", serde_json::to_string(config)?)?;
    Ok(())
}

fn write_rows<W: Write, T: Serialize>(rows: &[T], w: W) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_writer(w);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// CSV: a `# config:` comment line carrying the config as JSON, then the
/// rate table. JSON: the full report.
pub fn write_report<W: Write>(
    report: &ExperimentReport,
    format: OutputFormat,
    mut w: W,
) -> Result<(), HarnessError> {
    match format {
        OutputFormat::Csv => {
            write_config_comment(&report.config, &mut w)?;
            write_rows(&report.csv_rows(), w)
        }
        OutputFormat::Json => {
            w.write_all(report.to_json()?.as_bytes())?;
            writeln!(w)?;
            Ok(())
        }
    }
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<CsvRow>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    reader
        .deserialize()
        .map(|row| row.map_err(HarnessError::from))
        .collect()
}

/// Config echoed at the top of a CSV file, if present.
pub fn read_csv_config<R: Read>(r: R) -> Result<Option<ExperimentConfig>, HarnessError> {
    for line in BufReader::new(r).lines() {
        let line = line?;
        if let Some(json) = line.strip_prefix(CONFIG_PREFIX) {
            return Ok(Some(serde_json::from_str(json)?));
        }
        if !line.starts_with('#') {
            break;
        }
    }
    Ok(None)
}

/// Rate of one message against perturbation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub snr_db: f64,
    pub message: String,
    pub mean_rate_bits_per_slot: f64,
    /// `|rate(ε) - rate(0)| / rate(0)` when the sweep contains ε = 0.
    pub relative_deviation: Option<f64>,
    pub dof_total: Option<f64>,
}

pub fn sweep_table(reports: &[ExperimentReport]) -> Vec<SweepRow> {
    let baseline = reports.iter().find(|r| r.config.epsilon == 0.0);
    let mut rows = Vec::new();
    for report in reports {
        for row in report.csv_rows() {
            let relative_deviation = baseline.and_then(|b| {
                b.csv_rows()
                    .into_iter()
                    .find(|x| x.snr_db == row.snr_db && x.message == row.message)
                    .filter(|x| x.mean_rate_bits_per_slot > 0.0)
                    .map(|x| {
                        (row.mean_rate_bits_per_slot - x.mean_rate_bits_per_slot).abs()
                            / x.mean_rate_bits_per_slot
                    })
            });
            rows.push(SweepRow {
                epsilon: row.epsilon,
                snr_db: row.snr_db,
                message: row.message,
                mean_rate_bits_per_slot: row.mean_rate_bits_per_slot,
                relative_deviation,
                dof_total: row.dof_total,
            });
        }
    }
    rows
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    table: Vec<SweepRow>,
    reports: &'a [ExperimentReport],
}

pub fn write_sweep<W: Write>(
    reports: &[ExperimentReport],
    format: OutputFormat,
    mut w: W,
) -> Result<(), HarnessError> {
    let table = sweep_table(reports);
    match format {
        OutputFormat::Csv => {
            if let Some(first) = reports.first() {
                write_config_comment(&first.config, &mut w)?;
            }
            write_rows(&table, w)
        }
        OutputFormat::Json => {
            let out = SweepOutput { table, reports };
            w.write_all(serde_json::to_string_pretty(&out)?.as_bytes())?;
            writeln!(w)?;
            Ok(())
        }
    }
}
