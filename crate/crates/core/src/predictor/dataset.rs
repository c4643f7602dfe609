//! Labelled attempt datasets: extraction from run logs and CSV I/O.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::AttemptRecord;
use crate::error::{Error, Result};
use crate::predictor::features::{ExecutionType, FeatureVector, Label, CSV_COLUMNS, N_FEATURES};
use crate::workload::{AttemptStatus, TaskKind};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_id: String,
    pub window_start_ms: u64,
    pub window_end_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: Vec<String>,
    pub rows: Vec<FeatureVector>,
    pub provenance: Option<Provenance>,
}

/// Which attempts to export.
#[derive(Clone, Copy, Debug, Default)]
pub struct DatasetFilter {
    pub kind: Option<TaskKind>,
}

impl Default for Dataset {
    fn default() -> Self {
        Dataset {
            schema: CSV_COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            provenance: None,
        }
    }
}

/// Label of a terminal attempt; `None` for killed or still-running attempts.
pub fn label_for(status: AttemptStatus) -> Option<Label> {
    match status {
        AttemptStatus::Finished => Some(Label::Finished),
        AttemptStatus::Failed | AttemptStatus::FailedTimeout => Some(Label::Failed),
        AttemptStatus::Killed | AttemptStatus::Running => None,
    }
}

/// One labelled row per finished or failed attempt, with features as of its launch.
/// Killed attempts have no outcome and are skipped.
pub fn export_dataset(records: &[AttemptRecord], run_id: &str, filter: DatasetFilter) -> Dataset {
    let rows: Vec<FeatureVector> = records
        .iter()
        .filter(|r| filter.kind.is_none_or(|k| r.kind == k))
        .filter_map(|r| {
            label_for(r.status).map(|label| FeatureVector {
                label: Some(label),
                ..r.features.clone()
            })
        })
        .collect();
    let provenance = Provenance {
        run_id: run_id.to_string(),
        window_start_ms: records.iter().map(|r| r.start.0).min().unwrap_or(0),
        window_end_ms: records.iter().filter_map(|r| r.end.map(|e| e.0)).max().unwrap_or(0),
    };
    Dataset {
        rows,
        provenance: Some(provenance),
        ..Dataset::default()
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.rows.iter().filter(|r| r.label == Some(label)).count()
    }

    pub fn filter_kind(&self, kind: TaskKind) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: self.rows.iter().filter(|r| r.task_type == kind).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Model inputs and labels (`true` = FAILED). Rows without a label are an error.
    pub fn to_matrix(&self) -> Result<(Vec<[f64; N_FEATURES]>, Vec<bool>)> {
        let mut x = Vec::with_capacity(self.rows.len());
        let mut y = Vec::with_capacity(self.rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            let label = r.label.ok_or_else(|| Error::Dataset(format!("row {i} has no label")))?;
            x.push(r.to_input());
            y.push(label.is_failed());
        }
        Ok((x, y))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Dataset(e.to_string());
        wr.write_record(&self.schema).map_err(err)?;
        for r in &self.rows {
            wr.write_record(row_fields(r)).map_err(err)?;
        }
        wr.flush().map_err(|e| Error::Dataset(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd
            .headers()
            .map_err(|e| Error::Dataset(e.to_string()))?
            .iter()
            .map(|s| s.to_string())
            .collect();
        if header != CSV_COLUMNS {
            return Err(Error::SchemaMismatch {
                expected: CSV_COLUMNS.join(","),
                found: header.join(","),
            });
        }
        let mut rows = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| Error::Dataset(e.to_string()))?;
            let fields: Vec<&str> = rec.iter().collect();
            rows.push(parse_row(&fields).map_err(|m| Error::Dataset(format!("row {}: {m}", line + 1)))?);
        }
        Ok(Dataset {
            schema: header,
            rows,
            provenance: None,
        })
    }

    fn meta_path(csv_path: &Path) -> PathBuf {
        let mut p = csv_path.as_os_str().to_owned();
        p.push(".meta.json");
        PathBuf::from(p)
    }

    /// Writes the CSV and, when provenance is known, a `<path>.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)?;
        if let Some(p) = &self.provenance {
            let meta = Self::meta_path(path);
            let text = serde_json::to_string_pretty(p).expect("provenance serializes");
            std::fs::write(&meta, text).map_err(|e| Error::io(&meta, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut ds = Self::read_csv(f)?;
        let meta = Self::meta_path(path);
        if meta.exists() {
            let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
            ds.provenance = Some(serde_json::from_str(&text).map_err(|e| Error::Dataset(e.to_string()))?);
        }
        Ok(ds)
    }
}

fn row_fields(r: &FeatureVector) -> Vec<String> {
    vec![
        r.job_id.to_string(),
        r.task_id.to_string(),
        match r.task_type {
            TaskKind::Map => "MAP".into(),
            TaskKind::Reduce => "REDUCE".into(),
        },
        r.priority.to_string(),
        r.locality.map(|l| l as u8).unwrap_or(0).to_string(),
        (r.locality.is_none() as u8).to_string(),
        match r.execution_type {
            ExecutionType::Normal => "NORMAL".into(),
            ExecutionType::Speculative => "SPECULATIVE".into(),
        },
        r.elapsed_execution_time.to_string(),
        r.nbr_prev_finished_attempts.to_string(),
        r.nbr_prev_failed_attempts.to_string(),
        r.nbr_reschedule_events.to_string(),
        r.nbr_prev_finished_tasks.to_string(),
        r.nbr_prev_failed_tasks.to_string(),
        r.tt_running_tasks.to_string(),
        r.tt_finished_tasks.to_string(),
        r.tt_failed_tasks.to_string(),
        r.tt_available_map_slots.to_string(),
        r.tt_available_reduce_slots.to_string(),
        r.job_total_tasks.to_string(),
        r.used_cpu.to_string(),
        r.used_mem.to_string(),
        r.used_hdfs_rw.to_string(),
        match r.label {
            Some(Label::Finished) => "FINISHED".into(),
            Some(Label::Failed) => "FAILED".into(),
            None => String::new(),
        },
    ]
}

fn parse_row(f: &[&str]) -> std::result::Result<FeatureVector, String> {
    if f.len() != CSV_COLUMNS.len() {
        return Err(format!("expected {} fields, found {}", CSV_COLUMNS.len(), f.len()));
    }
    fn num<T: std::str::FromStr>(s: &str, col: &str) -> std::result::Result<T, String> {
        s.trim().parse().map_err(|_| format!("column {col}: cannot parse `{s}`"))
    }
    let task_type = match f[2] {
        "MAP" => TaskKind::Map,
        "REDUCE" => TaskKind::Reduce,
        other => return Err(format!("column type: unknown value `{other}`")),
    };
    let missing: u8 = num(f[5], "locality_missing")?;
    let locality = if missing == 1 { None } else { Some(num::<u8>(f[4], "locality")? == 1) };
    let execution_type = match f[6] {
        "NORMAL" => ExecutionType::Normal,
        "SPECULATIVE" => ExecutionType::Speculative,
        other => return Err(format!("column execution_type: unknown value `{other}`")),
    };
    let label = match f[22] {
        "FINISHED" => Some(Label::Finished),
        "FAILED" => Some(Label::Failed),
        "" => None,
        other => return Err(format!("column label: unknown value `{other}`")),
    };
    Ok(FeatureVector {
        job_id: num(f[0], "job_id")?,
        task_id: num(f[1], "task_id")?,
        task_type,
        priority: num(f[3], "priority")?,
        locality,
        execution_type,
        elapsed_execution_time: num(f[7], "elapsed_execution_time")?,
        nbr_prev_finished_attempts: num(f[8], "nbr_prev_finished_attempts")?,
        nbr_prev_failed_attempts: num(f[9], "nbr_prev_failed_attempts")?,
        nbr_reschedule_events: num(f[10], "nbr_reschedule_events")?,
        nbr_prev_finished_tasks: num(f[11], "nbr_prev_finished_tasks")?,
        nbr_prev_failed_tasks: num(f[12], "nbr_prev_failed_tasks")?,
        tt_running_tasks: num(f[13], "tt_running_tasks")?,
        tt_finished_tasks: num(f[14], "tt_finished_tasks")?,
        tt_failed_tasks: num(f[15], "tt_failed_tasks")?,
        tt_available_map_slots: num(f[16], "tt_available_map_slots")?,
        tt_available_reduce_slots: num(f[17], "tt_available_reduce_slots")?,
        job_total_tasks: num(f[18], "job_total_tasks")?,
        used_cpu: num(f[19], "used_cpu")?,
        used_mem: num(f[20], "used_mem")?,
        used_hdfs_rw: num(f[21], "used_hdfs_rw")?,
        label,
    })
}
