//! On-disk formats: view tables, label tables, checkpoint documents.

use std::fs;
use std::path::Path;

use fcmvc::checkpoint::Checkpoint;
use fcmvc::mat::Matrix;
use fcmvc::registry::{SampleId, ViewBatch};
use serde::Serialize;

use crate::{CliError, CliResult};

/// Reads a view table: header `id,<feature columns...>`, one row per present
/// sample, every feature a finite number.
pub fn read_view(path: &Path, view_index: usize) -> CliResult<ViewBatch> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.get(0) != Some("id") {
        return Err(CliError::Data(format!(
            "{}: first column must be 'id', found {:?}",
            path.display(),
            headers.get(0).unwrap_or("")
        )));
    }
    let d = headers.len().saturating_sub(1);
    if d == 0 {
        return Err(CliError::Data(format!("{}: no feature columns", path.display())));
    }

    let mut ids: Vec<SampleId> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != d + 1 {
            return Err(CliError::Data(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                line + 2,
                record.len(),
                d + 1
            )));
        }
        ids.push(SampleId::new(&record[0]).map_err(CliError::Core)?);
        let mut feats = Vec::with_capacity(d);
        for (col, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Data(format!(
                    "{}: row {} column '{}': '{}' is not a number",
                    path.display(),
                    line + 2,
                    headers.get(col + 1).unwrap_or("?"),
                    field
                ))
            })?;
            feats.push(v);
        }
        rows.push(feats);
    }

    // samples are file rows but view columns
    let n = rows.len();
    let mut data = vec![0.0f64; d * n];
    for (c, feats) in rows.iter().enumerate() {
        for (r, &v) in feats.iter().enumerate() {
            data[r * n + c] = v;
        }
    }
    let data = Matrix::from_vec(d, n, data).map_err(|e| {
        CliError::Data(format!("{}: {e}", path.display()))
    })?;
    ViewBatch::new(view_index, data, ids).map_err(CliError::Core)
}

pub fn write_view(path: &Path, batch: &ViewBatch) -> CliResult<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let d = batch.dim();
    let mut header = vec!["id".to_string()];
    header.extend((0..d).map(|r| format!("f{r}")));
    wtr.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (c, id) in batch.ids.iter().enumerate() {
        let mut record = vec![id.to_string()];
        record.extend((0..d).map(|r| batch.data.get(r, c).to_string()));
        wtr.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads a label table: header `id,label`, labels being small non-negative
/// integers.
pub fn read_labels(path: &Path) -> CliResult<Vec<(SampleId, usize)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.get(0) != Some("id") || headers.get(1) != Some("label") || headers.len() != 2 {
        return Err(CliError::Data(format!(
            "{}: expected header 'id,label'",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let id = SampleId::new(&record[0]).map_err(CliError::Core)?;
        let label: usize = record[1].parse().map_err(|_| {
            CliError::Data(format!(
                "{}: row {}: label '{}' is not a non-negative integer",
                path.display(),
                line + 2,
                &record[1]
            ))
        })?;
        out.push((id, label));
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no label rows", path.display())));
    }
    Ok(out)
}

pub fn write_labels(path: &Path, ids: &[SampleId], labels: &[usize]) -> CliResult<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    wtr.write_record(["id", "label"]).map_err(|e| csv_err(path, e))?;
    for (id, label) in ids.iter().zip(labels) {
        wtr.write_record([id.to_string(), label.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Data(format!("{}: corrupt checkpoint: {e}", path.display()))
    })
}

/// Writes the checkpoint through a sibling temp file and a rename, so an
/// interrupted write can never leave a truncated document at `path`.
pub fn save_checkpoint(path: &Path, cp: &Checkpoint) -> CliResult<()> {
    let json = serde_json::to_string(cp)
        .map_err(|e| CliError::Data(format!("checkpoint serialization: {e}")))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Data(format!("{}: not a file path", path.display())))?;
    let tmp = path.with_file_name(format!("{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, json).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("JSON serialization: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source: e }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
