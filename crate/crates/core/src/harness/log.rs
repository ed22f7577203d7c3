use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError};
use crate::td::TerminationKind;

pub const CSV_HEADER: &str = "seed,episode,return,length,termination_kind,mean_td_error,wall_ms";

/// One CSV row per finished episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub seed: u64,
    pub episode: u64,
    /// Native return, offset removed.
    #[serde(rename = "return")]
    pub ret: f64,
    pub length: usize,
    pub termination_kind: TerminationKind,
    /// 0 for evaluation rows.
    pub mean_td_error: f64,
    /// 0 unless wall-clock recording is enabled.
    pub wall_ms: u64,
}

pub fn write_rows(path: &Path, rows: &[EpisodeRow]) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<EpisodeRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(HarnessError::Summary(format!("{}: unexpected header {}", path.display(), header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}
