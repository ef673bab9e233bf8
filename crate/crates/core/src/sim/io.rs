//! Artifact writers: trace, metrics, comparison table and logs.

use std::path::Path;

use serde::Serialize;

use crate::channel::ChannelEvent;
use crate::controller::SolveRecord;
use crate::error::Result;

use super::compare::ComparisonRow;
use super::metrics::MetricsReport;
use super::runner::TraceRow;

pub const TRACE_HEADER: &str = "step,time,vehicle,p,v,a,u,ep,ev,ea,N,q,r,comm";

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: impl AsRef<Path>, trace: &[TraceRow]) -> Result<()> {
    let path = path.as_ref();
    if trace.is_empty() {
        std::fs::write(path, format!("{TRACE_HEADER}\n"))?;
        return Ok(());
    }
    write_rows(path, trace)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_solves(path: impl AsRef<Path>, solves: &[SolveRecord]) -> Result<()> {
    write_rows(path.as_ref(), solves)
}

#[derive(Serialize)]
struct EventRow<'a> {
    step: usize,
    link: String,
    event: &'a str,
    timestamp: usize,
}

pub fn write_events(path: impl AsRef<Path>, events: &[ChannelEvent]) -> Result<()> {
    let rows: Vec<EventRow> = events
        .iter()
        .map(|e| EventRow {
            step: e.step,
            link: format!("{}->{}", e.sender, e.receiver),
            event: e.kind.as_str(),
            timestamp: e.timestamp,
        })
        .collect();
    write_rows(path.as_ref(), &rows)
}

pub fn write_metrics(path: impl AsRef<Path>, metrics: &MetricsReport) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(metrics)?)?;
    Ok(())
}

pub fn write_comparison(path: impl AsRef<Path>, rows: &[ComparisonRow]) -> Result<()> {
    write_rows(path.as_ref(), rows)
}
