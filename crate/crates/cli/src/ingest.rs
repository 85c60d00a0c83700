//! CSV ingestion of `(duration, event)` files.
//!
//! The header row is optional. With a header, the columns named `duration`
//! (or `time`) and `event` (or `status`) are used; without one, the first two
//! columns are.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use dpkm_core::{SurvivalDataset, SurvivalRecord};

const DURATION_NAMES: [&str; 3] = ["duration", "time", "t"];
const EVENT_NAMES: [&str; 4] = ["event", "status", "e", "death"];

fn find_column(header: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    header
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

fn parse_event(field: &str) -> Option<bool> {
    match field.trim() {
        "1" | "1.0" => Some(true),
        "0" | "0.0" => Some(false),
        _ => None,
    }
}

/// Parses a dataset; drops censored records when `uncensored_only` is set.
pub fn parse_dataset(reader: impl Read, uncensored_only: bool) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let (mut dur_col, mut ev_col) = (0, 1);
    let mut records = Vec::new();
    let mut first = true;
    for row in rdr.records() {
        let row = row.context("malformed CSV")?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        if first {
            first = false;
            if row.get(0).map_or(false, |f| f.parse::<f64>().is_err()) {
                dur_col = find_column(&row, &DURATION_NAMES).unwrap_or(0);
                ev_col = find_column(&row, &EVENT_NAMES).unwrap_or(1);
                continue;
            }
        }
        let dur = row.get(dur_col).unwrap_or("");
        let ev = row.get(ev_col).unwrap_or("");
        let time: f64 = match dur.parse() {
            Ok(t) if f64::is_finite(t) && t >= 0.0 => t,
            _ => bail!("line {line}: invalid duration {dur:?}"),
        };
        let Some(event) = parse_event(ev) else {
            bail!("line {line}: event must be 0 or 1, got {ev:?}");
        };
        records.push(SurvivalRecord::new(time, event));
    }

    let ds = SurvivalDataset::new(records)?;
    log::info!("read {} records, {} censored", ds.len(), ds.censored_count());
    let ds = if uncensored_only { ds.uncensored() } else { ds };
    if ds.is_empty() {
        bail!("no usable records");
    }
    Ok(ds)
}

pub fn read_dataset(path: &Path, uncensored_only: bool) -> Result<SurvivalDataset> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_dataset(file, uncensored_only).with_context(|| format!("reading {}", path.display()))
}

pub fn write_dataset(ds: &SurvivalDataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["duration", "event"])?;
    for r in ds.iter() {
        w.write_record([r.time.to_string(), u8::from(r.event).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &SurvivalDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_dataset(ds, file)
}
