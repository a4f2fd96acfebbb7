//! Workload traces: `time_days,op,block,page` CSV, replay, and a synthetic generator.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::harness::device::Device;
use crate::harness::fmt::g6;
use crate::seed::{self, tag};

pub const HEADER: [&str; 4] = ["time_days", "op", "block", "page"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceOp {
    ProgramBlock,
    ReadPage,
}

impl TraceOp {
    pub fn name(self) -> &'static str {
        match self {
            TraceOp::ProgramBlock => "program_block",
            TraceOp::ReadPage => "read_page",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time_days: f64,
    pub op: TraceOp,
    pub block: usize,
    /// Present for reads only.
    pub page: Option<usize>,
}

impl TraceRecord {
    pub fn program(time_days: f64, block: usize) -> TraceRecord {
        TraceRecord { time_days, op: TraceOp::ProgramBlock, block, page: None }
    }

    pub fn read(time_days: f64, block: usize, page: usize) -> TraceRecord {
        TraceRecord { time_days, op: TraceOp::ReadPage, block, page: Some(page) }
    }
}

/// Parses trace text. The header row is required; times must not decrease.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out: Vec<TraceRecord> = Vec::new();
    let mut saw_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::TraceParse { line: e.position().map_or(0, |p| p.line() as usize), msg: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) || rec.get(0).is_some_and(|f| f.starts_with('#')) {
            continue;
        }
        let err = |msg: String| Error::TraceParse { line, msg };
        if !saw_header {
            if rec.iter().collect::<Vec<_>>() != HEADER {
                return Err(err(format!("expected header `{}`", HEADER.join(","))));
            }
            saw_header = true;
            continue;
        }
        if rec.len() < 3 || rec.len() > 4 {
            return Err(err(format!("expected 4 fields, found {}", rec.len())));
        }
        let time_days: f64 = rec[0].parse().map_err(|_| err(format!("bad time `{}`", &rec[0])))?;
        if !time_days.is_finite() || time_days < 0.0 {
            return Err(err(format!("time must be finite and non-negative, got {time_days}")));
        }
        let block: usize = rec[2].parse().map_err(|_| err(format!("bad block `{}`", &rec[2])))?;
        let page_field = rec.get(3).unwrap_or("");
        let record = match &rec[1] {
            "program_block" => {
                if !page_field.is_empty() {
                    return Err(err("program_block takes no page".into()));
                }
                TraceRecord::program(time_days, block)
            }
            "read_page" => {
                let page = page_field.parse().map_err(|_| err(format!("bad page `{page_field}`")))?;
                TraceRecord::read(time_days, block, page)
            }
            other => return Err(err(format!("unknown op `{other}`"))),
        };
        if let Some(prev) = out.last() {
            if record.time_days < prev.time_days {
                return Err(err(format!("time {} precedes previous record at {}", record.time_days, prev.time_days)));
            }
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_trace<W: Write>(records: &[TraceRecord], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(HEADER)?;
    for r in records {
        let page = r.page.map(|p| p.to_string()).unwrap_or_default();
        w.write_record([g6(r.time_days), r.op.name().to_string(), r.block.to_string(), page])?;
    }
    w.flush()?;
    Ok(())
}

/// Pages of one block whose age falls in `[age_days, age_days + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgeBin {
    pub block: usize,
    pub age_days: u64,
    pub pages: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub programs: u64,
    pub reads: u64,
    pub skipped_reads: u64,
    pub failed_reads: u64,
    pub retries: u64,
    pub end_time: f64,
    pub histogram: Vec<AgeBin>,
}

impl ReplayReport {
    pub fn write_histogram<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["block", "age_days", "pages"])?;
        for b in &self.histogram {
            w.write_record([b.block.to_string(), b.age_days.to_string(), b.pages.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-block retention-age histogram at the device clock, one-day bins.
pub fn age_histogram(device: &Device) -> Vec<AgeBin> {
    let mut bins: BTreeMap<(usize, u64), usize> = BTreeMap::new();
    for (block, _, age) in device.page_ages() {
        *bins.entry((block, age.floor() as u64)).or_default() += 1;
    }
    bins.into_iter().map(|((block, age_days), pages)| AgeBin { block, age_days, pages }).collect()
}

/// Executes `records` against `device` in order. A program writes every page
/// of the block at the record's time; a read of an unprogrammed page is
/// skipped and counted. The clock ends at `end` if given, else at the last
/// record, and the histogram is taken there.
pub fn replay(device: &mut Device, records: &[TraceRecord], end: Option<f64>) -> Result<ReplayReport> {
    let mut rep = ReplayReport::default();
    for r in records {
        device.advance_to(r.time_days)?;
        match r.op {
            TraceOp::ProgramBlock => {
                device.program_block(r.block, r.time_days, 0.0)?;
                rep.programs += 1;
            }
            TraceOp::ReadPage => {
                let page = r.page.expect("reads carry a page");
                let readable =
                    device.block(r.block).ok().and_then(|b| (page < b.pages()).then(|| b.page_program_time(page)).flatten()).is_some();
                if !readable {
                    device.note_skipped_read();
                    rep.skipped_reads += 1;
                    continue;
                }
                let out = device.read_page(r.block, page)?;
                rep.reads += 1;
                rep.retries += u64::from(out.retries);
                if !out.succeeded() {
                    rep.failed_reads += 1;
                }
            }
        }
    }
    if let Some(end) = end {
        device.advance_to(end)?;
    }
    rep.end_time = device.clock();
    rep.histogram = age_histogram(device);
    Ok(rep)
}

/// Inter-program gap model for synthetic traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapModel {
    /// Every block is programmed once at an independent uniform time in the span.
    Uniform,
    /// Programs arrive as a Poisson process with this mean gap, cycling through blocks.
    Exponential { mean_days: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec {
    pub blocks: usize,
    pub pages_per_block: usize,
    pub span_days: f64,
    pub gaps: GapModel,
    /// Reads issued at uniform random times over the span, to uniform random pages.
    pub reads: usize,
    pub seed: u64,
}

/// Generates a synthetic trace sorted by time.
pub fn generate(spec: &TraceSpec) -> Result<Vec<TraceRecord>> {
    if spec.blocks == 0 || spec.pages_per_block == 0 || !(spec.span_days >= 0.0) {
        return Err(Error::InvalidConfig("trace needs blocks, pages and a non-negative span".into()));
    }
    let mut rng = seed::stream(spec.seed, &[tag::TRACE]);
    let mut recs = Vec::new();
    match spec.gaps {
        GapModel::Uniform => {
            for b in 0..spec.blocks {
                recs.push(TraceRecord::program(rng.random_range(0.0..=spec.span_days), b));
            }
        }
        GapModel::Exponential { mean_days } => {
            if !(mean_days > 0.0) {
                return Err(Error::InvalidConfig("mean gap must be positive".into()));
            }
            let exp = Exp::new(1.0 / mean_days).expect("positive rate");
            let mut t = 0.0;
            let mut b = 0;
            while t <= spec.span_days {
                recs.push(TraceRecord::program(t, b));
                b = (b + 1) % spec.blocks;
                t += exp.sample(&mut rng);
            }
        }
    }
    for _ in 0..spec.reads {
        let t = rng.random_range(0.0..=spec.span_days);
        recs.push(TraceRecord::read(t, rng.random_range(0..spec.blocks), rng.random_range(0..spec.pages_per_block)));
    }
    // Stable sort keeps a program ahead of a read drawn at the same instant.
    recs.sort_by(|a, b| a.time_days.total_cmp(&b.time_days));
    Ok(recs)
}
