//! The five canonical experiments and their CSV emitters.
//!
//! Every experiment derives its randomness from `channel.seed` through tagged
//! streams and collects parallel work in index order, so output bytes do not
//! depend on thread count.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{page_wordline, Block, Cell, ChannelParams, PageKind, State, VOLTAGE_MAX};
use crate::ecc;
use crate::error::{Error, Result};
use crate::harness::config::DeviceConfig;
use crate::harness::device::Device;
use crate::harness::fmt::g6;
use crate::read::{self, opt_refs, page_bits, ReadRefs, Threshold};
use crate::rfr::{self, RecoveryRow, RecoveryTimes};
use crate::ror::{self, table_storage_bytes, DeviceGeometry, PageView};
use crate::seed::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    DistSweep,
    OptVsAge,
    CrossOptRber,
    RorEval,
    RfrEval,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::DistSweep, Experiment::OptVsAge, Experiment::CrossOptRber, Experiment::RorEval, Experiment::RfrEval];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::DistSweep => "dist-sweep",
            Experiment::OptVsAge => "opt-vs-age",
            Experiment::CrossOptRber => "cross-opt-rber",
            Experiment::RorEval => "ror-eval",
            Experiment::RfrEval => "rfr-eval",
        }
    }

    pub fn parse(s: &str) -> Result<Experiment> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// `dir/name.csv` -> `dir/name_<suffix>.csv`.
pub fn companion_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}_{suffix}{ext}"))
}

fn csv_file(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Runs `exp` and writes its CSV to `out` (plus companions); returns the paths written.
pub fn run_experiment(exp: Experiment, cfg: &DeviceConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    match exp {
        Experiment::DistSweep => {
            let r = dist_sweep(cfg);
            let stats = companion_path(out, "stats");
            r.write(csv_file(out)?, csv_file(&stats)?)?;
            Ok(vec![out.to_path_buf(), stats])
        }
        Experiment::OptVsAge => {
            write_opt_vs_age(&opt_vs_age(cfg)?, csv_file(out)?)?;
            Ok(vec![out.to_path_buf()])
        }
        Experiment::CrossOptRber => {
            cross_opt_rber(cfg)?.write(csv_file(out)?)?;
            Ok(vec![out.to_path_buf()])
        }
        Experiment::RorEval => {
            let r = ror_eval(cfg)?;
            let summary = companion_path(out, "summary");
            r.write(csv_file(out)?, csv_file(&summary)?)?;
            Ok(vec![out.to_path_buf(), summary])
        }
        Experiment::RfrEval => {
            let r = rfr_eval(cfg)?;
            let summary = companion_path(out, "summary");
            r.write(csv_file(out)?, csv_file(&summary)?)?;
            Ok(vec![out.to_path_buf(), summary])
        }
    }
}

const CHUNK: usize = 8192;

/// Independent cells, `per_state` of each state, all at one P/E count.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub pe_count: u32,
    pub per_state: usize,
    /// State-major: state `s` occupies `s * per_state .. (s + 1) * per_state`.
    pub cells: Vec<Cell>,
}

impl Population {
    pub fn generate(params: &ChannelParams, per_state: usize, pe_count: u32) -> Population {
        let chunks: Vec<(State, usize)> =
            State::ALL.into_iter().flat_map(|s| (0..per_state.div_ceil(CHUNK)).map(move |c| (s, c))).collect();
        let cells = chunks
            .par_iter()
            .flat_map_iter(|&(s, c)| {
                let mut rng = seed::stream(params.seed, &[tag::POPULATION, s.index() as u64, c as u64, u64::from(pe_count)]);
                let n = CHUNK.min(per_state - c * CHUNK);
                (0..n).map(move |_| params.sample_cell(s, pe_count, &mut rng)).collect::<Vec<_>>()
            })
            .collect();
        Population { pe_count, per_state, cells }
    }

    pub fn states(&self) -> Vec<State> {
        self.cells.iter().map(|c| c.true_state).collect()
    }

    pub fn of_state(&self, s: State) -> &[Cell] {
        &self.cells[s.index() * self.per_state..(s.index() + 1) * self.per_state]
    }

    pub fn voltages(&self, age_days: f64, params: &ChannelParams) -> Vec<f64> {
        self.cells.par_iter().map(|c| c.voltage(age_days, self.pe_count, params)).collect()
    }
}

// ---------------------------------------------------------------- dist-sweep

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateStats {
    pub age_days: f64,
    pub state: State,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistBin {
    pub age_days: f64,
    pub state: State,
    pub bin_lo: u32,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistSweep {
    pub bin_width: u32,
    pub histogram: Vec<HistBin>,
    pub stats: Vec<StateStats>,
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

pub fn dist_sweep(cfg: &DeviceConfig) -> DistSweep {
    let e = &cfg.experiment;
    let p = &cfg.channel;
    let pop = Population::generate(p, e.cells_per_state, cfg.pe_cycles);
    let bins = (VOLTAGE_MAX as u32).div_ceil(e.histogram_bin) as usize;
    let mut histogram = Vec::new();
    let mut stats = Vec::new();
    for &age in &e.dist_ages {
        for s in State::ALL {
            let v: Vec<f64> = pop.of_state(s).iter().map(|c| c.voltage(age, pop.pe_count, p)).collect();
            let (mean, sd) = mean_sd(&v);
            stats.push(StateStats { age_days: age, state: s, mean, sd });
            let mut counts = vec![0u64; bins];
            for x in v {
                counts[((x / f64::from(e.histogram_bin)) as usize).min(bins - 1)] += 1;
            }
            histogram.extend(counts.into_iter().enumerate().map(|(i, count)| HistBin {
                age_days: age,
                state: s,
                bin_lo: i as u32 * e.histogram_bin,
                count,
            }));
        }
    }
    DistSweep { bin_width: e.histogram_bin, histogram, stats }
}

impl DistSweep {
    pub fn write<W: Write, S: Write>(&self, mut hist: csv::Writer<W>, mut stats: csv::Writer<S>) -> Result<()> {
        hist.write_record(["age_days", "state", "bin_lo", "bin_hi", "count"])?;
        for b in &self.histogram {
            hist.write_record([
                g6(b.age_days),
                b.state.name().to_string(),
                b.bin_lo.to_string(),
                (b.bin_lo + self.bin_width).to_string(),
                b.count.to_string(),
            ])?;
        }
        hist.flush()?;
        stats.write_record(["age_days", "state", "mean", "sd"])?;
        for s in &self.stats {
            stats.write_record([g6(s.age_days), s.state.name().to_string(), g6(s.mean), g6(s.sd)])?;
        }
        stats.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------- opt-vs-age

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptRow {
    pub age_days: f64,
    /// Indexed by [`Threshold::index`].
    pub opt: [u32; 3],
}

pub fn opt_vs_age(cfg: &DeviceConfig) -> Result<Vec<OptRow>> {
    let p = &cfg.channel;
    let pop = Population::generate(p, cfg.experiment.cells_per_state, cfg.pe_cycles);
    let states = pop.states();
    cfg.experiment
        .opt_ages
        .par_iter()
        .map(|&age| {
            let v = pop.voltages(age, p);
            let mut opt = [0; 3];
            for t in Threshold::ALL {
                opt[t.index()] = read::brute_force_opt(states.iter().copied().zip(v.iter().copied()), t)?;
            }
            Ok(OptRow { age_days: age, opt })
        })
        .collect()
}

pub fn write_opt_vs_age<W: Write>(rows: &[OptRow], mut w: csv::Writer<W>) -> Result<()> {
    let mut header = vec!["age_days"];
    header.extend(Threshold::ALL.iter().map(|t| t.name()));
    w.write_record(header)?;
    for r in rows {
        let mut rec = vec![g6(r.age_days)];
        rec.extend(r.opt.iter().map(u32::to_string));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

// ------------------------------------------------------------ cross-opt-rber

/// RBER of data at age `ages[i]` read with the OPT learned at age `ages[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMatrix {
    pub ages: Vec<f64>,
    pub rber: Vec<Vec<f64>>,
}

impl CrossMatrix {
    /// Row-normalized to the diagonal; a zero diagonal maps 0 to 1.
    pub fn normalized(&self, data: usize, opt: usize) -> f64 {
        let d = self.rber[data][data];
        let x = self.rber[data][opt];
        if d == 0.0 {
            if x == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            x / d
        }
    }

    pub fn write<W: Write>(&self, mut w: csv::Writer<W>) -> Result<()> {
        w.write_record(["data_age_days", "opt_age_days", "rber", "normalized_rber"])?;
        for (i, a) in self.ages.iter().enumerate() {
            for (j, b) in self.ages.iter().enumerate() {
                w.write_record([g6(*a), g6(*b), g6(self.rber[i][j]), g6(self.normalized(i, j))])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn population_rber(states: &[State], voltages: &[f64], refs: &ReadRefs) -> f64 {
    let errors: u64 = states
        .iter()
        .zip(voltages)
        .map(|(s, v)| {
            let (l, m) = s.bits();
            let (rl, rm) = read::sense_state(*v, refs).bits();
            u64::from(l != rl) + u64::from(m != rm)
        })
        .sum();
    errors as f64 / (2 * states.len()) as f64
}

pub fn cross_opt_rber(cfg: &DeviceConfig) -> Result<CrossMatrix> {
    let p = &cfg.channel;
    let ages = cfg.experiment.opt_ages.clone();
    let pop = Population::generate(p, cfg.experiment.cells_per_state, cfg.pe_cycles);
    let states = pop.states();
    let volts: Vec<Vec<f64>> = ages.iter().map(|&a| pop.voltages(a, p)).collect();
    let refs: Vec<ReadRefs> = volts.par_iter().map(|v| opt_refs(&states, v)).collect::<Result<_>>()?;
    let rber = volts.par_iter().map(|v| refs.iter().map(|r| population_rber(&states, v, r)).collect()).collect();
    Ok(CrossMatrix { ages, rber })
}

// ------------------------------------------------------------------ ror-eval

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRetryRow {
    pub block: usize,
    pub page: usize,
    pub age_days: f64,
    pub naive_retries: u32,
    pub naive_latency: f64,
    pub naive_ok: bool,
    pub ror_retries: u32,
    pub ror_latency: f64,
    pub ror_ok: bool,
}

/// Per-block oracle comparison of the learned table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableCheck {
    pub block: usize,
    pub learned: [u32; 3],
    /// Oracle OPT of the block's highest wordline.
    pub highest_opt: [u32; 3],
    /// Largest oracle OPT over all wordlines.
    pub max_opt: [u32; 3],
    /// Wordlines whose OPT exceeds `learned + delta_v`, per threshold.
    pub upper_bound_violations: [usize; 3],
}

impl TableCheck {
    pub fn within(&self, t: Threshold, delta_v: u32) -> bool {
        self.learned[t.index()].abs_diff(self.highest_opt[t.index()]) <= delta_v
    }
}

/// Thresholds the upper-bound and accuracy checks cover; ER-P1 barely drifts
/// and its error-free plateau makes a lowest-tie OPT meaningless.
pub const BOUND_THRESHOLDS: [Threshold; 2] = [Threshold::P1P2, Threshold::P2P3];

#[derive(Debug, Clone, PartialEq)]
pub struct RorSummary {
    pub blocks: usize,
    pub pages: usize,
    pub both_succeeded: usize,
    pub naive_failures: usize,
    pub ror_failures: usize,
    pub naive_mean_retries: f64,
    pub ror_mean_retries: f64,
    pub retry_reduction: f64,
    pub naive_mean_latency: f64,
    pub ror_mean_latency: f64,
    pub dominance_violations: usize,
    pub upper_bound_checks: usize,
    pub upper_bound_violations: usize,
    pub within_delta_pairs: usize,
    pub total_pairs: usize,
    /// ER-P1 is reported but not part of the bound checks above.
    pub er_p1_within_delta: usize,
    pub er_p1_upper_bound_violations: usize,
    pub pre_opt_reads: u64,
    pub table_bytes: u64,
    pub table_bytes_512gb_2mb: u64,
    pub lifetime: Lifetime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RorEval {
    pub pages: Vec<PageRetryRow>,
    pub tables: Vec<TableCheck>,
    pub summary: RorSummary,
}

/// Device whose blocks are programmed in turn over `age_span_days`, each
/// filled over `block_fill_days`, with the clock at the end of the last fill.
pub fn mixed_age_device(cfg: &DeviceConfig) -> Result<Device> {
    let e = &cfg.experiment;
    let mut d = Device::new(cfg.clone())?;
    let gap = e.block_fill_days / cfg.pages_per_block() as f64;
    let denom = cfg.blocks.saturating_sub(1).max(1) as f64;
    for b in 0..cfg.blocks {
        d.program_block(b, e.age_span_days * b as f64 / denom, gap)?;
    }
    d.advance_to(e.age_span_days + e.block_fill_days)?;
    Ok(d)
}

fn check_table(block: &Block, b: usize, learned: ReadRefs, cfg: &DeviceConfig, now: f64) -> Result<TableCheck> {
    let p = &cfg.channel;
    let mut check =
        TableCheck { block: b, learned: learned.as_array(), highest_opt: [0; 3], max_opt: [0; 3], upper_bound_violations: [0; 3] };
    let top = page_wordline(ror::probe_pages(block)?.1);
    for w in 0..block.wordlines() {
        let states = block.wordline_states(w);
        let v = block.wordline_voltages(w, now, p)?;
        for t in Threshold::ALL {
            let opt = read::brute_force_opt(states.iter().copied().zip(v.iter().copied()), t)?;
            let i = t.index();
            check.max_opt[i] = check.max_opt[i].max(opt);
            if opt > check.learned[i] + cfg.ror.delta_v {
                check.upper_bound_violations[i] += 1;
            }
            if w == top {
                check.highest_opt[i] = opt;
            }
        }
    }
    Ok(check)
}

pub fn ror_eval(cfg: &DeviceConfig) -> Result<RorEval> {
    let mut device = mixed_age_device(cfg)?;
    let pre_opt_reads = device.pre_optimize_all()?;
    let now = device.clock();
    let p = &cfg.channel;
    let per_block: Vec<(Vec<PageRetryRow>, TableCheck)> = device
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(b, block)| {
            let entry = device.table().get(b).copied().ok_or(Error::ErasedBlock)?;
            let mut rows = Vec::with_capacity(block.pages());
            for page in 0..block.pages() {
                let view = PageView::new(block, page, now, p)?;
                let naive = ror::naive_read_retry_view(&view, &cfg.ror, &cfg.ecc);
                let ror = ror::ror_read_view(&view, entry.refs(), &cfg.ror, &cfg.ecc);
                rows.push(PageRetryRow {
                    block: b,
                    page,
                    age_days: block.wordline_age(page_wordline(page), now)?,
                    naive_retries: naive.retries,
                    naive_latency: naive.latency,
                    naive_ok: naive.succeeded(),
                    ror_retries: ror.retries,
                    ror_latency: ror.latency,
                    ror_ok: ror.succeeded(),
                });
            }
            Ok((rows, check_table(block, b, entry.refs(), cfg, now)?))
        })
        .collect::<Result<_>>()?;
    let (pages, tables): (Vec<Vec<PageRetryRow>>, Vec<TableCheck>) = per_block.into_iter().unzip();
    let pages: Vec<PageRetryRow> = pages.into_iter().flatten().collect();

    let both: Vec<&PageRetryRow> = pages.iter().filter(|r| r.naive_ok && r.ror_ok).collect();
    let mean = |f: &dyn Fn(&PageRetryRow) -> f64| {
        if both.is_empty() {
            0.0
        } else {
            both.iter().map(|r| f(r)).sum::<f64>() / both.len() as f64
        }
    };
    let naive_mean_retries = mean(&|r| f64::from(r.naive_retries));
    let ror_mean_retries = mean(&|r| f64::from(r.ror_retries));
    let delta = cfg.ror.delta_v;
    let summary = RorSummary {
        blocks: cfg.blocks,
        pages: pages.len(),
        both_succeeded: both.len(),
        naive_failures: pages.iter().filter(|r| !r.naive_ok).count(),
        ror_failures: pages.iter().filter(|r| !r.ror_ok).count(),
        naive_mean_retries,
        ror_mean_retries,
        retry_reduction: if naive_mean_retries > 0.0 { 1.0 - ror_mean_retries / naive_mean_retries } else { 0.0 },
        naive_mean_latency: mean(&|r| r.naive_latency),
        ror_mean_latency: mean(&|r| r.ror_latency),
        dominance_violations: both.iter().filter(|r| r.ror_retries > r.naive_retries).count(),
        upper_bound_checks: tables.len() * BOUND_THRESHOLDS.len() * cfg.wordlines_per_block,
        upper_bound_violations: tables
            .iter()
            .flat_map(|t| BOUND_THRESHOLDS.iter().map(move |th| t.upper_bound_violations[th.index()]))
            .sum(),
        within_delta_pairs: tables
            .iter()
            .flat_map(|t| BOUND_THRESHOLDS.iter().map(move |th| t.within(*th, delta)))
            .filter(|ok| *ok)
            .count(),
        total_pairs: tables.len() * BOUND_THRESHOLDS.len(),
        er_p1_within_delta: tables.iter().filter(|t| t.within(Threshold::ErP1, delta)).count(),
        er_p1_upper_bound_violations: tables.iter().map(|t| t.upper_bound_violations[Threshold::ErP1.index()]).sum(),
        pre_opt_reads,
        table_bytes: device.table().storage_bytes(),
        table_bytes_512gb_2mb: table_storage_bytes(&DeviceGeometry { capacity_bytes: 512 << 30, block_bytes: 2 << 20 }),
        lifetime: lifetime_estimate(cfg)?,
    };
    Ok(RorEval { pages, tables, summary })
}

impl RorEval {
    pub fn write<W: Write, S: Write>(&self, mut w: csv::Writer<W>, mut s: csv::Writer<S>) -> Result<()> {
        w.write_record([
            "block",
            "page",
            "age_days",
            "naive_retries",
            "naive_latency",
            "naive_ok",
            "ror_retries",
            "ror_latency",
            "ror_ok",
        ])?;
        for r in &self.pages {
            w.write_record([
                r.block.to_string(),
                r.page.to_string(),
                g6(r.age_days),
                r.naive_retries.to_string(),
                g6(r.naive_latency),
                u8::from(r.naive_ok).to_string(),
                r.ror_retries.to_string(),
                g6(r.ror_latency),
                u8::from(r.ror_ok).to_string(),
            ])?;
        }
        w.flush()?;
        let m = &self.summary;
        s.write_record(["metric", "value"])?;
        let mut rows: Vec<(String, String)> = vec![
            ("blocks".into(), m.blocks.to_string()),
            ("pages".into(), m.pages.to_string()),
            ("both_succeeded".into(), m.both_succeeded.to_string()),
            ("naive_failures".into(), m.naive_failures.to_string()),
            ("ror_failures".into(), m.ror_failures.to_string()),
            ("naive_mean_retries".into(), g6(m.naive_mean_retries)),
            ("ror_mean_retries".into(), g6(m.ror_mean_retries)),
            ("retry_reduction".into(), g6(m.retry_reduction)),
            ("naive_mean_latency".into(), g6(m.naive_mean_latency)),
            ("ror_mean_latency".into(), g6(m.ror_mean_latency)),
            ("dominance_violations".into(), m.dominance_violations.to_string()),
            ("upper_bound_checks".into(), m.upper_bound_checks.to_string()),
            ("upper_bound_violations".into(), m.upper_bound_violations.to_string()),
            ("within_delta_pairs".into(), m.within_delta_pairs.to_string()),
            ("total_pairs".into(), m.total_pairs.to_string()),
            ("er_p1_within_delta".into(), m.er_p1_within_delta.to_string()),
            ("er_p1_upper_bound_violations".into(), m.er_p1_upper_bound_violations.to_string()),
            ("pre_opt_reads".into(), m.pre_opt_reads.to_string()),
            ("table_bytes".into(), m.table_bytes.to_string()),
            ("table_bytes_512gb_2mb".into(), m.table_bytes_512gb_2mb.to_string()),
            ("lifetime_rber_limit".into(), g6(m.lifetime.rber_limit)),
        ];
        for pt in &m.lifetime.points {
            rows.push((format!("p99_rber_pe_{}", pt.pe_cycles), g6(pt.p99_rber)));
        }
        rows.push(("lifetime_pe".into(), m.lifetime.lifetime_pe.map_or_else(|| "none".into(), |v| v.to_string())));
        for (k, v) in rows {
            s.write_record([k, v])?;
        }
        s.flush()?;
        Ok(())
    }
}

// ------------------------------------------------------------------ lifetime

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifetimePoint {
    pub pe_cycles: u32,
    pub p99_rber: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lifetime {
    pub rber_limit: f64,
    pub points: Vec<LifetimePoint>,
    /// Largest P/E point whose 99th-percentile page RBER is within the limit.
    pub lifetime_pe: Option<u32>,
}

/// Fully programmed block at `pe_count`, every page written at `start`.
pub fn random_block(cfg: &DeviceConfig, pe_count: u32, tags: &[u64], start: f64) -> Result<Block> {
    let p = &cfg.channel;
    let mut rng = seed::stream(p.seed, tags);
    let mut b = Block::new(cfg.wordlines_per_block, cfg.cells_per_wordline, p);
    b.set_pe_count(pe_count);
    let c = cfg.cells_per_wordline;
    let data: Vec<Vec<bool>> = (0..b.pages()).map(|_| (0..c).map(|_| rng.random::<bool>()).collect()).collect();
    b.program(&data, &vec![start; b.pages()], p, &mut rng)?;
    Ok(b)
}

/// Nearest-rank percentile of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn lifetime_estimate(cfg: &DeviceConfig) -> Result<Lifetime> {
    let e = &cfg.experiment;
    let p = &cfg.channel;
    let jobs: Vec<(u32, usize)> = e.rfr_pe_points.iter().flat_map(|&pe| (0..e.lifetime_blocks).map(move |b| (pe, b))).collect();
    let rbers: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(pe, b)| {
            let block = random_block(cfg, pe, &[tag::LIFETIME, u64::from(pe), b as u64], 0.0)?;
            let now = e.lifetime_age_days;
            let mut out = Vec::with_capacity(block.pages());
            for w in 0..block.wordlines() {
                let refs = read::wordline_opt_refs(&block, w, now, p)?;
                for page in [2 * w, 2 * w + 1] {
                    out.push(read::rber_of(&block, page, &refs, now, &block.page_truth(page)?, p)?.rber);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rber_limit = cfg.ecc.correctable_rber();
    let points: Vec<LifetimePoint> = e
        .rfr_pe_points
        .iter()
        .enumerate()
        .map(|(i, &pe)| {
            let all: Vec<f64> = rbers[i * e.lifetime_blocks..(i + 1) * e.lifetime_blocks].concat();
            LifetimePoint { pe_cycles: pe, p99_rber: percentile(&all, 99.0) }
        })
        .collect();
    let lifetime_pe = points.iter().filter(|pt| pt.p99_rber <= rber_limit).map(|pt| pt.pe_cycles).max();
    Ok(Lifetime { rber_limit, points, lifetime_pe })
}

// ------------------------------------------------------------------ rfr-eval

#[derive(Debug, Clone, PartialEq)]
pub struct RfrPoint {
    pub pe_cycles: u32,
    pub pages: usize,
    pub failed_pages: usize,
    pub recovered_pages: usize,
    pub errors_before: u64,
    pub errors_after: u64,
    /// Mean over failed pages of `1 - after / before`.
    pub mean_reduction: f64,
    pub aggregate_reduction: f64,
    pub flips: usize,
    pub locality_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfrEval {
    pub rows: Vec<(u32, RecoveryRow)>,
    pub points: Vec<RfrPoint>,
}

struct BlockRecovery {
    rows: Vec<RecoveryRow>,
    pages: usize,
    /// (errors_before, errors_after, recovered) per failed page.
    failed: Vec<(u64, u64, bool)>,
    flips: usize,
    locality_violations: usize,
}

fn recover_block(cfg: &DeviceConfig, pe: u32, b: usize) -> Result<BlockRecovery> {
    let p = &cfg.channel;
    let then = cfg.experiment.rfr_age_days;
    let block = random_block(cfg, pe, &[tag::RFR_EVAL, u64::from(pe), b as u64], 0.0)?;
    let times = RecoveryTimes::new(then, &cfg.rfr);
    let mut out = BlockRecovery { rows: Vec::new(), pages: block.pages(), failed: Vec::new(), flips: 0, locality_violations: 0 };
    for w in 0..block.wordlines() {
        let refs = read::wordline_opt_refs(&block, w, then, p)?;
        let v = block.wordline_voltages(w, then, p)?;
        for page in [2 * w, 2 * w + 1] {
            let truth = block.page_truth(page)?;
            let bits = page_bits(PageKind::of(page), &v, &refs);
            if ecc::decode(&bits, &truth, &cfg.ecc)?.is_corrected() {
                continue;
            }
            let rec = rfr::rfr_recover_page(&block, page, &refs, &cfg.rfr, &cfg.ecc, times, p)?;
            let mut allowed = vec![false; bits.len()];
            for t in &rec.thresholds {
                for s in &t.susceptible {
                    allowed[s.cell] = true;
                }
                out.flips += t.flipped.len();
                out.rows.push(RecoveryRow::from_threshold(b, page, t));
            }
            out.locality_violations += bits.iter().zip(&rec.bits).zip(&allowed).filter(|((x, y), ok)| x != y && !**ok).count();
            out.failed.push((rec.before.raw_errors, rec.after.raw_errors, rec.verdict_after.is_corrected()));
        }
    }
    Ok(out)
}

pub fn rfr_eval(cfg: &DeviceConfig) -> Result<RfrEval> {
    let e = &cfg.experiment;
    let jobs: Vec<(u32, usize)> = e.rfr_pe_points.iter().flat_map(|&pe| (0..e.rfr_blocks).map(move |b| (pe, b))).collect();
    let results: Vec<BlockRecovery> = jobs.par_iter().map(|&(pe, b)| recover_block(cfg, pe, b)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (i, &pe) in e.rfr_pe_points.iter().enumerate() {
        let chunk = &results[i * e.rfr_blocks..(i + 1) * e.rfr_blocks];
        let failed: Vec<(u64, u64, bool)> = chunk.iter().flat_map(|r| r.failed.iter().copied()).collect();
        let before: u64 = failed.iter().map(|f| f.0).sum();
        let after: u64 = failed.iter().map(|f| f.1).sum();
        let mean_reduction =
            if failed.is_empty() { 0.0 } else { failed.iter().map(|f| 1.0 - f.1 as f64 / f.0 as f64).sum::<f64>() / failed.len() as f64 };
        points.push(RfrPoint {
            pe_cycles: pe,
            pages: chunk.iter().map(|r| r.pages).sum(),
            failed_pages: failed.len(),
            recovered_pages: failed.iter().filter(|f| f.2).count(),
            errors_before: before,
            errors_after: after,
            mean_reduction,
            aggregate_reduction: if before > 0 { 1.0 - after as f64 / before as f64 } else { 0.0 },
            flips: chunk.iter().map(|r| r.flips).sum(),
            locality_violations: chunk.iter().map(|r| r.locality_violations).sum(),
        });
        rows.extend(chunk.iter().flat_map(|r| r.rows.iter().cloned().map(move |row| (pe, row))));
    }
    Ok(RfrEval { rows, points })
}

impl RfrEval {
    pub fn write<W: Write, S: Write>(&self, mut w: csv::Writer<W>, mut s: csv::Writer<S>) -> Result<()> {
        let mut header = vec!["pe_cycles"];
        header.extend(RecoveryRow::HEADER);
        w.write_record(header)?;
        for (pe, row) in &self.rows {
            let mut rec = vec![pe.to_string()];
            rec.extend(row.fields());
            w.write_record(rec)?;
        }
        w.flush()?;
        s.write_record([
            "pe_cycles",
            "pages",
            "failed_pages",
            "recovered_pages",
            "errors_before",
            "errors_after",
            "mean_reduction",
            "aggregate_reduction",
            "flips",
            "locality_violations",
        ])?;
        for pt in &self.points {
            s.write_record([
                pt.pe_cycles.to_string(),
                pt.pages.to_string(),
                pt.failed_pages.to_string(),
                pt.recovered_pages.to_string(),
                pt.errors_before.to_string(),
                pt.errors_after.to_string(),
                g6(pt.mean_reduction),
                g6(pt.aggregate_reduction),
                pt.flips.to_string(),
                pt.locality_violations.to_string(),
            ])?;
        }
        s.flush()?;
        Ok(())
    }
}
