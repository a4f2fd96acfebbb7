use rand::Rng;
use rayon::prelude::*;

use crate::channel::Block;
use crate::error::{Error, Result};
use crate::harness::config::DeviceConfig;
use crate::ror::{self, PreOptimization, RetryRead, VoltageTable};
use crate::seed::{self, tag};

/// Running counters kept by the device.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeviceStats {
    pub programs: u64,
    pub reads: u64,
    pub read_failures: u64,
    pub read_attempts: u64,
    pub pre_opt_runs: u64,
    pub pre_opt_reads: u64,
    pub skipped_reads: u64,
}

/// A simulated SSD: blocks, a monotone clock, and the controller's reference table.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub(crate) config: DeviceConfig,
    pub(crate) blocks: Vec<Block>,
    /// Programs issued per block; keys each block's next RNG stream.
    pub(crate) generations: Vec<u64>,
    pub(crate) clock: f64,
    pub(crate) table: VoltageTable,
    pub(crate) stats: DeviceStats,
}

impl Device {
    pub fn new(config: DeviceConfig) -> Result<Device> {
        config.validate()?;
        let blocks = (0..config.blocks)
            .map(|_| {
                let mut b = Block::new(config.wordlines_per_block, config.cells_per_wordline, &config.channel);
                b.set_pe_count(config.pe_cycles);
                b
            })
            .collect();
        Ok(Device {
            generations: vec![0; config.blocks],
            table: VoltageTable::new(config.blocks),
            blocks,
            clock: 0.0,
            stats: DeviceStats::default(),
            config,
        })
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> Result<&Block> {
        self.blocks.get(b).ok_or(Error::BlockOutOfRange(b))
    }

    pub fn table(&self) -> &VoltageTable {
        &self.table
    }

    pub fn stats(&self) -> DeviceStats {
        self.stats
    }

    pub fn generations(&self) -> &[u64] {
        &self.generations
    }

    /// Moves the clock forward; time never runs backwards.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if !(t >= self.clock) {
            return Err(Error::ClockBackwards { now: self.clock, requested: t });
        }
        self.clock = t;
        Ok(())
    }

    /// Programs block `b` with random data, page `p` at `start + p * page_gap`.
    /// A block holding data is erased first.
    pub fn program_block(&mut self, b: usize, start: f64, page_gap: f64) -> Result<()> {
        let params = self.config.channel.clone();
        let gen = *self.generations.get(b).ok_or(Error::BlockOutOfRange(b))?;
        let block = &mut self.blocks[b];
        if !block.is_erased() {
            block.erase(&params, &mut seed::stream(params.seed, &[tag::ERASE, b as u64, gen]));
        }
        let mut rng = seed::stream(params.seed, &[tag::PROGRAM, b as u64, gen]);
        let c = block.cells_per_wordline();
        let data: Vec<Vec<bool>> = (0..block.pages()).map(|_| (0..c).map(|_| rng.random::<bool>()).collect()).collect();
        let schedule: Vec<f64> = (0..block.pages()).map(|p| start + p as f64 * page_gap).collect();
        block.program(&data, &schedule, &params, &mut rng)?;
        self.generations[b] += 1;
        self.table.clear(b);
        self.stats.programs += 1;
        Ok(())
    }

    /// Learns block `b`'s references at the current clock.
    pub fn pre_optimize(&mut self, b: usize) -> Result<PreOptimization> {
        let cfg = &self.config;
        let out = ror::pre_optimize_block(self.block(b)?, &cfg.ror, &cfg.ecc, self.clock, &cfg.channel)?;
        self.table.set(b, out.entry)?;
        self.stats.pre_opt_runs += 1;
        self.stats.pre_opt_reads += u64::from(out.reads_performed);
        Ok(out)
    }

    /// Re-learns every programmed block in parallel (the power-on trigger).
    /// Returns total reads spent.
    pub fn pre_optimize_all(&mut self) -> Result<u64> {
        let cfg = &self.config;
        let now = self.clock;
        let results: Vec<Option<PreOptimization>> = self
            .blocks
            .par_iter()
            .map(|b| if b.is_programmed() { ror::pre_optimize_block(b, &cfg.ror, &cfg.ecc, now, &cfg.channel).map(Some) } else { Ok(None) })
            .collect::<Result<_>>()?;
        let mut reads = 0;
        for (b, r) in results.into_iter().enumerate() {
            if let Some(r) = r {
                self.table.set(b, r.entry)?;
                self.stats.pre_opt_runs += 1;
                reads += u64::from(r.reads_performed);
            }
        }
        self.stats.pre_opt_reads += reads;
        Ok(reads)
    }

    /// Controller read: refreshes a stale table entry, then runs the improved read-retry.
    pub fn read_page(&mut self, b: usize, page: usize) -> Result<RetryRead> {
        let block = self.block(b)?;
        block.page_truth(page)?;
        if self.table.is_stale(b, self.clock, &self.config.ror) {
            self.pre_optimize(b)?;
        }
        let cfg = &self.config;
        let r = ror::ror_read(&self.blocks[b], b, page, &self.table, &cfg.ror, &cfg.ecc, self.clock, &cfg.channel)?;
        self.stats.reads += 1;
        self.stats.read_attempts += u64::from(r.retries);
        if !r.succeeded() {
            self.stats.read_failures += 1;
        }
        Ok(r)
    }

    pub(crate) fn note_skipped_read(&mut self) {
        self.stats.skipped_reads += 1;
    }

    /// Retention age of every programmed page at the current clock, as `(block, page, age)`.
    pub fn page_ages(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            for (p, t) in block.page_program_times().iter().enumerate() {
                if let Some(t) = t {
                    if *t <= self.clock {
                        out.push((b, p, self.clock - t));
                    }
                }
            }
        }
        out
    }
}
