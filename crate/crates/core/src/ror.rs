//! Retention-optimized reading.
//!
//! Once per retrigger period each block's last-programmed wordline is read
//! repeatedly to learn its optimal references; because that wordline is the
//! youngest in the block, the learned values bound the OPT of every other page
//! from above. Reads then start at the learned values and only step downward.

use std::io::{Read, Write};

use crate::channel::{page_wordline, Block, ChannelParams, PageKind};
use crate::ecc::{self, DecodeOutcome, EccConfig};
use crate::error::{Error, Result};
use crate::read::{page_bits, ReadRefs, Threshold, GRID_STEP};

#[derive(Debug, Clone, PartialEq)]
pub struct RorConfig {
    pub v_default: ReadRefs,
    /// Search step in normalized units; even and at least one grid step.
    pub delta_v: u32,
    pub retrigger_period_days: f64,
    /// Latency units charged per page read attempt.
    pub page_read_cost: f64,
}

impl RorConfig {
    pub fn new(params: &ChannelParams) -> RorConfig {
        RorConfig { v_default: ReadRefs::midpoints(params), delta_v: 4, retrigger_period_days: 1.0, page_read_cost: 50.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_v < GRID_STEP || !self.delta_v.is_multiple_of(GRID_STEP) {
            return Err(Error::InvalidConfig(format!("ror.delta_v must be even and >= 2, got {}", self.delta_v)));
        }
        if !(self.retrigger_period_days > 0.0) {
            return Err(Error::InvalidConfig("ror.retrigger_period_days must be positive".into()));
        }
        if !(self.page_read_cost >= 0.0) {
            return Err(Error::InvalidConfig("ror.page_read_cost must be non-negative".into()));
        }
        Ok(())
    }
}

/// Result of a Step 1-3 search along one reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Climb {
    pub voltage: u32,
    pub errors: u64,
    pub reads: u32,
}

/// Searches `[lo, hi]` in steps of `step` starting from `start`.
///
/// Moves downward while the error count does not increase, then upward under
/// the same rule. A zero count ends the search immediately.
pub fn hill_climb<F>(start: u32, step: u32, lo: u32, hi: u32, mut errors_at: F) -> Climb
where
    F: FnMut(u32) -> u64,
{
    debug_assert!(step > 0 && lo <= start && start <= hi);
    let mut best = Climb { voltage: start, errors: errors_at(start), reads: 1 };
    if best.errors == 0 {
        return best;
    }
    let mut moved = |best: &mut Climb, down: bool| loop {
        let next = if down {
            match best.voltage.checked_sub(step) {
                Some(v) if v >= lo => v,
                _ => return false,
            }
        } else {
            match best.voltage.checked_add(step) {
                Some(v) if v <= hi => v,
                _ => return false,
            }
        };
        let e = errors_at(next);
        best.reads += 1;
        if e > best.errors {
            return false;
        }
        best.voltage = next;
        best.errors = e;
        if e == 0 {
            return true;
        }
    };
    if moved(&mut best, true) {
        return best;
    }
    moved(&mut best, false);
    best
}

/// A page's cell voltages and programmed bits at one instant, for repeated sensing.
#[derive(Debug, Clone)]
pub struct PageView {
    pub page: usize,
    pub kind: PageKind,
    pub voltages: Vec<f64>,
    pub truth: Vec<bool>,
}

impl PageView {
    pub fn new(block: &Block, page: usize, now: f64, params: &ChannelParams) -> Result<PageView> {
        let truth = block.page_truth(page)?;
        let voltages = block.wordline_voltages(page_wordline(page), now, params)?;
        Ok(PageView { page, kind: PageKind::of(page), voltages, truth })
    }

    pub fn read(&self, refs: &ReadRefs) -> Vec<bool> {
        page_bits(self.kind, &self.voltages, refs)
    }

    pub fn raw_errors(&self, refs: &ReadRefs) -> u64 {
        let kind = self.kind;
        self.voltages.iter().zip(&self.truth).filter(|(v, t)| crate::read::sense_bit(kind, **v, refs) != **t).count() as u64
    }

    pub fn decode(&self, refs: &ReadRefs, ecc: &EccConfig) -> DecodeOutcome {
        ecc::verdict(self.raw_errors(refs), ecc)
    }
}

/// One block's learned references, one byte each (voltage / 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    bytes: [u8; 3],
    pub learned_at: f64,
}

impl TableEntry {
    pub fn new(refs: ReadRefs, learned_at: f64) -> TableEntry {
        let b = refs.as_array().map(|v| (v / GRID_STEP) as u8);
        TableEntry { bytes: b, learned_at }
    }

    pub fn from_bytes(bytes: [u8; 3], learned_at: f64) -> Result<TableEntry> {
        let v = bytes.map(|b| u32::from(b) * GRID_STEP);
        ReadRefs::new(v[0], v[1], v[2])?;
        Ok(TableEntry { bytes, learned_at })
    }

    pub fn bytes(&self) -> [u8; 3] {
        self.bytes
    }

    pub fn refs(&self) -> ReadRefs {
        let v = self.bytes.map(|b| u32::from(b) * GRID_STEP);
        ReadRefs::new(v[0], v[1], v[2]).expect("entries are validated on construction")
    }
}

const TABLE_MAGIC: &[u8; 8] = b"NRVTBL01";

/// Per-block learned references held in controller memory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VoltageTable {
    entries: Vec<Option<TableEntry>>,
}

impl VoltageTable {
    pub fn new(blocks: usize) -> VoltageTable {
        VoltageTable { entries: vec![None; blocks] }
    }

    pub fn blocks(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, block: usize) -> Option<&TableEntry> {
        self.entries.get(block).and_then(Option::as_ref)
    }

    pub fn set(&mut self, block: usize, entry: TableEntry) -> Result<()> {
        let slot = self.entries.get_mut(block).ok_or(Error::BlockOutOfRange(block))?;
        *slot = Some(entry);
        Ok(())
    }

    pub fn clear(&mut self, block: usize) {
        if let Some(slot) = self.entries.get_mut(block) {
            *slot = None;
        }
    }

    pub fn entries(&self) -> &[Option<TableEntry>] {
        &self.entries
    }

    /// Bytes of reference storage: three per block.
    pub fn storage_bytes(&self) -> u64 {
        3 * self.entries.len() as u64
    }

    /// Whether `block`'s entry is older than the retrigger period at `now`.
    pub fn is_stale(&self, block: usize, now: f64, cfg: &RorConfig) -> bool {
        self.get(block).is_none_or(|e| now - e.learned_at >= cfg.retrigger_period_days)
    }

    /// Writes the table file: magic, little-endian `u32` block count, then 3-byte records.
    /// Missing entries are written as `00 00 00`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&e.map_or([0; 3], |e| e.bytes))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 3 * self.entries.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads a table file; entries get `learned_at` as their learn time.
    pub fn read_from<R: Read>(mut r: R, learned_at: f64) -> Result<VoltageTable> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Snapshot("truncated table header".into()))?;
        if &magic != TABLE_MAGIC {
            return Err(Error::Snapshot("bad table magic".into()));
        }
        let mut n = [0u8; 4];
        r.read_exact(&mut n).map_err(|_| Error::Snapshot("truncated table header".into()))?;
        let n = u32::from_le_bytes(n) as usize;
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            let mut rec = [0u8; 3];
            r.read_exact(&mut rec).map_err(|_| Error::Snapshot(format!("truncated table at record {i}")))?;
            if rec == [0; 3] {
                entries.push(None);
            } else {
                entries.push(Some(TableEntry::from_bytes(rec, learned_at).map_err(|e| Error::Snapshot(format!("record {i}: {e}")))?));
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Snapshot("trailing bytes after table".into()));
        }
        Ok(VoltageTable { entries })
    }
}

/// Geometry used to size the reference table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceGeometry {
    pub capacity_bytes: u64,
    pub block_bytes: u64,
}

impl DeviceGeometry {
    pub fn block_count(&self) -> u64 {
        self.capacity_bytes / self.block_bytes
    }
}

pub fn table_storage_bytes(geometry: &DeviceGeometry) -> u64 {
    3 * geometry.block_count()
}

/// Result of learning one block's references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreOptimization {
    pub entry: TableEntry,
    pub reads_performed: u32,
}

/// Pages the pre-optimization reads: the highest-numbered LSB and MSB pages.
pub fn probe_pages(block: &Block) -> Result<(usize, usize)> {
    if block.is_erased() {
        return Err(Error::ErasedBlock);
    }
    if !block.is_programmed() {
        let missing = block.page_program_times().iter().position(Option::is_none).unwrap_or(0);
        return Err(Error::UnprogrammedPage(missing));
    }
    let last = block.last_programmed_page().ok_or(Error::ErasedBlock)?;
    let (lsb, msb) = if last % 2 == 1 { (last - 1, last) } else { (last, last + 1) };
    Ok((lsb, msb))
}

/// Learns the block's upper-bound references from its highest-numbered pages.
///
/// Thresholds are searched one at a time: vb on the LSB page, then vc and va on
/// the MSB page, each holding the others at their best value so far.
pub fn pre_optimize_block(
    block: &Block,
    cfg: &RorConfig,
    ecc_cfg: &EccConfig,
    now: f64,
    params: &ChannelParams,
) -> Result<PreOptimization> {
    let (lsb_page, msb_page) = probe_pages(block)?;
    let lsb = PageView::new(block, lsb_page, now, params)?;
    let msb = PageView::new(block, msb_page, now, params)?;
    let mut refs = cfg.v_default;
    let mut reads = 0;
    for (t, view) in [(Threshold::P1P2, &lsb), (Threshold::P2P3, &msb), (Threshold::ErP1, &msb)] {
        let (lo, hi) = refs.range(t);
        let start = refs.get(t).clamp(lo, hi);
        let base = refs;
        let climb = hill_climb(start, cfg.delta_v, lo, hi, |v| {
            let r = base.with(t, v).expect("within range");
            view.decode(&r, ecc_cfg).error_count()
        });
        reads += climb.reads;
        refs = refs.with(t, climb.voltage)?;
    }
    Ok(PreOptimization { entry: TableEntry::new(refs, now), reads_performed: reads })
}

/// Outcome of a retried page read.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryRead {
    /// Corrected page data, or `None` when every attempt failed.
    pub data: Option<Vec<bool>>,
    pub retries: u32,
    pub latency: f64,
    pub final_outcome: DecodeOutcome,
    pub final_refs: ReadRefs,
    /// Set when a missing table entry forced the naive path.
    pub fell_back: bool,
}

impl RetryRead {
    pub fn succeeded(&self) -> bool {
        self.data.is_some()
    }
}

/// Reference a retry loop moves for a page: vb for LSB pages, vc for MSB pages.
pub fn retry_threshold(kind: PageKind) -> Threshold {
    match kind {
        PageKind::Lsb => Threshold::P1P2,
        PageKind::Msb => Threshold::P2P3,
    }
}

fn attempt_sequence(view: &PageView, candidates: impl Iterator<Item = ReadRefs>, cfg: &RorConfig, ecc_cfg: &EccConfig) -> RetryRead {
    let mut retries = 0;
    let mut last: Option<(DecodeOutcome, ReadRefs)> = None;
    for refs in candidates {
        retries += 1;
        let out = view.decode(&refs, ecc_cfg);
        last = Some((out, refs));
        if out.is_corrected() {
            break;
        }
    }
    let (outcome, refs) = last.expect("at least one attempt");
    RetryRead {
        data: outcome.is_corrected().then(|| view.truth.clone()),
        retries,
        latency: f64::from(retries) * cfg.page_read_cost + ecc::decode_latency(outcome.error_count(), ecc_cfg),
        final_outcome: outcome,
        final_refs: refs,
        fell_back: false,
    }
}

fn downward(start: ReadRefs, t: Threshold, step: u32) -> impl Iterator<Item = ReadRefs> {
    let (lo, _) = start.range(t);
    let s = start.get(t);
    (0..)
        .map(move |k: u32| s.checked_sub(k * step))
        .take_while(move |v| v.is_some_and(|v| v >= lo))
        .map(move |v| start.with(t, v.unwrap()).expect("within range"))
}

fn upward(start: ReadRefs, t: Threshold, step: u32) -> impl Iterator<Item = ReadRefs> {
    let (_, hi) = start.range(t);
    let s = start.get(t);
    (1..).map(move |k: u32| s + k * step).take_while(move |v| *v <= hi).map(move |v| start.with(t, v).expect("within range"))
}

/// Baseline read-retry: from `v_default` step the page's reference down to the
/// rail, then up from above `v_default`, until ECC succeeds.
pub fn naive_read_retry_view(view: &PageView, cfg: &RorConfig, ecc_cfg: &EccConfig) -> RetryRead {
    let t = retry_threshold(view.kind);
    let start = cfg.v_default;
    attempt_sequence(view, downward(start, t, cfg.delta_v).chain(upward(start, t, cfg.delta_v)), cfg, ecc_cfg)
}

/// Improved read-retry: start at the learned references and only step downward.
pub fn ror_read_view(view: &PageView, start: ReadRefs, cfg: &RorConfig, ecc_cfg: &EccConfig) -> RetryRead {
    let t = retry_threshold(view.kind);
    attempt_sequence(view, downward(start, t, cfg.delta_v), cfg, ecc_cfg)
}

pub fn naive_read_retry(
    block: &Block,
    page: usize,
    cfg: &RorConfig,
    ecc_cfg: &EccConfig,
    now: f64,
    params: &ChannelParams,
) -> Result<RetryRead> {
    let view = PageView::new(block, page, now, params)?;
    Ok(naive_read_retry_view(&view, cfg, ecc_cfg))
}

/// Reads `page` of block `block_id` starting from its table entry. Without an
/// entry the naive loop runs and `fell_back` is set.
#[allow(clippy::too_many_arguments)]
pub fn ror_read(
    block: &Block,
    block_id: usize,
    page: usize,
    table: &VoltageTable,
    cfg: &RorConfig,
    ecc_cfg: &EccConfig,
    now: f64,
    params: &ChannelParams,
) -> Result<RetryRead> {
    let view = PageView::new(block, page, now, params)?;
    Ok(match table.get(block_id) {
        Some(entry) => ror_read_view(&view, entry.refs(), cfg, ecc_cfg),
        None => RetryRead { fell_back: true, ..naive_read_retry_view(&view, cfg, ecc_cfg) },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::State;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn degenerate_params() -> ChannelParams {
        ChannelParams { state_sigma: [1e-6; 4], leak_lognorm_sigma: 0.0, ..ChannelParams::default() }
    }

    fn programmed(params: &ChannelParams, w: usize, c: usize, schedule: Vec<f64>, seed: u64) -> Block {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Block::new(w, c, params);
        let data: Vec<Vec<bool>> = (0..2 * w).map(|_| (0..c).map(|_| rand::Rng::random::<bool>(&mut rng)).collect()).collect();
        b.program(&data, &schedule, params, &mut rng).unwrap();
        b
    }

    #[test]
    fn climb_walks_a_plateau_of_capped_counts() {
        // Uncorrectable (41) above 300, valley at 280, rising below.
        let f = |v: u32| if v > 300 { 41 } else { (v as i64 - 280).unsigned_abs() / 2 + 3 };
        let c = hill_climb(400, 4, 0, 510, f);
        assert_eq!(c.voltage, 280);
        assert_eq!(c.errors, 3);
    }

    #[test]
    fn climb_probes_upward_when_lower_is_worse() {
        let f = |v: u32| (v as i64 - 420).unsigned_abs() + 1;
        let c = hill_climb(400, 4, 0, 510, f);
        assert_eq!(c.voltage, 420);
    }

    #[test]
    fn climb_stops_at_zero() {
        let c = hill_climb(200, 4, 0, 510, |_| 0);
        assert_eq!(c, Climb { voltage: 200, errors: 0, reads: 1 });
    }

    #[test]
    fn climb_respects_rail() {
        let c = hill_climb(8, 4, 0, 510, |_| 7);
        assert_eq!(c.voltage, 510 - 2);
        let c = hill_climb(8, 4, 0, 12, |v| if v == 0 { 1 } else { 7 });
        assert_eq!(c.voltage, 0);
        assert_eq!(c.errors, 1);
    }

    proptest! {
        #[test]
        fn climb_finds_minimum_of_unimodal_profiles(
            opt in 0u32..=127, left in proptest::collection::vec(0u64..5, 128), right in proptest::collection::vec(0u64..5, 128),
            floor in 1u64..20, start in 0u32..=127,
        ) {
            // Grid index i maps to voltage 4i; the profile never rises toward the valley.
            let n = 128usize;
            let mut prof = vec![0u64; n];
            prof[opt as usize] = floor;
            for i in (0..opt as usize).rev() { prof[i] = prof[i + 1] + left[i]; }
            for i in opt as usize + 1..n { prof[i] = prof[i - 1] + right[i]; }
            let min = *prof.iter().min().unwrap();
            let c = hill_climb(4 * start, 4, 0, 4 * (n as u32 - 1), |v| prof[(v / 4) as usize]);
            prop_assert_eq!(c.errors, min);
            prop_assert_eq!(prof[(c.voltage / 4) as usize], min);
        }
    }

    #[test]
    fn degenerate_fresh_block_keeps_default_refs() {
        let p = degenerate_params();
        let cfg = RorConfig::new(&p);
        let b = programmed(&p, 4, 256, vec![0.0; 8], 1);
        let out = pre_optimize_block(&b, &cfg, &EccConfig::default(), 0.0, &p).unwrap();
        assert_eq!(out.entry.refs(), cfg.v_default);
        assert_eq!(out.reads_performed, 3);
    }

    #[test]
    fn erased_block_rejected() {
        let p = ChannelParams::default();
        let b = Block::new(2, 8, &p);
        let cfg = RorConfig::new(&p);
        assert_eq!(pre_optimize_block(&b, &cfg, &EccConfig::default(), 0.0, &p), Err(Error::ErasedBlock));
    }

    #[test]
    fn table_entry_round_trips_through_bytes() {
        let r = ReadRefs::new(158, 244, 330).unwrap();
        let e = TableEntry::new(r, 3.0);
        assert_eq!(e.bytes(), [79, 122, 165]);
        assert_eq!(e.refs(), r);
        assert!(TableEntry::from_bytes([5, 5, 6], 0.0).is_err());
    }

    #[test]
    fn table_file_layout() {
        let mut t = VoltageTable::new(3);
        t.set(1, TableEntry::new(ReadRefs::new(2, 4, 6).unwrap(), 0.0)).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..8], b"NRVTBL01");
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(&bytes[12..], &[0, 0, 0, 1, 2, 3, 0, 0, 0]);
        let back = VoltageTable::read_from(&bytes[..], 0.0).unwrap();
        assert_eq!(back, t);
        assert!(VoltageTable::read_from(&bytes[..bytes.len() - 1], 0.0).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(VoltageTable::read_from(&bad[..], 0.0).is_err());
        assert_eq!(t.storage_bytes(), 9);
    }

    #[test]
    fn storage_sizing() {
        let g = DeviceGeometry { capacity_bytes: 512 << 30, block_bytes: 2 << 20 };
        assert_eq!(g.block_count(), 262_144);
        assert_eq!(table_storage_bytes(&g), 786_432);
        assert_eq!(table_storage_bytes(&g), 768 * 1024);
        assert_eq!(table_storage_bytes(&DeviceGeometry { capacity_bytes: 10, block_bytes: 10 }), 3);
        let double = DeviceGeometry { capacity_bytes: 1024 << 30, ..g };
        assert_eq!(table_storage_bytes(&double), 2 * table_storage_bytes(&g));
    }

    /// A page whose cells are all P2/P3 at fixed voltages; MSB errors depend only on vc.
    fn synthetic_msb_view(p2_volts: &[f64], p3_volts: &[f64]) -> PageView {
        let voltages: Vec<f64> = p2_volts.iter().chain(p3_volts).copied().collect();
        let truth: Vec<bool> =
            p2_volts.iter().map(|_| PageKind::Msb.bit(State::P2)).chain(p3_volts.iter().map(|_| PageKind::Msb.bit(State::P3))).collect();
        PageView { page: 1, kind: PageKind::Msb, voltages, truth }
    }

    #[test]
    fn naive_retry_counts_attempts_to_first_success() {
        let p = ChannelParams::default();
        let cfg = RorConfig::new(&p);
        let ecc = EccConfig { t_capability: 0, ..EccConfig::default() };
        let d = cfg.v_default.vc();
        // Correct only once vc <= d - 12 (P3 cells sit at d - 12).
        let view = synthetic_msb_view(&[300.0; 10], &[f64::from(d - 12); 10]);
        let r = naive_read_retry_view(&view, &cfg, &ecc);
        assert_eq!(r.retries, 4);
        assert!(r.succeeded());
        assert_eq!(r.final_refs.vc(), d - 12);
        assert_eq!(r.latency, 4.0 * cfg.page_read_cost + ecc.decode_base_cost);
    }

    #[test]
    fn naive_retry_default_optimal_is_one_attempt() {
        let p = ChannelParams::default();
        let cfg = RorConfig::new(&p);
        let view = synthetic_msb_view(&[340.0; 10], &[450.0; 10]);
        assert_eq!(naive_read_retry_view(&view, &cfg, &EccConfig::default()).retries, 1);
    }

    #[test]
    fn naive_retry_exhaustion_sweeps_both_directions() {
        let p = ChannelParams::default();
        let cfg = RorConfig::new(&p);
        let ecc = EccConfig { t_capability: 0, ..EccConfig::default() };
        // P2 above every P3 cell: no vc separates them.
        let view = synthetic_msb_view(&[400.0; 4], &[300.0; 4]);
        let r = naive_read_retry_view(&view, &cfg, &ecc);
        let (lo, hi) = cfg.v_default.range(Threshold::P2P3);
        let d = cfg.v_default.vc();
        let expected = (d - lo) / cfg.delta_v + 1 + (hi - d) / cfg.delta_v;
        assert!(!r.succeeded());
        assert_eq!(r.retries, expected);
        assert_eq!(r.final_outcome, DecodeOutcome::Uncorrectable(1));
    }

    #[test]
    fn ror_read_accurate_table_single_attempt() {
        let p = ChannelParams::default();
        let cfg = RorConfig::new(&p);
        let ecc = EccConfig::default();
        let b = programmed(&p, 8, 512, vec![0.0; 16], 4);
        let mut table = VoltageTable::new(1);
        let pre = pre_optimize_block(&b, &cfg, &ecc, 0.0, &p).unwrap();
        table.set(0, pre.entry).unwrap();
        for page in 0..16 {
            let r = ror_read(&b, 0, page, &table, &cfg, &ecc, 0.0, &p).unwrap();
            assert_eq!(r.retries, 1, "page {page}");
            assert!(!r.fell_back);
            assert_eq!(r.data.unwrap(), b.page_truth(page).unwrap());
        }
    }

    #[test]
    fn missing_entry_falls_back_to_naive() {
        let p = ChannelParams::default();
        let cfg = RorConfig::new(&p);
        let ecc = EccConfig::default();
        let b = programmed(&p, 2, 256, vec![0.0; 4], 2);
        let table = VoltageTable::new(1);
        let r = ror_read(&b, 0, 1, &table, &cfg, &ecc, 3.0, &p).unwrap();
        assert!(r.fell_back);
        let n = naive_read_retry(&b, 1, &cfg, &ecc, 3.0, &p).unwrap();
        assert_eq!(r.retries, n.retries);
    }

    #[test]
    fn config_validation() {
        let p = ChannelParams::default();
        let mut c = RorConfig::new(&p);
        assert!(c.validate().is_ok());
        c.delta_v = 3;
        assert!(c.validate().is_err());
        c.delta_v = 0;
        assert!(c.validate().is_err());
    }
}
