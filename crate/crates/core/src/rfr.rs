//! Retention failure recovery.
//!
//! For a page that ECC could not correct, cells sensed close to a threshold are
//! re-examined after extra retention. Cells that barely move are slow leakers and
//! cells that drop quickly are fast leakers. A slow cell read above the threshold
//! most likely belongs to the lower state, and a fast cell read below it most
//! likely belongs to the upper state; those two groups get their bit flipped.

use crate::channel::{page_wordline, Block, ChannelParams, PageKind, State};
use crate::ecc::{self, DecodeOutcome, EccConfig};
use crate::error::{Error, Result};
use crate::read::{page_bits, RberReport, ReadRefs, Threshold, GRID_MAX, GRID_STEP};

/// How the controller decides whether a susceptible cell leaks fast.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakSignal {
    /// Per-cell voltage estimate from a grid-step sweep across the window,
    /// before and after the extra retention.
    Sweep,
    /// Only the three window reads; fast iff the cell's bin dropped.
    BinChange,
}

impl LeakSignal {
    pub fn name(self) -> &'static str {
        match self {
            LeakSignal::Sweep => "sweep",
            LeakSignal::BinChange => "bin-change",
        }
    }

    pub fn parse(s: &str) -> Option<LeakSignal> {
        match s {
            "sweep" => Some(LeakSignal::Sweep),
            "bin-change" => Some(LeakSignal::BinChange),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfrConfig {
    /// Fixed margin; `None` derives it from the pooled sigma near the threshold.
    pub delta_margin: Option<u32>,
    pub delta_sigma_mult: f64,
    pub extra_retention_days: f64,
    /// Indexed by [`Threshold::index`].
    pub enabled: [bool; 3],
    pub leak_signal: LeakSignal,
    /// Minimum measured drop for a fast leaker; `None` uses the model midpoint.
    pub fast_shift: Option<f64>,
}

impl Default for RfrConfig {
    fn default() -> Self {
        RfrConfig {
            delta_margin: None,
            delta_sigma_mult: 1.0,
            extra_retention_days: 12.0,
            enabled: [true; 3],
            leak_signal: LeakSignal::Sweep,
            fast_shift: None,
        }
    }
}

impl RfrConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.delta_margin {
            if d == 0 || d % GRID_STEP != 0 {
                return Err(Error::InvalidConfig(format!("rfr.delta_margin must be even and > 0, got {d}")));
            }
        }
        if !(self.delta_sigma_mult > 0.0) {
            return Err(Error::InvalidConfig("rfr.delta_sigma_mult must be positive".into()));
        }
        if !(self.extra_retention_days > 0.0) {
            return Err(Error::InvalidConfig("rfr.extra_retention_days must be positive".into()));
        }
        Ok(())
    }

    /// Thresholds processed for a page, fastest-drifting first.
    pub fn order(&self, kind: PageKind) -> Vec<Threshold> {
        [Threshold::P2P3, Threshold::P1P2, Threshold::ErP1]
            .into_iter()
            .filter(|t| t.page_kind() == kind && self.enabled[t.index()])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    BelowOpt,
    AboveOpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeakSpeed {
    Fast,
    Slow,
}

/// Classification of one susceptible cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellClass {
    pub cell: usize,
    pub position: Position,
    pub leak: LeakSpeed,
}

impl CellClass {
    /// Type 1..=4: slow/below, slow/above, fast/below, fast/above.
    pub fn cell_type(&self) -> u8 {
        match (self.leak, self.position) {
            (LeakSpeed::Slow, Position::BelowOpt) => 1,
            (LeakSpeed::Slow, Position::AboveOpt) => 2,
            (LeakSpeed::Fast, Position::BelowOpt) => 3,
            (LeakSpeed::Fast, Position::AboveOpt) => 4,
        }
    }

    /// Types 2 and 3 are the likely misreads.
    pub fn should_flip(&self) -> bool {
        matches!(self.cell_type(), 2 | 3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Susceptible {
    pub cell: usize,
    pub position: Position,
}

/// The three reads around a threshold: references `opt - delta`, `opt`, `opt + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub opt: u32,
    pub delta: u32,
}

impl Window {
    pub fn new(opt: u32, delta: u32) -> Result<Window> {
        let (lo, hi) = (i64::from(opt) - i64::from(delta), i64::from(opt) + i64::from(delta));
        if lo < 0 || hi > i64::from(GRID_MAX) {
            return Err(Error::WindowOutOfRange { lo, hi });
        }
        Ok(Window { opt, delta })
    }

    pub fn lo(&self) -> u32 {
        self.opt - self.delta
    }

    pub fn hi(&self) -> u32 {
        self.opt + self.delta
    }

    fn three_refs(&self) -> [u32; 3] {
        [self.lo(), self.opt, self.hi()]
    }

    fn sweep_refs(&self) -> Vec<u32> {
        (self.lo()..=self.hi()).step_by(GRID_STEP as usize).collect()
    }
}

/// Per-cell count of references at or below the cell's voltage, one sensing per reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scan {
    pub refs: Vec<u32>,
    pub levels: Vec<u16>,
}

impl Scan {
    pub fn take(voltages: &[f64], refs: Vec<u32>) -> Scan {
        let levels = voltages.iter().map(|v| refs.iter().filter(|r| *v >= f64::from(**r)).count() as u16).collect();
        Scan { refs, levels }
    }

    pub fn reads(&self) -> usize {
        self.refs.len()
    }

    /// Measured voltage: the highest reference the cell reached, or one grid
    /// step below the first reference when it reached none.
    pub fn measured(&self, cell: usize) -> f64 {
        match self.levels[cell] {
            0 => f64::from(self.refs[0]) - f64::from(GRID_STEP),
            n => f64::from(self.refs[n as usize - 1]),
        }
    }
}

/// Three-read identification on precomputed voltages.
pub fn susceptible_from_voltages(voltages: &[f64], window: Window) -> (Scan, Vec<Susceptible>) {
    let scan = Scan::take(voltages, window.three_refs().to_vec());
    let set = scan
        .levels
        .iter()
        .enumerate()
        .filter(|(_, l)| (1..=2).contains(*l))
        .map(|(cell, l)| Susceptible { cell, position: if *l >= 2 { Position::AboveOpt } else { Position::BelowOpt } })
        .collect();
    (scan, set)
}

fn check_page_threshold(page: usize, threshold: Threshold) -> Result<()> {
    if threshold.page_kind() != PageKind::of(page) {
        return Err(Error::InvalidConfig(format!("threshold {} is not sensed by page {page}", threshold.name())));
    }
    Ok(())
}

/// Reads the page at `opt - delta`, `opt` and `opt + delta` and returns the
/// cells whose outer reads disagree.
#[allow(clippy::too_many_arguments)]
pub fn identify_susceptible(
    block: &Block,
    page: usize,
    threshold: Threshold,
    opt: u32,
    delta: u32,
    now: f64,
    params: &ChannelParams,
) -> Result<Vec<Susceptible>> {
    check_page_threshold(page, threshold)?;
    let window = Window::new(opt, delta)?;
    block.page_truth(page)?;
    let volts = block.wordline_voltages(page_wordline(page), now, params)?;
    Ok(susceptible_from_voltages(&volts, window).1)
}

/// Drop a median leaker of either adjacent state shows over the interval,
/// averaged across the two states.
pub fn model_fast_shift(threshold: Threshold, age_then: f64, age_after: f64, pe_count: u32, params: &ChannelParams) -> f64 {
    let lower = params.shift(threshold.lower(), 1.0, age_after, pe_count) - params.shift(threshold.lower(), 1.0, age_then, pe_count);
    let upper = params.shift(threshold.upper(), 1.0, age_after, pe_count) - params.shift(threshold.upper(), 1.0, age_then, pe_count);
    (lower + upper) / 2.0
}

/// Classifies from the before/after snapshots alone.
///
/// `before` and `after` must be scans over the same references. With
/// [`LeakSignal::BinChange`] those are the three window reads and a cell is fast
/// iff its level dropped; with [`LeakSignal::Sweep`] they are sweeps and a cell
/// is fast iff its measured voltage dropped by at least `fast_shift`.
pub fn classify_from_scans(
    susceptible: &[Susceptible],
    before: &Scan,
    after: &Scan,
    signal: LeakSignal,
    fast_shift: f64,
) -> Vec<CellClass> {
    susceptible
        .iter()
        .map(|s| {
            let fast = match signal {
                LeakSignal::BinChange => after.levels[s.cell] < before.levels[s.cell],
                LeakSignal::Sweep => before.measured(s.cell) - after.measured(s.cell) >= fast_shift,
            };
            CellClass { cell: s.cell, position: s.position, leak: if fast { LeakSpeed::Fast } else { LeakSpeed::Slow } }
        })
        .collect()
}

/// Pooled sigma of the two states adjacent to `threshold`, from `(state, voltage)` pairs.
pub fn pooled_sigma(states: &[State], voltages: &[f64], threshold: Threshold) -> f64 {
    let var = |s: State| {
        let v: Vec<f64> = states.iter().zip(voltages).filter(|(x, _)| **x == s).map(|(_, v)| *v).collect();
        if v.len() < 2 {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    ((var(threshold.lower()) + var(threshold.upper())) / 2.0).sqrt()
}

/// Margin for `threshold`: the configured value, or `delta_sigma_mult` pooled
/// sigmas rounded to the grid. Shrunk if needed so the window stays on the grid.
pub fn margin_for(cfg: &RfrConfig, opt: u32, sigma: f64) -> u32 {
    let d = cfg.delta_margin.unwrap_or_else(|| {
        let raw = (cfg.delta_sigma_mult * sigma / f64::from(GRID_STEP)).round() as u32 * GRID_STEP;
        raw.max(GRID_STEP)
    });
    d.min(opt).min(GRID_MAX - opt).max(if opt == 0 || opt == GRID_MAX { 0 } else { GRID_STEP })
}

/// Absolute times of the two snapshots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryTimes {
    pub then: f64,
    pub after: f64,
}

impl RecoveryTimes {
    pub fn new(then: f64, cfg: &RfrConfig) -> RecoveryTimes {
        RecoveryTimes { then, after: then + cfg.extra_retention_days }
    }
}

/// Classifies susceptible cells by re-reading at `times.after`.
#[allow(clippy::too_many_arguments)]
pub fn classify_leak_speed(
    block: &Block,
    page: usize,
    susceptible: &[Susceptible],
    threshold: Threshold,
    window: Window,
    cfg: &RfrConfig,
    times: RecoveryTimes,
    params: &ChannelParams,
) -> Result<Vec<CellClass>> {
    check_page_threshold(page, threshold)?;
    if !(times.after > times.then) {
        return Err(Error::ClockBackwards { now: times.then, requested: times.after });
    }
    let wl = page_wordline(page);
    let before_v = block.wordline_voltages(wl, times.then, params)?;
    let after_v = block.wordline_voltages(wl, times.after, params)?;
    let (three, _) = susceptible_from_voltages(&before_v, window);
    if let Some(s) = susceptible.iter().find(|s| s.cell >= three.levels.len() || !(1..=2).contains(&three.levels[s.cell])) {
        return Err(Error::NotSusceptible(s.cell));
    }
    let (before, after) = scans(&before_v, &after_v, window, cfg.leak_signal);
    let fast = fast_shift_for(block, wl, threshold, times, cfg, params)?;
    Ok(classify_from_scans(susceptible, &before, &after, cfg.leak_signal, fast))
}

fn scans(before_v: &[f64], after_v: &[f64], window: Window, signal: LeakSignal) -> (Scan, Scan) {
    let refs = match signal {
        LeakSignal::Sweep => window.sweep_refs(),
        LeakSignal::BinChange => window.three_refs().to_vec(),
    };
    (Scan::take(before_v, refs.clone()), Scan::take(after_v, refs))
}

fn fast_shift_for(
    block: &Block,
    wordline: usize,
    threshold: Threshold,
    times: RecoveryTimes,
    cfg: &RfrConfig,
    params: &ChannelParams,
) -> Result<f64> {
    if let Some(f) = cfg.fast_shift {
        return Ok(f);
    }
    let age_then = block.wordline_age(wordline, times.then)?;
    let age_after = block.wordline_age(wordline, times.after)?;
    Ok(model_fast_shift(threshold, age_then, age_after, block.pe_count(), params))
}

/// Per-threshold recovery result.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRecovery {
    pub threshold: Threshold,
    pub window: Window,
    pub susceptible: Vec<Susceptible>,
    pub classes: Vec<CellClass>,
    pub flipped: Vec<usize>,
    pub before: RberReport,
    pub after: RberReport,
    pub verdict_after: DecodeOutcome,
    pub reads: usize,
}

impl ThresholdRecovery {
    pub fn type_counts(&self) -> [usize; 4] {
        let mut n = [0; 4];
        for c in &self.classes {
            n[c.cell_type() as usize - 1] += 1;
        }
        n
    }
}

/// Applies one threshold's recovery to `bits` in place.
#[allow(clippy::too_many_arguments)]
fn recover_threshold_in_place(
    bits: &mut [bool],
    truth: &[bool],
    block: &Block,
    page: usize,
    threshold: Threshold,
    opt: u32,
    before_v: &[f64],
    after_v: &[f64],
    cfg: &RfrConfig,
    ecc_cfg: &EccConfig,
    times: RecoveryTimes,
    params: &ChannelParams,
) -> Result<ThresholdRecovery> {
    check_page_threshold(page, threshold)?;
    let wl = page_wordline(page);
    let sigma = pooled_sigma(&block.wordline_states(wl), before_v, threshold);
    let window = Window::new(opt, margin_for(cfg, opt, sigma))?;
    let before = RberReport::compare(bits, truth)?;
    let (_, susceptible) = susceptible_from_voltages(before_v, window);
    let (scan_then, scan_after) = scans(before_v, after_v, window, cfg.leak_signal);
    let fast = fast_shift_for(block, wl, threshold, times, cfg, params)?;
    let classes = classify_from_scans(&susceptible, &scan_then, &scan_after, cfg.leak_signal, fast);
    let flipped: Vec<usize> = classes.iter().filter(|c| c.should_flip()).map(|c| c.cell).collect();
    for &i in &flipped {
        bits[i] = !bits[i];
    }
    let after = RberReport::compare(bits, truth)?;
    let reads = 3 + scan_then.reads() + scan_after.reads();
    Ok(ThresholdRecovery {
        threshold,
        window,
        susceptible,
        classes,
        flipped,
        before,
        after,
        verdict_after: ecc::verdict(after.raw_errors, ecc_cfg),
        reads,
    })
}

/// Recovers one threshold of a failed page read at `refs` (whose entry for
/// `threshold` is the OPT estimate). Returns the flipped page alongside the report.
#[allow(clippy::too_many_arguments)]
pub fn rfr_recover(
    block: &Block,
    page: usize,
    threshold: Threshold,
    refs: &ReadRefs,
    cfg: &RfrConfig,
    ecc_cfg: &EccConfig,
    times: RecoveryTimes,
    params: &ChannelParams,
) -> Result<(Vec<bool>, ThresholdRecovery)> {
    let truth = block.page_truth(page)?;
    let wl = page_wordline(page);
    let before_v = block.wordline_voltages(wl, times.then, params)?;
    let after_v = block.wordline_voltages(wl, times.after, params)?;
    let mut bits = page_bits(PageKind::of(page), &before_v, refs);
    let rec = recover_threshold_in_place(
        &mut bits,
        &truth,
        block,
        page,
        threshold,
        refs.get(threshold),
        &before_v,
        &after_v,
        cfg,
        ecc_cfg,
        times,
        params,
    )?;
    Ok((bits, rec))
}

/// Whole-page recovery: every enabled threshold of the page in order.
#[derive(Debug, Clone, PartialEq)]
pub struct PageRecovery {
    pub page: usize,
    pub before: RberReport,
    pub after: RberReport,
    pub verdict_before: DecodeOutcome,
    pub verdict_after: DecodeOutcome,
    pub thresholds: Vec<ThresholdRecovery>,
    pub bits: Vec<bool>,
}

#[allow(clippy::too_many_arguments)]
pub fn rfr_recover_page(
    block: &Block,
    page: usize,
    refs: &ReadRefs,
    cfg: &RfrConfig,
    ecc_cfg: &EccConfig,
    times: RecoveryTimes,
    params: &ChannelParams,
) -> Result<PageRecovery> {
    let truth = block.page_truth(page)?;
    let wl = page_wordline(page);
    let before_v = block.wordline_voltages(wl, times.then, params)?;
    let after_v = block.wordline_voltages(wl, times.after, params)?;
    let mut bits = page_bits(PageKind::of(page), &before_v, refs);
    let before = RberReport::compare(&bits, &truth)?;
    let mut thresholds = Vec::new();
    for t in cfg.order(PageKind::of(page)) {
        thresholds.push(recover_threshold_in_place(
            &mut bits,
            &truth,
            block,
            page,
            t,
            refs.get(t),
            &before_v,
            &after_v,
            cfg,
            ecc_cfg,
            times,
            params,
        )?);
    }
    let after = RberReport::compare(&bits, &truth)?;
    Ok(PageRecovery {
        page,
        before,
        after,
        verdict_before: ecc::verdict(before.raw_errors, ecc_cfg),
        verdict_after: ecc::verdict(after.raw_errors, ecc_cfg),
        thresholds,
        bits,
    })
}

/// One CSV row of the recovery report.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRow {
    pub block: usize,
    pub page: usize,
    pub threshold: Threshold,
    pub susceptible_count: usize,
    pub flips: usize,
    pub errors_before: u64,
    pub errors_after: u64,
    pub ecc_verdict_after: DecodeOutcome,
}

impl RecoveryRow {
    pub const HEADER: [&'static str; 8] =
        ["block", "page", "threshold", "susceptible_count", "flips", "errors_before", "errors_after", "ecc_verdict_after"];

    pub fn from_threshold(block: usize, page: usize, r: &ThresholdRecovery) -> RecoveryRow {
        RecoveryRow {
            block,
            page,
            threshold: r.threshold,
            susceptible_count: r.susceptible.len(),
            flips: r.flipped.len(),
            errors_before: r.before.raw_errors,
            errors_after: r.after.raw_errors,
            ecc_verdict_after: r.verdict_after,
        }
    }

    pub fn fields(&self) -> [String; 8] {
        [
            self.block.to_string(),
            self.page.to_string(),
            self.threshold.name().to_string(),
            self.susceptible_count.to_string(),
            self.flips.to_string(),
            self.errors_before.to_string(),
            self.errors_after.to_string(),
            self.ecc_verdict_after.label().to_string(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window() -> Window {
        Window::new(300, 20).unwrap()
    }

    #[test]
    fn outside_window_not_susceptible() {
        let (_, s) = susceptible_from_voltages(&[322.0, 298.0, 320.0, 280.0, 279.9], window());
        assert_eq!(s, vec![Susceptible { cell: 1, position: Position::BelowOpt }, Susceptible { cell: 3, position: Position::BelowOpt }]);
        let (_, s) = susceptible_from_voltages(&[300.0, 319.9], window());
        assert!(s.iter().all(|x| x.position == Position::AboveOpt));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn minimal_margin_with_empty_gap_is_empty() {
        let w = Window::new(300, 2).unwrap();
        let (_, s) = susceptible_from_voltages(&[250.0, 297.9, 302.0, 350.0], w);
        assert!(s.is_empty());
    }

    #[test]
    fn window_must_stay_on_grid() {
        assert!(Window::new(10, 12).is_err());
        assert!(Window::new(500, 12).is_err());
        assert!(Window::new(12, 12).is_ok());
    }

    #[test]
    fn type_table() {
        let c = |position, leak| CellClass { cell: 0, position, leak }.cell_type();
        assert_eq!(c(Position::BelowOpt, LeakSpeed::Slow), 1);
        assert_eq!(c(Position::AboveOpt, LeakSpeed::Slow), 2);
        assert_eq!(c(Position::BelowOpt, LeakSpeed::Fast), 3);
        assert_eq!(c(Position::AboveOpt, LeakSpeed::Fast), 4);
    }

    #[test]
    fn classification_depends_only_on_snapshots() {
        let w = window();
        let before_v = [285.0, 305.0, 310.0, 290.0];
        let after_v = [270.0, 304.0, 296.0, 290.0];
        let (_, sus) = susceptible_from_voltages(&before_v, w);
        for signal in [LeakSignal::Sweep, LeakSignal::BinChange] {
            let (b, a) = scans(&before_v, &after_v, w, signal);
            let first = classify_from_scans(&sus, &b, &a, signal, 5.0);
            let second = classify_from_scans(&sus, &b.clone(), &a.clone(), signal, 5.0);
            assert_eq!(first, second);
        }
        let (b, a) = scans(&before_v, &after_v, w, LeakSignal::Sweep);
        let classes = classify_from_scans(&sus, &b, &a, LeakSignal::Sweep, 5.0);
        let leaks: Vec<LeakSpeed> = classes.iter().map(|c| c.leak).collect();
        assert_eq!(leaks, vec![LeakSpeed::Fast, LeakSpeed::Slow, LeakSpeed::Fast, LeakSpeed::Slow]);
    }

    #[test]
    fn sweep_measures_to_grid() {
        let s = Scan::take(&[279.0, 280.0, 301.5, 400.0], Window::new(300, 20).unwrap().sweep_refs());
        assert_eq!(s.reads(), 21);
        assert_eq!(s.measured(0), 278.0);
        assert_eq!(s.measured(1), 280.0);
        assert_eq!(s.measured(2), 300.0);
        assert_eq!(s.measured(3), 320.0);
    }

    #[test]
    fn margin_rounds_to_grid_and_fits() {
        let cfg = RfrConfig::default();
        assert_eq!(margin_for(&cfg, 300, 31.2), 32);
        assert_eq!(margin_for(&cfg, 300, 0.1), 2);
        assert_eq!(margin_for(&cfg, 10, 31.2), 10);
        let fixed = RfrConfig { delta_margin: Some(8), ..cfg };
        assert_eq!(margin_for(&fixed, 300, 31.2), 8);
    }

    #[test]
    fn thresholds_ordered_by_drift() {
        let cfg = RfrConfig::default();
        assert_eq!(cfg.order(PageKind::Msb), vec![Threshold::P2P3, Threshold::ErP1]);
        assert_eq!(cfg.order(PageKind::Lsb), vec![Threshold::P1P2]);
        let no_er = RfrConfig { enabled: [false, true, true], ..cfg };
        assert_eq!(no_er.order(PageKind::Msb), vec![Threshold::P2P3]);
    }

    #[test]
    fn model_fast_shift_is_midpoint_of_state_shifts() {
        let p = ChannelParams::default();
        let f = model_fast_shift(Threshold::P2P3, 28.0, 40.0, 0, &p);
        let g = p.age_factor(40.0) - p.age_factor(28.0);
        assert!((f - g * 12.5).abs() < 1e-12);
    }
}
