//! Sensing, page decode, RBER accounting, and the brute-force OPT oracle.

use crate::channel::{page_wordline, Block, ChannelParams, PageKind, State};
use crate::error::{Error, Result};

/// Spacing of the read reference grid.
pub const GRID_STEP: u32 = 2;
/// Highest representable read reference.
pub const GRID_MAX: u32 = 510;
/// Number of candidate references on the grid (0, 2, ..., 510).
pub const GRID_POINTS: usize = (GRID_MAX / GRID_STEP) as usize + 1;

/// One of the three boundaries between adjacent states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Threshold {
    ErP1,
    P1P2,
    P2P3,
}

impl Threshold {
    pub const ALL: [Threshold; 3] = [Threshold::ErP1, Threshold::P1P2, Threshold::P2P3];

    pub fn index(self) -> usize {
        match self {
            Threshold::ErP1 => 0,
            Threshold::P1P2 => 1,
            Threshold::P2P3 => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Threshold> {
        Threshold::ALL.get(i).copied()
    }

    pub fn lower(self) -> State {
        State::from_index(self.index()).unwrap()
    }

    pub fn upper(self) -> State {
        State::from_index(self.index() + 1).unwrap()
    }

    /// The page whose bit changes when a cell crosses this threshold.
    pub fn page_kind(self) -> PageKind {
        match self {
            Threshold::P1P2 => PageKind::Lsb,
            Threshold::ErP1 | Threshold::P2P3 => PageKind::Msb,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Threshold::ErP1 => "ER-P1",
            Threshold::P1P2 => "P1-P2",
            Threshold::P2P3 => "P2-P3",
        }
    }

    pub fn parse(s: &str) -> Option<Threshold> {
        Threshold::ALL.into_iter().find(|t| t.name().eq_ignore_ascii_case(s))
    }
}

/// The thresholds a page of `kind` senses.
pub fn page_thresholds(kind: PageKind) -> &'static [Threshold] {
    match kind {
        PageKind::Lsb => &[Threshold::P1P2],
        PageKind::Msb => &[Threshold::ErP1, Threshold::P2P3],
    }
}

/// Three read reference voltages on the even grid, strictly increasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReadRefs {
    va: u32,
    vb: u32,
    vc: u32,
}

impl ReadRefs {
    pub fn new(va: u32, vb: u32, vc: u32) -> Result<ReadRefs> {
        let ok = va < vb && vb < vc && vc <= GRID_MAX && [va, vb, vc].iter().all(|v| v % GRID_STEP == 0);
        if ok {
            Ok(ReadRefs { va, vb, vc })
        } else {
            Err(Error::InvalidRefs { va, vb, vc })
        }
    }

    /// References halfway between adjacent state means, rounded to the grid.
    pub fn midpoints(params: &ChannelParams) -> ReadRefs {
        let m = params.state_mean;
        let snap = |x: f64| ((x / 2.0).round() as u32 * 2).min(GRID_MAX);
        ReadRefs::new(snap((m[0] + m[1]) / 2.0), snap((m[1] + m[2]) / 2.0), snap((m[2] + m[3]) / 2.0))
            .expect("strictly increasing means give valid midpoints")
    }

    pub fn va(&self) -> u32 {
        self.va
    }

    pub fn vb(&self) -> u32 {
        self.vb
    }

    pub fn vc(&self) -> u32 {
        self.vc
    }

    pub fn as_array(&self) -> [u32; 3] {
        [self.va, self.vb, self.vc]
    }

    pub fn get(&self, t: Threshold) -> u32 {
        self.as_array()[t.index()]
    }

    /// Copy with threshold `t` moved to `v`.
    pub fn with(&self, t: Threshold, v: u32) -> Result<ReadRefs> {
        let mut a = self.as_array();
        a[t.index()] = v;
        ReadRefs::new(a[0], a[1], a[2])
    }

    /// Closed range `t` can move within while keeping the refs valid.
    pub fn range(&self, t: Threshold) -> (u32, u32) {
        let a = self.as_array();
        let lo = if t.index() == 0 { 0 } else { a[t.index() - 1] + GRID_STEP };
        let hi = if t.index() == 2 { GRID_MAX } else { a[t.index() + 1] - GRID_STEP };
        (lo, hi)
    }
}

/// Bin a voltage falls in. Bins are lower-closed: `v == va` senses as P1.
pub fn sense_state(voltage: f64, refs: &ReadRefs) -> State {
    let n = refs.as_array().iter().filter(|r| voltage >= f64::from(**r)).count();
    State::from_index(n).unwrap()
}

/// The bit a page of `kind` reads for a cell at `voltage`.
#[inline]
pub fn sense_bit(kind: PageKind, voltage: f64, refs: &ReadRefs) -> bool {
    match kind {
        PageKind::Lsb => voltage < f64::from(refs.vb),
        PageKind::Msb => voltage < f64::from(refs.va) || voltage >= f64::from(refs.vc),
    }
}

/// Decodes a page from precomputed cell voltages.
pub fn page_bits(kind: PageKind, voltages: &[f64], refs: &ReadRefs) -> Vec<bool> {
    voltages.iter().map(|v| sense_bit(kind, *v, refs)).collect()
}

fn programmed_wordline(block: &Block, page: usize) -> Result<usize> {
    block.check_page(page)?;
    if block.page_program_time(page).is_none() {
        return Err(Error::UnprogrammedPage(page));
    }
    Ok(page_wordline(page))
}

/// Reads `page` at absolute time `now` using `refs`.
pub fn read_page(block: &Block, page: usize, refs: &ReadRefs, now: f64, params: &ChannelParams) -> Result<Vec<bool>> {
    let wl = programmed_wordline(block, page)?;
    let volts = block.wordline_voltages(wl, now, params)?;
    Ok(page_bits(PageKind::of(page), &volts, refs))
}

/// Raw bit error count of one read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RberReport {
    pub raw_errors: u64,
    pub bits_read: u64,
    pub rber: f64,
}

impl RberReport {
    pub fn new(raw_errors: u64, bits_read: u64) -> RberReport {
        debug_assert!(raw_errors <= bits_read);
        let rber = if bits_read == 0 { 0.0 } else { raw_errors as f64 / bits_read as f64 };
        RberReport { raw_errors, bits_read, rber }
    }

    pub fn compare(read: &[bool], truth: &[bool]) -> Result<RberReport> {
        if read.len() != truth.len() {
            return Err(Error::SizeMismatch { expected: truth.len(), actual: read.len() });
        }
        let errors = read.iter().zip(truth).filter(|(a, b)| a != b).count();
        Ok(RberReport::new(errors as u64, read.len() as u64))
    }
}

/// Reads `page` and compares against the originally programmed bits.
pub fn rber_of(block: &Block, page: usize, refs: &ReadRefs, now: f64, ground_truth: &[bool], params: &ChannelParams) -> Result<RberReport> {
    let bits = read_page(block, page, refs, now, params)?;
    RberReport::compare(&bits, ground_truth)
}

/// Pairwise misclassification count for every grid candidate of `threshold`.
///
/// Entry `k` is the count at reference `2k`: lower-state cells at or above the
/// reference plus upper-state cells below it. Cells of other states are ignored.
pub fn pairwise_error_profile<I>(population: I, threshold: Threshold) -> Result<Vec<u64>>
where
    I: IntoIterator<Item = (State, f64)>,
{
    // Slot k holds voltages in [2k, 2k+2); 512 lands in the extra slot 256.
    let mut lower = vec![0u64; GRID_POINTS + 1];
    let mut upper = vec![0u64; GRID_POINTS + 1];
    for (state, v) in population {
        let slot = ((v / f64::from(GRID_STEP)).floor().max(0.0) as usize).min(GRID_POINTS);
        if state == threshold.lower() {
            lower[slot] += 1;
        } else if state == threshold.upper() {
            upper[slot] += 1;
        }
    }
    let n_lower: u64 = lower.iter().sum();
    let n_upper: u64 = upper.iter().sum();
    if n_lower == 0 {
        return Err(Error::MissingState(threshold.lower().name()));
    }
    if n_upper == 0 {
        return Err(Error::MissingState(threshold.upper().name()));
    }
    let mut profile = Vec::with_capacity(GRID_POINTS);
    let (mut lower_below, mut upper_below) = (0u64, 0u64);
    for k in 0..GRID_POINTS {
        profile.push((n_lower - lower_below) + upper_below);
        lower_below += lower[k];
        upper_below += upper[k];
    }
    Ok(profile)
}

/// Exhaustive OPT: the even reference with the fewest pairwise misclassifications,
/// ties broken toward the lowest voltage.
pub fn brute_force_opt<I>(population: I, threshold: Threshold) -> Result<u32>
where
    I: IntoIterator<Item = (State, f64)>,
{
    let profile = pairwise_error_profile(population, threshold)?;
    Ok(argmin_lowest(&profile) as u32 * GRID_STEP)
}

pub(crate) fn argmin_lowest(profile: &[u64]) -> usize {
    let mut best = 0;
    for (i, e) in profile.iter().enumerate() {
        if *e < profile[best] {
            best = i;
        }
    }
    best
}

/// Brute-force OPT of the cells of `wordline` at absolute time `now`.
pub fn wordline_opt(block: &Block, wordline: usize, threshold: Threshold, now: f64, params: &ChannelParams) -> Result<u32> {
    let volts = block.wordline_voltages(wordline, now, params)?;
    brute_force_opt(block.wordline_cells(wordline).iter().map(|c| c.true_state).zip(volts), threshold)
}

/// Brute-force OPT refs for all three thresholds of `wordline`.
pub fn wordline_opt_refs(block: &Block, wordline: usize, now: f64, params: &ChannelParams) -> Result<ReadRefs> {
    let volts = block.wordline_voltages(wordline, now, params)?;
    let states: Vec<State> = block.wordline_cells(wordline).iter().map(|c| c.true_state).collect();
    opt_refs(&states, &volts)
}

/// Brute-force OPT refs for a population given as parallel state/voltage slices.
pub fn opt_refs(states: &[State], voltages: &[f64]) -> Result<ReadRefs> {
    let mut v = [0u32; 3];
    for t in Threshold::ALL {
        v[t.index()] = brute_force_opt(states.iter().copied().zip(voltages.iter().copied()), t)?;
    }
    // Degenerate populations can produce coincident OPTs; nudge them apart on the grid.
    if v[1] <= v[0] {
        v[1] = v[0] + GRID_STEP;
    }
    if v[2] <= v[1] {
        v[2] = v[1] + GRID_STEP;
    }
    ReadRefs::new(v[0], v[1], v[2])
}
