//! Physical model of a 2-bit MLC flash block on a normalized 0..512 voltage scale.
//!
//! Programming samples each cell's threshold voltage around its state mean and
//! draws a per-cell leak-rate multiplier. Retention aging is a closed-form,
//! deterministic function of the cell and its retention age:
//!
//! ```text
//! v(t) = v0 - r * A_s * (1 + k_shift * pe / 1000) * ln(1 + t / tau0)
//! ```
//!
//! clamped to the rail `[0, 512]`. Distribution widening with age comes from the
//! spread of `r` across cells; no explicit sigma(t) term exists.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::{Error, Result};

/// Top of the normalized voltage scale.
pub const VOLTAGE_MAX: f64 = 512.0;

/// The four MLC states in ascending voltage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum State {
    Er = 0,
    P1 = 1,
    P2 = 2,
    P3 = 3,
}

impl State {
    pub const ALL: [State; 4] = [State::Er, State::P1, State::P2, State::P3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<State> {
        State::ALL.get(i).copied()
    }

    /// `(LSB, MSB)` tuple stored by this state: ER=11, P1=10, P2=00, P3=01.
    pub fn bits(self) -> (bool, bool) {
        match self {
            State::Er => (true, true),
            State::P1 => (true, false),
            State::P2 => (false, false),
            State::P3 => (false, true),
        }
    }

    pub fn from_bits(lsb: bool, msb: bool) -> State {
        match (lsb, msb) {
            (true, true) => State::Er,
            (true, false) => State::P1,
            (false, false) => State::P2,
            (false, true) => State::P3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            State::Er => "ER",
            State::P1 => "P1",
            State::P2 => "P2",
            State::P3 => "P3",
        }
    }
}

/// Parameters of the channel model.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub state_mean: [f64; 4],
    pub state_sigma: [f64; 4],
    /// Retention shift magnitude per state.
    pub shift_coeff: [f64; 4],
    /// Aging timescale in days.
    pub shift_timescale: f64,
    pub leak_lognorm_mu: f64,
    pub leak_lognorm_sigma: f64,
    /// Fractional sigma widening per 1000 P/E cycles.
    pub pe_sigma_coeff: f64,
    /// Fractional shift increase per 1000 P/E cycles.
    pub pe_shift_coeff: f64,
    pub seed: u64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            state_mean: [100.0, 230.0, 340.0, 450.0],
            state_sigma: [18.0, 12.0, 12.0, 12.0],
            shift_coeff: [0.0, 4.0, 9.0, 16.0],
            shift_timescale: 0.5,
            leak_lognorm_mu: 0.0,
            leak_lognorm_sigma: 0.45,
            pe_sigma_coeff: 0.03,
            pe_shift_coeff: 0.03,
            seed: 1,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if self.state_mean.iter().any(|m| !(0.0..=VOLTAGE_MAX).contains(m)) {
            return bad("state means must lie in [0, 512]");
        }
        if self.state_mean.windows(2).any(|w| w[0] >= w[1]) {
            return bad("state means must be strictly increasing");
        }
        if self.state_sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("state sigmas must be positive");
        }
        if self.shift_coeff.iter().any(|a| *a < 0.0 || !a.is_finite()) {
            return bad("shift coefficients must be non-negative");
        }
        if self.shift_coeff.windows(2).any(|w| w[0] > w[1]) {
            return bad("shift coefficients must be non-decreasing across states");
        }
        if !(self.shift_timescale > 0.0) {
            return bad("shift timescale must be positive");
        }
        if self.leak_lognorm_mu != 0.0 {
            return bad("leak-rate lognormal mu must be 0 (median leak rate is 1)");
        }
        if !(self.leak_lognorm_sigma >= 0.0) || !self.leak_lognorm_sigma.is_finite() {
            return bad("leak-rate lognormal sigma must be non-negative");
        }
        if self.pe_sigma_coeff < 0.0 || self.pe_shift_coeff < 0.0 {
            return bad("P/E coefficients must be non-negative");
        }
        Ok(())
    }

    /// Programming sigma multiplier after `pe_count` cycles.
    pub fn sigma_wear(&self, pe_count: u32) -> f64 {
        1.0 + self.pe_sigma_coeff * f64::from(pe_count) / 1000.0
    }

    /// Retention shift multiplier after `pe_count` cycles.
    pub fn shift_wear(&self, pe_count: u32) -> f64 {
        1.0 + self.pe_shift_coeff * f64::from(pe_count) / 1000.0
    }

    /// `ln(1 + t / tau0)`, the age-dependent part of the shift law.
    pub fn age_factor(&self, age_days: f64) -> f64 {
        (age_days / self.shift_timescale).ln_1p()
    }

    /// Expected downward shift of a cell with leak rate `leak_rate` in `state`.
    pub fn shift(&self, state: State, leak_rate: f64, age_days: f64, pe_count: u32) -> f64 {
        leak_rate * self.shift_coeff[state.index()] * self.shift_wear(pe_count) * self.age_factor(age_days)
    }

    /// Programming distribution for `state` at `pe_count`.
    pub fn program_sigma(&self, state: State, pe_count: u32) -> f64 {
        self.state_sigma[state.index()] * self.sigma_wear(pe_count)
    }

    /// Draws one cell in `state`, rejection-sampling the voltage to +/-6 sigma.
    pub fn sample_cell<R: Rng + ?Sized>(&self, state: State, pe_count: u32, rng: &mut R) -> Cell {
        let mean = self.state_mean[state.index()];
        let sigma = self.program_sigma(state, pe_count);
        let normal = Normal::new(mean, sigma).expect("validated sigma");
        let v0 = loop {
            let v: f64 = normal.sample(rng);
            if (v - mean).abs() <= 6.0 * sigma {
                break v;
            }
        };
        let leak = LogNormal::new(self.leak_lognorm_mu, self.leak_lognorm_sigma).expect("validated leak sigma");
        let leak_rate: f64 = leak.sample(rng);
        Cell { true_state: state, programmed_voltage: v0 as f32, leak_rate: leak_rate as f32 }
    }
}

/// One flash cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub true_state: State,
    pub programmed_voltage: f32,
    pub leak_rate: f32,
}

impl Cell {
    /// Threshold voltage after `age_days` of retention. Infallible variant of [`voltage_at`].
    #[inline]
    pub fn voltage(&self, age_days: f64, pe_count: u32, params: &ChannelParams) -> f64 {
        let v0 = f64::from(self.programmed_voltage);
        if age_days == 0.0 {
            return v0.clamp(0.0, VOLTAGE_MAX);
        }
        let shift = params.shift(self.true_state, f64::from(self.leak_rate), age_days, pe_count);
        (v0 - shift).clamp(0.0, VOLTAGE_MAX)
    }
}

/// Threshold voltage of `cell` after `age_days` of retention.
pub fn voltage_at(cell: &Cell, age_days: f64, pe_count: u32, params: &ChannelParams) -> Result<f64> {
    if !(age_days >= 0.0) {
        return Err(Error::NegativeAge(age_days));
    }
    Ok(cell.voltage(age_days, pe_count, params))
}

/// Which of the two pages sharing a wordline a page number refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PageKind {
    Lsb,
    Msb,
}

impl PageKind {
    pub fn of(page: usize) -> PageKind {
        if page.is_multiple_of(2) {
            PageKind::Lsb
        } else {
            PageKind::Msb
        }
    }

    /// The bit this page stores for a cell in `state`.
    pub fn bit(self, state: State) -> bool {
        let (lsb, msb) = state.bits();
        match self {
            PageKind::Lsb => lsb,
            PageKind::Msb => msb,
        }
    }
}

/// Wordline holding `page`.
pub fn page_wordline(page: usize) -> usize {
    page / 2
}

/// A flash block: `wordlines` rows of `cells_per_wordline` cells, two pages per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    wordlines: usize,
    cells_per_wordline: usize,
    cells: Vec<Cell>,
    page_program_time: Vec<Option<f64>>,
    pe_count: u32,
}

impl Block {
    /// An erased block whose cells sit exactly at the ER mean.
    pub fn new(wordlines: usize, cells_per_wordline: usize, params: &ChannelParams) -> Block {
        let cell = Cell { true_state: State::Er, programmed_voltage: params.state_mean[0] as f32, leak_rate: 1.0 };
        Block {
            wordlines,
            cells_per_wordline,
            cells: vec![cell; wordlines * cells_per_wordline],
            page_program_time: vec![None; 2 * wordlines],
            pe_count: 0,
        }
    }

    pub(crate) fn from_parts(
        wordlines: usize,
        cells_per_wordline: usize,
        cells: Vec<Cell>,
        page_program_time: Vec<Option<f64>>,
        pe_count: u32,
    ) -> Result<Block> {
        if cells.len() != wordlines * cells_per_wordline {
            return Err(Error::SizeMismatch { expected: wordlines * cells_per_wordline, actual: cells.len() });
        }
        if page_program_time.len() != 2 * wordlines {
            return Err(Error::SizeMismatch { expected: 2 * wordlines, actual: page_program_time.len() });
        }
        Ok(Block { wordlines, cells_per_wordline, cells, page_program_time, pe_count })
    }

    pub fn wordlines(&self) -> usize {
        self.wordlines
    }

    pub fn cells_per_wordline(&self) -> usize {
        self.cells_per_wordline
    }

    pub fn pages(&self) -> usize {
        2 * self.wordlines
    }

    pub fn pe_count(&self) -> u32 {
        self.pe_count
    }

    pub fn set_pe_count(&mut self, pe_count: u32) {
        self.pe_count = pe_count;
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn wordline_cells(&self, wordline: usize) -> &[Cell] {
        let c = self.cells_per_wordline;
        &self.cells[wordline * c..(wordline + 1) * c]
    }

    pub fn page_program_times(&self) -> &[Option<f64>] {
        &self.page_program_time
    }

    pub fn page_program_time(&self, page: usize) -> Option<f64> {
        self.page_program_time.get(page).copied().flatten()
    }

    pub fn is_programmed(&self) -> bool {
        self.page_program_time.iter().all(Option::is_some)
    }

    pub fn is_erased(&self) -> bool {
        self.page_program_time.iter().all(Option::is_none)
    }

    /// Highest-numbered programmed page.
    pub fn last_programmed_page(&self) -> Option<usize> {
        self.page_program_time.iter().rposition(Option::is_some)
    }

    pub(crate) fn check_page(&self, page: usize) -> Result<()> {
        if page >= self.pages() {
            return Err(Error::PageOutOfRange { page, pages: self.pages() });
        }
        Ok(())
    }

    /// Programs every page. `data[p]` holds page `p`'s bits; `schedule[p]` its program time.
    pub fn program<R: Rng + ?Sized>(&mut self, data: &[Vec<bool>], schedule: &[f64], params: &ChannelParams, rng: &mut R) -> Result<()> {
        if !self.is_erased() {
            return Err(Error::InvalidConfig("block must be erased before programming".into()));
        }
        if data.len() != self.pages() {
            return Err(Error::SizeMismatch { expected: self.pages(), actual: data.len() });
        }
        if schedule.len() != self.pages() {
            return Err(Error::SizeMismatch { expected: self.pages(), actual: schedule.len() });
        }
        if let Some(bad) = data.iter().find(|d| d.len() != self.cells_per_wordline) {
            return Err(Error::SizeMismatch { expected: self.cells_per_wordline, actual: bad.len() });
        }
        if let Some(i) = schedule.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonMonotoneSchedule { page: i });
        }
        if let Some(i) = schedule.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::NonMonotoneSchedule { page: i + 1 });
        }
        let c = self.cells_per_wordline;
        for w in 0..self.wordlines {
            let (lsb, msb) = (&data[2 * w], &data[2 * w + 1]);
            for i in 0..c {
                let state = State::from_bits(lsb[i], msb[i]);
                self.cells[w * c + i] = params.sample_cell(state, self.pe_count, rng);
            }
        }
        for (slot, t) in self.page_program_time.iter_mut().zip(schedule) {
            *slot = Some(*t);
        }
        Ok(())
    }

    /// Returns every cell to ER with fresh voltages and counts one P/E cycle.
    pub fn erase<R: Rng + ?Sized>(&mut self, params: &ChannelParams, rng: &mut R) {
        self.pe_count += 1;
        for cell in &mut self.cells {
            *cell = params.sample_cell(State::Er, self.pe_count, rng);
        }
        self.page_program_time.iter_mut().for_each(|t| *t = None);
    }

    /// Time at which the wordline reached its final state (its MSB page program time).
    pub fn wordline_program_time(&self, wordline: usize) -> Option<f64> {
        self.page_program_time.get(2 * wordline + 1).copied().flatten()
    }

    /// Retention age of the cells of `wordline` at absolute time `now`.
    pub fn wordline_age(&self, wordline: usize, now: f64) -> Result<f64> {
        if wordline >= self.wordlines {
            return Err(Error::PageOutOfRange { page: 2 * wordline, pages: self.pages() });
        }
        let programmed = self.wordline_program_time(wordline).ok_or(Error::UnprogrammedPage(2 * wordline + 1))?;
        if now < programmed {
            return Err(Error::ReadBeforeProgram { now, programmed });
        }
        Ok(now - programmed)
    }

    /// Voltages of every cell on `wordline` at absolute time `now`.
    pub fn wordline_voltages(&self, wordline: usize, now: f64, params: &ChannelParams) -> Result<Vec<f64>> {
        let age = self.wordline_age(wordline, now)?;
        Ok(self.voltages_at_age(wordline, age, params))
    }

    /// Voltages of `wordline` at an explicit retention age; works on erased blocks too.
    pub fn voltages_at_age(&self, wordline: usize, age_days: f64, params: &ChannelParams) -> Vec<f64> {
        self.wordline_cells(wordline).iter().map(|c| c.voltage(age_days, self.pe_count, params)).collect()
    }

    /// Originally programmed bits of `page`.
    pub fn page_truth(&self, page: usize) -> Result<Vec<bool>> {
        self.check_page(page)?;
        if self.page_program_time[page].is_none() {
            return Err(Error::UnprogrammedPage(page));
        }
        let kind = PageKind::of(page);
        Ok(self.wordline_cells(page_wordline(page)).iter().map(|c| kind.bit(c.true_state)).collect())
    }

    /// True states of `wordline`.
    pub fn wordline_states(&self, wordline: usize) -> Vec<State> {
        self.wordline_cells(wordline).iter().map(|c| c.true_state).collect()
    }
}
