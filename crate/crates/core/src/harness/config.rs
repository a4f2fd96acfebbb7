//! Flat INI-style configuration.
//!
//! ```text
//! [device]
//! blocks = 64
//! [channel]
//! state_mean = 100, 230, 340, 450
//! ```
//!
//! Every key has a default; `DeviceConfig::dump` prints the full set and
//! parsing that text reproduces the same configuration.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::channel::ChannelParams;
use crate::ecc::EccConfig;
use crate::error::{Error, Result};
use crate::read::ReadRefs;
use crate::rfr::{LeakSignal, RfrConfig};
use crate::ror::RorConfig;

/// Knobs for the canonical experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Population size per state for the distribution and OPT experiments.
    pub cells_per_state: usize,
    pub dist_ages: Vec<f64>,
    pub opt_ages: Vec<f64>,
    pub histogram_bin: u32,
    /// Block program times in ror-eval are spread over this many days.
    pub age_span_days: f64,
    /// Time to fill one block, page by page.
    pub block_fill_days: f64,
    pub rfr_pe_points: Vec<u32>,
    pub rfr_age_days: f64,
    pub rfr_blocks: usize,
    pub lifetime_age_days: f64,
    pub lifetime_blocks: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cells_per_state: 100_000,
            dist_ages: vec![0.0, 1.0, 7.0, 28.0],
            opt_ages: vec![0.0, 1.0, 2.0, 6.0, 9.0, 17.0, 21.0, 28.0],
            histogram_bin: 4,
            age_span_days: 7.0,
            block_fill_days: 1.0,
            rfr_pe_points: vec![3000, 5000, 8000, 11000],
            rfr_age_days: 28.0,
            rfr_blocks: 2,
            lifetime_age_days: 7.0,
            lifetime_blocks: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub blocks: usize,
    pub wordlines_per_block: usize,
    pub cells_per_wordline: usize,
    pub pe_cycles: u32,
    pub channel: ChannelParams,
    pub ecc: EccConfig,
    pub ror: RorConfig,
    pub rfr: RfrConfig,
    pub experiment: ExperimentConfig,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        let channel = ChannelParams::default();
        DeviceConfig {
            blocks: 64,
            wordlines_per_block: 64,
            cells_per_wordline: 2048,
            pe_cycles: 3000,
            ror: RorConfig::new(&channel),
            ecc: EccConfig::default(),
            rfr: RfrConfig::default(),
            experiment: ExperimentConfig::default(),
            channel,
        }
    }
}

impl DeviceConfig {
    pub fn pages_per_block(&self) -> usize {
        2 * self.wordlines_per_block
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.wordlines_per_block == 0 || self.cells_per_wordline == 0 {
            return Err(Error::InvalidConfig("device counts must be >= 1".into()));
        }
        if self.blocks > u32::MAX as usize {
            return Err(Error::InvalidConfig("too many blocks".into()));
        }
        if self.ecc.codeword_bits != self.cells_per_wordline {
            return Err(Error::InvalidConfig(format!(
                "ecc.codeword_bits ({}) must equal device.cells_per_wordline ({}): one codeword per page",
                self.ecc.codeword_bits, self.cells_per_wordline
            )));
        }
        self.channel.validate()?;
        self.ecc.validate()?;
        self.ror.validate()?;
        self.rfr.validate()?;
        let e = &self.experiment;
        if e.cells_per_state == 0 || e.rfr_blocks == 0 || e.lifetime_blocks == 0 || e.histogram_bin == 0 {
            return Err(Error::InvalidConfig("experiment counts must be >= 1".into()));
        }
        let ages_ok = |a: &[f64]| !a.is_empty() && a.iter().all(|x| *x >= 0.0 && x.is_finite());
        if !ages_ok(&e.dist_ages) || !ages_ok(&e.opt_ages) {
            return Err(Error::InvalidConfig("experiment age lists must be non-empty and non-negative".into()));
        }
        if !(e.age_span_days >= 0.0) || !(e.block_fill_days >= 0.0) || !(e.rfr_age_days >= 0.0) || !(e.lifetime_age_days >= 0.0) {
            return Err(Error::InvalidConfig("experiment durations must be non-negative".into()));
        }
        if e.rfr_pe_points.is_empty() {
            return Err(Error::InvalidConfig("experiment.rfr_pe_points must not be empty".into()));
        }
        Ok(())
    }

    /// Parses config text. Keys missing from the text keep their defaults;
    /// `ror.v_default` and `ecc.codeword_bits` default to values derived from
    /// the parsed channel means and page size.
    pub fn parse(text: &str) -> Result<DeviceConfig> {
        let mut cfg = DeviceConfig::default();
        let mut section = String::new();
        let mut saw_v_default = false;
        let mut saw_codeword = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::ConfigParse { line: line_no, msg: "unterminated section header".into() })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::ConfigParse { line: line_no, msg: format!("unknown section [{name}]") });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::ConfigParse { line: line_no, msg: format!("expected `key = value`, got `{line}`") })?;
            let (key, value) = (key.trim(), value.trim());
            if section.is_empty() {
                return Err(Error::ConfigParse { line: line_no, msg: format!("key `{key}` outside of any section") });
            }
            saw_v_default |= section == "ror" && key == "v_default";
            saw_codeword |= section == "ecc" && key == "codeword_bits";
            cfg.set(&section, key, value).map_err(|msg| Error::ConfigParse { line: line_no, msg })?;
        }
        if !saw_v_default {
            cfg.ror.v_default = ReadRefs::midpoints(&cfg.channel);
        }
        if !saw_codeword {
            cfg.ecc.codeword_bits = cfg.cells_per_wordline;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> std::result::Result<(), String> {
        let unknown = || Err(format!("unknown key `{key}` in [{section}]"));
        match section {
            "device" => match key {
                "blocks" => self.blocks = num(value)?,
                "wordlines_per_block" => self.wordlines_per_block = num(value)?,
                "cells_per_wordline" => self.cells_per_wordline = num(value)?,
                "pe_cycles" => self.pe_cycles = num(value)?,
                _ => return unknown(),
            },
            "channel" => {
                let c = &mut self.channel;
                match key {
                    "state_mean" => c.state_mean = arr4(value)?,
                    "state_sigma" => c.state_sigma = arr4(value)?,
                    "shift_coeff" => c.shift_coeff = arr4(value)?,
                    "shift_timescale" => c.shift_timescale = num(value)?,
                    "leak_lognorm_mu" => c.leak_lognorm_mu = num(value)?,
                    "leak_lognorm_sigma" => c.leak_lognorm_sigma = num(value)?,
                    "pe_sigma_coeff" => c.pe_sigma_coeff = num(value)?,
                    "pe_shift_coeff" => c.pe_shift_coeff = num(value)?,
                    "seed" => c.seed = num(value)?,
                    _ => return unknown(),
                }
            }
            "ecc" => {
                let e = &mut self.ecc;
                match key {
                    "codeword_bits" => e.codeword_bits = num(value)?,
                    "t_capability" => e.t_capability = num(value)?,
                    "decode_base_cost" => e.decode_base_cost = num(value)?,
                    "decode_per_error_cost" => e.decode_per_error_cost = num(value)?,
                    _ => return unknown(),
                }
            }
            "ror" => {
                let r = &mut self.ror;
                match key {
                    "v_default" => {
                        let v: Vec<u32> = list(value)?;
                        if v.len() != 3 {
                            return Err(format!("v_default needs 3 values, got {}", v.len()));
                        }
                        r.v_default = ReadRefs::new(v[0], v[1], v[2]).map_err(|e| e.to_string())?;
                    }
                    "delta_v" => r.delta_v = num(value)?,
                    "retrigger_period_days" => r.retrigger_period_days = num(value)?,
                    "page_read_cost" => r.page_read_cost = num(value)?,
                    _ => return unknown(),
                }
            }
            "rfr" => {
                let r = &mut self.rfr;
                match key {
                    "delta_margin" => r.delta_margin = auto_or(value)?,
                    "delta_sigma_mult" => r.delta_sigma_mult = num(value)?,
                    "extra_retention_days" => r.extra_retention_days = num(value)?,
                    "enable_er_p1" => r.enabled[0] = boolean(value)?,
                    "enable_p1_p2" => r.enabled[1] = boolean(value)?,
                    "enable_p2_p3" => r.enabled[2] = boolean(value)?,
                    "leak_signal" => r.leak_signal = LeakSignal::parse(value).ok_or_else(|| format!("unknown leak_signal `{value}`"))?,
                    "fast_shift" => r.fast_shift = auto_or(value)?,
                    _ => return unknown(),
                }
            }
            "experiment" => {
                let e = &mut self.experiment;
                match key {
                    "cells_per_state" => e.cells_per_state = num(value)?,
                    "dist_ages" => e.dist_ages = list(value)?,
                    "opt_ages" => e.opt_ages = list(value)?,
                    "histogram_bin" => e.histogram_bin = num(value)?,
                    "age_span_days" => e.age_span_days = num(value)?,
                    "block_fill_days" => e.block_fill_days = num(value)?,
                    "rfr_pe_points" => e.rfr_pe_points = list(value)?,
                    "rfr_age_days" => e.rfr_age_days = num(value)?,
                    "rfr_blocks" => e.rfr_blocks = num(value)?,
                    "lifetime_age_days" => e.lifetime_age_days = num(value)?,
                    "lifetime_blocks" => e.lifetime_blocks = num(value)?,
                    _ => return unknown(),
                }
            }
            _ => return Err(format!("unknown section [{section}]")),
        }
        Ok(())
    }

    /// Every setting, in a form [`DeviceConfig::parse`] reads back identically.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let c = &self.channel;
        let e = &self.ecc;
        let r = &self.ror;
        let f = &self.rfr;
        let x = &self.experiment;
        let _ = writeln!(s, "[device]");
        let _ = writeln!(s, "blocks = {}", self.blocks);
        let _ = writeln!(s, "wordlines_per_block = {}", self.wordlines_per_block);
        let _ = writeln!(s, "cells_per_wordline = {}", self.cells_per_wordline);
        let _ = writeln!(s, "pe_cycles = {}", self.pe_cycles);
        let _ = writeln!(s, "\n[channel]");
        let _ = writeln!(s, "state_mean = {}", join(&c.state_mean));
        let _ = writeln!(s, "state_sigma = {}", join(&c.state_sigma));
        let _ = writeln!(s, "shift_coeff = {}", join(&c.shift_coeff));
        let _ = writeln!(s, "shift_timescale = {}", c.shift_timescale);
        let _ = writeln!(s, "leak_lognorm_mu = {}", c.leak_lognorm_mu);
        let _ = writeln!(s, "leak_lognorm_sigma = {}", c.leak_lognorm_sigma);
        let _ = writeln!(s, "pe_sigma_coeff = {}", c.pe_sigma_coeff);
        let _ = writeln!(s, "pe_shift_coeff = {}", c.pe_shift_coeff);
        let _ = writeln!(s, "seed = {}", c.seed);
        let _ = writeln!(s, "\n[ecc]");
        let _ = writeln!(s, "codeword_bits = {}", e.codeword_bits);
        let _ = writeln!(s, "t_capability = {}", e.t_capability);
        let _ = writeln!(s, "decode_base_cost = {}", e.decode_base_cost);
        let _ = writeln!(s, "decode_per_error_cost = {}", e.decode_per_error_cost);
        let _ = writeln!(s, "\n[ror]");
        let _ = writeln!(s, "v_default = {}", join(&r.v_default.as_array()));
        let _ = writeln!(s, "delta_v = {}", r.delta_v);
        let _ = writeln!(s, "retrigger_period_days = {}", r.retrigger_period_days);
        let _ = writeln!(s, "page_read_cost = {}", r.page_read_cost);
        let _ = writeln!(s, "\n[rfr]");
        let _ = writeln!(s, "delta_margin = {}", opt_str(f.delta_margin));
        let _ = writeln!(s, "delta_sigma_mult = {}", f.delta_sigma_mult);
        let _ = writeln!(s, "extra_retention_days = {}", f.extra_retention_days);
        let _ = writeln!(s, "enable_er_p1 = {}", f.enabled[0]);
        let _ = writeln!(s, "enable_p1_p2 = {}", f.enabled[1]);
        let _ = writeln!(s, "enable_p2_p3 = {}", f.enabled[2]);
        let _ = writeln!(s, "leak_signal = {}", f.leak_signal.name());
        let _ = writeln!(s, "fast_shift = {}", opt_str(f.fast_shift));
        let _ = writeln!(s, "\n[experiment]");
        let _ = writeln!(s, "cells_per_state = {}", x.cells_per_state);
        let _ = writeln!(s, "dist_ages = {}", join(&x.dist_ages));
        let _ = writeln!(s, "opt_ages = {}", join(&x.opt_ages));
        let _ = writeln!(s, "histogram_bin = {}", x.histogram_bin);
        let _ = writeln!(s, "age_span_days = {}", x.age_span_days);
        let _ = writeln!(s, "block_fill_days = {}", x.block_fill_days);
        let _ = writeln!(s, "rfr_pe_points = {}", join(&x.rfr_pe_points));
        let _ = writeln!(s, "rfr_age_days = {}", x.rfr_age_days);
        let _ = writeln!(s, "rfr_blocks = {}", x.rfr_blocks);
        let _ = writeln!(s, "lifetime_age_days = {}", x.lifetime_age_days);
        let _ = writeln!(s, "lifetime_blocks = {}", x.lifetime_blocks);
        s
    }
}

const SECTIONS: [&str; 6] = ["device", "channel", "ecc", "ror", "rfr", "experiment"];

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("invalid number `{v}`"))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|s| num(s.trim())).collect()
}

fn arr4(v: &str) -> std::result::Result<[f64; 4], String> {
    let xs: Vec<f64> = list(v)?;
    xs.try_into().map_err(|xs: Vec<f64>| format!("expected 4 values, got {}", xs.len()))
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("invalid boolean `{v}`")),
    }
}

fn auto_or<T: FromStr>(v: &str) -> std::result::Result<Option<T>, String> {
    if v == "auto" {
        Ok(None)
    } else {
        num(v).map(Some)
    }
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_parse_round_trip() {
        let cfg = DeviceConfig::default();
        assert_eq!(DeviceConfig::parse(&cfg.dump()).unwrap(), cfg);
        let mut odd = cfg.clone();
        odd.channel.shift_timescale = 0.1 + 0.2;
        odd.rfr.delta_margin = Some(12);
        odd.rfr.fast_shift = Some(3.25);
        odd.rfr.enabled = [false, true, true];
        odd.experiment.opt_ages = vec![0.0, 0.5, 3.0];
        assert_eq!(DeviceConfig::parse(&odd.dump()).unwrap(), odd);
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(DeviceConfig::parse("").unwrap(), DeviceConfig::default());
    }

    #[test]
    fn derived_defaults_follow_overrides() {
        let cfg = DeviceConfig::parse("[device]\ncells_per_wordline = 512\n[channel]\nstate_mean = 100, 200, 300, 400\n").unwrap();
        assert_eq!(cfg.ecc.codeword_bits, 512);
        assert_eq!(cfg.ror.v_default.as_array(), [150, 250, 350]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = DeviceConfig::parse("[device]\nblocks = 4\nblocks = x\n").unwrap_err();
        assert_eq!(err, Error::ConfigParse { line: 3, msg: "invalid number `x`".into() });
        let err = DeviceConfig::parse("# hi\n[nope]\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 2, .. }));
        let err = DeviceConfig::parse("blocks = 1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 1, .. }));
        let err = DeviceConfig::parse("[ror]\nv_default = 1, 2\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 2, .. }));
        let err = DeviceConfig::parse("[rfr]\nbogus = 1 ; comment\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 2, .. }));
    }

    #[test]
    fn semantic_validation() {
        assert!(matches!(DeviceConfig::parse("[ror]\ndelta_v = 3\n"), Err(Error::InvalidConfig(_))));
        assert!(matches!(DeviceConfig::parse("[device]\nblocks = 0\n"), Err(Error::InvalidConfig(_))));
        assert!(matches!(DeviceConfig::parse("[ecc]\ncodeword_bits = 7\n"), Err(Error::InvalidConfig(_))));
    }
}
