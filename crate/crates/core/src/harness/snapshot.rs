//! Binary device snapshot.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "NANDSNAP" | version u32 | config_len u32 | config text (dump format)
//! clock f64 | stats 7 x u64 | block_count u32
//! per block: generation u64 | pe_count u32 | page_count u32
//!            page_count x (flag u8, time f64) | cells x (state u8, v0 f32, leak f32)
//! table_count u32 | per entry: flag u8, 3 bytes, learned_at f64
//! ```
//!
//! Geometry comes from the embedded config. RNG state is captured by the
//! per-block generation counters, which key every future stream.

use std::io::{Read, Write};
use std::path::Path;

use crate::channel::{Block, Cell, State};
use crate::error::{Error, Result};
use crate::harness::config::DeviceConfig;
use crate::harness::device::{Device, DeviceStats};
use crate::ror::{TableEntry, VoltageTable};

const MAGIC: &[u8; 8] = b"NANDSNAP";
const VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b).map_err(Error::from)
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f32(&mut self, v: f32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|_| Error::Snapshot(format!("truncated while reading {what}")))?;
        Ok(b)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }
    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array(what)?))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
}

fn stats_fields(s: &DeviceStats) -> [u64; 7] {
    [s.programs, s.reads, s.read_failures, s.read_attempts, s.pre_opt_runs, s.pre_opt_reads, s.skipped_reads]
}

impl Device {
    pub fn write_snapshot<W: Write>(&self, w: W) -> Result<()> {
        let mut w = Writer(w);
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        let cfg = self.config.dump();
        w.u32(cfg.len() as u32)?;
        w.bytes(cfg.as_bytes())?;
        w.f64(self.clock)?;
        for v in stats_fields(&self.stats) {
            w.u64(v)?;
        }
        w.u32(self.blocks.len() as u32)?;
        for (block, gen) in self.blocks.iter().zip(&self.generations) {
            w.u64(*gen)?;
            w.u32(block.pe_count())?;
            w.u32(block.pages() as u32)?;
            for t in block.page_program_times() {
                w.u8(u8::from(t.is_some()))?;
                w.f64(t.unwrap_or(0.0))?;
            }
            for c in block.cells() {
                w.u8(c.true_state as u8)?;
                w.f32(c.programmed_voltage)?;
                w.f32(c.leak_rate)?;
            }
        }
        w.u32(self.table.blocks() as u32)?;
        for e in self.table.entries() {
            w.u8(u8::from(e.is_some()))?;
            w.bytes(&e.map_or([0; 3], |e| e.bytes()))?;
            w.f64(e.map_or(0.0, |e| e.learned_at))?;
        }
        Ok(())
    }

    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_snapshot(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_snapshot<R: Read>(r: R) -> Result<Device> {
        let mut r = Reader(r);
        if &r.array::<8>("magic")? != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let len = r.u32("config length")? as usize;
        if len > 1 << 20 {
            return Err(Error::Snapshot("config section too large".into()));
        }
        let mut text = vec![0u8; len];
        r.0.read_exact(&mut text).map_err(|_| Error::Snapshot("truncated while reading config".into()))?;
        let text = String::from_utf8(text).map_err(|_| Error::Snapshot("config is not utf-8".into()))?;
        let config = DeviceConfig::parse(&text).map_err(|e| Error::Snapshot(format!("embedded config: {e}")))?;
        let clock = r.f64("clock")?;
        let mut s = [0u64; 7];
        for v in &mut s {
            *v = r.u64("stats")?;
        }
        let stats = DeviceStats {
            programs: s[0],
            reads: s[1],
            read_failures: s[2],
            read_attempts: s[3],
            pre_opt_runs: s[4],
            pre_opt_reads: s[5],
            skipped_reads: s[6],
        };
        let n_blocks = r.u32("block count")? as usize;
        if n_blocks != config.blocks {
            return Err(Error::Snapshot(format!("block count {n_blocks} does not match config {}", config.blocks)));
        }
        let (wl, cpw) = (config.wordlines_per_block, config.cells_per_wordline);
        let mut blocks = Vec::with_capacity(n_blocks);
        let mut generations = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            generations.push(r.u64("generation")?);
            let pe = r.u32("pe count")?;
            let pages = r.u32("page count")? as usize;
            if pages != 2 * wl {
                return Err(Error::Snapshot(format!("page count {pages} does not match geometry")));
            }
            let mut times = Vec::with_capacity(pages);
            for _ in 0..pages {
                let flag = r.u8("page flag")?;
                let t = r.f64("page time")?;
                times.push(match flag {
                    0 => None,
                    1 => Some(t),
                    _ => return Err(Error::Snapshot("bad page flag".into())),
                });
            }
            let mut cells = Vec::with_capacity(wl * cpw);
            for _ in 0..wl * cpw {
                let state = State::from_index(r.u8("cell state")? as usize).ok_or_else(|| Error::Snapshot("bad cell state".into()))?;
                let programmed_voltage = r.f32("cell voltage")?;
                let leak_rate = r.f32("cell leak rate")?;
                cells.push(Cell { true_state: state, programmed_voltage, leak_rate });
            }
            blocks.push(Block::from_parts(wl, cpw, cells, times, pe).map_err(|e| Error::Snapshot(e.to_string()))?);
        }
        let n_table = r.u32("table count")? as usize;
        if n_table != n_blocks {
            return Err(Error::Snapshot("table size does not match block count".into()));
        }
        let mut table = VoltageTable::new(n_table);
        for b in 0..n_table {
            let flag = r.u8("table flag")?;
            let bytes = r.array::<3>("table entry")?;
            let learned_at = r.f64("learned_at")?;
            match flag {
                0 => {}
                1 => table.set(b, TableEntry::from_bytes(bytes, learned_at).map_err(|e| Error::Snapshot(e.to_string()))?)?,
                _ => return Err(Error::Snapshot("bad table flag".into())),
            }
        }
        let mut rest = [0u8; 1];
        if r.0.read(&mut rest)? != 0 {
            return Err(Error::Snapshot("trailing bytes after snapshot".into()));
        }
        Ok(Device { config, blocks, generations, clock, table, stats })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_snapshot(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Device> {
        let f = std::fs::File::open(path)?;
        Device::read_snapshot(std::io::BufReader::new(f))
    }

    /// Replaces this device with the snapshot at `path`; on error `self` is untouched.
    pub fn restore(&mut self, path: &Path) -> Result<()> {
        *self = Device::load(path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::DeviceConfig;

    fn device() -> Device {
        let mut c = DeviceConfig { blocks: 2, wordlines_per_block: 3, cells_per_wordline: 64, ..DeviceConfig::default() };
        c.ecc.codeword_bits = 64;
        let mut d = Device::new(c).unwrap();
        d.program_block(1, 0.5, 0.01).unwrap();
        d.advance_to(2.0).unwrap();
        d.read_page(1, 5).unwrap();
        d
    }

    #[test]
    fn snapshot_round_trip_is_identity() {
        let d = device();
        let bytes = d.snapshot_bytes();
        let back = Device::read_snapshot(&bytes[..]).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.snapshot_bytes(), bytes);
    }

    #[test]
    fn truncated_and_corrupt_snapshots_rejected() {
        let bytes = device().snapshot_bytes();
        for cut in [0, 4, 10, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Device::read_snapshot(&bytes[..cut]), Err(Error::Snapshot(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(Device::read_snapshot(&bad[..]).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(Device::read_snapshot(&bad[..]).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Device::read_snapshot(&long[..]).is_err());
    }

    #[test]
    fn failed_restore_leaves_device_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.bin");
        let mut d = device();
        let bytes = d.snapshot_bytes();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        let before = d.clone();
        assert!(d.restore(&path).is_err());
        assert_eq!(d, before);
    }
}
