use nandret::channel::{page_wordline, PageKind};
use nandret::ecc;
use nandret::harness::experiments::random_block;
use nandret::read::{self, page_bits, ReadRefs, Threshold, GRID_STEP};
use nandret::rfr::{self, classify_from_scans, susceptible_from_voltages, LeakSignal, RecoveryTimes, Scan, Window};
use nandret::ror;
use nandret::{Block, DeviceConfig, State};

fn failed_pages(cfg: &DeviceConfig, block: &Block, then: f64, refs_of: impl Fn(usize) -> ReadRefs) -> Vec<(usize, ReadRefs)> {
    let p = &cfg.channel;
    (0..block.pages())
        .filter_map(|page| {
            let refs = refs_of(page_wordline(page));
            let bits = read::read_page(block, page, &refs, then, p).unwrap();
            let truth = block.page_truth(page).unwrap();
            (!ecc::decode(&bits, &truth, &cfg.ecc).unwrap().is_corrected()).then_some((page, refs))
        })
        .collect()
}

fn old_worn_block(cfg: &DeviceConfig, s: u64) -> Block {
    random_block(cfg, 8000, &[700, s], 0.0).unwrap()
}

fn cfg() -> DeviceConfig {
    DeviceConfig { wordlines_per_block: 16, ..DeviceConfig::default() }
}

#[test]
fn flips_stay_local_and_types_partition() {
    let cfg = cfg();
    let p = &cfg.channel;
    let then = 28.0;
    let times = RecoveryTimes::new(then, &cfg.rfr);
    let block = old_worn_block(&cfg, 1);
    let pages = failed_pages(&cfg, &block, then, |w| read::wordline_opt_refs(&block, w, then, p).unwrap());
    assert!(pages.len() >= 8, "{}", pages.len());
    for (page, refs) in pages {
        let rec = rfr::rfr_recover_page(&block, page, &refs, &cfg.rfr, &cfg.ecc, times, p).unwrap();
        let before_v = block.wordline_voltages(page_wordline(page), then, p).unwrap();
        let original = page_bits(PageKind::of(page), &before_v, &refs);
        let mut allowed = vec![false; original.len()];
        for t in &rec.thresholds {
            let in_window = |c: usize| (f64::from(t.window.lo())..f64::from(t.window.hi())).contains(&before_v[c]);
            let mut seen: Vec<usize> = t.classes.iter().map(|c| c.cell).collect();
            seen.sort_unstable();
            let mut sus: Vec<usize> = t.susceptible.iter().map(|s| s.cell).collect();
            sus.sort_unstable();
            assert_eq!(seen, sus, "classes partition the susceptible set");
            assert_eq!(t.type_counts().iter().sum::<usize>(), t.susceptible.len());
            for s in &t.susceptible {
                assert!(in_window(s.cell));
                allowed[s.cell] = true;
            }
            for &c in &t.flipped {
                assert!(in_window(c));
            }
        }
        for (i, (a, b)) in original.iter().zip(&rec.bits).enumerate() {
            assert!(a == b || allowed[i], "page {page} cell {i} flipped outside every window");
        }
    }
}

#[test]
fn msb_flips_never_cross_into_the_other_reference() {
    let cfg = cfg();
    let p = &cfg.channel;
    let then = 28.0;
    let times = RecoveryTimes::new(then, &cfg.rfr);
    let block = old_worn_block(&cfg, 2);
    let pages = failed_pages(&cfg, &block, then, |w| read::wordline_opt_refs(&block, w, then, p).unwrap());
    for (page, refs) in pages.into_iter().filter(|(pg, _)| PageKind::of(*pg) == PageKind::Msb) {
        let v = block.wordline_voltages(page_wordline(page), then, p).unwrap();
        let rec = rfr::rfr_recover_page(&block, page, &refs, &cfg.rfr, &cfg.ecc, times, p).unwrap();
        for t in &rec.thresholds {
            for &c in &t.flipped {
                let sensed = read::sense_state(v[c], &refs);
                assert!(
                    sensed == t.threshold.lower() || sensed == t.threshold.upper(),
                    "{} cell {c} sensed {sensed:?}",
                    t.threshold.name()
                );
            }
        }
    }
}

#[test]
fn table_refs_drive_recovery_too() {
    let cfg = cfg();
    let p = &cfg.channel;
    let then = 28.0;
    let block = old_worn_block(&cfg, 3);
    let learned = ror::pre_optimize_block(&block, &cfg.ror, &cfg.ecc, then, p).unwrap().entry.refs();
    let pages = failed_pages(&cfg, &block, then, |_| learned);
    assert!(!pages.is_empty());
    let times = RecoveryTimes::new(then, &cfg.rfr);
    for (page, refs) in pages {
        let rec = rfr::rfr_recover_page(&block, page, &refs, &cfg.rfr, &cfg.ecc, times, p).unwrap();
        assert_eq!(
            rec.before.raw_errors,
            read::rber_of(&block, page, &refs, then, &block.page_truth(page).unwrap(), p).unwrap().raw_errors
        );
        assert_eq!(rec.bits.len(), cfg.cells_per_wordline);
    }
}

/// Measured drop that counts as fast in the fixtures. The sweep saturates one
/// step below the window, so a cell leaving it shows a drop of at least 4 here.
const FAST_DROP: f64 = 4.0;

/// Threshold P2-P3 at 300 with a +/-10 window; `(state, before, after)` per cell.
fn separable_fixture() -> Vec<(State, f64, f64)> {
    let mut cells = Vec::new();
    for i in 0..10 {
        let j = f64::from(i % 4);
        cells.push((State::P3, 298.0 - j, 274.0 - j)); // misread low, fast: type 3
        cells.push((State::P2, 302.0 + j, 302.0 + j)); // misread high, slow: type 2
        cells.push((State::P2, 294.0 - j, 294.0 - j)); // correct, slow: type 1
        cells.push((State::P3, 304.0 + j, 284.0 + j)); // correct, fast: type 4
        cells.push((State::P2, 250.0, 250.0)); // outside the window
        cells.push((State::P3, 380.0, 360.0));
    }
    cells
}

fn recover_fixture(cells: &[(State, f64, f64)]) -> (u64, u64, Vec<usize>) {
    let window = Window::new(300, 10).unwrap();
    let refs = ReadRefs::new(166, 286, 300).unwrap();
    let before: Vec<f64> = cells.iter().map(|c| c.1).collect();
    let after: Vec<f64> = cells.iter().map(|c| c.2).collect();
    let truth: Vec<bool> = cells.iter().map(|c| PageKind::Msb.bit(c.0)).collect();
    let mut bits = page_bits(PageKind::Msb, &before, &refs);
    let errors = |b: &[bool]| b.iter().zip(&truth).filter(|(x, y)| x != y).count() as u64;
    let start = errors(&bits);
    let (_, sus) = susceptible_from_voltages(&before, window);
    let sweep: Vec<u32> = (window.lo()..=window.hi()).step_by(GRID_STEP as usize).collect();
    let classes = classify_from_scans(&sus, &Scan::take(&before, sweep.clone()), &Scan::take(&after, sweep), LeakSignal::Sweep, FAST_DROP);
    let flipped: Vec<usize> = classes.iter().filter(|c| c.should_flip()).map(|c| c.cell).collect();
    for &c in &flipped {
        bits[c] = !bits[c];
    }
    (start, errors(&bits), flipped)
}

#[test]
fn separable_fixture_recovers_fully() {
    let (before, after, flipped) = recover_fixture(&separable_fixture());
    assert_eq!(before, 20);
    assert_eq!(after, 0);
    assert_eq!(flipped.len(), 20);
}

#[test]
fn single_type_three_cell_removes_one_error() {
    let cells = vec![(State::P3, 296.0, 270.0), (State::P2, 250.0, 250.0), (State::P3, 380.0, 360.0)];
    let (before, after, flipped) = recover_fixture(&cells);
    assert_eq!((before, after, flipped), (1, 0, vec![0]));
}

#[test]
fn empty_susceptible_set_is_identity() {
    let cells = vec![(State::P2, 250.0, 250.0), (State::P3, 380.0, 360.0)];
    let (before, after, flipped) = recover_fixture(&cells);
    assert_eq!((before, after), (0, 0));
    assert!(flipped.is_empty());
}

#[test]
fn misclassified_cells_can_make_a_page_worse() {
    // Correct P3 cells above OPT that leak slowly look like type 2 and get flipped.
    let cells = vec![(State::P3, 304.0, 304.0), (State::P3, 306.0, 305.0)];
    let (before, after, _) = recover_fixture(&cells);
    assert!(after > before);
}

#[test]
fn thresholds_are_processed_by_drift() {
    let cfg = cfg();
    assert_eq!(cfg.rfr.order(PageKind::Msb), vec![Threshold::P2P3, Threshold::ErP1]);
    assert_eq!(cfg.rfr.order(PageKind::Lsb), vec![Threshold::P1P2]);
}
