use proptest::prelude::*;

use nandret::channel::voltage_at;
use nandret::harness::experiments::{mean_sd, Population};
use nandret::{Cell, ChannelParams, State};

fn population(per_state: usize, pe: u32, seed: u64) -> (ChannelParams, Population) {
    let params = ChannelParams { seed, ..ChannelParams::default() };
    let pop = Population::generate(&params, per_state, pe);
    (params, pop)
}

fn state_stats(pop: &Population, params: &ChannelParams, age: f64) -> [(f64, f64); 4] {
    State::ALL.map(|s| {
        let v: Vec<f64> = pop.of_state(s).iter().map(|c| c.voltage(age, pop.pe_count, params)).collect();
        mean_sd(&v)
    })
}

proptest! {
    #[test]
    fn aging_is_a_function_of_absolute_age(
        state in 0usize..4,
        v0 in 0.0f32..512.0,
        leak in 0.0f32..5.0,
        pe in 0u32..12_000,
        t1 in 0.0f64..100.0,
        t2 in 0.0f64..100.0,
    ) {
        let p = ChannelParams::default();
        let cell = Cell { true_state: State::from_index(state).unwrap(), programmed_voltage: v0, leak_rate: leak };
        let direct = voltage_at(&cell, t2, pe, &p).unwrap();
        let _ = voltage_at(&cell, t1, pe, &p).unwrap();
        prop_assert_eq!(voltage_at(&cell, t2, pe, &p).unwrap(), direct);
        prop_assert!((0.0..=512.0).contains(&direct));
        // Leakage only lowers voltage, and more time never raises it.
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(voltage_at(&cell, hi, pe, &p).unwrap() <= voltage_at(&cell, lo, pe, &p).unwrap());
    }
}

#[test]
fn means_stay_ordered_through_ninety_days() {
    let (p, pop) = population(10_000, 3000, 11);
    for age in [0.0, 1.0, 7.0, 28.0, 60.0, 90.0] {
        let s = state_stats(&pop, &p, age);
        assert!(s.windows(2).all(|w| w[0].0 < w[1].0), "age {age}: {s:?}");
    }
}

#[test]
fn higher_states_shift_further() {
    let (p, pop) = population(10_000, 3000, 12);
    let fresh = state_stats(&pop, &p, 0.0);
    for age in [1.0, 7.0, 28.0] {
        let aged = state_stats(&pop, &p, age);
        let drop: Vec<f64> = (0..4).map(|i| fresh[i].0 - aged[i].0).collect();
        assert!(drop[3] >= drop[2] && drop[2] >= drop[1], "age {age}: {drop:?}");
    }
}

#[test]
fn distributions_widen_with_age() {
    let (p, pop) = population(10_000, 8000, 13);
    let sds: Vec<[f64; 4]> = [0.0, 1.0, 7.0, 28.0].iter().map(|&a| state_stats(&pop, &p, a).map(|s| s.1)).collect();
    for w in sds.windows(2) {
        assert!(w[1].iter().zip(&w[0]).all(|(a, b)| a >= b), "{sds:?}");
    }
}

#[test]
fn median_leak_rate_is_near_one() {
    let (_, pop) = population(25_000, 0, 14);
    let mut leaks: Vec<f32> = pop.cells.iter().map(|c| c.leak_rate).collect();
    leaks.sort_by(f32::total_cmp);
    let median = f64::from(leaks[leaks.len() / 2]);
    assert!((median - 1.0).abs() <= 0.02, "median {median}");
}

#[test]
fn wear_widens_programming_sigma_analytically() {
    let p = ChannelParams::default();
    for s in State::ALL {
        let want = p.state_sigma[s.index()] * (1.0 + 8.0 * 0.03);
        assert!((p.program_sigma(s, 8000) - want).abs() < 1e-12);
    }
    let (_, pop) = population(50_000, 8000, 15);
    let (_, sd) = mean_sd(&pop.of_state(State::P2).iter().map(|c| f64::from(c.programmed_voltage)).collect::<Vec<_>>());
    let want = 12.0 * 1.24;
    assert!((sd - want).abs() / want < 0.02, "sd {sd} want {want}");
}
