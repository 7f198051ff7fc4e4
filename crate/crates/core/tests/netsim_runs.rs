//! End-to-end runs of the dumbbell on small populations.

use redsim_core::{simulate, GroupSpec, RedParams, RedVariant, Scenario};

fn single_flow(rwnd: u32, red: RedParams) -> Scenario {
    Scenario {
        groups: vec![GroupSpec { flow_count: 1, mtu: 1500 }],
        access_delay_jitter: 0.0,
        start_spread: 0.0,
        red,
        duration: 30.0,
        warmup: 5.0,
        rwnd_segments: rwnd,
        ..Scenario::default()
    }
}

fn big_buffer() -> RedParams {
    RedParams {
        min_th: 1e6,
        max_th: 2e6,
        capacity: 4e6,
        ..RedParams::default()
    }
}

#[test]
fn window_limited_flow_gets_rwnd_per_rtt() {
    let s = single_flow(10, RedParams::default());
    let r = simulate(&s).unwrap();
    let g = &r.group_stats().unwrap()[0];
    assert_eq!(g.pkts_dropped, 0);
    let serialization = 1500.0 * 8.0 / s.bottleneck_rate + 1500.0 * 8.0 / s.access_rate;
    let rtt = 2.0 * s.bottleneck_delay + serialization;
    let expected = 10.0 * 1460.0 * 8.0 / rtt;
    assert!((g.goodput_bps / expected - 1.0).abs() < 0.05, "{} vs {expected}", g.goodput_bps);
}

#[test]
fn unconstrained_flow_fills_the_bottleneck_without_loss() {
    let s = single_flow(200, big_buffer());
    let r = simulate(&s).unwrap();
    let g = &r.group_stats().unwrap()[0];
    assert_eq!(g.pkts_dropped, 0);
    let payload_rate = s.bottleneck_rate * 1460.0 / 1500.0;
    assert!((g.goodput_bps / payload_rate - 1.0).abs() < 0.05, "{} vs {payload_rate}", g.goodput_bps);
}

#[test]
fn drop_tail_baseline_only_overflows() {
    let s = Scenario {
        groups: vec![GroupSpec { flow_count: 4, mtu: 1500 }, GroupSpec { flow_count: 4, mtu: 375 }],
        bottleneck_rate: 5e6,
        red: RedParams::drop_tail(60_000.0, 1500),
        duration: 40.0,
        warmup: 5.0,
        ..Scenario::default()
    };
    let r = simulate(&s).unwrap();
    assert!(r.conservation_violations().is_empty());
    for g in r.group_stats().unwrap() {
        assert!(g.pkts_dropped > 0);
        assert_eq!(g.plr, g.plr_forced);
    }
}

#[test]
fn runs_are_reproducible_and_seed_sensitive() {
    let s = Scenario {
        groups: vec![GroupSpec { flow_count: 3, mtu: 1500 }, GroupSpec { flow_count: 3, mtu: 375 }],
        bottleneck_rate: 3e6,
        variant: RedVariant::Red4,
        duration: 20.0,
        warmup: 2.0,
        seed: 11,
        ..Scenario::default()
    };
    let a = simulate(&s).unwrap();
    let b = simulate(&s).unwrap();
    assert_eq!(a.ledgers, b.ledgers);
    assert_eq!(a.events, b.events);
    let c = simulate(&Scenario { seed: 12, ..s }).unwrap();
    assert_ne!(a.ledgers, c.ledgers);
}

#[test]
fn every_variant_conserves_packets() {
    for variant in RedVariant::ALL {
        let s = Scenario {
            groups: vec![GroupSpec { flow_count: 2, mtu: 1500 }, GroupSpec { flow_count: 2, mtu: 750 }],
            bottleneck_rate: 2e6,
            variant,
            duration: 15.0,
            warmup: 1.0,
            ..Scenario::default()
        };
        let r = simulate(&s).unwrap();
        assert!(r.conservation_violations().is_empty(), "{variant}");
        assert!(r.group_stats().unwrap().iter().all(|g| g.pkts_dropped > 0), "{variant}");
    }
}
