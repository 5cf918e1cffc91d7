use proptest::prelude::*;
use satsplit::emunet::{
    DelaySchedule, Direction, EmuNet, EnqueueOutcome, HopSpec, LinkId, LinkSpec, NetHandler, NodeId, Packet,
    Topology,
};
use satsplit::time::SimTime;

#[derive(Debug, thiserror::Error)]
#[error("never")]
struct Never;

/// Records `(arrival, id, sent_at, size)` of everything that reaches a node.
#[derive(Default)]
struct Sink {
    arrivals: Vec<(SimTime, u64, SimTime, u32)>,
}

impl NetHandler<(), ()> for Sink {
    type Error = Never;
    fn on_packet(&mut self, net: &mut EmuNet<(), ()>, p: Packet<()>) -> Result<(), Never> {
        self.arrivals.push((net.now(), p.id, p.sent_at, p.size_bytes));
        Ok(())
    }
    fn on_timer(&mut self, _: &mut EmuNet<(), ()>, _: ()) -> Result<(), Never> {
        Ok(())
    }
}

fn link(delay_ms: u64, rate_bps: u64, loss: f64, queue: u32, direction: Direction) -> LinkSpec {
    LinkSpec {
        delay: DelaySchedule::constant(SimTime::from_millis(delay_ms)),
        loss_prob: loss,
        rate_bps,
        queue_capacity_pkts: queue,
        direction,
    }
}

/// One hop whose forward link (node 1 to node 0) is `forward`.
fn one_hop(forward: LinkSpec, seed: u64) -> EmuNet<(), ()> {
    let topo = Topology::chain(vec![HopSpec {
        forward,
        ret: LinkSpec::ideal(Direction::Return),
    }])
    .unwrap();
    EmuNet::new(&topo, seed, 1500)
}

fn bytes_per_sec(rate_bps: u64) -> u64 {
    rate_bps / 8
}

#[test]
fn loss_rate_within_four_sigma() {
    for p in [0.0001, 0.001, 0.01] {
        let n = 100_000u64;
        let mut net = one_hop(link(250, 0, p, u32::MAX, Direction::Forward), 42);
        let mut dropped = 0u64;
        for _ in 0..n {
            let (_, outcome) = net.send(NodeId(1), NodeId(0), 1240, ()).unwrap();
            if matches!(outcome, EnqueueOutcome::Dropped(_)) {
                dropped += 1;
            }
        }
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (dropped as f64 - mean).abs() <= 4.0 * sigma,
            "p={p}: {dropped} drops, expected {mean}±{}",
            4.0 * sigma
        );
        let stats = net.link(LinkId::new(0, Direction::Forward)).stats();
        assert_eq!(stats.dropped_random, dropped);
        assert_eq!(stats.dropped_overflow, 0);
    }
}

#[test]
fn same_seed_same_drops() {
    let drops = |seed| {
        let mut net = one_hop(link(10, 0, 0.05, u32::MAX, Direction::Forward), seed);
        (0..2000)
            .map(|_| matches!(net.send(NodeId(1), NodeId(0), 100, ()).unwrap().1, EnqueueOutcome::Dropped(_)))
            .collect::<Vec<_>>()
    };
    assert_eq!(drops(9), drops(9));
    assert_ne!(drops(9), drops(10));
}

#[test]
fn geo_path_one_way_latency() {
    // client - ST (LAN), ST - GW (250 ms), GW - server (40 ms)
    let hop = |d| HopSpec {
        forward: link(d, 0, 0.0, 64, Direction::Forward),
        ret: link(d, 0, 0.0, 64, Direction::Return),
    };
    let topo = Topology::satellite(hop(0), hop(250), hop(40)).unwrap();
    assert_eq!(topo.base_rtt(), SimTime::from_millis(580));
    let mut net: EmuNet<(), ()> = EmuNet::new(&topo, 1, 1500);
    net.send(NodeId::SERVER, NodeId::CLIENT, 1240, ()).unwrap();
    let mut sink = Sink::default();
    net.run_until(SimTime::from_secs(1), &mut sink).unwrap();
    assert_eq!(sink.arrivals.len(), 1);
    assert_eq!(sink.arrivals[0].0, SimTime::from_millis(290));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Packets leave a link in the order they entered it, no earlier than
    /// propagation plus their own serialization, and never faster than the
    /// configured rate allows over any one-second window.
    #[test]
    fn fifo_latency_floor_and_rate_cap(
        sizes in prop::collection::vec(60u32..=1240, 1..400),
        gaps_us in prop::collection::vec(0u64..2_000, 1..400),
        rate_mbps in 1u64..=50,
        delay_ms in 0u64..300,
    ) {
        let rate = rate_mbps * 1_000_000;
        let mut net = one_hop(link(delay_ms, rate, 0.0, 100_000, Direction::Forward), 3);
        let mut sink = Sink::default();
        let mut t = SimTime::ZERO;
        for (i, &size) in sizes.iter().enumerate() {
            t += SimTime::from_micros(gaps_us[i % gaps_us.len()]);
            net.run_until(t, &mut sink).unwrap();
            net.send(NodeId(1), NodeId(0), size, ()).unwrap();
        }
        net.run_until(t + SimTime::from_secs(60), &mut sink).unwrap();
        prop_assert_eq!(sink.arrivals.len(), sizes.len());

        let ids: Vec<u64> = sink.arrivals.iter().map(|a| a.1).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        prop_assert_eq!(ids, sorted);

        for &(arrival, _, sent, size) in &sink.arrivals {
            let ser_us = (u64::from(size) * 8 * 1_000_000).div_ceil(rate);
            let floor = sent + SimTime::from_millis(delay_ms) + SimTime::from_micros(ser_us);
            // serialization rounds to whole microseconds
            prop_assert!(arrival + SimTime::from_micros(1) >= floor, "{arrival} < {floor}");
        }

        let cap = bytes_per_sec(rate) + 1240;
        let mut lo = 0;
        let mut window = 0u64;
        for hi in 0..sink.arrivals.len() {
            window += u64::from(sink.arrivals[hi].3);
            while sink.arrivals[hi].0 - sink.arrivals[lo].0 >= SimTime::from_secs(1) {
                window -= u64::from(sink.arrivals[lo].3);
                lo += 1;
            }
            prop_assert!(window <= cap, "{window} bytes in one second, cap {cap}");
        }
    }

    /// A drop-tail queue never holds more than its capacity.
    #[test]
    fn queue_never_exceeds_capacity(burst in 1usize..500, cap in 1u32..100) {
        let mut net = one_hop(link(0, 1_000_000, 0.0, cap, Direction::Forward), 5);
        let mut delivered = 0;
        for _ in 0..burst {
            if let EnqueueOutcome::Delivered(_) = net.send(NodeId(1), NodeId(0), 1240, ()).unwrap().1 {
                delivered += 1;
            }
            let q = net.link(LinkId::new(0, Direction::Forward)).queued_pkts(net.now());
            prop_assert!(q <= cap as usize);
        }
        prop_assert_eq!(delivered, burst.min(cap as usize));
    }
}
