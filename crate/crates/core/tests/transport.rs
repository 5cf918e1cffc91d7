mod common;

use std::collections::HashMap;

use common::runs::{bulk, connections, events, records, run, scenario, web};
use satsplit::harness::Preset;
use satsplit::workloads::Measurement;

fn establishment(preset: Preset, m: Measurement, tls_rtts: u8) -> f64 {
    let mut s = scenario(preset, 0.0);
    s.tcp_tls_rtts = tls_rtts;
    bulk(&run(&s, m, false, 1, false)).establishment_ms
}

#[test]
fn handshake_costs_whole_rtts() {
    for (preset, rtt) in [(Preset::Geo, 580.0), (Preset::Leo, 112.0)] {
        let quic = establishment(preset, Measurement::QuicBulk, 0);
        assert!((rtt..rtt + 10.0).contains(&quic), "{preset} quic {quic}");
        for tls in 0..=2u8 {
            let want = rtt * f64::from(1 + tls);
            let tcp = establishment(preset, Measurement::TcpBulk, tls);
            assert!((want..want + 10.0).contains(&tcp), "{preset} tcp tls={tls}: {tcp}, want ≈{want}");
        }
    }
}

#[test]
fn no_data_before_handshake() {
    for m in [Measurement::QuicBulk, Measurement::TcpBulk, Measurement::H3Web, Measurement::H1Web] {
        for pep in [false, true] {
            let out = run(&scenario(Preset::Geo, 0.1), m, pep, 3, true);
            let recs = records(&out);
            let mut established: HashMap<u64, u64> = HashMap::new();
            for r in events(&recs, "handshake_complete") {
                established.insert(r.fields["conn"].as_u64().unwrap(), r.time_us);
            }
            for r in events(&recs, "packet_sent") {
                let conn = r.fields["conn"].as_u64().unwrap();
                let at = established.get(&conn).copied();
                assert!(
                    at.is_some_and(|t| t <= r.time_us),
                    "{m} pep={pep}: conn {conn} sent data at {} before handshake ({at:?})",
                    r.time_us
                );
            }
        }
    }
}

#[test]
fn bytes_in_flight_respect_cwnd_without_loss() {
    for m in [Measurement::QuicBulk, Measurement::TcpBulk] {
        for pep in [false, true] {
            let s = scenario(Preset::Geo, 0.0);
            let out = run(&s, m, pep, 1, true);
            let recs = records(&out);
            // initial windows from the connection table: the SAT leg (1 -> 2)
            // under a PEP starts at IW100, everything else at IW10
            let mut cwnd: HashMap<u64, u64> = HashMap::new();
            for (c, sv, from, to) in connections(&recs) {
                let iw = if pep && from == 1 && to == 2 { 100 } else { 10 };
                cwnd.insert(c, iw * 1200);
                cwnd.insert(sv, iw * 1200);
            }
            for r in &recs {
                let conn = r.fields["conn"].as_u64();
                match r.event.as_str() {
                    "cwnd_update" => {
                        cwnd.insert(conn.unwrap(), r.fields["cwnd"].as_u64().unwrap());
                    }
                    "packet_sent" => {
                        let conn = conn.unwrap();
                        let in_flight = r.fields["in_flight"].as_u64().unwrap();
                        let limit = cwnd[&conn] + 1240;
                        assert!(in_flight <= limit, "{m} pep={pep} conn {conn}: {in_flight} > {limit}");
                    }
                    _ => {}
                }
            }
        }
    }
}

#[test]
fn reliable_delivery_under_loss() {
    let s = scenario(Preset::Geo, 1.0);
    for m in [Measurement::H3Web, Measurement::H1Web] {
        for pep in [false, true] {
            for seed in 1..=4 {
                let out = run(&s, m, pep, seed, false);
                let w = web(&out);
                assert_eq!(w.objects.len(), s.manifest.len(), "{m} pep={pep} seed={seed}");
            }
        }
    }
    for pep in [false, true] {
        let out = run(&s, Measurement::QuicBulk, pep, 7, true);
        let b = bulk(&out);
        assert!(b.total_bytes > 0);
        let recs = records(&out);
        assert!(events(&recs, "packet_lost").count() > 0, "1% loss should lose something");
    }
}

#[test]
fn server_establishes_one_rtt_after_hello() {
    let out = run(&scenario(Preset::Geo, 0.0), Measurement::QuicBulk, false, 1, true);
    let recs = records(&out);
    let hs: Vec<_> = events(&recs, "handshake_complete").collect();
    let server = hs.iter().find(|r| r.fields["role"] == "server").unwrap();
    let elapsed = server.fields["elapsed_us"].as_u64().unwrap();
    assert!((580_000..590_000).contains(&elapsed), "{elapsed}");
}
