mod common;

use bulkcast::engine::workload::{
    generate_workload, workload_digest, workload_from_json, workload_to_json, ArrivalProcess, VolumeDistribution,
    WorkloadSpec,
};
use bulkcast::metrics::{nearest_rank, MetricsReport, ReceiverRecord, RequestRecord, TimelineRecord};
use bulkcast::SimConfig;
use proptest::prelude::*;
use rand::Rng;
use tempfile::TempDir;

use common::{ans, geant, rng};

fn random_report(seed: u64) -> MetricsReport {
    let mut r = rng(seed);
    let mut report = MetricsReport::default();
    let requests = r.random_range(0..6);
    for id in 0..requests {
        let arrival = r.random_range(0..50u64);
        let parts = r.random_range(1..4);
        for p in 0..parts {
            let size = r.random_range(1..4);
            let done = arrival + r.random_range(1..100);
            for k in 0..size {
                report.receivers.push(ReceiverRecord {
                    request_id: id,
                    receiver: format!("n{}", p * 4 + k),
                    arrival_slot: arrival,
                    completion_slot: done,
                    partition_id: p,
                    partition_size: size,
                    rank: 0,
                });
            }
        }
        let volume = r.random_range(0.1..100.0);
        report.requests.push(RequestRecord {
            request_id: id,
            volume,
            n_partitions: parts,
            bandwidth: volume * r.random_range(1..20) as f64,
            budget_weight_sum: r.random_range(0.0..10.0),
            single_tree_weight: r.random_range(0.0..10.0),
        });
    }
    for slot in 0..r.random_range(0..30) {
        report.timeline.push(TimelineRecord {
            slot,
            delivered_volume: r.random_range(0.0..5.0),
            active_partitions: r.random_range(0..5),
            max_group_entries: r.random_range(0..4),
        });
    }
    report.assign_ranks(|rec| rec.receiver[1..].parse().unwrap());
    report
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn csv_parse_back_gives_identical_summary(seed in any::<u64>()) {
        let report = random_report(seed);
        let dir = TempDir::new().unwrap();
        report.write_csv(dir.path()).unwrap();
        let back = MetricsReport::read_csv(dir.path()).unwrap();
        prop_assert_eq!(back.summarize(), report.summarize());
        prop_assert_eq!(&back, &report);

        report.write_json(dir.path()).unwrap();
        prop_assert_eq!(MetricsReport::read_json(dir.path()).unwrap(), report);
    }

    #[test]
    fn ranks_follow_completion_time(seed in any::<u64>()) {
        let report = random_report(seed);
        for id in report.requests.iter().map(|q| q.request_id) {
            let mut rows: Vec<&ReceiverRecord> = report.receivers.iter().filter(|r| r.request_id == id).collect();
            rows.sort_by_key(|r| r.rank);
            for (k, w) in rows.windows(2).enumerate() {
                prop_assert_eq!(w[0].rank, k + 1);
                prop_assert!(w[0].completion_time() <= w[1].completion_time());
            }
        }
    }

    #[test]
    fn nearest_rank_picks_a_sample_at_or_above_the_fraction(mut data in prop::collection::vec(0.0f64..100.0, 1..50), p in 0.1f64..100.0) {
        data.sort_by(f64::total_cmp);
        let v = nearest_rank(&data, p).unwrap();
        let below = data.iter().filter(|&&x| x < v).count() as f64;
        let at_or_below = data.iter().filter(|&&x| x <= v).count() as f64;
        let n = data.len() as f64;
        prop_assert!(below < p / 100.0 * n + 1e-9);
        prop_assert!(at_or_below >= p / 100.0 * n - 1e-9);
    }
}

#[test]
fn summary_of_a_run_matches_hand_computation() {
    let topo = ans();
    let spec = WorkloadSpec { transfers: 30, receivers: 4, ..Default::default() };
    let requests = generate_workload(&spec, &topo).unwrap();
    let report = bulkcast::engine::run(&topo, SimConfig::default(), requests).unwrap();
    let s = report.summarize();

    let mut times: Vec<f64> = report.receivers.iter().map(|r| r.completion_time() as f64).collect();
    times.sort_by(f64::total_cmp);
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    assert_eq!(s.receivers, 120);
    assert_eq!(s.requests, 30);
    assert!((s.mean_completion.unwrap() - mean).abs() < 1e-9);
    let median_ix = (0.5 * times.len() as f64).ceil() as usize - 1;
    assert_eq!(s.median_completion, Some(times[median_ix]));
    let p95_ix = (0.95 * times.len() as f64).ceil() as usize - 1;
    assert_eq!(s.p95_completion, Some(times[p95_ix]));
    let bandwidth: f64 = report.requests.iter().map(|q| q.bandwidth).sum();
    assert!((s.total_bandwidth - bandwidth).abs() < 1e-9 * bandwidth);
    assert_eq!(s.slots, report.timeline.len());
    assert_eq!(s.rank_mean_completion.len(), 4);
    assert_eq!(s.max_group_entries, report.timeline.iter().map(|t| t.max_group_entries).max().unwrap());
}

#[test]
fn exponential_sample_mean_is_close() {
    let topo = geant();
    let spec = WorkloadSpec { transfers: 10_000, seed: 42, ..Default::default() };
    let requests = generate_workload(&spec, &topo).unwrap();
    let mean = requests.iter().map(|q| q.volume).sum::<f64>() / requests.len() as f64;
    assert!((mean - 20.0).abs() < 0.05 * 20.0, "sample mean {mean}");

    // Poisson arrivals at rate 1: about one transfer per slot
    let span = requests.last().unwrap().arrival as f64;
    assert!((span / 10_000.0 - 1.0).abs() < 0.05, "span {span}");
}

#[test]
fn pareto_volumes_scale_with_delta() {
    let topo = geant();
    for delta in [0.5, 1.0, 2.0] {
        let spec = WorkloadSpec {
            volume: VolumeDistribution::pareto_with_mean(20.0, 2.0, 2000.0).unwrap(),
            transfers: 2000,
            seed: 9,
            delta,
            ..Default::default()
        };
        for q in generate_workload(&spec, &topo).unwrap() {
            assert!(q.volume >= 2.0 * delta && q.volume <= 2000.0 * delta, "{}", q.volume);
        }
    }
}

#[test]
fn workload_files_round_trip_with_stable_digest() {
    let topo = geant();
    let spec = WorkloadSpec { arrivals: ArrivalProcess::Batch, receivers: 5, transfers: 50, seed: 4, ..Default::default() };
    let requests = generate_workload(&spec, &topo).unwrap();
    let text = workload_to_json(&requests, &topo);
    let back = workload_from_json(&text, &topo).unwrap();
    assert_eq!(back, requests);
    assert_eq!(workload_digest(&back, &topo), workload_digest(&requests, &topo));
    assert_eq!(workload_to_json(&back, &topo), text);

    let other = generate_workload(&WorkloadSpec { seed: 5, ..spec }, &topo).unwrap();
    assert_ne!(workload_digest(&other, &topo), workload_digest(&requests, &topo));
}
