//! The acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with its measured values. Runtime budgets are asserted where the
//! criterion names one.

use relaycap::capacity::{
    achievable_rate, cut_conditional_entropy, cutset_bound, expected_rank, linear_capacity,
    min_cut_entropy, DistSearchConfig, InputDist, RankMethod, SearchMode,
};
use relaycap::cut::{enumerate_cuts, Cut};
use relaycap::field::Field;
use relaycap::info::Pmf;
use relaycap::network::{ChannelTable, Mode, Network, NodeIo, StateModel};
use relaycap::rng::Stream;
use relaycap::sim::{run_blocks, DecoderKind, SimConfig};
use relaycap::unfold::verify_sandwich;
use std::time::Instant;

fn diamond_bernoulli_half() -> Network {
    let f = Field::prime(2).unwrap();
    Network::erasure(4, vec![(1, 2), (1, 3), (2, 4), (3, 4)], [4], &[0.5; 4], f).unwrap()
}

fn fig1_half() -> Network {
    let f = Field::prime(2).unwrap();
    Network::erasure(4, vec![(1, 3), (2, 3), (2, 4), (3, 4)], [4], &[0.5; 4], f).unwrap()
}

/// Criterion 1: the Fig.-1 transfer matrix has layout [[S13, S23], [0, S24]]
/// for the cut {1,2}, and its expected rank under Bernoulli(1/2)
/// coefficients is exactly 9/8. Runtime under one second.
#[test]
fn acceptance_01_transfer_matrix_golden() {
    let start = Instant::now();
    let net = fig1_half();
    let cut = Cut::new(&net, 4, [1, 2]).unwrap();

    // Symbolic layout check: give each edge a distinguishable state value
    // over GF(5) on the same topology.
    let f5 = Field::prime(5).unwrap();
    let probe = Network::erasure(4, net.edges().to_vec(), [4], &[0.0; 4], f5).unwrap();
    let probe_cut = Cut::new(&probe, 4, [1, 2]).unwrap();
    // Edge order: (1,3), (2,3), (2,4), (3,4) -> states 1, 2, 3, 4.
    let m = probe_cut.transfer_matrix(&probe, &[1, 2, 3, 4]).unwrap();
    let layout =
        [m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)];
    assert_eq!(layout, [1, 2, 0, 3], "rows (Y3, Y4) x cols (X1, X2) with S34 absent");

    let er = expected_rank(&net, &cut, RankMethod::Exact).unwrap();
    assert_eq!(er.value, 1.125, "expected rank must be exactly 9/8");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 1: PASS - layout [[S13,S23],[0,S24]], E[rank] = 1.125, {elapsed:?}");
}

/// Random linear network generator shared by criteria 2 and 4: destination
/// is the last node and always reachable, at most 7 edges.
fn random_linear_net(rng: &mut Stream, q: u64) -> Network {
    let field = Field::prime(q).unwrap();
    loop {
        let n = 3 + rng.next_below(3) as usize;
        let mut edges = Vec::new();
        for u in 1..=n {
            for v in 1..=n {
                if u != v && rng.next_f64() < 0.35 {
                    edges.push((u, v));
                }
            }
        }
        edges.truncate(7);
        let pmfs: Vec<Pmf> = edges
            .iter()
            .map(|_| {
                let mut probs: Vec<f64> = (0..q).map(|_| rng.next_f64()).collect();
                let total: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|p| *p /= total);
                Pmf::new(probs).unwrap()
            })
            .collect();
        let net = Network::new(
            n,
            edges,
            [n],
            Mode::Linear { field },
            StateModel::PerEdgeIid(pmfs),
        );
        if net.validate().is_empty() {
            return net;
        }
    }
}

/// Criterion 2: on 50 random linear networks (|V| <= 5, q in {2, 3}), the
/// cut conditional entropy at uniform product inputs equals the expected
/// rank times log2 q on every cut, within 1e-9. Runtime under 5 minutes.
#[test]
fn acceptance_02_rank_entropy_crosscheck() {
    let start = Instant::now();
    let mut rng = Stream::derive(0xACC2, &[0]);
    let mut cuts_checked = 0usize;
    for i in 0..50 {
        let q = if i % 2 == 0 { 2 } else { 3 };
        let net = random_linear_net(&mut rng, q);
        let log2q = (q as f64).log2();
        let uniform = InputDist::uniform(&net);
        for &d in net.destinations().clone().iter() {
            for cut in enumerate_cuts(&net, d).unwrap() {
                let h = cut_conditional_entropy(&net, &cut, &uniform).unwrap();
                let er = expected_rank(&net, &cut, RankMethod::Exact).unwrap();
                let expect = er.value * log2q;
                assert!(
                    (h - expect).abs() < 1e-9,
                    "network {i} cut {:?}: H = {h}, E[rank] log2 q = {expect}",
                    cut.members()
                );
                cuts_checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!("criterion 2: PASS - {cuts_checked} cuts matched within 1e-9, {elapsed:?}");
}

/// Criterion 3: erasure specialization. A single link has capacity
/// (1 - eps) log2 q within 1e-12, and a two-hop chain the minimum of its
/// two links.
#[test]
fn acceptance_03_erasure_specialization() {
    for (q, m, eps) in [(2u64, 1u32, 0.25), (2, 1, 0.6), (3, 1, 0.3), (2, 2, 0.25)] {
        let field = Field::new(q, m, None).unwrap();
        let net = Network::erasure(2, vec![(1, 2)], [2], &[eps], field).unwrap();
        let c = linear_capacity(&net, RankMethod::Exact, 1).unwrap().value_bits;
        let expect = (1.0 - eps) * (field.order() as f64).log2();
        assert!(
            (c - expect).abs() < 1e-12,
            "single link GF({}) eps {eps}: {c} vs {expect}",
            field.order()
        );
    }
    let f = Field::prime(2).unwrap();
    for (e1, e2) in [(0.25, 0.1), (0.1, 0.4), (0.5, 0.5)] {
        let net = Network::erasure(3, vec![(1, 2), (2, 3)], [3], &[e1, e2], f).unwrap();
        let c = linear_capacity(&net, RankMethod::Exact, 1).unwrap().value_bits;
        let expect = (1.0 - e1).min(1.0 - e2);
        assert!((c - expect).abs() < 1e-12, "chain ({e1}, {e2}): {c} vs {expect}");
    }
    println!("criterion 3: PASS - single-link and chain capacities exact within 1e-12");
}

/// Random binary general-deterministic network: random total channel
/// tables, one binary-state edge, the rest state-free.
fn random_general_net(rng: &mut Stream) -> Network {
    loop {
        let n = 3 + rng.next_below(2) as usize;
        let mut edges = Vec::new();
        for u in 1..=n {
            for v in 1..=n {
                if u != v && rng.next_f64() < 0.4 {
                    edges.push((u, v));
                }
            }
        }
        edges.truncate(6);
        if edges.is_empty() {
            continue;
        }
        let state_edge = rng.next_below(edges.len() as u64) as usize;
        let pmfs: Vec<Pmf> = (0..edges.len())
            .map(|e| {
                if e == state_edge {
                    let w = 0.2 + 0.6 * rng.next_f64();
                    Pmf::new(vec![w, 1.0 - w]).unwrap()
                } else {
                    Pmf::point(1, 0)
                }
            })
            .collect();
        let io: Vec<NodeIo> =
            (1..=n).map(|_| NodeIo { input_size: 2, output_size: 2 }).collect();
        let probe = Network::new(
            n,
            edges.clone(),
            [n],
            Mode::General { io: io.clone(), tables: vec![None; n] },
            StateModel::PerEdgeIid(pmfs.clone()),
        );
        let mut tables: Vec<Option<ChannelTable>> = vec![None; n];
        for v in 1..=n {
            let in_edges = probe.in_edge_indices(v);
            if in_edges.is_empty() {
                continue;
            }
            let input_sizes: Vec<usize> = in_edges.iter().map(|_| 2usize).collect();
            let state_sizes: Vec<usize> =
                in_edges.iter().map(|&e| probe.edge_state_size(e)).collect();
            let cells: usize =
                input_sizes.iter().chain(state_sizes.iter()).product();
            let map: Vec<u32> = (0..cells).map(|_| rng.next_below(2) as u32).collect();
            tables[v - 1] = Some(ChannelTable::new(input_sizes, state_sizes, 2, map).unwrap());
        }
        let net = Network::new(
            n,
            edges,
            [n],
            Mode::General { io, tables },
            StateModel::PerEdgeIid(pmfs),
        );
        if net.validate().is_empty() {
            return net;
        }
    }
}

/// Criterion 4: on 20 random binary general networks the cut-set bound at
/// grid 4 never falls below the achievable rate at grid 4; on linear
/// instances both equal the expected-rank capacity within 1e-6.
#[test]
fn acceptance_04_bound_ordering() {
    let mut rng = Stream::derive(0xACC4, &[0]);
    let product = DistSearchConfig { mode: SearchMode::Product, grid: 4, ascent_rounds: 0 };
    let joint = DistSearchConfig { mode: SearchMode::Joint, grid: 4, ascent_rounds: 0 };
    for i in 0..20 {
        let net = random_general_net(&mut rng);
        let rate = achievable_rate(&net, product, 1).unwrap().value_bits;
        let bound = cutset_bound(&net, joint, 1).unwrap().value_bits;
        assert!(
            bound >= rate - 1e-12,
            "network {i}: cutset {bound} < rate {rate}"
        );
    }
    let mut rng = Stream::derive(0xACC4, &[1]);
    for i in 0..5 {
        let net = random_linear_net(&mut rng, 2);
        let capacity = linear_capacity(&net, RankMethod::Exact, 1).unwrap().value_bits;
        let rate = achievable_rate(&net, product, 1).unwrap().value_bits;
        let bound = cutset_bound(&net, joint, 1).unwrap().value_bits;
        assert!(
            (rate - capacity).abs() < 1e-6,
            "linear {i}: rate {rate} vs capacity {capacity}"
        );
        assert!(
            (bound - capacity).abs() < 1e-6,
            "linear {i}: bound {bound} vs capacity {capacity}"
        );
    }
    println!("criterion 4: PASS - ordering on 20 general nets, tightness on 5 linear nets");
}

/// Criterion 5: Monte Carlo expected rank at 10^4 samples covers the exact
/// value within its 95% half-width in at least 93 of 100 seeded runs.
#[test]
fn acceptance_05_monte_carlo_calibration() {
    let net = fig1_half();
    let cut = Cut::new(&net, 4, [1, 2]).unwrap();
    let exact = expected_rank(&net, &cut, RankMethod::Exact).unwrap().value;
    let mut covered = 0;
    for seed in 0..100u64 {
        let mc =
            expected_rank(&net, &cut, RankMethod::MonteCarlo { samples: 10_000, seed }).unwrap();
        if (mc.value - exact).abs() <= mc.half_width {
            covered += 1;
        }
    }
    println!("criterion 5: {} - covered {covered}/100", if covered >= 93 { "PASS" } else { "FAIL" });
    assert!(covered >= 93, "covered only {covered}/100");
}

fn one_sided_not_increasing(err_lo_n: f64, err_hi_n: f64, trials: usize) -> bool {
    // One-sided two-proportion comparison at 95%: reject only when the
    // error at the larger block length is significantly above the smaller.
    let n = trials as f64;
    let se = (err_lo_n * (1.0 - err_lo_n) / n + err_hi_n * (1.0 - err_hi_n) / n).sqrt();
    err_hi_n <= err_lo_n + 1.645 * se
}

/// Criterion 6: on the Bernoulli(1/2) diamond with the exact linear decoder
/// at R = 0.8 C, the block error is non-increasing over n in {4, 8, 16, 32}
/// and falls below 0.1 at n = 32; at R = 1.2 C it stays above 0.5. Runtime
/// under 10 minutes.
///
/// The 0.1 threshold at n = 32 is not reachable on this channel: when the
/// realized min-cut rank over 32 uses (the smaller of two Binomial(32, 3/4)
/// draws) is below log2 M = 19.2, distinct messages are forced onto one
/// image and any decoder errs. Summing that forced-ambiguity probability
/// over the rank distribution already gives about 0.17, matching the
/// simulator; the threshold would need n of roughly 48. The check runs as
/// stated and the failure is reported honestly.
#[test]
fn acceptance_06_simulator_achievability_trend() {
    let start = Instant::now();
    let net = diamond_bernoulli_half();
    let capacity = linear_capacity(&net, RankMethod::Exact, 1).unwrap().value_bits;
    assert!((capacity - 0.75).abs() < 1e-12);
    let trials = 500;
    let lengths = [4usize, 8, 16, 32];

    let mut low_errors = Vec::new();
    for &n in &lengths {
        let cfg = SimConfig::new(n, 0.8 * capacity, trials, 42);
        let report = run_blocks(&net, &cfg, 1).unwrap();
        println!(
            "criterion 6 low-rate point: n={n} M={} err={:.4}",
            report.message_count, report.error_rate
        );
        low_errors.push(report.error_rate);
    }
    let mut high_ok = true;
    for &n in &lengths {
        let cfg = SimConfig::new(n, 1.2 * capacity, trials, 42);
        let report = run_blocks(&net, &cfg, 1).unwrap();
        println!(
            "criterion 6 high-rate point: n={n} M={} err={:.4}",
            report.message_count, report.error_rate
        );
        high_ok &= report.error_rate > 0.5;
    }
    let monotone = low_errors
        .windows(2)
        .all(|w| one_sided_not_increasing(w[0], w[1], trials));
    let below = low_errors[3] < 0.1;
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    let verdict = if monotone && below && high_ok { "PASS" } else { "FAIL" };
    println!(
        "criterion 6: {verdict} - errors {low_errors:?}, monotone {monotone}, \
         err(32) < 0.1: {below}, high-rate above 0.5: {high_ok}, {elapsed:?}"
    );
    assert!(monotone, "low-rate errors increased: {low_errors:?}");
    assert!(high_ok, "high-rate error dipped to 0.5 or below");
    assert!(
        below,
        "err(n=32) = {:.4} is not below 0.1: at R = 0.8 C = 0.6 the message count is \
         2^19.2 while the realized min-cut rank is min of two Binomial(32, 0.75) draws; \
         the probability that it falls below 19.2 bits (forcing ambiguity for any \
         decoder) already sums to about 0.17. The stated threshold needs n around 48.",
        low_errors[3]
    );
}

/// Criterion 7: the unfolding sandwich on the cyclic four-node network at
/// uniform inputs, T in 1..=5: both rate relations hold, and the normalized
/// steady value of the min cut is constant in T within 1e-9.
#[test]
fn acceptance_07_unfolding_sandwich() {
    let f = Field::prime(2).unwrap();
    let edges = vec![(1, 2), (1, 4), (2, 3), (3, 2), (2, 4), (3, 4)];
    let eps = vec![0.8, 0.95, 0.1, 0.1, 0.1, 0.1];
    let net = Network::erasure(4, edges, [4], &eps, f).unwrap();
    let inputs: Vec<Pmf> = (1..=4).map(|_| Pmf::uniform(2)).collect();
    let base_min = {
        let uniform = InputDist::Product(inputs.clone());
        min_cut_entropy(&net, &uniform).unwrap()
    };
    for t in 1..=5usize {
        let report = verify_sandwich(&net, t, 1, &inputs, 2000, 11, 1).unwrap();
        assert!(
            report.lower_ok,
            "T = {t}: lower relation violated by {:?}",
            report.lower_violations
        );
        assert!(report.upper_ok, "T = {t}: upper margin {}", report.upper_margin);
        assert!(
            (report.argmin_steady_normalized - base_min).abs() < 1e-9,
            "T = {t}: normalized steady min-cut {} drifted from {base_min}",
            report.argmin_steady_normalized
        );
        println!(
            "criterion 7 point: T={t} cuts={} lower_coeff={} steady_norm={:.9}",
            report.evaluated.len(),
            report.lower_coeff,
            report.argmin_steady_normalized
        );
    }
    println!("criterion 7: PASS - sandwich and steady-cut constancy over T = 1..=5");
}

/// Criterion 8: byte-identical machine output for repeated runs with the
/// same seed, including across thread counts.
#[test]
fn acceptance_08_determinism() {
    let bin = env!("CARGO_BIN_EXE_relaycap");
    let nets = concat!(env!("CARGO_MANIFEST_DIR"), "/../../nets");
    let run = |args: &[&str]| {
        let out = std::process::Command::new(bin)
            .args(args)
            .output()
            .expect("binary runs");
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };
    let diamond = format!("{nets}/diamond.net");
    let cyclic = format!("{nets}/cyclic4.net");
    let general = format!("{nets}/diamond-general.net");
    let cases: Vec<Vec<&str>> = vec![
        vec!["capacity", "--net", &diamond, "--method", "mc", "--samples", "2000",
             "--seed", "9", "--format", "machine", "--verbose"],
        vec!["rate", "--net", &diamond, "--grid", "4", "--format", "machine"],
        vec!["cutset", "--net", &diamond, "--grid", "2", "--format", "machine"],
        vec!["cuts", "--net", &diamond, "--format", "machine"],
        vec!["layers", "--net", &diamond, "--format", "machine"],
        vec!["unfold", "--net", &cyclic, "--T", "3", "--format", "machine"],
        vec!["verify-unfold", "--net", &cyclic, "--T", "3", "--budget", "300",
             "--seed", "11", "--format", "machine", "--verbose"],
        vec!["simulate", "--net", &diamond, "--n", "16", "--R", "0.5", "--trials", "100",
             "--seed", "7", "--format", "machine"],
        vec!["simulate", "--net", &general, "--n", "64", "--R", "0.05", "--trials", "50",
             "--seed", "3", "--decoder", "typicality", "--eps", "0.2", "--format", "machine"],
    ];
    for case in &cases {
        let mut with_one = case.clone();
        with_one.extend_from_slice(&["--threads", "1"]);
        let mut with_four = case.clone();
        with_four.extend_from_slice(&["--threads", "4"]);
        let a = run(&with_one);
        let b = run(&with_one);
        let c = run(&with_four);
        assert_eq!(a, b, "rerun differs for {case:?}");
        assert_eq!(a, c, "thread count changes output for {case:?}");
        assert!(!a.is_empty(), "no output for {case:?}");
    }
    println!("criterion 8: PASS - {} commands byte-identical across reruns and threads", cases.len());
}

/// The general-mode diamond used for the typicality criterion: state-free
/// binary channels, relay 2 forwarding, relay 3 silent.
fn general_diamond() -> Network {
    let io = vec![
        NodeIo { input_size: 2, output_size: 1 },
        NodeIo { input_size: 2, output_size: 2 },
        NodeIo { input_size: 1, output_size: 2 },
        NodeIo { input_size: 1, output_size: 2 },
    ];
    let forward = ChannelTable::new(vec![2], vec![1], 2, vec![0, 1]).unwrap();
    let dest = ChannelTable::new(vec![2, 1], vec![1, 1], 2, vec![0, 1]).unwrap();
    let edges = vec![(1, 2), (1, 3), (2, 4), (3, 4)];
    let pmfs = edges.iter().map(|_| Pmf::point(1, 0)).collect();
    Network::new(
        4,
        edges,
        [4],
        Mode::General {
            io,
            tables: vec![None, Some(forward.clone()), Some(forward), Some(dest)],
        },
        StateModel::PerEdgeIid(pmfs),
    )
}

/// Criterion 9: typicality decoding on the general diamond at n = 200,
/// eps = 0.2 and a rate far below the achievable value errs less than 20%
/// of the time over 200 trials; eps = 0 makes the error go to one.
#[test]
fn acceptance_09_typicality_decoder_sanity() {
    let net = general_diamond();
    assert!(net.validate().is_empty());
    // Achievable value at grid 4 is 1 bit; R = 0.01 is far below.
    let rate = achievable_rate(
        &net,
        DistSearchConfig { mode: SearchMode::Product, grid: 4, ascent_rounds: 0 },
        1,
    )
    .unwrap()
    .value_bits;
    assert!((rate - 1.0).abs() < 1e-9, "achievable value {rate}");

    let mut cfg = SimConfig::new(200, 0.01, 200, 5);
    cfg.decoder = DecoderKind::JointTypicality { eps: 0.2 };
    let report = run_blocks(&net, &cfg, 1).unwrap();
    assert_eq!(report.message_count, 4);

    let mut strict = cfg.clone();
    strict.decoder = DecoderKind::JointTypicality { eps: 0.0 };
    let strict_report = run_blocks(&net, &strict, 1).unwrap();

    let ok = report.error_rate < 0.2 && strict_report.error_rate >= 0.9;
    println!(
        "criterion 9: {} - err(eps=0.2) = {:.4}, err(eps=0) = {:.4}",
        if ok { "PASS" } else { "FAIL" },
        report.error_rate,
        strict_report.error_rate
    );
    assert!(report.error_rate < 0.2, "error {}", report.error_rate);
    assert!(strict_report.error_rate >= 0.9, "strict error {}", strict_report.error_rate);
}
