//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured values. Campaigns are shared between criteria through
//! `OnceLock` and run on fixed seeds, so the whole suite is reproducible.
//!
//! Criteria 1-4 are quantitative (mixing-time constant and scaling
//! exponents); criteria 5-8 are zero-tolerance pathwise and geometric
//! checks; criteria 9-10 compare the engines and the lower-bound growth.

use std::sync::{Arc, OnceLock};

use lifshitz_core::coupling::{
    random_censoring_campaign, random_order_campaign, slice_decoupling_check, RandomCampaign,
    Verdict,
};
use lifshitz_core::dynamics::{
    run_to_absorption, DynamicsState, EngineKind, NoObserver, RejectionFreeEngine, SpinField,
};
use lifshitz_core::experiments::{
    estimate_tmix, fit_scaling, linear_lower_sanity, run_campaign, CampaignConfig, FitModel,
    HittingRecord, Preset,
};
use lifshitz_core::geometry::{
    cylinder, eta_slab, hypercube, shrunk_set, BoundaryCondition, GeometryParams,
};
use lifshitz_core::randomness::EventStream;
use lifshitz_core::stats;

const BASE_SEED: u64 = 20260808;

fn campaign(dim: usize, ls: &[u32], replicas: u32) -> Vec<HittingRecord> {
    let mut cfg = CampaignConfig::new(
        &format!("acceptance-d{dim}"),
        dim,
        ls.to_vec(),
        Preset::HypercubePlus,
    );
    cfg.replicas = replicas;
    cfg.seed = BASE_SEED;
    cfg.engine = EngineKind::RejectionFree;
    run_campaign(&cfg).expect("campaign runs")
}

fn d2_records() -> &'static Vec<HittingRecord> {
    static RECORDS: OnceLock<Vec<HittingRecord>> = OnceLock::new();
    RECORDS.get_or_init(|| campaign(2, &[16, 32, 64, 128], 300))
}

fn d3_records() -> &'static Vec<HittingRecord> {
    static RECORDS: OnceLock<Vec<HittingRecord>> = OnceLock::new();
    RECORDS.get_or_init(|| campaign(3, &[8, 12, 16, 24, 32], 100))
}

fn d4_records() -> &'static Vec<HittingRecord> {
    static RECORDS: OnceLock<Vec<HittingRecord>> = OnceLock::new();
    RECORDS.get_or_init(|| campaign(4, &[4, 6, 8, 10, 12], 50))
}

fn tmix_at(records: &[HittingRecord], l: u32) -> f64 {
    let group: Vec<HittingRecord> = records.iter().filter(|r| r.l == l).cloned().collect();
    estimate_tmix(&group).expect("enough samples").tmix
}

fn tmix_points(records: &[HittingRecord], ls: &[u32]) -> Vec<(f64, f64)> {
    ls.iter()
        .map(|&l| (l as f64, tmix_at(records, l)))
        .collect()
}

#[test]
fn criterion_01_d2_lifshitz_constant() {
    let records = d2_records();
    let ratios: Vec<(u32, f64)> = [32u32, 64, 128]
        .iter()
        .map(|&l| (l, tmix_at(records, l) / (l as f64 * l as f64)))
        .collect();
    let at_128 = ratios.last().unwrap().1;
    assert!(
        (0.35..=0.70).contains(&at_128),
        "Tmix/L^2 at L=128 is {at_128}, outside [0.35, 0.70]"
    );
    let deviations: Vec<f64> = ratios.iter().map(|&(_, r)| (r - 0.5).abs()).collect();
    assert!(
        deviations.windows(2).all(|w| w[1] < w[0]),
        "|Tmix/L^2 - 1/2| not decreasing: {deviations:?}"
    );
    println!(
        "criterion 01 PASS: d=2 Tmix/L^2 = {:.4}, {:.4}, {:.4} at L = 32, 64, 128 (limit 1/2)",
        ratios[0].1, ratios[1].1, ratios[2].1
    );
}

#[test]
fn criterion_02_d2_exponent() {
    let points = tmix_points(d2_records(), &[16, 32, 64, 128]);
    let fit = fit_scaling(&points, FitModel::PurePower).expect("fit");
    assert!(
        (1.85..=2.15).contains(&fit.exponent),
        "d=2 exponent {} outside [1.85, 2.15]",
        fit.exponent
    );
    println!(
        "criterion 02 PASS: d=2 exponent {:.3} (ci {:.3}..{:.3})",
        fit.exponent, fit.exponent_ci.0, fit.exponent_ci.1
    );
}

#[test]
fn criterion_03_d3_exponent() {
    let points = tmix_points(d3_records(), &[8, 12, 16, 24, 32]);
    let fit = fit_scaling(&points, FitModel::PurePower).expect("fit");
    assert!(
        (1.8..=2.6).contains(&fit.exponent),
        "d=3 exponent {} outside [1.8, 2.6]",
        fit.exponent
    );
    println!(
        "criterion 03 PASS: d=3 exponent {:.3} (ci {:.3}..{:.3})",
        fit.exponent, fit.exponent_ci.0, fit.exponent_ci.1
    );
}

#[test]
fn criterion_04_d4_exponent_and_theorem_bound() {
    let records = d4_records();
    let points = tmix_points(records, &[4, 6, 8, 10, 12]);
    let fit = fit_scaling(&points, FitModel::PurePower).expect("fit");
    assert!(
        (1.7..=2.8).contains(&fit.exponent),
        "d=4 exponent {} outside [1.7, 2.8]",
        fit.exponent
    );
    // every sample must sit below L^2 (ln L)^10, slack at these sizes
    let mut worst_margin = f64::INFINITY;
    for r in records {
        let t = r
            .t_plus
            .unwrap_or_else(|| panic!("replica {}/{} timed out", r.l, r.replica));
        let bound = (r.l as f64).powi(2) * (r.l as f64).ln().powi(10);
        assert!(
            t < bound,
            "T+ = {t} at L = {} exceeds L^2 (ln L)^10 = {bound}",
            r.l
        );
        worst_margin = worst_margin.min(bound / t);
    }
    println!(
        "criterion 04 PASS: d=4 exponent {:.3}; all {} samples below L^2(ln L)^10 (min slack {:.1}x)",
        fit.exponent,
        records.len(),
        worst_margin
    );
}

#[test]
fn criterion_05_monotone_coupling_zero_violations() {
    let mut campaign = RandomCampaign::new(1000, BASE_SEED ^ 0x05);
    campaign.dims = vec![2, 3, 4];
    campaign.l_min = 2;
    campaign.l_max = 8;
    match random_order_campaign(&campaign).expect("campaign runs") {
        Verdict::Clean(totals) => {
            assert_eq!(totals.runs, 1000);
            println!(
                "criterion 05 PASS: 1000 ordered coupled runs, {} events, {} order checks, 0 violations",
                totals.events, totals.order_checks
            );
        }
        Verdict::Violation(v) => panic!("pathwise order violation: {v:?}"),
    }
}

#[test]
fn criterion_06_censoring_domination_zero_violations() {
    let mut campaign = RandomCampaign::new(200, BASE_SEED ^ 0x06);
    campaign.dims = vec![2, 3, 4];
    campaign.l_min = 2;
    campaign.l_max = 8;
    match random_censoring_campaign(&campaign).expect("campaign runs") {
        Verdict::Clean(totals) => {
            assert_eq!(totals.runs, 200);
            println!(
                "criterion 06 PASS: 200 censoring runs, {} events, {} cancellations, dominated throughout",
                totals.events, totals.cancellations
            );
        }
        Verdict::Violation(v) => panic!("censoring domination violation: {v:?}"),
    }
}

#[test]
fn criterion_07_slice_decoupling_bit_exact() {
    let mut total_events = 0u64;
    let mut total_flips = 0u64;
    for l in [3u32, 4, 6] {
        let gp = GeometryParams::new(l, 4);
        for i in [0u32, 1, 2, 4] {
            let sys = eta_slab(&gp, i).expect("slab builds");
            match slice_decoupling_check(&sys, BASE_SEED ^ ((l as u64) << 8 | i as u64), 10_000)
                .expect("check runs")
            {
                lifshitz_core::coupling::SliceVerdict::Clean(report) => {
                    total_events += report.events;
                    total_flips += report.flips;
                }
                lifshitz_core::coupling::SliceVerdict::Mismatch(m) => {
                    panic!("slice mismatch at d=4, L={l}, i={i}: {m:?}")
                }
            }
        }
    }
    let gp5 = GeometryParams::new(3, 5);
    let sys5 = eta_slab(&gp5, 2).expect("d=5 slab builds");
    match slice_decoupling_check(&sys5, BASE_SEED ^ 0x55, 10_000).expect("check runs") {
        lifshitz_core::coupling::SliceVerdict::Clean(report) => {
            total_events += report.events;
            total_flips += report.flips;
        }
        lifshitz_core::coupling::SliceVerdict::Mismatch(m) => {
            panic!("slice mismatch at d=5: {m:?}")
        }
    }
    println!(
        "criterion 07 PASS: 13 slab/shell replays bit-exact over {total_events} events ({total_flips} flips)"
    );
}

#[test]
fn criterion_08_geometry_invariants() {
    for l in [3u32, 4, 5] {
        let gp = GeometryParams::new(l, 4);
        let cyl = cylinder(&gp).expect("cylinder");
        let zero = shrunk_set(&gp, 0).expect("shrunk set");
        assert_eq!(zero, cyl, "shrunk_set(0) != cylinder at L = {l}");
        drop((cyl, zero));
        for i in 0..=4 * l - 2 {
            // the four-part boundary partition is verified during
            // construction; any failure aborts here
            eta_slab(&gp, i).unwrap_or_else(|e| panic!("partition failed at L={l}, i={i}: {e}"));
        }
    }
    println!(
        "criterion 08 PASS: shrunk_set(0) = cylinder and boundary partition verified for L = 3, 4, 5, all i"
    );
}

#[test]
fn criterion_09_engine_equivalence() {
    let mut lines = Vec::new();
    for l in [4u32, 8, 16] {
        let region = Arc::new(hypercube(l, 2).unwrap());
        let n = region.len();
        let bc = BoundaryCondition::uniform(&region, 1).unwrap();
        let sample = |engine: EngineKind, offset: u64| -> Vec<f64> {
            (0..500u64)
                .map(|k| {
                    let seed = BASE_SEED ^ (offset + k) ^ ((l as u64) << 32);
                    let mut state =
                        DynamicsState::new(region.clone(), &bc, SpinField::all_minus(n)).unwrap();
                    let hit = match engine {
                        EngineKind::Graphical => {
                            let mut stream = EventStream::new(seed, n as u32).unwrap();
                            run_to_absorption(&mut state, &mut stream, 1e8, &mut NoObserver)
                                .unwrap()
                        }
                        EngineKind::RejectionFree => {
                            let mut eng = RejectionFreeEngine::new(&state, seed);
                            eng.run_to_absorption(&mut state, 1e8, &mut NoObserver)
                                .unwrap()
                        }
                    };
                    hit.time().expect("absorbs")
                })
                .collect()
        };
        let graphical = sample(EngineKind::Graphical, 1_000_000);
        let rejection_free = sample(EngineKind::RejectionFree, 2_000_000);
        let p = stats::mann_whitney_p(&graphical, &rejection_free);
        assert!(
            p > 0.001,
            "rank test rejects engine equivalence at L = {l}: p = {p}"
        );
        let diff = (stats::mean(&graphical) - stats::mean(&rejection_free)).abs();
        let se = (stats::std_error(&graphical).powi(2) + stats::std_error(&rejection_free).powi(2))
            .sqrt();
        assert!(
            diff < 3.0 * se,
            "means differ by {diff} > 3 se ({se}) at L = {l}"
        );
        lines.push(format!(
            "L={l}: p={p:.3}, |dmean|={diff:.2} ({:.1} se)",
            diff / se
        ));
    }
    println!(
        "criterion 09 PASS: engines equivalent ({})",
        lines.join("; ")
    );
}

#[test]
fn split_sample_stability_of_tmix() {
    // supporting check: the L = 64 estimate is stable across disjoint
    // replica halves (each half's estimate falls in the other's interval)
    let records = d2_records();
    let group: Vec<HittingRecord> = records.iter().filter(|r| r.l == 64).cloned().collect();
    let (a, b) = group.split_at(group.len() / 2);
    let ea = estimate_tmix(a).unwrap();
    let eb = estimate_tmix(b).unwrap();
    assert!(
        ea.ci.0 <= eb.tmix && eb.tmix <= ea.ci.1,
        "half B estimate {} outside half A interval {:?}",
        eb.tmix,
        ea.ci
    );
    assert!(
        eb.ci.0 <= ea.tmix && ea.tmix <= eb.ci.1,
        "half A estimate {} outside half B interval {:?}",
        ea.tmix,
        eb.ci
    );
}

#[test]
fn criterion_10_lower_bound_sanity() {
    let report = linear_lower_sanity(d4_records()).expect("report");
    assert!(
        report.passes && report.exponent >= 1.0,
        "5th-percentile exponent {} below 1",
        report.exponent
    );
    println!(
        "criterion 10 PASS: d=4 5th-percentile exponent {:.3} >= 1 (ci {:.3}..{:.3})",
        report.exponent, report.exponent_ci.0, report.exponent_ci.1
    );
}
