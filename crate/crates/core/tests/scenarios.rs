use std::collections::BTreeSet;

use proptest::prelude::*;
use rayon::prelude::*;

use sfv_core::adversary::{
    degradation_metrics, run_central_flip_drop, run_homogeneous_collision_attack, run_localized_dos,
    run_malicious_decoys, run_safe_vote_alteration, Alteration, CentralAttack, HomogeneousAttack, VerifierSelection,
};
use sfv_core::audit::{
    apply_recount, electronic_batch_tallies, full_recount, recount_trigger, RecountScope, TriggerThresholds,
};
use sfv_core::ledger::build_format_a;
use sfv_core::randomness::trial_seed;
use sfv_core::stats::catch_probability;
use sfv_core::verification::{anti_stuffing_check, AntiStuffing};
use sfv_core::{
    simulate, CandidateId, ChoiceModel, ClusterId, ElectionConfig, Layout, MachineId, PrecinctId, SigningMode,
};

fn config(layout: &Layout, seed: u64) -> ElectionConfig {
    let mut cfg = ElectionConfig::from_layout(layout, seed).unwrap();
    cfg.signing = SigningMode::Deferred;
    cfg
}

#[test]
fn partition_degrades_anonymity_but_not_the_tally() {
    let mut layout = Layout::uniform(2, 10, 50);
    layout.precincts_per_cluster = Some(10);
    let pairs: Vec<(usize, usize, bool)> = (0..100u64)
        .into_par_iter()
        .map(|t| {
            let cfg = config(&layout, trial_seed(31, t));
            let baseline = run_localized_dos(cfg.clone(), (0.0, 0.0), &[ClusterId(0)]).unwrap().1;
            let cut = run_localized_dos(cfg, (0.0, 1.0), &[ClusterId(0)]).unwrap().1;
            (baseline.max_shared_decoy, cut.max_shared_decoy, baseline.tally == cut.tally)
        })
        .collect();
    let base: usize = pairs.iter().map(|p| p.0).sum();
    let cut: usize = pairs.iter().map(|p| p.1).sum();
    assert!(cut > base, "partitioned {cut} vs baseline {base}");
    assert!(pairs.iter().all(|p| p.2));
}

#[test]
fn control_run_matches_plain_simulation() {
    let layout = Layout::uniform(3, 4, 20);
    let cfg = config(&layout, 8);
    let (out, m) = run_localized_dos(cfg.clone(), (0.0, 0.0), &[]).unwrap();
    let plain = simulate(cfg).unwrap();
    assert_eq!(out.records, plain.records);
    assert_eq!(m, degradation_metrics(&plain));
}

#[test]
fn one_compromised_machine_in_ten() {
    let mut layout = Layout::uniform(2, 10, 30);
    layout.precincts_per_cluster = Some(10);
    let cfg = config(&layout, 12);
    let honest = simulate(cfg.clone()).unwrap();
    let (out, m) = run_malicious_decoys(cfg.clone(), &[MachineId(3)]).unwrap();
    assert!(m.fetches.compromised > 0);
    assert_eq!(m.tally, degradation_metrics(&honest).tally);
    let (_, none) = run_malicious_decoys(cfg, &[]).unwrap();
    assert_eq!(none, degradation_metrics(&honest));
    let n = out.num_candidates();
    let flat = build_format_a(&out.records, out.config.pseudonym_width, n);
    assert_eq!(anti_stuffing_check(&out.rolls, &flat), AntiStuffing::Ok);
}

#[test]
fn scoped_recount_restores_one_precinct() {
    let layout = Layout::uniform(2, 6, 40);
    let cfg = config(&layout, 5);
    let out = simulate(cfg).unwrap();
    let victim = PrecinctId(2);
    // Flip every candidate-0 vote of the victim precinct by hand.
    let mut records = out.records.clone();
    for r in records.iter_mut().filter(|r| r.precinct == victim && !r.is_dummy) {
        r.candidate = CandidateId(1);
    }
    let mut electronic = electronic_batch_tallies(&records, 6, 2);
    let before = electronic.clone();
    let tally = full_recount(&out.ballot_boxes, &RecountScope::Precincts([victim].into()), 2);
    apply_recount(&mut electronic, &tally);
    assert_eq!(electronic[victim.index()], out.ground_truth_for(victim));
    for p in (0..6).filter(|&p| p != victim.index()) {
        assert_eq!(electronic[p], before[p]);
    }
}

#[test]
fn national_recount_after_central_attack_matches_truth() {
    let layout = Layout::uniform(2, 8, 50);
    let out = simulate(config(&layout, 77)).unwrap();
    let mut attack = CentralAttack::new(CandidateId(0), Alteration::Flip { to: CandidateId(1) }, 30, 10);
    attack.manual_verifiers = VerifierSelection::Uniform(40);
    let altered = run_central_flip_drop(&out, &attack).unwrap();
    let mut electronic = electronic_batch_tallies(&altered.records, 8, 2);
    let recount = full_recount(&out.ballot_boxes, &RecountScope::National, 2);
    apply_recount(&mut electronic, &recount);
    assert_eq!(recount.total, out.ground_truth_tally());
    for p in 0..8 {
        assert_eq!(electronic[p], out.ground_truth_for(PrecinctId(p as u32)));
    }
    let trigger = recount_trigger(&altered.report.disputes, &[], None, &TriggerThresholds::default());
    let disputed: BTreeSet<PrecinctId> = altered.report.disputes.iter().map(|d| d.receipt.machine.into()).collect();
    assert_eq!(trigger.precincts, disputed);
}

#[test]
fn verifying_everyone_catches_any_alteration() {
    let layout = Layout::uniform(2, 4, 30);
    for (t, alteration) in [Alteration::Drop, Alteration::Flip { to: CandidateId(1) }].into_iter().enumerate() {
        let out = simulate(config(&layout, t as u64)).unwrap();
        for m in 1..=3 {
            let mut attack = CentralAttack::new(CandidateId(0), alteration, m, 0);
            attack.manual_verifiers = VerifierSelection::All;
            let report = run_central_flip_drop(&out, &attack).unwrap().report;
            assert_eq!(report.catches, m);
            assert!(report.detected);
        }
    }
}

#[test]
fn per_verifier_catch_rate_matches_analytic() {
    let (a, m, k, v) = (5100u32, 200usize, 100usize, 100usize);
    let mut layout = Layout::uniform(2, 10, 1000);
    layout.choice = ChoiceModel::Counts(vec![a / 10, (10_000 - a) / 10]);
    let catches: usize = (0..200u64)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(99, t);
            let out = simulate(config(&layout, seed)).unwrap();
            run_safe_vote_alteration(&out, CandidateId(0), CandidateId(1), m, k, v, 1, seed)
                .unwrap()
                .report
                .catches
        })
        .sum();
    let events = (200 * v) as f64;
    let rate = catches as f64 / events;
    let p = catch_probability(m as u64, k as u64, u64::from(a)).unwrap();
    let half_width = 2.576 * (p * (1.0 - p) / events).sqrt();
    assert!((rate - p).abs() <= half_width, "rate {rate} vs {p} +/- {half_width}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn collision_attack_conserves_rows_and_budget(seed in any::<u64>(), budget in 0u64..6, p in 0.5f64..1.0) {
        let mut layout = Layout::uniform(2, 4, 60);
        layout.precincts_per_cluster = Some(2);
        layout.choice = ChoiceModel::Preferences(vec![p, 1.0 - p]);
        let cfg = config(&layout, seed);
        let honest_rows = simulate(cfg.clone()).unwrap().records.len();
        let attack = HomogeneousAttack { precincts: vec![PrecinctId(0), PrecinctId(3)], budget, beneficiary: CandidateId(1) };
        let out = run_homogeneous_collision_attack(cfg, &attack).unwrap();
        prop_assert_eq!(out.output.records.len(), honest_rows);
        prop_assert!(out.visible_collisions <= budget);
        prop_assert_eq!(out.in_booth_challenges, 0);
    }

    #[test]
    fn recount_never_touches_other_precincts(seed in any::<u64>(), picks in proptest::collection::btree_set(0u32..6, 0..6)) {
        let out = simulate(config(&Layout::uniform(3, 6, 15), seed)).unwrap();
        let mut electronic: Vec<Vec<u64>> = (0..6).map(|p| vec![p as u64 + 100; 3]).collect();
        let before = electronic.clone();
        let scope = RecountScope::Precincts(picks.iter().map(|&p| PrecinctId(p)).collect());
        let tally = full_recount(&out.ballot_boxes, &scope, 3);
        apply_recount(&mut electronic, &tally);
        for p in 0..6u32 {
            if picks.contains(&p) {
                prop_assert_eq!(&electronic[p as usize], &out.ground_truth_for(PrecinctId(p)));
            } else {
                prop_assert_eq!(&electronic[p as usize], &before[p as usize]);
            }
        }
    }
}
