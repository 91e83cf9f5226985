//! Acceptance suite: one test per release criterion, each printing a
//! single PASS line (run with `--nocapture` to see them on success).
//! Every check is verified against an oracle computed independently of
//! the implementation under test.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use scynet_core::app::AppEvent;
use scynet_core::codec::{digest_parts, Digest};
use scynet_core::config::{DomainConfig, ProblemType, Ratio};
use scynet_core::consensus::{select_proposer, ChallengerSet, DetRng, SelectionSeed};
use scynet_core::crypto::{AccountId, KeyPair};
use scynet_core::ledger::{Amount, FeeKind, LedgerState};
use scynet_core::report::RunReport;
use scynet_core::score::Score;
use scynet_core::sim::{run_scenario, Scenario, SimOutcome};
use scynet_core::tournament::{distribute_reward, DisqReason, Ranking, TournamentState};
use scynet_core::toy::{accuracy, agent_respond, baseline, AgentBehavior, TruthStream};
use scynet_core::tx::Uuid;

fn pass(n: u32, name: &str) {
    println!("criterion {n} ({name}): PASS");
}

fn account(seed: u8) -> AccountId {
    KeyPair::from_seed(&[seed; 32]).account()
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load_scenarios() -> Vec<Scenario> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenarios directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).unwrap();
            serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
        })
        .collect()
}

fn load_scenario(name: &str) -> Scenario {
    let path = scenario_dir().join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn resolutions(outcome: &SimOutcome) -> Vec<&AppEvent> {
    outcome
        .events
        .iter()
        .filter(|(_, e)| {
            matches!(
                e,
                AppEvent::TournamentResolved { .. } | AppEvent::TournamentFailed { .. }
            )
        })
        .map(|(_, e)| e)
        .collect()
}

#[test]
fn criterion_1_replicated_state_agreement() {
    let start = Instant::now();
    let scenarios = load_scenarios();
    assert!(scenarios.len() >= 8, "bundled library has {} scenarios", scenarios.len());
    for s in &scenarios {
        // The simulator halts with a recorded violation the moment any
        // honest node rejects a block or computes a divergent digest, so
        // an empty violation list certifies agreement after every block.
        let outcome = run_scenario(s, false).unwrap();
        assert!(outcome.violations.is_empty(), "{}: {:?}", s.name, outcome.violations);
        assert!(outcome.blocks > 0, "{}: no blocks", s.name);
        assert!(
            outcome.digests.iter().all(|d| *d == outcome.digests[0]),
            "{}: final digests diverge",
            s.name
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    pass(1, "replicated-state agreement");
}

#[test]
fn criterion_2_token_conservation() {
    // 10,000 randomized operation sequences against the ledger, checking
    // the conservation identity after every single operation.
    let kinds = [
        FeeKind::AgentSubmission,
        FeeKind::DataPublish,
        FeeKind::PricePublish,
        FeeKind::Rent,
    ];
    for seq in 0..10_000u64 {
        let mut rng = DetRng::from_parts(&[b"conservation", &seq.to_be_bytes()]);
        let accounts: Vec<AccountId> = (1..=6u8).map(account).collect();
        let allocations: BTreeMap<AccountId, Amount> =
            accounts.iter().map(|a| (*a, 100 + rng.below(900) as Amount)).collect();
        let stakes: BTreeMap<AccountId, (Amount, u64)> = accounts
            .iter()
            .take(3)
            .map(|a| (*a, (10 + rng.below(50) as Amount, 0)))
            .collect();
        let mut ledger = LedgerState::genesis(&allocations, &stakes).unwrap();
        let supply = ledger.total_supply;
        for _ in 0..20 {
            let a = accounts[rng.below(6) as usize];
            let b = accounts[rng.below(6) as usize];
            let amount = rng.below(200) as Amount;
            match rng.below(6) {
                0 => {
                    let kind = kinds[rng.below(4) as usize];
                    let _ = ledger.charge_fee(&a, amount, kind);
                }
                1 => {
                    let _ = ledger.transfer(&a, &b, amount);
                }
                2 => {
                    ledger.rotate_pools();
                }
                3 => {
                    let _ = ledger.pay_from_pool(&a, amount);
                }
                4 => {
                    let _ = ledger.return_to_next(amount);
                }
                _ => {
                    let _ = ledger.reset_coin_age(&a, 1 + rng.next_u64() % 1_000_000);
                }
            }
            // Oracle: recompute the identity from raw maps, not through
            // conservation_holds alone.
            let held: Amount = ledger.balances.values().sum();
            let staked: Amount = ledger.stakes.values().map(|s| s.amount).sum();
            assert_eq!(
                held + staked + ledger.current_reward_pool + ledger.next_reward_pool,
                supply,
                "sequence {seq}"
            );
            assert!(ledger.conservation_holds());
        }
    }
    // And end-to-end: every bundled scenario conserves the supply.
    for s in load_scenarios() {
        let outcome = run_scenario(&s, false).unwrap();
        assert!(outcome.final_state.ledger.conservation_holds(), "{}", s.name);
    }
    pass(2, "token conservation");
}

fn realtime_cfg() -> scynet_core::config::ValidatedConfig {
    DomainConfig {
        tournament_start_frequency: 40_000,
        proposer_deadline: 5_000,
        time_tolerance: 2_500,
        problem_type: ProblemType::RealTime,
        real_time_frequency: Some(10_000),
        dataset_submission_deadline: None,
        min_agent_challengers: None,
        min_agent_challenger_voting_power: None,
        agent_submission_fee: 60,
        data_publish_fee: 5,
        price_publish_fee: 3,
        rent_fee: 2,
    }
    .validate()
    .unwrap()
}

fn dataset_cfg() -> scynet_core::config::ValidatedConfig {
    DomainConfig {
        tournament_start_frequency: 60_000,
        proposer_deadline: 5_000,
        time_tolerance: 2_500,
        problem_type: ProblemType::Dataset,
        real_time_frequency: None,
        dataset_submission_deadline: Some(20_000),
        min_agent_challengers: Some(3),
        min_agent_challenger_voting_power: Some(Ratio::new(1, 5)),
        agent_submission_fee: 60,
        data_publish_fee: 5,
        price_publish_fee: 3,
        rent_fee: 2,
    }
    .validate()
    .unwrap()
}

fn ledger_with_pool(pool: Amount) -> LedgerState {
    let allocations = BTreeMap::from([(account(99), pool)]);
    let mut ledger = LedgerState::genesis(&allocations, &BTreeMap::new()).unwrap();
    ledger.charge_fee(&account(99), pool, FeeKind::AgentSubmission).unwrap();
    ledger.rotate_pools();
    ledger
}

#[test]
fn criterion_3_reward_arithmetic() {
    // Real-time pool 600 with three ranked agents: 3:2:1.
    let mut ledger = ledger_with_pool(600);
    let mut t = TournamentState::pending(1);
    t.pool = 600;
    let agents: Vec<Uuid> = (1..=3u8).map(|i| Uuid([i; 16])).collect();
    for (i, uuid) in agents.iter().enumerate() {
        t.participants.insert(*uuid, account(i as u8 + 1));
        t.submitted_at.insert(*uuid, i as u64);
    }
    let ranking = Ranking(vec![
        (agents[0], Score::new(9, 10)),
        (agents[1], Score::new(7, 10)),
        (agents[2], Score::new(5, 10)),
    ]);
    let payouts = distribute_reward(&mut ledger, &t, &ranking, &realtime_cfg());
    // Oracle: independent integer split of 600 by weights 3, 2, 1.
    let oracle: Vec<Amount> = [3u64, 2, 1].iter().map(|w| 600 * w / 6).collect();
    assert_eq!(
        payouts,
        vec![
            (account(1), oracle[0]),
            (account(2), oracle[1]),
            (account(3), oracle[2]),
        ]
    );
    assert_eq!(oracle, vec![300, 200, 100]);
    assert!(ledger.conservation_holds());

    // Dataset pool 600 with two equal surviving challengers: each gets
    // half of floor(600 / 3) = 100.
    let mut ledger = ledger_with_pool(600);
    let mut t = TournamentState::pending(1);
    t.pool = 600;
    let c1 = account(11);
    let c2 = account(12);
    t.challengers = Some(ChallengerSet {
        members: vec![c1, c2],
        powers: BTreeMap::from([(c1, 50), (c2, 50)]),
    });
    let payouts = distribute_reward(&mut ledger, &t, &Ranking(Vec::new()), &dataset_cfg());
    let third = 600 / 3;
    assert_eq!(payouts, vec![(c1, third / 2), (c2, third / 2)]);
    assert_eq!(third / 2, 100);
    assert!(ledger.conservation_holds());

    // No surviving agents: the full pool rolls into the next tournament.
    let mut ledger = ledger_with_pool(600);
    let mut t = TournamentState::pending(1);
    t.pool = 600;
    let before_next = ledger.next_reward_pool;
    let payouts = distribute_reward(&mut ledger, &t, &Ranking(Vec::new()), &realtime_cfg());
    assert!(payouts.is_empty());
    assert_eq!(ledger.next_reward_pool, before_next + 600);
    assert_eq!(ledger.current_reward_pool, 0);
    assert!(ledger.conservation_holds());
    pass(3, "reward arithmetic");
}

#[test]
fn criterion_4_coin_age_selection_distribution() {
    let a = account(1);
    let b = account(2);
    let powers = BTreeMap::from([(a, 300u128), (b, 100u128)]);
    let mut wins = 0u64;
    for i in 0..10_000u64 {
        let seed = SelectionSeed::new(&Digest::ZERO, i, "acceptance", 0);
        if select_proposer(&powers, seed).unwrap() == a {
            wins += 1;
        }
    }
    // Binomial oracle: mean 7500, sigma = sqrt(10000 * 0.75 * 0.25) = 43.3,
    // 3 sigma = 130.
    assert!(
        (7_500 - 130..=7_500 + 130).contains(&wins),
        "A won {wins} of 10000"
    );
    pass(4, "coin-age selection distribution");
}

#[test]
fn criterion_5_ranking_fidelity() {
    let ps = [Ratio::new(9, 10), Ratio::new(7, 10), Ratio::new(5, 10)];
    let ticks = 250u64;
    let mut in_order = 0u32;
    for run in 0..100u64 {
        let truth = TruthStream {
            seed: run,
            bias: Ratio::new(1, 2),
        };
        let scores: Vec<Score> = ps
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let behavior = AgentBehavior::NoisyOracle(*p);
                let seed = digest_parts(&[b"fidelity", &run.to_be_bytes(), &[i as u8]]);
                let outcomes: Vec<bool> = (0..ticks).map(|t| truth.outcome(t)).collect();
                let preds: Vec<bool> = (0..ticks)
                    .map(|t| agent_respond(&behavior, truth.outcome(t), &seed, &t.to_be_bytes()))
                    .collect();
                accuracy(&preds, &outcomes).unwrap()
            })
            .collect();
        if scores[0] > scores[1] && scores[1] > scores[2] {
            in_order += 1;
        }
    }
    assert!(in_order >= 99, "p-order held in {in_order} of 100 runs");
    pass(5, "ranking fidelity");
}

#[test]
fn criterion_6_attack_coverage() {
    // Spam: a burst of worthless transactions changes nothing — the final
    // state digest matches the identical scenario without the burst.
    let spam = load_scenario("spam");
    let mut clean = spam.clone();
    clean.faults.clear();
    let spam_out = run_scenario(&spam, false).unwrap();
    let clean_out = run_scenario(&clean, false).unwrap();
    assert!(spam_out
        .log
        .iter()
        .any(|l| l.contains("\"node\":\"node5\"") && l.contains("\"tx\":\"rent\"")));
    assert_eq!(spam_out.final_state.digest(), clean_out.final_state.digest());
    assert!(spam_out.violations.is_empty());

    // Ciphertext copying: the copier is disqualified for author mismatch
    // while the true author stays ranked.
    let out = run_scenario(&load_scenario("signal_copying"), false).unwrap();
    let copier = account(2);
    let author = account(1);
    let resolved = resolutions(&out);
    let Some(AppEvent::TournamentResolved {
        ranking,
        disqualified_miners,
        ..
    }) = resolved
        .iter()
        .copied()
        .find(|e| matches!(e, AppEvent::TournamentResolved { index: 1, .. }))
    else {
        panic!("signal_copying tournament 1 not resolved");
    };
    assert!(disqualified_miners.contains(&(copier, DisqReason::AuthorMismatch)));
    assert!(disqualified_miners.iter().all(|(a, _)| *a != author));
    let author_agents: Vec<&Uuid> = out
        .final_state
        .agents
        .iter()
        .filter(|(_, rec)| rec.owner == author && rec.tournament == 1)
        .map(|(uuid, _)| uuid)
        .collect();
    assert!(ranking.iter().any(|(uuid, _)| author_agents.contains(&uuid)));

    // Miner missed signal: disqualified, tournament still succeeds.
    let out = run_scenario(&load_scenario("agent_submission_failure"), false).unwrap();
    let resolved = resolutions(&out);
    let Some(AppEvent::TournamentResolved {
        ranking,
        disqualified_miners,
        ..
    }) = resolved
        .iter()
        .copied()
        .find(|e| matches!(e, AppEvent::TournamentResolved { index: 1, .. }))
    else {
        panic!("agent_submission_failure tournament 1 not resolved");
    };
    assert!(disqualified_miners.contains(&(account(2), DisqReason::MissedSignal)));
    assert_eq!(ranking.len(), 2);

    // Challenger missed reveal: disqualified, tournament still succeeds.
    let out = run_scenario(&load_scenario("challenger_failure"), false).unwrap();
    let resolved = resolutions(&out);
    let Some(AppEvent::TournamentResolved {
        disqualified_challengers,
        ..
    }) = resolved
        .iter()
        .copied()
        .find(|e| matches!(e, AppEvent::TournamentResolved { index: 1, .. }))
    else {
        panic!("challenger_failure tournament 1 not resolved");
    };
    assert_eq!(
        disqualified_challengers.as_slice(),
        &[(account(5), DisqReason::MissedReveal)]
    );

    // Challenger collapse: every challenger misses its reveal, so the
    // tournament fails and refunds exactly the refundable fees — the two
    // agent submission fees plus one dataset publish fee per selected
    // challenger, bit for bit.
    let out = run_scenario(&load_scenario("challenger_collapse"), false).unwrap();
    let members: Vec<AccountId> = out
        .events
        .iter()
        .find_map(|(_, e)| match e {
            AppEvent::ChallengersSelected { index: 1, members } => Some(members.clone()),
            _ => None,
        })
        .expect("challengers selected");
    let Some(AppEvent::TournamentFailed { refunds, .. }) = resolutions(&out)
        .into_iter()
        .find(|e| matches!(e, AppEvent::TournamentFailed { index: 1, .. }))
    else {
        panic!("challenger_collapse tournament 1 did not fail");
    };
    let mut expected: Vec<(AccountId, Amount)> = vec![(account(1), 60), (account(2), 60)];
    expected.extend(members.iter().map(|m| (*m, 5)));
    let mut got = refunds.clone();
    expected.sort();
    got.sort();
    assert_eq!(got, expected);
    pass(6, "attack coverage");
}

#[test]
fn criterion_7_determinism() {
    for s in load_scenarios() {
        let a = run_scenario(&s, false).unwrap();
        let b = run_scenario(&s, false).unwrap();
        let c = run_scenario(&s, true).unwrap();
        assert_eq!(a.log, b.log, "{}: serial reruns differ", s.name);
        assert_eq!(a.log, c.log, "{}: parallel run differs", s.name);
        let ra = RunReport::from_outcome(&s, &a, "log").to_json();
        let rb = RunReport::from_outcome(&s, &b, "log").to_json();
        let rc = RunReport::from_outcome(&s, &c, "log").to_json();
        assert_eq!(ra, rb, "{}", s.name);
        assert_eq!(ra, rc, "{}", s.name);
    }
    pass(7, "determinism");
}

#[test]
fn criterion_8_metric_correctness() {
    // 70% majority class: baseline is exactly the reduced rational 7/10.
    let mut truth = vec![true; 70];
    truth.extend(vec![false; 30]);
    assert_eq!(baseline(&truth).unwrap(), Score { num: 7, den: 10 });

    // 78 of 100 correct: exactly 39/50.
    let mut preds = truth.clone();
    for p in preds.iter_mut().take(22) {
        *p = !*p;
    }
    let score = accuracy(&preds, &truth).unwrap();
    assert_eq!(score, Score { num: 39, den: 50 });
    // Cross-multiplication oracle: 39/50 == 78/100 and beats 7/10.
    assert_eq!(score.num * 100, 78 * score.den);
    assert!(score > baseline(&truth).unwrap());
    pass(8, "metric correctness");
}
