//! Operator entry point: run scenario files, verify event logs by replay,
//! and inspect final state. Exit codes: 0 clean, 1 invariant violation,
//! 2 malformed usage or input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scynet_core::report::{report_from_log, scenario_from_log, RunReport};
use scynet_core::sim::{run_scenario, Scenario};

#[derive(Parser)]
#[command(name = "scynet", about = "Run and audit deterministic domain-network scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a scenario file; write its event log and report.
    Run {
        scenario: PathBuf,
        /// Output directory for <name>.log and <name>.report.json.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Validate blocks on worker threads (output must not change).
        #[arg(long)]
        parallel: bool,
    },
    /// Replay an event log's scenario and check it byte-for-byte.
    Verify { log: PathBuf },
    /// Query the final state behind an event log.
    Inspect {
        log: PathBuf,
        /// One of: balances, "tournament N", disqualifications.
        #[arg(long)]
        query: String,
    },
}

const CLEAN: u8 = 0;
const VIOLATION: u8 = 1;
const USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run {
            scenario,
            out,
            seed,
            parallel,
        } => cmd_run(&scenario, &out, seed, parallel),
        Cmd::Verify { log } => cmd_verify(&log),
        Cmd::Inspect { log, query } => cmd_inspect(&log, &query),
    };
    ExitCode::from(code)
}

fn fail(code: u8, msg: &str) -> u8 {
    eprintln!("error: {msg}");
    code
}

fn cmd_run(scenario_path: &Path, out: &Path, seed: Option<u64>, parallel: bool) -> u8 {
    let text = match fs::read_to_string(scenario_path) {
        Ok(t) => t,
        Err(e) => return fail(USAGE, &format!("cannot read {}: {e}", scenario_path.display())),
    };
    let mut scenario: Scenario = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => return fail(USAGE, &format!("malformed scenario: {e}")),
    };
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let outcome = match run_scenario(&scenario, parallel) {
        Ok(o) => o,
        Err(e) => return fail(USAGE, &e.to_string()),
    };
    if let Err(e) = fs::create_dir_all(out) {
        return fail(USAGE, &format!("cannot create {}: {e}", out.display()));
    }
    let log_name = format!("{}.log", scenario.name);
    let log_path = out.join(&log_name);
    let mut log_text = outcome.log.join("\n");
    log_text.push('\n');
    if let Err(e) = fs::write(&log_path, log_text) {
        return fail(USAGE, &format!("cannot write {}: {e}", log_path.display()));
    }
    let report = RunReport::from_outcome(&scenario, &outcome, &log_name);
    let report_path = out.join(format!("{}.report.json", scenario.name));
    if let Err(e) = fs::write(&report_path, report.to_json()) {
        return fail(USAGE, &format!("cannot write {}: {e}", report_path.display()));
    }
    println!("scenario: {}", report.scenario);
    println!("scenarioDigest: {}", report.scenario_digest.hex());
    println!("blocks: {}", report.blocks);
    println!("finalDigest: {}", report.final_digest.hex());
    println!("conserved: {}", report.conserved);
    println!("digestsAgree: {}", report.digests_agree);
    for t in &report.tournaments {
        println!("tournament {}: {}", t.index, t.outcome);
    }
    if report.violations.is_empty() {
        println!("violations: none");
        CLEAN
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        VIOLATION
    }
}

fn read_log(path: &Path) -> Result<Vec<String>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn cmd_verify(log_path: &Path) -> u8 {
    let lines = match read_log(log_path) {
        Ok(l) => l,
        Err(e) => return fail(USAGE, &e),
    };
    let Some(scenario) = scenario_from_log(&lines) else {
        println!("verify: FAIL (log has no valid scenario header)");
        return VIOLATION;
    };
    let outcome = match run_scenario(&scenario, false) {
        Ok(o) => o,
        Err(e) => {
            println!("verify: FAIL (embedded scenario invalid: {e})");
            return VIOLATION;
        }
    };
    for (i, (got, want)) in lines.iter().zip(&outcome.log).enumerate() {
        if got != want {
            println!("verify: FAIL (replay digest mismatch at line {})", i + 1);
            return VIOLATION;
        }
    }
    if lines.len() < outcome.log.len() {
        println!("verify: FAIL (truncated log: {} of {} lines)", lines.len(), outcome.log.len());
        return VIOLATION;
    }
    if lines.len() > outcome.log.len() {
        println!("verify: FAIL (trailing lines beyond replay)");
        return VIOLATION;
    }
    if !outcome.violations.is_empty() {
        println!("verify: FAIL ({})", outcome.violations[0]);
        return VIOLATION;
    }
    if outcome.digests.iter().any(|d| *d != outcome.digests[0]) {
        println!("verify: FAIL (replica state divergence)");
        return VIOLATION;
    }
    if !outcome.final_state.ledger.conservation_holds() {
        println!("verify: FAIL (token conservation broken)");
        return VIOLATION;
    }
    println!("verify: ok ({} lines, {} blocks)", lines.len(), outcome.blocks);
    CLEAN
}

fn cmd_inspect(log_path: &Path, query: &str) -> u8 {
    let lines = match read_log(log_path) {
        Ok(l) => l,
        Err(e) => return fail(USAGE, &e),
    };
    let report = match report_from_log(&lines, "") {
        Ok(r) => r,
        Err(e) => return fail(USAGE, &e.to_string()),
    };
    if query == "balances" {
        for (name, balance) in &report.final_balances {
            println!("{name} balance {balance}");
        }
        for (name, stake) in &report.final_stakes {
            println!("{name} stake {stake}");
        }
        println!("pool.current {}", report.current_reward_pool);
        println!("pool.next {}", report.next_reward_pool);
        println!("supply {}", report.total_supply);
        println!("conserved {}", report.conserved);
        return CLEAN;
    }
    if query == "disqualifications" {
        for t in &report.tournaments {
            for (account, reason) in &t.disqualified_miners {
                println!("tournament {} miner {} {:?}", t.index, account.short(), reason);
            }
            for (account, reason) in &t.disqualified_challengers {
                println!("tournament {} challenger {} {:?}", t.index, account.short(), reason);
            }
        }
        return CLEAN;
    }
    if let Some(rest) = query.strip_prefix("tournament ") {
        let Ok(index) = rest.parse::<u64>() else {
            return fail(USAGE, &format!("bad tournament index {rest:?}"));
        };
        let Some(t) = report.tournaments.iter().find(|t| t.index == index) else {
            return fail(USAGE, &format!("no completed tournament {index} in this log"));
        };
        println!("tournament {} {}", t.index, t.outcome);
        for (i, (agent, score)) in t.ranking.iter().enumerate() {
            println!("rank {} agent {} score {}/{}", i + 1, agent.hex(), score.num, score.den);
        }
        for (account, amount) in &t.payouts {
            println!("payout {} {amount}", account.short());
        }
        for (account, amount) in &t.refunds {
            println!("refund {} {amount}", account.short());
        }
        for (account, reason) in &t.disqualified_miners {
            println!("disqualified miner {} {:?}", account.short(), reason);
        }
        for (account, reason) in &t.disqualified_challengers {
            println!("disqualified challenger {} {:?}", account.short(), reason);
        }
        return CLEAN;
    }
    fail(USAGE, &format!("unknown query {query:?}"))
}
