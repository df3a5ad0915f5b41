use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use sfv_cli::checks::{self, Verdict};
use sfv_cli::exit;
use sfv_cli::files;
use sfv_cli::pipeline::{self, AttackParams, ExperimentSpec, Scenario, REPORT_FILE};
use sfv_cli::tables::{self, ReportOptions};
use sfv_core::adversary::Alteration;
use sfv_core::config::ConfigDocument;
use sfv_core::ledger::NodeId;
use sfv_core::stats::DEFAULT_BUDGET_Z;
use sfv_core::{CandidateId, ClusterId, MachineId, PrecinctId};

/// Simulate, publish, verify, attack and audit software-free verifiable elections.
///
/// Exit status: 0 when the check passes, 1 when it ran and failed,
/// 2 on malformed input.
#[derive(Parser)]
#[command(name = "sfv", version)]
struct Cli {
    /// Run directory read and written by the subcommands.
    #[arg(long, global = true, env = "SFV_OUT_DIR", default_value = "sfv-out")]
    dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an honest election and write ledgers, receipts and a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Extra independent elections summarised in the report.
        #[arg(long, default_value_t = 1)]
        trials: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Rebuild the published ledger files from the private record.
    Publish,
    /// Look a pseudonym up on the national flat ledger.
    VerifyVote {
        #[arg(long)]
        r: String,
        #[arg(long)]
        candidate: Option<u16>,
    },
    /// Manual check of one cluster file: serial continuity and block totals.
    VerifyCluster {
        #[arg(long)]
        file: PathBuf,
    },
    /// Check aggregate sums, everywhere or along one path.
    VerifyHierarchy {
        /// Node to drill down to, e.g. `cluster-3` or `super-0`.
        #[arg(long)]
        path: Option<NodeId>,
    },
    /// Compare the flat tally, cluster tallies, national aggregate and voter rolls.
    Tally,
    /// Collision census of the flat ledger against the natural band.
    Collisions {
        #[arg(long, default_value_t = DEFAULT_BUDGET_Z)]
        z: f64,
    },
    /// Flag machine-part prefixes shared by three or more same-candidate rows.
    SemiCollisions {
        #[arg(long)]
        machine_width: u8,
    },
    /// File a dispute for one row of a receipt.
    Dispute {
        #[arg(long)]
        receipt: PathBuf,
        #[arg(long)]
        row: usize,
    },
    /// Run an attack scenario over many trials.
    Attack(AttackArgs),
    /// Closed-form statistics.
    Stats {
        #[command(subcommand)]
        which: StatsCommand,
    },
    /// Risk-limiting audit of the ballot boxes; writes the audit certificate.
    Rla {
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Reported margin; computed from the electronic record if omitted.
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Allowed discrepancy per sampled batch.
        #[arg(long, default_value_t = 0)]
        tolerance: u64,
    },
    /// Hand count `national` or a comma-separated precinct list.
    Recount {
        #[arg(long)]
        scope: String,
    },
    /// Reference numbers with Monte-Carlo confirmations.
    Report {
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = ReportOptions::default().seed)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Subcommand)]
enum StatsCommand {
    Collisions {
        #[arg(long)]
        n: f64,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long, default_value_t = DEFAULT_BUDGET_Z)]
        z: f64,
    },
    Detection {
        #[arg(long)]
        v: u64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        threshold: u64,
    },
    Capacity {
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        p: f64,
    },
    Catch {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        a: u64,
    },
}

/// Scenario knobs; unset flags fall back to the config's `[attack]` section.
#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    scenario: Scenario,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Partition window as two day fractions, e.g. `0.25,0.75`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    window: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    clusters: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    machines: Option<Vec<u32>>,
    #[arg(long, value_parser = ["flip", "drop"])]
    alteration: Option<String>,
    #[arg(long)]
    to: Option<u16>,
    #[arg(long)]
    target: Option<u16>,
    #[arg(long)]
    altered: Option<usize>,
    #[arg(long)]
    safe: Option<usize>,
    #[arg(long)]
    verifiers: Option<usize>,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    beneficiary: Option<u16>,
    #[arg(long, value_delimiter = ',')]
    precincts: Option<Vec<u32>>,
    #[arg(long)]
    precinct: Option<u32>,
    #[arg(long)]
    candidate: Option<u16>,
    #[arg(long)]
    forced_machine_part: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
}

impl AttackArgs {
    fn params(&self) -> Result<AttackParams> {
        let text = files::read(&self.config)?;
        let doc = ConfigDocument::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", self.config.display()))?;
        let mut p = AttackParams::default();
        p.apply_document(&doc)?;
        if let Some(w) = &self.window {
            p.window = (w[0], w[1]);
        }
        if let Some(c) = &self.clusters {
            p.clusters = c.iter().copied().map(ClusterId).collect();
        }
        if let Some(m) = &self.machines {
            p.machines = m.iter().copied().map(MachineId).collect();
        }
        match self.alteration.as_deref() {
            Some("drop") => p.alteration = Alteration::Drop,
            Some(_) if p.alteration == Alteration::Drop => p.alteration = Alteration::Flip { to: CandidateId(1) },
            _ => {}
        }
        if let (Some(to), Alteration::Flip { .. }) = (self.to, p.alteration) {
            p.alteration = Alteration::Flip { to: CandidateId(to) };
        }
        if let Some(x) = self.target {
            p.target = CandidateId(x);
        }
        p.altered = self.altered.unwrap_or(p.altered);
        p.safe = self.safe.unwrap_or(p.safe);
        p.verifiers = self.verifiers.unwrap_or(p.verifiers);
        p.threshold = self.threshold.unwrap_or(p.threshold);
        p.budget = self.budget.unwrap_or(p.budget);
        if let Some(x) = self.beneficiary {
            p.beneficiary = CandidateId(x);
        }
        if let Some(ps) = &self.precincts {
            p.precincts = ps.iter().copied().map(PrecinctId).collect();
        }
        if let Some(x) = self.precinct {
            p.precinct = PrecinctId(x);
        }
        if let Some(x) = self.candidate {
            p.candidate = Some(CandidateId(x));
        }
        p.forced_machine_part = self.forced_machine_part.unwrap_or(p.forced_machine_part);
        p.repeats = self.repeats.unwrap_or(p.repeats);
        Ok(p)
    }
}

fn pipeline_verdict(spec: &ExperimentSpec) -> Result<Verdict> {
    let dir = pipeline::run_pipeline(spec)?;
    let mut text = files::read(&dir.join(REPORT_FILE))?;
    text.push_str(&format!("dir={}\n", dir.display()));
    Ok(Verdict { pass: true, text })
}

fn run(cli: Cli) -> Result<Verdict> {
    let dir = cli.dir;
    match cli.command {
        Command::Simulate { config, seed, trials, jobs } => pipeline_verdict(&ExperimentSpec {
            config,
            scenario: Scenario::Honest,
            trials,
            seed,
            out_dir: dir,
            jobs,
            overrides: None,
        }),
        Command::Publish => checks::publish(&dir),
        Command::VerifyVote { r, candidate } => checks::verify_vote(&dir, &r, candidate.map(CandidateId)),
        Command::VerifyCluster { file } => checks::verify_cluster(&file),
        Command::VerifyHierarchy { path } => checks::verify_hierarchy_at(&dir, path),
        Command::Tally => checks::tally(&dir),
        Command::Collisions { z } => checks::collisions(&dir, z),
        Command::SemiCollisions { machine_width } => checks::semi_collisions(&dir, machine_width),
        Command::Dispute { receipt, row } => checks::dispute(&dir, &receipt, row),
        Command::Attack(args) => {
            let params = args.params()?;
            pipeline_verdict(&ExperimentSpec {
                config: args.config,
                scenario: args.scenario,
                trials: args.trials,
                seed: args.seed,
                out_dir: dir,
                jobs: args.jobs,
                overrides: Some(params),
            })
        }
        Command::Stats { which } => {
            let text = match which {
                StatsCommand::Collisions { n, s, k, z } => tables::stats_collisions(n, s, k, z)?,
                StatsCommand::Detection { v, p, threshold } => tables::stats_detection(v, p, threshold)?,
                StatsCommand::Capacity { budget, p } => tables::stats_capacity(budget, p)?,
                StatsCommand::Catch { m, k, a } => tables::stats_catch(m, k, a)?,
            };
            Ok(Verdict { pass: true, text })
        }
        Command::Rla { alpha, margin, seed, tolerance } => checks::rla(&dir, alpha, margin, seed, tolerance),
        Command::Recount { scope } => checks::recount(&dir, &checks::parse_scope(&scope)?),
        Command::Report { trials, seed, jobs } => tables::reproduce_reference_tables(&ReportOptions { trials, seed, jobs }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(v) => {
            print!("{}", v.text);
            ExitCode::from(if v.pass { exit::PASS } else { exit::FAIL })
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::INPUT)
        }
    }
}
