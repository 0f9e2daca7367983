use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use regcons::config::parse_kv_text;
use regcons::explorer::{explore, ExplorationConfig, SearchGoal};
use regcons::harness::{attack_demo, forced_coin_experiment, run_campaign, run_once};
use regcons::monitors::run_all;
use regcons::{Error, RegisterModel, SystemConfig, Trace};

/// Event bound for `explore` when none is configured.
const EXPLORE_MAX_EVENTS: usize = 200;

/// Randomized binary consensus over simulated shared registers.
#[derive(Parser, Debug)]
#[command(name = "regcons", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one seeded execution and check it with every monitor.
    Run {
        #[command(flatten)]
        sys: SystemArgs,
        /// Write the trace to this file.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run many seeded executions and print aggregate statistics.
    Campaign {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        /// Force coins at this round to match the first completed write of the round before.
        #[arg(long)]
        forced_round: Option<u32>,
        /// With --forced-round, force the opposite value instead.
        #[arg(long, requires = "forced_round")]
        inverted: bool,
    },
    /// Enumerate every execution within the given bounds.
    Explore {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 4)]
        round_cap: u32,
        /// `new_old_inversion` or a monitor name that must PASS.
        #[arg(long)]
        goal: Option<String>,
        #[arg(long)]
        stop_at_first_witness: bool,
        #[arg(long)]
        no_memo: bool,
        #[arg(long, default_value_t = 50_000_000)]
        node_budget: u64,
        /// Directory for violation and witness traces.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Replay the scripted attack on linearizable registers.
    Attack {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 1000)]
        runs: u64,
    },
    /// Run every monitor over a trace file.
    Check { trace: PathBuf },
}

#[derive(Args, Debug, Default)]
struct SystemArgs {
    /// Key=value file read before the flags below; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Proposal bits, e.g. `0110`.
    #[arg(long)]
    proposals: Option<String>,
    /// atomic | regular | linearizable
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    adversary: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_events: Option<usize>,
    #[arg(long)]
    crash_budget: Option<usize>,
    #[arg(long)]
    crash_rate: Option<f64>,
    /// fair | forced@R | inverted@R
    #[arg(long)]
    coin: Option<String>,
}

impl SystemArgs {
    fn pairs(&self) -> Result<Vec<(String, String)>, Error> {
        let mut pairs = match &self.config {
            Some(path) => parse_kv_text(&read(path)?)?,
            None => Vec::new(),
        };
        let flags = [
            ("n", self.n.map(|v| v.to_string())),
            ("proposals", self.proposals.clone()),
            ("model", self.model.clone()),
            ("adversary", self.adversary.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("max_events", self.max_events.map(|v| v.to_string())),
            ("crash_budget", self.crash_budget.map(|v| v.to_string())),
            ("crash_rate", self.crash_rate.map(|v| v.to_string())),
            ("coin", self.coin.clone()),
        ];
        // `n` alone resets proposals to alternating, so a file's proposals
        // must not survive a different `--n`.
        if self.n.is_some() && self.proposals.is_none() {
            pairs.retain(|(k, _)| k != "proposals");
        }
        pairs.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(pairs)
    }

    fn config(&self) -> Result<SystemConfig, Error> {
        let (cfg, extra) = SystemConfig::from_pairs(self.pairs()?)?;
        if let Some(k) = extra.keys().next() {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        Ok(cfg)
    }

    /// Like [`Self::config`], but with `model` defaulting to `default` when
    /// neither the file nor the flags set it.
    fn config_with_model(&self, default: RegisterModel) -> Result<SystemConfig, Error> {
        let cfg = self.config()?;
        Ok(if self.sets("model")? {
            cfg
        } else {
            cfg.with_model(default)
        })
    }

    fn sets(&self, key: &str) -> Result<bool, Error> {
        Ok(self.pairs()?.iter().any(|(k, _)| k == key))
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Prints every verdict; true if any is a violation.
fn report_verdicts(t: &Trace) -> bool {
    let verdicts = run_all(t);
    for v in &verdicts {
        println!("{v}");
    }
    verdicts.iter().any(|v| v.is_violation())
}

fn run(cmd: Command) -> Result<bool, Error> {
    match cmd {
        Command::Run { sys, trace_out } => {
            let cfg = sys.config()?;
            let t = run_once(&cfg, cfg.seed)?;
            if let Some(path) = trace_out {
                write(&path, &t.to_text())?;
            }
            println!(
                "events={} end={}",
                t.events.len(),
                if t.is_capped() { "capped" } else { "complete" }
            );
            Ok(report_verdicts(&t))
        }
        Command::Campaign {
            sys,
            runs,
            forced_round,
            inverted,
        } => {
            let cfg = sys.config()?;
            match forced_round {
                Some(r) => {
                    let rep = forced_coin_experiment(&cfg, r, runs, inverted)?;
                    print!("{}", rep.to_report());
                    Ok(rep.violations.iter().any(|&v| v > 0))
                }
                None => {
                    let stats = run_campaign(&cfg, runs, cfg.seed)?;
                    print!("{}", stats.to_report());
                    Ok(stats.violating_runs > 0)
                }
            }
        }
        Command::Explore {
            sys,
            round_cap,
            goal,
            stop_at_first_witness,
            no_memo,
            node_budget,
            trace_out,
        } => {
            let cfg = sys.config()?;
            let mut ex = ExplorationConfig::new(cfg.proposals.clone());
            ex.model = cfg.model;
            ex.max_events = if sys.sets("max_events")? {
                cfg.max_events
            } else {
                EXPLORE_MAX_EVENTS
            };
            ex.round_cap = round_cap;
            ex.crash_budget = cfg.crash_budget;
            ex.goal = goal.as_deref().map(str::parse::<SearchGoal>).transpose()?;
            ex.memo = !no_memo;
            ex.node_budget = node_budget;
            ex.stop_at_first_witness = stop_at_first_witness;
            let rep = explore(&ex)?;
            print!("{}", rep.to_report());
            if let Some(dir) = trace_out {
                fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
                let named = rep
                    .violations
                    .iter()
                    .map(|x| ("violation", x))
                    .chain(rep.witnesses.iter().map(|x| ("witness", x)));
                for (i, (kind, (name, t))) in named.enumerate() {
                    write(&dir.join(format!("{kind}-{i}-{name}.trace")), &t.to_text())?;
                }
            }
            Ok(rep.violation_count > 0)
        }
        Command::Attack { sys, runs } => {
            let cfg = sys.config_with_model(RegisterModel::Linearizable)?;
            let rep = attack_demo(&cfg, runs)?;
            print!("{}", rep.to_report());
            Ok(rep.violating_runs > 0)
        }
        Command::Check { trace } => {
            let t = Trace::parse(&read(&trace)?)?;
            Ok(report_verdicts(&t))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
