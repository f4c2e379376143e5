//! Command-line harness for the multi-identifier network.
//!
//! `register`, `publish` and `query` drive a ledger kept in a state
//! directory. `scenario`, `bench-fib`, `cap` and `chain-dump` write CSV
//! reports plus a `manifest.json` into `--out`; `replay` re-runs a
//! manifest into a new directory.

pub mod bench;
pub mod error;
pub mod ledger;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use min_core::{Identifier, Topology};
use min_net::pov_net::{run_pov, PovConfig};
use min_net::scenario::{
    run_bottleneck, run_scenario, ten_site_fixture, ScenarioKind, TransferReport,
};
use min_net::{Config, Network};
use serde_json::json;

pub use error::CliError;
pub use ledger::Ledger;
pub use manifest::RunManifest;

pub const DEFAULT_SIZE: usize = 10 * 1024 * 1024;
pub const DEFAULT_STATE: &str = "min-state";
pub const DEFAULT_OUT: &str = "min-out";

#[derive(Debug, Clone, Parser)]
#[command(name = "min", version, about = "Multi-identifier network harness")]
pub struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Network configuration; the built-in ten-site fixture when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for reports and the run manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Claim a name prefix on the ledger.
    Register {
        prefix: String,
        /// Hex seed file; created when missing.
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value = DEFAULT_STATE)]
        state: PathBuf,
        /// Real-world identity bound to the prefix.
        #[arg(long)]
        real_id: Option<String>,
    },
    /// Store a file off-chain and publish its signed record.
    Publish {
        name: String,
        file: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value = DEFAULT_STATE)]
        state: PathBuf,
        #[arg(long, default_value = "/loc/local")]
        locator: String,
    },
    /// Resolve a name, fetch its bytes and verify them.
    Query {
        name: String,
        #[arg(long, default_value = DEFAULT_STATE)]
        state: PathBuf,
        /// Write the verified bytes here.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Run transfer scenarios: a scenario name, `all`, `bottleneck`, or
    /// `workload` for the configuration's own workloads.
    Scenario {
        kind: String,
        /// Resource size in bytes.
        #[arg(long, default_value_t = DEFAULT_SIZE)]
        size: usize,
    },
    /// Time bulk inserts into the HPT-FIB.
    BenchFib {
        #[arg(default_values_t = [100_000u64, 1_000_000])]
        sizes: Vec<u64>,
    },
    /// Partition tolerance of a consensus topology.
    Cap {
        topology: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Also enumerate every failure state.
        #[arg(long)]
        exact: bool,
    },
    /// Dump a chain: the ledger in `--state`, or a simulated PoV run.
    ChainDump {
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        blocks: u64,
        /// Commissioners that never send.
        #[arg(long, default_value_t = 0)]
        silent: usize,
    },
    /// Re-run a manifest into `--out`.
    Replay { manifest: PathBuf },
}

/// Parses `args` (program name first) and runs the command; returns what
/// goes to stdout.
pub fn run_args<I, S>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command.clone() {
        Command::Register {
            prefix,
            key,
            state,
            real_id,
        } => {
            let prefix = parse_id(&prefix)?;
            let key =
                ledger::load_or_create_key(&key, &format!("key/{}/{}", cli.seed, key.display()))?;
            let mut l = Ledger::open(&state)?;
            let real = real_id.unwrap_or_else(|| prefix.to_string());
            let height = l.register(&prefix, &real, &key)?;
            Ok(json!({ "registered": prefix.to_string(), "height": height }).to_string() + "\n")
        }
        Command::Publish {
            name,
            file,
            key,
            state,
            locator,
        } => {
            let name = parse_id(&name)?;
            let locator = parse_id(&locator)?;
            let key =
                ledger::load_or_create_key(&key, &format!("key/{}/{}", cli.seed, key.display()))?;
            let bytes = fs::read(&file)?;
            let mut l = Ledger::open(&state)?;
            let (rec, height) = l.publish(&name, &bytes, &locator, &key)?;
            Ok(json!({
                "published": name.to_string(),
                "hash": rec.content_hash.to_hex(),
                "bytes": bytes.len(),
                "height": height,
            })
            .to_string()
                + "\n")
        }
        Command::Query { name, state, save } => {
            let name = parse_id(&name)?;
            let l = Ledger::open(&state)?;
            let q = l.query(&name)?;
            if let Some(p) = &save {
                fs::write(p, &q.bytes)?;
            }
            Ok(json!({
                "name": name.to_string(),
                "bytes": q.bytes.len(),
                "hash": q.record.content_hash.to_hex(),
                "publisher": q.record.publisher.to_hex(),
                "locator": q.record.locator.to_string(),
                "height": q.height,
                "verified": true,
            })
            .to_string()
                + "\n")
        }
        Command::Scenario { kind, size } => cmd_scenario(&cli, &kind, size),
        Command::BenchFib { sizes } => {
            let out = out_dir(&cli)?;
            let rows = bench::bench_fib(&sizes, cli.seed);
            let csv = bench::bench_csv(&rows);
            fs::write(out.join("bench-fib.csv"), &csv)?;
            let mut args = vec!["bench-fib".to_string()];
            args.extend(sizes.iter().map(u64::to_string));
            manifest(
                &cli,
                args,
                vec![],
                vec!["bench-fib.csv".into()],
                sizes.iter().map(u64::to_string).collect(),
            )
            .write(&out)?;
            Ok(csv)
        }
        Command::Cap {
            topology,
            samples,
            exact,
        } => {
            let out = out_dir(&cli)?;
            let text = fs::read_to_string(&topology)?;
            let topo = Topology::parse(&text).map_err(|e| CliError::Module(e.to_string()))?;
            let row = bench::cap_report(&topo, samples, cli.seed, exact)?;
            fs::write(out.join("topology.txt"), &text)?;
            fs::write(out.join("cap.csv"), row.csv())?;
            let mut args = vec![
                "cap".into(),
                "topology.txt".into(),
                "--samples".into(),
                samples.to_string(),
            ];
            if exact {
                args.push("--exact".into());
            }
            manifest(
                &cli,
                args,
                vec!["topology.txt".into()],
                vec!["cap.csv".into()],
                vec![],
            )
            .write(&out)?;
            Ok(row.csv())
        }
        Command::ChainDump {
            state: Some(state), ..
        } => Ok(Ledger::open(&state)?.dump()),
        Command::ChainDump {
            state: None,
            blocks,
            silent,
        } => {
            let out = out_dir(&cli)?;
            let cfg = PovConfig {
                blocks,
                silent,
                seed: cli.seed,
                ..PovConfig::default()
            };
            let (report, net) = run_pov(cfg).map_err(|e| CliError::Module(e.to_string()))?;
            let mut dump = String::new();
            for b in net.world.node(0).chain.blocks() {
                dump.push_str(&b.dump_line());
                dump.push('\n');
            }
            fs::write(out.join("chain.txt"), &dump)?;
            fs::write(out.join("pov-metrics.csv"), net.metrics_csv())?;
            let summary = json!({
                "blocks": blocks,
                "silent": silent,
                "finished": report.finished,
                "forkless": report.forkless,
                "min_votes": report.min_votes,
                "committee": report.committee,
                "heights": report.heights,
                "ticks": report.ticks,
                "txs_committed": report.txs_committed,
                "txs_rejected": report.txs_rejected,
            });
            fs::write(out.join("pov.json"), summary.to_string() + "\n")?;
            let args = vec![
                "chain-dump".into(),
                "--blocks".into(),
                blocks.to_string(),
                "--silent".into(),
                silent.to_string(),
            ];
            let outputs = vec![
                "chain.txt".into(),
                "pov-metrics.csv".into(),
                "pov.json".into(),
            ];
            manifest(&cli, args, vec![], outputs, vec![]).write(&out)?;
            Ok(summary.to_string() + "\n")
        }
        Command::Replay { manifest } => replay(&manifest, cli.out.as_deref()),
    }
}

fn parse_id(s: &str) -> Result<Identifier, CliError> {
    s.parse().map_err(CliError::Identifier)
}

fn out_dir(cli: &Cli) -> Result<PathBuf, CliError> {
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&out)?;
    Ok(out)
}

fn manifest(
    cli: &Cli,
    args: Vec<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    selected: Vec<String>,
) -> RunManifest {
    RunManifest {
        command: args[0].clone(),
        args,
        seed: cli.seed,
        inputs,
        outputs,
        selected,
    }
}

fn load_config(cli: &Cli) -> Result<(Config, String), CliError> {
    match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let cfg = text
                .parse::<Config>()
                .map_err(|e| CliError::Module(format!("{}: {e}", p.display())))?;
            Ok((cfg, text))
        }
        None => Ok((ten_site_fixture(), min_net::scenario::TEN_SITE.to_string())),
    }
}

fn cmd_scenario(cli: &Cli, kind: &str, size: usize) -> Result<String, CliError> {
    let out = out_dir(cli)?;
    let (cfg, text) = load_config(cli)?;
    fs::write(out.join("config.net"), &text)?;
    let mut outputs = Vec::new();
    let mut selected = Vec::new();
    let mut stdout = String::new();
    let module = |e: min_net::ScenarioError| CliError::Module(e.to_string());
    match kind.to_ascii_lowercase().as_str() {
        "bottleneck" => {
            let b = run_bottleneck(&cfg, size, cli.seed).map_err(module)?;
            fs::write(out.join("bottleneck.csv"), b.csv())?;
            outputs.push("bottleneck.csv".into());
            selected.push("bottleneck".into());
            stdout = b.csv();
        }
        "workload" => {
            let mut net =
                Network::build(&cfg, cli.seed).map_err(|e| CliError::Module(e.to_string()))?;
            net.run(min_net::scenario::MAX_TICKS);
            let mut csv =
                String::from("node,target,complete,bytes,start,end,retransmissions,digest\n");
            for f in 0..net.flow_count() {
                let r = net.flow(f);
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.node,
                    r.target,
                    r.complete,
                    r.bytes,
                    r.start,
                    r.end.map(|e| e.to_string()).unwrap_or_default(),
                    r.retransmissions,
                    r.digest
                ));
            }
            fs::write(out.join("flows.csv"), &csv)?;
            fs::write(out.join("metrics.csv"), net.metrics_csv())?;
            outputs.extend(["flows.csv".into(), "metrics.csv".into()]);
            selected.push("workload".into());
            stdout = csv;
        }
        _ => {
            let kinds: Vec<ScenarioKind> = if kind.eq_ignore_ascii_case("all") {
                ScenarioKind::ALL.to_vec()
            } else {
                vec![kind.parse().map_err(CliError::Usage)?]
            };
            let mut csv = format!("{}\n", TransferReport::CSV_HEADER);
            for k in kinds {
                let (r, net) = run_scenario(k, &cfg, size, cli.seed).map_err(module)?;
                if !r.hash_ok() {
                    return Err(CliError::Integrity(format!("{k} delivery")));
                }
                csv.push_str(&r.csv_row());
                csv.push('\n');
                let links = format!("links-{}.csv", k.as_str());
                let metrics = format!("metrics-{}.csv", k.as_str());
                fs::write(out.join(&links), r.links_csv())?;
                fs::write(out.join(&metrics), net.metrics_csv())?;
                outputs.extend([links, metrics]);
                selected.push(k.as_str().to_string());
            }
            fs::write(out.join("scenario.csv"), &csv)?;
            outputs.insert(0, "scenario.csv".into());
            stdout.push_str(&csv);
        }
    }
    let args = vec![
        "scenario".into(),
        kind.to_string(),
        "--size".into(),
        size.to_string(),
        "--config".into(),
        "config.net".into(),
    ];
    manifest(cli, args, vec!["config.net".into()], outputs, selected).write(&out)?;
    Ok(stdout)
}

/// Re-runs the manifest at `path` with inputs taken from its directory.
pub fn replay(path: &Path, out: Option<&Path>) -> Result<String, CliError> {
    let m = RunManifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| base.join("replay"));
    if out == base {
        return Err(CliError::Usage(
            "replay needs an output directory other than the original".into(),
        ));
    }
    let mut args = vec!["min".to_string()];
    for a in &m.args {
        if m.inputs.contains(a) {
            args.push(base.join(a).to_string_lossy().into_owned());
        } else {
            args.push(a.clone());
        }
    }
    args.extend(["--seed".into(), m.seed.to_string()]);
    args.extend(["--out".into(), out.to_string_lossy().into_owned()]);
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::Usage(e.to_string()))?;
    if matches!(cli.command, Command::Replay { .. }) {
        return Err(CliError::Usage(
            "a manifest cannot replay another manifest".into(),
        ));
    }
    run(cli)
}
