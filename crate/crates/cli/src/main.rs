//! `covi`: run simulations, scenario comparisons, the protocol demo and
//! aggregate exports.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use covi_core::aggregation::{lump_small_zones, write_flowmap_csv, write_heatmap_csv, Aggregator};
use covi_core::metrics::{self, mean_post_rt, validation_report};
use covi_core::risk::Quantizer;
use covi_core::sim::{write_encounters_csv, Scenario, ScenarioKind, SimOptions, Simulation};
use covi_core::transport::actors::{run_loopback_demo, DemoOptions};
use covi_core::{Error, SimConfig};

mod exit {
    pub const CONFIG: u8 = 3;
    pub const IO: u8 = 4;
    pub const CONVERGENCE: u8 = 5;
    pub const NETWORK: u8 = 6;
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Convergence(String),
    #[error("{0}")]
    Network(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io(_) => exit::IO,
            CliError::Convergence(_) => exit::CONVERGENCE,
            CliError::Network(_) => exit::NETWORK,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::ConfigParse(_) | Error::Domain(_) => CliError::Config(e.to_string()),
            Error::Io(_) | Error::Csv(_) => CliError::Io(e.to_string()),
            _ => CliError::Network(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "covi", version, about = "Agent-based epidemic simulator with private risk messaging")]
struct Cli {
    /// Worker threads for multi-run commands (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run document; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its metrics, infection tree and validation report.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "unmitigated")]
        scenario: ScenarioKind,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Distancing strength after the intervention day.
        #[arg(long)]
        distancing: Option<f64>,
        /// Also write every encounter to encounters.csv.
        #[arg(long)]
        encounters: bool,
    },
    /// Run all scenarios under equalized mobility over several seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds or a half-open range `a..b`.
        #[arg(long, default_value = "0..5")]
        seeds: String,
    },
    /// Drive mix servers and the mailbox over loopback TCP.
    ProtocolDemo {
        #[arg(long, default_value_t = 3)]
        servers: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 100)]
        messages: usize,
        #[arg(long, default_value_t = 4)]
        canaries: usize,
        /// The first mix drops everything not from one chosen sender.
        #[arg(long)]
        drop_attack: bool,
        /// Replace encryption with framing only; output is deterministic.
        #[arg(long)]
        null_crypto: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the deposit transcript to this file.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run the risk-app scenario and export k-anonymous heat and flow maps.
    AggregateExport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "risk_app")]
        scenario: ScenarioKind,
    },
    /// Refit quantizer thresholds to a fixed point and report the unmitigated R_t.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "0..5")]
        seeds: String,
        #[arg(long, default_value_t = 20)]
        max_iter: u32,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_digest: String,
    seeds: Vec<u64>,
    scenario: Option<String>,
    code_version: &'static str,
    outputs: Vec<String>,
    wall_clock_secs: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

fn load_config(path: Option<&Path>) -> CliResult<SimConfig> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Ok(SimConfig::from_toml(&text)?)
        }
    }
}

fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::Config(format!("invalid seed list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn create(dir: &Path, name: &str, outputs: &mut Vec<String>) -> CliResult<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    outputs.push(name.to_string());
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, outputs: &mut Vec<String>) -> CliResult<()> {
    let w = create(dir, name, outputs)?;
    serde_json::to_writer_pretty(w, value).map_err(|e| CliError::io(&dir.join(name), e))
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn finish(dir: &Path, mut manifest: Manifest<'_>, started: Instant) -> CliResult<()> {
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.outputs.push("manifest.json".into());
    let path = dir.join("manifest.json");
    let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &manifest).map_err(|e| CliError::io(&path, e))
}

fn manifest<'a>(command: &'a str, cfg: &SimConfig, seeds: Vec<u64>, scenario: Option<String>) -> Manifest<'a> {
    Manifest {
        command,
        config_digest: cfg.digest(),
        seeds,
        scenario,
        code_version: env!("CARGO_PKG_VERSION"),
        outputs: Vec::new(),
        wall_clock_secs: 0.0,
        warnings: Vec::new(),
    }
}

fn scenario_for(cfg: &SimConfig, kind: ScenarioKind, distancing: Option<f64>) -> Scenario {
    Scenario::new(kind, distancing.unwrap_or(match kind {
        ScenarioKind::SocialDistancing => cfg.scenario.distancing_reference,
        _ => 0.0,
    }))
}

fn simulate(common: &Common, kind: ScenarioKind, seed: Option<u64>, distancing: Option<f64>, encounters: bool) -> CliResult<()> {
    let started = Instant::now();
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(s) = seed {
        cfg.world.seed = s;
    }
    let scenario = scenario_for(&cfg, kind, distancing);
    let options = SimOptions { keep_encounters: encounters, ..SimOptions::for_scenario(kind) };
    let sim = Simulation::new(&cfg, scenario, options)?;
    let world = sim.world().clone();
    let run = sim.run();
    let dir = &common.out;
    prepare_dir(dir)?;
    let mut m = manifest("simulate", &cfg, vec![cfg.world.seed], Some(kind.name().into()));
    run.write_metrics_csv(create(dir, "metrics.csv", &mut m.outputs)?)?;
    run.tree.write_csv(create(dir, "infection_tree.csv", &mut m.outputs)?)?;
    write_json(dir, "validation.json", &validation_report(std::slice::from_ref(&run)), &mut m.outputs)?;
    if encounters {
        write_encounters_csv(&world, &run.encounters, create(dir, "encounters.csv", &mut m.outputs)?)?;
    }
    eprintln!(
        "{}: {} cases by day {}, mean post-intervention R_t {}",
        kind.name(),
        run.final_cases(),
        run.daily.len(),
        mean_post_rt(&run.daily, run.intervention_day).map_or("n/a".into(), |r| format!("{r:.2}"))
    );
    finish(dir, m, started)
}

#[derive(Serialize)]
struct CompareSummary<'a> {
    seeds: &'a [u64],
    ordering_verdict: String,
    ordering_holds: Option<bool>,
    risk_app_rt_below_binary_2: Option<bool>,
    equalization: &'a metrics::Equalization,
    scenarios: &'a [metrics::ScenarioSummary],
}

fn compare(common: &Common, seeds: &str) -> CliResult<()> {
    let started = Instant::now();
    let cfg = load_config(common.config.as_deref())?;
    let seeds = parse_seeds(seeds)?;
    let cmp = metrics::compare(&cfg, &ScenarioKind::COMPARED, &seeds)?;
    let dir = &common.out;
    prepare_dir(dir)?;
    let mut m = manifest("compare", &cfg, seeds.clone(), None);
    if !cmp.equalization.converged {
        let w = format!("mobility equalization did not converge; largest gap {:.4}", cmp.equalization.max_gap());
        eprintln!("warning: {w}");
        m.warnings.push(w);
    }

    let mut plot = csv_writer(create(dir, "plot.csv", &mut m.outputs)?);
    plot.write_record(["day", "scenario", "cumulative_cases", "rt"]).map_err(Error::from)?;
    for kind in ScenarioKind::COMPARED {
        let Some(runs) = cmp.runs.get(&kind) else { continue };
        let days = runs.iter().map(|r| r.daily.len()).min().unwrap_or(0);
        for d in 0..days {
            let n = runs.len() as f64;
            let cases = runs.iter().map(|r| f64::from(r.daily[d].cumulative_cases)).sum::<f64>() / n;
            let rt = runs.iter().map(|r| r.daily[d].rt_estimate).sum::<f64>() / n;
            plot.write_record([d.to_string(), kind.name().to_string(), format!("{cases:.3}"), format!("{rt:.4}")]).map_err(Error::from)?;
        }
        for r in runs {
            r.write_metrics_csv(create(dir, &format!("metrics_{}_seed{}.csv", kind.name(), r.seed), &mut m.outputs)?)?;
        }
    }
    plot.flush().map_err(|e| CliError::io(&dir.join("plot.csv"), e))?;

    let rt_of = |k: ScenarioKind| cmp.summaries.iter().find(|s| s.scenario == k).and_then(|s| s.mean_post_rt);
    let rt_check = match (rt_of(ScenarioKind::RiskApp), rt_of(ScenarioKind::BinaryTracing { order: 2 })) {
        (Some(a), Some(b)) if seeds.len() >= 3 => Some(a < b),
        _ => None,
    };
    let verdict = match cmp.ordering_holds {
        None => "insufficient seeds".to_string(),
        Some(true) => "holds".to_string(),
        Some(false) => "violated".to_string(),
    };
    let summary = CompareSummary {
        seeds: &seeds,
        ordering_verdict: verdict.clone(),
        ordering_holds: cmp.ordering_holds,
        risk_app_rt_below_binary_2: rt_check,
        equalization: &cmp.equalization,
        scenarios: &cmp.summaries,
    };
    write_json(dir, "summary.json", &summary, &mut m.outputs)?;
    for s in &cmp.summaries {
        eprintln!(
            "{:18} distancing {:.3}  cases {:7.1}  R_t {:>5}  contacts {:.2}",
            s.scenario.name(),
            s.distancing,
            s.mean_final_cases,
            s.mean_post_rt.map_or("n/a".into(), |r| format!("{r:.2}")),
            s.mobility
        );
    }
    eprintln!("ordering: {verdict}");
    finish(dir, m, started)
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

#[allow(clippy::too_many_arguments)]
fn protocol_demo(
    servers: usize,
    batch: usize,
    messages: usize,
    canaries: usize,
    drop_attack: bool,
    null_crypto: bool,
    seed: u64,
    transcript: Option<&Path>,
) -> CliResult<()> {
    let opts = DemoOptions { servers, batch_threshold: batch, null_crypto, messages, canaries, drop_attack, seed };
    let report = run_loopback_demo(&opts).map_err(|e| match e {
        Error::Config { .. } => CliError::Config(e.to_string()),
        other => CliError::Network(other.to_string()),
    })?;
    println!("messages delivered: {}/{}", report.messages_delivered, report.messages_sent);
    println!("canaries delivered: {}/{}", report.canaries_delivered, report.canaries_sent);
    println!("alarms: {}", report.alarms);
    for mix in &report.mixes {
        println!("mix {}: {} batches, {} dropped", mix.position, mix.batches, mix.dropped);
    }
    println!("order correlation: {:.3}", report.order_correlation);
    println!("fixed points: {:.3}", report.fixed_points);
    if let Some(p) = transcript {
        let mut text = report.transcript.join("\n");
        text.push('\n');
        fs::write(p, text).map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

fn aggregate_export(common: &Common, seed: Option<u64>, kind: ScenarioKind) -> CliResult<()> {
    let started = Instant::now();
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(s) = seed {
        cfg.world.seed = s;
    }
    let options = SimOptions { collect_packets: true, ..SimOptions::for_scenario(kind) };
    let options = if options.phones == covi_core::sim::PhoneMode::Off {
        SimOptions { phones: covi_core::sim::PhoneMode::Shadow, ..options }
    } else {
        options
    };
    let sim = Simulation::new(&cfg, scenario_for(&cfg, kind, None), options)?;
    let zones = lump_small_zones(&sim.world().zones);
    let run = sim.run();
    let mut agg = Aggregator::new(zones);
    for p in &run.heat_packets {
        agg.ingest_heat(*p);
    }
    for p in &run.flow_packets {
        agg.ingest_flow(*p);
    }
    let (mut heat, mut flow) = (Vec::new(), Vec::new());
    let mut suppressed = 0;
    for day in agg.days() {
        let h = agg.emit_heatmap(day);
        let f = agg.emit_flowmap(day);
        suppressed += h.suppressed + f.suppressed;
        heat.extend(h.rows);
        flow.extend(f.rows);
    }
    let dir = &common.out;
    prepare_dir(dir)?;
    let mut m = manifest("aggregate-export", &cfg, vec![cfg.world.seed], Some(kind.name().into()));
    write_heatmap_csv(create(dir, "heatmap.csv", &mut m.outputs)?, &heat)?;
    write_flowmap_csv(create(dir, "flowmap.csv", &mut m.outputs)?, &flow)?;
    eprintln!("{} heat rows, {} flow rows, {} groups suppressed", heat.len(), flow.len(), suppressed);
    finish(dir, m, started)
}

fn calibrate(common: &Common, seeds: &str, max_iter: u32) -> CliResult<()> {
    let started = Instant::now();
    let cfg = load_config(common.config.as_deref())?;
    let seeds = parse_seeds(seeds)?;
    let start = match &cfg.risk.thresholds {
        Some(t) => Quantizer::new(t.clone())?,
        None => Quantizer::shipped(),
    };
    let cal = metrics::calibrate_thresholds(&cfg, start, &seeds, max_iter)?;
    let rt = metrics::unmitigated_rt(&cfg, &seeds)?;
    let dir = &common.out;
    prepare_dir(dir)?;
    let mut m = manifest("calibrate", &cfg, seeds, Some("unmitigated".into()));
    let path = dir.join("quantizer_thresholds.txt");
    fs::write(&path, cal.quantizer.to_text()).map_err(|e| CliError::io(&path, e))?;
    m.outputs.push("quantizer_thresholds.txt".into());
    eprintln!("thresholds after {} iterations (last move {:.2e}); unmitigated R_t {rt:.3}", cal.iterations, cal.last_change);
    let converged = cal.last_change < 1e-3;
    if !converged {
        m.warnings.push(format!("thresholds moved {:.2e} in the last iteration", cal.last_change));
    }
    finish(dir, m, started)?;
    if converged {
        Ok(())
    } else {
        Err(CliError::Convergence(format!("threshold iteration did not settle in {max_iter} rounds")))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { common, scenario, seed, distancing, encounters } => simulate(&common, scenario, seed, distancing, encounters),
        Command::Compare { common, seeds } => compare(&common, &seeds),
        Command::ProtocolDemo { servers, batch, messages, canaries, drop_attack, null_crypto, seed, transcript } => {
            protocol_demo(servers, batch, messages, canaries, drop_attack, null_crypto, seed, transcript.as_deref())
        }
        Command::AggregateExport { common, seed, scenario } => aggregate_export(&common, seed, scenario),
        Command::Calibrate { common, seeds, max_iter } => calibrate(&common, &seeds, max_iter),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
