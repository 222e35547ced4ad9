use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use leap_core::alloc::{self, AllocationPlan, GpConfig};
use leap_core::experiment::{self, AccuracyOptions, AccuracyPoint, ExperimentOptions, ExperimentReport, Method};
use leap_core::game::{self, GameOptions, GameTrace, Partition, PartitionRecord};
use leap_core::hfl::{self, DataSpec, HflConfig, SyntheticDataset};
use leap_core::netmodel::NetworkConfig;
use leap_core::report::{self, Format};
use leap_core::scenario::{self, GeneratorSpec, LabelSkew, Scenario, SCHEMA_VERSION};
use leap_core::Execution;
use serde::{Deserialize, Serialize};

/// Exit code for an infeasible plan under `--strict`.
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(name = "leap", version, about = "Coalition formation and resource allocation for hierarchical federated learning")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Form edge coalitions with the switch game.
    Coalition {
        #[command(flatten)]
        input: ScenarioInput,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = GameOptions::default().max_iters)]
        max_iters: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Allocate bandwidth and power for a fixed partition.
    Allocate {
        #[command(flatten)]
        input: ScenarioInput,
        /// Partition file written by `coalition`.
        #[arg(long)]
        partition: PathBuf,
        #[command(flatten)]
        gp: GpArgs,
        /// Exit nonzero if any client misses the deadline.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train the synthetic model on a partition and record accuracy.
    Simulate {
        #[command(flatten)]
        input: ScenarioInput,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run LEAP against the baselines and write a report.
    Compare {
        #[command(flatten)]
        input: ScenarioInput,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated: leap, random_association, rb, rp, rb_rp, equal_split.
        #[arg(long, value_delimiter = ',', default_value = "leap,random_association,rb,rp,rb_rp,equal_split")]
        methods: Vec<Method>,
        #[command(flatten)]
        gp: GpArgs,
        /// Also train on synthetic data and record accuracy curves.
        #[arg(long)]
        accuracy: bool,
        #[command(flatten)]
        train: TrainArgs,
        /// Exit nonzero if the LEAP plan misses the deadline.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-emit, summarize and audit an existing report.
    Report {
        /// Report JSON written by `compare`.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "LEAP_OUT_DIR", default_value = "leap-out")]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: Format,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 50)]
    clients: usize,
    #[arg(long, default_value_t = 5)]
    edges: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Classes per client.
    #[arg(long, conflicts_with = "dirichlet")]
    shards: Option<usize>,
    /// Dirichlet concentration for label proportions.
    #[arg(long)]
    dirichlet: Option<f64>,
    #[arg(long, default_value_t = 16)]
    features: usize,
    /// Overall training deadline I, seconds.
    #[arg(long)]
    deadline: Option<f64>,
    #[arg(long)]
    tau_c: Option<u32>,
    #[arg(long)]
    tau_e: Option<u32>,
    #[arg(long)]
    tau_g: Option<u32>,
    /// Total uplink bandwidth, Hz.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Noise power spectral density, W/Hz.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
}

impl ScenarioArgs {
    fn generate(&self, seed: u64) -> Result<Scenario> {
        let d = NetworkConfig::default();
        let config = NetworkConfig {
            deadline: self.deadline.unwrap_or(d.deadline),
            tau_c: self.tau_c.unwrap_or(d.tau_c),
            tau_e: self.tau_e.unwrap_or(d.tau_e),
            tau_g: self.tau_g.unwrap_or(d.tau_g),
            total_bandwidth: self.bandwidth.unwrap_or(d.total_bandwidth),
            noise_power: self.noise.unwrap_or(d.noise_power),
            lambda1: self.lambda1.unwrap_or(d.lambda1),
            lambda2: self.lambda2.unwrap_or(d.lambda2),
            ..d
        };
        let skew = match (self.shards, self.dirichlet) {
            (_, Some(alpha)) => LabelSkew::Dirichlet(alpha),
            (Some(s), None) => LabelSkew::Shards(s),
            (None, None) => LabelSkew::Shards(2),
        };
        let spec = GeneratorSpec {
            seed,
            clients: self.clients,
            edges: self.edges,
            classes: self.classes,
            skew,
            features: self.features,
            ..GeneratorSpec::default()
        };
        Ok(scenario::generate_scenario(&spec, config)?)
    }
}

/// A scenario file, or generator flags when no file is given.
#[derive(Args, Clone)]
struct ScenarioInput {
    /// Scenario JSON written by `gen`.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Generator seed when no scenario file is given.
    #[arg(long, default_value_t = 0)]
    scenario_seed: u64,
    #[command(flatten)]
    generate: ScenarioArgs,
}

impl ScenarioInput {
    fn load(&self) -> Result<Scenario> {
        match &self.scenario {
            Some(path) => Scenario::load(path).with_context(|| format!("reading scenario {}", path.display())),
            None => self.generate.generate(self.scenario_seed),
        }
    }
}

#[derive(Args, Clone)]
struct GpArgs {
    /// Initial projected-gradient step.
    #[arg(long, default_value_t = GpConfig::default().step_size)]
    step_size: f64,
    #[arg(long, default_value_t = GpConfig::default().tolerance)]
    tolerance: f64,
    #[arg(long, default_value_t = GpConfig::default().max_iters)]
    gp_max_iters: usize,
}

impl GpArgs {
    fn config(&self) -> GpConfig {
        GpConfig {
            step_size: self.step_size,
            tolerance: self.tolerance,
            max_iters: self.gp_max_iters,
            ..GpConfig::default()
        }
    }
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// Global rounds of synthetic training.
    #[arg(long, default_value_t = HflConfig::default().tau_g)]
    rounds: u32,
    #[arg(long, default_value_t = HflConfig::default().learning_rate)]
    learning_rate: f64,
}

impl TrainArgs {
    fn options(&self, scenario: &Scenario) -> AccuracyOptions {
        AccuracyOptions {
            data: DataSpec {
                features: scenario.generator.features,
                ..DataSpec::default()
            },
            hfl: HflConfig {
                tau_g: self.rounds,
                learning_rate: self.learning_rate,
                ..HflConfig::default()
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    schema_version: u32,
    avg_js: f64,
    partition: PartitionRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    game_trace: Option<GameTrace>,
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    schema_version: u32,
    partition: PartitionRecord,
    plan: AllocationPlan,
}

#[derive(Serialize, Deserialize)]
struct AccuracyFile {
    schema_version: u32,
    partition: PartitionRecord,
    curve: Vec<AccuracyPoint>,
}

fn read_partition(path: &Path, scenario: &Scenario) -> Result<Partition> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading partition {}", path.display()))?;
    let file: PartitionFile = serde_json::from_str(&text).context("parsing partition file")?;
    if file.schema_version != SCHEMA_VERSION {
        bail!("partition file has schema version {}, expected {SCHEMA_VERSION}", file.schema_version);
    }
    Ok(Partition::from_record(&file.partition, scenario.label_counts())?)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    report::write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    write(dir, name, report::to_json(value)?.as_bytes())
}

fn accuracy_csv(curve: &[AccuracyPoint]) -> Result<Vec<u8>> {
    let mut out = format!("# schema_version: {SCHEMA_VERSION}\nround,accuracy,avg_js\n");
    for p in curve {
        out.push_str(&format!("{},{:?},{:?}\n", p.round, p.accuracy, p.avg_js));
    }
    Ok(out.into_bytes())
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:<20} {:>10} {:>12} {:>12} {:>12} {:>12} {:>9}",
        "method", "avg_js", "latency_s", "energy_j", "tx_energy_j", "utility", "feasible"
    );
    for r in &report.methods {
        let s = &r.summary;
        println!(
            "{:<20} {:>10.6} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>9}",
            r.method.name(),
            s.avg_js,
            s.latency,
            s.energy,
            s.tx_energy,
            s.utility,
            s.feasible
        );
        if let Some(acc) = r.final_accuracy() {
            println!("{:<20} final accuracy {acc:.4}", "");
        }
    }
    if let (Some(leap), Some(rbrp)) = (report.method(Method::Leap), report.method(Method::RbRp)) {
        if leap.summary.tx_energy > 0.0 {
            println!("rb_rp / leap transmission energy: {:.3}", rbrp.summary.tx_energy / leap.summary.tx_energy);
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Gen { seed, scenario, out } => {
            let s = scenario.generate(seed)?;
            if out.format == Format::Csv {
                bail!("scenarios are written as JSON only");
            }
            write_json(&out.out, "scenario.json", &s)?;
        }
        Command::Coalition {
            input,
            seed,
            max_iters,
            out,
        } => {
            let s = input.load()?;
            let initial = Partition::seeded_random(s.label_counts(), s.num_edges, s.config.js_denominator, seed)?;
            let (stable, trace) = game::run_coalition_formation(initial, GameOptions { max_iters, seed })?;
            println!(
                "avg_js {:.6} -> {:.6} after {} switches ({} samples, converged: {})",
                trace.initial_avg_js,
                stable.avg_js(),
                trace.accepted_count(),
                trace.iterations_used,
                trace.converged
            );
            let file = PartitionFile {
                schema_version: SCHEMA_VERSION,
                avg_js: stable.avg_js(),
                partition: stable.to_record(),
                game_trace: Some(trace.clone()),
            };
            write_json(&out.out, "partition.json", &file)?;
            if out.format == Format::Csv {
                write(&out.out, report::GAME_TRACE_CSV, &report::game_trace_csv(&trace)?)?;
            }
        }
        Command::Allocate {
            input,
            partition,
            gp,
            strict,
            out,
        } => {
            let s = input.load()?;
            let p = read_partition(&partition, &s)?;
            let plan = alloc::plan_full(&p, &s.clients, &s.config, &gp.config())?;
            let m = &plan.metrics.system;
            println!(
                "tx energy {:.4e} J, energy {:.4e} J, latency {:.4e} s, feasible {}",
                m.tx_energy, m.energy, m.latency, plan.feasible
            );
            if !plan.feasible {
                eprintln!("deadline missed by clients {:?}", plan.infeasible_clients);
            }
            let feasible = plan.feasible;
            let file = PlanFile {
                schema_version: SCHEMA_VERSION,
                partition: p.to_record(),
                plan,
            };
            write_json(&out.out, "plan.json", &file)?;
            if out.format == Format::Csv {
                let objective = file.plan.gp_trace.as_ref().map(|t| t.objective.clone()).unwrap_or_default();
                let mut csv = format!("# schema_version: {SCHEMA_VERSION}\niteration,objective\n");
                for (i, v) in objective.iter().enumerate() {
                    csv.push_str(&format!("{i},{v:?}\n"));
                }
                write(&out.out, report::GP_TRACE_CSV, csv.as_bytes())?;
            }
            if strict && !feasible {
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
        }
        Command::Simulate {
            input,
            partition,
            seed,
            train,
            out,
        } => {
            let s = input.load()?;
            let p = read_partition(&partition, &s)?;
            let opts = train.options(&s);
            let seeds = experiment::ExperimentSeeds::derive(seed);
            let data = SyntheticDataset::generate(&s.label_counts(), &opts.data, seeds.data)?;
            let run = hfl::run_hfl(&p, &data, &opts.hfl, seeds.training, exec)?;
            println!("final accuracy {:.4} (avg_js {:.6})", run.final_accuracy(), p.avg_js());
            let curve: Vec<AccuracyPoint> = run
                .accuracy
                .iter()
                .enumerate()
                .map(|(i, &accuracy)| AccuracyPoint {
                    round: i + 1,
                    accuracy,
                    avg_js: p.avg_js(),
                })
                .collect();
            match out.format {
                Format::Json => {
                    let file = AccuracyFile {
                        schema_version: SCHEMA_VERSION,
                        partition: p.to_record(),
                        curve,
                    };
                    write_json(&out.out, "accuracy.json", &file)?;
                }
                Format::Csv => {
                    write(&out.out, report::ACCURACY_CSV, &accuracy_csv(&curve)?)?;
                }
            }
        }
        Command::Compare {
            input,
            seed,
            methods,
            gp,
            accuracy,
            train,
            strict,
            out,
        } => {
            let s = input.load()?;
            let options = ExperimentOptions {
                seed,
                methods,
                gp: gp.config(),
                accuracy: accuracy.then(|| train.options(&s)),
                exec,
                ..ExperimentOptions::default()
            };
            let report = experiment::run_experiment(&s, &options)?;
            print_summary(&report);
            for path in report::emit_report(&report, &out.out, out.format)? {
                println!("wrote {}", path.display());
            }
            let leap_ok = report.method(Method::Leap).is_none_or(|r| r.plan.feasible);
            if strict && !leap_ok {
                eprintln!("LEAP plan misses the deadline");
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
        }
        Command::Report { input, out } => {
            let report = report::read_report(&input).with_context(|| format!("reading report {}", input.display()))?;
            print_summary(&report);
            let deviation = experiment::audit(&report)?;
            println!("audit: largest relative deviation {deviation:.3e}");
            for path in report::emit_report(&report, &out.out, out.format)? {
                println!("wrote {}", path.display());
            }
            if deviation > 1e-9 {
                bail!("report metrics do not match recomputation (deviation {deviation:.3e})");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
