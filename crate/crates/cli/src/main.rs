use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dofnet::clustering::SearchError;
use dofnet::dof::{cluster_dof, DofError};
use dofnet::graph::{Cluster, NodeId};
use dofnet::mgrid::analysis::containment_report;
use dofnet::mgrid::export::{write_event_log, write_flux_csv, write_labels, write_timeseries_csv};
use dofnet::mgrid::{run_scenario, select_cluster, Algorithm, Event, Scenario, Selection, SimError, TriggerPolicy};
use dofnet::redistribution::RedistributionSolution;
use dofnet::scenario::{parse_graph, parse_scenario, ScenarioError};

#[derive(Parser)]
#[command(
    name = "dofnet",
    version,
    about = "Dof-based cluster detection and local redistribution for DC microgrids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dof and deficiency of one cluster.
    Dof {
        /// Edge list or scenario file.
        #[arg(long)]
        graph: PathBuf,
        /// Node labels, comma separated.
        #[arg(long)]
        cluster: String,
    },
    /// Grow a cluster around an overloaded node at the post-disturbance steady state.
    Cluster {
        #[command(flatten)]
        args: ClusterArgs,
        #[arg(long, value_enum, default_value_t = AlgoArg::Dof)]
        algo: AlgoArg,
    },
    /// Same as `cluster --algo both`.
    Compare {
        #[command(flatten)]
        args: ClusterArgs,
    },
    /// Run a scenario and write CSV trajectories plus an event log.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Integrator step (s).
        #[arg(long)]
        h: Option<f64>,
        /// Simulated time (s).
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the selector configured in the scenario.
        #[arg(long, value_enum)]
        algo: Option<AlgoArg>,
        /// Saturation-risk threshold around a duty of one half.
        #[arg(long)]
        threshold: Option<f64>,
        /// Saturation-risk dwell time (s).
        #[arg(long)]
        dwell: Option<f64>,
        /// Settling window before containment is measured (s).
        #[arg(long, default_value_t = 0.3)]
        settle: f64,
    },
}

#[derive(clap::Args)]
struct ClusterArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overloaded node label; defaults to the first node in the schedule.
    #[arg(long)]
    overload: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Dof,
    Ksteps,
    Both,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Dof => Algorithm::Dof,
            AlgoArg::Ksteps => Algorithm::Ksteps,
            AlgoArg::Both => Algorithm::Both,
        }
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

const USAGE: u8 = 1;
const ASSUMPTION: u8 = 2;
const INFEASIBLE: u8 = 3;
const NUMERICAL: u8 = 4;

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match &e {
            ScenarioError::Graph(_) => ASSUMPTION,
            _ => USAGE,
        };
        fail(code, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(USAGE, format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    parse_scenario(&read(path)?).map_err(|e| match e {
        ScenarioError::Sim(SimError::InvalidScenario(m)) if m.contains("not connected") => fail(ASSUMPTION, m),
        e => e.into(),
    })
}

fn join(labels: &[String], nodes: &[NodeId]) -> String {
    nodes.iter().map(|&v| labels[v].as_str()).collect::<Vec<_>>().join(",")
}

fn cmd_dof(graph: &Path, cluster: &str) -> Result<(), Failure> {
    let lg = parse_graph(&read(graph)?)?;
    let members = lg.parse_nodes(cluster)?;
    let c = Cluster::new(members).map_err(|e| fail(ASSUMPTION, e.to_string()))?;
    let r = cluster_dof(&lg.graph, &c).map_err(|e: DofError| fail(ASSUMPTION, e.to_string()))?;
    println!("cluster={}", join(&lg.labels, c.members()));
    println!(
        "size={} bridge_rank={} dof={} deficiency={}",
        r.cluster_size, r.bridge_rank, r.dof, r.deficiency
    );
    Ok(())
}

fn overload_node(s: &Scenario, label: Option<&str>) -> Result<NodeId, Failure> {
    match label {
        Some(l) => s
            .node_by_label(l)
            .ok_or_else(|| fail(USAGE, format!("unknown node label {l:?}"))),
        None => s
            .schedule
            .first()
            .map(|l| l.node)
            .ok_or_else(|| fail(USAGE, "scenario has no schedule; pass --overload")),
    }
}

fn print_solution(s: &Scenario, sol: &RedistributionSolution) {
    let label = |v: NodeId| s.labels[v].clone();
    print!("{}", sol.render(&label));
}

fn search_failure<E: std::fmt::Display>(e: &SearchError<E>) -> (u8, String) {
    match e {
        SearchError::Exhausted { .. } => (INFEASIBLE, e.to_string()),
        SearchError::Oracle { .. } => (NUMERICAL, e.to_string()),
        SearchError::Clustering(_) => (ASSUMPTION, e.to_string()),
    }
}

fn report_selection(s: &Scenario, sel: &Selection) -> Result<(), Failure> {
    let labels = &s.labels;
    let mut worst: Option<(u8, String)> = None;
    let mut note = |f: (u8, String)| {
        if worst.as_ref().is_none_or(|w| f.0 > w.0) {
            worst = Some(f);
        }
    };
    if let Some(dof) = &sel.dof {
        println!("dof-based growth from {}:", labels[sel.overload]);
        for t in match dof {
            Ok(o) => &o.trace[..],
            Err(e) => e.trace(),
        } {
            println!(
                "  step {}: +{} ({}) dof={}",
                t.step, labels[t.node], t.rule, t.dof_after
            );
        }
        match dof {
            Ok(o) => {
                println!(
                    "  cluster {{{}}} size={} feasible",
                    join(labels, o.cluster.members()),
                    o.cluster.len()
                );
                if sel.ksteps.is_none() {
                    print_solution(s, &o.solution);
                }
            }
            Err(e) => {
                if let SearchError::Exhausted { last_cluster, .. } = e {
                    println!(
                        "  cluster {{{}}} size={} infeasible",
                        join(labels, last_cluster.members()),
                        last_cluster.len()
                    );
                }
                note(search_failure(e));
            }
        }
    }
    if let Some(ks) = &sel.ksteps {
        println!("k-steps baseline from {}:", labels[sel.overload]);
        match ks {
            Ok(o) => {
                println!(
                    "  k={} cluster {{{}}} size={} feasible",
                    o.iterations,
                    join(labels, o.cluster.members()),
                    o.cluster.len()
                );
                if sel.dof.is_none() {
                    print_solution(s, &o.solution);
                }
            }
            Err(e) => {
                if let SearchError::Exhausted { last_cluster, .. } = e {
                    println!(
                        "  cluster {{{}}} size={} infeasible",
                        join(labels, last_cluster.members()),
                        last_cluster.len()
                    );
                }
                note(search_failure(e));
            }
        }
    }
    if let (Some(dof), Some(ks)) = (&sel.dof, &sel.ksteps) {
        println!();
        println!(
            "{:<10} {:>5} {:>10} {:>9}",
            "algorithm", "size", "iterations", "feasible"
        );
        let row = |name: &str, size: Option<usize>, it: usize| {
            let (size, ok) = size.map_or(("-".to_string(), "no"), |n| (n.to_string(), "yes"));
            println!("{name:<10} {size:>5} {it:>10} {ok:>9}");
        };
        match dof {
            Ok(o) => row("dof", Some(o.cluster.len()), o.trace.len()),
            Err(e) => row("dof", None, e.trace().len()),
        }
        match ks {
            Ok(o) => row("ksteps", Some(o.cluster.len()), o.iterations),
            Err(_) => row("ksteps", None, s.secondary.max_k),
        }
    }
    match worst {
        Some((code, message)) => Err(fail(code, message)),
        None => Ok(()),
    }
}

fn cmd_cluster(args: &ClusterArgs, algo: Algorithm) -> Result<(), Failure> {
    let s = load_scenario(&args.scenario)?;
    let overload = overload_node(&s, args.overload.as_deref())?;
    let loads = s.final_loads();
    let net = s
        .network(&s.references, &loads)
        .map_err(|e| fail(ASSUMPTION, e.to_string()))?;
    let duty = net.at_references().duty;
    let availability = s.availability(&loads, &duty);
    let sel = select_cluster(&s, net, &availability, overload, algo);
    report_selection(&s, &sel)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| fail(USAGE, format!("{}: {e}", path.display())))
}

fn io_fail(e: std::io::Error) -> Failure {
    fail(USAGE, format!("write failed: {e}"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    scenario: &Path,
    out: &Path,
    h: Option<f64>,
    horizon: Option<f64>,
    seed: Option<u64>,
    algo: Option<AlgoArg>,
    threshold: Option<f64>,
    dwell: Option<f64>,
    settle: f64,
) -> Result<(), Failure> {
    let mut s = load_scenario(scenario)?;
    if let Some(h) = h {
        s.step = h;
    }
    if let Some(t) = horizon {
        s.horizon = t;
    }
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(a) = algo {
        s.secondary.algorithm = a.into();
    }
    if let TriggerPolicy::SaturationRisk {
        threshold: thr,
        dwell: dw,
    } = &mut s.secondary.policy
    {
        *thr = threshold.unwrap_or(*thr);
        *dw = dwell.unwrap_or(*dw);
    }
    s.validate().map_err(|e| fail(USAGE, e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| fail(USAGE, format!("{}: {e}", out.display())))?;

    let (output, abort) = match run_scenario(&s) {
        Ok(o) => (o, None),
        Err(a) => (a.partial, Some(a.error)),
    };
    write_timeseries_csv(create(out, "timeseries.csv")?, &output.series, &s.labels).map_err(io_fail)?;
    write_flux_csv(create(out, "flux.csv")?, &output.series, &s.graph, &s.labels).map_err(io_fail)?;
    write_event_log(create(out, "events.log")?, &output.events, &s.labels).map_err(io_fail)?;
    write_labels(create(out, "labels.csv")?, &s.labels).map_err(io_fail)?;

    println!(
        "simulated {} samples at h={} s; {} events",
        output.series.len(),
        s.step,
        output.events.len()
    );
    for e in &output.events {
        match e {
            Event::Trigger { t, node, duty } => println!("t={t:.4} trigger at {} (u={duty:.4})", s.labels[*node]),
            Event::Cluster {
                t,
                algorithm,
                members,
                feasible,
                ..
            } => println!(
                "t={t:.4} {algorithm} cluster size={} {} {{{}}}",
                members.len(),
                if *feasible { "feasible" } else { "infeasible" },
                join(&s.labels, members)
            ),
            Event::Apply {
                t,
                cost,
                containment_residual,
                ..
            } => println!(
                "t={t:.4} references applied: cost={cost:.6e} containment_residual={containment_residual:.3e} A"
            ),
            Event::NoOverload { t } => println!("t={t:.4} scheduled check: no overload"),
            Event::LoadStep { .. } => {}
        }
    }
    if let Some(r) = containment_report(&s, &output, settle) {
        println!(
            "after t={:.4}: max external |dV|={:.3e} V, max external |dxi|={:.3e} A, overload |V-Vref|={:.3e} V",
            r.settle_from, r.max_external_voltage_deviation, r.max_external_flux_deviation, r.overload_voltage_error
        );
    }
    let mut stdout = std::io::stdout();
    let _ = stdout.flush();
    match abort {
        Some(e) => Err(fail(
            NUMERICAL,
            format!("simulation aborted: {e}; partial output written"),
        )),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Dof { graph, cluster } => cmd_dof(&graph, &cluster),
        Command::Cluster { args, algo } => cmd_cluster(&args, algo.into()),
        Command::Compare { args } => cmd_cluster(&args, Algorithm::Both),
        Command::Simulate {
            scenario,
            out,
            h,
            horizon,
            seed,
            algo,
            threshold,
            dwell,
            settle,
        } => cmd_simulate(&scenario, &out, h, horizon, seed, algo, threshold, dwell, settle),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
