use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qefb::filters::{arma1, design_lowpass_fir, ArmaBranch, ArmaFilter, DESIGN_GRID_POINTS};
use qefb::graph::{
    build_shift, generate_sensor_graph, load_graph, spectral_decompose, write_graph, Connectivity, Graph,
    ShiftOperator,
};
use qefb::harness::validate::{run_suite, Suite, ValidateOptions};
use qefb::harness::{emit_results, predict_scenario, run_experiment, Format, Scenario, ShiftSpec};
use qefb::{Error, Result};

#[derive(Parser)]
#[command(name = "qefb", version, about = "Quantization error feedback for distributed graph filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect graphs.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Design filters on a graph.
    #[command(subcommand)]
    Design(DesignCmd),
    /// Closed-form feedback plans and noise predictions for a scenario (JSON).
    Predict {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and write its result table.
    Simulate {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Output path; overrides the scenario's `output`. `-` is stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run oracle suites.
    Validate {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        /// Smaller instance counts and trial budgets.
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
    },
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Random geometric sensor graph as an edge list.
    Gen {
        #[arg(long, default_value_t = 64)]
        nodes: usize,
        /// Target edge count (spanning tree plus shortest pairs).
        #[arg(long, conflicts_with = "radius")]
        edges: Option<usize>,
        /// Connection radius on the unit square.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Size, connectivity and shift spectrum of a graph file.
    Info {
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "scaled-laplacian")]
        shift: ShiftArg,
    },
}

#[derive(Args)]
struct GraphArgs {
    /// Edge-list file.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum, default_value = "scaled-laplacian")]
    shift: ShiftArg,
}

#[derive(Subcommand)]
enum DesignCmd {
    /// Least-squares low-pass FIR taps.
    Fir {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 0.5)]
        cutoff: f64,
    },
    /// `(I + c S)^{-1}` as a one-branch ARMA filter, or a stability check of
    /// explicit branches.
    Arma {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, conflicts_with = "branches")]
        c: Option<f64>,
        /// Comma-separated `psi:phi` pairs.
        #[arg(long)]
        branches: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ShiftArg {
    Adjacency,
    Laplacian,
    ScaledLaplacian,
}

impl From<ShiftArg> for ShiftSpec {
    fn from(s: ShiftArg) -> Self {
        match s {
            ShiftArg::Adjacency => ShiftSpec::Adjacency,
            ShiftArg::Laplacian => ShiftSpec::Laplacian,
            ShiftArg::ScaledLaplacian => ShiftSpec::ScaledLaplacian,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SuiteArg {
    Kernel,
    Gramian,
    Optimality,
    Prediction,
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let record = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

fn write_out(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) if p.as_os_str() != "-" => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        }),
        _ => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: "-".into(),
            source: e,
        }),
    }
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn shift_of(args: &GraphArgs) -> Result<(Graph, ShiftOperator)> {
    let g = load_graph(&args.graph)?;
    let s = build_shift(&g, &ShiftSpec::from(args.shift).kind())?;
    Ok((g, s))
}

fn parse_branches(text: &str) -> Result<ArmaFilter> {
    let bad = |part: &str| Error::Unsupported(format!("branch `{part}` is not of the form psi:phi"));
    let branches = text
        .split(',')
        .map(|part| {
            let (psi, phi) = part.split_once(':').ok_or_else(|| bad(part))?;
            Ok(ArmaBranch {
                psi: psi.trim().parse().map_err(|_| bad(part))?,
                phi: phi.trim().parse().map_err(|_| bad(part))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ArmaFilter::new(branches)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Graph(GraphCmd::Gen {
            nodes,
            edges,
            radius,
            seed,
            out,
        }) => {
            let conn = match (edges, radius) {
                (_, Some(r)) => Connectivity::Radius(r),
                (Some(m), None) => Connectivity::Edges(m),
                (None, None) => Connectivity::Edges(236),
            };
            let g = generate_sensor_graph(nodes, conn, seed)?;
            write_out(&write_graph(&g), out.as_ref())?;
        }
        Command::Graph(GraphCmd::Info { graph, shift }) => {
            let args = GraphArgs { graph, shift };
            let (g, s) = shift_of(&args)?;
            let spec = spectral_decompose(&s)?;
            let ev = &spec.eigenvalues;
            let degrees = g.degrees();
            let info = json!({
                "nodes": g.node_count(),
                "edges": g.edge_count(),
                "connected": g.is_connected(),
                "min_degree": degrees.iter().copied().fold(f64::INFINITY, f64::min),
                "max_degree": degrees.iter().copied().fold(0.0, f64::max),
                "rho": s.rho(),
                "lambda_min": ev.min(),
                "lambda_max": ev.max(),
            });
            write_out(&pretty(&info)?, None)?;
        }
        Command::Design(DesignCmd::Fir { graph, order, cutoff }) => {
            let (_, s) = shift_of(&graph)?;
            let d = design_lowpass_fir(&s, order, cutoff)?;
            let out = json!({
                "taps": d.filter.taps(),
                "interval": [d.interval.0, d.interval.1],
                "rms_error": d.rms_error,
                "grid_points": DESIGN_GRID_POINTS,
            });
            write_out(&pretty(&out)?, None)?;
        }
        Command::Design(DesignCmd::Arma { graph, c, branches }) => {
            let (_, s) = shift_of(&graph)?;
            let f = match (c, branches) {
                (_, Some(text)) => parse_branches(&text)?,
                (Some(c), None) => arma1(c, &s)?,
                (None, None) => return Err(Error::Unsupported("pass --c or --branches".into())),
            };
            f.check_stable(s.rho())?;
            let out = json!({
                "branches": f.branches(),
                "contraction": f.contraction(s.rho()),
                "settling_steps": f.settling_steps(s.rho(), 1e-8),
            });
            write_out(&pretty(&out)?, None)?;
        }
        Command::Predict { scenario, out } => {
            let sc = Scenario::load(&scenario)?;
            let preds = predict_scenario(&sc.resolve()?)?;
            write_out(&pretty(&json!({"scenario": sc.id, "cells": preds}))?, out.as_ref())?;
        }
        Command::Simulate {
            scenario,
            format,
            out,
            trials,
        } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(t) = trials {
                sc.trials = t;
            }
            let table = run_experiment(&sc)?;
            let format = match format {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            };
            let path = out.or(sc.output.clone()).unwrap_or_else(|| "-".into());
            emit_results(&table, format, &path)?;
        }
        Command::Validate {
            suite,
            quick,
            seed,
            trials,
            instances,
        } => {
            let mut opts = if quick {
                ValidateOptions::quick()
            } else {
                ValidateOptions::full()
            };
            if let Some(s) = seed {
                opts.seed = s;
            }
            if let Some(t) = trials {
                opts.trials = t;
            }
            if let Some(i) = instances {
                opts.instances = i;
            }
            let suites: Vec<Suite> = match suite {
                SuiteArg::All => Suite::ALL.to_vec(),
                SuiteArg::Kernel => vec![Suite::Kernel],
                SuiteArg::Gramian => vec![Suite::Gramian],
                SuiteArg::Optimality => vec![Suite::Optimality],
                SuiteArg::Prediction => vec![Suite::Prediction],
            };
            let mut ok = true;
            let mut reports = Vec::new();
            for s in suites {
                let r = run_suite(s, &opts)?;
                ok &= r.passed();
                reports.push(r);
            }
            write_out(&pretty(&json!({"passed": ok, "suites": reports}))?, None)?;
            if !ok {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
