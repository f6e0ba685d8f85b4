//! `relumip` command-line driver.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use relumip::mip::HullCutPlan;
use relumip::{
    build_attack, compute_bounds, decode_trained, encode_network, encode_training, export_lp, export_mps, parse_mps,
    verify_attack, AttackSpec, BoundMethod, BoundSet, Dataset, Error, FormulationSpec, Loss, MipModel, Network,
    ObjSense, PartitionBounds, ReluFormulation, SolveResult, SolveStatus, SolverParams, TrainingSpec, TrainingVariant,
};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;
const EXIT_LIMIT_INCUMBENT: u8 = 5;
const EXIT_LIMIT_NO_INCUMBENT: u8 = 6;

#[derive(Parser)]
#[command(name = "relumip", version, about = "Mixed-integer encodings of ReLU networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute pre/post-activation bounds of every layer.
    Bounds {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, value_enum, default_value = "bunel")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a network and write the model as MPS (or LP if OUT ends in .lp).
    Encode {
        #[arg(long)]
        net: PathBuf,
        /// Bound file; computed with --method when absent.
        #[arg(long)]
        bounds: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[command(flatten)]
        formulation: FormulationArgs,
        /// Maximize c·logits for the comma-separated weights c.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "minimize")]
        maximize: Option<Vec<f64>>,
        /// Minimize c·logits for the comma-separated weights c.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        minimize: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an MPS model by branch-and-bound.
    Solve {
        #[arg(long)]
        model: PathBuf,
        /// Hull-cut plan; defaults to `<model>.hull.json` when that file exists.
        #[arg(long)]
        hull_plan: Option<PathBuf>,
        /// Solve only the LP relaxation.
        #[arg(long)]
        relaxation: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimum-L1 targeted adversarial example.
    Attack {
        #[arg(long)]
        net: PathBuf,
        /// JSON array with the reference input.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        true_digit: usize,
        /// Target class; `(true_digit + 5) mod 10` when absent.
        #[arg(long)]
        target: Option<usize>,
        #[arg(long, default_value_t = 1.2)]
        margin: f64,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[command(flatten)]
        formulation: FormulationArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Attack report with the perturbed input.
        #[arg(long)]
        out: PathBuf,
        /// Also write the solve result document here.
        #[arg(long)]
        result: Option<PathBuf>,
    },
    /// Train a network with binary activations by solving one MIP.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Layer sizes including input and output, e.g. 2,2,1.
        #[arg(long, value_delimiter = ',', required = true)]
        arch: Vec<usize>,
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Weight scale of the binarized variant.
        #[arg(long = "P", default_value_t = 1)]
        p: u32,
        #[arg(long, default_value = "l1")]
        loss: String,
        /// Half-width of the input box of the decoded network.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[command(flatten)]
        solver: SolverArgs,
        /// Decoded network.
        #[arg(long)]
        out: PathBuf,
        /// Training report (weights, per-sample outputs, loss).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the seeded fixture networks and datasets.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
    /// Comparison table over the solve results in a directory.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Bunel,
    Cheng,
    Tjeng,
    Serra,
}

impl From<Method> for BoundMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Bunel => BoundMethod::Bunel,
            Method::Cheng => BoundMethod::Cheng,
            Method::Tjeng => BoundMethod::Tjeng,
            Method::Serra => BoundMethod::Serra,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationKind {
    Bigm,
    Extended,
    Disjunctive,
    Hullcuts,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Interval,
    Lp,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Binary,
    Bnn,
}

#[derive(Args)]
struct FormulationArgs {
    #[arg(long, value_enum, default_value = "bigm")]
    formulation: FormulationKind,
    /// Add the valid inequalities (extended formulation only).
    #[arg(long)]
    vi: bool,
    /// Partition count of the disjunctive formulation.
    #[arg(long = "K", default_value_t = 1)]
    k: usize,
    #[arg(long, value_enum, default_value = "interval")]
    partition_bounds: PartitionArg,
    #[arg(long, default_value_t = 10)]
    max_rounds: usize,
    #[arg(long, default_value_t = 50)]
    max_cuts_per_round: usize,
    /// Fix stable units instead of encoding them.
    #[arg(long)]
    simplify_stable: bool,
}

impl FormulationArgs {
    fn spec(&self) -> Result<FormulationSpec, Failure> {
        if self.vi && !matches!(self.formulation, FormulationKind::Extended) {
            return Err(Failure::usage("--vi applies to the extended formulation only"));
        }
        let relu = match self.formulation {
            FormulationKind::Bigm => ReluFormulation::BigM,
            FormulationKind::Extended => ReluFormulation::Extended {
                valid_inequalities: self.vi,
            },
            FormulationKind::Disjunctive => ReluFormulation::Disjunctive {
                partitions: self.k,
                partition_bounds: match self.partition_bounds {
                    PartitionArg::Interval => PartitionBounds::Interval,
                    PartitionArg::Lp => PartitionBounds::Lp,
                },
            },
            FormulationKind::Hullcuts => ReluFormulation::HullCuts {
                max_rounds: self.max_rounds,
                max_cuts_per_round: self.max_cuts_per_round,
            },
        };
        let mut spec = FormulationSpec::new(relu);
        spec.simplify_stable = self.simplify_stable;
        Ok(spec)
    }

    /// Serra bounds for the extended formulation, Bunel otherwise.
    fn default_method(&self) -> BoundMethod {
        match self.formulation {
            FormulationKind::Extended => BoundMethod::Serra,
            _ => BoundMethod::Bunel,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Relative gap tolerance.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    node_limit: Option<usize>,
    /// Record wall time in the result document.
    #[arg(long)]
    timing: bool,
}

impl SolverArgs {
    fn params(&self) -> SolverParams {
        let mut p = SolverParams {
            time_limit: self.time_limit,
            node_limit: self.node_limit,
            record_time: self.timing,
            ..SolverParams::default()
        };
        if let Some(g) = self.gap {
            p.gap_tolerance = g;
        }
        p
    }
}

/// An error with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Json(_) | Error::Parse(_) | Error::Mps { .. } => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<u8, Failure>;

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::Infeasible | SolveStatus::Unbounded => EXIT_INFEASIBLE,
        SolveStatus::Feasible => EXIT_LIMIT_INCUMBENT,
        SolveStatus::LimitNoIncumbent => EXIT_LIMIT_NO_INCUMBENT,
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn load_net(path: &Path) -> Result<Network, Failure> {
    Network::from_json(&read(path)?).map_err(|e| Failure::io(path, e))
}

fn hull_sidecar(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".hull.json");
    PathBuf::from(s)
}

fn bounds_for(net: &Network, file: Option<&Path>, method: BoundMethod) -> Result<BoundSet, Failure> {
    match file {
        Some(p) => {
            let b = BoundSet::from_json(&read(p)?).map_err(|e| Failure::io(p, e))?;
            b.check_shape(net)?;
            Ok(b)
        }
        None => Ok(compute_bounds(net, method)?),
    }
}

fn cmd_bounds(net: &Path, method: Method, out: &Path) -> CliResult {
    let net = load_net(net)?;
    let b = compute_bounds(&net, method.into())?;
    write(out, &b.to_json())?;
    log::info!("{} unstable units", b.unstable_count(&net));
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_encode(
    net: &Path,
    bounds: Option<&Path>,
    method: Option<Method>,
    formulation: &FormulationArgs,
    maximize: Option<&[f64]>,
    minimize: Option<&[f64]>,
    out: &Path,
) -> CliResult {
    let net = load_net(net)?;
    let spec = formulation.spec()?;
    let method = method.map_or(formulation.default_method(), Into::into);
    let b = bounds_for(&net, bounds, method)?;
    let mut enc = encode_network(&net, &b, &spec)?;
    let objective = match (maximize, minimize) {
        (Some(c), _) => Some((ObjSense::Maximize, c)),
        (_, Some(c)) => Some((ObjSense::Minimize, c)),
        _ => None,
    };
    if let Some((sense, c)) = objective {
        if c.len() != enc.logits().len() {
            return Err(Failure::usage(format!(
                "objective has {} weights for {} outputs",
                c.len(),
                enc.logits().len()
            )));
        }
        let terms: Vec<_> = enc.logits().iter().copied().zip(c.iter().copied()).collect();
        enc.model.set_objective(sense, &terms)?;
    }
    let text = if out.extension().is_some_and(|e| e == "lp") {
        export_lp(&enc.model)
    } else {
        export_mps(&enc.model)
    };
    write(out, &text)?;
    if let Some(plan) = enc.model.hull_cuts() {
        let side = hull_sidecar(out);
        write(&side, &serde_json::to_string_pretty(plan).expect("plan serialization cannot fail"))?;
    }
    Ok(0)
}

fn cmd_solve(model: &Path, hull_plan: Option<&Path>, relaxation: bool, params: SolverParams, out: &Path) -> CliResult {
    let mut m: MipModel = parse_mps(&read(model)?).map_err(|e| Failure::io(model, e))?;
    let side = hull_plan.map(Path::to_path_buf).unwrap_or_else(|| hull_sidecar(model));
    if hull_plan.is_some() || side.exists() {
        let plan: HullCutPlan = serde_json::from_str(&read(&side)?).map_err(|e| Failure::io(&side, e))?;
        m.set_hull_cuts(Some(plan));
    }
    let r = if relaxation {
        relumip::solve_lp(&m, &params)
    } else {
        relumip::solve_mip(&m, &params)
    };
    write(out, &r.to_json())?;
    Ok(status_code(r.status))
}

fn cmd_attack(cmd: &Command) -> CliResult {
    let Command::Attack {
        net,
        input,
        true_digit,
        target,
        margin,
        method,
        formulation,
        solver,
        out,
        result,
    } = cmd
    else {
        unreachable!("dispatched on the attack command")
    };
    let net = load_net(net)?;
    let reference: Vec<f64> = serde_json::from_str(&read(input)?).map_err(|e| Failure::io(input, e))?;
    let spec = AttackSpec {
        reference,
        true_class: *true_digit,
        target: *target,
        margin: *margin,
    };
    spec.validate(&net)?;
    let fspec = formulation.spec()?;
    let method = method.map_or(formulation.default_method(), Into::into);
    let bounds = compute_bounds(&net, method)?;
    let enc = encode_network(&net, &bounds, &fspec)?;
    let atk = build_attack(&enc, &net, &spec)?;
    let r = relumip::solve_mip(&atk.model, &solver.params());
    if let Some(p) = result {
        write(p, &r.to_json())?;
    }
    if let (Some(obj), Some(_)) = (r.objective, &r.incumbent) {
        let x: Vec<f64> = atk.inputs.iter().map(|v| r.value(*v).expect("incumbent present")).collect();
        let report = verify_attack(&net, &spec, &x)?.with_objective(obj);
        write(out, &report.to_json())?;
        eprintln!(
            "target {}: L1 distance {} ({:?}, margin {})",
            report.target,
            report.l1_distance,
            r.status,
            if report.margin_ok { "met" } else { "violated" }
        );
    } else {
        eprintln!("no adversarial input: {:?}", r.status);
    }
    Ok(status_code(r.status))
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data: &Path,
    arch: &[usize],
    variant: VariantArg,
    p: u32,
    loss: &str,
    radius: f64,
    params: SolverParams,
    out: &Path,
    report: Option<&Path>,
) -> CliResult {
    let data = Dataset::from_json(&read(data)?).map_err(|e| Failure::io(data, e))?;
    let loss: Loss = loss.parse()?;
    let variant = match variant {
        VariantArg::Binary => TrainingVariant::BinaryStep,
        VariantArg::Bnn => TrainingVariant::Binarized { p },
    };
    let mut spec = TrainingSpec::new(arch.to_vec(), variant, loss);
    spec.radius = radius;
    let tm = encode_training(&spec, &data)?;
    let r = relumip::solve_mip(&tm.model, &params);
    if r.has_incumbent() {
        let (net, rep) = decode_trained(&tm, &data, &r)?;
        write(out, &net.to_json())?;
        if let Some(path) = report {
            write(path, &rep.to_json())?;
        }
        eprintln!("loss {} accuracy {} ({:?})", rep.total_loss, rep.accuracy, r.status);
    } else {
        eprintln!("no trained network: {:?}", r.status);
    }
    Ok(status_code(r.status))
}

fn cmd_fixtures(out: &Path) -> CliResult {
    for name in relumip::fixtures::write_fixtures(out)? {
        println!("{}", out.join(name).display());
    }
    Ok(0)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

/// One row per `<name>.json` result; `<name>.lp.json` fills the LP column.
fn report_table(dir: &Path) -> Result<String, Failure> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    entries.sort();
    let mut rows = Vec::new();
    let mut lp = std::collections::HashMap::new();
    for path in entries {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let Ok(r) = SolveResult::from_json(&read(&path)?) else {
            log::warn!("skipping {}: not a solve result", path.display());
            continue;
        };
        match stem.strip_suffix(".lp") {
            Some(base) => {
                lp.insert(base.to_string(), r.objective);
            }
            None => rows.push((stem, r)),
        }
    }
    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:<24} {:>16} {:>14} {:>14} {:>10} {:>6} {:>8} {:>10}",
        "formulation", "status", "optimal", "lp", "time", "cuts", "nodes", "gap"
    );
    for (name, r) in &rows {
        let _ = writeln!(
            t,
            "{:<24} {:>16} {:>14} {:>14} {:>10} {:>6} {:>8} {:>10}",
            name,
            format!("{:?}", r.status),
            fmt_opt(r.objective, 6),
            fmt_opt(lp.get(name).copied().flatten(), 6),
            fmt_opt(r.time_seconds, 3),
            r.cuts,
            r.nodes,
            r.gap.map_or_else(|| "-".into(), |g| format!("{:.2}%", 100.0 * g)),
        );
    }
    Ok(t)
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Bounds { net, method, out } => cmd_bounds(net, *method, out),
        Command::Encode {
            net,
            bounds,
            method,
            formulation,
            maximize,
            minimize,
            out,
        } => cmd_encode(
            net,
            bounds.as_deref(),
            *method,
            formulation,
            maximize.as_deref(),
            minimize.as_deref(),
            out,
        ),
        Command::Solve {
            model,
            hull_plan,
            relaxation,
            solver,
            out,
        } => cmd_solve(model, hull_plan.as_deref(), *relaxation, solver.params(), out),
        cmd @ Command::Attack { .. } => cmd_attack(cmd),
        Command::Train {
            data,
            arch,
            variant,
            p,
            loss,
            radius,
            solver,
            out,
            report,
        } => cmd_train(data, arch, *variant, *p, loss, *radius, solver.params(), out, report.as_deref()),
        Command::Fixtures { out } => cmd_fixtures(out),
        Command::Report { results, out } => {
            let table = report_table(results)?;
            match out {
                Some(p) => write(p, &table)?,
                None => print!("{table}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
