//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 when a numerical procedure
//! fails (stage iteration, path resolution).

use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::elementary::fixtures;
use crate::error::{Error, Result};
use crate::forest_ops::{split_pairs, subtree_pairs};
use crate::numbers::HalfInt;
use crate::sdesim::{dyadic_steps, ms_order_estimate, ErkIntegrator};
use crate::semilinear_erk::{erk_weights, load_method, order_residuals, tree_residual};
use crate::series::{exact_solution_series, exact_tree_weight};
use crate::stochastic_eval::mc_moments;
use crate::trees::{enumerate_trees_with_limit, format_forest, NodeLabel, RawTree, Root, Tree, TreeModel};
use crate::weight::{Interpretation, WeightExpr};

const TREE_GRAMMAR: &str = "tree := leaf | \"[\" tree (\",\" tree)* \"]\" leaf\n\
leaf := \"g(\" q \",\" v \",\" m \")\" | \"W\" i | \"t\" | \"A\" | digit | \"f\" | \"e\"";

#[derive(Parser, Debug)]
#[command(name = "sbseries", version, about = "Stochastic B-series toolkit")]
struct Cli {
    /// Worker threads for Monte Carlo work (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enumerate and inspect trees.
    #[command(subcommand)]
    Trees(TreesCmd),
    /// Subtree/remainder pairs of a tree (same as `trees split`).
    Split(SplitArgs),
    /// Weight series.
    #[command(subcommand)]
    Series(SeriesCmd),
    /// Exponential Runge-Kutta methods.
    #[command(subcommand)]
    Erk(ErkCmd),
    /// Monte Carlo evaluation of weights.
    #[command(subcommand)]
    Weights(WeightsCmd),
    /// Mean-square convergence experiment.
    Converge(ConvergeArgs),
}

#[derive(Subcommand, Debug)]
enum TreesCmd {
    /// List all trees of a model up to an order.
    Enum(EnumArgs),
    /// Order, symmetry coefficient and size of one tree.
    Info(InfoArgs),
    /// Subtree/remainder pairs of a tree.
    Split(SplitArgs),
}

#[derive(Subcommand, Debug)]
enum SeriesCmd {
    /// Exact-solution weights.
    Exact(ExactArgs),
}

#[derive(Subcommand, Debug)]
enum ErkCmd {
    /// Order residuals exact minus numerical weight, per tree.
    Residuals(ResidualArgs),
    /// Numerical weights of the update and the stages.
    Weights(ErkWeightsArgs),
    /// Write a method as a JSON specification.
    Export(ExportArgs),
}

#[derive(Subcommand, Debug)]
enum WeightsCmd {
    /// Mean, variance and second moment of a weight expression.
    Mc(McArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum ModelKind {
    Semilinear,
    Classical,
    Langevin,
    General,
    Nonautonomous,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Default)]
enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum Interp {
    Ito,
    Strat,
}

impl From<Interp> for Interpretation {
    fn from(i: Interp) -> Self {
        match i {
            Interp::Ito => Interpretation::Ito,
            Interp::Strat => Interpretation::Stratonovich,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "semilinear")]
    model: ModelKind,
    /// Number of Wiener processes.
    #[arg(long = "M", default_value_t = 1)]
    colors: u32,
    /// Number of partitions (general model).
    #[arg(long = "Q", default_value_t = 1)]
    partitions: u32,
    /// Variant counts, one row per color separated by ';', entries per partition
    /// separated by ',' (general model), e.g. "2,1;1,0". Defaults to all ones.
    #[arg(long)]
    nu: Option<String>,
    /// Number of W-nodes (non-autonomous model).
    #[arg(long = "l", default_value_t = 0)]
    wiener_nodes: u32,
}

#[derive(Args, Debug)]
struct EnumArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Largest tree order, e.g. 3 or 7/2.
    #[arg(long)]
    cap: HalfInt,
    /// Refuse to produce more trees than this.
    #[arg(long, default_value_t = crate::trees::DEFAULT_TREE_LIMIT)]
    limit: usize,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct InfoArgs {
    tree: String,
    /// Validate against this model instead of the one implied by the labels.
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct SplitArgs {
    tree: String,
    /// All of ST instead of the single-remainder pairs.
    #[arg(long)]
    all: bool,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct ExactArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    cap: Option<HalfInt>,
    /// A single tree instead of the whole series.
    #[arg(long)]
    tree: Option<String>,
    /// Reduce iterated integrals with the closed forms of this calculus.
    #[arg(long, value_enum)]
    interp: Option<Interp>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct ResidualArgs {
    /// `builtin:midpoint` or a JSON method file.
    #[arg(long)]
    method: String,
    #[arg(long)]
    cap: Option<HalfInt>,
    /// A single tree instead of all trees up to the cap.
    #[arg(long)]
    tree: Option<String>,
    #[arg(long, value_enum, default_value = "strat")]
    interp: Interp,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct ErkWeightsArgs {
    #[arg(long)]
    method: String,
    #[arg(long)]
    cap: HalfInt,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    method: String,
    #[arg(long)]
    cap: Option<HalfInt>,
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long)]
    expr: String,
    #[arg(long)]
    h: f64,
    #[arg(long = "N")]
    steps: usize,
    #[arg(long)]
    paths: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "strat")]
    interp: Interp,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    /// Semi-linear test problem: langevin, langevin-vnoise, noncommutative, scalar-semilinear.
    #[arg(long)]
    problem: String,
    /// `midpoint` (exact exponentials) or a JSON method file (series coefficients).
    #[arg(long)]
    method: String,
    #[arg(long)]
    paths: usize,
    #[arg(long)]
    seed: u64,
    /// Final time.
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    /// Coarsest step is T/2^hmin.
    #[arg(long, default_value_t = 4)]
    hmin: u32,
    /// Finest step is T/2^hmax.
    #[arg(long, default_value_t = 8)]
    hmax: u32,
    /// Steps of the reference solution.
    #[arg(long, default_value_t = 4096)]
    fine: usize,
    /// Write the CSV report here instead of standard output.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(Error::InvalidArgument(format!("--threads: {e}"))),
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if matches!(e, Error::Parse { .. } | Error::InvalidLabel { .. }) {
                let _ = writeln!(err, "tree grammar:\n{TREE_GRAMMAR}");
            }
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}

fn dispatch(cmd: &Command) -> Result<String> {
    match cmd {
        Command::Trees(TreesCmd::Enum(a)) => trees_enum(a),
        Command::Trees(TreesCmd::Info(a)) => trees_info(a),
        Command::Trees(TreesCmd::Split(a)) | Command::Split(a) => trees_split(a),
        Command::Series(SeriesCmd::Exact(a)) => series_exact(a),
        Command::Erk(ErkCmd::Residuals(a)) => erk_residuals(a),
        Command::Erk(ErkCmd::Weights(a)) => erk_weights_cmd(a),
        Command::Erk(ErkCmd::Export(a)) => Ok(load_method(&a.method, a.cap)?.to_json() + "\n"),
        Command::Weights(WeightsCmd::Mc(a)) => weights_mc(a),
        Command::Converge(a) => converge(a),
    }
}

fn parse_nu(text: &str, rows: usize, cols: usize) -> Result<Vec<Vec<u32>>> {
    let table: Vec<Vec<u32>> = text
        .split(';')
        .map(|r| {
            r.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::InvalidArgument(format!("--nu: '{x}' is not a count")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if table.len() != rows || table.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidArgument(format!(
            "--nu must have {rows} rows (colors 0..) of {cols} entries"
        )));
    }
    Ok(table)
}

fn build_model(a: &ModelArgs) -> Result<TreeModel> {
    let m = a.colors as usize + 1;
    match a.model {
        ModelKind::Semilinear => Ok(TreeModel::semilinear(a.colors)),
        ModelKind::Classical => Ok(TreeModel::classical()),
        ModelKind::Langevin => Ok(TreeModel::langevin()),
        ModelKind::General => {
            let q = a.partitions as usize;
            let nu = match &a.nu {
                Some(s) => parse_nu(s, m, q)?,
                None => vec![vec![1; q]; m],
            };
            TreeModel::general(a.partitions, a.colors, nu)
        }
        ModelKind::Nonautonomous => {
            let nu = match &a.nu {
                Some(s) => parse_nu(s, m, 1)?.into_iter().map(|r| r[0]).collect(),
                None => vec![1; m],
            };
            Ok(TreeModel::NonAutonomous {
                colors: a.colors,
                wiener_nodes: a.wiener_nodes,
                nu,
            })
        }
    }
}

/// The smallest model of the given kind that contains every label of `raw`.
fn implied_model(raw: &RawTree, kind: Option<ModelKind>) -> TreeModel {
    let mut labels = Vec::new();
    let mut partitions = 1;
    fn walk(t: &RawTree, labels: &mut Vec<NodeLabel>, q: &mut u32) {
        match t.root {
            Root::Node(l) => labels.push(l),
            Root::Empty(p) => *q = (*q).max(p),
        }
        t.children.iter().for_each(|c| walk(c, labels, q));
    }
    walk(raw, &mut labels, &mut partitions);
    let colors = labels.iter().map(|l| l.color()).max().unwrap_or(0);
    let general = labels.iter().any(|l| matches!(l, NodeLabel::General { .. }));
    let wiener = labels
        .iter()
        .filter_map(|l| if let NodeLabel::W(i) = l { Some(*i) } else { None })
        .max();
    let kind = kind.unwrap_or(if wiener.is_some() {
        ModelKind::Nonautonomous
    } else if general {
        ModelKind::General
    } else {
        ModelKind::Semilinear
    });
    match kind {
        ModelKind::Semilinear => TreeModel::semilinear(colors),
        ModelKind::Classical => TreeModel::classical(),
        ModelKind::Langevin => TreeModel::langevin(),
        ModelKind::General | ModelKind::Nonautonomous => {
            let mut q = partitions;
            for l in &labels {
                if let NodeLabel::General { q: lq, .. } = l {
                    q = q.max(*lq);
                }
            }
            let mut nu = vec![vec![0; q as usize]; colors as usize + 1];
            for l in &labels {
                if let NodeLabel::General { q, v, m } = *l {
                    let cell = &mut nu[m as usize][q as usize - 1];
                    *cell = (*cell).max(v);
                }
            }
            if kind == ModelKind::General {
                TreeModel::GeneralPartitioned {
                    partitions: q,
                    colors,
                    nu,
                }
            } else {
                TreeModel::NonAutonomous {
                    colors,
                    wiener_nodes: wiener.unwrap_or(0),
                    nu: nu.iter().map(|r| r[0]).collect(),
                }
            }
        }
    }
}

fn parse_tree(text: &str, model: Option<&TreeModel>, kind: Option<ModelKind>) -> Result<(Tree, TreeModel)> {
    let raw = RawTree::parse(text)?;
    let model = model.cloned().unwrap_or_else(|| implied_model(&raw, kind));
    let tree = raw.to_tree();
    if tree.label() == Some(NodeLabel::F) {
        model.check_function_tree(&tree)?;
    } else {
        model.check(&tree)?;
    }
    Ok((tree, model))
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn table_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut s = line(header.to_vec());
    s += &line(
        width
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    );
    for r in rows {
        s += &line(r.iter().map(String::as_str).collect());
    }
    s
}

fn render(format: Format, header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    match format {
        Format::Csv => csv_text(header, &rows),
        Format::Table => Ok(table_text(header, &rows)),
        Format::Json => {
            let objs: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    let map: serde_json::Map<String, serde_json::Value> = header
                        .iter()
                        .zip(r)
                        .map(|(h, c)| (h.to_string(), serde_json::Value::String(c.clone())))
                        .collect();
                    serde_json::Value::Object(map)
                })
                .collect();
            Ok(serde_json::to_string_pretty(&objs).expect("serializable") + "\n")
        }
    }
}

fn trees_enum(a: &EnumArgs) -> Result<String> {
    let model = build_model(&a.model)?;
    let trees = enumerate_trees_with_limit(&model, a.cap, a.limit)?;
    let rows = trees
        .iter()
        .map(|t| vec![t.to_string(), t.rho().to_string(), t.alpha().to_string()])
        .collect();
    render(a.format, &["tree", "rho", "alpha"], rows)
}

fn trees_info(a: &InfoArgs) -> Result<String> {
    let (t, model) = parse_tree(&a.tree, None, a.model)?;
    let fields = [
        ("tree", t.to_string()),
        ("model", model.name().to_string()),
        ("alpha", t.alpha().to_string()),
        ("rho", t.rho().to_string()),
        ("nodes", t.node_count().to_string()),
        ("leaves", t.leaf_count().to_string()),
        ("partition", t.partition().to_string()),
    ];
    match a.format {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> =
                fields.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
            Ok(serde_json::to_string_pretty(&map).expect("serializable") + "\n")
        }
        Format::Csv => csv_text(
            &fields.iter().map(|f| f.0).collect::<Vec<_>>(),
            &[fields.iter().map(|f| f.1.clone()).collect()],
        ),
        Format::Table => Ok(fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()),
    }
}

fn trees_split(a: &SplitArgs) -> Result<String> {
    let (t, _) = parse_tree(&a.tree, None, None)?;
    if t.is_empty() {
        return Err(Error::InvalidArgument("the empty tree has no decompositions".into()));
    }
    let pairs = if a.all { subtree_pairs(&t) } else { split_pairs(&t) };
    let rows = pairs
        .iter()
        .map(|p| {
            vec![
                p.subtree.to_string(),
                format_forest(&p.remainder),
                p.coefficient.to_string(),
            ]
        })
        .collect();
    render(a.format, &["subtree", "remainder", "gamma"], rows)
}

fn weight_text(w: &WeightExpr, interp: Option<Interp>) -> String {
    match interp {
        Some(i) => w.simplify(i.into()).to_string(),
        None => w.to_string(),
    }
}

fn series_exact(a: &ExactArgs) -> Result<String> {
    let model = build_model(&a.model)?;
    let rows: Vec<Vec<String>> = match (&a.tree, a.cap) {
        (Some(s), _) => {
            let (t, _) = parse_tree(s, Some(&model), None)?;
            vec![vec![
                t.to_string(),
                t.rho().to_string(),
                t.alpha().to_string(),
                weight_text(&exact_tree_weight(&t), a.interp),
            ]]
        }
        (None, Some(cap)) => exact_solution_series(&model, cap)?
            .iter()
            .map(|(t, w)| {
                vec![
                    t.to_string(),
                    t.rho().to_string(),
                    t.alpha().to_string(),
                    weight_text(w, a.interp),
                ]
            })
            .collect(),
        (None, None) => return Err(Error::InvalidArgument("give --cap or --tree".into())),
    };
    render(a.format, &["tree", "rho", "alpha", "weight"], rows)
}

fn erk_residuals(a: &ResidualArgs) -> Result<String> {
    let interp: Interpretation = a.interp.into();
    let residuals = match (&a.tree, a.cap) {
        (Some(s), cap) => {
            let method = load_method(&a.method, cap)?;
            let (t, _) = parse_tree(s, Some(&method.model()), None)?;
            vec![tree_residual(&method, &t, interp)?]
        }
        (None, Some(cap)) => {
            let method = load_method(&a.method, Some(cap))?;
            if cap > method.cap {
                return Err(Error::CapUnsupported {
                    requested: cap.to_string(),
                    max: method.cap.to_string(),
                });
            }
            order_residuals(&method, cap, interp)?
        }
        (None, None) => return Err(Error::InvalidArgument("give --cap or --tree".into())),
    };
    let rows = residuals
        .iter()
        .map(|r| {
            vec![
                r.tree.to_string(),
                r.tree_order.to_string(),
                r.exact_weight.to_string(),
                r.numeric_weight.to_string(),
                r.residual.to_string(),
            ]
        })
        .collect();
    render(a.format, &["tree", "rho", "exact", "numeric", "residual"], rows)
}

fn erk_weights_cmd(a: &ErkWeightsArgs) -> Result<String> {
    let method = load_method(&a.method, Some(a.cap))?;
    let (phi, stages) = erk_weights(&method, a.cap)?;
    let mut header = vec!["tree".to_string(), "rho".into(), "Phi".into()];
    header.extend((1..=stages.len()).map(|i| format!("Phi_{i}")));
    let rows = phi
        .iter()
        .map(|(t, w)| {
            let mut r = vec![
                t.to_string(),
                if t.is_empty() { "0".into() } else { t.rho().to_string() },
                w.to_string(),
            ];
            r.extend(stages.iter().map(|s| s.get(t).to_string()));
            r
        })
        .collect();
    render(a.format, &header.iter().map(String::as_str).collect::<Vec<_>>(), rows)
}

fn weights_mc(a: &McArgs) -> Result<String> {
    let expr = WeightExpr::parse(&a.expr)?;
    if a.h <= 0.0 || !a.h.is_finite() {
        return Err(Error::InvalidArgument("--h must be positive".into()));
    }
    let s = mc_moments(&expr, a.h, a.steps, a.paths, a.interp.into(), a.seed)?;
    let rows = vec![vec![
        s.count.to_string(),
        s.mean.to_string(),
        s.variance.to_string(),
        s.std_error.to_string(),
        s.second_moment.to_string(),
        s.second_moment_se.to_string(),
    ]];
    render(
        a.format,
        &["paths", "mean", "variance", "se", "second_moment", "second_moment_se"],
        rows,
    )
}

fn converge(a: &ConvergeArgs) -> Result<String> {
    let problem = fixtures::semilinear_problem(&a.problem)?;
    let integrator = match a.method.as_str() {
        "midpoint" | "builtin:midpoint" => ErkIntegrator::midpoint(),
        path => ErkIntegrator::from_series(load_method(path, None)?),
    };
    if a.hmin >= a.hmax {
        return Err(Error::InvalidArgument("--hmin must be smaller than --hmax".into()));
    }
    let h = dyadic_steps(a.horizon, a.hmin, a.hmax);
    let report = ms_order_estimate(&problem, &integrator, &h, a.paths, a.horizon, a.seed, a.fine)?;
    let csv = report.to_csv()?;
    match &a.out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let rows: Vec<Vec<String>> = (0..report.h.len())
                .map(|i| {
                    vec![
                        report.h[i].to_string(),
                        format!("{:.6e}", report.rms_error[i]),
                        format!("{:.2e}", report.half_width[i]),
                    ]
                })
                .collect();
            let mut s = table_text(&["h", "rms_error", "±95%"], &rows);
            s += &format!("slope={:.4}\n", report.slope);
            Ok(s)
        }
        None => Ok(csv),
    }
}
