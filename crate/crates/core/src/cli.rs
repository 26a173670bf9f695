//! Command-line front end: CSV/JSON ingestion, subcommands and report output.
//!
//! Rows and columns are 1-based in every file and report written here.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::combine::CombiningMethod;
use crate::error::Error;
use crate::partial_conjunction::pc_pvalue;
use crate::pc_testing::{compute_pc_pvalues, test_pc_family, GroupLayout, WeightScheme};
use crate::procedures::{ShapeFunction, ThresholdCollection};
use crate::replicability::{replicability_analysis, PValueMatrix, SelectionRule};
use crate::simulation::{
    dcc_probe, fdr_bound, mc_fdr_pc, mc_replicability_error, DccStatistic, McEstimate, SimulationScenario,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "PCFDR_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_BOUND_VIOLATION: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Invalid(#[from] Error),

    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "pcfdr", version, about = "Partial conjunction testing with weighted FDR control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-row partial conjunction p-values of a matrix (u = 1 gives the global null).
    Combine(CombineArgs),
    /// Test one partial conjunction hypothesis per group with a step-up procedure.
    PcTest(PcTestArgs),
    /// Two-step replicability analysis of a features x studies matrix.
    Replicate(ReplicateArgs),
    /// Run the Monte Carlo checks of a scenario file and report the estimates.
    Simulate(SimArgs),
    /// Like simulate, but exit with status 3 if any bound is violated.
    Verify(SimArgs),
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    /// fisher, stouffer, simes, bonferroni, hommel or simes-storey.
    #[arg(long, default_value = "simes")]
    pub method: String,
    /// Simes-Storey tuning parameter in (0, 1).
    #[arg(long)]
    pub lambda: Option<f64>,
}

impl MethodArgs {
    fn resolve(&self) -> CliResult<CombiningMethod> {
        Ok(CombiningMethod::parse(&self.method, self.lambda)?)
    }
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    /// identity, reciprocal-sum or bonferroni.
    #[arg(long, default_value = "identity")]
    pub shape: String,
    /// Discrete shape distribution as `x:mass,x:mass,...`; overrides --shape.
    #[arg(long)]
    pub nu: Option<String>,
}

impl ShapeArgs {
    fn resolve(&self) -> CliResult<ShapeFunction> {
        match &self.nu {
            None => Ok(ShapeFunction::parse(&self.shape)?),
            Some(spec) => {
                let points = spec
                    .split(',')
                    .map(|pair| {
                        let (x, mass) = pair
                            .split_once(':')
                            .ok_or_else(|| usage(format!("--nu entry '{pair}' is not of the form x:mass")))?;
                        let parse = |s: &str| {
                            s.trim()
                                .parse::<f64>()
                                .map_err(|_| usage(format!("--nu entry '{pair}' is not numeric")))
                        };
                        Ok((parse(x)?, parse(mass)?))
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                Ok(ShapeFunction::discrete(points)?)
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// Two-column CSV of prior weights w and penalty weights v, one line per group.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Rescale w so that sum(w * v) equals the number of groups.
    #[arg(long)]
    pub renormalize: bool,
}

impl WeightArgs {
    fn resolve(&self, g: usize) -> CliResult<WeightScheme> {
        let Some(path) = &self.weights else {
            return Ok(WeightScheme::unit(g));
        };
        let table = read_table(path, false)?;
        let (mut w, mut v) = (Vec::new(), Vec::new());
        for (row, &line) in table.rows.iter().zip(&table.lines) {
            if row.len() != 2 {
                return Err(CliError::Parse {
                    path: path.display().to_string(),
                    line,
                    column: 1,
                    message: format!("expected 2 columns (w, v), found {}", row.len()),
                });
            }
            w.push(row[0]);
            v.push(row[1]);
        }
        if w.len() != g {
            return Err(usage(format!(
                "{}: {} weight rows for {g} groups",
                path.display(),
                w.len()
            )));
        }
        Ok(if self.renormalize {
            WeightScheme::renormalized(w, v)?
        } else {
            WeightScheme::new(w, v)?
        })
    }
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    /// Headerless CSV, one row per feature.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = 1)]
    pub u: usize,
}

#[derive(Debug, Args)]
pub struct PcTestArgs {
    /// Headerless CSV. Without --groups each row is a group; with --groups
    /// each row holds one p-value.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// One group label per line, aligned with the rows of --input.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Common u for every group (default 1).
    #[arg(long, conflicts_with = "proportion")]
    pub u: Option<usize>,
    /// Per-group u = ceil(proportion * group size).
    #[arg(long)]
    pub proportion: Option<f64>,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Storey-adaptive BH with this lambda (unit weights, identity shape).
    #[arg(long)]
    pub adaptive: Option<f64>,
    #[command(flatten)]
    pub weights: WeightArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleKind {
    /// Step-up procedure on the global-null p-values.
    Bh,
    /// Global-null p-value at most --threshold.
    Fixed,
    /// Step-up procedure on the p-values of one study (--column).
    Column,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// Headerless CSV, rows = features, columns = studies.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    #[arg(long, value_enum, default_value_t = RuleKind::Bh)]
    pub rule: RuleKind,
    /// Level of the selection step (default q).
    #[arg(long)]
    pub selection_alpha: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// 1-based study used by --rule column.
    #[arg(long)]
    pub column: Option<usize>,
    /// Combining method for the global-null p-values of the selection step
    /// (default: --method).
    #[arg(long)]
    pub select_method: Option<String>,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// JSON scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override the replicate count of every scenario.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the seed of every scenario.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Numeric CSV contents with an optional identifier column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub ids: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
    /// 1-based source line of each row.
    pub lines: Vec<usize>,
}

impl Table {
    pub fn to_matrix(&self, path: &str) -> CliResult<PValueMatrix> {
        let n = self.rows.first().map_or(0, Vec::len);
        if let Some(r) = self.rows.iter().position(|row| row.len() != n) {
            return Err(CliError::Parse {
                path: path.to_string(),
                line: self.lines[r],
                column: 1,
                message: format!("row has {} values, expected {n}", self.rows[r].len()),
            });
        }
        Ok(PValueMatrix::from_rows(&self.rows)?)
    }

    fn label(&self, r: usize) -> String {
        match &self.ids {
            Some(ids) => ids[r].clone(),
            None => (r + 1).to_string(),
        }
    }
}

/// Parses headerless CSV. Blank lines and lines starting with `#` are
/// skipped. The first column holds identifiers when the first data row starts
/// with a non-numeric field.
pub fn parse_table(text: &str, path: &str, unit_interval: bool) -> CliResult<Table> {
    let mut has_ids = None;
    let mut table = Table {
        ids: None,
        rows: Vec::new(),
        lines: Vec::new(),
    };
    let mut ids = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = Vec::new();
        let mut column = 1;
        for field in raw.split(',') {
            let lead = field.len() - field.trim_start().len();
            fields.push((column + lead, field.trim()));
            column += field.chars().count() + 1;
        }
        let ids_here = *has_ids.get_or_insert_with(|| fields[0].1.parse::<f64>().is_err());
        let values = if ids_here {
            ids.push(fields[0].1.to_string());
            &fields[1..]
        } else {
            &fields[..]
        };
        if values.is_empty() {
            return Err(CliError::Parse {
                path: path.to_string(),
                line,
                column: column - 1,
                message: "row has an identifier but no values".into(),
            });
        }
        let mut row = Vec::with_capacity(values.len());
        for &(col, field) in values {
            let err = |message: String| CliError::Parse {
                path: path.to_string(),
                line,
                column: col,
                message,
            };
            if field.is_empty() {
                return Err(err("empty field".into()));
            }
            let x: f64 = field
                .parse()
                .map_err(|_| err(format!("'{field}' is not a number")))?;
            if unit_interval && !(0.0..=1.0).contains(&x) {
                return Err(err(format!("p-value {field} is outside [0, 1]")));
            }
            if !x.is_finite() {
                return Err(err(format!("'{field}' is not finite")));
            }
            row.push(x);
        }
        table.rows.push(row);
        table.lines.push(line);
    }
    if table.rows.is_empty() {
        return Err(CliError::Parse {
            path: path.to_string(),
            line: 1,
            column: 1,
            message: "no data rows".into(),
        });
    }
    if has_ids == Some(true) {
        table.ids = Some(ids);
    }
    Ok(table)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_table(path: &Path, unit_interval: bool) -> CliResult<Table> {
    parse_table(&read_text(path)?, &path.display().to_string(), unit_interval)
}

/// Writes values with the shortest representation that parses back to the
/// same `f64`.
pub fn format_table(ids: Option<&[String]>, rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for (r, row) in rows.iter().enumerate() {
        let mut fields: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(ids) = ids {
            fields.push(ids[r].clone());
        }
        fields.extend(row.iter().map(|x| format!("{x:?}")));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn emit(out: Option<&Path>, body: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, body).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, report: &T) -> CliResult<()> {
    let mut body = serde_json::to_string_pretty(report).expect("report serializes");
    body.push('\n');
    emit(out, &body)
}

fn run_combine(args: &CombineArgs) -> CliResult<i32> {
    let method = args.method.resolve()?;
    let table = read_table(&args.input, true)?;
    let values = table
        .rows
        .iter()
        .map(|row| Ok(vec![pc_pvalue(row, args.u, method)?]))
        .collect::<CliResult<Vec<_>>>()?;
    emit(args.out.as_deref(), &format_table(table.ids.as_deref(), &values))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct GroupResult {
    label: String,
    size: usize,
    u: usize,
    pc_pvalue: f64,
    rejected: bool,
}

#[derive(Debug, Serialize)]
struct PcTestReport {
    schema_version: u32,
    command: &'static str,
    method: CombiningMethod,
    alpha: f64,
    thresholds: ThresholdCollection,
    rejected: Vec<String>,
    rejected_volume: f64,
    groups: Vec<GroupResult>,
}

fn read_labels(path: &Path) -> CliResult<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn run_pc_test(args: &PcTestArgs) -> CliResult<i32> {
    let method = args.method.resolve()?;
    let input = args.input.display().to_string();
    let table = read_table(&args.input, true)?;

    let (p, labels, groups) = match &args.groups {
        None => {
            let mut p = Vec::new();
            let mut groups = Vec::new();
            for row in &table.rows {
                groups.push((p.len()..p.len() + row.len()).collect::<Vec<_>>());
                p.extend_from_slice(row);
            }
            let labels = (0..table.rows.len()).map(|r| table.label(r)).collect();
            (p, labels, groups)
        }
        Some(gpath) => {
            if let Some(r) = table.rows.iter().position(|row| row.len() != 1) {
                return Err(CliError::Parse {
                    path: input,
                    line: table.lines[r],
                    column: 1,
                    message: "with --groups every row must hold exactly one p-value".into(),
                });
            }
            let assignment = read_labels(gpath)?;
            if assignment.len() != table.rows.len() {
                return Err(usage(format!(
                    "{}: {} labels for {} p-values",
                    gpath.display(),
                    assignment.len(),
                    table.rows.len()
                )));
            }
            let mut labels: Vec<String> = Vec::new();
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for (i, label) in assignment.into_iter().enumerate() {
                match labels.iter().position(|l| *l == label) {
                    Some(g) => groups[g].push(i),
                    None => {
                        labels.push(label);
                        groups.push(vec![i]);
                    }
                }
            }
            (table.rows.iter().map(|r| r[0]).collect(), labels, groups)
        }
    };

    let total = p.len();
    let g = groups.len();
    let layout = match (args.u, args.proportion) {
        (_, Some(prop)) => GroupLayout::with_proportion(total, groups, prop)?,
        (u, None) => GroupLayout::new(total, groups, vec![u.unwrap_or(1); g])?,
    };
    let ws = args.weights.resolve(g)?;
    let tc = match args.adaptive {
        Some(lambda) => {
            if args.weights.weights.is_some() {
                return Err(usage("--adaptive uses unit weights; drop --weights"));
            }
            ThresholdCollection::adaptive_storey(args.alpha, g, lambda)?
        }
        None => ThresholdCollection::new(args.alpha, ws.prior_w.clone(), args.shape.resolve()?)?,
    };
    let pc = compute_pc_pvalues(&p, &layout, method)?;
    let rej = test_pc_family(&p, &layout, method, &ws, &tc)?;

    let report = PcTestReport {
        schema_version: SCHEMA_VERSION,
        command: "pc-test",
        method,
        alpha: args.alpha,
        rejected: rej.indices.iter().map(|&i| labels[i].clone()).collect(),
        rejected_volume: rej.fixed_point_volume,
        groups: (0..g)
            .map(|i| GroupResult {
                label: labels[i].clone(),
                size: layout.groups()[i].len(),
                u: layout.u()[i],
                pc_pvalue: pc[i],
                rejected: rej.contains(i),
            })
            .collect(),
        thresholds: tc,
    };
    emit_json(args.out.as_deref(), &report)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct FeatureResult {
    row: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    khat: usize,
    threshold: f64,
}

#[derive(Debug, Serialize)]
struct ReplicateReport {
    schema_version: u32,
    command: &'static str,
    method: CombiningMethod,
    q: f64,
    rule: SelectionRule,
    beta: ShapeFunction,
    selected: Vec<usize>,
    selected_volume: f64,
    features: Vec<FeatureResult>,
}

fn run_replicate(args: &ReplicateArgs) -> CliResult<i32> {
    let method = args.method.resolve()?;
    let shape = args.shape.resolve()?;
    let table = read_table(&args.input, true)?;
    let mat = table.to_matrix(&args.input.display().to_string())?;
    let ws = args.weights.resolve(mat.rows())?;
    let combiner = args
        .select_method
        .as_deref()
        .map(|name| CombiningMethod::parse(name, args.method.lambda))
        .transpose()?;
    let alpha = args.selection_alpha.unwrap_or(args.q);
    let rule = match args.rule {
        RuleKind::Bh => SelectionRule::StepUpOnCombined {
            alpha,
            shape: shape.clone(),
            adaptive_lambda: None,
            combiner,
        },
        RuleKind::Fixed => SelectionRule::FixedThresholdOnCombined {
            threshold: args
                .threshold
                .ok_or_else(|| usage("--rule fixed needs --threshold"))?,
            combiner,
        },
        RuleKind::Column => {
            let column = args.column.ok_or_else(|| usage("--rule column needs --column"))?;
            if column == 0 {
                return Err(usage("--column is 1-based"));
            }
            SelectionRule::StepUpOnColumn {
                column: column - 1,
                alpha,
                shape: shape.clone(),
            }
        }
    };
    let rep = replicability_analysis(&mat, &rule, method, &ws, args.q, &shape)?;
    let report = ReplicateReport {
        schema_version: SCHEMA_VERSION,
        command: "replicate",
        method,
        q: args.q,
        rule,
        beta: shape,
        selected: rep.features.iter().map(|f| f.feature + 1).collect(),
        selected_volume: rep.selected_volume,
        features: rep
            .features
            .iter()
            .map(|f| FeatureResult {
                row: f.feature + 1,
                id: table.ids.as_ref().map(|ids| ids[f.feature].clone()),
                khat: f.khat,
                threshold: f.threshold,
            })
            .collect(),
    };
    emit_json(args.out.as_deref(), &report)?;
    Ok(EXIT_OK)
}

/// Which bound an FDR check is held to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdrBound {
    /// `(α/m) Σ_{i ∈ M₀} v_i w_i`
    #[default]
    NullWeighted,
    /// `α`
    Level,
}

/// One Monte Carlo estimate requested by a scenario file. Weights are unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    FdrPc {
        #[serde(default)]
        name: Option<String>,
        u: usize,
        method: CombiningMethod,
        alpha: f64,
        #[serde(default)]
        shape: ShapeFunction,
        #[serde(default)]
        adaptive_lambda: Option<f64>,
        #[serde(default)]
        bound: FdrBound,
        #[serde(default)]
        report_only: bool,
    },
    Replicability {
        #[serde(default)]
        name: Option<String>,
        rule: SelectionRule,
        method: CombiningMethod,
        q: f64,
        #[serde(default)]
        beta: ShapeFunction,
        #[serde(default)]
        report_only: bool,
    },
    Dcc {
        #[serde(default)]
        name: Option<String>,
        u: usize,
        method: CombiningMethod,
        c_grid: Vec<f64>,
        statistic: DccStatistic,
        #[serde(default)]
        report_only: bool,
    },
}

impl Check {
    fn label(&self) -> String {
        match self {
            Check::FdrPc {
                name: Some(n), ..
            }
            | Check::Replicability {
                name: Some(n), ..
            }
            | Check::Dcc {
                name: Some(n), ..
            } => n.clone(),
            Check::FdrPc { u, method, alpha, .. } => format!("fdr_pc {} u={u} alpha={alpha}", method.name()),
            Check::Replicability { method, q, .. } => format!("replicability {} q={q}", method.name()),
            Check::Dcc { u, method, .. } => format!("dcc {} u={u}", method.name()),
        }
    }

    fn report_only(&self) -> bool {
        match self {
            Check::FdrPc { report_only, .. } | Check::Replicability { report_only, .. } | Check::Dcc { report_only, .. } => {
                *report_only
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScenario {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub scenario: SimulationScenario,
    #[serde(default)]
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSuite {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub scenarios: Vec<NamedScenario>,
}

/// Accepts either a single scenario object or `{"scenarios": [...]}`.
pub fn parse_scenarios(text: &str, path: &str) -> CliResult<Vec<NamedScenario>> {
    let json_err = |e: serde_json::Error| CliError::Parse {
        path: path.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    let scenarios = if value.get("scenarios").is_some() {
        serde_json::from_str::<ScenarioSuite>(text).map_err(json_err)?.scenarios
    } else {
        vec![serde_json::from_str::<NamedScenario>(text).map_err(json_err)?]
    };
    if scenarios.is_empty() {
        return Err(usage(format!("{path}: no scenarios")));
    }
    for (k, s) in scenarios.iter().enumerate() {
        s.scenario
            .validate()
            .map_err(|e| usage(format!("{path}: scenario {}: {e}", k + 1)))?;
    }
    Ok(scenarios)
}

/// One line of a simulate/verify report. `pass` is absent for report-only checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub scenario: String,
    pub check: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub estimate: f64,
    pub se: f64,
    pub reps: usize,
    pub bound: f64,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub command: String,
    pub records: Vec<CheckRecord>,
    pub all_pass: bool,
}

fn record(scenario: &str, check: &Check, c: Option<f64>, est: McEstimate, bound: f64) -> CheckRecord {
    CheckRecord {
        scenario: scenario.to_string(),
        check: check.label(),
        c,
        estimate: est.mean,
        se: est.se,
        reps: est.reps,
        bound,
        pass: (!check.report_only()).then(|| est.within(bound)),
    }
}

/// Runs every check of every scenario. The default check for a scenario
/// without any is BH-on-Simes replicability at q = 0.1.
pub fn run_checks(scenarios: &[NamedScenario]) -> crate::Result<Vec<CheckRecord>> {
    let mut records = Vec::new();
    for (k, named) in scenarios.iter().enumerate() {
        let s = &named.scenario;
        let label = named.name.clone().unwrap_or_else(|| format!("scenario {}", k + 1));
        let ws = WeightScheme::unit(s.m);
        let default_checks = [Check::Replicability {
            name: None,
            rule: SelectionRule::bh(0.1),
            method: CombiningMethod::Simes,
            q: 0.1,
            beta: ShapeFunction::Identity,
            report_only: false,
        }];
        let checks = if named.checks.is_empty() {
            &default_checks[..]
        } else {
            &named.checks[..]
        };
        for check in checks {
            match check {
                Check::FdrPc {
                    u,
                    method,
                    alpha,
                    shape,
                    adaptive_lambda,
                    bound,
                    ..
                } => {
                    let tc = match adaptive_lambda {
                        Some(lambda) => ThresholdCollection::adaptive_storey(*alpha, s.m, *lambda)?,
                        None => ThresholdCollection::new(*alpha, ws.prior_w.clone(), shape.clone())?,
                    };
                    let est = mc_fdr_pc(s, *u, *method, &ws, &tc)?;
                    let b = match bound {
                        FdrBound::NullWeighted => fdr_bound(s, *u, &ws, *alpha),
                        FdrBound::Level => *alpha,
                    };
                    records.push(record(&label, check, None, est, b));
                }
                Check::Replicability {
                    rule, method, q, beta, ..
                } => {
                    let est = mc_replicability_error(s, rule, *method, &ws, *q, beta)?;
                    records.push(record(&label, check, None, est, *q));
                }
                Check::Dcc {
                    u,
                    method,
                    c_grid,
                    statistic,
                    ..
                } => {
                    for (c, est) in dcc_probe(s, *u, *method, c_grid, *statistic)? {
                        records.push(record(&label, check, Some(c), est, c));
                    }
                }
            }
        }
    }
    Ok(records)
}

fn run_simulation(args: &SimArgs, verify: bool) -> CliResult<i32> {
    let path = args.scenario.display().to_string();
    let mut scenarios = parse_scenarios(&read_text(&args.scenario)?, &path)?;
    for named in &mut scenarios {
        if let Some(reps) = args.reps {
            named.scenario.reps = reps;
        }
        if let Some(seed) = args.seed {
            named.scenario.seed = seed;
        }
        named.scenario.validate()?;
    }
    let records = run_checks(&scenarios)?;
    let all_pass = records.iter().all(|r| r.pass != Some(false));
    if verify {
        for r in &records {
            let status = match r.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "INFO",
            };
            let c = r.c.map(|c| format!(" c={c}")).unwrap_or_default();
            eprintln!(
                "{status} {} / {}{c}: {:.5} (se {:.5}) vs bound {:.5}",
                r.scenario, r.check, r.estimate, r.se, r.bound
            );
        }
    }
    let report = SimulationReport {
        schema_version: SCHEMA_VERSION,
        command: if verify { "verify" } else { "simulate" }.into(),
        records,
        all_pass,
    };
    emit_json(args.out.as_deref(), &report)?;
    Ok(if verify && !all_pass {
        EXIT_BOUND_VIOLATION
    } else {
        EXIT_OK
    })
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<i32> {
    configure_threads()?;
    match &cli.command {
        Command::Combine(a) => run_combine(a),
        Command::PcTest(a) => run_pc_test(a),
        Command::Replicate(a) => run_replicate(a),
        Command::Simulate(a) => run_simulation(a, false),
        Command::Verify(a) => run_simulation(a, true),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}
