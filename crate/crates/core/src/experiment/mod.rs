//! Experiment runs on disk: one directory per run holding the config echo,
//! per-round reports and a summary table. Also the cost comparison of two runs.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::sim::{RoundReport, Simulation};
use crate::stpc::{CostLedger, CostTable, Op, Stage, ALL_OPS};

/// Environment variable overriding the output root.
pub const OUTPUT_DIR_ENV: &str = "FEDPROJ_OUTPUT_DIR";
pub const METADATA_FILE: &str = "metadata.json";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
/// Written when a run stops early; holds the error.
pub const PARTIAL_FILE: &str = "PARTIAL";

/// Columns of `summary.csv`, in order.
pub const SUMMARY_COLUMNS: [&str; 10] = [
    "round",
    "ma",
    "ba",
    "tpr",
    "tnr",
    "setup_bytes",
    "online_bytes",
    "mul_count",
    "cmp_count",
    "k",
];

/// One row of `summary.csv`. Missing MA/BA are empty cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub round: usize,
    pub ma: Option<f64>,
    pub ba: Option<f64>,
    pub tpr: f64,
    pub tnr: f64,
    pub setup_bytes: u64,
    pub online_bytes: u64,
    pub mul_count: u64,
    pub cmp_count: u64,
    pub k: usize,
}

impl From<&RoundReport> for SummaryRow {
    fn from(r: &RoundReport) -> Self {
        Self {
            round: r.round,
            ma: r.ma,
            ba: r.ba,
            tpr: r.tpr,
            tnr: r.tnr,
            setup_bytes: r.ledger.setup_bytes.total(),
            online_bytes: r.ledger.online_bytes.total(),
            mul_count: r.ledger.ops.mul,
            cmp_count: r.ledger.ops.cmp,
            k: r.k,
        }
    }
}

/// Contents of `metadata.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub config_hash: String,
    /// The config file exactly as given, when the run came from a file.
    pub config_text: Option<String>,
    pub config: ExperimentConfig,
    pub d: usize,
    pub k: usize,
}

#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub reports: Vec<RoundReport>,
}

/// `flag`, else the environment override, else `runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("runs"),
    }
}

/// Hex SHA-256 of the config's canonical JSON form.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Loads, validates and runs a config file.
pub fn run_experiment(config_path: &Path, out_root: &Path) -> Result<RunOutput> {
    let text = fs::read_to_string(config_path)?;
    let cfg = ExperimentConfig::from_toml(&text)?;
    let dir = config_path.parent().unwrap_or(Path::new("."));
    run_config(cfg, Some(text), dir, out_root)
}

/// Runs `cfg` into a fresh directory under `out_root`. Relative data paths
/// resolve against `base`. The echo keeps them as written.
pub fn run_config(cfg: ExperimentConfig, text: Option<String>, base: &Path, out_root: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let hash = config_hash(&cfg)?;
    let mut resolved = cfg.clone();
    resolved.resolve_paths(base);
    let mut sim = Simulation::new(resolved)?;

    let dir = create_run_dir(out_root, &format!("{}-s{}", &hash[..12], cfg.seed))?;
    let meta = RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        config_text: text,
        d: sim.dim(),
        k: sim.working_dim(),
        config: cfg,
    };
    match write_run(&dir, &meta, &mut sim) {
        Ok(reports) => Ok(RunOutput { dir, reports }),
        Err(e) => {
            let note = format!("run stopped early ({}): {e}\n", e.category());
            if let Err(io) = fs::write(dir.join(PARTIAL_FILE), note) {
                log::error!("could not write partial marker in {}: {io}", dir.display());
            }
            Err(e)
        }
    }
}

fn write_run(dir: &Path, meta: &RunMetadata, sim: &mut Simulation) -> Result<Vec<RoundReport>> {
    fs::write(dir.join(METADATA_FILE), serde_json::to_string_pretty(meta)? + "\n")?;
    let mut jsonl = OpenOptions::new().create_new(true).append(true).open(dir.join(REPORTS_FILE))?;
    let mut csv = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(OpenOptions::new().create_new(true).append(true).open(dir.join(SUMMARY_FILE))?);
    csv.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    csv.flush()?;

    let mut reports = Vec::with_capacity(meta.config.rounds);
    for _ in 0..meta.config.rounds {
        let report = sim.run_round()?;
        serde_json::to_writer(&mut jsonl, &report)?;
        jsonl.write_all(b"\n")?;
        jsonl.flush()?;
        csv.serialize(SummaryRow::from(&report)).map_err(csv_err)?;
        csv.flush()?;
        log::info!(
            "round {}: accepted {}/{}, tpr {:.2}, tnr {:.2}, ma {}",
            report.round,
            report.accepted.len(),
            report.sampled.len(),
            report.tpr,
            report.tnr,
            report.ma.map_or("-".into(), |m| format!("{m:.4}"))
        );
        reports.push(report);
    }
    Ok(reports)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Creates `root/name`, or `root/name-rN` for the first free `N`. Directory
/// creation is atomic, so parallel runs never share one.
fn create_run_dir(root: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(root)?;
    for attempt in 0.. {
        let dir = if attempt == 0 {
            root.join(name)
        } else {
            root.join(format!("{name}-r{attempt}"))
        };
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

/// Reads the rows of a `summary.csv`.
pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != SUMMARY_COLUMNS {
        return Err(Error::Comparison(format!("unexpected summary columns {header:?}")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

pub fn read_reports(path: &Path) -> Result<Vec<RoundReport>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// A finished (or partial) run read back from disk.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub metadata: RunMetadata,
    pub reports: Vec<RoundReport>,
}

impl RunRecord {
    /// Accepts a run directory or any file inside one.
    pub fn load(path: &Path) -> Result<Self> {
        let dir = if path.is_dir() {
            path
        } else {
            path.parent().unwrap_or(Path::new("."))
        };
        let meta_path = dir.join(METADATA_FILE);
        let metadata: RunMetadata = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(|e| {
            Error::Comparison(format!("cannot read {}: {e}", meta_path.display()))
        })?)?;
        let reports = read_reports(&dir.join(REPORTS_FILE))?;
        Ok(Self { metadata, reports })
    }

    /// Sum of every round's ledger.
    pub fn total_ledger(&self) -> CostLedger {
        let mut total = CostLedger::default();
        for r in &self.reports {
            total.merge(&r.ledger);
        }
        total
    }
}

/// One line of a cost comparison: the first run against the second.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub item: String,
    pub abbr: u64,
    pub baseline: u64,
    /// `baseline / abbr`; 1 when both are equal, none when only `abbr` is 0.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostComparison {
    pub n: usize,
    pub d: usize,
    pub k_abbr: usize,
    pub k_baseline: usize,
    pub rows: Vec<CostRow>,
}

impl CostComparison {
    pub fn row(&self, item: &str) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.item == item)
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "n = {}, d = {}, k (first) = {}, k (second) = {}\n{:<24} {:>16} {:>16} {:>10}\n",
            self.n, self.d, self.k_abbr, self.k_baseline, "item", "first", "second", "ratio"
        );
        for r in &self.rows {
            let ratio = r.ratio.map_or("-".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!("{:<24} {:>16} {:>16} {:>10}\n", r.item, r.abbr, r.baseline, ratio));
        }
        out
    }
}

fn op_name(op: Op) -> &'static str {
    match op {
        Op::Shr => "shr",
        Op::Add => "add",
        Op::Sub => "sub",
        Op::Mul => "mul",
        Op::Cmp => "cmp",
        Op::Mux => "mux",
        Op::Scale => "scale",
        Op::Trunc => "trunc",
        Op::Reveal => "reveal",
        Op::Func => "func",
    }
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Other => "other",
        Stage::Sharing => "sharing",
        Stage::Projection => "projection",
        Stage::Distance => "distance",
        Stage::Filter => "filter",
        Stage::Tuning => "tuning",
        Stage::Aggregation => "aggregation",
    }
}

/// Bytes both parties send for `count` instances of `op` under `costs`.
/// Local operators and dealer evaluations cost nothing on the wire.
pub fn op_bytes(op: Op, count: u64, costs: &CostTable) -> u64 {
    let per_party = match op {
        Op::Mul => costs.mul_setup_bytes + costs.mul_online_bytes,
        Op::Cmp => costs.cmp_setup_bytes + costs.cmp_online_bytes,
        Op::Mux => costs.mux_setup_bytes + costs.mux_online_bytes,
        Op::Reveal => costs.reveal_bytes,
        Op::Shr | Op::Add | Op::Sub | Op::Scale | Op::Trunc | Op::Func => 0,
    };
    2 * count * per_party
}

fn ratio(abbr: u64, baseline: u64) -> Option<f64> {
    if abbr == baseline {
        Some(1.0)
    } else if abbr == 0 {
        None
    } else {
        Some(baseline as f64 / abbr as f64)
    }
}

/// Per-operator, per-stage and per-phase totals of two runs, with the ratio
/// second / first. The runs must share `n` and `d`.
pub fn compare_costs(abbr: &RunRecord, baseline: &RunRecord) -> Result<CostComparison> {
    let (ma, mb) = (&abbr.metadata, &baseline.metadata);
    if ma.config.per_round != mb.config.per_round {
        return Err(Error::Comparison(format!(
            "runs sample different n: {} vs {}",
            ma.config.per_round, mb.config.per_round
        )));
    }
    if ma.d != mb.d {
        return Err(Error::Comparison(format!("runs have different d: {} vs {}", ma.d, mb.d)));
    }
    let (la, lb) = (abbr.total_ledger(), baseline.total_ledger());
    let mut rows = Vec::new();
    let mut push = |item: String, a: u64, b: u64| {
        rows.push(CostRow {
            item,
            abbr: a,
            baseline: b,
            ratio: ratio(a, b),
        })
    };
    for op in ALL_OPS {
        push(format!("ops.{}", op_name(op)), la.ops.get(op), lb.ops.get(op));
    }
    for op in ALL_OPS {
        push(
            format!("bytes.{}", op_name(op)),
            op_bytes(op, la.ops.get(op), &ma.config.costs),
            op_bytes(op, lb.ops.get(op), &mb.config.costs),
        );
    }
    let mut stages: Vec<Stage> = la.stages.keys().chain(lb.stages.keys()).copied().collect();
    stages.sort();
    stages.dedup();
    for stage in stages {
        for op in [Op::Mul, Op::Cmp, Op::Mux] {
            push(
                format!("{}.{}", stage_name(stage), op_name(op)),
                la.stage(stage).get(op),
                lb.stage(stage).get(op),
            );
        }
    }
    push("bytes.setup".into(), la.setup_bytes.total(), lb.setup_bytes.total());
    push("bytes.online".into(), la.online_bytes.total(), lb.online_bytes.total());
    push("bytes.total".into(), la.total_bytes(), lb.total_bytes());
    Ok(CostComparison {
        n: ma.config.per_round,
        d: ma.d,
        k_abbr: ma.k,
        k_baseline: mb.k,
        rows,
    })
}
