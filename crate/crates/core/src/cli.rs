//! Command-line experiment runner: single runs, parameter sweeps and
//! circuit generation.
//!
//! Exit codes: 0 outputs match the reference, 1 they do not, 2 bad
//! configuration, 3 the run aborted.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{gen_parity_tree, gen_random_layered, LayeredCircuit};
use crate::netsim::Trace;
use crate::protocol::{robust_compute, AdversaryKind, Overrides, ProtocolError, RunReport, RunSetup};

/// Column order of `metrics.csv`.
pub const METRICS_HEADER: [&str; 8] = ["n", "d", "omega", "max_fan", "total_rounds", "restarts", "crashes", "correct"];

/// Column order of `sweep.csv`: the grid cell, then the metrics, then the
/// error of a failed cell.
pub const SWEEP_HEADER: [&str; 13] = [
    "cell",
    "alpha",
    "adversary",
    "circuit",
    "n",
    "d",
    "omega",
    "max_fan",
    "total_rounds",
    "restarts",
    "crashes",
    "correct",
    "error",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Protocol(ProtocolError::Config(_) | ProtocolError::Ldc(_) | ProtocolError::Circuit(_)) => 2,
            Self::Io { .. } | Self::Protocol(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "cliquefort", version, about = "Crash-resilient circuit computation on a simulated clique")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration and write metrics.csv, trace.jsonl and report.json.
    Run(RunArgs),
    /// Run every cell of a parameter grid and write sweep.csv.
    Sweep(SweepArgs),
    /// Write a generated circuit as a circuit file.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Field size; the network has q^r nodes.
    #[arg(long, default_value_t = 5)]
    pub q: u32,
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    /// Relative erasure tolerance, as "0.5" or "1/2".
    #[arg(long, default_value = "1/2")]
    pub delta: String,
    /// Crash fraction, below delta.
    #[arg(long, default_value = "1/4")]
    pub alpha: String,
    /// Bandwidth multiplier.
    #[arg(long, default_value_t = 2)]
    pub b: u32,
    /// none, random, greedy, storer-killer, layer-spiker or scripted:TRACE.jsonl
    #[arg(long, default_value = "none")]
    pub adversary: String,
    /// Seeds the random adversary and random inputs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// A circuit file, gen:parity:INPUTS or gen:random:DEPTH:WIDTH:MAX_FAN:SEED.
    #[arg(long, default_value = "gen:parity:8")]
    pub circuit: String,
    /// Input bits as hex (bit k of the input is bit k%8 of byte k/8) or as
    /// bits:0110...; random from --seed if absent.
    #[arg(long)]
    pub inputs: Option<String>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Constant override KEY=VAL; may repeat.
    #[arg(long = "override", value_name = "KEY=VAL")]
    pub overrides: Vec<String>,
    /// Record one trace event per message.
    #[arg(long)]
    pub verbose_trace: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Network sizes; each must be one of the presets 25, 27, 49.
    #[arg(long, value_delimiter = ',', default_value = "25")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2")]
    pub alpha: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "none")]
    pub adversary: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "gen:parity:8")]
    pub circuit: Vec<String>,
    #[arg(long, default_value = "1/2")]
    pub delta: String,
    #[arg(long, default_value_t = 2)]
    pub b: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long = "override", value_name = "KEY=VAL")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// gen:parity:INPUTS or gen:random:DEPTH:WIDTH:MAX_FAN:SEED.
    #[arg(long)]
    pub circuit: String,
    /// Assign input owners round robin over this many nodes.
    #[arg(long, default_value_t = 25)]
    pub nodes: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// `(q, r)` of the desk-scale network sizes.
pub fn preset(n: usize) -> Option<(u32, usize)> {
    match n {
        25 => Some((5, 2)),
        27 => Some((3, 3)),
        49 => Some((7, 2)),
        _ => None,
    }
}

/// Parses "1/2", "0.25" or "0" into an exact fraction.
pub fn parse_ratio(s: &str) -> Result<Ratio<u64>, CliError> {
    let bad = || CliError::Config(format!("not a fraction: {s:?}"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let num: u64 = a.trim().parse().map_err(|_| bad())?;
        let den: u64 = b.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(num, den));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let scale = 10u64.pow(frac.len() as u32);
    let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let num = int.checked_mul(scale).and_then(|x| x.checked_add(frac)).ok_or_else(bad)?;
    Ok(Ratio::new(num, scale))
}

/// Loads a circuit file or builds a generated one. Generated circuits get
/// input owners round robin over `n` nodes.
pub fn load_circuit(spec: &str, n: usize) -> Result<LayeredCircuit, CliError> {
    let Some(rest) = spec.strip_prefix("gen:") else {
        return LayeredCircuit::load(Path::new(spec)).map_err(|e| CliError::Config(format!("{spec}: {e}")));
    };
    let parts: Vec<&str> = rest.split(':').collect();
    let num = |s: &str| -> Result<u64, CliError> {
        s.parse()
            .map_err(|_| CliError::Config(format!("bad number {s:?} in circuit spec {spec:?}")))
    };
    let mut c = match parts.as_slice() {
        ["parity", k] => gen_parity_tree(num(k)? as usize),
        ["random", d, w, f, seed] => gen_random_layered(num(d)? as u32, num(w)? as usize, num(f)? as usize, num(seed)?),
        _ => return Err(CliError::Config(format!("unknown circuit spec {spec:?}"))),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    c.assign_owners_round_robin(n);
    Ok(c)
}

/// Decodes `--inputs` for a circuit with `count` INPUT gates.
pub fn parse_inputs(spec: Option<&str>, count: usize, seed: u64) -> Result<Vec<bool>, CliError> {
    let Some(spec) = spec else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok((0..count).map(|_| rng.gen()).collect());
    };
    let bits: Vec<bool> = if let Some(b) = spec.strip_prefix("bits:") {
        b.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(CliError::Config(format!("bad bit {c:?} in --inputs"))),
            })
            .collect::<Result<_, _>>()?
    } else {
        let bytes = hex::decode(spec.trim_start_matches("0x"))
            .map_err(|e| CliError::Config(format!("--inputs is not hex: {e}")))?;
        if bytes.len() != count.div_ceil(8) {
            return Err(CliError::Config(format!(
                "--inputs has {} bytes, the circuit needs {}",
                bytes.len(),
                count.div_ceil(8)
            )));
        }
        (0..count).map(|k| (bytes[k / 8] >> (k % 8)) & 1 == 1).collect()
    };
    if bits.len() != count {
        return Err(CliError::Config(format!("--inputs has {} bits, the circuit needs {count}", bits.len())));
    }
    Ok(bits)
}

pub fn parse_adversary(spec: &str) -> Result<AdversaryKind, CliError> {
    if let Some(path) = spec.strip_prefix("scripted:") {
        let path = Path::new(path);
        let file = File::open(path).map_err(io_err(path))?;
        let events = Trace::read_jsonl(BufReader::new(file)).map_err(|e| CliError::Config(e.to_string()))?;
        return Ok(AdversaryKind::Scripted(events));
    }
    Ok(spec.parse()?)
}

fn parse_overrides(items: &[String]) -> Result<Overrides, CliError> {
    let mut ov = Overrides::default();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {item:?} is not KEY=VAL")))?;
        ov.set(k.trim(), v.trim())?;
    }
    Ok(ov)
}

/// Everything one run needs, fully parsed.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub setup: RunSetup,
    #[serde(skip)]
    pub adversary: AdversaryKind,
    pub adversary_name: String,
    pub seed: u64,
    pub circuit_spec: String,
    #[serde(skip)]
    pub circuit: LayeredCircuit,
    pub inputs: Vec<bool>,
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> Result<Self, CliError> {
        let n = (a.q as usize)
            .checked_pow(a.r as u32)
            .ok_or_else(|| CliError::Config("q^r overflows".into()))?;
        let mut setup = RunSetup::new(a.q, a.r);
        setup.delta = parse_ratio(&a.delta)?;
        setup.alpha = parse_ratio(&a.alpha)?;
        setup.b = a.b;
        setup.overrides = parse_overrides(&a.overrides)?;
        setup.verbose_trace = a.verbose_trace;
        let circuit = load_circuit(&a.circuit, n)?;
        let inputs = parse_inputs(a.inputs.as_deref(), circuit.num_inputs(), a.seed)?;
        let adversary = parse_adversary(&a.adversary)?;
        Ok(Self {
            setup,
            adversary_name: adversary.name().to_string(),
            adversary,
            seed: a.seed,
            circuit_spec: a.circuit.clone(),
            circuit,
            inputs,
        })
    }

    pub fn execute(&self) -> Result<RunReport, CliError> {
        Ok(robust_compute(
            &self.circuit,
            &self.inputs,
            &self.setup,
            self.adversary.build(self.seed),
        )?)
    }
}

/// The fixed `metrics.csv` row of a report.
pub fn metrics_row(rep: &RunReport) -> [String; 8] {
    [
        rep.constants.n.to_string(),
        rep.circuit.depth.to_string(),
        rep.circuit.width.to_string(),
        rep.circuit.max_fan.to_string(),
        rep.total_rounds.to_string(),
        rep.restarts.to_string(),
        rep.crashes.to_string(),
        rep.correct.to_string(),
    ]
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config: &'a RunConfig,
    report: &'a RunReport,
}

/// Runs `cfg` and writes its artifacts to `out_dir`.
pub fn run_to_dir(cfg: &RunConfig, out_dir: &Path) -> Result<RunReport, CliError> {
    let rep = cfg.execute()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let path = out_dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    w.write_record(METRICS_HEADER)
        .and_then(|_| w.write_record(metrics_row(&rep)))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    w.flush().map_err(io_err(&path))?;

    let path = out_dir.join("trace.jsonl");
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut buf = BufWriter::new(file);
    rep.trace.write_jsonl(&mut buf).map_err(io_err(&path))?;
    buf.flush().map_err(io_err(&path))?;

    let path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&ReportFile { config: cfg, report: &rep }).expect("plain data");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(rep)
}

/// One sweep cell, in grid order.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub n: usize,
    pub alpha: String,
    pub adversary: String,
    pub circuit: String,
}

/// Grid cells ordered by n, then alpha, adversary and circuit.
pub fn sweep_cells(a: &SweepArgs) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &n in &a.n {
        for alpha in &a.alpha {
            for adversary in &a.adversary {
                for circuit in &a.circuit {
                    cells.push(SweepCell {
                        n,
                        alpha: alpha.clone(),
                        adversary: adversary.clone(),
                        circuit: circuit.clone(),
                    });
                }
            }
        }
    }
    cells
}

fn cell_config(a: &SweepArgs, cell: &SweepCell) -> Result<RunConfig, CliError> {
    let (q, r) = preset(cell.n).ok_or_else(|| CliError::Config(format!("no preset for n = {}", cell.n)))?;
    RunConfig::from_args(&RunArgs {
        q,
        r,
        delta: a.delta.clone(),
        alpha: cell.alpha.clone(),
        b: a.b,
        adversary: cell.adversary.clone(),
        seed: a.seed,
        circuit: cell.circuit.clone(),
        inputs: None,
        out_dir: a.out_dir.clone(),
        overrides: a.overrides.clone(),
        verbose_trace: false,
    })
}

/// Runs all cells concurrently; one row per cell in grid order. A failed
/// cell is recorded in its row and does not stop the sweep.
pub fn sweep(a: &SweepArgs) -> Vec<(SweepCell, Result<RunReport, CliError>)> {
    sweep_cells(a)
        .into_par_iter()
        .map(|cell| {
            let res = cell_config(a, &cell).and_then(|cfg| cfg.execute());
            (cell, res)
        })
        .collect()
}

pub fn sweep_row(i: usize, cell: &SweepCell, res: &Result<RunReport, CliError>) -> Vec<String> {
    let mut row = vec![i.to_string(), cell.alpha.clone(), cell.adversary.clone(), cell.circuit.clone()];
    match res {
        Ok(rep) => {
            row.extend(metrics_row(rep));
            row.push(String::new());
        }
        Err(e) => {
            row.push(cell.n.to_string());
            row.extend(std::iter::repeat_n(String::new(), 6));
            row.push("false".into());
            row.push(e.to_string());
        }
    }
    row
}

fn write_sweep(path: &Path, rows: &[(SweepCell, Result<RunReport, CliError>)]) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for (i, (cell, res)) in rows.iter().enumerate() {
        w.write_record(sweep_row(i, cell, res)).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn cmd_run(a: &RunArgs) -> Result<i32, CliError> {
    let cfg = RunConfig::from_args(a)?;
    let rep = run_to_dir(&cfg, &a.out_dir)?;
    let show = |bits: &[bool]| bits.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>();
    println!(
        "n={} d={} rounds={} restarts={} crashes={} outputs={} expected={} correct={}",
        rep.constants.n,
        rep.circuit.depth,
        rep.total_rounds,
        rep.restarts,
        rep.crashes,
        show(&rep.outputs),
        show(&rep.expected),
        rep.correct
    );
    for v in &rep.violations {
        eprintln!("invariant {} at round {}: {}", v.kind, v.round, v.detail);
    }
    Ok(if rep.correct { 0 } else { 1 })
}

fn cmd_sweep(a: &SweepArgs) -> Result<i32, CliError> {
    for alpha in &a.alpha {
        parse_ratio(alpha)?;
    }
    for &n in &a.n {
        preset(n).ok_or_else(|| CliError::Config(format!("no preset for n = {n}")))?;
    }
    let rows = sweep(a);
    fs::create_dir_all(&a.out_dir).map_err(io_err(&a.out_dir))?;
    let path = a.out_dir.join("sweep.csv");
    write_sweep(&path, &rows)?;
    let failed = rows.iter().filter(|(_, r)| !matches!(r, Ok(rep) if rep.correct)).count();
    println!("{} cells, {failed} not correct; wrote {}", rows.len(), path.display());
    Ok(if failed == 0 { 0 } else { 1 })
}

fn cmd_gen(a: &GenArgs) -> Result<i32, CliError> {
    if !a.circuit.starts_with("gen:") {
        return Err(CliError::Config("gen needs a gen: circuit spec".into()));
    }
    let c = load_circuit(&a.circuit, a.nodes)?;
    fs::write(&a.out, c.to_json() + "\n").map_err(io_err(&a.out))?;
    let r = c.report();
    println!("depth {} width {} max fan {} -> {}", r.depth, r.width, r.max_fan, a.out.display());
    Ok(0)
}

pub fn dispatch(cli: &Cli) -> i32 {
    let res = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gen(a) => cmd_gen(a),
    };
    res.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}

/// Entry point of the binary. Verbosity comes from `CLIQUEFORT_LOG`.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CLIQUEFORT_LOG", "warn")).init();
    let cli = Cli::parse();
    info!("{:?}", cli.command);
    dispatch(&cli)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios() {
        assert_eq!(parse_ratio("1/2").unwrap(), Ratio::new(1, 2));
        assert_eq!(parse_ratio("0.2").unwrap(), Ratio::new(1, 5));
        assert_eq!(parse_ratio("0").unwrap(), Ratio::new(0, 1));
        assert_eq!(parse_ratio(".25").unwrap(), Ratio::new(1, 4));
        for bad in ["1/0", "x", "0.-1", "1.2.3"] {
            assert!(parse_ratio(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn inputs() {
        // 0x4d = 0100_1101, read from bit 0 upward.
        let want: Vec<bool> = "10110010".chars().map(|c| c == '1').collect();
        assert_eq!(parse_inputs(Some("4d"), 8, 0).unwrap(), want);
        assert_eq!(parse_inputs(Some("bits:10110010"), 8, 0).unwrap(), want);
        assert!(parse_inputs(Some("4d4d"), 8, 0).is_err());
        assert!(parse_inputs(Some("bits:101"), 8, 0).is_err());
        assert_eq!(parse_inputs(None, 9, 3).unwrap(), parse_inputs(None, 9, 3).unwrap());
    }

    #[test]
    fn circuit_specs() {
        let c = load_circuit("gen:parity:8", 25).unwrap();
        assert_eq!(c.num_inputs(), 8);
        let c = load_circuit("gen:random:4:40:6:1", 25).unwrap();
        assert_eq!(c.report().depth, 4);
        assert!(load_circuit("gen:cube:3", 25).is_err());
        assert!(load_circuit("/nonexistent.json", 25).is_err());
    }

    #[test]
    fn sweep_grid_order() {
        let a = SweepArgs {
            n: vec![25, 27],
            alpha: vec!["0".into(), "0.1".into()],
            adversary: vec!["none".into(), "greedy".into()],
            circuit: vec!["gen:parity:8".into()],
            delta: "1/2".into(),
            b: 2,
            seed: 0,
            out_dir: PathBuf::from("unused"),
            overrides: vec![],
        };
        let cells = sweep_cells(&a);
        assert_eq!(cells.len(), 8);
        assert_eq!((cells[0].n, cells[0].alpha.as_str(), cells[0].adversary.as_str()), (25, "0", "none"));
        assert_eq!((cells[1].n, cells[1].alpha.as_str(), cells[1].adversary.as_str()), (25, "0", "greedy"));
        assert_eq!(cells[7].n, 27);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let abort = CliError::Protocol(ProtocolError::Sim(crate::netsim::SimError::RoundLimit(3)));
        assert_eq!(abort.exit_code(), 3);
    }
}
