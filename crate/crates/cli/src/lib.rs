//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code, so tests can drive it
//! without spawning a process.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use fermap::baseline::{majorana_table, weight_stats, MappingExport, MappingKind};
use fermap::bell_tomography::{estimate_all_k_rdms, RdmEstimate, TomographyError};
use fermap::fermion_rdm::{
    exact_fermionic_rdm, fock_state, parse_occupations, rdm_from_stream, FermionError, FermionMapping,
};
use fermap::pauli::PauliString;
use fermap::qudit_hw::{
    builtin_fiducial, completeness_error, hw_sic_elements, sic_overlap_matrix, FiducialState, QuditError,
    DEFAULT_DELTA,
};
use fermap::state_sim::{block_rng, check_capacity, prepare_xi, sample_bell_shots, DenseState, ShotStream, SimError};
use fermap::ternary_tree::{verify_operators, TernaryTreeMapping};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;

/// RNG stream reserved for drawing random input states, away from the
/// streams used for shot blocks.
const STATE_STREAM: u64 = u64::MAX;

#[derive(Debug, Parser)]
#[command(name = "fermap", version, about = "Fermion-to-qubit mappings and Bell-basis RDM tomography")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the Majorana table of a mapping as JSON.
    Map(MapArgs),
    /// Pauli weight table over a range of mode counts.
    Stats(StatsArgs),
    /// Check anticommutation and squares of a mapping.
    Verify(VerifyArgs),
    /// Simulate Bell-basis tomography and estimate RDM elements.
    Tomograph(TomographArgs),
    /// Validate a qudit fiducial and print its SIC overlap matrix.
    QuditSic(QuditArgs),
}

fn parse_kind(s: &str) -> Result<MappingKind, String> {
    s.parse::<MappingKind>().map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    /// Haar-random pure state drawn from the seed.
    Random,
    /// All qubits in |0>.
    Zero,
    /// (|0...0> + |1...1>)/sqrt(2).
    Ghz,
}

#[derive(Debug, Args, Serialize)]
pub struct MapArgs {
    #[arg(long, value_parser = parse_kind, default_value = "ternary")]
    pub kind: MappingKind,
    #[arg(long, value_parser = parse_positive)]
    pub modes: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long, value_parser = parse_positive, default_value = "1")]
    pub min_modes: usize,
    #[arg(long, value_parser = parse_positive, default_value = "13")]
    pub max_modes: usize,
    /// Comma-separated mapping kinds.
    #[arg(long, value_parser = parse_kind, value_delimiter = ',', default_value = "ternary,jw,bk")]
    pub kinds: Vec<MappingKind>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: TableFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_parser = parse_kind, conflicts_with = "file")]
    pub kind: Option<MappingKind>,
    #[arg(long, value_parser = parse_positive, conflicts_with = "file")]
    pub modes: Option<usize>,
    /// Mapping JSON as written by `map`.
    #[arg(long)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TomographArgs {
    /// Number of system qubits (qubit mode).
    #[arg(long, value_parser = parse_positive)]
    pub qubits: Option<usize>,
    #[arg(long, value_parser = parse_positive, default_value = "1")]
    pub k: usize,
    #[arg(long, value_parser = parse_positive, default_value = "10000")]
    pub shots: usize,
    /// Generated and reported when absent.
    #[arg(long)]
    #[serde(skip)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_positive, default_value = "1")]
    #[serde(skip)]
    pub workers: usize,
    #[arg(long, value_enum, default_value = "random")]
    pub state: StateKind,
    /// Estimate Majorana products of an encoded Fock state.
    #[arg(long)]
    pub fermionic: bool,
    #[arg(long, value_parser = parse_positive, requires = "fermionic")]
    pub modes: Option<usize>,
    #[arg(long, value_parser = parse_kind, default_value = "ternary")]
    pub kind: MappingKind,
    /// Occupation string such as 101; defaults to alternating 1010...
    #[arg(long, requires = "fermionic")]
    pub occupations: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: TableFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the raw shot stream as JSON lines.
    #[arg(long)]
    pub stream_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct QuditArgs {
    /// Use the built-in fiducial of this dimension (2 or 3).
    #[arg(long, conflicts_with = "fiducial")]
    pub dimension: Option<usize>,
    /// Fiducial JSON {dimension, amplitudes: [[re, im], ...]}.
    #[arg(long)]
    pub fiducial: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Capacity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Capacity(_) => EXIT_CAPACITY,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Capacity(m) => m,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Capacity { .. } => CliError::Capacity(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<FermionError> for CliError {
    fn from(e: FermionError) -> Self {
        match e {
            FermionError::Sim(s) => s.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TomographyError> for CliError {
    fn from(e: TomographyError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<QuditError> for CliError {
    fn from(e: QuditError) -> Self {
        match e {
            QuditError::Sim(s) => s.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// What a subcommand produced: text for stdout or `--output`, plus the
/// exit code to report.
#[derive(Debug)]
pub struct Output {
    pub text: String,
    pub code: i32,
}

impl Output {
    fn ok(text: String) -> Self {
        Self { text, code: EXIT_OK }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let (output, target) = match dispatch(&cli.command, err) {
        Ok(result) => result,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            return e.exit_code();
        }
    };
    let written = match target {
        Some(path) => fs::write(path, &output.text),
        None => out.write_all(output.text.as_bytes()),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: {e}");
        return EXIT_USAGE;
    }
    output.code
}

fn dispatch<'a>(command: &'a Command, err: &mut dyn Write) -> Result<(Output, Option<&'a Path>), CliError> {
    match command {
        Command::Map(a) => Ok((cmd_map(a)?, a.output.as_deref())),
        Command::Stats(a) => Ok((cmd_stats(a)?, a.output.as_deref())),
        Command::Verify(a) => Ok((cmd_verify(a)?, None)),
        Command::Tomograph(a) => {
            let seed = match a.seed {
                Some(s) => s,
                None => {
                    let s = rand::random::<u64>();
                    let _ = writeln!(err, "seed: {s}");
                    s
                }
            };
            Ok((cmd_tomograph(a, seed)?, a.output.as_deref()))
        }
        Command::QuditSic(a) => Ok((cmd_qudit_sic(a)?, None)),
    }
}

fn tool() -> Value {
    json!({ "name": "fermap", "version": env!("CARGO_PKG_VERSION") })
}

fn envelope<C: Serialize, R: Serialize>(command: &str, config: &C, seed: Option<u64>, result: R) -> String {
    let mut doc = json!({
        "tool": tool(),
        "command": command,
        "config": config,
    });
    if let Some(s) = seed {
        doc["seed"] = json!(s);
    }
    doc["result"] = serde_json::to_value(result).expect("serializable result");
    let mut text = serde_json::to_string_pretty(&doc).expect("json");
    text.push('\n');
    text
}

/// CSV with `#` comment lines carrying the tool version, config and seed.
fn csv_document<C: Serialize, R: Serialize>(config: &C, seed: Option<u64>, rows: &[R]) -> Result<String, CliError> {
    let mut head = format!("# tool=fermap {}\n# config={}\n", env!("CARGO_PKG_VERSION"), json!(config));
    if let Some(s) = seed {
        head.push_str(&format!("# seed={s}\n"));
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let body = writer.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(head + &String::from_utf8(body).expect("utf-8 csv"))
}

pub fn cmd_map(a: &MapArgs) -> Result<Output, CliError> {
    let export = MappingExport::build(a.kind, a.modes).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Output::ok(envelope("map", a, None, export)))
}

#[derive(Debug, Serialize)]
struct StatsRow {
    n: usize,
    kind: String,
    mean_weight: f64,
    max_weight: usize,
}

pub fn cmd_stats(a: &StatsArgs) -> Result<Output, CliError> {
    if a.min_modes > a.max_modes {
        return Err(CliError::Usage(format!("--min-modes {} exceeds --max-modes {}", a.min_modes, a.max_modes)));
    }
    let mut rows = Vec::new();
    for n in a.min_modes..=a.max_modes {
        for &kind in &a.kinds {
            let table = majorana_table(kind, n).map_err(|e| CliError::Usage(e.to_string()))?;
            let stats = weight_stats(&table).map_err(|e| CliError::Usage(e.to_string()))?;
            rows.push(StatsRow { n, kind: kind.to_string(), mean_weight: stats.mean, max_weight: stats.max });
        }
    }
    let text = match a.format {
        TableFormat::Csv => csv_document(a, None, &rows)?,
        TableFormat::Json => envelope("stats", a, None, &rows),
    };
    Ok(Output::ok(text))
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<Output, CliError> {
    let (source, ops, identity_product) = match (&a.file, a.kind, a.modes) {
        (Some(path), _, _) => {
            let text = fs::read_to_string(path)?;
            let bad = |e: serde_json::Error| CliError::Usage(format!("{}: {e}", path.display()));
            let doc: Value = serde_json::from_str(&text).map_err(bad)?;
            // accept both the bare table and the full `map` output
            let body = doc.get("result").cloned().unwrap_or(doc);
            let export: MappingExport = serde_json::from_value(body).map_err(bad)?;
            (path.display().to_string(), export.operators(), None)
        }
        (None, Some(kind), Some(n)) => {
            let (ops, identity) = if kind == MappingKind::TernaryTree {
                let tree = TernaryTreeMapping::build(n).map_err(|e| CliError::Usage(e.to_string()))?;
                (tree.table().to_vec(), tree.verify().identity_product)
            } else {
                (majorana_table(kind, n).map_err(|e| CliError::Usage(e.to_string()))?, None)
            };
            (format!("{kind} n={n}"), ops, identity)
        }
        _ => return Err(CliError::Usage("verify needs --file or both --kind and --modes".into())),
    };
    let mut report = verify_operators(&ops);
    report.identity_product = identity_product;
    let passed = report.passed();
    let text = envelope("verify", a, None, json!({ "source": source, "passed": passed, "report": report }));
    Ok(Output { text, code: if passed { EXIT_OK } else { EXIT_FAILED } })
}

fn input_state(kind: StateKind, qubits: usize, seed: u64) -> Result<DenseState, CliError> {
    let state = match kind {
        StateKind::Random => DenseState::random(2, qubits, &mut block_rng(seed, STATE_STREAM))?,
        StateKind::Zero => DenseState::zero_state(2, qubits)?,
        StateKind::Ghz => {
            let len = check_capacity(2, qubits)?;
            let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); len];
            amps[0] = num_complex::Complex64::new(1.0, 0.0);
            amps[len - 1] = num_complex::Complex64::new(1.0, 0.0);
            DenseState::normalized(2, qubits, amps)?
        }
    };
    Ok(state)
}

#[derive(Debug, Serialize)]
struct QubitRow {
    qubits: String,
    letters: String,
    value: f64,
    std_error: f64,
    num_shots: usize,
    exact: f64,
    abs_error: f64,
}

#[derive(Debug, Serialize)]
struct QubitRowJson<'a> {
    #[serde(flatten)]
    estimate: &'a RdmEstimate,
    exact: f64,
    abs_error: f64,
}

#[derive(Debug, Serialize)]
struct FermionRow {
    indices: String,
    value_re: f64,
    value_im: f64,
    hermitized: f64,
    std_error: f64,
    pauli: String,
    weight: usize,
    attenuation: f64,
    exact_re: f64,
    exact_im: f64,
    abs_error: f64,
}

fn write_stream(path: &Path, stream: &ShotStream) -> Result<(), CliError> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    stream.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_tomograph(a: &TomographArgs, seed: u64) -> Result<Output, CliError> {
    #[derive(Serialize)]
    struct Config<'a> {
        #[serde(flatten)]
        args: &'a TomographArgs,
        seed: u64,
    }
    let config = Config { args: a, seed };
    if a.fermionic {
        if a.qubits.is_some() {
            return Err(CliError::Usage("--qubits and --fermionic are exclusive; use --modes".into()));
        }
        let n = a.modes.ok_or_else(|| CliError::Usage("--fermionic needs --modes".into()))?;
        check_capacity(2, 2 * n)?;
        let mapping = FermionMapping::new(a.kind, n)?;
        let occupations = match &a.occupations {
            Some(s) => parse_occupations(s).ok_or_else(|| CliError::Usage(format!("bad occupation string {s:?}")))?,
            None => (0..n).map(|j| j % 2 == 0).collect(),
        };
        let state = fock_state(&mapping, &occupations)?;
        let stream = sample_bell_shots(&state, &prepare_xi(), a.shots, seed, a.workers)?;
        if let Some(path) = &a.stream_out {
            write_stream(path, &stream)?;
        }
        let sampled = rdm_from_stream(&stream, &mapping, a.k)?;
        let exact = exact_fermionic_rdm(&state, &mapping, a.k)?;
        let rows: Vec<FermionRow> = sampled
            .entries
            .iter()
            .zip(&exact.entries)
            .map(|(s, e)| FermionRow {
                indices: s.indices.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(" "),
                value_re: s.value.re,
                value_im: s.value.im,
                hermitized: s.hermitized.re,
                std_error: s.std_error.unwrap_or(f64::NAN),
                pauli: s.pauli.to_string(),
                weight: s.weight,
                attenuation: s.attenuation,
                exact_re: e.value.re,
                exact_im: e.value.im,
                abs_error: (s.value - e.value).norm(),
            })
            .collect();
        let text = match a.format {
            TableFormat::Csv => csv_document(&config, Some(seed), &rows)?,
            TableFormat::Json => {
                let mut result = serde_json::to_value(&sampled).expect("json");
                let entries = result["entries"].as_array_mut().expect("entries");
                for (entry, e) in entries.iter_mut().zip(&exact.entries) {
                    entry["exact_re"] = json!(e.value.re);
                    entry["exact_im"] = json!(e.value.im);
                }
                result["occupations"] = json!(occupations.iter().map(|&o| if o { '1' } else { '0' }).collect::<String>());
                envelope("tomograph", &config, Some(seed), result)
            }
        };
        return Ok(Output::ok(text));
    }

    let n = a.qubits.ok_or_else(|| CliError::Usage("tomograph needs --qubits or --fermionic --modes".into()))?;
    check_capacity(2, 2 * n)?;
    let state = input_state(a.state, n, seed)?;
    let stream = sample_bell_shots(&state, &prepare_xi(), a.shots, seed, a.workers)?;
    if let Some(path) = &a.stream_out {
        write_stream(path, &stream)?;
    }
    let estimates = estimate_all_k_rdms(&stream, a.k, n)?;
    let exact: Vec<f64> = estimates
        .iter()
        .map(|e| {
            let op: PauliString = e.operator();
            state.expectation(&op).map_err(CliError::from)
        })
        .collect::<Result<_, _>>()?;
    let text = match a.format {
        TableFormat::Csv => {
            let rows: Vec<QubitRow> = estimates
                .iter()
                .zip(&exact)
                .map(|(e, &x)| QubitRow {
                    qubits: e.qubits.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" "),
                    letters: e.letters_string(),
                    value: e.value,
                    std_error: e.std_error,
                    num_shots: e.num_shots,
                    exact: x,
                    abs_error: (e.value - x).abs(),
                })
                .collect();
            csv_document(&config, Some(seed), &rows)?
        }
        TableFormat::Json => {
            let rows: Vec<QubitRowJson> = estimates
                .iter()
                .zip(&exact)
                .map(|(e, &x)| QubitRowJson { estimate: e, exact: x, abs_error: (e.value - x).abs() })
                .collect();
            envelope("tomograph", &config, Some(seed), json!({ "num_qubits": n, "k": a.k, "estimates": rows }))
        }
    };
    Ok(Output::ok(text))
}

pub fn cmd_qudit_sic(a: &QuditArgs) -> Result<Output, CliError> {
    let fiducial = match (&a.fiducial, a.dimension) {
        (Some(path), _) => FiducialState::from_json(&fs::read_to_string(path)?)?,
        (None, Some(d)) => builtin_fiducial(d)?,
        (None, None) => return Err(CliError::Usage("qudit-sic needs --dimension or --fiducial".into())),
    };
    let report = fiducial.report(a.threshold);
    let matrix = sic_overlap_matrix(&fiducial);
    let completeness = completeness_error(&hw_sic_elements(&fiducial));
    let code = if report.valid { EXIT_OK } else { EXIT_FAILED };
    let text = match a.format {
        ReportFormat::Json => {
            let rows: Vec<Vec<f64>> = matrix.rows().into_iter().map(|r| r.to_vec()).collect();
            envelope(
                "qudit-sic",
                a,
                None,
                json!({ "validation": report, "completeness_error": completeness, "sic_overlaps": rows }),
            )
        }
        ReportFormat::Text => {
            let mut s = format!("fermap {}\n", env!("CARGO_PKG_VERSION"));
            s.push_str(&format!("config {}\n", json!(a)));
            s.push_str(&report.to_string());
            s.push_str(&format!("completeness error {completeness:.3e}\n"));
            s.push_str("SIC overlaps |<psi_i|psi_j>|^2 (i = h*D + l)\n");
            for row in matrix.rows() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
                s.push_str(&cells.join(" "));
                s.push('\n');
            }
            s
        }
    };
    Ok(Output { text, code })
}
