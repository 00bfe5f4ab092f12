//! Command implementations behind the `eventum` binary.
//!
//! Each `cmd_*` function returns the text for standard output and an exit
//! status, so the commands can be driven from tests without spawning a
//! process. Exit statuses: 0 success or compatible, 1 negative verdict,
//! 2 input error.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use eventum_core::embed::{self, ChainLayout};
use eventum_core::eventum::{self, CompatibilityReport};
use eventum_core::io::{self, LabelSummary, Provenance, RunRecord, TrajectoryRecord, VerifyInput};
use eventum_core::models::{self, GeigerParams};
use eventum_core::{tol, vnalg, Error};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Negative = 1,
    InputError = 2,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Result of a command: text for standard output and an exit status.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub status: Status,
    pub stdout: String,
}

/// A failed command, printed to standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            status: Status::InputError,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::input(e.to_string())
    }
}

pub type CmdResult = Result<Outcome, Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn in_file(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::input(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Renders a report in the `key: value` layout printed by `verify`.
/// Residuals use the shortest round-trip form, so they equal the library
/// values exactly.
pub fn render_report(report: &CompatibilityReport, labels: &[String]) -> String {
    let name = |i: usize| labels.get(i).cloned().unwrap_or_else(|| i.to_string());
    let mut out = String::new();
    writeln!(out, "mode: {}", report.mode.as_str()).unwrap();
    match &report.f_map {
        Some(f) => {
            writeln!(out, "f:").unwrap();
            for (x, y) in f.iter().enumerate() {
                match y {
                    Some(y) => writeln!(out, "  {} -> {}", name(x), name(*y)).unwrap(),
                    None => writeln!(out, "  {} -> (outside window)", name(x)).unwrap(),
                }
            }
        }
        None => writeln!(out, "f: undefined").unwrap(),
    }
    writeln!(out, "residual_row_uniqueness: {:e}", report.residual_row_uniqueness).unwrap();
    writeln!(out, "residual_completeness: {:e}", report.residual_completeness).unwrap();
    writeln!(out, "residual_coisometry: {:e}", report.residual_coisometry).unwrap();
    writeln!(out, "residual_orthogonality: {:e}", report.residual_orthogonality).unwrap();
    if let Some(r) = report.inclusion_beables {
        writeln!(out, "inclusion_beables: {r:e}").unwrap();
    }
    if let Some(r) = report.inclusion_predictables {
        writeln!(out, "inclusion_predictables: {r:e}").unwrap();
    }
    if !report.violations.is_empty() {
        writeln!(out, "findings:").unwrap();
        for v in &report.violations {
            writeln!(out, "  - {v}").unwrap();
        }
    }
    let verdict = if report.compatible { "compatible" } else { "not compatible" };
    writeln!(out, "verdict: {verdict}").unwrap();
    out
}

/// Checks a model or raw unitary document.
pub fn cmd_verify(path: &Path, tolerance: f64) -> CmdResult {
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(Failure::input(format!("tolerance {tolerance} must be positive")));
    }
    let text = read_text(path)?;
    let (report, labels): (_, Vec<String>) = match io::read_verify_input(&text).map_err(in_file(path))? {
        VerifyInput::Model(file) => {
            let labels = file.model.labels().iter().map(ToString::to_string).collect();
            (eventum::model_report(&file.model, tolerance), labels)
        }
        VerifyInput::Unitary(u) => {
            match eventum::check_compatibility_with(&u.matrix, u.num_labels, u.dim_l, tolerance) {
                Ok(report) => (report, (0..u.num_labels).map(|i| i.to_string()).collect()),
                Err(e @ Error::NotUnitary { .. }) => {
                    return Ok(Outcome {
                        status: Status::Negative,
                        stdout: format!("findings:\n  - {e}\nverdict: not compatible\n"),
                    })
                }
                Err(e) => return Err(in_file(path)(e)),
            }
        }
    };
    Ok(Outcome {
        status: if report.compatible { Status::Success } else { Status::Negative },
        stdout: render_report(&report, &labels),
    })
}

/// Options of `simulate`.
#[derive(Clone, Debug)]
pub struct SimulateArgs {
    pub model: PathBuf,
    pub state: PathBuf,
    pub steps: usize,
    pub n_traj: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub summary_only: bool,
}

/// Builds the run record for `simulate` without touching the file system
/// beyond reading inputs.
pub fn simulate_record(args: &SimulateArgs) -> Result<RunRecord, Failure> {
    let model_text = read_text(&args.model)?;
    let model = io::read_model(&model_text).map_err(in_file(&args.model))?.model;
    model.validate().map_err(in_file(&args.model))?;
    let state = io::read_state(&read_text(&args.state)?).map_err(in_file(&args.state))?;

    let trajectories = eventum::sample_trajectories(&model, &state, args.steps, args.seed, args.n_traj)?;
    let exact = eventum::evolve(&model, &state, args.steps)?;

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &trajectories {
        *counts.entry(t.labels.last().expect("initial label").as_str()).or_default() += 1;
    }
    let mut order: BTreeMap<usize, LabelSummary> = BTreeMap::new();
    let n = args.n_traj.max(1) as f64;
    let mut add = |label: &str, p: f64| -> Result<(), Failure> {
        let idx = model.index_of(label)?;
        order.entry(idx).or_insert_with(|| LabelSummary {
            label: label.to_string(),
            exact: p,
            empirical: *counts.get(label).unwrap_or(&0) as f64 / n,
            radius: 3.0 * (p * (1.0 - p) / n).max(0.0).sqrt(),
        });
        Ok(())
    };
    for b in exact.branches() {
        add(b.label.as_str(), b.weight)?;
    }
    for label in counts.keys() {
        add(label, 0.0)?;
    }

    let trajectories = (!args.summary_only).then(|| {
        trajectories
            .into_iter()
            .map(|t| TrajectoryRecord {
                stream: t.stream,
                labels: t.labels.iter().map(ToString::to_string).collect(),
                jump_probs: t.jump_probs,
            })
            .collect()
    });
    Ok(RunRecord {
        format: io::RUN_FORMAT.into(),
        version: io::VERSION,
        seed: args.seed,
        model_sha256: hex::encode(Sha256::digest(model_text.as_bytes())),
        steps: args.steps,
        n_traj: args.n_traj,
        trajectories,
        summary: order.into_values().collect(),
    })
}

/// Samples trajectories and writes a run record to `--out` or stdout.
pub fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let text = io::write_run(&simulate_record(args)?);
    let stdout = match &args.out {
        Some(path) => {
            write_text(path, &text)?;
            format!("wrote {} trajectories to {}\n", args.n_traj, path.display())
        }
        None => text,
    };
    Ok(Outcome {
        status: Status::Success,
        stdout,
    })
}

/// Options of `embed`.
#[derive(Clone, Debug)]
pub struct EmbedArgs {
    pub kraus: PathBuf,
    pub cells: usize,
    pub classical_cells: Option<usize>,
    pub gated: bool,
    pub out: PathBuf,
    pub unitary_out: Option<PathBuf>,
}

/// Assembles the environment-chain embedding of a Kraus family.
pub fn cmd_embed(args: &EmbedArgs) -> CmdResult {
    let kraus = io::read_kraus(&read_text(&args.kraus)?).map_err(in_file(&args.kraus))?;
    let classical = args.classical_cells.unwrap_or((args.cells / 2).max(1));
    let layout = ChainLayout::new(kraus.outcomes(), args.cells, classical, args.gated)?;
    let emb = embed::assemble(&kraus, &layout)?;
    let provenance = Provenance {
        constructor: "embed".into(),
        parameters: BTreeMap::from([
            ("cells".to_string(), Value::from(layout.n_cells)),
            ("classical_cells".to_string(), Value::from(layout.classical_cells)),
            ("gated".to_string(), Value::from(layout.gated)),
            ("dim_s".to_string(), Value::from(kraus.dim_s())),
            ("outcomes".to_string(), Value::from(kraus.outcomes())),
        ]),
    };
    write_text(&args.out, &io::write_model(&emb.model, Some(&provenance)))?;
    if let Some(path) = &args.unitary_out {
        write_text(path, &io::write_unitary(emb.model.len(), emb.dim_l(), &emb.unitary))?;
    }
    let r = emb.model.residuals();
    let mut out = String::new();
    writeln!(out, "labels: {}", emb.model.len()).unwrap();
    writeln!(out, "dim_l: {}", emb.dim_l()).unwrap();
    writeln!(out, "gated: {}", layout.gated).unwrap();
    writeln!(out, "residual_completeness: {:e}", r.completeness).unwrap();
    writeln!(out, "step budget: {}", layout.step_budget()).unwrap();
    Ok(Outcome {
        status: Status::Success,
        stdout: out,
    })
}

/// Prints commutant dimension, commutativity and centre dimension.
pub fn cmd_commutant(path: &Path, show_basis: bool) -> CmdResult {
    let (dim, gens) = io::read_generators(&read_text(path)?).map_err(in_file(path))?;
    let c = vnalg::commutant(&gens, dim).map_err(in_file(path))?;
    let z = vnalg::center(&c);
    let mut out = String::new();
    writeln!(out, "commutant dimension: {}", c.len()).unwrap();
    writeln!(out, "commutative: {}", vnalg::is_commutative(&c)).unwrap();
    writeln!(out, "center dimension: {}", z.len()).unwrap();
    if show_basis {
        out.push_str(&io::write_generators(dim, c.basis()));
    }
    Ok(Outcome {
        status: Status::Success,
        stdout: out,
    })
}

/// Options of `geiger`.
#[derive(Clone, Debug)]
pub struct GeigerArgs {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub gamma: f64,
    pub horizon: usize,
    pub n_traj: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct GeigerStep {
    n: usize,
    p_click: f64,
    survival: f64,
    no_click_state: Option<io::MatrixRepr>,
}

#[derive(Serialize)]
struct GeigerBin {
    n: usize,
    exact: f64,
    empirical: f64,
    radius: f64,
}

#[derive(Serialize)]
struct GeigerHistogram {
    n_traj: usize,
    seed: u64,
    bins: Vec<GeigerBin>,
    never: GeigerBin,
}

#[derive(Serialize)]
struct GeigerRecord {
    format: &'static str,
    version: u32,
    alpha: [f64; 2],
    beta: [f64; 2],
    gamma: f64,
    horizon: usize,
    steps: Vec<GeigerStep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    histogram: Option<GeigerHistogram>,
}

fn bin(n: usize, exact: f64, count: usize, total: usize) -> GeigerBin {
    let t = total.max(1) as f64;
    GeigerBin {
        n,
        exact,
        empirical: count as f64 / t,
        radius: 3.0 * (exact * (1.0 - exact) / t).max(0.0).sqrt(),
    }
}

/// Per-step click probabilities and posterior states, optionally with a
/// sampled click-time histogram.
pub fn cmd_geiger(args: &GeigerArgs) -> CmdResult {
    let p = GeigerParams::new(args.alpha, args.beta, args.gamma, args.horizon)?;
    let steps = (0..=p.horizon())
        .map(|n| {
            let c = models::geiger_closed_form(&p, n)?;
            Ok(GeigerStep {
                n,
                p_click: c.p_click_at_n,
                survival: c.survival,
                no_click_state: c.no_click_state.as_ref().map(io::matrix_to_repr),
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let histogram = match args.n_traj {
        Some(n_traj) => {
            let (model, init) = models::geiger_model(&p)?;
            let runs = eventum::sample_trajectories(&model, &init, p.horizon(), args.seed, n_traj)?;
            let mut counts = vec![0usize; p.horizon() + 1];
            let mut never = 0;
            for t in &runs {
                match models::click_time(t.labels.last().expect("initial label")) {
                    Some(n) => counts[n] += 1,
                    None => never += 1,
                }
            }
            let bins = (1..=p.horizon())
                .map(|n| bin(n, p.click_pmf(n), counts[n], n_traj))
                .collect();
            let survive = 1.0 - p.cumulative_click(p.horizon());
            Some(GeigerHistogram {
                n_traj,
                seed: args.seed,
                bins,
                never: bin(0, survive, never, n_traj),
            })
        }
        None => None,
    };
    let record = GeigerRecord {
        format: "geiger-run",
        version: io::VERSION,
        alpha: [p.alpha().re, p.alpha().im],
        beta: [p.beta().re, p.beta().im],
        gamma: p.gamma(),
        horizon: p.horizon(),
        steps,
        histogram,
    };
    let mut text = serde_json::to_string_pretty(&record).expect("record serialises");
    text.push('\n');
    let stdout = match &args.out {
        Some(path) => {
            write_text(path, &text)?;
            format!("wrote {} steps to {}\n", p.horizon() + 1, path.display())
        }
        None => text,
    };
    Ok(Outcome {
        status: Status::Success,
        stdout,
    })
}

/// Parses `re,im` or a bare real number.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    match parts.as_slice() {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => Err(format!("expected `re,im`, got `{s}`")),
    }
}

/// Default tolerance of `verify`.
pub const DEFAULT_TOLERANCE: f64 = tol::ZERO_BLOCK;
