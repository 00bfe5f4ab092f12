//! Versioned JSON documents shared with the command line.
//!
//! Every document is an object with a `"format"` tag and `"version": 1`.
//! Matrices are arrays of rows, each row an array of `[re, im]` pairs.
//! Floats are written in shortest round-trip form, so write-then-read is
//! bit-exact. Readers never panic on malformed input.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embed::KrausFamily;
use crate::error::{Error, Result};
use crate::eventum::{Branch, CQState, CellStructure, EventumModel, Label, Mode};
use crate::matcore::{CMat, C64, DEFAULT_MAX_DIM};

pub const VERSION: u32 = 1;

pub const MODEL_FORMAT: &str = "eventum-model";
pub const KRAUS_FORMAT: &str = "kraus";
pub const GENERATORS_FORMAT: &str = "generators";
pub const STATE_FORMAT: &str = "cq-state";
pub const UNITARY_FORMAT: &str = "unitary";
pub const RUN_FORMAT: &str = "run-record";

pub type MatrixRepr = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_repr(m: &CMat) -> MatrixRepr {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

/// Converts nested pairs into a matrix, checking rectangular shape, the
/// expected size and finiteness. `what` names the matrix in errors.
pub fn repr_to_matrix(repr: &MatrixRepr, expected: Option<(usize, usize)>, what: &str) -> Result<CMat> {
    let rows = repr.len();
    let cols = repr.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::Parse(format!("{what}: empty matrix")));
    }
    if let Some((r, c)) = expected {
        if (rows, cols) != (r, c) {
            return Err(Error::Parse(format!("{what}: {rows}x{cols} matrix, expected {r}x{c}")));
        }
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, row) in repr.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Parse(format!(
                "{what}: row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
        for (j, &[re, im]) in row.iter().enumerate() {
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::Parse(format!("{what}: entry ({i}, {j}) is not finite")));
            }
            data.push(C64::new(re, im));
        }
    }
    CMat::from_vec(rows, cols, data)
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Parse(format!("format `{format}`, expected `{expected}`")));
    }
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported {expected} version {version}")));
    }
    Ok(())
}

fn check_dim(dim: usize, what: &str) -> Result<()> {
    if dim == 0 || dim > DEFAULT_MAX_DIM {
        return Err(Error::Parse(format!("{what} = {dim} is out of range")));
    }
    Ok(())
}

fn parse<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

fn render<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialise");
    s.push('\n');
    s
}

/// Which constructor produced a model and with which parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub constructor: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellsDoc {
    cell_dim: usize,
    classical_cells: usize,
    quantum_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    version: u32,
    mode: String,
    dim_l: usize,
    labels: Vec<String>,
    f: BTreeMap<String, String>,
    blocks: BTreeMap<String, MatrixRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cells: Option<CellsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

/// A model document: the model plus optional provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub model: EventumModel,
    pub provenance: Option<Provenance>,
}

pub fn write_model(model: &EventumModel, provenance: Option<&Provenance>) -> String {
    let mut f = BTreeMap::new();
    let mut blocks = BTreeMap::new();
    for (x, label) in model.labels().iter().enumerate() {
        if let (Some(y), Some(b)) = (model.f_index(x), model.block_at(x)) {
            f.insert(label.to_string(), model.label(y).to_string());
            blocks.insert(label.to_string(), matrix_to_repr(b));
        }
    }
    let doc = ModelDoc {
        format: MODEL_FORMAT.into(),
        version: VERSION,
        mode: model.mode().as_str().into(),
        dim_l: model.dim_l(),
        labels: model.labels().iter().map(ToString::to_string).collect(),
        f,
        blocks,
        step_budget: model.step_budget(),
        cells: model.cells().map(|c| CellsDoc {
            cell_dim: c.cell_dim,
            classical_cells: c.classical_cells,
            quantum_cells: c.quantum_cells,
        }),
        provenance: provenance.cloned(),
    };
    render(&doc)
}

/// Parses a model document, checking structure (labels, shapes, `f`) but
/// not the unitarity conditions; see [`EventumModel::validate`].
pub fn read_model(text: &str) -> Result<ModelFile> {
    let doc: ModelDoc = parse(text)?;
    check_header(&doc.format, doc.version, MODEL_FORMAT)?;
    let mode: Mode = doc.mode.parse()?;
    check_dim(doc.dim_l, "dim_l")?;
    let mut b = EventumModel::builder(doc.dim_l, mode).labels(doc.labels.iter().map(|s| Label::new(s)));
    if doc.f.len() != doc.blocks.len() || doc.f.keys().ne(doc.blocks.keys()) {
        return Err(Error::Parse("`f` and `blocks` must have the same keys".into()));
    }
    for ((x, y), block) in doc.f.iter().zip(doc.blocks.values()) {
        let m = repr_to_matrix(block, Some((doc.dim_l, doc.dim_l)), &format!("block `{x}`"))?;
        b = b.transition(Label::new(x), Label::new(y), m);
    }
    if let Some(s) = doc.step_budget {
        b = b.step_budget(s);
    }
    if let Some(c) = doc.cells {
        b = b.cells(CellStructure {
            cell_dim: c.cell_dim,
            classical_cells: c.classical_cells,
            quantum_cells: c.quantum_cells,
        });
    }
    let model = b.build_unchecked().map_err(|e| match e {
        Error::Parse(_) => e,
        other => Error::Parse(other.to_string()),
    })?;
    Ok(ModelFile {
        model,
        provenance: doc.provenance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KrausDoc {
    format: String,
    version: u32,
    dim_s: usize,
    outcomes: usize,
    ops: Vec<MatrixRepr>,
}

pub fn write_kraus(k: &KrausFamily) -> String {
    render(&KrausDoc {
        format: KRAUS_FORMAT.into(),
        version: VERSION,
        dim_s: k.dim_s(),
        outcomes: k.outcomes(),
        ops: k.ops().iter().map(matrix_to_repr).collect(),
    })
}

/// The raw operators of a Kraus document, shape-checked but not yet
/// checked for completeness.
pub fn read_kraus_ops(text: &str) -> Result<(usize, Vec<CMat>)> {
    let doc: KrausDoc = parse(text)?;
    check_header(&doc.format, doc.version, KRAUS_FORMAT)?;
    check_dim(doc.dim_s, "dim_s")?;
    if doc.outcomes == 0 || doc.outcomes != doc.ops.len() {
        return Err(Error::Parse(format!(
            "{} outcomes declared, {} operators given",
            doc.outcomes,
            doc.ops.len()
        )));
    }
    let ops = doc
        .ops
        .iter()
        .enumerate()
        .map(|(i, m)| repr_to_matrix(m, Some((doc.dim_s, doc.dim_s)), &format!("operator {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok((doc.dim_s, ops))
}

/// Reads and validates a Kraus family; incompleteness is [`Error::Kraus`].
pub fn read_kraus(text: &str) -> Result<KrausFamily> {
    let (dim_s, ops) = read_kraus_ops(text)?;
    KrausFamily::new(dim_s, ops)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorsDoc {
    format: String,
    version: u32,
    dim: usize,
    generators: Vec<MatrixRepr>,
}

pub fn write_generators(dim: usize, gens: &[CMat]) -> String {
    render(&GeneratorsDoc {
        format: GENERATORS_FORMAT.into(),
        version: VERSION,
        dim,
        generators: gens.iter().map(matrix_to_repr).collect(),
    })
}

/// Generators are parsed without a size constraint so that a wrong shape
/// can be reported with its index by the algebra routines.
pub fn read_generators(text: &str) -> Result<(usize, Vec<CMat>)> {
    let doc: GeneratorsDoc = parse(text)?;
    check_header(&doc.format, doc.version, GENERATORS_FORMAT)?;
    check_dim(doc.dim, "dim")?;
    let gens = doc
        .generators
        .iter()
        .enumerate()
        .map(|(i, m)| repr_to_matrix(m, None, &format!("generator {i}")))
        .collect::<Result<Vec<_>>>()?;
    Ok((doc.dim, gens))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchDoc {
    label: String,
    weight: f64,
    dm: MatrixRepr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    format: String,
    version: u32,
    branches: Vec<BranchDoc>,
}

pub fn write_state(s: &CQState) -> String {
    render(&StateDoc {
        format: STATE_FORMAT.into(),
        version: VERSION,
        branches: s
            .branches()
            .iter()
            .map(|b| BranchDoc {
                label: b.label.to_string(),
                weight: b.weight,
                dm: matrix_to_repr(&b.dm),
            })
            .collect(),
    })
}

pub fn read_state(text: &str) -> Result<CQState> {
    let doc: StateDoc = parse(text)?;
    check_header(&doc.format, doc.version, STATE_FORMAT)?;
    let branches = doc
        .branches
        .iter()
        .map(|b| {
            let dm = repr_to_matrix(&b.dm, None, &format!("state of `{}`", b.label))?;
            if dm.rows() > DEFAULT_MAX_DIM {
                return Err(Error::Parse(format!("state of `{}` is too large", b.label)));
            }
            Ok(Branch {
                label: Label::new(&b.label),
                weight: b.weight,
                dm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CQState::new(branches)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitaryDoc {
    format: String,
    version: u32,
    num_labels: usize,
    dim_l: usize,
    matrix: MatrixRepr,
}

/// A raw operator on `ℓ²(X) ⊗ L` with its block layout.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryFile {
    pub num_labels: usize,
    pub dim_l: usize,
    pub matrix: CMat,
}

pub fn write_unitary(num_labels: usize, dim_l: usize, u: &CMat) -> String {
    render(&UnitaryDoc {
        format: UNITARY_FORMAT.into(),
        version: VERSION,
        num_labels,
        dim_l,
        matrix: matrix_to_repr(u),
    })
}

pub fn read_unitary(text: &str) -> Result<UnitaryFile> {
    let doc: UnitaryDoc = parse(text)?;
    check_header(&doc.format, doc.version, UNITARY_FORMAT)?;
    check_dim(doc.num_labels, "num_labels")?;
    check_dim(doc.dim_l, "dim_l")?;
    let n = doc
        .num_labels
        .checked_mul(doc.dim_l)
        .filter(|&n| n <= DEFAULT_MAX_DIM)
        .ok_or_else(|| Error::Parse("num_labels * dim_l is out of range".into()))?;
    let matrix = repr_to_matrix(&doc.matrix, Some((n, n)), "matrix")?;
    Ok(UnitaryFile {
        num_labels: doc.num_labels,
        dim_l: doc.dim_l,
        matrix,
    })
}

/// Any document accepted by `verify`.
#[derive(Clone, Debug, PartialEq)]
pub enum VerifyInput {
    Model(ModelFile),
    Unitary(UnitaryFile),
}

/// Dispatches on the `"format"` tag.
pub fn read_verify_input(text: &str) -> Result<VerifyInput> {
    #[derive(Deserialize)]
    struct Tag {
        format: String,
    }
    let tag: Tag = parse(text)?;
    match tag.format.as_str() {
        MODEL_FORMAT => read_model(text).map(VerifyInput::Model),
        UNITARY_FORMAT => read_unitary(text).map(VerifyInput::Unitary),
        other => Err(Error::Parse(format!(
            "format `{other}` cannot be verified; expected `{MODEL_FORMAT}` or `{UNITARY_FORMAT}`"
        ))),
    }
}

/// One sampled trajectory in a run record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub stream: u64,
    pub labels: Vec<String>,
    pub jump_probs: Vec<f64>,
}

/// Exact and empirical probability of one final label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSummary {
    pub label: String,
    pub exact: f64,
    pub empirical: f64,
    /// Three binomial standard errors around `exact`.
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    /// SHA-256 of the model document the run used.
    pub model_sha256: String,
    pub steps: usize,
    pub n_traj: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<Vec<TrajectoryRecord>>,
    pub summary: Vec<LabelSummary>,
}

pub fn write_run(r: &RunRecord) -> String {
    render(r)
}

pub fn read_run(text: &str) -> Result<RunRecord> {
    let r: RunRecord = parse(text)?;
    check_header(&r.format, r.version, RUN_FORMAT)?;
    Ok(r)
}
