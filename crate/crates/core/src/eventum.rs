//! Compatible classical-quantum worlds.
//!
//! A world lives on `K ⊗ L`, where `K = ℓ²(X)` has a preferred basis of
//! classical labels. An [`EventumModel`] stores only the non-zero blocks
//! `U_{x,f(x)}` of a compatible evolution together with the classical map
//! `f`. Forward jumps go from `y` into one of its predecessors `f⁻¹(y)`;
//! the backward history of a label is the orbit of `f`.
//!
//! Infinite label sets are represented by a materialised window (for example
//! history strings up to a horizon). Stepping out of the window is an
//! [`Error::Horizon`], never a silent wrap.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matcore::{self, CMat, C64, DEFAULT_MAX_DIM};
use crate::tol;
use crate::vnalg::AlgebraBasis;

/// Separator between symbols of a history-structured label.
pub const HISTORY_SEP: char = '·';

/// A classical label `x ∈ X`. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(Arc<str>);

impl Label {
    pub fn new(s: &str) -> Self {
        Label(Arc::from(s))
    }

    /// Joins symbols into a history label, oldest first.
    pub fn history<S: AsRef<str>>(symbols: &[S]) -> Self {
        let parts: Vec<&str> = symbols.iter().map(AsRef::as_ref).collect();
        Label::new(&parts.join(&HISTORY_SEP.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// This history extended by one symbol.
    pub fn child(&self, symbol: &str) -> Label {
        Label::new(&format!("{}{HISTORY_SEP}{symbol}", self.0))
    }

    /// This history with its newest symbol dropped, if it has more than one.
    pub fn parent(&self) -> Option<Label> {
        self.0.rfind(HISTORY_SEP).map(|i| Label::new(&self.0[..i]))
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.0.split(HISTORY_SEP)
    }
}

impl Borrow<str> for Label {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::new(s)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

/// Which of the blockwise unitarity conditions a model must satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Completeness, co-isometry and sibling orthogonality.
    Strict,
    /// Completeness `Σ_{x∈f⁻¹(y)} U*_{xy} U_{xy} = 1` only.
    Kraus,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Strict => "strict",
            Mode::Kraus => "kraus",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Mode::Strict),
            "kraus" => Ok(Mode::Kraus),
            other => Err(Error::Parse(format!("unknown mode `{other}`"))),
        }
    }
}

/// Cell layout of a shift-type world: `K` is `classical_cells` copies of a
/// `cell_dim`-level register and `L` is `quantum_cells` copies. Labels are
/// the classical words in lexicographic order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellStructure {
    pub cell_dim: usize,
    pub classical_cells: usize,
    pub quantum_cells: usize,
}

/// The classical word of `index` in base `cell_dim`, oldest cell first.
pub fn word_label(index: usize, cell_dim: usize, cells: usize) -> Label {
    let mut digits = vec![0usize; cells];
    let mut rest = index;
    for d in digits.iter_mut().rev() {
        *d = rest % cell_dim;
        rest /= cell_dim;
    }
    let symbols: Vec<String> = digits.iter().map(ToString::to_string).collect();
    Label::history(&symbols)
}

#[derive(Clone, Debug)]
pub struct ModelBuilder {
    dim_l: usize,
    mode: Mode,
    labels: Vec<Label>,
    transitions: Vec<(Label, Label, CMat)>,
    step_budget: Option<usize>,
    cells: Option<CellStructure>,
}

impl ModelBuilder {
    pub fn label(mut self, x: impl Into<Label>) -> Self {
        self.labels.push(x.into());
        self
    }

    pub fn labels<I, L>(mut self, xs: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: Into<Label>,
    {
        self.labels.extend(xs.into_iter().map(Into::into));
        self
    }

    /// Declares `f(x) = y` with block `U_{x,y}`.
    pub fn transition(mut self, x: impl Into<Label>, y: impl Into<Label>, block: CMat) -> Self {
        self.transitions.push((x.into(), y.into(), block));
        self
    }

    pub fn step_budget(mut self, steps: usize) -> Self {
        self.step_budget = Some(steps);
        self
    }

    pub fn cells(mut self, cells: CellStructure) -> Self {
        self.cells = Some(cells);
        self
    }

    /// Builds the model and enforces every invariant of its mode.
    pub fn build(self) -> Result<EventumModel> {
        let model = self.build_unchecked()?;
        model.validate()?;
        Ok(model)
    }

    /// Builds the model checking structure only (labels, shapes, finiteness),
    /// leaving the unitarity conditions to [`EventumModel::validate`] or
    /// [`model_report`].
    pub fn build_unchecked(self) -> Result<EventumModel> {
        let n = self.labels.len();
        if n == 0 {
            return Err(Error::Model("no labels".into()));
        }
        if self.dim_l == 0 || self.dim_l > DEFAULT_MAX_DIM {
            return Err(Error::Model(format!("dim_l = {} is out of range", self.dim_l)));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, x) in self.labels.iter().enumerate() {
            if x.as_str().is_empty() {
                return Err(Error::Model("empty label".into()));
            }
            if index.insert(x.clone(), i).is_some() {
                return Err(Error::Model(format!("label `{x}` declared twice")));
            }
        }
        let mut parent = vec![None; n];
        let mut blocks: Vec<Option<CMat>> = vec![None; n];
        for (x, y, block) in self.transitions {
            let xi = *index.get(&x).ok_or_else(|| Error::Label(x.to_string()))?;
            let yi = *index.get(&y).ok_or_else(|| Error::Label(y.to_string()))?;
            if block.shape() != (self.dim_l, self.dim_l) {
                return Err(Error::Shape(format!(
                    "block at `{x}` is {}x{}, expected {d}x{d}",
                    block.rows(),
                    block.cols(),
                    d = self.dim_l
                )));
            }
            if !block.is_finite() {
                return Err(Error::Model(format!("block at `{x}` has non-finite entries")));
            }
            if parent[xi].is_some() {
                return Err(Error::Model(format!("f is assigned twice at `{x}`")));
            }
            parent[xi] = Some(yi);
            blocks[xi] = Some(block);
        }
        if let Some(c) = self.cells {
            let words = c.cell_dim.checked_pow(c.classical_cells as u32);
            let dim_l = c.cell_dim.checked_pow(c.quantum_cells as u32);
            if c.cell_dim < 2 || words != Some(n) || dim_l != Some(self.dim_l) {
                return Err(Error::Model(format!(
                    "cell structure {c:?} does not match {n} labels and dim_l {}",
                    self.dim_l
                )));
            }
        }
        let mut children = vec![Vec::new(); n];
        for (x, p) in parent.iter().enumerate() {
            if let Some(y) = p {
                children[*y].push(x);
            }
        }
        let effects = blocks
            .iter()
            .map(|b| b.as_ref().map(|u| &u.adjoint() * u))
            .collect();
        Ok(EventumModel {
            labels: self.labels,
            index,
            dim_l: self.dim_l,
            parent,
            blocks,
            effects,
            children,
            mode: self.mode,
            step_budget: self.step_budget,
            cells: self.cells,
        })
    }
}

/// A compatible pair `(C, A)` with evolution `U`, stored blockwise.
#[derive(Clone, Debug)]
pub struct EventumModel {
    labels: Vec<Label>,
    index: HashMap<Label, usize>,
    dim_l: usize,
    parent: Vec<Option<usize>>,
    blocks: Vec<Option<CMat>>,
    /// `U*_{x,f(x)} U_{x,f(x)}`, cached for sampling.
    effects: Vec<Option<CMat>>,
    children: Vec<Vec<usize>>,
    mode: Mode,
    step_budget: Option<usize>,
    cells: Option<CellStructure>,
}

impl PartialEq for EventumModel {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
            && self.dim_l == other.dim_l
            && self.parent == other.parent
            && self.blocks == other.blocks
            && self.mode == other.mode
            && self.step_budget == other.step_budget
            && self.cells == other.cells
    }
}

/// Residuals of the blockwise unitarity conditions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModelResiduals {
    /// `max_y ‖Σ_{x∈f⁻¹(y)} U*_{xy}U_{xy} − 1‖`.
    pub completeness: f64,
    /// `max_x ‖U_{x,f(x)}U*_{x,f(x)} − 1‖`.
    pub coisometry: f64,
    /// `max ‖U_{xy}U*_{x'y}‖` over distinct siblings.
    pub orthogonality: f64,
}

impl EventumModel {
    pub fn builder(dim_l: usize, mode: Mode) -> ModelBuilder {
        ModelBuilder {
            dim_l,
            mode,
            labels: Vec::new(),
            transitions: Vec::new(),
            step_budget: None,
            cells: None,
        }
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim_l(&self) -> usize {
        self.dim_l
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn step_budget(&self) -> Option<usize> {
        self.step_budget
    }

    pub fn cells(&self) -> Option<CellStructure> {
        self.cells
    }

    pub fn index_of(&self, x: &str) -> Result<usize> {
        self.index.get(x).copied().ok_or_else(|| Error::Label(x.to_string()))
    }

    pub fn label(&self, i: usize) -> &Label {
        &self.labels[i]
    }

    /// `f(x)`, or `None` when `x` is the oldest label of the window.
    pub fn f(&self, x: &str) -> Result<Option<&Label>> {
        let i = self.index_of(x)?;
        Ok(self.parent[i].map(|y| &self.labels[y]))
    }

    pub fn f_index(&self, x: usize) -> Option<usize> {
        self.parent[x]
    }

    /// The block `U_{x,f(x)}`.
    pub fn block(&self, x: &str) -> Result<Option<&CMat>> {
        let i = self.index_of(x)?;
        Ok(self.blocks[i].as_ref())
    }

    pub fn block_at(&self, x: usize) -> Option<&CMat> {
        self.blocks[x].as_ref()
    }

    /// `f⁻¹(y)` within the window.
    pub fn predecessors(&self, y: &str) -> Result<Vec<&Label>> {
        let i = self.index_of(y)?;
        Ok(self.children[i].iter().map(|&x| &self.labels[x]).collect())
    }

    pub fn predecessor_indices(&self, y: usize) -> &[usize] {
        &self.children[y]
    }

    pub fn residuals(&self) -> ModelResiduals {
        let id = CMat::identity(self.dim_l);
        let mut r = ModelResiduals::default();
        for (y, xs) in self.children.iter().enumerate() {
            if xs.is_empty() {
                continue;
            }
            let mut sum = CMat::zeros(self.dim_l, self.dim_l);
            for &x in xs {
                sum += self.effects[x].as_ref().expect("child has a block");
            }
            r.completeness = r.completeness.max((&sum - &id).norm());
            for (a, &x) in xs.iter().enumerate() {
                let ux = self.blocks[x].as_ref().expect("child has a block");
                r.coisometry = r.coisometry.max((&(ux * &ux.adjoint()) - &id).norm());
                for &x2 in &xs[a + 1..] {
                    let ux2 = self.blocks[x2].as_ref().expect("child has a block");
                    r.orthogonality = r.orthogonality.max((ux * &ux2.adjoint()).norm());
                }
            }
            let _ = y;
        }
        r
    }

    /// Checks every invariant of the model's mode.
    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::Strict {
            if let Some(x) = self.parent.iter().position(Option::is_none) {
                return Err(Error::Model(format!(
                    "strict model needs f defined everywhere; f(`{}`) is undefined",
                    self.labels[x]
                )));
            }
            if let Some((y, xs)) = self.children.iter().enumerate().find(|(_, xs)| xs.len() > 1) {
                return Err(Error::FiniteBranching {
                    target: self.labels[y].to_string(),
                    count: xs.len(),
                });
            }
        }
        let r = self.residuals();
        if r.completeness > tol::SOLVED {
            return Err(Error::Model(format!(
                "completeness violated (residual {:.3e})",
                r.completeness
            )));
        }
        if self.mode == Mode::Strict && r.coisometry > tol::SOLVED {
            return Err(Error::Model(format!(
                "co-isometry violated (residual {:.3e})",
                r.coisometry
            )));
        }
        Ok(())
    }
}

/// All `numLabels²` blocks `U_{xy} = (⟨x|⊗1) U (|y⟩⊗1)` of an operator.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    num_labels: usize,
    dim_l: usize,
    blocks: Vec<CMat>,
}

impl BlockMatrix {
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn dim_l(&self) -> usize {
        self.dim_l
    }

    pub fn get(&self, x: usize, y: usize) -> &CMat {
        &self.blocks[x * self.num_labels + y]
    }
}

/// Splits `u` into its `numLabels × numLabels` grid of `dimL × dimL` blocks.
pub fn extract_blocks(u: &CMat, num_labels: usize, dim_l: usize) -> Result<BlockMatrix> {
    let n = num_labels * dim_l;
    if num_labels == 0 || dim_l == 0 || u.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "{}x{} operator does not split into {num_labels} labels of dimension {dim_l}",
            u.rows(),
            u.cols()
        )));
    }
    let defect = matcore::unitarity_defect(u);
    if defect > tol::SOLVED {
        return Err(Error::NotUnitary { residual: defect });
    }
    Ok(split_blocks(u, num_labels, dim_l))
}

fn split_blocks(u: &CMat, num_labels: usize, dim_l: usize) -> BlockMatrix {
    let mut blocks = Vec::with_capacity(num_labels * num_labels);
    for x in 0..num_labels {
        for y in 0..num_labels {
            blocks.push(u.submatrix(x * dim_l, y * dim_l, dim_l, dim_l));
        }
    }
    BlockMatrix {
        num_labels,
        dim_l,
        blocks,
    }
}

/// A way in which the non-zero block pattern fails to define `f`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    RowWithoutBlock { row: usize },
    RowWithManyBlocks { row: usize, columns: Vec<usize> },
    ColumnWithoutPreimage { column: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowWithoutBlock { row } => write!(f, "row {row} has no nonzero block"),
            Violation::RowWithManyBlocks { row, columns } => write!(
                f,
                "row {row} has {} nonzero blocks (columns {columns:?})",
                columns.len()
            ),
            Violation::ColumnWithoutPreimage { column } => {
                write!(f, "column {column} has no preimage (f is not onto)")
            }
        }
    }
}

/// Outcome of reading `f` off a block pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct FInference {
    /// `f[x] = y`, present when every row has exactly one nonzero block and
    /// every column is reached.
    pub f: Option<Vec<usize>>,
    pub violations: Vec<Violation>,
}

/// Reads `f` off the nonzero pattern: `U_{xy} ≠ 0` iff `f(x) = y`.
pub fn infer_f(blocks: &BlockMatrix, tol: f64) -> FInference {
    let n = blocks.num_labels;
    let mut f = Vec::with_capacity(n);
    let mut violations = Vec::new();
    let mut reached = vec![false; n];
    for x in 0..n {
        let nonzero: Vec<usize> = (0..n).filter(|&y| blocks.get(x, y).norm() > tol).collect();
        match nonzero.as_slice() {
            [] => violations.push(Violation::RowWithoutBlock { row: x }),
            [y] => {
                reached[*y] = true;
                f.push(*y);
            }
            _ => {
                for &y in &nonzero {
                    reached[y] = true;
                }
                violations.push(Violation::RowWithManyBlocks {
                    row: x,
                    columns: nonzero,
                })
            }
        }
    }
    for (y, hit) in reached.iter().enumerate() {
        if !hit {
            violations.push(Violation::ColumnWithoutPreimage { column: y });
        }
    }
    FInference {
        f: violations.is_empty().then_some(f),
        violations,
    }
}

/// Diagnostic for a candidate evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct CompatibilityReport {
    /// Mode whose conditions decide [`Self::compatible`].
    pub mode: Mode,
    pub compatible: bool,
    /// `f[x]`; `None` entries are labels whose `f` leaves the window.
    pub f_map: Option<Vec<Option<usize>>>,
    /// Mass outside the best single-block-per-row pattern.
    pub residual_row_uniqueness: f64,
    pub residual_completeness: f64,
    pub residual_coisometry: f64,
    pub residual_orthogonality: f64,
    /// `max ‖U G U* − P_C(U G U*)‖` over generators `G` of `C`.
    pub inclusion_beables: Option<f64>,
    /// `max ‖U* G U − P_A(U* G U)‖` over generators `G` of `A`.
    pub inclusion_predictables: Option<f64>,
    pub violations: Vec<String>,
}

/// Evaluates the blockwise conditions on a full block grid.
pub fn analyze_blocks(blocks: &BlockMatrix, tol: f64) -> CompatibilityReport {
    let n = blocks.num_labels;
    let l = blocks.dim_l;
    let id = CMat::identity(l);
    let inference = infer_f(blocks, tol);

    // Best single-block pattern, so residuals are meaningful for rejected
    // operators too.
    let best: Vec<usize> = (0..n)
        .map(|x| {
            (0..n)
                .max_by(|&a, &b| blocks.get(x, a).norm().total_cmp(&blocks.get(x, b).norm()))
                .expect("at least one label")
        })
        .collect();

    let mut off_pattern = 0.0;
    for (x, &fx) in best.iter().enumerate() {
        for y in (0..n).filter(|&y| y != fx) {
            off_pattern += blocks.get(x, y).norm().powi(2);
        }
    }

    let mut completeness: f64 = 0.0;
    let mut coisometry: f64 = 0.0;
    let mut orthogonality: f64 = 0.0;
    for y in 0..n {
        let xs: Vec<usize> = (0..n).filter(|&x| best[x] == y).collect();
        let mut sum = CMat::zeros(l, l);
        for &x in &xs {
            let b = blocks.get(x, y);
            sum += &(&b.adjoint() * b);
        }
        completeness = completeness.max((&sum - &id).norm());
        for (a, &x) in xs.iter().enumerate() {
            let b = blocks.get(x, y);
            coisometry = coisometry.max((&(b * &b.adjoint()) - &id).norm());
            for &x2 in &xs[a + 1..] {
                orthogonality = orthogonality.max((b * &blocks.get(x2, y).adjoint()).norm());
            }
        }
    }

    let residual_row_uniqueness = off_pattern.sqrt();
    let compatible = inference.f.is_some()
        && [residual_row_uniqueness, completeness, coisometry, orthogonality]
            .iter()
            .all(|&r| r < tol);
    CompatibilityReport {
        mode: Mode::Strict,
        compatible,
        f_map: inference.f.map(|f| f.into_iter().map(Some).collect()),
        residual_row_uniqueness,
        residual_completeness: completeness,
        residual_coisometry: coisometry,
        residual_orthogonality: orthogonality,
        inclusion_beables: None,
        inclusion_predictables: None,
        violations: inference.violations.iter().map(ToString::to_string).collect(),
    }
}

/// Full compatibility check of a unitary on `ℓ²(X) ⊗ L`.
///
/// Besides the blockwise conditions, both algebraic inclusions `U C U* ⊆ C`
/// and `U* A U ⊆ A` are measured on the orthonormal generators
/// `δ_y ⊗ 1/√L` and `δ_x ⊗ E_ij`, with `C = diag ⊗ ℂ1` and
/// `A = diag ⊗ B(L)`. The residual of each image is its distance to the
/// algebra, as [`crate::vnalg::membership`] would report it.
pub fn check_compatibility(u: &CMat, num_labels: usize, dim_l: usize) -> Result<CompatibilityReport> {
    check_compatibility_with(u, num_labels, dim_l, tol::ZERO_BLOCK)
}

/// [`check_compatibility`] with an explicit zero-block and residual
/// tolerance.
pub fn check_compatibility_with(
    u: &CMat,
    num_labels: usize,
    dim_l: usize,
    tol: f64,
) -> Result<CompatibilityReport> {
    let blocks = extract_blocks(u, num_labels, dim_l)?;
    let mut report = analyze_blocks(&blocks, tol);
    let worst_c = beable_inclusion(u, num_labels, dim_l);
    let worst_a = predictable_inclusion(u, num_labels, dim_l);
    report.inclusion_beables = Some(worst_c);
    report.inclusion_predictables = Some(worst_a);
    if worst_c >= tol {
        report
            .violations
            .push(format!("U C U* leaves the beables (residual {worst_c:.3e})"));
    }
    if worst_a >= tol {
        report
            .violations
            .push(format!("U* A U leaves the predictables (residual {worst_a:.3e})"));
    }
    Ok(report)
}

/// `max_y ‖M − P_C(M)‖` for `M = U (δ_y ⊗ 1/√L) U*`, with `P_C` the
/// orthogonal projection onto `diag ⊗ ℂ1`: keep diagonal blocks, replaced by
/// their trace average.
fn beable_inclusion(u: &CMat, n: usize, l: usize) -> f64 {
    let big = n * l;
    let scale = 1.0 / (l as f64).sqrt();
    let mut worst: f64 = 0.0;
    for y in 0..n {
        let w = u.submatrix(0, y * l, big, l);
        let m = (&w * &w.adjoint()).scale_real(scale);
        let mut sq = 0.0;
        for a in 0..n {
            for b in 0..n {
                let block = m.submatrix(a * l, b * l, l, l);
                if a == b {
                    let avg = block.trace() / l as f64;
                    for i in 0..l {
                        for j in 0..l {
                            let target = if i == j { avg } else { C64::new(0.0, 0.0) };
                            sq += (block[(i, j)] - target).norm_sqr();
                        }
                    }
                } else {
                    sq += block.norm().powi(2);
                }
            }
        }
        worst = worst.max(sq.sqrt());
    }
    worst
}

/// `max ‖M − P_A(M)‖` for `M = U* (δ_x ⊗ E_ij) U`, with `P_A` the pinching
/// onto diagonal blocks. `M = a bᵀ` with `a = conj(U[(x,i), ·])` and
/// `b = U[(x,j), ·]`, so the off-block mass is `Σ_{p≠q} |a_p|² |b_q|²`.
fn predictable_inclusion(u: &CMat, n: usize, l: usize) -> f64 {
    let block_mass = |row: usize| -> Vec<f64> {
        let r = u.row(row);
        (0..n).map(|b| r[b * l..(b + 1) * l].iter().map(|z| z.norm_sqr()).sum()).collect()
    };
    let masses: Vec<Vec<f64>> = (0..n * l).map(block_mass).collect();
    let mut worst: f64 = 0.0;
    for x in 0..n {
        for i in 0..l {
            let a = &masses[x * l + i];
            for j in 0..l {
                let b = &masses[x * l + j];
                let mut sq = 0.0;
                for p in 0..n {
                    for q in (0..n).filter(|&q| q != p) {
                        sq += a[p] * b[q];
                    }
                }
                worst = worst.max(sq.sqrt());
            }
        }
    }
    worst
}

/// Blockwise report for a stored model. In kraus mode only completeness and
/// a well-defined `f` decide the verdict; the strict residuals are still
/// reported.
pub fn model_report(model: &EventumModel, tol: f64) -> CompatibilityReport {
    let r = model.residuals();
    let mut violations = Vec::new();
    for (x, b) in model.blocks.iter().enumerate() {
        match b {
            Some(b) if b.norm() <= tol => violations.push(format!(
                "block U(`{}`, `{}`) is zero",
                model.labels[x],
                model.labels[model.parent[x].expect("block implies f")]
            )),
            None if model.mode == Mode::Strict => {
                violations.push(format!("f(`{}`) is undefined", model.labels[x]))
            }
            _ => {}
        }
    }
    if model.mode == Mode::Strict {
        for (y, xs) in model.children.iter().enumerate() {
            if xs.is_empty() {
                violations.push(format!("`{}` has no preimage (f is not onto)", model.labels[y]));
            }
            if xs.len() > 1 {
                violations.push(format!(
                    "`{}` has {} predecessors on a finite label set",
                    model.labels[y],
                    xs.len()
                ));
            }
        }
    }
    if r.completeness >= tol {
        violations.push(format!("completeness residual {:.3e}", r.completeness));
    }
    let structural_ok = violations.is_empty();
    let compatible = match model.mode {
        Mode::Strict => structural_ok && r.coisometry < tol && r.orthogonality < tol,
        Mode::Kraus => structural_ok,
    };
    if model.mode == Mode::Strict && r.coisometry >= tol {
        violations.push(format!("co-isometry residual {:.3e}", r.coisometry));
    }
    CompatibilityReport {
        mode: model.mode,
        compatible,
        f_map: Some(model.parent.clone()),
        residual_row_uniqueness: 0.0,
        residual_completeness: r.completeness,
        residual_coisometry: r.coisometry,
        residual_orthogonality: r.orthogonality,
        inclusion_beables: None,
        inclusion_predictables: None,
        violations,
    }
}

/// Assembles `U` with block `(x, f(x)) = U_{x,f(x)}` and zeros elsewhere.
pub fn reconstruct_u(model: &EventumModel) -> Result<CMat> {
    if model.mode != Mode::Strict {
        return Err(Error::Mode);
    }
    model.validate()?;
    let l = model.dim_l;
    let n = model.len() * l;
    if n > DEFAULT_MAX_DIM {
        return Err(Error::Size {
            dim: n,
            cap: DEFAULT_MAX_DIM,
        });
    }
    let mut u = CMat::zeros(n, n);
    for x in 0..model.len() {
        let y = model.parent[x].expect("strict model has total f");
        u.set_submatrix(x * l, y * l, model.blocks[x].as_ref().expect("strict block"));
    }
    Ok(u)
}

/// Forward Heisenberg step `δ_x ⊗ B ↦ δ_{f(x)} ⊗ U*_{x,f(x)} B U_{x,f(x)}`.
pub fn heisenberg_step(model: &EventumModel, x: &str, b: &CMat) -> Result<(Label, CMat)> {
    let xi = model.index_of(x)?;
    if b.shape() != (model.dim_l, model.dim_l) {
        return Err(Error::Shape(format!(
            "observable is {}x{}, expected {d}x{d}",
            b.rows(),
            b.cols(),
            d = model.dim_l
        )));
    }
    let (Some(y), Some(u)) = (model.parent[xi], model.blocks[xi].as_ref()) else {
        return Err(Error::Horizon {
            label: x.to_string(),
            reason: "f leaves the materialised window".into(),
        });
    };
    Ok((model.labels[y].clone(), &(&u.adjoint() * b) * u))
}

/// One branch `p_x δ_x ⊗ σ_x` of a classical-quantum state.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub label: Label,
    pub weight: f64,
    pub dm: CMat,
}

/// A finitely supported state `Σ_x p_x δ_x ⊗ σ_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct CQState {
    branches: Vec<Branch>,
}

impl CQState {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::State("no branches".into()));
        }
        let dim = branches[0].dm.rows();
        let mut total = 0.0;
        let mut seen = std::collections::HashSet::new();
        for b in &branches {
            if !seen.insert(b.label.clone()) {
                return Err(Error::State(format!("label `{}` appears twice", b.label)));
            }
            if !(b.weight >= 0.0 && b.weight.is_finite()) {
                return Err(Error::State(format!("weight of `{}` is {}", b.label, b.weight)));
            }
            total += b.weight;
            check_density(&b.dm, dim).map_err(|e| Error::State(format!("`{}`: {e}", b.label)))?;
        }
        if (total - 1.0).abs() > tol::SOLVED {
            return Err(Error::State(format!("weights sum to {total}")));
        }
        Ok(Self { branches })
    }

    /// A state concentrated on one label.
    pub fn single(label: impl Into<Label>, dm: CMat) -> Result<Self> {
        Self::new(vec![Branch {
            label: label.into(),
            weight: 1.0,
            dm,
        }])
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch(&self, label: &str) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label.as_str() == label)
    }

    pub fn total_weight(&self) -> f64 {
        self.branches.iter().map(|b| b.weight).sum()
    }

    /// `⟨state, δ_x ⊗ b⟩ = p_x tr(σ_x b)`.
    pub fn pairing(&self, x: &str, b: &CMat) -> C64 {
        self.branch(x)
            .map_or(C64::new(0.0, 0.0), |br| br.dm.trace_product(b) * br.weight)
    }

    /// Largest violation of the state invariants (weight sum, Hermiticity,
    /// trace, positivity).
    pub fn invariant_defect(&self) -> f64 {
        let mut worst = (self.total_weight() - 1.0).abs();
        for b in &self.branches {
            worst = worst.max((&b.dm - &b.dm.adjoint()).norm());
            worst = worst.max((b.dm.trace() - C64::new(1.0, 0.0)).norm());
            let min_eig = matcore::hermitian_eigenvalues(&b.dm)[0];
            worst = worst.max((-min_eig).max(0.0));
            worst = worst.max((-b.weight).max(0.0));
        }
        worst
    }
}

fn check_density(dm: &CMat, dim: usize) -> std::result::Result<(), String> {
    if dm.shape() != (dim, dim) {
        return Err(format!("density matrix is {}x{}, expected {dim}x{dim}", dm.rows(), dm.cols()));
    }
    if !dm.is_finite() {
        return Err("non-finite density matrix".into());
    }
    if !dm.is_hermitian(tol::SOLVED) {
        return Err("density matrix is not Hermitian".into());
    }
    let tr = dm.trace();
    if (tr - C64::new(1.0, 0.0)).norm() > tol::SOLVED {
        return Err(format!("density matrix has trace {tr}"));
    }
    let min = matcore::hermitian_eigenvalues(dm)[0];
    if min < -tol::SOLVED {
        return Err(format!("density matrix has eigenvalue {min}"));
    }
    Ok(())
}

fn check_state_fits(model: &EventumModel, s: &CQState) -> Result<Vec<usize>> {
    s.branches
        .iter()
        .map(|b| {
            if b.dm.rows() != model.dim_l {
                return Err(Error::Shape(format!(
                    "state on dimension {} for a model with dim_l {}",
                    b.dm.rows(),
                    model.dim_l
                )));
            }
            model.index_of(b.label.as_str())
        })
        .collect()
}

fn hermitize(m: &CMat) -> CMat {
    (m + &m.adjoint()).scale_real(0.5)
}

/// Exact forward Schrödinger step.
///
/// Each branch `(y, p, σ)` splits into `(x, p·q_x, U_{xy}σU*_{xy}/q_x)` for
/// `x ∈ f⁻¹(y)`, with `q_x = tr(σ U*_{xy}U_{xy})`. Branches with
/// `q_x < 1e-14` are dropped and equal labels are merged as a mixture.
pub fn schrodinger_step(model: &EventumModel, s: &CQState) -> Result<CQState> {
    let ys = check_state_fits(model, s)?;
    let mut out: Vec<Branch> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (b, &y) in s.branches.iter().zip(&ys) {
        let preds = &model.children[y];
        if preds.is_empty() {
            return Err(Error::Horizon {
                label: b.label.to_string(),
                reason: "no predecessor within the materialised window".into(),
            });
        }
        for &x in preds {
            let q = model.effects[x]
                .as_ref()
                .expect("predecessor has a block")
                .trace_product(&b.dm)
                .re;
            if q < tol::PRUNE {
                continue;
            }
            let u = model.blocks[x].as_ref().expect("predecessor has a block");
            let dm = hermitize(&u.sandwich(&b.dm).scale_real(1.0 / q));
            let weight = b.weight * q;
            match slot.get(&x) {
                Some(&k) => {
                    let prev = &mut out[k];
                    let total = prev.weight + weight;
                    prev.dm = &prev.dm.scale_real(prev.weight / total) + &dm.scale_real(weight / total);
                    prev.weight = total;
                }
                None => {
                    slot.insert(x, out.len());
                    out.push(Branch {
                        label: model.labels[x].clone(),
                        weight,
                        dm,
                    });
                }
            }
        }
    }
    Ok(CQState { branches: out })
}

/// Iterates [`schrodinger_step`] `steps` times.
pub fn evolve(model: &EventumModel, s: &CQState, steps: usize) -> Result<CQState> {
    check_budget(model, s.branches.first().map_or("", |b| b.label.as_str()), steps)?;
    let mut state = s.clone();
    for _ in 0..steps {
        state = schrodinger_step(model, &state)?;
    }
    Ok(state)
}

fn check_budget(model: &EventumModel, label: &str, steps: usize) -> Result<()> {
    match model.step_budget {
        Some(budget) if steps > budget => Err(Error::Horizon {
            label: label.to_string(),
            reason: format!("{steps} steps requested but the model allows {budget}"),
        }),
        _ => Ok(()),
    }
}

/// One sampled classical path with its conditional quantum state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    /// Index of the random stream derived from `seed`.
    pub stream: u64,
    /// Labels from the initial one onwards; `f(labels[t+1]) = labels[t]`.
    pub labels: Vec<Label>,
    /// Probability of each jump taken, one per step.
    pub jump_probs: Vec<f64>,
    pub final_dm: CMat,
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Monte-Carlo realisation of the Schrödinger evolution on stream 0.
pub fn sample_trajectory(
    model: &EventumModel,
    init: &CQState,
    steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    sample_trajectory_stream(model, init, steps, seed, 0)
}

/// Samples a trajectory from the ChaCha stream `(seed, stream)`.
pub fn sample_trajectory_stream(
    model: &EventumModel,
    init: &CQState,
    steps: usize,
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    let ys = check_state_fits(model, init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let weights: Vec<f64> = init.branches.iter().map(|b| b.weight).collect();
    let start = pick(&mut rng, &weights);
    let mut current = ys[start];
    check_budget(model, model.labels[current].as_str(), steps)?;
    let mut dm = init.branches[start].dm.clone();
    let mut labels = Vec::with_capacity(steps + 1);
    labels.push(model.labels[current].clone());
    let mut jump_probs = Vec::with_capacity(steps);
    let mut probs = Vec::new();

    for step in 1..=steps {
        let preds = &model.children[current];
        if preds.is_empty() {
            return Err(Error::Horizon {
                label: model.labels[current].to_string(),
                reason: format!("no predecessor within the materialised window at step {step}"),
            });
        }
        probs.clear();
        probs.extend(preds.iter().map(|&x| {
            let q = model.effects[x].as_ref().expect("predecessor has a block").trace_product(&dm).re;
            if q < tol::PRUNE { 0.0 } else { q }
        }));
        let k = pick(&mut rng, &probs);
        let x = preds[k];
        let q = probs[k];
        let u = model.blocks[x].as_ref().expect("predecessor has a block");
        dm = hermitize(&u.sandwich(&dm).scale_real(1.0 / q));
        jump_probs.push(q);
        labels.push(model.labels[x].clone());
        current = x;
    }
    Ok(Trajectory {
        seed,
        stream,
        labels,
        jump_probs,
        final_dm: dm,
    })
}

/// `n` independent trajectories on streams `0..n`, in stream order
/// regardless of scheduling.
pub fn sample_trajectories(
    model: &EventumModel,
    init: &CQState,
    steps: usize,
    seed: u64,
    n: usize,
) -> Result<Vec<Trajectory>> {
    (0..n as u64)
        .into_par_iter()
        .map(|stream| sample_trajectory_stream(model, init, steps, seed, stream))
        .collect()
}

/// `[x, f(x), f²(x), …, f^k(x)]`.
pub fn backward_history(model: &EventumModel, x: &str, k: usize) -> Result<Vec<Label>> {
    let mut i = model.index_of(x)?;
    let mut out = Vec::with_capacity(k + 1);
    out.push(model.labels[i].clone());
    for _ in 0..k {
        i = model.parent[i].ok_or_else(|| Error::Horizon {
            label: model.labels[i].to_string(),
            reason: "backward history leaves the materialised window".into(),
        })?;
        out.push(model.labels[i].clone());
    }
    Ok(out)
}

/// `|⟨S(s), δ_x⊗b⟩ − ⟨s, H(δ_x⊗b)⟩|` for one Schrödinger step `S` and one
/// Heisenberg step `H`.
pub fn duality_residual(model: &EventumModel, s: &CQState, b: &CMat, x: &str) -> Result<f64> {
    let evolved = schrodinger_step(model, s)?;
    let lhs = evolved.pairing(x, b);
    let rhs = match heisenberg_step(model, x, b) {
        Ok((y, hb)) => s.pairing(y.as_str(), &hb),
        Err(Error::Horizon { .. }) => C64::new(0.0, 0.0),
        Err(e) => return Err(e),
    };
    Ok((lhs - rhs).norm())
}

fn cellwise(w: &CMat, cells: usize) -> Result<CMat> {
    matcore::tensor_all(std::iter::repeat_n(w, cells))
}

/// The beable algebra of the world whose preferred basis is rotated by `w`
/// in every classical cell: `span{W δ_x W*}` on `K`.
pub fn rotated_beables(cells: CellStructure, w: &CMat) -> Result<AlgebraBasis> {
    let wk = cellwise(w, cells.classical_cells)?;
    let n = wk.rows();
    let basis = (0..n)
        .map(|x| wk.sandwich(&CMat::projector(n, x)))
        .collect();
    AlgebraBasis::from_orthonormal(n, basis)
}

/// The same universe seen from a preferred basis rotated cell-wise by `w`.
///
/// Conjugates the evolution by `V = w^{⊗c} ⊗ w^{⊗q}` (classical and
/// quantum cells rotated together) and re-reads the blocks in the rotated
/// basis. For a shift the result is again a shift; anything else is
/// reported as [`Error::Incompatible`].
pub fn alternative_world(model: &EventumModel, w: &CMat) -> Result<EventumModel> {
    let cells = model.cells.ok_or_else(|| {
        Error::Unsupported("alternative worlds need a cell-homogeneous shift model".into())
    })?;
    if model.mode != Mode::Strict {
        return Err(Error::Unsupported(
            "alternative worlds are defined for strict models".into(),
        ));
    }
    if w.shape() != (cells.cell_dim, cells.cell_dim) {
        return Err(Error::Shape(format!(
            "cell rotation is {}x{}, expected {d}x{d}",
            w.rows(),
            w.cols(),
            d = cells.cell_dim
        )));
    }
    let defect = matcore::unitarity_defect(w);
    if defect > tol::SOLVED {
        return Err(Error::NotUnitary { residual: defect });
    }
    let u = reconstruct_u(model)?;
    let v = matcore::tensor(
        &cellwise(w, cells.classical_cells)?,
        &cellwise(w, cells.quantum_cells)?,
    )?;
    let rotated = &(&v.adjoint() * &u) * &v;
    let report = check_compatibility(&rotated, model.len(), model.dim_l)?;
    let Some(f) = report.f_map.as_ref().filter(|_| report.compatible) else {
        return Err(Error::Incompatible(report.violations.join("; ")));
    };
    let blocks = split_blocks(&rotated, model.len(), model.dim_l);
    let mut builder = EventumModel::builder(model.dim_l, Mode::Strict)
        .labels(model.labels.iter().cloned())
        .cells(cells);
    if let Some(b) = model.step_budget {
        builder = builder.step_budget(b);
    }
    for (x, y) in f.iter().enumerate() {
        let y = y.expect("compatible report has total f");
        builder = builder.transition(
            model.labels[x].clone(),
            model.labels[y].clone(),
            blocks.get(x, y).clone(),
        );
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vnalg;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn hadamard() -> CMat {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        CMat::from_real(2, 2, &[h, h, h, -h]).unwrap()
    }

    fn pauli_x() -> CMat {
        CMat::from_real(2, 2, &[0., 1., 1., 0.]).unwrap()
    }

    fn pauli_z() -> CMat {
        CMat::from_real(2, 2, &[1., 0., 0., -1.]).unwrap()
    }

    fn swap() -> CMat {
        let mut s = CMat::zeros(4, 4);
        for a in 0..2 {
            for b in 0..2 {
                s[(b * 2 + a, a * 2 + b)] = c(1.0);
            }
        }
        s
    }

    /// `P ⊗ 1` for the permutation sending label `y` to `perm[y]`.
    fn permutation_world(perm: &[usize], dim_l: usize) -> CMat {
        let n = perm.len();
        let mut p = CMat::zeros(n, n);
        for (y, &x) in perm.iter().enumerate() {
            p[(x, y)] = c(1.0);
        }
        matcore::tensor(&p, &CMat::identity(dim_l)).unwrap()
    }

    fn measurement_model() -> EventumModel {
        EventumModel::builder(2, Mode::Kraus)
            .labels(["0", "0·0", "0·1"])
            .transition("0·0", "0", CMat::projector(2, 0))
            .transition("0·1", "0", CMat::projector(2, 1))
            .build()
            .unwrap()
    }

    fn plus() -> CMat {
        CMat::from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]).unwrap()
    }

    #[test]
    fn label_history_helpers() {
        let x = Label::history(&["0", "2", "1"]);
        assert_eq!(x.as_str(), "0·2·1");
        assert_eq!(x.parent().unwrap().as_str(), "0·2");
        assert_eq!(Label::new("0").parent(), None);
        assert_eq!(x.child("4").as_str(), "0·2·1·4");
        assert_eq!(word_label(5, 3, 2).as_str(), "1·2");
    }

    #[test]
    fn extract_blocks_of_permutation() {
        let u = permutation_world(&[1, 2, 0], 2);
        let blocks = extract_blocks(&u, 3, 2).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                let expected = if [1, 2, 0][y] == x { CMat::identity(2) } else { CMat::zeros(2, 2) };
                assert_eq!(blocks.get(x, y), &expected);
            }
        }
    }

    #[test]
    fn extract_blocks_of_swap() {
        let blocks = extract_blocks(&swap(), 2, 2).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                // SWAP |y,i⟩ = |i,y⟩ so U_{xy} = |y⟩⟨x|.
                assert_eq!(blocks.get(x, y), &CMat::unit(2, y, x));
            }
        }
    }

    #[test]
    fn extract_blocks_of_identity_and_errors() {
        let blocks = extract_blocks(&CMat::identity(6), 3, 2).unwrap();
        assert_eq!(blocks.get(1, 1), &CMat::identity(2));
        assert_eq!(blocks.get(0, 2), &CMat::zeros(2, 2));
        assert!(matches!(
            extract_blocks(&CMat::identity(6).scale_real(2.0), 3, 2),
            Err(Error::NotUnitary { .. })
        ));
        assert!(matches!(extract_blocks(&CMat::identity(6), 4, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn infer_f_examples() {
        // Cycle 0→1→2→0: f is the inverse cycle.
        let cycle = extract_blocks(&permutation_world(&[1, 2, 0], 1), 3, 1).unwrap();
        assert_eq!(infer_f(&cycle, 1e-9).f, Some(vec![2, 0, 1]));

        let swapped = infer_f(&extract_blocks(&swap(), 2, 2).unwrap(), 1e-9);
        assert!(swapped.f.is_none());
        assert_eq!(
            swapped.violations,
            vec![
                Violation::RowWithManyBlocks { row: 0, columns: vec![0, 1] },
                Violation::RowWithManyBlocks { row: 1, columns: vec![0, 1] },
            ]
        );
        assert_eq!(swapped.violations[0].to_string(), "row 0 has 2 nonzero blocks (columns [0, 1])");

        let mut cu = CMat::identity(4);
        cu.set_submatrix(2, 2, &hadamard());
        let controlled = infer_f(&extract_blocks(&cu, 2, 2).unwrap(), 1e-9);
        assert_eq!(controlled.f, Some(vec![0, 1]));
    }

    #[test]
    fn check_compatibility_examples() {
        let v = hadamard();
        let mut p = CMat::zeros(3, 3);
        p[(1, 0)] = c(1.0);
        p[(2, 1)] = c(1.0);
        p[(0, 2)] = c(1.0);
        let u = matcore::tensor(&p, &v).unwrap();
        let r = check_compatibility(&u, 3, 2).unwrap();
        assert!(r.compatible, "{r:?}");
        for res in [
            r.residual_row_uniqueness,
            r.residual_completeness,
            r.residual_coisometry,
            r.residual_orthogonality,
            r.inclusion_beables.unwrap(),
            r.inclusion_predictables.unwrap(),
        ] {
            assert!(res < 1e-12);
        }

        let r = check_compatibility(&swap(), 2, 2).unwrap();
        assert!(!r.compatible);
        assert!(r.violations.iter().any(|v| v.contains("row 0 has 2 nonzero blocks")));
        assert!(r.inclusion_beables.unwrap() > 0.1 && r.inclusion_predictables.unwrap() > 0.1);
    }

    #[test]
    fn inclusion_residuals_match_generic_membership() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (n, l) in [(2, 2), (3, 2), (2, 3)] {
            let u = crate::random::haar_unitary(n * l, &mut rng);
            let diag = AlgebraBasis::diagonal(n);
            let beables = vnalg::tensor_algebra(&diag, &AlgebraBasis::scalars(l)).unwrap();
            let predictables = vnalg::tensor_algebra(&diag, &AlgebraBasis::full(l)).unwrap();
            let u_adj = u.adjoint();
            let mut c: f64 = 0.0;
            for g in beables.basis() {
                c = c.max(vnalg::membership(&(&(&u * g) * &u_adj), &beables).unwrap());
            }
            let mut a: f64 = 0.0;
            for g in predictables.basis() {
                a = a.max(vnalg::membership(&(&(&u_adj * g) * &u), &predictables).unwrap());
            }
            assert!((beable_inclusion(&u, n, l) - c).abs() < 1e-12);
            assert!((predictable_inclusion(&u, n, l) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruct_round_trip_and_mode_error() {
        let m = EventumModel::builder(2, Mode::Strict)
            .labels(["a", "b"])
            .transition("a", "a", CMat::identity(2))
            .transition("b", "b", hadamard())
            .build()
            .unwrap();
        let u = reconstruct_u(&m).unwrap();
        let mut expected = CMat::identity(4);
        expected.set_submatrix(2, 2, &hadamard());
        assert_eq!(u, expected);
        let blocks = extract_blocks(&u, 2, 2).unwrap();
        assert_eq!(blocks.get(1, 1), m.block("b").unwrap().unwrap());
        assert!(check_compatibility(&u, 2, 2).unwrap().compatible);
        assert_eq!(reconstruct_u(&measurement_model()), Err(Error::Mode));
    }

    #[test]
    fn strict_branching_on_finite_labels_is_rejected() {
        // Two co-isometric halves of a qubit onto one label: only possible
        // with an infinite L.
        let err = EventumModel::builder(2, Mode::Strict)
            .labels(["y", "x0", "x1"])
            .transition("x0", "y", CMat::projector(2, 0))
            .transition("x1", "y", CMat::projector(2, 1))
            .transition("y", "y", CMat::identity(2))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::FiniteBranching { count: 3, .. } | Error::FiniteBranching { count: 2, .. }));
    }

    #[test]
    fn heisenberg_examples() {
        let m = EventumModel::builder(2, Mode::Strict)
            .labels(["a", "b"])
            .transition("a", "b", hadamard())
            .transition("b", "a", CMat::identity(2))
            .build()
            .unwrap();
        let (y, out) = heisenberg_step(&m, "a", &pauli_z()).unwrap();
        assert_eq!(y.as_str(), "b");
        assert!(out.max_abs_diff(&pauli_x()) < 1e-15);

        let k = measurement_model();
        let (y, out) = heisenberg_step(&k, "0·1", &CMat::identity(2)).unwrap();
        assert_eq!(y.as_str(), "0");
        assert_eq!(out, CMat::projector(2, 1));
        assert!(matches!(heisenberg_step(&k, "0", &pauli_z()), Err(Error::Horizon { .. })));
        assert!(matches!(heisenberg_step(&k, "zz", &pauli_z()), Err(Error::Label(_))));
    }

    #[test]
    fn schrodinger_examples() {
        let k = measurement_model();
        let s = CQState::single("0", plus()).unwrap();
        let out = schrodinger_step(&k, &s).unwrap();
        assert_eq!(out.branches().len(), 2);
        assert!((out.branch("0·0").unwrap().weight - 0.5).abs() < 1e-15);
        assert_eq!(out.branch("0·1").unwrap().dm, CMat::projector(2, 1));
        assert!(out.invariant_defect() < 1e-12);

        let m = EventumModel::builder(2, Mode::Strict)
            .labels(["a"])
            .transition("a", "a", CMat::identity(2))
            .build()
            .unwrap();
        let s = CQState::single("a", plus()).unwrap();
        assert_eq!(schrodinger_step(&m, &s).unwrap(), s);

        let leaf = CQState::single("0·1", plus()).unwrap();
        assert!(matches!(schrodinger_step(&k, &leaf), Err(Error::Horizon { .. })));
    }

    #[test]
    fn sampling_is_seeded_and_consistent_with_f() {
        let k = measurement_model();
        let s = CQState::single("0", plus()).unwrap();
        let a = sample_trajectory(&k, &s, 1, 17).unwrap();
        let b = sample_trajectory(&k, &s, 1, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(k.f(a.labels[1].as_str()).unwrap().unwrap(), &a.labels[0]);
        assert_eq!(a.jump_probs.len(), 1);
        assert!((a.jump_probs[0] - 0.5).abs() < 1e-15);

        let zero = sample_trajectory(&k, &s, 0, 3).unwrap();
        assert_eq!(zero.labels, vec![Label::new("0")]);
        assert!(zero.jump_probs.is_empty());
    }

    #[test]
    fn sample_trajectories_are_ordered_by_stream() {
        let k = measurement_model();
        let s = CQState::single("0", plus()).unwrap();
        let many = sample_trajectories(&k, &s, 1, 9, 64).unwrap();
        for (i, t) in many.iter().enumerate() {
            assert_eq!(t.stream, i as u64);
            assert_eq!(t, &sample_trajectory_stream(&k, &s, 1, 9, i as u64).unwrap());
        }
    }

    #[test]
    fn backward_history_examples() {
        let labels = ["0", "0·2", "0·2·1"];
        let m = EventumModel::builder(1, Mode::Kraus)
            .labels(labels)
            .transition("0·2", "0", CMat::identity(1))
            .transition("0·2·1", "0·2", CMat::identity(1))
            .build()
            .unwrap();
        let h = backward_history(&m, "0·2·1", 2).unwrap();
        assert_eq!(h, vec![Label::new("0·2·1"), Label::new("0·2"), Label::new("0")]);
        assert!(matches!(backward_history(&m, "0·2·1", 3), Err(Error::Horizon { .. })));
    }

    #[test]
    fn duality_on_measurement() {
        let k = measurement_model();
        let s = CQState::single("0", plus()).unwrap();
        for x in ["0·0", "0·1"] {
            assert!(duality_residual(&k, &s, &pauli_x(), x).unwrap() < 1e-15);
        }
        let total: f64 = ["0", "0·0", "0·1"]
            .iter()
            .map(|x| schrodinger_step(&k, &s).unwrap().pairing(x, &CMat::identity(2)).re)
            .sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn state_validation() {
        let bad = CMat::from_real(2, 2, &[1.5, 0., 0., -0.5]).unwrap();
        assert!(matches!(CQState::single("a", bad), Err(Error::State(_))));
        let two = vec![
            Branch { label: "a".into(), weight: 0.5, dm: plus() },
            Branch { label: "a".into(), weight: 0.5, dm: plus() },
        ];
        assert!(CQState::new(two).is_err());
    }

    #[test]
    fn model_report_flags_perturbation() {
        let mut block = hadamard();
        block[(0, 0)] += c(1e-3);
        let m = EventumModel::builder(2, Mode::Strict)
            .labels(["a"])
            .transition("a", "a", block)
            .build_unchecked()
            .unwrap();
        let r = model_report(&m, tol::ZERO_BLOCK);
        assert!(!r.compatible);
        assert!(r.residual_completeness > 5e-4 && r.residual_completeness < 3e-3);
    }
}
