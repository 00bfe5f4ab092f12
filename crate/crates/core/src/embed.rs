//! Embedding a CP map into a system ⊗ apparatus ⊗ environment world.
//!
//! The environment is a ring of `n_cells` registers of dimension `m + 1`,
//! split into classical cells (the past, oldest first) and quantum cells (the
//! future). One application of the composite unitary
//!
//! 1. dilates the Kraus family onto the apparatus, `|ψ,0⟩ ↦ Σ_x |A_x ψ, x⟩`,
//! 2. copies the apparatus outcome into quantum cell 0, `|x,z⟩ ↦ |x, z ⊞ x⟩`,
//! 3. left-shifts the ring so the copied outcome becomes the newest
//!    classical cell.
//!
//! Composite basis order is `[classical cells, S, A, quantum cells]`, so the
//! classical cells form `K` and everything else forms `L`.
//!
//! On a finite ring the composite unitary is not block-compatible: the
//! oldest classical cell wraps into the quantum part. The eventum view is
//! therefore the kraus-mode window on which the environment past is all
//! zeros: `f(x) = (0, x_0, …, x_{c-2})`. Completeness holds exactly there,
//! and the ring supports exactly `classical_cells` steps.

use crate::error::{Error, Result};
use crate::eventum::{self, CQState, EventumModel, Label, Mode};
use crate::matcore::{self, CMat, Keep, DEFAULT_MAX_DIM};
use crate::tol;

/// Operators `A_1, …, A_m` on a `dim_s`-dimensional system. Outcome `0` is
/// reserved for "no measurement yet".
#[derive(Clone, Debug, PartialEq)]
pub struct KrausFamily {
    dim_s: usize,
    ops: Vec<CMat>,
}

/// Spectral norm of `Σ A*A − 1`.
pub fn kraus_completeness_residual(dim_s: usize, ops: &[CMat]) -> f64 {
    let mut sum = CMat::identity(dim_s).scale_real(-1.0);
    for a in ops {
        sum += &(&a.adjoint() * a);
    }
    matcore::hermitian_eigenvalues(&sum)
        .into_iter()
        .fold(0.0, |m, e| m.max(e.abs()))
}

impl KrausFamily {
    pub fn new(dim_s: usize, ops: Vec<CMat>) -> Result<Self> {
        if dim_s == 0 || dim_s > DEFAULT_MAX_DIM {
            return Err(Error::Param(format!("system dimension {dim_s} is out of range")));
        }
        if ops.is_empty() {
            return Err(Error::Param("empty Kraus family".into()));
        }
        for (i, a) in ops.iter().enumerate() {
            if a.shape() != (dim_s, dim_s) {
                return Err(Error::Shape(format!(
                    "Kraus operator {} is {}x{}, expected {dim_s}x{dim_s}",
                    i + 1,
                    a.rows(),
                    a.cols()
                )));
            }
            if !a.is_finite() {
                return Err(Error::Param(format!("Kraus operator {} is not finite", i + 1)));
            }
        }
        let residual = kraus_completeness_residual(dim_s, &ops);
        if residual > tol::SOLVED {
            return Err(Error::Kraus { residual });
        }
        Ok(Self { dim_s, ops })
    }

    pub fn dim_s(&self) -> usize {
        self.dim_s
    }

    /// Number of outcomes `m`.
    pub fn outcomes(&self) -> usize {
        self.ops.len()
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    /// `A_x` for `x ∈ 1..=m`.
    pub fn op(&self, x: usize) -> Option<&CMat> {
        x.checked_sub(1).and_then(|i| self.ops.get(i))
    }

    /// `p_x = tr(ρ A_x* A_x)` for `x = 1..=m`.
    pub fn probabilities(&self, rho: &CMat) -> Vec<f64> {
        self.ops
            .iter()
            .map(|a| (&a.adjoint() * a).trace_product(rho).re)
            .collect()
    }

    /// `A_x ρ A_x* / p_x`, or `None` when `p_x` vanishes.
    pub fn post_state(&self, rho: &CMat, x: usize) -> Option<CMat> {
        let a = self.op(x)?;
        let m = a.sandwich(rho);
        let p = m.trace().re;
        (p > tol::PRUNE).then(|| m.scale_real(1.0 / p))
    }
}

/// Ring layout of the environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainLayout {
    /// `m + 1`: outcomes plus the blank symbol `0`.
    pub cell_dim: usize,
    pub n_cells: usize,
    /// Cells `0..classical_cells` of the ring are classical.
    pub classical_cells: usize,
    /// Dilation and copy act only while the apparatus reads `0`.
    pub gated: bool,
}

impl ChainLayout {
    pub fn new(outcomes: usize, n_cells: usize, classical_cells: usize, gated: bool) -> Result<Self> {
        if outcomes == 0 {
            return Err(Error::Param("at least one outcome is needed".into()));
        }
        if classical_cells == 0 || classical_cells >= n_cells {
            return Err(Error::Param(format!(
                "{classical_cells} classical cells out of {n_cells}: both parts must be nonempty"
            )));
        }
        Ok(Self {
            cell_dim: outcomes + 1,
            n_cells,
            classical_cells,
            gated,
        })
    }

    pub fn quantum_cells(&self) -> usize {
        self.n_cells - self.classical_cells
    }

    /// Steps available before the oldest classical cell wraps around.
    pub fn step_budget(&self) -> usize {
        self.classical_cells
    }

    fn pow(&self, cells: usize) -> Result<usize> {
        self.cell_dim
            .checked_pow(cells as u32)
            .filter(|&d| d <= DEFAULT_MAX_DIM)
            .ok_or(Error::Size {
                dim: usize::MAX,
                cap: DEFAULT_MAX_DIM,
            })
    }

    pub fn num_labels(&self) -> Result<usize> {
        self.pow(self.classical_cells)
    }

    /// `dim_s · (m+1) · (m+1)^q`.
    pub fn dim_l(&self, dim_s: usize) -> Result<usize> {
        let q = self.pow(self.quantum_cells())?;
        dim_s
            .checked_mul(self.cell_dim)
            .and_then(|d| d.checked_mul(q))
            .filter(|&d| d <= DEFAULT_MAX_DIM)
            .ok_or(Error::Size {
                dim: usize::MAX,
                cap: DEFAULT_MAX_DIM,
            })
    }
}

/// Moves the leading columns of `w` to the positions in `slots` and fills
/// the remaining positions with the completion columns in order.
fn complete_into(w: &CMat, slots: &[usize]) -> Result<CMat> {
    let full = matcore::complete_isometry(w)?;
    let n = full.rows();
    let mut target = vec![usize::MAX; n];
    for (j, &s) in slots.iter().enumerate() {
        target[j] = s;
    }
    let mut free = (0..n).filter(|i| !slots.contains(i));
    for t in target.iter_mut().skip(slots.len()) {
        *t = free.next().expect("slot count matches dimension");
    }
    let mut out = CMat::zeros(n, n);
    for (j, &t) in target.iter().enumerate() {
        for i in 0..n {
            out[(i, t)] = full[(i, j)];
        }
    }
    Ok(out)
}

/// Unitary on `S ⊗ A` with `|s,0⟩ ↦ Σ_x A_x|s⟩ ⊗ |x⟩`, completed
/// deterministically on the rest.
pub fn build_dilation(k: &KrausFamily) -> Result<CMat> {
    let d = k.dim_s;
    let cd = k.outcomes() + 1;
    let mut v = CMat::zeros(d * cd, d);
    for (i, a) in k.ops.iter().enumerate() {
        let x = i + 1;
        for s in 0..d {
            for r in 0..d {
                v[(r * cd + x, s)] = a[(r, s)];
            }
        }
    }
    let slots: Vec<usize> = (0..d).map(|s| s * cd).collect();
    complete_into(&v, &slots)
}

/// Permutation `|x, z⟩ ↦ |x, z + x mod (m+1)⟩` on apparatus ⊗ cell.
pub fn build_copy(outcomes: usize) -> CMat {
    let cd = outcomes + 1;
    let mut c = CMat::zeros(cd * cd, cd * cd);
    for x in 0..cd {
        for z in 0..cd {
            c[(x * cd + (z + x) % cd, x * cd + z)] = matcore::ONE;
        }
    }
    c
}

fn digits(mut index: usize, radices: &[usize], out: &mut [usize]) {
    for (d, &r) in out.iter_mut().zip(radices).rev() {
        *d = index % r;
        index /= r;
    }
}

fn undigits(ds: &[usize], radices: &[usize]) -> usize {
    ds.iter().zip(radices).fold(0, |acc, (&d, &r)| acc * r + d)
}

/// Cyclic left shift `|x_0 x_1 … x_{n-1}⟩ ↦ |x_1 … x_{n-1} x_0⟩` on the ring.
pub fn build_shift(layout: &ChainLayout) -> Result<CMat> {
    let dim = layout.pow(layout.n_cells)?;
    let radices = vec![layout.cell_dim; layout.n_cells];
    let mut ds = vec![0; layout.n_cells];
    let mut p = CMat::zeros(dim, dim);
    for i in 0..dim {
        digits(i, &radices, &mut ds);
        ds.rotate_left(1);
        p[(undigits(&ds, &radices), i)] = matcore::ONE;
    }
    Ok(p)
}

/// Dilation followed by copy, on `S ⊗ A ⊗ Q_0`. When gated, only the
/// apparatus-blank subspace is measured and `|s, a, 0⟩` with `a ≠ 0` is
/// left alone.
pub fn build_gate(k: &KrausFamily, gated: bool) -> Result<CMat> {
    let d = k.dim_s;
    let cd = k.outcomes() + 1;
    if !gated {
        let dil = matcore::tensor(&build_dilation(k)?, &CMat::identity(cd))?;
        let copy = matcore::tensor(&CMat::identity(d), &build_copy(k.outcomes()))?;
        return Ok(&copy * &dil);
    }
    let idx = |s: usize, a: usize, z: usize| (s * cd + a) * cd + z;
    let mut w = CMat::zeros(d * cd * cd, d * cd);
    let mut slots = Vec::with_capacity(d * cd);
    for s in 0..d {
        for a in 0..cd {
            let col = s * cd + a;
            if a == 0 {
                for (i, op) in k.ops.iter().enumerate() {
                    let x = i + 1;
                    for r in 0..d {
                        w[(idx(r, x, x), col)] = op[(r, s)];
                    }
                }
            } else {
                w[(idx(s, a, 0), col)] = matcore::ONE;
            }
            slots.push(idx(s, a, 0));
        }
    }
    complete_into(&w, &slots)
}

/// An assembled embedding: the raw composite unitary and its eventum view.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub kraus: KrausFamily,
    pub layout: ChainLayout,
    /// `shift ∘ copy ∘ dilation` on `K ⊗ L`.
    pub unitary: CMat,
    /// Kraus-mode window over the classical-cell contents.
    pub model: EventumModel,
}

/// Builds the composite unitary and its windowed eventum model.
pub fn assemble(k: &KrausFamily, layout: &ChainLayout) -> Result<Embedding> {
    if layout.cell_dim != k.outcomes() + 1 {
        return Err(Error::Param(format!(
            "layout cell dimension {} does not fit {} outcomes",
            layout.cell_dim,
            k.outcomes()
        )));
    }
    let num_labels = layout.num_labels()?;
    let dim_l = layout.dim_l(k.dim_s)?;
    let n = num_labels.checked_mul(dim_l).filter(|&n| n <= DEFAULT_MAX_DIM).ok_or(Error::Size {
        dim: num_labels.saturating_mul(dim_l),
        cap: DEFAULT_MAX_DIM,
    })?;
    let cd = layout.cell_dim;
    let q = layout.quantum_cells();
    let c = layout.classical_cells;

    let gate = build_gate(k, layout.gated)?;
    let rest = layout.pow(q - 1)?;
    let m = matcore::tensor_all([&CMat::identity(num_labels), &gate, &CMat::identity(rest)])?;

    // Digits: classical cells, S, A, quantum cells.
    let mut radices = vec![cd; c];
    radices.push(k.dim_s);
    radices.push(cd);
    radices.extend(std::iter::repeat_n(cd, q));
    let ring: Vec<usize> = (0..c).chain(c + 2..c + 2 + q).collect();
    let mut ds = vec![0; radices.len()];
    let mut shifted = vec![0; radices.len()];
    let mut u = CMat::zeros(n, n);
    for i in 0..n {
        digits(i, &radices, &mut ds);
        shifted.copy_from_slice(&ds);
        for (j, &pos) in ring.iter().enumerate() {
            shifted[pos] = ds[ring[(j + 1) % ring.len()]];
        }
        let target = undigits(&shifted, &radices);
        for col in 0..n {
            u[(target, col)] = m[(i, col)];
        }
    }

    let labels: Vec<Label> = (0..num_labels).map(|i| eventum::word_label(i, cd, c)).collect();
    let mut builder = EventumModel::builder(dim_l, Mode::Kraus)
        .labels(labels.iter().cloned())
        .step_budget(layout.step_budget());
    for (x, label) in labels.iter().enumerate() {
        let y = x / cd;
        builder = builder.transition(
            label.clone(),
            labels[y].clone(),
            u.submatrix(x * dim_l, y * dim_l, dim_l, dim_l),
        );
    }
    let model = builder.build()?;
    Ok(Embedding {
        kraus: k.clone(),
        layout: *layout,
        unitary: u,
        model,
    })
}

impl Embedding {
    pub fn dim_l(&self) -> usize {
        self.model.dim_l()
    }

    /// Label of the all-blank classical record.
    pub fn blank_label(&self) -> &Label {
        self.model.label(0)
    }

    /// `ρ ⊗ |0⟩⟨0|_A ⊗ |0…0⟩⟨0…0|_Q` on the blank record.
    pub fn initial_state(&self, rho: &CMat) -> Result<CQState> {
        let rest = self.dim_l() / self.kraus.dim_s;
        if rho.shape() != (self.kraus.dim_s, self.kraus.dim_s) {
            return Err(Error::Shape(format!(
                "system state is {}x{}, expected {d}x{d}",
                rho.rows(),
                rho.cols(),
                d = self.kraus.dim_s
            )));
        }
        let dm = matcore::tensor(rho, &CMat::projector(rest, 0))?;
        CQState::single(self.blank_label().clone(), dm)
    }

    /// Symbols of the classical record, oldest first.
    pub fn record(&self, label: &Label) -> Vec<usize> {
        label.symbols().map(|s| s.parse().unwrap_or(0)).collect()
    }

    /// Newest outcome recorded in `label`.
    pub fn newest_outcome(&self, label: &Label) -> usize {
        self.record(label).last().copied().unwrap_or(0)
    }

    /// Reduced system state of a density matrix on `L`.
    pub fn system_state(&self, dm: &CMat) -> Result<CMat> {
        let d = self.kraus.dim_s;
        matcore::partial_trace(dm, (d, self.dim_l() / d), Keep::First)
    }

    /// Apparatus, environment part of `L` for outcome `x`:
    /// `|x⟩⟨x|_A ⊗ |0…0⟩⟨0…0|_Q`.
    pub fn record_projector(&self, x: usize) -> Result<CMat> {
        let cd = self.layout.cell_dim;
        let q = self.dim_l() / (self.kraus.dim_s * cd);
        matcore::tensor(&CMat::projector(cd, x), &CMat::projector(q, 0))
    }
}

/// Statistics of one outcome in a [`ChannelReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeStats {
    pub outcome: usize,
    pub exact: f64,
    pub empirical: f64,
    /// Three binomial standard errors around `exact`.
    pub radius: f64,
    /// Largest trace distance between a sampled system state and
    /// `A_x ρ A_x* / p_x`.
    pub max_trace_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelReport {
    pub n_traj: usize,
    pub outcomes: Vec<OutcomeStats>,
    pub max_frequency_deviation: f64,
    pub max_trace_distance: f64,
}

impl ChannelReport {
    /// Every frequency within its radius and every state within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.outcomes
            .iter()
            .all(|o| (o.empirical - o.exact).abs() <= o.radius && o.max_trace_distance < tol)
    }
}

/// Samples one application of the embedded channel `n_traj` times and
/// compares with direct Kraus arithmetic.
pub fn channel_check(
    k: &KrausFamily,
    rho: &CMat,
    layout: &ChainLayout,
    n_traj: usize,
    seed: u64,
) -> Result<ChannelReport> {
    let emb = assemble(k, layout)?;
    let init = emb.initial_state(rho)?;
    let trajectories = eventum::sample_trajectories(&emb.model, &init, 1, seed, n_traj)?;
    let exact = k.probabilities(rho);
    let m = k.outcomes();
    let mut counts = vec![0usize; m + 1];
    let mut worst = vec![0.0f64; m + 1];
    for t in &trajectories {
        let label = t.labels.last().expect("one step taken");
        let x = emb.newest_outcome(label);
        counts[x] += 1;
        if let Some(expected) = k.post_state(rho, x) {
            let got = emb.system_state(&t.final_dm)?;
            worst[x] = worst[x].max(matcore::trace_distance(&got, &expected));
        }
    }
    let n = n_traj.max(1) as f64;
    let outcomes: Vec<OutcomeStats> = (1..=m)
        .map(|x| {
            let p = exact[x - 1];
            OutcomeStats {
                outcome: x,
                exact: p,
                empirical: counts[x] as f64 / n,
                radius: 3.0 * (p * (1.0 - p) / n).max(0.0).sqrt(),
                max_trace_distance: worst[x],
            }
        })
        .collect();
    let max_frequency_deviation = outcomes
        .iter()
        .map(|o| (o.empirical - o.exact).abs())
        .fold(0.0, f64::max);
    let max_trace_distance = worst.iter().copied().fold(0.0, f64::max);
    Ok(ChannelReport {
        n_traj,
        outcomes,
        max_frequency_deviation,
        max_trace_distance,
    })
}

/// Applies the raw composite unitary to `ρ_K ⊗ ρ_L`-shaped density matrix
/// `rho` on `K ⊗ L`.
pub fn apply_unitary(emb: &Embedding, rho: &CMat) -> CMat {
    emb.unitary.sandwich(rho)
}

/// The blank-record composite state `|0…0⟩⟨0…0|_K ⊗ ρ ⊗ |0⟩⟨0| ⊗ …`.
pub fn composite_initial(emb: &Embedding, rho: &CMat) -> Result<CMat> {
    let init = emb.initial_state(rho)?;
    let dm = &init.branches()[0].dm;
    matcore::tensor(&CMat::projector(emb.model.len(), 0), dm)
}
