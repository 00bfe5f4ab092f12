//! Worked models: the Geiger counter, autonomous worlds and the qubit chain
//! shift.

use crate::error::{Error, Result};
use crate::eventum::{self, CQState, CellStructure, EventumModel, Label, Mode};
use crate::matcore::{self, CMat, C64};
use crate::tol;

/// History symbol for a step without a click.
pub const NO_CLICK: &str = "n";
/// History symbol for the step on which the counter clicks.
pub const CLICK: &str = "c";
/// History symbol for steps after the click.
pub const AFTER_CLICK: &str = "z";
/// Root of every Geiger history.
pub const GEIGER_ROOT: &str = "0";

/// An atom in `α|0⟩ + β|1⟩` watched by a counter that clicks with
/// probability `gamma` per step while the atom is excited.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeigerParams {
    alpha: C64,
    beta: C64,
    gamma: f64,
    horizon: usize,
}

impl GeigerParams {
    pub fn new(alpha: C64, beta: C64, gamma: f64, horizon: usize) -> Result<Self> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > tol::EXACT {
            return Err(Error::Param(format!("|alpha|^2 + |beta|^2 = {norm}, expected 1")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Param(format!("gamma = {gamma} is outside (0, 1]")));
        }
        if horizon == 0 {
            return Err(Error::Param("horizon must be positive".into()));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            horizon,
        })
    }

    /// Real amplitudes `√(1−b²)|0⟩ + √b²|1⟩` from `|β|² = beta_sq`.
    pub fn from_excitation(beta_sq: f64, gamma: f64, horizon: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta_sq) {
            return Err(Error::Param(format!("|beta|^2 = {beta_sq} is outside [0, 1]")));
        }
        Self::new(
            C64::new((1.0 - beta_sq).sqrt(), 0.0),
            C64::new(beta_sq.sqrt(), 0.0),
            gamma,
            horizon,
        )
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn beta(&self) -> C64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_dm(&self) -> CMat {
        CMat::pure_state(&[self.alpha, self.beta])
    }

    /// `|β|² γ (1−γ)^{n−1}`, zero for `n = 0`.
    pub fn click_pmf(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.beta.norm_sqr() * self.gamma * (1.0 - self.gamma).powi(n as i32 - 1)
    }

    /// `|β|² (1 − (1−γ)^T)`.
    pub fn cumulative_click(&self, t: usize) -> f64 {
        self.beta.norm_sqr() * (1.0 - (1.0 - self.gamma).powi(t as i32))
    }
}

/// `V_n = |0⟩⟨0| + √(1−γ)|1⟩⟨1|`.
pub fn geiger_no_click_op(gamma: f64) -> CMat {
    CMat::from_real(2, 2, &[1.0, 0.0, 0.0, (1.0 - gamma).sqrt()]).expect("2x2")
}

/// `V_c = √γ |0⟩⟨1|`.
pub fn geiger_click_op(gamma: f64) -> CMat {
    CMat::from_real(2, 2, &[0.0, gamma.sqrt(), 0.0, 0.0]).expect("2x2")
}

/// The kraus-mode Geiger window up to the horizon and its initial state.
///
/// Labels are histories `0·n·…·n·c·z·…·z` with `f` dropping the newest
/// symbol. A history without a click branches into `n` and `c`; after a
/// click the only successor is `z` with the identity block, so the atom
/// stays in `|0⟩`.
pub fn geiger_model(p: &GeigerParams) -> Result<(EventumModel, CQState)> {
    let v_n = geiger_no_click_op(p.gamma);
    let v_c = geiger_click_op(p.gamma);
    let id = CMat::identity(2);
    let root = Label::new(GEIGER_ROOT);
    let mut b = EventumModel::builder(2, Mode::Kraus)
        .label(root.clone())
        .step_budget(p.horizon);
    let mut waiting = root.clone();
    let mut clicked: Vec<Label> = Vec::new();
    for _ in 0..p.horizon {
        let mut next_clicked = Vec::with_capacity(clicked.len() + 1);
        for y in &clicked {
            let x = y.child(AFTER_CLICK);
            b = b.label(x.clone()).transition(x.clone(), y.clone(), id.clone());
            next_clicked.push(x);
        }
        let click = waiting.child(CLICK);
        b = b.label(click.clone()).transition(click.clone(), waiting.clone(), v_c.clone());
        next_clicked.push(click);
        let wait = waiting.child(NO_CLICK);
        b = b.label(wait.clone()).transition(wait.clone(), waiting.clone(), v_n.clone());
        waiting = wait;
        clicked = next_clicked;
    }
    let model = b.build()?;
    let init = CQState::single(root, p.initial_dm())?;
    Ok((model, init))
}

/// The history label of `n` steps without a click.
pub fn no_click_label(n: usize) -> Label {
    let mut symbols = vec![GEIGER_ROOT];
    symbols.extend(std::iter::repeat_n(NO_CLICK, n));
    Label::history(&symbols)
}

/// Step at which `label` records a click, if any.
pub fn click_time(label: &Label) -> Option<usize> {
    label.symbols().position(|s| s == CLICK)
}

/// Closed-form Geiger quantities after `n` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct GeigerClosedForm {
    /// Probability of the click happening exactly at step `n`.
    pub p_click_at_n: f64,
    /// Probability of no click in steps `1..=n`.
    pub survival: f64,
    /// Conditional state given no click so far; `None` when that event has
    /// probability zero.
    pub no_click_state: Option<CMat>,
}

pub fn geiger_closed_form(p: &GeigerParams, n: usize) -> Result<GeigerClosedForm> {
    if n > p.horizon {
        return Err(Error::Param(format!("n = {n} exceeds the horizon {}", p.horizon)));
    }
    let decay = (1.0 - p.gamma).powf(n as f64 / 2.0);
    let amps = [p.alpha, p.beta * decay];
    let survival = amps[0].norm_sqr() + amps[1].norm_sqr();
    let no_click_state = (survival > 0.0).then(|| {
        let s = survival.sqrt();
        CMat::pure_state(&[amps[0] / s, amps[1] / s])
    });
    Ok(GeigerClosedForm {
        p_click_at_n: p.click_pmf(n),
        survival,
        no_click_state,
    })
}

/// Exact Geiger evolution summarised the same way as the closed form.
pub fn geiger_exact(model: &EventumModel, init: &CQState, n: usize) -> Result<GeigerClosedForm> {
    let state = eventum::evolve(model, init, n)?;
    let waiting = no_click_label(n);
    let mut p_click_at_n = 0.0;
    let mut survival = 0.0;
    let mut no_click_state = None;
    for b in state.branches() {
        if b.label == waiting {
            survival = b.weight;
            no_click_state = Some(b.dm.clone());
        } else if click_time(&b.label) == Some(n) {
            p_click_at_n += b.weight;
        }
    }
    Ok(GeigerClosedForm {
        p_click_at_n,
        survival,
        no_click_state,
    })
}

/// Strict model on labels `"0".."n-1"` with `f(x) = f_map[x]` and block
/// `blocks[x]`. The classical path runs backwards along `f`, so a bijective
/// `f_map` gives a deterministic world; any other map is rejected.
pub fn autonomous_model(f_map: &[usize], blocks: Vec<CMat>) -> Result<EventumModel> {
    let n = f_map.len();
    if blocks.len() != n {
        return Err(Error::Param(format!("{} blocks for {n} labels", blocks.len())));
    }
    let dim_l = blocks.first().map(CMat::rows).ok_or_else(|| Error::Param("no labels".into()))?;
    for (x, u) in blocks.iter().enumerate() {
        if u.shape() != (dim_l, dim_l) {
            return Err(Error::Shape(format!("block {x} is {}x{}", u.rows(), u.cols())));
        }
        let defect = matcore::unitarity_defect(u);
        if defect > tol::SOLVED {
            return Err(Error::NotUnitary { residual: defect });
        }
    }
    if let Some(&y) = f_map.iter().find(|&&y| y >= n) {
        return Err(Error::Label(y.to_string()));
    }
    let name = |i: usize| Label::new(&i.to_string());
    let mut b = EventumModel::builder(dim_l, Mode::Strict).labels((0..n).map(name));
    for (x, (u, &y)) in blocks.into_iter().zip(f_map).enumerate() {
        b = b.transition(name(x), name(y), u);
    }
    b.build()
}

/// Cyclic left shift `|b_0 … b_{k-1}⟩ ↦ |b_1 … b_{k-1} b_0⟩` on `k` qubits.
fn qubit_ring_shift(k: usize) -> CMat {
    let dim = 1usize << k;
    let mut s = CMat::zeros(dim, dim);
    for i in 0..dim {
        let top = (i >> (k - 1)) & 1;
        let j = ((i << 1) & (dim - 1)) | top;
        s[(j, i)] = matcore::ONE;
    }
    s
}

/// Shift world on qubit cells: the `n/2` classical cells and the remaining
/// quantum cells each form a ring rotated one cell per step.
///
/// The classical label is the classical word, so `f` is the inverse
/// rotation and every block is the quantum ring shift. The step budget is
/// the classical length, after which the record would wrap.
pub fn qubit_chain_shift(n_cells: usize) -> Result<EventumModel> {
    if n_cells < 2 {
        return Err(Error::Param(format!("{n_cells} cells; at least 2 are needed")));
    }
    if n_cells > 24 {
        return Err(Error::Size {
            dim: usize::MAX,
            cap: matcore::DEFAULT_MAX_DIM,
        });
    }
    let c = n_cells / 2;
    let q = n_cells - c;
    let words = 1usize << c;
    let block = qubit_ring_shift(q);
    let classical = qubit_ring_shift(c);
    let labels: Vec<Label> = (0..words).map(|i| eventum::word_label(i, 2, c)).collect();
    let mut b = EventumModel::builder(1 << q, Mode::Strict)
        .labels(labels.iter().cloned())
        .step_budget(c)
        .cells(CellStructure {
            cell_dim: 2,
            classical_cells: c,
            quantum_cells: q,
        });
    for y in 0..words {
        let x = (0..words).find(|&x| classical[(x, y)] == matcore::ONE).expect("permutation");
        b = b.transition(labels[x].clone(), labels[y].clone(), block.clone());
    }
    b.build()
}
