//! Finite-dimensional von Neumann algebras.
//!
//! An algebra is stored as a trace-orthonormal basis of its span, so that
//! membership is a projection residual and every inclusion `A ⊆ B` becomes a
//! number. At finite dimension all operator topologies coincide, so the
//! bicommutant of a `*`-closed unital set is exactly the algebra it
//! generates.

use crate::error::{Error, Result};
use crate::matcore::{self, CMat, C64, DEFAULT_MAX_DIM, ZERO};
use crate::tol;

#[derive(Clone, Debug)]
pub struct AlgebraBasis {
    dim: usize,
    basis: Vec<CMat>,
}

impl AlgebraBasis {
    /// Wraps an already orthonormal basis, checking orthonormality.
    pub fn from_orthonormal(dim: usize, basis: Vec<CMat>) -> Result<Self> {
        check_shapes(&basis, dim)?;
        let a = Self { dim, basis };
        let defect = a.orthonormality_defect();
        if defect > tol::SOLVED {
            return Err(Error::Param(format!(
                "basis is not trace-orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(a)
    }

    /// Orthonormal basis of the linear span of `elements`.
    pub fn span(dim: usize, elements: &[CMat]) -> Result<Self> {
        check_shapes(elements, dim)?;
        let mut basis: Vec<CMat> = Vec::new();
        for e in elements {
            let scale = e.norm();
            if scale == 0.0 {
                continue;
            }
            let mut w = e.scale_real(1.0 / scale);
            for _ in 0..2 {
                for b in &basis {
                    let c = b.inner(&w);
                    w = &w - &b.scale(c);
                }
            }
            let n = w.norm();
            if n > tol::SOLVED.sqrt() {
                basis.push(w.scale_real(1.0 / n));
            }
        }
        Ok(Self { dim, basis })
    }

    /// `C_{K,X}`: diagonal matrices in the standard basis.
    pub fn diagonal(d: usize) -> Self {
        Self {
            dim: d,
            basis: (0..d).map(|i| CMat::projector(d, i)).collect(),
        }
    }

    /// `B(K)`: all `d × d` matrices.
    pub fn full(d: usize) -> Self {
        let basis = (0..d)
            .flat_map(|i| (0..d).map(move |j| CMat::unit(d, i, j)))
            .collect();
        Self { dim: d, basis }
    }

    /// `ℂ1`: multiples of the identity.
    pub fn scalars(d: usize) -> Self {
        Self {
            dim: d,
            basis: vec![CMat::identity(d).scale_real(1.0 / (d as f64).sqrt())],
        }
    }

    /// The ambient dimension `d` (elements are `d × d`).
    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    /// Dimension of the algebra as a vector space.
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    /// Orthogonal projection of `m` onto the span.
    pub fn project(&self, m: &CMat) -> CMat {
        let mut p = CMat::zeros(self.dim, self.dim);
        for b in &self.basis {
            p += &b.scale(b.inner(m));
        }
        p
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((a.inner(b) - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// Largest membership residual of the adjoint of a basis element.
    pub fn star_closure_defect(&self) -> f64 {
        self.basis
            .iter()
            .map(|b| (&b.adjoint() - &self.project(&b.adjoint())).norm())
            .fold(0.0, f64::max)
    }

    /// Membership residual of the identity.
    pub fn unit_defect(&self) -> f64 {
        let id = CMat::identity(self.dim);
        (&id - &self.project(&id)).norm()
    }
}

fn check_shapes(ms: &[CMat], dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::Shape("ambient dimension must be positive".into()));
    }
    if dim > DEFAULT_MAX_DIM {
        return Err(Error::Size {
            dim,
            cap: DEFAULT_MAX_DIM,
        });
    }
    for (i, m) in ms.iter().enumerate() {
        if m.shape() != (dim, dim) {
            return Err(Error::Shape(format!(
                "element {i} is {}x{}, expected {dim}x{dim}",
                m.rows(),
                m.cols()
            )));
        }
    }
    Ok(())
}

/// Basis of `{X : [X, G] = [X, G*] = 0 for every generator G}`.
///
/// Solved as the nullspace of the stacked commutator system acting on the
/// row-major vectorisation of `X`. Generators are rescaled to unit norm so the
/// singular-value cutoff is scale free. The result is automatically
/// trace-orthonormal because the nullspace vectors are orthonormal.
pub fn commutant(generators: &[CMat], dim: usize) -> Result<AlgebraBasis> {
    check_shapes(generators, dim)?;
    let mut eqs: Vec<CMat> = Vec::new();
    for g in generators {
        let n = g.norm();
        if n == 0.0 {
            continue;
        }
        let g = g.scale_real(1.0 / n);
        let is_hermitian = g.is_hermitian(tol::EXACT);
        let g_adj = g.adjoint();
        eqs.push(g);
        if !is_hermitian {
            eqs.push(g_adj);
        }
    }
    if eqs.is_empty() {
        return Ok(AlgebraBasis::full(dim));
    }

    let d2 = dim * dim;
    let mut system = CMat::zeros(eqs.len() * d2, d2);
    for (e, g) in eqs.iter().enumerate() {
        // Row (i,j) of X G - G X: coefficient G[k][j] on X[i][k] and
        // -G[i][k] on X[k][j].
        for i in 0..dim {
            for j in 0..dim {
                let row = e * d2 + i * dim + j;
                for k in 0..dim {
                    system[(row, i * dim + k)] += g[(k, j)];
                    system[(row, k * dim + j)] -= g[(i, k)];
                }
            }
        }
    }
    let basis = matcore::nullspace(&system, tol::NULLSPACE)
        .into_iter()
        .map(|v| CMat::from_vec(dim, dim, v).expect("nullspace vector has d² entries"))
        .collect();
    Ok(AlgebraBasis { dim, basis })
}

/// The von Neumann algebra generated by `generators`, as `(G')'`.
pub fn bicommutant(generators: &[CMat], dim: usize) -> Result<AlgebraBasis> {
    let first = commutant(generators, dim)?;
    commutant(first.basis(), dim)
}

/// Basis of `a ∩ a'`.
///
/// Writes `X = Σ c_j a_j` and solves `Σ c_j [a_j, a_k] = 0` for all `k`;
/// since `a` is orthonormal the coefficient nullspace maps to an orthonormal
/// basis of the centre.
pub fn center(a: &AlgebraBasis) -> AlgebraBasis {
    let n = a.len();
    let d2 = a.dim * a.dim;
    if n == 0 {
        return a.clone();
    }
    let mut system = CMat::zeros(n * d2, n);
    for (k, ak) in a.basis.iter().enumerate() {
        for (j, aj) in a.basis.iter().enumerate() {
            let comm = aj.commutator(ak);
            for (r, &z) in comm.data().iter().enumerate() {
                system[(k * d2 + r, j)] = z;
            }
        }
    }
    let basis = matcore::nullspace(&system, tol::NULLSPACE)
        .into_iter()
        .map(|coeffs| {
            let mut x = CMat::zeros(a.dim, a.dim);
            for (c, b) in coeffs.iter().zip(&a.basis) {
                if *c != ZERO {
                    x += &b.scale(*c);
                }
            }
            x
        })
        .collect();
    AlgebraBasis { dim: a.dim, basis }
}

/// Frobenius distance from `m` to the span of `a`; zero means `m ∈ a`.
pub fn membership(m: &CMat, a: &AlgebraBasis) -> Result<f64> {
    if m.shape() != (a.dim, a.dim) {
        return Err(Error::Shape(format!(
            "{}x{} matrix tested against an algebra on dimension {}",
            m.rows(),
            m.cols(),
            a.dim
        )));
    }
    Ok((m - &a.project(m)).norm())
}

/// Largest membership residual of `a`'s basis in `b` and of `b`'s in `a`.
pub fn mutual_membership(a: &AlgebraBasis, b: &AlgebraBasis) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for m in a.basis() {
        worst = worst.max(membership(m, b)?);
    }
    for m in b.basis() {
        worst = worst.max(membership(m, a)?);
    }
    Ok(worst)
}

pub fn is_commutative(a: &AlgebraBasis) -> bool {
    a.basis.iter().enumerate().all(|(i, x)| {
        a.basis[i + 1..]
            .iter()
            .all(|y| x.commutator(y).norm() < tol::SOLVED)
    })
}

/// Basis `{a_i ⊗ b_j}` of the tensor product algebra.
pub fn tensor_algebra(a: &AlgebraBasis, b: &AlgebraBasis) -> Result<AlgebraBasis> {
    let dim = a.dim * b.dim;
    if dim > DEFAULT_MAX_DIM {
        return Err(Error::Size {
            dim,
            cap: DEFAULT_MAX_DIM,
        });
    }
    let mut basis = Vec::with_capacity(a.len() * b.len());
    for x in &a.basis {
        for y in &b.basis {
            basis.push(matcore::tensor(x, y)?);
        }
    }
    Ok(AlgebraBasis { dim, basis })
}
