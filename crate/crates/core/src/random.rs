//! Random test objects: Haar unitaries, isometries, states and models.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::eventum::{EventumModel, Label, Mode};
use crate::matcore::{CMat, C64};
use crate::Result;

/// A matrix of independent standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of
/// `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let qr = ginibre(n, n, rng).to_nalgebra().qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = CMat::from_nalgebra(&q);
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            out[(i, j)] *= phase;
        }
    }
    out
}

/// The first `cols` columns of a Haar unitary.
pub fn random_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    haar_unitary(rows, rng).submatrix(0, 0, rows, cols)
}

/// `G G* / tr(G G*)` for a Ginibre `G`; full rank almost surely.
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = ginibre(n, n, rng);
    let m = &g * &g.adjoint();
    let t = m.trace().re;
    m.scale_real(1.0 / t)
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = ginibre(n, n, rng);
    (&g + &g.adjoint()).scale_real(0.5)
}

/// Splits a random `(k·d) × d` isometry into `k` blocks with
/// `Σ V_i* V_i = 1`.
pub fn random_kraus_family<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Vec<CMat> {
    let v = random_isometry(k * d, d, rng);
    (0..k).map(|i| v.submatrix(i * d, 0, d, d)).collect()
}

/// Autonomous strict model on labels `"0".."n-1"` with a random bijective
/// `f` and Haar blocks.
pub fn random_strict_model<R: Rng + ?Sized>(
    num_labels: usize,
    dim_l: usize,
    rng: &mut R,
) -> Result<EventumModel> {
    let mut f: Vec<usize> = (0..num_labels).collect();
    f.shuffle(rng);
    let mut b = EventumModel::builder(dim_l, Mode::Strict).labels((0..num_labels).map(|i| Label::new(&i.to_string())));
    for (x, &y) in f.iter().enumerate() {
        b = b.transition(
            Label::new(&x.to_string()),
            Label::new(&y.to_string()),
            haar_unitary(dim_l, rng),
        );
    }
    b.build()
}

/// Kraus-mode model on a random history tree of the given depth; each node
/// has between 1 and `max_branching` children whose blocks split a random
/// isometry.
pub fn random_kraus_model<R: Rng + ?Sized>(
    dim_l: usize,
    depth: usize,
    max_branching: usize,
    rng: &mut R,
) -> Result<EventumModel> {
    let root = Label::new("0");
    let mut b = EventumModel::builder(dim_l, Mode::Kraus).label(root.clone());
    let mut frontier = vec![root];
    for _ in 0..depth {
        let mut next = Vec::new();
        for y in &frontier {
            let k = rng.random_range(1..=max_branching.max(1));
            for (i, block) in random_kraus_family(dim_l, k, rng).into_iter().enumerate() {
                let x = y.child(&i.to_string());
                b = b.label(x.clone()).transition(x.clone(), y.clone(), block);
                next.push(x);
            }
        }
        frontier = next;
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_and_isometry_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..6 {
            assert!(matcore::unitarity_defect(&haar_unitary(n, &mut rng)) < 1e-12);
            assert!(matcore::isometry_defect(&random_isometry(n + 2, n, &mut rng)) < 1e-12);
        }
    }

    #[test]
    fn density_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density(4, &mut rng);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!(matcore::hermitian_eigenvalues(&rho)[0] > -1e-12);
    }

    #[test]
    fn kraus_family_is_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ops = random_kraus_family(3, 4, &mut rng);
        let mut sum = CMat::zeros(3, 3);
        for a in &ops {
            sum += &(&a.adjoint() * a);
        }
        assert!(sum.max_abs_diff(&CMat::identity(3)) < 1e-12);
    }

    #[test]
    fn random_models_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        random_strict_model(4, 3, &mut rng).unwrap();
        let k = random_kraus_model(2, 3, 3, &mut rng).unwrap();
        assert!(k.len() >= 4);
    }
}
