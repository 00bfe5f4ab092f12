//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use eventum_core::embed::{self, ChainLayout, KrausFamily};
use eventum_core::eventum::{
    backward_history, check_compatibility, duality_residual, evolve, extract_blocks,
    reconstruct_u, sample_trajectories, schrodinger_step, Branch, CQState, EventumModel, Mode,
};
use eventum_core::matcore::{self, BasisPartition};
use eventum_core::models::{self, GeigerParams};
use eventum_core::random::{
    ginibre, haar_unitary, random_density, random_hermitian, random_kraus_model,
    random_strict_model,
};
use eventum_core::vnalg::{self, AlgebraBasis};
use eventum_core::{io, CMat, Error, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

fn commutant_of_diagonal() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for d in [2, 3, 8] {
        let gens: Vec<CMat> = (0..d).map(|i| CMat::projector(d, i)).collect();
        let c = vnalg::commutant(&gens, d).map_err(|e| e.to_string())?;
        ensure(c.len() == d, || format!("d = {d}: commutant dimension {} != {d}", c.len()))?;
        let r = vnalg::mutual_membership(&c, &AlgebraBasis::diagonal(d)).map_err(|e| e.to_string())?;
        ensure(r < 1e-10, || format!("d = {d}: mutual membership residual {r:e}"))?;
        worst = worst.max(r);
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("d in {{2,3,8}}, worst residual {worst:.1e}, {:.3}s", start.elapsed().as_secs_f64()))
}

/// Generators of a random algebra on `C^d`: the scalars, a generic
/// self-adjoint element, or a rotated block projector.
fn random_generators(d: usize, rng: &mut ChaCha8Rng) -> Vec<CMat> {
    match rng.random_range(0..3) {
        0 => vec![CMat::identity(d)],
        1 => vec![random_hermitian(d, rng)],
        _ => {
            let v = haar_unitary(d, rng);
            let k = rng.random_range(1..d.max(2));
            let mut p = CMat::zeros(d, d);
            for i in 0..k.min(d) {
                p[(i, i)] = C64::new(1.0, 0.0);
            }
            vec![v.sandwich(&p)]
        }
    }
}

fn tensor_commutant() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA2);
    let mut worst: f64 = 0.0;
    let mut dims = std::collections::BTreeSet::new();
    for (da, db) in [(2, 2), (2, 3)] {
        for trial in 0..20 {
            let ga = random_generators(da, &mut rng);
            let gb = random_generators(db, &mut rng);
            let mut gab = Vec::new();
            for g in &ga {
                gab.push(matcore::tensor(g, &CMat::identity(db)).unwrap());
            }
            for g in &gb {
                gab.push(matcore::tensor(&CMat::identity(da), g).unwrap());
            }
            let ca = vnalg::commutant(&ga, da).map_err(|e| e.to_string())?;
            let cb = vnalg::commutant(&gb, db).map_err(|e| e.to_string())?;
            let cab = vnalg::commutant(&gab, da * db).map_err(|e| e.to_string())?;
            ensure(cab.len() == ca.len() * cb.len(), || {
                format!(
                    "({da},{db}) trial {trial}: dim (a⊗b)' = {} but dim a' · dim b' = {}",
                    cab.len(),
                    ca.len() * cb.len()
                )
            })?;
            let prod = vnalg::tensor_algebra(&ca, &cb).map_err(|e| e.to_string())?;
            let r = vnalg::mutual_membership(&cab, &prod).map_err(|e| e.to_string())?;
            ensure(r < 1e-9, || format!("({da},{db}) trial {trial}: residual {r:e}"))?;
            worst = worst.max(r);
            dims.insert(cab.len());
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "40 pairs, commutant dimensions {dims:?}, worst residual {worst:.1e}, {:.3}s",
        start.elapsed().as_secs_f64()
    ))
}

fn beables_and_predictables() -> Check {
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        for l in [2, 3] {
            let diag = AlgebraBasis::diagonal(n);
            let c = vnalg::tensor_algebra(&diag, &AlgebraBasis::scalars(l)).unwrap();
            let a = vnalg::tensor_algebra(&diag, &AlgebraBasis::full(l)).unwrap();
            let c_comm = vnalg::commutant(c.basis(), n * l).map_err(|e| e.to_string())?;
            let a_comm = vnalg::commutant(a.basis(), n * l).map_err(|e| e.to_string())?;
            ensure(c_comm.len() == a.len() && a_comm.len() == c.len(), || {
                format!("|X| = {n}, dim L = {l}: dimensions {} / {}", c_comm.len(), a_comm.len())
            })?;
            let r1 = vnalg::mutual_membership(&c_comm, &a).map_err(|e| e.to_string())?;
            let r2 = vnalg::mutual_membership(&a_comm, &c).map_err(|e| e.to_string())?;
            ensure(r1 < 1e-10 && r2 < 1e-10, || {
                format!("|X| = {n}, dim L = {l}: residuals {r1:e}, {r2:e}")
            })?;
            worst = worst.max(r1).max(r2);
        }
    }
    Ok(format!("C' = A and A' = C for |X|, dim L in {{2,3}}, worst residual {worst:.1e}"))
}

fn strict_models(rng: &mut ChaCha8Rng) -> Vec<EventumModel> {
    (0..100)
        .map(|_| {
            let n = rng.random_range(2..=4);
            let l = rng.random_range(1..=3);
            random_strict_model(n, l, rng).expect("random strict model")
        })
        .collect()
}

fn compatibility_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA4);
    let mut worst: f64 = 0.0;
    for (k, m) in strict_models(&mut rng).iter().enumerate() {
        let u = reconstruct_u(m).map_err(|e| e.to_string())?;
        let r = check_compatibility(&u, m.len(), m.dim_l()).map_err(|e| e.to_string())?;
        let (c, a) = (r.inclusion_beables.unwrap(), r.inclusion_predictables.unwrap());
        ensure(r.compatible && c < 1e-9 && a < 1e-9, || {
            format!("model {k}: compatible = {}, inclusions {c:e} / {a:e}", r.compatible)
        })?;
        worst = worst.max(c).max(a);
        let h = haar_unitary(m.len() * m.dim_l(), &mut rng);
        let r = check_compatibility(&h, m.len(), m.dim_l()).map_err(|e| e.to_string())?;
        ensure(!r.compatible && r.violations.iter().any(|v| v.starts_with("row ")), || {
            format!("Haar unitary {k} not rejected with row evidence: {:?}", r.violations)
        })?;
        let failed = r.inclusion_beables.unwrap() >= 1e-9 || r.inclusion_predictables.unwrap() >= 1e-9;
        ensure(failed, || format!("Haar unitary {k}: both inclusions hold"))?;
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "100 strict models accepted (worst inclusion {worst:.1e}), 100 Haar unitaries rejected, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn block_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA4);
    for (k, m) in strict_models(&mut rng).iter().enumerate() {
        let u = reconstruct_u(m).map_err(|e| e.to_string())?;
        let blocks = extract_blocks(&u, m.len(), m.dim_l()).map_err(|e| e.to_string())?;
        for x in 0..m.len() {
            let y = m.f_index(x).expect("strict f is total");
            ensure(blocks.get(x, y) == m.block_at(x).unwrap(), || {
                format!("model {k}: block at label {x} differs")
            })?;
        }
    }
    Ok("100 strict models, blocks equal entrywise".into())
}

fn random_state(model: &EventumModel, rng: &mut ChaCha8Rng) -> CQState {
    let inner: Vec<_> = (0..model.len())
        .filter(|&i| !model.predecessor_indices(i).is_empty())
        .collect();
    let k = rng.random_range(1..=inner.len());
    let weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = weights.iter().sum();
    let branches = inner
        .iter()
        .take(k)
        .zip(&weights)
        .map(|(&i, &w)| Branch {
            label: model.label(i).clone(),
            weight: w / total,
            dm: random_density(model.dim_l(), rng),
        })
        .collect();
    CQState::new(branches).expect("valid random state")
}

fn duality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA6);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let l = rng.random_range(1..=3);
        let depth = rng.random_range(1..=3);
        let m = random_kraus_model(l, depth, 3, &mut rng).map_err(|e| e.to_string())?;
        let s = random_state(&m, &mut rng);
        let b = ginibre(l, l, &mut rng);
        for x in m.labels() {
            let r = duality_residual(&m, &s, &b, x.as_str()).map_err(|e| e.to_string())?;
            ensure(r < 1e-10, || format!("model {k}, label {x}: residual {r:e}"))?;
            worst = worst.max(r);
        }
    }
    Ok(format!("50 kraus models, every label, worst residual {worst:.1e}"))
}

fn projective_qubit() -> KrausFamily {
    KrausFamily::new(2, vec![CMat::projector(2, 0), CMat::projector(2, 1)]).expect("complete")
}

fn plus() -> CMat {
    CMat::from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]).unwrap()
}

fn embedding_measurement() -> Check {
    let start = Instant::now();
    let k = projective_qubit();
    let rho = plus();
    let layout = ChainLayout::new(2, 2, 1, false).map_err(|e| e.to_string())?;
    let emb = embed::assemble(&k, &layout).map_err(|e| e.to_string())?;
    let init = emb.initial_state(&rho).map_err(|e| e.to_string())?;

    let exact = schrodinger_step(&emb.model, &init).map_err(|e| e.to_string())?;
    ensure(exact.branches().len() == 2, || format!("{} branches", exact.branches().len()))?;
    for b in exact.branches() {
        ensure((b.weight - 0.5).abs() < 1e-12, || format!("weight of {} is {}", b.label, b.weight))?;
    }

    let n = 100_000;
    let report = embed::channel_check(&k, &rho, &layout, n, 0xA7).map_err(|e| e.to_string())?;
    for o in &report.outcomes {
        ensure((o.empirical - 0.5).abs() < 0.0047, || {
            format!("outcome {} frequency {}", o.outcome, o.empirical)
        })?;
    }
    ensure(report.max_trace_distance < 1e-10, || {
        format!("trace distance {:e}", report.max_trace_distance)
    })?;

    // Composite post-state: its pinch is the classical mixture of product
    // states, and no predictable can tell it from its pinch.
    let before = embed::composite_initial(&emb, &rho).map_err(|e| e.to_string())?;
    let after = embed::apply_unitary(&emb, &before);
    let part = BasisPartition::uniform(emb.model.len(), emb.dim_l()).unwrap();
    let pinched = matcore::pinch(&after, &part).unwrap();
    let mut mixture = CMat::zeros(after.rows(), after.cols());
    for x in 1..=k.outcomes() {
        let p = k.probabilities(&rho)[x - 1];
        let sys = k.post_state(&rho, x).expect("outcome has weight");
        let l = matcore::tensor(&sys, &emb.record_projector(x).unwrap()).unwrap();
        let sector = CMat::projector(emb.model.len(), x);
        mixture += &matcore::tensor(&sector, &l).unwrap().scale_real(p);
    }
    let mixture_gap = pinched.max_abs_diff(&mixture);
    ensure(mixture_gap < 1e-10, || format!("pinched state differs from mixture by {mixture_gap:e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7A);
    let mut indistinguishable: f64 = 0.0;
    for _ in 0..20 {
        let mut a = CMat::zeros(after.rows(), after.cols());
        for x in 0..emb.model.len() {
            a.set_submatrix(x * emb.dim_l(), x * emb.dim_l(), &ginibre(emb.dim_l(), emb.dim_l(), &mut rng));
        }
        let gap = (after.trace_product(&a) - pinched.trace_product(&a)).norm();
        indistinguishable = indistinguishable.max(gap);
    }
    ensure(indistinguishable < 1e-10, || {
        format!("a predictable separates the state from its pinch by {indistinguishable:e}")
    })?;
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "weights 0.5/0.5, frequencies {:.4}/{:.4} over {n}, trace distance {:.1e}, pinch gap {:.1e}, {:.2}s",
        report.outcomes[0].empirical,
        report.outcomes[1].empirical,
        report.max_trace_distance,
        mixture_gap.max(indistinguishable),
        start.elapsed().as_secs_f64()
    ))
}

fn embedding_gating() -> Check {
    let k = projective_qubit();
    let layout = ChainLayout::new(2, 3, 2, true).map_err(|e| e.to_string())?;
    let emb = embed::assemble(&k, &layout).map_err(|e| e.to_string())?;
    let init = emb.initial_state(&plus()).map_err(|e| e.to_string())?;

    let two = evolve(&emb.model, &init, 2).map_err(|e| e.to_string())?;
    for b in two.branches() {
        let rec = emb.record(&b.label);
        let outcomes = rec.iter().filter(|&&s| s != 0).count();
        ensure(outcomes == 1 && rec[0] != 0 && rec[1] == 0, || {
            format!("record {:?} after two gated steps", rec)
        })?;
    }

    // The same with the raw unitary applied twice.
    let rho0 = embed::composite_initial(&emb, &plus()).map_err(|e| e.to_string())?;
    let rho2 = emb.unitary.sandwich(&emb.unitary.sandwich(&rho0));
    let l = emb.dim_l();
    for x in 0..emb.model.len() {
        let w = rho2.submatrix(x * l, x * l, l, l).trace().re;
        let rec = emb.record(emb.model.label(x));
        let expected = if rec[0] != 0 && rec[1] == 0 { 0.5 } else { 0.0 };
        ensure((w - expected).abs() < 1e-12, || format!("record {rec:?} has weight {w}"))?;
    }

    let runs = sample_trajectories(&emb.model, &init, 2, 0xA8, 1000).map_err(|e| e.to_string())?;
    for t in &runs {
        let last = t.labels.last().unwrap();
        let mut hist = backward_history(&emb.model, last.as_str(), 2).map_err(|e| e.to_string())?;
        hist.reverse();
        ensure(hist == t.labels, || format!("history {hist:?} != trajectory {:?}", t.labels))?;
        let x = emb.record(last)[0];
        let expected = [vec![0, 0], vec![0, x], vec![x, 0]];
        for (t_idx, label) in t.labels.iter().enumerate() {
            ensure(emb.record(label) == expected[t_idx], || {
                format!("record at time {t_idx} is {:?}", emb.record(label))
            })?;
        }
    }
    ensure(
        matches!(evolve(&emb.model, &init, 3), Err(Error::Horizon { .. })),
        || "a third step was not refused".into(),
    )?;
    Ok("one record shifted one cell deeper after two gated steps; 1000 histories agree".into())
}

fn geiger() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for beta_sq in [0.0, 0.25, 0.5, 1.0] {
        for gamma in [0.1, 0.5, 0.9] {
            let p = GeigerParams::from_excitation(1.0 - beta_sq, gamma, 20).map_err(|e| e.to_string())?;
            let (m, s) = models::geiger_model(&p).map_err(|e| e.to_string())?;
            for n in 0..=20 {
                let exact = models::geiger_exact(&m, &s, n).map_err(|e| e.to_string())?;
                let closed = models::geiger_closed_form(&p, n).map_err(|e| e.to_string())?;
                let mut gap = (exact.p_click_at_n - closed.p_click_at_n)
                    .abs()
                    .max((exact.survival - closed.survival).abs());
                if let (Some(a), Some(b)) = (&exact.no_click_state, &closed.no_click_state) {
                    gap = gap.max(a.max_abs_diff(b));
                }
                ensure(gap < 1e-10, || {
                    format!("|alpha|^2 = {}, gamma = {gamma}, n = {n}: gap {gap:e}", 1.0 - beta_sq)
                })?;
                worst = worst.max(gap);
            }
        }
    }

    let horizon = 60;
    let n_traj = 100_000;
    let p = GeigerParams::from_excitation(0.5, 0.2, horizon).map_err(|e| e.to_string())?;
    let (m, s) = models::geiger_model(&p).map_err(|e| e.to_string())?;
    let runs = sample_trajectories(&m, &s, horizon, 0xA9, n_traj).map_err(|e| e.to_string())?;
    let mut counts = vec![0usize; horizon + 1];
    for t in &runs {
        if let Some(n) = models::click_time(t.labels.last().unwrap()) {
            counts[n] += 1;
        }
    }
    let total = n_traj as f64;
    let mut worst_z: f64 = 0.0;
    for (n, &count) in counts.iter().enumerate().take(11).skip(1) {
        let pn = p.click_pmf(n);
        let se = (pn * (1.0 - pn) / total).sqrt();
        let z = (count as f64 / total - pn).abs() / se;
        ensure(z <= 3.0, || format!("bin {n}: {:.2} standard errors", z))?;
        worst_z = worst_z.max(z);
    }
    let clicked = counts.iter().sum::<usize>() as f64 / total;
    ensure((clicked - 0.5).abs() < 0.01, || format!("cumulative click frequency {clicked}"))?;
    within(start.elapsed(), 20.0)?;
    Ok(format!(
        "grid gap {worst:.1e}; 10 bins within {worst_z:.2} SE; clicked {clicked:.4}; {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn finite_branching() -> Check {
    let built = EventumModel::builder(2, Mode::Strict)
        .labels(["y", "x"])
        .transition("y", "y", CMat::projector(2, 0))
        .transition("x", "y", CMat::projector(2, 1))
        .build();
    let Err(Error::FiniteBranching { target, count }) = built else {
        return Err(format!("builder returned {built:?}"));
    };
    ensure(target == "y" && count == 2, || format!("error names `{target}` with {count}"))?;
    let auto = models::autonomous_model(&[1, 1, 0], vec![CMat::identity(1); 3]);
    ensure(matches!(auto, Err(Error::FiniteBranching { .. })), || {
        format!("autonomous constructor returned {auto:?}")
    })?;
    Ok(format!("rejected: `{target}` has {count} predecessors on a finite label set"))
}

fn reproducibility() -> Check {
    let dir = std::env::temp_dir().join(format!("eventum-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let p = GeigerParams::from_excitation(0.5, 0.2, 30).map_err(|e| e.to_string())?;
    let (m, s) = models::geiger_model(&p).map_err(|e| e.to_string())?;
    let model = dir.join("geiger.json");
    let state = dir.join("init.json");
    std::fs::write(&model, io::write_model(&m, None)).map_err(|e| e.to_string())?;
    std::fs::write(&state, io::write_state(&s)).map_err(|e| e.to_string())?;
    let run = |out: &str| -> Result<Vec<u8>, String> {
        let out_path = dir.join(out);
        let o = Command::new(env!("CARGO_BIN_EXE_eventum"))
            .args(["simulate", model.to_str().unwrap(), state.to_str().unwrap()])
            .args(["--steps", "30", "--ntraj", "2000", "--seed", "42", "--out"])
            .arg(&out_path)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
        std::fs::read(&out_path).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a.json")?, run("b.json")?);
    let _ = std::fs::remove_dir_all(&dir);
    ensure(a == b, || "run records differ".into())?;
    Ok(format!("two runs, {} identical bytes", a.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("commutant of the diagonal projectors is the diagonal algebra", commutant_of_diagonal),
        ("commutant of a tensor product is the tensor product of commutants", tensor_commutant),
        ("beables and predictables are each other's commutant", beables_and_predictables),
        ("compatibility: strict models accepted, Haar unitaries rejected", compatibility_equivalence),
        ("block round trip through the full unitary", block_round_trip),
        ("Schrödinger and Heisenberg pictures agree", duality),
        ("embedded projective measurement", embedding_measurement),
        ("gated embedding records one outcome", embedding_gating),
        ("Geiger counter statistics", geiger),
        ("strict branching on finite labels is rejected", finite_branching),
        ("simulate is byte-reproducible", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
