//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line (run with `--nocapture` to see them). Expected values
//! marked "as stated" reproduce the source material literally even where
//! the computation provably disagrees; the companion tests carry the
//! verified numbers and the failure messages explain the discrepancy.

use std::process::Command;
use std::time::Instant;

use slfib_core::ansatz::{self, AnsatzState, HitchinMode};
use slfib_core::evolve::{evolve, verify_trajectory, EvolutionConfig, Trajectory, VerifyOptions};
use slfib_core::fibration::{self, oracle};
use slfib_core::forms::AltFormOf;
use slfib_core::grid::BaseGrid;
use slfib_core::sampling::{random_band_limited_state, SplitMix64};
use slfib_core::{AltForm, LinearMap, C64};

fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {criterion}: {verdict} — {detail}");
    assert!(pass, "acceptance {criterion} failed: {detail}");
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

// ---------------------------------------------------------------- 1 ----

fn cartan_json() -> (serde_json::Value, f64) {
    let started = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_slfib"))
        .args(["cartan", "--n", "3"])
        .output()
        .expect("binary runs");
    let elapsed = started.elapsed().as_secs_f64();
    assert!(output.status.success(), "cartan subcommand failed: {output:?}");
    let value: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("valid JSON report");
    (value, elapsed)
}

fn polar_row(value: &serde_json::Value, k: usize) -> (i64, i64, i64, i64) {
    let row = &value["reports"][k];
    (
        row["dim_hk"].as_i64().unwrap(),
        row["c_k"].as_i64().unwrap(),
        row["dim_h_in_s"].as_i64().unwrap(),
        row["extension_rank"].as_i64().unwrap(),
    )
}

#[test]
fn criterion_1_cartan_counts() {
    let (value, elapsed) = cartan_json();
    let (h3, c3, s3, r3) = polar_row(&value, 3);
    let (h5, c5, s5, r5) = polar_row(&value, 5);
    let (_, c0, _, _) = polar_row(&value, 0);
    let total = value["cartan_sum"].as_i64().unwrap();
    let target = value["target"].as_i64().unwrap();
    let ok = h3 == 31
        && c3 == 5
        && s3 == 29
        && r3 == 25
        && h5 == 14
        && c5 == 22
        && s5 == 12
        && r5 == 6
        && c0 == 0
        && target == 42
        && elapsed < 1.0;
    report(
        "1 (cartan counts)",
        ok,
        &format!(
            "dim h₃={h3} c₃={c3} polar₃={s3} rank₃={r3}; dim h₅={h5} c₅={c5} polar₅={s5} \
             rank₅={r5}; sum={total} target={target} (both reported); {elapsed:.2}s"
        ),
    );
}

#[test]
fn criterion_1_cartan_flag_sum_closes() {
    // Stronger than the hedged expectation: the flag sum equals the
    // character target exactly, c = (0, 0, 1, 5, 14, 22).
    let (value, _) = cartan_json();
    let total = value["cartan_sum"].as_i64().unwrap();
    let target = value["target"].as_i64().unwrap();
    let equal = value["equal"].as_bool().unwrap();
    report(
        "1 (flag sum closes)",
        total == 42 && target == 42 && equal,
        &format!("Σc_k = {total} = target {target}"),
    );
}

#[test]
fn criterion_1_cartan_counts_level4_as_stated() {
    // Literal level-4 expectations from the source: dim h₄ = 24, polar
    // dimension 22, extension rank 17, c₃+c₄+c₅ = 39. The computation
    // gives 22/20/15 and 41: eleven of the fourteen level-4 restriction
    // equations carry a matrix entry unique to them and the remaining
    // three have determinant 2, so c₄ = 14 exactly (confirmed by
    // rational-arithmetic elimination and a Gram-spectrum oracle), and
    // only c₄ = 14 closes the Cartan sum at the asserted character target
    // 42 — with c₄ = 12 the sum cannot exceed 40. The stated 24 is
    // internally inconsistent with that closure; this test records the
    // literal expectation and is expected to fail.
    let (value, _) = cartan_json();
    let (h4, c4, s4, r4) = polar_row(&value, 4);
    let sum345 =
        polar_row(&value, 3).1 + c4 + polar_row(&value, 5).1;
    report(
        "1 (level-4 counts as stated)",
        h4 == 24 && s4 == 22 && r4 == 17 && sum345 == 39,
        &format!(
            "stated dim h₄=24/polar=22/rank=17/c₃+c₄+c₅=39 vs computed \
             {h4}/{s4}/{r4}/{sum345}; the computed flag sum closes at the \
             character target 42, which contradicts the stated level-4 values"
        ),
    );
}

// ---------------------------------------------------------------- 2 ----

#[test]
fn criterion_2_hitchin_suite() {
    let started = Instant::now();
    let grid = BaseGrid::new(1.0, 16, 0.0, 1.0, 4).unwrap();
    let mut rng = SplitMix64::new(20_260_808);
    let tol = 1e-10;
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let state = random_band_limited_state(&grid, 2, &mut rng, 0.3);
        let report = ansatz::verify_structure(&state, None, HitchinMode::Sample(8)).unwrap();
        let h = report.hitchin.expect("pointwise checks ran");
        assert!(h.decomposable_ok, "trial {trial}: condition (ii) failed");
        assert!(h.min_volume_pairing > 1e-6, "trial {trial}: condition (iii) failed");
        worst = worst
            .max(h.wedge_sup)
            .max(h.normalization_sup)
            .max(h.identity_volume_sup)
            .max(h.identity_theta_dt_sup);
        for node in [0usize, 33] {
            let rt = ansatz::reduce_roundtrip(&state, node, tol).unwrap();
            assert!(rt.ok, "trial {trial} node {node}: roundtrip {rt:?}");
            worst = worst
                .max(rt.j_squared_defect)
                .max(rt.metric_gap)
                .max(rt.moment_gap)
                .max(rt.reduction_gap);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "2 (hitchin suite)",
        worst <= tol && elapsed < 30.0,
        &format!("1000 states: worst residual {worst:.3e} ≤ 1e-10, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------- 3 ----

fn sinusoidal_state(
    grid: &BaseGrid,
    f: impl Fn(f64) -> f64,
    h: impl Fn(f64) -> f64,
) -> AnsatzState {
    let n = grid.node_count();
    let mut w11 = vec![0.0; n];
    let mut w22 = vec![0.0; n];
    let mut rho = vec![0.0; n];
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let x = grid.x(ix);
            w11[grid.idx(ix, iy)] = f(x);
            w22[grid.idx(ix, iy)] = h(x);
            rho[grid.idx(ix, iy)] = f(x) * h(x);
        }
    }
    AnsatzState::new(
        grid.clone(),
        2,
        vec![w11, vec![0.0; n], w22],
        vec![vec![c(0.0, 0.0); n]; 2],
        rho,
        vec![0.0, 0.0],
    )
    .unwrap()
}

fn run_with_line(
    state: &AnsatzState,
    dt: f64,
    line_every: usize,
    store_every: usize,
) -> Trajectory {
    let mut cfg = EvolutionConfig::new(2, vec![0.1, 0.1], dt).unwrap();
    cfg.t1_line_every = line_every;
    cfg.store_every = store_every;
    evolve(state, &cfg).unwrap()
}

#[test]
fn criterion_3_evolution_convergence() {
    let tau = 2.0 * std::f64::consts::PI;
    let grid = BaseGrid::new(1.0, 64, 0.0, 1.0, 4).unwrap();
    let state = sinusoidal_state(&grid, |x| 1.0 + 0.2 * (tau * x).sin(), |_| 1.0);

    // every run shares the t₁-line spacing 0.02: the cross-sweep line is a
    // resolution parameter, and its shared truncation bias cancels in the
    // differences against the reference
    let reference = run_with_line(&state, 1e-4, 200, 200);
    let mut errors = Vec::new();
    let mut sym_ok = true;
    let mut detail = String::new();
    for dt in [0.01f64, 0.005, 0.0025] {
        let stride = (0.02 / dt).round() as usize;
        let traj = run_with_line(&state, dt, stride, stride);
        let err = traj.sup_distance_to_reference(&reference).unwrap();
        let verification = verify_trajectory(&traj, &VerifyOptions::equations_only()).unwrap();
        let sym = verification
            .equations
            .iter()
            .filter(|e| e.equation.starts_with("d(w"))
            .map(|e| e.sup)
            .fold(0.0, f64::max);
        sym_ok &= sym <= 10.0 * err;
        detail += &format!("dt={dt}: err={err:.2e} sym={sym:.2e}; ");
        errors.push(err);
    }
    let order = (errors[0] / errors[2]).log2() / 2.0;
    report(
        "3 (evolution convergence)",
        order >= 3.5 && sym_ok,
        &format!("measured order {order:.2} (≥ 3.5); {detail}symmetry ≤ 10× scheme error"),
    );
}

// ---------------------------------------------------------------- 4 ----

#[test]
fn criterion_4_fibration_invariants() {
    let mut rng = SplitMix64::new(44);
    let mut worst_vol = 0.0f64;
    let mut worst_phi_const = 0.0f64;
    let mut worst_dual = 0.0f64;
    let mut worst_gram = 0.0f64;

    // (a) fibre volume = κ on random band-limited states, two κ values
    for kappa in [1.0, 2.0 * std::f64::consts::PI] {
        let grid = BaseGrid::new(kappa, 32, 0.0, 1.0, 4).unwrap();
        for _ in 0..50 {
            let state = random_band_limited_state(&grid, 2, &mut rng, 0.35);
            let vol = fibration::fiber_volume(&state, 0.4).unwrap();
            worst_vol = worst_vol.max((vol.per_unit_angle - kappa).abs() / kappa);
        }
    }
    // …and on evolved states
    let tau = 2.0 * std::f64::consts::PI;
    let grid = BaseGrid::new(1.0, 32, 0.0, 1.0, 4).unwrap();
    let state = sinusoidal_state(&grid, |x| 1.0 + 0.2 * (tau * x).sin(), |_| 1.0);
    let traj = run_with_line(&state, 0.005, 4, 4);
    for (it1, it2) in [(0, 0), (traj.n1() - 1, 0), (traj.n1() / 2, traj.n2() - 1)] {
        let vol = fibration::fiber_volume(traj.state(it1, it2), 0.0).unwrap();
        worst_vol = worst_vol.max((vol.per_unit_angle - 1.0).abs());
    }

    // (b) Φ = κ whenever W is x-independent
    for _ in 0..50 {
        let kappa = 0.5 + 2.0 * rng.uniform();
        let grid = BaseGrid::new(kappa, 16, 0.0, 1.0, 4).unwrap();
        let l11 = 0.5 + rng.uniform();
        let l21 = rng.symmetric();
        let l22 = 0.5 + rng.uniform();
        let winv = [l11 * l11, l11 * l21, l21 * l21 + l22 * l22];
        let alpha = [c(rng.symmetric(), rng.symmetric()), c(rng.symmetric(), rng.symmetric())];
        let state =
            ansatz::constant_state(grid, 2, &winv, &alpha, vec![0.0, 0.0]).unwrap();
        let phi = fibration::semiflat_volume(&state, 0.5).unwrap();
        worst_phi_const = worst_phi_const.max((phi - kappa).abs() / kappa);
    }

    // (c) dual-path Φ agreement and (d) Gram-oracle agreement
    let grid = BaseGrid::new(1.0, 32, 0.0, 1.0, 4).unwrap();
    for trial in 0..100 {
        let state = random_band_limited_state(&grid, 2, &mut rng, 0.4);
        let phi = fibration::semiflat_volume(&state, 0.5).unwrap();
        let p = fibration::period_matrix(&state, 0.5).unwrap();
        let g = fibration::mclean_metric(&state, 0.5).unwrap();
        let alt = oracle::semiflat_from_periods(&p, &g).unwrap();
        worst_dual = worst_dual.max((phi - alt).abs() / phi.abs().max(1.0));
        if trial < 50 {
            let gram = oracle::mclean_gram(&state, 0.5).unwrap();
            for r in 0..3 {
                for cc in 0..3 {
                    worst_gram = worst_gram.max((g[r][cc] - gram[r][cc]).abs());
                }
            }
        }
    }

    let ok = worst_vol <= 1e-10
        && worst_phi_const <= 1e-10
        && worst_dual <= 1e-10
        && worst_gram <= 1e-9;
    report(
        "4 (fibration invariants)",
        ok,
        &format!(
            "vol gap {worst_vol:.2e} ≤ 1e-10, Φ-const gap {worst_phi_const:.2e} ≤ 1e-10, \
             dual-path {worst_dual:.2e} ≤ 1e-10, Gram {worst_gram:.2e} ≤ 1e-9"
        ),
    );
}

// ---------------------------------------------------------------- 5 ----

/// 5×5 Φ baselines of the non-constant demonstration run (rows: t₂ =
/// 0, 0.025, …, 0.1; columns: t₁ likewise), frozen from the first
/// verified run of the fixed configuration below.
const PHI_BASELINE: [[f64; 5]; 5] = [
    [1.000000000000, 1.000000000000, 1.000000000000, 1.000000000000, 1.000000000000],
    [0.999999372166, 0.999997527000, 0.999991577916, 0.999980213600, 0.999960776479],
    [0.999988675018, 0.999981048741, 0.999956110915, 0.999908691230, 0.999828321579],
    [0.999931994584, 0.999913874177, 0.999851527509, 0.999733483859, 0.999536598130],
    [0.999738393993, 0.999703712463, 0.999568932244, 0.999313563483, 0.998896683677],
];

/// Residual ceiling the demonstration run is held to: the tightest level
/// the stable line resolution verifies at (measured floor ≈ 4.7e-3, set
/// by the ill-posed cross-sweep amplification of the line truncation).
const PHI_RUN_CEILING: f64 = 5e-3;

fn phi_demo_run() -> (Trajectory, [[f64; 5]; 5], f64) {
    let tau = 2.0 * std::f64::consts::PI;
    let grid = BaseGrid::new(1.0, 32, 0.0, 1.0, 4).unwrap();
    let state =
        sinusoidal_state(&grid, |x| 1.0 + 0.5 * (tau * x).sin(), |x| 2.0 + (tau * x).cos());
    let mut cfg = EvolutionConfig::new(2, vec![0.1, 0.1], 0.005).unwrap();
    cfg.t1_line_every = 5;
    cfg.store_every = 1;
    cfg.residual_ceiling = Some(PHI_RUN_CEILING);
    let traj = evolve(&state, &cfg).expect("run passes its residual ceiling");
    let mut phi = [[0.0; 5]; 5];
    let mut worst_gap = 0.0f64;
    for (row, &t2v) in [0.0, 0.025, 0.05, 0.075, 0.1].iter().enumerate() {
        let it2 = traj.t2.iter().position(|&t| (t - t2v).abs() < 1e-9).unwrap();
        for (col, &t1v) in [0.0, 0.025, 0.05, 0.075, 0.1].iter().enumerate() {
            let it1 = traj.t1.iter().position(|&t| (t - t1v).abs() < 1e-9).unwrap();
            let s = traj.state(it1, it2);
            phi[row][col] = fibration::semiflat_volume(s, 0.0).unwrap();
            let geo = fibration::geometry(s, 0.0).unwrap();
            worst_gap = worst_gap.max(geo.phi_dual_path_gap);
        }
    }
    (traj, phi, worst_gap)
}

fn spread(phi: &[[f64; 5]; 5]) -> f64 {
    let flat = phi.iter().flatten();
    let min = flat.clone().cloned().fold(f64::INFINITY, f64::min);
    let max = phi.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    max - min
}

#[test]
fn criterion_5_nonconstant_phi() {
    let (_, phi, dual_gap) = phi_demo_run();
    let spread = spread(&phi);
    let mut baseline_gap = 0.0f64;
    for r in 0..5 {
        for cc in 0..5 {
            baseline_gap = baseline_gap.max((phi[r][cc] - PHI_BASELINE[r][cc]).abs());
        }
    }
    // The demonstration: Φ varies across the base far beyond every
    // numerical error scale of its evaluation, and reproduces the frozen
    // regression baselines.
    let ok = spread > 1.0e-3 && spread > 1000.0 * dual_gap && baseline_gap <= 1e-7;
    report(
        "5 (non-constant Φ)",
        ok,
        &format!(
            "spread {spread:.6e} (> 1e-3, > 1000× dual-path gap {dual_gap:.1e}), \
             baseline gap {baseline_gap:.1e} ≤ 1e-7"
        ),
    );
}

#[test]
fn criterion_5_spread_vs_ceiling_as_stated() {
    // Literal form of the demonstration criterion: spread > 100× the
    // run's residual ceiling. The tightest ceiling any stable
    // configuration of this scenario verifies at is ≈ 5e-3 (the line
    // truncation of the ill-posed cross-sweep direction is amplified by
    // e^{1.37·t₂/h₁}, and finer lines destabilise the run outright), so
    // the assertion demands a spread above 0.5 where the geometry
    // produces 1.1e-3. Expected to fail; the companion test demonstrates
    // the non-constancy itself at the achievable error scales.
    let (_, phi, _) = phi_demo_run();
    let spread = spread(&phi);
    report(
        "5 (spread vs ceiling as stated)",
        spread > 100.0 * PHI_RUN_CEILING,
        &format!(
            "spread {spread:.6e} vs 100× ceiling {:.1e}: the run's verifiable residual \
             floor (≈ 4.7e-3 from the cross-sweep line truncation) exceeds spread/100 \
             for every stable line spacing",
            100.0 * PHI_RUN_CEILING
        ),
    );
}

// ---------------------------------------------------------------- 6 ----

fn random_form(rng: &mut SplitMix64, d: usize, k: usize) -> AltForm {
    let mut form = AltFormOf::zero(d, k);
    // dense random form over all degree-k blades
    fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
        fn rec(d: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..=d {
                cur.push(i);
                rec(d, k, i + 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(d, k, 1, &mut Vec::new(), &mut out);
        out
    }
    for blade in subsets(d, k) {
        let coeff = c(rng.symmetric(), rng.symmetric());
        form = form
            .add(&AltFormOf::from_blades(d, k, &[(blade.as_slice(), coeff)]).unwrap())
            .unwrap();
    }
    form
}

fn random_map(rng: &mut SplitMix64, d: usize) -> LinearMap {
    let entries: Vec<f64> = (0..d * d).map(|_| rng.symmetric()).collect();
    LinearMap::from_fn(d, |r, cc| entries[r * d + cc]).unwrap()
}

#[test]
fn criterion_6_form_property_suites() {
    let started = Instant::now();
    let mut rng = SplitMix64::new(606);
    let d = 6;
    let mut worst = [0.0f64; 4];
    for _ in 0..500 {
        let j = 1 + (rng.next_u64() % 3) as usize;
        let k = 1 + (rng.next_u64() % 3) as usize;
        let a = random_form(&mut rng, d, j);
        let b = random_form(&mut rng, d, k);
        // graded anticommutativity: a∧b = (−1)^{jk} b∧a
        let sign = if (j * k) % 2 == 0 { 1.0 } else { -1.0 };
        let gap = a
            .wedge(&b)
            .unwrap()
            .sub(&b.wedge(&a).unwrap().scale(c(sign, 0.0)))
            .unwrap()
            .max_abs();
        worst[0] = worst[0].max(gap);

        // Leibniz rule of the infinitesimal action over wedge
        let x = random_map(&mut rng, d);
        let lhs = a.wedge(&b).unwrap().lie_action(&x).unwrap();
        let rhs = a
            .lie_action(&x)
            .unwrap()
            .wedge(&b)
            .unwrap()
            .add(&a.wedge(&b.lie_action(&x).unwrap()).unwrap())
            .unwrap();
        worst[1] = worst[1].max(lhs.sub(&rhs).unwrap().max_abs());

        // contraction is an antiderivation
        let v: Vec<f64> = (0..d).map(|_| rng.symmetric()).collect();
        let lhs = a.wedge(&b).unwrap().contract(&v).unwrap();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let rhs = a
            .contract(&v)
            .unwrap()
            .wedge(&b)
            .unwrap()
            .add(&a.wedge(&b.contract(&v).unwrap()).unwrap().scale(c(sign, 0.0)))
            .unwrap();
        worst[2] = worst[2].max(lhs.sub(&rhs).unwrap().max_abs());

        // pullback is an algebra map
        let m = random_map(&mut rng, d);
        let lhs = a.wedge(&b).unwrap().pullback(&m).unwrap();
        let rhs = a.pullback(&m).unwrap().wedge(&b.pullback(&m).unwrap()).unwrap();
        worst[3] = worst[3].max(lhs.sub(&rhs).unwrap().max_abs());
    }
    let elapsed = started.elapsed().as_secs_f64();
    let ok = worst[0] <= 1e-13 && worst[1] <= 1e-12 && worst[2] <= 1e-13 && worst[3] <= 1e-13
        && elapsed < 20.0;
    report(
        "6 (form property suites)",
        ok,
        &format!(
            "500 samples each: anticommutativity {:.1e} ≤ 1e-13, Leibniz {:.1e} ≤ 1e-12, \
             antiderivation {:.1e} ≤ 1e-13, pullback∘wedge {:.1e} ≤ 1e-13; {elapsed:.1}s",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
}
