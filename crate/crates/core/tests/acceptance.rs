//! Acceptance checks, one PASS/FAIL line per criterion. Exits nonzero if
//! any criterion fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nashflow::analysis::{convergence_report, estimator_error_of, ne_error_of, CertificateInputs};
use nashflow::digraph::{left_eigenvector, orthogonal_split, scaled_laplacian, DiGraph, ScalingMode, SpectralData};
use nashflow::dynamics::{
    estimator_field, initial_state, lyapunov_decay_rate, min_gain, AlgorithmSpec, SeekerState, SeekingDynamics, Variant,
};
use nashflow::game::{finite_difference_check, pseudogradient, Game, QuadraticGame};
use nashflow::integrator::{integrate, rk4_step, IntegrationConfig, Trajectory};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn pair() -> DiGraph {
    DiGraph::complete(2, 1.0).unwrap()
}

fn unbalanced_pair() -> DiGraph {
    DiGraph::from_weights(DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 0.0])).unwrap()
}

fn ring3() -> DiGraph {
    DiGraph::directed_ring(3, 1.0).unwrap()
}

fn g2() -> QuadraticGame {
    QuadraticGame::two_player_example()
}

fn cournot3() -> QuadraticGame {
    QuadraticGame::cournot(&[6.0, 8.0, 10.0]).unwrap()
}

fn run(graph: &DiGraph, game: &QuadraticGame, spec: AlgorithmSpec, step: f64, horizon: f64) -> Trajectory {
    let adaptive = spec.variant == Variant::Adaptive;
    let dynamics = SeekingDynamics::new(graph, game, spec).unwrap();
    let cfg = IntegrationConfig::new(step, horizon, 10);
    integrate(&dynamics, initial_state(graph.n(), None, adaptive), &cfg).unwrap()
}

fn balanced_convergence() -> Outcome {
    let (graph, game) = (pair(), g2());
    let start = Instant::now();
    let traj = run(&graph, &game, AlgorithmSpec::balanced(7.0), 1e-3, 30.0);
    let z_star = game.nash_equilibrium().unwrap();
    let constants = game.constants().unwrap();
    let split = orthogonal_split(2);
    let lambda2 = SpectralData::of(&graph).unwrap().lambda2.unwrap();
    let inputs = CertificateInputs {
        constants: &constants,
        alpha: 7.0,
        lambda2,
        z_star: &z_star,
        split: &split,
        xi: None,
        tail_fraction: 0.5,
    };
    let report = convergence_report(&traj, &inputs).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = traj.completed()
        && report.final_ne_error <= 1e-6
        && report.envelope_holds
        && report.fit_quality >= 0.99
        && elapsed < 5.0;
    outcome(
        pass,
        format!(
            "ne_error {:.3e} (<= 1e-6), envelope {}, R^2 {:.6}, runtime {:.2}s",
            report.final_ne_error, report.envelope_holds, report.fit_quality, elapsed
        ),
    )
}

fn ring_convergence() -> Outcome {
    let (graph, game) = (ring3(), cournot3());
    let spectral = SpectralData::of(&graph).unwrap();
    let lambda2 = spectral.lambda2.unwrap();
    let constants = game.constants().unwrap();
    let alpha = 1.1 * min_gain(&constants, lambda2).unwrap();
    let traj = run(&graph, &game, AlgorithmSpec::balanced(alpha), 1e-3, 50.0);
    let z_star = game.nash_equilibrium().unwrap();
    let split = orthogonal_split(3);
    let inputs = CertificateInputs {
        constants: &constants,
        alpha,
        lambda2,
        z_star: &z_star,
        split: &split,
        xi: None,
        tail_fraction: 0.5,
    };
    let report = convergence_report(&traj, &inputs).unwrap();
    let pass = (lambda2 - 1.5).abs() < 1e-12 && report.final_ne_error <= 1e-6 && report.lyapunov_monotone;
    outcome(
        pass,
        format!(
            "lambda2 {lambda2:.12}, alpha {alpha:.6}, ne_error {:.3e}, V monotone {}",
            report.final_ne_error, report.lyapunov_monotone
        ),
    )
}

/// Integrates the estimator alone and returns (final error, min Ξ_ii over
/// snapshots, max ξ-weighted drift).
fn estimator_run(graph: &DiGraph) -> (f64, f64, f64) {
    let xi = left_eigenvector(&graph.laplacian()).unwrap();
    let n = graph.n();
    let initial_weights = xi.transpose() * DMatrix::<f64>::identity(n, n);
    let mut est = DMatrix::<f64>::identity(n, n);
    let (mut min_diag, mut drift) = (f64::INFINITY, 0.0f64);
    let h = 1e-3;
    for k in 1..=30_000 {
        est =
            rk4_step(|m: &DMatrix<f64>| Ok::<_, nashflow::dynamics::DynamicsError>(estimator_field(graph, m)), &est, h)
                .unwrap();
        if k % 10 == 0 {
            min_diag = min_diag.min((0..n).map(|i| est[(i, i)]).fold(f64::INFINITY, f64::min));
            drift = drift.max((xi.transpose() * &est - &initial_weights).amax());
        }
    }
    (estimator_error_of(Some(&est), &xi).unwrap(), min_diag, drift)
}

fn estimator_convergence() -> Outcome {
    let mut graphs = vec![unbalanced_pair()];
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 + (seed as usize % 4);
        graphs.push(DiGraph::random_strongly_connected(n, 0.5, &mut rng).unwrap());
    }
    let (mut worst_err, mut min_diag, mut worst_drift) = (0.0f64, f64::INFINITY, 0.0f64);
    for g in &graphs {
        let (err, diag, drift) = estimator_run(g);
        worst_err = worst_err.max(err);
        min_diag = min_diag.min(diag);
        worst_drift = worst_drift.max(drift);
    }
    let pass = worst_err <= 1e-8 && min_diag > 0.0 && worst_drift <= 1e-8;
    outcome(
        pass,
        format!(
            "{} graphs: worst estimator error {worst_err:.3e}, min Xi_ii {min_diag:.3e}, drift {worst_drift:.3e}",
            graphs.len()
        ),
    )
}

fn adaptive_convergence() -> Outcome {
    let (graph, game) = (unbalanced_pair(), g2());
    let spectral = SpectralData::of(&graph).unwrap();
    let constants = game.constants().unwrap();
    let threshold = min_gain(&constants, spectral.lambda2_scaled).unwrap();
    let mode = ScalingMode::BalanceCorrected;
    let adaptive = run(&graph, &game, AlgorithmSpec::adaptive(10.0, mode), 1e-3, 30.0);
    let nominal = run(&graph, &game, AlgorithmSpec::nominal(10.0, spectral.xi.clone(), mode), 1e-3, 30.0);
    let z_star = game.nash_equilibrium().unwrap();
    let ne = ne_error_of(&adaptive.last().z, &z_star);
    let gap = (&adaptive.last().z - &nominal.last().z).amax();
    let pass = (spectral.lambda2_scaled - 4.0 / 3.0).abs() < 1e-12
        && (threshold - 9.0).abs() < 1e-9
        && adaptive.completed()
        && ne <= 1e-6
        && gap <= 1e-6;
    outcome(
        pass,
        format!(
            "lambda2' {:.12}, threshold {threshold:.9}, ne_error {ne:.3e} (<= 1e-6), adaptive-nominal gap {gap:.3e}",
            spectral.lambda2_scaled
        ),
    )
}

fn fixed_point() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let random4 = DiGraph::random_strongly_connected(4, 0.5, &mut rng).unwrap();
    let star = DiGraph::star_with_returns(3, 1.0, 2.0).unwrap();
    let cases: Vec<(DiGraph, QuadraticGame)> = vec![
        (pair(), g2()),
        (unbalanced_pair(), g2()),
        (ring3(), cournot3()),
        (star, cournot3()),
        (DiGraph::complete(3, 0.7).unwrap(), cournot3()),
        (random4, QuadraticGame::decoupled(&[1.0, -2.0, 0.5, 3.0]).unwrap()),
    ];
    let mut worst = 0.0f64;
    let mut count = 0;
    for (graph, game) in &cases {
        let spectral = SpectralData::of(graph).unwrap();
        let z_star = game.nash_equilibrium().unwrap();
        let mut specs = vec![];
        if spectral.balanced {
            specs.push(AlgorithmSpec::balanced(3.0));
        }
        for mode in [ScalingMode::BalanceCorrected, ScalingMode::Inverse] {
            specs.push(AlgorithmSpec::nominal(3.0, spectral.xi.clone(), mode));
            specs.push(AlgorithmSpec::adaptive(3.0, mode));
        }
        for spec in specs {
            let with_xi = spec.variant == Variant::Adaptive;
            let dynamics = SeekingDynamics::new(graph, game, spec).unwrap();
            let state = SeekerState::equilibrium(&z_star, with_xi.then_some(&spectral.xi));
            let d = dynamics.derivative(&state).unwrap();
            worst = worst.max(d.z.amax());
            if let Some(x) = &d.xi {
                worst = worst.max(x.amax());
            }
            count += 1;
        }
    }
    outcome(worst <= 1e-10, format!("{count} variant/graph/game cases, max |field| {worst:.3e}"))
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn packaged_games() -> Vec<(&'static str, QuadraticGame)> {
    vec![
        ("two-player", g2()),
        ("cournot", cournot3()),
        ("decoupled", QuadraticGame::decoupled(&[1.0, -2.0, 0.5, 3.0]).unwrap()),
    ]
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for (_, game) in packaged_games() {
        for _ in 0..100 {
            let z = random_point(&mut rng, game.players(), 5.0);
            worst = worst.max(finite_difference_check(&game, &z, 1e-5));
        }
    }
    outcome(worst <= 1e-6, format!("3 games x 100 points, worst relative error {worst:.3e}"))
}

fn monotonicity_certificates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_mono = f64::INFINITY;
    let mut worst_lip = f64::NEG_INFINITY;
    for game in [g2(), cournot3()] {
        let c = game.constants().unwrap();
        let n = game.players();
        for _ in 0..1000 {
            let x = DVector::from_vec(random_point(&mut rng, n, 10.0));
            let y = DVector::from_vec(random_point(&mut rng, n, 10.0));
            let dz = &x - &y;
            let df = pseudogradient(&game, &x).unwrap() - pseudogradient(&game, &y).unwrap();
            // (F(x) − F(y))·(x − y) − l̲‖x − y‖² ≥ −slack
            worst_mono = worst_mono.min(df.dot(&dz) - c.mono_lower * dz.norm_squared());
            // ‖F(x) − F(y)‖ − l̄‖x − y‖ ≤ slack
            worst_lip = worst_lip.max(df.norm() - c.lip_f * dz.norm());
        }
    }
    let pass = worst_mono >= -1e-9 && worst_lip <= 1e-9;
    outcome(pass, format!("2000 pairs, min monotonicity margin {worst_mono:.3e}, max Lipschitz excess {worst_lip:.3e}"))
}

/// `vec(Ż) = M vec(Z) + c` for the balanced field, row-major, assembled
/// from the edge weights and the cost matrices directly.
fn closed_form(graph: &DiGraph, game: &QuadraticGame, alpha: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = graph.n();
    let a = graph.weights();
    let mut m = DMatrix::zeros(n * n, n * n);
    let mut c = DVector::zeros(n * n);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                if k != i {
                    m[(row, i * n + j)] -= alpha * a[(i, k)];
                    m[(row, k * n + j)] += alpha * a[(i, k)];
                }
            }
        }
        let own = i * n + i;
        for k in 0..n {
            m[(own, i * n + k)] -= game.q(i)[(i, k)];
        }
        c[own] = -game.b(i)[i];
    }
    (m, c)
}

fn linear_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut states = 0;
    while states < 50 {
        let n = rng.gen_range(2..=4);
        let graph = DiGraph::random_strongly_connected(n, 0.5, &mut rng).unwrap();
        let jac =
            DMatrix::from_fn(n, n, |i, j| if i == j { rng.gen_range(3.0..5.0) } else { rng.gen_range(-0.8..0.8) });
        let offset = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let Ok(game) = QuadraticGame::from_pseudogradient(&jac, &offset) else { continue };
        let alpha = rng.gen_range(0.5..20.0);
        let dynamics = SeekingDynamics::new(&graph, &game, AlgorithmSpec::balanced(alpha)).unwrap();
        let (m, c) = closed_form(&graph, &game, alpha);
        let z = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-4.0..4.0));
        let field = dynamics.derivative(&SeekerState { z: z.clone(), xi: None }).unwrap().z;
        let flat = DVector::from_iterator(n * n, z.transpose().iter().copied());
        let expected = &m * flat + &c;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((field[(i, j)] - expected[i * n + j]).abs());
            }
        }
        states += 1;
    }
    outcome(worst <= 1e-12, format!("50 states, n in 2..=4, max deviation {worst:.3e}"))
}

fn integrator_order() -> Outcome {
    let (graph, game) = (pair(), g2());
    let finals: Vec<DMatrix<f64>> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&h| run(&graph, &game, AlgorithmSpec::balanced(7.0), h, 30.0).last().z.clone())
        .collect();
    let e1 = (&finals[0] - &finals[1]).amax();
    let e2 = (&finals[1] - &finals[2]).amax();
    let ratio = e1 / e2;
    outcome(
        (12.0..=20.0).contains(&ratio),
        format!("|Z(4e-3) - Z(2e-3)| {e1:.3e}, |Z(2e-3) - Z(1e-3)| {e2:.3e}, ratio {ratio:.3} (want 12..20)"),
    )
}

fn scaling_discrepancy() -> Outcome {
    let lap = unbalanced_pair().laplacian();
    let xi = left_eigenvector(&lap).unwrap();
    let column_sums = |m: &DMatrix<f64>| (0..m.ncols()).map(|j| m.column(j).sum()).collect::<Vec<_>>();
    let inverse = column_sums(&scaled_laplacian(&lap, &xi, ScalingMode::Inverse).unwrap());
    let corrected = column_sums(&scaled_laplacian(&lap, &xi, ScalingMode::BalanceCorrected).unwrap());
    let inverse_ok = inverse.iter().all(|s| (s.abs() - 4.5).abs() < 1e-10);
    let corrected_max = corrected.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    outcome(
        inverse_ok && corrected_max <= 1e-10,
        format!("inverse column sums {inverse:?}, balance-corrected max |sum| {corrected_max:.3e}"),
    )
}

fn main() {
    // Keep the certified rate used by criterion 1 visible next to the results.
    let nu = lyapunov_decay_rate(&g2().constants().unwrap(), 7.0, 2.0, 2).unwrap();
    println!("certified decay rate for criterion 1: nu = {nu:.6}");

    let criteria: [Criterion; 10] = [
        ("balanced-graph convergence with Lyapunov envelope", balanced_convergence),
        ("directed ring convergence with monotone V", ring_convergence),
        ("left-eigenvector estimator", estimator_convergence),
        ("adaptive convergence and cascade equivalence", adaptive_convergence),
        ("equilibrium is a fixed point of every variant", fixed_point),
        ("pseudogradient against finite differences", gradient_oracle),
        ("monotonicity and Lipschitz constants", monotonicity_certificates),
        ("balanced field against closed-form linear system", linear_oracle),
        ("RK4 step-halving ratio at the long horizon", integrator_order),
        ("inverse vs balance-corrected scaling column sums", scaling_discrepancy),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict}: {name}: {}", k + 1, result.detail);
        failed += usize::from(!result.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
