//! End-to-end solver behavior on the benchmark problems.

use ocpec::benchmarks::{
    affine_dvi_default, evaluate_solution_metrics, mode_sequence_of, random_initial_guess, Mode,
};
use ocpec::driver::{cold_start, solve, SolveStatus, SolverOptions};

#[test]
fn affine_dvi_solves_from_cold_start() {
    let problem = affine_dvi_default::<f64>().unwrap();
    let options = SolverOptions::default();
    let y0 = cold_start(&problem);
    let report = solve(&problem, &y0, &options).unwrap();
    eprintln!(
        "status={:?} iters={} accepted={} s={:.2e} z={:.2e}",
        report.status, report.iterations, report.accepted_iterations,
        report.perturbation.s, report.perturbation.z
    );
    for row in report.history.iter().take(40) {
        eprintln!(
            "it {:3} theta={:10.4e} viol={:9.3e} pinf={:9.3e} dinf={:9.3e} kkt={:9.3e} a={:5.3} {:11} s={:8.2e} z={:8.2e} beta={:8.2e} trials={} soc={} frp={}",
            row.iteration, row.theta, row.violation, row.primal_inf, row.dual_inf,
            row.kkt_inf, row.alpha, row.kind.as_str(), row.s, row.z, row.beta,
            row.trials, row.soc, row.frp
        );
    }
    assert_eq!(report.status, SolveStatus::Optimal);

    let metrics = evaluate_solution_metrics(&problem, &report.iterate).unwrap();
    eprintln!(
        "metrics: r_eq={:.3e} r_ineq={:.3e} r_comp={:.3e} cost={:.6}",
        metrics.r_eq, metrics.r_ineq, metrics.r_comp, metrics.cost
    );
    let modes = mode_sequence_of(&problem, &report.iterate, 0);
    for m in &modes {
        eprintln!("mode {:9} [{:.3}, {:.3}]", m.mode.as_str(), m.start, m.end);
    }
    let kinds: Vec<Mode> = modes.iter().map(|m| m.mode).collect();
    assert_eq!(
        kinds,
        vec![Mode::AtLower, Mode::Interior, Mode::AtUpper, Mode::Interior]
    );
}

#[test]
fn affine_dvi_solves_from_random_start() {
    let problem = affine_dvi_default::<f64>().unwrap();
    let options = SolverOptions::default();
    let y0 = random_initial_guess(&problem, 7, 1.0);
    let report = solve(&problem, &y0, &options).unwrap();
    eprintln!("random start: status={:?} iters={}", report.status, report.iterations);
    assert_eq!(report.status, SolveStatus::Optimal);
}
