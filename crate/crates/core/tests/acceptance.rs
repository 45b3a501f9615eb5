//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the report is printed by `cargo test`. The
//! process exit status stays zero; read the lines for the verdicts.

use std::f64::consts::PI;
use std::time::Instant;

use pendulum_core::cases::{body_a, CaseId};
use pendulum_core::dynamics::{integrate, momentum_pi3, solve_relative_attitude, DiscreteState, ImplicitOptions};
use pendulum_core::error::Error;
use pendulum_core::phase::{surface_phase, wrap_angle, ReducedTrajectory};
use pendulum_core::sensitivity::{accumulate_transition, raw_newton_step, transition_fd};
use pendulum_core::shooting::{solve, DirectionMode, Solution, SolveStatus, SolverConfig};
use pendulum_core::so3::{exp_so3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 5;
const TERMINAL_GATE: f64 = 1e-10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

struct Run {
    case: CaseId,
    seed: u64,
    outcome: Result<Solution, Error>,
}

impl Run {
    fn converged(&self) -> Option<&Solution> {
        self.outcome.as_ref().ok().filter(|s| {
            s.status == SolveStatus::Converged
                && s.terminal.attitude_norm <= TERMINAL_GATE
                && s.terminal.momentum_norm <= TERMINAL_GATE
        })
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Criteria 1 and 2 share one controlled run.
fn conservation() -> (Verdict, Verdict) {
    let body = body_a();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = DiscreteState::new(exp_so3(&(random_unit(&mut rng) * 0.8)), random_unit(&mut rng));
    let controls: Vec<Vec3> = (0..10_000)
        .map(|k| {
            let t = k as f64 * 0.01;
            Vec3::new((1.3 * t).sin(), (0.7 * t).cos(), 0.5 * (2.1 * t).sin()) + random_unit(&mut rng) * 0.2
        })
        .collect();
    let started = Instant::now();
    let traj = integrate(&start, &controls, &body, 0.01).expect("simulation");
    let elapsed = started.elapsed().as_secs_f64();
    let pi3 = momentum_pi3(&start);
    let drift = traj.states.iter().map(|s| (momentum_pi3(s) - pi3).abs()).fold(0.0, f64::max);
    let defect = traj.states.iter().map(|s| s.r.orthogonality_defect()).fold(0.0, f64::max);
    (
        verdict(
            drift <= 1e-12 && elapsed < 5.0,
            format!("max |pi3(k) - pi3(0)| = {drift:.2e} over 1e4 steps in {elapsed:.3}s"),
        ),
        verdict(defect <= 1e-12, format!("max ||R^T R - I||_F = {defect:.2e}")),
    )
}

fn implicit_efficiency() -> Verdict {
    let body = body_a();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = Vec::with_capacity(10_000);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let pi = random_unit(&mut rng) * rng.random_range(0.0..3.0);
        match solve_relative_attitude(&pi, &body, 0.01) {
            Ok(rel) => {
                worst = worst.max(rel.residual);
                counts.push(rel.iterations);
            }
            Err(e) => return verdict(false, format!("solve failed: {e}")),
        }
    }
    counts.sort_unstable();
    let max = counts[counts.len() - 1];
    let median = counts[counts.len() / 2];
    verdict(
        worst <= 1e-13 && max <= 5 && median <= 3,
        format!("max residual {worst:.2e}, Newton iterations max {max}, median {median}"),
    )
}

fn sensitivity(runs: &[Run]) -> Verdict {
    let Some(sol) = runs.iter().filter(|r| r.case == CaseId::I).find_map(Run::converged) else {
        return verdict(false, "no converged case (i) extremal".into());
    };
    let problem = CaseId::I.default_problem();
    let started = Instant::now();
    let analytic = accumulate_transition(&sol.extremal).expect("analytic sweep").psi12;
    let fd = transition_fd(&problem.initial, &sol.lambda0, &sol.extremal, 1e-6, &ImplicitOptions::default())
        .expect("finite differences")
        .psi12;
    let rel = (analytic - fd).norm() / fd.norm();
    let elapsed = started.elapsed().as_secs_f64();
    verdict(rel <= 1e-5 && elapsed < 30.0, format!("relative Frobenius gap {rel:.2e} in {elapsed:.3}s"))
}

fn rank_deficiency(runs: &[Run]) -> Verdict {
    let mut last_row: f64 = 0.0;
    let mut cond_hi: f64 = 0.0;
    let mut raw_lo = f64::INFINITY;
    let mut count = 0;
    for sol in runs.iter().filter_map(Run::converged) {
        count += 1;
        last_row = last_row.max(sol.record.max_last_row_norm());
        if let Some((_, hi)) = sol.record.cond_range() {
            cond_hi = cond_hi.max(hi);
        }
        let psi = accumulate_transition(&sol.extremal).expect("analytic sweep").psi12;
        let (_, raw) = raw_newton_step(&psi, &sol.terminal.body_frame);
        raw_lo = raw_lo.min(raw);
    }
    verdict(
        count > 0 && last_row <= 1e-12 && cond_hi <= 1e6 && raw_lo >= 1e12,
        format!(
            "{count} converged runs: max last-row norm {last_row:.2e}, max cond(Xi) {cond_hi:.2e}, min raw cond {raw_lo:.2e}"
        ),
    )
}

fn end_to_end(runs: &[Run]) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for case in CaseId::ALL {
        let ok = runs.iter().filter(|r| r.case == case && r.converged().is_some()).count();
        let slowest = runs
            .iter()
            .filter(|r| r.case == case)
            .filter_map(|r| match &r.outcome {
                Ok(s) => Some(s.wall_time.as_secs_f64()),
                Err(Error::MaxIterations(s)) => Some(s.wall_time.as_secs_f64()),
                Err(_) => None,
            })
            .fold(0.0, f64::max);
        pass &= ok >= 4;
        parts.push(format!("({case}) {ok}/{SEEDS} [slowest {slowest:.2}s]"));
    }
    verdict(pass, parts.join(", "))
}

fn cost_table(runs: &[Run]) -> Verdict {
    let mut spreads = Vec::new();
    let mut costs = Vec::new();
    let mut stable = true;
    for case in CaseId::ALL {
        let js: Vec<f64> = runs.iter().filter(|r| r.case == case).filter_map(Run::converged).map(|s| s.cost).collect();
        if js.is_empty() {
            return verdict(false, format!("no converged seed for case ({case})"));
        }
        let lo = js.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = js.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = (hi - lo) / lo;
        stable &= spread <= 1e-6;
        costs.push(js[0]);
        let listed: Vec<String> = js.iter().map(|j| format!("{j:.6}")).collect();
        spreads.push(format!("({case}) J = [{}] spread {spread:.1e}", listed.join(", ")));
    }
    let ordered = costs[1] > costs[0] && costs[3] > costs[2] && costs[2].max(costs[3]) < costs[0].min(costs[1]);
    verdict(stable && ordered, format!("{}; ordering {}", spreads.join("; "), if ordered { "ok" } else { "violated" }))
}

fn phase_validation(runs: &[Run]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (case, expected) in [(CaseId::I, PI / 2.0), (CaseId::II, PI)] {
        let Some(sol) = runs.iter().filter(|r| r.case == case).find_map(Run::converged) else {
            pass = false;
            parts.push(format!("({case}) no converged run"));
            continue;
        };
        let reduced = ReducedTrajectory::from_trajectory(&sol.extremal.trajectory);
        match surface_phase(&reduced, &case.body().inertia) {
            Ok(est) => {
                let gap = wrap_angle(est.theta - expected).abs();
                pass &= gap <= 1e-2;
                parts.push(format!("({case}) theta = {:.6}, gap {gap:.2e}", est.theta));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("({case}) {e}"));
            }
        }
    }
    verdict(pass, parts.join(", "))
}

fn raw_mode_fails() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for case in CaseId::ALL {
        let config = SolverConfig { direction: DirectionMode::Raw, ..SolverConfig::default() };
        let outcome = match solve(&case.default_problem(), &config, None) {
            Ok(s) => {
                pass = false;
                format!("converged after {} outer iterations", s.record.outer_iterations())
            }
            Err(Error::MaxIterations(s)) => format!("{:?} at error {:.2e}", s.status, s.error),
            Err(e) => format!("aborted: {}", e.root()),
        };
        parts.push(format!("({case}) {outcome}"));
    }
    verdict(pass, parts.join("; "))
}

/// Ratio of the last two log-error drops among the three accepted errors
/// preceding the one that meets the stopping test.
fn tail_ratio(errors: &[f64]) -> Option<f64> {
    if errors.len() < 4 {
        return None;
    }
    let n = errors.len() - 1;
    let (a, b, c) = (errors[n - 3].log10(), errors[n - 2].log10(), errors[n - 1].log10());
    Some((b - c) / (a - b))
}

fn convergence_tail(runs: &[Run]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut all = 0;
    let mut all_ok = 0;
    for case in CaseId::ALL {
        let mut first = None;
        for sol in runs.iter().filter(|r| r.case == case).filter_map(Run::converged) {
            let ratio = tail_ratio(&sol.record.accepted_errors());
            all += 1;
            all_ok += usize::from(ratio.is_some_and(|r| r >= 1.5));
            first.get_or_insert(ratio);
        }
        match first {
            Some(Some(r)) => {
                pass &= r >= 1.5;
                parts.push(format!("({case}) {r:.2}"));
            }
            _ => {
                pass = false;
                parts.push(format!("({case}) n/a"));
            }
        }
    }
    verdict(pass, format!("{} [all converged seeds: {all_ok}/{all} at >= 1.5]", parts.join(", ")))
}

fn main() {
    let started = Instant::now();
    let mut runs = Vec::new();
    for case in CaseId::ALL {
        for seed in 0..SEEDS {
            let config = SolverConfig { seed, ..SolverConfig::default() };
            let outcome = solve(&case.default_problem(), &config, None);
            runs.push(Run { case, seed, outcome });
        }
    }
    for run in &runs {
        let line = match &run.outcome {
            Ok(s) => format!(
                "converged, {} outer / {} evaluations, J = {:.7}, error {:.2e}",
                s.record.outer_iterations(),
                s.record.total_evaluations(),
                s.cost,
                s.error
            ),
            Err(Error::MaxIterations(s)) => {
                format!("{:?} after {} outer iterations, error {:.2e}", s.status, s.record.outer_iterations(), s.error)
            }
            Err(e) => format!("aborted: {e}"),
        };
        println!("  solve ({}) seed {}: {line}", run.case, run.seed);
    }

    let (c1, c2) = conservation();
    let verdicts = [
        c1,
        c2,
        implicit_efficiency(),
        sensitivity(&runs),
        rank_deficiency(&runs),
        end_to_end(&runs),
        cost_table(&runs),
        phase_validation(&runs),
        raw_mode_fails(),
        convergence_tail(&runs),
    ];
    let mut passed = 0;
    for (i, v) in verdicts.iter().enumerate() {
        passed += usize::from(v.pass);
        println!("criterion {}: {} {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {passed}/{} criteria pass in {:.1}s", verdicts.len(), started.elapsed().as_secs_f64());
}
