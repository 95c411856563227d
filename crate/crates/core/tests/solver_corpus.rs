use damisac_core::conic_solver::{solve, Sense, SocConstraint, TraceConstraint};
use damisac_core::linalg::{complex_gaussian, hermitian_eig};
use damisac_core::rng::trial_rng;
use damisac_core::{CMatrix, ConicProgram, SolveStatus, SolverSettings, C64};
use rand::Rng;

fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| complex_gaussian(rng, 1.0));
    (&g + g.adjoint()) * C64::new(0.5 / (n as f64).sqrt(), 0.0)
}

fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> CMatrix {
    let g = CMatrix::from_fn(n, rank, |_, _| complex_gaussian(rng, 1.0 / n as f64));
    &g * g.adjoint()
}

fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Feasible by construction: `X0 = I/n` meets every constraint strictly.
fn corpus_program(idx: u64) -> ConicProgram {
    let mut rng = trial_rng(2024, idx);
    let n = 2 + (idx as usize * 7) % 15;
    let x0 = identity(n).unscale(n as f64);
    let tr = |a: &CMatrix| damisac_core::conic_solver::trace_product(a, &x0).re;
    let mut constraints = vec![TraceConstraint {
        a: identity(n),
        sense: Sense::Le,
        rhs: 1.0,
    }];
    for _ in 0..(idx % 3) {
        let a = random_psd(&mut rng, n, 2);
        let rhs = rng.random_range(0.2..0.9) * tr(&a);
        constraints.push(TraceConstraint { a, sense: Sense::Ge, rhs });
    }
    let soc = (idx % 2 == 1).then(|| {
        let operators: Vec<CMatrix> = (0..2).map(|_| CMatrix::from_fn(n, n, |_, _| complex_gaussian(&mut rng, 1.0 / n as f64))).collect();
        let at_x0: f64 = operators.iter().map(|o| damisac_core::conic_solver::trace_product(o, &x0).norm_sqr()).sum::<f64>().sqrt();
        SocConstraint {
            operators,
            bound: at_x0 + rng.random_range(0.02..0.2),
        }
    });
    ConicProgram {
        objective: random_hermitian(&mut rng, n),
        constraints,
        soc,
    }
}

#[test]
fn regression_corpus_matches_tight_reference() {
    let reference_settings = SolverSettings {
        tol: 1e-9,
        ..SolverSettings::default()
    };
    let settings = SolverSettings::default();
    for idx in 0..20 {
        let prog = corpus_program(idx);
        prog.validate().unwrap();
        let reference = solve(&prog, &reference_settings).unwrap();
        assert_eq!(reference.status, SolveStatus::Optimal, "program {idx}");
        let sol = solve(&prog, &settings).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "program {idx}");
        let scale = reference.objective_value.abs().max(1e-3);
        assert!(
            (sol.objective_value - reference.objective_value).abs() <= 1e-4 * scale,
            "program {idx}: {} vs {}",
            sol.objective_value,
            reference.objective_value
        );
        let (eigs, _) = hermitian_eig(&sol.x);
        assert!(*eigs.last().unwrap() >= -10.0 * settings.tol, "program {idx}");
        assert!(prog.max_violation(&sol.x) <= 10.0 * settings.tol, "program {idx}: {}", prog.max_violation(&sol.x));
    }
}

#[test]
fn declared_infeasible_cases_have_no_solution() {
    for idx in 0..5 {
        let mut rng = trial_rng(77, idx);
        let n = 3 + idx as usize;
        let a = random_psd(&mut rng, n, n);
        let (eigs, _) = hermitian_eig(&a);
        // under Tr X ≤ 1 the largest reachable Tr(AX) is λ_max(A)
        let lmax = eigs[0];
        let prog = ConicProgram {
            objective: random_hermitian(&mut rng, n),
            constraints: vec![
                TraceConstraint {
                    a: identity(n),
                    sense: Sense::Le,
                    rhs: 1.0,
                },
                TraceConstraint {
                    a,
                    sense: Sense::Ge,
                    rhs: lmax * 1.5,
                },
            ],
            soc: None,
        };
        let sol = solve(&prog, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible, "case {idx}");
    }
}

#[test]
fn program_json_survives_roundtrip_through_solver() {
    let prog = corpus_program(5);
    let back = ConicProgram::from_json(&prog.to_json()).unwrap();
    let s = SolverSettings::default();
    assert_eq!(solve(&prog, &s).unwrap().x, solve(&back, &s).unwrap().x);
}
