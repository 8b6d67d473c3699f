use super::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn opts(backend: Backend) -> SolveOptions {
    SolveOptions {
        backend,
        ..SolveOptions::default()
    }
}

#[test]
fn one_constraint_lp() {
    let mut p = ConicProgram::new();
    let t = p.add_scalar("t");
    p.add(Constraint::Ge(AffineExpr::constant(3.0).plus(t, -1.0)));
    p.maximize(AffineExpr::var(t));
    let s = solve(&p, DEFAULT_TOL).unwrap();
    assert!(s.is_optimal());
    assert!((s.value(t) - 3.0).abs() < 1e-7);
    assert_eq!(s.backend, Backend::Clarabel);
}

fn unit_diag_program(n: usize, cdiag: &[f64]) -> (ConicProgram, MatrixVar) {
    let mut p = ConicProgram::new();
    let th = p.add_hermitian("theta", n);
    p.add(Constraint::Psd(th));
    for i in 0..n {
        p.add(Constraint::Eq(
            AffineExpr::constant(-1.0).plus_matrix(th, MatrixCoef::diag_entry(i)),
        ));
    }
    let coef = MatrixCoef::Entries(cdiag.iter().enumerate().map(|(i, v)| (i, i, c(*v, 0.0))).collect());
    p.maximize(AffineExpr::zero().plus_matrix(th, coef));
    (p, th)
}

#[test]
fn two_by_two_sdp_both_backends() {
    // Brute force over Theta = [[1, rho], [rho*, 1]]: objective is 1 + 2 for every rho.
    let brute = (0..100)
        .map(|i| {
            let rho = c((i as f64 / 100.0).cos(), (i as f64 / 100.0).sin()) * 0.5;
            let th = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), rho, rho.conj(), c(1.0, 0.0)]);
            th[(0, 0)].re + 2.0 * th[(1, 1)].re
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let (p, th) = unit_diag_program(2, &[1.0, 2.0]);
    for b in [Backend::Sdp, Backend::Clarabel] {
        let s = solve_with(&p, &opts(b)).unwrap();
        assert!(s.is_optimal(), "{b:?}");
        assert!((s.objective_value - brute).abs() < 1e-6, "{b:?} {}", s.objective_value);
        let m = s.matrix(th);
        assert!((m[(0, 0)].re - 1.0).abs() < 1e-6 && (m[(1, 1)].re - 1.0).abs() < 1e-6);
    }
}

#[test]
fn exp_cone_log() {
    // max w s.t. w <= ln z, z <= e  <=>  (w, 1, z) in K_exp.
    let mut p = ConicProgram::new();
    let w = p.add_scalar("w");
    let z = p.add_scalar("z");
    p.add(Constraint::Exp {
        x: AffineExpr::var(w),
        y: AffineExpr::constant(1.0),
        z: AffineExpr::var(z),
    });
    p.add(Constraint::Ge(AffineExpr::constant(std::f64::consts::E).plus(z, -1.0)));
    p.maximize(AffineExpr::var(w));
    let s = solve(&p, DEFAULT_TOL).unwrap();
    assert!(s.is_optimal());
    assert!((s.value(w) - 1.0).abs() < 1e-6);
}

#[test]
fn exp_cone_orientation() {
    // y exp(x/y) <= z with x = 2, y = 1 forces z >= e^2.
    let mut p = ConicProgram::new();
    let z = p.add_scalar("z");
    p.add(Constraint::Exp {
        x: AffineExpr::constant(2.0),
        y: AffineExpr::constant(1.0),
        z: AffineExpr::var(z),
    });
    p.maximize(AffineExpr::var(z).scaled(-1.0));
    let s = solve(&p, DEFAULT_TOL).unwrap();
    assert!((s.value(z) - 2f64.exp()).abs() < 1e-6);
}

#[test]
fn rotated_soc_reciprocal() {
    // min v s.t. 2 * v * p >= 2 with p <= 4 gives v = 1/4.
    let mut p = ConicProgram::new();
    let v = p.add_scalar("v");
    let q = p.add_scalar("p");
    p.add(Constraint::RotatedSoc {
        u: AffineExpr::var(v),
        v: AffineExpr::var(q),
        x: vec![AffineExpr::constant(2f64.sqrt())],
    });
    p.add(Constraint::Ge(AffineExpr::constant(4.0).plus(q, -1.0)));
    p.maximize(AffineExpr::var(v).scaled(-1.0));
    let s = solve(&p, DEFAULT_TOL).unwrap();
    assert!(s.is_optimal());
    assert!((s.value(v) - 0.25).abs() < 1e-6);
}

#[test]
fn soc_norm_ball() {
    // max x + y s.t. ||(x, y)|| <= 1 gives sqrt 2.
    let mut p = ConicProgram::new();
    let x = p.add_scalar("x");
    let y = p.add_scalar("y");
    p.add(Constraint::Soc {
        t: AffineExpr::constant(1.0),
        x: vec![AffineExpr::var(x), AffineExpr::var(y)],
    });
    p.maximize(AffineExpr::var(x).plus(y, 1.0));
    let s = solve(&p, DEFAULT_TOL).unwrap();
    assert!((s.objective_value - 2f64.sqrt()).abs() < 1e-7);
}

fn trace_feasibility(n: usize, bound: f64) -> ConicProgram {
    let mut p = ConicProgram::new();
    let th = p.add_hermitian("theta", n);
    p.add(Constraint::Psd(th));
    for i in 0..n {
        p.add(Constraint::Eq(
            AffineExpr::constant(-1.0).plus_matrix(th, MatrixCoef::diag_entry(i)),
        ));
    }
    p.add(Constraint::Ge(
        AffineExpr::constant(-bound).plus_matrix(th, MatrixCoef::trace(n)),
    ));
    p
}

#[test]
fn feasibility_trace_examples() {
    let n = 5;
    let f = check_feasibility(&trace_feasibility(n, n as f64), DEFAULT_TOL).unwrap();
    match f {
        Feasibility::Feasible(w) => assert!(w.residual < 1e-6),
        Feasibility::Infeasible => panic!("expected feasible"),
    }
    let bound = (n * n + 1) as f64;
    let f = check_feasibility(&trace_feasibility(n, bound), DEFAULT_TOL).unwrap();
    assert!(!f.is_feasible());
}

/// Random SDR-style instance: unit diagonal plus quadratic-form lower bounds
/// set from a random feasible rank-one point, scaled by `slack`.
fn random_sdr_instance(rng: &mut ChaCha8Rng, n: usize, k: usize, slack: f64) -> ConicProgram {
    let theta: DVector<C64> = DVector::from_fn(n, |_, _| C64::from_polar(1.0, rng.gen::<f64>() * std::f64::consts::TAU));
    let mut p = ConicProgram::new();
    let th = p.add_hermitian("theta", n);
    p.add(Constraint::Psd(th));
    for i in 0..n {
        p.add(Constraint::Eq(
            AffineExpr::constant(-1.0).plus_matrix(th, MatrixCoef::diag_entry(i)),
        ));
    }
    for _ in 0..k {
        let v: DVector<C64> = DVector::from_fn(n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let val = (v.adjoint() * &theta)[(0, 0)].norm_sqr();
        p.add(Constraint::Ge(
            AffineExpr::constant(-slack * val).plus_matrix(th, MatrixCoef::outer(v, 1.0)),
        ));
    }
    p
}

#[test]
fn feasibility_agrees_with_zero_objective_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let p = random_sdr_instance(&mut rng, 4, 3, 0.9);
        let f = check_feasibility(&p, DEFAULT_TOL).unwrap();
        let s = solve(&p, DEFAULT_TOL).unwrap();
        assert!(f.is_feasible());
        assert!(s.is_optimal());
        if let Feasibility::Feasible(w) = f {
            assert!(p.max_violation(&w.scalars, &w.matrices) < 1e-6);
        }
    }
    // Trace bound exceeds N: infeasible under both views.
    let p = trace_feasibility(3, 3.5);
    assert!(!check_feasibility(&p, DEFAULT_TOL).unwrap().is_feasible());
    assert_eq!(solve(&p, DEFAULT_TOL).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn backends_agree_on_random_sdps() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..6 {
        let n = 3 + rng.gen_range(0..3);
        let mut p = random_sdr_instance(&mut rng, n, 2, 0.5);
        let th = MatrixVar(0);
        p.maximize(AffineExpr::zero().plus_matrix(th, MatrixCoef::LowRank(vec![(1.0, DVector::from_fn(n, |i, _| c(1.0, i as f64 * 0.1)))])));
        let a = solve_with(&p, &opts(Backend::Sdp)).unwrap();
        let b = solve_with(&p, &opts(Backend::Clarabel)).unwrap();
        assert!(a.is_optimal() && b.is_optimal());
        let rel = (a.objective_value - b.objective_value).abs() / (1.0 + b.objective_value.abs());
        assert!(rel < 1e-6, "{} vs {}", a.objective_value, b.objective_value);
    }
}

#[test]
fn sdp_backend_handles_free_and_nonneg_scalars() {
    // max t s.t. t <= tr(C Theta) - u, u >= 0, unit diagonal.
    let mut p = ConicProgram::new();
    let th = p.add_hermitian("theta", 3);
    let t = p.add_scalar("t");
    let u = p.add_nonneg("u");
    p.add(Constraint::Psd(th));
    for i in 0..3 {
        p.add(Constraint::Eq(
            AffineExpr::constant(-1.0).plus_matrix(th, MatrixCoef::diag_entry(i)),
        ));
    }
    let v = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)]);
    p.add(Constraint::Ge(
        AffineExpr::zero()
            .plus(t, -1.0)
            .plus(u, -1.0)
            .plus_matrix(th, MatrixCoef::outer(v, 1.0)),
    ));
    p.maximize(AffineExpr::var(t));
    let s = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(s.backend, Backend::Sdp);
    assert!(s.is_optimal());
    // Rank-one optimum: (|1| + |i| + |-1|)^2 = 9.
    assert!((s.value(t) - 9.0).abs() < 1e-6, "{}", s.value(t));
}

/// A random program mixing SOC, EXP and PSD cones, with a bounded
/// feasible region containing a known interior point.
fn random_mixed(rng: &mut ChaCha8Rng) -> (ConicProgram, Vec<ScalarVar>) {
    let mut p = ConicProgram::new();
    let x: Vec<ScalarVar> = (0..3).map(|i| p.add_scalar(format!("x{i}"))).collect();
    let th = p.add_hermitian("h", 2);
    p.add(Constraint::Psd(th));
    p.add(Constraint::Ge(
        AffineExpr::zero().plus_matrix(th, MatrixCoef::trace(2)).scaled(-1.0).plus_const(2.0),
    ));
    // ||x|| <= r
    let r = 1.0 + rng.gen::<f64>();
    p.add(Constraint::Soc {
        t: AffineExpr::constant(r),
        x: x.iter().map(|v| AffineExpr::var(*v)).collect(),
    });
    // x0 <= ln(1 + x1 + 2): exp cone (x0, 1, x1 + 3)
    p.add(Constraint::Exp {
        x: AffineExpr::var(x[0]),
        y: AffineExpr::constant(1.0),
        z: AffineExpr::var(x[1]).plus_const(3.0),
    });
    // x2 <= Re h01 * 2
    p.add(Constraint::Ge(
        AffineExpr::zero()
            .plus(x[2], -1.0)
            .plus_matrix(th, MatrixCoef::Entries(vec![(0, 1, c(1.0, 0.0)), (1, 0, c(1.0, 0.0))])),
    ));
    let w: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 2.0 - 0.5).collect();
    let mut obj = AffineExpr::zero();
    for (v, wi) in x.iter().zip(&w) {
        obj = obj.plus(*v, *wi);
    }
    p.maximize(obj.plus_matrix(th, MatrixCoef::Entries(vec![(0, 0, c(0.5, 0.0))])));
    (p, x)
}

#[test]
fn mixed_cone_programs_match_slack_reformulation() {
    // The reformulation moves the objective into a constraint obj >= t and
    // maximizes t; both optima must agree.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let (p, _) = random_mixed(&mut rng);
        let s = solve(&p, DEFAULT_TOL).unwrap();
        assert!(s.is_optimal(), "{:?}", s.status);
        let mut q = p.clone();
        let t = q.add_scalar("t");
        q.add(Constraint::Ge(p.objective.clone().plus(t, -1.0)));
        q.maximize(AffineExpr::var(t));
        let r = solve(&q, DEFAULT_TOL).unwrap();
        assert!(r.is_optimal());
        let rel = (s.objective_value - r.objective_value).abs() / (1.0 + s.objective_value.abs());
        assert!(rel < 1e-6, "{} vs {}", s.objective_value, r.objective_value);
        assert!(s.residual < 1e-7);
    }
}

#[test]
fn audit_downgrades_bad_points() {
    let (p, _) = unit_diag_program(2, &[1.0, 2.0]);
    let bad = vec![DMatrix::from_element(2, 2, c(0.3, 0.0))];
    assert!(p.max_violation(&[], &bad) > 0.5);
}

#[test]
fn validate_rejects_bad_references() {
    let mut p = ConicProgram::new();
    p.add(Constraint::Ge(AffineExpr::var(ScalarVar(3))));
    assert!(solve(&p, DEFAULT_TOL).is_err());
    let mut p = ConicProgram::new();
    let th = p.add_hermitian("h", 2);
    p.add(Constraint::Eq(AffineExpr::zero().plus_matrix(th, MatrixCoef::diag_entry(5))));
    assert!(p.validate().is_err());
}

#[test]
fn dump_writes_json() {
    let (p, _) = unit_diag_program(2, &[1.0, 2.0]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prog.json");
    p.dump(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["matrices"][0]["dim"], 2);
    assert_eq!(v["constraints"].as_array().unwrap().len(), 3);
}

#[test]
fn deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = random_sdr_instance(&mut rng, 4, 2, 0.7);
    let a = solve(&p, DEFAULT_TOL).unwrap();
    let b = solve(&p, DEFAULT_TOL).unwrap();
    assert_eq!(a.objective_value.to_bits(), b.objective_value.to_bits());
}
