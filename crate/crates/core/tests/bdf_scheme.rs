use bscahn_core::bdf::*;
use bscahn_core::fem::FemMatrices;
use bscahn_core::linalg::relative_residual;
use bscahn_core::mesh::unit_disk_mesh;
use bscahn_core::potentials::double_well;
use bscahn_core::system::{bulk_mass_of, combined_mass, surface_mass_of, CoupledOperator, ModelParams, Relaxation, State};
use bscahn_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * t + a)
}

fn horner_prime(c: &[f64], t: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, a)| acc * t + k as f64 * a)
}

#[test]
fn coefficients_sum_rules() {
    for q in 1..=MAX_ORDER {
        let s = BdfScheme::new(q).unwrap();
        // δ(1) = 0, −δ′(1) = 1, γ(1) = 1
        assert!(s.delta.iter().sum::<f64>().abs() < 1e-13);
        let d1: f64 = s.delta.iter().enumerate().map(|(j, d)| j as f64 * d).sum();
        assert!((d1 + 1.0).abs() < 1e-13);
        assert!((s.gamma.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }
    assert!(matches!(BdfScheme::new(0), Err(Error::InvalidOrder(0))));
    assert!(matches!(BdfScheme::new(6), Err(Error::InvalidOrder(6))));
}

#[test]
fn third_order_extrapolates_square() {
    let s = BdfScheme::new(3).unwrap();
    assert_eq!(s.gamma, vec![3.0, -3.0, 1.0]);
    let samples = [4.0, 3.0, 2.0].map(|t: f64| t * t);
    assert!((s.extrapolate_scalar(&samples) - 25.0).abs() < 1e-13);
}

proptest! {
    #[test]
    fn derivative_exact_on_degree_q(q in 1usize..=5, coef in proptest::collection::vec(-2.0f64..2.0, 6), t in -1.0f64..1.0, tau in 0.05f64..0.2) {
        let s = BdfScheme::new(q).unwrap();
        let c = &coef[..=q];
        let samples: Vec<f64> = (0..=q).map(|j| horner(c, t - j as f64 * tau)).collect();
        let exact = horner_prime(c, t);
        let scale = c.iter().map(|a| a.abs()).sum::<f64>().max(1e-3);
        prop_assert!((s.derivative(&samples, tau) - exact).abs() <= 1e-11 * scale);
    }

    #[test]
    fn extrapolation_exact_on_degree_q_minus_1(q in 1usize..=5, coef in proptest::collection::vec(-2.0f64..2.0, 5), t in -1.0f64..1.0, tau in 0.05f64..0.2) {
        let s = BdfScheme::new(q).unwrap();
        let c = &coef[..q];
        let samples: Vec<f64> = (1..=q).map(|j| horner(c, t - j as f64 * tau)).collect();
        let scale = c.iter().map(|a| a.abs()).sum::<f64>().max(1e-3);
        prop_assert!((s.extrapolate_scalar(&samples) - horner(c, t)).abs() <= 1e-11 * scale);
    }

    #[test]
    fn degree_q_plus_1_is_not_exact(q in 1usize..=5) {
        let s = BdfScheme::new(q).unwrap();
        let tau = 0.1;
        let samples: Vec<f64> = (0..=q).map(|j| (-(j as f64) * tau).powi(q as i32 + 1)).collect();
        prop_assert!(s.derivative(&samples, tau).abs() > 1e-8);
    }
}

#[test]
fn history_extrapolation_matches_scalar_rule() {
    let mut h = History::new(State::zeros(2, 1, 0.0), 3);
    for k in 1..=4 {
        let v = f64::from(k);
        let mut s = State::zeros(2, 1, v);
        s.u = vec![v * v, 1.0];
        s.psi = vec![v];
        h.push(s);
    }
    assert_eq!(h.len(), 3);
    assert_eq!(h.newest_index(), 4);
    assert_eq!(h.back(2).t, 2.0);
    let (u, psi) = extrapolate(&h, &BdfScheme::new(3).unwrap()).unwrap();
    assert!((u[0] - 25.0).abs() < 1e-13 && (u[1] - 1.0).abs() < 1e-13 && (psi[0] - 5.0).abs() < 1e-13);
    let short = History::new(State::zeros(2, 1, 0.0), 3);
    assert!(matches!(
        extrapolate(&short, &BdfScheme::new(2).unwrap()),
        Err(Error::IncompleteHistory { needed: 2, got: 1 })
    ));
}

fn operator(level: u32, k: Relaxation, l: Relaxation) -> CoupledOperator {
    let f = FemMatrices::assemble(&unit_disk_mesh(level).unwrap()).unwrap();
    CoupledOperator::new(f, ModelParams::unit(k, l)).unwrap()
}

fn random_phase(op: &CoupledOperator, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..op.n_bulk()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let psi: Vec<f64> = (0..op.n_surf()).map(|_| rng.random_range(-0.5..0.5)).collect();
    (u, psi)
}

#[test]
fn pure_phase_is_stationary() {
    let w = double_well(0.25);
    for (k, l) in [(Relaxation::Finite(0.0), Relaxation::Finite(1.0)), (Relaxation::Finite(1.0), Relaxation::Infinite)] {
        let op = operator(2, k, l);
        let pb = Problem::new(&op, &w, &w);
        let scheme = BdfScheme::new(2).unwrap();
        let so = build_step_operator(&op, &scheme, 0.01).unwrap();
        let start = Start::Phase { u0: vec![1.0; op.n_bulk()], psi0: vec![1.0; op.n_surf()] };
        let h = bootstrap(&scheme, 0.01, &pb, start).unwrap();
        let (h, rows) = run(&so, &pb, h, 20, &[], &mut Quiet).unwrap();
        assert_eq!(rows.len(), 21);
        let s = h.newest();
        assert!(s.u.iter().chain(&s.psi).all(|v| (v - 1.0).abs() < 1e-12));
        assert!(s.mu.iter().chain(&s.theta).all(|v| v.abs() < 1e-10));
    }
}

#[test]
fn mass_is_conserved() {
    let w = double_well(0.25);
    for l in [Relaxation::Finite(0.0), Relaxation::Finite(0.01), Relaxation::Finite(1.0), Relaxation::Infinite] {
        for k in [Relaxation::Finite(0.0), Relaxation::Finite(1.0)] {
            let op = operator(2, k, l);
            let pb = Problem::new(&op, &w, &w);
            let scheme = BdfScheme::new(2).unwrap();
            let tau = 1e-3;
            let so = build_step_operator(&op, &scheme, tau).unwrap();
            let (u0, psi0) = random_phase(&op, 7);
            let psi0 = if k.is_zero() { op.fem.dofs.trace(&u0) } else { psi0 };
            let h = bootstrap(&scheme, tau, &pb, Start::Phase { u0, psi0 }).unwrap();
            let (_, rows) = run(&so, &pb, h, 100, &[], &mut Quiet).unwrap();
            let first = rows[0];
            for r in &rows {
                if l.is_infinite() {
                    assert!((r.mass_bulk - first.mass_bulk).abs() < 1e-12, "K={k} L={l}");
                    assert!((r.mass_surf - first.mass_surf).abs() < 1e-12, "K={k} L={l}");
                } else {
                    assert!((r.mass_total - first.mass_total).abs() < 1e-12, "K={k} L={l}");
                }
            }
        }
    }
}

#[test]
fn constrained_runs_keep_constraints() {
    let w = double_well(0.25);
    let op = operator(2, Relaxation::Finite(0.0), Relaxation::Finite(0.0));
    let pb = Problem::new(&op, &w, &w);
    let scheme = BdfScheme::new(3).unwrap();
    let so = build_step_operator(&op, &scheme, 1e-3).unwrap();
    let (u0, _) = random_phase(&op, 3);
    let psi0 = op.fem.dofs.trace(&u0);
    let h = bootstrap(&scheme, 1e-3, &pb, Start::Phase { u0, psi0 }).unwrap();
    assert_eq!(h.len(), 3);
    assert!((h.newest().t - 2e-3).abs() < 1e-15);
    let (h, _) = run(&so, &pb, h, 30, &[], &mut Quiet).unwrap();
    for s in h.iter() {
        assert!(s.constraint_defect(&op.fem.dofs, &op.params) < 1e-12);
    }
}

#[test]
fn factorization_residual_and_rebuild() {
    for (k, l) in [
        (Relaxation::Finite(0.0), Relaxation::Finite(100.0)),
        (Relaxation::Finite(10.0), Relaxation::Finite(0.01)),
        (Relaxation::Finite(1e-5), Relaxation::Infinite),
        (Relaxation::Finite(0.0), Relaxation::Finite(0.0)),
    ] {
        let op = operator(4, k, l);
        let scheme = BdfScheme::new(2).unwrap();
        let so = build_step_operator(&op, &scheme, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b: Vec<f64> = (0..so.factorization().dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = so.solve(&b).unwrap();
        let res = relative_residual(so.matrix(), &x, &b);
        assert!(res <= 1e-12, "K={k} L={l}: residual {res:e}");
        let again = build_step_operator(&op, &scheme, 1e-3).unwrap();
        assert_eq!(again.matrix(), so.matrix());
        assert_eq!(again.solve(&b).unwrap(), x);
    }
}

#[test]
fn total_mass_monitors_agree() {
    let w = double_well(0.25);
    let op = operator(2, Relaxation::Finite(1.0), Relaxation::Finite(1.0));
    let pb = Problem::new(&op, &w, &w);
    let (u0, psi0) = random_phase(&op, 5);
    let s = State { t: 0.0, u: u0.clone(), psi: psi0.clone(), mu: vec![0.0; op.n_bulk()], theta: vec![0.0; op.n_surf()] };
    let row = MonitorRow::of(0, &s, &pb).unwrap();
    assert_eq!(row.mass_bulk, bulk_mass_of(&op.fem, &u0));
    assert_eq!(row.mass_surf, surface_mass_of(&op.fem, &psi0));
    assert_eq!(row.mass_total, combined_mass(&op.fem, &s, 1.0));
    assert_eq!(row.csv_line().split(',').count(), MONITOR_HEADER.split(',').count());
}

#[test]
fn step_rejects_short_history_and_bad_tau() {
    let w = double_well(0.25);
    let op = operator(1, Relaxation::Finite(1.0), Relaxation::Finite(1.0));
    let pb = Problem::new(&op, &w, &w);
    assert!(build_step_operator(&op, &BdfScheme::new(1).unwrap(), 0.0).is_err());
    let so = build_step_operator(&op, &BdfScheme::new(3).unwrap(), 0.1).unwrap();
    let h = History::new(State::zeros(op.n_bulk(), op.n_surf(), 0.0), 3);
    assert!(matches!(step(&so, &pb, &h), Err(Error::IncompleteHistory { .. })));
    assert!(bootstrap_mode(StartMode::Exact, &BdfScheme::new(2).unwrap(), 0.1, &pb, None, None).is_err());
}
