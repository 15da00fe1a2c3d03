mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use subnewton::cg::{cg_solve, CgConfig, FnOperator, LinearOperator};
use subnewton::dataset::{DesignMatrix, RowSet};
use subnewton::newton::{make_variant, minimize, newton_solve, NewtonConfig};
use subnewton::objective::FiniteSum;
use subnewton::sampling::SubsampledOracle;
use subnewton::softmax::accuracy;
use subnewton::trace::TerminationReason;
use subnewton::{LabeledDataset, SoftmaxProblem};

/// Two Gaussian-ish blobs around (2, 2) and (-2, -2).
fn separable_blobs(seed: u64) -> LabeledDataset {
    let mut r = rng(seed);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        let (centre, label) = if i % 2 == 0 { (2.0, 0) } else { (-2.0, 1) };
        data.push(centre + r.gen_range(-0.5..0.5));
        data.push(centre + r.gen_range(-0.5..0.5));
        labels.push(label);
    }
    LabeledDataset::new(DesignMatrix::dense(40, 2, data).unwrap(), labels, 2).unwrap()
}

/// Nesterov's accelerated gradient with constant momentum for a
/// `μ`-strongly convex, `L`-smooth objective.
fn accelerated_gradient(ds: &LabeledDataset, lambda: f64, iters: usize) -> Vec<f64> {
    let a = dense_features(ds);
    let big_l = (a.transpose() * &a).symmetric_eigenvalues().max() / 4.0 + lambda;
    let kappa = big_l / lambda;
    let momentum = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    let d = ds.n_features() * (ds.n_classes() - 1);
    let mut x = vec![0.0; d];
    let mut y = x.clone();
    for _ in 0..iters {
        let g = oracle_gradient(ds, &y, lambda);
        let next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / big_l).collect();
        for k in 0..d {
            y[k] = next[k] + momentum * (next[k] - x[k]);
        }
        x = next;
    }
    x
}

#[test]
fn full_newton_on_separable_blobs() {
    let ds = separable_blobs(31);
    let prob = SoftmaxProblem::new(&ds, 1e-3).unwrap();
    let cfg = make_variant("full", NewtonConfig::default()).unwrap();
    let trace = newton_solve(&prob, &cfg, &[0.0; 2], None, "full").unwrap();
    assert_eq!(trace.termination, TerminationReason::GradientConverged);
    assert!(trace.records.len() - 1 <= 20);
    assert_eq!(accuracy(&ds, &trace.x).unwrap(), 1.0);
    let reference = accelerated_gradient(&ds, 1e-3, 40_000);
    assert!(norm(&oracle_gradient(&ds, &reference, 1e-3)) < 1e-9);
    assert!(rel_err(&trace.x, &reference) < 1e-6);
}

#[test]
fn start_at_optimum_stops_immediately() {
    let ds = separable_blobs(32);
    let prob = SoftmaxProblem::new(&ds, 1e-3).unwrap();
    let cfg = NewtonConfig::default();
    let first = newton_solve(&prob, &cfg, &[0.0; 2], None, "full").unwrap();
    let again = newton_solve(&prob, &cfg, &first.x, None, "full").unwrap();
    assert_eq!(again.termination, TerminationReason::GradientConverged);
    assert_eq!(again.records.len(), 1);
    assert_eq!(again.x, first.x);
}

/// `F(x) = ½ xᵀQx − bᵀx` presented as a single-term finite sum.
struct Quadratic {
    q: DMatrix<f64>,
    b: DVector<f64>,
}

impl FiniteSum for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn n_terms(&self) -> usize {
        1
    }

    fn lambda(&self) -> f64 {
        0.0
    }

    fn value(&self, x: &[f64]) -> f64 {
        let x = to_dvec(x);
        0.5 * x.dot(&(&self.q * &x)) - self.b.dot(&x)
    }

    fn gradient_on(&self, _rows: RowSet<'_>, x: &[f64]) -> Vec<f64> {
        (&self.q * to_dvec(x) - &self.b).as_slice().to_vec()
    }

    fn hessian_on<'s>(&'s self, _rows: RowSet<'s>, _x: &[f64]) -> Box<dyn LinearOperator + 's> {
        Box::new(FnOperator::new(
            self.dim(),
            move |v: &[f64], out: &mut [f64]| {
                out.copy_from_slice((&self.q * to_dvec(v)).as_slice())
            },
        ))
    }
}

#[test]
fn quadratic_converges_in_one_step() {
    let mut r = rng(33);
    let d = 12;
    let bmat = DMatrix::from_vec(d + 4, d, uniform_vec(&mut r, (d + 4) * d, 1.0));
    let quad = Quadratic {
        q: bmat.transpose() * bmat + DMatrix::identity(d, d),
        b: to_dvec(&uniform_vec(&mut r, d, 1.0)),
    };
    let cfg = NewtonConfig {
        cg: CgConfig {
            theta: 1e-12,
            max_iters: 5 * d,
        },
        ..Default::default()
    };
    let mut steps = Vec::new();
    let out = minimize(&quad, &cfg, vec![0.0; d], |p| steps.push(p.step_size)).unwrap();
    assert_eq!(out.termination, TerminationReason::GradientConverged);
    assert_eq!(out.iterations, 1);
    assert_eq!(steps, vec![0.0, 1.0]);
    let exact = quad.q.clone().cholesky().unwrap().solve(&quad.b);
    assert!(rel_err(&out.x, exact.as_slice()) < 1e-10);
}

/// Textbook damped Newton: dense Hessian, Cholesky direction, Armijo ladder.
fn dense_newton_iterates(ds: &LabeledDataset, lambda: f64, iters: usize) -> Vec<Vec<f64>> {
    let d = ds.n_features() * (ds.n_classes() - 1);
    let mut x = vec![0.0; d];
    let mut out = vec![x.clone()];
    for _ in 0..iters {
        let g = oracle_gradient(ds, &x, lambda);
        if norm(&g) < 1e-8 {
            break;
        }
        let h = dense_hessian(ds, &x, lambda);
        let p = h.cholesky().unwrap().solve(&(-to_dvec(&g)));
        let slope = p.dot(&to_dvec(&g));
        let f0 = oracle_objective(ds, &x, lambda);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(p.iter()).map(|(a, b)| a + alpha * b).collect();
            if oracle_objective(ds, &trial, lambda) <= f0 + alpha * 1e-4 * slope {
                x = trial;
                break;
            }
            alpha *= 0.5;
        }
        out.push(x.clone());
    }
    out
}

#[test]
fn exact_newton_cg_matches_dense_newton() {
    let mut r = rng(34);
    for _ in 0..3 {
        let ds = random_dataset(&mut r, 40, 8, 4, 1.0);
        let prob = SoftmaxProblem::new(&ds, 1e-3).unwrap();
        let cfg = NewtonConfig {
            cg: CgConfig {
                theta: 1e-12,
                max_iters: 200,
            },
            max_outer_iters: 5,
            ..Default::default()
        };
        let mut iterates = Vec::new();
        minimize(&prob, &cfg, vec![0.0; 24], |p| iterates.push(p.x.to_vec())).unwrap();
        let reference = dense_newton_iterates(&ds, 1e-3, 5);
        assert_eq!(iterates.len(), reference.len());
        for (ours, theirs) in iterates.iter().zip(&reference).skip(1) {
            assert!(rel_err(ours, theirs) < 1e-8);
        }
    }
}

#[test]
fn full_newton_objective_is_monotone() {
    let mut r = rng(35);
    let ds = random_dataset(&mut r, 300, 10, 5, 1.0);
    let prob = SoftmaxProblem::new(&ds, 1e-3).unwrap();
    let trace = newton_solve(
        &prob,
        &NewtonConfig::default(),
        &vec![0.0; 40],
        None,
        "full",
    )
    .unwrap();
    assert!((trace.records[0].objective - 300.0 * 5f64.ln()).abs() < 1e-9);
    for w in trace.records.windows(2) {
        assert!(w[1].objective <= w[0].objective);
        assert!(w[1].cum_seconds >= w[0].cum_seconds);
    }
}

#[test]
fn subsampled_runs_are_deterministic() {
    let mut r = rng(36);
    let ds = random_dataset(&mut r, 400, 6, 3, 1.0);
    let test = random_dataset(&mut r, 100, 6, 3, 1.0);
    let prob = SoftmaxProblem::new(&ds, 1e-3).unwrap();
    let mut base = NewtonConfig::default();
    base.samples.seed = 7;
    base.max_outer_iters = 15;
    for name in ["subsampled-100", "subsampled-20"] {
        let cfg = make_variant(name, base).unwrap();
        let a = newton_solve(&prob, &cfg, &[0.0; 12], Some(&test), name).unwrap();
        let b = newton_solve(&prob, &cfg, &[0.0; 12], Some(&test), name).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(
                (
                    ra.objective,
                    ra.train_acc,
                    ra.test_acc,
                    ra.step_size,
                    ra.cg_iters
                ),
                (
                    rb.objective,
                    rb.train_acc,
                    rb.test_acc,
                    rb.step_size,
                    rb.cg_iters
                )
            );
        }
    }
}

#[test]
fn converged_cg_directions_meet_inexactness_bound() {
    let mut r = rng(37);
    let ds = random_dataset(&mut r, 500, 8, 4, 1.0);
    let prob = SoftmaxProblem::new(&ds, 1e-3).unwrap();
    let cfg = make_variant("subsampled-100", NewtonConfig::default()).unwrap();
    let x = uniform_vec(&mut r, 24, 0.5);
    for it in 0..10 {
        let oracle = SubsampledOracle::draw(&prob, &cfg.samples, it).unwrap();
        let g = oracle.sub_gradient(&x);
        let h = oracle.sub_hessian(&x);
        let rep = cg_solve(&*h, &g, &cfg.cg).unwrap();
        let mut hp = vec![0.0; 24];
        h.apply(&rep.solution, &mut hp);
        let resid: Vec<f64> = hp.iter().zip(&g).map(|(a, b)| a + b).collect();
        if rep.converged {
            assert!(norm(&resid) <= cfg.cg.theta * norm(&g) * (1.0 + 1e-6));
        }
        assert!((norm(&resid) - rep.residual_norm).abs() <= 1e-8 * norm(&g));
    }
}

/// A gradient of the wrong sign makes every CG direction an ascent direction.
struct Misleading<'a>(SoftmaxProblem<'a>);

impl FiniteSum for Misleading<'_> {
    fn dim(&self) -> usize {
        FiniteSum::dim(&self.0)
    }
    fn n_terms(&self) -> usize {
        self.0.n_rows()
    }
    fn lambda(&self) -> f64 {
        self.0.lambda()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.objective(x)
    }
    fn gradient_on(&self, rows: RowSet<'_>, x: &[f64]) -> Vec<f64> {
        self.0.gradient_on(rows, x).iter().map(|g| -g).collect()
    }
    fn hessian_on<'s>(&'s self, rows: RowSet<'s>, x: &[f64]) -> Box<dyn LinearOperator + 's> {
        FiniteSum::hessian_on(&self.0, rows, x)
    }
}

#[test]
fn line_search_failure_ends_the_run() {
    let mut r = rng(38);
    let ds = random_dataset(&mut r, 50, 3, 3, 1.0);
    let prob = Misleading(SoftmaxProblem::new(&ds, 1e-3).unwrap());
    let x0 = vec![0.1; 6];
    // short ladder: after ~50 halvings the Armijo bound rounds to F(x) itself
    let mut cfg = NewtonConfig::default();
    cfg.ls.max_iters = 10;
    let mut calls = 0;
    let out = minimize(&prob, &cfg, x0.clone(), |_| calls += 1).unwrap();
    assert_eq!(out.termination, TerminationReason::LineSearchFailure);
    assert!(out.message.is_some());
    assert_eq!(out.iterations, 0);
    assert_eq!(calls, 1);
    assert_eq!(out.x, x0);
}
