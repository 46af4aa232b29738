use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use opca::algorithms::{
    correct_iterate, gn_normal_residual, sgn_direction, CorrectionPolicy, Iterate,
};
use opca::data::{
    load_matrix_file, parse_csv, parse_f64le, parse_idx, save_f64le, CovarianceModel, MatrixFormat,
};
use opca::diffusion::{euler_integrate, sgn_ode_drift, OdeLimit, OdeRun};
use opca::harness::output::write_trace_csv;
use opca::harness::{
    parse_gamma_set, run_experiment, run_sweep, worker_count, Experiment, ExperimentConfig,
};
use opca::matops::{orthonormalize, smallest_singular_value, symmetric_eig, thin_svd, Matrix};
use opca::metrics::{population_objective, sin_theta_error, GroundTruth};
use opca::rng::{GaussianStream, StreamPurpose};
use opca::schedules::paper_diminishing_params;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Rand(GaussianStream);

impl Rand {
    fn new(key: u64) -> Self {
        Rand(GaussianStream::new(key, StreamPurpose::Samples))
    }

    fn matrix(&mut self, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, self.0.normals(r * c))
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.next_uniform()
    }

    fn index(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((self.0.next_uniform() * (hi - lo + 1) as f64) as usize).min(hi - lo)
    }

    fn orthonormal(&mut self, n: usize, p: usize) -> Matrix {
        orthonormalize(&self.matrix(n, p)).unwrap()
    }
}

fn materialized_direction(x: &Matrix, a: &Matrix) -> Matrix {
    let h = a.ncols() as f64;
    let sigma = a * a.transpose() / h;
    let g_inv = (x.transpose() * x).try_inverse().unwrap();
    let p = x * g_inv;
    &sigma * &p - x * 0.5 - x * (p.transpose() * &sigma * &p) * 0.5
}

fn criterion_1() -> Outcome {
    let mut rng = Rand::new(101);
    let mut worst_res = 0.0f64;
    let mut worst_diff = 0.0f64;
    for _ in 0..200 {
        let n = rng.index(2, 8);
        let p = rng.index(1, 3.min(n - 1));
        let h = rng.index(1, 5);
        let x = rng.matrix(n, p);
        let a = rng.matrix(n, h);
        let s = sgn_direction(&x, &a).unwrap();
        let r = &x * x.transpose() - &a * a.transpose() / h as f64;
        let res = gn_normal_residual(&x, &a, &s) / (1.0 + r.norm() * x.norm());
        worst_res = worst_res.max(res);
        worst_diff = worst_diff.max((&s - materialized_direction(&x, &a)).amax());
    }
    outcome(
        worst_res <= 1e-10 && worst_diff <= 1e-12,
        format!("max scaled residual {worst_res:.2e}, max entry gap {worst_diff:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = Rand::new(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.index(2, 10);
        let p = rng.index(1, n);
        let x = rng.matrix(n, p);
        // AA^T/h = XX^T with h = p
        let a = &x * (p as f64).sqrt();
        let s = sgn_direction(&x, &a).unwrap();
        worst = worst.max(s.norm() / x.norm_squared());
    }
    outcome(worst <= 1e-12, format!("max ‖S‖/‖X‖² {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut rng = Rand::new(303);
    let mut worst = f64::INFINITY;
    for _ in 0..10_000 {
        let n = rng.index(2, 8);
        let p = rng.index(1, n);
        let h = rng.index(1, 5);
        let x = rng.matrix(n, p);
        let a = rng.matrix(n, h);
        let alpha = rng.uniform(0.0, 1.0);
        let s = sgn_direction(&x, &a).unwrap();
        let before = smallest_singular_value(&x);
        let after = smallest_singular_value(&(&x + &s * alpha));
        worst = worst.min(after - (1.0 - alpha / 2.0) * before);
    }
    outcome(
        worst >= -1e-12,
        format!("min σ_min(X⁺) − (1−α/2)σ_min(X) = {worst:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = Rand::new(404);
    let mut worst = [f64::INFINITY; 3];
    for _ in 0..100 {
        let n = rng.index(4, 9);
        let p = rng.index(2, n - 1);
        let basis = rng.orthonormal(n, n);
        let mut mu: Vec<f64> = (0..n).map(|_| rng.uniform(0.5, 5.0)).collect();
        mu.sort_by(|a, b| b.total_cmp(a));
        let model = CovarianceModel::spiked(basis, mu, 0.3).unwrap();
        let gt = GroundTruth::from_model(&model, p).unwrap();
        let lambda = model.eigenvalues();
        let policy = CorrectionPolicy::from_spectrum(lambda[0], lambda[n - 1]);
        // a random number of singular values below the threshold; the head is
        // kept small so that ε‖X‖/σ_min, the roundoff in span(X), stays under 1e-11
        let tail = rng.index(1, p);
        let sv: Vec<f64> = (0..p)
            .map(|i| {
                if i < p - tail {
                    rng.uniform(1e-3, 1e-2)
                } else {
                    rng.uniform(0.1, 1.0) * policy.threshold
                }
            })
            .collect();
        let u = rng.orthonormal(n, p);
        let v = rng.orthonormal(p, p);
        let x = &u * Matrix::from_diagonal(&nalgebra::DVector::from_vec(sv)) * v.transpose();
        let mut it = Iterate::new(x.clone());
        assert!(correct_iterate(&mut it, &policy).unwrap());
        let f_before = population_objective(&x, &model);
        let e_before = sin_theta_error(&x, &gt).unwrap();
        worst[0] = worst[0].min(smallest_singular_value(&it.x) - policy.threshold);
        worst[1] = worst[1].min(f_before - population_objective(&it.x, &model));
        worst[2] = worst[2].min(e_before - sin_theta_error(&it.x, &gt).unwrap());
    }
    outcome(
        worst[0] > -1e-10 && worst[1] >= -1e-10 && worst[2] >= -1e-10,
        format!(
            "min margins: σ_min − σ̲ {:.2e}, f_E decrease {:.2e}, sin-Θ decrease {:.2e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = Rand::new(505);
    let mut worst_svd = 0.0f64;
    let mut worst_inv = 0.0f64;
    for _ in 0..100 {
        let n = rng.index(2, 12);
        let p = rng.index(1, n - 1);
        let basis = rng.orthonormal(n, p);
        let mu: Vec<f64> = (0..p).map(|i| 10.0 - i as f64).collect();
        let model = CovarianceModel::spiked(basis.clone(), mu, 0.1).unwrap();
        let gt = GroundTruth::from_model(&model, p).unwrap();
        let x = rng.matrix(n, p);
        let err = sin_theta_error(&x, &gt).unwrap();
        let cosines = thin_svd(&(basis.transpose() * orthonormalize(&x).unwrap()))
            .unwrap()
            .singular_values;
        let canonical: f64 = cosines.iter().map(|c| 1.0 - c.min(1.0).powi(2)).sum();
        worst_svd = worst_svd.max((err - canonical).abs());
        let r = rng.matrix(p, p) + Matrix::identity(p, p) * 3.0;
        worst_inv = worst_inv.max((sin_theta_error(&(&x * r), &gt).unwrap() - err).abs());
    }
    outcome(
        worst_svd <= 1e-10 && worst_inv <= 1e-10,
        format!("max gap to canonical angles {worst_svd:.2e}, under X R {worst_inv:.2e}"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = Rand::new(606);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.index(2, 8);
        let p = rng.index(1, n);
        let basis = rng.orthonormal(n, n);
        let mut mu: Vec<f64> = (0..n).map(|_| rng.uniform(0.1, 4.0)).collect();
        mu.sort_by(|a, b| b.total_cmp(a));
        let model = CovarianceModel::spiked(basis, mu, 0.5).unwrap();
        let eig = symmetric_eig(&model.materialize()).unwrap();
        // A A^T / h = Σ exactly, with h = n
        let scale = nalgebra::DVector::from_iterator(
            n,
            eig.eigenvalues.iter().map(|l| (l * n as f64).sqrt()),
        );
        let a = &eig.eigenvectors * Matrix::from_diagonal(&scale);
        let x = rng.matrix(n, p);
        let gap = (sgn_direction(&x, &a).unwrap() - sgn_ode_drift(&x, &model).unwrap()).amax();
        worst = worst.max(gap / (1.0 + x.norm_squared()));
    }
    let mut notes = vec![format!("drift gap {worst:.2e}")];
    let mut pass = worst <= 1e-12;
    let x0 = Iterate::random(500, 1, 6).unwrap().x;
    for lambda_1 in [1.1, 11.0, 101.0, 1001.0] {
        let model = CovarianceModel::axis_spiked(500, vec![lambda_1 - 1.0], 1.0).unwrap();
        let run = |limit| {
            euler_integrate(&OdeRun {
                model: &model,
                x0: x0.clone(),
                dt: 0.1,
                steps: 5_000,
                limit,
                record_every: 100,
            })
            .unwrap()
        };
        let sgn = run(OdeLimit::SgnLimit);
        pass &= !sgn.diverged && sgn.final_error() < 1e-6;
        notes.push(format!("λ₁={lambda_1}: sgn {:.1e}", sgn.final_error()));
        if lambda_1 == 1.1 || lambda_1 == 1001.0 {
            let oja = run(OdeLimit::OjaLimit);
            if lambda_1 == 1.1 {
                pass &= !oja.diverged && oja.final_error() < 1e-6;
                notes.push(format!("oja {:.1e}", oja.final_error()));
            } else {
                pass &= oja.diverged;
                notes.push(format!("oja diverged at t={:?}", oja.diverged_at));
            }
        }
    }
    outcome(pass, notes.join(", "))
}

fn experiment(toml: &str) -> Experiment {
    Experiment::new(ExperimentConfig::from_toml_str(toml).unwrap()).unwrap()
}

fn mean_final_error(toml: &str) -> f64 {
    let result = run_experiment(&experiment(toml), worker_count()).unwrap();
    assert_eq!(result.failed, 0, "failed trials in\n{toml}");
    result.aggregate.final_mean()
}

fn rate_config(kind: &str, m: usize) -> String {
    format!(
        r#"
[data]
kind = "gau-gap-1"
n = 50
p = 1
mu_min = 1.0
mu_max = 10.0
rho = 0.1
[algo]
name = "sgn"
[stepsize]
kind = "{kind}"
[run]
h = 1
m = {m}
trials = 100
base_seed = 1
"#
    )
}

fn criterion_7(errors: &mut Vec<f64>) -> Outcome {
    for m in [1_000, 10_000, 100_000] {
        errors.push(mean_final_error(&rate_config("paper-constant", m)));
    }
    let r1 = errors[1] / errors[0];
    let r2 = errors[2] / errors[1];
    let ok = |r: f64| (0.05..=0.40).contains(&r);
    outcome(
        ok(r1) && ok(r2),
        format!(
            "e(K) = {:.3e}, {:.3e}, {:.3e}; ratios {r1:.3}, {r2:.3}",
            errors[0], errors[1], errors[2]
        ),
    )
}

fn criterion_8(constant_at_1e4: f64) -> Outcome {
    let mut worst = 0.0f64;
    for k in [100usize, 1_000, 10_000] {
        let params = paper_diminishing_params(k, 3.0, 2.0).unwrap();
        worst = worst
            .max((params.gamma * std::f64::consts::E - 1.0).abs())
            .max((params.c2 / k as f64 - 1.0).abs());
    }
    let diminishing = mean_final_error(&rate_config("paper-diminishing", 10_000));
    let ratio = diminishing / constant_at_1e4;
    outcome(
        worst <= 1e-9 && ratio <= 1.5,
        format!(
            "parameter rel. error {worst:.1e}; K=10⁴ error {diminishing:.3e} vs constant {constant_at_1e4:.3e} (ratio {ratio:.0})"
        ),
    )
}

fn criterion_9() -> Outcome {
    let exp = experiment(
        r#"
[data]
kind = "gau-gap-1"
n = 20
p = 1
mu_min = 1.0
mu_max = 1.0
rho = 1.0
basis = "axis"
[algo]
name = "sgn"
[stepsize]
kind = "paper-constant"
[run]
h = 1
m = 10000
trials = 100
record_every = 10
base_seed = 3
init = "saddle"
"#,
    );
    let result = run_experiment(&exp, worker_count()).unwrap();
    let agg = &result.aggregate;
    let k_total = exp.num_batches as u64;
    let mut early = f64::INFINITY;
    let mut late = 0.0f64;
    for (k, mean) in agg.k.iter().zip(&agg.mean) {
        if *k * 20 <= k_total {
            early = early.min(*mean);
        }
        if *k * 20 >= 19 * k_total {
            late = late.max(*mean);
        }
    }
    outcome(
        result.failed == 0 && early >= 0.9 && late <= 0.05,
        format!("min mean error over first 5% {early:.3}, max over last 5% {late:.3}"),
    )
}

fn sweep_config(kind: &str, p: usize, p1: usize, h: usize, algo: &str, mu: (f64, f64)) -> String {
    format!(
        r#"
[data]
kind = "{kind}"
n = 100
p = {p}
p1 = {p1}
mu_min = {}
mu_max = {}
rho = 0.1
[algo]
name = "{algo}"
[stepsize]
kind = "diminishing"
gamma = 1.0
[run]
h = {h}
m = 10000
trials = 3
base_seed = 11
"#,
        mu.0, mu.1
    )
}

fn best_sweep_error(toml: &str) -> (f64, f64) {
    let cfg = ExperimentConfig::from_toml_str(toml).unwrap();
    let sweep = run_sweep(&cfg, &parse_gamma_set("2^-5..2^5").unwrap(), worker_count()).unwrap();
    (sweep.best_gamma().unwrap(), sweep.best_error().unwrap())
}

fn criterion_10() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for p in [1, 30] {
        for h in [1, 10] {
            let sgn = sweep_config("gau-gap-1", p, 0, h, "sgn", (0.01, 10.0));
            let (gamma, best) = best_sweep_error(&sgn);
            let ada = sgn
                .replace("name = \"sgn\"", "name = \"adasgn\"")
                .replace("kind = \"diminishing\"\ngamma = 1.0\n", "");
            let ada_err = mean_final_error(&ada);
            pass &= ada_err <= 3.0 * best;
            notes.push(format!(
                "p={p},h={h}: ada {ada_err:.2e} vs best γ={gamma} {best:.2e}"
            ));
        }
    }
    outcome(pass, notes.join("; "))
}

fn criterion_11() -> Outcome {
    let mut best = Vec::new();
    for algo in ["sgn", "oja"] {
        for p1 in [0, 25] {
            best.push(
                best_sweep_error(&sweep_config("gau-gap-2", 30, p1, 1, algo, (1.0, 100.0))).1,
            );
        }
    }
    let sgn = best[1] / best[0];
    let oja = best[3] / best[2];
    outcome(
        sgn < 5.0 && oja > 5.0,
        format!(
            "sgn {:.2e} -> {:.2e} ({sgn:.1}x), oja {:.2e} -> {:.2e} ({oja:.1}x)",
            best[0], best[1], best[2], best[3]
        ),
    )
}

fn trace_bytes(exp: &Experiment, workers: usize) -> Vec<u8> {
    let result = run_experiment(exp, workers).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, result.records()).unwrap();
    buf
}

fn criterion_12() -> Outcome {
    let toml =
        sweep_config("gau-gap-1", 5, 0, 2, "sgn", (0.01, 10.0)).replace("trials = 3", "trials = 6");
    let exp = experiment(&toml);
    let one = trace_bytes(&exp, 1);
    let again = trace_bytes(&exp, 1);
    let three = trace_bytes(&exp, 3);
    outcome(
        one == again && one == three,
        format!(
            "{} CSV bytes, workers 1/1/3 identical: {}",
            one.len(),
            one == again && one == three
        ),
    )
}

fn criterion_13() -> Outcome {
    let mut pass = true;
    let csv = parse_csv(b"1,2.5\n-3,4e-2\n5,6\n").unwrap();
    pass &= csv == DMatrix::from_row_slice(3, 2, &[1.0, 2.5, -3.0, 4e-2, 5.0, 6.0]);

    let mut bytes = vec![0, 0, 0x08, 3];
    for d in [2u32, 2, 2] {
        bytes.extend_from_slice(&d.to_be_bytes());
    }
    bytes.extend(0u8..8);
    let idx = parse_idx(&bytes).unwrap();
    pass &= idx == DMatrix::from_fn(4, 2, |r, c| (c * 4 + r) as f64 / 255.0);

    let mut raw = Vec::new();
    raw.extend_from_slice(&3u64.to_le_bytes());
    raw.extend_from_slice(&2u64.to_le_bytes());
    for v in [1.0f64, -2.0, 0.5, 1e-300, 7.0, -0.0] {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    let f = parse_f64le(&raw).unwrap();
    pass &= f == DMatrix::from_column_slice(3, 2, &[1.0, -2.0, 0.5, 1e-300, 7.0, -0.0]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.f64");
    let m = Rand::new(1313).matrix(7, 5);
    save_f64le(&path, &m).unwrap();
    let back = load_matrix_file(&path, MatrixFormat::F64le).unwrap();
    let bitwise = m
        .iter()
        .zip(back.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    pass &= back.shape() == m.shape() && bitwise;
    outcome(
        pass,
        format!("csv, idx, f64le fixtures and bitwise round-trip: {pass}"),
    )
}

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, id: usize, budget_secs: u64, run: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget_secs);
        let pass = out.pass && in_time;
        if !pass {
            self.failed += 1;
        }
        println!(
            "criterion {id:>2}: {} ({:.1}s{}) {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over budget" },
            out.detail
        );
    }
}

fn main() {
    let mut report = Report { failed: 0 };
    report.check(1, 1, criterion_1);
    report.check(2, 1, criterion_2);
    report.check(3, 5, criterion_3);
    report.check(4, 2, criterion_4);
    report.check(5, 1, criterion_5);
    report.check(6, 30, criterion_6);
    let mut rate_errors = Vec::new();
    report.check(7, 180, || criterion_7(&mut rate_errors));
    report.check(8, 120, || criterion_8(rate_errors[1]));
    report.check(9, 60, criterion_9);
    report.check(10, 300, criterion_10);
    report.check(11, 300, criterion_11);
    report.check(12, 60, criterion_12);
    report.check(13, 1, criterion_13);
    println!("{} of 13 criteria passed", 13 - report.failed);
    if report.failed > 0 {
        std::process::exit(1);
    }
}
