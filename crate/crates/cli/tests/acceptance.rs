//! Acceptance suite: one test per shipped guarantee, runnable end to end
//! on a single desk-scale machine. Every test prints its headline
//! measurement and asserts its own runtime budget, so a run of this file
//! doubles as a health report for the whole pipeline.

use std::path::Path;
use std::process::Command;
use std::sync::LazyLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use uqbench_core::datasets::{self, Dataset, GenerationMeta};
use uqbench_core::gp::{self, GpFitConfig, GpHyperparams, GpModel};
use uqbench_core::kl::{build_kernel_row, KernelSpec, KlBasis};
use uqbench_core::mat::Mat;
use uqbench_core::metrics;
use uqbench_core::mmt::{DissipationSpec, Etdrk4, MmtParams};
use uqbench_core::nn::{
    draw_noise, loss_with_noise, Head, LossKind, NetworkSpec, NetworkState,
};
use uqbench_core::rng::child_rng;
use uqbench_core::scalar::Scalar;
use uqbench_core::uq::{
    self, ensemble_predict_deterministic, ensemble_predict_gaussian, SurrogateConfig,
    SurrogateKind,
};

// ---------------------------------------------------------------------------
// Shared fixtures and helpers.
// ---------------------------------------------------------------------------

/// The 2-D reference dataset: one retained KL mode pair, z* = 6, n = 1000,
/// solver at the reference physics parameters. Generated once and shared by
/// the statistics, convergence, and functional-pipeline tests.
static DATASET_2D: LazyLock<Dataset<f64>> = LazyLock::new(|| {
    let meta = GenerationMeta::new(1, 6.0, 1);
    datasets::generate(&meta, 1000).expect("2-D reference dataset generates within budget")
});

fn assert_budget(start: Instant, budget_secs: u64, what: &str) {
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_secs as f64,
        "{what} took {elapsed:.1} s, budget {budget_secs} s"
    );
}

/// Relative spread (max − min) / max of a positive slice.
fn rel_spread(vals: &[f64]) -> f64 {
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    (max - min) / max
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. Used as a
/// dense oracle: Jacobi converges to absolute accuracy near machine epsilon
/// times the matrix norm, an order of magnitude tighter than general-purpose
/// QR-based solvers deliver on near-zero eigenvalues.
fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let scale = a.norm();
    for _sweep in 0..50 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if (2.0 * off).sqrt() <= f64::EPSILON * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    a.diagonal().iter().copied().collect()
}

/// Sample skewness `m₃ / m₂^{3/2}`.
fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

fn uniform_mat(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Mat<f64> {
    let mut rng = child_rng(seed, 0x414343); // "ACC"
    let mut m = Mat::zeros(rows, cols);
    for v in m.as_mut_slice().iter_mut() {
        *v = lo + (hi - lo) * f64::uniform_01(&mut rng);
    }
    m
}

fn single_mode(n: usize, mode: i64, amp: Complex<f64>) -> Vec<Complex<f64>> {
    (0..n)
        .map(|j| {
            let phase = std::f64::consts::TAU * mode as f64 * j as f64 / n as f64;
            amp * Complex::new(phase.cos(), phase.sin())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 1–2: Karhunen–Loève basis.
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_kl_spectrum_fourfold_degeneracy() {
    let start = Instant::now();
    let spec = KernelSpec {
        sigma_u_sq: 1.0,
        ell_u: 0.35,
    };
    let basis = KlBasis::build(spec, 512, 4).unwrap();
    let top8 = basis.real_coordinate_spectrum();
    assert_eq!(top8.len(), 8);
    let first = &top8[..4];
    let second = &top8[4..];
    let s1 = rel_spread(first);
    let s2 = rel_spread(second);
    assert!(s1 < 0.20, "λ1..λ4 spread {s1:.3} exceeds 20%");
    assert!(s2 < 0.20, "λ5..λ8 spread {s2:.3} exceeds 20%");
    assert!(
        top8[4] < top8[0],
        "λ5 = {} not below λ1 = {}",
        top8[4],
        top8[0]
    );
    println!(
        "criterion 01: group spreads {:.1}% / {:.1}%, λ5/λ1 = {:.3}",
        100.0 * s1,
        100.0 * s2,
        top8[4] / top8[0]
    );
    assert_budget(start, 1, "criterion 01");
}

#[test]
fn criterion_02_kl_fft_matches_dense_eigendecomposition() {
    let start = Instant::now();
    let n = 64;
    let spec = KernelSpec::<f64>::default();

    // Independent oracle: eigenvalues of the Hermitian part of the kernel
    // matrix H = A + iB through the real symmetric embedding
    // [[A, −B], [B, A]], which carries each eigenvalue of H twice.
    let row = build_kernel_row(&spec, n);
    let herm = |i: usize, j: usize| -> Complex<f64> {
        let kij = row[(n + i - j) % n];
        let kji = row[(n + j - i) % n];
        Complex::new((kij.re + kji.re) * 0.5, (kij.im - kji.im) * 0.5) / n as f64
    };
    let mut emb = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let h = herm(i, j);
            emb[(i, j)] = h.re;
            emb[(i, j + n)] = -h.im;
            emb[(i + n, j)] = h.im;
            emb[(i + n, j + n)] = h.re;
        }
    }
    let mut dense = jacobi_eigenvalues(emb);
    // The modulated kernel is indefinite at the 1e-12 level; the production
    // basis clamps that structural negativity to zero. Verify the dense
    // spectrum stays within the same budget, then clamp it identically.
    let min_dense = dense.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(
        min_dense > -3e-11 * spec.sigma_u_sq,
        "dense spectrum dips to {min_dense:.2e}, beyond the indefiniteness budget"
    );
    for d in &mut dense {
        *d = d.max(0.0);
    }
    dense.sort_by(|a, b| b.partial_cmp(a).unwrap());

    // FFT route, all modes retained; each complex mode carries two real
    // coordinates, matching the embedding's doubling.
    let basis = KlBasis::build(spec, n, n).unwrap();
    let fft = basis.real_coordinate_spectrum();
    assert_eq!(fft.len(), dense.len());

    let lmax = dense[0];
    let mut worst = 0.0_f64;
    for (i, (f, d)) in fft.iter().zip(&dense).enumerate() {
        // Strict relative accuracy where the eigenvalue is resolvable; in
        // the structurally-zero tail (clamped to 0 on one side, oracle
        // roundoff on the other) the scale floor takes over.
        let tol = 1e-8 * d.abs().max(1e-3 * lmax);
        let err = (f - d).abs();
        worst = worst.max(err / tol);
        assert!(
            err <= tol,
            "eigenvalue {i}: fft {f} vs dense {d} (err {err:.3e}, tol {tol:.3e})"
        );
    }
    println!(
        "criterion 02: {} eigenvalues match (worst error at {:.0}% of tolerance)",
        fft.len(),
        100.0 * worst
    );
    assert_budget(start, 5, "criterion 02");
}

// ---------------------------------------------------------------------------
// 3–5: the wave solver.
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_mmt_linear_mode_and_convergence_order() {
    let start = Instant::now();

    // (a) Linear regime: a single Fourier mode under λ = 0 with dissipation
    // off evolves as u(T) = u0 · e^{−i·|2πn|^{1/2}·T}.
    let params = MmtParams::<f64> {
        lambda: 0.0,
        grid_size: 64,
        t_end: 1.0,
        dt: 5e-3,
        dissipation: DissipationSpec {
            strength: 0.0,
            ..DissipationSpec::default()
        },
        ..MmtParams::default()
    };
    let amp = Complex::new(0.8, -0.3);
    let u0 = single_mode(64, 3, amp);
    let field = Etdrk4::new(params).unwrap().integrate(&u0).unwrap();
    let k = std::f64::consts::TAU * 3.0;
    let rotation = Complex::new(0.0, -k.sqrt() * 1.0).exp();
    let mut worst_amp = 0.0_f64;
    let mut worst_phase = 0.0_f64;
    for (got, init) in field.iter().zip(&u0) {
        let expect = init * rotation;
        worst_amp = worst_amp.max((got.norm() - amp.norm()).abs() / amp.norm());
        worst_phase = worst_phase.max((got * expect.conj()).arg().abs());
    }
    assert!(worst_amp < 1e-8, "amplitude drift {worst_amp:.2e}");
    assert!(worst_phase < 1e-6, "phase error {worst_phase:.2e}");

    // (b) Observed convergence order on a dt-halving triplet of the full
    // nonlinear flow, against a much finer reference.
    let base = MmtParams::<f64> {
        grid_size: 32,
        t_end: 1.0,
        dt: 1.0, // replaced per run
        ..MmtParams::default()
    };
    let u0: Vec<Complex<f64>> = (0..32)
        .map(|j| {
            let x = j as f64 / 32.0;
            Complex::new(
                0.5 + 0.4 * (std::f64::consts::TAU * x).cos(),
                0.3 * (2.0 * std::f64::consts::TAU * x).sin(),
            )
        })
        .collect();
    let run = |dt: f64| {
        Etdrk4::new(MmtParams { dt, ..base })
            .unwrap()
            .integrate(&u0)
            .unwrap()
    };
    let reference = run(1.25e-4);
    let err = |dt: f64| {
        run(dt)
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let (e1, e2, e3) = (err(4e-3), err(2e-3), err(1e-3));
    let order_12 = (e1 / e2).log2();
    let order_23 = (e2 / e3).log2();
    assert!(order_12 >= 3.5, "order {order_12:.2} between dt 4e-3 and 2e-3");
    assert!(order_23 >= 3.5, "order {order_23:.2} between dt 2e-3 and 1e-3");

    println!(
        "criterion 03: amplitude {worst_amp:.1e}, phase {worst_phase:.1e}, orders {order_12:.2}/{order_23:.2}"
    );
    assert_budget(start, 30, "criterion 03");
}

#[test]
fn criterion_04_mmt_constant_field_closed_form() {
    let start = Instant::now();
    // A constant field sees neither dispersion nor dissipation; the cubic
    // term rotates it as u(T) = u0 · e^{−iλ|u0|²T}.
    let params = MmtParams::<f64> {
        grid_size: 64,
        t_end: 1.0,
        ..MmtParams::default()
    };
    let u0c = Complex::new(0.3, 0.2);
    let field = Etdrk4::new(params)
        .unwrap()
        .integrate(&vec![u0c; 64])
        .unwrap();
    let expect = u0c * Complex::new(0.0, -params.lambda * u0c.norm_sqr() * 1.0).exp();
    let mut worst = 0.0_f64;
    for got in &field {
        worst = worst.max((got - expect).norm() / expect.norm());
    }
    assert!(worst < 1e-6, "closed-form mismatch {worst:.2e}");
    println!("criterion 04: worst relative error {worst:.1e}");
    assert_budget(start, 5, "criterion 04");
}

#[test]
fn criterion_05_mmt_output_skewness() {
    let start = Instant::now();
    let ds = &*DATASET_2D;
    assert_budget(start, 600, "criterion 05 (generation)");
    // With one retained mode pair the top-variance KL mode is the constant
    // one, so every initial condition is a spatially constant field and the
    // flow is criterion 4's exact rotation: y = r·|cos(θ − λr²T)|, a bounded
    // closed-form map of the two coefficients. Its skewness over the z* = 6
    // box sits near 0.3–0.45 regardless of seed; the 0.5 bound is asserted
    // as the stated tail-heaviness target.
    let skew = skewness(&ds.outputs);
    println!(
        "criterion 05: n = {}, output skewness {skew:.3}",
        ds.len()
    );
    assert!(skew > 0.5, "output skewness {skew:.3} does not exceed 0.5");
}

// ---------------------------------------------------------------------------
// 6–7: Gaussian process regression.
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_gp_dense_oracle_interpolation_and_gradients() {
    let start = Instant::now();

    // (a) Posterior mean/variance against a dense-algebra oracle on random
    // 10-point problems.
    for seed in 0..5u64 {
        let mut rng = child_rng(seed, 0x4750); // "GP"
        let n = 10;
        let d = 2;
        let x = uniform_mat(n, d, -1.0, 1.0, seed + 100);
        let y: Vec<f64> = (0..n).map(|_| f64::standard_normal(&mut rng)).collect();
        let hp = GpHyperparams {
            theta_sigma: 0.5 + 1.5 * f64::uniform_01(&mut rng),
            theta: (0..d).map(|_| 0.3 + f64::uniform_01(&mut rng)).collect(),
            sigma_n: 0.05 + 0.25 * f64::uniform_01(&mut rng),
        };

        let kmat = DMatrix::from_fn(n, n, |i, j| gp::kernel(x.row(i), x.row(j), &hp));
        let c = &kmat + DMatrix::identity(n, n) * (hp.sigma_n * hp.sigma_n);
        let chol = c.cholesky().expect("oracle Cholesky");
        let alpha = chol.solve(&DVector::from_column_slice(&y));

        let model = GpModel::from_hyperparams(hp.clone(), x.clone(), y.clone()).unwrap();
        let queries = uniform_mat(6, d, -1.2, 1.2, seed + 200);
        for qi in 0..queries.rows() {
            let q = queries.row(qi);
            let p = gp::predict(&model, q);
            let kstar = DVector::from_fn(n, |i, _| gp::kernel(x.row(i), q, &hp));
            let mu = kstar.dot(&alpha);
            let var = gp::kernel(q, q, &hp) - kstar.dot(&chol.solve(&kstar));
            assert!(
                (p.mu - mu).abs() < 1e-10,
                "seed {seed} query {qi}: mean {} vs oracle {mu}",
                p.mu
            );
            assert!(
                (p.sigma_eps * p.sigma_eps - var).abs() < 1e-10,
                "seed {seed} query {qi}: variance {} vs oracle {var}",
                p.sigma_eps * p.sigma_eps
            );
            assert_eq!(p.sigma_n, hp.sigma_n);
        }
    }

    // (b) Interpolation through the training points at σ_n = 1e-6.
    let n = 10;
    let x = Mat::from_rows(
        &(0..n)
            .map(|i| vec![i as f64 / n as f64])
            .collect::<Vec<_>>(),
    );
    let y: Vec<f64> = (0..n)
        .map(|i| (std::f64::consts::TAU * i as f64 / n as f64).sin())
        .collect();
    let hp = GpHyperparams {
        theta_sigma: 1.0,
        theta: vec![0.1],
        sigma_n: 1e-6,
    };
    let model = GpModel::from_hyperparams(hp, x.clone(), y.clone()).unwrap();
    let mut worst_interp = 0.0_f64;
    for i in 0..n {
        let p = gp::predict(&model, x.row(i));
        worst_interp = worst_interp.max((p.mu - y[i]).abs());
    }
    assert!(worst_interp < 1e-6, "interpolation error {worst_interp:.2e}");

    // (c) Analytic NLL gradient against central finite differences in
    // log-parameter space.
    let x = uniform_mat(12, 2, -1.0, 1.0, 300);
    let mut rng = child_rng(7, 0x4750);
    let y: Vec<f64> = (0..12).map(|_| f64::standard_normal(&mut rng)).collect();
    let hp = GpHyperparams {
        theta_sigma: 1.3,
        theta: vec![0.7, 1.1],
        sigma_n: 0.2,
    };
    let eval = gp::nll_with_grad(&hp, &x, &y).unwrap();
    let log0 = hp.to_log();
    let h = 1e-5;
    let mut worst_grad = 0.0_f64;
    for j in 0..log0.len() {
        let mut up = log0.clone();
        up[j] += h;
        let mut dn = log0.clone();
        dn[j] -= h;
        let fu = gp::nll(&GpHyperparams::from_log(2, &up), &x, &y).unwrap();
        let fd = gp::nll(&GpHyperparams::from_log(2, &dn), &x, &y).unwrap();
        let num = (fu - fd) / (2.0 * h);
        let rel = (eval.grad_log[j] - num).abs() / num.abs().max(1e-8);
        worst_grad = worst_grad.max(rel);
        assert!(
            rel < 1e-4,
            "log-param {j}: analytic {} vs numeric {num} (rel {rel:.2e})",
            eval.grad_log[j]
        );
    }

    println!(
        "criterion 06: oracle ok, interpolation {worst_interp:.1e}, worst grad rel {worst_grad:.1e}"
    );
    assert_budget(start, 10, "criterion 06");
}

#[test]
fn criterion_07_gp_calibration_self_consistency() {
    let start = Instant::now();

    // Sample a joint draw from a known GP (signal + homoskedastic noise).
    // The lengthscale leaves ~12 independent wiggles in the domain, enough
    // for the training half to pin the hyperparameters down.
    let truth = GpHyperparams {
        theta_sigma: 1.5,
        theta: vec![0.5],
        sigma_n: 0.1,
    };
    let n_train = 150;
    let n_val = 500;
    let n = n_train + n_val;
    let x = uniform_mat(n, 1, -3.0, 3.0, 43);
    let kmat = DMatrix::from_fn(n, n, |i, j| gp::kernel(x.row(i), x.row(j), &truth));
    let c = &kmat + DMatrix::identity(n, n) * (truth.sigma_n * truth.sigma_n);
    let l = c.cholesky().expect("sampling Cholesky").l();
    let mut rng = child_rng(42, 0x4743); // "GC"
    let z = DVector::from_fn(n, |_, _| f64::standard_normal(&mut rng));
    let y = l * z;

    let idx_train: Vec<usize> = (0..n_train).collect();
    let idx_val: Vec<usize> = (n_train..n).collect();
    let x_train = x.select_rows(&idx_train);
    let y_train: Vec<f64> = idx_train.iter().map(|&i| y[i]).collect();
    let x_val = x.select_rows(&idx_val);
    let y_val: Vec<f64> = idx_val.iter().map(|&i| y[i]).collect();

    let cfg = GpFitConfig {
        restarts: 3,
        iterations: 800,
        learning_rate: 1e-2,
        seed: 0,
    };
    let model = gp::fit(&x_train, &y_train, &cfg).unwrap();
    let posteriors: Vec<_> = (0..x_val.rows())
        .map(|i| gp::predict(&model, x_val.row(i)))
        .collect();
    let nr = metrics::normalized_residuals(&posteriors, &y_val).unwrap();
    println!(
        "criterion 07: NR mean {:+.3}, variance {:.3} over {} points (fitted σ_n {:.3})",
        nr.mean,
        nr.variance,
        n_val,
        model.hyperparams.sigma_n
    );
    assert!(
        (-0.1..=0.1).contains(&nr.mean),
        "NR mean {:.3} outside [−0.1, 0.1]",
        nr.mean
    );
    assert!(
        (0.8..=1.2).contains(&nr.variance),
        "NR variance {:.3} outside [0.8, 1.2]",
        nr.variance
    );
    assert_budget(start, 60, "criterion 07");
}

// ---------------------------------------------------------------------------
// 8–9: the network engine.
// ---------------------------------------------------------------------------

fn fd_gradient_check(spec: &NetworkSpec, kind: LossKind, l2: f64, kl: f64, seed: u64) -> f64 {
    let mut rng = child_rng(seed, 0x4644); // "FD"
    let mut st = NetworkState::<f64>::init(spec, &mut rng).unwrap();
    // Shift every parameter off its initial value; in particular biases
    // leave zero, where a dead previous layer would otherwise put the
    // pre-activation exactly on the ReLU kink that central differences
    // straddle.
    for p in st.params_mut().iter_mut() {
        *p += 0.05 + 0.1 * f64::uniform_01(&mut rng);
    }
    let nb = 4;
    let mut x = Mat::zeros(nb, spec.input_dim);
    for v in x.as_mut_slice().iter_mut() {
        *v = 2.0 * f64::uniform_01(&mut rng) - 1.0;
    }
    let y: Vec<f64> = (0..nb)
        .map(|_| 2.0 * f64::uniform_01(&mut rng) - 1.0)
        .collect();
    let noise = draw_noise::<f64, _>(spec, nb, &mut rng);
    let (_, grad) = loss_with_noise(&st, &x, &y, kind, l2, kl, &noise);
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for j in 0..st.params().len() {
        let mut up = st.clone();
        up.params_mut()[j] += h;
        let mut dn = st.clone();
        dn.params_mut()[j] -= h;
        let (fu, _) = loss_with_noise(&up, &x, &y, kind, l2, kl, &noise);
        let (fd, _) = loss_with_noise(&dn, &x, &y, kind, l2, kl, &noise);
        let num = (fu - fd) / (2.0 * h);
        let rel = (grad[j] - num).abs() / num.abs().max(1e-6);
        worst = worst.max(rel);
        assert!(
            rel < 1e-5,
            "{kind:?} param {j}: analytic {} vs numeric {num} (rel {rel:.2e})",
            grad[j]
        );
    }
    worst
}

#[test]
fn criterion_08_nn_gradients_match_finite_differences() {
    let start = Instant::now();
    let mse_spec = NetworkSpec {
        dropout_rate: 0.3,
        ..NetworkSpec::deterministic(3, vec![8, 8])
    };
    let w1 = fd_gradient_check(&mse_spec, LossKind::Mse, 0.01, 0.0, 31);

    let nll_spec = NetworkSpec {
        head: Head::Gaussian,
        ..NetworkSpec::deterministic(3, vec![8, 8])
    };
    let w2 = fd_gradient_check(&nll_spec, LossKind::Nll, 0.0, 0.0, 32);

    // Frozen-noise ELBO: the dropout masks and weight-noise draws are held
    // fixed across the perturbed evaluations.
    let elbo_spec = NetworkSpec {
        head: Head::Gaussian,
        variational: true,
        ..NetworkSpec::deterministic(3, vec![8, 8])
    };
    let w3 = fd_gradient_check(&elbo_spec, LossKind::Elbo, 0.0, 0.1, 33);

    println!("criterion 08: worst rel errors mse {w1:.1e}, nll {w2:.1e}, elbo {w3:.1e}");
    assert_budget(start, 10, "criterion 08");
}

#[test]
fn criterion_09_gnn_recovers_known_noise_level() {
    let start = Instant::now();
    let n = 200;
    let mut rng = child_rng(9, 0x474e); // "GN"
    let mut x = Mat::zeros(n, 1);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let xi = -3.0 + 6.0 * f64::uniform_01(&mut rng);
        x[(i, 0)] = xi;
        y.push(xi.sin() + 0.1 * f64::standard_normal(&mut rng));
    }
    let mut cfg = SurrogateConfig::for_kind(SurrogateKind::Gnn).with_seed(2);
    cfg.hidden = vec![32, 32];
    cfg.train.epochs = 400;
    let model = uq::train_surrogate(&cfg, &x, &y).unwrap();
    let p = uq::predict(&model, &[0.5], 0, None).unwrap();
    println!("criterion 09: trained σ_n = {:.4} (true 0.1)", p.sigma_n);
    assert!(
        (0.07..=0.13).contains(&p.sigma_n),
        "σ_n {:.4} outside [0.07, 0.13]",
        p.sigma_n
    );
    assert_budget(start, 60, "criterion 09");
}

// ---------------------------------------------------------------------------
// 10–12: uncertainty decomposition.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_ensemble_algebra_and_exact_zeros() {
    let start = Instant::now();

    // Hand arithmetic: two deterministic members {0, 2}.
    let p = ensemble_predict_deterministic(&[0.0, 2.0]).unwrap();
    assert_eq!(p.mu, 1.0);
    assert_eq!(p.sigma_eps, 2.0_f64.sqrt());
    assert_eq!(p.sigma_n, 0.0);

    // Hand arithmetic: Gaussian members {(0,1), (0,3)}.
    let g = ensemble_predict_gaussian(&[(0.0, 1.0), (0.0, 3.0)]).unwrap();
    assert_eq!(g.mu, 0.0);
    assert_eq!(g.sigma_eps, 0.0);
    assert_eq!(g.sigma_n, 5.0_f64.sqrt());

    // Identical members collapse the spread to exactly zero.
    let same = ensemble_predict_deterministic(&[0.7; 5]).unwrap();
    assert_eq!(same.sigma_eps, 0.0);

    // r_D = 0 dropout: every stochastic pass is the same network, so the
    // predictive spread is exactly zero.
    let x = uniform_mat(16, 2, -1.0, 1.0, 50);
    let y: Vec<f64> = (0..16).map(|i| x.row(i)[0] + 0.5 * x.row(i)[1]).collect();
    let mut cfg = SurrogateConfig::for_kind(SurrogateKind::Dnn).with_seed(4);
    cfg.hidden = vec![8, 8];
    cfg.dropout_rate = 0.0;
    cfg.passes = 16;
    cfg.train.epochs = 40;
    let model = uq::train_surrogate(&cfg, &x, &y).unwrap();
    let p = uq::predict(&model, &[0.2, -0.4], 9, None).unwrap();
    assert_eq!(p.sigma_eps, 0.0, "r_D = 0 must give σ_ε = 0 exactly");

    // σ_w = 0 weight posteriors: pin every noise scale to softplus(−∞) = 0
    // and the sampled weights collapse onto their means.
    let mut cfg = SurrogateConfig::for_kind(SurrogateKind::Bnn).with_seed(4);
    cfg.hidden = vec![8, 8];
    cfg.passes = 16;
    cfg.train.epochs = 40;
    let mut model = uq::train_surrogate(&cfg, &x, &y).unwrap();
    for member in model.members_mut() {
        let ranges = member.noise_param_ranges();
        for range in ranges {
            for p in &mut member.params_mut()[range] {
                *p = f64::NEG_INFINITY;
            }
        }
    }
    let p = uq::predict(&model, &[0.2, -0.4], 9, None).unwrap();
    assert_eq!(p.sigma_eps, 0.0, "σ_w = 0 must give σ_ε = 0 exactly");

    println!("criterion 10: hand values and exact-zero collapses hold");
    assert_budget(start, 1, "criterion 10");
}

#[test]
fn criterion_11_capability_matrix_over_all_variants() {
    let start = Instant::now();
    // Desk-scale training set: a smooth 2-D map with mild noise.
    let n = 48;
    let mut rng = child_rng(11, 0x434d); // "CM"
    let x = uniform_mat(n, 2, -2.0, 2.0, 60);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let r = x.row(i);
            (2.0 * r[0]).sin() + 0.5 * r[1] + 0.05 * f64::standard_normal(&mut rng)
        })
        .collect();
    let queries = uniform_mat(16, 2, -2.0, 2.0, 61);

    for kind in SurrogateKind::ALL {
        let mut cfg = SurrogateConfig::for_kind(kind).with_seed(13);
        cfg.hidden = vec![64, 64, 64, 64];
        cfg.train.epochs = 300;
        cfg.gp.restarts = 4;
        cfg.gp.iterations = 800;
        let model = uq::train_surrogate(&cfg, &x, &y).unwrap();
        let posteriors = uq::predict_batch(&model, &queries, 17, None).unwrap();

        let max_eps = posteriors.iter().map(|p| p.sigma_eps).fold(0.0, f64::max);
        let min_eps = posteriors
            .iter()
            .map(|p| p.sigma_eps)
            .fold(f64::INFINITY, f64::min);
        if kind.has_epistemic() {
            assert!(
                max_eps > 0.0,
                "{kind}: epistemic capability but no σ_ε spread"
            );
            assert!(min_eps >= 0.0, "{kind}: negative σ_ε");
        } else {
            assert_eq!(
                max_eps, 0.0,
                "{kind}: no epistemic capability but σ_ε = {max_eps}"
            );
        }

        let sigma_n = posteriors[0].sigma_n;
        if kind.has_aleatoric() {
            assert!(sigma_n > 0.0, "{kind}: aleatoric capability but σ_n = 0");
        } else {
            assert_eq!(sigma_n, 0.0, "{kind}: no aleatoric head but σ_n = {sigma_n}");
        }
        println!(
            "criterion 11: {:>5}  σ_ε {} σ_n {}",
            kind.label(),
            if kind.has_epistemic() { "yes" } else { "no " },
            if kind.has_aleatoric() { "yes" } else { "no " },
        );
    }
    assert_budget(start, 300, "criterion 11");
}

#[test]
fn criterion_12_convergence_curve_mechanics() {
    let start = Instant::now();
    let ds = &*DATASET_2D;
    let (train, val) = datasets::split(ds, 25, 1).unwrap();

    let cfg = SurrogateConfig::for_kind(SurrogateKind::Dnn).with_seed(3);
    let model = uq::train_surrogate(&cfg, &train.inputs, &train.outputs).unwrap();

    let idx: Vec<usize> = (0..200).collect();
    let queries = val.inputs.select_rows(&idx);
    let grid = [2usize, 3, 5, 10, 25, 50, 100];
    let points = uq::convergence_study(&model, &queries, &grid, 100, 21).unwrap();
    assert_eq!(points.len(), grid.len());

    for p in &points {
        assert!(
            p.log_pdf_diff >= 0.0 && p.mean_sq_diff >= 0.0,
            "negative distance at n_e = {}",
            p.n_e
        );
    }
    let at = |n: usize| points.iter().find(|p| p.n_e == n).unwrap();
    assert_eq!(at(100).log_pdf_diff, 0.0, "log-pdf distance nonzero at the reference");
    assert_eq!(at(100).mean_sq_diff, 0.0, "σ_ε distance nonzero at the reference");
    assert!(
        at(2).mean_sq_diff > at(50).mean_sq_diff,
        "mean-squared difference did not decrease: {} at 2 vs {} at 50",
        at(2).mean_sq_diff,
        at(50).mean_sq_diff
    );
    println!(
        "criterion 12: msd 2→50: {:.3e} → {:.3e}, both distances 0 at reference",
        at(2).mean_sq_diff,
        at(50).mean_sq_diff
    );
    assert_budget(start, 300, "criterion 12");
}

// ---------------------------------------------------------------------------
// 13–14: the experiment pipeline.
// ---------------------------------------------------------------------------

#[test]
fn criterion_13_bundled_run_is_digest_identical() {
    let start = Instant::now();
    let exe = env!("CARGO_BIN_EXE_uqbench");
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/mmt2d.toml");
    assert!(config.is_file(), "bundled config missing: {}", config.display());
    let tmp = tempfile::tempdir().unwrap();

    let mut manifests = Vec::new();
    for sub in ["first", "second"] {
        let out = tmp.path().join(sub);
        let status = Command::new(exe)
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env_remove("UQBENCH_OUT_ROOT")
            .status()
            .expect("spawning the experiment binary");
        assert!(status.success(), "run {sub} exited with {status}");
        manifests.push(std::fs::read(out.join("manifest.json")).unwrap());
    }
    assert_eq!(
        manifests[0], manifests[1],
        "reruns produced different manifests"
    );
    println!(
        "criterion 13: two runs, identical {}-byte manifests",
        manifests[0].len()
    );
    assert_budget(start, 600, "criterion 13");
}

#[test]
fn criterion_14_functional_pipeline_health() {
    let start = Instant::now();
    let ds = &*DATASET_2D;
    let traces = ds
        .functional_inputs
        .as_ref()
        .expect("reference dataset stores traces");
    assert_eq!(traces.cols(), 1024);

    // The dataset's closed-form phase (see criterion 5) winds ~320 times
    // along the coefficient radius, so its residuals behave as irreducible
    // noise that an ensemble's member spread — disagreement about the
    // learnable envelope — cannot track; designs from 10 to 400 training
    // rows all land near the same variance. The band is asserted as stated
    // on a representative design.
    let (train, val) = datasets::split(ds, 150, 2).unwrap();
    let mut cfg = SurrogateConfig::for_kind(SurrogateKind::Enn).with_seed(5);
    cfg.standardize_inputs = true;
    cfg.train.epochs = 250;
    let x_train = train.functional_inputs.as_ref().unwrap();
    let x_val = val.functional_inputs.as_ref().unwrap();
    let model = uq::train_surrogate(&cfg, x_train, &train.outputs).unwrap();
    assert_eq!(model.input_dim(), 1024);

    let posteriors = uq::predict_batch(&model, x_val, 27, None).unwrap();
    let nr = metrics::normalized_residuals(&posteriors, &val.outputs).unwrap();
    println!(
        "criterion 14: functional ENN NR variance {:.3} over {} rows",
        nr.variance,
        val.len()
    );
    assert!(
        (0.5..=2.0).contains(&nr.variance),
        "NR variance {:.3} outside [0.5, 2.0]",
        nr.variance
    );
    assert_budget(start, 600, "criterion 14");
}
