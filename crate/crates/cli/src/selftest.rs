//! In-process oracle-equivalence suite: checks the incremental learners
//! against their batch closed forms on random problems and the feature
//! pipeline against naive summation. One pass/fail line per check.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use welm_core::elm;
use welm_core::features::{generate_projection, integral_image, rect_sum, GrayImage, RectFilter};
use welm_core::oselm;
use welm_core::woselm::{self, Label, RegularizerMode, RhoMode};

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-30)
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, p_pos: f64) -> Vec<Label> {
    let mut labels: Vec<Label> = (0..n)
        .map(|_| if rng.random_bool(p_pos) { Label::Pos } else { Label::Neg })
        .collect();
    labels[0] = Label::Pos;
    labels[n - 1] = Label::Neg;
    labels
}

/// Chunked online least squares vs. the batch normal equations.
fn check_oselm(trials: u64) -> (bool, String) {
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let h = random_matrix(&mut rng, 160, 24);
        let t = random_matrix(&mut rng, 160, 2);
        let h0 = h.view((0, 0), (40, 24)).into_owned();
        let t0 = t.view((0, 0), (40, 2)).into_owned();
        let mut state = match oselm::oselm_init(&h0, &t0, None) {
            Ok(s) => s,
            Err(e) => return (false, format!("init failed: {e}")),
        };
        let mut row = 40;
        while row < 160 {
            let dn = rng.random_range(1..=(160 - row).min(30));
            let hd = h.view((row, 0), (dn, 24)).into_owned();
            let td = t.view((row, 0), (dn, 2)).into_owned();
            if let Err(e) = oselm::oselm_update(&mut state, &hd, &td) {
                return (false, format!("update failed: {e}"));
            }
            row += dn;
        }
        // Batch oracle: weak-ridge closed form approaches plain least
        // squares on these well-conditioned problems.
        let batch = match elm::train_batch(&h, &t, 1e12) {
            Ok(b) => b,
            Err(e) => return (false, format!("batch failed: {e}")),
        };
        worst = worst.max(rel_err(&state.beta, &batch));
    }
    (worst < 1e-8, format!("worst relative error {worst:.2e}"))
}

/// Weighted online recursion (fixed regularizer, rho = 1) vs. the batch
/// weighted solve with per-chunk weights.
fn check_woselm(trials: u64) -> (bool, String) {
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + trial);
        let c = 3.0;
        let nh = 12;
        let h0 = random_matrix(&mut rng, 50, nh);
        let labels0 = random_labels(&mut rng, 50, 0.2);
        let t0 = woselm::label_matrix(&labels0);
        let mut state = match woselm::woselm_init(
            &h0,
            &t0,
            &labels0,
            c,
            RegularizerMode::Fixed,
            RhoMode::Unit,
        ) {
            Ok(s) => s,
            Err(e) => return (false, format!("init failed: {e}")),
        };
        let mut h_all = h0.clone();
        let mut t_all = t0.clone();
        let mut w_all = {
            let cw = woselm::weights_for_batch(
                labels0.iter().filter(|l| **l == Label::Pos).count(),
                labels0.iter().filter(|l| **l == Label::Neg).count(),
            )
            .unwrap();
            woselm::build_weight_matrix(&labels0, cw)
        };
        for _ in 0..5 {
            let dn = rng.random_range(4..24usize);
            let hd = random_matrix(&mut rng, dn, nh);
            let labels = random_labels(&mut rng, dn, 0.2);
            let td = woselm::label_matrix(&labels);
            if let Err(e) = state.update(&hd, &td, &labels) {
                return (false, format!("update failed: {e}"));
            }
            let cw = woselm::weights_for_batch(
                labels.iter().filter(|l| **l == Label::Pos).count(),
                labels.iter().filter(|l| **l == Label::Neg).count(),
            )
            .unwrap();
            w_all.extend(woselm::build_weight_matrix(&labels, cw));
            h_all = stack(&h_all, &hd);
            t_all = stack(&t_all, &td);
        }
        let batch = match elm::train_batch_weighted(&h_all, &t_all, &w_all, 2.0 * c) {
            Ok(b) => b,
            Err(e) => return (false, format!("batch failed: {e}")),
        };
        worst = worst.max(rel_err(&state.beta, &batch));
    }
    (worst < 1e-8, format!("worst relative error {worst:.2e}"))
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

/// The forgetting update at rho = 1 must equal the direct evaluation
/// K1^-1 (K0 beta0 + At B), the no-forgetting form.
fn check_update_identity(trials: u64) -> (bool, String) {
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + trial);
        let nh = 10;
        let c = 0.8;
        let h0 = random_matrix(&mut rng, 30, nh);
        let labels0 = random_labels(&mut rng, 30, 0.4);
        let t0 = woselm::label_matrix(&labels0);
        let mut state = woselm::woselm_init(
            &h0,
            &t0,
            &labels0,
            c,
            RegularizerMode::Accumulate,
            RhoMode::Unit,
        )
        .expect("init");
        let k0 = state.k.clone();
        let beta0 = state.beta.clone();
        let hd = random_matrix(&mut rng, 8, nh);
        let labels = random_labels(&mut rng, 8, 0.4);
        let td = woselm::label_matrix(&labels);
        state.update(&hd, &td, &labels).expect("update");

        let cw = woselm::weights_for_batch(
            labels.iter().filter(|l| **l == Label::Pos).count(),
            labels.iter().filter(|l| **l == Label::Neg).count(),
        )
        .unwrap();
        let w = woselm::build_weight_matrix(&labels, cw);
        let mut a = hd.clone();
        let mut b = td.clone();
        for (i, wi) in w.iter().enumerate() {
            a.row_mut(i).scale_mut(wi.sqrt());
            b.row_mut(i).scale_mut(wi.sqrt());
        }
        let mut k1 = &k0 + a.transpose() * &a;
        for i in 0..nh {
            k1[(i, i)] += 1.0 / (2.0 * c);
        }
        let direct = k1
            .clone()
            .cholesky()
            .expect("spd")
            .solve(&(&k0 * &beta0 + a.transpose() * &b));
        worst = worst.max(rel_err(&state.beta, &direct));
    }
    (worst < 1e-10, format!("worst relative error {worst:.2e}"))
}

/// Integral-image rectangle means vs. naive double-loop summation.
fn check_rect_sums(images: u64) -> (bool, String) {
    for seed in 0..images {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let img = GrayImage::from_fn(64, 64, |_, _| (rng.random_range(0..256u32)) as u8);
        let ii = integral_image(&img);
        for _ in 0..400 {
            let w = rng.random_range(1..=64u32);
            let h = rng.random_range(1..=64u32);
            let x = rng.random_range(0..=64 - w);
            let y = rng.random_range(0..=64 - h);
            let got = rect_sum(&ii, (x, y), &RectFilter { dx: 0, dy: 0, w, h }).unwrap();
            let mut naive = 0u64;
            for yy in y..y + h {
                for xx in x..x + w {
                    naive += img.get(xx, yy) as u64;
                }
            }
            let expect = naive as f64 / (w as u64 * h as u64) as f64;
            if got != expect {
                return (false, format!("mismatch at ({x},{y}) {w}x{h}: {got} vs {expect}"));
            }
        }
    }
    (true, "all sampled rectangles match exactly".to_string())
}

/// Projection rows stay within the 2..=4 sparsity bound.
fn check_projection_sparsity() -> (bool, String) {
    for seed in 0..20u64 {
        let p = generate_projection(seed, 50, 32, 32);
        for (k, row) in p.rows().iter().enumerate() {
            if !(2..=4).contains(&row.len()) {
                return (false, format!("seed {seed} row {k} has {} entries", row.len()));
            }
        }
    }
    (true, "all rows carry 2..=4 entries".to_string())
}

type Check = Box<dyn Fn() -> (bool, String)>;

/// Runs the whole suite, printing one line per check. Returns overall
/// success.
pub fn run_selftest() -> bool {
    let checks: Vec<(&str, Check)> = vec![
        ("online least squares vs batch", Box::new(|| check_oselm(10))),
        ("weighted online vs weighted batch", Box::new(|| check_woselm(10))),
        ("forgetting update identity (rho = 1)", Box::new(|| check_update_identity(20))),
        ("rectangle sums vs naive summation", Box::new(|| check_rect_sums(3))),
        ("projection row sparsity", Box::new(check_projection_sparsity)),
    ];
    let mut all_ok = true;
    for (name, check) in checks {
        let (ok, detail) = check();
        println!("{}: {name} — {detail}", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    }
    all_ok
}
