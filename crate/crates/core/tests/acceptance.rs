//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 1 6 8`. The process
//! exits non-zero only when a criterion outside `KNOWN_RED` fails; the
//! known-red ones are still run and reported at full tolerance.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::Matrix2;
use rand::Rng;
use thermorbm::ais::ais_log_z;
use thermorbm::data::{load_mnist, Split};
use thermorbm::exact::{
    block_gibbs_transition_matrix, conductance, coordinate_cut_conductance, cut_field_margin, enumerate_log_z,
    spectral_gap, stationary_distribution, KernelKind,
};
use thermorbm::rng::{stream, Purpose};
use thermorbm::sampler::{flip_rate_epoch, free_energy, run_chain};
use thermorbm::stability::{fit_geometric_decay, jacobian, jury_stable, simulate_mean_field, Verdict};
use thermorbm::trainer::{apply_update, cd_gradient, positive_phase, reconstruct};
use thermorbm::{train, BinaryMatrix, ChainState, Gradient, Rbm, TemperatureMode, TrainConfig};

/// Criteria that fail as specified; the README explains each one.
const KNOWN_RED: &[usize] = &[2, 3, 9];

struct Outcome {
    pass: bool,
    detail: String,
    info: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
            info: Vec::new(),
        }
    }

    fn with_info(mut self, info: Vec<String>) -> Self {
        self.info = info;
        self
    }
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "AIS vs exact enumeration", c1_ais),
        (2, "flip-rate freezing bound", c2_freezing),
        (3, "conductance collapse and Cheeger sandwich", c3_conductance),
        (4, "linear drift under frozen statistics", c4_drift),
        (5, "global parameter boundedness", c5_boundedness),
        (6, "Jury/eigenvalue equivalence", c6_jury),
        (7, "mean-field controller convergence", c7_mean_field),
        (8, "positive-phase gradient vs finite differences", c8_gradient),
        (9, "desk-scale adaptive vs fixed-unit", c9_desk),
        (10, "determinism", c10_determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id:>2}: {name}: {} [{secs:.1} s]", out.detail);
        for line in &out.info {
            println!("       {line}");
        }
        if !out.pass && !KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn c1_ais() -> Outcome {
    let mut worst = 0.0f64;
    let mut info = Vec::new();
    for m in 0..5u64 {
        let mut rng = stream(m, Purpose::Misc, 1, 0);
        let p = Rbm::random_normal(3, 2, 0.5, &mut rng).unwrap();
        let exact = enumerate_log_z(&p, 1.0).unwrap();
        let est = ais_log_z(&p, 1.0, 1000, 1000, 100 + m).unwrap();
        let err = (est.log_z_estimate - exact).abs();
        info.push(format!("model {m}: exact {exact:.5} ais {:.5} ess {:.1}", est.log_z_estimate, est.ess));
        worst = worst.max(err);
    }
    Outcome::new(worst <= 0.05, format!("max |Δ log Z| = {worst:.4} (tol 0.05)")).with_info(info)
}

/// 4+4 model with `W = 0` and every bias `+β`, so each field equals `β`.
fn pinned(n_v: usize, n_h: usize, beta: f64) -> Rbm {
    Rbm::from_parts(n_v, n_h, vec![0.0; n_v * n_h], vec![beta; n_v], vec![beta; n_h]).unwrap()
}

fn c2_freezing() -> Outcome {
    let (chains, k) = (20_000usize, 10usize);
    let mut rates = Vec::new();
    let mut ok = true;
    let mut info = Vec::new();
    for beta in [1.0f64, 2.0, 4.0, 8.0] {
        let p = pinned(4, 4, beta);
        let samples: Vec<f64> = (0..chains)
            .map(|c| {
                let mut rng = stream(2, Purpose::Misc, beta.to_bits(), c as u64);
                let init = ChainState::new(vec![1; 4], vec![1; 4]).unwrap();
                flip_rate_epoch(&run_chain(&p, 1.0, &init, k, &mut rng).unwrap()).unwrap()
            })
            .collect();
        let n = chains as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let se = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let bound = 0.25 * (-beta).exp();
        ok &= mean <= bound + 3.0 * se;
        // Independent-coordinate oracle: each unit flips w.p. 2σ(β)σ(−β) at
        // stationarity, and the chain starts in the all-ones mode.
        let s = 1.0 / (1.0 + beta.exp());
        info.push(format!(
            "β={beta}: rate {mean:.3e} ± {se:.1e}, bound {bound:.3e}, stationary rate 2σ(β)σ(−β) = {:.3e}, e^(−β) = {:.3e}",
            2.0 * s * (1.0 - s),
            (-beta).exp()
        ));
        rates.push(mean);
    }
    let decreasing = rates.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        ok && decreasing,
        format!("bound 0.25·e^(−β) + 3·SE held at every β: {ok}; strictly decreasing: {decreasing}"),
    )
    .with_info(info)
}

/// 2+2 model with `W = 2β`, biases `−β`; hidden fields lie in `β·{−1, 1, 3}`.
fn ferro(beta: f64) -> Rbm {
    Rbm::from_parts(2, 2, vec![2.0; 4], vec![-1.0; 2], vec![-1.0; 2]).unwrap().scaled(beta)
}

fn c3_conductance() -> Outcome {
    let mut cut_ok = true;
    let mut cheeger_ok = true;
    let mut info = Vec::new();
    for beta in [1.0f64, 2.0, 4.0, 8.0] {
        let p = ferro(beta);
        let pi = stationary_distribution(&p, 1.0).unwrap();
        let margin = cut_field_margin(&p, 1.0, 0).unwrap();
        let bound = 0.25 * (-margin).exp();
        let hk = block_gibbs_transition_matrix(&p, 1.0, KernelKind::HiddenHalfStep).unwrap();
        let fk = block_gibbs_transition_matrix(&p, 1.0, KernelKind::FullAlternating).unwrap();
        let phi_h = coordinate_cut_conductance(&p, 1.0, 0, &hk, &pi).unwrap();
        let phi_f = coordinate_cut_conductance(&p, 1.0, 0, &fk, &pi).unwrap();
        cut_ok &= phi_h <= bound;
        let mut line = format!(
            "β={beta}: margin {margin}, cut conductance hidden half-step {phi_h:.4e} / full sweep {phi_f:.4e}, bound {bound:.3e}"
        );
        for kind in [KernelKind::HiddenHalfStep, KernelKind::VisibleHalfStep, KernelKind::RandomScan] {
            let k = block_gibbs_transition_matrix(&p, 1.0, kind).unwrap();
            let gap = spectral_gap(&k, &pi).unwrap();
            let phi = conductance(&k, &pi).unwrap();
            let holds = phi * phi / 2.0 <= gap + 1e-10 && gap <= 2.0 * phi + 1e-10;
            if kind != KernelKind::RandomScan {
                cheeger_ok &= holds;
            }
            line.push_str(&format!("; {kind:?} γ={gap:.3e} Φ={phi:.3e} sandwich {holds}"));
        }
        info.push(line);
    }
    Outcome::new(
        cut_ok && cheeger_ok,
        format!("cut conductance ≤ 0.25·e^(−β) at every β: {cut_ok}; half-step Cheeger sandwich: {cheeger_ok}"),
    )
    .with_info(info)
}

fn c4_drift() -> Outcome {
    // Saturated hidden units make the data statistic D = mean(v)·1ᵀ constant;
    // the negative chains are held fixed, so C is constant too.
    let (n_v, n_h) = (4, 3);
    let p0 = Rbm::from_parts(n_v, n_h, vec![0.0; n_v * n_h], vec![0.0; n_v], vec![40.0; n_h]).unwrap();
    let data = BinaryMatrix::from_rows(&[vec![1, 1, 1, 1], vec![1, 1, 1, 1]]).unwrap();
    let neg_v = BinaryMatrix::from_rows(&[vec![1, 0, 1, 0], vec![1, 1, 0, 0]]).unwrap();
    let neg_h = BinaryMatrix::from_rows(&[vec![1, 0, 1], vec![0, 1, 1]]).unwrap();
    let d: Vec<f64> = vec![1.0; n_v * n_h];
    let c: Vec<f64> = (0..n_v * n_h)
        .map(|e| {
            let (i, j) = (e / n_h, e % n_h);
            (0..2).map(|r| (neg_v.row(r)[i] * neg_h.row(r)[j]) as f64).sum::<f64>() / 2.0
        })
        .collect();
    let eta = 0.01;
    let steps = 1000;
    let mut p = p0.clone();
    let mut traj: Vec<Vec<f64>> = vec![p.weights().to_vec()];
    for _ in 0..steps {
        let g = cd_gradient(&p, 1.0, &data, &neg_v, &neg_h).unwrap();
        p = apply_update(&p, &g, eta, 0.0, 0.0).unwrap();
        traj.push(p.weights().to_vec());
    }
    let tm = steps as f64 / 2.0;
    let sxx: f64 = (0..=steps).map(|t| (t as f64 - tm).powi(2)).sum();
    let mut worst = 0.0f64;
    for e in 0..n_v * n_h {
        let ym = traj.iter().map(|w| w[e]).sum::<f64>() / (steps + 1) as f64;
        let sxy: f64 = traj.iter().enumerate().map(|(t, w)| (t as f64 - tm) * (w[e] - ym)).sum();
        let slope = sxy / sxx;
        let want = eta * (d[e] - c[e]);
        worst = worst.max((slope - want).abs() / want.abs());
    }
    Outcome::new(worst <= 0.01, format!("max relative slope error {worst:.2e} over {steps} steps (tol 1%)"))
}

fn c5_boundedness() -> Outcome {
    let (n_v, n_h) = (5, 4);
    let dim = (n_v * n_h + n_v + n_h) as f64;
    let (eta, psi, cap) = (0.1, 0.01, 1.0);
    let mut rng = stream(5, Purpose::Misc, 0, 0);
    let p0 = Rbm::random_normal(n_v, n_h, 1.0, &mut rng).unwrap();
    let norm0 = p0.theta_norm();
    let rho = 1.0 - eta * psi;
    let bound = norm0.max(eta * cap * dim.sqrt() / (1.0 - rho));
    // Every entry pushes outward at the maximal magnitude, with random
    // sign flips on a fraction of entries to vary the direction.
    let drive = |p: &Rbm, rng: &mut thermorbm::rng::StreamRng| -> Gradient<f64> {
        let sign = |x: f64, rng: &mut thermorbm::rng::StreamRng| {
            let s = if x >= 0.0 { cap } else { -cap };
            if rng.random_bool(0.05) {
                -s
            } else {
                s
            }
        };
        Gradient {
            dw: p.weights().iter().map(|&x| sign(x, rng)).collect(),
            db_v: p.visible_bias().iter().map(|&x| sign(x, rng)).collect(),
            db_h: p.hidden_bias().iter().map(|&x| sign(x, rng)).collect(),
        }
    };
    let run = |psi: f64| {
        let mut rng = stream(5, Purpose::Misc, 1, 0);
        let mut p = p0.clone();
        let mut sup = norm0;
        for _ in 0..10_000 {
            let g = drive(&p, &mut rng);
            p = apply_update(&p, &g, eta, psi, psi).unwrap();
            sup = sup.max(p.theta_norm());
        }
        sup
    };
    let with = run(psi);
    let without = run(0.0);
    Outcome::new(
        with <= bound && without > bound,
        format!("sup ‖θ‖ with decay {with:.3} ≤ bound {bound:.3}; without decay {without:.3} exceeds it"),
    )
}

fn c6_jury() -> Outcome {
    let mut rng = stream(6, Purpose::Misc, 0, 0);
    let (mut disagreements, mut marginal, mut errors) = (0usize, 0usize, 0usize);
    for _ in 0..100_000 {
        let phi = 1.0 - rng.random::<f64>();
        let eta = rng.random_range(0.0..1.0);
        let alpha = 1.0 - rng.random::<f64>();
        let s = rng.random_range(-20.0..20.0);
        let j = jacobian(phi, eta, alpha, s);
        // Independent oracle: nalgebra's complex eigenvalues.
        let rho = Matrix2::new(j[0][0], j[0][1], j[1][0], j[1][1])
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if (rho - 1.0).abs() < 1e-9 {
            marginal += 1;
            continue;
        }
        match jury_stable(&j) {
            Ok(r) if r.verdict == Verdict::Marginal => marginal += 1,
            Ok(r) => disagreements += (r.stable != (rho < 1.0)) as usize,
            Err(_) => errors += 1,
        }
    }
    let boundary = jury_stable(&jacobian(1.0, 0.05, 0.05, 0.7)).unwrap();
    let j = jacobian(1.0, 0.05, 0.05, 0.7);
    let identity = 1.0 - (j[0][0] + j[1][1]) + (j[0][0] * j[1][1] - j[0][1] * j[1][0]);
    let ok = disagreements == 0 && errors == 0 && boundary.verdict == Verdict::Marginal && identity.abs() < 1e-15;
    Outcome::new(
        ok,
        format!(
            "{disagreements} disagreements, {errors} internal mismatches, {marginal} marginal of 1e5; φ=1 verdict {:?} (1 − tr + det = {identity:.1e})",
            boundary.verdict
        ),
    )
}

fn c7_mean_field() -> Outcome {
    let (phi, eta, alpha, s) = (0.92, 0.1, 0.2, 0.2);
    let r = |l: f64| 0.5 + 0.5 * (2.0 * s * l).tanh();
    let rho = jury_stable(&jacobian(phi, eta, alpha, s)).unwrap().spectral_radius;
    let traj = simulate_mean_field(r, phi, eta, alpha, (0.3, 0.4), 200).unwrap();
    let norms: Vec<f64> = traj.iter().map(|&(l, c)| l.hypot(c - 0.5)).collect();
    let (fit, m) = fit_geometric_decay(&norms[20..]).unwrap();
    Outcome::new(
        (fit - rho).abs() <= 0.05,
        format!("fitted rate {fit:.4} vs ρ(J) = {rho:.4} (tol 0.05), M = {m:.3}"),
    )
}

fn c8_gradient() -> Outcome {
    let mut worst = 0.0f64;
    let h = 1e-5;
    for seed in 0..3u64 {
        let mut rng = stream(8, Purpose::Misc, seed, 0);
        let mut p = Rbm::random_normal(5, 4, 1.0, &mut rng).unwrap();
        p.visible_bias_mut().iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        p.hidden_bias_mut().iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let rows: Vec<Vec<u8>> = (0..6).map(|_| (0..5).map(|_| rng.random_bool(0.5) as u8).collect()).collect();
        let data = BinaryMatrix::from_rows(&rows).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let g = positive_phase(&p, t, &data).unwrap();
            let mean_f = |q: &Rbm| rows.iter().map(|v| free_energy(q, t, v).unwrap()).sum::<f64>() / rows.len() as f64;
            let analytic: Vec<f64> = g.dw.iter().chain(&g.db_v).chain(&g.db_h).copied().collect();
            for (k, &a) in analytic.iter().enumerate() {
                let bump = |delta: f64| {
                    let mut q = p.clone();
                    let nw = q.weights().len();
                    let nv = q.n_visible();
                    if k < nw {
                        q.weights_mut()[k] += delta;
                    } else if k < nw + nv {
                        q.visible_bias_mut()[k - nw] += delta;
                    } else {
                        q.hidden_bias_mut()[k - nw - nv] += delta;
                    }
                    mean_f(&q)
                };
                let fd = -(bump(h) - bump(-h)) / (2.0 * h);
                worst = worst.max((fd - a).abs());
            }
        }
    }
    Outcome::new(worst < 1e-6, format!("max |analytic − finite difference| = {worst:.2e} (tol 1e-6)"))
}

fn dataset_dir() -> PathBuf {
    std::env::var_os("THERMORBM_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"))
}

struct DeskRun {
    ess: f64,
    mse: f64,
    temperature: f64,
    log_z: f64,
}

fn desk_run(mode: TemperatureMode, seed: u64, train_set: &BinaryMatrix, test_set: &BinaryMatrix) -> DeskRun {
    let config = TrainConfig {
        epochs: 30,
        gibbs_steps: 1,
        seed,
        temperature_mode: mode,
        ..TrainConfig::default()
    };
    let result = train::<f64>(&config, train_set, 64).unwrap();
    let t = result.metrics.last().unwrap().temperature;
    let ais = ais_log_z(&result.params, t, 200, 1000, seed).unwrap();
    let mse = test_set
        .iter_rows()
        .map(|v| reconstruct(&result.params, t, v).unwrap().1)
        .sum::<f64>()
        / test_set.rows() as f64;
    DeskRun {
        ess: ais.ess,
        mse,
        temperature: t,
        log_z: ais.log_z_estimate,
    }
}

fn c9_desk() -> Outcome {
    let dir = dataset_dir();
    let (train_set, test_set) = match (load_mnist(&dir, Split::Train), load_mnist(&dir, Split::Test)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return Outcome::new(false, format!("dataset unavailable at {}: {e}", dir.display()))
        }
    };
    let mut wins = 0;
    let mut mse_ok = true;
    let mut info = vec![format!("train {} × {}, test {}", train_set.rows(), train_set.cols(), test_set.rows())];
    for seed in [1u64, 2, 3, 17, 128] {
        let a = desk_run(TemperatureMode::Adaptive, seed, &train_set, &test_set);
        let f = desk_run(TemperatureMode::FixedUnit, seed, &train_set, &test_set);
        wins += (a.ess >= f.ess) as usize;
        let rel = (a.mse - f.mse).abs() / f.mse;
        mse_ok &= rel <= 0.05;
        info.push(format!(
            "seed {seed}: adaptive ESS {:.2} (T {:.4}, log Z {:.2}, mse {:.5}) | fixed ESS {:.2} (log Z {:.2}, mse {:.5}) | mse gap {:.2}%",
            a.ess,
            a.temperature,
            a.log_z,
            a.mse,
            f.ess,
            f.log_z,
            f.mse,
            100.0 * rel
        ));
    }
    Outcome::new(
        wins >= 4 && mse_ok,
        format!("adaptive ESS ≥ fixed in {wins}/5 seeds (need 4); reconstruction within 5% on every seed: {mse_ok}"),
    )
    .with_info(info)
}

fn c10_determinism() -> Outcome {
    let mut rng = stream(10, Purpose::Dataset, 0, 0);
    let data = thermorbm::data::synthetic_bars(4, 300, &mut rng).unwrap();
    let config = TrainConfig {
        epochs: 5,
        batch_size: 32,
        learning_rate: 0.05,
        seed: 17,
        ..TrainConfig::default()
    };
    let render = || {
        let r = train::<f64>(&config, &data, 8).unwrap();
        let mut out = String::new();
        for m in &r.metrics {
            out.push_str(&serde_json::to_string(m).unwrap());
            out.push('\n');
        }
        let ais = ais_log_z(&r.params, r.metrics.last().unwrap().temperature, 64, 100, 17).unwrap();
        out.push_str(&serde_json::to_string(&ais).unwrap());
        (out, thermorbm::Checkpoint::new(&r.params, &r.thermo).to_bytes())
    };
    let (a, ca) = render();
    let (b, cb) = render();
    Outcome::new(
        a == b && ca == cb,
        format!("metrics/report bytes identical: {}; checkpoint bytes identical: {}", a == b, ca == cb),
    )
}
