use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use thermorbm::ais::{ais_log_z, pseudo_likelihood, test_log_likelihood};
use thermorbm::compare::{bayesian_bootstrap, cohens_d};
use thermorbm::controller::temperature;
use thermorbm::data::Split;
use thermorbm::diagnostics::{
    autocorrelation, beta_diagnostics, hamming_diversity, mean_distance_to_mean, mean_pairwise_l2, pixel_entropy,
};
use thermorbm::exact::{
    block_gibbs_transition_matrix, conductance, enumerate_log_z, helmholtz_functional, spectral_gap,
    stationarity_defect, stationary_distribution, KernelKind,
};
use thermorbm::rng::{stream, Purpose};
use thermorbm::sampler::{free_energy, log_marginal_unnormalized, run_chain};
use thermorbm::stability::{estimate_flip_sensitivity, StabilityReport};
use thermorbm::trainer::{positive_phase, reconstruct, sample_model};
use thermorbm::{train_with, BinaryMatrix, ChainState, Checkpoint, Rbm};

use crate::fail::{CliError, CliResult};
use crate::report::{self, meta, Ndjson};
use crate::settings::{FileConfig, Overrides, Resolved};
use crate::{
    CompareArgs, EvaluateArgs, OracleArgs, SampleArgs, StabilityArgs, TemperatureSource, TrainArgs, SEED_PRESETS,
};

pub fn train(args: TrainArgs) -> CliResult<()> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let over = Overrides {
        seed: args.seed,
        mode: args.mode,
        temperature: args.temperature,
        epochs: args.epochs_override,
        n_hidden: args.n_hidden,
    };
    let base = Resolved::resolve(&file, &over)?;
    let (data, desc) = args.data.load(Split::Train)?;
    if args.all_seeds {
        for seed in SEED_PRESETS {
            let cfg = Resolved { seed, ..base.clone() };
            train_one(&cfg, &data, &desc, &args.out_dir.join(format!("seed-{seed}")), args.checkpoint_every)?;
        }
        Ok(())
    } else {
        train_one(&base, &data, &desc, &args.out_dir, args.checkpoint_every)
    }
}

fn train_one(cfg: &Resolved, data: &BinaryMatrix, desc: &Value, dir: &Path, every: usize) -> CliResult<()> {
    report::ensure_dir(dir)?;
    let tc = cfg.train_config();
    let header = json!({
        "meta": meta("train", cfg.seed, Some(cfg)),
        "dataset": desc,
        "n_visible": data.cols(),
        "warnings": tc.warnings(),
    });
    let mut metrics = Ndjson::create(&dir.join(report::METRICS_FILE))?;
    metrics.record("header", &header)?;
    let mut timing = Ndjson::create(&dir.join(report::TIMING_FILE))?;
    timing.record("header", &header)?;
    if every > 0 {
        report::ensure_dir(&dir.join(report::CHECKPOINT_DIR))?;
    }

    let mut clock = Instant::now();
    let mut io_error: Option<CliError> = None;
    let result = train_with::<f64, _>(&tc, data, cfg.n_hidden, |trainer, outcome| {
        let wall = clock.elapsed().as_secs_f64();
        let epoch = outcome.metrics.epoch;
        let step = (|| -> CliResult<()> {
            metrics.record("epoch", &outcome.metrics)?;
            timing.record("epoch", json!({ "epoch": epoch, "wall_seconds": wall, "clamped": outcome.clamped }))?;
            if every > 0 && epoch % every as u64 == 0 {
                let path = dir.join(report::CHECKPOINT_DIR).join(format!("epoch-{epoch:04}.bin"));
                Checkpoint::new(trainer.params(), trainer.thermo()).save(&path)?;
            }
            Ok(())
        })();
        clock = Instant::now();
        step.map_err(|e| {
            let msg = e.message.clone();
            io_error = Some(e);
            thermorbm::Error::InvalidArgument(msg)
        })
    });
    let result = match (result, io_error) {
        (_, Some(e)) => return Err(e),
        (r, None) => r?,
    };
    Checkpoint::new(&result.params, &result.thermo).save(&dir.join(report::CHECKPOINT_FILE))?;
    let next = temperature(&result.thermo, tc.macro_scale, tc.temperature_mode)?;
    let eval_t = result.metrics.last().map_or(next, |m| m.temperature);
    metrics.record(
        "summary",
        json!({
            "epochs": result.metrics.len(),
            "eval_temperature": eval_t,
            "next_temperature": next,
            "lambda": result.thermo.lambda,
            "reference": result.thermo.reference,
            "cesaro_gap": result.thermo.cesaro_gap,
            "clamp_events": result.clamp_events,
            "theta_norm": result.params.theta_norm(),
        }),
    )?;
    Ok(())
}

/// Evaluation temperature, its provenance, and the configuration to record.
fn resolve_temperature(src: &TemperatureSource) -> CliResult<(f64, Value, Option<Resolved>)> {
    let config = match &src.config {
        Some(p) => Some(Resolved::resolve(&FileConfig::load(p)?, &Overrides::default())?),
        None => None,
    };
    if let Some(t) = src.temperature {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::new("usage", format!("temperature must be positive, got {t}")));
        }
        return Ok((t, json!({ "kind": "flag" }), config));
    }
    let Some(path) = &src.metrics else {
        return Err(CliError::new("usage", "pass --temperature or --metrics"));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("missing_file", format!("{}: {e}", path.display())))?;
    let records: Vec<Value> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()?;
    let find = |kind: &str| records.iter().find(|r| r["record"] == kind);
    let summary = find("summary")
        .ok_or_else(|| CliError::new("schema", format!("{}: no summary record", path.display())))?;
    let t = summary["eval_temperature"]
        .as_f64()
        .ok_or_else(|| CliError::new("schema", "summary.eval_temperature missing or not a number"))?;
    let recorded = find("header")
        .and_then(|h| serde_json::from_value::<Resolved>(h["meta"]["config"].clone()).ok());
    Ok((t, json!({ "kind": "metrics", "path": path }), config.or(recorded)))
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(CliError::new("missing_file", format!("{}: not found", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

fn samples_value(samples: &BinaryMatrix, t: f64, steps: usize) -> Value {
    let rows: Vec<String> = samples
        .iter_rows()
        .map(|r| r.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect())
        .collect();
    json!({ "temperature": t, "steps": steps, "n": samples.rows(), "n_visible": samples.cols(), "rows": rows })
}

fn or_null<T: serde::Serialize>(r: thermorbm::Result<T>) -> Value {
    match r {
        Ok(v) => json!(v),
        Err(e) => json!({ "unavailable": e.to_string() }),
    }
}

pub fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let (t, source, config) = resolve_temperature(&args.source)?;
    let (test, desc) = args.data.load(Split::Test)?;
    if test.cols() != ck.params.n_visible() {
        return Err(CliError::new(
            "schema",
            format!("dataset has {} columns, checkpoint has {} visible units", test.cols(), ck.params.n_visible()),
        ));
    }
    report::ensure_dir(&args.out_dir)?;
    let p = &ck.params;
    let m = meta("evaluate", args.seed, config.as_ref());

    let ais = ais_log_z(p, t, args.ais_chains, args.ais_temps, args.seed)?;
    let ll = test_log_likelihood(p, t, ais.log_z_estimate, &test)?;
    let ais_report = report::report(
        "ais",
        m.clone(),
        json!({
            "temperature": t,
            "temperature_source": source,
            "checkpoint": args.checkpoint,
            "dataset": desc,
            "schedule": "linear in beta on the coupling term, one block Gibbs sweep per intermediate distribution",
            "base": "couplings removed, visible and hidden biases kept",
            "log_z_estimate": ais.log_z_estimate,
            "base_log_z": ais.base_log_z,
            "ess": ais.ess,
            "log_ess": ais.ess.ln(),
            "log_weight_variance": ais.log_weight_variance,
            "n_chains": ais.n_chains,
            "n_temps": ais.n_temps,
            "log_weights": ais.log_weights,
            "test_log_likelihood": ll,
        }),
    )?;
    report::write_json(&args.out_dir.join(report::AIS_REPORT), &ais_report)?;

    let samples = sample_model(p, t, args.samples, args.sample_steps, args.seed)?;
    let recon = test.iter_rows().map(|v| reconstruct(p, t, v).map(|r| r.1)).collect::<thermorbm::Result<Vec<f64>>>()?;
    let mut rng = stream(args.seed, Purpose::Evaluation, args.samples as u64, 2);
    let trace = run_chain(
        p,
        t,
        &ChainState::zeros(p.n_visible(), p.n_hidden()),
        args.sample_steps.max(10),
        &mut rng,
    )?;
    let diag = report::report(
        "diagnostics",
        m.clone(),
        json!({
            "temperature": t,
            "temperature_source": source,
            "checkpoint": args.checkpoint,
            "dataset": desc,
            "test_log_likelihood": ll,
            "pseudo_likelihood": pseudo_likelihood(p, t, &test, args.seed)?,
            "recon_mse": recon.iter().sum::<f64>() / recon.len() as f64,
            "beta": beta_diagnostics(p, t)?,
            "samples": { "n": args.samples, "steps": args.sample_steps },
            "pixel_entropy": or_null(pixel_entropy(&samples)),
            "pixel_entropy_unit": "nats",
            "hamming_diversity": or_null(hamming_diversity(&samples)),
            "mean_pairwise_l2": or_null(mean_pairwise_l2(&samples)),
            "mean_distance_to_mean": or_null(mean_distance_to_mean(&samples)),
            "autocorrelation": or_null(autocorrelation(&trace.energies[1..])),
            "autocorrelation_series": "per-step joint energy of one chain started at zero",
            "iat_convention": "tau = 1/2 + sum_k rho_k, initial positive sequence; ess = N / (2 tau)",
        }),
    )?;
    report::write_json(&args.out_dir.join(report::DIAGNOSTICS_REPORT), &diag)?;
    let dump = report::report("samples", m, samples_value(&samples, t, args.sample_steps))?;
    report::write_json(&args.out_dir.join(report::SAMPLES_FILE), &dump)
}

pub fn sample(args: SampleArgs) -> CliResult<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let (t, source, config) = resolve_temperature(&args.source)?;
    report::ensure_dir(&args.out_dir)?;
    let samples = sample_model(&ck.params, t, args.n, args.steps, args.seed)?;
    let mut body = samples_value(&samples, t, args.steps);
    body["temperature_source"] = source;
    body["checkpoint"] = json!(args.checkpoint);
    let out = report::report("samples", meta("sample", args.seed, config.as_ref()), body)?;
    report::write_json(&args.out_dir.join(report::SAMPLES_FILE), &out)
}

pub fn stability(args: StabilityArgs) -> CliResult<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = Resolved::resolve(&file, &Overrides::default())?;
    let lambda = args.lambda.unwrap_or(ck.thermo.lambda);
    let s = estimate_flip_sensitivity(&ck.params, lambda, args.delta, args.chains, args.steps, args.seed)?;
    let r = StabilityReport::new(cfg.phi, cfg.eta_lambda, cfg.alpha, lambda, &s)?;
    let mut body = serde_json::to_value(&r)?;
    body["delta"] = json!(args.delta);
    body["chains"] = json!(args.chains);
    body["steps"] = json!(args.steps);
    body["checkpoint"] = json!(args.checkpoint);
    report::ensure_dir(&args.out_dir)?;
    let out = report::report("stability", meta("stability", args.seed, Some(&cfg)), body)?;
    report::write_json(&args.out_dir.join(report::STABILITY_REPORT), &out)
}

fn lookup<'a>(v: &'a Value, dotted: &str) -> Option<&'a Value> {
    dotted.split('.').try_fold(v, |cur, key| cur.get(key))
}

fn group_values(files: &[PathBuf], field: &str, log: bool) -> CliResult<Vec<f64>> {
    files
        .iter()
        .map(|f| {
            let v = report::read_json(f)?;
            let x = lookup(&v, field)
                .and_then(Value::as_f64)
                .ok_or_else(|| CliError::new("schema", format!("{}: field `{field}` missing or not a number", f.display())))?;
            if log {
                if x <= 0.0 {
                    return Err(CliError::new("schema", format!("{}: `{field}` = {x} has no logarithm", f.display())));
                }
                Ok(x.ln())
            } else {
                Ok(x)
            }
        })
        .collect()
}

pub fn compare(args: CompareArgs) -> CliResult<()> {
    let a = group_values(&args.a, &args.field, args.log)?;
    let b = group_values(&args.b, &args.field, args.log)?;
    let boot = bayesian_bootstrap(&a, &b, args.draws, args.rope, args.seed)?;
    report::ensure_dir(&args.out_dir)?;
    let out = report::report(
        "comparison",
        meta("compare", args.seed, None),
        json!({
            "field": args.field,
            "log": args.log,
            "pairing": "unpaired",
            "a_files": args.a,
            "b_files": args.b,
            "a_values": a,
            "b_values": b,
            "cohens_d": or_null(cohens_d(&a, &b)),
            "bootstrap": boot,
        }),
    )?;
    report::write_json(&args.out_dir.join(report::COMPARISON_REPORT), &out)
}

struct Check {
    name: String,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn check(name: impl Into<String>, value: f64, tolerance: f64) -> Check {
    Check {
        name: name.into(),
        value,
        tolerance,
        pass: value.is_finite() && value <= tolerance,
    }
}

fn fixture(n_v: usize, n_h: usize, seed: u64) -> CliResult<Rbm> {
    use rand::Rng;
    let mut rng = stream(seed, Purpose::Misc, n_v as u64, n_h as u64);
    let mut p = Rbm::random_normal(n_v, n_h, 1.0, &mut rng)?;
    p.visible_bias_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    p.hidden_bias_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    Ok(p)
}

fn oracle_checks(seed: u64) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    let t = 1.0;
    for (n_v, n_h) in [(2usize, 2usize), (3, 2)] {
        let tag = format!("{n_v}+{n_h}");
        let p = fixture(n_v, n_h, seed)?;
        let log_z = enumerate_log_z(&p, t)?;

        let per_v: Vec<f64> = (0..1usize << n_v)
            .map(|v| {
                let bits: Vec<u8> = (0..n_v).map(|i| ((v >> i) & 1) as u8).collect();
                log_marginal_unnormalized(&p, t, &bits)
            })
            .collect::<thermorbm::Result<_>>()?;
        let mx = per_v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let via_visible = mx + per_v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
        out.push(check(format!("{tag} log Z: joint vs visible-marginal sums"), (log_z - via_visible).abs(), 1e-10));

        let pi = stationary_distribution(&p, t)?;
        for kind in [KernelKind::HiddenHalfStep, KernelKind::VisibleHalfStep, KernelKind::FullAlternating] {
            let k = block_gibbs_transition_matrix(&p, t, kind)?;
            out.push(check(format!("{tag} {kind:?} kernel leaves π invariant"), stationarity_defect(&k, &pi), 1e-10));
            if n_v + n_h <= 4 && kind != KernelKind::FullAlternating {
                let gap = spectral_gap(&k, &pi)?;
                let phi = conductance(&k, &pi)?;
                let excess = (phi * phi / 2.0 - gap).max(gap - 2.0 * phi).max(0.0);
                out.push(check(format!("{tag} {kind:?} Cheeger sandwich excess"), excess, 1e-10));
            }
        }
        let helm = helmholtz_functional(&pi, &p, t)?;
        out.push(check(format!("{tag} Helmholtz functional at π equals −T log Z"), (helm + t * log_z).abs(), 1e-10));

        let ais = ais_log_z(&p, t, 1000, 1000, seed)?;
        out.push(check(format!("{tag} AIS log Z error"), (ais.log_z_estimate - log_z).abs(), 0.05));

        let data = BinaryMatrix::new(1, n_v, (0..n_v).map(|i| (i % 2) as u8).collect())?;
        let g = positive_phase(&p, t, &data)?;
        let h = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..p.weights().len() {
            let bump = |d: f64| -> thermorbm::Result<f64> {
                let mut q = p.clone();
                q.weights_mut()[k] += d;
                free_energy(&q, t, data.row(0))
            };
            let fd = -(bump(h)? - bump(-h)?) / (2.0 * h);
            worst = worst.max((fd - g.dw[k]).abs());
        }
        out.push(check(format!("{tag} positive phase vs finite differences"), worst, 1e-6));
    }
    Ok(out)
}

pub fn oracle(args: OracleArgs) -> CliResult<()> {
    let checks = oracle_checks(args.seed)?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    let rows: Vec<Value> = checks
        .iter()
        .map(|c| json!({ "name": c.name, "value": c.value, "tolerance": c.tolerance, "pass": c.pass }))
        .collect();
    report::ensure_dir(&args.out_dir)?;
    let out = report::report(
        "oracle",
        meta("oracle", args.seed, None),
        json!({ "checks": rows, "passed": checks.len() - failed, "failed": failed }),
    )?;
    report::write_json(&args.out_dir.join(report::ORACLE_REPORT), &out)?;
    for c in &checks {
        println!("{} {} ({:.3e} ≤ {:.0e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    if failed > 0 {
        return Err(CliError::new("oracle", format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
