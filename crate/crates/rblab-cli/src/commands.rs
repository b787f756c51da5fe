//! One function per subcommand; each returns a one-line summary.

use std::path::Path;

use rblab::decaylab::{m_mix, mean_diamond_distance, verify_nonuniform_bound, verify_subset_bound, verify_uniform_bound, DELTA_MAX};
use rblab::filterrb::{filtered_data, filtered_samples, haar_fourth_moment, xeb_monte_carlo, Estimate, FilterSpec, FilteredRow, XebModel};
use rblab::fit::{fit_exponential, fit_exponential_offset};
use rblab::gaugelab::{
    cp_violation_scan, decay_vs_fidelity_example, depolarizing_gauge, fidelity_decomposition, violation_interval, CpRow,
};
use rblab::polefind::{
    asymptotic_cond, cond2, esprit, hausdorff, median, noisy_recovery_study, sampling_complexity, synth_signal, to_complex,
    PoleFamily, StudyRow,
};
use rblab::rbsim::{run_rb, EndGate, RbDataset, Schedule};
use rblab::superop::SuperOp;
use serde::Serialize;
use serde_json::json;
use twofloat::TwoFloat;

use crate::config::{ExperimentConfig, NoiseModel, ProtocolKind};
use crate::error::{numeric, CliError};
use crate::run::RunDir;

fn check_delta(cfg: &rblab::rbsim::RbConfig) -> Result<f64, CliError> {
    Ok(mean_diamond_distance(&cfg.phi).map_err(numeric)?.delta)
}

pub fn simulate(cfg: &ExperimentConfig, run: &RunDir, strict: bool) -> Result<String, CliError> {
    let group = cfg.build_group()?;
    let rb = cfg.rb_config(&group)?;
    let mut data = run_rb(&rb).map_err(numeric)?;
    data.config_hash = Some(run.config_hash.clone());
    data.write_csv(&run.file("dataset.csv")).map_err(numeric)?;
    data.write_sidecar(&run.file("dataset.json")).map_err(numeric)?;
    run.write_sidecar("dataset.csv", &["povm_index", "m", "g_end", "p_hat", "shots", "sequences"], data.rows.len())?;
    let series = data.series(0);
    let mut summary = format!("simulated {} rows", data.rows.len());
    if series.len() >= 3 {
        let ms: Vec<usize> = series.iter().map(|x| x.0).collect();
        let ys: Vec<f64> = series.iter().map(|x| x.1).collect();
        let fit = fit_exponential_offset(&ms, &ys);
        run.write_json("fit.json", &fit)?;
        summary = format!("{summary}; fitted decay rate {:.6}", fit.rate);
    }
    if strict {
        let delta = check_delta(&rb)?;
        if delta > DELTA_MAX {
            return Err(CliError::Hypothesis(format!("mean diamond distance {delta:.4e} exceeds 1/9")));
        }
    }
    Ok(summary)
}

pub fn verify_decay(cfg: &ExperimentConfig, run: &RunDir, strict: bool) -> Result<String, CliError> {
    let group = cfg.build_group()?;
    let rb = cfg.rb_config(&group)?;
    let lengths = &cfg.protocol.lengths;
    let report = match cfg.protocol.kind {
        ProtocolKind::Uniform => verify_uniform_bound(&rb, 0, lengths),
        ProtocolKind::Approximate => verify_nonuniform_bound(&rb, 0, lengths),
        ProtocolKind::Subset => {
            let Schedule::Shared(nu) = &rb.schedule else { unreachable!("subset sampling is shared") };
            let k = m_mix(nu, cfg.protocol.delta_prime.unwrap_or(0.01), &group.group).map_err(numeric)?.max(1);
            let usable: Vec<usize> = lengths.iter().copied().filter(|&m| m >= k).collect();
            if usable.is_empty() {
                return Err(CliError::Schema(format!("`protocol.lengths`: no length reaches m_mix = {k}")));
            }
            verify_subset_bound(&rb, 0, k, &usable)
        }
        other => return Err(CliError::Schema(format!("`protocol.kind`: verify-decay does not support {other:?}"))),
    }
    .map_err(numeric)?;
    report.write_csv(&run.file("bound.csv")).map_err(numeric)?;
    run.write_sidecar("bound.csv", &["m", "p_exact", "p_model", "residual", "bound", "pass"], report.rows.len())?;
    run.write_json(
        "report.json",
        &json!({
            "kind": report.kind,
            "delta": report.delta,
            "delta_prime": report.delta_prime,
            "hypothesis_ok": report.hypothesis_ok,
            "m_mix": report.m_mix,
            "epsilon": report.epsilon,
            "consistency": report.consistency,
            "all_pass": report.all_pass(),
        }),
    )?;
    let failing = report.rows.iter().filter(|r| !r.pass).count();
    let summary = format!(
        "{} bound: delta = {:.4e}, hypothesis {}, {}/{} rows within bound",
        report.kind,
        report.delta,
        if report.hypothesis_ok { "holds" } else { "violated" },
        report.rows.len() - failing,
        report.rows.len()
    );
    if strict && (!report.hypothesis_ok || failing > 0) {
        return Err(CliError::Hypothesis(summary));
    }
    Ok(summary)
}

#[derive(Serialize)]
struct RecoveryRow {
    family: String,
    n: usize,
    m: usize,
    l: usize,
    hausdorff: f64,
}

#[derive(Serialize)]
struct PoleRow {
    source: String,
    n: usize,
    index: usize,
    re: f64,
    im: f64,
}

fn hankel_l(cfg: &ExperimentConfig, m: usize) -> usize {
    cfg.poles.l.unwrap_or(m / 2)
}

/// ESPRIT on exact data in double-double precision, or on a recorded dataset.
pub fn extract_poles(cfg: &ExperimentConfig, run: &RunDir, input: Option<&Path>, povm: usize) -> Result<String, CliError> {
    let p = &cfg.poles;
    let mut poles = Vec::new();
    if let Some(csv_path) = input {
        let side = csv_path.with_extension("json");
        let data = RbDataset::read(csv_path, &side).map_err(|e| CliError::Schema(format!("{}: {e}", csv_path.display())))?;
        let series = data.series(povm);
        if series.is_empty() || series.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
            return Err(CliError::Schema("input lengths must be consecutive integers".into()));
        }
        let ys: Vec<f64> = series.iter().map(|x| x.1).collect();
        let l = hankel_l(cfg, ys.len() - 1);
        let mut out = Vec::new();
        for &n in &p.n {
            let set = esprit(&ys, l, n).map_err(numeric)?;
            for (i, z) in set.poles.iter().enumerate() {
                poles.push(PoleRow { source: csv_path.display().to_string(), n, index: i, re: z.re, im: z.im });
            }
            out.push(format!("n={n}: {:?}", set.poles.iter().map(|z| format!("{:.6}", z.re)).collect::<Vec<_>>()));
        }
        run.write_csv("poles.csv", &poles, &["source", "n", "index", "re", "im"])?;
        return Ok(format!("extracted poles from {} samples; {}", ys.len(), out.join("; ")));
    }
    let mut rows = Vec::new();
    for fam in &p.families {
        let family = PoleFamily::parse(fam).map_err(|e| CliError::Schema(format!("`poles.families`: {e}")))?;
        for &n in &p.n {
            let l = hankel_l(cfg, p.m);
            let z: Vec<TwoFloat> = family.poles::<TwoFloat>(n);
            let a = vec![TwoFloat::from(1.0) / TwoFloat::from(n as f64); n];
            let y = synth_signal(&z, &a, p.m);
            let set = esprit(&y, l, n).map_err(numeric)?;
            let truth = to_complex(&family.poles::<f64>(n));
            let h = hausdorff(&set.poles, &truth);
            for (i, z) in set.poles.iter().enumerate() {
                poles.push(PoleRow { source: family.name(), n, index: i, re: z.re, im: z.im });
            }
            rows.push(RecoveryRow { family: family.name(), n, m: p.m, l, hausdorff: h });
        }
    }
    run.write_csv("recovery.csv", &rows, &["family", "n", "m", "l", "hausdorff"])?;
    run.write_csv("poles.csv", &poles, &["source", "n", "index", "re", "im"])?;
    let worst = rows.iter().map(|r| r.hausdorff).fold(0.0, f64::max);
    Ok(format!("exact recovery of {} pole sets; worst Hausdorff distance {worst:.3e}", rows.len()))
}

#[derive(Serialize)]
struct CondRow {
    family: String,
    n: usize,
    m: usize,
    cond2: f64,
    asymptotic: f64,
    samples_needed: u64,
}

#[derive(Serialize)]
struct MedianRow {
    family: String,
    n: usize,
    shots: u64,
    trials: usize,
    median_hausdorff: f64,
}

pub fn conditioning_study(cfg: &ExperimentConfig, run: &RunDir) -> Result<String, CliError> {
    let p = &cfg.poles;
    let mut rows = Vec::new();
    for fam in &p.families {
        let family = PoleFamily::parse(fam).map_err(|e| CliError::Schema(format!("`poles.families`: {e}")))?;
        for &n in &p.n {
            let z = to_complex(&family.poles::<f64>(n));
            let asym = asymptotic_cond(&z).unwrap_or(f64::INFINITY);
            for &m in &p.cond_lengths {
                let samples_needed = sampling_complexity(&z, m, 0.25, 0.05, 0.1).unwrap_or(u64::MAX);
                rows.push(CondRow { family: family.name(), n, m, cond2: cond2(&z, m), asymptotic: asym, samples_needed });
            }
        }
    }
    run.write_csv("conditioning.csv", &rows, &["family", "n", "m", "cond2", "asymptotic", "samples_needed"])?;
    let mut trials: Vec<StudyRow> = Vec::new();
    let mut medians = Vec::new();
    for fam in &p.families {
        let family = PoleFamily::parse(fam).map_err(|e| CliError::Schema(format!("`poles.families`: {e}")))?;
        for &n in &p.n {
            for &shots in &p.shots {
                let study = noisy_recovery_study(family, n, p.m, hankel_l(cfg, p.m), shots, p.trials, cfg.seed);
                let h: Vec<f64> = study.iter().map(|r| r.hausdorff).collect();
                medians.push(MedianRow { family: family.name(), n, shots, trials: p.trials, median_hausdorff: median(&h) });
                trials.extend(study);
            }
        }
    }
    if !p.shots.is_empty() {
        run.write_csv("study.csv", &trials, &["family", "n", "l", "shots", "trial", "hausdorff"])?;
        run.write_csv("study_summary.csv", &medians, &["family", "n", "shots", "trials", "median_hausdorff"])?;
    }
    Ok(format!("{} conditioning rows, {} noisy-recovery trials", rows.len(), trials.len()))
}

#[derive(Serialize)]
struct FitRow {
    lambda: String,
    rate_exact: f64,
    amplitude_exact: f64,
    rate_estimated: Option<f64>,
}

pub fn filter(cfg: &ExperimentConfig, run: &RunDir) -> Result<String, CliError> {
    let group = cfg.build_group()?;
    let mut rb = cfg.rb_config(&group)?;
    rb.end_gate = EndGate::Uniform;
    let labels: Vec<String> = match &cfg.protocol.irreps {
        Some(l) => l.clone(),
        None => group.catalog.present().filter(|i| i.label != "trivial").map(|i| i.label.clone()).collect(),
    };
    let specs = labels
        .iter()
        .map(|l| FilterSpec::new(group.clone(), l, &rb.rho0, &rb.povm).map_err(|e| CliError::Schema(format!("`protocol.irreps`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let lengths = &cfg.protocol.lengths;
    let exact: Vec<Vec<f64>> = specs.iter().map(|s| filtered_data(s, &rb, lengths)).collect::<Result<_, _>>().map_err(numeric)?;
    let refs: Vec<&FilterSpec> = specs.iter().collect();
    let samples = cfg.protocol.samples;
    let mut est: Vec<Vec<f64>> = vec![Vec::new(); specs.len()];
    for &m in lengths {
        let per = filtered_samples(&refs, &rb, m, samples, cfg.seed).map_err(numeric)?;
        for (j, e) in est.iter_mut().enumerate() {
            e.push(Estimate::from_samples(&per.iter().map(|r| r[j]).collect::<Vec<_>>()).mean);
        }
    }
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (j, label) in labels.iter().enumerate() {
        for (k, &m) in lengths.iter().enumerate() {
            rows.push(FilteredRow { lambda: label.clone(), m, k_hat: est[j][k], k_exact: exact[j][k], n_samples: samples });
        }
        let fe = fit_exponential(lengths, &exact[j]);
        let rate_estimated = (lengths.len() >= 2).then(|| fit_exponential(lengths, &est[j]).rate);
        fits.push(FitRow { lambda: label.clone(), rate_exact: fe.rate, amplitude_exact: fe.amplitude, rate_estimated });
    }
    run.write_csv("filtered.csv", &rows, &["lambda", "m", "k_hat", "k_exact", "n_samples"])?;
    run.write_csv("filter_fits.csv", &fits, &["lambda", "rate_exact", "amplitude_exact", "rate_estimated"])?;
    let desc: Vec<String> = fits.iter().map(|f| format!("{}: {:.6}", f.lambda, f.rate_exact)).collect();
    Ok(format!("filtered decay rates {}", desc.join(", ")))
}

#[derive(Serialize)]
struct DecompRow {
    label: String,
    irrep_dim: usize,
    rate_re: f64,
    rate_im: f64,
    overlap_re: f64,
    overlap_im: f64,
    dominant_term: f64,
    residual: f64,
    residual_scale: f64,
    regime: String,
}

#[derive(Serialize)]
struct LeakRow {
    m: usize,
    p: f64,
}

pub fn gauge_report(cfg: &ExperimentConfig, run: &RunDir) -> Result<String, CliError> {
    if cfg.noise.model == NoiseModel::Leak {
        let l = cfg.noise.levels.ok_or_else(|| CliError::Schema("`noise.levels`: required for leak".into()))?;
        let mu = cfg.noise.mu.ok_or_else(|| CliError::Schema("`noise.mu`: required for leak".into()))?;
        let ex = decay_vs_fidelity_example(cfg.group.qubits, l, mu, &cfg.protocol.lengths, cfg.protocol.samples, cfg.seed)
            .map_err(|e| CliError::Schema(e.to_string()))?;
        let rows: Vec<LeakRow> = ex.lengths.iter().zip(&ex.decay).map(|(&m, &p)| LeakRow { m, p }).collect();
        run.write_csv("leak_decay.csv", &rows, &["m", "p"])?;
        run.write_json(
            "leak.json",
            &json!({
                "d": ex.d, "levels": ex.l, "mu": ex.mu,
                "entanglement_fidelity": ex.entanglement_fidelity,
                "avg_fidelity": ex.avg_fidelity,
                "avg_fidelity_mc": ex.avg_fidelity_mc,
                "avg_fidelity_mc_stderr": ex.avg_fidelity_mc_stderr,
                "reference_level": ex.reference_level,
                "nonexponentiality": ex.nonexponentiality,
            }),
        )?;
        return Ok(format!(
            "leak example: average fidelity {:.5} (reference {:.3}), log-linear residual {:.3}",
            ex.avg_fidelity, ex.reference_level, ex.nonexponentiality
        ));
    }
    let group = cfg.build_group()?;
    let phi = cfg.build_phi(&group)?;
    let mut report = serde_json::Map::new();
    match depolarizing_gauge(&phi) {
        Ok(g) => {
            let t = g.transformed(&phi);
            let min_choi = t.maps.iter().map(SuperOp::min_choi_eigenvalue).fold(f64::INFINITY, f64::min);
            report.insert(
                "gauge".into(),
                json!({
                    "labels": g.labels,
                    "rates": g.rates.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                    "depolarizing_entanglement_fidelity": g.depolarizing_entanglement_fidelity(),
                    "depolarizing_avg_fidelity": g.depolarizing_avg_fidelity(),
                    "gauge_avg_fidelity": g.gauge_avg_fidelity(&phi),
                    "relation_defect": g.relation_defect(&phi),
                    "min_choi_in_gauge": min_choi,
                }),
            );
        }
        Err(e) => {
            report.insert("gauge_error".into(), json!(e.to_string()));
        }
    }
    let dec = fidelity_decomposition(&phi, None).map_err(numeric)?;
    let rows: Vec<DecompRow> = dec
        .terms
        .iter()
        .map(|t| DecompRow {
            label: t.label.clone(),
            irrep_dim: t.irrep_dim,
            rate_re: t.rate.re,
            rate_im: t.rate.im,
            overlap_re: t.overlap.re,
            overlap_im: t.overlap.im,
            dominant_term: t.dominant_term,
            residual: t.residual,
            residual_scale: t.residual_scale,
            regime: format!("{:?}", t.regime),
        })
        .collect();
    run.write_csv(
        "decomposition.csv",
        &rows,
        &["label", "irrep_dim", "rate_re", "rate_im", "overlap_re", "overlap_im", "dominant_term", "residual", "residual_scale", "regime"],
    )?;
    report.insert("dominant_total".into(), json!(dec.dominant_total));
    report.insert("alpha_res".into(), json!(dec.alpha_res));
    report.insert("direct_average_entanglement_fidelity".into(), json!(dec.direct));
    if cfg.noise.model == NoiseModel::Counterexample {
        let alphas: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        let gammas = [0.0, 0.5, 1.0];
        let scan: Vec<CpRow> = cp_violation_scan(group.clone(), &alphas, &gammas).map_err(numeric)?;
        run.write_csv("cp_scan.csv", &scan, &["alpha", "gamma", "min_choi_phi", "min_choi_gauge"])?;
        let intervals: Vec<_> = gammas.iter().map(|&g| json!({"gamma": g, "alpha_interval": violation_interval(&scan, g, 1e-9)})).collect();
        report.insert("cp_violation".into(), json!(intervals));
    }
    run.write_json("gauge.json", &report)?;
    Ok(format!(
        "average entanglement fidelity {:.6} = dominant {:.6} + residual {:.2e}",
        dec.direct, dec.dominant_total, dec.alpha_res
    ))
}

#[derive(Serialize)]
struct XebRow {
    m: usize,
    exact: f64,
    estimate: f64,
    std_err: f64,
}

pub fn xeb(cfg: &ExperimentConfig, run: &RunDir) -> Result<String, CliError> {
    if cfg.group.qubits > 4 {
        return Err(CliError::Schema("`group.qubits`: XEB simulation supports at most 4 qubits".into()));
    }
    let noise = cfg.noise_channel()?;
    let model = XebModel::new(&noise);
    let lengths = &cfg.protocol.lengths;
    let samples = cfg.protocol.samples;
    let rows: Vec<XebRow> = lengths
        .iter()
        .map(|&m| {
            let e = xeb_monte_carlo(&noise, m, samples, cfg.seed.wrapping_add(m as u64));
            XebRow { m, exact: model.value(m), estimate: e.mean, std_err: e.std_err }
        })
        .collect();
    run.write_csv("xeb.csv", &rows, &["m", "exact", "estimate", "std_err"])?;
    let d = noise.dim();
    let norm = haar_fourth_moment(d, samples, cfg.seed);
    let fit = (lengths.len() >= 3).then(|| fit_exponential_offset(lengths, &rows.iter().map(|r| r.exact).collect::<Vec<_>>()));
    run.write_json(
        "xeb.json",
        &json!({
            "d": d,
            "model": model,
            "fit": fit,
            "normalization_estimate": norm.mean,
            "normalization_std_err": norm.std_err,
            "normalization_exact": 2.0 * d as f64 / (d as f64 + 1.0),
        }),
    )?;
    Ok(format!(
        "XEB adjoint rate {:.6}; normalization {:.4} (exact {:.4})",
        model.f_adjoint,
        norm.mean,
        2.0 * d as f64 / (d as f64 + 1.0)
    ))
}
