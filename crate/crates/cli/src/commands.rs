use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use bcla::baselines::{
    aggregate, aggregate_mean, aggregate_median, best_annotator, Extras, Method,
};
use bcla::data::{
    load_annotations, load_annotator_params, load_features, load_reference, save_annotations,
    save_simulation_truth, simulate, SimulationTruth,
};
use bcla::evaluation::{
    annotator_sweep, bootstrap_metrics, bootstrap_refit, pairwise_tests, recovery_from_estimates,
    residuals, BootstrapReport, Metric, MetricSample, RecoveryReport,
};
use bcla::gevd::CapSource;
use bcla::{AnnotationTable, EmTrace, Error, FeatureTable, Hyperparameters, ModelState, Result};

use crate::config::RunConfig;

const UNSUPERVISED: [Method; 4] = [Method::Mean, Method::Median, Method::EmR, Method::Bcla];

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

#[derive(Serialize)]
struct GevdInfo {
    k: f64,
    vartheta: f64,
    mu: f64,
}

#[derive(Serialize)]
struct CapInfo {
    lambda_max: f64,
    source: &'static str,
    block_size: usize,
    n_blocks: usize,
    gevd: Option<GevdInfo>,
}

impl CapInfo {
    fn new(hp: &Hyperparameters) -> Self {
        let c = &hp.cap;
        Self {
            lambda_max: c.lambda_max,
            source: match c.source {
                CapSource::Fitted => "gevd_fit",
                CapSource::EmpiricalFallback => "empirical_fallback",
                CapSource::Fixed => "fixed",
            },
            block_size: c.block_size,
            n_blocks: c.n_blocks,
            gevd: c.params.map(|p| GevdInfo {
                k: p.k,
                vartheta: p.vartheta,
                mu: p.mu,
            }),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: BTreeMap<&'static str, String>,
    precision_cap: Option<CapInfo>,
    outputs: Vec<String>,
}

fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    hp: Option<&Hyperparameters>,
    outputs: &[PathBuf],
) -> Result<()> {
    let manifest = Manifest {
        tool: "bcla",
        version: bcla_version(),
        command,
        config: cfg.pairs(),
        precision_cap: hp.map(CapInfo::new),
        outputs: outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map_or_else(String::new, |f| f.to_string_lossy().into())
            })
            .collect(),
    };
    // The unsuffixed copy always describes the latest command; the
    // per-command copy survives later commands in the same directory.
    let body = to_json(&manifest) + "\n";
    write_file(&cfg.out.join(format!("run_manifest_{command}.json")), &body)?;
    write_file(&cfg.out.join("run_manifest.json"), &body)
}

fn bcla_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

fn load_inputs(cfg: &RunConfig) -> Result<(AnnotationTable, FeatureTable)> {
    let data = load_annotations(cfg.annotations_path())?;
    let feats = match &cfg.features {
        Some(p) => load_features(p, data.record_ids(), cfg.intercept)?,
        None => FeatureTable::intercept_only(data.n_records()),
    };
    info!(
        "{} records x {} annotators, {} annotations",
        data.n_records(),
        data.n_annotators(),
        data.n_observed()
    );
    Ok((data, feats))
}

fn load_required_reference(
    cfg: &RunConfig,
    data: &AnnotationTable,
    what: &str,
) -> Result<Vec<Option<f64>>> {
    let path = cfg
        .reference_path()
        .ok_or_else(|| Error::NoReference(format!("{what} (pass --reference or --truth)")))?;
    let reference = load_reference(&path, data.record_ids())?;
    if reference.iter().all(Option::is_none) {
        return Err(Error::NoReference(format!(
            "{what}: {} matches none of the annotated records",
            path.display()
        )));
    }
    Ok(reference)
}

fn needs_em(methods: &[Method]) -> bool {
    methods
        .iter()
        .any(|m| matches!(m, Method::EmR | Method::Bcla))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let params = cfg.simulation_params();
    let (data, _, truth) = simulate(&params, cfg.seed)?;
    ensure_dir(&cfg.out)?;
    let annotations = cfg.out.join("annotations.csv");
    save_annotations(&data, &annotations)?;
    save_simulation_truth(&truth, &data, &cfg.out)?;
    let outputs = [
        annotations,
        cfg.out.join("truth.csv"),
        cfg.out.join("annotators_truth.csv"),
    ];
    write_manifest(cfg, "simulate", None, &outputs)?;
    println!(
        "simulated {} records x {} annotators: {} annotations -> {}",
        data.n_records(),
        data.n_annotators(),
        data.n_observed(),
        cfg.out.display()
    );
    Ok(())
}

fn estimates_csv(data: &AnnotationTable, z_hat: &[Option<f64>]) -> String {
    let mut s = String::from("record_id,z_hat_ms\n");
    for (id, z) in data.record_ids().iter().zip(z_hat) {
        if let Some(z) = z {
            let _ = writeln!(s, "{id},{z}");
        }
    }
    s
}

fn annotators_csv(data: &AnnotationTable, state: &ModelState) -> String {
    let counts = data.observed_counts();
    let mut s = String::from("annotator_id,phi_ms,sigma_ms,precision,n_annotations\n");
    for (j, id) in data.annotator_ids().iter().enumerate() {
        let l = state.lambda[j];
        let _ = writeln!(
            s,
            "{id},{},{},{l},{}",
            state.phi[j],
            1.0 / l.sqrt(),
            counts.per_annotator[j]
        );
    }
    s
}

fn trace_csv(trace: &EmTrace) -> String {
    let mut s = String::from("iteration,log_posterior,max_rel_change,clamp_events\n");
    for t in 0..trace.iterations_run {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            t + 1,
            trace.log_posterior[t],
            trace.max_rel_change[t],
            trace.clamp_events[t]
        );
    }
    s
}

/// Per-annotator output file suffix for the EM-based methods.
fn em_suffix(method: Method) -> &'static str {
    if method == Method::Bcla {
        ""
    } else {
        "_em_r"
    }
}

pub fn cmd_aggregate(cfg: &RunConfig) -> Result<()> {
    let (data, feats) = load_inputs(cfg)?;
    let methods = cfg.methods.clone().unwrap_or_else(|| UNSUPERVISED.to_vec());
    let hp = if needs_em(&methods) {
        Some(cfg.hyperparameters(data.n_annotators())?)
    } else {
        None
    };
    let reference = if methods.contains(&Method::BestAnnotator) {
        Some(load_required_reference(
            cfg,
            &data,
            "the best-annotator diagnostic",
        )?)
    } else {
        None
    };
    ensure_dir(&cfg.out)?;

    let mut outputs = Vec::new();
    for &method in &methods {
        let est = match method {
            Method::BestAnnotator => best_annotator(
                &data,
                reference.as_deref().expect("loaded above"),
                cfg.best_annotator_scoring,
            )?,
            Method::Mean => aggregate_mean(&data),
            Method::Median => aggregate_median(&data),
            Method::EmR | Method::Bcla => aggregate(
                method,
                &data,
                &feats,
                hp.as_ref().expect("derived above"),
                None,
            )?,
        };
        let body = estimates_csv(&data, &est.z_hat);
        let path = cfg.out.join(format!("estimates_{}.csv", method.name()));
        write_file(&path, &body)?;
        outputs.push(path);
        let mut summary = format!(
            "{}: {} estimates",
            method.name(),
            est.z_hat.iter().flatten().count()
        );

        match &est.extras {
            Extras::Em { state, trace } => {
                let suffix = em_suffix(method);
                if method == Method::Bcla {
                    let path = cfg.out.join("estimates.csv");
                    write_file(&path, &body)?;
                    outputs.push(path);
                }
                let path = cfg.out.join(format!("annotators{suffix}.csv"));
                write_file(&path, &annotators_csv(&data, state))?;
                outputs.push(path);
                let path = cfg.out.join(format!("trace{suffix}.csv"));
                write_file(&path, &trace_csv(trace))?;
                outputs.push(path);
                if !trace.converged {
                    warn!(
                        "{} stopped at the iteration limit ({}) before converging",
                        method.name(),
                        trace.iterations_run
                    );
                }
                let _ = write!(
                    summary,
                    ", {} iterations{}, {} clamp events",
                    trace.iterations_run,
                    if trace.converged {
                        ""
                    } else {
                        " (not converged)"
                    },
                    trace.total_clamp_events()
                );
            }
            Extras::BestAnnotator(choice) => {
                let _ = write!(summary, ", annotator {}", choice.annotator_id);
            }
            Extras::None => {}
        }
        println!("{summary}");
    }
    write_manifest(cfg, "aggregate", hp.as_ref(), &outputs)?;
    Ok(())
}

/// One method's estimates plus, for EM methods, `(phi, sigma)` per annotator.
struct MethodRun {
    method: Method,
    z_hat: Vec<Option<f64>>,
    annotators: Option<Vec<(f64, f64)>>,
    note: Option<String>,
}

fn method_note(method: Method) -> Option<String> {
    match method {
        Method::EmR => Some("bias fixed at zero, flat priors (maximum likelihood)".into()),
        _ => None,
    }
}

fn load_em_annotators(path: &Path, data: &AnnotationTable) -> Result<Option<Vec<(f64, f64)>>> {
    if !path.exists() {
        return Ok(None);
    }
    let rows = load_annotator_params(path, data.annotator_ids())?;
    Ok(rows.into_iter().collect())
}

/// Reads `estimates_<method>.csv` from the output directory when present,
/// otherwise runs the method.
fn obtain_estimates(
    cfg: &RunConfig,
    method: Method,
    data: &AnnotationTable,
    feats: &FeatureTable,
    hp: &mut Option<Hyperparameters>,
    reference: &[Option<f64>],
) -> Result<MethodRun> {
    let mut note = method_note(method);
    if method == Method::BestAnnotator {
        let est = best_annotator(data, reference, cfg.best_annotator_scoring)?;
        if let Extras::BestAnnotator(c) = &est.extras {
            note = Some(format!(
                "supervised: annotator {} chosen using the reference ({:?} labels, bias {:.3} ms)",
                c.annotator_id, c.scoring, c.bias
            ));
        }
        return Ok(MethodRun {
            method,
            z_hat: est.z_hat,
            annotators: None,
            note,
        });
    }

    let file = cfg.out.join(format!("estimates_{}.csv", method.name()));
    if file.exists() {
        info!("{}: reading {}", method.name(), file.display());
        let z_hat = load_reference(&file, data.record_ids())?;
        let annotators = match method {
            Method::EmR | Method::Bcla => load_em_annotators(
                &cfg.out.join(format!("annotators{}.csv", em_suffix(method))),
                data,
            )?,
            _ => None,
        };
        return Ok(MethodRun {
            method,
            z_hat,
            annotators,
            note,
        });
    }

    info!("{}: no estimates file, running the method", method.name());
    if hp.is_none() {
        *hp = Some(cfg.hyperparameters(data.n_annotators())?);
    }
    let est = aggregate(method, data, feats, hp.as_ref().expect("set above"), None)?;
    let annotators = match &est.extras {
        Extras::Em { state, .. } => Some(
            state
                .phi
                .iter()
                .zip(state.sigma())
                .map(|(&p, s)| (p, s))
                .collect(),
        ),
        _ => None,
    };
    Ok(MethodRun {
        method,
        z_hat: est.z_hat,
        annotators,
        note,
    })
}

#[derive(Serialize)]
struct MethodMetrics {
    method: &'static str,
    supervised: bool,
    note: Option<String>,
    n_records_used: usize,
    rmse: f64,
    mae: f64,
    mean_rmse: f64,
    sd_rmse: f64,
    mean_mae: f64,
    sd_mae: f64,
}

#[derive(Serialize)]
struct PValues {
    methods: Vec<&'static str>,
    p_value: Vec<Vec<f64>>,
    degenerate: Vec<Vec<bool>>,
}

#[derive(Serialize)]
struct RecoverySummary {
    correlation_phi: Option<f64>,
    correlation_sigma: Option<f64>,
    mean_sigma_error: f64,
}

#[derive(Serialize)]
struct Metrics {
    bootstrap: &'static str,
    n_boot: usize,
    seed: u64,
    reference: String,
    methods: Vec<MethodMetrics>,
    wilcoxon_rmse: PValues,
    wilcoxon_mae: PValues,
    recovery: BTreeMap<&'static str, RecoverySummary>,
}

fn p_values(methods: &[Method], reports: &[BootstrapReport], metric: Metric) -> Result<PValues> {
    let tests = pairwise_tests(reports, metric)?;
    Ok(PValues {
        methods: methods.iter().map(|m| m.name()).collect(),
        p_value: tests
            .iter()
            .map(|r| r.iter().map(|t| t.p_value).collect())
            .collect(),
        degenerate: tests
            .iter()
            .map(|r| r.iter().map(|t| t.degenerate).collect())
            .collect(),
    })
}

fn load_annotator_truth(
    cfg: &RunConfig,
    data: &AnnotationTable,
) -> Result<Option<SimulationTruth>> {
    let path = cfg.annotator_truth_path();
    if !path.exists() {
        return Ok(None);
    }
    let rows: Option<Vec<(f64, f64)>> = load_annotator_params(&path, data.annotator_ids())?
        .into_iter()
        .collect();
    let Some(rows) = rows else {
        warn!(
            "{} does not cover every annotator; skipping recovery",
            path.display()
        );
        return Ok(None);
    };
    Ok(Some(SimulationTruth {
        z_true: Vec::new(),
        phi_true: rows.iter().map(|r| r.0).collect(),
        sigma_true: rows.iter().map(|r| r.1).collect(),
    }))
}

fn recovery_csv(data: &AnnotationTable, report: &RecoveryReport) -> String {
    let mut s = String::from("annotator_id,phi_true,phi_hat,sigma_true,sigma_hat\n");
    for (id, a) in data.annotator_ids().iter().zip(&report.annotators) {
        let _ = writeln!(
            s,
            "{id},{},{},{},{}",
            a.phi_true, a.phi_hat, a.sigma_true, a.sigma_hat
        );
    }
    s
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let (data, feats) = load_inputs(cfg)?;
    let reference = load_required_reference(cfg, &data, "evaluation")?;
    let methods = cfg.methods.clone().unwrap_or_else(|| Method::ALL.to_vec());
    ensure_dir(&cfg.out)?;

    let mut hp = None;
    if cfg.refit {
        hp = Some(cfg.hyperparameters(data.n_annotators())?);
    }
    let mut runs = Vec::new();
    for &method in &methods {
        runs.push(obtain_estimates(
            cfg, method, &data, &feats, &mut hp, &reference,
        )?);
    }

    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for run in &runs {
        let full = MetricSample::from_residuals(&residuals(&run.z_hat, &reference)?)?;
        let report = if cfg.refit {
            let hp = hp.as_ref().expect("derived for refit");
            bootstrap_refit(
                run.method, &data, &feats, hp, &reference, cfg.n_boot, cfg.seed,
            )?
        } else {
            bootstrap_metrics(
                run.method.name(),
                &run.z_hat,
                &reference,
                cfg.n_boot,
                cfg.seed,
            )?
        };
        println!(
            "{:>15}: RMSE {:.2} +- {:.2} ms, MAE {:.2} +- {:.2} ms",
            run.method.name(),
            report.mean_rmse,
            report.sd_rmse,
            report.mean_mae,
            report.sd_mae
        );
        rows.push(MethodMetrics {
            method: run.method.name(),
            supervised: run.method.is_supervised(),
            note: run.note.clone(),
            n_records_used: full.n_records_used,
            rmse: full.rmse,
            mae: full.mae,
            mean_rmse: report.mean_rmse,
            sd_rmse: report.sd_rmse,
            mean_mae: report.mean_mae,
            sd_mae: report.sd_mae,
        });
        reports.push(report);
    }

    let mut outputs = Vec::new();
    let mut recovery = BTreeMap::new();
    if let Some(truth) = load_annotator_truth(cfg, &data)? {
        for run in &runs {
            let Some(ann) = &run.annotators else { continue };
            let phi: Vec<f64> = ann.iter().map(|a| a.0).collect();
            let sigma: Vec<f64> = ann.iter().map(|a| a.1).collect();
            let report = recovery_from_estimates(&phi, &sigma, &truth)?;
            if run.method == Method::Bcla {
                let path = cfg.out.join("recovery.csv");
                write_file(&path, &recovery_csv(&data, &report))?;
                outputs.push(path);
            }
            recovery.insert(
                run.method.name(),
                RecoverySummary {
                    correlation_phi: report.correlation_phi,
                    correlation_sigma: report.correlation_sigma,
                    mean_sigma_error: report.mean_sigma_error,
                },
            );
        }
    }

    let metrics = Metrics {
        bootstrap: if cfg.refit { "refit" } else { "residual" },
        n_boot: cfg.n_boot,
        seed: cfg.seed,
        reference: cfg
            .reference_path()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
        methods: rows,
        wilcoxon_rmse: p_values(&methods, &reports, Metric::Rmse)?,
        wilcoxon_mae: p_values(&methods, &reports, Metric::Mae)?,
        recovery,
    };
    let path = cfg.out.join("metrics.json");
    write_file(&path, &(to_json(&metrics) + "\n"))?;
    outputs.push(path);
    write_manifest(cfg, "evaluate", hp.as_ref(), &outputs)?;
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let (data, feats) = load_inputs(cfg)?;
    let reference = load_required_reference(cfg, &data, "the annotator sweep")?;
    let methods = cfg.methods.clone().unwrap_or_else(|| UNSUPERVISED.to_vec());
    let sizes = cfg
        .sizes
        .clone()
        .unwrap_or_else(|| (3..=data.n_annotators()).collect());
    let hp = cfg.hyperparameters(data.n_annotators())?;
    ensure_dir(&cfg.out)?;

    let result = annotator_sweep(
        &data, &feats, &reference, &hp, &methods, &sizes, cfg.reps, cfg.seed,
    )?;

    let mut points = String::from("method,size,rep,rmse\n");
    for p in &result.points {
        let _ = writeln!(
            points,
            "{},{},{},{}",
            p.method.name(),
            p.size,
            p.rep,
            p.rmse
        );
    }
    let mut summary = String::from("method,size,mean_rmse,sd_rmse,n_reps\n");
    for c in &result.curves {
        for (k, size) in c.annotator_counts.iter().enumerate() {
            let _ = writeln!(
                summary,
                "{},{size},{},{},{}",
                c.method.name(),
                c.mean_rmse[k],
                c.sd_rmse[k],
                c.n_repetitions
            );
        }
        println!(
            "{:>15}: RMSE {:.2} ms at {} annotators, {:.2} ms at {}",
            c.method.name(),
            c.mean_rmse[0],
            c.annotator_counts[0],
            c.mean_rmse[c.mean_rmse.len() - 1],
            c.annotator_counts[c.annotator_counts.len() - 1]
        );
    }
    let outputs = [cfg.out.join("sweep.csv"), cfg.out.join("sweep_summary.csv")];
    write_file(&outputs[0], &points)?;
    write_file(&outputs[1], &summary)?;
    write_manifest(cfg, "sweep", Some(&hp), &outputs)?;
    Ok(())
}
