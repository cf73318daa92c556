use std::fs::File;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use super::config::ExperimentConfig;
use super::{
    read_file, write_atomic, BoundsArgs, CliError, EvalArgs, Output, RegionKind, RegionsArgs,
    RunArgs, SpaceArg, SweepArgs,
};
use crate::bounds::{
    bound_report, decision_regions, lmcl_margin_width, m_scope, BoundError, BoundKind, GridSpec,
    RegionLabel, RegionLoss, RegionSpace,
};
use crate::eval::{
    rank1_identification, tar_at_far, verification_accuracy, EvalError, GalleryProbe,
    LabeledFeatures, PairSet,
};
use crate::experiments::{margin_sweep, median, toy_sweep, SeedRun};
use crate::trainer::TrainError;

fn load_config(
    a: &RunArgs,
    m_grid: Option<&Vec<f64>>,
    preset: ExperimentConfig,
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::from_json_over(&read_file(path)?, &preset)?,
        None => preset,
    };
    if let Some(seed) = a.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &a.out {
        cfg.out = out.clone();
    }
    if let Some(grid) = m_grid {
        cfg.m_grid = grid.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train_failure(e: TrainError) -> CliError {
    match e {
        TrainError::Config { field, detail } => {
            CliError::Usage(format!("invalid setting `{field}`: {detail}"))
        }
        other => CliError::Runtime(other.to_string()),
    }
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Vec<u8>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    fill(&mut w).expect("in-memory write");
    w.into_inner().expect("in-memory flush")
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report serializes");
    v.push(b'\n');
    v
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub(super) fn train(a: &RunArgs, out: &Output) -> Result<(), CliError> {
    let cfg = load_config(a, None, ExperimentConfig::toy())?;
    let spec = cfg.spec()?;
    let seed = cfg.seeds[0];
    out.say(format!(
        "training {} (s={}, m={}) with seed {seed}",
        spec.variant(),
        spec.s(),
        spec.m()
    ));
    let result = cfg.setup().run(spec, seed).map_err(train_failure)?;
    let run = &result.run;

    let trace = csv_bytes(&["epoch", "loss", "train_accuracy", "learning_rate"], |w| {
        for r in &run.trace {
            w.write_record([
                r.epoch.to_string(),
                r.loss.to_string(),
                r.train_accuracy.to_string(),
                r.learning_rate.to_string(),
            ])?;
        }
        Ok(())
    });
    let stats = csv_bytes(&["class", "count", "intra_spread", "inter_gap"], |w| {
        for c in &result.stats.per_class {
            w.write_record([
                c.class.to_string(),
                c.count.to_string(),
                fmt_opt(c.intra_spread),
                fmt_opt(c.inter_gap),
            ])?;
        }
        Ok(())
    });
    write_atomic(&cfg.out.join("trace.csv"), &trace)?;
    write_atomic(&cfg.out.join("model.json"), run.model.to_json().as_bytes())?;
    write_atomic(&cfg.out.join("angular_stats.csv"), &stats)?;

    out.say(format!(
        "loss {:.4} -> {:.4}, train accuracy {:.4}, min inter-class gap {:.4} rad",
        run.initial_loss(),
        run.final_loss(),
        run.final_accuracy(),
        result.stats.min_inter_gap
    ));
    out.say(format!(
        "wrote trace.csv, model.json, angular_stats.csv to {}",
        cfg.out.display()
    ));
    if !run.converged {
        return Err(CliError::Runtime(format!(
            "training did not converge (final loss {:.4}, first epoch {:.4})",
            run.final_loss(),
            run.initial_loss()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ToySeed {
    seed: u64,
    converged: bool,
    final_loss: f64,
    train_accuracy: f64,
    inter_gap: f64,
    intra_spread: f64,
}

#[derive(Serialize)]
struct ToyRow {
    m: f64,
    median_inter_gap: f64,
    median_intra_spread: f64,
    euclidean_csv: String,
    angular_csv: String,
    seeds: Vec<ToySeed>,
}

pub(super) fn toy2d(a: &SweepArgs, out: &Output) -> Result<(), CliError> {
    let cfg = load_config(&a.run, a.m_grid.as_ref(), ExperimentConfig::toy())?;
    if cfg.model.feature_dim != 2 {
        return Err(super::ConfigError {
            path: "model.feature_dim".into(),
            detail: format!("toy2d needs 2-D features, got {}", cfg.model.feature_dim),
        }
        .into());
    }
    out.say(format!(
        "toy2d: {} margins x {} seeds",
        cfg.m_grid.len(),
        cfg.seeds.len()
    ));
    let runs =
        toy_sweep(&cfg.setup(), cfg.loss.s, &cfg.m_grid, &cfg.seeds).map_err(train_failure)?;

    let mut rows = Vec::new();
    for (&m, seeds) in cfg.m_grid.iter().zip(&runs) {
        let euclidean = format!("features_m{m}_euclidean.csv");
        let angular = format!("features_m{m}_angular.csv");
        let (e_bytes, a_bytes) = scatter_csvs(&seeds[0]);
        write_atomic(&cfg.out.join(&euclidean), &e_bytes)?;
        write_atomic(&cfg.out.join(&angular), &a_bytes)?;
        let gaps: Vec<f64> = seeds.iter().map(|r| r.stats.min_inter_gap).collect();
        let spreads: Vec<f64> = seeds.iter().map(|r| r.stats.mean_intra_spread).collect();
        let row = ToyRow {
            m,
            median_inter_gap: median(&gaps),
            median_intra_spread: median(&spreads),
            euclidean_csv: euclidean,
            angular_csv: angular,
            seeds: seeds
                .iter()
                .map(|r| ToySeed {
                    seed: r.seed,
                    converged: r.run.converged,
                    final_loss: r.run.final_loss(),
                    train_accuracy: r.run.final_accuracy(),
                    inter_gap: r.stats.min_inter_gap,
                    intra_spread: r.stats.mean_intra_spread,
                })
                .collect(),
        };
        out.say(format!(
            "m={m}: median inter-class gap {:.4} rad, median intra spread {:.4} rad",
            row.median_inter_gap, row.median_intra_spread
        ));
        rows.push(row);
    }
    let report = json!({ "config": cfg, "scatter_seed": cfg.seeds[0], "rows": rows });
    write_atomic(&cfg.out.join("toy2d_report.json"), &json_bytes(&report))?;
    out.say(format!(
        "wrote {} scatter files and toy2d_report.json to {}",
        2 * rows.len(),
        cfg.out.display()
    ));
    Ok(())
}

fn scatter_csvs(run: &SeedRun) -> (Vec<u8>, Vec<u8>) {
    let f = &run.features;
    let labels = &run.data.labels;
    let euclidean = csv_bytes(&["label", "x", "y"], |w| {
        for (i, l) in labels.iter().enumerate() {
            w.write_record([
                l.to_string(),
                f.get(i, 0).to_string(),
                f.get(i, 1).to_string(),
            ])?;
        }
        Ok(())
    });
    let angular = csv_bytes(&["label", "x", "y", "angle"], |w| {
        for (i, l) in labels.iter().enumerate() {
            let (x, y) = (f.get(i, 0), f.get(i, 1));
            let r = x.hypot(y);
            let (ux, uy) = if r > 0.0 {
                (x / r, y / r)
            } else {
                (f64::NAN, f64::NAN)
            };
            w.write_record([
                l.to_string(),
                ux.to_string(),
                uy.to_string(),
                y.atan2(x).to_string(),
            ])?;
        }
        Ok(())
    });
    (euclidean, angular)
}

pub(super) fn msweep(a: &SweepArgs, out: &Output) -> Result<(), CliError> {
    let cfg = load_config(&a.run, a.m_grid.as_ref(), ExperimentConfig::sweep())?;
    let scope = m_scope(cfg.data.classes, cfg.model.feature_dim)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    out.say(format!(
        "msweep: {} margins x {} seeds; margin scope for C={}, K={}: {:.4} ({:?})",
        cfg.m_grid.len(),
        cfg.seeds.len(),
        cfg.data.classes,
        cfg.model.feature_dim,
        scope.m_upper,
        scope.kind
    ));
    let rows =
        margin_sweep(&cfg.setup(), cfg.loss.s, &cfg.m_grid, &cfg.seeds).map_err(train_failure)?;
    let table = csv_bytes(
        &[
            "m",
            "median_accuracy",
            "converged",
            "converged_runs",
            "median_final_loss",
            "beyond_m_scope",
        ],
        |w| {
            for r in &rows {
                w.write_record([
                    r.m.to_string(),
                    r.median_accuracy.to_string(),
                    r.converged.to_string(),
                    r.converged_runs.to_string(),
                    r.median_final_loss.to_string(),
                    r.beyond_m_scope.to_string(),
                ])?;
            }
            Ok(())
        },
    );
    for r in &rows {
        out.say(format!(
            "m={}: median accuracy {:.4}, converged {}/{}, median final loss {:.4}{}",
            r.m,
            r.median_accuracy,
            r.converged_runs,
            r.cells.len(),
            r.median_final_loss,
            if r.beyond_m_scope {
                " (beyond scope)"
            } else {
                ""
            }
        ));
    }
    let threshold = rows.iter().find(|r| !r.converged).map(|r| r.m);
    match threshold {
        Some(m) => out.say(format!("first margin with a non-converged run: {m}")),
        None => out.say("every run converged"),
    }
    let report = json!({
        "config": cfg,
        "m_scope": scope,
        "first_non_converged_m": threshold,
        "rows": rows,
    });
    write_atomic(&cfg.out.join("msweep.csv"), &table)?;
    write_atomic(&cfg.out.join("msweep_report.json"), &json_bytes(&report))?;
    out.say(format!(
        "wrote msweep.csv and msweep_report.json to {}",
        cfg.out.display()
    ));
    Ok(())
}

fn bound_failure(e: BoundError) -> CliError {
    CliError::Usage(e.to_string())
}

pub(super) fn bounds(a: &BoundsArgs, out: &Output) -> Result<(), CliError> {
    let report = bound_report(a.classes, a.dim, a.p_w, Some(a.s), a.m).map_err(bound_failure)?;
    let bytes = json_bytes(&report);
    if let Some(path) = &a.out {
        write_atomic(path, &bytes)?;
    }
    if a.json {
        if !out.quiet {
            print!("{}", String::from_utf8_lossy(&bytes));
        }
        return Ok(());
    }
    let verdict = |ok: Option<bool>| match ok {
        Some(true) => "satisfied",
        Some(false) => "violated",
        None => "not checked",
    };
    out.say(format!(
        "C = {}, K = {}, P_W = {}",
        report.classes, report.dim, report.p_w
    ));
    out.say(format!(
        "s >= {:.6}   (s = {}: {})",
        report.s_lower,
        a.s,
        verdict(report.s_satisfied)
    ));
    let m_line = match report.m {
        Some(m) => format!("m = {m}: {}", verdict(report.m_satisfied)),
        None => "no m given".into(),
    };
    let kind = match report.m_bound_kind {
        BoundKind::Exact => "EXACT",
        BoundKind::Soft => "SOFT",
    };
    out.say(format!("m <= {:.6} {kind}   ({m_line})", report.m_upper));
    if report.m_upper_exceeds_one {
        out.say("note: the margin bound exceeds 1, so it does not restrict m in [0, 1)");
    }
    if let Some(p) = report.center_posterior {
        out.say(format!(
            "uniform-weight posterior at the class centers with s = {}: {:.6}",
            a.s, p
        ));
    }
    if report.oracle_evidence.is_empty() {
        out.say("no uniform configuration for these C and K; no weight evidence");
    }
    for e in &report.oracle_evidence {
        out.say(format!(
            "  [{}] {}: {} vs {}",
            if e.satisfied { "ok" } else { "FAIL" },
            e.description,
            e.computed,
            e.bound
        ));
    }
    Ok(())
}

pub(super) fn regions(a: &RegionsArgs, out: &Output) -> Result<(), CliError> {
    if a.norms.len() != 2 {
        return Err(CliError::Usage(format!(
            "--norms takes two values a,b, got {}",
            a.norms.len()
        )));
    }
    let loss = match a.loss {
        RegionKind::Softmax => RegionLoss::Softmax {
            norms: (a.norms[0], a.norms[1]),
        },
        RegionKind::Nsl => RegionLoss::Nsl,
        RegionKind::Asoftmax => RegionLoss::ASoftmax {
            multiplier: a.multiplier,
        },
        RegionKind::Lmcl => RegionLoss::Lmcl { m: a.m },
    };
    let space = match a.space {
        Some(SpaceArg::Angle) => RegionSpace::Angle,
        Some(SpaceArg::Cosine) => RegionSpace::Cosine,
        None => loss.natural_space(),
    };
    if a.resolution < 2 {
        return Err(CliError::Usage(format!(
            "--resolution must be >= 2, got {}",
            a.resolution
        )));
    }
    let grid = decision_regions(loss, GridSpec::new(a.resolution, space)).map_err(bound_failure)?;
    let mut bytes = Vec::new();
    grid.write_csv(&mut bytes).expect("in-memory write");
    write_atomic(&a.out, &bytes)?;

    let counts: Vec<String> = [
        RegionLabel::C1,
        RegionLabel::C2,
        RegionLabel::Margin,
        RegionLabel::Overlap,
    ]
    .iter()
    .map(|&l| format!("{} {}", l.as_str(), grid.count(l)))
    .collect();
    out.say(format!(
        "{} on a {}x{} {:?} grid: {}",
        loss.name(),
        a.resolution,
        a.resolution,
        space,
        counts.join(", ")
    ));
    out.say(format!(
        "measured margin band width {:.6} (grid spacing {:.6})",
        grid.measured_band_width(),
        grid.grid().spacing()
    ));
    if let RegionLoss::Lmcl { m } = loss {
        out.say(format!(
            "predicted band width sqrt(2) * m = {:.6}",
            lmcl_margin_width(m)
        ));
    }
    out.say(format!("wrote {}", a.out.display()));
    Ok(())
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn eval_failure(path: &Path, e: EvalError) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub(super) fn eval(a: &EvalArgs, out: &Output) -> Result<(), CliError> {
    let features = match &a.features {
        Some(p) => Some(LabeledFeatures::from_csv(open(p)?).map_err(|e| eval_failure(p, e))?),
        None => None,
    };
    let report = if let Some(p) = &a.pairs {
        let set = features
            .as_ref()
            .expect("clap requires --features")
            .pairs_from_csv(open(p)?)
            .map_err(|e| eval_failure(p, e))?;
        verification_report(&set, &a.far, json!({ "features": a.features, "pairs": p }))?
    } else if let Some(p) = &a.pair_features {
        let set = PairSet::from_csv(open(p)?).map_err(|e| eval_failure(p, e))?;
        verification_report(&set, &a.far, json!({ "pair_features": p }))?
    } else if let Some(p) = &a.gallery {
        let gp = features
            .as_ref()
            .expect("clap requires --features")
            .gallery_from_csv(open(p)?)
            .map_err(|e| eval_failure(p, e))?;
        identification_report(&gp, json!({ "features": a.features, "gallery": p }))?
    } else if let Some(p) = &a.gallery_features {
        let gp = GalleryProbe::from_csv(open(p)?).map_err(|e| eval_failure(p, e))?;
        identification_report(&gp, json!({ "gallery_features": p }))?
    } else {
        return Err(CliError::Usage(
            "choose --pairs, --gallery, --pair-features or --gallery-features".into(),
        ));
    };
    let bytes = json_bytes(&report);
    match &a.out {
        Some(path) => {
            write_atomic(path, &bytes)?;
            out.say(format!("wrote {}", path.display()));
        }
        None => {
            if !out.quiet {
                print!("{}", String::from_utf8_lossy(&bytes));
            }
        }
    }
    Ok(())
}

fn verification_report(
    set: &PairSet,
    fars: &[f64],
    inputs: serde_json::Value,
) -> Result<serde_json::Value, CliError> {
    let v = verification_accuracy(set).map_err(|e| CliError::Runtime(e.to_string()))?;
    let positives = set.pairs().iter().filter(|p| p.same_identity).count();
    let tar: Vec<serde_json::Value> = fars
        .iter()
        .map(|&far| match tar_at_far(set, far) {
            Ok(t) => json!({ "far": far, "tar": t }),
            Err(e) => json!({ "far": far, "tar": null, "error": e.to_string() }),
        })
        .collect();
    Ok(json!({
        "mode": "verification",
        "inputs": inputs,
        "pairs": set.len(),
        "positives": positives,
        "negatives": set.len() - positives,
        "accuracy": v.accuracy,
        "threshold": v.threshold,
        "tar_at_far": tar,
    }))
}

fn identification_report(
    gp: &GalleryProbe,
    inputs: serde_json::Value,
) -> Result<serde_json::Value, CliError> {
    let rank1 = rank1_identification(gp).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(json!({
        "mode": "identification",
        "inputs": inputs,
        "gallery": gp.gallery().len(),
        "probes": gp.probes().len(),
        "rank1": rank1,
    }))
}
