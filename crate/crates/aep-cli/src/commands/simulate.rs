//! `aep simulate`: drives the engine and estimators from a run file and
//! writes curves, reports and a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use aep_core::estimators::{
    diffusivity_variance, green_kubo_point, height_diffusivity, monotonicity_report,
    three_class_order_law, two_point, variance_growth_identity,
};
use aep_core::output::{config_hash, EstimateTable, RunManifest};
use aep_core::rng::derive_seed;
use aep_core::sim::{
    current_correlation_run, height_run, second_class_run, three_class_run, SimConfig,
};
use aep_core::stats::{EstimateWithCI, DEFAULT_BATCHES};

use crate::config::RunFile;
use crate::CliError;

pub fn run(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", config_path.display())))?;
    let file = RunFile::parse(&text)?;
    let cfg = file.sim_config()?;
    fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new("simulate", config_hash(&text), cfg.seed);
    println!("master seed: {}", cfg.seed);

    let mut table = EstimateTable::default();
    let mut reports: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    let mut raw: Option<String> = file
        .raw_output
        .unwrap_or(false)
        .then(|| String::from("replica,time,observable,value\n"));
    match file.mode.as_str() {
        "second_class" => {
            run_second_class(&file, &cfg, &mut table, &mut reports, raw.as_mut())?;
        }
        "three_class" => {
            let ens = three_class_run(&cfg).map_err(|e| CliError::runtime(e.to_string()))?;
            let mut order = Vec::new();
            for &t in cfg.time_grid.iter().filter(|&&t| t > 0.0) {
                let rep = three_class_order_law(&ens, t, 5)
                    .map_err(|e| CliError::runtime(e.to_string()))?;
                table.push("third_class_mean", t, None, rep.mean_third, cfg.seed);
                table.push("second_class_mean", t, None, rep.mean_second, cfg.seed);
                order.push(serde_json::json!({
                    "t": t,
                    "bins": rep.bins,
                }));
            }
            reports.insert("order_law".into(), serde_json::Value::Array(order));
        }
        "stationary" => {
            if !file.estimators.green_kubo_at.is_empty() {
                let ens = current_correlation_run(&cfg, DEFAULT_BATCHES)
                    .map_err(|e| CliError::runtime(e.to_string()))?;
                for &t in &file.estimators.green_kubo_at {
                    let d = green_kubo_point(&ens, t)
                        .map_err(|e| CliError::runtime(e.to_string()))?;
                    table.push("green_kubo", t, None, d, cfg.seed);
                }
            }
            if !file.estimators.height_diffusivity_at.is_empty() {
                let w = file.observers.height_window.unwrap_or(24);
                let ens = height_run(&cfg, w, DEFAULT_BATCHES)
                    .map_err(|e| CliError::runtime(e.to_string()))?;
                for &t in &file.estimators.height_diffusivity_at {
                    let d = height_diffusivity(&ens, t)
                        .map_err(|e| CliError::runtime(e.to_string()))?;
                    table.push("height", t, None, d.estimate, cfg.seed);
                }
            }
        }
        other => return Err(CliError::config(format!("unknown mode '{other}'"))),
    }

    let curves_path = out_dir.join("curves.csv");
    aep_core::output::write_text(&curves_path, &table.to_csv())?;
    manifest.record(&curves_path);
    if let Some(raw_text) = raw {
        let raw_path = out_dir.join("raw.csv");
        aep_core::output::write_text(&raw_path, &raw_text)?;
        manifest.record(&raw_path);
    }
    if !reports.is_empty() {
        let report_path = out_dir.join("report.json");
        aep_core::output::write_text(
            &report_path,
            &(serde_json::to_string_pretty(&reports).unwrap() + "\n"),
        )?;
        manifest.record(&report_path);
    }
    let manifest_path = manifest.write(out_dir)?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn run_second_class(
    file: &RunFile,
    cfg: &SimConfig,
    table: &mut EstimateTable,
    reports: &mut BTreeMap<String, serde_json::Value>,
    raw: Option<&mut String>,
) -> Result<(), CliError> {
    let ens = second_class_run(cfg).map_err(|e| CliError::runtime(e.to_string()))?;
    if let Some(raw) = raw {
        use std::fmt::Write as _;
        for (r, track) in ens.tracks.iter().enumerate() {
            for (t, x) in cfg.time_grid.iter().zip(track) {
                writeln!(raw, "{r},{t},position,{x}").unwrap();
            }
        }
    }
    let want_d = file.estimators.diffusivity.unwrap_or(true);
    let positive: Vec<f64> = cfg.time_grid.iter().copied().filter(|&t| t > 0.0).collect();
    if want_d && !positive.is_empty() {
        let curve =
            diffusivity_variance(&ens, &positive).map_err(|e| CliError::runtime(e.to_string()))?;
        for (t, v) in curve.ts.iter().zip(&curve.values) {
            table.push("variance", *t, None, *v, cfg.seed);
        }
        if file.estimators.monotonicity.unwrap_or(false) {
            let rep = monotonicity_report(&curve);
            reports.insert("monotonicity".into(), serde_json::to_value(&rep).unwrap());
        }
    }
    for &t in &file.estimators.two_point_at {
        let field = two_point(&ens, t).map_err(|e| CliError::runtime(e.to_string()))?;
        for (&x, &(s, se)) in &field.values {
            table.push(
                "two_point",
                t,
                Some(x),
                EstimateWithCI::new(s, se, field.replicas),
                cfg.seed,
            );
        }
    }
    if !file.estimators.growth_identity_at.is_empty() {
        // Conditioned companion ensembles at eta_z(0) = 1 for each z > 0
        // carrying asymmetry, with stream families split off the master seed.
        let mut conditioned = BTreeMap::new();
        for (z, p) in cfg.law.entries() {
            if z <= 0 || (p - cfg.law.prob(-z)) == 0.0 {
                continue;
            }
            let mut sub = cfg.clone();
            sub.conditioning = vec![(z, true)];
            sub.seed = derive_seed(cfg.seed, &format!("conditioned-z{z}"));
            conditioned
                .insert(z, second_class_run(&sub).map_err(|e| CliError::runtime(e.to_string()))?);
        }
        let mut rows = Vec::new();
        for &t in &file.estimators.growth_identity_at {
            let g = variance_growth_identity(&ens, &conditioned, t)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            table.push("growth_lhs", t, None, g.lhs, cfg.seed);
            table.push("growth_rhs", t, None, g.rhs, cfg.seed);
            rows.push(serde_json::to_value(&g).unwrap());
        }
        reports.insert("growth_identity".into(), serde_json::Value::Array(rows));
    }
    Ok(())
}
