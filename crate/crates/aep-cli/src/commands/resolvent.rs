//! `aep resolvent`: pair-value sweeps over (k, lambda) and the scaling of
//! the current's half-line resolvent norm.

use std::fmt::Write as _;
use std::path::Path;

use aep_core::output::{config_hash, RunManifest};
use aep_core::resolvent::{current_kernel, norm_scaling, pair_difference_value};

use crate::config::parse_law_arg;
use crate::CliError;

pub fn run(
    k_list: &str,
    lambda_min: f64,
    lambda_max: f64,
    per_decade: usize,
    law: &str,
    out_dir: &Path,
) -> Result<(), CliError> {
    if lambda_min <= 0.0 || lambda_max <= lambda_min {
        return Err(CliError::config(format!(
            "need 0 < lambda_min < lambda_max, got [{lambda_min}, {lambda_max}]"
        )));
    }
    let ks: Vec<usize> = k_list
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| CliError::config(format!("bad k '{s}'"))))
        .collect::<Result<_, _>>()?;
    let decades = (lambda_max / lambda_min).log10();
    let n = ((decades * per_decade as f64).round() as usize).max(1);
    let lambdas: Vec<f64> = (0..=n)
        .map(|i| (lambda_min.ln() + (lambda_max.ln() - lambda_min.ln()) * i as f64 / n as f64).exp())
        .collect();

    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from("k,lambda,value_closed,value_numeric,gamma,c1,c2\n");
    for &k in &ks {
        for &lambda in &lambdas {
            let v = pair_difference_value(k, lambda)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                k, lambda, v.closed, v.numeric, v.gamma, v.c1, v.c2
            )
            .unwrap();
        }
    }
    let sweep_path = out_dir.join("pair_values.csv");
    aep_core::output::write_text(&sweep_path, &csv)?;

    let law_parsed = parse_law_arg(law)?;
    let w = current_kernel(&law_parsed);
    let scaling =
        norm_scaling(&w, &lambdas).map_err(|e| CliError::runtime(e.to_string()))?;
    let mut csv = String::from("lambda,norm_sq\n");
    for (l, v) in scaling.lambdas.iter().zip(&scaling.values) {
        writeln!(csv, "{l},{v}").unwrap();
    }
    let scaling_path = out_dir.join("norm_scaling.csv");
    aep_core::output::write_text(&scaling_path, &csv)?;
    println!("norm scaling slope: {:.4}", scaling.slope);

    let canonical = format!(
        "k={k_list};lambda=[{lambda_min},{lambda_max}]x{per_decade};law={law}"
    );
    let mut manifest = RunManifest::new("resolvent", config_hash(&canonical), 0);
    manifest.record(&sweep_path);
    manifest.record(&scaling_path);
    manifest.write(out_dir)?;
    Ok(())
}
