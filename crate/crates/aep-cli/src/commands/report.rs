//! `aep report`: weak-sense transform comparison between a law's
//! diffusivity curve and the totally asymmetric reference, plus the
//! monotonicity verdict on the law curve.

use std::fs;
use std::path::Path;

use aep_core::analysis::{weak_sense_verdict, VerdictConfig};
use aep_core::estimators::{monotonicity_report, DiffusivityCurve};
use aep_core::output::{config_hash, EstimateTable, RunManifest};
use aep_core::stats::EstimateWithCI;

use crate::CliError;

pub fn run(curves: &Path, reference: &Path, out_dir: &Path, lenient: bool) -> Result<(), CliError> {
    let law_table = load_table(curves)?;
    let ref_table = load_table(reference)?;
    let (ts, d_law, se_law) = law_table.curve("variance");
    let (ts_ref, d_ref, _) = ref_table.curve("variance");
    if ts.is_empty() || ts_ref.is_empty() {
        return Err(CliError::config(
            "curve files must contain rows with the 'variance' method tag".into(),
        ));
    }
    if ts != ts_ref {
        return Err(CliError::config("curve grids do not match".into()));
    }
    let horizon = *ts.last().unwrap();
    let cfg = VerdictConfig::for_horizon(horizon);
    let verdict = weak_sense_verdict(&ts, &d_law, &d_ref, &cfg)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    let curve = DiffusivityCurve {
        method: "variance".into(),
        ts: ts.clone(),
        values: d_law
            .iter()
            .zip(&se_law)
            .map(|(&v, &se)| EstimateWithCI::new(v, se, 0))
            .collect(),
    };
    let mono = monotonicity_report(&curve);

    fs::create_dir_all(out_dir)?;
    let report = serde_json::json!({
        "weak_sense": verdict,
        "monotonicity": mono,
    });
    let report_path = out_dir.join("verdict.json");
    aep_core::output::write_text(
        &report_path,
        &(serde_json::to_string_pretty(&report).unwrap() + "\n"),
    )?;
    let mut ratio_csv = String::from("lambda,transform_law,transform_reference,ratio\n");
    for (i, &l) in verdict.lambdas.iter().enumerate() {
        use std::fmt::Write as _;
        writeln!(
            ratio_csv,
            "{l},{},{},{}",
            verdict.transform_law[i], verdict.transform_reference[i], verdict.ratio[i]
        )
        .unwrap();
    }
    let ratio_path = out_dir.join("ratios.csv");
    aep_core::output::write_text(&ratio_path, &ratio_csv)?;
    let canonical = format!("{}|{}", curves.display(), reference.display());
    let mut manifest = RunManifest::new("report", config_hash(&canonical), 0);
    manifest.record(&report_path);
    manifest.record(&ratio_path);
    manifest.write(out_dir)?;
    println!(
        "transform exponent {:.4}; ratio band ({:.4}, {:.4}); monotone: {}",
        verdict.exponent_reference, verdict.ratio_min, verdict.ratio_max, mono.verdict
    );
    if !lenient && !(verdict.pass_ratio_band && verdict.pass_exponent_band) {
        return Err(CliError::Verdict("transform bands violated".into()));
    }
    Ok(())
}

fn load_table(path: &Path) -> Result<EstimateTable, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    EstimateTable::from_csv(&text).map_err(|e| CliError::config(e.to_string()))
}
