//! `aep oracle`: exact finite-ring values written as golden JSON records.
//! Regeneration refuses to overwrite a golden file whose values drifted
//! beyond their stored tolerance unless `--force` is given.

use std::path::{Path, PathBuf};

use clap::Subcommand;

use aep_core::model::Density;
use aep_core::oracle::{exact_diffusivity, exact_two_point, resolvent_norm_sq, Flavor, LocalFunction};
use aep_core::output::{GoldenFile, GoldenRecord, TOOL_VERSION};

use crate::config::parse_law_arg;
use crate::CliError;

#[derive(Debug, Subcommand)]
pub enum OracleCmd {
    /// Exact two-point function S(x, t) on the ring.
    TwoPoint {
        #[arg(long)]
        l: usize,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value = "1:1")]
        law: String,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = false)]
        force: bool,
    },
    /// Exact diffusivity from the wrapped second moment.
    Diffusivity {
        #[arg(long)]
        l: usize,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value = "1:1")]
        law: String,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = false)]
        force: bool,
    },
    /// Finite-ring resolvent seminorm of the pair-difference function.
    Seminorm {
        #[arg(long)]
        l: usize,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value = "1:1")]
        law: String,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// "full" or "symmetric".
        #[arg(long, default_value = "symmetric")]
        flavor: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = false)]
        force: bool,
    },
    /// Regenerate the standard golden set into a directory.
    Regen {
        #[arg(long, default_value = "golden")]
        dir: PathBuf,
        #[arg(long, default_value_t = false)]
        force: bool,
    },
}

pub fn run(cmd: OracleCmd) -> Result<(), CliError> {
    match cmd {
        OracleCmd::TwoPoint { l, rho, law, t, out, force } => {
            let file = two_point_golden(l, rho, &law, t)?;
            write_golden(&file, &out, force)
        }
        OracleCmd::Diffusivity { l, rho, law, t, out, force } => {
            let file = diffusivity_golden(l, rho, &law, t)?;
            write_golden(&file, &out, force)
        }
        OracleCmd::Seminorm { l, rho, law, lambda, k, flavor, out, force } => {
            let file = seminorm_golden(l, rho, &law, lambda, k, &flavor)?;
            write_golden(&file, &out, force)
        }
        OracleCmd::Regen { dir, force } => regen(&dir, force),
    }
}

pub fn two_point_golden(l: usize, rho: f64, law: &str, t: f64) -> Result<GoldenFile, CliError> {
    let law_parsed = parse_law_arg(law)?;
    Density::new(rho).map_err(|e| CliError::config(e.to_string()))?;
    let tp =
        exact_two_point(l, rho, &law_parsed, t).map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(GoldenFile {
        tool_version: TOOL_VERSION.into(),
        records: vec![GoldenRecord {
            operation: "two_point".into(),
            inputs: serde_json::json!({"l": l, "rho": rho, "law": law, "t": t}),
            value: serde_json::json!(tp.values),
            tolerance: 1e-10,
            provenance: "uniformized semigroup on the full configuration space".into(),
        }],
    })
}

pub fn diffusivity_golden(l: usize, rho: f64, law: &str, t: f64) -> Result<GoldenFile, CliError> {
    let law_parsed = parse_law_arg(law)?;
    let d =
        exact_diffusivity(l, rho, &law_parsed, t).map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(GoldenFile {
        tool_version: TOOL_VERSION.into(),
        records: vec![GoldenRecord {
            operation: "diffusivity".into(),
            inputs: serde_json::json!({"l": l, "rho": rho, "law": law, "t": t}),
            value: serde_json::json!(d),
            tolerance: 1e-9,
            provenance: "wrapped second moment of the exact two-point function".into(),
        }],
    })
}

pub fn seminorm_golden(
    l: usize,
    rho: f64,
    law: &str,
    lambda: f64,
    k: usize,
    flavor: &str,
) -> Result<GoldenFile, CliError> {
    let law_parsed = parse_law_arg(law)?;
    let flavor_parsed = match flavor {
        "full" => Flavor::Full,
        "symmetric" => Flavor::Symmetric,
        other => return Err(CliError::config(format!("bad flavor '{other}'"))),
    };
    let rho_parsed = Density::new(rho).map_err(|e| CliError::config(e.to_string()))?;
    let phi = LocalFunction::pair_difference(k);
    let v = resolvent_norm_sq(&phi, lambda, l, rho_parsed, &law_parsed, flavor_parsed)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(GoldenFile {
        tool_version: TOOL_VERSION.into(),
        records: vec![GoldenRecord {
            operation: "seminorm".into(),
            inputs: serde_json::json!({
                "l": l, "rho": rho, "law": law, "lambda": lambda, "k": k, "flavor": flavor,
            }),
            value: serde_json::json!(v),
            tolerance: 1e-8,
            provenance: "shifted-generator solve on the full configuration space".into(),
        }],
    })
}

/// Refuses to overwrite when the freshly computed values drift beyond the
/// stored tolerance, unless forced.
fn write_golden(file: &GoldenFile, out: &Path, force: bool) -> Result<(), CliError> {
    if out.exists() && !force {
        let existing = GoldenFile::load(out)?;
        if !existing.within_tolerance(file) {
            return Err(CliError::runtime(format!(
                "golden drift: {} disagrees with freshly computed values beyond tolerance \
                 (rerun with --force to overwrite)",
                out.display()
            )));
        }
    }
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    file.save(out)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// The standard golden set regenerated by `aep oracle regen`.
fn regen(dir: &Path, force: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let sets: Vec<(&str, GoldenFile)> = vec![
        ("two_point_l10_rho05_t1.json", two_point_golden(10, 0.5, "1:1", 1.0)?),
        ("two_point_l12_rho05_t2.json", two_point_golden(12, 0.5, "1:1", 2.0)?),
        ("diffusivity_l12_rho05_t1.json", diffusivity_golden(12, 0.5, "1:1", 1.0)?),
        ("seminorm_l12_rho05_lambda05_k1.json", seminorm_golden(12, 0.5, "1:1", 0.5, 1, "symmetric")?),
    ];
    for (name, file) in sets {
        write_golden(&file, &dir.join(name), force)?;
    }
    Ok(())
}
