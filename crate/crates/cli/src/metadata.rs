//! Reproducibility metadata attached to every output artifact.

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use srqm_core::coupling::UnitConversionRecord;
use srqm_core::superradiance::RegimeReport;

use crate::config::RunConfig;
use crate::output::OutputContext;

pub fn build(
    config: &RunConfig,
    ctx: &OutputContext,
    regime: Option<&RegimeReport>,
    unit_scale: Option<&UnitConversionRecord>,
    approximation_flags: &[String],
) -> Value {
    let mut hasher = Sha256::new();
    hasher.update(ctx.raw_config.as_bytes());
    let digest = hasher.finalize();
    let config_sha256: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    json!({
        "tool": { "name": "srqm", "version": env!("CARGO_PKG_VERSION") },
        "timestamp_utc": chrono::Utc::now().to_rfc3339(),
        "config_sha256": config_sha256,
        "threads": ctx.threads,
        "seed": ctx.seed,
        "natural_unit_scale": unit_scale.map(|u| serde_json::to_value(u).unwrap()),
        "regime": regime.map(|r| serde_json::to_value(r).unwrap()),
        "approximation_flags": approximation_flags,
        "resolved_config": serde_json::to_value(config).unwrap(),
    })
}
