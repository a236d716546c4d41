use std::path::Path;

use super::{CycleDiagnostics, WindowControls};
use crate::error::Result;
use crate::textio;

fn component_labels(zones: &[u32], subdomains: &[u32]) -> Vec<String> {
    zones
        .iter()
        .map(|z| format!("friction_{z}"))
        .chain(std::iter::once("mu".to_string()))
        .chain(subdomains.iter().map(|s| format!("delta_h_{s}")))
        .collect()
}

/// One row per analyzed window.
pub fn write_diagnostics(
    path: &Path,
    diagnostics: &[CycleDiagnostics],
    zones: &[u32],
    subdomains: &[u32],
) -> Result<()> {
    let labels = component_labels(zones, subdomains);
    let mut header = vec![
        "window".to_string(),
        "start".into(),
        "end".into(),
        "wse_used".into(),
        "wsr_used".into(),
        "wsr_skipped".into(),
    ];
    for prefix in ["forecast_mean", "forecast_std", "analysis_mean", "analysis_std"] {
        header.extend(labels.iter().map(|l| format!("{prefix}_{l}")));
    }
    header.extend(
        [
            "innovation_rms",
            "normalized_innovation_rms",
            "clipped",
            "respawned",
            "jitter",
        ]
        .map(String::from),
    );
    let mut out = header.join(",") + "\n";
    for d in diagnostics {
        let mut row = vec![
            d.window.to_string(),
            d.start.to_string(),
            d.end.to_string(),
            d.wse_used.to_string(),
            d.wsr_used.to_string(),
            d.wsr_skipped.to_string(),
        ];
        for v in [&d.forecast_mean, &d.forecast_std, &d.analysis_mean, &d.analysis_std] {
            row.extend(v.iter().map(f64::to_string));
        }
        row.push(d.innovation_rms.to_string());
        row.push(d.normalized_innovation_rms.to_string());
        row.push(d.clipped.to_string());
        row.push(d.respawned.to_string());
        row.push(d.jitter.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    textio::write(path, &out)
}

/// Controls applied in each window, keyed by window index.
pub fn write_control_history(path: &Path, history: &[WindowControls], zones: &[u32], subdomains: &[u32]) -> Result<()> {
    let labels = component_labels(zones, subdomains);
    let mut out = format!("window,start,end,analyzed,{}\n", labels.join(","));
    for w in history {
        let c = &w.controls;
        let values: Vec<String> = c
            .friction
            .iter()
            .chain(std::iter::once(&c.mu))
            .chain(&c.delta_h)
            .map(f64::to_string)
            .collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            w.window,
            w.start,
            w.end,
            w.analyzed as u8,
            values.join(",")
        ));
    }
    textio::write(path, &out)
}
