//! Post-hoc reporting: everything is reconstructed from the stores alone,
//! which doubles as a proof that the stores capture the whole run.

use std::fmt::Write as _;
use std::path::Path;

use crate::monitor::HealthEventKind;
use crate::shift::ShiftReport;
use crate::store::{StoreKind, StoreOptions, StoreSet};

use super::pipeline::{
    ActionSummary, DetectionSummary, DiagRecord, InjectionOutcome, PhaseAccuracy, RunReport,
};
use super::{RunError, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Jsonl,
}

/// Rebuild a [`RunReport`] from `run_dir`'s stores (no report.json reads).
pub fn reconstruct_report(run_dir: &Path) -> Result<RunReport, RunError> {
    let config_path = run_dir.join("config.json");
    if !config_path.exists() {
        return Err(RunError::Config(format!(
            "{} missing; not a run directory",
            config_path.display()
        )));
    }
    let config: ScenarioConfig = serde_json::from_slice(&std::fs::read(&config_path)?)?;
    let stores = StoreSet::open(run_dir, StoreOptions::default())?;
    let ms = config.run.ms_per_event;

    let mut primaries = 0u64;
    let mut feedbacks = 0u64;
    let mut expired = 0u64;
    let mut joined = 0u64;
    let mut actions = Vec::new();
    let mut outcomes: Vec<(u64, Option<bool>)> = Vec::new();

    for (_, value) in stores.replay(StoreKind::Diagnostic, 0, stores.diag.next_seq())? {
        let record: DiagRecord = serde_json::from_value(value)?;
        match record {
            DiagRecord::Event { record } => {
                if record.features.is_some() {
                    primaries += 1;
                } else if record.label.is_some() {
                    feedbacks += 1;
                }
            }
            DiagRecord::Outcome { primary_ts, correct, .. } => {
                joined += 1;
                outcomes.push(((primary_ts / ms) as u64, correct));
            }
            DiagRecord::Decision { decision } => {
                if decision.provenance.action != "keep_existing" {
                    actions.push(ActionSummary {
                        decision_id: decision.provenance.decision_id,
                        at_event: (decision.provenance.timestamp / ms) as u64,
                        action: decision.provenance.action.clone(),
                        rule: decision.provenance.rule_id.clone(),
                    });
                }
            }
            DiagRecord::Expiry { .. } => expired += 1,
        }
    }

    let mut detections = Vec::new();
    let mut sketch_bytes = 0u64;
    let mut final_version: Option<u64> = None;
    let mut models_trained = 0u64;
    for (seq, value) in stores.replay(StoreKind::Health, 0, stores.health.next_seq())? {
        let event: crate::monitor::HealthEvent = serde_json::from_value(value)?;
        match event.kind {
            HealthEventKind::DetectorFired => {
                if let Some(report) = event.payload.get("report") {
                    let report: ShiftReport = serde_json::from_value(report.clone())?;
                    detections.push(DetectionSummary {
                        at_event: (event.timestamp / ms) as u64,
                        shift_type: report.shift_type,
                        magnitude: report.magnitude,
                        p_value: report.p_value(),
                        detector: report.detector,
                        report_seq: seq,
                    });
                }
            }
            HealthEventKind::ActionTaken => {
                match event.payload.get("action").and_then(|v| v.as_str()) {
                    Some("retrain") => {
                        models_trained += 1;
                        final_version = event.payload.get("version").and_then(|v| v.as_u64());
                    }
                    Some("rollback") => {
                        final_version = event.payload.get("version").and_then(|v| v.as_u64());
                    }
                    _ => {}
                }
            }
            HealthEventKind::Metric => {
                if let Some(bytes) = event.payload.get("sketch_bytes").and_then(|v| v.as_u64()) {
                    sketch_bytes = bytes;
                }
            }
            _ => {}
        }
    }

    let injections: Vec<InjectionOutcome> = config
        .injections
        .iter()
        .map(|inj| {
            let start = inj.start as u64;
            let latency = detections
                .iter()
                .find(|d| {
                    d.at_event >= start && d.shift_type != crate::shift::ShiftType::Anomaly
                })
                .map(|d| d.at_event - start);
            InjectionOutcome { kind: inj.kind, start_event: start, detection_latency: latency }
        })
        .collect();

    let phase_accuracy = phases(&outcomes, config.injections.first().map(|i| i.start as u64), primaries);
    let coverage = if primaries == 0 { 1.0 } else { joined as f64 / primaries as f64 };

    Ok(RunReport {
        config_digest: config.digest(),
        seed: config.seed,
        events: primaries + feedbacks,
        primaries,
        feedbacks,
        joined,
        expired,
        label_coverage: coverage,
        detections,
        injections,
        actions,
        phase_accuracy,
        models_trained,
        final_model_version: final_version,
        sketch_bytes,
        store_bytes: stores.total_bytes(),
        store_root: run_dir.display().to_string(),
    })
}

fn phases(
    outcomes: &[(u64, Option<bool>)],
    first_injection: Option<u64>,
    primaries: u64,
) -> Vec<PhaseAccuracy> {
    let accuracy_in = |name: &str, from: u64, to: u64| {
        let mut correct = 0u64;
        let mut total = 0u64;
        for &(idx, ok) in outcomes {
            if idx >= from && idx < to {
                if let Some(c) = ok {
                    total += 1;
                    correct += u64::from(c);
                }
            }
        }
        PhaseAccuracy {
            name: name.to_string(),
            from_event: from,
            to_event: to,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            examples: total,
        }
    };
    match first_injection {
        Some(start) => vec![
            accuracy_in("pre_shift", start.saturating_sub(10_000), start),
            accuracy_in("post_shift", start, start + 2_000),
            accuracy_in("recovered", start + 8_000, start + 10_000),
            accuracy_in("overall", 0, primaries.max(1)),
        ],
        None => vec![accuracy_in("overall", 0, primaries.max(1))],
    }
}

pub fn format_report(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Jsonl => {
            let mut out = String::new();
            let summary = serde_json::json!({
                "kind": "summary",
                "config_digest": report.config_digest,
                "seed": report.seed,
                "events": report.events,
                "primaries": report.primaries,
                "feedbacks": report.feedbacks,
                "joined": report.joined,
                "expired": report.expired,
                "label_coverage": report.label_coverage,
                "models_trained": report.models_trained,
                "final_model_version": report.final_model_version,
                "sketch_bytes": report.sketch_bytes,
                "store_bytes": report.store_bytes,
            });
            let _ = writeln!(out, "{summary}");
            for d in &report.detections {
                let _ = writeln!(
                    out,
                    "{}",
                    serde_json::json!({"kind": "detection", "detection": d})
                );
            }
            for a in &report.actions {
                let _ = writeln!(out, "{}", serde_json::json!({"kind": "action", "action": a}));
            }
            for p in &report.phase_accuracy {
                let _ = writeln!(out, "{}", serde_json::json!({"kind": "phase", "phase": p}));
            }
            for i in &report.injections {
                let _ = writeln!(
                    out,
                    "{}",
                    serde_json::json!({"kind": "injection", "injection": i})
                );
            }
            out
        }
        ReportFormat::Text => {
            let mut out = String::new();
            let _ = writeln!(out, "run report (seed {})", report.seed);
            let _ = writeln!(out, "  config digest   {}", report.config_digest);
            let _ = writeln!(
                out,
                "  events          {} ({} primary, {} feedback)",
                report.events, report.primaries, report.feedbacks
            );
            let _ = writeln!(
                out,
                "  joined/expired  {} / {}  (coverage {:.4})",
                report.joined, report.expired, report.label_coverage
            );
            let _ = writeln!(
                out,
                "  models trained  {} (active version {:?})",
                report.models_trained, report.final_model_version
            );
            let _ = writeln!(
                out,
                "  sketch bytes    {}   store bytes {}",
                report.sketch_bytes, report.store_bytes
            );
            let _ = writeln!(out, "  detections      {}", report.detections.len());
            for d in &report.detections {
                let _ = writeln!(
                    out,
                    "    event {:>8}  {:<18} magnitude {:.3}  p {:?}  [{}]",
                    d.at_event,
                    format!("{:?}", d.shift_type),
                    d.magnitude,
                    d.p_value,
                    d.detector
                );
            }
            let _ = writeln!(out, "  actions         {}", report.actions.len());
            for a in &report.actions {
                let _ = writeln!(
                    out,
                    "    event {:>8}  {:<14} rule {:?}  (decision {})",
                    a.at_event, a.action, a.rule, a.decision_id
                );
            }
            for i in &report.injections {
                let _ = writeln!(
                    out,
                    "  injection {:?} at {}  detection latency {:?}",
                    i.kind, i.start_event, i.detection_latency
                );
            }
            for p in &report.phase_accuracy {
                let _ = writeln!(
                    out,
                    "  phase {:<12} [{:>7}, {:>7})  accuracy {:.4} over {} labeled",
                    p.name, p.from_event, p.to_event, p.accuracy, p.examples
                );
            }
            out
        }
    }
}
