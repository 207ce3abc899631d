//! End-to-end pipeline behavior: wiring, determinism, replay, reporting,
//! and data-flow isolation.

use std::fs;
use std::path::Path;

use driftline::joiner::JoinedExample;
use driftline::modelkit::Prediction;
use driftline::policy::{default_rules, CostModel};
use driftline::runtime::{
    self, reconstruct_report, replay_run, DriftKind, GeneratorConfig, InjectionSpec,
    ScenarioConfig, StreamSource,
};
use driftline::runtime::pipeline::{run_with_observer, PipelineObserver};
use driftline::policy::Decision;

fn scenario(seed: u64, events: usize) -> ScenarioConfig {
    let mut config = ScenarioConfig {
        seed,
        stream: StreamSource::Generator(GeneratorConfig {
            events,
            dims: 2,
            classes: 2,
            class_sep: 3.0,
            label_delay: 25,
            priors: Vec::new(),
        }),
        injections: Vec::new(),
        sketch: Default::default(),
        joiner: Default::default(),
        data_monitor: Default::default(),
        prediction_monitor: Default::default(),
        rules: default_rules(),
        cost: CostModel { retrain_cost: 10.0, horizon_events: 10_000.0, min_cadence: 20.0 },
        modelkit: Default::default(),
        store: Default::default(),
        run: Default::default(),
    };
    config.data_monitor.reference_size = 500;
    config.data_monitor.test_size = 500;
    config.data_monitor.advance_every = 250;
    config.data_monitor.detector.significance = 0.001;
    config.data_monitor.detector.min_magnitude = 0.25;
    config.modelkit.initial_train_at = 600;
    config.modelkit.retrain_window = 800;
    config.run.policy_every = 250;
    config
}

/// All files under a run directory except `report.json`, which embeds the
/// (environment-specific) output path.
fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    fn walk(dir: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, base, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().display().to_string();
                if rel == "report.json" {
                    continue;
                }
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    walk(root, root, &mut files);
    files.sort();
    files
}

#[test]
fn stationary_run_trains_once_and_keeps_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenario(11, 4000);
    let report = runtime::run(&config, dir.path()).unwrap();
    assert_eq!(report.primaries, 4000);
    assert_eq!(report.feedbacks, 4000);
    assert_eq!(report.models_trained, 1, "no rule can fire on a stationary stream");
    assert!(report.label_coverage > 0.99);
    let overall = report
        .phase_accuracy
        .iter()
        .find(|p| p.name == "overall")
        .unwrap();
    assert!(overall.accuracy > 0.85, "accuracy {}", overall.accuracy);
    assert!(dir.path().join("models/v1.bin").exists());
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn covariate_shift_triggers_detection_and_retrain() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = scenario(7, 6000);
    config.injections.push(InjectionSpec {
        kind: DriftKind::CovariateMeanShift,
        start: 3000,
        duration: 0,
        magnitude: 2.5,
        dims: vec![0],
    });
    let report = runtime::run(&config, dir.path()).unwrap();
    assert!(!report.detections.is_empty(), "shift must be detected");
    let latency = report.injections[0].detection_latency.expect("latency recorded");
    assert!(latency <= 1500, "detected {latency} events after injection");
    assert!(report.models_trained >= 2, "policy must retrain after the shift");
    assert!(report
        .actions
        .iter()
        .any(|a| a.action == "retrain" && a.rule.is_some()));
}

#[test]
fn same_seed_gives_byte_identical_stores_and_report() {
    let config = scenario(42, 3000);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let mut report_a = runtime::run(&config, dir_a.path()).unwrap();
    let mut report_b = runtime::run(&config, dir_b.path()).unwrap();
    // The output path is the one environment-specific field.
    report_a.store_root = String::new();
    report_b.store_root = String::new();
    assert_eq!(
        serde_json::to_vec(&report_a).unwrap(),
        serde_json::to_vec(&report_b).unwrap(),
        "reports must be identical"
    );
    let files_a = dir_bytes(dir_a.path());
    let files_b = dir_bytes(dir_b.path());
    assert_eq!(files_a.len(), files_b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in files_a.iter().zip(&files_b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "file {name_a} differs between runs");
    }
}

#[test]
fn single_thread_mode_matches_default_mode() {
    let mut config = scenario(13, 2500);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    runtime::run(&config, dir_a.path()).unwrap();
    config.run.single_thread = true;
    runtime::run(&config, dir_b.path()).unwrap();
    let files_a = dir_bytes(dir_a.path());
    let files_b = dir_bytes(dir_b.path());
    // config.json differs (single_thread flag); everything else must match.
    for ((name_a, bytes_a), (_, bytes_b)) in files_a.iter().zip(&files_b) {
        if name_a == "config.json" {
            continue;
        }
        assert_eq!(bytes_a, bytes_b, "file {name_a} differs between modes");
    }
}

#[test]
fn replay_reproduces_the_action_sequence() {
    let run_dir = tempfile::tempdir().unwrap();
    let replay_dir = tempfile::tempdir().unwrap();
    let mut config = scenario(5, 5000);
    config.injections.push(InjectionSpec {
        kind: DriftKind::CovariateMeanShift,
        start: 2500,
        duration: 0,
        magnitude: 2.5,
        dims: vec![0],
    });
    runtime::run(&config, run_dir.path()).unwrap();
    let (recorded, replayed) = replay_run(run_dir.path(), replay_dir.path()).unwrap();
    assert!(!recorded.is_empty());
    assert_eq!(recorded, replayed, "replayed decisions must match the live run");
}

#[test]
fn report_reconstruction_matches_live_totals() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = scenario(3, 4000);
    config.injections.push(InjectionSpec {
        kind: DriftKind::CovariateMeanShift,
        start: 2000,
        duration: 0,
        magnitude: 2.5,
        dims: vec![0],
    });
    let live = runtime::run(&config, dir.path()).unwrap();
    let rebuilt = reconstruct_report(dir.path()).unwrap();
    assert_eq!(rebuilt.events, live.events);
    assert_eq!(rebuilt.primaries, live.primaries);
    assert_eq!(rebuilt.joined, live.joined);
    assert_eq!(rebuilt.expired, live.expired);
    assert_eq!(rebuilt.label_coverage, live.label_coverage);
    assert_eq!(rebuilt.models_trained, live.models_trained);
    assert_eq!(rebuilt.final_model_version, live.final_model_version);
    assert_eq!(rebuilt.detections.len(), live.detections.len());
    assert_eq!(rebuilt.actions, live.actions);
    assert_eq!(rebuilt.phase_accuracy, live.phase_accuracy);
    assert_eq!(rebuilt.sketch_bytes, live.sketch_bytes);
    assert_eq!(rebuilt.config_digest, live.config_digest);
    // Reconstruction is idempotent.
    let again = reconstruct_report(dir.path()).unwrap();
    assert_eq!(
        serde_json::to_vec(&rebuilt).unwrap(),
        serde_json::to_vec(&again).unwrap()
    );
}

/// Recording shim: verifies modules only see their documented inputs and
/// that the decision chain is ordered snapshot -> decision -> training.
#[derive(Default)]
struct EdgeRecorder {
    sketched: u64,
    monitored: u64,
    joined: u64,
    predictions: u64,
    policy_calls: Vec<(u64, String)>,
    trainings: Vec<(usize, u64)>,
    activations: Vec<u64>,
}

impl PipelineObserver for EdgeRecorder {
    fn on_sketcher(&mut self, _key: &str) {
        self.sketched += 1;
    }
    fn on_data_monitor(&mut self, features: &[f64]) {
        assert_eq!(features.len(), 2, "monitor sees raw feature rows only");
        self.monitored += 1;
    }
    fn on_joiner_emit(&mut self, example: &JoinedExample) {
        assert!(!example.key.is_empty());
        self.joined += 1;
    }
    fn on_prediction(&mut self, prediction: &Prediction) {
        assert!(prediction.confidence >= 0.0 && prediction.confidence <= 1.0);
        self.predictions += 1;
    }
    fn on_policy(&mut self, snapshot_id: u64, decision: &Decision) {
        // The policy engine's only input is the persisted snapshot.
        assert_eq!(decision.provenance.snapshot_id, snapshot_id);
        self.policy_calls
            .push((snapshot_id, decision.provenance.action.clone()));
    }
    fn on_training(&mut self, examples: usize, version: u64) {
        self.trainings.push((examples, version));
    }
    fn on_activation(&mut self, version: u64) {
        self.activations.push(version);
    }
}

#[test]
fn data_flows_only_along_documented_edges() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenario(21, 3000);
    let mut recorder = EdgeRecorder::default();
    run_with_observer(&config, dir.path(), &mut recorder).unwrap();

    assert_eq!(recorder.sketched, 3000, "every primary reaches the sketcher");
    assert_eq!(recorder.monitored, 3000, "every primary reaches the data monitor");
    assert!(recorder.joined > 2900, "labels join back");
    assert!(recorder.predictions > 0);
    assert!(!recorder.policy_calls.is_empty());
    // Snapshot ids strictly increase: each decision reads a fresh snapshot.
    assert!(recorder
        .policy_calls
        .windows(2)
        .all(|w| w[0].0 < w[1].0));
    // Every training was announced and every trained version activated.
    assert_eq!(recorder.trainings.len(), recorder.activations.len());
    for ((examples, version), activated) in recorder.trainings.iter().zip(&recorder.activations) {
        assert!(*examples >= 200);
        assert_eq!(version, activated);
    }
}
