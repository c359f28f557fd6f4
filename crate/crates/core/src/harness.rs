//! Experiment driver: dataset loading, multi-seed training with per-epoch
//! metrics, θ sweeps and gradient-state reports.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{count_gradient_state, GradientStateCount, LayerTopology};
use crate::config::{DatasetKind, RunConfig};
use crate::data::{load_dataset_dir, synth_dataset, EventFormat, LabeledSample, SampleWindow};
use crate::error::{EtlpError, Result};
use crate::network::{evaluate, train_epoch, Network, SynapseSet};
use crate::rule::LearningRule;

pub const DATA_DIR_ENV: &str = "ETLP_DATA_DIR";

pub const METRICS_HEADER: &str = "run_id,seed,epoch,split,accuracy,mean_rate_hz,updates,wall_ms";

/// `cfg.data_dir`, else `env_root`.
pub fn data_root(cfg: &RunConfig, env_root: Option<PathBuf>) -> Result<PathBuf> {
    cfg.data_dir.clone().or(env_root).ok_or_else(|| {
        EtlpError::config("data_dir", format!("not set and {DATA_DIR_ENV} is unset"))
    })
}

/// Train and test samples for one run seed.
pub fn load_splits(cfg: &RunConfig, seed: u64) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    let format = match cfg.dataset {
        DatasetKind::Synthetic => {
            let ds = synth_dataset(&cfg.synth_config(seed))?;
            return Ok(ds.split(cfg.synth_train_per_class));
        }
        DatasetKind::Nmnist => EventFormat::Nmnist(cfg.nmnist_geometry()),
        DatasetKind::ShdCanonical => EventFormat::Canonical {
            num_channels: cfg.num_inputs,
        },
    };
    let root = data_root(cfg, std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))?;
    if !root.is_dir() {
        return Err(EtlpError::config(
            "data_dir",
            format!("dataset directory {} does not exist", root.display()),
        ));
    }
    let window = SampleWindow {
        dt_ms: cfg.dt_ms,
        steps: cfg.steps,
        start_us: cfg.window_start_us,
    };
    let train = load_dataset_dir(&root.join(&cfg.train_dir), format, window)?;
    let test = load_dataset_dir(&root.join(&cfg.test_dir), format, window)?;
    for s in train.iter().chain(&test) {
        if s.label >= cfg.num_outputs {
            return Err(EtlpError::config(
                "num_outputs",
                format!(
                    "dataset has label {} but only {} outputs",
                    s.label, cfg.num_outputs
                ),
            ));
        }
    }
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedLabel {
    Seed(u64),
    Mean,
    Std,
}

impl std::fmt::Display for SeedLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeedLabel::Seed(s) => write!(f, "{s}"),
            SeedLabel::Mean => f.write_str("mean"),
            SeedLabel::Std => f.write_str("std"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub seed: SeedLabel,
    pub epoch: usize,
    pub split: Split,
    pub accuracy: f64,
    pub mean_rate_hz: f64,
    /// Weight-update events during this epoch (mean/std over seeds in summary rows).
    pub updates: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub final_test_accuracy: f64,
    pub synapses: SynapseSet,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub run_id: String,
    pub runs: Vec<SeedRun>,
    /// Final-epoch mean and std rows, train then test.
    pub summary: Vec<MetricsRecord>,
}

impl Experiment {
    pub fn records(&self) -> impl Iterator<Item = &MetricsRecord> {
        self.runs
            .iter()
            .flat_map(|r| &r.records)
            .chain(&self.summary)
    }

    /// Mean and sample standard deviation of the final test accuracy.
    pub fn test_accuracy(&self) -> (f64, f64) {
        mean_std(
            &self
                .runs
                .iter()
                .map(|r| r.final_test_accuracy)
                .collect::<Vec<_>>(),
        )
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in self.records() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{:.3}",
                self.run_id,
                r.seed,
                r.epoch,
                r.split.name(),
                r.accuracy,
                r.mean_rate_hz,
                r.updates,
                r.wall_ms
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| EtlpError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| EtlpError::io(path, e))
    }
}

/// Mean and sample (n-1) standard deviation; the deviation of one value is zero.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ epoch as u64
}

fn eval_records(
    net: &Network,
    seed: u64,
    epoch: usize,
    train: &[LabeledSample],
    test: &[LabeledSample],
    updates: u64,
    wall_ms: f64,
) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::with_capacity(2);
    for (split, data) in [(Split::Train, train), (Split::Test, test)] {
        let e = evaluate(net, data)?;
        out.push(MetricsRecord {
            seed: SeedLabel::Seed(seed),
            epoch,
            split,
            accuracy: e.accuracy,
            mean_rate_hz: e.mean_rate_hz,
            updates: updates as f64,
            wall_ms,
        });
    }
    Ok(out)
}

/// Trains one network from `seed` on the given splits for `cfg.epochs`,
/// evaluating both splits before training and after every epoch.
pub fn run_seed(
    cfg: &RunConfig,
    seed: u64,
    train: &[LabeledSample],
    test: &[LabeledSample],
) -> Result<SeedRun> {
    let mut net = cfg.build_network(seed)?;
    let mut records = eval_records(&net, seed, 0, train, test, 0, 0.0)?;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let stats = train_epoch(&mut net, train, cfg.rule, shuffle_seed(seed, epoch))?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        records.extend(eval_records(
            &net,
            seed,
            epoch,
            train,
            test,
            stats.update_events,
            wall_ms,
        )?);
    }
    let final_test_accuracy = records.last().map(|r| r.accuracy).unwrap_or(0.0);
    Ok(SeedRun {
        seed,
        records,
        final_test_accuracy,
        synapses: net.synapses,
    })
}

/// Every seed of `cfg` (in parallel), followed by mean/std summary rows of
/// the final epoch.
pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment> {
    cfg.validate()?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (train, test) = load_splits(cfg, seed)?;
            run_seed(cfg, seed, &train, &test)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Vec::new();
    for split in [Split::Train, Split::Test] {
        let finals: Vec<&MetricsRecord> = runs
            .iter()
            .filter_map(|r| r.records.iter().rev().find(|m| m.split == split))
            .collect();
        let stat = |f: fn(&MetricsRecord) -> f64| {
            mean_std(&finals.iter().map(|m| f(m)).collect::<Vec<_>>())
        };
        let (acc, rate, upd, wall) = (
            stat(|m| m.accuracy),
            stat(|m| m.mean_rate_hz),
            stat(|m| m.updates),
            stat(|m| m.wall_ms),
        );
        for (label, pick) in [(SeedLabel::Mean, 0), (SeedLabel::Std, 1)] {
            let get = |p: (f64, f64)| if pick == 0 { p.0 } else { p.1 };
            summary.push(MetricsRecord {
                seed: label,
                epoch: cfg.epochs,
                split,
                accuracy: get(acc),
                mean_rate_hz: get(rate),
                updates: get(upd),
                wall_ms: get(wall),
            });
        }
    }
    Ok(Experiment {
        run_id: cfg.run_id.clone(),
        runs,
        summary,
    })
}

/// Trained weights of one seed, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub run_id: String,
    pub seed: u64,
    pub epoch: usize,
    pub synapses: SynapseSet,
}

impl WeightSnapshot {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("snapshot serialises");
        std::fs::write(path, text).map_err(|e| EtlpError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EtlpError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| EtlpError::param(format!("{}: bad weight snapshot: {e}", path.display())))
    }

    /// Rebuilds the network `cfg` describes around these weights.
    pub fn network(&self, cfg: &RunConfig) -> Result<Network> {
        Network::with_synapses(
            cfg.topology(),
            cfg.hidden_params()?,
            cfg.output_params()?,
            cfg.learning(),
            self.synapses.clone(),
        )
    }
}

/// Test and train accuracy of stored weights, as epoch rows of the snapshot.
pub fn evaluate_snapshot(cfg: &RunConfig, snapshot: &WeightSnapshot) -> Result<Experiment> {
    let net = snapshot.network(cfg)?;
    let (train, test) = load_splits(cfg, snapshot.seed)?;
    let records = eval_records(&net, snapshot.seed, snapshot.epoch, &train, &test, 0, 0.0)?;
    let final_test_accuracy = records[1].accuracy;
    Ok(Experiment {
        run_id: snapshot.run_id.clone(),
        runs: vec![SeedRun {
            seed: snapshot.seed,
            records,
            final_test_accuracy,
            synapses: net.synapses,
        }],
        summary: Vec::new(),
    })
}

/// Final test accuracy per rule and θ, as mean and std over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTable {
    pub thetas: Vec<f64>,
    pub rows: Vec<(LearningRule, Vec<(f64, f64)>)>,
}

impl ThetaTable {
    /// CSV with one `mean±std` percentage cell per θ.
    pub fn render(&self) -> String {
        let mut out = String::from("rule");
        for t in &self.thetas {
            let _ = write!(out, ",theta={t}");
        }
        out.push('\n');
        for (rule, cells) in &self.rows {
            out.push_str(rule.name());
            for (m, s) in cells {
                let _ = write!(out, ",{:.2}±{:.2}", 100.0 * m, 100.0 * s);
            }
            out.push('\n');
        }
        out
    }
}

/// One experiment per (rule, θ) with the hidden adaptation scale set to θ.
pub fn theta_sweep(cfg: &RunConfig, thetas: &[f64], rules: &[LearningRule]) -> Result<ThetaTable> {
    if !cfg.recurrent {
        return Err(EtlpError::config(
            "recurrent",
            "θ sweeps need a recurrent hidden layer",
        ));
    }
    if thetas.is_empty() || rules.is_empty() {
        return Err(EtlpError::param(
            "θ sweep needs at least one θ and one rule",
        ));
    }
    let mut rows = Vec::with_capacity(rules.len());
    for &rule in rules {
        let mut cells = Vec::with_capacity(thetas.len());
        for &theta in thetas {
            let run = RunConfig {
                rule,
                theta,
                ..cfg.clone()
            };
            cells.push(run_experiment(&run)?.test_accuracy());
        }
        rows.push((rule, cells));
    }
    Ok(ThetaTable {
        thetas: thetas.to_vec(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityRow {
    pub layer: &'static str,
    pub topology: LayerTopology,
    pub count: GradientStateCount,
}

/// Gradient-state counts of every trainable rule for the hidden layer
/// (input plus recurrent synapses) and the readout.
pub fn complexity_report(cfg: &RunConfig) -> Vec<ComplexityRow> {
    let hidden = LayerTopology {
        inputs: cfg.num_inputs + if cfg.recurrent { cfg.hidden_size } else { 0 },
        neurons: cfg.hidden_size,
        steps: cfg.steps,
        connectivity: 1.0,
        kind: cfg.hidden_neuron,
    };
    let output = LayerTopology {
        inputs: cfg.hidden_size,
        neurons: cfg.num_outputs,
        steps: cfg.steps,
        connectivity: 1.0,
        kind: cfg.output_neuron,
    };
    let mut rows = Vec::new();
    for (layer, topology) in [("hidden", hidden), ("output", output)] {
        for rule in LearningRule::TRAINABLE {
            rows.push(ComplexityRow {
                layer,
                topology,
                count: count_gradient_state(rule, &topology),
            });
        }
    }
    rows
}

pub const COMPLEXITY_HEADER: &str =
    "layer,rule,inputs,neurons,steps,pre_traces,synaptic_eligibility,adaptation_traces,unrolled_activations,total";

pub fn render_complexity(rows: &[ComplexityRow]) -> String {
    let mut out = format!("{COMPLEXITY_HEADER}\n");
    for r in rows {
        let c = &r.count;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.layer,
            c.rule,
            r.topology.inputs,
            r.topology.neurons,
            r.topology.steps,
            c.pre_traces,
            c.synaptic_eligibility,
            c.adaptation_traces,
            c.unrolled_activations,
            c.total()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        RunConfig {
            num_inputs: 12,
            hidden_size: 10,
            num_outputs: 3,
            steps: 30,
            synth_train_per_class: 4,
            synth_test_per_class: 2,
            epochs: 2,
            ..RunConfig::defaults(DatasetKind::Synthetic)
        }
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_epochs_gives_baseline_rows_only() {
        let cfg = RunConfig {
            epochs: 0,
            seeds: vec![5],
            ..tiny()
        };
        let exp = run_experiment(&cfg).unwrap();
        let rows: Vec<_> = exp.runs[0]
            .records
            .iter()
            .map(|r| (r.epoch, r.split))
            .collect();
        assert_eq!(rows, vec![(0, Split::Train), (0, Split::Test)]);
    }

    #[test]
    fn summary_covers_every_seed() {
        let exp = run_experiment(&tiny()).unwrap();
        assert_eq!(exp.runs.len(), 3);
        assert_eq!(exp.summary.len(), 4);
        let finals: Vec<f64> = exp.runs.iter().map(|r| r.final_test_accuracy).collect();
        let (m, s) = mean_std(&finals);
        let test_mean = exp
            .summary
            .iter()
            .find(|r| r.seed == SeedLabel::Mean && r.split == Split::Test)
            .unwrap();
        let test_std = exp
            .summary
            .iter()
            .find(|r| r.seed == SeedLabel::Std && r.split == Split::Test)
            .unwrap();
        assert_eq!((test_mean.accuracy, test_std.accuracy), (m, s));
        assert_eq!(
            exp.runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn missing_data_root_is_named() {
        let cfg = RunConfig::defaults(DatasetKind::ShdCanonical);
        let err = data_root(&cfg, None).unwrap_err().to_string();
        assert!(
            err.contains("data_dir") && err.contains(DATA_DIR_ENV),
            "{err}"
        );
        assert_eq!(
            data_root(&cfg, Some("/x".into())).unwrap(),
            PathBuf::from("/x")
        );
        let cfg = RunConfig {
            data_dir: Some("/nope/never".into()),
            ..cfg
        };
        assert!(load_splits(&cfg, 1).is_err());
    }

    #[test]
    fn snapshot_reevaluates_identically() {
        let cfg = RunConfig {
            seeds: vec![4],
            ..tiny()
        };
        let exp = run_experiment(&cfg).unwrap();
        let run = &exp.runs[0];
        let snap = WeightSnapshot {
            run_id: cfg.run_id.clone(),
            seed: 4,
            epoch: cfg.epochs,
            synapses: run.synapses.clone(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        snap.save(&path).unwrap();
        let loaded = WeightSnapshot::load(&path).unwrap();
        assert_eq!(loaded, snap);
        let again = evaluate_snapshot(&cfg, &loaded).unwrap();
        assert_eq!(again.runs[0].final_test_accuracy, run.final_test_accuracy);
        let wrong = RunConfig {
            hidden_size: 11,
            ..cfg
        };
        assert!(loaded.network(&wrong).is_err());
    }

    #[test]
    fn complexity_rows() {
        let cfg = RunConfig::defaults(DatasetKind::ShdCanonical);
        let rows = complexity_report(&cfg);
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].topology.inputs, 1150);
        assert!(render_complexity(&rows).starts_with(COMPLEXITY_HEADER));
    }

    #[test]
    fn sweep_shape() {
        let cfg = RunConfig {
            seeds: vec![1],
            epochs: 1,
            ..tiny()
        };
        let table = theta_sweep(&cfg, &[0.0, 5.0, 10.0], &[LearningRule::Etlp]).unwrap();
        assert_eq!(table.rows[0].1.len(), 3);
        assert_eq!(table.render().lines().count(), 2);
        let ff = RunConfig {
            recurrent: false,
            ..cfg
        };
        assert!(theta_sweep(&ff, &[0.0], &[LearningRule::Etlp]).is_err());
    }
}
