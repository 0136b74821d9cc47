use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CliError, RunConfig};
use crate::algorithms::{ensemble_from_checkpoint, policy_from_checkpoint, TrainerState};
use crate::analysis::{
    dataset_cos_sim, penalty_report, policy_action_distances, write_cossim_csv, write_hist_csv,
    write_penalty_csv,
};
use crate::datagen::{self, collect, train_reference_policies, OfflineDataset, ReferenceConfig};
use crate::env::{episode_seed, mean_and_stderr, normalized_score, rollout, EnvSpec};
use crate::nn::{Checkpoint, GaussianPolicy};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub path: PathBuf,
    pub dataset: OfflineDataset,
    pub policy_files: Vec<PathBuf>,
}

impl GeneratedDataset {
    pub fn summary(&self) -> String {
        let m = &self.dataset.meta;
        let behaviors: Vec<String> = m
            .behavior_policies
            .iter()
            .zip(&m.behavior_scores)
            .map(|(p, s)| format!("{p}={s:.1}"))
            .collect();
        format!(
            "{} {}: {} transitions; behavior scores [{}]; dataset score {}; anchors random={:.3} expert={:.3}; wrote {}",
            m.env.name,
            m.tier,
            self.dataset.transitions.len(),
            behaviors.join(", "),
            m.dataset_score.map_or("n/a".to_string(), |s| format!("{s:.1}")),
            m.anchors.random_ref,
            m.anchors.expert_ref,
            self.path.display()
        )
    }
}

/// Trains the reference policies, collects the configured tier and writes the
/// dataset, its sidecar and one policy checkpoint per behavior policy
/// (`<stem>.<name>.ckpt`, recorded relative to the dataset directory).
pub fn generate_dataset(cfg: &RunConfig, path: &Path) -> Result<GeneratedDataset, CliError> {
    let spec = EnvSpec::by_name(&cfg.env.name).map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.data.n == 0 {
        return Err(CliError::Config("data.n must be at least 1".into()));
    }
    let refs = train_reference_policies(&spec, cfg.data.seed, &ReferenceConfig::default())?;
    let mut dataset = collect(&spec, cfg.data.tier, cfg.data.n, cfg.data.seed, &refs)?;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    create_dir(dir)?;
    let stem = path
        .file_stem()
        .ok_or_else(|| CliError::Config(format!("{}: not a file path", path.display())))?
        .to_string_lossy()
        .into_owned();
    let mut policy_files = Vec::new();
    for name in dataset.meta.behavior_policies.iter_mut() {
        let policy = if name == "medium" {
            &refs.medium
        } else {
            &refs.expert
        };
        let file = format!("{stem}.{name}.ckpt");
        let full = dir.join(&file);
        let mut c = Checkpoint::new();
        c.push(
            "policy",
            policy.trunk().tensors().into_iter().cloned().collect(),
        );
        c.save(&full).map_err(|e| io_err(&full, e))?;
        policy_files.push(full);
        *name = file;
    }
    datagen::save(&dataset, path)?;
    Ok(GeneratedDataset {
        path: path.to_path_buf(),
        dataset,
        policy_files,
    })
}

/// Loads the behavior policies persisted next to a dataset.
pub fn behavior_policies(
    data_path: &Path,
    dataset: &OfflineDataset,
) -> Result<Vec<GaussianPolicy>, CliError> {
    let dir = data_path.parent().unwrap_or(Path::new("."));
    dataset
        .meta
        .behavior_policies
        .iter()
        .map(|f| {
            let p = dir.join(f);
            let c = Checkpoint::load(&p).map_err(|e| io_err(&p, e))?;
            Ok(policy_from_checkpoint(&c)?)
        })
        .collect()
}

fn load_dataset(path: Option<&Path>) -> Result<(PathBuf, OfflineDataset), CliError> {
    let p =
        path.ok_or_else(|| CliError::Config("no dataset given (--data or data.path)".into()))?;
    Ok((p.to_path_buf(), datagen::load(p)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub dir: PathBuf,
    pub steps: u64,
    pub checkpoints: Vec<PathBuf>,
    pub metrics_records: usize,
}

impl TrainSummary {
    pub fn summary(&self) -> String {
        format!(
            "trained {} steps; {} checkpoints and {} metrics records in {}",
            self.steps,
            self.checkpoints.len(),
            self.metrics_records,
            self.dir.display()
        )
    }
}

fn checkpoint_name(step: u64) -> String {
    format!("ckpt-{step:08}.ckpt")
}

/// Step encoded in a `ckpt-<step>.ckpt` file name.
pub fn checkpoint_step(path: &Path) -> Option<u64> {
    path.file_name()?
        .to_str()?
        .strip_prefix("ckpt-")?
        .strip_suffix(".ckpt")?
        .parse()
        .ok()
}

/// Checkpoints of a run directory in step order.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found: Vec<(u64, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| checkpoint_step(&p).map(|s| (s, p)))
        .collect();
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn default_run_dir(cfg: &RunConfig) -> PathBuf {
    let t = &cfg.train;
    PathBuf::from("runs").join(format!("{}-N{}-seed{}", t.algorithm, t.n, t.seed))
}

/// Runs `total_steps` training steps. Writes the resolved `config.json`,
/// `metrics.jsonl` (one record every `log_every` steps) and a checkpoint every
/// `checkpoint_every` steps plus one at the end. A non-finite loss stops the
/// run with the checkpoints written so far left in place.
pub fn train_run(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    cfg.train.validate()?;
    if cfg.train.log_every == 0 || cfg.train.checkpoint_every == 0 {
        return Err(CliError::Config(
            "log_every and checkpoint_every must be positive".into(),
        ));
    }
    let (_, dataset) = load_dataset(cfg.data.path.as_deref())?;
    let dir = cfg
        .output
        .dir
        .clone()
        .unwrap_or_else(|| default_run_dir(cfg));
    create_dir(&dir)?;
    let cfg_path = dir.join("config.json");
    let mut resolved = cfg.clone();
    resolved.output.dir = Some(dir.clone());
    fs::write(&cfg_path, resolved.to_json()).map_err(|e| io_err(&cfg_path, e))?;

    let t = &dataset.transitions;
    let mut state = TrainerState::new(cfg.train.clone(), t.state_dim(), t.action_dim())?;
    let metrics_path = dir.join("metrics.jsonl");
    let mut metrics =
        BufWriter::new(File::create(&metrics_path).map_err(|e| io_err(&metrics_path, e))?);
    let mut checkpoints = Vec::new();
    let mut records = 0;
    let save = |state: &TrainerState, checkpoints: &mut Vec<PathBuf>| -> Result<(), CliError> {
        let p = dir.join(checkpoint_name(state.step()));
        state.to_checkpoint().save(&p).map_err(|e| io_err(&p, e))?;
        checkpoints.push(p);
        Ok(())
    };
    for _ in 0..cfg.train.total_steps {
        let m = match state.train_step(t) {
            Ok(m) => m,
            Err(e) => {
                metrics.flush().map_err(|e| io_err(&metrics_path, e))?;
                let last = checkpoints
                    .last()
                    .map_or("none".to_string(), |p: &PathBuf| p.display().to_string());
                return Err(CliError::Numerical(format!(
                    "{e}; last good checkpoint: {last}"
                )));
            }
        };
        if m.step % cfg.train.log_every == 0 {
            serde_json::to_writer(&mut metrics, &m).expect("metrics serialize");
            metrics
                .write_all(b"\n")
                .map_err(|e| io_err(&metrics_path, e))?;
            records += 1;
        }
        if m.step % cfg.train.checkpoint_every == 0 {
            save(&state, &mut checkpoints)?;
        }
    }
    if state.step() % cfg.train.checkpoint_every != 0 || state.step() == 0 {
        save(&state, &mut checkpoints)?;
    }
    metrics.flush().map_err(|e| io_err(&metrics_path, e))?;
    Ok(TrainSummary {
        dir,
        steps: state.step(),
        checkpoints,
        metrics_records: records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub env: String,
    pub seed: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub stderr_return: f64,
    pub normalized_score: f64,
    pub returns: Vec<f64>,
}

/// Deterministic (`tanh(μ)`) evaluation of a checkpoint's policy, or of the
/// uniform-random agent when `checkpoint` is `None`. Environment and anchors
/// come from the dataset sidecar.
pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<EvalReport, CliError> {
    let (_, dataset) = load_dataset(cfg.data.path.as_deref())?;
    let spec = &dataset.meta.env;
    let anchors = dataset.meta.anchors;
    if cfg.eval.episodes == 0 {
        return Err(CliError::Config("eval.episodes must be at least 1".into()));
    }
    let seed = cfg.eval.seed;
    let (id, returns) = match checkpoint {
        Some(p) => {
            let c = Checkpoint::load(p).map_err(|e| io_err(p, e))?;
            let policy = policy_from_checkpoint(&c)?;
            if policy.state_dim() != spec.state_dim || policy.action_dim() != spec.action_dim {
                return Err(CliError::Config(format!(
                    "{}: policy dimensions do not match environment {}",
                    p.display(),
                    spec.name
                )));
            }
            let zero = vec![0.0; spec.action_dim];
            let returns = (0..cfg.eval.episodes)
                .map(|i| rollout(spec, episode_seed(seed, i), |s| policy.act(s, &zero)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            (p.display().to_string(), returns)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
            let returns = (0..cfg.eval.episodes)
                .map(|i| {
                    rollout(spec, episode_seed(seed, i), |_| {
                        (0..spec.action_dim)
                            .map(|_| rng.random_range(-1.0..=1.0))
                            .collect()
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            ("uniform-random".to_string(), returns)
        }
    };
    let (mean, stderr) = mean_and_stderr(&returns);
    Ok(EvalReport {
        checkpoint: id,
        env: spec.name.clone(),
        seed,
        episodes: returns.len(),
        mean_return: mean,
        stderr_return: stderr,
        normalized_score: normalized_score(mean, &anchors)
            .map_err(|e| CliError::Config(e.to_string()))?,
        returns,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalyzeOptions {
    pub run: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub samples: usize,
    pub seed: u64,
    pub bins: usize,
}

/// One `penalty_report.csv` and `cossim.csv` row per checkpoint, and the
/// `action_dist.csv` histogram of the last checkpoint's policy. The penalty
/// report is skipped for datasets without a behavior policy (random tier).
pub fn analyze_run(opts: &AnalyzeOptions) -> Result<Vec<PathBuf>, CliError> {
    let run_cfg = match &opts.run {
        Some(dir) => Some(RunConfig::load(&dir.join("config.json"))?),
        None => None,
    };
    let data_path = opts
        .data
        .clone()
        .or_else(|| run_cfg.as_ref().and_then(|c| c.data.path.clone()));
    let (data_path, dataset) = load_dataset(data_path.as_deref())?;
    let checkpoints = if !opts.checkpoints.is_empty() {
        opts.checkpoints.clone()
    } else if let Some(dir) = &opts.run {
        list_checkpoints(dir)?
    } else {
        return Err(CliError::Config("give --run or --checkpoints".into()));
    };
    if checkpoints.is_empty() {
        return Err(CliError::Config("no checkpoints to analyze".into()));
    }
    let out = opts
        .out
        .clone()
        .or_else(|| opts.run.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    create_dir(&out)?;
    let behavior = behavior_policies(&data_path, &dataset)?;
    let t = &dataset.transitions;

    let mut penalties = Vec::new();
    let mut cossims = Vec::new();
    let mut last_policy = None;
    for (k, p) in checkpoints.iter().enumerate() {
        let step = checkpoint_step(p).unwrap_or(k as u64);
        let c = Checkpoint::load(p).map_err(|e| io_err(p, e))?;
        let ensemble = ensemble_from_checkpoint(&c)?;
        if !behavior.is_empty() {
            let r = penalty_report(&ensemble, t, &behavior, opts.samples, opts.seed)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            penalties.push((step, r));
        }
        let cs = dataset_cos_sim(&ensemble, t, opts.samples, opts.seed)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        cossims.push((step, cs));
        last_policy = Some(policy_from_checkpoint(&c)?);
    }
    let mut written = Vec::new();
    let csv_err = |e: crate::analysis::AnalysisError| CliError::Config(e.to_string());
    if !penalties.is_empty() {
        let p = out.join("penalty_report.csv");
        write_penalty_csv(&p, &penalties).map_err(csv_err)?;
        written.push(p);
    } else {
        eprintln!("note: dataset has no behavior policy; penalty_report.csv skipped");
    }
    let p = out.join("cossim.csv");
    write_cossim_csv(&p, &cossims).map_err(csv_err)?;
    written.push(p);
    let policy = last_policy.expect("at least one checkpoint");
    let hist = policy_action_distances(&policy, t, opts.bins, opts.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let p = out.join("action_dist.csv");
    write_hist_csv(&p, &hist).map_err(csv_err)?;
    written.push(p);
    Ok(written)
}
