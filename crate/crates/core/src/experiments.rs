//! Multi-seed experiment drivers: the 2-D toy comparison across margins, the
//! margin sweep with held-out verification, and the feature-normalization
//! ablation.
//!
//! Every run draws its dataset, initialization and shuffling from its own
//! seed, so runs are independent and may execute in parallel; results come
//! back in input order regardless of the thread count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::m_scope;
use crate::eval::{best_threshold, cosine_score, tar_at_far_scores, EvalError};
use crate::losses::{LossSpec, LossVariant};
use crate::tensor::Matrix;
use crate::trainer::{
    angular_stats, generate_blobs, train, AngularStats, BlobSpec, MlpModel, SyntheticDataset,
    TrainConfig, TrainError, TrainRun,
};

const HELD_OUT_STREAM: u64 = 2;
const PAIR_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    pub classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    pub dispersion: f64,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self {
            classes: 8,
            per_class: 200,
            input_dim: 8,
            dispersion: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            feature_dim: 2,
        }
    }
}

/// Optimizer settings shared by every run of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lr_drops: Vec<f64>,
    pub weight_decay: f64,
    pub normalize_features: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let d = TrainConfig::new(LossSpec::softmax(), 0);
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            lr_drops: d.lr_drops,
            weight_decay: d.weight_decay,
            normalize_features: d.normalize_features,
        }
    }
}

/// Held-out verification protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Fresh samples per class drawn around the training centers.
    pub held_out_per_class: usize,
    /// Pairs per side: this many same-class and this many cross-class pairs.
    pub pairs: usize,
    pub far: Vec<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            held_out_per_class: 100,
            pairs: 2000,
            far: vec![0.1, 0.01, 0.001],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Setup {
    pub data: DataSettings,
    pub model: ModelSettings,
    pub training: OptimizerSettings,
    pub evaluation: EvalSettings,
}

impl Setup {
    /// Toy defaults with four times the blob dispersion, so that held-out
    /// verification stays below perfect accuracy and margins can make a
    /// difference.
    pub fn verification() -> Self {
        let mut s = Self::default();
        s.data.dispersion = 0.25;
        s
    }

    pub fn blob_spec(&self, seed: u64) -> BlobSpec {
        BlobSpec {
            classes: self.data.classes,
            per_class: self.data.per_class,
            input_dim: self.data.input_dim,
            dispersion: self.data.dispersion,
            seed,
        }
    }

    pub fn train_config(&self, spec: LossSpec, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            spec,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            lr_drops: t.lr_drops.clone(),
            weight_decay: t.weight_decay,
            seed,
            normalize_features: t.normalize_features,
        }
    }

    pub fn init_model(&self, seed: u64) -> Result<MlpModel, TrainError> {
        MlpModel::init(
            self.data.input_dim,
            &self.model.hidden,
            self.model.feature_dim,
            self.data.classes,
            seed,
        )
    }

    /// Trains one model from scratch on the seed's dataset.
    pub fn run(&self, spec: LossSpec, seed: u64) -> Result<SeedRun, TrainError> {
        let data = generate_blobs(&self.blob_spec(seed))?;
        let run = train(
            &self.init_model(seed)?,
            &data,
            &self.train_config(spec, seed),
        )?;
        SeedRun::new(seed, data, run)
    }
}

/// A finished training run together with its data and angular statistics.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub data: SyntheticDataset,
    pub run: TrainRun,
    pub features: Matrix,
    pub stats: AngularStats,
}

impl SeedRun {
    pub fn new(seed: u64, data: SyntheticDataset, run: TrainRun) -> Result<Self, TrainError> {
        let features = run.model.extract_features(&data.samples)?;
        let stats = angular_stats(&features, &data.labels, run.model.class_weights())?;
        Ok(Self {
            seed,
            data,
            run,
            features,
            stats,
        })
    }

    /// Cosine between each class's mean normalized feature and its class
    /// weight; `None` for classes without samples.
    pub fn center_alignment(&self) -> Vec<Option<f64>> {
        let x = match self.features.normalize_rows(0.0) {
            Ok(x) => x,
            Err(_) => return vec![None; self.data.classes()],
        };
        let w = self.run.model.class_weights().normalized();
        (0..self.data.classes())
            .map(|c| {
                let mut mean = vec![0.0; x.cols()];
                let mut count = 0;
                for (i, _) in self.data.labels.iter().enumerate().filter(|(_, &l)| l == c) {
                    for (m, v) in mean.iter_mut().zip(x.row(i)) {
                        *m += v;
                    }
                    count += 1;
                }
                if count == 0 {
                    return None;
                }
                cosine_score(&mean, &w.column(c)).ok()
            })
            .collect()
    }
}

/// Median of the finite values; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// LMCL (NSL when `m` is 0) with the given scale.
pub fn margin_spec(s: f64, m: f64) -> Result<LossSpec, TrainError> {
    Ok(LossSpec::lmcl(s, m)?)
}

/// Trains every `(m, seed)` combination with LMCL at scale `s`, in parallel.
/// The outer vector follows `m_grid`, the inner one `seeds`.
pub fn toy_sweep(
    setup: &Setup,
    s: f64,
    m_grid: &[f64],
    seeds: &[u64],
) -> Result<Vec<Vec<SeedRun>>, TrainError> {
    let jobs: Vec<(f64, u64)> = m_grid
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&seed| (m, seed)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(m, seed)| setup.run(margin_spec(s, m)?, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut it = runs.into_iter();
    Ok(m_grid
        .iter()
        .map(|_| it.by_ref().take(seeds.len()).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TarPoint {
    pub far: f64,
    /// `None` when there are too few negative pairs for this FAR.
    pub tar: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldOutScore {
    pub accuracy: f64,
    pub threshold: f64,
    pub tar_at_far: Vec<TarPoint>,
}

/// Verification on fresh samples of the training identities: balanced
/// same-class and cross-class pairs drawn from `seed`, scored by cosine.
pub fn held_out_verification(
    setup: &Setup,
    model: &MlpModel,
    seed: u64,
) -> Result<HeldOutScore, TrainError> {
    let held_out = setup
        .blob_spec(seed)
        .sample(HELD_OUT_STREAM, setup.evaluation.held_out_per_class)?;
    let features = model.extract_features(&held_out.samples)?;
    let pairs = balanced_pairs(&held_out.labels, setup.evaluation.pairs, seed)
        .map_err(|e| TrainError::Shape(e.to_string()))?;
    let mut scores = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        match cosine_score(features.row(i), features.row(j)) {
            Ok(c) => scores.push((c, held_out.labels[i] == held_out.labels[j])),
            // a collapsed feature matches nothing
            Err(EvalError::DegenerateVector) => {
                scores.push((-1.0, held_out.labels[i] == held_out.labels[j]))
            }
            Err(e) => return Err(TrainError::Shape(e.to_string())),
        }
    }
    let v = best_threshold(&scores).map_err(|e| TrainError::Shape(e.to_string()))?;
    let tar_at_far = setup
        .evaluation
        .far
        .iter()
        .map(|&far| TarPoint {
            far,
            tar: tar_at_far_scores(&scores, far).ok(),
        })
        .collect();
    Ok(HeldOutScore {
        accuracy: v.accuracy,
        threshold: v.threshold,
        tar_at_far,
    })
}

/// `per_side` same-label index pairs followed by `per_side` different-label
/// pairs, sampled with replacement.
pub fn balanced_pairs(
    labels: &[usize],
    per_side: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>, EvalError> {
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut members = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let eligible: Vec<&Vec<usize>> = members.iter().filter(|m| m.len() >= 2).collect();
    if eligible.is_empty() || members.iter().filter(|m| !m.is_empty()).count() < 2 || per_side == 0
    {
        return Err(EvalError::Protocol(
            "need two classes and a class with two samples to build pairs".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PAIR_STREAM);
    let mut out = Vec::with_capacity(2 * per_side);
    for _ in 0..per_side {
        let class = eligible[rng.gen_range(0..eligible.len())];
        let picked: Vec<usize> = class.choose_multiple(&mut rng, 2).copied().collect();
        out.push((picked[0], picked[1]));
    }
    while out.len() < 2 * per_side {
        let i = rng.gen_range(0..labels.len());
        let j = rng.gen_range(0..labels.len());
        if labels[i] != labels[j] {
            out.push((i, j));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub seed: u64,
    /// Epoch at which the loss or parameters stopped being finite.
    pub diverged_at: Option<usize>,
    pub converged: bool,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub verification: Option<HeldOutScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: f64,
    /// Whether `m` exceeds the margin scope for the class count and feature
    /// dimension.
    pub beyond_m_scope: bool,
    pub median_accuracy: f64,
    /// True when every seed converged.
    pub converged: bool,
    pub converged_runs: usize,
    pub median_final_loss: f64,
    pub cells: Vec<SweepCell>,
}

/// Trains LMCL at scale `s` for every margin and seed and scores each model
/// on held-out pairs. Non-converged and diverged runs are recorded rather
/// than aborting the sweep.
pub fn margin_sweep(
    setup: &Setup,
    s: f64,
    m_grid: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>, TrainError> {
    let scope =
        m_scope(setup.data.classes, setup.model.feature_dim).map_err(|e| TrainError::Config {
            field: "model.feature_dim",
            detail: e.to_string(),
        })?;
    let specs = m_grid
        .iter()
        .map(|&m| margin_spec(s, m))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, u64)> = (0..m_grid.len())
        .flat_map(|i| seeds.iter().map(move |&seed| (i, seed)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(i, seed)| sweep_cell(setup, specs[i], seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut it = cells.into_iter();
    Ok(m_grid
        .iter()
        .map(|&m| {
            let cells: Vec<SweepCell> = it.by_ref().take(seeds.len()).collect();
            let acc: Vec<f64> = cells
                .iter()
                .filter_map(|c| c.verification.as_ref().map(|v| v.accuracy))
                .collect();
            let losses: Vec<f64> = cells.iter().map(|c| c.final_loss).collect();
            let converged_runs = cells.iter().filter(|c| c.converged).count();
            SweepRow {
                m,
                beyond_m_scope: m > scope.m_upper,
                median_accuracy: median(&acc),
                converged: converged_runs == cells.len(),
                converged_runs,
                median_final_loss: median(&losses),
                cells,
            }
        })
        .collect())
}

fn sweep_cell(setup: &Setup, spec: LossSpec, seed: u64) -> Result<SweepCell, TrainError> {
    let data = generate_blobs(&setup.blob_spec(seed))?;
    match train(
        &setup.init_model(seed)?,
        &data,
        &setup.train_config(spec, seed),
    ) {
        Ok(run) => Ok(SweepCell {
            seed,
            diverged_at: None,
            converged: run.converged,
            initial_loss: run.initial_loss(),
            final_loss: run.final_loss(),
            train_accuracy: run.final_accuracy(),
            verification: Some(held_out_verification(setup, &run.model, seed)?),
        }),
        Err(TrainError::Diverged { epoch }) => Ok(SweepCell {
            seed,
            diverged_at: Some(epoch),
            converged: false,
            initial_loss: f64::NAN,
            final_loss: f64::NAN,
            train_accuracy: f64::NAN,
            verification: None,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSeed {
    pub seed: u64,
    pub softmax_accuracy: f64,
    pub normalized_accuracy: f64,
    pub unnormalized_accuracy: f64,
    pub normalized_converged: bool,
    pub unnormalized_converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub spec: LossSpec,
    pub seeds: Vec<AblationSeed>,
    pub median_softmax: f64,
    pub median_normalized: f64,
    pub median_unnormalized: f64,
}

/// Held-out verification accuracy of `spec` trained with normalized
/// features from scratch versus without feature normalization warm-started
/// from a plain softmax run of the same length. The softmax starting point
/// is reported as well.
pub fn normalization_ablation(
    setup: &Setup,
    spec: LossSpec,
    seeds: &[u64],
) -> Result<AblationReport, TrainError> {
    if spec.variant() == LossVariant::Softmax {
        return Err(TrainError::Config {
            field: "loss.variant",
            detail: "ablation needs nsl or lmcl".into(),
        });
    }
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let data = generate_blobs(&setup.blob_spec(seed))?;
            let init = setup.init_model(seed)?;

            let mut cfg = setup.train_config(spec, seed);
            cfg.normalize_features = true;
            let normalized = train(&init, &data, &cfg)?;

            let mut pre = setup.train_config(LossSpec::softmax(), seed);
            pre.normalize_features = false;
            let softmax = train(&init, &data, &pre)?;
            cfg.normalize_features = false;
            let unnormalized = train(&softmax.model, &data, &cfg)?;

            Ok(AblationSeed {
                seed,
                softmax_accuracy: held_out_verification(setup, &softmax.model, seed)?.accuracy,
                normalized_accuracy: held_out_verification(setup, &normalized.model, seed)?
                    .accuracy,
                unnormalized_accuracy: held_out_verification(setup, &unnormalized.model, seed)?
                    .accuracy,
                normalized_converged: normalized.converged,
                unnormalized_converged: unnormalized.converged,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let pick = |f: fn(&AblationSeed) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(AblationReport {
        spec,
        median_softmax: pick(|r| r.softmax_accuracy),
        median_normalized: pick(|r| r.normalized_accuracy),
        median_unnormalized: pick(|r| r.unnormalized_accuracy),
        seeds: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[f64::NAN, 5.0]), 5.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn pairs_are_balanced_and_deterministic() {
        let labels = [0, 0, 0, 1, 1, 2];
        let p = balanced_pairs(&labels, 50, 7).unwrap();
        assert_eq!(p.len(), 100);
        assert!(p[..50]
            .iter()
            .all(|&(i, j)| i != j && labels[i] == labels[j]));
        assert!(p[50..].iter().all(|&(i, j)| labels[i] != labels[j]));
        assert_eq!(p, balanced_pairs(&labels, 50, 7).unwrap());
        assert!(balanced_pairs(&[0, 1], 5, 0).is_err());
        assert!(balanced_pairs(&[0, 0], 5, 0).is_err());
    }

    #[test]
    fn sweep_shapes_follow_inputs() {
        let mut setup = Setup::default();
        setup.data.per_class = 10;
        setup.data.classes = 3;
        setup.training.epochs = 2;
        setup.evaluation.held_out_per_class = 5;
        setup.evaluation.pairs = 20;
        let rows = margin_sweep(&setup, 10.0, &[0.0, 0.1], &[1, 2]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].cells.len(), 2);
        assert_eq!(rows[1].cells[1].seed, 2);
        let toy = toy_sweep(&setup, 10.0, &[0.0], &[4]).unwrap();
        assert_eq!(toy[0][0].seed, 4);
    }
}
