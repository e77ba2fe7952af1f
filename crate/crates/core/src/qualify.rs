//! Level-2 analysis: a one-hidden-layer logistic network over a sliding
//! window of dimensionless per-agent features, trained on labels derived
//! from contact-force exposure.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, ModelError};
use crate::hybrid::RunMode;
use crate::identify::PiFeatures;
use crate::quantify::ExposureRecord;
use crate::rng::{self, purpose};

/// Π features followed by the agent's neighbourhood density (dimensionless).
pub const FEATURE_COUNT: usize = PiFeatures::COUNT + 1;
pub type FeatureRow = [f64; FEATURE_COUNT];

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "speed_ratio",
    "alignment",
    "density_star",
    "mass_ratio",
    "threat",
    "competitiveness",
    "neighbourhood_density_star",
];

pub fn feature_row(pi: &PiFeatures, neighbourhood_density_star: f64) -> FeatureRow {
    let a = pi.to_array();
    [a[0], a[1], a[2], a[3], a[4], a[5], neighbourhood_density_star]
}

/// `W × F` feature matrix, row-major, oldest tick first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub agent_id: usize,
    pub end_tick: u64,
    pub values: Vec<f64>,
}

impl FeatureWindow {
    pub fn from_rows(agent_id: usize, end_tick: u64, rows: &[FeatureRow]) -> Self {
        FeatureWindow {
            agent_id,
            end_tick,
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn ticks(&self) -> usize {
        self.values.len() / FEATURE_COUNT
    }
}

/// Per-feature affine normalisation shared by every row of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(features: usize) -> Self {
        Normalization {
            mean: vec![0.0; features],
            std: vec![1.0; features],
        }
    }

    /// Population mean and standard deviation per feature over every row of
    /// every window. Constant features keep unit scale.
    pub fn fit<'a>(windows: impl IntoIterator<Item = &'a [f64]>, features: usize) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; features];
        let mut sq = vec![0.0; features];
        let windows: Vec<&[f64]> = windows.into_iter().collect();
        for w in &windows {
            for row in w.chunks_exact(features) {
                n += 1;
                for (k, &v) in row.iter().enumerate() {
                    sum[k] += v;
                }
            }
        }
        if n == 0 {
            return Self::identity(features);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for w in &windows {
            for row in w.chunks_exact(features) {
                for (k, &v) in row.iter().enumerate() {
                    sq[k] += (v - mean[k]).powi(2);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Normalization { mean, std }
    }

    pub fn apply(&self, values: &mut [f64]) {
        let f = self.mean.len();
        for row in values.chunks_exact_mut(f) {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weighted mean loss before training, then after each epoch.
    pub loss_curve: Vec<f64>,
}

/// Layer sizes `[W·F, H, 1]`, logistic activations on both layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub window: usize,
    pub features: usize,
    pub hidden: usize,
    /// `H × (W·F)`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub normalization: Normalization,
    pub meta: TrainingMeta,
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Gradient with the same layout as the classifier's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Training example on already-normalised inputs.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub x: &'a [f64],
    pub y: f64,
    pub weight: f64,
}

impl Classifier {
    pub fn zeros(window: usize, features: usize, hidden: usize) -> Self {
        let d = window * features;
        Classifier {
            window,
            features,
            hidden,
            w1: vec![0.0; hidden * d],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            normalization: Normalization::identity(features),
            meta: TrainingMeta {
                seed: 0,
                epochs: 0,
                learning_rate: 0.0,
                loss_curve: Vec::new(),
            },
        }
    }

    pub fn input_size(&self) -> usize {
        self.window * self.features
    }

    fn hidden_activations(&self, x: &[f64], out: &mut [f64]) {
        let d = self.input_size();
        for (h, o) in out.iter_mut().enumerate() {
            let row = &self.w1[h * d..(h + 1) * d];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[h];
            *o = logistic(z);
        }
    }

    fn output_logit(&self, hidden: &[f64]) -> f64 {
        hidden.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>() + self.b2
    }

    /// Network output for an already-normalised input.
    pub fn forward_normalized(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.input_size() {
            return Err(ModelError::Shape {
                expected: self.input_size(),
                got: x.len(),
            });
        }
        let mut a = vec![0.0; self.hidden];
        self.hidden_activations(x, &mut a);
        Ok(logistic(self.output_logit(&a)))
    }

    /// Crush probability for a raw (unnormalised) window.
    pub fn forward(&self, window: &[f64]) -> Result<f64, ModelError> {
        if window.len() != self.input_size() {
            return Err(ModelError::Shape {
                expected: self.input_size(),
                got: window.len(),
            });
        }
        let mut x = window.to_vec();
        self.normalization.apply(&mut x);
        self.forward_normalized(&x)
    }

    /// Weighted mean binary cross-entropy and its gradient.
    pub fn loss_and_gradient(&self, examples: &[Example]) -> (f64, Gradient) {
        let d = self.input_size();
        let mut g = Gradient {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden],
            w2: vec![0.0; self.hidden],
            b2: 0.0,
        };
        let total_weight: f64 = examples.iter().map(|e| e.weight).sum();
        if examples.is_empty() || total_weight <= 0.0 {
            return (0.0, g);
        }
        let mut a = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for e in examples {
            self.hidden_activations(e.x, &mut a);
            let z = self.output_logit(&a);
            loss += e.weight * (e.y * softplus(-z) + (1.0 - e.y) * softplus(z));
            let dz = e.weight * (logistic(z) - e.y);
            g.b2 += dz;
            for h in 0..self.hidden {
                g.w2[h] += dz * a[h];
                let dh = dz * self.w2[h] * a[h] * (1.0 - a[h]);
                g.b1[h] += dh;
                for (gw, xv) in g.w1[h * d..(h + 1) * d].iter_mut().zip(e.x) {
                    *gw += dh * xv;
                }
            }
        }
        let s = 1.0 / total_weight;
        g.w1.iter_mut().chain(&mut g.b1).chain(&mut g.w2).for_each(|v| *v *= s);
        g.b2 *= s;
        (loss * s, g)
    }

    fn sgd_step(&mut self, e: &Example, lr: f64, a: &mut [f64]) {
        let d = self.input_size();
        self.hidden_activations(e.x, a);
        let z = self.output_logit(a);
        let dz = e.weight * (logistic(z) - e.y);
        for h in 0..self.hidden {
            let dh = dz * self.w2[h] * a[h] * (1.0 - a[h]);
            self.w2[h] -= lr * dz * a[h];
            self.b1[h] -= lr * dh;
            for (w, xv) in self.w1[h * d..(h + 1) * d].iter_mut().zip(e.x) {
                *w -= lr * dh * xv;
            }
        }
        self.b2 -= lr * dz;
    }

    /// All parameters flattened as `w1, b1, w2, b2`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.w1.len() + 2 * self.hidden + 1);
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        let (n1, h) = (self.w1.len(), self.hidden);
        assert_eq!(p.len(), n1 + 2 * h + 1, "parameter count");
        self.w1.copy_from_slice(&p[..n1]);
        self.b1.copy_from_slice(&p[n1..n1 + h]);
        self.w2.copy_from_slice(&p[n1 + h..n1 + 2 * h]);
        self.b2 = p[n1 + 2 * h];
    }
}

impl Gradient {
    pub fn flatten(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.w1.len() + 2 * self.b1.len() + 1);
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledSample {
    pub window: FeatureWindow,
    pub label: bool,
    pub run_id: String,
    pub tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            hidden: 16,
            epochs: 60,
            learning_rate: 0.05,
            seed: 7,
        }
    }
}

/// Fits normalisation, then runs per-example SGD on inverse-frequency
/// weighted cross-entropy. Example order is reshuffled every epoch from
/// the seed, so the result is reproducible bit-for-bit.
pub fn train(samples: &[LabelledSample], hyper: &TrainParams) -> Result<Classifier, ModelError> {
    let total = samples.len();
    let positives = samples.iter().filter(|s| s.label).count();
    if positives == 0 || positives == total {
        return Err(ModelError::DegenerateDataset { positives, total });
    }
    let d = samples[0].window.values.len();
    if d == 0 || d % FEATURE_COUNT != 0 {
        return Err(ModelError::Shape {
            expected: FEATURE_COUNT,
            got: d,
        });
    }
    if let Some(bad) = samples.iter().find(|s| s.window.values.len() != d) {
        return Err(ModelError::Shape {
            expected: d,
            got: bad.window.values.len(),
        });
    }
    let normalization = Normalization::fit(samples.iter().map(|s| s.window.values.as_slice()), FEATURE_COUNT);
    let inputs: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut x = s.window.values.clone();
            normalization.apply(&mut x);
            x
        })
        .collect();
    let targets: Vec<f64> = samples.iter().map(|s| if s.label { 1.0 } else { 0.0 }).collect();
    let mut model = train_normalized(&inputs, &targets, d / FEATURE_COUNT, FEATURE_COUNT, hyper)?;
    model.normalization = normalization;
    Ok(model)
}

/// Training core on normalised inputs with targets in `{0, 1}`.
pub fn train_normalized(
    inputs: &[Vec<f64>],
    targets: &[f64],
    window: usize,
    features: usize,
    hyper: &TrainParams,
) -> Result<Classifier, ModelError> {
    let total = targets.len();
    let positives = targets.iter().filter(|&&y| y > 0.5).count();
    if positives == 0 || positives == total {
        return Err(ModelError::DegenerateDataset { positives, total });
    }
    let w_pos = total as f64 / (2.0 * positives as f64);
    let w_neg = total as f64 / (2.0 * (total - positives) as f64);
    let examples: Vec<Example> = inputs
        .iter()
        .zip(targets)
        .map(|(x, &y)| Example {
            x,
            y,
            weight: if y > 0.5 { w_pos } else { w_neg },
        })
        .collect();

    let mut model = Classifier::zeros(window, features, hyper.hidden);
    let mut r = rng::stream(hyper.seed, &[purpose::TRAINING]);
    let d = model.input_size();
    let s1 = 1.0 / (d as f64).sqrt();
    let s2 = 1.0 / (hyper.hidden as f64).sqrt();
    model.w1.iter_mut().for_each(|w| *w = r.random_range(-s1..s1));
    model.w2.iter_mut().for_each(|w| *w = r.random_range(-s2..s2));

    let mut curve = vec![model.loss_and_gradient(&examples).0];
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut scratch = vec![0.0; hyper.hidden];
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut r);
        for &i in &order {
            model.sgd_step(&examples[i], hyper.learning_rate, &mut scratch);
        }
        let loss = model.loss_and_gradient(&examples).0;
        if !loss.is_finite() {
            return Err(ModelError::Divergence { epoch });
        }
        curve.push(loss);
    }
    model.meta = TrainingMeta {
        seed: hyper.seed,
        epochs: hyper.epochs,
        learning_rate: hyper.learning_rate,
        loss_curve: curve,
    };
    Ok(model)
}

/// True iff the force stayed at or above `force_threshold` on every one of
/// the `ceil(sustain / dt)` ticks ending at `tick`.
pub fn label_from_force(
    record: &ExposureRecord,
    tick: u64,
    force_threshold: f64,
    sustain: f64,
    dt: f64,
) -> Result<bool, AnalysisError> {
    let needed = ((sustain / dt) - 1e-9).ceil().max(1.0) as usize;
    let first = tick + 1 - (needed as u64).min(tick + 1);
    let covered = needed as u64 <= tick + 1
        && record.history.iter().any(|&(t, _)| t <= first)
        && record.history.iter().any(|&(t, _)| t >= tick);
    if !covered {
        return Err(AnalysisError::InsufficientHistory { needed, tick });
    }
    Ok(record.streak_ending_at(tick, force_threshold) >= needed)
}

/// Consecutive per-tick feature rows for one agent starting at `first_tick`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureTrack {
    pub first_tick: u64,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTrack {
    pub fn last_tick(&self) -> Option<u64> {
        (!self.rows.is_empty()).then(|| self.first_tick + self.rows.len() as u64 - 1)
    }
}

/// What a full-force run leaves behind for training.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub run_id: String,
    pub mode: RunMode,
    pub dt: f64,
    /// Indexed by agent id.
    pub tracks: Vec<FeatureTrack>,
    /// Indexed by agent id.
    pub exposure: Vec<ExposureRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelParams {
    /// Ticks per window.
    pub window: usize,
    /// Ticks between successive window ends.
    pub stride: usize,
    /// newtons
    pub force_threshold: f64,
    /// seconds
    pub sustain: f64,
}

impl Default for LabelParams {
    fn default() -> Self {
        LabelParams {
            window: 40,
            stride: 10,
            force_threshold: 250.0,
            sustain: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<LabelledSample>,
    /// Windows dropped because the exposure history did not cover the label span.
    pub skipped: usize,
}

impl Dataset {
    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label).count()
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.positives() as f64 / self.samples.len() as f64
        }
    }
}

/// Window end ticks for a track: the first complete window, then every
/// `stride` ticks while the window stays inside the track.
pub fn window_ends(track: &FeatureTrack, window: usize, stride: usize) -> Vec<u64> {
    let Some(last) = track.last_tick() else {
        return Vec::new();
    };
    let first_end = track.first_tick + window as u64 - 1;
    if window == 0 || first_end > last {
        return Vec::new();
    }
    (first_end..=last).step_by(stride.max(1)).collect()
}

/// One labelled window per agent per `stride` ticks.
pub fn extract_dataset(log: &RunLog, params: &LabelParams) -> Result<Dataset, ModelError> {
    if log.mode != RunMode::FullForce {
        return Err(ModelError::Mode(log.mode.as_str().into()));
    }
    let mut out = Dataset::default();
    for (id, track) in log.tracks.iter().enumerate() {
        for end in window_ends(track, params.window, params.stride) {
            let Some(record) = log.exposure.get(id) else {
                out.skipped += 1;
                continue;
            };
            match label_from_force(record, end, params.force_threshold, params.sustain, log.dt) {
                Ok(label) => {
                    let hi = (end - track.first_tick) as usize + 1;
                    let rows = &track.rows[hi - params.window..hi];
                    out.samples.push(LabelledSample {
                        window: FeatureWindow::from_rows(id, end, rows),
                        label,
                        run_id: log.run_id.clone(),
                        tick: end,
                    });
                }
                Err(_) => out.skipped += 1,
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualifyConfig {
    pub p_crit: f64,
    /// Fraction of scored members that must reach `p_crit`.
    pub quorum: f64,
}

impl Default for QualifyConfig {
    fn default() -> Self {
        QualifyConfig {
            p_crit: 0.5,
            quorum: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrushVerdict {
    Confirmed,
    Unconfirmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualifyOutcome {
    pub verdict: CrushVerdict,
    pub mean_probability: f64,
    /// Fraction of scored members at or above `p_crit`.
    pub fraction: f64,
    pub scored: usize,
}

/// Confirmed iff at least `quorum` of the scored members reach `p_crit`
/// (both comparisons inclusive).
pub fn quorum_verdict(probabilities: &[f64], cfg: &QualifyConfig) -> Result<QualifyOutcome, AnalysisError> {
    if probabilities.is_empty() {
        return Err(AnalysisError::InsufficientData("no complete feature window in locale".into()));
    }
    let n = probabilities.len();
    let hits = probabilities.iter().filter(|&&p| p >= cfg.p_crit).count();
    let confirmed = hits as f64 >= cfg.quorum * n as f64 - 1e-12;
    Ok(QualifyOutcome {
        verdict: if confirmed {
            CrushVerdict::Confirmed
        } else {
            CrushVerdict::Unconfirmed
        },
        mean_probability: probabilities.iter().sum::<f64>() / n as f64,
        fraction: hits as f64 / n as f64,
        scored: n,
    })
}

/// Scores every complete member window and applies the quorum rule.
pub fn qualify_locale<'a>(
    model: &Classifier,
    windows: impl IntoIterator<Item = &'a [f64]>,
    cfg: &QualifyConfig,
) -> Result<QualifyOutcome, AnalysisError> {
    let probabilities: Vec<f64> = windows
        .into_iter()
        .filter_map(|w| model.forward(w).ok())
        .collect();
    quorum_verdict(&probabilities, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub samples: usize,
    pub positives: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
}

/// Area under the ROC curve by the rank-sum statistic; tied scores count
/// one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let p = labels.iter().filter(|&&l| l).count() as f64;
    let n = labels.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return f64::NAN;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    (rank_sum - p * (p + 1.0) / 2.0) / (p * n)
}

pub fn evaluate(model: &Classifier, samples: &[LabelledSample], p_crit: f64) -> Result<BinaryMetrics, ModelError> {
    let scores = samples
        .iter()
        .map(|s| model.forward(&s.window.values))
        .collect::<Result<Vec<f64>, _>>()?;
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(&labels) {
        match (s >= p_crit, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(BinaryMetrics {
        samples: samples.len(),
        positives: tp + fneg,
        accuracy: ratio(tp + tn, samples.len()),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        auc: roc_auc(&scores, &labels),
    })
}

/// Splits samples into (training, held-out) by agent, so no agent's
/// windows land on both sides. Each (run, agent) pair is held out with
/// probability `fraction`.
pub fn split_by_agent(
    samples: Vec<LabelledSample>,
    fraction: f64,
    seed: u64,
) -> (Vec<LabelledSample>, Vec<LabelledSample>) {
    samples.into_iter().partition(|s| {
        let run = s.run_id.bytes().fold(0u64, |h, b| rng::mix64(h ^ b as u64));
        rng::unit_f64(seed, &[purpose::HOLDOUT, run, s.window.agent_id as u64]) >= fraction
    })
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

/// Text model format, one `key values...` record per line:
///
/// ```text
/// crushnet 1
/// window <W>
/// features <F>
/// hidden <H>
/// seed <u64>
/// epochs <n>
/// learning_rate <x>
/// norm_mean <F values>
/// norm_std <F values>
/// w1 <W·F values>        (H lines, one per hidden unit)
/// b1 <H values>
/// w2 <H values>
/// b2 <value>
/// loss_curve <values>
/// end
/// ```
///
/// Numbers use the shortest decimal form that reads back to the same bits.
pub fn model_to_string(m: &Classifier) -> String {
    let d = m.input_size();
    let mut s = String::new();
    let _ = writeln!(s, "crushnet {MODEL_FORMAT_VERSION}");
    let _ = writeln!(s, "window {}", m.window);
    let _ = writeln!(s, "features {}", m.features);
    let _ = writeln!(s, "hidden {}", m.hidden);
    let _ = writeln!(s, "seed {}", m.meta.seed);
    let _ = writeln!(s, "epochs {}", m.meta.epochs);
    let _ = writeln!(s, "learning_rate {}", m.meta.learning_rate);
    let _ = writeln!(s, "norm_mean {}", join(&m.normalization.mean));
    let _ = writeln!(s, "norm_std {}", join(&m.normalization.std));
    for h in 0..m.hidden {
        let _ = writeln!(s, "w1 {}", join(&m.w1[h * d..(h + 1) * d]));
    }
    let _ = writeln!(s, "b1 {}", join(&m.b1));
    let _ = writeln!(s, "w2 {}", join(&m.w2));
    let _ = writeln!(s, "b2 {}", m.b2);
    let _ = writeln!(s, "loss_curve {}", join(&m.meta.loss_curve));
    s.push_str("end\n");
    s
}

pub fn model_from_str(text: &str) -> Result<Classifier, ModelError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut last_line = 0;
    let mut next = |key: &str| -> Result<(usize, Vec<String>), ModelError> {
        let (n, line) = lines.next().ok_or(ModelError::Format {
            line: last_line + 1,
            msg: format!("unexpected end of file, expected `{key}`"),
        })?;
        last_line = n;
        let mut parts = line.split_whitespace();
        let k = parts.next().unwrap_or_default();
        if k != key {
            return Err(ModelError::Format {
                line: n,
                msg: format!("expected `{key}`, found `{k}`"),
            });
        }
        Ok((n, parts.map(str::to_owned).collect()))
    };
    fn parse<T: std::str::FromStr>(line: usize, v: &str) -> Result<T, ModelError> {
        v.parse().map_err(|_| ModelError::Format {
            line,
            msg: format!("cannot parse `{v}`"),
        })
    }
    fn scalar<T: std::str::FromStr>((line, v): (usize, Vec<String>)) -> Result<T, ModelError> {
        match v.as_slice() {
            [x] => parse(line, x),
            _ => Err(ModelError::Format {
                line,
                msg: format!("expected one value, found {}", v.len()),
            }),
        }
    }
    fn vector((line, v): (usize, Vec<String>), len: Option<usize>) -> Result<Vec<f64>, ModelError> {
        if let Some(len) = len {
            if v.len() != len {
                return Err(ModelError::Format {
                    line,
                    msg: format!("expected {len} values, found {}", v.len()),
                });
            }
        }
        v.iter().map(|x| parse(line, x)).collect()
    }

    let version: u32 = scalar(next("crushnet")?)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelError::Format {
            line: 1,
            msg: format!("unsupported model format version {version}"),
        });
    }
    let window: usize = scalar(next("window")?)?;
    let features: usize = scalar(next("features")?)?;
    let hidden: usize = scalar(next("hidden")?)?;
    let seed: u64 = scalar(next("seed")?)?;
    let epochs: usize = scalar(next("epochs")?)?;
    let learning_rate: f64 = scalar(next("learning_rate")?)?;
    let mean = vector(next("norm_mean")?, Some(features))?;
    let std = vector(next("norm_std")?, Some(features))?;
    let d = window * features;
    let mut w1 = Vec::with_capacity(hidden * d);
    for _ in 0..hidden {
        w1.extend(vector(next("w1")?, Some(d))?);
    }
    let b1 = vector(next("b1")?, Some(hidden))?;
    let w2 = vector(next("w2")?, Some(hidden))?;
    let b2: f64 = scalar(next("b2")?)?;
    let loss_curve = vector(next("loss_curve")?, None)?;
    let (_, rest) = next("end")?;
    if !rest.is_empty() {
        return Err(ModelError::Format {
            line: last_line,
            msg: "trailing values after `end`".into(),
        });
    }
    Ok(Classifier {
        window,
        features,
        hidden,
        w1,
        b1,
        w2,
        b2,
        normalization: Normalization { mean, std },
        meta: TrainingMeta {
            seed,
            epochs,
            learning_rate,
            loss_curve,
        },
    })
}
