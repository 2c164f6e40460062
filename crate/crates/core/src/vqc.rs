//! Variational quantum classifier over margin features: angle encoding,
//! a re-uploading ansatz with CX/CZ entangling chains, parity or direct
//! readout, SPSA training and stratified K-fold model selection.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{class_counts, Scaler};
use crate::error::{Error, Result};
use crate::fusion::{evaluate, MetricsReport};
use crate::quantum::{derive_seed, StateVector};

pub const PROB_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    /// Even-parity basis states vote for class 0, odd for class 1.
    Parity,
    /// Basis state `c` is class `c`, renormalized over the first `C` states.
    Direct,
}

impl Mapping {
    pub fn default_for(n_classes: usize) -> Self {
        if n_classes == 2 {
            Mapping::Parity
        } else {
            Mapping::Direct
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqcSpec {
    #[serde(rename = "n")]
    pub n_qubits: usize,
    #[serde(rename = "L")]
    pub reps: usize,
    pub reupload: bool,
    pub mapping: Mapping,
    pub m_inputs: usize,
    pub n_classes: usize,
    pub z_max: f64,
    #[serde(rename = "lambda")]
    pub feature_scales: Vec<f64>,
}

impl VqcSpec {
    /// `max(2, m)` qubits, default readout for the class count, unit scales.
    pub fn new(m_inputs: usize, n_classes: usize, reps: usize, reupload: bool) -> Self {
        Self {
            n_qubits: m_inputs.max(2),
            reps,
            reupload,
            mapping: Mapping::default_for(n_classes),
            m_inputs,
            n_classes,
            z_max: 3.0,
            feature_scales: vec![1.0; m_inputs],
        }
    }

    pub fn n_params(&self) -> usize {
        2 * self.reps * self.n_qubits
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_qubits == 0 || self.reps == 0 {
            return bad("qubit and repetition counts must be positive".into());
        }
        if self.n_classes < 2 {
            return bad("classifier needs at least two classes".into());
        }
        if self.mapping == Mapping::Parity && self.n_classes != 2 {
            return bad(format!("parity readout needs 2 classes, got {}", self.n_classes));
        }
        if self.mapping == Mapping::Direct && (1usize << self.n_qubits.min(63)) < self.n_classes {
            return bad(format!(
                "{} qubits cannot represent {} classes",
                self.n_qubits, self.n_classes
            ));
        }
        if !(self.z_max > 0.0) {
            return bad("z_max must be positive".into());
        }
        if self.feature_scales.len() != self.m_inputs || self.feature_scales.iter().any(|&l| !(l > 0.0)) {
            return bad(format!("need {} positive feature scales", self.m_inputs));
        }
        Ok(())
    }
}

/// Standardize with training statistics, clip to `±z_max`, scale to
/// `[-π, π]` and apply per-feature multipliers.
pub fn angle_map(z: ArrayView2<f64>, scaler: &Scaler, z_max: f64, scales: &[f64]) -> Result<Array2<f64>> {
    if scales.len() != z.ncols() {
        return Err(Error::DimensionMismatch {
            expected: z.ncols(),
            got: scales.len(),
        });
    }
    let mut a = scaler.transform(z)?;
    let k = std::f64::consts::PI / z_max;
    for (mut col, &l) in a.columns_mut().into_iter().zip(scales) {
        col.mapv_inplace(|v| v.clamp(-z_max, z_max) * k * l);
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Encode { qubit: usize, input: usize },
    Cx { control: usize, target: usize },
    Cz { a: usize, b: usize },
    Ry { qubit: usize, param: usize },
    Rz { qubit: usize, param: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub m_inputs: usize,
    pub n_params: usize,
    pub ops: Vec<Op>,
}

pub fn build_circuit(spec: &VqcSpec) -> Circuit {
    let n = spec.n_qubits;
    let mut ops = Vec::new();
    for r in 0..spec.reps {
        if r == 0 || spec.reupload {
            for j in 0..spec.m_inputs {
                ops.push(Op::Encode { qubit: j % n, input: j });
            }
        }
        if n >= 2 {
            for q in 0..n - 1 {
                ops.push(Op::Cx {
                    control: q,
                    target: q + 1,
                });
            }
            for q in 0..n - 1 {
                ops.push(Op::Cz { a: q, b: q + 1 });
            }
        }
        for q in 0..n {
            let base = 2 * (r * n + q);
            ops.push(Op::Ry { qubit: q, param: base });
            ops.push(Op::Rz {
                qubit: q,
                param: base + 1,
            });
        }
    }
    Circuit {
        n_qubits: n,
        m_inputs: spec.m_inputs,
        n_params: spec.n_params(),
        ops,
    }
}

impl Circuit {
    pub fn state(&self, theta: &[f64], x: &[f64]) -> Result<StateVector> {
        if theta.len() != self.n_params {
            return Err(Error::DimensionMismatch {
                expected: self.n_params,
                got: theta.len(),
            });
        }
        if x.len() != self.m_inputs {
            return Err(Error::DimensionMismatch {
                expected: self.m_inputs,
                got: x.len(),
            });
        }
        let mut s = StateVector::zero(self.n_qubits);
        for op in &self.ops {
            match *op {
                Op::Encode { qubit, input } => s.apply_ry(qubit, x[input])?,
                Op::Cx { control, target } => s.apply_cx(control, target)?,
                Op::Cz { a, b } => s.apply_cz(a, b)?,
                Op::Ry { qubit, param } => s.apply_ry(qubit, theta[param])?,
                Op::Rz { qubit, param } => s.apply_rz(qubit, theta[param])?,
            }
        }
        Ok(s)
    }

    pub fn count(&self, pred: impl Fn(&Op) -> bool) -> usize {
        self.ops.iter().filter(|op| pred(op)).count()
    }
}

/// Decodes basis-state probabilities into `n_classes` class probabilities.
pub fn decode(basis: &[f64], n_classes: usize, mapping: Mapping) -> Result<Vec<f64>> {
    match mapping {
        Mapping::Parity => {
            if n_classes != 2 {
                return Err(Error::InvalidConfig("parity readout needs 2 classes".into()));
            }
            let p0: f64 = basis
                .iter()
                .enumerate()
                .filter(|(s, _)| s.count_ones() % 2 == 0)
                .map(|(_, p)| p)
                .sum();
            let p0 = p0.clamp(0.0, 1.0);
            Ok(vec![p0, 1.0 - p0])
        }
        Mapping::Direct => {
            if basis.len() < n_classes {
                return Err(Error::InvalidConfig(format!(
                    "{} basis states cannot represent {n_classes} classes",
                    basis.len()
                )));
            }
            let head = &basis[..n_classes];
            let total: f64 = head.iter().sum();
            if total > 0.0 {
                Ok(head.iter().map(|p| p / total).collect())
            } else {
                Ok(vec![1.0 / n_classes as f64; n_classes])
            }
        }
    }
}

pub fn forward_probs(
    circuit: &Circuit,
    theta: &[f64],
    angles: ArrayView2<f64>,
    n_classes: usize,
    mapping: Mapping,
) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = (0..angles.nrows())
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let s = circuit.state(theta, &angles.row(i).to_vec())?;
            decode(&s.probabilities(), n_classes, mapping)
        })
        .collect::<Result<_>>()?;
    let mut p = Array2::zeros((rows.len(), n_classes));
    for (i, row) in rows.into_iter().enumerate() {
        for (c, v) in row.into_iter().enumerate() {
            p[[i, c]] = v;
        }
    }
    Ok(p)
}

/// Mean cross-entropy with probabilities floored before the log.
pub fn cross_entropy(probs: ArrayView2<f64>, y: &[usize]) -> f64 {
    weighted_cross_entropy(probs, y, None)
}

/// Cross-entropy averaged with per-class sample weights.
pub fn weighted_cross_entropy(probs: ArrayView2<f64>, y: &[usize], weights: Option<&[f64]>) -> f64 {
    let mut total = 0.0;
    let mut mass = 0.0;
    for (i, &c) in y.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[c]);
        total -= w * probs[[i, c]].max(PROB_FLOOR).ln();
        mass += w;
    }
    if mass > 0.0 {
        total / mass
    } else {
        0.0
    }
}

/// `N / (C n_c)` per class, so every class carries equal total weight.
pub fn balanced_weights(y: &[usize], n_classes: usize) -> Vec<f64> {
    let n = y.len() as f64;
    class_counts(y, n_classes)
        .into_iter()
        .map(|m| if m > 0 { n / (n_classes as f64 * m as f64) } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpsaConfig {
    pub steps: usize,
    pub batch: usize,
    pub a: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub clip_norm: f64,
    pub patience: usize,
    pub tolerance: f64,
    pub init_sigma: f64,
    pub seed: u64,
    /// Weight the loss so each class contributes equally.
    #[serde(default)]
    pub balance_classes: bool,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch: 64,
            a: 0.2,
            c: 0.15,
            alpha: 0.602,
            gamma: 0.101,
            clip_norm: 1.0,
            patience: 25,
            tolerance: 1e-4,
            init_sigma: 0.1,
            seed: 0,
            balance_classes: false,
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a > 0.0
            && self.c > 0.0
            && self.alpha > 0.0
            && self.alpha <= 1.0
            && self.gamma > 0.0
            && self.gamma <= 1.0
            && self.steps >= 1
            && self.batch >= 1
            && self.patience >= 1
            && self.clip_norm > 0.0
            && self.init_sigma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid SPSA settings {self:?}")))
        }
    }
}

/// Secant gradient estimate `((f+ - f-) / 2c) Δ`, rescaled to norm at most
/// `clip_norm`.
pub fn spsa_gradient(f_plus: f64, f_minus: f64, c_t: f64, delta: &[f64], clip_norm: f64) -> Vec<f64> {
    let k = (f_plus - f_minus) / (2.0 * c_t);
    let mut g: Vec<f64> = delta.iter().map(|d| k * d).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > clip_norm {
        let s = clip_norm / norm;
        g.iter_mut().for_each(|v| *v *= s);
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpsaRecord {
    pub steps_run: usize,
    pub best_loss: f64,
    pub losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Minimizes `loss(θ, batch)` where `batch` indexes `n_data` items.
pub fn spsa_minimize<F>(mut loss: F, n_params: usize, n_data: usize, cfg: &SpsaConfig) -> Result<(Vec<f64>, SpsaRecord)>
where
    F: FnMut(&[f64], &[usize]) -> Result<f64>,
{
    cfg.validate()?;
    if n_data == 0 {
        return Err(Error::EmptyDataset);
    }
    let batch = if cfg.batch > n_data {
        log::warn!("batch size {} exceeds {n_data} samples, clamping", cfg.batch);
        n_data
    } else {
        cfg.batch
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut theta: Vec<f64> = (0..n_params).map(|_| normal.sample(&mut rng)).collect();
    let mut best = f64::INFINITY;
    let mut no_improve = 0;
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut stopped_early = false;
    for t in 1..=cfg.steps {
        let tf = t as f64;
        let a_t = cfg.a / tf.powf(cfg.alpha);
        let c_t = cfg.c / tf.powf(cfg.gamma);
        let idx = rand::seq::index::sample(&mut rng, n_data, batch).into_vec();
        let delta: Vec<f64> = (0..n_params)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + c_t * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - c_t * d).collect();
        let f_plus = loss(&plus, &idx)?;
        let f_minus = loss(&minus, &idx)?;
        let g = spsa_gradient(f_plus, f_minus, c_t, &delta, cfg.clip_norm);
        theta.iter_mut().zip(&g).for_each(|(t, g)| *t -= a_t * g);
        let mb = 0.5 * (f_plus + f_minus);
        losses.push(mb);
        if mb < best - cfg.tolerance {
            best = mb;
            no_improve = 0;
        } else {
            no_improve += 1;
        }
        if no_improve >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    Ok((
        theta,
        SpsaRecord {
            steps_run: losses.len(),
            best_loss: best,
            losses,
            stopped_early,
        },
    ))
}

/// Trains circuit parameters on encoded angles with minibatch SPSA.
pub fn spsa_train(
    angles: ArrayView2<f64>,
    y: &[usize],
    spec: &VqcSpec,
    cfg: &SpsaConfig,
) -> Result<(Vec<f64>, SpsaRecord)> {
    spec.validate()?;
    if angles.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: angles.nrows(),
            got: y.len(),
        });
    }
    let circuit = build_circuit(spec);
    let weights = cfg.balance_classes.then(|| balanced_weights(y, spec.n_classes));
    let loss = |theta: &[f64], batch: &[usize]| {
        let a = angles.select(Axis(0), batch);
        let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
        let p = forward_probs(&circuit, theta, a.view(), spec.n_classes, spec.mapping)?;
        Ok(weighted_cross_entropy(p.view(), &yb, weights.as_deref()))
    };
    spsa_minimize(loss, spec.n_params(), y.len(), cfg)
}

/// Trained classifier: margin features to angles to class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqcModel {
    pub spec: VqcSpec,
    pub theta: Vec<f64>,
    pub scaler: Scaler,
    /// Binary decision threshold on `P(class 1)`; unused for more classes.
    pub threshold: f64,
}

impl VqcModel {
    pub fn probabilities(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        let a = angle_map(z, &self.scaler, self.spec.z_max, &self.spec.feature_scales)?;
        forward_probs(
            &build_circuit(&self.spec),
            &self.theta,
            a.view(),
            self.spec.n_classes,
            self.spec.mapping,
        )
    }

    pub fn predict(&self, z: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(decide(self.probabilities(z)?.view(), Some(self.threshold)))
    }
}

/// Class 1 iff `P1 >= τ` for binary problems with a threshold, else argmax
/// (ties to the lower class).
pub fn decide(probs: ArrayView2<f64>, threshold: Option<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| match threshold {
            Some(t) if row.len() == 2 => usize::from(row[1] >= t),
            _ => {
                let mut best = 0;
                for (c, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = c;
                    }
                }
                best
            }
        })
        .collect()
}

/// What threshold tuning and fold scoring maximize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetMetric {
    #[default]
    MacroF1,
    /// Recall of class 1 subject to a cap on the predicted-positive rate.
    /// Infeasible operating points score below every feasible one.
    RecallAtAlert { max_alert_rate: f64 },
}

impl TargetMetric {
    pub fn score(&self, y: &[usize], pred: &[usize], n_classes: usize) -> Result<f64> {
        let r = evaluate(y, pred, n_classes)?;
        Ok(match *self {
            TargetMetric::MacroF1 => r.macro_f1,
            TargetMetric::RecallAtAlert { max_alert_rate } => {
                let recall = r.per_class.get(1).map_or(0.0, |m| m.recall);
                let alert = r.predicted_rate(1);
                if alert <= max_alert_rate {
                    recall
                } else {
                    recall - 1.0 - (alert - max_alert_rate)
                }
            }
        })
    }
}

pub fn default_threshold_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Best threshold on the grid; ties go to the earlier grid value.
pub fn tune_threshold(probs: ArrayView2<f64>, y: &[usize], grid: &[f64], target: TargetMetric) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("threshold grid is empty".into()));
    }
    let mut best = (grid[0], f64::NEG_INFINITY);
    for &t in grid {
        let s = target.score(y, &decide(probs, Some(t)), 2)?;
        if s > best.1 {
            best = (t, s);
        }
    }
    Ok(best)
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(y: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument("need at least two folds".into()));
    }
    let counts = class_counts(y, n_classes);
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &n)| n < k) {
        return Err(Error::ClassTooSmall {
            class,
            count,
            needed: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for (c, &count) in counts.iter().enumerate().take(n_classes) {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        rows.shuffle(&mut rng);
        for (j, i) in rows.into_iter().enumerate() {
            folds[(j + offset) % k].push(i);
        }
        offset += count;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpCandidate {
    pub reps: usize,
    pub reupload: bool,
    pub steps: usize,
    pub batch: usize,
}

/// `L ∈ {1, 2, 3}` crossed with re-uploading on and off.
pub fn default_hp_space(steps: usize, batch: usize) -> Vec<HpCandidate> {
    let mut v = Vec::new();
    for reps in 1..=3 {
        for reupload in [true, false] {
            v.push(HpCandidate {
                reps,
                reupload,
                steps,
                batch,
            });
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldSettings {
    pub folds: usize,
    pub threshold_grid: Vec<f64>,
    pub target: TargetMetric,
    pub z_max: f64,
    pub feature_scales: Option<Vec<f64>>,
    pub n_qubits: Option<usize>,
    pub spsa: SpsaConfig,
    pub seed: u64,
}

impl Default for KFoldSettings {
    fn default() -> Self {
        Self {
            folds: 5,
            threshold_grid: default_threshold_grid(),
            target: TargetMetric::MacroF1,
            z_max: 3.0,
            feature_scales: None,
            n_qubits: None,
            spsa: SpsaConfig::default(),
            seed: 0,
        }
    }
}

/// One labelled margin matrix.
#[derive(Debug, Clone, Copy)]
pub struct Labelled<'a> {
    pub z: ArrayView2<'a, f64>,
    pub y: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpScore {
    pub hp: HpCandidate,
    pub fold_scores: Vec<f64>,
    pub fold_thresholds: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqcOutcome {
    pub model: VqcModel,
    pub hp: HpCandidate,
    pub cv: Vec<HpScore>,
    pub train_record: SpsaRecord,
    pub final_loss: f64,
    pub val_target: f64,
    pub val: MetricsReport,
    pub test: Option<MetricsReport>,
    pub val_alert_rate: f64,
    pub test_alert_rate: Option<f64>,
}

fn spec_for(settings: &KFoldSettings, m: usize, n_classes: usize, hp: &HpCandidate) -> VqcSpec {
    let mut spec = VqcSpec::new(m, n_classes, hp.reps, hp.reupload);
    if let Some(n) = settings.n_qubits {
        spec.n_qubits = n;
    }
    spec.z_max = settings.z_max;
    if let Some(l) = &settings.feature_scales {
        spec.feature_scales = l.clone();
    }
    spec
}

fn fit_model(z: ArrayView2<f64>, y: &[usize], spec: VqcSpec, spsa: &SpsaConfig) -> Result<(VqcModel, SpsaRecord)> {
    let scaler = Scaler::fit(z)?;
    let a = angle_map(z, &scaler, spec.z_max, &spec.feature_scales)?;
    let (theta, record) = spsa_train(a.view(), y, &spec, spsa)?;
    Ok((
        VqcModel {
            spec,
            theta,
            scaler,
            threshold: 0.5,
        },
        record,
    ))
}

/// Fold score under the target metric: thresholds are tuned per fold for
/// binary problems, argmax is used otherwise.
fn fold_score(probs: ArrayView2<f64>, y: &[usize], n_classes: usize, settings: &KFoldSettings) -> Result<(f64, f64)> {
    if n_classes == 2 {
        let (t, s) = tune_threshold(probs, y, &settings.threshold_grid, settings.target)?;
        Ok((s, t))
    } else {
        Ok((settings.target.score(y, &decide(probs, None), n_classes)?, 0.5))
    }
}

/// Selects hyperparameters by mean K-fold score on the training split,
/// retrains on the whole training split, tunes the binary threshold on the
/// validation split and reports validation and test metrics.
pub fn kfold_train(
    train: Labelled,
    val: Labelled,
    test: Option<Labelled>,
    n_classes: usize,
    hp_space: &[HpCandidate],
    settings: &KFoldSettings,
) -> Result<VqcOutcome> {
    if hp_space.is_empty() {
        return Err(Error::InvalidArgument("hyperparameter space is empty".into()));
    }
    let m = train.z.ncols();
    let folds = stratified_folds(train.y, n_classes, settings.folds, settings.seed)?;
    let jobs: Vec<(usize, usize)> = (0..hp_space.len())
        .flat_map(|h| (0..folds.len()).map(move |f| (h, f)))
        .collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(h, f)| {
            let hp = &hp_space[h];
            let held = &folds[f];
            let fit_rows: Vec<usize> = (0..train.y.len()).filter(|i| held.binary_search(i).is_err()).collect();
            let z_fit = train.z.select(Axis(0), &fit_rows);
            let y_fit: Vec<usize> = fit_rows.iter().map(|&i| train.y[i]).collect();
            let z_held = train.z.select(Axis(0), held);
            let y_held: Vec<usize> = held.iter().map(|&i| train.y[i]).collect();
            let spsa = SpsaConfig {
                steps: hp.steps,
                batch: hp.batch,
                seed: derive_seed(settings.spsa.seed, h as u64, f as u64 + 1),
                ..settings.spsa
            };
            let (model, _) = fit_model(z_fit.view(), &y_fit, spec_for(settings, m, n_classes, hp), &spsa)?;
            let p = model.probabilities(z_held.view())?;
            fold_score(p.view(), &y_held, n_classes, settings)
        })
        .collect::<Result<_>>()?;

    let mut cv = Vec::with_capacity(hp_space.len());
    for (h, hp) in hp_space.iter().enumerate() {
        let chunk = &results[h * folds.len()..(h + 1) * folds.len()];
        let fold_scores: Vec<f64> = chunk.iter().map(|r| r.0).collect();
        cv.push(HpScore {
            hp: *hp,
            mean: fold_scores.iter().sum::<f64>() / fold_scores.len() as f64,
            fold_thresholds: chunk.iter().map(|r| r.1).collect(),
            fold_scores,
        });
    }
    let mut best = 0;
    for (i, s) in cv.iter().enumerate() {
        if s.mean > cv[best].mean {
            best = i;
        }
    }
    let hp = hp_space[best];
    log::info!("selected hp {hp:?} with mean fold score {:.4}", cv[best].mean);

    let spsa = SpsaConfig {
        steps: hp.steps,
        batch: hp.batch,
        seed: derive_seed(settings.spsa.seed, best as u64, 0),
        ..settings.spsa
    };
    let (mut model, train_record) = fit_model(train.z, train.y, spec_for(settings, m, n_classes, &hp), &spsa)?;

    let eval_rows: Vec<usize> = if train.y.len() > 2048 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, 7, 7));
        let mut idx = rand::seq::index::sample(&mut rng, train.y.len(), 2048).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..train.y.len()).collect()
    };
    let p_eval = model.probabilities(train.z.select(Axis(0), &eval_rows).view())?;
    let y_eval: Vec<usize> = eval_rows.iter().map(|&i| train.y[i]).collect();
    let final_loss = cross_entropy(p_eval.view(), &y_eval);

    let p_val = model.probabilities(val.z)?;
    let val_target = if n_classes == 2 {
        let (t, s) = tune_threshold(p_val.view(), val.y, &settings.threshold_grid, settings.target)?;
        model.threshold = t;
        s
    } else {
        settings.target.score(val.y, &decide(p_val.view(), None), n_classes)?
    };
    let val_pred = decide(p_val.view(), Some(model.threshold));
    let val_report = evaluate(val.y, &val_pred, n_classes)?;
    let val_alert_rate = val_report.predicted_rate(1);
    let (test_report, test_alert_rate) = match test {
        Some(t) => {
            let r = evaluate(t.y, &model.predict(t.z)?, n_classes)?;
            let rate = r.predicted_rate(1);
            (Some(r), Some(rate))
        }
        None => (None, None),
    };
    Ok(VqcOutcome {
        model,
        hp,
        cv,
        train_record,
        final_loss,
        val_target,
        val: val_report,
        test: test_report,
        val_alert_rate,
        test_alert_rate,
    })
}

/// Fraction of rows predicted as class 1 at threshold `tau`.
pub fn alert_rate(probs: ArrayView2<f64>, tau: f64) -> f64 {
    let n = probs.nrows().max(1) as f64;
    decide(probs, Some(tau)).iter().filter(|&&c| c == 1).count() as f64 / n
}
