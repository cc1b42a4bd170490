use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    cross_entropy, forward_pass, gradient, new_rng, Optimizer, Params, RelationalView, RgcnConfig, RgcnError, RgcnModel,
};
use crate::hetgraph::{LabelStore, PoliticalClass, Provenance};
use crate::par::{self, Execution};

/// A labeled node (local view index) and its class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Target {
    pub node: u32,
    pub class: usize,
}

/// Labeled products present in the view whose class the model predicts.
/// Model-provenance labels are used only when `include_model` is set.
pub fn targets_from_labels(
    view: &RelationalView,
    labels: &LabelStore,
    classes: &[PoliticalClass],
    include_model: bool,
) -> Vec<Target> {
    labels
        .iter()
        .filter(|l| include_model || l.provenance != Provenance::Model)
        .filter(|l| classes.contains(&l.class))
        .filter_map(|l| {
            view.product(&l.product).map(|node| Target {
                node,
                class: l.class.index(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Split {
    pub train: Vec<Target>,
    pub val: Vec<Target>,
    pub test: Vec<Target>,
}

/// Per-class shuffle and cut; every class keeps at least one training node.
pub fn stratified_split(
    targets: &[Target],
    fractions: [f64; 3],
    classes: usize,
    seed: u64,
) -> Result<Split, RgcnError> {
    let mut rng = new_rng(seed, 0x517);
    let mut split = Split::default();
    for c in 0..classes {
        let mut members: Vec<Target> = targets.iter().copied().filter(|t| t.class == c).collect();
        members.sort();
        members.dedup_by_key(|t| t.node);
        if members.is_empty() {
            return Err(RgcnError::Split(format!(
                "class {} has no labeled nodes",
                PoliticalClass::ALL[c]
            )));
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let n_val = ((n as f64 * fractions[1]).round() as usize).min(n - 1);
        let n_test = ((n as f64 * fractions[2]).round() as usize).min(n - 1 - n_val);
        split.val.extend_from_slice(&members[..n_val]);
        split.test.extend_from_slice(&members[n_val..n_val + n_test]);
        split.train.extend_from_slice(&members[n_val + n_test..]);
    }
    if let Some(t) = targets.iter().find(|t| t.class >= classes) {
        return Err(RgcnError::Split(format!(
            "class index {} outside model classes",
            t.class
        )));
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best validation accuracy (ties: lower loss).
    pub model: RgcnModel,
    pub split: Split,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochMetrics {
        &self.model.history[self.best_epoch]
    }
}

fn accuracy(logits: &Array2<f64>, targets: &[Target]) -> Option<f64> {
    if targets.is_empty() {
        return None;
    }
    let hits = targets
        .iter()
        .filter(|t| {
            let row = logits.row(t.node as usize);
            let arg = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b })
                .0;
            arg == t.class
        })
        .count();
    Some(hits as f64 / targets.len() as f64)
}

struct OptState {
    kind: Optimizer,
    m: Params,
    v: Params,
    t: i32,
}

impl OptState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(kind: Optimizer, like: &Params) -> Self {
        OptState {
            kind,
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut Params, grad: &Params, lr: f64) {
        self.t += 1;
        let (b1, b2) = (Self::BETA1, Self::BETA2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            match self.kind {
                Optimizer::Gd => p.scaled_add(-lr, g),
                Optimizer::Momentum => {
                    m.zip_mut_with(g, |mi, &gi| *mi = b1 * *mi + gi);
                    p.scaled_add(-lr, m);
                }
                Optimizer::Adam => {
                    ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|pi, mi, vi, &gi| {
                        *mi = b1 * *mi + (1.0 - b1) * gi;
                        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                        *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + Self::EPS);
                    });
                }
            }
        }
    }
}

/// Scales `grad` in place so its global norm is at most `clip`. Returns the
/// norm before clipping.
pub(crate) fn clip_global_norm(grad: &mut Params, clip: f64) -> f64 {
    let norm = grad.sq_norm().sqrt();
    if norm > clip {
        let s = clip / norm;
        for t in grad.tensors_mut() {
            t.mapv_inplace(|x| x * s);
        }
    }
    norm
}

fn diverged(
    epoch: usize,
    cfg: &RgcnConfig,
    view: &RelationalView,
    params: Params,
    history: Vec<EpochMetrics>,
) -> RgcnError {
    RgcnError::Diverged {
        epoch,
        last_good: Box::new(RgcnModel {
            config: cfg.clone(),
            params,
            keys: view.keys.clone(),
            history,
        }),
    }
}

/// Full-batch training on a stratified split of `targets`.
pub fn train(
    view: &RelationalView,
    targets: &[Target],
    cfg: &RgcnConfig,
    exec: Execution,
) -> Result<TrainOutcome, RgcnError> {
    cfg.validate()?;
    let split = stratified_split(targets, cfg.split, cfg.classes, cfg.seed)?;
    let mut rng = new_rng(cfg.seed, 1);
    let mut params = Params::init(view.len(), cfg, &mut rng);
    let mut opt = OptState::new(cfg.optimizer, &params);
    let mut history: Vec<EpochMetrics> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, Params)> = None;
    let key = |m: &EpochMetrics| (m.val_acc.unwrap_or(m.train_acc), -m.val_loss.unwrap_or(m.train_loss));

    for epoch in 0..cfg.epochs {
        let (loss, mut grad) = gradient(&params, view, &split.train, cfg, Some(&mut rng), exec);
        if !loss.is_finite() || grad.sq_norm().is_nan() {
            return Err(diverged(epoch, cfg, view, best.map_or(params, |b| b.1), history));
        }
        let grad_norm = clip_global_norm(&mut grad, cfg.clip);
        opt.step(&mut params, &grad, cfg.lr);

        let (logits, _) = forward_pass(&params, view, cfg, None, exec);
        let eval = |t: &[Target]| (!t.is_empty()).then(|| cross_entropy(&logits, t));
        let m = EpochMetrics {
            epoch,
            train_loss: cross_entropy(&logits, &split.train),
            train_acc: accuracy(&logits, &split.train).unwrap_or(0.0),
            val_loss: eval(&split.val),
            val_acc: accuracy(&logits, &split.val),
            test_loss: eval(&split.test),
            test_acc: accuracy(&logits, &split.test),
            grad_norm,
        };
        let better = match &best {
            None => true,
            Some((b, _)) => key(&m) > key(&history[*b]),
        };
        if !m.train_loss.is_finite() {
            return Err(diverged(epoch, cfg, view, best.map_or(params, |b| b.1), history));
        }
        history.push(m);
        if better {
            best = Some((epoch, params.clone()));
        }
    }
    let (best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model: RgcnModel {
            config: cfg.clone(),
            params,
            keys: view.keys.clone(),
            history,
        },
        split,
        best_epoch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    /// Sample uniformly in log space.
    #[serde(default)]
    pub log: bool,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi, log: false }
    }

    pub fn log(lo: f64, hi: f64) -> Self {
        Range { lo, hi, log: true }
    }

    pub fn point(x: f64) -> Self {
        Range::new(x, x)
    }

    fn valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi && (!self.log || self.lo > 0.0)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        if self.log {
            rng.gen_range(self.lo.ln()..=self.hi.ln()).exp()
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub epochs: Range,
    pub layers: Range,
    pub hidden: Range,
    pub lr: Range,
    pub clip: Range,
    pub l2: Range,
    pub dropout: Range,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            epochs: Range::new(20.0, 200.0),
            layers: Range::new(1.0, 4.0),
            hidden: Range::new(4.0, 64.0),
            lr: Range::log(1e-3, 1e-1),
            clip: Range::new(0.5, 10.0),
            l2: Range::log(1e-8, 1e-3),
            dropout: Range::new(0.0, 0.8),
        }
    }
}

impl SearchSpace {
    /// A space containing only `cfg`.
    pub fn point(cfg: &RgcnConfig) -> Self {
        SearchSpace {
            epochs: Range::point(cfg.epochs as f64),
            layers: Range::point(cfg.layers as f64),
            hidden: Range::point(cfg.hidden as f64),
            lr: Range::point(cfg.lr),
            clip: Range::point(cfg.clip),
            l2: Range::point(cfg.l2),
            dropout: Range::point(cfg.dropout),
        }
    }

    fn ranges(&self) -> [&Range; 7] {
        [
            &self.epochs,
            &self.layers,
            &self.hidden,
            &self.lr,
            &self.clip,
            &self.l2,
            &self.dropout,
        ]
    }

    fn sample<R: Rng>(&self, base: &RgcnConfig, rng: &mut R) -> RgcnConfig {
        let int = |x: f64| x.round().max(1.0) as usize;
        RgcnConfig {
            epochs: int(self.epochs.sample(rng)),
            layers: int(self.layers.sample(rng)),
            hidden: int(self.hidden.sample(rng)),
            lr: self.lr.sample(rng),
            clip: self.clip.sample(rng),
            l2: self.l2.sample(rng),
            dropout: self.dropout.sample(rng).min(0.95),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub index: usize,
    pub config: RgcnConfig,
    pub val_acc: f64,
    pub val_loss: f64,
    pub test_acc: Option<f64>,
    pub diverged: bool,
}

/// Seeded random search. Trials share `base.seed`, so they see the same
/// split; ranked by validation accuracy, then validation loss.
pub fn hyperparameter_search(
    view: &RelationalView,
    targets: &[Target],
    space: &SearchSpace,
    base: &RgcnConfig,
    budget: usize,
    seed: u64,
    exec: Execution,
) -> Result<(RgcnConfig, Vec<Trial>), RgcnError> {
    if budget == 0 {
        return Err(RgcnError::InvalidConfig("search budget must be at least 1".into()));
    }
    if space.ranges().iter().any(|r| !r.valid()) {
        return Err(RgcnError::InvalidConfig("empty search space".into()));
    }
    let configs: Vec<RgcnConfig> = (0..budget)
        .map(|i| space.sample(base, &mut new_rng(seed, i as u64)))
        .collect();
    let results = par::map_slice(exec, &configs, |cfg| train(view, targets, cfg, exec));
    let mut trials = Vec::with_capacity(budget);
    for (index, (config, res)) in configs.into_iter().zip(results).enumerate() {
        let trial = match res {
            Ok(out) => {
                let b = out.best();
                Trial {
                    index,
                    val_acc: b.val_acc.unwrap_or(b.train_acc),
                    val_loss: b.val_loss.unwrap_or(b.train_loss),
                    test_acc: b.test_acc,
                    config,
                    diverged: false,
                }
            }
            Err(RgcnError::Diverged { .. }) => Trial {
                index,
                config,
                val_acc: 0.0,
                val_loss: f64::INFINITY,
                test_acc: None,
                diverged: true,
            },
            Err(e) => return Err(e),
        };
        trials.push(trial);
    }
    let best = trials
        .iter()
        .min_by(|a, b| {
            b.val_acc
                .total_cmp(&a.val_acc)
                .then(a.val_loss.total_cmp(&b.val_loss))
                .then(a.index.cmp(&b.index))
        })
        .expect("budget >= 1");
    Ok((best.config.clone(), trials))
}
