//! Learning voting weights that maximize a smoothed certified-robust-accuracy
//! objective over a labelled record set.
//!
//! For a record with true label `y` the vote margin is
//! `v(y,1) - v(*,0) - max_{j != y} v(j,1)`; the weighted-voting ensemble is
//! certified-correct on the record exactly when the margin is positive. The
//! 0/1 indicator is replaced by [`sigma_t`], a logistic that is flattened by a
//! temperature on the negative side only, and the mean over records is
//! maximized by full-batch gradient ascent on the simplex.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemblers::weighted_vote;
use crate::error::{Error, Result};
use crate::types::{tally, CertOutput, Label, RecordSet, WeightVector};

pub const DEFAULT_TEMPERATURE: f64 = 1e5;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-2;
pub const DEFAULT_EPOCHS: usize = 500;
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-7;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// How the simplex constraint is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parameterization {
    /// `w = softmax(theta)`; ascent runs on `theta`.
    #[default]
    SoftmaxReparam,
    /// Ascent runs on `w`, followed by Euclidean projection onto the simplex.
    ProjectedAscent,
}

/// Update rule applied to the ascent direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    /// Bias-corrected Adam steps. Step size does not depend on gradient
    /// scale, which matters when every margin starts negative and the
    /// temperature shrinks the gradient by `1/t`.
    #[default]
    Adam,
    /// `x += learning_rate * grad`.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightInit {
    /// `theta = 0`, i.e. uniform weights.
    #[default]
    Uniform,
    /// Random start drawn from `seed`.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub temperature: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub parameterization: Parameterization,
    pub optimizer: Optimizer,
    pub init: WeightInit,
    /// Stop once both the objective and the weights move less than this in one epoch.
    pub convergence_tol: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            parameterization: Parameterization::default(),
            optimizer: Optimizer::default(),
            init: WeightInit::default(),
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
        }
    }
}

impl LearnerConfig {
    fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::precondition("temperature must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::precondition("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::precondition("epochs must be at least 1"));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return Err(Error::precondition(
                "convergence tolerance must be nonnegative",
            ));
        }
        Ok(())
    }
}

/// Where the weights returned by [`learn_with_safety_net`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    Learned,
    OneHot(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyNet {
    pub source: WeightSource,
    pub selected: WeightVector,
    /// Exact certified-correct fraction at the learned weights.
    pub learned_exact: f64,
    /// Exact certified-correct fraction of each constituent alone.
    pub one_hot_exact: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerTrace {
    /// Smoothed objective of the iterate at the start of each epoch.
    pub objectives: Vec<f64>,
    /// Best iterate found by ascent.
    pub learned: WeightVector,
    pub final_objective: f64,
    pub safety_net: Option<SafetyNet>,
}

impl LearnerTrace {
    /// Running maximum of [`objectives`](Self::objectives).
    pub fn best_so_far(&self) -> Vec<f64> {
        self.objectives
            .iter()
            .scan(f64::NEG_INFINITY, |best, &o| {
                *best = best.max(o);
                Some(*best)
            })
            .collect()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigma(x)` for `x > 0`, `sigma(x / t)` otherwise.
pub fn sigma_t(x: f64, t: f64) -> f64 {
    if x > 0.0 {
        logistic(x)
    } else {
        logistic(x / t)
    }
}

fn sigma_t_derivative(x: f64, t: f64) -> f64 {
    if x > 0.0 {
        let s = logistic(x);
        s * (1.0 - s)
    } else {
        let s = logistic(x / t);
        s * (1.0 - s) / t
    }
}

/// Margin plus the rival label attaining the inner max (lowest label on ties).
fn margin_with_rival(
    outputs: &[CertOutput],
    w: &WeightVector,
    y: Label,
    num_classes: u32,
) -> Result<(f64, Label)> {
    if y.0 >= num_classes {
        return Err(Error::LabelOutOfRange {
            label: y.0,
            num_classes,
        });
    }
    let t = tally(outputs, w, num_classes)?;
    let mut rival: Option<(Label, f64)> = None;
    for j in (0..num_classes).map(Label).filter(|&j| j != y) {
        let v = t.get(j, true);
        if rival.is_none_or(|(_, best)| v > best) {
            rival = Some((j, v));
        }
    }
    // num_classes >= 2 guarantees a rival exists.
    let (rival, rival_votes) = rival.expect("at least two classes");
    Ok((t.get(y, true) - t.uncertified_total() - rival_votes, rival))
}

/// Vote margin `v(y,1) - v(*,0) - max_{j != y} v(j,1)` over every class `j != y`.
pub fn margin(outputs: &[CertOutput], w: &WeightVector, y: Label, num_classes: u32) -> Result<f64> {
    margin_with_rival(outputs, w, y, num_classes).map(|(d, _)| d)
}

fn require_records(rs: &RecordSet) -> Result<()> {
    if rs.is_empty() {
        return Err(Error::precondition("objective needs at least one record"));
    }
    Ok(())
}

/// Mean of `sigma_t(margin)` over the record set.
pub fn objective(rs: &RecordSet, w: &WeightVector, t: f64) -> Result<f64> {
    require_records(rs)?;
    let m = rs.num_classes();
    let mut sum = 0.0;
    for r in rs.records() {
        let d = margin(&r.outputs, w, r.true_label, m).map_err(|e| e.in_record(&r.input_id))?;
        sum += sigma_t(d, t);
    }
    Ok(sum / rs.len() as f64)
}

/// Fraction of records on which weighted voting returns `(true_label, 1)`.
///
/// Equal to the fraction with strictly positive margin: a positive margin makes
/// the true label the strict plurality and satisfies the certificate condition.
pub fn exact_objective(rs: &RecordSet, w: &WeightVector) -> Result<f64> {
    require_records(rs)?;
    let m = rs.num_classes();
    let mut hits = 0usize;
    for r in rs.records() {
        let out = weighted_vote(&r.outputs, w, m).map_err(|e| e.in_record(&r.input_id))?;
        if out.is_certified_correct(r.true_label) {
            hits += 1;
        }
    }
    Ok(hits as f64 / rs.len() as f64)
}

/// Smoothed objective and its (sub)gradient with respect to the weights.
///
/// The margin is linear in `w` once the rival label is fixed, so the gradient
/// of one record is `sigma_t'(margin) * a` with `a_i = [out_i = (y,1)] -
/// [cert_i = 0] - [out_i = (rival,1)]`.
pub fn objective_and_weight_gradient(
    rs: &RecordSet,
    w: &WeightVector,
    t: f64,
) -> Result<(f64, Vec<f64>)> {
    require_records(rs)?;
    let m = rs.num_classes();
    let n = rs.num_models();
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    for r in rs.records() {
        let (d, rival) = margin_with_rival(&r.outputs, w, r.true_label, m)
            .map_err(|e| e.in_record(&r.input_id))?;
        value += sigma_t(d, t);
        let slope = sigma_t_derivative(d, t);
        for (g, o) in grad.iter_mut().zip(&r.outputs) {
            let a = if !o.cert {
                -1.0
            } else if o.label == r.true_label {
                1.0
            } else if o.label == rival {
                -1.0
            } else {
                0.0
            };
            *g += slope * a;
        }
    }
    let k = rs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= k);
    Ok((value / k, grad))
}

/// Numerically stable softmax.
pub fn softmax(theta: &[f64]) -> Vec<f64> {
    let max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = theta.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_weights(theta: &[f64]) -> WeightVector {
    WeightVector::new(softmax(theta)).expect("softmax output is a valid distribution")
}

/// Pulls a weight-space gradient back through `w = softmax(theta)`.
fn softmax_pullback(w: &[f64], grad_w: &[f64]) -> Vec<f64> {
    let mean: f64 = w.iter().zip(grad_w).map(|(wi, gi)| wi * gi).sum();
    w.iter()
        .zip(grad_w)
        .map(|(wi, gi)| wi * (gi - mean))
        .collect()
}

/// Smoothed objective at `softmax(theta)` and its gradient with respect to `theta`.
pub fn objective_and_logit_gradient(
    rs: &RecordSet,
    theta: &[f64],
    t: f64,
) -> Result<(f64, Vec<f64>)> {
    if theta.len() != rs.num_models() {
        return Err(Error::dimension(
            "logits vs constituents",
            rs.num_models(),
            theta.len(),
        ));
    }
    let w = softmax_weights(theta);
    let (value, grad_w) = objective_and_weight_gradient(rs, &w, t)?;
    Ok((value, softmax_pullback(w.as_slice(), &grad_w)))
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumulative += ui;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if ui - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

struct Adam {
    first: Vec<f64>,
    second: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
        }
    }

    fn direction(&mut self, grad: &[f64], lr: f64) -> Vec<f64> {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        grad.iter()
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS)
            })
            .collect()
    }
}

fn initial_point(cfg: &LearnerConfig, n: usize) -> Vec<f64> {
    match cfg.init {
        WeightInit::Uniform => vec![0.0; n],
        WeightInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        }
    }
}

/// Gradient ascent on the smoothed objective. Returns the best iterate seen.
pub fn learn(rs: &RecordSet, cfg: &LearnerConfig) -> Result<(WeightVector, LearnerTrace)> {
    cfg.validate()?;
    require_records(rs)?;
    let n = rs.num_models();
    let t = cfg.temperature;

    if n == 1 {
        let w = WeightVector::uniform(1);
        let value = objective(rs, &w, t)?;
        let trace = LearnerTrace {
            objectives: vec![value],
            learned: w.clone(),
            final_objective: value,
            safety_net: None,
        };
        return Ok((w, trace));
    }

    let start = initial_point(cfg, n);
    // Either logits (softmax) or the weights themselves (projected).
    let mut params = match cfg.parameterization {
        Parameterization::SoftmaxReparam => start,
        Parameterization::ProjectedAscent => softmax(&start),
    };
    let weights_of = |p: &[f64]| match cfg.parameterization {
        Parameterization::SoftmaxReparam => softmax_weights(p),
        Parameterization::ProjectedAscent => {
            WeightVector::new(p.to_vec()).expect("projection stays on the simplex")
        }
    };

    let mut adam = Adam::new(n);
    let mut objectives = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, WeightVector)> = None;
    let mut previous: Option<(f64, WeightVector)> = None;

    for _ in 0..cfg.epochs {
        let w = weights_of(&params);
        let (value, grad_w) = objective_and_weight_gradient(rs, &w, t)?;
        objectives.push(value);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, w.clone()));
        }
        if let Some((prev_value, prev_w)) = &previous {
            let moved = prev_w
                .as_slice()
                .iter()
                .zip(w.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if (value - prev_value).abs() < cfg.convergence_tol && moved < cfg.convergence_tol {
                break;
            }
        }

        let grad = match cfg.parameterization {
            Parameterization::SoftmaxReparam => softmax_pullback(w.as_slice(), &grad_w),
            Parameterization::ProjectedAscent => grad_w,
        };
        let step = match cfg.optimizer {
            Optimizer::Adam => adam.direction(&grad, cfg.learning_rate),
            Optimizer::Plain => grad.iter().map(|g| cfg.learning_rate * g).collect(),
        };
        params.iter_mut().zip(&step).for_each(|(p, s)| *p += s);
        if cfg.parameterization == Parameterization::ProjectedAscent {
            params = project_to_simplex(&params);
        }
        previous = Some((value, w));
    }

    let (final_objective, learned) = best.expect("at least one epoch ran");
    let trace = LearnerTrace {
        objectives,
        learned: learned.clone(),
        final_objective,
        safety_net: None,
    };
    Ok((learned, trace))
}

/// [`learn`], then keep whichever of the learned weights and the one-hot
/// weight vectors scores best on the exact certified-correct fraction. Ties
/// favour the learned weights, then the lowest constituent index.
///
/// Weighted voting with the returned weights is never worse on `rs` than the
/// best single constituent.
pub fn learn_with_safety_net(
    rs: &RecordSet,
    cfg: &LearnerConfig,
) -> Result<(WeightVector, LearnerTrace)> {
    let (learned, mut trace) = learn(rs, cfg)?;
    let n = rs.num_models();
    let learned_exact = exact_objective(rs, &learned)?;
    let one_hot_exact = (0..n)
        .map(|i| exact_objective(rs, &WeightVector::one_hot(n, i)))
        .collect::<Result<Vec<_>>>()?;

    let mut source = WeightSource::Learned;
    let mut best = learned_exact;
    for (i, &v) in one_hot_exact.iter().enumerate() {
        if v > best {
            best = v;
            source = WeightSource::OneHot(i);
        }
    }
    let selected = match source {
        WeightSource::Learned => learned,
        WeightSource::OneHot(i) => WeightVector::one_hot(n, i),
    };
    trace.safety_net = Some(SafetyNet {
        source,
        selected: selected.clone(),
        learned_exact,
        one_hot_exact,
    });
    Ok((selected, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Norm, PredictionRecord};

    fn outs(v: &[(u32, u8)]) -> Vec<CertOutput> {
        v.iter().map(|&(l, c)| CertOutput::new(l, c == 1)).collect()
    }

    #[test]
    fn margin_examples() {
        let w = WeightVector::uniform(3);
        let d = margin(&outs(&[(1, 1), (1, 1), (4, 0)]), &w, Label(1), 5).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-12);

        let one = WeightVector::uniform(1);
        assert_eq!(margin(&outs(&[(2, 1)]), &one, Label(2), 3).unwrap(), 1.0);
        assert_eq!(margin(&outs(&[(0, 1)]), &one, Label(2), 3).unwrap(), -1.0);
        assert!(margin(&outs(&[(0, 1)]), &one, Label(3), 3).is_err());
        assert!(margin(&outs(&[(0, 1)]), &w, Label(0), 3).is_err());
    }

    #[test]
    fn sigma_t_values() {
        for t in [1.0, 10.0, 1e5] {
            assert_eq!(sigma_t(0.0, t), 0.5);
            assert!((sigma_t(3f64.ln(), t) - 0.75).abs() < 1e-15);
            assert!((sigma_t(-t * 3f64.ln(), t) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_t_is_monotone() {
        let t = 1e5;
        let xs: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.01).collect();
        for pair in xs.windows(2) {
            assert!(sigma_t(pair[1], t) >= sigma_t(pair[0], t));
        }
    }

    #[test]
    fn objective_single_certified_record() {
        let rs = RecordSet::new(
            2,
            1,
            0.1,
            Norm::L2,
            vec![PredictionRecord::new("a", 1, outs(&[(1, 1)]))],
        )
        .unwrap();
        let v = objective(&rs, &WeightVector::uniform(1), 1e5).unwrap();
        assert!((v - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn objective_zero_margin_is_half() {
        // (0,1) vs (1,1): margin 1/2 - 0 - 1/2 = 0 for both true labels.
        let rs = RecordSet::new(
            2,
            2,
            0.1,
            Norm::L2,
            vec![
                PredictionRecord::new("a", 0, outs(&[(0, 1), (1, 1)])),
                PredictionRecord::new("b", 1, outs(&[(0, 1), (1, 1)])),
            ],
        )
        .unwrap();
        assert_eq!(objective(&rs, &WeightVector::uniform(2), 1e5).unwrap(), 0.5);
    }

    #[test]
    fn objective_rejects_empty() {
        let rs = RecordSet::new(2, 1, 0.1, Norm::L2, vec![]).unwrap();
        assert!(objective(&rs, &WeightVector::uniform(1), 1.0).is_err());
        assert!(learn(&rs, &LearnerConfig::default()).is_err());
    }

    #[test]
    fn projection_lands_on_simplex() {
        for v in [
            vec![0.2, 0.3, 0.5],
            vec![1.0, 1.0, 1.0],
            vec![-3.0, 0.5, 4.0],
            vec![0.0, 0.0],
        ] {
            let p = project_to_simplex(&v);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{p:?}");
            assert!(p.iter().all(|&x| x >= 0.0));
        }
        assert_eq!(project_to_simplex(&[-3.0, 0.5, 4.0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_constituent_learns_unit_weight() {
        let rs = RecordSet::new(
            3,
            1,
            0.1,
            Norm::L2,
            vec![PredictionRecord::new("a", 0, outs(&[(2, 0)]))],
        )
        .unwrap();
        let (w, _) = learn(&rs, &LearnerConfig::default()).unwrap();
        assert_eq!(w.as_slice(), &[1.0]);
    }

    #[test]
    fn config_validation() {
        let rs = RecordSet::new(
            2,
            1,
            0.1,
            Norm::L2,
            vec![PredictionRecord::new("a", 0, outs(&[(0, 1)]))],
        )
        .unwrap();
        for cfg in [
            LearnerConfig {
                temperature: 0.0,
                ..Default::default()
            },
            LearnerConfig {
                learning_rate: -1.0,
                ..Default::default()
            },
            LearnerConfig {
                epochs: 0,
                ..Default::default()
            },
        ] {
            assert!(learn(&rs, &cfg).is_err());
        }
    }
}
