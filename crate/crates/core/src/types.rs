//! Domain types for certifiable-classifier outputs and the weighted vote tally.
//!
//! Everything the ensemblers see about a constituent is a [`CertOutput`]: the
//! predicted label plus a single certificate bit. No logits or model internals
//! ever cross this boundary.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack applied to every strict vote comparison in certificate conditions.
///
/// Kept at zero so that `a > b` means exactly that; changing it changes the
/// soundness semantics of the voting certificate.
pub const VOTE_EPS: f64 = 0.0;

/// Tolerance on `sum(w) == 1` for a normalized [`WeightVector`].
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Class index in `0..num_classes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u32);

impl Label {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for Label {
    fn from(v: u32) -> Self {
        Label(v)
    }
}

/// One constituent's answer at one input: a label and whether the
/// accompanying certifier claims local robustness there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CertOutput {
    pub label: Label,
    pub cert: bool,
}

impl CertOutput {
    pub fn new(label: u32, cert: bool) -> Self {
        Self {
            label: Label(label),
            cert,
        }
    }

    pub fn certified(label: u32) -> Self {
        Self::new(label, true)
    }

    pub fn uncertified(label: u32) -> Self {
        Self::new(label, false)
    }

    /// Whether this output counts towards certified robust accuracy for `truth`.
    #[inline]
    pub fn is_certified_correct(&self, truth: Label) -> bool {
        self.cert && self.label == truth
    }
}

impl fmt::Display for CertOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.label, u8::from(self.cert))
    }
}

/// Norm under which the robustness radius is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

impl Norm {
    /// Length of a 2D displacement under this norm.
    pub fn length2(self, dx: f64, dy: f64) -> f64 {
        match self {
            Norm::L2 => dx.hypot(dy),
            Norm::Linf => dx.abs().max(dy.abs()),
        }
    }

    /// Length under the dual norm, used to turn logit margins into distances.
    pub fn dual_length2(self, dx: f64, dy: f64) -> f64 {
        match self {
            Norm::L2 => dx.hypot(dy),
            Norm::Linf => dx.abs() + dy.abs(),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        })
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Norm::L2),
            "linf" | "l_inf" | "inf" => Ok(Norm::Linf),
            other => Err(Error::precondition(format!("unknown norm `{other}`"))),
        }
    }
}

/// One input together with its true label and the outputs of every constituent.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub input_id: String,
    pub true_label: Label,
    /// `outputs[i]` is what constituent `i` returned at this input.
    pub outputs: Vec<CertOutput>,
}

impl PredictionRecord {
    pub fn new(input_id: impl Into<String>, true_label: u32, outputs: Vec<CertOutput>) -> Self {
        Self {
            input_id: input_id.into(),
            true_label: Label(true_label),
            outputs,
        }
    }
}

/// A labelled dataset of constituent outputs, plus the radius and norm the
/// certificates were issued for. Epsilon and norm are metadata only; no
/// ensembler inspects them.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    records: Vec<PredictionRecord>,
    num_classes: u32,
    num_models: usize,
    epsilon: f64,
    norm: Norm,
    model_names: Option<Vec<String>>,
}

impl RecordSet {
    /// Validates arity and label ranges for every record.
    pub fn new(
        num_classes: u32,
        num_models: usize,
        epsilon: f64,
        norm: Norm,
        records: Vec<PredictionRecord>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::precondition(format!(
                "class count must be at least 2, got {num_classes}"
            )));
        }
        if num_models == 0 {
            return Err(Error::precondition(
                "record set needs at least one constituent",
            ));
        }
        for r in &records {
            check_record(r, num_classes, num_models).map_err(|e| e.in_record(&r.input_id))?;
        }
        Ok(Self {
            records,
            num_classes,
            num_models,
            epsilon,
            norm,
            model_names: None,
        })
    }

    pub fn with_model_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_models {
            return Err(Error::dimension(
                "model names",
                self.num_models,
                names.len(),
            ));
        }
        self.model_names = Some(names);
        Ok(self)
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn model_names(&self) -> Option<&[String]> {
        self.model_names.as_deref()
    }

    /// Display name of constituent `i`.
    pub fn model_name(&self, i: usize) -> String {
        match &self.model_names {
            Some(names) => names[i].clone(),
            None => format!("Model {i}"),
        }
    }

    /// Outputs of a single constituent across all records.
    pub fn constituent_outputs(&self, i: usize) -> Vec<CertOutput> {
        self.records.iter().map(|r| r.outputs[i]).collect()
    }

    /// Copy of this set with constituents reordered: new constituent `k` is old `order[k]`.
    pub fn permute_models(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.num_models {
            return Err(Error::dimension(
                "permutation",
                self.num_models,
                order.len(),
            ));
        }
        let mut seen = vec![false; order.len()];
        for &o in order {
            if o >= order.len() || std::mem::replace(&mut seen[o], true) {
                return Err(Error::precondition("not a permutation"));
            }
        }
        let records = self
            .records
            .iter()
            .map(|r| PredictionRecord {
                input_id: r.input_id.clone(),
                true_label: r.true_label,
                outputs: order.iter().map(|&o| r.outputs[o]).collect(),
            })
            .collect();
        let model_names = self
            .model_names
            .as_ref()
            .map(|n| order.iter().map(|&o| n[o].clone()).collect());
        Ok(Self {
            records,
            model_names,
            ..self.clone()
        })
    }
}

fn check_record(r: &PredictionRecord, num_classes: u32, num_models: usize) -> Result<()> {
    if r.outputs.len() != num_models {
        return Err(Error::dimension(
            "constituent outputs",
            num_models,
            r.outputs.len(),
        ));
    }
    if r.true_label.0 >= num_classes {
        return Err(Error::LabelOutOfRange {
            label: r.true_label.0,
            num_classes,
        });
    }
    for o in &r.outputs {
        if o.label.0 >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: o.label.0,
                num_classes,
            });
        }
    }
    Ok(())
}

/// Nonnegative constituent weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Normalizes any nonnegative vector with positive sum.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some(bad) = raw.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "weights must be finite and nonnegative, found {bad}"
            )));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidWeights("weights sum to zero".into()));
        }
        Ok(Self(raw.into_iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform weights need at least one constituent");
        Self(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, i: usize) -> Self {
        assert!(i < n, "one-hot index {i} out of range for {n} constituents");
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Weighted vote counts `v(j, c)` for one input.
///
/// Every aggregate is accumulated directly in constituent order rather than
/// derived from other aggregates, so equal multisets of weights always sum to
/// bit-identical values.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTally {
    certified: Vec<f64>,
    uncertified: Vec<f64>,
    per_label: Vec<f64>,
    uncertified_total: f64,
}

impl VoteTally {
    pub fn num_classes(&self) -> usize {
        self.per_label.len()
    }

    /// `v(j, c)`; labels beyond the class range read as zero.
    pub fn get(&self, label: Label, cert: bool) -> f64 {
        let table = if cert {
            &self.certified
        } else {
            &self.uncertified
        };
        table.get(label.index()).copied().unwrap_or(0.0)
    }

    /// `v(j) = v(j,0) + v(j,1)`.
    pub fn votes(&self, label: Label) -> f64 {
        self.per_label.get(label.index()).copied().unwrap_or(0.0)
    }

    /// `v(*, 0)`: all votes cast by uncertified constituents.
    pub fn uncertified_total(&self) -> f64 {
        self.uncertified_total
    }

    pub fn certified_votes(&self) -> &[f64] {
        &self.certified
    }

    pub fn total(&self) -> f64 {
        self.per_label.iter().sum()
    }
}

/// Accumulates `v(j, c) = sum_i w_i * [outputs[i] == (j, c)]`.
pub fn tally(outputs: &[CertOutput], w: &WeightVector, num_classes: u32) -> Result<VoteTally> {
    if outputs.len() != w.len() {
        return Err(Error::dimension(
            "outputs vs weights",
            w.len(),
            outputs.len(),
        ));
    }
    let m = num_classes as usize;
    let mut t = VoteTally {
        certified: vec![0.0; m],
        uncertified: vec![0.0; m],
        per_label: vec![0.0; m],
        uncertified_total: 0.0,
    };
    for (o, &wi) in outputs.iter().zip(w.as_slice()) {
        let j = o.label.index();
        if j >= m {
            return Err(Error::LabelOutOfRange {
                label: o.label.0,
                num_classes,
            });
        }
        if o.cert {
            t.certified[j] += wi;
        } else {
            t.uncertified[j] += wi;
            t.uncertified_total += wi;
        }
        t.per_label[j] += wi;
    }
    Ok(t)
}

/// Label with the most votes regardless of certificate; ties go to the lowest index.
pub fn argmax_label(t: &VoteTally) -> Label {
    let mut best = 0usize;
    for (j, &v) in t.per_label.iter().enumerate().skip(1) {
        if v > t.per_label[best] {
            best = j;
        }
    }
    Label(best as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outs(v: &[(u32, u8)]) -> Vec<CertOutput> {
        v.iter().map(|&(l, c)| CertOutput::new(l, c == 1)).collect()
    }

    #[test]
    fn tally_hand_enumeration() {
        let t = tally(
            &outs(&[(0, 1), (0, 1), (1, 0)]),
            &WeightVector::uniform(3),
            2,
        )
        .unwrap();
        assert!((t.get(Label(0), true) - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.get(Label(1), false) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.get(Label(0), false), 0.0);
        assert_eq!(t.get(Label(1), true), 0.0);
    }

    #[test]
    fn tally_single_model() {
        let t = tally(&outs(&[(2, 1)]), &WeightVector::uniform(1), 3).unwrap();
        assert_eq!(t.get(Label(2), true), 1.0);
        assert_eq!(t.uncertified_total(), 0.0);
    }

    #[test]
    fn tally_all_uncertified() {
        let w = WeightVector::new(vec![0.7, 0.3]).unwrap();
        let t = tally(&outs(&[(0, 0), (1, 0)]), &w, 2).unwrap();
        assert!((t.uncertified_total() - 1.0).abs() < 1e-12);
        assert!((t.votes(Label(0)) - 0.7).abs() < 1e-12);
        assert!((t.votes(Label(1)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn tally_rejects_length_mismatch() {
        let err = tally(&outs(&[(0, 1)]), &WeightVector::uniform(2), 2).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn tally_rejects_out_of_range_label() {
        let err = tally(&outs(&[(5, 1)]), &WeightVector::uniform(1), 3).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 5, .. }));
    }

    #[test]
    fn argmax_tie_goes_to_lowest_label() {
        let t = tally(&outs(&[(1, 0), (0, 0)]), &WeightVector::uniform(2), 2).unwrap();
        assert_eq!(argmax_label(&t), Label(0));
    }

    #[test]
    fn argmax_unique_max() {
        let w = WeightVector::new(vec![0.2, 0.8]).unwrap();
        let t = tally(&outs(&[(0, 1), (3, 0)]), &w, 4).unwrap();
        assert_eq!(argmax_label(&t), Label(3));
    }

    #[test]
    fn argmax_all_zero_is_label_zero() {
        let empty = VoteTally {
            certified: vec![0.0; 3],
            uncertified: vec![0.0; 3],
            per_label: vec![0.0; 3],
            uncertified_total: 0.0,
        };
        assert_eq!(argmax_label(&empty), Label(0));
    }

    #[test]
    fn weight_vector_normalizes() {
        let w = WeightVector::new(vec![2.0, 6.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
        assert!(WeightVector::new(vec![]).is_err());
        assert!(WeightVector::new(vec![0.0, 0.0]).is_err());
        assert!(WeightVector::new(vec![1.0, -0.5]).is_err());
        assert!(WeightVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn record_set_validates_arity_and_labels() {
        let bad_arity = vec![PredictionRecord::new("a", 0, outs(&[(0, 1)]))];
        let err = RecordSet::new(2, 2, 0.1, Norm::Linf, bad_arity).unwrap_err();
        assert!(err.to_string().contains("record a"));

        let bad_label = vec![PredictionRecord::new("b", 0, outs(&[(7, 1)]))];
        assert!(RecordSet::new(2, 1, 0.1, Norm::Linf, bad_label).is_err());

        assert!(RecordSet::new(1, 1, 0.1, Norm::Linf, vec![]).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(Norm::L2.length2(3.0, 4.0), 5.0);
        assert_eq!(Norm::Linf.length2(3.0, -4.0), 4.0);
        assert_eq!(Norm::Linf.dual_length2(3.0, -4.0), 7.0);
        assert_eq!("LINF".parse::<Norm>().unwrap(), Norm::Linf);
        assert!("l1".parse::<Norm>().is_err());
    }
}
