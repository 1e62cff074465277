//! Certified robust accuracy, standard accuracy, and the per-system report.

use std::fmt::Write as _;

use crate::ensemblers::{apply, EnsemblerKind, PermutationConfig};
use crate::error::{Error, Result};
use crate::types::{CertOutput, RecordSet, WeightVector};
use crate::weight_learner::{learn_with_safety_net, LearnerConfig};

fn check_lengths(predictions: &[CertOutput], rs: &RecordSet) -> Result<()> {
    if predictions.len() != rs.len() {
        return Err(Error::dimension(
            "predictions vs records",
            rs.len(),
            predictions.len(),
        ));
    }
    if rs.is_empty() {
        return Err(Error::precondition("cannot score an empty record set"));
    }
    Ok(())
}

/// Fraction of records where the prediction is `(true_label, 1)`.
pub fn cra(predictions: &[CertOutput], rs: &RecordSet) -> Result<f64> {
    check_lengths(predictions, rs)?;
    let hits = predictions
        .iter()
        .zip(rs.records())
        .filter(|(p, r)| p.is_certified_correct(r.true_label))
        .count();
    Ok(hits as f64 / rs.len() as f64)
}

/// Fraction of records whose predicted label is correct, ignoring the certificate.
pub fn accuracy(predictions: &[CertOutput], rs: &RecordSet) -> Result<f64> {
    check_lengths(predictions, rs)?;
    let hits = predictions
        .iter()
        .zip(rs.records())
        .filter(|(p, r)| p.label == r.true_label)
        .count();
    Ok(hits as f64 / rs.len() as f64)
}

/// Which constituent the "Single Model" row reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingleModelPolicy {
    /// Highest CRA, lowest index on ties.
    #[default]
    Best,
    /// Constituent 0, the head of the cascade.
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemId {
    Constituent(usize),
    SingleModel(usize),
    Cascade,
    UniformVoting,
    WeightedVoting,
    PermutationCascade,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemRow {
    pub id: SystemId,
    pub name: String,
    pub cra: f64,
    pub acc: f64,
    pub support: usize,
    pub weights: Option<WeightVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<SystemRow>,
}

impl EvalReport {
    pub fn row(&self, id: SystemId) -> Option<&SystemRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn single_model(&self) -> Option<&SystemRow> {
        self.rows
            .iter()
            .find(|r| matches!(r.id, SystemId::SingleModel(_)))
    }

    pub fn constituents(&self) -> impl Iterator<Item = &SystemRow> {
        self.rows
            .iter()
            .filter(|r| matches!(r.id, SystemId::Constituent(_)))
    }

    /// Fixed-width table with percentages to two decimals.
    pub fn render_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>7}  {:>7}  weights",
            "System", "CRA(%)", "Acc(%)", "k"
        );
        let _ = writeln!(out, "{}", "-".repeat(width + 36));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7.2}  {:>7.2}  {:>7}  {}",
                r.name,
                r.cra * 100.0,
                r.acc * 100.0,
                r.support,
                r.weights.as_ref().map(format_weights).unwrap_or_default()
            );
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("system,cra,acc,support,weights\n");
        for r in &self.rows {
            let weights = r
                .weights
                .as_ref()
                .map(|w| {
                    w.as_slice()
                        .iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:.2},{:.2},{},{}",
                r.name,
                r.cra * 100.0,
                r.acc * 100.0,
                r.support,
                weights
            );
        }
        out
    }
}

fn format_weights(w: &WeightVector) -> String {
    let parts: Vec<String> = w.as_slice().iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Voting weights; learned on the same records (with the one-hot safety
    /// net) when absent.
    pub weights: Option<WeightVector>,
    pub single_model: SingleModelPolicy,
    pub learner: LearnerConfig,
    pub permutation: PermutationConfig,
}

/// One row per constituent, the single-model baseline, and each ensembler.
pub fn evaluate_all(rs: &RecordSet, weights: Option<&WeightVector>) -> Result<EvalReport> {
    evaluate_with(
        rs,
        &EvalOptions {
            weights: weights.cloned(),
            ..Default::default()
        },
    )
}

/// [`evaluate_all`] with explicit options. The permutation-cascade row is
/// omitted when the constituent count is even.
pub fn evaluate_with(rs: &RecordSet, opts: &EvalOptions) -> Result<EvalReport> {
    let n = rs.num_models();
    let score =
        |id: SystemId, name: String, preds: &[CertOutput], weights: Option<WeightVector>| {
            Ok::<_, Error>(SystemRow {
                id,
                name,
                cra: cra(preds, rs)?,
                acc: accuracy(preds, rs)?,
                support: rs.len(),
                weights,
            })
        };

    let mut rows = Vec::new();
    for i in 0..n {
        rows.push(score(
            SystemId::Constituent(i),
            rs.model_name(i),
            &rs.constituent_outputs(i),
            None,
        )?);
    }
    let single = match opts.single_model {
        SingleModelPolicy::First => 0,
        SingleModelPolicy::Best => {
            let mut best = 0;
            for i in 1..n {
                if rows[i].cra > rows[best].cra {
                    best = i;
                }
            }
            best
        }
    };
    rows.push(SystemRow {
        id: SystemId::SingleModel(single),
        name: format!("Single Model ({})", rs.model_name(single)),
        ..rows[single].clone()
    });

    let weights = match &opts.weights {
        Some(w) => w.clone(),
        None => learn_with_safety_net(rs, &opts.learner)?.0,
    };
    let mut systems = vec![
        (SystemId::Cascade, EnsemblerKind::Cascade),
        (SystemId::UniformVoting, EnsemblerKind::UniformVoting),
        (
            SystemId::WeightedVoting,
            EnsemblerKind::WeightedVoting(weights.clone()),
        ),
    ];
    if n % 2 == 1 {
        systems.push((
            SystemId::PermutationCascade,
            EnsemblerKind::PermutationCascade(opts.permutation),
        ));
    }
    for (id, kind) in systems {
        let preds = apply(&kind, rs)?;
        let w = matches!(kind, EnsemblerKind::WeightedVoting(_)).then(|| weights.clone());
        rows.push(score(id, kind.name().to_owned(), &preds, w)?);
    }
    Ok(EvalReport { rows })
}

/// How much the certified-correct sets of the constituents overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapStats {
    pub support: usize,
    /// Number of records each constituent gets certified-correct.
    pub certified_correct: Vec<usize>,
    /// `pairwise[i][j]`: fraction of records certified-correct for both `i` and `j`.
    pub pairwise: Vec<Vec<f64>>,
}

impl OverlapStats {
    pub fn fraction(&self, i: usize) -> f64 {
        if self.support == 0 {
            0.0
        } else {
            self.certified_correct[i] as f64 / self.support as f64
        }
    }
}

pub fn overlap(rs: &RecordSet) -> OverlapStats {
    let n = rs.num_models();
    let mut certified_correct = vec![0usize; n];
    let mut both = vec![vec![0usize; n]; n];
    for r in rs.records() {
        let good: Vec<bool> = r
            .outputs
            .iter()
            .map(|o| o.is_certified_correct(r.true_label))
            .collect();
        for i in 0..n {
            if !good[i] {
                continue;
            }
            certified_correct[i] += 1;
            for j in 0..n {
                if good[j] {
                    both[i][j] += 1;
                }
            }
        }
    }
    let k = rs.len().max(1) as f64;
    let pairwise = both
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / k).collect())
        .collect();
    OverlapStats {
        support: rs.len(),
        certified_correct,
        pairwise,
    }
}
