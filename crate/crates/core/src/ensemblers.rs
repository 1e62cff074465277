//! Query-access ensemblers: each maps the N constituent outputs at an input to
//! one ensemble output, without looking at anything else.
//!
//! * [`cascade`] returns the first certified constituent, else the last one.
//!   Its certificate is not soundness-preserving.
//! * [`weighted_vote`] / [`uniform_vote`] pick the plurality label and certify
//!   only when the certified votes for it beat every rival even if all
//!   uncertified votes moved to that rival.
//! * [`permutation_cascade`] is the permutation-based cascade, evaluated in
//!   closed form; [`permutation_cascade_bruteforce`] enumerates permutations
//!   and exists as an oracle.

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{argmax_label, tally, CertOutput, Label, RecordSet, WeightVector, VOTE_EPS};

/// Largest constituent count accepted by the factorial oracle.
pub const BRUTEFORCE_MAX_MODELS: usize = 7;

/// Label returned by the permutation cascade when neither agreement condition holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    /// Most frequent predicted label, ties to the lowest index.
    #[default]
    Plurality,
    /// Pseudo-random label drawn from a stream keyed by the seed and the
    /// outputs themselves, so equal output vectors get equal labels.
    SeededRandom(u64),
}

/// How long the agreeing prefix must be for the permutation cascade to fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrefixBound {
    /// Index bound `j >= (N+1)/2`, i.e. a prefix of at least `(N+3)/2` models.
    #[default]
    Literal,
    /// Prefix of at least `(N+1)/2` models (a strict majority).
    Relaxed,
}

impl PrefixBound {
    /// Smallest `j` allowed by the condition's quantifier.
    fn min_index(self, n: usize) -> usize {
        match self {
            PrefixBound::Literal => n.div_ceil(2),
            PrefixBound::Relaxed => (n - 1) / 2,
        }
    }

    /// Number of agreeing constituents needed; may exceed `n`, in which case
    /// the condition can never hold.
    pub fn min_agreeing(self, n: usize) -> usize {
        self.min_index(n) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PermutationConfig {
    pub prefix_bound: PrefixBound,
    pub fallback: FallbackPolicy,
}

/// Which ensembling rule to apply.
#[derive(Debug, Clone, PartialEq)]
pub enum EnsemblerKind {
    Cascade,
    UniformVoting,
    WeightedVoting(WeightVector),
    PermutationCascade(PermutationConfig),
}

impl EnsemblerKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnsemblerKind::Cascade => "Cascading",
            EnsemblerKind::UniformVoting => "Uniform Voting",
            EnsemblerKind::WeightedVoting(_) => "Weighted Voting",
            EnsemblerKind::PermutationCascade(_) => "Permutation Cascade",
        }
    }

    /// Checks that this ensembler can run over `num_models` constituents.
    pub fn check_arity(&self, num_models: usize) -> Result<()> {
        match self {
            EnsemblerKind::WeightedVoting(w) if w.len() != num_models => Err(Error::dimension(
                "weights vs constituents",
                num_models,
                w.len(),
            )),
            EnsemblerKind::PermutationCascade(_) if num_models.is_multiple_of(2) => {
                Err(Error::precondition(format!(
                    "permutation cascade needs an odd number of constituents, got {num_models}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Ensemble output for one input.
    pub fn evaluate(&self, outputs: &[CertOutput], num_classes: u32) -> Result<CertOutput> {
        match self {
            EnsemblerKind::Cascade => cascade(outputs),
            EnsemblerKind::UniformVoting => uniform_vote(outputs, num_classes),
            EnsemblerKind::WeightedVoting(w) => weighted_vote(outputs, w, num_classes),
            EnsemblerKind::PermutationCascade(cfg) => {
                permutation_cascade(outputs, num_classes, *cfg)
            }
        }
    }
}

fn require_nonempty(outputs: &[CertOutput]) -> Result<()> {
    if outputs.is_empty() {
        return Err(Error::dimension("constituent outputs (at least)", 1, 0));
    }
    Ok(())
}

fn check_labels(outputs: &[CertOutput], num_classes: u32) -> Result<()> {
    match outputs.iter().find(|o| o.label.0 >= num_classes) {
        Some(o) => Err(Error::LabelOutOfRange {
            label: o.label.0,
            num_classes,
        }),
        None => Ok(()),
    }
}

/// First constituent whose certificate is 1; the last constituent if none is.
pub fn cascade(outputs: &[CertOutput]) -> Result<CertOutput> {
    require_nonempty(outputs)?;
    Ok(outputs
        .iter()
        .find(|o| o.cert)
        .copied()
        .unwrap_or(outputs[outputs.len() - 1]))
}

/// Weighted plurality label; certified iff for every other label `j`,
/// `v(label, 1) > v(*, 0) + v(j, 1)`.
pub fn weighted_vote(
    outputs: &[CertOutput],
    w: &WeightVector,
    num_classes: u32,
) -> Result<CertOutput> {
    let t = tally(outputs, w, num_classes)?;
    let top = argmax_label(&t);
    let lead = t.get(top, true);
    let slack = t.uncertified_total();
    let cert = (0..num_classes)
        .map(Label)
        .filter(|&j| j != top)
        .all(|j| lead > slack + t.get(j, true) + VOTE_EPS);
    Ok(CertOutput { label: top, cert })
}

/// Weighted voting with every constituent weighted `1/N`.
pub fn uniform_vote(outputs: &[CertOutput], num_classes: u32) -> Result<CertOutput> {
    require_nonempty(outputs)?;
    weighted_vote(outputs, &WeightVector::uniform(outputs.len()), num_classes)
}

fn plurality_label(outputs: &[CertOutput], num_classes: u32) -> Label {
    let mut counts = vec![0usize; num_classes as usize];
    for o in outputs {
        counts[o.label.index()] += 1;
    }
    let mut best = 0;
    for j in 1..counts.len() {
        if counts[j] > counts[best] {
            best = j;
        }
    }
    Label(best as u32)
}

fn fallback_label(outputs: &[CertOutput], num_classes: u32, policy: FallbackPolicy) -> Label {
    match policy {
        FallbackPolicy::Plurality => plurality_label(outputs, num_classes),
        FallbackPolicy::SeededRandom(seed) => {
            // FNV-1a over the outputs keeps the draw a function of the outputs alone.
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for o in outputs {
                for b in o
                    .label
                    .0
                    .to_le_bytes()
                    .into_iter()
                    .chain([u8::from(o.cert)])
                {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ h);
            Label(rng.gen_range(0..num_classes))
        }
    }
}

fn check_odd(n: usize) -> Result<()> {
    if n.is_multiple_of(2) {
        return Err(Error::precondition(format!(
            "permutation cascade needs an odd number of constituents, got {n}"
        )));
    }
    Ok(())
}

/// Permutation-based cascade in closed form.
///
/// Some ordering has an agreeing certified prefix long enough iff one exact
/// output `(y, 1)` occurs at least `min_agreeing(N)` times; likewise for the
/// label-only condition with label counts. Both thresholds exceed `N/2`, so at
/// most one label can satisfy either.
pub fn permutation_cascade(
    outputs: &[CertOutput],
    num_classes: u32,
    cfg: PermutationConfig,
) -> Result<CertOutput> {
    require_nonempty(outputs)?;
    let n = outputs.len();
    check_odd(n)?;
    check_labels(outputs, num_classes)?;

    let need = cfg.prefix_bound.min_agreeing(n);
    if need <= n {
        let m = num_classes as usize;
        let mut certified = vec![0usize; m];
        let mut any = vec![0usize; m];
        for o in outputs {
            any[o.label.index()] += 1;
            if o.cert {
                certified[o.label.index()] += 1;
            }
        }
        let certified_winners: Vec<usize> = (0..m).filter(|&y| certified[y] >= need).collect();
        assert!(
            certified_winners.len() <= 1,
            "two labels hold a strict majority"
        );
        if let Some(&y) = certified_winners.first() {
            return Ok(CertOutput::certified(y as u32));
        }
        let label_winners: Vec<usize> = (0..m).filter(|&y| any[y] >= need).collect();
        assert!(
            label_winners.len() <= 1,
            "two labels hold a strict majority"
        );
        if let Some(&y) = label_winners.first() {
            return Ok(CertOutput::uncertified(y as u32));
        }
    }
    Ok(CertOutput {
        label: fallback_label(outputs, num_classes, cfg.fallback),
        cert: false,
    })
}

/// Permutation-based cascade by enumerating all `N!` orderings. Test oracle only.
pub fn permutation_cascade_bruteforce(
    outputs: &[CertOutput],
    num_classes: u32,
    cfg: PermutationConfig,
) -> Result<CertOutput> {
    require_nonempty(outputs)?;
    let n = outputs.len();
    check_odd(n)?;
    if n > BRUTEFORCE_MAX_MODELS {
        return Err(Error::ResourceGuard(format!(
            "{n}! permutations exceeds the oracle limit of {BRUTEFORCE_MAX_MODELS} constituents"
        )));
    }
    check_labels(outputs, num_classes)?;

    let j_min = cfg.prefix_bound.min_agreeing(n) - 1;
    let c1 = |p: &[usize]| {
        (j_min..n).any(|j| (0..j).all(|i| outputs[p[i]].label == outputs[p[j]].label))
    };
    let c2 = |p: &[usize]| {
        (j_min..n).any(|j| outputs[p[j]].cert && (0..j).all(|i| outputs[p[i]] == outputs[p[j]]))
    };

    let mut via_c2: Option<CertOutput> = None;
    let mut via_c1: Option<Label> = None;
    for p in (0..n).permutations(n) {
        if c2(&p) {
            let out = outputs[p[0]];
            if let Some(prev) = via_c2 {
                assert_eq!(
                    prev, out,
                    "c2 holds for permutations with different leaders"
                );
            }
            via_c2 = Some(out);
        } else if c1(&p) {
            let label = outputs[p[0]].label;
            if let Some(prev) = via_c1 {
                assert_eq!(
                    prev, label,
                    "c1 holds for permutations with different leaders"
                );
            }
            via_c1 = Some(label);
        }
    }
    Ok(match (via_c2, via_c1) {
        (Some(out), _) => out,
        (None, Some(label)) => CertOutput { label, cert: false },
        (None, None) => CertOutput {
            label: fallback_label(outputs, num_classes, cfg.fallback),
            cert: false,
        },
    })
}

/// Runs an ensembler over every record, preserving order.
pub fn apply(kind: &EnsemblerKind, record_set: &RecordSet) -> Result<Vec<CertOutput>> {
    kind.check_arity(record_set.num_models())?;
    let m = record_set.num_classes();
    record_set
        .records()
        .par_iter()
        .map(|r| {
            kind.evaluate(&r.outputs, m)
                .map_err(|e| e.in_record(&r.input_id))
        })
        .collect()
}
