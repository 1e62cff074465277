//! Small hand-built record sets with known CRA behaviour.

use crate::types::{CertOutput, Norm, PredictionRecord, RecordSet};

const FIXTURE_CLASSES: u32 = 10;
const FIXTURE_EPSILON: f64 = 0.1;

/// What a constituent outputs on records outside its certified-correct range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Completion {
    /// A fixed wrong label, uncertified.
    #[default]
    WrongUncertified,
    /// The same fixed wrong label, certified.
    WrongCertified,
}

fn wrong_label(y: u32) -> u32 {
    (y + 1) % FIXTURE_CLASSES
}

fn build(
    k: usize,
    good: &[&dyn Fn(usize) -> bool],
    off_range: impl Fn(usize, usize, u32) -> CertOutput,
) -> RecordSet {
    let records = (0..k)
        .map(|i| {
            let y = (i as u32) % FIXTURE_CLASSES;
            let outputs = good
                .iter()
                .enumerate()
                .map(|(m, g)| {
                    if g(i) {
                        CertOutput::certified(y)
                    } else {
                        off_range(m, i, y)
                    }
                })
                .collect();
            PredictionRecord::new(format!("x{i}"), y, outputs)
        })
        .collect();
    RecordSet::new(
        FIXTURE_CLASSES,
        good.len(),
        FIXTURE_EPSILON,
        Norm::Linf,
        records,
    )
    .expect("fixture is well-formed")
}

/// Three constituents over 100 records, certified-correct on samples
/// `0..=49`, `25..=74`, and `0..=24 ∪ 50..=74` respectively. Each has CRA 0.5;
/// uniform voting is certified-correct on `0..=74`.
pub fn build_example1_fixture() -> RecordSet {
    build_example1_fixture_with(Completion::WrongUncertified)
}

pub fn build_example1_fixture_with(completion: Completion) -> RecordSet {
    build(
        100,
        &[&|i| i <= 49, &|i| (25..=74).contains(&i), &|i| {
            i <= 24 || (50..=74).contains(&i)
        }],
        |_, _, y| CertOutput::new(wrong_label(y), completion == Completion::WrongCertified),
    )
}

/// Constituent 0 is certified-correct on 90% of records; constituents 1 and 2
/// on disjoint 5% slivers of the remainder. Off their ranges all three output
/// an uncertified wrong label.
pub fn dominant_model_fixture() -> RecordSet {
    build(
        100,
        &[&|i| i < 90, &|i| (90..95).contains(&i), &|i| i >= 95],
        |_, _, y| CertOutput::uncertified(wrong_label(y)),
    )
}

/// Mimics sequentially trained cascade members: each later constituent is
/// good mostly where earlier ones are not, with small overlaps. Off-range
/// outputs are uncertified, and right one time in three.
pub fn cascade_trained_fixture() -> RecordSet {
    build(
        100,
        &[&|i| i < 60, &|i| (55..80).contains(&i), &|i| {
            (78..90).contains(&i)
        }],
        |m, i, y| {
            if (i + m) % 3 == 0 {
                CertOutput::uncertified(y)
            } else {
                CertOutput::uncertified(wrong_label(y))
            }
        },
    )
}

/// Three constituents with identical outputs on every record.
pub fn symmetric_fixture() -> RecordSet {
    build(
        60,
        &[&|i| i % 2 == 0, &|i| i % 2 == 0, &|i| i % 2 == 0],
        |_, i, y| CertOutput::new(wrong_label(y), i % 3 == 0),
    )
}
