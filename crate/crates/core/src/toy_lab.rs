//! Two-dimensional toy classifiers with exact certificates, grid record sets,
//! and a brute-force refuter for certificate soundness.
//!
//! A [`LinearClassifier`] certifies a point when a scaled-down copy of its
//! exact robustness radius exceeds epsilon, so every constituent is sound by
//! construction. [`find_violations`] scans a finite grid for certified points
//! with an epsilon-close neighbour of a different label. A non-empty result
//! proves an ensemble unsound; an empty one only says no witness exists at
//! the grid's resolution.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ensemblers::EnsemblerKind;
use crate::error::{Error, Result};
use crate::types::{CertOutput, Label, Norm, PredictionRecord, RecordSet};

pub use crate::fixtures::build_example1_fixture;

/// Grid step must be at most this fraction of epsilon.
pub const MAX_STEP_TO_EPSILON: f64 = 0.25;

/// Fraction of the exact radius that the certifier is willing to claim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Completeness {
    Global(f64),
    /// `inside` applies where `normal . x + offset >= 0`, `outside` elsewhere.
    HalfPlane {
        normal: [f64; 2],
        offset: f64,
        inside: f64,
        outside: f64,
    },
}

impl Completeness {
    pub fn factor(&self, x: [f64; 2]) -> f64 {
        match *self {
            Completeness::Global(rho) => rho,
            Completeness::HalfPlane {
                normal,
                offset,
                inside,
                outside,
            } => {
                if normal[0] * x[0] + normal[1] * x[1] + offset >= 0.0 {
                    inside
                } else {
                    outside
                }
            }
        }
    }

    fn factors(&self) -> Vec<f64> {
        match *self {
            Completeness::Global(rho) => vec![rho],
            Completeness::HalfPlane {
                inside, outside, ..
            } => vec![inside, outside],
        }
    }

    /// Multiplies every factor by `scale` (in `(0, 1]`).
    pub fn shrink(&self, scale: f64) -> Self {
        match *self {
            Completeness::Global(rho) => Completeness::Global(rho * scale),
            Completeness::HalfPlane {
                normal,
                offset,
                inside,
                outside,
            } => Completeness::HalfPlane {
                normal,
                offset,
                inside: inside * scale,
                outside: outside * scale,
            },
        }
    }
}

/// Multiclass affine classifier on the plane with exact margin certification.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    rows: Vec<[f64; 2]>,
    biases: Vec<f64>,
    norm: Norm,
    completeness: Completeness,
}

impl LinearClassifier {
    pub fn new(
        rows: Vec<[f64; 2]>,
        biases: Vec<f64>,
        norm: Norm,
        completeness: Completeness,
    ) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::precondition(
                "a classifier needs at least two classes",
            ));
        }
        if rows.len() != biases.len() {
            return Err(Error::dimension(
                "biases vs weight rows",
                rows.len(),
                biases.len(),
            ));
        }
        if completeness
            .factors()
            .iter()
            .any(|&r| !(r > 0.0 && r <= 1.0))
        {
            return Err(Error::precondition(
                "completeness factors must lie in (0, 1]",
            ));
        }
        Ok(Self {
            rows,
            biases,
            norm,
            completeness,
        })
    }

    /// Logits `u_k . (x - center)` for unit directions at the given angles.
    pub fn from_directions(
        angles: &[f64],
        center: [f64; 2],
        norm: Norm,
        completeness: Completeness,
    ) -> Result<Self> {
        let rows: Vec<[f64; 2]> = angles.iter().map(|a| [a.cos(), a.sin()]).collect();
        let biases = rows
            .iter()
            .map(|r| -(r[0] * center[0] + r[1] * center[1]))
            .collect();
        Self::new(rows, biases, norm, completeness)
    }

    pub fn num_classes(&self) -> u32 {
        self.rows.len() as u32
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn completeness(&self) -> Completeness {
        self.completeness
    }

    pub fn with_completeness(&self, completeness: Completeness) -> Result<Self> {
        Self::new(
            self.rows.clone(),
            self.biases.clone(),
            self.norm,
            completeness,
        )
    }

    pub fn logits(&self, x: [f64; 2]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.biases)
            .map(|(r, b)| r[0] * x[0] + r[1] * x[1] + b)
            .collect()
    }

    /// Argmax of the logits, lowest index on ties.
    pub fn predict(&self, x: [f64; 2]) -> Label {
        let f = self.logits(x);
        let mut best = 0;
        for k in 1..f.len() {
            if f[k] > f[best] {
                best = k;
            }
        }
        Label(best as u32)
    }

    /// Distance from `x` to the nearest point where the prediction can change.
    pub fn exact_radius(&self, x: [f64; 2]) -> f64 {
        let f = self.logits(x);
        let top = self.predict(x).index();
        let mut radius = f64::INFINITY;
        for k in (0..f.len()).filter(|&k| k != top) {
            let dx = self.rows[top][0] - self.rows[k][0];
            let dy = self.rows[top][1] - self.rows[k][1];
            let scale = self.norm.dual_length2(dx, dy);
            // Parallel rows never meet: the gap is constant, so that rival can't take over.
            if scale == 0.0 {
                if f[top] == f[k] {
                    return 0.0;
                }
                continue;
            }
            radius = radius.min((f[top] - f[k]) / scale);
        }
        radius
    }
}

/// Label at `x`, certified when the completeness-scaled exact radius exceeds `epsilon`.
pub fn certify_linear(c: &LinearClassifier, x: [f64; 2], epsilon: f64) -> CertOutput {
    let label = c.predict(x);
    let radius = c.completeness.factor(x) * c.exact_radius(x);
    CertOutput {
        label,
        cert: radius > epsilon,
    }
}

/// Axis-aligned box and requested spacing for a point grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub h: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            xmin: -1.0,
            xmax: 1.0,
            ymin: -1.0,
            ymax: 1.0,
            h: 0.01,
        }
    }
}

impl GridSpec {
    fn counts(&self) -> Result<(usize, usize)> {
        if self.h.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || self.xmax.partial_cmp(&self.xmin) != Some(std::cmp::Ordering::Greater)
            || self.ymax.partial_cmp(&self.ymin) != Some(std::cmp::Ordering::Greater)
        {
            return Err(Error::precondition("grid needs h > 0 and a non-empty box"));
        }
        let nx = ((self.xmax - self.xmin) / self.h).round() as usize + 1;
        let ny = ((self.ymax - self.ymin) / self.h).round() as usize + 1;
        Ok((nx, ny))
    }

    fn coordinates(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (nx, ny) = self.counts()?;
        let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| lo + (hi - lo) * (i as f64) / ((n - 1) as f64))
                .collect()
        };
        Ok((
            axis(self.xmin, self.xmax, nx),
            axis(self.ymin, self.ymax, ny),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub px: f64,
    pub py: f64,
    pub truth: Label,
    pub outputs: Vec<CertOutput>,
}

/// Row-major grid of points (`y` outer, `x` inner) with every constituent's
/// output at each point.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGrid {
    nx: usize,
    ny: usize,
    points: Vec<GridPoint>,
}

impl ToyGrid {
    pub fn from_points(nx: usize, ny: usize, points: Vec<GridPoint>) -> Result<Self> {
        if nx * ny != points.len() {
            return Err(Error::dimension("grid points", nx * ny, points.len()));
        }
        if let Some(first) = points.first() {
            let n = first.outputs.len();
            if let Some(p) = points.iter().find(|p| p.outputs.len() != n) {
                return Err(Error::dimension(
                    "outputs per grid point",
                    n,
                    p.outputs.len(),
                ));
            }
        }
        Ok(Self { nx, ny, points })
    }

    pub fn empty() -> Self {
        Self {
            nx: 0,
            ny: 0,
            points: Vec::new(),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn num_models(&self) -> usize {
        self.points.first().map_or(0, |p| p.outputs.len())
    }

    /// One past the largest label seen (at least 2). Classes that never occur
    /// cannot change a vote or its certificate, so this is safe for voting.
    pub fn num_classes(&self) -> u32 {
        self.points
            .iter()
            .flat_map(|p| p.outputs.iter().map(|o| o.label).chain([p.truth]))
            .map(|l| l.0 + 1)
            .max()
            .unwrap_or(0)
            .max(2)
    }

    /// Spacing along x and y.
    pub fn steps(&self) -> (f64, f64) {
        let step = |n: usize, first: f64, last: f64| {
            if n > 1 {
                (last - first) / (n - 1) as f64
            } else {
                0.0
            }
        };
        if self.points.is_empty() {
            return (0.0, 0.0);
        }
        let first = &self.points[0];
        let last = &self.points[self.points.len() - 1];
        (
            step(self.nx, first.px, last.px),
            step(self.ny, first.py, last.py),
        )
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn constituent_outputs(&self, i: usize) -> Vec<CertOutput> {
        self.points.iter().map(|p| p.outputs[i]).collect()
    }

    /// Ensemble output at every grid point.
    pub fn ensemble(&self, kind: &EnsemblerKind) -> Result<Vec<CertOutput>> {
        kind.check_arity(self.num_models())?;
        let m = self.num_classes();
        self.points
            .par_iter()
            .map(|p| kind.evaluate(&p.outputs, m))
            .collect()
    }

    /// Grid as a record set labelled by the ground truth.
    pub fn to_record_set(&self, epsilon: f64, norm: Norm) -> Result<RecordSet> {
        let records = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| PredictionRecord {
                input_id: format!("p{i}"),
                true_label: p.truth,
                outputs: p.outputs.clone(),
            })
            .collect();
        RecordSet::new(
            self.num_classes(),
            self.num_models().max(1),
            epsilon,
            norm,
            records,
        )
    }
}

/// Evaluates constituents and ground truth on a grid.
pub fn evaluate_grid(
    constituents: &[LinearClassifier],
    truth: &LinearClassifier,
    spec: &GridSpec,
    epsilon: f64,
) -> Result<ToyGrid> {
    let (xs, ys) = spec.coordinates()?;
    let points = ys
        .iter()
        .flat_map(|&py| xs.iter().map(move |&px| [px, py]))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|x| GridPoint {
            px: x[0],
            py: x[1],
            truth: truth.predict(x),
            outputs: constituents
                .iter()
                .map(|c| certify_linear(c, x, epsilon))
                .collect(),
        })
        .collect();
    ToyGrid::from_points(xs.len(), ys.len(), points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Three disagreeing three-class constituents with partly weakened certifiers.
    Fig1,
    /// Three identical constituents.
    Agree,
    /// Two binary constituents arranged around a designated witness pair.
    Thm1Minimal,
    /// Random three-class constituents with random half-plane completeness.
    Random,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Scenario::Fig1),
            "agree" => Ok(Scenario::Agree),
            "thm1-minimal" => Ok(Scenario::Thm1Minimal),
            "random" => Ok(Scenario::Random),
            other => Err(Error::precondition(format!("unknown scenario `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Fig1 => "fig1",
            Scenario::Agree => "agree",
            Scenario::Thm1Minimal => "thm1-minimal",
            Scenario::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyParams {
    pub grid: GridSpec,
    pub epsilon: f64,
    pub norm: Norm,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            epsilon: 0.08,
            norm: Norm::L2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyScenario {
    pub scenario: Scenario,
    pub constituents: Vec<LinearClassifier>,
    pub truth: LinearClassifier,
    pub grid: ToyGrid,
    pub epsilon: f64,
    pub norm: Norm,
    /// Grid indices `(x, x')` realizing the cascade counterexample, when the
    /// scenario designates one.
    pub witness: Option<(usize, usize)>,
}

const SECTOR_ANGLES: [f64; 3] = [
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::FRAC_PI_3,
    std::f64::consts::FRAC_PI_2 + 4.0 * std::f64::consts::FRAC_PI_3,
];

fn sector_classifier(
    rotation: f64,
    center: [f64; 2],
    norm: Norm,
    completeness: Completeness,
) -> Result<LinearClassifier> {
    let angles: Vec<f64> = SECTOR_ANGLES.iter().map(|a| a + rotation).collect();
    LinearClassifier::from_directions(&angles, center, norm, completeness)
}

/// Builds a scenario's classifiers and evaluates them on the grid.
pub fn gen_toy(scenario: Scenario, seed: u64, params: &ToyParams) -> Result<ToyScenario> {
    if params.epsilon.is_nan() || params.epsilon < 0.0 {
        return Err(Error::precondition("epsilon must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm = params.norm;
    let truth = sector_classifier(0.0, [0.0, 0.0], norm, Completeness::Global(1.0))?;

    let (constituents, truth) = match scenario {
        Scenario::Fig1 => {
            let mut jitter = |base: f64| base + rng.gen_range(-0.02..0.02);
            let constituents = vec![
                sector_classifier(
                    jitter(0.15),
                    [jitter(0.10), jitter(0.05)],
                    norm,
                    Completeness::HalfPlane {
                        normal: [1.0, 0.0],
                        offset: 0.0,
                        inside: 0.6,
                        outside: 1.0,
                    },
                )?,
                sector_classifier(
                    jitter(-0.20),
                    [jitter(-0.10), jitter(0.0)],
                    norm,
                    Completeness::Global(0.9),
                )?,
                sector_classifier(
                    jitter(0.05),
                    [jitter(0.0), jitter(-0.12)],
                    norm,
                    Completeness::Global(1.0),
                )?,
            ];
            (constituents, truth)
        }
        Scenario::Agree => (vec![truth.clone(), truth.clone(), truth.clone()], truth),
        Scenario::Thm1Minimal => thm1_minimal_classifiers(params)?,
        Scenario::Random => {
            let n = 3;
            let random_classifier = |rng: &mut ChaCha8Rng, completeness| {
                let rows = (0..3)
                    .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                    .collect();
                let biases = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
                LinearClassifier::new(rows, biases, norm, completeness)
            };
            let mut constituents = Vec::with_capacity(n);
            for _ in 0..n {
                let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let completeness = Completeness::HalfPlane {
                    normal: [angle.cos(), angle.sin()],
                    offset: rng.gen_range(-0.5..0.5),
                    inside: rng.gen_range(0.3..=1.0),
                    outside: rng.gen_range(0.3..=1.0),
                };
                constituents.push(random_classifier(&mut rng, completeness)?);
            }
            let truth = random_classifier(&mut rng, Completeness::Global(1.0))?;
            (constituents, truth)
        }
    };

    let grid = evaluate_grid(&constituents, &truth, &params.grid, params.epsilon)?;
    let witness = match scenario {
        Scenario::Thm1Minimal => Some(thm1_witness(&grid, params.epsilon)?),
        _ => None,
    };
    Ok(ToyScenario {
        scenario,
        constituents,
        truth,
        grid,
        epsilon: params.epsilon,
        norm,
        witness,
    })
}

/// Constituent 0 splits the plane at `x = 0`; constituent 1 predicts class 0
/// up to `x = 0.9` but only certifies fully left of `x = epsilon`.
fn thm1_minimal_classifiers(
    params: &ToyParams,
) -> Result<(Vec<LinearClassifier>, LinearClassifier)> {
    let eps = params.epsilon;
    if !(eps > 0.0 && eps < 0.3) {
        return Err(Error::precondition("thm1-minimal needs 0 < epsilon < 0.3"));
    }
    if params.grid.xmin > 0.0
        || params.grid.xmax < 2.0 * eps
        || params.grid.ymin > 0.0
        || params.grid.ymax < 0.0
    {
        return Err(Error::precondition(
            "thm1-minimal needs the grid to cover [0, 2*epsilon] on the x axis",
        ));
    }
    let split = LinearClassifier::new(
        vec![[-1.0, 0.0], [1.0, 0.0]],
        vec![0.0, 0.0],
        params.norm,
        Completeness::Global(1.0),
    )?;
    let far_split = LinearClassifier::new(
        vec![[-1.0, 0.0], [1.0, 0.0]],
        vec![0.9, -0.9],
        params.norm,
        Completeness::HalfPlane {
            normal: [-1.0, 0.0],
            offset: eps,
            inside: 1.0,
            outside: (eps / 2.0).min(1.0),
        },
    )?;
    Ok((vec![split.clone(), far_split], split))
}

/// Picks `x` near `(epsilon/2, 0)` and `x'` as far right of it as stays
/// within epsilon, then checks both halves of the counterexample hold there.
fn thm1_witness(grid: &ToyGrid, eps: f64) -> Result<(usize, usize)> {
    let nearest = |target: f64, coords: &mut dyn Iterator<Item = f64>| {
        coords
            .enumerate()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };
    let row = nearest(
        0.0,
        &mut (0..grid.ny()).map(|iy| grid.points[grid.index(0, iy)].py),
    );
    let col = nearest(
        eps / 2.0,
        &mut (0..grid.nx()).map(|ix| grid.points[grid.index(ix, row)].px),
    );
    let x = grid.index(col, row);
    let p = &grid.points[x];
    let mut partner = None;
    for ix in (col + 1)..grid.nx() {
        let q = &grid.points[grid.index(ix, row)];
        if (q.px - p.px).abs() > eps {
            break;
        }
        partner = Some(grid.index(ix, row));
    }
    let xp = partner.ok_or_else(|| Error::precondition("grid too coarse for thm1-minimal"))?;
    let q = &grid.points[xp];
    let holds = !p.outputs[0].cert
        && p.outputs[1].cert
        && q.outputs[0].cert
        && !q.outputs[1].cert
        && q.outputs[1].label == p.outputs[1].label
        && q.outputs[0].label != p.outputs[1].label;
    if !holds {
        return Err(Error::precondition(
            "grid resolution does not realize the thm1-minimal witness",
        ));
    }
    Ok((x, xp))
}

/// A certified point and an epsilon-close point with a different label.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub p: usize,
    pub q: usize,
    pub p_xy: [f64; 2],
    pub q_xy: [f64; 2],
    pub distance: f64,
    pub at_p: CertOutput,
    pub at_q: CertOutput,
}

fn check_resolution(grid: &ToyGrid, epsilon: f64) -> Result<()> {
    let (dx, dy) = grid.steps();
    let step = dx.max(dy);
    // Relative slack only absorbs the rounding in recomputing the step.
    if step > MAX_STEP_TO_EPSILON * epsilon * (1.0 + 1e-9) {
        return Err(Error::precondition(format!(
            "grid step {step} exceeds epsilon/4 = {}",
            epsilon * MAX_STEP_TO_EPSILON
        )));
    }
    Ok(())
}

/// Every `(p, q)` with `predictions[p]` certified, `|q - p| <= epsilon`, and
/// a different label at `q`, ordered by `(p, q)`.
pub fn find_violations_in(
    grid: &ToyGrid,
    predictions: &[CertOutput],
    epsilon: f64,
    norm: Norm,
) -> Result<Vec<Violation>> {
    if predictions.len() != grid.len() {
        return Err(Error::dimension(
            "predictions vs grid points",
            grid.len(),
            predictions.len(),
        ));
    }
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    check_resolution(grid, epsilon)?;
    let (dx, dy) = grid.steps();
    let reach = |step: f64, n: usize| {
        if step > 0.0 {
            ((epsilon / step).ceil() as usize + 1).min(n)
        } else {
            0
        }
    };
    let (rx, ry) = (reach(dx, grid.nx), reach(dy, grid.ny));
    let nx = grid.nx;

    let found: Vec<Vec<Violation>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let at_p = predictions[p];
            if !at_p.cert {
                return Vec::new();
            }
            let (px, py) = (p % nx, p / nx);
            let pp = &grid.points[p];
            let mut out = Vec::new();
            for iy in py.saturating_sub(ry)..=(py + ry).min(grid.ny - 1) {
                for ix in px.saturating_sub(rx)..=(px + rx).min(nx - 1) {
                    let q = iy * nx + ix;
                    let at_q = predictions[q];
                    if at_q.label == at_p.label {
                        continue;
                    }
                    let qq = &grid.points[q];
                    let distance = norm.length2(qq.px - pp.px, qq.py - pp.py);
                    if distance <= epsilon {
                        out.push(Violation {
                            p,
                            q,
                            p_xy: [pp.px, pp.py],
                            q_xy: [qq.px, qq.py],
                            distance,
                            at_p,
                            at_q,
                        });
                    }
                }
            }
            out
        })
        .collect();
    Ok(found.into_iter().flatten().collect())
}

/// Refutes the soundness of an ensembler's certificate on a grid.
pub fn find_violations(
    grid: &ToyGrid,
    kind: &EnsemblerKind,
    epsilon: f64,
    norm: Norm,
) -> Result<Vec<Violation>> {
    if !grid.is_empty() {
        check_resolution(grid, epsilon)?;
    }
    let predictions = grid.ensemble(kind)?;
    find_violations_in(grid, &predictions, epsilon, norm)
}

/// One panel of a figure: a title and a prediction per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub predictions: Vec<CertOutput>,
}

/// Panels for each constituent plus the cascade and uniform-voting ensembles.
pub fn default_panels(grid: &ToyGrid) -> Result<Vec<Panel>> {
    let mut panels: Vec<Panel> = (0..grid.num_models())
        .map(|i| Panel {
            title: format!("Model {i}"),
            predictions: grid.constituent_outputs(i),
        })
        .collect();
    if grid.is_empty() {
        return Ok(panels);
    }
    for kind in [EnsemblerKind::Cascade, EnsemblerKind::UniformVoting] {
        panels.push(Panel {
            title: kind.name().to_owned(),
            predictions: grid.ensemble(&kind)?,
        });
    }
    Ok(panels)
}

/// Hue per label (red, blue, green, then greys); dark when certified.
fn color(o: CertOutput) -> &'static str {
    const DARK: [&str; 6] = [
        "#b2182b", "#2166ac", "#1b7837", "#542788", "#8c510a", "#404040",
    ];
    const LIGHT: [&str; 6] = [
        "#f4a582", "#92c5de", "#a6dba0", "#c2a5cf", "#dfc27d", "#bababa",
    ];
    let i = o.label.index().min(DARK.len() - 1);
    if o.cert {
        DARK[i]
    } else {
        LIGHT[i]
    }
}

const PANEL_PX: f64 = 240.0;
const GAP_PX: f64 = 16.0;
const TITLE_PX: f64 = 24.0;

/// Side-by-side SVG panels; each grid row is drawn as runs of equal colour.
pub fn render_svg(grid: &ToyGrid, panels: &[Panel]) -> Result<String> {
    for p in panels {
        if p.predictions.len() != grid.len() {
            return Err(Error::dimension(
                "panel predictions",
                grid.len(),
                p.predictions.len(),
            ));
        }
    }
    let (nx, ny) = (grid.nx.max(1) as f64, grid.ny.max(1) as f64);
    let cell_w = PANEL_PX / nx;
    let cell_h = PANEL_PX / ny;
    let width = panels.len() as f64 * (PANEL_PX + GAP_PX) + GAP_PX;
    let height = PANEL_PX + TITLE_PX + GAP_PX;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        let left = GAP_PX + k as f64 * (PANEL_PX + GAP_PX);
        let _ = writeln!(
            svg,
            r#"<g><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            left + PANEL_PX / 2.0,
            TITLE_PX - 6.0,
            escape_xml(&panel.title)
        );
        for iy in 0..grid.ny {
            // Larger y is drawn higher up.
            let top = TITLE_PX + (grid.ny - 1 - iy) as f64 * cell_h;
            let mut ix = 0;
            while ix < grid.nx {
                let fill = color(panel.predictions[grid.index(ix, iy)]);
                let start = ix;
                while ix < grid.nx && color(panel.predictions[grid.index(ix, iy)]) == fill {
                    ix += 1;
                }
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{fill}"/>"#,
                    left + start as f64 * cell_w,
                    top,
                    (ix - start) as f64 * cell_w,
                    cell_h
                );
            }
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
