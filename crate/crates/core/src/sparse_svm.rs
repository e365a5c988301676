//! Linear SVMs over grouped descriptors.
//!
//! Both learners minimize a quadratically smoothed hinge loss with an
//! accelerated proximal gradient method (FISTA with backtracking and
//! function-value restarts, so the objective never increases between
//! accepted iterates):
//!
//! * [`train_l2_svm`]: `½‖w‖² + C·Σ h(yᵢ(w·xᵢ + b))`
//! * [`train_group_lasso_svm`]: `(1/n)·Σ h(yᵢ(w·xᵢ + b)) + λ·Σ_b ‖w_b‖`
//!
//! The bias is never regularized. Groups whose weight norm drops to
//! [`ZERO_GROUP_THRESHOLD`] or below are treated as removed, which is how
//! spatial bins get selected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ZERO_GROUP_THRESHOLD: f64 = 1e-10;
/// Relative slack on the kept-bin count accepted by
/// [`select_regularizer_for_count`].
pub const COUNT_TOLERANCE: f64 = 0.05;

/// Contiguous `(offset, length)` spans covering a descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    spans: Vec<(usize, usize)>,
}

impl GroupStructure {
    pub fn new(spans: Vec<(usize, usize)>) -> Result<Self> {
        let mut next = 0;
        for (i, &(offset, len)) in spans.iter().enumerate() {
            if offset != next {
                return Err(Error::InvalidParameter(format!(
                    "group {i} starts at {offset}, expected {next}"
                )));
            }
            if len == 0 {
                return Err(Error::InvalidParameter(format!("group {i} is empty")));
            }
            next += len;
        }
        Ok(Self { spans })
    }

    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        let mut offset = 0;
        let spans = lengths
            .iter()
            .map(|&l| {
                let s = (offset, l);
                offset += l;
                s
            })
            .collect();
        Self::new(spans)
    }

    /// `count` groups of `len` dimensions each.
    pub fn uniform(count: usize, len: usize) -> Self {
        Self {
            spans: (0..count).map(|i| (i * len, len)).collect(),
        }
    }

    pub fn single(dim: usize) -> Self {
        if dim == 0 {
            Self { spans: Vec::new() }
        } else {
            Self {
                spans: vec![(0, dim)],
            }
        }
    }

    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spans.last().map_or(0, |&(o, l)| o + l)
    }

    pub fn range(&self, group: usize) -> std::ops::Range<usize> {
        let (o, l) = self.spans[group];
        o..o + l
    }

    /// Structure left after keeping only `selection`, in original order.
    pub fn restrict(&self, selection: &BinSelection) -> Result<Self> {
        let lengths: Vec<usize> = selection
            .kept()
            .iter()
            .map(|&g| {
                self.spans
                    .get(g)
                    .map(|s| s.1)
                    .ok_or_else(|| Error::InvalidParameter(format!("group {g} out of range")))
            })
            .collect::<Result<_>>()?;
        Self::from_lengths(&lengths)
    }

    /// Concatenation of `self` followed by `other`.
    pub fn concat(&self, other: &GroupStructure) -> Self {
        let base = self.dim();
        let mut spans = self.spans.clone();
        spans.extend(other.spans.iter().map(|&(o, l)| (o + base, l)));
        Self { spans }
    }
}

/// Sorted, de-duplicated group indices that survived selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSelection {
    kept: Vec<usize>,
    /// Regularizer strength that produced the selection, when known.
    lambda: Option<f64>,
}

impl BinSelection {
    pub fn new(mut kept: Vec<usize>, lambda: Option<f64>) -> Self {
        kept.sort_unstable();
        kept.dedup();
        Self { kept, lambda }
    }

    pub fn all(count: usize) -> Self {
        Self::new((0..count).collect(), None)
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    /// Groups of `weights` with norm above the zero threshold.
    pub fn from_weights(weights: &[f64], groups: &GroupStructure, lambda: Option<f64>) -> Self {
        let kept = (0..groups.len())
            .filter(|&g| group_norm(&weights[groups.range(g)]) > ZERO_GROUP_THRESHOLD)
            .collect();
        Self { kept, lambda }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub groups: GroupStructure,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64, groups: GroupStructure) -> Result<Self> {
        if groups.dim() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: groups.dim(),
                actual: weights.len(),
            });
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("non-finite model parameter".into()));
        }
        Ok(Self {
            weights,
            bias,
            groups,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        score(self, x)
    }
}

/// `w·x + b`.
pub fn score(model: &LinearModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            actual: x.len(),
        });
    }
    Ok(dot(&model.weights, x) + model.bias)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Loss weight of the ℓ2-regularized SVM.
    pub c: f64,
    /// Group-lasso strength.
    pub lambda: f64,
    pub max_epochs: usize,
    /// Relative objective change that counts as converged.
    pub tol: f64,
    pub seed: u64,
    /// Width of the quadratic region of the smoothed hinge.
    pub smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            lambda: 0.0,
            max_epochs: 5000,
            tol: 1e-7,
            seed: 0,
            smoothing: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidParameter(format!("C = {} must be > 0", self.c)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda = {} must be >= 0",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be > 0".into()));
        }
        if !(self.smoothing > 0.0) {
            return Err(Error::InvalidParameter("smoothing must be > 0".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidParameter("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub epochs: usize,
    pub converged: bool,
    /// Objective after every accepted iterate.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupLassoFit {
    pub model: LinearModel,
    pub selection: BinSelection,
    pub report: SolverReport,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn group_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Quadratically smoothed hinge `h(z)` and its derivative.
///
/// `h(z) = 0` for `z ≥ 1`, `(1 − z)²/(2μ)` on `(1 − μ, 1)`, and
/// `1 − z − μ/2` below.
pub fn smoothed_hinge(z: f64, mu: f64) -> (f64, f64) {
    if z >= 1.0 {
        (0.0, 0.0)
    } else if z <= 1.0 - mu {
        (1.0 - z - 0.5 * mu, -1.0)
    } else {
        let t = 1.0 - z;
        (t * t / (2.0 * mu), -t / mu)
    }
}

/// Proximal operator of `tau·Σ_b ‖w_b‖`: block soft-thresholding.
pub fn group_prox(w: &[f64], groups: &GroupStructure, tau: f64) -> Vec<f64> {
    let mut out = w.to_vec();
    group_prox_in_place(&mut out, groups, tau);
    out
}

fn group_prox_in_place(w: &mut [f64], groups: &GroupStructure, tau: f64) {
    if tau <= 0.0 {
        return;
    }
    for g in 0..groups.len() {
        let block = &mut w[groups.range(g)];
        let n = group_norm(block);
        let scale = if n > tau { 1.0 - tau / n } else { 0.0 };
        block.iter_mut().for_each(|v| *v *= scale);
    }
}

pub fn group_lasso_penalty(w: &[f64], groups: &GroupStructure) -> f64 {
    (0..groups.len()).map(|g| group_norm(&w[groups.range(g)])).sum()
}

/// Row-major dense sample matrix.
#[derive(Debug, Clone)]
pub(crate) struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub(crate) fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training("non-finite descriptor value".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Smooth part of a training objective plus the group-lasso strength.
struct Problem<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    groups: &'a GroupStructure,
    l2: f64,
    loss_weight: f64,
    mu: f64,
    lambda: f64,
}

impl Problem<'_> {
    /// Groups with at least one nonzero weight; margins skip the rest.
    fn active_groups(&self, w: &[f64]) -> Vec<std::ops::Range<usize>> {
        (0..self.groups.len())
            .map(|g| self.groups.range(g))
            .filter(|r| w[r.clone()].iter().any(|&v| v != 0.0))
            .collect()
    }

    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        let active = self.active_groups(w);
        (0..self.x.rows)
            .map(|i| {
                let row = self.x.row(i);
                let s: f64 = active
                    .iter()
                    .map(|r| dot(&w[r.clone()], &row[r.clone()]))
                    .sum();
                self.y[i] * (s + b)
            })
            .collect()
    }

    fn smooth_value(&self, w: &[f64], b: f64) -> f64 {
        let loss: f64 = self
            .margins(w, b)
            .into_iter()
            .map(|z| smoothed_hinge(z, self.mu).0)
            .sum();
        0.5 * self.l2 * dot(w, w) + self.loss_weight * loss
    }

    fn smooth_value_grad(&self, w: &[f64], b: f64, grad: &mut [f64]) -> (f64, f64) {
        for (g, &wi) in grad.iter_mut().zip(w) {
            *g = self.l2 * wi;
        }
        let mut loss = 0.0;
        let mut grad_b = 0.0;
        for (i, z) in self.margins(w, b).into_iter().enumerate() {
            let (h, dh) = smoothed_hinge(z, self.mu);
            loss += h;
            if dh != 0.0 {
                let coef = self.loss_weight * dh * self.y[i];
                grad_b += coef;
                for (g, &xv) in grad.iter_mut().zip(self.x.row(i)) {
                    *g += coef * xv;
                }
            }
        }
        (0.5 * self.l2 * dot(w, w) + self.loss_weight * loss, grad_b)
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        if self.lambda > 0.0 {
            self.lambda * group_lasso_penalty(w, self.groups)
        } else {
            0.0
        }
    }

    fn objective(&self, w: &[f64], b: f64) -> f64 {
        self.smooth_value(w, b) + self.penalty(w)
    }

    /// Upper bound on the gradient's Lipschitz constant, used to seed the
    /// backtracking search.
    fn initial_step_constant(&self) -> f64 {
        let max_row = (0..self.x.rows)
            .map(|i| dot(self.x.row(i), self.x.row(i)) + 1.0)
            .fold(0.0, f64::max);
        (self.l2 + self.loss_weight * max_row / self.mu).max(1e-12)
    }
}

const MIN_EPOCHS: usize = 5;

fn fista(
    problem: &Problem<'_>,
    init_w: Vec<f64>,
    init_b: f64,
    max_epochs: usize,
    tol: f64,
) -> (Vec<f64>, f64, SolverReport) {
    let dim = init_w.len();
    let mut x_w = init_w;
    let mut x_b = init_b;
    let mut f_x = problem.objective(&x_w, x_b);
    let mut y_w = x_w.clone();
    let mut y_b = x_b;
    let mut t = 1.0f64;
    let mut lip = problem.initial_step_constant();
    let mut grad = vec![0.0; dim];
    let mut z_w = vec![0.0; dim];
    let mut objective = vec![f_x];
    let mut converged = false;
    let mut epochs = 0;
    let mut restarted = false;

    while epochs < max_epochs {
        epochs += 1;
        let (f_y, grad_b) = problem.smooth_value_grad(&y_w, y_b, &mut grad);
        let (z_b, f_z) = loop {
            for ((z, &yv), &g) in z_w.iter_mut().zip(&y_w).zip(&grad) {
                *z = yv - g / lip;
            }
            group_prox_in_place(&mut z_w, problem.groups, problem.lambda / lip);
            let z_b = y_b - grad_b / lip;
            let f_z = problem.smooth_value(&z_w, z_b);
            let mut lin = (z_b - y_b) * grad_b;
            let mut sq = (z_b - y_b) * (z_b - y_b);
            for ((&z, &yv), &g) in z_w.iter().zip(&y_w).zip(&grad) {
                let d = z - yv;
                lin += g * d;
                sq += d * d;
            }
            let bound = f_y + lin + 0.5 * lip * sq;
            if f_z <= bound + 1e-12 * f_y.abs().max(1.0) || !lip.is_finite() {
                break (z_b, f_z);
            }
            lip *= 2.0;
        };
        let big_f = f_z + problem.penalty(&z_w);
        if big_f > f_x {
            if restarted {
                // a plain proximal step from the best iterate did not descend
                converged = true;
                break;
            }
            t = 1.0;
            y_w.copy_from_slice(&x_w);
            y_b = x_b;
            restarted = true;
            continue;
        }
        restarted = false;
        let rel = (f_x - big_f) / f_x.abs().max(1e-12);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for i in 0..dim {
            y_w[i] = z_w[i] + momentum * (z_w[i] - x_w[i]);
        }
        y_b = z_b + momentum * (z_b - x_b);
        x_w.copy_from_slice(&z_w);
        x_b = z_b;
        f_x = big_f;
        t = t_next;
        objective.push(f_x);
        if rel < tol && epochs >= MIN_EPOCHS {
            converged = true;
            break;
        }
    }
    (
        x_w,
        x_b,
        SolverReport {
            epochs,
            converged,
            objective,
        },
    )
}

fn validate_labels(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if let Some(v) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::Training(format!("label {v} is not +1 or -1")));
    }
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Training(
            "need at least one example of each class".into(),
        ));
    }
    Ok(())
}

/// Smooth part of a training objective, `½·l2·‖w‖² + loss_weight·Σ h(yᵢ(w·xᵢ + b))`,
/// with its gradient in `w` and in `b`. The ℓ2 SVM uses `(1, C)`, the
/// group-lasso loss uses `(0, 1/n)`.
pub fn smooth_objective(
    x: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    b: f64,
    l2: f64,
    loss_weight: f64,
    mu: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let m = Matrix::from_rows(x)?;
    if m.cols != w.len() || y.len() != m.rows {
        return Err(Error::DimensionMismatch {
            expected: m.cols,
            actual: w.len(),
        });
    }
    let groups = GroupStructure::single(w.len());
    let problem = Problem {
        x: &m,
        y,
        groups: &groups,
        l2,
        loss_weight,
        mu,
        lambda: 0.0,
    };
    let mut grad = vec![0.0; w.len()];
    let (f, grad_b) = problem.smooth_value_grad(w, b, &mut grad);
    Ok((f, grad, grad_b))
}

/// ℓ2-regularized linear SVM; the returned model has a single group.
pub fn train_l2_svm(
    x: &[Vec<f64>],
    y: &[f64],
    cfg: &TrainConfig,
) -> Result<(LinearModel, SolverReport)> {
    cfg.validate()?;
    validate_labels(x, y)?;
    let m = Matrix::from_rows(x)?;
    let groups = GroupStructure::single(m.cols);
    let problem = Problem {
        x: &m,
        y,
        groups: &groups,
        l2: 1.0,
        loss_weight: cfg.c,
        mu: cfg.smoothing,
        lambda: 0.0,
    };
    let (w, b, report) = fista(&problem, vec![0.0; m.cols], 0.0, cfg.max_epochs, cfg.tol);
    if !report.converged {
        log::warn!(
            "l2 SVM stopped after {} epochs without reaching tol {}",
            report.epochs,
            cfg.tol
        );
    }
    Ok((LinearModel::new(w, b, groups)?, report))
}

/// The smallest λ at which the all-zero weight vector is optimal for the
/// group-lasso objective.
pub fn group_lasso_lambda_max(
    x: &[Vec<f64>],
    y: &[f64],
    groups: &GroupStructure,
    smoothing: f64,
) -> Result<f64> {
    validate_labels(x, y)?;
    let m = Matrix::from_rows(x)?;
    check_groups(&m, groups)?;
    Ok(lambda_max_inner(&m, y, groups, smoothing).0)
}

fn check_groups(m: &Matrix, groups: &GroupStructure) -> Result<()> {
    if groups.dim() != m.cols {
        return Err(Error::DimensionMismatch {
            expected: groups.dim(),
            actual: m.cols,
        });
    }
    Ok(())
}

/// Returns `(λ_max, optimal bias at w = 0)`.
fn lambda_max_inner(m: &Matrix, y: &[f64], groups: &GroupStructure, mu: f64) -> (f64, f64) {
    let n = m.rows as f64;
    let bias_grad = |b: f64| -> f64 {
        y.iter()
            .map(|&yi| smoothed_hinge(yi * b, mu).1 * yi)
            .sum::<f64>()
            / n
    };
    // derivative is non-decreasing in b and changes sign on [-1, 1]
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bias_grad(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let b = 0.5 * (lo + hi);
    let mut grad = vec![0.0; m.cols];
    for (i, &yi) in y.iter().enumerate() {
        let dh = smoothed_hinge(yi * b, mu).1;
        if dh != 0.0 {
            let coef = dh * yi / n;
            for (g, &xv) in grad.iter_mut().zip(m.row(i)) {
                *g += coef * xv;
            }
        }
    }
    let lmax = (0..groups.len())
        .map(|g| group_norm(&grad[groups.range(g)]))
        .fold(0.0, f64::max);
    (lmax, b)
}

fn fit_group_lasso(
    m: &Matrix,
    y: &[f64],
    groups: &GroupStructure,
    cfg: &TrainConfig,
    lambda: f64,
    init: Option<(&[f64], f64)>,
) -> Result<GroupLassoFit> {
    let problem = Problem {
        x: m,
        y,
        groups,
        l2: 0.0,
        loss_weight: 1.0 / m.rows as f64,
        mu: cfg.smoothing,
        lambda,
    };
    let (w0, b0) = match init {
        Some((w, b)) => (w.to_vec(), b),
        None => (vec![0.0; m.cols], 0.0),
    };
    let (w, b, report) = fista(&problem, w0, b0, cfg.max_epochs, cfg.tol);
    if !report.converged {
        log::warn!(
            "group-lasso SVM (lambda {lambda}) stopped after {} epochs without converging",
            report.epochs
        );
    }
    let selection = BinSelection::from_weights(&w, groups, Some(lambda));
    Ok(GroupLassoFit {
        model: LinearModel::new(w, b, groups.clone())?,
        selection,
        report,
    })
}

/// Group-lasso SVM at strength `cfg.lambda`. A fit that hits `max_epochs`
/// returns the best iterate with `report.converged == false`.
pub fn train_group_lasso_svm(
    x: &[Vec<f64>],
    y: &[f64],
    groups: &GroupStructure,
    cfg: &TrainConfig,
) -> Result<GroupLassoFit> {
    cfg.validate()?;
    validate_labels(x, y)?;
    let m = Matrix::from_rows(x)?;
    check_groups(&m, groups)?;
    fit_group_lasso(&m, y, groups, cfg, cfg.lambda, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerChoice {
    pub lambda: f64,
    pub selection: BinSelection,
    pub model: LinearModel,
    /// `(lambda, kept count)` for every probe, in evaluation order.
    pub probes: Vec<(f64, usize)>,
}

fn count_ok(count: usize, target: usize) -> bool {
    (count as f64 - target as f64).abs() <= COUNT_TOLERANCE * target as f64
}

enum Bisection {
    Hit(RegularizerChoice),
    Miss {
        /// Smallest-count fit still above the target, with its λ.
        above: Option<(f64, GroupLassoFit)>,
        min: usize,
        max: usize,
        probes: Vec<(f64, usize)>,
    },
}

fn bisect_count(
    x: &[Vec<f64>],
    y: &[f64],
    groups: &GroupStructure,
    target_count: usize,
    cfg: &TrainConfig,
) -> Result<Bisection> {
    cfg.validate()?;
    validate_labels(x, y)?;
    if target_count == 0 || target_count > groups.len() {
        return Err(Error::InvalidParameter(format!(
            "target count {target_count} outside 1..={}",
            groups.len()
        )));
    }
    let m = Matrix::from_rows(x)?;
    check_groups(&m, groups)?;
    let (lambda_max, _) = lambda_max_inner(&m, y, groups, cfg.smoothing);
    let mut probes = Vec::new();

    let fit_lo = fit_group_lasso(&m, y, groups, cfg, 0.0, None)?;
    let count_lo = fit_lo.selection.len();
    probes.push((0.0, count_lo));
    if count_ok(count_lo, target_count) {
        return Ok(Bisection::Hit(RegularizerChoice {
            lambda: 0.0,
            selection: fit_lo.selection,
            model: fit_lo.model,
            probes,
        }));
    }
    if count_lo < target_count {
        return Ok(Bisection::Miss {
            above: None,
            min: 0,
            max: count_lo,
            probes,
        });
    }

    let (mut lo, mut hi) = (0.0f64, lambda_max);
    let mut count_hi = 0usize;
    let width0 = lambda_max.max(f64::MIN_POSITIVE);
    let mut above = (0.0, fit_lo.clone());
    let mut warm = fit_lo;
    while hi - lo >= 1e-6 * width0 {
        let mid = 0.5 * (lo + hi);
        let fit = fit_group_lasso(
            &m,
            y,
            groups,
            cfg,
            mid,
            Some((&warm.model.weights, warm.model.bias)),
        )?;
        let count = fit.selection.len();
        probes.push((mid, count));
        log::debug!("lambda {mid:.6e}: {count} groups kept");
        if count_ok(count, target_count) {
            return Ok(Bisection::Hit(RegularizerChoice {
                lambda: mid,
                selection: fit.selection,
                model: fit.model,
                probes,
            }));
        }
        if count > target_count {
            lo = mid;
            above = (mid, fit.clone());
        } else {
            hi = mid;
            count_hi = count;
        }
        warm = fit;
    }
    Ok(Bisection::Miss {
        min: count_hi,
        max: above.1.selection.len(),
        above: Some(above),
        probes,
    })
}

/// Bisects λ until the number of kept groups is within ±5% of
/// `target_count`, or the bracket shrinks below `1e-6` of its initial width.
pub fn select_regularizer_for_count(
    x: &[Vec<f64>],
    y: &[f64],
    groups: &GroupStructure,
    target_count: usize,
    cfg: &TrainConfig,
) -> Result<RegularizerChoice> {
    match bisect_count(x, y, groups, target_count, cfg)? {
        Bisection::Hit(c) => Ok(c),
        Bisection::Miss { min, max, .. } => Err(Error::TargetUnreachable {
            target: target_count,
            min,
            max,
        }),
    }
}

/// Like [`select_regularizer_for_count`], but when the kept count jumps over
/// the target it takes the sparsest fit above the target and keeps its
/// `target_count` groups of largest norm (ties to the lower index). The
/// flag reports whether that truncation happened. Fails only when even
/// `λ = 0` keeps fewer groups than requested.
pub fn select_top_groups_for_count(
    x: &[Vec<f64>],
    y: &[f64],
    groups: &GroupStructure,
    target_count: usize,
    cfg: &TrainConfig,
) -> Result<(RegularizerChoice, bool)> {
    match bisect_count(x, y, groups, target_count, cfg)? {
        Bisection::Hit(c) => Ok((c, false)),
        Bisection::Miss {
            above: Some((lambda, fit)),
            probes,
            ..
        } => {
            let norm = |g: usize| group_norm(&fit.model.weights[groups.range(g)]);
            let mut ranked = fit.selection.kept().to_vec();
            ranked.sort_by(|&a, &b| norm(b).total_cmp(&norm(a)).then(a.cmp(&b)));
            ranked.truncate(target_count);
            let selection = BinSelection::new(ranked, Some(lambda));
            let mut weights = fit.model.weights.clone();
            for g in 0..groups.len() {
                if !selection.kept().contains(&g) {
                    weights[groups.range(g)].iter_mut().for_each(|w| *w = 0.0);
                }
            }
            let model = LinearModel::new(weights, fit.model.bias, groups.clone())?;
            Ok((
                RegularizerChoice {
                    lambda,
                    selection,
                    model,
                    probes,
                },
                true,
            ))
        }
        Bisection::Miss { min, max, .. } => Err(Error::TargetUnreachable {
            target: target_count,
            min,
            max,
        }),
    }
}

/// Keeps the selected groups of every descriptor (original order) and
/// ℓ2-normalizes the result. Apply once per feature type.
pub fn strip_and_renormalize(
    x: &[Vec<f64>],
    groups: &GroupStructure,
    selection: &BinSelection,
) -> Result<Vec<Vec<f64>>> {
    if selection.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let Some(&g) = selection.kept().iter().find(|&&g| g >= groups.len()) {
        return Err(Error::InvalidParameter(format!(
            "selected group {g} out of range ({} groups)",
            groups.len()
        )));
    }
    x.iter()
        .map(|row| {
            if row.len() != groups.dim() {
                return Err(Error::DimensionMismatch {
                    expected: groups.dim(),
                    actual: row.len(),
                });
            }
            let mut out: Vec<f64> = selection
                .kept()
                .iter()
                .flat_map(|&g| row[groups.range(g)].iter().copied())
                .collect();
            crate::l2_normalize(&mut out);
            Ok(out)
        })
        .collect()
}
