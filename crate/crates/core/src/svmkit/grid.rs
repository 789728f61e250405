use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{pooled_variance, GammaMode, KernelConfig, KernelKind, ResolvedKernel};
use super::model::{fit_classifier, signs_for, Classifier};
use super::smo::{smo_solve, DenseKernel, DualSolution, SmoParams};
use super::SvmError;
use crate::corpus::VowelClass;
use crate::scalar::Real;
use crate::signal::MinMaxScaler;

/// Multi-class decision strategy. Both reduce to one binary problem here,
/// but they are trained and reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionMode {
    Ovr,
    Ovo,
}

impl DecisionMode {
    pub const ALL: [DecisionMode; 2] = [DecisionMode::Ovr, DecisionMode::Ovo];

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionMode::Ovr => "ovr",
            DecisionMode::Ovo => "ovo",
        }
    }
}

impl fmt::Display for DecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecisionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ovr" => Ok(DecisionMode::Ovr),
            "ovo" => Ok(DecisionMode::Ovo),
            other => Err(format!("unknown decision mode `{other}`")),
        }
    }
}

/// One hyperparameter combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    #[serde(rename = "C")]
    pub c: f64,
    pub kernel: KernelKind,
    pub gamma: GammaMode,
    pub decision: DecisionMode,
}

impl GridCell {
    /// Preference among cells of equal accuracy: smaller C, then kernel,
    /// gamma and decision in declaration order.
    pub fn preference(&self, other: &GridCell) -> Ordering {
        self.c
            .total_cmp(&other.c)
            .then(self.kernel.cmp(&other.kernel))
            .then(self.gamma.cmp(&other.gamma))
            .then(self.decision.cmp(&other.decision))
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "C={} kernel={} gamma={} decision={}",
            self.c, self.kernel, self.gamma, self.decision
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub c_values: Vec<f64>,
    pub kernels: Vec<KernelKind>,
    pub gamma_modes: Vec<GammaMode>,
    pub decision_modes: Vec<DecisionMode>,
    pub poly_degree: u32,
    pub coef0: f64,
}

impl Default for ParamGrid {
    /// C in 0.5..=5.0 step 0.5, three kernels, two gamma modes, two
    /// decision modes: 120 cells.
    fn default() -> Self {
        ParamGrid {
            c_values: (1..=10).map(|i| i as f64 * 0.5).collect(),
            kernels: KernelKind::ALL.to_vec(),
            gamma_modes: GammaMode::ALL.to_vec(),
            decision_modes: DecisionMode::ALL.to_vec(),
            poly_degree: 3,
            coef0: 0.0,
        }
    }
}

impl ParamGrid {
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::with_capacity(self.len());
        for &c in &self.c_values {
            for &kernel in &self.kernels {
                for &gamma in &self.gamma_modes {
                    for &decision in &self.decision_modes {
                        out.push(GridCell {
                            c,
                            kernel,
                            gamma,
                            decision,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.c_values.len()
            * self.kernels.len()
            * self.gamma_modes.len()
            * self.decision_modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kernel_config(&self, kind: KernelKind, gamma: GammaMode) -> KernelConfig {
        KernelConfig {
            kind,
            gamma_mode: gamma,
            degree: self.poly_degree,
            coef0: self.coef0,
        }
    }

    fn validate(&self) -> Result<(), SvmError> {
        if self.is_empty() {
            return Err(SvmError::Param("empty hyperparameter grid".into()));
        }
        if let Some(c) = self
            .c_values
            .iter()
            .find(|c| !(**c > 0.0) || !c.is_finite())
        {
            return Err(SvmError::Param(format!("C value {c} must be positive")));
        }
        Ok(())
    }
}

/// Stratified k folds: each class is shuffled and dealt round-robin, with
/// the dealing position carried across classes so fold sizes stay even.
pub fn stratified_kfold(
    y: &[VowelClass],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, SvmError> {
    if k < 2 {
        return Err(SvmError::Folds(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for class in VowelClass::ALL {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < k {
            return Err(SvmError::Folds(format!(
                "class {class} has {} example(s), fewer than {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    if folds.iter().all(|f| f.is_empty()) {
        return Err(SvmError::Folds("no examples".into()));
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Inner products needed to build any kernel over a train block and an
/// evaluation block.
#[derive(Debug, Clone)]
pub struct InnerProducts<T> {
    pub train_dot: Array2<T>,
    pub train_sq: Vec<T>,
    pub eval_dot: Array2<T>,
    pub eval_sq: Vec<T>,
    pub variance: T,
    pub dim: usize,
}

impl<T: Real> InnerProducts<T> {
    pub fn new(train: ArrayView2<'_, T>, eval: ArrayView2<'_, T>) -> Self {
        let train_dot = train.dot(&train.t());
        let eval_dot = eval.dot(&train.t());
        let train_sq = train_dot.diag().to_vec();
        let eval_sq = eval.rows().into_iter().map(|r| r.dot(&r)).collect();
        InnerProducts {
            train_dot,
            train_sq,
            eval_dot,
            eval_sq,
            variance: pooled_variance(train),
            dim: train.ncols(),
        }
    }

    pub fn gamma(&self, mode: GammaMode) -> Result<T, SvmError> {
        let d = T::from_usize_lossy(self.dim);
        match mode {
            GammaMode::Auto => Ok(T::one() / d),
            GammaMode::Scale if self.variance > T::zero() => Ok(T::one() / (d * self.variance)),
            GammaMode::Scale => Err(SvmError::ZeroVariance),
        }
    }

    pub fn train_gram(&self, k: &ResolvedKernel<T>) -> Array2<T> {
        let sq = &self.train_sq;
        Array2::from_shape_fn(self.train_dot.dim(), |(i, j)| {
            k.from_dot(self.train_dot[[i, j]], sq[i], sq[j])
        })
    }

    pub fn eval_gram(&self, k: &ResolvedKernel<T>) -> Array2<T> {
        Array2::from_shape_fn(self.eval_dot.dim(), |(i, j)| {
            k.from_dot(self.eval_dot[[i, j]], self.eval_sq[i], self.train_sq[j])
        })
    }
}

fn decisions<T: Real>(cross: &Array2<T>, y: &[i8], sol: &DualSolution<T>) -> Vec<T> {
    let coef: Vec<T> = sol
        .alpha
        .iter()
        .zip(y)
        .map(|(&a, &s)| if s > 0 { a } else { -a })
        .collect();
    cross
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(&coef).map(|(&k, &c)| k * c).sum::<T>() + sol.bias)
        .collect()
}

/// One cross-validation measurement; `accuracy` is NaN when training failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub cell: GridCell,
    pub fold: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct GridOutcome<T> {
    pub best: GridCell,
    pub best_cv_accuracy: f64,
    pub cv_table: Vec<CvRow>,
    pub cells_evaluated: usize,
    pub failed_cells: usize,
    pub folds: usize,
    /// Best cell refitted on the whole training block.
    pub model: Classifier<T>,
    pub scaler: Option<MinMaxScaler<T>>,
}

impl<T: Real> GridOutcome<T> {
    /// Applies the fitted scaler, if any, to new rows.
    pub fn prepare(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>, SvmError> {
        match &self.scaler {
            Some(s) => s.transform(x).map_err(|e| SvmError::Param(e.to_string())),
            None => Ok(x.to_owned()),
        }
    }
}

type Scaled<T> = (Array2<T>, Array2<T>, Option<MinMaxScaler<T>>);

fn scaled<T: Real>(
    fit_rows: ArrayView2<'_, T>,
    other: ArrayView2<'_, T>,
    scale: bool,
) -> Result<Scaled<T>, SvmError> {
    if !scale {
        return Ok((fit_rows.to_owned(), other.to_owned(), None));
    }
    let s = MinMaxScaler::fit(fit_rows).map_err(|e| SvmError::Param(e.to_string()))?;
    let a = s
        .transform(fit_rows)
        .map_err(|e| SvmError::Param(e.to_string()))?;
    let b = s
        .transform(other)
        .map_err(|e| SvmError::Param(e.to_string()))?;
    Ok((a, b, Some(s)))
}

/// Accuracy for every (C, decision) under one kernel family on one fold.
#[allow(clippy::too_many_arguments)]
fn fold_scores<T: Real>(
    ip: &InnerProducts<T>,
    y_train: &[VowelClass],
    y_eval: &[VowelClass],
    grid: &ParamGrid,
    kind: KernelKind,
    gamma_mode: GammaMode,
    params: &SmoParams,
) -> Vec<(GridCell, f64)> {
    let mut out = Vec::new();
    let resolved = ip
        .gamma(gamma_mode)
        .and_then(|g| grid.kernel_config(kind, gamma_mode).with_gamma(g));
    let fail = |c: f64, out: &mut Vec<(GridCell, f64)>| {
        for &decision in &grid.decision_modes {
            out.push((
                GridCell {
                    c,
                    kernel: kind,
                    gamma: gamma_mode,
                    decision,
                },
                f64::NAN,
            ));
        }
    };
    let Ok(k) = resolved else {
        for &c in &grid.c_values {
            fail(c, &mut out);
        }
        return out;
    };
    let gram = ip.train_gram(&k);
    let cross = ip.eval_gram(&k);
    let y_front = signs_for(y_train, VowelClass::Front);
    let y_back = signs_for(y_train, VowelClass::Back);
    let limit = params.iteration_limit(y_train.len());
    let tol = T::lit(params.tol);
    let accuracy = |pred: Vec<VowelClass>| {
        let hits = pred.iter().zip(y_eval).filter(|(p, t)| p == t).count();
        hits as f64 / y_eval.len() as f64
    };
    for &c in &grid.c_values {
        let ct = T::lit(c);
        let front = smo_solve(&mut DenseKernel::new(gram.view()), &y_front, ct, tol, limit);
        let Ok(front) = front else {
            log::warn!("{kind}/{gamma_mode} C={c}: {}", front.unwrap_err());
            fail(c, &mut out);
            continue;
        };
        let f_front = decisions(&cross, &y_front, &front);
        for &decision in &grid.decision_modes {
            let cell = GridCell {
                c,
                kernel: kind,
                gamma: gamma_mode,
                decision,
            };
            let acc = match decision {
                DecisionMode::Ovo => accuracy(
                    f_front
                        .iter()
                        .map(|&v| {
                            if v >= T::zero() {
                                VowelClass::Front
                            } else {
                                VowelClass::Back
                            }
                        })
                        .collect(),
                ),
                DecisionMode::Ovr => {
                    match smo_solve(&mut DenseKernel::new(gram.view()), &y_back, ct, tol, limit) {
                        Ok(back) => {
                            let f_back = decisions(&cross, &y_back, &back);
                            accuracy(
                                f_front
                                    .iter()
                                    .zip(&f_back)
                                    .map(|(f, b)| {
                                        if f >= b {
                                            VowelClass::Front
                                        } else {
                                            VowelClass::Back
                                        }
                                    })
                                    .collect(),
                            )
                        }
                        Err(e) => {
                            log::warn!("{cell}: {e}");
                            f64::NAN
                        }
                    }
                }
            };
            out.push((cell, acc));
        }
    }
    out
}

/// Exhaustive grid search by stratified k-fold CV accuracy, then a refit of
/// the best cell on all of `x`. With `scale`, a min-max scaler is fitted on
/// each training fold (and on all of `x` for the refit) and applied to the
/// matching evaluation rows.
pub fn grid_search<T: Real>(
    x: ArrayView2<'_, T>,
    y: &[VowelClass],
    grid: &ParamGrid,
    folds: usize,
    seed: u64,
    scale: bool,
    params: &SmoParams,
) -> Result<GridOutcome<T>, SvmError> {
    grid.validate()?;
    if x.nrows() != y.len() {
        return Err(SvmError::Dimension {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let fold_idx = stratified_kfold(y, folds, seed)?;
    let combos: Vec<(usize, KernelKind, GammaMode)> = (0..folds)
        .flat_map(|f| {
            grid.kernels
                .iter()
                .flat_map(move |&k| grid.gamma_modes.iter().map(move |&g| (f, k, g)))
        })
        .collect();

    let prepared: Vec<(InnerProducts<T>, Vec<VowelClass>, Vec<VowelClass>)> = fold_idx
        .par_iter()
        .map(|eval_idx| {
            let train_idx: Vec<usize> = (0..y.len())
                .filter(|i| eval_idx.binary_search(i).is_err())
                .collect();
            let xt = x.select(Axis(0), &train_idx);
            let xe = x.select(Axis(0), eval_idx);
            let (xt, xe, _) = scaled(xt.view(), xe.view(), scale)?;
            let yt = train_idx.iter().map(|&i| y[i]).collect();
            let ye = eval_idx.iter().map(|&i| y[i]).collect();
            Ok((InnerProducts::new(xt.view(), xe.view()), yt, ye))
        })
        .collect::<Result<_, SvmError>>()?;

    let scores: Vec<(usize, Vec<(GridCell, f64)>)> = combos
        .par_iter()
        .map(|&(f, kind, gamma)| {
            let (ip, yt, ye) = &prepared[f];
            (f, fold_scores(ip, yt, ye, grid, kind, gamma, params))
        })
        .collect();

    let cells = grid.cells();
    let mut cv_table = Vec::with_capacity(cells.len() * folds);
    let mut per_cell = vec![vec![f64::NAN; folds]; cells.len()];
    for (f, rows) in &scores {
        for &(cell, acc) in rows {
            let idx = cells
                .iter()
                .position(|c| *c == cell)
                .expect("cell from grid");
            per_cell[idx][*f] = acc;
        }
    }
    for (cell, accs) in cells.iter().zip(&per_cell) {
        for (fold, &accuracy) in accs.iter().enumerate() {
            cv_table.push(CvRow {
                cell: *cell,
                fold,
                accuracy,
            });
        }
    }
    let mut failed = 0usize;
    let mut best: Option<(GridCell, f64)> = None;
    for (cell, accs) in cells.iter().zip(&per_cell) {
        if accs.iter().any(|a| a.is_nan()) {
            failed += 1;
            continue;
        }
        let mean = accs.iter().sum::<f64>() / folds as f64;
        let better = match best {
            None => true,
            Some((b, bm)) => mean > bm || (mean == bm && cell.preference(&b) == Ordering::Less),
        };
        if better {
            best = Some((*cell, mean));
        }
    }
    let (best, best_cv_accuracy) = best.ok_or(SvmError::AllCellsFailed)?;

    let (x_fit, _, scaler) = scaled(x, x.slice(ndarray::s![0..0, ..]), scale)?;
    let fit_params = SmoParams {
        c: best.c,
        ..*params
    };
    let model = fit_classifier(
        x_fit.view(),
        y,
        &grid.kernel_config(best.kernel, best.gamma),
        best.decision,
        &fit_params,
    )?;
    Ok(GridOutcome {
        best,
        best_cv_accuracy,
        cv_table,
        cells_evaluated: cells.len(),
        failed_cells: failed,
        folds,
        model,
        scaler,
    })
}
