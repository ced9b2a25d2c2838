//! Profiled REML / ML fitting of linear mixed models with one random
//! intercept per grouping factor.
//!
//! The model is `y = Xβ + Zb + ε` with `b ~ N(0, σ² D)`, `ε ~ N(0, σ² I)` and
//! `D` diagonal, holding the variance ratio `r_g = σ²_g / σ²` for every level
//! of grouping factor `g`. Writing `W = I + Z D Zᵀ`, the fixed effects and
//! the residual scale are profiled out analytically, which leaves a criterion
//! in the ratios alone. It is minimised over `ln r_g` by projected BFGS with an
//! analytic gradient, then polished by Newton steps on a finite-difference
//! Hessian. All products with `W⁻¹` go through the `q × q` kernel
//! `K = Λ (I + Λ ZᵀZ Λ)⁻¹ Λ` (`Λ = D^½`), so `W⁻¹ = I - Z K Zᵀ`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use super::data::{build_design, Dataset, FactorInfo, ModelFormula, Term};
use super::linalg::{dot, Cholesky, Matrix};
use super::{StatsError, SINGULAR_RATIO};
use crate::float::{abs, exp, ln};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const LOG_RATIO_MIN: f64 = -23.025_850_929_940_457; // ln 1e-10
const LOG_RATIO_MAX: f64 = 18.420_680_743_952_367; // ln 1e8
const GRAD_TOL: f64 = 1e-8;
const LOOSE_GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Reml,
    Ml,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Starting values for `ln(σ²_g / σ²)`, one per grouping factor.
    pub initial_log_ratios: Option<Vec<f64>>,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            initial_log_ratios: None,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceComponent {
    pub group: String,
    pub levels: usize,
    pub variance: f64,
    /// The estimate sits on the zero boundary.
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Infinity norm of the projected gradient in log-ratio space at the end.
    pub gradient_norm: f64,
    /// `(iteration, criterion)` after every accepted step.
    pub trace: Vec<(usize, f64)>,
    pub singular: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct GroupLayout {
    pub name: String,
    pub offset: usize,
    pub levels: usize,
    pub codes: Vec<usize>,
}

impl GroupLayout {
    #[inline]
    pub fn level(&self, row: usize) -> usize {
        self.offset + self.codes[row]
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.levels
    }
}

/// Data-dependent quantities that do not change with the variance ratios.
#[derive(Debug, Clone)]
pub(crate) struct Structure {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub groups: Vec<GroupLayout>,
    xtx: Matrix,
    xty: Vec<f64>,
    yty: f64,
    ztz: Matrix,
    ztx: Matrix,
    zty: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) enum Kernel {
    Diagonal(Vec<f64>),
    Dense(Matrix),
}

impl Kernel {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Kernel::Diagonal(d) => d.iter().zip(v).map(|(a, b)| a * b).collect(),
            Kernel::Dense(m) => m.matvec(v),
        }
    }

    fn apply_matrix(&self, m: &Matrix) -> Matrix {
        match self {
            Kernel::Diagonal(d) => {
                let mut out = m.clone();
                for (i, &di) in d.iter().enumerate() {
                    for v in out.row_mut(i) {
                        *v *= di;
                    }
                }
                out
            }
            Kernel::Dense(k) => k.matmul(m),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Kernel::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
            Kernel::Dense(k) => k[(i, j)],
        }
    }
}

/// Everything the criterion and its gradient need at one ratio vector.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub logdet_w: f64,
    pub a_chol: Cholesky,
    pub beta: Vec<f64>,
    pub rss: f64,
    pub kernel: Kernel,
    kztx: Matrix,
    kzty: Vec<f64>,
}

impl Structure {
    pub fn new(x: Matrix, y: Vec<f64>, groups: Vec<GroupLayout>) -> Self {
        let n = x.rows();
        let p = x.cols();
        let q = groups.iter().map(|g| g.levels).sum();
        let xtx = x.t_matmul(&x);
        let xty = x.t_matvec(&y);
        let yty = dot(&y, &y);
        let mut ztz = Matrix::zeros(q, q);
        let mut ztx = Matrix::zeros(q, p);
        let mut zty = vec![0.0; q];
        for row in 0..n {
            for g in &groups {
                let l = g.level(row);
                for h in &groups {
                    ztz[(l, h.level(row))] += 1.0;
                }
                for (a, &b) in ztx.row_mut(l).iter_mut().zip(x.row(row)) {
                    *a += b;
                }
                zty[l] += y[row];
            }
        }
        Self {
            n,
            p,
            q,
            x,
            y,
            groups,
            xtx,
            xty,
            yty,
            ztz,
            ztx,
            zty,
        }
    }

    fn level_ratios(&self, ratios: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.q];
        for (g, &r) in self.groups.iter().zip(ratios) {
            for l in g.range() {
                out[l] = r;
            }
        }
        out
    }

    pub fn evaluate(&self, ratios: &[f64]) -> Result<Evaluation, StatsError> {
        let lr = self.level_ratios(ratios);
        let (kernel, logdet_w) = if self.groups.len() <= 1 {
            let mut logdet = 0.0;
            let k = (0..self.q)
                .map(|l| {
                    let m = 1.0 + lr[l] * self.ztz[(l, l)];
                    logdet += ln(m);
                    lr[l] / m
                })
                .collect();
            (Kernel::Diagonal(k), logdet)
        } else {
            let lambda: Vec<f64> = lr.iter().map(|&r| crate::float::sqrt(r)).collect();
            let mut m = Matrix::identity(self.q);
            for i in 0..self.q {
                for j in 0..self.q {
                    m[(i, j)] += lambda[i] * self.ztz[(i, j)] * lambda[j];
                }
            }
            let ch = Cholesky::new(&m)
                .map_err(|_| StatsError::Domain("random-effect system is not positive definite"))?;
            let minv = ch.inverse();
            let mut k = Matrix::zeros(self.q, self.q);
            for i in 0..self.q {
                for j in 0..self.q {
                    k[(i, j)] = lambda[i] * minv[(i, j)] * lambda[j];
                }
            }
            (Kernel::Dense(k), ch.log_det())
        };
        let kztx = kernel.apply_matrix(&self.ztx);
        let kzty = kernel.apply(&self.zty);
        let mut a = self.xtx.sub(&self.ztx.t_matmul(&kztx));
        a.symmetrize();
        let b: Vec<f64> = self
            .xty
            .iter()
            .zip(self.ztx.t_matvec(&kzty))
            .map(|(u, v)| u - v)
            .collect();
        let ywy = self.yty - dot(&self.zty, &kzty);
        let a_chol = Cholesky::new(&a).map_err(|_| StatsError::RankDeficient {
            aliased: vec![String::from("(numerically singular XᵀW⁻¹X)")],
        })?;
        let beta = a_chol.solve(&b);
        let rss = ywy - dot(&beta, &b);
        if !(rss > 0.0) || !rss.is_finite() {
            return Err(StatsError::InvalidData(String::from(
                "residual sum of squares is zero; the response is fitted exactly",
            )));
        }
        Ok(Evaluation {
            logdet_w,
            a_chol,
            beta,
            rss,
            kernel,
            kztx,
            kzty,
        })
    }

    pub fn residual_dof(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Reml => (self.n - self.p) as f64,
            Criterion::Ml => self.n as f64,
        }
    }

    /// Profiled deviance (-2 log-likelihood with β and σ² maximised out).
    pub fn profiled(&self, ev: &Evaluation, criterion: Criterion) -> f64 {
        let m = self.residual_dof(criterion);
        let base = ev.logdet_w + m * (1.0 + LN_2PI + ln(ev.rss / m));
        match criterion {
            Criterion::Reml => base + ev.a_chol.log_det(),
            Criterion::Ml => base,
        }
    }

    /// Deviance at absolute variance components `(σ²_1, …, σ²_G, σ²)`.
    pub fn deviance_at(&self, criterion: Criterion, components: &[f64]) -> Result<f64, StatsError> {
        let g = self.groups.len();
        if components.len() != g + 1 {
            return Err(StatsError::Domain("one variance per grouping factor plus the residual expected"));
        }
        let sigma2 = components[g];
        if !(sigma2 > 0.0) || components[..g].iter().any(|&v| v < 0.0) {
            return Err(StatsError::Domain("variance components must be non-negative, residual positive"));
        }
        let ratios: Vec<f64> = components[..g].iter().map(|v| v / sigma2).collect();
        let ev = self.evaluate(&ratios)?;
        let n = self.n as f64;
        let p = self.p as f64;
        Ok(match criterion {
            Criterion::Reml => {
                (n - p) * (LN_2PI + ln(sigma2)) + ev.logdet_w + ev.a_chol.log_det() + ev.rss / sigma2
            }
            Criterion::Ml => n * (LN_2PI + ln(sigma2)) + ev.logdet_w + ev.rss / sigma2,
        })
    }

    /// `ZᵀW⁻¹X`, computed in level space.
    pub fn zt_winv_x(&self, ev: &Evaluation) -> Matrix {
        self.ztx.sub(&self.ztz.matmul(&ev.kztx))
    }

    fn zt_winv_y(&self, ev: &Evaluation) -> Vec<f64> {
        let t = self.ztz.matvec(&ev.kzty);
        self.zty.iter().zip(t).map(|(a, b)| a - b).collect()
    }

    /// Diagonal of `ZᵀW⁻¹Z`.
    fn zt_winv_z_diag(&self, ev: &Evaluation) -> Vec<f64> {
        match &ev.kernel {
            Kernel::Diagonal(k) => (0..self.q)
                .map(|l| {
                    let z = self.ztz[(l, l)];
                    z - z * z * k[l]
                })
                .collect(),
            Kernel::Dense(k) => {
                let zk = self.ztz.matmul(k);
                (0..self.q)
                    .map(|l| self.ztz[(l, l)] - dot(zk.row(l), &self.ztz.column(l)))
                    .collect()
            }
        }
    }

    /// Gradient of the profiled criterion with respect to the ratios `r_g`.
    ///
    /// By the envelope theorem this is `σ̂² ∂D/∂σ²_g`, i.e.
    /// `tr(Z_gᵀ P Z_g) - ‖Z_gᵀ P y‖² / σ̂²` with `P` the REML projection (or
    /// `W⁻¹` for ML) in units of σ².
    pub fn profiled_gradient(&self, ev: &Evaluation, criterion: Criterion) -> Vec<f64> {
        let sigma2 = ev.rss / self.residual_dof(criterion);
        let ztwx = self.zt_winv_x(ev);
        let ztwy = self.zt_winv_y(ev);
        let xb = ztwx.matvec(&ev.beta);
        let u: Vec<f64> = ztwy.iter().zip(&xb).map(|(a, b)| a - b).collect();
        let mut diag = self.zt_winv_z_diag(ev);
        if criterion == Criterion::Reml {
            for (l, d) in diag.iter_mut().enumerate() {
                let row = ztwx.row(l);
                *d -= dot(row, &ev.a_chol.solve(row));
            }
        }
        self.groups
            .iter()
            .map(|g| {
                g.range()
                    .map(|l| diag[l] - u[l] * u[l] / sigma2)
                    .sum()
            })
            .collect()
    }
}

/// A fitted linear mixed model.
#[derive(Debug, Clone)]
pub struct FittedLmm {
    formula: ModelFormula,
    criterion: Criterion,
    column_labels: Vec<String>,
    term_columns: Vec<(Term, Range<usize>)>,
    factors: Vec<FactorInfo>,
    beta: Vec<f64>,
    beta_cov: Matrix,
    components: Vec<VarianceComponent>,
    residual_variance: f64,
    deviance: f64,
    reml_deviance: f64,
    ml_deviance: f64,
    convergence: ConvergenceReport,
    data_fingerprint: u64,
    ratios: Vec<f64>,
    pub(crate) structure: Structure,
}

impl FittedLmm {
    pub fn formula(&self) -> &ModelFormula {
        &self.formula
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    /// Covariance matrix of the fixed-effect estimates, `σ̂² (XᵀW⁻¹X)⁻¹`.
    pub fn coefficient_covariance(&self) -> &Matrix {
        &self.beta_cov
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta.len())
            .map(|i| crate::float::sqrt(self.beta_cov[(i, i)]))
            .collect()
    }

    pub fn variance_components(&self) -> &[VarianceComponent] {
        &self.components
    }

    pub fn residual_variance(&self) -> f64 {
        self.residual_variance
    }

    /// The optimised criterion (REML or ML deviance, depending on the fit).
    pub fn deviance(&self) -> f64 {
        self.deviance
    }

    /// Profiled REML deviance at the fitted variance ratios.
    pub fn reml_deviance(&self) -> f64 {
        self.reml_deviance
    }

    /// Profiled ML deviance at the fitted variance ratios.
    pub fn ml_deviance(&self) -> f64 {
        self.ml_deviance
    }

    pub fn convergence(&self) -> &ConvergenceReport {
        &self.convergence
    }

    pub fn is_singular(&self) -> bool {
        self.components.iter().any(|c| c.singular)
    }

    pub fn n_obs(&self) -> usize {
        self.structure.n
    }

    pub fn n_coefficients(&self) -> usize {
        self.structure.p
    }

    pub fn data_fingerprint(&self) -> u64 {
        self.data_fingerprint
    }

    pub fn term_columns(&self) -> &[(Term, Range<usize>)] {
        &self.term_columns
    }

    pub fn factors(&self) -> &[FactorInfo] {
        &self.factors
    }

    /// Fitted variance ratios `σ²_g / σ²`.
    pub fn variance_ratios(&self) -> &[f64] {
        &self.ratios
    }

    /// Profiled criterion of this fit's kind at arbitrary log variance ratios.
    pub fn profiled_criterion(&self, log_ratios: &[f64]) -> Result<f64, StatsError> {
        let ratios: Vec<f64> = log_ratios.iter().map(|&v| exp(v)).collect();
        let ev = self.structure.evaluate(&ratios)?;
        Ok(self.structure.profiled(&ev, self.criterion))
    }

    /// Profiled criterion at arbitrary ratios (zero allowed).
    pub fn profiled_criterion_at_ratios(&self, ratios: &[f64]) -> Result<f64, StatsError> {
        let ev = self.structure.evaluate(ratios)?;
        Ok(self.structure.profiled(&ev, self.criterion))
    }

    /// Un-profiled deviance at absolute variance components
    /// `(σ²_1, …, σ²_G, σ²)`, with β at its GLS value.
    pub fn deviance_at(&self, criterion: Criterion, components: &[f64]) -> Result<f64, StatsError> {
        self.structure.deviance_at(criterion, components)
    }

    /// `Cov(β̂) = (XᵀV⁻¹X)⁻¹` at absolute variance components.
    pub fn coefficient_covariance_at(&self, components: &[f64]) -> Result<Matrix, StatsError> {
        let g = self.structure.groups.len();
        if components.len() != g + 1 || !(components[g] > 0.0) {
            return Err(StatsError::Domain("one variance per grouping factor plus a positive residual expected"));
        }
        let sigma2 = components[g];
        let ratios: Vec<f64> = components[..g].iter().map(|v| v / sigma2).collect();
        let ev = self.structure.evaluate(&ratios)?;
        Ok(ev.a_chol.inverse().scale(sigma2))
    }

    /// The evaluation at the fitted ratios; used by the inference code.
    pub(crate) fn evaluation(&self) -> Evaluation {
        self.structure
            .evaluate(&self.ratios)
            .expect("fitted ratios evaluate")
    }
}

pub fn fit_lmm(data: &Dataset, formula: &ModelFormula, criterion: Criterion) -> Result<FittedLmm, StatsError> {
    fit_lmm_with(data, formula, criterion, &FitOptions::default())
}

pub fn fit_lmm_with(
    data: &Dataset,
    formula: &ModelFormula,
    criterion: Criterion,
    options: &FitOptions,
) -> Result<FittedLmm, StatsError> {
    let design = build_design(data, formula)?;
    let mut groups = Vec::new();
    let mut offset = 0;
    for name in &formula.random {
        let f = data
            .grouping_factor(name)
            .ok_or_else(|| StatsError::UnknownFactor(name.clone()))?;
        let observed = f.observed_levels();
        if observed < 2 {
            return Err(StatsError::TooFewLevels {
                factor: name.clone(),
                levels: observed,
            });
        }
        groups.push(GroupLayout {
            name: name.clone(),
            offset,
            levels: f.levels().len(),
            codes: f.codes().to_vec(),
        });
        offset += f.levels().len();
    }
    let structure = Structure::new(design.x, data.response().to_vec(), groups);
    let (ratios, convergence) = optimize(&structure, criterion, options)?;
    let ev = structure.evaluate(&ratios)?;
    let sigma2 = ev.rss / structure.residual_dof(criterion);
    let components = structure
        .groups
        .iter()
        .zip(&ratios)
        .map(|(g, &r)| VarianceComponent {
            group: g.name.clone(),
            levels: g.levels,
            variance: r * sigma2,
            singular: r == 0.0,
        })
        .collect();
    let reml_deviance = structure.profiled(&ev, Criterion::Reml);
    let ml_deviance = structure.profiled(&ev, Criterion::Ml);
    let deviance = match criterion {
        Criterion::Reml => reml_deviance,
        Criterion::Ml => ml_deviance,
    };
    let mut beta_cov = ev.a_chol.inverse().scale(sigma2);
    beta_cov.symmetrize();
    Ok(FittedLmm {
        formula: formula.clone(),
        criterion,
        column_labels: design.labels,
        term_columns: design.term_columns,
        factors: design.factors,
        beta: ev.beta.clone(),
        beta_cov,
        components,
        residual_variance: sigma2,
        deviance,
        reml_deviance,
        ml_deviance,
        convergence,
        data_fingerprint: data.fingerprint(),
        ratios,
        structure,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(abs(x)))
}

struct Objective<'a> {
    structure: &'a Structure,
    criterion: Criterion,
    evaluations: usize,
}

impl Objective<'_> {
    /// Criterion and gradient in log-ratio space.
    fn eval_log(&mut self, phi: &[f64]) -> Result<(f64, Vec<f64>), StatsError> {
        let ratios: Vec<f64> = phi.iter().map(|&v| exp(v)).collect();
        let (f, g) = self.eval_ratio(&ratios)?;
        Ok((f, g.iter().zip(&ratios).map(|(gi, ri)| gi * ri).collect()))
    }

    fn eval_ratio(&mut self, ratios: &[f64]) -> Result<(f64, Vec<f64>), StatsError> {
        self.evaluations += 1;
        let ev = self.structure.evaluate(ratios)?;
        let f = self.structure.profiled(&ev, self.criterion);
        if !f.is_finite() {
            return Err(StatsError::Domain("criterion is not finite"));
        }
        Ok((f, self.structure.profiled_gradient(&ev, self.criterion)))
    }
}

/// Gradient with components zeroed where a bound blocks descent. Ratios
/// below `SINGULAR_RATIO` still heading down count as on the zero boundary.
fn projected(phi: &[f64], g: &[f64]) -> Vec<f64> {
    let floor = libm::log(SINGULAR_RATIO);
    phi.iter()
        .zip(g)
        .map(|(&p, &gi)| {
            if (p <= floor && gi > 0.0) || (p >= LOG_RATIO_MAX && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn optimize(
    structure: &Structure,
    criterion: Criterion,
    options: &FitOptions,
) -> Result<(Vec<f64>, ConvergenceReport), StatsError> {
    let k = structure.groups.len();
    let mut obj = Objective {
        structure,
        criterion,
        evaluations: 0,
    };
    if k == 0 {
        let (f, _) = obj.eval_ratio(&[])?;
        return Ok((
            Vec::new(),
            ConvergenceReport {
                iterations: 0,
                evaluations: 1,
                converged: true,
                gradient_norm: 0.0,
                trace: vec![(0, f)],
                singular: false,
            },
        ));
    }
    let mut phi: Vec<f64> = match &options.initial_log_ratios {
        Some(start) if start.len() == k => start.clone(),
        Some(_) => return Err(StatsError::Domain("one starting log ratio per grouping factor expected")),
        None => vec![0.0; k],
    };
    for v in &mut phi {
        *v = v.clamp(LOG_RATIO_MIN, LOG_RATIO_MAX);
    }

    let (mut f, mut g) = obj.eval_log(&phi)?;
    let mut hinv = Matrix::identity(k);
    let mut trace = vec![(0, f)];
    let mut iterations = 0;
    let mut converged = false;
    let mut fresh_hessian = true;

    while iterations < options.max_iterations {
        let pg = projected(&phi, &g);
        if inf_norm(&pg) < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = hinv.matvec(&pg).iter().map(|v| -v).collect();
        for i in 0..k {
            if pg[i] == 0.0 {
                d[i] = 0.0;
            }
        }
        if dot(&d, &pg) >= 0.0 {
            hinv = Matrix::identity(k);
            fresh_hessian = true;
            d = pg.iter().map(|v| -v).collect();
        }
        // keep single steps within a factor of e^8 in any ratio
        let dmax = inf_norm(&d);
        if dmax > 8.0 {
            for v in &mut d {
                *v *= 8.0 / dmax;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = phi
                .iter()
                .zip(&d)
                .map(|(p, di)| (p + alpha * di).clamp(LOG_RATIO_MIN, LOG_RATIO_MAX))
                .collect();
            let step: Vec<f64> = trial.iter().zip(&phi).map(|(a, b)| a - b).collect();
            if inf_norm(&step) == 0.0 {
                break;
            }
            match obj.eval_log(&trial) {
                Ok((ft, gt)) if ft <= f + 1e-4 * dot(&g, &step) => {
                    accepted = Some((trial, step, ft, gt));
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        match accepted {
            Some((trial, s, ft, gt)) => {
                let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-14 {
                    bfgs_update(&mut hinv, &s, &y, sy);
                    fresh_hessian = false;
                }
                phi = trial;
                f = ft;
                g = gt;
                trace.push((iterations, f));
            }
            None => {
                if inf_norm(&pg) < LOOSE_GRAD_TOL {
                    // gradient is at the level of rounding noise
                    converged = true;
                    break;
                }
                if fresh_hessian {
                    break;
                }
                hinv = Matrix::identity(k);
                fresh_hessian = true;
            }
        }
    }

    let mut ratios: Vec<f64> = phi.iter().map(|&v| exp(v)).collect();
    for r in &mut ratios {
        if *r < SINGULAR_RATIO {
            *r = 0.0;
        }
    }
    polish(&mut obj, &mut ratios, &mut trace, iterations)?;
    for r in &mut ratios {
        if *r < SINGULAR_RATIO {
            *r = 0.0;
        }
    }

    let (f_final, g_final) = obj.eval_ratio(&ratios)?;
    let grad_log: Vec<f64> = g_final
        .iter()
        .zip(&ratios)
        .map(|(gi, &ri)| if ri == 0.0 { 0.0 } else { gi * ri })
        .collect();
    let gradient_norm = inf_norm(&grad_log);
    if trace.last().map(|t| t.1) != Some(f_final) {
        trace.push((iterations, f_final));
    }
    converged = converged || gradient_norm < LOOSE_GRAD_TOL;
    if !converged {
        return Err(StatsError::NonConvergence {
            iterations,
            last_criterion: f_final,
            gradient_norm,
            trace,
        });
    }
    let singular = ratios.iter().any(|&r| r == 0.0);
    Ok((
        ratios,
        ConvergenceReport {
            iterations,
            evaluations: obj.evaluations,
            converged,
            gradient_norm,
            trace,
            singular,
        },
    ))
}

fn bfgs_update(hinv: &mut Matrix, s: &[f64], y: &[f64], sy: f64) {
    let k = s.len();
    let rho = 1.0 / sy;
    let hy = hinv.matvec(y);
    let yhy = dot(y, &hy);
    for i in 0..k {
        for j in 0..k {
            hinv[(i, j)] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
    hinv.symmetrize();
}

/// Newton steps in ratio space on the free (non-zero) components, using a
/// central-difference Hessian of the analytic gradient.
fn polish(
    obj: &mut Objective<'_>,
    ratios: &mut [f64],
    trace: &mut Vec<(usize, f64)>,
    iterations: usize,
) -> Result<(), StatsError> {
    let free: Vec<usize> = (0..ratios.len()).filter(|&i| ratios[i] > 0.0).collect();
    if free.is_empty() {
        return Ok(());
    }
    let (mut f, mut g) = obj.eval_ratio(ratios)?;
    for _ in 0..8 {
        let m = free.len();
        let mut h = Matrix::zeros(m, m);
        for (a, &i) in free.iter().enumerate() {
            let step = 1e-5 * ratios[i];
            let mut up = ratios.to_vec();
            up[i] += step;
            let mut down = ratios.to_vec();
            down[i] -= step;
            let (_, gu) = obj.eval_ratio(&up)?;
            let (_, gd) = obj.eval_ratio(&down)?;
            for (b, &j) in free.iter().enumerate() {
                h[(b, a)] = (gu[j] - gd[j]) / (2.0 * step);
            }
        }
        h.symmetrize();
        let Ok(ch) = Cholesky::new(&h) else { break };
        let gf: Vec<f64> = free.iter().map(|&i| g[i]).collect();
        let mut delta: Vec<f64> = ch.solve(&gf).iter().map(|v| -v).collect();
        // stay strictly inside the positive orthant
        for _ in 0..30 {
            if free.iter().zip(&delta).all(|(&i, d)| ratios[i] + d > 0.1 * ratios[i]) {
                break;
            }
            for d in &mut delta {
                *d *= 0.5;
            }
        }
        let mut trial = ratios.to_vec();
        for (&i, d) in free.iter().zip(&delta) {
            trial[i] += d;
        }
        let Ok((ft, gt)) = obj.eval_ratio(&trial) else { break };
        if ft > f + 1e-10 * (1.0 + abs(f)) {
            break;
        }
        let rel_step = free
            .iter()
            .zip(&delta)
            .fold(0.0_f64, |m, (&i, d)| m.max(abs(d / ratios[i])));
        ratios.copy_from_slice(&trial);
        f = ft;
        g = gt;
        trace.push((iterations, f));
        if rel_step < 1e-12 {
            break;
        }
    }
    Ok(())
}
