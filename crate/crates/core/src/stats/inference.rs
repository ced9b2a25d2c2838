//! Hypothesis tests on fitted models: likelihood-ratio tests, Wald t and F
//! tests with Satterthwaite denominator degrees of freedom.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::data::{design_row, Term};
use super::distributions::{chi_square_sf, f_sf, t_two_sided_p};
use super::linalg::{dot, symmetric_eigen, Matrix};
use super::lmm::{Criterion, FittedLmm};
use super::StatsError;
use crate::float::sqrt;

/// Largest acceptable condition number of the variance-parameter Hessian.
const MAX_CONDITION: f64 = 1e12;
/// Negative LRT statistics down to this size are optimizer slack.
const LRT_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatisticKind {
    ChiSquare,
    T,
    F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub label: String,
    pub kind: StatisticKind,
    pub statistic: f64,
    /// Chi-square df, t df, or F numerator df.
    pub df: f64,
    /// F denominator df.
    pub df_denominator: Option<f64>,
    /// Two-sided for t tests.
    pub p_value: f64,
    /// Contrast estimate and its standard error (t tests only).
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
}

/// Satterthwaite machinery for one REML fit.
///
/// The free variance parameters are the non-singular `σ²_g` followed by the
/// residual `σ²`. Their asymptotic covariance is `2 H⁻¹` with `H` the
/// analytic Hessian of the REML deviance in those parameters.
#[derive(Debug, Clone)]
pub struct Satterthwaite {
    sigma2: f64,
    cov: Matrix,
    residual_df: f64,
    no_random: bool,
    free: Vec<usize>,
    hessian: Matrix,
    asymptotic: Matrix,
    /// `W⁻¹X (XᵀW⁻¹X)⁻¹`, n × p.
    winv_x_c: Matrix,
    level_of: Vec<Vec<usize>>,
    level_ranges: Vec<(usize, usize)>,
}

impl Satterthwaite {
    pub fn new(fit: &FittedLmm) -> Result<Self, StatsError> {
        if fit.criterion() != Criterion::Reml {
            return Err(StatsError::NeedsReml);
        }
        let s = &fit.structure;
        let (n, p, q) = (s.n, s.p, s.q);
        let sigma2 = fit.residual_variance();
        let ev = fit.evaluation();
        let free: Vec<usize> = fit
            .variance_components()
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.singular)
            .map(|(i, _)| i)
            .collect();
        let level_of: Vec<Vec<usize>> = s
            .groups
            .iter()
            .map(|g| (0..n).map(|r| g.level(r)).collect())
            .collect();
        let level_ranges: Vec<(usize, usize)> = s.groups.iter().map(|g| (g.offset, g.offset + g.levels)).collect();

        // W⁻¹ explicitly: I - Z K Zᵀ
        let mut winv = Matrix::identity(n);
        if q > 0 {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for gi in &level_of {
                        for gj in &level_of {
                            acc += ev.kernel.get(gi[i], gj[j]);
                        }
                    }
                    winv[(i, j)] -= acc;
                }
            }
        }
        let winv_x = winv.matmul(&s.x);
        let c = ev.a_chol.inverse();
        let winv_x_c = winv_x.matmul(&c);
        let mut pw = winv.sub(&winv_x_c.matmul(&winv_x.transpose()));
        pw.symmetrize();
        let b = pw.matvec(&s.y);

        // T = P_W Z, S = Zᵀ T, u = Zᵀ b
        let mut t = Matrix::zeros(n, q);
        let mut u = vec![0.0; q];
        for levels in &level_of {
            for (r, &l) in levels.iter().enumerate() {
                for i in 0..n {
                    t[(i, l)] += pw[(i, r)];
                }
                u[l] += b[r];
            }
        }
        let mut sm = Matrix::zeros(q, q);
        for levels in &level_of {
            for (r, &l) in levels.iter().enumerate() {
                for m in 0..q {
                    sm[(l, m)] += t[(r, m)];
                }
            }
        }

        let k = free.len() + 1;
        let s2 = sigma2 * sigma2;
        let s3 = s2 * sigma2;
        let mut h = Matrix::zeros(k, k);
        for (a, &gi) in free.iter().enumerate() {
            let (i0, i1) = level_ranges[gi];
            for (bb, &gj) in free.iter().enumerate() {
                let (j0, j1) = level_ranges[gj];
                let mut tr = 0.0;
                let mut quad = 0.0;
                for l in i0..i1 {
                    for m in j0..j1 {
                        tr += sm[(l, m)] * sm[(l, m)];
                        quad += u[l] * sm[(l, m)] * u[m];
                    }
                }
                h[(a, bb)] = -tr / s2 + 2.0 * quad / s3;
            }
            let mut tr = 0.0;
            let mut quad = 0.0;
            for l in i0..i1 {
                let col = t.column(l);
                tr += dot(&col, &col);
                quad += u[l] * dot(&col, &b);
            }
            let v = -tr / s2 + 2.0 * quad / s3;
            h[(a, k - 1)] = v;
            h[(k - 1, a)] = v;
        }
        h[(k - 1, k - 1)] = -pw.frobenius_sq() / s2 + 2.0 * dot(&b, &pw.matvec(&b)) / s3;
        h.symmetrize();

        let (values, vectors) = symmetric_eigen(&h);
        let max = values[0];
        let min = values[k - 1];
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(min > 0.0) || condition > MAX_CONDITION {
            return Err(StatsError::NonInvertibleHessian { condition });
        }
        let mut asymptotic = Matrix::zeros(k, k);
        for (m, &lambda) in values.iter().enumerate() {
            for i in 0..k {
                for j in 0..k {
                    asymptotic[(i, j)] += 2.0 * vectors[(i, m)] * vectors[(j, m)] / lambda;
                }
            }
        }

        Ok(Self {
            sigma2,
            cov: fit.coefficient_covariance().clone(),
            residual_df: (n - p) as f64,
            no_random: s.groups.is_empty(),
            free,
            hessian: h,
            asymptotic,
            winv_x_c,
            level_of,
            level_ranges,
        })
    }

    /// Indices (into the fit's variance components) of the free random-effect
    /// parameters; the residual variance follows them.
    pub fn free_components(&self) -> &[usize] {
        &self.free
    }

    /// Hessian of the REML deviance in the free variance parameters.
    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    /// Asymptotic covariance `2 H⁻¹` of the free variance parameters.
    pub fn asymptotic_covariance(&self) -> &Matrix {
        &self.asymptotic
    }

    /// Estimated `Var(cᵀβ̂)`.
    pub fn variance(&self, contrast: &[f64]) -> f64 {
        self.cov.quad(contrast, contrast)
    }

    /// Gradient of `Var(cᵀβ̂)` with respect to the free variance parameters.
    pub fn variance_gradient(&self, contrast: &[f64]) -> Vec<f64> {
        let w = self.winv_x_c.matvec(contrast);
        let mut g: Vec<f64> = self
            .free
            .iter()
            .map(|&gi| {
                let (l0, l1) = self.level_ranges[gi];
                let mut sums = vec![0.0; l1 - l0];
                for (r, &l) in self.level_of[gi].iter().enumerate() {
                    sums[l - l0] += w[r];
                }
                dot(&sums, &sums)
            })
            .collect();
        g.push(dot(&w, &w));
        g
    }

    /// Satterthwaite df for the contrast `cᵀβ`.
    pub fn df(&self, contrast: &[f64]) -> Result<f64, StatsError> {
        if contrast.len() != self.cov.rows() {
            return Err(StatsError::ContrastLength {
                expected: self.cov.rows(),
                got: contrast.len(),
            });
        }
        if self.no_random {
            return Ok(self.residual_df);
        }
        let var = self.variance(contrast);
        if !(var > 0.0) {
            return Ok(self.residual_df);
        }
        let g = self.variance_gradient(contrast);
        let denom = self.asymptotic.quad(&g, &g);
        if !(denom > 0.0) {
            return Err(StatsError::Domain("variance of the contrast variance is not positive"));
        }
        Ok(2.0 * var * var / denom)
    }

    /// Residual variance of the underlying fit.
    pub fn residual_variance(&self) -> f64 {
        self.sigma2
    }
}

pub fn satterthwaite_df(fit: &FittedLmm, contrast: &[f64]) -> Result<f64, StatsError> {
    Satterthwaite::new(fit)?.df(contrast)
}

fn t_test_with(
    fit: &FittedLmm,
    sat: &Satterthwaite,
    contrast: &[f64],
    label: String,
) -> Result<TestResult, StatsError> {
    let p = fit.coefficients().len();
    if contrast.len() != p {
        return Err(StatsError::ContrastLength {
            expected: p,
            got: contrast.len(),
        });
    }
    let estimate = dot(contrast, fit.coefficients());
    let var = sat.variance(contrast);
    if contrast.iter().all(|&c| c == 0.0) || !(var > 0.0) {
        return Ok(TestResult {
            label,
            kind: StatisticKind::T,
            statistic: 0.0,
            df: sat.residual_df,
            df_denominator: None,
            p_value: 1.0,
            estimate: Some(0.0),
            std_error: Some(0.0),
        });
    }
    let se = sqrt(var);
    let t = estimate / se;
    let df = sat.df(contrast)?;
    Ok(TestResult {
        label,
        kind: StatisticKind::T,
        statistic: t,
        df,
        df_denominator: None,
        p_value: t_two_sided_p(t, df)?,
        estimate: Some(estimate),
        std_error: Some(se),
    })
}

/// Two-sided t test of `cᵀβ = 0`.
pub fn contrast_t_test(fit: &FittedLmm, contrast: &[f64], label: &str) -> Result<TestResult, StatsError> {
    let sat = Satterthwaite::new(fit)?;
    t_test_with(fit, &sat, contrast, label.into())
}

fn factor_index(fit: &FittedLmm, factor: &str) -> Result<usize, StatsError> {
    fit.factors()
        .iter()
        .position(|f| f.name == factor)
        .ok_or_else(|| StatsError::UnknownFactor(factor.into()))
}

fn level_index(fit: &FittedLmm, fi: usize, level: &str) -> Result<usize, StatsError> {
    fit.factors()[fi]
        .level_index(level)
        .ok_or_else(|| StatsError::UnknownLevel {
            factor: Some(fit.factors()[fi].name.clone()),
            level: level.into(),
        })
}

/// Contrast vector for `mean(cell_a) - mean(cell_b)`, where a cell fixes
/// the levels of some factors and averages over the rest.
pub fn cell_contrast_vector(
    fit: &FittedLmm,
    cell_a: &[(&str, &str)],
    cell_b: &[(&str, &str)],
) -> Result<Vec<f64>, StatsError> {
    let resolve = |cell: &[(&str, &str)]| -> Result<Vec<(usize, usize)>, StatsError> {
        cell.iter()
            .map(|(f, l)| {
                let fi = factor_index(fit, f)?;
                Ok((fi, level_index(fit, fi, l)?))
            })
            .collect()
    };
    let p = fit.coefficients().len();
    let ra = design_row(fit.factors(), fit.term_columns(), p, &resolve(cell_a)?);
    let rb = design_row(fit.factors(), fit.term_columns(), p, &resolve(cell_b)?);
    Ok(ra.iter().zip(&rb).map(|(a, b)| a - b).collect())
}

/// t test of the difference between two (partial) cells of the design.
pub fn cell_contrast(
    fit: &FittedLmm,
    cell_a: &[(&str, &str)],
    cell_b: &[(&str, &str)],
) -> Result<TestResult, StatsError> {
    let c = cell_contrast_vector(fit, cell_a, cell_b)?;
    let show = |cell: &[(&str, &str)]| {
        cell.iter()
            .map(|(f, l)| format!("{f}={l}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    contrast_t_test(fit, &c, &format!("{} - {}", show(cell_a), show(cell_b)))
}

/// Marginal pairwise contrast `level_a - level_b` of one fixed factor.
/// A positive t means `level_a` has the higher fitted mean.
pub fn pairwise_contrast_in(
    fit: &FittedLmm,
    factor: &str,
    level_a: &str,
    level_b: &str,
) -> Result<TestResult, StatsError> {
    let fi = factor_index(fit, factor)?;
    if !fit.formula().has_term(&Term::main(factor)) {
        return Err(StatsError::UnknownTerm(factor.into()));
    }
    level_index(fit, fi, level_a)?;
    level_index(fit, fi, level_b)?;
    let c = cell_contrast_vector(fit, &[(factor, level_a)], &[(factor, level_b)])?;
    contrast_t_test(fit, &c, &format!("{level_a} - {level_b}"))
}

/// Pairwise contrast between two levels of whichever fixed factor owns them.
pub fn pairwise_contrast(fit: &FittedLmm, level_a: &str, level_b: &str) -> Result<TestResult, StatsError> {
    let owners: Vec<&str> = fit
        .factors()
        .iter()
        .filter(|f| f.level_index(level_a).is_some() && f.level_index(level_b).is_some())
        .map(|f| f.name.as_str())
        .collect();
    match owners.as_slice() {
        [only] => pairwise_contrast_in(fit, only, level_a, level_b),
        [] => {
            let missing = if fit.factors().iter().any(|f| f.level_index(level_a).is_some()) {
                level_b
            } else {
                level_a
            };
            Err(StatsError::UnknownLevel {
                factor: None,
                level: missing.into(),
            })
        }
        _ => Err(StatsError::InvalidData(format!(
            "levels `{level_a}` and `{level_b}` occur in several factors; name the factor"
        ))),
    }
}

fn wald_f_with(
    fit: &FittedLmm,
    sat: &Satterthwaite,
    l: &Matrix,
    label: String,
) -> Result<TestResult, StatsError> {
    let p = fit.coefficients().len();
    if l.cols() != p {
        return Err(StatsError::ContrastLength {
            expected: p,
            got: l.cols(),
        });
    }
    let r = l.rows();
    if r == 0 {
        return Err(StatsError::EmptyTerm(label));
    }
    let lcl = l.matmul(fit.coefficient_covariance()).matmul(&l.transpose());
    let lb = l.matvec(fit.coefficients());
    let (values, vectors) = symmetric_eigen(&lcl);
    if !(values[r - 1] > values[0] * 1e-12) {
        return Err(StatsError::Domain("contrast covariance is singular"));
    }
    let mut f = 0.0;
    let mut nus = Vec::with_capacity(r);
    for m in 0..r {
        let v = vectors.column(m);
        let proj = dot(&v, &lb);
        f += proj * proj / values[m];
        let c = l.t_matvec(&v);
        nus.push(sat.df(&c)?);
    }
    f /= r as f64;
    let ddf = combine_df(&nus);
    Ok(TestResult {
        label,
        kind: StatisticKind::F,
        statistic: f,
        df: r as f64,
        df_denominator: Some(ddf),
        p_value: f_sf(f, r as f64, ddf)?,
        estimate: None,
        std_error: None,
    })
}

/// Denominator df of a multi-row Wald test from the per-eigencontrast
/// Satterthwaite df.
fn combine_df(nus: &[f64]) -> f64 {
    let q = nus.len() as f64;
    if nus.len() == 1 {
        return nus[0];
    }
    let first = nus[0];
    if nus.iter().all(|&v| (v - first).abs() <= 1e-8 * first.abs().max(1.0)) {
        return first;
    }
    if nus.iter().any(|&v| v <= 2.0) {
        return 2.0;
    }
    let e: f64 = nus.iter().map(|&v| v / (v - 2.0)).sum();
    2.0 * e / (e - q)
}

/// Wald F test of `Lβ = 0` with Satterthwaite denominator df.
pub fn wald_f_test(fit: &FittedLmm, l: &Matrix, label: &str) -> Result<TestResult, StatsError> {
    let sat = Satterthwaite::new(fit)?;
    wald_f_with(fit, &sat, l, label.into())
}

/// Type III F test for every fixed term of the model.
pub fn type3_anova(fit: &FittedLmm) -> Result<Vec<TestResult>, StatsError> {
    let sat = Satterthwaite::new(fit)?;
    let p = fit.coefficients().len();
    fit.term_columns()
        .iter()
        .map(|(term, range)| {
            let mut l = Matrix::zeros(range.len(), p);
            for (i, j) in range.clone().enumerate() {
                l[(i, j)] = 1.0;
            }
            wald_f_with(fit, &sat, &l, format!("{term}"))
        })
        .collect()
}

/// Type III F test for a single term.
pub fn type3_term(fit: &FittedLmm, term: &Term) -> Result<TestResult, StatsError> {
    let (_, range) = fit
        .term_columns()
        .iter()
        .find(|(t, _)| t == term)
        .ok_or_else(|| StatsError::UnknownTerm(format!("{term}")))?;
    let p = fit.coefficients().len();
    let mut l = Matrix::zeros(range.len(), p);
    for (i, j) in range.clone().enumerate() {
        l[(i, j)] = 1.0;
    }
    wald_f_test(fit, &l, &format!("{term}"))
}

/// Likelihood-ratio test of `reduced` against `full`; both must be ML fits
/// of the same data with nested fixed structures.
pub fn likelihood_ratio_test(full: &FittedLmm, reduced: &FittedLmm) -> Result<TestResult, StatsError> {
    if full.criterion() != Criterion::Ml || reduced.criterion() != Criterion::Ml {
        return Err(StatsError::CriterionMismatch);
    }
    if full.data_fingerprint() != reduced.data_fingerprint() {
        return Err(StatsError::NotNested(String::from("models were fitted to different data")));
    }
    if !reduced.formula().is_nested_in(full.formula()) {
        return Err(StatsError::NotNested(format!(
            "`{}` is not contained in `{}`",
            reduced.formula(),
            full.formula()
        )));
    }
    let label = format!("{} vs {}", reduced.formula(), full.formula());
    let df = full.n_coefficients() - reduced.n_coefficients();
    let raw = reduced.ml_deviance() - full.ml_deviance();
    if df == 0 {
        return Ok(TestResult {
            label,
            kind: StatisticKind::ChiSquare,
            statistic: 0.0,
            df: 0.0,
            df_denominator: None,
            p_value: 1.0,
            estimate: None,
            std_error: None,
        });
    }
    let statistic = if raw < 0.0 && raw > -LRT_SLACK { 0.0 } else { raw };
    if statistic < 0.0 {
        return Err(StatsError::NoConvergence("negative likelihood-ratio statistic; a fit missed its optimum"));
    }
    Ok(TestResult {
        label,
        kind: StatisticKind::ChiSquare,
        statistic,
        df: df as f64,
        df_denominator: None,
        p_value: chi_square_sf(statistic, df as f64)?,
        estimate: None,
        std_error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::data::{Dataset, Factor, ModelFormula};
    use crate::stats::lmm::fit_lmm;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    fn within_item(items: usize, seed: u64) -> Dataset {
        let e = noise(items, seed ^ 77);
        let z = noise(items * 3, seed);
        let mut y = Vec::new();
        let mut cond = Vec::new();
        let mut item = Vec::new();
        for i in 0..items {
            for (c, (lab, mu)) in [("a", 0.0), ("b", 0.4), ("c", -0.2)].into_iter().enumerate() {
                y.push(5.0 + 3.0 * e[i] + mu + z[i * 3 + c]);
                cond.push(lab);
                item.push(format!("i{i}"));
            }
        }
        Dataset::new(
            y,
            vec![Factor::from_labels("cond", &cond)],
            vec![Factor::from_labels("item", &item)],
        )
        .unwrap()
    }

    #[test]
    fn hessian_matches_finite_differences_of_deviance() {
        let data = within_item(10, 4);
        let fit = fit_lmm(&data, &ModelFormula::main_effects(&["cond"], &["item"]), Criterion::Reml).unwrap();
        let sat = Satterthwaite::new(&fit).unwrap();
        let theta = [fit.variance_components()[0].variance, fit.residual_variance()];
        let d = |t: [f64; 2]| fit.deviance_at(Criterion::Reml, &t).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                // central mixed difference with one Richardson step
                let mixed = |scale: f64| {
                    let hi = scale * theta[i];
                    let hj = scale * theta[j];
                    let shift = |si: f64, sj: f64| {
                        let mut t = theta;
                        t[i] += si * hi;
                        t[j] += sj * hj;
                        d(t)
                    };
                    (shift(1.0, 1.0) - shift(1.0, -1.0) - shift(-1.0, 1.0) + shift(-1.0, -1.0)) / (4.0 * hi * hj)
                };
                let num = (4.0 * mixed(1e-3) - mixed(2e-3)) / 3.0;
                let ana = sat.hessian()[(i, j)];
                assert!((num - ana).abs() < 1e-4 * ana.abs().max(1.0), "({i},{j}) {num} vs {ana}");
            }
        }
    }

    #[test]
    fn within_item_contrast_has_stratum_df() {
        // balanced randomized block: within-item contrasts live in the
        // (items - 1)(conditions - 1) residual stratum
        let data = within_item(12, 9);
        let fit = fit_lmm(&data, &ModelFormula::main_effects(&["cond"], &["item"]), Criterion::Reml).unwrap();
        assert!(!fit.is_singular());
        let t = pairwise_contrast(&fit, "a", "b").unwrap();
        assert!((t.df - 22.0).abs() < 1e-5, "{}", t.df);
        let f = type3_anova(&fit).unwrap();
        assert!((f[0].df_denominator.unwrap() - 22.0).abs() < 1e-5);
    }

    #[test]
    fn equal_levels_give_null_contrast() {
        let data = within_item(6, 2);
        let fit = fit_lmm(&data, &ModelFormula::main_effects(&["cond"], &["item"]), Criterion::Reml).unwrap();
        let t = pairwise_contrast(&fit, "b", "b").unwrap();
        assert_eq!((t.statistic, t.p_value), (0.0, 1.0));
        assert!(matches!(pairwise_contrast(&fit, "a", "zz"), Err(StatsError::UnknownLevel { .. })));
    }

    #[test]
    fn lrt_rejects_reml_and_accepts_identical() {
        let data = within_item(6, 3);
        let f = ModelFormula::main_effects(&["cond"], &["item"]);
        let reml = fit_lmm(&data, &f, Criterion::Reml).unwrap();
        assert_eq!(likelihood_ratio_test(&reml, &reml).unwrap_err(), StatsError::CriterionMismatch);
        let ml = fit_lmm(&data, &f, Criterion::Ml).unwrap();
        let r = likelihood_ratio_test(&ml, &ml).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let reduced = fit_lmm(&data, &ModelFormula::new(vec![], vec!["item".into()]), Criterion::Ml).unwrap();
        assert!(matches!(likelihood_ratio_test(&reduced, &ml), Err(StatsError::NotNested(_))));
        let ok = likelihood_ratio_test(&ml, &reduced).unwrap();
        assert_eq!(ok.df, 2.0);
        assert!(ok.statistic >= 0.0);
    }

    #[test]
    fn combine_df_rules() {
        assert_eq!(combine_df(&[7.5]), 7.5);
        assert_eq!(combine_df(&[9.0, 9.0]), 9.0);
        assert_eq!(combine_df(&[1.5, 20.0]), 2.0);
        let e: f64 = 10.0 / 8.0 + 20.0 / 18.0;
        assert!((combine_df(&[10.0, 20.0]) - 2.0 * e / (e - 2.0)).abs() < 1e-12);
    }
}
