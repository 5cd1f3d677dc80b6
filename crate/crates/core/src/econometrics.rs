//! Fixed-effects least squares for the disruption regressions.
//!
//! A [`RegressionSpec`] declares the dependent variable, log-transformed
//! covariates (optionally interacted with the re-centered year), categorical
//! factors with a baseline level, and an absorbed fixed-effects group.
//! [`fit`] demeans within groups and solves the reduced problem by Householder
//! QR; classical standard errors subtract one degree of freedom per absorbed
//! group, matching a dummy-variable fit.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::table::{PaperRow, PaperTable};

/// Two-sided 95% normal critical value.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Cd,
    Refs,
    Citations,
    TeamSize,
    Year,
    /// Arm indicator (group label).
    Group,
}

impl Variable {
    pub fn name(self) -> &'static str {
        match self {
            Variable::Cd => "cd",
            Variable::Refs => "refs",
            Variable::Citations => "citations",
            Variable::TeamSize => "team_size",
            Variable::Year => "year",
            Variable::Group => "group",
        }
    }

    fn value(self, row: &PaperRow) -> Result<f64> {
        Ok(match self {
            Variable::Cd => row.cd,
            Variable::Refs => row.refs as f64,
            Variable::Citations => row.citations as f64,
            Variable::TeamSize => row.team_size.ok_or(Error::MissingMetadata {
                id: row.id,
                field: "team_size",
            })? as f64,
            Variable::Year => row.year as f64,
            Variable::Group => row.group_label.ok_or(Error::MissingMetadata {
                id: row.id,
                field: "group_label",
            })? as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependentTransform {
    #[default]
    Identity,
    Abs,
    /// Journal-year normalized CD taken from the table.
    Normcd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependent {
    pub variable: Variable,
    #[serde(default)]
    pub transform: DependentTransform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermTransform {
    Identity,
    Log,
    LogSquared,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    #[default]
    None,
    /// Multiplied by `year - first sample year`.
    Year,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub variable: Variable,
    pub transform: TermTransform,
    #[serde(default)]
    pub interaction: Interaction,
}

impl Term {
    pub fn new(variable: Variable, transform: TermTransform) -> Self {
        Self {
            variable,
            transform,
            interaction: Interaction::None,
        }
    }

    pub fn log(variable: Variable) -> Self {
        Self::new(variable, TermTransform::Log)
    }

    pub fn log_sq(variable: Variable) -> Self {
        Self::new(variable, TermTransform::LogSquared)
    }

    pub fn times_year(self) -> Self {
        Self {
            interaction: Interaction::Year,
            ..self
        }
    }

    pub fn name(&self) -> String {
        let v = self.variable.name();
        let base = match self.transform {
            TermTransform::Identity => v.to_string(),
            TermTransform::Log => format!("ln({v})"),
            TermTransform::LogSquared => format!("ln({v})^2"),
        };
        match self.interaction {
            Interaction::None => base,
            Interaction::Year => format!("{base}*year"),
        }
    }

    fn value(&self, row: &PaperRow, index: usize, year_origin: i32) -> Result<f64> {
        let x = self.variable.value(row)?;
        let v = match self.transform {
            TermTransform::Identity => x,
            TermTransform::Log | TermTransform::LogSquared => {
                if x <= 0.0 {
                    return Err(Error::NonPositiveLog {
                        variable: self.variable.name().into(),
                        row: index,
                        value: x,
                    });
                }
                let l = x.ln();
                if self.transform == TermTransform::Log {
                    l
                } else {
                    l * l
                }
            }
        };
        Ok(match self.interaction {
            Interaction::None => v,
            Interaction::Year => v * (row.year - year_origin) as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub variable: Variable,
    pub baseline: i64,
    /// Declared levels; derived from the data when absent.
    #[serde(default)]
    pub levels: Option<Vec<i64>>,
}

impl Factor {
    pub fn new(variable: Variable, baseline: i64) -> Self {
        Self {
            variable,
            baseline,
            levels: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffects {
    #[default]
    None,
    Year,
    Journal,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeType {
    #[default]
    Classical,
    /// CR1 cluster-robust by fixed-effects group.
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub dependent: Dependent,
    #[serde(default)]
    pub terms: Vec<Term>,
    #[serde(default)]
    pub factors: Vec<Factor>,
    #[serde(default)]
    pub fixed_effects: FixedEffects,
    #[serde(default)]
    pub se_type: SeType,
}

impl RegressionSpec {
    /// |CD| on ln k, ln r, ln c with year fixed effects.
    pub fn abs_cd_model() -> Self {
        Self {
            dependent: Dependent {
                variable: Variable::Cd,
                transform: DependentTransform::Abs,
            },
            terms: vec![
                Term::log(Variable::TeamSize),
                Term::log(Variable::Refs),
                Term::log(Variable::Citations),
            ],
            factors: vec![],
            fixed_effects: FixedEffects::Year,
            se_type: SeType::Classical,
        }
    }

    /// CD on quadratic log covariates, the ln k × t correction, year factor
    /// and journal fixed effects.
    pub fn year_trend_model(baseline_year: i32) -> Self {
        Self {
            dependent: Dependent {
                variable: Variable::Cd,
                transform: DependentTransform::Identity,
            },
            terms: vec![
                Term::log(Variable::Refs),
                Term::log_sq(Variable::Refs),
                Term::log(Variable::Citations),
                Term::log_sq(Variable::Citations),
                Term::log(Variable::TeamSize),
                Term::log_sq(Variable::TeamSize),
                Term::log(Variable::TeamSize).times_year(),
            ],
            factors: vec![Factor::new(Variable::Year, baseline_year as i64)],
            fixed_effects: FixedEffects::Journal,
            se_type: SeType::Classical,
        }
    }

    /// NormCD on quadratic log covariates with a team-size factor (baseline
    /// k = 1) and year fixed effects.
    pub fn team_size_model() -> Self {
        Self {
            dependent: Dependent {
                variable: Variable::Cd,
                transform: DependentTransform::Normcd,
            },
            terms: vec![
                Term::log(Variable::Refs),
                Term::log_sq(Variable::Refs),
                Term::log(Variable::Citations),
                Term::log_sq(Variable::Citations),
            ],
            factors: vec![Factor::new(Variable::TeamSize, 1)],
            fixed_effects: FixedEffects::Year,
            se_type: SeType::Classical,
        }
    }

    fn validate(&self) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(Error::InvalidSpec(format!("term {} is duplicated", t.name())));
            }
            if t.variable == self.dependent.variable {
                return Err(Error::InvalidSpec(format!(
                    "dependent variable {} used as regressor",
                    t.variable.name()
                )));
            }
        }
        for (i, f) in self.factors.iter().enumerate() {
            if !matches!(f.variable, Variable::Year | Variable::TeamSize | Variable::Group) {
                return Err(Error::InvalidSpec(format!("{} cannot be a factor", f.variable.name())));
            }
            if self.factors[..i].iter().any(|g| g.variable == f.variable) {
                return Err(Error::InvalidSpec(format!(
                    "factor {} is duplicated",
                    f.variable.name()
                )));
            }
        }
        if self.dependent.transform == DependentTransform::Normcd && self.dependent.variable != Variable::Cd {
            return Err(Error::InvalidSpec("normcd transform applies to cd only".into()));
        }
        if self.se_type == SeType::Cluster && self.fixed_effects == FixedEffects::None {
            return Err(Error::InvalidSpec(
                "cluster-robust errors need a fixed-effects group".into(),
            ));
        }
        Ok(())
    }
}

/// Levels of an expanded factor; `column` is `None` for the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorInfo {
    pub variable: Variable,
    pub baseline: i64,
    pub levels: Vec<(i64, Option<usize>)>,
}

#[derive(Debug, Clone)]
pub struct Design {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub columns: Vec<String>,
    /// Dense fixed-effects group of each row.
    pub groups: Option<Vec<usize>>,
    pub n_groups: usize,
    pub fixed_effects: FixedEffects,
    /// Year subtracted in year interactions.
    pub year_origin: i32,
    pub factors: Vec<FactorInfo>,
    pub has_intercept: bool,
}

pub fn build_design(table: &PaperTable, spec: &RegressionSpec) -> Result<Design> {
    spec.validate()?;
    let rows = &table.rows;
    let n = rows.len();
    let year_origin = rows.iter().map(|r| r.year).min().unwrap_or(0);

    let y = rows
        .iter()
        .map(|row| {
            Ok(match spec.dependent.transform {
                DependentTransform::Identity => spec.dependent.variable.value(row)?,
                DependentTransform::Abs => spec.dependent.variable.value(row)?.abs(),
                DependentTransform::Normcd => row.normcd.ok_or(Error::MissingMetadata {
                    id: row.id,
                    field: "normcd",
                })?,
            })
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut columns: Vec<String> = spec.terms.iter().map(Term::name).collect();
    let mut factors = Vec::new();
    let mut factor_values: Vec<Vec<i64>> = Vec::new();
    for f in &spec.factors {
        let values = rows
            .iter()
            .map(|r| f.variable.value(r).map(|v| v as i64))
            .collect::<Result<Vec<i64>>>()?;
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &v in &values {
            *counts.entry(v).or_default() += 1;
        }
        let levels: Vec<i64> = match &f.levels {
            Some(declared) => {
                for &l in declared {
                    if !counts.contains_key(&l) {
                        return Err(Error::EmptyFactorLevel {
                            factor: f.variable.name().into(),
                            level: l,
                        });
                    }
                }
                if let Some(&v) = counts.keys().find(|v| !declared.contains(v)) {
                    return Err(Error::InvalidSpec(format!(
                        "factor {}: value {v} is not a declared level",
                        f.variable.name()
                    )));
                }
                let mut d = declared.clone();
                d.sort_unstable();
                d.dedup();
                d
            }
            None => counts.keys().copied().collect(),
        };
        if !levels.contains(&f.baseline) {
            return Err(Error::InvalidSpec(format!(
                "factor {}: baseline level {} absent from data",
                f.variable.name(),
                f.baseline
            )));
        }
        let mut info = FactorInfo {
            variable: f.variable,
            baseline: f.baseline,
            levels: Vec::with_capacity(levels.len()),
        };
        for l in levels {
            if l == f.baseline {
                info.levels.push((l, None));
            } else {
                info.levels.push((l, Some(columns.len())));
                columns.push(format!("{}={l}", f.variable.name()));
            }
        }
        factors.push(info);
        factor_values.push(values);
    }
    let has_intercept = spec.fixed_effects == FixedEffects::None;
    if has_intercept {
        columns.push("const".into());
    }

    let p = columns.len();
    let mut x = DMatrix::<f64>::zeros(n, p);
    for (i, row) in rows.iter().enumerate() {
        for (j, term) in spec.terms.iter().enumerate() {
            x[(i, j)] = term.value(row, i, year_origin)?;
        }
    }
    for (info, values) in factors.iter().zip(&factor_values) {
        let index: BTreeMap<i64, Option<usize>> = info.levels.iter().copied().collect();
        for (i, v) in values.iter().enumerate() {
            if let Some(col) = index[v] {
                x[(i, col)] = 1.0;
            }
        }
    }
    if has_intercept {
        x.column_mut(p - 1).fill(1.0);
    }

    let (groups, n_groups) = match spec.fixed_effects {
        FixedEffects::None => (None, 0),
        fe => {
            let keys = rows
                .iter()
                .map(|r| match fe {
                    FixedEffects::Year => Ok(r.year as i64),
                    _ => r.journal_id.map(|j| j as i64).ok_or(Error::MissingMetadata {
                        id: r.id,
                        field: "journal_id",
                    }),
                })
                .collect::<Result<Vec<i64>>>()?;
            let mut dense: BTreeMap<i64, usize> = BTreeMap::new();
            for &k in &keys {
                let next = dense.len();
                dense.entry(k).or_insert(next);
            }
            let g = dense.len();
            (Some(keys.iter().map(|k| dense[k]).collect()), g)
        }
    };

    Ok(Design {
        y: DVector::from_vec(y),
        x,
        columns,
        groups,
        n_groups,
        fixed_effects: spec.fixed_effects,
        year_origin,
        factors,
        has_intercept,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Column order of the design matrix.
    pub columns: Vec<String>,
    pub coefficients: Vec<Coefficient>,
    pub n_obs: usize,
    /// Absorbed fixed-effects groups (0 without fixed effects).
    pub n_groups: usize,
    pub n_params: usize,
    pub df_resid: usize,
    /// Within R² under fixed effects, centered R² otherwise.
    pub r2: f64,
    pub adj_r2: f64,
    pub residual_variance: f64,
    pub se_type: SeType,
    pub fixed_effects: FixedEffects,
    /// Either `"absorbed"` (fixed effects removed by demeaning; `constant`
    /// is the mean absorbed effect) or `"intercept"` (explicit constant).
    pub parameterization: String,
    pub constant: Option<f64>,
    pub year_origin: i32,
    pub factors: Vec<FactorInfo>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl FitResult {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

fn demean(design: &Design) -> (DVector<f64>, DMatrix<f64>) {
    let mut y = design.y.clone();
    let mut x = design.x.clone();
    if let Some(groups) = &design.groups {
        let g = design.n_groups;
        let p = x.ncols();
        let mut count = vec![0.0; g];
        let mut ysum = vec![0.0; g];
        let mut xsum = DMatrix::<f64>::zeros(g, p);
        for (i, &k) in groups.iter().enumerate() {
            count[k] += 1.0;
            ysum[k] += y[i];
            for j in 0..p {
                xsum[(k, j)] += x[(i, j)];
            }
        }
        for (i, &k) in groups.iter().enumerate() {
            y[i] -= ysum[k] / count[k];
            for j in 0..p {
                x[(i, j)] -= xsum[(k, j)] / count[k];
            }
        }
    }
    (y, x)
}

/// Least-squares fit of a design, absorbing its fixed-effects group.
pub fn fit(design: &Design, se_type: SeType) -> Result<FitResult> {
    let n = design.x.nrows();
    let p = design.x.ncols();
    if p == 0 {
        return Err(Error::InvalidSpec("no regressors".into()));
    }
    let absorbed = design.n_groups;
    if n <= absorbed + p {
        return Err(Error::InvalidSpec(format!(
            "{n} observations do not exceed {} parameters",
            absorbed + p
        )));
    }
    if se_type == SeType::Cluster && design.groups.is_none() {
        return Err(Error::InvalidSpec(
            "cluster-robust errors need a fixed-effects group".into(),
        ));
    }
    let (y, x) = demean(design);

    let qr = x.clone().qr();
    let r = qr.r();
    let deficient: Vec<String> = (0..p)
        .filter(|&j| {
            let raw_scale = design.x.column(j).amax().max(1.0);
            let norm = x.column(j).norm();
            norm <= 1e-10 * raw_scale * (n as f64).sqrt() || r[(j, j)].abs() <= 1e-9 * norm
        })
        .map(|j| design.columns[j].clone())
        .collect();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient { columns: deficient });
    }

    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let beta = r
        .solve_upper_triangular(&qty.rows(0, p).into_owned())
        .ok_or_else(|| Error::RankDeficient {
            columns: design.columns.clone(),
        })?;
    let fitted = &x * &beta;
    let resid = &y - fitted;
    let rss = resid.norm_squared();
    let df_resid = n - absorbed - p;
    let sigma2 = rss / df_resid as f64;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .expect("triangular factor checked for rank");
    let xtx_inv = &r_inv * r_inv.transpose();
    let cov = match se_type {
        SeType::Classical => &xtx_inv * sigma2,
        SeType::Cluster => {
            let groups = design.groups.as_ref().expect("checked above");
            let g = design.n_groups;
            let mut scores = DMatrix::<f64>::zeros(g, p);
            for (i, &k) in groups.iter().enumerate() {
                for j in 0..p {
                    scores[(k, j)] += x[(i, j)] * resid[i];
                }
            }
            let meat = scores.transpose() * &scores;
            let scale = if g > 1 {
                (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - p as f64))
            } else {
                f64::NAN
            };
            (&xtx_inv * meat * &xtx_inv) * scale
        }
    };

    let tss = if design.groups.is_some() {
        y.norm_squared()
    } else {
        let mean = y.mean();
        y.iter().map(|v| (v - mean).powi(2)).sum()
    };
    let (r2, adj_r2) = if tss > 0.0 {
        let denom_df = if design.groups.is_some() { n - absorbed } else { n - 1 };
        (1.0 - rss / tss, 1.0 - (rss / df_resid as f64) / (tss / denom_df as f64))
    } else {
        (f64::NAN, f64::NAN)
    };

    let normal = Normal::standard();
    let coefficients = (0..p)
        .map(|j| {
            let estimate = beta[j];
            let se = cov[(j, j)].max(0.0).sqrt();
            let p_value = if se > 0.0 {
                2.0 * (1.0 - normal.cdf((estimate / se).abs()))
            } else if estimate != 0.0 {
                0.0
            } else {
                1.0
            };
            Coefficient {
                name: design.columns[j].clone(),
                estimate,
                se,
                ci_low: estimate - Z_95 * se,
                ci_high: estimate + Z_95 * se,
                p_value,
            }
        })
        .collect();

    let constant = design.groups.as_ref().map(|_| {
        let xbar = DVector::from_iterator(p, (0..p).map(|j| design.x.column(j).mean()));
        design.y.mean() - xbar.dot(&beta)
    });

    Ok(FitResult {
        columns: design.columns.clone(),
        coefficients,
        n_obs: n,
        n_groups: absorbed,
        n_params: p,
        df_resid,
        r2,
        adj_r2,
        residual_variance: sigma2,
        se_type,
        fixed_effects: design.fixed_effects,
        parameterization: if design.groups.is_some() {
            "absorbed"
        } else {
            "intercept"
        }
        .into(),
        constant,
        year_origin: design.year_origin,
        factors: design.factors.clone(),
        residuals: resid.iter().copied().collect(),
    })
}

/// Builds the design for `spec` and fits it.
pub fn fit_spec(table: &PaperTable, spec: &RegressionSpec) -> Result<FitResult> {
    fit(&build_design(table, spec)?, spec.se_type)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEffect {
    pub level: i64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub p_value: Option<f64>,
    /// `p < 0.05` against the baseline.
    pub significant: bool,
    pub baseline: bool,
}

/// Per-level effects of a factor relative to its baseline.
pub fn marginal_effects(fit: &FitResult, factor: &str) -> Result<Vec<LevelEffect>> {
    let info = fit
        .factors
        .iter()
        .find(|f| f.variable.name() == factor)
        .ok_or_else(|| Error::UnknownFactor(factor.to_string()))?;
    Ok(info
        .levels
        .iter()
        .map(|&(level, col)| match col {
            None => LevelEffect {
                level,
                estimate: 0.0,
                se: None,
                ci: None,
                p_value: None,
                significant: false,
                baseline: true,
            },
            Some(j) => {
                let c = &fit.coefficients[j];
                LevelEffect {
                    level,
                    estimate: c.estimate,
                    se: Some(c.se),
                    ci: Some((c.ci_low, c.ci_high)),
                    p_value: Some(c.p_value),
                    significant: c.p_value < 0.05,
                    baseline: false,
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGap {
    pub n_control: usize,
    pub n_treated: usize,
    pub mean_dependent_control: f64,
    pub mean_dependent_treated: f64,
    /// Treated minus control mean of the dependent variable.
    pub raw_gap: f64,
    pub raw_gap_se: f64,
    pub mean_ln_refs_control: f64,
    pub mean_ln_refs_treated: f64,
    /// ln r coefficient of the full model without the indicator.
    pub b_refs: Coefficient,
    /// Indicator coefficient of the model where it replaces ln r.
    pub delta: Coefficient,
    /// Gap predicted by the reference-list terms of the full model.
    pub covariate_explained: f64,
    /// `covariate_explained / raw_gap`; `None` when the raw gap is not
    /// distinguishable from zero at the 5% level.
    pub fraction_explained: Option<f64>,
}

/// Attributes the treated-minus-control gap to reference-list length.
///
/// Rows whose group label equals `indicator` are treated, all others are
/// controls. `full_spec` must contain a ln r term.
pub fn decompose_group_gap(table: &PaperTable, full_spec: &RegressionSpec, indicator: u8) -> Result<GroupGap> {
    let mut relabeled = table.clone();
    for row in &mut relabeled.rows {
        let g = row.group_label.ok_or(Error::MissingMetadata {
            id: row.id,
            field: "group_label",
        })?;
        row.group_label = Some(u8::from(g == indicator));
    }
    let treated: Vec<bool> = relabeled.rows.iter().map(|r| r.group_label == Some(1)).collect();
    let n_treated = treated.iter().filter(|&&t| t).count();
    let n_control = treated.len() - n_treated;
    if n_treated == 0 || n_control == 0 {
        return Err(Error::SingleGroup);
    }
    let ln_refs = Term::log(Variable::Refs);
    if !full_spec.terms.contains(&ln_refs) {
        return Err(Error::InvalidSpec("full model needs a ln(refs) term".into()));
    }
    if full_spec.terms.iter().any(|t| t.variable == Variable::Group) {
        return Err(Error::InvalidSpec("full model must not contain the indicator".into()));
    }

    let design_a = build_design(&relabeled, full_spec)?;
    let fit_a = fit(&design_a, full_spec.se_type)?;

    let mut spec_b = full_spec.clone();
    let pos = spec_b.terms.iter().position(|t| *t == ln_refs).expect("checked");
    spec_b.terms.retain(|t| t.variable != Variable::Refs);
    spec_b.terms.insert(
        pos.min(spec_b.terms.len()),
        Term::new(Variable::Group, TermTransform::Identity),
    );
    let fit_b = fit_spec(&relabeled, &spec_b)?;

    let split_mean = |values: &dyn Fn(usize) -> f64| {
        let (mut s0, mut s1) = (0.0, 0.0);
        for (i, &t) in treated.iter().enumerate() {
            if t {
                s1 += values(i);
            } else {
                s0 += values(i);
            }
        }
        (s0 / n_control as f64, s1 / n_treated as f64)
    };
    let (m0, m1) = split_mean(&|i| design_a.y[i]);
    let (v0, v1) = {
        let (mut a, mut b) = (0.0, 0.0);
        for (i, &t) in treated.iter().enumerate() {
            if t {
                b += (design_a.y[i] - m1).powi(2);
            } else {
                a += (design_a.y[i] - m0).powi(2);
            }
        }
        (a / (n_control.max(2) - 1) as f64, b / (n_treated.max(2) - 1) as f64)
    };
    let raw_gap = m1 - m0;
    let raw_gap_se = (v0 / n_control as f64 + v1 / n_treated as f64).sqrt();

    let ln_col = design_a
        .columns
        .iter()
        .position(|c| *c == ln_refs.name())
        .expect("present");
    let (lr0, lr1) = split_mean(&|i| design_a.x[(i, ln_col)]);
    let mut covariate_explained = 0.0;
    for (j, term) in full_spec.terms.iter().enumerate() {
        if term.variable == Variable::Refs {
            let (a, b) = split_mean(&|i| design_a.x[(i, j)]);
            covariate_explained += fit_a.coefficients[j].estimate * (b - a);
        }
    }
    let fraction_explained = (raw_gap.abs() > Z_95 * raw_gap_se).then(|| covariate_explained / raw_gap);
    let delta = fit_b
        .coef(&Term::new(Variable::Group, TermTransform::Identity).name())
        .expect("indicator column")
        .clone();

    Ok(GroupGap {
        n_control,
        n_treated,
        mean_dependent_control: m0,
        mean_dependent_treated: m1,
        raw_gap,
        raw_gap_se,
        mean_ln_refs_control: lr0,
        mean_ln_refs_treated: lr1,
        b_refs: fit_a.coefficients[ln_col].clone(),
        delta,
        covariate_explained,
        fraction_explained,
    })
}
