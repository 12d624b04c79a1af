//! Linear mixed models with crossed random intercepts for participant and
//! stimulus, fitted by profiled REML.
//!
//! With relative variances θ = (σ²_p/σ²_e, σ²_s/σ²_e) and M = [X y], the
//! marginal precision (I + Σ θ_k Z_k Z_k')⁻¹ is applied through the
//! q × q system A = Λ Z'Z Λ + I. Both diagonal blocks of A are diagonal, so
//! the factor with more levels is eliminated directly and only the Schur
//! complement of the other block is factored.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::distributions::t_two_tailed_p;
use crate::stats::ols::{first_dependent_column, Coefficient, Design};
use crate::stats::{mean, sample_var};

/// Relative variances below this are treated as zero.
pub const THETA_FLOOR: f64 = 1e-10;
const LOG_THETA_MIN: f64 = -23.025_850_929_940_457; // ln 1e-10
const LOG_THETA_MAX: f64 = 18.420_680_743_952_367; // ln 1e8

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingFactor {
    pub name: String,
    codes: Vec<usize>,
    labels: Vec<String>,
}

impl GroupingFactor {
    /// Levels are numbered in order of first appearance.
    pub fn from_labels<S: AsRef<str>>(name: impl Into<String>, labels: &[S]) -> Self {
        let mut index = HashMap::new();
        let mut levels = Vec::new();
        let codes = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l.to_string()).or_insert_with(|| {
                    levels.push(l.to_string());
                    levels.len() - 1
                })
            })
            .collect();
        GroupingFactor {
            name: name.into(),
            codes,
            labels: levels,
        }
    }

    pub fn levels(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }
}

#[derive(Debug, Clone)]
pub struct MixedData {
    pub response: Vec<f64>,
    pub design: Design,
    pub participant: GroupingFactor,
    pub stimulus: Option<GroupingFactor>,
}

impl MixedData {
    pub fn new(
        response: Vec<f64>,
        design: Design,
        participant: GroupingFactor,
        stimulus: Option<GroupingFactor>,
    ) -> Result<Self> {
        let n = response.len();
        if design.rows() != n || participant.codes.len() != n {
            return Err(Error::InvalidArgument(format!(
                "response has {n} rows, design {}, participant ids {}",
                design.rows(),
                participant.codes.len()
            )));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("response contains non-finite values".into()));
        }
        let mut factors = vec![&participant];
        if let Some(s) = &stimulus {
            if s.codes.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "stimulus ids have {} rows, expected {n}",
                    s.codes.len()
                )));
            }
            factors.push(s);
        }
        for f in factors {
            if f.levels() < 2 {
                return Err(Error::InsufficientData(format!(
                    "grouping factor {:?} needs at least 2 levels",
                    f.name
                )));
            }
        }
        Ok(MixedData {
            response,
            design,
            participant,
            stimulus,
        })
    }

    pub fn rows(&self) -> usize {
        self.response.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmOptions {
    pub max_evaluations: usize,
    /// Stop when the simplex's deviance spread falls below this.
    pub ftol: f64,
    /// and its diameter in log-θ units falls below this.
    pub xtol: f64,
}

impl Default for LmmOptions {
    fn default() -> Self {
        LmmOptions {
            max_evaluations: 2000,
            ftol: 1e-8,
            xtol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedModelFit {
    pub coefficients: Vec<Coefficient>,
    pub sigma2_participant: f64,
    /// Zero when the model has no stimulus factor.
    pub sigma2_stimulus: f64,
    pub sigma2_resid: f64,
    pub r2m: f64,
    pub r2c: f64,
    pub reml_deviance: f64,
    pub initial_deviance: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub n: usize,
    pub df_resid: usize,
    pub participant_levels: usize,
    pub stimulus_levels: Option<usize>,
}

impl MixedModelFit {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }

    /// "B = 1.47, SE = 0.09, t = 16.70, p < .001, R²m = .210, R²c = .502"
    pub fn describe(&self, term: &str) -> Option<String> {
        let c = self.coefficient(term)?;
        Some(format!(
            "B = {:.2}, SE = {:.2}, t = {:.2}, {}, R²m = {}, R²c = {}",
            c.estimate,
            c.se,
            c.t,
            format_p(c.p),
            trim_leading_zero(self.r2m, 3),
            trim_leading_zero(self.r2c, 3)
        ))
    }
}

pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "p < .001".to_string()
    } else {
        format!("p = {}", trim_leading_zero(p, 3))
    }
}

pub(crate) fn trim_leading_zero(x: f64, digits: usize) -> String {
    let s = format!("{x:.digits$}");
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

/// Table of coefficients and variance components.
pub fn format_fit(outcome: &str, fit: &MixedModelFit) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "outcome: {outcome}  (n = {}, df = {})", fit.n, fit.df_resid);
    let _ = writeln!(s, "{:<24} {:>9} {:>8} {:>8} {:>9}", "term", "B", "SE", "t", "p");
    for c in &fit.coefficients {
        let _ = writeln!(
            s,
            "{:<24} {:>9.3} {:>8.3} {:>8.2} {:>9.4}",
            c.term, c.estimate, c.se, c.t, c.p
        );
    }
    let _ = writeln!(
        s,
        "σ² participant = {:.4}, σ² stimulus = {:.4}, σ² residual = {:.4}",
        fit.sigma2_participant, fit.sigma2_stimulus, fit.sigma2_resid
    );
    let _ = writeln!(
        s,
        "R²m = {:.3}, R²c = {:.3}, REML deviance = {:.3}{}",
        fit.r2m,
        fit.r2c,
        fit.reml_deviance,
        if fit.converged { "" } else { " (not converged)" }
    );
    s
}

/// Cross products reused at every θ.
struct CrossProducts {
    n: usize,
    p: usize,
    mtm: DMatrix<f64>,
    /// Level counts and Z'M for the factor eliminated directly.
    c1: Vec<f64>,
    z1m: DMatrix<f64>,
    second: Option<SecondFactor>,
    /// True when the stimulus factor is the one eliminated directly.
    swapped: bool,
}

struct SecondFactor {
    c2: Vec<f64>,
    z2m: DMatrix<f64>,
    n12: DMatrix<f64>,
}

struct Evaluation {
    deviance: f64,
    beta: DVector<f64>,
    gxx_inv: DMatrix<f64>,
    r2: f64,
}

fn factor_cross(codes: &[usize], levels: usize, m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let mut counts = vec![0.0; levels];
    let mut zm = DMatrix::zeros(levels, m.ncols());
    for (row, &code) in codes.iter().enumerate() {
        counts[code] += 1.0;
        for j in 0..m.ncols() {
            zm[(code, j)] += m[(row, j)];
        }
    }
    (counts, zm)
}

impl CrossProducts {
    fn new(data: &MixedData, x: &DMatrix<f64>) -> Self {
        let (n, p) = x.shape();
        let mut m = x.clone().insert_column(p, 0.0);
        for (i, y) in data.response.iter().enumerate() {
            m[(i, p)] = *y;
        }
        let mtm = m.transpose() * &m;

        let (first, second, swapped) = match &data.stimulus {
            Some(s) if s.levels() > data.participant.levels() => (s, Some(&data.participant), true),
            Some(s) => (&data.participant, Some(s), false),
            None => (&data.participant, None, false),
        };
        let (c1, z1m) = factor_cross(&first.codes, first.levels(), &m);
        let second = second.map(|f2| {
            let (c2, z2m) = factor_cross(&f2.codes, f2.levels(), &m);
            let mut n12 = DMatrix::zeros(first.levels(), f2.levels());
            for (a, b) in first.codes.iter().zip(&f2.codes) {
                n12[(*a, *b)] += 1.0;
            }
            SecondFactor { c2, z2m, n12 }
        });
        CrossProducts {
            n,
            p,
            mtm,
            c1,
            z1m,
            second,
            swapped,
        }
    }

    fn dims(&self) -> usize {
        if self.second.is_some() {
            2
        } else {
            1
        }
    }

    /// θ in (participant, stimulus) order to internal (first, second) order.
    fn internal(&self, theta: &[f64]) -> (f64, f64) {
        let t2 = theta.get(1).copied().unwrap_or(0.0);
        if self.swapped {
            (t2, theta[0])
        } else {
            (theta[0], t2)
        }
    }

    fn evaluate(&self, theta: &[f64]) -> Option<Evaluation> {
        let (t1, t2) = self.internal(theta);
        let a1: Vec<f64> = self.c1.iter().map(|c| t1 * c + 1.0).collect();
        let mut logdet: f64 = a1.iter().map(|a| a.ln()).sum();

        let mut scaled = self.z1m.clone();
        for (i, a) in a1.iter().enumerate() {
            scaled.row_mut(i).scale_mut(t1 / a);
        }
        let mut g = &self.mtm - self.z1m.transpose() * &scaled;

        if let Some(sf) = &self.second {
            let mut hn12 = sf.n12.clone();
            for (i, a) in a1.iter().enumerate() {
                hn12.row_mut(i).scale_mut(1.0 / a);
            }
            let mut s = -(t1 * t2) * (sf.n12.transpose() * &hn12);
            for (j, c) in sf.c2.iter().enumerate() {
                s[(j, j)] += t2 * c + 1.0;
            }
            let w = (&sf.z2m - t1 * (hn12.transpose() * &self.z1m)) * t2.sqrt();
            let chol = Cholesky::new(s)?;
            logdet += 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let sinv_w = chol.solve(&w);
            g -= w.transpose() * sinv_w;
        }

        let p = self.p;
        let gxx = g.view((0, 0), (p, p)).into_owned();
        let gxy = g.view((0, p), (p, 1)).into_owned();
        let chol = Cholesky::new(gxx)?;
        let logdet_x = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let beta = chol.solve(&gxy).column(0).into_owned();
        let r2 = g[(p, p)] - gxy.column(0).dot(&beta);
        if !(r2 > 0.0) {
            return None;
        }
        let dof = (self.n - p) as f64;
        let deviance = logdet + logdet_x + dof * (1.0 + (2.0 * std::f64::consts::PI * r2 / dof).ln());
        Some(Evaluation {
            deviance,
            beta,
            gxx_inv: chol.inverse(),
            r2,
        })
    }
}

fn theta_of(phi: &[f64]) -> Vec<f64> {
    phi.iter()
        .map(|v| v.clamp(LOG_THETA_MIN, LOG_THETA_MAX).exp().max(THETA_FLOOR))
        .collect()
}

struct Minimum {
    x: Vec<f64>,
    f: f64,
    evaluations: usize,
    converged: bool,
}

/// Nelder–Mead simplex search.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], options: &LmmOptions) -> Minimum {
    let d = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..d {
        let mut v = start.to_vec();
        v[i] += 1.0;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evaluations = d + 1;
    let mut converged = false;

    while evaluations < options.max_evaluations {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[d] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() < options.ftol && diameter < options.xtol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let reflected = along(-1.0);
        let fr = f(&reflected);
        evaluations += 1;
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            evaluations += 1;
            if fe < fr {
                simplex[d] = expanded;
                values[d] = fe;
            } else {
                simplex[d] = reflected;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = reflected;
            values[d] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[d] {
            let c = along(-0.5);
            let fc = f(&c);
            (c, fc)
        } else {
            let c = along(0.5);
            let fc = f(&c);
            (c, fc)
        };
        evaluations += 1;
        if fc < values[d].min(fr) {
            simplex[d] = contracted;
            values[d] = fc;
            continue;
        }
        for i in 1..=d {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            values[i] = f(&shrunk);
            simplex[i] = shrunk;
        }
        evaluations += d;
    }

    let best = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        f: values[best],
        evaluations,
        converged,
    }
}

/// Newton steps on the interior coordinates using central differences.
/// The simplex leaves the optimum located to about √ftol; this sharpens it.
fn newton_polish<F: Fn(&[f64]) -> f64>(f: &F, start: Minimum) -> Minimum {
    const H: f64 = 1e-3;
    let mut x = start.x;
    let mut fx = start.f;
    let mut evaluations = start.evaluations;
    for _ in 0..20 {
        let free: Vec<usize> = (0..x.len())
            .filter(|&i| x[i] > LOG_THETA_MIN + 1.0 && x[i] < LOG_THETA_MAX - 1.0)
            .collect();
        if free.is_empty() {
            break;
        }
        let k = free.len();
        let at = |deltas: &[(usize, f64)]| {
            let mut y = x.clone();
            for &(i, dlt) in deltas {
                y[i] += dlt;
            }
            f(&y)
        };
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for (a, &i) in free.iter().enumerate() {
            let fp = at(&[(i, H)]);
            let fm = at(&[(i, -H)]);
            grad[a] = (fp - fm) / (2.0 * H);
            hess[(a, a)] = (fp - 2.0 * fx + fm) / (H * H);
            for (b, &j) in free.iter().enumerate().skip(a + 1) {
                let v = (at(&[(i, H), (j, H)]) - at(&[(i, H), (j, -H)]) - at(&[(i, -H), (j, H)])
                    + at(&[(i, -H), (j, -H)]))
                    / (4.0 * H * H);
                hess[(a, b)] = v;
                hess[(b, a)] = v;
                evaluations += 4;
            }
            evaluations += 2;
        }
        let Some(chol) = Cholesky::new(hess) else { break };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-4 {
            let mut y = x.clone();
            for (a, &i) in free.iter().enumerate() {
                y[i] -= t * step[a];
            }
            let fy = f(&y);
            evaluations += 1;
            if fy <= fx {
                x = y;
                fx = fy;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved || step.amax() * t < 1e-10 {
            break;
        }
    }
    Minimum {
        x,
        f: fx,
        evaluations,
        converged: start.converged,
    }
}

pub fn fit_lmm(data: &MixedData, options: &LmmOptions) -> Result<MixedModelFit> {
    let x = data.design.to_matrix();
    let (n, p) = x.shape();
    if n <= p + 1 {
        return Err(Error::InsufficientData(format!("{n} rows for {p} fixed effects")));
    }
    if let Some(j) = first_dependent_column(&x) {
        return Err(Error::RankDeficient(format!(
            "fixed-effect column {:?} is constant or collinear with earlier columns",
            data.design.names()[j]
        )));
    }

    let cross = CrossProducts::new(data, &x);
    let dims = cross.dims();
    let objective = |phi: &[f64]| match cross.evaluate(&theta_of(phi)) {
        Some(e) => e.deviance,
        None => f64::INFINITY,
    };

    let floor = vec![LOG_THETA_MIN; dims];
    let Some(at_floor) = cross.evaluate(&theta_of(&floor)) else {
        return exact_fit(data, &x);
    };
    let tss = sample_var(&data.response) * (n - 1) as f64;
    if at_floor.r2 <= 1e-20 * tss.max(f64::MIN_POSITIVE) {
        return exact_fit(data, &x);
    }

    let starts: Vec<Vec<f64>> = if dims == 2 {
        vec![vec![0.0, 0.0], vec![-2.3, 1.0], vec![1.0, -2.3]]
    } else {
        vec![vec![0.0], vec![-2.3], vec![1.0]]
    };
    let initial_deviance = objective(&starts[0]);
    let mut evaluations = 1;
    let mut best: Option<Minimum> = None;
    for start in &starts {
        let m = nelder_mead(&objective, start, options);
        evaluations += m.evaluations;
        if best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one start");
    // a boundary solution can sit on a flat plateau the simplex never reaches
    for boundary in boundary_candidates(&best.x) {
        let fb = objective(&boundary);
        evaluations += 1;
        if fb < best.f {
            best.x = boundary;
            best.f = fb;
        }
    }
    let best = newton_polish(&objective, best);
    evaluations += best.evaluations;

    let theta = theta_of(&best.x);
    let eval = cross
        .evaluate(&theta)
        .ok_or_else(|| Error::RankDeficient("penalized system is singular at the optimum".into()))?;
    Ok(assemble(data, &x, &cross, &theta, &eval, initial_deviance, best.converged, evaluations))
}

fn boundary_candidates(x: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..x.len() {
        let mut b = x.to_vec();
        b[i] = LOG_THETA_MIN;
        out.push(b);
    }
    if x.len() > 1 {
        out.push(vec![LOG_THETA_MIN; x.len()]);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    data: &MixedData,
    x: &DMatrix<f64>,
    cross: &CrossProducts,
    theta: &[f64],
    eval: &Evaluation,
    initial_deviance: f64,
    converged: bool,
    evaluations: usize,
) -> MixedModelFit {
    let (n, p) = (cross.n, cross.p);
    let df_resid = n - p;
    let sigma2 = eval.r2 / df_resid as f64;
    let clean = |t: f64| if t <= THETA_FLOOR * 1.000_001 { 0.0 } else { t * sigma2 };
    let sigma2_participant = clean(theta[0]);
    let sigma2_stimulus = theta.get(1).map_or(0.0, |t| clean(*t));

    let coefficients = coefficient_table(data, &eval.beta, &(sigma2 * &eval.gxx_inv), df_resid);
    let fitted = x * &eval.beta;
    let (r2m, r2c) = nakagawa_r2(
        fitted.as_slice(),
        sigma2_participant,
        sigma2_stimulus,
        sigma2,
    );
    MixedModelFit {
        coefficients,
        sigma2_participant,
        sigma2_stimulus,
        sigma2_resid: sigma2,
        r2m,
        r2c,
        reml_deviance: eval.deviance,
        initial_deviance,
        converged,
        evaluations,
        n,
        df_resid,
        participant_levels: data.participant.levels(),
        stimulus_levels: data.stimulus.as_ref().map(GroupingFactor::levels),
    }
}

fn coefficient_table(data: &MixedData, beta: &DVector<f64>, cov: &DMatrix<f64>, df: usize) -> Vec<Coefficient> {
    data.design
        .names()
        .iter()
        .enumerate()
        .map(|(j, term)| {
            let se = cov[(j, j)].max(0.0).sqrt();
            let t = if se > 0.0 { beta[j] / se } else { f64::INFINITY.copysign(beta[j]) };
            Coefficient {
                term: term.clone(),
                estimate: beta[j],
                se,
                t,
                p: if se > 0.0 { t_two_tailed_p(t, df as f64) } else { 0.0 },
            }
        })
        .collect()
}

/// The response is an exact linear function of the fixed effects.
fn exact_fit(data: &MixedData, x: &DMatrix<f64>) -> Result<MixedModelFit> {
    let (n, p) = x.shape();
    let y = DVector::from_column_slice(&data.response);
    let beta = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let fitted = x * &beta;
    let (r2m, r2c) = nakagawa_r2(fitted.as_slice(), 0.0, 0.0, 0.0);
    Ok(MixedModelFit {
        coefficients: coefficient_table(data, &beta, &DMatrix::zeros(p, p), n - p),
        sigma2_participant: 0.0,
        sigma2_stimulus: 0.0,
        sigma2_resid: 0.0,
        r2m,
        r2c,
        reml_deviance: f64::NEG_INFINITY,
        initial_deviance: f64::NEG_INFINITY,
        converged: true,
        evaluations: 1,
        n,
        df_resid: n - p,
        participant_levels: data.participant.levels(),
        stimulus_levels: data.stimulus.as_ref().map(GroupingFactor::levels),
    })
}

/// Marginal and conditional R² by variance partition, with the fixed-effect
/// variance taken as the sample variance of the fitted values Xβ̂.
pub fn nakagawa_r2(fitted: &[f64], sigma2_participant: f64, sigma2_stimulus: f64, sigma2_resid: f64) -> (f64, f64) {
    let var_f = if fitted.len() > 1 {
        let m = mean(fitted);
        let v = fitted.iter().map(|f| (f - m).powi(2)).sum::<f64>() / (fitted.len() - 1) as f64;
        if v < 1e-24 * m.abs().max(1.0) {
            0.0
        } else {
            v
        }
    } else {
        0.0
    };
    let random = sigma2_participant + sigma2_stimulus;
    let total = var_f + random + sigma2_resid;
    if total <= 0.0 {
        return (0.0, 0.0);
    }
    (var_f / total, (var_f + random) / total)
}

/// Fits several outcomes concurrently; results keep input order.
pub fn fit_many(models: &[(String, MixedData)], options: &LmmOptions) -> Vec<(String, Result<MixedModelFit>)> {
    models
        .par_iter()
        .map(|(name, data)| (name.clone(), fit_lmm(data, options)))
        .collect()
}
