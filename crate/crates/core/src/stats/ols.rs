use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::distributions::t_two_tailed_p;
use super::mean;
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(intercept)";

/// Named design columns; built with an intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    rows: usize,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Design {
    pub fn with_intercept(rows: usize) -> Self {
        Design {
            rows,
            names: vec![INTERCEPT.to_string()],
            columns: vec![vec![1.0; rows]],
        }
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<&mut Self> {
        let name = name.into();
        if values.len() != self.rows {
            return Err(Error::InvalidArgument(format!(
                "column {name:?} has {} rows, expected {}",
                values.len(),
                self.rows
            )));
        }
        self.names.push(name);
        self.columns.push(values);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.columns.len(), |i, j| self.columns[j][i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<Coefficient>,
    pub r2: f64,
    pub rss: f64,
    pub n: usize,
    pub df_resid: usize,
}

impl OlsFit {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }
}

/// Index of the first column that is (numerically) a linear combination of
/// the columns before it, read off the diagonal of R in X = QR.
pub(crate) fn first_dependent_column(x: &DMatrix<f64>) -> Option<usize> {
    let r = x.clone().qr().r();
    (0..x.ncols()).find(|&j| {
        let scale = x.column(j).norm().max(1e-300);
        r[(j, j)].abs() <= 1e-10 * scale
    })
}

/// Least squares via Householder QR.
pub fn ols(y: &[f64], design: &Design) -> Result<OlsFit> {
    let n = design.rows();
    let p = design.names().len();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::InsufficientData(format!("{n} rows for {p} coefficients")));
    }
    let has_intercept = design.names().first().is_some_and(|n| n == INTERCEPT);
    if has_intercept {
        for (name, col) in design.names().iter().zip(&design.columns).skip(1) {
            if col.iter().all(|v| *v == col[0]) {
                return Err(Error::ZeroVariance(format!("column {name:?}")));
            }
        }
    }
    let x = design.to_matrix();
    if let Some(j) = first_dependent_column(&x) {
        return Err(Error::RankDeficient(format!(
            "column {:?} is collinear with earlier columns",
            design.names()[j]
        )));
    }

    let qr = x.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let yv = DVector::from_column_slice(y);
    let qty = q.transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let df_resid = n - p;
    let sigma2 = rss / df_resid as f64;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient("triangular inverse failed".into()))?;
    let cov_unscaled = &r_inv * r_inv.transpose();

    let ybar = mean(y);
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN };

    let coefficients = design
        .names()
        .iter()
        .enumerate()
        .map(|(j, term)| {
            let se = (sigma2 * cov_unscaled[(j, j)]).sqrt();
            let t = beta[j] / se;
            Coefficient {
                term: term.clone(),
                estimate: beta[j],
                se,
                t,
                p: if se > 0.0 { t_two_tailed_p(t, df_resid as f64) } else { 0.0 },
            }
        })
        .collect();
    Ok(OlsFit {
        coefficients,
        r2,
        rss,
        n,
        df_resid,
    })
}
