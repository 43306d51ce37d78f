//! Linear design rules from archive elites, and the Mann-Whitney U test.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::archive::Elite;

pub const FEATURE_NAMES: [&str; 6] = ["d1", "d2", "d3", "d4", "d5", "d6"];
pub const FEATURE_LABELS: [&str; 6] =
    ["leg length", "mass", "legs per side", "tube thickness", "leg length scale", "leg width scale"];
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
/// Exact Mann-Whitney p-values are used when both samples are at most this size.
pub const EXACT_MAX: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("row {0} has the wrong number of columns")]
    RaggedRow(usize),
    #[error("column {0} has zero scale")]
    DegenerateColumn(usize),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("empty sample")]
    EmptySample,
}

/// n samples by d features.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self, AnalysisError> {
        if rows.len() < 2 {
            return Err(AnalysisError::TooFewSamples(rows.len()));
        }
        let d = rows[0].len();
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(AnalysisError::RaggedRow(i));
        }
        Ok(Self { data: DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]) })
    }

    pub fn from_elites(elites: &[&Elite]) -> Result<Self, AnalysisError> {
        let rows: Vec<Vec<f64>> = elites.iter().map(|e| e.features.to_array().to_vec()).collect();
        Self::new(&rows)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn means(&self) -> Vec<f64> {
        self.data.column_iter().map(|c| c.mean()).collect()
    }
}

/// Root mean square of each raw column.
pub fn scales(s: &SampleMatrix) -> Result<Vec<f64>, AnalysisError> {
    let n = s.rows() as f64;
    s.data
        .column_iter()
        .enumerate()
        .map(|(j, c)| {
            let rms = (c.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
            if rms > 0.0 && rms.is_finite() {
                Ok(rms)
            } else {
                Err(AnalysisError::DegenerateColumn(j))
            }
        })
        .collect()
}

/// Covariance of the mean-centred, scale-normalized columns.
pub fn normalized_covariance(s: &SampleMatrix) -> Result<DMatrix<f64>, AnalysisError> {
    let sc = scales(s)?;
    let means = s.means();
    let n = s.rows();
    let z = DMatrix::from_fn(n, s.cols(), |i, j| (s.get(i, j) - means[j]) / sc[j]);
    let m = z.transpose() * &z / n as f64;
    // Exact symmetry regardless of summation order.
    Ok((&m + m.transpose()) * 0.5)
}

/// Eigen-decomposition by cyclic Jacobi rotations. Eigenvalues ascend; the
/// columns of the returned matrix are the matching unit eigenvectors.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), AnalysisError> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(AnalysisError::NotSymmetric);
    }
    let scale = m.abs().max().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(AnalysisError::NotSymmetric);
            }
        }
    }
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let off = |a: &DMatrix<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    let frob = a.norm().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= JACOBI_TOL * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTerm {
    pub feature: usize,
    pub coefficient: f64,
    /// Sample mean of the feature.
    pub mean: f64,
    /// |coefficient × scale|, the ordering key.
    pub weight: f64,
}

/// `g[target] = intercept + Σ coefficient·(g[feature] − mean)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRule {
    pub target: usize,
    pub intercept: f64,
    pub terms: Vec<RuleTerm>,
    pub eigenvalue: f64,
    pub sqrt_eigenvalue: f64,
    pub mean_error_percent: f64,
}

impl DesignRule {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.terms.iter().map(|t| t.coefficient * (row[t.feature] - t.mean)).sum::<f64>()
    }
}

/// One rule per eigenpair with sqrt(eigenvalue) ≤ `threshold`, most significant first.
pub fn extract_rules(s: &SampleMatrix, threshold: f64) -> Result<Vec<DesignRule>, AnalysisError> {
    let sc = scales(s)?;
    let means = s.means();
    let (values, vectors) = sym_eigen(&normalized_covariance(s)?)?;
    let d = s.cols();
    let mut rules = Vec::new();
    for (k, &e) in values.iter().enumerate() {
        let root = e.max(0.0).sqrt();
        if root > threshold {
            continue;
        }
        let v = vectors.column(k);
        // Largest component; the later index wins ties (to rounding).
        let top = v.amax();
        let target = (0..d).rev().find(|&j| v[j].abs() >= top * (1.0 - 1e-9)).expect("non-empty");
        let mut terms: Vec<RuleTerm> = (0..d)
            .filter(|&j| j != target)
            .map(|j| {
                let coefficient = -(v[j] * sc[target]) / (v[target] * sc[j]);
                RuleTerm { feature: j, coefficient, mean: means[j], weight: (coefficient * sc[j]).abs() }
            })
            .collect();
        terms.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.feature.cmp(&b.feature)));
        let mut rule =
            DesignRule { target, intercept: means[target], terms, eigenvalue: e, sqrt_eigenvalue: root, mean_error_percent: 0.0 };
        let n = s.rows();
        let total: f64 = (0..n)
            .map(|i| {
                let row: Vec<f64> = (0..d).map(|j| s.get(i, j)).collect();
                (rule.predict(&row) - row[target]).abs()
            })
            .sum();
        rule.mean_error_percent = total / n as f64 / sc[target] * 100.0;
        rules.push(rule);
    }
    Ok(rules)
}

/// Three significant figures.
pub fn sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.2}", x);
    }
    let exp = x.abs().log10().floor() as i32;
    let rounded = {
        let f = 10f64.powi(2 - exp);
        (x * f).round() / f
    };
    // Rounding can carry into the next decade (9.996 → 10.0).
    let exp = if rounded == 0.0 { exp } else { rounded.abs().log10().floor() as i32 };
    let decimals = (2 - exp).max(0) as usize;
    format!("{:.*}", decimals, rounded)
}

fn mean_symbol(name: &str) -> String {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) => format!("{c}\u{304}{}", chars.as_str()),
        None => String::new(),
    }
}

pub fn format_rule(rule: &DesignRule, names: &[&str]) -> String {
    let target = names[rule.target];
    let mut out = format!("{target} = {}", mean_symbol(target));
    for t in &rule.terms {
        let sign = if t.coefficient < 0.0 { '−' } else { '+' };
        let name = names[t.feature];
        out.push_str(&format!(" {sign} {}({name} − {})", sig3(t.coefficient.abs()), mean_symbol(name)));
    }
    out
}

/// Plain-text report, one rule per line.
pub fn format_rules(rules: &[DesignRule], names: &[&str]) -> String {
    let lines: Vec<String> = rules.iter().map(|r| format_rule(r, names)).collect();
    let width = lines.iter().map(|l| l.chars().count()).max().unwrap_or(0).max("Rule".len());
    let mut out = format!("{:<width$}  Mean error\n", "Rule");
    for (line, r) in lines.iter().zip(rules) {
        let pad = width - line.chars().count();
        out.push_str(&format!("{line}{}  {}%\n", " ".repeat(pad), percent_text(r.mean_error_percent)));
    }
    out
}

fn percent_text(p: f64) -> String {
    format!("{:.2}", p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Midranks of the pooled sample, 1-based.
pub fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let (n, m) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let offset = (n * (n + 1)) as f64 / 2.0;
    let u = ranks[..n].iter().sum::<f64>() - offset;
    let centre = (n * m) as f64 / 2.0;

    if n <= EXACT_MAX && m <= EXACT_MAX {
        // Distribution of the doubled rank sum over all n-subsets, by dynamic programming.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![vec![0u64; max_sum + 1]; n + 1];
        counts[0][0] = 1;
        for &r in &doubled {
            for k in (1..=n).rev() {
                for s in (r..=max_sum).rev() {
                    counts[k][s] += counts[k - 1][s - r];
                }
            }
        }
        let total: u64 = counts[n].iter().sum();
        let observed = (u - centre).abs();
        let extreme: u64 = counts[n]
            .iter()
            .enumerate()
            .filter(|&(s, _)| ((s as f64 / 2.0 - offset) - centre).abs() >= observed - 1e-9)
            .map(|(_, &c)| c)
            .sum();
        return Ok(MannWhitney { u, p_two_sided: (extreme as f64 / total as f64).min(1.0), exact: true });
    }

    let big_n = (n + m) as f64;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&x| x == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = (n * m) as f64 / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney { u, p_two_sided: 1.0, exact: false });
    }
    let z = (((u - centre).abs() - 0.5).max(0.0)) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = (2.0 * (1.0 - normal.cdf(z))).min(1.0);
    Ok(MannWhitney { u, p_two_sided: p, exact: false })
}
