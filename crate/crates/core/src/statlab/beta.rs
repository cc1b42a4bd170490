use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{digamma, ln_gamma};

use super::StatError;
use crate::par::{self, Execution};
use crate::rgcn::{lifestyle_logit, lifestyle_probability};

const RESPONSE_EPS: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;
const CHUNK: usize = 512;

/// Row-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl Design {
    /// Columns of equal length; an intercept is not added.
    pub fn from_columns(names: Vec<String>, cols: &[Vec<f64>]) -> Design {
        let rows = cols.first().map_or(0, Vec::len);
        let p = cols.len();
        let mut data = vec![0.0; rows * p];
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), rows, "column {j} length");
            for (i, v) in c.iter().enumerate() {
                data[i * p + j] = *v;
            }
        }
        Design { names, rows, data }
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.cols();
        &self.data[i * p..(i + 1) * p]
    }

    /// Columns that are numerically linear combinations of earlier ones.
    pub fn collinear_columns(&self) -> Vec<String> {
        let p = self.cols();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut bad = Vec::new();
        for j in 0..p {
            let col: Vec<f64> = (0..self.rows).map(|i| self.data[i * p + j]).collect();
            let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut r = col;
            for _ in 0..2 {
                for q in &basis {
                    let d: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
                    r.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
                }
            }
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm0 == 0.0 || norm <= 1e-9 * norm0.max(1.0) {
                bad.push(self.names[j].clone());
            } else {
                basis.push(r.into_iter().map(|v| v / norm).collect());
            }
        }
        bad
    }
}

/// Trigamma by upward recurrence and the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Eval {
    ll: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

/// Log-likelihood, score and Hessian in (beta, ln phi). Rows are reduced in
/// fixed-size chunks in order, so results do not depend on thread count.
fn evaluate(x: &Design, y: &[f64], theta: &[f64], want_hess: bool, exec: Execution) -> Eval {
    let p = x.cols();
    let q = p + 1;
    let phi = theta[p].exp();
    let lg_phi = ln_gamma(phi);
    let dg_phi = digamma(phi);
    let tg_phi = if want_hess { trigamma(phi) } else { 0.0 };
    let chunks = x.rows.div_ceil(CHUNK);
    let parts = par::map_range(exec, chunks, |c| {
        let mut e = Eval {
            ll: 0.0,
            grad: vec![0.0; q],
            hess: if want_hess { vec![0.0; q * q] } else { Vec::new() },
        };
        for i in c * CHUNK..((c + 1) * CHUNK).min(x.rows) {
            let xi = x.row(i);
            let eta: f64 = xi.iter().zip(&theta[..p]).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta).clamp(1e-12, 1.0 - 1e-12);
            let (a, b) = (mu * phi, (1.0 - mu) * phi);
            let yi = y[i];
            let (ly, l1y) = (yi.ln(), (-yi).ln_1p());
            e.ll += lg_phi - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * ly + (b - 1.0) * l1y;
            let ystar = ly - l1y;
            let mustar = digamma(a) - digamma(b);
            let g = mu * (1.0 - mu);
            let d_eta = phi * (ystar - mustar) * g;
            let d_phi = mu * (ystar - mustar) + l1y - digamma(b) + dg_phi;
            for j in 0..p {
                e.grad[j] += d_eta * xi[j];
            }
            e.grad[p] += phi * d_phi;
            if want_hess {
                let (ta, tb) = (trigamma(a), trigamma(b));
                let h_ee = -phi * phi * g * g * (ta + tb) + phi * (ystar - mustar) * g * (1.0 - 2.0 * mu);
                let h_ep = g * ((ystar - mustar) - phi * (mu * ta - (1.0 - mu) * tb));
                let h_pp = -mu * mu * ta - (1.0 - mu) * (1.0 - mu) * tb + tg_phi;
                for j in 0..p {
                    for k in 0..=j {
                        e.hess[j * q + k] += h_ee * xi[j] * xi[k];
                    }
                    e.hess[p * q + j] += phi * h_ep * xi[j];
                }
                e.hess[p * q + p] += phi * d_phi + phi * phi * h_pp;
            }
        }
        e
    });
    let mut out = Eval {
        ll: 0.0,
        grad: vec![0.0; q],
        hess: if want_hess { vec![0.0; q * q] } else { Vec::new() },
    };
    for part in parts {
        out.ll += part.ll;
        out.grad.iter_mut().zip(&part.grad).for_each(|(a, b)| *a += b);
        out.hess.iter_mut().zip(&part.hess).for_each(|(a, b)| *a += b);
    }
    if want_hess {
        for j in 0..q {
            for k in j + 1..q {
                out.hess[j * q + k] = out.hess[k * q + j];
            }
        }
    }
    out
}

/// Beta log-likelihood at `beta` and `ln_phi`.
pub fn beta_loglik(x: &Design, y: &[f64], beta: &[f64], ln_phi: f64) -> f64 {
    let theta: Vec<f64> = beta.iter().copied().chain([ln_phi]).collect();
    evaluate(x, y, &theta, false, Execution::Sequential).ll
}

/// Analytic score with respect to (beta, ln phi).
pub fn beta_score(x: &Design, y: &[f64], beta: &[f64], ln_phi: f64) -> Vec<f64> {
    let theta: Vec<f64> = beta.iter().copied().chain([ln_phi]).collect();
    evaluate(x, y, &theta, false, Execution::Sequential).grad
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub phi: f64,
    pub se: Vec<f64>,
    pub se_phi: f64,
    /// Reviewer-clustered sandwich standard errors, when groups were given.
    pub cluster_se: Option<Vec<f64>>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub n: usize,
    pub nudged: usize,
}

fn nudge(y: &[f64]) -> Result<(Vec<f64>, usize), StatError> {
    let mut nudged = 0;
    let mut out = Vec::with_capacity(y.len());
    for (i, &v) in y.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(StatError::InvalidResponse(format!("row {i}: {v}")));
        }
        let c = v.clamp(RESPONSE_EPS, 1.0 - RESPONSE_EPS);
        if c != v {
            nudged += 1;
        }
        out.push(c);
    }
    Ok((out, nudged))
}

/// Least squares of logit(y) on X for starting values.
fn start_values(x: &Design, y: &[f64]) -> Vec<f64> {
    let p = x.cols();
    let xm = DMatrix::from_row_slice(x.rows, p, &x.data);
    let z = DVector::from_iterator(y.len(), y.iter().map(|v| (v / (1.0 - v)).ln()));
    let xtx = xm.transpose() * &xm;
    let beta = xtx
        .cholesky()
        .map(|c| c.solve(&(xm.transpose() * &z)))
        .unwrap_or_else(|| DVector::zeros(p));
    let eta = &xm * &beta;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.rows {
        let mu = sigmoid(eta[i]);
        num += mu * (1.0 - mu);
        den += (y[i] - mu).powi(2);
    }
    let phi = if den > 0.0 { (num / den - 1.0).max(1.0) } else { 10.0 };
    beta.iter().copied().chain([phi.ln()]).collect()
}

/// Fixed-effects beta regression with logit link by damped Newton.
/// `groups`, if given, yields cluster-robust standard errors.
pub fn beta_fit(x: &Design, y: &[f64], groups: Option<&[String]>, exec: Execution) -> Result<BetaFit, StatError> {
    if x.rows != y.len() || x.rows == 0 {
        return Err(StatError::InvalidResponse(
            "response length does not match design".into(),
        ));
    }
    if let Some(g) = groups {
        if g.len() != y.len() {
            return Err(StatError::InvalidResponse("group length does not match design".into()));
        }
    }
    let bad = x.collinear_columns();
    if !bad.is_empty() {
        return Err(StatError::RankDeficient(bad));
    }
    let (y, nudged) = nudge(y)?;
    let p = x.cols();
    let q = p + 1;
    let mut theta = start_values(x, &y);
    let mut cur = evaluate(x, &y, &theta, true, exec);
    let mut trajectory = vec![cur.ll];
    let mut iterations = 0;
    loop {
        let gmax = cur.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < GRAD_TOL {
            break;
        }
        if iterations >= MAX_ITER {
            return Err(StatError::NoConvergence {
                iterations,
                grad_norm: gmax,
                trajectory,
            });
        }
        iterations += 1;
        let neg_h = -DMatrix::from_row_slice(q, q, &cur.hess);
        let g = DVector::from_column_slice(&cur.grad);
        let step = match neg_h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => {
                // Not concave here: fall back to a ridge-damped system.
                let mut ridge = 1e-6 * neg_h.diagonal().abs().max().max(1.0);
                loop {
                    let m = &neg_h + DMatrix::identity(q, q) * ridge;
                    if let Some(c) = m.cholesky() {
                        break c.solve(&g);
                    }
                    ridge *= 10.0;
                }
            }
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            let e = evaluate(x, &y, &cand, true, exec);
            if e.ll.is_finite() && e.ll >= cur.ll - 1e-12 * cur.ll.abs().max(1.0) {
                theta = cand;
                cur = e;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        trajectory.push(cur.ll);
        if !accepted {
            let gmax = cur.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            return Err(StatError::NoConvergence {
                iterations,
                grad_norm: gmax,
                trajectory,
            });
        }
    }

    let info = -DMatrix::from_row_slice(q, q, &cur.hess);
    let cov = info
        .clone()
        .try_inverse()
        .ok_or_else(|| StatError::RankDeficient(vec!["information matrix".into()]))?;
    let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    let phi = theta[p].exp();
    let se_phi = phi * cov[(p, p)].sqrt();

    let cluster_se = groups.map(|g| {
        let scores = per_row_scores(x, &y, &theta);
        let mut by_group: BTreeMap<&str, DVector<f64>> = BTreeMap::new();
        for (i, key) in g.iter().enumerate() {
            *by_group.entry(key.as_str()).or_insert_with(|| DVector::zeros(q)) += &scores[i];
        }
        let mut meat = DMatrix::zeros(q, q);
        for s in by_group.values() {
            meat += s * s.transpose();
        }
        let n_groups = by_group.len() as f64;
        if n_groups > 1.0 {
            meat *= n_groups / (n_groups - 1.0);
        }
        let sandwich = &cov * meat * &cov;
        (0..p).map(|j| sandwich[(j, j)].sqrt()).collect()
    });

    let null = Design::from_columns(vec!["(Intercept)".into()], &[vec![1.0; x.rows]]);
    let loglik_null = {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let b0 = (mean / (1.0 - mean)).ln();
        beta_loglik(&null, &y, &[b0], theta[p])
    };

    Ok(BetaFit {
        names: x.names.clone(),
        beta: theta[..p].to_vec(),
        phi,
        se,
        se_phi,
        cluster_se,
        loglik: cur.ll,
        loglik_null,
        iterations,
        grad_norm: cur.grad.iter().fold(0.0f64, |m, g| m.max(g.abs())),
        n: x.rows,
        nudged,
    })
}

fn per_row_scores(x: &Design, y: &[f64], theta: &[f64]) -> Vec<DVector<f64>> {
    let p = x.cols();
    let phi = theta[p].exp();
    (0..x.rows)
        .map(|i| {
            let xi = x.row(i);
            let eta: f64 = xi.iter().zip(&theta[..p]).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta).clamp(1e-12, 1.0 - 1e-12);
            let (a, b) = (mu * phi, (1.0 - mu) * phi);
            let (ly, l1y) = (y[i].ln(), (-y[i]).ln_1p());
            let r = (ly - l1y) - (digamma(a) - digamma(b));
            let d_eta = phi * r * mu * (1.0 - mu);
            let d_phi = mu * r + l1y - digamma(b) + digamma(phi);
            DVector::from_iterator(p + 1, xi.iter().map(|v| d_eta * v).chain([phi * d_phi]))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefRow {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub cluster_se: Option<f64>,
    /// Estimate read as a scaled lifestyle score: logit and probability.
    pub logit: Option<f64>,
    pub probability: Option<f64>,
}

/// Per-coefficient table; `interpret` names terms whose estimates are read
/// on the scaled lifestyle scale.
pub fn coefficient_report(fit: &BetaFit, interpret: &[&str]) -> Vec<CoefRow> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    fit.names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let z = fit.beta[j] / fit.se[j];
            let read = interpret.contains(&name.as_str());
            CoefRow {
                term: name.clone(),
                estimate: fit.beta[j],
                se: fit.se[j],
                z,
                p_value: 2.0 * (1.0 - normal.cdf(z.abs())),
                cluster_se: fit.cluster_se.as_ref().map(|s| s[j]),
                logit: read.then(|| lifestyle_logit(fit.beta[j])),
                probability: read.then(|| lifestyle_probability(fit.beta[j])),
            }
        })
        .collect()
}

pub fn write_coefficients_csv<W: Write>(w: W, rows: &[CoefRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

impl fmt::Display for BetaFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "beta regression (logit link), n = {}, log-lik {:.4} (null {:.4}), phi {:.4} (se {:.4})",
            self.n, self.loglik, self.loglik_null, self.phi, self.se_phi
        )?;
        writeln!(
            f,
            "newton iterations {}, max |score| {:.2e}, responses nudged {}",
            self.iterations, self.grad_norm, self.nudged
        )?;
        for (j, name) in self.names.iter().enumerate() {
            write!(f, "  {:<32} {:>10.5} ({:.5})", name, self.beta[j], self.se[j])?;
            if let Some(c) = &self.cluster_se {
                write!(f, " [cluster {:.5}]", c[j])?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Beta, Distribution, Normal as Gauss};

    pub(crate) fn simulate(n: usize, beta: [f64; 2], phi: f64, seed: u64) -> (Design, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauss = Gauss::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..n).map(|_| gauss.sample(&mut rng)).collect();
        let y = xs
            .iter()
            .map(|&x| {
                let mu = sigmoid(beta[0] + beta[1] * x);
                Beta::new(mu * phi, (1.0 - mu) * phi).unwrap().sample(&mut rng)
            })
            .collect();
        let d = Design::from_columns(vec!["(Intercept)".into(), "x".into()], &[vec![1.0; n], xs]);
        (d, y)
    }

    #[test]
    fn trigamma_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0) - pi2_6).abs() < 1e-12);
        assert!((trigamma(0.5) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-11);
        // Derivative of digamma.
        for x in [0.3, 2.5, 40.0] {
            let fd = (digamma(x + 1e-5) - digamma(x - 1e-5)) / 2e-5;
            assert!((trigamma(x) - fd).abs() / fd < 1e-7);
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        let (x, y) = simulate(300, [0.2, -0.4], 12.0, 1);
        let beta = [0.1, -0.2];
        let lp = 2.0;
        let g = beta_score(&x, &y, &beta, lp);
        let h = 1e-6;
        for j in 0..3 {
            let f = |d: f64| {
                let mut b = beta;
                let mut l = lp;
                if j < 2 {
                    b[j] += d;
                } else {
                    l += d;
                }
                beta_loglik(&x, &y, &b, l)
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            assert!((g[j] - fd).abs() / fd.abs().max(1e-8) < 1e-5, "{j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn hessian_matches_score_differences() {
        let (x, y) = simulate(200, [0.5, 0.3], 20.0, 2);
        let theta = [0.3, 0.1, 2.5];
        let e = evaluate(&x, &y, &theta, true, Execution::Sequential);
        let h = 1e-6;
        for k in 0..3 {
            let mut tp = theta;
            let mut tm = theta;
            tp[k] += h;
            tm[k] -= h;
            let gp = evaluate(&x, &y, &tp, false, Execution::Sequential).grad;
            let gm = evaluate(&x, &y, &tm, false, Execution::Sequential).grad;
            for j in 0..3 {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                let an = e.hess[j * 3 + k];
                assert!((an - fd).abs() / fd.abs().max(1e-6) < 1e-5, "H[{j},{k}] {an} vs {fd}");
            }
        }
    }

    #[test]
    fn recovers_planted_coefficients() {
        let (x, y) = simulate(5000, [0.5, -0.3], 30.0, 7);
        let fit = beta_fit(&x, &y, None, Execution::Parallel).unwrap();
        assert!((fit.beta[0] - 0.5).abs() < 3.0 * fit.se[0]);
        assert!((fit.beta[1] + 0.3).abs() < 3.0 * fit.se[1]);
        assert!((fit.beta[0] - 0.5).abs() < 0.05 && (fit.beta[1] + 0.3).abs() < 0.05);
        assert!(fit.grad_norm < GRAD_TOL);
        assert!(fit.loglik >= fit.loglik_null);
        let seq = beta_fit(&x, &y, None, Execution::Sequential).unwrap();
        assert_eq!(fit, seq);
    }

    #[test]
    fn symmetric_intercept_only() {
        let y: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let x = Design::from_columns(vec!["(Intercept)".into()], &[vec![1.0; y.len()]]);
        let fit = beta_fit(&x, &y, None, Execution::Sequential).unwrap();
        assert!(fit.beta[0].abs() < fit.se[0]);
    }

    #[test]
    fn collinear_columns_reported() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
        let x = Design::from_columns(
            vec!["(Intercept)".into(), "a".into(), "b".into()],
            &[vec![1.0; 20], a, b],
        );
        let y = vec![0.5; 20];
        assert_eq!(
            beta_fit(&x, &y, None, Execution::Sequential).unwrap_err(),
            StatError::RankDeficient(vec!["b".into()])
        );
    }

    #[test]
    fn cluster_errors_reported() {
        let (x, y) = simulate(400, [0.0, 0.2], 15.0, 3);
        let groups: Vec<String> = (0..400).map(|i| format!("r{}", i / 4)).collect();
        let fit = beta_fit(&x, &y, Some(&groups), Execution::Sequential).unwrap();
        let c = fit.cluster_se.unwrap();
        assert!(c.iter().all(|s| *s > 0.0 && s.is_finite()));
    }

    #[test]
    fn coefficient_interpretation() {
        let fit = BetaFit {
            names: vec!["a".into(), "b".into(), "c".into()],
            beta: vec![0.5572, 0.5, 0.0],
            phi: 1.0,
            se: vec![0.1, 0.1, 0.1],
            se_phi: 0.1,
            cluster_se: None,
            loglik: 0.0,
            loglik_null: 0.0,
            iterations: 0,
            grad_norm: 0.0,
            n: 1,
            nudged: 0,
        };
        let rows = coefficient_report(&fit, &["a", "b", "c"]);
        assert!((rows[0].logit.unwrap() - 1.144).abs() < 1e-9);
        assert_eq!(rows[1].probability, Some(0.5));
        assert!((rows[2].probability.unwrap() - 4.5398e-5).abs() < 1e-8);
        assert!(coefficient_report(&fit, &[])[0].probability.is_none());
    }
}
