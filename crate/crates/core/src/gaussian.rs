//! Optimal adversarial cross-entropy for `p N(mu, S) + (1 - p) N(-mu, S)`.
//!
//! The adversary's best move translates each class mean toward the origin by
//! `z*`, the minimizer of `(mu - z)' S^-1 (mu - z)` over `z` in `eps * Delta`.
//! The optimal classifier is then logistic with weights `w* = 2 S^-1 (mu - z*)`
//! and intercept `c = ln(p / (1 - p))`. Writing `T = y w*' X` for a shifted
//! sample of class `y`, `T ~ N(m, 2m)` with `m = w*'(mu - z*)` for both classes,
//! and the loss is
//!
//! `p E[softplus(-(T + c))] + (1 - p) E[softplus(-(T - c))]`,
//!
//! each expectation by Gauss-Hermite quadrature.

use std::sync::OnceLock;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::geometry::{NeighborhoodSpec, Norm};
use crate::rng::stream_rng;

pub const QUADRATURE_NODES: usize = 200;
pub const CHECK_NODES: usize = 400;
/// Relative disagreement between the two quadrature rules that triggers a
/// precision warning.
pub const QUADRATURE_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Full(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Full(m) => m.nrows(),
            Covariance::Diagonal(d) => d.len(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Covariance::Full(m) => m.clone(),
            Covariance::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }

    fn diagonal(&self) -> Option<DVector<f64>> {
        match self {
            Covariance::Diagonal(d) => Some(d.clone()),
            Covariance::Full(m) => {
                let n = m.nrows();
                let off_diag_zero = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
                off_diag_zero.then(|| m.diagonal())
            }
        }
    }

    fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Covariance::Full(m) => m * v,
            Covariance::Diagonal(d) => d.component_mul(v),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianProblem {
    mu: DVector<f64>,
    sigma: Covariance,
    chol: Cholesky<f64, Dyn>,
    prior_plus: f64,
    pub spec: NeighborhoodSpec,
}

impl GaussianProblem {
    pub fn new(mu: DVector<f64>, sigma: Covariance, prior_plus: f64, spec: NeighborhoodSpec) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::Invalid("mean must have dimension >= 1".into()));
        }
        if sigma.dim() != d {
            return Err(Error::DimensionMismatch {
                left: d,
                right: sigma.dim(),
            });
        }
        if !(prior_plus > 0.0 && prior_plus < 1.0) {
            return Err(Error::Invalid(format!(
                "class prior must lie in (0, 1), got {prior_plus}"
            )));
        }
        let m = sigma.to_matrix();
        if let Covariance::Full(ref full) = sigma {
            if (full - full.transpose()).abs().max() > 1e-12 * (1.0 + full.abs().max()) {
                return Err(Error::Invalid("covariance is not symmetric".into()));
            }
        }
        let chol = Cholesky::new(m).ok_or_else(|| Error::Invalid("covariance is not positive definite".into()))?;
        Ok(GaussianProblem {
            mu,
            sigma,
            chol,
            prior_plus,
            spec,
        })
    }

    /// Isotropic one-dimensional problem `N(+-mu, var)`.
    pub fn one_dim(mu: f64, var: f64, prior_plus: f64, spec: NeighborhoodSpec) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mu),
            Covariance::Diagonal(DVector::from_element(1, var)),
            prior_plus,
            spec,
        )
    }

    /// Diagonal covariance with entries drawn uniformly from (0, 1) and
    /// `mu_i = separation * S_ii / sqrt(d)`, balanced classes.
    pub fn diagonal_preset(d: usize, separation: f64, seed: u64, spec: NeighborhoodSpec) -> Result<Self> {
        let mut rng = stream_rng(seed, 0xD1A6);
        let diag: Vec<f64> = (0..d)
            .map(|_| {
                // Open interval: a zero variance would not be positive definite.
                loop {
                    let x: f64 = rng.random();
                    if x > 0.0 {
                        break x;
                    }
                }
            })
            .collect();
        let scale = separation / (d as f64).sqrt();
        let mu = DVector::from_iterator(d, diag.iter().map(|s| scale * s));
        Self::new(mu, Covariance::Diagonal(DVector::from_vec(diag)), 0.5, spec)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut out = self.clone();
        out.spec = NeighborhoodSpec::new(self.spec.norm.clone(), eps)?;
        Ok(out)
    }

    pub fn with_swapped_classes(&self) -> Self {
        let mut out = self.clone();
        out.mu = -&self.mu;
        out.prior_plus = 1.0 - self.prior_plus;
        out
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &Covariance {
        &self.sigma
    }

    pub fn prior_plus(&self) -> f64 {
        self.prior_plus
    }

    /// `(mu - z)' S^-1 (mu - z)`.
    pub fn mahalanobis_sq(&self, z: &DVector<f64>) -> f64 {
        let r = &self.mu - z;
        r.dot(&self.chol.solve(&r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSolution {
    pub z_star: DVector<f64>,
    pub w_star: DVector<f64>,
    pub intercept: f64,
    pub loss_nats: f64,
    /// Same loss with the finer quadrature rule.
    pub loss_check: f64,
    pub precision_warning: bool,
}

/// Minimizer of `(mu - z)' S^-1 (mu - z)` subject to `||z|| <= eps`.
pub fn optimal_shift(prob: &GaussianProblem) -> Result<DVector<f64>> {
    let eps = prob.spec.eps;
    let mu = &prob.mu;
    match &prob.spec.norm {
        Norm::Linf => {
            let _ = prob.sigma.diagonal().ok_or_else(|| {
                Error::Unsupported("LINF shift needs a diagonal covariance".into())
            })?;
            // Separable objective: clip each coordinate.
            Ok(mu.map(|m| m.clamp(-eps, eps)))
        }
        Norm::L2 => {
            if mu.norm() <= eps {
                return Ok(mu.clone());
            }
            if eps == 0.0 {
                return Ok(DVector::zeros(mu.len()));
            }
            // z(lambda) = (I + lambda S)^-1 mu; its norm decreases in lambda.
            let diag = prob.sigma.diagonal();
            let shift = |lambda: f64| -> Result<DVector<f64>> {
                match &diag {
                    Some(d) => Ok(DVector::from_iterator(
                        mu.len(),
                        mu.iter().zip(d.iter()).map(|(m, s)| m / (1.0 + lambda * s)),
                    )),
                    None => {
                        let n = mu.len();
                        let a = DMatrix::identity(n, n) + prob.sigma.to_matrix() * lambda;
                        let c = Cholesky::new(a)
                            .ok_or_else(|| Error::Internal("I + lambda S lost definiteness".into()))?;
                        Ok(c.solve(mu))
                    }
                }
            };
            let mut hi = 1.0;
            let mut grow = 0;
            while shift(hi)?.norm() >= eps {
                hi *= 2.0;
                grow += 1;
                if grow > 2000 {
                    return Err(Error::Internal("lambda bracket did not close".into()));
                }
            }
            let mut lo = 0.0;
            let mut z = shift(hi)?;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                z = shift(mid)?;
                let nz = z.norm();
                if (nz - eps).abs() <= 1e-10 * eps {
                    break;
                }
                if nz > eps {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(z)
        }
        Norm::Custom { name, .. } => Err(Error::Unsupported(format!(
            "closed-form shift for gauge {name}"
        ))),
    }
}

/// `ln(1 + e^-t)` without overflow.
pub fn softplus_neg(t: f64) -> f64 {
    (-t).max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Nodes and weights for `int e^{-x^2} f(x) dx`.
///
/// Eigenvalues of the Jacobi matrix seed a Newton polish on the orthonormal
/// Hermite recurrence; the recurrence carries an `e^{-x^2/2}` factor so that
/// it stays finite for several hundred nodes.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let mut seeds: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    seeds.sort_by(|a, b| a.total_cmp(b));

    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (i, &seed) in seeds.iter().enumerate() {
        let mut z = seed;
        let mut pp = 1.0;
        for _ in 0..8 {
            let mut p1 = PIM4 * (-0.5 * z * z).exp();
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            if pp == 0.0 {
                break;
            }
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z1.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = if pp == 0.0 { 0.0 } else { 2.0 * (-z * z).exp() / (pp * pp) };
    }
    (x, w)
}

/// The production and check rules, built once.
fn cached_rule(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static MAIN: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static CHECK: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        QUADRATURE_NODES => MAIN.get_or_init(|| gauss_hermite(n)),
        CHECK_NODES => CHECK.get_or_init(|| gauss_hermite(n)),
        _ => unreachable!("only the two configured rules are cached"),
    }
}

/// `E f(T)` for `T ~ N(mean, sd^2)`.
pub fn normal_expectation(f: impl Fn(f64) -> f64, mean: f64, sd: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    if sd == 0.0 {
        return f(mean);
    }
    let (x, w) = rule;
    let s: f64 = x
        .iter()
        .zip(w)
        .map(|(&xi, &wi)| wi * f(mean + std::f64::consts::SQRT_2 * sd * xi))
        .sum();
    s / std::f64::consts::PI.sqrt()
}

pub fn closed_form_loss(prob: &GaussianProblem) -> Result<GaussianSolution> {
    let z = optimal_shift(prob)?;
    let resid = &prob.mu - &z;
    let w = prob.chol.solve(&resid) * 2.0;
    let p = prob.prior_plus;
    let c = (p / (1.0 - p)).ln();
    let mean = w.dot(&resid);
    let var = w.dot(&prob.sigma.mul(&w)).max(0.0);
    let sd = var.sqrt();
    let loss_with = |rule: &(Vec<f64>, Vec<f64>)| {
        p * normal_expectation(|t| softplus_neg(t + c), mean, sd, rule)
            + (1.0 - p) * normal_expectation(|t| softplus_neg(t - c), mean, sd, rule)
    };
    let loss = loss_with(cached_rule(QUADRATURE_NODES));
    let check = loss_with(cached_rule(CHECK_NODES));
    let rel = (loss - check).abs() / check.abs().max(f64::MIN_POSITIVE);
    let precision_warning = rel > QUADRATURE_REL_TOL;
    if precision_warning {
        warn!(
            "quadrature rules disagree: {QUADRATURE_NODES} nodes give {loss}, {CHECK_NODES} give {check}"
        );
    }
    Ok(GaussianSolution {
        z_star: z,
        w_star: w,
        intercept: c,
        loss_nats: loss,
        loss_check: check,
        precision_warning,
    })
}

/// `n` labeled draws: label by the prior, coordinates from that component.
pub fn sample_mixture(prob: &GaussianProblem, n: usize, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::Invalid("need at least two samples".into()));
    }
    let mut rng = stream_rng(seed, 0x6A55);
    let labels: Vec<Label> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < prob.prior_plus {
                Label::Plus
            } else {
                Label::Minus
            }
        })
        .collect();
    draw_points(prob, labels, &mut rng)
}

/// Exactly `k` draws from each component.
pub fn sample_mixture_per_class(prob: &GaussianProblem, k: usize, seed: u64) -> Result<LabeledDataset> {
    if k == 0 {
        return Err(Error::Invalid("need at least one sample per class".into()));
    }
    let mut rng = stream_rng(seed, 0x6A56);
    let labels = std::iter::repeat_n(Label::Plus, k)
        .chain(std::iter::repeat_n(Label::Minus, k))
        .collect();
    draw_points(prob, labels, &mut rng)
}

fn draw_points(prob: &GaussianProblem, labels: Vec<Label>, rng: &mut impl Rng) -> Result<LabeledDataset> {
    let d = prob.dim();
    let l = prob.chol.l();
    let mut points = Vec::with_capacity(labels.len() * d);
    for &y in &labels {
        let xi = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &l * xi + &prob.mu * y.as_i8() as f64;
        points.extend(x.iter());
    }
    LabeledDataset::from_unit_rows(d, points, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn l2(eps: f64) -> NeighborhoodSpec {
        NeighborhoodSpec::l2(eps).unwrap()
    }

    #[test]
    fn hermite_rule_integrates_moments() {
        for n in [5, 20, 200, 400] {
            let rule = gauss_hermite(n);
            let m0: f64 = rule.1.iter().sum();
            assert!((m0 - std::f64::consts::PI.sqrt()).abs() < 1e-12, "n = {n}");
            let e2 = normal_expectation(|t| t * t, 1.0, 2.0, &rule);
            assert!((e2 - 5.0).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus_neg(0.0), LN_2);
        assert!((softplus_neg(-800.0) - 800.0).abs() < 1e-12);
        assert!(softplus_neg(800.0) >= 0.0 && softplus_neg(800.0) < 1e-300);
    }

    #[test]
    fn shift_cases_one_dim() {
        let p = GaussianProblem::one_dim(1.0, 1.0, 0.5, l2(2.0)).unwrap();
        assert_eq!(optimal_shift(&p).unwrap()[0], 1.0);
        let p = GaussianProblem::one_dim(1.0, 1.0, 0.5, l2(0.5)).unwrap();
        assert!((optimal_shift(&p).unwrap()[0] - 0.5).abs() < 1e-9);
        let p = GaussianProblem::one_dim(1.0, 1.0, 0.5, NeighborhoodSpec::linf(0.5).unwrap()).unwrap();
        assert_eq!(optimal_shift(&p).unwrap()[0], 0.5);
    }

    #[test]
    fn linf_needs_diagonal() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let p = GaussianProblem::new(
            DVector::from_vec(vec![1.0, 1.0]),
            Covariance::Full(s),
            0.5,
            NeighborhoodSpec::linf(0.3).unwrap(),
        )
        .unwrap();
        assert!(matches!(optimal_shift(&p), Err(Error::Unsupported(_))));
    }

    #[test]
    fn invalid_problems_rejected() {
        assert!(GaussianProblem::one_dim(1.0, 1.0, 1.0, l2(0.1)).is_err());
        assert!(GaussianProblem::one_dim(1.0, -1.0, 0.5, l2(0.1)).is_err());
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianProblem::new(DVector::from_vec(vec![1.0, 0.0]), Covariance::Full(s), 0.5, l2(0.1)).is_err());
    }

    #[test]
    fn large_budget_gives_ln2() {
        let p = GaussianProblem::one_dim(1.0, 1.0, 0.5, l2(1.0)).unwrap();
        let s = closed_form_loss(&p).unwrap();
        assert_eq!(s.w_star[0], 0.0);
        assert!((s.loss_nats - LN_2).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_large_budget_gives_prior_entropy() {
        let p = GaussianProblem::one_dim(1.0, 1.0, 0.8, l2(5.0)).unwrap();
        let s = closed_form_loss(&p).unwrap();
        let h = -0.8f64 * 0.8f64.ln() - 0.2 * 0.2f64.ln();
        assert!((s.loss_nats - h).abs() < 1e-12);
    }

    #[test]
    fn class_swap_symmetry() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let p = GaussianProblem::new(DVector::from_vec(vec![0.8, -0.4]), Covariance::Full(s), 0.3, l2(0.2)).unwrap();
        let a = closed_form_loss(&p).unwrap().loss_nats;
        let b = closed_form_loss(&p.with_swapped_classes()).unwrap().loss_nats;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn loss_grows_with_budget() {
        let p = GaussianProblem::diagonal_preset(3, 2.0, 4, l2(0.0)).unwrap();
        let mut prev = 0.0;
        for k in 0..30 {
            let s = closed_form_loss(&p.with_eps(k as f64 * 0.05).unwrap()).unwrap();
            assert!(s.loss_nats >= prev - 1e-12);
            assert!(s.loss_nats <= LN_2 + 1e-12);
            assert!(!s.precision_warning);
            prev = s.loss_nats;
        }
    }

    /// Projected gradient on the ball, used as an independent oracle for the
    /// lambda bisection.
    fn projected_gradient(prob: &GaussianProblem) -> DVector<f64> {
        let s = prob.sigma().to_matrix();
        let sinv = s.clone().try_inverse().unwrap();
        let eps = prob.spec.eps;
        let step = 1.0 / (2.0 * sinv.symmetric_eigenvalues().max());
        let mut z = DVector::zeros(prob.dim());
        for _ in 0..200_000 {
            let grad = &sinv * (&z - prob.mu()) * 2.0;
            z -= grad * step;
            let nz = z.norm();
            if nz > eps {
                z *= eps / nz;
            }
        }
        z
    }

    #[test]
    fn shift_matches_projected_gradient() {
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.4, 0.1, 0.4, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let p = GaussianProblem::new(
            DVector::from_vec(vec![1.0, -0.7, 0.6]),
            Covariance::Full(s),
            0.5,
            l2(0.6),
        )
        .unwrap();
        assert!(p.mu().norm() > 0.6);
        let z = optimal_shift(&p).unwrap();
        let oracle = projected_gradient(&p);
        assert!((z - oracle).amax() < 1e-6);
    }

    #[test]
    fn sampling_is_deterministic_and_balanced() {
        let p = GaussianProblem::one_dim(1.0, 1.0, 0.5, l2(0.0)).unwrap();
        let a = sample_mixture(&p, 1000, 3).unwrap();
        assert_eq!(a, sample_mixture(&p, 1000, 3).unwrap());
        let b = sample_mixture_per_class(&p, 50, 3).unwrap();
        assert_eq!(b.class_count(Label::Plus), 50);
        assert!(sample_mixture(&p, 1, 3).is_err());
    }
}
