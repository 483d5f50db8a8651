//! Dirichlet kernel: log-density, its gradient in the concentration, and
//! sampling through normalized Gamma variates.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::simplex::{floor_and_close, Basis, Composition};
use crate::special::{digamma, ln_gamma};

/// Dirichlet concentration vector `α = φ·μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Concentration(Vec<f64>);

impl Concentration {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidArgument("empty concentration".into()));
        }
        if let Some(i) = alpha.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Domain(format!("concentration entry {i} = {} is not positive and finite", alpha[i])));
        }
        Ok(Concentration(alpha))
    }

    /// `φ·μ` for a precision and a mean composition.
    pub fn from_mean(precision: f64, mean: &Composition) -> Result<Self> {
        Self::new(mean.parts().iter().map(|m| precision * m).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

fn check_match(y: &[f64], alpha: &[f64]) -> Result<()> {
    if y.len() != alpha.len() {
        return Err(Error::IncompatibleComposition(format!(
            "{} parts vs {} concentration entries",
            y.len(),
            alpha.len()
        )));
    }
    if let Some(i) = y.iter().position(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::Domain(format!("part {i} = {} is not interior", y[i])));
    }
    Ok(())
}

/// `ln Γ(Σα) − Σ ln Γ(α_j) + Σ (α_j − 1) ln y_j`.
pub fn log_density(y: &Composition, alpha: &Concentration) -> Result<f64> {
    log_density_parts(y.parts(), alpha.as_slice())
}

/// As [`log_density`] on raw share slices; rejects non-interior points.
pub fn log_density_parts(y: &[f64], alpha: &[f64]) -> Result<f64> {
    check_match(y, alpha)?;
    let total: f64 = alpha.iter().sum();
    let mut v = ln_gamma(total);
    for (a, p) in alpha.iter().zip(y) {
        v += (a - 1.0) * p.ln() - ln_gamma(*a);
    }
    Ok(v)
}

/// `∂/∂α_j = ψ(Σα) − ψ(α_j) + ln y_j`.
pub fn grad_log_density_alpha(y: &Composition, alpha: &Concentration) -> Result<Vec<f64>> {
    let (y, alpha) = (y.parts(), alpha.as_slice());
    check_match(y, alpha)?;
    let psi_total = digamma(alpha.iter().sum());
    Ok(alpha.iter().zip(y).map(|(a, p)| psi_total - digamma(*a) + p.ln()).collect())
}

/// Natural log of a Gamma(shape, 1) variate.
///
/// Marsaglia–Tsang squeeze for `shape >= 1`; for `shape < 1` the boost
/// `G(a) = G(a + 1)·U^{1/a}` is applied in log space so tiny shapes never
/// underflow to zero.
pub fn sample_ln_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let u: f64 = 1.0 - rng.random::<f64>();
        return sample_ln_gamma(shape + 1.0, rng) + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// Draws shares into `out` from Dirichlet(`alpha`).
pub fn sample_into<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (o, a) in out.iter_mut().zip(alpha) {
        *o = sample_ln_gamma(*a, rng);
        max = max.max(*o);
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    floor_and_close(out);
}

/// One Dirichlet draw as a composition on `basis`.
pub fn sample<R: Rng + ?Sized>(alpha: &Concentration, basis: &Arc<Basis>, rng: &mut R) -> Result<Composition> {
    if alpha.0.len() != basis.n_parts() {
        return Err(Error::IncompatibleComposition(format!(
            "{} concentration entries for {} parts",
            alpha.0.len(),
            basis.n_parts()
        )));
    }
    let mut out = vec![0.0; alpha.0.len()];
    sample_into(&alpha.0, rng, &mut out);
    Ok(Composition::from_closed_unchecked(out, Arc::clone(basis)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn comp(parts: &[f64]) -> Composition {
        Composition::new(parts.to_vec(), Basis::anonymous(parts.len()).unwrap()).unwrap()
    }

    /// Tanh-sinh quadrature of `f` over (0, 1) with `n` nodes; `f` receives
    /// both `x` and `1 − x`, each computed without cancellation.
    fn tanh_sinh(n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
        let t_max = 4.0;
        let h = 2.0 * t_max / (n - 1) as f64;
        let mut sum = 0.0;
        for i in 0..n {
            let t = -t_max + i as f64 * h;
            let u = std::f64::consts::FRAC_PI_2 * t.sinh();
            let x = 1.0 / (1.0 + (-2.0 * u).exp());
            let one_minus = 1.0 / (1.0 + (2.0 * u).exp());
            let w = std::f64::consts::FRAC_PI_2 * t.cosh() * x * one_minus * 2.0;
            if x > 0.0 && one_minus > 0.0 {
                sum += w * f(x, one_minus);
            }
        }
        sum * h
    }

    #[test]
    fn flat_dirichlet_values() {
        let a = Concentration::new(vec![1.0, 1.0]).unwrap();
        assert!(log_density(&comp(&[0.3, 0.7]), &a).unwrap().abs() < 1e-15);
        let a = Concentration::new(vec![1.0; 3]).unwrap();
        assert!((log_density(&comp(&[0.2, 0.3, 0.5]), &a).unwrap() - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn beta_density_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a: f64 = 0.5 + 9.5 * rng.random::<f64>();
            let b: f64 = 0.5 + 9.5 * rng.random::<f64>();
            let alpha = [a, b];
            let integral = tanh_sinh(1024, |x, xc| log_density_parts(&[x, xc], &alpha).map(f64::exp).unwrap_or(0.0));
            assert!((integral - 1.0).abs() < 1e-6, "a={a} b={b} integral={integral}");
        }
    }

    #[test]
    fn beta_marginal_matches_quadrature_normalizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let a: f64 = 0.7 + 6.0 * rng.random::<f64>();
            let b: f64 = 0.7 + 6.0 * rng.random::<f64>();
            let beta_fn = tanh_sinh(1024, |x, xc| x.powf(a - 1.0) * xc.powf(b - 1.0));
            let y: f64 = 0.05 + 0.9 * rng.random::<f64>();
            let want = (a - 1.0) * y.ln() + (b - 1.0) * (1.0 - y).ln() - beta_fn.ln();
            let got = log_density_parts(&[y, 1.0 - y], &[a, b]).unwrap();
            assert!((got - want).abs() < 1e-9, "a={a} b={b} y={y}");
        }
    }

    #[test]
    fn rejects_boundary_and_mismatch() {
        assert!(matches!(log_density_parts(&[0.0, 1.0], &[1.0, 1.0]), Err(Error::Domain(_))));
        assert!(matches!(log_density_parts(&[0.5, 0.5], &[1.0; 3]), Err(Error::IncompatibleComposition(_))));
        assert!(Concentration::new(vec![1.0, 0.0]).is_err());
        assert!(Concentration::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let j = 2 + (rng.random::<u32>() % 6) as usize;
            let raw: Vec<f64> = (0..j).map(|_| 0.05 + rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let y: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let alpha: Vec<f64> = (0..j).map(|_| 0.3 + 20.0 * rng.random::<f64>()).collect();
            let g = grad_log_density_alpha(&comp(&y), &Concentration::new(alpha.clone()).unwrap()).unwrap();
            for k in 0..j {
                let h = 1e-5 * alpha[k].max(1.0);
                let mut up = alpha.clone();
                up[k] += h;
                let mut dn = alpha.clone();
                dn[k] -= h;
                let fd = (log_density_parts(&y, &up).unwrap() - log_density_parts(&y, &dn).unwrap()) / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1.0);
                assert!(rel < 1e-6, "component {k}: fd={fd} analytic={}", g[k]);
            }
        }
    }

    #[test]
    fn gradient_symmetry_and_direct_value() {
        let g = grad_log_density_alpha(&comp(&[0.25; 4]), &Concentration::new(vec![3.0; 4]).unwrap()).unwrap();
        assert!(g.iter().all(|v| (v - g[0]).abs() < 1e-15));

        let g = grad_log_density_alpha(&comp(&[0.5, 0.5]), &Concentration::new(vec![1.0, 1.0]).unwrap()).unwrap();
        // ψ(2) − ψ(1) = 1
        let want = 1.0 + 0.5f64.ln();
        assert!((g[0] - want).abs() < 1e-14 && (g[1] - want).abs() < 1e-14);
    }

    #[test]
    fn sample_moments() {
        let alpha = [2.0, 3.0, 5.0];
        let total: f64 = alpha.iter().sum();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut draws = vec![[0.0; 3]; n];
        for d in draws.iter_mut() {
            sample_into(&alpha, &mut rng, d);
        }
        for j in 0..3 {
            let xs: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
            let want_mean = alpha[j] / total;
            let want_var = alpha[j] * (total - alpha[j]) / (total * total * (total + 1.0));
            let se_mean = (var / n as f64).sqrt();
            let se_var = ((m4 - var * var) / n as f64).sqrt();
            assert!((mean - want_mean).abs() < 3.0 * se_mean, "mean {j}: {mean} vs {want_mean}");
            assert!((var - want_var).abs() < 3.0 * se_var, "var {j}: {var} vs {want_var}");
        }
    }

    #[test]
    fn small_shapes_stay_valid_and_seed_is_deterministic() {
        let alpha = Concentration::new(vec![0.01, 0.05, 0.5]).unwrap();
        let b = Basis::anonymous(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..1000 {
            let y = sample(&alpha, &b, &mut rng).unwrap();
            assert!(y.parts().iter().all(|p| *p > 0.0));
            assert!((y.parts().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let a = sample(&alpha, &b, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let c = sample(&alpha, &b, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn gamma_sampler_mean_for_small_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let n = 200_000;
        let shape = 0.3;
        let mean = (0..n).map(|_| sample_ln_gamma(shape, &mut rng).exp()).sum::<f64>() / n as f64;
        // Var = shape; 4 standard errors.
        assert!((mean - shape).abs() < 4.0 * (shape / n as f64).sqrt());
    }
}
