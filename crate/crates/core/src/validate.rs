//! Invariant suite: cheap numerical checks that every build should pass.

use crate::eigen::{EigenSystem, TwoExcEigenSystem};
use crate::model::{build_optimized_array, PulseSpec};
use crate::quad::{gauss_kronrod, GridSpec};
use crate::scatter2::Scatterer;
use crate::special::f_ent_gaussian;
use crate::transfer::{chain_transmission, chain_transmission_right, Propagation};
use crate::{wrap_phase, EmitterArray, Result, C64};
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    /// Worst observed deviation.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn check(name: &str, value: f64, tolerance: f64) -> InvariantCheck {
    InvariantCheck {
        name: name.into(),
        value,
        tolerance,
        passed: value <= tolerance,
    }
}

fn random_phases(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..12.0)).collect();
    x.sort_by(f64::total_cmp);
    x
}

fn max_abs(m: &Mat<C64>) -> f64 {
    let mut v = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v = v.max(m[(i, j)].norm());
        }
    }
    v
}

/// `exp(−A t)` by scaling and squaring of a truncated Taylor series.
pub fn expm_taylor(a: &Mat<C64>, t: f64) -> Mat<C64> {
    let n = a.nrows();
    let k = ((max_abs(a) * n as f64 * t).max(1.0).log2().ceil() as i32 + 2).max(0);
    let h = t / 2f64.powi(k);
    let b = Mat::from_fn(n, n, |i, j| -a[(i, j)] * h);
    let mut sum = Mat::<C64>::identity(n, n);
    let mut term = Mat::<C64>::identity(n, n);
    for m in 1..40 {
        let next = &term * &b;
        term = Mat::from_fn(n, n, |i, j| next[(i, j)] / m as f64);
        sum = Mat::from_fn(n, n, |i, j| sum[(i, j)] + term[(i, j)]);
    }
    for _ in 0..k {
        sum = &sum * &sum;
    }
    sum
}

fn unitarity(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..12 {
        let x = random_phases(rng, 2 + 2 * (k % 4));
        let delta = rng.random_range(-2.0..2.0);
        let sc = Scatterer::from_phases(&x, 1.0, delta)?;
        let a = EmitterArray::non_interacting(x, delta)?;
        for w in [-2.0, -0.3, 0.0, 0.1, 1.7] {
            let l = chain_transmission(&a, w, Propagation::Markovian);
            let r = chain_transmission_right(&a, w, Propagation::Markovian);
            for v in [
                sc.transmission(w).norm_sqr() + sc.reflection_b(w).norm_sqr(),
                sc.transmission_b(w).norm_sqr() + sc.reflection_a(w).norm_sqr(),
                l.t.norm_sqr() + l.r.norm_sqr(),
                r.t.norm_sqr() + r.r.norm_sqr(),
            ] {
                worst = worst.max((v - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

fn channel_norm_excess() -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for n in [1, 2, 4] {
        let sc = Scatterer::new(&build_optimized_array(n, 0.75 * PI)?)?;
        for gs in [5.0, 20.0] {
            let v = sc.channel_norm(&PulseSpec::gaussian(1.0 / gs), &GridSpec::default())?;
            worst = worst.max(v - 1.0);
        }
    }
    Ok(worst.max(0.0))
}

fn f_ent_quadrature() -> Result<f64> {
    let mut worst = 0.0f64;
    for sigma in [0.05, 0.3, 1.0] {
        let p = PulseSpec::gaussian(sigma);
        for s in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let s = s * sigma;
            for g in [
                C64::new(1.0, 0.0),
                C64::new(0.02, 0.5),
                C64::new(2.0, -1.0),
                C64::new(0.3, 3.0),
                C64::new(0.001, -0.2),
            ] {
                let (v, _) = gauss_kronrod(
                    |nu, out: &mut [C64]| out[0] = p.amplitude(s - nu) * p.amplitude(nu) / (g - C64::new(0.0, nu)),
                    1,
                    0.5 * s - 14.0 * sigma,
                    0.5 * s + 14.0 * sigma,
                    1e-12,
                    1e-300,
                    5000,
                )?;
                let got = f_ent_gaussian(s, g, sigma)?;
                worst = worst.max((got - v[0]).norm() / v[0].norm());
            }
        }
    }
    Ok(worst)
}

fn eigen_residuals(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for n in [2, 3, 5, 8, 10] {
        let x = random_phases(rng, n);
        let one = EigenSystem::new(&x, 1.0)?;
        let two = TwoExcEigenSystem::new(&x, 1.0)?;
        for s in [&one, &two.system] {
            worst = worst.max(s.eigen_residual()).max(s.inverse_residual());
        }
    }
    Ok(worst)
}

fn exponential_oracle(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for n in 2..=6 {
        let x = random_phases(rng, n);
        let one = EigenSystem::new(&x, 1.0)?;
        let two = TwoExcEigenSystem::new(&x, 1.0)?;
        for s in [&one, &two.system] {
            for t in [0.1, 1.0, 3.0] {
                let a = s.exp_neg(t);
                let b = expm_taylor(&s.matrix, t);
                let d = s.dim();
                worst = worst.max(max_abs(&Mat::from_fn(d, d, |i, j| a[(i, j)] - b[(i, j)])));
            }
        }
    }
    Ok(worst)
}

fn exchange_symmetry() -> Result<f64> {
    let mut worst = 0.0f64;
    for n in [2, 4] {
        let sc = Scatterer::new(&build_optimized_array(n, 0.75 * PI)?)?;
        let s = sc.spectrum(&PulseSpec::gaussian(0.1), &GridSpec::gauss_legendre(8.0, 41))?;
        worst = worst.max(s.exchange_asymmetry());
    }
    Ok(worst)
}

fn translation() -> Result<f64> {
    let a = build_optimized_array(2, 0.75 * PI)?;
    let pulse = PulseSpec::gaussian(0.1);
    let g = GridSpec::gauss_legendre(8.0, 41);
    let (r0, _) = Scatterer::new(&a)?.overlap(&pulse, &g)?;
    let mut worst = 0.0f64;
    for shift in [0.3, -1.7, 2.9] {
        let (r1, _) = Scatterer::new(&a.translated(shift))?.overlap(&pulse, &g)?;
        worst = worst
            .max((r0.norm() - r1.norm()).abs())
            .max(wrap_phase(r0.arg() - r1.arg()).abs());
    }
    Ok(worst)
}

fn calibration_anchor() -> Result<f64> {
    let sc = Scatterer::from_phases(&[0.0, 0.75 * PI], 1.0, 1.0)?;
    let want = C64::new(0.0, -1.0);
    Ok((sc.transmission(0.0) - want).norm().max((sc.transmission_b(0.0) - want).norm()))
}

/// Runs every check; the random geometries are drawn from a fixed seed.
pub fn invariant_suite() -> Result<Vec<InvariantCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    Ok(vec![
        check("unitarity", unitarity(&mut rng)?, 1e-10),
        check("channel_norm_bound", channel_norm_excess()?, 1e-6),
        check("f_ent_quadrature", f_ent_quadrature()?, 1e-8),
        check("eigen_residuals", eigen_residuals(&mut rng)?, 1e-10),
        check("matrix_exponential", exponential_oracle(&mut rng)?, 1e-8),
        check("exchange_symmetry", exchange_symmetry()?, 1e-10),
        check("translation", translation()?, 1e-8),
        check("calibration_anchor", calibration_anchor()?, 1e-10),
    ])
}
