//! Closed forms for a single emitter pair in the adiabatic regime `Γ ≫ σ_ω`.
//!
//! A pair with intra-pair phase `φ` and `tan φ = −δ/Γ` transmits with unit modulus at the
//! carrier. Its two-photon scattering matrix is a product of phase factors plus a nonlinear
//! term with poles at `Γ_± = Γe^{iφ}(1 ± cos φ)/cos φ`, the two single-excitation decay rates
//! of the pair (detuning included).

use crate::model::PulseShape;
use crate::quad::Rule;
use crate::scatter2::TwoPhotonSpectrum;
use crate::special::{f_ent, f_ent_numeric_many};
use crate::{wrap_phase, Error, GridSpec, PulseSpec, Result, C64};
use rayon::prelude::*;
use std::f64::consts::PI;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdiabaticSite {
    pub phi: f64,
    pub gamma: f64,
    pub delta: f64,
    pub gamma_plus: C64,
    pub gamma_minus: C64,
}

/// Pair tuned to the transmission window: `tan φ = −δ/Γ`, `φ ∈ (π/2, π)` for `δ > 0`
/// and `φ ∈ (0, π/2)` for `δ < 0`.
pub fn make_site(gamma: f64, delta: f64) -> Result<AdiabaticSite> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    if !delta.is_finite() {
        return Err(Error::Config("non-finite detuning".into()));
    }
    if delta == 0.0 {
        return Err(Error::Domain(
            "delta = 0: the transmission window vanishes as the detuning goes to zero".into(),
        ));
    }
    let a = (delta / gamma).atan();
    let phi = if delta > 0.0 { PI - a } else { -a };
    let c = phi.cos();
    let base = gamma * C64::from_polar(1.0, phi) / c;
    Ok(AdiabaticSite {
        phi,
        gamma,
        delta,
        gamma_plus: base * (1.0 + c),
        gamma_minus: base * (1.0 - c),
    })
}

/// `t(ω) = −exp[−2iφ + 2iωΓ/δ²]`, valid for `|ω| ≪ Γ`.
///
/// First-order expansion of the pair's transmission about the window center. The slope sign
/// follows the pole convention `Γ_± − iω` used throughout the crate (group delay `+2Γ/δ²`).
pub fn t_adiabatic(site: &AdiabaticSite, omega: f64) -> C64 {
    let arg = -2.0 * site.phi + 2.0 * omega * site.gamma / (site.delta * site.delta);
    -C64::from_polar(1.0, arg)
}

/// Two-photon phase predicted in the large-`N` adiabatic limit, `2φ + π` wrapped to `(−π, π]`.
pub fn predicted_phase(site: &AdiabaticSite) -> f64 {
    wrap_phase(2.0 * site.phi + PI)
}

/// `∫ dν f̃(ν) f̃(E − ν) / ((Γ_± − iν)(Γ_± − i(E − ν)))` for both poles.
fn pair_kernel(site: &AdiabaticSite, pulse: &PulseSpec, e: f64) -> Result<[C64; 2]> {
    let poles = [site.gamma_plus, site.gamma_minus];
    let ent = match pulse.shape {
        PulseShape::Gaussian => [f_ent(e, poles[0], pulse)?, f_ent(e, poles[1], pulse)?],
        PulseShape::Lorentzian => {
            let v = f_ent_numeric_many(e, &poles, pulse, 1e-8)?;
            [v[0], v[1]]
        }
    };
    Ok([0, 1].map(|k| 2.0 * ent[k] / (2.0 * poles[k] - I * e)))
}

fn nonlinear(site: &AdiabaticSite, k: &[C64; 2], w1: f64, w2: f64) -> C64 {
    let c2 = site.phi.cos().powi(2);
    let pref = -c2 / PI * C64::from_polar(1.0, -2.0 * site.phi);
    let block = |g: C64, kern: C64| g * g * (1.0 / (g - I * w1) + 1.0 / (g - I * w2)) * kern;
    pref * (block(site.gamma_plus, k[0]) + block(site.gamma_minus, k[1]))
}

/// Scattered spectrum of a single adiabatic site for the product input `f̃(ν_a) f̃(ν_b)`.
pub fn s1_adiabatic_apply(site: &AdiabaticSite, pulse: &PulseSpec, grid_spec: &GridSpec) -> Result<TwoPhotonSpectrum> {
    pulse.validate()?;
    grid_spec.validate()?;
    let (nodes, weights) = grid_spec.nodes(pulse.scale());
    let w: Vec<f64> = nodes.iter().map(|x| x + pulse.center).collect();
    let g = w.len();
    let lin: Vec<C64> = w.iter().map(|&x| t_adiabatic(site, x) * pulse.amplitude(x)).collect();
    let mut values = vec![C64::new(0.0, 0.0); g * g];
    if grid_spec.rule == Rule::Trapezoid {
        let kern: Vec<[C64; 2]> = (0..2 * g - 1)
            .map(|k| {
                let a = k.min(g - 1);
                pair_kernel(site, pulse, w[a] + w[k - a])
            })
            .collect::<Result<_>>()?;
        values.par_chunks_mut(g).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = lin[i] * lin[j] + nonlinear(site, &kern[i + j], w[i], w[j]);
            }
        });
    } else {
        values
            .par_chunks_mut(g)
            .enumerate()
            .try_for_each(|(i, row)| -> Result<()> {
                for (j, v) in row.iter_mut().enumerate() {
                    let k = pair_kernel(site, pulse, w[i] + w[j])?;
                    *v = lin[i] * lin[j] + nonlinear(site, &k, w[i], w[j]);
                }
                Ok(())
            })?;
    }
    Ok(TwoPhotonSpectrum {
        grid: w,
        quadrature_weights: weights,
        values,
    })
}
