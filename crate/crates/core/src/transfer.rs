//! Single-photon transfer matrices, reflection probabilities and the pair-spacing optimizer.
//!
//! Amplitudes are `(u, v)` of the field `u·e^{ikz} + v·e^{−ikz}`. An emitter at phase `x` acts
//! as `P(−x)·M₀·P(x)` with `P(x) = diag(e^{ix}, e^{−ix})`, so reflection from the left picks up
//! `e^{2ix}` (the `Σ^{+,+}` channel of [`crate::scatter2`]) and from the right `e^{−2ix}`.

use crate::quad;
use crate::{EmitterArray, Error, PulseSpec, Result, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const I: C64 = C64::new(0.0, 1.0);

pub type Mat2 = [[C64; 2]; 2];

/// Detuning offset used by the spacing objective, in units of `Γ`.
pub const PROBE_OFFSET: f64 = 1e-2;
/// Coarse scan points before golden-section refinement.
pub const SCAN_POINTS: usize = 64;
pub const SPACING_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferCoeffs {
    pub t: C64,
    pub r: C64,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Propagation {
    /// Fixed inter-emitter phases.
    Markovian,
    /// Adds `ω·z/c` on every gap between pairs, with `z/c = light_speed_phase/σ_ω`.
    Exact { sigma_omega: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingPlan {
    pub level: usize,
    /// Start-to-start phase between the two blocks of the previous level, in `(0, 2π)`.
    pub inter_block_phase: f64,
    pub intra_pair_phase: f64,
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Transfer matrix of one emitter at the phase origin.
///
/// Built from `t = −i(ω+δ)/(Γ − i(ω+δ))` and `r = t − 1`.
pub fn atom_transfer(omega: f64, gamma: f64, delta: f64) -> Mat2 {
    let w = omega + delta;
    let den = C64::new(gamma, -w);
    let t = -I * w / den;
    let r = -gamma / den;
    if t.norm() == 0.0 {
        // exact resonance: the matrix is singular, so stand off by one ulp
        return atom_transfer(omega + f64::EPSILON * gamma.max(1.0), gamma, delta);
    }
    [[t - r * r / t, r / t], [-r / t, 1.0 / t]]
}

fn placed(m: &Mat2, x: f64) -> Mat2 {
    let e = C64::from_polar(1.0, 2.0 * x);
    [[m[0][0], m[0][1] / e], [m[1][0] * e, m[1][1]]]
}

/// Effective phases under the chosen propagation model.
fn effective_phases(array: &EmitterArray, omega: f64, mode: Propagation) -> Vec<f64> {
    let x = array.phases();
    match mode {
        Propagation::Markovian => x.to_vec(),
        Propagation::Exact { sigma_omega } => {
            let step = omega * array.light_speed_phase() / sigma_omega;
            let mut shift = 0.0;
            x.iter()
                .enumerate()
                .map(|(j, &p)| {
                    if j > 0 && j % 2 == 0 {
                        shift += step;
                    }
                    p + shift
                })
                .collect()
        }
    }
}

/// Product matrix `M` as `(M·e^{−s}, s)`, renormalized whenever an entry exceeds 1e100.
fn chain_matrix_scaled(phases: &[f64], omega: f64, gamma: f64, delta: f64) -> (Mat2, f64) {
    let m0 = atom_transfer(omega, gamma, delta);
    let mut m = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]];
    let mut log_scale = 0.0;
    for &x in phases {
        m = mul(&placed(&m0, x), &m);
        let big = m.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
        if big > 1e100 {
            m.iter_mut().flatten().for_each(|v| *v /= big);
            log_scale += big.ln();
        }
    }
    (m, log_scale)
}

/// Transfer matrix of the whole array. Entries may overflow for long arrays deep in a
/// band gap; [`chain_transmission`] does not.
pub fn chain_matrix(array: &EmitterArray, omega: f64, mode: Propagation) -> Mat2 {
    let (mut m, s) = chain_matrix_scaled(&effective_phases(array, omega, mode), omega, array.gamma(), array.delta());
    let f = s.exp();
    m.iter_mut().flatten().for_each(|v| *v *= f);
    m
}

fn coeffs(scaled: &(Mat2, f64), omega: f64) -> TransferCoeffs {
    let (m, s) = scaled;
    TransferCoeffs {
        t: (-s).exp() / m[1][1],
        r: -m[1][0] / m[1][1],
        omega,
    }
}

fn chain_scaled(array: &EmitterArray, omega: f64, mode: Propagation) -> (Mat2, f64) {
    chain_matrix_scaled(&effective_phases(array, omega, mode), omega, array.gamma(), array.delta())
}

/// Transmission and reflection for a photon incident from the left.
pub fn chain_transmission(array: &EmitterArray, omega: f64, mode: Propagation) -> TransferCoeffs {
    coeffs(&chain_scaled(array, omega, mode), omega)
}

/// Transmission and reflection for a photon incident from the right.
pub fn chain_transmission_right(array: &EmitterArray, omega: f64, mode: Propagation) -> TransferCoeffs {
    let (m, s) = chain_scaled(array, omega, mode);
    TransferCoeffs {
        t: (-s).exp() / m[1][1],
        r: m[0][1] / m[1][1],
        omega,
    }
}

fn check_mode(array: &EmitterArray, mode: Propagation) -> Result<()> {
    if array.delta_int() != 0.0 {
        return Err(Error::Config("transfer matrices describe non-interacting emitters only".into()));
    }
    if let Propagation::Exact { sigma_omega } = mode {
        if !(sigma_omega > 0.0 && sigma_omega.is_finite()) {
            return Err(Error::Config(format!("sigma_omega must be positive, got {sigma_omega}")));
        }
    }
    Ok(())
}

/// `∫ g(ω) |f̃(ω)|² dω` on `ω = center + 2σ tan θ`.
fn pulse_average<F: FnMut(f64, &mut [C64])>(pulse: &PulseSpec, dim: usize, mut g: F) -> Result<Vec<C64>> {
    pulse.validate()?;
    let l = 2.0 * pulse.scale();
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let integrand = |th: f64, out: &mut [C64]| {
        let c = th.cos();
        let w = pulse.center + l * th.tan();
        let p = pulse.amplitude(w).norm_sqr() * l / (c * c);
        if !p.is_finite() || p == 0.0 {
            out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
            return;
        }
        g(w, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b * p;
        }
    };
    let lim = 0.5 * PI;
    Ok(quad::gauss_kronrod(integrand, dim, -lim, lim, 1e-10, 1e-14, 2000)?.0)
}

/// `∫ |r(ω)|² |f̃(ω)|² dω`.
pub fn gaussian_reflection_probability(array: &EmitterArray, pulse: &PulseSpec, mode: Propagation) -> Result<f64> {
    check_mode(array, mode)?;
    let v = pulse_average(pulse, 1, |w, out| {
        out[0] = C64::from(chain_transmission(array, w, mode).r.norm_sqr());
    })?;
    Ok(v[0].re.clamp(0.0, 1.0))
}

/// `∫ t(ω) |f̃(ω)|² dω`.
pub fn weighted_transmission(array: &EmitterArray, pulse: &PulseSpec, mode: Propagation) -> Result<C64> {
    check_mode(array, mode)?;
    Ok(pulse_average(pulse, 1, |w, out| {
        out[0] = chain_transmission(array, w, mode).t;
    })?[0])
}

/// Intra-pair phase of the transmission window, `tan φ_d = −δ/Γ`, `φ_d ∈ (0, π)`.
pub fn window_phase(gamma: f64, delta: f64) -> Result<f64> {
    if !(gamma > 0.0) || delta == 0.0 || !delta.is_finite() {
        return Err(Error::Domain(format!(
            "transmission window needs gamma > 0 and delta != 0, got gamma={gamma}, delta={delta}"
        )));
    }
    let a = (delta / gamma).atan();
    Ok(if delta > 0.0 { PI - a } else { -a })
}

/// Two-pair spacing that flattens the transmission at the carrier,
/// `φ_a = π + arctan[(Γ² − δ²)/(2Γδ)]`.
///
/// The form `π − arctan[…]` belongs to the mirrored phase convention (`φ → −φ`); the two agree
/// at `δ = Γ`, where `φ_a = π`.
pub fn two_pair_spacing(gamma: f64, delta: f64) -> f64 {
    (PI + ((gamma * gamma - delta * delta) / (2.0 * gamma * delta)).atan()).rem_euclid(2.0 * PI)
}

/// `|r(ω_p)|² + |r(−ω_p)|²` with `ω_p = probe·Γ`.
///
/// Every window-tuned block has `r(0) = 0`, so the spacing is chosen by the reflection just off
/// the carrier. Once the two-pair block is flattened, the leading order of `r` rises with each
/// doubling, so a fixed small offset is used rather than a normalized derivative.
pub fn near_resonance_reflection(phases: &[f64], gamma: f64, delta: f64, probe: f64) -> f64 {
    let h = probe * gamma;
    let r2 = |w: f64| coeffs(&chain_matrix_scaled(phases, w, gamma, delta), w).r.norm_sqr();
    r2(h) + r2(-h)
}

/// Minimum of a function on `(lo, hi)`: coarse scan, then golden section around the best
/// scan point. Ties go to the smallest argument.
pub fn scan_golden<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, n: usize, tol: f64) -> Result<(f64, f64)> {
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..n).map(|k| lo + (k as f64 + 0.5) * h).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let trace: Vec<(f64, f64)> = xs.iter().copied().zip(fs.iter().copied()).collect();
    let mut best = 0;
    for k in 1..n {
        if fs[k] < fs[best] - 1e-9 * fs[best].abs() {
            best = k;
        }
    }
    if !fs[best].is_finite() {
        return Err(Error::Optimization {
            message: "objective not finite on the scan".into(),
            trace,
        });
    }
    let (mut a, mut b) = (xs[best] - h, xs[best] + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    if fx > fs[best] + 1e-9 * fs[best].abs() {
        return Err(Error::Optimization {
            message: "golden-section refinement left the scan bracket".into(),
            trace,
        });
    }
    Ok((x, fx))
}

/// Smallest shift `≡ phase (mod π)` that places a copy of a block of the given extent strictly
/// after the original.
fn physical_shift(phase: f64, extent: f64) -> f64 {
    let mut s = phase.rem_euclid(PI);
    while s <= extent + 1e-12 {
        s += PI;
    }
    s
}

/// Emitter phases of the block built by doubling through `plans` (levels 2, 4, 8, …).
pub fn plan_phases(plans: &[SpacingPlan]) -> Vec<f64> {
    let phi_d = plans.first().map(|p| p.intra_pair_phase).unwrap_or(0.0);
    let mut x = vec![0.0, phi_d];
    for p in plans {
        let extent = x.last().copied().unwrap_or(0.0);
        let s = physical_shift(p.inter_block_phase, extent);
        let copy: Vec<f64> = x.iter().map(|v| v + s).collect();
        x.extend(copy);
    }
    x
}

/// Spacing plans for every doubling stage up to `level`.
///
/// Level 2 uses the closed form. Higher levels minimize [`near_resonance_reflection`] over the
/// start-to-start phase between two copies of the previous block. The objective is π-periodic
/// in that phase; the scan covers `(0, 2π)` and keeps the smallest minimizer.
pub fn optimize_hierarchy(level: usize, gamma: f64, delta: f64) -> Result<Vec<SpacingPlan>> {
    if !matches!(level, 2 | 4 | 8 | 16 | 32) {
        return Err(Error::Config(format!("level must be one of 2, 4, 8, 16, 32, got {level}")));
    }
    let phi_d = window_phase(gamma, delta)?;
    let mut plans = vec![SpacingPlan {
        level: 2,
        inter_block_phase: two_pair_spacing(gamma, delta),
        intra_pair_phase: phi_d,
    }];
    let mut l = 4;
    while l <= level {
        let block = plan_phases(&plans);
        let extent = *block.last().unwrap();
        let (phi_a, _) = scan_golden(
            |a| {
                let s = physical_shift(a, extent);
                let mut x = block.clone();
                x.extend(block.iter().map(|v| v + s));
                near_resonance_reflection(&x, gamma, delta, PROBE_OFFSET)
            },
            0.0,
            2.0 * PI,
            SCAN_POINTS,
            SPACING_TOL,
        )?;
        plans.push(SpacingPlan {
            level: l,
            inter_block_phase: phi_a,
            intra_pair_phase: phi_d,
        });
        l *= 2;
    }
    Ok(plans)
}

pub fn optimize_spacing(level: usize, gamma: f64, delta: f64) -> Result<SpacingPlan> {
    Ok(*optimize_hierarchy(level, gamma, delta)?.last().unwrap())
}

/// Equally spaced comparator: the lattice spacing in `(0, π)` with the best transmission at the
/// carrier (smallest `|r(0)|²`, smallest spacing on ties).
pub fn equal_spacing_comparator(n_atoms: usize, gamma: f64, delta: f64) -> Result<EmitterArray> {
    let (s, _) = scan_golden(
        |a| {
            let x: Vec<f64> = (0..n_atoms).map(|j| j as f64 * a).collect();
            coeffs(&chain_matrix_scaled(&x, 0.0, gamma, delta), 0.0).r.norm_sqr()
        },
        0.0,
        PI,
        SCAN_POINTS,
        SPACING_TOL,
    )?;
    EmitterArray::new((0..n_atoms).map(|j| j as f64 * s).collect(), gamma, delta, 0.0, 0.0)
}
