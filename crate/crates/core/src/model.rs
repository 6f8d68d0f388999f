//! Geometry, pulse shapes and gate results.

use crate::quad::{self, GridSpec};
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Intra-pair phase of the interacting design, `d = 3λ/4`.
pub const INTERACTING_PAIR_PHASE: f64 = 1.5 * PI;

/// Positions (as optical phases) and couplings of an emitter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitterArray {
    phases: Vec<f64>,
    gamma: f64,
    delta: f64,
    delta_int: f64,
    light_speed_phase: f64,
}

impl EmitterArray {
    pub fn new(
        phases: Vec<f64>,
        gamma: f64,
        delta: f64,
        delta_int: f64,
        light_speed_phase: f64,
    ) -> Result<Self> {
        let a = Self {
            phases,
            gamma,
            delta,
            delta_int,
            light_speed_phase,
        };
        a.validate()?;
        Ok(a)
    }

    /// Arbitrary atom count, no validation; used for odd test geometries.
    pub(crate) fn unchecked(phases: Vec<f64>, gamma: f64, delta: f64) -> Self {
        Self {
            phases,
            gamma,
            delta,
            delta_int: 0.0,
            light_speed_phase: 0.0,
        }
    }

    /// Non-interacting array with `Γ = 1`.
    pub fn non_interacting(phases: Vec<f64>, delta: f64) -> Result<Self> {
        Self::new(phases, 1.0, delta, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.phases.len();
        if n < 2 || n % 2 != 0 {
            return Err(Error::Geometry(format!(
                "need an even number of at least 2 emitters, got {n}"
            )));
        }
        if self.phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Geometry("non-finite phase".into()));
        }
        if self.phases.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Geometry("phases must be sorted ascending".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Geometry(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !self.delta.is_finite() {
            return Err(Error::Geometry("non-finite detuning".into()));
        }
        if self.delta_int != 0.0 && self.delta_int != self.gamma {
            return Err(Error::Geometry(format!(
                "interaction strength must be 0 or gamma, got {}",
                self.delta_int
            )));
        }
        if !(self.light_speed_phase >= 0.0) {
            return Err(Error::Geometry("light_speed_phase must be non-negative".into()));
        }
        Ok(())
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn delta_int(&self) -> f64 {
        self.delta_int
    }
    pub fn light_speed_phase(&self) -> f64 {
        self.light_speed_phase
    }
    pub fn n_atoms(&self) -> usize {
        self.phases.len()
    }
    pub fn n_pairs(&self) -> usize {
        self.phases.len() / 2
    }

    /// Same couplings, new positions (sorted before validation).
    pub fn with_phases(&self, mut phases: Vec<f64>) -> Result<Self> {
        phases.sort_by(f64::total_cmp);
        Self::new(phases, self.gamma, self.delta, self.delta_int, self.light_speed_phase)
    }

    pub fn with_light_speed_phase(&self, light_speed_phase: f64) -> Result<Self> {
        Self::new(
            self.phases.clone(),
            self.gamma,
            self.delta,
            self.delta_int,
            light_speed_phase,
        )
    }

    /// Rigid shift of every phase.
    pub fn translated(&self, shift: f64) -> Self {
        let mut a = self.clone();
        a.phases.iter_mut().for_each(|p| *p += shift);
        a
    }
}

/// Pairs at intra-pair phase `3π/2` with `Δ = Γ`, successive pairs `pair_separation_phase` apart.
pub fn build_interacting_array(n_pairs: usize, pair_separation_phase: f64) -> Result<EmitterArray> {
    if n_pairs == 0 {
        return Err(Error::Geometry("n_pairs must be at least 1".into()));
    }
    if n_pairs > 1 && !(pair_separation_phase > INTERACTING_PAIR_PHASE) {
        return Err(Error::Geometry(format!(
            "pair separation {pair_separation_phase} does not exceed the intra-pair phase 3π/2"
        )));
    }
    let phases = (0..n_pairs)
        .flat_map(|j| {
            let c = j as f64 * pair_separation_phase;
            [c, c + INTERACTING_PAIR_PHASE]
        })
        .collect();
    EmitterArray::new(phases, 1.0, 0.0, 1.0, 0.0)
}

/// Repeating four-atom cell with gaps `(φ_d, φ_d/3, φ_d)` and `φ_d` between cells;
/// the detuning is set so that `tan φ_d = −δ/Γ`.
pub fn build_optimized_array(n_pairs: usize, phi_d: f64) -> Result<EmitterArray> {
    if n_pairs == 0 {
        return Err(Error::Geometry("n_pairs must be at least 1".into()));
    }
    if !(phi_d > 0.0 && phi_d.is_finite()) {
        return Err(Error::Geometry(format!("intra-pair phase must be positive, got {phi_d}")));
    }
    let mut phases = Vec::with_capacity(2 * n_pairs);
    let mut x = 0.0;
    for p in 0..n_pairs {
        if p > 0 {
            x += if p % 2 == 1 { phi_d / 3.0 } else { phi_d };
        }
        phases.push(x);
        x += phi_d;
        phases.push(x);
    }
    EmitterArray::non_interacting(phases, -phi_d.tan())
}

/// Identical pairs whose first atoms are `phi_a` apart.
pub fn build_uniform_pairs(n_pairs: usize, phi_d: f64, phi_a: f64) -> Result<EmitterArray> {
    if n_pairs == 0 {
        return Err(Error::Geometry("n_pairs must be at least 1".into()));
    }
    if !(phi_d > 0.0 && phi_a > phi_d) {
        return Err(Error::Geometry(format!(
            "need 0 < phi_d < phi_a, got phi_d={phi_d}, phi_a={phi_a}"
        )));
    }
    let phases = (0..n_pairs)
        .flat_map(|j| {
            let c = j as f64 * phi_a;
            [c, c + phi_d]
        })
        .collect();
    EmitterArray::non_interacting(phases, -phi_d.tan())
}

/// Equally spaced lattice of `n_atoms` emitters.
pub fn build_lattice(n_atoms: usize, spacing: f64, delta: f64) -> Result<EmitterArray> {
    if !(spacing > 0.0) {
        return Err(Error::Geometry("lattice spacing must be positive".into()));
    }
    EmitterArray::non_interacting((0..n_atoms).map(|j| j as f64 * spacing).collect(), delta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    Gaussian,
    /// Exponentially decaying temporal profile, Lorentzian power spectrum.
    Lorentzian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub shape: PulseShape,
    pub sigma_omega: f64,
    pub center: f64,
}

impl PulseSpec {
    pub fn gaussian(sigma_omega: f64) -> Self {
        Self {
            shape: PulseShape::Gaussian,
            sigma_omega,
            center: 0.0,
        }
    }

    pub fn lorentzian(sigma_omega: f64) -> Self {
        Self {
            shape: PulseShape::Lorentzian,
            sigma_omega,
            center: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_omega > 0.0 && self.sigma_omega.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_omega must be positive, got {}",
                self.sigma_omega
            )));
        }
        if !self.center.is_finite() {
            return Err(Error::Config("non-finite pulse center".into()));
        }
        Ok(())
    }

    /// Decay rate `a` of the exponential profile `√(2a)·e^{−at}`, chosen so that
    /// `σ_t = 1/(2a)` equals the Gaussian's `1/(2σ_ω)`.
    pub fn lorentzian_rate(&self) -> f64 {
        self.sigma_omega
    }

    /// Characteristic frequency scale used to place quadrature nodes.
    pub fn scale(&self) -> f64 {
        self.sigma_omega
    }

    /// Spectral amplitude `f̃(ω)`, unit norm in `L²(ℝ)`.
    pub fn amplitude(&self, omega: f64) -> C64 {
        let w = omega - self.center;
        match self.shape {
            PulseShape::Gaussian => {
                let s = self.sigma_omega;
                C64::new((-w * w / (4.0 * s * s)).exp() / (s * (2.0 * PI).sqrt()).sqrt(), 0.0)
            }
            PulseShape::Lorentzian => {
                let a = self.lorentzian_rate();
                (a / PI).sqrt() / C64::new(a, -w)
            }
        }
    }

    /// Temporal envelope `f(t)` with `f̃(ω) = (2π)^{-1/2} ∫ e^{iωt} f(t) dt`.
    pub fn time_amplitude(&self, t: f64) -> C64 {
        let carrier = C64::new(0.0, -self.center * t).exp();
        match self.shape {
            PulseShape::Gaussian => {
                let s = self.sigma_omega;
                carrier * (s * (2.0 / PI).sqrt()).sqrt() * (-s * s * t * t).exp()
            }
            PulseShape::Lorentzian => {
                if t < 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    let a = self.lorentzian_rate();
                    carrier * (2.0 * a).sqrt() * (-a * t).exp()
                }
            }
        }
    }

    /// Standard deviation of `|f(t)|²`, integrated over `t ∈ [−window, window]`.
    pub fn temporal_std(&self, window: f64) -> f64 {
        let rule = quad::gauss_legendre(400);
        let mut m = [0.0f64; 3];
        for (lo, hi) in [(-window, 0.0), (0.0, window)] {
            let h = 0.5 * (hi - lo);
            for &(x, w) in &rule {
                let t = lo + h * (x + 1.0);
                let p = self.time_amplitude(t).norm_sqr() * w * h;
                m[0] += p;
                m[1] += p * t;
                m[2] += p * t * t;
            }
        }
        let mean = m[1] / m[0];
        (m[2] / m[0] - mean * mean).sqrt()
    }
}

/// Outcome of one gate evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub sqrt_fidelity: f64,
    pub phase: f64,
    /// Squared norm of the both-transmitted component.
    pub channel_norm: f64,
    /// `|overlap| / ‖target‖`.
    pub normalized_sqrt_fidelity: f64,
    /// `‖target‖ = ∫|t f̃|² dω`.
    pub target_norm: f64,
    pub array: EmitterArray,
    pub pulse: PulseSpec,
    pub grid: GridSpec,
    /// `|Δ√F|` observed when the node count was doubled, if checked.
    pub convergence: Option<f64>,
    /// Magnitude of the deterministic phase perturbation applied to lift a degeneracy.
    pub degeneracy_shift: Option<f64>,
    pub seed: Option<u64>,
}

impl GateResult {
    /// `√F ≤ √(channel_norm)·‖target‖` up to quadrature error.
    pub fn check_invariants(&self) -> Result<()> {
        let bound = self.channel_norm.max(0.0).sqrt() * self.target_norm;
        if self.sqrt_fidelity > bound + 1e-6 {
            return Err(Error::Domain(format!(
                "sqrt fidelity {} exceeds overlap bound {}",
                self.sqrt_fidelity, bound
            )));
        }
        if !(self.phase > -PI - 1e-15 && self.phase <= PI + 1e-15) {
            return Err(Error::Domain(format!("phase {} outside (-π, π]", self.phase)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn norm(p: &PulseSpec) -> f64 {
        let rule = quad::gauss_legendre(2000);
        let l = 2.0 * p.sigma_omega;
        rule.iter()
            .map(|&(u, w)| {
                let th = u * PI / 2.0;
                let om = l * th.tan();
                p.amplitude(om).norm_sqr() * w * PI / 2.0 * l / th.cos().powi(2)
            })
            .sum()
    }

    #[test]
    fn interacting_single_pair() {
        let a = build_interacting_array(1, 20.0 * PI).unwrap();
        assert_eq!(a.phases(), &[0.0, 1.5 * PI]);
        assert_eq!(a.delta_int(), a.gamma());
        assert_eq!(a.delta(), 0.0);
    }

    #[test]
    fn interacting_two_pairs() {
        let a = build_interacting_array(2, 20.0 * PI).unwrap();
        assert_eq!(a.n_atoms(), 4);
        assert_relative_eq!(a.phases()[2] - a.phases()[0], 20.0 * PI);
        assert!(build_interacting_array(2, PI).is_err());
    }

    #[test]
    fn optimized_two_pairs() {
        let a = build_optimized_array(2, 0.75 * PI).unwrap();
        let want = [0.0, 0.75 * PI, PI, 1.75 * PI];
        for (x, y) in a.phases().iter().zip(want) {
            assert_relative_eq!(*x, y, epsilon = 1e-14);
        }
        assert_relative_eq!(a.delta(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn optimized_cells() {
        let a = build_optimized_array(4, 0.75 * PI).unwrap();
        let gaps: Vec<f64> = a.phases().windows(2).map(|w| (w[1] - w[0]) / PI).collect();
        let want = [0.75, 0.25, 0.75, 0.75, 0.75, 0.25, 0.75];
        for (g, w) in gaps.iter().zip(want) {
            assert_relative_eq!(*g, w, epsilon = 1e-13);
        }
        let one = build_optimized_array(1, 0.75 * PI).unwrap();
        assert_eq!(one.phases(), &[0.0, 0.75 * PI]);
        assert!(build_optimized_array(0, 1.0).is_err());
    }

    #[test]
    fn array_validation() {
        assert!(EmitterArray::non_interacting(vec![0.0], 1.0).is_err());
        assert!(EmitterArray::non_interacting(vec![0.0, 1.0, 2.0], 1.0).is_err());
        assert!(EmitterArray::non_interacting(vec![1.0, 0.0], 1.0).is_err());
        assert!(EmitterArray::new(vec![0.0, 1.0], 1.0, 0.0, 0.5, 0.0).is_err());
        assert!(EmitterArray::new(vec![0.0, 1.0], -1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_peak() {
        let p = PulseSpec::gaussian(1.0);
        assert_relative_eq!(p.amplitude(0.0).re, (2.0 * PI).powf(-0.25), epsilon = 1e-14);
        assert!(p.amplitude(40.0).norm() < 1e-100);
    }

    #[test]
    fn unit_norms() {
        for s in [0.01, 0.1, 1.0, 3.0] {
            assert_relative_eq!(norm(&PulseSpec::gaussian(s)), 1.0, epsilon = 1e-10);
            assert_relative_eq!(norm(&PulseSpec::lorentzian(s)), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn lorentzian_peak_from_normalization() {
        // value at the carrier fixed by the normalized profile 1/(a - iω)
        let p = PulseSpec::lorentzian(0.5);
        assert_relative_eq!(p.amplitude(0.0).re, (1.0 / (0.5 * PI)).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn matched_temporal_width() {
        for s in [0.05, 0.2] {
            let g = PulseSpec::gaussian(s).temporal_std(40.0 / s);
            let l = PulseSpec::lorentzian(s).temporal_std(40.0 / s);
            assert_relative_eq!(g, 0.5 / s, max_relative = 1e-8);
            assert_relative_eq!(l, g, max_relative = 1e-6);
        }
    }

    #[test]
    fn time_profile_transforms_to_spectrum() {
        for p in [PulseSpec::gaussian(0.7), PulseSpec::lorentzian(0.7)] {
            let rule = quad::gauss_legendre(1500);
            for om in [0.0, 0.4, -1.3] {
                let mut acc = C64::new(0.0, 0.0);
                for (lo, hi) in [(-60.0, 0.0), (0.0, 60.0)] {
                    let h = 0.5 * (hi - lo);
                    for &(x, w) in &rule {
                        let t = lo + h * (x + 1.0);
                        acc += p.time_amplitude(t) * C64::new(0.0, om * t).exp() * w * h;
                    }
                }
                acc /= (2.0 * PI).sqrt();
                assert!((acc - p.amplitude(om)).norm() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn optimized_pairs_satisfy_window(n in 1usize..12, phi in 1.7f64..3.1) {
            let a = build_optimized_array(n, phi).unwrap();
            let a2 = build_optimized_array(n, phi).unwrap();
            prop_assert_eq!(&a, &a2);
            for pair in a.phases().chunks(2) {
                let gap = pair[1] - pair[0];
                prop_assert!((gap.tan() + a.delta() / a.gamma()).abs() < 1e-12 * (1.0 + a.delta().abs()));
            }
        }

        #[test]
        fn gaussian_norm_any_sigma(s in 0.005f64..5.0) {
            prop_assert!((norm(&PulseSpec::gaussian(s)) - 1.0).abs() < 1e-8);
        }
    }
}
