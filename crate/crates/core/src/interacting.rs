//! Pairs with direct exchange `Δ = Γ` at intra-pair phase `3π/2`: each pair transmits
//! perfectly and the photons can interact at one pair only.

use crate::model::{build_interacting_array, GateResult, PulseShape, PulseSpec};
use crate::quad::{gauss_legendre, tan_mapped, GridSpec, RotatedGrid, Rule};
use crate::scatter2::TwoPhotonSpectrum;
use crate::{wrap_phase, Error, Result, C64};
use rayon::prelude::*;
use std::f64::consts::PI;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Inner (`ν_a`) quadrature relative tolerance.
pub const INNER_TOL: f64 = 1e-7;

/// Single-pair transmission `t₁(ω) = −(Γ + iω)/(Γ − iω)`.
pub fn t1(omega: f64, gamma: f64) -> C64 {
    -C64::new(gamma, omega) / C64::new(gamma, -omega)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InteractingGateSpec {
    pub n_pairs: usize,
    /// `σ_ω z_j / c` for each pair.
    pub site_delays: Vec<f64>,
    pub gamma: f64,
    pub pulse: PulseSpec,
}

impl InteractingGateSpec {
    /// Pairs at `z_j = (j − 1)·z`, given `σ_ω z / c`.
    pub fn equally_spaced(n_pairs: usize, sigma_z_over_c: f64, gamma: f64, pulse: PulseSpec) -> Result<Self> {
        let s = Self {
            n_pairs,
            site_delays: (0..n_pairs).map(|j| j as f64 * sigma_z_over_c).collect(),
            gamma,
            pulse,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 || self.site_delays.len() != self.n_pairs {
            return Err(Error::Config(format!(
                "need one delay per pair: {} pairs, {} delays",
                self.n_pairs,
                self.site_delays.len()
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.site_delays.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("non-finite site delay".into()));
        }
        self.pulse.validate()
    }

    /// `z_j / c`.
    fn delays(&self) -> Vec<f64> {
        self.site_delays.iter().map(|d| d / self.pulse.sigma_omega).collect()
    }
}

/// `A_j(E)` and `B_j(E)`: the only parts of the nonlinear term that depend on `ν_a`.
struct SiteTables {
    a: Vec<C64>,
    b: Vec<C64>,
}

struct Engine<'a> {
    spec: &'a InteractingGateSpec,
    tau: Vec<f64>,
    inner: usize,
}

impl<'a> Engine<'a> {
    fn new(spec: &'a InteractingGateSpec, inner: usize) -> Self {
        Self {
            spec,
            tau: spec.delays(),
            inner,
        }
    }

    fn inner_nodes(&self, e: f64, n: usize) -> Vec<(f64, f64)> {
        let s = self.spec.pulse.scale();
        let c = 0.5 * e;
        match self.spec.pulse.shape {
            PulseShape::Gaussian => {
                let h = 8.5 * s;
                gauss_legendre(n).into_iter().map(|(x, w)| (c + h * x, h * w)).collect()
            }
            PulseShape::Lorentzian => {
                let (x, w) = tan_mapped(n, 2.0 * s);
                x.into_iter().zip(w).map(|(x, w)| (c + x, w)).collect()
            }
        }
    }

    fn site_tables_n(&self, e: f64, n_inner: usize) -> SiteTables {
        let g = self.spec.gamma;
        let n = self.spec.n_pairs;
        let p = &self.spec.pulse;
        let mut a = vec![ZERO; n];
        let mut b = vec![ZERO; n];
        for (na, w) in self.inner_nodes(e, n_inner) {
            let nb = e - na;
            let k = p.amplitude(na) * p.amplitude(nb) / (C64::new(g, -na) * C64::new(g, -nb)) * w;
            if k == ZERO {
                continue;
            }
            let (ta, tb) = (t1(na, g), t1(nb, g));
            for j in 0..n {
                // t₁(ν_a)^{j} t₁(ν_b)^{N−1−j}, zero-based j
                let pw = ta.powi(j as i32) * tb.powi((n - 1 - j) as i32) * k;
                a[j] += pw * C64::from_polar(1.0, 2.0 * na * self.tau[j]);
                b[j] += pw * C64::from_polar(1.0, -2.0 * nb * self.tau[j]);
            }
        }
        SiteTables { a, b }
    }

    fn site_tables(&self, e: f64) -> Result<SiteTables> {
        let mut n = self.inner;
        let mut prev = self.site_tables_n(e, n);
        for _ in 0..3 {
            n = 2 * n - 1;
            let next = self.site_tables_n(e, n);
            let scale = next.a.iter().chain(&next.b).map(|v| v.norm()).fold(0.0, f64::max);
            let diff = next
                .a
                .iter()
                .zip(&prev.a)
                .chain(next.b.iter().zip(&prev.b))
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            if diff <= INNER_TOL * scale.max(1e-300) {
                return Ok(next);
            }
            prev = next;
        }
        let scale = prev.a.iter().chain(&prev.b).map(|v| v.norm()).fold(0.0, f64::max);
        if scale < 1e-250 {
            return Ok(prev);
        }
        Err(Error::Quadrature {
            achieved: f64::NAN,
            requested: INNER_TOL,
        })
    }

    fn linear(&self, w: f64) -> C64 {
        t1(w, self.spec.gamma).powi(self.spec.n_pairs as i32) * self.spec.pulse.amplitude(w)
    }

    fn value(&self, w1: f64, w2: f64, t: &SiteTables) -> C64 {
        let g = self.spec.gamma;
        let n = self.spec.n_pairs;
        let (t1a, t1b) = (t1(w1, g), t1(w2, g));
        let d1 = 1.0 / C64::new(g, -w1);
        let d2 = 1.0 / C64::new(g, -w2);
        let mut acc = ZERO;
        for j in 0..n {
            let pre = t1a.powi((n - 1 - j) as i32) * t1b.powi(j as i32);
            let ph1 = C64::from_polar(1.0, -2.0 * w1 * self.tau[j]);
            let ph2 = C64::from_polar(1.0, 2.0 * w2 * self.tau[j]);
            acc += pre * (ph1 * d1 * t.a[j] + ph2 * d2 * t.b[j]);
        }
        self.linear(w1) * self.linear(w2) - acc * (2.0 * g * g / PI)
    }
}

fn inner_nodes_for(grid: &GridSpec) -> usize {
    grid.nodes_per_axis.max(81)
}

/// `f_ab(ω₁, ω₂)` at one point.
pub fn spectrum_at_interacting(spec: &InteractingGateSpec, w1: f64, w2: f64) -> Result<C64> {
    spec.validate()?;
    let eng = Engine::new(spec, 81);
    let t = eng.site_tables(w1 + w2)?;
    Ok(eng.value(w1, w2, &t))
}

pub fn scattered_spectrum_interacting(spec: &InteractingGateSpec, grid_spec: &GridSpec) -> Result<TwoPhotonSpectrum> {
    spec.validate()?;
    grid_spec.validate()?;
    let eng = Engine::new(spec, inner_nodes_for(grid_spec));
    let (nodes, weights) = grid_spec.nodes(spec.pulse.scale());
    let w: Vec<f64> = nodes.iter().map(|x| x + spec.pulse.center).collect();
    let g = w.len();
    let mut values = vec![ZERO; g * g];
    if grid_spec.rule == Rule::Trapezoid {
        let tables = (0..2 * g - 1)
            .into_par_iter()
            .map(|k| {
                let a = k.min(g - 1);
                eng.site_tables(w[a] + w[k - a])
            })
            .collect::<Result<Vec<_>>>()?;
        values.par_chunks_mut(g).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = eng.value(w[i], w[j], &tables[i + j]);
            }
        });
    } else {
        values
            .par_chunks_mut(g)
            .enumerate()
            .try_for_each(|(i, row)| -> Result<()> {
                for (j, v) in row.iter_mut().enumerate() {
                    let t = eng.site_tables(w[i] + w[j])?;
                    *v = eng.value(w[i], w[j], &t);
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

/// `∫∫ |f_ab|²` on the rotated grid (the nonlinear part is broad in `ω₁ − ω₂`).
pub fn channel_norm_interacting(spec: &InteractingGateSpec, grid_spec: &GridSpec) -> Result<f64> {
    spec.validate()?;
    grid_spec.validate()?;
    let eng = Engine::new(spec, inner_nodes_for(grid_spec));
    let g = RotatedGrid::new(grid_spec, spec.pulse.scale());
    let parts = g
        .sums
        .par_iter()
        .map(|&(e0, we)| -> Result<f64> {
            let e = e0 + 2.0 * spec.pulse.center;
            let t = eng.site_tables(e)?;
            Ok(we
                * g.diffs
                    .iter()
                    .map(|&(d, wd)| wd * eng.value(0.5 * (e + d), 0.5 * (e - d), &t).norm_sqr())
                    .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

/// Overlap with `t₁^N f̃ ⊗ t₁^N f̃` on a single grid.
pub fn gate_fidelity_interacting_at(spec: &InteractingGateSpec, grid_spec: &GridSpec) -> Result<GateResult> {
    let s = scattered_spectrum_interacting(spec, grid_spec)?;
    let eng = Engine::new(spec, 81);
    let u: Vec<C64> = s.grid.iter().map(|&x| eng.linear(x)).collect();
    let ov = s.overlap(&u, &u);
    let nu: f64 = u.iter().zip(&s.quadrature_weights).map(|(a, w)| a.norm_sqr() * w).sum();
    let first_gap = spec.site_delays.get(1).map_or(0.0, |d| (d - spec.site_delays[0]).abs());
    let array = build_interacting_array(spec.n_pairs, 4.0 * PI)?.with_light_speed_phase(first_gap)?;
    Ok(GateResult {
        sqrt_fidelity: ov.norm(),
        phase: wrap_phase(ov.arg()),
        channel_norm: channel_norm_interacting(spec, grid_spec)?,
        normalized_sqrt_fidelity: ov.norm() / nu,
        target_norm: nu,
        array,
        pulse: spec.pulse,
        grid: *grid_spec,
        convergence: None,
        degeneracy_shift: None,
        seed: None,
    })
}

/// As [`gate_fidelity_interacting_at`], certified by node doubling.
pub fn gate_fidelity_interacting(spec: &InteractingGateSpec, grid_spec: &GridSpec) -> Result<GateResult> {
    let mut g = *grid_spec;
    let mut prev = gate_fidelity_interacting_at(spec, &g)?;
    let mut change = f64::INFINITY;
    for _ in 0..2 {
        g = g.doubled();
        let next = gate_fidelity_interacting_at(spec, &g)?;
        change = (next.sqrt_fidelity - prev.sqrt_fidelity).abs();
        prev = next;
        if change < grid_spec.tolerance {
            prev.convergence = Some(change);
            return Ok(prev);
        }
    }
    Err(Error::Quadrature {
        achieved: change,
        requested: grid_spec.tolerance,
    })
}
