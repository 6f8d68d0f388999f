//! Two-photon scattering through an arbitrary non-interacting array (Markovian, exact in the
//! emitter dynamics): coupling sums, single-photon coefficients, the scattered two-photon
//! spectrum and the gate overlap.

use crate::eigen::{diagonalize_array, ArrayEigen, EigenSystem, TwoExcEigenSystem};
use crate::model::{EmitterArray, GateResult, PulseShape, PulseSpec};
use crate::quad::{GridSpec, RotatedGrid, Rule};
use crate::special::{f_ent, f_ent_numeric_many};
use crate::{wrap_phase, Error, Result, C64};
use faer::Mat;
use rayon::prelude::*;
use std::f64::consts::PI;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `Σ_i^{a,b} = Σ_{jk} P_{ji} P⁻¹_{ik} e^{i(a x_j + b x_k)}` for the four sign pairs, and the
/// doubly-excited couplings `χ^{a,b}_{pqr}` stored as `X^{a,b}_{pr} · Y^{a,b}_{rq}`.
#[derive(Clone, Debug)]
pub struct CouplingSums {
    pub mp: Vec<C64>,
    pub pm: Vec<C64>,
    pub mm: Vec<C64>,
    pub pp: Vec<C64>,
    pub x_mp: Mat<C64>,
    pub y_mp: Mat<C64>,
    pub x_pm: Mat<C64>,
    pub y_pm: Mat<C64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    fn f(self) -> f64 {
        match self {
            Sign::Minus => -1.0,
            Sign::Plus => 1.0,
        }
    }
}

fn phase_vector(x: &[f64], s: Sign) -> Vec<C64> {
    x.iter().map(|&v| C64::from_polar(1.0, s.f() * v)).collect()
}

fn sigma_table(x: &[f64], e: &EigenSystem, a: Sign, b: Sign) -> Vec<C64> {
    let n = x.len();
    let va = phase_vector(x, a);
    let vb = phase_vector(x, b);
    (0..n)
        .map(|i| {
            let left: C64 = (0..n).map(|j| va[j] * e.right_vectors[(j, i)]).sum();
            let right: C64 = (0..n).map(|k| e.inverse_vectors[(i, k)] * vb[k]).sum();
            left * right
        })
        .collect()
}

fn chi_factors(x: &[f64], e1: &EigenSystem, e2: &TwoExcEigenSystem, a: Sign, b: Sign) -> (Mat<C64>, Mat<C64>) {
    let n = x.len();
    let pairs = &e2.pair_index;
    let r = pairs.len();
    let p = &e1.right_vectors;
    let pinv = &e1.inverse_vectors;
    let va = phase_vector(x, a);
    let vb = phase_vector(x, b);
    let vp = phase_vector(x, Sign::Plus);
    let vm = phase_vector(x, Sign::Minus);
    let left: Vec<C64> = (0..n).map(|i| (0..n).map(|j| va[j] * p[(j, i)]).sum()).collect();
    let wp: Vec<C64> = (0..n).map(|i| (0..n).map(|k| pinv[(i, k)] * vp[k]).sum()).collect();
    let wm: Vec<C64> = (0..n).map(|i| (0..n).map(|k| pinv[(i, k)] * vm[k]).sum()).collect();
    let em = Mat::from_fn(n, r, |i, k| {
        let (k1, k2) = pairs[k];
        left[i] * (pinv[(i, k1)] * vb[k2] + pinv[(i, k2)] * vb[k1])
    });
    let ab = Mat::from_fn(r, n, |k, q| {
        let (k1, k2) = pairs[k];
        p[(k1, q)] * (wp[q] * vm[k2] + wm[q] * vp[k2]) + p[(k2, q)] * (wp[q] * vm[k1] + wm[q] * vp[k1])
    });
    let xf = &em * &e2.system.right_vectors;
    let yf = &e2.system.inverse_vectors * &ab;
    (xf, yf)
}

/// Builds all coupling sums for phases `x` from the two eigensystems of the same array.
pub fn coupling_sums(x: &[f64], eig1: &EigenSystem, eig2: &TwoExcEigenSystem) -> Result<CouplingSums> {
    let n = x.len();
    if eig1.dim() != n || eig2.dim() != n * n.saturating_sub(1) / 2 {
        return Err(Error::Diagonalization("eigensystem dimensions do not match the array".into()));
    }
    use Sign::*;
    let (x_mp, y_mp) = chi_factors(x, eig1, eig2, Minus, Plus);
    let (x_pm, y_pm) = chi_factors(x, eig1, eig2, Plus, Minus);
    Ok(CouplingSums {
        mp: sigma_table(x, eig1, Minus, Plus),
        pm: sigma_table(x, eig1, Plus, Minus),
        mm: sigma_table(x, eig1, Minus, Minus),
        pp: sigma_table(x, eig1, Plus, Plus),
        x_mp,
        y_mp,
        x_pm,
        y_pm,
    })
}

impl CouplingSums {
    pub fn n_atoms(&self) -> usize {
        self.mp.len()
    }

    pub fn sigma(&self, a: Sign, b: Sign) -> &[C64] {
        match (a, b) {
            (Sign::Minus, Sign::Plus) => &self.mp,
            (Sign::Plus, Sign::Minus) => &self.pm,
            (Sign::Minus, Sign::Minus) => &self.mm,
            (Sign::Plus, Sign::Plus) => &self.pp,
        }
    }

    /// `χ^{−,+}_{pqr}`.
    pub fn chi_mp(&self, p: usize, q: usize, r: usize) -> C64 {
        self.x_mp[(p, r)] * self.y_mp[(r, q)]
    }

    /// `χ^{+,−}_{pqr}`.
    pub fn chi_pm(&self, p: usize, q: usize, r: usize) -> C64 {
        self.x_pm[(p, r)] * self.y_pm[(r, q)]
    }

    /// Largest deviation of `Σ_i Σ_i^{a,b}` from `Σ_j e^{i(a+b)x_j}` over the four sign pairs.
    pub fn completeness_residual(&self, x: &[f64]) -> f64 {
        use Sign::*;
        [(Minus, Plus), (Plus, Minus), (Minus, Minus), (Plus, Plus)]
            .into_iter()
            .map(|(a, b)| {
                let lhs: C64 = self.sigma(a, b).iter().sum();
                let rhs: C64 = x.iter().map(|&v| C64::from_polar(1.0, (a.f() + b.f()) * v)).sum();
                (lhs - rhs).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Sampled `f_ab(ω₁, ω₂)` on a product grid.
#[derive(Clone, Debug)]
pub struct TwoPhotonSpectrum {
    pub grid: Vec<f64>,
    pub quadrature_weights: Vec<f64>,
    /// Row-major, `values[i·n + j] = f_ab(grid[i], grid[j])`.
    pub values: Vec<C64>,
}

impl TwoPhotonSpectrum {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn value(&self, i: usize, j: usize) -> C64 {
        self.values[i * self.grid.len() + j]
    }

    /// `∫∫ |f_ab|²` restricted to the product grid.
    pub fn norm(&self) -> f64 {
        let n = self.len();
        let w = &self.quadrature_weights;
        (0..n)
            .map(|i| (0..n).map(|j| w[i] * w[j] * self.values[i * n + j].norm_sqr()).sum::<f64>())
            .sum()
    }

    /// `∫∫ conj(u(ω₁) v(ω₂)) f_ab(ω₁, ω₂)` for vectors sampled on the grid.
    pub fn overlap(&self, u: &[C64], v: &[C64]) -> C64 {
        let n = self.len();
        let w = &self.quadrature_weights;
        (0..n)
            .map(|i| {
                let row: C64 = (0..n).map(|j| w[j] * v[j].conj() * self.values[i * n + j]).sum();
                row * w[i] * u[i].conj()
            })
            .sum()
    }

    /// Largest `|f_ab(ω₁, ω₂) − f_ab(ω₂, ω₁)|`.
    pub fn exchange_asymmetry(&self) -> f64 {
        let n = self.len();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                m = m.max((self.value(i, j) - self.value(j, i)).norm());
            }
        }
        m
    }
}

const KERNEL_TOL: f64 = 1e-8;

/// Decay rates below `DARK_FLOOR·Γ` (dark modes, rounding may even make them negative)
/// are raised to it; such modes carry no coupling weight.
const DARK_FLOOR: f64 = 1e-13;

enum Kernel {
    Closed(PulseSpec),
    Direct(PulseSpec),
}

/// Nonlinear part of `f_ab` at fixed `E = ω₁ + ω₂`, written as
/// `g⁴ Σ_p [u1_p(E)/(λ_p − iω₁) + u2_p(E)/(λ_p − iω₂)]`.
struct SumTables {
    u1: Mat<C64>,
    u2: Mat<C64>,
}

/// Precomputed single- and two-excitation data for one array.
#[derive(Clone, Debug)]
pub struct Scatterer {
    array: EmitterArray,
    eigen: ArrayEigen,
    sums: CouplingSums,
    /// `Γ_i − iδ`.
    lam: Vec<C64>,
    /// `Γ′_r − 2iδ`.
    lam2: Vec<C64>,
    /// `C_pq = Σ_p^{−,+}Σ_q^{+,−} + Σ_p^{−,−}Σ_q^{+,+}`.
    c: Mat<C64>,
}

impl Scatterer {
    pub fn new(array: &EmitterArray) -> Result<Self> {
        array.validate()?;
        if array.light_speed_phase() != 0.0 {
            return Err(Error::Config("propagation delays are handled by the transfer-matrix module".into()));
        }
        if array.delta_int() != 0.0 {
            return Err(Error::Config(
                "the two-photon engine handles non-interacting arrays only".into(),
            ));
        }
        let eigen = diagonalize_array(array)?;
        Self::from_eigen(array.clone(), eigen)
    }

    /// Same as [`Scatterer::new`] but on raw phases (any atom count, Γ given).
    pub fn from_phases(x: &[f64], gamma: f64, delta: f64) -> Result<Self> {
        let eigen = crate::eigen::diagonalize_phases(x, gamma)?;
        let array = if x.len() >= 2 && x.len() % 2 == 0 {
            EmitterArray::new(x.to_vec(), gamma, delta, 0.0, 0.0)?
        } else {
            EmitterArray::unchecked(x.to_vec(), gamma, delta)
        };
        Self::from_eigen(array, eigen)
    }

    fn from_eigen(array: EmitterArray, eigen: ArrayEigen) -> Result<Self> {
        let sums = coupling_sums(&eigen.phases, &eigen.one, &eigen.two)?;
        let d = array.delta();
        let floor = DARK_FLOOR * array.gamma();
        let lam: Vec<C64> = eigen
            .one
            .values
            .iter()
            .map(|v| C64::new(v.re.max(floor), v.im) - I * d)
            .collect();
        let lam2: Vec<C64> = eigen.two.system.values.iter().map(|v| v - I * (2.0 * d)).collect();
        let n = lam.len();
        let c = Mat::from_fn(n, n, |p, q| sums.mp[p] * sums.pm[q] + sums.mm[p] * sums.pp[q]);
        Ok(Self {
            array,
            eigen,
            sums,
            lam,
            lam2,
            c,
        })
    }

    pub fn array(&self) -> &EmitterArray {
        &self.array
    }

    pub fn sums(&self) -> &CouplingSums {
        &self.sums
    }

    pub fn eigen(&self) -> &ArrayEigen {
        &self.eigen
    }

    /// Detuned single-excitation poles `Γ_i − iδ`.
    pub fn poles(&self) -> &[C64] {
        &self.lam
    }

    /// Detuned two-excitation poles `Γ′_r − 2iδ`.
    pub fn poles2(&self) -> &[C64] {
        &self.lam2
    }

    fn g2(&self) -> f64 {
        self.array.gamma()
    }

    fn resolvent_sum(&self, s: &[C64], omega: f64) -> C64 {
        self.lam.iter().zip(s).map(|(l, v)| v / (l - I * omega)).sum::<C64>() * self.g2()
    }

    /// `t_a(ω)`.
    pub fn transmission(&self, omega: f64) -> C64 {
        1.0 - self.resolvent_sum(&self.sums.mp, omega)
    }

    /// `t_b(ω)`; equals `t_a` by reciprocity.
    pub fn transmission_b(&self, omega: f64) -> C64 {
        1.0 - self.resolvent_sum(&self.sums.pm, omega)
    }

    pub fn reflection_a(&self, omega: f64) -> C64 {
        -self.resolvent_sum(&self.sums.mm, omega)
    }

    pub fn reflection_b(&self, omega: f64) -> C64 {
        -self.resolvent_sum(&self.sums.pp, omega)
    }

    fn kernel(&self, k: &Kernel, e: f64) -> Result<Vec<C64>> {
        let v = match k {
            Kernel::Closed(pulse) => self
                .lam
                .iter()
                .map(|&l| f_ent(e, l, pulse))
                .collect::<Result<Vec<_>>>()?,
            Kernel::Direct(pulse) => f_ent_numeric_many(e, &self.lam, pulse, KERNEL_TOL)?,
        };
        Ok(v.into_iter().map(|x| x / (2.0 * PI)).collect())
    }

    fn kernel_for(&self, pulse: &PulseSpec) -> Kernel {
        match pulse.shape {
            PulseShape::Gaussian => Kernel::Closed(*pulse),
            PulseShape::Lorentzian => Kernel::Direct(*pulse),
        }
    }

    fn tables(&self, kern: &Kernel, es: &[f64]) -> Result<SumTables> {
        let n = self.lam.len();
        let ne = es.len();
        let rows: Vec<Vec<C64>> = es.iter().map(|&e| self.kernel(kern, e)).collect::<Result<_>>()?;
        let f = Mat::from_fn(ne, n, |k, q| rows[k][q]);
        let ymp_t = self.sums.y_mp.transpose().to_owned();
        let ypm_t = self.sums.y_pm.transpose().to_owned();
        let mut zmp = &f * &ymp_t;
        let mut zpm = &f * &ypm_t;
        for k in 0..ne {
            for r in 0..self.lam2.len() {
                let d = self.lam2[r] - I * es[k];
                zmp[(k, r)] /= d;
                zpm[(k, r)] /= d;
            }
        }
        let xmp_t = self.sums.x_mp.transpose().to_owned();
        let xpm_t = self.sums.x_pm.transpose().to_owned();
        let mut u1 = &zmp * &xmp_t;
        let mut u2 = &zpm * &xpm_t;
        for k in 0..ne {
            let ie = I * es[k];
            for p in 0..n {
                let (mut a, mut b) = (ZERO, ZERO);
                for q in 0..n {
                    let g = (f[(k, p)] + f[(k, q)]) / (self.lam[p] + self.lam[q] - ie);
                    a += self.c[(p, q)] * g;
                    b += self.c[(q, p)] * g;
                }
                u1[(k, p)] -= a;
                u2[(k, p)] -= b;
            }
        }
        Ok(SumTables { u1, u2 })
    }

    /// Single-frequency quantities for a list of frequencies.
    fn photon_rows(&self, pulse: &PulseSpec, w: &[f64]) -> PhotonRows {
        let n = self.lam.len();
        PhotonRows {
            f: w.iter().map(|&x| pulse.amplitude(x)).collect(),
            ta: w.iter().map(|&x| self.transmission(x)).collect(),
            tb: w.iter().map(|&x| self.transmission_b(x)).collect(),
            ra: w.iter().map(|&x| self.reflection_a(x)).collect(),
            rb: w.iter().map(|&x| self.reflection_b(x)).collect(),
            inv1: Mat::from_fn(w.len(), n, |i, p| 1.0 / (self.lam[p] - I * w[i])),
        }
    }

    fn cell(&self, r1: &PhotonRows, i: usize, r2: &PhotonRows, j: usize, t: &SumTables, k: usize) -> C64 {
        let g4 = self.g2() * self.g2();
        let lin = r1.f[i] * r2.f[j] * (r1.ta[i] * r2.tb[j] + r1.ra[i] * r2.rb[j]);
        let mut nl = ZERO;
        for p in 0..self.lam.len() {
            nl += r1.inv1[(i, p)] * t.u1[(k, p)] + r2.inv1[(j, p)] * t.u2[(k, p)];
        }
        lin + g4 * nl
    }

    /// `f_ab(ω₁, ω₂)` at a single point.
    pub fn spectrum_at(&self, pulse: &PulseSpec, w1: f64, w2: f64) -> Result<C64> {
        let rows = self.photon_rows(pulse, &[w1, w2]);
        let t = self.tables(&self.kernel_for(pulse), &[w1 + w2])?;
        Ok(self.cell(&rows, 0, &rows, 1, &t, 0))
    }

    /// `f_ab` on the product grid of `grid_spec` (nodes shifted to the pulse center).
    pub fn spectrum(&self, pulse: &PulseSpec, grid_spec: &GridSpec) -> Result<TwoPhotonSpectrum> {
        pulse.validate()?;
        grid_spec.validate()?;
        let (nodes, weights) = grid_spec.nodes(pulse.scale());
        let w: Vec<f64> = nodes.iter().map(|x| x + pulse.center).collect();
        let g = w.len();
        let rows = self.photon_rows(pulse, &w);
        let kern = self.kernel_for(pulse);
        let mut values = vec![ZERO; g * g];
        if grid_spec.rule == Rule::Trapezoid {
            // uniform grid: ω_i + ω_j depends on i + j only
            let es: Vec<f64> = (0..2 * g - 1)
                .map(|k| {
                    let a = k.min(g - 1);
                    w[a] + w[k - a]
                })
                .collect();
            let t = self.tables(&kern, &es)?;
            values.par_chunks_mut(g).enumerate().for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = self.cell(&rows, i, &rows, j, &t, i + j);
                }
            });
        } else {
            values
                .par_chunks_mut(g)
                .enumerate()
                .try_for_each(|(i, row)| -> Result<()> {
                    let es: Vec<f64> = w.iter().map(|x| w[i] + x).collect();
                    let t = self.tables(&kern, &es)?;
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = self.cell(&rows, i, &rows, j, &t, j);
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

    /// `∫∫ |f_ab|²` over the whole plane.
    ///
    /// Outer quadrature in `E = ω₁ + ω₂` (nodes of [`RotatedGrid`]). At fixed `E` the
    /// nonlinear part is a sum of simple poles in `ω₁`, so `∫|nl|² dω₁` is done in closed form,
    /// `2π Σ_pq (u1_p ū1_q + u2_p ū2_q)/(λ_p + λ̄_q)`; the linear part and the cross term are
    /// localized by the pulse and integrated on `|ω₁ − ω₂| ≤ 2W·s` (tan-mapped for that rule).
    pub fn channel_norm(&self, pulse: &PulseSpec, grid_spec: &GridSpec) -> Result<f64> {
        pulse.validate()?;
        grid_spec.validate()?;
        let scale = pulse.scale();
        let g = RotatedGrid::new(grid_spec, scale);
        let n = grid_spec.nodes_per_axis;
        let diffs: Vec<(f64, f64)> = if grid_spec.rule == Rule::TanMapped {
            let (d, w) = crate::quad::tan_mapped(2 * n, 2.0 * grid_spec.tan_scale * scale);
            d.into_iter().zip(w).collect()
        } else {
            let a = 2.0 * grid_spec.half_width_sigmas * scale;
            crate::quad::gauss_legendre(n).into_iter().map(|(x, w)| (a * x, a * w)).collect()
        };
        let g4 = self.g2() * self.g2();
        let na = self.lam.len();
        let kern = self.kernel_for(pulse);
        let parts = g
            .sums
            .par_iter()
            .map(|&(e0, we)| -> Result<f64> {
                let e = e0 + 2.0 * pulse.center;
                let t = self.tables(&kern, &[e])?;
                let w1: Vec<f64> = diffs.iter().map(|&(d, _)| 0.5 * (e + d)).collect();
                let w2: Vec<f64> = diffs.iter().map(|&(d, _)| 0.5 * (e - d)).collect();
                let r1 = self.photon_rows(pulse, &w1);
                let r2 = self.photon_rows(pulse, &w2);
                let mut local = 0.0;
                for (k, &(_, wd)) in diffs.iter().enumerate() {
                    let lin = r1.f[k] * r2.f[k] * (r1.ta[k] * r2.tb[k] + r1.ra[k] * r2.rb[k]);
                    let nl = self.cell(&r1, k, &r2, k, &t, 0) - lin;
                    local += 0.5 * wd * (lin.norm_sqr() + 2.0 * (lin.conj() * nl).re);
                }
                let mut poles = ZERO;
                for p in 0..na {
                    for q in 0..na {
                        let num = t.u1[(0, p)] * t.u1[(0, q)].conj() + t.u2[(0, p)] * t.u2[(0, q)].conj();
                        poles += num / (self.lam[p] + self.lam[q].conj());
                    }
                }
                Ok(we * (local + g4 * g4 * 2.0 * PI * poles.re))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(parts.iter().sum())
    }

    /// Overlap with the independently transmitted product state, and that state's norm.
    ///
    /// Gaussian pulses use the product grid of [`Self::spectrum`]. Lorentzian kernels have no
    /// closed form, so the overlap is taken on the [`RotatedGrid`], which needs one kernel
    /// evaluation per sum-frequency node instead of one per cell.
    pub fn overlap(&self, pulse: &PulseSpec, grid_spec: &GridSpec) -> Result<(C64, f64)> {
        if pulse.shape == PulseShape::Lorentzian {
            return self.overlap_rotated(pulse, grid_spec);
        }
        let spec = self.spectrum(pulse, grid_spec)?;
        let u: Vec<C64> = spec.grid.iter().map(|&x| self.transmission(x) * pulse.amplitude(x)).collect();
        let v: Vec<C64> = spec.grid.iter().map(|&x| self.transmission_b(x) * pulse.amplitude(x)).collect();
        let ov = spec.overlap(&u, &v);
        let wts = &spec.quadrature_weights;
        let nu: f64 = u.iter().zip(wts).map(|(a, w)| a.norm_sqr() * w).sum();
        let nv: f64 = v.iter().zip(wts).map(|(a, w)| a.norm_sqr() * w).sum();
        Ok((ov, (nu * nv).sqrt()))
    }

    /// [`Self::overlap`] on the rotated grid, for any pulse.
    ///
    /// The linear part of `f_ab` is separable and reduces to one-dimensional integrals on the
    /// nodes of `grid_spec`; only the nonlinear part is integrated over the plane.
    pub fn overlap_rotated(&self, pulse: &PulseSpec, grid_spec: &GridSpec) -> Result<(C64, f64)> {
        pulse.validate()?;
        grid_spec.validate()?;
        let g = RotatedGrid::new(grid_spec, pulse.scale());
        let kern = self.kernel_for(pulse);
        let parts = g
            .sums
            .par_iter()
            .map(|&(e0, we)| -> Result<C64> {
                let e = e0 + 2.0 * pulse.center;
                let t = self.tables(&kern, &[e])?;
                let w1: Vec<f64> = g.diffs.iter().map(|&(d, _)| 0.5 * (e + d)).collect();
                let w2: Vec<f64> = g.diffs.iter().map(|&(d, _)| 0.5 * (e - d)).collect();
                let r1 = self.photon_rows(pulse, &w1);
                let r2 = self.photon_rows(pulse, &w2);
                let mut acc = ZERO;
                for (k, &(_, wd)) in g.diffs.iter().enumerate() {
                    let target = r1.ta[k] * r1.f[k] * r2.tb[k] * r2.f[k];
                    let lin = r1.f[k] * r2.f[k] * (r1.ta[k] * r2.tb[k] + r1.ra[k] * r2.rb[k]);
                    acc += target.conj() * (self.cell(&r1, k, &r2, k, &t, 0) - lin) * wd;
                }
                Ok(acc * we)
            })
            .collect::<Result<Vec<C64>>>()?;
        let (nodes, weights) = grid_spec.nodes(pulse.scale());
        let w: Vec<f64> = nodes.iter().map(|x| x + pulse.center).collect();
        let r = self.photon_rows(pulse, &w);
        let (mut nu, mut nv) = (0.0, 0.0);
        let [mut ta, mut tb, mut ra, mut rb] = [ZERO; 4];
        for (k, &wk) in weights.iter().enumerate() {
            let f2 = r.f[k].norm_sqr() * wk;
            nu += f2 * r.ta[k].norm_sqr();
            nv += f2 * r.tb[k].norm_sqr();
            ta += f2 * r.ta[k].norm_sqr();
            tb += f2 * r.tb[k].norm_sqr();
            ra += f2 * r.ta[k].conj() * r.ra[k];
            rb += f2 * r.tb[k].conj() * r.rb[k];
        }
        let lin = ta * tb + ra * rb;
        Ok((lin + parts.iter().sum::<C64>(), (nu * nv).sqrt()))
    }

    /// Gate overlap on a single grid (no refinement).
    pub fn gate_at(&self, pulse: &PulseSpec, grid_spec: &GridSpec) -> Result<GateResult> {
        let (ov, target_norm) = self.overlap(pulse, grid_spec)?;
        Ok(GateResult {
            sqrt_fidelity: ov.norm(),
            phase: wrap_phase(ov.arg()),
            channel_norm: self.channel_norm(pulse, grid_spec)?,
            normalized_sqrt_fidelity: ov.norm() / target_norm,
            target_norm,
            array: self.array.clone(),
            pulse: *pulse,
            grid: *grid_spec,
            convergence: None,
            degeneracy_shift: self.eigen.shift,
            seed: None,
        })
    }

    /// Gate overlap certified by node doubling: refines up to twice until `|Δ√F|` falls
    /// below the grid tolerance, returning the finest evaluation.
    pub fn gate(&self, pulse: &PulseSpec, grid_spec: &GridSpec) -> Result<GateResult> {
        let mut spec = *grid_spec;
        let mut prev = self.gate_at(pulse, &spec)?;
        let mut change = f64::INFINITY;
        for _ in 0..2 {
            spec = spec.doubled();
            let next = self.gate_at(pulse, &spec)?;
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
}

struct PhotonRows {
    f: Vec<C64>,
    ta: Vec<C64>,
    tb: Vec<C64>,
    ra: Vec<C64>,
    rb: Vec<C64>,
    inv1: Mat<C64>,
}

/// `t_a(ω)` from precomputed coupling sums; `eig1` supplies `Γ_i`, `array` supplies `Γ` and `δ`.
pub fn single_photon_t(array: &EmitterArray, sums: &CouplingSums, eig1: &EigenSystem, omega: f64) -> C64 {
    let d = array.delta();
    let s: C64 = eig1
        .values
        .iter()
        .zip(&sums.mp)
        .map(|(l, v)| v / (l - I * (omega + d)))
        .sum();
    1.0 - s * array.gamma()
}

pub fn two_photon_spectrum(array: &EmitterArray, pulse: &PulseSpec, grid_spec: &GridSpec) -> Result<TwoPhotonSpectrum> {
    Scatterer::new(array)?.spectrum(pulse, grid_spec)
}

/// `√F e^{iΦ} = ∫∫ conj(t_a f̃ ⊗ t_b f̃) f_ab`, certified by node doubling.
pub fn gate_fidelity(array: &EmitterArray, pulse: &PulseSpec, grid_spec: &GridSpec) -> Result<GateResult> {
    Scatterer::new(array)?.gate(pulse, grid_spec)
}
