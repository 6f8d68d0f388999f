//! Quadrature rules on truncated and mapped real lines.

use crate::{Error, Result, C64};
use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Gauss–Legendre on `[−W·s, W·s]`.
    GaussLegendre,
    /// Composite trapezoid on `[−W·s, W·s]`; odd node count.
    Trapezoid,
    /// Gauss–Legendre in `θ` with `ω = L·tan θ`, `L = tan_scale·s`; covers the whole line.
    TanMapped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub half_width_sigmas: f64,
    pub nodes_per_axis: usize,
    pub rule: Rule,
    #[serde(default = "default_tan_scale")]
    pub tan_scale: f64,
    /// Node-doubling acceptance threshold.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tan_scale() -> f64 {
    2.0
}

fn default_tolerance() -> f64 {
    1e-4
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width_sigmas: 8.0,
            nodes_per_axis: 161,
            rule: Rule::GaussLegendre,
            tan_scale: default_tan_scale(),
            tolerance: default_tolerance(),
        }
    }
}

impl GridSpec {
    pub fn gauss_legendre(half_width_sigmas: f64, nodes: usize) -> Self {
        Self {
            half_width_sigmas,
            nodes_per_axis: nodes,
            ..Self::default()
        }
    }

    pub fn tan_mapped(tan_scale: f64, nodes: usize) -> Self {
        Self {
            nodes_per_axis: nodes,
            rule: Rule::TanMapped,
            tan_scale,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width_sigmas >= 6.0) {
            return Err(Error::Config(format!(
                "half_width_sigmas must be at least 6, got {}",
                self.half_width_sigmas
            )));
        }
        if self.nodes_per_axis < 41 {
            return Err(Error::Config(format!(
                "nodes_per_axis must be at least 41, got {}",
                self.nodes_per_axis
            )));
        }
        if self.rule == Rule::Trapezoid && self.nodes_per_axis % 2 == 0 {
            return Err(Error::Config("trapezoid rule needs an odd node count".into()));
        }
        if !(self.tan_scale > 0.0 && self.tolerance > 0.0) {
            return Err(Error::Config("tan_scale and tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Same rule with roughly twice the nodes (kept odd when the count is odd).
    pub fn doubled(&self) -> Self {
        Self {
            nodes_per_axis: 2 * self.nodes_per_axis - (self.nodes_per_axis % 2),
            ..*self
        }
    }

    /// Nodes (ascending, symmetric about 0) and weights for a pulse of width `scale`.
    pub fn nodes(&self, scale: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.nodes_per_axis;
        match self.rule {
            Rule::GaussLegendre => {
                let h = self.half_width_sigmas * scale;
                gauss_legendre(n).into_iter().map(|(x, w)| (h * x, h * w)).unzip()
            }
            Rule::Trapezoid => {
                let h = self.half_width_sigmas * scale;
                let step = 2.0 * h / (n - 1) as f64;
                (0..n)
                    .map(|i| {
                        let w = if i == 0 || i == n - 1 { 0.5 * step } else { step };
                        (-h + i as f64 * step, w)
                    })
                    .unzip()
            }
            Rule::TanMapped => {
                let l = self.tan_scale * scale;
                tan_mapped(n, l)
            }
        }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, ascending, exactly antisymmetric.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    if n == 1 {
        return vec![(0.0, 2.0)];
    }
    let mut v = GaussLegendre::new(n)
        .expect("degree at least 2")
        .into_node_weight_pairs();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    for i in 0..n / 2 {
        let x = 0.5 * (v[n - 1 - i].0 - v[i].0);
        let w = 0.5 * (v[n - 1 - i].1 + v[i].1);
        v[i] = (-x, w);
        v[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        v[n / 2].0 = 0.0;
    }
    v
}

/// `ω = l·tan θ` with Gauss–Legendre nodes in `θ ∈ (−π/2, π/2)`.
pub fn tan_mapped(n: usize, l: f64) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre(n)
        .into_iter()
        .map(|(u, w)| {
            let th = u * FRAC_PI_2;
            let c = th.cos();
            (l * th.tan(), w * FRAC_PI_2 * l / (c * c))
        })
        .unzip()
}

/// Nodes for `∫∫ g(ω₁, ω₂) dω₁dω₂` in the rotated variables `E = ω₁ + ω₂`, `Δ = ω₁ − ω₂`.
///
/// `E` takes Gauss–Legendre nodes on `±W√2·s`; `Δ` takes Gauss–Legendre nodes on `|Δ| ≤ 2W·s`
/// plus the two tails `|Δ| = 2W·s/u`, `u ∈ (0, 1]`, so structure that is narrow in `E` but
/// broad in `Δ` is captured. With [`Rule::TanMapped`] both axes are tan-mapped instead.
/// The Jacobian `½` is folded into the `Δ` weights.
#[derive(Clone, Debug)]
pub struct RotatedGrid {
    pub sums: Vec<(f64, f64)>,
    pub diffs: Vec<(f64, f64)>,
}

impl RotatedGrid {
    pub fn new(spec: &GridSpec, scale: f64) -> Self {
        let n = spec.nodes_per_axis;
        if spec.rule == Rule::TanMapped {
            let l = 2.0 * spec.tan_scale * scale;
            let (e, we) = tan_mapped(n, l);
            let (d, wd) = tan_mapped(2 * n, l);
            return Self {
                sums: e.into_iter().zip(we).collect(),
                diffs: d.into_iter().zip(wd).map(|(x, w)| (x, 0.5 * w)).collect(),
            };
        }
        let he = spec.half_width_sigmas * scale * 2f64.sqrt();
        let sums = gauss_legendre(n).into_iter().map(|(x, w)| (he * x, he * w)).collect();
        let a = 2.0 * spec.half_width_sigmas * scale;
        let mut diffs: Vec<(f64, f64)> = gauss_legendre(n).into_iter().map(|(x, w)| (a * x, 0.5 * a * w)).collect();
        for (u, w) in gauss_legendre(n / 2 + 1) {
            let t = 0.5 * (u + 1.0);
            let (x, wt) = (a / t, a / (t * t) * 0.5 * w);
            diffs.push((x, 0.5 * wt));
            diffs.push((-x, 0.5 * wt));
        }
        Self { sums, diffs }
    }

    /// `(ω₁, ω₂, weight)` for every node.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.sums.iter().flat_map(move |&(e, we)| {
            self.diffs
                .iter()
                .map(move |&(d, wd)| (0.5 * (e + d), 0.5 * (e - d), we * wd))
        })
    }
}

fn sum_1d<F: FnMut(f64) -> C64>(f: &mut F, spec: &GridSpec, scale: f64) -> C64 {
    let (x, w) = spec.nodes(scale);
    x.iter().zip(&w).map(|(&x, &w)| f(x) * w).sum()
}

fn sum_2d<F: FnMut(f64, f64) -> C64>(f: &mut F, spec: &GridSpec, scale: f64) -> C64 {
    let (x, w) = spec.nodes(scale);
    let mut acc = C64::new(0.0, 0.0);
    for (&a, &wa) in x.iter().zip(&w) {
        for (&b, &wb) in x.iter().zip(&w) {
            acc += f(a, b) * (wa * wb);
        }
    }
    acc
}

fn refine<G: FnMut(&GridSpec) -> C64>(mut eval: G, spec: &GridSpec) -> Result<(C64, f64)> {
    let mut s = *spec;
    let mut prev = eval(&s);
    let mut diff = f64::INFINITY;
    for _ in 0..3 {
        s = s.doubled();
        let next = eval(&s);
        diff = (next - prev).norm();
        if diff <= spec.tolerance * next.norm().max(1.0) {
            return Ok((next, diff));
        }
        prev = next;
    }
    Err(Error::Quadrature {
        achieved: diff,
        requested: spec.tolerance,
    })
}

/// `∫ f(ω) dω` on the grid's domain, certified by node doubling.
///
/// Converged once `|I(2n) − I(n)| ≤ tol·max(1, |I(2n)|)`; the returned estimate is that difference.
pub fn integrate_1d<F: FnMut(f64) -> C64>(mut f: F, spec: &GridSpec, scale: f64) -> Result<(C64, f64)> {
    spec.validate()?;
    refine(|s| sum_1d(&mut f, s, scale), spec)
}

/// Tensor-product analogue of [`integrate_1d`].
pub fn integrate_2d<F: FnMut(f64, f64) -> C64>(
    mut f: F,
    spec: &GridSpec,
    scale: f64,
) -> Result<(C64, f64)> {
    spec.validate()?;
    refine(|s| sum_2d(&mut f, s, scale), spec)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Panel {
    a: f64,
    b: f64,
    value: Vec<C64>,
    error: f64,
}

fn gk15<F: FnMut(f64, &mut [C64])>(f: &mut F, a: f64, b: f64, buf: &mut [C64]) -> Panel {
    let dim = buf.len();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![C64::new(0.0, 0.0); dim];
    let mut g = vec![C64::new(0.0, 0.0); dim];
    f(c, buf);
    for d in 0..dim {
        k[d] += buf[d] * WGK[7];
        g[d] += buf[d] * WG[3];
    }
    for j in 0..7 {
        for x in [c - h * XGK[j], c + h * XGK[j]] {
            f(x, buf);
            for d in 0..dim {
                k[d] += buf[d] * WGK[j];
                if j % 2 == 1 {
                    g[d] += buf[d] * WG[j / 2];
                }
            }
        }
    }
    let mut error = 0.0f64;
    for d in 0..dim {
        k[d] *= h;
        g[d] *= h;
        error = error.max((k[d] - g[d]).norm());
    }
    Panel { a, b, value: k, error }
}

/// Adaptive Gauss–Kronrod (7/15) for a vector-valued integrand on `[a, b]`.
///
/// `f(x, out)` writes `dim` values. Bisects the panel with the largest error until the
/// summed error is below `max(abs_tol, rel_tol·max_d |I_d|)`.
pub fn gauss_kronrod<F: FnMut(f64, &mut [C64])>(
    mut f: F,
    dim: usize,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<(Vec<C64>, f64)> {
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let mut panels = vec![gk15(&mut f, a, b, &mut buf)];
    loop {
        let mut total = vec![C64::new(0.0, 0.0); dim];
        let mut err = 0.0;
        for p in &panels {
            for d in 0..dim {
                total[d] += p.value[d];
            }
            err += p.error;
        }
        let scale = total.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if err <= abs_tol.max(rel_tol * scale) {
            return Ok((total, err));
        }
        if panels.len() >= max_panels {
            return Err(Error::Quadrature {
                achieved: err / scale.max(f64::MIN_POSITIVE),
                requested: rel_tol,
            });
        }
        let worst = (0..panels.len())
            .max_by(|&i, &j| panels[i].error.total_cmp(&panels[j].error))
            .unwrap();
        let p = panels.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        panels.push(gk15(&mut f, p.a, m, &mut buf));
        panels.push(gk15(&mut f, m, p.b, &mut buf));
    }
}
