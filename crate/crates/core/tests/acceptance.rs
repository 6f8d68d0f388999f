//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
//!
//! Run with `cargo test -p wgphase --test acceptance -- --nocapture` to see the report
//! when everything passes; on failure it is printed regardless.

use std::f64::consts::PI;
use wgphase::experiments::{
    default_bracket, default_grid, default_interacting_bracket, fit_power_law, monte_carlo_positions,
    optimize_interacting, optimize_noninteracting, reflection_comparison, retardation_check, ErrorModel, SweepRow,
};
use wgphase::interacting::{gate_fidelity_interacting, InteractingGateSpec};
use wgphase::model::build_optimized_array;
use wgphase::transfer::optimize_hierarchy;
use wgphase::validate::invariant_suite;
use wgphase::{GridSpec, PulseShape, PulseSpec, Result};

// 1
const N14_SQRT_F: (f64, f64) = (0.955, 0.010);
const GS_LAW: (f64, f64) = (3.67, 0.5536);
const GS_REL_TOL: f64 = 0.15;
// 2
const LORENTZ_SQRT_F: (f64, f64) = (0.699, 0.020);
// 3
const FIT_PAIRS: [usize; 9] = [4, 6, 8, 10, 12, 14, 16, 20, 24];
const INF_EXPONENT: (f64, f64) = (-1.97, 0.15);
const INF_AMPLITUDE: (f64, f64) = (8.16, 0.25);
const GS_EXPONENT_TOL: f64 = 0.10;
// 4
const INT_PAIRS: [usize; 3] = [4, 8, 12];
const INT_INF_LAW: (f64, f64) = (0.988, -1.57);
const INT_AMPLITUDE_REL: f64 = 0.25;
const INT_EXPONENT_TOL: f64 = 0.2;
const INT_RIDGE_LAW: (f64, f64) = (1.42, 0.818);
const INT_RIDGE_REL: f64 = 0.15;
// 5
const PHASE_PAIRS: [usize; 3] = [4, 8, 16];
const SINGLE_SITE_GS: f64 = 100.0;
const SINGLE_SITE_PHASE_TOL: f64 = 0.05;
// 6
const LEVEL2_TOL: f64 = 1e-6;
/// Start-to-start phase between doubled blocks implied by the four-atom cell, mod π.
const CELL_RESIDUES: [(usize, f64); 3] = [(4, 0.5 * PI), (8, 0.0), (16, 0.0)];
const CELL_TOL: f64 = 1e-2;
// 7
const RETARDATION_PAIRS: [usize; 8] = [1, 2, 5, 10, 20, 30, 40, 50];
const RETARDATION_Z: f64 = 1e-3;
const RETARDATION_TOL: f64 = 0.02;
// 8
const MC_PAIRS: usize = 14;
const MC_TRIALS: usize = 200;
const MC_SEED: u64 = 2024;
const MC_SMALL_TOL: f64 = 0.01;
const MC_MIXED_TOL: f64 = 0.1;
// 10
const REFLECTION_PAIRS: usize = 32;
const REFLECTION_GS: [f64; 4] = [10.0, 20.0, 50.0, 100.0];

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, r: Result<(bool, String)>) -> Line {
    match r {
        Ok((pass, detail)) => Line { id, pass, detail },
        Err(e) => Line {
            id,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn within_rel(x: f64, want: f64, rel: f64) -> bool {
    (x / want - 1.0).abs() <= rel
}

fn gs_law(n: usize) -> f64 {
    GS_LAW.0 * (n as f64).powf(GS_LAW.1)
}

fn gaussian_optimum(n: usize) -> Result<SweepRow> {
    let g = PulseShape::Gaussian;
    optimize_noninteracting(n, g, &default_grid(g), default_bracket(n, g))
}

fn criterion_1(optima: &[SweepRow]) -> Result<(bool, String)> {
    let r = optima.iter().find(|r| r.n_pairs == 14).expect("N = 14 in the fit list");
    let want = gs_law(14);
    let pass = (r.sqrt_fidelity - N14_SQRT_F.0).abs() <= N14_SQRT_F.1
        && within_rel(r.gamma_over_sigma, want, GS_REL_TOL)
        && r.certified;
    Ok((
        pass,
        format!(
            "√F = {:.4} (want {} ± {}), Γ/σ = {:.2} (want {want:.2} ± {:.0}%), certified = {}",
            r.sqrt_fidelity,
            N14_SQRT_F.0,
            N14_SQRT_F.1,
            r.gamma_over_sigma,
            GS_REL_TOL * 100.0,
            r.certified
        ),
    ))
}

fn criterion_2() -> Result<(bool, String)> {
    let l = PulseShape::Lorentzian;
    let r = optimize_noninteracting(14, l, &default_grid(l), default_bracket(14, l))?;
    let pass = (r.sqrt_fidelity - LORENTZ_SQRT_F.0).abs() <= LORENTZ_SQRT_F.1 && r.certified;
    Ok((
        pass,
        format!(
            "√F = {:.4} (want {} ± {}) at Γ/σ = {:.2}, Φ = {:.3}, certified = {}",
            r.sqrt_fidelity, LORENTZ_SQRT_F.0, LORENTZ_SQRT_F.1, r.gamma_over_sigma, r.phase, r.certified
        ),
    ))
}

fn criterion_3(optima: &[SweepRow]) -> Result<(bool, String)> {
    let inf = fit_power_law(&optima.iter().map(|r| (r.n_pairs as f64, r.infidelity())).collect::<Vec<_>>())?;
    let gs = fit_power_law(&optima.iter().map(|r| (r.n_pairs as f64, r.gamma_over_sigma)).collect::<Vec<_>>())?;
    let ok_k = (inf.exponent - INF_EXPONENT.0).abs() <= INF_EXPONENT.1;
    let ok_a = within_rel(inf.amplitude, INF_AMPLITUDE.0, INF_AMPLITUDE.1);
    let ok_g = (gs.exponent - GS_LAW.1).abs() <= GS_EXPONENT_TOL;
    Ok((
        ok_k && ok_a && ok_g,
        format!(
            "1−√F = {:.3}·N^{:.3} (r² {:.3}; want {}·N^{} ± 25%, ± {}), Γ/σ ∝ N^{:.3} (want {} ± {})",
            inf.amplitude,
            inf.exponent,
            inf.r_squared,
            INF_AMPLITUDE.0,
            INF_EXPONENT.0,
            INF_EXPONENT.1,
            gs.exponent,
            GS_LAW.1,
            GS_EXPONENT_TOL
        ),
    ))
}

fn criterion_4() -> Result<(bool, String)> {
    let grid = GridSpec::gauss_legendre(8.0, 41);
    let rows = INT_PAIRS
        .iter()
        .map(|&n| optimize_interacting(n, 0.0, PulseShape::Gaussian, &grid, default_interacting_bracket(n)))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_power_law(&rows.iter().map(|r| (r.n_pairs as f64, r.infidelity())).collect::<Vec<_>>())?;
    let ok_fit = within_rel(fit.amplitude, INT_INF_LAW.0, INT_AMPLITUDE_REL)
        && (fit.exponent - INT_INF_LAW.1).abs() <= INT_EXPONENT_TOL;
    let ridge: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.2}/{:.2}", r.gamma_over_sigma, INT_RIDGE_LAW.0 * (r.n_pairs as f64).powf(INT_RIDGE_LAW.1)))
        .collect();
    let ok_ridge = rows.iter().all(|r| {
        within_rel(r.gamma_over_sigma, INT_RIDGE_LAW.0 * (r.n_pairs as f64).powf(INT_RIDGE_LAW.1), INT_RIDGE_REL)
    });
    let certified = rows.iter().all(|r| r.certified);
    Ok((
        ok_fit && ok_ridge && certified,
        format!(
            "1−√F = {:.3}·N^{:.3} (want {}·N^{}), ridge Γ/σ found/law = [{}] (± {:.0}%), certified = {certified}",
            fit.amplitude,
            fit.exponent,
            INT_INF_LAW.0,
            INT_INF_LAW.1,
            ridge.join(", "),
            INT_RIDGE_REL * 100.0
        ),
    ))
}

fn criterion_5(optima: &[SweepRow]) -> Result<(bool, String)> {
    let gaps: Vec<f64> = PHASE_PAIRS
        .iter()
        .map(|&n| {
            let r = optima.iter().find(|r| r.n_pairs == n).expect("N in the fit list");
            (r.phase - 0.5 * PI).abs()
        })
        .collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let spec = InteractingGateSpec::equally_spaced(1, 0.0, 1.0, PulseSpec::gaussian(1.0 / SINGLE_SITE_GS))?;
    let r = gate_fidelity_interacting(&spec, &GridSpec::gauss_legendre(8.0, 41))?;
    let site = (r.phase.abs() - PI).abs() <= SINGLE_SITE_PHASE_TOL;
    Ok((
        monotone && site,
        format!(
            "|Φ−π/2| at N = 4, 8, 16: {:.4}, {:.4}, {:.4}; single site Φ = {:.4} (want π ± {SINGLE_SITE_PHASE_TOL})",
            gaps[0], gaps[1], gaps[2], r.phase
        ),
    ))
}

fn residue_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

fn criterion_6() -> Result<(bool, String)> {
    let plans = optimize_hierarchy(16, 1.0, 1.0)?;
    let l2 = (plans[0].inter_block_phase - PI).abs();
    let mut pass = l2 <= LEVEL2_TOL;
    let mut parts = vec![format!("level 2 |φ_a−π| = {l2:.1e}")];
    for (level, want) in CELL_RESIDUES {
        let p = plans.iter().find(|p| p.level == level).expect("level computed");
        let d = residue_gap(p.inter_block_phase, want);
        pass &= d <= CELL_TOL;
        parts.push(format!("level {level} φ_a = {:.4} (cell ≡ {want:.4} mod π, off {d:.4})", p.inter_block_phase));
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_7() -> Result<(bool, String)> {
    let mut worst = (0.0f64, 0);
    for n in RETARDATION_PAIRS {
        let r = retardation_check(n, gs_law(n), RETARDATION_Z)?;
        if r.relative_difference > worst.0 {
            worst = (r.relative_difference, n);
        }
    }
    Ok((
        worst.0 <= RETARDATION_TOL,
        format!(
            "max relative |T_exact − T_markov| = {:.3e} at N = {} (want ≤ {RETARDATION_TOL})",
            worst.0, worst.1
        ),
    ))
}

fn criterion_8(optimum_14: &SweepRow) -> Result<(bool, String)> {
    let base = build_optimized_array(MC_PAIRS, 0.75 * PI)?;
    let pulse = PulseSpec::gaussian(1.0 / optimum_14.gamma_over_sigma);
    let grid = default_grid(PulseShape::Gaussian);
    let run = |a: f64, b: f64| monte_carlo_positions(&base, &ErrorModel::uniform(a, b), MC_TRIALS, MC_SEED, &pulse, &grid);
    let s1 = run(0.001, 0.001)?;
    let s2 = run(0.01, 0.01)?;
    let s3 = run(0.1, 0.1)?;
    let mixed = run(0.001, 0.1)?;
    let f0 = s1.baseline_sqrt_fidelity;
    let small = (s1.mean_sqrt_fidelity - f0).abs() <= MC_SMALL_TOL;
    let monotone = s1.mean_sqrt_fidelity > s2.mean_sqrt_fidelity && s2.mean_sqrt_fidelity > s3.mean_sqrt_fidelity;
    let mix = (mixed.mean_sqrt_fidelity - f0).abs() <= MC_MIXED_TOL;
    Ok((
        small && monotone && mix,
        format!(
            "baseline {f0:.4}; mean √F 0.1%: {:.4} (± {MC_SMALL_TOL}), 1%: {:.4}, 10%: {:.4} (monotone = {monotone}); \
             mixed (0.1%, 10%): {:.4} (± {MC_MIXED_TOL})",
            s1.mean_sqrt_fidelity, s2.mean_sqrt_fidelity, s3.mean_sqrt_fidelity, mixed.mean_sqrt_fidelity
        ),
    ))
}

fn criterion_9() -> Result<(bool, String)> {
    let checks = invariant_suite()?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} {:.2e} > {:.0e}", c.name, c.value, c.tolerance))
        .collect();
    Ok((
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} checks within tolerance", checks.len())
        } else {
            failed.join(", ")
        },
    ))
}

fn criterion_10() -> Result<(bool, String)> {
    let rows = reflection_comparison(REFLECTION_PAIRS, &REFLECTION_GS)?;
    let pass = rows.iter().all(|r| r.optimized < r.uniform_pi);
    let parts: Vec<String> = rows
        .iter()
        .map(|r| format!("Γ/σ {}: {:.2e} vs {:.2e}", r.gamma_over_sigma, r.optimized, r.uniform_pi))
        .collect();
    Ok((pass, format!("R optimized vs uniform π: {}", parts.join("; "))))
}

#[test]
fn acceptance() {
    let optima = FIT_PAIRS.iter().map(|&n| gaussian_optimum(n)).collect::<Result<Vec<_>>>();
    let from_optima = |f: fn(&[SweepRow]) -> Result<(bool, String)>| match &optima {
        Ok(o) => f(o),
        Err(e) => Err(wgphase::Error::Optimization {
            message: e.to_string(),
            trace: Vec::new(),
        }),
    };
    let lines = [
        line("1", from_optima(criterion_1)),
        line("2", criterion_2()),
        line("3", from_optima(criterion_3)),
        line("4", criterion_4()),
        line("5", from_optima(criterion_5)),
        line("6", criterion_6()),
        line("7", criterion_7()),
        line(
            "8",
            from_optima(|o| criterion_8(o.iter().find(|r| r.n_pairs == MC_PAIRS).expect("N = 14 in the fit list"))),
        ),
        line("9", criterion_9()),
        line("10", criterion_10()),
    ];
    for l in &lines {
        println!("[{}] criterion {:>2}: {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.detail);
    }
    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "criteria failed: {}", failed.join(", "));
}
