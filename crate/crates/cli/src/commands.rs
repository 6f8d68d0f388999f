//! One function per subcommand. Every result is computed before anything is written.

use crate::config::{
    pulse, Design, FitConfig, PerturbConfig, PropagationMode, ReflectionConfig, SinglePhotonConfig, SpacingConfig,
    SweepIntConfig, SweepNiConfig, TwoPhotonConfig, ValidateConfig,
};
use crate::output::{write_run, Table};
use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::f64::consts::PI;
use wgphase::experiments::{
    default_bracket, default_grid, fit_power_law, monte_carlo_positions, optimize_noninteracting,
    reflection_comparison, sweep_interacting, sweep_noninteracting, PowerLawFit, SweepRow, SweepTable,
};
use wgphase::interacting::{gate_fidelity_interacting, gate_fidelity_interacting_at, scattered_spectrum_interacting,
    InteractingGateSpec};
use wgphase::model::build_optimized_array;
use wgphase::scatter2::{Scatterer, TwoPhotonSpectrum};
use wgphase::transfer::{chain_transmission, optimize_hierarchy, plan_phases, Propagation};
use wgphase::validate::invariant_suite;
use wgphase::{Error, GridSpec, PulseShape};

fn interacting_grid() -> GridSpec {
    GridSpec::gauss_legendre(8.0, 41)
}

#[derive(Serialize)]
struct SpectrumRow {
    omega: f64,
    t_re: f64,
    t_im: f64,
    r_re: f64,
    r_im: f64,
    transmission: f64,
    reflection: f64,
    phase: f64,
}

pub fn single_photon(cfg: SinglePhotonConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    let mut array = cfg.array().build()?;
    let mode = match cfg.propagation {
        PropagationMode::Markovian => Propagation::Markovian,
        PropagationMode::Exact => {
            array = array.with_light_speed_phase(cfg.sigma_z_over_c)?;
            Propagation::Exact {
                sigma_omega: pulse(PulseShape::Gaussian, cfg.gamma_over_sigma)?.sigma_omega,
            }
        }
    };
    let step = (cfg.omega_max - cfg.omega_min) / (cfg.points - 1) as f64;
    let rows: Vec<SpectrumRow> = (0..cfg.points)
        .into_par_iter()
        .map(|k| {
            let w = cfg.omega_min + k as f64 * step;
            let c = chain_transmission(&array, w, mode);
            SpectrumRow {
                omega: w,
                t_re: c.t.re,
                t_im: c.t.im,
                r_re: c.r.re,
                r_im: c.r.im,
                transmission: c.t.norm_sqr(),
                reflection: c.r.norm_sqr(),
                phase: c.t.arg(),
            }
        })
        .collect();
    let worst = rows
        .iter()
        .map(|r| (r.transmission + r.reflection - 1.0).abs())
        .fold(0.0, f64::max);
    let results = json!({
        "n_atoms": array.n_atoms(),
        "phases": array.phases(),
        "delta": array.delta(),
        "max_unitarity_error": worst,
    });
    let tables = [Table::new("single_photon.csv", "single_photon_spectrum", &rows)?];
    write_run(&cfg.output_dir, "single-photon", &cfg, &results, &tables)
}

#[derive(Serialize)]
struct JointRow {
    omega1: f64,
    omega2: f64,
    re: f64,
    im: f64,
}

fn joint_rows(s: &TwoPhotonSpectrum) -> Vec<JointRow> {
    let n = s.len();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let v = s.value(i, j);
            rows.push(JointRow {
                omega1: s.grid[i],
                omega2: s.grid[j],
                re: v.re,
                im: v.im,
            });
        }
    }
    rows
}

pub fn two_photon(cfg: TwoPhotonConfig) -> anyhow::Result<()> {
    let p = pulse(cfg.pulse_shape, cfg.gamma_over_sigma)?;
    let mut tables = Vec::new();
    let result = if cfg.design == Design::Interacting {
        let grid = cfg.grid.unwrap_or_else(interacting_grid);
        grid.validate()?;
        let spec = InteractingGateSpec::equally_spaced(cfg.n_pairs, cfg.sigma_z_over_c, 1.0, p)?;
        let r = if cfg.certify {
            gate_fidelity_interacting(&spec, &grid)?
        } else {
            gate_fidelity_interacting_at(&spec, &grid)?
        };
        if cfg.write_spectrum {
            let s = scattered_spectrum_interacting(&spec, &r.grid)?;
            tables.push(Table::new("two_photon_spectrum.csv", "two_photon_spectrum", &joint_rows(&s))?);
        }
        r
    } else {
        let grid = cfg.grid.unwrap_or_else(|| default_grid(cfg.pulse_shape));
        grid.validate()?;
        let sc = Scatterer::new(&cfg.array().build()?)?;
        let r = if cfg.certify { sc.gate(&p, &grid)? } else { sc.gate_at(&p, &grid)? };
        if cfg.write_spectrum {
            let s = sc.spectrum(&p, &r.grid)?;
            tables.push(Table::new("two_photon_spectrum.csv", "two_photon_spectrum", &joint_rows(&s))?);
        }
        r
    };
    result.check_invariants()?;
    write_run(&cfg.output_dir, "two-photon", &cfg, &result, &tables)
}

#[derive(Serialize)]
struct OptimumRow {
    n_pairs: usize,
    gamma_over_sigma: f64,
    sigma_z_over_c: f64,
    sqrt_fidelity: f64,
    infidelity: f64,
    phase: f64,
    certified: bool,
}

impl From<&SweepRow> for OptimumRow {
    fn from(r: &SweepRow) -> Self {
        Self {
            n_pairs: r.n_pairs,
            gamma_over_sigma: r.gamma_over_sigma,
            sigma_z_over_c: r.sigma_z_over_c,
            sqrt_fidelity: r.sqrt_fidelity,
            infidelity: r.infidelity(),
            phase: r.phase,
            certified: r.certified,
        }
    }
}

fn sweep_tables(t: &SweepTable, prefix: &str, optima: &[SweepRow]) -> anyhow::Result<Vec<Table>> {
    let opt: Vec<OptimumRow> = optima.iter().map(OptimumRow::from).collect();
    let mut v = vec![
        Table::new(&format!("{prefix}_grid.csv"), "sweep_rows", &t.rows)?,
        Table::new(&format!("{prefix}_optima.csv"), "sweep_optima", &opt)?,
    ];
    if !t.ridge.is_empty() {
        v.push(Table::new(&format!("{prefix}_ridge.csv"), "sweep_ridge", &t.ridge)?);
    }
    Ok(v)
}

pub fn sweep_ni(cfg: SweepNiConfig) -> anyhow::Result<()> {
    let grid = cfg.grid.unwrap_or_else(|| default_grid(cfg.pulse_shape));
    let table = sweep_noninteracting(&cfg.n_pairs, &cfg.gamma_over_sigma, cfg.pulse_shape, &grid)?;
    let (optima, fits) = if cfg.optimize {
        let optima = cfg
            .n_pairs
            .iter()
            .map(|&n| optimize_noninteracting(n, cfg.pulse_shape, &grid, default_bracket(n, cfg.pulse_shape)))
            .collect::<Result<Vec<_>, _>>()?;
        let fits = if optima.len() >= 3 {
            let inf: Vec<(f64, f64)> = optima.iter().map(|r| (r.n_pairs as f64, r.infidelity())).collect();
            let gs: Vec<(f64, f64)> = optima.iter().map(|r| (r.n_pairs as f64, r.gamma_over_sigma)).collect();
            Some(json!({
                "infidelity": fit_power_law(&inf)?,
                "gamma_over_sigma": fit_power_law(&gs)?,
            }))
        } else {
            None
        };
        (optima, fits)
    } else {
        (table.optima.clone(), None)
    };
    let tables = sweep_tables(&table, "sweep_ni", &optima)?;
    let results = json!({
        "design": table.design,
        "pulse_shape": table.pulse_shape,
        "grid": table.grid,
        "all_certified": table.all_certified() && optima.iter().all(|r| r.certified),
        "optima": optima,
        "fits": fits,
    });
    write_run(&cfg.output_dir, "sweep-ni", &cfg, &results, &tables)
}

pub fn sweep_int(cfg: SweepIntConfig) -> anyhow::Result<()> {
    let grid = cfg.grid.unwrap_or_else(interacting_grid);
    let table = sweep_interacting(cfg.n_pairs, &cfg.gamma_over_sigma, &cfg.sigma_z_over_c, cfg.pulse_shape, &grid)?;
    let tables = sweep_tables(&table, "sweep_int", &table.optima)?;
    let results = json!({
        "design": table.design,
        "pulse_shape": table.pulse_shape,
        "grid": table.grid,
        "all_certified": table.all_certified(),
        "ridge": table.ridge,
    });
    write_run(&cfg.output_dir, "sweep-int", &cfg, &results, &tables)
}

pub fn optimize_spacing(cfg: SpacingConfig) -> anyhow::Result<()> {
    let plans = optimize_hierarchy(cfg.level, cfg.gamma, cfg.delta)?;
    let last = *plans.last().expect("at least one level");
    let results = json!({
        "level": last.level,
        "phi_a": last.inter_block_phase,
        "phi_d": last.intra_pair_phase,
        "phases": plan_phases(&plans),
    });
    let tables = [Table::new("spacing.csv", "spacing_hierarchy", &plans)?];
    write_run(&cfg.output_dir, "optimize-spacing", &cfg, &results, &tables)
}

#[derive(Serialize)]
struct CaseRow {
    eps_intra: f64,
    eps_inter: f64,
    trials: usize,
    mean_phase: f64,
    std_phase: f64,
    mean_sqrt_fidelity: f64,
    std_sqrt_fidelity: f64,
    stderr_sqrt_fidelity: f64,
}

#[derive(Serialize)]
struct SampleRow {
    eps_intra: f64,
    eps_inter: f64,
    trial: usize,
    phase: f64,
    sqrt_fidelity: f64,
}

pub fn perturb(cfg: PerturbConfig) -> anyhow::Result<()> {
    let models = cfg.models();
    for m in &models {
        m.validate()?;
    }
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()).into());
    }
    let shape = PulseShape::Gaussian;
    let grid = cfg.grid.unwrap_or_else(|| default_grid(shape));
    let gs = match cfg.gamma_over_sigma {
        Some(g) => g,
        None => optimize_noninteracting(cfg.n_pairs, shape, &grid, default_bracket(cfg.n_pairs, shape))?.gamma_over_sigma,
    };
    let p = pulse(shape, gs)?;
    let base = build_optimized_array(cfg.n_pairs, 0.75 * PI)?;
    let stats = models
        .iter()
        .map(|m| monte_carlo_positions(&base, m, cfg.trials, cfg.seed, &p, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let cases: Vec<CaseRow> = stats
        .iter()
        .map(|s| CaseRow {
            eps_intra: s.error_model.eps_intra,
            eps_inter: s.error_model.eps_inter,
            trials: s.trials,
            mean_phase: s.mean_phase,
            std_phase: s.std_phase,
            mean_sqrt_fidelity: s.mean_sqrt_fidelity,
            std_sqrt_fidelity: s.std_sqrt_fidelity,
            stderr_sqrt_fidelity: s.stderr_sqrt_fidelity,
        })
        .collect();
    let samples: Vec<SampleRow> = stats
        .iter()
        .flat_map(|s| {
            s.samples.iter().enumerate().map(|(k, &(phase, f))| SampleRow {
                eps_intra: s.error_model.eps_intra,
                eps_inter: s.error_model.eps_inter,
                trial: k,
                phase,
                sqrt_fidelity: f,
            })
        })
        .collect();
    let results = json!({
        "gamma_over_sigma": gs,
        "baseline_phase": stats[0].baseline_phase,
        "baseline_sqrt_fidelity": stats[0].baseline_sqrt_fidelity,
        "cases": cases,
    });
    let tables = [
        Table::new("perturb_summary.csv", "perturbation_summary", &cases)?,
        Table::new("perturb_samples.csv", "perturbation_samples", &samples)?,
    ];
    write_run(&cfg.output_dir, "perturb", &cfg, &results, &tables)
}

fn read_columns(cfg: &FitConfig) -> anyhow::Result<Vec<(f64, f64)>> {
    let mut rd = csv::Reader::from_path(&cfg.input).with_context(|| format!("reading {}", cfg.input.display()))?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column {name:?} not in {}", cfg.input.display())))
    };
    let (ix, iy) = (col(&cfg.x_column)?, col(&cfg.y_column)?);
    let mut pts = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("non-numeric value {:?}: {e}", &rec[i])))
        };
        pts.push((num(ix)?, num(iy)?));
    }
    Ok(pts)
}

#[derive(Serialize)]
struct FitRow {
    x: f64,
    y: f64,
    fitted: f64,
}

pub fn fit(cfg: FitConfig) -> anyhow::Result<()> {
    let pts = read_columns(&cfg)?;
    let f: PowerLawFit = fit_power_law(&pts)?;
    let rows: Vec<FitRow> = pts.iter().map(|&(x, y)| FitRow { x, y, fitted: f.eval(x) }).collect();
    let tables = [Table::new("fit.csv", "power_law_fit", &rows)?];
    write_run(&cfg.output_dir, "fit", &cfg, &f, &tables)
}

pub fn validate(cfg: ValidateConfig) -> anyhow::Result<()> {
    let checks = invariant_suite()?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let results = json!({ "passed": failed.is_empty(), "checks": checks });
    let tables = [Table::new("validate.csv", "invariant_checks", &checks)?];
    write_run(&cfg.output_dir, "validate", &cfg, &results, &tables)?;
    for c in &checks {
        println!(
            "{:<20} {:>11.3e} <= {:.0e}  {}",
            c.name,
            c.value,
            c.tolerance,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Domain(format!("invariant checks failed: {}", failed.join(", "))).into())
    }
}

pub fn reflection(cfg: ReflectionConfig) -> anyhow::Result<()> {
    let rows = reflection_comparison(cfg.n_pairs, &cfg.gamma_over_sigma)?;
    let tables = [Table::new("reflection.csv", "reflection_comparison", &rows)?];
    write_run(&cfg.output_dir, "reflection", &cfg, &rows, &tables)
}
