//! The experiment drivers behind each subcommand. Every experiment is a
//! pure function of (config, seed) producing a table, so fixed inputs give
//! byte-identical CSV regardless of worker count.

use num_complex::Complex64;
use rayon::prelude::*;

use resolab_core::bessel::{f_nu_eval, FNuParams};
use resolab_core::carleman::{self, CarlemanError};
use resolab_core::chart::MetricChart;
use resolab_core::opnorm::{opnorm_power_iter, opnorm_power_iter_seeded};
use resolab_core::oscillatory::{decay_fit, OscKernelSpec, PhaseKind};
use resolab_core::parametrix::{self, ChartGrid};
use resolab_core::region::{in_xi_delta, re_sqrt, theorem11_exponents};
use resolab_core::torus::{resolvent_witness_starts, TorusGrid, TorusMultiplierOp};

use crate::config::{Config, ConfigError};
use crate::csv::{fmt_c64, fmt_f64, CsvTable};

#[derive(Debug)]
pub enum ExperimentError {
    Config(ConfigError),
    Numerical(String),
}

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentError::Config(e) => write!(f, "{e}"),
            ExperimentError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for ExperimentError {}

impl From<ConfigError> for ExperimentError {
    fn from(e: ConfigError) -> Self {
        ExperimentError::Config(e)
    }
}

fn numerical<E: std::fmt::Display>(e: E) -> ExperimentError {
    ExperimentError::Numerical(e.to_string())
}

// ---- resolvent sweep ---------------------------------------------------------

/// The default spectral grid over Ξ_δ: rays at arg z in
/// {0, ±π/4, ±π/2-ish, ±3π/4} with geometric radii, plus points hugging
/// the parabola boundary √z = δ(1+ε) + it.
pub fn default_z_grid(delta: f64, r_min: f64, r_max: f64, count: usize) -> Vec<Complex64> {
    let rays = [
        0.0,
        core::f64::consts::FRAC_PI_4,
        -core::f64::consts::FRAC_PI_4,
        1.563,
        -1.563,
        3.0 * core::f64::consts::FRAC_PI_4,
        -3.0 * core::f64::consts::FRAC_PI_4,
    ];
    let per_ray = count * 4 / 5 / rays.len();
    let mut zs = Vec::with_capacity(count);
    for &arg in &rays {
        for j in 0..per_ray {
            let r = r_min * (r_max / r_min).powf(j as f64 / (per_ray - 1) as f64);
            zs.push(Complex64::from_polar(r.min(r_max), arg));
        }
    }
    let boundary = count - zs.len();
    let t_min = (2.0 * delta).max(0.3);
    let t_max = (r_max - delta * delta).sqrt() * 0.995;
    for j in 0..boundary {
        let t = t_min * (t_max / t_min).powf(j as f64 / (boundary - 1) as f64);
        let w = Complex64::new(delta * 1.05, t);
        zs.push(w * w);
    }
    zs
}

/// Power-iteration lower bounds of ‖R(z)‖ along the z-grid; singular
/// points are flagged rather than fatal, and exterior probes are labeled.
pub fn resolvent_sweep(cfg: &Config, seed: u64) -> Result<CsvTable, ExperimentError> {
    let n = cfg.get_usize("n", 3)?;
    let samples = cfg.get_usize("grid", 48)?;
    let delta = cfg.get_f64("delta", 0.5)?;
    let r_max = cfg.get_f64("zmax", 400.0)?;
    let count = cfg.get_usize("zcount", 60)?;
    let seeds = cfg.get_usize("seeds", 2)? as u32;
    let iters = cfg.get_usize("iters", 60)? as u32;
    let exterior = cfg.get_f64_list("exterior-lambda", &[100.0])?;

    let pq = theorem11_exponents(n as i64).map_err(numerical)?;
    let grid = TorusGrid::new(n, samples).map_err(numerical)?;
    let zs = default_z_grid(delta, 2.0, r_max, count);
    for z in &zs {
        if !in_xi_delta(*z, delta).map_err(numerical)? {
            return Err(ExperimentError::Config(ConfigError::Invariant(format!(
                "z-grid point {z} escapes Xi_delta"
            ))));
        }
    }
    let mut jobs: Vec<(Complex64, bool)> = zs.into_iter().map(|z| (z, false)).collect();
    for lam in exterior {
        jobs.push((Complex64::new(-lam, 0.01), true));
    }

    let results: Vec<(Complex64, bool, Option<(f64, u32, f64)>)> = jobs
        .par_iter()
        .map(|&(z, ext)| {
            let op = match TorusMultiplierOp::resolvent(grid.clone(), z) {
                Ok(mut op) => {
                    op.measure_factor = 2;
                    op
                }
                Err(_) => return (z, ext, None), // flagged singular
            };
            let starts = resolvent_witness_starts(&grid, z);
            let est = opnorm_power_iter_seeded(&op, pq.p, pq.q, &starts, seeds, iters, seed)
                .expect("exponents are interior");
            (z, ext, Some((est.lower_bound, est.iterations, est.residual)))
        })
        .collect();

    let mut table = CsvTable::new([
        "idx",
        "re_z",
        "im_z",
        "abs_z",
        "re_sqrt_z",
        "in_region",
        "flag",
        "lower_bound",
        "iterations",
        "residual",
    ]);
    for (idx, (z, ext, outcome)) in results.iter().enumerate() {
        let (re, im) = fmt_c64(*z);
        let in_region = in_xi_delta(*z, delta).map_err(numerical)?;
        let (flag, lb, it, resid) = match outcome {
            None => ("singular".into(), String::new(), String::new(), String::new()),
            Some((lb, it, r)) => (
                if *ext { "exterior".to_string() } else { "ok".to_string() },
                fmt_f64(*lb),
                it.to_string(),
                fmt_f64(*r),
            ),
        };
        table.push_row(vec![
            idx.to_string(),
            re,
            im,
            fmt_f64(z.norm()),
            fmt_f64(re_sqrt(*z)),
            in_region.to_string(),
            flag,
            lb,
            it,
            resid,
        ]);
    }
    Ok(table)
}

// ---- bessel check --------------------------------------------------------------

pub fn bessel_check(cfg: &Config, _seed: u64) -> Result<CsvTable, ExperimentError> {
    let n = cfg.get_usize("n", 3)? as i64;
    let nu_max = cfg.get_usize("nu-max", 2)? as u32;
    let radii = cfg.get_f64_list("radii", &[0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.5])?;
    let re_z = cfg.get_f64_list("re-z", &[1.0, 4.0, 25.0])?;
    let im_z = cfg.get_f64_list("im-z", &[0.0, 2.0])?;

    let mut table = CsvTable::new(["n", "nu", "r", "re_z", "im_z", "re_F", "im_F", "est_err"]);
    for nu in 0..=nu_max {
        let params = FNuParams::new(n, nu).map_err(numerical)?;
        for &r in &radii {
            for &zr in &re_z {
                for &zi in &im_z {
                    let z = Complex64::new(zr, zi);
                    let (value, err) = f_nu_eval(r, z, &params, 1e-10).map_err(numerical)?;
                    let (re_f, im_f) = fmt_c64(value);
                    table.push_row(vec![
                        n.to_string(),
                        nu.to_string(),
                        fmt_f64(r),
                        fmt_f64(zr),
                        fmt_f64(zi),
                        re_f,
                        im_f,
                        fmt_f64(err),
                    ]);
                }
            }
        }
    }
    Ok(table)
}

// ---- parametrix build -----------------------------------------------------------

fn chart_from_config(cfg: &Config, n: usize) -> Result<MetricChart, ExperimentError> {
    let half = cfg.get_f64("half-width", 1.2)?;
    match cfg.get_or("metric", "flat").as_str() {
        "flat" => Ok(MetricChart::flat(n, half)),
        "sphere" => Ok(MetricChart::sphere_stereographic(n, half.max(20.0))),
        "file" => {
            let path = cfg.get("metric-file").ok_or(ConfigError::Invariant(
                "metric=file needs metric-file=<path>".into(),
            ))?;
            let sub = Config::from_file(std::path::Path::new(path)).map_err(ExperimentError::Config)?;
            let num = sub.get_f64_list("num", &[1.0])?;
            let den = sub.get_f64_list("den", &[1.0])?;
            MetricChart::conformal_rational(n, num, den, half).map_err(numerical)
        }
        other => Err(ExperimentError::Config(ConfigError::Invariant(format!(
            "unknown metric kind {other:?}"
        )))),
    }
}

pub fn parametrix_build(cfg: &Config, _seed: u64) -> Result<CsvTable, ExperimentError> {
    let n = cfg.get_usize("n", 2)?;
    let samples = cfg.get_usize("grid", 33)?;
    let order = cfg.get_usize("N-order", parametrix::default_order(n) as usize)? as u32;
    let z = Complex64::new(cfg.get_f64("re-z", 16.0)?, cfg.get_f64("im-z", 8.0)?);
    let rho = cfg.get_f64("rho", 0.9)?;
    let half = cfg.get_f64("half-width", 1.2)?;

    let chart = chart_from_config(cfg, n)?;
    let grid = ChartGrid::cube(half, n, samples);
    let center = vec![vec![0.0; n]];
    let flat = chart.label() == "flat";
    let transport = std::sync::Arc::new(
        parametrix::transport_coefficients(&chart, &grid, &center, order).map_err(numerical)?,
    );
    let kernel = parametrix::assemble_parametrix(
        &chart,
        &grid,
        z,
        order,
        rho,
        Some(transport.clone()),
    )
    .map_err(numerical)?;

    let mut table = CsvTable::new([
        "kind", "idx", "d_g", "re_F", "im_F", "chi", "alpha0", "alpha_top", "extra",
    ]);
    for x in 0..grid.len() {
        let d = transport.dist[0][x];
        let v = kernel.kernel_entry(x, 0);
        let (re_f, im_f) = fmt_c64(v);
        let a0 = transport.alpha[0][0][x];
        let atop = transport.alpha[0][order as usize][x];
        table.push_row(vec![
            "kernel".into(),
            x.to_string(),
            fmt_f64(d),
            re_f,
            im_f,
            fmt_f64(kernel.cutoff(d)),
            fmt_f64(a0),
            fmt_f64(atop),
            String::new(),
        ]);
    }
    // residual diagnostics only run in flat operator mode
    if flat {
        let kernel_flat =
            parametrix::assemble_parametrix(&chart, &grid, z, order, rho.min(half / 2.0), None)
                .map_err(numerical)?;
        let u: Vec<Complex64> = grid
            .all_points()
            .iter()
            .map(|p| {
                let r: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let sigma = half / 4.0;
                Complex64::new(
                    (-(r / sigma).powi(2)).exp()
                        * parametrix::DyadicCutoffs::psi0(r / (half - rho.min(half / 2.0))),
                    0.0,
                )
            })
            .collect();
        let report = kernel_flat.residual_check(&u).map_err(numerical)?;
        table.push_row(vec![
            "diagnostic".into(),
            "0".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            format!(
                "residual_mismatch={};filtered={};cells={}",
                fmt_f64(report.rel_l2_mismatch),
                fmt_f64(report.rel_l2_mismatch_filtered),
                report.compared_cells
            ),
        ]);
    }
    Ok(table)
}

// ---- carleman sweep --------------------------------------------------------------

pub fn carleman_sweep(cfg: &Config, _seed: u64) -> Result<CsvTable, ExperimentError> {
    let taus = cfg.get_f64_list("tau-list", &[8.0, 16.0, 32.0, 64.0])?;
    let n1 = cfg.get_usize("grid-x1", 4096)?;
    let nt = cfg.get_usize("grid-transverse", 8)?;
    let grid = TorusGrid::anisotropic(vec![n1, nt, nt]).map_err(numerical)?;
    let u = match cfg.get_or("u", "bump").as_str() {
        "bump" => carleman::bump_field(&grid, cfg.get_f64("bump-width", 2.2)?, 0, &[0, 0]),
        spec if spec.starts_with("mode:") => {
            let rest = &spec[5..];
            let parts: Vec<i64> = rest
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| {
                    ExperimentError::Config(ConfigError::Invariant(format!(
                        "u=mode needs integers, got {rest:?}"
                    )))
                })?;
            if parts.len() != 3 {
                return Err(ExperimentError::Config(ConfigError::Invariant(
                    "u=mode:j,k1,k2 needs three integers".into(),
                )));
            }
            carleman::bump_field(
                &grid,
                cfg.get_f64("bump-width", 2.2)?,
                parts[0],
                &parts[1..],
            )
        }
        other => {
            return Err(ExperimentError::Config(ConfigError::Invariant(format!(
                "unknown u kind {other:?}"
            ))))
        }
    };

    let rows: Result<Vec<(f64, carleman::CarlemanRatio)>, CarlemanError> = taus
        .iter()
        .map(|&tau| carleman::carleman_ratio(&u, tau).map(|r| (tau, r)))
        .collect();
    let rows = rows.map_err(numerical)?;
    let mut table = CsvTable::new(["tau", "ratio", "num_norm", "den_norm"]);
    for (tau, r) in rows {
        table.push_row(vec![
            fmt_f64(tau),
            fmt_f64(r.ratio),
            fmt_f64(r.num_norm),
            fmt_f64(r.den_norm),
        ]);
    }
    Ok(table)
}

// ---- oscillatory decay --------------------------------------------------------------

/// The slab geometries that reach the asymptotic decay regimes at desk
/// scale: thin-thin for the L² pair, full-by-thin for the
/// Carleson-Sjölin pair.
pub fn osc_spec_for(
    phase: PhaseKind,
    p: f64,
    q: f64,
    lambdas: Vec<f64>,
) -> Result<OscKernelSpec, ExperimentError> {
    let cs_pair = (q - 3.0 * p / (p - 1.0)).abs() < 1e-9;
    let (xb, yb) = if cs_pair {
        (
            (vec![0.0, 0.0], vec![1.6, 1.6]),
            (vec![1.85, 0.0], vec![2.1, 1.6]),
        )
    } else {
        (
            (vec![0.0, 0.0], vec![0.25, 1.6]),
            (vec![1.25, 0.0], vec![1.5, 1.6]),
        )
    };
    OscKernelSpec::new(2, phase, xb, yb, lambdas).map_err(numerical)
}

pub fn osc_decay(cfg: &Config, seed: u64) -> Result<CsvTable, ExperimentError> {
    let phase = match cfg.get_or("phase", "distance").as_str() {
        "distance" => PhaseKind::Distance,
        "bilinear" => PhaseKind::Bilinear,
        other => {
            return Err(ExperimentError::Config(ConfigError::Invariant(format!(
                "unknown phase {other:?}"
            ))))
        }
    };
    let p = cfg.get_f64("p", 2.0)?;
    let q = cfg.get_f64("q", 2.0)?;
    let lambdas = cfg.get_f64_list("lambda-ladder", &[8.0, 16.0, 32.0, 64.0])?;
    let seeds = cfg.get_usize("seeds", 1)? as u32;
    let iters = cfg.get_usize("iters", 30)? as u32;

    let spec = osc_spec_for(phase, p, q, lambdas)?;
    let fit = decay_fit(&spec, p, q, seeds, iters, seed).map_err(numerical)?;
    let mut table = CsvTable::new(["lambda", "norm_lb", "iters"]);
    for row in &fit.rows {
        table.push_row(vec![
            fmt_f64(row.lambda),
            fmt_f64(row.norm_lb),
            row.iterations.to_string(),
        ]);
    }
    eprintln!(
        "osc-decay: fitted slope {} +- {} against theory {}{}",
        fit.fit.slope,
        fit.fit.half_width,
        fit.theory_slope,
        if fit.fit.non_monotone {
            " (warning: non-monotone norms)"
        } else {
            ""
        }
    );
    Ok(table)
}

// ---- cluster probe ------------------------------------------------------------------

pub fn cluster_probe(cfg: &Config, seed: u64) -> Result<CsvTable, ExperimentError> {
    let n = cfg.get_usize("n", 3)?;
    let samples = cfg.get_usize("grid", 32)?;
    let m_max = cfg.get_usize("m-max", 12)? as u32;
    let p = cfg.get_f64("p", 2.0)?;
    let q = cfg.get_f64("q", 6.0)?;
    let seeds = cfg.get_usize("seeds", 2)? as u32;
    let iters = cfg.get_usize("iters", 50)? as u32;

    let grid = TorusGrid::new(n, samples).map_err(numerical)?;
    let rows: Vec<(u32, f64, u32)> = (0..=m_max)
        .into_par_iter()
        .map(|m| {
            let mut op = TorusMultiplierOp::cluster(grid.clone(), m);
            op.measure_factor = 2;
            let est = opnorm_power_iter(&op, p, q, seeds, iters, seed).expect("interior pair");
            (m, est.lower_bound, est.iterations)
        })
        .collect();
    let mut table = CsvTable::new(["m", "norm_lb", "iters"]);
    for (m, lb, it) in rows {
        table.push_row(vec![m.to_string(), fmt_f64(lb), it.to_string()]);
    }
    Ok(table)
}
