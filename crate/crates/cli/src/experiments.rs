//! Experiment drivers behind the CLI subcommands. Each driver reads a parsed
//! config, runs its sweep, and writes CSV artifacts into the output directory.

use crate::config::{
    CrossvalConfig, EstimateConfig, LPolicy, NetworkConfig, PcrConfig, RateConfig, SelfsimConfig,
};
use crate::csvout::{config_hash, Cell, CsvFile};
use anyhow::{bail, Context, Result};
use std::path::Path;
use tailsampler_core::dependence::JointModel;
use tailsampler_core::is_core::{
    crossvalidate_l, estimate_is_with, estimate_naive_with, push_sample, ISConfig, ISEstimate,
};
use tailsampler_core::losses::LossModel;
use tailsampler_core::pcr::{estimate_pcr, estimate_pcr_naive};
use tailsampler_core::rate::{
    direction_scan, exponent_istar, lambda_min, loss_level, network_theta_star, q_star, sup_level,
};
use tailsampler_core::rng::RandomStream;

/// Outcome of one command run: how many sweep points completed and which
/// failed. The process exits non-zero unless every point completed.
#[derive(Debug, Default)]
pub struct RunReport {
    pub completed: usize,
    pub failed: Vec<String>,
}

impl RunReport {
    fn ok(&mut self) {
        self.completed += 1;
    }

    fn fail(&mut self, what: impl Into<String>) {
        self.failed.push(what.into());
    }
}

/// Run `f` inside a rayon pool of `threads` workers; `None` keeps the global
/// pool, so results stay identical either way (estimators are chunk-ordered).
pub fn with_pool<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .context("building thread pool")?;
            Ok(pool.install(f))
        }
    }
}

fn estimate_cells(u: f64, l: f64, est: &ISEstimate) -> Vec<Cell> {
    vec![
        Cell::F(u),
        Cell::F(l),
        Cell::F(est.estimate),
        Cell::F(est.standard_error()),
        Cell::F(est.relative_error),
        Cell::F(est.sample_variance),
        Cell::U(est.hit_count),
        Cell::U(est.n),
    ]
}

/// Resolve the l policy against a sweep: fixed l is used as-is, while
/// cross-validation fits the offset c in l = c + ln u at the least-rare
/// sweep point and reuses it across the sweep. Returns per-point l values
/// and, when cross-validated, the table of candidate offsets.
fn resolve_l_policy(
    jm: &JointModel,
    policy: &LPolicy,
    sweep: &[f64],
    rho: f64,
    n_samples: u64,
    seed: u64,
    hit_at: impl Fn(f64) -> Box<dyn Fn(&[f64]) -> tailsampler_core::Result<bool> + Sync + 'static>,
) -> Result<(Vec<f64>, Option<(f64, Vec<(f64, f64, ISEstimate)>)>)> {
    match policy {
        LPolicy::Fixed { value } => Ok((vec![*value; sweep.len()], None)),
        LPolicy::Crossval { grid } => {
            let u_cv = sweep.iter().cloned().fold(f64::INFINITY, f64::min);
            if !u_cv.is_finite() {
                bail!("empty sweep");
            }
            let ls: Vec<f64> = grid.iter().map(|c| c + u_cv.ln()).collect();
            if ls.iter().any(|&l| l <= 0.0 || l >= u_cv) {
                bail!("cross-validation grid leaves (0, u) at u = {u_cv}");
            }
            let hit = hit_at(u_cv);
            let (best_l, table) = crossvalidate_l(
                jm,
                |l| ISConfig { u: u_cv, l, rho, n_samples, seed, chunk_size: 1024 },
                &ls,
                |_, z| hit(z),
            )?;
            let c_best = best_l - u_cv.ln();
            let annotated: Vec<(f64, f64, ISEstimate)> = grid
                .iter()
                .zip(table)
                .map(|(&c, (l, est))| (c, l, est))
                .collect();
            let per_point = sweep.iter().map(|u| c_best + u.ln()).collect();
            Ok((per_point, Some((c_best, annotated))))
        }
    }
}

fn write_crossval_table(
    dir: &Path,
    name: &str,
    hash: &str,
    seed: u64,
    c_best: f64,
    table: &[(f64, f64, ISEstimate)],
) -> Result<()> {
    let mut csv = CsvFile::new(
        hash,
        seed,
        &["c", "l", "p_hat", "std_err", "rel_err", "sample_var", "best"],
    );
    for (c, l, est) in table {
        csv.row(&[
            Cell::F(*c),
            Cell::F(*l),
            Cell::F(est.estimate),
            Cell::F(est.standard_error()),
            Cell::F(est.relative_error),
            Cell::F(est.sample_variance),
            Cell::U(u64::from((*c - c_best).abs() < 1e-12)),
        ]);
    }
    csv.write(dir, name)
}

pub fn cmd_estimate(
    cfg: &EstimateConfig,
    config_text: &str,
    base_dir: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<RunReport> {
    let seed = seed_override.unwrap_or(cfg.seed);
    let hash = config_hash(config_text);
    let jm = cfg.model.build()?;
    let lm = cfg.loss.build(base_dir)?;
    if (lm.rho() - cfg.rho).abs() > 1e-12 {
        bail!("loss homogeneity order {} disagrees with config rho {}", lm.rho(), cfg.rho);
    }
    let mut report = RunReport::default();

    let (ls, cv) = resolve_l_policy(
        &jm,
        &cfg.l_policy,
        &cfg.sweep,
        cfg.rho,
        cfg.n_samples,
        seed,
        |u| {
            let lm = lm.clone();
            Box::new(move |z: &[f64]| Ok(lm.eval_or_inf(z)? > u))
        },
    )?;
    if let Some((c_best, table)) = &cv {
        write_crossval_table(out, "crossval.csv", &hash, seed, *c_best, table)?;
    }

    let mut csv = CsvFile::new(
        &hash,
        seed,
        &[
            "u", "l", "p_hat", "std_err", "rel_err", "sample_var", "hits", "n", "naive_p",
            "naive_se",
        ],
    );
    for (&u, &l) in cfg.sweep.iter().zip(&ls) {
        let run = (|| -> Result<Vec<Cell>> {
            let is_cfg = ISConfig { u, l, rho: cfg.rho, n_samples: cfg.n_samples, seed, chunk_size: 1024 };
            is_cfg.validate()?;
            let est = estimate_is_with(&jm, &is_cfg, |z| Ok(lm.eval_or_inf(z)? > u))?;
            let mut cells = estimate_cells(u, l, &est);
            match cfg.naive_samples {
                Some(n) => {
                    let naive =
                        estimate_naive_with(&jm, n, seed, 1024, |x| Ok(lm.eval_or_inf(x)? > u))?;
                    cells.push(Cell::F(naive.estimate));
                    cells.push(Cell::F(naive.standard_error()));
                }
                None => {
                    cells.push(Cell::S(String::new()));
                    cells.push(Cell::S(String::new()));
                }
            }
            Ok(cells)
        })();
        match run {
            Ok(cells) => {
                csv.row(&cells);
                report.ok();
            }
            Err(e) => report.fail(format!("u = {u}: {e:#}")),
        }
    }
    csv.write(out, "estimate.csv")?;
    Ok(report)
}

pub fn cmd_network(
    cfg: &NetworkConfig,
    config_text: &str,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<RunReport> {
    let seed = seed_override.unwrap_or(cfg.seed);
    let hash = config_hash(config_text);
    let jm = cfg.joint_model()?;
    let a = cfg.matrix();
    let theta = cfg.theta();
    if theta.len() != cfg.d {
        bail!("theta length {} does not match d = {}", theta.len(), cfg.d);
    }
    let k = cfg.threshold;
    let loss_at = |u: f64| -> Result<LossModel> {
        let supply: Vec<f64> = theta.iter().map(|t| t * u).collect();
        Ok(LossModel::distribution_network(a.clone(), supply)?)
    };
    let mut report = RunReport::default();

    let (ls, cv) = resolve_l_policy(
        &jm,
        &cfg.l_policy,
        &cfg.sweep,
        1.0,
        cfg.n_samples,
        seed,
        |u| {
            let lm = loss_at(u).expect("network loss construction");
            Box::new(move |z: &[f64]| Ok(lm.eval_or_inf(z)? > k))
        },
    )?;
    if let Some((c_best, table)) = &cv {
        write_crossval_table(out, "crossval.csv", &hash, seed, *c_best, table)?;
    }

    let mut csv = CsvFile::new(
        &hash,
        seed,
        &[
            "u", "l", "p_hat", "std_err", "rel_err", "sample_var", "hits", "n", "naive_p",
            "naive_se", "naive_var",
        ],
    );
    for (&u, &l) in cfg.sweep.iter().zip(&ls) {
        let run = (|| -> Result<Vec<Cell>> {
            let lm = loss_at(u)?;
            let is_cfg = ISConfig { u, l, rho: 1.0, n_samples: cfg.n_samples, seed, chunk_size: 1024 };
            is_cfg.validate()?;
            let est = estimate_is_with(&jm, &is_cfg, |z| Ok(lm.eval_or_inf(z)? > k))?;
            let naive =
                estimate_naive_with(&jm, cfg.n_samples, seed, 1024, |x| Ok(lm.eval_or_inf(x)? > k))?;
            let mut cells = estimate_cells(u, l, &est);
            cells.push(Cell::F(naive.estimate));
            cells.push(Cell::F(naive.standard_error()));
            cells.push(Cell::F(naive.sample_variance));
            Ok(cells)
        })();
        match run {
            Ok(cells) => {
                csv.row(&cells);
                report.ok();
            }
            Err(e) => report.fail(format!("u = {u}: {e:#}")),
        }
    }
    csv.write(out, "network.csv")?;
    Ok(report)
}

pub fn cmd_pcr(
    cfg: &PcrConfig,
    config_text: &str,
    base_dir: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<RunReport> {
    let seed = seed_override.unwrap_or(cfg.seed);
    let hash = config_hash(config_text);
    let jm = cfg.joint_model()?;
    let mut report = RunReport::default();
    let mut csv = CsvFile::new(
        &hash,
        seed,
        &[
            "gamma", "l", "p_hat", "std_err", "rel_err", "sample_var", "hits", "n", "naive_p",
            "naive_se",
        ],
    );
    for &gamma in &cfg.gamma_sweep {
        let run = (|| -> Result<Vec<Cell>> {
            let portfolio = cfg.portfolio(base_dir, gamma)?;
            let rho = cfg.score_model(base_dir)?.rho();
            let is_cfg = ISConfig {
                u: gamma,
                l: cfg.l,
                rho,
                n_samples: cfg.n_samples,
                seed,
                chunk_size: 1024,
            };
            is_cfg.validate()?;
            let est = estimate_pcr(&portfolio, &jm, &is_cfg)?;
            let naive = estimate_pcr_naive(&portfolio, &jm, cfg.n_samples, seed)?;
            let mut cells = estimate_cells(gamma, cfg.l, &est);
            cells.push(Cell::F(naive.estimate));
            cells.push(Cell::F(naive.standard_error()));
            Ok(cells)
        })();
        match run {
            Ok(cells) => {
                csv.row(&cells);
                report.ok();
            }
            Err(e) => report.fail(format!("gamma = {gamma}: {e:#}")),
        }
    }
    csv.write(out, "pcr.csv")?;
    Ok(report)
}

pub fn cmd_selfsim(
    cfg: &SelfsimConfig,
    config_text: &str,
    base_dir: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<RunReport> {
    let seed = seed_override.unwrap_or(cfg.seed);
    let hash = config_hash(config_text);
    let jm = cfg.model.build()?;
    let lm = cfg.loss.build(base_dir)?;
    let d = jm.dim();
    let mut report = RunReport::default();

    let coord_names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let mut names: Vec<&str> = coord_names.iter().map(String::as_str).collect();

    // Conditional cloud at level l0 by accept-reject from the base law.
    let mut conditional = CsvFile::new(&hash, seed, &names);
    let mut stream = RandomStream::new(seed, 0);
    let mut kept = 0usize;
    let mut attempts = 0u64;
    let budget = 100_000u64 * cfg.n_points as u64;
    while kept < cfg.n_points && attempts < budget {
        attempts += 1;
        let x = jm.sample(&mut stream);
        if lm.eval_or_inf(&x)? > cfg.l0 {
            conditional.row(&x.iter().map(|&v| Cell::F(v)).collect::<Vec<_>>());
            kept += 1;
        }
    }
    if kept < cfg.n_points {
        report.fail(format!(
            "conditional cloud: {kept}/{} points accepted within {budget} attempts",
            cfg.n_points
        ));
    } else {
        report.ok();
    }
    conditional.write(out, "selfsim_conditional.csv")?;

    // Transformed cloud at level u with importance weights.
    names.push("weight");
    let mut pushed = CsvFile::new(&hash, seed, &names);
    let mut stream = RandomStream::new(seed, 1);
    let mut kept = 0usize;
    let mut attempts = 0u64;
    while kept < cfg.n_points && attempts < budget {
        attempts += 1;
        let x = jm.sample(&mut stream);
        let (z, w) = push_sample(&jm, &x, cfg.u, cfg.l0, cfg.rho)?;
        if lm.eval_or_inf(&z)? > cfg.u {
            let mut cells: Vec<Cell> = z.iter().map(|&v| Cell::F(v)).collect();
            cells.push(Cell::F(w));
            pushed.row(&cells);
            kept += 1;
        }
    }
    if kept < cfg.n_points {
        report.fail(format!(
            "transformed cloud: {kept}/{} points accepted within {budget} attempts",
            cfg.n_points
        ));
    } else {
        report.ok();
    }
    pushed.write(out, "selfsim_transformed.csv")?;
    Ok(report)
}

pub fn cmd_rate(
    cfg: &RateConfig,
    config_text: &str,
    base_dir: &Path,
    out: &Path,
) -> Result<RunReport> {
    let hash = config_hash(config_text);
    let marginals = cfg
        .marginals
        .iter()
        .map(|k| tailsampler_core::marginals::MarginalModel::new(k.clone()))
        .collect::<tailsampler_core::Result<Vec<_>>>()?;
    let d = marginals.len();
    let rs = cfg.rate_kind.build(d)?;
    let mut report = RunReport::default();

    let q = q_star(&marginals)?;
    let alpha: Vec<f64> = marginals.iter().map(|m| m.alpha()).collect();
    let theta_star = if cfg.network_design {
        Some(network_theta_star(&marginals)?)
    } else {
        None
    };

    let mut summary = CsvFile::new(&hash, 0, &["i", "alpha", "q_star", "theta_star"]);
    for i in 0..d {
        summary.row(&[
            Cell::U(i as u64),
            Cell::F(alpha[i]),
            Cell::F(q[i]),
            match &theta_star {
                Some(t) => Cell::F(t[i]),
                None => Cell::S(String::new()),
            },
        ]);
    }
    summary.write(out, "rate_summary.csv")?;
    report.ok();

    let mut exponent: Option<(f64, Vec<f64>)> = None;
    if let Some(loss_spec) = &cfg.loss {
        let run = (|| -> Result<()> {
            let lm = loss_spec.build(base_dir)?;
            let heavy = marginals.iter().any(|m| m.heavy_tailed());
            let (istar, y_star) = if heavy {
                let level = sup_level(&q, &alpha);
                exponent_istar(&rs, &level)?
            } else {
                let level = loss_level(&lm, &q, &alpha);
                exponent_istar(&rs, &level)?
            };
            exponent = Some((istar, y_star.clone()));
            let mut csv = CsvFile::new(&hash, 0, &["istar", "y_star"]);
            let coords: Vec<String> = y_star.iter().map(|v| format!("{v}")).collect();
            csv.row(&[Cell::F(istar), Cell::S(coords.join(";"))]);
            csv.write(out, "rate_exponent.csv")?;

            if d == 2 {
                let level: Box<dyn Fn(&[f64]) -> tailsampler_core::Result<f64>> = if heavy {
                    Box::new(sup_level(&q, &alpha))
                } else {
                    Box::new(loss_level(&lm, &q, &alpha))
                };
                let scan = direction_scan(&rs, &level, 256)?;
                let mut csv = CsvFile::new(&hash, 0, &["dir0", "dir1", "c", "i"]);
                for (dir, c, i) in scan {
                    csv.row(&[Cell::F(dir[0]), Cell::F(dir[1]), Cell::F(c), Cell::F(i)]);
                }
                csv.write(out, "rate_level_scan.csv")?;
            }
            Ok(())
        })();
        match run {
            Ok(()) => report.ok(),
            Err(e) => report.fail(format!("exponent: {e:#}")),
        }
    }

    let mut lambda_table: Vec<(f64, f64)> = Vec::new();
    if !cfg.lambda_min_levels.is_empty() {
        let mut csv = CsvFile::new(&hash, 0, &["x", "lambda_min"]);
        for &x in &cfg.lambda_min_levels {
            match lambda_min(&marginals, x) {
                Ok(v) => {
                    csv.row(&[Cell::F(x), Cell::F(v)]);
                    lambda_table.push((x, v));
                    report.ok();
                }
                Err(e) => report.fail(format!("lambda_min({x}): {e:#}")),
            }
        }
        csv.write(out, "lambda_min.csv")?;
    }

    let json = serde_json::json!({
        "config_hash": hash,
        "alpha": alpha,
        "q_star": q,
        "theta_star": theta_star,
        "istar": exponent.as_ref().map(|(i, _)| *i),
        "y_star": exponent.as_ref().map(|(_, y)| y.clone()),
        "lambda_min": lambda_table.iter().map(|(x, v)| serde_json::json!({"x": x, "value": v})).collect::<Vec<_>>(),
    });
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("rate_report.json"), serde_json::to_string_pretty(&json)?)
        .context("writing rate_report.json")?;
    Ok(report)
}

pub fn cmd_crossval(
    cfg: &CrossvalConfig,
    config_text: &str,
    base_dir: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<RunReport> {
    let seed = seed_override.unwrap_or(cfg.seed);
    let hash = config_hash(config_text);
    let jm = cfg.model.build()?;
    let lm = cfg.loss.build(base_dir)?;
    let u = cfg.u;
    let ls: Vec<f64> = cfg.grid.iter().map(|c| c + u.ln()).collect();
    if ls.iter().any(|&l| l <= 0.0 || l >= u) {
        bail!("cross-validation grid leaves (0, u) at u = {u}");
    }
    let (best_l, table) = crossvalidate_l(
        &jm,
        |l| ISConfig { u, l, rho: cfg.rho, n_samples: cfg.n_samples, seed, chunk_size: 1024 },
        &ls,
        |_, z| Ok(lm.eval_or_inf(z)? > u),
    )?;
    let c_best = best_l - u.ln();
    let annotated: Vec<(f64, f64, ISEstimate)> = cfg
        .grid
        .iter()
        .zip(table)
        .map(|(&c, (l, est))| (c, l, est))
        .collect();
    write_crossval_table(out, "crossval.csv", &hash, seed, c_best, &annotated)?;
    let mut report = RunReport::default();
    report.completed = annotated.len();
    Ok(report)
}
