//! End-to-end acceptance gate. Each test covers one release criterion and
//! prints a single `criterion N: PASS/FAIL` line (run with
//! `cargo test --test acceptance -- --nocapture` to see them all).

use nalgebra::DMatrix;
use std::path::PathBuf;
use tailsampler::config::{EstimateConfig, NetworkConfig, PcrConfig};
use tailsampler::experiments::{cmd_estimate, cmd_network, cmd_pcr, with_pool};
use tailsampler_core::dependence::{Copula, JointModel};
use tailsampler_core::is_core::{jacobian, transform};
use tailsampler_core::losses::LossModel;
use tailsampler_core::lp::{brute_force_max, network_loss, solve_max, LpOutcome};
use tailsampler_core::marginals::{MarginalKind, MarginalModel};
use tailsampler_core::pcr::{conditional_likelihood, solve_twist, twisted_prob};
use tailsampler_core::rate::{
    exponent_istar, loss_level, network_exponent, network_theta_star, simplex_grid, RateKind,
    RateSpec,
};
use tailsampler_core::rng::RandomStream;
use tailsampler_core::stats::{ks_pvalue, ks_statistic};
use tailsampler_core::Error;

const EXPSUM_CFG: &str = include_str!("../../../configs/estimate_expsum.json");
const PARETO_CFG: &str = include_str!("../../../configs/estimate_pareto_max.json");
const NETWORK_CFG: &str = include_str!("../../../configs/network_complete_d5.json");
const PCR_LOGIT_CFG: &str = include_str!("../../../configs/pcr_logit_m500.json");
const PCR_INTENSITY_CFG: &str = include_str!("../../../configs/pcr_intensity_m500.json");

fn criterion<F: FnOnce() + std::panic::UnwindSafe>(n: usize, name: &str, body: F) {
    let outcome = std::panic::catch_unwind(body);
    match &outcome {
        Ok(()) => println!("criterion {n} ({name}): PASS"),
        Err(_) => println!("criterion {n} ({name}): FAIL"),
    }
    if let Err(e) = outcome {
        std::panic::resume_unwind(e);
    }
}

fn out_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tailsampler-acceptance-{}", std::process::id()));
    dir.join(tag)
}

/// Parse a CSV artifact: skip the hash comment and column header, empty
/// cells become NaN.
fn read_rows(path: &PathBuf) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| {
            l.split(',')
                .map(|c| c.parse::<f64>().unwrap_or(f64::NAN))
                .collect()
        })
        .collect()
}

fn least_squares_slope(xy: &[(f64, f64)]) -> f64 {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn marginal(kind: MarginalKind) -> MarginalModel {
    MarginalModel::new(kind).unwrap()
}

#[test]
fn c01_exact_oracle_light_tails() {
    criterion(1, "light-tail exact oracle", || {
        let cfg: EstimateConfig = serde_json::from_str(EXPSUM_CFG).unwrap();
        let out = out_dir("c01");
        let report =
            cmd_estimate(&cfg, EXPSUM_CFG, &PathBuf::from("."), &out, None).unwrap();
        assert!(report.failed.is_empty(), "{:?}", report.failed);
        let rows = read_rows(&out.join("estimate.csv"));
        let (p_hat, se, rel_err) = (rows[0][2], rows[0][3], rows[0][4]);
        let exact = (-14.0f64).exp() * 15.0;
        assert!(
            (p_hat - exact).abs() <= 3.0 * se,
            "p_hat {p_hat} vs exact {exact}, se {se}"
        );
        assert!(rel_err <= 0.15, "relative error {rel_err}");
    });
}

#[test]
fn c02_exact_oracle_heavy_tails() {
    criterion(2, "heavy-tail exact oracle", || {
        let cfg: EstimateConfig = serde_json::from_str(PARETO_CFG).unwrap();
        let u = cfg.sweep[0];
        let out = out_dir("c02");
        let report =
            cmd_estimate(&cfg, PARETO_CFG, &PathBuf::from("."), &out, None).unwrap();
        assert!(report.failed.is_empty(), "{:?}", report.failed);
        let rows = read_rows(&out.join("estimate.csv"));
        let (p_hat, se) = (rows[0][2], rows[0][3]);
        let exact = 1.0 - (1.0 - u.powi(-2)).powi(2);
        assert!((exact - 1e-6).abs() < 1e-7, "target rarity ~1e-6, got {exact}");
        assert!(
            (p_hat - exact).abs() <= 3.0 * se,
            "p_hat {p_hat} vs exact {exact}, se {se}"
        );
    });
}

#[test]
fn c03_jacobian_against_finite_differences() {
    criterion(3, "Jacobian finite differences", || {
        let mut stream = RandomStream::new(33, 0);
        for d in [1usize, 2, 5] {
            for ratio in [2.0f64, 10.0, 100.0] {
                for _ in 0..100 {
                    let x: Vec<f64> =
                        (0..d).map(|_| 0.1 + 9.9 * stream.uniform01()).collect();
                    let analytic = jacobian(&x, ratio, 1.0, 1.0).unwrap();
                    let mut m = DMatrix::zeros(d, d);
                    for j in 0..d {
                        let h = 1e-5 * (1.0 + x[j].abs());
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[j] += h;
                        xm[j] -= h;
                        let tp = transform(&xp, ratio, 1.0, 1.0).unwrap();
                        let tm = transform(&xm, ratio, 1.0, 1.0).unwrap();
                        for i in 0..d {
                            m[(i, j)] = (tp[i] - tm[i]) / (2.0 * h);
                        }
                    }
                    let numeric = m.determinant().abs();
                    let rel = (analytic - numeric).abs() / analytic;
                    assert!(
                        rel <= 1e-5,
                        "d={d} ratio={ratio} x={x:?}: analytic {analytic}, numeric {numeric}"
                    );
                }
            }
        }
    });
}

#[test]
fn c04_network_log_efficiency_slope() {
    criterion(4, "network log-efficiency slope", || {
        let cfg: NetworkConfig = serde_json::from_str(NETWORK_CFG).unwrap();
        let out = out_dir("c04");
        let report = cmd_network(&cfg, NETWORK_CFG, &out, None).unwrap();
        assert!(report.failed.is_empty(), "{:?}", report.failed);
        let rows = read_rows(&out.join("network.csv"));
        assert_eq!(rows.len(), 5);
        let p0 = rows[0][2];
        let p_last = rows[4][2];
        assert!((5e-5..=5e-4).contains(&p0), "least-rare p_hat {p0}");
        assert!((1e-8..=5e-7).contains(&p_last), "rarest p_hat {p_last}");
        let pts: Vec<(f64, f64)> =
            rows.iter().map(|r| (r[2].ln(), r[5].ln())).collect();
        let slope = least_squares_slope(&pts);
        assert!(
            (1.5..=2.2).contains(&slope),
            "log V vs log p slope {slope}"
        );
        let reduction = 1.0 - rows[0][5] / rows[0][10];
        assert!(reduction >= 0.98, "variance reduction {reduction}");
    });
}

#[test]
fn c05_pcr_efficiency_ratio() {
    criterion(5, "credit-risk efficiency ratio", || {
        for (text, tag) in [(PCR_LOGIT_CFG, "c05-logit"), (PCR_INTENSITY_CFG, "c05-intensity")] {
            let cfg: PcrConfig = serde_json::from_str(text).unwrap();
            let out = out_dir(tag);
            let report = cmd_pcr(&cfg, text, &PathBuf::from("."), &out, None).unwrap();
            assert!(report.failed.is_empty(), "{tag}: {:?}", report.failed);
            let rows = read_rows(&out.join("pcr.csv"));
            assert_eq!(rows.len(), 5);
            let p0 = rows[0][2];
            let p_last = rows[4][2];
            assert!((3e-3..=3e-2).contains(&p0), "{tag} least-rare p_hat {p0}");
            assert!((1e-7..=5e-6).contains(&p_last), "{tag} rarest p_hat {p_last}");
            let ratio = rows[4][5].ln() / p_last.ln();
            assert!(
                ratio > 1.5 && ratio < 2.05,
                "{tag} log-variance / log-probability ratio {ratio}"
            );
        }
    });
}

#[test]
fn c06_twist_first_order_condition() {
    criterion(6, "exponential-twist first-order condition", || {
        let mut stream = RandomStream::new(61, 0);
        let mut done = 0;
        while done < 1000 {
            let m = 50;
            let p: Vec<f64> = (0..m).map(|_| 0.01 + 0.6 * stream.uniform01()).collect();
            let e: Vec<f64> = (0..m).map(|_| 0.5 + 1.5 * stream.uniform01()).collect();
            let e_bar = e.iter().sum::<f64>() / m as f64;
            let base: f64 =
                p.iter().zip(&e).map(|(pi, ei)| pi * ei).sum::<f64>() / m as f64;
            // interior target strictly between the untwisted mean loss and
            // the almost-sure maximum
            let frac = 0.1 + 0.8 * stream.uniform01();
            let target = base + frac * (0.95 * e_bar - base);
            if target <= base {
                continue;
            }
            let lambda = match solve_twist(&p, &e, target) {
                Ok(l) if l > 0.0 => l,
                _ => continue,
            };
            let twisted_mean: f64 = p
                .iter()
                .zip(&e)
                .map(|(&pi, &ei)| ei * twisted_prob(pi, ei, lambda))
                .sum::<f64>()
                / m as f64;
            assert!(
                (twisted_mean - target).abs() <= 1e-8,
                "FOC residual {}",
                (twisted_mean - target).abs()
            );
            // per-pattern likelihood identity
            let y: Vec<bool> = (0..m).map(|_| stream.uniform01() < 0.5).collect();
            let l_m = y
                .iter()
                .zip(&e)
                .map(|(&yi, &ei)| if yi { ei } else { 0.0 })
                .sum::<f64>()
                / m as f64;
            let lw = conditional_likelihood(&p, &e, lambda, l_m);
            let mut ratio = 1.0;
            for ((&pi, &ei), &yi) in p.iter().zip(&e).zip(&y) {
                let pt = twisted_prob(pi, ei, lambda);
                ratio *= if yi { pt / pi } else { (1.0 - pt) / (1.0 - pi) };
            }
            assert!(
                (ratio * lw - 1.0).abs() <= 1e-10,
                "likelihood identity residual {}",
                (ratio * lw - 1.0).abs()
            );
            done += 1;
        }
    });
}

#[test]
fn c07_rate_function_properties() {
    criterion(7, "rate-function property suite", || {
        let d = 3;
        let specs = [
            RateSpec::new(RateKind::Independence, d).unwrap(),
            RateSpec::new(RateKind::Clayton { theta: 1.5 }, d).unwrap(),
            RateSpec::new(RateKind::Gumbel { theta: 2.0 }, d).unwrap(),
            RateSpec::new(RateKind::StudentT { dof: 3.0 }, d).unwrap(),
            RateSpec::new(
                RateKind::GaussianCopula(DMatrix::from_fn(d, d, |i, j| {
                    if i == j {
                        1.0
                    } else {
                        0.3
                    }
                })),
                d,
            )
            .unwrap(),
        ];
        let mut stream = RandomStream::new(71, 0);
        for rs in &specs {
            assert_eq!(rs.eval(&vec![0.0; d]).unwrap(), 0.0);
            for _ in 0..10_000 {
                let y: Vec<f64> = (0..d).map(|_| 5.0 * stream.uniform01()).collect();
                let v = rs.eval(&y).unwrap();
                assert!(v > 0.0, "I(y) = {v} at y = {y:?}");
                let doubled: Vec<f64> = y.iter().map(|c| 2.0 * c).collect();
                let v2 = rs.eval(&doubled).unwrap();
                assert!(
                    (v2 - 2.0 * v).abs() <= 1e-10 * (1.0 + v2.abs()),
                    "homogeneity gap {}",
                    (v2 - 2.0 * v).abs()
                );
            }
            // level-set identity: inf over {y_0 > c} equals c (marginal
            // standardization); grid resolution is 1/64 per direction
            for c in [0.5, 1.0, 2.0] {
                let level = |y: &[f64]| Ok(y[0] / c);
                let (istar, _) = exponent_istar(rs, &level).unwrap();
                assert!(
                    (istar - c).abs() <= c / 16.0,
                    "inf over level set: {istar} vs {c}"
                );
            }
        }
    });
}

#[test]
fn c08_istar_oracle_equivalence() {
    criterion(8, "decay-exponent grid oracles", || {
        let lm = LossModel::linear_portfolio(vec![0.5, 0.5]).unwrap();
        let q = vec![1.0, 1.0];
        let alpha = vec![1.0, 1.0];
        let level = loss_level(&lm, &q, &alpha);

        let rs = RateSpec::new(RateKind::Independence, 2).unwrap();
        let (istar, _) = exponent_istar(&rs, &level).unwrap();
        assert!((istar - 2.0).abs() <= 1e-3, "Exp-sum I* = {istar}");

        // brute-force 2-D grid oracles on [0, 8]^2
        let rho_gauss =
            RateSpec::new(RateKind::GaussianCopula(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])), 2)
                .unwrap();
        for rs in [&rs, &rho_gauss] {
            let mut grid_min = f64::INFINITY;
            let steps = 1600;
            let span = 8.0;
            for i in 0..=steps {
                for j in 0..=steps {
                    let y = [span * i as f64 / steps as f64, span * j as f64 / steps as f64];
                    if level(&y).unwrap() >= 1.0 {
                        grid_min = grid_min.min(rs.eval(&y).unwrap());
                    }
                }
            }
            let (refined, _) = exponent_istar(rs, &level).unwrap();
            assert!(
                (refined - grid_min).abs() <= 1e-3,
                "grid {grid_min} vs refined {refined}"
            );
        }
    });
}

#[test]
fn c09_network_allocation() {
    criterion(9, "optimal supply allocation", || {
        let marginals: Vec<MarginalModel> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&sd| marginal(MarginalKind::Normal { mean: 0.0, sd }))
            .collect();
        let theta_star = network_theta_star(&marginals).unwrap();
        let expected = [1.0 / 6.0, 1.0 / 3.0, 0.5];
        for (t, e) in theta_star.iter().zip(&expected) {
            assert!((t - e).abs() <= 1e-9, "theta* {theta_star:?}");
        }
        let rs = RateSpec::new(RateKind::Independence, 3).unwrap();
        let best = network_exponent(&rs, &marginals, &theta_star).unwrap();
        let grid = simplex_grid(3, 9);
        assert!(grid.len() >= 50, "simplex grid has {} points", grid.len());
        for theta in &grid {
            if theta.iter().any(|&t| t == 0.0) {
                continue; // zero supply on a node is a degenerate design
            }
            let other = network_exponent(&rs, &marginals, theta).unwrap();
            assert!(
                best >= other - 1e-6,
                "I*(theta*) = {best} < I*({theta:?}) = {other}"
            );
        }
    });
}

#[test]
fn c10_standardization_ks() {
    criterion(10, "standardization KS tests", || {
        let kinds = [
            MarginalKind::Exponential { rate: 1.3 },
            MarginalKind::Weibull { shape: 0.9, scale: 1.1 },
            MarginalKind::Normal { mean: 0.5, sd: 1.2 },
            MarginalKind::Gamma { shape: 1.7, rate: 0.9 },
            MarginalKind::Lognormal { mu: 0.2, sigma: 0.8 },
            MarginalKind::Pareto { index: 2.5, scale: 1.0 },
        ];
        for kind in kinds {
            let ms = vec![marginal(kind.clone()), marginal(kind.clone())];
            let jm = JointModel::new(ms, Copula::gaussian_equicorrelated(2, 0.3).unwrap())
                .unwrap();
            let mut stream = RandomStream::new(101, 0);
            let n = 10_000;
            let mut y0 = Vec::with_capacity(n);
            let mut y1 = Vec::with_capacity(n);
            for _ in 0..n {
                let x = jm.sample(&mut stream);
                let y = jm.to_standard(&x).unwrap();
                y0.push(y[0]);
                y1.push(y[1]);
            }
            for (i, ys) in [y0, y1].iter().enumerate() {
                let d = ks_statistic(ys, |t| if t <= 0.0 { 0.0 } else { -(-t).exp_m1() });
                let p = ks_pvalue(d, ys.len());
                assert!(p >= 0.01, "{kind:?} coordinate {i}: KS p-value {p}");
            }
        }
    });
}

#[test]
fn c11_lp_against_basis_enumeration() {
    criterion(11, "LP simplex vs basis enumeration", || {
        let mut stream = RandomStream::new(111, 0);
        let d = 5;
        for case in 0..1000 {
            // random irreducible topology: a directed cycle plus random
            // extra edges, rows normalized to sum to 1
            let mut a = DMatrix::zeros(d, d);
            for i in 0..d {
                a[(i, (i + 1) % d)] = 1.0;
                for j in 0..d {
                    if j != i && stream.uniform01() < 0.5 {
                        a[(i, j)] += stream.uniform01();
                    }
                }
                let s: f64 = (0..d).map(|j| a[(i, j)]).sum();
                for j in 0..d {
                    a[(i, j)] /= s;
                }
            }
            let demand: Vec<f64> = (0..d).map(|_| 3.0 * stream.uniform01()).collect();
            let supply: Vec<f64> = (0..d).map(|_| 2.0 * stream.uniform01()).collect();
            let c: Vec<f64> = demand.iter().zip(&supply).map(|(di, si)| di - si).collect();
            let m = DMatrix::identity(d, d) - &a;
            let rhs = vec![1.0; d];
            match solve_max(&c, &m, &rhs).unwrap() {
                LpOutcome::Optimal { value, .. } => {
                    let bv = brute_force_max(&c, &m, &rhs).expect("y = 0 is feasible");
                    assert!(
                        (value - bv).abs() <= 1e-8,
                        "case {case}: simplex {value} vs enumeration {bv}"
                    );
                }
                LpOutcome::Unbounded => {
                    // only the all-ones recession ray can escape
                    assert!(c.iter().sum::<f64>() > -1e-9, "case {case}");
                }
            }
            // sandwich: max excess > threshold forces failure, and failure
            // requires some positive excess
            let k = 1.0;
            let max_excess = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            match network_loss(&a, &demand, &supply) {
                Ok(loss) => {
                    if max_excess > k {
                        assert!(loss > k - 1e-9, "case {case}");
                    }
                    if loss > k {
                        assert!(max_excess > 0.0, "case {case}");
                    }
                }
                Err(Error::Unbounded) => {
                    let total: f64 = c.iter().sum();
                    assert!(total > -1e-9, "case {case}: spurious unbounded");
                }
                Err(e) => panic!("case {case}: {e}"),
            }
        }
    });
}

#[test]
fn c12_thread_count_determinism() {
    criterion(12, "thread-count determinism", || {
        let compare = |tag: &str, files: &[&str], run: &(dyn Fn(&PathBuf) + Sync)| {
            let d1 = out_dir(&format!("{tag}-t1"));
            let d4 = out_dir(&format!("{tag}-t4"));
            with_pool(Some(1), || run(&d1)).unwrap();
            with_pool(Some(4), || run(&d4)).unwrap();
            for f in files {
                let b1 = std::fs::read(d1.join(f)).unwrap();
                let b4 = std::fs::read(d4.join(f)).unwrap();
                assert_eq!(b1, b4, "{tag}/{f} differs across thread counts");
            }
        };

        let est: EstimateConfig = serde_json::from_str(EXPSUM_CFG).unwrap();
        compare("c12-estimate", &["estimate.csv"], &|out| {
            let r = cmd_estimate(&est, EXPSUM_CFG, &PathBuf::from("."), out, None).unwrap();
            assert!(r.failed.is_empty());
        });

        let net: NetworkConfig = serde_json::from_str(NETWORK_CFG).unwrap();
        compare("c12-network", &["network.csv", "crossval.csv"], &|out| {
            let r = cmd_network(&net, NETWORK_CFG, out, None).unwrap();
            assert!(r.failed.is_empty());
        });

        let pcr: PcrConfig = serde_json::from_str(PCR_LOGIT_CFG).unwrap();
        compare("c12-pcr", &["pcr.csv"], &|out| {
            let r = cmd_pcr(&pcr, PCR_LOGIT_CFG, &PathBuf::from("."), out, None).unwrap();
            assert!(r.failed.is_empty());
        });
    });
}
