//! One function per subcommand. Each writes `report-<command>.json` (the resolved
//! config plus the result) into the run directory, and the experiments also
//! write a tidy CSV with one row per replication.

use std::io::Write;

use anyhow::{anyhow, Context as _, Result};
use lan_diffusion::fisher::oracle::{constant_precision, l2_blocks};
use lan_diffusion::fisher::{
    check_fourier_invertibility, check_s5prime, BlockEstimate, FisherMatrix,
};
use lan_diffusion::lan::{self, Experiment, FisherSource, MleSearch};
use lan_diffusion::likelihood::PathContext;
use lan_diffusion::models::check_ellipticity;
use lan_diffusion::par::Execution;
use lan_diffusion::reconstruct::reconstruct_yz;
use lan_diffusion::signals::{
    check_l2_differentiability, check_linear_independence, shrinking_displacements,
};
use lan_diffusion::simulate::{simulate_external, simulate_full};
use lan_diffusion::{
    likelihood, DiffusionModel, FourierSignal, FullState, ParamPoint, Role, Trajectory,
};
use serde::Serialize;

use crate::config::{Config, ConfigError, FisherChoice, Resolved, SignalPreset};
use crate::output::{cells, read_trajectory, Format, RunDir};

/// Relative tolerance of the (S5') eigenvalue test, against the trace.
const S5PRIME_TOL: f64 = 1e-10;
/// Quotient bound of the L2-differentiability check at the smallest displacement.
const L2_TOL: f64 = 1e-4;
const L2_DISPLACEMENTS: usize = 14;
const GRAM_POINTS: usize = 4096;
/// Every how many nodes a state is sampled for the ellipticity check.
const ELLIPTICITY_STRIDE: usize = 100;

/// How a command ended when it did not error.
#[derive(Debug)]
pub enum Outcome {
    Pass,
    /// An assumption checker failed; the report was still written.
    Fail(String),
}

pub struct Context {
    pub resolved: Resolved,
    pub seed: u64,
    pub exec: Execution,
    pub format: Format,
    pub run: RunDir,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    run_dir: String,
    config: &'a Config,
    result: T,
}

/// The pieces every command needs, built from the config.
struct Setup {
    model: Box<dyn DiffusionModel>,
    signal: FourierSignal,
    truth: ParamPoint,
    start: FullState,
}

impl Context {
    fn cfg(&self) -> &Config {
        &self.resolved.config
    }

    fn setup(&self) -> Result<Setup> {
        let cfg = self.cfg();
        let model = cfg.model()?;
        let signal = cfg.signal(model.dim_n())?;
        let truth = cfg.parameter()?;
        let start = cfg.start_state(model.as_ref())?;
        Ok(Setup {
            model,
            signal,
            truth,
            start,
        })
    }

    fn report<T: Serialize>(&self, command: &str, result: T) -> Result<()> {
        let report = Report {
            command,
            seed: self.seed,
            run_dir: self.run.path.display().to_string(),
            config: self.cfg(),
            result,
        };
        self.run
            .write_json(&format!("report-{command}.json"), &report)?;
        writeln!(
            std::io::stdout(),
            "{}",
            serde_json::to_string_pretty(&report.result)?
        )?;
        Ok(())
    }

    fn experiment<'a>(&self, s: &'a Setup) -> Experiment<'a> {
        Experiment {
            model: s.model.as_ref(),
            signal: &s.signal,
            truth: &s.truth,
            z0: &s.start.z,
            step: self.cfg().experiment.step,
            exec: self.exec,
        }
    }

    fn input(&self) -> Option<Result<Trajectory>> {
        self.cfg()
            .input_path(&self.resolved.base_dir)
            .map(|p| read_trajectory(&p))
    }

    /// The external path from `experiment.input`, or simulated up to `horizon`.
    fn external_path(&self, s: &Setup, horizon: f64) -> Result<Trajectory> {
        match self.input() {
            Some(t) => Ok(t?.z_block()?),
            None => Ok(simulate_external(
                s.model.as_ref(),
                &s.signal,
                &s.truth,
                &s.start.z,
                horizon,
                self.cfg().experiment.step,
                self.seed,
            )?),
        }
    }

    /// `I(1)` for the quadratic term: the closed form when `sigma` is
    /// constant and the oracle was requested, otherwise ergodic blocks along
    /// a path of length `experiment.horizon`.
    fn reference_fisher(&self, s: &Setup) -> Result<FisherMatrix> {
        Ok(self.blocks(s)?.0.fisher(1.0))
    }

    /// Oracle or ergodic blocks, with the name of the source.
    fn blocks(&self, s: &Setup) -> Result<(BlockEstimate, &'static str)> {
        if self.cfg().experiment.fisher == FisherChoice::Oracle && s.model.constant_sigma() {
            let w = constant_precision(s.model.as_ref())?;
            return Ok((l2_blocks(&s.signal, &s.truth, &w)?, "oracle"));
        }
        let horizon = self.cfg().fisher_horizon();
        let path = self.external_path(s, horizon)?;
        let ctx = PathContext::new(s.model.as_ref(), &path)?;
        Ok((
            BlockEstimate::from_path(&ctx, &s.signal, &s.truth, horizon.min(path.horizon()))?,
            "ergodic",
        ))
    }

    fn fisher_source(&self, s: &Setup) -> Result<FisherSource> {
        Ok(match self.cfg().experiment.fisher {
            FisherChoice::Oracle => FisherSource::Given(self.reference_fisher(s)?),
            FisherChoice::Ergodic => FisherSource::Ergodic,
        })
    }

    fn search(&self) -> MleSearch {
        let e = &self.cfg().experiment;
        MleSearch {
            half_width: e.half_width,
            spacing: e.spacing,
            ..MleSearch::default()
        }
    }
}

fn param_header(prefix: &str, d: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|k| format!("{prefix}theta{k}")).collect();
    h.push(format!("{prefix}period"));
    h
}

pub fn simulate(ctx: &Context) -> Result<Outcome> {
    let s = ctx.setup()?;
    let e = &ctx.cfg().experiment;
    let traj = simulate_full(
        s.model.as_ref(),
        &s.signal,
        &s.truth,
        &s.start,
        e.horizon,
        e.step,
        ctx.seed,
    )?;
    let file = ctx.run.write_trajectory("trajectory", &traj, ctx.format)?;
    #[derive(Serialize)]
    struct Out {
        file: String,
        rows: usize,
        columns: Vec<String>,
        step: f64,
        horizon: f64,
    }
    ctx.report(
        "simulate",
        Out {
            file: file.display().to_string(),
            rows: traj.rows(),
            columns: traj.labels(),
            step: traj.step(),
            horizon: traj.horizon(),
        },
    )?;
    Ok(Outcome::Pass)
}

pub fn reconstruct(ctx: &Context) -> Result<Outcome> {
    let s = ctx.setup()?;
    let input = ctx
        .input()
        .ok_or_else(|| anyhow!(ConfigError("reconstruct needs experiment.input".into())))??;
    let x = input.block(Role::X).context("the input has no X columns")?;
    let full = reconstruct_yz(s.model.as_ref(), &x, &s.start)?;
    let file = ctx
        .run
        .write_trajectory("reconstructed", &full, ctx.format)?;
    #[derive(Serialize)]
    struct Out {
        file: String,
        rows: usize,
        columns: Vec<String>,
    }
    ctx.report(
        "reconstruct",
        Out {
            file: file.display().to_string(),
            rows: full.rows(),
            columns: full.labels(),
        },
    )?;
    Ok(Outcome::Pass)
}

pub fn loglik(ctx: &Context) -> Result<Outcome> {
    let s = ctx.setup()?;
    let e = &ctx.cfg().experiment;
    let path = ctx.external_path(&s, e.horizon)?;
    let alt = if e.alt_theta.is_some() || e.alt_period.is_some() {
        ParamPoint::new(
            e.alt_theta
                .clone()
                .unwrap_or_else(|| s.truth.theta().to_vec()),
            e.alt_period.unwrap_or(s.truth.period()),
        )?
    } else {
        lan::local_parameter(&s.truth, &ctx.cfg().direction(), path.horizon())?
    };
    let r = likelihood::log_likelihood_ratio(&path, s.model.as_ref(), &s.signal, &alt, &s.truth)?;
    #[derive(Serialize)]
    struct Out {
        alternative: ParamPoint,
        reference: ParamPoint,
        horizon: f64,
        log_lr: likelihood::LogLikelihoodRatio,
    }
    ctx.report(
        "loglik",
        Out {
            alternative: alt,
            reference: s.truth.clone(),
            horizon: path.horizon(),
            log_lr: r,
        },
    )?;
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct FisherSummary {
    source: &'static str,
    information: FisherMatrix,
    derivative: FisherMatrix,
    information_eigenvalues: Vec<f64>,
    derivative_eigenvalues: Vec<f64>,
    s5prime: lan_diffusion::fisher::S5PrimeReport,
}

fn summarize(blocks: &BlockEstimate, source: &'static str, t: f64) -> FisherSummary {
    let (information, derivative) = (blocks.fisher(t), blocks.fisher_derivative(t));
    FisherSummary {
        source,
        information_eigenvalues: information.eigenvalues(),
        derivative_eigenvalues: derivative.eigenvalues(),
        s5prime: check_s5prime(&information, &derivative, S5PRIME_TOL),
        information,
        derivative,
    }
}

fn fourier_verdict(
    cfg: &Config,
    theta: &[f64],
) -> Result<Option<lan_diffusion::fisher::FourierInvertibility>> {
    Ok(match cfg.signal.preset {
        SignalPreset::Fourier => Some(check_fourier_invertibility(theta)?),
        _ => None,
    })
}

pub fn fisher(ctx: &Context) -> Result<Outcome> {
    let s = ctx.setup()?;
    let t = ctx.cfg().experiment.horizon;
    let path = ctx.external_path(&s, ctx.cfg().fisher_horizon())?;
    let pc = PathContext::new(s.model.as_ref(), &path)?;
    let blocks = BlockEstimate::from_path(
        &pc,
        &s.signal,
        &s.truth,
        ctx.cfg().fisher_horizon().min(path.horizon()),
    )?;
    let estimate = summarize(&blocks, "ergodic", t);
    let oracle = if s.model.constant_sigma() {
        let w = constant_precision(s.model.as_ref())?;
        Some(summarize(&l2_blocks(&s.signal, &s.truth, &w)?, "oracle", t))
    } else {
        None
    };
    #[derive(Serialize)]
    struct Out {
        t: f64,
        estimate: FisherSummary,
        oracle: Option<FisherSummary>,
        fourier_inequalities: Option<lan_diffusion::fisher::FourierInvertibility>,
    }
    let fourier_inequalities = fourier_verdict(ctx.cfg(), s.truth.theta())?;
    ctx.report(
        "fisher",
        Out {
            t,
            estimate,
            oracle,
            fourier_inequalities,
        },
    )?;
    Ok(Outcome::Pass)
}

pub fn lan_single(ctx: &Context) -> Result<Outcome> {
    let s = ctx.setup()?;
    let n = ctx.cfg().experiment.n;
    let h = ctx.cfg().direction();
    let path = ctx.external_path(&s, n)?;
    let d = lan::lan_decomposition(
        &path,
        s.model.as_ref(),
        &s.signal,
        &s.truth,
        &h,
        n,
        &ctx.fisher_source(&s)?,
    )?;
    let mut header = vec!["n".to_string()];
    header.extend(param_header("h_", s.truth.dim()));
    header.extend(["log_lr", "linear_term", "quadratic_term", "remainder"].map(String::from));
    let row: Vec<String> = cells([d.n].into_iter().chain(d.h.iter().copied()).chain([
        d.log_lr,
        d.linear_term,
        d.quadratic_term,
        d.remainder,
    ]))
    .collect();
    ctx.run.write_table("lan.csv", &header, &[row])?;
    ctx.report("lan", d)?;
    Ok(Outcome::Pass)
}

pub fn score_cov(ctx: &Context) -> Result<Outcome> {
    let s = ctx.setup()?;
    let e = &ctx.cfg().experiment;
    let reference = ctx.reference_fisher(&s)?;
    let r = lan::score_covariance_experiment(
        &ctx.experiment(&s),
        e.n,
        e.replications,
        ctx.seed,
        &reference,
    )?;
    let mut header = vec!["replication".to_string()];
    header.extend(param_header("score_", s.truth.dim()));
    let rows: Vec<Vec<String>> = r
        .scores
        .iter()
        .enumerate()
        .map(|(i, sc)| {
            std::iter::once(i.to_string())
                .chain(cells(sc.iter().copied()))
                .collect()
        })
        .collect();
    ctx.run.write_table("scores.csv", &header, &rows)?;
    ctx.report("score-cov", r)?;
    Ok(Outcome::Pass)
}

pub fn remainder(ctx: &Context) -> Result<Outcome> {
    let s = ctx.setup()?;
    let e = &ctx.cfg().experiment;
    let r = lan::remainder_decay_experiment(
        &ctx.experiment(&s),
        &ctx.cfg().direction(),
        &e.n_list,
        e.replications,
        ctx.seed,
        &ctx.fisher_source(&s)?,
    )?;
    let header = [
        "replication",
        "n",
        "log_lr",
        "linear_term",
        "quadratic_term",
        "remainder",
    ]
    .map(String::from);
    let rows: Vec<Vec<String>> = r
        .decompositions
        .iter()
        .enumerate()
        .flat_map(|(i, ds)| {
            ds.iter().map(move |d| {
                std::iter::once(i.to_string())
                    .chain(cells([
                        d.n,
                        d.log_lr,
                        d.linear_term,
                        d.quadratic_term,
                        d.remainder,
                    ]))
                    .collect()
            })
        })
        .collect();
    ctx.run.write_table("remainders.csv", &header, &rows)?;
    ctx.report("remainder", r)?;
    Ok(Outcome::Pass)
}

pub fn mle(ctx: &Context) -> Result<Outcome> {
    let s = ctx.setup()?;
    let n = ctx.cfg().experiment.n;
    let path = ctx.external_path(&s, n)?;
    let r = lan::mle_joint(&path, s.model.as_ref(), &s.signal, &s.truth, &ctx.search())?;
    let mut header = param_header("", s.truth.dim());
    header.extend(["log_lr", "at_boundary"].map(String::from));
    let row: Vec<String> = cells(r.estimate.to_vec())
        .chain([r.log_lr.to_string(), r.at_boundary.to_string()])
        .collect();
    ctx.run.write_table("mle.csv", &header, &[row])?;
    ctx.report("mle", r)?;
    Ok(Outcome::Pass)
}

pub fn rates(ctx: &Context) -> Result<Outcome> {
    let s = ctx.setup()?;
    let e = &ctx.cfg().experiment;
    let r = lan::rate_experiment(
        &ctx.experiment(&s),
        &e.n_list,
        e.replications,
        ctx.seed,
        &ctx.search(),
    )?;
    let mut header = vec!["replication".to_string(), "n".to_string(), "ok".to_string()];
    header.extend(param_header("", s.truth.dim()));
    let width = s.truth.dim() + 1;
    let mut rows = Vec::new();
    for (i, per_n) in r.estimates.iter().enumerate() {
        for (est, n) in per_n.iter().zip(&e.n_list) {
            let mut row = vec![i.to_string(), n.to_string(), est.is_some().to_string()];
            match est {
                Some(v) => row.extend(cells(v.iter().copied())),
                None => row.extend(std::iter::repeat_n(String::new(), width)),
            }
            rows.push(row);
        }
    }
    ctx.run.write_table("estimates.csv", &header, &rows)?;
    ctx.report("rates", r)?;
    Ok(Outcome::Pass)
}

#[derive(Debug, Serialize)]
struct Verdict {
    check: &'static str,
    passed: bool,
    detail: String,
}

pub fn check(ctx: &Context) -> Result<Outcome> {
    let s = ctx.setup()?;
    let e = &ctx.cfg().experiment;
    let mut verdicts = Vec::new();

    let path = ctx.external_path(&s, e.horizon)?;
    let samples: Vec<Vec<f64>> = (0..path.rows())
        .step_by(ELLIPTICITY_STRIDE)
        .map(|k| path.row(k).to_vec())
        .collect();
    let ell = check_ellipticity(s.model.as_ref(), &samples)?;
    verdicts.push(Verdict {
        check: "A2 ellipticity",
        passed: ell.sigma0_hat > 0.0 && ell.quadratic_bounds_hold && ell.bounds_uniform,
        detail: format!(
            "eigenvalues of sigma sigma^T in [{:.6}, {:.6}] over {} states",
            ell.sigma0_hat, ell.sigma_inf_hat, ell.samples
        ),
    });

    let deltas = shrinking_displacements(s.truth.dim(), L2_DISPLACEMENTS, 0.1);
    let l2 = check_l2_differentiability(&s.signal, &s.truth, s.truth.period(), &deltas, L2_TOL)?;
    verdicts.push(Verdict {
        check: "S2 L2 differentiability",
        passed: l2.passed,
        detail: format!(
            "final quotient {:.3e} (tol {L2_TOL:e})",
            l2.ratios.last().copied().unwrap_or(f64::NAN)
        ),
    });

    let gram = check_linear_independence(&s.signal, s.truth.theta(), GRAM_POINTS)?;
    verdicts.push(Verdict {
        check: "S5 linear independence",
        passed: gram.independent,
        detail: format!(
            "Gram eigenvalues in [{:.6e}, {:.6e}]",
            gram.min_eigenvalue, gram.max_eigenvalue
        ),
    });

    let (blocks, source) = ctx.blocks(&s)?;
    let sp = summarize(&blocks, source, e.horizon).s5prime;
    verdicts.push(Verdict {
        check: "S5' invertibility",
        passed: sp.passed,
        detail: format!(
            "{source}: min eigenvalues {:.6e} (information), {:.6e} (derivative)",
            sp.min_eigenvalue_information, sp.min_eigenvalue_derivative
        ),
    });

    if let Some(f) = fourier_verdict(ctx.cfg(), s.truth.theta())? {
        verdicts.push(Verdict {
            check: "Fourier inequalities",
            passed: f.passed,
            detail: format!(
                "lhs {:.6} vs {:.6} (alpha 3), {:.6} (alpha 4)",
                f.lhs, f.rhs[0], f.rhs[1]
            ),
        });
    }

    let table: String = verdicts
        .iter()
        .map(|v| {
            format!(
                "{:<26} {:<5} {}\n",
                v.check,
                if v.passed { "PASS" } else { "FAIL" },
                v.detail
            )
        })
        .collect();
    ctx.run.write_json(
        "report-check.json",
        &Report {
            command: "check",
            seed: ctx.seed,
            run_dir: ctx.run.path.display().to_string(),
            config: ctx.cfg(),
            result: &verdicts,
        },
    )?;
    write!(std::io::stdout(), "{table}")?;
    let failed: Vec<&str> = verdicts
        .iter()
        .filter(|v| !v.passed)
        .map(|v| v.check)
        .collect();
    Ok(if failed.is_empty() {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("failed checks: {}", failed.join(", ")))
    })
}
