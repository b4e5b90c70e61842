//! End-to-end runs: data → posterior → the four tests per hypothesis → report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fbst_core::fbst::{
    test_linear_finite, test_linear_infinite, test_pragmatic_finite, test_pragmatic_infinite,
};
use fbst_core::gp::{collapse, draw_paths, posterior};
use fbst_core::measure::{dp_predictive, finite_uniform};
use fbst_core::{
    BaseMeasure, CovariateMeasure, FbstOutcome, GpPosterior, LinearBasis, Matrix, Points,
    PragmaticSpec,
};

use crate::config::{EpsilonSpec, MeasureSpec, ResolvedConfig};
use crate::dataset::{load_dataset, parse_dataset, Dataset, BUNDLED_DROPLET};
use crate::error::{CliError, Result};
use crate::stokes::{stokes_threshold, StokesThreshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainAssumption {
    Finite,
    Infinite,
}

impl DomainAssumption {
    pub fn label(&self) -> &'static str {
        match self {
            DomainAssumption::Finite => "finite",
            DomainAssumption::Infinite => "infinite",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalueRow {
    pub hypothesis: String,
    pub domain: DomainAssumption,
    pub pragmatic: bool,
    pub outcome: FbstOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epsilon {
    pub value: f64,
    pub stokes: Option<StokesThreshold>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ResolvedConfig,
    pub n_records: usize,
    pub finite_domain: Points,
    pub epsilon: Epsilon,
    pub rows: Vec<EvalueRow>,
    pub draw_grid: Points,
    pub prior_paths: Matrix,
    pub posterior_paths: Matrix,
}

impl RunReport {
    pub fn find(&self, hypothesis: &str, domain: DomainAssumption, pragmatic: bool) -> Option<&FbstOutcome> {
        self.rows
            .iter()
            .find(|r| r.hypothesis == hypothesis && r.domain == domain && r.pragmatic == pragmatic)
            .map(|r| &r.outcome)
    }
}

/// Data named by the configuration; the droplet preset falls back to the
/// bundled fixture.
pub fn load_for(cfg: &ResolvedConfig) -> Result<Dataset> {
    match cfg.data.strip_prefix("bundled:") {
        Some(_) => parse_dataset(BUNDLED_DROPLET),
        None => load_dataset(Path::new(&cfg.data)),
    }
}

pub fn run_droplet(cfg: &ResolvedConfig) -> Result<RunReport> {
    run_with_data(cfg, &load_for(cfg)?)
}

pub fn run_custom(cfg: &ResolvedConfig) -> Result<RunReport> {
    run_with_data(cfg, &load_for(cfg)?)
}

pub fn finite_domain(cfg: &ResolvedConfig, data: &Dataset) -> Result<Points> {
    match cfg.domain {
        Some(d) => {
            if data.x.dim() != 1 {
                return Err(CliError::Config(
                    "a regular domain grid needs one covariate; omit 'domain' to use the design rows".into(),
                ));
            }
            Ok(Points::regular_grid(d.start, d.stop, d.step)?)
        }
        None => Ok(collapse(&data.x, &data.y)?.unique_rows),
    }
}

pub fn resolve_epsilon(cfg: &ResolvedConfig, data: &Dataset, domain_size: usize) -> Result<Epsilon> {
    match cfg.pragmatic.epsilon {
        EpsilonSpec::Value(value) => Ok(Epsilon { value, stokes: None }),
        EpsilonSpec::Stokes => {
            let th = stokes_from_data(cfg, data, domain_size)?;
            if !(th.eps_l2 > 0.0) {
                return Err(CliError::Data("derived epsilon is zero; pass --epsilon".into()));
            }
            Ok(Epsilon {
                value: th.eps_l2,
                stokes: Some(th),
            })
        }
    }
}

pub fn stokes_from_data(cfg: &ResolvedConfig, data: &Dataset, domain_size: usize) -> Result<StokesThreshold> {
    let v = data
        .v_mean
        .as_ref()
        .ok_or_else(|| CliError::Data("no v_mean column to derive epsilon from; pass --epsilon".into()))?;
    stokes_threshold(
        &data.x.first_coords(),
        v,
        &data.y,
        &cfg.stokes.params,
        cfg.stokes.n.unwrap_or(domain_size),
    )
}

fn infinite_measure(cfg: &ResolvedConfig, data: &Dataset, xstar: &Points) -> Result<CovariateMeasure> {
    Ok(match cfg.measure() {
        MeasureSpec::Uniform => finite_uniform(xstar)?,
        MeasureSpec::Dp { tau, lo, hi } => {
            if data.x.iter().any(|x| x[0] < lo || x[0] > hi) {
                log::warn!("observations fall outside the base range [{lo}, {hi}]");
            }
            dp_predictive(
                tau,
                &data.x,
                &BaseMeasure::Continuous {
                    label: format!("U({lo},{hi})"),
                },
            )?
        }
    })
}

pub fn draw_grid(cfg: &ResolvedConfig, domain: &Points) -> Points {
    if domain.dim() != 1 {
        return domain.clone();
    }
    let t = domain.first_coords();
    let (lo, hi) = t
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let m = cfg.draws.grid_points;
    if lo == hi {
        return Points::from_scalars(&[lo]);
    }
    let step = (hi - lo) / (m - 1) as f64;
    Points::from_scalars(&(0..m).map(|i| if i + 1 == m { hi } else { lo + i as f64 * step }).collect::<Vec<_>>())
}

/// Prior and posterior paths on the dense plotting grid. Prior paths use
/// `seed`, posterior paths `seed + 1`.
pub fn draws(cfg: &ResolvedConfig, data: &Dataset, grid: &Points) -> Result<(Matrix, Matrix)> {
    let prior = cfg.gp_prior()?;
    let pri = GpPosterior::prior_on(&prior, grid);
    let post = posterior(&prior, &data.x, &data.y, grid)?;
    Ok((
        draw_paths(&pri, cfg.draws.count, cfg.seed)?,
        draw_paths(&post, cfg.draws.count, cfg.seed.wrapping_add(1))?,
    ))
}

pub fn run_with_data(cfg: &ResolvedConfig, data: &Dataset) -> Result<RunReport> {
    let data = data.canonical();
    if data.is_empty() {
        return Err(CliError::EmptyDataset);
    }
    let prior = cfg.gp_prior()?;
    let domain = finite_domain(cfg, &data)?;
    let collapsed = collapse(&data.x, &data.y)?;
    let xstar = collapsed.unique_rows.clone();
    let epsilon = resolve_epsilon(cfg, &data, domain.len())?;

    let post_domain = posterior(&prior, &data.x, &data.y, &domain)?;
    let post_xstar = posterior(&prior, &data.x, &data.y, &xstar)?;
    let finite_w = finite_uniform(&domain)?;
    let infinite_w = infinite_measure(cfg, &data, &xstar)?;
    let bases: Vec<LinearBasis> = cfg.bases(data.x.dim())?;

    let mut rows = Vec::new();
    for (name, b) in cfg.hypotheses.iter().zip(&bases) {
        let fin = PragmaticSpec::new(epsilon.value, finite_w.clone(), b.clone())?;
        let inf = PragmaticSpec::new(epsilon.value, infinite_w.clone(), b.clone())?;
        let outcomes = [
            (DomainAssumption::Finite, false, test_linear_finite(&post_domain, b, cfg.alpha)?),
            (
                DomainAssumption::Infinite,
                false,
                test_linear_infinite(&collapsed, &post_xstar, b, cfg.alpha)?,
            ),
            (DomainAssumption::Finite, true, test_pragmatic_finite(&post_domain, &fin, cfg.alpha)?),
            (
                DomainAssumption::Infinite,
                true,
                test_pragmatic_infinite(&collapsed, &post_xstar, &inf, cfg.alpha)?,
            ),
        ];
        for (domain, pragmatic, outcome) in outcomes {
            log::info!(
                "{name} {} pragmatic={pragmatic}: e = {:.6}",
                domain.label(),
                outcome.e_value
            );
            rows.push(EvalueRow {
                hypothesis: name.clone(),
                domain,
                pragmatic,
                outcome,
            });
        }
    }

    let grid = draw_grid(cfg, &domain);
    let (prior_paths, posterior_paths) = draws(cfg, &data, &grid)?;
    Ok(RunReport {
        config: cfg.clone(),
        n_records: data.len(),
        finite_domain: domain,
        epsilon,
        rows,
        draw_grid: grid,
        prior_paths,
        posterior_paths,
    })
}

pub fn evalues_csv(report: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["hypothesis", "domain_assumption", "pragmatic", "statistic", "threshold", "e_value", "reject"])
        .expect("in-memory write");
    for r in &report.rows {
        let o = &r.outcome;
        w.write_record([
            r.hypothesis.clone(),
            r.domain.label().to_string(),
            r.pragmatic.to_string(),
            o.statistic.to_string(),
            o.threshold.to_string(),
            o.e_value.to_string(),
            o.reject.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn paths_csv(grid: &Points, paths: &Matrix) -> String {
    let mut out = String::new();
    let names: Vec<String> = (0..grid.dim()).map(|d| if grid.dim() == 1 { "t".into() } else { format!("x{}", d + 1) }).collect();
    out.push_str(&names.join(","));
    for p in 0..paths.rows() {
        let _ = write!(out, ",path_{:02}", p + 1);
    }
    out.push('\n');
    for (j, x) in grid.iter().enumerate() {
        let coords: Vec<String> = x.iter().map(f64::to_string).collect();
        out.push_str(&coords.join(","));
        for p in 0..paths.rows() {
            let _ = write!(out, ",{}", paths[(p, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn manifest(report: &RunReport) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "# fbst {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "records = {}", report.n_records);
    let _ = writeln!(m, "finite_domain_size = {}", report.finite_domain.len());
    let _ = writeln!(m, "epsilon_used = {}", report.epsilon.value);
    if let Some(s) = report.epsilon.stokes {
        let _ = writeln!(m, "stokes_eps_inf = {}", s.eps_inf);
        let _ = writeln!(m, "stokes_eps_l2 = {}", s.eps_l2);
        let _ = writeln!(m, "stokes_n = {}", s.n);
    }
    let _ = writeln!(m, "prior_paths_seed = {}", report.config.seed);
    let _ = writeln!(m, "posterior_paths_seed = {}", report.config.seed.wrapping_add(1));
    let _ = writeln!(m, "\n# resolved configuration");
    m.push_str(&report.config.to_toml());
    m
}

pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let files = [
        ("evalues.csv", evalues_csv(report)),
        ("paths_prior.csv", paths_csv(&report.draw_grid, &report.prior_paths)),
        ("paths_posterior.csv", paths_csv(&report.draw_grid, &report.posterior_paths)),
        ("manifest.txt", manifest(report)),
    ];
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io(&p))?;
    }
    Ok(())
}
