//! The five verbs. Each writes its artifacts plus manifest.json and
//! timing.json into the output directory and returns a one-line summary.

use std::path::Path;

use resilience_core::inference::{bootstrap_with_context, PreconditionInput};
use resilience_core::rng::tag;
use resilience_core::simharness::{run_study, SimulationRow, StatisticSummary};
use resilience_core::{
    check_preconditions, estimate, resilience_set, AnalysisContext, Arm, DrawScheme,
    PerturbationClass, PreconditionReport, ResampleScope, SeedRecord, StudyAData, StudyBData,
};
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, SimulateConfig};
use crate::error::{CliError, Result};
use crate::io::{digest_input, load_study_a, load_study_b, Artifacts};
use crate::manifest::{RunManifest, Timing, MANIFEST_FILE, TIMING_FILE};

pub const REPORT_FILE: &str = "report.json";
pub const DELTAS_FILE: &str = "deltas.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const BOUNDARY_FILE: &str = "boundary.csv";
pub const SET_FILE: &str = "resilience_set.json";
pub const BOOTSTRAP_FILE: &str = "bootstrap.json";
pub const REPLICATES_FILE: &str = "bootstrap_replicates.csv";
pub const TABLE2_FILE: &str = "table2.csv";
pub const TABLE_A1_FILE: &str = "tableA1.csv";
pub const FIGURE4_FILE: &str = "figure4.csv";
pub const SIMULATION_FILE: &str = "simulation.json";

/// Points on the display grid of curves.csv.
pub const CURVE_GRID_POINTS: usize = 200;
/// Perturbed curve pairs written to curves.csv.
pub const CURVE_COUNT: usize = 100;

/// Loaded inputs, fitted context and the manifest of an analysis run.
struct Prepared {
    study_a: StudyAData,
    ctx: AnalysisContext,
    class: PerturbationClass,
    preconditions: PreconditionReport,
    manifest: RunManifest,
    out: Artifacts,
}

fn prepare(
    command: &str,
    cfg: &AnalysisConfig,
    study_a: &Path,
    study_b: &Path,
    out: &Path,
) -> Result<Prepared> {
    cfg.validate()?;
    let class = cfg.class()?;
    let a = load_study_a(study_a)?;
    let b = load_study_b(study_b)?;
    let inputs = vec![
        digest_input("study_a", study_a)?,
        digest_input("study_b", study_b)?,
    ];
    let preconditions = check_preconditions(&PreconditionInput::from_studies(&a, &b));
    let ctx = AnalysisContext::new(&a, b, &cfg.smoother())?;
    let mut warnings = preconditions.warnings.clone();
    for arm in Arm::BOTH {
        let f = ctx.extrapolated_fraction(arm);
        if f > 0.0 {
            warnings.push(format!(
                "{:.1}% of Study B {} surrogates have no Study A point within the smoothing window",
                100.0 * f,
                arm.name()
            ));
        }
    }
    let manifest = RunManifest::new(command, cfg, inputs, warnings);
    let out = Artifacts::create(out, manifest.digest())?;
    out.write_json(MANIFEST_FILE, &manifest)?;
    Ok(Prepared {
        study_a: a,
        ctx,
        class,
        preconditions,
        manifest,
        out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub scope: ResampleScope,
    pub draws: DrawScheme,
    pub se_p: f64,
    pub se_q: f64,
}

/// Contents of report.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub manifest_sha256: String,
    pub manifest: RunManifest,
    pub class: PerturbationClass,
    pub alpha: f64,
    pub draws: usize,
    /// Plug-in Study B effect on the outcome at the Study A fits.
    pub delta_hat: f64,
    /// Study B effect on the surrogate.
    pub delta_sb_hat: Option<f64>,
    pub p_hat: f64,
    pub q_alpha_hat: f64,
    pub mu_b: f64,
    pub sigma_b2: f64,
    pub p_closed: f64,
    pub q_closed: f64,
    pub se_p: Option<f64>,
    pub se_q: Option<f64>,
    pub bootstrap: Option<BootstrapSummary>,
    /// Smoothing bandwidths, control then treated.
    pub bandwidth: [f64; 2],
    /// Share of Study B points outside the smoothing window, control then treated.
    pub extrapolated_fraction: [f64; 2],
    pub warnings: Vec<String>,
}

fn curve_grid(b: &StudyBData) -> Vec<f64> {
    let pooled = b
        .surrogates(Arm::Control)
        .iter()
        .chain(b.surrogates(Arm::Treated));
    let (lo, hi) = pooled.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
        (lo.min(s), hi.max(s))
    });
    let last = (CURVE_GRID_POINTS - 1) as f64;
    (0..CURVE_GRID_POINTS)
        .map(|i| {
            if i == CURVE_GRID_POINTS - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / last
            }
        })
        .collect()
}

/// kind, draw, arm, s, mu, negative_effect
type CurveRow<'a> = (&'a str, Option<usize>, &'a str, f64, f64, Option<bool>);

pub fn analyze(cfg: &AnalysisConfig, study_a: &Path, study_b: &Path, out: &Path) -> Result<String> {
    let mut timing = Timing::start("analyze", cfg.workers);
    let p = prepare("analyze", cfg, study_a, study_b, out)?;
    timing.lap("load_and_fit");

    let seed = SeedRecord::root(cfg.seed);
    let draw_seed = seed.child(tag::ESTIMATE);
    let est = estimate(&p.ctx, &p.class, &cfg.estimate(), &draw_seed)?;
    timing.lap("estimate");

    let boot = match cfg.bootstrap() {
        Some(b) => {
            let r = bootstrap_with_context(&p.ctx, &p.study_a, &p.class, &b, &seed)?;
            Some(BootstrapSummary {
                replicates: r.b,
                scope: r.scope,
                draws: b.draws,
                se_p: r.se_p,
                se_q: r.se_q,
            })
        }
        None => None,
    };
    timing.lap("bootstrap");

    let grid = curve_grid(p.ctx.study_b());
    let count = CURVE_COUNT.min(cfg.draws);
    let curves = p
        .ctx
        .sample_curves(&p.class, [&grid, &grid], count, &draw_seed)?;
    let deltas = est.distribution.deltas();
    let fits = Arm::BOTH.map(|arm| p.ctx.fit(arm).evaluate_many(&grid));
    let mut rows: Vec<CurveRow> = Vec::new();
    for arm in Arm::BOTH {
        for (s, m) in grid.iter().zip(&fits[arm.index()]) {
            rows.push(("fit", None, arm.name(), *s, *m, None));
        }
    }
    for (j, c) in curves.iter().enumerate() {
        for arm in Arm::BOTH {
            let values = if arm == Arm::Control {
                &c.control
            } else {
                &c.treated
            };
            for (s, m) in grid.iter().zip(values) {
                rows.push(("draw", Some(j), arm.name(), *s, *m, Some(deltas[j] < 0.0)));
            }
        }
    }
    p.out.write_csv(
        CURVES_FILE,
        &["kind", "draw", "arm", "s", "mu", "negative_effect"],
        rows,
    )?;
    p.out
        .write_csv(DELTAS_FILE, &["draw", "delta"], deltas.iter().enumerate())?;

    let r = &est.report;
    let report = AnalysisReport {
        manifest_sha256: p.out.digest().into(),
        manifest: p.manifest.clone(),
        class: p.class.clone(),
        alpha: r.alpha,
        draws: r.draws,
        delta_hat: p.ctx.delta_hat(),
        delta_sb_hat: p.preconditions.delta_sb_hat,
        p_hat: r.p_hat,
        q_alpha_hat: r.q_alpha_hat,
        mu_b: r.closed_form.mu_b,
        sigma_b2: r.closed_form.sigma_b2,
        p_closed: r.p_closed,
        q_closed: r.q_closed,
        se_p: boot.as_ref().map(|b| b.se_p),
        se_q: boot.as_ref().map(|b| b.se_q),
        bootstrap: boot,
        bandwidth: Arm::BOTH.map(|arm| p.ctx.fit(arm).bandwidth()),
        extrapolated_fraction: Arm::BOTH.map(|arm| p.ctx.extrapolated_fraction(arm)),
        warnings: p.manifest.warnings.clone(),
    };
    p.out.write_json(REPORT_FILE, &report)?;
    timing.lap("write");
    p.out.write_json(TIMING_FILE, &timing)?;

    let se = |v: Option<f64>| v.map_or(String::new(), |s| format!(" (SE {s:.4})"));
    Ok(format!(
        "p_hat = {:.4}{}, q_hat({}) = {:.4}{}; closed form p = {:.4}, q = {:.4}",
        report.p_hat,
        se(report.se_p),
        report.alpha,
        report.q_alpha_hat,
        se(report.se_q),
        report.p_closed,
        report.q_closed
    ))
}

/// Contents of resilience_set.json; the grid and boundary are in the CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub manifest_sha256: String,
    pub x_name: String,
    pub y_name: String,
    pub alpha: f64,
    pub grid_points: usize,
    pub members: usize,
    pub boundary_points: usize,
    pub empty: bool,
}

pub fn resilience_set_cmd(
    cfg: &AnalysisConfig,
    study_a: &Path,
    study_b: &Path,
    out: &Path,
) -> Result<String> {
    let mut timing = Timing::start("resilience-set", cfg.workers);
    let p = prepare("resilience-set", cfg, study_a, study_b, out)?;
    timing.lap("load_and_fit");
    let set = resilience_set(
        &p.ctx,
        &p.class,
        &cfg.grid(),
        cfg.alpha,
        cfg.set_mode(),
        &SeedRecord::root(cfg.seed),
    )?;
    timing.lap("grid_and_boundary");

    let (x, y) = (set.x_name.as_str(), set.y_name.as_str());
    p.out.write_csv(
        GRID_FILE,
        &[x, y, "q_alpha", "member"],
        set.grid_points.iter().map(|g| (g.x, g.y, g.q, g.member)),
    )?;
    p.out.write_csv(
        BOUNDARY_FILE,
        &[x, y],
        set.boundary.iter().map(|b| (b.x, b.y)),
    )?;
    let members = set.grid_points.iter().filter(|g| g.member).count();
    let summary = SetSummary {
        manifest_sha256: p.out.digest().into(),
        x_name: set.x_name.clone(),
        y_name: set.y_name.clone(),
        alpha: set.alpha,
        grid_points: set.grid_points.len(),
        members,
        boundary_points: set.boundary.len(),
        empty: set.empty,
    };
    p.out.write_json(SET_FILE, &summary)?;
    timing.lap("write");
    p.out.write_json(TIMING_FILE, &timing)?;
    Ok(format!(
        "{members} of {} grid points have q_hat >= 0; {} boundary points",
        summary.grid_points, summary.boundary_points
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub manifest_sha256: String,
    pub p_hat: f64,
    pub q_alpha_hat: f64,
    pub alpha: f64,
    pub bootstrap: BootstrapSummary,
}

pub fn bootstrap_cmd(
    cfg: &AnalysisConfig,
    study_a: &Path,
    study_b: &Path,
    out: &Path,
) -> Result<String> {
    let Some(bcfg) = cfg.bootstrap() else {
        return Err(CliError::Config(
            "bootstrap_replicates must be at least 2".into(),
        ));
    };
    let mut timing = Timing::start("bootstrap", cfg.workers);
    let p = prepare("bootstrap", cfg, study_a, study_b, out)?;
    timing.lap("load_and_fit");
    let seed = SeedRecord::root(cfg.seed);
    let est = estimate(
        &p.ctx,
        &p.class,
        &cfg.estimate(),
        &seed.child(tag::ESTIMATE),
    )?;
    let r = bootstrap_with_context(&p.ctx, &p.study_a, &p.class, &bcfg, &seed)?;
    timing.lap("bootstrap");
    p.out.write_csv(
        REPLICATES_FILE,
        &["replicate", "p_hat", "q_alpha_hat"],
        r.replicates
            .iter()
            .enumerate()
            .map(|(b, x)| (b, x.p_hat, x.q_alpha_hat)),
    )?;
    let report = BootstrapReport {
        manifest_sha256: p.out.digest().into(),
        p_hat: est.report.p_hat,
        q_alpha_hat: est.report.q_alpha_hat,
        alpha: cfg.alpha,
        bootstrap: BootstrapSummary {
            replicates: r.b,
            scope: r.scope,
            draws: bcfg.draws,
            se_p: r.se_p,
            se_q: r.se_q,
        },
    };
    p.out.write_json(BOOTSTRAP_FILE, &report)?;
    p.out.write_json(TIMING_FILE, &timing)?;
    Ok(format!(
        "SE(p_hat) = {:.4}, SE(q_hat) = {:.4} over {} replicates",
        r.se_p, r.se_q, r.b
    ))
}

/// Precondition report as JSON text; nothing is written to disk.
pub fn check(study_a: &Path, study_b: &Path) -> Result<String> {
    let a = load_study_a(study_a)?;
    let b = load_study_b(study_b)?;
    let report = check_preconditions(&PreconditionInput::from_studies(&a, &b));
    Ok(serde_json::to_string_pretty(&report).expect("report serializes"))
}

type TableRow<'a> = (
    u8,
    &'a str,
    &'a str,
    &'static str,
    usize,
    usize,
    Option<f64>,
    f64,
    Option<f64>,
    f64,
    Option<f64>,
    f64,
    f64,
    f64,
    f64,
);

const TABLE_HEADER: [&str; 15] = [
    "setting",
    "description",
    "estimator",
    "statistic",
    "replications",
    "failures",
    "truth",
    "estimate",
    "truth_minus_estimate",
    "ese",
    "ase",
    "published_truth",
    "published_estimate",
    "published_ese",
    "published_ase",
];

fn table_rows<'a>(rows: &[&'a SimulationRow]) -> Vec<TableRow<'a>> {
    let mut out = Vec::new();
    for r in rows {
        let published = &r.published;
        let stats: [(&'static str, &StatisticSummary, [f64; 3]); 2] = [
            (
                "p",
                &r.p,
                [published.p_estimate, published.p_ese, published.p_ase],
            ),
            (
                "q",
                &r.q,
                [published.q_estimate, published.q_ese, published.q_ase],
            ),
        ];
        for (name, s, [pe, pese, pase]) in stats {
            out.push((
                r.setting_id,
                r.description.as_str(),
                r.estimator.as_str(),
                name,
                r.replications,
                r.failures,
                s.truth,
                s.mean,
                s.truth_minus_estimate,
                s.ese,
                s.ase,
                s.published_truth,
                pe,
                pese,
                pase,
            ));
        }
    }
    out
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> Result<String> {
    cfg.validate()?;
    let mut timing = Timing::start("simulate", cfg.workers);
    let manifest = RunManifest::new("simulate", cfg, Vec::new(), Vec::new());
    let out = Artifacts::create(out, manifest.digest())?;
    out.write_json(MANIFEST_FILE, &manifest)?;

    let report = run_study(&cfg.entries()?, &cfg.study(), &SeedRecord::root(cfg.seed))?;
    timing.lap("study");

    let (mis, matched): (Vec<&SimulationRow>, Vec<&SimulationRow>) =
        report.rows.iter().partition(|r| r.misspecified);
    out.write_csv(TABLE2_FILE, &TABLE_HEADER, table_rows(&matched))?;
    out.write_csv(TABLE_A1_FILE, &TABLE_HEADER, table_rows(&mis))?;
    let mut fig = Vec::new();
    for r in &report.rows {
        for (name, s) in [("p", &r.p), ("q", &r.q)] {
            let covers = s.truth.map(|t| s.lower_2_5 <= t && t <= s.upper_97_5);
            fig.push((
                r.setting_id,
                r.estimator.as_str(),
                r.misspecified,
                name,
                s.mean,
                s.lower_2_5,
                s.upper_97_5,
                s.truth,
                s.published_truth,
                covers,
            ));
        }
    }
    out.write_csv(
        FIGURE4_FILE,
        &[
            "setting",
            "estimator",
            "misspecified",
            "statistic",
            "mean",
            "lower_2_5",
            "upper_97_5",
            "truth",
            "published_truth",
            "covers_truth",
        ],
        fig,
    )?;
    out.write_json(SIMULATION_FILE, &report)?;
    timing.lap("write");
    out.write_json(TIMING_FILE, &timing)?;
    Ok(format!(
        "{} entries x {} replications written",
        report.rows.len(),
        cfg.replications
    ))
}
