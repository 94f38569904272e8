//! The whole construction driven by one [`RunConfig`]: twist the short map,
//! build `u₀`, then run stages until `q_max` or the resolution guard.

mod config;
mod injectivity;
mod mesh;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{Constants, GridConfig, MapSpec, MetricSpec, RunConfig, Start, Tolerances, START_RADIUS};
pub use injectivity::{injectivity_check, Injectivity};
pub use mesh::{export_mesh, read_obj, triangulate, write_obj, Mesh};
pub use report::{convergence_report, log_bound_sequence, write_table_csv, ConvergenceRow, StageRecord};

use crate::conformal::{FactorizeOptions, SolveOptions};
use crate::corrugation::CorrugationProfile;
use crate::error::Result;
use crate::field::io::save_binary;
use crate::field::{hessian_sup, MapField, MetricField};
use crate::stage_corrugate::{
    interior_pullback, run_stage, FactorizationSummary, Mode, StageReport, StageSettings, StageState,
};
use crate::stage_nash::{build_u0, prepare_short, strict_shortness, ShortSettings, TwistReport, U0Attempt, U0Settings};

/// One named pass/fail line. Only `strict` checks decide the exit status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    pub strict: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, bound: f64, strict: bool) -> Self {
        Check {
            name: name.into(),
            measured,
            bound,
            pass: measured <= bound,
            strict,
        }
    }

    fn above(name: impl Into<String>, measured: f64, bound: f64, strict: bool) -> Self {
        Check {
            name: name.into(),
            measured,
            bound,
            pass: measured > bound,
            strict,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: measured {:.6e}, bound {:.6e}{}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.bound,
            if self.strict { "" } else { " (informational)" }
        )
    }
}

/// A map produced before the stage loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub label: String,
    pub radius: f64,
    pub defect_sup: f64,
    pub injectivity: Injectivity,
    pub distance: f64,
    pub mesh: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortSummary {
    pub delta_bar: f64,
    pub target: f64,
    pub defect_alpha: f64,
    pub target_met: bool,
    pub twists: Vec<TwistReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct U0Summary {
    pub target: f64,
    pub target_met: bool,
    /// Against `g − κδ₁e`.
    pub defect_sup: f64,
    pub hessian_sup: f64,
    pub chosen: U0Attempt,
    pub attempts: Vec<U0Attempt>,
    pub factorization: FactorizationSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectivityAudit {
    pub q: usize,
    pub far_change: f64,
    pub far_allowed: f64,
    pub local_change: f64,
    pub local_allowed: f64,
}

impl InjectivityAudit {
    pub fn pass(&self) -> bool {
        let slack = 1e-12;
        self.far_change <= self.far_allowed * (1.0 + 1e-9) + slack
            && self.local_change <= self.local_allowed * (1.0 + 1e-9) + slack
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub spacing: f64,
    pub beta: f64,
    pub beta_max: f64,
    pub kappa: f64,
    /// Absent when the run starts at the stages.
    pub short: Option<ShortSummary>,
    pub u0: Option<U0Summary>,
    /// `ū`, `ũ`, `u₀`, or just `u₀` when the run starts at the stages.
    pub preparation: Vec<MapSummary>,
    pub stages: Vec<StageReport>,
    pub table: Vec<ConvergenceRow>,
    pub audits: Vec<InjectivityAudit>,
    /// Why the stage loop ended before `q_max`, if it did.
    pub stopped: Option<String>,
    pub checks: Vec<Check>,
    pub meshes: Vec<PathBuf>,
    pub final_mesh: PathBuf,
}

impl RunReport {
    pub fn strict_pass(&self) -> bool {
        self.checks.iter().filter(|c| c.strict).all(|c| c.pass)
    }

    /// Sup defect of `u₀, u₁, …` against `g`.
    pub fn defect_column(&self) -> Vec<f64> {
        self.preparation
            .last()
            .map(|m| m.defect_sup)
            .into_iter()
            .chain(self.table.iter().map(|r| r.defect_sup))
            .collect()
    }
}

fn defect_vs_g(g: &MetricField, u: &MapField) -> Result<f64> {
    g.remask(u.grid().radius())?
        .sub(&interior_pullback(u)?)
        .map(|d| d.sup_norm())
}

fn distance(u: &MapField, u_bar: &MapField) -> Result<f64> {
    Ok(u.sub(&u_bar.remask(u.grid().radius())?)?.sup_norm())
}

struct Outputs<'a> {
    dir: &'a Path,
    meshes: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn save_map(&mut self, name: &str, u: &MapField) -> Result<PathBuf> {
        let mesh = self.dir.join(format!("{name}.obj"));
        export_mesh(u, &mesh)?;
        save_binary(u, &self.dir.join(format!("{name}.c1bf")))?;
        self.meshes.push(mesh.clone());
        Ok(mesh)
    }
}

/// Runs the configured construction and writes meshes, binary maps,
/// `report.json`, `convergence.csv` and `checks.txt` to the output
/// directory.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let grid = config.grid()?;
    let g = config.metric(grid)?;
    let u_bar = config.initial_map(grid)?;
    let schedule = &config.schedule;
    let tol = &config.tolerances;
    let k = &config.constants;
    let strict = config.mode == Mode::Strict;
    let profile = match k.s_max {
        Some(s_max) => CorrugationProfile::new().with_s_max(s_max)?,
        None => CorrugationProfile::new(),
    };
    fs::create_dir_all(&config.output_dir)?;
    let mut out = Outputs {
        dir: &config.output_dir,
        meshes: Vec::new(),
    };
    let factorize = FactorizeOptions {
        solve: SolveOptions {
            tol: tol.beltrami_tol,
            max_iter: tol.beltrami_max_iter,
        },
        sigma1: None,
    };
    let inj = |u: &MapField| injectivity_check(u, tol.injectivity_sep, tol.injectivity_samples);

    let mut stopped = None;
    let (kappa, start_maps, short, u0) = match config.start {
        Start::Stage { kappa } => (kappa, vec![("u0", u_bar.clone())], None, None),
        Start::Short => {
            let short_settings = ShortSettings {
                freq0: k.freq0,
                guard: tol.guard,
                alpha: schedule.alpha,
                mode: config.mode,
            };
            let delta_bar = strict_shortness(&g, &u_bar)?;
            let target = 0.5 * tol.sigma1 * delta_bar;
            let short = prepare_short(&g, &u_bar, target, tol.eps, &profile, &short_settings)?;
            let kappa = k.kappa_fraction * delta_bar / schedule.delta(1);
            let u0_settings = U0Settings {
                c1: k.c1,
                c2: k.c2,
                max_doublings: k.max_doublings,
                guard: tol.guard,
                mode: config.mode,
                factorize,
            };
            let built = match build_u0(&g, &short.u, delta_bar, schedule, kappa, &profile, &u0_settings) {
                Ok(u0) => Some(u0),
                Err(e) if !strict => {
                    stopped = Some(format!("u0: {e}"));
                    None
                }
                Err(e) => return Err(e),
            };
            let mut maps = vec![("ubar", u_bar.clone()), ("utilde", short.u)];
            let short = ShortSummary {
                delta_bar,
                target,
                defect_alpha: short.defect_alpha,
                target_met: short.target_met,
                twists: short.twists,
            };
            let u0 = built.map(|u0| {
                maps.push(("u0", u0.u0));
                U0Summary {
                    target: u0.target,
                    target_met: u0.target_met,
                    defect_sup: u0.defect_sup,
                    hessian_sup: u0.hessian_sup,
                    chosen: u0.chosen,
                    attempts: u0.attempts,
                    factorization: u0.factorization,
                }
            });
            (kappa, maps, Some(short), u0)
        }
    };

    let mut preparation = Vec::new();
    for (label, u) in &start_maps {
        preparation.push(MapSummary {
            label: (*label).into(),
            radius: u.grid().radius(),
            defect_sup: defect_vs_g(&g, u)?,
            injectivity: inj(u)?,
            distance: distance(u, &u_bar)?,
            mesh: out.save_map(label, u)?,
        });
    }
    let (start_label, u_start) = start_maps.into_iter().last().expect("start maps are never empty");
    let start_summary = preparation.last().expect("start maps are never empty").clone();

    let stage_settings = StageSettings {
        kappa,
        guard: tol.guard,
        mode: config.mode,
        c_bar: k.c_bar,
        c_zero: k.c_zero,
        factorize,
    };
    let mut state = StageState::measure(0, u_start, &g, schedule, kappa)?;
    let mut records = Vec::new();
    let mut audits = Vec::new();
    let mut final_mesh = start_summary.mesh.clone();
    let stage_count = if start_label == "u0" { schedule.q_max } else { 0 };
    for q in 0..stage_count {
        let output = match run_stage(&state, &g, schedule, &profile, &stage_settings) {
            Ok(o) => o,
            Err(e) if !strict => {
                stopped = Some(e.at_stage(q).to_string());
                break;
            }
            Err(e) => return Err(e.at_stage(q)),
        };
        let u_next = output.u_next;
        let u_prev = state.u.remask(u_next.grid().radius())?;
        let step = u_next.sub(&u_prev)?;
        let next_inj = inj(&u_next)?;
        let prev_here = inj(&u_prev)?;
        audits.push(InjectivityAudit {
            q,
            far_change: (next_inj.far - prev_here.far).abs(),
            far_allowed: 2.0 * output.report.displacement_sup / tol.injectivity_sep,
            local_change: (next_inj.local - prev_here.local).abs(),
            local_allowed: output.report.d_displacement_sup,
        });
        final_mesh = out.save_map(&format!("u{}", q + 1), &u_next)?;
        records.push(StageRecord {
            d2_increment_sup: hessian_sup(&step)?,
            injectivity: next_inj,
            distance: distance(&u_next, &u_bar)?,
            report: output.report,
        });
        state = StageState::measure(q + 1, u_next, &g, schedule, kappa)?;
    }

    let beta = config.beta();
    let table = convergence_report(&records, beta);
    let stages: Vec<StageReport> = records.into_iter().map(|r| r.report).collect();

    let mut checks = Vec::new();
    if let Some(short) = &short {
        checks.push(Check::at_most(
            "twisted map meets its alpha budget",
            short.defect_alpha,
            short.target,
            strict,
        ));
    }
    if let Some(u0) = &u0 {
        checks.push(Check::at_most(
            "u0 meets sigma0 kappa delta_1",
            u0.defect_sup,
            u0.target,
            strict,
        ));
    }
    for s in &stages {
        checks.push(Check::at_most(
            format!("stage {} bookkeeping", s.q),
            s.bookkeeping_rel,
            tol.bookkeeping,
            true,
        ));
        checks.push(Check::above(
            format!("stage {} shortness", s.q),
            s.shortness_min_eig,
            0.0,
            true,
        ));
        for b in &s.bounds {
            checks.push(Check::at_most(
                format!("stage {} {}", s.q, b.name),
                b.measured,
                b.bound,
                strict,
            ));
        }
    }
    let mut prev = start_summary.defect_sup;
    for row in &table {
        checks.push(Check {
            name: format!("sup defect decreases at stage {}", row.q),
            measured: row.defect_sup,
            bound: prev,
            pass: row.defect_sup < prev,
            strict: true,
        });
        prev = row.defect_sup;
    }
    checks.push(Check {
        name: "all stages completed".into(),
        measured: table.len() as f64,
        bound: schedule.q_max as f64,
        pass: table.len() == schedule.q_max,
        strict: true,
    });
    let final_distance = table.last().map_or(start_summary.distance, |r| r.distance);
    checks.push(Check::at_most(
        "final |u - ubar|_0 <= eps",
        final_distance,
        tol.eps,
        true,
    ));
    let min_margin = preparation
        .iter()
        .map(|m| m.injectivity.margin())
        .chain(table.iter().map(|r| r.injectivity))
        .fold(f64::INFINITY, f64::min);
    checks.push(Check::above("injectivity margin throughout", min_margin, 0.0, true));
    for a in &audits {
        checks.push(Check {
            name: format!("stage {} injectivity audit", a.q),
            measured: (a.far_change - a.far_allowed).max(a.local_change - a.local_allowed),
            bound: 0.0,
            pass: a.pass(),
            strict: true,
        });
    }
    for row in &table {
        checks.push(Check::at_most(
            format!("stage {} increment ratio to delta^1/2 lambda^beta", row.q),
            row.ratio,
            k.c_star,
            true,
        ));
    }

    let report = RunReport {
        config: config.clone(),
        spacing: grid.spacing(),
        beta,
        beta_max: 1.0 / (2.0 * schedule.b * schedule.c),
        kappa,
        short,
        u0,
        preparation,
        stages,
        table,
        audits,
        stopped,
        checks,
        meshes: out.meshes,
        final_mesh,
    };
    write_outputs(&report)?;
    Ok(report)
}

fn write_outputs(report: &RunReport) -> Result<()> {
    let dir = &report.config.output_dir;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    write_table_csv(&report.table, fs::File::create(dir.join("convergence.csv"))?)?;
    let lines: Vec<String> = report.checks.iter().map(Check::line).collect();
    fs::write(dir.join("checks.txt"), lines.join("\n") + "\n")?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
