use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use c1beta::conformal::{factorize, random_metric, FactorizeOptions, SolveOptions};
use c1beta::corrugation::CorrugationProfile;
use c1beta::field::io::load_binary;
use c1beta::field::{Grid, MapField};
use c1beta::pipeline::{self, export_mesh, load_report, Check, RunConfig, RunReport};
use c1beta::schedule::Schedule;
use c1beta::Result;

#[derive(Parser)]
#[command(
    name = "c1beta",
    version,
    about = "Convex integration of short disk maps towards C^{1,beta} isometries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole construction from a TOML config.
    Run { config: PathBuf },
    /// Feasibility, parameter chains and grid reach of a schedule.
    CheckParams {
        /// Read the schedule (and grid) from a run config instead.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = 1.1)]
        b: f64,
        #[arg(long, default_value_t = 2.5)]
        c: f64,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 2)]
        q_max: usize,
        /// Grid points per side, for the resolution guard.
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 1.5)]
        half_width: f64,
        /// Per-stage parameters as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Factorize a random smooth metric conformally and check the result.
    SolveBeltrami {
        #[arg(long, default_value_t = 256)]
        n: usize,
        /// `‖h − e‖₀` of the random metric.
        #[arg(long, default_value_t = 0.05)]
        size: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Node values of `Φ` and `ρ` as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Tabulate the corrugation profile and its identities.
    CorrugateTable {
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Convert a binary map file into an OBJ mesh.
    ExportMesh { map: PathBuf, out: PathBuf },
    /// Print the table and checks of a finished run.
    Report { report: PathBuf },
}

fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{}", c.line());
    }
    checks.iter().filter(|c| c.strict).all(|c| c.pass)
}

fn print_table(r: &RunReport) {
    println!("map      radius  defect_sup    injectivity   distance");
    for m in &r.preparation {
        println!(
            "{:<8} {:<7.4} {:<13.6e} {:<13.6e} {:.6e}",
            m.label,
            m.radius,
            m.defect_sup,
            m.injectivity.margin(),
            m.distance
        );
    }
    println!("q  radius  defect_sup    defect_alpha  incr_beta     ratio     injectivity   distance");
    for t in &r.table {
        println!(
            "{:<2} {:<7.4} {:<13.6e} {:<13.6e} {:<13.6e} {:<9.4} {:<13.6e} {:.6e}",
            t.q, t.radius, t.defect_sup, t.defect_alpha, t.increment_beta, t.ratio, t.injectivity, t.distance
        );
    }
    if let Some(s) = &r.stopped {
        println!("stopped early: {s}");
    }
}

fn cmd_run(path: &Path) -> Result<bool> {
    let cfg = RunConfig::load(path)?;
    let start = Instant::now();
    let report = pipeline::run(&cfg)?;
    print_table(&report);
    let ok = print_checks(&report.checks);
    eprintln!(
        "wrote {} meshes and report.json to {} in {:.1} s",
        report.meshes.len(),
        cfg.output_dir.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(ok)
}

fn cmd_check_params(
    config: Option<PathBuf>,
    schedule: Schedule,
    n: usize,
    half_width: f64,
    csv_out: Option<PathBuf>,
) -> Result<bool> {
    let (schedule, grid, guard) = match config {
        Some(p) => {
            let cfg = RunConfig::load(&p)?;
            (cfg.schedule.clone(), cfg.grid()?, cfg.tolerances.guard)
        }
        None => (
            schedule,
            Grid::new(half_width, n, pipeline::START_RADIUS)?,
            c1beta::stage_corrugate::DEFAULT_GUARD,
        ),
    };
    schedule.validate()?;
    let feas = schedule.feasibility();
    let mut checks = vec![Check {
        name: format!(
            "exponents feasible (b = {}, c = {}, alpha = {}; beta_max = {:.6})",
            schedule.b,
            schedule.c,
            schedule.alpha,
            1.0 / (2.0 * schedule.b * schedule.c)
        ),
        measured: if feas.feasible() { 1.0 } else { 0.0 },
        bound: 1.0,
        pass: feas.feasible(),
        strict: true,
    }];
    let mut rows = Vec::new();
    for q in 0..schedule.q_max {
        let p = schedule.derive(q);
        let worst = p
            .chain
            .iter()
            .min_by(|x, y| x.margin.total_cmp(&y.margin))
            .expect("chain is never empty");
        checks.push(Check {
            name: format!("stage {q} parameter chain (tightest link {})", worst.name),
            measured: worst.margin,
            bound: 0.0,
            pass: p.chain_holds(),
            strict: true,
        });
        let spacing = grid.spacing();
        checks.push(Check {
            name: format!("stage {q} resolvable (lambda_q+1 spacing <= guard)"),
            measured: p.lambda_q1() * spacing,
            bound: guard,
            pass: schedule.resolution_guard(q, spacing, guard),
            strict: false,
        });
        rows.push((
            q,
            p.delta_q1(),
            p.delta_q2(),
            p.lambda_q1(),
            p.ell(),
            p.mu(),
            worst.margin,
        ));
    }
    if let Some(path) = csv_out {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(["q", "delta_q1", "delta_q2", "lambda_q1", "ell", "mu", "chain_margin"])?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(print_checks(&checks))
}

fn cmd_solve_beltrami(n: usize, size: f64, seed: u64, csv_out: Option<PathBuf>) -> Result<bool> {
    let grid = Grid::disk(1.0, n)?;
    let h = random_metric(grid, size, seed);
    let opts = FactorizeOptions {
        solve: SolveOptions::default(),
        sigma1: None,
    };
    let start = Instant::now();
    let f = factorize(&h, &opts)?;
    eprintln!(
        "n = {n}: {} iterations in {:.2} s",
        f.iterations,
        start.elapsed().as_secs_f64()
    );
    let worst_ratio = f.fixed_point_ratios.iter().copied().fold(0.0, f64::max);
    let checks = vec![
        Check {
            name: "residual <= 1e-3 |h - e|_0".into(),
            measured: f.residual_sup,
            bound: 1e-3 * f.h_minus_e,
            pass: f.residual_sup <= 1e-3 * f.h_minus_e,
            strict: true,
        },
        Check {
            name: "J_Phi > 0".into(),
            measured: f.jacobian_min,
            bound: 0.0,
            pass: f.jacobian_min > 0.0,
            strict: true,
        },
        Check {
            name: "rho >= 1/2".into(),
            measured: f.rho_min,
            bound: 0.5,
            pass: f.rho_min >= 0.5,
            strict: true,
        },
        Check {
            name: "rho <= 2".into(),
            measured: f.rho_max,
            bound: 2.0,
            pass: f.rho_max <= 2.0,
            strict: true,
        },
        Check {
            name: "|DPhi - Id|_0 <= 1/2".into(),
            measured: f.dphi_minus_id,
            bound: 0.5,
            pass: f.dphi_minus_id <= 0.5,
            strict: true,
        },
        Check {
            name: "fixed-point ratios < 1".into(),
            measured: worst_ratio,
            bound: 1.0,
            pass: worst_ratio < 1.0,
            strict: true,
        },
    ];
    if let Some(path) = csv_out {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(["x", "y", "phi1", "phi2", "rho"])?;
        for k in grid.masked_indices() {
            let (x, y) = grid.point(k);
            w.serialize((x, y, f.phi1.get(k), f.phi2.get(k), f.rho.get(k)))?;
        }
        w.flush()?;
    }
    Ok(print_checks(&checks))
}

fn cmd_corrugate_table(samples: usize, csv_out: Option<PathBuf>) -> Result<bool> {
    let profile = CorrugationProfile::new();
    let s_max = profile.s_max();
    let xi_n = 64;
    let mut circle = 0.0f64;
    let mut bessel = 0.0f64;
    let mut period = 0.0f64;
    let mut rows = Vec::new();
    for k in 0..=samples {
        let s = s_max * k as f64 / samples.max(1) as f64;
        let f = profile.amplitude_f(s)?;
        bessel = bessel.max((c1beta::corrugation::bessel_j0(f) * (1.0 + s * s).sqrt() - 1.0).abs());
        let p = profile.at(s)?;
        for m in 0..xi_n {
            let xi = std::f64::consts::TAU * m as f64 / xi_n as f64;
            let (dt, dn) = p.dgamma_dxi(xi);
            circle = circle.max(((1.0 + dt).powi(2) + dn * dn - (1.0 + s * s)).abs());
        }
        let (gt, gn) = p.gamma(std::f64::consts::TAU);
        period = period.max(gt.abs().max(gn.abs()));
        rows.push((s, f, gt, gn));
    }
    let checks = vec![
        Check {
            name: "(1 + d_xi Gt)^2 + (d_xi Gn)^2 = 1 + s^2".into(),
            measured: circle,
            bound: 1e-10,
            pass: circle <= 1e-10,
            strict: true,
        },
        Check {
            name: "Gamma(s, 2 pi) = 0".into(),
            measured: period,
            bound: 1e-9,
            pass: period <= 1e-9,
            strict: true,
        },
        Check {
            name: "J0(f(s)) sqrt(1 + s^2) = 1".into(),
            measured: bessel,
            bound: 1e-10,
            pass: bessel <= 1e-10,
            strict: true,
        },
    ];
    if let Some(path) = csv_out {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(["s", "f", "gamma_t_2pi", "gamma_n_2pi"])?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(print_checks(&checks))
}

fn cmd_export_mesh(map: &Path, out: &Path) -> Result<bool> {
    let u: MapField = load_binary(map)?;
    let mesh = export_mesh(&u, out)?;
    println!(
        "{} vertices, {} faces -> {}",
        mesh.vertices.len(),
        mesh.faces.len(),
        out.display()
    );
    Ok(true)
}

fn cmd_report(path: &Path) -> Result<bool> {
    let report = load_report(path)?;
    print_table(&report);
    Ok(print_checks(&report.checks))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::CheckParams {
            config,
            a,
            b,
            c,
            alpha,
            q_max,
            n,
            half_width,
            csv,
        } => Schedule::new(a, b, c, alpha).and_then(|mut s| {
            s.q_max = q_max;
            cmd_check_params(config, s, n, half_width, csv)
        }),
        Command::SolveBeltrami { n, size, seed, csv } => cmd_solve_beltrami(n, size, seed, csv),
        Command::CorrugateTable { samples, csv } => cmd_corrugate_table(samples, csv),
        Command::ExportMesh { map, out } => cmd_export_mesh(&map, &out),
        Command::Report { report } => cmd_report(&report),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
