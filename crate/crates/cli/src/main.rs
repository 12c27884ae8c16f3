use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fatfront_core::analysis::{empirical_speed, envelopes, minimal_speed, AnalysisError, LevelSetTrace};
use fatfront_core::certificates::{applicable_constructions, run_suite, Construction};
use fatfront_core::discretization::{sample_initial_condition, Grid1D};
use fatfront_core::integrator::{run, SimulationRun};
use fatfront_core::io;
use fatfront_core::{ResolvedRun, RunConfig};

#[derive(Parser)]
#[command(
    name = "fatfront",
    version,
    about = "Fronts of nonlocal reaction-dispersal equations with fat-tailed kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory; overrides `output.directory` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write snapshots, diagnostics and level sets.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare level sets with the theoretical envelopes.
    Envelopes {
        /// A finished run directory or a config to simulate first.
        path: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Check sub- and supersolution constructions.
    Certify {
        config: PathBuf,
        /// Comma-separated subset of step1, step2, hyp1, hyp2.
        #[arg(long, value_delimiter = ',')]
        constructions: Option<Vec<String>>,
        #[command(flatten)]
        common: Common,
    },
    /// Minimal front speed, optionally against a run.
    Speed {
        config: PathBuf,
        /// Run directory whose level sets give an empirical slope.
        #[arg(long)]
        run: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Rerun with half the grid spacing and compare front positions.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

const EXIT_EGRESS: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Simulate { config, common } => {
            setup_threads(&common)?;
            let (resolved, out) = load(&config, &common)?;
            let run = simulate(&resolved, &out)?;
            Ok(exit_for(&run))
        }
        Command::Envelopes { path, lambda, epsilon, rho, common } => {
            setup_threads(&common)?;
            cmd_envelopes(&path, lambda, epsilon, rho, &common)
        }
        Command::Certify { config, constructions, common } => {
            setup_threads(&common)?;
            cmd_certify(&config, constructions, &common)
        }
        Command::Speed { config, run, common } => {
            setup_threads(&common)?;
            cmd_speed(&config, run.as_deref())
        }
        Command::Compare { config, common } => {
            setup_threads(&common)?;
            cmd_compare(&config, &common)
        }
    }
}

fn setup_threads(common: &Common) -> Result<()> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    Ok(())
}

fn load(config: &Path, common: &Common) -> Result<(ResolvedRun, PathBuf)> {
    let cfg = RunConfig::from_path(config).with_context(|| format!("loading {}", config.display()))?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let resolved = cfg.resolve().context("resolving the configuration")?;
    Ok((resolved, out))
}

fn exit_for(run: &SimulationRun) -> u8 {
    match run.aborted {
        Some(a) => {
            eprintln!(
                "egress abort at t = {}: |u| = {:e} on the outer band exceeds {:e}; enlarge grid.half_width",
                a.time, a.egress, a.threshold
            );
            EXIT_EGRESS
        }
        None => 0,
    }
}

fn execute(resolved: &ResolvedRun, grid: Grid1D) -> Result<SimulationRun> {
    let u0 = sample_initial_condition(grid, &resolved.config.initial_condition)?;
    Ok(run(&resolved.kernel, Some(&resolved.reaction), u0, &resolved.stepper)?)
}

fn traces(run: &SimulationRun, levels: &[f64]) -> Result<Vec<LevelSetTrace>> {
    Ok(levels.iter().map(|l| LevelSetTrace::from_snapshots(&run.snapshots, *l)).collect::<Result<_, _>>()?)
}

fn simulate(resolved: &ResolvedRun, out: &Path) -> Result<SimulationRun> {
    io::write_text(&out.join("resolved_config.json"), &resolved.config.to_json())?;
    let run = execute(resolved, resolved.grid)?;
    io::write_snapshots(&out.join("snapshots"), &run.snapshots)?;
    io::write_diagnostics(&out.join("diagnostics.csv"), &run.diagnostics)?;
    let traces = traces(&run, &resolved.config.analysis.levels)?;
    io::write_levelsets(&out.join("levelsets.csv"), &traces)?;
    if resolved.config.output.plot {
        io::write_text(&out.join("plot_levelsets.py"), io::LEVELSET_PLOT)?;
        io::write_text(&out.join("plot_snapshots.py"), io::SNAPSHOT_PLOT)?;
    }
    let last = run.diagnostics.last().expect("initial diagnostics");
    println!(
        "simulated to t = {} with n = {}, dx = {}, dt = {}, deficit = {:e}",
        last.t,
        resolved.grid.n(),
        resolved.grid.dx(),
        run.dt,
        run.deficit
    );
    for tr in &traces {
        if let Some(s) = tr.samples.last() {
            println!("lambda = {}: x_right(t = {}) = {}", tr.lambda, s.t, fmt_opt(s.x_right));
        }
    }
    println!("outputs in {}", out.display());
    Ok(run)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "absent".to_string(), |x| x.to_string())
}

fn cmd_envelopes(
    path: &Path,
    lambda: Option<f64>,
    epsilon: Option<f64>,
    rho: Option<f64>,
    common: &Common,
) -> Result<u8> {
    let (resolved, out, traces, code) = if path.is_dir() {
        let cfg_path = path.join("resolved_config.json");
        let cfg = RunConfig::from_path(&cfg_path).with_context(|| format!("loading {}", cfg_path.display()))?;
        let resolved = cfg.resolve()?;
        let lv = path.join("levelsets.csv");
        let traces = io::read_levelsets(&lv).with_context(|| format!("missing trace: cannot read {}", lv.display()))?;
        (resolved, common.out.clone().unwrap_or_else(|| path.to_path_buf()), traces, 0)
    } else {
        let (mut resolved, out) = load(path, common)?;
        let levels = &mut resolved.config.analysis.levels;
        if let Some(l) = lambda {
            if !levels.iter().any(|v| (v - l).abs() < 1e-12) {
                levels.push(l);
            }
        }
        let run = simulate(&resolved, &out)?;
        let code = exit_for(&run);
        let traces = traces(&run, &resolved.config.analysis.levels)?;
        (resolved, out, traces, code)
    };
    let epsilon = epsilon.unwrap_or(resolved.epsilon);
    let Some(rho) = rho.or(resolved.rho) else {
        bail!("no upper-envelope rate: the kernel has no theoretical rho; pass --rho");
    };
    let selected: Vec<LevelSetTrace> = match lambda {
        Some(l) => {
            let found = traces.iter().find(|t| (t.lambda - l).abs() < 1e-12).cloned();
            match found {
                Some(t) => vec![t],
                None => bail!("missing trace: no level set for lambda = {l} in the run"),
            }
        }
        None => traces,
    };
    let mut reports = Vec::new();
    for tr in &selected {
        let times: Vec<f64> = tr.samples.iter().map(|s| s.t).collect();
        let rep = envelopes(&resolved.kernel, &resolved.reaction, tr.lambda, epsilon, rho, &times, Some(tr))?;
        let (a, b) = tr.final_third().unwrap_or((0.0, 0.0));
        let window: Vec<Option<bool>> = rep
            .times
            .iter()
            .zip(&rep.contained)
            .filter(|(t, _)| **t >= a - 1e-9 && **t <= b + 1e-9)
            .map(|(_, c)| *c)
            .collect();
        let ok = window.iter().filter(|c| **c == Some(true)).count();
        let absent = window.iter().filter(|c| c.is_none()).count();
        println!(
            "lambda = {}: contained on final third [{a}, {b}]: {} ({ok}/{} samples, {absent} absent)",
            tr.lambda,
            ok == window.len() && !window.is_empty(),
            window.len()
        );
        reports.push(rep);
    }
    io::write_envelopes(&out.join("envelopes.csv"), &reports)?;
    if resolved.config.output.plot {
        io::write_text(&out.join("plot_envelopes.py"), io::ENVELOPE_PLOT)?;
    }
    Ok(code)
}

fn cmd_certify(config: &Path, constructions: Option<Vec<String>>, common: &Common) -> Result<u8> {
    let (resolved, out) = load(config, common)?;
    let list: Vec<Construction> = match constructions {
        Some(names) => names.iter().map(|n| n.trim().parse()).collect::<Result<_, _>>()?,
        None => applicable_constructions(&resolved.kernel),
    };
    let opts = &resolved.config.certificates;
    let reports = run_suite(&resolved.kernel, &resolved.reaction, &resolved.config.initial_condition, &list, opts)?;
    io::write_certificates(&out.join("certificates.csv"), &reports)?;
    io::write_certificate_constants(&out.join("certificate_constants.csv"), &reports)?;
    let mut all = true;
    for rep in &reports {
        let verdict = rep.verdict();
        all &= verdict;
        let worst = rep.worst().map_or_else(String::new, |w| {
            format!(", worst residual {:e} at (t = {}, x = {}) [{}]", w.residual, w.t, w.x, w.region)
        });
        println!(
            "{}: {} ({} samples{worst})",
            rep.construction,
            if verdict { "pass" } else { "FAIL" },
            rep.samples.len()
        );
    }
    Ok(if all { 0 } else { 1 })
}

fn cmd_speed(config: &Path, run_dir: Option<&Path>) -> Result<u8> {
    let cfg = RunConfig::from_path(config).with_context(|| format!("loading {}", config.display()))?;
    let kernel = fatfront_core::KernelSpec::new(cfg.kernel)?;
    let reaction = fatfront_core::ReactionSpec::new(cfg.reaction)?;
    let result = match cfg.analysis.truncation {
        Some(eps) => minimal_speed(&kernel.truncate(eps)?, &reaction),
        None => minimal_speed(&kernel, &reaction),
    };
    let speed = match result {
        Ok(s) => s,
        Err(AnalysisError::Divergent(msg)) => {
            eprintln!("infinite speed expected: {msg}");
            return Ok(1);
        }
        Err(e) => return Err(e.into()),
    };
    println!("c_star = {}", speed.c_star);
    println!("eta_star = {}", speed.eta_star);
    if let Some(dir) = run_dir {
        let lv = dir.join("levelsets.csv");
        let traces = io::read_levelsets(&lv).with_context(|| format!("reading {}", lv.display()))?;
        let Some(tr) = traces.first() else { bail!("{} holds no level sets", lv.display()) };
        let window = tr.final_third().context("empty trace")?;
        let est = empirical_speed(tr, window)?;
        println!("empirical slope (lambda = {}, t in [{}, {}]) = {}", tr.lambda, window.0, window.1, est.slope);
        println!("relative gap = {}", (est.slope - speed.c_star) / speed.c_star);
    }
    Ok(0)
}

fn cmd_compare(config: &Path, common: &Common) -> Result<u8> {
    let (resolved, out) = load(config, common)?;
    let fine_grid = Grid1D::with_spacing(resolved.grid.half_width(), 0.5 * resolved.grid.dx())?;
    let coarse = execute(&resolved, resolved.grid)?;
    let fine = execute(&resolved, fine_grid)?;
    let levels = &resolved.config.analysis.levels;
    let (tc, tf) = (traces(&coarse, levels)?, traces(&fine, levels)?);
    let mut rows = Vec::new();
    let mut final_change: f64 = 0.0;
    for (a, b) in tc.iter().zip(&tf) {
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            if let (Some(xa), Some(xb)) = (sa.x_right, sb.x_right) {
                let change = (xb - xa).abs() / xb.abs().max(f64::MIN_POSITIVE);
                rows.push(vec![sa.t, a.lambda, xa, xb, change]);
            }
        }
        if let (Some(xa), Some(xb)) =
            (a.samples.last().and_then(|s| s.x_right), b.samples.last().and_then(|s| s.x_right))
        {
            let change = (xb - xa).abs() / xb.abs();
            final_change = final_change.max(change);
            println!("lambda = {}: x_right coarse {xa}, fine {xb}, relative change {change:e}", a.lambda);
        }
    }
    io::write_table(
        &out.join("compare.csv"),
        &["t", "lambda", "x_right_coarse", "x_right_fine", "relative_change"],
        &rows,
    )?;
    println!("dx {} -> {}: largest final relative change {final_change:e}", resolved.grid.dx(), fine_grid.dx());
    Ok(exit_for(&coarse).max(exit_for(&fine)))
}
