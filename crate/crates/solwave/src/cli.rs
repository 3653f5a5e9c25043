//! Batch front door: flat key-value run configurations, one command per
//! process, reports written to a run directory. Exit codes: 0 all asserted
//! invariants passed, 1 invariant violation or runtime failure, 2 bad
//! arguments or config.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evolve::{self, EvolveConfig};
use crate::functionals::{charges, xi, ChargeVector, FrequencyVector};
use crate::grid::{self, RadialGrid};
use crate::model::{builtin_model, check_assumptions, NonlinearityModel, SamplingConfig};
use crate::solver::{self, InitialGuess, SolverConfig};
use crate::verify::{self, CoercivitySampleConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct CliArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

pub fn parse_args<I: IntoIterator<Item = String>>(args: I) -> Result<CliArgs> {
    let mut config = None;
    let mut seed = None;
    let mut out = None;
    let mut threads = None;
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let mut value = |flag: &str| {
            it.next()
                .ok_or_else(|| Error::Config(format!("{flag} requires a value")))
        };
        match arg.as_str() {
            "--config" => config = Some(PathBuf::from(value("--config")?)),
            "--seed" => {
                seed = Some(value("--seed")?.parse().map_err(|_| {
                    Error::Config("--seed requires an unsigned integer".into())
                })?)
            }
            "--out" => out = Some(PathBuf::from(value("--out")?)),
            "--threads" => {
                threads = Some(value("--threads")?.parse().map_err(|_| {
                    Error::Config("--threads requires a positive integer".into())
                })?)
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown argument {other:?}; expected --config, --seed, --out, --threads"
                )))
            }
        }
    }
    let threads = match threads {
        Some(t) => Some(t),
        None => match std::env::var("SOLWAVE_THREADS") {
            Ok(v) => Some(v.parse().map_err(|_| {
                Error::Config("SOLWAVE_THREADS must be a positive integer".into())
            })?),
            Err(_) => None,
        },
    };
    if matches!(threads, Some(0)) {
        return Err(Error::Config("thread count must be >= 1".into()));
    }
    Ok(CliArgs {
        config: config
            .ok_or_else(|| Error::Config("--config <path> is required".into()))?,
        seed,
        out,
        threads,
    })
}

/// Parsed flat key-value configuration with line numbers for diagnostics.
#[derive(Debug, Clone)]
pub struct RawConfig {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::ConfigParse {
                path: path.to_path_buf(),
                line: line_no,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::ConfigParse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            if entries
                .insert(key.clone(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::ConfigParse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    fn parse_err(&self, key: &str, message: String) -> Error {
        let line = self.entries.get(key).map(|(l, _)| *l).unwrap_or(0);
        Error::ConfigParse {
            path: self.path.clone(),
            line,
            message: format!("field {key}: {message}"),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| self.parse_err(key, "missing required field".into()))
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.parse_err(key, format!("not a number: {v:?}"))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.parse_err(key, format!("not an unsigned integer: {v:?}"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| self.parse_err(key, format!("not an unsigned integer: {v:?}"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(self.parse_err(key, format!("expected true/false, got {v:?}"))),
        }
    }

    pub fn list_f64(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.require(key)?;
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| self.parse_err(key, format!("bad list entry {s:?}")))
            })
            .collect()
    }

    fn keys_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .keys()
            .filter(move |k| k.starts_with(prefix))
            .map(|k| k.as_str())
    }
}

fn build_model(cfg: &RawConfig) -> Result<NonlinearityModel<f64>> {
    let name = cfg.require("model.name")?.to_string();
    let mut params = BTreeMap::new();
    for key in cfg.keys_with_prefix("model.").collect::<Vec<_>>() {
        if key == "model.name" {
            continue;
        }
        let short = key.trim_start_matches("model.").to_string();
        params.insert(
            short,
            cfg.f64_opt(key)?.expect("prefix-scanned key exists"),
        );
    }
    builtin_model(&name, &params).map_err(|e| Error::Config(format!("model: {e}")))
}

fn build_grid(cfg: &RawConfig) -> Result<RadialGrid<f64>> {
    let n = cfg.usize_opt("grid.n")?.unwrap_or(3);
    let r_max = cfg.f64_or("grid.r_max", 50.0)?;
    let nodes = cfg.usize_opt("grid.nodes")?.unwrap_or(2000);
    RadialGrid::new(n, r_max, nodes)
}

fn build_sampling(cfg: &RawConfig, seed: u64) -> Result<SamplingConfig<f64>> {
    let mut s = SamplingConfig::default();
    s.seed = seed;
    if let Some(n) = cfg.usize_opt("audit.samples")? {
        s.samples = n;
    }
    s.box_cap = cfg.f64_or("audit.box_cap", 3.0)?;
    Ok(s)
}

fn build_solver_config(cfg: &RawConfig, model: &NonlinearityModel<f64>, seed: u64) -> Result<SolverConfig<f64>> {
    let guess = match cfg.get("solver.initial_guess").unwrap_or("gaussian_bumps") {
        "gaussian_bumps" => {
            let k = model.k();
            let amplitudes = match cfg.get("solver.amplitudes") {
                Some(_) => cfg.list_f64("solver.amplitudes")?,
                None => vec![1.0; k],
            };
            let widths = match cfg.get("solver.widths") {
                Some(_) => cfg.list_f64("solver.widths")?,
                None => vec![5.0; k],
            };
            InitialGuess::GaussianBumps { amplitudes, widths }
        }
        "trial_field" => InitialGuess::TrialField {
            z: cfg.list_f64("solver.z")?,
            radius: cfg
                .f64_opt("solver.radius")?
                .ok_or_else(|| cfg.parse_err("solver.radius", "required for trial_field".into()))?,
        },
        "from_file" => InitialGuess::FromFile(PathBuf::from(cfg.require("solver.file")?)),
        other => {
            return Err(cfg.parse_err(
                "solver.initial_guess",
                format!("unknown guess {other:?}; expected gaussian_bumps, trial_field, from_file"),
            ))
        }
    };
    let mut sc = SolverConfig::new(guess);
    sc.seed = seed;
    if let Some(v) = cfg.usize_opt("solver.max_iterations")? {
        sc.max_iterations = v;
    }
    sc.grad_tolerance = cfg.f64_or("solver.grad_tolerance", sc.grad_tolerance)?;
    sc.armijo_c = cfg.f64_or("solver.armijo_c", sc.armijo_c)?;
    sc.b_floor_factor = cfg.f64_or("solver.b_floor_factor", sc.b_floor_factor)?;
    if let Some(v) = cfg.usize_opt("solver.restarts")? {
        sc.restarts = v;
    }
    if let Some(v) = cfg.usize_opt("solver.polish_iterations")? {
        sc.polish_iterations = v;
    }
    Ok(sc)
}

fn build_coercivity_config(cfg: &RawConfig, seed: u64) -> Result<CoercivitySampleConfig<f64>> {
    let mut c = CoercivitySampleConfig::default();
    c.seed = seed;
    if let Some(n) = cfg.usize_opt("audit.samples")? {
        c.samples = n;
    }
    c.radius_fraction = (
        cfg.f64_or("audit.radius_fraction_lo", 0.55)?,
        cfg.f64_or("audit.radius_fraction_hi", 0.85)?,
    );
    c.ramp_fraction = cfg.f64_or("audit.ramp_fraction", 0.005)?;
    c.amplitude_jitter = cfg.f64_or("audit.amplitude_jitter", 0.01)?;
    c.frequency_jitter = cfg.f64_or("audit.frequency_jitter", 0.01)?;
    c.biased_fraction = cfg.f64_or("audit.biased_fraction", 0.7)?;
    Ok(c)
}

/// Outcome of one run: the directory with all reports, and the list of
/// violated invariants (empty on success).
#[derive(Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub failures: Vec<String>,
}

fn write_file(dir: &Path, name: &str, content: &[u8]) -> Result<()> {
    fs::write(dir.join(name), content)?;
    Ok(())
}

fn resolve_eta(
    cfg: &RawConfig,
    model: &NonlinearityModel<f64>,
    alpha: f64,
    alpha_star: f64,
) -> Result<f64> {
    match cfg.get("audit.eta") {
        None | Some("default") => {
            verify::default_eta(alpha, alpha_star, model.mass_min(), model.k())
        }
        Some(v) => v
            .parse()
            .map_err(|_| cfg.parse_err("audit.eta", format!("not a number: {v:?}"))),
    }
}

/// Executes the configured command, writing all reports into the run
/// directory. Invariant violations are returned in the outcome, not as Err.
pub fn execute(cfg: &RawConfig, args: &CliArgs) -> Result<RunOutcome> {
    let command = cfg.require("command")?.to_string();
    let seed = match args.seed {
        Some(s) => s,
        None => cfg.u64_or("seed", 0)?,
    };
    let run_dir = match &args.out {
        Some(p) => p.clone(),
        None => PathBuf::from(cfg.get("out").unwrap_or("runs").to_string())
            .join(format!("{command}-seed{seed}")),
    };
    fs::create_dir_all(&run_dir)?;

    let model = build_model(cfg)?;
    let mut failures = Vec::new();

    // manifest carries the only timestamp of the run
    {
        let mut manifest = Vec::new();
        writeln!(manifest, "tool = solwave {VERSION}")?;
        let ts = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(manifest, "timestamp_unix = {ts}")?;
        writeln!(manifest, "seed = {seed}")?;
        writeln!(manifest, "threads = {}", args.threads.unwrap_or(1))?;
        writeln!(manifest, "config_path = {}", args.config.display())?;
        writeln!(manifest, "[config]")?;
        for (k, (_, v)) in &cfg.entries {
            writeln!(manifest, "{k} = {v}")?;
        }
        write_file(&run_dir, "manifest.txt", &manifest)?;
    }

    match command.as_str() {
        "check-model" => {
            let sampling = build_sampling(cfg, seed)?;
            let report = check_assumptions(&model, &sampling)?;
            let mut out = Vec::new();
            writeln!(out, "model = {}", model.name())?;
            writeln!(out, "alpha = {:.16e}", report.alpha)?;
            let z_star = report
                .alpha_minimizer
                .iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "alpha_minimizer = {z_star}")?;
            if !report.alpha_j.is_empty() {
                let aj = report
                    .alpha_j
                    .iter()
                    .map(|x| format!("{x:.16e}"))
                    .collect::<Vec<_>>()
                    .join(",");
                writeln!(out, "alpha_j = {aj}")?;
                writeln!(out, "alpha_star = {:.16e}", report.alpha_star)?;
            }
            for (name, ok) in [
                ("a0_sign_symmetry", report.a0_holds),
                ("a1_nonnegative_f", report.a1_holds),
                ("a2_growth", report.a2_holds),
                ("a3_quadratic_coefficient", report.a3_holds),
                ("a4_cross_component_separation", report.a4_holds),
            ] {
                writeln!(out, "{name} = {ok}")?;
                if !ok {
                    failures.push(format!("assumption audit failed: {name}"));
                }
            }
            writeln!(
                out,
                "empirical_growth_constant = {:.16e}",
                report.empirical_growth_constant
            )?;
            writeln!(
                out,
                "dg_consistency_error = {:.16e}",
                report.dg_consistency_error
            )?;
            writeln!(out, "boundary_attained = {}", report.boundary_attained)?;
            write_file(&run_dir, "assumption_report.txt", &out)?;
        }
        "solve" | "sweep" => {
            let grid = build_grid(cfg)?;
            let sampling = build_sampling(cfg, seed)?;
            let report = check_assumptions(&model, &sampling)?;
            for (name, ok) in [
                ("a1_nonnegative_f", report.a1_holds),
                ("a2_growth", report.a2_holds),
                ("a3_quadratic_coefficient", report.a3_holds),
            ] {
                if !ok {
                    failures.push(format!("assumption audit failed: {name}"));
                }
            }
            let mut sc = build_solver_config(cfg, &model, seed)?;
            sc.alpha = Some(report.alpha);
            let eta = resolve_eta(cfg, &model, report.alpha, report.alpha_star)?;

            if command == "solve" {
                let sigma = ChargeVector::new(cfg.list_f64("sigma")?)?;
                let result = solver::minimize(&model, &grid, &sigma, &sc)?;
                let mut out = Vec::new();
                solver::write_report(&mut out, &result)?;
                write_file(&run_dir, "solve_report.txt", &out)?;
                let mut table = Vec::new();
                grid::write_field_table(&mut table, &grid, &result.u_star)?;
                write_file(&run_dir, "profile.csv", &table)?;
                let mut trace = Vec::new();
                solver::write_trace(&mut trace, &result.trace)?;
                write_file(&run_dir, "trace.csv", &trace)?;

                if !result.converged {
                    failures.push(format!(
                        "solver did not converge in {} iterations (residuals {:?})",
                        result.iterations, result.residual_norms
                    ));
                } else {
                    let diag = verify::minimizer_diagnostics(&model, &result, &report, eta)?;
                    let defect = verify::pohozaev_defect(
                        &model,
                        &grid,
                        &result.u_star,
                        &result.omega_star,
                    )?;
                    let mut d = Vec::new();
                    writeln!(d, "positivity = {}", diag.positivity)?;
                    writeln!(d, "frequency_window = {}", diag.frequency_window)?;
                    let pc = diag
                        .per_component_window
                        .iter()
                        .map(|b| b.to_string())
                        .collect::<Vec<_>>()
                        .join(",");
                    writeln!(d, "per_component_window = {pc}")?;
                    writeln!(d, "lambda_below_threshold = {}", diag.lambda_below_threshold)?;
                    writeln!(d, "xi_at_least_floor = {}", diag.xi_at_least_floor)?;
                    writeln!(d, "lambda_margin = {:.16e}", diag.lambda_margin)?;
                    writeln!(d, "xi_margin = {:.16e}", diag.xi_margin)?;
                    writeln!(d, "pohozaev_defect = {:.16e}", defect)?;
                    write_file(&run_dir, "diagnostics.txt", &d)?;
                    if !diag.positivity {
                        failures.push("positivity violated at an interior node".into());
                    }
                    if !diag.xi_at_least_floor {
                        failures.push("ratio lower bound violated by the minimizer".into());
                    }
                    for (c, s) in result.charges.iter().zip(sigma.as_slice()) {
                        if (c - s).abs() > 1e-10 * s.abs() {
                            failures.push("charge constraint violated beyond 1e-10".into());
                        }
                    }
                }
            } else {
                let mut sigma_set = Vec::new();
                let mut idx = 1;
                while cfg.get(&format!("sigma_set.{idx}")).is_some() {
                    sigma_set.push(ChargeVector::new(cfg.list_f64(&format!("sigma_set.{idx}"))?)?);
                    idx += 1;
                }
                if sigma_set.is_empty() {
                    sigma_set.push(ChargeVector::new(cfg.list_f64("sigma")?)?);
                }
                let rows = solver::sweep(&model, &grid, &sigma_set, &sc, Some(eta))?;
                let openness = cfg.bool_or("sweep.openness", true)?;
                let mut out = Vec::new();
                writeln!(out, "sigma,converged,in_omega_set,E,lambda,omega,error")?;
                let mut emit = |row: &solver::SweepRow<f64>, tag: &str| -> Result<()> {
                    let join = |v: &[f64]| {
                        v.iter()
                            .map(|x| format!("{x:.16e}"))
                            .collect::<Vec<_>>()
                            .join(";")
                    };
                    writeln!(
                        out,
                        "{}{},{},{},{},{},{},{}",
                        tag,
                        join(row.sigma.as_slice()),
                        row.converged,
                        row.in_omega_set.map(|b| b.to_string()).unwrap_or_default(),
                        row.energy.map(|e| format!("{e:.16e}")).unwrap_or_default(),
                        row.lambda.map(|l| format!("{l:.16e}")).unwrap_or_default(),
                        row.omega.as_ref().map(|o| join(o)).unwrap_or_default(),
                        row.error.clone().unwrap_or_default()
                    )?;
                    Ok(())
                };
                for (i, row) in rows.iter().enumerate() {
                    emit(row, "")?;
                    if openness && row.converged && row.in_omega_set == Some(true) {
                        let probes = solver::perturbed_charges(&row.sigma, 0.01)?;
                        let probe_rows = solver::sweep(&model, &grid, &probes, &sc, Some(eta))?;
                        for p in &probe_rows {
                            emit(p, "probe:")?;
                            if !p.converged || p.in_omega_set != Some(true) {
                                failures.push(format!(
                                    "openness probe failed near sigma_set entry {}",
                                    i + 1
                                ));
                            }
                        }
                    }
                }
                write_file(&run_dir, "sweep.csv", &out)?;
            }
        }
        "hylomorphy" => {
            let grid = build_grid(cfg)?;
            let z = cfg.list_f64("hylomorphy.z")?;
            let radii = cfg.list_f64("hylomorphy.radii")?;
            let table = verify::hylomorphy_table(&model, &grid, &z, &radii)?;
            let mut out = Vec::new();
            verify::write_hylomorphy_csv(&mut out, &table)?;
            writeln!(out, "# limit_estimate = {:.16e}", table.limit_estimate)?;
            write_file(&run_dir, "hylomorphy.csv", &out)?;
            for pair in table.rows.windows(2) {
                if !(pair[1].xi_squared < pair[0].xi_squared) {
                    failures.push(format!(
                        "ratio envelope not decreasing between R = {} and R = {}",
                        pair[0].radius, pair[1].radius
                    ));
                }
            }
        }
        "coercivity" => {
            let grid = build_grid(cfg)?;
            let sampling = build_sampling(cfg, seed)?;
            let report = check_assumptions(&model, &sampling)?;
            let eta = resolve_eta(cfg, &model, report.alpha, report.alpha_star)?;
            let ccfg = build_coercivity_config(cfg, seed)?;
            let audit = verify::coercivity_audit(&model, &grid, &ccfg, eta)?;
            let mut out = Vec::new();
            verify::write_audit_report(&mut out, &audit)?;
            write_file(&run_dir, "coercivity_report.txt", &out)?;
            if audit.violations > 0 {
                let first = audit
                    .violation_log
                    .first()
                    .cloned()
                    .unwrap_or_else(|| "unnamed".into());
                failures.push(format!(
                    "{} coercivity bound violations, first: {first}",
                    audit.violations
                ));
            }
            let min_qualifying = cfg.usize_opt("audit.min_qualifying")?.unwrap_or(1);
            if audit.samples_below_threshold < min_qualifying {
                failures.push(format!(
                    "only {} of the required {min_qualifying} samples fell below the \
                     ratio threshold",
                    audit.samples_below_threshold
                ));
            }
        }
        "evolve" => {
            let grid = build_grid(cfg)?;
            let path = PathBuf::from(cfg.require("evolve.profile")?);
            let file = fs::File::open(&path)?;
            let (radii, u) = grid::read_field_table::<f64, _>(std::io::BufReader::new(file))?;
            if u.n_nodes() != grid.len()
                || radii
                    .iter()
                    .zip(grid.nodes())
                    .any(|(&a, &b)| (a - b).abs() > 1e-9 * grid.dr())
            {
                return Err(Error::Config(format!(
                    "profile {path:?} was sampled on a different grid"
                )));
            }
            let omega = match cfg.get("evolve.omega") {
                Some(_) => FrequencyVector::new(cfg.list_f64("evolve.omega")?)?,
                None => {
                    let (x, w) = xi(&model, &grid, &u)?;
                    let _ = x;
                    w
                }
            };
            let state = evolve::to_standing_wave(&u, &omega)?;
            let dt = cfg.f64_or("evolve.dt", 0.25 * grid.dr())?;
            let t_final = cfg.f64_or("evolve.t_final", 20.0)?;
            let mut ecfg = EvolveConfig::new(dt, t_final);
            if let Some(s) = cfg.usize_opt("evolve.stride")? {
                ecfg.stride = s;
            }
            ecfg.cfl_limit = cfg.f64_or("evolve.cfl_limit", 0.5)?;
            let (diag, _) = evolve::evolve_nlkg(&model, &grid, &state, &ecfg)?;
            let mut out = Vec::new();
            evolve::write_evolution_csv(&mut out, &diag)?;
            write_file(&run_dir, "evolution.csv", &out)?;
            if let Some(step) = diag.aborted_at {
                failures.push(format!("instability detected at step {step}"));
            }
            let max_drift = cfg.f64_or("evolve.max_drift", 1e-3)?;
            if diag.max_energy_drift > max_drift || diag.max_charge_drift > max_drift {
                failures.push(format!(
                    "conservation drift exceeded {max_drift:e}: energy {:e}, charge {:e}",
                    diag.max_energy_drift, diag.max_charge_drift
                ));
            }
            // initial charges must match the static definition
            let c_static = charges(&grid, &u, &omega)?;
            let c_dynamic = evolve::field_charges(&grid, &state)?;
            for (a, b) in c_static.iter().zip(&c_dynamic) {
                if (a - b).abs() > 1e-10 * (1.0 + a.abs()) {
                    failures.push("charge identity violated at t = 0".into());
                }
            }
        }
        other => {
            return Err(cfg.parse_err(
                "command",
                format!(
                    "unknown command {other:?}; expected check-model, solve, sweep, \
                     hylomorphy, coercivity, evolve"
                ),
            ))
        }
    }

    let mut summary = Vec::new();
    writeln!(summary, "command = {command}")?;
    writeln!(summary, "model = {}", model.name())?;
    writeln!(summary, "passed = {}", failures.is_empty())?;
    for f in &failures {
        writeln!(summary, "failure: {f}")?;
    }
    write_file(&run_dir, "summary.txt", &summary)?;

    Ok(RunOutcome { run_dir, failures })
}

/// Full CLI entry: parse args and config, run, map errors to exit codes.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let args = match parse_args(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cfg = match RawConfig::parse(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match execute(&cfg, &args) {
        Ok(outcome) => {
            if outcome.failures.is_empty() {
                println!("ok: reports in {}", outcome.run_dir.display());
                0
            } else {
                for f in &outcome.failures {
                    eprintln!("failed: {f}");
                }
                1
            }
        }
        Err(e @ Error::ConfigParse { .. }) | Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_cfg(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.cfg");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn args_parsing() {
        let a = parse_args(
            ["--config", "x.cfg", "--seed", "7", "--out", "o"]
                .iter()
                .map(|s| s.to_string()),
        )
        .unwrap();
        assert_eq!(a.config, PathBuf::from("x.cfg"));
        assert_eq!(a.seed, Some(7));
        assert!(parse_args(["--bogus".to_string()]).is_err());
        assert!(parse_args(Vec::<String>::new()).is_err());
    }

    #[test]
    fn config_parse_errors_have_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cfg(dir.path(), "command = solve\nbroken line\n");
        let err = RawConfig::parse(&p).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn check_model_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cfg(
            dir.path(),
            "command = check-model\nmodel.name = coupled_k2\naudit.samples = 2000\n",
        );
        let args = CliArgs {
            config: p,
            seed: Some(1),
            out: Some(dir.path().join("run")),
            threads: None,
        };
        let cfg = RawConfig::parse(&args.config).unwrap();
        let outcome = execute(&cfg, &args).unwrap();
        assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
        let report = fs::read_to_string(outcome.run_dir.join("assumption_report.txt")).unwrap();
        assert!(report.contains("a4_cross_component_separation = true"), "{report}");
        assert!(report.contains("alpha = "));
        assert!(outcome.run_dir.join("manifest.txt").exists());
        assert!(outcome.run_dir.join("summary.txt").exists());
    }

    #[test]
    fn invalid_exponents_exit_code_two() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cfg(
            dir.path(),
            "command = solve\nmodel.name = coupled_k2\nmodel.q = 7\nsigma = 1\n",
        );
        let code = run([
            "--config".to_string(),
            p.display().to_string(),
            "--out".to_string(),
            dir.path().join("r").display().to_string(),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn unknown_command_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_cfg(dir.path(), "command = dance\nmodel.name = scalar_quartic_quintic\n");
        let args = CliArgs {
            config: p.clone(),
            seed: None,
            out: Some(dir.path().join("run")),
            threads: None,
        };
        let cfg = RawConfig::parse(&p).unwrap();
        let err = execute(&cfg, &args).unwrap_err();
        assert!(matches!(err, Error::ConfigParse { .. }));
    }
}
