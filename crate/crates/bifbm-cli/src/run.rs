//! Command dispatch: each subcommand resolves its inputs, calls the
//! library, and emits one report. Failed checks surface as exit code 1,
//! bad inputs and I/O trouble as exit code 2.

use crate::config::{
    AnalyzeCommand, Cli, Command, Format, GridSpec, Identity, KernelArgs, Method, OutputArgs,
};
use bifbm::export::{
    fmt_f64, matrix_csv, matrix_rows, p_variation_csv, paths_csv, region_csv, to_json_string,
};
use bifbm::{
    build_gram, cholesky_psd, critical_k, default_exploration_grid, default_jitter_schedule,
    f_counterexample, find_negative_a, hk_trend, increment_limit_error, kernel_agreement,
    lamperti_stationarity, oracle_report, p_variation, psd_check, quasihelix_report,
    sample_bifbm_sum, sample_brownian, sample_fbm_decomposed, sample_gaussian, scan_region,
    self_similarity_deviation, AnalysisError, KernelSpec, LinalgError, PVariationLevel, QuadError,
    QuadratureConfig, RegionError, SampleError, SamplePaths, SeedSpec, TimeGrid, Verdict,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Failure modes of a run, ordered by exit code contract: usage and I/O
/// problems exit 2, a check that ran and failed exits 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Check(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) | CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Io(msg) => write!(f, "error: {msg}"),
            CliError::Check(msg) => write!(f, "check failed: {msg}"),
        }
    }
}

/// Runs the parsed command, installing a bounded thread pool first when
/// --threads was given. Results never depend on the pool size.
pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot build a {n}-thread pool: {e}")))?;
            pool.install(|| run_command(cli))
        }
        None => run_command(cli),
    }
}

fn run_command(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Eval { kernel, s, t, out } => run_eval(kernel, *s, *t, out),
        Command::Gram { kernel, grid, out } => run_gram(kernel, grid, out),
        Command::PsdCheck {
            kernel,
            grid,
            rel_tol,
            out,
        } => run_psd_check(kernel, grid, *rel_tol, out),
        Command::Chol { kernel, grid, out } => run_chol(kernel, grid, out),
        Command::Sample {
            kernel,
            method,
            grid,
            paths,
            seed,
            out,
        } => run_sample(cli, kernel, *method, grid, *paths, *seed, out),
        Command::VerifyDecomp {
            identity,
            hurst,
            k,
            grid,
            tol,
            out,
        } => run_verify_decomp(*identity, *hurst, *k, grid, *tol, out),
        Command::OracleCompare {
            gamma,
            grid,
            quad_abs_tol,
            quad_rel_tol,
            tol,
            out,
        } => run_oracle_compare(*gamma, grid, *quad_abs_tol, *quad_rel_tol, *tol, out),
        Command::Analyze { check } => run_analyze(check),
        Command::Region {
            h_min,
            h_max,
            k_min,
            k_max,
            h_steps,
            k_steps,
            grid,
            rel_tol,
            out,
        } => run_region(
            (*h_min, *h_max),
            (*k_min, *k_max),
            (*h_steps, *k_steps),
            grid,
            *rel_tol,
            out,
        ),
        Command::CriticalK {
            hurst,
            resolution,
            grid,
            rel_tol,
            out,
        } => run_critical_k(*hurst, *resolution, grid, *rel_tol, out),
        Command::HkTrend {
            h_list,
            resolution,
            grid,
            rel_tol,
            out,
        } => run_hk_trend(h_list, *resolution, grid, *rel_tol, out),
    }
}

fn run_analyze(check: &AnalyzeCommand) -> Result<(), CliError> {
    match check {
        AnalyzeCommand::SelfSim {
            hurst,
            k,
            a,
            grid,
            out,
        } => run_self_sim(*hurst, *k, *a, grid, out),
        AnalyzeCommand::Lamperti {
            hurst,
            k,
            lags,
            bases,
            out,
        } => run_lamperti(*hurst, *k, lags, bases, out),
        AnalyzeCommand::Quasihelix { hurst, k, grid, out } => {
            run_quasihelix(*hurst, *k, grid, out)
        }
        AnalyzeCommand::IncrementLimit {
            hurst,
            k,
            shifts,
            grid,
            out,
        } => run_increment_limit(*hurst, *k, shifts, grid, out),
        AnalyzeCommand::PVariation {
            kernel,
            method,
            p,
            levels,
            paths,
            seed,
            out,
        } => run_p_variation(kernel, *method, *p, *levels, *paths, *seed, out),
        AnalyzeCommand::Counterexample { gamma, out } => run_counterexample(*gamma, out),
    }
}

// ---- output plumbing -------------------------------------------------

fn emit(text: &str, out: &OutputArgs) -> Result<(), CliError> {
    match &out.output {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    to_json_string(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Io(format!("serialization failed: {e}")))
}

fn pick_format(out: &OutputArgs, default: Format) -> Format {
    out.format.unwrap_or(default)
}

fn require_json(out: &OutputArgs, what: &str) -> Result<(), CliError> {
    match out.format {
        Some(Format::Csv) => Err(CliError::Usage(format!("{what} emits JSON only"))),
        _ => Ok(()),
    }
}

// ---- error translation ----------------------------------------------

fn linalg_to_cli(e: LinalgError) -> CliError {
    match e {
        LinalgError::BadTolerance(_) | LinalgError::BadJitterSchedule(_) => {
            CliError::Usage(e.to_string())
        }
        LinalgError::NonFinite { .. } | LinalgError::NotPsd { .. } => {
            CliError::Check(e.to_string())
        }
    }
}

fn sample_to_cli(e: SampleError) -> CliError {
    match e {
        SampleError::Linalg(inner) => linalg_to_cli(inner),
        other => CliError::Usage(other.to_string()),
    }
}

fn analysis_to_cli(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::ScanExhausted { .. } => CliError::Check(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

fn quad_to_cli(e: QuadError) -> CliError {
    match e {
        QuadError::InvalidConfig(_) | QuadError::InvalidParameter(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Check(other.to_string()),
    }
}

fn region_to_cli(e: RegionError) -> CliError {
    match e {
        RegionError::Linalg(inner) => linalg_to_cli(inner),
        RegionError::NoTransition { .. } | RegionError::FloorNotPsd { .. } => {
            CliError::Check(e.to_string())
        }
        other => CliError::Usage(other.to_string()),
    }
}

fn resolve_kernel(args: &KernelArgs) -> Result<KernelSpec, CliError> {
    args.resolve().map_err(CliError::Usage)
}

// ---- subcommands ------------------------------------------------------

#[derive(Serialize)]
struct EvalReport {
    kernel: String,
    s: f64,
    t: f64,
    value: f64,
}

fn run_eval(kernel: &KernelArgs, s: f64, t: f64, out: &OutputArgs) -> Result<(), CliError> {
    let spec = resolve_kernel(kernel)?;
    for (name, x) in [("--s", s), ("--t", t)] {
        if !x.is_finite() || x < 0.0 {
            return Err(CliError::Usage(format!(
                "{name} must be finite and nonnegative, got {x}"
            )));
        }
    }
    let report = EvalReport {
        kernel: spec.to_string(),
        s,
        t,
        value: spec.eval(s, t),
    };
    let text = match pick_format(out, Format::Json) {
        Format::Json => json(&report)?,
        Format::Csv => format!(
            "s,t,value\n{},{},{}\n",
            fmt_f64(s),
            fmt_f64(t),
            fmt_f64(report.value)
        ),
    };
    emit(&text, out)
}

#[derive(Serialize)]
struct GramReport {
    kernel: String,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

fn run_gram(kernel: &KernelArgs, grid: &GridSpec, out: &OutputArgs) -> Result<(), CliError> {
    let spec = resolve_kernel(kernel)?;
    let gram = build_gram(&spec, grid.grid());
    let text = match pick_format(out, Format::Csv) {
        Format::Csv => matrix_csv(gram.values()),
        Format::Json => json(&GramReport {
            kernel: spec.to_string(),
            times: grid.grid().times().to_vec(),
            values: matrix_rows(gram.values()),
        })?,
    };
    emit(&text, out)
}

fn run_psd_check(
    kernel: &KernelArgs,
    grid: &GridSpec,
    rel_tol: f64,
    out: &OutputArgs,
) -> Result<(), CliError> {
    require_json(out, "psd-check")?;
    let spec = resolve_kernel(kernel)?;
    let gram = build_gram(&spec, grid.grid());
    let report = psd_check(&gram, rel_tol).map_err(linalg_to_cli)?;
    emit(&json(&report)?, out)?;
    match report.verdict {
        Verdict::Psd => Ok(()),
        Verdict::NotPsd => Err(CliError::Check(format!(
            "{spec} is not PSD on this grid (min eigenvalue {}, scale {})",
            fmt_f64(report.min_eigenvalue),
            fmt_f64(report.scale)
        ))),
    }
}

#[derive(Serialize)]
struct CholReport {
    kernel: String,
    times: Vec<f64>,
    applied_jitter: f64,
    l: Vec<Vec<f64>>,
}

fn run_chol(kernel: &KernelArgs, grid: &GridSpec, out: &OutputArgs) -> Result<(), CliError> {
    let spec = resolve_kernel(kernel)?;
    let gram = build_gram(&spec, grid.grid());
    let schedule = default_jitter_schedule(gram.scale());
    let chol = cholesky_psd(&gram, &schedule).map_err(linalg_to_cli)?;
    let text = match pick_format(out, Format::Csv) {
        Format::Csv => matrix_csv(&chol.l),
        Format::Json => json(&CholReport {
            kernel: spec.to_string(),
            times: grid.grid().times().to_vec(),
            applied_jitter: chol.applied_jitter,
            l: matrix_rows(&chol.l),
        })?,
    };
    emit(&text, out)
}

#[derive(Serialize)]
struct SampleReport {
    kernel: String,
    method: String,
    seed: u64,
    applied_jitter: f64,
    times: Vec<f64>,
    paths: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SampleMeta {
    invocation: Vec<String>,
    kernel: String,
    method: String,
    seed: u64,
    n_paths: usize,
    times: Vec<f64>,
    applied_jitter: f64,
}

fn draw_paths(
    kernel: &KernelArgs,
    method: Method,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<SamplePaths, CliError> {
    let seed = SeedSpec::new(seed);
    let no_kernel_flags = |why: &str| -> Result<(), CliError> {
        if kernel.kernel.is_some() || kernel.kernel_json.is_some() || kernel.gamma.is_some() {
            Err(CliError::Usage(format!(
                "--method {} {why}; drop --kernel/--kernel-json/--gamma",
                method.name()
            )))
        } else {
            Ok(())
        }
    };
    let paths = match method {
        Method::Direct => {
            let spec = resolve_kernel(kernel)?;
            sample_gaussian(&spec, grid, n_paths, seed)
        }
        Method::BifbmSum => {
            no_kernel_flags("draws the bifractional kernel from --H and --K")?;
            let (Some(h), Some(k)) = (kernel.hurst, kernel.k) else {
                return Err(CliError::Usage(
                    "--method bifbm-sum requires --H and --K".into(),
                ));
            };
            sample_bifbm_sum(h, k, grid, n_paths, seed)
        }
        Method::FbmDecomposed => {
            no_kernel_flags("draws fractional Brownian motion from --H")?;
            if kernel.k.is_some() {
                return Err(CliError::Usage(
                    "--method fbm-decomposed takes --H only; drop --K".into(),
                ));
            }
            let Some(h) = kernel.hurst else {
                return Err(CliError::Usage("--method fbm-decomposed requires --H".into()));
            };
            sample_fbm_decomposed(h, grid, n_paths, seed)
        }
        Method::Brownian => {
            no_kernel_flags("needs no kernel flags")?;
            if kernel.hurst.is_some() || kernel.k.is_some() {
                return Err(CliError::Usage(
                    "--method brownian takes no kernel flags; drop --H/--K".into(),
                ));
            }
            sample_brownian(grid, n_paths, seed)
        }
    };
    paths.map_err(sample_to_cli)
}

fn run_sample(
    cli: &Cli,
    kernel: &KernelArgs,
    method: Method,
    grid: &GridSpec,
    n_paths: usize,
    seed: u64,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let paths = draw_paths(kernel, method, grid.grid(), n_paths, seed)?;
    let text = match pick_format(out, Format::Csv) {
        Format::Csv => paths_csv(&paths),
        Format::Json => {
            let rows = (0..paths.n_paths()).map(|i| paths.path(i).to_vec()).collect();
            json(&SampleReport {
                kernel: paths.spec().to_string(),
                method: method.name().to_string(),
                seed,
                applied_jitter: paths.applied_jitter(),
                times: grid.grid().times().to_vec(),
                paths: rows,
            })?
        }
    };
    emit(&text, out)?;
    // A sidecar makes the file self-describing; it carries the canonical
    // invocation without --threads, which never affects the draw.
    if let Some(path) = &out.output {
        let mut serial = cli.clone();
        serial.threads = None;
        let meta = SampleMeta {
            invocation: serial.to_argv(),
            kernel: paths.spec().to_string(),
            method: method.name().to_string(),
            seed,
            n_paths,
            times: grid.grid().times().to_vec(),
            applied_jitter: paths.applied_jitter(),
        };
        let mut meta_path = path.as_os_str().to_owned();
        meta_path.push(".meta.json");
        write_file(&PathBuf::from(meta_path), &json(&meta)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    identity: String,
    kernel_a: String,
    kernel_b: String,
    max_abs_deviation: f64,
    argmax: (f64, f64),
    tolerance: f64,
    pass: bool,
}

fn run_verify_decomp(
    identity: Identity,
    hurst: f64,
    k: Option<f64>,
    grid: &GridSpec,
    tol: f64,
    out: &OutputArgs,
) -> Result<(), CliError> {
    require_json(out, "verify-decomp")?;
    let kernel_err = |e: bifbm::KernelError| CliError::Usage(e.to_string());
    let need_k = || {
        k.ok_or_else(|| {
            CliError::Usage(format!("--identity {} requires --K", identity.name()))
        })
    };
    let (a, b) = match identity {
        Identity::Decomp => {
            let k = need_k()?;
            (
                KernelSpec::bif_bm(hurst, k).map_err(kernel_err)?,
                KernelSpec::bifbm_split(hurst, k).map_err(kernel_err)?,
            )
        }
        Identity::LeiNualart => {
            let k = need_k()?;
            (
                KernelSpec::fbm(hurst * k).map_err(kernel_err)?,
                KernelSpec::lei_nualart_split(hurst, k).map_err(kernel_err)?,
            )
        }
        Identity::Corollary => {
            if k.is_some() {
                return Err(CliError::Usage(
                    "--identity corollary takes --H only; drop --K".into(),
                ));
            }
            (
                KernelSpec::fbm(hurst).map_err(kernel_err)?,
                KernelSpec::fbm_split(hurst).map_err(kernel_err)?,
            )
        }
    };
    let report = kernel_agreement(&a, &b, grid.grid(), tol).map_err(analysis_to_cli)?;
    let wrapped = VerifyReport {
        identity: identity.name().to_string(),
        kernel_a: a.to_string(),
        kernel_b: b.to_string(),
        max_abs_deviation: report.max_abs_deviation,
        argmax: report.argmax,
        tolerance: report.tolerance,
        pass: report.pass,
    };
    emit(&json(&wrapped)?, out)?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "identity {} deviates by {} at ({}, {}), tolerance {}",
            identity.name(),
            fmt_f64(report.max_abs_deviation),
            fmt_f64(report.argmax.0),
            fmt_f64(report.argmax.1),
            fmt_f64(tol)
        )))
    }
}

#[derive(Serialize)]
struct OracleCompareReport {
    gamma: f64,
    n_pairs: usize,
    max_abs_error: f64,
    max_rel_error: f64,
    max_scaled_error: f64,
    worst_pair: (f64, f64),
    worst_family: String,
    tolerance: f64,
    pass: bool,
}

fn run_oracle_compare(
    gamma: f64,
    grid: &GridSpec,
    quad_abs_tol: f64,
    quad_rel_tol: f64,
    tol: f64,
    out: &OutputArgs,
) -> Result<(), CliError> {
    require_json(out, "oracle-compare")?;
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(CliError::Usage(format!(
            "--tol must be positive and finite, got {tol}"
        )));
    }
    let q = QuadratureConfig {
        abs_tol: quad_abs_tol,
        rel_tol: quad_rel_tol,
        ..QuadratureConfig::default()
    };
    let report = oracle_report(gamma, grid.grid(), &q).map_err(quad_to_cli)?;
    let pass = report.max_scaled_error <= tol;
    let wrapped = OracleCompareReport {
        gamma: report.gamma,
        n_pairs: report.n_pairs,
        max_abs_error: report.max_abs_error,
        max_rel_error: report.max_rel_error,
        max_scaled_error: report.max_scaled_error,
        worst_pair: report.worst_pair,
        worst_family: report.worst_family.clone(),
        tolerance: tol,
        pass,
    };
    emit(&json(&wrapped)?, out)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "quadrature disagrees with the {} closed form by {} at ({}, {}), tolerance {}",
            report.worst_family,
            fmt_f64(report.max_scaled_error),
            fmt_f64(report.worst_pair.0),
            fmt_f64(report.worst_pair.1),
            fmt_f64(tol)
        )))
    }
}

#[derive(Serialize)]
struct DeviationCheckReport {
    check: String,
    hurst: f64,
    k: f64,
    max_abs_deviation: f64,
    argmax: (f64, f64),
    tolerance: f64,
    pass: bool,
}

fn emit_deviation_check(
    check: &str,
    hurst: f64,
    k: f64,
    report: &bifbm::DeviationReport,
    out: &OutputArgs,
) -> Result<(), CliError> {
    require_json(out, check)?;
    let wrapped = DeviationCheckReport {
        check: check.to_string(),
        hurst,
        k,
        max_abs_deviation: report.max_abs_deviation,
        argmax: report.argmax,
        tolerance: report.tolerance,
        pass: report.pass,
    };
    emit(&json(&wrapped)?, out)?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "{check} deviates by {} at ({}, {}), tolerance {}",
            fmt_f64(report.max_abs_deviation),
            fmt_f64(report.argmax.0),
            fmt_f64(report.argmax.1),
            fmt_f64(report.tolerance)
        )))
    }
}

fn run_self_sim(
    hurst: f64,
    k: f64,
    a: f64,
    grid: &GridSpec,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let report =
        self_similarity_deviation(hurst, k, a, grid.grid()).map_err(analysis_to_cli)?;
    emit_deviation_check("self-sim", hurst, k, &report, out)
}

fn run_lamperti(
    hurst: f64,
    k: f64,
    lags: &[f64],
    bases: &[f64],
    out: &OutputArgs,
) -> Result<(), CliError> {
    let report = lamperti_stationarity(hurst, k, lags, bases).map_err(analysis_to_cli)?;
    emit_deviation_check("lamperti", hurst, k, &report, out)
}

#[derive(Serialize)]
struct QuasihelixCheckReport {
    hurst: f64,
    k: f64,
    min_ratio: f64,
    max_ratio: f64,
    lower_bound: f64,
    upper_bound: f64,
    pass: bool,
}

fn run_quasihelix(
    hurst: f64,
    k: f64,
    grid: &GridSpec,
    out: &OutputArgs,
) -> Result<(), CliError> {
    require_json(out, "quasihelix")?;
    let report = quasihelix_report(hurst, k, grid.grid()).map_err(analysis_to_cli)?;
    let wrapped = QuasihelixCheckReport {
        hurst,
        k,
        min_ratio: report.min_ratio,
        max_ratio: report.max_ratio,
        lower_bound: report.lower_bound,
        upper_bound: report.upper_bound,
        pass: report.pass,
    };
    emit(&json(&wrapped)?, out)?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "increment-variance ratios [{}, {}] escape the bounds [{}, {}]",
            fmt_f64(report.min_ratio),
            fmt_f64(report.max_ratio),
            fmt_f64(report.lower_bound),
            fmt_f64(report.upper_bound)
        )))
    }
}

#[derive(Serialize)]
struct IncrementLimitRow {
    shift: f64,
    error: f64,
}

#[derive(Serialize)]
struct IncrementLimitReport {
    hurst: f64,
    k: f64,
    rows: Vec<IncrementLimitRow>,
    nonincreasing: bool,
}

fn run_increment_limit(
    hurst: f64,
    k: f64,
    shifts: &[f64],
    grid: &Option<GridSpec>,
    out: &OutputArgs,
) -> Result<(), CliError> {
    if shifts.is_empty() || shifts.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CliError::Usage(format!(
            "--T must be a nonempty strictly increasing list, got {shifts:?}"
        )));
    }
    let window = match grid {
        Some(g) => g.grid().clone(),
        None => TimeGrid::uniform(0.0, 1.0, 9).expect("static grid"),
    };
    let rows = shifts
        .iter()
        .map(|&shift| {
            increment_limit_error(hurst, k, shift, &window)
                .map(|error| IncrementLimitRow { shift, error })
                .map_err(analysis_to_cli)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let nonincreasing = rows.windows(2).all(|w| w[1].error <= w[0].error);
    let report = IncrementLimitReport {
        hurst,
        k,
        rows,
        nonincreasing,
    };
    let text = match pick_format(out, Format::Json) {
        Format::Json => json(&report)?,
        Format::Csv => {
            let mut s = String::from("T,error\n");
            for row in &report.rows {
                s.push_str(&format!("{},{}\n", fmt_f64(row.shift), fmt_f64(row.error)));
            }
            s
        }
    };
    emit(&text, out)?;
    if nonincreasing {
        Ok(())
    } else {
        Err(CliError::Check(
            "the far-horizon approximation error grew along --T; expected it to shrink".into(),
        ))
    }
}

#[derive(Serialize)]
struct PVariationRow {
    level: u32,
    intervals: usize,
    mean_sum: f64,
}

#[derive(Serialize)]
struct PVariationReport {
    kernel: String,
    method: String,
    p: f64,
    levels: u32,
    paths: usize,
    seed: u64,
    rows: Vec<PVariationRow>,
}

fn run_p_variation(
    kernel: &KernelArgs,
    method: Method,
    p: f64,
    levels: u32,
    n_paths: usize,
    seed: u64,
    out: &OutputArgs,
) -> Result<(), CliError> {
    // Brownian sampling is O(n) per path; the dense factorizations build
    // an (n+1)^2 Gram matrix, so their depth is capped harder.
    let cap = if method == Method::Brownian { 20 } else { 10 };
    if levels > cap {
        return Err(CliError::Usage(format!(
            "--levels {levels} exceeds the cap of {cap} for --method {}",
            method.name()
        )));
    }
    let n_points = (1usize << levels) + 1;
    let grid = TimeGrid::uniform(0.0, 1.0, n_points)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let paths = draw_paths(kernel, method, &grid, n_paths, seed)?;
    let mut mean: Vec<PVariationLevel> = Vec::new();
    for i in 0..paths.n_paths() {
        let one = p_variation(paths.path(i), paths.grid(), p, levels).map_err(analysis_to_cli)?;
        if mean.is_empty() {
            mean = one;
        } else {
            for (acc, lvl) in mean.iter_mut().zip(&one) {
                acc.sum += lvl.sum;
            }
        }
    }
    for lvl in &mut mean {
        lvl.sum /= paths.n_paths() as f64;
    }
    let text = match pick_format(out, Format::Csv) {
        Format::Csv => p_variation_csv(&mean),
        Format::Json => json(&PVariationReport {
            kernel: paths.spec().to_string(),
            method: method.name().to_string(),
            p,
            levels,
            paths: paths.n_paths(),
            seed,
            rows: mean
                .iter()
                .map(|lvl| PVariationRow {
                    level: lvl.level,
                    intervals: lvl.intervals,
                    mean_sum: lvl.sum,
                })
                .collect(),
        })?,
    };
    emit(&text, out)
}

#[derive(Serialize)]
struct CounterexampleReport {
    gamma: f64,
    a: f64,
    f_of_a: f64,
}

#[derive(Serialize)]
struct ScanExhaustedReport {
    gamma: f64,
    outcome: String,
    note: String,
}

fn run_counterexample(gamma: f64, out: &OutputArgs) -> Result<(), CliError> {
    require_json(out, "counterexample")?;
    match find_negative_a(gamma) {
        Ok(a) => {
            let report = CounterexampleReport {
                gamma,
                a,
                f_of_a: f_counterexample(gamma, a),
            };
            emit(&json(&report)?, out)
        }
        Err(e @ AnalysisError::ScanExhausted { .. }) => {
            let report = ScanExhaustedReport {
                gamma,
                outcome: "scan_exhausted".into(),
                note: e.to_string(),
            };
            emit(&json(&report)?, out)?;
            Err(CliError::Check(e.to_string()))
        }
        Err(other) => Err(analysis_to_cli(other)),
    }
}

fn exploration_grid(grid: &Option<GridSpec>) -> TimeGrid {
    match grid {
        Some(g) => g.grid().clone(),
        None => default_exploration_grid(),
    }
}

fn run_region(
    h_range: (f64, f64),
    k_range: (f64, f64),
    steps: (usize, usize),
    grid: &Option<GridSpec>,
    rel_tol: f64,
    out: &OutputArgs,
) -> Result<(), CliError> {
    let grid = exploration_grid(grid);
    let scan =
        scan_region(h_range, k_range, steps, &grid, rel_tol).map_err(region_to_cli)?;
    let text = match pick_format(out, Format::Csv) {
        Format::Csv => region_csv(&scan),
        Format::Json => json(&scan)?,
    };
    emit(&text, out)
}

#[derive(Serialize)]
struct NoTransitionReport {
    outcome: String,
    h: f64,
    k_max: f64,
    note: String,
}

fn run_critical_k(
    hurst: f64,
    resolution: f64,
    grid: &Option<GridSpec>,
    rel_tol: f64,
    out: &OutputArgs,
) -> Result<(), CliError> {
    require_json(out, "critical-k")?;
    let grid = exploration_grid(grid);
    match critical_k(hurst, &grid, resolution, rel_tol) {
        Ok(outcome) => emit(&json(&outcome)?, out),
        // A fully-PSD sweep is an answer about this grid, not a failure.
        Err(RegionError::NoTransition { h, k_max }) => {
            let report = NoTransitionReport {
                outcome: "no_transition".into(),
                h,
                k_max,
                note: "no transition detected on this grid".into(),
            };
            emit(&json(&report)?, out)
        }
        Err(e) => Err(region_to_cli(e)),
    }
}

fn run_hk_trend(
    h_list: &[f64],
    resolution: f64,
    grid: &Option<GridSpec>,
    rel_tol: f64,
    out: &OutputArgs,
) -> Result<(), CliError> {
    require_json(out, "hk-trend")?;
    let grid = exploration_grid(grid);
    let points = hk_trend(h_list, &grid, resolution, rel_tol).map_err(region_to_cli)?;
    emit(&json(&points)?, out)
}
