//! Flag parsing for the `bifbm` binary: the command tree, the grid and
//! kernel mini-languages, and the canonical argv rendering that makes a
//! parsed configuration reproducible from its own output.

use bifbm::export::fmt_f64;
use bifbm::{KernelSpec, TimeGrid, DEFAULT_PSD_REL_TOL};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

/// Covariance toolkit for the bifractional Brownian family: closed-form
/// kernels, Gram-matrix PSD verification, exact Gaussian sampling,
/// quadrature cross-checks, and (H, K) region exploration.
///
/// Exit codes: 0 when the command and every check it implies succeeded,
/// 1 when a requested check failed, 2 on usage or I/O errors.
#[derive(Parser, Debug, Clone, PartialEq)]
#[command(name = "bifbm", version, max_term_width = 100)]
pub struct Cli {
    /// Cap worker threads; the output is identical for any value.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Evaluate a kernel at one pair of times.
    Eval {
        #[command(flatten)]
        kernel: KernelArgs,
        /// First time argument (finite, nonnegative).
        #[arg(long)]
        s: f64,
        /// Second time argument (finite, nonnegative).
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Print the Gram matrix of a kernel on a grid (CSV by default).
    Gram {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: GridSpec,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Check the Gram matrix for positive semidefiniteness; exit 1 if it
    /// is not PSD (the report is emitted either way).
    PsdCheck {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: GridSpec,
        /// PSD means min eigenvalue >= -rel-tol * max(scale, 1).
        #[arg(long, default_value_t = DEFAULT_PSD_REL_TOL)]
        rel_tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Cholesky factor of the Gram matrix, retrying with escalating
    /// diagonal jitter; exit 1 if the matrix is genuinely not PSD.
    Chol {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: GridSpec,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Draw exact Gaussian sample paths (CSV by default: header row of
    /// times, one row per path). With --output, a .meta.json sidecar
    /// records the reproduction recipe.
    Sample {
        #[command(flatten)]
        kernel: KernelArgs,
        /// How to draw: direct Cholesky of the kernel, one of the
        /// decomposition samplers, or plain Brownian motion.
        #[arg(long, value_enum, default_value_t = Method::Direct)]
        method: Method,
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: GridSpec,
        /// Number of independent paths.
        #[arg(long, default_value_t = 1)]
        paths: usize,
        /// Master seed; every draw is a pure function of it.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Check a closed-form covariance identity pointwise on a grid;
    /// exit 1 if the deviation exceeds --tol.
    VerifyDecomp {
        /// Which identity to check.
        #[arg(long, value_enum, default_value_t = Identity::Decomp)]
        identity: Identity,
        #[arg(long = "H", value_name = "H")]
        hurst: f64,
        /// Required for decomp and lei-nualart, absent for corollary.
        #[arg(long = "K", value_name = "K")]
        k: Option<f64>,
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: GridSpec,
        /// Max allowed deviation, normalized by max(1, |values|).
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Rebuild C_gamma and Q_gamma by adaptive quadrature and compare
    /// against the closed forms; exit 1 if they disagree beyond --tol.
    OracleCompare {
        #[arg(long)]
        gamma: f64,
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: GridSpec,
        /// Absolute error budget per integral.
        #[arg(long, default_value_t = 1e-9)]
        quad_abs_tol: f64,
        /// Relative acceptance threshold inside the subdivision.
        #[arg(long, default_value_t = 1e-9)]
        quad_rel_tol: f64,
        /// Acceptance threshold on |closed - quadrature| / max(1, |closed|).
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Structural checks at the covariance level.
    Analyze {
        #[command(subcommand)]
        check: AnalyzeCommand,
    },
    /// Scan the PSD verdict of the bifractional kernel over an (H, K)
    /// lattice (CSV heatmap data by default).
    Region {
        #[arg(long)]
        h_min: f64,
        #[arg(long)]
        h_max: f64,
        #[arg(long)]
        k_min: f64,
        #[arg(long)]
        k_max: f64,
        #[arg(long, default_value_t = 12)]
        h_steps: usize,
        #[arg(long, default_value_t = 12)]
        k_steps: usize,
        /// Time grid; defaults to 24 geometric points on [2^-6, 2^6]
        /// plus t = 1000.
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: Option<GridSpec>,
        #[arg(long, default_value_t = DEFAULT_PSD_REL_TOL)]
        rel_tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Bracket the K where the Gram matrix stops being PSD for fixed H,
    /// on the chosen grid (JSON only). Finding no transition is a valid
    /// outcome and exits 0.
    CriticalK {
        #[arg(long = "H", value_name = "H")]
        hurst: f64,
        /// Final bracket width.
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: Option<GridSpec>,
        #[arg(long, default_value_t = DEFAULT_PSD_REL_TOL)]
        rel_tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Critical-K brackets along a list of H values; observational
    /// output (JSON only), no pass/fail.
    HkTrend {
        /// Comma-separated H values, strictly increasing, each > 1.
        #[arg(long, value_delimiter = ',', required = true)]
        h_list: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: Option<GridSpec>,
        #[arg(long, default_value_t = DEFAULT_PSD_REL_TOL)]
        rel_tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum AnalyzeCommand {
    /// Deviation from self-similarity of order 2HK under scaling by --a;
    /// exit 1 beyond 1e-12.
    SelfSim {
        #[arg(long = "H", value_name = "H")]
        hurst: f64,
        #[arg(long = "K", value_name = "K")]
        k: f64,
        /// Time scaling factor.
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: GridSpec,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Stationarity of the Lamperti transform: the covariance at
    /// (base + lag, base) must not depend on the base; exit 1 beyond
    /// 1e-10.
    Lamperti {
        #[arg(long = "H", value_name = "H")]
        hurst: f64,
        #[arg(long = "K", value_name = "K")]
        k: f64,
        /// Comma-separated lags (log-time differences).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
              default_values_t = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0])]
        lags: Vec<f64>,
        /// Comma-separated base points in log time.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
              default_values_t = [-2.0, -1.0, 0.0, 1.0, 2.0])]
        bases: Vec<f64>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Increment-variance ratio bounds [2^-K, 2^(1-K)]; exit 1 if any
    /// ratio escapes by more than 1e-12.
    Quasihelix {
        #[arg(long = "H", value_name = "H")]
        hurst: f64,
        #[arg(long = "K", value_name = "K")]
        k: f64,
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: GridSpec,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Error of the far-horizon increment field against fbm of index HK,
    /// per shift T; exit 1 unless nonincreasing in T.
    IncrementLimit {
        #[arg(long = "H", value_name = "H")]
        hurst: f64,
        #[arg(long = "K", value_name = "K")]
        k: f64,
        /// Comma-separated shifts T, strictly increasing.
        #[arg(long = "T", value_delimiter = ',',
              default_values_t = [10.0, 100.0, 1000.0, 10000.0])]
        shifts: Vec<f64>,
        /// Increment window; defaults to uniform:0:1:9.
        #[arg(long, value_parser = parse_grid_spec, value_name = "SPEC")]
        grid: Option<GridSpec>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Dyadic p-variation sums of sampled paths on [0, 1] (CSV
    /// level,sum by default; sums averaged over paths). Observational.
    PVariation {
        #[command(flatten)]
        kernel: KernelArgs,
        /// Sampling route; brownian supports much deeper levels than the
        /// dense factorizations.
        #[arg(long, value_enum, default_value_t = Method::Direct)]
        method: Method,
        /// Variation order.
        #[arg(long)]
        p: f64,
        /// Dyadic depth: the path has 2^levels + 1 points.
        #[arg(long, default_value_t = 8)]
        levels: u32,
        #[arg(long, default_value_t = 1)]
        paths: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Witness that the x^gamma quadratic form goes negative for
    /// gamma > 1: scans a = 2^-k (JSON only). Exhausting the scan exits 1.
    Counterexample {
        #[arg(long)]
        gamma: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelFamily {
    /// Bifractional Brownian motion; needs --H and --K.
    Bifbm,
    /// Fractional Brownian motion; needs --H in (0, 1].
    Fbm,
    /// (s + t)^gamma - max^gamma; needs --gamma.
    Cgamma,
    /// max^gamma - |t - s|^gamma; needs --gamma.
    Qgamma,
    /// Smooth remainder linking fbm(HK) to bifbm; needs --H and --K.
    Remainder,
    /// Brownian motion min(s, t); no parameters.
    Min,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Bifbm => "bifbm",
            KernelFamily::Fbm => "fbm",
            KernelFamily::Cgamma => "cgamma",
            KernelFamily::Qgamma => "qgamma",
            KernelFamily::Remainder => "remainder",
            KernelFamily::Min => "min",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Cholesky of the requested kernel's Gram matrix.
    Direct,
    /// Two independent components of the bifractional split; needs --H
    /// and --K in the theorem region (K <= 1, 2HK <= 1).
    BifbmSum,
    /// Time-rescaled Brownian plus an independent component; needs --H
    /// in (0, 1/2].
    FbmDecomposed,
    /// Standard Brownian motion via increments; no kernel flags.
    Brownian,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::BifbmSum => "bifbm-sum",
            Method::FbmDecomposed => "fbm-decomposed",
            Method::Brownian => "brownian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Identity {
    /// R_{H,K} = 2^-K C_K(s^2H, t^2H) + 2^-K Q_2HK(s, t).
    Decomp,
    /// fbm(HK) = 2^(K-1) R_{H,K} + remainder; needs K in (0, 1] and
    /// HK <= 1.
    LeiNualart,
    /// fbm(H) = (Q_2H + min^2H) / 2 for H <= 1/2; takes --H only.
    Corollary,
}

impl Identity {
    pub fn name(self) -> &'static str {
        match self {
            Identity::Decomp => "decomp",
            Identity::LeiNualart => "lei-nualart",
            Identity::Corollary => "corollary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Kernel selection shared by several subcommands. Either a named family
/// plus its parameter flags, or a full kernel tree as JSON (the only way
/// to express time changes, scalings, and sums from the command line).
#[derive(Args, Debug, Clone, PartialEq)]
pub struct KernelArgs {
    /// Kernel family; see each variant for the flags it needs.
    #[arg(long, value_enum, conflicts_with = "kernel_json")]
    pub kernel: Option<KernelFamily>,
    /// Hurst exponent H.
    #[arg(long = "H", value_name = "H")]
    pub hurst: Option<f64>,
    /// Second bifractional parameter K.
    #[arg(long = "K", value_name = "K")]
    pub k: Option<f64>,
    /// Exponent for the cgamma/qgamma families.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Full kernel tree as JSON, e.g.
    /// '{"family":"scale","base":{"family":"min"},"factor":2.0}'.
    #[arg(long, value_name = "JSON")]
    pub kernel_json: Option<String>,
}

impl KernelArgs {
    /// Builds the kernel, rejecting missing or extraneous parameter flags.
    pub fn resolve(&self) -> Result<KernelSpec, String> {
        if let Some(json) = &self.kernel_json {
            if self.hurst.is_some() || self.k.is_some() || self.gamma.is_some() {
                return Err(
                    "--kernel-json carries all parameters; drop --H/--K/--gamma".into(),
                );
            }
            let spec: KernelSpec =
                serde_json::from_str(json).map_err(|e| format!("bad --kernel-json: {e}"))?;
            spec.validate().map_err(|e| e.to_string())?;
            return Ok(spec);
        }
        let Some(family) = self.kernel else {
            return Err("one of --kernel or --kernel-json is required".into());
        };
        let take = |x: Option<f64>, flag: &str| {
            x.ok_or_else(|| format!("--kernel {} requires {flag}", family.name()))
        };
        let none = |x: Option<f64>, flag: &str| match x {
            Some(_) => Err(format!("--kernel {} does not take {flag}", family.name())),
            None => Ok(()),
        };
        let spec = match family {
            KernelFamily::Bifbm => {
                none(self.gamma, "--gamma")?;
                KernelSpec::bif_bm(take(self.hurst, "--H")?, take(self.k, "--K")?)
            }
            KernelFamily::Fbm => {
                none(self.k, "--K")?;
                none(self.gamma, "--gamma")?;
                KernelSpec::fbm(take(self.hurst, "--H")?)
            }
            KernelFamily::Cgamma => {
                none(self.hurst, "--H")?;
                none(self.k, "--K")?;
                KernelSpec::c_gamma(take(self.gamma, "--gamma")?)
            }
            KernelFamily::Qgamma => {
                none(self.hurst, "--H")?;
                none(self.k, "--K")?;
                KernelSpec::q_gamma(take(self.gamma, "--gamma")?)
            }
            KernelFamily::Remainder => {
                none(self.gamma, "--gamma")?;
                KernelSpec::lei_nualart_remainder(take(self.hurst, "--H")?, take(self.k, "--K")?)
            }
            KernelFamily::Min => {
                none(self.hurst, "--H")?;
                none(self.k, "--K")?;
                none(self.gamma, "--gamma")?;
                Ok(KernelSpec::min_kernel())
            }
        };
        spec.map_err(|e| e.to_string())
    }

    fn push_argv(&self, v: &mut Vec<String>) {
        if let Some(json) = &self.kernel_json {
            push_str(v, "--kernel-json", json.clone());
            return;
        }
        if let Some(family) = self.kernel {
            push_str(v, "--kernel", family.name());
        }
        if let Some(h) = self.hurst {
            push_f64(v, "--H", h);
        }
        if let Some(k) = self.k {
            push_f64(v, "--K", k);
        }
        if let Some(g) = self.gamma {
            push_f64(v, "--gamma", g);
        }
    }
}

/// Where and how to emit the report.
#[derive(Args, Debug, Clone, PartialEq)]
pub struct OutputArgs {
    /// csv or json; each subcommand documents its default.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

impl OutputArgs {
    fn push_argv(&self, v: &mut Vec<String>) {
        if let Some(fmt) = self.format {
            push_str(v, "--format", fmt.name());
        }
        if let Some(path) = &self.output {
            push_str(v, "--output", path.to_string_lossy().into_owned());
        }
    }
}

/// A time grid plus the flag text it came from; the text is kept verbatim
/// so configurations can be rendered back to an equivalent command line.
#[derive(Debug, Clone)]
pub struct GridSpec {
    raw: String,
    grid: TimeGrid,
}

impl GridSpec {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.raw == other.raw
    }
}

/// Grid mini-language: `uniform:a:b:n`, `geom:a:b:n`, or `list:t1,t2,...`.
pub fn parse_grid_spec(raw: &str) -> Result<GridSpec, String> {
    let (kind, rest) = raw.split_once(':').ok_or_else(|| {
        format!("grid spec {raw:?} has no generator; use uniform:a:b:n, geom:a:b:n, or list:t1,t2,...")
    })?;
    let grid = match kind {
        "uniform" | "geom" => {
            let parts: Vec<&str> = rest.split(':').collect();
            let [a, b, n] = parts.as_slice() else {
                return Err(format!("{kind} grid takes a:b:n, got {rest:?}"));
            };
            let a: f64 = a.parse().map_err(|e| format!("bad grid start {a:?}: {e}"))?;
            let b: f64 = b.parse().map_err(|e| format!("bad grid end {b:?}: {e}"))?;
            let n: usize = n.parse().map_err(|e| format!("bad grid size {n:?}: {e}"))?;
            if kind == "uniform" {
                TimeGrid::uniform(a, b, n)
            } else {
                TimeGrid::geometric(a, b, n)
            }
            .map_err(|e| e.to_string())?
        }
        "list" => {
            let times = rest
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|e| format!("bad grid time {p:?}: {e}"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            TimeGrid::new(times).map_err(|e| e.to_string())?
        }
        other => {
            return Err(format!(
                "unknown grid generator {other:?}; use uniform, geom, or list"
            ))
        }
    };
    Ok(GridSpec {
        raw: raw.to_string(),
        grid,
    })
}

fn push_str(v: &mut Vec<String>, flag: &str, value: impl Into<String>) {
    v.push(flag.to_string());
    v.push(value.into());
}

fn push_f64(v: &mut Vec<String>, flag: &str, x: f64) {
    push_str(v, flag, fmt_f64(x));
}

fn push_usize(v: &mut Vec<String>, flag: &str, n: usize) {
    push_str(v, flag, n.to_string());
}

fn push_list(v: &mut Vec<String>, flag: &str, xs: &[f64]) {
    let joined = xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",");
    push_str(v, flag, joined);
}

fn push_grid(v: &mut Vec<String>, spec: &GridSpec) {
    push_str(v, "--grid", spec.raw().to_string());
}

fn push_grid_opt(v: &mut Vec<String>, spec: &Option<GridSpec>) {
    if let Some(g) = spec {
        push_grid(v, g);
    }
}

impl Cli {
    /// Renders the configuration back to an equivalent argument vector
    /// (without the program name): defaults made explicit, reals in
    /// 17-significant-digit form, flags in a fixed order. Reparsing the
    /// result yields an equal configuration.
    pub fn to_argv(&self) -> Vec<String> {
        let mut v = Vec::new();
        match &self.command {
            Command::Eval { kernel, s, t, out } => {
                v.push("eval".into());
                kernel.push_argv(&mut v);
                push_f64(&mut v, "--s", *s);
                push_f64(&mut v, "--t", *t);
                out.push_argv(&mut v);
            }
            Command::Gram { kernel, grid, out } => {
                v.push("gram".into());
                kernel.push_argv(&mut v);
                push_grid(&mut v, grid);
                out.push_argv(&mut v);
            }
            Command::PsdCheck {
                kernel,
                grid,
                rel_tol,
                out,
            } => {
                v.push("psd-check".into());
                kernel.push_argv(&mut v);
                push_grid(&mut v, grid);
                push_f64(&mut v, "--rel-tol", *rel_tol);
                out.push_argv(&mut v);
            }
            Command::Chol { kernel, grid, out } => {
                v.push("chol".into());
                kernel.push_argv(&mut v);
                push_grid(&mut v, grid);
                out.push_argv(&mut v);
            }
            Command::Sample {
                kernel,
                method,
                grid,
                paths,
                seed,
                out,
            } => {
                v.push("sample".into());
                kernel.push_argv(&mut v);
                push_str(&mut v, "--method", method.name());
                push_grid(&mut v, grid);
                push_usize(&mut v, "--paths", *paths);
                push_str(&mut v, "--seed", seed.to_string());
                out.push_argv(&mut v);
            }
            Command::VerifyDecomp {
                identity,
                hurst,
                k,
                grid,
                tol,
                out,
            } => {
                v.push("verify-decomp".into());
                push_str(&mut v, "--identity", identity.name());
                push_f64(&mut v, "--H", *hurst);
                if let Some(k) = k {
                    push_f64(&mut v, "--K", *k);
                }
                push_grid(&mut v, grid);
                push_f64(&mut v, "--tol", *tol);
                out.push_argv(&mut v);
            }
            Command::OracleCompare {
                gamma,
                grid,
                quad_abs_tol,
                quad_rel_tol,
                tol,
                out,
            } => {
                v.push("oracle-compare".into());
                push_f64(&mut v, "--gamma", *gamma);
                push_grid(&mut v, grid);
                push_f64(&mut v, "--quad-abs-tol", *quad_abs_tol);
                push_f64(&mut v, "--quad-rel-tol", *quad_rel_tol);
                push_f64(&mut v, "--tol", *tol);
                out.push_argv(&mut v);
            }
            Command::Analyze { check } => {
                v.push("analyze".into());
                check.push_argv(&mut v);
            }
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
            } => {
                v.push("region".into());
                push_f64(&mut v, "--h-min", *h_min);
                push_f64(&mut v, "--h-max", *h_max);
                push_f64(&mut v, "--k-min", *k_min);
                push_f64(&mut v, "--k-max", *k_max);
                push_usize(&mut v, "--h-steps", *h_steps);
                push_usize(&mut v, "--k-steps", *k_steps);
                push_grid_opt(&mut v, grid);
                push_f64(&mut v, "--rel-tol", *rel_tol);
                out.push_argv(&mut v);
            }
            Command::CriticalK {
                hurst,
                resolution,
                grid,
                rel_tol,
                out,
            } => {
                v.push("critical-k".into());
                push_f64(&mut v, "--H", *hurst);
                push_f64(&mut v, "--resolution", *resolution);
                push_grid_opt(&mut v, grid);
                push_f64(&mut v, "--rel-tol", *rel_tol);
                out.push_argv(&mut v);
            }
            Command::HkTrend {
                h_list,
                resolution,
                grid,
                rel_tol,
                out,
            } => {
                v.push("hk-trend".into());
                push_list(&mut v, "--h-list", h_list);
                push_f64(&mut v, "--resolution", *resolution);
                push_grid_opt(&mut v, grid);
                push_f64(&mut v, "--rel-tol", *rel_tol);
                out.push_argv(&mut v);
            }
        }
        if let Some(n) = self.threads {
            push_usize(&mut v, "--threads", n);
        }
        v
    }
}

impl AnalyzeCommand {
    fn push_argv(&self, v: &mut Vec<String>) {
        match self {
            AnalyzeCommand::SelfSim {
                hurst,
                k,
                a,
                grid,
                out,
            } => {
                v.push("self-sim".into());
                push_f64(v, "--H", *hurst);
                push_f64(v, "--K", *k);
                push_f64(v, "--a", *a);
                push_grid(v, grid);
                out.push_argv(v);
            }
            AnalyzeCommand::Lamperti {
                hurst,
                k,
                lags,
                bases,
                out,
            } => {
                v.push("lamperti".into());
                push_f64(v, "--H", *hurst);
                push_f64(v, "--K", *k);
                push_list(v, "--lags", lags);
                push_list(v, "--bases", bases);
                out.push_argv(v);
            }
            AnalyzeCommand::Quasihelix { hurst, k, grid, out } => {
                v.push("quasihelix".into());
                push_f64(v, "--H", *hurst);
                push_f64(v, "--K", *k);
                push_grid(v, grid);
                out.push_argv(v);
            }
            AnalyzeCommand::IncrementLimit {
                hurst,
                k,
                shifts,
                grid,
                out,
            } => {
                v.push("increment-limit".into());
                push_f64(v, "--H", *hurst);
                push_f64(v, "--K", *k);
                push_list(v, "--T", shifts);
                push_grid_opt(v, grid);
                out.push_argv(v);
            }
            AnalyzeCommand::PVariation {
                kernel,
                method,
                p,
                levels,
                paths,
                seed,
                out,
            } => {
                v.push("p-variation".into());
                kernel.push_argv(v);
                push_str(v, "--method", method.name());
                push_f64(v, "--p", *p);
                push_str(v, "--levels", levels.to_string());
                push_usize(v, "--paths", *paths);
                push_str(v, "--seed", seed.to_string());
                out.push_argv(v);
            }
            AnalyzeCommand::Counterexample { gamma, out } => {
                v.push("counterexample".into());
                push_f64(v, "--gamma", *gamma);
                out.push_argv(v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::error::ErrorKind;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("bifbm").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn grid_language_parses_all_generators() {
        let g = parse_grid_spec("uniform:0:1:5").unwrap();
        assert_eq!(g.grid().times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = parse_grid_spec("geom:0.015625:64:24").unwrap();
        assert_eq!(g.grid().len(), 24);
        assert_eq!(g.grid().times()[0], 0.015625);
        assert_eq!(g.grid().times()[23], 64.0);
        let g = parse_grid_spec("list:1,2.5,10").unwrap();
        assert_eq!(g.grid().times(), &[1.0, 2.5, 10.0]);
    }

    #[test]
    fn grid_language_rejects_malformed_specs() {
        for bad in [
            "nogenerator",
            "uniform:0:1",
            "uniform:0:1:5:9",
            "geom:0:1:x",
            "geom:0:1:5", // geometric needs a > 0
            "list:3,2,1", // not increasing
            "list:",
            "spiral:0:1:5",
        ] {
            assert!(parse_grid_spec(bad).is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn kernel_resolution_enforces_flag_sets() {
        let args = parse(&["eval", "--kernel", "bifbm", "--H", "2", "--K", "0.25", "--s", "1", "--t", "2"]);
        let Command::Eval { kernel, .. } = &args.command else {
            panic!()
        };
        assert_eq!(kernel.resolve().unwrap().to_string(), "bifbm(H=2, K=0.25)");

        let missing = parse(&["eval", "--kernel", "bifbm", "--H", "2", "--s", "1", "--t", "2"]);
        let Command::Eval { kernel, .. } = &missing.command else {
            panic!()
        };
        assert!(kernel.resolve().unwrap_err().contains("--K"));

        let extra = parse(&["eval", "--kernel", "min", "--gamma", "3", "--s", "1", "--t", "2"]);
        let Command::Eval { kernel, .. } = &extra.command else {
            panic!()
        };
        assert!(kernel.resolve().unwrap_err().contains("does not take"));
    }

    #[test]
    fn kernel_json_expresses_combinators() {
        let json = r#"{"family":"scale","base":{"family":"time_change","base":{"family":"c_gamma","gamma":0.25},"theta":4.0},"factor":0.5}"#;
        let args = parse(&["eval", "--kernel-json", json, "--s", "1", "--t", "2"]);
        let Command::Eval { kernel, .. } = &args.command else {
            panic!()
        };
        let spec = kernel.resolve().unwrap();
        assert_eq!(spec.to_string(), "scale(time_change(cgamma(0.25), theta=4), 0.5)");

        let bad = r#"{"family":"fbm","hurst":2.0}"#;
        let args = parse(&["eval", "--kernel-json", bad, "--s", "1", "--t", "2"]);
        let Command::Eval { kernel, .. } = &args.command else {
            panic!()
        };
        assert!(kernel.resolve().is_err());
    }

    #[test]
    fn kernel_and_kernel_json_conflict() {
        let err = Cli::try_parse_from([
            "bifbm", "eval", "--kernel", "min", "--kernel-json", "{}", "--s", "1", "--t", "2",
        ])
        .unwrap_err();
        assert_eq!(err.kind(), ErrorKind::ArgumentConflict);
    }

    #[test]
    fn defaults_are_applied() {
        let args = parse(&["sample", "--kernel", "min", "--grid", "uniform:0:1:3"]);
        let Command::Sample { paths, seed, method, .. } = &args.command else {
            panic!()
        };
        assert_eq!(*paths, 1);
        assert_eq!(*seed, 42);
        assert_eq!(*method, Method::Direct);
    }

    #[test]
    fn round_trips_reproduce_the_parse() {
        let cases: &[&[&str]] = &[
            &["eval", "--kernel", "qgamma", "--gamma", "3", "--s", "1", "--t", "2"],
            &["gram", "--kernel", "min", "--grid", "list:1,2,3", "--format", "json"],
            &["psd-check", "--kernel", "bifbm", "--H", "2", "--K", "0.25",
              "--grid", "geom:0.015625:64:24"],
            &["chol", "--kernel", "fbm", "--H", "0.5", "--grid", "uniform:0.5:2:4",
              "--output", "/tmp/l.csv"],
            &["sample", "--kernel", "bifbm", "--H", "2", "--K", "0.25",
              "--grid", "geom:0.25:4:8", "--paths", "100", "--seed", "7",
              "--format", "json", "--threads", "2"],
            &["sample", "--method", "fbm-decomposed", "--H", "0.3",
              "--grid", "uniform:0:1:5"],
            &["verify-decomp", "--H", "2", "--K", "0.25", "--grid", "geom:0.25:4:8"],
            &["verify-decomp", "--identity", "corollary", "--H", "0.3",
              "--grid", "geom:0.25:4:8", "--tol", "1e-13"],
            &["oracle-compare", "--gamma", "0.5", "--grid", "geom:0.25:4:8"],
            &["analyze", "self-sim", "--H", "2", "--K", "0.25", "--a", "10",
              "--grid", "geom:0.25:4:8"],
            &["analyze", "lamperti", "--H", "1.2", "--K", "0.4",
              "--bases", "-2,-1,0,1", "--lags", "0,0.5,1"],
            &["analyze", "quasihelix", "--H", "2", "--K", "0.25",
              "--grid", "geom:0.015625:64:24"],
            &["analyze", "increment-limit", "--H", "2", "--K", "0.25",
              "--T", "10,100,1000"],
            &["analyze", "p-variation", "--method", "brownian", "--p", "2",
              "--levels", "10", "--paths", "4"],
            &["analyze", "counterexample", "--gamma", "1.5"],
            &["region", "--h-min", "0.25", "--h-max", "4", "--k-min", "0.05",
              "--k-max", "1", "--h-steps", "6", "--k-steps", "6"],
            &["critical-k", "--H", "1.5", "--resolution", "0.02",
              "--grid", "list:1,4,16,1000"],
            &["hk-trend", "--h-list", "1.5,2,3", "--threads", "1"],
        ];
        for case in cases {
            let first = parse(case);
            let rendered = first.to_argv();
            let rendered_refs: Vec<&str> = rendered.iter().map(String::as_str).collect();
            let second = parse(&rendered_refs);
            assert_eq!(first, second, "round trip changed {case:?} -> {rendered:?}");
            // Canonical form is a fixed point.
            assert_eq!(second.to_argv(), rendered);
        }
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        let err = Cli::try_parse_from(["bifbm", "eval", "--nope", "1"]).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::UnknownArgument);
        let err = Cli::try_parse_from(["bifbm", "frobnicate"]).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::InvalidSubcommand);
    }
}
