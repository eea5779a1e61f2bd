//! `sketchreg`: synthetic instances, sweeps, tail scans, CSV ingestion and
//! bound tables from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use sketchreg::datagen::{Base, SpectrumSpec, SynthParams, SyntheticInstance};
use sketchreg::linalg::{tail_sums, DesignMatrix};
use sketchreg::pipeline::ingest::{ingest_csv, IngestOptions};
use sketchreg::pipeline::tables::{fmt_f64, write_tsv};
use sketchreg::pipeline::{emit_tables, run_sweep, ExperimentConfig};
use sketchreg::risk::{evaluate_bounds, scenario_optimum, BoundInputs, GroundTruth};
use sketchreg::tail::{estimate_delta_sq, TailOptions};
use sketchreg::{Error, SketchKind, SketchSpec};

#[derive(Debug, Parser)]
#[command(name = "sketchreg", version, about = "Randomized dimension reduction for fixed-design regression")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic instance (CSV, w* and metadata).
    Synth {
        #[command(flatten)]
        design: SynthArgs,
        /// File stem of the written instance.
        #[arg(long, default_value = "instance")]
        stem: String,
    },
    /// Run an experiment config and write summary tables.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate the tail energy over a grid of sketch widths.
    Tailscan {
        #[command(flatten)]
        source: DesignSource,
        #[arg(long, default_value = "gaussian")]
        kind: SketchKind,
        #[arg(long, default_value_t = 1)]
        kmin: usize,
        #[arg(long)]
        kmax: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Number of Gaussian probes `L`.
        #[arg(long, default_value_t = 36)]
        probes: usize,
        /// Also compute the exact tail energy.
        #[arg(long)]
        exact: bool,
        /// Draw an independent sketch for every k instead of nested prefixes.
        #[arg(long)]
        independent: bool,
        /// Draw fresh probes for every k.
        #[arg(long)]
        refresh_probes: bool,
    },
    /// Parse a CSV file into a design and response.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// 1-based response column.
        #[arg(long, default_value_t = 1)]
        y_col: usize,
        /// Comma-separated 1-based columns to log1p-transform.
        #[arg(long, value_delimiter = ',')]
        log_cols: Vec<usize>,
        /// Comma-separated 1-based columns to expand into quadratic interactions.
        #[arg(long, value_delimiter = ',')]
        interact_cols: Vec<usize>,
    },
    /// Evaluate every risk bound for an instance over an (r, α) grid.
    Bounds {
        #[command(flatten)]
        source: DesignSource,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        r_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,1.2,1.5,2,2.5,3")]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        eps1: f64,
        #[arg(long, default_value_t = 0.5)]
        eps2: f64,
        #[arg(long, default_value_t = 2.0)]
        kaban_c: f64,
    },
}

#[derive(Debug, Clone, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    d: usize,
    /// `flat`, `polynomial:<q>` or `exponential[:<θ>]`.
    #[arg(long, default_value = "polynomial:2")]
    spectrum: SpectrumSpec,
    #[arg(long, default_value = "gaussian")]
    base: Base,
    /// Noise level of the response.
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
}

#[derive(Debug, Clone, Args)]
struct DesignSource {
    /// Instance written by `synth`, given as `<dir>/<stem>`; otherwise one is generated.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Lib(Error::Argument(_)) => 1,
            Failure::Lib(Error::Parse { .. } | Error::Data(_) | Error::Config(_) | Error::Io(_)) => 2,
            Failure::Lib(Error::Numerical { .. } | Error::Scaling { .. }) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be ≥ 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let seed = cli.seed.unwrap_or(0);
    let outdir = cli.outdir.clone().unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Synth { design, stem } => synth(&design, &stem, seed, &outdir),
        Command::Sweep { config } => sweep(&config, cli.seed, cli.outdir),
        Command::Tailscan {
            source,
            kind,
            kmin,
            kmax,
            stride,
            probes,
            exact,
            independent,
            refresh_probes,
        } => {
            let opts = TailOptions {
                nested: !independent,
                refresh_probes,
                with_exact: exact,
            };
            tailscan(&source, kind, (kmin, kmax, stride), probes, opts, seed, &outdir)
        }
        Command::Ingest {
            input,
            y_col,
            log_cols,
            interact_cols,
        } => ingest(
            &input,
            &IngestOptions {
                y_col,
                log_cols,
                interact_cols,
            },
            &outdir,
        ),
        Command::Bounds {
            source,
            r_grid,
            alpha,
            eps1,
            eps2,
            kaban_c,
        } => bounds(&source, &r_grid, &alpha, (eps1, eps2, kaban_c), seed, &outdir),
    }
}

fn params(a: &SynthArgs, seed: u64) -> SynthParams {
    SynthParams {
        n: a.n,
        d: a.d,
        spectrum: a.spectrum,
        base: a.base,
        sigma: a.sigma,
        seed,
    }
}

fn load_instance(src: &DesignSource, seed: u64) -> CliResult<SyntheticInstance> {
    match &src.instance {
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let stem = path
                .file_name()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Failure::Usage(format!("bad instance path {}", path.display())))?;
            Ok(SyntheticInstance::read(dir, stem)?)
        }
        None => Ok(SyntheticInstance::generate(params(&src.synth, seed))?),
    }
}

fn synth(args: &SynthArgs, stem: &str, seed: u64, outdir: &Path) -> CliResult<()> {
    let inst = SyntheticInstance::generate(params(args, seed))?;
    let paths = inst.write(outdir, stem)?;
    println!("wrote {}", paths.data.display());
    println!("wrote {}", paths.wstar.display());
    println!("wrote {}", paths.meta.display());
    Ok(())
}

fn sweep(config: &Path, seed: Option<u64>, outdir: Option<PathBuf>) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = outdir {
        cfg.outdir = o;
    }
    let rows = run_sweep(&cfg)?;
    let failed = rows.iter().filter(|r| r.failed.is_some()).count();
    for path in emit_tables(&rows, &cfg, &cfg.outdir)? {
        println!("wrote {}", path.display());
    }
    println!("{} rows, {failed} failed", rows.len());
    Ok(())
}

fn tailscan(
    src: &DesignSource,
    kind: SketchKind,
    (kmin, kmax, stride): (usize, usize, usize),
    probes: usize,
    opts: TailOptions,
    seed: u64,
    outdir: &Path,
) -> CliResult<()> {
    if stride == 0 || kmin > kmax {
        return Err(Failure::Usage("need stride ≥ 1 and kmin ≤ kmax".into()));
    }
    let inst = load_instance(src, seed)?;
    let d = inst.x.ncols();
    let grid: Vec<usize> = (kmin..=kmax).step_by(stride).collect();
    let spec = SketchSpec::new(kind, d, kmax.max(1).min(if kind == SketchKind::Subsample { d } else { usize::MAX }), seed)?;
    let est = estimate_delta_sq(&inst.x, &spec, &grid, probes, seed ^ 0x7072_6f62, opts)?;

    let mut header = vec!["k", "estimate"];
    if est.exact.is_some() {
        header.push("exact");
    }
    let rows: Vec<Vec<String>> = est
        .k_grid
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let mut r = vec![k.to_string(), fmt_f64(est.estimates[i])];
            if let Some(ex) = &est.exact {
                r.push(fmt_f64(ex[i]));
            }
            r
        })
        .collect();
    fs::create_dir_all(outdir).map_err(Error::from)?;
    let path = outdir.join("tailscan.tsv");
    write_tsv(&path, &header, &rows)?;
    let meta = format!(
        "kind = {}\nprobes = {}\nprobe_seed = {}\nsketch_seed = {}\nnested = {}\nshared_probes = {}\n",
        kind.name(),
        est.probes,
        est.probe_seed,
        est.sketch_seed,
        est.nested,
        est.shared_probes
    );
    fs::write(outdir.join("tailscan.meta"), meta).map_err(Error::from)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn ingest(input: &Path, opts: &IngestOptions, outdir: &Path) -> CliResult<()> {
    let ds = ingest_csv(input, opts)?;
    DesignMatrix::new(ds.x.clone())?;
    fs::create_dir_all(outdir).map_err(Error::from)?;
    let mut text = String::from("y");
    for name in &ds.names {
        text.push(',');
        text += name;
    }
    text.push('\n');
    for i in 0..ds.x.nrows() {
        text += &ds.y[i].to_string();
        for v in ds.x.row(i).iter() {
            text.push(',');
            text += &v.to_string();
        }
        text.push('\n');
    }
    let path = outdir.join("ingested.csv");
    fs::write(&path, text).map_err(Error::from)?;
    println!("n = {}, p = {}", ds.x.nrows(), ds.x.ncols());
    println!("wrote {}", path.display());
    Ok(())
}

fn bounds(src: &DesignSource, r_grid: &[usize], alpha: &[f64], (eps1, eps2, kaban_c): (f64, f64, f64), seed: u64, outdir: &Path) -> CliResult<()> {
    let inst = load_instance(src, seed)?;
    let (n, d) = (inst.x.nrows(), inst.x.ncols());
    let truth = GroundTruth::new(&inst.x, inst.wstar.clone(), inst.params.sigma)?;
    let spectrum: Vec<f64> = inst.x.svd()?.sigma.iter().copied().collect();
    let alphastar: Vec<f64> = truth.alphastar.iter().copied().collect();
    let scenario = inst.params.spectrum.scenario();
    let tails = tail_sums(&spectrum.iter().map(|s| s * s).collect::<Vec<_>>());

    let mut rows = Vec::new();
    for &r in r_grid {
        if r == 0 || r > spectrum.len() {
            return Err(Failure::Usage(format!("r = {r} outside 1..={}", spectrum.len())));
        }
        rows.push(vec![r.to_string(), r.to_string(), "delta_r_fro_sq".into(), fmt_f64(tails[r])]);
        for &a in alpha {
            let k = (a * r as f64).round() as usize;
            if k == 0 {
                continue;
            }
            let b = evaluate_bounds(&BoundInputs {
                sigma_spec: &spectrum,
                alphastar: &alphastar,
                wstar_norm: DVector::norm(&truth.wstar),
                sigma: truth.sigma,
                n,
                d,
                r,
                k,
                eps1,
                eps2,
                kaban_c,
                scenario: None,
            })?;
            for (name, v) in b {
                rows.push(vec![r.to_string(), k.to_string(), name, fmt_f64(v)]);
            }
        }
    }
    fs::create_dir_all(outdir).map_err(Error::from)?;
    let path = outdir.join("bounds.tsv");
    write_tsv(&path, &["r", "k", "bound", "value"], &rows)?;
    println!("wrote {}", path.display());

    if let (Some(sc), true) = (scenario, truth.sigma > 0.0) {
        let opt = scenario_optimum(sc, truth.alpha_inf_sq(), n, d, truth.sigma)?;
        let lines = vec![
            vec!["r_opt".to_string(), fmt_f64(opt.r_opt)],
            vec!["risk_bound".to_string(), fmt_f64(opt.risk_bound)],
            vec!["r_int".to_string(), opt.r_int.to_string()],
            vec!["risk_int".to_string(), fmt_f64(opt.risk_int)],
        ];
        let path = outdir.join("scenario_optimum.tsv");
        write_tsv(&path, &["quantity", "value"], &lines)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
