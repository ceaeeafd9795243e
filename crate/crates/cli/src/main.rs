//! Command-line front end for NGG mixture density estimation.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numerical failure, 5 calibration target out of range.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nrmi_mix::calibrate::{calibrate, FreeParameter};
use nrmi_mix::diagnostics::{
    self, density_estimate, summarize, write_cpo_csv, write_density_csv, write_paths_csv,
    write_rn_csv, write_trace_csv,
};
use nrmi_mix::gibbs::run_chain;
use nrmi_mix::study::{ise, silverman_kde, GaussianMixture};
use nrmi_mix::Error as CoreError;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "nrmi-mix", version, about = "Density estimation and clustering with NGG mixture models")]
struct Cli {
    /// Number of worker threads for parallel sections (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Gibbs sampler on a dataset and write posterior summaries
    Fit {
        /// JSON run configuration
        #[arg(long)]
        config: PathBuf,
        /// Single-column CSV of observations (header line required)
        #[arg(long)]
        data: PathBuf,
        /// Output directory for fit.json and the CSV artifacts
        #[arg(long, default_value = "fit-out")]
        output: PathBuf,
        /// Override the seed in the configuration file
        #[arg(long)]
        seed: Option<u64>,
        /// Print the fit summary as JSON on stdout
        #[arg(long)]
        json: bool,
        /// Also write the full kept-iteration density paths (density-paths.csv)
        #[arg(long)]
        save_paths: bool,
        /// Credible-band level for density.csv
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Choose one NGG parameter so the prior expected cluster count hits a target
    Calibrate {
        /// Process family: dirichlet (frees a), nig (frees kappa) or nstable (frees gamma)
        #[arg(long)]
        process: String,
        /// Target prior expected number of clusters
        #[arg(long)]
        target_c: f64,
        /// Sample size the expectation refers to
        #[arg(long)]
        n: usize,
        /// Monte Carlo replicates per evaluation (ignored for dirichlet, which is exact)
        #[arg(long, default_value_t = 400)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the result as JSON on stdout
        #[arg(long)]
        json: bool,
    },
    /// Draw a synthetic dataset from a Gaussian-mixture truth
    Simulate {
        /// JSON mixture truth ({weights, means, sds})
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a density estimate against a Gaussian-mixture truth
    Evaluate {
        /// JSON mixture truth
        #[arg(long)]
        truth: PathBuf,
        /// density.csv produced by `fit` (grid,mean,lower,upper)
        #[arg(long)]
        density: PathBuf,
        /// Optional raw dataset; adds a Silverman-KDE baseline and the ratio
        #[arg(long)]
        data: Option<PathBuf>,
        /// Print the scores as JSON on stdout
        #[arg(long)]
        json: bool,
    },
}

/// CLI-level failure carrying its intended exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Failure { code: 2, message: msg.into() }
    }
    fn data(msg: impl Into<String>) -> Self {
        Failure { code: 3, message: msg.into() }
    }
    fn numerical(msg: impl Into<String>) -> Self {
        Failure { code: 4, message: msg.into() }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::InvalidParameters(_) | CoreError::InvalidConfig(_) => 2,
            CoreError::Data(_) => 3,
            CoreError::CalibrationRange { .. } => 5,
            _ => 4,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 3, message: e.to_string() }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Single-column CSV with a header line; reports the offending row on failure.
fn read_data_csv(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let _header = lines
        .next()
        .ok_or_else(|| Failure::data(format!("{}: empty file", path.display())))?;
    let mut out = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Failure::data(format!("{}: row {row}: cannot parse '{line}' as a number", path.display()))
        })?;
        if !v.is_finite() {
            return Err(Failure::data(format!("{}: row {row}: non-finite value", path.display())));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Failure::data(format!("{}: no observations", path.display())));
    }
    Ok(out)
}

/// Template process and the parameter freed by the calibration search.
fn parse_process(s: &str) -> Result<(nrmi_mix::NggParams, FreeParameter), Failure> {
    let p = match s {
        "dirichlet" => (nrmi_mix::NggParams::dirichlet(1.0)?, FreeParameter::TotalMass),
        "nig" => (nrmi_mix::NggParams::nig(1.0)?, FreeParameter::Kappa),
        "nstable" => (nrmi_mix::NggParams::nstable(0.5)?, FreeParameter::Gamma),
        other => {
            return Err(Failure::config(format!(
                "unknown --process value '{other}' (expected dirichlet, nig or nstable)"
            )))
        }
    };
    Ok(p)
}

fn cmd_fit(
    config: &Path,
    data: &Path,
    output: &Path,
    seed: Option<u64>,
    json: bool,
    save_paths: bool,
    level: f64,
) -> Result<(), Failure> {
    if !(0.0 < level && level < 1.0) {
        return Err(Failure::config("--level must lie strictly between 0 and 1"));
    }
    let cfg: RunConfig = read_json(config)?;
    let model = cfg.model()?;
    let gibbs = cfg.gibbs(seed);
    let xs = read_data_csv(data)?;

    log::info!("fitting {} observations, {} iterations", xs.len(), gibbs.iterations);
    let fit = run_chain(&xs, &model, &gibbs)?;
    let summary = summarize(&fit)?;
    let est = density_estimate(&fit.path_matrix, level)?;

    std::fs::create_dir_all(output)?;
    let summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Failure::numerical(e.to_string()))?;
    std::fs::write(output.join("fit.json"), summary_json.clone() + "\n")?;
    write_density_csv(&output.join("density.csv"), &fit, &est)?;
    write_rn_csv(&output.join("rn.csv"), &fit)?;
    write_cpo_csv(&output.join("cpo.csv"), &fit)?;
    write_trace_csv(&output.join("trace.csv"), &fit)?;
    if save_paths {
        write_paths_csv(&output.join("density-paths.csv"), &fit)?;
    }
    if json {
        println!("{summary_json}");
    } else {
        println!(
            "fit: n={} kept={} r_mode={} alcpo={:.4} mlcpo={:.4} -> {}",
            summary.n,
            summary.kept_iterations,
            summary.rn_mode,
            summary.alcpo,
            summary.mlcpo,
            output.display()
        );
    }
    Ok(())
}

fn cmd_calibrate(
    process: &str,
    target: f64,
    n: usize,
    replicates: usize,
    seed: u64,
    json: bool,
) -> Result<(), Failure> {
    let (template, free) = parse_process(process)?;
    let res = calibrate(template, free, target, n, replicates, seed)?;
    if json {
        let out = serde_json::to_string_pretty(&res).map_err(|e| Failure::numerical(e.to_string()))?;
        println!("{out}");
    } else {
        println!(
            "calibrated: a={:.6} kappa={:.6} gamma={:.6} E[R_n]={:.3} (se {:.3}, target {}){}",
            res.params.a,
            res.params.kappa,
            res.params.gamma,
            res.expected_clusters,
            res.standard_error,
            res.target,
            if res.boundary { " [boundary]" } else { "" }
        );
    }
    Ok(())
}

fn cmd_simulate(truth: &Path, n: usize, seed: u64, output: &Path) -> Result<(), Failure> {
    use rand::SeedableRng;
    let mixture: GaussianMixture = read_json(truth)?;
    mixture.validate()?;
    if n == 0 {
        return Err(Failure::config("--n must be positive"));
    }
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let xs = mixture.sample(n, &mut rng);
    let mut text = String::from("x\n");
    for x in &xs {
        text.push_str(&diagnostics::fmt_g17(*x));
        text.push('\n');
    }
    std::fs::write(output, text)?;
    println!("simulate: wrote {} observations to {}", n, output.display());
    Ok(())
}

fn cmd_evaluate(truth: &Path, density: &Path, data: Option<&Path>, json: bool) -> Result<(), Failure> {
    let mixture: GaussianMixture = read_json(truth)?;
    mixture.validate()?;

    let text = std::fs::read_to_string(density)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", density.display())))?;
    let mut grid = Vec::new();
    let mut mean = Vec::new();
    for (row, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Failure::data(format!("{}: row {row}: expected grid,mean,...", density.display())));
        }
        let g: f64 = fields[0].parse().map_err(|_| {
            Failure::data(format!("{}: row {row}: bad grid value", density.display()))
        })?;
        let m: f64 = fields[1].parse().map_err(|_| {
            Failure::data(format!("{}: row {row}: bad mean value", density.display()))
        })?;
        grid.push(g);
        mean.push(m);
    }
    let truth_vals: Vec<f64> = grid.iter().map(|&x| mixture.density(x)).collect();
    let ise_model = ise(&grid, &mean, &truth_vals)?;

    let kde_score = match data {
        Some(p) => {
            let xs = read_data_csv(p)?;
            let kde = silverman_kde(&xs, &grid)?;
            Some(ise(&grid, &kde, &truth_vals)?)
        }
        None => None,
    };

    if json {
        let mut obj = serde_json::json!({ "ise_model": ise_model });
        if let Some(k) = kde_score {
            obj["ise_kde"] = serde_json::json!(k);
            obj["relative"] = serde_json::json!(ise_model / k);
        }
        println!("{}", serde_json::to_string_pretty(&obj).unwrap());
    } else {
        match kde_score {
            Some(k) => println!("evaluate: ise_model={ise_model:.6e} ise_kde={k:.6e} relative={:.4}", ise_model / k),
            None => println!("evaluate: ise_model={ise_model:.6e}"),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads > 0 {
        rayon_thread_hint(cli.threads);
    }
    match cli.command {
        Command::Fit { config, data, output, seed, json, save_paths, level } => {
            cmd_fit(&config, &data, &output, seed, json, save_paths, level)
        }
        Command::Calibrate { process, target_c, n, replicates, seed, json } => {
            cmd_calibrate(&process, target_c, n, replicates, seed, json)
        }
        Command::Simulate { truth, n, seed, output } => cmd_simulate(&truth, n, seed, &output),
        Command::Evaluate { truth, density, data, json } => {
            cmd_evaluate(&truth, &density, data.as_deref(), json)
        }
    }
}

fn rayon_thread_hint(n: usize) {
    // the core crate owns the rayon dependency; the environment variable is
    // rayon's documented fallback for configuring the global pool
    std::env::set_var("RAYON_NUM_THREADS", n.to_string());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("NRMI_MIX_LOG")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
