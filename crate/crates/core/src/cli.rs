//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 usage error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::fidelity::taylor_residual;
use crate::hilbert::{build_dicke_derivative, build_dicke_hamiltonian, DickeParams, Sector};
use crate::linalg::HermitianMatrix;
use crate::par::Execution;
use crate::plot::{render_plot, PlotSpec, Series};
use crate::rmt::{
    avg_chi1_analytic, avg_chi2_analytic, ensemble_conjecture_experiment,
    monte_carlo_avg_chi_times, sample_matrix, write_estimates_csv, EnsembleKind, EnsembleSpec,
};
use crate::spectra::{
    eigendecompose, pool_spacings, read_column_csv, relative_entropy, spacing_histogram,
    thermal_weights, unfold, write_histogram_csv, Reference, SpacingSample,
};
use crate::sweep::{dicke_instance, run_sweep, BetaChoice, SweepConfig, SweepResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "opfid", version, about = "Operator fidelity metric and quantum chaos diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep the Dicke coupling and tabulate χ⁽¹⁾, χ⁽²⁾ per (λ, t, β).
    DickeSweep(DickeSweepArgs),
    /// Unfold a spectrum, bin its spacings and compare to a reference density.
    SpacingStats(SpacingStatsArgs),
    /// Random-matrix experiments.
    Rmt {
        #[command(subcommand)]
        command: RmtCommand,
    },
    /// Check the second-order expansion of the exact operator fidelity.
    FidelityCheck(FidelityCheckArgs),
}

#[derive(Debug, Args)]
pub struct DickeSweepArgs {
    #[arg(long, default_value_t = 8)]
    pub n_atoms: usize,
    #[arg(long, default_value_t = 48)]
    pub boson_cutoff: usize,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega0: f64,
    #[arg(long)]
    pub rwa: bool,
    #[arg(long, default_value_t = 0.05)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 60)]
    pub steps: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
    pub times: Vec<f64>,
    /// Inverse temperatures: numbers, `inf`, or `ratio:<r>`.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub beta: Vec<BetaChoice>,
    #[arg(long, default_value = "full")]
    pub sector: Sector,
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Per-sector spacing statistics CSV.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    /// JSON sidecar with the echoed configuration.
    #[arg(long)]
    pub meta_out: Option<PathBuf>,
    #[arg(long, env = "OPFID_CACHE")]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = crate::hilbert::DEFAULT_DIM_LIMIT)]
    pub dim_limit: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// `N,M,lambda[,sector]` on the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct DickeSpec {
    pub n_atoms: usize,
    pub boson_cutoff: usize,
    pub lambda: f64,
    pub sector: Sector,
}

impl std::str::FromStr for DickeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(Error::Parse(format!(
                "expected N,M,lambda[,sector], got '{s}'"
            )));
        }
        let bad = |what: &str| Error::Parse(format!("bad {what} in '{s}'"));
        Ok(Self {
            n_atoms: parts[0].parse().map_err(|_| bad("N"))?,
            boson_cutoff: parts[1].parse().map_err(|_| bad("M"))?,
            lambda: parts[2].parse().map_err(|_| bad("lambda"))?,
            sector: match parts.get(3) {
                Some(p) => p.parse()?,
                None => Sector::Full,
            },
        })
    }
}

impl DickeSpec {
    fn params(&self) -> DickeParams {
        DickeParams::resonant(self.n_atoms, self.boson_cutoff, self.lambda)
    }
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["levels", "dicke"])))]
pub struct SpacingStatsArgs {
    /// Single-column CSV of levels (one header line).
    #[arg(long)]
    pub levels: Option<PathBuf>,
    /// `N,M,lambda,sector`; sector `full` unfolds both parity sectors and
    /// pools their spacings.
    #[arg(long)]
    pub dicke: Option<DickeSpec>,
    #[arg(long, default_value_t = crate::spectra::DEFAULT_UNFOLD_DEGREE)]
    pub unfold_degree: usize,
    #[arg(long, default_value_t = crate::spectra::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = crate::spectra::DEFAULT_S_MAX)]
    pub smax: f64,
    #[arg(long, default_value = "wigner")]
    pub reference: Reference,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum RmtCommand {
    /// χ̃⁽¹⁾(t)/t over a Hamiltonian ensemble at unit mean level spacing.
    Conjecture {
        #[arg(long, default_value = "goe")]
        ensemble: EnsembleKind,
        #[arg(long, default_value_t = 200)]
        dim: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_value = "50,200,400")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo average of χ⁽¹⁾, χ⁽²⁾ over GOE perturbations versus the
    /// closed forms; fails if any |z| > 4.
    VerifyAverage {
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_value = "5")]
        t: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct FidelityCheckArgs {
    #[arg(long, default_value_t = 30)]
    pub dim: usize,
    #[arg(long, default_value_t = 3.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dlambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `N,M,lambda` Dicke instance instead of a random pair.
    #[arg(long)]
    pub dicke: Option<DickeSpec>,
    /// Use H′ = 0.
    #[arg(long)]
    pub zero_perturbation: bool,
    #[arg(long, default_value = "0")]
    pub beta: BetaChoice,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn usage_error(msg: &str) -> i32 {
    eprintln!("error: {msg}\n\nFor more information, try '--help'.");
    EXIT_USAGE
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::DickeSweep(a) => cmd_dicke_sweep(a),
        Command::SpacingStats(a) => cmd_spacing_stats(a),
        Command::Rmt { command } => cmd_rmt(command),
        Command::FidelityCheck(a) => cmd_fidelity_check(a),
    }
}

pub fn cmd_dicke_sweep(a: DickeSweepArgs) -> Result<i32> {
    let dicke = DickeParams {
        n_atoms: a.n_atoms,
        omega: a.omega,
        omega0: a.omega0,
        coupling: a.lambda_min,
        boson_cutoff: a.boson_cutoff,
        rwa: a.rwa,
        dim_limit: a.dim_limit,
    };
    let config = SweepConfig {
        lambda_min: a.lambda_min,
        lambda_max: a.lambda_max,
        steps: a.steps,
        times: a.times,
        betas: a.beta,
        sector: a.sector,
        normalize: a.normalize,
        cache_dir: a.cache,
        seed: a.seed,
        ..SweepConfig::new(dicke)
    };
    if let Err(e) = config.validate() {
        if matches!(e, Error::InvalidParameter(_)) {
            return Ok(usage_error(&e.to_string()));
        }
        return Err(e);
    }
    let result = run_sweep(&config)?;
    result.write_csv(&a.out)?;
    if let Some(p) = &a.summary_out {
        result.write_summary_csv(p)?;
    }
    if let Some(p) = &a.meta_out {
        result.write_metadata(p)?;
    }
    if let Some(p) = &a.plot {
        render_plot(&sweep_plot(&result, &config), p)?;
    }
    let best = result
        .rows
        .iter()
        .filter(|r| r.chi1.is_finite())
        .max_by(|x, y| x.chi1.total_cmp(&y.chi1));
    match best {
        Some(r) => println!(
            "wrote {} rows to {}; max chi1 = {:.6e} at lambda = {:.4}, t = {}, beta = {}",
            result.rows.len(),
            a.out.display(),
            r.chi1,
            r.lambda,
            r.t,
            r.beta
        ),
        None => println!("wrote {} rows to {}; no finite chi1", result.rows.len(), a.out.display()),
    }
    Ok(EXIT_OK)
}

fn sweep_plot(result: &SweepResult, config: &SweepConfig) -> PlotSpec {
    let y_label = if config.normalize {
        "chi1 / max_lambda chi1"
    } else {
        "chi1"
    };
    let mut spec = PlotSpec::new(
        format!(
            "Dicke N={} M={} sector={}",
            config.dicke.n_atoms, config.dicke.boson_cutoff, config.sector
        ),
        "lambda",
        y_label,
    );
    for &t in &config.times {
        for (bi, b) in config.betas.iter().enumerate() {
            let rows = result.group(t, bi);
            spec.series.push(Series {
                x: rows.iter().map(|r| r.lambda).collect(),
                y: rows
                    .iter()
                    .map(|r| if config.normalize { r.chi1_normalized } else { r.chi1 })
                    .collect(),
                label: format!("t={t} beta={b}"),
            });
        }
    }
    spec
}

fn sector_spacings(eig_levels: &[f64], degree: usize) -> Result<SpacingSample> {
    unfold(eig_levels, degree)
}

pub fn cmd_spacing_stats(a: SpacingStatsArgs) -> Result<i32> {
    if a.bins < 5 || !(a.smax > 0.0) {
        return Ok(usage_error("--bins must be >= 5 and --smax positive"));
    }
    let samples: Vec<SpacingSample> = if let Some(path) = &a.levels {
        let mut levels = read_column_csv(path)?;
        levels.sort_by(f64::total_cmp);
        vec![sector_spacings(&levels, a.unfold_degree)?]
    } else {
        let spec = a.dicke.as_ref().expect("clap enforces one source");
        let inst = dicke_instance(&spec.params(), None)?;
        let sectors: &[Sector] = match spec.sector {
            Sector::Full => &[Sector::Even, Sector::Odd],
            Sector::Even => &[Sector::Even],
            Sector::Odd => &[Sector::Odd],
        };
        sectors
            .iter()
            .map(|&s| sector_spacings(&inst.eigen.get(s).energies, a.unfold_degree))
            .collect::<Result<_>>()?
    };
    let spacings = pool_spacings(&samples);
    let hist = spacing_histogram(&spacings, a.bins, a.smax)?;
    let reference = a.reference;
    write_histogram_csv(&a.out, &hist, |s| reference.pdf(s))?;
    let s = relative_entropy(&hist, |s| reference.pdf(s));
    println!(
        "spacings={} overflow={:.4} relative_entropy={:.6}",
        spacings.len(),
        hist.overflow,
        s
    );
    Ok(EXIT_OK)
}

pub fn cmd_rmt(cmd: RmtCommand) -> Result<i32> {
    match cmd {
        RmtCommand::Conjecture {
            ensemble,
            dim,
            samples,
            times,
            seed,
            out,
        } => {
            if samples < 2 {
                eprintln!("error: need at least 2 samples for a standard error");
                return Ok(EXIT_FAILURE);
            }
            let spec = EnsembleSpec::new(ensemble, dim, 1.0, seed)?;
            let est = ensemble_conjecture_experiment(&spec, &times, samples, Execution::default())?;
            write_estimates_csv(&out, &spec, &est)?;
            for e in &est {
                println!(
                    "{} t={} chi1/t = {:.6e} +- {:.2e}",
                    ensemble.as_str(),
                    e.t,
                    e.mean,
                    e.stderr
                );
            }
            Ok(EXIT_OK)
        }
        RmtCommand::VerifyAverage {
            dim,
            samples,
            t,
            seed,
            out,
        } => {
            if samples < 2 {
                eprintln!("error: need at least 2 samples for a standard error");
                return Ok(EXIT_FAILURE);
            }
            let report = verify_average(dim, samples, &t, seed)?;
            let mut ok = true;
            let mut csv = String::from("t,term,mc_mean,mc_stderr,analytic,z\n");
            for line in &report {
                println!(
                    "t={} {}: monte_carlo = {:.6e} +- {:.2e}, analytic = {:.6e}, z = {:+.3}",
                    line.t, line.term, line.mean, line.stderr, line.analytic, line.z
                );
                ok &= line.z.abs() <= 4.0;
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    crate::format_float(line.t),
                    line.term,
                    crate::format_float(line.mean),
                    crate::format_float(line.stderr),
                    crate::format_float(line.analytic),
                    crate::format_float(line.z)
                ));
            }
            if let Some(path) = out {
                std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
            }
            Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

/// One line of the averaging check.
#[derive(Clone, Debug, PartialEq)]
pub struct AverageCheck {
    pub t: f64,
    pub term: &'static str,
    pub mean: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub z: f64,
}

/// Draws a GOE Hamiltonian (stream `u64::MAX` of `seed`) and compares the
/// Monte Carlo averages over unit-variance GOE perturbations (streams
/// `0..samples` of `seed + 1`) with the closed forms at each time.
pub fn verify_average(dim: usize, samples: usize, times: &[f64], seed: u64) -> Result<Vec<AverageCheck>> {
    let h_spec = EnsembleSpec::new(EnsembleKind::Goe, dim, 1.0, seed)?;
    let v_spec = EnsembleSpec::new(EnsembleKind::Goe, dim, 1.0, seed.wrapping_add(1))?;
    let h = sample_matrix(&h_spec, u64::MAX);
    let eig = eigendecompose(&h)?;
    let rho = thermal_weights(&eig, 0.0)?;
    let estimates = monte_carlo_avg_chi_times(&h, &rho, times, &v_spec, samples, Execution::default())?;
    let mut out = Vec::new();
    for (&t, (c1, c2)) in times.iter().zip(estimates) {
        let a1 = avg_chi1_analytic(&eig, &rho, t, 1.0)?;
        let a2 = avg_chi2_analytic(&rho, t, 1.0);
        for (term, est, analytic) in [("chi1", c1, a1), ("chi2", c2, a2)] {
            out.push(AverageCheck {
                t,
                term,
                mean: est.mean,
                stderr: est.stderr,
                analytic,
                z: est.z_score(analytic),
            });
        }
    }
    Ok(out)
}

/// GOE pair `(H, H′)` with off-diagonal variance `1/dim` (spectrum of order
/// one), drawn from streams 0 and 1 of `seed`.
pub fn random_hermitian_pair(dim: usize, seed: u64) -> Result<(HermitianMatrix, HermitianMatrix)> {
    let spec = EnsembleSpec::new(EnsembleKind::Goe, dim, 1.0 / (dim as f64).sqrt(), seed)?;
    Ok((sample_matrix(&spec, 0), sample_matrix(&spec, 1)))
}

/// Residuals at `δλ` and `δλ/2` and their ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorCheck {
    pub residual_full: f64,
    pub residual_half: f64,
    pub ratio: f64,
}

impl TaylorCheck {
    /// Residual ratio within [4, 16], or both residuals at rounding level.
    pub fn passes(&self) -> bool {
        (self.residual_full < 1e-14 && self.residual_half < 1e-14)
            || (4.0..=16.0).contains(&self.ratio)
    }
}

pub fn taylor_check(
    h: &HermitianMatrix,
    hprime: &HermitianMatrix,
    beta: BetaChoice,
    t: f64,
    dlambda: f64,
) -> Result<TaylorCheck> {
    let eig = eigendecompose(h)?;
    let rho = thermal_weights(&eig, beta.resolve(&eig)?)?;
    let r1 = taylor_residual(h, &eig, hprime, &rho, t, dlambda)?;
    let r2 = taylor_residual(h, &eig, hprime, &rho, t, 0.5 * dlambda)?;
    Ok(TaylorCheck {
        residual_full: r1,
        residual_half: r2,
        ratio: r1 / r2,
    })
}

pub fn cmd_fidelity_check(a: FidelityCheckArgs) -> Result<i32> {
    if !(a.dlambda > 0.0 && a.dlambda.is_finite()) {
        return Ok(usage_error("--dlambda must be positive"));
    }
    if !(a.t >= 0.0) {
        return Ok(usage_error("--t must be non-negative"));
    }
    let (h, hp) = match &a.dicke {
        Some(spec) => {
            let p = spec.params();
            (build_dicke_hamiltonian(&p)?.0, build_dicke_derivative(&p)?)
        }
        None => random_hermitian_pair(a.dim, a.seed)?,
    };
    let hp = if a.zero_perturbation {
        HermitianMatrix::zeros(h.dim())
    } else {
        hp
    };
    let check = taylor_check(&h, &hp, a.beta, a.t, a.dlambda)?;
    println!(
        "residual(dlambda={:e}) = {:.6e}\nresidual(dlambda={:e}) = {:.6e}\nratio = {:.4}",
        a.dlambda,
        check.residual_full,
        0.5 * a.dlambda,
        check.residual_half,
        check.ratio
    );
    Ok(if check.passes() { EXIT_OK } else { EXIT_FAILURE })
}

/// Convenience for tests: runs with string arguments.
pub fn run_strs(args: &[&str]) -> i32 {
    run(std::iter::once("opfid").chain(args.iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dicke_spec_parsing() {
        let s: DickeSpec = "8,48,0.3,even".parse().unwrap();
        assert_eq!(s.n_atoms, 8);
        assert_eq!(s.sector, Sector::Even);
        let t: DickeSpec = "4,16,0.3".parse().unwrap();
        assert_eq!(t.sector, Sector::Full);
        assert!("4,16".parse::<DickeSpec>().is_err());
        assert!("a,16,0.3".parse::<DickeSpec>().is_err());
    }

    #[test]
    fn missing_out_is_usage_error() {
        assert_eq!(run_strs(&["dicke-sweep", "--n-atoms", "2"]), EXIT_USAGE);
        assert_eq!(run_strs(&["no-such-command"]), EXIT_USAGE);
        assert_eq!(run_strs(&["--help"]), EXIT_OK);
    }

    #[test]
    fn zero_dlambda_is_usage_error() {
        assert_eq!(run_strs(&["fidelity-check", "--dlambda", "0"]), EXIT_USAGE);
    }

    #[test]
    fn zero_perturbation_passes() {
        let (h, _) = random_hermitian_pair(10, 3).unwrap();
        let c = taylor_check(&h, &HermitianMatrix::zeros(10), BetaChoice::Value(0.0), 3.0, 1e-3).unwrap();
        assert!(c.residual_full < 1e-14);
        assert!(c.passes());
    }
}
