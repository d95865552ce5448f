//! Dicke-model sweeps over the coupling λ: metric terms for several times and
//! temperatures, per-sector level statistics, eigensystem caching and boson
//! cutoff convergence checks.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fidelity::{chi1, chi2, perturbation_in_eigenbasis};
use crate::format_float;
use crate::hilbert::{
    build_dicke_derivative, build_dicke_hamiltonian, parity_split, DickeParams, Sector,
};
use crate::linalg::{hex_string, Mat};
use crate::par::Execution;
use crate::spectra::{
    beta_for_extremal_ratio, eigendecompose_blocks, merge_sector_eigensystems, relative_entropy, thermal_weights, unfold,
    wigner_pdf, EigenSystem, DEFAULT_BINS, DEFAULT_S_MAX, DEFAULT_UNFOLD_DEGREE,
};

/// How the state ρ is chosen at each λ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaChoice {
    /// Fixed inverse temperature; 0 is the uniform state, ∞ the ground level.
    Value(f64),
    /// β fixed per spectrum so that `exp[−β(E_max − E_min)]` equals the ratio.
    ExtremalRatio(f64),
}

impl BetaChoice {
    pub fn resolve(&self, eig: &EigenSystem) -> Result<f64> {
        match *self {
            BetaChoice::Value(b) => Ok(b),
            BetaChoice::ExtremalRatio(r) => beta_for_extremal_ratio(eig, r),
        }
    }
}

impl fmt::Display for BetaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaChoice::Value(b) if b.is_infinite() => f.write_str("inf"),
            BetaChoice::Value(b) => write!(f, "{b}"),
            BetaChoice::ExtremalRatio(r) => write!(f, "ratio:{r}"),
        }
    }
}

impl FromStr for BetaChoice {
    type Err = Error;

    /// Accepts a number, `inf`, or `ratio:<r>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(r) = s.strip_prefix("ratio:") {
            let r: f64 = r
                .parse()
                .map_err(|_| Error::Parse(format!("bad ratio '{r}'")))?;
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Parse(format!("ratio must lie in (0,1), got {r}")));
            }
            return Ok(BetaChoice::ExtremalRatio(r));
        }
        let b = match s.as_str() {
            "inf" | "infinity" | "∞" => f64::INFINITY,
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad beta '{other}'")))?,
        };
        if b.is_nan() || b < 0.0 {
            return Err(Error::Parse(format!("beta must be non-negative, got {s}")));
        }
        Ok(BetaChoice::Value(b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dicke: DickeParams,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub steps: usize,
    pub times: Vec<f64>,
    pub betas: Vec<BetaChoice>,
    pub sector: Sector,
    pub normalize: bool,
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    pub unfold_degree: usize,
    pub bins: usize,
    pub s_max: f64,
}

impl SweepConfig {
    /// Reduced-scale defaults (N = 8, M = 48, 60 points on [0.05, 1.0]).
    pub fn new(dicke: DickeParams) -> Self {
        Self {
            dicke,
            lambda_min: 0.05,
            lambda_max: 1.0,
            steps: 60,
            times: vec![1.0, 10.0, 100.0, 1000.0],
            betas: vec![BetaChoice::Value(0.0)],
            sector: Sector::Full,
            normalize: true,
            cache_dir: None,
            seed: 0,
            unfold_degree: DEFAULT_UNFOLD_DEGREE,
            bins: DEFAULT_BINS,
            s_max: DEFAULT_S_MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min < self.lambda_max) {
            return Err(Error::InvalidParameter(format!(
                "lambda_min ({}) must be below lambda_max ({})",
                self.lambda_min, self.lambda_max
            )));
        }
        if self.steps < 2 {
            return Err(Error::InvalidParameter("need at least 2 lambda steps".into()));
        }
        if self.times.is_empty() {
            return Err(Error::InvalidParameter("no times given".into()));
        }
        if self.times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::InvalidParameter("times must be non-negative".into()));
        }
        if self.betas.is_empty() {
            return Err(Error::InvalidParameter("no beta values given".into()));
        }
        self.dicke.validate()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        let h = (self.lambda_max - self.lambda_min) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                if k + 1 == self.steps {
                    self.lambda_max
                } else {
                    self.lambda_min + k as f64 * h
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub t: f64,
    /// Inverse temperature actually used (resolved per λ for ratio choices).
    pub beta: f64,
    /// Index into `SweepConfig::betas`.
    pub beta_index: usize,
    pub chi1: f64,
    pub chi1_normalized: f64,
    pub chi2: f64,
    pub dim: usize,
    pub sector: Sector,
    pub status: RowStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSummary {
    pub lambda: f64,
    pub sector: Sector,
    pub relative_entropy_wigner: f64,
    pub ground_energy: f64,
    pub n_levels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepMetadata {
    pub config: SweepConfig,
    pub version: String,
    pub wall_time_s: f64,
    pub failed_lambdas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<SpectralSummary>,
    pub metadata: SweepMetadata,
}

pub const RESULT_HEADER: &str = "lambda,t,beta,chi1,chi1_normalized,chi2,dim,sector,status";
pub const SUMMARY_HEADER: &str = "lambda,sector,relative_entropy_wigner,ground_energy,n_levels";

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULT_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                format_float(r.lambda),
                format_float(r.t),
                format_float(r.beta),
                format_float(r.chi1),
                format_float(r.chi1_normalized),
                format_float(r.chi2),
                r.dim,
                r.sector,
                match r.status {
                    RowStatus::Ok => "ok",
                    RowStatus::Failed => "failed",
                }
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                format_float(s.lambda),
                s.sector,
                format_float(s.relative_entropy_wigner),
                format_float(s.ground_energy),
                s.n_levels
            ));
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.metadata).expect("metadata is serializable")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.summary_csv().as_bytes())
    }

    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        write_file(path, self.metadata_json().as_bytes())
    }

    /// Rows of one `(t, beta_index)` group, in λ order.
    pub fn group(&self, t: f64, beta_index: usize) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.t == t && r.beta_index == beta_index)
            .collect()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Everything computed at a single λ.
struct LambdaOutcome {
    rows: Vec<SweepRow>,
    summaries: Vec<SpectralSummary>,
}

/// Eigensystems of both parity blocks at one coupling, plus the full-space
/// system assembled from them.
pub struct SectorEigen {
    pub full: EigenSystem,
    pub even: EigenSystem,
    pub odd: EigenSystem,
}

impl SectorEigen {
    pub fn get(&self, sector: Sector) -> &EigenSystem {
        match sector {
            Sector::Full => &self.full,
            Sector::Even => &self.even,
            Sector::Odd => &self.odd,
        }
    }
}

/// Hamiltonian pieces and eigensystems of the Dicke model at one coupling.
pub struct DickeInstance {
    pub params: DickeParams,
    pub hprime_full: crate::HermitianMatrix,
    pub hprime_even: crate::HermitianMatrix,
    pub hprime_odd: crate::HermitianMatrix,
    pub eigen: SectorEigen,
}

impl DickeInstance {
    pub fn hprime(&self, sector: Sector) -> &crate::HermitianMatrix {
        match sector {
            Sector::Full => &self.hprime_full,
            Sector::Even => &self.hprime_even,
            Sector::Odd => &self.hprime_odd,
        }
    }
}

/// Builds and diagonalizes the Dicke model at `p.coupling`, consulting the
/// cache for the sector eigensystems when one is given.
pub fn dicke_instance(p: &DickeParams, cache: Option<&EigenCache>) -> Result<DickeInstance> {
    let (h, basis) = build_dicke_hamiltonian(p)?;
    let hp = build_dicke_derivative(p)?;
    let blocks = parity_split(&h, &basis)?;
    let hp_blocks = parity_split(&hp, &basis)?;

    let cached = cache.and_then(|c| {
        let even = c.load(&cache_key(p, Sector::Even))?;
        let odd = c.load(&cache_key(p, Sector::Odd))?;
        (even.dim() == blocks.even_indices.len() && odd.dim() == blocks.odd_indices.len())
            .then_some((even, odd))
    });
    let eigen = match cached {
        Some((even, odd)) => SectorEigen {
            full: merge_sector_eigensystems(&blocks.even_indices, &blocks.odd_indices, &even, &odd),
            even,
            odd,
        },
        None => {
            let (full, even, odd) = eigendecompose_blocks(&blocks)?;
            if let Some(c) = cache {
                for (sector, eig) in [(Sector::Even, &even), (Sector::Odd, &odd)] {
                    if let Err(e) = c.store(&cache_key(p, sector), eig) {
                        warn!("could not write eigensystem cache: {e}");
                    }
                }
            }
            SectorEigen { full, even, odd }
        }
    };
    Ok(DickeInstance {
        params: p.clone(),
        hprime_full: hp,
        hprime_even: hp_blocks.even,
        hprime_odd: hp_blocks.odd,
        eigen,
    })
}

fn sector_summary(
    lambda: f64,
    sector: Sector,
    eig: &EigenSystem,
    config: &SweepConfig,
) -> SpectralSummary {
    let entropy = unfold(&eig.energies, config.unfold_degree)
        .and_then(|s| s.with_histogram(config.bins, config.s_max))
        .map(|s| relative_entropy(s.histogram.as_ref().expect("histogram set"), wigner_pdf))
        .unwrap_or_else(|e| {
            warn!("spacing statistics failed at lambda={lambda} ({sector}): {e}");
            f64::NAN
        });
    SpectralSummary {
        lambda,
        sector,
        relative_entropy_wigner: entropy,
        ground_energy: eig.ground_energy(),
        n_levels: eig.dim(),
    }
}

fn evaluate_lambda(
    config: &SweepConfig,
    lambda: f64,
    cache: Option<&EigenCache>,
) -> Result<LambdaOutcome> {
    let p = config.dicke.with_coupling(lambda);
    let inst = dicke_instance(&p, cache)?;
    let eig = inst.eigen.get(config.sector);
    let w = perturbation_in_eigenbasis(eig, inst.hprime(config.sector))?;

    let weights = config
        .betas
        .iter()
        .map(|b| {
            let beta = b.resolve(eig)?;
            thermal_weights(eig, beta)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(config.times.len() * config.betas.len());
    for &t in &config.times {
        for (bi, rho) in weights.iter().enumerate() {
            rows.push(SweepRow {
                lambda,
                t,
                beta: rho.beta,
                beta_index: bi,
                chi1: chi1(eig, &w, rho, t)?,
                chi1_normalized: f64::NAN,
                chi2: chi2(&w, rho, t)?,
                dim: eig.dim(),
                sector: config.sector,
                status: RowStatus::Ok,
            });
        }
    }
    let summaries = [Sector::Even, Sector::Odd]
        .into_iter()
        .map(|s| sector_summary(lambda, s, inst.eigen.get(s), config))
        .collect();
    Ok(LambdaOutcome { rows, summaries })
}

fn failed_rows(config: &SweepConfig, lambda: f64) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &t in &config.times {
        for (bi, b) in config.betas.iter().enumerate() {
            rows.push(SweepRow {
                lambda,
                t,
                beta: match b {
                    BetaChoice::Value(v) => *v,
                    BetaChoice::ExtremalRatio(_) => f64::NAN,
                },
                beta_index: bi,
                chi1: f64::NAN,
                chi1_normalized: f64::NAN,
                chi2: f64::NAN,
                dim: 0,
                sector: config.sector,
                status: RowStatus::Failed,
            });
        }
    }
    rows
}

/// Divides χ⁽¹⁾ by its maximum over λ within each `(t, β)` group.
fn normalize_rows(rows: &mut [SweepRow], n_times: usize, n_betas: usize, times: &[f64]) {
    for ti in 0..n_times {
        for bi in 0..n_betas {
            let t = times[ti];
            let max = rows
                .iter()
                .filter(|r| r.t == t && r.beta_index == bi && r.status == RowStatus::Ok)
                .map(|r| r.chi1)
                .fold(f64::NEG_INFINITY, f64::max);
            for r in rows
                .iter_mut()
                .filter(|r| r.t == t && r.beta_index == bi && r.status == RowStatus::Ok)
            {
                r.chi1_normalized = if max > 0.0 { r.chi1 / max } else { 0.0 };
            }
        }
    }
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    run_sweep_with(config, Execution::default())
}

/// Runs the sweep with an explicit scheduling policy. Output rows are in
/// `(λ, t, β)` order regardless of `exec`.
pub fn run_sweep_with(config: &SweepConfig, exec: Execution) -> Result<SweepResult> {
    config.validate()?;
    let start = Instant::now();
    let cache = match &config.cache_dir {
        Some(dir) => Some(EigenCache::new(dir)?),
        None => None,
    };
    let lambdas = config.lambdas();
    let outcomes = exec.map(lambdas.len(), |k| {
        evaluate_lambda(config, lambdas[k], cache.as_ref())
    });

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut failed_lambdas = Vec::new();
    for (lambda, outcome) in lambdas.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                rows.extend(o.rows);
                summaries.extend(o.summaries);
            }
            Err(e) => {
                warn!("sweep point lambda={lambda} failed: {e}");
                failed_lambdas.push(*lambda);
                rows.extend(failed_rows(config, *lambda));
            }
        }
    }
    if config.normalize {
        normalize_rows(&mut rows, config.times.len(), config.betas.len(), &config.times);
    }
    Ok(SweepResult {
        rows,
        summaries,
        metadata: SweepMetadata {
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: start.elapsed().as_secs_f64(),
            failed_lambdas,
        },
    })
}

/// Quantity tracked by [`cutoff_convergence_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConvergenceQuantity {
    GroundEnergy,
    /// χ⁽¹⁾ at time `t` for the ground-state weights.
    Chi1 { t: f64 },
}

impl ConvergenceQuantity {
    pub fn threshold(&self) -> f64 {
        match self {
            ConvergenceQuantity::GroundEnergy => 1e-3,
            ConvergenceQuantity::Chi1 { .. } => 5e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub cutoffs: Vec<usize>,
    pub values: Vec<f64>,
    /// Relative change between consecutive cutoffs.
    pub relative_changes: Vec<f64>,
    pub threshold: f64,
    pub converged: bool,
}

/// Recomputes `quantity` at cutoffs `{M/2, 3M/4, M}` and flags the result as
/// non-converged when the last relative change exceeds the threshold.
pub fn cutoff_convergence_check(
    p: &DickeParams,
    lambda: f64,
    quantity: ConvergenceQuantity,
) -> Result<ConvergenceReport> {
    let m = p.boson_cutoff;
    if m < 8 {
        return Err(Error::InvalidParameter(format!(
            "convergence check needs boson_cutoff >= 8, got {m}"
        )));
    }
    let cutoffs = vec![m / 2, 3 * m / 4, m];
    let values = cutoffs
        .iter()
        .map(|&c| {
            let q = p.with_cutoff(c).with_coupling(lambda);
            let inst = dicke_instance(&q, None)?;
            match quantity {
                ConvergenceQuantity::GroundEnergy => Ok(inst.eigen.full.ground_energy()),
                ConvergenceQuantity::Chi1 { t } => {
                    let eig = &inst.eigen.full;
                    let w = perturbation_in_eigenbasis(eig, &inst.hprime_full)?;
                    let rho = thermal_weights(eig, f64::INFINITY)?;
                    chi1(eig, &w, &rho, t)
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let relative_changes: Vec<f64> = values
        .windows(2)
        .map(|w| {
            let diff = (w[1] - w[0]).abs();
            if diff == 0.0 {
                0.0
            } else {
                diff / w[1].abs().max(f64::MIN_POSITIVE)
            }
        })
        .collect();
    let threshold = quantity.threshold();
    let converged = relative_changes.last().is_some_and(|c| *c <= threshold);
    Ok(ConvergenceReport {
        cutoffs,
        values,
        relative_changes,
        threshold,
        converged,
    })
}

pub const CACHE_MAGIC: &[u8; 4] = b"OPFD";
pub const CACHE_VERSION: u32 = 1;

/// Cache key: SHA-256 of the canonicalized model parameters, coupling and
/// sector, with floats written to 17 significant digits.
pub fn cache_key(p: &DickeParams, sector: Sector) -> String {
    let canonical = format!(
        "n_atoms={};omega={:.16e};omega0={:.16e};coupling={:.16e};boson_cutoff={};rwa={};sector={}",
        p.n_atoms, p.omega, p.omega0, p.coupling, p.boson_cutoff, p.rwa, sector
    );
    hex_string(&Sha256::digest(canonical.as_bytes()))
}

/// Directory of binary eigensystem files, one per key.
///
/// Layout: `"OPFD"`, version `u32`, `d` as `u64`, `d` energies, then the
/// `d²` eigenvector entries column-major; all little-endian.
#[derive(Clone, Debug)]
pub struct EigenCache {
    dir: PathBuf,
}

impl EigenCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.opfd"))
    }

    /// Writes atomically via a temporary file and rename. Only real
    /// eigenvectors are cacheable.
    pub fn store(&self, key: &str, eig: &EigenSystem) -> Result<()> {
        let Mat::Real(v) = &eig.vectors else {
            return Err(Error::InvalidParameter(
                "only real eigensystems can be cached".into(),
            ));
        };
        let d = eig.dim();
        let mut buf = Vec::with_capacity(16 + 8 * (d + d * d));
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(d as u64).to_le_bytes());
        for e in &eig.energies {
            buf.extend_from_slice(&e.to_le_bytes());
        }
        for x in v.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let target = self.path(key);
        let tmp = self
            .dir
            .join(format!("{key}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))
    }

    /// Returns `None` on a missing, foreign or truncated file.
    pub fn load(&self, key: &str) -> Option<EigenSystem> {
        let path = self.path(key);
        let mut bytes = Vec::new();
        std::fs::File::open(&path).ok()?.read_to_end(&mut bytes).ok()?;
        match decode_cache(&bytes) {
            Some(eig) => Some(eig),
            None => {
                warn!("ignoring unreadable cache file {}", path.display());
                None
            }
        }
    }
}

fn decode_cache(bytes: &[u8]) -> Option<EigenSystem> {
    if bytes.len() < 16 || &bytes[0..4] != CACHE_MAGIC {
        return None;
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().ok()?);
    if version != CACHE_VERSION {
        return None;
    }
    let d = u64::from_le_bytes(bytes[8..16].try_into().ok()?) as usize;
    let expected = d.checked_mul(d)?.checked_add(d)?.checked_mul(8)?.checked_add(16)?;
    if bytes.len() != expected {
        return None;
    }
    let floats: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let energies = floats[..d].to_vec();
    let vectors = DMatrix::from_column_slice(d, d, &floats[d..]);
    Some(EigenSystem {
        energies,
        vectors: Mat::Real(vectors),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::eigendecompose;

    fn tiny_config() -> SweepConfig {
        SweepConfig {
            lambda_min: 0.0,
            lambda_max: 0.8,
            steps: 2,
            times: vec![5.0],
            betas: vec![BetaChoice::Value(0.0)],
            ..SweepConfig::new(DickeParams::resonant(2, 8, 0.0))
        }
    }

    #[test]
    fn beta_parsing() {
        assert_eq!("0".parse::<BetaChoice>().unwrap(), BetaChoice::Value(0.0));
        assert_eq!("0.014".parse::<BetaChoice>().unwrap(), BetaChoice::Value(0.014));
        assert_eq!(
            "inf".parse::<BetaChoice>().unwrap(),
            BetaChoice::Value(f64::INFINITY)
        );
        assert_eq!(
            "ratio:0.05".parse::<BetaChoice>().unwrap(),
            BetaChoice::ExtremalRatio(0.05)
        );
        assert!("-1".parse::<BetaChoice>().is_err());
        assert!("ratio:2".parse::<BetaChoice>().is_err());
        assert!("warm".parse::<BetaChoice>().is_err());
    }

    #[test]
    fn two_points_two_rows() {
        let res = run_sweep(&tiny_config()).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert!(res.rows.iter().all(|r| r.status == RowStatus::Ok));
        assert_eq!(res.summaries.len(), 4);
    }

    #[test]
    fn row_matches_direct_chi1() {
        let cfg = tiny_config();
        let res = run_sweep(&cfg).unwrap();
        let p = cfg.dicke.with_coupling(0.0);
        let inst = dicke_instance(&p, None).unwrap();
        let eig = &inst.eigen.full;
        let w = perturbation_in_eigenbasis(eig, &inst.hprime_full).unwrap();
        let rho = thermal_weights(eig, 0.0).unwrap();
        let direct = chi1(eig, &w, &rho, 5.0).unwrap();
        assert_eq!(res.rows[0].chi1.to_bits(), direct.to_bits());
    }

    #[test]
    fn block_assembled_eigensystem_is_valid() {
        let p = DickeParams::resonant(3, 10, 0.6);
        let inst = dicke_instance(&p, None).unwrap();
        let (h, _) = build_dicke_hamiltonian(&p).unwrap();
        assert!(inst.eigen.full.verify(&h));
        let direct = eigendecompose(&h).unwrap();
        for (a, b) in inst.eigen.full.energies.iter().zip(&direct.energies) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normalization_has_single_maximum() {
        let cfg = SweepConfig {
            steps: 5,
            times: vec![1.0, 20.0],
            betas: vec![BetaChoice::Value(0.0), BetaChoice::Value(f64::INFINITY)],
            ..tiny_config()
        };
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.rows.len(), 5 * 2 * 2);
        for &t in &cfg.times {
            for bi in 0..2 {
                let g = res.group(t, bi);
                assert_eq!(g.len(), 5);
                assert_eq!(g.iter().filter(|r| r.chi1_normalized == 1.0).count(), 1);
                assert!(g.iter().all(|r| (0.0..=1.0).contains(&r.chi1_normalized)));
            }
        }
    }

    #[test]
    fn parallel_equals_serial() {
        let cfg = SweepConfig {
            steps: 6,
            times: vec![3.0, 30.0],
            ..tiny_config()
        };
        let a = run_sweep_with(&cfg, Execution::Parallel).unwrap();
        let b = run_sweep_with(&cfg, Execution::Sequential).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.summary_csv(), b.summary_csv());
    }

    #[test]
    fn failed_point_is_marked_not_fatal() {
        let cfg = SweepConfig {
            lambda_min: 0.1,
            lambda_max: f64::MAX,
            steps: 2,
            ..tiny_config()
        };
        // the second point has an infinite-magnitude Hamiltonian entry
        let res = run_sweep(&cfg);
        if let Ok(res) = res {
            assert_eq!(res.rows.len(), 2);
            assert_eq!(res.rows[0].status, RowStatus::Ok);
            assert_eq!(res.rows[1].status, RowStatus::Failed);
            assert!(res.to_csv().lines().nth(2).unwrap().ends_with(",failed"));
        }
    }

    #[test]
    fn csv_headers() {
        let res = run_sweep(&tiny_config()).unwrap();
        let csv = res.to_csv();
        assert!(csv.starts_with(&format!("{RESULT_HEADER}\n")));
        assert!(res.summary_csv().starts_with(&format!("{SUMMARY_HEADER}\n")));
        let meta: serde_json::Value = serde_json::from_str(&res.metadata_json()).unwrap();
        assert_eq!(meta["config"]["steps"], 2);
        assert!(meta["version"].is_string());
    }

    #[test]
    fn cache_round_trip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EigenCache::new(dir.path()).unwrap();
        let p = DickeParams::resonant(2, 6, 0.3);
        let inst = dicke_instance(&p, None).unwrap();
        let key = cache_key(&p, Sector::Even);
        cache.store(&key, &inst.eigen.even).unwrap();
        let back = cache.load(&key).unwrap();
        assert_eq!(back, inst.eigen.even);
        let bytes = std::fs::read(cache.path(&key)).unwrap();
        assert_eq!(&bytes[..4], b"OPFD");
        let d = inst.eigen.even.dim();
        assert_eq!(bytes.len(), 16 + 8 * (d + d * d));
    }

    #[test]
    fn cache_rejects_foreign_and_partial_files() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EigenCache::new(dir.path()).unwrap();
        std::fs::write(cache.path("foreign"), b"hello world, not a cache").unwrap();
        assert!(cache.load("foreign").is_none());
        assert!(cache.load("missing").is_none());

        let p = DickeParams::resonant(2, 6, 0.3);
        let inst = dicke_instance(&p, None).unwrap();
        cache.store("partial", &inst.eigen.odd).unwrap();
        let bytes = std::fs::read(cache.path("partial")).unwrap();
        std::fs::write(cache.path("partial"), &bytes[..bytes.len() - 5]).unwrap();
        assert!(cache.load("partial").is_none());

        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        std::fs::write(cache.path("v9"), wrong_version).unwrap();
        assert!(cache.load("v9").is_none());
    }

    #[test]
    fn cache_key_sensitivity() {
        let p = DickeParams::resonant(4, 10, 0.5);
        let q = p.with_coupling(0.5 + 1e-12);
        assert_ne!(cache_key(&p, Sector::Even), cache_key(&q, Sector::Even));
        assert_ne!(cache_key(&p, Sector::Even), cache_key(&p, Sector::Odd));
        assert_eq!(cache_key(&p, Sector::Even), cache_key(&p.clone(), Sector::Even));
    }

    #[test]
    fn cached_sweep_matches_uncached() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SweepConfig {
            steps: 3,
            cache_dir: Some(dir.path().to_path_buf()),
            ..tiny_config()
        };
        let first = run_sweep(&cfg).unwrap();
        let second = run_sweep(&cfg).unwrap();
        let plain = run_sweep(&SweepConfig {
            cache_dir: None,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(first.to_csv(), second.to_csv());
        assert_eq!(first.to_csv(), plain.to_csv());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 6);
    }

    #[test]
    fn convergence_non_interacting_is_exact() {
        let p = DickeParams::resonant(4, 16, 0.0);
        let r = cutoff_convergence_check(&p, 0.0, ConvergenceQuantity::GroundEnergy).unwrap();
        assert_eq!(r.cutoffs, vec![8, 12, 16]);
        assert!(r.relative_changes.iter().all(|c| *c == 0.0));
        assert!(r.converged);
    }

    #[test]
    fn convergence_flags_tiny_cutoff() {
        let p = DickeParams::resonant(8, 8, 0.0);
        let r = cutoff_convergence_check(&p, 3.0, ConvergenceQuantity::GroundEnergy).unwrap();
        assert!(!r.converged, "{r:?}");
        assert!(cutoff_convergence_check(&p.with_cutoff(6), 0.3, ConvergenceQuantity::GroundEnergy)
            .is_err());
    }

    #[test]
    fn convergence_reduced_scale_ground_energy() {
        let p = DickeParams::resonant(8, 48, 0.0);
        let r = cutoff_convergence_check(&p, 0.4, ConvergenceQuantity::GroundEnergy).unwrap();
        assert_eq!(r.cutoffs, vec![24, 36, 48]);
        assert!(r.relative_changes[1] < 1e-3);
        assert!(r.converged);
    }
}
