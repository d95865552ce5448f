//! Gaussian random-matrix ensembles, perturbation-averaged metric terms and
//! the Poisson-versus-GOE ensemble experiment.
//!
//! Variance convention for GOE: off-diagonal entries have variance σ² and
//! diagonal entries 2σ². For GUE the off-diagonal entries are complex with
//! `E|V_nm|² = σ²` and diagonal entries real with variance σ². With this
//! convention the averaged metric terms hold with equality:
//!
//! ```text
//!   E_V[χ⁽¹⁾] = σ² Σ_{n≠m} ρ_nn δ_t(E_n − E_m)
//!   E_V[χ⁽²⁾] = 2σ² t² (1 − tr ρ²)        (GOE)
//! ```
//!
//! Draws are seeded per `(seed, draw_index)` with ChaCha8 streams, so any
//! sample can be regenerated independently of scheduling.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::{chi1, chi2, perturbation_in_eigenbasis};
use crate::linalg::HermitianMatrix;
use crate::par::Execution;
use crate::spectra::{delta_t, eigendecompose, EigenSystem, StateWeights};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Goe,
    Gue,
    /// Sorted i.i.d. Gaussian levels on the diagonal: an uncorrelated
    /// (regular) spectrum.
    PoissonDiagonal,
}

impl EnsembleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnsembleKind::Goe => "goe",
            EnsembleKind::Gue => "gue",
            EnsembleKind::PoissonDiagonal => "poisson",
        }
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "goe" => Ok(EnsembleKind::Goe),
            "gue" => Ok(EnsembleKind::Gue),
            "poisson" | "poissondiagonal" | "poisson-diagonal" => Ok(EnsembleKind::PoissonDiagonal),
            other => Err(Error::Parse(format!("unknown ensemble '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub dim: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            kind,
            dim,
            sigma,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "ensemble dimension must be at least 2, got {}",
                self.dim
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        Ok(())
    }

    fn rng(&self, draw_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(draw_index);
        rng
    }
}

/// Mean and standard error of a Monte Carlo estimate at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub t: f64,
    pub per_sample: Option<Vec<f64>>,
}

impl EnsembleEstimate {
    pub fn from_samples(values: Vec<f64>, t: f64, keep_samples: bool) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 samples for a standard error, got {n}"
            )));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_samples: n,
            t,
            per_sample: keep_samples.then_some(values),
        })
    }

    /// `(mean − target) / stderr`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.stderr
    }

    pub fn interval(&self, k: f64) -> (f64, f64) {
        (self.mean - k * self.stderr, self.mean + k * self.stderr)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw number `draw_index` of the ensemble; deterministic in
/// `(spec.seed, draw_index)`.
pub fn sample_matrix(spec: &EnsembleSpec, draw_index: u64) -> HermitianMatrix {
    let d = spec.dim;
    let s = spec.sigma;
    let mut rng = spec.rng(draw_index);
    match spec.kind {
        EnsembleKind::Goe => {
            let mut m = DMatrix::<f64>::zeros(d, d);
            for i in 0..d {
                m[(i, i)] = s * std::f64::consts::SQRT_2 * normal(&mut rng);
                for j in (i + 1)..d {
                    let v = s * normal(&mut rng);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            HermitianMatrix::from_real(m).expect("symmetric by construction")
        }
        EnsembleKind::Gue => {
            let mut m = DMatrix::<Complex64>::zeros(d, d);
            let h = s * std::f64::consts::FRAC_1_SQRT_2;
            for i in 0..d {
                m[(i, i)] = Complex64::new(s * normal(&mut rng), 0.0);
                for j in (i + 1)..d {
                    let z = Complex64::new(h * normal(&mut rng), h * normal(&mut rng));
                    m[(i, j)] = z;
                    m[(j, i)] = z.conj();
                }
            }
            HermitianMatrix::from_complex(m).expect("Hermitian by construction")
        }
        EnsembleKind::PoissonDiagonal => {
            let mut levels: Vec<f64> = (0..d).map(|_| s * normal(&mut rng)).collect();
            levels.sort_by(f64::total_cmp);
            HermitianMatrix::diagonal(&levels)
        }
    }
}

/// Eigenvalues of draw `draw_index`; skips the eigensolver for diagonal draws.
pub fn sample_levels(spec: &EnsembleSpec, draw_index: u64) -> Result<Vec<f64>> {
    let m = sample_matrix(spec, draw_index);
    match spec.kind {
        EnsembleKind::PoissonDiagonal => Ok((0..spec.dim).map(|i| m.at(i, i).re).collect()),
        _ => Ok(eigendecompose(&m)?.energies),
    }
}

fn pair_sum(energies: &[f64], rho: &[f64], t: f64) -> f64 {
    let d = energies.len();
    let mut total = 0.0;
    for n in 0..d {
        let mut row = 0.0;
        for m in 0..d {
            if m != n {
                row += delta_t(energies[n] - energies[m], t);
            }
        }
        total += rho[n] * row;
    }
    total
}

/// Perturbation-averaged `χ̂⁽¹⁾ = σ² Σ_{n≠m} ρ_nn δ_t(E_n − E_m)`.
pub fn avg_chi1_analytic(eig: &EigenSystem, rho: &StateWeights, t: f64, sigma: f64) -> Result<f64> {
    avg_chi1_from_energies(&eig.energies, rho, t, sigma)
}

pub fn avg_chi1_from_energies(
    energies: &[f64],
    rho: &StateWeights,
    t: f64,
    sigma: f64,
) -> Result<f64> {
    if energies.len() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: energies.len(),
            found: rho.dim(),
        });
    }
    Ok(sigma * sigma * pair_sum(energies, &rho.probs, t))
}

/// Perturbation-averaged `χ̂⁽²⁾ = 2σ² t² (1 − tr ρ²)` (GOE convention).
pub fn avg_chi2_analytic(rho: &StateWeights, t: f64, sigma: f64) -> f64 {
    2.0 * sigma * sigma * t * t * (1.0 - rho.purity())
}

/// Monte Carlo estimates of χ⁽¹⁾ and χ⁽²⁾ averaged over perturbations drawn
/// from `spec`, one pair per entry of `times`. All times share the same draws.
pub fn monte_carlo_avg_chi_times(
    h: &HermitianMatrix,
    rho: &StateWeights,
    times: &[f64],
    spec: &EnsembleSpec,
    n_samples: usize,
    exec: Execution,
) -> Result<Vec<(EnsembleEstimate, EnsembleEstimate)>> {
    spec.validate()?;
    if n_samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    if spec.dim != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: spec.dim,
        });
    }
    let eig = eigendecompose(h)?;
    let draws: Vec<Result<Vec<(f64, f64)>>> = exec.map(n_samples, |k| {
        let v = sample_matrix(spec, k as u64);
        let w = perturbation_in_eigenbasis(&eig, &v)?;
        times
            .iter()
            .map(|&t| Ok((chi1(&eig, &w, rho, t)?, chi2(&w, rho, t)?)))
            .collect()
    });
    let draws: Vec<Vec<(f64, f64)>> = draws.into_iter().collect::<Result<_>>()?;
    times
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let c1 = draws.iter().map(|d| d[ti].0).collect();
            let c2 = draws.iter().map(|d| d[ti].1).collect();
            Ok((
                EnsembleEstimate::from_samples(c1, t, false)?,
                EnsembleEstimate::from_samples(c2, t, false)?,
            ))
        })
        .collect()
}

pub fn monte_carlo_avg_chi(
    h: &HermitianMatrix,
    rho: &StateWeights,
    t: f64,
    spec: &EnsembleSpec,
    n_samples: usize,
) -> Result<(EnsembleEstimate, EnsembleEstimate)> {
    let mut out =
        monte_carlo_avg_chi_times(h, rho, &[t], spec, n_samples, Execution::default())?;
    Ok(out.remove(0))
}

/// Fraction of levels at each edge ignored when measuring the mean spacing.
pub const SPACING_EDGE_FRACTION: f64 = 0.1;

/// Divides a sorted spectrum by its mean nearest-neighbour spacing measured
/// over the central 80% of levels.
pub fn rescale_unit_mean_spacing(levels: &[f64]) -> Result<Vec<f64>> {
    let n = levels.len();
    if n < 3 {
        return Err(Error::TooFewLevels { needed: 3, found: n });
    }
    let lo = (SPACING_EDGE_FRACTION * n as f64).floor() as usize;
    let hi = (n - 1 - lo).max(lo + 1);
    let mean = (levels[hi] - levels[lo]) / (hi - lo) as f64;
    if !(mean > 0.0) {
        return Err(Error::InvalidParameter("spectrum has zero mean spacing".into()));
    }
    Ok(levels.iter().map(|e| e / mean).collect())
}

/// For each `t`, estimates `χ̃⁽¹⁾(t)/t` over Hamiltonians drawn from `spec_h`
/// (uniform ρ, σ = 1 perturbations), after rescaling every spectrum to unit
/// mean level spacing. At `t = 0` the ratio is defined as 0.
pub fn ensemble_conjecture_experiment(
    spec_h: &EnsembleSpec,
    times: &[f64],
    n_samples: usize,
    exec: Execution,
) -> Result<Vec<EnsembleEstimate>> {
    spec_h.validate()?;
    if times.is_empty() {
        return Err(Error::InvalidParameter("no times given".into()));
    }
    if n_samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    let rho = StateWeights::uniform(spec_h.dim);
    let draws: Vec<Result<Vec<f64>>> = exec.map(n_samples, |k| {
        let levels = rescale_unit_mean_spacing(&sample_levels(spec_h, k as u64)?)?;
        Ok(times
            .iter()
            .map(|&t| {
                if t == 0.0 {
                    0.0
                } else {
                    pair_sum(&levels, &rho.probs, t) / t
                }
            })
            .collect())
    });
    let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;
    times
        .iter()
        .enumerate()
        .map(|(ti, &t)| EnsembleEstimate::from_samples(draws.iter().map(|d| d[ti]).collect(), t, false))
        .collect()
}

/// Writes estimates as `ensemble,dim,t,n_samples,mean,stderr,seed`.
pub fn write_estimates_csv(
    path: &Path,
    spec: &EnsembleSpec,
    estimates: &[EnsembleEstimate],
) -> Result<()> {
    let mut out = String::from("ensemble,dim,t,n_samples,mean,stderr,seed\n");
    for e in estimates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            spec.kind.as_str(),
            spec.dim,
            crate::format_float(e.t),
            e.n_samples,
            crate::format_float(e.mean),
            crate::format_float(e.stderr),
            spec.seed
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
