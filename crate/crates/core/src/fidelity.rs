//! Operator fidelity `|tr(ρ U_A† U_B)|` between finite-time evolutions and
//! its second-order metric, split into the off-diagonal term χ⁽¹⁾ and the
//! diagonal-variance term χ⁽²⁾.
//!
//! Every quantity is evaluated spectrally: time evolution enters only as
//! phases `e^{−itE}` on eigenvalues, never through dense matrix exponentials.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, Mat};
use crate::spectra::{delta_t, eigendecompose, EigenSystem, StateWeights};

/// Matrix elements `W_nm = ⟨n|H′|m⟩` of a perturbation in the eigenbasis of
/// the unperturbed Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationInEigenbasis {
    pub matrix: Mat,
}

impl PerturbationInEigenbasis {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.matrix.at(n, n).re).collect()
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Rotates `hprime` into the eigenbasis: `W = V† H′ V`.
pub fn perturbation_in_eigenbasis(
    eig: &EigenSystem,
    hprime: &HermitianMatrix,
) -> Result<PerturbationInEigenbasis> {
    check_dim(eig.dim(), hprime.dim())?;
    let w = eig.vectors.adjoint_mul(&hprime.mat().mul(&eig.vectors));
    Ok(PerturbationInEigenbasis { matrix: w })
}

fn check_shapes(eig: &EigenSystem, w: &PerturbationInEigenbasis, rho: &StateWeights) -> Result<()> {
    check_dim(eig.dim(), w.dim())?;
    check_dim(eig.dim(), rho.dim())
}

/// `χ⁽¹⁾ = Σ_{n≠m} ρ_nn |W_nm|² δ_t(E_n − E_m)`.
///
/// Summation order is fixed (row by row, then over rows), so the result is
/// reproducible bit for bit.
pub fn chi1(
    eig: &EigenSystem,
    w: &PerturbationInEigenbasis,
    rho: &StateWeights,
    t: f64,
) -> Result<f64> {
    check_shapes(eig, w, rho)?;
    let d = eig.dim();
    let e = &eig.energies;
    let mut total = 0.0;
    for n in 0..d {
        let p = rho.probs[n];
        if p == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for m in 0..d {
            if m == n {
                continue;
            }
            let a = w.matrix.abs_sq(n, m);
            if a != 0.0 {
                row += a * delta_t(e[n] - e[m], t);
            }
        }
        total += p * row;
    }
    Ok(total)
}

/// Variant of [`chi1`] weighting each pair by the column population `ρ_mm`;
/// identical to [`chi1`] for Hermitian `W` up to relabeling.
pub fn chi1_column_weighted(
    eig: &EigenSystem,
    w: &PerturbationInEigenbasis,
    rho: &StateWeights,
    t: f64,
) -> Result<f64> {
    check_shapes(eig, w, rho)?;
    let d = eig.dim();
    let e = &eig.energies;
    let mut total = 0.0;
    for m in 0..d {
        let mut col = 0.0;
        for n in 0..d {
            if n != m {
                col += w.matrix.abs_sq(n, m) * delta_t(e[n] - e[m], t);
            }
        }
        total += rho.probs[m] * col;
    }
    Ok(total)
}

/// `χ⁽²⁾ = t² [Σ_n ρ_nn |W_nn|² − |Σ_n ρ_nn W_nn|²]`, evaluated in the
/// variance form so it is never negative.
pub fn chi2(w: &PerturbationInEigenbasis, rho: &StateWeights, t: f64) -> Result<f64> {
    check_dim(w.dim(), rho.dim())?;
    let diag = w.diagonal();
    let mean: f64 = diag.iter().zip(&rho.probs).map(|(x, p)| p * x).sum();
    let var: f64 = diag
        .iter()
        .zip(&rho.probs)
        .map(|(x, p)| p * (x - mean) * (x - mean))
        .sum();
    Ok(t * t * var)
}

/// Full metric `χ = χ⁽¹⁾ + χ⁽²⁾`.
pub fn chi_total(
    eig: &EigenSystem,
    w: &PerturbationInEigenbasis,
    rho: &StateWeights,
    t: f64,
) -> Result<f64> {
    Ok(chi1(eig, w, rho, t)? + chi2(w, rho, t)?)
}

/// `|⟨n|m′⟩|²` for eigenvectors `n` of A and `m′` of B.
fn overlap_weights(eig_a: &EigenSystem, eig_b: &EigenSystem) -> Result<Mat> {
    check_dim(eig_a.dim(), eig_b.dim())?;
    Ok(eig_a.vectors.adjoint_mul(&eig_b.vectors))
}

/// Exact operator fidelity `|Σ_n ρ_nn ⟨n| e^{itH_A} e^{−itH_B} |n⟩|` with ρ
/// diagonal in the eigenbasis of `H_A`.
pub fn operator_fidelity_exact(
    eig_a: &EigenSystem,
    eig_b: &EigenSystem,
    rho: &StateWeights,
    t: f64,
) -> Result<f64> {
    check_dim(eig_a.dim(), rho.dim())?;
    let overlaps = overlap_weights(eig_a, eig_b)?;
    let d = eig_a.dim();
    let phases_b: Vec<Complex64> = eig_b
        .energies
        .iter()
        .map(|&e| Complex64::from_polar(1.0, -t * e))
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    for n in 0..d {
        let p = rho.probs[n];
        if p == 0.0 {
            continue;
        }
        let mut inner = Complex64::new(0.0, 0.0);
        for (m, ph) in phases_b.iter().enumerate() {
            inner += ph * overlaps.abs_sq(n, m);
        }
        total += Complex64::from_polar(p, t * eig_a.energies[n]) * inner;
    }
    Ok(total.norm())
}

/// `|F_exact(λ, λ+δλ) − (1 − δλ²/2 · (χ⁽¹⁾ + χ⁽²⁾))|` for the linear family
/// `H + δλ·H′`. Scales as δλ³.
pub fn taylor_residual(
    h: &HermitianMatrix,
    eig: &EigenSystem,
    hprime: &HermitianMatrix,
    rho: &StateWeights,
    t: f64,
    dlambda: f64,
) -> Result<f64> {
    check_dim(h.dim(), hprime.dim())?;
    if dlambda == 0.0 {
        return Ok(0.0);
    }
    let w = perturbation_in_eigenbasis(eig, hprime)?;
    let chi = chi_total(eig, &w, rho, t)?;
    let eig_b = eigendecompose(&h.add_scaled(dlambda, hprime)?)?;
    let exact = operator_fidelity_exact(eig, &eig_b, rho, t)?;
    Ok((exact - (1.0 - 0.5 * dlambda * dlambda * chi)).abs())
}

/// One atom of the work distribution: energy change and its probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkAtom {
    pub frequency: f64,
    pub weight: f64,
}

/// Discrete work distribution `P(ω) = Σ ρ_nn |⟨n|m′⟩|² δ(ω − E_n + E′_m)` of a
/// sudden quench from `H_A` to `H_B`.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkDistribution {
    pub atoms: Vec<WorkAtom>,
}

/// Weights below this are dropped.
pub const WORK_PRUNE: f64 = 1e-16;

impl WorkDistribution {
    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `Σ_k w_k e^{iω_k t}`.
    pub fn characteristic(&self, t: f64) -> Complex64 {
        self.atoms
            .iter()
            .map(|a| Complex64::from_polar(a.weight, a.frequency * t))
            .sum()
    }
}

pub fn work_distribution(
    eig_a: &EigenSystem,
    eig_b: &EigenSystem,
    rho: &StateWeights,
) -> Result<WorkDistribution> {
    check_dim(eig_a.dim(), rho.dim())?;
    let overlaps = overlap_weights(eig_a, eig_b)?;
    let d = eig_a.dim();
    let mut atoms = Vec::new();
    for n in 0..d {
        for m in 0..d {
            let weight = rho.probs[n] * overlaps.abs_sq(n, m);
            if weight >= WORK_PRUNE {
                atoms.push(WorkAtom {
                    frequency: eig_a.energies[n] - eig_b.energies[m],
                    weight,
                });
            }
        }
    }
    Ok(WorkDistribution { atoms })
}

/// Survival amplitude `|⟨ψ₀| e^{−itH_B} |ψ₀⟩|`.
pub fn loschmidt_echo(eig_b: &EigenSystem, psi0: &[Complex64], t: f64) -> Result<f64> {
    check_dim(eig_b.dim(), psi0.len())?;
    let norm = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm });
    }
    let d = eig_b.dim();
    let mut amp = Complex64::new(0.0, 0.0);
    for m in 0..d {
        let c: Complex64 = (0..d)
            .map(|i| eig_b.vectors.at(i, m).conj() * psi0[i])
            .sum();
        amp += Complex64::from_polar(c.norm_sqr(), -t * eig_b.energies[m]);
    }
    Ok(amp.norm())
}
