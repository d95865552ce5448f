//! Collective spin, truncated boson and Dicke Hamiltonian construction, plus
//! the decomposition into parity sectors of `exp[iπ(a†a + J_z + j)]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, HermitianMatrix, Mat};

/// Default upper bound on the Hilbert-space dimension of dense operators.
pub const DEFAULT_DIM_LIMIT: usize = 10_000;

/// Relative tolerance for entries coupling the two parity sectors.
pub const PARITY_RTOL: f64 = 1e-10;

/// Parameters of the single-mode Dicke model with `n_atoms` two-level atoms in
/// the symmetric (j = N/2) subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DickeParams {
    pub n_atoms: usize,
    pub omega: f64,
    pub omega0: f64,
    pub coupling: f64,
    /// Number of retained Fock levels; occupations run over `0..boson_cutoff`.
    pub boson_cutoff: usize,
    #[serde(default)]
    pub rwa: bool,
    #[serde(default = "default_dim_limit")]
    pub dim_limit: usize,
}

fn default_dim_limit() -> usize {
    DEFAULT_DIM_LIMIT
}

impl DickeParams {
    /// Resonant model (ω = ω0 = 1) without the rotating-wave approximation.
    pub fn resonant(n_atoms: usize, boson_cutoff: usize, coupling: f64) -> Self {
        Self {
            n_atoms,
            omega: 1.0,
            omega0: 1.0,
            coupling,
            boson_cutoff,
            rwa: false,
            dim_limit: DEFAULT_DIM_LIMIT,
        }
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self {
            coupling,
            ..self.clone()
        }
    }

    pub fn with_cutoff(&self, boson_cutoff: usize) -> Self {
        Self {
            boson_cutoff,
            ..self.clone()
        }
    }

    /// Pseudo-spin length j = N/2.
    pub fn j(&self) -> f64 {
        self.n_atoms as f64 / 2.0
    }

    pub fn spin_dim(&self) -> usize {
        self.n_atoms + 1
    }

    pub fn dim(&self) -> usize {
        self.boson_cutoff * self.spin_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::InvalidParameter("n_atoms must be positive".into()));
        }
        if self.boson_cutoff < 2 {
            return Err(Error::InvalidParameter(format!(
                "boson_cutoff must be at least 2, got {}",
                self.boson_cutoff
            )));
        }
        if !(self.omega > 0.0 && self.omega0 > 0.0) {
            return Err(Error::InvalidParameter(
                "omega and omega0 must be positive".into(),
            ));
        }
        if !self.coupling.is_finite() {
            return Err(Error::InvalidParameter("coupling must be finite".into()));
        }
        let dim = self.dim();
        if dim > self.dim_limit {
            return Err(Error::DimensionTooLarge {
                dim,
                limit: self.dim_limit,
            });
        }
        Ok(())
    }
}

/// Product basis |n_b⟩ ⊗ |j, m⟩ with index `n_b·(2j+1) + (m+j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductBasis {
    pub boson_dim: usize,
    pub spin_dim: usize,
}

/// One basis label: boson occupation and twice the spin projection (2m is
/// always an integer).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisLabel {
    pub n_b: usize,
    pub two_m: i64,
}

impl BasisLabel {
    pub fn m(&self) -> f64 {
        self.two_m as f64 / 2.0
    }
}

impl ProductBasis {
    pub fn new(boson_dim: usize, spin_dim: usize) -> Self {
        Self {
            boson_dim,
            spin_dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.boson_dim * self.spin_dim
    }

    /// Twice the pseudo-spin length.
    pub fn two_j(&self) -> i64 {
        self.spin_dim as i64 - 1
    }

    pub fn index(&self, label: BasisLabel) -> usize {
        let m_plus_j = ((label.two_m + self.two_j()) / 2) as usize;
        label.n_b * self.spin_dim + m_plus_j
    }

    pub fn label(&self, idx: usize) -> BasisLabel {
        let n_b = idx / self.spin_dim;
        let m_plus_j = (idx % self.spin_dim) as i64;
        BasisLabel {
            n_b,
            two_m: 2 * m_plus_j - self.two_j(),
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = BasisLabel> + '_ {
        (0..self.dim()).map(|i| self.label(i))
    }

    /// Total number of quanta n_b + m + j.
    pub fn quanta(&self, idx: usize) -> usize {
        idx / self.spin_dim + idx % self.spin_dim
    }

    pub fn is_even(&self, idx: usize) -> bool {
        self.quanta(idx) % 2 == 0
    }
}

/// Collective spin operators (J_z, J_+, J_-) for pseudo-spin `j`, in the basis
/// ordered by ascending m (index m + j).
pub fn build_spin_operators(j: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let two_j = 2.0 * j;
    if !(two_j >= 0.0) || two_j.fract() != 0.0 || !two_j.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "spin length must be a non-negative half-integer, got {j}"
        )));
    }
    let dim = two_j as usize + 1;
    let m_of = |k: usize| k as f64 - j;
    let jz = DMatrix::from_fn(dim, dim, |r, c| if r == c { m_of(r) } else { 0.0 });
    let jplus = DMatrix::from_fn(dim, dim, |r, c| {
        if r == c + 1 {
            let m = m_of(c);
            (j * (j + 1.0) - m * (m + 1.0)).sqrt()
        } else {
            0.0
        }
    });
    let jminus = jplus.transpose();
    Ok((jz, jplus, jminus))
}

/// Truncated bosonic mode with `cutoff` Fock levels: (a, a†, a†a).
pub fn build_boson_operators(
    cutoff: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if cutoff < 2 {
        return Err(Error::InvalidParameter(format!(
            "boson cutoff must be at least 2, got {cutoff}"
        )));
    }
    let a = DMatrix::from_fn(cutoff, cutoff, |r, c| {
        if c == r + 1 {
            (c as f64).sqrt()
        } else {
            0.0
        }
    });
    let adag = a.transpose();
    let number = DMatrix::from_fn(cutoff, cutoff, |r, c| if r == c { r as f64 } else { 0.0 });
    Ok((a, adag, number))
}

/// Coupling operator whose prefactor multiplies λ in the Hamiltonian:
/// `(a† + a) ⊗ (J₊ + J₋) / √(2j)`, or its RWA counterpart.
fn interaction(p: &DickeParams) -> Result<DMatrix<f64>> {
    let (_, jplus, jminus) = build_spin_operators(p.j())?;
    let (a, adag, _) = build_boson_operators(p.boson_cutoff)?;
    let scale = 1.0 / (2.0 * p.j()).sqrt();
    let v = if p.rwa {
        kron(&adag, &jminus) + kron(&a, &jplus)
    } else {
        kron(&(&adag + &a), &(&jplus + &jminus))
    };
    Ok(v * scale)
}

fn free_part(p: &DickeParams) -> Result<DMatrix<f64>> {
    let (jz, _, _) = build_spin_operators(p.j())?;
    let (_, _, number) = build_boson_operators(p.boson_cutoff)?;
    let id_b = DMatrix::<f64>::identity(p.boson_cutoff, p.boson_cutoff);
    let id_s = DMatrix::<f64>::identity(p.spin_dim(), p.spin_dim());
    Ok(kron(&id_b, &jz) * p.omega0 + kron(&number, &id_s) * p.omega)
}

/// Dicke Hamiltonian `ω0 J_z + ω a†a + λ/√(2j) (a† + a)(J₊ + J₋)` on the
/// truncated product basis.
pub fn build_dicke_hamiltonian(p: &DickeParams) -> Result<(HermitianMatrix, ProductBasis)> {
    p.validate()?;
    let h = free_part(p)? + interaction(p)? * p.coupling;
    let basis = ProductBasis::new(p.boson_cutoff, p.spin_dim());
    Ok((HermitianMatrix::from_real(h)?, basis))
}

/// Exact λ-derivative of [`build_dicke_hamiltonian`]; independent of λ.
pub fn build_dicke_derivative(p: &DickeParams) -> Result<HermitianMatrix> {
    p.validate()?;
    HermitianMatrix::from_real(interaction(p)?)
}

/// The two parity blocks of an operator together with their index maps into
/// the parent basis.
#[derive(Clone, Debug)]
pub struct ParityBlocks {
    pub even: HermitianMatrix,
    pub odd: HermitianMatrix,
    pub even_indices: Vec<usize>,
    pub odd_indices: Vec<usize>,
}

impl ParityBlocks {
    /// Embeds the blocks back into a full-dimension matrix.
    pub fn reconstruct(&self) -> HermitianMatrix {
        let d = self.even_indices.len() + self.odd_indices.len();
        let complex = !(self.even.mat().is_real() && self.odd.mat().is_real());
        let mut out = DMatrix::<num_complex::Complex64>::zeros(d, d);
        for (block, idx) in [
            (&self.even, &self.even_indices),
            (&self.odd, &self.odd_indices),
        ] {
            for (a, &ia) in idx.iter().enumerate() {
                for (b, &ib) in idx.iter().enumerate() {
                    out[(ia, ib)] = block.at(a, b);
                }
            }
        }
        let mat = if complex {
            Mat::Complex(out)
        } else {
            Mat::Real(out.map(|z| z.re))
        };
        HermitianMatrix::new(mat).expect("blocks are Hermitian")
    }

    pub fn indices(&self, sector: Sector) -> Option<&[usize]> {
        match sector {
            Sector::Even => Some(&self.even_indices),
            Sector::Odd => Some(&self.odd_indices),
            Sector::Full => None,
        }
    }

    pub fn block(&self, sector: Sector) -> Option<&HermitianMatrix> {
        match sector {
            Sector::Even => Some(&self.even),
            Sector::Odd => Some(&self.odd),
            Sector::Full => None,
        }
    }
}

/// Which part of the Hilbert space an analysis runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Full,
    Even,
    Odd,
}

impl Sector {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sector::Full => "full",
            Sector::Even => "even",
            Sector::Odd => "odd",
        }
    }
}

impl std::str::FromStr for Sector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Sector::Full),
            "even" => Ok(Sector::Even),
            "odd" => Ok(Sector::Odd),
            other => Err(Error::Parse(format!("unknown sector '{other}'"))),
        }
    }
}

impl std::fmt::Display for Sector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Splits `h` into the even and odd parity sectors of `basis`.
///
/// Fails with the largest offending entry if `h` couples the two sectors.
pub fn parity_split(h: &HermitianMatrix, basis: &ProductBasis) -> Result<ParityBlocks> {
    if h.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: h.dim(),
        });
    }
    let (even_indices, odd_indices): (Vec<usize>, Vec<usize>) =
        (0..basis.dim()).partition(|&i| basis.is_even(i));

    let tol = PARITY_RTOL * h.max_abs();
    let mut worst: Option<(usize, usize, f64)> = None;
    for &r in &even_indices {
        for &c in &odd_indices {
            let v = h.at(r, c).norm();
            if v > tol && worst.is_none_or(|(_, _, w)| v > w) {
                worst = Some((r, c, v));
            }
        }
    }
    if let Some((row, col, value)) = worst {
        return Err(Error::ParityViolation { row, col, value });
    }

    Ok(ParityBlocks {
        even: h.restrict(&even_indices),
        odd: h.restrict(&odd_indices),
        even_indices,
        odd_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::eigendecompose;

    fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a * b - b * a
    }

    #[test]
    fn spin_half_jz() {
        let (jz, _, _) = build_spin_operators(0.5).unwrap();
        // ascending m ordering: index 0 is m = -1/2
        assert_eq!(jz, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-0.5, 0.5])));
    }

    #[test]
    fn spin_one_raising_entries() {
        let (_, jp, jm) = build_spin_operators(1.0).unwrap();
        let s2 = 2f64.sqrt();
        assert!((jp[(1, 0)] - s2).abs() < 1e-15);
        assert!((jp[(2, 1)] - s2).abs() < 1e-15);
        assert_eq!(jp.iter().filter(|x| **x != 0.0).count(), 2);
        assert_eq!(jm, jp.transpose());
    }

    #[test]
    fn spin_commutator_identity() {
        for two_j in 0..9 {
            let j = two_j as f64 / 2.0;
            let (jz, jp, jm) = build_spin_operators(j).unwrap();
            let c = commutator(&jp, &jm) - &jz * 2.0;
            assert!(c.amax() < 1e-12, "j={j}");
        }
    }

    #[test]
    fn spin_rejects_non_half_integer() {
        assert!(build_spin_operators(0.3).is_err());
        assert!(build_spin_operators(-1.0).is_err());
    }

    #[test]
    fn boson_ladder() {
        let (a, adag, n) = build_boson_operators(3).unwrap();
        assert_eq!(a[(0, 1)], 1.0);
        assert!((a[(1, 2)] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(adag, a.transpose());
        assert_eq!(n, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0, 2.0])));
        let (a2, ad2, _) = build_boson_operators(2).unwrap();
        assert_eq!(&ad2 * &a2, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0])));
    }

    #[test]
    fn boson_truncation_artifact() {
        for m in 2..8 {
            let (a, adag, _) = build_boson_operators(m).unwrap();
            let c = &a * &adag - &adag * &a;
            let mut expected = DMatrix::identity(m, m);
            expected[(m - 1, m - 1)] = -((m - 1) as f64);
            assert!((c - expected).amax() < 1e-12);
        }
        assert!(build_boson_operators(1).is_err());
    }

    #[test]
    fn non_interacting_limit_is_diagonal() {
        let p = DickeParams {
            omega: 1.3,
            omega0: 0.7,
            ..DickeParams::resonant(3, 5, 0.0)
        };
        let (h, basis) = build_dicke_hamiltonian(&p).unwrap();
        for r in 0..h.dim() {
            for c in 0..h.dim() {
                let v = h.at(r, c).re;
                if r == c {
                    let l = basis.label(r);
                    assert!((v - (1.3 * l.n_b as f64 + 0.7 * l.m())).abs() < 1e-14);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn paper_scale_dimension() {
        let p = DickeParams::resonant(20, 128, 0.5);
        assert_eq!(p.dim(), 2688);
        let basis = ProductBasis::new(128, 21);
        let l = BasisLabel { n_b: 5, two_m: -4 };
        assert_eq!(basis.index(l), 5 * 21 + 8);
        assert_eq!(basis.label(basis.index(l)), l);
    }

    #[test]
    fn dimension_guard() {
        let p = DickeParams::resonant(20, 1000, 0.5);
        assert!(matches!(
            build_dicke_hamiltonian(&p),
            Err(Error::DimensionTooLarge { dim: 21000, .. })
        ));
    }

    #[test]
    fn hamiltonian_is_exactly_symmetric() {
        for rwa in [false, true] {
            let p = DickeParams {
                rwa,
                ..DickeParams::resonant(4, 10, 0.7)
            };
            let (h, _) = build_dicke_hamiltonian(&p).unwrap();
            let Mat::Real(m) = h.mat() else { panic!() };
            assert_eq!(m, &m.transpose());
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for rwa in [false, true] {
            let p = DickeParams {
                rwa,
                ..DickeParams::resonant(4, 10, 0.35)
            };
            let step = 1e-4;
            let (hp, _) = build_dicke_hamiltonian(&p.with_coupling(0.35 + step)).unwrap();
            let (hm, _) = build_dicke_hamiltonian(&p.with_coupling(0.35 - step)).unwrap();
            let dh = build_dicke_derivative(&p).unwrap();
            let fd = hp.add_scaled(-1.0, &hm).unwrap();
            let Mat::Real(fd) = fd.mat() else { panic!() };
            let Mat::Real(d) = dh.mat() else { panic!() };
            assert!((fd / (2.0 * step) - d).amax() <= 1e-10);
        }
    }

    #[test]
    fn derivative_spin_half_two_levels() {
        let p = DickeParams::resonant(1, 2, 0.9);
        let dh = build_dicke_derivative(&p).unwrap();
        let (a, adag, _) = build_boson_operators(2).unwrap();
        let (_, sp, sm) = build_spin_operators(0.5).unwrap();
        let expected = kron(&(adag + a), &(sp + sm));
        let Mat::Real(d) = dh.mat() else { panic!() };
        assert_eq!(d, &expected);
        assert_eq!(build_dicke_derivative(&p.with_coupling(0.1)).unwrap(), dh);
    }

    #[test]
    fn hamiltonian_is_affine_in_coupling() {
        let p = DickeParams::resonant(4, 8, 0.0);
        let (h1, _) = build_dicke_hamiltonian(&p.with_coupling(0.25)).unwrap();
        let (h2, _) = build_dicke_hamiltonian(&p.with_coupling(0.75)).unwrap();
        let dh = build_dicke_derivative(&p).unwrap();
        let diff = h2.add_scaled(-1.0, &h1).unwrap().add_scaled(-0.5, &dh).unwrap();
        assert!(diff.max_abs() < 1e-14);
    }

    #[test]
    fn vacuum_state_is_even() {
        let basis = ProductBasis::new(4, 3);
        let idx = basis.index(BasisLabel { n_b: 0, two_m: -2 });
        assert_eq!(basis.quanta(idx), 0);
        assert!(basis.is_even(idx));
        assert!(!basis.is_even(basis.index(BasisLabel { n_b: 1, two_m: -2 })));
    }

    #[test]
    fn parity_commutes_with_and_without_rwa() {
        for rwa in [false, true] {
            for lambda in [0.0, 0.4, 1.7] {
                let p = DickeParams {
                    rwa,
                    ..DickeParams::resonant(5, 9, lambda)
                };
                let (h, basis) = build_dicke_hamiltonian(&p).unwrap();
                let blocks = parity_split(&h, &basis).unwrap();
                assert_eq!(
                    blocks.even_indices.len() + blocks.odd_indices.len(),
                    h.dim()
                );
                assert_eq!(blocks.reconstruct(), h);
            }
        }
    }

    #[test]
    fn parity_split_reports_violation() {
        let basis = ProductBasis::new(2, 2);
        let mut m = DMatrix::<f64>::zeros(4, 4);
        // indices 0 (even) and 1 (odd)
        m[(0, 1)] = 0.5;
        m[(1, 0)] = 0.5;
        m[(2, 2)] = 1.0;
        let h = HermitianMatrix::from_real(m).unwrap();
        match parity_split(&h, &basis) {
            Err(Error::ParityViolation { row, col, value }) => {
                assert_eq!((row, col), (0, 1));
                assert_eq!(value, 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sector_spectra_union_matches_full() {
        let p = DickeParams::resonant(4, 30, 0.4);
        let (h, basis) = build_dicke_hamiltonian(&p).unwrap();
        assert!(h.dim() <= 200);
        let blocks = parity_split(&h, &basis).unwrap();
        let full = eigendecompose(&h).unwrap().energies;
        let mut union = eigendecompose(&blocks.even).unwrap().energies;
        union.extend(eigendecompose(&blocks.odd).unwrap().energies);
        union.sort_by(f64::total_cmp);
        assert_eq!(union.len(), full.len());
        for (a, b) in union.iter().zip(&full) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}
