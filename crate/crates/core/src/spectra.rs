//! Eigendecomposition, thermal weights, the `δ_t` kernel and nearest-neighbour
//! level-spacing statistics.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::ParityBlocks;
use crate::linalg::{HermitianMatrix, Mat};

/// Ascending eigenvalues and the matching orthonormal eigenvectors (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    pub vectors: Mat,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    /// Spectral width `E_max − E_min`.
    pub fn bandwidth(&self) -> f64 {
        self.energies[self.dim() - 1] - self.energies[0]
    }

    /// `max |V†V − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.vectors.adjoint_mul(&self.vectors);
        let d = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.at(i, j) - target).norm());
            }
        }
        worst
    }

    /// `max |H V − V diag(E)|`.
    pub fn residual(&self, h: &HermitianMatrix) -> f64 {
        let hv = h.mat().mul(&self.vectors);
        let d = self.dim();
        let mut worst = 0.0_f64;
        for j in 0..d {
            for i in 0..d {
                let r = hv.at(i, j) - self.vectors.at(i, j) * self.energies[j];
                worst = worst.max(r.norm());
            }
        }
        worst
    }

    /// Checks the residual and orthonormality bounds against the source matrix.
    pub fn verify(&self, h: &HermitianMatrix) -> bool {
        self.orthonormality_error() <= 1e-10
            && self.residual(h) <= 1e-8 * h.max_abs().max(f64::MIN_POSITIVE)
            && self.energies.windows(2).all(|w| w[0] <= w[1])
    }
}

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 0; // unlimited

fn sorted_permutation(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Dense Hermitian eigendecomposition with ascending eigenvalues.
pub fn eigendecompose(h: &HermitianMatrix) -> Result<EigenSystem> {
    let d = h.dim();
    let fail = || Error::EigenNonConvergence {
        dim: d,
        fingerprint: h.fingerprint(),
    };
    if d == 0 {
        return Ok(EigenSystem {
            energies: vec![],
            vectors: Mat::Real(DMatrix::zeros(0, 0)),
        });
    }
    match h.mat() {
        Mat::Real(m) => {
            let eig = SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(fail)?;
            let order = sorted_permutation(&eig.eigenvalues);
            let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
            let vectors = DMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
            Ok(EigenSystem {
                energies,
                vectors: Mat::Real(vectors),
            })
        }
        Mat::Complex(m) => {
            let eig = SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(fail)?;
            let order = sorted_permutation(&eig.eigenvalues);
            let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
            let vectors = DMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
            Ok(EigenSystem {
                energies,
                vectors: Mat::Complex(vectors),
            })
        }
    }
}

/// Eigendecomposition of a block-diagonal operator from its parity blocks.
///
/// The result is an eigensystem of the full operator whose eigenvectors each
/// live in exactly one sector. Returns `(full, even, odd)`.
pub fn eigendecompose_blocks(
    blocks: &ParityBlocks,
) -> Result<(EigenSystem, EigenSystem, EigenSystem)> {
    let even = eigendecompose(&blocks.even)?;
    let odd = eigendecompose(&blocks.odd)?;
    let full = merge_sector_eigensystems(&blocks.even_indices, &blocks.odd_indices, &even, &odd);
    Ok((full, even, odd))
}

/// Embeds two sector eigensystems into the parent space, ordered by energy
/// (even before odd on exact ties).
pub fn merge_sector_eigensystems(
    even_indices: &[usize],
    odd_indices: &[usize],
    even: &EigenSystem,
    odd: &EigenSystem,
) -> EigenSystem {
    let d = even_indices.len() + odd_indices.len();
    // (energy, is_even, column)
    let mut cols: Vec<(f64, bool, usize)> = even
        .energies
        .iter()
        .enumerate()
        .map(|(k, &e)| (e, true, k))
        .chain(odd.energies.iter().enumerate().map(|(k, &e)| (e, false, k)))
        .collect();
    cols.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));

    let real = even.vectors.is_real() && odd.vectors.is_real();
    let mut vecs = DMatrix::<Complex64>::zeros(d, d);
    for (j, &(_, is_even, k)) in cols.iter().enumerate() {
        let (src, idx) = if is_even {
            (&even.vectors, even_indices)
        } else {
            (&odd.vectors, odd_indices)
        };
        for (r, &row) in idx.iter().enumerate() {
            vecs[(row, j)] = src.at(r, k);
        }
    }
    let vectors = if real {
        Mat::Real(vecs.map(|z| z.re))
    } else {
        Mat::Complex(vecs)
    };
    EigenSystem {
        energies: cols.iter().map(|c| c.0).collect(),
        vectors,
    }
}

/// Inverse temperature. `f64::INFINITY` selects the ground level.
pub type Beta = f64;

/// Occupation probabilities `ρ_nn` of a state diagonal in an eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateWeights {
    pub probs: Vec<f64>,
    pub beta: Beta,
}

impl StateWeights {
    pub fn uniform(dim: usize) -> Self {
        Self {
            probs: vec![1.0 / dim as f64; dim],
            beta: 0.0,
        }
    }

    /// Arbitrary weights, renormalized. Fails on negative or all-zero input.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / total).collect(),
            beta: f64::NAN,
        })
    }

    /// Pure state on eigenbasis index `k`.
    pub fn pure(dim: usize, k: usize) -> Self {
        let mut probs = vec![0.0; dim];
        probs[k] = 1.0;
        Self {
            probs,
            beta: f64::INFINITY,
        }
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum()
    }
}

/// Gibbs weights `exp(−β(E_n − E_0)) / Z`; β = 0 gives the uniform state and
/// β = ∞ the ground level (uniform over levels within 1e−10 of E_0).
pub fn thermal_weights(eig: &EigenSystem, beta: Beta) -> Result<StateWeights> {
    thermal_weights_from_energies(&eig.energies, beta)
}

pub fn thermal_weights_from_energies(energies: &[f64], beta: Beta) -> Result<StateWeights> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "inverse temperature must be non-negative, got {beta}"
        )));
    }
    if energies.is_empty() || energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidParameter("energies must be finite".into()));
    }
    let d = energies.len();
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let probs = if beta == 0.0 {
        vec![1.0 / d as f64; d]
    } else if beta.is_infinite() {
        let ground: Vec<bool> = energies.iter().map(|e| e - e0 <= 1e-10).collect();
        let g = ground.iter().filter(|x| **x).count() as f64;
        ground.iter().map(|&x| if x { 1.0 / g } else { 0.0 }).collect()
    } else {
        let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    };
    Ok(StateWeights { probs, beta })
}

/// β such that the Gibbs weight of the highest level is `ratio` times that of
/// the lowest one: `exp[−β(E_max − E_min)] = ratio`.
pub fn beta_for_extremal_ratio(eig: &EigenSystem, ratio: f64) -> Result<Beta> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "weight ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let width = eig.bandwidth();
    if !(width > 0.0) {
        return Err(Error::InvalidParameter("degenerate spectrum has no width".into()));
    }
    Ok(-ratio.ln() / width)
}

/// The kernel `[sin(xt/2) / (x/2)]²`.
#[inline]
pub fn delta_t(x: f64, t: f64) -> f64 {
    let u = x * t;
    if u.abs() < 1e-4 {
        let u2 = u * u;
        t * t * (1.0 - u2 / 12.0 + u2 * u2 / 360.0)
    } else {
        let s = (0.5 * u).sin() / (0.5 * x);
        s * s
    }
}

/// Composite Simpson estimate of `∫ t⁻¹ δ_t(x) dx` over `[lo, hi]` with `n`
/// intervals (rounded up to even). Approaches 2π for large `t`.
pub fn delta_t_integral_check(t: f64, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| delta_t(x, t) / t;
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + k as f64 * h);
    }
    acc * h / 3.0
}

/// Wigner surmise for the GOE, normalized with unit mean.
pub fn wigner_pdf(s: f64) -> f64 {
    if s < 0.0 {
        return 0.0;
    }
    0.5 * PI * s * (-0.25 * PI * s * s).exp()
}

pub fn poisson_pdf(s: f64) -> f64 {
    if s < 0.0 {
        return 0.0;
    }
    (-s).exp()
}

/// Reference spacing densities selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    Wigner,
    Poisson,
}

impl Reference {
    pub fn pdf(&self, s: f64) -> f64 {
        match self {
            Reference::Wigner => wigner_pdf(s),
            Reference::Poisson => poisson_pdf(s),
        }
    }
}

impl std::str::FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wigner" | "goe" => Ok(Reference::Wigner),
            "poisson" => Ok(Reference::Poisson),
            other => Err(Error::Parse(format!("unknown reference '{other}'"))),
        }
    }
}

/// Density-normalized histogram over `[0, s_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
    /// Fraction of samples above `s_max` (excluded from the densities).
    pub overflow: f64,
    pub n_samples: usize,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.densities.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn mid(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn integral(&self) -> f64 {
        (0..self.n_bins()).map(|i| self.densities[i] * self.width(i)).sum()
    }
}

pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_S_MAX: f64 = 4.0;
pub const DEFAULT_UNFOLD_DEGREE: usize = 10;

pub fn spacing_histogram(spacings: &[f64], n_bins: usize, s_max: f64) -> Result<Histogram> {
    if spacings.is_empty() {
        return Err(Error::InvalidParameter("no spacings to bin".into()));
    }
    if n_bins < 5 {
        return Err(Error::InvalidParameter(format!(
            "need at least 5 bins, got {n_bins}"
        )));
    }
    if !(s_max > 0.0) {
        return Err(Error::InvalidParameter("s_max must be positive".into()));
    }
    let width = s_max / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|k| k as f64 * width).collect();
    let mut counts = vec![0usize; n_bins];
    let mut over = 0usize;
    for &s in spacings {
        if s > s_max {
            over += 1;
            continue;
        }
        let k = ((s.max(0.0) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let inside = spacings.len() - over;
    let densities = counts
        .iter()
        .map(|&c| {
            if inside == 0 {
                0.0
            } else {
                c as f64 / (inside as f64 * width)
            }
        })
        .collect();
    Ok(Histogram {
        edges,
        densities,
        overflow: over as f64 / spacings.len() as f64,
        n_samples: spacings.len(),
    })
}

/// Discrete relative entropy `Σ p_i ln(p_i / q_i)` between the histogram bin
/// masses and the reference masses (midpoint rule, clamped at 1e−12).
pub fn relative_entropy(hist: &Histogram, reference: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    for i in 0..hist.n_bins() {
        let w = hist.width(i);
        let p = hist.densities[i] * w;
        if p <= 0.0 {
            continue;
        }
        let q = (reference(hist.mid(i)) * w).max(1e-12);
        total += p * (p / q).ln();
    }
    total
}

/// Unfolded spectrum and its nearest-neighbour spacings.
#[derive(Clone, Debug, PartialEq)]
pub struct SpacingSample {
    pub raw_levels: Vec<f64>,
    pub unfolded_levels: Vec<f64>,
    pub spacings: Vec<f64>,
    pub histogram: Option<Histogram>,
}

impl SpacingSample {
    pub fn mean_spacing(&self) -> f64 {
        self.spacings.iter().sum::<f64>() / self.spacings.len() as f64
    }

    pub fn with_histogram(mut self, n_bins: usize, s_max: f64) -> Result<Self> {
        self.histogram = Some(spacing_histogram(&self.spacings, n_bins, s_max)?);
        Ok(self)
    }
}

/// Fraction of levels dropped at each spectral edge before fitting.
pub const UNFOLD_EDGE_TRIM: f64 = 0.02;
const UNFOLD_MAX_CONDITION: f64 = 1e10;

/// Unfolds a sorted spectrum by a least-squares polynomial fit of the
/// cumulative level count, keeping the central 96% of levels.
///
/// The fit is done in a Chebyshev basis on the window rescaled to `[−1, 1]`,
/// which keeps the design matrix well conditioned up to moderate degrees.
pub fn unfold(levels: &[f64], degree: usize) -> Result<SpacingSample> {
    let n = levels.len();
    if n < degree + 10 {
        return Err(Error::TooFewLevels {
            needed: degree + 10,
            found: n,
        });
    }
    if levels.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidParameter("levels must be sorted ascending".into()));
    }
    let trim = (UNFOLD_EDGE_TRIM * n as f64).floor() as usize;
    let lo = trim;
    let hi = n - trim; // exclusive
    let window = &levels[lo..hi];
    let (e_lo, e_hi) = (window[0], window[window.len() - 1]);
    if !(e_hi > e_lo) {
        return Err(Error::InvalidParameter("spectrum window has zero width".into()));
    }
    let scale = |e: f64| 2.0 * (e - e_lo) / (e_hi - e_lo) - 1.0;

    // staircase N(E_i) = #{levels ≤ E_i}, ties take the highest count
    let mut staircase = vec![0.0; window.len()];
    for (k, &e) in window.iter().enumerate() {
        let count = levels.partition_point(|&x| x <= e);
        staircase[k] = count as f64;
    }

    let cols = degree + 1;
    let design = DMatrix::from_fn(window.len(), cols, |r, c| chebyshev(c, scale(window[r])));
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > UNFOLD_MAX_CONDITION {
        return Err(Error::IllConditionedFit { condition });
    }
    let rhs = DVector::from_vec(staircase);
    let coeffs = svd
        .solve(&rhs, 1e-14 * smax)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut unfolded: Vec<f64> = window
        .iter()
        .map(|&e| {
            let x = scale(e);
            (0..cols).map(|c| coeffs[c] * chebyshev(c, x)).sum()
        })
        .collect();
    let mut spacings: Vec<f64> = unfolded.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::InvalidParameter("unfolded spectrum is not increasing".into()));
    }
    for s in &mut spacings {
        *s /= mean;
    }
    for u in &mut unfolded {
        *u /= mean;
    }
    Ok(SpacingSample {
        raw_levels: levels.to_vec(),
        unfolded_levels: unfolded,
        spacings,
        histogram: None,
    })
}

fn chebyshev(k: usize, x: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut a, mut b) = (1.0, x);
            for _ in 2..=k {
                let c = 2.0 * x * b - a;
                a = b;
                b = c;
            }
            b
        }
    }
}

/// Concatenates the spacings of several independently unfolded samples.
pub fn pool_spacings<'a>(samples: impl IntoIterator<Item = &'a SpacingSample>) -> Vec<f64> {
    samples
        .into_iter()
        .flat_map(|s| s.spacings.iter().copied())
        .collect()
}

/// Writes values as a single-column CSV with a one-line header.
pub fn write_column_csv(path: &Path, header: &str, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 24 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for v in values {
        out.push_str(&crate::format_float(*v));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a single-column CSV, skipping the header line.
pub fn read_column_csv(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    for (k, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let field = line.split(',').next().unwrap_or("").trim();
        if k == 0 || field.is_empty() {
            continue;
        }
        values.push(
            field
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))?,
        );
    }
    Ok(values)
}

/// Writes a histogram with the reference density at each bin midpoint.
pub fn write_histogram_csv(
    path: &Path,
    hist: &Histogram,
    reference: impl Fn(f64) -> f64,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "s_lo,s_hi,density,reference_density")?;
        for i in 0..hist.n_bins() {
            writeln!(
                w,
                "{},{},{},{}",
                crate::format_float(hist.edges[i]),
                crate::format_float(hist.edges[i + 1]),
                crate::format_float(hist.densities[i]),
                crate::format_float(reference(hist.mid(i)))
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}
