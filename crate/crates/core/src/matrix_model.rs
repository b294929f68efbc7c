//! Matrix-valued Schrödinger equations `i U' = 𝕳(t, U)` with two-sided
//! Hamiltonians `𝕳(t, M) = Σ_j χ_j(t) L_j(t) M R_j(t)`, and the two model
//! problems used by the low-rank experiments.
//!
//! Random draws use [`ChaCha8Rng`] seeded with a 64-bit seed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

/// Scalar time profile multiplying one Hamiltonian term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeProfile {
    Constant(f64),
    /// `(1 + cos 2πt) / 2`
    CosineSwitch,
    /// `1 - (1 + cos 2πt) / 2`
    CosineSwitchComplement,
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        let chi = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * t).cos());
        match self {
            TimeProfile::Constant(c) => *c,
            TimeProfile::CosineSwitch => chi,
            TimeProfile::CosineSwitchComplement => 1.0 - chi,
        }
    }
}

/// Hermitian factor acting on one side of the matrix unknown.
#[derive(Debug, Clone, PartialEq)]
pub enum SideMatrix {
    Identity(usize),
    /// Real symmetric tridiagonal matrix.
    Tridiagonal {
        diag: Vec<f64>,
        off: Vec<f64>,
    },
    /// Hermitian dense matrix.
    Dense(CMat),
}

impl SideMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SideMatrix::Identity(n) => *n,
            SideMatrix::Tridiagonal { diag, .. } => diag.len(),
            SideMatrix::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> CMat {
        match self {
            SideMatrix::Identity(n) => CMat::identity(*n, *n),
            SideMatrix::Tridiagonal { diag, off } => {
                let n = diag.len();
                CMat::from_fn(n, n, |i, j| {
                    let v = if i == j {
                        diag[i]
                    } else if i + 1 == j {
                        off[i]
                    } else if j + 1 == i {
                        off[j]
                    } else {
                        0.0
                    };
                    Complex64::new(v, 0.0)
                })
            }
            SideMatrix::Dense(m) => m.clone(),
        }
    }

    fn mul(&self, x: &CMat, transpose: bool) -> CMat {
        match self {
            SideMatrix::Identity(_) => x.clone(),
            SideMatrix::Tridiagonal { diag, off } => {
                let n = diag.len();
                let mut y = CMat::zeros(n, x.ncols());
                for c in 0..x.ncols() {
                    let xc = x.column(c);
                    let mut yc = y.column_mut(c);
                    for i in 0..n {
                        let mut s = xc[i] * diag[i];
                        if i > 0 {
                            s += xc[i - 1] * off[i - 1];
                        }
                        if i + 1 < n {
                            s += xc[i + 1] * off[i];
                        }
                        yc[i] = s;
                    }
                }
                y
            }
            SideMatrix::Dense(m) => {
                if transpose {
                    m.transpose() * x
                } else {
                    m * x
                }
            }
        }
    }
}

/// `e^{itH₀} S e^{-itH₀}` with diagonal `H₀` (or `S` itself when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct SideOp {
    pub matrix: SideMatrix,
    pub h0: Option<Vec<f64>>,
}

impl SideOp {
    pub fn new(matrix: SideMatrix, h0: Option<Vec<f64>>) -> Self {
        Self { matrix, h0 }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn phase(&self, t: f64, sign: f64, x: &mut CMat) {
        if let Some(h0) = &self.h0 {
            for (i, &e) in h0.iter().enumerate() {
                let ph = Complex64::from_polar(1.0, sign * t * e);
                x.row_mut(i).apply(|z| *z *= ph);
            }
        }
    }

    /// `S(t) X`.
    pub fn apply(&self, t: f64, x: &CMat) -> CMat {
        let mut y = x.clone();
        self.phase(t, -1.0, &mut y);
        let mut z = self.matrix.mul(&y, false);
        self.phase(t, 1.0, &mut z);
        z
    }

    /// `S(t)ᵀ X`.
    pub fn apply_transpose(&self, t: f64, x: &CMat) -> CMat {
        let mut y = x.clone();
        self.phase(t, 1.0, &mut y);
        let mut z = self.matrix.mul(&y, true);
        self.phase(t, -1.0, &mut z);
        z
    }

    pub fn dense_at(&self, t: f64) -> CMat {
        self.apply(t, &CMat::identity(self.dim(), self.dim()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerm {
    pub profile: TimeProfile,
    pub left: SideOp,
    pub right: SideOp,
}

/// `𝕳(t, M) = Σ_j χ_j(t) L_j(t) M R_j(t)`, self-adjoint for `Tr(M* N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSidedHamiltonian {
    lx: usize,
    ly: usize,
    terms: Vec<HamiltonianTerm>,
}

impl TwoSidedHamiltonian {
    pub fn new(lx: usize, ly: usize, terms: Vec<HamiltonianTerm>) -> Result<Self> {
        for term in &terms {
            if term.left.dim() != lx || term.right.dim() != ly {
                return Err(Error::ShapeMismatch {
                    expected: format!("{lx}x{lx} and {ly}x{ly} factors"),
                    got: format!(
                        "{}x{} and {}x{}",
                        term.left.dim(),
                        term.left.dim(),
                        term.right.dim(),
                        term.right.dim()
                    ),
                });
            }
        }
        Ok(Self { lx, ly, terms })
    }

    /// The zero Hamiltonian.
    pub fn zero(lx: usize, ly: usize) -> Self {
        Self { lx, ly, terms: Vec::new() }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.lx, self.ly)
    }

    pub fn terms(&self) -> &[HamiltonianTerm] {
        &self.terms
    }

    pub fn apply(&self, t: f64, m: &CMat) -> Result<CMat> {
        if m.nrows() != self.lx || m.ncols() != self.ly {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.lx, self.ly),
                got: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        Ok(self.apply_unchecked(t, m))
    }

    pub(crate) fn apply_unchecked(&self, t: f64, m: &CMat) -> CMat {
        let mut out = CMat::zeros(self.lx, self.ly);
        for term in &self.terms {
            let chi = term.profile.value(t);
            if chi == 0.0 {
                continue;
            }
            let lm = term.left.apply(t, m);
            // (L M) R = (Rᵀ (L M)ᵀ)ᵀ
            let lmr = term.right.apply_transpose(t, &lm.transpose()).transpose();
            out.zip_apply(&lmr, |o, v| *o += v * chi);
        }
        out
    }
}

/// Initial condition given in factored form `U₀ = X₀ Y₀ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMatrix {
    pub x: CMat,
    pub y: CMat,
}

impl FactoredMatrix {
    pub fn full(&self) -> CMat {
        &self.x * self.y.transpose()
    }
}

/// Description of a matrix experiment, sufficient to rebuild it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MatrixExperimentSpec {
    Random { seed: u64 },
    Pathological { rank: usize, noise: f64, seed: u64 },
}

impl MatrixExperimentSpec {
    pub fn build(&self) -> Result<MatrixExperiment> {
        match *self {
            MatrixExperimentSpec::Random { seed } => Ok(random_experiment(seed)),
            MatrixExperimentSpec::Pathological { rank, noise, seed } => pathological_experiment(rank, noise, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixExperiment {
    pub name: String,
    pub spec: MatrixExperimentSpec,
    pub hamiltonian: TwoSidedHamiltonian,
    pub initial: FactoredMatrix,
    pub t_final: f64,
    pub intervals: usize,
}

impl MatrixExperiment {
    pub fn dims(&self) -> (usize, usize) {
        self.hamiltonian.dims()
    }

    pub fn u0(&self) -> CMat {
        self.initial.full()
    }

    /// Same experiment with a different horizon and grid.
    pub fn with_horizon(mut self, t_final: f64, intervals: usize) -> Self {
        self.t_final = t_final;
        self.intervals = intervals;
        self
    }

    /// Same experiment with a replaced initial condition.
    pub fn with_initial(mut self, initial: FactoredMatrix) -> Self {
        self.initial = initial;
        self
    }
}

fn real_matrix(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> CMat {
    CMat::from_fn(rows, cols, |i, j| Complex64::new(f(i, j), 0.0))
}

/// Random two-term experiment with `L_x = L_y = 40`, `T = 5`, `N = 200`.
///
/// Draw order from the generator: `H₀ₓ`, `H₀ᵧ` diagonals; then for
/// `H₁ₓ, H₂ₓ, H₁ᵧ, H₂ᵧ` the diagonal followed by the off-diagonal; then
/// `X₀`, `Y₀`. Every entry is uniform on `[0, 1]`.
pub fn random_experiment(seed: u64) -> MatrixExperiment {
    let l = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(0.0..1.0)).collect() };
    let h0x = uniform(l);
    let h0y = uniform(l);
    let mut tri = || SideMatrix::Tridiagonal { diag: uniform(l), off: uniform(l - 1) };
    let (h1x, h2x, h1y, h2y) = (tri(), tri(), tri(), tri());
    let x0 = uniform(l);
    let y0 = uniform(l);
    let terms = vec![
        HamiltonianTerm {
            profile: TimeProfile::CosineSwitch,
            left: SideOp::new(h1x, Some(h0x.clone())),
            right: SideOp::new(h1y, Some(h0y.clone())),
        },
        HamiltonianTerm {
            profile: TimeProfile::CosineSwitchComplement,
            left: SideOp::new(h2x, Some(h0x)),
            right: SideOp::new(h2y, Some(h0y)),
        },
    ];
    MatrixExperiment {
        name: "als-random".into(),
        spec: MatrixExperimentSpec::Random { seed },
        hamiltonian: TwoSidedHamiltonian::new(l, l, terms).expect("consistent dimensions"),
        initial: FactoredMatrix { x: real_matrix(l, 1, |i, _| x0[i]), y: real_matrix(l, 1, |i, _| y0[i]) },
        t_final: 5.0,
        intervals: 200,
    }
}

pub const PATHOLOGICAL_SIZE: usize = 20;
pub const PATHOLOGICAL_T_FINAL: f64 = 2.0;

/// `[[0, I], [I, 0]]` of size `l` (even).
pub fn block_swap(l: usize) -> CMat {
    let h = l / 2;
    real_matrix(l, l, |i, j| if (i + h) % l == j { 1.0 } else { 0.0 })
}

/// `diag(1, e⁻¹, …, e^{-(l-1)})`.
pub fn pathological_u0(l: usize) -> CMat {
    real_matrix(l, l, |i, j| if i == j { (-(i as f64)).exp() } else { 0.0 })
}

/// Closed-form solution `cos(t) U₀ − i sin(t) H U₀ H` of `i U' = H U H`
/// with `H² = I`.
pub fn pathological_solution(u0: &CMat, t: f64) -> CMat {
    let h = block_swap(u0.nrows());
    let huh = &h * u0 * &h;
    u0 * Complex64::new(t.cos(), 0.0) + huh * Complex64::new(0.0, -t.sin())
}

/// Rank-`rank` truncated pathological experiment, `L = 20`, `N = 200`,
/// `T = 2`, with uniform `[0, noise]` perturbations added to both factors.
pub fn pathological_experiment(rank: usize, noise: f64, seed: u64) -> Result<MatrixExperiment> {
    let l = PATHOLOGICAL_SIZE;
    if rank == 0 || rank > l {
        return Err(Error::RankOutOfRange { rank, max: l });
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise must be non-negative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || if noise > 0.0 { rng.gen_range(0.0..noise) } else { 0.0 };
    let mut x = real_matrix(l, rank, |i, j| if i == j { (-(i as f64)).exp() } else { 0.0 });
    let mut y = real_matrix(l, rank, |i, j| if i == j { 1.0 } else { 0.0 });
    for z in x.iter_mut() {
        *z += draw();
    }
    for z in y.iter_mut() {
        *z += draw();
    }
    let h = SideOp::new(SideMatrix::Dense(block_swap(l)), None);
    let ham = TwoSidedHamiltonian::new(
        l,
        l,
        vec![HamiltonianTerm { profile: TimeProfile::Constant(1.0), left: h.clone(), right: h }],
    )?;
    Ok(MatrixExperiment {
        name: "als-pathological".into(),
        spec: MatrixExperimentSpec::Pathological { rank, noise, seed },
        hamiltonian: ham,
        initial: FactoredMatrix { x, y },
        t_final: PATHOLOGICAL_T_FINAL,
        intervals: 200,
    })
}

/// Frobenius inner product `Tr(M* N)`.
pub fn frobenius_inner(m: &CMat, n: &CMat) -> Complex64 {
    m.iter().zip(n.iter()).map(|(a, b)| a.conj() * b).sum()
}
