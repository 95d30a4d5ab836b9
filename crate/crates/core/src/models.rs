//! Form matrices for the coupled 1D applications, assembled with P1 hat
//! functions on a uniform grid of `(0, L)`.
//!
//! Every factor space that lives on the interval uses the P1 mass matrix as
//! H-Gram and mass + stiffness (the H^1 product) as V-Gram. Coefficients are
//! piecewise constant per cell, so the P1 quadrature is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forms::{DiscreteSpace, FormMatrix, FormMetadata};
use crate::linalg::{c, complexify, CMat, RMat, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n_cells: usize,
    length: f64,
}

impl Grid1D {
    pub fn new(n_cells: usize, length: f64) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::Validation(format!("grid needs at least 2 cells, got {n_cells}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Validation(format!("grid length must be positive, got {length}")));
        }
        Ok(Self { n_cells, length })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.n_nodes()).map(|k| k as f64 * h).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.n_cells).map(|k| (k as f64 + 0.5) * h).collect()
    }
}

/// Consistent P1 mass matrix.
pub fn mass_matrix(grid: &Grid1D) -> RMat {
    let n = grid.n_nodes();
    let h = grid.h();
    let mut m = RMat::zeros(n, n);
    for k in 0..grid.n_cells() {
        m[(k, k)] += h / 3.0;
        m[(k + 1, k + 1)] += h / 3.0;
        m[(k, k + 1)] += h / 6.0;
        m[(k + 1, k)] += h / 6.0;
    }
    m
}

/// P1 stiffness matrix for `int c(x) f' g' dx` with one coefficient per cell.
pub fn stiffness_matrix(grid: &Grid1D, coeff: &[f64]) -> RMat {
    assert_eq!(coeff.len(), grid.n_cells(), "one coefficient per cell");
    let n = grid.n_nodes();
    let h = grid.h();
    let mut s = RMat::zeros(n, n);
    for (k, &ck) in coeff.iter().enumerate() {
        let w = ck / h;
        s[(k, k)] += w;
        s[(k + 1, k + 1)] += w;
        s[(k, k + 1)] -= w;
        s[(k + 1, k)] -= w;
    }
    s
}

pub fn unit_stiffness(grid: &Grid1D) -> RMat {
    stiffness_matrix(grid, &vec![1.0; grid.n_cells()])
}

/// `H = L^2(0, L)`, `V = H^1(0, L)` in P1 coordinates.
pub fn h1_space(grid: &Grid1D, label: impl Into<String>) -> Result<DiscreteSpace> {
    let m = mass_matrix(grid);
    let v = &m + unit_stiffness(grid);
    DiscreteSpace::from_real(label, &m, &v)
}

/// `c_ij(x)` as one value per cell for every pair `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    m: usize,
    n_cells: usize,
    values: Vec<Vec<f64>>,
}

impl CoefficientField {
    pub fn from_fn(m: usize, n_cells: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let values = (0..m * m)
            .map(|k| (0..n_cells).map(|cell| f(k / m, k % m, cell)).collect())
            .collect();
        Self::new(m, n_cells, values)
    }

    /// `values[i * m + j]` holds the per-cell values of `c_ij`.
    pub fn new(m: usize, n_cells: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        if m == 0 || values.len() != m * m {
            return Err(Error::Dimension(format!("expected {} coefficient arrays, got {}", m * m, values.len())));
        }
        if let Some(bad) = values.iter().position(|v| v.len() != n_cells) {
            return Err(Error::Dimension(format!(
                "coefficient c_{}{} has {} values, grid has {n_cells} cells",
                bad / m + 1,
                bad % m + 1,
                values[bad].len()
            )));
        }
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Validation("coefficients must be finite".into()));
        }
        Ok(Self { m, n_cells, values })
    }

    pub fn constant(n_cells: usize, matrix: &RMat) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!("coefficient matrix must be square, got {:?}", matrix.shape())));
        }
        Self::from_fn(matrix.nrows(), n_cells, |i, j, _| matrix[(i, j)])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        &self.values[i * self.m + j]
    }

    pub fn at(&self, i: usize, j: usize, cell: usize) -> f64 {
        self.values[i * self.m + j][cell]
    }

    pub fn set(&mut self, i: usize, j: usize, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n_cells || values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("replacement coefficient must be finite with one value per cell".into()));
        }
        self.values[i * self.m + j] = values;
        Ok(())
    }

    /// The `m x m` matrix `c(x)` on one cell.
    pub fn cell_matrix(&self, cell: usize) -> RMat {
        RMat::from_fn(self.m, self.m, |i, j| self.at(i, j, cell))
    }

    pub fn add(&self, other: &CoefficientField) -> Result<Self> {
        if self.m != other.m || self.n_cells != other.n_cells {
            return Err(Error::Dimension("coefficient fields differ in shape".into()));
        }
        Self::from_fn(self.m, self.n_cells, |i, j, k| self.at(i, j, k) + other.at(i, j, k))
    }
}

/// Two-fibre coupling patterns with equal row and column sums, parametrised by
/// a diffusion coefficient and a coupling strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingPattern {
    /// `c11 = c22 = diffusion - coupling`, `c12 = c21 = -coupling`.
    MinusCoupling { diffusion: f64, coupling: f64 },
    /// `c11 = c22 = diffusion + coupling`, `c12 = c21 = -coupling`.
    PlusCoupling { diffusion: f64, coupling: f64 },
    /// All four coefficients equal.
    Uniform { value: f64 },
}

impl CouplingPattern {
    pub fn matrix(&self) -> RMat {
        let (d, o) = match *self {
            CouplingPattern::MinusCoupling { diffusion, coupling } => (diffusion - coupling, -coupling),
            CouplingPattern::PlusCoupling { diffusion, coupling } => (diffusion + coupling, -coupling),
            CouplingPattern::Uniform { value } => (value, value),
        };
        RMat::from_row_slice(2, 2, &[d, o, o, d])
    }

    pub fn field(&self, grid: &Grid1D) -> Result<CoefficientField> {
        CoefficientField::constant(grid.n_cells(), &self.matrix())
    }

    pub fn name(&self) -> &'static str {
        match self {
            CouplingPattern::MinusCoupling { .. } => "minus_coupling",
            CouplingPattern::PlusCoupling { .. } => "plus_coupling",
            CouplingPattern::Uniform { .. } => "uniform",
        }
    }
}

/// A two-fibre field that breaks the equal-row-sum condition: the
/// `MinusCoupling` pattern with `c22` raised by a seeded per-cell amount drawn
/// from `[min_violation, 2 * min_violation]`. Every cell keeps `c(x)`
/// symmetric positive definite when the base pattern is.
pub fn perturbed_field(
    grid: &Grid1D,
    diffusion: f64,
    coupling: f64,
    min_violation: f64,
    seed: u64,
) -> Result<CoefficientField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = CouplingPattern::MinusCoupling { diffusion, coupling }.field(grid)?;
    let bumped = field
        .get(1, 1)
        .iter()
        .map(|&v| v + rng.random_range(min_violation..=2.0 * min_violation))
        .collect();
    field.set(1, 1, bumped)?;
    Ok(field)
}

/// Coupled diffusion `u_i' = sum_j (c_ij u_j')'` on `m` parallel copies of the
/// interval, natural boundary conditions at both ends.
pub fn build_ephaptic(grid: &Grid1D, coeffs: &CoefficientField) -> Result<FormMatrix> {
    if coeffs.n_cells() != grid.n_cells() {
        return Err(Error::Dimension(format!(
            "coefficient field has {} cells, grid has {}",
            coeffs.n_cells(),
            grid.n_cells()
        )));
    }
    let m = coeffs.m();
    let spaces = (0..m)
        .map(|i| h1_space(grid, format!("fibre {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let blocks = (0..m * m)
        .map(|k| complexify(&stiffness_matrix(grid, coeffs.get(k / m, k % m))))
        .collect();
    let meta = FormMetadata::named("ephaptic")
        .param("m", m)
        .param("n_cells", grid.n_cells())
        .param("length", grid.length())
        .note("real line truncated to (0, L) with natural boundary conditions");
    FormMatrix::new(spaces, blocks, meta)
}

/// Constant coefficients `c_ij = A_ij`.
pub fn build_constant_coupled(grid: &Grid1D, a: &RMat) -> Result<FormMatrix> {
    let field = CoefficientField::constant(grid.n_cells(), a)?;
    let mut form = build_ephaptic(grid, &field)?;
    let meta = form.metadata_mut();
    meta.model = "constant_coupled".into();
    meta.params.push(("A".into(), format!("{:?}", a.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())));
    Ok(form)
}

/// Strongly damped wave as a first-order system on `H^1 x L^2`:
/// `S_11 = 0`, `S_12 = -(mass + stiffness)`, `S_21 = -alpha stiffness`,
/// `S_22 = stiffness`.
pub fn build_damped_wave(grid: &Grid1D, alpha: C64) -> Result<FormMatrix> {
    let mass = mass_matrix(grid);
    let stiff = unit_stiffness(grid);
    let h1 = &mass + &stiff;
    let n = grid.n_nodes();
    let position = DiscreteSpace::from_real("displacement", &h1, &h1)?;
    let velocity = DiscreteSpace::from_real("velocity", &mass, &h1)?;
    let k = complexify(&stiff);
    let blocks = vec![
        CMat::zeros(n, n),
        -complexify(&h1),
        k.map(|z| -alpha * z),
        k,
    ];
    // |Im a(f,f)| = |Im f1^H M f2 + Im((1 - conj(alpha)) f1^H K f2)|, and both
    // terms are bounded by ||f1||_{H^1} ||f2||_{H^1} <= ||f||_H ||f||_V.
    let parabola = (c(1.0) - alpha).norm().max(1.0);
    let mut meta = FormMetadata::named("damped_wave")
        .param("alpha", format!("{}{:+}i", alpha.re, alpha.im))
        .param("n_cells", grid.n_cells())
        .param("length", grid.length())
        .note("first component normed in H^1 for both H and V");
    meta.parabola_constant = Some(parabola);
    FormMatrix::new(vec![position, velocity], blocks, meta)
}

/// Heat equation in the interval whose boundary values obey their own
/// equation `w' = u|_boundary` with `du/dnu = w`.
///
/// The boundary is the two endpoints, so the boundary space is `C^2` with
/// identity Grams and the surface diffusion block vanishes.
pub fn build_dynamic_bc_heat(grid: &Grid1D) -> Result<FormMatrix> {
    let n = grid.n_nodes();
    let interior = h1_space(grid, "interior")?;
    let boundary = DiscreteSpace::new("boundary", CMat::identity(2, 2), CMat::identity(2, 2))?;
    let endpoints = [0, n - 1];
    let mut s12 = CMat::zeros(n, 2);
    let mut s21 = CMat::zeros(2, n);
    for (z, &node) in endpoints.iter().enumerate() {
        s12[(node, z)] = c(-1.0);
        s21[(z, node)] = c(-1.0);
    }
    let blocks = vec![complexify(&unit_stiffness(grid)), s12, s21, CMat::zeros(2, 2)];
    let meta = FormMetadata::named("dynamic_bc_heat")
        .param("n_cells", grid.n_cells())
        .param("length", grid.length())
        .note("boundary is two points: surface diffusion term vanishes");
    FormMatrix::new(vec![interior, boundary], blocks, meta)
}
