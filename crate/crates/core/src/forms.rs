//! Galerkin product spaces and form matrices in coordinates.
//!
//! Block `S_ij` of a [`FormMatrix`] is the matrix of `a_ij(f, g)` for a trial
//! vector `f` in space `j` and a test vector `g` in space `i`, with the test
//! vector conjugated on the left: `a_ij(f, g) = g^H S_ij f`. The global form is
//! `a(f, g) = sum_ij g_i^H S_ij f_j`.

use nalgebra::LU;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{
    self, block_diag, cholesky, generalized_eigenvalues, hermitian_part, is_hermitian, CMat, CVec,
    RMat, C64,
};

/// Seed used whenever a caller does not supply one.
pub const DEFAULT_SEED: u64 = 0;

const GRAM_HERMITIAN_TOL: f64 = 1e-12;
const SAMPLE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DiscreteSpace {
    label: String,
    h_gram: CMat,
    v_gram: CMat,
}

impl DiscreteSpace {
    pub fn new(label: impl Into<String>, h_gram: CMat, v_gram: CMat) -> Result<Self> {
        let label = label.into();
        let n = h_gram.nrows();
        if n == 0 || !h_gram.is_square() || v_gram.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "space '{label}': Gram shapes {:?} and {:?} must be equal, square and nonempty",
                h_gram.shape(),
                v_gram.shape()
            )));
        }
        for (name, g) in [("H", &h_gram), ("V", &v_gram)] {
            if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Validation(format!("space '{label}': {name}-Gram has non-finite entries")));
            }
            if !is_hermitian(g, GRAM_HERMITIAN_TOL) {
                return Err(Error::Validation(format!("space '{label}': {name}-Gram is not Hermitian")));
            }
            cholesky(g, &format!("space '{label}' {name}-Gram"))?;
        }
        Ok(Self {
            label,
            h_gram,
            v_gram,
        })
    }

    pub fn from_real(label: impl Into<String>, h_gram: &RMat, v_gram: &RMat) -> Result<Self> {
        Self::new(label, linalg::complexify(h_gram), linalg::complexify(v_gram))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.h_gram.nrows()
    }

    pub fn h_gram(&self) -> &CMat {
        &self.h_gram
    }

    pub fn v_gram(&self) -> &CMat {
        &self.v_gram
    }

    pub fn h_norm(&self, x: &CVec) -> f64 {
        linalg::gram_norm_sqr(&self.h_gram, x).sqrt()
    }

    pub fn v_norm(&self, x: &CVec) -> f64 {
        linalg::gram_norm_sqr(&self.v_gram, x).sqrt()
    }

    /// Same dimension and identical Gram matrices (up to round-off).
    pub fn same_geometry(&self, other: &DiscreteSpace) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let close = |a: &CMat, b: &CMat| {
            linalg::max_abs(&(a - b)) <= 1e-12 * linalg::max_abs(a).max(1.0)
        };
        close(&self.h_gram, &other.h_gram) && close(&self.v_gram, &other.v_gram)
    }
}

/// Norm of the injection `V -> H`: `sqrt(lambda_max)` of `h x = lambda v x`.
pub fn embedding_norm(space: &DiscreteSpace) -> Result<f64> {
    let ev = generalized_eigenvalues(space.h_gram(), space.v_gram())?;
    Ok(ev.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

#[derive(Debug, Clone)]
pub struct FormBlock {
    pub row: usize,
    pub col: usize,
    pub matrix: CMat,
}

#[derive(Debug, Clone, Default)]
pub struct FormMetadata {
    pub model: String,
    pub params: Vec<(String, String)>,
    pub notes: Vec<String>,
    /// Constant `M` with `|Im a(f,f)| <= M ||f||_V ||f||_H`, when the builder
    /// knows one.
    pub parabola_constant: Option<f64>,
}

impl FormMetadata {
    pub fn named(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            ..Self::default()
        }
    }

    pub fn param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.push((key.into(), value.to_string()));
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// Coordinates of an element of the product space, one vector per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    pub parts: Vec<CVec>,
}

impl BlockVector {
    pub fn new(parts: Vec<CVec>) -> Self {
        Self { parts }
    }

    pub fn zeros(form: &FormMatrix) -> Self {
        Self::new(form.spaces.iter().map(|s| CVec::zeros(s.dim())).collect())
    }

    pub fn from_real(parts: &[Vec<f64>]) -> Self {
        Self::new(
            parts
                .iter()
                .map(|p| CVec::from_iterator(p.len(), p.iter().map(|&x| linalg::c(x))))
                .collect(),
        )
    }

    pub fn m(&self) -> usize {
        self.parts.len()
    }

    pub fn part(&self, i: usize) -> &CVec {
        &self.parts[i]
    }

    pub fn flatten(&self) -> CVec {
        let n: usize = self.parts.iter().map(|p| p.len()).sum();
        CVec::from_iterator(n, self.parts.iter().flat_map(|p| p.iter().copied()))
    }

    /// Split a global coordinate vector according to the form's block layout.
    pub fn split(form: &FormMatrix, flat: &CVec) -> Self {
        let offsets = form.offsets();
        Self::new(
            offsets
                .windows(2)
                .map(|w| flat.rows(w[0], w[1] - w[0]).into_owned())
                .collect(),
        )
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.parts.iter().map(|p| p * s).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.parts
            .iter()
            .all(|p| p.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// Real parts of all nodal values, component after component.
    pub fn real_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.parts.iter().flat_map(|p| p.iter().map(|z| z.re))
    }

    pub fn check_layout(&self, form: &FormMatrix, what: &str) -> Result<()> {
        let ok = self.parts.len() == form.m()
            && self.parts.iter().zip(&form.spaces).all(|(p, s)| p.len() == s.dim());
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: block layout {:?} does not match the form's spaces {:?}",
                self.parts.iter().map(|p| p.len()).collect::<Vec<_>>(),
                form.spaces.iter().map(|s| s.dim()).collect::<Vec<_>>()
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct FormMatrix {
    spaces: Vec<DiscreteSpace>,
    blocks: Vec<FormBlock>,
    metadata: FormMetadata,
}

impl FormMatrix {
    /// `blocks` are given row-major: `blocks[i * m + j]` is `S_ij`.
    pub fn new(spaces: Vec<DiscreteSpace>, blocks: Vec<CMat>, metadata: FormMetadata) -> Result<Self> {
        let m = spaces.len();
        if m == 0 {
            return Err(Error::Dimension("a form matrix needs at least one space".into()));
        }
        if blocks.len() != m * m {
            return Err(Error::Dimension(format!("expected {} blocks, got {}", m * m, blocks.len())));
        }
        let blocks = blocks
            .into_iter()
            .enumerate()
            .map(|(k, matrix)| {
                let (row, col) = (k / m, k % m);
                let want = (spaces[row].dim(), spaces[col].dim());
                if matrix.shape() != want {
                    return Err(Error::Dimension(format!(
                        "block ({}, {}) has shape {:?}, expected {want:?}",
                        row + 1,
                        col + 1,
                        matrix.shape()
                    )));
                }
                if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Validation(format!("block ({}, {}) has non-finite entries", row + 1, col + 1)));
                }
                Ok(FormBlock { row, col, matrix })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spaces,
            blocks,
            metadata,
        })
    }

    pub fn m(&self) -> usize {
        self.spaces.len()
    }

    pub fn spaces(&self) -> &[DiscreteSpace] {
        &self.spaces
    }

    pub fn space(&self, i: usize) -> &DiscreteSpace {
        &self.spaces[i]
    }

    pub fn block(&self, i: usize, j: usize) -> &CMat {
        &self.blocks[i * self.m() + j].matrix
    }

    pub fn blocks(&self) -> &[FormBlock] {
        &self.blocks
    }

    pub fn metadata(&self) -> &FormMetadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut FormMetadata {
        &mut self.metadata
    }

    /// Start offsets of each factor in the global coordinate vector, plus the
    /// total dimension as the last entry.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.m() + 1);
        let mut acc = 0;
        out.push(0);
        for s in &self.spaces {
            acc += s.dim();
            out.push(acc);
        }
        out
    }

    pub fn total_dim(&self) -> usize {
        self.spaces.iter().map(|s| s.dim()).sum()
    }

    /// The global matrix `S` with `S_ij` in block position `(i, j)`.
    pub fn full_matrix(&self) -> CMat {
        let off = self.offsets();
        let n = self.total_dim();
        let mut s = CMat::zeros(n, n);
        for b in &self.blocks {
            s.view_mut((off[b.row], off[b.col]), b.matrix.shape()).copy_from(&b.matrix);
        }
        s
    }

    /// `blockdiag(h_gram_i)`.
    pub fn mass_matrix(&self) -> CMat {
        block_diag(&self.spaces.iter().map(|s| s.h_gram()).collect::<Vec<_>>())
    }

    /// `blockdiag(v_gram_i)`.
    pub fn v_matrix(&self) -> CMat {
        block_diag(&self.spaces.iter().map(|s| s.v_gram()).collect::<Vec<_>>())
    }

    /// The adjoint form `a*(f, g) = conj(a(g, f))`: block `(i, j)` becomes
    /// `S_ji^H`.
    pub fn adjoint(&self) -> FormMatrix {
        let m = self.m();
        let blocks = (0..m * m)
            .map(|k| self.block(k % m, k / m).adjoint())
            .collect();
        let mut meta = self.metadata.clone();
        meta.model = format!("{} (adjoint)", meta.model);
        FormMatrix::new(self.spaces.clone(), blocks, meta).expect("adjoint preserves layout")
    }

    /// The decoupled form `sum_i a_ii` (off-diagonal blocks zeroed).
    pub fn diagonal_part(&self) -> FormMatrix {
        let m = self.m();
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                if b.row == b.col {
                    b.matrix.clone()
                } else {
                    CMat::zeros(b.matrix.nrows(), b.matrix.ncols())
                }
            })
            .collect();
        debug_assert_eq!(self.blocks.len(), m * m);
        let mut meta = self.metadata.clone();
        meta.model = format!("{} (diagonal part)", meta.model);
        FormMatrix::new(self.spaces.clone(), blocks, meta).expect("diagonal part preserves layout")
    }

    pub fn with_block(&self, i: usize, j: usize, matrix: CMat) -> Result<FormMatrix> {
        let m = self.m();
        let mut blocks: Vec<CMat> = self.blocks.iter().map(|b| b.matrix.clone()).collect();
        blocks[i * m + j] = matrix;
        FormMatrix::new(self.spaces.clone(), blocks, self.metadata.clone())
    }

    /// All factor spaces share one geometry.
    pub fn identical_spaces(&self) -> bool {
        self.spaces.windows(2).all(|w| w[0].same_geometry(&w[1]))
    }

    pub fn h_norm(&self, u: &BlockVector) -> f64 {
        u.parts
            .iter()
            .zip(&self.spaces)
            .map(|(p, s)| linalg::gram_norm_sqr(s.h_gram(), p))
            .sum::<f64>()
            .sqrt()
    }

    pub fn v_norm(&self, u: &BlockVector) -> f64 {
        u.parts
            .iter()
            .zip(&self.spaces)
            .map(|(p, s)| linalg::gram_norm_sqr(s.v_gram(), p))
            .sum::<f64>()
            .sqrt()
    }
}

/// `a(f, g) = sum_ij g_i^H S_ij f_j`.
pub fn form_apply(form: &FormMatrix, f: &BlockVector, g: &BlockVector) -> Result<C64> {
    f.check_layout(form, "trial vector")?;
    g.check_layout(form, "test vector")?;
    Ok(form
        .blocks
        .iter()
        .map(|b| g.part(b.row).dotc(&(&b.matrix * f.part(b.col))))
        .sum())
}

/// `a_ij(f, g) = g^H S_ij f` for a single block.
pub fn block_apply(form: &FormMatrix, i: usize, j: usize, f: &CVec, g: &CVec) -> Result<C64> {
    let s = form.block(i, j);
    if f.len() != s.ncols() || g.len() != s.nrows() {
        return Err(Error::Dimension(format!(
            "block ({}, {}) is {:?}, got trial {} and test {}",
            i + 1,
            j + 1,
            s.shape(),
            f.len(),
            g.len()
        )));
    }
    Ok(g.dotc(&(s * f)))
}

fn check_index(form: &FormMatrix, i: usize) -> Result<()> {
    if i >= form.m() {
        return Err(Error::Dimension(format!("space index {} out of range 1..={}", i + 1, form.m())));
    }
    Ok(())
}

/// Largest value of `|g^H S_ij f| / (||f||_{V_j} ||g||_{V_i})`, from the
/// whitened block `L_i^{-1} S_ij L_j^{-H}`.
pub fn estimate_continuity(form: &FormMatrix, i: usize, j: usize) -> Result<f64> {
    check_index(form, i)?;
    check_index(form, j)?;
    let li = cholesky(form.space(i).v_gram(), "V-Gram")?.l();
    let lj = cholesky(form.space(j).v_gram(), "V-Gram")?.l();
    let w = linalg::whiten(form.block(i, j), &li, &lj)?;
    Ok(linalg::spectral_norm(&w))
}

/// Best discrete `alpha` for a given shift `omega` on the diagonal block `i`:
/// `lambda_min` of `herm(S_ii) + omega h_i` relative to `v_i`.
pub fn estimate_ellipticity(form: &FormMatrix, i: usize, omega: f64) -> Result<f64> {
    check_index(form, i)?;
    let s = form.space(i);
    let shifted = hermitian_part(form.block(i, i)) + s.h_gram().scale(omega);
    lowest(generalized_eigenvalues(&shifted, s.v_gram())?)
}

/// The same estimate for the whole form on the product space.
pub fn estimate_form_ellipticity(form: &FormMatrix, omega: f64) -> Result<f64> {
    let shifted = hermitian_part(&form.full_matrix()) + form.mass_matrix().scale(omega);
    lowest(generalized_eigenvalues(&shifted, &form.v_matrix())?)
}

fn lowest(ev: Vec<f64>) -> Result<f64> {
    ev.first()
        .copied()
        .ok_or_else(|| Error::Numerical("empty spectrum".into()))
}

/// Whether `Re a(u, u) >= 0` for every `u`, up to a relative round-off slack.
pub fn is_accretive(form: &FormMatrix) -> Result<bool> {
    Ok(accretivity_margin(form)? >= 0.0)
}

/// `lambda_min(herm S)` plus the round-off slack; nonnegative iff accretive.
pub fn accretivity_margin(form: &FormMatrix) -> Result<f64> {
    let s = form.full_matrix();
    let scale = linalg::max_abs(&s) * (s.nrows().max(1) as f64);
    let ev = linalg::hermitian_eigenvalues(&hermitian_part(&s))?;
    Ok(ev.first().copied().unwrap_or(0.0) + 1e-10 * scale)
}

/// Discrete generator `-blockdiag(h_i)^{-1} S`, obtained from one global LU
/// factorisation of the block mass matrix.
pub fn associated_operator(form: &FormMatrix) -> Result<CMat> {
    let mass = form.mass_matrix();
    let lu = LU::new(mass);
    let mut rhs = form.full_matrix();
    rhs.neg_mut();
    lu.solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular mass matrix".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSample {
    pub value: C64,
    pub v_norm_sq: f64,
    pub h_norm_sq: f64,
}

fn complex_normal(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `count` values `a(f, f)` for reproducible complex standard-normal `f`,
/// together with `||f||_V^2` and `||f||_H^2`.
pub fn numerical_range_samples(form: &FormMatrix, count: usize, seed: u64) -> Vec<RangeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = form.full_matrix();
    let mass = form.mass_matrix();
    let v = form.v_matrix();
    let n = form.total_dim();
    (0..count)
        .map(|_| {
            let f = CVec::from_fn(n, |_, _| complex_normal(&mut rng));
            RangeSample {
                value: f.dotc(&(&s * &f)),
                v_norm_sq: linalg::gram_norm_sqr(&v, &f),
                h_norm_sq: linalg::gram_norm_sqr(&mass, &f),
            }
        })
        .collect()
}

/// Outcome of a sampling test. Margins are relative to the magnitude of the
/// terms involved; a sample violates the test when its margin is below
/// `-1e-9`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleCheck {
    pub pass: bool,
    pub worst_margin: f64,
}

fn fold_margins(margins: impl Iterator<Item = f64>) -> SampleCheck {
    let worst = margins.fold(f64::INFINITY, f64::min);
    SampleCheck {
        pass: worst >= -SAMPLE_SLACK,
        worst_margin: worst,
    }
}

fn relative(margin: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        margin / scale
    } else {
        margin
    }
}

/// Every sample satisfies `Re a >= alpha |f|_V^2 - omega |f|_H^2` and
/// `|Im a| <= c |f|_V^2`.
pub fn sector_check(samples: &[RangeSample], alpha: f64, omega: f64, c: f64) -> SampleCheck {
    fold_margins(samples.iter().map(|s| {
        let scale = s.value.norm()
            + alpha.abs() * s.v_norm_sq
            + omega.abs() * s.h_norm_sq
            + c.abs() * s.v_norm_sq;
        let re = s.value.re - (alpha * s.v_norm_sq - omega * s.h_norm_sq);
        let im = c * s.v_norm_sq - s.value.im.abs();
        relative(re.min(im), scale)
    }))
}

/// Every sample satisfies `|Im a| <= m_tilde |f|_V |f|_H`.
pub fn parabola_check(samples: &[RangeSample], m_tilde: f64) -> SampleCheck {
    fold_margins(samples.iter().map(|s| {
        let bound = m_tilde * (s.v_norm_sq * s.h_norm_sq).sqrt();
        relative(bound - s.value.im.abs(), s.value.norm() + bound)
    }))
}
