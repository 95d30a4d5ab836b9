//! Invariance and order properties of the semigroup generated by a form
//! matrix, tested algebraically on the blocks or along simulated trajectories.
//!
//! Lattice operations act on nodal coordinates. For P1 elements this agrees
//! with the continuum operations at the nodes only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::{evolve_with, EvolutionConfig, Stepper, TrajectoryRecord};
use crate::forms::{
    accretivity_margin, associated_operator, numerical_range_samples, parabola_check, sector_check,
    BlockVector, DiscreteSpace, FormMatrix,
};
use crate::linalg::{
    self, c, cholesky, frobenius, hermitian_eigen, kron_identity, max_abs, spectral_norm, CMat, CVec,
};
use crate::models::CoefficientField;
use crate::report::{CertificateEntry, Criterion, Verdict};

const PROJECTION_TOL: f64 = 1e-12;
const SUBSPACE_REL_TOL: f64 = 1e-9;
const RUNTIME_TOL: f64 = 1e-8;
const SUM_TOL: f64 = 1e-12;
const BLOCK_ZERO_TOL: f64 = 1e-12;
const IDENTIFICATION_TOL: f64 = 1e-12;
/// Norm of the unmeasured part of strip-run data relative to the measured one.
const STRIP_DATA_WEIGHT: f64 = 4.0;

/// Verdict plus an optional trajectory that exhibits a violation.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub entry: CertificateEntry,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone)]
pub struct Witness {
    pub name: String,
    pub record: TrajectoryRecord,
    pub first_violation: Option<f64>,
}

impl CheckResult {
    fn new(entry: CertificateEntry) -> Self {
        Self { entry, witness: None }
    }

    fn not_applicable(criterion: Criterion, why: impl Into<String>) -> Self {
        Self::new(CertificateEntry::new(criterion, Verdict::NotApplicable, why))
    }

    pub fn verdict(&self) -> Verdict {
        self.entry.verdict
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.entry.constant(name)
    }
}

/// Orthogonal projection `K` on `C^m` with its eigenvector split.
#[derive(Debug, Clone)]
pub struct ProjectionSpec {
    k: CMat,
    eig1: Vec<CVec>,
    eig0: Vec<CVec>,
}

impl ProjectionSpec {
    pub fn m(&self) -> usize {
        self.k.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.k
    }

    pub fn eig1(&self) -> &[CVec] {
        &self.eig1
    }

    pub fn eig0(&self) -> &[CVec] {
        &self.eig0
    }

    pub fn rank(&self) -> usize {
        self.eig1.len()
    }

    /// `K ⊗ I_n`.
    pub fn lifted(&self, n: usize) -> CMat {
        kron_identity(&self.k, n)
    }

    fn basis(vectors: &[CVec], m: usize) -> CMat {
        let mut b = CMat::zeros(m, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            b.set_column(j, v);
        }
        b
    }

    /// Columns `v_1..v_r` lifted to `v_l ⊗ I_n`.
    pub fn range_basis(&self, n: usize) -> CMat {
        kron_identity(&Self::basis(&self.eig1, self.m()), n)
    }

    /// Columns `v_{r+1}..v_m` lifted to `v_l ⊗ I_n`.
    pub fn kernel_basis(&self, n: usize) -> CMat {
        kron_identity(&Self::basis(&self.eig0, self.m()), n)
    }
}

pub fn make_projection(k: CMat) -> Result<ProjectionSpec> {
    if k.nrows() == 0 || !k.is_square() {
        return Err(Error::Dimension(format!("projection must be square and nonempty, got {:?}", k.shape())));
    }
    let scale = max_abs(&k).max(1.0);
    let herm = max_abs(&(&k - k.adjoint()));
    let idem = max_abs(&(&k * &k - &k));
    if herm > PROJECTION_TOL * scale || idem > PROJECTION_TOL * scale {
        return Err(Error::Validation(format!(
            "not an orthogonal projection: |K - K^H| = {herm:e}, |K^2 - K| = {idem:e}"
        )));
    }
    let (values, vectors) = hermitian_eigen(&linalg::hermitian_part(&k))?;
    let mut eig1 = Vec::new();
    let mut eig0 = Vec::new();
    for (j, lambda) in values.iter().enumerate() {
        let v = vectors.column(j).into_owned();
        if *lambda > 0.5 {
            eig1.push(v);
        } else {
            eig0.push(v);
        }
    }
    Ok(ProjectionSpec { k, eig1, eig0 })
}

/// All entries `1/m`: the projection onto in-phase states.
pub fn averaging_projection(m: usize) -> Result<ProjectionSpec> {
    if m == 0 {
        return Err(Error::Validation("averaging projection needs m >= 1".into()));
    }
    make_projection(CMat::from_element(m, m, c(1.0 / m as f64)))
}

/// Componentwise lattice operations on real nodal values.
pub struct LatticeOps;

impl LatticeOps {
    pub fn positive_part(x: f64) -> f64 {
        x.max(0.0)
    }

    pub fn modulus(x: f64) -> f64 {
        x.abs()
    }

    pub fn sign(x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// `(1 ∧ |x|) sign x`.
    pub fn truncate(x: f64) -> f64 {
        x.abs().min(1.0) * Self::sign(x)
    }

    /// `(|x| - 1)^+ sign x`; `truncate(x) + excess(x) == x`.
    pub fn excess(x: f64) -> f64 {
        (x.abs() - 1.0).max(0.0) * Self::sign(x)
    }

    /// Apply `op` to the real part of every nodal value.
    pub fn map(u: &BlockVector, op: impl Fn(f64) -> f64) -> BlockVector {
        BlockVector::new(u.parts.iter().map(|p| p.map(|z| c(op(z.re)))).collect())
    }
}

/// Reproducible per-trial random stream.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Independent uniform nodal values in `[lo, hi]`.
pub fn uniform_data(form: &FormMatrix, rng: &mut impl Rng, lo: f64, hi: f64) -> BlockVector {
    BlockVector::new(
        form.spaces()
            .iter()
            .map(|s| CVec::from_fn(s.dim(), |_, _| c(rng.random_range(lo..=hi))))
            .collect(),
    )
}

/// The same uniform `[-1, 1]` profile in every component.
pub fn in_phase_data(form: &FormMatrix, rng: &mut impl Rng) -> Result<BlockVector> {
    if !form.identical_spaces() {
        return Err(Error::Validation("in-phase data need identical factor spaces".into()));
    }
    let n = form.space(0).dim();
    let profile = CVec::from_fn(n, |_, _| c(rng.random_range(-1.0..=1.0)));
    Ok(BlockVector::new(vec![profile; form.m()]))
}

/// Uniform `[-1, 1]` data with the H-weighted mean of every component removed.
pub fn mean_zero_data(form: &FormMatrix, rng: &mut impl Rng) -> BlockVector {
    let raw = uniform_data(form, rng, -1.0, 1.0);
    BlockVector::new(
        raw.parts
            .iter()
            .zip(form.spaces())
            .map(|(p, s)| mean_zero_projection(s) * p)
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Algebraic checks

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripDirection {
    /// Strips `||u - Pu|| <= a`.
    StripC,
    /// Balls `||Pu|| <= a`.
    StripB,
}

impl StripDirection {
    fn criterion(self) -> Criterion {
        match self {
            StripDirection::StripC => Criterion::StripSubspace,
            StripDirection::StripB => Criterion::BallSubspace,
        }
    }
}

/// Coupling between range and kernel of `P = K ⊗ I` through the form.
///
/// `StripC` needs `a(g, h) = 0` for `g` in the range and `h` in the kernel of
/// `P`; `StripB` swaps the two roles.
pub fn subspace_invariance_check(
    form: &FormMatrix,
    proj: &ProjectionSpec,
    direction: StripDirection,
) -> Result<CheckResult> {
    let criterion = direction.criterion();
    if proj.m() != form.m() {
        return Err(Error::Dimension(format!("projection is {0}x{0}, form has {1} components", proj.m(), form.m())));
    }
    if !form.identical_spaces() {
        return Ok(CheckResult::not_applicable(criterion, "factor spaces are not identical"));
    }
    let margin = accretivity_margin(form)?;
    if margin < 0.0 {
        return Ok(CheckResult::not_applicable(criterion, "form is not accretive").map_value("accretivity_margin", margin));
    }
    let n = form.space(0).dim();
    let s = form.full_matrix();
    let range = proj.range_basis(n);
    let kernel = proj.kernel_basis(n);
    let coupling = match direction {
        StripDirection::StripC => kernel.adjoint() * &s * &range,
        StripDirection::StripB => range.adjoint() * &s * &kernel,
    };
    let residual = frobenius(&coupling);
    let scale = frobenius(&s);
    let pass = residual <= SUBSPACE_REL_TOL * scale;
    Ok(CheckResult::new(
        CertificateEntry::new(
            criterion,
            Verdict::from_bool(pass),
            if pass { "range and kernel of P decouple" } else { "form couples range and kernel of P" },
        )
        .with("residual", residual)
        .with("form_norm", scale),
    ))
}

impl CheckResult {
    fn map_value(mut self, name: &str, value: f64) -> Self {
        self.entry.constants.push((name.into(), value));
        self
    }
}

/// `I - w w^H h / (w^H h w)` with `w = 1`: H-orthogonal projection onto
/// vectors with vanishing H-weighted mean.
pub fn mean_zero_projection(space: &DiscreteSpace) -> CMat {
    let n = space.dim();
    let ones = CVec::from_element(n, c(1.0));
    CMat::identity(n, n) - span_projection(space, &ones)
}

/// H-orthogonal projection onto `span(v)`.
pub fn span_projection(space: &DiscreteSpace, v: &CVec) -> CMat {
    let hv = space.h_gram() * v;
    let denom = v.dotc(&hv);
    (v * hv.adjoint()).unscale(denom.re)
}

/// H-orthogonal projection onto the span of one seeded random vector.
pub fn random_span_projection(space: &DiscreteSpace, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = CVec::from_fn(space.dim(), |_, _| c(rng.random_range(-1.0..=1.0)));
    span_projection(space, &v)
}

/// Invariance of `Y_1 x ... x Y_m` with `Y_i = range P_i`: every
/// `(I - P_i)^H S_ij P_j` must vanish. `P_j V_j ⊂ V_j` holds automatically
/// for matrices acting on the coordinate space and is not tested.
pub fn product_subspace_check(form: &FormMatrix, projections: &[CMat]) -> Result<CheckResult> {
    if projections.len() != form.m() {
        return Err(Error::Dimension(format!("{} projections for {} spaces", projections.len(), form.m())));
    }
    for (i, (p, space)) in projections.iter().zip(form.spaces()).enumerate() {
        let n = space.dim();
        if p.shape() != (n, n) {
            return Err(Error::Dimension(format!("projection {} has shape {:?}, space has dim {n}", i + 1, p.shape())));
        }
        let scale = max_abs(p).max(1.0);
        let idem = max_abs(&(p * p - p));
        let hp = space.h_gram() * p;
        let selfadj = max_abs(&(&hp - hp.adjoint())) / max_abs(space.h_gram()).max(f64::MIN_POSITIVE);
        if idem > 1e-10 * scale || selfadj > 1e-10 * scale {
            return Err(Error::Validation(format!(
                "projection {} is not H-orthogonal: |P^2 - P| = {idem:e}, |hP - (hP)^H| = {selfadj:e}",
                i + 1
            )));
        }
    }
    let m = form.m();
    let mut worst: f64 = 0.0;
    let mut worst_pair = (0, 0);
    for i in 0..m {
        let n_i = form.space(i).dim();
        let q = CMat::identity(n_i, n_i) - &projections[i];
        for (j, p_j) in projections.iter().enumerate() {
            let r = frobenius(&(q.adjoint() * form.block(i, j) * p_j));
            if r > worst {
                worst = r;
                worst_pair = (i + 1, j + 1);
            }
        }
    }
    let scale = frobenius(&form.full_matrix());
    let pass = worst <= SUBSPACE_REL_TOL * scale;
    let why = if pass {
        "no block maps a subspace into the complement of another; P_j V_j ⊂ V_j holds trivially".to_string()
    } else {
        format!("block ({}, {}) leaks out of the product subspace", worst_pair.0, worst_pair.1)
    };
    Ok(CheckResult::new(
        CertificateEntry::new(Criterion::ProductSubspace, Verdict::from_bool(pass), why)
            .with("residual", worst)
            .with("form_norm", scale),
    ))
}

/// The first `m0` components form an invariant subsystem iff no block
/// `S_ij` with `i > m0 >= j` couples into the remaining ones.
pub fn subsystem_invariance_check(form: &FormMatrix, m0: usize) -> Result<CheckResult> {
    let m = form.m();
    if m < 3 || !(2..m).contains(&m0) {
        return Err(Error::Validation(format!("m0 must lie in 2..={} for m = {m}, got {m0}", m.saturating_sub(1))));
    }
    let tol = BLOCK_ZERO_TOL * max_abs(&form.full_matrix()).max(1.0);
    let mut largest: f64 = 0.0;
    let mut culprit = None;
    for i in m0..m {
        for j in 0..m0 {
            let b = max_abs(form.block(i, j));
            if b > largest {
                largest = b;
                culprit = Some((i + 1, j + 1));
            }
        }
    }
    let pass = largest <= tol;
    let why = match culprit.filter(|_| !pass) {
        Some((i, j)) => format!("block ({i}, {j}) is nonzero"),
        None => format!("blocks below the leading {m0} components vanish"),
    };
    Ok(CheckResult::new(
        CertificateEntry::new(Criterion::Subsystem, Verdict::from_bool(pass), why).with("max_block_entry", largest),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumKind {
    Rows,
    Columns,
}

/// Whether `sum_j c_ij(x)` (rows) or `sum_i c_ij(x)` (columns) is the same
/// for every index on every cell.
pub fn ephaptic_sum_check(coeffs: &CoefficientField, which: SumKind) -> CheckResult {
    let m = coeffs.m();
    let mut spread: f64 = 0.0;
    let mut size: f64 = 0.0;
    for cell in 0..coeffs.n_cells() {
        let cm = coeffs.cell_matrix(cell);
        size = size.max(cm.amax());
        let sums: Vec<f64> = (0..m)
            .map(|k| match which {
                SumKind::Rows => cm.row(k).sum(),
                SumKind::Columns => cm.column(k).sum(),
            })
            .collect();
        let hi = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
        spread = spread.max(hi - lo);
    }
    let pass = spread <= SUM_TOL * size.max(1.0);
    let criterion = match which {
        SumKind::Rows => Criterion::RowSums,
        SumKind::Columns => Criterion::ColumnSums,
    };
    CheckResult::new(
        CertificateEntry::new(
            criterion,
            Verdict::from_bool(pass),
            if pass { "sums agree on every cell" } else { "sums differ on some cell" },
        )
        .with("max_spread", spread),
    )
}

/// Real blocks and real Gram matrices. With real nodal bases this is
/// sufficient for a real semigroup.
pub fn realness_check(form: &FormMatrix) -> CheckResult {
    let imag = |m: &CMat| m.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let mut worst: f64 = form.blocks().iter().map(|b| imag(&b.matrix)).fold(0.0, f64::max);
    for s in form.spaces() {
        worst = worst.max(imag(s.h_gram())).max(imag(s.v_gram()));
    }
    let scale = max_abs(&form.full_matrix()).max(1.0);
    let pass = worst <= 1e-14 * scale;
    CheckResult::new(
        CertificateEntry::new(
            Criterion::Realness,
            Verdict::from_bool(pass),
            if pass { "all blocks are real" } else { "some block has an imaginary part" },
        )
        .with("max_imaginary", worst),
    )
}

/// Largest value of `a_ij(f, g)`, `i != j`, over nonnegative hat pairs and
/// random nonnegative vectors, with the block where it is attained.
fn offdiagonal_sign(form: &FormMatrix, trials: usize, seed: u64) -> (f64, Option<(usize, usize)>) {
    let m = form.m();
    let mut rng = trial_rng(seed, usize::MAX >> 1);
    let mut worst = f64::NEG_INFINITY;
    let mut at = None;
    for i in 0..m {
        for j in (0..m).filter(|&j| j != i) {
            let b = form.block(i, j);
            let mut top = b.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            for _ in 0..trials {
                let f = CVec::from_fn(b.ncols(), |_, _| c(rng.random_range(0.0..=1.0)));
                let g = CVec::from_fn(b.nrows(), |_, _| c(rng.random_range(0.0..=1.0)));
                top = top.max(g.dotc(&(b * f)).re);
            }
            if top > worst {
                worst = top;
                at = Some((i + 1, j + 1));
            }
        }
    }
    (worst, at)
}

fn sign_tolerance(form: &FormMatrix) -> f64 {
    1e-12 * max_abs(&form.full_matrix()).max(1.0)
}

/// Runs `trials` trajectories in parallel; each gets its own random stream.
fn run_trials<T: Send>(
    trials: usize,
    seed: u64,
    f: impl Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..trials)
        .into_par_iter()
        .map(|t| f(t, &mut trial_rng(seed, t)))
        .collect()
}

fn first_time(record: &TrajectoryRecord, bad: impl Fn(usize) -> bool) -> Option<f64> {
    (0..record.len()).find(|&k| bad(k)).map(|k| record.times[k])
}

/// Positive semigroup: off-diagonal blocks nonpositive on nonnegative data,
/// and (if `runtime`) nonnegative data stay nonnegative along `trials`
/// trajectories.
pub fn positivity_check(
    form: &FormMatrix,
    runtime: bool,
    trials: usize,
    cfg: &EvolutionConfig,
    seed: u64,
) -> Result<CheckResult> {
    if realness_check(form).verdict() != Verdict::Pass {
        return Ok(CheckResult::not_applicable(Criterion::Positivity, "form is not real"));
    }
    let (top, at) = offdiagonal_sign(form, trials, seed);
    let tol = sign_tolerance(form);
    let top_reported = if top.is_finite() { top } else { 0.0 };
    if top > tol {
        let (i, j) = at.unwrap_or((0, 0));
        return Ok(CheckResult::new(
            CertificateEntry::new(
                Criterion::Positivity,
                Verdict::Fail,
                format!("a_{i}{j}(f, g) > 0 for some nonnegative f, g"),
            )
            .with("max_offdiag_value", top_reported),
        ));
    }
    if !runtime {
        return Ok(CheckResult::new(
            CertificateEntry::new(Criterion::Positivity, Verdict::Pass, "off-diagonal sign condition holds")
                .with("max_offdiag_value", top_reported),
        ));
    }
    let stepper = Stepper::new(form, cfg)?;
    let records = run_trials(trials, seed, |_, rng| {
        let u0 = uniform_data(form, rng, 0.0, 1.0);
        evolve_with(&stepper, form, &u0, cfg, None)
    })?;
    let mut min_value = f64::INFINITY;
    let mut witness = None;
    for (t, rec) in records.into_iter().enumerate() {
        let lo = rec.min_value.iter().copied().fold(f64::INFINITY, f64::min);
        min_value = min_value.min(lo);
        if lo < -RUNTIME_TOL && witness.is_none() {
            witness = Some(Witness {
                name: format!("positivity_trial{t}"),
                first_violation: first_time(&rec, |k| rec.min_value[k] < -RUNTIME_TOL),
                record: rec,
            });
        }
    }
    let pass = witness.is_none();
    Ok(CheckResult {
        entry: CertificateEntry::new(
            Criterion::Positivity,
            Verdict::from_bool(pass),
            if pass {
                format!("off-diagonal sign condition holds; {trials} nonnegative trajectories stay nonnegative")
            } else {
                "a nonnegative initial datum acquires a negative nodal value".to_string()
            },
        )
        .with("max_offdiag_value", top_reported)
        .with("min_value", min_value),
        witness,
    })
}

/// `|e^{t a0} f| <= e^{t a} |f|` nodewise, where `a0` keeps only the diagonal
/// blocks. The margin is the smallest `e^{t a}|f| - |e^{t a0} f|` seen.
pub fn domination_check(form: &FormMatrix, trials: usize, cfg: &EvolutionConfig, seed: u64) -> Result<CheckResult> {
    if realness_check(form).verdict() != Verdict::Pass {
        return Ok(CheckResult::not_applicable(Criterion::Domination, "form is not real"));
    }
    let (top, _) = offdiagonal_sign(form, trials, seed);
    if top > sign_tolerance(form) {
        return Ok(CheckResult::not_applicable(
            Criterion::Domination,
            "off-diagonal blocks are not nonpositive on nonnegative data",
        )
        .map_value("max_offdiag_value", top));
    }
    let diag = form.diagonal_part();
    let full_stepper = Stepper::new(form, cfg)?;
    let diag_stepper = Stepper::new(&diag, cfg)?;
    let outcomes = run_trials(trials, seed, |t, rng| {
        let f = uniform_data(form, rng, -1.0, 1.0);
        let dominated = evolve_with(&diag_stepper, &diag, &f, cfg, None)?;
        let dominating = evolve_with(&full_stepper, form, &LatticeOps::map(&f, LatticeOps::modulus), cfg, None)?;
        let mut margin = f64::INFINITY;
        let mut first = None;
        for (k, (lo, hi)) in dominated.states.iter().zip(&dominating.states).enumerate() {
            let gap = lo
                .flatten()
                .iter()
                .zip(hi.flatten().iter())
                .map(|(a, b)| b.re - a.norm())
                .fold(f64::INFINITY, f64::min);
            if gap < -RUNTIME_TOL && first.is_none() {
                first = Some(dominated.times[k]);
            }
            margin = margin.min(gap);
        }
        Ok((t, margin, first, dominating))
    })?;
    let margin = outcomes.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
    let witness = outcomes
        .into_iter()
        .find(|o| o.2.is_some())
        .map(|(t, _, first, record)| Witness { name: format!("domination_trial{t}"), record, first_violation: first });
    let pass = margin >= -RUNTIME_TOL;
    Ok(CheckResult {
        entry: CertificateEntry::new(
            Criterion::Domination,
            Verdict::from_bool(pass),
            if pass {
                format!("full semigroup dominates the diagonal one on {trials} trials")
            } else {
                "the diagonal semigroup escapes the dominating envelope".to_string()
            },
        )
        .with("margin", margin),
        witness,
    })
}

/// Runtime test of the unit ball of the nodal sup-norm. Trial 0 starts from
/// the constant one in every component; the others from random data with
/// nodal modulus at most one.
pub fn linf_contractivity_check(
    form: &FormMatrix,
    runtime: bool,
    trials: usize,
    cfg: &EvolutionConfig,
    seed: u64,
) -> Result<CheckResult> {
    if !runtime {
        return Ok(CheckResult::not_applicable(
            Criterion::LinfContractivity,
            "only the runtime test is implemented",
        ));
    }
    let accretive = accretivity_margin(form)? >= 0.0;
    let stepper = Stepper::new(form, cfg)?;
    let records = run_trials(trials.max(1), seed, |t, rng| {
        let u0 = if t == 0 {
            LatticeOps::map(&BlockVector::zeros(form), |_| 1.0)
        } else {
            LatticeOps::map(&uniform_data(form, rng, -1.5, 1.5), LatticeOps::truncate)
        };
        evolve_with(&stepper, form, &u0, cfg, None)
    })?;
    let max_sup = records
        .iter()
        .flat_map(|r| r.sup_norm.iter().copied())
        .fold(0.0, f64::max);
    let witness = records.into_iter().enumerate().find_map(|(t, rec)| {
        let first = first_time(&rec, |k| rec.sup_norm[k] > 1.0 + RUNTIME_TOL)?;
        Some(Witness {
            name: if t == 0 { "linf_constant_one".to_string() } else { format!("linf_trial{t}") },
            record: rec,
            first_violation: Some(first),
        })
    });
    let pass = witness.is_none();
    let mut entry = CertificateEntry::new(
        Criterion::LinfContractivity,
        Verdict::from_bool(pass),
        match (&witness, accretive) {
            (None, _) => format!("nodal sup-norm stays <= 1 on {} trials", trials.max(1)),
            (Some(w), true) => format!("runtime falsification: {} leaves the unit ball", w.name),
            (Some(w), false) => format!(
                "runtime falsification on a non-accretive form: {} leaves the unit ball",
                w.name
            ),
        },
    )
    .with("max_sup_norm", max_sup)
    .with("accretive", if accretive { 1.0 } else { 0.0 });
    if let Some(t) = witness.as_ref().and_then(|w| w.first_violation) {
        entry = entry.with("first_violation_t", t);
    }
    Ok(CheckResult { entry, witness })
}

#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub alpha: f64,
    pub verdict: Verdict,
    /// Largest `observable(t) - alpha` over all trials and times.
    pub worst_excess: f64,
    /// Largest `observable(t) - observable(0)`.
    pub max_growth: f64,
}

#[derive(Debug, Clone)]
pub struct StripRuntimeOutcome {
    pub levels: Vec<LevelOutcome>,
    /// Identical verdicts across all levels `alpha > 0`.
    pub scaling_consistent: bool,
    pub summary: CheckResult,
}

/// Data at distance exactly `alpha` from the range of `P` (`StripC`) or with
/// `||Pu|| = alpha` (`StripB`).
///
/// The measured part is constant in space along a random direction of the
/// relevant eigenspace of `K`; the other part is random nodal data of norm
/// `STRIP_DATA_WEIGHT * alpha`. `alpha = 0` keeps only the other part, at
/// norm `STRIP_DATA_WEIGHT`.
fn strip_data(
    form: &FormMatrix,
    proj: &ProjectionSpec,
    direction: StripDirection,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> BlockVector {
    let n = form.space(0).dim();
    let normalised = |v: BlockVector| {
        let norm = form.h_norm(&v);
        if norm > 0.0 {
            v.scale(c(1.0 / norm))
        } else {
            v
        }
    };
    let (measured_vecs, other_vecs) = match direction {
        StripDirection::StripC => (proj.eig0(), proj.eig1()),
        StripDirection::StripB => (proj.eig1(), proj.eig0()),
    };
    let m = proj.m();
    let mut direction_in_cm = CVec::zeros(m);
    for v in measured_vecs {
        direction_in_cm += v * c(rng.random_range(-1.0..=1.0));
    }
    let measured = normalised(BlockVector::new(
        (0..m).map(|i| CVec::from_element(n, direction_in_cm[i])).collect(),
    ));
    let other_basis = kron_identity(&ProjectionSpec::basis(other_vecs, m), n);
    let other = if other_basis.ncols() == 0 {
        BlockVector::zeros(form)
    } else {
        let coeff = CVec::from_fn(other_basis.ncols(), |_, _| c(rng.random_range(-1.0..=1.0)));
        normalised(BlockVector::split(form, &(other_basis * coeff)))
    };
    if alpha > 0.0 {
        add(&measured.scale(c(alpha)), &other.scale(c(alpha * STRIP_DATA_WEIGHT)))
    } else {
        other.scale(c(STRIP_DATA_WEIGHT))
    }
}

fn add(a: &BlockVector, b: &BlockVector) -> BlockVector {
    BlockVector::new(a.parts.iter().zip(&b.parts).map(|(x, y)| x + y).collect())
}

/// Strip (or ball) invariance along trajectories started on the boundary of
/// the set at each level in `alpha_levels`.
pub fn strip_invariance_runtime(
    form: &FormMatrix,
    proj: &ProjectionSpec,
    direction: StripDirection,
    alpha_levels: &[f64],
    cfg: &EvolutionConfig,
    trials: usize,
    seed: u64,
) -> Result<StripRuntimeOutcome> {
    if alpha_levels.is_empty() || alpha_levels.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::Validation("alpha levels must be a nonempty list of finite values >= 0".into()));
    }
    if proj.m() != form.m() {
        return Err(Error::Dimension(format!("projection is {0}x{0}, form has {1} components", proj.m(), form.m())));
    }
    if !form.identical_spaces() {
        return Err(Error::Validation("strip runs need identical factor spaces".into()));
    }
    if accretivity_margin(form)? < 0.0 {
        return Ok(StripRuntimeOutcome {
            levels: Vec::new(),
            scaling_consistent: true,
            summary: CheckResult::not_applicable(Criterion::StripRuntime, "form is not accretive"),
        });
    }
    let stepper = Stepper::new(form, cfg)?;
    let trials = trials.max(1);
    let mut levels = Vec::with_capacity(alpha_levels.len());
    let mut witness = None;
    for (level, &alpha) in alpha_levels.iter().enumerate() {
        // one stream per trial, shared across levels so data differ only by scale
        let runs = run_trials(trials, seed, |t, rng| {
            let u0 = strip_data(form, proj, direction, alpha, rng);
            let rec = evolve_with(&stepper, form, &u0, cfg, Some(proj))?;
            Ok((t, rec))
        })?;
        let mut worst_excess = f64::NEG_INFINITY;
        let mut max_growth = f64::NEG_INFINITY;
        let mut worst_trial = None;
        for (t, rec) in runs {
            let obs = match direction {
                StripDirection::StripC => rec.strip_distance.as_ref().unwrap(),
                StripDirection::StripB => rec.projection_norm.as_ref().unwrap(),
            };
            let peak = obs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max_growth = max_growth.max(peak - obs[0]);
            if peak - alpha > worst_excess {
                worst_excess = peak - alpha;
                worst_trial = Some((t, rec));
            }
        }
        let verdict = Verdict::from_bool(worst_excess <= RUNTIME_TOL);
        if verdict == Verdict::Fail && witness.is_none() {
            if let Some((t, rec)) = worst_trial {
                let obs = match direction {
                    StripDirection::StripC => rec.strip_distance.clone().unwrap(),
                    StripDirection::StripB => rec.projection_norm.clone().unwrap(),
                };
                witness = Some(Witness {
                    name: format!("strip_level{level}_trial{t}"),
                    first_violation: first_time(&rec, |k| obs[k] > alpha + RUNTIME_TOL),
                    record: rec,
                });
            }
        }
        levels.push(LevelOutcome { alpha, verdict, worst_excess, max_growth });
    }
    let positive: Vec<Verdict> = levels.iter().filter(|l| l.alpha > 0.0).map(|l| l.verdict).collect();
    let scaling_consistent = positive.windows(2).all(|w| w[0] == w[1]);
    let all_pass = levels.iter().all(|l| l.verdict == Verdict::Pass);
    let pass = all_pass && scaling_consistent;
    let mut entry = CertificateEntry::new(
        Criterion::StripRuntime,
        Verdict::from_bool(pass),
        match (all_pass, scaling_consistent) {
            (true, _) => format!("{} levels x {trials} trials stay inside their sets", levels.len()),
            (false, true) => "trajectories leave the set; verdict identical across positive levels".to_string(),
            (false, false) => "trajectories leave the set; verdicts differ across positive levels".to_string(),
        },
    );
    for (k, l) in levels.iter().enumerate() {
        entry = entry.with(format!("alpha_{k}"), l.alpha).with(format!("excess_{k}"), l.worst_excess);
    }
    entry = entry.with("scaling_consistent", if scaling_consistent { 1.0 } else { 0.0 });
    Ok(StripRuntimeOutcome { levels, scaling_consistent, summary: CheckResult { entry, witness } })
}

/// Discrete generator block `(i, j)` against `-h_i^{-1} S_ij` from a
/// per-space Cholesky solve.
pub fn identification_check(form: &FormMatrix) -> Result<CheckResult> {
    let op = associated_operator(form)?;
    let offsets = form.offsets();
    let mut worst: f64 = 0.0;
    for i in 0..form.m() {
        let chol = cholesky(form.space(i).h_gram(), "H-Gram")?;
        for j in 0..form.m() {
            let expected = -chol.solve(form.block(i, j));
            let got = op.view((offsets[i], offsets[j]), expected.shape()).into_owned();
            let err = max_abs(&(got - &expected));
            let size = max_abs(&expected);
            worst = worst.max(if size > 0.0 { err / size } else { err });
        }
    }
    let pass = worst <= IDENTIFICATION_TOL;
    Ok(CheckResult::new(
        CertificateEntry::new(
            Criterion::Identification,
            Verdict::from_bool(pass),
            "generator blocks against per-space solves",
        )
        .with("max_relative_error", worst),
    ))
}

/// Sector membership of sampled numerical-range values. Missing constants
/// are estimated: `alpha` from the discrete coercivity with the given
/// `omega`, `c` from the V-whitened spectral norm of the form.
pub fn sector_criterion(
    form: &FormMatrix,
    alpha: Option<f64>,
    omega: f64,
    c_bound: Option<f64>,
    samples: usize,
    seed: u64,
) -> Result<CheckResult> {
    let alpha = match alpha {
        Some(a) => a,
        None => crate::forms::estimate_form_ellipticity(form, omega)?,
    };
    if alpha.is_nan() || alpha <= 0.0 {
        return Ok(CheckResult::not_applicable(Criterion::Sector, "no positive ellipticity constant").map_value("alpha", alpha));
    }
    let c_bound = match c_bound {
        Some(v) => v,
        None => {
            let l = cholesky(&form.v_matrix(), "V-Gram")?.l();
            spectral_norm(&linalg::whiten(&form.full_matrix(), &l, &l)?)
        }
    };
    let sampled = numerical_range_samples(form, samples, seed);
    let res = sector_check(&sampled, alpha, omega, c_bound);
    Ok(CheckResult::new(
        CertificateEntry::new(Criterion::Sector, Verdict::from_bool(res.pass), format!("{samples} samples"))
            .with("alpha", alpha)
            .with("omega", omega)
            .with("c", c_bound)
            .with("worst_margin", finite_or_zero(res.worst_margin)),
    ))
}

/// Parabola membership with the given constant, or the builder's.
pub fn parabola_criterion(form: &FormMatrix, m_tilde: Option<f64>, samples: usize, seed: u64) -> CheckResult {
    let Some(m_tilde) = m_tilde.or(form.metadata().parabola_constant) else {
        return CheckResult::not_applicable(Criterion::Parabola, "no parabola constant known for this model");
    };
    let sampled = numerical_range_samples(form, samples, seed);
    let res = parabola_check(&sampled, m_tilde);
    CheckResult::new(
        CertificateEntry::new(Criterion::Parabola, Verdict::from_bool(res.pass), format!("{samples} samples"))
            .with("m_tilde", m_tilde)
            .with("worst_margin", finite_or_zero(res.worst_margin)),
    )
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_damped_wave, build_dynamic_bc_heat, build_ephaptic, CouplingPattern, Grid1D};
    use crate::linalg::{RMat, C64};
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n, 1.0).unwrap()
    }

    fn ephaptic(n: usize, a: &[f64]) -> FormMatrix {
        let m = (a.len() as f64).sqrt() as usize;
        let field = CoefficientField::constant(n, &RMat::from_row_slice(m, m, a)).unwrap();
        build_ephaptic(&grid(n), &field).unwrap()
    }

    #[test]
    fn averaging_projection_split() {
        let p = averaging_projection(2).unwrap();
        assert_eq!(p.rank(), 1);
        let v = &p.eig1()[0];
        assert_abs_diff_eq!((v[0] - v[1]).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
        let w = &p.eig0()[0];
        assert_abs_diff_eq!((w[0] + w[1]).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(averaging_projection(1).unwrap().matrix()[(0, 0)], c(1.0));
        assert_eq!(averaging_projection(3).unwrap().rank(), 1);
    }

    #[test]
    fn identity_and_non_hermitian() {
        let id = make_projection(CMat::identity(3, 3)).unwrap();
        assert_eq!(id.rank(), 3);
        assert!(id.eig0().is_empty());
        let bad = CMat::from_row_slice(2, 2, &[c(1.0), c(1.0), c(0.0), c(0.0)]);
        assert!(matches!(make_projection(bad), Err(Error::Validation(_))));
    }

    #[test]
    fn lattice_identities() {
        for x in [-2.5, -1.0, -0.3, 0.0, 0.7, 1.0, 3.0] {
            assert_eq!(LatticeOps::truncate(x) + LatticeOps::excess(x), x);
            assert!(LatticeOps::truncate(x).abs() <= 1.0);
            assert_eq!(LatticeOps::positive_part(x) - LatticeOps::positive_part(-x), x);
        }
    }

    #[test]
    fn decoupled_identical_blocks_pass_strips() {
        let form = ephaptic(8, &[1.0, 0.0, 0.0, 1.0]);
        let p = averaging_projection(2).unwrap();
        for d in [StripDirection::StripC, StripDirection::StripB] {
            let r = subspace_invariance_check(&form, &p, d).unwrap();
            assert_eq!(r.verdict(), Verdict::Pass);
            assert_abs_diff_eq!(r.value("residual").unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unequal_row_sums_fail() {
        let form = ephaptic(8, &[1.0, 0.0, 0.0, 2.0]);
        let p = averaging_projection(2).unwrap();
        let r = subspace_invariance_check(&form, &p, StripDirection::StripC).unwrap();
        assert_eq!(r.verdict(), Verdict::Fail);
        assert!(r.value("residual").unwrap() > 0.0);
    }

    #[test]
    fn damped_wave_strip_not_applicable_and_mean_zero_product_passes() {
        let form = build_damped_wave(&grid(10), c(1.0)).unwrap();
        let p = averaging_projection(2).unwrap();
        let r = subspace_invariance_check(&form, &p, StripDirection::StripC).unwrap();
        assert_eq!(r.verdict(), Verdict::NotApplicable);
        let ps: Vec<CMat> = form.spaces().iter().map(mean_zero_projection).collect();
        assert_eq!(product_subspace_check(&form, &ps).unwrap().verdict(), Verdict::Pass);
    }

    #[test]
    fn product_identity_passes_random_span_fails() {
        let form = ephaptic(6, &[2.0, -0.5, -0.3, 1.0]);
        let ids: Vec<CMat> = form.spaces().iter().map(|s| CMat::identity(s.dim(), s.dim())).collect();
        assert_eq!(product_subspace_check(&form, &ids).unwrap().verdict(), Verdict::Pass);
        let mut ps = ids.clone();
        ps[0] = random_span_projection(form.space(0), 3);
        assert_eq!(product_subspace_check(&form, &ps).unwrap().verdict(), Verdict::Fail);
    }

    #[test]
    fn subsystem_examples() {
        let lower_zero = ephaptic(6, &[1.0, 0.2, 0.1, 0.2, 1.0, 0.1, 0.0, 0.0, 1.0]);
        assert_eq!(subsystem_invariance_check(&lower_zero, 2).unwrap().verdict(), Verdict::Pass);
        let c31 = ephaptic(6, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.3, 0.0, 1.0]);
        assert_eq!(subsystem_invariance_check(&c31, 2).unwrap().verdict(), Verdict::Fail);
        let only_c12 = ephaptic(6, &[1.0, 0.4, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(subsystem_invariance_check(&only_c12, 2).unwrap().verdict(), Verdict::Pass);
        assert!(subsystem_invariance_check(&only_c12, 1).is_err());
        assert!(subsystem_invariance_check(&only_c12, 3).is_err());
    }

    #[test]
    fn sums_examples() {
        let g = grid(5);
        for p in [
            CouplingPattern::MinusCoupling { diffusion: 2.0, coupling: 0.5 },
            CouplingPattern::Uniform { value: 1.0 },
        ] {
            let f = p.field(&g).unwrap();
            assert_eq!(ephaptic_sum_check(&f, SumKind::Rows).verdict(), Verdict::Pass);
            assert_eq!(ephaptic_sum_check(&f, SumKind::Columns).verdict(), Verdict::Pass);
        }
        let f = CoefficientField::constant(5, &RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        let r = ephaptic_sum_check(&f, SumKind::Rows);
        assert_eq!(r.verdict(), Verdict::Fail);
        assert_abs_diff_eq!(r.value("max_spread").unwrap(), 1.0);
    }

    #[test]
    fn realness_examples() {
        assert_eq!(realness_check(&build_damped_wave(&grid(6), c(1.0)).unwrap()).verdict(), Verdict::Pass);
        assert_eq!(
            realness_check(&build_damped_wave(&grid(6), C64::new(0.0, 1.0)).unwrap()).verdict(),
            Verdict::Fail
        );
        assert_eq!(realness_check(&ephaptic(4, &[0.0])).verdict(), Verdict::Pass);
    }

    #[test]
    fn positive_coupling_fails_algebraic_positivity() {
        let form = ephaptic(8, &[1.0, 0.3, 0.3, 1.0]);
        let cfg = EvolutionConfig::implicit_euler(0.01, 0.05).unwrap();
        assert_eq!(positivity_check(&form, false, 5, &cfg, 0).unwrap().verdict(), Verdict::Fail);
        assert_eq!(domination_check(&form, 5, &cfg, 0).unwrap().verdict(), Verdict::NotApplicable);
    }

    #[test]
    fn zero_form_linf_passes() {
        let form = ephaptic(6, &[0.0]);
        let cfg = EvolutionConfig::implicit_euler(0.1, 0.5).unwrap();
        let r = linf_contractivity_check(&form, true, 4, &cfg, 1).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass);
        assert!(r.witness.is_none());
    }

    #[test]
    fn dynamic_bc_constant_one_leaves_unit_ball() {
        let form = build_dynamic_bc_heat(&grid(16)).unwrap();
        let cfg = EvolutionConfig::implicit_euler(0.01, 0.05).unwrap();
        let r = linf_contractivity_check(&form, true, 3, &cfg, 0).unwrap();
        assert_eq!(r.verdict(), Verdict::Fail);
        let w = r.witness.unwrap();
        assert_eq!(w.name, "linf_constant_one");
        assert_abs_diff_eq!(w.first_violation.unwrap(), 0.01, epsilon = 1e-12);
    }

    #[test]
    fn identification_holds_on_small_models() {
        for form in [
            ephaptic(8, &[2.0, -0.5, -0.5, 2.0]),
            build_damped_wave(&grid(8), c(0.7)).unwrap(),
            build_dynamic_bc_heat(&grid(8)).unwrap(),
        ] {
            assert_eq!(identification_check(&form).unwrap().verdict(), Verdict::Pass);
        }
    }
}
