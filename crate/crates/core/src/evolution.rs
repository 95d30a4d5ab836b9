//! Implicit time stepping of `Mass u' = -S u`.

use nalgebra::{Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{BlockVector, FormMatrix};
use crate::linalg::{CMat, CVec, C64};
use crate::qualitative::ProjectionSpec;

/// Pivots smaller than this fraction of the largest one count as singular.
const PIVOT_RATIO: f64 = 1e-14;
const MAX_REFINEMENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ImplicitEuler,
    CrankNicolson,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ImplicitEuler => "implicit-euler",
            Scheme::CrankNicolson => "crank-nicolson",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    /// Relative residual accepted from each linear solve.
    pub tolerance: f64,
}

impl EvolutionConfig {
    pub fn new(scheme: Scheme, dt: f64, t_end: f64, record_every: usize, tolerance: f64) -> Result<Self> {
        let cfg = Self { scheme, dt, t_end, record_every, tolerance };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn implicit_euler(dt: f64, t_end: f64) -> Result<Self> {
        Self::new(Scheme::ImplicitEuler, dt, t_end, 1, 1e-10)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Validation(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.dt > self.t_end {
            return Err(Error::Validation(format!("dt = {} exceeds t_end = {}", self.dt, self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::Validation("record_every must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-6) {
            return Err(Error::Validation(format!(
                "solver tolerance must lie in (0, 1e-6], got {}",
                self.tolerance
            )));
        }
        Ok(())
    }

    /// `ceil(t_end / dt)`, ignoring round-off just above an integer.
    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// One factorised time step, reusable across steps and trajectories.
pub struct Stepper {
    scheme: Scheme,
    dt: f64,
    tolerance: f64,
    lhs: CMat,
    rhs: CMat,
    lu: LU<C64, Dyn, Dyn>,
}

impl Stepper {
    pub fn new(form: &FormMatrix, cfg: &EvolutionConfig) -> Result<Self> {
        cfg.validate()?;
        let mass = form.mass_matrix();
        let s = form.full_matrix();
        let (lhs, rhs) = match cfg.scheme {
            Scheme::ImplicitEuler => (&mass + s.scale(cfg.dt), mass),
            Scheme::CrankNicolson => {
                let half = s.scale(0.5 * cfg.dt);
                (&mass + &half, &mass - &half)
            }
        };
        let lu = LU::new(lhs.clone());
        let pivots = lu.u().diagonal().map(|z| z.norm());
        let largest = pivots.max();
        let smallest = pivots.min();
        if smallest.is_nan() || smallest <= PIVOT_RATIO * largest {
            return Err(Error::Solver {
                scheme: cfg.scheme.name(),
                dt: cfg.dt,
                step: 0,
                reason: format!("singular system matrix (pivot ratio {:e})", smallest / largest),
            });
        }
        Ok(Self { scheme: cfg.scheme, dt: cfg.dt, tolerance: cfg.tolerance, lhs, rhs, lu })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance a flat coordinate vector by one step. `step` only labels errors.
    pub fn advance(&self, u: &CVec, step: usize) -> Result<CVec> {
        let fail = |reason: String| Error::Solver { scheme: self.scheme.name(), dt: self.dt, step, reason };
        let b = &self.rhs * u;
        let mut x = self.lu.solve(&b).ok_or_else(|| fail("LU solve failed".into()))?;
        let b_norm = b.norm();
        for _ in 0..=MAX_REFINEMENTS {
            let r = &b - &self.lhs * &x;
            let r_norm = r.norm();
            if !r_norm.is_finite() {
                return Err(fail("non-finite residual".into()));
            }
            if r_norm <= self.tolerance * b_norm {
                return Ok(x);
            }
            let dx = self.lu.solve(&r).ok_or_else(|| fail("LU solve failed".into()))?;
            x += dx;
        }
        let r_norm = (&b - &self.lhs * &x).norm();
        if r_norm <= self.tolerance * b_norm {
            Ok(x)
        } else {
            Err(fail(format!("relative residual {:e} above tolerance", r_norm / b_norm)))
        }
    }
}

/// One step of the configured scheme.
pub fn step(form: &FormMatrix, u: &BlockVector, cfg: &EvolutionConfig) -> Result<BlockVector> {
    u.check_layout(form, "state")?;
    let stepper = Stepper::new(form, cfg)?;
    Ok(BlockVector::split(form, &stepper.advance(&u.flatten(), 1)?))
}

/// `sqrt(sum_i u_i^H h_i u_i)`.
pub fn h_norm(form: &FormMatrix, u: &BlockVector) -> Result<f64> {
    u.check_layout(form, "state")?;
    Ok(form.h_norm(u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<BlockVector>,
    pub h_norm: Vec<f64>,
    /// `comp_norms[k][i]` is the H-norm of component `i` at record `k`.
    pub comp_norms: Vec<Vec<f64>>,
    pub strip_distance: Option<Vec<f64>>,
    pub projection_norm: Option<Vec<f64>>,
    /// Smallest real part over all nodal values.
    pub min_value: Vec<f64>,
    /// Largest nodal modulus.
    pub sup_norm: Vec<f64>,
}

impl TrajectoryRecord {
    fn new(projected: bool) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            h_norm: Vec::new(),
            comp_norms: Vec::new(),
            strip_distance: projected.then(Vec::new),
            projection_norm: projected.then(Vec::new),
            min_value: Vec::new(),
            sup_norm: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&BlockVector> {
        self.states.last()
    }

    fn push(&mut self, form: &FormMatrix, lifted: Option<&CMat>, t: f64, u: BlockVector) -> Result<()> {
        if !u.is_finite() {
            return Err(Error::Numerical(format!("state became non-finite at t = {t}")));
        }
        let comps: Vec<f64> = u
            .parts
            .iter()
            .zip(form.spaces())
            .map(|(p, s)| s.h_norm(p))
            .collect();
        self.h_norm.push(comps.iter().map(|x| x * x).sum::<f64>().sqrt());
        self.comp_norms.push(comps);
        if let Some(p) = lifted {
            let flat = u.flatten();
            let pu = BlockVector::split(form, &(p * &flat));
            let rest = BlockVector::split(form, &(&flat - p * &flat));
            self.projection_norm.as_mut().unwrap().push(form.h_norm(&pu));
            self.strip_distance.as_mut().unwrap().push(form.h_norm(&rest));
        }
        self.min_value.push(u.real_values().fold(f64::INFINITY, f64::min));
        self.sup_norm.push(
            u.parts
                .iter()
                .flat_map(|p| p.iter().map(|z| z.norm()))
                .fold(0.0, f64::max),
        );
        self.times.push(t);
        self.states.push(u);
        Ok(())
    }

    /// One row per recorded time. Observables without data are left empty.
    pub fn to_csv(&self, m: usize) -> String {
        let mut out = String::from("t,h_norm");
        for i in 1..=m {
            out.push_str(&format!(",comp_norm_{i}"));
        }
        out.push_str(",strip_distance,projection_norm,min_value,sup_norm\n");
        let opt = |v: &Option<Vec<f64>>, k: usize| v.as_ref().map(|v| crate::fmt_f64(v[k])).unwrap_or_default();
        for k in 0..self.len() {
            let mut row = vec![crate::fmt_f64(self.times[k]), crate::fmt_f64(self.h_norm[k])];
            row.extend((0..m).map(|i| self.comp_norms[k].get(i).map(|&x| crate::fmt_f64(x)).unwrap_or_default()));
            row.push(opt(&self.strip_distance, k));
            row.push(opt(&self.projection_norm, k));
            row.push(crate::fmt_f64(self.min_value[k]));
            row.push(crate::fmt_f64(self.sup_norm[k]));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn lifted_projection(form: &FormMatrix, proj: Option<&ProjectionSpec>) -> Result<Option<CMat>> {
    let Some(proj) = proj else { return Ok(None) };
    if proj.m() != form.m() {
        return Err(Error::Dimension(format!("projection is {0}x{0}, form has {1} components", proj.m(), form.m())));
    }
    if !form.identical_spaces() {
        return Err(Error::Validation("a lifted projection needs identical factor spaces".into()));
    }
    Ok(Some(proj.lifted(form.space(0).dim())))
}

/// Integrate from `u0` over `[0, t_end]`, recording `t = 0`, every
/// `record_every`-th step and the last step.
pub fn evolve(
    form: &FormMatrix,
    u0: &BlockVector,
    cfg: &EvolutionConfig,
    proj: Option<&ProjectionSpec>,
) -> Result<TrajectoryRecord> {
    let stepper = Stepper::new(form, cfg)?;
    evolve_with(&stepper, form, u0, cfg, proj)
}

/// [`evolve`] with a prepared factorisation.
pub fn evolve_with(
    stepper: &Stepper,
    form: &FormMatrix,
    u0: &BlockVector,
    cfg: &EvolutionConfig,
    proj: Option<&ProjectionSpec>,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    u0.check_layout(form, "initial data")?;
    if !u0.is_finite() {
        return Err(Error::Validation("initial data must be finite".into()));
    }
    let lifted = lifted_projection(form, proj)?;
    let mut record = TrajectoryRecord::new(lifted.is_some());
    record.push(form, lifted.as_ref(), 0.0, u0.clone())?;
    let n_steps = cfg.n_steps();
    let mut u = u0.flatten();
    for k in 1..=n_steps {
        u = stepper.advance(&u, k)?;
        if k % cfg.record_every == 0 || k == n_steps {
            record.push(form, lifted.as_ref(), k as f64 * cfg.dt, BlockVector::split(form, &u))?;
        }
    }
    Ok(record)
}
