//! Backward Euler time marching with a Newton solve per step.
//!
//! Each step solves the implicit balance of the L2 time-difference term,
//! the fourth-order interface term and the nonlinear gradient term, using
//! full Newton steps and the relative l2 residual as the stopping
//! criterion. The initial guess is the previous time level.

use nalgebra::Point2;
use thiserror::Error;

use crate::assembly::{CsrMatrix, SystemAssembler};
use crate::linsolve::{LinSolveError, LinearSolver};

/// Newton controls; the residual tolerance is relative to the first
/// residual of the step.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Absolute residual floor: residuals at roundoff level (steady
    /// states) count as converged even though the relative criterion can
    /// no longer be met.
    pub abs_tol: f64,
    /// Contraction factor per iteration below which a lagged linearization
    /// is considered stale and refreshed.
    pub stale_contraction: f64,
    /// Backtracking line search (up to 8 halvings); off by default, useful
    /// for rough initial data.
    pub line_search: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 25,
            abs_tol: 1e-12,
            stale_contraction: 0.15,
            line_search: false,
        }
    }
}

/// Outcome of one Newton solve.
#[derive(Debug, Clone, Copy)]
pub struct NewtonReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(
        "Newton stalled after {} iterations (relative residual {:.3e})",
        report.iterations,
        report.relative_residual
    )]
    NewtonDiverged { report: NewtonReport },
    #[error("linear solver: {0}")]
    Linear(#[from] LinSolveError),
    #[error("step failed at t = {time}: {source}")]
    Step {
        time: f64,
        #[source]
        source: Box<SolveError>,
    },
}

/// A square nonlinear system `F(u) = 0` with a solvable linearization.
pub trait NonlinearSystem {
    fn dim(&self) -> usize;
    fn residual(&mut self, u: &[f64], out: &mut [f64]);
    /// Overwrites `rhs` with `J^{-1} rhs`; `J` is the Jacobian at `u`, or a
    /// lagged one for systems that reuse factorizations.
    fn solve_linearized(&mut self, u: &[f64], rhs: &mut [f64]) -> Result<(), LinSolveError>;
    /// Asks a lagging system to rebuild its linearization at `u`; systems
    /// that already relinearize every call ignore it.
    fn refresh_linearization(&mut self, _u: &[f64]) -> Result<(), LinSolveError> {
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Full-Newton iteration on `F(u) = 0`, stopping at
/// `||F|| / ||F_0|| <= tol` (or immediately when `||F_0|| = 0`).
pub fn newton_solve<S: NonlinearSystem>(
    system: &mut S,
    u: &mut [f64],
    opts: &NewtonOptions,
) -> Result<NewtonReport, SolveError> {
    let n = system.dim();
    let mut f = vec![0.0; n];
    system.residual(u, &mut f);
    let f0 = norm(&f);
    if f0 <= opts.abs_tol {
        return Ok(NewtonReport {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let mut fnorm = f0;
    for it in 1..=opts.max_iter {
        let mut step = f.clone();
        for s in step.iter_mut() {
            *s = -*s;
        }
        system.solve_linearized(u, &mut step)?;
        let prev_fnorm = fnorm;

        if opts.line_search {
            let mut scale = 1.0;
            let mut trial = vec![0.0; n];
            for _ in 0..=8 {
                for i in 0..n {
                    trial[i] = u[i] + scale * step[i];
                }
                system.residual(&trial, &mut f);
                if norm(&f) < fnorm || scale <= 1.0 / 256.0 {
                    break;
                }
                scale *= 0.5;
            }
            u.copy_from_slice(&trial);
        } else {
            for i in 0..n {
                u[i] += step[i];
            }
            system.residual(u, &mut f);
        }
        fnorm = norm(&f);
        let rel = fnorm / f0;
        if rel <= opts.tol || fnorm <= opts.abs_tol {
            return Ok(NewtonReport {
                iterations: it,
                relative_residual: rel,
                converged: true,
            });
        }
        // slow contraction means the linearization is stale: exact-Newton
        // systems ignore this, lagging ones refactor
        if fnorm > opts.stale_contraction * prev_fnorm {
            system.refresh_linearization(u)?;
        }
    }
    Err(SolveError::NewtonDiverged {
        report: NewtonReport {
            iterations: opts.max_iter,
            relative_residual: fnorm / f0,
            converged: false,
        },
    })
}

/// Discrete state at one time level, with scalar diagnostics.
#[derive(Debug, Clone)]
pub struct State {
    pub u: Vec<f64>,
    pub time: f64,
    /// Element sum of the projected solution integral.
    pub mass: f64,
    /// Double-well plus interface energy.
    pub energy: f64,
}

impl State {
    pub fn new(u: Vec<f64>, time: f64, assembler: &SystemAssembler, gamma: f64) -> Self {
        let mass = assembler.discrete_mass(&u);
        let energy = assembler.discrete_energy(&u, gamma);
        Self {
            u,
            time,
            mass,
            energy,
        }
    }
}

/// Step observer invoked by [`TimeStepper::run`].
pub trait Observer {
    fn on_initial(&mut self, _state: &State) {}
    fn on_step(&mut self, _step: usize, _state: &State, _report: &NewtonReport) {}
}

/// No-op observer.
pub struct NoObserver;
impl Observer for NoObserver {}

/// Time-dependent scalar field used as a forcing term.
pub type Forcing = Box<dyn Fn(Point2<f64>, f64) -> f64 + Sync>;

/// Backward Euler driver owning the linear solver and scratch matrices.
pub struct TimeStepper<'a> {
    pub assembler: &'a SystemAssembler,
    pub gamma: f64,
    pub dt: f64,
    pub newton: NewtonOptions,
    /// Number of times a failing step may be bisected (0 keeps the grid
    /// strictly uniform and turns failures into errors).
    pub max_bisections: usize,
    /// Reuse the factorized Jacobian across iterations and steps,
    /// refactoring only when the Newton contraction degrades. Off by
    /// default (every iteration uses the exact Jacobian).
    pub reuse_jacobian: bool,
    solver: Box<dyn LinearSolver>,
    forcing: Option<Forcing>,
    jacobian: CsrMatrix,
    /// Lagged-mode bookkeeping: whether a factorization exists and the dt
    /// it was built with.
    factored_dt: Option<f64>,
    /// Number of Jacobian factorizations performed so far.
    pub factorizations: usize,
}

struct ImplicitStep<'s, 'a> {
    assembler: &'a SystemAssembler,
    dt: f64,
    gamma: f64,
    u_prev: &'s [f64],
    load: Option<&'s [f64]>,
    jacobian: &'s mut CsrMatrix,
    solver: &'s mut dyn LinearSolver,
    /// `None`: relinearize on every solve. `Some(flag)`: lagged mode,
    /// refactoring only when the flag is raised.
    lagged: Option<&'s mut bool>,
    factorizations: &'s mut usize,
}

impl ImplicitStep<'_, '_> {
    fn refactor(&mut self, u: &[f64]) -> Result<(), LinSolveError> {
        self.assembler.jacobian(u, self.dt, self.gamma, self.jacobian);
        *self.factorizations += 1;
        self.solver.prepare(self.jacobian)
    }
}

impl NonlinearSystem for ImplicitStep<'_, '_> {
    fn dim(&self) -> usize {
        self.assembler.n_dofs()
    }

    fn residual(&mut self, u: &[f64], out: &mut [f64]) {
        self.assembler
            .residual(u, self.u_prev, self.dt, self.gamma, self.load, out);
    }

    fn solve_linearized(&mut self, u: &[f64], rhs: &mut [f64]) -> Result<(), LinSolveError> {
        match &mut self.lagged {
            None => self.refactor(u)?,
            Some(stale) => {
                if **stale {
                    self.refactor(u)?;
                    **self.lagged.as_mut().unwrap() = false;
                }
            }
        }
        self.solver.solve(self.jacobian, rhs)
    }

    fn refresh_linearization(&mut self, u: &[f64]) -> Result<(), LinSolveError> {
        if self.lagged.is_some() {
            self.refactor(u)?;
        }
        Ok(())
    }
}

impl<'a> TimeStepper<'a> {
    pub fn new(
        assembler: &'a SystemAssembler,
        gamma: f64,
        dt: f64,
        newton: NewtonOptions,
        solver: Box<dyn LinearSolver>,
    ) -> Self {
        let jacobian = assembler.jacobian_template();
        Self {
            assembler,
            gamma,
            dt,
            newton,
            max_bisections: 0,
            reuse_jacobian: false,
            solver,
            forcing: None,
            jacobian,
            factored_dt: None,
            factorizations: 0,
        }
    }

    pub fn with_forcing(mut self, f: Forcing) -> Self {
        self.forcing = Some(f);
        self
    }

    /// Advances one step of size `dt` from `state`.
    pub fn step(&mut self, state: &State) -> Result<(State, NewtonReport), SolveError> {
        self.advance(state, self.dt, self.max_bisections)
    }

    fn advance(
        &mut self,
        state: &State,
        dt: f64,
        bisections_left: usize,
    ) -> Result<(State, NewtonReport), SolveError> {
        let t_new = state.time + dt;
        let load = self.forcing.as_ref().map(|f| {
            let mut l = vec![0.0; self.assembler.n_dofs()];
            self.assembler.assemble_load(|p| f(p, t_new), &mut l);
            l
        });
        let mut attempt = |stale_init: bool| -> Result<(Vec<f64>, NewtonReport), SolveError> {
            let mut u = state.u.clone();
            let mut stale = stale_init;
            let mut sys = ImplicitStep {
                assembler: self.assembler,
                dt,
                gamma: self.gamma,
                u_prev: &state.u,
                load: load.as_deref(),
                jacobian: &mut self.jacobian,
                solver: self.solver.as_mut(),
                lagged: self.reuse_jacobian.then_some(&mut stale),
            };
            newton_solve(&mut sys, &mut u, &self.newton.clone()).map(|r| (u, r))
        };
        // a factorization from an earlier step is reusable only at the
        // same step size
        let stale = self.factored_dt != Some(dt);
        let mut outcome = attempt(stale);
        if outcome.is_err() && self.reuse_jacobian && !stale {
            // retry once from a fresh linearization before bisecting
            outcome = attempt(true);
        }
        if self.reuse_jacobian && outcome.is_ok() {
            self.factored_dt = Some(dt);
        }
        match outcome {
            Ok((mut u, report)) => {
                self.assembler.enforce_constraints(&mut u);
                Ok((
                    State::new(u, t_new, self.assembler, self.gamma),
                    report,
                ))
            }
            Err(err) if bisections_left > 0 => {
                let (half, _) = self.advance(state, 0.5 * dt, bisections_left - 1)?;
                let (full, report) = self.advance(&half, 0.5 * dt, bisections_left - 1)?;
                let _ = err;
                Ok((full, report))
            }
            Err(err) => Err(SolveError::Step {
                time: t_new,
                source: Box::new(err),
            }),
        }
    }

    /// Marches `n_steps` uniform steps, reporting each new state to the
    /// observer; returns the final state.
    pub fn run(
        &mut self,
        initial: State,
        n_steps: usize,
        observer: &mut dyn Observer,
    ) -> Result<State, SolveError> {
        observer.on_initial(&initial);
        let mut state = initial;
        for step in 1..=n_steps {
            let (next, report) = self.step(&state)?;
            observer.on_step(step, &next, &report);
            state = next;
        }
        Ok(state)
    }
}
