//! Time integrators for the full ε-equation
//!
//! ```text
//! i∂_tψ = ε⁻²Hψ − ½∂_z²ψ + V(z)ψ + λ|ψ|^{2σ}ψ
//! ```
//!
//! and the averaged model `i∂_tφ = −½∂_z²φ + V(z)φ + λF_av(φ)`, plus the
//! single-level reduced model `i∂_tφ = H_zφ + λP_n(|φ|^{2σ}φ)`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::BasisTables;
use crate::error::{Error, Result};
use crate::field::{energy, l2_error, sigma2_prime_norm, Field, Grid, Potential, SimParams};
use crate::nonlinearity::{spectral_leakage, GalerkinNonlinearity, ThetaQuadrature};
use crate::propagators::{landau_phase, LinearStepPlan};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Which equation a [`Stepper`] advances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    /// Strang: half exact linear step, physical-space phase flow, half linear step.
    Full,
    /// Strang: half `H_z` step, one RK4 step of `i∂_tφ = λF_av(φ)`, half `H_z` step.
    Averaged,
    /// As `Averaged` with `F_av` replaced by `P_level(|φ|^{2σ}φ)`.
    Reduced { level: usize },
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Scheme::Full => "full".into(),
            Scheme::Averaged => "averaged".into(),
            Scheme::Reduced { level } => format!("reduced-{level}"),
        }
    }
}

/// A reusable integrator bound to one discretization and parameter set.
pub struct Stepper {
    scheme: Scheme,
    params: SimParams,
    basis: Arc<BasisTables>,
    grid: Arc<Grid>,
    potential: Potential,
    nonlinear: GalerkinNonlinearity,
    plan: Option<(u64, LinearStepPlan)>,
    projection_loss: f64,
}

impl Stepper {
    pub fn new(scheme: Scheme, params: &SimParams, basis: Arc<BasisTables>, grid: Arc<Grid>) -> Result<Self> {
        params.validate(basis.spec().n_max)?;
        if let Scheme::Reduced { level } = scheme {
            if level > basis.spec().n_max {
                return Err(Error::OutOfTruncation(format!("reduced level {level}")));
            }
        }
        let potential = Potential::sample(&params.potential, &grid)?;
        if grid.is_planar() && !potential.is_zero() {
            return Err(Error::InvalidParams("planar mode requires V = 0".into()));
        }
        let quad = ThetaQuadrature::new(params.theta_nodes)?;
        let nonlinear = GalerkinNonlinearity::new(basis.clone(), grid.z_points(), params.sigma, quad);
        Ok(Self {
            scheme,
            params: params.clone(),
            basis,
            grid,
            potential,
            nonlinear,
            plan: None,
            projection_loss: 0.0,
        })
    }

    pub fn for_field(scheme: Scheme, params: &SimParams, field: &Field) -> Result<Self> {
        Self::new(scheme, params, field.basis().clone(), field.grid().clone())
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// Mass removed so far by the Galerkin projection inside the full
    /// scheme's phase flow. Zero for the other schemes.
    pub fn projection_loss(&self) -> f64 {
        self.projection_loss
    }

    fn half_plan(&mut self, dt: f64) -> &LinearStepPlan {
        let key = dt.to_bits();
        if self.plan.as_ref().map(|(k, _)| *k) != Some(key) {
            let levels = self.basis.levels();
            let plan = match self.scheme {
                Scheme::Full => {
                    LinearStepPlan::full(levels, &self.grid, &self.potential, 0.5 * dt, self.params.epsilon)
                }
                _ => LinearStepPlan::hz(levels, &self.grid, &self.potential, 0.5 * dt),
            };
            self.plan = Some((key, plan));
        }
        &self.plan.as_ref().unwrap().1
    }

    /// Advance by `dt`, returning a fresh field.
    pub fn step(&mut self, field: &Field, dt: f64) -> Result<Field> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        let mut out = field.clone();
        self.step_in_place(out.coefs_mut(), dt);
        Ok(out)
    }

    fn step_in_place(&mut self, coefs: &mut [Complex64], dt: f64) {
        let per_level = self.basis.per_level();
        let grid = self.grid.clone();
        self.half_plan(dt).apply(coefs, &grid, per_level);
        if self.params.lambda != 0.0 {
            match self.scheme {
                Scheme::Full => {
                    let loss = self.nonlinear.phase_flow(coefs, dt, self.params.lambda);
                    self.projection_loss += loss * grid.dz();
                }
                Scheme::Averaged => self.rk4(coefs, dt, None),
                Scheme::Reduced { level } => self.rk4(coefs, dt, Some(level)),
            }
        }
        self.half_plan(dt).apply(coefs, &grid, per_level);
    }

    /// One classical RK4 step of `y' = −iλ N(y)`.
    fn rk4(&self, y: &mut [Complex64], dt: f64, level: Option<usize>) {
        let minus_i_lambda = Complex64::new(0.0, -self.params.lambda);
        let rhs = |input: &[Complex64], out: &mut [Complex64]| {
            match level {
                None => self.nonlinear.averaged(input, out),
                Some(n) => self.nonlinear.projected_power(input, out, Some(n)),
            }
            out.iter_mut().for_each(|v| *v *= minus_i_lambda);
        };
        let len = y.len();
        let mut k = vec![ZERO; len];
        let mut stage = vec![ZERO; len];
        let mut acc = vec![ZERO; len];

        rhs(y, &mut k);
        for i in 0..len {
            acc[i] = k[i];
            stage[i] = y[i] + 0.5 * dt * k[i];
        }
        rhs(&stage, &mut k);
        for i in 0..len {
            acc[i] += 2.0 * k[i];
            stage[i] = y[i] + 0.5 * dt * k[i];
        }
        rhs(&stage, &mut k);
        for i in 0..len {
            acc[i] += 2.0 * k[i];
            stage[i] = y[i] + dt * k[i];
        }
        rhs(&stage, &mut k);
        for i in 0..len {
            y[i] += dt / 6.0 * (acc[i] + k[i]);
        }
    }
}

/// One step of the full ε-equation.
pub fn step_full(field: &Field, dt: f64, params: &SimParams) -> Result<Field> {
    Stepper::for_field(Scheme::Full, params, field)?.step(field, dt)
}

/// One step of the averaged model.
pub fn step_averaged(field: &Field, dt: f64, params: &SimParams) -> Result<Field> {
    Stepper::for_field(Scheme::Averaged, params, field)?.step(field, dt)
}

/// Per-sample monitors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub sigma2_prime: f64,
    pub level_masses: Vec<f64>,
    /// Mass of the power nonlinearity outside the truncation at this state.
    pub leakage: f64,
    /// Cumulative mass removed by projection in the full scheme.
    pub projection_loss: f64,
}

impl Diagnostics {
    pub fn of(field: &Field, t: f64, params: &SimParams, projection_loss: f64) -> Result<Self> {
        Ok(Self {
            t,
            mass: field.mass(),
            energy: energy(field, params)?.total(),
            sigma2_prime: sigma2_prime_norm(field),
            level_masses: field.level_masses(),
            leakage: spectral_leakage(field, params.sigma),
            projection_loss,
        })
    }
}

/// Sampled solution of one run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub diagnostics: Vec<Diagnostics>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&Field> {
        self.states.last()
    }

    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.diagnostics.first().map_or(0.0, |d| d.mass);
        self.diagnostics.iter().map(|d| (d.mass - m0).abs()).fold(0.0, f64::max)
    }

    /// `max_t |E(t) − E(0)| / |E(0)|`.
    pub fn max_relative_energy_drift(&self) -> f64 {
        let e0 = self.diagnostics.first().map_or(0.0, |d| d.energy);
        let scale = if e0 == 0.0 { 1.0 } else { e0.abs() };
        self.diagnostics.iter().map(|d| (d.energy - e0).abs() / scale).fold(0.0, f64::max)
    }

    pub fn max_sigma2_prime(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.sigma2_prime).fold(0.0, f64::max)
    }
}

/// Integrate from `0` to `t_final`, sampling at `schedule` (a strictly
/// increasing subset of `[0, t_final]`; empty means `{0, t_final}`).
///
/// Each interval between consecutive stops is covered by equal substeps no
/// longer than `dt`, so every stop is hit exactly.
pub fn evolve(initial: &Field, t_final: f64, dt: f64, stepper: &mut Stepper, schedule: &[f64]) -> Result<Trajectory> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidInput(format!("final time must be >= 0, got {t_final}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let schedule: Vec<f64> = if schedule.is_empty() {
        if t_final == 0.0 { vec![0.0] } else { vec![0.0, t_final] }
    } else {
        schedule.to_vec()
    };
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("sample schedule must be strictly increasing".into()));
    }
    if schedule.iter().any(|&t| t < 0.0 || t > t_final) {
        return Err(Error::InvalidInput("sample schedule must lie in [0, T]".into()));
    }
    if !initial.is_finite() {
        return Err(Error::NumericalAbort { t: 0.0, what: "non-finite initial data".into() });
    }

    let params = stepper.params().clone();
    let mut traj = Trajectory {
        scheme: stepper.scheme(),
        dt,
        times: Vec::new(),
        states: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut state = initial.clone();
    let mut t = 0.0;
    let mut stops = schedule.clone();
    if *stops.last().unwrap() < t_final {
        stops.push(t_final);
    }
    for &stop in &stops {
        let span = stop - t;
        if span > 0.0 {
            let n = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for i in 0..n {
                stepper.step_in_place(state.coefs_mut(), h);
                if !state.is_finite() {
                    let when = t + (i + 1) as f64 * h;
                    return Err(Error::NumericalAbort { t: when, what: "non-finite coefficients".into() });
                }
            }
            t = stop;
        }
        if schedule.contains(&stop) {
            traj.diagnostics.push(Diagnostics::of(&state, stop, &params, stepper.projection_loss())?);
            traj.times.push(stop);
            traj.states.push(state.clone());
        }
    }
    Ok(traj)
}

fn check_schedules(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.times != b.times {
        return Err(Error::Mismatch("trajectories are sampled at different times".into()));
    }
    Ok(())
}

/// `max_t ‖ψ^ε(t) − e^{−itH/ε²}φ(t)‖` over the common samples.
pub fn filtered_error(full: &Trajectory, averaged: &Trajectory, epsilon: f64) -> Result<f64> {
    check_schedules(full, averaged)?;
    let mut worst: f64 = 0.0;
    for ((t, psi), phi) in full.times.iter().zip(&full.states).zip(&averaged.states) {
        let filtered = landau_phase(phi, t / (epsilon * epsilon))?;
        worst = worst.max(l2_error(psi, &filtered)?);
    }
    Ok(worst)
}

/// `max_t ‖a(t) − b(t)‖` over the common samples.
pub fn max_discrepancy(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    check_schedules(a, b)?;
    let mut worst: f64 = 0.0;
    for (x, y) in a.states.iter().zip(&b.states) {
        worst = worst.max(l2_error(x, y)?);
    }
    Ok(worst)
}

/// `n` equally spaced sample times covering `[0, t_final]`.
pub fn uniform_schedule(t_final: f64, intervals: usize) -> Vec<f64> {
    if t_final == 0.0 || intervals == 0 {
        return vec![0.0];
    }
    (0..=intervals).map(|i| t_final * i as f64 / intervals as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec;
    use crate::field::{make_initial, DtPolicy, InitialData, PotentialKind, ZProfile};
    use crate::propagators::linear_step_full;

    fn setup() -> (Arc<BasisTables>, Arc<Grid>) {
        let spec = BasisSpec::new(1, 2, 32, BasisSpec::min_half_width(1, 2) + 0.5);
        (Arc::new(BasisTables::build(&spec).unwrap()), Arc::new(Grid::new(32, 8.0).unwrap()))
    }

    fn params(lambda: f64, potential: PotentialKind) -> SimParams {
        SimParams {
            epsilon: 0.2,
            lambda,
            sigma: 1,
            potential,
            theta_nodes: 8,
            dt: DtPolicy::default(),
            sample_times: vec![],
        }
    }

    fn two_level(b: &Arc<BasisTables>, g: &Arc<Grid>) -> Field {
        make_initial(
            &InitialData::MultiLevelPacket {
                terms: vec![(0, 0, Complex64::new(1.0, 0.0)), (1, 1, Complex64::new(0.5, 0.3))],
                profile: ZProfile::Gaussian { center: 0.5, width: 1.0, momentum: 0.0 },
            },
            b.clone(),
            g.clone(),
        )
        .unwrap()
    }

    #[test]
    fn full_step_without_interaction_is_linear() {
        let (b, g) = setup();
        let u = two_level(&b, &g);
        let p = params(0.0, PotentialKind::Harmonic { omega: 1.0 });
        let dt = 0.01;
        let s = step_full(&u, dt, &p).unwrap();
        let v = Potential::sample(&p.potential, &g).unwrap();
        let half = linear_step_full(&u, &v, 0.5 * dt, p.epsilon).unwrap();
        let lin = linear_step_full(&half, &v, 0.5 * dt, p.epsilon).unwrap();
        assert!(l2_error(&s, &lin).unwrap() < 1e-15);
        let p0 = params(0.0, PotentialKind::zero());
        let s = step_full(&u, dt, &p0).unwrap();
        let zero = Potential::sample(&p0.potential, &g).unwrap();
        assert!(l2_error(&s, &linear_step_full(&u, &zero, dt, 0.2).unwrap()).unwrap() < 1e-14);
    }

    #[test]
    fn averaged_step_without_interaction_is_hz() {
        let (b, g) = setup();
        let u = two_level(&b, &g);
        let p = params(0.0, PotentialKind::Harmonic { omega: 1.0 });
        let v = Potential::sample(&p.potential, &g).unwrap();
        let s = step_averaged(&u, 0.02, &p).unwrap();
        let h = crate::propagators::hz_step(&crate::propagators::hz_step(&u, &v, 0.01), &v, 0.01);
        assert!(l2_error(&s, &h).unwrap() < 1e-15);
    }

    #[test]
    fn full_mass_is_conserved_up_to_projection_loss() {
        let (b, g) = setup();
        let u = two_level(&b, &g);
        let p = params(0.5, PotentialKind::Harmonic { omega: 1.0 });
        let mut st = Stepper::for_field(Scheme::Full, &p, &u).unwrap();
        let traj = evolve(&u, 0.2, 1e-3, &mut st, &uniform_schedule(0.2, 4)).unwrap();
        let last = traj.diagnostics.last().unwrap();
        assert!(last.projection_loss >= 0.0);
        assert!((last.mass + last.projection_loss - 1.0).abs() < 1e-12 * 0.2 + 1e-14);
    }

    #[test]
    fn single_level_full_run_keeps_level_masses() {
        let (b, g) = setup();
        let u = make_initial(
            &InitialData::LevelPacket {
                n: 1,
                coefficients: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.4)],
                profile: ZProfile::ground_state(),
            },
            b,
            g,
        )
        .unwrap();
        let mut p = params(0.5, PotentialKind::zero());
        p.epsilon = 0.05;
        let mut st = Stepper::for_field(Scheme::Full, &p, &u).unwrap();
        let traj = evolve(&u, 0.1, p.dt.full_dt(p.epsilon), &mut st, &uniform_schedule(0.1, 5)).unwrap();
        for d in &traj.diagnostics {
            // the off-level population is O(ε²) and oscillates
            assert!(d.level_masses[0] < 1e-4, "{:?}", d.level_masses);
        }
    }

    #[test]
    fn averaged_mass_drift() {
        let (b, g) = setup();
        let u = two_level(&b, &g);
        let p = params(0.5, PotentialKind::Harmonic { omega: 1.0 });
        let mut st = Stepper::for_field(Scheme::Averaged, &p, &u).unwrap();
        let traj = evolve(&u, 0.1, 1e-3, &mut st, &uniform_schedule(0.1, 2)).unwrap();
        assert!(traj.max_mass_drift() <= 1e-8 * 0.1);
    }

    #[test]
    fn evolve_schedules() {
        let (b, g) = setup();
        let u = two_level(&b, &g);
        let p = params(0.5, PotentialKind::Harmonic { omega: 1.0 });
        let mut st = Stepper::for_field(Scheme::Averaged, &p, &u).unwrap();
        let t0 = evolve(&u, 0.0, 1e-3, &mut st, &[]).unwrap();
        assert_eq!(t0.times, vec![0.0]);
        assert_eq!(t0.states[0].coefs(), u.coefs());
        let t1 = evolve(&u, 0.01, 3e-3, &mut st, &[0.0, 0.01]).unwrap();
        assert_eq!(t1.times, vec![0.0, 0.01]);
        let t2 = evolve(&u, 0.01, 1e-3, &mut st, &[0.0, 0.004, 0.01]).unwrap();
        assert!(t2.diagnostics.windows(2).all(|w| w[1].t > w[0].t));
        assert!(evolve(&u, 0.01, 1e-3, &mut st, &[0.005, 0.002]).is_err());
        assert!(evolve(&u, 0.01, 1e-3, &mut st, &[0.0, 0.02]).is_err());
        assert!(evolve(&u, 0.01, 0.0, &mut st, &[]).is_err());
    }

    #[test]
    fn nan_guard_aborts() {
        let (b, g) = setup();
        let u = two_level(&b, &g);
        let p = params(1e300, PotentialKind::zero());
        let mut st = Stepper::for_field(Scheme::Averaged, &p, &u).unwrap();
        let err = evolve(&u, 0.01, 1e-3, &mut st, &[]).unwrap_err();
        assert!(matches!(err, Error::NumericalAbort { .. }));
    }

    #[test]
    fn filtered_error_basics() {
        let (b, g) = setup();
        let u = two_level(&b, &g);
        let eps = 0.2;
        let mut p = params(0.0, PotentialKind::Harmonic { omega: 1.0 });
        p.epsilon = eps;
        let sched = uniform_schedule(0.1, 4);
        let mut full = Stepper::for_field(Scheme::Full, &p, &u).unwrap();
        let mut avg = Stepper::for_field(Scheme::Averaged, &p, &u).unwrap();
        let tf = evolve(&u, 0.1, 1e-3, &mut full, &sched).unwrap();
        let ta = evolve(&u, 0.1, 1e-3, &mut avg, &sched).unwrap();
        assert!(filtered_error(&tf, &ta, eps).unwrap() <= 1e-10);

        // a trajectory against its own filtered image
        let mut shifted = ta.clone();
        for (t, s) in shifted.times.iter().zip(shifted.states.iter_mut()) {
            *s = landau_phase(s, t / (eps * eps)).unwrap();
        }
        assert!(filtered_error(&shifted, &ta, eps).unwrap() < 1e-15);

        let short = evolve(&u, 0.1, 1e-3, &mut avg, &[0.0, 0.1]).unwrap();
        assert!(filtered_error(&tf, &short, eps).is_err());
    }
}
