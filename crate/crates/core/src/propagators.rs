//! Linear flows: Landau phases `e^{−iθH}`, the z-kinetic and z-potential
//! steps, the exact commuting core of the full linear Hamiltonian, and the
//! Strang-split `H_z = −½∂_z² + V(z)` group.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Field, Grid, Potential};

/// `e^{2πi·turns}`, exact at quarter turns.
pub(crate) fn phase_turns(turns: f64) -> Complex64 {
    let t = turns.rem_euclid(1.0);
    let q = t * 4.0;
    if q == q.trunc() {
        return match q as u8 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, 2.0 * PI * t)
}

/// `θ mod 4π`, in units of full turns (`θ / 2π`). Landau phases are
/// `4π`-periodic because the spectrum is half-integer.
pub(crate) fn reduced_turns(theta: f64) -> f64 {
    theta.rem_euclid(4.0 * PI) / (2.0 * PI)
}

/// `e^{−iθ(n+½)}` for `n = 0..levels`.
pub(crate) fn landau_phases(theta: f64, levels: usize) -> Vec<Complex64> {
    let turns = reduced_turns(theta);
    (0..levels).map(|n| phase_turns(-turns * (n as f64 + 0.5))).collect()
}

/// Precomputed multipliers for one linear step of size `τ`.
#[derive(Clone, Debug)]
pub struct LinearStepPlan {
    tau: f64,
    /// `e^{−i(τ/ε²)(n+½)}` per level, all ones for the `H_z` flow.
    level_phases: Vec<Complex64>,
    /// `e^{−iτk²/2}` per z-wavenumber.
    kinetic: Vec<Complex64>,
    /// `e^{−i(τ/2)V(z)}` per z-node; empty when `V ≡ 0`.
    potential_half: Vec<Complex64>,
}

impl LinearStepPlan {
    /// `e^{−iτ(ε^{−2}H − ½∂_z²)}` sandwiched between half potential steps.
    pub fn full(levels: usize, grid: &Grid, potential: &Potential, tau: f64, epsilon: f64) -> Self {
        Self::build(landau_phases(tau / (epsilon * epsilon), levels), grid, potential, tau)
    }

    /// Strang-split `e^{−iτH_z}`.
    pub fn hz(levels: usize, grid: &Grid, potential: &Potential, tau: f64) -> Self {
        Self::build(vec![Complex64::new(1.0, 0.0); levels], grid, potential, tau)
    }

    fn build(level_phases: Vec<Complex64>, grid: &Grid, potential: &Potential, tau: f64) -> Self {
        let kinetic = grid
            .wavenumbers()
            .iter()
            .map(|k| Complex64::from_polar(1.0, -0.5 * tau * k * k))
            .collect();
        let potential_half = if potential.is_zero() {
            Vec::new()
        } else {
            potential
                .samples()
                .iter()
                .map(|v| Complex64::from_polar(1.0, -0.5 * tau * v))
                .collect()
        };
        Self { tau, level_phases, kinetic, potential_half }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Apply in place to mode-major coefficients.
    pub(crate) fn apply(&self, coefs: &mut [Complex64], grid: &Grid, per_level: usize) {
        let nz = grid.z_points();
        let scratch_len = grid.scratch_len();
        coefs
            .par_chunks_mut(nz)
            .enumerate()
            .for_each_init(
                || vec![Complex64::new(0.0, 0.0); scratch_len],
                |scratch, (m, line)| {
                    let level_phase = self.level_phases[m / per_level];
                    apply_pointwise(line, &self.potential_half);
                    if nz > 1 {
                        grid.forward(line, scratch);
                        for (c, k) in line.iter_mut().zip(&self.kinetic) {
                            *c *= k * level_phase;
                        }
                        grid.inverse(line, scratch);
                    } else {
                        line[0] *= self.kinetic[0] * level_phase;
                    }
                    apply_pointwise(line, &self.potential_half);
                },
            );
    }
}

fn apply_pointwise(line: &mut [Complex64], mult: &[Complex64]) {
    for (c, m) in line.iter_mut().zip(mult) {
        *c *= m;
    }
}

/// `e^{−iθH}`: level-`n` coefficients pick up `e^{−iθ(n+½)}`.
pub fn landau_phase(field: &Field, theta: f64) -> Result<Field> {
    if !theta.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite phase angle {theta}")));
    }
    let mut out = field.clone();
    apply_landau_phase(out.coefs_mut(), field, theta);
    Ok(out)
}

pub(crate) fn apply_landau_phase(coefs: &mut [Complex64], field: &Field, theta: f64) {
    let per = field.basis().per_level() * field.grid().z_points();
    let phases = landau_phases(theta, field.basis().levels());
    for (chunk, p) in coefs.chunks_mut(per).zip(&phases) {
        chunk.iter_mut().for_each(|c| *c *= p);
    }
}

/// `e^{iτ∂_z²/2}` as a Fourier multiplier on every mode line.
pub fn kinetic_z_step(field: &Field, tau: f64) -> Field {
    let grid = field.grid();
    let plan = LinearStepPlan {
        tau,
        level_phases: vec![Complex64::new(1.0, 0.0); field.basis().levels()],
        kinetic: grid
            .wavenumbers()
            .iter()
            .map(|k| Complex64::from_polar(1.0, -0.5 * tau * k * k))
            .collect(),
        potential_half: Vec::new(),
    };
    let mut out = field.clone();
    plan.apply(out.coefs_mut(), grid, field.basis().per_level());
    out
}

/// `e^{−iτV(z)}` pointwise in z, identical on every mode.
pub fn potential_z_step(field: &Field, potential: &Potential, tau: f64) -> Field {
    let mult: Vec<Complex64> = potential
        .samples()
        .iter()
        .map(|v| Complex64::from_polar(1.0, -tau * v))
        .collect();
    let mut out = field.clone();
    let nz = field.grid().z_points();
    for line in out.coefs_mut().chunks_mut(nz) {
        apply_pointwise(line, &mult);
    }
    out
}

/// One step of `e^{−iτ(ε^{−2}H − ½∂_z² + V)}`: the commuting core is exact,
/// the potential enters by Strang splitting around it.
pub fn linear_step_full(field: &Field, potential: &Potential, tau: f64, epsilon: f64) -> Result<Field> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParams(format!("epsilon must be positive, got {epsilon}")));
    }
    let plan = LinearStepPlan::full(field.basis().levels(), field.grid(), potential, tau, epsilon);
    let mut out = field.clone();
    plan.apply(out.coefs_mut(), field.grid(), field.basis().per_level());
    Ok(out)
}

/// Strang step of `e^{−iτH_z}`: half potential, kinetic, half potential.
pub fn hz_step(field: &Field, potential: &Potential, tau: f64) -> Field {
    let plan = LinearStepPlan::hz(field.basis().levels(), field.grid(), potential, tau);
    let mut out = field.clone();
    plan.apply(out.coefs_mut(), field.grid(), field.basis().per_level());
    out
}
