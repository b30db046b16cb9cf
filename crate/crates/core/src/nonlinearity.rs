//! Power nonlinearity, its Landau-filtered form
//!
//! ```text
//! F(θ, u) = e^{iθH} ( |e^{−iθH}u|^{2σ} e^{−iθH}u ),
//! ```
//!
//! and the period average `F_av(u) = (2π)⁻¹ ∫₀^{2π} F(θ, u) dθ`.
//!
//! On a truncation with levels `0..=N`, `θ ↦ F(θ, u)` is a trigonometric
//! polynomial whose frequencies are bounded by `(σ+1)N`, so a uniform rule
//! with more nodes than that averages it exactly.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::BasisTables;
use crate::error::{Error, Result};
use crate::field::{Field, SimParams};
use crate::numerics::{norm_sqr_sum, pairwise_sum};
use crate::propagators::{landau_phase, landau_phases};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `|u|^{2σ} u` pointwise.
pub fn pointwise_power(u: &[Complex64], sigma: u32) -> Vec<Complex64> {
    u.iter().map(|&v| power(v, sigma)).collect()
}

#[inline]
fn power(v: Complex64, sigma: u32) -> Complex64 {
    v * v.norm_sqr().powi(sigma as i32)
}

/// Exact flow of `i∂_t u = λ|u|^{2σ}u` over `τ`: `u ↦ e^{−iτλ|u|^{2σ}} u`.
pub fn nonlinear_phase_step(u: &[Complex64], tau: f64, lambda: f64, sigma: u32) -> Vec<Complex64> {
    u.iter()
        .map(|&v| v * Complex64::from_polar(1.0, -tau * lambda * v.norm_sqr().powi(sigma as i32)))
        .collect()
}

/// Uniform θ-rule `θ_j = 2πj/J` with weights `1/J`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThetaQuadrature {
    pub nodes: usize,
}

impl ThetaQuadrature {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidParams("theta quadrature needs at least one node".into()));
        }
        Ok(Self { nodes })
    }

    /// Default rule `2(σ+1)(n_max+1)`.
    pub fn default_for(sigma: u32, n_max: usize) -> Self {
        Self { nodes: SimParams::theta_nodes_rule(sigma, n_max) }
    }

    pub fn meets_rule(&self, sigma: u32, n_max: usize) -> bool {
        self.nodes >= SimParams::theta_nodes_rule(sigma, n_max)
    }

    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(move |j| 2.0 * std::f64::consts::PI * j as f64 / self.nodes as f64)
    }
}

/// `F(θ, u)` as the literal composition
/// phase → synthesize → power → analyze → inverse phase.
pub fn f_theta(field: &Field, theta: f64, sigma: u32) -> Result<Field> {
    let rotated = landau_phase(field, theta)?;
    let phys = rotated.to_physical();
    let powered = crate::field::PhysicalField {
        values: pointwise_power(&phys.values, sigma),
        points: phys.points,
        z_points: phys.z_points,
    };
    let back = Field::from_physical(&powered, field.basis().clone(), field.grid().clone())?;
    landau_phase(&back, -theta)
}

/// Result of the quadrature average.
#[derive(Clone, Debug)]
pub struct AveragedNonlinearity {
    pub value: Field,
    /// The node count is below the exactness rule.
    pub underresolved: bool,
}

/// `F_av(u)` by the `J`-node rule. Runs even when `J` is below the exactness
/// rule, flagging the result.
pub fn f_av_quadrature(field: &Field, sigma: u32, nodes: usize) -> Result<AveragedNonlinearity> {
    let quad = ThetaQuadrature::new(nodes)?;
    let kernel = GalerkinNonlinearity::new(field.basis().clone(), field.grid().z_points(), sigma, quad);
    let mut out = vec![ZERO; field.coefs().len()];
    kernel.averaged(field.coefs(), &mut out);
    Ok(AveragedNonlinearity {
        value: field.with_coefs(out),
        underresolved: !quad.meets_rule(sigma, field.basis().spec().n_max),
    })
}

/// Brute-force `F_av` for `σ = 1`: expand `⟨φ_a, |u|²u⟩` over all mode
/// quadruples and keep those whose Landau frequency `n_a + n_b − n_c − n_d`
/// vanishes. Intended only for tiny truncations.
pub fn f_av_resonant_oracle(field: &Field, sigma: u32) -> Result<Field> {
    if sigma != 1 {
        return Err(Error::InvalidInput("resonant oracle supports sigma = 1 only".into()));
    }
    let basis = field.basis();
    let spec = basis.spec();
    let nz = field.grid().z_points();
    if spec.n_max > 2 || spec.k_max > 2 || nz > 4 {
        return Err(Error::ResourceLimit(format!(
            "resonant oracle limited to n_max, k_max <= 2 and <= 4 z-points (got {}, {}, {nz})",
            spec.n_max, spec.k_max
        )));
    }
    let m = basis.mode_count();
    let level = |i: usize| spec.mode_at(i).n;
    let w = basis.weight();

    let mut out = vec![ZERO; m * nz];
    let mut conj_pair = vec![ZERO; basis.point_count()];
    for a in 0..m {
        for b in 0..m {
            let pa = basis.mode_values(a);
            let pb = basis.mode_values(b);
            for (x, (ya, yb)) in conj_pair.iter_mut().zip(pa.iter().zip(pb)) {
                *x = (ya * yb).conj();
            }
            for c in 0..m {
                for d in 0..m {
                    if level(a) + level(b) != level(c) + level(d) {
                        continue;
                    }
                    let pc = basis.mode_values(c);
                    let pd = basis.mode_values(d);
                    let terms: Vec<Complex64> = conj_pair
                        .iter()
                        .zip(pc.iter().zip(pd))
                        .map(|(ab, (yc, yd))| ab * yc * yd)
                        .collect();
                    let tensor = w * crate::numerics::pairwise_sum_c(&terms);
                    for j in 0..nz {
                        let cb = field.coefs()[b * nz + j];
                        let cc = field.coefs()[c * nz + j];
                        let cd = field.coefs()[d * nz + j];
                        out[a * nz + j] += tensor * cb.conj() * cc * cd;
                    }
                }
            }
        }
    }
    Ok(field.with_coefs(out))
}

/// `Σ_{x,z} w dz |P⊥(|u|^{2σ}u)|²`: mass of the power nonlinearity that the
/// truncation discards.
pub fn spectral_leakage(field: &Field, sigma: u32) -> f64 {
    let kernel = GalerkinNonlinearity::new(
        field.basis().clone(),
        field.grid().z_points(),
        sigma,
        ThetaQuadrature { nodes: 1 },
    );
    kernel.leakage(field.coefs()) * field.grid().dz()
}

/// `(2π)⁻¹ ∫∫ |e^{−iθH}u|^{2σ+2} dθ dx dz` by the `nodes`-point θ-rule.
pub(crate) fn averaged_power_integral(field: &Field, sigma: u32, nodes: usize) -> f64 {
    let kernel = GalerkinNonlinearity::new(
        field.basis().clone(),
        field.grid().z_points(),
        sigma,
        ThetaQuadrature { nodes: nodes.max(1) },
    );
    kernel.power_integral(field.coefs()) * field.grid().dz()
}

/// Slice-wise Galerkin evaluation of the nonlinear terms used by the solvers.
///
/// Coefficients are mode-major (`coefs[mode * nz + j]`); every z-slice is
/// handled independently and results are written back in a fixed order, so
/// output does not depend on the thread count.
pub(crate) struct GalerkinNonlinearity {
    basis: Arc<BasisTables>,
    nz: usize,
    sigma: u32,
    quad: ThetaQuadrature,
    /// `down[j * levels + n] = e^{−iθ_j(n+½)}`
    down: Vec<Complex64>,
}

impl GalerkinNonlinearity {
    pub(crate) fn new(basis: Arc<BasisTables>, nz: usize, sigma: u32, quad: ThetaQuadrature) -> Self {
        let levels = basis.levels();
        let down = quad.angles().flat_map(|t| landau_phases(t, levels)).collect();
        Self { basis, nz, sigma, quad, down }
    }

    fn per_slice<F>(&self, coefs: &[Complex64], out: &mut [Complex64], f: F)
    where
        F: Fn(&[Complex64], &mut [Complex64]) + Sync,
    {
        let m = self.basis.mode_count();
        let nz = self.nz;
        let slices: Vec<Vec<Complex64>> = (0..nz)
            .into_par_iter()
            .map(|j| {
                let mut c = vec![ZERO; m];
                Field::gather_slice(coefs, nz, j, &mut c);
                let mut o = vec![ZERO; m];
                f(&c, &mut o);
                o
            })
            .collect();
        for (j, o) in slices.iter().enumerate() {
            for (mode, v) in o.iter().enumerate() {
                out[mode * nz + j] = *v;
            }
        }
    }

    /// Level components `u_n = Σ_k c_{n,k} φ_{n,k}` of one slice.
    fn level_components(&self, c: &[Complex64]) -> Vec<Complex64> {
        let p = self.basis.point_count();
        let per = self.basis.per_level();
        let mut u = vec![ZERO; self.basis.levels() * p];
        for (n, chunk) in u.chunks_mut(p).enumerate() {
            self.basis.synthesize_level_into(n, &c[n * per..(n + 1) * per], chunk);
        }
        u
    }

    /// `out = F_av(coefs)`.
    pub(crate) fn averaged(&self, coefs: &[Complex64], out: &mut [Complex64]) {
        self.per_slice(coefs, out, |c, o| self.averaged_slice(c, o));
    }

    fn averaged_slice(&self, c: &[Complex64], out: &mut [Complex64]) {
        let p = self.basis.point_count();
        let levels = self.basis.levels();
        let per = self.basis.per_level();
        let j_nodes = self.quad.nodes;
        let u = self.level_components(c);
        // acc[a][x] = Σ_j e^{iθ_j(a+½)} |v_j|^{2σ} v_j,  v_j = Σ_n e^{−iθ_j(n+½)} u_n
        let mut ux = vec![ZERO; levels * p];
        for n in 0..levels {
            for (x, v) in u[n * p..(n + 1) * p].iter().enumerate() {
                ux[x * levels + n] = *v;
            }
        }
        let mut accx = vec![ZERO; levels * p];
        for (point, local) in ux.chunks_exact(levels).zip(accx.chunks_exact_mut(levels)) {
            for phases in self.down.chunks_exact(levels) {
                let v = phases.iter().zip(point).fold(ZERO, |s, (ph, un)| s + ph * un);
                let g = power(v, self.sigma);
                for (l, ph) in local.iter_mut().zip(phases) {
                    *l += ph.conj() * g;
                }
            }
        }
        let mut acc = vec![ZERO; levels * p];
        for (x, local) in accx.chunks_exact(levels).enumerate() {
            for (a, l) in local.iter().enumerate() {
                acc[a * p + x] = *l;
            }
        }
        let scale = 1.0 / j_nodes as f64;
        for a in 0..levels {
            let target = &mut out[a * per..(a + 1) * per];
            self.basis.analyze_level_into(a, &acc[a * p..(a + 1) * p], target);
            target.iter_mut().for_each(|v| *v *= scale);
        }
    }

    /// `out = analyze(|u|^{2σ}u)`, optionally restricted to one level.
    pub(crate) fn projected_power(&self, coefs: &[Complex64], out: &mut [Complex64], level: Option<usize>) {
        let per = self.basis.per_level();
        self.per_slice(coefs, out, |c, o| {
            let mut u = vec![ZERO; self.basis.point_count()];
            self.basis.synthesize_into(c, &mut u);
            u.iter_mut().for_each(|v| *v = power(*v, self.sigma));
            match level {
                None => self.basis.analyze_into(&u, o),
                Some(n) => {
                    o.iter_mut().for_each(|v| *v = ZERO);
                    self.basis.analyze_level_into(n, &u, &mut o[n * per..(n + 1) * per]);
                }
            }
        });
    }

    /// In-place `c ← analyze(e^{−iτλ|u|^{2σ}} u)`. Returns the transverse
    /// coefficient mass lost across the step, summed over slices (not yet times dz).
    pub(crate) fn phase_flow(&self, coefs: &mut [Complex64], tau: f64, lambda: f64) -> f64 {
        let m = self.basis.mode_count();
        let nz = self.nz;
        let results: Vec<(Vec<Complex64>, f64)> = (0..nz)
            .into_par_iter()
            .map(|j| {
                let mut c = vec![ZERO; m];
                Field::gather_slice(coefs, nz, j, &mut c);
                let before = norm_sqr_sum(&c);
                let mut u = vec![ZERO; self.basis.point_count()];
                self.basis.synthesize_into(&c, &mut u);
                for v in u.iter_mut() {
                    let s = v.norm_sqr().powi(self.sigma as i32);
                    *v *= Complex64::from_polar(1.0, -tau * lambda * s);
                }
                self.basis.analyze_into(&u, &mut c);
                let loss = before - norm_sqr_sum(&c);
                (c, loss)
            })
            .collect();
        let mut losses = Vec::with_capacity(nz);
        for (j, (c, loss)) in results.into_iter().enumerate() {
            for (mode, v) in c.iter().enumerate() {
                coefs[mode * nz + j] = *v;
            }
            losses.push(loss);
        }
        pairwise_sum(&losses)
    }

    fn leakage(&self, coefs: &[Complex64]) -> f64 {
        let m = self.basis.mode_count();
        let nz = self.nz;
        let w = self.basis.weight();
        let per: Vec<f64> = (0..nz)
            .into_par_iter()
            .map(|j| {
                let mut c = vec![ZERO; m];
                Field::gather_slice(coefs, nz, j, &mut c);
                let mut u = vec![ZERO; self.basis.point_count()];
                self.basis.synthesize_into(&c, &mut u);
                u.iter_mut().for_each(|v| *v = power(*v, self.sigma));
                self.basis.analyze_into(&u, &mut c);
                (w * norm_sqr_sum(&u) - norm_sqr_sum(&c)).max(0.0)
            })
            .collect();
        pairwise_sum(&per)
    }

    fn power_integral(&self, coefs: &[Complex64]) -> f64 {
        let m = self.basis.mode_count();
        let nz = self.nz;
        let p = self.basis.point_count();
        let levels = self.basis.levels();
        let w = self.basis.weight();
        let j_nodes = self.quad.nodes;
        let per: Vec<f64> = (0..nz)
            .into_par_iter()
            .map(|j| {
                let mut c = vec![ZERO; m];
                Field::gather_slice(coefs, nz, j, &mut c);
                let u = self.level_components(&c);
                let values: Vec<f64> = (0..p)
                    .map(|x| {
                        let mut s = 0.0;
                        for jn in 0..j_nodes {
                            let phases = &self.down[jn * levels..(jn + 1) * levels];
                            let mut v = ZERO;
                            for (n, ph) in phases.iter().enumerate() {
                                v += ph * u[n * p + x];
                            }
                            s += v.norm_sqr().powi(self.sigma as i32 + 1);
                        }
                        s
                    })
                    .collect();
                w * pairwise_sum(&values) / j_nodes as f64
            })
            .collect();
        pairwise_sum(&per)
    }
}
