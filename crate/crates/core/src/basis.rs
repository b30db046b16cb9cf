//! Truncated eigenbasis of the symmetric-gauge Landau Hamiltonian
//!
//! ```text
//! H = -½Δ + |x|²/8 - (i/2) x⊥·∇,     x⊥ = (-x₂, x₁),
//! ```
//!
//! tabulated on a uniform periodic grid over `[-L, L)²`.
//!
//! Modes are labelled by the Landau level `n` and a degeneracy index `k`.
//! With `w = x₁ + i x₂`, `r = |w|` and angular momentum `m = n - k`,
//!
//! ```text
//! φ_{n,k}(x) = N · e^{i m arg w} · r^{|m|} · L^{|m|}_{min(n,k)}(r²/2) · e^{-r²/4}.
//! ```
//!
//! Since `H = ½(H₀ + L_z)` with `H₀ = -Δ + |x|²/4` and `L_z = -i∂_θ`, these
//! satisfy `H₀ φ = (n+k+1) φ`, `L_z φ = (n-k) φ` and `H φ = (n+½) φ`. The
//! lowest level is spanned by `conj(w)^k e^{-r²/4}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::{dot_conj, fft_wavenumbers, norm_sqr_sum, Fft2};

/// Upper bound on `modes × grid points` for a single table.
pub const DEFAULT_MAX_TABLE_ENTRIES: usize = 1 << 27;

/// Energy of Landau level `n`.
pub fn eigenvalue(n: i64) -> Result<f64> {
    if n < 0 {
        return Err(Error::InvalidInput(format!("negative Landau level {n}")));
    }
    Ok(n as f64 + 0.5)
}

/// Normalized value of `φ_{n,k}` at `point = (x₁, x₂)`.
pub fn mode_function(n: i64, k: i64, point: (f64, f64)) -> Result<Complex64> {
    if n < 0 || k < 0 {
        return Err(Error::InvalidInput(format!("negative mode index ({n}, {k})")));
    }
    if !point.0.is_finite() || !point.1.is_finite() {
        return Err(Error::InvalidInput("non-finite evaluation point".into()));
    }
    Ok(LandauMode::new(n as usize, k as usize).value_at(point.0, point.1))
}

/// A single `(level, degeneracy)` label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LandauMode {
    pub n: usize,
    pub k: usize,
}

impl LandauMode {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, k }
    }

    /// `n + ½`, independent of `k`.
    pub fn eigenvalue(&self) -> f64 {
        self.n as f64 + 0.5
    }

    /// Angular momentum `n - k`.
    pub fn angular_momentum(&self) -> i64 {
        self.n as i64 - self.k as i64
    }

    /// Eigenvalue of the transverse oscillator `H₀ = -Δ + |x|²/4`.
    pub fn oscillator_energy(&self) -> f64 {
        (self.n + self.k + 1) as f64
    }

    fn log_norm(&self) -> f64 {
        let p = self.n.min(self.k) as f64;
        let a = self.angular_momentum().unsigned_abs() as f64;
        0.5 * (ln_gamma(p + 1.0) - ln_gamma(p + a + 1.0) - a * 2f64.ln() - (2.0 * PI).ln())
    }

    pub fn value_at(&self, x1: f64, x2: f64) -> Complex64 {
        self.value_with_norm(x1, x2, self.log_norm())
    }

    fn value_with_norm(&self, x1: f64, x2: f64, log_norm: f64) -> Complex64 {
        let p = self.n.min(self.k);
        let m = self.angular_momentum();
        let a = m.unsigned_abs() as usize;
        let r2 = x1 * x1 + x2 * x2;
        if r2 == 0.0 && a > 0 {
            return Complex64::new(0.0, 0.0);
        }
        let lag = laguerre(p, a as f64, 0.5 * r2);
        let radial_log = if a == 0 { 0.0 } else { 0.5 * a as f64 * r2.ln() };
        let magnitude = (log_norm + radial_log - 0.25 * r2).exp() * lag;
        if m == 0 {
            Complex64::new(magnitude, 0.0)
        } else {
            Complex64::from_polar(magnitude, m as f64 * x2.atan2(x1))
        }
    }
}

/// Generalized Laguerre polynomial `L_p^α(x)` by the three-term recurrence.
pub fn laguerre(p: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for j in 1..p {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + alpha - x) * cur - (jf + alpha) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Truncation and transverse grid of the Landau basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// Highest Landau level kept.
    pub n_max: usize,
    /// Highest degeneracy index kept per level.
    pub k_max: usize,
    /// Points per transverse axis (power of two, at least 8).
    pub grid_points_per_axis: usize,
    /// The transverse box is `[-L, L)²`.
    pub half_width: f64,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self { n_max: 2, k_max: 2, grid_points_per_axis: 128, half_width: 12.0 }
    }
}

impl BasisSpec {
    pub fn new(n_max: usize, k_max: usize, grid_points_per_axis: usize, half_width: f64) -> Self {
        Self { n_max, k_max, grid_points_per_axis, half_width }
    }

    /// Smallest admissible half width: four lengths past the classical
    /// turning radius `2√(n+k+1)` of the most extended kept mode.
    pub fn min_half_width(n_max: usize, k_max: usize) -> f64 {
        2.0 * ((n_max + k_max + 1) as f64).sqrt() + 4.0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid_points_per_axis;
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidBasis(format!(
                "grid_points_per_axis must be a power of two >= 8, got {n}"
            )));
        }
        if !self.half_width.is_finite() {
            return Err(Error::InvalidBasis("half_width must be finite".into()));
        }
        let min = Self::min_half_width(self.n_max, self.k_max);
        if self.half_width < min {
            return Err(Error::InvalidBasis(format!(
                "half_width {} below support rule {min:.4} for n_max={}, k_max={}",
                self.half_width, self.n_max, self.k_max
            )));
        }
        Ok(())
    }

    pub fn mode_count(&self) -> usize {
        (self.n_max + 1) * (self.k_max + 1)
    }

    pub fn point_count(&self) -> usize {
        self.grid_points_per_axis * self.grid_points_per_axis
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.grid_points_per_axis as f64
    }

    /// Flat mode index, level-major.
    pub fn mode_index(&self, n: usize, k: usize) -> usize {
        n * (self.k_max + 1) + k
    }

    pub fn mode_at(&self, index: usize) -> LandauMode {
        LandauMode::new(index / (self.k_max + 1), index % (self.k_max + 1))
    }

    pub fn modes(&self) -> impl Iterator<Item = LandauMode> + '_ {
        (0..self.mode_count()).map(|i| self.mode_at(i))
    }
}

/// Mode values on the transverse grid plus the trapezoid weight.
#[derive(Clone, Debug)]
pub struct BasisTables {
    spec: BasisSpec,
    nodes: Vec<f64>,
    /// Uniform trapezoid weight `(dx)²` shared by every grid point.
    weight: f64,
    /// `values[mode * points + point]`; points are row-major in `(x₁, x₂)`.
    values: Vec<Complex64>,
}

/// Tabulate every kept mode; see [`BasisTables::build`].
pub fn build_basis(spec: &BasisSpec) -> Result<BasisTables> {
    BasisTables::build(spec)
}

impl BasisTables {
    pub fn build(spec: &BasisSpec) -> Result<Self> {
        Self::build_with_cap(spec, DEFAULT_MAX_TABLE_ENTRIES)
    }

    pub fn build_with_cap(spec: &BasisSpec, max_entries: usize) -> Result<Self> {
        spec.validate()?;
        let points = spec.point_count();
        let entries = spec.mode_count().saturating_mul(points);
        if entries > max_entries {
            return Err(Error::ResourceLimit(format!(
                "{} modes x {points} points exceeds the table cap of {max_entries} entries",
                spec.mode_count()
            )));
        }
        let npa = spec.grid_points_per_axis;
        let h = spec.spacing();
        let nodes: Vec<f64> = (0..npa).map(|j| -spec.half_width + j as f64 * h).collect();
        let mut values = vec![Complex64::new(0.0, 0.0); entries];
        values.par_chunks_mut(points).enumerate().for_each(|(idx, row)| {
            let mode = spec.mode_at(idx);
            let log_norm = mode.log_norm();
            for (i1, &x1) in nodes.iter().enumerate() {
                for (i2, &x2) in nodes.iter().enumerate() {
                    row[i1 * npa + i2] = mode.value_with_norm(x1, x2, log_norm);
                }
            }
        });
        Ok(Self { spec: spec.clone(), nodes, weight: h * h, values })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mode_count(&self) -> usize {
        self.spec.mode_count()
    }

    pub fn point_count(&self) -> usize {
        self.spec.point_count()
    }

    pub fn levels(&self) -> usize {
        self.spec.n_max + 1
    }

    pub fn per_level(&self) -> usize {
        self.spec.k_max + 1
    }

    /// Samples of mode `index` on the grid.
    pub fn mode_values(&self, index: usize) -> &[Complex64] {
        let p = self.point_count();
        &self.values[index * p..(index + 1) * p]
    }

    /// Quadrature mass `Σ w |u|²` of a transverse slice.
    pub fn quadrature_mass(&self, slice: &[Complex64]) -> f64 {
        self.weight * norm_sqr_sum(slice)
    }

    /// Gram matrix `G[a][b] = Σ w conj(φ_a) φ_b`, row-major.
    pub fn gram(&self) -> Vec<Complex64> {
        let m = self.mode_count();
        let mut g = vec![Complex64::new(0.0, 0.0); m * m];
        g.par_chunks_mut(m).enumerate().for_each(|(a, row)| {
            for (b, entry) in row.iter_mut().enumerate() {
                *entry = self.weight * dot_conj(self.mode_values(a), self.mode_values(b));
            }
        });
        g
    }

    /// `max |G - I|` over all entries.
    pub fn gram_deviation(&self) -> f64 {
        let m = self.mode_count();
        self.gram()
            .iter()
            .enumerate()
            .map(|(idx, g)| {
                let id = if idx / m == idx % m { 1.0 } else { 0.0 };
                (g - id).norm()
            })
            .fold(0.0, f64::max)
    }

    fn check_slice(&self, len: usize) -> Result<()> {
        if len != self.point_count() {
            return Err(Error::Mismatch(format!(
                "transverse slice has {len} points, basis grid has {}",
                self.point_count()
            )));
        }
        Ok(())
    }

    /// Galerkin coefficients `c_{n,k} = Σ w conj(φ_{n,k}) u`.
    pub fn analyze(&self, slice: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_slice(slice.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.mode_count()];
        self.analyze_into(slice, &mut out);
        Ok(out)
    }

    pub(crate) fn analyze_into(&self, slice: &[Complex64], out: &mut [Complex64]) {
        for (idx, c) in out.iter_mut().enumerate() {
            *c = self.weight * dot_conj(self.mode_values(idx), slice);
        }
    }

    /// Coefficients of the modes of one level only.
    pub(crate) fn analyze_level_into(&self, level: usize, slice: &[Complex64], out: &mut [Complex64]) {
        let first = level * self.per_level();
        for (k, c) in out.iter_mut().enumerate() {
            *c = self.weight * dot_conj(self.mode_values(first + k), slice);
        }
    }

    /// `u = Σ c_{n,k} φ_{n,k}` on the grid.
    pub fn synthesize(&self, coefs: &[Complex64]) -> Result<Vec<Complex64>> {
        if coefs.len() != self.mode_count() {
            return Err(Error::Mismatch(format!(
                "{} coefficients for a basis of {} modes",
                coefs.len(),
                self.mode_count()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.point_count()];
        self.synthesize_into(coefs, &mut out);
        Ok(out)
    }

    pub(crate) fn synthesize_into(&self, coefs: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (idx, &c) in coefs.iter().enumerate() {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (v, phi) in out.iter_mut().zip(self.mode_values(idx)) {
                *v += c * phi;
            }
        }
    }

    /// Synthesis restricted to one level: `Σ_k c_k φ_{level,k}`.
    pub(crate) fn synthesize_level_into(&self, level: usize, coefs: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let first = level * self.per_level();
        for (k, &c) in coefs.iter().enumerate() {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (v, phi) in out.iter_mut().zip(self.mode_values(first + k)) {
                *v += c * phi;
            }
        }
    }

    /// Lowest-level projection of a transverse slice through the
    /// Bargmann–Fock reproducing kernel
    ///
    /// ```text
    /// (P₀u)(w) = (2π)⁻¹ ∫ exp(conj(w)·v/2 − |w|²/4 − |v|²/4) u(v) dv,
    /// ```
    ///
    /// evaluated by grid quadrature. It is the untruncated projector, so it
    /// matches the basis route only for inputs whose level-0 content lies
    /// inside the kept degeneracy range.
    pub fn lll_kernel_project(&self, slice: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_slice(slice.len())?;
        let n = self.spec.grid_points_per_axis;
        let x = &self.nodes;
        // The kernel factorizes as g(w₁-v₁) g(w₂-v₂) e^{i w₁v₂/2} e^{-i w₂v₁/2}.
        let gauss: Vec<f64> = (0..n * n)
            .map(|ij| {
                let d = x[ij / n] - x[ij % n];
                (-0.25 * d * d).exp()
            })
            .collect();
        let twist: Vec<Complex64> = (0..n * n)
            .map(|ij| Complex64::from_polar(1.0, 0.5 * x[ij / n] * x[ij % n]))
            .collect();
        let scale = self.weight / (2.0 * PI);

        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(a1, out_row)| {
            // twisted[i1][i2] = e^{i w₁ v₂/2} u(i1, i2)
            let mut twisted = vec![Complex64::new(0.0, 0.0); n * n];
            for i1 in 0..n {
                for i2 in 0..n {
                    twisted[i1 * n + i2] = twist[a1 * n + i2] * slice[i1 * n + i2];
                }
            }
            let mut inner = vec![Complex64::new(0.0, 0.0); n];
            for (a2, value) in out_row.iter_mut().enumerate() {
                let g2 = &gauss[a2 * n..(a2 + 1) * n];
                for (i1, s) in inner.iter_mut().enumerate() {
                    let row = &twisted[i1 * n..(i1 + 1) * n];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (g, t) in g2.iter().zip(row) {
                        acc += t * *g;
                    }
                    *s = acc;
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for (i1, s) in inner.iter().enumerate() {
                    // e^{-i w₂ v₁/2}
                    acc += gauss[a1 * n + i1] * twist[a2 * n + i1].conj() * s;
                }
                *value = scale * acc;
            }
        });
        Ok(out)
    }

    /// Discrete `H` applied to a grid function: Laplacian and `x⊥·∇` by
    /// FFT differentiation, `|x|²/8` pointwise.
    pub fn apply_hamiltonian(&self, slice: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_slice(slice.len())?;
        let n = self.spec.grid_points_per_axis;
        let kx = fft_wavenumbers(n, 2.0 * self.spec.half_width);
        let fft = Fft2::new(n);
        let mut hat = slice.to_vec();
        fft.forward(&mut hat);

        let mut lap = hat.clone();
        let mut d1 = hat.clone();
        let mut d2 = hat;
        let i = Complex64::new(0.0, 1.0);
        for r in 0..n {
            for c in 0..n {
                let idx = r * n + c;
                let (k1, k2) = (kx[r], kx[c]);
                lap[idx] *= -(k1 * k1 + k2 * k2);
                // odd derivatives drop the Nyquist mode
                let k1d = if r == n / 2 { 0.0 } else { k1 };
                let k2d = if c == n / 2 { 0.0 } else { k2 };
                d1[idx] *= i * k1d;
                d2[idx] *= i * k2d;
            }
        }
        fft.inverse(&mut lap);
        fft.inverse(&mut d1);
        fft.inverse(&mut d2);

        let x = &self.nodes;
        Ok((0..n * n)
            .map(|idx| {
                let (x1, x2) = (x[idx / n], x[idx % n]);
                let rot = -x2 * d1[idx] + x1 * d2[idx];
                -0.5 * lap[idx] + 0.125 * (x1 * x1 + x2 * x2) * slice[idx] - 0.5 * i * rot
            })
            .collect())
    }

    /// `‖(H − (n+½)) φ_{n,k}‖` on the grid.
    pub fn eigen_residual(&self, n: usize, k: usize) -> Result<f64> {
        if n > self.spec.n_max || k > self.spec.k_max {
            return Err(Error::OutOfTruncation(format!("mode ({n}, {k})")));
        }
        let phi = self.mode_values(self.spec.mode_index(n, k));
        let h_phi = self.apply_hamiltonian(phi)?;
        let e = n as f64 + 0.5;
        let residual: Vec<Complex64> = h_phi.iter().zip(phi).map(|(a, b)| a - e * b).collect();
        Ok(self.quadrature_mass(&residual).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eigenvalues() {
        assert_eq!(eigenvalue(0).unwrap(), 0.5);
        assert_eq!(eigenvalue(3).unwrap(), 3.5);
        for n in 1..20 {
            assert_eq!(eigenvalue(n).unwrap() - eigenvalue(n - 1).unwrap(), 1.0);
        }
        assert!(eigenvalue(-1).is_err());
    }

    #[test]
    fn laguerre_low_orders() {
        let x = 0.7;
        let a = 2.0;
        assert!(approx(laguerre(1, a, x), 1.0 + a - x, 1e-15));
        let l2 = 0.5 * (x * x - 2.0 * (a + 2.0) * x + (a + 1.0) * (a + 2.0));
        assert!(approx(laguerre(2, a, x), l2, 1e-14));
    }

    #[test]
    fn mode_function_values() {
        // (2π)^{-1/2}: the 2D Gaussian integral ∫ e^{-r²/2} = 2π
        let v = mode_function(0, 0, (0.0, 0.0)).unwrap();
        assert!(approx(v.re, (2.0 * PI).powf(-0.5), 1e-15));
        assert_eq!(v.im, 0.0);
        assert_eq!(mode_function(0, 1, (0.0, 0.0)).unwrap().norm(), 0.0);
        assert!(mode_function(2, 5, (20.0, 0.0)).unwrap().norm() < 1e-30);
        assert!(mode_function(2, 5, (0.0, -20.0)).unwrap().norm() < 1e-30);
        assert!(mode_function(-1, 0, (0.0, 0.0)).is_err());
        assert!(mode_function(0, -2, (0.0, 0.0)).is_err());
        assert!(mode_function(0, 0, (f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn lowest_level_is_antiholomorphic() {
        // φ_{0,k} ∝ conj(w)^k e^{-r²/4}
        let w = Complex64::new(0.8, -1.1);
        for k in 0..5usize {
            let v = mode_function(0, k as i64, (w.re, w.im)).unwrap();
            let norm = 1.0 / (2.0 * PI * 2f64.powi(k as i32) * (1..=k).product::<usize>() as f64).sqrt();
            let expected = norm * w.conj().powu(k as u32) * (-0.25 * w.norm_sqr()).exp();
            assert!((v - expected).norm() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn single_gaussian_mode_has_unit_norm() {
        let t = build_basis(&BasisSpec::new(0, 0, 128, 12.0)).unwrap();
        assert_eq!(t.mode_count(), 1);
        assert!(approx(t.quadrature_mass(t.mode_values(0)), 1.0, 1e-12));
    }

    #[test]
    fn default_basis_is_orthonormal() {
        let t = build_basis(&BasisSpec::new(2, 2, 128, 12.0)).unwrap();
        assert!(t.gram_deviation() <= 1e-10);
    }

    #[test]
    fn spec_validation() {
        let min = BasisSpec::min_half_width(2, 2);
        assert!(build_basis(&BasisSpec::new(2, 2, 64, min - 0.01)).is_err());
        assert!(build_basis(&BasisSpec::new(0, 0, 48, 12.0)).is_err());
        assert!(build_basis(&BasisSpec::new(0, 0, 4, 12.0)).is_err());
        let cap = BasisTables::build_with_cap(&BasisSpec::new(2, 2, 64, 12.0), 1000);
        assert!(matches!(cap, Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn analyze_synthesize() {
        let t = build_basis(&BasisSpec::new(2, 2, 64, 10.0)).unwrap();
        let s = t.spec().clone();
        let c = t.analyze(t.mode_values(s.mode_index(1, 0))).unwrap();
        for (idx, v) in c.iter().enumerate() {
            let e = if idx == s.mode_index(1, 0) { 1.0 } else { 0.0 };
            assert!((v - e).norm() < 1e-10);
        }
        let zero = vec![Complex64::new(0.0, 0.0); t.point_count()];
        assert!(t.analyze(&zero).unwrap().iter().all(|v| v.norm() == 0.0));

        let a = s.mode_index(0, 0);
        let b = s.mode_index(2, 1);
        let mix: Vec<Complex64> = t
            .mode_values(a)
            .iter()
            .zip(t.mode_values(b))
            .map(|(x, y)| (x + y) / 2f64.sqrt())
            .collect();
        let c = t.analyze(&mix).unwrap();
        for (idx, v) in c.iter().enumerate() {
            let e = if idx == a || idx == b { 0.5f64.sqrt() } else { 0.0 };
            assert!((v - e).norm() < 1e-10);
        }
        let unit: Vec<Complex64> =
            (0..t.mode_count()).map(|i| Complex64::new((i == a) as u8 as f64, 0.0)).collect();
        let u = t.synthesize(&unit).unwrap();
        assert_eq!(u, t.mode_values(a));
        assert!(t.analyze(&[Complex64::new(0.0, 0.0); 10]).is_err());
        assert!(t.synthesize(&[Complex64::new(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn kernel_projector_fixes_and_kills() {
        let t = build_basis(&BasisSpec::new(1, 4, 64, 12.0)).unwrap();
        let s = t.spec().clone();
        let phi00 = t.mode_values(s.mode_index(0, 0));
        let p = t.lll_kernel_project(phi00).unwrap();
        let diff: Vec<Complex64> = p.iter().zip(phi00).map(|(a, b)| a - b).collect();
        assert!(t.quadrature_mass(&diff).sqrt() < 1e-8);
        let phi10 = t.mode_values(s.mode_index(1, 0));
        let p = t.lll_kernel_project(phi10).unwrap();
        assert!(t.quadrature_mass(&p).sqrt() < 1e-8);
    }

    #[test]
    fn eigen_residuals_small_and_refine() {
        let coarse = build_basis(&BasisSpec::new(4, 4, 128, 12.0)).unwrap();
        assert!(coarse.eigen_residual(0, 0).unwrap() <= 1e-8);
        let r44 = coarse.eigen_residual(4, 4).unwrap();
        assert!(r44 <= 1e-6, "{r44}");
        assert!(coarse.eigen_residual(5, 0).is_err());

        let lo = build_basis(&BasisSpec::new(4, 4, 32, 12.0)).unwrap();
        let hi = build_basis(&BasisSpec::new(4, 4, 64, 12.0)).unwrap();
        let (a, b) = (lo.eigen_residual(4, 4).unwrap(), hi.eigen_residual(4, 4).unwrap());
        assert!(b < a, "{a} -> {b}");
    }
}
