//! Canonical state: Landau coefficients along a periodic z-grid, together
//! with the norms and conserved quantities evaluated on it.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::basis::BasisTables;
use crate::error::{Error, Result};
use crate::nonlinearity;
use crate::numerics::{fft_wavenumbers, norm_sqr_sum, pairwise_sum};

/// Periodic longitudinal grid `z ∈ [-L_z, L_z)`.
#[derive(Clone)]
pub struct Grid {
    z_half_width: f64,
    nodes: Vec<f64>,
    wavenumbers: Vec<f64>,
    dz: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("z_points", &self.nodes.len())
            .field("z_half_width", &self.z_half_width)
            .finish()
    }
}

impl Grid {
    /// Standard grid: power of two with at least 8 points.
    pub fn new(z_points: usize, z_half_width: f64) -> Result<Self> {
        if z_points < 8 || !z_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "z_points must be a power of two >= 8, got {z_points}"
            )));
        }
        Self::build(z_points, z_half_width)
    }

    /// A handful of z-points. Only meaningful for operations that are local in
    /// z, such as checks of the transverse nonlinearity.
    pub fn coarse(z_points: usize, z_half_width: f64) -> Result<Self> {
        if z_points == 0 {
            return Err(Error::InvalidGrid("at least one z-point required".into()));
        }
        Self::build(z_points, z_half_width)
    }

    /// Two-dimensional mode: one z-point of unit weight and no z-dynamics.
    pub fn planar() -> Self {
        let mut planner = FftPlanner::new();
        Self {
            z_half_width: 0.5,
            nodes: vec![0.0],
            wavenumbers: vec![0.0],
            dz: 1.0,
            forward: planner.plan_fft_forward(1),
            inverse: planner.plan_fft_inverse(1),
        }
    }

    fn build(z_points: usize, z_half_width: f64) -> Result<Self> {
        if !(z_half_width.is_finite() && z_half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("bad z half width {z_half_width}")));
        }
        let dz = 2.0 * z_half_width / z_points as f64;
        let mut planner = FftPlanner::new();
        Ok(Self {
            z_half_width,
            nodes: (0..z_points).map(|j| -z_half_width + j as f64 * dz).collect(),
            wavenumbers: fft_wavenumbers(z_points, 2.0 * z_half_width),
            dz,
            forward: planner.plan_fft_forward(z_points),
            inverse: planner.plan_fft_inverse(z_points),
        })
    }

    pub fn z_points(&self) -> usize {
        self.nodes.len()
    }

    pub fn z_half_width(&self) -> f64 {
        self.z_half_width
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn is_planar(&self) -> bool {
        self.nodes.len() == 1
    }

    /// In-place forward FFT of one z-line.
    pub(crate) fn forward(&self, line: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(line, scratch);
    }

    /// In-place normalized inverse FFT of one z-line.
    pub(crate) fn inverse(&self, line: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(line, scratch);
        let s = 1.0 / line.len() as f64;
        line.iter_mut().for_each(|v| *v *= s);
    }

    pub(crate) fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    fn same_as(&self, other: &Grid) -> bool {
        self.nodes.len() == other.nodes.len() && self.z_half_width == other.z_half_width
    }
}

/// Longitudinal confining potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `ω² z² / 2`
    Harmonic { omega: f64 },
    /// `a cos(b z)`
    Cosine { a: f64, b: f64 },
    /// `c₀ + c₁ z + c₂ z²`
    Quadratic { coeffs: [f64; 3] },
}

impl PotentialKind {
    pub fn zero() -> Self {
        PotentialKind::Quadratic { coeffs: [0.0; 3] }
    }

    pub fn value(&self, z: f64) -> f64 {
        match *self {
            PotentialKind::Harmonic { omega } => 0.5 * omega * omega * z * z,
            PotentialKind::Cosine { a, b } => a * (b * z).cos(),
            PotentialKind::Quadratic { coeffs: [c0, c1, c2] } => c0 + c1 * z + c2 * z * z,
        }
    }
}

/// A potential sampled on a grid.
#[derive(Clone, Debug)]
pub struct Potential {
    kind: PotentialKind,
    samples: Vec<f64>,
}

impl Potential {
    pub fn sample(kind: &PotentialKind, grid: &Grid) -> Result<Self> {
        let samples: Vec<f64> = grid.nodes().iter().map(|&z| kind.value(z)).collect();
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("potential is not finite on the grid".into()));
        }
        let p = Self { kind: kind.clone(), samples };
        let curvature = p.max_curvature(grid);
        if !curvature.is_finite() {
            return Err(Error::InvalidParams("potential curvature is unbounded".into()));
        }
        Ok(p)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|&v| v == 0.0)
    }

    /// Largest centered second difference over interior nodes.
    pub fn max_curvature(&self, grid: &Grid) -> f64 {
        let h2 = grid.dz() * grid.dz();
        self.samples
            .windows(3)
            .map(|w| ((w[2] - 2.0 * w[1] + w[0]) / h2).abs())
            .fold(0.0, f64::max)
    }
}

/// Time-step policy for the two solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtPolicy {
    /// Upper bound on the step of the full solver.
    pub dt_base: f64,
    /// The full solver uses `min(dt_base, epsilon_fraction · ε²)`.
    pub epsilon_fraction: f64,
    /// Step of the averaged solver.
    pub dt_averaged: f64,
}

impl Default for DtPolicy {
    fn default() -> Self {
        Self { dt_base: 1e-3, epsilon_fraction: 0.1, dt_averaged: 1e-3 }
    }
}

impl DtPolicy {
    pub fn full_dt(&self, epsilon: f64) -> f64 {
        self.dt_base.min(self.epsilon_fraction * epsilon * epsilon)
    }
}

/// Physical and numerical parameters of one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub epsilon: f64,
    pub lambda: f64,
    pub sigma: u32,
    pub potential: PotentialKind,
    /// Number of θ-nodes of the averaging quadrature.
    pub theta_nodes: usize,
    pub dt: DtPolicy,
    pub sample_times: Vec<f64>,
}

impl SimParams {
    /// Smallest θ-node count allowed by the exactness rule `2(σ+1)(n_max+1)`.
    pub fn theta_nodes_rule(sigma: u32, n_max: usize) -> usize {
        2 * (sigma as usize + 1) * (n_max + 1)
    }

    pub fn validate(&self, n_max: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidParams(format!("epsilon {} outside (0, 1]", self.epsilon)));
        }
        if self.sigma < 1 {
            return Err(Error::InvalidParams("sigma must be a positive integer".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidParams("lambda must be finite".into()));
        }
        let rule = Self::theta_nodes_rule(self.sigma, n_max);
        if self.theta_nodes < rule {
            return Err(Error::InvalidParams(format!(
                "theta_nodes {} below the exactness rule {rule}",
                self.theta_nodes
            )));
        }
        if !(self.dt.dt_base > 0.0 && self.dt.dt_averaged > 0.0 && self.dt.epsilon_fraction > 0.0) {
            return Err(Error::InvalidParams("time steps must be positive".into()));
        }
        Ok(())
    }
}

/// Coefficients `c[n][k][j_z]` of a state in the truncated Landau basis.
#[derive(Clone, Debug)]
pub struct Field {
    coefs: Vec<Complex64>,
    basis: Arc<BasisTables>,
    grid: Arc<Grid>,
}

impl Field {
    pub fn zeros(basis: Arc<BasisTables>, grid: Arc<Grid>) -> Self {
        let len = basis.mode_count() * grid.z_points();
        Self { coefs: vec![Complex64::new(0.0, 0.0); len], basis, grid }
    }

    /// Wrap raw coefficients laid out mode-major: `coefs[mode * z_points + j]`.
    pub fn from_coefs(coefs: Vec<Complex64>, basis: Arc<BasisTables>, grid: Arc<Grid>) -> Result<Self> {
        let len = basis.mode_count() * grid.z_points();
        if coefs.len() != len {
            return Err(Error::Mismatch(format!("expected {len} coefficients, got {}", coefs.len())));
        }
        if coefs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        Ok(Self { coefs, basis, grid })
    }

    pub(crate) fn with_coefs(&self, coefs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coefs.len(), self.coefs.len());
        Self { coefs, basis: self.basis.clone(), grid: self.grid.clone() }
    }

    pub fn coefs(&self) -> &[Complex64] {
        &self.coefs
    }

    pub(crate) fn coefs_mut(&mut self) -> &mut Vec<Complex64> {
        &mut self.coefs
    }

    pub fn basis(&self) -> &Arc<BasisTables> {
        &self.basis
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// The z-line of mode `(n, k)`.
    pub fn line(&self, n: usize, k: usize) -> &[Complex64] {
        let nz = self.grid.z_points();
        let m = self.basis.spec().mode_index(n, k);
        &self.coefs[m * nz..(m + 1) * nz]
    }

    pub fn is_finite(&self) -> bool {
        self.coefs.iter().all(|c| c.is_finite())
    }

    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        let same_basis = Arc::ptr_eq(&self.basis, &other.basis)
            || self.basis.spec() == other.basis.spec();
        let same_grid = Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid);
        if !(same_basis && same_grid) {
            return Err(Error::Mismatch("fields live on different discretizations".into()));
        }
        Ok(())
    }

    pub fn scale(&self, alpha: Complex64) -> Field {
        self.with_coefs(self.coefs.iter().map(|c| alpha * c).collect())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.check_compatible(other)?;
        Ok(self.with_coefs(self.coefs.iter().zip(&other.coefs).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_compatible(other)?;
        Ok(self.with_coefs(self.coefs.iter().zip(&other.coefs).map(|(a, b)| a - b).collect()))
    }

    /// `Σ_{n,k} Σ_z |c|² dz`.
    pub fn mass(&self) -> f64 {
        self.grid.dz() * norm_sqr_sum(&self.coefs)
    }

    /// Mass carried by each Landau level.
    pub fn level_masses(&self) -> Vec<f64> {
        let per = self.basis.per_level() * self.grid.z_points();
        self.coefs
            .chunks(per)
            .map(|c| self.grid.dz() * norm_sqr_sum(c))
            .collect()
    }

    /// `P_n`: keep level `n`, zero the rest.
    pub fn project_level(&self, n: usize) -> Result<Field> {
        let spec = self.basis.spec();
        if n > spec.n_max {
            return Err(Error::OutOfTruncation(format!("level {n} > n_max {}", spec.n_max)));
        }
        let per = self.basis.per_level() * self.grid.z_points();
        let mut coefs = self.coefs.clone();
        for (level, chunk) in coefs.chunks_mut(per).enumerate() {
            if level != n {
                chunk.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            }
        }
        Ok(self.with_coefs(coefs))
    }

    /// Gather the coefficients at z-index `j` into `out[mode]`.
    pub(crate) fn gather_slice(coefs: &[Complex64], nz: usize, j: usize, out: &mut [Complex64]) {
        for (m, c) in out.iter_mut().enumerate() {
            *c = coefs[m * nz + j];
        }
    }

    /// Values on the full `(x₁, x₂, z)` grid, z-major.
    pub fn to_physical(&self) -> PhysicalField {
        let nz = self.grid.z_points();
        let p = self.basis.point_count();
        let mut values = vec![Complex64::new(0.0, 0.0); nz * p];
        let mut slice = vec![Complex64::new(0.0, 0.0); self.basis.mode_count()];
        for (j, out) in values.chunks_mut(p).enumerate() {
            Self::gather_slice(&self.coefs, nz, j, &mut slice);
            self.basis.synthesize_into(&slice, out);
        }
        PhysicalField { values, points: p, z_points: nz }
    }

    /// Galerkin analysis of physical values back onto this discretization.
    pub fn from_physical(phys: &PhysicalField, basis: Arc<BasisTables>, grid: Arc<Grid>) -> Result<Self> {
        if phys.points != basis.point_count() || phys.z_points != grid.z_points() {
            return Err(Error::Mismatch("physical field does not match the discretization".into()));
        }
        let nz = grid.z_points();
        let mut coefs = vec![Complex64::new(0.0, 0.0); basis.mode_count() * nz];
        let mut slice = vec![Complex64::new(0.0, 0.0); basis.mode_count()];
        for j in 0..nz {
            basis.analyze_into(phys.slice(j), &mut slice);
            for (m, c) in slice.iter().enumerate() {
                coefs[m * nz + j] = *c;
            }
        }
        Ok(Self { coefs, basis, grid })
    }
}

/// Values on the tensor `(x₁, x₂, z)` grid; `values[j * points + p]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalField {
    pub values: Vec<Complex64>,
    pub points: usize,
    pub z_points: usize,
}

impl PhysicalField {
    pub fn slice(&self, j: usize) -> &[Complex64] {
        &self.values[j * self.points..(j + 1) * self.points]
    }
}

/// `sqrt(mass(a − b))`.
pub fn l2_error(a: &Field, b: &Field) -> Result<f64> {
    Ok(a.sub(b)?.mass().sqrt())
}

/// Mass of `field`; see [`Field::mass`].
pub fn mass(field: &Field) -> f64 {
    field.mass()
}

/// Per-mode z-lines transformed to Fourier space (unnormalized DFT).
fn z_spectra(field: &Field) -> Vec<Complex64> {
    let grid = field.grid();
    let nz = grid.z_points();
    let mut out = field.coefs().to_vec();
    let mut scratch = vec![Complex64::new(0.0, 0.0); grid.scratch_len()];
    for line in out.chunks_mut(nz) {
        grid.forward(line, &mut scratch);
    }
    out
}

/// `(‖f‖² + ‖H₀f‖² + ‖∂_z²f‖² + ‖z²f‖²)^{1/2}` with `H₀` acting diagonally as
/// `n+k+1`, `∂_z²` as the Fourier multiplier `−k_z²`, and `z²` pointwise.
pub fn sigma2_prime_norm(field: &Field) -> f64 {
    let grid = field.grid();
    let spec = field.basis().spec();
    let nz = grid.z_points();
    let dz = grid.dz();
    let spectra = z_spectra(field);
    let mut terms = Vec::with_capacity(field.coefs().len());
    for (m, line) in field.coefs().chunks(nz).enumerate() {
        let osc = spec.mode_at(m).oscillator_energy();
        let hat = &spectra[m * nz..(m + 1) * nz];
        for (j, c) in line.iter().enumerate() {
            let z = grid.nodes()[j];
            let n2 = c.norm_sqr();
            terms.push(dz * n2 * (1.0 + osc * osc + z.powi(4)));
        }
        // Parseval: Σ_j |g_j|² dz = (dz/N) Σ_k |ĝ_k|²
        for (q, h) in hat.iter().enumerate() {
            let k2 = grid.wavenumbers()[q].powi(2);
            terms.push(dz / nz as f64 * k2 * k2 * h.norm_sqr());
        }
    }
    pairwise_sum(&terms).sqrt()
}

/// Value of the averaged Gross–Pitaevskii energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub potential: f64,
    pub interaction: f64,
    /// Set when the θ-quadrature is below the exactness rule.
    pub underresolved: bool,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential + self.interaction
    }
}

/// `E(φ) = ½∫|∂_zφ|² + ∫V|φ|² + λ/(2π(σ+1)) ∫∫₀^{2π} |e^{−iθH}φ|^{2σ+2} dθ dx dz`,
/// with the θ-integral evaluated by the uniform `theta_nodes` rule.
pub fn energy(field: &Field, params: &SimParams) -> Result<Energy> {
    let grid = field.grid();
    let potential = Potential::sample(&params.potential, grid)?;
    let nz = grid.z_points();
    let dz = grid.dz();

    let spectra = z_spectra(field);
    let kin: Vec<f64> = spectra
        .chunks(nz)
        .flat_map(|hat| {
            hat.iter()
                .zip(grid.wavenumbers())
                .map(|(h, k)| k * k * h.norm_sqr())
                .collect::<Vec<_>>()
        })
        .collect();
    let kinetic = 0.5 * dz / nz as f64 * pairwise_sum(&kin);

    let pot: Vec<f64> = field
        .coefs()
        .chunks(nz)
        .flat_map(|line| {
            line.iter()
                .zip(potential.samples())
                .map(|(c, v)| v * c.norm_sqr())
                .collect::<Vec<_>>()
        })
        .collect();
    let potential_energy = dz * pairwise_sum(&pot);

    let interaction = if params.lambda == 0.0 {
        0.0
    } else {
        let power = nonlinearity::averaged_power_integral(field, params.sigma, params.theta_nodes);
        params.lambda / (params.sigma as f64 + 1.0) * power
    };
    let rule = SimParams::theta_nodes_rule(params.sigma, field.basis().spec().n_max);
    Ok(Energy {
        kinetic,
        potential: potential_energy,
        interaction,
        underresolved: params.theta_nodes < rule,
    })
}

/// Longitudinal profile of initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZProfile {
    /// `exp(−(z−center)²/(2 width²) + i momentum z)`
    Gaussian { center: f64, width: f64, momentum: f64 },
    /// `exp(i 2π q z / (2 L_z))`, periodic on the box.
    PlaneWave { q: i64 },
}

impl ZProfile {
    pub fn ground_state() -> Self {
        ZProfile::Gaussian { center: 0.0, width: 1.0, momentum: 0.0 }
    }

    fn samples(&self, grid: &Grid) -> Vec<Complex64> {
        if grid.is_planar() {
            return vec![Complex64::new(1.0, 0.0)];
        }
        grid.nodes()
            .iter()
            .map(|&z| match *self {
                ZProfile::Gaussian { center, width, momentum } => {
                    let d = (z - center) / width;
                    Complex64::from_polar((-0.5 * d * d).exp(), momentum * z)
                }
                ZProfile::PlaneWave { q } => {
                    Complex64::from_polar(1.0, PI * q as f64 * z / grid.z_half_width())
                }
            })
            .collect()
    }
}

/// Initial-data recipes; the result is always normalized to unit mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    SingleMode { n: usize, k: usize, profile: ZProfile },
    /// Level `n` with the given coefficients over `k = 0, 1, ...`.
    LevelPacket { n: usize, coefficients: Vec<Complex64>, profile: ZProfile },
    /// Arbitrary `(n, k, c)` terms sharing one profile.
    MultiLevelPacket { terms: Vec<(usize, usize, Complex64)>, profile: ZProfile },
}

pub fn make_initial(kind: &InitialData, basis: Arc<BasisTables>, grid: Arc<Grid>) -> Result<Field> {
    let spec = basis.spec().clone();
    let (terms, profile): (Vec<(usize, usize, Complex64)>, &ZProfile) = match kind {
        InitialData::SingleMode { n, k, profile } => (vec![(*n, *k, Complex64::new(1.0, 0.0))], profile),
        InitialData::LevelPacket { n, coefficients, profile } => (
            coefficients.iter().enumerate().map(|(k, c)| (*n, k, *c)).collect(),
            profile,
        ),
        InitialData::MultiLevelPacket { terms, profile } => (terms.clone(), profile),
    };
    if terms.iter().all(|t| t.2.norm() == 0.0) {
        return Err(Error::InvalidInput("initial coefficients are all zero".into()));
    }
    let z = profile.samples(&grid);
    let nz = grid.z_points();
    let mut field = Field::zeros(basis, grid);
    for (n, k, c) in terms {
        if n > spec.n_max || k > spec.k_max {
            return Err(Error::OutOfTruncation(format!("initial mode ({n}, {k})")));
        }
        let m = spec.mode_index(n, k);
        for (j, zv) in z.iter().enumerate() {
            field.coefs[m * nz + j] += c * zv;
        }
    }
    let mass = field.mass();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidInput("initial data has no mass on the grid".into()));
    }
    Ok(field.scale(Complex64::new(mass.sqrt().recip(), 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisSpec, BasisTables};

    fn setup(n_max: usize, k_max: usize) -> (Arc<BasisTables>, Arc<Grid>) {
        let spec = BasisSpec::new(n_max, k_max, 32, BasisSpec::min_half_width(n_max, k_max) + 1.0);
        (Arc::new(BasisTables::build(&spec).unwrap()), Arc::new(Grid::new(64, 8.0).unwrap()))
    }

    fn params(lambda: f64, potential: PotentialKind) -> SimParams {
        SimParams {
            epsilon: 0.1,
            lambda,
            sigma: 1,
            potential,
            theta_nodes: 12,
            dt: DtPolicy::default(),
            sample_times: vec![],
        }
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(4, 8.0).is_err());
        assert!(Grid::new(24, 8.0).is_err());
        assert!(Grid::new(16, -1.0).is_err());
        assert_eq!(Grid::coarse(4, 2.0).unwrap().z_points(), 4);
        assert!(Grid::planar().is_planar());
    }

    #[test]
    fn mass_basics() {
        let (b, g) = setup(1, 1);
        let init = InitialData::SingleMode { n: 1, k: 0, profile: ZProfile::ground_state() };
        let u = make_initial(&init, b.clone(), g.clone()).unwrap();
        assert!((u.mass() - 1.0).abs() < 1e-12);
        assert_eq!(Field::zeros(b, g).mass(), 0.0);
        let a = Complex64::new(0.3, -1.2);
        assert!((u.scale(a).mass() - a.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn initial_data_kinds() {
        let (b, g) = setup(2, 2);
        let lp = InitialData::LevelPacket {
            n: 2,
            coefficients: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5), Complex64::new(-0.2, 0.1)],
            profile: ZProfile::ground_state(),
        };
        let u = make_initial(&lp, b.clone(), g.clone()).unwrap();
        let lm = u.level_masses();
        assert!(lm[0] == 0.0 && lm[1] == 0.0 && (lm[2] - 1.0).abs() < 1e-12);

        let ml = InitialData::MultiLevelPacket {
            terms: vec![(0, 0, Complex64::new(1.0, 0.0)), (1, 2, Complex64::new(0.5, 0.5))],
            profile: ZProfile::Gaussian { center: 0.5, width: 0.8, momentum: 1.0 },
        };
        let u = make_initial(&ml, b.clone(), g.clone()).unwrap();
        let lm = u.level_masses();
        assert!((lm[0] + lm[1] - 1.0).abs() < 1e-12 && lm[2] == 0.0);

        let zero = InitialData::LevelPacket { n: 0, coefficients: vec![Complex64::new(0.0, 0.0)], profile: ZProfile::ground_state() };
        assert!(make_initial(&zero, b.clone(), g.clone()).is_err());
        let outside = InitialData::SingleMode { n: 3, k: 0, profile: ZProfile::ground_state() };
        assert!(matches!(make_initial(&outside, b, g), Err(Error::OutOfTruncation(_))));
    }

    #[test]
    fn projector_algebra() {
        let (b, g) = setup(2, 1);
        let init = InitialData::MultiLevelPacket {
            terms: vec![
                (0, 0, Complex64::new(1.0, 0.0)),
                (1, 1, Complex64::new(0.0, 0.7)),
                (2, 0, Complex64::new(0.4, -0.3)),
            ],
            profile: ZProfile::ground_state(),
        };
        let u = make_initial(&init, b, g).unwrap();
        let p0 = u.project_level(0).unwrap();
        let p00 = p0.project_level(0).unwrap();
        assert_eq!(p0.coefs(), p00.coefs());
        let rest = u.sub(&p0).unwrap();
        assert!((p0.mass() + rest.mass() - u.mass()).abs() < 1e-12);
        let p2 = u.project_level(2).unwrap();
        assert_eq!(p2.project_level(2).unwrap().coefs(), p2.coefs());
        assert!(u.project_level(3).is_err());
    }

    #[test]
    fn sigma2_prime_gaussian_moments() {
        // h = π^{-1/4} e^{-z²/2}: ‖h‖² = 1, ‖h''‖² = ⟨z⁴⟩ − 2⟨z²⟩ + 1 = 3/4, ‖z²h‖² = ⟨z⁴⟩ = 3/4,
        // ‖H₀ φ₀₀‖² = 1; total = √3.5.
        let (b, g) = setup(0, 0);
        let u = make_initial(
            &InitialData::SingleMode { n: 0, k: 0, profile: ZProfile::ground_state() },
            b,
            g,
        )
        .unwrap();
        assert!((sigma2_prime_norm(&u) - 3.5f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn harmonic_ground_energy() {
        let (b, g) = setup(1, 1);
        for (n, k) in [(0, 0), (1, 0), (1, 1)] {
            let u = make_initial(&InitialData::SingleMode { n, k, profile: ZProfile::ground_state() }, b.clone(), g.clone()).unwrap();
            let e = energy(&u, &params(0.0, PotentialKind::Harmonic { omega: 1.0 })).unwrap();
            assert!((e.total() - 0.5).abs() < 1e-8, "{:?}", e);
        }
    }

    #[test]
    fn plane_wave_energy() {
        let (b, g) = setup(0, 0);
        let u = make_initial(
            &InitialData::SingleMode { n: 0, k: 0, profile: ZProfile::PlaneWave { q: 3 } },
            b,
            g.clone(),
        )
        .unwrap();
        let kz = PI * 3.0 / g.z_half_width();
        let e = energy(&u, &params(0.0, PotentialKind::zero())).unwrap();
        assert!((e.total() - 0.5 * kz * kz).abs() < 1e-10);
    }

    #[test]
    fn energy_flags_underresolved_quadrature() {
        let (b, g) = setup(1, 1);
        let u = make_initial(&InitialData::SingleMode { n: 0, k: 0, profile: ZProfile::ground_state() }, b, g).unwrap();
        let mut p = params(1.0, PotentialKind::zero());
        p.theta_nodes = 3;
        assert!(energy(&u, &p).unwrap().underresolved);
        p.theta_nodes = 8;
        assert!(!energy(&u, &p).unwrap().underresolved);
    }

    #[test]
    fn params_validation() {
        let mut p = params(0.5, PotentialKind::zero());
        assert!(p.validate(2).is_ok());
        p.theta_nodes = 5;
        assert!(p.validate(2).is_err());
        p.theta_nodes = 12;
        p.epsilon = 0.0;
        assert!(p.validate(2).is_err());
        p.epsilon = 0.1;
        p.sigma = 0;
        assert!(p.validate(2).is_err());
    }

    #[test]
    fn dt_policy() {
        let d = DtPolicy::default();
        assert_eq!(d.full_dt(0.2), 1e-3);
        assert!((d.full_dt(0.025) - 6.25e-5).abs() < 1e-18);
    }
}
