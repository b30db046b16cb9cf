use std::sync::{Arc, OnceLock};

use landau_nls::basis::{BasisSpec, BasisTables};
use landau_nls::experiments::{fit_loglog_slope, random_field, seeded_rng};
use landau_nls::field::{l2_error, Field, Grid};
use landau_nls::nonlinearity::f_av_quadrature;
use landau_nls::propagators::landau_phase;
use num_complex::Complex64;
use proptest::prelude::*;

fn setup() -> (Arc<BasisTables>, Arc<Grid>) {
    static CELL: OnceLock<(Arc<BasisTables>, Arc<Grid>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = BasisSpec::new(2, 2, 16, 10.0);
        (Arc::new(BasisTables::build(&spec).unwrap()), Arc::new(Grid::coarse(3, 2.0).unwrap()))
    })
    .clone()
}

fn field(seed: u64) -> Field {
    let (b, g) = setup();
    random_field(b, g, None, &mut seeded_rng(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn phase_group_law(seed in any::<u64>(), a in -60.0f64..60.0, b in -60.0f64..60.0) {
        let u = field(seed);
        let two = landau_phase(&landau_phase(&u, a).unwrap(), b).unwrap();
        let one = landau_phase(&u, a + b).unwrap();
        prop_assert!(l2_error(&two, &one).unwrap() < 1e-12);
        prop_assert!((one.mass() - u.mass()).abs() < 1e-14);
    }

    #[test]
    fn mass_is_quadratic(seed in any::<u64>(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let u = field(seed);
        let alpha = Complex64::new(re, im);
        let scaled = u.scale(alpha).mass();
        prop_assert!((scaled - alpha.norm_sqr() * u.mass()).abs() <= 1e-13 * (1.0 + scaled));
    }

    #[test]
    fn averaged_nonlinearity_equivariance(seed in any::<u64>(), alpha in -7.0f64..7.0, theta in -20.0f64..20.0) {
        let u = field(seed);
        let f = f_av_quadrature(&u, 1, 12).unwrap().value;
        let gauge = Complex64::from_polar(1.0, alpha);
        let lhs = f_av_quadrature(&u.scale(gauge), 1, 12).unwrap().value;
        prop_assert!(l2_error(&lhs, &f.scale(gauge)).unwrap() < 1e-13);
        let rotated = f_av_quadrature(&landau_phase(&u, theta).unwrap(), 1, 12).unwrap().value;
        let expected = landau_phase(&f, theta).unwrap();
        prop_assert!(l2_error(&rotated, &expected).unwrap() < 1e-13);
    }

    #[test]
    fn averaged_nonlinearity_is_orthogonal_to_state(seed in any::<u64>()) {
        // Re⟨iF_av(u), u⟩ = 0 is what keeps the averaged flow mass-preserving
        let u = field(seed);
        let f = f_av_quadrature(&u, 1, 12).unwrap().value;
        let dz = u.grid().dz();
        let inner: Complex64 = f.coefs().iter().zip(u.coefs()).map(|(a, b)| a * b.conj()).sum::<Complex64>() * dz;
        prop_assert!(inner.im.abs() < 1e-14 * (1.0 + inner.re.abs()));
    }

    #[test]
    fn slope_fit_recovers_power_laws(p in 0.2f64..4.0, scale in 1e-4f64..1e3) {
        let pairs: Vec<(f64, f64)> = [0.3f64, 0.2, 0.1, 0.05, 0.02].iter().map(|&e| (e, scale * e.powf(p))).collect();
        let fit = fit_loglog_slope(&pairs).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-10);
        prop_assert!((fit.intercept - scale.ln()).abs() < 1e-9);
    }
}
