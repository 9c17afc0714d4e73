//! Randomized invariants: round trip and Parseval across grid shapes,
//! truncations and seeds.

use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sht_core::{Sht, SphericalGrid, SpectralCoeffs, Truncation};

fn random_coeffs(trunc: Truncation, seed: u64) -> SpectralCoeffs {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut c = SpectralCoeffs::zeros(trunc, 1);
    for (n, m) in trunc.modes().collect::<Vec<_>>() {
        let s = 1.0 / (1.0 + n as f64);
        let re = s * (rng.gen::<f64>() * 2.0 - 1.0);
        let im = if m == 0 {
            0.0
        } else {
            s * (rng.gen::<f64>() * 2.0 - 1.0)
        };
        c.set(0, n, m, Complex64::new(re, im));
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn round_trip_and_parseval(
        nlat_pow in 4u32..7, // 16, 32, 64 latitudes
        lon_factor in 2usize..4,
        seed in 0u64..1_000_000,
        full in proptest::bool::ANY,
    ) {
        let nlat = 1usize << nlat_pow;
        let nlon = nlat * lon_factor;
        let n_max = if full { nlat - 1 } else { (2 * nlat - 1) / 3 };
        let m_max = n_max.min((nlon - 1) / 2);
        let grid = Arc::new(SphericalGrid::gaussian(nlat, nlon, 1.0).unwrap());
        let sht = Sht::new(grid, Truncation::new(n_max, m_max).unwrap()).unwrap();

        let c = random_coeffs(sht.trunc(), seed);
        let f = sht.inverse(&c).unwrap();
        let c2 = sht.forward(&f).unwrap();

        let mut max_err = 0.0f64;
        for (a, b) in c.data().iter().zip(c2.data()) {
            max_err = max_err.max((a - b).norm());
        }
        prop_assert!(max_err < 1e-9, "round trip err {} on {}x{} T{}", max_err, nlat, nlon, n_max);

        let mut grid_energy = 0.0;
        for i in 0..nlat {
            let w = sht.grid().area_weight(i);
            for j in 0..nlon {
                grid_energy += w * f.value(0, i, j).powi(2);
            }
        }
        let mut spec_energy = 0.0;
        for (n, m) in sht.trunc().modes() {
            let mult = if m == 0 { 1.0 } else { 2.0 };
            spec_energy += mult * c.get(0, n, m).norm_sqr();
        }
        let rel = (grid_energy - spec_energy).abs() / spec_energy.max(1e-300);
        prop_assert!(rel < 1e-10, "Parseval rel err {}", rel);
    }
}
