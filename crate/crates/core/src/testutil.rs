//! Small seeded-randomness helpers shared by unit and integration tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::poly::MultiPoly;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_point(rng: &mut ChaCha8Rng, nvars: usize, scale: f64) -> Vec<f64> {
    (0..nvars).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Random polynomial with a handful of terms of total degree <= max_deg.
pub fn random_poly(rng: &mut ChaCha8Rng, nvars: usize, max_deg: u16) -> MultiPoly {
    let mut p = MultiPoly::zero(nvars);
    let nterms = rng.random_range(2..6);
    for _ in 0..nterms {
        let mut e = vec![0u16; nvars];
        let deg = rng.random_range(1..=max_deg);
        for _ in 0..deg {
            let v = rng.random_range(0..nvars);
            e[v] += 1;
        }
        p.add_term(e, rng.random_range(-1.0..1.0));
    }
    p
}

/// Least-squares slope of log(err) against log(h).
pub fn fit_loglog_slope(hs: &[f64], errs: &[f64]) -> f64 {
    assert_eq!(hs.len(), errs.len());
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.max(1e-300).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

/// Random quadratic-only polynomial (every term has total degree 2).
pub fn random_quadratic(rng: &mut ChaCha8Rng, nvars: usize, scale: f64) -> MultiPoly {
    let mut p = MultiPoly::zero(nvars);
    for i in 0..nvars {
        for j in i..nvars {
            let mut e = vec![0u16; nvars];
            e[i] += 1;
            e[j] += 1;
            p.add_term(e, rng.random_range(-scale..scale));
        }
    }
    p
}
