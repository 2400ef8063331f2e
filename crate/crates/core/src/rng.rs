//! Seeded sampling helpers shared by synthesis, oracles and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from `seed`; streams for different
/// indices do not depend on how many other streams are drawn.
pub fn stream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform sample from the closed interval `[lo, hi]`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Point uniformly distributed in the `n`-ball of the given radius:
/// a normalized Gaussian direction scaled by `radius · U^{1/n}`.
pub fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    let dir = unit_direction(rng, n);
    let scale = radius * rng.random::<f64>().powf(1.0 / n as f64);
    dir.into_iter().map(|v| v * scale).collect()
}

pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// A value in the box `[lo, hi]`: with probability ½ a uniformly chosen
/// vertex, otherwise uniform in the interior.
pub fn vertex_biased<R: Rng + ?Sized>(rng: &mut R, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    if rng.random_bool(0.5) {
        lo.iter()
            .zip(hi)
            .map(|(l, h)| if rng.random_bool(0.5) { *h } else { *l })
            .collect()
    } else {
        lo.iter().zip(hi).map(|(l, h)| uniform(rng, *l, *h)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = seeded(11);
        for _ in 0..1000 {
            let p = uniform_in_ball(&mut rng, 3, 2.0);
            assert!(p.iter().map(|x| x * x).sum::<f64>() <= 4.0 + 1e-12);
        }
    }

    #[test]
    fn ball_radius_distribution_is_uniform_in_volume() {
        // P(|x| ≤ R/2) = 2^{-n} for a uniform 2-ball.
        let mut rng = seeded(12);
        let total = 20_000;
        let inner = (0..total)
            .filter(|_| {
                let p = uniform_in_ball(&mut rng, 2, 2.0);
                p[0] * p[0] + p[1] * p[1] <= 1.0
            })
            .count();
        let frac = inner as f64 / total as f64;
        assert!((frac - 0.25).abs() < 0.015, "{frac}");
    }

    #[test]
    fn streams_are_reproducible() {
        let a: f64 = stream(5, 3).random();
        let b: f64 = stream(5, 3).random();
        let c: f64 = stream(5, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn vertex_biased_respects_box() {
        let mut rng = seeded(13);
        let (lo, hi) = ([-4.0, -1.0], [4.0, 1.0]);
        let mut vertices = 0;
        for _ in 0..1000 {
            let v = vertex_biased(&mut rng, &lo, &hi);
            assert!(v.iter().zip(lo.iter().zip(&hi)).all(|(x, (l, h))| l <= x && x <= h));
            if v[0].abs() == 4.0 && v[1].abs() == 1.0 {
                vertices += 1;
            }
        }
        assert!((400..600).contains(&vertices));
    }
}
