//! Synthetic objectives and datasets: Branin and Hartmann-6 (negated so that
//! larger is better) plus a noisy 1-D sine regression set.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::bayesopt::CandidateGrid;
use crate::data::TrainingSlice;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Branin,
    Hartmann6,
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

/// Branin on its native domain `[-5, 10] x [0, 15]`; minimum 0.397887.
pub fn branin(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    let q = x2 - b * x1 * x1 + c * x1 - 6.0;
    q * q + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

/// Hartmann-6 on `[0, 1]^6`; minimum -3.32237.
pub fn hartmann6(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let r: f64 = (0..6).map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2)).sum();
            HARTMANN_ALPHA[i] * (-r).exp()
        })
        .sum::<f64>()
}

impl Benchmark {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "branin" => Some(Benchmark::Branin),
            "hartmann6" | "hartmann" => Some(Benchmark::Hartmann6),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Branin => "branin",
            Benchmark::Hartmann6 => "hartmann6",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Benchmark::Branin => 2,
            Benchmark::Hartmann6 => 6,
        }
    }

    pub fn bounds(self) -> Vec<(f64, f64)> {
        match self {
            Benchmark::Branin => vec![(-5.0, 10.0), (0.0, 15.0)],
            Benchmark::Hartmann6 => vec![(0.0, 1.0); 6],
        }
    }

    /// Negated objective at a point of the unit cube.
    pub fn value_unit(self, z: &[f64]) -> f64 {
        let x: Vec<f64> = self.bounds().iter().zip(z).map(|(&(lo, hi), &u)| lo + u * (hi - lo)).collect();
        match self {
            Benchmark::Branin => -branin(&x),
            Benchmark::Hartmann6 => -hartmann6(&x),
        }
    }

    /// Best value of the negated objective over the continuous domain.
    pub fn optimum(self) -> f64 {
        match self {
            Benchmark::Branin => -0.397_887_357_729_738,
            Benchmark::Hartmann6 => 3.322_368_011_391_339,
        }
    }

    /// `size` points drawn uniformly from the unit cube, with the negated
    /// objective at each.
    pub fn random_grid(self, size: usize, seed: u64) -> (CandidateGrid, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let points: Vec<f64> = (0..size * d).map(|_| rng.random::<f64>()).collect();
        let values = points.chunks_exact(d).map(|z| self.value_unit(z)).collect();
        (CandidateGrid::new(d, points).expect("grid dimension is positive"), values)
    }
}

/// `y = sin(x) + noise` with `x` uniform on `[lo, hi]`.
pub fn sine_dataset(n: usize, lo: f64, hi: f64, noise_std: f64, seed: u64) -> Result<TrainingSlice> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    let ys = xs
        .iter()
        .map(|x| x.sin() + noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    TrainingSlice::new(1, xs, ys)
}
