//! Random weight initialization. Weights are stored `in × out` and applied
//! as `H · W`, so the fan-in is the row count.

use core::fmt;
use core::str::FromStr;

use alloc::format;
use alloc::string::String;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum InitScheme {
    /// Orthonormal columns (tall or square) or rows (wide), via QR of a
    /// Gaussian matrix with the sign of `diag(R)` folded into `Q`.
    #[default]
    Orthogonal,
    /// `N(0, 2 / fan_in)`.
    KaimingNormal,
    /// `U(−√(6 / fan_in), √(6 / fan_in))`.
    KaimingUniform,
}

impl InitScheme {
    pub const ALL: [InitScheme; 3] = [Self::Orthogonal, Self::KaimingNormal, Self::KaimingUniform];

    pub fn name(self) -> &'static str {
        match self {
            Self::Orthogonal => "orthogonal",
            Self::KaimingNormal => "kaiming-normal",
            Self::KaimingUniform => "kaiming-uniform",
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "orthogonal" => Ok(Self::Orthogonal),
            "kaiming-normal" => Ok(Self::KaimingNormal),
            "kaiming-uniform" => Ok(Self::KaimingUniform),
            other => Err(format!("unknown init scheme '{other}'")),
        }
    }
}

pub fn init_matrix(rows: usize, cols: usize, scheme: InitScheme, rng: &mut crate::Rng) -> Matrix {
    match scheme {
        InitScheme::Orthogonal => orthogonal(rows, cols, rng),
        InitScheme::KaimingNormal => kaiming_normal(rows, cols, rng),
        InitScheme::KaimingUniform => kaiming_uniform(rows, cols, rng),
    }
}

pub fn orthogonal(rows: usize, cols: usize, rng: &mut crate::Rng) -> Matrix {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let g = Matrix::from_fn(tall, short, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (mut q, r) = linalg::qr(&g).expect("tall input");
    for j in 0..short {
        if r.get(j, j) < 0.0 {
            for i in 0..tall {
                q.set(i, j, -q.get(i, j));
            }
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

pub fn kaiming_normal(rows: usize, cols: usize, rng: &mut crate::Rng) -> Matrix {
    let std = libm::sqrt(2.0 / rows.max(1) as f64);
    Matrix::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

pub fn kaiming_uniform(rows: usize, cols: usize, rng: &mut crate::Rng) -> Matrix {
    let bound = libm::sqrt(6.0 / rows.max(1) as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// PyTorch-style default for trainable layers: `U(−1/√fan_in, 1/√fan_in)`.
pub fn fan_in_uniform(rows: usize, cols: usize, rng: &mut crate::Rng) -> Matrix {
    let bound = 1.0 / libm::sqrt(rows.max(1) as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_square_and_rectangular() {
        let mut rng = crate::rng_from_seed(0);
        let q = orthogonal(8, 8, &mut rng);
        assert!(q.t_matmul(&q).unwrap().max_abs_diff(&Matrix::identity(8)) <= 1e-10);
        let tall = orthogonal(10, 4, &mut rng);
        assert!(tall.t_matmul(&tall).unwrap().max_abs_diff(&Matrix::identity(4)) <= 1e-10);
        let wide = orthogonal(3, 9, &mut rng);
        assert!(wide.matmul_t(&wide).unwrap().max_abs_diff(&Matrix::identity(3)) <= 1e-10);
        let one = orthogonal(1, 1, &mut rng);
        assert!((one.get(0, 0).abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kaiming_normal_variance() {
        // Monte Carlo over seeds: pooled sample variance of 64×64 draws.
        let mut total = 0.0;
        let mut count = 0.0;
        for seed in 0..8 {
            let mut rng = crate::rng_from_seed(seed);
            let w = kaiming_normal(64, 64, &mut rng);
            total += w.data().iter().map(|v| v * v).sum::<f64>();
            count += w.len() as f64;
        }
        let var = total / count;
        assert!((var - 2.0 / 64.0).abs() <= 0.3 * 2.0 / 64.0, "variance {var}");
    }

    #[test]
    fn kaiming_uniform_bounds() {
        let mut rng = crate::rng_from_seed(1);
        let w = kaiming_uniform(16, 4, &mut rng);
        let b = libm::sqrt(6.0 / 16.0);
        assert!(w.data().iter().all(|v| v.abs() <= b));
    }

    #[test]
    fn parse_names() {
        for s in InitScheme::ALL {
            assert_eq!(s.name().parse::<InitScheme>().unwrap(), s);
        }
        assert_eq!("kaiming_normal".parse::<InitScheme>().unwrap(), InitScheme::KaimingNormal);
        assert!("xavier".parse::<InitScheme>().is_err());
    }
}
