#![allow(dead_code)]

use homoglab::laminate::LaminateSpec;
use homoglab::{SymMat, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng, d: usize) -> Vector {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = Vector::new(&v).unwrap();
        if v.norm() > 0.1 {
            return v.normalized();
        }
    }
}

/// BᵀB with B of size `rank`×d and uniform entries in (−1, 1).
pub fn psd_of_rank(rng: &mut impl Rng, d: usize, rank: usize) -> SymMat {
    let mut m = SymMat::zeros(d);
    for _ in 0..rank {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m = m + SymMat::outer(&Vector::new(&v).unwrap());
    }
    m
}

/// Random PSD phase: full rank, singular, or zero on the normal, evenly mixed.
pub fn random_phase(rng: &mut impl Rng, d: usize) -> SymMat {
    let rank = rng.gen_range(0..=d);
    psd_of_rank(rng, d, rank)
}

pub fn random_spec(rng: &mut impl Rng, d: usize) -> LaminateSpec {
    let a1 = random_phase(rng, d);
    let a2 = random_phase(rng, d);
    let theta = rng.gen_range(0.01..0.99);
    LaminateSpec::new(a1, a2, theta, unit_vector(rng, d)).unwrap()
}

/// I − η⊗η/|η|².
pub fn complement_projector(eta: &Vector) -> SymMat {
    let d = eta.dim();
    SymMat::identity(d) - SymMat::outer(&eta.normalized())
}

/// A rank-two 3×3 PSD matrix with kernel η: (random PD) conjugated onto η⊥.
pub fn rank_two_with_kernel(rng: &mut impl Rng, eta: &Vector) -> SymMat {
    let p = complement_projector(eta);
    let b = psd_of_rank(rng, 3, 3) + SymMat::identity(3) * 0.2;
    let pp = homogenize_helpers::sandwich(&p, &b);
    pp
}

pub mod homogenize_helpers {
    use homoglab::SymMat;

    /// p b p for symmetric p.
    pub fn sandwich(p: &SymMat, b: &SymMat) -> SymMat {
        let d = p.dim();
        let mut rows = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        s += p.get(i, k) * b.get(k, l) * p.get(l, j);
                    }
                }
                rows[i][j] = s;
            }
        }
        for i in 0..d {
            for j in 0..i {
                let avg = 0.5 * (rows[i][j] + rows[j][i]);
                rows[i][j] = avg;
                rows[j][i] = avg;
            }
        }
        SymMat::from_rows(&rows).unwrap()
    }
}

/// Random 2D spec with A1 = ξ⊗ξ, A2 random PD, normal e1.
pub fn spec_2d(rng: &mut impl Rng, xi: &Vector) -> LaminateSpec {
    let a2 = psd_of_rank(rng, 2, 2) + SymMat::identity(2) * 0.1;
    LaminateSpec::along_e1(SymMat::outer(xi), a2, rng.gen_range(0.05..0.95)).unwrap()
}

/// Largest entry difference relative to the largest entry of `b`.
pub fn rel_max(a: &SymMat, b: &SymMat) -> f64 {
    (*a - *b).max_abs() / b.max_abs().max(f64::MIN_POSITIVE)
}
