use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_vec, transition};
use crate::linalg::{expm, Matrix};
use crate::sysid::Trajectory;

/// Armature-controlled DC motor, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcMotorParams {
    pub inertia: f64,
    pub friction: f64,
    pub torque_constant: f64,
    pub resistance: f64,
    pub inductance: f64,
}

impl Default for DcMotorParams {
    fn default() -> Self {
        Self {
            inertia: 0.01,
            friction: 0.1,
            torque_constant: 0.01,
            resistance: 1.0,
            inductance: 0.5,
        }
    }
}

/// Two masses joined by springs and dampers, the first also anchored to a wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsdParams {
    pub m1: f64,
    pub m2: f64,
    pub k1: f64,
    pub k2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for MsdParams {
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            k1: 1.0,
            k2: 1.0,
            c1: 0.5,
            c2: 0.5,
        }
    }
}

/// State (ω, i), input voltage; zero-order-hold discretization.
pub fn dc_motor_matrices(p: &DcMotorParams, dt: f64) -> (Matrix, Matrix) {
    let (j, b, k, r, l) = (
        p.inertia,
        p.friction,
        p.torque_constant,
        p.resistance,
        p.inductance,
    );
    // augmented [[Ac, Bc], [0, 0]] so one exponential yields both A and B
    let mut aug = Matrix::zeros(3, 3);
    aug[(0, 0)] = -b / j;
    aug[(0, 1)] = k / j;
    aug[(1, 0)] = -k / l;
    aug[(1, 1)] = -r / l;
    aug[(1, 2)] = 1.0 / l;
    let e = expm(&aug.scale(dt));
    let a = Matrix::from_fn(2, 2, |i, c| e[(i, c)]);
    let bm = Matrix::from_fn(2, 1, |i, _| e[(i, 2)]);
    (a, bm)
}

/// State (q₁, q₂, q̇₁, q̇₂), one force per mass; forward Euler.
pub fn msd_matrices(p: &MsdParams, dt: f64) -> (Matrix, Matrix) {
    let mut ac = Matrix::zeros(4, 4);
    ac[(0, 2)] = 1.0;
    ac[(1, 3)] = 1.0;
    ac[(2, 0)] = -(p.k1 + p.k2) / p.m1;
    ac[(2, 1)] = p.k2 / p.m1;
    ac[(2, 2)] = -(p.c1 + p.c2) / p.m1;
    ac[(2, 3)] = p.c2 / p.m1;
    ac[(3, 0)] = p.k2 / p.m2;
    ac[(3, 1)] = -p.k2 / p.m2;
    ac[(3, 2)] = p.c2 / p.m2;
    ac[(3, 3)] = -p.c2 / p.m2;
    let a = &Matrix::identity(4) + &ac.scale(dt);
    let mut b = Matrix::zeros(4, 2);
    b[(2, 0)] = dt / p.m1;
    b[(3, 1)] = dt / p.m2;
    (a, b)
}

pub(super) fn simulate(
    a: &Matrix,
    b: &Matrix,
    noise_variance: f64,
    excitation_std: f64,
    x0_std: f64,
    t_len: usize,
    rng: &mut impl Rng,
) -> Trajectory {
    let n_x = a.rows();
    let n_u = b.cols();
    let noise_std = noise_variance.sqrt();
    let mut x = gaussian_vec(rng, n_x, x0_std);
    let mut traj = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let u = gaussian_vec(rng, n_u, excitation_std);
        let w = gaussian_vec(rng, n_x, noise_std);
        let ax = a.matvec(&x);
        let bu = b.matvec(&u);
        let next: Vec<f64> = (0..n_x).map(|i| ax[i] + bu[i] + w[i]).collect();
        traj.push(transition(&x, &u, next.clone()));
        x = next;
    }
    traj
}
