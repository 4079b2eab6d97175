use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_vec, stream_rng, transition, SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::sysid::Trajectory;

const STANDALONE_SALT: u64 = 3;

/// Quadrotor plant and controller constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UavParams {
    /// Quadratic parasitic drag coefficient, 1/m.
    pub drag: f64,
    pub kp: f64,
    pub kd: f64,
    /// Spatial scale of the mission references, m.
    pub amplitude: f64,
    /// Period of the mission references, s.
    pub period: f64,
    /// Mission reference scales are drawn from `amplitude · [1 − s, 1 + s]`.
    pub amplitude_spread: f64,
    /// Norm limit on the applied acceleration; the recorded input is the
    /// unsaturated command. Zero disables the limit.
    pub accel_limit: f64,
}

impl Default for UavParams {
    fn default() -> Self {
        Self::preset(SystemKind::UavHover)
    }
}

impl UavParams {
    pub fn preset(kind: SystemKind) -> Self {
        match kind {
            SystemKind::UavMission => Self {
                drag: 0.3,
                kp: 2.0,
                kd: 2.5,
                amplitude: 4.0,
                period: 6.0,
                amplitude_spread: 0.2,
                accel_limit: 6.0,
            },
            _ => Self {
                drag: 0.3,
                kp: 1.0,
                kd: 1.5,
                amplitude: 4.0,
                period: 6.0,
                amplitude_spread: 0.2,
                accel_limit: 6.0,
            },
        }
    }

    pub(super) fn validate(&self) -> Result<()> {
        let vals = [
            self.drag,
            self.kp,
            self.kd,
            self.amplitude,
            self.period,
            self.amplitude_spread,
            self.accel_limit,
        ];
        let bad = vals.iter().any(|v| !v.is_finite() || *v < 0.0)
            || self.period == 0.0
            || self.amplitude_spread >= 1.0;
        if bad {
            return Err(Error::InvalidConfig(format!(
                "invalid quadrotor parameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Planar reference path. Positions are `(p_x, p_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Reference {
    FigureEight {
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    /// Sigmoid altitude drop of `depth` centred at `t_mid` with a sinusoidal
    /// lateral sweep.
    DescendingS {
        sweep: f64,
        period: f64,
        depth: f64,
        t_mid: f64,
        width: f64,
    },
    Circle {
        radius: f64,
        period: f64,
        phase: f64,
    },
}

/// Position, velocity and acceleration of a reference at time `t`.
pub(super) struct RefPoint {
    pub p: [f64; 2],
    pub v: [f64; 2],
    pub a: [f64; 2],
}

impl Reference {
    pub(super) fn at(&self, t: f64) -> RefPoint {
        match *self {
            Reference::FigureEight {
                amplitude,
                period,
                phase,
            } => {
                let w = 2.0 * PI / period;
                let s = w * t + phase;
                let half = amplitude / 2.0;
                RefPoint {
                    p: [amplitude * s.sin(), half * (2.0 * s).sin()],
                    v: [amplitude * w * s.cos(), 2.0 * half * w * (2.0 * s).cos()],
                    a: [
                        -amplitude * w * w * s.sin(),
                        -4.0 * half * w * w * (2.0 * s).sin(),
                    ],
                }
            }
            Reference::DescendingS {
                sweep,
                period,
                depth,
                t_mid,
                width,
            } => {
                let w = 2.0 * PI / period;
                let sig = 1.0 / (1.0 + (-(t - t_mid) / width).exp());
                let d1 = sig * (1.0 - sig) / width;
                let d2 = d1 * (1.0 - 2.0 * sig) / width;
                RefPoint {
                    p: [sweep * (w * t).sin(), -depth * sig],
                    v: [sweep * w * (w * t).cos(), -depth * d1],
                    a: [-sweep * w * w * (w * t).sin(), -depth * d2],
                }
            }
            Reference::Circle {
                radius,
                period,
                phase,
            } => {
                let w = 2.0 * PI / period;
                let s = w * t + phase;
                RefPoint {
                    p: [radius * s.cos(), radius * s.sin()],
                    v: [-radius * w * s.sin(), radius * w * s.cos()],
                    a: [-radius * w * w * s.cos(), -radius * w * w * s.sin()],
                }
            }
        }
    }
}

/// Commanded-acceleration policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UavPolicy {
    /// Open-loop constant command.
    Constant { u: [f64; 2] },
    /// PD regulation to the origin plus Gaussian excitation.
    Hover {
        kp: f64,
        kd: f64,
        excitation_std: f64,
    },
    /// PD tracking with acceleration feedforward plus Gaussian excitation.
    Track {
        reference: Reference,
        /// Translation of the reference, m.
        #[serde(default)]
        offset: [f64; 2],
        kp: f64,
        kd: f64,
        excitation_std: f64,
    },
}

impl UavPolicy {
    fn command(&self, t: f64, x: &[f64], rng: &mut impl Rng) -> [f64; 2] {
        let (nominal, std) = match self {
            UavPolicy::Constant { u } => return *u,
            UavPolicy::Hover {
                kp,
                kd,
                excitation_std,
            } => (
                [-kp * x[0] - kd * x[2], -kp * x[1] - kd * x[3]],
                *excitation_std,
            ),
            UavPolicy::Track {
                reference,
                offset,
                kp,
                kd,
                excitation_std,
            } => {
                let r = reference.at(t);
                (
                    [
                        r.a[0] + kp * (r.p[0] + offset[0] - x[0]) + kd * (r.v[0] - x[2]),
                        r.a[1] + kp * (r.p[1] + offset[1] - x[1]) + kd * (r.v[1] - x[3]),
                    ],
                    *excitation_std,
                )
            }
        };
        let e = gaussian_vec(rng, 2, std);
        [nominal[0] + e[0], nominal[1] + e[1]]
    }
}

/// Applied acceleration after the thrust limit.
fn saturate(u: &[f64; 2], limit: f64) -> [f64; 2] {
    let n = u[0].hypot(u[1]);
    if limit > 0.0 && n > limit {
        [u[0] * limit / n, u[1] * limit / n]
    } else {
        *u
    }
}

/// One Euler step of `ṗ = v`, `v̇ = u − c_d‖v‖v + gust`.
fn step(x: &[f64], u: &[f64; 2], gust: &[f64], drag: f64, dt: f64) -> Vec<f64> {
    let speed = x[2].hypot(x[3]);
    vec![
        x[0] + dt * x[2],
        x[1] + dt * x[3],
        x[2] + dt * (u[0] - drag * speed * x[2] + gust[0]),
        x[3] + dt * (u[1] - drag * speed * x[3] + gust[1]),
    ]
}

pub(super) fn simulate_with_rng(
    spec: &SystemSpec,
    gust_std: f64,
    x0: &[f64],
    policy: &UavPolicy,
    t_len: usize,
    rng: &mut impl Rng,
) -> Trajectory {
    let mut x = x0.to_vec();
    let mut traj = Vec::with_capacity(t_len);
    for s in 0..t_len {
        let u = policy.command(s as f64 * spec.dt, &x, rng);
        let gust = gaussian_vec(rng, 2, gust_std);
        let next = step(
            &x,
            &saturate(&u, spec.uav.accel_limit),
            &gust,
            spec.uav.drag,
            spec.dt,
        );
        traj.push(transition(&x, &u, next.clone()));
        x = next;
    }
    traj
}

/// Simulates `t_len` transitions of the planar quadrotor from `x0`, with
/// state `(p_x, p_z, v_x, v_z)` and commanded accelerations as inputs.
pub fn simulate_uav(
    spec: &SystemSpec,
    x0: &[f64],
    policy: &UavPolicy,
    t_len: usize,
    seed: u64,
) -> Result<Trajectory> {
    if spec.kind.is_linear() {
        return Err(Error::InvalidConfig(format!(
            "{} is not a quadrotor system",
            spec.kind.name()
        )));
    }
    spec.validate()?;
    if x0.len() != 4 || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "quadrotor initial state must be 4 finite values".into(),
        ));
    }
    let mut rng = stream_rng(seed, STANDALONE_SALT, 0);
    let gust_std = spec.noise.sample_variance(&mut rng).sqrt();
    Ok(simulate_with_rng(
        spec, gust_std, x0, policy, t_len, &mut rng,
    ))
}

/// Policy for trajectory `index`; mission trajectories cycle through the
/// three reference shapes with a random phase and a jittered scale.
pub(super) fn policy_for(spec: &SystemSpec, index: usize, rng: &mut impl Rng) -> UavPolicy {
    let p = &spec.uav;
    let excitation_std = spec.excitation_std;
    match spec.kind {
        SystemKind::UavMission => {
            let scale = rng.random_range(1.0 - p.amplitude_spread..=1.0 + p.amplitude_spread);
            let phase = rng.random_range(0.0..2.0 * PI);
            let amplitude = p.amplitude * scale;
            let reference = match index % 3 {
                0 => Reference::FigureEight {
                    amplitude,
                    period: p.period,
                    phase,
                },
                1 => Reference::DescendingS {
                    sweep: amplitude,
                    period: p.period,
                    depth: amplitude,
                    t_mid: rng.random_range(1.5..3.5),
                    width: 0.5,
                },
                _ => Reference::Circle {
                    radius: amplitude * 0.75,
                    period: p.period,
                    phase,
                },
            };
            UavPolicy::Track {
                reference,
                offset: [0.0, 0.0],
                kp: p.kp,
                kd: p.kd,
                excitation_std,
            }
        }
        _ => UavPolicy::Hover {
            kp: p.kp,
            kd: p.kd,
            excitation_std,
        },
    }
}

pub(super) fn initial_state(
    spec: &SystemSpec,
    policy: &UavPolicy,
    std: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let off = gaussian_vec(rng, 4, std);
    let base = match policy {
        UavPolicy::Track {
            reference, offset, ..
        } => {
            let r = reference.at(0.0);
            [r.p[0] + offset[0], r.p[1] + offset[1], r.v[0], r.v[1]]
        }
        _ => [0.0; 4],
    };
    let vel_scale = if spec.kind == SystemKind::UavHover {
        0.5
    } else {
        1.0
    };
    vec![
        base[0] + off[0],
        base[1] + off[1],
        base[2] + vel_scale * off[2],
        base[3] + vel_scale * off[3],
    ]
}
