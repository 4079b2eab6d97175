//! Benchmark systems and seeded dataset generation.
//!
//! Two linear plants (a DC motor and a two-mass spring-damper chain) and a
//! planar point-mass quadrotor with quadratic drag flown either near hover or
//! along aggressive references. Every trajectory draws from its own random
//! stream derived from `(seed, trajectory index)`, so generation order does
//! not change the data.

mod heldout;
mod linear;
mod uav;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sysid::{Trajectory, TrajectoryDataset, Transition};

pub use heldout::{heldout_prediction_scores, HeldoutScores};
pub use linear::{dc_motor_matrices, msd_matrices, DcMotorParams, MsdParams};
pub use uav::{simulate_uav, Reference, UavParams, UavPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    DcMotor,
    Msd,
    UavHover,
    UavMission,
}

impl SystemKind {
    pub fn dims(self) -> (usize, usize) {
        match self {
            SystemKind::DcMotor => (2, 1),
            SystemKind::Msd | SystemKind::UavHover | SystemKind::UavMission => (4, 2),
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, SystemKind::DcMotor | SystemKind::Msd)
    }

    pub const ALL: [SystemKind; 4] = [
        SystemKind::DcMotor,
        SystemKind::Msd,
        SystemKind::UavHover,
        SystemKind::UavMission,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::DcMotor => "dc_motor",
            SystemKind::Msd => "msd",
            SystemKind::UavHover => "uav_hover",
            SystemKind::UavMission => "uav_mission",
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown system '{s}'")))
    }
}

/// Process noise. For the linear plants the variance multiplies `I_{n_x}`;
/// for the quadrotor it is the variance of each gust acceleration component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseSpec {
    Homogeneous {
        variance: f64,
    },
    /// One variance per trajectory, drawn uniformly from `[var_min, var_max]`.
    PerTrajectory {
        var_min: f64,
        var_max: f64,
    },
}

impl NoiseSpec {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Homogeneous { variance } => variance >= 0.0 && variance.is_finite(),
            NoiseSpec::PerTrajectory { var_min, var_max } => {
                var_min >= 0.0 && var_max >= var_min && var_max.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid noise spec {self:?}")))
        }
    }

    pub(crate) fn sample_variance(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            NoiseSpec::Homogeneous { variance } => variance,
            NoiseSpec::PerTrajectory { var_min, var_max } => {
                if var_max > var_min {
                    rng.random_range(var_min..=var_max)
                } else {
                    var_min
                }
            }
        }
    }
}

/// Fully resolved benchmark system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub dt: f64,
    pub noise: NoiseSpec,
    /// Standard deviation of the zero-mean Gaussian input excitation.
    pub excitation_std: f64,
    pub dc_motor: DcMotorParams,
    pub msd: MsdParams,
    pub uav: UavParams,
}

impl SystemSpec {
    /// Calibrated defaults for each benchmark.
    pub fn preset(kind: SystemKind) -> Self {
        let (dt, noise, excitation_std) = match kind {
            SystemKind::DcMotor => (0.1, NoiseSpec::Homogeneous { variance: 0.1 }, 0.3),
            SystemKind::Msd => (
                0.05,
                NoiseSpec::PerTrajectory {
                    var_min: 0.01,
                    var_max: 1.0,
                },
                4.0,
            ),
            SystemKind::UavHover => (
                0.1,
                NoiseSpec::Homogeneous {
                    variance: 0.3 * 0.3,
                },
                0.5,
            ),
            SystemKind::UavMission => (
                0.1,
                NoiseSpec::Homogeneous {
                    variance: 0.5 * 0.5,
                },
                0.5,
            ),
        };
        Self {
            kind,
            dt,
            noise,
            excitation_std,
            dc_motor: DcMotorParams::default(),
            msd: MsdParams::default(),
            uav: UavParams::preset(kind),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.kind.dims()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !(self.excitation_std >= 0.0 && self.excitation_std.is_finite()) {
            return Err(Error::InvalidConfig("excitation_std must be ≥ 0".into()));
        }
        self.noise.validate()?;
        if !self.kind.is_linear() {
            self.uav.validate()?;
        }
        Ok(())
    }

    /// True `(A, B)` of the linear plants.
    pub fn linear_matrices(&self) -> Option<(Matrix, Matrix)> {
        match self.kind {
            SystemKind::DcMotor => Some(dc_motor_matrices(&self.dc_motor, self.dt)),
            SystemKind::Msd => Some(msd_matrices(&self.msd, self.dt)),
            _ => None,
        }
    }
}

/// Trajectory count, length range, seed and initial-state spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_trajectories: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub seed: u64,
    /// Standard deviation of the initial state (linear plants) or of the
    /// initial position offset (quadrotor).
    pub initial_state_std: f64,
}

impl GenerationConfig {
    pub fn preset(kind: SystemKind, seed: u64) -> Self {
        let (n, t_min, t_max, x0) = match kind {
            SystemKind::DcMotor => (50, 5, 40, 1.0),
            SystemKind::Msd => (50, 5, 40, 3.0),
            SystemKind::UavHover => (30, 20, 60, 0.5),
            SystemKind::UavMission => (30, 30, 60, 0.2),
        };
        Self {
            n_trajectories: n,
            t_min,
            t_max,
            seed,
            initial_state_std: x0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories < 2 {
            return Err(Error::InvalidConfig(
                "need at least two trajectories".into(),
            ));
        }
        if self.t_min < 1 || self.t_max < self.t_min {
            return Err(Error::InvalidConfig(format!(
                "length bounds {}..={} are invalid",
                self.t_min, self.t_max
            )));
        }
        if !(self.initial_state_std >= 0.0 && self.initial_state_std.is_finite()) {
            return Err(Error::InvalidConfig("initial_state_std must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Random stream for trajectory `index` of dataset `seed`; `salt` separates
/// training data from held-out data.
pub(crate) fn stream_rng(seed: u64, salt: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((salt << 40) ^ index);
    rng
}

pub(crate) fn gaussian_vec(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, std).expect("finite standard deviation");
    (0..n).map(|_| normal.sample(rng)).collect()
}

const TRAIN_SALT: u64 = 1;
const HELDOUT_SALT: u64 = 2;

/// Simulates one trajectory of `t_len` transitions on its own stream.
fn generate_trajectory(
    spec: &SystemSpec,
    cfg: &GenerationConfig,
    rng: &mut ChaCha8Rng,
    index: usize,
    t_len: usize,
) -> Trajectory {
    let variance = spec.noise.sample_variance(rng);
    match spec.kind {
        SystemKind::DcMotor | SystemKind::Msd => {
            let (a, b) = spec.linear_matrices().expect("linear kind");
            linear::simulate(
                &a,
                &b,
                variance,
                spec.excitation_std,
                cfg.initial_state_std,
                t_len,
                rng,
            )
        }
        SystemKind::UavHover | SystemKind::UavMission => {
            let policy = uav::policy_for(spec, index, rng);
            let x0 = uav::initial_state(spec, &policy, cfg.initial_state_std, rng);
            uav::simulate_with_rng(spec, variance.sqrt(), &x0, &policy, t_len, rng)
        }
    }
}

/// Seeded training dataset.
pub fn generate_dataset(spec: &SystemSpec, cfg: &GenerationConfig) -> Result<TrajectoryDataset> {
    spec.validate()?;
    cfg.validate()?;
    let (n_x, n_u) = spec.dims();
    let trajs = (0..cfg.n_trajectories)
        .map(|k| {
            let mut rng = stream_rng(cfg.seed, TRAIN_SALT, k as u64);
            let t_len = rng.random_range(cfg.t_min..=cfg.t_max);
            generate_trajectory(spec, cfg, &mut rng, k, t_len)
        })
        .collect();
    TrajectoryDataset::new(n_x, n_u, trajs)
}

/// Held-out set of exactly `size` one-step transitions drawn from the same
/// trajectory distribution on independent streams.
pub fn generate_heldout(
    spec: &SystemSpec,
    cfg: &GenerationConfig,
    size: usize,
) -> Result<TrajectoryDataset> {
    spec.validate()?;
    cfg.validate()?;
    if size == 0 {
        return Err(Error::InvalidConfig(
            "held-out size must be positive".into(),
        ));
    }
    let (n_x, n_u) = spec.dims();
    let mut trajs: Vec<Trajectory> = Vec::new();
    let mut count = 0;
    let mut index = 0u64;
    while count < size {
        let mut rng = stream_rng(cfg.seed, HELDOUT_SALT, index);
        let t_len = rng.random_range(cfg.t_min..=cfg.t_max).min(size - count);
        let traj = generate_trajectory(spec, cfg, &mut rng, index as usize, t_len);
        count += traj.len();
        trajs.push(traj);
        index += 1;
    }
    TrajectoryDataset::new(n_x, n_u, trajs)
}

pub(crate) fn transition(x: &[f64], u: &[f64], x_next: Vec<f64>) -> Transition {
    Transition {
        x: x.to_vec(),
        u: u.to_vec(),
        x_next,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    #[test]
    fn kind_names_round_trip() {
        for k in SystemKind::ALL {
            assert_eq!(k.name().parse::<SystemKind>().unwrap(), k);
            assert_eq!(
                serde_json::to_string(&k).unwrap(),
                format!("\"{}\"", k.name())
            );
        }
        assert!("quadrotor".parse::<SystemKind>().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in [
            SystemKind::DcMotor,
            SystemKind::Msd,
            SystemKind::UavHover,
            SystemKind::UavMission,
        ] {
            let spec = SystemSpec::preset(kind);
            let cfg = GenerationConfig::preset(kind, 17);
            let a = generate_dataset(&spec, &cfg).unwrap();
            let b = generate_dataset(&spec, &cfg).unwrap();
            assert_eq!(a.to_json_string(), b.to_json_string());
            assert_eq!(a.num_trajectories(), cfg.n_trajectories);
            assert_eq!(a.n_x(), kind.dims().0);
        }
    }

    #[test]
    fn different_seeds_differ() {
        let spec = SystemSpec::preset(SystemKind::DcMotor);
        let a = generate_dataset(&spec, &GenerationConfig::preset(SystemKind::DcMotor, 1)).unwrap();
        let b = generate_dataset(&spec, &GenerationConfig::preset(SystemKind::DcMotor, 2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn dc_motor_sizes_and_bounded_states() {
        let spec = SystemSpec::preset(SystemKind::DcMotor);
        let cfg = GenerationConfig::preset(SystemKind::DcMotor, 3);
        let data = generate_dataset(&spec, &cfg).unwrap();
        let m = data.total_transitions();
        assert!((250..=2000).contains(&m), "M = {m}");
        assert!(data.lengths().iter().all(|&t| (5..=40).contains(&t)));
        assert!(data.transitions().all(|t| norm2(&t.x) < 1e6));
    }

    #[test]
    fn heldout_has_exact_size() {
        let spec = SystemSpec::preset(SystemKind::Msd);
        let cfg = GenerationConfig::preset(SystemKind::Msd, 5);
        let h = generate_heldout(&spec, &cfg, 1234).unwrap();
        assert_eq!(h.total_transitions(), 1234);
        let train = generate_dataset(&spec, &cfg).unwrap();
        assert_ne!(h.trajectory(0).unwrap()[0], train.trajectory(0).unwrap()[0]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let spec = SystemSpec::preset(SystemKind::DcMotor);
        let mut cfg = GenerationConfig::preset(SystemKind::DcMotor, 0);
        cfg.t_min = 10;
        cfg.t_max = 5;
        assert!(matches!(
            generate_dataset(&spec, &cfg),
            Err(Error::InvalidConfig(_))
        ));
        let mut cfg = GenerationConfig::preset(SystemKind::DcMotor, 0);
        cfg.n_trajectories = 1;
        assert!(generate_dataset(&spec, &cfg).is_err());
        let mut bad = spec.clone();
        bad.noise = NoiseSpec::PerTrajectory {
            var_min: 1.0,
            var_max: 0.5,
        };
        assert!(generate_dataset(&bad, &GenerationConfig::preset(SystemKind::DcMotor, 0)).is_err());
    }
}
