//! Seed sweeps over a benchmark: generate, fit, score, compare against exact
//! leave-one-out retraining, and aggregate rank metrics.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::{
    decomposition_diagnostics, exact_loto_cost_shift_from, modular_error_bound, score_all,
    DecompositionDiagnostics, RemainderConstants, ScoreTable,
};
use crate::linalg::Matrix;
use crate::lqr::{riccati_artifacts_with, ArtifactOptions};
use crate::metrics::{spearman, topk_jaccard, Aggregate};
use crate::sysid::{fit_ridge, ModelFit, Solver, TrajectoryDataset};
use crate::systems::{
    generate_dataset, generate_heldout, heldout_prediction_scores, DcMotorParams, GenerationConfig,
    MsdParams, NoiseSpec, SystemKind, SystemSpec, UavParams,
};

type Patch = serde_json::Map<String, serde_json::Value>;

/// Replaces the named fields of `base`; unknown names are rejected.
fn overlay<T: Serialize + serde::de::DeserializeOwned>(
    base: &T,
    patch: &Patch,
    what: &str,
) -> Result<T> {
    let mut v = serde_json::to_value(base).expect("parameters serialize");
    let obj = v.as_object_mut().expect("parameters are a struct");
    for (key, val) in patch {
        if !obj.contains_key(key) {
            return Err(Error::InvalidConfig(format!(
                "unknown {what} parameter \"{key}\""
            )));
        }
        obj.insert(key.clone(), val.clone());
    }
    serde_json::from_value(v).map_err(|e| Error::InvalidConfig(format!("{what}: {e}")))
}

/// Benchmark kind with optional overrides of its calibrated preset. The
/// parameter blocks are partial: only the fields given replace the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excitation_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_motor: Option<Patch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msd: Option<Patch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uav: Option<Patch>,
}

impl SystemConfig {
    pub fn new(kind: SystemKind) -> Self {
        Self {
            kind,
            dt: None,
            noise: None,
            excitation_std: None,
            dc_motor: None,
            msd: None,
            uav: None,
        }
    }

    pub fn to_spec(&self) -> Result<SystemSpec> {
        let mut s = SystemSpec::preset(self.kind);
        if let Some(v) = self.dt {
            s.dt = v;
        }
        if let Some(v) = self.noise {
            s.noise = v;
        }
        if let Some(v) = self.excitation_std {
            s.excitation_std = v;
        }
        if let Some(p) = &self.dc_motor {
            s.dc_motor = overlay::<DcMotorParams>(&s.dc_motor, p, "dc_motor")?;
        }
        if let Some(p) = &self.msd {
            s.msd = overlay::<MsdParams>(&s.msd, p, "msd")?;
        }
        if let Some(p) = &self.uav {
            s.uav = overlay::<UavParams>(&s.uav, p, "uav")?;
        }
        Ok(s)
    }
}

/// Optional overrides of the per-kind generation preset; the seed comes
/// from the sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationBounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state_std: Option<f64>,
}

impl GenerationBounds {
    pub fn to_config(&self, kind: SystemKind, seed: u64) -> GenerationConfig {
        let mut g = GenerationConfig::preset(kind, seed);
        if let Some(v) = self.n_trajectories {
            g.n_trajectories = v;
        }
        if let Some(v) = self.t_min {
            g.t_min = v;
        }
        if let Some(v) = self.t_max {
            g.t_max = v;
        }
        if let Some(v) = self.initial_state_std {
            g.initial_state_std = v;
        }
        g
    }
}

/// Cost weight: `"identity"`, a scalar multiple of the identity, or explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Named(String),
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Named("identity".into())
    }
}

impl WeightSpec {
    pub fn resolve(&self, n: usize, name: &str) -> Result<Matrix> {
        let m = match self {
            WeightSpec::Named(s) if s == "identity" => Matrix::identity(n),
            WeightSpec::Named(s) => {
                return Err(Error::InvalidConfig(format!(
                    "{name}: unknown weight \"{s}\""
                )));
            }
            WeightSpec::Scalar(v) => Matrix::identity(n).scale(*v),
            WeightSpec::Rows(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidConfig(format!("{name} must be {n}×{n}")));
                }
                let slices: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                Matrix::from_rows(&slices)
            }
        };
        if m.as_slice().iter().any(|v| !v.is_finite()) || m.asymmetry() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "{name} must be finite and symmetric"
            )));
        }
        Ok(m)
    }
}

fn default_lambda() -> f64 {
    1e-3
}
fn default_top_k() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_heldout() -> usize {
    10_000
}

/// One experiment: a benchmark, a seed sweep, and what to compute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub generation: GenerationBounds,
    pub seeds: Vec<u64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default, rename = "Q", alias = "q")]
    pub q: WeightSpec,
    #[serde(default, rename = "R", alias = "r")]
    pub r: WeightSpec,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default = "default_true")]
    pub run_exact_loto: bool,
    /// Held-out transitions for the prediction-loss check; 0 disables it.
    #[serde(default = "default_heldout")]
    pub heldout_size: usize,
    /// Remainder decomposition for every trajectory (needs the exact sweep).
    #[serde(default = "default_true")]
    pub diagnostics: bool,
    /// External dataset used instead of generation; it is scored once,
    /// labelled with the first seed, and no held-out set is drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub remainder_constants: RemainderConstants,
}

impl ExperimentConfig {
    pub fn new(kind: SystemKind, seeds: Vec<u64>) -> Self {
        Self {
            system: SystemConfig::new(kind),
            generation: GenerationBounds::default(),
            seeds,
            lambda: default_lambda(),
            q: WeightSpec::default(),
            r: WeightSpec::default(),
            top_k: default_top_k(),
            solver: Solver::Dense,
            run_exact_loto: true,
            heldout_size: default_heldout(),
            diagnostics: true,
            dataset: None,
            remainder_constants: RemainderConstants::default(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must be non-empty".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig("lambda must be finite and ≥ 0".into()));
        }
        let spec = self.system.to_spec()?;
        spec.validate()?;
        let (n_x, n_u) = spec.dims();
        self.q.resolve(n_x, "Q")?;
        self.r.resolve(n_u, "R")?;
        if self.dataset.is_none() {
            let g = self.generation.to_config(self.system.kind, self.seeds[0]);
            g.validate()?;
            if self.top_k == 0 || self.top_k > g.n_trajectories {
                return Err(Error::InvalidConfig(format!(
                    "top_k = {} must lie in 1..={}",
                    self.top_k, g.n_trajectories
                )));
            }
        }
        Ok(())
    }
}

/// Rank agreement of the two scores with the exact shifts on one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedMetrics {
    pub spearman_fixed: Option<f64>,
    pub spearman_stoch: Option<f64>,
    pub jaccard_fixed: Option<f64>,
    pub jaccard_stoch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub n_trajectories: usize,
    pub total_transitions: usize,
    pub scored_count: usize,
    pub excluded: Vec<usize>,
    pub cost: f64,
    pub closed_loop_radius: f64,
    pub hessian_condition: f64,
    /// Lag-1 autocorrelation of residual norms within trajectories.
    pub residual_lag1_autocorrelation: f64,
    pub metrics: Option<SeedMetrics>,
    pub heldout_spearman: Option<f64>,
    /// Largest `|ΔĴ_k − five-term sum| / scale` over the diagnosed k.
    pub max_bookkeeping_residual: Option<f64>,
    /// Count of k whose `|IF^stoch_k − ΔĴ_k|` exceeds the modular bound.
    pub bound_violations: Option<usize>,
    #[serde(skip)]
    pub scores: ScoreTable,
    #[serde(skip)]
    pub diagnostics: Vec<(DecompositionDiagnostics, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub spearman_fixed: Option<Aggregate>,
    pub spearman_stoch: Option<Aggregate>,
    pub jaccard_fixed: Option<Aggregate>,
    pub jaccard_stoch: Option<Aggregate>,
    pub heldout_spearman: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedTiming {
    pub seed: u64,
    pub score_pipeline_s: f64,
    pub exact_sweep_s: Option<f64>,
    pub speedup: Option<f64>,
}

/// Wall-clock measurements, kept apart from the deterministic content.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub per_seed: Vec<SeedTiming>,
    pub speedup: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterRow {
    pub seed: u64,
    pub k: usize,
    pub if_stoch: f64,
    pub if_fixed: f64,
    pub delta_j_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub system: SystemKind,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedReport>,
    pub aggregate: AggregateMetrics,
    pub timings: TimingReport,
}

impl ExperimentReport {
    pub fn has_exclusions(&self) -> bool {
        self.seeds.iter().any(|s| !s.excluded.is_empty())
    }

    pub fn scatter_rows(&self) -> Vec<ScatterRow> {
        self.seeds
            .iter()
            .flat_map(|s| {
                s.scores.rows.iter().map(move |r| ScatterRow {
                    seed: s.seed,
                    k: r.k,
                    if_stoch: r.if_stoch,
                    if_fixed: r.if_fixed,
                    delta_j_exact: r.delta_j_exact,
                })
            })
            .collect()
    }

    /// Report JSON; with `include_timings = false` the timing section is
    /// omitted so that repeated runs compare byte for byte.
    pub fn to_json(&self, include_timings: bool) -> String {
        let mut v = serde_json::to_value(self).expect("report is serializable");
        if !include_timings {
            if let Some(obj) = v.as_object_mut() {
                obj.remove("timings");
            }
        }
        serde_json::to_string_pretty(&v).expect("value is serializable")
    }

    pub fn scatter_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seed", "k", "if_stoch", "if_fixed", "delta_j_exact"])
            .expect("in-memory write");
        for r in self.scatter_rows() {
            w.write_record([
                r.seed.to_string(),
                r.k.to_string(),
                r.if_stoch.to_string(),
                r.if_fixed.to_string(),
                r.delta_j_exact.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv emits UTF-8")
    }

    pub fn diagnostics_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "seed",
            "k",
            "delta_j",
            "linear_term",
            "direct_trace",
            "r_ric",
            "r_w",
            "r_cross",
            "r_w_frobenius",
            "bound_w",
            "bound_r_w",
            "bound_ric",
            "bound_cross",
            "delta_theta_norm",
            "modular_bound",
        ])
        .expect("in-memory write");
        for s in &self.seeds {
            for (d, bound) in &s.diagnostics {
                w.write_record([
                    s.seed.to_string(),
                    d.k.to_string(),
                    d.delta_j.to_string(),
                    d.linear_term.to_string(),
                    d.direct_trace.to_string(),
                    d.r_ric.to_string(),
                    d.r_w.to_string(),
                    d.r_cross.to_string(),
                    d.r_w_frobenius.to_string(),
                    d.bound_w.to_string(),
                    d.bound_r_w.to_string(),
                    opt(d.bound_ric),
                    opt(d.bound_cross),
                    d.delta_theta_norm.to_string(),
                    bound.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv emits UTF-8")
    }
}

/// Whether a failure of a leave-one-out refit means "exclude this k".
fn is_exclusion(e: &Error) -> bool {
    matches!(
        e,
        Error::NoStabilizingSolution(_)
            | Error::UnstableClosedLoop(_)
            | Error::NotPositiveDefinite { .. }
    )
}

/// Lag-1 autocorrelation of `‖e_s‖` using consecutive pairs inside each
/// trajectory and the global mean.
pub fn residual_lag1_autocorrelation(fit: &ModelFit) -> f64 {
    let norms: Vec<f64> = fit
        .residuals()
        .iter()
        .map(|e| crate::linalg::norm2(e))
        .collect();
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let var: f64 = norms.iter().map(|r| (r - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let mut cov = 0.0;
    let mut start = 0;
    for &t in fit.lengths() {
        for s in start..start + t - 1 {
            cov += (norms[s] - mean) * (norms[s + 1] - mean);
        }
        start += t;
    }
    cov / var
}

fn hessian_condition(fit: &ModelFit) -> f64 {
    let ev = fit.hessian().symmetric_eigenvalues();
    let lo = ev.first().copied().unwrap_or(0.0);
    let hi = ev.last().copied().unwrap_or(0.0);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn restrict(values: &[f64], keep: &[usize]) -> Vec<f64> {
    keep.iter().map(|&i| values[i]).collect()
}

fn metrics_on(
    scored: &[usize],
    a: &[f64],
    exact: &[f64],
    top_k: usize,
) -> (Option<f64>, Option<f64>) {
    let a = restrict(a, scored);
    let e = restrict(exact, scored);
    let rho = spearman(&a, &e).ok();
    let jac = if top_k <= scored.len() {
        topk_jaccard(&a, &e, top_k).ok()
    } else {
        None
    };
    (rho, jac)
}

/// Everything computed for one dataset plus its timings.
pub fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    data: &TrajectoryDataset,
    heldout: Option<&TrajectoryDataset>,
) -> Result<(SeedReport, SeedTiming)> {
    let n_x = data.n_x();
    let n_u = data.n_u();
    let q = cfg.q.resolve(n_x, "Q")?;
    let r = cfg.r.resolve(n_u, "R")?;
    let opts = ArtifactOptions {
        solver: cfg.solver,
        residual_channel: true,
    };

    let start = Instant::now();
    let fit = fit_ridge(data, cfg.lambda)?;
    let art = riccati_artifacts_with(&fit, &q, &r, fit.w_hat(), opts)?;
    let scores = score_all(&fit, &art)?;
    let score_time = start.elapsed();

    let mut table = ScoreTable::from_scores(&fit, &scores);
    table.score_time = score_time;
    let n = data.num_trajectories();

    let mut excluded = Vec::new();
    let mut metrics = None;
    let mut exact_time: Option<Duration> = None;
    let mut diagnostics = Vec::new();
    let mut max_bookkeeping = None;
    let mut violations = None;
    let mut heldout_spearman = None;

    if cfg.run_exact_loto {
        let start = Instant::now();
        let mut exact = vec![f64::NAN; n];
        for (k, slot) in exact.iter_mut().enumerate() {
            match exact_loto_cost_shift_from(data, cfg.lambda, &q, &r, k, art.cost) {
                Ok(v) => *slot = v,
                Err(e) if is_exclusion(&e) => excluded.push(k),
                Err(e) => return Err(e),
            }
        }
        exact_time = Some(start.elapsed());
        table.refit_time = exact_time;

        let scored: Vec<usize> = (0..n).filter(|k| !excluded.contains(k)).collect();
        for (k, row) in table.rows.iter_mut().enumerate() {
            row.excluded = excluded.contains(&k);
            row.delta_j_exact = (!row.excluded).then_some(exact[k]);
        }
        let fixed: Vec<f64> = scores.iter().map(|s| s.if_fixed).collect();
        let stoch: Vec<f64> = scores.iter().map(|s| s.if_stoch).collect();
        let (spearman_fixed, jaccard_fixed) = metrics_on(&scored, &fixed, &exact, cfg.top_k);
        let (spearman_stoch, jaccard_stoch) = metrics_on(&scored, &stoch, &exact, cfg.top_k);
        metrics = Some(SeedMetrics {
            spearman_fixed,
            spearman_stoch,
            jaccard_fixed,
            jaccard_stoch,
        });

        if cfg.diagnostics {
            let mut worst: f64 = 0.0;
            let mut bad = 0;
            for &k in &scored {
                let d = decomposition_diagnostics(
                    data,
                    &fit,
                    &art,
                    &q,
                    &r,
                    k,
                    cfg.remainder_constants,
                )?;
                let bound = modular_error_bound(&fit, &art, k, &d.delta_theta, &d)?;
                let row = &mut table.rows[k];
                row.r_ric = Some(d.r_ric);
                row.r_w = Some(d.r_w);
                row.r_cross = Some(d.r_cross);
                worst =
                    worst.max(d.bookkeeping_residual().abs() / d.scale().max(f64::MIN_POSITIVE));
                if (scores[k].if_stoch - d.delta_j).abs() > bound * (1.0 + 1e-9) + 1e-15 {
                    bad += 1;
                }
                diagnostics.push((d, bound));
            }
            max_bookkeeping = Some(worst);
            violations = Some(bad);
        }

        if let Some(h) = heldout {
            let hs = heldout_prediction_scores(&fit, h, data, cfg.lambda)?;
            heldout_spearman = spearman(&hs.if_pred, &hs.delta_l_exact).ok();
        }
    }

    let score_s = score_time.as_secs_f64();
    let timing = SeedTiming {
        seed,
        score_pipeline_s: score_s,
        exact_sweep_s: exact_time.map(|d| d.as_secs_f64()),
        speedup: exact_time.map(|d| d.as_secs_f64() / score_s.max(f64::MIN_POSITIVE)),
    };
    let report = SeedReport {
        seed,
        n_trajectories: n,
        total_transitions: data.total_transitions(),
        scored_count: n - excluded.len(),
        excluded,
        cost: art.cost,
        closed_loop_radius: art.acl.spectral_radius(),
        hessian_condition: hessian_condition(&fit),
        residual_lag1_autocorrelation: residual_lag1_autocorrelation(&fit),
        metrics,
        heldout_spearman,
        max_bookkeeping_residual: max_bookkeeping,
        bound_violations: violations,
        scores: table,
        diagnostics,
    };
    Ok((report, timing))
}

fn aggregate(values: impl Iterator<Item = Option<f64>>) -> Option<Aggregate> {
    let v: Vec<f64> = values.flatten().collect();
    Aggregate::of(&v)
}

/// Runs every seed of `cfg` serially.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let spec = cfg.system.to_spec()?;
    let mut seeds = Vec::new();
    let mut timings = Vec::new();
    if let Some(path) = &cfg.dataset {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let data = TrajectoryDataset::from_json_str(&text)?;
        if (data.n_x(), data.n_u()) != spec.dims() {
            return Err(Error::InvalidDataset(format!(
                "dataset is {}/{} but {} expects {:?}",
                data.n_x(),
                data.n_u(),
                spec.kind.name(),
                spec.dims()
            )));
        }
        if cfg.top_k > data.num_trajectories() {
            return Err(Error::InvalidConfig(
                "top_k exceeds the trajectory count".into(),
            ));
        }
        let (rep, t) = run_seed(cfg, cfg.seeds[0], &data, None)?;
        seeds.push(rep);
        timings.push(t);
    } else {
        for &seed in &cfg.seeds {
            let gen = cfg.generation.to_config(spec.kind, seed);
            let data = generate_dataset(&spec, &gen)?;
            let heldout = if cfg.run_exact_loto && cfg.heldout_size > 0 {
                Some(generate_heldout(&spec, &gen, cfg.heldout_size)?)
            } else {
                None
            };
            let (rep, t) = run_seed(cfg, seed, &data, heldout.as_ref())?;
            seeds.push(rep);
            timings.push(t);
        }
    }
    let metric = |f: fn(&SeedMetrics) -> Option<f64>| {
        aggregate(seeds.iter().map(|s| s.metrics.as_ref().and_then(f)))
    };
    let agg = AggregateMetrics {
        spearman_fixed: metric(|m| m.spearman_fixed),
        spearman_stoch: metric(|m| m.spearman_stoch),
        jaccard_fixed: metric(|m| m.jaccard_fixed),
        jaccard_stoch: metric(|m| m.jaccard_stoch),
        heldout_spearman: aggregate(seeds.iter().map(|s| s.heldout_spearman)),
    };
    let speedup = aggregate(timings.iter().map(|t| t.speedup));
    Ok(ExperimentReport {
        system: spec.kind,
        config: cfg.clone(),
        seeds,
        aggregate: agg,
        timings: TimingReport {
            per_seed: timings,
            speedup,
        },
    })
}
