//! Pathwise stochastic integration on dyadically sampled paths.
//!
//! A sampled path holds `2^L + 1` values on the grid `k 2^-L` of `[0, 1]`.
//! The level-`l` approximation of `int q dX` is the left-point Riemann sum
//! on the coarsened path at mesh `2^-l`. Quadratic variation is
//! `<X>_t = X_t X_t' - X_0 X_0' - int X dX' - int dX X'`, and the diffusion
//! characteristic `beta_t` is estimated by the largest difference quotient
//! of `<X>` over a window of dyadic scales.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LEVEL: u32 = 14;
pub const MAX_LEVEL: u32 = 22;
pub const DEFAULT_WINDOW: u32 = 6;
/// Level-to-level distances must shrink at least by this factor over three
/// levels.
pub const CAUCHY_RATIO: f64 = 0.9;
/// Distances below this count as converged regardless of the ratio.
pub const CAUCHY_FLOOR: f64 = 1e-12;

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub level: u32,
    pub dim: usize,
    /// `values[k]` is the state at time `k 2^-level`.
    pub values: Vec<Vec<f64>>,
    pub seed: Option<u64>,
    pub generator: String,
}

impl SampledPath {
    pub fn new(level: u32, values: Vec<Vec<f64>>, generator: &str) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::Resolution {
                requested: level,
                available: MAX_LEVEL,
            });
        }
        if values.len() != (1usize << level) + 1 {
            return Err(Error::Config(format!(
                "a level-{level} path needs {} values, got {}",
                (1usize << level) + 1,
                values.len()
            )));
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Config("path values must be finite vectors of one dimension".into()));
        }
        Ok(Self {
            level,
            dim,
            values,
            seed: None,
            generator: generator.to_string(),
        })
    }

    /// Samples a deterministic path `t -> f(t)` at level `level`.
    pub fn from_fn(level: u32, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let n = 1usize << level.min(MAX_LEVEL);
        Self::new(level, (0..=n).map(|k| f(k as f64 / n as f64)).collect(), "deterministic")
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.steps() as f64
    }

    /// The even-index subsequence down to `level`.
    pub fn coarsen(&self, level: u32) -> Result<Self> {
        if level > self.level {
            return Err(Error::Resolution {
                requested: level,
                available: self.level,
            });
        }
        let stride = 1usize << (self.level - level);
        Ok(Self {
            level,
            dim: self.dim,
            values: self.values.iter().step_by(stride).cloned().collect(),
            seed: self.seed,
            generator: self.generator.clone(),
        })
    }
}

/// An adapted integrand: the position held over `[t, t + dt)` given the
/// path up to and including `t`.
pub trait Integrand: Sync {
    fn eval(&self, t: f64, prefix: &[Vec<f64>]) -> Vec<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegrandSpec {
    Constant { value: Vec<f64> },
    /// `q_t = X_t`.
    Identity,
    /// `q_t = values[i]` for `times[i] <= t < times[i + 1]`; zero before
    /// `times[0]`.
    Piecewise { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl IntegrandSpec {
    /// Sup norm of the integrand when known in advance.
    pub fn bound(&self) -> Option<f64> {
        match self {
            IntegrandSpec::Constant { value } => Some(value.iter().fold(0.0, |m, x| m.max(x.abs()))),
            IntegrandSpec::Identity => None,
            IntegrandSpec::Piecewise { values, .. } => {
                Some(values.iter().flatten().fold(0.0, |m: f64, x| m.max(x.abs())))
            }
        }
    }
}

impl Integrand for IntegrandSpec {
    fn eval(&self, t: f64, prefix: &[Vec<f64>]) -> Vec<f64> {
        let d = prefix[0].len();
        match self {
            IntegrandSpec::Constant { value } => value.clone(),
            IntegrandSpec::Identity => prefix.last().expect("non-empty prefix").clone(),
            IntegrandSpec::Piecewise { times, values } => match times.iter().rposition(|s| *s <= t) {
                Some(i) => values[i].clone(),
                None => vec![0.0; d],
            },
        }
    }
}

/// Wraps a closure as an integrand.
pub struct FnIntegrand<F>(pub F);

impl<F: Fn(f64, &[Vec<f64>]) -> Vec<f64> + Sync> Integrand for FnIntegrand<F> {
    fn eval(&self, t: f64, prefix: &[Vec<f64>]) -> Vec<f64> {
        (self.0)(t, prefix)
    }
}

/// Cumulative left-point sums `sum_{i<k} q(t_i) . (X_{i+1} - X_i)` on the
/// path's own grid.
pub fn riemann_sums(q: &dyn Integrand, path: &SampledPath) -> Vec<f64> {
    let mut acc = Compensated::default();
    let mut out = Vec::with_capacity(path.values.len());
    out.push(0.0);
    for i in 0..path.steps() {
        let qi = q.eval(path.time(i), &path.values[..=i]);
        let (a, b) = (&path.values[i], &path.values[i + 1]);
        for j in 0..path.dim {
            acc.add(qi[j] * (b[j] - a[j]));
        }
        out.push(acc.value());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDistance {
    pub level: u32,
    /// Sup over the coarser grid of the gap between the level-`level` and
    /// level-`level - 1` approximations.
    pub sup_distance: f64,
}

/// Converged when the last distance is negligible or at most
/// `CAUCHY_RATIO` times the distance three levels earlier.
pub fn cauchy_converged(distances: &[LevelDistance]) -> bool {
    let Some(last) = distances.last() else {
        return true;
    };
    if last.sup_distance <= CAUCHY_FLOOR {
        return true;
    }
    if distances.len() < 4 {
        return false;
    }
    last.sup_distance <= CAUCHY_RATIO * distances[distances.len() - 4].sup_distance
}

fn sup_distance(fine: &[f64], coarse: &[f64]) -> f64 {
    coarse
        .iter()
        .enumerate()
        .map(|(k, c)| (fine[2 * k] - c).abs())
        .fold(0.0, f64::max)
}

fn level_distances(levels: &[(u32, Vec<f64>)]) -> Vec<LevelDistance> {
    levels
        .windows(2)
        .map(|w| LevelDistance {
            level: w[1].0,
            sup_distance: sup_distance(&w[1].1, &w[0].1),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub level: u32,
    /// Integral on the level grid.
    pub values: Vec<f64>,
    pub distances: Vec<LevelDistance>,
    pub converged: bool,
    /// Strict mode replaced a non-convergent integral by zero.
    pub zeroed: bool,
}

/// Dyadic Riemann-sum integral at `level`, with Cauchy diagnostics against
/// all coarser levels. In strict mode a non-convergent integral is set to
/// zero.
pub fn karandikar_integral(q: &dyn Integrand, path: &SampledPath, level: u32, strict: bool) -> Result<IntegralResult> {
    let top = path.coarsen(level)?;
    let levels: Vec<(u32, Vec<f64>)> = (0..=level)
        .into_par_iter()
        .map(|l| Ok((l, riemann_sums(q, &top.coarsen(l)?))))
        .collect::<Result<_>>()?;
    let distances = level_distances(&levels);
    let converged = cauchy_converged(&distances);
    let mut values = levels.into_iter().last().map(|(_, v)| v).unwrap_or_default();
    let zeroed = strict && !converged;
    if zeroed {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(IntegralResult {
        level,
        values,
        distances,
        converged,
        zeroed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QvResult {
    pub level: u32,
    pub dim: usize,
    /// Row-major `dim x dim` matrix at each grid point.
    pub qv: Vec<Vec<f64>>,
    pub distances: Vec<LevelDistance>,
    pub converged: bool,
}

impl QvResult {
    pub fn scalar(&self, k: usize) -> f64 {
        self.qv[k][0]
    }

    pub fn terminal(&self) -> &[f64] {
        self.qv.last().expect("non-empty")
    }
}

fn qv_on_grid(path: &SampledPath) -> Vec<Vec<f64>> {
    let d = path.dim;
    let x0 = &path.values[0];
    let mut cross = vec![vec![0.0; path.values.len()]; d * d];
    for i in 0..d {
        for j in 0..d {
            let q = FnIntegrand(move |_: f64, prefix: &[Vec<f64>]| {
                let mut e = vec![0.0; d];
                e[j] = prefix.last().expect("non-empty")[i];
                e
            });
            cross[i * d + j] = riemann_sums(&q, path);
        }
    }
    path.values
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let mut m = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    m[i * d + j] = x[i] * x[j] - x0[i] * x0[j] - cross[i * d + j][k] - cross[j * d + i][k];
                }
            }
            m
        })
        .collect()
}

/// Pathwise quadratic variation at `level` with level-to-level diagnostics
/// (entrywise sup distance).
pub fn quadratic_variation(path: &SampledPath, level: u32) -> Result<QvResult> {
    let top = path.coarsen(level)?;
    let levels: Vec<(u32, Vec<Vec<f64>>)> = (0..=level)
        .into_par_iter()
        .map(|l| Ok((l, qv_on_grid(&top.coarsen(l)?))))
        .collect::<Result<_>>()?;
    let distances: Vec<LevelDistance> = levels
        .windows(2)
        .map(|w| LevelDistance {
            level: w[1].0,
            sup_distance: w[0]
                .1
                .iter()
                .enumerate()
                .flat_map(|(k, coarse)| w[1].1[2 * k].iter().zip(coarse).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max),
        })
        .collect();
    let converged = cauchy_converged(&distances);
    let qv = levels.into_iter().last().map(|(_, m)| m).unwrap_or_default();
    Ok(QvResult {
        level,
        dim: top.dim,
        qv,
        distances,
        converged,
    })
}

/// Finite-scale proxy for `limsup_n (<X>_t - <X>_{t - 2^-n}) / 2^-n`: the
/// entrywise maximum over `n` in `level - window ..= level`.
pub fn beta_limsup(qv: &QvResult, t: f64, window: u32) -> Result<Vec<f64>> {
    let n_steps = (1usize << qv.level) as f64;
    let k = (t * n_steps).round();
    if !(0.0..=n_steps).contains(&k) {
        return Err(Error::Config(format!("time {t} outside [0, 1]")));
    }
    let k = k as usize;
    let lo = qv.level.saturating_sub(window);
    let widest = 1usize << (qv.level - lo);
    if k < widest {
        return Err(Error::WindowTooLarge { t });
    }
    let mut best = vec![f64::NEG_INFINITY; qv.dim * qv.dim];
    for n in lo..=qv.level {
        let back = 1usize << (qv.level - n);
        let h = back as f64 / n_steps;
        for (b, (now, before)) in best.iter_mut().zip(qv.qv[k].iter().zip(&qv.qv[k - back])) {
            *b = b.max((now - before) / h);
        }
    }
    Ok(best)
}

/// `|X_T^2 - X_0^2 - 2 sum X dX - sum (dX)^2|` on the first coordinate at the
/// path's own mesh; zero up to rounding.
pub fn ito_identity_residual(path: &SampledPath) -> f64 {
    let x: Vec<f64> = path.values.iter().map(|v| v[0]).collect();
    let mut s = Compensated::default();
    for w in x.windows(2) {
        let dx = w[1] - w[0];
        s.add(2.0 * w[0] * dx);
        s.add(dx * dx);
    }
    let x0 = x[0];
    let xt = *x.last().expect("non-empty");
    let mut total = Compensated::default();
    total.add(xt * xt);
    total.add(-(x0 * x0));
    total.add(-s.value());
    total.value().abs()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Increments {
    /// `+-1` with equal probability.
    #[default]
    Rademacher,
    Gaussian,
}

/// Scaled conditional random walk on `[0, 1]` with step standard deviation
/// `sigma(t, prefix) 2^{-level/2}`, generated at `level` (coarser levels by
/// subsampling).
pub fn sample_diffusion(
    seed: u64,
    sigma: impl Fn(f64, &[f64]) -> f64,
    level: u32,
    x0: f64,
    increments: Increments,
) -> Result<SampledPath> {
    if level > MAX_LEVEL {
        return Err(Error::Resolution {
            requested: level,
            available: MAX_LEVEL,
        });
    }
    let n = 1usize << level;
    let scale = (n as f64).sqrt().recip();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n + 1);
    xs.push(x0);
    for k in 0..n {
        let s = sigma(k as f64 / n as f64, &xs);
        if !s.is_finite() {
            return Err(Error::Config("sigma must be finite".into()));
        }
        let e: f64 = match increments {
            Increments::Rademacher => {
                if rng.gen_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
            Increments::Gaussian => rng.sample(StandardNormal),
        };
        xs.push(xs[k] + s * scale * e);
    }
    let mut path = SampledPath::new(level, xs.into_iter().map(|x| vec![x]).collect(), "scaled random walk")?;
    path.seed = Some(seed);
    path.generator = format!("scaled random walk ({increments:?} increments)");
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationConfig {
    pub level: u32,
    pub seed: u64,
    pub num_seeds: usize,
    pub sigma: f64,
    /// Slopes of the time-changed walk before and after `t = 1/2`.
    pub regime_sigmas: (f64, f64),
    pub window: u32,
    pub strict: bool,
    pub increments: Increments,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            level: 16,
            seed: 0,
            num_seeds: 100,
            sigma: 0.3,
            regime_sigmas: (0.2, 0.4),
            window: DEFAULT_WINDOW,
            strict: false,
            increments: Increments::Rademacher,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub seed: u64,
    pub level: u32,
    /// Discrete Ito identity residual.
    pub ito: f64,
    /// `|int 1 dX - (X_T - X_0)|`.
    pub telescoping: f64,
    /// `|2 int X dX - (X_T^2 - X_0^2 - <X>_T)|` with `<X>_T` taken at the
    /// finest level.
    pub ito_vs_finest: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub t: f64,
    pub estimate: f64,
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationReport {
    pub config: IntegrationConfig,
    pub residuals: Vec<ResidualRow>,
    pub max_ito_residual: f64,
    pub max_telescoping_residual: f64,
    /// Mean of `<X>_1` over seeds, and its relative error against `sigma^2`.
    pub qv_mean: f64,
    pub qv_relative_error: f64,
    /// Convergence table of `int X dX` for the first seed.
    pub convergence: Vec<LevelDistance>,
    pub converged: bool,
    pub zeroed: bool,
    /// `<X>` and `beta` of the smooth path `X_t = t`.
    pub smooth_qv_max: f64,
    pub smooth_beta: f64,
    /// Beta trace of the time-changed walk.
    pub beta_trace: Vec<BetaRow>,
}

/// The pathwise experiment suite: discrete Ito identity and telescoping
/// residuals at every level, quadratic variation of scaled walks, smooth
/// paths and a beta trace across a volatility change.
pub fn run_integration_suite(cfg: &IntegrationConfig) -> Result<IntegrationReport> {
    let level = cfg.level;
    let sigma = cfg.sigma;
    let seeds: Vec<u64> = (0..cfg.num_seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let per_seed: Vec<(Vec<ResidualRow>, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let path = sample_diffusion(seed, |_, _| sigma, level, 1.0, cfg.increments)?;
            let one = IntegrandSpec::Constant { value: vec![1.0] };
            let qv = quadratic_variation(&path, level)?;
            let qv_fine = qv.terminal()[0];
            let mut rows = Vec::new();
            for l in 0..=level {
                let p = path.coarsen(l)?;
                let tele = riemann_sums(&one, &p);
                let xs = riemann_sums(&IntegrandSpec::Identity, &p);
                let (x0, xt) = (p.values[0][0], p.values[p.steps()][0]);
                rows.push(ResidualRow {
                    seed,
                    level: l,
                    ito: ito_identity_residual(&p),
                    telescoping: (tele[p.steps()] - (xt - x0)).abs(),
                    ito_vs_finest: (2.0 * xs[p.steps()] - (xt * xt - x0 * x0 - qv_fine)).abs(),
                });
            }
            Ok((rows, qv_fine))
        })
        .collect::<Result<_>>()?;
    let residuals: Vec<ResidualRow> = per_seed.iter().flat_map(|(r, _)| r.clone()).collect();
    let qv_mean = per_seed.iter().map(|(_, q)| q).sum::<f64>() / per_seed.len().max(1) as f64;
    let target = sigma * sigma;
    let first = sample_diffusion(cfg.seed, |_, _| sigma, level, 1.0, cfg.increments)?;
    let integral = karandikar_integral(&IntegrandSpec::Identity, &first, level, cfg.strict)?;

    let smooth = SampledPath::from_fn(level, |t| vec![t])?;
    let smooth_qv = quadratic_variation(&smooth, level)?;
    let smooth_qv_max = smooth_qv.qv.iter().map(|m| m[0].abs()).fold(0.0, f64::max);
    let smooth_beta = beta_limsup(&smooth_qv, 1.0, cfg.window)?[0];

    let (s1, s2) = cfg.regime_sigmas;
    let walk = sample_diffusion(cfg.seed, |t, _| if t < 0.5 { s1 } else { s2 }, level, 1.0, cfg.increments)?;
    let walk_qv = quadratic_variation(&walk, level)?;
    let mut beta_trace = Vec::new();
    for i in 1..=16 {
        let t = i as f64 / 16.0;
        if let Ok(b) = beta_limsup(&walk_qv, t, cfg.window) {
            beta_trace.push(BetaRow {
                t,
                estimate: b[0],
                expected: if t <= 0.5 { s1 * s1 } else { s2 * s2 },
            });
        }
    }
    Ok(IntegrationReport {
        config: cfg.clone(),
        max_ito_residual: residuals.iter().map(|r| r.ito).fold(0.0, f64::max),
        max_telescoping_residual: residuals.iter().map(|r| r.telescoping).fold(0.0, f64::max),
        residuals,
        qv_mean,
        qv_relative_error: if target > 0.0 {
            (qv_mean - target).abs() / target
        } else {
            qv_mean.abs()
        },
        convergence: integral.distances,
        converged: integral.converged,
        zeroed: integral.zeroed,
        smooth_qv_max,
        smooth_beta,
        beta_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut c = Compensated::default();
        c.add(1e16);
        c.add(1.0);
        c.add(-1e16);
        assert_eq!(c.value(), 1.0);
    }

    #[test]
    fn constant_path_has_zero_qv() {
        let p = SampledPath::from_fn(6, |_| vec![2.0]).unwrap();
        let qv = quadratic_variation(&p, 6).unwrap();
        assert!(qv.qv.iter().all(|m| m[0] == 0.0));
        assert!(qv.converged);
    }

    #[test]
    fn rademacher_walk_has_exact_difference_quotients() {
        let p = sample_diffusion(3, |_, _| 0.5, 10, 0.0, Increments::Rademacher).unwrap();
        let qv = quadratic_variation(&p, 10).unwrap();
        let b = beta_limsup(&qv, 0.5, 4).unwrap()[0];
        assert!((b - 0.25).abs() < 1e-9);
    }

    #[test]
    fn window_must_fit_before_t() {
        let p = SampledPath::from_fn(4, |t| vec![t]).unwrap();
        let qv = quadratic_variation(&p, 4).unwrap();
        assert!(matches!(beta_limsup(&qv, 1.0 / 16.0, 2), Err(Error::WindowTooLarge { .. })));
    }

    #[test]
    fn cauchy_rule() {
        let d = |v: &[f64]| -> Vec<LevelDistance> {
            v.iter()
                .enumerate()
                .map(|(i, x)| LevelDistance {
                    level: i as u32 + 1,
                    sup_distance: *x,
                })
                .collect()
        };
        assert!(cauchy_converged(&d(&[1.0, 0.7, 0.5, 0.35])));
        assert!(cauchy_converged(&d(&[1.0, 1.1, 1.2, 0.9])));
        assert!(!cauchy_converged(&d(&[1.0, 1.0, 1.0, 1.0])));
        assert!(cauchy_converged(&d(&[1.0, 0.0])));
    }
}
