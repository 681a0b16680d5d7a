//! The simulated annotator.
//!
//! Each class carries a clock of when the annotator last labelled it. The
//! probability of a wrong label grows with the elapsed time along a sigmoid
//! forgetting curve `gamma / (1 + exp(-alpha * t + beta))`.

use std::fs::File;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, streams};
use crate::stream::ClassId;

/// Reason-style taxonomy of annotation errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorType {
    /// Wrong label despite having learned the concept (forgetting).
    Slip,
    /// Wrong label because the concept was never acquired.
    Mistake,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingParams {
    /// Steepness per unit time, > 0.
    pub alpha: f64,
    /// Offset of the sigmoid midpoint (`t = beta / alpha`).
    pub beta: f64,
    /// Asymptotic error ceiling in [0, 1].
    pub gamma: f64,
}

impl ForgettingParams {
    /// Fitted on lab annotation errors.
    pub const SLOW: ForgettingParams = ForgettingParams {
        alpha: 0.0434,
        beta: 0.9025,
        gamma: 0.75,
    };

    pub const FAST: ForgettingParams = ForgettingParams {
        alpha: 0.03,
        beta: 1.00,
        gamma: 1.00,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !beta.is_finite() {
            return Err(Error::invalid("beta must be finite"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(ForgettingParams { alpha, beta, gamma })
    }
}

/// Probability of mislabelling a class `t` time units after it was last seen.
pub fn forgetting_score(params: &ForgettingParams, t: f64) -> f64 {
    // -alpha * t + beta written as -alpha * (t - beta / alpha) so the midpoint is exact.
    let exponent = -params.alpha * (t - params.beta / params.alpha);
    params.gamma / (1.0 + exponent.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleRegime {
    /// Perfect labels.
    None,
    Slow,
    Fast,
    Custom(ForgettingParams),
}

impl OracleRegime {
    pub fn params(&self) -> Option<ForgettingParams> {
        match self {
            OracleRegime::None => None,
            OracleRegime::Slow => Some(ForgettingParams::SLOW),
            OracleRegime::Fast => Some(ForgettingParams::FAST),
            OracleRegime::Custom(p) => Some(*p),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OracleRegime::None => "none",
            OracleRegime::Slow => "slow",
            OracleRegime::Fast => "fast",
            OracleRegime::Custom(_) => "custom",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "none" => Ok(OracleRegime::None),
            "slow" => Ok(OracleRegime::Slow),
            "fast" => Ok(OracleRegime::Fast),
            other => Err(Error::invalid(format!(
                "unknown regime `{other}` (expected none, slow or fast)"
            ))),
        }
    }
}

/// Distribution of the wrong label given the true one.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Confusion {
    /// Uniform over the other classes.
    #[default]
    Uniform,
    /// Row `true` holds relative weights over wrong labels; the diagonal is ignored.
    Matrix(Vec<Vec<f64>>),
}

/// Result of one oracle query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Annotation {
    pub label: ClassId,
    /// Time since the true class was last annotated.
    pub elapsed: f64,
    /// Error probability the oracle used.
    pub error_probability: f64,
}

impl Annotation {
    pub fn is_error(&self, truth: ClassId) -> bool {
        self.label != truth
    }
}

/// Per-class forgetting clocks plus the randomness behind errors.
#[derive(Clone, Debug)]
pub struct OracleState {
    class_count: usize,
    last_seen: Vec<Option<f64>>,
    start: f64,
    clock: f64,
    confusion: Confusion,
    rng: ChaCha8Rng,
}

impl OracleState {
    pub fn new(class_count: usize, seed: u64) -> Self {
        OracleState {
            class_count,
            last_seen: vec![None; class_count],
            start: 0.0,
            clock: 0.0,
            confusion: Confusion::Uniform,
            rng: seeded(seed, streams::ORACLE),
        }
    }

    pub fn with_confusion(mut self, confusion: Confusion) -> Result<Self> {
        if let Confusion::Matrix(rows) = &confusion {
            if rows.len() != self.class_count || rows.iter().any(|r| r.len() != self.class_count) {
                return Err(Error::invalid(
                    "confusion matrix must be class_count x class_count",
                ));
            }
            for (t, row) in rows.iter().enumerate() {
                let off: f64 = row
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != t)
                    .map(|(_, w)| *w)
                    .sum();
                if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || off <= 0.0 {
                    return Err(Error::invalid(format!(
                        "confusion row {t} needs non-negative weights on some wrong label"
                    )));
                }
            }
        }
        self.confusion = confusion;
        Ok(self)
    }

    /// Sets the stream start and the clock to `start`.
    pub fn starting_at(mut self, start: f64) -> Self {
        self.start = start;
        self.clock = start;
        self
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn last_seen(&self, class: ClassId) -> Option<f64> {
        self.last_seen.get(class.index()).copied().flatten()
    }

    /// Moves the clock forward; it never runs backwards.
    pub fn advance_to(&mut self, time: f64) -> Result<()> {
        if time.is_nan() || time < self.clock {
            return Err(Error::invalid(format!(
                "oracle clock cannot move from {} back to {time}",
                self.clock
            )));
        }
        self.clock = time;
        Ok(())
    }

    /// Time since `class` was last annotated, or since the stream start.
    pub fn elapsed(&self, class: ClassId) -> f64 {
        self.clock - self.last_seen(class).unwrap_or(self.start)
    }

    /// Labels one instance whose true class is `truth` at the current clock.
    pub fn annotate(&mut self, truth: ClassId, regime: &OracleRegime) -> Result<Annotation> {
        if truth.index() >= self.class_count {
            return Err(Error::invalid(format!(
                "label {} outside {} classes",
                truth.index(),
                self.class_count
            )));
        }
        let elapsed = self.elapsed(truth);
        let (label, error_probability) = match regime.params() {
            None => (truth, 0.0),
            Some(params) => {
                if self.class_count < 2 {
                    return Err(Error::invalid("forgetting needs at least two classes"));
                }
                let p = forgetting_score(&params, elapsed);
                let label = if self.rng.random::<f64>() < p {
                    self.wrong_label(truth)
                } else {
                    truth
                };
                (label, p)
            }
        };
        self.last_seen[truth.index()] = Some(self.clock);
        Ok(Annotation {
            label,
            elapsed,
            error_probability,
        })
    }

    fn wrong_label(&mut self, truth: ClassId) -> ClassId {
        match &self.confusion {
            Confusion::Uniform => {
                let k = self.rng.random_range(0..self.class_count - 1);
                ClassId(if k >= truth.index() { k + 1 } else { k })
            }
            Confusion::Matrix(rows) => {
                let weights: Vec<f64> = rows[truth.index()]
                    .iter()
                    .enumerate()
                    .map(|(k, w)| if k == truth.index() { 0.0 } else { *w })
                    .collect();
                let dist = WeightedIndex::new(&weights).expect("validated confusion row");
                ClassId(self.rng.sample(dist))
            }
        }
    }
}

/// One lab observation: elapsed time since the class was last seen, and
/// whether the annotator got the label wrong.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub erred: bool,
}

/// Observations from an annotated sequence: `t` is the index distance to the
/// previous occurrence of the same true class (or to the sequence start).
pub fn observations_from_sequence(truth: &[ClassId], given: &[ClassId]) -> Result<Vec<Observation>> {
    if truth.len() != given.len() {
        return Err(Error::invalid("truth and responses differ in length"));
    }
    let mut last: std::collections::HashMap<ClassId, usize> = Default::default();
    Ok(truth
        .iter()
        .zip(given)
        .enumerate()
        .map(|(i, (t, g))| {
            let since = i - last.get(t).copied().unwrap_or(0);
            last.insert(*t, i);
            Observation {
                t: since as f64,
                erred: t != g,
            }
        })
        .collect())
}

/// Reads a `t,erred` CSV with `erred` in {0, 1}.
pub fn load_observations(path: impl AsRef<Path>) -> Result<Vec<Observation>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(1, name, "missing column in header"))
    };
    let (c_t, c_e) = (col("t")?, col("erred")?);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let t: f64 = rec
            .get(c_t)
            .and_then(|v| v.trim().parse().ok())
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| Error::parse(line, "t", "expected a non-negative number"))?;
        let erred = match rec.get(c_e).map(str::trim) {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(Error::parse(line, "erred", "expected 0 or 1")),
        };
        out.push(Observation { t, erred });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub bins: usize,
    pub alpha_points: usize,
    pub beta_points: usize,
    pub gamma_points: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            bins: 10,
            alpha_points: 31,
            beta_points: 41,
            gamma_points: 21,
        }
    }
}

const ALPHA_RANGE: (f64, f64) = (1e-3, 1.0);
const BETA_RANGE: (f64, f64) = (-5.0, 5.0);
const GAMMA_RANGE: (f64, f64) = (0.0, 1.0);

/// Empirical error rate per equal-width bin of `t`, paired with the bin's mean `t`.
/// Empty bins are dropped.
pub fn binned_error_rates(observations: &[Observation], bins: usize) -> Vec<(f64, f64)> {
    let t_min = observations.iter().map(|o| o.t).fold(f64::INFINITY, f64::min);
    let t_max = observations.iter().map(|o| o.t).fold(f64::NEG_INFINITY, f64::max);
    let width = (t_max - t_min) / bins as f64;
    let mut sum_t = vec![0.0; bins];
    let mut errors = vec![0usize; bins];
    let mut counts = vec![0usize; bins];
    for o in observations {
        let b = if width > 0.0 {
            (((o.t - t_min) / width) as usize).min(bins - 1)
        } else {
            0
        };
        sum_t[b] += o.t;
        counts[b] += 1;
        errors[b] += usize::from(o.erred);
    }
    (0..bins)
        .filter(|&b| counts[b] > 0)
        .map(|b| (sum_t[b] / counts[b] as f64, errors[b] as f64 / counts[b] as f64))
        .collect()
}

fn sse(points: &[(f64, f64)], log_alpha: f64, beta: f64, gamma: f64) -> f64 {
    let params = ForgettingParams {
        alpha: log_alpha.exp(),
        beta,
        gamma,
    };
    points
        .iter()
        .map(|&(t, rate)| {
            let d = forgetting_score(&params, t) - rate;
            d * d
        })
        .sum()
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

/// Least-squares fit of the forgetting curve to binned error rates: a grid
/// search over alpha (log-spaced), beta and gamma, then coordinate descent.
pub fn fit_forgetting_params(observations: &[Observation], opts: &FitOptions) -> Result<ForgettingParams> {
    if observations.len() < 20 {
        return Err(Error::invalid(format!(
            "need at least 20 observations, got {}",
            observations.len()
        )));
    }
    let mut distinct: Vec<f64> = observations.iter().map(|o| o.t).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 distinct elapsed times, got {}",
            distinct.len()
        )));
    }
    if opts.bins < 3 || opts.alpha_points < 2 || opts.beta_points < 2 || opts.gamma_points < 2 {
        return Err(Error::invalid(
            "fit needs >= 3 bins and >= 2 grid points per parameter",
        ));
    }
    let points = binned_error_rates(observations, opts.bins);

    let (la_lo, la_hi) = (ALPHA_RANGE.0.ln(), ALPHA_RANGE.1.ln());
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for la in linspace(la_lo, la_hi, opts.alpha_points) {
        for b in linspace(BETA_RANGE.0, BETA_RANGE.1, opts.beta_points) {
            for g in linspace(GAMMA_RANGE.0, GAMMA_RANGE.1, opts.gamma_points) {
                let e = sse(&points, la, b, g);
                if e < best.0 {
                    best = (e, la, b, g);
                }
            }
        }
    }

    let (mut err, mut x) = (best.0, [best.1, best.2, best.3]);
    let bounds = [(la_lo, la_hi), BETA_RANGE, GAMMA_RANGE];
    let mut step = [
        (la_hi - la_lo) / (opts.alpha_points - 1) as f64,
        (BETA_RANGE.1 - BETA_RANGE.0) / (opts.beta_points - 1) as f64,
        (GAMMA_RANGE.1 - GAMMA_RANGE.0) / (opts.gamma_points - 1) as f64,
    ];
    for _ in 0..10_000 {
        if step.iter().all(|s| *s < 1e-9) {
            break;
        }
        let mut improved = false;
        for i in 0..3 {
            for dir in [1.0, -1.0] {
                let mut cand = x;
                cand[i] = (cand[i] + dir * step[i]).clamp(bounds[i].0, bounds[i].1);
                let e = sse(&points, cand[0], cand[1], cand[2]);
                if e < err {
                    err = e;
                    x = cand;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for s in &mut step {
                *s *= 0.5;
            }
        }
    }
    ForgettingParams::new(x[0].exp(), x[1], x[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn midpoint_is_half_gamma() {
        for p in [ForgettingParams::SLOW, ForgettingParams::FAST] {
            assert_eq!(forgetting_score(&p, p.beta / p.alpha), p.gamma / 2.0);
        }
    }

    #[test]
    fn slow_regime_at_zero() {
        // 0.75 / (1 + e^0.9025)
        let expected = 0.75 / (1.0 + 0.9025f64.exp());
        let got = forgetting_score(&ForgettingParams::SLOW, 0.0);
        assert!((got - 0.2164).abs() < 1e-4, "{got}");
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn fast_regime_saturates() {
        assert!((forgetting_score(&ForgettingParams::FAST, 1000.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn regime_none_is_identity() {
        let mut s = OracleState::new(4, 3);
        for i in 0..200 {
            s.advance_to(i as f64 * 10.0).unwrap();
            let truth = ClassId(i % 4);
            assert_eq!(s.annotate(truth, &OracleRegime::None).unwrap().label, truth);
        }
    }

    #[test]
    fn zero_gamma_never_errs() {
        let regime = OracleRegime::Custom(ForgettingParams::new(0.5, 0.0, 0.0).unwrap());
        let mut s = OracleState::new(3, 8);
        for i in 0..500 {
            s.advance_to(i as f64 * 100.0).unwrap();
            assert_eq!(s.annotate(ClassId(1), &regime).unwrap().label, ClassId(1));
        }
    }

    #[test]
    fn last_seen_tracks_every_annotation() {
        let mut s = OracleState::new(3, 1);
        s.advance_to(5.0).unwrap();
        let a = s.annotate(ClassId(2), &OracleRegime::Fast).unwrap();
        assert_eq!(a.elapsed, 5.0);
        assert_eq!(s.last_seen(ClassId(2)), Some(5.0));
        s.advance_to(9.0).unwrap();
        let b = s.annotate(ClassId(2), &OracleRegime::Fast).unwrap();
        assert_eq!(b.elapsed, 4.0);
        assert_eq!(s.last_seen(ClassId(2)), Some(9.0));
        assert_eq!(s.last_seen(ClassId(0)), None);
        assert!(s.advance_to(3.0).is_err());
    }

    #[test]
    fn single_class_with_forgetting_is_an_error() {
        let mut s = OracleState::new(1, 1);
        assert!(s.annotate(ClassId(0), &OracleRegime::Slow).is_err());
        assert!(s.annotate(ClassId(0), &OracleRegime::None).is_ok());
    }

    #[test]
    fn saturated_fast_oracle_errs_uniformly() {
        let mut s = OracleState::new(4, 42);
        let mut wrong = [0usize; 4];
        let mut errors = 0;
        let trials = 10_000;
        for i in 0..trials {
            // Never annotate class 0 before, and keep the clock far from the start.
            s.advance_to(1e6 + i as f64).unwrap();
            s.last_seen[0] = None;
            let a = s.annotate(ClassId(0), &OracleRegime::Fast).unwrap();
            if a.label != ClassId(0) {
                errors += 1;
                wrong[a.label.index()] += 1;
            }
        }
        assert!((errors as f64 / trials as f64 - 1.0).abs() <= 0.02);
        assert_eq!(wrong[0], 0);
        // Chi-square with 2 degrees of freedom; 13.82 is the 0.999 quantile.
        let expected = errors as f64 / 3.0;
        let chi2: f64 = wrong[1..]
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 13.82, "chi2 = {chi2}");
    }

    #[test]
    fn error_frequency_at_fixed_elapsed_time() {
        for (t, seed) in [(0.0, 1), (20.0, 2), (60.0, 3)] {
            let p = forgetting_score(&ForgettingParams::SLOW, t);
            let mut s = OracleState::new(4, seed);
            let trials = 10_000;
            let mut errors = 0;
            for i in 0..trials {
                let now = i as f64 * 1000.0;
                s.advance_to(now).unwrap();
                s.last_seen[1] = Some(now - t);
                errors +=
                    usize::from(s.annotate(ClassId(1), &OracleRegime::Slow).unwrap().label != ClassId(1));
            }
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            let rate = errors as f64 / trials as f64;
            assert!((rate - p).abs() <= 3.0 * sigma, "t={t}: {rate} vs {p}");
        }
    }

    #[test]
    fn confusion_matrix_hook_routes_errors() {
        let rows = vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]];
        let mut s = OracleState::new(3, 4)
            .with_confusion(Confusion::Matrix(rows))
            .unwrap();
        let always = OracleRegime::Custom(ForgettingParams::new(1.0, -50.0, 1.0).unwrap());
        for i in 0..100 {
            s.advance_to(i as f64).unwrap();
            assert_eq!(s.annotate(ClassId(0), &always).unwrap().label, ClassId(2));
        }
        assert!(OracleState::new(3, 4)
            .with_confusion(Confusion::Matrix(vec![vec![1.0, 0.0]; 3]))
            .is_err());
    }

    #[test]
    fn sequence_observations() {
        let truth = [ClassId(0), ClassId(1), ClassId(0), ClassId(1), ClassId(1)];
        let given = [ClassId(0), ClassId(0), ClassId(0), ClassId(1), ClassId(1)];
        let obs = observations_from_sequence(&truth, &given).unwrap();
        let ts: Vec<f64> = obs.iter().map(|o| o.t).collect();
        assert_eq!(ts, [0.0, 1.0, 2.0, 2.0, 1.0]);
        assert!(obs[1].erred && !obs[0].erred);
    }

    fn synthetic_observations(params: &ForgettingParams, n: usize, seed: u64) -> Vec<Observation> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let t = f64::from(rng.random_range(0..200u32));
                Observation {
                    t,
                    erred: rng.random::<f64>() < forgetting_score(params, t),
                }
            })
            .collect()
    }

    #[test]
    fn fit_recovers_slow_regime() {
        let obs = synthetic_observations(&ForgettingParams::SLOW, 5000, 17);
        let fit = fit_forgetting_params(&obs, &FitOptions::default()).unwrap();
        assert!((fit.gamma - 0.75).abs() <= 0.05, "{fit:?}");
        assert!((fit.alpha / 0.0434 - 1.0).abs() <= 0.5, "{fit:?}");
    }

    #[test]
    fn fit_degenerate_inputs() {
        let none: Vec<Observation> = (0..100)
            .map(|i| Observation {
                t: (i % 10) as f64,
                erred: false,
            })
            .collect();
        assert!(
            fit_forgetting_params(&none, &FitOptions::default())
                .unwrap()
                .gamma
                <= 0.01
        );

        let all: Vec<Observation> = (0..100)
            .map(|i| Observation {
                t: (i % 10) as f64,
                erred: true,
            })
            .collect();
        assert!(fit_forgetting_params(&all, &FitOptions::default()).unwrap().gamma >= 0.99);

        let flat: Vec<Observation> = (0..100).map(|_| Observation { t: 4.0, erred: true }).collect();
        assert!(fit_forgetting_params(&flat, &FitOptions::default()).is_err());
        assert!(fit_forgetting_params(&none[..10], &FitOptions::default()).is_err());
    }

    #[test]
    fn observations_csv() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "t,erred\n0,0\n3.5,1").unwrap();
        let obs = load_observations(f.path()).unwrap();
        assert_eq!(
            obs,
            vec![
                Observation { t: 0.0, erred: false },
                Observation { t: 3.5, erred: true }
            ]
        );

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "t,erred\n1,2").unwrap();
        assert!(matches!(
            load_observations(bad.path()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn score_monotone_and_bounded(
            alpha in 1e-3f64..2.0,
            beta in -5.0f64..5.0,
            gamma in 0.0f64..=1.0,
            t in 0.0f64..500.0,
            dt in 0.0f64..50.0,
        ) {
            let p = ForgettingParams::new(alpha, beta, gamma).unwrap();
            let a = forgetting_score(&p, t);
            let b = forgetting_score(&p, t + dt);
            prop_assert!(a <= b);
            prop_assert!((0.0..=gamma).contains(&a));
            prop_assert!((0.0..=gamma).contains(&b));
        }
    }
}
