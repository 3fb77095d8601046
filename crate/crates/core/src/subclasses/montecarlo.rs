//! Seeded Monte Carlo checks for the restricted-class rules.
//!
//! Replications are split into fixed-size chunks. Chunk `c` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `c`, and chunk summaries are
//! merged in chunk order, so estimates are bit-identical for a given seed
//! whatever the thread count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibrator::{Calibrator, MarginalModel};
use super::rules::{
    calibrated_merge, exchangeable_merge, mixture_merge, product_merge, running_average_hits,
    MixtureComponent, SecondMomentBound,
};
use crate::error::{Error, Result};
use crate::merge::EValueVector;
use crate::weights::Weights;

pub const DEFAULT_REPS: u64 = 1_000_000;
/// Width of the acceptance band, in standard errors.
pub const SE_BAND: f64 = 3.0;
const CHUNK: u64 = 10_000;

/// Reported for the running-average rule, whose admissibility is unsettled.
pub const ADMISSIBILITY_UNKNOWN: &str = "unknown (open question)";

/// A merging rule addressable from scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum Rule {
    Weighted {
        lambda: Weights,
    },
    Calibrated {
        lambda: Weights,
        calibrators: Vec<Calibrator>,
        survivals: Vec<MarginalModel>,
    },
    Product {
        i: usize,
        j: usize,
        sigma: SecondMomentBound,
    },
    Mixture {
        components: Vec<MixtureComponent>,
        sigma: SecondMomentBound,
    },
    Identical {
        lambda: f64,
    },
    Exchangeable {
        beta: f64,
    },
    /// `M_lambda(e) + bonus 1{e_coordinate > threshold}`.
    Bumped {
        lambda: Weights,
        coordinate: usize,
        threshold: f64,
        bonus: f64,
    },
}

impl Rule {
    pub fn evaluate(&self, e: &[f64]) -> Result<f64> {
        let ev = EValueVector::new(e.to_vec())?;
        match self {
            Rule::Weighted { lambda } => lambda.merge(e),
            Rule::Calibrated {
                lambda,
                calibrators,
                survivals,
            } => calibrated_merge(lambda, calibrators, survivals, &ev),
            Rule::Product { i, j, sigma } => product_merge(*i, *j, sigma, &ev),
            Rule::Mixture { components, sigma } => mixture_merge(components, sigma, &ev),
            Rule::Identical { lambda } => {
                Ok(super::rules::identical_merge(*lambda, &ev)?.value)
            }
            Rule::Exchangeable { beta } => exchangeable_merge(*beta, &ev),
            Rule::Bumped {
                lambda,
                coordinate,
                threshold,
                bonus,
            } => {
                let base = lambda.merge(e)?;
                let x = e.get(*coordinate).ok_or_else(|| {
                    Error::invalid("coordinate", format!("{coordinate} is out of range"))
                })?;
                Ok(base + if *x > *threshold { *bonus } else { 0.0 })
            }
        }
    }

    /// Checks parameters once so the sampling loop cannot fail halfway.
    pub fn validate(&self, arity: usize) -> Result<()> {
        match self {
            Rule::Identical { lambda } if !(0.0..=1.0).contains(lambda) => {
                return Err(Error::invalid("lambda", format!("{lambda} is outside [0, 1]")));
            }
            Rule::Exchangeable { beta } if !(*beta > 1.0 && beta.is_finite()) => {
                return Err(Error::invalid("beta", format!("{beta} must be finite and > 1")));
            }
            Rule::Calibrated { survivals, .. } => {
                for g in survivals {
                    g.validate()?;
                }
            }
            Rule::Bumped { bonus, .. } if !(bonus.is_finite() && *bonus >= 0.0) => {
                return Err(Error::invalid("bonus", format!("{bonus} is not finite and >= 0")));
            }
            _ => {}
        }
        self.evaluate(&vec![0.0; arity]).map(|_| ())
    }

    /// Whether the sampler's joint laws lie in the class the rule is valid
    /// on. Checked conservatively: `false` means no guarantee applies.
    pub fn covers(&self, sampler: &Sampler) -> bool {
        match self {
            Rule::Weighted { .. } | Rule::Exchangeable { .. } => true,
            Rule::Bumped { .. } => false,
            Rule::Identical { .. } => matches!(sampler, Sampler::IdenticalExponential { .. }),
            Rule::Product { i, j, sigma } => product_covered(*i, *j, sigma, sampler),
            Rule::Mixture { components, sigma } => components.iter().all(|c| match &c.term {
                super::rules::MixtureTerm::Weighted { .. } => true,
                super::rules::MixtureTerm::Product { i, j } => {
                    product_covered(*i, *j, sigma, sampler)
                }
            }),
            Rule::Calibrated { survivals, .. } => match sampler {
                Sampler::IidExponential { mean, .. } => survivals.iter().all(|g| {
                    matches!(g, MarginalModel::Exponential { rate } if (rate * mean - 1.0).abs() < 1e-12)
                }),
                _ => false,
            },
        }
    }

    pub fn admissibility(&self) -> Option<&'static str> {
        matches!(self, Rule::Exchangeable { .. }).then_some(ADMISSIBILITY_UNKNOWN)
    }
}

fn product_covered(i: usize, j: usize, sigma: &SecondMomentBound, sampler: &Sampler) -> bool {
    let Some(s) = sigma.get(i, j) else {
        return false;
    };
    match sampler {
        // Independent exponentials: E[E_i E_j] = m^2, or 2 m^2 when i = j.
        Sampler::IidExponential { mean, .. } => {
            let moment = if i == j { 2.0 } else { 1.0 } * mean * mean;
            moment <= s
        }
        _ => false,
    }
}

fn default_mean() -> f64 {
    1.0
}

/// Generators of e-value vectors, all exchangeable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum Sampler {
    /// Independent exponentials with the given mean.
    IidExponential {
        k: usize,
        #[serde(default = "default_mean")]
        mean: f64,
    },
    /// A uniformly random permutation of `base`, scaled so each
    /// coordinate has mean at most 1.
    ExchangeablePermutation { base: Vec<f64> },
    /// One unit-mean exponential repeated `k` times.
    IdenticalExponential { k: usize },
}

impl Sampler {
    pub fn validate(&self) -> Result<()> {
        match self {
            Sampler::IidExponential { k, mean } => {
                if *k == 0 {
                    return Err(Error::invalid("k", "must be positive"));
                }
                if !(*mean > 0.0 && *mean <= 1.0) {
                    return Err(Error::invalid("mean", format!("{mean} is outside (0, 1]")));
                }
            }
            Sampler::ExchangeablePermutation { base } => {
                EValueVector::new(base.clone())?;
            }
            Sampler::IdenticalExponential { k } => {
                if *k == 0 {
                    return Err(Error::invalid("k", "must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        match self {
            Sampler::IidExponential { k, .. } | Sampler::IdenticalExponential { k } => *k,
            Sampler::ExchangeablePermutation { base } => base.len(),
        }
    }

    /// Joint law charges every open box of `[0, inf)^K`.
    pub fn has_full_support(&self) -> bool {
        matches!(self, Sampler::IidExponential { .. })
    }

    /// Values the permutation sampler shuffles.
    pub fn permutation_atoms(&self) -> Option<Vec<f64>> {
        match self {
            Sampler::ExchangeablePermutation { base } => {
                let mean = base.iter().sum::<f64>() / base.len() as f64;
                let scale = if mean > 1.0 { 1.0 / mean } else { 1.0 };
                Some(base.iter().map(|x| x * scale).collect())
            }
            _ => None,
        }
    }

    fn fill(&self, rng: &mut ChaCha8Rng, atoms: &[f64], out: &mut [f64]) {
        match self {
            Sampler::IidExponential { mean, .. } => {
                for x in out.iter_mut() {
                    let z: f64 = rng.sample(Exp1);
                    *x = mean * z;
                }
            }
            Sampler::ExchangeablePermutation { .. } => {
                out.copy_from_slice(atoms);
                out.shuffle(rng);
            }
            Sampler::IdenticalExponential { .. } => {
                let z: f64 = rng.sample(Exp1);
                out.fill(z);
            }
        }
    }
}

/// Mean and standard error of a Monte Carlo average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub reps: u64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }
}

/// `E[statistic(E)]` under `sampler`.
pub fn estimate<S>(sampler: &Sampler, reps: u64, seed: u64, statistic: S) -> Result<Estimate>
where
    S: Fn(&[f64]) -> Result<f64> + Sync,
{
    sampler.validate()?;
    if reps < 2 {
        return Err(Error::invalid("reps", "need at least 2 replications"));
    }
    let k = sampler.arity();
    let atoms = sampler.permutation_atoms().unwrap_or_default();
    let chunks = reps.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let n = CHUNK.min(reps - c * CHUNK);
            let mut m = Moments {
                n: 0,
                mean: 0.0,
                m2: 0.0,
            };
            let mut e = vec![0.0; k];
            for _ in 0..n {
                sampler.fill(&mut rng, &atoms, &mut e);
                m.push(statistic(&e)?);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let total = parts.into_iter().fold(
        Moments {
            n: 0,
            mean: 0.0,
            m2: 0.0,
        },
        Moments::merge,
    );
    let var = total.m2 / (total.n - 1) as f64;
    Ok(Estimate {
        reps: total.n,
        mean: total.mean,
        std_error: (var / total.n as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimulationVerdict {
    /// Estimate within `bound + 3 s.e.`
    Valid,
    Exceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub reps: u64,
    pub seed: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    pub threshold: f64,
    pub verdict: SimulationVerdict,
    pub inside_subclass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admissibility: Option<String>,
}

/// Estimates `E[rule(E)]` and compares it with `bound` at 3 s.e.
pub fn simulate(rule: &Rule, sampler: &Sampler, reps: u64, seed: u64, bound: f64) -> Result<SimulationReport> {
    sampler.validate()?;
    rule.validate(sampler.arity())?;
    let est = estimate(sampler, reps, seed, |e| rule.evaluate(e))?;
    let threshold = bound + SE_BAND * est.std_error;
    Ok(SimulationReport {
        reps: est.reps,
        seed,
        estimate: est.mean,
        std_error: est.std_error,
        bound,
        threshold,
        verdict: if est.mean <= threshold {
            SimulationVerdict::Valid
        } else {
            SimulationVerdict::Exceeded
        },
        inside_subclass: rule.covers(sampler),
        admissibility: rule.admissibility().map(str::to_owned),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdmissibilityVerdict {
    /// The candidate improvement has expectation above 1 by more than
    /// 3 s.e., so it is not an e-merging function.
    ImprovementRejected,
    NoImprovement,
    /// The sampler lacks full support; nothing can be concluded.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityCheck {
    pub estimate: Estimate,
    pub rule_estimate: Estimate,
    pub verdict: AdmissibilityVerdict,
}

/// Tries to break `improvement >= rule` on a full-support sampler.
///
/// Both expectations use the same seed, so their draws coincide.
pub fn full_support_admissibility_check(
    rule: &Rule,
    sampler: &Sampler,
    improvement: &Rule,
    reps: u64,
    seed: u64,
) -> Result<AdmissibilityCheck> {
    sampler.validate()?;
    rule.validate(sampler.arity())?;
    improvement.validate(sampler.arity())?;
    let estimate_of = |r: &Rule| estimate(sampler, reps, seed, |e| r.evaluate(e));
    let est = estimate_of(improvement)?;
    let rule_estimate = estimate_of(rule)?;
    let verdict = if !sampler.has_full_support() {
        AdmissibilityVerdict::Inconclusive
    } else if est.mean > 1.0 + SE_BAND * est.std_error {
        AdmissibilityVerdict::ImprovementRejected
    } else {
        AdmissibilityVerdict::NoImprovement
    };
    Ok(AdmissibilityCheck {
        estimate: est,
        rule_estimate,
        verdict,
    })
}

/// A point where two rules differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub e: Vec<f64>,
    pub running_average: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incomparability {
    /// Largest `F_beta - M_lambda > 0` found.
    pub above: Option<Witness>,
    /// Largest `M_lambda - F_beta > 0` found.
    pub below: Option<Witness>,
    pub incomparable: bool,
    pub admissibility: String,
}

/// Scans `axis^K` for points where `F_beta` lies strictly above and
/// strictly below `M_lambda`.
pub fn incomparability_witnesses(beta: f64, lambda: &Weights, axis: &[f64]) -> Result<Incomparability> {
    let k = lambda.arity();
    let total = axis
        .len()
        .checked_pow(k as u32)
        .filter(|&n| n <= 1 << 22)
        .ok_or(Error::TooLarge {
            size: usize::MAX,
            limit: 1 << 22,
        })?;
    EValueVector::new(axis.to_vec())?;
    let mut above: Option<(f64, Witness)> = None;
    let mut below: Option<(f64, Witness)> = None;
    let mut e = vec![0.0; k];
    for flat in 0..total {
        let mut r = flat;
        for slot in e.iter_mut().rev() {
            *slot = axis[r % axis.len()];
            r /= axis.len();
        }
        let f = exchangeable_merge(beta, &EValueVector::new(e.clone())?)?;
        let m = lambda.merge(&e)?;
        let w = || Witness {
            e: e.clone(),
            running_average: f,
            weighted: m,
        };
        if f > m && above.as_ref().is_none_or(|(g, _)| f - m > *g) {
            above = Some((f - m, w()));
        }
        if m > f && below.as_ref().is_none_or(|(g, _)| m - f > *g) {
            below = Some((m - f, w()));
        }
    }
    let incomparable = above.is_some() && below.is_some();
    Ok(Incomparability {
        above: above.map(|x| x.1),
        below: below.map(|x| x.1),
        incomparable,
        admissibility: ADMISSIBILITY_UNKNOWN.to_owned(),
    })
}

/// `P(max_k ebar_k >= beta)` under uniform permutations of `atoms`,
/// by enumerating every ordering.
pub fn exact_permutation_tail(beta: f64, atoms: &[f64]) -> f64 {
    fn rec(beta: f64, atoms: &[f64], used: &mut Vec<bool>, prefix: &mut Vec<f64>) -> (u64, u64) {
        if prefix.len() == atoms.len() {
            return (running_average_hits(beta, prefix) as u64, 1);
        }
        let (mut hit, mut all) = (0, 0);
        for i in 0..atoms.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            prefix.push(atoms[i]);
            let (h, a) = rec(beta, atoms, used, prefix);
            hit += h;
            all += a;
            prefix.pop();
            used[i] = false;
        }
        (hit, all)
    }
    let (hit, all) = rec(beta, atoms, &mut vec![false; atoms.len()], &mut Vec::new());
    hit as f64 / all as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subclasses::calibrator::CalibratorShape;

    const REPS: u64 = 200_000;

    fn iid(k: usize) -> Sampler {
        Sampler::IidExponential { k, mean: 1.0 }
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let rule = Rule::Weighted {
            lambda: Weights::arithmetic_mean(3),
        };
        let a = simulate(&rule, &iid(3), 25_000, 7, 1.0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate(&rule, &iid(3), 25_000, 7, 1.0).unwrap());
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        let c = simulate(&rule, &iid(3), 25_000, 8, 1.0).unwrap();
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn moments_match_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let mut parts = Vec::new();
        for chunk in xs.chunks(300) {
            let mut m = Moments { n: 0, mean: 0.0, m2: 0.0 };
            chunk.iter().for_each(|&x| m.push(x));
            parts.push(m);
        }
        let t = parts.into_iter().reduce(Moments::merge).unwrap();
        assert!((t.mean - mean).abs() < 1e-12);
        assert!((t.m2 / 999.0 - var).abs() < 1e-10);
    }

    #[test]
    fn product_rule_mean_one_under_independence() {
        let rule = Rule::Product {
            i: 0,
            j: 1,
            sigma: SecondMomentBound::uniform(2, 1.0).unwrap(),
        };
        let r = simulate(&rule, &iid(2), REPS, 11, 1.0).unwrap();
        assert!(r.inside_subclass);
        assert!((r.estimate - 1.0).abs() <= 3.0 * r.std_error, "{r:?}");
    }

    #[test]
    fn identical_rule_on_and_off_its_class() {
        let rule = Rule::Identical { lambda: 0.3 };
        let on = simulate(&rule, &Sampler::IdenticalExponential { k: 3 }, REPS, 5, 1.0).unwrap();
        assert!(on.inside_subclass);
        assert_eq!(on.verdict, SimulationVerdict::Valid);
        // Max of three independent exponentials has mean 11/6.
        let off = simulate(&rule, &iid(3), REPS, 5, 1.0).unwrap();
        assert!(!off.inside_subclass);
        assert_eq!(off.verdict, SimulationVerdict::Exceeded);
        assert!((off.estimate - (0.3 + 0.7 * 11.0 / 6.0)).abs() < 4.0 * off.std_error);
    }

    #[test]
    fn calibrated_rule_mean_one() {
        let rule = Rule::Calibrated {
            lambda: Weights::new(vec![1.0, 0.0]).unwrap(),
            calibrators: vec![Calibrator::with_default_cap(CalibratorShape::Power { kappa: 0.75 }).unwrap()],
            survivals: vec![MarginalModel::Exponential { rate: 1.0 }],
        };
        let r = simulate(&rule, &iid(1), REPS, 3, 1.0).unwrap();
        assert!(r.inside_subclass);
        assert!((r.estimate - 1.0).abs() <= 3.0 * r.std_error, "{r:?}");
    }

    #[test]
    fn permutation_sampler_matches_enumeration() {
        let base = vec![4.0, 1.0, 0.0, 0.0, 0.0];
        let sampler = Sampler::ExchangeablePermutation { base: base.clone() };
        for beta in [1.5, 2.0] {
            let exact = exact_permutation_tail(beta, &base);
            let est = estimate(&sampler, REPS, 9, |e| Ok(running_average_hits(beta, e) as u8 as f64)).unwrap();
            assert!((est.mean - exact).abs() <= 4.0 * est.std_error, "{beta}: {est:?} vs {exact}");
            assert!(exact <= 1.0 / beta);
        }
        // Scaling keeps coordinate means at most 1.
        let big = Sampler::ExchangeablePermutation { base: vec![6.0, 0.0] };
        assert_eq!(big.permutation_atoms().unwrap(), vec![2.0, 0.0]);
        assert!(!big.has_full_support());
    }

    #[test]
    fn admissibility_verdicts() {
        let lambda = Weights::arithmetic_mean(2);
        let rule = Rule::Weighted { lambda: lambda.clone() };
        let bumped = Rule::Bumped {
            lambda,
            coordinate: 0,
            threshold: 1.0,
            bonus: 0.05,
        };
        let c = full_support_admissibility_check(&rule, &iid(2), &bumped, REPS, 1).unwrap();
        assert_eq!(c.verdict, AdmissibilityVerdict::ImprovementRejected);
        let same = full_support_admissibility_check(&rule, &iid(2), &rule, REPS, 1).unwrap();
        assert_eq!(same.verdict, AdmissibilityVerdict::NoImprovement);
        let perm = Sampler::ExchangeablePermutation { base: vec![2.0, 0.0] };
        let inc = full_support_admissibility_check(&rule, &perm, &bumped, 1000, 1).unwrap();
        assert_eq!(inc.verdict, AdmissibilityVerdict::Inconclusive);
    }

    #[test]
    fn witnesses_both_directions() {
        let lambda = Weights::arithmetic_mean(3);
        let w = incomparability_witnesses(2.0, &lambda, &[0.0, 1.0, 2.0, 4.0]).unwrap();
        assert!(w.incomparable);
        let a = w.above.unwrap();
        assert!(a.running_average > a.weighted);
        let b = w.below.unwrap();
        assert!(b.weighted > b.running_average);
        assert_eq!(w.admissibility, ADMISSIBILITY_UNKNOWN);
    }

    #[test]
    fn rule_json_round_trip() {
        let json = r#"{"id":"exchangeable","beta":2.0}"#;
        let r: Rule = serde_json::from_str(json).unwrap();
        assert_eq!(r, Rule::Exchangeable { beta: 2.0 });
        let s: Sampler = serde_json::from_str(r#"{"id":"iid-exponential","k":2}"#).unwrap();
        assert_eq!(s, iid(2));
        assert!(Rule::Exchangeable { beta: 0.5 }.validate(2).is_err());
    }
}
