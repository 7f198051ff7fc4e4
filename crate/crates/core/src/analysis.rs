//! Inter-drop distributions and the TCP goodput model.
//!
//! `N` is the number of arrivals from one drop to the next, counting the
//! dropped packet. With a frozen temporary probability `p_b`:
//!
//! * RED1 drops uniformly: `P[N = n] = p_b` for `n <= 1/p_b`.
//! * RED4 gives `P[N = n] = p_b * L_n / M` while `sum_{i<=n} L_i/M <= 1/p_b`.
//! * RED5 gives `P[N = n] = p_b * (L_n / M)^2` under the squared condition.
//!
//! The first index that breaks the cumulative condition carries whatever
//! probability is left, so every law sums to one.
//!
//! [`exhaustive_interdrop`] is the brute-force check on these closed forms. It
//! walks the count-based process through the [`RedState`] state machine and
//! multiplies survival and drop probabilities along the single
//! surviving path.

use thiserror::Error;

use crate::aqm::{RedState, RedVariant};
use crate::simkernel::RandomStream;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("p_b must lie in (0, 1), got {0}")]
    BadDropProbability(f64),
    #[error("packet size {len} outside (0, {max}]")]
    BadSize { len: u32, max: u32 },
    #[error("size sequence is empty")]
    EmptySizes,
    #[error("horizon {horizon} leaves {residual:e} probability unassigned")]
    HorizonTooShort { horizon: usize, residual: f64 },
    #[error("goodput model parameter {0} must be positive and finite")]
    NonPositive(&'static str),
}

/// Probability mass function over `n = 1, 2, ...`, stored densely.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pmf {
    masses: Vec<f64>,
}

impl Pmf {
    /// `masses[i]` is `P[N = i + 1]`.
    pub fn from_masses(masses: Vec<f64>) -> Self {
        Self { masses }
    }

    /// Empirical pmf of observed values of `N` (each `>= 1`).
    pub fn from_samples(samples: &[usize]) -> Self {
        let max = samples.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0u64; max];
        for &n in samples {
            assert!(n >= 1, "inter-drop count starts at 1");
            counts[n - 1] += 1;
        }
        let total = samples.len() as f64;
        Self {
            masses: counts.into_iter().map(|c| c as f64 / total).collect(),
        }
    }

    pub fn mass(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.masses.get(n - 1).copied().unwrap_or(0.0)
    }

    /// Largest `n` with an entry (which may be zero).
    pub fn max_n(&self) -> usize {
        self.masses.len()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `(n, mass)` pairs with positive mass.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| (i + 1, *m))
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(n, m)| n as f64 * m).sum()
    }

    /// Largest absolute per-point difference over the union support.
    pub fn max_abs_diff(&self, other: &Pmf) -> f64 {
        let len = self.max_n().max(other.max_n());
        (1..=len)
            .map(|n| (self.mass(n) - other.mass(n)).abs())
            .fold(0.0, f64::max)
    }
}

/// Total-variation distance, `0.5 * sum |a - b|`.
pub fn pmf_distance(a: &Pmf, b: &Pmf) -> f64 {
    let len = a.max_n().max(b.max_n());
    0.5 * (1..=len).map(|n| (a.mass(n) - b.mass(n)).abs()).sum::<f64>()
}

/// Periodic packet-size pattern for the drop laws. `sizes[i % len]` is the
/// size of the `(i+1)`-th arrival after a drop.
#[derive(Debug, Clone, PartialEq)]
pub struct DropLawInput {
    pub p_b: f64,
    pub sizes: Vec<u32>,
    pub max_packet: u32,
}

impl DropLawInput {
    pub fn new(p_b: f64, sizes: Vec<u32>, max_packet: u32) -> Result<Self, AnalysisError> {
        let input = Self {
            p_b,
            sizes,
            max_packet,
        };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        check_pb(self.p_b)?;
        if self.sizes.is_empty() {
            return Err(AnalysisError::EmptySizes);
        }
        if let Some(&len) = self.sizes.iter().find(|&&l| l == 0 || l > self.max_packet) {
            return Err(AnalysisError::BadSize {
                len,
                max: self.max_packet,
            });
        }
        Ok(())
    }

    pub fn size_at(&self, n: usize) -> u32 {
        self.sizes[(n - 1) % self.sizes.len()]
    }
}

fn check_pb(p_b: f64) -> Result<(), AnalysisError> {
    if p_b > 0.0 && p_b < 1.0 {
        Ok(())
    } else {
        Err(AnalysisError::BadDropProbability(p_b))
    }
}

// Slack on the cumulative condition so that exact-equality boundaries are not
// lost to rounding of 1/p_b.
const BOUNDARY_SLACK: f64 = 1e-12;

/// Uniform inter-drop law for RED1.
pub fn red1_interdrop_pmf(p_b: f64) -> Result<Pmf, AnalysisError> {
    check_pb(p_b)?;
    let full = (1.0 / p_b * (1.0 + BOUNDARY_SLACK)).floor() as usize;
    let mut masses = vec![p_b; full];
    let residual = 1.0 - full as f64 * p_b;
    if residual > BOUNDARY_SLACK {
        masses.push(residual);
    }
    Ok(Pmf::from_masses(masses))
}

/// `P[N = n] = p_b * w_n` while `sum_{i<=n} w_i <= 1/p_b`; the first index
/// past the boundary takes the remaining probability.
fn weighted_uniform_law(input: &DropLawInput, weight: impl Fn(u32) -> f64) -> Pmf {
    let limit = 1.0 / input.p_b * (1.0 + BOUNDARY_SLACK);
    let mut masses = Vec::new();
    let mut cumulative = 0.0;
    let mut n = 1;
    loop {
        let w = weight(input.size_at(n));
        let before = cumulative;
        cumulative += w;
        if cumulative <= limit {
            masses.push(input.p_b * w);
        } else {
            let residual = 1.0 - input.p_b * before;
            if residual > BOUNDARY_SLACK {
                masses.push(residual);
            }
            break;
        }
        n += 1;
    }
    Pmf::from_masses(masses)
}

/// Inter-drop law of RED4: drop mass proportional to the packet's size.
pub fn red4_interdrop_pmf(input: &DropLawInput) -> Result<Pmf, AnalysisError> {
    input.validate()?;
    let m = f64::from(input.max_packet);
    Ok(weighted_uniform_law(input, |l| f64::from(l) / m))
}

/// Inter-drop law of RED5: drop mass proportional to the squared size ratio.
pub fn red5_interdrop_pmf(input: &DropLawInput) -> Result<Pmf, AnalysisError> {
    input.validate()?;
    let m = f64::from(input.max_packet);
    Ok(weighted_uniform_law(input, |l| {
        let r = f64::from(l) / m;
        r * r
    }))
}

/// Exact inter-drop pmf of `variant` with `p_b` frozen, by walking the
/// count-based process for up to `horizon` arrivals.
pub fn exhaustive_interdrop(
    variant: RedVariant,
    input: &DropLawInput,
    horizon: usize,
) -> Result<Pmf, AnalysisError> {
    input.validate()?;
    let mut state = RedState::new(variant);
    let mut survival = 1.0;
    let mut masses = Vec::new();
    for n in 1..=horizon {
        let len = input.size_at(n);
        let p_a = state.drop_probability(input.p_b, len, input.max_packet);
        masses.push(survival * p_a);
        survival *= 1.0 - p_a;
        if survival <= 0.0 {
            return Ok(Pmf::from_masses(masses));
        }
        // Follow the accept branch; u = 1 never falls below p_a <= 1.
        state.decide_in_region(input.p_b, len, input.max_packet, 1.0);
    }
    if survival < 1e-12 {
        Ok(Pmf::from_masses(masses))
    } else {
        Err(AnalysisError::HorizonTooShort {
            horizon,
            residual: survival,
        })
    }
}

/// Monte-Carlo estimate of the inter-drop pmf using real random draws.
pub fn sample_interdrop(
    variant: RedVariant,
    input: &DropLawInput,
    stream: &mut RandomStream,
    n_samples: usize,
) -> Result<Pmf, AnalysisError> {
    input.validate()?;
    let mut state = RedState::new(variant);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut n = 0;
        loop {
            n += 1;
            let len = input.size_at(n);
            let u = stream.next_uniform();
            if state
                .decide_in_region(input.p_b, len, input.max_packet, u)
                .outcome
                .is_drop()
            {
                break;
            }
        }
        samples.push(n);
    }
    Ok(Pmf::from_samples(&samples))
}

/// Square-root goodput model: `goodput <= MSS * C / (RTT * sqrt(p))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodputModel {
    pub c: f64,
    /// Bytes.
    pub mss: f64,
    /// Seconds.
    pub rtt: f64,
    pub p: f64,
}

impl GoodputModel {
    fn validate(&self) -> Result<(), AnalysisError> {
        for (name, v) in [("C", self.c), ("MSS", self.mss), ("RTT", self.rtt), ("p", self.p)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AnalysisError::NonPositive(name));
            }
        }
        Ok(())
    }
}

/// Goodput bound in bytes per second.
pub fn goodput_bound(model: &GoodputModel) -> Result<f64, AnalysisError> {
    model.validate()?;
    Ok(model.mss * model.c / (model.rtt * model.p.sqrt()))
}

/// Drop probability connection B needs for the same goodput as connection A
/// at equal RTT: `p_b = p_a * (mss_b / mss_a)^2`.
pub fn fairness_required_p(mss_a: f64, mss_b: f64, p_a: f64) -> Result<f64, AnalysisError> {
    for (name, v) in [("mss_a", mss_a), ("mss_b", mss_b), ("p", p_a)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(AnalysisError::NonPositive(name));
        }
    }
    let ratio = mss_b / mss_a;
    Ok(p_a * ratio * ratio)
}

/// One row of an oracle comparison export.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub n: usize,
    pub closed_form: f64,
    pub oracle: f64,
    pub empirical: Option<f64>,
}

/// Lines up the three pmfs by `n`.
pub fn oracle_rows(closed: &Pmf, oracle: &Pmf, empirical: Option<&Pmf>) -> Vec<OracleRow> {
    let len = closed
        .max_n()
        .max(oracle.max_n())
        .max(empirical.map_or(0, Pmf::max_n));
    (1..=len)
        .map(|n| OracleRow {
            n,
            closed_form: closed.mass(n),
            oracle: oracle.mass(n),
            empirical: empirical.map(|e| e.mass(n)),
        })
        .collect()
}

/// CSV with header `n,closed_form_mass,oracle_mass,empirical_mass`. The
/// empirical column is empty when no Monte-Carlo stage ran.
pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from("n,closed_form_mass,oracle_mass,empirical_mass\n");
    for r in rows {
        let emp = r.empirical.map(|e| format!("{e:.12}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{:.15},{:.15},{}\n",
            r.n, r.closed_form, r.oracle, emp
        ));
    }
    out
}
