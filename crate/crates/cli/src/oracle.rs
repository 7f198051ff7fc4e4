//! Closed-form drop laws checked against the exhaustive walk and Monte-Carlo
//! sampling.

use std::f64::consts::PI;
use std::fmt;

use redsim_core::analysis::{
    exhaustive_interdrop, oracle_csv, oracle_rows, pmf_distance, red1_interdrop_pmf,
    red4_interdrop_pmf, red5_interdrop_pmf, sample_interdrop, AnalysisError, DropLawInput, Pmf,
};
use redsim_core::simkernel::RandomStream;
use redsim_core::RedVariant;
use thiserror::Error;

pub const EXACT_TOLERANCE: f64 = 1e-12;
pub const TV_FLOOR: f64 = 0.005;
pub const DEFAULT_PBS: [f64; 4] = [0.5, 0.3, 0.1, 0.02];
pub const DEFAULT_SIZES: [u32; 3] = [1500, 750, 375];
pub const DEFAULT_VARIANTS: [RedVariant; 3] = [RedVariant::Red1, RedVariant::Red4, RedVariant::Red5];

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{0} has no closed-form inter-drop law (use RED1, RED4 or RED5)")]
    NoClosedForm(RedVariant),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub variant: RedVariant,
    pub input: DropLawInput,
}

impl fmt::Display for OracleCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self.input.sizes.iter().map(u32::to_string).collect();
        write!(
            f,
            "{} p_b={} sizes={} M={}",
            self.variant,
            self.input.p_b,
            sizes.join(","),
            self.input.max_packet
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub case: OracleCase,
    pub exact_deviation: f64,
    /// `(tv, tolerance, samples)` when the Monte-Carlo stage ran.
    pub monte_carlo: Option<(f64, f64, usize)>,
    pub csv: String,
}

impl OracleReport {
    pub fn exact_ok(&self) -> bool {
        self.exact_deviation < EXACT_TOLERANCE
    }

    pub fn monte_carlo_ok(&self) -> bool {
        self.monte_carlo.is_none_or(|(tv, tol, _)| tv < tol)
    }

    pub fn passed(&self) -> bool {
        self.exact_ok() && self.monte_carlo_ok()
    }

    pub fn line(&self) -> String {
        let verdict = |ok: bool| if ok { "ok" } else { "FAIL" };
        let mut s = format!(
            "{}: max|closed-oracle| = {:.3e} (tol {:.0e}) {}",
            self.case,
            self.exact_deviation,
            EXACT_TOLERANCE,
            verdict(self.exact_ok())
        );
        match self.monte_carlo {
            Some((tv, tol, n)) => s.push_str(&format!(
                "; TV = {tv:.5} (tol {tol:.5}, n = {n}) {}",
                verdict(tv < tol)
            )),
            None => s.push_str("; Monte-Carlo skipped"),
        }
        s
    }

    /// File name used when exporting the comparison table.
    pub fn csv_name(&self) -> String {
        format!(
            "oracle_{}_pb{}.csv",
            self.case.variant.label().to_ascii_lowercase(),
            self.case.input.p_b
        )
    }
}

pub fn closed_form(case: &OracleCase) -> Result<Pmf, OracleError> {
    match case.variant {
        RedVariant::Red1 => Ok(red1_interdrop_pmf(case.input.p_b)?),
        RedVariant::Red4 => Ok(red4_interdrop_pmf(&case.input)?),
        RedVariant::Red5 => Ok(red5_interdrop_pmf(&case.input)?),
        v => Err(OracleError::NoClosedForm(v)),
    }
}

/// Mean total-variation distance between `pmf` and an empirical pmf of `n`
/// draws from it, to leading order: `0.5 * sum sqrt(2 p (1 - p) / (pi n))`.
pub fn expected_tv(pmf: &Pmf, n: usize) -> f64 {
    let n = n as f64;
    0.5 * pmf
        .support()
        .map(|(_, p)| (2.0 * p * (1.0 - p) / (PI * n)).sqrt())
        .sum::<f64>()
}

/// Monte-Carlo acceptance bound: 1.5 times the expected distance, never
/// tighter than 0.005.
pub fn tv_tolerance(pmf: &Pmf, n: usize) -> f64 {
    TV_FLOOR.max(1.5 * expected_tv(pmf, n))
}

/// Runs one case. `stream` feeds the Monte-Carlo stage; `samples == 0`
/// skips it.
pub fn run_case(case: &OracleCase, samples: usize, stream: &mut RandomStream) -> Result<OracleReport, OracleError> {
    let closed = closed_form(case)?;
    let oracle = exhaustive_interdrop(case.variant, &case.input, closed.max_n() + 2)?;
    let exact_deviation = closed.max_abs_diff(&oracle);
    let (empirical, monte_carlo) = if samples > 0 {
        let emp = sample_interdrop(case.variant, &case.input, stream, samples)?;
        let tv = pmf_distance(&closed, &emp);
        (Some(emp), Some((tv, tv_tolerance(&closed, samples), samples)))
    } else {
        (None, None)
    };
    let csv = oracle_csv(&oracle_rows(&closed, &oracle, empirical.as_ref()));
    Ok(OracleReport {
        case: case.clone(),
        exact_deviation,
        monte_carlo,
        csv,
    })
}

/// Cases for every variant and `p_b`, in argument order.
pub fn cases(
    variants: &[RedVariant],
    pbs: &[f64],
    sizes: &[u32],
    max_packet: u32,
) -> Result<Vec<OracleCase>, OracleError> {
    let mut out = Vec::new();
    for &variant in variants {
        if !DEFAULT_VARIANTS.contains(&variant) {
            return Err(OracleError::NoClosedForm(variant));
        }
        for &p_b in pbs {
            out.push(OracleCase {
                variant,
                input: DropLawInput::new(p_b, sizes.to_vec(), max_packet)?,
            });
        }
    }
    Ok(out)
}
