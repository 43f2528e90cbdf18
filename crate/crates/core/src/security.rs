//! Correlation estimates, the nine-term Bell-type statistic, error rates and
//! the eavesdropping verdict.
//!
//! Every revealed coincidence contributes to exactly one of the nine cells,
//! the one picked by its `(Alice setting, Bob setting)` pair, and only the
//! table-designated observable pair is multiplied. The statistic is the sum
//! of the eight `+1` cells minus the `(A3, B3)` cell. Local hidden variable
//! assignments cannot exceed 7; the ideal source reaches 9.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{Outcomes, Setting};
use crate::protocol::{BaselineResult, SessionResult, SiftTable};

/// Bound attainable by predetermined local values.
pub const LOCAL_BOUND: f64 = 7.0;
/// Value reached by the ideal doubly entangled state.
pub const QUANTUM_VALUE: f64 = 9.0;
pub const DEFAULT_THRESHOLD: f64 = 8.0;
/// Width of the decision bands, in standard errors.
pub const VERDICT_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub c_plus: u64,
    pub c_minus: u64,
}

impl CellCount {
    pub fn total(&self) -> u64 {
        self.c_plus + self.c_minus
    }

    pub fn record(&mut self, product: i8) {
        if product > 0 {
            self.c_plus += 1;
        } else {
            self.c_minus += 1;
        }
    }
}

/// `C(A·B = ±1)` for all nine setting pairs, indexed `[alice slot][bob slot]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationCounts {
    pub cells: [[CellCount; 3]; 3],
}

impl CorrelationCounts {
    pub fn cell(&self, alice: Setting, bob: Setting) -> &CellCount {
        &self.cells[alice.slot()][bob.slot()]
    }

    pub fn tally(&mut self, round: &RevealedPair, table: &SiftTable) -> Result<()> {
        let entry = table.lookup(round.alice, round.bob)?;
        let product = round.outcomes_a.get(entry.a_idx) * round.outcomes_b.get(entry.b_idx);
        self.cells[round.alice.slot()][round.bob.slot()].record(product);
        Ok(())
    }
}

/// A coincidence whose outcome triples were disclosed by both parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealedPair {
    pub alice: Setting,
    pub bob: Setting,
    pub outcomes_a: Outcomes,
    pub outcomes_b: Outcomes,
}

/// `(C₊ − C₋)/(C₊ + C₋)`.
pub fn correlation_e(cell: &CellCount) -> Result<f64> {
    let n = cell.total();
    if n == 0 {
        return Err(Error::EmptyCell);
    }
    Ok((cell.c_plus as f64 - cell.c_minus as f64) / n as f64)
}

/// Binomial standard error of [`correlation_e`].
pub fn correlation_stderr(cell: &CellCount) -> Result<f64> {
    let e = correlation_e(cell)?;
    Ok(((1.0 - e * e).max(0.0) / cell.total() as f64).sqrt())
}

/// Cell values ordered row-major by `(A, B)` so that `(A3, B3)` is last.
pub fn bell_statistic(e_values: &[f64; 9]) -> f64 {
    e_values[..8].iter().sum::<f64>() - e_values[8]
}

pub fn bell_stderr(stderrs: &[f64; 9]) -> f64 {
    stderrs.iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Fraction of `(k_A, k_B)` pairs that disagree.
pub fn qber(bits: &[(u8, u8)]) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::EmptySample);
    }
    let errors = bits.iter().filter(|(a, b)| a != b).count();
    Ok(errors as f64 / bits.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Clean,
    Eavesdropping,
    Inconclusive,
}

pub fn verdict(bell_s: f64, threshold: f64, stderr: f64) -> Verdict {
    if bell_s - VERDICT_SIGMAS * stderr > threshold {
        Verdict::Clean
    } else if bell_s + VERDICT_SIGMAS * stderr < threshold {
        Verdict::Eavesdropping
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub alice: Setting,
    pub bob: Setting,
    pub sign: i8,
    pub c_plus: u64,
    pub c_minus: u64,
    pub e: Option<f64>,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub rounds: u64,
    pub coincidences: u64,
    pub sifted: u64,
    pub revealed: u64,
    pub key_length: u64,
    /// Row-major over `(A1..A3) x (B1..B3)`.
    pub cells: Vec<CellReport>,
    pub bell_s: Option<f64>,
    pub bell_s_stderr: Option<f64>,
    pub threshold: f64,
    /// Estimated from the revealed sample.
    pub qber: Option<f64>,
    pub verdict: Verdict,
    /// Raw key bits per coincidence, before the reveal sacrifice.
    pub efficiency: Option<f64>,
}

/// Round and key bookkeeping a report is built on top of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tally {
    pub rounds: u64,
    pub coincidences: u64,
    pub sifted: u64,
    pub key_length: u64,
}

pub fn build_report(
    tally: Tally,
    revealed: &[RevealedPair],
    table: &SiftTable,
    threshold: f64,
) -> Result<SecurityReport> {
    let mut counts = CorrelationCounts::default();
    let mut bits = Vec::with_capacity(revealed.len());
    for round in revealed {
        counts.tally(round, table)?;
        bits.push(table.key_bits(round)?);
    }

    let mut cells = Vec::with_capacity(9);
    let mut e_values = [0.0; 9];
    let mut stderrs = [0.0; 9];
    let mut complete = true;
    for (k, (alice, bob)) in SiftTable::pairs().enumerate() {
        let cell = counts.cell(alice, bob);
        let e = correlation_e(cell).ok();
        let stderr = correlation_stderr(cell).ok();
        match (e, stderr) {
            (Some(e), Some(s)) => {
                e_values[k] = e;
                stderrs[k] = s;
            }
            _ => complete = false,
        }
        cells.push(CellReport {
            alice,
            bob,
            sign: table.lookup(alice, bob)?.sign,
            c_plus: cell.c_plus,
            c_minus: cell.c_minus,
            e,
            stderr,
        });
    }

    let (bell_s, bell_s_stderr, verdict) = if complete {
        let s = bell_statistic(&e_values);
        let se = bell_stderr(&stderrs);
        (Some(s), Some(se), verdict(s, threshold, se))
    } else {
        (None, None, Verdict::Inconclusive)
    };

    Ok(SecurityReport {
        rounds: tally.rounds,
        coincidences: tally.coincidences,
        sifted: tally.sifted,
        revealed: revealed.len() as u64,
        key_length: tally.key_length,
        cells,
        bell_s,
        bell_s_stderr,
        threshold,
        qber: qber(&bits).ok(),
        verdict,
        efficiency: (tally.coincidences > 0)
            .then(|| tally.sifted as f64 / tally.coincidences as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub ours: f64,
    pub baseline: f64,
    pub ratio: f64,
}

/// Raw key bits per coincidence for a session and the sift-accounting
/// baseline, and their ratio.
pub fn efficiency_report(
    session: &SessionResult,
    baseline: &BaselineResult,
) -> Result<EfficiencyReport> {
    let report = &session.report;
    if report.coincidences == 0 || baseline.coincidences == 0 {
        return Err(Error::NoCoincidences);
    }
    let ours = report.sifted as f64 / report.coincidences as f64;
    let base = baseline.raw_key_bits as f64 / baseline.coincidences as f64;
    if base == 0.0 {
        return Err(Error::NoCoincidences);
    }
    Ok(EfficiencyReport {
        ours,
        baseline: base,
        ratio: ours / base,
    })
}
