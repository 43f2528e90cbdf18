//! Protocol sessions: source emission, random group choice, joint
//! measurement, sifting and key extraction.
//!
//! Three modes are supported. `Ent` distributes the doubly entangled pair to
//! both parties. `Pm` has Alice measure photon 1 locally and send photon 2
//! to Bob. `Ekert` is a polarization-only baseline used to account for the
//! sift fraction of the older protocol.
//!
//! Randomness is split into independent ChaCha streams per round: one for
//! the quantum phase (loss, noise, Eve, measurement), one for Alice's group
//! choice and one for Bob's. The split lets the network mode draw settings
//! on the party side and still reproduce an in-process run bit for bit.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::channel::{
    apply_loss, apply_pauli_noise, transmit_pair, transmit_photon2, ChannelConfig, EveRecord,
    EveStrategy,
};
use crate::error::{Error, Result};
use crate::observables::{group, kets, Outcomes, Party, Setting};
use crate::qmath::{born_sample, measure_photon, Basis, Photon, SimRng, StateVec};
use crate::security::{build_report, qber, RevealedPair, SecurityReport, Tally, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Ent,
    Pm,
    Ekert,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub mode: Mode,
    pub rounds: u64,
    pub seed: u64,
    pub channel: ChannelConfig,
    pub reveal_frac: f64,
    pub threshold: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Ent,
            rounds: 100_000,
            seed: 0,
            channel: ChannelConfig::default(),
            reveal_frac: 0.1,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.reveal_frac) {
            return Err(Error::Config(format!(
                "reveal_frac = {} is outside [0, 1]",
                self.reveal_frac
            )));
        }
        if !(self.threshold > 7.0 && self.threshold < 9.0) {
            return Err(Error::Config(format!(
                "threshold = {} is outside (7, 9)",
                self.threshold
            )));
        }
        match (self.mode, self.channel.eve) {
            (Mode::Pm, EveStrategy::InterceptResendBoth) => Err(Error::Config(
                "eve ir-both is not available in pm mode (photon 1 stays with Alice)".into(),
            )),
            (Mode::Ekert, eve) if eve != EveStrategy::None => Err(Error::Config(
                "the ekert baseline does not model an eavesdropper".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Which observable pair is perfectly correlated for a pair of groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftEntry {
    pub a_idx: usize,
    pub b_idx: usize,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiftTable {
    entries: [[SiftEntry; 3]; 3],
}

const fn entry(a_idx: usize, b_idx: usize, sign: i8) -> SiftEntry {
    SiftEntry { a_idx, b_idx, sign }
}

impl SiftTable {
    pub fn standard() -> Self {
        Self {
            entries: [
                // A1 = [z1, x1', z1*x1']
                [entry(1, 0, 1), entry(0, 0, 1), entry(2, 0, 1)],
                // A2 = [z1', x1, x1*z1']
                [entry(1, 1, 1), entry(0, 1, 1), entry(2, 1, 1)],
                // A3 = [z1z1', x1x1', z1z1'*x1x1']
                [entry(1, 2, 1), entry(0, 2, 1), entry(2, 2, -1)],
            ],
        }
    }

    pub fn lookup(&self, alice: Setting, bob: Setting) -> Result<SiftEntry> {
        if alice.party() != Party::Alice || bob.party() != Party::Bob {
            return Err(Error::InvalidSetting(format!(
                "({alice}, {bob}) is not an (A, B) pair"
            )));
        }
        Ok(self.entries[alice.slot()][bob.slot()])
    }

    /// All nine `(A, B)` pairs, row-major, `(A3, B3)` last.
    pub fn pairs() -> impl Iterator<Item = (Setting, Setting)> {
        Setting::ALICE
            .into_iter()
            .flat_map(|a| Setting::BOB.into_iter().map(move |b| (a, b)))
    }

    /// `(k_A, k_B)` with `k_A = (1 + o_A)/2` and `k_B = (1 + sign·o_B)/2`.
    pub fn key_bits(&self, round: &RevealedPair) -> Result<(u8, u8)> {
        let e = self.lookup(round.alice, round.bob)?;
        Ok((
            to_bit(round.outcomes_a.get(e.a_idx)),
            to_bit(e.sign * round.outcomes_b.get(e.b_idx)),
        ))
    }
}

impl Default for SiftTable {
    fn default() -> Self {
        Self::standard()
    }
}

fn to_bit(value: i8) -> u8 {
    ((1 + value) / 2) as u8
}

pub fn sift_lookup(a: Setting, b: Setting) -> Result<(usize, usize, i8)> {
    let e = SiftTable::standard().lookup(a, b)?;
    Ok((e.a_idx, e.b_idx, e.sign))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_id: u64,
    pub detected_a: bool,
    pub detected_b: bool,
    pub setting_a: Setting,
    pub setting_b: Setting,
    pub outcomes_a: Option<Outcomes>,
    pub outcomes_b: Option<Outcomes>,
    pub eve: Option<EveRecord>,
    pub revealed: bool,
}

impl RoundRecord {
    pub fn is_coincidence(&self) -> bool {
        self.detected_a && self.detected_b
    }

    pub fn revealed_pair(&self) -> Option<RevealedPair> {
        Some(RevealedPair {
            alice: self.setting_a,
            bob: self.setting_b,
            outcomes_a: self.outcomes_a?,
            outcomes_b: self.outcomes_b?,
        })
    }
}

/// Per-round random stream roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Quantum = 0,
    AliceSetting = 1,
    BobSetting = 2,
}

/// Stream used for choosing the revealed sample.
pub const SIFT_STREAM: u64 = u64::MAX;

pub fn round_rng(seed: u64, round_id: u64, stream: Stream) -> SimRng {
    SimRng::with_stream(seed, round_id.wrapping_mul(4) + stream as u64)
}

/// The party's uniformly random group choice for a round.
pub fn choose_setting(seed: u64, round_id: u64, party: Party) -> Setting {
    let (stream, groups) = match party {
        Party::Alice => (Stream::AliceSetting, Setting::ALICE),
        Party::Bob => (Stream::BobSetting, Setting::BOB),
    };
    groups[round_rng(seed, round_id, stream).below(3)]
}

/// Product bases `A ⊗ B` for all nine setting pairs, outcome `4*i + j`.
fn joint_basis(alice: Setting, bob: Setting) -> &'static Basis {
    static BASES: OnceLock<Vec<Basis>> = OnceLock::new();
    let bases = BASES.get_or_init(|| {
        SiftTable::pairs()
            .map(|(a, b)| {
                group(a)
                    .eigenbasis
                    .product(&group(b).eigenbasis)
                    .expect("4x4 -> 16")
            })
            .collect()
    });
    &bases[alice.slot() * 3 + bob.slot()]
}

/// Quantum phase of one round for given settings. This is what the source
/// process runs in network mode.
pub fn measure_round(
    mode: Mode,
    channel: &ChannelConfig,
    seed: u64,
    round_id: u64,
    setting_a: Setting,
    setting_b: Setting,
) -> Result<RoundRecord> {
    if setting_a.party() != Party::Alice || setting_b.party() != Party::Bob {
        return Err(Error::InvalidSetting(format!("({setting_a}, {setting_b})")));
    }
    let mut rng = round_rng(seed, round_id, Stream::Quantum);
    let (detected_a, detected_b) = apply_loss(&mut rng, channel.eta);
    let source = kets::source_state();
    let (ia, ib, eve) = match mode {
        Mode::Ent => {
            let (psi, eve) = transmit_pair(&source, channel, &mut rng)?;
            let (joint, _) = born_sample(&psi, joint_basis(setting_a, setting_b), &mut rng)?;
            (joint / 4, joint % 4, eve)
        }
        Mode::Pm => {
            let (ia, _, phi2) = measure_photon(
                &source,
                Photon::First,
                &group(setting_a).eigenbasis,
                &mut rng,
            )?;
            let (phi2, eve) = transmit_photon2(&phi2, channel, &mut rng)?;
            let (ib, _) = born_sample(&phi2, &group(setting_b).eigenbasis, &mut rng)?;
            (ia, ib, eve)
        }
        Mode::Ekert => {
            return Err(Error::Config(
                "ekert rounds are produced by run_ekert_baseline".into(),
            ))
        }
    };
    Ok(RoundRecord {
        round_id,
        detected_a,
        detected_b,
        setting_a,
        setting_b,
        outcomes_a: detected_a.then(|| group(setting_a).outcomes(ia)),
        outcomes_b: detected_b.then(|| group(setting_b).outcomes(ib)),
        eve,
        revealed: false,
    })
}

/// One full round: both parties choose their groups, then the quantum phase.
pub fn run_round(config: &SessionConfig, round_id: u64) -> Result<RoundRecord> {
    let a = choose_setting(config.seed, round_id, Party::Alice);
    let b = choose_setting(config.seed, round_id, Party::Bob);
    measure_round(config.mode, &config.channel, config.seed, round_id, a, b)
}

/// How to iterate over independent rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Data-parallel over rounds; sequential when built without `parallel`.
    #[default]
    Parallel,
}

pub(crate) fn map_rounds<T, F>(ids: std::ops::Range<u64>, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    match exec {
        Execution::Sequential => ids.map(f).collect(),
        Execution::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                ids.into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                ids.map(f).collect()
            }
        }
    }
}

/// Picks `round(frac · n)` of the sifted round ids uniformly, returned sorted.
pub fn select_reveal(sifted: &[u64], reveal_frac: f64, rng: &mut SimRng) -> Vec<u64> {
    let n = sifted.len();
    let k = ((reveal_frac * n as f64).round() as usize).min(n);
    let mut picked: Vec<u64> = rand::seq::index::sample(rng, n, k)
        .into_iter()
        .map(|i| sifted[i])
        .collect();
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SiftOutcome {
    pub key_alice: Vec<u8>,
    pub key_bob: Vec<u8>,
    /// Coincidence round ids, ascending.
    pub sifted: Vec<u64>,
    /// Sampled round ids, ascending; excluded from the keys.
    pub revealed: Vec<u64>,
}

/// Keeps coincidences, samples the revealed subset and derives one key bit
/// per remaining coincidence from the table-designated observables.
pub fn sift(
    records: &[RoundRecord],
    table: &SiftTable,
    rng: &mut SimRng,
    reveal_frac: f64,
) -> Result<SiftOutcome> {
    let coincident: Vec<&RoundRecord> = records.iter().filter(|r| r.is_coincidence()).collect();
    let sifted: Vec<u64> = coincident.iter().map(|r| r.round_id).collect();
    let revealed = select_reveal(&sifted, reveal_frac, rng);
    let mut key_alice = Vec::with_capacity(sifted.len() - revealed.len());
    let mut key_bob = Vec::with_capacity(sifted.len() - revealed.len());
    for record in coincident {
        if revealed.binary_search(&record.round_id).is_ok() {
            continue;
        }
        let pair = record
            .revealed_pair()
            .ok_or_else(|| Error::Protocol(format!("round {} lacks outcomes", record.round_id)))?;
        let (ka, kb) = table.key_bits(&pair)?;
        key_alice.push(ka);
        key_bob.push(kb);
    }
    Ok(SiftOutcome {
        key_alice,
        key_bob,
        sifted,
        revealed,
    })
}

mod bitstring {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[u8], s: S) -> Result<S::Ok, S::Error> {
        let text: String = bits
            .iter()
            .map(|b| if *b == 0 { '0' } else { '1' })
            .collect();
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(serde::de::Error::custom(format!(
                    "bad key character {other:?}"
                ))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub config: SessionConfig,
    pub records: Vec<RoundRecord>,
    #[serde(with = "bitstring")]
    pub key_alice: Vec<u8>,
    #[serde(with = "bitstring")]
    pub key_bob: Vec<u8>,
    /// Disagreement over every sifted round, revealed or not. Only a
    /// simulator can compute this; the parties see `report.qber`.
    pub key_error_rate: Option<f64>,
    pub report: SecurityReport,
}

pub fn run_session(config: &SessionConfig) -> Result<SessionResult> {
    run_session_with(config, Execution::default())
}

pub fn run_session_with(config: &SessionConfig, exec: Execution) -> Result<SessionResult> {
    config.validate()?;
    if config.mode == Mode::Ekert {
        return Err(Error::Config(
            "use run_ekert_baseline for the ekert mode".into(),
        ));
    }
    let records = map_rounds(0..config.rounds, exec, |id| run_round(config, id))?;
    finish_session(config, records)
}

/// Sifting and reporting over already measured rounds.
pub fn finish_session(
    config: &SessionConfig,
    mut records: Vec<RoundRecord>,
) -> Result<SessionResult> {
    let table = SiftTable::standard();
    let mut rng = SimRng::with_stream(config.seed, SIFT_STREAM);
    let outcome = sift(&records, &table, &mut rng, config.reveal_frac)?;

    let mut revealed_pairs = Vec::with_capacity(outcome.revealed.len());
    let mut all_bits = Vec::with_capacity(outcome.sifted.len());
    for record in records.iter_mut().filter(|r| r.is_coincidence()) {
        let pair = record.revealed_pair().expect("coincidences carry outcomes");
        all_bits.push(table.key_bits(&pair)?);
        if outcome.revealed.binary_search(&record.round_id).is_ok() {
            record.revealed = true;
            revealed_pairs.push(pair);
        }
    }

    let tally = Tally {
        rounds: config.rounds,
        coincidences: outcome.sifted.len() as u64,
        sifted: outcome.sifted.len() as u64,
        key_length: outcome.key_alice.len() as u64,
    };
    let report = build_report(tally, &revealed_pairs, &table, config.threshold)?;
    Ok(SessionResult {
        config: *config,
        records,
        key_alice: outcome.key_alice,
        key_bob: outcome.key_bob,
        key_error_rate: qber(&all_bits).ok(),
        report,
    })
}

/// Prepare-and-measure variant: Alice measures photon 1 herself.
pub fn run_pm_variant(config: &SessionConfig) -> Result<SessionResult> {
    run_session(&SessionConfig {
        mode: Mode::Pm,
        ..*config
    })
}

/// Error rates split by whether Eve's B-group matched Bob's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EveConditionedErrors {
    pub matched: Option<f64>,
    pub matched_rounds: u64,
    pub mismatched: Option<f64>,
    pub mismatched_rounds: u64,
}

pub fn eve_conditioned_errors(
    records: &[RoundRecord],
    table: &SiftTable,
) -> Result<EveConditionedErrors> {
    let mut matched = Vec::new();
    let mut mismatched = Vec::new();
    for record in records.iter().filter(|r| r.is_coincidence()) {
        let Some(guess) = record.eve.as_ref().and_then(|e| e.setting_b_guess) else {
            continue;
        };
        let pair = record.revealed_pair().expect("coincidences carry outcomes");
        let bits = table.key_bits(&pair)?;
        if guess == record.setting_b {
            matched.push(bits);
        } else {
            mismatched.push(bits);
        }
    }
    Ok(EveConditionedErrors {
        matched: qber(&matched).ok(),
        matched_rounds: matched.len() as u64,
        mismatched: qber(&mismatched).ok(),
        mismatched_rounds: mismatched.len() as u64,
    })
}

/// Analyzer angles of the polarization baseline. Matching orientations are
/// `(a2, b1)` and `(a3, b2)`, two of the nine setting pairs.
pub const EKERT_ALICE_ANGLES: [f64; 3] = [0.0, PI / 8.0, PI / 4.0];
pub const EKERT_BOB_ANGLES: [f64; 3] = [PI / 8.0, PI / 4.0, 3.0 * PI / 8.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EkertRound {
    pub round_id: u64,
    pub coincidence: bool,
    pub alice_slot: usize,
    pub bob_slot: usize,
    pub outcome_a: i8,
    pub outcome_b: i8,
}

impl EkertRound {
    pub fn is_key_round(&self) -> bool {
        EKERT_ALICE_ANGLES[self.alice_slot] == EKERT_BOB_ANGLES[self.bob_slot]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub rounds: u64,
    pub coincidences: u64,
    pub raw_key_bits: u64,
    pub raw_key_fraction: Option<f64>,
    pub raw_key_fraction_stderr: Option<f64>,
    /// Disagreement over matching-orientation coincidences.
    pub key_qber: Option<f64>,
}

fn analyzer(theta: f64) -> Basis {
    let (s, c) = theta.sin_cos();
    Basis::new(vec![
        StateVec::from_real(&[c, s]).expect("dim 2"),
        StateVec::from_real(&[-s, c]).expect("dim 2"),
    ])
    .expect("rotated basis is orthonormal")
}

fn polarization_pair() -> StateVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVec::from_real(&[s, 0.0, 0.0, s]).expect("dim 4")
}

pub fn ekert_round(config: &SessionConfig, round_id: u64) -> Result<EkertRound> {
    let alice_slot = choose_setting(config.seed, round_id, Party::Alice).slot();
    let bob_slot = choose_setting(config.seed, round_id, Party::Bob).slot();
    let mut rng = round_rng(config.seed, round_id, Stream::Quantum);
    let (da, db) = apply_loss(&mut rng, config.channel.eta);
    let psi = apply_pauli_noise(&polarization_pair(), config.channel.pauli_p, &mut rng)?;
    let basis =
        analyzer(EKERT_ALICE_ANGLES[alice_slot]).product(&analyzer(EKERT_BOB_ANGLES[bob_slot]))?;
    let (joint, _) = born_sample(&psi, &basis, &mut rng)?;
    let sign = |i: usize| if i == 0 { 1 } else { -1 };
    Ok(EkertRound {
        round_id,
        coincidence: da && db,
        alice_slot,
        bob_slot,
        outcome_a: sign(joint / 2),
        outcome_b: sign(joint % 2),
    })
}

/// Sift-accounting run of the polarization baseline.
pub fn run_ekert_baseline(config: &SessionConfig) -> Result<BaselineResult> {
    run_ekert_baseline_with(config, Execution::default())
}

pub fn run_ekert_baseline_with(config: &SessionConfig, exec: Execution) -> Result<BaselineResult> {
    let config = SessionConfig {
        mode: Mode::Ekert,
        ..*config
    };
    config.validate()?;
    let rounds = map_rounds(0..config.rounds, exec, |id| ekert_round(&config, id))?;
    let coincident: Vec<&EkertRound> = rounds.iter().filter(|r| r.coincidence).collect();
    let key: Vec<(u8, u8)> = coincident
        .iter()
        .filter(|r| r.is_key_round())
        .map(|r| (to_bit(r.outcome_a), to_bit(r.outcome_b)))
        .collect();
    let n = coincident.len() as u64;
    let fraction = (n > 0).then(|| key.len() as f64 / n as f64);
    Ok(BaselineResult {
        rounds: config.rounds,
        coincidences: n,
        raw_key_bits: key.len() as u64,
        raw_key_fraction: fraction,
        raw_key_fraction_stderr: fraction.map(|f| (f * (1.0 - f) / n as f64).sqrt()),
        key_qber: qber(&key).ok(),
    })
}

/// Channel parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    PauliP,
    Eta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub bell_s: Option<f64>,
    pub bell_s_stderr: Option<f64>,
    pub qber: Option<f64>,
}

/// Runs `steps` sessions with the parameter spaced evenly over
/// `[from, to]`, endpoints included.
pub fn sweep(
    base: &SessionConfig,
    param: SweepParam,
    from: f64,
    to: f64,
    steps: usize,
) -> Result<Vec<SweepPoint>> {
    if steps == 0 {
        return Err(Error::Config("sweep needs at least one step".into()));
    }
    (0..steps)
        .map(|k| {
            let value = if steps == 1 {
                from
            } else {
                from + (to - from) * k as f64 / (steps - 1) as f64
            };
            let mut config = *base;
            match param {
                SweepParam::PauliP => config.channel.pauli_p = value,
                SweepParam::Eta => config.channel.eta = value,
            }
            let result = run_session(&config)?;
            Ok(SweepPoint {
                value,
                bell_s: result.report.bell_s,
                bell_s_stderr: result.report.bell_s_stderr,
                qber: result.report.qber,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::{eigenequation_vector, EIGENEQUATIONS};
    use crate::qmath::{expectation, Tensor};
    use crate::security::Verdict;

    fn config(rounds: u64) -> SessionConfig {
        SessionConfig {
            rounds,
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn sift_lookup_examples() {
        assert_eq!(sift_lookup(Setting::A1, Setting::B2).unwrap(), (0, 0, 1));
        assert_eq!(sift_lookup(Setting::A3, Setting::B3).unwrap(), (2, 2, -1));
        assert_eq!(sift_lookup(Setting::A2, Setting::B1).unwrap(), (1, 1, 1));
        assert!(sift_lookup(Setting::B1, Setting::B2).is_err());
    }

    #[test]
    fn table_agrees_with_eigenequations() {
        let table = SiftTable::standard();
        let mut negative = 0;
        for corr in EIGENEQUATIONS {
            let e = table.lookup(corr.alice, corr.bob).unwrap();
            assert_eq!((e.a_idx, e.b_idx), (corr.alice_op, corr.bob_op));
            negative += (e.sign < 0) as usize;
        }
        assert_eq!(negative, 1);
    }

    /// For the source state, exactly one of the nine observable pairs of
    /// every cell is perfectly correlated, and it is the tabulated one.
    #[test]
    fn table_matches_state_oracle() {
        let psi = kets::source_state();
        let table = SiftTable::standard();
        for (a, b) in SiftTable::pairs() {
            let mut perfect = Vec::new();
            for i in 0..3 {
                for j in 0..3 {
                    let op = group(a).ops[i].tensor(&group(b).ops[j]).unwrap();
                    let e = expectation(&op, &psi).unwrap();
                    if (e.abs() - 1.0).abs() < 1e-12 {
                        perfect.push((i, j, e.round() as i8));
                    }
                }
            }
            let t = table.lookup(a, b).unwrap();
            assert_eq!(perfect, vec![(t.a_idx, t.b_idx, t.sign)], "{a}/{b}");
        }
        assert_eq!(eigenequation_vector(&psi).unwrap()[8].round(), -1.0);
    }

    #[test]
    fn noiseless_rounds_are_perfectly_correlated() {
        let cfg = config(3000);
        let table = SiftTable::standard();
        for id in 0..cfg.rounds {
            let r = run_round(&cfg, id).unwrap();
            assert!(r.is_coincidence());
            let (ka, kb) = table.key_bits(&r.revealed_pair().unwrap()).unwrap();
            assert_eq!(ka, kb);
            assert!(r.outcomes_a.unwrap().is_consistent());
            assert!(r.outcomes_b.unwrap().is_consistent());
            if (r.setting_a, r.setting_b) == (Setting::A1, Setting::B2) {
                assert_eq!(
                    r.outcomes_a.unwrap().get(0) * r.outcomes_b.unwrap().get(0),
                    1
                );
            }
            if (r.setting_a, r.setting_b) == (Setting::A3, Setting::B3) {
                assert_eq!(
                    r.outcomes_a.unwrap().get(2) * r.outcomes_b.unwrap().get(2),
                    -1
                );
            }
        }
    }

    #[test]
    fn zero_efficiency_detects_nothing() {
        let mut cfg = config(200);
        cfg.channel.eta = 0.0;
        for id in 0..cfg.rounds {
            let r = run_round(&cfg, id).unwrap();
            assert!(!r.detected_a && !r.detected_b);
            assert!(r.outcomes_a.is_none() && r.outcomes_b.is_none());
        }
        let result = run_session(&cfg).unwrap();
        assert!(result.key_alice.is_empty());
        assert_eq!(result.report.verdict, Verdict::Inconclusive);
        assert_eq!(result.report.efficiency, None);
    }

    #[test]
    fn sift_sign_folding() {
        let record = RoundRecord {
            round_id: 0,
            detected_a: true,
            detected_b: true,
            setting_a: Setting::A3,
            setting_b: Setting::B3,
            outcomes_a: Some(Outcomes([1, 1, 1])),
            outcomes_b: Some(Outcomes([1, -1, -1])),
            eve: None,
            revealed: false,
        };
        let out = sift(&[record], &SiftTable::standard(), &mut SimRng::new(0), 0.0).unwrap();
        assert_eq!(out.key_alice, vec![1]);
        assert_eq!(out.key_bob, vec![1]);
    }

    #[test]
    fn sift_full_reveal_empties_keys() {
        let cfg = config(500);
        let records: Vec<_> = (0..cfg.rounds)
            .map(|id| run_round(&cfg, id).unwrap())
            .collect();
        let out = sift(&records, &SiftTable::standard(), &mut SimRng::new(1), 1.0).unwrap();
        assert!(out.key_alice.is_empty() && out.key_bob.is_empty());
        assert_eq!(out.revealed.len(), 500);
    }

    #[test]
    fn sift_without_reveal_keeps_every_coincidence() {
        let cfg = config(10_000);
        let records: Vec<_> = (0..cfg.rounds)
            .map(|id| run_round(&cfg, id).unwrap())
            .collect();
        let out = sift(&records, &SiftTable::standard(), &mut SimRng::new(1), 0.0).unwrap();
        assert_eq!(out.key_alice.len(), 10_000);
        assert_eq!(out.key_alice, out.key_bob);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut cfg = config(2000);
        cfg.channel.pauli_p = 0.05;
        cfg.channel.eta = 0.9;
        let seq = run_session_with(&cfg, Execution::Sequential).unwrap();
        let par = run_session_with(&cfg, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn pm_noiseless_has_no_errors() {
        let result = run_pm_variant(&config(5000)).unwrap();
        assert_eq!(result.key_error_rate, Some(0.0));
        assert_eq!(result.report.qber, Some(0.0));
        assert_eq!(result.key_alice, result.key_bob);
    }

    #[test]
    fn pm_rejects_ir_both() {
        let mut cfg = config(10);
        cfg.mode = Mode::Pm;
        cfg.channel.eve = EveStrategy::InterceptResendBoth;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn ekert_matching_settings_agree() {
        let result = run_ekert_baseline(&config(20_000)).unwrap();
        assert_eq!(result.key_qber, Some(0.0));
        let f = result.raw_key_fraction.unwrap();
        assert!((f - 2.0 / 9.0).abs() < 4.0 * result.raw_key_fraction_stderr.unwrap() + 1e-9);
    }

    #[test]
    fn ekert_key_pairs_are_two_of_nine() {
        let mut key_pairs = 0;
        for a in 0..3 {
            for b in 0..3 {
                let r = EkertRound {
                    round_id: 0,
                    coincidence: true,
                    alice_slot: a,
                    bob_slot: b,
                    outcome_a: 1,
                    outcome_b: 1,
                };
                key_pairs += r.is_key_round() as usize;
            }
        }
        assert_eq!(key_pairs, 2);
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(1);
        cfg.rounds = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = config(1);
        cfg.reveal_frac = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = config(1);
        cfg.threshold = 9.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn reveal_selection_size() {
        let ids: Vec<u64> = (0..1000).collect();
        let picked = select_reveal(&ids, 0.1, &mut SimRng::new(3));
        assert_eq!(picked.len(), 100);
        assert!(picked.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sweep_spacing_includes_endpoints() {
        let pts = sweep(&config(200), SweepParam::PauliP, 0.0, 0.3, 4).unwrap();
        let values: Vec<f64> = pts.iter().map(|p| p.value).collect();
        assert_eq!(values.len(), 4);
        assert_eq!(values[0], 0.0);
        assert!((values[3] - 0.3).abs() < 1e-15);
    }
}
