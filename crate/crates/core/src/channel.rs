//! Everything between the source and the detectors: photon loss, stochastic
//! Pauli noise and intercept–resend eavesdropping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{group, Outcomes, Setting};
use crate::qmath::{
    apply_pauli, born_sample, measure_photon, Pauli, Photon, SimRng, StateVec, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveStrategy {
    #[default]
    None,
    /// Measure photon 1 in a random A-group and photon 2 in a random B-group,
    /// resend the collapsed eigenvectors.
    #[serde(rename = "ir-both")]
    InterceptResendBoth,
    /// Measure photon 2 in a random B-group and resend the eigenvector.
    #[serde(rename = "ir-photon2")]
    InterceptResendPhoton2,
}

/// Relative order of noise and eavesdropper on the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelOrder {
    #[default]
    NoiseThenEve,
    EveThenNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Per-photon detection probability.
    pub eta: f64,
    /// Per-qubit probability of a uniformly random X, Y or Z.
    pub pauli_p: f64,
    pub eve: EveStrategy,
    pub order: ChannelOrder,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            pauli_p: 0.0,
            eve: EveStrategy::None,
            order: ChannelOrder::NoiseThenEve,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("eta", self.eta), ("pauli_p", self.pauli_p)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!("{name} = {value} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.pauli_p == 0.0 && self.eve == EveStrategy::None
    }
}

/// What the eavesdropper chose and saw on one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveRecord {
    pub setting_a_guess: Option<Setting>,
    pub setting_b_guess: Option<Setting>,
    pub outcomes_a: Option<Outcomes>,
    pub outcomes_b: Option<Outcomes>,
    /// Resent eigenvectors as `group[index]` labels, photon 1 first.
    pub resent: Vec<String>,
}

/// Two independent Bernoulli(eta) detection draws, Alice's first.
pub fn apply_loss(rng: &mut SimRng, eta: f64) -> (bool, bool) {
    let a = rng.bernoulli(eta);
    let b = rng.bernoulli(eta);
    (a, b)
}

/// Independently for every qubit of `psi`, with probability `p` applies a
/// uniformly chosen X, Y or Z. Works on one photon (2 qubits) or a pair (4).
pub fn apply_pauli_noise(psi: &StateVec, p: f64, rng: &mut SimRng) -> Result<StateVec> {
    let n_qubits = psi.dim().trailing_zeros() as usize;
    let mut out = psi.clone();
    for qubit in 0..n_qubits {
        if rng.bernoulli(p) {
            let pauli = Pauli::ALL[rng.below(3)];
            out = apply_pauli(&out, qubit, pauli)?;
        }
    }
    out.normalized()
}

fn resent_label(setting: Setting, index: usize) -> String {
    format!("{setting}[{index}]")
}

/// Eve picks one A-group and one B-group uniformly, measures photon 1 then
/// photon 2 and resends the product of the two collapsed eigenvectors.
pub fn eve_intercept_resend_both(
    psi: &StateVec,
    rng: &mut SimRng,
) -> Result<(StateVec, EveRecord)> {
    let guess_a = Setting::ALICE[rng.below(3)];
    let guess_b = Setting::BOB[rng.below(3)];
    let ga = group(guess_a);
    let gb = group(guess_b);
    let (ia, va, rest) = measure_photon(psi, Photon::First, &ga.eigenbasis, rng)?;
    let (ib, vb) = born_sample(&rest, &gb.eigenbasis, rng)?;
    let resent = va.tensor(&vb)?;
    Ok((
        resent,
        EveRecord {
            setting_a_guess: Some(guess_a),
            setting_b_guess: Some(guess_b),
            outcomes_a: Some(ga.outcomes(ia)),
            outcomes_b: Some(gb.outcomes(ib)),
            resent: vec![resent_label(guess_a, ia), resent_label(guess_b, ib)],
        },
    ))
}

/// Eve picks a B-group uniformly, measures the 4-dim photon-2 state and
/// resends the collapsed eigenvector.
pub fn eve_intercept_resend_photon2(
    phi2: &StateVec,
    rng: &mut SimRng,
) -> Result<(StateVec, EveRecord)> {
    let guess_b = Setting::BOB[rng.below(3)];
    let gb = group(guess_b);
    let (ib, vb) = born_sample(phi2, &gb.eigenbasis, rng)?;
    Ok((
        vb,
        EveRecord {
            setting_a_guess: None,
            setting_b_guess: Some(guess_b),
            outcomes_a: None,
            outcomes_b: Some(gb.outcomes(ib)),
            resent: vec![resent_label(guess_b, ib)],
        },
    ))
}

/// Same attack on photon 2 while it is still entangled with photon 1:
/// photon 1 is left in its conditional state.
pub fn eve_intercept_resend_photon2_of_pair(
    psi: &StateVec,
    rng: &mut SimRng,
) -> Result<(StateVec, EveRecord)> {
    let guess_b = Setting::BOB[rng.below(3)];
    let gb = group(guess_b);
    let (ib, vb, photon1) = measure_photon(psi, Photon::Second, &gb.eigenbasis, rng)?;
    Ok((
        photon1.tensor(&vb)?,
        EveRecord {
            setting_a_guess: None,
            setting_b_guess: Some(guess_b),
            outcomes_a: None,
            outcomes_b: Some(gb.outcomes(ib)),
            resent: vec![resent_label(guess_b, ib)],
        },
    ))
}

/// Noise and eavesdropping on a pair state, in the configured order.
pub fn transmit_pair(
    psi: &StateVec,
    config: &ChannelConfig,
    rng: &mut SimRng,
) -> Result<(StateVec, Option<EveRecord>)> {
    let eve = |state: &StateVec, rng: &mut SimRng| -> Result<(StateVec, Option<EveRecord>)> {
        match config.eve {
            EveStrategy::None => Ok((state.clone(), None)),
            EveStrategy::InterceptResendBoth => {
                eve_intercept_resend_both(state, rng).map(|(s, r)| (s, Some(r)))
            }
            EveStrategy::InterceptResendPhoton2 => {
                eve_intercept_resend_photon2_of_pair(state, rng).map(|(s, r)| (s, Some(r)))
            }
        }
    };
    match config.order {
        ChannelOrder::NoiseThenEve => {
            let noisy = apply_pauli_noise(psi, config.pauli_p, rng)?;
            eve(&noisy, rng)
        }
        ChannelOrder::EveThenNoise => {
            let (state, record) = eve(psi, rng)?;
            Ok((apply_pauli_noise(&state, config.pauli_p, rng)?, record))
        }
    }
}

/// Noise and eavesdropping on photon 2 alone (prepare-and-measure leg).
pub fn transmit_photon2(
    phi2: &StateVec,
    config: &ChannelConfig,
    rng: &mut SimRng,
) -> Result<(StateVec, Option<EveRecord>)> {
    let eve = |state: &StateVec, rng: &mut SimRng| -> Result<(StateVec, Option<EveRecord>)> {
        match config.eve {
            EveStrategy::None => Ok((state.clone(), None)),
            EveStrategy::InterceptResendPhoton2 => {
                eve_intercept_resend_photon2(state, rng).map(|(s, r)| (s, Some(r)))
            }
            EveStrategy::InterceptResendBoth => Err(Error::Config(
                "ir-both needs photon 1 in transit; use ir-photon2 in pm mode".into(),
            )),
        }
    };
    match config.order {
        ChannelOrder::NoiseThenEve => {
            let noisy = apply_pauli_noise(phi2, config.pauli_p, rng)?;
            eve(&noisy, rng)
        }
        ChannelOrder::EveThenNoise => {
            let (state, record) = eve(phi2, rng)?;
            Ok((apply_pauli_noise(&state, config.pauli_p, rng)?, record))
        }
    }
}
