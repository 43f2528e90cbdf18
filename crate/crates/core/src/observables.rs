//! The nine local observables of each party, grouped into the six
//! co-measurable apparatuses `A1..A3` (photon 1) and `B1..B3` (photon 2).
//!
//! Each group holds three commuting ±1 observables on one photon's
//! polarization ⊗ time space, listed so that the third is the product of the
//! first two, and a closed-form common eigenbasis with outcome labels.
//! Eigenvectors are ordered by descending label on `(o1, o2)`:
//! `(+,+), (+,-), (-,+), (-,-)`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmath::{
    expectation, inner, tensor, Basis, Complex, Operator, StateVec, Tensor, ALGEBRA_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

/// One of the six measurement apparatuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    A1,
    A2,
    A3,
    B1,
    B2,
    B3,
}

impl Setting {
    pub const ALL: [Setting; 6] = [
        Setting::A1,
        Setting::A2,
        Setting::A3,
        Setting::B1,
        Setting::B2,
        Setting::B3,
    ];
    pub const ALICE: [Setting; 3] = [Setting::A1, Setting::A2, Setting::A3];
    pub const BOB: [Setting; 3] = [Setting::B1, Setting::B2, Setting::B3];

    pub fn new(party: Party, index: u8) -> Result<Self> {
        let settings = match party {
            Party::Alice => Self::ALICE,
            Party::Bob => Self::BOB,
        };
        index
            .checked_sub(1)
            .and_then(|i| settings.get(i as usize).copied())
            .ok_or_else(|| Error::InvalidSetting(format!("{party:?} index {index}")))
    }

    pub fn party(self) -> Party {
        match self {
            Setting::A1 | Setting::A2 | Setting::A3 => Party::Alice,
            _ => Party::Bob,
        }
    }

    /// 1-based group number.
    pub fn index(self) -> u8 {
        match self {
            Setting::A1 | Setting::B1 => 1,
            Setting::A2 | Setting::B2 => 2,
            Setting::A3 | Setting::B3 => 3,
        }
    }

    /// 0-based position among the party's three groups.
    pub fn slot(self) -> usize {
        self.index() as usize - 1
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|g| g.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidSetting(s.to_string()))
    }
}

/// The three ±1 readouts of one apparatus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcomes(pub [i8; 3]);

impl Outcomes {
    pub fn get(self, k: usize) -> i8 {
        self.0[k]
    }

    /// Third readout equals the product of the first two.
    pub fn is_consistent(self) -> bool {
        self.0.iter().all(|o| *o == 1 || *o == -1) && self.0[2] == self.0[0] * self.0[1]
    }
}

/// Polarization and time Pauli operators, each on a single qubit.
#[derive(Debug, Clone)]
pub struct PauliSet {
    pub x: Operator,
    pub z: Operator,
    pub x_time: Operator,
    pub z_time: Operator,
}

pub fn pauli_set() -> PauliSet {
    // x = |H⟩⟨V| + |V⟩⟨H|, z = |H⟩⟨H| - |V⟩⟨V|; primed twins act on ↑/↓
    let x = Operator::from_real(2, &[0.0, 1.0, 1.0, 0.0]).expect("2x2");
    let z = Operator::from_real(2, &[1.0, 0.0, 0.0, -1.0]).expect("2x2");
    PauliSet {
        x_time: x.clone(),
        z_time: z.clone(),
        x,
        z,
    }
}

/// Named one-photon and pair kets.
pub mod kets {
    use super::*;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    pub fn h() -> StateVec {
        StateVec::from_real(&[1.0, 0.0]).expect("dim 2")
    }
    pub fn v() -> StateVec {
        StateVec::from_real(&[0.0, 1.0]).expect("dim 2")
    }
    /// Polarization `(|H⟩+|V⟩)/√2`.
    pub fn plus() -> StateVec {
        StateVec::from_real(&[S, S]).expect("dim 2")
    }
    /// Polarization `(|H⟩-|V⟩)/√2`.
    pub fn minus() -> StateVec {
        StateVec::from_real(&[S, -S]).expect("dim 2")
    }
    /// Early time bin `|e⟩`.
    pub fn up() -> StateVec {
        h()
    }
    /// Late time bin `|l⟩`.
    pub fn down() -> StateVec {
        v()
    }
    pub fn up_bar() -> StateVec {
        plus()
    }
    pub fn down_bar() -> StateVec {
        minus()
    }

    /// `|pol⟩ ⊗ |time⟩` for one photon.
    pub fn photon(pol: &StateVec, time: &StateVec) -> StateVec {
        tensor(pol, time).expect("2x2")
    }

    /// `(a ± b)/√2` for one-photon kets.
    pub fn superpose(a: &StateVec, b: &StateVec, sign: f64) -> StateVec {
        a.add(&b.scaled(Complex::new(sign, 0.0)))
            .expect("equal dims")
            .scaled(Complex::new(S, 0.0))
    }

    /// The doubly entangled source state
    /// `½(|HH⟩+|VV⟩)(|↑↑⟩+|↓↓⟩)` in `(pol1, time1, pol2, time2)` order.
    pub fn source_state() -> StateVec {
        let mut amps = vec![Complex::ZERO; 16];
        for i in 0..4 {
            amps[5 * i] = Complex::new(0.5, 0.0);
        }
        StateVec::from_amps(amps).expect("dim 16")
    }
}

/// One apparatus: three commuting observables and their joint eigenbasis.
#[derive(Debug, Clone)]
pub struct ObservableGroup {
    pub setting: Setting,
    pub names: [&'static str; 3],
    pub ops: [Operator; 3],
    pub eigenbasis: Basis,
    pub labels: [Outcomes; 4],
}

impl ObservableGroup {
    pub fn outcomes(&self, index: usize) -> Outcomes {
        self.labels[index]
    }
}

const LABELS: [Outcomes; 4] = [
    Outcomes([1, 1, 1]),
    Outcomes([1, -1, -1]),
    Outcomes([-1, 1, -1]),
    Outcomes([-1, -1, 1]),
];

/// Local operators on one photon's `pol ⊗ time` space.
struct PhotonOps {
    z: Operator,
    x: Operator,
    zt: Operator,
    xt: Operator,
}

fn photon_ops() -> PhotonOps {
    let p = pauli_set();
    let id = Operator::identity(2).expect("dim 2");
    PhotonOps {
        z: p.z.tensor(&id).expect("4"),
        x: p.x.tensor(&id).expect("4"),
        zt: id.tensor(&p.z_time).expect("4"),
        xt: id.tensor(&p.x_time).expect("4"),
    }
}

fn product(a: &Operator, b: &Operator) -> Operator {
    a.mul(b).expect("same dim")
}

pub fn build_group(setting: Setting) -> ObservableGroup {
    use kets::*;
    let o = photon_ops();
    let zzt = product(&o.z, &o.zt);
    let xxt = product(&o.x, &o.xt);
    let zxt = product(&o.z, &o.xt);
    let xzt = product(&o.x, &o.zt);

    let (names, first, second, vectors): ([&'static str; 3], Operator, Operator, Vec<StateVec>) =
        match setting {
            Setting::A1 => (
                ["z1", "x1'", "z1*x1'"],
                o.z.clone(),
                o.xt.clone(),
                vec![
                    photon(&h(), &up_bar()),
                    photon(&h(), &down_bar()),
                    photon(&v(), &up_bar()),
                    photon(&v(), &down_bar()),
                ],
            ),
            Setting::A2 => (
                ["z1'", "x1", "x1*z1'"],
                o.zt.clone(),
                o.x.clone(),
                vec![
                    photon(&plus(), &up()),
                    photon(&minus(), &up()),
                    photon(&plus(), &down()),
                    photon(&minus(), &down()),
                ],
            ),
            Setting::A3 => {
                let hu = photon(&h(), &up());
                let hd = photon(&h(), &down());
                let vu = photon(&v(), &up());
                let vd = photon(&v(), &down());
                (
                    ["z1z1'", "x1x1'", "z1z1'*x1x1'"],
                    zzt.clone(),
                    xxt.clone(),
                    vec![
                        superpose(&hu, &vd, 1.0),
                        superpose(&hu, &vd, -1.0),
                        superpose(&hd, &vu, 1.0),
                        superpose(&hd, &vu, -1.0),
                    ],
                )
            }
            Setting::B1 => (
                ["x2'", "x2", "x2*x2'"],
                o.xt.clone(),
                o.x.clone(),
                vec![
                    photon(&plus(), &up_bar()),
                    photon(&minus(), &up_bar()),
                    photon(&plus(), &down_bar()),
                    photon(&minus(), &down_bar()),
                ],
            ),
            Setting::B2 => (
                ["z2", "z2'", "z2*z2'"],
                o.z.clone(),
                o.zt.clone(),
                vec![
                    photon(&h(), &up()),
                    photon(&h(), &down()),
                    photon(&v(), &up()),
                    photon(&v(), &down()),
                ],
            ),
            Setting::B3 => {
                let hub = photon(&h(), &up_bar());
                let hdb = photon(&h(), &down_bar());
                let vub = photon(&v(), &up_bar());
                let vdb = photon(&v(), &down_bar());
                (
                    ["z2x2'", "x2z2'", "z2x2'*x2z2'"],
                    zxt.clone(),
                    xzt.clone(),
                    vec![
                        superpose(&hub, &vdb, 1.0),
                        superpose(&hub, &vdb, -1.0),
                        superpose(&hdb, &vub, 1.0),
                        superpose(&hdb, &vub, -1.0),
                    ],
                )
            }
        };
    let third = product(&first, &second);
    let vectors = vectors
        .into_iter()
        .map(|v| v.with_canonical_phase())
        .collect();
    let eigenbasis = Basis::new(vectors).expect("closed-form eigenbasis is orthonormal");
    let group = ObservableGroup {
        setting,
        names,
        ops: [first, second, third],
        eigenbasis,
        labels: LABELS,
    };
    debug_assert!(verify_group(&group).is_ok());
    group
}

/// Checks that every eigenbasis vector is a simultaneous eigenvector of the
/// three operators with the stored labels, and that the operators commute.
pub fn verify_group(group: &ObservableGroup) -> Result<()> {
    for (a, op_a) in group.ops.iter().enumerate() {
        if !op_a.is_hermitian(ALGEBRA_TOL) {
            return Err(Error::InvalidSetting(format!(
                "{} op {a} not Hermitian",
                group.setting
            )));
        }
        for op_b in &group.ops[a + 1..] {
            if op_a.commutator(op_b)?.max_abs() >= ALGEBRA_TOL {
                return Err(Error::InvalidSetting(format!(
                    "{} ops do not commute",
                    group.setting
                )));
            }
        }
    }
    for (vec, label) in group.eigenbasis.vectors().iter().zip(&group.labels) {
        if !label.is_consistent() {
            return Err(Error::InvalidSetting(format!(
                "{} label {label:?}",
                group.setting
            )));
        }
        for (k, op) in group.ops.iter().enumerate() {
            let image = crate::qmath::apply(op, vec)?;
            let expected = vec.scaled(Complex::new(label.get(k) as f64, 0.0));
            if !image.approx_eq(&expected, ALGEBRA_TOL) {
                return Err(Error::InvalidSetting(format!(
                    "{} vector {label:?} fails op {k}",
                    group.setting
                )));
            }
        }
    }
    Ok(())
}

/// All six groups, built once.
pub fn groups() -> &'static [ObservableGroup; 6] {
    static GROUPS: OnceLock<[ObservableGroup; 6]> = OnceLock::new();
    GROUPS.get_or_init(|| Setting::ALL.map(build_group))
}

pub fn group(setting: Setting) -> &'static ObservableGroup {
    &groups()[setting as usize]
}

/// A two-party correlation: Alice's observable `alice_op` of group `alice`
/// times Bob's observable `bob_op` of group `bob`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Correlator {
    pub name: &'static str,
    pub alice: Setting,
    pub alice_op: usize,
    pub bob: Setting,
    pub bob_op: usize,
}

/// The nine perfect correlations of the source state in eigenequation order:
/// `z1·z2, z1'·z2', x1·x2, x1'·x2', z1z1'·z2·z2', x1x1'·x2·x2',
/// z1·x1'·z2x2', x1·z1'·x2z2', z1z1'·x1x1'·z2x2'·x2z2'`.
pub const EIGENEQUATIONS: [Correlator; 9] = [
    Correlator {
        name: "z1*z2",
        alice: Setting::A1,
        alice_op: 0,
        bob: Setting::B2,
        bob_op: 0,
    },
    Correlator {
        name: "z1'*z2'",
        alice: Setting::A2,
        alice_op: 0,
        bob: Setting::B2,
        bob_op: 1,
    },
    Correlator {
        name: "x1*x2",
        alice: Setting::A2,
        alice_op: 1,
        bob: Setting::B1,
        bob_op: 1,
    },
    Correlator {
        name: "x1'*x2'",
        alice: Setting::A1,
        alice_op: 1,
        bob: Setting::B1,
        bob_op: 0,
    },
    Correlator {
        name: "z1z1'*z2*z2'",
        alice: Setting::A3,
        alice_op: 0,
        bob: Setting::B2,
        bob_op: 2,
    },
    Correlator {
        name: "x1x1'*x2*x2'",
        alice: Setting::A3,
        alice_op: 1,
        bob: Setting::B1,
        bob_op: 2,
    },
    Correlator {
        name: "z1*x1'*z2x2'",
        alice: Setting::A1,
        alice_op: 2,
        bob: Setting::B3,
        bob_op: 0,
    },
    Correlator {
        name: "x1*z1'*x2z2'",
        alice: Setting::A2,
        alice_op: 2,
        bob: Setting::B3,
        bob_op: 1,
    },
    Correlator {
        name: "z1z1'*x1x1'*z2x2'*x2z2'",
        alice: Setting::A3,
        alice_op: 2,
        bob: Setting::B3,
        bob_op: 2,
    },
];

impl Correlator {
    /// The 16-dim operator `O_A ⊗ O_B`.
    pub fn operator(&self) -> Operator {
        group(self.alice).ops[self.alice_op]
            .tensor(&group(self.bob).ops[self.bob_op])
            .expect("4x4 -> 16")
    }
}

/// Expectations of the nine eigenequation operators on a pair state.
pub fn eigenequation_vector(psi: &StateVec) -> Result<[f64; 9]> {
    let mut out = [0.0; 9];
    for (slot, corr) in out.iter_mut().zip(&EIGENEQUATIONS) {
        *slot = expectation(&corr.operator(), psi)?;
    }
    Ok(out)
}

/// `|⟨e_β|e_α⟩|²` between the eigenbases of two groups of the same party.
pub fn mub_overlap(g1: &ObservableGroup, g2: &ObservableGroup) -> Result<[[f64; 4]; 4]> {
    if g1.setting == g2.setting {
        return Err(Error::InvalidSetting(format!(
            "overlap of {} with itself",
            g1.setting
        )));
    }
    if g1.setting.party() != g2.setting.party() {
        return Err(Error::InvalidSetting(format!(
            "{} and {} belong to different parties",
            g1.setting, g2.setting
        )));
    }
    let mut out = [[0.0; 4]; 4];
    for (alpha, ea) in g1.eigenbasis.vectors().iter().enumerate() {
        for (beta, eb) in g2.eigenbasis.vectors().iter().enumerate() {
            out[alpha][beta] = inner(eb, ea)?.norm_sqr();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDump {
    pub setting: Setting,
    pub observables: Vec<String>,
    /// One entry per eigenvector: `[re, im]` amplitudes in `(pol, time)` order.
    pub vectors: Vec<Vec<[f64; 2]>>,
    pub labels: Vec<Outcomes>,
}

/// Golden description of all six groups.
pub fn dump_groups() -> Vec<GroupDump> {
    groups()
        .iter()
        .map(|g| GroupDump {
            setting: g.setting,
            observables: g.names.iter().map(|s| s.to_string()).collect(),
            vectors: g
                .eigenbasis
                .vectors()
                .iter()
                .map(|v| v.amps().iter().map(|a| [a.re, a.im]).collect())
                .collect(),
            labels: g.labels.to_vec(),
        })
        .collect()
}
