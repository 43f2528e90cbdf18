//! Device-independent-style QKD simulation with two-qubit-per-photon
//! observable groups.
//!
//! Each photon carries a polarization qubit and a time-bin qubit. Alice and
//! Bob each pick one of three commuting observable groups per round; the
//! shared state makes nine correlators perfectly (anti)correlated, which
//! yields both a key and a Bell-type test whose local bound is 7 and whose
//! quantum value is 9.
//!
//! Modules, bottom up:
//!
//! - [`qmath`]: state vectors, operators, tensor products, Born sampling.
//! - [`observables`]: the six groups, their eigenbases and the nine
//!   correlators.
//! - [`channel`]: loss, Pauli noise and intercept-resend attacks.
//! - [`protocol`]: rounds, sifting, sessions, the Ekert baseline and sweeps.
//! - [`security`]: correlation estimates, the Bell statistic and verdicts.
//! - [`report`]: canonical JSON and CSV output.
//! - [`net`]: the three-process TCP mode.

pub mod channel;
pub mod error;
pub mod net;
pub mod observables;
pub mod protocol;
pub mod qmath;
pub mod report;
pub mod security;

pub use error::{Error, Result};
pub use observables::{Outcomes, Party, Setting};
pub use protocol::{run_session, Execution, Mode, SessionConfig, SessionResult};
pub use security::{SecurityReport, Verdict};
