//! Three-process network mode.
//!
//! A source process acts as a trusted simulation oracle for the quantum
//! phase: each party submits its group choices (`MEASURE`) and receives its
//! own detections and readouts (`OUTCOMES`). The source therefore learns both
//! settings before sampling. It is trusted, not an adversary.
//!
//! Alice and Bob then run the classical plane peer to peer:
//!
//! ```text
//! A -> B  HELLO          B -> A  HELLO
//! A -> B  DETECTIONS     B -> A  DETECTIONS
//! A -> B  SETTINGS       B -> A  SETTINGS        (coincidences only)
//! A -> B  REVEAL_REQUEST
//!                        B -> A  REVEAL
//! A -> B  REVEAL
//! A -> B  REPORT         B -> A  REPORT
//! A -> B  BYE            B -> A  BYE
//! ```
//!
//! Framing: 4-byte big-endian length, then that many bytes of UTF-8 JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{Outcomes, Party, Setting};
use crate::protocol::{
    choose_setting, map_rounds, measure_round, select_reveal, Execution, Mode, SessionConfig,
    SiftTable, SIFT_STREAM,
};
use crate::qmath::SimRng;
use crate::report::ReportDocument;
use crate::security::{build_report, RevealedPair, SecurityReport, Tally};

pub const MAX_FRAME_BYTES: usize = 64 * 1024 * 1024;
/// Rounds per MEASURE/OUTCOMES exchange.
pub const MEASURE_CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSetting {
    pub round_id: u64,
    pub setting: Setting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round_id: u64,
    pub detected: bool,
    pub outcomes: Option<Outcomes>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round_id: u64,
    pub outcomes: Outcomes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Body {
    Hello { role: Role, config: SessionConfig },
    Measure { settings: Vec<RoundSetting> },
    Outcomes { results: Vec<RoundResult> },
    Detections { round_ids: Vec<u64> },
    Settings { settings: Vec<RoundSetting> },
    RevealRequest { round_ids: Vec<u64> },
    Reveal { outcomes: Vec<RoundOutcome> },
    Report { report: SecurityReport },
    Bye,
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::Hello { .. } => "HELLO",
            Body::Measure { .. } => "MEASURE",
            Body::Outcomes { .. } => "OUTCOMES",
            Body::Detections { .. } => "DETECTIONS",
            Body::Settings { .. } => "SETTINGS",
            Body::RevealRequest { .. } => "REVEAL_REQUEST",
            Body::Reveal { .. } => "REVEAL",
            Body::Report { .. } => "REPORT",
            Body::Bye => "BYE",
        }
    }

    /// Round ids the message refers to.
    pub fn round_ids(&self) -> Vec<u64> {
        match self {
            Body::Measure { settings } | Body::Settings { settings } => {
                settings.iter().map(|s| s.round_id).collect()
            }
            Body::Outcomes { results } => results.iter().map(|r| r.round_id).collect(),
            Body::Detections { round_ids } | Body::RevealRequest { round_ids } => round_ids.clone(),
            Body::Reveal { outcomes } => outcomes.iter().map(|o| o.round_id).collect(),
            Body::Hello { .. } | Body::Report { .. } | Body::Bye => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub session_id: String,
    #[serde(flatten)]
    pub body: Body,
}

pub fn encode_frame(msg: &WireMessage) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(msg)?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!(
            "frame of {} bytes exceeds {MAX_FRAME_BYTES}",
            body.len()
        )));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn write_frame<W: Write>(w: &mut W, msg: &WireMessage) -> Result<()> {
    w.write_all(&encode_frame(msg)?).map_err(lost)?;
    w.flush().map_err(lost)
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<WireMessage> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(lost)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!(
            "frame of {len} bytes exceeds {MAX_FRAME_BYTES}"
        )));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(lost)?;
    let text = std::str::from_utf8(&body)
        .map_err(|e| Error::Protocol(format!("frame is not UTF-8: {e}")))?;
    Ok(serde_json::from_str(text)?)
}

fn lost(e: std::io::Error) -> Error {
    Error::Aborted(format!("connection lost: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub direction: Direction,
    pub peer: Role,
    pub kind: String,
    pub round_ids: Vec<u64>,
}

/// Chronological record of one endpoint's traffic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageLog {
    pub entries: Vec<LogEntry>,
}

impl MessageLog {
    fn push(&mut self, direction: Direction, peer: Role, body: &Body) {
        self.entries.push(LogEntry {
            direction,
            peer,
            kind: body.kind().to_string(),
            round_ids: body.round_ids(),
        });
    }

    /// Checks that every SETTINGS sent refers only to rounds whose OUTCOMES
    /// had already been received.
    pub fn settings_follow_quantum_phase(&self) -> bool {
        let mut measured = BTreeSet::new();
        for e in &self.entries {
            match (e.direction, e.kind.as_str()) {
                (Direction::Received, "OUTCOMES") => measured.extend(e.round_ids.iter().copied()),
                (Direction::Sent, "SETTINGS")
                    if !e.round_ids.iter().all(|id| measured.contains(id)) =>
                {
                    return false;
                }
                _ => {}
            }
        }
        true
    }
}

/// One framed connection to a named peer.
pub struct Link<S> {
    stream: S,
    session_id: String,
    peer: Role,
}

impl<S: Read + Write> Link<S> {
    pub fn new(stream: S, session_id: impl Into<String>, peer: Role) -> Self {
        Self {
            stream,
            session_id: session_id.into(),
            peer,
        }
    }

    pub fn send(&mut self, log: &mut MessageLog, body: Body) -> Result<()> {
        debug!("-> {:?} {}", self.peer, body.kind());
        log.push(Direction::Sent, self.peer, &body);
        write_frame(
            &mut self.stream,
            &WireMessage {
                session_id: self.session_id.clone(),
                body,
            },
        )
    }

    pub fn recv(&mut self, log: &mut MessageLog) -> Result<Body> {
        let msg = read_frame(&mut self.stream)?;
        if msg.session_id != self.session_id {
            return Err(Error::Protocol(format!(
                "session id {:?} from {:?}, expected {:?}",
                msg.session_id, self.peer, self.session_id
            )));
        }
        debug!("<- {:?} {}", self.peer, msg.body.kind());
        log.push(Direction::Received, self.peer, &msg.body);
        Ok(msg.body)
    }
}

fn unexpected(expected: &str, got: &Body) -> Error {
    Error::Protocol(format!("expected {expected}, got {}", got.kind()))
}

fn check_net_config(config: &SessionConfig) -> Result<()> {
    config.validate()?;
    if config.mode == Mode::Ekert {
        return Err(Error::Config(
            "network mode supports ent and pm only".into(),
        ));
    }
    Ok(())
}

fn check_same_config(ours: &SessionConfig, theirs: &SessionConfig, who: Role) -> Result<()> {
    if ours != theirs {
        return Err(Error::Protocol(format!(
            "{who:?} runs a different configuration"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSummary {
    pub rounds_served: u64,
    pub log: MessageLog,
}

/// Serves the quantum phase to two already connected parties.
pub fn run_source<S: Read + Write>(
    config: &SessionConfig,
    session_id: &str,
    first: S,
    second: S,
) -> Result<SourceSummary> {
    check_net_config(config)?;
    let mut log = MessageLog::default();
    let mut links = [
        Link::new(first, session_id, Role::Alice),
        Link::new(second, session_id, Role::Bob),
    ];
    let mut roles = [Role::Source; 2];
    for (link, role) in links.iter_mut().zip(roles.iter_mut()) {
        match link.recv(&mut log)? {
            Body::Hello {
                role: r,
                config: theirs,
            } => {
                check_same_config(config, &theirs, r)?;
                *role = r;
            }
            other => return Err(unexpected("HELLO", &other)),
        }
    }
    let [alice, bob] = match roles {
        [Role::Alice, Role::Bob] => {
            let [a, b] = links;
            [a, b]
        }
        [Role::Bob, Role::Alice] => {
            let [b, a] = links;
            [a, b]
        }
        other => {
            return Err(Error::Protocol(format!(
                "need one alice and one bob, got {other:?}"
            )))
        }
    };
    let mut alice = Link {
        peer: Role::Alice,
        ..alice
    };
    let mut bob = Link {
        peer: Role::Bob,
        ..bob
    };
    for link in [&mut alice, &mut bob] {
        link.send(
            &mut log,
            Body::Hello {
                role: Role::Source,
                config: *config,
            },
        )?;
    }

    let mut served = 0u64;
    loop {
        let from_alice = alice.recv(&mut log)?;
        let from_bob = bob.recv(&mut log)?;
        let (sa, sb) = match (from_alice, from_bob) {
            (Body::Bye, Body::Bye) => break,
            (Body::Measure { settings: sa }, Body::Measure { settings: sb }) => (sa, sb),
            (a, b) => {
                return Err(Error::Protocol(format!(
                    "parties out of step: {} vs {}",
                    a.kind(),
                    b.kind()
                )))
            }
        };
        if sa.len() != sb.len() || sa.iter().zip(&sb).any(|(a, b)| a.round_id != b.round_id) {
            return Err(Error::Protocol(
                "MEASURE round ids differ between parties".into(),
            ));
        }
        let first = sa.first().map(|s| s.round_id).unwrap_or(0);
        if sa
            .iter()
            .enumerate()
            .any(|(k, s)| s.round_id != first + k as u64)
        {
            return Err(Error::Protocol(
                "MEASURE round ids are not contiguous".into(),
            ));
        }
        let records = map_rounds(first..first + sa.len() as u64, Execution::default(), |id| {
            let k = (id - first) as usize;
            measure_round(
                config.mode,
                &config.channel,
                config.seed,
                id,
                sa[k].setting,
                sb[k].setting,
            )
        })?;
        let side = |party: Party| {
            records
                .iter()
                .map(|r| {
                    let (detected, outcomes) = match party {
                        Party::Alice => (r.detected_a, r.outcomes_a),
                        Party::Bob => (r.detected_b, r.outcomes_b),
                    };
                    RoundResult {
                        round_id: r.round_id,
                        detected,
                        outcomes,
                    }
                })
                .collect()
        };
        alice.send(
            &mut log,
            Body::Outcomes {
                results: side(Party::Alice),
            },
        )?;
        bob.send(
            &mut log,
            Body::Outcomes {
                results: side(Party::Bob),
            },
        )?;
        served += records.len() as u64;
    }
    info!("source served {served} rounds");
    Ok(SourceSummary {
        rounds_served: served,
        log,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartyOptions {
    /// Answer REVEAL_REQUEST with an empty REVEAL.
    pub withhold_reveal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartyOutcome {
    pub document: ReportDocument,
    pub key: Vec<u8>,
    pub log: MessageLog,
}

struct LocalRound {
    setting: Setting,
    detected: bool,
    outcomes: Option<Outcomes>,
}

/// Quantum phase from one party's side.
fn quantum_phase<S: Read + Write>(
    config: &SessionConfig,
    party: Party,
    source: &mut Link<S>,
    log: &mut MessageLog,
) -> Result<Vec<LocalRound>> {
    let role = match party {
        Party::Alice => Role::Alice,
        Party::Bob => Role::Bob,
    };
    source.send(
        log,
        Body::Hello {
            role,
            config: *config,
        },
    )?;
    match source.recv(log)? {
        Body::Hello {
            role: Role::Source,
            config: theirs,
        } => check_same_config(config, &theirs, Role::Source)?,
        other => return Err(unexpected("HELLO from source", &other)),
    }

    let mut rounds = Vec::with_capacity(config.rounds as usize);
    let mut start = 0;
    while start < config.rounds {
        let end = (start + MEASURE_CHUNK).min(config.rounds);
        let settings: Vec<RoundSetting> = (start..end)
            .map(|round_id| RoundSetting {
                round_id,
                setting: choose_setting(config.seed, round_id, party),
            })
            .collect();
        source.send(
            log,
            Body::Measure {
                settings: settings.clone(),
            },
        )?;
        let results = match source.recv(log)? {
            Body::Outcomes { results } => results,
            other => return Err(unexpected("OUTCOMES", &other)),
        };
        if results.len() != settings.len() {
            return Err(Error::Protocol("OUTCOMES length mismatch".into()));
        }
        for (s, r) in settings.iter().zip(results) {
            if r.round_id != s.round_id || r.detected != r.outcomes.is_some() {
                return Err(Error::Protocol(format!(
                    "bad OUTCOMES entry for round {}",
                    s.round_id
                )));
            }
            if let Some(o) = r.outcomes {
                if !o.is_consistent() {
                    return Err(Error::Protocol(format!(
                        "inconsistent outcomes for round {}",
                        r.round_id
                    )));
                }
            }
            rounds.push(LocalRound {
                setting: s.setting,
                detected: r.detected,
                outcomes: r.outcomes,
            });
        }
        start = end;
    }
    source.send(log, Body::Bye)?;
    Ok(rounds)
}

fn exchange<S: Read + Write>(
    party: Party,
    peer: &mut Link<S>,
    log: &mut MessageLog,
    ours: Body,
) -> Result<Body> {
    // Alice speaks first on every symmetric step.
    match party {
        Party::Alice => {
            peer.send(log, ours)?;
            peer.recv(log)
        }
        Party::Bob => {
            let theirs = peer.recv(log)?;
            peer.send(log, ours)?;
            Ok(theirs)
        }
    }
}

/// Runs one party end to end over an already connected source link and
/// peer link.
pub fn run_party<S: Read + Write, P: Read + Write>(
    config: &SessionConfig,
    session_id: &str,
    party: Party,
    source: S,
    peer: P,
    options: PartyOptions,
) -> Result<PartyOutcome> {
    check_net_config(config)?;
    let mut log = MessageLog::default();
    let mut source = Link::new(source, session_id, Role::Source);
    let rounds = quantum_phase(config, party, &mut source, &mut log)?;
    drop(source);
    classical_phase(config, session_id, party, rounds, peer, options, log)
}

/// Like [`run_party`], but opens the peer link only after the quantum phase
/// has completed.
pub fn run_party_with<S, P, F>(
    config: &SessionConfig,
    session_id: &str,
    party: Party,
    source: S,
    connect_peer: F,
    options: PartyOptions,
) -> Result<PartyOutcome>
where
    S: Read + Write,
    P: Read + Write,
    F: FnOnce() -> Result<P>,
{
    check_net_config(config)?;
    let mut log = MessageLog::default();
    let mut source = Link::new(source, session_id, Role::Source);
    let rounds = quantum_phase(config, party, &mut source, &mut log)?;
    drop(source);
    let peer = connect_peer()?;
    classical_phase(config, session_id, party, rounds, peer, options, log)
}

fn classical_phase<P: Read + Write>(
    config: &SessionConfig,
    session_id: &str,
    party: Party,
    rounds: Vec<LocalRound>,
    peer: P,
    options: PartyOptions,
    mut log: MessageLog,
) -> Result<PartyOutcome> {
    let other = match party {
        Party::Alice => Role::Bob,
        Party::Bob => Role::Alice,
    };
    let mut peer = Link::new(peer, session_id, other);
    let me = match party {
        Party::Alice => Role::Alice,
        Party::Bob => Role::Bob,
    };

    match exchange(
        party,
        &mut peer,
        &mut log,
        Body::Hello {
            role: me,
            config: *config,
        },
    )? {
        Body::Hello {
            role,
            config: theirs,
        } if role == other => check_same_config(config, &theirs, other)?,
        other => return Err(unexpected("HELLO from peer", &other)),
    }

    let detected: Vec<u64> = rounds
        .iter()
        .enumerate()
        .filter(|(_, r)| r.detected)
        .map(|(id, _)| id as u64)
        .collect();
    let their_detected = match exchange(
        party,
        &mut peer,
        &mut log,
        Body::Detections {
            round_ids: detected.clone(),
        },
    )? {
        Body::Detections { round_ids } => round_ids,
        other => return Err(unexpected("DETECTIONS", &other)),
    };
    if their_detected.iter().any(|id| *id >= config.rounds) {
        return Err(Error::Protocol(
            "DETECTIONS references unknown rounds".into(),
        ));
    }
    let their_set: BTreeSet<u64> = their_detected.into_iter().collect();
    let coincidences: Vec<u64> = detected
        .into_iter()
        .filter(|id| their_set.contains(id))
        .collect();

    let our_settings: Vec<RoundSetting> = coincidences
        .iter()
        .map(|&round_id| RoundSetting {
            round_id,
            setting: rounds[round_id as usize].setting,
        })
        .collect();
    let their_settings = match exchange(
        party,
        &mut peer,
        &mut log,
        Body::Settings {
            settings: our_settings,
        },
    )? {
        Body::Settings { settings } => settings,
        other => return Err(unexpected("SETTINGS", &other)),
    };
    if their_settings.len() != coincidences.len()
        || their_settings
            .iter()
            .zip(&coincidences)
            .any(|(s, id)| s.round_id != *id)
    {
        return Err(Error::Protocol(
            "SETTINGS does not match the coincidence list".into(),
        ));
    }
    let expected_party = match party {
        Party::Alice => Party::Bob,
        Party::Bob => Party::Alice,
    };
    if their_settings
        .iter()
        .any(|s| s.setting.party() != expected_party)
    {
        return Err(Error::Protocol(
            "SETTINGS carries the wrong party's groups".into(),
        ));
    }
    let their_setting: BTreeMap<u64, Setting> = their_settings
        .iter()
        .map(|s| (s.round_id, s.setting))
        .collect();

    // reveal sample
    let coincidence_set: BTreeSet<u64> = coincidences.iter().copied().collect();
    let revealed = match party {
        Party::Alice => {
            let mut rng = SimRng::with_stream(config.seed, SIFT_STREAM);
            let revealed = select_reveal(&coincidences, config.reveal_frac, &mut rng);
            peer.send(
                &mut log,
                Body::RevealRequest {
                    round_ids: revealed.clone(),
                },
            )?;
            revealed
        }
        Party::Bob => match peer.recv(&mut log)? {
            Body::RevealRequest { round_ids } => {
                if round_ids.iter().any(|id| !coincidence_set.contains(id)) {
                    return Err(Error::Protocol(
                        "REVEAL_REQUEST references unknown rounds".into(),
                    ));
                }
                round_ids
            }
            other => return Err(unexpected("REVEAL_REQUEST", &other)),
        },
    };
    let own_reveal: Vec<RoundOutcome> = if party == Party::Bob && options.withhold_reveal {
        warn!("withholding REVEAL");
        Vec::new()
    } else {
        revealed
            .iter()
            .map(|&round_id| RoundOutcome {
                round_id,
                outcomes: rounds[round_id as usize]
                    .outcomes
                    .expect("coincidence has outcomes"),
            })
            .collect()
    };
    // Bob answers the request first, then Alice discloses hers.
    let their_reveal = match exchange(
        match party {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        },
        &mut peer,
        &mut log,
        Body::Reveal {
            outcomes: own_reveal.clone(),
        },
    )? {
        Body::Reveal { outcomes } => outcomes,
        other => return Err(unexpected("REVEAL", &other)),
    };
    let requested: BTreeSet<u64> = revealed.iter().copied().collect();
    if their_reveal
        .iter()
        .any(|o| !requested.contains(&o.round_id) || !o.outcomes.is_consistent())
    {
        return Err(Error::Protocol(
            "REVEAL references rounds that were not requested".into(),
        ));
    }
    let own_disclosed: BTreeSet<u64> = own_reveal.iter().map(|o| o.round_id).collect();
    let theirs: BTreeMap<u64, Outcomes> = their_reveal
        .iter()
        .map(|o| (o.round_id, o.outcomes))
        .collect();

    let table = SiftTable::standard();
    let mut pairs = Vec::new();
    for &id in &revealed {
        let (Some(their_outcomes), true) = (theirs.get(&id), own_disclosed.contains(&id)) else {
            continue;
        };
        let mine = rounds[id as usize]
            .outcomes
            .expect("coincidence has outcomes");
        let ours_setting = rounds[id as usize].setting;
        let pair = match party {
            Party::Alice => RevealedPair {
                alice: ours_setting,
                bob: their_setting[&id],
                outcomes_a: mine,
                outcomes_b: *their_outcomes,
            },
            Party::Bob => RevealedPair {
                alice: their_setting[&id],
                bob: ours_setting,
                outcomes_a: *their_outcomes,
                outcomes_b: mine,
            },
        };
        pairs.push(pair);
    }

    let mut key = Vec::with_capacity(coincidences.len() - revealed.len());
    for &id in &coincidences {
        if requested.contains(&id) {
            continue;
        }
        let local = &rounds[id as usize];
        let mine = local.outcomes.expect("coincidence has outcomes");
        let bit = match party {
            Party::Alice => {
                let e = table.lookup(local.setting, their_setting[&id])?;
                mine.get(e.a_idx)
            }
            Party::Bob => {
                let e = table.lookup(their_setting[&id], local.setting)?;
                e.sign * mine.get(e.b_idx)
            }
        };
        key.push(((1 + bit) / 2) as u8);
    }

    let tally = Tally {
        rounds: config.rounds,
        coincidences: coincidences.len() as u64,
        sifted: coincidences.len() as u64,
        key_length: key.len() as u64,
    };
    let report = build_report(tally, &pairs, &table, config.threshold)?;
    match exchange(
        party,
        &mut peer,
        &mut log,
        Body::Report {
            report: report.clone(),
        },
    )? {
        Body::Report { report: theirs } if theirs == report => {}
        Body::Report { .. } => {
            return Err(Error::Protocol("peer computed a different report".into()))
        }
        other => return Err(unexpected("REPORT", &other)),
    }
    match exchange(party, &mut peer, &mut log, Body::Bye)? {
        Body::Bye => {}
        other => return Err(unexpected("BYE", &other)),
    }
    Ok(PartyOutcome {
        document: ReportDocument::session(*config, report),
        key,
        log,
    })
}

/// Connects to `addr`, retrying until `timeout` while the listener starts.
pub fn connect_with_retry<A: ToSocketAddrs + Clone>(
    addr: A,
    timeout: Duration,
) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(addr.clone()) {
            Ok(stream) => {
                stream.set_nodelay(true).ok();
                return Ok(stream);
            }
            Err(e)
                if Instant::now() < deadline
                    && matches!(
                        e.kind(),
                        ErrorKind::ConnectionRefused
                            | ErrorKind::NotFound
                            | ErrorKind::AddrNotAvailable
                    ) =>
            {
                std::thread::sleep(Duration::from_millis(25));
            }
            Err(e) => return Err(Error::Aborted(format!("cannot connect: {e}"))),
        }
    }
}

/// Source process: accepts both parties on `listener` and serves them.
pub fn serve_source(
    config: &SessionConfig,
    session_id: &str,
    listener: &TcpListener,
) -> Result<SourceSummary> {
    let (first, _) = listener.accept()?;
    let (second, _) = listener.accept()?;
    first.set_nodelay(true).ok();
    second.set_nodelay(true).ok();
    run_source(config, session_id, first, second)
}

/// Alice process: connects to the source, then accepts Bob on `listener`.
pub fn serve_alice<A: ToSocketAddrs + Clone>(
    config: &SessionConfig,
    session_id: &str,
    source_addr: A,
    listener: &TcpListener,
    timeout: Duration,
) -> Result<PartyOutcome> {
    let source = connect_with_retry(source_addr, timeout)?;
    run_party_with(
        config,
        session_id,
        Party::Alice,
        source,
        || {
            let (peer, _) = listener
                .accept()
                .map_err(|e| Error::Aborted(e.to_string()))?;
            peer.set_nodelay(true).ok();
            Ok(peer)
        },
        PartyOptions::default(),
    )
}

/// Bob process: connects to the source, then to Alice.
pub fn serve_bob<A: ToSocketAddrs + Clone, B: ToSocketAddrs + Clone>(
    config: &SessionConfig,
    session_id: &str,
    source_addr: A,
    alice_addr: B,
    timeout: Duration,
    options: PartyOptions,
) -> Result<PartyOutcome> {
    let source = connect_with_retry(source_addr, timeout)?;
    run_party_with(
        config,
        session_id,
        Party::Bob,
        source,
        || connect_with_retry(alice_addr, timeout),
        options,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frame_layout_is_length_prefixed_json() {
        let msg = WireMessage {
            session_id: "s1".into(),
            body: Body::Bye,
        };
        let bytes = encode_frame(&msg).unwrap();
        let json = br#"{"session_id":"s1","type":"BYE"}"#;
        assert_eq!(&bytes[..4], &(json.len() as u32).to_be_bytes());
        assert_eq!(&bytes[4..], json);
    }

    #[test]
    fn detections_message_shape() {
        let msg = WireMessage {
            session_id: "x".into(),
            body: Body::Detections {
                round_ids: vec![1, 2],
            },
        };
        let value: serde_json::Value = serde_json::to_value(&msg).unwrap();
        assert_eq!(value["type"], "DETECTIONS");
        assert_eq!(value["round_ids"], serde_json::json!([1, 2]));
    }

    #[test]
    fn truncated_frame_is_an_abort() {
        let msg = WireMessage {
            session_id: "s".into(),
            body: Body::Bye,
        };
        let bytes = encode_frame(&msg).unwrap();
        let mut cut = &bytes[..bytes.len() - 2];
        assert!(matches!(read_frame(&mut cut), Err(Error::Aborted(_))));
    }

    #[test]
    fn oversize_prefix_rejected() {
        let bytes = (u32::MAX).to_be_bytes();
        assert!(matches!(
            read_frame(&mut &bytes[..]),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn log_replay_detects_early_settings() {
        let mut log = MessageLog::default();
        log.push(
            Direction::Sent,
            Role::Bob,
            &Body::Settings {
                settings: vec![RoundSetting {
                    round_id: 0,
                    setting: Setting::A1,
                }],
            },
        );
        assert!(!log.settings_follow_quantum_phase());
    }

    fn arb_outcomes() -> impl Strategy<Value = Outcomes> {
        (prop::bool::ANY, prop::bool::ANY).prop_map(|(a, b)| {
            let (a, b) = (if a { 1 } else { -1 }, if b { 1 } else { -1 });
            Outcomes([a, b, a * b])
        })
    }

    proptest! {
        #[test]
        fn frames_round_trip(
            sid in "[a-z0-9-]{0,12}",
            ids in prop::collection::vec(any::<u64>(), 0..20),
            outs in prop::collection::vec((any::<u64>(), arb_outcomes()), 0..20),
        ) {
            for body in [
                Body::RevealRequest { round_ids: ids.clone() },
                Body::Reveal { outcomes: outs.iter().map(|(round_id, outcomes)| RoundOutcome { round_id: *round_id, outcomes: *outcomes }).collect() },
            ] {
                let msg = WireMessage { session_id: sid.clone(), body };
                let bytes = encode_frame(&msg).unwrap();
                prop_assert_eq!(read_frame(&mut &bytes[..]).unwrap(), msg);
            }
        }
    }
}
