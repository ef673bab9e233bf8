//! Emulated V2X links with truncated-exponential delay, Bernoulli loss and
//! a hard cap on the length of any run of non-ideal communication.
//!
//! Every link owns its own RNG stream derived from `(seed, sender, receiver)`
//! so links can be advanced in any order without changing their draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Rate of the exponential delay law (1/s).
    pub delay_lambda: f64,
    /// Maximum admissible delay (s).
    pub delay_cap: f64,
    /// Per-packet loss probability.
    pub loss_rate: f64,
    /// Cap on a continuous non-ideal stretch (steps).
    pub outage_upsilon: f64,
    /// Proportion of non-ideal communication time, in (0, 1).
    pub outage_rho: f64,
    /// Base seed of the per-link streams. Scenario runs set it from the run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            delay_lambda: 0.1,
            delay_cap: 0.1,
            loss_rate: 0.15,
            outage_upsilon: 2.0,
            outage_rho: 0.5,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    /// A lossless, zero-delay channel.
    pub fn ideal() -> Self {
        ChannelConfig {
            delay_cap: 0.0,
            loss_rate: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay_cap.is_finite() && self.delay_cap >= 0.0) {
            return Err(Error::param("delay_cap", "must be finite and nonnegative"));
        }
        if !(self.delay_lambda.is_finite() && self.delay_lambda > 0.0) {
            return Err(Error::param("delay_lambda", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return Err(Error::param("loss_rate", "must lie in [0, 1)"));
        }
        if !(self.outage_upsilon.is_finite() && self.outage_upsilon >= 0.0) {
            return Err(Error::param("outage_upsilon", "must be finite and nonnegative"));
        }
        outage_bound(self).map(|_| ())
    }
}

/// Maximum number of consecutive non-ideal steps, `ceil(upsilon / (1 - rho))`,
/// floored at one.
pub fn outage_bound(config: &ChannelConfig) -> Result<usize> {
    let rho = config.outage_rho;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::param("outage_rho", "must lie in (0, 1)"));
    }
    let raw = config.outage_upsilon / (1.0 - rho);
    if !raw.is_finite() {
        return Err(Error::param("outage_upsilon", "outage bound is not finite"));
    }
    Ok((ceil_tol(raw) as usize).max(1))
}

fn ceil_tol(x: f64) -> f64 {
    // Guard against 0.1 / 0.05 landing a hair above an integer.
    (x - 1e-9).ceil().max(0.0)
}

/// Density of the truncated exponential delay law (unnormalised, as written
/// `lambda * exp(-lambda * tau)` on `[0, cap]`).
pub fn delay_density(config: &ChannelConfig, tau: f64) -> f64 {
    if tau < 0.0 || tau > config.delay_cap {
        return 0.0;
    }
    config.delay_lambda * (-config.delay_lambda * tau).exp()
}

/// Mean of the exponential law conditioned on `[0, cap]`.
pub fn truncated_delay_mean(config: &ChannelConfig) -> f64 {
    let (l, c) = (config.delay_lambda, config.delay_cap);
    if c == 0.0 {
        return 0.0;
    }
    let mass = -(-l * c).exp_m1();
    1.0 / l - c * (-l * c).exp() / mass
}

/// Inverse-CDF draw from the truncated exponential delay law (s).
pub fn sample_delay<R: Rng + ?Sized>(config: &ChannelConfig, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    if config.delay_cap == 0.0 {
        return 0.0;
    }
    let l = config.delay_lambda;
    let mass = -(-l * config.delay_cap).exp_m1();
    let tau = -(-u * mass).ln_1p() / l;
    tau.clamp(0.0, config.delay_cap)
}

/// Delay rounded up to whole sampling periods.
pub fn delay_steps(delay: f64, h: f64) -> usize {
    ceil_tol(delay / h) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet<T> {
    pub sender: usize,
    pub timestamp: usize,
    pub payload: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reception {
    Fresh,
    StaleDelayed,
    Lost,
}

impl Reception {
    pub fn as_str(self) -> &'static str {
        match self {
            Reception::Fresh => "fresh",
            Reception::StaleDelayed => "stale",
            Reception::Lost => "lost",
        }
    }
}

/// Timestamp test a receiver applies to an arriving packet (or to the absence
/// of one).
pub fn classify_receive(
    timestamp: Option<usize>,
    last_accepted: Option<usize>,
    current_step: usize,
    cap_steps: usize,
) -> Reception {
    let Some(ts) = timestamp else {
        return Reception::Lost;
    };
    let age = current_step.saturating_sub(ts);
    if age > cap_steps {
        return Reception::Lost;
    }
    match last_accepted {
        Some(last) if ts <= last => Reception::StaleDelayed,
        _ => Reception::Fresh,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Sent,
    Delivered,
    Lost,
    Stale,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Sent => "sent",
            EventKind::Delivered => "delivered",
            EventKind::Lost => "lost",
            EventKind::Stale => "stale",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelEvent {
    pub step: usize,
    pub sender: usize,
    pub receiver: usize,
    pub timestamp: usize,
    pub kind: EventKind,
}

/// Outcome of one step on one link.
#[derive(Debug, Clone)]
pub struct Delivery<T> {
    pub status: Reception,
    /// Newest fresh packet, if any.
    pub accepted: Option<Packet<T>>,
    /// Whether the outage cap forced this delivery.
    pub forced: bool,
}

/// One directed link with its in-flight queue and outage bookkeeping.
#[derive(Debug, Clone)]
pub struct Link<T> {
    pub sender: usize,
    pub receiver: usize,
    rng: ChaCha8Rng,
    in_flight: Vec<(Packet<T>, usize)>,
    last_accepted: Option<usize>,
    streak: usize,
    outage_start: Option<usize>,
}

/// Seed for the stream of a named entity.
pub(crate) fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over a simple combination
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<T: Clone> Link<T> {
    pub fn new(sender: usize, receiver: usize, seed: u64) -> Self {
        Link {
            sender,
            receiver,
            rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, sender as u64 + 1, receiver as u64 + 1)),
            in_flight: Vec::new(),
            last_accepted: None,
            streak: 0,
            outage_start: None,
        }
    }

    pub fn last_accepted(&self) -> Option<usize> {
        self.last_accepted
    }

    /// Current length of the non-ideal run.
    pub fn streak(&self) -> usize {
        self.streak
    }

    /// Step at which the current outage began.
    pub fn outage_start(&self) -> Option<usize> {
        self.outage_start
    }

    /// Advance the link by one step: admit `sent` (loss and delay drawn
    /// here), release everything due, classify, and force delivery of the
    /// newest packet if the non-ideal run would otherwise exceed `max_outage`.
    pub fn advance(
        &mut self,
        config: &ChannelConfig,
        h: f64,
        max_outage: usize,
        step: usize,
        sent: Option<Packet<T>>,
        events: &mut Vec<ChannelEvent>,
    ) -> Delivery<T> {
        let cap_steps = delay_steps(config.delay_cap, h);
        let mut dropped: Option<Packet<T>> = None;
        let mut just_sent_ts = None;
        if let Some(packet) = sent {
            // Both draws are always taken so the stream stays aligned.
            let lost = self.rng.gen::<f64>() < config.loss_rate;
            let delay = sample_delay(config, &mut self.rng);
            self.push_event(events, step, packet.timestamp, EventKind::Sent);
            just_sent_ts = Some(packet.timestamp);
            if lost {
                self.push_event(events, step, packet.timestamp, EventKind::Lost);
                dropped = Some(packet);
            } else {
                let due = step + delay_steps(delay, h);
                self.in_flight.push((packet, due));
            }
        }

        let mut due: Vec<Packet<T>> = Vec::new();
        let mut i = 0;
        while i < self.in_flight.len() {
            if self.in_flight[i].1 <= step {
                due.push(self.in_flight.swap_remove(i).0);
            } else {
                i += 1;
            }
        }
        due.sort_by_key(|p| p.timestamp);

        let mut status = Reception::Lost;
        let mut accepted: Option<Packet<T>> = None;
        for packet in due {
            match classify_receive(Some(packet.timestamp), self.last_accepted, step, cap_steps) {
                Reception::Fresh => {
                    self.last_accepted = Some(packet.timestamp);
                    status = Reception::Fresh;
                    self.push_event(events, step, packet.timestamp, EventKind::Delivered);
                    accepted = Some(packet);
                }
                Reception::StaleDelayed => {
                    if status == Reception::Lost {
                        status = Reception::StaleDelayed;
                    }
                    self.push_event(events, step, packet.timestamp, EventKind::Stale);
                }
                Reception::Lost => {
                    self.push_event(events, step, packet.timestamp, EventKind::Lost);
                }
            }
        }

        let mut forced = false;
        if status != Reception::Fresh && self.streak >= max_outage {
            // Pull this step's packet out of the air (or back from the loss
            // process) and hand it over immediately.
            let packet = match just_sent_ts {
                Some(ts) => dropped.or_else(|| {
                    let pos = self.in_flight.iter().position(|(p, _)| p.timestamp == ts)?;
                    Some(self.in_flight.swap_remove(pos).0)
                }),
                None => None,
            };
            if let Some(packet) = packet {
                self.last_accepted = Some(packet.timestamp);
                self.push_event(events, step, packet.timestamp, EventKind::Delivered);
                status = Reception::Fresh;
                accepted = Some(packet);
                forced = true;
            }
        }

        if status == Reception::Fresh {
            self.streak = 0;
            self.outage_start = None;
        } else {
            if self.streak == 0 {
                self.outage_start = Some(step);
            }
            self.streak += 1;
        }

        Delivery {
            status,
            accepted,
            forced,
        }
    }

    fn push_event(&self, events: &mut Vec<ChannelEvent>, step: usize, ts: usize, kind: EventKind) {
        events.push(ChannelEvent {
            step,
            sender: self.sender,
            receiver: self.receiver,
            timestamp: ts,
            kind,
        });
    }
}

/// All links of the platoon. Links are advanced independently.
#[derive(Debug, Clone)]
pub struct ChannelState<T> {
    pub links: Vec<Link<T>>,
    config: ChannelConfig,
    h: f64,
    max_outage: usize,
    /// Event log; only populated when logging is enabled.
    pub events: Vec<ChannelEvent>,
    log_events: bool,
}

impl<T: Clone> ChannelState<T> {
    /// Build links `(sender, receiver)` for the given pairs.
    pub fn new(config: ChannelConfig, h: f64, pairs: &[(usize, usize)], log_events: bool) -> Result<Self> {
        config.validate()?;
        let max_outage = outage_bound(&config)?;
        Ok(ChannelState {
            links: pairs
                .iter()
                .map(|&(s, r)| Link::new(s, r, config.seed))
                .collect(),
            config,
            h,
            max_outage,
            events: Vec::new(),
            log_events,
        })
    }

    pub fn max_outage(&self) -> usize {
        self.max_outage
    }

    /// Advance every link once. `sends[i]` is the packet offered on link `i`.
    pub fn advance(&mut self, step: usize, sends: Vec<Option<Packet<T>>>) -> Vec<Delivery<T>> {
        assert_eq!(sends.len(), self.links.len(), "one send slot per link");
        let mut scratch = Vec::new();
        let out = self
            .links
            .iter_mut()
            .zip(sends)
            .map(|(link, sent)| {
                link.advance(&self.config, self.h, self.max_outage, step, sent, &mut scratch)
            })
            .collect();
        if self.log_events {
            self.events.append(&mut scratch);
        }
        out
    }
}
