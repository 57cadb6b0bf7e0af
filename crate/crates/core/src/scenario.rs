//! Synthetic labeled traffic for the three traffic classes: normal service,
//! flood attack, and flash crowd.
//!
//! Normal traffic is a fixed population of recurring source addresses, each
//! sending toward the victim service at a small Poisson rate, plus a trickle
//! of fresh one-off sources per window. A flood adds many new bot sources at
//! high per-bot rate while starving the recurring users; a flash crowd adds
//! a persistent surge of new sources at normal per-user rates AND
//! re-activates the recurring users. Optional background noise flows
//! (sources fanning out to random destinations) exist solely to give the
//! many-to-one prefilter something to remove.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::PacketRecord;

/// Recurring "old user" addresses live in 10.0.0.0/8 at a fixed mapping, so
/// separately generated training and detection streams share a population.
pub const OLD_USER_BASE: u32 = 0x0A00_0000;
pub const DEFAULT_VICTIM: u32 = 0xC000_0201; // 192.0.2.1

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePool {
    /// Fresh random addresses every window.
    SpoofedRandom,
    /// One pool drawn at scenario start, active every attack window.
    FixedPool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Seconds from stream start; align to a window boundary for crisp labels.
    pub onset: f64,
    /// Bot sources per window.
    pub bot_count: usize,
    /// Packets per second per bot.
    pub per_bot_rate: f64,
    pub source_pool: SourcePool,
    /// Fraction of the normal old-user rate that still gets through while
    /// the attack saturates the service.
    pub old_user_suppression: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlashCrowdConfig {
    pub onset: f64,
    /// Persistent new sources joining the crowd.
    pub crowd_size: usize,
    /// Packets per second per crowd member; a normal, protocol-respecting rate.
    pub per_user_rate: f64,
    /// Rate multiplier applied to the recurring users while the topic is hot.
    pub old_user_boost: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Background sources per window, each talking to random non-victim
    /// destinations (removed by the prefilter).
    pub sources_per_window: usize,
    /// Fraction of noise sources fanning out to several destinations.
    pub multi_dst_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub unit_time: f64,
    /// Count of recurring old-user addresses.
    pub normal_population: usize,
    /// Packets per second per recurring user (the normal access-rate constant).
    pub normal_rate: f64,
    /// Poisson mean of fresh one-off sources per window.
    pub churn_mean: f64,
    pub victim_ip: u32,
    pub attack: Option<AttackConfig>,
    pub flashcrowd: Option<FlashCrowdConfig>,
    pub noise: Option<NoiseConfig>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.unit_time > 0.0) {
            return Err(Error::Config("duration and unit_time must be positive".into()));
        }
        if self.normal_population < 1 {
            return Err(Error::Config("normal_population must be >= 1".into()));
        }
        if !(self.normal_rate > 0.0) {
            return Err(Error::Config("normal_rate must be positive".into()));
        }
        for (name, onset, rate) in [
            ("attack", self.attack.map(|a| (a.onset, a.per_bot_rate))),
            ("flashcrowd", self.flashcrowd.map(|f| (f.onset, f.per_user_rate))),
        ]
        .iter()
        .filter_map(|(n, v)| v.map(|(o, r)| (*n, o, r)))
        {
            if onset >= self.duration {
                return Err(Error::Config(format!("{name} onset past stream end")));
            }
            if !(rate > 0.0) {
                return Err(Error::Config(format!("{name} rate must be positive")));
            }
        }
        Ok(())
    }

    pub fn window_count(&self) -> usize {
        (self.duration / self.unit_time).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Attack,
    FlashCrowd,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Normal => write!(f, "normal"),
            Label::Attack => write!(f, "attack"),
            Label::FlashCrowd => write!(f, "flashcrowd"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "attack" => Ok(Label::Attack),
            "flashcrowd" => Ok(Label::FlashCrowd),
            other => Err(Error::Config(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub records: Vec<PacketRecord>,
    pub labels: Vec<Label>,
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

fn random_external_ip(rng: &mut ChaCha8Rng, victim: u32) -> u32 {
    loop {
        let ip: u32 = rng.gen();
        let in_old_range = (OLD_USER_BASE..OLD_USER_BASE + 0x0100_0000).contains(&ip);
        if !in_old_range && ip != victim && ip != 0 {
            return ip;
        }
    }
}

/// Deterministic scenario generation: same config and seed, same packets.
pub fn gen_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = cfg.unit_time;
    let windows = cfg.window_count();

    let bot_pool: Vec<u32> = match cfg.attack {
        Some(a) if a.source_pool == SourcePool::FixedPool => (0..a.bot_count)
            .map(|_| random_external_ip(&mut rng, cfg.victim_ip))
            .collect(),
        _ => Vec::new(),
    };
    let crowd: Vec<u32> = match cfg.flashcrowd {
        Some(f) => (0..f.crowd_size)
            .map(|_| random_external_ip(&mut rng, cfg.victim_ip))
            .collect(),
        None => Vec::new(),
    };

    let mut records = Vec::new();
    let mut labels = Vec::with_capacity(windows);

    for k in 0..windows {
        let t0 = k as f64 * unit;
        let attack_on = cfg.attack.is_some_and(|a| t0 >= a.onset);
        let crowd_on = cfg.flashcrowd.is_some_and(|f| t0 >= f.onset);
        labels.push(if attack_on {
            Label::Attack
        } else if crowd_on {
            Label::FlashCrowd
        } else {
            Label::Normal
        });

        let mut window_records = Vec::new();
        let push = |rng: &mut ChaCha8Rng, out: &mut Vec<PacketRecord>, src: u32, dst: u32| {
            out.push(PacketRecord {
                timestamp: t0 + rng.gen::<f64>() * unit,
                src_ip: src,
                dst_ip: dst,
                dst_port: 80,
            });
        };

        // recurring users
        let mut old_rate = cfg.normal_rate;
        if attack_on {
            old_rate *= cfg.attack.unwrap().old_user_suppression;
        } else if crowd_on {
            old_rate *= cfg.flashcrowd.unwrap().old_user_boost;
        }
        for i in 0..cfg.normal_population {
            let src = OLD_USER_BASE + i as u32;
            for _ in 0..poisson_count(&mut rng, old_rate * unit) {
                push(&mut rng, &mut window_records, src, cfg.victim_ip);
            }
        }

        // fresh one-off sources
        let n_churn = poisson_count(&mut rng, cfg.churn_mean);
        for _ in 0..n_churn {
            let src = random_external_ip(&mut rng, cfg.victim_ip);
            let pkts = 1 + poisson_count(&mut rng, cfg.normal_rate * unit);
            for _ in 0..pkts {
                push(&mut rng, &mut window_records, src, cfg.victim_ip);
            }
        }

        // flash crowd: persistent new sources at a normal per-user rate
        if crowd_on {
            let fc = cfg.flashcrowd.unwrap();
            for &src in &crowd {
                for _ in 0..poisson_count(&mut rng, fc.per_user_rate * unit) {
                    push(&mut rng, &mut window_records, src, cfg.victim_ip);
                }
            }
        }

        // flood bots
        if attack_on {
            let a = cfg.attack.unwrap();
            let mut bot_packets = 0u64;
            for b in 0..a.bot_count {
                let src = match a.source_pool {
                    SourcePool::SpoofedRandom => random_external_ip(&mut rng, cfg.victim_ip),
                    SourcePool::FixedPool => bot_pool[b],
                };
                let pkts = poisson_count(&mut rng, a.per_bot_rate * unit);
                bot_packets += pkts;
                for _ in 0..pkts {
                    push(&mut rng, &mut window_records, src, cfg.victim_ip);
                }
            }
            // label soundness: an attack window always carries a bot packet
            if bot_packets == 0 && a.bot_count > 0 {
                let src = match a.source_pool {
                    SourcePool::SpoofedRandom => random_external_ip(&mut rng, cfg.victim_ip),
                    SourcePool::FixedPool => bot_pool[0],
                };
                push(&mut rng, &mut window_records, src, cfg.victim_ip);
            }
        }

        // background noise: sources fanning out to non-victim destinations
        if let Some(noise) = cfg.noise {
            for _ in 0..noise.sources_per_window {
                let src = random_external_ip(&mut rng, cfg.victim_ip);
                let fan_out = if rng.gen::<f64>() < noise.multi_dst_fraction { 3 } else { 1 };
                for _ in 0..fan_out {
                    let dst = random_external_ip(&mut rng, cfg.victim_ip);
                    for _ in 0..1 + poisson_count(&mut rng, 1.0) {
                        push(&mut rng, &mut window_records, src, dst);
                    }
                }
            }
        }

        window_records.sort_by(|a, b| {
            a.timestamp
                .total_cmp(&b.timestamp)
                .then(a.src_ip.cmp(&b.src_ip))
        });
        records.extend(window_records);
    }

    Ok(LabeledDataset { records, labels })
}

fn ip_to_string(ip: u32) -> String {
    std::net::Ipv4Addr::from(ip).to_string()
}

pub fn write_flow_csv<W: Write>(records: &[PacketRecord], mut w: W) -> Result<()> {
    for r in records {
        writeln!(
            w,
            "{},{},{},{}",
            (r.timestamp * 1e6).round() as u64,
            ip_to_string(r.src_ip),
            ip_to_string(r.dst_ip),
            r.dst_port
        )?;
    }
    Ok(())
}

pub fn write_labels_csv<W: Write>(labels: &[Label], mut w: W) -> Result<()> {
    for (k, label) in labels.iter().enumerate() {
        writeln!(w, "{k},{label}")?;
    }
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<Label>> {
    let raw = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, label) = line.split_once(',').ok_or(Error::Parse {
            line: i + 1,
            field: 1,
            message: "expected `k,label`".into(),
        })?;
        let k: usize = k.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            field: 1,
            message: format!("bad window index `{k}`"),
        })?;
        if k != labels.len() {
            return Err(Error::Parse {
                line: i + 1,
                field: 1,
                message: format!("window index {k} out of order (expected {})", labels.len()),
            });
        }
        labels.push(label.trim().parse()?);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> ScenarioConfig {
        ScenarioConfig {
            duration: 24.0,
            unit_time: 0.8,
            normal_population: 50,
            normal_rate: 1.25,
            churn_mean: 3.0,
            victim_ip: DEFAULT_VICTIM,
            attack: None,
            flashcrowd: None,
            noise: None,
        }
    }

    #[test]
    fn fixed_seed_reproduces_byte_identical_output() {
        let cfg = base_config();
        let a = gen_scenario(&cfg, 7).unwrap();
        let b = gen_scenario(&cfg, 7).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_flow_csv(&a.records, &mut buf_a).unwrap();
        write_flow_csv(&b.records, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn attack_windows_have_surging_new_sources() {
        let mut cfg = base_config();
        cfg.duration = 40.0;
        cfg.attack = Some(AttackConfig {
            onset: 20.0,
            bot_count: 200,
            per_bot_rate: 12.5,
            source_pool: SourcePool::SpoofedRandom,
            old_user_suppression: 0.1,
        });
        let ds = gen_scenario(&cfg, 3).unwrap();
        let unit = cfg.unit_time;
        let count_new = |k: usize| {
            ds.records
                .iter()
                .filter(|r| (r.timestamp / unit).floor() as usize == k)
                .filter(|r| !(OLD_USER_BASE..OLD_USER_BASE + 0x0100_0000).contains(&r.src_ip))
                .map(|r| r.src_ip)
                .collect::<std::collections::HashSet<_>>()
                .len()
        };
        let pre_mean: f64 = (0..25).map(count_new).sum::<usize>() as f64 / 25.0;
        let post: Vec<usize> = (25..50).map(count_new).collect();
        for (i, &n) in post.iter().enumerate() {
            assert!(
                n as f64 > 10.0 * pre_mean,
                "window {}: {n} new sources vs pre-onset mean {pre_mean}",
                25 + i
            );
        }
    }

    #[test]
    fn flash_crowd_boosts_old_user_presence() {
        let mut cfg = base_config();
        cfg.duration = 40.0;
        cfg.flashcrowd = Some(FlashCrowdConfig {
            onset: 20.0,
            crowd_size: 100,
            per_user_rate: 1.25,
            old_user_boost: 3.0,
        });
        let ds = gen_scenario(&cfg, 4).unwrap();
        let unit = cfg.unit_time;
        let old_count = |k: usize| {
            ds.records
                .iter()
                .filter(|r| (r.timestamp / unit).floor() as usize == k)
                .filter(|r| (OLD_USER_BASE..OLD_USER_BASE + 0x0100_0000).contains(&r.src_ip))
                .map(|r| r.src_ip)
                .collect::<std::collections::HashSet<_>>()
                .len()
        };
        let pre_max = (0..25).map(old_count).max().unwrap();
        let post_mean: f64 = (25..50).map(old_count).sum::<usize>() as f64 / 25.0;
        assert!(
            post_mean > pre_max as f64,
            "post-onset mean {post_mean} versus pre-onset max {pre_max}"
        );
    }

    #[test]
    fn every_attack_window_contains_a_bot_packet() {
        let mut cfg = base_config();
        cfg.attack = Some(AttackConfig {
            onset: 8.0,
            bot_count: 1,
            per_bot_rate: 0.05, // sparse on purpose
            source_pool: SourcePool::FixedPool,
            old_user_suppression: 1.0,
        });
        let ds = gen_scenario(&cfg, 5).unwrap();
        let unit = cfg.unit_time;
        for (k, label) in ds.labels.iter().enumerate() {
            if *label != Label::Attack {
                continue;
            }
            let has_bot = ds.records.iter().any(|r| {
                (r.timestamp / unit).floor() as usize == k
                    && !(OLD_USER_BASE..OLD_USER_BASE + 0x0100_0000).contains(&r.src_ip)
                    && r.dst_ip == cfg.victim_ip
            });
            assert!(has_bot, "attack window {k} has no bot packet");
        }
    }

    #[test]
    fn labels_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let labels = vec![Label::Normal, Label::Attack, Label::FlashCrowd, Label::Attack];
        let mut buf = Vec::new();
        write_labels_csv(&labels, &mut buf).unwrap();
        std::fs::write(&path, buf).unwrap();
        assert_eq!(read_labels_csv(&path).unwrap(), labels);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = base_config();
        cfg.attack = Some(AttackConfig {
            onset: 100.0, // past the end
            bot_count: 10,
            per_bot_rate: 1.0,
            source_pool: SourcePool::SpoofedRandom,
            old_user_suppression: 0.1,
        });
        assert!(gen_scenario(&cfg, 1).is_err());
    }
}
