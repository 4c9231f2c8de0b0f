//! Deterministic synthetic auth-log generator with planted red-team events.
//!
//! Normal events are drawn from per-user habitual (pc, auth type, logon
//! type) distributions; planted red-team events reuse a compromised
//! user's name with a source pc and destination pc that user never
//! touches and an auth type the user never employs. Output is
//! byte-identical for a given seed.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{EventRecord, Outcome, RedTeamLabel, SECONDS_PER_DAY};

const AUTH_TYPES: [&str; 4] = ["Kerberos", "Negotiate", "NTLM", "CredSSP"];
const LOGON_TYPES: [&str; 4] = ["Network", "Interactive", "Batch", "Service"];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub users: usize,
    pub pcs: usize,
    pub days: usize,
    /// Mean events per user per day (Poisson).
    pub events_per_user_day: usize,
    /// Planted red-team event count; 0 produces an empty label file.
    pub red_events: usize,
    /// First day index eligible for planted events (clamped to days-1).
    pub red_start_day: usize,
    pub domains: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 50,
            pcs: 100,
            days: 20,
            events_per_user_day: 200,
            red_events: 40,
            red_start_day: 2,
            domains: 2,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.users == 0 || self.days == 0 || self.pcs == 0 {
            return Err(Error::Config(
                "synthetic config needs users > 0, pcs > 0, days > 0".into(),
            ));
        }
        if self.domains == 0 {
            return Err(Error::Config("synthetic config needs domains > 0".into()));
        }
        Ok(())
    }
}

/// A user's habitual behavior. Red events for this user are drawn from
/// the complement of these sets.
struct Profile {
    name: String,
    domain: String,
    src_pcs: Vec<String>,
    dst_pcs: Vec<String>,
    auth_types: Vec<&'static str>,
    logon_types: Vec<&'static str>,
    fail_rate: f64,
    self_dst_rate: f64,
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    // Knuth's method; fine for desk-scale means.
    let l = (-mean).exp();
    let mut k = 0usize;
    let mut p = 1.0f64;
    loop {
        p *= rng.random_range(0.0..1.0f64);
        if p <= l {
            return k;
        }
        k += 1;
    }
}

/// Weighted pick with harmonic weights: earlier entries are habitual,
/// later ones occasional.
fn pick_harmonic<'a, T: ?Sized>(rng: &mut ChaCha8Rng, items: &'a [&'a T]) -> &'a T {
    let total: f64 = (1..=items.len()).map(|i| 1.0 / i as f64).sum();
    let mut r = rng.random_range(0.0..total);
    for (i, it) in items.iter().enumerate() {
        r -= 1.0 / (i + 1) as f64;
        if r <= 0.0 {
            return it;
        }
    }
    items[items.len() - 1]
}

fn build_profiles(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Profile> {
    // Zipf-ish global pc popularity: low-index pcs are shared broadly,
    // high-index pcs are rare, so foreign pcs picked for red events skew
    // toward globally uncommon names.
    let pc_names: Vec<String> = (1..=cfg.pcs).map(|i| format!("C{i}")).collect();
    (1..=cfg.users)
        .map(|u| {
            let name = format!("U{u}");
            let domain = if cfg.domains == 1 || rng.random_range(0.0..1.0) < 0.8 {
                "DOM1".to_string()
            } else {
                format!("DOM{}", 2 + rng.random_range(0..cfg.domains - 1))
            };
            let n_src = 1 + usize::from(rng.random_range(0.0..1.0) < 0.3);
            let n_dst = rng.random_range(2..=4usize.min(cfg.pcs));
            let mut pool: Vec<usize> = (0..cfg.pcs).collect();
            // Bias habitual picks toward popular (low-index) pcs.
            let mut picks = BTreeSet::new();
            while picks.len() < (n_src + n_dst).min(cfg.pcs) {
                let r: f64 = rng.random_range(0.0..1.0);
                let idx = ((r * r) * cfg.pcs as f64) as usize;
                picks.insert(pool[idx.min(cfg.pcs - 1)]);
            }
            pool = picks.into_iter().collect();
            pool.shuffle(rng);
            let src_pcs: Vec<String> = pool[..n_src.min(pool.len())]
                .iter()
                .map(|&i| pc_names[i].clone())
                .collect();
            let dst_pcs: Vec<String> = pool[n_src.min(pool.len())..]
                .iter()
                .map(|&i| pc_names[i].clone())
                .collect();
            let dst_pcs = if dst_pcs.is_empty() { src_pcs.clone() } else { dst_pcs };
            let n_auth = 1 + usize::from(rng.random_range(0.0..1.0) < 0.4);
            let mut auth: Vec<&'static str> = AUTH_TYPES.to_vec();
            auth.shuffle(rng);
            auth.truncate(n_auth.min(AUTH_TYPES.len() - 1));
            let n_logon = 1 + usize::from(rng.random_range(0.0..1.0) < 0.5);
            let mut logon: Vec<&'static str> = LOGON_TYPES.to_vec();
            logon.shuffle(rng);
            logon.truncate(n_logon);
            Profile {
                name,
                domain,
                src_pcs,
                dst_pcs,
                auth_types: auth,
                logon_types: logon,
                fail_rate: rng.random_range(0.01..0.05),
                self_dst_rate: 0.85,
            }
        })
        .collect()
}

fn normal_event(
    p: &Profile,
    profiles: &[Profile],
    time: u64,
    rng: &mut ChaCha8Rng,
) -> EventRecord {
    let src_refs: Vec<&str> = p.src_pcs.iter().map(|s| s.as_str()).collect();
    let dst_refs: Vec<&str> = p.dst_pcs.iter().map(|s| s.as_str()).collect();
    let src_pc = pick_harmonic(rng, &src_refs).to_string();
    let dst_pc = pick_harmonic(rng, &dst_refs).to_string();
    let (dst_user, dst_domain) = if rng.random_range(0.0..1.0) < p.self_dst_rate {
        (p.name.clone(), p.domain.clone())
    } else {
        let other = &profiles[rng.random_range(0..profiles.len())];
        (other.name.clone(), other.domain.clone())
    };
    let auth_type = pick_harmonic(rng, &p.auth_types).to_string();
    let logon_type = pick_harmonic(rng, &p.logon_types).to_string();
    let auth_orientation = if rng.random_range(0.0..1.0) < 0.6 { "LogOn" } else { "LogOff" };
    let outcome = if rng.random_range(0.0..1.0) < p.fail_rate {
        Outcome::Fail
    } else {
        Outcome::Success
    };
    EventRecord {
        time,
        src_user: p.name.clone(),
        src_domain: p.domain.clone(),
        dst_user,
        dst_domain,
        src_pc,
        dst_pc,
        auth_type,
        logon_type,
        auth_orientation: auth_orientation.to_string(),
        outcome,
        is_redteam: false,
    }
}

/// Generated corpus still in memory; `events` sorted by time.
pub struct SynthOutput {
    pub events: Vec<EventRecord>,
    pub labels: Vec<RedTeamLabel>,
}

/// Generate the corpus deterministically for the given seed.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles = build_profiles(cfg, &mut rng);

    let mut events: Vec<EventRecord> = Vec::new();
    for day in 0..cfg.days {
        for p in &profiles {
            let n = poisson(&mut rng, cfg.events_per_user_day as f64);
            for _ in 0..n {
                let time = day as u64 * SECONDS_PER_DAY + rng.random_range(0..SECONDS_PER_DAY);
                events.push(normal_event(p, &profiles, time, &mut rng));
            }
        }
    }

    // Planted red-team events: compromised user's name, foreign src and
    // dst pcs, an auth type the user never employs.
    let mut labels: Vec<RedTeamLabel> = Vec::new();
    if cfg.red_events > 0 {
        let red_start = cfg.red_start_day.min(cfg.days - 1);
        let n_compromised = cfg.users.min(1 + cfg.users / 10);
        let mut order: Vec<usize> = (0..cfg.users).collect();
        order.shuffle(&mut rng);
        let compromised: Vec<usize> = order[..n_compromised].to_vec();
        let pc_names: Vec<String> = (1..=cfg.pcs).map(|i| format!("C{i}")).collect();
        let mut used: BTreeSet<(u64, String, String, String)> = BTreeSet::new();
        for i in 0..cfg.red_events {
            let p = &profiles[compromised[i % compromised.len()]];
            let foreign: Vec<&str> = pc_names
                .iter()
                .map(|s| s.as_str())
                .filter(|pc| !p.src_pcs.iter().any(|x| x == pc) && !p.dst_pcs.iter().any(|x| x == pc))
                .collect();
            if foreign.len() < 2 {
                return Err(Error::Config(
                    "too few pcs to plant never-seen red-team destinations".into(),
                ));
            }
            let novel_auth: Vec<&str> = AUTH_TYPES
                .iter()
                .copied()
                .filter(|a| !p.auth_types.contains(a))
                .collect();
            let day = rng.random_range(red_start..cfg.days) as u64;
            let (time, src_pc, dst_pc) = loop {
                let t = day * SECONDS_PER_DAY + rng.random_range(0..SECONDS_PER_DAY);
                let s = foreign[rng.random_range(0..foreign.len())].to_string();
                let d = loop {
                    let d = foreign[rng.random_range(0..foreign.len())].to_string();
                    if d != s {
                        break d;
                    }
                };
                let key = (t, format!("{}@{}", p.name, p.domain), s.clone(), d.clone());
                if !used.contains(&key) {
                    used.insert(key);
                    break (t, s, d);
                }
            };
            let auth_type = novel_auth[rng.random_range(0..novel_auth.len())].to_string();
            let logon_type = pick_harmonic(&mut rng, &p.logon_types.iter().copied().collect::<Vec<_>>());
            events.push(EventRecord {
                time,
                src_user: p.name.clone(),
                src_domain: p.domain.clone(),
                dst_user: p.name.clone(),
                dst_domain: p.domain.clone(),
                src_pc: src_pc.clone(),
                dst_pc: dst_pc.clone(),
                auth_type,
                logon_type: logon_type.to_string(),
                auth_orientation: "LogOn".to_string(),
                outcome: Outcome::Success,
                is_redteam: true,
            });
            labels.push(RedTeamLabel {
                time,
                user: format!("{}@{}", p.name, p.domain),
                src_pc,
                dst_pc,
            });
        }
    }

    events.sort_by_key(|e| e.time);
    labels.sort_by(|a, b| (a.time, &a.user).cmp(&(b.time, &b.user)));
    Ok(SynthOutput { events, labels })
}

fn open_writer(path: &Path) -> Result<Box<dyn Write>> {
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufWriter::new(flate2::write::GzEncoder::new(
            file,
            flate2::Compression::default(),
        ))))
    } else {
        Ok(Box::new(BufWriter::new(file)))
    }
}

/// Generate and write the two files (events, labels) in the wire formats
/// `parse_auth_line` / `parse_redteam_line` read. Bit-exact per seed.
pub fn generate_to_files(
    cfg: &SynthConfig,
    seed: u64,
    events_path: &Path,
    labels_path: &Path,
) -> Result<SynthOutput> {
    let out = generate_synthetic(cfg, seed)?;
    let mut ew = open_writer(events_path)?;
    for ev in &out.events {
        writeln!(ew, "{}", ev.to_line())?;
    }
    ew.flush()?;
    let mut lw = open_writer(labels_path)?;
    for l in &out.labels {
        writeln!(lw, "{},{},{},{}", l.time, l.user, l.src_pc, l.dst_pc)?;
    }
    lw.flush()?;
    Ok(out)
}
