//! Sources of the per-round active set: everyone, independent Bernoulli
//! draws, or the constellation scheduler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::{
    compute_windows, schedule_round, ConstellationConfig, GroundStation, RoundSchedule,
    SchedulerConfig, WindowTable,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParticipationConfig {
    Full,
    /// Agent `i` is active with probability `per_agent[i]` if given, else `p`.
    Probabilistic {
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default)]
        per_agent: Option<Vec<f64>>,
    },
    Scheduled {
        #[serde(default = "default_target")]
        target: usize,
        #[serde(default)]
        constellation: ConstellationConfig,
        #[serde(default)]
        ground_station: GroundStation,
        #[serde(default)]
        scheduler: SchedulerConfig,
        /// Visibility sampling step in seconds.
        #[serde(default = "default_dt")]
        window_dt_s: f64,
    },
}

fn default_p() -> f64 {
    0.5
}

fn default_target() -> usize {
    10
}

fn default_dt() -> f64 {
    10.0
}

impl Default for ParticipationConfig {
    fn default() -> Self {
        ParticipationConfig::Full
    }
}

impl ParticipationConfig {
    pub fn scheduled_default() -> Self {
        ParticipationConfig::Scheduled {
            target: default_target(),
            constellation: ConstellationConfig::default(),
            ground_station: GroundStation::default(),
            scheduler: SchedulerConfig::default(),
            window_dt_s: default_dt(),
        }
    }

    pub fn violations(&self, num_agents: usize) -> Vec<String> {
        let mut v = Vec::new();
        match self {
            ParticipationConfig::Full => {}
            ParticipationConfig::Probabilistic { p, per_agent } => {
                if let Some(ps) = per_agent {
                    if ps.len() != num_agents {
                        v.push(format!(
                            "participation.per_agent has {} entries for {num_agents} agents",
                            ps.len()
                        ));
                    }
                    if ps.iter().any(|q| !(*q > 0.0 && *q <= 1.0)) {
                        v.push("participation probabilities must lie in (0, 1]".into());
                    }
                } else if !(*p > 0.0 && *p <= 1.0) {
                    v.push(format!("participation.p must lie in (0, 1], got {p}"));
                }
            }
            ParticipationConfig::Scheduled {
                target,
                constellation,
                ground_station,
                scheduler,
                window_dt_s,
            } => {
                if *target == 0 {
                    v.push("participation.target must be >= 1".into());
                }
                v.extend(constellation.violations());
                v.extend(ground_station.violations());
                if constellation.num_sats() != num_agents {
                    v.push(format!(
                        "constellation has {} satellites but the problem has {num_agents} agents",
                        constellation.num_sats()
                    ));
                }
                if !(scheduler.transmit_s >= 0.0) {
                    v.push("scheduler.transmit_s must be >= 0".into());
                }
                if !(*window_dt_s > 0.0) {
                    v.push("participation.window_dt_s must be > 0".into());
                }
            }
        }
        v
    }

    pub fn build(&self, num_agents: usize, seed: u64) -> Result<Participation> {
        let v = self.violations(num_agents);
        if !v.is_empty() {
            return Err(Error::ConfigViolations(v));
        }
        Ok(match self {
            ParticipationConfig::Full => Participation::Full { num_agents },
            ParticipationConfig::Probabilistic { p, per_agent } => Participation::Probabilistic {
                probs: per_agent.clone().unwrap_or_else(|| vec![*p; num_agents]),
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
            ParticipationConfig::Scheduled {
                target,
                constellation,
                ground_station,
                scheduler,
                window_dt_s,
            } => Participation::Scheduled(Box::new(ScheduledParticipation::new(
                *target,
                constellation.clone(),
                ground_station.clone(),
                *scheduler,
                *window_dt_s,
            )?)),
        })
    }
}

/// Window-aware participation. Visibility windows are computed lazily and
/// the horizon doubles whenever the simulated clock gets close to it.
#[derive(Debug, Clone)]
pub struct ScheduledParticipation {
    target: usize,
    constellation: ConstellationConfig,
    ground_station: GroundStation,
    scheduler: SchedulerConfig,
    dt_s: f64,
    horizon_s: f64,
    table: WindowTable,
    now_s: f64,
}

const INITIAL_HORIZON_S: f64 = 86_400.0;
const MAX_HORIZON_S: f64 = 365.0 * 86_400.0;

impl ScheduledParticipation {
    pub fn new(
        target: usize,
        constellation: ConstellationConfig,
        ground_station: GroundStation,
        scheduler: SchedulerConfig,
        dt_s: f64,
    ) -> Result<Self> {
        let windows = compute_windows(&constellation, &ground_station, INITIAL_HORIZON_S, dt_s)?;
        let table = WindowTable::new(constellation.num_sats(), &windows);
        Ok(ScheduledParticipation {
            target,
            constellation,
            ground_station,
            scheduler,
            dt_s,
            horizon_s: INITIAL_HORIZON_S,
            table,
            now_s: 0.0,
        })
    }

    pub fn now_s(&self) -> f64 {
        self.now_s
    }

    pub fn table(&self) -> &WindowTable {
        &self.table
    }

    fn ensure_horizon(&mut self) -> Result<()> {
        // Half a day of look-ahead is far more than any round needs.
        while self.now_s + 43_200.0 > self.horizon_s && self.horizon_s < MAX_HORIZON_S {
            self.horizon_s *= 2.0;
            let windows =
                compute_windows(&self.constellation, &self.ground_station, self.horizon_s, self.dt_s)?;
            self.table = WindowTable::new(self.constellation.num_sats(), &windows);
        }
        Ok(())
    }

    pub fn next(&mut self, k: usize) -> Result<RoundSchedule> {
        self.ensure_horizon()?;
        let detail = schedule_round(
            &self.table,
            k,
            self.target,
            &self.constellation,
            self.now_s,
            &self.scheduler,
        )?;
        self.now_s += detail.schedule.round_duration_s;
        Ok(detail.schedule)
    }
}

#[derive(Debug, Clone)]
pub enum Participation {
    Full { num_agents: usize },
    Probabilistic { probs: Vec<f64>, rng: ChaCha8Rng },
    Scheduled(Box<ScheduledParticipation>),
}

impl Participation {
    /// Active set for round `k`.
    pub fn next(&mut self, k: usize) -> Result<RoundSchedule> {
        match self {
            Participation::Full { num_agents } => Ok(RoundSchedule::direct(k, 0..*num_agents)),
            Participation::Probabilistic { probs, rng } => {
                let active: Vec<usize> = probs
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| rng.random::<f64>() < p)
                    .map(|(i, _)| i)
                    .collect();
                Ok(RoundSchedule::direct(k, active))
            }
            Participation::Scheduled(s) => s.next(k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_is_everyone() {
        let mut p = ParticipationConfig::Full.build(4, 0).unwrap();
        let s = p.next(7).unwrap();
        assert_eq!(s.active().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(s.round_index, 7);
    }

    #[test]
    fn probabilistic_rate() {
        let cfg = ParticipationConfig::Probabilistic { p: 0.3, per_agent: None };
        let mut p = cfg.build(50, 5).unwrap();
        let total: usize = (0..400).map(|k| p.next(k).unwrap().len()).sum();
        let rate = total as f64 / (400.0 * 50.0);
        assert!((rate - 0.3).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn invalid_participation() {
        let bad = ParticipationConfig::Probabilistic { p: 0.0, per_agent: None };
        assert!(bad.build(3, 0).is_err());
        let bad = ParticipationConfig::Probabilistic { p: 0.5, per_agent: Some(vec![0.5; 2]) };
        assert!(bad.build(3, 0).is_err());
        let sched = ParticipationConfig::scheduled_default();
        assert_eq!(sched.violations(100), Vec::<String>::new());
        assert!(!sched.violations(99).is_empty());
    }
}
