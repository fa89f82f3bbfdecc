//! Desk-scale LEO constellation: circular two-body orbits over a rotating
//! spherical Earth, ground-station visibility windows sampled on a time
//! grid, and the per-round scheduler that picks relay satellites and their
//! in-plane neighbours.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const EARTH_MU_KM3_S2: f64 = 398_600.4418;
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;

/// Walker-style constellation: `num_planes` evenly spaced ascending nodes,
/// `sats_per_plane` evenly spaced slots per plane, and a relative phase of
/// `phasing · 360° / (P · S)` between adjacent planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstellationConfig {
    pub num_planes: usize,
    pub sats_per_plane: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub phasing: f64,
    /// Simulation start, seconds since the Earth-fixed frame was aligned
    /// with the inertial frame.
    pub epoch_s: f64,
}

impl Default for ConstellationConfig {
    fn default() -> Self {
        ConstellationConfig {
            num_planes: 10,
            sats_per_plane: 10,
            altitude_km: 550.0,
            inclination_deg: 53.0,
            phasing: 1.0,
            epoch_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundStation {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub min_elevation_deg: f64,
}

impl Default for GroundStation {
    fn default() -> Self {
        GroundStation {
            latitude_deg: 45.0,
            longitude_deg: 10.0,
            min_elevation_deg: 10.0,
        }
    }
}

impl GroundStation {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.latitude_deg.abs() <= 90.0) {
            v.push(format!("ground station latitude must be in [-90, 90], got {}", self.latitude_deg));
        }
        if !self.longitude_deg.is_finite() {
            v.push("ground station longitude must be finite".into());
        }
        if !(0.0..90.0).contains(&self.min_elevation_deg) && self.min_elevation_deg != 90.0 {
            v.push(format!(
                "ground station min elevation must be in [0, 90), got {}",
                self.min_elevation_deg
            ));
        }
        v
    }
}

impl ConstellationConfig {
    pub fn num_sats(&self) -> usize {
        self.num_planes * self.sats_per_plane
    }

    pub fn radius_km(&self) -> f64 {
        EARTH_RADIUS_KM + self.altitude_km
    }

    pub fn period_s(&self) -> f64 {
        2.0 * PI * (self.radius_km().powi(3) / EARTH_MU_KM3_S2).sqrt()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.num_planes == 0 || self.sats_per_plane == 0 {
            v.push("constellation needs at least one plane and one satellite per plane".into());
        }
        if !(self.altitude_km > 0.0 && self.altitude_km.is_finite()) {
            v.push(format!("constellation altitude must be > 0, got {}", self.altitude_km));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            v.push(format!("inclination must be in [0, 180], got {}", self.inclination_deg));
        }
        if !self.phasing.is_finite() || !self.epoch_s.is_finite() {
            v.push("phasing and epoch must be finite".into());
        }
        v
    }

    pub fn plane_of(&self, sat_id: usize) -> usize {
        sat_id / self.sats_per_plane
    }

    fn check_sat(&self, sat_id: usize) -> Result<()> {
        if sat_id < self.num_sats() {
            Ok(())
        } else {
            Err(Error::UnknownSatellite(sat_id))
        }
    }
}

/// Earth-centred inertial position (km) of `sat_id` at `t` seconds after
/// the simulation start.
pub fn propagate(config: &ConstellationConfig, sat_id: usize, t: f64) -> Result<[f64; 3]> {
    config.check_sat(sat_id)?;
    let plane = config.plane_of(sat_id) as f64;
    let slot = (sat_id % config.sats_per_plane) as f64;
    let p = config.num_planes as f64;
    let s = config.sats_per_plane as f64;
    let raan = 2.0 * PI * plane / p;
    let phase0 = 2.0 * PI * slot / s + 2.0 * PI * config.phasing * plane / (p * s);
    let r = config.radius_km();
    let mean_motion = (EARTH_MU_KM3_S2 / r.powi(3)).sqrt();
    let u = phase0 + mean_motion * t;
    let inc = config.inclination_deg.to_radians();
    let (su, cu) = u.sin_cos();
    let (so, co) = raan.sin_cos();
    let (si, ci) = inc.sin_cos();
    Ok([
        r * (cu * co - su * ci * so),
        r * (cu * so + su * ci * co),
        r * su * si,
    ])
}

/// Inertial position (km) of the ground station at `t`.
pub fn ground_station_position(gs: &GroundStation, config: &ConstellationConfig, t: f64) -> [f64; 3] {
    let lat = gs.latitude_deg.to_radians();
    let lon = gs.longitude_deg.to_radians() + EARTH_ROTATION_RAD_S * (config.epoch_s + t);
    let (sl, cl) = lat.sin_cos();
    [
        EARTH_RADIUS_KM * cl * lon.cos(),
        EARTH_RADIUS_KM * cl * lon.sin(),
        EARTH_RADIUS_KM * sl,
    ]
}

/// Elevation of `sat_id` above the ground station's local horizon.
pub fn elevation_deg(config: &ConstellationConfig, gs: &GroundStation, sat_id: usize, t: f64) -> Result<f64> {
    let sat = propagate(config, sat_id, t)?;
    let site = ground_station_position(gs, config, t);
    let rel = [sat[0] - site[0], sat[1] - site[1], sat[2] - site[2]];
    let range = (rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]).sqrt();
    let up = (rel[0] * site[0] + rel[1] * site[1] + rel[2] * site[2]) / (range * EARTH_RADIUS_KM);
    Ok(up.clamp(-1.0, 1.0).asin().to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommWindow {
    pub sat_id: usize,
    pub start_s: f64,
    pub end_s: f64,
}

/// Visibility windows of every satellite over `[0, horizon_s]`, sorted by
/// satellite then start time. A window spans from the first visible grid
/// sample to the first non-visible one (or the horizon).
pub fn compute_windows(
    config: &ConstellationConfig,
    gs: &GroundStation,
    horizon_s: f64,
    dt_s: f64,
) -> Result<Vec<CommWindow>> {
    if !(dt_s > 0.0) || !(horizon_s > dt_s) {
        return Err(Error::config(format!(
            "window sampling needs dt > 0 and horizon > dt (dt={dt_s}, horizon={horizon_s})"
        )));
    }
    let steps = (horizon_s / dt_s).floor() as usize;
    let mut windows = Vec::new();
    for sat in 0..config.num_sats() {
        let mut open: Option<f64> = None;
        for step in 0..=steps {
            let t = step as f64 * dt_s;
            let visible = elevation_deg(config, gs, sat, t)? >= gs.min_elevation_deg;
            match (visible, open) {
                (true, None) => open = Some(t),
                (false, Some(start)) => {
                    windows.push(CommWindow { sat_id: sat, start_s: start, end_s: t });
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(start) = open {
            let end = horizon_s.max(start + dt_s);
            windows.push(CommWindow { sat_id: sat, start_s: start, end_s: end });
        }
    }
    Ok(windows)
}

/// The (one or two) in-plane ring neighbours of a satellite.
pub fn neighbors(config: &ConstellationConfig, sat_id: usize) -> Result<BTreeSet<usize>> {
    config.check_sat(sat_id)?;
    let s = config.sats_per_plane;
    let base = config.plane_of(sat_id) * s;
    let slot = sat_id % s;
    let mut out = BTreeSet::new();
    if s > 1 {
        out.insert(base + (slot + 1) % s);
        out.insert(base + (slot + s - 1) % s);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "snake_case")]
pub enum Route {
    Direct,
    Forwarded { via: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSchedule {
    pub round_index: usize,
    /// Active agents with their uplink route, sorted by id.
    pub routing: Vec<(usize, Route)>,
    pub round_duration_s: f64,
}

impl RoundSchedule {
    pub fn direct(round_index: usize, active: impl IntoIterator<Item = usize>) -> Self {
        let mut routing: Vec<_> = active.into_iter().map(|i| (i, Route::Direct)).collect();
        routing.sort_by_key(|r| r.0);
        RoundSchedule {
            round_index,
            routing,
            round_duration_s: 0.0,
        }
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.routing.iter().map(|r| r.0)
    }

    pub fn len(&self) -> usize {
        self.routing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routing.is_empty()
    }
}

/// Windows grouped per satellite, for lookups of the next contact.
#[derive(Debug, Clone)]
pub struct WindowTable {
    per_sat: Vec<Vec<CommWindow>>,
}

impl WindowTable {
    pub fn new(num_sats: usize, windows: &[CommWindow]) -> Self {
        let mut per_sat = vec![Vec::new(); num_sats];
        for w in windows {
            if w.sat_id < num_sats {
                per_sat[w.sat_id].push(*w);
            }
        }
        for list in &mut per_sat {
            list.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        }
        WindowTable { per_sat }
    }

    /// Earliest time at or after `now_s` at which `sat_id` can start a
    /// transmission of `duration_s` that fits inside one window.
    pub fn earliest_start(&self, sat_id: usize, now_s: f64, duration_s: f64) -> Option<f64> {
        self.per_sat.get(sat_id)?.iter().find_map(|w| {
            let start = w.start_s.max(now_s);
            (start + duration_s <= w.end_s).then_some(start)
        })
    }

    /// True if `[start_s, start_s + duration_s]` lies inside one window.
    pub fn covers(&self, sat_id: usize, start_s: f64, duration_s: f64) -> bool {
        self.per_sat.get(sat_id).is_some_and(|ws| {
            ws.iter()
                .any(|w| w.start_s <= start_s && start_s + duration_s <= w.end_s)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    /// Time for one relay to upload its own and its forwarded payloads.
    pub transmit_s: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { transmit_s: 30.0 }
    }
}

/// Relay start times chosen for a schedule, kept for invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDetail {
    pub schedule: RoundSchedule,
    pub relay_starts: Vec<(usize, f64)>,
}

fn build_schedule(
    order: &[(usize, f64)],
    k: usize,
    target_count: usize,
    config: &ConstellationConfig,
    now_s: f64,
    transmit_s: f64,
) -> Result<ScheduleDetail> {
    let n = config.num_sats();
    let mut taken = vec![false; n];
    let mut routing: Vec<(usize, Route)> = Vec::new();
    let mut relay_starts: Vec<(usize, f64)> = Vec::new();
    let mut latest: Option<f64> = None;

    // Forwarded neighbours cost no extra time, so they are attached before
    // any relay that would push the round's end later.
    let attach = |routing: &mut Vec<(usize, Route)>,
                  taken: &mut Vec<bool>,
                  relays: &[(usize, f64)]|
     -> Result<()> {
        for &(relay, _) in relays {
            for nb in neighbors(config, relay)? {
                if routing.len() >= target_count {
                    return Ok(());
                }
                if !taken[nb] {
                    taken[nb] = true;
                    routing.push((nb, Route::Forwarded { via: relay }));
                }
            }
        }
        Ok(())
    };

    for &(sat, start) in order {
        if routing.len() >= target_count {
            break;
        }
        if taken[sat] {
            continue;
        }
        if latest.is_some_and(|l| start > l) {
            attach(&mut routing, &mut taken, &relay_starts)?;
            if routing.len() >= target_count {
                break;
            }
            // Attaching may have claimed this satellite as a forwarder.
            if taken[sat] {
                continue;
            }
        }
        taken[sat] = true;
        routing.push((sat, Route::Direct));
        relay_starts.push((sat, start));
        latest = Some(latest.map_or(start, |l: f64| l.max(start)));
    }
    attach(&mut routing, &mut taken, &relay_starts)?;

    routing.sort_by_key(|r| r.0);
    let round_duration_s = match latest {
        Some(l) => l - now_s + transmit_s,
        None => 0.0,
    };
    Ok(ScheduleDetail {
        schedule: RoundSchedule {
            round_index: k,
            routing,
            round_duration_s,
        },
        relay_starts,
    })
}

fn feasible_relays(table: &WindowTable, num_sats: usize, now_s: f64, transmit_s: f64) -> Vec<(usize, f64)> {
    (0..num_sats)
        .filter_map(|s| table.earliest_start(s, now_s, transmit_s).map(|t| (s, t)))
        .collect()
}

/// Greedy earliest-completion scheduler. Satellites are taken as direct
/// relays in order of the earliest time they can finish an upload; before
/// a relay that would lengthen the round is added, the ring neighbours of
/// the relays already chosen are attached as forwarded agents. Selection
/// stops once `target_count` agents are active.
pub fn schedule_round(
    table: &WindowTable,
    k: usize,
    target_count: usize,
    config: &ConstellationConfig,
    now_s: f64,
    scheduler: &SchedulerConfig,
) -> Result<ScheduleDetail> {
    if target_count == 0 {
        return Err(Error::config("schedule target_count must be >= 1"));
    }
    let mut order = feasible_relays(table, config.num_sats(), now_s, scheduler.transmit_s);
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    build_schedule(&order, k, target_count, config, now_s, scheduler.transmit_s)
}

/// Same construction as [`schedule_round`] but with relays taken in a
/// uniformly random order. Used as a comparison baseline.
pub fn schedule_round_random<R: Rng + ?Sized>(
    table: &WindowTable,
    k: usize,
    target_count: usize,
    config: &ConstellationConfig,
    now_s: f64,
    scheduler: &SchedulerConfig,
    rng: &mut R,
) -> Result<ScheduleDetail> {
    if target_count == 0 {
        return Err(Error::config("schedule target_count must be >= 1"));
    }
    let mut order = feasible_relays(table, config.num_sats(), now_s, scheduler.transmit_s);
    order.shuffle(rng);
    build_schedule(&order, k, target_count, config, now_s, scheduler.transmit_s)
}

/// Checks the routing invariants of a schedule: every direct satellite has
/// a window covering its upload, and every forwarded satellite is a ring
/// neighbour of a direct relay active in the same round.
pub fn check_schedule(
    detail: &ScheduleDetail,
    table: &WindowTable,
    config: &ConstellationConfig,
    transmit_s: f64,
) -> Result<()> {
    let sched = &detail.schedule;
    let mut seen = BTreeSet::new();
    for &(id, route) in &sched.routing {
        if !seen.insert(id) {
            return Err(Error::config(format!("satellite {id} scheduled twice")));
        }
        match route {
            Route::Direct => {
                let start = detail
                    .relay_starts
                    .iter()
                    .find(|r| r.0 == id)
                    .map(|r| r.1)
                    .ok_or_else(|| Error::config(format!("relay {id} has no start time")))?;
                if !table.covers(id, start, transmit_s) {
                    return Err(Error::config(format!("relay {id} has no window at {start}")));
                }
            }
            Route::Forwarded { via } => {
                let relay_direct = sched
                    .routing
                    .iter()
                    .any(|&(r, rt)| r == via && rt == Route::Direct);
                if !relay_direct || !neighbors(config, via)?.contains(&id) {
                    return Err(Error::config(format!("satellite {id} forwarded via invalid relay {via}")));
                }
            }
        }
    }
    Ok(())
}
