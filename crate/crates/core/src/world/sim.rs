//! Per-step world state: who is where, which requests are open, and the event log.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::demand::{Cents, RequestStatus, RideRequest};
use super::fleet::{DriverProfile, TrajectoryRow};
use super::grid::{GridId, GridMap};
use crate::behavior::preference::GroundTruthPrefParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverStatus {
    Idle,
    Repositioning,
    Occupied,
}

impl DriverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DriverStatus::Idle => "idle",
            DriverStatus::Repositioning => "repositioning",
            DriverStatus::Occupied => "occupied",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LastAction {
    None,
    AcceptedReposition(GridId),
    Rejected(GridId),
}

#[derive(Debug, Clone, PartialEq)]
struct Trip {
    request: u64,
    pickup: GridId,
    dest: GridId,
    picked_up: bool,
    fare: Cents,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverState {
    pub id: usize,
    pub grid: GridId,
    pub status: DriverStatus,
    pub obedience: f64,
    pub earnings: Cents,
    pub last_action: LastAction,
    pub visit_counts: Vec<u32>,
    pub pref_params: GroundTruthPrefParams,
    /// Consecutive steps spent without a passenger.
    pub idle_steps: u32,
    target: Option<GridId>,
    trip: Option<Trip>,
}

impl DriverState {
    fn from_profile(p: &DriverProfile) -> Self {
        Self {
            id: p.id,
            grid: p.pref.home_grid,
            status: DriverStatus::Idle,
            obedience: p.obedience,
            earnings: Cents(0),
            last_action: LastAction::None,
            visit_counts: p.history.clone(),
            pref_params: p.pref.clone(),
            idle_steps: 0,
            target: None,
            trip: None,
        }
    }

    /// Steps until the current trip ends, if occupied.
    pub fn remaining_trip(&self, map: &GridMap) -> Option<usize> {
        self.trip.as_ref().map(|trip| {
            if trip.picked_up {
                map.manhattan(self.grid, trip.dest)
            } else {
                map.manhattan(self.grid, trip.pickup) + map.manhattan(trip.pickup, trip.dest)
            }
        })
    }

    pub fn trip_dest(&self) -> Option<GridId> {
        self.trip.as_ref().map(|t| t.dest)
    }

    pub fn reposition_target(&self) -> Option<GridId> {
        self.target
    }
}

/// How an idle driver ended up choosing where to go this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    /// Own cruising choice, no recommendation issued.
    Cruise,
    Recommended {
        target: GridId,
        accepted: bool,
    },
}

/// Append-only record of everything that affects the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Request {
        t: usize,
        request: u64,
        origin: GridId,
        dest: GridId,
        fare: Cents,
    },
    Recommend {
        t: usize,
        driver: usize,
        from: GridId,
        target: GridId,
    },
    Decide {
        t: usize,
        driver: usize,
        accepted: bool,
        dest: GridId,
    },
    Cruise {
        t: usize,
        driver: usize,
        from: GridId,
        dest: GridId,
    },
    Match {
        t: usize,
        request: u64,
        driver: usize,
    },
    Serve {
        t: usize,
        request: u64,
        driver: usize,
        fare: Cents,
    },
    Expire {
        t: usize,
        request: u64,
    },
}

#[derive(Debug, Clone)]
pub struct Simulator {
    map: GridMap,
    steps: usize,
    radius: usize,
    t: usize,
    drivers: Vec<DriverState>,
    requests: Vec<RideRequest>,
    index: HashMap<u64, usize>,
    next_open: usize,
    pending: Vec<usize>,
    log: Vec<Event>,
    dropoffs: VecDeque<Vec<u32>>,
}

const DROPOFF_WINDOW: usize = 3;

impl Simulator {
    /// Start an episode at `t = 0` with every driver idle at home; step-0 requests are matched.
    pub fn new(
        map: GridMap,
        steps: usize,
        radius: usize,
        fleet: &[DriverProfile],
        mut requests: Vec<RideRequest>,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("sim.steps", "must be >= 1"));
        }
        if fleet.is_empty() {
            return Err(Error::config("fleet.size", "fleet must have at least one driver"));
        }
        for r in &mut requests {
            if r.origin.0 >= map.len() || r.dest.0 >= map.len() {
                return Err(Error::MalformedLog(format!("request {} off map", r.id)));
            }
            if r.fare.0 <= 0 {
                return Err(Error::MalformedLog(format!("request {} has fare <= 0", r.id)));
            }
            r.status = RequestStatus::Pending;
        }
        requests.sort_by_key(|r| (r.created_t, r.id));
        let mut index = HashMap::with_capacity(requests.len());
        for (i, r) in requests.iter().enumerate() {
            if index.insert(r.id, i).is_some() {
                return Err(Error::MalformedLog(format!("duplicate request id {}", r.id)));
            }
        }
        let drivers = fleet.iter().map(DriverState::from_profile).collect();
        let mut sim = Self {
            map,
            steps,
            radius,
            t: 0,
            drivers,
            requests,
            index,
            next_open: 0,
            pending: Vec::new(),
            log: Vec::new(),
            dropoffs: VecDeque::new(),
        };
        sim.open_requests();
        sim.match_requests();
        Ok(sim)
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn drivers(&self) -> &[DriverState] {
        &self.drivers
    }

    pub fn driver(&self, id: usize) -> &DriverState {
        &self.drivers[id]
    }

    pub fn requests(&self) -> &[RideRequest] {
        &self.requests
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn into_log(self) -> Vec<Event> {
        self.log
    }

    pub fn request(&self, id: u64) -> Option<&RideRequest> {
        self.index.get(&id).map(|&i| &self.requests[i])
    }

    /// Requests created in `[from, to)` so far.
    pub fn requests_created(&self, from: usize, to: usize) -> impl Iterator<Item = &RideRequest> {
        self.requests[..self.next_open]
            .iter()
            .filter(move |r| r.created_t >= from && r.created_t < to)
    }

    /// Idle drivers in `g` that have not committed a move this step, ascending id.
    pub fn idle_in(&self, g: GridId) -> Vec<usize> {
        self.drivers
            .iter()
            .filter(|d| d.status == DriverStatus::Idle && d.grid == g)
            .map(|d| d.id)
            .collect()
    }

    pub fn count_status(&self, status: DriverStatus) -> usize {
        self.drivers.iter().filter(|d| d.status == status).count()
    }

    /// Drop-offs per grid over the last few steps.
    pub fn recent_dropoffs(&self, g: GridId) -> u32 {
        self.dropoffs.iter().map(|v| v[g.0]).sum()
    }

    /// Idle vehicles expected in each grid at `t + 1`: uncommitted idle drivers
    /// staying put, committed moves at their targets, and trips ending next step.
    pub fn supply_forecast(&self) -> Vec<i64> {
        let mut s = vec![0i64; self.map.len()];
        for d in &self.drivers {
            match d.status {
                DriverStatus::Idle => s[d.grid.0] += 1,
                DriverStatus::Repositioning => s[d.target.expect("repositioning target").0] += 1,
                DriverStatus::Occupied => {
                    if d.remaining_trip(&self.map).is_some_and(|r| r <= 1) {
                        s[d.trip_dest().expect("occupied trip").0] += 1;
                    }
                }
            }
        }
        s
    }

    /// Fix where an idle driver goes this step. `dest` must be within its 3x3 neighborhood.
    pub fn commit(&mut self, driver: usize, dest: GridId, kind: MoveKind) -> Result<()> {
        let t = self.t;
        let d = self
            .drivers
            .get_mut(driver)
            .ok_or_else(|| Error::MalformedLog(format!("unknown driver {driver}")))?;
        if d.status != DriverStatus::Idle {
            return Err(Error::MalformedLog(format!(
                "driver {driver} is {} and cannot move",
                d.status.as_str()
            )));
        }
        if self.map.chebyshev(d.grid, dest) > 1 {
            return Err(Error::InvalidSlot(usize::MAX));
        }
        let from = d.grid;
        match kind {
            MoveKind::Cruise => {
                self.log.push(Event::Cruise { t, driver, from, dest });
            }
            MoveKind::Recommended { target, accepted } => {
                self.log.push(Event::Recommend {
                    t,
                    driver,
                    from,
                    target,
                });
                self.log.push(Event::Decide {
                    t,
                    driver,
                    accepted,
                    dest,
                });
                d.last_action = if accepted {
                    LastAction::AcceptedReposition(target)
                } else {
                    LastAction::Rejected(target)
                };
            }
        }
        d.status = DriverStatus::Repositioning;
        d.target = Some(dest);
        Ok(())
    }

    pub fn is_last_step(&self) -> bool {
        self.t + 1 >= self.steps
    }

    /// Move everyone one step forward and open the next step's requests.
    /// Drivers still idle without a committed move simply stay.
    pub fn advance(&mut self) {
        let mut drops = vec![0u32; self.map.len()];
        self.move_drivers(self.t + 1, &mut drops);
        self.dropoffs.push_back(drops);
        if self.dropoffs.len() > DROPOFF_WINDOW {
            self.dropoffs.pop_front();
        }
        self.t += 1;
        if self.t < self.steps {
            self.open_requests();
        }
    }

    fn move_drivers(&mut self, t_next: usize, drops: &mut [u32]) {
        for i in 0..self.drivers.len() {
            let d = &mut self.drivers[i];
            match d.status {
                DriverStatus::Repositioning => {
                    let target = d.target.take().expect("repositioning target");
                    d.grid = target;
                    d.status = DriverStatus::Idle;
                    d.visit_counts[target.0] += 1;
                    d.idle_steps += 1;
                }
                DriverStatus::Idle => {
                    d.idle_steps += 1;
                }
                DriverStatus::Occupied => {
                    let trip = d.trip.as_mut().expect("occupied trip");
                    let goal = if trip.picked_up { trip.dest } else { trip.pickup };
                    d.grid = self.map.step_toward(d.grid, goal);
                    if !trip.picked_up && d.grid == trip.pickup {
                        trip.picked_up = true;
                    }
                    if trip.picked_up && d.grid == trip.dest {
                        let trip = d.trip.take().expect("occupied trip");
                        d.status = DriverStatus::Idle;
                        d.earnings += trip.fare;
                        drops[d.grid.0] += 1;
                        let idx = self.index[&trip.request];
                        self.requests[idx].status = RequestStatus::Served;
                        self.log.push(Event::Serve {
                            t: t_next,
                            request: trip.request,
                            driver: d.id,
                            fare: trip.fare,
                        });
                    }
                }
            }
        }
    }

    fn open_requests(&mut self) {
        while self.next_open < self.requests.len() && self.requests[self.next_open].created_t <= self.t {
            let r = &self.requests[self.next_open];
            if r.created_t == self.t {
                self.log.push(Event::Request {
                    t: self.t,
                    request: r.id,
                    origin: r.origin,
                    dest: r.dest,
                    fare: r.fare,
                });
                self.pending.push(self.next_open);
            }
            self.next_open += 1;
        }
    }

    /// Greedy nearest-driver matching of this step's requests in ascending id.
    /// Requests left unmatched expire.
    pub fn match_requests(&mut self) -> Vec<(u64, usize)> {
        let mut pending = std::mem::take(&mut self.pending);
        pending.sort_by_key(|&i| self.requests[i].id);
        let mut matched = Vec::new();
        for i in pending {
            let origin = self.requests[i].origin;
            let best = self
                .drivers
                .iter()
                .filter(|d| d.status == DriverStatus::Idle)
                .map(|d| (self.map.manhattan(d.grid, origin), d.id))
                .filter(|&(dist, _)| dist <= self.radius)
                .min();
            let rid = self.requests[i].id;
            match best {
                Some((_, did)) => {
                    let req = &mut self.requests[i];
                    req.status = RequestStatus::Matched;
                    let d = &mut self.drivers[did];
                    d.status = DriverStatus::Occupied;
                    d.trip = Some(Trip {
                        request: rid,
                        pickup: origin,
                        dest: req.dest,
                        picked_up: d.grid == origin,
                        fare: req.fare,
                    });
                    d.last_action = LastAction::None;
                    d.idle_steps = 0;
                    self.log.push(Event::Match {
                        t: self.t,
                        request: rid,
                        driver: did,
                    });
                    matched.push((rid, did));
                }
                None => {
                    self.requests[i].status = RequestStatus::Expired;
                    self.log.push(Event::Expire {
                        t: self.t,
                        request: rid,
                    });
                }
            }
        }
        matched
    }

    /// Run out the clock: finish every trip in progress without new requests.
    pub fn finish(&mut self) {
        let mut guard = 0;
        while self.drivers.iter().any(|d| d.status != DriverStatus::Idle) {
            let mut drops = vec![0u32; self.map.len()];
            self.t += 1;
            let t = self.t;
            self.move_drivers(t, &mut drops);
            guard += 1;
            assert!(guard <= 4 * self.map.len() + 8, "trip drain did not terminate");
        }
    }

    pub fn trajectory_rows(&self) -> Vec<TrajectoryRow> {
        self.drivers
            .iter()
            .map(|d| {
                let (x, y) = self.map.coords(d.grid);
                TrajectoryRow {
                    driver_id: d.id,
                    t: self.t,
                    grid_x: x,
                    grid_y: y,
                    status: d.status.as_str().to_string(),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::STAY;

    fn profile(id: usize, home: GridId) -> DriverProfile {
        DriverProfile {
            id,
            obedience: 0.5,
            pref: GroundTruthPrefParams {
                w_home: 0.0,
                home_grid: home,
                w_hot: 0.0,
                w_familiar: 0.0,
                temperature: 1.0,
            },
            history: vec![0; 25],
        }
    }

    fn req(id: u64, t: usize, origin: GridId, dest: GridId, fare: i64) -> RideRequest {
        RideRequest {
            id,
            origin,
            dest,
            created_t: t,
            fare: Cents(fare),
            status: RequestStatus::Pending,
        }
    }

    #[test]
    fn matches_within_radius() {
        let map = GridMap::new(5, 5).unwrap();
        let fleet = vec![profile(0, map.id(0, 0).unwrap())];
        let r = req(0, 0, map.id(1, 1).unwrap(), map.id(4, 4).unwrap(), 900);
        let sim = Simulator::new(map, 10, 2, &fleet, vec![r]).unwrap();
        assert_eq!(sim.requests()[0].status, RequestStatus::Matched);
        assert_eq!(sim.driver(0).status, DriverStatus::Occupied);
    }

    #[test]
    fn tie_goes_to_smallest_driver_id() {
        let map = GridMap::new(5, 5).unwrap();
        let mut fleet: Vec<DriverProfile> = (0..8).map(|i| profile(i, map.id(4, 4).unwrap())).collect();
        fleet[7].pref.home_grid = map.id(1, 2).unwrap();
        fleet[3].pref.home_grid = map.id(3, 2).unwrap();
        let r = req(0, 0, map.id(2, 2).unwrap(), map.id(0, 0).unwrap(), 500);
        let sim = Simulator::new(map, 10, 2, &fleet, vec![r]).unwrap();
        assert!(sim.log().contains(&Event::Match {
            t: 0,
            request: 0,
            driver: 3
        }));
    }

    #[test]
    fn far_request_expires() {
        let map = GridMap::new(5, 5).unwrap();
        let fleet = vec![profile(0, map.id(0, 0).unwrap())];
        let r = req(0, 0, map.id(4, 4).unwrap(), map.id(3, 3).unwrap(), 500);
        let sim = Simulator::new(map, 10, 2, &fleet, vec![r]).unwrap();
        assert_eq!(sim.requests()[0].status, RequestStatus::Expired);
    }

    #[test]
    fn accepted_reposition_arrives_next_step() {
        let map = GridMap::new(5, 5).unwrap();
        let c = map.id(2, 2).unwrap();
        let fleet = vec![profile(0, c)];
        let mut sim = Simulator::new(map.clone(), 10, 2, &fleet, vec![]).unwrap();
        let ne = map.neighbor(c, 2).unwrap();
        sim.commit(
            0,
            ne,
            MoveKind::Recommended {
                target: ne,
                accepted: true,
            },
        )
        .unwrap();
        sim.advance();
        assert_eq!(sim.driver(0).grid, ne);
        assert_eq!(sim.driver(0).status, DriverStatus::Idle);
        assert_eq!(sim.driver(0).last_action, LastAction::AcceptedReposition(ne));
    }

    #[test]
    fn occupied_driver_moves_one_grid_per_step_and_collects_fare() {
        let map = GridMap::new(5, 5).unwrap();
        let o = map.id(0, 0).unwrap();
        let fleet = vec![profile(0, o)];
        let r = req(0, 0, o, map.id(3, 0).unwrap(), 850);
        let mut sim = Simulator::new(map.clone(), 10, 2, &fleet, vec![r]).unwrap();
        assert_eq!(sim.driver(0).remaining_trip(&map), Some(3));
        sim.advance();
        assert_eq!(sim.driver(0).status, DriverStatus::Occupied);
        assert_eq!(sim.driver(0).remaining_trip(&map), Some(2));
        sim.advance();
        sim.advance();
        assert_eq!(sim.driver(0).status, DriverStatus::Idle);
        assert_eq!(sim.driver(0).earnings, Cents(850));
        assert_eq!(sim.requests()[0].status, RequestStatus::Served);
    }

    #[test]
    fn commit_rejects_far_or_busy() {
        let map = GridMap::new(5, 5).unwrap();
        let c = map.id(2, 2).unwrap();
        let fleet = vec![profile(0, c)];
        let mut sim = Simulator::new(map.clone(), 10, 2, &fleet, vec![]).unwrap();
        assert!(sim.commit(0, map.id(4, 4).unwrap(), MoveKind::Cruise).is_err());
        sim.commit(0, map.neighbor(c, STAY).unwrap(), MoveKind::Cruise).unwrap();
        assert!(sim.commit(0, c, MoveKind::Cruise).is_err());
    }
}
