//! A small deterministic multi-lane highway.
//!
//! Lanes are numbered from the top (`lane-1`) down. The agent (green) picks
//! one of five discrete actions per step; blue cars cruise in their lane and
//! fall in behind slower vehicles. Cars enter and leave at the edges of the
//! visible window around the agent, driven by a seeded ChaCha stream, so an
//! episode is a pure function of policy, seed and configuration.
//!
//! One step is one second. Distances are meters, speeds meters per second.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ltlf::Formula;
use crate::tracedb::{
    AbstractState, AbstractionError, Abstractor, Dataset, Episode, EpisodeMeta, GroupDef, PredicateDef, TraceError,
    Vocabulary,
};

pub const CAR_LENGTH: f64 = 5.0;
pub const CAR_WIDTH: f64 = 2.0;
pub const LANE_WIDTH: f64 = 4.0;
/// Blue cars keep at least this center distance to the vehicle ahead.
const FOLLOW_GAP: f64 = 7.0;
const SPAWN_CLEARANCE: f64 = 20.0;
pub const FRAME_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HighwayError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("trigger atom `{0}` is not in the vocabulary")]
    UnknownTriggerAtom(String),
    #[error("trigger `{0}` must be propositional")]
    TemporalTrigger(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Idle,
    Accelerate,
    Decelerate,
    LaneUp,
    LaneDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub lane: u8,
    pub position: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlueCar {
    pub lane: u8,
    pub position: f64,
    pub speed: f64,
    /// Speed the car returns to when the road ahead is free.
    pub cruise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub lanes: u8,
    pub horizon_behind: f64,
    pub horizon_ahead: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayState {
    pub step: usize,
    pub agent: Vehicle,
    pub cars: Vec<BlueCar>,
    pub road: Road,
    pub collision: bool,
    /// Action that produced this state; `None` on the first step.
    pub last_action: Option<Action>,
}

impl HighwayState {
    /// Signed longitudinal distance from the agent to a car.
    pub fn gap(&self, car: &BlueCar) -> f64 {
        car.position - self.agent.position
    }

    fn cars_in(&self, lane: u8) -> impl Iterator<Item = &BlueCar> + '_ {
        self.cars.iter().filter(move |c| c.lane == lane)
    }

    /// Closest car strictly ahead of the agent in `lane`.
    fn nearest_ahead(&self, lane: u8) -> Option<(f64, &BlueCar)> {
        self.cars_in(lane)
            .map(|c| (self.gap(c), c))
            .filter(|(g, _)| *g > 0.0)
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    pub lanes: u8,
    pub horizon_behind: f64,
    pub horizon_ahead: f64,
    pub initial_cars: usize,
    pub spawn_probability: f64,
    pub car_speed_min: f64,
    pub car_speed_max: f64,
    pub agent_speed: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub accel_step: f64,
    pub decel_step: f64,
    /// Fixed starting lane; drawn from the seed when absent.
    pub start_lane: Option<u8>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            lanes: 4,
            horizon_behind: 60.0,
            horizon_ahead: 100.0,
            initial_cars: 8,
            spawn_probability: 0.3,
            car_speed_min: 18.0,
            car_speed_max: 26.0,
            agent_speed: 22.0,
            speed_min: 0.0,
            speed_max: 30.0,
            accel_step: 2.0,
            decel_step: 4.0,
            start_lane: None,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), HighwayError> {
        let bad = |m: &str| Err(HighwayError::InvalidConfig(m.to_string()));
        if !(2..=8).contains(&self.lanes) {
            return bad("lanes must be between 2 and 8");
        }
        if !(self.horizon_behind > SPAWN_CLEARANCE && self.horizon_ahead > SPAWN_CLEARANCE) {
            return bad("horizons must exceed 20 m");
        }
        if !(0.0..=1.0).contains(&self.spawn_probability) {
            return bad("spawn probability must be in [0, 1]");
        }
        if !(0.0 <= self.speed_min && self.speed_min <= self.speed_max) {
            return bad("speed limits must satisfy 0 <= min <= max");
        }
        if !(self.car_speed_min <= self.car_speed_max && self.car_speed_min >= 0.0) {
            return bad("car speed range is empty or negative");
        }
        if !(self.speed_min..=self.speed_max).contains(&self.agent_speed) {
            return bad("agent speed is outside the speed limits");
        }
        if !(self.accel_step > 0.0 && self.decel_step > 0.0) {
            return bad("acceleration steps must be positive");
        }
        if let Some(l) = self.start_lane {
            if l == 0 || l > self.lanes {
                return bad("start lane out of range");
            }
        }
        Ok(())
    }

    pub fn road(&self) -> Road {
        Road {
            lanes: self.lanes,
            horizon_behind: self.horizon_behind,
            horizon_ahead: self.horizon_ahead,
        }
    }
}

// ---------------------------------------------------------------------------
// Predicates

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredicateParams {
    /// `behind` / `in-front-of`: same lane, gap in `(0, window]`.
    pub follow_window: f64,
    /// `car-above` / `car-below`: adjacent lane, `|gap| <= window`.
    pub side_window: f64,
}

impl Default for PredicateParams {
    fn default() -> Self {
        PredicateParams {
            follow_window: 10.0,
            side_window: 5.0,
        }
    }
}

/// Default four-lane vocabulary.
pub fn vocabulary() -> Vocabulary {
    vocabulary_for(4, &PredicateParams::default())
}

pub fn vocabulary_for(lanes: u8, params: &PredicateParams) -> Vocabulary {
    let groups = vec![
        GroupDef {
            name: "lanes".into(),
            exclusive: true,
            description: "lane the agent drives in, numbered from the top".into(),
        },
        GroupDef {
            name: "relations".into(),
            exclusive: false,
            description: "position relative to blue cars".into(),
        },
        GroupDef {
            name: "status".into(),
            exclusive: false,
            description: String::new(),
        },
    ];
    let mut preds: Vec<PredicateDef> = (1..=lanes)
        .map(|i| PredicateDef::new(&format!("lane-{i}"), "lanes").describe(&format!("agent is in lane {i}")))
        .collect();
    preds.push(
        PredicateDef::new("behind", "relations")
            .with_param("window", params.follow_window)
            .describe("a blue car is ahead of the agent in its lane"),
    );
    preds.push(
        PredicateDef::new("in-front-of", "relations")
            .with_param("window", params.follow_window)
            .describe("a blue car is behind the agent in its lane"),
    );
    preds.push(
        PredicateDef::new("car-above", "relations")
            .with_param("window", params.side_window)
            .describe("a blue car is alongside in the lane above"),
    );
    preds.push(
        PredicateDef::new("car-below", "relations")
            .with_param("window", params.side_window)
            .describe("a blue car is alongside in the lane below"),
    );
    preds.push(PredicateDef::new("collision", "status").describe("the agent has crashed"));
    Vocabulary::new(1, groups, preds).expect("highway vocabulary is well formed")
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighwayAbstractor {
    vocab: Vocabulary,
    params: PredicateParams,
    lanes: u8,
    relations: [usize; 5],
}

impl HighwayAbstractor {
    pub fn new(lanes: u8, params: PredicateParams) -> Self {
        let vocab = vocabulary_for(lanes, &params);
        let idx = |n: &str| vocab.index_of(n).expect("predicate present");
        let relations = [
            idx("behind"),
            idx("in-front-of"),
            idx("car-above"),
            idx("car-below"),
            idx("collision"),
        ];
        HighwayAbstractor {
            vocab,
            params,
            lanes,
            relations,
        }
    }

    pub fn params(&self) -> &PredicateParams {
        &self.params
    }
}

impl Default for HighwayAbstractor {
    fn default() -> Self {
        HighwayAbstractor::new(4, PredicateParams::default())
    }
}

impl Abstractor<HighwayState> for HighwayAbstractor {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn abstract_state(&self, s: &HighwayState) -> Result<AbstractState, AbstractionError> {
        let lane = s.agent.lane;
        if s.road.lanes != self.lanes || lane == 0 || lane > self.lanes {
            return Err(AbstractionError {
                predicate: format!("lane-{lane}"),
                reason: format!("agent lane {lane} outside a {}-lane vocabulary", self.lanes),
            });
        }
        let [behind, in_front, above, below, collision] = self.relations;
        // lane predicates come first in vocabulary order
        let mut out = AbstractState::EMPTY.with(usize::from(lane) - 1);
        let (fw, sw) = (self.params.follow_window, self.params.side_window);
        for c in &s.cars {
            let d = s.gap(c);
            if c.lane == lane && d > 0.0 && d <= fw {
                out.insert(behind);
            }
            if c.lane == lane && -d > 0.0 && -d <= fw {
                out.insert(in_front);
            }
            if c.lane + 1 == lane && d.abs() <= sw {
                out.insert(above);
            }
            if c.lane == lane + 1 && d.abs() <= sw {
                out.insert(below);
            }
        }
        if s.collision {
            out.insert(collision);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Policies

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Driver {
    /// Keeps its lane at cruising speed, changes lane or brakes when blocked.
    Plain,
    /// Moves up to the top lane whenever the lane above is clear.
    #[serde(rename = "toplane", alias = "top-lane")]
    TopLane,
    /// Steers towards the nearest blue car.
    Collision,
}

impl Driver {
    pub fn name(self) -> &'static str {
        match self {
            Driver::Plain => "plain",
            Driver::TopLane => "toplane",
            Driver::Collision => "collision",
        }
    }

    pub fn from_name(name: &str) -> Option<Driver> {
        match name {
            "plain" => Some(Driver::Plain),
            "toplane" | "top-lane" => Some(Driver::TopLane),
            "collision" => Some(Driver::Collision),
            _ => None,
        }
    }

    pub fn decide(self, s: &HighwayState, p: &DriverParams) -> Action {
        match self {
            Driver::Plain => plain(s, p),
            Driver::TopLane => top_lane(s, p),
            Driver::Collision => collide(s, p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriverParams {
    pub target_speed: f64,
    /// A slower car closer than this is an obstacle.
    pub follow_distance: f64,
    /// Free distance required behind/ahead in a lane before merging into it.
    pub merge_behind: f64,
    pub merge_ahead: f64,
}

impl Default for DriverParams {
    fn default() -> Self {
        DriverParams {
            target_speed: 24.0,
            follow_distance: 25.0,
            merge_behind: 10.0,
            merge_ahead: 12.0,
        }
    }
}

fn cruise(s: &HighwayState, p: &DriverParams) -> Action {
    let v = s.agent.speed;
    if v + 2.0 <= p.target_speed {
        Action::Accelerate
    } else if v > p.target_speed {
        Action::Decelerate
    } else {
        Action::Idle
    }
}

/// Lane exists and no car is inside the merge window now or one step ahead.
fn lane_clear(s: &HighwayState, lane: u8, p: &DriverParams) -> bool {
    if lane == 0 || lane > s.road.lanes {
        return false;
    }
    s.cars_in(lane).all(|c| {
        let now = s.gap(c);
        let soon = now + c.speed - s.agent.speed;
        let outside = |d: f64| d < -p.merge_behind || d > p.merge_ahead;
        outside(now) && outside(soon)
    })
}

fn obstacle(s: &HighwayState, p: &DriverParams) -> Option<(f64, f64)> {
    s.nearest_ahead(s.agent.lane)
        .filter(|(g, c)| *g < 12.0 || (*g < p.follow_distance && c.speed <= s.agent.speed))
        .map(|(g, c)| (g, c.speed))
}

fn free_ahead(s: &HighwayState, lane: u8) -> f64 {
    s.nearest_ahead(lane).map(|(g, _)| g).unwrap_or(f64::INFINITY)
}

fn brake_for(s: &HighwayState, gap: f64, lead_speed: f64) -> Action {
    if gap < 15.0 || s.agent.speed > lead_speed {
        Action::Decelerate
    } else {
        Action::Idle
    }
}

fn plain(s: &HighwayState, p: &DriverParams) -> Action {
    let lane = s.agent.lane;
    let Some((gap, lead_speed)) = obstacle(s, p) else {
        return cruise(s, p);
    };
    let down = lane + 1;
    let up = lane.saturating_sub(1);
    let options = [(down, Action::LaneDown), (up, Action::LaneUp)];
    let best = options
        .iter()
        .filter(|(l, _)| lane_clear(s, *l, p))
        .max_by(|a, b| free_ahead(s, a.0).total_cmp(&free_ahead(s, b.0)).then(b.0.cmp(&a.0)));
    match best {
        Some(&(_, action)) => action,
        None => brake_for(s, gap, lead_speed),
    }
}

fn top_lane(s: &HighwayState, p: &DriverParams) -> Action {
    let lane = s.agent.lane;
    if lane > 1 && lane_clear(s, lane - 1, p) {
        return Action::LaneUp;
    }
    if let Some((gap, lead_speed)) = obstacle(s, p) {
        return brake_for(s, gap, lead_speed);
    }
    if lane > 1 {
        // let the blocking car in the lane above go by, or pull ahead of it
        let blocker = s
            .cars_in(lane - 1)
            .map(|c| s.gap(c))
            .filter(|d| (-p.merge_behind - 8.0..=p.merge_ahead + 8.0).contains(d))
            .min_by(|a, b| a.abs().total_cmp(&b.abs()));
        if let Some(d) = blocker {
            return if d > -3.0 {
                if s.agent.speed > 12.0 {
                    Action::Decelerate
                } else {
                    Action::Idle
                }
            } else if s.agent.speed + 2.0 <= p.target_speed + 4.0 {
                Action::Accelerate
            } else {
                Action::Idle
            };
        }
    }
    cruise(s, p)
}

fn collide(s: &HighwayState, p: &DriverParams) -> Action {
    let lane = s.agent.lane;
    let target = s.cars.iter().min_by(|a, b| {
        let cost = |c: &BlueCar| s.gap(c).abs() + 4.0 * f64::from(c.lane.abs_diff(lane));
        cost(a).total_cmp(&cost(b))
    });
    match target {
        None => cruise(s, p),
        Some(c) if c.lane < lane => Action::LaneUp,
        Some(c) if c.lane > lane => Action::LaneDown,
        Some(c) if s.gap(c) > 0.0 => Action::Accelerate,
        Some(_) => Action::Decelerate,
    }
}

/// Two drivers joined by a latched trigger: `base` drives until the trigger
/// first holds, `fault` from that step on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultySpec {
    pub base: Driver,
    pub fault: Driver,
    /// Propositional formula over the vocabulary, in concrete syntax.
    pub trigger: String,
}

impl FaultySpec {
    pub fn new(base: Driver, fault: Driver, trigger: &Formula) -> Self {
        FaultySpec {
            base,
            fault,
            trigger: trigger.to_string(),
        }
    }

    pub fn plain_toplane() -> Self {
        FaultySpec::new(Driver::Plain, Driver::TopLane, &default_trigger())
    }

    pub fn plain_collision() -> Self {
        FaultySpec::new(Driver::Plain, Driver::Collision, &default_trigger())
    }
}

/// `lane-2 & car-above`: on lane 2 with a car alongside in lane 1.
pub fn default_trigger() -> Formula {
    Formula::and(Formula::atom("lane-2"), Formula::atom("car-above"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PolicyKind {
    Single { driver: Driver },
    Faulty(FaultySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
    #[serde(default)]
    pub params: DriverParams,
    #[serde(skip)]
    trigger: Option<Formula>,
}

impl Policy {
    pub fn single(driver: Driver) -> Self {
        Policy {
            kind: PolicyKind::Single { driver },
            params: DriverParams::default(),
            trigger: None,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            PolicyKind::Single { driver } => driver.name().to_string(),
            PolicyKind::Faulty(f) => format!("{}-{}", f.base.name(), f.fault.name()),
        }
    }

    /// Parses and checks the trigger of a faulty policy against `vocab`.
    pub fn resolve(mut self, vocab: &Vocabulary) -> Result<Self, HighwayError> {
        if let PolicyKind::Faulty(spec) = &self.kind {
            let f = Formula::parse(&spec.trigger).map_err(|e| HighwayError::InvalidConfig(format!("trigger: {e}")))?;
            if !f.is_propositional() {
                return Err(HighwayError::TemporalTrigger(spec.trigger.clone()));
            }
            if let Some(a) = f.atoms().into_iter().find(|a| vocab.index_of(a).is_none()) {
                return Err(HighwayError::UnknownTriggerAtom(a));
            }
            self.trigger = Some(f);
        }
        Ok(self)
    }

    fn controller(&self) -> Controller<'_> {
        Controller {
            policy: self,
            latched_at: None,
        }
    }
}

/// Composite policy with a per-episode latch.
pub fn make_faulty(spec: FaultySpec, vocab: &Vocabulary) -> Result<Policy, HighwayError> {
    Policy {
        kind: PolicyKind::Faulty(spec),
        params: DriverParams::default(),
        trigger: None,
    }
    .resolve(vocab)
}

struct Controller<'p> {
    policy: &'p Policy,
    latched_at: Option<usize>,
}

impl Controller<'_> {
    fn act(&mut self, s: &HighwayState, abs: AbstractState, vocab: &Vocabulary) -> Result<Action, HighwayError> {
        let p = &self.policy.params;
        match &self.policy.kind {
            PolicyKind::Single { driver } => Ok(driver.decide(s, p)),
            PolicyKind::Faulty(spec) => {
                if self.latched_at.is_none() {
                    let trigger = self
                        .policy
                        .trigger
                        .as_ref()
                        .ok_or_else(|| HighwayError::InvalidConfig("faulty policy was not resolved".into()))?;
                    if trigger
                        .holds_in(abs, vocab)
                        .map_err(|e| HighwayError::InvalidConfig(e.to_string()))?
                    {
                        self.latched_at = Some(s.step);
                    }
                }
                let driver = if self.latched_at.is_some() {
                    spec.fault
                } else {
                    spec.base
                };
                Ok(driver.decide(s, p))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Simulation

fn initial_state(cfg: &TrafficConfig, rng: &mut ChaCha8Rng) -> HighwayState {
    let lane = cfg.start_lane.unwrap_or_else(|| rng.random_range(1..=cfg.lanes));
    let mut s = HighwayState {
        step: 1,
        agent: Vehicle {
            lane,
            position: 0.0,
            speed: cfg.agent_speed,
        },
        cars: Vec::new(),
        road: cfg.road(),
        collision: false,
        last_action: None,
    };
    let mut attempts = 0;
    while s.cars.len() < cfg.initial_cars && attempts < cfg.initial_cars * 20 {
        attempts += 1;
        let lane = rng.random_range(1..=cfg.lanes);
        let pos = rng.random_range(-cfg.horizon_behind + CAR_LENGTH..cfg.horizon_ahead - CAR_LENGTH);
        let cruise = rng.random_range(cfg.car_speed_min..=cfg.car_speed_max);
        let near_agent = lane == s.agent.lane && pos.abs() < SPAWN_CLEARANCE;
        let near_car = s.cars.iter().any(|c| c.lane == lane && (c.position - pos).abs() < 15.0);
        if !near_agent && !near_car {
            s.cars.push(BlueCar {
                lane,
                position: pos,
                speed: cruise,
                cruise,
            });
        }
    }
    s
}

fn advance(s: &HighwayState, action: Action, cfg: &TrafficConfig, rng: &mut ChaCha8Rng) -> HighwayState {
    let mut agent = s.agent;
    match action {
        Action::Accelerate => agent.speed += cfg.accel_step,
        Action::Decelerate => agent.speed -= cfg.decel_step,
        Action::LaneUp if agent.lane > 1 => agent.lane -= 1,
        Action::LaneDown if agent.lane < cfg.lanes => agent.lane += 1,
        _ => {}
    }
    agent.speed = agent.speed.clamp(cfg.speed_min, cfg.speed_max);
    agent.position += agent.speed;

    // Move cars front to back within each lane so every car sees its
    // leader's new position.
    let mut order: Vec<usize> = (0..s.cars.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&s.cars[a], &s.cars[b]);
        x.lane.cmp(&y.lane).then(y.position.total_cmp(&x.position))
    });
    let mut moved: Vec<BlueCar> = Vec::with_capacity(s.cars.len());
    for i in order {
        let old = s.cars[i];
        let mut leader: Option<(f64, f64)> = moved
            .iter()
            .filter(|c| c.lane == old.lane)
            .map(|c| (c.position, c.speed))
            .next_back();
        // only an agent already ahead in this lane is seen; a cut-in is not
        if s.agent.lane == old.lane && agent.lane == old.lane && s.agent.position > old.position {
            let closer = leader.is_none_or(|(pos, _)| agent.position < pos);
            if closer {
                leader = Some((agent.position, agent.speed));
            }
        }
        let mut car = old;
        car.speed = match leader {
            Some((pos, speed)) if pos - old.position < 25.0 => car.cruise.min(speed),
            _ => (car.speed + 1.0).min(car.cruise),
        };
        car.position = old.position + car.speed;
        if let Some((pos, _)) = leader {
            car.position = car.position.min(pos - FOLLOW_GAP).max(old.position);
        }
        moved.push(car);
    }

    let collision = moved
        .iter()
        .any(|c| c.lane == agent.lane && (c.position - agent.position).abs() < CAR_LENGTH);
    moved.retain(|c| {
        let d = c.position - agent.position;
        let crashed = c.lane == agent.lane && d.abs() < CAR_LENGTH;
        !crashed && d >= -cfg.horizon_behind && d <= cfg.horizon_ahead
    });

    if rng.random_bool(cfg.spawn_probability) {
        let ahead = rng.random_bool(0.5);
        let lane = rng.random_range(1..=cfg.lanes);
        let cruise = rng.random_range(cfg.car_speed_min..=cfg.car_speed_max);
        let d = if ahead {
            cfg.horizon_ahead - 1.0
        } else {
            -cfg.horizon_behind + 1.0
        };
        let pos = agent.position + d;
        let clear = !moved
            .iter()
            .any(|c| c.lane == lane && (c.position - pos).abs() < SPAWN_CLEARANCE);
        if clear {
            moved.push(BlueCar {
                lane,
                position: pos,
                speed: cruise,
                cruise,
            });
        }
    }
    moved.sort_by(|a, b| a.lane.cmp(&b.lane).then(a.position.total_cmp(&b.position)));

    HighwayState {
        step: s.step + 1,
        agent,
        cars: moved,
        road: s.road,
        collision,
        last_action: Some(action),
    }
}

/// Runs one episode of `steps` states (episode id 0).
pub fn simulate(
    policy: &Policy,
    steps: usize,
    seed: u64,
    cfg: &TrafficConfig,
) -> Result<Episode<HighwayState>, HighwayError> {
    simulate_episode(
        0,
        policy,
        steps,
        seed,
        cfg,
        &HighwayAbstractor::new(cfg.lanes, PredicateParams::default()),
    )
}

pub fn simulate_episode(
    id: u64,
    policy: &Policy,
    steps: usize,
    seed: u64,
    cfg: &TrafficConfig,
    abstractor: &HighwayAbstractor,
) -> Result<Episode<HighwayState>, HighwayError> {
    cfg.validate()?;
    if steps == 0 {
        return Err(HighwayError::InvalidConfig("steps must be at least 1".into()));
    }
    if abstractor.lanes != cfg.lanes {
        return Err(HighwayError::InvalidConfig(
            "abstractor lane count differs from the road".into(),
        ));
    }
    let vocab = abstractor.vocabulary();
    let policy = if policy.trigger.is_none() {
        policy.clone().resolve(vocab)?
    } else {
        policy.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut controller = policy.controller();
    let mut state = initial_state(cfg, &mut rng);
    let mut states = Vec::with_capacity(steps);
    let mut trace = Vec::with_capacity(steps);
    loop {
        let abs = abstractor.abstract_state(&state)?;
        trace.push(abs);
        if states.len() + 1 == steps {
            states.push(state);
            break;
        }
        let action = controller.act(&state, abs, vocab)?;
        let next = advance(&state, action, cfg, &mut rng);
        states.push(state);
        state = next;
    }
    let meta = EpisodeMeta {
        policy: policy.name(),
        seed,
        trigger_step: controller.latched_at,
    };
    Ok(Episode::new(id, meta, states, trace)?)
}

/// Seed of episode `index` in a dataset generated from `seed` (splitmix64).
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate(
    policy: &Policy,
    episodes: usize,
    steps: usize,
    seed: u64,
    cfg: &TrafficConfig,
) -> Result<Dataset<HighwayState>, HighwayError> {
    let abstractor = HighwayAbstractor::new(cfg.lanes, PredicateParams::default());
    let policy = policy.clone().resolve(abstractor.vocabulary())?;
    let eps = (0..episodes as u64)
        .map(|i| simulate_episode(i, &policy, steps, episode_seed(seed, i), cfg, &abstractor))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::ingest(&abstractor, eps)?)
}

// ---------------------------------------------------------------------------
// Frames

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarColor {
    Green,
    Blue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCar {
    pub lane: u8,
    /// Longitudinal offset from the agent in meters.
    pub x: f64,
    pub length: f64,
    pub width: f64,
    pub color: CarColor,
    pub agent: bool,
}

/// Resolution-independent picture of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub schema: u32,
    pub step: usize,
    pub lanes: u8,
    pub lane_width: f64,
    pub view_behind: f64,
    pub view_ahead: f64,
    pub collision: bool,
    pub cars: Vec<FrameCar>,
}

pub fn render_frame(s: &HighwayState) -> Frame {
    let mut cars = vec![FrameCar {
        lane: s.agent.lane,
        x: 0.0,
        length: CAR_LENGTH,
        width: CAR_WIDTH,
        color: CarColor::Green,
        agent: true,
    }];
    cars.extend(s.cars.iter().map(|c| FrameCar {
        lane: c.lane,
        x: s.gap(c),
        length: CAR_LENGTH,
        width: CAR_WIDTH,
        color: CarColor::Blue,
        agent: false,
    }));
    Frame {
        schema: FRAME_SCHEMA,
        step: s.step,
        lanes: s.road.lanes,
        lane_width: LANE_WIDTH,
        view_behind: s.road.horizon_behind,
        view_ahead: s.road.horizon_ahead,
        collision: s.collision,
        cars,
    }
}

/// One text row per lane, one column per `meters_per_col` meters. The agent
/// is `A` (or `X` on a collision frame), blue cars are `o`.
pub fn render_ascii(frame: &Frame, meters_per_col: f64) -> String {
    let cols = ((frame.view_behind + frame.view_ahead) / meters_per_col) as usize + 1;
    let mut rows = vec![vec!['.'; cols]; usize::from(frame.lanes)];
    let col = |x: f64| ((x + frame.view_behind) / meters_per_col) as isize;
    for c in frame.cars.iter().filter(|c| !c.agent) {
        let i = col(c.x);
        if (1..=frame.lanes).contains(&c.lane) && (0..cols as isize).contains(&i) {
            rows[usize::from(c.lane) - 1][i as usize] = 'o';
        }
    }
    for c in frame.cars.iter().filter(|c| c.agent) {
        let i = col(c.x);
        if (1..=frame.lanes).contains(&c.lane) && (0..cols as isize).contains(&i) {
            rows[usize::from(c.lane) - 1][i as usize] = if frame.collision { 'X' } else { 'A' };
        }
    }
    let mut out = String::new();
    for r in rows {
        out.extend(r);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(lane: u8, cars: &[(u8, f64)]) -> HighwayState {
        HighwayState {
            step: 1,
            agent: Vehicle {
                lane,
                position: 100.0,
                speed: 22.0,
            },
            cars: cars
                .iter()
                .map(|&(lane, d)| BlueCar {
                    lane,
                    position: 100.0 + d,
                    speed: 22.0,
                    cruise: 22.0,
                })
                .collect(),
            road: TrafficConfig::default().road(),
            collision: false,
            last_action: None,
        }
    }

    fn names(s: &HighwayState) -> Vec<String> {
        let a = HighwayAbstractor::default();
        let abs = a.abstract_state(s).unwrap();
        a.vocabulary().names_of(abs).into_iter().map(String::from).collect()
    }

    #[test]
    fn abstraction_examples() {
        assert_eq!(names(&state(1, &[(1, 8.0)])), ["lane-1", "behind"]);
        assert_eq!(names(&state(3, &[])), ["lane-3"]);
        assert_eq!(names(&state(2, &[(1, 3.0)])), ["lane-2", "car-above"]);
        assert_eq!(names(&state(2, &[(2, 6.0)])), ["lane-2", "behind"]);
        assert_eq!(names(&state(2, &[(2, 10.5), (3, -5.5)])), ["lane-2"]);
        assert_eq!(
            names(&state(4, &[(4, -4.0), (3, 5.0)])),
            ["lane-4", "in-front-of", "car-above"]
        );
        assert_eq!(names(&state(1, &[(2, -1.0)])), ["lane-1", "car-below"]);
        let mut crashed = state(1, &[]);
        crashed.collision = true;
        assert_eq!(names(&crashed), ["lane-1", "collision"]);
    }

    #[test]
    fn malformed_state_names_the_predicate() {
        let err = HighwayAbstractor::default().abstract_state(&state(7, &[])).unwrap_err();
        assert_eq!(err.predicate, "lane-7");
    }

    #[test]
    fn vocabulary_groups() {
        let v = vocabulary();
        assert_eq!(v.members("lanes").count(), 4);
        assert!(v.group("lanes").unwrap().exclusive);
        let rel: Vec<_> = v.members("relations").map(|p| p.name.as_str()).collect();
        assert_eq!(rel, ["behind", "in-front-of", "car-above", "car-below"]);
        assert_eq!(v.predicate("behind").unwrap().param("window"), Some(10.0));
    }

    #[test]
    fn collision_is_detected_and_flagged() {
        let cfg = TrafficConfig {
            spawn_probability: 0.0,
            ..TrafficConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // car 4 m below-left, agent moves down into it
        let s = state(1, &[(2, 2.0)]);
        let next = advance(&s, Action::LaneDown, &cfg, &mut rng);
        assert!(next.collision);
        assert_eq!(next.agent.lane, 2);
        assert!(render_ascii(&render_frame(&next), 4.0).contains('X'));
    }

    #[test]
    fn lane_changes_clamp_at_the_edges() {
        let cfg = TrafficConfig {
            spawn_probability: 0.0,
            ..TrafficConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(advance(&state(1, &[]), Action::LaneUp, &cfg, &mut rng).agent.lane, 1);
        assert_eq!(advance(&state(4, &[]), Action::LaneDown, &cfg, &mut rng).agent.lane, 4);
    }

    #[test]
    fn frames() {
        let f = render_frame(&state(2, &[]));
        assert_eq!(f.cars.len(), 1);
        assert_eq!(f.cars[0].color, CarColor::Green);
        let art = render_ascii(&f, 4.0);
        assert_eq!(art.lines().count(), 4);
        assert_eq!(art.matches('A').count(), 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let p = Policy::single(Driver::Plain);
        let cfg = TrafficConfig {
            lanes: 1,
            ..TrafficConfig::default()
        };
        assert!(matches!(simulate(&p, 10, 0, &cfg), Err(HighwayError::InvalidConfig(_))));
        assert!(matches!(
            simulate(&p, 0, 0, &TrafficConfig::default()),
            Err(HighwayError::InvalidConfig(_))
        ));
    }

    #[test]
    fn faulty_trigger_is_checked() {
        let v = vocabulary();
        let bad = FaultySpec::new(Driver::Plain, Driver::TopLane, &Formula::atom("lane-9"));
        assert_eq!(
            make_faulty(bad, &v),
            Err(HighwayError::UnknownTriggerAtom("lane-9".into()))
        );
        let temporal = FaultySpec::new(Driver::Plain, Driver::TopLane, &Formula::parse("F lane-1").unwrap());
        assert!(matches!(
            make_faulty(temporal, &v),
            Err(HighwayError::TemporalTrigger(_))
        ));
        assert_eq!(
            make_faulty(FaultySpec::plain_toplane(), &v).unwrap().name(),
            "plain-toplane"
        );
    }
}
