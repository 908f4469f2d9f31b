//! Grid Traffic Control: a 3x3 grid of intersections joined by three
//! eastbound and three southbound one-way roads. The planner controls the
//! light of the central intersection; the other eight lights switch on a
//! fixed schedule.
//!
//! Each road is `entry, 3 x (segment_len approach cells + intersection), exit`.
//! Intersection cells are shared between the two crossing roads and carry a
//! heading bit so a car leaves along the road it entered from.
//!
//! One step: lights update, cars advance from road end to road start (a car
//! moves iff its next cell is free after that cell's own move; the approach
//! cell before an intersection also needs green), cars in exit cells leave,
//! and empty entry cells spawn cars.
//!
//! State layout:
//! `[road cells (6 x (len - 3)), intersection occupancy (9), heading (9), lights (9), step]`.
//! Local state: `[W, C, C heading, E, N, S, central light]` around the centre.
//! Sources: `[W upstream occupied, N upstream occupied, E downstream free, S downstream free]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ActionId, Domain, FactoredState, GlobalStep, LocalState, LocalStep, SimRng, SourceValue,
};

pub const KEEP: ActionId = 0;
pub const SWITCH: ActionId = 1;

const EAST: u16 = 0;
const SOUTH: u16 = 1;
const CENTRE: usize = 4;
const CENTRE_ROW: usize = 1;

// local layout
const L_W: usize = 0;
const L_C: usize = 1;
const L_HEAD: usize = 2;
const L_E: usize = 3;
const L_N: usize = 4;
const L_S: usize = 5;
const L_LIGHT: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GtcConfig {
    pub entry_prob: f64,
    pub exit_prob: f64,
    pub init_prob: f64,
    pub horizon: usize,
    pub fixed_switch_period: usize,
    pub segment_len: usize,
}

impl Default for GtcConfig {
    fn default() -> Self {
        GtcConfig {
            entry_prob: 0.7,
            exit_prob: 0.3,
            init_prob: 0.7,
            horizon: 50,
            fixed_switch_period: 9,
            segment_len: 2,
        }
    }
}

impl GtcConfig {
    pub fn small() -> Self {
        GtcConfig {
            horizon: 20,
            ..GtcConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("entry_prob", self.entry_prob),
            ("exit_prob", self.exit_prob),
            ("init_prob", self.init_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("gtc: {name} must lie in [0, 1]")));
            }
        }
        if self.horizon == 0 || self.horizon >= u16::MAX as usize {
            return Err(Error::Config("gtc: horizon out of range".into()));
        }
        if self.fixed_switch_period == 0 {
            return Err(Error::Config("gtc: fixed_switch_period must be positive".into()));
        }
        if self.segment_len < 2 {
            return Err(Error::Config("gtc: segment_len must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cell {
    /// Index into the state vector.
    Road(usize),
    /// Intersection 0..9, row-major.
    Junction(usize),
}

#[derive(Clone, Debug)]
pub struct GridTraffic {
    cfg: GtcConfig,
    road_len: usize,
    slots_per_road: usize,
    occ_base: usize,
    head_base: usize,
    light_base: usize,
    step_idx: usize,
    local_cards: [usize; 7],
    source_cards: [usize; 4],
}

/// Working copy of the traffic layer used while resolving one step.
struct Movement<'a> {
    grid: &'a GridTraffic,
    s: &'a [u16],
    lights: [u16; 9],
    // 0 unknown, 1 stays, 2 leaves
    memo: Vec<u8>,
}

impl<'a> Movement<'a> {
    fn new(grid: &'a GridTraffic, s: &'a [u16], lights: [u16; 9]) -> Self {
        Movement {
            grid,
            s,
            lights,
            memo: vec![0; grid.num_cells()],
        }
    }

    fn occupied(&self, c: Cell) -> bool {
        match c {
            Cell::Road(i) => self.s[i] == 1,
            Cell::Junction(k) => self.s[self.grid.occ_base + k] == 1,
        }
    }

    fn free_after(&mut self, c: Cell) -> bool {
        !self.occupied(c) || self.leaves(c)
    }

    fn leaves(&mut self, c: Cell) -> bool {
        if !self.occupied(c) {
            return false;
        }
        let id = self.grid.cell_id(c);
        match self.memo[id] {
            1 => return false,
            2 => return true,
            _ => {}
        }
        let g = self.grid;
        let result = match c {
            Cell::Road(i) => {
                let (road, pos) = g.road_pos_of(i);
                if pos + 1 == g.road_len {
                    false
                } else {
                    match g.cell_at(road, pos + 1) {
                        Cell::Junction(k) => {
                            let dir = if road < 3 { EAST } else { SOUTH };
                            self.lights[k] == dir && self.free_after(Cell::Junction(k))
                        }
                        next => self.free_after(next),
                    }
                }
            }
            Cell::Junction(k) => {
                let heading = self.s[g.head_base + k];
                let (road, pos) = g.junction_on_road(k, heading);
                self.free_after(g.cell_at(road, pos + 1))
            }
        };
        self.memo[id] = if result { 2 } else { 1 };
        result
    }
}

impl GridTraffic {
    pub fn new(cfg: GtcConfig) -> Result<Self> {
        cfg.validate()?;
        let road_len = 3 * (cfg.segment_len + 1) + 2;
        let slots_per_road = road_len - 3;
        let occ_base = 6 * slots_per_road;
        Ok(GridTraffic {
            cfg,
            road_len,
            slots_per_road,
            occ_base,
            head_base: occ_base + 9,
            light_base: occ_base + 18,
            step_idx: occ_base + 27,
            local_cards: [2; 7],
            source_cards: [2; 4],
        })
    }

    pub fn config(&self) -> &GtcConfig {
        &self.cfg
    }

    pub fn road_len(&self) -> usize {
        self.road_len
    }

    fn num_cells(&self) -> usize {
        self.occ_base + 9
    }

    fn cell_id(&self, c: Cell) -> usize {
        match c {
            Cell::Road(i) => i,
            Cell::Junction(k) => self.occ_base + k,
        }
    }

    fn period(&self) -> usize {
        self.cfg.segment_len + 1
    }

    /// Roads 0..3 are eastbound rows, 3..6 southbound columns.
    fn cell_at(&self, road: usize, pos: usize) -> Cell {
        let p = self.period();
        if pos > 0 && pos % p == 0 && pos / p <= 3 {
            let along = pos / p - 1;
            let k = if road < 3 {
                road * 3 + along
            } else {
                along * 3 + (road - 3)
            };
            Cell::Junction(k)
        } else {
            let slot = pos - (pos / p).min(3);
            Cell::Road(road * self.slots_per_road + slot)
        }
    }

    fn road_pos_of(&self, index: usize) -> (usize, usize) {
        let road = index / self.slots_per_road;
        let slot = index % self.slots_per_road;
        // invert slot -> pos by skipping junction positions
        let p = self.period();
        let mut pos = slot;
        while pos - (pos / p).min(3) != slot || (pos > 0 && pos % p == 0 && pos / p <= 3) {
            pos += 1;
        }
        (road, pos)
    }

    fn junction_on_road(&self, k: usize, heading: u16) -> (usize, usize) {
        let (row, col) = (k / 3, k % 3);
        let p = self.period();
        if heading == EAST {
            (row, (col + 1) * p)
        } else {
            (3 + col, (row + 1) * p)
        }
    }

    fn centre_pos(&self) -> usize {
        2 * self.period()
    }

    fn lights_after(&self, s: &[u16], a: ActionId) -> [u16; 9] {
        let mut lights = [0u16; 9];
        lights.copy_from_slice(&s[self.light_base..self.light_base + 9]);
        let step = s[self.step_idx] as usize;
        let scheduled = step % self.cfg.fixed_switch_period == 0;
        for (k, light) in lights.iter_mut().enumerate() {
            let toggle = if k == CENTRE { a == SWITCH } else { scheduled };
            if toggle {
                *light ^= 1;
            }
        }
        lights
    }

    fn occ(&self, s: &[u16], c: Cell) -> u16 {
        match c {
            Cell::Road(i) => s[i],
            Cell::Junction(k) => s[self.occ_base + k],
        }
    }

    /// Source value for the transition out of `s`, computed from the
    /// deterministic movement phase.
    fn source_from(&self, s: &[u16], mv: &mut Movement<'_>) -> SourceValue {
        let c = self.centre_pos();
        let east = CENTRE_ROW;
        let south = 3 + 1;
        let up_w = self.occ(s, self.cell_at(east, c - 2));
        let up_n = self.occ(s, self.cell_at(south, c - 2));
        let down_e = mv.free_after(self.cell_at(east, c + 2)) as u16;
        let down_s = mv.free_after(self.cell_at(south, c + 2)) as u16;
        SourceValue::from_slice(&[up_w, up_n, down_e, down_s])
    }

    fn observation_of(local: &[u16]) -> usize {
        (local[L_W] | (local[L_E] << 1) | (local[L_N] << 2) | (local[L_S] << 3)) as usize
    }

    fn reward_of(local: &[u16]) -> f64 {
        -((local[L_W] + local[L_E] + local[L_N] + local[L_S] + local[L_C]) as f64)
    }

    pub fn car_count(&self, s: &FactoredState) -> usize {
        s.0[..self.occ_base + 9].iter().map(|&v| v as usize).sum()
    }
}

impl Domain for GridTraffic {
    fn name(&self) -> &str {
        "gtc"
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn num_observations(&self) -> usize {
        16
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn state_cardinalities(&self) -> Vec<usize> {
        let mut cards = vec![2; self.step_idx];
        cards.push(self.cfg.horizon + 1);
        cards
    }

    fn local_cardinalities(&self) -> &[usize] {
        &self.local_cards
    }

    fn source_cardinalities(&self) -> &[usize] {
        &self.source_cards
    }

    fn sample_initial(&self, rng: &mut SimRng) -> FactoredState {
        let mut s = vec![0u16; self.step_idx + 1];
        for v in s[..self.occ_base].iter_mut() {
            *v = rng.random_bool(self.cfg.init_prob) as u16;
        }
        for k in 0..9 {
            if rng.random_bool(self.cfg.init_prob) {
                s[self.occ_base + k] = 1;
                s[self.head_base + k] = rng.random_bool(0.5) as u16;
            }
        }
        FactoredState(s)
    }

    fn project_local(&self, s: &FactoredState) -> LocalState {
        let c = self.centre_pos();
        let east = CENTRE_ROW;
        let south = 4;
        let v = &s.0;
        let mut local = [0u16; 7];
        local[L_W] = self.occ(v, self.cell_at(east, c - 1));
        local[L_C] = v[self.occ_base + CENTRE];
        local[L_HEAD] = v[self.head_base + CENTRE];
        local[L_E] = self.occ(v, self.cell_at(east, c + 1));
        local[L_N] = self.occ(v, self.cell_at(south, c - 1));
        local[L_S] = self.occ(v, self.cell_at(south, c + 1));
        local[L_LIGHT] = v[self.light_base + CENTRE];
        LocalState::from_slice(&local)
    }

    fn sample_source(&self, s: &FactoredState, a: ActionId, _rng: &mut SimRng) -> SourceValue {
        let lights = self.lights_after(&s.0, a);
        let mut mv = Movement::new(self, &s.0, lights);
        self.source_from(&s.0, &mut mv)
    }

    fn step_local(
        &self,
        local: &LocalState,
        source: &SourceValue,
        a: ActionId,
        _rng: &mut SimRng,
    ) -> LocalStep {
        let l = local.values();
        let src = source.values();
        let (up_w, up_n, down_e, down_s) = (src[0] == 1, src[1] == 1, src[2] == 1, src[3] == 1);
        let light = l[L_LIGHT] ^ (a == SWITCH) as u16;
        let (w, c, e, n, s) = (l[L_W] == 1, l[L_C] == 1, l[L_E] == 1, l[L_N] == 1, l[L_S] == 1);
        let heading = l[L_HEAD];

        let e_leaves = e && down_e;
        let s_leaves = s && down_s;
        let e_free = !e || e_leaves;
        let s_free = !s || s_leaves;
        let c_leaves = c && if heading == EAST { e_free } else { s_free };
        let c_free = !c || c_leaves;
        let w_leaves = w && light == EAST && c_free;
        let n_leaves = n && light == SOUTH && c_free;
        let w_free = !w || w_leaves;
        let n_free = !n || n_leaves;

        let mut next = [0u16; 7];
        next[L_E] = ((e && !e_leaves) || (c_leaves && heading == EAST)) as u16;
        next[L_S] = ((s && !s_leaves) || (c_leaves && heading == SOUTH)) as u16;
        let c_stays = c && !c_leaves;
        next[L_C] = (c_stays || w_leaves || n_leaves) as u16;
        next[L_HEAD] = if w_leaves {
            EAST
        } else if n_leaves {
            SOUTH
        } else if c_stays {
            heading
        } else {
            0
        };
        next[L_W] = ((w && !w_leaves) || (up_w && w_free)) as u16;
        next[L_N] = ((n && !n_leaves) || (up_n && n_free)) as u16;
        next[L_LIGHT] = light;

        LocalStep {
            observation: Self::observation_of(&next),
            reward: Self::reward_of(&next),
            next: LocalState::from_slice(&next),
        }
    }

    fn step_global(&self, s: &FactoredState, a: ActionId, rng: &mut SimRng) -> GlobalStep {
        let v = &s.0;
        let lights = self.lights_after(v, a);
        let mut mv = Movement::new(self, v, lights);
        let source = self.source_from(v, &mut mv);

        let mut next = v.clone();
        next[self.light_base..self.light_base + 9].copy_from_slice(&lights);

        // Movement: clear leaving cells, then fill their targets.
        let mut moves: Vec<(Cell, Cell, u16)> = Vec::new();
        for road in 0..6 {
            for pos in 0..self.road_len {
                let c = self.cell_at(road, pos);
                if let Cell::Junction(k) = c {
                    // visit each junction once, from its eastbound road
                    if road >= 3 {
                        continue;
                    }
                    if mv.leaves(c) {
                        let heading = v[self.head_base + k];
                        let (r2, p2) = self.junction_on_road(k, heading);
                        moves.push((c, self.cell_at(r2, p2 + 1), heading));
                    }
                } else if mv.leaves(c) {
                    let dir = if road < 3 { EAST } else { SOUTH };
                    moves.push((c, self.cell_at(road, pos + 1), dir));
                }
            }
        }
        for &(from, _, _) in &moves {
            match from {
                Cell::Road(i) => next[i] = 0,
                Cell::Junction(k) => {
                    next[self.occ_base + k] = 0;
                    next[self.head_base + k] = 0;
                }
            }
        }
        for &(_, to, dir) in &moves {
            match to {
                Cell::Road(i) => next[i] = 1,
                Cell::Junction(k) => {
                    next[self.occ_base + k] = 1;
                    next[self.head_base + k] = dir;
                }
            }
        }

        // Exits, then entries, in road order.
        for road in 0..6 {
            if let Cell::Road(i) = self.cell_at(road, self.road_len - 1) {
                if next[i] == 1 && rng.random_bool(self.cfg.exit_prob) {
                    next[i] = 0;
                }
            }
        }
        for road in 0..6 {
            if let Cell::Road(i) = self.cell_at(road, 0) {
                if next[i] == 0 && rng.random_bool(self.cfg.entry_prob) {
                    next[i] = 1;
                }
            }
        }
        next[self.step_idx] += 1;

        let next = FactoredState(next);
        let local = self.project_local(&next);
        GlobalStep {
            observation: Self::observation_of(local.values()),
            reward: Self::reward_of(local.values()),
            next,
            source,
        }
    }

    fn source_entropy(&self, _s: &FactoredState, _a: ActionId) -> f64 {
        // every source bit is a deterministic function of (s, a)
        0.0
    }
}
