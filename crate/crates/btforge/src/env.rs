//! Deterministic grid-platformer simulator: ASCII levels, gravity, walking
//! and flying enemies, projectiles, the Small/Big/Fire agent state machine,
//! the 5x5 receptive field, and the episode fitness function.
//!
//! Rows are indexed from the top; the agent's position is its lower block.
//! Everything is a value: `step` consumes nothing and returns a new state,
//! and the same (tree, level) pair always produces the same trace.

use crate::bt::{
    ActionId, BehaviorTree, Blackboard, ConditionId, ConditionValues, Predicate, StructuralError,
};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Solid,
    Finish,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnemyKind {
    Walker,
    Flyer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnemySpawn {
    pub kind: EnemyKind,
    pub row: i32,
    pub col: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Form {
    Small,
    Big,
    Fire,
}

/// A parsed level: grid, spawn, finish column, tick budget, enemy spawns.
#[derive(Debug, Clone)]
pub struct Level {
    grid: Vec<Vec<Cell>>,
    rows: i32,
    cols: i32,
    start_row: i32,
    start_col: i32,
    finish_col: i32,
    tick_limit: u32,
    enemy_spawns: Vec<EnemySpawn>,
    starting_form: Form,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LevelError {
    #[error("row {row}, col {col}: unknown glyph {glyph:?}")]
    UnknownGlyph { row: usize, col: usize, glyph: char },
    #[error("missing 'ticks=<N>' header line")]
    MissingHeader,
    #[error("bad header line {0:?}")]
    BadHeader(String),
    #[error("level has no grid rows")]
    EmptyGrid,
    #[error("level has no agent spawn 'M'")]
    MissingStart,
    #[error("level has more than one agent spawn")]
    MultipleStarts,
    #[error("level has no finish marker 'F'")]
    MissingFinish,
    #[error("finish markers span more than one column")]
    MultipleFinishColumns,
    #[error("finish column equals the start column")]
    FinishAtStart,
    #[error("agent spawn has no solid ground anywhere below it")]
    SpawnOverHole,
    #[error("tick limit {limit} is below the column count {cols}")]
    TickLimitTooSmall { limit: u32, cols: usize },
}

impl Level {
    /// Parse the ASCII format: one or more `key=value` header lines
    /// (`ticks=<N>` is required, `form=small|big|fire` optional), then the
    /// grid, top row first. Glyphs: `.` empty, `#` solid, `M` agent spawn,
    /// `F` finish column, `e` walker, `w` flyer.
    pub fn parse(text: &str) -> Result<Level, LevelError> {
        let mut tick_limit: Option<u32> = None;
        let mut starting_form = Form::Fire;
        let mut grid: Vec<Vec<Cell>> = Vec::new();
        let mut start: Option<(i32, i32)> = None;
        let mut finish_col: Option<i32> = None;
        let mut enemy_spawns = Vec::new();
        let mut width = 0usize;

        let mut grid_row = 0usize;
        for line in text.lines() {
            if grid.is_empty() && line.contains('=') {
                let (key, value) = line.split_once('=').expect("checked above");
                match key.trim() {
                    "ticks" => {
                        tick_limit = Some(
                            value
                                .trim()
                                .parse()
                                .map_err(|_| LevelError::BadHeader(line.to_string()))?,
                        );
                    }
                    "form" => {
                        starting_form = match value.trim() {
                            "small" => Form::Small,
                            "big" => Form::Big,
                            "fire" => Form::Fire,
                            _ => return Err(LevelError::BadHeader(line.to_string())),
                        };
                    }
                    _ => return Err(LevelError::BadHeader(line.to_string())),
                }
                continue;
            }
            if line.trim().is_empty() && grid.is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(line.len());
            for (col, glyph) in line.chars().enumerate() {
                let cell = match glyph {
                    '.' | ' ' => Cell::Empty,
                    '#' => Cell::Solid,
                    'F' => {
                        match finish_col {
                            None => finish_col = Some(col as i32),
                            Some(existing) if existing != col as i32 => {
                                return Err(LevelError::MultipleFinishColumns)
                            }
                            Some(_) => {}
                        }
                        Cell::Finish
                    }
                    'M' => {
                        if start.is_some() {
                            return Err(LevelError::MultipleStarts);
                        }
                        start = Some((grid_row as i32, col as i32));
                        Cell::Empty
                    }
                    'e' => {
                        enemy_spawns.push(EnemySpawn {
                            kind: EnemyKind::Walker,
                            row: grid_row as i32,
                            col: col as i32,
                        });
                        Cell::Empty
                    }
                    'w' => {
                        enemy_spawns.push(EnemySpawn {
                            kind: EnemyKind::Flyer,
                            row: grid_row as i32,
                            col: col as i32,
                        });
                        Cell::Empty
                    }
                    other => {
                        return Err(LevelError::UnknownGlyph {
                            row: grid_row,
                            col,
                            glyph: other,
                        })
                    }
                };
                row.push(cell);
            }
            width = width.max(row.len());
            grid.push(row);
            grid_row += 1;
        }

        if grid.is_empty() {
            return Err(LevelError::EmptyGrid);
        }
        for row in grid.iter_mut() {
            row.resize(width, Cell::Empty);
        }
        let tick_limit = tick_limit.ok_or(LevelError::MissingHeader)?;
        let (start_row, start_col) = start.ok_or(LevelError::MissingStart)?;
        let finish_col = finish_col.ok_or(LevelError::MissingFinish)?;
        if finish_col == start_col {
            return Err(LevelError::FinishAtStart);
        }
        if tick_limit < width as u32 {
            return Err(LevelError::TickLimitTooSmall {
                limit: tick_limit,
                cols: width,
            });
        }
        let level = Level {
            rows: grid.len() as i32,
            cols: width as i32,
            grid,
            start_row,
            start_col,
            finish_col,
            tick_limit,
            enemy_spawns,
            starting_form,
        };
        if !(level.start_row + 1..level.rows).any(|r| level.is_solid(r, level.start_col)) {
            return Err(LevelError::SpawnOverHole);
        }
        Ok(level)
    }

    pub fn rows(&self) -> i32 {
        self.rows
    }

    pub fn cols(&self) -> i32 {
        self.cols
    }

    pub fn start_col(&self) -> i32 {
        self.start_col
    }

    pub fn finish_col(&self) -> i32 {
        self.finish_col
    }

    pub fn tick_limit(&self) -> u32 {
        self.tick_limit
    }

    pub fn cell(&self, row: i32, col: i32) -> Cell {
        if row < 0 || col < 0 || row >= self.rows || col >= self.cols {
            Cell::Empty
        } else {
            self.grid[row as usize][col as usize]
        }
    }

    pub fn is_solid(&self, row: i32, col: i32) -> bool {
        self.cell(row, col) == Cell::Solid
    }

    /// Obstacle semantics of the receptive field: solid cells, plus anything
    /// past the bottom, left, or right edge. Above the grid is open sky.
    pub fn is_obstacle(&self, row: i32, col: i32) -> bool {
        if row < 0 {
            false
        } else if row >= self.rows || col < 0 || col >= self.cols {
            true
        } else {
            self.grid[row as usize][col as usize] == Cell::Solid
        }
    }
}

/// Convenience for tests and the CLI.
pub fn load_level(text: &str) -> Result<Arc<Level>, LevelError> {
    Level::parse(text).map(Arc::new)
}

// ---- state -------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentState {
    pub row: i32,
    pub col: i32,
    pub form: Form,
    pub vertical_velocity: i32,
    pub grounded: bool,
    pub crouching: bool,
    pub facing_right: bool,
    pub hurt_count: u32,
    pub alive: bool,
}

impl AgentState {
    /// Occupied height in cells: Big and Fire span two blocks unless crouching.
    pub fn height(&self) -> i32 {
        match self.form {
            Form::Small => 1,
            Form::Big | Form::Fire => {
                if self.crouching {
                    1
                } else {
                    2
                }
            }
        }
    }

    fn occupies(&self, row: i32, col: i32) -> bool {
        col == self.col && row <= self.row && row > self.row - self.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Enemy {
    pub id: usize,
    pub kind: EnemyKind,
    pub row: i32,
    pub col: i32,
    pub alive: bool,
    pub phase: u32,
    base_row: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Projectile {
    pub row: i32,
    pub col: i32,
    pub dir: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    None,
    ReachedFinish,
    Died,
    TimedOut,
}

impl Terminal {
    pub fn name(self) -> &'static str {
        match self {
            Terminal::None => "running",
            Terminal::ReachedFinish => "reached-finish",
            Terminal::Died => "died",
            Terminal::TimedOut => "timed-out",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnvState {
    pub level: Arc<Level>,
    pub agent: AgentState,
    pub enemies: Vec<Enemy>,
    pub projectiles: Vec<Projectile>,
    pub tick: u32,
    pub kills: u32,
    pub terminal: Terminal,
    /// Outcome of the action executed last tick: (action, actuated).
    pub last_action: Option<(ActionId, bool)>,
    max_progress: f64,
    initial_enemy_count: usize,
    despawned_by_contact: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot step a terminal state ({0})")]
pub struct TerminalStateError(&'static str);

impl EnvState {
    pub fn new(level: Arc<Level>) -> EnvState {
        let enemies = level
            .enemy_spawns
            .iter()
            .enumerate()
            .map(|(id, s)| Enemy {
                id,
                kind: s.kind,
                row: s.row,
                col: s.col,
                alive: true,
                phase: 0,
                base_row: s.row,
            })
            .collect::<Vec<_>>();
        let agent = AgentState {
            row: level.start_row,
            col: level.start_col,
            form: level.starting_form,
            vertical_velocity: 0,
            grounded: level.is_solid(level.start_row + 1, level.start_col),
            crouching: false,
            facing_right: level.finish_col > level.start_col,
            hurt_count: 0,
            alive: true,
        };
        EnvState {
            initial_enemy_count: enemies.len(),
            level,
            agent,
            enemies,
            projectiles: Vec::new(),
            tick: 0,
            kills: 0,
            terminal: Terminal::None,
            last_action: None,
            max_progress: 0.0,
            despawned_by_contact: 0,
        }
    }

    pub fn initial_enemy_count(&self) -> usize {
        self.initial_enemy_count
    }

    pub fn despawned_by_contact(&self) -> u32 {
        self.despawned_by_contact
    }

    /// Fraction of the start-to-finish distance covered, as a running
    /// maximum; reaching the finish column pins it at 1.
    pub fn max_progress(&self) -> f64 {
        self.max_progress
    }

    fn signed_progress(&self) -> f64 {
        (self.agent.col - self.level.start_col) as f64
            / (self.level.finish_col - self.level.start_col) as f64
    }

    fn horizontal_blocked(&self, new_col: i32) -> bool {
        if new_col < 0 || new_col >= self.level.cols {
            return true;
        }
        let h = self.agent.height();
        (0..h).any(|d| self.level.is_solid(self.agent.row - d, new_col))
    }

    /// One deterministic tick. `action` is the first action the ticked tree
    /// requested, or `None` for an idle tick.
    pub fn step(&self, action: Option<ActionId>) -> Result<EnvState, TerminalStateError> {
        if self.terminal != Terminal::None {
            return Err(TerminalStateError(self.terminal.name()));
        }
        let mut next = self.clone();
        let prev_row = next.agent.row;

        // (1) action
        next.agent.crouching = false;
        next.last_action = None;
        if let Some(action) = action {
            let actuated = match action {
                ActionId::WalkRight | ActionId::WalkLeft => {
                    let dir = if action == ActionId::WalkRight { 1 } else { -1 };
                    next.agent.facing_right = dir > 0;
                    if next.horizontal_blocked(next.agent.col + dir) {
                        false
                    } else {
                        next.agent.col += dir;
                        true
                    }
                }
                ActionId::Jump => {
                    if next.agent.grounded {
                        next.agent.vertical_velocity = 2;
                        next.agent.grounded = false;
                        true
                    } else {
                        false
                    }
                }
                ActionId::Crouch => {
                    next.agent.crouching = true;
                    true
                }
                ActionId::Shoot => {
                    if next.agent.form == Form::Fire && next.projectiles.len() < 2 {
                        let dir = if next.agent.facing_right { 1 } else { -1 };
                        next.projectiles.push(Projectile {
                            row: next.agent.row,
                            col: next.agent.col + dir,
                            dir,
                        });
                        true
                    } else {
                        false
                    }
                }
            };
            next.last_action = Some((action, actuated));
        }

        // (2) vertical physics: move by the current velocity one cell at a
        // time, stopping on solid cells, then decay toward terminal fall speed
        let v = next.agent.vertical_velocity;
        if v > 0 {
            for _ in 0..v {
                let entering = next.agent.row - next.agent.height();
                if next.level.is_solid(entering, next.agent.col) {
                    next.agent.vertical_velocity = 0;
                    break;
                }
                next.agent.row -= 1;
            }
        } else if v < 0 {
            for _ in 0..-v {
                if next.level.is_solid(next.agent.row + 1, next.agent.col) {
                    break;
                }
                next.agent.row += 1;
            }
        }
        next.agent.grounded = next.level.is_solid(next.agent.row + 1, next.agent.col)
            && next.agent.row < next.level.rows;
        next.agent.vertical_velocity = if next.agent.grounded {
            0
        } else {
            (next.agent.vertical_velocity - 1).max(-1)
        };

        // (3) projectiles: two one-cell sub-steps, consumed on solid or kill
        let mut surviving = Vec::with_capacity(next.projectiles.len());
        'projectiles: for mut p in next.projectiles.drain(..) {
            for advance in [false, true, true] {
                if advance {
                    p.col += p.dir;
                }
                if p.col < 0 || p.col >= next.level.cols || next.level.is_solid(p.row, p.col) {
                    continue 'projectiles;
                }
                if let Some(enemy) = next
                    .enemies
                    .iter_mut()
                    .find(|e| e.alive && e.row == p.row && e.col == p.col)
                {
                    enemy.alive = false;
                    next.kills += 1;
                    continue 'projectiles;
                }
            }
            surviving.push(p);
        }
        next.projectiles = surviving;

        // (4) enemies
        let agent_col = next.agent.col;
        for enemy in next.enemies.iter_mut() {
            if !enemy.alive {
                continue;
            }
            enemy.phase += 1;
            match enemy.kind {
                EnemyKind::Walker => {
                    let supported = next.level.is_solid(enemy.row + 1, enemy.col);
                    if supported && enemy.phase % 2 == 0 {
                        let dir = (agent_col - enemy.col).signum();
                        if dir != 0 {
                            if !next.level.is_solid(enemy.row, enemy.col + dir) {
                                enemy.col += dir;
                            } else if !next.level.is_solid(enemy.row, enemy.col - dir) {
                                enemy.col -= dir; // turn at walls
                            }
                        }
                    }
                    if !next.level.is_solid(enemy.row + 1, enemy.col) {
                        enemy.row += 1; // falls into holes, and keeps falling
                    }
                }
                EnemyKind::Flyer => {
                    // triangle wave, amplitude 2 cells, period 8 ticks
                    const WAVE: [i32; 8] = [0, 1, 2, 1, 0, -1, -2, -1];
                    enemy.row = enemy.base_row + WAVE[(enemy.phase % 8) as usize];
                    if enemy.phase % 3 == 0 {
                        enemy.col += (agent_col - enemy.col).signum();
                    }
                }
            }
        }

        // (5) contacts
        for i in 0..next.enemies.len() {
            let (erow, ecol, alive) = {
                let e = &next.enemies[i];
                (e.row, e.col, e.alive)
            };
            if !alive || !next.agent.alive || !next.agent.occupies(erow, ecol) {
                continue;
            }
            let stomp = prev_row < erow && next.agent.row == erow && next.agent.col == ecol;
            if stomp {
                next.enemies[i].alive = false;
                next.kills += 1;
            } else {
                next.enemies[i].alive = false;
                next.despawned_by_contact += 1;
                next.agent.hurt_count += 1;
                next.agent.form = match next.agent.form {
                    Form::Fire => Form::Big,
                    Form::Big => Form::Small,
                    Form::Small => {
                        next.agent.alive = false;
                        Form::Small
                    }
                };
            }
        }

        // (6) falling out of the level
        if next.agent.row >= next.level.rows {
            next.agent.alive = false;
        }

        // (7) bookkeeping and terminal causes
        next.tick += 1;
        next.max_progress = next.max_progress.max(next.signed_progress().max(0.0));
        if !next.agent.alive {
            next.terminal = Terminal::Died;
        } else if next.max_progress >= 1.0 {
            next.terminal = Terminal::ReachedFinish;
        } else if next.tick >= next.level.tick_limit {
            next.terminal = Terminal::TimedOut;
        }
        Ok(next)
    }
}

// ---- observation ----------------------------------------------------------------

/// Snapshot the 5x5 receptive field centered on the agent's lower block.
/// EnemyAt is true for cells holding a live enemy; ObstacleAt for solid or
/// out-of-grid cells (except above the grid, which is open).
pub fn observe(state: &EnvState) -> ConditionValues {
    let mut values = ConditionValues::default();
    let (ar, ac) = (state.agent.row, state.agent.col);
    for condition in ConditionId::all() {
        let row = ar - 2 + condition.row() as i32;
        let col = ac - 2 + condition.col() as i32;
        let value = match condition.predicate() {
            Predicate::EnemyAt => state
                .enemies
                .iter()
                .any(|e| e.alive && e.row == row && e.col == col),
            Predicate::ObstacleAt => state.level.is_obstacle(row, col),
        };
        values.set(condition, value);
    }
    values
}

// ---- fitness -----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub progress: f64,
    pub kill: f64,
    pub time: f64,
    pub hurt_penalty: f64,
    /// Hard ceiling for non-goal states, keeping "fitness 1 iff the goal is
    /// reached" exact.
    pub non_goal_cap: f64,
}

impl Default for FitnessWeights {
    fn default() -> FitnessWeights {
        FitnessWeights {
            progress: 0.90,
            kill: 0.05,
            time: 0.04,
            hurt_penalty: 0.02,
            non_goal_cap: 0.99,
        }
    }
}

/// Episode fitness in [0,1]; exactly 1 iff the finish was reached. Time
/// contributes only through the terminal case, so partial runs stay below 1.
pub fn evaluate_fitness(state: &EnvState, weights: &FitnessWeights) -> f64 {
    if state.terminal == Terminal::ReachedFinish {
        return 1.0;
    }
    let kill_share = state.kills as f64 / state.initial_enemy_count.max(1) as f64;
    let raw = weights.progress * state.max_progress + weights.kill * kill_share
        + weights.time * 0.0
        - weights.hurt_penalty * state.agent.hurt_count as f64;
    raw.clamp(0.0, weights.non_goal_cap)
}

// ---- episodes ----------------------------------------------------------------------

/// One tick of an episode: the observation the tree saw, the action taken,
/// and the fitness after the step.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub tick: u32,
    pub action: Option<ActionId>,
    pub gamma: f64,
    pub conditions: ConditionValues,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub trace: Vec<TraceStep>,
    pub final_state: EnvState,
}

impl EpisodeResult {
    pub fn gamma(&self) -> f64 {
        self.trace.last().map(|t| t.gamma).unwrap_or(0.0)
    }
}

/// Run `tree` on `level` until a terminal state: observe, tick from the
/// root, execute the first requested action, repeat. `_seed` is part of the
/// interface for reproducibility bookkeeping; the simulator itself draws no
/// randomness. `on_step` sees each post-step state, for frame dumps.
pub fn run_episode_observed(
    tree: &BehaviorTree,
    level: &Arc<Level>,
    weights: &FitnessWeights,
    _seed: u64,
    mut on_step: impl FnMut(&EnvState),
) -> Result<EpisodeResult, StructuralError> {
    let mut state = EnvState::new(Arc::clone(level));
    let mut trace = Vec::new();
    while state.terminal == Terminal::None {
        let conditions = observe(&state);
        let mut blackboard = Blackboard::new(conditions, state.last_action);
        tree.tick_root(&mut blackboard)?;
        let action = blackboard.requested_action();
        state = state.step(action).expect("loop guard keeps state live");
        on_step(&state);
        trace.push(TraceStep {
            tick: trace.len() as u32,
            action,
            gamma: evaluate_fitness(&state, weights),
            conditions,
        });
    }
    Ok(EpisodeResult {
        trace,
        final_state: state,
    })
}

pub fn run_episode(
    tree: &BehaviorTree,
    level: &Arc<Level>,
    weights: &FitnessWeights,
    seed: u64,
) -> Result<EpisodeResult, StructuralError> {
    run_episode_observed(tree, level, weights, seed, |_| {})
}

/// Render one state as ASCII, for `run --ascii`.
pub fn render_ascii(state: &EnvState) -> String {
    let level = &state.level;
    let mut out = String::new();
    for row in 0..level.rows {
        for col in 0..level.cols {
            let mut glyph = match level.cell(row, col) {
                Cell::Empty => '.',
                Cell::Solid => '#',
                Cell::Finish => 'F',
            };
            if state
                .enemies
                .iter()
                .any(|e| e.alive && e.row == row && e.col == col)
            {
                glyph = 'e';
            }
            if state.projectiles.iter().any(|p| p.row == row && p.col == col) {
                glyph = '*';
            }
            if state.agent.alive && state.agent.occupies(row, col) {
                glyph = 'M';
            }
            out.push(glyph);
        }
        out.push('\n');
    }
    out
}
