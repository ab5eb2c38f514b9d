//! FrozenLake gridworld with optional slippery dynamics.
//!
//! Cells are stored row-major. Under slippery dynamics the intended move and
//! the two perpendicular moves each fire with probability 1/3; the opposite
//! move never fires. A move that would leave the grid keeps the agent in
//! place.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

pub const CANONICAL_4X4: &str = "SFFF\nFHFH\nFFFH\nHFFG";

pub const CANONICAL_8X8: &str = "SFFFFFFF\nFFFFFFFF\nFFFHFFFF\nFFFFFHFF\nFFFHFFFF\nFHHFFFHF\nFHFFHFHF\nFFFHFFFG";

const SLIP_PROBABILITY: f64 = 1.0 / 3.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("malformed map: {0}")]
    MalformedMap(String),
    #[error("transition queried from terminal state {0}")]
    TerminalStateQuery(StateId),
    #[error("step called after the episode ended; call reset first")]
    SteppedAfterEpisodeEnd,
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("reading map file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Start,
    Frozen,
    Hole,
    Goal,
}

impl Cell {
    pub fn is_terminal(self) -> bool {
        matches!(self, Cell::Hole | Cell::Goal)
    }

    fn from_char(c: char) -> Option<Cell> {
        match c {
            'S' => Some(Cell::Start),
            'F' => Some(Cell::Frozen),
            'H' => Some(Cell::Hole),
            'G' => Some(Cell::Goal),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Cell::Start => 'S',
            Cell::Frozen => 'F',
            Cell::Hole => 'H',
            Cell::Goal => 'G',
        }
    }
}

/// Index of a cell in a [`GridMap`], row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Left = 0,
    Down = 1,
    Right = 2,
    Up = 3,
}

impl Action {
    pub const COUNT: usize = 4;
    pub const ALL: [Action; 4] = [Action::Left, Action::Down, Action::Right, Action::Up];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// The intended action followed by its two perpendicular neighbours.
    fn slip_candidates(self) -> [Action; 3] {
        let i = self.index();
        [
            self,
            Action::ALL[(i + 3) % 4],
            Action::ALL[(i + 1) % 4],
        ]
    }

    pub fn arrow(self) -> char {
        match self {
            Action::Left => '←',
            Action::Down => '↓',
            Action::Right => '→',
            Action::Up => '↑',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::Left => "left",
            Action::Down => "down",
            Action::Right => "right",
            Action::Up => "up",
        };
        f.write_str(name)
    }
}

/// Immutable FrozenLake layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    start: StateId,
}

impl GridMap {
    pub fn new(rows: usize, cols: usize, cells: Vec<Cell>) -> Result<GridMap, EnvError> {
        if rows == 0 || cols == 0 {
            return Err(EnvError::MalformedMap("map has no cells".into()));
        }
        if cells.len() != rows * cols {
            return Err(EnvError::MalformedMap(format!(
                "expected {} cells for a {rows}x{cols} map, got {}",
                rows * cols,
                cells.len()
            )));
        }
        let starts: Vec<usize> = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Start)
            .map(|(i, _)| i)
            .collect();
        let start = match starts.as_slice() {
            [s] => StateId(*s),
            [] => return Err(EnvError::MalformedMap("no start cell".into())),
            _ => {
                return Err(EnvError::MalformedMap(format!(
                    "{} start cells, expected exactly one",
                    starts.len()
                )))
            }
        };
        if !cells.contains(&Cell::Goal) {
            return Err(EnvError::MalformedMap("no goal cell".into()));
        }
        Ok(GridMap { rows, cols, cells, start })
    }

    /// Parses one row per line of `S`/`F`/`H`/`G`. LF and CRLF are accepted,
    /// and a single trailing newline is ignored.
    pub fn parse(text: &str) -> Result<GridMap, EnvError> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        let text = text.strip_suffix('\r').unwrap_or(text);
        let mut cells = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (r, line) in text.split('\n').enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                return Err(EnvError::MalformedMap(format!("row {r} is empty")));
            }
            let before = cells.len();
            for ch in line.chars() {
                let cell = Cell::from_char(ch).ok_or_else(|| {
                    EnvError::MalformedMap(format!("invalid character {ch:?} in row {r}"))
                })?;
                cells.push(cell);
            }
            let width = cells.len() - before;
            match cols {
                None => cols = Some(width),
                Some(c) if c != width => {
                    return Err(EnvError::MalformedMap(format!(
                        "row {r} has {width} cells, expected {c}"
                    )))
                }
                Some(_) => {}
            }
            rows += 1;
        }
        GridMap::new(rows, cols.unwrap_or(0), cells)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GridMap, EnvError> {
        GridMap::parse(&std::fs::read_to_string(path)?)
    }

    /// Built-in layouts: `4x4` and `8x8`.
    pub fn builtin(name: &str) -> Option<GridMap> {
        let text = match name {
            "4x4" => CANONICAL_4X4,
            "8x8" => CANONICAL_8X8,
            _ => return None,
        };
        Some(GridMap::parse(text).expect("built-in maps are well formed"))
    }

    pub fn canonical_4x4() -> GridMap {
        GridMap::builtin("4x4").unwrap()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_states(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, s: StateId) -> Cell {
        self.cells[s.0]
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.cell(s).is_terminal()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.cells.len()).map(StateId)
    }

    /// Deterministic move; off-grid moves stay put.
    pub fn neighbor(&self, s: StateId, a: Action) -> StateId {
        let (r, c) = (s.0 / self.cols, s.0 % self.cols);
        let (r, c) = match a {
            Action::Left => (r, c.saturating_sub(1)),
            Action::Down => ((r + 1).min(self.rows - 1), c),
            Action::Right => (r, (c + 1).min(self.cols - 1)),
            Action::Up => (r.saturating_sub(1), c),
        };
        StateId(r * self.cols + c)
    }

    /// Default step cap: 25 steps per row (100 on the 4x4 map).
    pub fn default_step_cap(&self) -> usize {
        25 * self.rows
    }
}

impl FromStr for GridMap {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GridMap::parse(s)
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, row) in self.cells.chunks(self.cols).enumerate() {
            if r > 0 {
                writeln!(f)?;
            }
            for cell in row {
                write!(f, "{}", cell.as_char())?;
            }
        }
        Ok(())
    }
}

/// Exact next-state distribution for taking `a` in non-terminal `s`.
/// Entries with the same next state are merged; the intended move comes first.
pub fn transition_distribution(
    map: &GridMap,
    slippery: bool,
    s: StateId,
    a: Action,
) -> Result<Vec<(StateId, f64)>, EnvError> {
    if map.is_terminal(s) {
        return Err(EnvError::TerminalStateQuery(s));
    }
    if !slippery {
        return Ok(vec![(map.neighbor(s, a), 1.0)]);
    }
    let mut out: Vec<(StateId, f64)> = Vec::with_capacity(3);
    for b in a.slip_candidates() {
        let next = map.neighbor(s, b);
        match out.iter_mut().find(|(t, _)| *t == next) {
            Some((_, p)) => *p += SLIP_PROBABILITY,
            None => out.push((next, SLIP_PROBABILITY)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub map: Arc<GridMap>,
    pub slippery: bool,
    pub step_cap: usize,
}

impl EnvConfig {
    pub fn new(map: GridMap, slippery: bool, step_cap: usize) -> Result<EnvConfig, EnvError> {
        if step_cap == 0 {
            return Err(EnvError::InvalidConfig("step_cap must be at least 1".into()));
        }
        Ok(EnvConfig { map: Arc::new(map), slippery, step_cap })
    }

    /// `map` with its default step cap.
    pub fn with_default_cap(map: GridMap, slippery: bool) -> EnvConfig {
        let cap = map.default_step_cap();
        EnvConfig { map: Arc::new(map), slippery, step_cap: cap }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateId,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

/// A single FrozenLake episode in progress. Cloning yields an independent
/// simulation copy (the map is shared read-only).
#[derive(Debug, Clone)]
pub struct FrozenLake {
    config: EnvConfig,
    state: StateId,
    steps: usize,
    done: bool,
}

impl FrozenLake {
    pub fn new(config: EnvConfig) -> FrozenLake {
        let state = config.map.start();
        FrozenLake { config, state, steps: 0, done: false }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn map(&self) -> &GridMap {
        &self.config.map
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// True once a terminal cell was reached or the step cap was hit.
    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self) -> StateId {
        self.state = self.config.map.start();
        self.steps = 0;
        self.done = false;
        self.state
    }

    pub fn step<R: Rng + ?Sized>(&mut self, a: Action, rng: &mut R) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::SteppedAfterEpisodeEnd);
        }
        let map = &self.config.map;
        let effective = if self.config.slippery {
            a.slip_candidates()[rng.random_range(0..3)]
        } else {
            a
        };
        let next = map.neighbor(self.state, effective);
        let cell = map.cell(next);
        self.state = next;
        self.steps += 1;
        let terminal = cell.is_terminal();
        let truncated = !terminal && self.steps >= self.config.step_cap;
        self.done = terminal || truncated;
        Ok(StepOutcome {
            next_state: next,
            reward: if cell == Cell::Goal { 1.0 } else { 0.0 },
            terminal,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::episode_rng;

    fn sorted(mut d: Vec<(StateId, f64)>) -> Vec<(usize, f64)> {
        d.sort_by_key(|(s, _)| *s);
        d.into_iter().map(|(s, p)| (s.0, p)).collect()
    }

    fn assert_dist(actual: Vec<(StateId, f64)>, expected: &[(usize, f64)]) {
        let actual = sorted(actual);
        let mut expected = expected.to_vec();
        expected.sort_by_key(|(s, _)| *s);
        assert_eq!(actual.len(), expected.len(), "{actual:?} vs {expected:?}");
        for ((s, p), (es, ep)) in actual.iter().zip(&expected) {
            assert_eq!(s, es);
            assert!((p - ep).abs() < 1e-12, "{actual:?} vs {expected:?}");
        }
    }

    #[test]
    fn parses_smallest_map() {
        let m = GridMap::parse("SG").unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
        assert_eq!(m.cells(), &[Cell::Start, Cell::Goal]);
    }

    #[test]
    fn parses_canonical_4x4() {
        let m = GridMap::parse("SFFF\nFHFH\nFFFH\nHFFG").unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 4));
        assert_eq!(m.start(), StateId(0));
        assert_eq!(m.cell(StateId(15)), Cell::Goal);
        let holes: Vec<usize> = m.states().filter(|s| m.cell(*s) == Cell::Hole).map(|s| s.0).collect();
        assert_eq!(holes, vec![5, 7, 11, 12]);
        assert_eq!(m, GridMap::canonical_4x4());
        assert_eq!(m.to_string(), CANONICAL_4X4);
    }

    #[test]
    fn accepts_crlf_and_trailing_newline() {
        let m = GridMap::parse("SF\r\nFG\r\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
    }

    #[test]
    fn rejects_malformed_maps() {
        for bad in ["SS", "FG", "SF", "SG\nF", "SX", "", "SG\n\nFF"] {
            assert!(
                matches!(GridMap::parse(bad), Err(EnvError::MalformedMap(_))),
                "{bad:?} should be rejected"
            );
        }
    }

    #[test]
    fn builtin_8x8_is_valid() {
        let m = GridMap::builtin("8x8").unwrap();
        assert_eq!(m.n_states(), 64);
        assert_eq!(m.cell(StateId(63)), Cell::Goal);
        assert_eq!(m.default_step_cap(), 200);
        assert!(GridMap::builtin("5x5").is_none());
    }

    #[test]
    fn slippery_corner_down() {
        let m = GridMap::canonical_4x4();
        let d = transition_distribution(&m, true, StateId(0), Action::Down).unwrap();
        assert_dist(d, &[(4, 1.0 / 3.0), (0, 1.0 / 3.0), (1, 1.0 / 3.0)]);
    }

    #[test]
    fn non_slippery_is_deterministic() {
        let m = GridMap::canonical_4x4();
        let d = transition_distribution(&m, false, StateId(0), Action::Right).unwrap();
        assert_dist(d, &[(1, 1.0)]);
    }

    #[test]
    fn wall_bounces_merge() {
        let m = GridMap::parse("SG").unwrap();
        let d = transition_distribution(&m, true, StateId(0), Action::Right).unwrap();
        assert_dist(d, &[(1, 1.0 / 3.0), (0, 2.0 / 3.0)]);
    }

    #[test]
    fn terminal_query_is_an_error() {
        let m = GridMap::canonical_4x4();
        assert!(matches!(
            transition_distribution(&m, true, StateId(5), Action::Left),
            Err(EnvError::TerminalStateQuery(StateId(5)))
        ));
    }

    #[test]
    fn opposite_action_never_fires() {
        let m = GridMap::canonical_4x4();
        // From 10, Down leads to 14 and Up to 6; Up must be absent under Down.
        let d = transition_distribution(&m, true, StateId(10), Action::Down).unwrap();
        assert!(d.iter().all(|(s, _)| s.0 != 6));
        assert_dist(d, &[(14, 1.0 / 3.0), (9, 1.0 / 3.0), (11, 1.0 / 3.0)]);
    }

    #[test]
    fn exhaustive_distributions_are_normalized() {
        for map in [GridMap::canonical_4x4(), GridMap::builtin("8x8").unwrap()] {
            for slippery in [false, true] {
                for s in map.states().filter(|s| !map.is_terminal(*s)) {
                    for a in Action::ALL {
                        let d = transition_distribution(&map, slippery, s, a).unwrap();
                        let total: f64 = d.iter().map(|(_, p)| p).sum();
                        assert!((total - 1.0).abs() < 1e-12);
                        assert!(d.iter().all(|(t, p)| t.0 < map.n_states() && *p > 0.0));
                        let mut seen: Vec<_> = d.iter().map(|(t, _)| *t).collect();
                        seen.dedup();
                        assert_eq!(seen.len(), d.len());
                    }
                }
            }
        }
    }

    #[test]
    fn reward_iff_goal_exhaustive() {
        let map = GridMap::canonical_4x4();
        let cfg = EnvConfig::with_default_cap(map.clone(), true);
        let mut rng = episode_rng(1, 0);
        for s in map.states().filter(|s| !map.is_terminal(*s)) {
            for a in Action::ALL {
                for _ in 0..30 {
                    let mut env = FrozenLake::new(cfg.clone());
                    env.state = s;
                    let out = env.step(a, &mut rng).unwrap();
                    let cell = map.cell(out.next_state);
                    assert_eq!(out.reward == 1.0, cell == Cell::Goal);
                    assert_eq!(out.terminal, cell.is_terminal());
                    assert!(!(out.terminal && out.truncated));
                }
            }
        }
    }

    #[test]
    fn reset_returns_start_and_is_idempotent() {
        let mut env = FrozenLake::new(EnvConfig::with_default_cap(GridMap::canonical_4x4(), true));
        assert_eq!(env.reset(), StateId(0));
        assert_eq!(env.reset(), StateId(0));
        let mut env = FrozenLake::new(EnvConfig::with_default_cap(GridMap::parse("SG").unwrap(), true));
        assert_eq!(env.reset(), StateId(0));
    }

    #[test]
    fn deterministic_moves_onto_goal_and_hole() {
        let cfg = EnvConfig::with_default_cap(GridMap::canonical_4x4(), false);
        let mut rng = episode_rng(0, 0);
        let mut env = FrozenLake::new(cfg.clone());
        env.state = StateId(14);
        let out = env.step(Action::Right, &mut rng).unwrap();
        assert_eq!(out, StepOutcome { next_state: StateId(15), reward: 1.0, terminal: true, truncated: false });

        let mut env = FrozenLake::new(cfg);
        env.state = StateId(1);
        let out = env.step(Action::Down, &mut rng).unwrap();
        assert_eq!(out, StepOutcome { next_state: StateId(5), reward: 0.0, terminal: true, truncated: false });
        assert!(matches!(env.step(Action::Down, &mut rng), Err(EnvError::SteppedAfterEpisodeEnd)));
    }

    #[test]
    fn truncates_at_step_cap() {
        let cfg = EnvConfig::new(GridMap::canonical_4x4(), false, 3).unwrap();
        let mut env = FrozenLake::new(cfg);
        let mut rng = episode_rng(0, 0);
        env.reset();
        let outs: Vec<_> = (0..3).map(|_| env.step(Action::Left, &mut rng).unwrap()).collect();
        assert!(!outs[0].truncated && !outs[1].truncated);
        assert!(outs[2].truncated && !outs[2].terminal && outs[2].reward == 0.0);
        assert!(env.is_done());
        assert!(env.step(Action::Left, &mut rng).is_err());
        assert!(EnvConfig::new(GridMap::canonical_4x4(), false, 0).is_err());
    }

    #[test]
    fn empirical_frequencies_match_distribution() {
        let map = GridMap::canonical_4x4();
        let cfg = EnvConfig::with_default_cap(map.clone(), true);
        let mut rng = episode_rng(42, 0);
        let n = 300_000;
        let mut counts = [0usize; 16];
        let mut env = FrozenLake::new(cfg);
        for _ in 0..n {
            env.reset();
            counts[env.step(Action::Down, &mut rng).unwrap().next_state.0] += 1;
        }
        let dist = transition_distribution(&map, true, StateId(0), Action::Down).unwrap();
        let mut chi2 = 0.0;
        for (s, p) in &dist {
            let freq = counts[s.0] as f64 / n as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.01, "state {s}: {freq}");
            let expected = p * n as f64;
            chi2 += (counts[s.0] as f64 - expected).powi(2) / expected;
        }
        assert_eq!(counts.iter().sum::<usize>(), dist.iter().map(|(s, _)| counts[s.0]).sum::<usize>());
        // chi-square critical value, 2 dof, alpha = 0.001
        assert!(chi2 < 13.816, "chi2 = {chi2}");
    }

    #[test]
    fn fixed_seed_replays_bit_identically() {
        let cfg = EnvConfig::with_default_cap(GridMap::canonical_4x4(), true);
        let actions = [Action::Down, Action::Right, Action::Right, Action::Down, Action::Left, Action::Up];
        let play = || {
            let mut env = FrozenLake::new(cfg.clone());
            let mut rng = episode_rng(99, 5);
            let mut outs = Vec::new();
            for a in actions.iter().cycle().take(200) {
                if env.is_done() {
                    env.reset();
                }
                outs.push(env.step(*a, &mut rng).unwrap());
            }
            outs
        };
        assert_eq!(play(), play());
    }
}
