use std::fmt;

use serde::{Deserialize, Serialize};

/// A grid cell, `(row, col)` with row 0 at the north edge.
///
/// Ordering is row-major, which is the documented draw order for every
/// per-cell random process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Pos {
    pub row: i32,
    pub col: i32,
}

impl Pos {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn offset(self, (dr, dc): (i32, i32)) -> Self {
        Self::new(self.row + dr, self.col + dc)
    }

    pub fn step(self, dir: Direction, n: i32) -> Self {
        let (dr, dc) = dir.delta();
        Self::new(self.row + dr * n, self.col + dc * n)
    }

    pub fn manhattan(self, other: Pos) -> u32 {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl From<[i32; 2]> for Pos {
    fn from([row, col]: [i32; 2]) -> Self {
        Self { row, col }
    }
}

impl From<Pos> for [i32; 2] {
    fn from(p: Pos) -> Self {
        [p.row, p.col]
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Compass heading. Also used for path steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    /// Tie-break order for path search.
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub const fn delta(self) -> (i32, i32) {
        match self {
            Direction::N => (-1, 0),
            Direction::E => (0, 1),
            Direction::S => (1, 0),
            Direction::W => (0, -1),
        }
    }

    pub const fn turn_right(self) -> Self {
        match self {
            Direction::N => Direction::E,
            Direction::E => Direction::S,
            Direction::S => Direction::W,
            Direction::W => Direction::N,
        }
    }

    pub const fn turn_left(self) -> Self {
        match self {
            Direction::N => Direction::W,
            Direction::W => Direction::S,
            Direction::S => Direction::E,
            Direction::E => Direction::N,
        }
    }

    pub const fn opposite(self) -> Self {
        self.turn_right().turn_right()
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::N => "north",
            Direction::E => "east",
            Direction::S => "south",
            Direction::W => "west",
        }
    }
}

/// One primitive action per agent per tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MoveForward,
    MoveBackward,
    StrafeLeft,
    StrafeRight,
    TurnLeft,
    TurnRight,
    Attack,
    #[default]
    Noop,
}

impl Action {
    pub const ALL: [Action; 8] = [
        Action::MoveForward,
        Action::MoveBackward,
        Action::StrafeLeft,
        Action::StrafeRight,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Attack,
        Action::Noop,
    ];

    /// Heading of the translation this action requests, if any.
    pub fn movement(self, facing: Direction) -> Option<Direction> {
        match self {
            Action::MoveForward => Some(facing),
            Action::MoveBackward => Some(facing.opposite()),
            Action::StrafeLeft => Some(facing.turn_left()),
            Action::StrafeRight => Some(facing.turn_right()),
            _ => None,
        }
    }

    /// The single primitive that translates an agent facing `facing` one cell
    /// toward `heading` without turning.
    pub fn toward(facing: Direction, heading: Direction) -> Action {
        if heading == facing {
            Action::MoveForward
        } else if heading == facing.opposite() {
            Action::MoveBackward
        } else if heading == facing.turn_left() {
            Action::StrafeLeft
        } else {
            Action::StrafeRight
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toward_inverts_movement() {
        for facing in Direction::ALL {
            for heading in Direction::ALL {
                let a = Action::toward(facing, heading);
                assert_eq!(a.movement(facing), Some(heading));
            }
        }
    }

    #[test]
    fn turns_compose() {
        for d in Direction::ALL {
            assert_eq!(d.turn_left().turn_right(), d);
            assert_eq!(d.opposite().opposite(), d);
        }
    }

    #[test]
    fn pos_serializes_as_pair() {
        let s = serde_json::to_string(&Pos::new(4, 7)).unwrap();
        assert_eq!(s, "[4,7]");
    }
}
