//! Breadth-first shortest paths on the 4-connected grid.

use std::collections::VecDeque;

use crate::world::{Action, Direction, GridMap, Pos};

/// Neighbour expansion order; also the tie-break between equal-length paths.
pub const DIRECTION_PREFERENCE: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStep {
    /// Already at the target.
    Arrived,
    /// Move one cell toward `heading` using `action`.
    Step {
        action: Action,
        heading: Direction,
    },
    NoPath,
}

/// Distance field over the map from `source`. Cells for which `blocked`
/// returns true are impassable; the source itself is always expanded.
pub fn distance_field<F>(map: &GridMap, source: Pos, blocked: F) -> Vec<Option<u32>>
where
    F: Fn(Pos) -> bool,
{
    let w = map.width.max(0) as usize;
    let h = map.height.max(0) as usize;
    let mut dist = vec![None; w * h];
    if !map.walkable(source) {
        return dist;
    }
    let idx = |p: Pos| p.row as usize * w + p.col as usize;
    dist[idx(source)] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(p) = queue.pop_front() {
        let d = dist[idx(p)].expect("queued cells have a distance");
        for dir in DIRECTION_PREFERENCE {
            let q = p.step(dir, 1);
            if !map.walkable(q) || dist[idx(q)].is_some() || blocked(q) {
                continue;
            }
            dist[idx(q)] = Some(d + 1);
            queue.push_back(q);
        }
    }
    dist
}

pub fn distance_at(map: &GridMap, field: &[Option<u32>], p: Pos) -> Option<u32> {
    if !map.in_bounds(p) {
        return None;
    }
    field[(p.row * map.width + p.col) as usize]
}

/// First step of a shortest path from `from` to `to`. Among equally short
/// paths the first move prefers N, then E, S, W.
pub fn first_step<F>(map: &GridMap, from: Pos, to: Pos, blocked: F) -> Option<Direction>
where
    F: Fn(Pos) -> bool,
{
    if from == to {
        return None;
    }
    // Distances measured from the target; `from` may itself be "blocked"
    // (it holds the mover).
    let field = distance_field(map, to, |p| p != from && blocked(p));
    let here = distance_at(map, &field, from)?;
    DIRECTION_PREFERENCE.into_iter().find(|&dir| {
        let q = from.step(dir, 1);
        distance_at(map, &field, q) == Some(here - 1)
    })
}

/// Cells of a shortest path from `from` to `to`, excluding `from`, with the
/// same tie-break as [`first_step`].
pub fn shortest_path<F>(map: &GridMap, from: Pos, to: Pos, blocked: F) -> Option<Vec<Pos>>
where
    F: Fn(Pos) -> bool,
{
    let field = distance_field(map, to, |p| p != from && blocked(p));
    let mut here = distance_at(map, &field, from)?;
    let mut cur = from;
    let mut path = Vec::with_capacity(here as usize);
    while here > 0 {
        let dir = DIRECTION_PREFERENCE
            .into_iter()
            .find(|&dir| distance_at(map, &field, cur.step(dir, 1)) == Some(here - 1))?;
        cur = cur.step(dir, 1);
        path.push(cur);
        here -= 1;
    }
    Some(path)
}

/// Next primitive for an agent at `from` facing `facing` heading to `to`.
pub fn pathfind<F>(map: &GridMap, from: Pos, facing: Direction, to: Pos, blocked: F) -> PathStep
where
    F: Fn(Pos) -> bool,
{
    if from == to {
        return PathStep::Arrived;
    }
    if !map.walkable(to) {
        return PathStep::NoPath;
    }
    match first_step(map, from, to, blocked) {
        Some(heading) => PathStep::Step {
            action: Action::toward(facing, heading),
            heading,
        },
        None => PathStep::NoPath,
    }
}

/// Action to apply for `step`; `noop` for anything but a move.
pub fn step_action(step: PathStep) -> Action {
    match step {
        PathStep::Step { action, .. } => action,
        PathStep::Arrived | PathStep::NoPath => Action::Noop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{TreeConfig, WorldConfig};

    fn open_map(w: i32, h: i32, walls: Vec<Pos>) -> GridMap {
        let cfg = WorldConfig {
            width: w,
            height: h,
            walls,
            trees: vec![TreeConfig {
                id: 0,
                cells: vec![Pos::new(h - 1, w - 1)],
            }],
            spawns: vec![Pos::new(0, 0)],
            ..WorldConfig::default_map()
        };
        cfg.validate().unwrap();
        GridMap::from_config(&cfg)
    }

    #[test]
    fn clear_row_moves_east() {
        let map = open_map(6, 3, vec![]);
        let step = pathfind(&map, Pos::new(1, 1), Direction::N, Pos::new(1, 4), |_| false);
        assert_eq!(
            step,
            PathStep::Step {
                action: Action::StrafeRight,
                heading: Direction::E
            }
        );
        let step = pathfind(&map, Pos::new(1, 1), Direction::E, Pos::new(1, 4), |_| false);
        assert_eq!(step_action(step), Action::MoveForward);
    }

    #[test]
    fn identity_is_arrived() {
        let map = open_map(4, 4, vec![]);
        let p = Pos::new(2, 2);
        assert_eq!(pathfind(&map, p, Direction::S, p, |_| false), PathStep::Arrived);
        assert_eq!(step_action(PathStep::Arrived), Action::Noop);
    }

    #[test]
    fn walled_target_has_no_path() {
        let ring = vec![Pos::new(1, 2), Pos::new(3, 2), Pos::new(2, 1), Pos::new(2, 3)];
        let map = open_map(5, 5, ring);
        let step = pathfind(&map, Pos::new(0, 0), Direction::N, Pos::new(2, 2), |_| false);
        assert_eq!(step, PathStep::NoPath);
    }

    #[test]
    fn tie_break_prefers_north_then_east() {
        let map = open_map(5, 5, vec![]);
        // Target diagonally up-right: both N and E start shortest paths.
        let d = first_step(&map, Pos::new(3, 1), Pos::new(1, 3), |_| false);
        assert_eq!(d, Some(Direction::N));
        // Down-right: E before S.
        let d = first_step(&map, Pos::new(1, 1), Pos::new(3, 3), |_| false);
        assert_eq!(d, Some(Direction::E));
    }

    #[test]
    fn detours_around_walls() {
        // Wall column at col 2 except row 4.
        let walls = (0..4).map(|r| Pos::new(r, 2)).collect();
        let map = open_map(5, 5, walls);
        let field = distance_field(&map, Pos::new(0, 0), |_| false);
        assert_eq!(distance_at(&map, &field, Pos::new(0, 4)), Some(12));
        let d = first_step(&map, Pos::new(0, 1), Pos::new(0, 3), |_| false);
        assert_eq!(d, Some(Direction::S));
    }

    #[test]
    fn path_matches_first_steps() {
        let walls = (0..4).map(|r| Pos::new(r, 2)).collect();
        let map = open_map(5, 5, walls);
        let path = shortest_path(&map, Pos::new(0, 1), Pos::new(0, 3), |_| false).unwrap();
        assert_eq!(path.len(), 10);
        assert_eq!(path[0], Pos::new(1, 1));
        assert_eq!(*path.last().unwrap(), Pos::new(0, 3));
        for pair in path.windows(2) {
            assert_eq!(pair[0].manhattan(pair[1]), 1);
            assert!(map.walkable(pair[1]));
        }
        assert_eq!(
            shortest_path(&map, Pos::new(2, 1), Pos::new(2, 1), |_| false),
            Some(vec![])
        );
    }

    #[test]
    fn blocked_cells_are_avoided() {
        let map = open_map(5, 1, vec![]);
        let step = pathfind(&map, Pos::new(0, 0), Direction::E, Pos::new(0, 4), |p| {
            p == Pos::new(0, 2)
        });
        assert_eq!(step, PathStep::NoPath);
    }
}
