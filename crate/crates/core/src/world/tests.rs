use super::*;
use crate::event::Event;

/// 7x7 open field, one 3-cell tree in row 1 and one 1-cell tree at (5,5).
fn fixture(agents: &[(Pos, Direction)]) -> WorldState {
    let cfg = WorldConfig {
        width: 7,
        height: 7,
        walls: vec![],
        trees: vec![
            TreeConfig {
                id: 0,
                cells: vec![Pos::new(1, 2), Pos::new(1, 3), Pos::new(1, 4)],
            },
            TreeConfig {
                id: 1,
                cells: vec![Pos::new(5, 5)],
            },
        ],
        spawns: agents.iter().map(|a| a.0).collect(),
        horizon: 100,
        regrowth_rate: 0.0,
        beam_length: 3,
        freeze_duration: 25,
        seed: 1,
        view_width: 5,
        view_height: 5,
    };
    let mut w = WorldState::new(&cfg, agents.len()).unwrap();
    for (i, (_, o)) in agents.iter().enumerate() {
        w.agents[i].orientation = *o;
        w.agents[i].spawn_orientation = *o;
    }
    w
}

fn acts(pairs: &[(u8, Action)]) -> ActionSet {
    pairs.iter().map(|&(i, a)| (AgentId(i), a)).collect()
}

#[test]
fn default_world_is_fully_stocked() {
    let w = WorldState::new(&WorldConfig::default_map(), 4).unwrap();
    assert_eq!(w.map.tree_zones.len(), 6);
    assert_eq!(w.map.total_apples(), 64);
    assert_eq!(w.map.alive_trees(), 6);
    assert_eq!(w.tick, 0);
}

#[test]
fn short_and_long_horizons_accepted() {
    for horizon in [250, 1000] {
        let cfg = WorldConfig {
            horizon,
            ..WorldConfig::default_map()
        };
        let w = WorldState::new(&cfg, 4).unwrap();
        assert_eq!(w.horizon, horizon);
    }
}

#[test]
fn same_seed_gives_identical_states() {
    let cfg = WorldConfig {
        regrowth_rate: 0.05,
        ..WorldConfig::default_map()
    };
    let mut a = WorldState::new(&cfg, 4).unwrap();
    let mut b = WorldState::new(&cfg, 4).unwrap();
    assert_eq!(a, b);
    let moves = acts(&[
        (0, Action::MoveForward),
        (1, Action::MoveForward),
        (2, Action::StrafeLeft),
        (3, Action::TurnRight),
    ]);
    for _ in 0..20 {
        let ea = a.step(&moves).unwrap();
        let eb = b.step(&moves).unwrap();
        assert_eq!(ea, eb);
    }
    assert_eq!(a, b);
}

#[test]
fn moving_onto_apple_eats_it() {
    let mut w = fixture(&[(Pos::new(2, 3), Direction::N)]);
    let events = w.step(&acts(&[(0, Action::MoveForward)])).unwrap();
    assert!(events.contains(&Event::AppleEaten {
        agent: AgentId(0),
        tree: TreeId(0),
        cell: Pos::new(1, 3)
    }));
    assert_eq!(w.agents[0].consumed_total, 1);
    assert_eq!(w.agents[0].consumption_times, vec![0]);
    assert_eq!(w.map.tree_zones[0].apple_count(), 2);
    assert!(w.map.tree_zones[0].alive);
}

#[test]
fn eating_last_apple_kills_tree_forever() {
    let mut w = fixture(&[(Pos::new(5, 4), Direction::E)]);
    w.params.regrowth_rate = 1.0;
    let events = w.step(&acts(&[(0, Action::MoveForward)])).unwrap();
    assert!(events.contains(&Event::TreeDied {
        tree: TreeId(1),
        cause: DeathCause::Harvest
    }));
    assert!(!w.map.tree_zones[1].alive);
    w.agents[0].position = Pos::new(0, 0);
    w.horizon = 20_000;
    for _ in 0..10_000 {
        let events = w.step(&acts(&[(0, Action::Noop)])).unwrap();
        assert!(!events
            .iter()
            .any(|e| matches!(e, Event::AppleRegrown { tree: TreeId(1), .. })));
    }
    assert!(!w.map.tree_zones[1].alive);
    assert!(w.map.tree_zones[1].apples.is_empty());
}

#[test]
fn contested_cell_goes_to_rotating_priority_head() {
    // Agents 0 and 1 both step into (3,3). Priority head = tick mod 2.
    for (tick, winner) in [(0u64, 0u8), (1, 1), (2, 0), (3, 1)] {
        let mut w = fixture(&[(Pos::new(3, 2), Direction::E), (Pos::new(3, 4), Direction::W)]);
        w.tick = tick;
        let events = w
            .step(&acts(&[(0, Action::MoveForward), (1, Action::MoveForward)]))
            .unwrap();
        let moved: Vec<AgentId> = events
            .iter()
            .filter_map(|e| match e {
                Event::AgentMoved { agent, .. } => Some(*agent),
                _ => None,
            })
            .collect();
        assert_eq!(moved, vec![AgentId(winner)], "tick {tick}");
        assert_eq!(w.agents[winner as usize].position, Pos::new(3, 3));
        let loser = 1 - winner as usize;
        assert_eq!(w.agents[loser].position, w.agents[loser].spawn);
    }
}

#[test]
fn attack_freezes_target_two_cells_ahead() {
    let mut w = fixture(&[(Pos::new(6, 0), Direction::N), (Pos::new(4, 0), Direction::N)]);
    assert_eq!(w.resolve_attack(AgentId(0)), Some(AgentId(1)));
    let events = w.step(&acts(&[(0, Action::Attack), (1, Action::Noop)])).unwrap();
    assert_eq!(
        events[0],
        Event::AgentFrozen {
            agent: AgentId(1),
            by: AgentId(0),
            until: 25
        }
    );
    assert!(w.agents[1].is_frozen());
    assert_eq!(w.agent_at(Pos::new(4, 0)), None);
    // Frozen agents may not act.
    assert_eq!(
        w.step(&acts(&[(0, Action::Noop), (1, Action::Noop)])),
        Err(WorldError::FrozenAgent(AgentId(1)))
    );
    // And cannot be hit again.
    assert_eq!(w.resolve_attack(AgentId(0)), None);
    let events = w.step(&acts(&[(0, Action::Attack)])).unwrap();
    assert!(!events.iter().any(|e| matches!(e, Event::AgentFrozen { .. })));
    // Frozen through tick 24, back on its spawn for tick 25.
    while w.tick < 24 {
        w.step(&acts(&[(0, Action::Noop)])).unwrap();
        assert!(w.agents[1].is_frozen());
    }
    let events = w.step(&acts(&[(0, Action::Noop)])).unwrap();
    assert_eq!(w.tick, 25);
    assert!(!w.agents[1].is_frozen());
    assert_eq!(w.agents[1].position, Pos::new(4, 0));
    assert!(events.contains(&Event::AgentMoved {
        agent: AgentId(1),
        from: None,
        to: Pos::new(4, 0)
    }));
}

#[test]
fn wall_blocks_beam() {
    let mut w = fixture(&[(Pos::new(6, 0), Direction::N), (Pos::new(4, 0), Direction::N)]);
    w.map = {
        let mut cfg = WorldConfig {
            width: 7,
            height: 7,
            walls: vec![Pos::new(5, 0)],
            trees: vec![TreeConfig {
                id: 0,
                cells: vec![Pos::new(1, 3)],
            }],
            spawns: vec![Pos::new(6, 0), Pos::new(4, 0)],
            ..WorldConfig::default_map()
        };
        cfg.horizon = 10;
        GridMap::from_config(&cfg)
    };
    assert_eq!(w.resolve_attack(AgentId(0)), None);
}

#[test]
fn beam_length_limits_reach() {
    let w = fixture(&[(Pos::new(6, 0), Direction::N), (Pos::new(2, 0), Direction::N)]);
    assert_eq!(w.resolve_attack(AgentId(0)), None);
    let w = fixture(&[(Pos::new(6, 0), Direction::N), (Pos::new(3, 0), Direction::N)]);
    assert_eq!(w.resolve_attack(AgentId(0)), Some(AgentId(1)));
}

#[test]
fn step_errors() {
    let mut w = fixture(&[(Pos::new(6, 0), Direction::N)]);
    assert_eq!(
        w.step(&acts(&[(0, Action::Noop), (3, Action::Noop)])),
        Err(WorldError::UnknownAgent(AgentId(3)))
    );
    assert_eq!(w.step(&acts(&[])), Err(WorldError::MissingAction(AgentId(0))));
    w.tick = w.horizon;
    assert!(matches!(
        w.step(&acts(&[(0, Action::Noop)])),
        Err(WorldError::EpisodeOver { .. })
    ));
}

#[test]
fn dead_tree_and_empty_tree_never_regrow() {
    let mut w = fixture(&[(Pos::new(6, 0), Direction::N)]);
    w.params.regrowth_rate = 1.0;
    w.map.tree_zones[0].alive = false;
    w.map.tree_zones[0].apples.clear();
    // Alive but empty: p(0) = 0.
    w.map.tree_zones[1].apples.clear();
    let mut events = Vec::new();
    for _ in 0..1000 {
        w.regrow(&mut events);
    }
    assert!(events.is_empty());
}

#[test]
fn regrowth_rate_matches_binomial_expectation() {
    // 12-cell tree holding 8 apples: 4 empty cells, p = 0.005 * 8 = 0.04.
    let mut cfg = WorldConfig::default_map();
    cfg.trees = vec![cfg.trees[0].clone()];
    cfg.regrowth_rate = 0.005;
    cfg.seed = 99;
    let mut w = WorldState::new(&cfg, 0).unwrap();
    let full = w.map.tree_zones[0].apples.clone();
    let stocked: std::collections::BTreeSet<Pos> = full.iter().copied().take(8).collect();
    let trials = 10_000;
    let mut total = 0usize;
    for _ in 0..trials {
        w.map.tree_zones[0].apples = stocked.clone();
        let mut events = Vec::new();
        w.regrow(&mut events);
        total += events.len();
    }
    let mean = total as f64 / trials as f64;
    assert!((mean - 0.16).abs() <= 0.01, "mean regrowths/tick {mean}");
}

#[test]
fn observation_shows_apple_ahead() {
    let w = fixture(&[(Pos::new(2, 3), Direction::N)]);
    let obs = w.observe(AgentId(0)).unwrap();
    let (sr, sc) = obs.self_cell();
    assert_eq!((sr, sc), (4, 2));
    assert_eq!(obs.window[sr][sc], Entity::SelfAgent);
    assert_eq!(obs.window[sr - 1][sc], Entity::Apple);
    // Row above the tree is the map edge row 0, then out of bounds.
    assert_eq!(obs.window[sr - 2][sc], Entity::Empty);
    assert_eq!(obs.window[sr - 3][sc], Entity::Wall);
}

#[test]
fn observation_rotates_with_orientation() {
    // Facing east from (1,1): the tree row lies straight ahead.
    let w = fixture(&[(Pos::new(1, 1), Direction::E)]);
    let obs = w.observe(AgentId(0)).unwrap();
    let (sr, sc) = obs.self_cell();
    assert_eq!(obs.window[sr - 1][sc], Entity::Apple);
    assert_eq!(obs.window[sr - 2][sc], Entity::Apple);
    assert_eq!(obs.window[sr - 3][sc], Entity::Apple);
    // Left of an east-facing agent is north: row 0, then out of bounds.
    assert_eq!(obs.window[sr][sc - 1], Entity::Empty);
    assert_eq!(obs.window[sr][sc - 2], Entity::Wall);
}

#[test]
fn corner_agent_sees_walls_outside() {
    let w = fixture(&[(Pos::new(0, 0), Direction::N)]);
    let obs = w.observe(AgentId(0)).unwrap();
    let (sr, sc) = obs.self_cell();
    for r in 0..sr {
        for c in 0..obs.width() {
            assert_eq!(obs.window[r][c], Entity::Wall);
        }
    }
    for c in 0..sc {
        assert_eq!(obs.window[sr][c], Entity::Wall);
    }
}

#[test]
fn turning_changes_view_not_world() {
    let mut w = fixture(&[(Pos::new(2, 3), Direction::N)]);
    let before = w.observe(AgentId(0)).unwrap();
    let snapshot = w.map.clone();
    w.step(&acts(&[(0, Action::TurnRight)])).unwrap();
    let after = w.observe(AgentId(0)).unwrap();
    assert_ne!(before.window, after.window);
    assert_eq!(w.map, snapshot);
}

#[test]
fn frozen_observation_is_blank() {
    let mut w = fixture(&[(Pos::new(6, 0), Direction::N), (Pos::new(4, 0), Direction::N)]);
    w.step(&acts(&[(0, Action::Attack), (1, Action::Noop)])).unwrap();
    let obs = w.observe(AgentId(1)).unwrap();
    assert!(obs.frozen);
    assert!(obs.window.iter().flatten().all(|e| *e == Entity::Empty));
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    fn action() -> impl Strategy<Value = Action> {
        prop::sample::select(Action::ALL.to_vec())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn conservation_and_capacity(seed in any::<u64>(), script in prop::collection::vec(prop::collection::vec(action(), 4), 1..120)) {
            let cfg = WorldConfig { seed, regrowth_rate: 0.02, ..WorldConfig::default_map() };
            let mut w = WorldState::new(&cfg, 4).unwrap();
            let mut eaten = 0usize;
            let mut dead = std::collections::BTreeSet::new();
            for tick_actions in script {
                let before = w.map.total_apples() as i64;
                let set: ActionSet = w.agents.iter().filter(|a| !a.is_frozen())
                    .map(|a| (a.id, tick_actions[a.id.0 as usize])).collect();
                let events = w.step(&set).unwrap();
                let mut delta = 0i64;
                for e in &events {
                    match e {
                        Event::AppleEaten { .. } => { eaten += 1; delta -= 1; }
                        Event::AppleRegrown { tree, .. } => {
                            prop_assert!(!dead.contains(tree));
                            delta += 1;
                        }
                        Event::AppleRemovedByDisruption { .. } => delta -= 1,
                        Event::TreeDied { tree, .. } => { dead.insert(*tree); }
                        _ => {}
                    }
                }
                prop_assert_eq!(before + delta, w.map.total_apples() as i64);
                prop_assert!(w.map.total_apples() <= 64);
                let occupied: Vec<Pos> = w.agents.iter().filter(|a| !a.is_frozen()).map(|a| a.position).collect();
                let unique: std::collections::BTreeSet<_> = occupied.iter().collect();
                prop_assert_eq!(unique.len(), occupied.len());
            }
            let consumed: u32 = w.agents.iter().map(|a| a.consumed_total).sum();
            prop_assert_eq!(consumed as usize, eaten);
            for a in &w.agents {
                prop_assert_eq!(a.consumed_total as usize, a.consumption_times.len());
            }
        }

        #[test]
        fn step_is_a_function_of_state_and_actions(seed in any::<u64>(), script in prop::collection::vec(prop::collection::vec(action(), 3), 1..60)) {
            let cfg = WorldConfig { seed, regrowth_rate: 0.05, ..WorldConfig::default_map() };
            let mut w = WorldState::new(&cfg, 3).unwrap();
            for tick_actions in script {
                let set: ActionSet = w.agents.iter().filter(|a| !a.is_frozen())
                    .map(|a| (a.id, tick_actions[a.id.0 as usize])).collect();
                let mut copy = w.clone();
                let e1 = w.step(&set).unwrap();
                let e2 = copy.step(&set).unwrap();
                prop_assert_eq!(e1, e2);
                prop_assert_eq!(&w, &copy);
            }
        }

        #[test]
        fn abundance_is_monotone_without_agents(seed in any::<u64>(), ticks in 1usize..300) {
            let cfg = WorldConfig { seed, regrowth_rate: 0.01, horizon: 1000, ..WorldConfig::default_map() };
            let mut w = WorldState::new(&cfg, 0).unwrap();
            for t in &mut w.map.tree_zones {
                let keep: std::collections::BTreeSet<Pos> = t.cells.iter().copied().step_by(3).collect();
                t.apples = keep;
            }
            let mut counts: Vec<usize> = w.map.tree_zones.iter().map(|t| t.apple_count()).collect();
            for _ in 0..ticks {
                w.step(&ActionSet::new()).unwrap();
                let now: Vec<usize> = w.map.tree_zones.iter().map(|t| t.apple_count()).collect();
                for (a, b) in counts.iter().zip(&now) {
                    prop_assert!(b >= a);
                }
                counts = now;
            }
        }
    }
}
