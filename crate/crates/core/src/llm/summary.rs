use std::collections::BTreeMap;

use super::ascii::AsciiView;
use crate::comm::trim_to_words;
use crate::world::{Direction, Entity, Pos};

pub const SUMMARY_WORD_CAP: usize = 120;

/// The observer's own state, which the window alone does not carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfState {
    pub tick: u64,
    pub horizon: u64,
    pub score: u32,
    pub position: Pos,
    pub facing: Direction,
    pub frozen: bool,
}

/// Compass sectors in reporting order.
const SECTORS: [&str; 8] = [
    "north",
    "north-east",
    "east",
    "south-east",
    "south",
    "south-west",
    "west",
    "north-west",
];

fn sector(dr: i32, dc: i32) -> usize {
    match (dr.signum(), dc.signum()) {
        (-1, 0) => 0,
        (-1, 1) => 1,
        (0, 1) => 2,
        (1, 1) => 3,
        (1, 0) => 4,
        (1, -1) => 5,
        (0, -1) => 6,
        _ => 7,
    }
}

struct Seen {
    entity: Entity,
    at: Pos,
    dr: i32,
    dc: i32,
}

impl Seen {
    fn distance(&self) -> u32 {
        self.dr.unsigned_abs() + self.dc.unsigned_abs()
    }
}

fn visible_cells(view: &AsciiView, me: &SelfState) -> Vec<Seen> {
    let (sr, sc) = view.self_cell();
    let fwd = me.facing.delta();
    let right = me.facing.turn_right().delta();
    let mut out = Vec::new();
    for (wr, row) in view.decode().into_iter().enumerate() {
        for (wc, e) in row.into_iter().enumerate() {
            let Some(entity) = e else { continue };
            let f = sr as i32 - wr as i32;
            let r = wc as i32 - sc as i32;
            let dr = f * fwd.0 + r * right.0;
            let dc = f * fwd.1 + r * right.1;
            out.push(Seen {
                entity,
                at: me.position.offset((dr, dc)),
                dr,
                dc,
            });
        }
    }
    out
}

fn plural(n: usize, one: &str, many: &str) -> String {
    if n == 1 {
        format!("{n} {one}")
    } else {
        format!("{n} {many}")
    }
}

/// Deterministic description of a view: own state, apples grouped by
/// compass direction with distances, the nearest apple coordinates, visible
/// agents and the nearest tree ground. At most [`SUMMARY_WORD_CAP`] words.
pub fn summarize_scene(view: &AsciiView, me: &SelfState) -> String {
    let mut parts = vec![format!(
        "Tick {} of {}. You are at ({},{}) facing {} and have eaten {}.",
        me.tick,
        me.horizon,
        me.position.row,
        me.position.col,
        me.facing.name(),
        plural(me.score as usize, "apple", "apples"),
    )];
    if me.frozen {
        parts.push("You are frozen and see nothing until you respawn.".into());
        return trim_to_words(&parts.join(" "), SUMMARY_WORD_CAP);
    }
    let seen = visible_cells(view, me);

    let mut apples: Vec<&Seen> = seen.iter().filter(|s| s.entity == Entity::Apple).collect();
    apples.sort_by_key(|s| (s.distance(), s.at));
    if apples.is_empty() {
        parts.push("There are no apples visible.".into());
    } else {
        let mut by_sector: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for a in &apples {
            by_sector.entry(sector(a.dr, a.dc)).or_default().push(a.distance());
        }
        let groups: Vec<String> = by_sector
            .iter()
            .map(|(s, d)| {
                let shown: Vec<String> = d.iter().take(3).map(u32::to_string).collect();
                let more = if d.len() > 3 { ", ..." } else { "" };
                let label = if d.len() == 1 { "distance" } else { "distances" };
                format!(
                    "{} {} ({label} {}{more})",
                    plural(d.len(), "apple", "apples"),
                    SECTORS[*s],
                    shown.join(", ")
                )
            })
            .collect();
        parts.push(format!(
            "{} visible: {}.",
            plural(apples.len(), "apple", "apples"),
            groups.join("; ")
        ));
        let nearest: Vec<String> = apples
            .iter()
            .take(3)
            .map(|a| format!("({},{})", a.at.row, a.at.col))
            .collect();
        parts.push(format!("Nearest apples at {}.", nearest.join(", ")));
    }

    let mut agents: Vec<(&Seen, u8)> = seen
        .iter()
        .filter_map(|s| match s.entity {
            Entity::Agent(id) => Some((s, id.0)),
            _ => None,
        })
        .collect();
    agents.sort_by_key(|(s, id)| (s.distance(), *id));
    if agents.is_empty() {
        parts.push("No other agents visible.".into());
    } else {
        for (s, id) in agents.iter().take(3) {
            parts.push(format!(
                "Agent {id} is {} {} at ({},{}).",
                plural(s.distance() as usize, "cell", "cells"),
                SECTORS[sector(s.dr, s.dc)],
                s.at.row,
                s.at.col
            ));
        }
    }

    let tree = seen
        .iter()
        .filter(|s| matches!(s.entity, Entity::Grass | Entity::Apple))
        .map(Seen::distance)
        .min();
    let dead = seen.iter().any(|s| s.entity == Entity::DeadTree);
    match tree {
        Some(0) => parts.push("You stand on living tree ground.".into()),
        Some(d) => parts.push(format!(
            "Nearest living tree ground is {} away.",
            plural(d as usize, "cell", "cells")
        )),
        None => parts.push("No living tree ground visible.".into()),
    }
    if dead {
        parts.push("A dead tree is in view.".into());
    }
    trim_to_words(&parts.join(" "), SUMMARY_WORD_CAP)
}
