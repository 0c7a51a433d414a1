use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::world::{AgentId, Entity, ObservationWindow};

/// Character grid of an observation window, one char per cell, with a legend
/// covering every character used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsciiView {
    pub rows: Vec<String>,
    pub legend: BTreeMap<char, String>,
}

pub fn entity_char(e: Entity) -> char {
    match e {
        Entity::Wall => '#',
        Entity::Empty => '.',
        Entity::Grass => ',',
        Entity::Apple => 'A',
        Entity::DeadTree => '*',
        Entity::SelfAgent => '@',
        Entity::Agent(AgentId(id)) => char::from_digit(u32::from(id), 10).unwrap_or('?'),
    }
}

pub fn char_entity(c: char) -> Option<Entity> {
    Some(match c {
        '#' => Entity::Wall,
        '.' => Entity::Empty,
        ',' => Entity::Grass,
        'A' => Entity::Apple,
        '*' => Entity::DeadTree,
        '@' => Entity::SelfAgent,
        d => Entity::Agent(AgentId(d.to_digit(10)? as u8)),
    })
}

fn describe(c: char) -> String {
    match c {
        '#' => "wall or outside the map".into(),
        '.' => "empty ground".into(),
        ',' => "grass of a living tree (no apple)".into(),
        'A' => "apple".into(),
        '*' => "dead tree".into(),
        '@' => "you".into(),
        d => format!("agent {d}"),
    }
}

pub fn serialize_ascii(obs: &ObservationWindow) -> AsciiView {
    let rows: Vec<String> = obs
        .window
        .iter()
        .map(|row| row.iter().map(|e| entity_char(*e)).collect())
        .collect();
    let legend = rows.iter().flat_map(|r| r.chars()).map(|c| (c, describe(c))).collect();
    AsciiView { rows, legend }
}

impl AsciiView {
    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.chars().count())
    }

    /// Window position of the observer: centre of the bottom row.
    pub fn self_cell(&self) -> (usize, usize) {
        (self.height().saturating_sub(1), self.width() / 2)
    }

    pub fn decode(&self) -> Vec<Vec<Option<Entity>>> {
        self.rows.iter().map(|r| r.chars().map(char_entity).collect()).collect()
    }

    /// Grid followed by the legend, as shown to the model.
    pub fn render(&self) -> String {
        let mut s = self.rows.join("\n");
        s.push_str("\nLegend: ");
        let items: Vec<String> = self.legend.iter().map(|(c, d)| format!("'{c}' {d}")).collect();
        s.push_str(&items.join(", "));
        s
    }
}
