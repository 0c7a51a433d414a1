use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::Pos;
use super::WorldError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TreeId(pub u8);

impl std::fmt::Display for TreeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "tree {}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub id: u8,
    pub cells: Vec<Pos>,
}

fn default_horizon() -> u64 {
    250
}
fn default_regrowth() -> f64 {
    0.005
}
fn default_beam() -> u32 {
    3
}
fn default_freeze() -> u64 {
    25
}
fn default_view() -> u32 {
    11
}

/// On-disk map and world-parameter description (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub width: i32,
    pub height: i32,
    #[serde(default)]
    pub walls: Vec<Pos>,
    pub trees: Vec<TreeConfig>,
    pub spawns: Vec<Pos>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_regrowth")]
    pub regrowth_rate: f64,
    #[serde(default = "default_beam")]
    pub beam_length: u32,
    #[serde(default = "default_freeze")]
    pub freeze_duration: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_view")]
    pub view_width: u32,
    #[serde(default = "default_view")]
    pub view_height: u32,
}

impl WorldConfig {
    /// 24x18 open field with six trees of capacities 12,12,12,12,8,8 (64
    /// apples) and eight spawn cells on the perimeter.
    pub fn default_map() -> Self {
        let block = |r0: i32, c0: i32, rows: i32, cols: i32| {
            let mut cells = Vec::new();
            for r in r0..r0 + rows {
                for c in c0..c0 + cols {
                    cells.push(Pos::new(r, c));
                }
            }
            cells
        };
        let trees = vec![
            TreeConfig {
                id: 0,
                cells: block(3, 3, 3, 4),
            },
            TreeConfig {
                id: 1,
                cells: block(3, 10, 3, 4),
            },
            TreeConfig {
                id: 2,
                cells: block(3, 17, 3, 4),
            },
            TreeConfig {
                id: 3,
                cells: block(12, 3, 3, 4),
            },
            TreeConfig {
                id: 4,
                cells: block(12, 10, 2, 4),
            },
            TreeConfig {
                id: 5,
                cells: block(12, 17, 2, 4),
            },
        ];
        let spawns = [(0, 1), (0, 22), (17, 1), (17, 22), (0, 11), (17, 12), (8, 0), (9, 23)]
            .into_iter()
            .map(|(r, c)| Pos::new(r, c))
            .collect();
        Self {
            width: 24,
            height: 18,
            walls: Vec::new(),
            trees,
            spawns,
            horizon: default_horizon(),
            regrowth_rate: default_regrowth(),
            beam_length: default_beam(),
            freeze_duration: default_freeze(),
            seed: 0,
            view_width: default_view(),
            view_height: default_view(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, WorldError> {
        let cfg: WorldConfig = toml::from_str(s).map_err(|e| WorldError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorldError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("world config is always serializable")
    }

    pub fn capacity(&self) -> usize {
        self.trees.iter().map(|t| t.cells.len()).sum()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let invalid = |field: String, reason: &str| WorldError::Invalid {
            field,
            reason: reason.to_string(),
        };
        if self.width <= 0 {
            return Err(invalid("width".into(), "must be positive"));
        }
        if self.height <= 0 {
            return Err(invalid("height".into(), "must be positive"));
        }
        let in_bounds = |p: &Pos| p.row >= 0 && p.col >= 0 && p.row < self.height && p.col < self.width;
        let walls: BTreeSet<Pos> = self.walls.iter().copied().collect();
        for (i, w) in self.walls.iter().enumerate() {
            if !in_bounds(w) {
                return Err(invalid(format!("walls[{i}]"), "outside map bounds"));
            }
        }
        if self.trees.is_empty() {
            return Err(invalid("trees".into(), "at least one tree is required"));
        }
        if self.trees.len() > u8::MAX as usize {
            return Err(invalid("trees".into(), "too many trees"));
        }
        let mut owner: BTreeMap<Pos, u8> = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for (i, tree) in self.trees.iter().enumerate() {
            if !ids.insert(tree.id) {
                return Err(invalid(format!("trees[{i}].id"), "duplicate tree id"));
            }
            if tree.cells.is_empty() {
                return Err(invalid(format!("trees[{i}].cells"), "tree has no cells"));
            }
            for (j, c) in tree.cells.iter().enumerate() {
                let field = format!("trees[{i}].cells[{j}]");
                if !in_bounds(c) {
                    return Err(invalid(field, "outside map bounds"));
                }
                if walls.contains(c) {
                    return Err(invalid(field, "overlaps a wall"));
                }
                if let Some(other) = owner.insert(*c, tree.id) {
                    if other != tree.id {
                        return Err(invalid(field, "tree zones overlap"));
                    }
                    return Err(invalid(field, "duplicate cell"));
                }
            }
        }
        if self.spawns.is_empty() {
            return Err(invalid("spawns".into(), "at least one spawn is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, s) in self.spawns.iter().enumerate() {
            let field = format!("spawns[{i}]");
            if !in_bounds(s) {
                return Err(invalid(field, "outside map bounds"));
            }
            if walls.contains(s) {
                return Err(invalid(field, "on a wall"));
            }
            if owner.contains_key(s) {
                return Err(invalid(field, "on a tree cell"));
            }
            if !seen.insert(*s) {
                return Err(invalid(field, "duplicate spawn"));
            }
        }
        if self.horizon == 0 {
            return Err(invalid("horizon".into(), "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.regrowth_rate) {
            return Err(invalid("regrowth_rate".into(), "must lie in [0, 1]"));
        }
        if self.view_width == 0 || self.view_height == 0 {
            return Err(invalid("view_width".into(), "view must be non-empty"));
        }
        Ok(())
    }
}

/// A tree: a set of apple cells that regrow while the tree is alive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeZone {
    pub id: TreeId,
    /// Row-major sorted.
    pub cells: Vec<Pos>,
    pub alive: bool,
    pub apples: BTreeSet<Pos>,
}

impl TreeZone {
    pub fn capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn apple_count(&self) -> usize {
        self.apples.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    pub width: i32,
    pub height: i32,
    pub walls: BTreeSet<Pos>,
    /// Ordered by tree id.
    pub tree_zones: Vec<TreeZone>,
    pub spawns: Vec<Pos>,
    wall_mask: Vec<bool>,
    cell_tree: Vec<Option<usize>>,
}

impl GridMap {
    pub(crate) fn from_config(cfg: &WorldConfig) -> Self {
        let mut trees: Vec<TreeZone> = cfg
            .trees
            .iter()
            .map(|t| {
                let mut cells = t.cells.clone();
                cells.sort();
                TreeZone {
                    id: TreeId(t.id),
                    apples: cells.iter().copied().collect(),
                    cells,
                    alive: true,
                }
            })
            .collect();
        trees.sort_by_key(|t| t.id);
        let n = (cfg.width * cfg.height) as usize;
        let mut map = GridMap {
            width: cfg.width,
            height: cfg.height,
            walls: cfg.walls.iter().copied().collect(),
            tree_zones: trees,
            spawns: cfg.spawns.clone(),
            wall_mask: vec![false; n],
            cell_tree: vec![None; n],
        };
        for w in &cfg.walls {
            let i = map.index(*w).expect("validated");
            map.wall_mask[i] = true;
        }
        for (ti, tree) in map.tree_zones.iter().enumerate() {
            for c in &tree.cells {
                let i = (c.row * cfg.width + c.col) as usize;
                map.cell_tree[i] = Some(ti);
            }
        }
        map
    }

    fn index(&self, p: Pos) -> Option<usize> {
        self.in_bounds(p).then(|| (p.row * self.width + p.col) as usize)
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.row >= 0 && p.col >= 0 && p.row < self.height && p.col < self.width
    }

    /// In bounds and not a wall.
    pub fn walkable(&self, p: Pos) -> bool {
        self.index(p).is_some_and(|i| !self.wall_mask[i])
    }

    /// Index into `tree_zones` of the tree owning `p`.
    pub fn tree_index_at(&self, p: Pos) -> Option<usize> {
        self.index(p).and_then(|i| self.cell_tree[i])
    }

    pub fn tree(&self, id: TreeId) -> Option<&TreeZone> {
        self.tree_zones.iter().find(|t| t.id == id)
    }

    pub fn has_apple(&self, p: Pos) -> bool {
        self.tree_index_at(p)
            .is_some_and(|ti| self.tree_zones[ti].apples.contains(&p))
    }

    pub fn total_apples(&self) -> usize {
        self.tree_zones.iter().map(|t| t.apples.len()).sum()
    }

    pub fn capacity(&self) -> usize {
        self.tree_zones.iter().map(|t| t.cells.len()).sum()
    }

    pub fn alive_trees(&self) -> usize {
        self.tree_zones.iter().filter(|t| t.alive).count()
    }

    /// Every apple on the map, ordered by tree id then row-major cell.
    pub fn apples(&self) -> impl Iterator<Item = (TreeId, Pos)> + '_ {
        self.tree_zones
            .iter()
            .flat_map(|t| t.apples.iter().map(move |p| (t.id, *p)))
    }
}
