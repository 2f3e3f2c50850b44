use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ACT_DONE, ACT_FORWARD, ACT_LEFT, ACT_RIGHT};
use crate::numerics::{GRID_CHANNELS, GRID_SIDE};

pub const OBJ_EMPTY: u8 = 1;
pub const OBJ_WALL: u8 = 2;
pub const OBJ_BOX: u8 = 7;
pub const OBJ_GOAL: u8 = 8;
pub const OBJ_AGENT: u8 = 10;

pub const COLOR_RED: u8 = 0;
pub const COLOR_GREEN: u8 = 1;
pub const COLOR_BLUE: u8 = 2;
pub const COLOR_GREY: u8 = 5;

/// Unit moves for directions right, down, left, up (MiniGrid order).
pub const DIRS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: i32,
    pub y: i32,
    pub dir: u8,
}

impl Pose {
    pub fn random<R: Rng + ?Sized>(room: &Room, rng: &mut R) -> Self {
        Self {
            x: rng.random_range(1..=room.inner as i32),
            y: rng.random_range(1..=room.inner as i32),
            dir: rng.random_range(0..4),
        }
    }

    pub fn apply(self, action: usize, room: &Room) -> Self {
        match action {
            ACT_LEFT => Self {
                dir: (self.dir + 3) % 4,
                ..self
            },
            ACT_RIGHT => Self {
                dir: (self.dir + 1) % 4,
                ..self
            },
            ACT_FORWARD => {
                let (dx, dy) = DIRS[self.dir as usize];
                let (nx, ny) = (self.x + dx, self.y + dy);
                if room.is_floor(nx, ny) {
                    Self { x: nx, y: ny, ..self }
                } else {
                    self
                }
            }
            _ => self,
        }
    }
}

/// Square walled room; the full room is the 7x7 observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub inner: usize,
    /// Extra cells drawn on the floor: (x, y, object, color).
    pub marks: Vec<(i32, i32, u8, u8)>,
}

impl Room {
    pub fn empty() -> Self {
        Self {
            inner: GRID_SIDE - 2,
            marks: Vec::new(),
        }
    }

    pub fn is_floor(&self, x: i32, y: i32) -> bool {
        x >= 1 && y >= 1 && x <= self.inner as i32 && y <= self.inner as i32
    }

    pub fn render(&self, agent: Pose) -> Vec<u8> {
        let mut g = vec![0u8; GRID_SIDE * GRID_SIDE * GRID_CHANNELS];
        let mut put = |x: i32, y: i32, obj: u8, color: u8, state: u8| {
            let i = (y as usize * GRID_SIDE + x as usize) * GRID_CHANNELS;
            g[i] = obj;
            g[i + 1] = color;
            g[i + 2] = state;
        };
        for y in 0..GRID_SIDE as i32 {
            for x in 0..GRID_SIDE as i32 {
                if self.is_floor(x, y) {
                    put(x, y, OBJ_EMPTY, 0, 0);
                } else {
                    put(x, y, OBJ_WALL, COLOR_GREY, 0);
                }
            }
        }
        for &(x, y, obj, color) in &self.marks {
            put(x, y, obj, color, 0);
        }
        put(agent.x, agent.y, OBJ_AGENT, COLOR_RED, agent.dir);
        g
    }
}

/// Shortest-path navigation action from `pose` to cell `target` over the
/// (position, heading) state space; `done` once standing on the target.
/// Ties prefer forward, then left, then right.
pub fn nav_action(room: &Room, pose: Pose, target: (i32, i32)) -> usize {
    NavTable::new(room, target).action(room, pose)
}

/// Precomputed steps-to-target for every pose of a room.
#[derive(Debug, Clone, PartialEq)]
pub struct NavTable {
    target: (i32, i32),
    dist: Vec<u32>,
}

impl NavTable {
    pub fn new(room: &Room, target: (i32, i32)) -> Self {
        Self {
            target,
            dist: distance_table(room, target),
        }
    }

    pub fn action(&self, room: &Room, pose: Pose) -> usize {
        if (pose.x, pose.y) == self.target {
            return ACT_DONE;
        }
        let mut best = (u32::MAX, ACT_FORWARD);
        for a in [ACT_FORWARD, ACT_LEFT, ACT_RIGHT] {
            let next = pose.apply(a, room);
            if next == pose {
                continue;
            }
            let d = self.dist[state_index(room, next)];
            if d < best.0 {
                best = (d, a);
            }
        }
        best.1
    }
}

fn state_index(room: &Room, p: Pose) -> usize {
    let n = room.inner;
    (((p.y - 1) as usize * n) + (p.x - 1) as usize) * 4 + p.dir as usize
}

/// Steps-to-target for every pose, by backward breadth-first search.
fn distance_table(room: &Room, target: (i32, i32)) -> Vec<u32> {
    let n = room.inner;
    let mut dist = vec![u32::MAX; n * n * 4];
    let mut queue = VecDeque::new();
    for dir in 0..4 {
        let p = Pose {
            x: target.0,
            y: target.1,
            dir,
        };
        dist[state_index(room, p)] = 0;
        queue.push_back(p);
    }
    let all: Vec<Pose> = (1..=n as i32)
        .flat_map(|y| (1..=n as i32).flat_map(move |x| (0..4).map(move |dir| Pose { x, y, dir })))
        .collect();
    while let Some(p) = queue.pop_front() {
        let d = dist[state_index(room, p)];
        // predecessors: any pose q with q.apply(a) == p
        for &q in &all {
            let qi = state_index(room, q);
            if dist[qi] != u32::MAX {
                continue;
            }
            if [ACT_FORWARD, ACT_LEFT, ACT_RIGHT].iter().any(|&a| q.apply(a, room) == p && q != p) {
                dist[qi] = d + 1;
                queue.push_back(q);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oracle_reaches_target_from_every_pose() {
        let room = Room::empty();
        let target = (5, 5);
        for y in 1..=5 {
            for x in 1..=5 {
                for dir in 0..4 {
                    let mut p = Pose { x, y, dir };
                    let mut steps = 0;
                    while nav_action(&room, p, target) != ACT_DONE {
                        p = p.apply(nav_action(&room, p, target), &room);
                        steps += 1;
                        assert!(steps <= 12);
                    }
                }
            }
        }
    }

    #[test]
    fn walls_block_forward() {
        let room = Room::empty();
        let p = Pose { x: 5, y: 3, dir: 0 };
        assert_eq!(p.apply(ACT_FORWARD, &room), p);
    }

    #[test]
    fn render_marks_agent_and_walls() {
        let room = Room::empty();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Pose::random(&room, &mut rng);
        let g = room.render(p);
        let at = |x: usize, y: usize| (y * GRID_SIDE + x) * GRID_CHANNELS;
        assert_eq!(g[at(0, 0)], OBJ_WALL);
        assert_eq!(g[at(p.x as usize, p.y as usize)], OBJ_AGENT);
        assert_eq!(g[at(p.x as usize, p.y as usize) + 2], p.dir);
    }
}
