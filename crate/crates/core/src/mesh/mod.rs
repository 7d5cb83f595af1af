//! 2D mesh of dimension-ordered routers.
//!
//! Each router has five inputs with one FIFO per vnet. A cell that lands at a
//! router input becomes eligible `router_pipeline_depth` cycles later, which
//! covers route compute, vnet allocation, switch allocation and traversal.
//! Switch allocation is separable, input first: every input nominates its
//! control head if it can go, otherwise its data head; every output then
//! grants control before data, round-robin per (output, vnet).
//!
//! With finite buffers each (output, vnet) keeps a credit counter for the
//! downstream FIFO. Credits return one link traversal after the downstream
//! router dequeues the cell. The local output feeds the ejection edge, which
//! never blocks, and needs no credits.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::arbiter::rr_arbiter;
use crate::config::RunConfig;
use crate::edge::Cell;
use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Direction {
    Local = 0,
    /// Toward y - 1.
    North = 1,
    /// Toward x + 1.
    East = 2,
    /// Toward y + 1.
    South = 3,
    /// Toward x - 1.
    West = 4,
}

impl Direction {
    pub const ALL: [Direction; 5] = [
        Direction::Local,
        Direction::North,
        Direction::East,
        Direction::South,
        Direction::West,
    ];

    pub fn from_index(i: usize) -> Direction {
        Self::ALL[i]
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Local => Direction::Local,
            Direction::North => Direction::South,
            Direction::East => Direction::West,
            Direction::South => Direction::North,
            Direction::West => Direction::East,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// X-first dimension-ordered route from `cur` to `dst`, both `(x, y)`.
pub fn dor_route(cur: (usize, usize), dst: (usize, usize)) -> Direction {
    if dst.0 > cur.0 {
        Direction::East
    } else if dst.0 < cur.0 {
        Direction::West
    } else if dst.1 > cur.1 {
        Direction::South
    } else if dst.1 < cur.1 {
        Direction::North
    } else {
        Direction::Local
    }
}

/// Who gets a returned credit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CreditTarget {
    /// The ingress edge feeding a router's local input.
    Edge { port: u32, vnet: u8 },
    /// A router output toward the returning router.
    Router { router: u32, out: u8, vnet: u8 },
}

#[derive(Debug, Clone)]
pub struct Router {
    pub x: usize,
    pub y: usize,
    inputs: [[VecDeque<Cell>; 2]; 5],
    credits: [[u32; 2]; 5],
    sa_ptr: [[usize; 2]; 5],
    peak: usize,
}

impl Router {
    fn new(x: usize, y: usize, depth: u32) -> Self {
        Router {
            x,
            y,
            inputs: Default::default(),
            credits: [[depth; 2]; 5],
            sa_ptr: [[0; 2]; 5],
            peak: 0,
        }
    }

    pub fn input_len(&self, dir: Direction, vnet: u8) -> usize {
        self.inputs[dir as usize][vnet as usize].len()
    }

    pub fn credits(&self, out: Direction, vnet: u8) -> u32 {
        self.credits[out as usize][vnet as usize]
    }

    fn len(&self) -> usize {
        self.inputs.iter().flatten().map(VecDeque::len).sum()
    }
}

/// A cell leaving a router this cycle.
#[derive(Debug, Clone)]
struct Move {
    router: usize,
    out: Direction,
    cell: Cell,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    rows: usize,
    cols: usize,
    pipeline: u64,
    link: u64,
    vnets: u8,
    buffer: Option<usize>,
    routers: Vec<Router>,
    returns: VecDeque<(u64, CreditTarget)>,
    moves: Vec<Move>,
}

impl Mesh {
    pub fn new(run: &RunConfig) -> Self {
        let (rows, cols) = run.mesh_dims;
        let buffer = run.buffer_depth.limit();
        let routers = (0..rows * cols)
            .map(|r| Router::new(r % cols, r / cols, buffer.unwrap_or(0) as u32))
            .collect();
        Mesh {
            rows,
            cols,
            pipeline: run.router_pipeline_depth as u64,
            link: run.link_cycles(),
            vnets: run.vnets,
            buffer,
            routers,
            returns: VecDeque::new(),
            moves: Vec::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn router(&self, r: usize) -> &Router {
        &self.routers[r]
    }

    fn coords(&self, port: usize) -> (usize, usize) {
        (port % self.cols, port / self.cols)
    }

    /// Router reached by leaving `r` through `dir`, if inside the mesh.
    pub fn neighbor(&self, r: usize, dir: Direction) -> Option<usize> {
        let (x, y) = self.coords(r);
        match dir {
            Direction::Local => None,
            Direction::North => (y > 0).then(|| r - self.cols),
            Direction::South => (y + 1 < self.rows).then(|| r + self.cols),
            Direction::East => (x + 1 < self.cols).then(|| r + 1),
            Direction::West => (x > 0).then(|| r - 1),
        }
    }

    /// Directed links: ingress and egress per port plus inter-router links.
    pub fn link_count(&self) -> usize {
        let inner = 2 * (self.rows * (self.cols - 1) + self.cols * (self.rows - 1));
        2 * self.routers.len() + inner
    }

    /// Place a cell launched by the ingress edge of `port` at `now` into the
    /// router's local input, where it lands one link traversal later.
    pub fn inject(&mut self, port: usize, cell: Cell, now: u64) -> Result<(), SimError> {
        self.arrive(port, Direction::Local, cell, now)
    }

    fn arrive(&mut self, r: usize, input: Direction, mut cell: Cell, now: u64) -> Result<(), SimError> {
        let dst = self.coords(cell.dst_port as usize);
        let router = &mut self.routers[r];
        cell.transit.ready_at = now + self.link + self.pipeline;
        cell.transit.routers += 1;
        cell.transit.route = dor_route((router.x, router.y), dst) as u8;
        let vnet = cell.vnet as usize;
        if vnet >= self.vnets as usize {
            return Err(SimError::Invariant(format!("cell on vnet {vnet} in a {}-vnet mesh", self.vnets)));
        }
        let fifo = &mut router.inputs[input as usize][vnet];
        fifo.push_back(cell);
        if let Some(depth) = self.buffer {
            if fifo.len() > depth {
                return Err(SimError::Credit(format!(
                    "router {r} input {input} vnet {vnet} holds {} cells, depth {depth}",
                    fifo.len()
                )));
            }
        }
        router.peak = router.peak.max(router.len());
        Ok(())
    }

    /// Apply credit returns arriving by `now`. Credits for ingress edges are
    /// handed back as `(port, vnet)`.
    pub fn land_credits(&mut self, now: u64, edges: &mut Vec<(u32, u8)>) -> Result<(), SimError> {
        while self.returns.front().is_some_and(|r| r.0 <= now) {
            let (_, target) = self.returns.pop_front().expect("front exists");
            match target {
                CreditTarget::Edge { port, vnet } => edges.push((port, vnet)),
                CreditTarget::Router { router, out, vnet } => {
                    let depth = self.buffer.unwrap_or(0) as u32;
                    let c = &mut self.routers[router as usize].credits[out as usize][vnet as usize];
                    *c += 1;
                    if *c > depth {
                        return Err(SimError::Credit(format!(
                            "router {router} output {} vnet {vnet} credit {c} exceeds depth {depth}",
                            Direction::from_index(out as usize)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Allocate and traverse every router for one cycle. Cells leaving
    /// through a local output are appended to `ejected`; they reach the
    /// egress edge one link traversal later. Returns the number of link
    /// launches, ejections included.
    pub fn cycle(&mut self, now: u64, ejected: &mut Vec<Cell>) -> Result<usize, SimError> {
        let credited = self.buffer.is_some();
        let vnets = self.vnets as usize;
        let mut moves = std::mem::take(&mut self.moves);
        moves.clear();
        for r in 0..self.routers.len() {
            let router = &mut self.routers[r];
            let mut nominee: [Option<(usize, usize)>; 5] = [None; 5];
            for (input, fifos) in router.inputs.iter().enumerate() {
                for (vnet, fifo) in fifos.iter().enumerate().take(vnets) {
                    let Some(head) = fifo.front() else { continue };
                    if head.transit.ready_at > now {
                        continue;
                    }
                    let out = head.transit.route as usize;
                    if credited && out != Direction::Local as usize && router.credits[out][vnet] == 0 {
                        continue;
                    }
                    nominee[input] = Some((out, vnet));
                    break;
                }
            }
            for out in 0..5 {
                for vnet in 0..vnets {
                    let mut requests = 0u64;
                    for (input, n) in nominee.iter().enumerate() {
                        if *n == Some((out, vnet)) {
                            requests |= 1 << input;
                        }
                    }
                    let Some((input, next)) = rr_arbiter(requests, 5, router.sa_ptr[out][vnet]) else {
                        continue;
                    };
                    router.sa_ptr[out][vnet] = next;
                    let mut cell = router.inputs[input][vnet].pop_front().expect("nominated head exists");
                    cell.transit.q_fabric += (now - cell.transit.ready_at) as u32;
                    if credited && out != Direction::Local as usize {
                        router.credits[out][vnet] -= 1;
                    }
                    if credited {
                        let target = if input == Direction::Local as usize {
                            CreditTarget::Edge {
                                port: r as u32,
                                vnet: vnet as u8,
                            }
                        } else {
                            let dir = Direction::from_index(input);
                            let up = match dir {
                                Direction::North => r - self.cols,
                                Direction::South => r + self.cols,
                                Direction::East => r + 1,
                                Direction::West => r - 1,
                                Direction::Local => unreachable!(),
                            };
                            CreditTarget::Router {
                                router: up as u32,
                                out: dir.opposite() as u8,
                                vnet: vnet as u8,
                            }
                        };
                        self.returns.push_back((now + self.link, target));
                    }
                    moves.push(Move {
                        router: r,
                        out: Direction::from_index(out),
                        cell,
                    });
                    break;
                }
            }
        }
        let launches = moves.len();
        for m in moves.drain(..) {
            if m.out == Direction::Local {
                if m.cell.dst_port as usize != m.router {
                    return Err(SimError::Routing(format!(
                        "cell for port {} ejected at router {}",
                        m.cell.dst_port, m.router
                    )));
                }
                ejected.push(m.cell);
                continue;
            }
            let next = self.neighbor(m.router, m.out).ok_or_else(|| {
                SimError::Routing(format!("router {} routed {} off the mesh edge", m.router, m.out))
            })?;
            self.arrive(next, m.out.opposite(), m.cell, now)?;
        }
        self.moves = moves;
        Ok(launches)
    }

    pub fn len(&self) -> usize {
        self.routers.iter().map(Router::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn peak(&self) -> usize {
        self.routers.iter().map(|r| r.peak).max().unwrap_or(0)
    }

    /// Cells waiting in the local input of `port` on `vnet`.
    pub fn local_occupancy(&self, port: usize, vnet: u8) -> usize {
        self.routers[port].input_len(Direction::Local, vnet)
    }

    /// Credits in flight toward each target.
    pub fn returns_in_flight(&self) -> HashMap<CreditTarget, usize> {
        let mut counts = HashMap::new();
        for (_, t) in &self.returns {
            *counts.entry(*t).or_insert(0) += 1;
        }
        counts
    }

    /// Check `credits + downstream occupancy + returns in flight = depth` on
    /// every router-to-router channel.
    pub fn audit_credits(&self, in_flight: &HashMap<CreditTarget, usize>) -> Result<(), SimError> {
        let Some(depth) = self.buffer else {
            return Ok(());
        };
        for r in 0..self.routers.len() {
            for dir in &Direction::ALL[1..] {
                let Some(down) = self.neighbor(r, *dir) else { continue };
                for vnet in 0..self.vnets {
                    let credits = self.routers[r].credits(*dir, vnet) as usize;
                    let held = self.routers[down].input_len(dir.opposite(), vnet);
                    let returning = in_flight
                        .get(&CreditTarget::Router {
                            router: r as u32,
                            out: *dir as u8,
                            vnet,
                        })
                        .copied()
                        .unwrap_or(0);
                    if credits + held + returning != depth {
                        return Err(SimError::Credit(format!(
                            "router {r} output {dir} vnet {vnet}: {credits} credits + {held} held + {returning} returning != {depth}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The router holding the oldest cell, with that cell's creation cycle.
    pub fn oldest(&self) -> Option<(u64, String)> {
        let mut best: Option<(u64, String)> = None;
        for (r, router) in self.routers.iter().enumerate() {
            for (input, fifos) in router.inputs.iter().enumerate() {
                for (vnet, fifo) in fifos.iter().enumerate() {
                    for cell in fifo {
                        if best.as_ref().is_none_or(|b| cell.created_at < b.0) {
                            best = Some((
                                cell.created_at,
                                format!(
                                    "mesh router {r} ({}, {}) input {} vnet {vnet}",
                                    router.x,
                                    router.y,
                                    Direction::from_index(input)
                                ),
                            ));
                        }
                    }
                }
            }
        }
        best
    }
}

/// Mean routers visited by uniform traffic on a `rows x cols` mesh, counting
/// pairs with equal source and destination.
pub fn mean_routers_uniform(rows: usize, cols: usize) -> f64 {
    let mean_gap = |k: usize| (k * k - 1) as f64 / (3 * k) as f64;
    1.0 + mean_gap(rows) + mean_gap(cols)
}
