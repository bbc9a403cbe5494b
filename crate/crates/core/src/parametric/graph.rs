//! Boykov-Kolmogorov max-flow on integer capacities.
//!
//! Search trees grow from both terminals, are reused across augmentations,
//! and are repaired by orphan adoption. After `maxflow` the nodes left in the
//! source tree are exactly the nodes reachable from the source in the residual
//! graph, i.e. the source side of the minimal minimum cut.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;
const INFINITE_D: u32 = u32::MAX;

#[derive(Clone)]
struct Node {
    first: u32,
    parent: u32,
    ts: u64,
    dist: u32,
    is_sink: bool,
    active: bool,
    /// Residual to the source if positive, to the sink if negative.
    tr_cap: i64,
}

#[derive(Clone)]
struct Arc {
    head: u32,
    next: u32,
    r_cap: i64,
}

#[derive(Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: i64,
    time: u64,
    queue: VecDeque<u32>,
    orphans: VecDeque<u32>,
}

#[inline]
fn sister(a: u32) -> u32 {
    a ^ 1
}

impl Graph {
    pub fn new(node_count: usize, arc_hint: usize) -> Self {
        Graph {
            nodes: vec![
                Node {
                    first: NONE,
                    parent: NONE,
                    ts: 0,
                    dist: 0,
                    is_sink: false,
                    active: false,
                    tr_cap: 0,
                };
                node_count
            ],
            arcs: Vec::with_capacity(2 * arc_hint),
            flow: 0,
            time: 0,
            queue: VecDeque::new(),
            orphans: VecDeque::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Adds terminal capacities; the trivially saturated part counts as flow.
    pub fn add_tweights(&mut self, i: usize, cap_source: i64, cap_sink: i64) {
        debug_assert!(cap_source >= 0 && cap_sink >= 0);
        let (mut cs, mut ck) = (cap_source, cap_sink);
        let delta = self.nodes[i].tr_cap;
        if delta > 0 {
            cs += delta;
        } else {
            ck -= delta;
        }
        self.flow += cs.min(ck);
        self.nodes[i].tr_cap = cs - ck;
    }

    pub fn add_edge(&mut self, i: usize, j: usize, cap: i64, rev_cap: i64) {
        debug_assert!(i != j && cap >= 0 && rev_cap >= 0);
        let a = self.arcs.len() as u32;
        self.arcs.push(Arc {
            head: j as u32,
            next: self.nodes[i].first,
            r_cap: cap,
        });
        self.arcs.push(Arc {
            head: i as u32,
            next: self.nodes[j].first,
            r_cap: rev_cap,
        });
        self.nodes[i].first = a;
        self.nodes[j].first = a + 1;
    }

    fn set_active(&mut self, i: u32) {
        let n = &mut self.nodes[i as usize];
        if !n.active {
            n.active = true;
            self.queue.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<u32> {
        while let Some(i) = self.queue.pop_front() {
            let n = &mut self.nodes[i as usize];
            n.active = false;
            if n.parent != NONE {
                return Some(i);
            }
        }
        None
    }

    fn set_orphan_front(&mut self, i: u32) {
        self.nodes[i as usize].parent = ORPHAN;
        self.orphans.push_front(i);
    }

    fn set_orphan_rear(&mut self, i: u32) {
        self.nodes[i as usize].parent = ORPHAN;
        self.orphans.push_back(i);
    }

    /// Runs to completion and returns the total flow, including the
    /// terminal capacities saturated at construction.
    pub fn maxflow(&mut self) -> i64 {
        self.queue.clear();
        self.orphans.clear();
        self.time = 0;
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            n.active = false;
            n.ts = 0;
            if n.tr_cap > 0 {
                n.is_sink = false;
                n.parent = TERMINAL;
                n.dist = 1;
            } else if n.tr_cap < 0 {
                n.is_sink = true;
                n.parent = TERMINAL;
                n.dist = 1;
            } else {
                n.parent = NONE;
            }
            if n.parent == TERMINAL {
                self.set_active(i as u32);
            }
        }

        let mut current: Option<u32> = None;
        loop {
            let i = match current.take() {
                Some(i) => {
                    self.nodes[i as usize].active = false;
                    if self.nodes[i as usize].parent == NONE {
                        match self.next_active() {
                            Some(j) => j,
                            None => break,
                        }
                    } else {
                        i
                    }
                }
                None => match self.next_active() {
                    Some(j) => j,
                    None => break,
                },
            };

            let middle = self.grow(i);
            self.time += 1;
            if let Some(a) = middle {
                // keep i current so it is processed again
                self.nodes[i as usize].active = true;
                current = Some(i);
                self.augment(a);
                self.adopt_orphans();
            }
        }
        self.flow
    }

    /// Returns an arc from a source-tree node to a sink-tree node, if found.
    fn grow(&mut self, i: u32) -> Option<u32> {
        let iu = i as usize;
        let (i_ts, i_dist, i_sink) = {
            let n = &self.nodes[iu];
            (n.ts, n.dist, n.is_sink)
        };
        let mut a = self.nodes[iu].first;
        while a != NONE {
            let arc_next = self.arcs[a as usize].next;
            let residual = if i_sink {
                self.arcs[sister(a) as usize].r_cap
            } else {
                self.arcs[a as usize].r_cap
            };
            if residual > 0 {
                let j = self.arcs[a as usize].head;
                let ju = j as usize;
                if self.nodes[ju].parent == NONE {
                    let nj = &mut self.nodes[ju];
                    nj.is_sink = i_sink;
                    nj.parent = sister(a);
                    nj.ts = i_ts;
                    nj.dist = i_dist + 1;
                    self.set_active(j);
                } else if self.nodes[ju].is_sink != i_sink {
                    return Some(if i_sink { sister(a) } else { a });
                } else if self.nodes[ju].ts <= i_ts && self.nodes[ju].dist > i_dist {
                    let nj = &mut self.nodes[ju];
                    nj.parent = sister(a);
                    nj.ts = i_ts;
                    nj.dist = i_dist + 1;
                }
            }
            a = arc_next;
        }
        None
    }

    fn augment(&mut self, middle: u32) {
        let mut bottleneck = self.arcs[middle as usize].r_cap;
        // source side
        let mut i = self.arcs[sister(middle) as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[sister(a) as usize].r_cap);
            i = self.arcs[a as usize].head;
        }
        bottleneck = bottleneck.min(self.nodes[i as usize].tr_cap);
        // sink side
        let mut i = self.arcs[middle as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a as usize].r_cap);
            i = self.arcs[a as usize].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i as usize].tr_cap);

        self.arcs[sister(middle) as usize].r_cap += bottleneck;
        self.arcs[middle as usize].r_cap -= bottleneck;

        let mut i = self.arcs[sister(middle) as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[a as usize].r_cap += bottleneck;
            self.arcs[sister(a) as usize].r_cap -= bottleneck;
            if self.arcs[sister(a) as usize].r_cap == 0 {
                self.set_orphan_front(i);
            }
            i = self.arcs[a as usize].head;
        }
        self.nodes[i as usize].tr_cap -= bottleneck;
        if self.nodes[i as usize].tr_cap == 0 {
            self.set_orphan_front(i);
        }

        let mut i = self.arcs[middle as usize].head;
        loop {
            let a = self.nodes[i as usize].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[sister(a) as usize].r_cap += bottleneck;
            self.arcs[a as usize].r_cap -= bottleneck;
            if self.arcs[a as usize].r_cap == 0 {
                self.set_orphan_front(i);
            }
            i = self.arcs[a as usize].head;
        }
        self.nodes[i as usize].tr_cap += bottleneck;
        if self.nodes[i as usize].tr_cap == 0 {
            self.set_orphan_front(i);
        }

        self.flow += bottleneck;
    }

    fn adopt_orphans(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.process_orphan(i);
        }
    }

    fn process_orphan(&mut self, i: u32) {
        let iu = i as usize;
        let sink_side = self.nodes[iu].is_sink;
        let mut a0_min = NONE;
        let mut d_min = INFINITE_D;

        let mut a0 = self.nodes[iu].first;
        while a0 != NONE {
            // the arc must carry residual toward i's tree root
            let residual = if sink_side {
                self.arcs[a0 as usize].r_cap
            } else {
                self.arcs[sister(a0) as usize].r_cap
            };
            if residual > 0 {
                let mut j = self.arcs[a0 as usize].head;
                if self.nodes[j as usize].is_sink == sink_side
                    && self.nodes[j as usize].parent != NONE
                {
                    let mut d: u32 = 0;
                    loop {
                        let nj = &self.nodes[j as usize];
                        if nj.ts == self.time {
                            d = d.saturating_add(nj.dist);
                            break;
                        }
                        let a = nj.parent;
                        d += 1;
                        if a == TERMINAL {
                            let nj = &mut self.nodes[j as usize];
                            nj.ts = self.time;
                            nj.dist = 1;
                            break;
                        }
                        if a == ORPHAN {
                            d = INFINITE_D;
                            break;
                        }
                        j = self.arcs[a as usize].head;
                    }
                    if d < INFINITE_D {
                        if d < d_min {
                            a0_min = a0;
                            d_min = d;
                        }
                        let mut j = self.arcs[a0 as usize].head;
                        while self.nodes[j as usize].ts != self.time {
                            let nj = &mut self.nodes[j as usize];
                            nj.ts = self.time;
                            nj.dist = d;
                            d -= 1;
                            j = self.arcs[nj.parent as usize].head;
                        }
                    }
                }
            }
            a0 = self.arcs[a0 as usize].next;
        }

        if a0_min != NONE {
            let n = &mut self.nodes[iu];
            n.parent = a0_min;
            n.ts = self.time;
            n.dist = d_min + 1;
            return;
        }

        // no new parent: i becomes free and its children become orphans
        self.nodes[iu].parent = NONE;
        let mut a0 = self.nodes[iu].first;
        while a0 != NONE {
            let j = self.arcs[a0 as usize].head;
            let nj = &self.nodes[j as usize];
            if nj.is_sink == sink_side && nj.parent != NONE {
                let a = nj.parent;
                let residual = if sink_side {
                    self.arcs[a0 as usize].r_cap
                } else {
                    self.arcs[sister(a0) as usize].r_cap
                };
                if residual > 0 {
                    self.set_active(j);
                }
                if a != TERMINAL && a != ORPHAN && self.arcs[a as usize].head == i {
                    self.set_orphan_rear(j);
                }
            }
            a0 = self.arcs[a0 as usize].next;
        }
    }

    /// True if node `i` is on the source side of the minimal min cut.
    pub fn in_source_set(&self, i: usize) -> bool {
        let n = &self.nodes[i];
        n.parent != NONE && !n.is_sink
    }
}
