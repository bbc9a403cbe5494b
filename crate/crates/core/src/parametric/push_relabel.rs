//! Push-relabel min cut that returns the minimal source set.
//!
//! The network is solved reversed: sink capacities become initial excess and
//! source capacities become arcs into the reversed sink. After the first
//! (maximum preflow) phase, the nodes that can still reach the reversed sink
//! in the residual graph are exactly the source side of the minimal minimum
//! cut of the original network, so no second phase is needed.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;

#[derive(Clone)]
pub struct CutNetwork {
    first: Vec<u32>,
    head: Vec<u32>,
    next: Vec<u32>,
    /// Residual capacity of each arc in the reversed network.
    res: Vec<i64>,
    /// Residual capacity toward the reversed sink (the original source).
    to_sink: Vec<i64>,
    excess: Vec<i64>,
    label: Vec<u32>,
    current: Vec<u32>,
    /// Flow already routed straight through the terminals.
    flow: i64,
    /// Arcs grouped by tail, built by `maxflow`.
    start: Vec<u32>,
    csr_head: Vec<u32>,
    sister: Vec<u32>,
    csr_res: Vec<i64>,
}

impl CutNetwork {
    pub fn new(node_count: usize, arc_hint: usize) -> Self {
        CutNetwork {
            first: vec![NONE; node_count],
            head: Vec::with_capacity(2 * arc_hint),
            next: Vec::with_capacity(2 * arc_hint),
            res: Vec::with_capacity(2 * arc_hint),
            to_sink: vec![0; node_count],
            excess: vec![0; node_count],
            label: vec![0; node_count],
            current: vec![0; node_count],
            flow: 0,
            start: Vec::new(),
            csr_head: Vec::new(),
            sister: Vec::new(),
            csr_res: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.first.len()
    }

    /// Adds terminal capacities of the original network.
    pub fn add_tweights(&mut self, i: usize, cap_source: i64, cap_sink: i64) {
        debug_assert!(cap_source >= 0 && cap_sink >= 0);
        self.to_sink[i] += cap_source;
        self.excess[i] += cap_sink;
        let direct = self.to_sink[i].min(self.excess[i]);
        self.to_sink[i] -= direct;
        self.excess[i] -= direct;
        self.flow += direct;
    }

    /// Edge `i → j` with capacity `cap` and `j → i` with `rev_cap` in the
    /// original network.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: i64, rev_cap: i64) {
        debug_assert!(i != j && cap >= 0 && rev_cap >= 0);
        // reversed: arc i→j carries the original j→i capacity
        let a = self.head.len() as u32;
        self.head.push(j as u32);
        self.next.push(self.first[i]);
        self.res.push(rev_cap);
        self.head.push(i as u32);
        self.next.push(self.first[j]);
        self.res.push(cap);
        self.first[i] = a;
        self.first[j] = a + 1;
    }

    fn build_csr(&mut self) {
        let n = self.first.len();
        let m = self.head.len();
        let mut new_of = vec![0u32; m];
        self.start = Vec::with_capacity(n + 1);
        self.csr_head = Vec::with_capacity(m);
        self.csr_res = Vec::with_capacity(m);
        for v in 0..n {
            self.start.push(self.csr_head.len() as u32);
            let mut a = self.first[v];
            while a != NONE {
                new_of[a as usize] = self.csr_head.len() as u32;
                self.csr_head.push(self.head[a as usize]);
                self.csr_res.push(self.res[a as usize]);
                a = self.next[a as usize];
            }
        }
        self.start.push(m as u32);
        self.sister = vec![0; m];
        for a in 0..m {
            self.sister[new_of[a] as usize] = new_of[a ^ 1];
        }
    }

    fn dead(&self) -> u32 {
        self.first.len() as u32 + 1
    }

    /// Exact distances to the reversed sink over residual arcs; unreachable
    /// nodes are marked dead.
    fn global_relabel(&mut self) {
        let n = self.first.len();
        let dead = self.dead();
        self.label.iter_mut().for_each(|l| *l = dead);
        let mut queue = VecDeque::new();
        for v in 0..n {
            if self.to_sink[v] > 0 {
                self.label[v] = 1;
                queue.push_back(v as u32);
            }
        }
        while let Some(v) = queue.pop_front() {
            let v = v as usize;
            let d = self.label[v] + 1;
            for a in self.start[v] as usize..self.start[v + 1] as usize {
                let u = self.csr_head[a] as usize;
                // arc u→v is the sister of v→u
                if self.label[u] == dead && self.csr_res[self.sister[a] as usize] > 0 {
                    self.label[u] = d;
                    queue.push_back(u as u32);
                }
            }
        }
        self.current.copy_from_slice(&self.start[..n]);
    }

    /// Computes a maximum preflow (FIFO selection with periodic global
    /// relabeling) and returns the min-cut value.
    pub fn maxflow(&mut self) -> i64 {
        let n = self.first.len();
        let dead = self.dead();
        self.build_csr();
        self.global_relabel();
        let mut in_queue = vec![false; n];
        let mut active: VecDeque<u32> = VecDeque::new();
        for v in 0..n {
            if self.excess[v] > 0 && self.label[v] < dead {
                in_queue[v] = true;
                active.push_back(v as u32);
            }
        }
        let relabel_period = 2 * (n + self.head.len());
        let mut work = 0usize;
        while let Some(v) = active.pop_front() {
            let v = v as usize;
            in_queue[v] = false;
            if work > relabel_period {
                work = 0;
                self.global_relabel();
            }
            while self.excess[v] > 0 && self.label[v] < dead {
                if self.label[v] == 1 && self.to_sink[v] > 0 {
                    let d = self.excess[v].min(self.to_sink[v]);
                    self.to_sink[v] -= d;
                    self.excess[v] -= d;
                    self.flow += d;
                    continue;
                }
                let a = self.current[v];
                if a == self.start[v + 1] {
                    work += 12;
                    self.relabel(v);
                    continue;
                }
                let au = a as usize;
                let w = self.csr_head[au] as usize;
                work += 1;
                if self.csr_res[au] > 0 && self.label[v] == self.label[w] + 1 {
                    let d = self.excess[v].min(self.csr_res[au]);
                    self.csr_res[au] -= d;
                    self.csr_res[self.sister[au] as usize] += d;
                    self.excess[v] -= d;
                    self.excess[w] += d;
                    if !in_queue[w] && self.label[w] < dead {
                        in_queue[w] = true;
                        active.push_back(w as u32);
                    }
                } else {
                    self.current[v] = a + 1;
                }
            }
        }
        self.global_relabel();
        self.flow
    }

    fn relabel(&mut self, v: usize) {
        let mut best = self.dead();
        if self.to_sink[v] > 0 {
            best = 1;
        }
        for b in self.start[v] as usize..self.start[v + 1] as usize {
            if self.csr_res[b] > 0 {
                best = best.min(self.label[self.csr_head[b] as usize] + 1);
            }
        }
        self.label[v] = best;
        self.current[v] = self.start[v];
    }

    /// True if node `i` is on the source side of the minimal min cut of the
    /// original network (valid after [`maxflow`](Self::maxflow)).
    pub fn in_source_set(&self, i: usize) -> bool {
        self.label[i] < self.dead()
    }
}
