//! Pass-faithful reference interpreters. One `step` executes one body pass
//! with plain integers and indices, in the same order as the compiled
//! layers, so traces can be compared pass by pass.

use crate::compiler::{default_max_passes, default_values, omega, Output, Params};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::layout::AlgorithmKind;
use crate::trace::{ExecutionTrace, Record};

/// Array variables are indexed by row; entry 0 stands for the top row and
/// stays 0.
type Array = Vec<f64>;

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

struct Instance {
    k: usize,
    n_v: usize,
    n_e: usize,
    omega: f64,
    /// Padded incidence, `a[row][col]`.
    a: Vec<Vec<f64>>,
}

impl Instance {
    fn new(h: &Hypergraph, k: usize, values: Option<&[u64]>) -> Self {
        let mut a = vec![vec![0.0; k]; k];
        for (j, e) in h.edges().iter().enumerate() {
            for &v in &e.vertices {
                a[v][j + 1] = e.weight as f64;
            }
        }
        Self {
            k,
            n_v: h.n_v(),
            n_e: h.n_e(),
            omega: omega(h, k, values),
            a,
        }
    }

    fn pad_v(&self) -> Array {
        (0..self.k).map(|i| b(i > self.n_v)).collect()
    }

    fn pad_e(&self) -> Array {
        (0..self.k).map(|i| b(i > self.n_e)).collect()
    }

    fn column(&self, c: usize) -> Array {
        (0..self.k)
            .map(|i| if c < self.k { self.a[i][c] } else { 0.0 })
            .collect()
    }

    fn all_ones(&self, x: &Array) -> bool {
        x[1..].iter().all(|&v| v == 1.0)
    }
}

fn put_array(r: &mut Record, name: &str, x: &Array) {
    r.set(name, Record::list(x[1..].iter().map(|&v| Record::num(v))));
}

fn put_indices(r: &mut Record, name: &str, x: &[usize]) {
    r.set(
        name,
        Record::list(x[1..].iter().map(|&v| Record::index(Some(v)))),
    );
}

struct GetMinimum {
    idx_cur: usize,
    val_cur: f64,
    idx_best: usize,
    val_best: f64,
    improved: f64,
    visit_min: Array,
    termination_min: f64,
}

impl GetMinimum {
    fn new(inst: &Instance, best: f64) -> Self {
        Self {
            idx_cur: 0,
            val_cur: 0.0,
            idx_best: 0,
            val_best: best,
            improved: 0.0,
            visit_min: inst.pad_v(),
            termination_min: 0.0,
        }
    }

    fn step(&mut self, inst: &Instance, values: &Array, reinit: bool, best: f64) {
        if reinit {
            let improved = self.improved;
            *self = Self::new(inst, best);
            self.improved = improved;
        }
        if self.termination_min == 0.0 {
            self.idx_cur += 1;
        }
        self.val_cur = values.get(self.idx_cur).copied().unwrap_or(0.0);
        self.improved = b(self.val_cur < self.val_best);
        if self.improved == 1.0 {
            self.val_best = self.val_cur;
            self.idx_best = self.idx_cur;
        }
        if (1..inst.k).contains(&self.idx_cur) {
            self.visit_min[self.idx_cur] = 1.0;
        }
        self.termination_min = b(inst.all_ones(&self.visit_min));
    }

    fn record(&self, r: &mut Record) {
        r.set("idx_cur", Record::index(Some(self.idx_cur)));
        r.set("val_cur", Record::num(self.val_cur));
        r.set("idx_best", Record::index(Some(self.idx_best)));
        r.set("val_best", Record::num(self.val_best));
        r.set("improved", Record::num(self.improved));
        put_array(r, "visit_min", &self.visit_min);
        r.set("termination_min", Record::num(self.termination_min));
    }
}

struct VisitHyperedge {
    idx: usize,
    val: Array,
    iszero: Array,
    update: Array,
    candidates: Array,
    visit: Array,
    termination: f64,
    round: f64,
}

impl VisitHyperedge {
    fn new(inst: &Instance) -> Self {
        Self {
            idx: 0,
            val: inst.pad_v(),
            iszero: inst.pad_v(),
            update: vec![0.0; inst.k],
            candidates: (0..inst.k)
                .map(|i| if i == 0 { 0.0 } else { inst.omega })
                .collect(),
            visit: inst.pad_e(),
            termination: 0.0,
            round: 0.0,
        }
    }

    fn step(&mut self, inst: &Instance, termination_min: f64, node_rows: &[usize]) {
        let om = inst.omega;
        if self.round == 1.0 {
            self.idx = 0;
            self.visit = inst.pad_e();
            self.termination = 0.0;
            self.candidates = (0..inst.k).map(|i| if i == 0 { 0.0 } else { om }).collect();
        }
        if termination_min - self.termination == 1.0 {
            self.idx += 1;
        }
        self.val = inst.column(self.idx);
        let val = self.val.clone();
        for i in 1..inst.k {
            let node = node_rows[i];
            let shared = val[i] >= 1.0 && val.get(node).is_some_and(|&v| v >= 1.0);
            self.iszero[i] = b(!shared);
            if !shared {
                self.val[i] = om;
            }
            self.update[i] = b(self.val[i] < self.candidates[i]);
            if self.update[i] == 1.0 {
                self.candidates[i] = self.val[i];
            }
        }
        if (1..inst.k).contains(&self.idx) {
            self.visit[self.idx] = 1.0;
        }
        self.termination = b(inst.all_ones(&self.visit));
        self.round = b(termination_min == 1.0 && self.termination == 1.0);
    }

    fn record(&self, r: &mut Record) {
        r.set("idx_hyperedge", Record::index(Some(self.idx)));
        put_array(r, "val_hyperedge", &self.val);
        put_array(r, "iszero_hyperedge", &self.iszero);
        put_array(r, "update_hyperedge", &self.update);
        put_array(r, "candidates_hyperedge", &self.candidates);
        put_array(r, "visit_hyperedge", &self.visit);
        r.set("termination_hyperedge", Record::num(self.termination));
        r.set("round", Record::num(self.round));
    }
}

struct Dijkstra {
    dists: Array,
    dists_masked: Array,
    prev: Vec<usize>,
    visit: Array,
    min: GetMinimum,
    node: usize,
    node_rows: Vec<usize>,
    dist: f64,
    he: VisitHyperedge,
    iszero: Array,
    candidates: Array,
    changes: Array,
    termination: f64,
}

impl Dijkstra {
    fn new(inst: &Instance, start: usize) -> Self {
        let om = inst.omega;
        Self {
            dists: (0..inst.k)
                .map(|i| if i == 0 || i == start { 0.0 } else { om })
                .collect(),
            dists_masked: vec![0.0; inst.k],
            prev: (0..inst.k).collect(),
            visit: inst.pad_v(),
            min: GetMinimum::new(inst, 2.0 * om),
            node: 0,
            node_rows: vec![0; inst.k],
            dist: 0.0,
            he: VisitHyperedge::new(inst),
            iszero: vec![0.0; inst.k],
            candidates: vec![0.0; inst.k],
            changes: vec![0.0; inst.k],
            termination: 0.0,
        }
    }

    fn step(&mut self, inst: &Instance) {
        let om = inst.omega;
        for i in 1..inst.k {
            self.dists_masked[i] = if self.visit[i] == 1.0 {
                2.0 * om
            } else {
                self.dists[i]
            };
        }
        self.min
            .step(inst, &self.dists_masked, self.he.round == 1.0, 2.0 * om);
        if self.min.termination_min == 1.0 {
            self.node = self.min.idx_best;
            self.node_rows = vec![self.node; inst.k];
            self.dist = self.min.val_best;
        }
        self.he
            .step(inst, self.min.termination_min, &self.node_rows);
        let round = self.he.round == 1.0;
        for i in 1..inst.k {
            self.iszero[i] = b(om - 1.0 < self.he.candidates[i]);
            self.candidates[i] = if round { self.he.candidates[i] } else { om };
            self.candidates[i] += self.dist;
            self.changes[i] = b(self.candidates[i] < self.dists[i]);
            self.changes[i] = b(round && self.changes[i] == 1.0 && self.iszero[i] == 0.0);
            if self.changes[i] == 1.0 {
                self.prev[i] = self.node_rows[i];
                self.dists[i] = self.candidates[i];
            }
        }
        if (1..inst.k).contains(&self.node) {
            self.visit[self.node] += self.he.round;
        }
        self.termination = b(inst.all_ones(&self.visit));
    }

    fn record(&self, r: &mut Record) {
        put_array(r, "dists", &self.dists);
        put_array(r, "dists_masked", &self.dists_masked);
        put_indices(r, "prev", &self.prev);
        put_array(r, "visit", &self.visit);
        self.min.record(r);
        r.set("node", Record::index(Some(self.node)));
        put_indices(r, "node_rows", &self.node_rows);
        r.set("dist", Record::num(self.dist));
        self.he.record(r);
        put_array(r, "iszero", &self.iszero);
        put_array(r, "candidates", &self.candidates);
        put_array(r, "changes", &self.changes);
        r.set("termination", Record::num(self.termination));
    }
}

struct Helly {
    x: usize,
    y: usize,
    v: usize,
    hx: Array,
    hy: Array,
    hv: Array,
    intersection: Array,
    helly_v: f64,
    helly: f64,
    termination: f64,
}

impl Helly {
    fn new(inst: &Instance) -> Self {
        let z = vec![0.0; inst.k];
        Self {
            x: 0,
            y: 1,
            v: 0,
            hx: z.clone(),
            hy: z.clone(),
            hv: z.clone(),
            intersection: z,
            helly_v: 0.0,
            helly: 1.0,
            termination: 0.0,
        }
    }

    fn step(&mut self, inst: &Instance) {
        let n_e = inst.n_e;
        let positive = |c: Array| -> Array { c.iter().map(|&w| b(0.0 < w)).collect() };
        self.hx = positive(inst.column(self.x + 1));
        self.hy = positive(inst.column(self.y + 1));
        self.hv = positive(inst.column(self.v + 1));
        for i in 0..inst.k {
            self.intersection[i] = b(self.hx[i] == 1.0 && self.hy[i] == 1.0 && self.hv[i] == 1.0);
        }
        self.helly_v = b(self.intersection[1..].iter().all(|&w| w == 0.0));
        if self.helly_v == 1.0 {
            self.helly = 0.0;
            self.termination = 1.0;
        }
        self.v += 1;
        if self.v == n_e {
            self.y += 1;
            self.v = 0;
        }
        if self.y == n_e {
            self.x += 1;
            self.y = self.x + 1;
        }
        if self.x == n_e - 1 {
            self.termination = 1.0;
        }
    }

    fn record(&self, r: &mut Record) {
        r.set("idx_x", Record::index(Some(self.x)));
        r.set("idx_y", Record::index(Some(self.y)));
        r.set("idx_v", Record::index(Some(self.v)));
        put_array(r, "hyperedge_x", &self.hx);
        put_array(r, "hyperedge_y", &self.hy);
        put_array(r, "hyperedge_v", &self.hv);
        put_array(r, "intersection", &self.intersection);
        r.set("helly_v", Record::num(self.helly_v));
        r.set("helly", Record::num(self.helly));
        r.set("termination", Record::num(self.termination));
    }
}

enum Machine {
    GetMinimum {
        values: Array,
        min: GetMinimum,
    },
    VisitHyperedge {
        node_rows: Vec<usize>,
        he: VisitHyperedge,
    },
    Dijkstra(Box<Dijkstra>),
    Helly(Helly),
}

impl Machine {
    fn step(&mut self, inst: &Instance) {
        match self {
            Machine::GetMinimum { values, min } => {
                let reinit = min.termination_min == 1.0;
                min.step(inst, values, reinit, inst.omega)
            }
            Machine::VisitHyperedge { node_rows, he } => he.step(inst, 1.0, node_rows),
            Machine::Dijkstra(d) => d.step(inst),
            Machine::Helly(h) => h.step(inst),
        }
    }

    fn terminated(&self) -> bool {
        match self {
            Machine::GetMinimum { min, .. } => min.termination_min == 1.0,
            Machine::VisitHyperedge { he, .. } => he.termination == 1.0,
            Machine::Dijkstra(d) => d.termination == 1.0,
            Machine::Helly(h) => h.termination == 1.0,
        }
    }

    fn record(&self, pass: usize) -> Record {
        let mut r = Record::new(pass);
        match self {
            Machine::GetMinimum { values, min } => {
                put_array(&mut r, "values", values);
                min.record(&mut r);
            }
            Machine::VisitHyperedge { node_rows, he } => {
                put_indices(&mut r, "node_rows", node_rows);
                r.set("termination_min", Record::num(1.0));
                he.record(&mut r);
            }
            Machine::Dijkstra(d) => d.record(&mut r),
            Machine::Helly(h) => h.record(&mut r),
        }
        r
    }

    fn output(&self, inst: &Instance) -> Output {
        let ints = |x: &Array| x[1..=inst.n_v].iter().map(|&v| v as u64).collect();
        match self {
            Machine::GetMinimum { min, .. } => Output::GetMinimum {
                idx_best: min.idx_best,
                val_best: min.val_best as u64,
            },
            Machine::VisitHyperedge { he, .. } => Output::VisitHyperedge {
                candidates: ints(&he.candidates),
            },
            Machine::Dijkstra(d) => Output::Dijkstra {
                dists: ints(&d.dists),
                prev: d.prev[1..=inst.n_v].to_vec(),
            },
            Machine::Helly(h) => Output::Helly {
                helly: h.helly == 1.0,
            },
        }
    }
}

/// Result of [`run_interpreter`].
#[derive(Debug, Clone)]
pub struct InterpretedRun {
    pub output: Output,
    pub passes: usize,
    pub trace: ExecutionTrace,
}

/// Runs the reference interpreter with `K = max(n_v, n_e) + 1` rows unless
/// `k` is given. The pass budget defaults to the compiler's.
pub fn run_interpreter(
    kind: AlgorithmKind,
    h: &Hypergraph,
    params: &Params,
    k: Option<usize>,
    max_passes: Option<usize>,
) -> Result<InterpretedRun> {
    let required = h.min_rows();
    let k = k.unwrap_or(required);
    if k < required {
        return Err(Error::LayoutTooSmall { k, required });
    }
    let in_range = |v: usize| (1..=h.n_v()).contains(&v);
    let values = match kind {
        AlgorithmKind::GetMinimum => {
            let v = params.values.clone().unwrap_or_else(|| default_values(h));
            if v.len() != h.n_v() {
                return Err(Error::Params(format!(
                    "expected {} values, got {}",
                    h.n_v(),
                    v.len()
                )));
            }
            Some(v)
        }
        _ => None,
    };
    let inst = Instance::new(h, k, values.as_deref());
    let mut m = match kind {
        AlgorithmKind::GetMinimum => {
            let v = values.expect("set above");
            let mut arr = vec![0.0; k];
            for (i, &x) in v.iter().enumerate() {
                arr[i + 1] = x as f64;
            }
            Machine::GetMinimum {
                values: arr,
                min: GetMinimum::new(&inst, inst.omega),
            }
        }
        AlgorithmKind::VisitHyperedge => {
            let node = params.node.or(params.start).unwrap_or(1);
            if !in_range(node) {
                return Err(Error::Params(format!("node {node} out of range")));
            }
            Machine::VisitHyperedge {
                node_rows: vec![node; k],
                he: VisitHyperedge::new(&inst),
            }
        }
        AlgorithmKind::Dijkstra => {
            let start = params
                .start
                .filter(|&s| in_range(s))
                .ok_or_else(|| Error::Params("dijkstra needs a start vertex in range".into()))?;
            Machine::Dijkstra(Box::new(Dijkstra::new(&inst, start)))
        }
        AlgorithmKind::Helly => Machine::Helly(Helly::new(&inst)),
    };
    let budget = max_passes.unwrap_or_else(|| default_max_passes(kind, inst.n_v, inst.n_e, k));
    let mut records = vec![m.record(0)];
    let mut passes = 0;
    while !m.terminated() {
        if passes == budget {
            return Err(Error::NonTermination { passes });
        }
        m.step(&inst);
        passes += 1;
        records.push(m.record(passes));
    }
    Ok(InterpretedRun {
        output: m.output(&inst),
        passes,
        trace: ExecutionTrace { records },
    })
}
