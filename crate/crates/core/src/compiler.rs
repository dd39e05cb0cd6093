//! Compiles the four hypergraph programs to looped transformers, and maps
//! instances to initial states and terminal states back to results.

use serde::{Deserialize, Serialize};

use crate::builder::Lin;
use crate::error::{Error, Result};
use crate::hypergraph::{build_incidence, pad_incidence, Hypergraph, PaddedIncidence};
use crate::kernel::{looped_run, LayerWeights, TransformerProgram, MAX_HEADS};
use crate::layout::{AlgorithmKind, ColumnLayout, VarKind};
use crate::matrix::Matrix;
use crate::positional::{Positional, DEFAULT_N_MAX};
use crate::primitives::{
    Assign, Axis, Comparison, Cond, Ctx, IncidenceRead, Primitive, Reg, WriteMode,
};
use crate::trace::{ExecutionTrace, Record};

/// Per-instance inputs besides the hypergraph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params {
    /// Dijkstra source vertex.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    /// Current node for a standalone hyperedge scan (defaults to `start`, then 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    /// Values scanned by a standalone minimum search. Defaults to the
    /// weighted vertex degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<u64>>,
}

/// Compilation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    pub n_max: usize,
    /// Row count; defaults to `max(n_v, n_e) + 1`.
    pub k: Option<usize>,
    /// Pass budget; defaults to [`default_max_passes`].
    pub max_passes: Option<usize>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
            k: None,
            max_passes: None,
        }
    }
}

/// Resolved instance parameters recorded in a compiled program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub n_v: usize,
    pub n_e: usize,
    pub k: usize,
    pub omega: f64,
    pub delta_hat: f64,
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<u64>>,
}

impl InstanceParams {
    pub fn positional(&self) -> Positional {
        Positional::new(self.n_max).expect("n_max validated at compile time")
    }
}

/// Default values for a standalone minimum search: weighted degrees.
pub fn default_values(h: &Hypergraph) -> Vec<u64> {
    (1..=h.n_v())
        .map(|v| {
            h.edges()
                .iter()
                .filter(|e| e.vertices.contains(&v))
                .map(|e| e.weight)
                .sum()
        })
        .collect()
}

/// `n_v * w_max + K + 1`, raised past any scanned value.
pub fn omega(h: &Hypergraph, k: usize, values: Option<&[u64]>) -> f64 {
    let w = h.n_v() as u64 * h.max_weight();
    let v = values.and_then(|v| v.iter().max().copied()).unwrap_or(0);
    (w.max(v) + k as u64 + 1) as f64
}

/// Pass budget: one pass per scanned row, `n_v` rounds of
/// `K - 1 + n_e + 2` passes for Dijkstra, and every index triple for Helly.
pub fn default_max_passes(kind: AlgorithmKind, n_v: usize, n_e: usize, k: usize) -> usize {
    match kind {
        AlgorithmKind::GetMinimum | AlgorithmKind::VisitHyperedge => k,
        AlgorithmKind::Dijkstra => n_v * (k - 1 + n_e + 2),
        AlgorithmKind::Helly => n_e * n_e * n_e + 2,
    }
}

fn resolve(
    kind: AlgorithmKind,
    h: &Hypergraph,
    params: &Params,
    opts: &Options,
) -> Result<InstanceParams> {
    let pos = Positional::new(opts.n_max)?;
    let required = h.min_rows();
    let k = opts.k.unwrap_or(required);
    if k < required {
        return Err(Error::LayoutTooSmall { k, required });
    }
    if k > opts.n_max {
        return Err(Error::Capacity {
            requested: k,
            n_max: opts.n_max,
        });
    }
    let mut ip = InstanceParams {
        n_v: h.n_v(),
        n_e: h.n_e(),
        k,
        omega: 0.0,
        delta_hat: pos.delta_hat(),
        n_max: opts.n_max,
        start: None,
        node: None,
        values: None,
    };
    let check_vertex = |what: &str, v: usize| {
        if v == 0 || v > h.n_v() {
            Err(Error::Params(format!(
                "{what} {v} out of range 1..={}",
                h.n_v()
            )))
        } else {
            Ok(v)
        }
    };
    match kind {
        AlgorithmKind::Dijkstra => {
            let s = params
                .start
                .ok_or_else(|| Error::Params("dijkstra needs a start vertex".into()))?;
            ip.start = Some(check_vertex("start", s)?);
        }
        AlgorithmKind::VisitHyperedge => {
            let n = params.node.or(params.start).unwrap_or(1);
            ip.node = Some(check_vertex("node", n)?);
        }
        AlgorithmKind::GetMinimum => {
            let values = params.values.clone().unwrap_or_else(|| default_values(h));
            if values.len() != h.n_v() {
                return Err(Error::Params(format!(
                    "expected {} values, got {}",
                    h.n_v(),
                    values.len()
                )));
            }
            ip.values = Some(values);
        }
        AlgorithmKind::Helly => {}
    }
    ip.omega = omega(h, k, ip.values.as_deref());
    Ok(ip)
}

fn ctx(layout: &ColumnLayout, ip: &InstanceParams) -> Ctx {
    Ctx {
        svc: layout.service(),
        scratch: layout.scratch(),
        scopes: layout.scopes(),
        omega: ip.omega,
        pos: ip.positional(),
        k: ip.k,
    }
}

fn keep_false(target: usize, when_true: Lin) -> Assign {
    Assign {
        target,
        when_true,
        when_false: None,
    }
}

/// `reg <- p_0` in the top row.
fn reset_reg(bg: usize, reg: Reg) -> [Assign; 2] {
    [
        keep_false(reg.0, Lin::zero()),
        keep_false(reg.1, Lin::col(bg)),
    ]
}

/// The minimum search over `values`, re-initialised whenever `reinit` is set.
fn get_minimum_ops(
    l: &ColumnLayout,
    values: usize,
    reinit: usize,
    best_init: f64,
) -> Result<Vec<Primitive>> {
    let svc = l.service();
    let idx_cur = l.reg("idx_cur")?;
    let idx_best = l.reg("idx_best")?;
    let val_cur = l.col("val_cur")?;
    let val_best = l.col("val_best")?;
    let improved = l.col("improved")?;
    let visit_min = l.col("visit_min")?;
    let tm = l.col("termination_min")?;

    let mut init = Vec::new();
    init.extend(reset_reg(svc.bg, idx_cur));
    init.push(keep_false(val_cur, Lin::zero()));
    init.extend(reset_reg(svc.bg, idx_best));
    init.push(keep_false(val_best, Lin::scaled(svc.bg, best_init)));
    init.push(keep_false(visit_min, Lin::col(l.pad_vertices())));
    init.push(keep_false(tm, Lin::zero()));

    Ok(vec![
        Primitive::Selection {
            cond: Cond::Flag { col: reinit },
            assign: init,
        },
        Primitive::Increment {
            src: idx_cur,
            dst: idx_cur,
            gate: Some(Cond::NotFlag { col: tm }),
        },
        Primitive::ReadScalar {
            reg: idx_cur,
            src: values,
            dst: val_cur,
        },
        Primitive::CompareLt {
            items: vec![Comparison {
                target: improved,
                lhs: Lin::col(val_cur),
                rhs: Lin::col(val_best),
            }],
        },
        Primitive::Selection {
            cond: Cond::Flag { col: improved },
            assign: vec![
                keep_false(val_best, Lin::col(val_cur)),
                keep_false(idx_best.0, Lin::col(idx_cur.0)),
                keep_false(idx_best.1, Lin::col(idx_cur.1)),
            ],
        },
        Primitive::WriteScalar {
            reg: idx_cur,
            value: Lin::col(svc.bg),
            dst: visit_min,
            mode: WriteMode::Assign,
        },
        Primitive::Termination {
            src: visit_min,
            dst: tm,
            expect: 1,
        },
    ])
}

/// One scan over the hyperedges, collecting for every vertex the lightest
/// hyperedge it shares with the node in `node_rows`.
fn visit_hyperedge_ops(l: &ColumnLayout, omega: f64) -> Result<Vec<Primitive>> {
    let svc = l.service();
    let idx = l.reg("idx_hyperedge")?;
    let val = l.col("val_hyperedge")?;
    let iszero = l.col("iszero_hyperedge")?;
    let update = l.col("update_hyperedge")?;
    let cand = l.col("candidates_hyperedge")?;
    let visit = l.col("visit_hyperedge")?;
    let th = l.col("termination_hyperedge")?;
    let round = l.col("round")?;
    let tm = l.col("termination_min")?;
    let node_rows = l.reg("node_rows")?;

    let mut init = Vec::new();
    init.extend(reset_reg(svc.bg, idx));
    init.push(keep_false(visit, Lin::col(l.pad_edges())));
    init.push(keep_false(th, Lin::zero()));
    init.push(keep_false(cand, Lin::scaled(svc.bl, omega)));

    Ok(vec![
        Primitive::Selection {
            cond: Cond::Flag { col: round },
            assign: init,
        },
        Primitive::Increment {
            src: idx,
            dst: idx,
            gate: Some(Cond::Diff { on: tm, off: th }),
        },
        Primitive::ReadIncidence {
            read: IncidenceRead {
                reg: idx,
                offset: 0,
                axis: Axis::Column,
                dst: val,
            },
        },
        Primitive::SharedMember {
            node: node_rows,
            val,
            dst: iszero,
        },
        Primitive::Selection {
            cond: Cond::Flag { col: iszero },
            assign: vec![keep_false(val, Lin::scaled(svc.bl, omega))],
        },
        Primitive::CompareLt {
            items: vec![Comparison {
                target: update,
                lhs: Lin::col(val),
                rhs: Lin::col(cand),
            }],
        },
        Primitive::Selection {
            cond: Cond::Flag { col: update },
            assign: vec![keep_false(cand, Lin::col(val))],
        },
        Primitive::WriteScalar {
            reg: idx,
            value: Lin::col(svc.bg),
            dst: visit,
            mode: WriteMode::Assign,
        },
        Primitive::Termination {
            src: visit,
            dst: th,
            expect: 1,
        },
        Primitive::And {
            inputs: vec![tm, th],
            dst: round,
        },
    ])
}

fn dijkstra_ops(l: &ColumnLayout, omega: f64) -> Result<Vec<Primitive>> {
    let svc = l.service();
    let dists = l.col("dists")?;
    let masked = l.col("dists_masked")?;
    let prev = l.reg("prev")?;
    let visit = l.col("visit")?;
    let node = l.reg("node")?;
    let node_rows = l.reg("node_rows")?;
    let dist = l.col("dist")?;
    let idx_best = l.reg("idx_best")?;
    let val_best = l.col("val_best")?;
    let tm = l.col("termination_min")?;
    let cand_he = l.col("candidates_hyperedge")?;
    let round = l.col("round")?;
    let iszero = l.col("iszero")?;
    let candidates = l.col("candidates")?;
    let changes = l.col("changes")?;
    let term = l.col("termination")?;

    let mut ops = vec![Primitive::Selection {
        cond: Cond::Flag { col: visit },
        assign: vec![Assign {
            target: masked,
            when_true: Lin::scaled(svc.bl, 2.0 * omega),
            when_false: Some(Lin::col(dists)),
        }],
    }];
    ops.extend(get_minimum_ops(l, masked, round, 2.0 * omega)?);
    ops.push(Primitive::Selection {
        cond: Cond::Flag { col: tm },
        assign: vec![
            keep_false(node.0, Lin::col(idx_best.0)),
            keep_false(node.1, Lin::col(idx_best.1)),
            keep_false(node_rows.0, Lin::col(idx_best.0)),
            keep_false(node_rows.1, Lin::col(idx_best.1)),
            keep_false(dist, Lin::col(val_best)),
        ],
    });
    ops.extend(visit_hyperedge_ops(l, omega)?);
    ops.push(Primitive::CompareLt {
        items: vec![Comparison {
            target: iszero,
            lhs: Lin::scaled(svc.bl, omega - 1.0),
            rhs: Lin::col(cand_he),
        }],
    });
    ops.push(Primitive::Selection {
        cond: Cond::Flag { col: round },
        assign: vec![Assign {
            target: candidates,
            when_true: Lin::col(cand_he),
            when_false: Some(Lin::scaled(svc.bl, omega)),
        }],
    });
    ops.push(Primitive::RepeatAdd {
        src: dist,
        dst: candidates,
    });
    ops.push(Primitive::CompareLt {
        items: vec![Comparison {
            target: changes,
            lhs: Lin::col(candidates),
            rhs: Lin::col(dists),
        }],
    });
    ops.push(Primitive::RepeatAnd {
        gate: round,
        dst: changes,
        mask: iszero,
    });
    ops.push(Primitive::Selection {
        cond: Cond::Flag { col: changes },
        assign: vec![
            keep_false(prev.0, Lin::col(node_rows.0)),
            keep_false(prev.1, Lin::col(node_rows.1)),
            keep_false(dists, Lin::col(candidates)),
        ],
    });
    ops.push(Primitive::WriteScalar {
        reg: node,
        value: Lin::col(round),
        dst: visit,
        mode: WriteMode::Accumulate,
    });
    ops.push(Primitive::Termination {
        src: visit,
        dst: term,
        expect: 1,
    });
    Ok(ops)
}

fn helly_ops(l: &ColumnLayout, ip: &InstanceParams) -> Result<Vec<Primitive>> {
    let svc = l.service();
    let x = l.reg("idx_x")?;
    let y = l.reg("idx_y")?;
    let v = l.reg("idx_v")?;
    let hx = l.col("hyperedge_x")?;
    let hy = l.col("hyperedge_y")?;
    let hv = l.col("hyperedge_v")?;
    let inter = l.col("intersection")?;
    let helly_v = l.col("helly_v")?;
    let helly = l.col("helly")?;
    let term = l.col("termination")?;
    let n_e = ip.n_e;
    let (c, s) = ip.positional().rotation();
    let read = |reg, dst| IncidenceRead {
        reg,
        offset: 1,
        axis: Axis::Column,
        dst,
    };
    let positive = |col| Comparison {
        target: col,
        lhs: Lin::zero(),
        rhs: Lin::col(col),
    };
    Ok(vec![
        Primitive::ReadIncidenceMany {
            reads: vec![read(x, hx), read(y, hy), read(v, hv)],
        },
        Primitive::CompareLt {
            items: vec![positive(hx), positive(hy), positive(hv)],
        },
        Primitive::And {
            inputs: vec![hx, hy, hv],
            dst: inter,
        },
        Primitive::Termination {
            src: inter,
            dst: helly_v,
            expect: 0,
        },
        Primitive::Selection {
            cond: Cond::Flag { col: helly_v },
            assign: vec![
                keep_false(helly, Lin::zero()),
                keep_false(term, Lin::col(svc.bg)),
            ],
        },
        Primitive::Increment {
            src: v,
            dst: v,
            gate: None,
        },
        Primitive::Increment {
            src: y,
            dst: y,
            gate: Some(Cond::RegisterIs { reg: v, index: n_e }),
        },
        Primitive::Selection {
            cond: Cond::RegisterIs { reg: v, index: n_e },
            assign: reset_reg(svc.bg, v).to_vec(),
        },
        Primitive::Increment {
            src: x,
            dst: x,
            gate: Some(Cond::RegisterIs { reg: y, index: n_e }),
        },
        Primitive::Selection {
            cond: Cond::RegisterIs { reg: y, index: n_e },
            assign: vec![
                keep_false(y.0, Lin::from_terms(&[(x.0, c), (x.1, s)])),
                keep_false(y.1, Lin::from_terms(&[(x.0, -s), (x.1, c)])),
            ],
        },
        Primitive::Selection {
            cond: Cond::RegisterIs {
                reg: x,
                index: n_e - 1,
            },
            assign: vec![keep_false(term, Lin::col(svc.bg))],
        },
    ])
}

/// The primitive sequence of one body pass.
pub fn body_ops(layout: &ColumnLayout, ip: &InstanceParams) -> Result<Vec<Primitive>> {
    let ops = match layout.kind {
        AlgorithmKind::GetMinimum => get_minimum_ops(
            layout,
            layout.col("values")?,
            layout.col("termination_min")?,
            ip.omega,
        )?,
        AlgorithmKind::VisitHyperedge => visit_hyperedge_ops(layout, ip.omega)?,
        AlgorithmKind::Dijkstra => dijkstra_ops(layout, ip.omega)?,
        AlgorithmKind::Helly => helly_ops(layout, ip)?,
    };
    debug_assert_eq!(ops.len(), layout.kind.layer_count());
    Ok(ops)
}

/// Layout of `kind`, padded to the constant width `d` needed by its widest
/// layer.
pub fn allocate_layout(kind: AlgorithmKind) -> ColumnLayout {
    let named = ColumnLayout::named(kind);
    let h = Hypergraph::from_edges(2, &[(1, &[1, 2]), (1, &[1])]).expect("fixture is valid");
    let params = Params {
        start: Some(1),
        ..Params::default()
    };
    let ip = resolve(kind, &h, &params, &Options::default()).expect("fixture resolves");
    let ctx = ctx(&named, &ip);
    let units = body_ops(&named, &ip)
        .expect("layout has every variable")
        .iter()
        .map(|op| op.plan(&ctx).expect("fixture plans").units_needed())
        .max()
        .unwrap_or(0);
    let d = named.named_width().max(units);
    named.with_width(d)
}

/// A compiled program together with everything needed to run and decode it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ProgramFile", try_from = "ProgramFile")]
pub struct CompiledProgram {
    pub kind: AlgorithmKind,
    pub params: InstanceParams,
    pub hypergraph: Hypergraph,
    pub layout: ColumnLayout,
    pub ops: Vec<Primitive>,
    pub program: TransformerProgram,
}

#[derive(Serialize, Deserialize)]
struct ProgramFile {
    algorithm: AlgorithmKind,
    params: InstanceParams,
    hypergraph: Hypergraph,
    layout: ColumnLayout,
    termination_column: usize,
    max_passes: usize,
    layers: Vec<FileLayer>,
}

#[derive(Serialize, Deserialize)]
struct FileLayer {
    spec: Primitive,
    #[serde(flatten)]
    weights: LayerWeights,
}

impl From<CompiledProgram> for ProgramFile {
    fn from(c: CompiledProgram) -> Self {
        ProgramFile {
            algorithm: c.kind,
            params: c.params,
            hypergraph: c.hypergraph,
            layout: c.layout,
            termination_column: c.program.termination_column,
            max_passes: c.program.max_passes,
            layers: c
                .ops
                .into_iter()
                .zip(c.program.layers)
                .map(|(spec, weights)| FileLayer { spec, weights })
                .collect(),
        }
    }
}

impl TryFrom<ProgramFile> for CompiledProgram {
    type Error = Error;
    fn try_from(f: ProgramFile) -> Result<Self> {
        for l in &f.layers {
            l.weights.validate()?;
            if l.weights.width() != f.layout.d {
                return Err(Error::Dimension(format!(
                    "layer width {} does not match layout width {}",
                    l.weights.width(),
                    f.layout.d
                )));
            }
        }
        let (ops, layers) = f.layers.into_iter().map(|l| (l.spec, l.weights)).unzip();
        Ok(CompiledProgram {
            kind: f.algorithm,
            params: f.params,
            hypergraph: f.hypergraph,
            layout: f.layout,
            ops,
            program: TransformerProgram {
                layers,
                termination_column: f.termination_column,
                max_passes: f.max_passes,
            },
        })
    }
}

/// Decoded program output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Output {
    GetMinimum { idx_best: usize, val_best: u64 },
    VisitHyperedge { candidates: Vec<u64> },
    Dijkstra { dists: Vec<u64>, prev: Vec<usize> },
    Helly { helly: bool },
}

/// Result of [`CompiledProgram::run`].
#[derive(Debug, Clone)]
pub struct Run {
    pub state: Matrix,
    pub passes: usize,
    pub output: Output,
    pub trace: Option<ExecutionTrace>,
}

pub fn compile(
    kind: AlgorithmKind,
    h: &Hypergraph,
    params: &Params,
    opts: &Options,
) -> Result<CompiledProgram> {
    let ip = resolve(kind, h, params, opts)?;
    let layout = allocate_layout(kind);
    let ctx = ctx(&layout, &ip);
    let ops = body_ops(&layout, &ip)?;
    let layers = ops
        .iter()
        .map(|op| op.build(&ctx, layout.d))
        .collect::<Result<Vec<_>>>()?;
    debug_assert!(layers.iter().all(|l| l.heads.len() <= MAX_HEADS));
    let max_passes = opts
        .max_passes
        .unwrap_or_else(|| default_max_passes(kind, ip.n_v, ip.n_e, ip.k));
    Ok(CompiledProgram {
        kind,
        program: TransformerProgram {
            layers,
            termination_column: layout.termination_column()?,
            max_passes,
        },
        params: ip,
        hypergraph: h.clone(),
        layout,
        ops,
    })
}

pub fn compile_get_minimum(
    h: &Hypergraph,
    values: &[u64],
    opts: &Options,
) -> Result<CompiledProgram> {
    let params = Params {
        values: Some(values.to_vec()),
        ..Params::default()
    };
    compile(AlgorithmKind::GetMinimum, h, &params, opts)
}

pub fn compile_visit_hyperedge(
    h: &Hypergraph,
    node: usize,
    opts: &Options,
) -> Result<CompiledProgram> {
    let params = Params {
        node: Some(node),
        ..Params::default()
    };
    compile(AlgorithmKind::VisitHyperedge, h, &params, opts)
}

pub fn compile_dijkstra(h: &Hypergraph, start: usize, opts: &Options) -> Result<CompiledProgram> {
    let params = Params {
        start: Some(start),
        ..Params::default()
    };
    compile(AlgorithmKind::Dijkstra, h, &params, opts)
}

pub fn compile_helly(h: &Hypergraph, opts: &Options) -> Result<CompiledProgram> {
    compile(AlgorithmKind::Helly, h, &Params::default(), opts)
}

struct Writer<'a> {
    x: Matrix,
    layout: &'a ColumnLayout,
    table: Vec<(f64, f64)>,
}

impl Writer<'_> {
    fn scalar(&mut self, name: &str, v: f64) -> Result<()> {
        let c = self.layout.col(name)?;
        self.x[(0, c)] = v;
        Ok(())
    }

    fn array(&mut self, name: &str, f: impl Fn(usize) -> f64) -> Result<()> {
        let c = self.layout.col(name)?;
        for i in 1..self.x.rows() {
            self.x[(i, c)] = f(i);
        }
        Ok(())
    }

    fn register(&mut self, name: &str, index: usize) -> Result<()> {
        let (a, b) = self.layout.reg(name)?;
        let p = self.table[index];
        self.x[(0, a)] = p.0;
        self.x[(0, b)] = p.1;
        Ok(())
    }

    fn register_array(&mut self, name: &str, f: impl Fn(usize) -> usize) -> Result<()> {
        let (a, b) = self.layout.reg(name)?;
        for i in 1..self.x.rows() {
            let p = self.table[f(i)];
            self.x[(i, a)] = p.0;
            self.x[(i, b)] = p.1;
        }
        Ok(())
    }
}

impl CompiledProgram {
    pub fn layer_count(&self) -> usize {
        self.program.layers.len()
    }

    pub fn incidence(&self) -> Result<PaddedIncidence> {
        pad_incidence(&build_incidence(&self.hypergraph), self.params.k)
    }

    /// The initial state `X_0`.
    pub fn encode(&self) -> Result<Matrix> {
        let ip = &self.params;
        let l = &self.layout;
        let k = ip.k;
        let omega = ip.omega;
        let pos = ip.positional();
        let mut w = Writer {
            x: Matrix::zeros(k, l.d),
            layout: l,
            table: pos.table(k.max(2) + 1),
        };
        let svc = l.service();
        w.x[(0, svc.bg)] = 1.0;
        for i in 1..k {
            w.x[(i, svc.bl)] = 1.0;
            w.x[(i, svc.p1)] = w.table[i].0;
            w.x[(i, svc.p2)] = w.table[i].1;
            w.x[(i, l.pad_vertices())] = if i > ip.n_v { 1.0 } else { 0.0 };
            w.x[(i, l.pad_edges())] = if i > ip.n_e { 1.0 } else { 0.0 };
        }
        let pad_v = |i: usize| if i > ip.n_v { 1.0 } else { 0.0 };
        let pad_e = |i: usize| if i > ip.n_e { 1.0 } else { 0.0 };
        let get_min_preamble = |w: &mut Writer, best: f64| -> Result<()> {
            w.register("idx_cur", 0)?;
            w.register("idx_best", 0)?;
            w.scalar("val_best", best)?;
            w.array("visit_min", pad_v)
        };
        let hyperedge_preamble = |w: &mut Writer| -> Result<()> {
            w.register("idx_hyperedge", 0)?;
            w.array("val_hyperedge", pad_v)?;
            w.array("iszero_hyperedge", pad_v)?;
            w.array("candidates_hyperedge", |_| omega)?;
            w.array("visit_hyperedge", pad_e)
        };
        match self.kind {
            AlgorithmKind::GetMinimum => {
                let values = ip
                    .values
                    .as_ref()
                    .ok_or_else(|| Error::Params("missing values".into()))?;
                w.array("values", |i| values.get(i - 1).map_or(0.0, |&v| v as f64))?;
                get_min_preamble(&mut w, omega)?;
            }
            AlgorithmKind::VisitHyperedge => {
                let node = ip
                    .node
                    .ok_or_else(|| Error::Params("missing node".into()))?;
                w.register_array("node_rows", |_| node)?;
                w.scalar("termination_min", 1.0)?;
                hyperedge_preamble(&mut w)?;
            }
            AlgorithmKind::Dijkstra => {
                let start = ip
                    .start
                    .ok_or_else(|| Error::Params("missing start".into()))?;
                w.array("dists", |i| if i == start { 0.0 } else { omega })?;
                w.register_array("prev", |i| i)?;
                w.array("visit", pad_v)?;
                get_min_preamble(&mut w, 2.0 * omega)?;
                w.register("node", 0)?;
                w.register_array("node_rows", |_| 0)?;
                hyperedge_preamble(&mut w)?;
            }
            AlgorithmKind::Helly => {
                w.register("idx_x", 0)?;
                w.register("idx_y", 1)?;
                w.register("idx_v", 0)?;
                w.scalar("helly", 1.0)?;
            }
        }
        Ok(w.x)
    }

    /// Decodes a terminal state.
    pub fn decode(&self, x: &Matrix) -> Result<Output> {
        let l = &self.layout;
        if x.rows() != self.params.k || x.cols() != l.d {
            return Err(Error::Dimension(format!(
                "state is {}x{}, expected {}x{}",
                x.rows(),
                x.cols(),
                self.params.k,
                l.d
            )));
        }
        if x[(0, l.termination_column()?)] == 0.0 {
            return Err(Error::NotTerminated);
        }
        let n_v = self.params.n_v;
        let pos = self.params.positional();
        let table = pos.table(pos.n_max());
        let int = |v: f64| -> Result<u64> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(Error::Dimension(format!(
                    "expected a non-negative integer, found {v}"
                )))
            }
        };
        let reg_at = |row: usize, name: &str| -> Result<usize> {
            let (a, b) = l.reg(name)?;
            pos.decode(&table, (x[(row, a)], x[(row, b)]), 1e-9)
                .ok_or_else(|| Error::Dimension(format!("register '{name}' holds no position")))
        };
        let array = |name: &str, n: usize| -> Result<Vec<u64>> {
            let c = l.col(name)?;
            (1..=n).map(|i| int(x[(i, c)])).collect()
        };
        Ok(match self.kind {
            AlgorithmKind::GetMinimum => Output::GetMinimum {
                idx_best: reg_at(0, "idx_best")?,
                val_best: int(x[(0, l.col("val_best")?)])?,
            },
            AlgorithmKind::VisitHyperedge => Output::VisitHyperedge {
                candidates: array("candidates_hyperedge", n_v)?,
            },
            AlgorithmKind::Dijkstra => Output::Dijkstra {
                dists: array("dists", n_v)?,
                prev: (1..=n_v)
                    .map(|i| reg_at(i, "prev"))
                    .collect::<Result<_>>()?,
            },
            AlgorithmKind::Helly => Output::Helly {
                helly: x[(0, l.col("helly")?)] != 0.0,
            },
        })
    }

    /// Decodes every named variable of a state into a trace record.
    pub fn snapshot(&self, pass: usize, x: &Matrix) -> Record {
        let pos = self.params.positional();
        self.snapshot_with(pass, x, &pos.table(pos.n_max()))
    }

    fn snapshot_with(&self, pass: usize, x: &Matrix, table: &[(f64, f64)]) -> Record {
        let pos = self.params.positional();
        let mut r = Record::new(pass);
        for v in &self.layout.variables {
            let value = match v.kind {
                VarKind::Scalar => Record::num(x[(0, v.cols[0])]),
                VarKind::Array => {
                    Record::list((1..x.rows()).map(|i| Record::num(x[(i, v.cols[0])])))
                }
                VarKind::Register => {
                    Record::index(pos.decode(table, (x[(0, v.cols[0])], x[(0, v.cols[1])]), 1e-9))
                }
                VarKind::RegisterArray => Record::list((1..x.rows()).map(|i| {
                    Record::index(pos.decode(table, (x[(i, v.cols[0])], x[(i, v.cols[1])]), 1e-9))
                })),
            };
            r.set(&v.name, value);
        }
        r
    }

    /// Runs the looped program to termination.
    pub fn run(&self, trace: bool) -> Result<Run> {
        let x0 = self.encode()?;
        let a = self.incidence()?;
        let pos = self.params.positional();
        let table = if trace {
            pos.table(pos.n_max())
        } else {
            Vec::new()
        };
        let mut records = Vec::new();
        if trace {
            records.push(self.snapshot_with(0, &x0, &table));
        }
        let (state, passes) = looped_run(&x0, &self.program, &a, |t, x| {
            if trace {
                records.push(self.snapshot_with(t, x, &table));
            }
        })?;
        let output = self.decode(&state)?;
        Ok(Run {
            state,
            passes,
            output,
            trace: trace.then(|| ExecutionTrace { records }),
        })
    }
}
