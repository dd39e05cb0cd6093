//! The layer instruction set: one constructor per primitive operation, each
//! emitting a single layer whose application realises the operation's
//! contract and leaves every other column untouched.
//!
//! Conventions shared by all constructors:
//! * row 0 is the top (scalar) row, rows `1..K` are array rows;
//! * booleans are exactly 0 or 1, and conditions are turned into exact
//!   gates before they touch values, so integer columns stay integral;
//! * scratch columns are zero on entry and are cleared by the same layer.

use serde::{Deserialize, Serialize};

use crate::builder::{HeadPlan, LayerPlan, Lin, Service, Unit};
use crate::error::{Error, Result};
use crate::kernel::{HeadKind, LayerWeights};
use crate::positional::Positional;

/// A pair of columns holding a position embedding.
pub type Reg = (usize, usize);

/// Whether a column lives in the top row or in the array rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Scalar,
    Array,
}

/// Everything a constructor needs besides its operands.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub svc: Service,
    pub scratch: Vec<usize>,
    /// Scope of each column; `None` for service and scratch columns.
    pub scopes: Vec<Option<Scope>>,
    pub omega: f64,
    pub pos: Positional,
    pub k: usize,
}

impl Ctx {
    fn gate_weight(&self) -> f64 {
        8.0 * self.omega
    }

    fn one(&self) -> Lin {
        Lin::from_terms(&[(self.svc.bg, 1.0), (self.svc.bl, 1.0)])
    }

    /// Scope of a column; service columns report the rows they occupy.
    pub fn scope(&self, c: usize) -> Result<Scope> {
        if c == self.svc.bg {
            return Ok(Scope::Scalar);
        }
        if c == self.svc.bl || c == self.svc.p1 || c == self.svc.p2 {
            return Ok(Scope::Array);
        }
        match self.scopes.get(c) {
            Some(Some(s)) => Ok(*s),
            Some(None) => Err(Error::Role(format!("column {c} is not an operand column"))),
            None => Err(Error::Role(format!("column {c} does not exist"))),
        }
    }

    fn expect(&self, c: usize, want: Scope, what: &str) -> Result<()> {
        let got = self.scope(c)?;
        if got == want {
            Ok(())
        } else {
            Err(Error::Role(format!(
                "{what}: column {c} is {got:?}, expected {want:?}"
            )))
        }
    }
}

/// A boolean condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cond {
    /// A 0/1 column.
    Flag { col: usize },
    /// The negation of a 0/1 column.
    NotFlag { col: usize },
    /// `on - off` for 0/1 columns with `off <= on`.
    Diff { on: usize, off: usize },
    /// Whether a scalar register holds `p_index`.
    RegisterIs { reg: Reg, index: usize },
}

/// One conditional assignment `target <- cond ? when_true : when_false`.
/// `when_false = None` keeps the old value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assign {
    pub target: usize,
    pub when_true: Lin,
    pub when_false: Option<Lin>,
}

/// `target <- [lhs < rhs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub target: usize,
    pub lhs: Lin,
    pub rhs: Lin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// `dst <- A~[row c, :]`
    Row,
    /// `dst <- A~[:, c]`
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteMode {
    Assign,
    Accumulate,
}

/// One incidence read addressed by `reg`, shifted by `offset` positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidenceRead {
    pub reg: Reg,
    pub offset: usize,
    pub axis: Axis,
    pub dst: usize,
}

/// A layer's operation, kept alongside its weights for disassembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Primitive {
    Selection {
        cond: Cond,
        assign: Vec<Assign>,
    },
    Increment {
        src: Reg,
        dst: Reg,
        gate: Option<Cond>,
    },
    CompareLt {
        items: Vec<Comparison>,
    },
    ReadScalar {
        reg: Reg,
        src: usize,
        dst: usize,
    },
    WriteScalar {
        reg: Reg,
        value: Lin,
        dst: usize,
        mode: WriteMode,
    },
    /// `dst <- all(src[1..] == expect)` for `expect` in {0, 1}.
    Termination {
        src: usize,
        dst: usize,
        expect: u8,
    },
    ReadIncidence {
        read: IncidenceRead,
    },
    /// Up to three incidence reads in one layer, routed through scratch.
    ReadIncidenceMany {
        reads: Vec<IncidenceRead>,
    },
    And {
        inputs: Vec<usize>,
        dst: usize,
    },
    /// `dst[i] <- gate[0] and dst[i] and not mask[i]`.
    RepeatAnd {
        gate: usize,
        dst: usize,
        mask: usize,
    },
    /// `dst[i] <- dst[i] + src[0]`.
    RepeatAdd {
        src: usize,
        dst: usize,
    },
    /// `dst[i] <- not(val[i] >= 1 and val[node] >= 1)` where the array
    /// register `node` holds `p_node` in every array row.
    SharedMember {
        node: Reg,
        val: usize,
        dst: usize,
    },
}

impl Primitive {
    /// Short operation name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Selection { .. } => "selection",
            Primitive::Increment { .. } => "increment",
            Primitive::CompareLt { .. } => "compare",
            Primitive::ReadScalar { .. } => "read_scalar",
            Primitive::WriteScalar { .. } => "write_scalar",
            Primitive::Termination { .. } => "termination",
            Primitive::ReadIncidence { .. } => "read_incidence",
            Primitive::ReadIncidenceMany { .. } => "read_incidence",
            Primitive::And { .. } => "and",
            Primitive::RepeatAnd { .. } => "repeat_and",
            Primitive::RepeatAdd { .. } => "repeat_add",
            Primitive::SharedMember { .. } => "compare",
        }
    }

    /// Sparse description of the layer.
    pub fn plan(&self, ctx: &Ctx) -> Result<LayerPlan> {
        let mut b = Build::new(ctx);
        match self {
            Primitive::Selection { cond, assign } => b.selection(cond, assign)?,
            Primitive::Increment { src, dst, gate } => b.increment(*src, *dst, gate.as_ref())?,
            Primitive::CompareLt { items } => b.compare(items)?,
            Primitive::ReadScalar { reg, src, dst } => b.read_scalar(*reg, *src, *dst)?,
            Primitive::WriteScalar {
                reg,
                value,
                dst,
                mode,
            } => b.write_scalar(*reg, value, *dst, *mode)?,
            Primitive::Termination { src, dst, expect } => b.termination(*src, *dst, *expect)?,
            Primitive::ReadIncidence { read } => b.read_incidence(read)?,
            Primitive::ReadIncidenceMany { reads } => b.read_incidence_many(reads)?,
            Primitive::And { inputs, dst } => b.and(inputs, *dst)?,
            Primitive::RepeatAnd { gate, dst, mask } => b.repeat_and(*gate, *dst, *mask)?,
            Primitive::RepeatAdd { src, dst } => b.repeat_add(*src, *dst)?,
            Primitive::SharedMember { node, val, dst } => b.shared_member(*node, *val, *dst)?,
        }
        b.finish()
    }

    /// Dense weights of width `d`.
    pub fn build(&self, ctx: &Ctx, d: usize) -> Result<LayerWeights> {
        self.plan(ctx)?.materialize(d)
    }
}

/// A condition turned into an exact gate.
#[derive(Clone)]
enum Gate {
    /// Linear forms of the condition `c` and its negation `w`, both exact
    /// 0/1 on the rows that matter.
    Linear { c: Lin, w: Lin },
    /// A level-2 unit equal to the negated condition.
    Negated2(Unit),
}

struct Build<'a> {
    ctx: &'a Ctx,
    plan: LayerPlan,
    free_scratch: Vec<usize>,
    used_scratch: Vec<usize>,
    broadcast_head: Option<usize>,
    gate_units: Vec<(Lin, Unit)>,
}

impl<'a> Build<'a> {
    fn new(ctx: &'a Ctx) -> Self {
        let mut free = ctx.scratch.clone();
        free.reverse();
        Self {
            ctx,
            plan: LayerPlan::new(&ctx.svc),
            free_scratch: free,
            used_scratch: Vec::new(),
            broadcast_head: None,
            gate_units: Vec::new(),
        }
    }

    fn gate_unit(&mut self, lin: &Lin) -> Unit {
        if let Some((_, u)) = self.gate_units.iter().find(|(l, _)| l == lin) {
            return *u;
        }
        let u = self.plan.mlp.relu(lin);
        self.gate_units.push((lin.clone(), u));
        u
    }

    fn svc(&self) -> Service {
        self.ctx.svc
    }

    fn take_scratch(&mut self) -> Result<usize> {
        let s = self.free_scratch.pop().ok_or_else(|| {
            Error::Role("layer needs more scratch columns than the layout has".into())
        })?;
        self.used_scratch.push(s);
        Ok(s)
    }

    fn head(&mut self, h: HeadPlan) {
        self.plan.heads.push(h);
    }

    /// Copies the top-row value of `lin` into every row of a fresh scratch
    /// column.
    fn broadcast(&mut self, lin: &Lin) -> Result<usize> {
        let s = self.take_scratch()?;
        let v: Vec<_> = lin.terms().iter().map(|&(c, k)| (c, s, k)).collect();
        match self.broadcast_head {
            Some(i) => self.plan.heads[i].v.extend(v),
            None => {
                self.broadcast_head = Some(self.plan.heads.len());
                let h = self.svc().broadcast(v);
                self.head(h);
            }
        }
        Ok(s)
    }

    /// Rewrites `lin` for use in rows of `scope`: scalar terms feeding array
    /// rows are replaced by `broadcast - original`, which equals the
    /// top-row value in array rows and 0 in the top row.
    fn adapt(&mut self, lin: &Lin, scope: Scope) -> Result<Lin> {
        let mut own = Lin::zero();
        let mut foreign = Lin::zero();
        for &(c, k) in lin.terms() {
            if self.ctx.scope(c)? == scope || c == self.svc().bl || c == self.svc().bg {
                own.push(c, k);
            } else if scope == Scope::Array {
                foreign.push(c, k);
            } else {
                return Err(Error::Role(format!(
                    "array column {c} cannot feed a scalar target"
                )));
            }
        }
        if foreign.is_zero() {
            return Ok(own);
        }
        let s = self.broadcast(&foreign)?;
        Ok(own.add(s, 1.0).minus(&foreign))
    }

    fn gate(&mut self, cond: &Cond, scope: Scope) -> Result<Gate> {
        let one = self.ctx.one();
        let flag = |b: &mut Self, col: usize| -> Result<Lin> {
            Ok(match (b.ctx.scope(col)?, scope) {
                (Scope::Scalar, Scope::Array) => Lin::col(b.broadcast(&Lin::col(col))?),
                (Scope::Array, Scope::Scalar) => {
                    return Err(Error::Role(format!(
                        "array condition column {col} cannot gate a scalar target"
                    )))
                }
                _ => Lin::col(col),
            })
        };
        Ok(match cond {
            Cond::Flag { col } => {
                let c = flag(self, *col)?;
                Gate::Linear {
                    w: one.minus(&c),
                    c,
                }
            }
            Cond::NotFlag { col } => {
                let w = flag(self, *col)?;
                Gate::Linear {
                    c: one.minus(&w),
                    w,
                }
            }
            Cond::Diff { on, off } => {
                let lin = Lin::col(*on).add(*off, -1.0);
                let c = match (self.ctx.scope(*on)?, scope) {
                    (Scope::Scalar, Scope::Array) => Lin::col(self.broadcast(&lin)?),
                    _ => lin,
                };
                Gate::Linear {
                    w: one.minus(&c),
                    c,
                }
            }
            Cond::RegisterIs { reg, index } => {
                if scope != Scope::Scalar {
                    return Err(Error::Role(
                        "register tests gate scalar targets only".into(),
                    ));
                }
                self.ctx.expect(reg.0, Scope::Scalar, "register")?;
                self.ctx.expect(reg.1, Scope::Scalar, "register")?;
                let (s, c) = self.ctx.pos.encode(*index)?;
                let m = self.ctx.pos.separation();
                let lambda = 4.0 / m;
                // a = lambda (reg . p_index - 1 + m/2): about +2 on a match,
                // at most -2 otherwise.
                let a = Lin::from_terms(&[
                    (reg.0, lambda * s),
                    (reg.1, lambda * c),
                    (self.svc().bg, lambda * (m / 2.0 - 1.0)),
                ]);
                let u = self.plan.mlp.relu(&a);
                let w = self.plan.mlp.relu_of(2, &[(u, -1.0)], 1.0);
                Gate::Negated2(w)
            }
        })
    }

    /// `target <- target + (gate ? x : 0)` for `x = value - target`.
    fn gated_delta(&mut self, target: usize, value: &Lin, gate: &Gate, negate: bool) -> Result<()> {
        let g = self.ctx.gate_weight();
        let x = value.clone().add(target, -1.0);
        let (p, n) = self.plan.mlp.split(&x);
        let (level, off) = match gate {
            Gate::Linear { c, w } => {
                let off_lin = if negate { c } else { w };
                (2, self.gate_unit(off_lin))
            }
            Gate::Negated2(w) => {
                if negate {
                    return Err(Error::Role(
                        "register-tested selections must keep the old value when false".into(),
                    ));
                }
                (3, *w)
            }
        };
        let t1 = self
            .plan
            .mlp
            .relu_of(level, &[(p, 1.0), (n, -1.0), (off, -g)], 0.0);
        let t2 = self
            .plan
            .mlp
            .relu_of(level, &[(n, 1.0), (p, -1.0), (off, -g)], 0.0);
        self.plan.mlp.emit(target, &[(t1, 1.0), (t2, -1.0)]);
        Ok(())
    }

    fn selection(&mut self, cond: &Cond, assign: &[Assign]) -> Result<()> {
        let mut gates: Vec<(Scope, Gate)> = Vec::new();
        for a in assign {
            let scope = self.ctx.scope(a.target)?;
            let gate = match gates.iter().find(|g| g.0 == scope) {
                Some(g) => g.1.clone(),
                None => {
                    let g = self.gate(cond, scope)?;
                    gates.push((scope, g.clone()));
                    g
                }
            };
            let keep = Lin::col(a.target);
            if a.when_true != keep {
                let v = self.adapt(&a.when_true, scope)?;
                self.gated_delta(a.target, &v, &gate, false)?;
            }
            if let Some(f) = &a.when_false {
                if *f != keep {
                    let v = self.adapt(f, scope)?;
                    self.gated_delta(a.target, &v, &gate, true)?;
                }
            }
        }
        Ok(())
    }

    fn increment(&mut self, src: Reg, dst: Reg, gate: Option<&Cond>) -> Result<()> {
        for c in [src.0, src.1, dst.0, dst.1] {
            self.ctx.expect(c, Scope::Scalar, "increment register")?;
        }
        let (c, s) = self.ctx.pos.rotation();
        let new1 = Lin::from_terms(&[(src.0, c), (src.1, s)]);
        let new2 = Lin::from_terms(&[(src.0, -s), (src.1, c)]);
        match gate {
            None => {
                self.plan.mlp.emit_linear(dst.0, &new1.add(dst.0, -1.0));
                self.plan.mlp.emit_linear(dst.1, &new2.add(dst.1, -1.0));
                Ok(())
            }
            Some(cond) => self.selection(
                cond,
                &[
                    Assign {
                        target: dst.0,
                        when_true: new1,
                        when_false: None,
                    },
                    Assign {
                        target: dst.1,
                        when_true: new2,
                        when_false: None,
                    },
                ],
            ),
        }
    }

    /// Adds `-target` to `target`.
    fn erase(&mut self, target: usize) {
        let (p, n) = self.plan.mlp.split(&Lin::col(target));
        self.plan.mlp.emit(target, &[(p, -1.0), (n, 1.0)]);
    }

    fn compare(&mut self, items: &[Comparison]) -> Result<()> {
        for it in items {
            let scope = self.ctx.scope(it.target)?;
            let lhs = self.adapt(&it.lhs, scope)?;
            let rhs = self.adapt(&it.rhs, scope)?;
            // [lhs < rhs] = phi(a) - phi(a - 1) with a = omega (rhs - lhs)
            let a = rhs.minus(&lhs).scale(self.ctx.omega);
            let u1 = self.plan.mlp.relu(&a);
            let u2 = self.plan.mlp.relu(&a.minus(&self.ctx.one()));
            self.plan.mlp.emit(it.target, &[(u1, 1.0), (u2, -1.0)]);
            self.erase(it.target);
        }
        Ok(())
    }

    /// Emits `top <- value` where `value` is a column that is meaningful in
    /// the top row only (array rows of `value` hold junk, `|junk| < G`).
    fn move_top(&mut self, value: usize, top: usize) {
        let g = self.ctx.gate_weight();
        let bl = self.svc().bl;
        let p = self.plan.mlp.relu(&Lin::col(value).add(bl, -g));
        let n = self.plan.mlp.relu(&Lin::scaled(value, -1.0).add(bl, -g));
        self.plan.mlp.emit(top, &[(p, 1.0), (n, -1.0)]);
    }

    fn clear(&mut self, col: usize) {
        self.erase(col);
    }

    fn read_scalar(&mut self, reg: Reg, src: usize, dst: usize) -> Result<()> {
        self.ctx.expect(reg.0, Scope::Scalar, "read register")?;
        self.ctx.expect(reg.1, Scope::Scalar, "read register")?;
        self.ctx.expect(src, Scope::Array, "read source")?;
        self.ctx.expect(dst, Scope::Scalar, "read target")?;
        let s = self.take_scratch()?;
        let h = self.svc().lookup(reg, vec![(src, s, 1.0)]);
        self.head(h);
        self.move_top(s, dst);
        self.erase(dst);
        Ok(())
    }

    fn write_scalar(&mut self, reg: Reg, value: &Lin, dst: usize, mode: WriteMode) -> Result<()> {
        self.ctx.expect(reg.0, Scope::Scalar, "write register")?;
        self.ctx.expect(reg.1, Scope::Scalar, "write register")?;
        self.ctx.expect(dst, Scope::Array, "write target")?;
        for c in value.columns() {
            self.ctx.expect(c, Scope::Scalar, "write value")?;
        }
        let svc = self.svc();
        match mode {
            WriteMode::Accumulate => {
                let v = value
                    .terms()
                    .iter()
                    .map(|&(c, k)| (c, dst, 2.0 * k))
                    .collect();
                let h = svc.address(HeadKind::Identity, reg, (1.0, 0.0), v);
                self.head(h);
                // the top row received an average; take it back out
                let g = self.ctx.gate_weight();
                let p = self.plan.mlp.relu(&Lin::col(dst).add(svc.bl, -g));
                let n = self.plan.mlp.relu(&Lin::scaled(dst, -1.0).add(svc.bl, -g));
                self.plan.mlp.emit(dst, &[(p, -1.0), (n, 1.0)]);
            }
            WriteMode::Assign => {
                let sv = self.take_scratch()?;
                let sm = self.take_scratch()?;
                let mut v: Vec<_> = value
                    .terms()
                    .iter()
                    .map(|&(c, k)| (c, sv, 2.0 * k))
                    .collect();
                v.push((svc.bg, sm, 2.0));
                let h = svc.address(HeadKind::Identity, reg, (1.0, 0.0), v);
                self.head(h);
                // the marker is exactly 1 on the target row and 0 on other
                // array rows; in the top row it is 2/K, and the extra B_global
                // keeps the gate closed there
                let gate = Gate::Linear {
                    c: Lin::col(sm),
                    w: Lin::from_terms(&[(svc.bg, 2.0), (svc.bl, 1.0), (sm, -1.0)]),
                };
                self.gated_delta(dst, &Lin::col(sv), &gate, false)?;
            }
        }
        Ok(())
    }

    fn termination(&mut self, src: usize, dst: usize, expect: u8) -> Result<()> {
        self.ctx.expect(src, Scope::Array, "termination source")?;
        self.ctx.expect(dst, Scope::Scalar, "termination target")?;
        let rows = self.ctx.k.saturating_sub(1) as f64;
        if self.ctx.omega < rows {
            return Err(Error::Params(format!(
                "termination needs omega >= K - 1 ({} < {rows})",
                self.ctx.omega
            )));
        }
        let svc = self.svc();
        let om = self.ctx.omega;
        let h = svc.identity(vec![(svc.bg, dst, 1.0), (dst, dst, -1.0)]);
        self.head(h);
        let v = match expect {
            1 => vec![(src, dst, om), (svc.bl, dst, -om)],
            0 => vec![(src, dst, -om)],
            _ => return Err(Error::Params("termination tests for all 0 or all 1".into())),
        };
        let h = svc.average(v);
        self.head(h);
        let u = self.plan.mlp.relu(&Lin::scaled(dst, -1.0));
        self.plan.mlp.emit(dst, &[(u, 1.0)]);
        Ok(())
    }

    fn incidence_head(&self, r: &IncidenceRead, dst: usize) -> Result<HeadPlan> {
        self.ctx
            .expect(r.reg.0, Scope::Scalar, "incidence register")?;
        self.ctx
            .expect(r.reg.1, Scope::Scalar, "incidence register")?;
        let kind = match r.axis {
            Axis::Column => HeadKind::Incidence,
            Axis::Row => HeadKind::IncidenceTranspose,
        };
        let angle = self.ctx.pos.delta_hat() * r.offset as f64;
        let rot = if r.offset == 0 {
            (1.0, 0.0)
        } else {
            (angle.cos(), angle.sin())
        };
        Ok(self
            .svc()
            .address(kind, r.reg, rot, vec![(self.svc().bg, dst, 2.0)]))
    }

    fn read_incidence(&mut self, r: &IncidenceRead) -> Result<()> {
        self.ctx.expect(r.dst, Scope::Array, "incidence target")?;
        let h = self.incidence_head(r, r.dst)?;
        self.head(h);
        let h = self.svc().identity(vec![(r.dst, r.dst, -1.0)]);
        self.head(h);
        Ok(())
    }

    fn read_incidence_many(&mut self, reads: &[IncidenceRead]) -> Result<()> {
        for r in reads {
            self.ctx.expect(r.dst, Scope::Array, "incidence target")?;
            let s = self.take_scratch()?;
            let h = self.incidence_head(r, s)?;
            self.head(h);
            self.plan
                .mlp
                .emit_linear(r.dst, &Lin::col(s).add(r.dst, -1.0));
        }
        Ok(())
    }

    fn and(&mut self, inputs: &[usize], dst: usize) -> Result<()> {
        let scope = self.ctx.scope(dst)?;
        let mut sum = Lin::zero();
        for &c in inputs {
            sum.push(c, 1.0);
        }
        let sum = self.adapt(&sum, scope)?;
        let n = inputs.len() as f64;
        let u = self
            .plan
            .mlp
            .relu(&sum.minus(&self.ctx.one().scale(n - 1.0)));
        self.plan.mlp.emit(dst, &[(u, 1.0)]);
        self.erase(dst);
        Ok(())
    }

    fn repeat_and(&mut self, gate: usize, dst: usize, mask: usize) -> Result<()> {
        self.ctx.expect(gate, Scope::Scalar, "repeat-and gate")?;
        self.ctx.expect(dst, Scope::Array, "repeat-and target")?;
        self.ctx.expect(mask, Scope::Array, "repeat-and mask")?;
        let s = self.broadcast(&Lin::col(gate))?;
        let svc = self.svc();
        let lin = Lin::from_terms(&[
            (s, 1.0),
            (dst, 1.0),
            (mask, -1.0),
            (svc.bg, -2.0),
            (svc.bl, -1.0),
        ]);
        let u = self.plan.mlp.relu(&lin);
        self.plan.mlp.emit(dst, &[(u, 1.0)]);
        self.erase(dst);
        Ok(())
    }

    fn repeat_add(&mut self, src: usize, dst: usize) -> Result<()> {
        self.ctx.expect(src, Scope::Scalar, "repeat-add source")?;
        self.ctx.expect(dst, Scope::Array, "repeat-add target")?;
        let svc = self.svc();
        let h = svc.broadcast(vec![(src, dst, 1.0)]);
        self.head(h);
        let h = svc.identity(vec![(src, dst, -1.0)]);
        self.head(h);
        Ok(())
    }

    fn shared_member(&mut self, node: Reg, val: usize, dst: usize) -> Result<()> {
        self.ctx.expect(node.0, Scope::Array, "node register")?;
        self.ctx.expect(node.1, Scope::Array, "node register")?;
        self.ctx.expect(val, Scope::Array, "membership values")?;
        self.ctx.expect(dst, Scope::Array, "membership target")?;
        let s = self.take_scratch()?;
        let h = self.svc().lookup(node, vec![(val, s, 1.0)]);
        self.head(h);
        let svc = self.svc();
        let one = self.ctx.one();
        let m = &mut self.plan.mlp;
        // a = [val >= 1], b = [val[node] >= 1]
        let a1 = m.relu(&Lin::col(val));
        let a2 = m.relu(&Lin::col(val).minus(&one));
        let b1 = m.relu(&Lin::col(s));
        let b2 = m.relu(&Lin::col(s).minus(&one));
        let bg = m.relu(&Lin::col(svc.bg));
        let both = m.relu_of(
            2,
            &[(a1, 1.0), (a2, -1.0), (b1, 1.0), (b2, -1.0), (bg, -2.0)],
            -1.0,
        );
        let bl = m.relu(&Lin::col(svc.bl));
        m.emit(dst, &[(bl, 1.0), (both, -1.0)]);
        self.erase(dst);
        Ok(())
    }

    fn finish(mut self) -> Result<LayerPlan> {
        for s in std::mem::take(&mut self.used_scratch) {
            self.clear(s);
        }
        if self.plan.heads.len() > crate::kernel::MAX_HEADS {
            return Err(Error::Dimension(format!(
                "operation needs {} heads",
                self.plan.heads.len()
            )));
        }
        Ok(self.plan)
    }
}

macro_rules! make {
    ($(#[$m:meta])* $name:ident($($arg:ident: $ty:ty),*) => $variant:expr) => {
        $(#[$m])*
        pub fn $name(ctx: &Ctx, d: usize, $($arg: $ty),*) -> Result<LayerWeights> {
            $variant.build(ctx, d)
        }
    };
}

make!(
    /// `E <- C ? V1 : V0` row by row.
    make_selection(cond: Cond, assign: Vec<Assign>) => Primitive::Selection { cond, assign }
);
make!(
    /// `(D1, D2) <- R^T (C1, C2)`.
    make_increment(src: Reg, dst: Reg) => Primitive::Increment { src, dst, gate: None }
);
make!(
    /// `E <- [C < D]`.
    make_compare_lt(target: usize, lhs: Lin, rhs: Lin) =>
        Primitive::CompareLt { items: vec![Comparison { target, lhs, rhs }] }
);
make!(
    /// `E[top] <- D[row addressed by reg]`.
    make_read_scalar(reg: Reg, src: usize, dst: usize) => Primitive::ReadScalar { reg, src, dst }
);
make!(
    /// `E[row addressed by reg] <- value[top]`.
    make_write_scalar(reg: Reg, value: Lin, dst: usize, mode: WriteMode) =>
        Primitive::WriteScalar { reg, value, dst, mode }
);
make!(
    /// `E <- no zero in C[1..]`.
    make_termination_allones(src: usize, dst: usize) => Primitive::Termination { src, dst, expect: 1 }
);
make!(
    /// `D <- A~[c, :]` or `D <- A~[:, c]`.
    make_read_incidence(reg: Reg, axis: Axis, dst: usize) =>
        Primitive::ReadIncidence { read: IncidenceRead { reg, offset: 0, axis, dst } }
);
make!(
    /// `E <- C and D`.
    make_and(a: usize, b: usize, dst: usize) => Primitive::And { inputs: vec![a, b], dst }
);
make!(
    /// `D[i] <- C[top] and D[i] and not E[i]`.
    make_repeat_and(gate: usize, dst: usize, mask: usize) => Primitive::RepeatAnd { gate, dst, mask }
);
make!(
    /// `D[i] <- D[i] + C[top]`.
    make_repeat_add(src: usize, dst: usize) => Primitive::RepeatAdd { src, dst }
);
