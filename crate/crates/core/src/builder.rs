//! A small DSL for writing layers by hand.
//!
//! Heads are described by sparse query/key/value wiring. The MLP is described
//! as ReLU units on three levels: level-1 units read state columns, level-k
//! units read units of lower levels (carried upward by identity units, which
//! is exact because unit values are non-negative). Output deltas are linear
//! combinations of units and land in `W4`.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::kernel::{AttentionHead, HeadKind, LayerWeights, Mlp, HEAD_DIM, MAX_HEADS};
use crate::matrix::Matrix;

/// A linear combination of state columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lin(Vec<(usize, f64)>);

impl Lin {
    pub fn zero() -> Self {
        Self(Vec::new())
    }

    pub fn col(c: usize) -> Self {
        Self(vec![(c, 1.0)])
    }

    pub fn scaled(c: usize, k: f64) -> Self {
        Self(vec![(c, k)])
    }

    pub fn from_terms(terms: &[(usize, f64)]) -> Self {
        let mut l = Self::zero();
        for &(c, k) in terms {
            l.push(c, k);
        }
        l
    }

    pub fn push(&mut self, c: usize, k: f64) {
        if let Some(t) = self.0.iter_mut().find(|t| t.0 == c) {
            t.1 += k;
        } else {
            self.0.push((c, k));
        }
        self.0.retain(|t| t.1 != 0.0);
    }

    pub fn plus(mut self, other: &Lin) -> Self {
        for &(c, k) in &other.0 {
            self.push(c, k);
        }
        self
    }

    pub fn minus(self, other: &Lin) -> Self {
        self.plus(&other.neg())
    }

    pub fn add(mut self, c: usize, k: f64) -> Self {
        self.push(c, k);
        self
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|&(c, k)| (c, -k)).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|&(c, k)| (c, k * s)).collect())
    }

    pub fn terms(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|t| t.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        self.0.iter().map(|&(c, k)| row[c] * k).sum()
    }
}

/// Handle to a ReLU unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Unit {
    level: u8,
    idx: usize,
}

impl Unit {
    pub fn level(&self) -> u8 {
        self.level
    }
}

pub const LEVELS: u8 = 3;

/// The MLP part of a layer under construction.
#[derive(Debug, Clone)]
pub struct MlpPlan {
    bg: usize,
    bl: usize,
    // levels[l][u] = input terms of unit u on level l+1
    levels: [Vec<Vec<(usize, f64)>>; LEVELS as usize],
    carried: HashMap<(Unit, u8), Unit>,
    one: Option<Unit>,
    outputs: BTreeMap<usize, Vec<(Unit, f64)>>,
}

impl MlpPlan {
    pub fn new(bg: usize, bl: usize) -> Self {
        Self {
            bg,
            bl,
            levels: Default::default(),
            carried: HashMap::new(),
            one: None,
            outputs: BTreeMap::new(),
        }
    }

    fn push_unit(&mut self, level: u8, terms: Vec<(usize, f64)>) -> Unit {
        let units = &mut self.levels[level as usize - 1];
        units.push(terms);
        Unit {
            level,
            idx: units.len() - 1,
        }
    }

    /// Level-1 unit `phi(lin)`.
    pub fn relu(&mut self, lin: &Lin) -> Unit {
        let mut terms = lin.terms().to_vec();
        terms.sort_by_key(|t| t.0);
        self.push_unit(1, terms)
    }

    /// The constant-one unit `phi(B_global + B_local)` on `level`.
    pub fn one(&mut self, level: u8) -> Unit {
        let base = match self.one {
            Some(u) => u,
            None => {
                let u = self.relu(&Lin::from_terms(&[(self.bg, 1.0), (self.bl, 1.0)]));
                self.one = Some(u);
                u
            }
        };
        self.lift(base, level)
    }

    /// The same value as `u`, available on `level`.
    pub fn lift(&mut self, u: Unit, level: u8) -> Unit {
        assert!(
            level >= u.level && level <= LEVELS,
            "cannot lift to level {level}"
        );
        let mut cur = u;
        while cur.level < level {
            let key = (cur, cur.level + 1);
            cur = match self.carried.get(&key) {
                Some(&c) => c,
                None => {
                    let c = self.push_unit(cur.level + 1, vec![(cur.idx, 1.0)]);
                    self.carried.insert(key, c);
                    c
                }
            };
        }
        cur
    }

    /// Unit `phi(sum coef * u + constant)` on `level` (2 or 3).
    pub fn relu_of(&mut self, level: u8, terms: &[(Unit, f64)], constant: f64) -> Unit {
        assert!((2..=LEVELS).contains(&level));
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(u, k) in terms {
            let l = self.lift(u, level - 1);
            *acc.entry(l.idx).or_insert(0.0) += k;
        }
        if constant != 0.0 {
            let one = self.one(level - 1);
            *acc.entry(one.idx).or_insert(0.0) += constant;
        }
        let terms: Vec<(usize, f64)> = acc.into_iter().filter(|t| t.1 != 0.0).collect();
        self.push_unit(level, terms)
    }

    /// Adds `sum coef * u` to column `col`.
    pub fn emit(&mut self, col: usize, terms: &[(Unit, f64)]) {
        for &(u, k) in terms {
            let l = self.lift(u, LEVELS);
            let out = self.outputs.entry(col).or_default();
            if let Some(t) = out.iter_mut().find(|t| t.0 == l) {
                t.1 += k;
            } else {
                out.push((l, k));
            }
        }
    }

    /// Adds an arbitrary-sign linear expression to `col`, as
    /// `phi(lin) - phi(-lin)`.
    pub fn emit_linear(&mut self, col: usize, lin: &Lin) {
        if lin.is_zero() {
            return;
        }
        let p = self.relu(lin);
        let n = self.relu(&lin.neg());
        self.emit(col, &[(p, 1.0), (n, -1.0)]);
    }

    /// The pair `(phi(lin), phi(-lin))` whose difference is `lin`.
    pub fn split(&mut self, lin: &Lin) -> (Unit, Unit) {
        (self.relu(lin), self.relu(&lin.neg()))
    }

    pub fn level_sizes(&self) -> [usize; LEVELS as usize] {
        [
            self.levels[0].len(),
            self.levels[1].len(),
            self.levels[2].len(),
        ]
    }

    pub fn written_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.outputs.keys().copied()
    }

    fn materialize(&self, d: usize) -> Result<Mlp> {
        let mut mlp = Mlp::zeros(d);
        for (l, units) in self.levels.iter().enumerate() {
            if units.len() > d {
                return Err(Error::Dimension(format!(
                    "MLP level {} needs {} units but the width is {d}",
                    l + 1,
                    units.len()
                )));
            }
            for (u, terms) in units.iter().enumerate() {
                for &(src, k) in terms {
                    if src >= d {
                        return Err(Error::Dimension(format!("column {src} outside width {d}")));
                    }
                    mlp.w[l][(src, u)] += k;
                }
            }
        }
        for (&col, terms) in &self.outputs {
            if col >= d {
                return Err(Error::Dimension(format!("column {col} outside width {d}")));
            }
            for &(u, k) in terms {
                mlp.w[LEVELS as usize][(u.idx, col)] += k;
            }
        }
        Ok(mlp)
    }
}

/// An attention head as sparse wiring.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadPlan {
    pub kind: HeadKind,
    /// `(column, query dimension, weight)`
    pub q: Vec<(usize, usize, f64)>,
    pub k: Vec<(usize, usize, f64)>,
    /// `(source column, destination column, weight)`
    pub v: Vec<(usize, usize, f64)>,
}

impl HeadPlan {
    fn materialize(&self, d: usize) -> Result<AttentionHead> {
        let mut h = AttentionHead::zeros(self.kind, d);
        let bad = |c: usize| Error::Dimension(format!("column {c} outside width {d}"));
        for &(c, t, w) in &self.q {
            if c >= d || t >= HEAD_DIM {
                return Err(bad(c));
            }
            h.w_q[(c, t)] += w;
        }
        for &(c, t, w) in &self.k {
            if c >= d || t >= HEAD_DIM {
                return Err(bad(c));
            }
            h.w_k[(c, t)] += w;
        }
        for &(s, t, w) in &self.v {
            if s >= d || t >= d {
                return Err(bad(s.max(t)));
            }
            h.w_v[(s, t)] += w;
        }
        Ok(h)
    }
}

/// Service columns every head pattern relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Service {
    pub bg: usize,
    pub bl: usize,
    pub p1: usize,
    pub p2: usize,
}

impl Service {
    /// Every row attends itself: `q = k = p_i` (row 0 carries `p_0`).
    pub fn identity(&self, v: Vec<(usize, usize, f64)>) -> HeadPlan {
        let qk = vec![(self.p1, 0, 1.0), (self.p2, 1, 1.0), (self.bg, 1, 1.0)];
        HeadPlan {
            kind: HeadKind::Identity,
            q: qk.clone(),
            k: qk,
            v,
        }
    }

    /// Every row attends the top row.
    pub fn broadcast(&self, v: Vec<(usize, usize, f64)>) -> HeadPlan {
        HeadPlan {
            kind: HeadKind::Identity,
            q: vec![
                (self.bg, 0, 1.0),
                (self.bg, 1, 1.0),
                (self.bl, 0, 1.0),
                (self.bl, 1, 1.0),
            ],
            k: vec![(self.bg, 0, 1.0), (self.bg, 1, 1.0)],
            v,
        }
    }

    /// Rows whose query register `(r1, r2)` holds `p_c` attend row `c`.
    /// Rows with an all-zero register average over every row.
    pub fn lookup(&self, reg: (usize, usize), v: Vec<(usize, usize, f64)>) -> HeadPlan {
        HeadPlan {
            kind: HeadKind::Identity,
            q: vec![(reg.0, 0, 1.0), (reg.1, 1, 1.0)],
            k: vec![(self.p1, 0, 1.0), (self.p2, 1, 1.0), (self.bg, 1, 1.0)],
            v,
        }
    }

    /// Row `c + offset` (with the scalar register holding `p_c`) splits its
    /// attention between itself and the top row; every other array row
    /// attends itself; the top row averages over all rows.
    pub fn address(
        &self,
        kind: HeadKind,
        reg: (usize, usize),
        rotation: (f64, f64),
        v: Vec<(usize, usize, f64)>,
    ) -> HeadPlan {
        let (c, s) = rotation;
        let mut k = vec![(self.p1, 0, 1.0), (self.p2, 1, 1.0)];
        for (col, t, w) in [(reg.0, 0, c), (reg.1, 0, s), (reg.0, 1, -s), (reg.1, 1, c)] {
            if w != 0.0 {
                k.push((col, t, w));
            }
        }
        HeadPlan {
            kind,
            q: vec![(self.p1, 0, 1.0), (self.p2, 1, 1.0)],
            k,
            v,
        }
    }

    /// The top row averages over the array rows; array rows attend the top
    /// row.
    pub fn average(&self, v: Vec<(usize, usize, f64)>) -> HeadPlan {
        HeadPlan {
            kind: HeadKind::Identity,
            q: vec![
                (self.bg, 0, 1.0),
                (self.bg, 1, 1.0),
                (self.bl, 0, -1.0),
                (self.bl, 1, -1.0),
            ],
            k: vec![
                (self.bg, 0, -1.0),
                (self.bg, 1, -1.0),
                (self.bl, 0, 1.0),
                (self.bl, 1, 1.0),
            ],
            v,
        }
    }
}

/// A whole layer under construction.
#[derive(Debug, Clone)]
pub struct LayerPlan {
    pub heads: Vec<HeadPlan>,
    pub mlp: MlpPlan,
}

impl LayerPlan {
    pub fn new(svc: &Service) -> Self {
        Self {
            heads: Vec::new(),
            mlp: MlpPlan::new(svc.bg, svc.bl),
        }
    }

    /// Smallest width that holds every unit level.
    pub fn units_needed(&self) -> usize {
        self.mlp.level_sizes().into_iter().max().unwrap_or(0)
    }

    /// Columns this layer may change.
    pub fn write_set(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self
            .heads
            .iter()
            .flat_map(|h| h.v.iter().map(|t| t.1))
            .chain(self.mlp.written_columns())
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    pub fn materialize(&self, d: usize) -> Result<LayerWeights> {
        if self.heads.len() > MAX_HEADS {
            return Err(Error::Dimension(format!(
                "{} heads exceed the limit of {MAX_HEADS}",
                self.heads.len()
            )));
        }
        let heads = self
            .heads
            .iter()
            .map(|h| h.materialize(d))
            .collect::<Result<Vec<_>>>()?;
        Ok(LayerWeights {
            heads,
            mlp: self.mlp.materialize(d)?,
        })
    }
}

/// Convenience for building a dense test state from named rows.
pub fn state_from_columns(k: usize, d: usize, cols: &[(usize, Vec<f64>)]) -> Matrix {
    let mut x = Matrix::zeros(k, d);
    for (c, vals) in cols {
        x.set_column(*c, vals);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::PaddedIncidence;
    use crate::kernel::apply_layer;

    #[test]
    fn lin_merges_terms() {
        let l = Lin::col(3).add(1, 2.0).add(3, -1.0);
        assert_eq!(l.terms(), &[(1, 2.0)]);
        assert_eq!(Lin::col(0).minus(&Lin::col(0)), Lin::zero());
    }

    #[test]
    fn emit_linear_passes_signed_values() {
        // columns: 0 bg, 1 bl, 2 a, 3 out
        let mut plan = LayerPlan::new(&Service {
            bg: 0,
            bl: 1,
            p1: 4,
            p2: 5,
        });
        plan.mlp.emit_linear(3, &Lin::col(2).scale(-2.0));
        let w = plan.materialize(6).unwrap();
        let x = state_from_columns(
            3,
            6,
            &[
                (0, vec![1.0, 0.0, 0.0]),
                (1, vec![0.0, 1.0, 1.0]),
                (2, vec![1.5, -4.0, 0.0]),
            ],
        );
        let a = PaddedIncidence::from_matrix(Matrix::zeros(3, 3)).unwrap();
        let y = apply_layer(&x, &w, &a).unwrap();
        assert_eq!(y.column(3), vec![-3.0, 8.0, 0.0]);
        assert_eq!(y.column(2), x.column(2));
    }

    #[test]
    fn lifted_units_share_carries() {
        let mut m = MlpPlan::new(0, 1);
        let u = m.relu(&Lin::col(2));
        let a = m.lift(u, 3);
        let b = m.lift(u, 3);
        assert_eq!(a, b);
        assert_eq!(m.level_sizes(), [1, 1, 1]);
        m.one(2);
        assert_eq!(m.level_sizes(), [2, 2, 1]);
    }
}
