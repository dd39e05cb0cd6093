//! Shared fixtures and randomized contracts for the layer constructors.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hyperloop::builder::{Lin, Service};
use hyperloop::hypergraph::{build_incidence, pad_incidence, PaddedIncidence};
use hyperloop::kernel::{apply_layer, apply_layer_dense, LayerWeights, MAX_HEADS, MLP_DEPTH};
use hyperloop::matrix::Matrix;
use hyperloop::oracle::random_hypergraph;
use hyperloop::positional::Positional;
use hyperloop::primitives::*;

pub const D: usize = 64;
pub const BG: usize = 0;
pub const BL: usize = 1;
pub const SCRATCH: [usize; 3] = [4, 5, 6];
pub const S: [usize; 5] = [7, 8, 9, 10, 11];
pub const R: Reg = (12, 13);
pub const Q: Reg = (14, 15);
pub const A: [usize; 5] = [16, 17, 18, 19, 20];
pub const RA: Reg = (21, 22);

pub fn ctx(k: usize, omega: f64, n_max: usize) -> Ctx {
    let mut scopes = vec![None; D];
    for c in S.into_iter().chain([R.0, R.1, Q.0, Q.1]) {
        scopes[c] = Some(Scope::Scalar);
    }
    for c in A.into_iter().chain([RA.0, RA.1]) {
        scopes[c] = Some(Scope::Array);
    }
    Ctx {
        svc: Service {
            bg: BG,
            bl: BL,
            p1: 2,
            p2: 3,
        },
        scratch: SCRATCH.to_vec(),
        scopes,
        omega,
        pos: Positional::new(n_max).unwrap(),
        k,
    }
}

pub fn base(k: usize, pos: &Positional) -> Matrix {
    let mut x = Matrix::zeros(k, D);
    let table = pos.table(k);
    x[(0, BG)] = 1.0;
    for i in 1..k {
        x[(i, BL)] = 1.0;
        x[(i, 2)] = table[i].0;
        x[(i, 3)] = table[i].1;
    }
    x
}

pub fn empty_incidence(k: usize) -> PaddedIncidence {
    PaddedIncidence::from_matrix(Matrix::zeros(k, k)).unwrap()
}

pub fn set_scalar(x: &mut Matrix, c: usize, v: f64) {
    x[(0, c)] = v;
}

pub fn set_array(x: &mut Matrix, c: usize, v: &[f64]) {
    for (i, &val) in v.iter().enumerate() {
        x[(i + 1, c)] = val;
    }
}

pub fn set_reg(x: &mut Matrix, r: Reg, p: (f64, f64)) {
    x[(0, r.0)] = p.0;
    x[(0, r.1)] = p.1;
}

pub fn array(x: &Matrix, c: usize) -> Vec<f64> {
    x.column(c)[1..].to_vec()
}

/// Applies a layer through both kernels, checks they agree bitwise and that
/// only `writes` changed, and returns the new state.
pub fn apply(w: &LayerWeights, x: &Matrix, a: &PaddedIncidence, writes: &[usize]) -> Matrix {
    assert!(w.heads.len() <= MAX_HEADS);
    assert_eq!(w.mlp.w.len(), MLP_DEPTH);
    let y = apply_layer(x, w, a).unwrap();
    let dense = apply_layer_dense(x, w, a).unwrap();
    assert!(
        y.as_slice()
            .iter()
            .zip(dense.as_slice())
            .all(|(p, q)| p.to_bits() == q.to_bits()),
        "sparse and dense kernels disagree"
    );
    for c in 0..D {
        if writes.contains(&c) {
            continue;
        }
        for i in 0..x.rows() {
            assert_eq!(
                y[(i, c)].to_bits(),
                x[(i, c)].to_bits(),
                "column {c} row {i} changed from {} to {}",
                x[(i, c)],
                y[(i, c)]
            );
        }
    }
    y
}

pub struct Case {
    rng: ChaCha8Rng,
    k: usize,
    omega: f64,
    ctx: Ctx,
    x: Matrix,
}

impl Case {
    fn new(seed: u64, n_max: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(2..=12);
        let omega = rng.gen_range(k as u64..=60) as f64;
        let ctx = ctx(k, omega, n_max);
        let x = base(k, &ctx.pos);
        Self {
            rng,
            k,
            omega,
            ctx,
            x,
        }
    }

    fn int(&mut self) -> f64 {
        let om = self.omega as i64;
        self.rng.gen_range(-om..=om) as f64
    }

    fn bit(&mut self) -> f64 {
        if self.rng.gen_bool(0.5) {
            1.0
        } else {
            0.0
        }
    }

    fn ints(&mut self) -> Vec<f64> {
        (1..self.k).map(|_| self.int()).collect()
    }

    fn bits(&mut self) -> Vec<f64> {
        (1..self.k).map(|_| self.bit()).collect()
    }

    fn scalar(&mut self, c: usize, v: f64) {
        set_scalar(&mut self.x, c, v);
    }

    fn array(&mut self, c: usize, v: &[f64]) {
        set_array(&mut self.x, c, v);
    }

    fn register(&mut self, r: Reg, i: usize) {
        let p = self.ctx.pos.encode(i).unwrap();
        set_reg(&mut self.x, r, p);
    }

    fn apply(&self, w: &LayerWeights, writes: &[usize]) -> Matrix {
        apply(w, &self.x, &empty_incidence(self.k), writes)
    }
}

/// Runs `f` on `cases` values drawn from `strategy` with a fixed seed.
fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    f: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, f).map_err(|e| e.to_string())
}

pub fn selection_contract(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 0u8..6), |(seed, variant)| {
        let mut t = Case::new(seed, 64);
        match variant {
            // scalar flag, scalar operands, explicit false branch
            0 | 1 => {
                let (cond, v1, v0, old) = (t.bit(), t.int(), t.int(), t.int());
                t.scalar(S[0], cond);
                t.scalar(S[1], v1);
                t.scalar(S[2], v0);
                t.scalar(S[3], old);
                let cnd = if variant == 0 {
                    Cond::Flag { col: S[0] }
                } else {
                    Cond::NotFlag { col: S[0] }
                };
                let active = (cond == 1.0) == (variant == 0);
                let w = make_selection(
                    &t.ctx,
                    D,
                    cnd,
                    vec![Assign {
                        target: S[3],
                        when_true: Lin::col(S[1]),
                        when_false: Some(Lin::col(S[2])),
                    }],
                )
                .unwrap();
                let y = t.apply(&w, &[S[3]]);
                prop_assert_eq!(y[(0, S[3])], if active { v1 } else { v0 });
            }
            // array flag; one target keeps its value, one takes a scalar
            2 => {
                let (cond, v1, old, old2) = (t.bits(), t.ints(), t.ints(), t.ints());
                let s = t.int();
                t.array(A[0], &cond);
                t.array(A[1], &v1);
                t.array(A[2], &old);
                t.array(A[3], &old2);
                t.scalar(S[0], s);
                let w = make_selection(
                    &t.ctx,
                    D,
                    Cond::Flag { col: A[0] },
                    vec![
                        Assign {
                            target: A[2],
                            when_true: Lin::col(A[1]),
                            when_false: None,
                        },
                        Assign {
                            target: A[3],
                            when_true: Lin::col(S[0]),
                            when_false: Some(Lin::col(A[1])),
                        },
                    ],
                )
                .unwrap();
                let y = t.apply(&w, &[A[2], A[3]]);
                prop_assert_eq!(y[(0, A[2])], 0.0);
                prop_assert_eq!(y[(0, A[3])], 0.0);
                for i in 0..t.k - 1 {
                    prop_assert_eq!(
                        y[(i + 1, A[2])],
                        if cond[i] == 1.0 { v1[i] } else { old[i] }
                    );
                    prop_assert_eq!(y[(i + 1, A[3])], if cond[i] == 1.0 { s } else { v1[i] });
                }
            }
            // scalar flag gating an array target
            3 => {
                let (cond, v1, old) = (t.bit(), t.ints(), t.ints());
                t.scalar(S[0], cond);
                t.array(A[1], &v1);
                t.array(A[2], &old);
                let w = make_selection(
                    &t.ctx,
                    D,
                    Cond::Flag { col: S[0] },
                    vec![Assign {
                        target: A[2],
                        when_true: Lin::col(A[1]).add(BL, 2.0),
                        when_false: None,
                    }],
                )
                .unwrap();
                let y = t.apply(&w, &[A[2]]);
                let want: Vec<f64> = (0..t.k - 1)
                    .map(|i| if cond == 1.0 { v1[i] + 2.0 } else { old[i] })
                    .collect();
                prop_assert_eq!(array(&y, A[2]), want);
                prop_assert_eq!(y[(0, A[2])], 0.0);
            }
            // difference of two flags
            4 => {
                let on = t.bit();
                let off = if on == 1.0 { t.bit() } else { 0.0 };
                let (v1, old) = (t.int(), t.int());
                t.scalar(S[0], on);
                t.scalar(S[1], off);
                t.scalar(S[2], v1);
                t.scalar(S[3], old);
                let w = make_selection(
                    &t.ctx,
                    D,
                    Cond::Diff {
                        on: S[0],
                        off: S[1],
                    },
                    vec![Assign {
                        target: S[3],
                        when_true: Lin::col(S[2]),
                        when_false: None,
                    }],
                )
                .unwrap();
                let y = t.apply(&w, &[S[3]]);
                prop_assert_eq!(y[(0, S[3])], if on - off == 1.0 { v1 } else { old });
            }
            // register test
            _ => {
                let i = t.rng.gen_range(0..64);
                let j = if t.rng.gen_bool(0.5) {
                    i
                } else {
                    t.rng.gen_range(0..64)
                };
                let (v1, old) = (t.int(), t.int());
                t.register(R, i);
                t.scalar(S[2], v1);
                t.scalar(S[3], old);
                let w = make_selection(
                    &t.ctx,
                    D,
                    Cond::RegisterIs { reg: R, index: j },
                    vec![Assign {
                        target: S[3],
                        when_true: Lin::col(S[2]),
                        when_false: None,
                    }],
                )
                .unwrap();
                let y = t.apply(&w, &[S[3]]);
                prop_assert_eq!(y[(0, S[3])], if i == j { v1 } else { old });
            }
        }
        Ok(())
    })
}

pub fn increment_contract(cases: u32) -> Result<(), String> {
    check(
        cases,
        (any::<u64>(), any::<bool>(), any::<bool>()),
        |(seed, gated, in_place)| {
            let mut t = Case::new(seed, 64);
            let table = t.ctx.pos.table(64);
            let i = t.rng.gen_range(0..64);
            let cond = t.bit();
            t.register(R, i);
            t.register(Q, 5);
            t.scalar(S[0], cond);
            let dst = if in_place { R } else { Q };
            let gate = gated.then_some(Cond::Flag { col: S[0] });
            let w = Primitive::Increment { src: R, dst, gate }
                .build(&t.ctx, D)
                .unwrap();
            let y = t.apply(&w, &[dst.0, dst.1]);
            let moved = !gated || cond == 1.0;
            let want = if moved {
                (i + 1) % 64
            } else if in_place {
                i
            } else {
                5
            };
            let got = (y[(0, dst.0)], y[(0, dst.1)]);
            prop_assert!(
                (got.0 - table[want].0).abs() < 1e-9 && (got.1 - table[want].1).abs() < 1e-9
            );
            prop_assert_eq!(t.ctx.pos.decode(&table, got, 1e-9), Some(want));
            Ok(())
        },
    )
}

pub fn compare_contract(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(),), |(seed,)| {
        let mut t = Case::new(seed, 64);
        let (l, r) = (t.int(), t.int());
        let r = if t.rng.gen_bool(0.2) { l } else { r };
        let (la, ra) = (t.ints(), t.ints());
        let old = t.bit();
        t.scalar(S[0], l);
        t.scalar(S[1], r);
        t.scalar(S[2], old);
        t.array(A[0], &la);
        t.array(A[1], &ra);
        {
            let v = t.bits();
            t.array(A[3], &v);
        }
        let w = Primitive::CompareLt {
            items: vec![
                Comparison {
                    target: S[2],
                    lhs: Lin::col(S[0]),
                    rhs: Lin::col(S[1]),
                },
                Comparison {
                    target: A[2],
                    lhs: Lin::col(A[0]),
                    rhs: Lin::col(A[1]),
                },
                Comparison {
                    target: A[3],
                    lhs: Lin::col(S[0]),
                    rhs: Lin::col(A[1]),
                },
            ],
        }
        .build(&t.ctx, D)
        .unwrap();
        let y = t.apply(&w, &[S[2], A[2], A[3]]);
        let lt = |a: f64, b: f64| if a < b { 1.0 } else { 0.0 };
        prop_assert_eq!(y[(0, S[2])], lt(l, r));
        prop_assert_eq!(y[(0, A[2])], 0.0);
        prop_assert_eq!(y[(0, A[3])], 0.0);
        for i in 0..t.k - 1 {
            prop_assert_eq!(y[(i + 1, A[2])], lt(la[i], ra[i]));
            prop_assert_eq!(y[(i + 1, A[3])], lt(l, ra[i]));
        }
        Ok(())
    })
}

pub fn read_scalar_contract(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(),), |(seed,)| {
        let mut t = Case::new(seed, 64);
        let i = t.rng.gen_range(1..t.k);
        let src = t.ints();
        let garbage = t.int();
        t.register(R, i);
        t.array(A[0], &src);
        t.scalar(S[0], garbage);
        let w = make_read_scalar(&t.ctx, D, R, A[0], S[0]).unwrap();
        let y = t.apply(&w, &[S[0]]);
        prop_assert_eq!(y[(0, S[0])], src[i - 1]);
        Ok(())
    })
}

pub fn write_scalar_contract(cases: u32) -> Result<(), String> {
    check(
        cases,
        (any::<u64>(), any::<bool>()),
        |(seed, accumulate)| {
            let mut t = Case::new(seed, 64);
            let i = t.rng.gen_range(1..t.k);
            let old = t.ints();
            let v = t.int();
            t.register(R, i);
            t.array(A[0], &old);
            t.scalar(S[0], v);
            let mode = if accumulate {
                WriteMode::Accumulate
            } else {
                WriteMode::Assign
            };
            let w = make_write_scalar(&t.ctx, D, R, Lin::col(S[0]), A[0], mode).unwrap();
            let y = t.apply(&w, &[A[0]]);
            let mut want = old.clone();
            want[i - 1] = if accumulate { old[i - 1] + v } else { v };
            prop_assert_eq!(array(&y, A[0]), want);
            prop_assert_eq!(y[(0, A[0])], 0.0);
            Ok(())
        },
    )
}

pub fn termination_contract(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 0u8..2), |(seed, expect)| {
        let mut t = Case::new(seed, 64);
        let fill = expect as f64;
        let mut src = vec![fill; t.k - 1];
        if t.rng.gen_bool(0.5) {
            let flips = t.rng.gen_range(1..t.k);
            for _ in 0..flips {
                let i = t.rng.gen_range(0..t.k - 1);
                src[i] = 1.0 - fill;
            }
        }
        let old = t.bit();
        t.array(A[0], &src);
        t.scalar(S[0], old);
        let w = Primitive::Termination {
            src: A[0],
            dst: S[0],
            expect,
        }
        .build(&t.ctx, D)
        .unwrap();
        let y = t.apply(&w, &[S[0]]);
        let want = if src.iter().all(|&v| v == fill) {
            1.0
        } else {
            0.0
        };
        prop_assert_eq!(y[(0, S[0])], want);
        Ok(())
    })
}

pub fn read_incidence_contract(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), any::<bool>()), |(seed, row_axis)| {
        let mut t = Case::new(seed, 64);
        let h = random_hypergraph(seed, t.k - 1, t.k - 1, 9);
        let a = pad_incidence(&build_incidence(&h), t.k).unwrap();
        let c = t.rng.gen_range(0..t.k);
        t.register(R, c);
        {
            let v = t.ints();
            t.array(A[0], &v);
        }
        let axis = if row_axis { Axis::Row } else { Axis::Column };
        let w = make_read_incidence(&t.ctx, D, R, axis, A[0]).unwrap();
        let y = apply(&w, &t.x, &a, &[A[0]]);
        for i in 0..t.k {
            let want = if row_axis {
                a.matrix()[(c, i)]
            } else {
                a.matrix()[(i, c)]
            };
            prop_assert_eq!(y[(i, A[0])], want);
        }
        Ok(())
    })
}

pub fn and_contract(cases: u32) -> Result<(), String> {
    check(
        cases,
        (any::<u64>(), any::<bool>(), any::<bool>()),
        |(seed, arrays, three)| {
            let mut t = Case::new(seed, 64);
            let n = if three { 3 } else { 2 };
            let cols: Vec<usize> = if arrays {
                A[..n].to_vec()
            } else {
                S[..n].to_vec()
            };
            let dst = if arrays { A[4] } else { S[4] };
            if arrays {
                for &c in &cols {
                    let v = t.bits();
                    t.array(c, &v);
                }
                {
                    let v = t.bits();
                    t.array(dst, &v);
                }
            } else {
                for &c in &cols {
                    let v = t.bit();
                    t.scalar(c, v);
                }
                let v = t.bit();
                t.scalar(dst, v);
            }
            let before = t.x.clone();
            let w = Primitive::And {
                inputs: cols.clone(),
                dst,
            }
            .build(&t.ctx, D)
            .unwrap();
            let y = t.apply(&w, &[dst]);
            let rows: Vec<usize> = if arrays { (1..t.k).collect() } else { vec![0] };
            for i in rows {
                let want = if cols.iter().all(|&c| before[(i, c)] == 1.0) {
                    1.0
                } else {
                    0.0
                };
                prop_assert_eq!(y[(i, dst)], want);
            }
            Ok(())
        },
    )
}

pub fn repeat_and_contract(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(),), |(seed,)| {
        let mut t = Case::new(seed, 64);
        let (g, d, m) = (t.bit(), t.bits(), t.bits());
        t.scalar(S[0], g);
        t.array(A[0], &d);
        t.array(A[1], &m);
        let w = make_repeat_and(&t.ctx, D, S[0], A[0], A[1]).unwrap();
        let y = t.apply(&w, &[A[0]]);
        let want: Vec<f64> = (0..t.k - 1)
            .map(|i| {
                if g == 1.0 && d[i] == 1.0 && m[i] == 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        prop_assert_eq!(array(&y, A[0]), want);
        prop_assert_eq!(y[(0, A[0])], 0.0);
        Ok(())
    })
}

pub fn repeat_add_contract(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(),), |(seed,)| {
        let mut t = Case::new(seed, 64);
        let (s, d) = (t.int(), t.ints());
        t.scalar(S[0], s);
        t.array(A[0], &d);
        let w = make_repeat_add(&t.ctx, D, S[0], A[0]).unwrap();
        let y = t.apply(&w, &[A[0]]);
        let want: Vec<f64> = d.iter().map(|v| v + s).collect();
        prop_assert_eq!(array(&y, A[0]), want);
        prop_assert_eq!(y[(0, A[0])], 0.0);
        Ok(())
    })
}

pub fn shared_member_contract(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(),), |(seed,)| {
        let mut t = Case::new(seed, 64);
        let node = t.rng.gen_range(0..t.k);
        let val: Vec<f64> = (1..t.k).map(|_| t.rng.gen_range(0..=9) as f64).collect();
        let table = t.ctx.pos.table(t.k);
        for i in 1..t.k {
            t.x[(i, RA.0)] = table[node].0;
            t.x[(i, RA.1)] = table[node].1;
        }
        t.array(A[0], &val);
        {
            let v = t.bits();
            t.array(A[1], &v);
        }
        let w = Primitive::SharedMember {
            node: RA,
            val: A[0],
            dst: A[1],
        }
        .build(&t.ctx, D)
        .unwrap();
        let y = t.apply(&w, &[A[1]]);
        let at_node = if node == 0 { 0.0 } else { val[node - 1] };
        let want: Vec<f64> = val
            .iter()
            .map(|&v| if v >= 1.0 && at_node >= 1.0 { 0.0 } else { 1.0 })
            .collect();
        prop_assert_eq!(array(&y, A[1]), want);
        Ok(())
    })
}

pub type Contract = fn(u32) -> Result<(), String>;

/// Every contract by name.
pub const ALL: &[(&str, Contract)] = &[
    ("selection", selection_contract),
    ("increment", increment_contract),
    ("compare", compare_contract),
    ("read_scalar", read_scalar_contract),
    ("write_scalar", write_scalar_contract),
    ("termination", termination_contract),
    ("read_incidence", read_incidence_contract),
    ("and", and_contract),
    ("repeat_and", repeat_and_contract),
    ("repeat_add", repeat_add_contract),
    ("shared_member", shared_member_contract),
];
