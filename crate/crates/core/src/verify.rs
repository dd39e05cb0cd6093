//! Checks one instance end to end: transformer against interpreter trace,
//! and decoded output against the brute-force oracle.

use serde::Serialize;

use crate::compiler::{compile, CompiledProgram, Options, Output, Params};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::interp::run_interpreter;
use crate::layout::AlgorithmKind;
use crate::oracle::{
    oracle_dijkstra_clique, oracle_helly_berge, oracle_minimum, oracle_shared_edges,
};
use crate::trace::{compare_traces, TraceDiff};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub trace: TraceDiff,
    pub output: Output,
    pub reference: Output,
    /// Whether the output matches the brute-force oracle. For Helly this is
    /// agreement with the classical property, which the literal program is
    /// not expected to reach on every instance.
    pub oracle_equal: bool,
    pub passes: usize,
    pub reference_passes: usize,
}

impl Check {
    /// Trace equality plus, except for Helly, oracle equality.
    pub fn passed(&self) -> bool {
        let oracle_required = !matches!(self.output, Output::Helly { .. });
        self.trace.is_empty()
            && self.output == self.reference
            && (self.oracle_equal || !oracle_required)
    }
}

/// The oracle's answer in decoded form.
pub fn oracle_output(p: &CompiledProgram) -> Result<Output> {
    let h = &p.hypergraph;
    let omega = p.params.omega as u64;
    Ok(match p.kind {
        AlgorithmKind::GetMinimum => {
            let values = p.params.values.as_deref().unwrap_or_default();
            let (idx_best, val_best) =
                oracle_minimum(values).ok_or_else(|| Error::Params("no values".into()))?;
            Output::GetMinimum { idx_best, val_best }
        }
        AlgorithmKind::VisitHyperedge => Output::VisitHyperedge {
            candidates: oracle_shared_edges(h, p.params.node.unwrap_or(1), omega),
        },
        AlgorithmKind::Dijkstra => {
            let (dists, prev) = oracle_dijkstra_clique(h, p.params.start.unwrap_or(1), omega);
            Output::Dijkstra { dists, prev }
        }
        AlgorithmKind::Helly => Output::Helly {
            helly: oracle_helly_berge(h)?,
        },
    })
}

/// Zeroes the output matrix of a layer's MLP, so the layer only applies its
/// attention heads. Used to check that the harness notices broken layers.
pub fn corrupt_layer(p: &mut CompiledProgram, layer: usize) -> Result<()> {
    let l = p
        .program
        .layers
        .get_mut(layer)
        .ok_or_else(|| Error::Params(format!("no layer {layer}")))?;
    let w4 = &mut l.mlp.w[3];
    *w4 = crate::matrix::Matrix::zeros(w4.rows(), w4.cols());
    Ok(())
}

/// Compiles, runs both executors and compares them. Non-termination of
/// the transformer is reported as an error.
pub fn check(
    kind: AlgorithmKind,
    h: &Hypergraph,
    params: &Params,
    opts: &Options,
    corrupt: Option<usize>,
) -> Result<Check> {
    let mut p = compile(kind, h, params, opts)?;
    if let Some(l) = corrupt {
        corrupt_layer(&mut p, l)?;
    }
    let reference = run_interpreter(kind, h, params, Some(p.params.k), opts.max_passes)?;
    let oracle = oracle_output(&p)?;
    let run = match p.run(true) {
        Ok(r) => r,
        Err(Error::NonTermination { .. }) if corrupt.is_some() => {
            // a broken layer may stall the loop; the trace up to the budget
            // still pinpoints the divergence
            let mut q = p.clone();
            q.program.max_passes = reference.passes;
            return Ok(stalled(&q, reference));
        }
        Err(e) => return Err(e),
    };
    let trace = compare_traces(run.trace.as_ref().expect("traced run"), &reference.trace);
    Ok(Check {
        trace,
        oracle_equal: run.output == oracle,
        output: run.output,
        reference: reference.output,
        passes: run.passes,
        reference_passes: reference.passes,
    })
}

fn stalled(p: &CompiledProgram, reference: crate::interp::InterpretedRun) -> Check {
    let mut records = Vec::new();
    let x0 = p.encode().expect("encodes");
    records.push(p.snapshot(0, &x0));
    let a = p.incidence().expect("pads");
    let layers = crate::kernel::prepare(&p.program.layers).expect("valid layers");
    let mut x = x0;
    for t in 1..=p.program.max_passes {
        x = crate::kernel::apply_prepared(&x, &layers, &a).expect("applies");
        records.push(p.snapshot(t, &x));
    }
    let trace = compare_traces(&crate::trace::ExecutionTrace { records }, &reference.trace);
    Check {
        trace,
        oracle_equal: false,
        output: reference.output.clone(),
        reference: reference.output,
        passes: p.program.max_passes,
        reference_passes: reference.passes,
    }
}
