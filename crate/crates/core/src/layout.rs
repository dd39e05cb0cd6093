//! Column layouts: which state column holds which variable.

use serde::{Deserialize, Serialize};

use crate::builder::Service;
use crate::error::{Error, Result};
use crate::primitives::{Reg, Scope};

/// The four compiled algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    GetMinimum,
    VisitHyperedge,
    Dijkstra,
    Helly,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 4] = [
        AlgorithmKind::GetMinimum,
        AlgorithmKind::VisitHyperedge,
        AlgorithmKind::Dijkstra,
        AlgorithmKind::Helly,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::GetMinimum => "get_minimum",
            AlgorithmKind::VisitHyperedge => "visit_hyperedge",
            AlgorithmKind::Dijkstra => "dijkstra",
            AlgorithmKind::Helly => "helly",
        }
    }

    /// Layer count of the compiled body.
    pub fn layer_count(&self) -> usize {
        match self {
            AlgorithmKind::GetMinimum => 7,
            AlgorithmKind::VisitHyperedge => 10,
            AlgorithmKind::Dijkstra => 27,
            AlgorithmKind::Helly => 11,
        }
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Params(format!("unknown algorithm '{s}'")))
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What a single column is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// `(1, 0, ..., 0)`
    BGlobal,
    /// `(0, 1, ..., 1)`
    BLocal,
    /// First / second coordinate of the row position embeddings.
    P1,
    P2,
    Scratch,
    /// 1 in array rows past `n_v` (resp. `n_e`).
    PadVertices,
    PadEdges,
    Scalar,
    Array,
    /// Width padding, never read or written.
    Unused,
}

/// How a named variable is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Scalar,
    Array,
    /// A position embedding in the top row (two scalar columns).
    Register,
    /// A position embedding per array row (two array columns).
    RegisterArray,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub cols: Vec<usize>,
}

/// Named columns of a state matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub kind: AlgorithmKind,
    pub d: usize,
    pub columns: Vec<Column>,
    pub variables: Vec<Variable>,
    pub termination: String,
}

pub const SCRATCH_COLUMNS: usize = 3;

impl ColumnLayout {
    fn new(kind: AlgorithmKind) -> Self {
        let mut l = Self {
            kind,
            d: 0,
            columns: Vec::new(),
            variables: Vec::new(),
            termination: String::new(),
        };
        l.push_col("b_global", Role::BGlobal);
        l.push_col("b_local", Role::BLocal);
        l.push_col("p.sin", Role::P1);
        l.push_col("p.cos", Role::P2);
        for i in 1..=SCRATCH_COLUMNS {
            l.push_col(&format!("s{i}"), Role::Scratch);
        }
        l.push_col("pad_vertices", Role::PadVertices);
        l.push_col("pad_edges", Role::PadEdges);
        l
    }

    fn push_col(&mut self, name: &str, role: Role) -> usize {
        self.columns.push(Column {
            name: name.to_string(),
            role,
        });
        self.columns.len() - 1
    }

    fn var(&mut self, name: &str, kind: VarKind) {
        let cols = match kind {
            VarKind::Scalar => vec![self.push_col(name, Role::Scalar)],
            VarKind::Array => vec![self.push_col(name, Role::Array)],
            VarKind::Register => vec![
                self.push_col(&format!("{name}.sin"), Role::Scalar),
                self.push_col(&format!("{name}.cos"), Role::Scalar),
            ],
            VarKind::RegisterArray => vec![
                self.push_col(&format!("{name}.sin"), Role::Array),
                self.push_col(&format!("{name}.cos"), Role::Array),
            ],
        };
        self.variables.push(Variable {
            name: name.to_string(),
            kind,
            cols,
        });
    }

    fn get_min_vars(&mut self) {
        self.var("idx_cur", VarKind::Register);
        self.var("val_cur", VarKind::Scalar);
        self.var("idx_best", VarKind::Register);
        self.var("val_best", VarKind::Scalar);
        self.var("improved", VarKind::Scalar);
        self.var("visit_min", VarKind::Array);
        self.var("termination_min", VarKind::Scalar);
    }

    fn hyperedge_vars(&mut self) {
        self.var("idx_hyperedge", VarKind::Register);
        self.var("val_hyperedge", VarKind::Array);
        self.var("iszero_hyperedge", VarKind::Array);
        self.var("update_hyperedge", VarKind::Array);
        self.var("candidates_hyperedge", VarKind::Array);
        self.var("visit_hyperedge", VarKind::Array);
        self.var("termination_hyperedge", VarKind::Scalar);
        self.var("round", VarKind::Scalar);
    }

    /// Named columns for `kind`, without width padding.
    pub(crate) fn named(kind: AlgorithmKind) -> Self {
        let mut l = Self::new(kind);
        match kind {
            AlgorithmKind::GetMinimum => {
                l.var("values", VarKind::Array);
                l.get_min_vars();
                l.termination = "termination_min".into();
            }
            AlgorithmKind::VisitHyperedge => {
                l.var("node_rows", VarKind::RegisterArray);
                l.var("termination_min", VarKind::Scalar);
                l.hyperedge_vars();
                l.termination = "termination_hyperedge".into();
            }
            AlgorithmKind::Dijkstra => {
                l.var("dists", VarKind::Array);
                l.var("dists_masked", VarKind::Array);
                l.var("prev", VarKind::RegisterArray);
                l.var("visit", VarKind::Array);
                l.get_min_vars();
                l.var("node", VarKind::Register);
                l.var("node_rows", VarKind::RegisterArray);
                l.var("dist", VarKind::Scalar);
                l.hyperedge_vars();
                l.var("iszero", VarKind::Array);
                l.var("candidates", VarKind::Array);
                l.var("changes", VarKind::Array);
                l.var("termination", VarKind::Scalar);
                l.termination = "termination".into();
            }
            AlgorithmKind::Helly => {
                l.var("idx_x", VarKind::Register);
                l.var("idx_y", VarKind::Register);
                l.var("idx_v", VarKind::Register);
                l.var("hyperedge_x", VarKind::Array);
                l.var("hyperedge_y", VarKind::Array);
                l.var("hyperedge_v", VarKind::Array);
                l.var("intersection", VarKind::Array);
                l.var("helly_v", VarKind::Scalar);
                l.var("helly", VarKind::Scalar);
                l.var("termination", VarKind::Scalar);
                l.termination = "termination".into();
            }
        }
        l
    }

    /// Pads the layout to width `d`.
    pub(crate) fn with_width(mut self, d: usize) -> Self {
        while self.columns.len() < d {
            let i = self.columns.len();
            self.push_col(&format!("unused{i}"), Role::Unused);
        }
        self.d = self.columns.len();
        self
    }

    pub fn named_width(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.role != Role::Unused)
            .count()
    }

    fn role_col(&self, role: Role) -> usize {
        self.columns
            .iter()
            .position(|c| c.role == role)
            .expect("service column present")
    }

    pub fn service(&self) -> Service {
        Service {
            bg: self.role_col(Role::BGlobal),
            bl: self.role_col(Role::BLocal),
            p1: self.role_col(Role::P1),
            p2: self.role_col(Role::P2),
        }
    }

    pub fn scratch(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| self.columns[i].role == Role::Scratch)
            .collect()
    }

    pub fn pad_vertices(&self) -> usize {
        self.role_col(Role::PadVertices)
    }

    pub fn pad_edges(&self) -> usize {
        self.role_col(Role::PadEdges)
    }

    /// Operand scope per column (pads count as arrays).
    pub fn scopes(&self) -> Vec<Option<Scope>> {
        self.columns
            .iter()
            .map(|c| match c.role {
                Role::Scalar => Some(Scope::Scalar),
                Role::Array | Role::PadVertices | Role::PadEdges => Some(Scope::Array),
                _ => None,
            })
            .collect()
    }

    pub fn variable(&self, name: &str) -> Result<&Variable> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::Role(format!("layout has no variable '{name}'")))
    }

    /// Column of a scalar or array variable.
    pub fn col(&self, name: &str) -> Result<usize> {
        let v = self.variable(name)?;
        match v.kind {
            VarKind::Scalar | VarKind::Array => Ok(v.cols[0]),
            _ => Err(Error::Role(format!("'{name}' is a register"))),
        }
    }

    /// Column pair of a register variable.
    pub fn reg(&self, name: &str) -> Result<Reg> {
        let v = self.variable(name)?;
        match v.kind {
            VarKind::Register | VarKind::RegisterArray => Ok((v.cols[0], v.cols[1])),
            _ => Err(Error::Role(format!("'{name}' is not a register"))),
        }
    }

    pub fn termination_column(&self) -> Result<usize> {
        self.col(&self.termination)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_name_their_variables() {
        let l = ColumnLayout::named(AlgorithmKind::GetMinimum);
        for v in [
            "idx_cur",
            "val_cur",
            "idx_best",
            "val_best",
            "visit_min",
            "termination_min",
        ] {
            assert!(l.variable(v).is_ok(), "{v}");
        }
        let l = ColumnLayout::named(AlgorithmKind::Helly);
        for v in ["idx_x", "idx_y", "idx_v", "helly", "termination"] {
            assert!(l.variable(v).is_ok(), "{v}");
        }
        for kind in AlgorithmKind::ALL {
            let l = ColumnLayout::named(kind);
            let s = l.service();
            assert_eq!((s.bg, s.bl, s.p1, s.p2), (0, 1, 2, 3));
            assert!(l.termination_column().is_ok());
            let mut names: Vec<_> = l.columns.iter().map(|c| &c.name).collect();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), l.columns.len());
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "dijkstra".parse::<AlgorithmKind>().unwrap(),
            AlgorithmKind::Dijkstra
        );
        assert_eq!(
            "get-minimum".parse::<AlgorithmKind>().unwrap(),
            AlgorithmKind::GetMinimum
        );
        assert!("bfs".parse::<AlgorithmKind>().is_err());
    }
}
