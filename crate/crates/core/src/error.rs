use std::fmt;

use thiserror::Error;

/// One cell of the joint (C, Y) table for a binary confounder and a binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub c: u8,
    pub y: u8,
}

impl Cell {
    /// Cells in canonical order: (0,0), (0,1), (1,0), (1,1).
    pub const ALL: [Cell; 4] = [
        Cell { c: 0, y: 0 },
        Cell { c: 0, y: 1 },
        Cell { c: 1, y: 0 },
        Cell { c: 1, y: 1 },
    ];

    pub fn index(self) -> usize {
        (self.c as usize) * 2 + self.y as usize
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(C={}, Y={})", self.c, self.y)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "infeasible moments: phi_cc = {phi_cc}, phi_cy = {phi_cy}, phi_yy = {phi_yy} \
         do not form a valid error covariance (need phi_yy > 0 and phi_cc * phi_yy >= phi_cy^2)"
    )]
    InfeasibleMoments { phi_cc: f64, phi_cy: f64, phi_yy: f64 },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("no feasible parameter draw after {attempts} attempts")]
    InfeasibleConfiguration { attempts: usize },

    #[error("requested {requested} rows from a dataset with {available}")]
    SampleSize { requested: usize, available: usize },

    #[error("cell {0} exhausted while subsampling")]
    CellExhausted(Cell),

    #[error("cannot match: cell {0} is empty")]
    Unmatchable(Cell),

    #[error("cannot weight: cell {0} is empty")]
    Unweightable(Cell),

    #[error("target requires cell {0}, which has no rows")]
    UnreachableTarget(Cell),

    #[error("{0} must be binary (0/1)")]
    NotBinary(&'static str),

    #[error("singular design matrix")]
    SingularDesign,

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
