use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Cell, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

/// Features `x` (n x p), confounders `c` (n x m) and outcome `y` (n).
///
/// Binary variables are stored as 0.0 / 1.0 so they can enter the linear
/// structural equations directly.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub c: Array2<f64>,
    pub y: Array1<f64>,
    pub task: Task,
}

fn is_binary(v: f64) -> bool {
    v == 0.0 || v == 1.0
}

impl Dataset {
    pub fn new(x: Array2<f64>, c: Array2<f64>, y: Array1<f64>, task: Task) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || c.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "x has {} rows, c has {}, y has {n}",
                x.nrows(),
                c.nrows()
            )));
        }
        if x.iter().chain(c.iter()).chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("dataset contains non-finite values".into()));
        }
        if task == Task::Classification && !y.iter().all(|&v| is_binary(v)) {
            return Err(Error::NotBinary("classification label"));
        }
        Ok(Dataset { x, c, y, task })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.c.ncols()
    }

    /// Rows in the given order; indices may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            c: self.c.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            task: self.task,
        }
    }

    /// True when there is exactly one confounder and both it and `y` are 0/1.
    pub fn has_binary_cells(&self) -> bool {
        self.m() == 1
            && self.c.iter().all(|&v| is_binary(v))
            && self.y.iter().all(|&v| is_binary(v))
    }

    /// Row indices of each (C, Y) cell, in `Cell::ALL` order.
    pub fn cells(&self) -> Result<[Vec<usize>; 4]> {
        if self.m() != 1 {
            return Err(Error::InvalidParameter(format!(
                "cell operations need exactly one confounder, got {}",
                self.m()
            )));
        }
        let mut cells: [Vec<usize>; 4] = Default::default();
        for (i, (&c, &y)) in self.c.column(0).iter().zip(self.y.iter()).enumerate() {
            if !is_binary(c) {
                return Err(Error::NotBinary("confounder"));
            }
            if !is_binary(y) {
                return Err(Error::NotBinary("label"));
            }
            let cell = Cell { c: c as u8, y: y as u8 };
            cells[cell.index()].push(i);
        }
        Ok(cells)
    }

    pub fn cell_counts(&self) -> Result<[usize; 4]> {
        let cells = self.cells()?;
        Ok(cells.map(|v| v.len()))
    }
}
