use std::io::{BufRead, Write};

use super::grid::{sym_index, Grid};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Common view over node-collocated fields stored component-major.
pub trait NodalField<T: Real> {
    fn grid(&self) -> &Grid;
    fn components(&self) -> usize;
    fn values(&self) -> &[T];
    fn values_mut(&mut self) -> &mut [T];
    fn component_names(&self) -> Vec<String>;

    /// Multiplicity of a component in the pointwise squared norm.
    fn component_weight(&self, _c: usize) -> T {
        T::one()
    }

    fn component(&self, c: usize) -> &[T] {
        let n = self.grid().node_count();
        &self.values()[c * n..(c + 1) * n]
    }

    fn component_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.grid().node_count();
        &mut self.values_mut()[c * n..(c + 1) * n]
    }

    fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// Pointwise squared magnitude at node `i`.
    fn norm_sq_at(&self, i: usize) -> T {
        (0..self.components())
            .map(|c| {
                let v = self.component(c)[i];
                self.component_weight(c) * v * v
            })
            .fold(T::zero(), |a, b| a + b)
    }

    /// Writes one row per node: node indices, then components.
    fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let g = self.grid();
        let mut header: Vec<String> = ["i", "j", "k"][..g.dim()].iter().map(|s| s.to_string()).collect();
        header.extend(self.component_names());
        writeln!(out, "{}", header.join(","))?;
        for node in 0..g.node_count() {
            let ijk = g.coords(node);
            let mut row: Vec<String> = ijk[..g.dim()].iter().map(|i| i.to_string()).collect();
            for c in 0..self.components() {
                row.push(format!("{}", self.component(c)[node]));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn read_csv_values<T: Real, R: BufRead>(grid: &Grid, ncomp: usize, input: R) -> Result<Vec<T>> {
    let n = grid.node_count();
    let dim = grid.dim();
    let mut values = vec![T::zero(); ncomp * n];
    let mut seen = vec![false; n];
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty csv".into()))??;
    let cols = header.split(',').count();
    if cols != dim + ncomp {
        return Err(Error::Parse(format!("expected {} columns, header has {cols}", dim + ncomp)));
    }
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != dim + ncomp {
            return Err(Error::Parse(format!("line {}: wrong column count", lineno + 2)));
        }
        let mut ijk = [0usize; 3];
        for a in 0..dim {
            ijk[a] = parts[a]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad index", lineno + 2)))?;
            if ijk[a] >= grid.nodes_on_axis(a) {
                return Err(Error::Parse(format!("line {}: index out of range", lineno + 2)));
            }
        }
        let node = grid.index(ijk);
        seen[node] = true;
        for c in 0..ncomp {
            values[c * n + node] = parts[dim + c]
                .trim()
                .parse::<T>()
                .map_err(|_| Error::Parse(format!("line {}: bad value", lineno + 2)))?;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Parse("csv does not cover every node".into()));
    }
    Ok(values)
}

macro_rules! field_common {
    ($name:ident) => {
        impl<T: Real> $name<T> {
            pub fn grid(&self) -> &Grid {
                &self.grid
            }

            pub fn values(&self) -> &[T] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [T] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<T> {
                self.values
            }

            pub fn scale(&mut self, alpha: T) {
                for v in &mut self.values {
                    *v = *v * alpha;
                }
            }

            pub fn scaled(&self, alpha: T) -> Self {
                let mut out = self.clone();
                out.scale(alpha);
                out
            }

            pub fn read_csv<R: BufRead>(grid: &Grid, input: R) -> Result<Self> {
                let ncomp = Self::components_for(grid);
                let values = read_csv_values(grid, ncomp, input)?;
                Self::from_values(grid.clone(), values)
            }
        }

        impl<T: Real> NodalField<T> for $name<T> {
            fn grid(&self) -> &Grid {
                &self.grid
            }
            fn components(&self) -> usize {
                Self::components_for(&self.grid)
            }
            fn values(&self) -> &[T] {
                &self.values
            }
            fn values_mut(&mut self) -> &mut [T] {
                &mut self.values
            }
            fn component_names(&self) -> Vec<String> {
                Self::names_for(&self.grid)
            }
            fn component_weight(&self, c: usize) -> T {
                Self::weight_for(&self.grid, c)
            }
        }
    };
}

/// One real per node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &Grid, c: T) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![c; grid.node_count()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.node_count(),
                found: values.len(),
            });
        }
        Ok(ScalarField { grid, values })
    }

    /// Samples `f(x)` at every node position.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|i| T::lit(f(grid.position(i)))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn get(&self, node: usize) -> T {
        self.values[node]
    }

    pub fn set(&mut self, node: usize, v: T) {
        self.values[node] = v;
    }

    fn components_for(_g: &Grid) -> usize {
        1
    }
    fn names_for(_g: &Grid) -> Vec<String> {
        vec!["value".into()]
    }
    fn weight_for(_g: &Grid, _c: usize) -> T {
        T::one()
    }
}
field_common!(ScalarField);

/// `dim` reals per node, stored component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    grid: Grid,
    values: Vec<T>,
}

impl<T: Real> VectorField<T> {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            grid: grid.clone(),
            values: vec![T::zero(); grid.dim() * grid.node_count()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<T>) -> Result<Self> {
        let expected = grid.dim() * grid.node_count();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        Ok(VectorField { grid, values })
    }

    pub fn from_components(grid: &Grid, comps: Vec<Vec<T>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                found: comps.len(),
            });
        }
        let n = grid.node_count();
        let mut values = Vec::with_capacity(n * comps.len());
        for c in comps {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: c.len(),
                });
            }
            values.extend(c);
        }
        Ok(VectorField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let n = grid.node_count();
        let mut values = vec![T::zero(); grid.dim() * n];
        for i in 0..n {
            let v = f(grid.position(i));
            for c in 0..grid.dim() {
                values[c * n + i] = T::lit(v[c]);
            }
        }
        VectorField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn at(&self, node: usize) -> [T; 3] {
        let n = self.grid.node_count();
        let mut out = [T::zero(); 3];
        for (c, o) in out.iter_mut().enumerate().take(self.grid.dim()) {
            *o = self.values[c * n + node];
        }
        out
    }

    pub fn set_at(&mut self, node: usize, v: [T; 3]) {
        let n = self.grid.node_count();
        for (c, &vc) in v.iter().enumerate().take(self.grid.dim()) {
            self.values[c * n + node] = vc;
        }
    }

    fn components_for(g: &Grid) -> usize {
        g.dim()
    }
    fn names_for(g: &Grid) -> Vec<String> {
        (0..g.dim()).map(|c| format!("v{c}")).collect()
    }
    fn weight_for(_g: &Grid, _c: usize) -> T {
        T::one()
    }
}
field_common!(VectorField);

/// Symmetric tensors stored by their upper triangle, `dim (dim + 1) / 2` reals per node.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField<T> {
    grid: Grid,
    values: Vec<T>,
}

impl<T: Real> SymTensorField<T> {
    pub fn zeros(grid: &Grid) -> Self {
        SymTensorField {
            grid: grid.clone(),
            values: vec![T::zero(); grid.sym_components() * grid.node_count()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<T>) -> Result<Self> {
        let expected = grid.sym_components() * grid.node_count();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        Ok(SymTensorField { grid, values })
    }

    /// Identity tensor at every node.
    pub fn identity(grid: &Grid) -> Self {
        let mut out = Self::zeros(grid);
        for a in 0..grid.dim() {
            let s = sym_index(grid.dim(), a, a);
            out.component_mut(s).fill(T::one());
        }
        out
    }

    pub fn entry(&self, node: usize, i: usize, j: usize) -> T {
        let s = sym_index(self.grid.dim(), i, j);
        self.values[s * self.grid.node_count() + node]
    }

    pub fn set_entry(&mut self, node: usize, i: usize, j: usize, v: T) {
        let s = sym_index(self.grid.dim(), i, j);
        let n = self.grid.node_count();
        self.values[s * n + node] = v;
    }

    /// Trace at every node.
    pub fn trace(&self) -> ScalarField<T> {
        let n = self.grid.node_count();
        let mut out = vec![T::zero(); n];
        for a in 0..self.grid.dim() {
            let s = sym_index(self.grid.dim(), a, a);
            for (o, &v) in out.iter_mut().zip(&self.values[s * n..(s + 1) * n]) {
                *o = *o + v;
            }
        }
        ScalarField {
            grid: self.grid.clone(),
            values: out,
        }
    }

    fn components_for(g: &Grid) -> usize {
        g.sym_components()
    }
    fn names_for(g: &Grid) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..g.dim() {
            for j in i..g.dim() {
                names.push(format!("d{i}{j}"));
            }
        }
        names
    }
    /// Off-diagonal entries count twice in the Frobenius norm.
    fn weight_for(g: &Grid, c: usize) -> T {
        for i in 0..g.dim() {
            for j in i..g.dim() {
                if sym_index(g.dim(), i, j) == c {
                    return if i == j { T::one() } else { T::two() };
                }
            }
        }
        T::one()
    }
}
field_common!(SymTensorField);
