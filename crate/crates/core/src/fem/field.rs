//! Finite-element functions: a space plus a coefficient vector.

use std::io::Write;
use std::sync::Arc;

use super::space::FunctionSpace;
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone)]
pub struct Field {
    space: Arc<FunctionSpace>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(space: Arc<FunctionSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.num_dofs() {
            return Err(Error::Dimension(format!(
                "field has {} coefficients but the space has {} dofs",
                values.len(),
                space.num_dofs()
            )));
        }
        Ok(Self { space, values })
    }

    pub fn zeros(space: Arc<FunctionSpace>) -> Self {
        let n = space.num_dofs();
        Self {
            space,
            values: vec![0.0; n],
        }
    }

    pub fn constant(space: Arc<FunctionSpace>, c: f64) -> Self {
        let n = space.num_dofs();
        Self {
            space,
            values: vec![c; n],
        }
    }

    pub fn interpolate(space: Arc<FunctionSpace>, f: impl Fn(Point) -> f64) -> Self {
        let values = space.interpolate(f);
        Self { space, values }
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn eval(&self, p: Point) -> Result<f64> {
        self.space.eval(&self.values, p)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        super::assembly::l2_norm_sq(self)
    }

    /// CSV with columns `dof_x, dof_y, value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dof_x,dof_y,value")?;
        for (x, v) in self.space.dof_coords().iter().zip(&self.values) {
            writeln!(w, "{},{},{}", x[0], x[1], v)?;
        }
        Ok(())
    }
}
