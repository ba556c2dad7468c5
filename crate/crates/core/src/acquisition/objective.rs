//! Acquisition functions packaged as optimizer objectives.

use super::beebo::{beebo_evaluate, BatchNoise};
use super::config::AcquisitionConfig;
use super::ucb::QUcb;
use crate::error::Result;
use crate::gp::GpModel;
use crate::optimizer::BatchObjective;
use nalgebra::DMatrix;

/// The energy-plus-information acquisition on a fixed model.
pub struct BeeboObjective<'a> {
    pub model: &'a GpModel,
    pub noise: BatchNoise<'a>,
    pub config: AcquisitionConfig,
}

impl BatchObjective for BeeboObjective<'_> {
    fn value(&self, batch: &DMatrix<f64>) -> Result<f64> {
        Ok(beebo_evaluate(self.model, batch, &self.noise, &self.config, false)?.value)
    }

    fn value_and_gradient(&self, batch: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let eval = beebo_evaluate(self.model, batch, &self.noise, &self.config, true)?;
        Ok((eval.value, eval.gradient.expect("gradient requested")))
    }
}

/// Monte-Carlo q-UCB with fixed base samples on a fixed model.
pub struct QUcbObjective<'a> {
    pub model: &'a GpModel,
    pub estimator: QUcb,
}

impl BatchObjective for QUcbObjective<'_> {
    fn value(&self, batch: &DMatrix<f64>) -> Result<f64> {
        Ok(self.estimator.evaluate(self.model, batch, false)?.0)
    }

    fn value_and_gradient(&self, batch: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let (v, g) = self.estimator.evaluate(self.model, batch, true)?;
        Ok((v, g.expect("gradient requested")))
    }
}
