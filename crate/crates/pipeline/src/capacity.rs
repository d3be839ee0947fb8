//! Edge-device capacity planning.

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityInputs {
    /// Frames per second one algorithm instance processes.
    pub aip: f64,
    pub cpu_cores: u32,
    pub gpu_memory_gb: u32,
    /// Frames per second each camera feed delivers.
    pub sef: f64,
}

impl CapacityInputs {
    /// Maximum number of algorithm instances the device can host.
    pub fn maxal(&self) -> u32 {
        self.cpu_cores.min(self.gpu_memory_gb)
    }
}

/// Number of feeds the device supports: `floor(AIP * MAXAL / SEF)`.
pub fn capacity_estimate(c: &CapacityInputs) -> Result<u64> {
    if !(c.aip > 0.0 && c.aip.is_finite()) {
        return Err(PipelineError::Config("AIP must be positive".into()));
    }
    if !(c.sef > 0.0 && c.sef.is_finite()) {
        return Err(PipelineError::Config("SEF must be positive".into()));
    }
    if c.cpu_cores == 0 || c.gpu_memory_gb == 0 {
        return Err(PipelineError::Config(
            "CPU cores and GPU memory must be positive".into(),
        ));
    }
    let feeds = c.aip * c.maxal() as f64 / c.sef;
    // Absorb representation error so that e.g. 0.7 * 3 / 2.1 floors to 1.
    Ok((feeds * (1.0 + 1e-12)).floor() as u64)
}
