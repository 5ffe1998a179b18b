//! Synthetic generators, the three experiment drivers, and report emission.

mod equivalence;
mod fig1;
mod fig3;
mod reconstruct;
mod report;
mod synthetic;

pub use equivalence::{run_equivalence, EquivalenceConfig, EquivalenceInstance, EquivalenceSummary};
pub use fig1::{run_fig1, Fig1Cell, Fig1Config, Fig1Result};
pub use fig3::{run_fig3, Fig3Config, Fig3Init, Fig3Result, Fig3Run};
pub use reconstruct::{run_reconstruct, run_reconstruct_matrix, ReconstructConfig, ReconstructResult, ReconstructRun};
pub use report::{write_spectrum_csv, ExperimentReport, SCHEMA_VERSION};
pub use synthetic::{factor_product, generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};

fn ensure_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Parameter {
            name: what,
            value: values[i],
            reason: "report arrays must be finite",
        }),
        None => Ok(()),
    }
}
