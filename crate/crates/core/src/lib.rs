//! Deep cellular recurrent network (DCRNN).
//!
//! A `J × K` grid of cells runs one shared LSTM core over per-source time
//! series. Each cell also reads a few hidden outputs of its four neighbors
//! from the previous step, so information spreads one grid hop per time
//! step. The final hidden states feed a sigmoid feed-forward layer and a
//! softmax classifier. Training is plain SGD with exact BPTT.

pub mod dataio;
pub mod error;
pub mod fsio;
pub mod grid;
pub mod modelfile;
pub mod numkernel;
pub mod params;
pub mod recurrent;
pub mod trainer;

pub use dataio::{Dataset, GridSample};
pub use error::{Error, Result};
pub use grid::{Aggregation, DcrnnModel, Direction, GridConfig, ModelGradients, ModelSpec};
pub use numkernel::{DenseMatrix, DenseVector, ScaleMode, SeededRng};
pub use params::ParamSet;
pub use recurrent::{CellCoreParams, CellState, CoreDims, CoreGradients, Gate, StepTape};
pub use trainer::TrainConfig;
