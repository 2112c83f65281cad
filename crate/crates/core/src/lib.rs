pub mod bounds;
pub mod error;
pub mod exec;
pub mod gamma;
pub mod io;
pub mod lp;
pub mod norms;
pub mod random;
pub mod scenarios;
pub mod source_ops;
pub mod states;
pub mod tensor;

pub use error::{Error, Result};
pub use exec::Exec;
pub use tensor::{ComplexMatrix, FactorShape, C64};
