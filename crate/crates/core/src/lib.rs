pub mod basis;
pub mod error;
pub mod experiments;
pub mod field;
pub mod nonlinearity;
pub mod numerics;
pub mod propagators;
pub mod solvers;
