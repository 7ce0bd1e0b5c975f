pub mod characterize;
pub mod fit;
pub mod gridsearch;
pub mod neuro;
pub mod simulate;
pub mod sonds;
