pub mod checkpoint;
pub mod datagen;
pub mod eval;
pub mod model;
pub mod series;
pub mod tensor;
pub mod trainer;
