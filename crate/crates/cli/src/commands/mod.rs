pub mod evaluate;
pub mod generate;
pub mod prepare;
pub mod synth;
pub mod train;
