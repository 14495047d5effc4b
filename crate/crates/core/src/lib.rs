//! Desk-scale neck-EMG word decoding toolkit.

pub mod acoustic;
pub mod dataset;
pub mod device;
pub mod dsp;
pub mod experiments;
pub mod learn;
pub mod matrix;
pub mod par;
pub mod seed;
pub mod session;
pub mod synth;
pub mod word;
