//! Push-pull CORF simple-cell features.
//!
//! The pipeline runs from grayscale [`imagecore::Image`]s through rectified
//! LGN responses ([`lgn`]), CORF cells built from LGN sub-units ([`cell`]),
//! push-pull inhibition ([`pushpull`]) and a multi-scale filter bank that
//! emits channel-major feature tensors ([`bank`]). [`noise`] and [`probe`]
//! measure how robust and how useful those features are.

// `!(x > 0.0)` style checks are kept because they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bank;
pub mod cell;
pub mod cli;
pub mod error;
pub mod fsutil;
pub mod imagecore;
pub mod lgn;
pub mod metrics;
pub mod noise;
pub mod probe;
pub mod pushpull;
pub mod rng;
pub mod selfcheck;
pub mod synth;

pub use bank::{apply_bank, build_bank, BankConfig, BetaPolicy, FeatureTensor, FilterBank};
pub use cell::{cell_response, configure, rotate_set, CellParams, CorfCell, SubUnit};
pub use error::{CorfError, Result};
pub use imagecore::{convolve, load_grayscale, Image, Kernel, ResponseMap};
pub use lgn::{dog_kernel, lgn_response, DogSpec, Polarity};
pub use pushpull::{pull_set, pushpull_response, shift_set, PushPullCell};
