//! Desk-scale generative models: the toy surface generator, a VAE and a 2-D DDPM.

mod config;
pub mod data;
pub mod toy;
pub mod train;

pub use config::{write_log_csv, LogRow, TrainConfig, ALLOWED_NOISE_STD};
pub mod ddpm;
pub mod vae;
