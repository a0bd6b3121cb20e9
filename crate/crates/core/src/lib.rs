//! Precoder and equalizer synthesis for single-carrier frequency-domain
//! equalized MIMO amplify-and-forward relay links, with a seeded Monte-Carlo
//! link simulator.
//!
//! Everything numeric is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod channel;
pub mod equalizer;
pub mod error;
pub mod powalloc;
pub mod precoder;
pub mod scalar;
pub mod simulator;
pub mod spectral;
pub mod verify;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CMatrix = scalar::CMat<f64>;
pub type ChannelRealizationF64 = channel::ChannelRealization<f64>;
pub type SubchannelGainsF64 = powalloc::SubchannelGains<f64>;
pub type PowerAllocationF64 = powalloc::PowerAllocation<f64>;
pub type PrecoderSetF64 = precoder::PrecoderSet<f64>;
pub type EqualizerDesignF64 = equalizer::EqualizerDesign<f64>;
pub type PsiSetF64 = equalizer::PsiSet<f64>;
pub type NoiseLevelsF64 = equalizer::NoiseLevels<f64>;
pub type LinkDesignF64 = simulator::LinkDesign<f64>;
