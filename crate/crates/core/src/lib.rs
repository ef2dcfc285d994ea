//! Rate-equation digital twin of an NV-ensemble magnetometer that detects
//! weak microwave fields by continuous heterodyne interference with a
//! reference tone.
//!
//! Modules, bottom-up:
//!
//! * [`physics`]: closed-form rates, populations, heterodyne response, ODMR.
//! * [`dynamics`]: fixed-step integration of the time-dependent rate equation.
//! * [`synthesis`]: photodetector traces with shot, laser and electronic noise.
//! * [`analysis`]: spectra, SNR, curve fits and alias disambiguation.
//! * [`sensing`]: analytic figures of merit, operating-point optimization and
//!   reference-grid planning.

pub mod analysis;
pub mod dynamics;
pub mod error;
mod linalg;
pub mod noise;
pub mod physics;
pub mod sensing;
pub mod synthesis;
pub mod trace_io;

pub use error::{Error, Result};
