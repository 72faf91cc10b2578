use thiserror::Error;

use crate::fixedpoint::FixedPointError;
use crate::neighbors::NeighborError;

#[derive(Debug, Error)]
pub enum SphError {
    #[error("non-positive density {density} for particle {particle}")]
    NonPositiveDensity { particle: usize, density: f64 },
    #[error("wall penetration: zero distance between wall and fluid particle {particle}")]
    WallPenetration { particle: usize },
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error("at step {step} (t = {time}): {source}")]
    AtStep {
        step: u64,
        time: f64,
        source: Box<SphError>,
    },
    #[error("energy watchdog tripped at t = {time}: |E| = {energy} exceeds {limit} x initial")]
    EnergyWatchdog { time: f64, energy: f64, limit: f64 },
    #[error("reverse_at requires a reversible configuration ({reason}); pass --force to override")]
    IrreversibleReversal { reason: String },
    #[error("{0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SphError {
    pub fn at_step(self, step: u64, time: f64) -> SphError {
        SphError::AtStep {
            step,
            time,
            source: Box::new(self),
        }
    }
}
