//! Random scenario generation and seeded random streams.
//!
//! All randomness flows from a single scenario seed through [`stream`], which
//! returns an independent ChaCha8 stream for each named purpose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{db_to_linear, ScenarioConfig};
use crate::error::Result;
use crate::geometry::Position2;
use crate::radar::RadarTruth;

/// Named random streams split from a scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Radars = 1,
    Intercepts = 2,
    Noise = 3,
    Experiment = 4,
}

/// Independent generator for `purpose`, seeded from `seed`.
pub fn stream(seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Generator for one indexed event (for example a measurement tick), so that
/// the draws do not depend on how many events came before it.
pub fn indexed_stream(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index)));
    rng.set_stream(purpose as u64);
    rng
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Places `radar_count` radars uniformly in the region with parameters drawn
/// uniformly from the configured ranges. Transmit gain is drawn in dB.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Vec<RadarTruth>> {
    config.radar.validate()?;
    config.region.validate()?;
    let r = &config.radar;
    let mut rng = stream(config.seed, Stream::Radars);
    let mut radars = Vec::with_capacity(config.radar_count);
    for _ in 0..config.radar_count {
        let x = uniform(&mut rng, config.region.lower.x, config.region.upper.x);
        let y = uniform(&mut rng, config.region.lower.y, config.region.upper.y);
        let p_t = uniform(&mut rng, r.p_t_l, r.p_t_u);
        let g_t_db = uniform(&mut rng, r.g_t_l_db, r.g_t_u_db);
        radars.push(RadarTruth {
            position: Position2::new(x, y),
            p_t,
            g_t: db_to_linear(g_t_db),
            g_r: db_to_linear(r.g_r_db),
            lambda: r.lambda,
            tau_p: r.tau_p,
            t_s: r.t_s,
            loss: db_to_linear(r.l_db),
            p_fa: r.p_fa,
        });
    }
    Ok(radars)
}
