//! Stateless builtin semantics and the counter-based random stream.

/// Weyl increment used to spread site ids across the counter space.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `0` before `start`, `height` from `start` on.
#[inline]
pub fn builtin_step(height: f64, start: f64, t: f64) -> f64 {
    if t < start {
        0.0
    } else {
        height
    }
}

#[inline]
pub fn builtin_if_then_else(cond: bool, then: f64, otherwise: f64) -> f64 {
    if cond {
        then
    } else {
        otherwise
    }
}

/// Convert a seed argument to the integer mixed into the stream.
pub fn seed_from_arg(arg: f64) -> u64 {
    arg.round() as i64 as u64
}

/// Uniform draw in `[0, 1)` for one (site, step). A pure function of its
/// inputs: the same arguments always give the same bits.
#[inline]
pub fn unit_draw(global_seed: u64, site_seed: u64, site_id: usize, step_index: u64) -> f64 {
    let counter = (global_seed ^ site_seed)
        .wrapping_add(GOLDEN_GAMMA.wrapping_mul(site_id as u64 + 1))
        .wrapping_add(step_index);
    // top 53 bits: exact in f64 and strictly below 1
    (mix64(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn builtin_random_uniform(
    min: f64,
    max: f64,
    global_seed: u64,
    site_seed: u64,
    site_id: usize,
    step_index: u64,
) -> f64 {
    min + unit_draw(global_seed, site_seed, site_id, step_index) * (max - min)
}
