use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent ChaCha8 stream for `(seed, stream, index)`. Lets per-node work
/// draw random numbers without depending on scheduling order.
pub(crate) fn derived_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut x = seed ^ splitmix(stream.wrapping_add(0x9E37_79B9_7F4A_7C15));
    x = splitmix(x ^ splitmix(index.wrapping_mul(0xD1B5_4A32_D192_ED03)));
    ChaCha8Rng::seed_from_u64(x)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
