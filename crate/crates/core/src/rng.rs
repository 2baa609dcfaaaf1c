//! Seed derivation. Every random decision in the pipeline draws from a
//! ChaCha8 stream whose seed is derived from the experiment seed, a purpose
//! salt, and an index (session id, instance id, epoch, ...). Sessions and
//! instances can therefore be regenerated independently and in any order
//! without replaying the whole pipeline.

use rand_chacha::ChaCha8Rng;

/// Stream cipher RNG used everywhere; identical output on every platform.
pub type Stream = ChaCha8Rng;

/// Purpose salts. Distinct purposes must never share a derived seed even
/// when their indices collide.
pub mod salt {
    pub const SESSION_SEED: u64 = 0x53455353; // per-session master seed
    pub const SESSION_SPEC: u64 = 0x53504543; // object layout of a session
    pub const FRAMES: u64 = 0x4652414d; // pose trajectory + gaze
    pub const UTTER: u64 = 0x55545452; // caregiver utterances
    pub const CATEGORY: u64 = 0x43415447; // category templates
    pub const PALETTE: u64 = 0x50414c54; // shared world color palette
    pub const INSTANCE: u64 = 0x494e5354; // instance perturbations
    pub const TINT: u64 = 0x54494e54; // scene background tint
    pub const INIT: u64 = 0x494e4954; // model parameter init
    pub const TRAIN: u64 = 0x5452414e; // epoch shuffles, augmentation
    pub const SPLIT: u64 = 0x53504c54; // probe splits
    pub const PROBE: u64 = 0x50524f42; // probe training
    pub const TEXT: u64 = 0x54455854; // block-structure analysis
}

/// SplitMix64 finalizer; decorrelates consecutive inputs.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive a child seed from `(seed, salt, index)`.
pub fn mix(seed: u64, salt: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(salt)).wrapping_add(index))
}

/// ChaCha stream for `(seed, salt, index)`.
pub fn stream(seed: u64, salt: u64, index: u64) -> Stream {
    use rand::SeedableRng;
    Stream::seed_from_u64(mix(seed, salt, index))
}
