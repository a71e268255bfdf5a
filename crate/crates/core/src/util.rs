//! Small shared helpers: deterministic seed derivation and env-gated logging.

/// splitmix64 finalizer; derives independent deterministic seed streams.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Log to stderr when `RELCL_LOG` is set to `info` or `debug`.
pub fn log_info(msg: &str) {
    match std::env::var("RELCL_LOG").as_deref() {
        Ok("info") | Ok("debug") => eprintln!("[relcl] {msg}"),
        _ => {}
    }
}
