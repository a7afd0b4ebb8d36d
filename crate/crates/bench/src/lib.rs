//! Shared inputs for the pipeline benchmarks.

use flat_core::fuzz::{default_max_depth, generate, rng_for};
use flat_core::LangRegistry;

pub const GETNAME: &str = include_str!("../../../fixtures/getname.flat");
pub const TEAMNAME: &str = include_str!("../../../fixtures/teamname.flat");

/// `n` sentences of `lang`, reproducible from `seed`.
pub fn sentences(reg: &LangRegistry, lang: &str, seed: u64, n: u64) -> Vec<String> {
    let cfg = reg.cfg(lang).expect("builtin language");
    let depth = default_max_depth(cfg);
    (0..n).map(|i| generate(cfg, &mut rng_for(seed, i), depth)).collect()
}
