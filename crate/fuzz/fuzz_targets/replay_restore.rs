#![no_main]

use libfuzzer_sys::fuzz_target;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use see_core::replay::TransitionBuffer;

fuzz_target!(|data: &[u8]| {
    if let Ok((buffer, actions)) = TransitionBuffer::restore(data, ChaCha8Rng::seed_from_u64(0)) {
        if !buffer.is_empty() {
            assert_eq!(buffer.dump(actions).unwrap(), data);
        }
    }
});
