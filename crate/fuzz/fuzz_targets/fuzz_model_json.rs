//! Feeds arbitrary bytes to the model JSON decoder.

#![cfg_attr(feature = "libfuzzer", no_main)]

#[cfg(feature = "libfuzzer")]
libfuzzer_sys::fuzz_target!(|data: &[u8]| tirs_fuzz::check_model_json(data));

#[cfg(not(feature = "libfuzzer"))]
fn main() {
    tirs_fuzz::replay_main("fuzz_model_json", tirs_fuzz::check_model_json);
}
