//! Feeds arbitrary bytes to the solution artifact decoders.

#![cfg_attr(feature = "libfuzzer", no_main)]

#[cfg(feature = "libfuzzer")]
libfuzzer_sys::fuzz_target!(|data: &[u8]| tirs_fuzz::check_solution_json(data));

#[cfg(not(feature = "libfuzzer"))]
fn main() {
    tirs_fuzz::replay_main("fuzz_solution_json", tirs_fuzz::check_solution_json);
}
