#![no_main]

use eventum_core::io;
use libfuzzer_sys::fuzz_target;

// Any model that parses is written back and must parse to the same model.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(file) = io::read_model(text) else { return };
    let written = io::write_model(&file.model, file.provenance.as_ref());
    let again = io::read_model(&written).expect("written model parses");
    assert_eq!(again.model, file.model);
});
