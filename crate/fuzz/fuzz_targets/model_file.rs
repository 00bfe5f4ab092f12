#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = eventum_core::io::read_model(text) {
            let _ = file.model.validate();
            let _ = file.model.residuals();
        }
    }
});
