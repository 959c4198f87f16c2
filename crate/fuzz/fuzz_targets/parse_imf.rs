#![no_main]
use hdrstitch::wha::Imf;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(imf) = Imf::parse(text) {
        let again = Imf::parse(&imf.to_text()).expect("rendered table parses");
        assert_eq!(imf, again);
        if let Ok(filled) = imf.fill_empty_bins() {
            assert!(filled.is_complete());
        }
    }
});
