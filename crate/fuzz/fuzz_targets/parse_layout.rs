#![no_main]
use hdrstitch::PanoLayout;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(layout) = PanoLayout::parse(text) {
        let again = PanoLayout::parse(&layout.to_string()).expect("rendered layout parses");
        assert_eq!(layout, again);
        let w = layout.pano_width();
        assert!(w >= layout.view_width());
    }
});
