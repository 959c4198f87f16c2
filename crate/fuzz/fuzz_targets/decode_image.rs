#![no_main]
use hdrstitch::LdrImage;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = LdrImage::decode(data) {
        let (w, h) = img.dims();
        assert_eq!(img.data().len(), w * h * 3);
    }
});
