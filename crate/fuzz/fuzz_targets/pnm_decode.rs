#![no_main]

use cgcnet::pnm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = pnm::decode(data) {
        assert_eq!(img.samples.len(), img.width * img.height * img.channels);
        assert!(img.samples.iter().all(|&s| s <= img.maxval));
        // Whatever decodes must survive a round trip.
        assert_eq!(pnm::decode(&pnm::encode(&img)).unwrap(), img);
    }
});
