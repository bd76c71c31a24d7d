#![no_main]

use hwsim::channel::ChannelRealization;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let n = usize::from(n % 64) + 1;
    if let Ok(ch) = ChannelRealization::from_csv(text, n) {
        let back = ChannelRealization::from_csv(&ch.to_csv(), n).expect("re-parse");
        assert_eq!(back.taps(), ch.taps());
    }
});
