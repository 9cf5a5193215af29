#![no_main]

use cgcnet::config::{parse, AllConfigs};
use cgcnet::graph::GraphConfig;
use cgcnet::model::ModelConfig;
use cgcnet::synth::DatasetConfig;
use cgcnet::train::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse::<GraphConfig>(text);
    let _ = parse::<ModelConfig>(text);
    let _ = parse::<TrainConfig>(text);
    let _ = parse::<DatasetConfig>(text);
    let _ = toml::from_str::<AllConfigs>(text);
});
