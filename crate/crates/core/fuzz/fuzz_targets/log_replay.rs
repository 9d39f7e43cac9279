#![no_main]

use libfuzzer_sys::fuzz_target;
use rcp_core::config::EngineConfig;
use rcp_core::engine::Engine;

fuzz_target!(|data: &[u8]| {
    if let Ok(engine) = Engine::replay_bytes(EngineConfig::default(), data) {
        let again = Engine::replay_bytes(EngineConfig::default(), engine.log().to_text().as_bytes())
            .expect("re-rendered log replays");
        assert_eq!(again.state_digest(), engine.state_digest());
    }
});
