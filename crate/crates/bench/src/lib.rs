//! Fixtures shared by the benchmarks in `benches/`.

use std::path::Path;

use harvest_core::event::EventRecord;
use harvest_core::harness::{run_episode, NullObserver, RunConfig};
use harvest_core::scenario::ScenarioId;

/// Three random agents and the bot.
pub fn config(horizon: u64) -> RunConfig {
    let text = format!(
        "group_id = \"bench\"\nseed = 1\nhorizon = {horizon}\n\
         [[agents]]\nslot = 0\nkind = \"random\"\n[[agents]]\nslot = 1\nkind = \"random\"\n\
         [[agents]]\nslot = 2\nkind = \"sustainable\"\n[[agents]]\nslot = 3\nkind = \"bot\"\n"
    );
    RunConfig::from_toml_str(&text, Path::new(".")).expect("bench config")
}

/// Records of one in-memory episode of scenario `id`.
pub fn episode(horizon: u64, id: u8) -> Vec<EventRecord> {
    let cfg = config(horizon);
    let spec = cfg.scenario_spec(ScenarioId::new(id).expect("scenario")).expect("spec");
    let setup = cfg.episode_setup(&spec, 0, None).expect("setup");
    let mut policies = cfg.policies(setup.seed, &mut [], |_| None).expect("policies");
    run_episode(&setup, &mut policies, &mut NullObserver)
        .expect("episode")
        .records
}
