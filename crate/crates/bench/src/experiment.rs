use std::time::Instant;

use anyhow::Result;
use lifelong_core::runner::{
    derive_seed, run_episodes, Clock, NoClock, RunObserver, SEQUENCER_STREAM,
};
use lifelong_core::{build_agent, LinearCmdp, RunMetrics, TaskSequencer};

use crate::config::ExperimentConfig;

/// Wall clock measured from construction.
#[derive(Debug, Clone, Copy)]
pub struct InstantClock(Instant);

impl Default for InstantClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for InstantClock {
    fn now_micros(&mut self) -> u64 {
        self.0.elapsed().as_micros() as u64
    }
}

/// The environment of a seed: every algorithm run with the same seed sees
/// the same MDP.
pub fn environment(config: &ExperimentConfig, seed: u64) -> Result<LinearCmdp> {
    Ok(LinearCmdp::generate(&config.env_config(), seed)?)
}

pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<RunMetrics> {
    run_observed(config, seed, &mut ())
}

/// [`run_experiment`] with a hook into the episode loop.
pub fn run_observed(
    config: &ExperimentConfig,
    seed: u64,
    observer: &mut dyn RunObserver,
) -> Result<RunMetrics> {
    config.validate()?;
    let env = environment(config, seed)?;
    let mut agent = build_agent(&env, &config.agent_config())?;
    let mut sequencer = TaskSequencer::new(
        config.task_mode,
        config.context_mode,
        config.m,
        config.n_states,
        derive_seed(seed, SEQUENCER_STREAM),
    );
    let metrics = if config.record_timing {
        run_episodes(
            &env,
            agent.as_mut(),
            &mut sequencer,
            config.n_episodes,
            seed,
            &mut InstantClock::default(),
            observer,
        )?
    } else {
        run_episodes(
            &env,
            agent.as_mut(),
            &mut sequencer,
            config.n_episodes,
            seed,
            &mut NoClock,
            observer,
        )?
    };
    Ok(metrics)
}
