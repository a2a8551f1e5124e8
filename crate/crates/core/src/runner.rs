//! The episodic interaction loop.
//!
//! Each episode: the sequencer reveals `(s_1, w)`, the agent gets a chance to
//! plan, its deterministic policy is materialized as an `(h, s) → a` table and
//! evaluated exactly against the oracle, then one trajectory is rolled out and
//! fed back to the agent.

use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, PlanEvent, Transition};
use crate::env::{LinearCmdp, OptimalValues, TaskContext, TaskSequencer};
use crate::error::{invalid, Result};

/// Slack allowed when comparing an agent's value against `V*`.
pub const OPTIMISM_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub k: usize,
    pub context_id: usize,
    pub episode_return: f64,
    pub optimal_value: f64,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub planning_calls_cum: usize,
    pub replan_flag: bool,
    pub wall_micros: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub n_episodes: usize,
    pub final_regret: f64,
    pub total_planning_calls: usize,
    /// Visited `(h, k)` where the agent's value fell below `V*` by more than
    /// [`OPTIMISM_SLACK`].
    pub optimism_violations: usize,
    pub solver_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<EpisodeRow>,
    pub summary: RunSummary,
}

/// Microsecond time source; the core crate has none of its own.
pub trait Clock {
    fn now_micros(&mut self) -> u64;
}

/// Always reads zero, which keeps rows reproducible bit for bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_micros(&mut self) -> u64 {
        0
    }
}

/// Hooks into the loop, e.g. for property checks.
pub trait RunObserver {
    /// After `begin_episode` of episode `k`, before any action is taken.
    fn after_plan(
        &mut self,
        _k: usize,
        _env: &LinearCmdp,
        _agent: &dyn Agent,
        _ctx: &TaskContext,
        _event: &PlanEvent,
    ) {
    }

    fn after_episode(&mut self, _row: &EpisodeRow) {}
}

impl RunObserver for () {}

/// Independent sub-seed for stream `stream` of a run seeded with `seed`
/// (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const SEQUENCER_STREAM: u64 = 1;
pub const TRANSITION_STREAM: u64 = 2;

/// Runs `n_episodes` episodes. `seed` drives the transition noise; the
/// sequencer brings its own stream.
pub fn run_episodes(
    env: &LinearCmdp,
    agent: &mut dyn Agent,
    sequencer: &mut TaskSequencer,
    n_episodes: usize,
    seed: u64,
    clock: &mut dyn Clock,
    observer: &mut dyn RunObserver,
) -> Result<RunMetrics> {
    if n_episodes == 0 {
        return Err(invalid("K must be at least 1"));
    }
    if agent.horizon() != env.horizon || agent.n_actions() != env.n_actions {
        return Err(invalid("agent was built for a different environment"));
    }
    let (ns, horizon) = (env.n_states, env.horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TRANSITION_STREAM));
    let mut vertex_cache: Vec<Option<OptimalValues>> = (0..env.m).map(|_| None).collect();
    let mut rows = Vec::with_capacity(n_episodes);
    let mut cum_regret = 0.0;
    let mut optimism_violations = 0;
    let mut solver_failures = 0;
    let mut policy = alloc::vec![0usize; horizon * ns];
    let mut visited = Vec::with_capacity(horizon);

    for k in 1..=n_episodes {
        let (s1, ctx) = sequencer.next_task(k)?;
        let start = clock.now_micros();
        let event = agent.begin_episode(&ctx)?;
        solver_failures += event.solver_failures;
        observer.after_plan(k, env, &*agent, &ctx, &event);

        for h in 0..horizon {
            for s in 0..ns {
                policy[h * ns + s] = agent.act(h, s, &ctx);
            }
        }
        let fresh;
        let optimal: &OptimalValues = match ctx.vertex_index() {
            Some(j) => vertex_cache[j].get_or_insert_with(|| env.optimal_values(&ctx)),
            None => {
                fresh = env.optimal_values(&ctx);
                &fresh
            }
        };
        let optimal_value = optimal.v(0, s1);
        let instant_regret = optimal_value - env.policy_values(&ctx, &policy)[s1];

        let mut s = s1;
        let mut episode_return = 0.0;
        visited.clear();
        for h in 0..horizon {
            if agent.value(h, s, &ctx) < optimal.v(h, s) - OPTIMISM_SLACK {
                optimism_violations += 1;
            }
            let a = policy[h * ns + s];
            let reward = env.reward(h, s, a, &ctx);
            let s_next = env.sample_step(h, s, a, &mut rng)?;
            agent.observe(&Transition {
                h,
                s,
                a,
                s_next,
                reward,
                ctx: ctx.clone(),
            })?;
            visited.push(s);
            episode_return += reward;
            s = s_next;
        }
        sequencer.record_episode(&ctx, instant_regret, &visited);
        cum_regret += instant_regret;
        let row = EpisodeRow {
            k,
            context_id: ctx.id,
            episode_return,
            optimal_value,
            instant_regret,
            cum_regret,
            planning_calls_cum: agent.planning_calls(),
            replan_flag: event.replanned,
            wall_micros: clock.now_micros().saturating_sub(start),
        };
        observer.after_episode(&row);
        rows.push(row);
    }

    let summary = RunSummary {
        seed,
        n_episodes,
        final_regret: cum_regret,
        total_planning_calls: agent.planning_calls(),
        optimism_violations,
        solver_failures,
    };
    Ok(RunMetrics { rows, summary })
}
