//! Critic-guided stepwise decoding with a per-step retry budget, plus the
//! unguided baseline and majority-vote aggregation over independent runs.

use serde::{Deserialize, Serialize};

use crate::core::{canonicalize_answer, Problem, Step, StepVerdict, Trajectory};
use crate::roles::{CritiqueRequest, CriticRole, SolverRole};
use crate::util::derive_seed;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    FirstSeen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub max_retries_per_step: usize,
    pub max_steps: usize,
    pub self_consistency_samples: usize,
    pub vote_tie_break: TieBreak,
    pub temperature_solver: f64,
    pub temperature_retry: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_retries_per_step: 5,
            max_steps: 64,
            self_consistency_samples: 5,
            vote_tie_break: TieBreak::FirstSeen,
            temperature_solver: 1.0,
            temperature_retry: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAttempt {
    pub step_text: String,
    pub verdict: Option<StepVerdict>,
    pub critique_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcceptedVia {
    CriticApproved,
    RetriesExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub attempts: Vec<StepAttempt>,
    pub accepted_step: String,
    pub accepted_via: AcceptedVia,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub problem_id: String,
    pub steps: Vec<SearchStep>,
    pub final_answer: Option<String>,
    pub solver_calls: usize,
    pub critic_calls: usize,
    pub budget_exhausted: bool,
}

/// Solve one problem with the critic vetoing steps. A rejected step is
/// regenerated with a fresh sample up to the retry budget; when every
/// attempt is rejected the last one is kept and the search moves on.
/// Returns the canonical final answer (empty when no answer was reached).
pub fn guided_solve(
    problem: &Problem,
    solver: &dyn SolverRole,
    critic: &dyn CriticRole,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<(String, SearchTrace)> {
    let mut trace = SearchTrace {
        problem_id: problem.id.clone(),
        steps: Vec::new(),
        final_answer: None,
        solver_calls: 0,
        critic_calls: 0,
        budget_exhausted: false,
    };
    let mut traj = Trajectory::empty(&problem.id);
    'outer: for step_index in 0..cfg.max_steps {
        let mut attempts: Vec<StepAttempt> = Vec::new();
        let mut accepted: Option<(Step, bool, Option<String>, AcceptedVia)> = None;
        for attempt in 0..cfg.max_retries_per_step {
            let temperature = if attempt == 0 {
                cfg.temperature_solver
            } else {
                cfg.temperature_retry
            };
            let attempt_seed = derive_seed(seed, &[step_index as u64, attempt as u64]);
            let generated = solver.next_step(problem, &traj, temperature, attempt_seed)?;
            trace.solver_calls += 1;
            let request = CritiqueRequest {
                problem: problem.clone(),
                prefix: traj.clone(),
                step: generated.step.clone(),
            };
            let critique = critic.critique(&request, 0.0, derive_seed(attempt_seed, &[1]))?;
            trace.critic_calls += 1;
            attempts.push(StepAttempt {
                step_text: generated.step.text.clone(),
                verdict: critique.verdict,
                critique_text: critique.text,
            });
            // Only an explicit rejection triggers a retry.
            if critique.verdict != Some(StepVerdict::Incorrect) {
                accepted = Some((
                    generated.step,
                    generated.terminal,
                    generated.final_answer,
                    AcceptedVia::CriticApproved,
                ));
                break;
            }
            if attempt + 1 == cfg.max_retries_per_step {
                accepted = Some((
                    generated.step,
                    generated.terminal,
                    generated.final_answer,
                    AcceptedVia::RetriesExhausted,
                ));
            }
        }
        let Some((step, terminal, final_answer, via)) = accepted else {
            break;
        };
        trace.steps.push(SearchStep {
            attempts,
            accepted_step: step.text.clone(),
            accepted_via: via,
        });
        traj.push_step(step.text);
        if terminal {
            trace.final_answer = final_answer;
            break 'outer;
        }
    }
    if trace.final_answer.is_none() {
        trace.budget_exhausted = true;
    }
    let answer = trace
        .final_answer
        .as_deref()
        .map(canonicalize_answer)
        .unwrap_or_default();
    Ok((answer, trace))
}

/// Plain stepwise generation without the critic.
pub fn unguided_solve(
    problem: &Problem,
    solver: &dyn SolverRole,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<String> {
    if cfg.max_steps == 0 {
        return Ok(String::new());
    }
    let traj = solver.complete(
        problem,
        &Trajectory::empty(&problem.id),
        cfg.temperature_solver,
        seed,
        cfg.max_steps,
    )?;
    Ok(traj
        .final_answer
        .as_deref()
        .map(canonicalize_answer)
        .unwrap_or_default())
}

/// Majority vote over canonical answers, first-seen order breaking ties.
pub fn majority_vote(answers: &[String]) -> String {
    let mut seen: Vec<(&str, usize)> = Vec::new();
    for a in answers {
        match seen.iter_mut().find(|(s, _)| *s == a.as_str()) {
            Some((_, c)) => *c += 1,
            None => seen.push((a, 1)),
        }
    }
    // First-seen tie break: only a strictly larger count displaces the
    // incumbent (max_by_key would keep the last maximum instead).
    let mut best: Option<(&str, usize)> = None;
    for &(s, c) in &seen {
        if best.map_or(true, |(_, bc)| c > bc) {
            best = Some((s, c));
        }
    }
    best.map(|(s, _)| s.to_string()).unwrap_or_default()
}

/// Run `self_consistency_samples` independent guided searches and vote.
/// Runs execute concurrently; failed runs vote with the empty answer.
pub fn self_consistent_solve(
    problem: &Problem,
    solver: &dyn SolverRole,
    critic: &dyn CriticRole,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<(String, Vec<SearchTrace>)> {
    let n = cfg.self_consistency_samples.max(1);
    let mut results: Vec<(String, Option<SearchTrace>)> = vec![(String::new(), None); n];
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(n);
        for i in 0..n {
            let run_seed = derive_seed(seed, &[i as u64]);
            handles.push(scope.spawn(move || {
                guided_solve(problem, solver, critic, cfg, run_seed)
                    .map(|(a, t)| (a, Some(t)))
                    .unwrap_or((String::new(), None))
            }));
        }
        for (slot, handle) in results.iter_mut().zip(handles) {
            *slot = handle.join().expect("search worker panicked");
        }
    });
    let answers: Vec<String> = results.iter().map(|(a, _)| a.clone()).collect();
    let traces = results.into_iter().filter_map(|(_, t)| t).collect();
    Ok((majority_vote(&answers), traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roles::Critique;
    use crate::toyworld::{sample_problem, OracleCritic, ToySolver};

    fn toy_problem(seed: u64) -> Problem {
        sample_problem(seed, 4).unwrap().to_problem(&format!("s-{seed}"))
    }

    #[test]
    fn oracle_guided_search_always_solves() {
        let solver = ToySolver::with_error_rate(0.3, 0.0);
        // A wide retry budget: with 5 retries a bad step survives a whole
        // budget with probability 0.3^5, which is visible over 240 steps.
        let cfg = SearchConfig {
            max_retries_per_step: 12,
            ..SearchConfig::default()
        };
        let mut solved = 0;
        let n = 60;
        for seed in 0..n {
            let problem = toy_problem(1000 + seed);
            let (answer, trace) =
                guided_solve(&problem, &solver, &OracleCritic, &cfg, seed).unwrap();
            if answer == canonicalize_answer(&problem.gold_answer) {
                solved += 1;
            }
            for s in &trace.steps {
                assert!(s.attempts.len() <= cfg.max_retries_per_step);
            }
        }
        assert_eq!(solved, n, "oracle-guided search must solve everything");
    }

    #[test]
    fn approving_critic_equals_unguided() {
        struct YesCritic;
        impl CriticRole for YesCritic {
            fn critique(&self, _: &CritiqueRequest, _: f64, _: u64) -> Result<Critique> {
                Ok(Critique {
                    text: "Conclusion: the step is correct.".into(),
                    verdict: Some(StepVerdict::Correct),
                    old_logprob: None,
                })
            }
        }
        // With an approving critic, every step is the first attempt, so the
        // accepted chain equals what one-attempt generation would produce.
        let solver = ToySolver::with_error_rate(0.0, 0.0);
        let cfg = SearchConfig::default();
        let problem = toy_problem(7);
        let (answer, trace) = guided_solve(&problem, &solver, &YesCritic, &cfg, 3).unwrap();
        assert_eq!(answer, canonicalize_answer(&problem.gold_answer));
        assert!(trace.steps.iter().all(|s| s.attempts.len() == 1));
    }

    #[test]
    fn rejecting_critic_exhausts_retries_and_skips() {
        struct NoCritic;
        impl CriticRole for NoCritic {
            fn critique(&self, request: &CritiqueRequest, _: f64, _: u64) -> Result<Critique> {
                // Reject everything except terminal answer statements.
                if crate::core::is_terminal_step(&request.step.text) {
                    return Ok(Critique {
                        text: "Conclusion: the step is correct.".into(),
                        verdict: Some(StepVerdict::Correct),
                        old_logprob: None,
                    });
                }
                Ok(Critique {
                    text: "Conclusion: the step is incorrect.".into(),
                    verdict: Some(StepVerdict::Incorrect),
                    old_logprob: None,
                })
            }
        }
        let solver = ToySolver::with_error_rate(0.0, 0.0);
        let cfg = SearchConfig::default();
        let problem = toy_problem(5);
        let (answer, trace) = guided_solve(&problem, &solver, &NoCritic, &cfg, 1).unwrap();
        let non_terminal: Vec<_> = trace
            .steps
            .iter()
            .filter(|s| s.accepted_via == AcceptedVia::RetriesExhausted)
            .collect();
        assert!(!non_terminal.is_empty());
        for s in non_terminal {
            assert_eq!(s.attempts.len(), cfg.max_retries_per_step);
        }
        // The solver is perfect, so skipped steps are still correct.
        assert_eq!(answer, canonicalize_answer(&problem.gold_answer));
    }

    #[test]
    fn majority_vote_examples() {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(majority_vote(&v(&["A", "A", "B", "A", "C"])), "A");
        assert_eq!(majority_vote(&v(&["A", "A", "B", "B", ""])), "A");
        assert_eq!(majority_vote(&v(&["B", "A", "A", "B", ""])), "B");
        assert_eq!(majority_vote(&[]), "");
    }

    #[test]
    fn self_consistency_degenerates_to_one_run() {
        let solver = ToySolver::with_error_rate(0.2, 0.0);
        let cfg = SearchConfig {
            self_consistency_samples: 1,
            ..SearchConfig::default()
        };
        let problem = toy_problem(9);
        let (sc, traces) =
            self_consistent_solve(&problem, &solver, &OracleCritic, &cfg, 4).unwrap();
        let (one, _) =
            guided_solve(&problem, &solver, &OracleCritic, &cfg, derive_seed(4, &[0])).unwrap();
        assert_eq!(sc, one);
        assert_eq!(traces.len(), 1);
    }

    #[test]
    fn unguided_zero_budget_is_empty() {
        let solver = ToySolver::with_error_rate(0.0, 0.0);
        let cfg = SearchConfig {
            max_steps: 0,
            ..SearchConfig::default()
        };
        assert_eq!(unguided_solve(&toy_problem(2), &solver, &cfg, 0).unwrap(), "");
    }

    #[test]
    fn unguided_perfect_solver_reaches_gold() {
        let solver = ToySolver::with_error_rate(0.0, 0.0);
        let cfg = SearchConfig::default();
        let problem = toy_problem(11);
        assert_eq!(
            unguided_solve(&problem, &solver, &cfg, 0).unwrap(),
            canonicalize_answer(&problem.gold_answer)
        );
    }
}
