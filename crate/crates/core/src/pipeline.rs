//! Method selection and outcome classification shared by the command line
//! and the comparison runner.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::AllocationError;
use crate::greedy::{best_channel_min, greedy_sys_power_min, tx_power_min, GreedyError};
use crate::milp::{solve_bnb, BnbOptions, LeafMode, MilpError};
use crate::scenario::Scenario;
use crate::solution::Solution;
use crate::solver::{BnbLimits, BnbStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bnb,
    Greedy,
    TxMin,
    BestChan,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Bnb, Method::Greedy, Method::TxMin, Method::BestChan];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bnb => "bnb",
            Method::Greedy => "greedy",
            Method::TxMin => "txmin",
            Method::BestChan => "bestchan",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown method '{0}' (expected bnb, greedy, txmin or bestchan)")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub limits: BnbLimits,
    pub mode: LeafMode,
    /// Seed of the greedy pass order; the scenario seed when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Greedy(#[from] GreedyError),
}

/// How a run ended, ordered as the command line reports it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Solved,
    Infeasible,
    /// A node or time limit stopped the search with a feasible schedule.
    LimitWithIncumbent,
    /// A limit stopped the search before any feasible schedule.
    LimitWithoutIncumbent,
    Error,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Solved => 0,
            Outcome::Infeasible => 2,
            Outcome::LimitWithIncumbent => 3,
            Outcome::LimitWithoutIncumbent | Outcome::Error => 1,
        }
    }

    pub fn of_solution(sol: &Solution) -> Self {
        match sol.bnb.as_ref().map(|b| b.status) {
            Some(BnbStatus::NodeLimit | BnbStatus::TimeLimit) => Outcome::LimitWithIncumbent,
            _ => Outcome::Solved,
        }
    }

    pub fn of_error(err: &RunError) -> Self {
        match err {
            RunError::Milp(MilpError::Infeasible(_))
            | RunError::Milp(MilpError::Allocation(AllocationError::Infeasible))
            | RunError::Greedy(GreedyError::Milp(MilpError::Infeasible(_)))
            | RunError::Greedy(GreedyError::Unserved { .. })
            | RunError::Greedy(GreedyError::NoRoute { .. })
            | RunError::Greedy(GreedyError::PowerLimit { .. })
            | RunError::Greedy(GreedyError::Allocation(AllocationError::Infeasible)) => Outcome::Infeasible,
            RunError::Milp(MilpError::NoIncumbent(_)) | RunError::Greedy(GreedyError::Milp(MilpError::NoIncumbent(_))) => {
                Outcome::LimitWithoutIncumbent
            }
            _ => Outcome::Error,
        }
    }
}

pub struct Run {
    pub method: Method,
    pub result: Result<Solution, RunError>,
    pub runtime: Duration,
    pub seed: u64,
}

impl Run {
    pub fn outcome(&self) -> Outcome {
        match &self.result {
            Ok(sol) => Outcome::of_solution(sol),
            Err(e) => Outcome::of_error(e),
        }
    }
}

pub fn run_method(scenario: &Scenario, method: Method, options: &RunOptions) -> Run {
    let seed = options.seed.unwrap_or(scenario.seed);
    let started = Instant::now();
    let result = match method {
        Method::Bnb => {
            // the greedy schedule is a cheap first incumbent for exact search
            let warm_start = (options.mode == LeafMode::Exact)
                .then(|| greedy_sys_power_min(scenario, seed).ok().map(|s| s.schedule))
                .flatten();
            let opts = BnbOptions { limits: options.limits, mode: options.mode, warm_start };
            solve_bnb(scenario, &opts).map_err(RunError::from)
        }
        Method::Greedy => greedy_sys_power_min(scenario, seed).map_err(RunError::from),
        Method::TxMin => tx_power_min(scenario, &options.limits).map_err(RunError::from),
        Method::BestChan => best_channel_min(scenario).map_err(RunError::from),
    };
    Run { method, result, runtime: started.elapsed(), seed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::minimal_pair;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>(), Ok(m));
        }
        assert!("dp".parse::<Method>().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Outcome::Solved.exit_code(), 0);
        assert_eq!(Outcome::Infeasible.exit_code(), 2);
        assert_eq!(Outcome::LimitWithIncumbent.exit_code(), 3);
        assert_eq!(Outcome::LimitWithoutIncumbent.exit_code(), 1);
    }

    #[test]
    fn every_method_solves_minimal_pair() {
        let s = minimal_pair();
        for m in Method::ALL {
            let run = run_method(&s, m, &RunOptions::default());
            assert_eq!(run.outcome(), Outcome::Solved, "{m}");
        }
    }

    #[test]
    fn unreachable_rate_is_infeasible() {
        let mut s = minimal_pair();
        s.sessions[0].rate_mbps = 500.0;
        for m in Method::ALL {
            let run = run_method(&s, m, &RunOptions::default());
            assert_eq!(run.outcome(), Outcome::Infeasible, "{m}: {:?}", run.result.err());
        }
    }
}
