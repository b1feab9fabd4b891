use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of one selection step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "decision")]
pub enum Decision {
    /// The candidate joined the training set.
    Accepted,
    /// The last addition left the training set (`None` if it was already reverted).
    Reverted { removed: Option<String> },
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "event")]
pub enum SelectionEvent {
    Init {
        pool: Vec<String>,
        seed: u64,
        pick: String,
    },
    Step {
        x: f64,
        candidate: String,
        accept: bool,
        #[serde(flatten)]
        decision: Decision,
    },
}

/// State of the greedy training-set construction. `pool` holds the images
/// not in `training`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSession {
    pub training: Vec<String>,
    pub pool: BTreeSet<String>,
    pub x_prev: f64,
    pub z_prev: Option<String>,
    pub history: Vec<SelectionEvent>,
}

/// Mean score over the pool and the pool ranked worst first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPool {
    pub x: f64,
    pub ranked: Vec<(String, f64)>,
}

/// Moves one randomly chosen image of `pool` into the training set.
pub fn selection_init(pool: &[String], seed: u64) -> Result<SelectionSession> {
    let pool: BTreeSet<String> = pool.iter().cloned().collect();
    if pool.is_empty() {
        return Err(Error::Selection("the image pool is empty".into()));
    }
    let ids: Vec<String> = pool.iter().cloned().collect();
    let pick = ids[ChaCha8Rng::seed_from_u64(seed).random_range(0..ids.len())].clone();
    let mut session = SelectionSession {
        training: Vec::new(),
        pool,
        x_prev: 0.0,
        z_prev: None,
        history: Vec::new(),
    };
    session.pool.remove(&pick);
    session.training.push(pick.clone());
    session.z_prev = Some(pick.clone());
    session.history.push(SelectionEvent::Init { pool: ids, seed, pick });
    Ok(session)
}

/// Trains on the current training set, scores every pool image and ranks
/// them by ascending score, ties by id.
pub fn selection_score<M>(
    session: &SelectionSession,
    mut train_fn: impl FnMut(&[String]) -> Result<M>,
    mut eval_fn: impl FnMut(&M, &str) -> Result<f64>,
) -> Result<ScoredPool> {
    if session.training.is_empty() {
        return Err(Error::Selection("the training set is empty".into()));
    }
    if session.pool.is_empty() {
        return Err(Error::Selection("no images left to evaluate".into()));
    }
    let model = train_fn(&session.training)?;
    let mut ranked = session
        .pool
        .iter()
        .map(|id| Ok((id.clone(), eval_fn(&model, id)?)))
        .collect::<Result<Vec<_>>>()?;
    let x = ranked.iter().map(|r| r.1).sum::<f64>() / ranked.len() as f64;
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ScoredPool { x, ranked })
}

impl SelectionSession {
    /// The selection rule: revert the last addition when `x` dropped below
    /// the previous score, otherwise add `candidate`.
    pub fn step(&mut self, x: f64, candidate: &str) -> Result<Decision> {
        let accept = x >= self.x_prev;
        self.decide(accept, x, candidate)
    }

    /// Applies an explicit accept/revert decision for `candidate` scored `x`.
    pub fn decide(&mut self, accept: bool, x: f64, candidate: &str) -> Result<Decision> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Selection(format!("score {x} is outside [0, 1]")));
        }
        if !self.pool.contains(candidate) {
            return Err(Error::Selection(format!("{candidate} is not in the pool")));
        }
        let decision = if accept {
            self.pool.remove(candidate);
            self.training.push(candidate.to_string());
            self.x_prev = x;
            self.z_prev = Some(candidate.to_string());
            Decision::Accepted
        } else {
            let removed = self.z_prev.take();
            if let Some(z) = &removed {
                self.training.retain(|t| t != z);
                self.pool.insert(z.clone());
            }
            Decision::Reverted { removed }
        };
        self.history.push(SelectionEvent::Step {
            x,
            candidate: candidate.to_string(),
            accept,
            decision: decision.clone(),
        });
        debug_assert!(self.training.iter().all(|t| !self.pool.contains(t)));
        Ok(decision)
    }

    /// Rebuilds a session from its event log.
    pub fn replay(events: &[SelectionEvent]) -> Result<Self> {
        let mut iter = events.iter();
        let mut session = match iter.next() {
            Some(SelectionEvent::Init { pool, seed, pick }) => {
                let s = selection_init(pool, *seed)?;
                if s.training[0] != *pick {
                    return Err(Error::Selection(format!(
                        "log says the first pick was {pick}, replay picked {}",
                        s.training[0]
                    )));
                }
                s
            }
            _ => return Err(Error::Selection("log does not start with an init event".into())),
        };
        for ev in iter {
            match ev {
                SelectionEvent::Step {
                    x,
                    candidate,
                    accept,
                    decision,
                } => {
                    let got = session.decide(*accept, *x, candidate)?;
                    if got != *decision {
                        return Err(Error::Selection(format!(
                            "replayed step on {candidate} diverged from the log"
                        )));
                    }
                }
                SelectionEvent::Init { .. } => {
                    return Err(Error::Selection("unexpected init event in the middle of a log".into()))
                }
            }
        }
        Ok(session)
    }

    pub fn history_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for ev in &self.history {
            out.push_str(&serde_json::to_string(ev)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse_jsonl(text: &str) -> Result<Vec<SelectionEvent>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect()
    }
}
