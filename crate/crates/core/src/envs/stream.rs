use std::io::{self, BufRead, Write};

use rand::SeedableRng;

use super::{EnvError, SimRng, Simulator};
use crate::agents::Transition;
use crate::features::{FeatureMap, FeatureVector};
use crate::scalar::Real;

/// A transition in raw state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTransition {
    pub state: Vec<f64>,
    pub next: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Endless episodic stream of state transitions. A new episode starts after a
/// terminal transition or when the simulator's episode length is reached.
pub struct StateStream<'a> {
    sim: &'a dyn Simulator,
    rng: SimRng,
    state: Option<Vec<f64>>,
    steps_in_episode: usize,
    cap: Option<usize>,
}

impl<'a> StateStream<'a> {
    pub fn new(sim: &'a dyn Simulator, seed: u64) -> Self {
        Self {
            sim,
            rng: SimRng::seed_from_u64(seed),
            state: None,
            steps_in_episode: 0,
            cap: sim.max_episode_len(),
        }
    }

    /// Additionally cuts episodes after `len` steps. Gives continuing
    /// simulators an episode structure.
    pub fn with_episode_len(mut self, len: Option<usize>) -> Self {
        self.cap = match (self.cap, len) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self
    }

    pub fn gamma(&self) -> f64 {
        self.sim.gamma()
    }

    /// Whether the last emitted transition ended its episode.
    pub fn episode_ended(&self) -> bool {
        self.state.is_none()
    }
}

impl Iterator for StateStream<'_> {
    type Item = StateTransition;

    fn next(&mut self) -> Option<StateTransition> {
        let state = match self.state.take() {
            Some(s) => s,
            None => {
                self.steps_in_episode = 0;
                self.sim.start_state(&mut self.rng)
            }
        };
        let step = self.sim.step(&state, &mut self.rng);
        self.steps_in_episode += 1;
        let cut = self.cap.is_some_and(|m| self.steps_in_episode >= m);
        if !step.terminal && !cut {
            self.state = Some(step.next.clone());
        }
        Some(StateTransition {
            state,
            next: step.next,
            reward: step.reward,
            terminal: step.terminal,
        })
    }
}

/// Feature-space view of a [`StateStream`].
pub struct TransitionStream<'a, T: Real> {
    states: StateStream<'a>,
    features: &'a dyn FeatureMap<T>,
    carried: Option<(Vec<f64>, FeatureVector<T>)>,
}

impl<'a, T: Real> TransitionStream<'a, T> {
    pub fn new(sim: &'a dyn Simulator, features: &'a dyn FeatureMap<T>, seed: u64) -> Self {
        Self {
            states: StateStream::new(sim, seed),
            features,
            carried: None,
        }
    }

    /// Next transition together with its raw states.
    pub fn next_with_states(&mut self) -> (StateTransition, Transition<T>) {
        let st = self.states.next().expect("state stream is endless");
        let x = match self.carried.take() {
            Some((s, f)) if s == st.state => f,
            _ => self.features.features(&st.state),
        };
        let x_next = self.features.features(&st.next);
        let cd = if st.terminal { 0.0 } else { self.states.gamma() };
        self.carried = Some((st.next.clone(), x_next.clone()));
        let tr = Transition::new(x, x_next, T::lit(st.reward), T::lit(cd));
        (st, tr)
    }
}

impl<T: Real> Iterator for TransitionStream<'_, T> {
    type Item = Transition<T>;

    fn next(&mut self) -> Option<Transition<T>> {
        Some(self.next_with_states().1)
    }
}

/// The first `length` feature transitions of the stream seeded by `seed`.
pub fn sample_stream<T: Real>(
    sim: &dyn Simulator,
    features: &dyn FeatureMap<T>,
    seed: u64,
    length: usize,
) -> Vec<Transition<T>> {
    TransitionStream::new(sim, features, seed).take(length).collect()
}

fn write_vector<W: Write, T: Real>(out: &mut W, v: &FeatureVector<T>) -> io::Result<()> {
    let pairs: Vec<(usize, T)> = v.iter().filter(|(_, x)| *x != T::zero()).collect();
    write!(out, "{}", pairs.len())?;
    for (i, x) in pairs {
        write!(out, " {i} {}", x.as_f64())?;
    }
    Ok(())
}

/// Writes a replayable text log: a header line with `d`, then one line per
/// transition holding `nnz (index value)*` for `x` and for `x_next`, the
/// reward and the continuation discount, separated by spaces.
pub fn write_stream_log<W: Write, T: Real>(mut out: W, dim: usize, stream: &[Transition<T>]) -> io::Result<()> {
    writeln!(out, "{dim}")?;
    for tr in stream {
        write_vector(&mut out, &tr.x)?;
        write!(out, " ")?;
        write_vector(&mut out, &tr.x_next)?;
        writeln!(out, " {} {}", tr.reward.as_f64(), tr.continue_discount.as_f64())?;
    }
    Ok(())
}

/// Reads a log written by [`write_stream_log`]; features come back sparse.
pub fn read_stream_log<B: BufRead, T: Real>(input: B) -> Result<(usize, Vec<Transition<T>>), EnvError> {
    let bad = |line: usize, what: &str| EnvError::MalformedLog(format!("line {line}: {what}"));
    let mut lines = input.lines().enumerate();
    let dim: usize = match lines.next() {
        Some((_, Ok(l))) => l.trim().parse().map_err(|_| bad(1, "expected the dimension"))?,
        _ => return Err(bad(1, "missing header")),
    };
    let mut out = Vec::new();
    for (n, line) in lines {
        let n = n + 1;
        let line = line.map_err(|e| bad(n, &e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut tok = line.split_ascii_whitespace();
        let mut num = |what: &str| -> Result<f64, EnvError> {
            tok.next()
                .ok_or_else(|| bad(n, &format!("missing {what}")))?
                .parse::<f64>()
                .map_err(|_| bad(n, &format!("unparsable {what}")))
        };
        let mut vectors = Vec::with_capacity(2);
        for _ in 0..2 {
            let nnz = num("count")?;
            if nnz < 0.0 || nnz.fract() != 0.0 || nnz as usize > dim {
                return Err(bad(n, "invalid nonzero count"));
            }
            let mut pairs = Vec::with_capacity(nnz as usize);
            for _ in 0..nnz as usize {
                let i = num("index")?;
                if i < 0.0 || i.fract() != 0.0 || i as usize >= dim {
                    return Err(bad(n, "index out of range"));
                }
                pairs.push((i as usize, T::lit(num("value")?)));
            }
            vectors.push(FeatureVector::sparse(dim, pairs));
        }
        let reward = num("reward")?;
        let cd = num("continue_discount")?;
        if !(0.0..=1.0).contains(&cd) {
            return Err(bad(n, "continue_discount outside [0, 1]"));
        }
        let x_next = vectors.pop().unwrap();
        let x = vectors.pop().unwrap();
        out.push(Transition::new(x, x_next, T::lit(reward), T::lit(cd)));
    }
    Ok((dim, out))
}
