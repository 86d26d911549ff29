//! Tabular Q-learning: discretized states, dynamic action sets,
//! epsilon-greedy selection and the temporal-difference update.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Integer bucket codes describing one observed state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct DiscretizedState(pub Vec<i64>);

/// A raw state feature prior to bucketing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feature {
    /// Continuous value, bucketed by `floor(value / width)`.
    Real(f64),
    /// Count, used as-is.
    Count(usize),
}

/// Buckets each feature and clamps it into `[0, cap]`.
pub fn discretize(features: &[Feature], widths: &[f64], caps: &[i64]) -> Result<DiscretizedState> {
    if widths.len() != features.len() || caps.len() != features.len() {
        return Err(invalid(format!("{} features but {} widths and {} caps", features.len(), widths.len(), caps.len())));
    }
    let mut codes = Vec::with_capacity(features.len());
    for ((f, &w), &cap) in features.iter().zip(widths).zip(caps) {
        if !(w > 0.0 && w.is_finite()) {
            return Err(invalid(format!("bucket width must be positive, got {w}")));
        }
        let code = match *f {
            Feature::Real(v) => {
                if v.is_nan() {
                    return Err(invalid("cannot discretize NaN"));
                }
                let b = (v / w).floor();
                if b >= cap as f64 {
                    cap
                } else if b <= 0.0 {
                    0
                } else {
                    b as i64
                }
            }
            Feature::Count(c) => (c as i64).min(cap),
        };
        codes.push(code.min(cap));
    }
    Ok(DiscretizedState(codes))
}

/// Actions available at one decision, tagged with the environment epoch
/// (e.g. the bin packing) that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    actions: Vec<usize>,
    pub epoch: u64,
}

impl ActionSet {
    pub fn new(actions: Vec<usize>, epoch: u64) -> Result<Self> {
        let mut sorted = actions.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("action indices must be unique"));
        }
        Ok(ActionSet { actions, epoch })
    }

    pub fn empty(epoch: u64) -> Self {
        ActionSet { actions: Vec::new(), epoch }
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }
}

/// Exponentially decaying exploration rate, evaluated per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule { start: 0.9, decay: 0.995, floor: 0.05 }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize) -> f64 {
        (self.start * self.decay.powi(episode as i32)).max(self.floor)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("start", self.start), ("floor", self.floor)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("epsilon {name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(invalid(format!("epsilon decay must lie in (0, 1], got {}", self.decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    learning_rate: f64,
    discount: f64,
    default_value: f64,
    /// Bucket widths and caps of the state encoding, kept for persistence.
    pub widths: Vec<f64>,
    pub caps: Vec<i64>,
    entries: HashMap<DiscretizedState, HashMap<usize, f64>>,
}

impl QTable {
    pub fn new(learning_rate: f64, discount: f64, default_value: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate < 1.0) {
            return Err(invalid(format!("learning rate must lie in (0, 1), got {learning_rate}")));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(invalid(format!("discount must lie in (0, 1), got {discount}")));
        }
        if !default_value.is_finite() {
            return Err(invalid("default Q-value must be finite"));
        }
        Ok(QTable { learning_rate, discount, default_value, widths: Vec::new(), caps: Vec::new(), entries: HashMap::new() })
    }

    pub fn with_encoding(mut self, widths: Vec<f64>, caps: Vec<i64>) -> Self {
        self.widths = widths;
        self.caps = caps;
        self
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn default_value(&self) -> f64 {
        self.default_value
    }

    /// Number of stored state-action pairs.
    pub fn len(&self) -> usize {
        self.entries.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, s: &DiscretizedState, a: usize) -> f64 {
        self.entries.get(s).and_then(|m| m.get(&a)).copied().unwrap_or(self.default_value)
    }

    /// Largest Q-value over `actions` in state `s`; 0 for an empty set.
    pub fn max_value(&self, s: &DiscretizedState, actions: &ActionSet) -> f64 {
        actions.actions().iter().map(|&a| self.value(s, a)).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))).unwrap_or(0.0)
    }

    /// Greedy action over `actions`, ties going to the lowest action index.
    pub fn greedy(&self, s: &DiscretizedState, actions: &ActionSet) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &a in actions.actions() {
            let v = self.value(s, a);
            best = match best {
                Some((ba, bv)) if bv > v || (bv == v && ba < a) => Some((ba, bv)),
                _ => Some((a, v)),
            };
        }
        best.map(|(a, _)| a)
    }

    /// Applies `Q(s,a) += lr * (r + discount * max Q(s', .) - Q(s,a))` and
    /// returns the new value.
    pub fn update(
        &mut self,
        s: &DiscretizedState,
        a: usize,
        reward: f64,
        s_next: &DiscretizedState,
        actions_next: &ActionSet,
    ) -> Result<f64> {
        if !reward.is_finite() {
            return Err(invalid(format!("reward must be finite, got {reward}")));
        }
        let target = reward + self.discount * self.max_value(s_next, actions_next);
        let old = self.value(s, a);
        let new = old + self.learning_rate * (target - old);
        if !new.is_finite() {
            return Err(invalid("Q-value update overflowed"));
        }
        self.entries.entry(s.clone()).or_default().insert(a, new);
        Ok(new)
    }

    /// Epsilon-greedy choice: uniform over `actions` with probability
    /// `epsilon`, otherwise greedy.
    pub fn select_action<R: Rng + ?Sized>(&self, s: &DiscretizedState, actions: &ActionSet, epsilon: f64, rng: &mut R) -> Result<usize> {
        if actions.is_empty() {
            return Err(invalid("no action available"));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            return Ok(actions.actions()[rng.random_range(0..actions.len())]);
        }
        Ok(self.greedy(s, actions).expect("non-empty action set"))
    }

    /// Line-oriented text form: a header with rates and encoding, then one
    /// `state action value` line per entry, sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# relmap q-table v1\n");
        let _ = writeln!(out, "learning_rate {}", self.learning_rate);
        let _ = writeln!(out, "discount {}", self.discount);
        let _ = writeln!(out, "default {}", self.default_value);
        let join = |v: Vec<String>| if v.is_empty() { "-".to_string() } else { v.join(",") };
        let _ = writeln!(out, "widths {}", join(self.widths.iter().map(|w| w.to_string()).collect()));
        let _ = writeln!(out, "caps {}", join(self.caps.iter().map(|c| c.to_string()).collect()));
        let mut rows: Vec<(&DiscretizedState, usize, f64)> =
            self.entries.iter().flat_map(|(s, m)| m.iter().map(move |(&a, &v)| (s, a, v))).collect();
        rows.sort_by(|x, y| x.0.cmp(y.0).then(x.1.cmp(&y.1)));
        for (s, a, v) in rows {
            let _ = writeln!(out, "{} {a} {v}", join(s.0.iter().map(|c| c.to_string()).collect()));
        }
        out
    }

    pub fn parse_text(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut header: HashMap<&str, (usize, &str)> = HashMap::new();
        let mut body = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, ' ');
            let key = parts.next().unwrap_or_default();
            let rest = parts.next().unwrap_or_default().trim();
            match key {
                "learning_rate" | "discount" | "default" | "widths" | "caps" => {
                    header.insert(key, (line_no, rest));
                }
                _ => body.push((line_no, line)),
            }
        }
        let num = |key: &str| -> Result<f64> {
            let (line, v) = header.get(key).ok_or_else(|| perr(1, format!("missing `{key}` header")))?;
            v.parse().map_err(|e| perr(*line, format!("bad {key}: {e}")))
        };
        let list = |key: &str| -> Result<Vec<String>> {
            Ok(match header.get(key) {
                None | Some((_, "-")) => Vec::new(),
                Some((_, v)) => v.split(',').map(str::to_string).collect(),
            })
        };
        let widths = list("widths")?
            .iter()
            .map(|w| w.parse::<f64>().map_err(|e| perr(header["widths"].0, format!("bad width: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let caps = list("caps")?
            .iter()
            .map(|c| c.parse::<i64>().map_err(|e| perr(header["caps"].0, format!("bad cap: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut table = QTable::new(num("learning_rate")?, num("discount")?, num("default")?)
            .map_err(|e| perr(1, e.to_string()))?
            .with_encoding(widths, caps);
        for (line, row) in body {
            let fields: Vec<&str> = row.split_whitespace().collect();
            let [state, action, value] = fields[..] else {
                return Err(perr(line, "expected `state action value`".into()));
            };
            let codes = if state == "-" {
                Vec::new()
            } else {
                state
                    .split(',')
                    .map(|c| c.parse::<i64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| perr(line, format!("bad state code: {e}")))?
            };
            let action: usize = action.parse().map_err(|e| perr(line, format!("bad action: {e}")))?;
            let value: f64 = value.parse().map_err(|e| perr(line, format!("bad value: {e}")))?;
            if !value.is_finite() {
                return Err(perr(line, "Q-value must be finite".into()));
            }
            table.entries.entry(DiscretizedState(codes)).or_default().insert(action, value);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        QTable::parse_text(&std::fs::read_to_string(path)?, path)
    }
}

/// Small deterministic MDPs for exercising the learner in isolation.
pub mod toy {
    use rand::Rng;

    use super::{ActionSet, DiscretizedState, EpsilonSchedule, QTable};
    use crate::error::Result;

    /// Deterministic finite MDP with every action available in every state.
    #[derive(Debug, Clone, PartialEq)]
    pub struct ToyMdp {
        /// `next[s][a]`
        pub next: Vec<Vec<usize>>,
        /// `reward[s][a]`
        pub reward: Vec<Vec<f64>>,
        pub start: usize,
    }

    impl ToyMdp {
        /// Two states, two actions. From state 0, action 1 pays 1 and moves to
        /// state 1; action 0 pays 0 and stays. In state 1, action 0 pays 2 and
        /// returns to state 0, action 1 pays 0.5 and stays.
        pub fn two_state() -> Self {
            ToyMdp { next: vec![vec![0, 1], vec![0, 1]], reward: vec![vec![0.0, 1.0], vec![2.0, 0.5]], start: 0 }
        }

        /// Two bins of different thermal quality seen as a bin-selection
        /// problem: state is which bin ran the previous task.
        pub fn two_bin() -> Self {
            ToyMdp { next: vec![vec![0, 1], vec![0, 1]], reward: vec![vec![0.2, 1.0], vec![1.5, 0.1]], start: 0 }
        }

        pub fn states(&self) -> usize {
            self.next.len()
        }

        pub fn actions(&self) -> usize {
            self.next[0].len()
        }

        pub fn scaled(&self, c: f64) -> Self {
            let mut m = self.clone();
            m.reward.iter_mut().flatten().for_each(|r| *r *= c);
            m
        }

        pub fn state(s: usize) -> DiscretizedState {
            DiscretizedState(vec![s as i64])
        }
    }

    /// Runs `episodes` episodes of `steps` transitions each; returns the
    /// cumulative reward of every episode.
    pub fn train<R: Rng + ?Sized>(
        mdp: &ToyMdp,
        table: &mut QTable,
        episodes: usize,
        steps: usize,
        schedule: &EpsilonSchedule,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let all = ActionSet::new((0..mdp.actions()).collect(), 0)?;
        let mut curve = Vec::with_capacity(episodes);
        for ep in 0..episodes {
            let eps = schedule.at(ep);
            let mut s = mdp.start;
            let mut total = 0.0;
            for _ in 0..steps {
                let a = table.select_action(&ToyMdp::state(s), &all, eps, rng)?;
                let r = mdp.reward[s][a];
                let s2 = mdp.next[s][a];
                table.update(&ToyMdp::state(s), a, r, &ToyMdp::state(s2), &all)?;
                total += r;
                s = s2;
            }
            curve.push(total);
        }
        Ok(curve)
    }

    pub fn greedy_policy(mdp: &ToyMdp, table: &QTable) -> Vec<usize> {
        let all = ActionSet::new((0..mdp.actions()).collect(), 0).expect("unique");
        (0..mdp.states()).map(|s| table.greedy(&ToyMdp::state(s), &all).expect("non-empty")).collect()
    }
}
