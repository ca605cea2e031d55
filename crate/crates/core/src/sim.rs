//! In-process simulation of students choosing cards, plus the analysis that
//! recovers their preference type from the resulting choice log.
//!
//! Each student runs against its own [`Engine`] with the production ranking,
//! feature and lifecycle code. Students are independent, so they run in
//! parallel when the `parallel` feature is on; logs are merged in student
//! order, which makes the output identical either way.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{Config, InferenceParams};
use crate::error::{Error, Result};
use crate::events::{write_jsonl_file, ChoiceEvent, EndReason, EventBody};
use crate::features::FeatureVector;
use crate::ids::{CardId, ItemId, SessionId, StudentId};
use crate::session::{Engine, EngineState, GestureInput, TickClock};
use crate::student::{rasch, AnswerOutcome, ItemPool, LearningItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    ChallengeSeeking,
    ChallengeAverse,
    Random,
    AlwaysEngage,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::ChallengeSeeking,
        PolicyKind::ChallengeAverse,
        PolicyKind::Random,
        PolicyKind::AlwaysEngage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::ChallengeSeeking => "challenge_seeking",
            PolicyKind::ChallengeAverse => "challenge_averse",
            PolicyKind::Random => "random",
            PolicyKind::AlwaysEngage => "always_engage",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown policy {s:?}")))
    }
}

/// Engagement curves. Challenge seekers engage more the further the
/// displayed correctness falls below `pivot`; averse students mirror that.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    pub pivot: f64,
    pub steepness: f64,
    pub random_engage: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            pivot: 0.6,
            steepness: 12.0,
            random_engage: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwipePolicy {
    pub kind: PolicyKind,
    pub params: PolicyParams,
}

impl SwipePolicy {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            params: PolicyParams::default(),
        }
    }

    /// Probability of tapping a card, from what the card displays.
    pub fn engage_probability(&self, displayed: &FeatureVector) -> f64 {
        let p = &self.params;
        match self.kind {
            PolicyKind::ChallengeSeeking => crate::student::logistic(p.steepness * (p.pivot - displayed.cr)),
            PolicyKind::ChallengeAverse => crate::student::logistic(p.steepness * (displayed.cr - p.pivot)),
            PolicyKind::Random => p.random_engage,
            PolicyKind::AlwaysEngage => 1.0,
        }
    }

    pub fn decide<R: Rng>(&self, displayed: &FeatureVector, rng: &mut R) -> bool {
        rng.random_bool(self.engage_probability(displayed).clamp(0.0, 1.0))
    }
}

/// Weighted policy mix, parsed from `kind=weight,kind=weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMix(pub Vec<(PolicyKind, f64)>);

impl PolicyMix {
    pub fn single(kind: PolicyKind) -> Self {
        Self(vec![(kind, 1.0)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() || self.0.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Validation("policy mix needs non-negative weights".into()));
        }
        let total: f64 = self.0.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("policy mix sums to {total}, not 1")));
        }
        Ok(())
    }

    /// Deterministic assignment of `n` students: largest-remainder counts,
    /// laid out in mix order.
    pub fn assign(&self, n: usize) -> Vec<PolicyKind> {
        let quotas: Vec<f64> = self.0.iter().map(|(_, w)| w * n as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let short = n - counts.iter().sum::<usize>();
        for &k in order.iter().take(short) {
            counts[k] += 1;
        }
        self.0
            .iter()
            .zip(counts)
            .flat_map(|((kind, _), c)| std::iter::repeat_n(*kind, c))
            .collect()
    }
}

impl FromStr for PolicyMix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mix = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|part| {
                let (k, w) = part
                    .split_once('=')
                    .ok_or_else(|| Error::Validation(format!("policy mix entry {part:?} is not kind=weight")))?;
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| Error::Validation(format!("bad weight in {part:?}")))?;
                Ok((k.trim().parse()?, w))
            })
            .collect::<Result<Vec<_>>>()?;
        let mix = PolicyMix(mix);
        mix.validate()?;
        Ok(mix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_students: usize,
    pub n_items: usize,
    pub steps_per_student: usize,
    pub seed: u64,
    pub policy_mix: PolicyMix,
    pub output_path: Option<PathBuf>,
    pub policy_params: PolicyParams,
    /// Chance of quitting after an answer is `quit_scale * (1 - Cp)`.
    /// Zero means every student uses the full step budget.
    pub quit_scale: f64,
    /// Chance of a drag-and-cancel before a skip.
    pub hesitation_rate: f64,
    pub theta_sd: f64,
    pub tau_sd: f64,
    pub difficulty_sd: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_students: 100,
            n_items: 200,
            steps_per_student: 60,
            seed: 7,
            policy_mix: PolicyMix(vec![
                (PolicyKind::ChallengeSeeking, 0.5),
                (PolicyKind::ChallengeAverse, 0.5),
            ]),
            output_path: None,
            policy_params: PolicyParams::default(),
            quit_scale: 0.0,
            hesitation_rate: 0.1,
            theta_sd: 1.0,
            tau_sd: 0.3,
            difficulty_sd: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_students == 0 || self.n_items == 0 {
            return Err(Error::Validation("students and items must be > 0".into()));
        }
        self.policy_mix.validate()?;
        for (name, v) in [
            ("quit_scale", self.quit_scale),
            ("hesitation_rate", self.hesitation_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} must be in [0,1]")));
            }
        }
        if !(self.theta_sd >= 0.0 && self.tau_sd >= 0.0 && self.difficulty_sd >= 0.0) {
            return Err(Error::Validation("latent spreads must be >= 0".into()));
        }
        Ok(())
    }
}

const TOPICS: [&str; 8] = [
    "algebra",
    "geometry",
    "probability",
    "statistics",
    "calculus",
    "number_theory",
    "trigonometry",
    "combinatorics",
];

/// Item stream index, kept apart from the per-student streams.
const ITEM_STREAM: u64 = u64::MAX;

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A seeded synthetic catalog. Difficulties are normal around zero, on the
/// same logit scale as simulated abilities.
pub fn generate_items(n: usize, difficulty_sd: f64, seed: u64) -> Vec<LearningItem> {
    let mut rng = stream(seed, ITEM_STREAM);
    (0..n)
        .map(|k| {
            let zb: f64 = StandardNormal.sample(&mut rng);
            let b = difficulty_sd * zb;
            let z: f64 = StandardNormal.sample(&mut rng);
            let mu = 60f64.ln() + 0.4 * z;
            let slack: f64 = rng.random_range(-0.3..0.6);
            let n_tags = rng.random_range(1..=2);
            let mut tags = BTreeSet::new();
            while tags.len() < n_tags {
                tags.insert(TOPICS[rng.random_range(0..TOPICS.len())].to_owned());
            }
            LearningItem {
                item_id: ItemId::new(format!("item-{k:04}")),
                difficulty_b: b,
                log_median_time_mu: mu,
                time_limit_s: ((mu + slack).exp() / 5.0).round().max(1.0) * 5.0,
                topic_tags: tags,
            }
        })
        .collect()
}

/// One simulated student's run.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentRun {
    pub index: usize,
    pub policy: PolicyKind,
    pub true_theta: f64,
    pub true_tau: f64,
    pub events: Vec<ChoiceEvent>,
    /// Live engine state at the end of the run.
    pub state: EngineState,
}

impl StudentRun {
    pub fn session_id(&self) -> SessionId {
        sim_session_id(self.index)
    }
}

pub fn sim_session_id(index: usize) -> SessionId {
    SessionId::new(format!("sim-{index:05}"))
}

/// Runs one student. Three independent random streams per student: latent
/// truth and answers, policy decisions, and gesture kinematics.
pub fn run_student(
    index: usize,
    policy: SwipePolicy,
    cfg: &SimConfig,
    pool: Arc<ItemPool>,
    config: Arc<Config>,
) -> Result<StudentRun> {
    let base = 3 * index as u64;
    let mut truth_rng = stream(cfg.seed, base);
    let mut policy_rng = stream(cfg.seed, base + 1);
    let mut motion_rng = stream(cfg.seed, base + 2);

    let true_theta = Normal::new(0.0, cfg.theta_sd)
        .map_err(|e| Error::invalid(e.to_string()))?
        .sample(&mut truth_rng);
    let true_tau = Normal::new(0.0, cfg.tau_sd)
        .map_err(|e| Error::invalid(e.to_string()))?
        .sample(&mut truth_rng);
    let sigma_t = config.features.sigma_t;

    let mut engine = Engine::new(pool, config, TickClock::default());
    let student_id = StudentId::new(format!("student-{index:05}"));
    let sid = engine.start_session(&student_id, Some(sim_session_id(index)), Some(policy.kind.to_string()))?;

    let mut reason = EndReason::StepsExhausted;
    if cfg.steps_per_student > 0 {
        engine.deal(&sid)?;
    }
    for _ in 0..cfg.steps_per_student {
        let Some(top) = engine.state.session(&sid)?.queue.top.clone() else {
            reason = EndReason::PoolExhausted;
            break;
        };
        let card: &CardId = &top.card_id;
        if policy.decide(&top.features, &mut policy_rng) {
            engine.gesture(&sid, card, GestureInput::Tap, None)?;
            let item = engine
                .pool
                .get(&top.item_id)
                .ok_or_else(|| Error::not_found("item", top.item_id.to_string()))?;
            let correct = truth_rng.random_bool(rasch(true_theta, item.difficulty_b)?);
            let z: f64 = StandardNormal.sample(&mut truth_rng);
            let elapsed = (item.log_median_time_mu - true_tau + sigma_t * z).exp();
            engine.answer(&sid, card, AnswerOutcome::new(correct, elapsed)?, None)?;
            if truth_rng.random_bool((cfg.quit_scale * (1.0 - top.features.cp)).clamp(0.0, 1.0)) {
                reason = EndReason::Quit;
                break;
            }
        } else {
            let sign = if motion_rng.random_bool(0.5) { 1.0 } else { -1.0 };
            if motion_rng.random_bool(cfg.hesitation_rate) {
                let dx = sign * motion_rng.random_range(0.02..0.2);
                engine.gesture(&sid, card, GestureInput::Drag { dx, vx: 0.0 }, None)?;
                engine.gesture(
                    &sid,
                    card,
                    GestureInput::Release {
                        dx,
                        vx: sign * motion_rng.random_range(0.0..0.5),
                    },
                    None,
                )?;
            }
            let dx = sign * motion_rng.random_range(0.35..0.9);
            let vx = sign * motion_rng.random_range(0.0..3.0);
            engine.gesture(&sid, card, GestureInput::Drag { dx: dx / 2.0, vx }, None)?;
            engine.gesture(&sid, card, GestureInput::Release { dx, vx }, None)?;
        }
    }
    engine.end_session(&sid, reason)?;

    Ok(StudentRun {
        index,
        policy: policy.kind,
        true_theta,
        true_tau,
        events: std::mem::take(&mut engine.log),
        state: engine.state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub pool: Arc<ItemPool>,
    pub runs: Vec<StudentRun>,
}

impl SimOutcome {
    /// All events, ordered by student index then seq.
    pub fn events(&self) -> Vec<ChoiceEvent> {
        self.runs.iter().flat_map(|r| r.events.iter().cloned()).collect()
    }
}

pub fn simulate(cfg: &SimConfig, config: &Config) -> Result<SimOutcome> {
    simulate_with(cfg, config, Execution::default())
}

pub fn simulate_with(cfg: &SimConfig, config: &Config, exec: Execution) -> Result<SimOutcome> {
    cfg.validate()?;
    config.validate()?;
    let pool = Arc::new(ItemPool::new(generate_items(cfg.n_items, cfg.difficulty_sd, cfg.seed))?);
    let config = Arc::new(config.clone());
    let policies = cfg.policy_mix.assign(cfg.n_students);
    let run = |(i, kind): (usize, &PolicyKind)| {
        let policy = SwipePolicy {
            kind: *kind,
            params: cfg.policy_params,
        };
        run_student(i, policy, cfg, pool.clone(), config.clone())
    };

    let runs: Result<Vec<StudentRun>> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            policies.par_iter().enumerate().map(run).collect()
        }
        _ => policies.iter().enumerate().map(run).collect(),
    };
    let outcome = SimOutcome { pool, runs: runs? };
    if let Some(path) = &cfg.output_path {
        write_jsonl_file(path, &outcome.events())?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    ChallengeSeeking,
    ChallengeAverse,
    Indeterminate,
}

impl Preference {
    pub const ALL: [Preference; 3] = [
        Preference::ChallengeSeeking,
        Preference::ChallengeAverse,
        Preference::Indeterminate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preference::ChallengeSeeking => "challenge_seeking",
            Preference::ChallengeAverse => "challenge_averse",
            Preference::Indeterminate => "indeterminate",
        }
    }

    /// The preference a policy is expected to reveal.
    pub fn expected_for(kind: PolicyKind) -> Preference {
        match kind {
            PolicyKind::ChallengeSeeking => Preference::ChallengeSeeking,
            PolicyKind::ChallengeAverse => Preference::ChallengeAverse,
            PolicyKind::Random | PolicyKind::AlwaysEngage => Preference::Indeterminate,
        }
    }
}

impl fmt::Display for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub session_id: SessionId,
    pub preference: Preference,
    pub engaged: usize,
    pub skipped: usize,
    pub engaged_mean_cr: Option<f64>,
    pub skipped_mean_cr: Option<f64>,
    /// Why the result is indeterminate, when it is for lack of data.
    pub reason: Option<String>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Compares the displayed correctness of engaged versus skipped cards.
/// Engaging harder cards (lower mean) by at least the margin reads as
/// challenge seeking, the reverse as challenge averse.
pub fn infer_preference(events: &[ChoiceEvent], session_id: &SessionId, params: &InferenceParams) -> Inference {
    let mut displayed_cr: BTreeMap<&CardId, f64> = BTreeMap::new();
    let (mut engaged, mut skipped) = (Vec::new(), Vec::new());
    for e in events.iter().filter(|e| &e.session_id == session_id) {
        let Some(card) = e.card_id.as_ref() else { continue };
        match &e.body {
            EventBody::Load { features } => {
                displayed_cr.insert(card, features.cr);
            }
            EventBody::Tap { .. } => engaged.extend(displayed_cr.get(card)),
            EventBody::Swipe { .. } => skipped.extend(displayed_cr.get(card)),
            _ => {}
        }
    }
    let mut out = Inference {
        session_id: session_id.clone(),
        preference: Preference::Indeterminate,
        engaged: engaged.len(),
        skipped: skipped.len(),
        engaged_mean_cr: mean(&engaged),
        skipped_mean_cr: mean(&skipped),
        reason: None,
    };
    let choices = engaged.len() + skipped.len();
    if choices < params.min_choices {
        out.reason = Some(format!(
            "insufficient data: {choices} choices, need {}",
            params.min_choices
        ));
        return out;
    }
    let (Some(eng), Some(skp)) = (out.engaged_mean_cr, out.skipped_mean_cr) else {
        out.reason = Some("insufficient data: no engaged or no skipped cards".into());
        return out;
    };
    out.preference = if skp - eng >= params.margin {
        Preference::ChallengeSeeking
    } else if eng - skp >= params.margin {
        Preference::ChallengeAverse
    } else {
        Preference::Indeterminate
    };
    out
}

/// Sessions in first-appearance order.
pub fn session_ids(events: &[ChoiceEvent]) -> Vec<SessionId> {
    let mut seen = BTreeSet::new();
    events
        .iter()
        .filter(|e| seen.insert(&e.session_id))
        .map(|e| e.session_id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    /// True policy label from `session_start`, or `unlabeled`.
    pub policy: String,
    pub sessions: usize,
    pub engaged: usize,
    pub skipped: usize,
    pub engagement_rate: Option<f64>,
    pub quits: usize,
    /// Mean cards shown before the student quit, over sessions that quit.
    pub mean_cards_to_quit: Option<f64>,
    /// Counts of inferred preference, in [`Preference::ALL`] order.
    pub confusion: [usize; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<PolicyRow>,
}

pub fn report(events: &[ChoiceEvent], params: &InferenceParams) -> Report {
    #[derive(Default)]
    struct Acc {
        sessions: usize,
        engaged: usize,
        skipped: usize,
        quits: usize,
        quit_cards: u64,
        confusion: [usize; 3],
    }
    let mut label: BTreeMap<&SessionId, String> = BTreeMap::new();
    let mut shown: BTreeMap<&SessionId, u64> = BTreeMap::new();
    let mut quit: BTreeSet<&SessionId> = BTreeSet::new();
    for e in events {
        match &e.body {
            EventBody::SessionStart { policy, .. } => {
                label.insert(&e.session_id, policy.clone().unwrap_or_else(|| "unlabeled".into()));
            }
            EventBody::Promote {} => *shown.entry(&e.session_id).or_default() += 1,
            EventBody::SessionEnd {
                reason: EndReason::Quit,
            } => {
                quit.insert(&e.session_id);
            }
            _ => {}
        }
    }
    let mut rows: BTreeMap<String, Acc> = BTreeMap::new();
    for sid in session_ids(events) {
        let inf = infer_preference(events, &sid, params);
        let acc = rows
            .entry(label.get(&sid).cloned().unwrap_or_else(|| "unlabeled".into()))
            .or_default();
        acc.sessions += 1;
        acc.engaged += inf.engaged;
        acc.skipped += inf.skipped;
        if quit.contains(&sid) {
            acc.quits += 1;
            acc.quit_cards += shown.get(&sid).copied().unwrap_or(0);
        }
        let col = Preference::ALL
            .iter()
            .position(|p| *p == inf.preference)
            .expect("listed");
        acc.confusion[col] += 1;
    }
    Report {
        rows: rows
            .into_iter()
            .map(|(policy, a)| PolicyRow {
                policy,
                sessions: a.sessions,
                engaged: a.engaged,
                skipped: a.skipped,
                engagement_rate: (a.engaged + a.skipped > 0).then(|| a.engaged as f64 / (a.engaged + a.skipped) as f64),
                quits: a.quits,
                mean_cards_to_quit: (a.quits > 0).then(|| a.quit_cards as f64 / a.quits as f64),
                confusion: a.confusion,
            })
            .collect(),
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.prec$}"))
}

impl Report {
    pub fn total_sessions(&self) -> usize {
        self.rows.iter().map(|r| r.sessions).sum()
    }

    /// Aligned text table.
    pub fn to_text(&self) -> String {
        let header = [
            "policy",
            "sessions",
            "engaged",
            "skipped",
            "engage_rate",
            "quits",
            "cards_to_quit",
            "->seeking",
            "->averse",
            "->indeterminate",
        ];
        let body: Vec<[String; 10]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.policy.clone(),
                    r.sessions.to_string(),
                    r.engaged.to_string(),
                    r.skipped.to_string(),
                    opt(r.engagement_rate, 3),
                    r.quits.to_string(),
                    opt(r.mean_cards_to_quit, 1),
                    r.confusion[0].to_string(),
                    r.confusion[1].to_string(),
                    r.confusion[2].to_string(),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                body.iter()
                    .map(|row| row[c].len())
                    .chain([header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |cells: Vec<&str>, out: &mut String| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, w))| {
                    if c == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(header.to_vec(), &mut out);
        for row in &body {
            line(row.iter().map(String::as_str).collect(), &mut out);
        }
        out
    }

    /// Comma-separated rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "policy,sessions,engaged,skipped,engagement_rate,quits,mean_cards_to_quit,inferred_seeking,inferred_averse,inferred_indeterminate\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.policy,
                r.sessions,
                r.engaged,
                r.skipped,
                r.engagement_rate.map_or(String::new(), |v| v.to_string()),
                r.quits,
                r.mean_cards_to_quit.map_or(String::new(), |v| v.to_string()),
                r.confusion[0],
                r.confusion[1],
                r.confusion[2],
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EventKind;
    use crate::features::FeatureVector;

    fn fv(cr: f64) -> FeatureVector {
        FeatureVector {
            e_raw: 10.0,
            cp: 0.9,
            cr,
            o: 0.5,
            i: 0.5,
            normalized: [1.0 / 3.0, 0.9, cr, 0.5, 0.5],
        }
    }

    fn small(kind: PolicyKind, steps: usize) -> SimConfig {
        SimConfig {
            n_students: 3,
            n_items: 80,
            steps_per_student: steps,
            policy_mix: PolicyMix::single(kind),
            ..SimConfig::default()
        }
    }

    #[test]
    fn policy_mix_parsing_and_assignment() {
        let mix: PolicyMix = "challenge_seeking=0.5,challenge_averse=0.5".parse().unwrap();
        let a = mix.assign(5);
        assert_eq!(a.len(), 5);
        assert_eq!(a.iter().filter(|k| **k == PolicyKind::ChallengeSeeking).count(), 3);
        assert!("challenge_seeking=0.7".parse::<PolicyMix>().is_err());
        assert!("bogus=1".parse::<PolicyMix>().is_err());
        assert!("random".parse::<PolicyMix>().is_err());
        let thirds: PolicyMix = "random=0.34,always_engage=0.33,challenge_averse=0.33".parse().unwrap();
        assert_eq!(thirds.assign(100).len(), 100);
    }

    #[test]
    fn engagement_curves() {
        let seek = SwipePolicy::new(PolicyKind::ChallengeSeeking);
        let avoid = SwipePolicy::new(PolicyKind::ChallengeAverse);
        assert!(seek.engage_probability(&fv(0.3)) > 0.9);
        assert!(seek.engage_probability(&fv(0.9)) < 0.1);
        assert!((seek.engage_probability(&fv(0.6)) - 0.5).abs() < 1e-12);
        for cr in [0.1, 0.4, 0.6, 0.85] {
            let sum = seek.engage_probability(&fv(cr)) + avoid.engage_probability(&fv(cr));
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            SwipePolicy::new(PolicyKind::AlwaysEngage).engage_probability(&fv(0.99)),
            1.0
        );
    }

    #[test]
    fn same_seed_same_log() {
        let cfg = small(PolicyKind::Random, 15);
        let a = simulate(&cfg, &Config::default()).unwrap().events();
        let b = simulate(&cfg, &Config::default()).unwrap().events();
        assert_eq!(a, b);
        let seq = simulate_with(&cfg, &Config::default(), Execution::Sequential)
            .unwrap()
            .events();
        assert_eq!(a, seq);
    }

    #[test]
    fn always_engage_never_swipes() {
        let events = simulate(&small(PolicyKind::AlwaysEngage, 20), &Config::default())
            .unwrap()
            .events();
        assert!(events
            .iter()
            .all(|e| !matches!(e.kind(), EventKind::Swipe | EventKind::Cancel)));
        assert!(events.iter().any(|e| e.kind() == EventKind::Answer));
    }

    #[test]
    fn zero_steps_is_start_and_end_only() {
        let cfg = SimConfig {
            n_students: 1,
            ..small(PolicyKind::Random, 0)
        };
        let events = simulate(&cfg, &Config::default()).unwrap().events();
        assert_eq!(
            events.iter().map(ChoiceEvent::kind).collect::<Vec<_>>(),
            [EventKind::SessionStart, EventKind::SessionEnd]
        );
    }

    #[test]
    fn unwritable_output_is_io_error() {
        let cfg = SimConfig {
            output_path: Some(PathBuf::from("/nonexistent-dir/x/events.jsonl")),
            ..small(PolicyKind::Random, 2)
        };
        assert!(matches!(simulate(&cfg, &Config::default()), Err(Error::Io(_))));
    }

    fn synthetic(engaged: &[f64], skipped: &[f64]) -> Vec<ChoiceEvent> {
        let sid = SessionId::from("x");
        let mut events = Vec::new();
        let mut seq = 0;
        let mut push = |card: Option<CardId>, body: EventBody| {
            seq += 1;
            events.push(ChoiceEvent {
                seq,
                timestamp: seq as i64,
                session_id: sid.clone(),
                card_id: card,
                item_id: None,
                body,
            });
        };
        for (k, (cr, tap)) in engaged
            .iter()
            .map(|c| (c, true))
            .chain(skipped.iter().map(|c| (c, false)))
            .enumerate()
        {
            let card = CardId::new(format!("c{k}"));
            push(Some(card.clone()), EventBody::Load { features: fv(*cr) });
            let body = if tap {
                EventBody::Tap { token: None }
            } else {
                EventBody::Swipe {
                    dx: 0.5,
                    vx: 0.0,
                    direction: crate::lifecycle::SwipeDirection::Right,
                    token: None,
                }
            };
            push(Some(card), body);
        }
        events
    }

    #[test]
    fn inference_examples() {
        let p = InferenceParams::default();
        let sid = SessionId::from("x");
        let seeking = infer_preference(&synthetic(&[0.45; 6], &[0.75; 6]), &sid, &p);
        assert_eq!(seeking.preference, Preference::ChallengeSeeking);
        let averse = infer_preference(&synthetic(&[0.75; 6], &[0.45; 6]), &sid, &p);
        assert_eq!(averse.preference, Preference::ChallengeAverse);
        let equal = infer_preference(&synthetic(&[0.6; 6], &[0.6; 6]), &sid, &p);
        assert_eq!(equal.preference, Preference::Indeterminate);
        assert!(equal.reason.is_none());
        let thin = infer_preference(&synthetic(&[0.1; 3], &[0.9; 3]), &sid, &p);
        assert_eq!(thin.preference, Preference::Indeterminate);
        assert!(thin.reason.unwrap().contains("insufficient"));
        let one_sided = infer_preference(&synthetic(&[0.1; 12], &[]), &sid, &p);
        assert_eq!(one_sided.preference, Preference::Indeterminate);
        assert!(one_sided.reason.is_some());
    }

    #[test]
    fn report_shapes() {
        let empty = report(&[], &InferenceParams::default());
        assert!(empty.rows.is_empty());
        assert_eq!(empty.to_text().lines().count(), 1);

        let events = simulate(&small(PolicyKind::ChallengeAverse, 20), &Config::default())
            .unwrap()
            .events();
        let r = report(&events, &InferenceParams::default());
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].policy, "challenge_averse");
        assert_eq!(r.total_sessions(), session_ids(&events).len());
        assert_eq!(r.rows[0].confusion.iter().sum::<usize>(), 3);
        assert_eq!(r.to_csv().lines().count(), 2);
    }
}
