use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{rollout_teach, RolloutMode, StudentNet, TeacherNet};
use crate::numkernel::argmax;
use crate::tasks::{
    boolean_consistent, sample_example_prior, BimodalConcept, BooleanConcept, Concept, Example,
    Properties, TaskSpec,
};

/// Line lengths used as bimodal modes and test stimuli.
pub const LINE_LENGTHS: [f64; 5] = [4.0, 8.0, 12.0, 16.0, 20.0];
/// Examples shown per item.
pub const SHOWN_EXAMPLES: usize = 2;
/// Ratings above this count as "likely".
pub const RATING_THRESHOLD: u8 = 3;
const BOOLEAN_ITEMS_PER_COUNT: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyTask {
    Bimodal,
    Boolean,
}

impl StudyTask {
    pub fn spec(self) -> TaskSpec {
        match self {
            StudyTask::Bimodal => TaskSpec::bimodal(),
            StudyTask::Boolean => TaskSpec::boolean(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Random,
    Teacher,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    #[default]
    Passive,
    /// The human takes the student's seat and posts guesses that drive the
    /// teacher's next example (an extension of the passive protocol).
    Interactive,
}

/// Something shown to a participant: a line or a boolean image given by
/// its property vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Stimulus {
    Line { length: f64 },
    Image { candidate: usize, properties: Vec<f64> },
}

impl Stimulus {
    pub fn image(candidate: usize) -> Self {
        Stimulus::Image {
            candidate,
            properties: Properties::from_index(candidate).to_vector().to_vec(),
        }
    }

    fn from_example(e: &Example) -> Result<Self> {
        match e {
            Example::Point(p) if p.len() == 1 => Ok(Stimulus::Line { length: p[0] }),
            Example::Candidate(i) => Ok(Stimulus::image(*i)),
            Example::Point(p) => Err(Error::invalid(format!("{}-d point is not a line", p.len()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestStimulus {
    pub stimulus: Stimulus,
    /// High-probability line, or image consistent with the concept.
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyItem {
    pub concept: Concept,
    pub shown: Vec<Stimulus>,
    pub tests: Vec<TestStimulus>,
}

/// The ten mode pairs drawn from [`LINE_LENGTHS`], lower mode first.
pub fn bimodal_study_concepts() -> Vec<BimodalConcept> {
    let mut out = Vec::new();
    for (i, &a) in LINE_LENGTHS.iter().enumerate() {
        for &b in &LINE_LENGTHS[i + 1..] {
            out.push(BimodalConcept::new(a, b).expect("study modes are valid"));
        }
    }
    out
}

/// Five one-property and five two-property concepts, distinct.
pub fn boolean_study_concepts<R: Rng + ?Sized>(rng: &mut R) -> Result<Vec<BooleanConcept>> {
    let mut out = Vec::new();
    for count in [1, 2] {
        let pool = BooleanConcept::all_valid(Some(&[count]));
        out.extend(pool.choose_multiple(rng, BOOLEAN_ITEMS_PER_COUNT).copied());
    }
    Ok(out)
}

fn bimodal_tests(c: &BimodalConcept) -> Vec<TestStimulus> {
    LINE_LENGTHS
        .iter()
        .map(|&length| TestStimulus {
            stimulus: Stimulus::Line { length },
            positive: length == c.mu1 || length == c.mu2,
        })
        .collect()
}

/// Two consistent and two inconsistent images, none of them shown.
fn boolean_tests<R: Rng + ?Sized>(
    c: &BooleanConcept,
    shown: &[Stimulus],
    rng: &mut R,
) -> Result<Vec<TestStimulus>> {
    let shown_idx: Vec<usize> = shown
        .iter()
        .filter_map(|s| match s {
            Stimulus::Image { candidate, .. } => Some(*candidate),
            Stimulus::Line { .. } => None,
        })
        .collect();
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..crate::tasks::boolean::CANDIDATE_COUNT)
        .filter(|i| !shown_idx.contains(i))
        .partition(|&i| boolean_consistent(&Properties::from_index(i), c));
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::invalid(format!("not enough test images for concept {c:?}")));
    }
    let mut tests: Vec<TestStimulus> = pos
        .choose_multiple(rng, 2)
        .map(|&i| (i, true))
        .chain(neg.choose_multiple(rng, 2).map(|&i| (i, false)))
        .map(|(i, positive)| TestStimulus {
            stimulus: Stimulus::image(i),
            positive,
        })
        .collect();
    tests.shuffle(rng);
    Ok(tests)
}

fn shown_examples<R: Rng + ?Sized>(
    task: &TaskSpec,
    concept: &Concept,
    nets: Option<(&TeacherNet, &StudentNet)>,
    rng: &mut R,
) -> Result<Vec<Stimulus>> {
    let examples = match nets {
        None => (0..SHOWN_EXAMPLES)
            .map(|_| sample_example_prior(concept, task, rng))
            .collect::<Result<Vec<_>>>()?,
        Some((teacher, student)) => {
            rollout_teach(task, teacher, student, concept, SHOWN_EXAMPLES, RolloutMode::Eval, rng)?
                .examples()
        }
    };
    examples.iter().map(Stimulus::from_example).collect()
}

/// Items for one session. The teacher condition needs trained networks;
/// the random condition draws shown examples from `p(e | c)`.
pub fn build_study_items<R: Rng + ?Sized>(
    task: StudyTask,
    condition: Condition,
    nets: Option<(&TeacherNet, &StudentNet)>,
    rng: &mut R,
) -> Result<Vec<StudyItem>> {
    let nets = match (condition, nets) {
        (Condition::Random, _) => None,
        (Condition::Teacher, Some(n)) => Some(n),
        (Condition::Teacher, None) => {
            return Err(Error::invalid("teacher condition needs a trained checkpoint"))
        }
    };
    let spec = task.spec();
    let concepts: Vec<Concept> = match task {
        StudyTask::Bimodal => bimodal_study_concepts().into_iter().map(Concept::Bimodal).collect(),
        StudyTask::Boolean => boolean_study_concepts(rng)?
            .into_iter()
            .map(Concept::Boolean)
            .collect(),
    };
    concepts
        .into_iter()
        .map(|concept| {
            let shown = shown_examples(&spec, &concept, nets, rng)?;
            let tests = match &concept {
                Concept::Bimodal(b) => bimodal_tests(b),
                Concept::Boolean(b) => boolean_tests(b, &shown, rng)?,
                _ => unreachable!("study tasks are bimodal or boolean"),
            };
            Ok(StudyItem {
                concept,
                shown,
                tests,
            })
        })
        .collect()
}

/// One teacher step for a human student: feeds `guess` and emits the next
/// example (the most likely candidate for discrete tasks).
pub fn teacher_next_example(
    task: &TaskSpec,
    teacher: &TeacherNet,
    state: &[f64],
    concept: &Concept,
    guess: &[f64],
) -> Result<(Vec<f64>, Stimulus)> {
    let (next, emission) = teacher.step(state, &concept.to_vector(task), guess)?;
    let example = if teacher.is_discrete() {
        Example::Candidate(argmax(&emission))
    } else {
        Example::Point(emission)
    };
    Ok((next, Stimulus::from_example(&example)?))
}

/// A participant's answer to one item's test stimuli, in stimulus order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    /// Likelihood ratings on a 1 to 5 scale (bimodal).
    Ratings(Vec<u8>),
    /// In-concept judgements (boolean).
    Classifications(Vec<bool>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    /// All-or-nothing correctness (bimodal only).
    pub correct: Option<bool>,
    /// 1/0 for bimodal items, fraction of images right for boolean.
    pub accuracy: f64,
}

fn check_response(item: &StudyItem, response: &Response) -> Result<()> {
    let n = item.tests.len();
    let (len, kind_ok) = match (response, &item.tests[0].stimulus) {
        (Response::Ratings(r), Stimulus::Line { .. }) => {
            if let Some(bad) = r.iter().find(|&&x| !(1..=5).contains(&x)) {
                return Err(Error::invalid(format!("rating {bad} is outside 1..=5")));
            }
            (r.len(), true)
        }
        (Response::Classifications(c), Stimulus::Image { .. }) => (c.len(), true),
        (Response::Ratings(r), _) => (r.len(), false),
        (Response::Classifications(c), _) => (c.len(), false),
    };
    if !kind_ok {
        return Err(Error::invalid("response kind does not match the item's stimuli"));
    }
    if len != n {
        return Err(Error::Dimension {
            what: "response",
            expected: n,
            actual: len,
        });
    }
    Ok(())
}

/// Scores one item: a bimodal item is correct iff every high-probability
/// line is rated above 3 and every other line at most 3.
pub fn score_item(item: &StudyItem, response: &Response) -> Result<ItemScore> {
    check_response(item, response)?;
    Ok(match response {
        Response::Ratings(r) => {
            let correct = item
                .tests
                .iter()
                .zip(r)
                .all(|(t, &x)| (x > RATING_THRESHOLD) == t.positive);
            ItemScore {
                correct: Some(correct),
                accuracy: f64::from(u8::from(correct)),
            }
        }
        Response::Classifications(c) => {
            let right = item.tests.iter().zip(c).filter(|(t, &x)| t.positive == x).count();
            ItemScore {
                correct: None,
                accuracy: right as f64 / item.tests.len() as f64,
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Complete,
}

/// Per-item interactive teaching progress.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractiveProgress {
    pub teacher_state: Option<Vec<f64>>,
    pub examples: Vec<Stimulus>,
}

/// A state change of a session. Sessions are rebuilt by applying their
/// logged events in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "payload", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        task: StudyTask,
        condition: Condition,
        mode: SessionMode,
        items: Vec<StudyItem>,
    },
    Guess {
        item: usize,
        guess: Vec<f64>,
    },
    Example {
        item: usize,
        example: Stimulus,
        teacher_state: Vec<f64>,
    },
    Response {
        item: usize,
        response: Response,
    },
}

impl SessionEvent {
    pub fn name(&self) -> &'static str {
        match self {
            SessionEvent::Created { .. } => "created",
            SessionEvent::Guess { .. } => "guess",
            SessionEvent::Example { .. } => "example",
            SessionEvent::Response { .. } => "response",
        }
    }
}

/// One line of a session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
    pub session_id: String,
    pub event: String,
    pub payload: serde_json::Value,
}

impl LogEntry {
    pub fn new(ts: u64, session_id: &str, event: &SessionEvent) -> Result<Self> {
        let v = serde_json::to_value(event)?;
        Ok(LogEntry {
            ts,
            session_id: session_id.to_string(),
            event: event.name().to_string(),
            payload: v["payload"].clone(),
        })
    }

    pub fn to_event(&self) -> Result<SessionEvent> {
        let v = serde_json::json!({ "event": self.event, "payload": self.payload });
        Ok(serde_json::from_value(v)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub item: usize,
    pub response: Response,
    pub ts: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySession {
    pub id: String,
    pub task: StudyTask,
    pub condition: Condition,
    pub mode: SessionMode,
    pub items: Vec<StudyItem>,
    pub responses: Vec<RecordedResponse>,
    /// Latest human guess for the current item (interactive mode).
    pub guess: Option<Vec<f64>>,
    pub progress: InteractiveProgress,
    pub status: SessionStatus,
}

/// What a participant sees of the current item; the concept and the test
/// labels are withheld.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub session_id: String,
    pub task: StudyTask,
    pub mode: SessionMode,
    pub index: usize,
    pub total: usize,
    pub shown: Vec<Stimulus>,
    pub tests: Vec<Stimulus>,
    pub guess: Option<Vec<f64>>,
}

impl StudySession {
    /// Session state after its `created` event.
    pub fn create(id: &str, event: &SessionEvent) -> Result<Self> {
        let SessionEvent::Created {
            task,
            condition,
            mode,
            items,
        } = event
        else {
            return Err(Error::invalid("a session log must start with `created`"));
        };
        if items.is_empty() {
            return Err(Error::invalid("a session needs at least one item"));
        }
        Ok(StudySession {
            id: id.to_string(),
            task: *task,
            condition: *condition,
            mode: *mode,
            items: items.clone(),
            responses: Vec::new(),
            guess: None,
            progress: InteractiveProgress::default(),
            status: SessionStatus::Active,
        })
    }

    /// Index of the item awaiting a response.
    pub fn current(&self) -> Option<usize> {
        (self.status == SessionStatus::Active).then_some(self.responses.len())
    }

    pub fn current_item(&self) -> Result<(usize, &StudyItem)> {
        let i = self
            .current()
            .ok_or_else(|| Error::invalid("session is complete"))?;
        Ok((i, &self.items[i]))
    }

    pub fn view(&self) -> Result<ItemView> {
        let (index, item) = self.current_item()?;
        let shown = match self.mode {
            SessionMode::Passive => item.shown.clone(),
            SessionMode::Interactive => self.progress.examples.clone(),
        };
        Ok(ItemView {
            session_id: self.id.clone(),
            task: self.task,
            mode: self.mode,
            index,
            total: self.items.len(),
            shown,
            tests: item.tests.iter().map(|t| t.stimulus.clone()).collect(),
            guess: self.guess.clone(),
        })
    }

    fn expect_item(&self, item: usize) -> Result<()> {
        let (cur, _) = self.current_item()?;
        if item != cur {
            return Err(Error::invalid(format!("event for item {item}, current item is {cur}")));
        }
        Ok(())
    }

    fn expect_interactive(&self) -> Result<()> {
        if self.mode != SessionMode::Interactive {
            return Err(Error::invalid("guesses and next examples need an interactive session"));
        }
        Ok(())
    }

    /// Validates and applies one event; `ts` stamps responses.
    pub fn apply(&mut self, event: &SessionEvent, ts: u64) -> Result<()> {
        match event {
            SessionEvent::Created { .. } => {
                return Err(Error::invalid("session already created"));
            }
            SessionEvent::Guess { item, guess } => {
                self.expect_interactive()?;
                self.expect_item(*item)?;
                let dim = self.task.spec().concept_dim;
                if guess.len() != dim || guess.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!("guess must be {dim} finite numbers")));
                }
                self.guess = Some(guess.clone());
            }
            SessionEvent::Example {
                item,
                example,
                teacher_state,
            } => {
                self.expect_interactive()?;
                self.expect_item(*item)?;
                self.progress.examples.push(example.clone());
                self.progress.teacher_state = Some(teacher_state.clone());
            }
            SessionEvent::Response { item, response } => {
                self.expect_item(*item)?;
                score_item(&self.items[*item], response)?;
                self.responses.push(RecordedResponse {
                    item: *item,
                    response: response.clone(),
                    ts,
                });
                self.guess = None;
                self.progress = InteractiveProgress::default();
                if self.responses.len() == self.items.len() {
                    self.status = SessionStatus::Complete;
                }
            }
        }
        Ok(())
    }

    /// Next interactive example for the current item, fed with the latest
    /// guess (zeros before the first one). The session is not modified;
    /// apply the returned event to record it.
    pub fn next_example_event(&self, teacher: &TeacherNet) -> Result<SessionEvent> {
        self.expect_interactive()?;
        let (index, item) = self.current_item()?;
        let task = self.task.spec();
        let state = self
            .progress
            .teacher_state
            .clone()
            .unwrap_or_else(|| teacher.initial_state());
        let guess = self
            .guess
            .clone()
            .unwrap_or_else(|| vec![0.0; task.concept_dim]);
        let (teacher_state, example) =
            teacher_next_example(&task, teacher, &state, &item.concept, &guess)?;
        Ok(SessionEvent::Example {
            item: index,
            example,
            teacher_state,
        })
    }

    /// Rebuilds a session from its log.
    pub fn replay(entries: &[LogEntry]) -> Result<Self> {
        let (first, rest) = entries
            .split_first()
            .ok_or_else(|| Error::invalid("empty session log"))?;
        let mut s = StudySession::create(&first.session_id, &first.to_event()?)?;
        for e in rest {
            if e.session_id != s.id {
                return Err(Error::invalid(format!(
                    "log entry for session {} in log of {}",
                    e.session_id, s.id
                )));
            }
            s.apply(&e.to_event()?, e.ts)?;
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub concept: Concept,
    pub shown: Vec<Stimulus>,
    pub score: ItemScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub session_id: String,
    pub task: StudyTask,
    pub condition: Condition,
    pub mode: SessionMode,
    /// Interactive sessions go beyond the passive viewing protocol.
    pub extension: bool,
    pub items: Vec<ItemResult>,
    /// Mean item accuracy.
    pub accuracy: f64,
}

/// Scores a complete session.
pub fn score_session(session: &StudySession) -> Result<SessionScore> {
    if session.status != SessionStatus::Complete || session.responses.len() != session.items.len() {
        return Err(Error::invalid(format!(
            "session {} is incomplete ({} of {} items answered)",
            session.id,
            session.responses.len(),
            session.items.len()
        )));
    }
    let items = session
        .responses
        .iter()
        .map(|r| {
            let item = session
                .items
                .get(r.item)
                .ok_or_else(|| Error::invalid(format!("response for missing item {}", r.item)))?;
            Ok(ItemResult {
                concept: item.concept,
                shown: item.shown.clone(),
                score: score_item(item, &r.response)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let accuracy = items.iter().map(|i| i.score.accuracy).sum::<f64>() / items.len() as f64;
    Ok(SessionScore {
        session_id: session.id.clone(),
        task: session.task,
        condition: session.condition,
        mode: session.mode,
        extension: session.mode == SessionMode::Interactive,
        items,
        accuracy,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub task: StudyTask,
    pub condition: Condition,
    pub mode: SessionMode,
    pub sessions: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Mean and standard deviation of session accuracy per task, condition
/// and mode.
pub fn aggregate_scores(scores: &[SessionScore]) -> Vec<ConditionSummary> {
    let mut groups: BTreeMap<(String, Condition, String), Vec<&SessionScore>> = BTreeMap::new();
    for s in scores {
        let key = (format!("{:?}", s.task), s.condition, format!("{:?}", s.mode));
        groups.entry(key).or_default().push(s);
    }
    groups
        .into_values()
        .map(|g| {
            let n = g.len() as f64;
            let mean = g.iter().map(|s| s.accuracy).sum::<f64>() / n;
            let var = g.iter().map(|s| (s.accuracy - mean).powi(2)).sum::<f64>() / n;
            ConditionSummary {
                task: g[0].task,
                condition: g[0].condition,
                mode: g[0].mode,
                sessions: g.len(),
                mean_accuracy: mean,
                std_accuracy: var.sqrt(),
            }
        })
        .collect()
}

/// Parses a JSONL session log.
pub fn parse_log(text: &str) -> Result<Vec<LogEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
