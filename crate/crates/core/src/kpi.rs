//! Three-phase Likert surveys scored into Comfort / Safety / Awareness KPIs.
//!
//! Means are kept as exact `sum / count` pairs so target comparisons do not
//! depend on floating-point rounding.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum KpiError {
    #[error("respondent {respondent} ({phase}): expected {expected} answers, got {got}")]
    WrongAnswerCount { respondent: String, phase: SurveyPhase, expected: usize, got: usize },
    #[error("no responses for phase")]
    EmptyPhase,
    #[error("respondent {0} belongs to phase {1}, not {2}")]
    MixedPhases(String, SurveyPhase, SurveyPhase),
    #[error("respondent {respondent}, question {question}: score {score} outside 1..=5")]
    ScoreOutOfRange { respondent: String, question: String, score: u8 },
    #[error("baseline mean for {0} is zero")]
    ZeroBaseline(Factor),
    #[error("factor {0} missing from a phase")]
    MissingFactor(Factor),
    #[error("question {question} is mapped to {expected} by the survey definition, answered as {got}")]
    FactorMismatch { question: String, expected: Factor, got: Factor },
    #[error("question {0} not in the survey definition")]
    UnknownQuestion(String),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SurveyPhase {
    Baseline,
    Intermediate,
    PostPilot,
}

impl SurveyPhase {
    pub fn expected_answers(self) -> usize {
        match self {
            SurveyPhase::Baseline => 16,
            SurveyPhase::Intermediate | SurveyPhase::PostPilot => 35,
        }
    }
}

impl fmt::Display for SurveyPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Factor {
    Comfort,
    Safety,
    Awareness,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Comfort, Factor::Safety, Factor::Awareness];

    /// Target increase in percent.
    pub fn target_percent(self) -> u32 {
        match self {
            Factor::Comfort => 10,
            Factor::Safety => 5,
            Factor::Awareness => 100,
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub question_id: String,
    pub factor: Factor,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub respondent_id: String,
    pub phase: SurveyPhase,
    pub answers: Vec<Answer>,
}

impl SurveyResponse {
    pub fn validate(&self) -> Result<(), KpiError> {
        let expected = self.phase.expected_answers();
        if self.answers.len() != expected {
            return Err(KpiError::WrongAnswerCount {
                respondent: self.respondent_id.clone(),
                phase: self.phase,
                expected,
                got: self.answers.len(),
            });
        }
        if let Some(a) = self.answers.iter().find(|a| !(LIKERT_MIN..=LIKERT_MAX).contains(&a.score)) {
            return Err(KpiError::ScoreOutOfRange {
                respondent: self.respondent_id.clone(),
                question: a.question_id.clone(),
                score: a.score,
            });
        }
        Ok(())
    }
}

/// Exact mean as `sum / count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Mean {
    pub sum: u64,
    pub count: u64,
}

impl Mean {
    pub fn value(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseScores {
    pub phase: SurveyPhase,
    pub respondents: usize,
    pub means: BTreeMap<Factor, Mean>,
}

impl PhaseScores {
    pub fn mean(&self, factor: Factor) -> Option<f64> {
        self.means.get(&factor).map(Mean::value)
    }
}

/// Per-factor mean over every answer of every respondent in one phase.
pub fn score_phase(responses: &[SurveyResponse]) -> Result<PhaseScores, KpiError> {
    let first = responses.first().ok_or(KpiError::EmptyPhase)?;
    let mut means: BTreeMap<Factor, Mean> = BTreeMap::new();
    for r in responses {
        if r.phase != first.phase {
            return Err(KpiError::MixedPhases(r.respondent_id.clone(), r.phase, first.phase));
        }
        r.validate()?;
        for a in &r.answers {
            let m = means.entry(a.factor).or_default();
            m.sum += u64::from(a.score);
            m.count += 1;
        }
    }
    Ok(PhaseScores { phase: first.phase, respondents: responses.len(), means })
}

pub fn percent_change(baseline: f64, comparison: f64) -> f64 {
    100.0 * (comparison - baseline) / baseline
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorKpi {
    pub factor: Factor,
    pub baseline_mean: f64,
    pub comparison_mean: f64,
    pub percent_change: f64,
    pub target_percent: u32,
    pub met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub comparison_phase: SurveyPhase,
    pub factors: Vec<FactorKpi>,
}

impl KpiReport {
    pub fn factor(&self, f: Factor) -> Option<&FactorKpi> {
        self.factors.iter().find(|k| k.factor == f)
    }
}

/// `met` is decided on the exact rationals: `100 (c - b) >= target * b`.
pub fn kpi_report(baseline: &PhaseScores, comparison: &PhaseScores) -> Result<KpiReport, KpiError> {
    let mut factors = Vec::with_capacity(3);
    for f in Factor::ALL {
        let b = *baseline.means.get(&f).ok_or(KpiError::MissingFactor(f))?;
        let c = *comparison.means.get(&f).ok_or(KpiError::MissingFactor(f))?;
        if b.sum == 0 || b.count == 0 || c.count == 0 {
            return Err(KpiError::ZeroBaseline(f));
        }
        // c.sum/c.count vs b.sum/b.count, cross-multiplied
        let cb = i128::from(c.sum) * i128::from(b.count);
        let bc = i128::from(b.sum) * i128::from(c.count);
        let target = f.target_percent();
        let met = 100 * (cb - bc) >= i128::from(target) * bc;
        factors.push(FactorKpi {
            factor: f,
            baseline_mean: b.value(),
            comparison_mean: c.value(),
            percent_change: 100.0 * (cb - bc) as f64 / bc as f64,
            target_percent: target,
            met,
        });
    }
    Ok(KpiReport { comparison_phase: comparison.phase, factors })
}

/// Baseline against every later phase that has responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiEvaluation {
    pub baseline: PhaseScores,
    pub reports: Vec<KpiReport>,
}

pub fn evaluate(responses: &[SurveyResponse]) -> Result<KpiEvaluation, KpiError> {
    let of = |p: SurveyPhase| responses.iter().filter(|r| r.phase == p).cloned().collect::<Vec<_>>();
    let baseline = score_phase(&of(SurveyPhase::Baseline))?;
    let mut reports = Vec::new();
    for phase in [SurveyPhase::Intermediate, SurveyPhase::PostPilot] {
        let rs = of(phase);
        if !rs.is_empty() {
            reports.push(kpi_report(&baseline, &score_phase(&rs)?)?);
        }
    }
    Ok(KpiEvaluation { baseline, reports })
}

pub fn render_table(eval: &KpiEvaluation) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<13} {:<10} {:>9} {:>9} {:>9} {:>7} {:>4}",
        "phase", "factor", "baseline", "compare", "change%", "target", "met"
    );
    for r in &eval.reports {
        for k in &r.factors {
            let _ = writeln!(
                out,
                "{:<13} {:<10} {:>9.3} {:>9.3} {:>9.2} {:>7} {:>4}",
                r.comparison_phase.to_string(),
                k.factor.to_string(),
                k.baseline_mean,
                k.comparison_mean,
                k.percent_change,
                k.target_percent,
                if k.met { "yes" } else { "no" }
            );
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    respondent_id: String,
    phase: SurveyPhase,
    question_id: String,
    factor: Factor,
    score: u8,
}

/// Reads `respondent_id,phase,question_id,factor,score` rows into responses,
/// grouped by respondent and phase in first-seen order.
pub fn read_responses_csv<R: Read>(reader: R) -> Result<Vec<SurveyResponse>, KpiError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut order: Vec<(String, SurveyPhase)> = Vec::new();
    let mut grouped: BTreeMap<(String, SurveyPhase), Vec<Answer>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| KpiError::Csv { line: i + 2, message: e.to_string() })?;
        let key = (row.respondent_id, row.phase);
        let answers = grouped.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        answers.push(Answer { question_id: row.question_id, factor: row.factor, score: row.score });
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let answers = grouped.remove(&key).unwrap_or_default();
            SurveyResponse { respondent_id: key.0, phase: key.1, answers }
        })
        .collect())
}

pub fn read_responses_csv_file(path: impl AsRef<Path>) -> Result<Vec<SurveyResponse>, KpiError> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| KpiError::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_responses_csv(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionDef {
    pub question_id: String,
    pub factor: Factor,
    #[serde(default)]
    pub text: String,
}

/// Question-to-factor mapping per phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDefinition {
    #[serde(default)]
    pub description: String,
    pub phases: BTreeMap<SurveyPhase, Vec<QuestionDef>>,
}

impl SurveyDefinition {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KpiError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| KpiError::Io(format!("{}: {e}", path.as_ref().display())))?;
        serde_json::from_str(&text).map_err(|e| KpiError::Io(e.to_string()))
    }

    /// Checks a response against the mapping for its phase.
    pub fn check(&self, response: &SurveyResponse) -> Result<(), KpiError> {
        let questions = self.phases.get(&response.phase).map(Vec::as_slice).unwrap_or(&[]);
        for a in &response.answers {
            let q = questions
                .iter()
                .find(|q| q.question_id == a.question_id)
                .ok_or_else(|| KpiError::UnknownQuestion(a.question_id.clone()))?;
            if q.factor != a.factor {
                return Err(KpiError::FactorMismatch { question: a.question_id.clone(), expected: q.factor, got: a.factor });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// One response whose answers cycle through the factors, scored by `score(factor, k)`.
    pub(crate) fn response(id: &str, phase: SurveyPhase, score: impl Fn(Factor, usize) -> u8) -> SurveyResponse {
        let answers = (0..phase.expected_answers())
            .map(|k| {
                let factor = Factor::ALL[k % 3];
                Answer { question_id: format!("q{k}"), factor, score: score(factor, k / 3) }
            })
            .collect();
        SurveyResponse { respondent_id: id.into(), phase, answers }
    }

    #[test]
    fn constant_scores() {
        let s = score_phase(&[response("r1", SurveyPhase::Baseline, |_, _| 3)]).unwrap();
        for f in Factor::ALL {
            assert_eq!(s.mean(f), Some(3.0));
        }
    }

    #[test]
    fn comfort_two_and_four() {
        let rs = [
            response("r1", SurveyPhase::Baseline, |f, _| if f == Factor::Comfort { 2 } else { 3 }),
            response("r2", SurveyPhase::Baseline, |f, _| if f == Factor::Comfort { 4 } else { 3 }),
        ];
        assert_eq!(score_phase(&rs).unwrap().mean(Factor::Comfort), Some(3.0));
    }

    #[test]
    fn wrong_count() {
        let mut r = response("r1", SurveyPhase::PostPilot, |_, _| 3);
        r.phase = SurveyPhase::Baseline;
        let err = score_phase(&[r]).unwrap_err();
        assert!(err.to_string().contains("expected 16"), "{err}");
        assert_eq!(score_phase(&[]), Err(KpiError::EmptyPhase));
        let r = response("r1", SurveyPhase::Baseline, |_, _| 6);
        assert!(matches!(score_phase(&[r]), Err(KpiError::ScoreOutOfRange { .. })));
        let rs = [response("a", SurveyPhase::Baseline, |_, _| 3), response("b", SurveyPhase::PostPilot, |_, _| 3)];
        assert!(matches!(score_phase(&rs), Err(KpiError::MixedPhases(..))));
    }

    fn scores(phase: SurveyPhase, c: (u64, u64), s: (u64, u64), a: (u64, u64)) -> PhaseScores {
        let means = [(Factor::Comfort, c), (Factor::Safety, s), (Factor::Awareness, a)]
            .into_iter()
            .map(|(f, (sum, count))| (f, Mean { sum, count }))
            .collect();
        PhaseScores { phase, respondents: 1, means }
    }

    #[test]
    fn table_examples() {
        let b = scores(SurveyPhase::Baseline, (30, 10), (30, 10), (20, 10));
        let c = scores(SurveyPhase::PostPilot, (33, 10), (30, 10), (40, 10));
        let r = kpi_report(&b, &c).unwrap();
        let comfort = r.factor(Factor::Comfort).unwrap();
        assert!((comfort.percent_change - 10.0).abs() < 1e-12 && comfort.met);
        assert!(!r.factor(Factor::Safety).unwrap().met);
        let aw = r.factor(Factor::Awareness).unwrap();
        assert_eq!((aw.percent_change, aw.met), (100.0, true));
        let same = kpi_report(&b, &b).unwrap();
        assert!(same.factors.iter().all(|k| k.percent_change == 0.0 && !k.met));
        let zero = scores(SurveyPhase::Baseline, (0, 10), (30, 10), (20, 10));
        assert_eq!(kpi_report(&zero, &c), Err(KpiError::ZeroBaseline(Factor::Comfort)));
    }

    #[test]
    fn csv_round_trip() {
        let text = "respondent_id,phase,question_id,factor,score\n\
                    r1,Baseline,q1,Comfort,4\nr1,Baseline,q2,Safety,2\nr2,PostPilot,q1,Awareness,5\n";
        let rs = read_responses_csv(text.as_bytes()).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[0].answers.len(), 2);
        assert_eq!(rs[1].phase, SurveyPhase::PostPilot);
        let bad = "respondent_id,phase,question_id,factor,score\nr1,Baseline,q1,Mood,4\n";
        assert!(matches!(read_responses_csv(bad.as_bytes()), Err(KpiError::Csv { line: 2, .. })));
    }

    #[test]
    fn evaluate_both_phases() {
        let rs = vec![
            response("r1", SurveyPhase::Baseline, |_, _| 2),
            response("r1", SurveyPhase::Intermediate, |_, _| 2),
            response("r1", SurveyPhase::PostPilot, |_, _| 4),
        ];
        let ev = evaluate(&rs).unwrap();
        assert_eq!(ev.reports.len(), 2);
        assert!(ev.reports[0].factors.iter().all(|k| !k.met));
        assert!(ev.reports[1].factors.iter().all(|k| k.met));
        let table = render_table(&ev);
        assert_eq!(table.lines().count(), 7);
    }

    #[test]
    fn definition_check() {
        let r = response("r1", SurveyPhase::Baseline, |_, _| 3);
        let qs = r.answers.iter().map(|a| QuestionDef { question_id: a.question_id.clone(), factor: a.factor, text: String::new() }).collect();
        let mut def = SurveyDefinition { description: String::new(), phases: BTreeMap::from([(SurveyPhase::Baseline, qs)]) };
        assert!(def.check(&r).is_ok());
        def.phases.get_mut(&SurveyPhase::Baseline).unwrap()[0].factor = Factor::Awareness;
        assert!(matches!(def.check(&r), Err(KpiError::FactorMismatch { .. })));
    }

    proptest! {
        #[test]
        fn scale_equivariant(bs in 1u64..500, bc in 1u64..100, cs in 0u64..500, cc in 1u64..100, k in 1u64..20) {
            let b = scores(SurveyPhase::Baseline, (bs, bc), (bs, bc), (bs, bc));
            let c = scores(SurveyPhase::PostPilot, (cs, cc), (cs, cc), (cs, cc));
            let bk = scores(SurveyPhase::Baseline, (bs * k, bc), (bs * k, bc), (bs * k, bc));
            let ck = scores(SurveyPhase::PostPilot, (cs * k, cc), (cs * k, cc), (cs * k, cc));
            let r1 = kpi_report(&b, &c).unwrap();
            let r2 = kpi_report(&bk, &ck).unwrap();
            for (x, y) in r1.factors.iter().zip(&r2.factors) {
                prop_assert!((x.percent_change - y.percent_change).abs() < 1e-9);
                prop_assert_eq!(x.met, y.met);
            }
        }

        #[test]
        fn met_monotone(bs in 1u64..500, bc in 1u64..100, cs in 0u64..500, cc in 1u64..100, extra in 0u64..100) {
            let b = scores(SurveyPhase::Baseline, (bs, bc), (bs, bc), (bs, bc));
            let lo = kpi_report(&b, &scores(SurveyPhase::PostPilot, (cs, cc), (cs, cc), (cs, cc))).unwrap();
            let hi = kpi_report(&b, &scores(SurveyPhase::PostPilot, (cs + extra, cc), (cs + extra, cc), (cs + extra, cc))).unwrap();
            for (x, y) in lo.factors.iter().zip(&hi.factors) {
                prop_assert!(!x.met || y.met);
                let t = x.target_percent as f64;
                if x.percent_change > t + 1e-9 { prop_assert!(x.met); }
                if x.percent_change < t - 1e-9 { prop_assert!(!x.met); }
            }
        }
    }
}
