use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ConceptReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyOption {
    pub token: String,
    /// Hidden from respondents.
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyQuestion {
    pub factor: usize,
    pub image_ids: Vec<usize>,
    pub options: Vec<SurveyOption>,
    /// Position of the injected distractor (ψ = 0) among `options`.
    pub distractor: usize,
}

/// Builds `num_questions` questions, cycling over the report's factors in a
/// shuffled order. Each shows the factor's exemplar images, its top
/// `options_per_question` tokens, and one token borrowed from another
/// factor as a distractor with ψ = 0, inserted at a random position.
pub fn survey_generate(
    report: &ConceptReport,
    num_questions: usize,
    options_per_question: usize,
    images_per_question: usize,
    rng: &mut impl Rng,
) -> Result<Vec<SurveyQuestion>> {
    if report.factors.len() < 2 {
        return Err(Error::contract("a survey needs at least two factors"));
    }
    if options_per_question == 0 {
        return Err(Error::contract("questions need at least one concept option"));
    }
    let mut order: Vec<usize> = (0..report.factors.len()).collect();
    order.shuffle(rng);
    let mut out = Vec::with_capacity(num_questions);
    for qi in 0..num_questions {
        let f = &report.factors[order[qi % order.len()]];
        let mut options: Vec<SurveyOption> = f
            .tokens
            .iter()
            .take(options_per_question)
            .map(|t| SurveyOption { token: t.token.clone(), psi: t.psi })
            .collect();
        let candidates: Vec<&str> = report
            .factors
            .iter()
            .filter(|o| o.factor != f.factor)
            .flat_map(|o| o.tokens.iter().take(options_per_question))
            .map(|t| t.token.as_str())
            .filter(|t| !options.iter().any(|o| o.token == *t))
            .collect();
        let Some(&distractor) = candidates.choose(rng) else {
            return Err(Error::contract(format!("no distractor token available for factor {}", f.factor)));
        };
        let pos = rng.gen_range(0..=options.len());
        options.insert(pos, SurveyOption { token: distractor.to_string(), psi: 0.0 });
        out.push(SurveyQuestion {
            factor: f.factor,
            image_ids: f.exemplars.iter().take(images_per_question).copied().collect(),
            options,
            distractor: pos,
        });
    }
    Ok(out)
}

/// XScore: mean over questions of `1 − ψ` of the option judged irrelevant.
pub fn survey_score(answers: &[usize], questions: &[SurveyQuestion]) -> Result<f64> {
    if answers.len() != questions.len() || questions.is_empty() {
        return Err(Error::contract(format!("{} answers for {} questions", answers.len(), questions.len())));
    }
    let mut total = 0.0;
    for (i, (&a, q)) in answers.iter().zip(questions).enumerate() {
        let opt = q.options.get(a).ok_or_else(|| {
            Error::contract(format!("answer {a} to question {i} is out of range (0..{})", q.options.len()))
        })?;
        total += 1.0 - opt.psi;
    }
    Ok(total / questions.len() as f64)
}
