/// Instructions for an LLM-backed judge. No client ships with this crate; integrators send
/// this text together with the question, the candidate answer and the reference answer.
pub const ACCURACY_JUDGE_PROMPT: &str = "\
Given an input question and two answers: a candidate answer and a reference answer, determine if the candidate answer is correct or incorrect.

Rules:
- The candidate answer is correct if it is semantically equivalent to the reference answer, even if they are phrased differently.
- The candidate answer should be marked as incorrect if it:
    - Contains factual errors compared to the reference answer
    - Only partially answers the question
    - Includes hedging language (e.g., \"probably\", \"likely\", \"I think\", etc.)
    - Answers a different question than what was asked
- Give a reason for your prediction.

Output Format:
- Answer - correct or incorrect
- Reason -";

/// Decides whether a prediction matches its reference. Must be deterministic.
pub trait Judge: Send + Sync {
    fn judge(&self, prediction: &str, reference: &str) -> bool;
}

/// Exact match after [`normalize_answer`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatchJudge;

impl Judge for ExactMatchJudge {
    fn judge(&self, prediction: &str, reference: &str) -> bool {
        normalize_answer(prediction) == normalize_answer(reference)
    }
}

/// Lowercases, trims, collapses internal whitespace and strips trailing punctuation.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("  The   Cat.  "), "the cat");
        assert_eq!(normalize_answer("Yes!?"), "yes");
        assert_eq!(normalize_answer("a\tb\nc"), "a b c");
        assert_eq!(normalize_answer("..."), "");
    }

    #[test]
    fn exact_match() {
        let j = ExactMatchJudge;
        assert!(j.judge("Two dogs.", "two  dogs"));
        assert!(!j.judge("two cats", "two dogs"));
        assert!(!j.judge("probably two dogs", "two dogs"));
    }

    #[test]
    fn prompt_mentions_both_answers() {
        assert!(ACCURACY_JUDGE_PROMPT.starts_with("Given an input question"));
        assert!(ACCURACY_JUDGE_PROMPT.contains("Answer - correct or incorrect"));
    }
}
