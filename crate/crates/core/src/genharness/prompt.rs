//! The two generation prompts, rendered byte-stably.

/// Experiment 1 prompt prefix; the starting value and `", "` follow it.
pub const HEIGHT_PROMPT_PREFIX: &str = "You are simulating guesses of adult heights (in centimeters) for individuals randomly drawn from the UK population. In each round, output a single integer as your guess for the random person\u{2019}s height. Continue producing guesses one after another, separated by commas, with no explanations or extra text: ";

/// Experiment 2 prompt prefix; the comma-separated example samples follow it.
pub const SAMPLING_PROMPT_PREFIX: &str = "You are sampling integers from a distribution. You will see some samples that has already been drawn from this distribution and your task is to continue sampling integers from this distribution, separated by commas, with no explanations or extra text. Please continue the sampling: ";

pub fn height_prompt(start: i64) -> String {
    format!("{HEIGHT_PROMPT_PREFIX}{start}, ")
}

pub fn sampling_prompt(samples: &[i64]) -> String {
    let mut out = String::from(SAMPLING_PROMPT_PREFIX);
    out.push_str(&join_values(samples));
    out
}

pub fn join_values(values: &[i64]) -> String {
    values.iter().map(i64::to_string).collect::<Vec<_>>().join(", ")
}
