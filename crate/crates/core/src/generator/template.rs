//! Deterministic rule-table backend.

use crate::text::{contains_phrase, normalize};

/// First matching distress term wins. Every reply repeats its trigger term.
const RULES: &[(&str, &str)] = &[
    ("fire", "The house is on fire. Please send help immediately."),
    ("smoke", "There is smoke in the house. Please send the fire brigade."),
    ("accident", "I have met an accident. Please send an ambulance."),
    ("crash", "There has been a crash. Please send an ambulance."),
    ("blood", "I am hurt and there is blood. Please send an ambulance."),
    ("intruder", "There is an intruder in my house. Please call the police."),
    ("collapsed", "Someone has collapsed. Please send an ambulance immediately."),
    ("faint", "I feel faint and cannot speak. Please send help."),
];

const FALLBACK: &str = "Emergency. Please call back immediately.";

/// Location value from a composed seed, if the seed carries one.
fn seed_location(seed: &str) -> Option<&str> {
    let tail = match seed.rfind("; location: ") {
        Some(i) => &seed[i + "; location: ".len()..],
        None => seed.strip_prefix("location: ")?,
    };
    let tail = tail.trim();
    (!tail.is_empty()).then_some(tail)
}

pub fn template_text(seed: &str) -> String {
    let norm = normalize(seed);
    if let Some((_, reply)) = RULES.iter().find(|(term, _)| contains_phrase(&norm, term)) {
        return (*reply).to_string();
    }
    match seed_location(seed) {
        Some(loc) => {
            let loc = loc.trim_end_matches(['.', '!', '?']);
            format!("{FALLBACK} Location: {loc}.")
        }
        None => FALLBACK.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rules_contain_their_trigger() {
        for (term, reply) in RULES {
            assert!(reply.to_lowercase().contains(term), "{term}");
        }
    }

    #[test]
    fn fallback_names_location() {
        assert_eq!(
            template_text("keywords: help; location: Highway"),
            "Emergency. Please call back immediately. Location: Highway."
        );
        assert_eq!(template_text("location: Bank"), "Emergency. Please call back immediately. Location: Bank.");
        assert_eq!(template_text("keywords: help"), FALLBACK);
    }

    #[test]
    fn first_rule_wins() {
        assert_eq!(template_text("smoke and fire"), RULES[0].1);
        assert_eq!(template_text("FIRE!"), RULES[0].1);
        assert_eq!(template_text("firewall down"), FALLBACK);
    }

    proptest! {
        #[test]
        fn output_is_sentence_and_grounded(seed in "[a-zA-Z:;, ]{1,60}") {
            let out = template_text(&seed);
            prop_assert!(out.ends_with(['.', '!', '?']));
            let lower_seed = seed.to_lowercase();
            let grounded = out.contains("Emergency")
                || out.split_whitespace().any(|w| {
                    let w = w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
                    !w.is_empty() && lower_seed.contains(&w)
                });
            prop_assert!(grounded);
        }

        #[test]
        fn deterministic(seed in "\\PC{1,40}") {
            prop_assert_eq!(template_text(&seed), template_text(&seed));
        }
    }
}
