//! Prompt templates. Placeholders are written `{{name}}`.

use std::collections::BTreeMap;

pub const NL_GENERATION: &str = include_str!("../../data/prompts/nl_generation.txt");
pub const NL_VERIFICATION: &str = include_str!("../../data/prompts/nl_verification.txt");
pub const SCHEMA_STANDARDIZATION: &str =
    include_str!("../../data/prompts/schema_standardization.txt");
pub const PAIR_REFINEMENT: &str = include_str!("../../data/prompts/pair_refinement.txt");
pub const REASONING_STEP: &str = include_str!("../../data/prompts/reasoning_step.txt");

/// Substitute `{{name}}` placeholders. Unknown placeholders are left as they are.
pub fn render(template: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = after[..end].trim();
                match vars.get(key) {
                    Some(v) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(&after[..end]);
                        out.push_str("}}");
                    }
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_are_filled() {
        let vars = BTreeMap::from([("a", "1".to_string()), ("b", "two".to_string())]);
        assert_eq!(render("x {{a}} y {{ b }} {{c}}", &vars), "x 1 y two {{c}}");
        assert_eq!(render("open {{a", &vars), "open {{a");
    }

    #[test]
    fn shipped_templates_name_their_inputs() {
        for (t, keys) in [
            (NL_GENERATION, &["schema", "samples", "tree", "style", "exemplars"][..]),
            (NL_VERIFICATION, &["tree", "nl", "references"][..]),
            (SCHEMA_STANDARDIZATION, &["table", "columns"][..]),
            (PAIR_REFINEMENT, &["table", "pairs", "samples"][..]),
            (REASONING_STEP, &["step", "step_name", "nl", "decisions"][..]),
        ] {
            for k in keys {
                assert!(t.contains(&format!("{{{{{k}}}}}")), "missing {k}");
            }
        }
    }
}
