//! Single-pass `{slot}` substitution for the bundled text assets.

use crate::error::{Error, Result};

pub(crate) const COLUMN_PROMPT: &str = include_str!("../assets/column_prompt.txt");
pub(crate) const TABLE_PROMPT: &str = include_str!("../assets/table_prompt.txt");
pub(crate) const FINETUNE_INPUT: &str = include_str!("../assets/finetune_input.txt");
pub(crate) const FINETUNE_TARGET: &str = include_str!("../assets/finetune_target.txt");

/// Replaces every `{name}` slot in `template`. Slot values are inserted
/// verbatim and never rescanned, so braces inside values are safe.
pub(crate) fn fill(template: &str, slots: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Config("unterminated slot in template".into()))?;
        let name = &after[..close];
        let value = slots
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Config(format!("template slot `{name}` has no value")))?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_are_not_rescanned() {
        let s = fill("a {x} b {y}", &[("x", "{y}"), ("y", "2")]).unwrap();
        assert_eq!(s, "a {y} b 2");
    }

    #[test]
    fn missing_slot_is_an_error() {
        assert!(fill("{nope}", &[]).is_err());
    }

    #[test]
    fn assets_have_expected_slots() {
        for (t, slots) in [
            (COLUMN_PROMPT, &["table_name", "column_name", "column_type", "values"][..]),
            (TABLE_PROMPT, &["table_name", "column_strs"][..]),
            (FINETUNE_INPUT, &["sql_base", "schema", "questions"][..]),
            (FINETUNE_TARGET, &["sql", "terminator"][..]),
        ] {
            let pairs: Vec<(&str, &str)> = slots.iter().map(|s| (*s, "")).collect();
            fill(t, &pairs).unwrap();
        }
    }
}
