//! Built-in lemma and synonym tables for the closed synthetic vocabulary.
//!
//! Real corpora can plug an external lemmatizer behind the same function
//! contract; these tables only need to cover the trigger lexemes the
//! synthetic generator emits plus a few common news-domain inflection
//! families.

/// Inflection families: every surface form in a group maps to the first
/// entry (the lemma head).
pub const TRIGGER_GROUPS: &[&[&str]] = &[
    &["kill", "kills", "killed", "killing"],
    &["attack", "attacks", "attacked", "attacking"],
    &["crash", "crashes", "crashed", "crashing"],
    &["fire", "fires", "fired", "firing"],
    &["strike", "strikes", "struck", "striking"],
    &["announce", "announces", "announced", "announcing"],
    &["acquire", "acquires", "acquired", "acquiring"],
    &["buy", "buys", "bought", "buying"],
    &["rock", "rocks", "rocked", "rocking"],
    &["explode", "explodes", "exploded", "exploding"],
    &["win", "wins", "won", "winning"],
    &["resign", "resigns", "resigned", "resigning"],
    &["arrest", "arrests", "arrested", "arresting"],
    &["flood", "floods", "flooded", "flooding"],
    &["sue", "sues", "sued", "suing"],
    &["merge", "merges", "merged", "merging"],
];

/// Cross-lemma synonym sets (by lemma head), for the synonym-set filter mode.
pub const SYNONYM_SETS: &[&[&str]] = &[
    &["kill", "attack"],
    &["acquire", "buy", "merge"],
    &["strike", "rock", "explode"],
    &["fire", "resign"],
];

/// Lowercase and map through the inflection table; unknown tokens lemmatize
/// to their lowercase form.
pub fn lemma(token: &str) -> String {
    let lower = token.to_lowercase();
    for group in TRIGGER_GROUPS {
        if group.contains(&lower.as_str()) {
            return group[0].to_string();
        }
    }
    lower
}

/// Whether two lemma heads share a synonym set (equal lemmas count).
pub fn synonyms(a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    SYNONYM_SETS
        .iter()
        .any(|set| set.contains(&a) && set.contains(&b))
}
