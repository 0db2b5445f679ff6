//! Gender word lists, caption classification, per-image gender labels, and
//! caption neutralization.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gender evidence in a single caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaptionGender {
    Female,
    Male,
    Both,
    None,
}

/// Per-image gender label derived from all of the image's captions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenderLabel {
    Women,
    Men,
    Discard,
}

/// Word lists used for classification plus the token replacement map used
/// for neutralization. Words are stored lowercase; the replacement map
/// covers every female and male word (it may cover more, e.g. plurals that
/// are too rare to classify on).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenderLexicon {
    female_words: BTreeSet<String>,
    male_words: BTreeSet<String>,
    neutral_words: BTreeSet<String>,
    replacement_map: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct LexiconFile {
    female: Vec<String>,
    male: Vec<String>,
    #[serde(default)]
    neutral: Vec<String>,
    replace: BTreeMap<String, String>,
}

impl GenderLexicon {
    pub fn new(
        female: impl IntoIterator<Item = String>,
        male: impl IntoIterator<Item = String>,
        neutral: impl IntoIterator<Item = String>,
        replace: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let lower_set = |it: &mut dyn Iterator<Item = String>| -> BTreeSet<String> {
            it.map(|w| w.to_lowercase()).collect()
        };
        let female_words = lower_set(&mut female.into_iter());
        let male_words = lower_set(&mut male.into_iter());
        let neutral_words = lower_set(&mut neutral.into_iter());
        let replacement_map: BTreeMap<String, String> = replace
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
            .collect();

        for (a, b, names) in [
            (&female_words, &male_words, "female/male"),
            (&female_words, &neutral_words, "female/neutral"),
            (&male_words, &neutral_words, "male/neutral"),
        ] {
            if let Some(w) = a.intersection(b).next() {
                return Err(Error::InvalidLexicon(format!(
                    "word {w:?} appears in both {names} sets"
                )));
            }
        }
        for w in female_words.iter().chain(&male_words) {
            if !replacement_map.contains_key(w) {
                return Err(Error::InvalidLexicon(format!(
                    "gendered word {w:?} has no replacement entry"
                )));
            }
        }
        // Replacements must land outside the gendered sets, otherwise
        // neutralization would not be a fixed point of classification.
        for (k, v) in &replacement_map {
            if female_words.contains(v) || male_words.contains(v) {
                return Err(Error::InvalidLexicon(format!(
                    "replacement {k:?} -> {v:?} targets a gendered word"
                )));
            }
        }
        Ok(Self {
            female_words,
            male_words,
            neutral_words,
            replacement_map,
        })
    }

    /// Load an override lexicon from JSON:
    /// `{"female": [...], "male": [...], "neutral": [...], "replace": {...}}`.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let raw: LexiconFile = crate::coco::read_json(path)?;
        Self::new(raw.female, raw.male, raw.neutral, raw.replace)
    }

    pub fn female_words(&self) -> &BTreeSet<String> {
        &self.female_words
    }

    pub fn male_words(&self) -> &BTreeSet<String> {
        &self.male_words
    }

    pub fn neutral_words(&self) -> &BTreeSet<String> {
        &self.neutral_words
    }

    pub fn replacement_map(&self) -> &BTreeMap<String, String> {
        &self.replacement_map
    }
}

impl Default for GenderLexicon {
    fn default() -> Self {
        let female = ["woman", "women", "girl", "sister", "daughter", "wife", "girlfriend"];
        let male = ["man", "men", "boy", "brother", "son", "husband", "boyfriend"];
        let neutral = ["people", "person", "human", "baby"];
        let replace = [
            ("woman", "person"),
            ("man", "person"),
            ("women", "people"),
            ("men", "people"),
            ("girl", "child"),
            ("boy", "child"),
            ("girls", "children"),
            ("boys", "children"),
            ("sister", "person"),
            ("brother", "person"),
            ("daughter", "person"),
            ("son", "person"),
            ("wife", "person"),
            ("husband", "person"),
            ("girlfriend", "person"),
            ("boyfriend", "person"),
            ("sisters", "people"),
            ("brothers", "people"),
            ("daughters", "people"),
            ("sons", "people"),
            ("wives", "people"),
            ("husbands", "people"),
            ("girlfriends", "people"),
            ("boyfriends", "people"),
        ];
        Self::new(
            female.into_iter().map(String::from),
            male.into_iter().map(String::from),
            neutral.into_iter().map(String::from),
            replace
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string())),
        )
        .expect("built-in lexicon is valid")
    }
}

/// Lowercase alphanumeric tokens, in order. Punctuation separates tokens and
/// is dropped, so "manager" stays one token and never matches "man".
pub fn tokenize(caption: &str) -> Vec<String> {
    caption
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn classify_caption(caption: &str, lexicon: &GenderLexicon) -> CaptionGender {
    let mut female = false;
    let mut male = false;
    for tok in tokenize(caption) {
        if lexicon.female_words().contains(&tok) {
            female = true;
        } else if lexicon.male_words().contains(&tok) {
            male = true;
        }
    }
    match (female, male) {
        (true, true) => CaptionGender::Both,
        (true, false) => CaptionGender::Female,
        (false, true) => CaptionGender::Male,
        (false, false) => CaptionGender::None,
    }
}

/// Derive the image-level label from its captions and person instance count.
/// Conflicting or absent evidence yields Discard; only single-person images
/// with unanimous gender evidence get Women or Men.
pub fn label_image<S: AsRef<str>>(
    captions: &[S],
    person_instance_count: usize,
    lexicon: &GenderLexicon,
) -> Result<GenderLabel> {
    if captions.is_empty() {
        return Err(Error::EmptyInput("no captions supplied for image".into()));
    }
    if person_instance_count != 1 {
        return Ok(GenderLabel::Discard);
    }
    let mut any_female = false;
    let mut any_male = false;
    for cap in captions {
        match classify_caption(cap.as_ref(), lexicon) {
            CaptionGender::Both => return Ok(GenderLabel::Discard),
            CaptionGender::Female => any_female = true,
            CaptionGender::Male => any_male = true,
            CaptionGender::None => {}
        }
    }
    Ok(match (any_female, any_male) {
        (true, true) | (false, false) => GenderLabel::Discard,
        (true, false) => GenderLabel::Women,
        (false, true) => GenderLabel::Men,
    })
}

/// Replace gendered tokens per the lexicon's replacement map. Non-gendered
/// tokens, punctuation, whitespace, and order are preserved verbatim;
/// replaced tokens come out lowercase.
pub fn neutralize(caption: &str, lexicon: &GenderLexicon) -> String {
    let mut out = String::with_capacity(caption.len());
    let mut token = String::new();
    let flush = |out: &mut String, token: &mut String| {
        if token.is_empty() {
            return;
        }
        let lower = token.to_lowercase();
        match lexicon.replacement_map().get(&lower) {
            Some(rep) => out.push_str(rep),
            None => out.push_str(token),
        }
        token.clear();
    };
    for ch in caption.chars() {
        if ch.is_alphanumeric() {
            token.push(ch);
        } else {
            flush(&mut out, &mut token);
            out.push(ch);
        }
    }
    flush(&mut out, &mut token);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> GenderLexicon {
        GenderLexicon::default()
    }

    #[test]
    fn classify_basic() {
        assert_eq!(classify_caption("A woman riding a horse", &lex()), CaptionGender::Female);
        assert_eq!(
            classify_caption("A man and a woman at a table", &lex()),
            CaptionGender::Both
        );
        assert_eq!(classify_caption("Two people surfing", &lex()), CaptionGender::None);
        assert_eq!(classify_caption("the boy's kite", &lex()), CaptionGender::Male);
    }

    #[test]
    fn whole_word_matching_only() {
        assert_eq!(classify_caption("the manager is busy", &lex()), CaptionGender::None);
        assert_eq!(classify_caption("a germany flag", &lex()), CaptionGender::None);
        assert_eq!(classify_caption("WOMAN!", &lex()), CaptionGender::Female);
    }

    #[test]
    fn label_majority_female() {
        let caps = [
            "a woman on a bench",
            "a girl sitting outside",
            "someone on a bench",
            "a park bench scene",
            "a bench in a park",
        ];
        assert_eq!(label_image(&caps, 1, &lex()).unwrap(), GenderLabel::Women);
    }

    #[test]
    fn label_discards_conflicts() {
        let both = ["a man and a woman", "a couple", "people", "two people", "a pair"];
        assert_eq!(label_image(&both, 1, &lex()).unwrap(), GenderLabel::Discard);

        let mixed = ["a man walking", "a woman walking", "a road", "a path", "trees"];
        assert_eq!(label_image(&mixed, 1, &lex()).unwrap(), GenderLabel::Discard);

        let neutral = ["a person", "someone", "a human", "people", "a crowd"];
        assert_eq!(label_image(&neutral, 1, &lex()).unwrap(), GenderLabel::Discard);
    }

    #[test]
    fn label_requires_single_person() {
        let caps = ["a man surfing"; 5];
        assert_eq!(label_image(&caps, 3, &lex()).unwrap(), GenderLabel::Discard);
        assert_eq!(label_image(&caps, 0, &lex()).unwrap(), GenderLabel::Discard);
        assert_eq!(label_image(&caps, 1, &lex()).unwrap(), GenderLabel::Men);
    }

    #[test]
    fn label_needs_captions() {
        let none: [&str; 0] = [];
        assert!(label_image(&none, 1, &lex()).is_err());
    }

    #[test]
    fn neutralize_examples() {
        assert_eq!(neutralize("a man in a suit", &lex()), "a person in a suit");
        assert_eq!(neutralize("two girls playing", &lex()), "two children playing");
        assert_eq!(neutralize("a dog on grass", &lex()), "a dog on grass");
        assert_eq!(neutralize("The Man, again.", &lex()), "The person, again.");
        assert_eq!(neutralize("his wives arrived", &lex()), "his people arrived");
    }

    #[test]
    fn invalid_lexicons_rejected() {
        let word = |w: &str| w.to_string();
        // overlap between sets
        assert!(GenderLexicon::new(
            vec![word("woman")],
            vec![word("woman")],
            vec![],
            vec![(word("woman"), word("person"))],
        )
        .is_err());
        // missing replacement
        assert!(GenderLexicon::new(
            vec![word("woman")],
            vec![],
            vec![],
            vec![],
        )
        .is_err());
        // replacement into a gendered word
        assert!(GenderLexicon::new(
            vec![word("woman")],
            vec![word("man")],
            vec![],
            vec![(word("woman"), word("man")), (word("man"), word("person"))],
        )
        .is_err());
    }

    #[test]
    fn json_override_round_trip() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        let body = serde_json::json!({
            "female": ["dame"],
            "male": ["dude"],
            "neutral": ["folk"],
            "replace": {"dame": "person", "dude": "person"}
        });
        f.write_all(body.to_string().as_bytes()).unwrap();
        let lex = GenderLexicon::from_json_file(f.path()).unwrap();
        assert_eq!(classify_caption("a dude skating", &lex), CaptionGender::Male);
        assert_eq!(neutralize("a dame waving", &lex), "a person waving");
    }

    fn caption_strategy() -> impl Strategy<Value = String> {
        let pool = [
            "a", "woman", "man", "girls", "dog", "people", "boy", "wife", "park,",
            "Manager", "sons", "the", "riding;", "baby",
        ];
        proptest::collection::vec(proptest::sample::select(pool.to_vec()), 1..12)
            .prop_map(|words| words.join(" "))
    }

    proptest! {
        #[test]
        fn neutralize_idempotent(s in caption_strategy()) {
            let l = lex();
            let once = neutralize(&s, &l);
            prop_assert_eq!(neutralize(&once, &l), once);
        }

        #[test]
        fn neutralized_captions_classify_none(s in caption_strategy()) {
            let l = lex();
            prop_assert_eq!(classify_caption(&neutralize(&s, &l), &l), CaptionGender::None);
        }

        #[test]
        fn label_is_permutation_invariant(
            caps in proptest::collection::vec(caption_strategy(), 5),
            swap in (0usize..5, 0usize..5),
        ) {
            let l = lex();
            let base = label_image(&caps, 1, &l).unwrap();
            let mut shuffled = caps.clone();
            shuffled.swap(swap.0, swap.1);
            prop_assert_eq!(label_image(&shuffled, 1, &l).unwrap(), base);
        }
    }
}
