//! Caregiver language: caption templates, the utterance schedule with its
//! sparsity/correctness statistics, and tokenization.
//!
//! Templates are one-line strings with a single `{name}` placeholder and at
//! least three words once instantiated. Per frame, an utterance occurs with
//! probability `p_sparse`; when it does, it names the held object with
//! probability `p_correct` and otherwise a uniformly chosen clutter object.
//! The referent flag records which happened, operationalizing ambiguity.

use std::collections::HashMap;

use rand::Rng;

use crate::rng::Stream;
use crate::{CategoryId, Error, Result};

/// Reserved id for out-of-vocabulary words.
pub const OOV_ID: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub template_id: u32,
    pub text: String,
}

impl Template {
    pub fn instantiate(&self, name: &str) -> String {
        self.text.replace("{name}", name)
    }
}

/// Per-frame utterance statistics. `p_name`, the probability a frame names
/// the held object, is the product of the two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtteranceStats {
    pub p_sparse: f32,
    pub p_correct: f32,
}

impl Default for UtteranceStats {
    fn default() -> Self {
        UtteranceStats { p_sparse: 0.1, p_correct: 0.5 }
    }
}

impl UtteranceStats {
    pub fn p_name(&self) -> f32 {
        self.p_sparse * self.p_correct
    }

    pub fn validate(&self) -> Result<()> {
        for (label, v) in [("p_sparse", self.p_sparse), ("p_correct", self.p_correct)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::Config(format!("{} = {} outside [0,1]", label, v)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Referent {
    Main,
    Background,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub template_id: u32,
    pub named_category: CategoryId,
    pub token_ids: Vec<u32>,
    pub refers_to: Referent,
}

fn validate_template(text: &str, line: usize) -> Result<()> {
    let occurrences = text.matches("{name}").count();
    if occurrences == 0 {
        return Err(Error::Template { line, msg: "missing {name} placeholder".into() });
    }
    if occurrences > 1 {
        return Err(Error::Template { line, msg: "more than one {name} placeholder".into() });
    }
    let words = text.split_whitespace().count();
    if words < 3 {
        return Err(Error::Template {
            line,
            msg: format!("only {} words; templates need at least 3", words),
        });
    }
    Ok(())
}

/// Parse template text: one template per line, blank lines skipped,
/// duplicates dropped (first occurrence wins). Errors carry 1-based lines.
pub fn parse_templates(text: &str) -> Result<Vec<Template>> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        validate_template(line, idx + 1)?;
        if seen.insert(line.to_string(), ()).is_none() {
            out.push(Template { template_id: out.len() as u32, text: line.to_string() });
        }
    }
    if out.is_empty() {
        return Err(Error::Template { line: 0, msg: "no templates in file".into() });
    }
    Ok(out)
}

pub fn load_templates(path: &std::path::Path) -> Result<Vec<Template>> {
    parse_templates(&std::fs::read_to_string(path)?)
}

/// The template corpus shipped with the crate.
pub fn bundled_templates() -> Vec<Template> {
    parse_templates(include_str!("../assets/templates.txt"))
        .expect("bundled template file is valid")
}

/// Fixed word-to-id table built from the template corpus plus all category
/// names. Id 0 is reserved for out-of-vocabulary words; remaining ids follow
/// first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    pub fn build(templates: &[Template], names: &[String]) -> Vocabulary {
        let mut vocab = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: vec!["<oov>".to_string()],
        };
        vocab.token_to_id.insert("<oov>".into(), OOV_ID);
        let mut add = |word: &str| {
            if !vocab.token_to_id.contains_key(word) {
                let id = vocab.id_to_token.len() as u32;
                vocab.token_to_id.insert(word.to_string(), id);
                vocab.id_to_token.push(word.to_string());
            }
        };
        for t in templates {
            for word in normalize(&t.text).split_whitespace() {
                if word != "name" {
                    // The placeholder braces strip to the bare word "name";
                    // skip it, names are added below.
                    add(word);
                }
            }
        }
        for name in names {
            add(&normalize(name));
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        *self.token_to_id.get(token).unwrap_or(&OOV_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    /// Plain-text sidecar: one "id token" pair per line.
    pub fn write_to(&self, w: &mut impl std::io::Write) -> Result<()> {
        for (id, token) in self.id_to_token.iter().enumerate() {
            writeln!(w, "{} {}", id, token)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl std::io::BufRead) -> Result<Vocabulary> {
        let mut id_to_token = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            let id: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("vocab line {}: bad id", idx + 1)))?;
            let token = fields
                .next()
                .ok_or_else(|| Error::Parse(format!("vocab line {}: missing token", idx + 1)))?;
            if id != id_to_token.len() {
                return Err(Error::Parse(format!("vocab line {}: ids out of order", idx + 1)));
            }
            id_to_token.push(token.to_string());
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary { token_to_id, id_to_token })
    }
}

/// Lowercase and strip punctuation, keeping alphanumerics and whitespace.
fn normalize(text: &str) -> String {
    text.chars()
        .flat_map(|c| c.to_lowercase())
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect()
}

/// Map text to vocabulary ids. Unknown words become `OOV_ID`.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Result<Vec<u32>> {
    let normalized = normalize(text);
    let ids: Vec<u32> = normalized.split_whitespace().map(|w| vocab.id(w)).collect();
    if ids.is_empty() {
        return Err(Error::Parse(format!("text {:?} empty after stripping", text)));
    }
    Ok(ids)
}

/// Draw the utterance slot for one frame. Draw order: occurrence coin; if it
/// occurs, template index, correctness coin, and (when incorrect) the
/// background pick. `background` lists the category of each clutter instance
/// in scene order; `names` maps category id to its name.
pub fn sample_utterance(
    main: CategoryId,
    background: &[CategoryId],
    names: &[String],
    stats: &UtteranceStats,
    templates: &[Template],
    vocab: &Vocabulary,
    rng: &mut Stream,
) -> Result<Option<Utterance>> {
    if templates.is_empty() {
        return Err(Error::Config("empty template list".into()));
    }
    if background.is_empty() {
        return Err(Error::Config("utterance sampling needs at least 1 background object".into()));
    }
    let occur: f32 = rng.random_range(0.0..1.0);
    if occur >= stats.p_sparse {
        return Ok(None);
    }
    let template = &templates[rng.random_range(0..templates.len())];
    let correct: f32 = rng.random_range(0.0..1.0);
    let (named_category, refers_to) = if correct < stats.p_correct {
        (main, Referent::Main)
    } else {
        (background[rng.random_range(0..background.len())], Referent::Background)
    };
    let text = template.instantiate(&names[named_category.0 as usize]);
    let token_ids = tokenize(&text, vocab)?;
    Ok(Some(Utterance {
        template_id: template.template_id,
        named_category,
        token_ids,
        refers_to,
    }))
}
