//! Prompt generation: scenario templates, the complex-composition composer
//! and controlled-vocabulary object extraction.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::PromptError;
use crate::model::{
    Attribute, AttributeClass, DraftInstruction, ObjectPhrase, RelationSpec, Scenario, VocabObject,
    Vocabulary,
};
use crate::seed::{rng_from_seed, Rng};
use crate::text::{tokens, Token};

/// Indefinite article for a noun phrase starting with `word`. Orthographic
/// rule: vowel letter gives "an".
pub fn determiner(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Builds "det attr... object"; plural objects take no article.
pub fn noun_phrase(attributes: &[&str], object: &VocabObject) -> String {
    let mut words: Vec<&str> = attributes.to_vec();
    words.push(&object.text);
    let body = words.join(" ");
    if object.plural {
        body
    } else {
        format!("{} {}", determiner(words[0]), body)
    }
}

/// Which template slots a scenario fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemplateSpec {
    pub scenario: Scenario,
    pub n_objects: usize,
    pub uses_attributes: bool,
    pub uses_relations: bool,
}

impl TemplateSpec {
    pub fn for_scenario(scenario: Scenario, n_objects: usize) -> Result<Self, PromptError> {
        let (uses_attributes, uses_relations) = match scenario {
            Scenario::ObjectBinding | Scenario::SmallBboxes | Scenario::OverlappedBboxes => {
                (false, false)
            }
            Scenario::ColorBinding | Scenario::AttributeBinding => (true, false),
            Scenario::ObjectRelationship => (false, true),
            Scenario::ComplexCompositions | Scenario::OpenSet => {
                return Err(PromptError::UnsupportedCount { scenario, n_objects })
            }
        };
        if !scenario.object_counts().contains(&n_objects) {
            return Err(PromptError::UnsupportedCount { scenario, n_objects });
        }
        Ok(TemplateSpec {
            scenario,
            n_objects,
            uses_attributes,
            uses_relations,
        })
    }
}

/// Prompt text with its ordered objects; no id and no boxes yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composition {
    pub prompt: String,
    pub objects: Vec<ObjectPhrase>,
    pub relations: Vec<RelationSpec>,
}

impl Composition {
    pub fn into_draft(self, id: impl Into<String>, scenario: Scenario) -> DraftInstruction {
        DraftInstruction {
            id: id.into(),
            scenario,
            prompt: self.prompt,
            objects: self.objects,
            relations: self.relations,
        }
    }
}

fn draw_distinct<'a, T>(
    rng: &mut Rng,
    pool: &[&'a T],
    n: usize,
    what: &'static str,
) -> Result<Vec<&'a T>, PromptError> {
    if pool.len() < n {
        return Err(PromptError::VocabularyTooSmall {
            what,
            needed: n,
            available: pool.len(),
        });
    }
    Ok(sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect())
}

/// "p1", "p1 and p2", "p1, p2 and p3", ...
fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Fills the scenario template with objects (and attributes or relations)
/// drawn from `vocab`. Deterministic in `(spec, vocab, seed)`.
pub fn instantiate_template(
    spec: &TemplateSpec,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<Composition, PromptError> {
    let mut rng = rng_from_seed(seed);
    let object_pool: Vec<&VocabObject> = vocab.objects.iter().collect();
    let objects = draw_distinct(&mut rng, &object_pool, spec.n_objects, "objects")?;

    let attributes: Vec<Option<&Attribute>> = if spec.uses_attributes {
        let pool: Vec<&Attribute> = match spec.scenario {
            Scenario::ColorBinding => vocab.attributes_of(AttributeClass::Color),
            _ => vocab.attributes.iter().collect(),
        };
        let what = if spec.scenario == Scenario::ColorBinding {
            "color attributes"
        } else {
            "attributes"
        };
        draw_distinct(&mut rng, &pool, spec.n_objects, what)?
            .into_iter()
            .map(Some)
            .collect()
    } else {
        vec![None; spec.n_objects]
    };

    let phrases: Vec<String> = objects
        .iter()
        .zip(&attributes)
        .map(|(o, a)| match a {
            Some(a) => noun_phrase(&[a.text.as_str()], o),
            None => noun_phrase(&[], o),
        })
        .collect();

    let mut relations = Vec::new();
    let prompt = if spec.uses_relations {
        let mut clauses = Vec::new();
        for pair in 0..spec.n_objects / 2 {
            let (s, o) = (2 * pair, 2 * pair + 1);
            let rel = &vocab.relations[rng.random_range(0..vocab.relations.len())];
            clauses.push(format!("{} {} {}", phrases[s], rel.text, phrases[o]));
            relations.push(RelationSpec {
                kind: rel.kind,
                subject: s,
                object: o,
            });
        }
        clauses.join(" and ")
    } else {
        join_list(&phrases)
    };

    Ok(Composition {
        prompt,
        objects: objects
            .iter()
            .zip(phrases)
            .map(|(o, phrase)| ObjectPhrase {
                phrase,
                head: o.text.clone(),
            })
            .collect(),
        relations,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub max_length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ClientError(pub String);

/// Remote text generator used for complex compositions.
pub trait TextGenerator: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError>;
}

pub const DEFAULT_FEW_SHOT_INSTRUCTION: &str = "\
You write short image descriptions for a text-to-image benchmark. \
Combine the given objects, attributes and relations freely into one fluent sentence. \
Use only objects from the list, mention exactly the requested number of distinct objects, \
and reply with the sentence only.

Example (2 objects): a fluffy white cat sleeping next to a wooden chair
Example (3 objects): a red bicycle leaning against a tree, with a small dog below it";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeOptions {
    /// System text sent with every request.
    pub instruction: String,
    /// Extra attempts after a client failure.
    pub client_retries: u32,
    /// Replies that fail validation are retried up to this many total attempts.
    pub max_attempts: u32,
    pub max_length: u32,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions {
            instruction: DEFAULT_FEW_SHOT_INSTRUCTION.to_string(),
            client_retries: 3,
            max_attempts: 5,
            max_length: 96,
        }
    }
}

fn compose_request(vocab: &Vocabulary, n_objects: usize, opts: &ComposeOptions) -> CompletionRequest {
    let list = |items: Vec<&str>| items.join(", ");
    let user = format!(
        "Objects: {}\nAttributes: {}\nRelations: {}\nNumber of objects: {}",
        list(vocab.objects.iter().map(|o| o.text.as_str()).collect()),
        list(vocab.attributes.iter().map(|a| a.text.as_str()).collect()),
        list(vocab.relations.iter().map(|r| r.text.as_str()).collect()),
        n_objects
    );
    CompletionRequest {
        system: opts.instruction.clone(),
        user,
        max_length: opts.max_length,
    }
}

fn clean_reply(reply: &str) -> String {
    let line = reply.trim().lines().next().unwrap_or("").trim();
    line.trim_matches(|c| c == '"' || c == '\'' || c == '`').trim().to_string()
}

/// Builds a complex-composition prompt with exactly `n_objects` objects.
///
/// With a client, the reply is accepted only if [`extract_objects`] finds
/// exactly `n_objects` vocabulary objects in it. Without one, a seeded
/// multi-clause composer is used.
pub fn compose_complex(
    vocab: &Vocabulary,
    n_objects: usize,
    client: Option<&dyn TextGenerator>,
    seed: u64,
    opts: &ComposeOptions,
) -> Result<Composition, PromptError> {
    if !(1..=4).contains(&n_objects) {
        return Err(PromptError::UnsupportedCount {
            scenario: Scenario::ComplexCompositions,
            n_objects,
        });
    }
    let Some(client) = client else {
        return compose_fallback(vocab, n_objects, seed);
    };

    let request = compose_request(vocab, n_objects, opts);
    let mut last_reason = String::new();
    for attempt in 1..=opts.max_attempts.max(1) {
        let mut reply = None;
        let mut last_err = None;
        for _ in 0..=opts.client_retries {
            match client.complete(&request) {
                Ok(r) => {
                    reply = Some(r);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let Some(reply) = reply else {
            return Err(PromptError::ClientFailure {
                attempts: opts.client_retries + 1,
                message: last_err.map(|e| e.0).unwrap_or_default(),
            });
        };
        let prompt = clean_reply(&reply);
        match extract_objects(&prompt, vocab) {
            Ok(objects) if objects.len() == n_objects => {
                return Ok(Composition {
                    prompt,
                    objects,
                    relations: Vec::new(),
                })
            }
            Ok(objects) => {
                last_reason = format!(
                    "attempt {attempt}: expected {n_objects} objects, found {}",
                    objects.len()
                )
            }
            Err(e) => last_reason = format!("attempt {attempt}: {e}"),
        }
    }
    Err(PromptError::ValidationFailure {
        attempts: opts.max_attempts.max(1),
        reason: last_reason,
    })
}

const ADJECTIVE_ORDER: [AttributeClass; 5] = [
    AttributeClass::Appearance,
    AttributeClass::Dimension,
    AttributeClass::Shape,
    AttributeClass::Color,
    AttributeClass::Material,
];

#[derive(Clone, Copy)]
enum Connector {
    Relation,
    And,
    With,
}

fn compose_fallback(vocab: &Vocabulary, n: usize, seed: u64) -> Result<Composition, PromptError> {
    let mut rng = rng_from_seed(seed);
    let object_pool: Vec<&VocabObject> = vocab.objects.iter().collect();
    let objects = draw_distinct(&mut rng, &object_pool, n, "objects")?;

    let phrases: Vec<String> = objects
        .iter()
        .map(|o| {
            let k = rng.random_range(0..=2usize).min(vocab.attributes.len());
            let mut picked: Vec<&Attribute> = sample(&mut rng, vocab.attributes.len(), k)
                .into_iter()
                .map(|i| &vocab.attributes[i])
                .collect();
            picked.sort_by_key(|a| ADJECTIVE_ORDER.iter().position(|c| *c == a.class));
            let words: Vec<&str> = picked.iter().map(|a| a.text.as_str()).collect();
            noun_phrase(&words, o)
        })
        .collect();

    let mut prompt = phrases[0].clone();
    // Long prompts are split into two clauses at a random boundary.
    let clause_break = if n >= 3 && rng.random_bool(0.5) {
        Some(rng.random_range(1..n))
    } else {
        None
    };
    for (i, phrase) in phrases.iter().enumerate().skip(1) {
        if Some(i) == clause_break {
            prompt.push_str(", while ");
            prompt.push_str(phrase);
            continue;
        }
        let connector = match rng.random_range(0..4u8) {
            0 | 1 => Connector::Relation,
            2 => Connector::And,
            _ => Connector::With,
        };
        let word = match connector {
            Connector::Relation => {
                vocab.relations[rng.random_range(0..vocab.relations.len())].text.as_str()
            }
            Connector::And => "and",
            Connector::With => "with",
        };
        prompt.push(' ');
        prompt.push_str(word);
        prompt.push(' ');
        prompt.push_str(phrase);
    }

    Ok(Composition {
        prompt,
        objects: objects
            .iter()
            .zip(phrases)
            .map(|(o, phrase)| ObjectPhrase {
                phrase,
                head: o.text.clone(),
            })
            .collect(),
        relations: Vec::new(),
    })
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

fn lower_seq(s: &str) -> Vec<String> {
    tokens(s).into_iter().map(|t| t.lower).collect()
}

fn matches_at(toks: &[Token], at: usize, seq: &[String]) -> bool {
    !seq.is_empty()
        && at + seq.len() <= toks.len()
        && toks[at..at + seq.len()].iter().zip(seq).all(|(t, s)| t.lower == *s)
}

/// Finds vocabulary objects in `prompt`, left to right, longest entry first.
/// Each phrase spans the preceding article and attributes, if any, through
/// the head.
pub fn extract_objects(prompt: &str, vocab: &Vocabulary) -> Result<Vec<ObjectPhrase>, PromptError> {
    let toks = tokens(prompt);
    let mut objects: Vec<(&VocabObject, Vec<String>)> =
        vocab.objects.iter().map(|o| (o, lower_seq(&o.text))).collect();
    objects.sort_by_key(|(_, seq)| std::cmp::Reverse(seq.len()));
    let mut attributes: Vec<Vec<String>> =
        vocab.attributes.iter().map(|a| lower_seq(&a.text)).collect();
    attributes.sort_by_key(|seq| std::cmp::Reverse(seq.len()));

    let mut found = Vec::new();
    let mut prev_end = 0usize;
    let mut i = 0usize;
    while i < toks.len() {
        let hit = objects.iter().find(|(_, seq)| matches_at(&toks, i, seq));
        let Some((object, seq)) = hit else {
            i += 1;
            continue;
        };
        let end = i + seq.len();
        let mut start = i;
        while let Some(attr) = attributes
            .iter()
            .find(|a| a.len() <= start - prev_end && matches_at(&toks, start - a.len(), a))
        {
            start -= attr.len();
        }
        if start > prev_end && ARTICLES.contains(&toks[start - 1].lower.as_str()) {
            start -= 1;
        }
        found.push(ObjectPhrase {
            phrase: prompt[toks[start].start..toks[end - 1].end].to_string(),
            head: object.text.clone(),
        });
        prev_end = end;
        i = end;
    }
    if found.is_empty() {
        return Err(PromptError::NoObjectsFound(prompt.to_string()));
    }
    Ok(found)
}
