//! Domain types shared by every stage: scenarios, instructions, vocabularies
//! and detections.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::VocabularyError;
use crate::geometry::{BoundingBox, RelationKind};
use crate::text::tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ObjectBinding,
    ColorBinding,
    AttributeBinding,
    ObjectRelationship,
    SmallBboxes,
    OverlappedBboxes,
    ComplexCompositions,
    OpenSet,
}

impl Scenario {
    /// Scenarios of the procedurally generated benchmark, in report order.
    pub const CLOSED: [Scenario; 7] = [
        Scenario::ObjectBinding,
        Scenario::ColorBinding,
        Scenario::AttributeBinding,
        Scenario::ObjectRelationship,
        Scenario::SmallBboxes,
        Scenario::OverlappedBboxes,
        Scenario::ComplexCompositions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::ObjectBinding => "object_binding",
            Scenario::ColorBinding => "color_binding",
            Scenario::AttributeBinding => "attribute_binding",
            Scenario::ObjectRelationship => "object_relationship",
            Scenario::SmallBboxes => "small_bboxes",
            Scenario::OverlappedBboxes => "overlapped_bboxes",
            Scenario::ComplexCompositions => "complex_compositions",
            Scenario::OpenSet => "open_set",
        }
    }

    pub fn is_closed(self) -> bool {
        self != Scenario::OpenSet
    }

    /// Object counts a closed-set scenario can be instantiated with.
    pub fn object_counts(self) -> &'static [usize] {
        match self {
            Scenario::ObjectRelationship => &[2, 4],
            Scenario::OpenSet => &[],
            _ => &[1, 2, 3, 4],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::CLOSED
            .iter()
            .chain(std::iter::once(&Scenario::OpenSet))
            .find(|sc| sc.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

/// Which benchmark a manifest or report belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Closed,
    Open,
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchmarkKind::Closed => "closed",
            BenchmarkKind::Open => "open",
        })
    }
}

/// A noun phrase and its head noun, before a box has been assigned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectPhrase {
    pub phrase: String,
    pub head: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub phrase: String,
    pub head: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// `objects[subject] <kind> objects[object]`, as stated by the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub kind: RelationKind,
    pub subject: usize,
    pub object: usize,
}

/// An instruction whose objects have no boxes yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DraftInstruction {
    pub id: String,
    pub scenario: Scenario,
    pub prompt: String,
    pub objects: Vec<ObjectPhrase>,
    pub relations: Vec<RelationSpec>,
}

impl DraftInstruction {
    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn heads(&self) -> Vec<&str> {
        self.objects.iter().map(|o| o.head.as_str()).collect()
    }

    /// Attaches one box per object, in order.
    pub fn with_boxes(self, boxes: Vec<BoundingBox>) -> Instruction {
        assert_eq!(boxes.len(), self.objects.len(), "one box per object");
        let objects = self
            .objects
            .into_iter()
            .zip(boxes)
            .map(|(o, bbox)| ObjectSpec {
                phrase: o.phrase,
                head: o.head,
                bbox,
            })
            .collect::<Vec<_>>();
        Instruction {
            id: self.id,
            scenario: self.scenario,
            prompt: self.prompt,
            n_objects: objects.len(),
            objects,
            relations: self.relations,
        }
    }
}

/// One benchmark item: a prompt with one target box per mentioned object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    pub scenario: Scenario,
    pub prompt: String,
    pub n_objects: usize,
    pub objects: Vec<ObjectSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<RelationSpec>,
}

impl Instruction {
    pub fn boxes(&self) -> Vec<BoundingBox> {
        self.objects.iter().map(|o| o.bbox).collect()
    }

    pub fn to_draft(&self) -> DraftInstruction {
        DraftInstruction {
            id: self.id.clone(),
            scenario: self.scenario,
            prompt: self.prompt.clone(),
            objects: self
                .objects
                .iter()
                .map(|o| ObjectPhrase {
                    phrase: o.phrase.clone(),
                    head: o.head.clone(),
                })
                .collect(),
            relations: self.relations.clone(),
        }
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.objects.is_empty() {
            return Err(format!("{}: no objects", self.id));
        }
        if self.n_objects != self.objects.len() {
            return Err(format!(
                "{}: n_objects is {} but {} objects are listed",
                self.id,
                self.n_objects,
                self.objects.len()
            ));
        }
        if self.scenario.is_closed() && self.n_objects > 4 {
            return Err(format!("{}: closed-set instruction with {} objects", self.id, self.n_objects));
        }
        let prompt = self.prompt.to_lowercase();
        for o in &self.objects {
            if o.phrase.trim().is_empty() {
                return Err(format!("{}: empty phrase", self.id));
            }
            if o.head.trim().is_empty() || !prompt.contains(&o.head.to_lowercase()) {
                return Err(format!("{}: head `{}` not found in prompt", self.id, o.head));
            }
        }
        for r in &self.relations {
            if r.subject >= self.n_objects || r.object >= self.n_objects {
                return Err(format!("{}: relation index out of range", self.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeClass {
    Color,
    Shape,
    Material,
    Appearance,
    Dimension,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabObject {
    pub text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub plural: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub text: String,
    pub class: AttributeClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub text: String,
    pub kind: RelationKind,
}

/// Controlled vocabulary the prompt engine draws from and the object
/// extractor matches against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub objects: Vec<VocabObject>,
    pub attributes: Vec<Attribute>,
    pub relations: Vec<Relation>,
}

impl Vocabulary {
    pub fn validate(&self) -> Result<(), VocabularyError> {
        if self.objects.is_empty() {
            return Err(VocabularyError::Empty("objects"));
        }
        if self.attributes.is_empty() {
            return Err(VocabularyError::Empty("attributes"));
        }
        if self.relations.is_empty() {
            return Err(VocabularyError::Empty("relations"));
        }
        check_unique("object", self.objects.iter().map(|o| o.text.as_str()))?;
        check_unique("attribute", self.attributes.iter().map(|a| a.text.as_str()))?;
        check_unique("relation", self.relations.iter().map(|r| r.text.as_str()))?;

        // The extractor only knows objects, so no attribute or relation may
        // contain an object's token sequence.
        let others = self
            .attributes
            .iter()
            .map(|a| ("attribute", a.text.as_str()))
            .chain(self.relations.iter().map(|r| ("relation", r.text.as_str())));
        for (kind, word) in others {
            let word_tokens = lower_tokens(word);
            for o in &self.objects {
                let obj_tokens = lower_tokens(&o.text);
                if word_tokens.windows(obj_tokens.len()).any(|w| w == obj_tokens.as_slice()) {
                    return Err(VocabularyError::Ambiguous {
                        object: o.text.clone(),
                        kind,
                        word: word.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn attributes_of(&self, class: AttributeClass) -> Vec<&Attribute> {
        self.attributes.iter().filter(|a| a.class == class).collect()
    }

    pub fn find_object(&self, text: &str) -> Option<&VocabObject> {
        self.objects.iter().find(|o| o.text.eq_ignore_ascii_case(text))
    }
}

fn lower_tokens(s: &str) -> Vec<String> {
    tokens(s).into_iter().map(|t| t.lower).collect()
}

fn check_unique<'a>(
    kind: &'static str,
    texts: impl Iterator<Item = &'a str>,
) -> Result<(), VocabularyError> {
    let mut seen = HashSet::new();
    for t in texts {
        let key = lower_tokens(t).join(" ");
        if key.is_empty() {
            return Err(VocabularyError::Blank(t.to_string()));
        }
        if !seen.insert(key) {
            return Err(VocabularyError::Duplicate {
                kind,
                text: t.to_string(),
            });
        }
    }
    Ok(())
}

/// A detector hit for one object query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary {
            objects: vec![
                VocabObject { text: "cat".into(), plural: false },
                VocabObject { text: "fire truck".into(), plural: false },
            ],
            attributes: vec![Attribute { text: "red".into(), class: AttributeClass::Color }],
            relations: vec![Relation { text: "to the left of".into(), kind: RelationKind::LeftOf }],
        }
    }

    #[test]
    fn valid_vocabulary_passes() {
        assert_eq!(vocab().validate(), Ok(()));
    }

    #[test]
    fn duplicates_are_rejected_case_insensitively() {
        let mut v = vocab();
        v.objects.push(VocabObject { text: "Cat".into(), plural: false });
        assert!(matches!(v.validate(), Err(VocabularyError::Duplicate { kind: "object", .. })));
    }

    #[test]
    fn attribute_shadowing_an_object_is_rejected() {
        let mut v = vocab();
        v.objects.push(VocabObject { text: "orange".into(), plural: false });
        v.attributes.push(Attribute { text: "orange".into(), class: AttributeClass::Color });
        assert!(matches!(v.validate(), Err(VocabularyError::Ambiguous { .. })));
    }

    #[test]
    fn empty_sets_are_rejected() {
        let mut v = vocab();
        v.relations.clear();
        assert_eq!(v.validate(), Err(VocabularyError::Empty("relations")));
    }

    #[test]
    fn instruction_check_catches_missing_head() {
        let instr = Instruction {
            id: "x".into(),
            scenario: Scenario::ObjectBinding,
            prompt: "a cat".into(),
            n_objects: 1,
            objects: vec![ObjectSpec {
                phrase: "a dog".into(),
                head: "dog".into(),
                bbox: BoundingBox::full(),
            }],
            relations: vec![],
        };
        assert!(instr.check().is_err());
    }

    #[test]
    fn scenario_parses_from_tag() {
        for sc in Scenario::CLOSED {
            assert_eq!(sc.as_str().parse::<Scenario>(), Ok(sc));
        }
        assert!("nope".parse::<Scenario>().is_err());
    }
}
