//! Open-set benchmark construction from Flickr30k Entities annotations.
//!
//! Sentence files carry one caption per line with inline entity markup
//! `[/EN#<chain>/<category>[/<category>...] <words>]`; annotation files are
//! VOC-style XML listing image size and per-chain boxes in pixels.

use std::collections::BTreeMap;

use rand::seq::index::sample;

use crate::error::OpenSetError;
use crate::geometry::BoundingBox;
use crate::model::{Instruction, ObjectSpec, Scenario};
use crate::seed::{derive_seed, rng_from_seed};

/// Categories without a meaningful box target.
pub const EXCLUDED_CATEGORIES: [&str; 2] = ["notvisual", "scene"];

/// One entity mention inside a caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityChain {
    pub chain_id: String,
    /// All categories as written; the first is the effective one.
    pub categories: Vec<String>,
    /// Half-open word range in the plain caption.
    pub span: (usize, usize),
    pub phrase: String,
}

impl EntityChain {
    pub fn category(&self) -> &str {
        self.categories.first().map(String::as_str).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedCaption {
    pub image_id: String,
    pub caption_index: usize,
    pub text: String,
    pub entities: Vec<EntityChain>,
}

impl GroundedCaption {
    /// Re-emits the markup line this caption was parsed from.
    pub fn render_markup(&self) -> String {
        let words: Vec<&str> = self.text.split(' ').collect();
        let mut out: Vec<String> = Vec::with_capacity(words.len());
        let mut entities = self.entities.iter().peekable();
        let mut i = 0;
        while i < words.len() {
            match entities.peek() {
                Some(e) if e.span.0 == i => {
                    let header = format!("[/EN#{}/{}", e.chain_id, e.categories.join("/"));
                    out.push(format!("{header} {}]", words[e.span.0..e.span.1].join(" ")));
                    i = e.span.1;
                    entities.next();
                }
                _ => {
                    out.push(words[i].to_string());
                    i += 1;
                }
            }
        }
        out.join(" ")
    }
}

const ENTITY_OPEN: &str = "[/EN#";

fn parse_line(line: &str, lineno: usize) -> Result<(String, Vec<EntityChain>), OpenSetError> {
    let malformed = |reason: String| OpenSetError::MalformedMarkup {
        line: lineno,
        reason,
    };
    let mut words: Vec<&str> = Vec::new();
    let mut entities = Vec::new();
    // (chain, categories, start word)
    let mut open: Option<(String, Vec<String>, usize)> = None;

    for tok in line.split(' ').filter(|t| !t.is_empty()) {
        if let Some(header) = tok.strip_prefix(ENTITY_OPEN) {
            if open.is_some() {
                return Err(malformed(format!("nested entity at `{tok}`")));
            }
            if header.ends_with(']') {
                return Err(malformed(format!("entity `{tok}` has no words")));
            }
            let mut parts = header.split('/');
            let chain = parts.next().unwrap_or_default();
            if chain.is_empty() {
                return Err(malformed(format!("missing chain id in `{tok}`")));
            }
            let categories: Vec<String> = parts.map(str::to_string).collect();
            if categories.is_empty() || categories.iter().any(String::is_empty) {
                return Err(malformed(format!("missing category in `{tok}`")));
            }
            open = Some((chain.to_string(), categories, words.len()));
            continue;
        }
        if tok.starts_with('[') {
            return Err(malformed(format!("unexpected `[` in `{tok}`")));
        }
        match tok.strip_suffix(']') {
            Some(word) => {
                let Some((chain_id, categories, start)) = open.take() else {
                    return Err(malformed(format!("unbalanced `]` in `{tok}`")));
                };
                if word.is_empty() || word.contains(']') {
                    return Err(malformed(format!("unbalanced `]` in `{tok}`")));
                }
                words.push(word);
                entities.push(EntityChain {
                    chain_id,
                    categories,
                    span: (start, words.len()),
                    phrase: words[start..].join(" "),
                });
            }
            None => {
                if tok.contains(']') {
                    return Err(malformed(format!("unbalanced `]` in `{tok}`")));
                }
                words.push(tok);
            }
        }
    }
    if let Some((chain, _, _)) = open {
        return Err(malformed(format!("entity {chain} is never closed")));
    }
    Ok((words.join(" "), entities))
}

/// Parses a Sentences file: one marked-up caption per non-empty line.
pub fn parse_sentence_file(image_id: &str, content: &str) -> Result<Vec<GroundedCaption>, OpenSetError> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .enumerate()
        .map(|(caption_index, (lineno, line))| {
            let (text, entities) = parse_line(line, lineno)?;
            Ok(GroundedCaption {
                image_id: image_id.to_string(),
                caption_index,
                text,
                entities,
            })
        })
        .collect()
}

/// Boxes of one image, in pixels, keyed by chain id in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoxAnnotation {
    pub width: u32,
    pub height: u32,
    pub boxes: BTreeMap<String, Vec<[f64; 4]>>,
}

fn child_text<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<&'a str> {
    node.children()
        .find(|c| c.has_tag_name(name))
        .and_then(|c| c.text())
        .map(str::trim)
}

/// Parses an Annotations XML file.
pub fn parse_box_file(content: &str) -> Result<BoxAnnotation, OpenSetError> {
    let malformed = OpenSetError::MalformedAnnotation;
    let doc = roxmltree::Document::parse(content).map_err(|e| malformed(e.to_string()))?;
    let root = doc.root_element();
    let size = root
        .children()
        .find(|c| c.has_tag_name("size"))
        .ok_or_else(|| malformed("missing <size>".into()))?;
    let dim = |name: &str| -> Result<u32, OpenSetError> {
        child_text(size, name)
            .ok_or_else(|| malformed(format!("missing <{name}>")))?
            .parse::<u32>()
            .map_err(|e| malformed(format!("bad <{name}>: {e}")))
    };
    let (width, height) = (dim("width")?, dim("height")?);
    if width == 0 || height == 0 {
        return Err(malformed("zero image dimension".into()));
    }

    let mut boxes: BTreeMap<String, Vec<[f64; 4]>> = BTreeMap::new();
    for object in root.children().filter(|c| c.has_tag_name("object")) {
        let Some(bndbox) = object.children().find(|c| c.has_tag_name("bndbox")) else {
            continue;
        };
        let mut rect = [0.0; 4];
        for (slot, name) in rect.iter_mut().zip(["xmin", "ymin", "xmax", "ymax"]) {
            *slot = child_text(bndbox, name)
                .ok_or_else(|| malformed(format!("box without <{name}>")))?
                .parse::<f64>()
                .map_err(|e| malformed(format!("bad <{name}>: {e}")))?;
        }
        let names: Vec<&str> = object
            .children()
            .filter(|c| c.has_tag_name("name"))
            .filter_map(|c| c.text())
            .map(str::trim)
            .collect();
        if names.is_empty() {
            return Err(malformed("object without <name>".into()));
        }
        for name in names {
            boxes.entry(name.to_string()).or_default().push(rect);
        }
    }
    Ok(BoxAnnotation { width, height, boxes })
}

/// Turns a caption into an open-set instruction. Entities that are not
/// visual, are scene-level, or have no box are dropped; multi-box chains are
/// merged into their enclosing box. `None` when nothing survives.
pub fn join_caption(caption: &GroundedCaption, ann: &BoxAnnotation) -> Option<Instruction> {
    let objects: Vec<ObjectSpec> = caption
        .entities
        .iter()
        .filter(|e| !EXCLUDED_CATEGORIES.contains(&e.category()))
        .filter_map(|e| {
            let rects = ann.boxes.get(&e.chain_id)?;
            let merged = rects.iter().copied().reduce(|a, b| {
                [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]
            })?;
            let bbox = BoundingBox::from_pixels(merged, ann.width, ann.height).ok()?;
            let head = e.phrase.split(' ').next_back().unwrap_or(&e.phrase).to_string();
            Some(ObjectSpec {
                phrase: e.phrase.clone(),
                head,
                bbox,
            })
        })
        .collect();
    if objects.is_empty() {
        return None;
    }
    Some(Instruction {
        id: format!("{}_{}", caption.image_id, caption.caption_index),
        scenario: Scenario::OpenSet,
        prompt: caption.text.clone(),
        n_objects: objects.len(),
        objects,
        relations: Vec::new(),
    })
}

/// Largest-remainder allocation of `target` across strata proportional to
/// their sizes. Ties in the remainder go to the smaller stratum key.
pub fn allocate_quotas(strata: &BTreeMap<usize, usize>, target: usize) -> BTreeMap<usize, usize> {
    let total: usize = strata.values().sum();
    if total == 0 {
        return strata.keys().map(|&k| (k, 0)).collect();
    }
    let mut quotas = BTreeMap::new();
    let mut remainders = Vec::new();
    let mut assigned = 0;
    for (&k, &size) in strata {
        let exact = size as u128 * target as u128;
        let floor = (exact / total as u128) as usize;
        quotas.insert(k, floor);
        remainders.push((exact % total as u128, k));
        assigned += floor;
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in remainders.iter().take(target - assigned) {
        *quotas.get_mut(&k).expect("stratum exists") += 1;
    }
    quotas
}

/// Stratified sample of `target` instructions preserving the distribution
/// of object counts. Output keeps pool order.
pub fn downsample(pool: &[Instruction], target: usize, seed: u64) -> Result<Vec<Instruction>, OpenSetError> {
    if target > pool.len() {
        return Err(OpenSetError::TargetTooLarge {
            target,
            pool: pool.len(),
        });
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, instr) in pool.iter().enumerate() {
        strata.entry(instr.n_objects).or_default().push(i);
    }
    let sizes = strata.iter().map(|(&k, v)| (k, v.len())).collect();
    let quotas = allocate_quotas(&sizes, target);

    let mut chosen = Vec::with_capacity(target);
    for (k, members) in &strata {
        let mut rng = rng_from_seed(derive_seed(seed, &format!("stratum-{k}")));
        chosen.extend(
            sample(&mut rng, members.len(), quotas[k])
                .into_iter()
                .map(|j| members[j]),
        );
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| pool[i].clone()).collect())
}

/// Number of instructions per object count.
pub fn strata_sizes(pool: &[Instruction]) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for i in pool {
        *out.entry(i.n_objects).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_entity_line() {
        let caps = parse_sentence_file("42", "[/EN#1/people A man] rides [/EN#2/vehicles a bike] .\n").unwrap();
        assert_eq!(caps.len(), 1);
        let c = &caps[0];
        assert_eq!(c.text, "A man rides a bike .");
        assert_eq!(c.entities.len(), 2);
        assert_eq!(
            (c.entities[0].chain_id.as_str(), c.entities[0].category(), c.entities[0].phrase.as_str()),
            ("1", "people", "A man")
        );
        assert_eq!(c.entities[0].span, (0, 2));
        assert_eq!(
            (c.entities[1].chain_id.as_str(), c.entities[1].category(), c.entities[1].phrase.as_str()),
            ("2", "vehicles", "a bike")
        );
        assert_eq!(c.entities[1].span, (3, 5));
    }

    #[test]
    fn markup_free_line_and_notvisual_pass_through() {
        let caps = parse_sentence_file("1", "Nothing to see here .\n[/EN#7/notvisual the weekend]\n").unwrap();
        assert_eq!(caps[0].text, "Nothing to see here .");
        assert!(caps[0].entities.is_empty());
        assert_eq!(caps[1].entities[0].category(), "notvisual");
        assert_eq!(caps[1].caption_index, 1);
    }

    #[test]
    fn multiple_categories_take_first() {
        let caps = parse_sentence_file("1", "[/EN#3/other/people a crowd] cheers").unwrap();
        assert_eq!(caps[0].entities[0].category(), "other");
        assert_eq!(caps[0].render_markup(), "[/EN#3/other/people a crowd] cheers");
    }

    #[test]
    fn malformed_markup_reports_line() {
        let err = parse_sentence_file("1", "fine line\n[/EN#1/people a man rides").unwrap_err();
        assert!(matches!(err, OpenSetError::MalformedMarkup { line: 2, .. }));
        let err = parse_sentence_file("1", "[/EN#/people a man]").unwrap_err();
        assert!(matches!(err, OpenSetError::MalformedMarkup { line: 1, .. }), "{err}");
        let err = parse_sentence_file("1", "a man] rides").unwrap_err();
        assert!(matches!(err, OpenSetError::MalformedMarkup { line: 1, .. }));
        let err = parse_sentence_file("1", "[/EN#1/people a [/EN#2/people man]]").unwrap_err();
        assert!(matches!(err, OpenSetError::MalformedMarkup { .. }));
    }

    const XML: &str = r#"<annotation>
  <filename>1.jpg</filename>
  <size><width>500</width><height>500</height><depth>3</depth></size>
  <object><name>5</name><bndbox><xmin>10</xmin><ymin>20</ymin><xmax>110</xmax><ymax>220</ymax></bndbox></object>
  <object><name>6</name><nobndbox>1</nobndbox><scene>1</scene></object>
  <object><name>7</name><bndbox><xmin>0</xmin><ymin>0</ymin><xmax>50</xmax><ymax>50</ymax></bndbox></object>
  <object><name>7</name><bndbox><xmin>60</xmin><ymin>60</ymin><xmax>90</xmax><ymax>90</ymax></bndbox></object>
</annotation>"#;

    #[test]
    fn box_file_examples() {
        let ann = parse_box_file(XML).unwrap();
        assert_eq!((ann.width, ann.height), (500, 500));
        assert_eq!(ann.boxes["5"], vec![[10.0, 20.0, 110.0, 220.0]]);
        assert!(!ann.boxes.contains_key("6"));
        assert_eq!(ann.boxes["7"], vec![[0.0, 0.0, 50.0, 50.0], [60.0, 60.0, 90.0, 90.0]]);
    }

    #[test]
    fn box_file_requires_size_and_coordinates() {
        let no_size = "<annotation><object><name>1</name></object></annotation>";
        assert!(matches!(parse_box_file(no_size), Err(OpenSetError::MalformedAnnotation(_))));
        let no_ymax = r#"<annotation><size><width>5</width><height>5</height></size>
            <object><name>1</name><bndbox><xmin>0</xmin><ymin>0</ymin><xmax>1</xmax></bndbox></object></annotation>"#;
        assert!(matches!(parse_box_file(no_ymax), Err(OpenSetError::MalformedAnnotation(_))));
    }

    fn ann(boxes: &[(&str, &[[f64; 4]])], size: u32) -> BoxAnnotation {
        BoxAnnotation {
            width: size,
            height: size,
            boxes: boxes.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect(),
        }
    }

    #[test]
    fn join_filters_and_merges() {
        let cap = &parse_sentence_file(
            "9",
            "[/EN#1/people A man] and [/EN#2/animals a dog] enjoy [/EN#3/notvisual the day]",
        )
        .unwrap()[0];
        let a = ann(
            &[
                ("1", &[[0.0, 0.0, 100.0, 100.0], [200.0, 0.0, 300.0, 100.0]]),
                ("2", &[[0.0, 200.0, 400.0, 400.0]]),
                ("3", &[[0.0, 0.0, 400.0, 400.0]]),
            ],
            400,
        );
        let instr = join_caption(cap, &a).unwrap();
        assert_eq!(instr.id, "9_0");
        assert_eq!(instr.n_objects, 2);
        assert_eq!(instr.objects[0].bbox.as_array(), [0.0, 0.0, 0.75, 0.25]);
        assert_eq!(instr.objects[0].head, "man");
        assert_eq!(instr.scenario, Scenario::OpenSet);
        assert!(instr.check().is_ok());
    }

    #[test]
    fn join_drops_scene_only_caption() {
        let cap = &parse_sentence_file("9", "[/EN#4/scene a park] at night").unwrap()[0];
        let a = ann(&[("4", &[[0.0, 0.0, 10.0, 10.0]])], 100);
        assert!(join_caption(cap, &a).is_none());
    }

    #[test]
    fn join_drops_ungrounded_entities() {
        let cap = &parse_sentence_file("9", "[/EN#4/people a kid] runs").unwrap()[0];
        assert!(join_caption(cap, &ann(&[], 100)).is_none());
    }

    #[test]
    fn quotas_exact_proportion() {
        let strata = BTreeMap::from([(1, 100), (2, 200), (3, 100)]);
        assert_eq!(allocate_quotas(&strata, 200), BTreeMap::from([(1, 50), (2, 100), (3, 50)]));
    }

    #[test]
    fn quotas_use_largest_remainder() {
        // exact shares 3.33.., 3.33.., 3.33.. -> one extra to the smallest key
        let strata = BTreeMap::from([(1, 1), (2, 1), (3, 1)]);
        assert_eq!(allocate_quotas(&strata, 10), BTreeMap::from([(1, 4), (2, 3), (3, 3)]));
    }

    #[test]
    fn target_larger_than_pool_rejected() {
        assert!(matches!(downsample(&[], 1, 0), Err(OpenSetError::TargetTooLarge { .. })));
    }
}
