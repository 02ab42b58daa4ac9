#![allow(dead_code)]

use layoutbench::geometry::RelationKind;
use layoutbench::model::{Attribute, AttributeClass, Relation, VocabObject, Vocabulary};
use layoutbench::BoundingBox;

pub fn vocab() -> Vocabulary {
    let objects = [
        "apple", "ball", "bench", "bicycle", "bird", "book", "cat", "chair", "clock", "dog",
        "elephant", "fire hydrant", "horse", "kite", "lamp", "mug", "teddy bear", "umbrella",
    ];
    let attributes = [
        ("red", AttributeClass::Color),
        ("blue", AttributeClass::Color),
        ("green", AttributeClass::Color),
        ("orange", AttributeClass::Color),
        ("yellow", AttributeClass::Color),
        ("round", AttributeClass::Shape),
        ("square", AttributeClass::Shape),
        ("wooden", AttributeClass::Material),
        ("metal", AttributeClass::Material),
        ("shiny", AttributeClass::Appearance),
        ("fluffy", AttributeClass::Appearance),
        ("big", AttributeClass::Dimension),
        ("tiny", AttributeClass::Dimension),
    ];
    let relations = [
        ("above", RelationKind::Above),
        ("below", RelationKind::Below),
        ("to the left of", RelationKind::LeftOf),
        ("to the right of", RelationKind::RightOf),
        ("far from", RelationKind::FarFrom),
        ("near", RelationKind::Near),
        ("next to", RelationKind::Near),
    ];
    Vocabulary {
        objects: objects
            .iter()
            .map(|t| VocabObject { text: t.to_string(), plural: false })
            .collect(),
        attributes: attributes
            .iter()
            .map(|(t, c)| Attribute { text: t.to_string(), class: *c })
            .collect(),
        relations: relations
            .iter()
            .map(|(t, k)| Relation { text: t.to_string(), kind: *k })
            .collect(),
    }
}

pub fn bx(c: [f64; 4]) -> BoundingBox {
    BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap()
}
