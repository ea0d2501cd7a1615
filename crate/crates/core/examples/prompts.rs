//! Render every prompt template with example bindings and print its hash.
//!
//! cargo run --example prompts [template-id]

use relshot::llm::{render_prompt, Bindings, TemplateId};
use relshot::model::RelationSpec;
use relshot::tagged::parse_tagged;

fn main() {
    let only = std::env::args().nth(1);
    let spec = RelationSpec {
        name: "per:city_of_birth".into(),
        description: "the city where the person was born".into(),
        subject_type: "PERSON".into(),
        object_type: "CITY".into(),
    };
    let support = parse_tagged("<subject>Maria Lopez</subject> was born in <object>Seville</object> in 1971 .").unwrap();
    let query = parse_tagged("<subject>Tom Hale</subject> , a native of <object>Leeds</object> , joined the band .").unwrap();

    let cases = [
        (TemplateId::BinaryRelation, Bindings::binary(&spec, std::slice::from_ref(&support), &query)),
        (TemplateId::MultiRelation, Bindings::multi(&[(&spec, std::slice::from_ref(&support))], &query)),
        (TemplateId::NerCheck, Bindings::ner(&query, "Leeds", "CITY")),
        (TemplateId::Paraphrase, Bindings::generation(&spec, &support, 4)),
        (TemplateId::Generate, Bindings::generation(&spec, &support, 4)),
        (TemplateId::Summarize, Bindings::summarize(&support)),
        (TemplateId::HybridPick, Bindings::pick(&spec, [&support, &query])),
        (TemplateId::SubjectObjectProbe, Bindings::probe(&spec, std::slice::from_ref(&support), "Tom Hale", "Leeds")),
    ];
    for (id, b) in cases {
        if only.as_deref().is_some_and(|o| o != id.as_str()) {
            continue;
        }
        println!("=== {id} ({}) ===", &id.hash()[..12]);
        println!("{}\n", render_prompt(id, &b).expect("all placeholders bound"));
    }
}
