//! Parse, inspect and re-render tagged sentences; show each rejection class.
//!
//! cargo run --example parse_tagged

use relshot::tagged::{parse_tagged, TaggedSentence};

fn main() {
    let raw = "<object>Pierre Reau</object> , director of <subject>New Fabris</subject> , said on Friday .";
    let s = parse_tagged(raw).expect("well formed");
    println!("plain text : {}", s.text());
    println!("subject    : {:?} at {:?}", s.subject().surface, s.subject().range());
    println!("object     : {:?} at {:?}", s.object().surface, s.object().range());
    assert_eq!(s.render(), raw);
    println!("round trip : ok");

    // Spans over plain text are the other way in.
    let built = TaggedSentence::new("Ann met Bob", 0..3, 8..11).unwrap();
    println!("built      : {}", built.render());

    for bad in [
        "<subject>A</subject> met B",
        "<subject>A</subject> and <subject>C</subject> met <object>B</object>",
        "<subject>A met <object>B</object>",
        "<subject></subject> met <object>B</object>",
        "",
    ] {
        println!("{bad:<70} -> {}", parse_tagged(bad).unwrap_err());
    }
}
