//! Ask a live OpenAI-compatible endpoint one yes/no question.
//!
//! RELSHOT_ENDPOINT=http://localhost:8000/v1 RELSHOT_MODEL=Qwen/Qwen3-4B \
//!     cargo run --example openai_endpoint
//!
//! `RELSHOT_API_KEY` is sent as a bearer token when set. Without an endpoint
//! the example prints the request body it would send.

use std::sync::Arc;

use relshot::llm::{render_prompt, Bindings, ChatRequest, DecodingProfile, Gateway, GatewayConfig, HttpConfig, HttpTransport, TemplateId};
use relshot::model::RelationSpec;
use relshot::tagged::parse_tagged;

fn main() -> anyhow::Result<()> {
    let spec = RelationSpec {
        name: "per:employee_of".into(),
        description: "the organization the person works for".into(),
        subject_type: "PERSON".into(),
        object_type: "ORGANIZATION".into(),
    };
    let support = parse_tagged("<subject>Ed Park</subject> , an engineer at <object>Boeing</object> , said").unwrap();
    let query = parse_tagged("<object>Reuters</object> reporter <subject>Anna Berg</subject> filed the story").unwrap();
    let bindings = Bindings::binary(&spec, &[support], &query);

    let model = std::env::var("RELSHOT_MODEL").unwrap_or_else(|_| "Qwen/Qwen3-4B".into());
    let Ok(endpoint) = std::env::var("RELSHOT_ENDPOINT") else {
        let transport = HttpTransport::new(HttpConfig::new("http://localhost:8000/v1", &model));
        let request = ChatRequest {
            request_id: 0,
            attempt: 0,
            template: TemplateId::BinaryRelation,
            prompt: render_prompt(TemplateId::BinaryRelation, &bindings)?,
            bindings,
            decoding: DecodingProfile::preset("qwen")?,
            logprobs: true,
            top_logprobs: Some(20),
            choices: vec!["yes".into(), "no".into()],
        };
        println!("RELSHOT_ENDPOINT not set; request body would be:");
        println!("{}", serde_json::to_string_pretty(&transport.body(&request))?);
        return Ok(());
    };

    let gateway = Gateway::new(Arc::new(HttpTransport::new(HttpConfig::new(endpoint, model))), GatewayConfig::default());
    let d = gateway.binary_decide(TemplateId::BinaryRelation, &bindings)?;
    println!("answer {} via {:?} (yes {:?}, no {:?})", if d.answer { "yes" } else { "no" }, d.method, d.score_yes, d.score_no);
    println!("{:?}", gateway.stats());
    Ok(())
}
