// Generates span-anchored QA pairs from a scripted chat model. Swap
// `ScriptedChatProvider` for `OpenAiChatClient` to use a live endpoint.

use chunkbench::corpus::Document;
use chunkbench::synthgen::chat::ScriptedChatProvider;
use chunkbench::synthgen::{generate_qa, GenerationParams, GenerationRequest, PromptTemplate};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let doc = Document::new(
        "apt",
        "The loader sideloads a signed DLL.\nThe implant beacons over HTTPS every 300 seconds.",
    )?;
    let template = PromptTemplate::get("qa-anchored-v1").ok_or("unknown template")?;
    let prompt = template.render(&doc, 2, 2);
    println!("system prompt starts: {:?}", prompt[0].content.lines().next().unwrap_or(""));

    // A reasoning model's reply: thinking, prose, then the JSON payload.
    // The second answer quotes text that is not in the document.
    let reply = r#"<think>Two facts stand out.</think>
Sure, here are the questions:
```json
[
  {"question": "How often does the implant beacon?", "excerpts": ["beacons over HTTPS   every 300 seconds."]},
  {"question": "Which cipher protects the traffic?", "excerpts": ["traffic is encrypted with RC4"]}
]
```"#;
    let provider = ScriptedChatProvider::new("deepseek-r1-scripted", [reply]);
    let params = GenerationParams {
        num_questions: 2,
        max_retries: 0,
        ..GenerationParams::default()
    };
    let out = generate_qa(&provider, &GenerationRequest { doc: &doc, params })?;

    for pair in &out.pairs {
        let s = &pair.spans[0];
        println!("{} {:?} -> [{}, {}) {:?}", pair.query_id, pair.question, s.start, s.end, s.excerpt);
    }
    for r in &out.rejections {
        println!("rejected {:?}: {:?}", r.question, r.reason);
    }
    println!("{}", serde_json::to_string(&out.pairs[0].provenance)?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("example failed");
}
