//! Regenerates `fixtures/corpus/replay.json` by running the corpus pipeline in
//! record mode against a scripted stand-in model.
//!
//! The stand-in is not a language model. Policy sentences get hand-written
//! answers (including a malformed reply and two missed negations, so the retry
//! paths are recorded), baseline summaries are built from the XML text, and
//! baseline judgments use naive keyword matching that ignores negation.
//! Token counts are estimated as characters / 4 and latencies are synthetic.
//!
//! ```text
//! cargo run -p policheck-cli --example record_fixtures
//! ```

#[path = "../tests/common/mod.rs"]
mod common;

use std::sync::Arc;

use policheck_core::llm::{ChatRequest, Completion, Transport, TransportError};

/// (sentence, first answer, answer to the negation re-check, answer to the reformat request)
const SENTENCES: &[(&str, &str, Option<&str>, Option<&str>)] = &[
    ("SunnyDay Weather Privacy Policy", "[]", None, None),
    (
        "We collect your precise location to show local forecasts.",
        r#"[{"actor": "first_party", "action": "collect", "data": "precise location"}]"#,
        None,
        None,
    ),
    (
        "We share location data with advertising partners.",
        r#"[{"actor": "first_party", "action": "share", "data": "location data"}]"#,
        None,
        None,
    ),
    (
        "We do not collect your contacts.",
        r#"[{"actor": "first_party", "action": "do not collect", "data": "contacts"}]"#,
        None,
        None,
    ),
    (
        "We never sell your device identifier.",
        r#"[{"actor": "first_party", "action": "never sell", "data": "device identifier"}]"#,
        None,
        None,
    ),
    ("Contact us at privacy@sunnyday.example with any questions.", "[]", None, None),
    ("FitPulse Privacy Policy", "[]", None, None),
    ("Information we collect", "[]", None, None),
    (
        "We collect your location and your email address when you create an account.",
        r#"[{"actor": "first_party", "action": "collect", "data": "location"},
 {"actor": "first_party", "action": "collect", "data": "email address"}]"#,
        None,
        None,
    ),
    (
        "Firebase Analytics may collect and transmit your device identifier to help us understand app usage.",
        r#"[{"actor": "third_party:firebase analytics", "action": "collect", "data": "device identifier"},
 {"actor": "third_party:firebase analytics", "action": "transmit", "data": "device identifier"}]"#,
        None,
        None,
    ),
    ("Sharing", "[]", None, None),
    (
        "We do not share your location with third parties.",
        r#"[{"actor": "first_party", "action": "do not share", "data": "location"}]"#,
        None,
        None,
    ),
    (
        "Third-party advertising SDKs may collect and share your advertising identifier.",
        r#"[{"actor": "third_party", "action": "collect", "data": "advertising identifier"},
 {"actor": "third_party", "action": "share", "data": "advertising identifier"}]"#,
        None,
        None,
    ),
    ("Chatterbox Messenger Privacy Policy", "[]", None, None),
    (
        "We access your contacts to help you find friends.",
        r#"[{"actor": "first_party", "action": "access", "data": "contacts"}]"#,
        None,
        None,
    ),
    (
        "Your contact list is uploaded to our servers to match accounts.",
        r#"[{"actor": "first_party", "action": "upload", "data": "contact list"}]"#,
        None,
        None,
    ),
    (
        "We read SMS messages only to verify your phone number, and we do not store or share your text messages.",
        r#"[{"actor": "first_party", "action": "read", "data": "SMS messages"},
 {"actor": "first_party", "action": "store or share", "data": "text messages"}]"#,
        Some(
            r#"[{"actor": "first_party", "action": "read", "data": "SMS messages"},
 {"actor": "first_party", "action": "do not store", "data": "text messages"},
 {"actor": "first_party", "action": "do not share", "data": "text messages"}]"#,
        ),
        None,
    ),
    (
        "We collect your phone number.",
        r#"[{"actor": "first_party", "action": "collect", "data": "phone number"}]"#,
        None,
        None,
    ),
    ("PixelPuzzle Privacy Policy", "[]", None, None),
    (
        "We do not collect any personal information.",
        r#"[{"actor": "first_party", "action": "do not collect", "data": "personal information"}]"#,
        None,
        None,
    ),
    (
        "Our game shows ads provided by Unity Ads, which may collect your advertising identifier and device identifiers.",
        r#"[{"actor": "Unity Ads", "action": "collect", "data": "advertising identifier"},
 {"actor": "Unity Ads", "action": "collect", "data": "device identifiers"}]"#,
        None,
        None,
    ),
    (
        "Advertisers may share your advertising identifier with their partners.",
        r#"[{"actor": "advertisers", "action": "share", "data": "advertising identifier"}]"#,
        None,
        None,
    ),
    ("QuickShop Privacy Policy", "[]", None, None),
    (
        "When you place an order we collect your email address and phone number.",
        "Here are the triples:\n- we / collect / email address\n- we / collect / phone number",
        None,
        Some(
            r#"[{"actor": "first_party", "action": "collect", "data": "email address"},
 {"actor": "first_party", "action": "collect", "data": "phone number"}]"#,
        ),
    ),
    (
        "We share your email address with our delivery partners.",
        r#"[{"actor": "first_party", "action": "share", "data": "email address"}]"#,
        None,
        None,
    ),
    (
        "We use your location to find nearby stores; we do not share location with advertisers.",
        r#"[{"actor": "first_party", "action": "use", "data": "location"},
 {"actor": "first_party", "action": "share", "data": "location"}]"#,
        Some(
            r#"[{"actor": "first_party", "action": "use", "data": "location"},
 {"actor": "first_party", "action": "do not share", "data": "location"}]"#,
        ),
        None,
    ),
    (
        "We use the Facebook SDK, and Facebook may collect your advertising identifier.",
        r#"[{"actor": "facebook", "action": "collect", "data": "advertising identifier"}]"#,
        None,
        None,
    ),
    ("NoteKeeper Privacy Policy", "[]", None, None),
    (
        "NoteKeeper stores your notes on your device.",
        r#"[{"actor": "first_party", "action": "store", "data": "notes"}]"#,
        None,
        None,
    ),
    (
        "We do not collect your location, contacts or device identifiers.",
        r#"[{"actor": "first_party", "action": "do not collect", "data": "location"},
 {"actor": "first_party", "action": "do not collect", "data": "contacts"},
 {"actor": "first_party", "action": "do not collect", "data": "device identifiers"}]"#,
        None,
        None,
    ),
    (
        "We may share your email address with our cloud backup provider if you enable backup.",
        r#"[{"actor": "first_party", "action": "share", "data": "email address"}]"#,
        None,
        None,
    ),
];

/// Source API fragment → word the keyword judge looks for in the policy.
const KEYWORDS: &[(&str, &str)] = &[
    ("getLastKnownLocation", "location"),
    ("getDeviceId", "device identifier"),
    ("getImei", "imei"),
    ("getLine1Number", "phone number"),
    ("Settings$Secure", "android id"),
    ("AdvertisingIdClient", "advertising identifier"),
    ("ContactsContract", "contact"),
    ("getMacAddress", "mac address"),
    ("getMessageBody", "sms"),
    ("getAccounts", "email"),
    ("getInstalledPackages", "installed"),
    ("BatteryManager", "battery"),
];

fn between<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let from = text.find(start).map(|i| i + start.len()).expect("prompt section");
    let rest = &text[from..];
    rest.find(end).map_or(rest, |i| &rest[..i])
}

fn unescape(s: &str) -> String {
    s.replace("&lt;", "<").replace("&gt;", ">").replace("&quot;", "\"").replace("&amp;", "&")
}

fn attribute(tag: &str, name: &str) -> Option<String> {
    let key = format!("{name}=\"");
    let from = tag.find(&key)? + key.len();
    let len = tag[from..].find('"')?;
    Some(unescape(&tag[from..from + len]))
}

/// `<class: ret name(params)>` inside a Jimple statement.
fn callee(statement: &str) -> String {
    match (statement.find('<'), statement.rfind('>')) {
        (Some(a), Some(b)) if b > a => statement[a..=b].to_string(),
        _ => statement.to_string(),
    }
}

/// Flow summary for one XML chunk: one line per sink with its sources.
fn summarize(xml: &str) -> String {
    let mut lines = Vec::new();
    let mut pending: Option<(String, String)> = None;
    let mut sources: Vec<String> = Vec::new();
    let flush = |sink: Option<(String, String)>, sources: &mut Vec<String>, lines: &mut Vec<String>| {
        if let Some((callee, method)) = sink {
            let from = if sources.is_empty() { "an unlisted source".to_string() } else { sources.join(" and ") };
            lines.push(format!("- Data from {from} reaches {callee} in method {method}."));
        } else if !sources.is_empty() {
            lines.push(format!("- Data from {} reaches a sink listed earlier in the file.", sources.join(" and ")));
        }
        sources.clear();
    };
    let mut rest = xml;
    while let Some(i) = rest.find('<') {
        rest = &rest[i..];
        let end = rest.find('>').map_or(rest.len(), |e| e + 1);
        let tag = &rest[..end];
        if tag.starts_with("<Sink ") {
            flush(pending.take(), &mut sources, &mut lines);
            if let (Some(stmt), Some(method)) = (attribute(tag, "Statement"), attribute(tag, "Method")) {
                pending = Some((callee(&stmt), method));
            }
        } else if tag.starts_with("<Source ") {
            if let Some(stmt) = attribute(tag, "Statement") {
                sources.push(callee(&stmt));
            }
        } else if tag.starts_with("</Result") {
            flush(pending.take(), &mut sources, &mut lines);
        }
        rest = &rest[end..];
    }
    flush(pending.take(), &mut sources, &mut lines);
    if lines.is_empty() {
        "No data flows reported.".to_string()
    } else {
        lines.join("\n")
    }
}

fn methods_in(summary: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in summary.lines() {
        if let Some(i) = line.find(" in method ") {
            let m = line[i + " in method ".len()..].trim_end_matches('.').to_string();
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    out
}

fn judge(method: &str, summary: &str, policy: &str) -> String {
    let lower = policy.to_lowercase();
    let mut keywords: Vec<&str> = Vec::new();
    for line in summary.lines().filter(|l| l.contains(&format!(" in method {method}"))) {
        for (api, kw) in KEYWORDS {
            if line.contains(api) && !keywords.contains(kw) {
                keywords.push(kw);
            }
        }
    }
    match keywords.iter().find(|kw| !lower.contains(**kw)) {
        Some(missing) => format!(
            "The method handles {} data, which the privacy policy does not mention.\nVERDICT: INCONSISTENT",
            missing
        ),
        None => {
            let kw = keywords.first().copied().unwrap_or("data");
            let sentence = policy
                .split(['.', '\n'])
                .find(|s| s.to_lowercase().contains(kw))
                .map(str::trim)
                .unwrap_or("the policy");
            format!("The policy says \"{sentence}\", which covers what this method does.\nVERDICT: CONSISTENT")
        }
    }
}

struct ScriptedModel;

impl ScriptedModel {
    fn answer(&self, prompt: &str) -> String {
        let sentence = || between(prompt, "SENTENCE:\n", "\n\nJSON:").trim().to_string();
        let lookup = |s: &str| {
            SENTENCES
                .iter()
                .find(|(text, ..)| *text == s)
                .unwrap_or_else(|| panic!("no scripted answer for sentence {s:?}"))
        };
        if prompt.starts_with("You convert one sentence") {
            lookup(&sentence()).1.to_string()
        } else if prompt.starts_with("The sentence below contains a negation word") {
            let entry = lookup(&sentence());
            entry.2.unwrap_or(entry.1).to_string()
        } else if prompt.contains("keys \"actor\", \"action\" and \"data\" (use [] when") {
            lookup(&sentence()).3.expect("reformat requested for a sentence with a valid answer").to_string()
        } else if prompt.starts_with("Rewrite the following privacy inconsistency finding") {
            let finding = between(prompt, "FINDING:\n", "\u{0}");
            let joined: Vec<&str> = finding.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            format!("For the developer: {}", joined.join(" "))
        } else if prompt.starts_with("Below is part of a FlowDroid") {
            summarize(between(prompt, "XML:\n", "\n\nSUMMARY:"))
        } else if prompt.contains("identify the app methods that are relevant") {
            let summary = between(prompt, "SUMMARY:\n", "\n\nJSON:");
            if summary.contains("com.quickshop.store") {
                "The relevant methods are OrderClient.submit, StoreLocator.onFound and the Facebook flush method.".to_string()
            } else {
                serde_json::to_string(&methods_in(summary)).unwrap()
            }
        } else if prompt.contains("JSON array of method signature") {
            serde_json::to_string(&methods_in(between(prompt, "SUMMARY:\n", "\n\nJSON:"))).unwrap()
        } else if prompt.starts_with("Decide whether the behaviour") {
            let method = between(prompt, "METHOD:\n", "\n\nDATA-FLOW SUMMARY:").trim();
            let summary = between(prompt, "DATA-FLOW SUMMARY:\n", "\n\nPRIVACY POLICY:");
            let policy = between(prompt, "PRIVACY POLICY:\n", "\n\nExplain briefly");
            judge(method, summary, policy)
        } else {
            panic!("unexpected prompt:\n{prompt}")
        }
    }
}

impl Transport for ScriptedModel {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<Completion, TransportError> {
        let text = self.answer(request.prompt);
        let prompt_tokens = request.prompt.chars().count().div_ceil(4) as u64;
        let completion_tokens = text.chars().count().div_ceil(4) as u64;
        Ok(Completion {
            text,
            prompt_tokens,
            completion_tokens,
            elapsed_ms: Some(200 + prompt_tokens / 2 + 12 * completion_tokens),
        })
    }
}

fn main() {
    let fixture = common::replay_fixture();
    if fixture.exists() {
        std::fs::remove_file(&fixture).expect("remove old fixture");
    }
    let out = tempfile::tempdir().expect("temp dir");
    let flags = vec!["--backend".to_string(), "record".into(), "--fixture".into(), fixture.display().to_string()];
    let steps = common::run_pipeline(out.path(), &flags, Some(Arc::new(ScriptedModel)));
    for step in &steps {
        println!("exit {}: {}", step.code, step.args[0]);
        assert!(step.code < 2, "step failed: {:?}", step.args);
    }
    println!("wrote {}", fixture.display());
}
