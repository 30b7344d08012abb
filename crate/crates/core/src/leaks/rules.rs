//! Editable mapping tables for rule-based flow classification.

use std::collections::HashMap;
use std::path::Path;

use crate::kg::{parse_table, KgError};

use super::flowdroid::MethodSig;

const SOURCES: &str = include_str!("../../data/sources.tsv");
const SINKS: &str = include_str!("../../data/sinks.tsv");
const SDK_PREFIXES: &str = include_str!("../../data/sdk_prefixes.tsv");

pub const SOURCES_FILE: &str = "sources.tsv";
pub const SINKS_FILE: &str = "sinks.tsv";
pub const SDK_PREFIXES_FILE: &str = "sdk_prefixes.tsv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SinkClass {
    Network,
    Ipc,
    Sms,
    Log,
    File,
    Prefs,
    Storage,
}

impl SinkClass {
    /// Sinks through which data leaves the app.
    pub fn is_egress(self) -> bool {
        matches!(self, SinkClass::Network | SinkClass::Ipc | SinkClass::Sms)
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "network" => SinkClass::Network,
            "ipc" => SinkClass::Ipc,
            "sms" => SinkClass::Sms,
            "log" => SinkClass::Log,
            "file" => SinkClass::File,
            "prefs" => SinkClass::Prefs,
            "storage" => SinkClass::Storage,
            _ => return None,
        })
    }
}

/// API tables keyed by `class:method`, with `class:*` as a per-class fallback.
#[derive(Clone, Debug)]
struct ApiTable<T> {
    entries: HashMap<String, T>,
}

impl<T: Clone> ApiTable<T> {
    fn get(&self, sig: &MethodSig) -> Option<T> {
        self.entries
            .get(&sig.key())
            .or_else(|| self.entries.get(&format!("{}:*", sig.class)))
            .cloned()
    }
}

#[derive(Clone, Debug)]
pub struct RuleTables {
    sources: ApiTable<String>,
    sinks: ApiTable<SinkClass>,
    /// Longest prefix first.
    sdk_prefixes: Vec<(String, String)>,
}

impl RuleTables {
    pub fn from_tables(sources: &str, sinks: &str, sdk_prefixes: &str) -> Result<Self, KgError> {
        let sources = ApiTable { entries: parse_table(sources)?.into_iter().map(|(_, k, v)| (k, v)).collect() };
        let mut sink_entries = HashMap::new();
        for (line, api, class) in parse_table(sinks)? {
            let class = SinkClass::parse(&class).ok_or_else(|| KgError::Table { line, reason: format!("unknown sink class `{class}`") })?;
            sink_entries.insert(api, class);
        }
        let mut prefixes: Vec<(String, String)> = parse_table(sdk_prefixes)?.into_iter().map(|(_, p, n)| (p, n)).collect();
        prefixes.sort_by_key(|p| std::cmp::Reverse(p.0.len()));
        Ok(Self { sources, sinks: ApiTable { entries: sink_entries }, sdk_prefixes: prefixes })
    }

    pub fn from_dir(dir: &Path) -> Result<Self, KgError> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        Self::from_tables(&read(SOURCES_FILE)?, &read(SINKS_FILE)?, &read(SDK_PREFIXES_FILE)?)
    }

    /// Data phrase for a source API.
    pub fn source_data(&self, sig: &MethodSig) -> Option<String> {
        self.sources.get(sig)
    }

    pub fn sink_class(&self, sig: &MethodSig) -> Option<SinkClass> {
        self.sinks.get(sig)
    }

    /// Third-party name for a fully qualified class.
    pub fn sdk_for_class(&self, class: &str) -> Option<&str> {
        self.sdk_prefixes
            .iter()
            .find(|(prefix, _)| class.starts_with(prefix.as_str()))
            .map(|(_, name)| name.as_str())
    }
}

impl Default for RuleTables {
    fn default() -> Self {
        Self::from_tables(SOURCES, SINKS, SDK_PREFIXES).expect("built-in rule tables parse")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(s: &str) -> MethodSig {
        MethodSig::find(s).unwrap()
    }

    #[test]
    fn wildcard_and_exact_lookups() {
        let t = RuleTables::default();
        assert_eq!(t.sink_class(&sig("<android.util.Log: int d(java.lang.String,java.lang.String)>")), Some(SinkClass::Log));
        assert_eq!(
            t.sink_class(&sig("<java.net.HttpURLConnection: java.io.OutputStream getOutputStream()>")),
            Some(SinkClass::Network)
        );
        assert_eq!(t.sink_class(&sig("<com.example.Foo: void bar()>")), None);
        assert_eq!(
            t.source_data(&sig("<android.telephony.TelephonyManager: java.lang.String getDeviceId()>")).as_deref(),
            Some("device id")
        );
    }

    #[test]
    fn longest_sdk_prefix_wins() {
        let t = RuleTables::default();
        assert_eq!(t.sdk_for_class("com.google.firebase.analytics.FirebaseAnalytics"), Some("firebase"));
        assert_eq!(t.sdk_for_class("com.google.android.gms.ads.AdView"), Some("admob"));
        assert_eq!(t.sdk_for_class("com.example.app.Main"), None);
    }

    #[test]
    fn bad_sink_class_is_reported_with_line() {
        assert!(matches!(RuleTables::from_tables("", "# c\na:b\tteleport\n", ""), Err(KgError::Table { line: 2, .. })));
    }
}
