//! Configuration precedence and the startup echo.
//!
//! Values resolve as flags over config file over environment over built-in
//! defaults. Each resolved value remembers its source so the startup output
//! shows not just the effective configuration but where every piece of it
//! came from.

use std::fmt::Display;

pub struct Resolved<T> {
    pub value: T,
    pub source: &'static str,
}

pub fn pick<T>(flag: Option<T>, file: Option<T>, env: Option<T>, default: T) -> Resolved<T> {
    if let Some(value) = flag {
        return Resolved { value, source: "flag" };
    }
    if let Some(value) = file {
        return Resolved { value, source: "config file" };
    }
    if let Some(value) = env {
        return Resolved { value, source: "environment" };
    }
    Resolved { value: default, source: "default" }
}

/// Like [`pick`] but for settings with no default at all.
pub fn pick_opt<T>(flag: Option<T>, file: Option<T>, env: Option<T>) -> Option<Resolved<T>> {
    if let Some(value) = flag {
        return Some(Resolved { value, source: "flag" });
    }
    if let Some(value) = file {
        return Some(Resolved { value, source: "config file" });
    }
    env.map(|value| Resolved { value, source: "environment" })
}

/// Collects `key = value [source]` lines and prints them as one block.
#[derive(Default)]
pub struct ConfigEcho {
    entries: Vec<(String, String, &'static str)>,
}

impl ConfigEcho {
    pub fn new() -> Self {
        ConfigEcho::default()
    }

    pub fn add<T: Display>(&mut self, key: &str, resolved: &Resolved<T>) {
        self.entries.push((key.to_string(), resolved.value.to_string(), resolved.source));
    }

    pub fn add_value<T: Display>(&mut self, key: &str, value: T, source: &'static str) {
        self.entries.push((key.to_string(), value.to_string(), source));
    }

    pub fn print(&self, subcommand: &str) {
        println!("{subcommand} configuration:");
        for (key, value, source) in &self.entries {
            println!("  {key} = {value}  [{source}]");
        }
    }
}
