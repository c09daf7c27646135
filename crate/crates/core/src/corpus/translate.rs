//! English → Nepali translation behind a pluggable client, with a persistent
//! append-only cache keyed by the SHA-256 of the English text.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use super::CaptionRecord;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// A translation client. Implementations must be callable from several
/// threads at once.
pub trait Translator: Send + Sync {
    fn translate(&self, english: &str) -> std::result::Result<String, String>;
}

impl<F> Translator for F
where
    F: Fn(&str) -> std::result::Result<String, String> + Send + Sync,
{
    fn translate(&self, english: &str) -> std::result::Result<String, String> {
        self(english)
    }
}

/// Runs an external program per caption: English on stdin, Nepali on stdout.
#[derive(Debug, Clone)]
pub struct CommandTranslator {
    program: String,
    args: Vec<String>,
}

impl CommandTranslator {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }

    /// Splits a command line on whitespace (no shell quoting).
    pub fn from_command_line(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace().map(String::from);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty translator command".into()))?;
        Ok(Self::new(program, parts.collect()))
    }
}

impl Translator for CommandTranslator {
    fn translate(&self, english: &str) -> std::result::Result<String, String> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("spawn {}: {e}", self.program))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(english.as_bytes())
            .map_err(|e| e.to_string())?;
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
        String::from_utf8(out.stdout)
            .map(|s| s.trim().to_string())
            .map_err(|e| e.to_string())
    }
}

pub fn english_key(english: &str) -> String {
    hex::encode(Sha256::digest(english.as_bytes()))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// `english-hash<TAB>nepali` lines. Appends are serialized under a lock and
/// written as one line each, so a key is either fully present or absent.
#[derive(Debug, Default)]
pub struct TranslationCache {
    entries: Mutex<HashMap<String, String>>,
    file: Mutex<Option<(PathBuf, File)>>,
}

impl TranslationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) an on-disk cache. Later lines win on duplicate keys.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
            for line in reader.lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                // a torn final line from an interrupted append is ignored
                if let Some((key, value)) = line.split_once('\t') {
                    if key.len() == 64 {
                        entries.insert(key.to_string(), unescape(value));
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            entries: Mutex::new(entries),
            file: Mutex::new(Some((path.to_path_buf(), file))),
        })
    }

    pub fn get(&self, english: &str) -> Option<String> {
        self.entries.lock().unwrap().get(&english_key(english)).cloned()
    }

    pub fn insert(&self, english: &str, nepali: &str) -> Result<()> {
        let key = english_key(english);
        let mut file = self.file.lock().unwrap();
        if let Some((path, f)) = file.as_mut() {
            let line = format!("{key}\t{}\n", escape(nepali));
            f.write_all(line.as_bytes()).map_err(|e| Error::io(&*path, e))?;
        }
        self.entries.lock().unwrap().insert(key, nepali.to_string());
        Ok(())
    }

    /// Seeds from already-translated records (the offline source).
    pub fn seed_from(&self, records: &[CaptionRecord]) -> Result<usize> {
        let mut added = 0;
        for r in records.iter().filter(|r| !r.nepali.is_empty()) {
            if self.get(&r.english).as_deref() != Some(r.nepali.as_str()) {
                self.insert(&r.english, &r.nepali)?;
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct TranslateOptions {
    /// Attempts after the first failure.
    pub max_retries: u32,
    /// Sleep before retry `k` is `retry_backoff * k`.
    pub retry_backoff: Duration,
    /// Minimum spacing between client requests across all threads.
    pub min_interval: Duration,
    pub exec: Exec,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        Self {
            max_retries: 3,
            retry_backoff: Duration::from_millis(500),
            min_interval: Duration::from_millis(100),
            exec: Exec::default(),
        }
    }
}

struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let sleep_for = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        std::thread::sleep(sleep_for);
    }
}

/// Fills `nepali` on every record. Cache hits never reach the client; misses
/// are translated (deduplicated by English text, fanned out per `opts.exec`)
/// and written back to the cache. With `translator = None` the call is
/// offline and any miss is an error.
pub fn translate_corpus(
    mut records: Vec<CaptionRecord>,
    translator: Option<&dyn Translator>,
    cache: &TranslationCache,
    opts: &TranslateOptions,
) -> Result<Vec<CaptionRecord>> {
    let mut missing: Vec<(String, String)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for r in &records {
        if cache.get(&r.english).is_none() && seen.insert(r.english.clone()) {
            missing.push((r.english.clone(), r.video_id.clone()));
        }
    }

    if let Some((_, video_id)) = missing.first() {
        let Some(client) = translator else {
            return Err(Error::MissingTranslation {
                video_id: video_id.clone(),
            });
        };
        let limiter = RateLimiter {
            interval: opts.min_interval,
            next: Mutex::new(Instant::now()),
        };
        let results = opts.exec.map(&missing, |(english, video_id)| {
            let mut attempt = 0;
            loop {
                limiter.wait();
                match client.translate(english) {
                    Ok(nepali) if !nepali.trim().is_empty() => {
                        cache.insert(english, nepali.trim())?;
                        return Ok(());
                    }
                    Ok(_) if attempt >= opts.max_retries => {
                        return Err(Error::TranslationFailed {
                            video_id: video_id.clone(),
                            reason: "empty translation".into(),
                        })
                    }
                    Err(reason) if attempt >= opts.max_retries => {
                        return Err(Error::TranslationFailed {
                            video_id: video_id.clone(),
                            reason,
                        })
                    }
                    _ => {
                        attempt += 1;
                        log::debug!("retrying translation for {video_id} (attempt {attempt})");
                        std::thread::sleep(opts.retry_backoff * attempt);
                    }
                }
            }
        });
        results.into_iter().collect::<Result<Vec<()>>>()?;
    }

    for r in &mut records {
        r.nepali = cache.get(&r.english).ok_or_else(|| Error::MissingTranslation {
            video_id: r.video_id.clone(),
        })?;
    }
    Ok(records)
}
