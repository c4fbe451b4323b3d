//! Flat `key = value` run-configuration files.
//!
//! The format is line-oriented: one `key = value` pair per line, `#` starts
//! a comment, blanks are ignored. Readers must consume every key; unknown,
//! duplicate and missing keys are all errors that name the key.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::synth::SynthConfig;

pub struct Kv {
    origin: String,
    map: HashMap<String, (String, usize)>,
}

fn key_err(key: &str, detail: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        detail: detail.into(),
    }
}

impl Kv {
    pub fn parse(text: &str, origin: &str) -> Result<Kv> {
        let mut map = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(key_err(
                    line,
                    format!("{origin} line {}: expected 'key = value'", idx + 1),
                ));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), (value, idx + 1)).is_some() {
                return Err(key_err(
                    &key,
                    format!("{origin} line {}: duplicate key", idx + 1),
                ));
            }
        }
        Ok(Kv {
            origin: origin.to_string(),
            map,
        })
    }

    pub fn read(path: &Path) -> Result<Kv> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn take(&mut self, key: &str) -> Result<String> {
        self.map
            .remove(key)
            .map(|(v, _)| v)
            .ok_or_else(|| key_err(key, format!("missing required key in {}", self.origin)))
    }

    pub fn take_parse<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let raw = self.take(key)?;
        raw.parse::<T>()
            .map_err(|e| key_err(key, format!("unparsable value '{raw}': {e}")))
    }

    /// Comma-separated list; an empty value parses as an empty list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let raw = self.take(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|item| {
                item.trim()
                    .parse::<T>()
                    .map_err(|e| key_err(key, format!("unparsable list item '{item}': {e}")))
            })
            .collect()
    }

    /// Rejects any keys not consumed by the reader.
    pub fn finish(self) -> Result<()> {
        if let Some((key, (_, line))) = self.map.into_iter().min_by_key(|(_, (_, l))| *l) {
            return Err(key_err(
                &key,
                format!("unknown key at {} line {line}", self.origin),
            ));
        }
        Ok(())
    }
}

#[derive(Default)]
pub struct KvWriter {
    out: String,
}

impl KvWriter {
    pub fn new(header: &str) -> Self {
        KvWriter {
            out: format!("# {header}\n"),
        }
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.out.push_str(&format!("{key} = {value}\n"));
    }

    pub fn push_list<T: Display>(&mut self, key: &str, items: &[T]) {
        let joined = items
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.out.push_str(&format!("{key} = {joined}\n"));
    }

    pub fn into_string(self) -> String {
        self.out
    }
}

pub fn synth_config_to_string(cfg: &SynthConfig) -> String {
    let mut w = KvWriter::new("dfbnet synthetic dataset config");
    w.push("classes", cfg.classes);
    w.push("train_clips_per_class", cfg.train_clips_per_class);
    w.push("val_clips_per_class", cfg.val_clips_per_class);
    w.push("frames", cfg.frames);
    w.push("height", cfg.height);
    w.push("width", cfg.width);
    w.push("patch_frames", cfg.patch_frames);
    w.push("patch_height", cfg.patch_height);
    w.push("patch_width", cfg.patch_width);
    w.push("corr_len", cfg.corr_len);
    w.push("motif_amplitude", cfg.motif_amplitude);
    w.push("signal_ratio", cfg.signal_ratio);
    w.push("seed", cfg.seed);
    w.into_string()
}

pub fn synth_config_from_str(text: &str, origin: &str) -> Result<SynthConfig> {
    let mut kv = Kv::parse(text, origin)?;
    let cfg = SynthConfig {
        classes: kv.take_parse("classes")?,
        train_clips_per_class: kv.take_parse("train_clips_per_class")?,
        val_clips_per_class: kv.take_parse("val_clips_per_class")?,
        frames: kv.take_parse("frames")?,
        height: kv.take_parse("height")?,
        width: kv.take_parse("width")?,
        patch_frames: kv.take_parse("patch_frames")?,
        patch_height: kv.take_parse("patch_height")?,
        patch_width: kv.take_parse("patch_width")?,
        corr_len: kv.take_parse("corr_len")?,
        motif_amplitude: kv.take_parse("motif_amplitude")?,
        signal_ratio: kv.take_parse("signal_ratio")?,
        seed: kv.take_parse("seed")?,
    };
    kv.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_synth_config(path: &Path) -> Result<SynthConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    synth_config_from_str(&text, &path.display().to_string())
}

pub fn write_synth_config(cfg: &SynthConfig, path: &Path) -> Result<()> {
    std::fs::write(path, synth_config_to_string(cfg))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
