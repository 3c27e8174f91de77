//! Flag values with fallbacks to `--config` keys.

use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use slatelab::config::KeyValues;

#[derive(Default)]
pub struct Settings {
    kv: KeyValues,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::load(path).with_context(|| format!("reading config {}", path.display()))?;
        Ok(Self { kv })
    }

    /// The flag if given, else the config key, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => Ok(self.kv.get(key)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_config_beats_default() {
        let s = Settings { kv: KeyValues::parse("steps = 30\n").unwrap() };
        assert_eq!(s.pick(Some(5usize), "steps", 1).unwrap(), 5);
        assert_eq!(s.pick(None::<usize>, "steps", 1).unwrap(), 30);
        assert_eq!(s.pick(None::<usize>, "runs", 1).unwrap(), 1);
        assert!(s.pick(None::<bool>, "steps", true).is_err());
    }
}
