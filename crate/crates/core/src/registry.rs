//! Name-keyed registries of interchangeable strategies.
//!
//! Pressure laws, viscosity laws and pencil eigensolvers are all selected at
//! runtime from a name in the run configuration. Each family keeps a
//! [`Registry`] mapping that name to a constructor and the parameter keys the
//! constructor understands, so that configuration validation can reject
//! unknown keys before anything is built.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Flat parameters for one strategy instance, keyed by the trailing
/// component of the configuration key (`K`, `gamma`, `eps`, ...).
pub type Params = BTreeMap<String, String>;

/// Constructor stored in a registry.
pub type Factory<T> = fn(&Params) -> Result<Arc<T>>;

struct Entry<T: ?Sized> {
    factory: Factory<T>,
    keys: &'static [&'static str],
    summary: &'static str,
}

pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: BTreeMap<&'static str, Entry<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: BTreeMap::new(),
        }
    }

    /// Register a constructor under `name`. Later registrations replace earlier ones.
    pub fn register(
        &mut self,
        name: &'static str,
        keys: &'static [&'static str],
        summary: &'static str,
        factory: Factory<T>,
    ) {
        self.entries.insert(
            name,
            Entry {
                factory,
                keys,
                summary,
            },
        );
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    /// `(name, accepted keys, summary)` for every entry, sorted by name.
    pub fn describe(&self) -> Vec<(&'static str, &'static [&'static str], &'static str)> {
        self.entries
            .iter()
            .map(|(n, e)| (*n, e.keys, e.summary))
            .collect()
    }

    pub fn accepted_keys(&self, name: &str) -> Result<&'static [&'static str]> {
        self.entries
            .get(name)
            .map(|e| e.keys)
            .ok_or_else(|| self.unknown(name))
    }

    /// Build the strategy `name`, rejecting parameters it does not accept.
    pub fn build(&self, name: &str, params: &Params) -> Result<Arc<T>> {
        let entry = self.entries.get(name).ok_or_else(|| self.unknown(name))?;
        if let Some(bad) = params.keys().find(|k| !entry.keys.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "{} `{}` does not accept parameter `{}` (accepted: {})",
                self.family,
                name,
                bad,
                entry.keys.join(", ")
            )));
        }
        (entry.factory)(params)
    }

    fn unknown(&self, name: &str) -> Error {
        Error::Config(format!(
            "unknown {} `{}` (known: {})",
            self.family,
            name,
            self.names().join(", ")
        ))
    }
}

/// Required floating-point parameter.
pub fn param_f64(params: &Params, key: &str) -> Result<f64> {
    let raw = params
        .get(key)
        .ok_or_else(|| Error::Config(format!("missing parameter `{key}`")))?;
    parse_f64(key, raw)
}

/// Optional floating-point parameter with a default.
pub fn param_f64_or(params: &Params, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        Some(raw) => parse_f64(key, raw),
        None => Ok(default),
    }
}

pub(crate) fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{raw}` as a number")))?;
    if !v.is_finite() {
        return Err(Error::Config(format!("`{key}`: value must be finite")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape: Send + Sync {
        fn area(&self) -> f64;
    }
    struct Square(f64);
    impl Shape for Square {
        fn area(&self) -> f64 {
            self.0 * self.0
        }
    }

    fn square(p: &Params) -> Result<Arc<dyn Shape>> {
        Ok(Arc::new(Square(param_f64(p, "side")?)))
    }

    #[test]
    fn builds_by_name_and_rejects_unknowns() {
        let mut reg: Registry<dyn Shape> = Registry::new("shape");
        reg.register("square", &["side"], "a square", square);
        let mut p = Params::new();
        p.insert("side".into(), "3".into());
        assert_eq!(reg.build("square", &p).unwrap().area(), 9.0);

        assert!(matches!(reg.build("circle", &p), Err(Error::Config(_))));
        p.insert("radius".into(), "1".into());
        let err = reg.build("square", &p).err().unwrap().to_string();
        assert!(err.contains("radius"), "{err}");
    }

    #[test]
    fn parameter_parsing() {
        let mut p = Params::new();
        p.insert("x".into(), "nan".into());
        assert!(param_f64(&p, "x").is_err());
        assert!(param_f64(&p, "y").is_err());
        assert_eq!(param_f64_or(&p, "y", 2.5).unwrap(), 2.5);
    }
}
