//! Config resolution: JSON config files merged over command defaults,
//! with flat dotted keys ("optim.lr") or nested objects, then CLI flags
//! on top. Every key must name a real field of the default document, so
//! typos fail loudly instead of silently keeping a default.

use serde_json::Value;

/// Merges an override document onto a fully-populated base document.
/// Object values recurse; dotted keys address nested fields directly.
pub fn merge_overrides(base: &mut Value, patch: &Value) -> Result<(), String> {
    let obj = patch
        .as_object()
        .ok_or_else(|| "config document must be a JSON object".to_string())?;
    for (key, val) in obj {
        apply_path(base, key, val)?;
    }
    Ok(())
}

fn apply_path(base: &mut Value, dotted: &str, val: &Value) -> Result<(), String> {
    let mut target = base;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = target
            .as_object_mut()
            .ok_or_else(|| format!("config key `{dotted}`: `{}` is not an object", parts[..i].join(".")))?;
        let slot = map
            .get_mut(*part)
            .ok_or_else(|| format!("unknown config key `{dotted}`"))?;
        if i + 1 == parts.len() {
            if let (Some(old), Some(new)) = (slot.as_object_mut(), val.as_object()) {
                // Partial nested override: keep unmentioned fields.
                let mut nested = Value::Object(std::mem::take(old));
                for (k, v) in new {
                    apply_path(&mut nested, k, v)?;
                }
                *slot = nested;
            } else {
                *slot = val.clone();
            }
            return Ok(());
        }
        target = slot;
    }
    unreachable!("split produces at least one part");
}
