use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::Serialize;

use crate::cpn::{Binding, ColorSet, Token};
use crate::format::RobotBody;

/// How a procedure is carried out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ProcedureBody {
    /// A callback of the software library.
    Software { callback: String },
    /// A command script sent to the robot.
    Robot(RobotBody),
    /// A request answered by a human.
    Human,
}

/// Label and color set of one procedure argument or result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Param {
    pub label: String,
    pub colorset: ColorSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnowledgeProcedure {
    pub name: String,
    pub description: String,
    pub inputs: Vec<Param>,
    pub outputs: Vec<Param>,
    pub body: ProcedureBody,
}

/// Signature of software callbacks: inputs by label, then the expected
/// outputs. Returns the output binding or a failure reason.
pub type Callback = Arc<dyn Fn(&Binding, &[Param]) -> Result<Binding, String> + Send + Sync>;

/// Named software callbacks.
#[derive(Clone)]
pub struct SoftwareLibrary {
    callbacks: BTreeMap<String, Callback>,
}

impl fmt::Debug for SoftwareLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.callbacks.keys()).finish()
    }
}

impl Default for SoftwareLibrary {
    /// The library with its builtins.
    fn default() -> Self {
        let mut lib = SoftwareLibrary {
            callbacks: BTreeMap::new(),
        };
        lib.insert("memory_image", Arc::new(memory_image));
        lib
    }
}

impl SoftwareLibrary {
    pub fn insert(&mut self, name: &str, callback: Callback) {
        self.callbacks.insert(name.to_string(), callback);
    }

    pub fn get(&self, name: &str) -> Option<&Callback> {
        self.callbacks.get(name)
    }
}

/// Builtin: every output is `im(<x>)` where `x` is the scalar of the first
/// input.
fn memory_image(inputs: &Binding, outputs: &[Param]) -> Result<Binding, String> {
    let (_, first) = inputs.iter().next().ok_or("memory_image needs an input")?;
    let text = format!("im({})", first.scalar());
    Ok(outputs
        .iter()
        .map(|o| (o.label.clone(), Token::new(o.colorset.name.clone(), o.colorset.value_from_scalar(&text))))
        .collect())
}

static VAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\$([A-Za-z_][A-Za-z0-9_]*)").expect("valid regex"));

/// Replaces `$name` with `vars[name]`. Unknown names are an error.
pub fn substitute(template: &str, vars: &BTreeMap<String, String>) -> Result<String, String> {
    let mut missing = None;
    let out = VAR.replace_all(template, |c: &regex::Captures| match vars.get(&c[1]) {
        Some(v) => v.clone(),
        None => {
            missing.get_or_insert_with(|| c[1].to_string());
            String::new()
        }
    });
    match missing {
        Some(m) => Err(format!("unknown variable `${m}` in `{template}`")),
        None => Ok(out.into_owned()),
    }
}

/// Input scalars by label, as script variables.
pub fn script_vars(inputs: &Binding) -> BTreeMap<String, String> {
    inputs.iter().map(|(k, v)| (k.to_string(), v.scalar())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpn::{TokenValue, ValueKind};

    #[test]
    fn memory_image_wraps_the_program() {
        let inputs: Binding = [("Pg", Token::new("Pg", TokenValue::id("pg1")))].into_iter().collect();
        let outputs = [Param {
            label: "I".into(),
            colorset: ColorSet::record("I", &[("id", ValueKind::Text)]),
        }];
        let out = memory_image(&inputs, &outputs).unwrap();
        assert_eq!(out.get("I").unwrap().scalar(), "im(pg1)");
    }

    #[test]
    fn substitution() {
        let vars = BTreeMap::from([("I".to_string(), "im(pg1)".to_string())]);
        assert_eq!(substitute("LOAD_IMAGE $I", &vars).unwrap(), "LOAD_IMAGE im(pg1)");
        assert_eq!(substitute("MANUFACTURE", &vars).unwrap(), "MANUFACTURE");
        assert!(substitute("FEED $Rm", &vars).unwrap_err().contains("$Rm"));
    }
}
