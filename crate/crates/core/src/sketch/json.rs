use serde::{Deserialize, Serialize};

use super::constraint::ConstraintSequence;
use super::primitive::{Primitive, Sketch};
use crate::error::Result;

/// `{"primitives":[...],"constraints":[...]}` as exchanged on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchDocument {
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub constraints: ConstraintSequence,
}

impl SketchDocument {
    pub fn new(sketch: &Sketch, constraints: &ConstraintSequence) -> Self {
        Self { primitives: sketch.primitives.clone(), constraints: constraints.clone() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sketch documents always serialize")
    }

    /// Builds the sketch (canvas derived from geometry) and checks its invariants.
    pub fn sketch(&self) -> Result<Sketch> {
        Sketch::new(self.primitives.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_shape() {
        let text = r#"{"primitives":[{"id":0,"kind":"point","params":[0.0,0.0],"fixed":true},
            {"id":1,"kind":"point","params":[3.0,4.0],"fixed":false}],
            "constraints":[{"kind":"distance_dim","refs":[0,1],"value":5.0}]}"#;
        let doc = SketchDocument::from_json(text).unwrap();
        let sketch = doc.sketch().unwrap();
        assert_eq!(sketch.len(), 2);
        assert_eq!(doc.constraints.len(), 1);
        let again = SketchDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn rejects_unanchored() {
        let text = r#"{"primitives":[{"id":0,"kind":"point","params":[0.0,0.0],"fixed":false}]}"#;
        assert!(SketchDocument::from_json(text).unwrap().sketch().is_err());
    }
}
