use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamShape {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        ParamShape {
            name: name.into(),
            shape,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flat parameter store with a named layout.
///
/// Values are kept finite: every public write path rejects NaN and infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<ParamShape>,
}

impl ParamVector {
    pub fn zeros(layout: Vec<ParamShape>) -> Self {
        let n = layout.iter().map(ParamShape::numel).sum();
        ParamVector {
            values: vec![0.0; n],
            layout,
        }
    }

    pub fn from_values(layout: Vec<ParamShape>, values: Vec<f64>) -> Result<Self> {
        let n: usize = layout.iter().map(ParamShape::numel).sum();
        if n != values.len() {
            return Err(Error::Shape {
                expected: n,
                actual: values.len(),
            });
        }
        let mut p = ParamVector::zeros(layout);
        p.set_values(&values)?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &[ParamShape] {
        &self.layout
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.layout == other.layout
    }

    /// Name of the layout entry holding flat index `i`.
    fn name_at(&self, mut i: usize) -> &str {
        for entry in &self.layout {
            if i < entry.numel() {
                return &entry.name;
            }
            i -= entry.numel();
        }
        "<out of range>"
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::Shape {
                expected: self.values.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.name_at(i).to_string()));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    /// Applies `f` to the raw buffer and re-checks finiteness. On failure the
    /// previous values are restored.
    pub fn update<F: FnOnce(&mut [f64])>(&mut self, f: F) -> Result<()> {
        let backup = self.values.clone();
        f(&mut self.values);
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            let name = self.name_at(i).to_string();
            self.values = backup;
            return Err(Error::NonFinite(name));
        }
        Ok(())
    }

    pub(crate) fn values_mut_unchecked(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Joins several vectors into one, prefixing entry names with `section/`.
    pub fn concat(sections: &[(&str, &ParamVector)]) -> ParamVector {
        let mut layout = Vec::new();
        let mut values = Vec::new();
        for (prefix, p) in sections {
            for entry in &p.layout {
                layout.push(ParamShape::new(format!("{prefix}/{}", entry.name), entry.shape.clone()));
            }
            values.extend_from_slice(&p.values);
        }
        ParamVector { values, layout }
    }

    /// Appends `other` with its entry names prefixed by `prefix/`.
    pub fn with_section(mut self, prefix: &str, other: &ParamVector) -> ParamVector {
        for entry in &other.layout {
            self.layout
                .push(ParamShape::new(format!("{prefix}/{}", entry.name), entry.shape.clone()));
        }
        self.values.extend_from_slice(&other.values);
        self
    }

    /// Extracts the entries written under `prefix/` by [`ParamVector::concat`].
    pub fn section(&self, prefix: &str) -> Option<ParamVector> {
        let tag = format!("{prefix}/");
        let mut layout = Vec::new();
        let mut values = Vec::new();
        let mut offset = 0;
        for entry in &self.layout {
            let n = entry.numel();
            if let Some(rest) = entry.name.strip_prefix(&tag) {
                layout.push(ParamShape::new(rest, entry.shape.clone()));
                values.extend_from_slice(&self.values[offset..offset + n]);
            }
            offset += n;
        }
        if layout.is_empty() {
            None
        } else {
            Some(ParamVector { values, layout })
        }
    }
}
