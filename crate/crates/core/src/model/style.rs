use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StyleError {
    #[error("unknown style `{0}`")]
    StyleUnknown(String),
    #[error("style weights sum to zero")]
    AllZeroWeights,
    #[error("style weights must be finite and non-negative")]
    NegativeWeight,
    #[error("style weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("style has {got} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed style spec `{0}`")]
    Malformed(String),
    #[error("duplicate composer `{0}`")]
    DuplicateComposer(String),
}

/// Mixture over composers: non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleVector(Vec<f64>);

impl StyleVector {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(weights: Vec<f64>) -> Result<Self, StyleError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(StyleError::NegativeWeight);
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(StyleError::NotNormalized(sum));
        }
        Ok(Self(weights))
    }

    /// Scales non-negative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self, StyleError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(StyleError::NegativeWeight);
        }
        let sum: f64 = weights.iter().sum();
        if sum == 0.0 {
            return Err(StyleError::AllZeroWeights);
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn one_hot(styles: usize, index: usize) -> Self {
        let mut w = vec![0.0; styles];
        w[index] = 1.0;
        Self(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composer {
    pub name: String,
    pub genre: String,
}

/// Ordered composer list; composer `k` is style dimension `k`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StyleCatalog {
    composers: Vec<Composer>,
}

impl StyleCatalog {
    pub fn new(composers: Vec<Composer>) -> Result<Self, StyleError> {
        for (i, c) in composers.iter().enumerate() {
            if composers[..i].iter().any(|o| o.name == c.name) {
                return Err(StyleError::DuplicateComposer(c.name.clone()));
            }
        }
        Ok(Self { composers })
    }

    pub fn composers(&self) -> &[Composer] {
        &self.composers
    }

    pub fn len(&self) -> usize {
        self.composers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.composers.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.composers.iter().position(|c| c.name == name)
    }

    /// Genres in first-appearance order with their composer indices.
    pub fn genres(&self) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<String> = Vec::new();
        let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.composers.iter().enumerate() {
            if !members.contains_key(&c.genre) {
                order.push(c.genre.clone());
            }
            members.entry(c.genre.clone()).or_default().push(i);
        }
        order
            .into_iter()
            .map(|g| {
                let m = members.remove(&g).unwrap_or_default();
                (g, m)
            })
            .collect()
    }

    pub fn genre_members(&self, genre: &str) -> Option<Vec<usize>> {
        let members: Vec<usize> = self
            .composers
            .iter()
            .enumerate()
            .filter(|(_, c)| c.genre == genre)
            .map(|(i, _)| i)
            .collect();
        (!members.is_empty()).then_some(members)
    }

    /// Equal weights over the composers of `genre`.
    pub fn genre_style(&self, genre: &str) -> Result<StyleVector, StyleError> {
        let members = self
            .genre_members(genre)
            .ok_or_else(|| StyleError::StyleUnknown(genre.to_string()))?;
        let mut w = vec![0.0; self.len()];
        for &m in &members {
            w[m] = 1.0;
        }
        StyleVector::normalized(w)
    }
}
