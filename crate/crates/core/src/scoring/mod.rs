//! Image/text score matrices and the algebra applied to them before a region
//! or label is selected.

mod caption;
mod hungarian;
mod relations;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::math;

pub use caption::{parse_caption, ParsedCaption, Relation};
pub use hungarian::{assignment_value, hungarian_assign};
pub use relations::{
    absolute_relation_holds, apply_relations, median_area, relation_holds, RelationAggregation,
};

/// Dense `rows x cols` matrix of finite scores: rows are proposals, columns
/// are texts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: (rows, cols),
                found: (values.len(), 1),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("scores must be finite"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidParameter("ragged score rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds an `n x 1` matrix from one column.
    pub fn from_column(column: &[f64]) -> Result<Self> {
        Self::new(column.len(), 1, column.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> ScoreMatrix {
        let mut t = ScoreMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Columns `range` as a new matrix.
    pub fn columns(&self, range: core::ops::Range<usize>) -> ScoreMatrix {
        let cols = range.len();
        let mut out = ScoreMatrix::zeros(self.rows, cols);
        for r in 0..self.rows {
            for (k, c) in range.clone().enumerate() {
                out.set(r, k, self.get(r, c));
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScoreMatrix {
        ScoreMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_shape(&self, other: &ScoreMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }
}

/// A model that embeds images and texts into a shared space of unit vectors.
pub trait ScorerBackend {
    type Error;

    fn embed_image(&self, image: &ImageBuffer) -> core::result::Result<Vec<f32>, Self::Error>;

    fn embed_text(&self, text: &str) -> core::result::Result<Vec<f32>, Self::Error>;
}

impl<S: ScorerBackend + ?Sized> ScorerBackend for &S {
    type Error = S::Error;

    fn embed_image(&self, image: &ImageBuffer) -> core::result::Result<Vec<f32>, Self::Error> {
        (**self).embed_image(image)
    }

    fn embed_text(&self, text: &str) -> core::result::Result<Vec<f32>, Self::Error> {
        (**self).embed_text(text)
    }
}

/// Which input an embedding failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedInput {
    Image(usize),
    Text(usize),
}

impl fmt::Display for EmbedInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedInput::Image(i) => write!(f, "image {i}"),
            EmbedInput::Text(i) => write!(f, "text {i}"),
        }
    }
}

#[derive(Debug)]
pub enum ScoringError<E> {
    Backend { input: EmbedInput, source: E },
    InvalidEmbedding { input: EmbedInput, reason: &'static str },
    Input(Error),
}

impl<E: fmt::Display> fmt::Display for ScoringError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoringError::Backend { input, source } => write!(f, "embedding {input} failed: {source}"),
            ScoringError::InvalidEmbedding { input, reason } => {
                write!(f, "invalid embedding for {input}: {reason}")
            }
            ScoringError::Input(e) => write!(f, "{e}"),
        }
    }
}

impl<E: fmt::Debug + fmt::Display> core::error::Error for ScoringError<E> {}

impl<E> From<Error> for ScoringError<E> {
    fn from(e: Error) -> Self {
        ScoringError::Input(e)
    }
}

/// Tolerance on the L2 norm of backend embeddings.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-3;

/// Texts to score against, each prefixed with `template` before embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionSet {
    texts: Vec<String>,
    template: String,
}

impl CaptionSet {
    pub fn new<I, S>(texts: I, template: &str) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let texts: Vec<String> = texts.into_iter().map(|t| t.as_ref().trim().to_string()).collect();
        if texts.is_empty() {
            return Err(Error::EmptyInput("caption set"));
        }
        if texts.iter().any(String::is_empty) {
            return Err(Error::EmptyInput("caption text"));
        }
        Ok(Self {
            texts,
            template: template.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// Template-prefixed text actually sent to the embedder.
    pub fn prompt(&self, i: usize) -> String {
        let mut s = self.template.clone();
        s.push_str(&self.texts[i]);
        s
    }
}

fn check_embedding<E>(v: &[f32], dim: Option<usize>, input: EmbedInput) -> core::result::Result<(), ScoringError<E>> {
    if v.is_empty() {
        return Err(ScoringError::InvalidEmbedding {
            input,
            reason: "empty vector",
        });
    }
    if dim.is_some_and(|d| d != v.len()) {
        return Err(ScoringError::InvalidEmbedding {
            input,
            reason: "dimension differs from earlier embeddings",
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ScoringError::InvalidEmbedding {
            input,
            reason: "non-finite component",
        });
    }
    let norm = math::sqrt(v.iter().map(|&x| x as f64 * x as f64).sum());
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(ScoringError::InvalidEmbedding {
            input,
            reason: "not unit length",
        });
    }
    Ok(())
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Cosine similarities between every prompted image and every caption.
/// Identical images and identical texts are embedded once.
pub fn similarity_matrix<S: ScorerBackend>(
    backend: &S,
    images: &[ImageBuffer],
    captions: &CaptionSet,
) -> core::result::Result<ScoreMatrix, ScoringError<S::Error>> {
    if images.is_empty() {
        return Err(Error::EmptyInput("prompted images").into());
    }
    let mut dim = None;

    let mut image_slot: BTreeMap<&ImageBuffer, usize> = BTreeMap::new();
    let mut image_vecs: Vec<Vec<f32>> = Vec::new();
    let mut image_index = Vec::with_capacity(images.len());
    for (n, img) in images.iter().enumerate() {
        let slot = match image_slot.get(img) {
            Some(&s) => s,
            None => {
                let input = EmbedInput::Image(n);
                let v = backend
                    .embed_image(img)
                    .map_err(|source| ScoringError::Backend { input, source })?;
                check_embedding(&v, dim, input)?;
                dim = Some(v.len());
                image_vecs.push(v);
                image_slot.insert(img, image_vecs.len() - 1);
                image_vecs.len() - 1
            }
        };
        image_index.push(slot);
    }

    let mut text_slot: BTreeMap<String, usize> = BTreeMap::new();
    let mut text_vecs: Vec<Vec<f32>> = Vec::new();
    let mut text_index = Vec::with_capacity(captions.len());
    for m in 0..captions.len() {
        let prompt = captions.prompt(m);
        let slot = match text_slot.get(&prompt) {
            Some(&s) => s,
            None => {
                let input = EmbedInput::Text(m);
                let v = backend
                    .embed_text(&prompt)
                    .map_err(|source| ScoringError::Backend { input, source })?;
                check_embedding(&v, dim, input)?;
                dim = Some(v.len());
                text_vecs.push(v);
                text_slot.insert(prompt, text_vecs.len() - 1);
                text_vecs.len() - 1
            }
        };
        text_index.push(slot);
    }

    let mut s = ScoreMatrix::zeros(images.len(), captions.len());
    for (n, &i) in image_index.iter().enumerate() {
        for (m, &t) in text_index.iter().enumerate() {
            s.set(n, m, dot(&image_vecs[i], &text_vecs[t]));
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnsembleMode {
    #[default]
    Mean,
    /// Per-text softmax over proposals (temperature 1), then the mean.
    SoftmaxMean,
}

impl EnsembleMode {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleMode::Mean => "mean",
            EnsembleMode::SoftmaxMean => "softmax_mean",
        }
    }
}

fn column_softmax(s: &ScoreMatrix) -> ScoreMatrix {
    let mut out = s.clone();
    for c in 0..s.cols() {
        let col = s.column(c);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = col.iter().map(|&v| math::exp(v - max)).collect();
        let sum: f64 = exps.iter().sum();
        for (r, e) in exps.iter().enumerate() {
            out.set(r, c, e / sum);
        }
    }
    out
}

/// Combines the score matrices of several prompt kinds elementwise.
pub fn ensemble_scores(matrices: &[ScoreMatrix], mode: EnsembleMode) -> Result<ScoreMatrix> {
    let first = matrices.first().ok_or(Error::EmptyInput("score matrices"))?;
    for m in &matrices[1..] {
        first.check_shape(m)?;
    }
    if matrices.len() == 1 && mode == EnsembleMode::Mean {
        return Ok(first.clone());
    }
    let transformed: Vec<ScoreMatrix> = match mode {
        EnsembleMode::Mean => matrices.to_vec(),
        EnsembleMode::SoftmaxMean => matrices.iter().map(column_softmax).collect(),
    };
    let k = transformed.len() as f64;
    let mut out = ScoreMatrix::zeros(first.rows(), first.cols());
    for (i, v) in out.values.iter_mut().enumerate() {
        *v = transformed.iter().map(|m| m.values[i]).sum::<f64>() / k;
    }
    Ok(out)
}

/// Negative captions and their `N x Q` scores against the same proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSet {
    pub texts: Vec<String>,
    pub scores: ScoreMatrix,
}

impl NegativeSet {
    pub fn empty(rows: usize) -> Self {
        Self {
            texts: Vec::new(),
            scores: ScoreMatrix::zeros(rows, 0),
        }
    }

    pub fn q(&self) -> usize {
        self.scores.cols()
    }
}

/// Penalizes every proposal by its mean score over the negative captions.
pub fn subtract_negatives(s: &ScoreMatrix, neg: &NegativeSet) -> Result<ScoreMatrix> {
    let q = neg.q();
    if q == 0 {
        return Ok(s.clone());
    }
    if neg.scores.rows() != s.rows() {
        return Err(Error::ShapeMismatch {
            expected: (s.rows(), q),
            found: neg.scores.shape(),
        });
    }
    let mut out = s.clone();
    for n in 0..s.rows() {
        let penalty = neg.scores.row(n).iter().sum::<f64>() / q as f64;
        for m in 0..s.cols() {
            out.set(n, m, s.get(n, m) - penalty);
        }
    }
    Ok(out)
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Best proposal for each text; ties go to the lowest index.
pub fn select_region(s: &ScoreMatrix) -> Result<Vec<usize>> {
    if s.rows() == 0 {
        return Err(Error::EmptyInput("proposals"));
    }
    Ok((0..s.cols())
        .map(|c| argmax((0..s.rows()).map(|r| s.get(r, c))).expect("rows >= 1"))
        .collect())
}

/// Best text for each proposal; ties go to the lowest index.
pub fn select_labels(s: &ScoreMatrix) -> Result<Vec<usize>> {
    if s.cols() == 0 {
        return Err(Error::EmptyInput("texts"));
    }
    Ok((0..s.rows())
        .map(|r| argmax(s.row(r).iter().copied()).expect("cols >= 1"))
        .collect())
}
