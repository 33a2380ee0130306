//! JSON shapes shared by the model server protocol, geometry files and
//! reports.

use fgvp_core::rle::{self, Rle};
use fgvp_core::{Bbox, BinaryMask};
use serde::{Deserialize, Serialize};

pub const EMBED_IMAGE: &str = "/v1/embed_image";
pub const EMBED_TEXT: &str = "/v1/embed_text";
pub const SEGMENT: &str = "/v1/segment";
pub const HEALTH: &str = "/v1/health";

/// Uncompressed COCO-style RLE: column-major runs starting with zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleJson {
    pub size: [usize; 2],
    pub counts: Vec<u32>,
}

impl RleJson {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let r = rle::encode(mask);
        Self {
            size: [r.height, r.width],
            counts: r.counts,
        }
    }

    pub fn to_mask(&self) -> fgvp_core::Result<BinaryMask> {
        rle::decode(&Rle {
            height: self.size[0],
            width: self.size[1],
            counts: self.counts.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedImageRequest {
    pub image_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedTextRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embedding: Vec<f32>,
    pub dim: usize,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image_png_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMask {
    #[serde(flatten)]
    pub rle: RleJson,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<WireMask>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTags {
    pub scorer: String,
    pub segmenter: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub ok: bool,
    pub models: ModelTags,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// `[x, y, w, h]` array form used in every JSON file.
pub mod bbox_array {
    use super::*;
    use serde::{de::Error, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Bbox, s: S) -> Result<S::Ok, S::Error> {
        b.to_array().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Bbox, D::Error> {
        let a = <[f64; 4]>::deserialize(d)?;
        Bbox::from_array(a).map_err(D::Error::custom)
    }
}

pub mod bbox_vec {
    use super::*;
    use serde::{de::Error, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Bbox], s: S) -> Result<S::Ok, S::Error> {
        let arrays: Vec<[f64; 4]> = v.iter().map(|b| b.to_array()).collect();
        arrays.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Bbox>, D::Error> {
        let arrays = Vec::<[f64; 4]>::deserialize(d)?;
        arrays
            .into_iter()
            .enumerate()
            .map(|(i, a)| Bbox::from_array(a).map_err(|e| D::Error::custom(format!("box {i}: {e}"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_json_shape() {
        let mut m = BinaryMask::new(2, 3);
        m.set(1, 0, true);
        m.set(1, 1, true);
        let j = RleJson::from_mask(&m);
        assert_eq!(serde_json::to_string(&j).unwrap(), r#"{"size":[2,3],"counts":[2,2,2]}"#);
        assert_eq!(j.to_mask().unwrap(), m);
    }

    #[test]
    fn segment_request_omits_absent_queries() {
        let req = SegmentRequest {
            image_png_b64: "x".into(),
            boxes: None,
            points: Some(vec![[1.0, 2.0]]),
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"image_png_b64":"x","points":[[1.0,2.0]]}"#
        );
    }

    #[test]
    fn wire_mask_is_flat() {
        let s = r#"{"masks":[{"size":[1,2],"counts":[0,2],"quality":0.5}]}"#;
        let r: SegmentResponse = serde_json::from_str(s).unwrap();
        assert_eq!(r.masks[0].rle.counts, vec![0, 2]);
        assert_eq!(serde_json::to_string(&r).unwrap(), s);
    }

    #[test]
    fn f32_embeddings_roundtrip_exactly() {
        let v: Vec<f32> = (1..50).map(|i| (i as f32).sqrt() / 7.3).collect();
        let r = EmbedResponse { embedding: v.clone(), dim: v.len(), model: "m".into() };
        let back: EmbedResponse = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back.embedding.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
}
