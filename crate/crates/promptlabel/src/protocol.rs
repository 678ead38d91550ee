//! Wire types for the external segmentation and classification adapters:
//! line-delimited JSON with RLE-encoded masks. The full byte-level contract
//! lives in `docs/PROTOCOL.md` and is exported by `export-protocol-docs`.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use promptlabel_core::rle::{self, Rle};
use promptlabel_core::segmenter::{MaskProposal, SegmenterQuery};
use serde::{Deserialize, Serialize};

use crate::error::ProtocolError;

/// The protocol and format documentation shipped with the repo.
pub const PROTOCOL_DOCS: &str = include_str!("../../../docs/PROTOCOL.md");

/// COCO-shaped RLE message: `size` is `[height, width]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMsg {
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl RleMsg {
    pub fn from_rle(rle: &Rle) -> Self {
        Self {
            size: [rle.height, rle.width],
            counts: rle.counts.clone(),
        }
    }

    pub fn to_rle(&self) -> Rle {
        Rle {
            width: self.size[1],
            height: self.size[0],
            counts: self.counts.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub id: u64,
    pub image_id: String,
    pub points_pos: Vec<[u32; 2]>,
    pub points_neg: Vec<[u32; 2]>,
    #[serde(rename = "box")]
    pub bbox: Option<[u32; 4]>,
    pub state: Option<String>,
}

impl SegmentRequest {
    pub fn from_query(id: u64, query: &SegmenterQuery) -> Self {
        Self {
            id,
            image_id: query.image.id.clone(),
            points_pos: query.positives.iter().map(|p| [p.x, p.y]).collect(),
            points_neg: query.negatives.iter().map(|p| [p.x, p.y]).collect(),
            bbox: query.bbox.map(|b| [b.x_min, b.y_min, b.x_max, b.y_max]),
            state: query.prev_state.as_ref().map(|s| BASE64.encode(s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskMsg {
    pub rle: RleMsg,
    pub score: f32,
    pub rank: u8,
    pub state: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub id: u64,
    pub masks: Vec<MaskMsg>,
}

impl SegmentResponse {
    pub fn from_proposals(id: u64, proposals: &[MaskProposal]) -> Self {
        Self {
            id,
            masks: proposals
                .iter()
                .map(|p| MaskMsg {
                    rle: RleMsg::from_rle(&rle::encode(&p.mask)),
                    score: p.score,
                    rank: p.rank,
                    state: p.state.as_ref().map(|s| BASE64.encode(s)),
                })
                .collect(),
        }
    }

    /// Decode into proposals, checking mask dimensions against the image.
    pub fn into_proposals(
        self,
        width: u32,
        height: u32,
    ) -> Result<Vec<MaskProposal>, ProtocolError> {
        let mut out = Vec::with_capacity(self.masks.len());
        for m in self.masks {
            if m.rle.size != [height, width] {
                return Err(ProtocolError::Malformed(format!(
                    "mask size {:?} does not match image [{}, {}]",
                    m.rle.size, height, width
                )));
            }
            let mask = rle::decode(&m.rle.to_rle())
                .map_err(|e| ProtocolError::Malformed(e.to_string()))?;
            let state = match &m.state {
                None => None,
                Some(s) => Some(
                    BASE64
                        .decode(s)
                        .map_err(|e| ProtocolError::Malformed(format!("bad state base64: {e}")))?,
                ),
            };
            out.push(MaskProposal {
                mask,
                score: m.score,
                rank: m.rank,
                state,
                conflict: false,
            });
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub id: u64,
    pub image_id: String,
    pub crop: [u32; 4],
    pub mask: RleMsg,
    pub candidates: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub id: u64,
    pub class: String,
    pub confidence: f32,
}

/// Tight bounding box of a mask as `[xmin, ymin, xmax, ymax]` (exclusive
/// maxima); the whole image when the mask is empty.
pub fn mask_crop(mask: &promptlabel_core::Mask) -> [u32; 4] {
    let (mut x0, mut y0) = (u32::MAX, u32::MAX);
    let (mut x1, mut y1) = (0u32, 0u32);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    if x0 == u32::MAX {
        [0, 0, mask.width(), mask.height()]
    } else {
        [x0, y0, x1, y1]
    }
}
