//! Clients for out-of-process segmentation and classification adapters.
//!
//! An endpoint is `stdio:<command and args>` (child process, line-delimited
//! JSON on stdin/stdout) or `tcp:<host>:<port>` (same framing over a
//! socket). Requests are serialized per connection behind a mutex, matching
//! the protocol's one-request-one-response ordering.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use promptlabel_core::grid::{ClassifierError, MaskClassifier};
use promptlabel_core::label::ClassId;
use promptlabel_core::segmenter::{MaskProposal, Segmenter, SegmenterError, SegmenterQuery};
use promptlabel_core::Mask;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::ProtocolError;
use crate::protocol::{
    mask_crop, ClassifyRequest, ClassifyResponse, RleMsg, SegmentRequest, SegmentResponse,
};
use crate::voc::ClassVocabulary;

enum Transport {
    Child {
        child: Child,
        stdin: ChildStdin,
        stdout: BufReader<ChildStdout>,
    },
    Tcp {
        writer: TcpStream,
        reader: BufReader<TcpStream>,
    },
}

impl Drop for Transport {
    fn drop(&mut self) {
        if let Transport::Child { child, .. } = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

pub struct AdapterConnection {
    transport: Transport,
    endpoint: String,
}

impl AdapterConnection {
    pub fn connect(endpoint: &str) -> Result<Self, ProtocolError> {
        let transport = if let Some(cmdline) = endpoint.strip_prefix("stdio:") {
            let parts: Vec<&str> = cmdline.split_whitespace().collect();
            let (program, args) = parts.split_first().ok_or_else(|| ProtocolError::Connect {
                endpoint: endpoint.to_string(),
                message: "empty stdio command".into(),
            })?;
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .spawn()
                .map_err(|e| ProtocolError::Connect {
                    endpoint: endpoint.to_string(),
                    message: e.to_string(),
                })?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
            Transport::Child {
                child,
                stdin,
                stdout,
            }
        } else if let Some(addr) = endpoint.strip_prefix("tcp:") {
            let stream = TcpStream::connect(addr).map_err(|e| ProtocolError::Connect {
                endpoint: endpoint.to_string(),
                message: e.to_string(),
            })?;
            let reader = BufReader::new(stream.try_clone().map_err(ProtocolError::Io)?);
            Transport::Tcp {
                writer: stream,
                reader,
            }
        } else {
            return Err(ProtocolError::Connect {
                endpoint: endpoint.to_string(),
                message: "endpoint must start with 'stdio:' or 'tcp:'".into(),
            });
        };
        Ok(Self {
            transport,
            endpoint: endpoint.to_string(),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn round_trip<Req: Serialize, Resp: DeserializeOwned>(
        &mut self,
        request: &Req,
    ) -> Result<Resp, ProtocolError> {
        let mut line =
            serde_json::to_string(request).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        line.push('\n');
        let mut reply = String::new();
        match &mut self.transport {
            Transport::Child { stdin, stdout, .. } => {
                stdin.write_all(line.as_bytes())?;
                stdin.flush()?;
                stdout.read_line(&mut reply)?;
            }
            Transport::Tcp { writer, reader } => {
                writer.write_all(line.as_bytes())?;
                writer.flush()?;
                reader.read_line(&mut reply)?;
            }
        }
        if reply.is_empty() {
            return Err(ProtocolError::Closed);
        }
        serde_json::from_str(&reply).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }
}

/// A promptable segmenter reached over the adapter protocol.
pub struct ExternalSegmenter {
    connection: Mutex<AdapterConnection>,
    next_id: AtomicU64,
}

impl ExternalSegmenter {
    pub fn connect(endpoint: &str) -> Result<Self, ProtocolError> {
        Ok(Self {
            connection: Mutex::new(AdapterConnection::connect(endpoint)?),
            next_id: AtomicU64::new(1),
        })
    }
}

impl Segmenter for ExternalSegmenter {
    fn predict(&self, query: &SegmenterQuery) -> Result<Vec<MaskProposal>, SegmenterError> {
        query.validate()?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let request = SegmentRequest::from_query(id, query);
        let mut conn = self
            .connection
            .lock()
            .map_err(|_| SegmenterError::BackendUnavailable("adapter mutex poisoned".into()))?;
        let response: SegmentResponse = conn.round_trip(&request).map_err(|e| match e {
            ProtocolError::Malformed(m) => SegmenterError::MalformedResponse(m),
            other => SegmenterError::BackendUnavailable(other.to_string()),
        })?;
        if response.id != id {
            return Err(SegmenterError::MalformedResponse(format!(
                "response id {} for request {}",
                response.id, id
            )));
        }
        response
            .into_proposals(query.image.width, query.image.height)
            .map_err(|e| SegmenterError::MalformedResponse(e.to_string()))
    }
}

/// A mask classifier reached over the adapter protocol. Class names on the
/// wire resolve through the active vocabulary.
pub struct ExternalClassifier {
    connection: Mutex<AdapterConnection>,
    next_id: AtomicU64,
    vocab: ClassVocabulary,
}

impl ExternalClassifier {
    pub fn connect(endpoint: &str, vocab: ClassVocabulary) -> Result<Self, ProtocolError> {
        Ok(Self {
            connection: Mutex::new(AdapterConnection::connect(endpoint)?),
            next_id: AtomicU64::new(1),
            vocab,
        })
    }
}

impl MaskClassifier for ExternalClassifier {
    fn classify(
        &self,
        image_id: &str,
        mask: &Mask,
        candidates: &[ClassId],
    ) -> Result<(ClassId, f32), ClassifierError> {
        if candidates.is_empty() || !candidates.contains(&0) {
            return Err(ClassifierError::InvalidCandidates);
        }
        let names: Vec<String> = candidates
            .iter()
            .map(|&c| {
                self.vocab
                    .name(c)
                    .map(|s| s.to_string())
                    .ok_or(ClassifierError::OutOfCandidates(c))
            })
            .collect::<Result<_, _>>()?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let request = ClassifyRequest {
            id,
            image_id: image_id.to_string(),
            crop: mask_crop(mask),
            mask: RleMsg::from_rle(&promptlabel_core::rle::encode(mask)),
            candidates: names,
        };
        let mut conn = self
            .connection
            .lock()
            .map_err(|_| ClassifierError::Unavailable("adapter mutex poisoned".into()))?;
        let response: ClassifyResponse = conn
            .round_trip(&request)
            .map_err(|e| ClassifierError::Unavailable(e.to_string()))?;
        if response.id != id {
            return Err(ClassifierError::Unavailable(format!(
                "response id {} for request {}",
                response.id, id
            )));
        }
        let class = self
            .vocab
            .index_of(&response.class)
            .ok_or(ClassifierError::InvalidCandidates)?;
        if !candidates.contains(&class) {
            return Err(ClassifierError::OutOfCandidates(class));
        }
        Ok((class, response.confidence))
    }
}

/// Where the pipeline gets its segmenter: the in-process GT oracle or an
/// external adapter endpoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    Oracle,
    DegradedOracle { max_dilation: u32 },
    External(String),
}

impl BackendSpec {
    /// `oracle`, `degraded-oracle[:k]`, or `external:<endpoint>`.
    pub fn parse(s: &str) -> Result<Self, String> {
        if s == "oracle" {
            return Ok(BackendSpec::Oracle);
        }
        if s == "degraded-oracle" {
            return Ok(BackendSpec::DegradedOracle { max_dilation: 3 });
        }
        if let Some(k) = s.strip_prefix("degraded-oracle:") {
            let max_dilation = k
                .parse()
                .map_err(|_| format!("bad degraded-oracle dilation '{k}'"))?;
            return Ok(BackendSpec::DegradedOracle { max_dilation });
        }
        if let Some(endpoint) = s.strip_prefix("external:") {
            return Ok(BackendSpec::External(endpoint.to_string()));
        }
        Err(format!(
            "backend must be oracle, degraded-oracle[:k], or external:<endpoint>, got '{s}'"
        ))
    }
}

/// Classifier source for the grid pipeline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClassifierSpec {
    Mock,
    External(String),
}

impl ClassifierSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s == "mock" {
            return Ok(ClassifierSpec::Mock);
        }
        if let Some(endpoint) = s.strip_prefix("external:") {
            return Ok(ClassifierSpec::External(endpoint.to_string()));
        }
        Err(format!(
            "classifier must be mock or external:<endpoint>, got '{s}'"
        ))
    }
}
