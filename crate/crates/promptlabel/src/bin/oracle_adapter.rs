//! Reference adapter for the wire protocol, backed by ground-truth label
//! maps. Serves segmentation or classification requests as line-delimited
//! JSON over stdio (default) or a TCP listener. Useful for exercising the
//! external-adapter path end to end and as a template for real model
//! adapters.
//!
//! On a malformed request or an unknown image the adapter logs to stderr
//! and closes the stream, which clients surface as backend_unavailable.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use clap::Parser;

use promptlabel::dataset::load_label_png;
use promptlabel::protocol::{ClassifyRequest, ClassifyResponse, SegmentRequest, SegmentResponse};
use promptlabel::voc::ClassVocabulary;
use promptlabel_core::geom::{BoundingBox, Point};
use promptlabel_core::grid::{MaskClassifier, MockClassifier};
use promptlabel_core::label::LabelMap;
use promptlabel_core::oracle::oracle_predict;
use promptlabel_core::rle;
use promptlabel_core::segmenter::{ImageRef, SegmenterQuery};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Mode {
    Segment,
    Classify,
}

#[derive(Parser)]
#[command(
    name = "promptlabel-oracle-adapter",
    about = "Ground-truth-backed adapter speaking the promptlabel wire protocol"
)]
struct Args {
    /// Directory of ground-truth label PNGs named <image_id>.png.
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long, value_enum, default_value = "segment")]
    mode: Mode,
    /// Listen on a TCP address instead of serving stdio.
    #[arg(long)]
    listen: Option<String>,
    /// Class-list file for classify mode; defaults to the VOC vocabulary.
    #[arg(long)]
    classes: Option<PathBuf>,
}

struct GtStore {
    dir: PathBuf,
    cache: HashMap<String, LabelMap>,
}

impl GtStore {
    fn get(&mut self, id: &str) -> Result<&LabelMap, String> {
        if !self.cache.contains_key(id) {
            let path = self.dir.join(format!("{id}.png"));
            let label = load_label_png(&path).map_err(|e| e.to_string())?;
            self.cache.insert(id.to_string(), label);
        }
        Ok(&self.cache[id])
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let vocab = match &args.classes {
        None => ClassVocabulary::default(),
        Some(path) => match ClassVocabulary::from_file(path) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("oracle-adapter: {e}");
                return ExitCode::from(2);
            }
        },
    };
    let mut store = GtStore {
        dir: args.gt_dir.clone(),
        cache: HashMap::new(),
    };

    let result = match &args.listen {
        None => {
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            serve(stdin, stdout, args.mode, &mut store, &vocab)
        }
        Some(addr) => serve_tcp(addr, args.mode, &mut store, &vocab),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oracle-adapter: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve_tcp(
    addr: &str,
    mode: Mode,
    store: &mut GtStore,
    vocab: &ClassVocabulary,
) -> Result<(), String> {
    let listener = TcpListener::bind(addr).map_err(|e| format!("bind {addr}: {e}"))?;
    // the chosen port goes to stdout so harnesses can bind to :0
    println!(
        "listening {}",
        listener.local_addr().map_err(|e| e.to_string())?
    );
    std::io::stdout().flush().ok();
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| e.to_string())?;
        let reader = BufReader::new(stream.try_clone().map_err(|e| e.to_string())?);
        if let Err(e) = serve(reader, stream, mode, store, vocab) {
            eprintln!("oracle-adapter: connection ended: {e}");
        }
    }
    Ok(())
}

fn serve<R: Read, W: Write>(
    reader: R,
    mut writer: W,
    mode: Mode,
    store: &mut GtStore,
    vocab: &ClassVocabulary,
) -> Result<(), String> {
    let reader = BufReader::new(reader);
    for line in reader.lines() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match mode {
            Mode::Segment => handle_segment(&line, store)?,
            Mode::Classify => handle_classify(&line, store, vocab)?,
        };
        writer
            .write_all(reply.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .and_then(|_| writer.flush())
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn handle_segment(line: &str, store: &mut GtStore) -> Result<String, String> {
    let request: SegmentRequest =
        serde_json::from_str(line).map_err(|e| format!("bad request: {e}"))?;
    let gt = store.get(&request.image_id)?;
    let image = ImageRef {
        id: request.image_id.clone(),
        width: gt.width(),
        height: gt.height(),
    };
    let bbox = match request.bbox {
        None => None,
        Some([x0, y0, x1, y1]) => {
            Some(BoundingBox::new(x0, y0, x1, y1).map_err(|e| e.to_string())?)
        }
    };
    let prev_state = match &request.state {
        None => None,
        Some(s) => Some(BASE64.decode(s).map_err(|e| format!("bad state: {e}"))?),
    };
    let query = SegmenterQuery {
        image,
        positives: request
            .points_pos
            .iter()
            .map(|&[x, y]| Point::new(x, y))
            .collect(),
        negatives: request
            .points_neg
            .iter()
            .map(|&[x, y]| Point::new(x, y))
            .collect(),
        bbox,
        prev_state,
    };
    let proposals = oracle_predict(&query, gt).map_err(|e| e.to_string())?;
    let response = SegmentResponse::from_proposals(request.id, &proposals);
    serde_json::to_string(&response).map_err(|e| e.to_string())
}

fn handle_classify(
    line: &str,
    store: &mut GtStore,
    vocab: &ClassVocabulary,
) -> Result<String, String> {
    let request: ClassifyRequest =
        serde_json::from_str(line).map_err(|e| format!("bad request: {e}"))?;
    let gt = store.get(&request.image_id)?.clone();
    let mask = rle::decode(&request.mask.to_rle()).map_err(|e| e.to_string())?;
    let candidates: Vec<u8> = request
        .candidates
        .iter()
        .map(|name| {
            vocab
                .index_of(name)
                .ok_or_else(|| format!("unknown candidate class '{name}'"))
        })
        .collect::<Result<_, _>>()?;
    let mut classifier = MockClassifier::new();
    classifier.insert(request.image_id.clone(), gt);
    let (class, confidence) = classifier
        .classify(&request.image_id, &mask, &candidates)
        .map_err(|e| e.to_string())?;
    let response = ClassifyResponse {
        id: request.id,
        class: vocab
            .name(class)
            .ok_or_else(|| format!("class {class} has no name"))?
            .to_string(),
        confidence,
    };
    serde_json::to_string(&response).map_err(|e| e.to_string())
}
