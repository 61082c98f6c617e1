//! Point and centerline file formats.

use serde::Deserialize;

use crate::Vec3;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("malformed JSON points: {0}")]
    Json(#[from] serde_json::Error),
    #[error("point {0} is not finite")]
    NonFinite(usize),
    #[error("no points")]
    Empty,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonPoint {
    Array([f64; 3]),
    Object { x: f64, y: f64, z: f64 },
}

/// Ordered 3D points from CSV (`x,y,z`, header optional) or a JSON array
/// of `[x, y, z]` triples or `{x, y, z}` objects.
pub fn parse_points(text: &str) -> Result<Vec<Vec3>, IoError> {
    let trimmed = text.trim_start_matches('\u{feff}').trim();
    let pts = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Doc {
            List(Vec<JsonPoint>),
            Wrapped { points: Vec<JsonPoint> },
        }
        let list = match serde_json::from_str::<Doc>(trimmed)? {
            Doc::List(l) | Doc::Wrapped { points: l } => l,
        };
        list.into_iter()
            .map(|p| match p {
                JsonPoint::Array([x, y, z]) | JsonPoint::Object { x, y, z } => Vec3::new(x, y, z),
            })
            .collect()
    } else {
        parse_csv(trimmed)?
    };
    if pts.is_empty() {
        return Err(IoError::Empty);
    }
    if let Some(i) = pts.iter().position(|p: &Vec3| !p.is_finite()) {
        return Err(IoError::NonFinite(i));
    }
    Ok(pts)
}

fn parse_csv(text: &str) -> Result<Vec<Vec3>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IoError::Csv { line: k + 1, message: e.to_string() })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(IoError::Csv { line, message: format!("expected 3 columns x,y,z, found {}", rec.len()) });
        }
        let vals: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) => out.push(Vec3::new(v[0], v[1], v[2])),
            Err(_) if k == 0 && rec.iter().map(|s| s.to_ascii_lowercase()).eq(["x", "y", "z"]) => {}
            Err(e) => return Err(IoError::Csv { line, message: e.to_string() }),
        }
    }
    Ok(out)
}

/// CSV with header `x,y,z`, LF line endings, shortest round-trip decimals.
pub fn points_csv(points: &[Vec3]) -> String {
    let mut s = String::from("x,y,z\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
    }
    s
}
