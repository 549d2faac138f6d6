use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "mixq";

/// Self-describing result of one invocation. Rendered either as one JSON
/// line or as a fixed-width table; both come from this value.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub config_digest: String,
    pub status: Status,
    pub results: serde_json::Value,
    #[serde(skip)]
    pub table: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Ok,
}

impl RunReport {
    pub fn new(
        command: Vec<String>,
        digest: String,
        status: Status,
        results: serde_json::Value,
        table: Vec<String>,
    ) -> Self {
        Self { tool: TOOL, version: env!("CARGO_PKG_VERSION"), command, config_digest: digest, status, results, table }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{} {}  {}\n", self.tool, self.version, self.command.join(" "));
        out.push_str(&format!("config digest  {}\n", self.config_digest));
        for line in &self.table {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// Hash of the resolved configuration and the bytes of every input file.
pub struct ConfigDigest(Sha256);

impl ConfigDigest {
    pub fn new(config: &impl Serialize) -> Self {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(config).expect("config serializes"));
        Self(h)
    }

    pub fn file(mut self, bytes: &[u8]) -> Self {
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
        self
    }

    pub fn finish(self) -> String {
        self.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Left-aligned first column, right-aligned rest.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> Vec<String> {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let fmt = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let head: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    let mut out = vec![fmt(&head), widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  ")];
    out.extend(rows.iter().map(|r| fmt(r)));
    out
}
